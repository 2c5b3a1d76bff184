//! Slow reference implementations of the information measures, written as
//! direct sums over the full probability table.
//!
//! These deliberately share no code with the main paths in [`crate::prob`]:
//! they resolve variables, walk the table, and group probabilities on their
//! own, so the test suites can cross-check the fast implementations against
//! an independent route.

use crate::prob::JointPmf;

fn positions(joint: &JointPmf, names: &[&str]) -> Vec<usize> {
    names
        .iter()
        .map(|&n| {
            joint
                .variables()
                .iter()
                .position(|v| v.name == n)
                .unwrap_or_else(|| panic!("oracle: unknown variable `{n}`"))
        })
        .collect()
}

/// Digits of `index` in the joint's mixed-radix system (first variable most
/// significant), recomputed per cell by division.
fn digits_of(joint: &JointPmf, mut index: usize) -> Vec<usize> {
    let mut out = vec![0usize; joint.variables().len()];
    for (d, v) in out.iter_mut().zip(joint.variables()).rev() {
        *d = index % v.size;
        index /= v.size;
    }
    out
}

fn group_index(joint: &JointPmf, digits: &[usize], group: &[usize]) -> usize {
    let mut idx = 0usize;
    for &p in group {
        idx = idx * joint.variables()[p].size + digits[p];
    }
    idx
}

fn group_len(joint: &JointPmf, group: &[usize]) -> usize {
    group.iter().map(|&p| joint.variables()[p].size).product::<usize>().max(1)
}

/// Conditional entropy H(targets | given) in bits by direct summation:
/// -sum p(t,g) log2 p(t,g)/p(g).
pub fn entropy(joint: &JointPmf, targets: &[&str], given: &[&str]) -> f64 {
    let tg: Vec<usize> = {
        let mut v = positions(joint, targets);
        v.extend(positions(joint, given));
        v
    };
    let g = positions(joint, given);
    let mut p_tg = vec![0.0f64; group_len(joint, &tg)];
    let mut p_g = vec![0.0f64; group_len(joint, &g)];
    for (i, &p) in joint.probs().iter().enumerate() {
        let d = digits_of(joint, i);
        p_tg[group_index(joint, &d, &tg)] += p;
        p_g[group_index(joint, &d, &g)] += p;
    }
    // `given` variables occupy the least-significant digits of the
    // (targets..., given...) group index.
    let mut h = 0.0f64;
    for (i, &ptg) in p_tg.iter().enumerate() {
        if ptg > 0.0 {
            let pg = p_g[i % p_g.len()];
            h -= ptg * (ptg / pg).log2();
        }
    }
    h
}

/// Conditional mutual information I(a ; b | c) in bits by the direct
/// log-ratio sum: sum p(abc) log2 [ p(abc) p(c) / (p(ac) p(bc)) ].
pub fn mutual_information(joint: &JointPmf, a: &[&str], b: &[&str], c: &[&str]) -> f64 {
    let pa = positions(joint, a);
    let pb = positions(joint, b);
    let pc = positions(joint, c);
    let abc: Vec<usize> = pa.iter().chain(&pb).chain(&pc).copied().collect();
    let ac: Vec<usize> = pa.iter().chain(&pc).copied().collect();
    let bc: Vec<usize> = pb.iter().chain(&pc).copied().collect();

    let mut p_abc = vec![0.0f64; group_len(joint, &abc)];
    let mut p_ac = vec![0.0f64; group_len(joint, &ac)];
    let mut p_bc = vec![0.0f64; group_len(joint, &bc)];
    let mut p_c = vec![0.0f64; group_len(joint, &pc)];
    for (i, &p) in joint.probs().iter().enumerate() {
        let d = digits_of(joint, i);
        p_abc[group_index(joint, &d, &abc)] += p;
        p_ac[group_index(joint, &d, &ac)] += p;
        p_bc[group_index(joint, &d, &bc)] += p;
        p_c[group_index(joint, &d, &pc)] += p;
    }

    // Walk the joint again so each positive cell's group memberships are
    // recomputed from scratch; duplicate cells within a group contribute the
    // same ratio, so weight by the cell probability.
    let mut seen = vec![false; p_abc.len()];
    let mut mi = 0.0f64;
    for (i, &p) in joint.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let d = digits_of(joint, i);
        let iabc = group_index(joint, &d, &abc);
        if seen[iabc] {
            continue;
        }
        seen[iabc] = true;
        let pabc = p_abc[iabc];
        if pabc <= 0.0 {
            continue;
        }
        let pac = p_ac[group_index(joint, &d, &ac)];
        let pbc = p_bc[group_index(joint, &d, &bc)];
        let pcv = p_c[group_index(joint, &d, &pc)];
        mi += pabc * ((pabc * pcv) / (pac * pbc)).log2();
    }
    mi
}

/// Total variation by direct summation over both tables.
pub fn tv_distance(p: &JointPmf, q: &JointPmf) -> f64 {
    assert_eq!(p.probs().len(), q.probs().len(), "oracle: shape mismatch");
    p.probs().iter().zip(q.probs()).map(|(&a, &b)| (a - b).abs()).sum()
}
