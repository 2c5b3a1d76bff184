//! Random model generators shared by the unit-test suites.

use crate::factor::{kernel, names, CribFactorization, DeterministicLinks, NoCribFactorization, TargetSpec};
use crate::prob::{kahan_sum, ConditionalKernel, JointPmf, Variable};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub(crate) fn random_row(rng: &mut ChaCha8Rng, width: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..width).map(|_| -(rng.random::<f64>().max(1e-12)).ln()).collect();
    let total: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= total;
    }
    let resid = 1.0 - kahan_sum(row.iter().copied());
    row[0] += resid;
    row
}

pub(crate) fn random_kernel(
    rng: &mut ChaCha8Rng,
    inputs: &[(&str, usize)],
    outputs: &[(&str, usize)],
) -> ConditionalKernel {
    let in_len: usize = inputs.iter().map(|&(_, s)| s).product::<usize>().max(1);
    let out_len: usize = outputs.iter().map(|&(_, s)| s).product::<usize>().max(1);
    let mut rows = Vec::with_capacity(in_len * out_len);
    for _ in 0..in_len {
        rows.extend(random_row(rng, out_len));
    }
    kernel(inputs, outputs, rows).unwrap()
}

/// Random target with conditionally independent sources:
/// p(w) p(x1|w) p(x2|w) q(y|x1,x2,w).
pub(crate) fn random_independent_target(
    rng: &mut ChaCha8Rng,
    x1: usize,
    x2: usize,
    w: usize,
    y: usize,
) -> TargetSpec {
    let w_pmf = JointPmf::new(vec![Variable::new(names::W, w)], random_row(rng, w)).unwrap();
    let kx1 = random_kernel(rng, &[(names::W, w)], &[(names::X1, x1)]);
    let kx2 = random_kernel(rng, &[(names::W, w)], &[(names::X2, x2)]);
    let ky = random_kernel(
        rng,
        &[(names::X1, x1), (names::X2, x2), (names::W, w)],
        &[(names::Y, y)],
    );
    let joint = w_pmf
        .compose(&kx1)
        .unwrap()
        .compose(&kx2)
        .unwrap()
        .compose(&ky)
        .unwrap()
        .reorder(&[names::X1, names::X2, names::W, names::Y])
        .unwrap();
    TargetSpec::new(joint).unwrap()
}

/// Random fully-correlated target over small alphabets.
pub(crate) fn random_target(
    rng: &mut ChaCha8Rng,
    x1: usize,
    x2: usize,
    w: usize,
    y: usize,
) -> TargetSpec {
    let vars = vec![
        Variable::new(names::X1, x1),
        Variable::new(names::X2, x2),
        Variable::new(names::W, w),
        Variable::new(names::Y, y),
    ];
    let len = x1 * x2 * w * y;
    TargetSpec::new(JointPmf::new(vars, random_row(rng, len)).unwrap()).unwrap()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn random_crib_factorization(
    rng: &mut ChaCha8Rng,
    target: &TargetSpec,
    t: usize,
    u1: usize,
    u2: usize,
    xt1: usize,
    xt2: usize,
    yt: usize,
) -> CribFactorization {
    let (x1, x2, w, y) = target.sizes();
    CribFactorization {
        t_probs: random_row(rng, t),
        enc2: random_kernel(
            rng,
            &[(names::X2, x2), (names::T, t)],
            &[(names::U2, u2), (names::XT2, xt2)],
        ),
        enc1: random_kernel(
            rng,
            &[(names::X1, x1), (names::XT2, xt2), (names::T, t)],
            &[(names::U1, u1), (names::XT1, xt1)],
        ),
        channel: random_kernel(rng, &[(names::XT1, xt1), (names::XT2, xt2)], &[(names::YT, yt)]),
        decoder: random_kernel(
            rng,
            &[(names::U1, u1), (names::U2, u2), (names::W, w), (names::YT, yt), (names::T, t)],
            &[(names::Y, y)],
        ),
    }
}

pub(crate) fn random_nocrib_factorization(
    rng: &mut ChaCha8Rng,
    target: &TargetSpec,
    t: usize,
    u1: usize,
    u2: usize,
    links: &DeterministicLinks,
) -> NoCribFactorization {
    let (x1, x2, w, y) = target.sizes();
    let (xt1, xt2) = (links.xt1_size(), links.xt2_size());
    NoCribFactorization {
        t_probs: random_row(rng, t),
        enc1_u: random_kernel(rng, &[(names::X1, x1), (names::T, t)], &[(names::U1, u1)]),
        enc1_x: random_kernel(
            rng,
            &[(names::U1, u1), (names::X1, x1), (names::T, t)],
            &[(names::XT1, xt1)],
        ),
        enc2_u: random_kernel(rng, &[(names::X2, x2), (names::T, t)], &[(names::U2, u2)]),
        enc2_x: random_kernel(
            rng,
            &[(names::U2, u2), (names::X2, x2), (names::T, t)],
            &[(names::XT2, xt2)],
        ),
        channel: links.channel(),
        decoder: random_kernel(
            rng,
            &[
                (names::U1, u1),
                (names::U2, u2),
                (names::W, w),
                (names::YT, links.yt_size()),
                (names::T, t),
            ],
            &[(names::Y, y)],
        ),
    }
}
