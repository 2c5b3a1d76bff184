//! Exact discrete-probability engine: labeled joint distributions over named
//! finite alphabets, marginalization, conditioning, composition with
//! stochastic kernels, entropy / mutual information (in bits), and total
//! variation distance.
//!
//! All values are immutable after construction and every operation is a pure
//! function, so everything here can be shared freely across threads.

use thiserror::Error;

/// Hard cap on dense table sizes (number of cells).
pub const MAX_TABLE_CELLS: usize = 1 << 24;

/// Tolerance for normalization checks at construction time.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProbError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{0}` has an empty alphabet")]
    EmptyAlphabet(String),
    #[error("table has {got} cells but the alphabets require {want}")]
    TableShape { got: usize, want: usize },
    #[error("negative probability {value:e} at cell {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0} (must be 1 within {NORM_TOL:e})")]
    NotNormalized(f64),
    #[error("kernel row {row} sums to {sum} (must be 1 within {NORM_TOL:e})")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("variable sets overlap on `{0}`")]
    OverlappingSets(String),
    #[error("conditioning event has zero probability")]
    ZeroProbabilityEvidence,
    #[error("value {value} out of range for `{name}` (alphabet size {size})")]
    ValueOutOfRange { name: String, value: usize, size: usize },
    #[error("variable `{0}` already present in the joint")]
    NameCollision(String),
    #[error("requested table of {0} cells exceeds the cap of {1}")]
    ResourceLimit(usize, usize),
    #[error("distribution shapes differ: {0}")]
    ShapeMismatch(String),
}

pub type Result<T> = std::result::Result<T, ProbError>;

/// A named finite-alphabet variable. Symbols are `0..size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub size: usize,
}

impl Variable {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Variable { name: name.into(), size }
    }
}

/// Compensated (Kahan) sum; keeps normalization checks meaningful on
/// large tables where a naive sum would drift past the tolerance.
pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

fn checked_table_len(vars: &[Variable]) -> Result<usize> {
    let mut len = 1usize;
    for v in vars {
        if v.size == 0 {
            return Err(ProbError::EmptyAlphabet(v.name.clone()));
        }
        len = len
            .checked_mul(v.size)
            .filter(|&l| l <= MAX_TABLE_CELLS)
            .ok_or(ProbError::ResourceLimit(usize::MAX, MAX_TABLE_CELLS))?;
    }
    Ok(len)
}

fn check_unique_names(vars: &[Variable]) -> Result<()> {
    for (i, v) in vars.iter().enumerate() {
        if vars[..i].iter().any(|u| u.name == v.name) {
            return Err(ProbError::DuplicateVariable(v.name.clone()));
        }
    }
    Ok(())
}

/// Row-major strides; the first variable is the most significant digit.
fn strides(vars: &[Variable]) -> Vec<usize> {
    let mut s = vec![1usize; vars.len()];
    for i in (0..vars.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * vars[i + 1].size;
    }
    s
}

fn entropy_of_table(probs: &[f64]) -> f64 {
    // 0 log 0 := 0.
    -kahan_sum(probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()))
}

/// Marginal of a dense table onto the variables at `keep` (ascending
/// positions), using an odometer walk so each cell costs O(1) amortized.
fn subset_marginal(vars: &[Variable], probs: &[f64], keep: &[usize]) -> Vec<f64> {
    debug_assert!(keep.windows(2).all(|w| w[0] < w[1]));
    let out_len: usize = keep.iter().map(|&p| vars[p].size).product::<usize>().max(1);
    let mut out = vec![0.0f64; out_len];
    if vars.is_empty() {
        out[0] = probs[0];
        return out;
    }
    // stride of each full-table variable inside the output table (0 if dropped)
    let mut keep_stride = vec![0usize; vars.len()];
    {
        let mut s = 1usize;
        for &p in keep.iter().rev() {
            keep_stride[p] = s;
            s *= vars[p].size;
        }
    }
    let sizes: Vec<usize> = vars.iter().map(|v| v.size).collect();
    let mut digits = vec![0usize; vars.len()];
    let mut oidx = 0usize;
    for &p in probs {
        out[oidx] += p;
        for d in (0..vars.len()).rev() {
            digits[d] += 1;
            oidx += keep_stride[d];
            if digits[d] < sizes[d] {
                break;
            }
            digits[d] = 0;
            oidx -= keep_stride[d] * sizes[d];
        }
    }
    out
}

/// A normalized joint probability table over an ordered list of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    vars: Vec<Variable>,
    probs: Vec<f64>,
}

impl JointPmf {
    /// Builds a joint pmf, validating shape, non-negativity, and that the
    /// entries sum to 1 within [`NORM_TOL`].
    pub fn new(vars: Vec<Variable>, probs: Vec<f64>) -> Result<Self> {
        check_unique_names(&vars)?;
        let want = checked_table_len(&vars)?;
        if probs.len() != want {
            return Err(ProbError::TableShape { got: probs.len(), want });
        }
        for (i, &p) in probs.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                return Err(ProbError::NegativeProbability { index: i, value: p });
            }
        }
        let sum = kahan_sum(probs.iter().copied());
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(ProbError::NotNormalized(sum));
        }
        Ok(JointPmf { vars, probs })
    }

    /// Uniform distribution over the product alphabet.
    pub fn uniform(vars: Vec<Variable>) -> Result<Self> {
        let len = checked_table_len(&vars)?;
        let p = 1.0 / len as f64;
        JointPmf::new(vars, vec![p; len])
    }

    /// Builds a table by evaluating `f` on every assignment, then validates.
    pub fn from_fn(vars: Vec<Variable>, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let len = checked_table_len(&vars)?;
        let mut probs = vec![0.0; len];
        let mut digits = vec![0usize; vars.len()];
        for slot in probs.iter_mut() {
            *slot = f(&digits);
            increment(&mut digits, &vars);
        }
        JointPmf::new(vars, probs)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn var_position(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| ProbError::UnknownVariable(name.to_string()))
    }

    pub fn var(&self, name: &str) -> Result<&Variable> {
        Ok(&self.vars[self.var_position(name)?])
    }

    /// Probability of a full assignment (one symbol per variable, in order).
    pub fn prob(&self, assignment: &[usize]) -> f64 {
        debug_assert_eq!(assignment.len(), self.vars.len());
        let st = strides(&self.vars);
        let idx: usize = assignment.iter().zip(&st).map(|(&a, &s)| a * s).sum();
        self.probs[idx]
    }

    fn positions_of(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(names.len());
        for &n in names {
            let p = self.var_position(n)?;
            if out.contains(&p) {
                return Err(ProbError::DuplicateVariable(n.to_string()));
            }
            out.push(p);
        }
        Ok(out)
    }

    /// Sum out every variable not in `keep`. The result keeps the joint's
    /// variable order regardless of the order of `keep`.
    pub fn marginalize(&self, keep: &[&str]) -> Result<JointPmf> {
        let mut pos = self.positions_of(keep)?;
        pos.sort_unstable();
        let out_vars: Vec<Variable> = pos.iter().map(|&p| self.vars[p].clone()).collect();
        let out = subset_marginal(&self.vars, &self.probs, &pos);
        Ok(JointPmf { vars: out_vars, probs: out })
    }

    /// Bayes-normalized distribution of the remaining variables given the
    /// partial assignment in `evidence`.
    pub fn condition(&self, evidence: &[(&str, usize)]) -> Result<JointPmf> {
        let mut ev = vec![None::<usize>; self.vars.len()];
        for &(name, value) in evidence {
            let p = self.var_position(name)?;
            if ev[p].is_some() {
                return Err(ProbError::DuplicateVariable(name.to_string()));
            }
            if value >= self.vars[p].size {
                return Err(ProbError::ValueOutOfRange {
                    name: name.to_string(),
                    value,
                    size: self.vars[p].size,
                });
            }
            ev[p] = Some(value);
        }
        let out_vars: Vec<Variable> = self
            .vars
            .iter()
            .zip(&ev)
            .filter(|(_, e)| e.is_none())
            .map(|(v, _)| v.clone())
            .collect();
        let out_len = out_vars.iter().map(|v| v.size).product::<usize>().max(1);
        let mut out = vec![0.0f64; out_len];
        let mut digits = vec![0usize; self.vars.len()];
        for &p in &self.probs {
            if ev.iter().zip(&digits).all(|(e, &d)| e.map_or(true, |v| v == d)) {
                let mut oidx = 0usize;
                for (i, &d) in digits.iter().enumerate() {
                    if ev[i].is_none() {
                        oidx = oidx * self.vars[i].size + d;
                    }
                }
                out[oidx] += p;
            }
            increment(&mut digits, &self.vars);
        }
        let total = kahan_sum(out.iter().copied());
        if total <= 0.0 {
            return Err(ProbError::ZeroProbabilityEvidence);
        }
        for v in out.iter_mut() {
            *v /= total;
        }
        Ok(JointPmf { vars: out_vars, probs: out })
    }

    fn entropy_of_subset(&self, names: &[&str]) -> Result<f64> {
        let mut pos = self.positions_of(names)?;
        pos.sort_unstable();
        Ok(entropy_of_table(&subset_marginal(&self.vars, &self.probs, &pos)))
    }

    /// Conditional Shannon entropy H(targets | given) in bits.
    pub fn entropy(&self, targets: &[&str], given: &[&str]) -> Result<f64> {
        for t in targets {
            if given.contains(t) {
                return Err(ProbError::OverlappingSets(t.to_string()));
            }
        }
        let mut both: Vec<&str> = targets.to_vec();
        both.extend_from_slice(given);
        Ok(self.entropy_of_subset(&both)? - self.entropy_of_subset(given)?)
    }

    /// Conditional mutual information I(a ; b | given) in bits, clamped at 0.
    pub fn mutual_information(&self, a: &[&str], b: &[&str], given: &[&str]) -> Result<f64> {
        for x in a {
            if b.contains(x) || given.contains(x) {
                return Err(ProbError::OverlappingSets(x.to_string()));
            }
        }
        for x in b {
            if given.contains(x) {
                return Err(ProbError::OverlappingSets(x.to_string()));
            }
        }
        let ac: Vec<&str> = a.iter().chain(given).copied().collect();
        let bc: Vec<&str> = b.iter().chain(given).copied().collect();
        let abc: Vec<&str> = a.iter().chain(b).chain(given).copied().collect();
        let v = self.entropy_of_subset(&ac)? + self.entropy_of_subset(&bc)?
            - self.entropy_of_subset(&abc)?
            - self.entropy_of_subset(given)?;
        Ok(v.max(0.0))
    }

    /// Unnormalized L1 distance sum |p - q|, in [0, 2]. Requires identical
    /// variable lists (names, sizes, order).
    pub fn tv_distance(&self, other: &JointPmf) -> Result<f64> {
        if self.vars != other.vars {
            return Err(ProbError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.vars.iter().map(|v| (&v.name, v.size)).collect::<Vec<_>>(),
                other.vars.iter().map(|v| (&v.name, v.size)).collect::<Vec<_>>()
            )));
        }
        Ok(kahan_sum(
            self.probs.iter().zip(&other.probs).map(|(&p, &q)| (p - q).abs()),
        ))
    }

    /// Extends the joint with the kernel's output variables:
    /// p(old, new) = p(old) * k(new | inputs(old)).
    pub fn compose(&self, kernel: &ConditionalKernel) -> Result<JointPmf> {
        for o in &kernel.outputs {
            if self.vars.iter().any(|v| v.name == o.name) {
                return Err(ProbError::NameCollision(o.name.clone()));
            }
        }
        let mut in_pos = Vec::with_capacity(kernel.inputs.len());
        for iv in &kernel.inputs {
            let p = self.var_position(&iv.name)?;
            if self.vars[p].size != iv.size {
                return Err(ProbError::ShapeMismatch(format!(
                    "kernel input `{}` has size {} but the joint has size {}",
                    iv.name, iv.size, self.vars[p].size
                )));
            }
            in_pos.push(p);
        }
        let mut out_vars = self.vars.clone();
        out_vars.extend(kernel.outputs.iter().cloned());
        let out_len = checked_table_len(&out_vars)?;
        let o_len = kernel.out_len();
        let mut out = Vec::with_capacity(out_len);
        let mut digits = vec![0usize; self.vars.len()];
        for &p in &self.probs {
            let mut row = 0usize;
            for (&pos, iv) in in_pos.iter().zip(&kernel.inputs) {
                row = row * iv.size + digits[pos];
            }
            let r = kernel.row(row);
            out.extend(r.iter().map(|&k| p * k));
            let _ = o_len;
            increment(&mut digits, &self.vars);
        }
        JointPmf::new(out_vars, out)
    }

    /// n-fold i.i.d. product. Block variables are named `"{name}.{i}"` for
    /// i in 1..=n, grouped position-major: all of copy 1, then copy 2, ...
    pub fn iid_extension(&self, n: usize) -> Result<JointPmf> {
        assert!(n >= 1, "blocklength must be at least 1");
        let mut vars = Vec::with_capacity(self.vars.len() * n);
        for i in 1..=n {
            for v in &self.vars {
                vars.push(Variable::new(format!("{}.{}", v.name, i), v.size));
            }
        }
        checked_table_len(&vars)?;
        let mut probs = vec![1.0f64];
        for _ in 0..n {
            let mut next = Vec::with_capacity(probs.len() * self.probs.len());
            for &a in &probs {
                next.extend(self.probs.iter().map(|&b| a * b));
            }
            probs = next;
        }
        JointPmf::new(vars, probs)
    }

    /// Permutes the variable order. `order` must name every variable once.
    pub fn reorder(&self, order: &[&str]) -> Result<JointPmf> {
        let pos = self.positions_of(order)?;
        if pos.len() != self.vars.len() {
            return Err(ProbError::ShapeMismatch(format!(
                "reorder names {} of {} variables",
                pos.len(),
                self.vars.len()
            )));
        }
        let out_vars: Vec<Variable> = pos.iter().map(|&p| self.vars[p].clone()).collect();
        let out_strides = strides(&out_vars);
        // stride of each original variable inside the output table
        let mut map = vec![0usize; self.vars.len()];
        for (k, &p) in pos.iter().enumerate() {
            map[p] = out_strides[k];
        }
        let mut out = vec![0.0f64; self.probs.len()];
        let mut digits = vec![0usize; self.vars.len()];
        for &p in &self.probs {
            let oidx: usize = digits.iter().zip(&map).map(|(&d, &s)| d * s).sum();
            out[oidx] = p;
            increment(&mut digits, &self.vars);
        }
        Ok(JointPmf { vars: out_vars, probs: out })
    }

    /// Conditional kernel p(outputs | inputs) extracted from the joint.
    /// Rows with zero input probability are filled uniformly.
    pub fn extract_kernel(&self, outputs: &[&str], inputs: &[&str]) -> Result<ConditionalKernel> {
        for o in outputs {
            if inputs.contains(o) {
                return Err(ProbError::OverlappingSets(o.to_string()));
            }
        }
        let mut names: Vec<&str> = inputs.to_vec();
        names.extend_from_slice(outputs);
        let marg = self.marginalize(&names)?.reorder(&names)?;
        let in_vars: Vec<Variable> = inputs.iter().map(|&n| self.var(n).cloned().unwrap()).collect();
        let out_vars: Vec<Variable> = outputs.iter().map(|&n| self.var(n).cloned().unwrap()).collect();
        let out_len: usize = out_vars.iter().map(|v| v.size).product::<usize>().max(1);
        let in_len = marg.probs.len() / out_len;
        let mut rows = Vec::with_capacity(marg.probs.len());
        for r in 0..in_len {
            let chunk = &marg.probs[r * out_len..(r + 1) * out_len];
            let total = kahan_sum(chunk.iter().copied());
            if total > 0.0 {
                rows.extend(chunk.iter().map(|&p| p / total));
            } else {
                rows.extend(std::iter::repeat(1.0 / out_len as f64).take(out_len));
            }
        }
        ConditionalKernel::new(in_vars, out_vars, rows)
    }
}

fn increment(digits: &mut [usize], vars: &[Variable]) {
    for d in (0..digits.len()).rev() {
        digits[d] += 1;
        if digits[d] < vars[d].size {
            return;
        }
        digits[d] = 0;
    }
}

/// A stochastic map p(outputs | inputs): one pmf row over the output
/// product alphabet per input assignment. Rows are row-major in the input
/// order (first input most significant), and likewise for outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalKernel {
    inputs: Vec<Variable>,
    outputs: Vec<Variable>,
    rows: Vec<f64>,
}

impl ConditionalKernel {
    pub fn new(inputs: Vec<Variable>, outputs: Vec<Variable>, rows: Vec<f64>) -> Result<Self> {
        let all: Vec<Variable> = inputs.iter().chain(&outputs).cloned().collect();
        check_unique_names(&all)?;
        let in_len = checked_table_len(&inputs)?;
        let out_len = checked_table_len(&outputs)?;
        if rows.len() != in_len * out_len {
            return Err(ProbError::TableShape { got: rows.len(), want: in_len * out_len });
        }
        for (i, &p) in rows.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                return Err(ProbError::NegativeProbability { index: i, value: p });
            }
        }
        for r in 0..in_len {
            let sum = kahan_sum(rows[r * out_len..(r + 1) * out_len].iter().copied());
            if (sum - 1.0).abs() > NORM_TOL {
                return Err(ProbError::RowNotNormalized { row: r, sum });
            }
        }
        Ok(ConditionalKernel { inputs, outputs, rows })
    }

    /// Deterministic kernel: `f` maps each input assignment to one output
    /// assignment.
    pub fn deterministic(
        inputs: Vec<Variable>,
        outputs: Vec<Variable>,
        f: impl Fn(&[usize]) -> Vec<usize>,
    ) -> Result<Self> {
        let in_len = checked_table_len(&inputs)?;
        let out_len = checked_table_len(&outputs)?;
        let out_strides = strides(&outputs);
        let mut rows = vec![0.0; in_len * out_len];
        let mut digits = vec![0usize; inputs.len()];
        for r in 0..in_len {
            let image = f(&digits);
            assert_eq!(image.len(), outputs.len(), "map arity mismatch");
            let mut oidx = 0usize;
            for ((&v, s), var) in image.iter().zip(&out_strides).zip(&outputs) {
                assert!(v < var.size, "map value out of range for `{}`", var.name);
                oidx += v * s;
            }
            rows[r * out_len + oidx] = 1.0;
            increment(&mut digits, &inputs);
        }
        ConditionalKernel::new(inputs, outputs, rows)
    }

    pub fn inputs(&self) -> &[Variable] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Variable] {
        &self.outputs
    }

    pub fn in_len(&self) -> usize {
        self.inputs.iter().map(|v| v.size).product::<usize>().max(1)
    }

    pub fn out_len(&self) -> usize {
        self.outputs.iter().map(|v| v.size).product::<usize>().max(1)
    }

    pub fn row(&self, input_index: usize) -> &[f64] {
        let w = self.out_len();
        &self.rows[input_index * w..(input_index + 1) * w]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }
}
