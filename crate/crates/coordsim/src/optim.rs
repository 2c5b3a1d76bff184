//! Finite-difference coordinate descent over unconstrained parameters,
//! shared by the region search and the converse-evidence search.
//!
//! Objectives are evaluated on softmax images of the parameters, so every
//! iterate corresponds to valid simplex rows by construction.

/// Finite-difference step for the central difference.
pub const FD_STEP: f64 = 1e-4;

/// Cap on a single coordinate move, in logit units.
const MAX_MOVE: f64 = 4.0;

#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    /// Maximum coordinate passes.
    pub max_passes: usize,
    /// Initial step scale; multiplied by `step_decay` each pass.
    pub step_init: f64,
    pub step_decay: f64,
    /// Stop when a full pass improves the objective by less than this,
    /// relative to max(1, |f|).
    pub rel_improvement: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            max_passes: 12,
            step_init: 0.8,
            step_decay: 0.85,
            rel_improvement: 1e-7,
        }
    }
}

/// Cyclic coordinate descent with central finite differences. Each candidate
/// move is kept only if it improves the objective, so the trace is monotone.
/// Returns the final objective value.
pub fn coordinate_descent(
    theta: &mut [f64],
    opts: &DescentOptions,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut best = f(theta);
    for pass in 0..opts.max_passes {
        let lr = opts.step_init * opts.step_decay.powi(pass as i32);
        let pass_start = best;
        for i in 0..theta.len() {
            let orig = theta[i];
            theta[i] = orig + FD_STEP;
            let fp = f(theta);
            theta[i] = orig - FD_STEP;
            let fm = f(theta);
            theta[i] = orig;
            let grad = (fp - fm) / (2.0 * FD_STEP);
            if grad == 0.0 || !grad.is_finite() {
                continue;
            }
            let delta = (-lr * grad).clamp(-MAX_MOVE, MAX_MOVE);
            theta[i] = orig + delta;
            let trial = f(theta);
            if trial < best {
                best = trial;
            } else {
                theta[i] = orig;
            }
        }
        let gain = pass_start - best;
        if gain <= opts.rel_improvement * pass_start.abs().max(1.0) {
            break;
        }
    }
    best
}

/// Softmax of one logit row into `out` (overwrites).
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        let e = (l - m).exp();
        *o = e;
        total += e;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Replaces entries below `floor` with exact zeros and renormalizes each
/// width-sized row; near-deterministic optimizer output becomes exact.
pub fn snap_rows(rows: &mut [f64], width: usize, floor: f64) {
    for row in rows.chunks_mut(width) {
        let mut total = 0.0;
        for p in row.iter_mut() {
            if *p < floor {
                *p = 0.0;
            }
            total += *p;
        }
        if total > 0.0 {
            for p in row.iter_mut() {
                *p /= total;
            }
        } else {
            for p in row.iter_mut() {
                *p = 1.0 / width as f64;
            }
        }
    }
}
