//! Builders for the two Markov-factorized joint shapes the region evaluators
//! consume, and structural checks on the results.
//!
//! Both shapes extend a target source p(x1,x2,w) with a time-sharing variable
//! T, per-encoder auxiliaries (U1, Xt1) and (U2, Xt2), the channel output Yt,
//! and the decoder output Y:
//!
//! - cribbing chain: p(x1,x2,w) p(t) p(u2,xt2|x2,t) p(u1,xt1|x1,xt2,t)
//!   p(yt|xt1,xt2) p(y|u1,u2,w,yt,t) — encoder 1 sees encoder 2's channel
//!   input before choosing its own;
//! - no-cribbing chain: p(x1,x2,w) p(t) [prod_j p(uj|xj,t) p(xtj|uj,xj,t)]
//!   p(yt|xt1,xt2) p(y|u1,u2,w,yt,t), which additionally requires the sources
//!   to be conditionally independent given W.
//!
//! Joints are always returned in the canonical variable order
//! (X1, X2, W, T, U1, U2, Xt1, Xt2, Yt, Y) so serialization is reproducible.

use crate::prob::{ConditionalKernel, JointPmf, ProbError, Variable};
use thiserror::Error;

pub mod names {
    pub const X1: &str = "X1";
    pub const X2: &str = "X2";
    pub const W: &str = "W";
    pub const T: &str = "T";
    pub const U1: &str = "U1";
    pub const U2: &str = "U2";
    pub const XT1: &str = "Xt1";
    pub const XT2: &str = "Xt2";
    pub const YT: &str = "Yt";
    pub const Y: &str = "Y";
}

/// Canonical variable order of every fully built joint.
pub const CANONICAL_ORDER: [&str; 10] = [
    names::X1,
    names::X2,
    names::W,
    names::T,
    names::U1,
    names::U2,
    names::XT1,
    names::XT2,
    names::YT,
    names::Y,
];

/// Target variables, in order.
pub const TARGET_ORDER: [&str; 4] = [names::X1, names::X2, names::W, names::Y];

/// Tolerance on I(X1;X2|W) for targets used with the no-cribbing chain.
pub const SOURCE_INDEPENDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FactorError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("target must be over (X1, X2, W, Y) in order; got ({0})")]
    WrongTargetVariables(String),
    #[error("kernel `{kernel}` must have {expected}, got {got}")]
    KernelShape {
        kernel: &'static str,
        expected: String,
        got: String,
    },
    #[error("sources are not conditionally independent given W: I(X1;X2|W) = {measured:e} exceeds {tol:e}")]
    DependentSources { measured: f64, tol: f64 },
    #[error("time-sharing pmf sums to {0}, must be 1")]
    TimeShareNotNormalized(f64),
    #[error("joint is missing variable `{0}`")]
    MissingVariable(String),
    #[error("channel is not the deterministic-link channel claimed: p(yt={yt} | xt1={xt1}, xt2={xt2}) = {prob} on a positive-probability input")]
    NonDeterministicChannel {
        xt1: usize,
        xt2: usize,
        yt: usize,
        prob: f64,
    },
    #[error("deterministic link map value {value} out of range {size}")]
    LinkOutOfRange { value: usize, size: usize },
}

pub type Result<T> = std::result::Result<T, FactorError>;

/// The fixed q(x1, x2, w, y) the coordination must reproduce.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    joint: JointPmf,
}

impl TargetSpec {
    /// Wraps a joint over exactly (X1, X2, W, Y), in that order.
    pub fn new(joint: JointPmf) -> Result<Self> {
        let got: Vec<&str> = joint.variables().iter().map(|v| v.name.as_str()).collect();
        if got != TARGET_ORDER {
            return Err(FactorError::WrongTargetVariables(got.join(", ")));
        }
        Ok(TargetSpec { joint })
    }

    pub fn joint(&self) -> &JointPmf {
        &self.joint
    }

    /// Marginal source law p(x1, x2, w).
    pub fn source(&self) -> JointPmf {
        self.joint
            .marginalize(&[names::X1, names::X2, names::W])
            .expect("target always contains the source variables")
    }

    /// Measured I(X1;X2|W), which must be ~0 for the no-cribbing chain.
    pub fn source_dependence(&self) -> f64 {
        self.joint
            .mutual_information(&[names::X1], &[names::X2], &[names::W])
            .expect("target variables are disjoint")
    }

    /// Alphabet sizes (|X1|, |X2|, |W|, |Y|).
    pub fn sizes(&self) -> (usize, usize, usize, usize) {
        let v = self.joint.variables();
        (v[0].size, v[1].size, v[2].size, v[3].size)
    }
}

/// Convenience constructor for a named kernel.
pub fn kernel(
    inputs: &[(&str, usize)],
    outputs: &[(&str, usize)],
    rows: Vec<f64>,
) -> Result<ConditionalKernel> {
    let iv: Vec<Variable> = inputs.iter().map(|&(n, s)| Variable::new(n, s)).collect();
    let ov: Vec<Variable> = outputs.iter().map(|&(n, s)| Variable::new(n, s)).collect();
    Ok(ConditionalKernel::new(iv, ov, rows)?)
}

fn expect_kernel_shape(
    k: &ConditionalKernel,
    label: &'static str,
    inputs: &[(&str, usize)],
    outputs: &[(&str, usize)],
) -> Result<()> {
    let got_in: Vec<(&str, usize)> =
        k.inputs().iter().map(|v| (v.name.as_str(), v.size)).collect();
    let got_out: Vec<(&str, usize)> =
        k.outputs().iter().map(|v| (v.name.as_str(), v.size)).collect();
    if got_in != inputs || got_out != outputs {
        return Err(FactorError::KernelShape {
            kernel: label,
            expected: format!("inputs {:?} -> outputs {:?}", inputs, outputs),
            got: format!("inputs {:?} -> outputs {:?}", got_in, got_out),
        });
    }
    Ok(())
}

/// Kernels of the cribbing chain.
#[derive(Debug, Clone)]
pub struct CribFactorization {
    /// pmf of the time-sharing variable T
    pub t_probs: Vec<f64>,
    /// p(u2, xt2 | x2, t)
    pub enc2: ConditionalKernel,
    /// p(u1, xt1 | x1, xt2, t) — the cribbing enters through the Xt2 input
    pub enc1: ConditionalKernel,
    /// p(yt | xt1, xt2)
    pub channel: ConditionalKernel,
    /// p(y | u1, u2, w, yt, t)
    pub decoder: ConditionalKernel,
}

/// Kernels of the no-cribbing chain.
#[derive(Debug, Clone)]
pub struct NoCribFactorization {
    pub t_probs: Vec<f64>,
    /// p(u1 | x1, t)
    pub enc1_u: ConditionalKernel,
    /// p(xt1 | u1, x1, t)
    pub enc1_x: ConditionalKernel,
    /// p(u2 | x2, t)
    pub enc2_u: ConditionalKernel,
    /// p(xt2 | u2, x2, t)
    pub enc2_x: ConditionalKernel,
    pub channel: ConditionalKernel,
    pub decoder: ConditionalKernel,
}

/// Alphabet sizes of a full canonical joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alphabets {
    pub x1: usize,
    pub x2: usize,
    pub w: usize,
    pub t: usize,
    pub u1: usize,
    pub u2: usize,
    pub xt1: usize,
    pub xt2: usize,
    pub yt: usize,
    pub y: usize,
}

impl Alphabets {
    pub fn of_joint(joint: &JointPmf) -> Result<Self> {
        let mut sizes = [0usize; 10];
        for (i, name) in CANONICAL_ORDER.iter().enumerate() {
            sizes[i] = joint
                .variables()
                .iter()
                .find(|v| v.name == *name)
                .ok_or_else(|| FactorError::MissingVariable(name.to_string()))?
                .size;
        }
        Ok(Alphabets {
            x1: sizes[0],
            x2: sizes[1],
            w: sizes[2],
            t: sizes[3],
            u1: sizes[4],
            u2: sizes[5],
            xt1: sizes[6],
            xt2: sizes[7],
            yt: sizes[8],
            y: sizes[9],
        })
    }
}

fn t_kernel(t_probs: &[f64]) -> Result<ConditionalKernel> {
    let sum: f64 = t_probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(FactorError::TimeShareNotNormalized(sum));
    }
    let mut probs = t_probs.to_vec();
    // absorb parse-level rounding so downstream validation stays exact
    for p in probs.iter_mut() {
        *p /= sum;
    }
    Ok(ConditionalKernel::new(
        vec![],
        vec![Variable::new(names::T, probs.len())],
        probs,
    )?)
}

/// Builds the cribbing chain over the canonical 10 variables.
pub fn build_cribbing_joint(target: &TargetSpec, f: &CribFactorization) -> Result<JointPmf> {
    let (x1, x2, w, _y) = target.sizes();
    let t = f.t_probs.len();
    let u2 = f.enc2.outputs()[0].size;
    let xt2 = f.enc2.outputs()[1].size;
    let u1 = f.enc1.outputs()[0].size;
    let xt1 = f.enc1.outputs()[1].size;
    let yt = f.channel.outputs()[0].size;
    expect_kernel_shape(
        &f.enc2,
        "enc2",
        &[(names::X2, x2), (names::T, t)],
        &[(names::U2, u2), (names::XT2, xt2)],
    )?;
    expect_kernel_shape(
        &f.enc1,
        "enc1",
        &[(names::X1, x1), (names::XT2, xt2), (names::T, t)],
        &[(names::U1, u1), (names::XT1, xt1)],
    )?;
    expect_kernel_shape(
        &f.channel,
        "channel",
        &[(names::XT1, xt1), (names::XT2, xt2)],
        &[(names::YT, yt)],
    )?;
    expect_kernel_shape(
        &f.decoder,
        "decoder",
        &[
            (names::U1, u1),
            (names::U2, u2),
            (names::W, w),
            (names::YT, yt),
            (names::T, t),
        ],
        &[(names::Y, target.sizes().3)],
    )?;

    let joint = target
        .source()
        .compose(&t_kernel(&f.t_probs)?)?
        .compose(&f.enc2)?
        .compose(&f.enc1)?
        .compose(&f.channel)?
        .compose(&f.decoder)?
        .reorder(&CANONICAL_ORDER)?;
    Ok(joint)
}

/// Builds the no-cribbing chain; the target must satisfy I(X1;X2|W) ~ 0.
pub fn build_nocrib_joint(target: &TargetSpec, f: &NoCribFactorization) -> Result<JointPmf> {
    let measured = target.source_dependence();
    if measured > SOURCE_INDEPENDENCE_TOL {
        return Err(FactorError::DependentSources {
            measured,
            tol: SOURCE_INDEPENDENCE_TOL,
        });
    }
    let (x1, x2, w, y) = target.sizes();
    let t = f.t_probs.len();
    let u1 = f.enc1_u.outputs()[0].size;
    let u2 = f.enc2_u.outputs()[0].size;
    let xt1 = f.enc1_x.outputs()[0].size;
    let xt2 = f.enc2_x.outputs()[0].size;
    let yt = f.channel.outputs()[0].size;
    expect_kernel_shape(
        &f.enc1_u,
        "enc1_u",
        &[(names::X1, x1), (names::T, t)],
        &[(names::U1, u1)],
    )?;
    expect_kernel_shape(
        &f.enc1_x,
        "enc1_x",
        &[(names::U1, u1), (names::X1, x1), (names::T, t)],
        &[(names::XT1, xt1)],
    )?;
    expect_kernel_shape(
        &f.enc2_u,
        "enc2_u",
        &[(names::X2, x2), (names::T, t)],
        &[(names::U2, u2)],
    )?;
    expect_kernel_shape(
        &f.enc2_x,
        "enc2_x",
        &[(names::U2, u2), (names::X2, x2), (names::T, t)],
        &[(names::XT2, xt2)],
    )?;
    expect_kernel_shape(
        &f.channel,
        "channel",
        &[(names::XT1, xt1), (names::XT2, xt2)],
        &[(names::YT, yt)],
    )?;
    expect_kernel_shape(
        &f.decoder,
        "decoder",
        &[
            (names::U1, u1),
            (names::U2, u2),
            (names::W, w),
            (names::YT, yt),
            (names::T, t),
        ],
        &[(names::Y, y)],
    )?;

    let joint = target
        .source()
        .compose(&t_kernel(&f.t_probs)?)?
        .compose(&f.enc1_u)?
        .compose(&f.enc1_x)?
        .compose(&f.enc2_u)?
        .compose(&f.enc2_x)?
        .compose(&f.channel)?
        .compose(&f.decoder)?
        .reorder(&CANONICAL_ORDER)?;
    Ok(joint)
}

/// Per-t deviation of the built joint's (X1,X2,W,Y) conditional law from the
/// target. Zero-probability t branches never occur and are skipped (reported
/// as deviation 0).
#[derive(Debug, Clone)]
pub struct MarginalMatch {
    /// L-infinity deviation of p(x1,x2,w,y | T=t) from q, per t
    pub per_t: Vec<f64>,
    pub max_deviation: f64,
    pub worst_t: usize,
    pub tol: f64,
    pub pass: bool,
}

pub fn check_marginal_match(
    joint: &JointPmf,
    target: &TargetSpec,
    tol: f64,
) -> Result<MarginalMatch> {
    for name in [names::X1, names::X2, names::W, names::Y, names::T] {
        if joint.variables().iter().all(|v| v.name != name) {
            return Err(FactorError::MissingVariable(name.to_string()));
        }
    }
    let t_size = joint.var(names::T)?.size;
    let t_marginal = joint.marginalize(&[names::T])?;
    let mut per_t = Vec::with_capacity(t_size);
    for t in 0..t_size {
        if t_marginal.probs()[t] <= 0.0 {
            per_t.push(0.0);
            continue;
        }
        let cond = joint
            .condition(&[(names::T, t)])?
            .marginalize(&TARGET_ORDER)?
            .reorder(&TARGET_ORDER)?;
        let dev = cond
            .probs()
            .iter()
            .zip(target.joint().probs())
            .map(|(&p, &q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        per_t.push(dev);
    }
    let (worst_t, &max_deviation) = per_t
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    Ok(MarginalMatch {
        pass: max_deviation <= tol,
        per_t,
        max_deviation,
        worst_t,
        tol,
    })
}

/// I(a ; b | c) on the joint; callers assert ~0 for claimed Markov chains.
pub fn check_markov(joint: &JointPmf, a: &[&str], b: &[&str], c: &[&str]) -> Result<f64> {
    Ok(joint.mutual_information(a, b, c)?)
}

/// A channel made of two deterministic per-encoder links:
/// Yt = (f1(Xt1), f2(Xt2)), encoded as yt = f1(xt1) * out2 + f2(xt2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicLinks {
    pub f1: Vec<usize>,
    pub f2: Vec<usize>,
    pub out1: usize,
    pub out2: usize,
}

impl DeterministicLinks {
    pub fn new(f1: Vec<usize>, out1: usize, f2: Vec<usize>, out2: usize) -> Result<Self> {
        for &v in &f1 {
            if v >= out1 {
                return Err(FactorError::LinkOutOfRange { value: v, size: out1 });
            }
        }
        for &v in &f2 {
            if v >= out2 {
                return Err(FactorError::LinkOutOfRange { value: v, size: out2 });
            }
        }
        Ok(DeterministicLinks { f1, f2, out1, out2 })
    }

    /// Perfect channel: each encoder's input is passed through unchanged.
    pub fn identity(xt1: usize, xt2: usize) -> Self {
        DeterministicLinks {
            f1: (0..xt1).collect(),
            f2: (0..xt2).collect(),
            out1: xt1,
            out2: xt2,
        }
    }

    pub fn xt1_size(&self) -> usize {
        self.f1.len()
    }

    pub fn xt2_size(&self) -> usize {
        self.f2.len()
    }

    pub fn yt_size(&self) -> usize {
        self.out1 * self.out2
    }

    pub fn yt_of(&self, xt1: usize, xt2: usize) -> usize {
        self.f1[xt1] * self.out2 + self.f2[xt2]
    }

    /// The links as a point-mass channel kernel p(yt | xt1, xt2).
    pub fn channel(&self) -> ConditionalKernel {
        ConditionalKernel::deterministic(
            vec![
                Variable::new(names::XT1, self.xt1_size()),
                Variable::new(names::XT2, self.xt2_size()),
            ],
            vec![Variable::new(names::YT, self.yt_size())],
            |a| vec![self.yt_of(a[0], a[1])],
        )
        .expect("deterministic kernel construction cannot fail after range checks")
    }

    /// Checks that `joint` routes Yt through these links on every
    /// positive-probability cell.
    pub fn verify_joint(&self, joint: &JointPmf) -> Result<()> {
        let marg = joint
            .marginalize(&[names::XT1, names::XT2, names::YT])?
            .reorder(&[names::XT1, names::XT2, names::YT])?;
        let yt_size = self.yt_size();
        for (i, &p) in marg.probs().iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let yt = i % yt_size;
            let rest = i / yt_size;
            let xt2 = rest % self.xt2_size();
            let xt1 = rest / self.xt2_size();
            if yt != self.yt_of(xt1, xt2) {
                return Err(FactorError::NonDeterministicChannel { xt1, xt2, yt, prob: p });
            }
        }
        Ok(())
    }
}

/// Builds p(yt|xt1,xt2) from two deterministic maps.
pub fn deterministic_link_channel(links: &DeterministicLinks) -> ConditionalKernel {
    links.channel()
}
