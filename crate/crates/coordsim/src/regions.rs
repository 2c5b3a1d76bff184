//! Rate-region evaluation and witness search.
//!
//! [`crib_region_evaluate`] scores a built cribbing-chain joint against the
//! achievable-region inequalities (three decodability constraints plus
//! shared-randomness rate lower bounds). [`nocrib_region_evaluate`] scores a
//! no-cribbing joint against the exact region available when the channel is a
//! pair of deterministic links and the sources are conditionally independent
//! given the side information. [`crib_feasibility_evaluate`] scores the
//! specialization to a perfect channel with unlimited shared randomness,
//! where only the channel-entropy feasibility constraints remain.
//!
//! [`min_r01_search`] runs a multi-restart finite-difference coordinate
//! descent over softmax-parameterized factorization kernels, enforcing the
//! target-marginal match through an escalating quadratic penalty and hard
//! re-verification of every returned witness.

use crate::factor::{
    self, build_cribbing_joint, build_nocrib_joint, check_marginal_match, names, Alphabets,
    CribFactorization, DeterministicLinks, FactorError, MarginalMatch, NoCribFactorization,
    TargetSpec,
};
use crate::optim::{self, DescentOptions};
use crate::prob::{ConditionalKernel, JointPmf, ProbError, Variable};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegionError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("the no-cribbing evaluator requires a deterministic-links channel")]
    LinksRequired,
    #[error("joint channel is not the perfect channel Yt = (Xt1, Xt2)")]
    PerfectChannelRequired,
    #[error("search cardinalities and restart count must be at least 1")]
    BadSearchConfig,
}

pub type Result<T> = std::result::Result<T, RegionError>;

/// A shared-randomness rate pair, in bits per symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub r01: f64,
    pub r02: f64,
}

impl RatePoint {
    pub fn new(r01: f64, r02: f64) -> Self {
        RatePoint { r01, r02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    /// Must hold for the factorization itself to be usable.
    Structural,
    /// Lower bound on R01.
    RateR01,
    /// Lower bound on R02.
    RateR02,
    /// Lower bound on R01 + R02.
    RateSum,
}

/// One evaluated inequality. For structural rows `slack = lhs - rhs`; rate
/// rows have no candidate rate at evaluation time, so `lhs = 0` and
/// `slack = -rhs` says how far the zero-rate point falls short.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub label: String,
    pub kind: ConstraintKind,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Evaluated constraint set plus the derived minimal rate bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub constraints: Vec<ConstraintRecord>,
    /// All structural slacks are at least -tol.
    pub feasible: bool,
    pub min_r01: f64,
    pub min_r02: f64,
    pub min_sum: f64,
    pub tol: f64,
}

impl ConstraintReport {
    fn from_records(records: Vec<ConstraintRecord>, tol: f64) -> Self {
        let feasible = records
            .iter()
            .filter(|r| r.kind == ConstraintKind::Structural)
            .all(|r| r.slack >= -tol);
        let bound = |kind: ConstraintKind| {
            records
                .iter()
                .filter(|r| r.kind == kind)
                .map(|r| r.rhs)
                .fold(0.0f64, f64::max)
        };
        let min_r01 = bound(ConstraintKind::RateR01);
        let min_r02 = bound(ConstraintKind::RateR02);
        let min_sum = bound(ConstraintKind::RateSum);
        ConstraintReport { constraints: records, feasible, min_r01, min_r02, min_sum, tol }
    }

    /// Smallest structural slack (infinity when there are none).
    pub fn structural_min_slack(&self) -> f64 {
        self.constraints
            .iter()
            .filter(|r| r.kind == ConstraintKind::Structural)
            .map(|r| r.slack)
            .fold(f64::INFINITY, f64::min)
    }

    /// Margin of `rate` against this witness's rate bounds (negative when
    /// the point violates some bound).
    pub fn rate_margin(&self, rate: &RatePoint) -> f64 {
        let m1 = rate.r01 - self.min_r01;
        let m2 = rate.r02 - self.min_r02;
        let ms = rate.r01 + rate.r02 - self.min_sum;
        m1.min(m2).min(ms)
    }

    /// Whether this witness certifies the rate pair as achievable.
    pub fn admits(&self, rate: &RatePoint) -> bool {
        self.feasible && self.rate_margin(rate) >= -1e-12
    }
}

/// Memoizing subset-entropy evaluator over one joint.
struct EntropyCache<'a> {
    joint: &'a JointPmf,
    memo: HashMap<Vec<usize>, f64>,
}

impl<'a> EntropyCache<'a> {
    fn new(joint: &'a JointPmf) -> Self {
        EntropyCache { joint, memo: HashMap::new() }
    }

    fn h(&mut self, vars: &[&str]) -> f64 {
        let mut key: Vec<usize> = vars
            .iter()
            .map(|&n| self.joint.var_position(n).expect("evaluator variable must exist"))
            .collect();
        key.sort_unstable();
        key.dedup();
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let subset: Vec<&str> = key
            .iter()
            .map(|&p| self.joint.variables()[p].name.as_str())
            .collect();
        let v = self.joint.entropy(&subset, &[]).expect("subset entropy");
        self.memo.insert(key, v);
        v
    }

    fn hc(&mut self, targets: &[&str], given: &[&str]) -> f64 {
        let both: Vec<&str> = targets.iter().chain(given).copied().collect();
        self.h(&both) - self.h(given)
    }

    fn cmi(&mut self, a: &[&str], b: &[&str], c: &[&str]) -> f64 {
        let ac: Vec<&str> = a.iter().chain(c).copied().collect();
        let bc: Vec<&str> = b.iter().chain(c).copied().collect();
        let abc: Vec<&str> = a.iter().chain(b).chain(c).copied().collect();
        (self.h(&ac) + self.h(&bc) - self.h(&abc) - self.h(c)).max(0.0)
    }
}

fn structural(label: &str, lhs: f64, rhs: f64) -> ConstraintRecord {
    ConstraintRecord {
        label: label.to_string(),
        kind: ConstraintKind::Structural,
        lhs,
        rhs,
        slack: lhs - rhs,
    }
}

fn rate_bound(label: &str, kind: ConstraintKind, rhs: f64) -> ConstraintRecord {
    ConstraintRecord { label: label.to_string(), kind, lhs: 0.0, rhs, slack: -rhs }
}

/// Evaluates the cribbing-region constraints on a canonical 10-variable
/// joint: decodability of both source descriptions at the decoder, and the
/// shared-randomness rate lower bounds.
pub fn crib_region_evaluate(joint: &JointPmf, tol: f64) -> Result<ConstraintReport> {
    Alphabets::of_joint(joint)?;
    use names::*;
    let mut e = EntropyCache::new(joint);

    let recover_u1_lhs = e.cmi(&[U1], &[U2, W, YT], &[T]);
    let recover_u1_rhs = e.cmi(&[U1], &[X1, XT2], &[T]);
    let recover_u2_lhs = e.cmi(&[U2], &[U1, W, YT], &[T]);
    let recover_u2_rhs = e.cmi(&[U2], &[X2], &[T]);
    let recover_pair_lhs = e.cmi(&[U1, U2], &[W, YT], &[T]);
    let recover_pair_rhs = recover_u1_rhs + recover_u2_rhs - e.cmi(&[U1], &[U2], &[T]);

    let i1_full = e.cmi(&[U1], &[X1, X2, W, Y], &[T]);
    let i2_full = e.cmi(&[U2], &[X1, X2, W, Y], &[T]);
    let i1_dec = recover_u1_lhs;
    let i2_dec = recover_u2_lhs;
    let i1_chan = e.cmi(&[U1], &[W, YT], &[T]);
    let i2_chan = e.cmi(&[U2], &[W, YT], &[T]);
    let ipair_full = e.cmi(&[U1, U2], &[X1, X2, W, Y], &[T]);
    let ipair_chan = e.cmi(&[U1, U2], &[W, YT], &[T]);

    let records = vec![
        structural("recover-u1", recover_u1_lhs, recover_u1_rhs),
        structural("recover-u2", recover_u2_lhs, recover_u2_rhs),
        structural("recover-pair", recover_pair_lhs, recover_pair_rhs),
        rate_bound("r01-direct", ConstraintKind::RateR01, i1_full - i1_dec),
        rate_bound("r02-direct", ConstraintKind::RateR02, i2_full - i2_dec),
        rate_bound(
            "r01-cross",
            ConstraintKind::RateR01,
            i1_full - i1_chan + recover_u2_rhs - i2_dec,
        ),
        rate_bound(
            "r02-cross",
            ConstraintKind::RateR02,
            i2_full - i2_chan + recover_u1_rhs - i1_dec,
        ),
        rate_bound("rate-sum", ConstraintKind::RateSum, ipair_full - ipair_chan),
    ];
    Ok(ConstraintReport::from_records(records, tol))
}

/// Extends a deterministic-links joint with the two per-link output
/// components Yt1 and Yt2.
fn split_links_joint(joint: &JointPmf, links: &DeterministicLinks) -> Result<JointPmf> {
    links.verify_joint(joint)?;
    let out2 = links.out2;
    let yt = joint.var(names::YT)?.size;
    let k1 = ConditionalKernel::deterministic(
        vec![Variable::new(names::YT, yt)],
        vec![Variable::new("Yt1", links.out1)],
        |a| vec![a[0] / out2],
    )?;
    let k2 = ConditionalKernel::deterministic(
        vec![Variable::new(names::YT, yt)],
        vec![Variable::new("Yt2", links.out2)],
        |a| vec![a[0] % out2],
    )?;
    Ok(joint.compose(&k1)?.compose(&k2)?)
}

/// Evaluates the exact no-cribbing region (deterministic-links channel,
/// conditionally independent sources, unlimited R02): two link-capacity
/// feasibility constraints and the R01 lower bound.
pub fn nocrib_region_evaluate(
    joint: &JointPmf,
    links: &DeterministicLinks,
    tol: f64,
) -> Result<ConstraintReport> {
    Alphabets::of_joint(joint)?;
    use names::*;
    let split = split_links_joint(joint, links)?;
    let mut e = EntropyCache::new(&split);

    let link1_lhs = e.hc(&["Yt1"], &[W, T]);
    let link1_rhs = e.cmi(&[U1, "Yt1"], &[X1], &[W, T]);
    let link2_lhs = e.hc(&["Yt2"], &[W, T]);
    let link2_rhs = e.cmi(&[U2, "Yt2"], &[X2], &[W, T]);
    let r01 = e.cmi(&[U1, "Yt1"], &[X1, Y], &[X2, W, T]) - link1_lhs;

    let records = vec![
        structural("link1-capacity", link1_lhs, link1_rhs),
        structural("link2-capacity", link2_lhs, link2_rhs),
        rate_bound("r01-bound", ConstraintKind::RateR01, r01),
    ];
    Ok(ConstraintReport::from_records(records, tol))
}

/// Evaluates the perfect-channel, unlimited-shared-randomness specialization
/// of the cribbing region: three channel-entropy feasibility constraints.
/// Requires Yt = (Xt1, Xt2) exactly.
pub fn crib_feasibility_evaluate(joint: &JointPmf, tol: f64) -> Result<ConstraintReport> {
    let sizes = Alphabets::of_joint(joint)?;
    if sizes.yt != sizes.xt1 * sizes.xt2 {
        return Err(RegionError::PerfectChannelRequired);
    }
    DeterministicLinks::identity(sizes.xt1, sizes.xt2)
        .verify_joint(joint)
        .map_err(|_| RegionError::PerfectChannelRequired)?;
    use names::*;
    let mut e = EntropyCache::new(joint);

    let lhs1 = e.hc(&[XT1], &[T]);
    let rhs1 = e.cmi(&[U1, XT1], &[X1, XT2], &[T]) - e.cmi(&[U1], &[U2, XT2], &[XT1, T]);
    let lhs2 = e.hc(&[XT2], &[T]);
    let rhs2 = e.cmi(&[U2, XT2], &[X2], &[T]) - e.cmi(&[U2], &[U1, XT1], &[XT2, T]);
    let lhs12 = e.hc(&[XT1, XT2], &[T]);
    let rhs12 = e.cmi(&[U2, XT2], &[X2], &[T]) - e.cmi(&[U2, XT2], &[U1, XT1], &[T])
        + e.cmi(&[U1, XT1], &[X1, XT2], &[T]);

    let records = vec![
        structural("chan1-entropy", lhs1, rhs1),
        structural("chan2-entropy", lhs2, rhs2),
        structural("chan-pair-entropy", lhs12, rhs12),
    ];
    Ok(ConstraintReport::from_records(records, tol))
}

/// Provably sufficient auxiliary-alphabet sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CardinalityCaps {
    pub u1: usize,
    pub u2: usize,
    pub t: usize,
}

/// |U1| <= |X1||X2||W||Xt1||Xt2||Yt||Y|, |U2| <= |U1| times the same
/// product, |T| <= 3.
pub fn cardinality_caps(target: &TargetSpec, xt1: usize, xt2: usize, yt: usize) -> CardinalityCaps {
    let (x1, x2, w, y) = target.sizes();
    let product = x1
        .saturating_mul(x2)
        .saturating_mul(w)
        .saturating_mul(xt1)
        .saturating_mul(xt2)
        .saturating_mul(yt)
        .saturating_mul(y);
    CardinalityCaps { u1: product, u2: product.saturating_mul(product), t: 3 }
}

/// The fixed resource channel of a search problem.
#[derive(Debug, Clone)]
pub enum ChannelSpec {
    /// Arbitrary memoryless channel p(yt | xt1, xt2).
    Kernel(ConditionalKernel),
    /// Two deterministic per-encoder links.
    Links(DeterministicLinks),
}

impl ChannelSpec {
    pub fn kernel(&self) -> ConditionalKernel {
        match self {
            ChannelSpec::Kernel(k) => k.clone(),
            ChannelSpec::Links(l) => l.channel(),
        }
    }

    pub fn links(&self) -> Option<&DeterministicLinks> {
        match self {
            ChannelSpec::Links(l) => Some(l),
            ChannelSpec::Kernel(_) => None,
        }
    }

    pub fn xt1_size(&self) -> usize {
        match self {
            ChannelSpec::Kernel(k) => k.inputs()[0].size,
            ChannelSpec::Links(l) => l.xt1_size(),
        }
    }

    pub fn xt2_size(&self) -> usize {
        match self {
            ChannelSpec::Kernel(k) => k.inputs()[1].size,
            ChannelSpec::Links(l) => l.xt2_size(),
        }
    }

    pub fn yt_size(&self) -> usize {
        match self {
            ChannelSpec::Kernel(k) => k.outputs()[0].size,
            ChannelSpec::Links(l) => l.yt_size(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Crib,
    NoCrib,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchObjective {
    /// Minimize the R01 lower bound (ties broken toward small R02).
    MinR01,
    /// Minimize min_r01 + w02 * min_r02; used to trace the rate frontier.
    WeightedRates { w02: f64 },
    /// Minimize H(Xt1 | T) subject to feasibility; traces the channel
    /// resource needed on encoder 1's link.
    ChannelInput1Entropy,
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub card_u1: usize,
    pub card_u2: usize,
    pub card_t: usize,
    pub restarts: usize,
    /// Coordinate passes per penalty stage.
    pub max_passes: usize,
    pub step_init: f64,
    pub step_decay: f64,
    /// Base weight of the quadratic marginal / feasibility penalty; later
    /// stages multiply it by 100 and 10000.
    pub penalty_weight: f64,
    pub seed: u64,
    /// Hard verification tolerance for marginal match and structural slacks.
    pub tol: f64,
    pub rel_improvement: f64,
    pub objective: SearchObjective,
    /// After descent, sweep rows against exact point masses; deterministic
    /// witnesses become reachable exactly.
    pub vertex_refine: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            card_u1: 4,
            card_u2: 2,
            card_t: 1,
            restarts: 200,
            max_passes: 12,
            step_init: 0.8,
            step_decay: 0.85,
            penalty_weight: 1e3,
            seed: 0,
            tol: 1e-6,
            rel_improvement: 1e-7,
            objective: SearchObjective::MinR01,
            vertex_refine: true,
        }
    }
}

/// A concrete factorization found by the search.
#[derive(Debug, Clone)]
pub enum WitnessKernels {
    Crib(CribFactorization),
    NoCrib(NoCribFactorization),
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Whether any restart produced a hard-verified witness.
    pub found: bool,
    /// Rate bounds of the best witness (zeros when none was found).
    pub rate: RatePoint,
    pub objective_value: f64,
    pub witness: Option<WitnessKernels>,
    pub report: Option<ConstraintReport>,
    pub marginal: Option<MarginalMatch>,
    /// Best marginal deviation seen over all restarts.
    pub best_deviation: f64,
    pub restarts: usize,
    pub warnings: Vec<String>,
}

struct Block {
    rows: usize,
    width: usize,
}

struct ParamSpace {
    blocks: Vec<Block>,
}

impl ParamSpace {
    fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.rows * b.width).sum()
    }

    fn tables_from(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut offset = 0;
        for b in &self.blocks {
            let mut table = vec![0.0; b.rows * b.width];
            for r in 0..b.rows {
                let lo = offset + r * b.width;
                optim::softmax_into(
                    &theta[lo..lo + b.width],
                    &mut table[r * b.width..(r + 1) * b.width],
                );
            }
            offset += b.rows * b.width;
            out.push(table);
        }
        out
    }
}

struct Problem<'a> {
    target: &'a TargetSpec,
    channel_kernel: ConditionalKernel,
    links: Option<&'a DeterministicLinks>,
    mode: SearchMode,
    sizes: Alphabets,
    space: ParamSpace,
    objective: SearchObjective,
}

impl<'a> Problem<'a> {
    fn new(
        target: &'a TargetSpec,
        channel: &'a ChannelSpec,
        cfg: &SearchConfig,
        mode: SearchMode,
    ) -> Result<Self> {
        if cfg.card_u1 == 0 || cfg.card_u2 == 0 || cfg.card_t == 0 || cfg.restarts == 0 {
            return Err(RegionError::BadSearchConfig);
        }
        let links = channel.links();
        if mode == SearchMode::NoCrib && links.is_none() {
            return Err(RegionError::LinksRequired);
        }
        let (x1, x2, w, y) = target.sizes();
        let sizes = Alphabets {
            x1,
            x2,
            w,
            t: cfg.card_t,
            u1: cfg.card_u1,
            u2: cfg.card_u2,
            xt1: channel.xt1_size(),
            xt2: channel.xt2_size(),
            yt: channel.yt_size(),
            y,
        };
        let blocks = match mode {
            SearchMode::Crib => vec![
                Block { rows: 1, width: sizes.t },
                Block { rows: sizes.x2 * sizes.t, width: sizes.u2 * sizes.xt2 },
                Block { rows: sizes.x1 * sizes.xt2 * sizes.t, width: sizes.u1 * sizes.xt1 },
                Block { rows: sizes.u1 * sizes.u2 * sizes.w * sizes.yt * sizes.t, width: sizes.y },
            ],
            SearchMode::NoCrib => vec![
                Block { rows: 1, width: sizes.t },
                Block { rows: sizes.x1 * sizes.t, width: sizes.u1 },
                Block { rows: sizes.u1 * sizes.x1 * sizes.t, width: sizes.xt1 },
                Block { rows: sizes.x2 * sizes.t, width: sizes.u2 },
                Block { rows: sizes.u2 * sizes.x2 * sizes.t, width: sizes.xt2 },
                Block { rows: sizes.u1 * sizes.u2 * sizes.w * sizes.yt * sizes.t, width: sizes.y },
            ],
        };
        Ok(Problem {
            target,
            channel_kernel: channel.kernel(),
            links,
            mode,
            sizes,
            space: ParamSpace { blocks },
            objective: cfg.objective,
        })
    }

    fn witness_from_tables(&self, tables: &[Vec<f64>]) -> Result<WitnessKernels> {
        let s = &self.sizes;
        use names::*;
        let decoder_inputs = [(U1, s.u1), (U2, s.u2), (W, s.w), (YT, s.yt), (T, s.t)];
        Ok(match self.mode {
            SearchMode::Crib => WitnessKernels::Crib(CribFactorization {
                t_probs: tables[0].clone(),
                enc2: factor::kernel(
                    &[(X2, s.x2), (T, s.t)],
                    &[(U2, s.u2), (XT2, s.xt2)],
                    tables[1].clone(),
                )?,
                enc1: factor::kernel(
                    &[(X1, s.x1), (XT2, s.xt2), (T, s.t)],
                    &[(U1, s.u1), (XT1, s.xt1)],
                    tables[2].clone(),
                )?,
                channel: self.channel_kernel.clone(),
                decoder: factor::kernel(&decoder_inputs, &[(Y, s.y)], tables[3].clone())?,
            }),
            SearchMode::NoCrib => WitnessKernels::NoCrib(NoCribFactorization {
                t_probs: tables[0].clone(),
                enc1_u: factor::kernel(&[(X1, s.x1), (T, s.t)], &[(U1, s.u1)], tables[1].clone())?,
                enc1_x: factor::kernel(
                    &[(U1, s.u1), (X1, s.x1), (T, s.t)],
                    &[(XT1, s.xt1)],
                    tables[2].clone(),
                )?,
                enc2_u: factor::kernel(&[(X2, s.x2), (T, s.t)], &[(U2, s.u2)], tables[3].clone())?,
                enc2_x: factor::kernel(
                    &[(U2, s.u2), (X2, s.x2), (T, s.t)],
                    &[(XT2, s.xt2)],
                    tables[4].clone(),
                )?,
                channel: self.channel_kernel.clone(),
                decoder: factor::kernel(&decoder_inputs, &[(Y, s.y)], tables[5].clone())?,
            }),
        })
    }

    fn build(&self, witness: &WitnessKernels) -> Result<JointPmf> {
        Ok(match witness {
            WitnessKernels::Crib(f) => build_cribbing_joint(self.target, f)?,
            WitnessKernels::NoCrib(f) => build_nocrib_joint(self.target, f)?,
        })
    }

    fn evaluate_joint(&self, joint: &JointPmf, tol: f64) -> Result<(ConstraintReport, f64)> {
        let report = match self.mode {
            SearchMode::Crib => crib_region_evaluate(joint, tol)?,
            SearchMode::NoCrib => {
                nocrib_region_evaluate(joint, self.links.expect("checked at construction"), tol)?
            }
        };
        let objective = match self.objective {
            SearchObjective::MinR01 => report.min_r01 + 1e-6 * report.min_r02,
            SearchObjective::WeightedRates { w02 } => report.min_r01 + w02 * report.min_r02,
            SearchObjective::ChannelInput1Entropy => joint.entropy(&[names::XT1], &[names::T])?,
        };
        Ok((report, objective))
    }

    /// Penalized score of one candidate; infinity when construction fails.
    fn score(&self, tables: &[Vec<f64>], lambda: f64, tol: f64) -> f64 {
        let Ok(witness) = self.witness_from_tables(tables) else {
            return f64::INFINITY;
        };
        let Ok(joint) = self.build(&witness) else {
            return f64::INFINITY;
        };
        let Ok(m) = check_marginal_match(&joint, self.target, tol) else {
            return f64::INFINITY;
        };
        let Ok((report, objective)) = self.evaluate_joint(&joint, tol) else {
            return f64::INFINITY;
        };
        let infeas: f64 = report
            .constraints
            .iter()
            .filter(|r| r.kind == ConstraintKind::Structural)
            .map(|r| (-r.slack).max(0.0).powi(2))
            .sum();
        objective + lambda * (m.max_deviation.powi(2) + infeas)
    }
}

struct Candidate {
    tables: Vec<Vec<f64>>,
    objective: f64,
    deviation: f64,
    verified: bool,
}

fn assess(problem: &Problem, tables: Vec<Vec<f64>>, tol: f64) -> Option<Candidate> {
    let witness = problem.witness_from_tables(&tables).ok()?;
    let joint = problem.build(&witness).ok()?;
    let m = check_marginal_match(&joint, problem.target, tol).ok()?;
    let (report, objective) = problem.evaluate_joint(&joint, tol).ok()?;
    let min_slack = report.structural_min_slack();
    Some(Candidate {
        tables,
        objective,
        deviation: m.max_deviation,
        verified: m.max_deviation <= tol && min_slack >= -tol,
    })
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    match (a.verified, b.verified) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => a.objective < b.objective,
        (false, false) => (a.deviation, a.objective) < (b.deviation, b.objective),
    }
}

/// Row-wise sweep over exact point masses, keeping each replacement only if
/// it improves the penalized score.
fn vertex_refine(problem: &Problem, tables: &mut [Vec<f64>], lambda: f64, tol: f64) {
    let mut best = problem.score(tables, lambda, tol);
    for _sweep in 0..3 {
        let mut improved = false;
        for b in 0..tables.len() {
            let width = problem.space.blocks[b].width;
            let rows = problem.space.blocks[b].rows;
            for r in 0..rows {
                let mut best_row: Vec<f64> = tables[b][r * width..(r + 1) * width].to_vec();
                for v in 0..width {
                    for (j, slot) in tables[b][r * width..(r + 1) * width].iter_mut().enumerate() {
                        *slot = if j == v { 1.0 } else { 0.0 };
                    }
                    let s = problem.score(tables, lambda, tol);
                    if s < best {
                        best = s;
                        best_row = tables[b][r * width..(r + 1) * width].to_vec();
                        improved = true;
                    }
                }
                tables[b][r * width..(r + 1) * width].copy_from_slice(&best_row);
            }
        }
        if !improved {
            break;
        }
    }
}

pub(crate) fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Multi-restart search for a feasible factorization minimizing the
/// configured objective. Every returned witness is re-verified through the
/// public evaluators; when no restart verifies, the outcome reports the best
/// marginal deviation reached instead of failing.
pub fn min_r01_search(
    target: &TargetSpec,
    channel: &ChannelSpec,
    cfg: &SearchConfig,
    mode: SearchMode,
) -> Result<SearchOutcome> {
    let problem = Problem::new(target, channel, cfg, mode)?;
    let mut warnings = Vec::new();
    let caps = cardinality_caps(target, problem.sizes.xt1, problem.sizes.xt2, problem.sizes.yt);
    if cfg.card_u1 < caps.u1 || cfg.card_u2 < caps.u2 {
        warnings.push(format!(
            "auxiliary cardinalities ({}, {}) are below the sufficient caps ({}, {}); the search may miss region points",
            cfg.card_u1, cfg.card_u2, caps.u1, caps.u2
        ));
    }
    if cfg.card_u1 > caps.u1 || cfg.card_u2 > caps.u2 || cfg.card_t > caps.t {
        warnings.push(format!(
            "auxiliary cardinalities ({}, {}, {}) exceed the sufficient caps ({}, {}, {})",
            cfg.card_u1, cfg.card_u2, cfg.card_t, caps.u1, caps.u2, caps.t
        ));
    }

    let n_params = problem.space.len();
    let stages = [cfg.penalty_weight, cfg.penalty_weight * 1e2, cfg.penalty_weight * 1e4];
    let top_lambda = stages[stages.len() - 1];
    let opts = DescentOptions {
        max_passes: cfg.max_passes,
        step_init: cfg.step_init,
        step_decay: cfg.step_decay,
        rel_improvement: cfg.rel_improvement,
    };

    let mut best: Option<Candidate> = None;
    let mut best_deviation = f64::INFINITY;
    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, restart as u64));
        let sigma = [0.5, 2.0, 6.0][restart % 3];
        let mut theta: Vec<f64> = (0..n_params).map(|_| rng.random_range(-sigma..=sigma)).collect();
        for &lambda in &stages {
            optim::coordinate_descent(&mut theta, &opts, |t| {
                problem.score(&problem.space.tables_from(t), lambda, cfg.tol)
            });
        }
        let tables = problem.space.tables_from(&theta);
        let mut snapped = tables.clone();
        for (b, t) in snapped.iter_mut().enumerate() {
            optim::snap_rows(t, problem.space.blocks[b].width, 1e-9);
        }
        let mut refined = snapped.clone();
        if cfg.vertex_refine {
            vertex_refine(&problem, &mut refined, top_lambda, cfg.tol);
        }
        for tables in [tables, snapped, refined] {
            if let Some(c) = assess(&problem, tables, cfg.tol) {
                best_deviation = best_deviation.min(c.deviation);
                if best.as_ref().map_or(true, |b| better(&c, b)) {
                    best = Some(c);
                }
            }
        }
    }

    let best = match best {
        Some(b) => b,
        None => {
            return Ok(SearchOutcome {
                found: false,
                rate: RatePoint::new(0.0, 0.0),
                objective_value: f64::INFINITY,
                witness: None,
                report: None,
                marginal: None,
                best_deviation,
                restarts: cfg.restarts,
                warnings,
            })
        }
    };

    // Final validation pass on the returned witness, never trusting anything
    // tracked during the descent.
    let witness = problem.witness_from_tables(&best.tables)?;
    let joint = problem.build(&witness)?;
    let marginal = check_marginal_match(&joint, target, cfg.tol)?;
    let (report, objective_value) = problem.evaluate_joint(&joint, cfg.tol)?;
    let found = marginal.pass && report.feasible;
    Ok(SearchOutcome {
        found,
        rate: RatePoint::new(report.min_r01, report.min_r02),
        objective_value,
        witness: Some(witness),
        report: Some(report),
        marginal: Some(marginal),
        best_deviation,
        restarts: cfg.restarts,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// The point dominates a hard-verified witness.
    Feasible,
    /// Certified unachievable by a converse; the inner-bound search never
    /// emits this on its own.
    Infeasible,
    /// No verified witness covers the point within the search budget.
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Feasible => "feasible",
            Verdict::Infeasible => "infeasible",
            Verdict::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub rate: RatePoint,
    pub verdict: Verdict,
    /// Margin against the best witness (negative: nearest miss).
    pub best_slack: Option<f64>,
    /// Index into [`SweepResult::witnesses`].
    pub witness: Option<usize>,
}

#[derive(Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub witnesses: Vec<(WitnessKernels, ConstraintReport)>,
}

/// Feasibility sweep over a rate grid. Runs frontier searches with three
/// rate weightings, then grades every grid point against the verified
/// witnesses found. Points no witness covers come back [`Verdict::Unknown`]:
/// an inner-bound search cannot certify infeasibility.
pub fn region_sweep(
    target: &TargetSpec,
    channel: &ChannelSpec,
    grid: &[RatePoint],
    cfg: &SearchConfig,
    mode: SearchMode,
) -> Result<SweepResult> {
    let mut witnesses = Vec::new();
    for (i, w02) in [1.0, 1e-3, 1e3].into_iter().enumerate() {
        let sub = SearchConfig {
            objective: SearchObjective::WeightedRates { w02 },
            restarts: (cfg.restarts / 3).max(1),
            seed: mix(cfg.seed, 1000 + i as u64),
            ..cfg.clone()
        };
        let outcome = min_r01_search(target, channel, &sub, mode)?;
        if outcome.found {
            witnesses.push((outcome.witness.unwrap(), outcome.report.unwrap()));
        }
    }
    let rows = grid
        .iter()
        .map(|&rate| {
            let mut best_slack: Option<f64> = None;
            let mut covering: Option<usize> = None;
            for (i, (_, report)) in witnesses.iter().enumerate() {
                let margin = report.rate_margin(&rate);
                if best_slack.map_or(true, |b| margin > b) {
                    best_slack = Some(margin);
                }
                if covering.is_none() && report.admits(&rate) {
                    covering = Some(i);
                }
            }
            let verdict = if covering.is_some() { Verdict::Feasible } else { Verdict::Unknown };
            SweepRow { rate, verdict, best_slack, witness: covering }
        })
        .collect();
    Ok(SweepResult { rows, witnesses })
}
