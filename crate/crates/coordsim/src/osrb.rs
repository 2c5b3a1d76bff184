//! Executable random-binning coordination protocol at small blocklength.
//!
//! Given a cribbing-chain single-letter joint (with a trivial time-sharing
//! alphabet), the protocol draws i.i.d. source blocks, assigns every
//! auxiliary sequence u^n two uniform bin indices (K, F) through a seeded
//! pseudorandom function, lets each encoder sample its auxiliary block from
//! the single-letter conditional restricted to its bin, passes the channel
//! inputs through the memoryless channel, recovers (u1^n, u2^n) with a
//! maximum-likelihood Slepian-Wolf decoder over the bins, and synthesizes
//! y^n from the decoder kernel. The measured quantities are the decode-error
//! rate and total-variation distances between the induced law of
//! (X1^n, X2^n, W^n, Y^n) and the i.i.d. target.
//!
//! [`rate_window`] evaluates the eight entropy conditions delimiting the
//! bin-rate box in which the protocol provably drives the block law to the
//! target: per-encoder binning caps, Slepian-Wolf floors, and caps on the
//! extra randomness F so it can be eliminated afterwards.

use crate::factor::{names, Alphabets, FactorError};
use crate::prob::{ConditionalKernel, JointPmf, ProbError};
use crate::regions::mix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Cap on the number of elementary states the exact mode may enumerate.
pub const ENUMERATION_CAP: u64 = 1 << 26;

/// Cap on |U|^n per encoder (the inverse bin index stores every sequence).
pub const MAX_SEQUENCES: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum OsrbError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("protocol joints need a unary time-sharing alphabet, got |T| = {0}")]
    TimeSharing(usize),
    #[error("rates and epsilon must be non-negative, got {0}")]
    Negative(f64),
    #[error("{0} sequences exceed the cap of {1}")]
    TooManySequences(u64, u64),
    #[error("exact enumeration exceeded the {0}-state cap")]
    EnumerationTooLarge(u64),
    #[error("blocklength must be at least 1")]
    ZeroBlocklength,
    #[error("trial count must be at least 1")]
    ZeroTrials,
}

pub type Result<T> = std::result::Result<T, OsrbError>;

/// Bin rates in bits per symbol: (R01, Rt1) for encoder 1's (K1, F1) and
/// (R02, Rt2) for encoder 2's (K2, F2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateQuad {
    pub r01: f64,
    pub rt1: f64,
    pub r02: f64,
    pub rt2: f64,
}

impl RateQuad {
    pub fn new(r01: f64, rt1: f64, r02: f64, rt2: f64) -> Self {
        RateQuad { r01, rt1, r02, rt2 }
    }

    pub fn zero() -> Self {
        RateQuad::new(0.0, 0.0, 0.0, 0.0)
    }
}

/// The eight entropy bounds delimiting the workable bin-rate box.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowBounds {
    /// R01 + Rt1 <= H(U1 | X1, Xt2)
    pub bin1: f64,
    /// R02 + Rt2 <= H(U2 | X2)
    pub bin2: f64,
    /// R01 + Rt1 >= H(U1 | U2, W, Yt)
    pub sw1: f64,
    /// R02 + Rt2 >= H(U2 | U1, W, Yt)
    pub sw2: f64,
    /// sum of both >= H(U1, U2 | W, Yt)
    pub sw12: f64,
    /// Rt1 <= H(U1 | X1, X2, W, Y)
    pub f1: f64,
    /// Rt2 <= H(U2 | X1, X2, W, Y)
    pub f2: f64,
    /// Rt1 + Rt2 <= H(U1, U2 | X1, X2, W, Y)
    pub f12: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateWindowReport {
    pub bounds: WindowBounds,
    pub nonempty: bool,
    /// A rate selection strictly inside the window when one exists
    /// (midpoints of the surviving intervals, F rates as large as allowed).
    pub selection: Option<RateQuad>,
    /// Slack of each condition at the selection (or at zero rates when the
    /// window is empty); negative slack identifies the violated conditions.
    pub slacks: Vec<(String, f64)>,
}

fn window_slacks(b: &WindowBounds, r: &RateQuad) -> Vec<(String, f64)> {
    let s1 = r.r01 + r.rt1;
    let s2 = r.r02 + r.rt2;
    vec![
        ("bin1-cap".to_string(), b.bin1 - s1),
        ("bin2-cap".to_string(), b.bin2 - s2),
        ("sw1-floor".to_string(), s1 - b.sw1),
        ("sw2-floor".to_string(), s2 - b.sw2),
        ("sw12-floor".to_string(), s1 + s2 - b.sw12),
        ("f1-cap".to_string(), b.f1 - r.rt1),
        ("f2-cap".to_string(), b.f2 - r.rt2),
        ("f12-cap".to_string(), b.f12 - (r.rt1 + r.rt2)),
    ]
}

/// Evaluates the bin-rate window conditions on a cribbing-chain joint.
pub fn rate_window(joint: &JointPmf) -> Result<RateWindowReport> {
    Alphabets::of_joint(joint)?;
    use names::*;
    let h = |t: &[&str], g: &[&str]| joint.entropy(t, g).map_err(OsrbError::from);
    let bounds = WindowBounds {
        bin1: h(&[U1], &[X1, XT2])?,
        bin2: h(&[U2], &[X2])?,
        sw1: h(&[U1], &[U2, W, YT])?,
        sw2: h(&[U2], &[U1, W, YT])?,
        sw12: h(&[U1, U2], &[W, YT])?,
        f1: h(&[U1], &[X1, X2, W, Y])?,
        f2: h(&[U2], &[X1, X2, W, Y])?,
        f12: h(&[U1, U2], &[X1, X2, W, Y])?,
    };
    const EPS: f64 = 1e-12;
    let lo1 = bounds.sw1.max(0.0);
    let lo2 = bounds.sw2.max(0.0);
    let nonempty =
        lo1 <= bounds.bin1 + EPS && lo2 <= bounds.bin2 + EPS && bounds.bin1 + bounds.bin2 >= bounds.sw12 - EPS;
    let selection = if nonempty {
        let lo1 = lo1.max(bounds.sw12 - bounds.bin2).min(bounds.bin1);
        let s1 = 0.5 * (lo1 + bounds.bin1);
        let lo2 = lo2.max(bounds.sw12 - s1).min(bounds.bin2);
        let s2 = 0.5 * (lo2 + bounds.bin2);
        let rt1 = bounds.f1.min(s1).min(bounds.f12).max(0.0);
        let rt2 = bounds.f2.min(s2).min(bounds.f12 - rt1).max(0.0);
        Some(RateQuad::new((s1 - rt1).max(0.0), rt1, (s2 - rt2).max(0.0), rt2))
    } else {
        None
    };
    let slacks = window_slacks(&bounds, &selection.unwrap_or_else(RateQuad::zero));
    Ok(RateWindowReport { bounds, nonempty, selection, slacks })
}

/// Correction term 2 sqrt(eps) (H + log2 |S| + log2 (1 / sqrt(eps))) that
/// converts a block total-variation bound into a per-letter mutual
/// information bound; continuously extended to 0 at eps = 0.
pub fn tv_mi_correction(eps: f64, entropy_bits: f64, alphabet_size: u64) -> Result<f64> {
    if eps < 0.0 {
        return Err(OsrbError::Negative(eps));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    let root = eps.sqrt();
    Ok(2.0 * root * (entropy_bits + (alphabet_size as f64).log2() + (1.0 / root).log2()))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Number of index bits for rate `r` at blocklength `n`: ceil(n r), with a
/// tiny relief so 2.0000000001 does not round up an extra bit.
pub fn rate_bits(n: usize, rate: f64) -> Result<u32> {
    if rate < 0.0 {
        return Err(OsrbError::Negative(rate));
    }
    Ok((n as f64 * rate - 1e-9).ceil().max(0.0) as u32)
}

/// Bin maps of one encoder: every sequence in [0, |U|^n) gets a uniform
/// (K, F) pair through a seeded pseudorandom function, plus the inverse
/// index from bins back to member sequences.
#[derive(Debug, Clone)]
pub struct BinningScheme {
    pub n: usize,
    pub symbol_count: usize,
    pub k_bits: u32,
    pub f_bits: u32,
    seed: u64,
    inverse: Vec<Vec<u32>>,
}

impl BinningScheme {
    pub fn sequence_count(&self) -> u64 {
        (self.symbol_count as u64).pow(self.n as u32)
    }

    pub fn k_count(&self) -> u32 {
        1 << self.k_bits
    }

    pub fn f_count(&self) -> u32 {
        1 << self.f_bits
    }

    pub fn k_of(&self, seq: u64) -> u32 {
        (splitmix64(self.seed ^ splitmix64(2 * seq)) & ((1 << self.k_bits) - 1) as u64) as u32
    }

    pub fn f_of(&self, seq: u64) -> u32 {
        (splitmix64(self.seed ^ splitmix64(2 * seq + 1)) & ((1 << self.f_bits) - 1) as u64) as u32
    }

    pub fn bin_members(&self, k: u32, f: u32) -> &[u32] {
        &self.inverse[((k as usize) << self.f_bits) | f as usize]
    }
}

/// Assigns bins for one encoder. Deterministic given the seed.
pub fn assign_bins(
    seed: u64,
    symbol_count: usize,
    n: usize,
    r0: f64,
    rt: f64,
) -> Result<BinningScheme> {
    if n == 0 {
        return Err(OsrbError::ZeroBlocklength);
    }
    let seqs = (symbol_count as u64)
        .checked_pow(n as u32)
        .filter(|&s| s <= MAX_SEQUENCES)
        .ok_or(OsrbError::TooManySequences(u64::MAX, MAX_SEQUENCES))?;
    let k_bits = rate_bits(n, r0)?;
    let f_bits = rate_bits(n, rt)?;
    if k_bits + f_bits > 26 {
        return Err(OsrbError::TooManySequences(1 << (k_bits + f_bits), MAX_SEQUENCES));
    }
    let mut scheme = BinningScheme {
        n,
        symbol_count,
        k_bits,
        f_bits,
        seed,
        inverse: vec![Vec::new(); 1 << (k_bits + f_bits)],
    };
    for seq in 0..seqs {
        let k = scheme.k_of(seq);
        let f = scheme.f_of(seq);
        scheme.inverse[((k as usize) << f_bits) | f as usize].push(seq as u32);
    }
    Ok(scheme)
}

fn seq_symbols(mut seq: u64, symbol_count: usize, out: &mut [u8]) {
    for slot in out.iter_mut().rev() {
        *slot = (seq % symbol_count as u64) as u8;
        seq /= symbol_count as u64;
    }
}

/// Single-letter machinery of one protocol instance, extracted from a
/// cribbing-chain joint with |T| = 1.
#[derive(Debug, Clone)]
pub struct ProtocolSpec {
    pub sizes: Alphabets,
    /// p(x1, x2, w) support cells with cumulative probabilities.
    source_cells: Vec<(u8, u8, u8)>,
    source_cum: Vec<f64>,
    enc2_u: ConditionalKernel,
    enc2_x: ConditionalKernel,
    enc1_u: ConditionalKernel,
    enc1_x: ConditionalKernel,
    channel: ConditionalKernel,
    decoder: ConditionalKernel,
    /// p(u1, u2, w, yt) scores for the Slepian-Wolf decoder.
    sw: JointPmf,
    /// q(x1, x2, w, y), the single-letter target.
    target: JointPmf,
}

impl ProtocolSpec {
    pub fn from_joint(joint: &JointPmf) -> Result<Self> {
        let sizes = Alphabets::of_joint(joint)?;
        if sizes.t != 1 {
            return Err(OsrbError::TimeSharing(sizes.t));
        }
        use names::*;
        let j = joint.marginalize(&[X1, X2, W, U1, U2, XT1, XT2, YT, Y])?;
        let source = j.marginalize(&[X1, X2, W])?;
        let mut source_cells = Vec::new();
        let mut source_cum = Vec::new();
        let mut acc = 0.0;
        for x1 in 0..sizes.x1 {
            for x2 in 0..sizes.x2 {
                for w in 0..sizes.w {
                    let p = source.prob(&[x1, x2, w]);
                    if p > 0.0 {
                        acc += p;
                        source_cells.push((x1 as u8, x2 as u8, w as u8));
                        source_cum.push(acc);
                    }
                }
            }
        }
        Ok(ProtocolSpec {
            sizes,
            source_cells,
            source_cum,
            enc2_u: j.extract_kernel(&[U2], &[X2])?,
            enc2_x: j.extract_kernel(&[XT2], &[U2, X2])?,
            enc1_u: j.extract_kernel(&[U1], &[X1, XT2])?,
            enc1_x: j.extract_kernel(&[XT1], &[U1, X1, XT2])?,
            channel: j.extract_kernel(&[YT], &[XT1, XT2])?,
            decoder: j.extract_kernel(&[Y], &[U1, U2, W, YT])?,
            sw: j.marginalize(&[U1, U2, W, YT])?.reorder(&[U1, U2, W, YT])?,
            target: j.marginalize(&[X1, X2, W, Y])?,
        })
    }

    pub fn channel(&self) -> &ConditionalKernel {
        &self.channel
    }

    pub fn target(&self) -> &JointPmf {
        &self.target
    }

    fn sw_score(&self, u1: u8, u2: u8, w: u8, yt: u8) -> f64 {
        let s = &self.sizes;
        let idx = ((u1 as usize * s.u2 + u2 as usize) * s.w + w as usize) * s.yt + yt as usize;
        self.sw.probs()[idx]
    }

    fn target_prob(&self, x1: u8, x2: u8, w: u8, y: u8) -> f64 {
        let s = &self.sizes;
        let idx = ((x1 as usize * s.x2 + x2 as usize) * s.w + w as usize) * s.y + y as usize;
        self.target.probs()[idx]
    }
}

fn sample_row(row: &[f64], rng: &mut ChaCha8Rng) -> u8 {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i as u8;
        }
    }
    (row.len() - 1) as u8
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncodeOutcome {
    Encoded { u: Vec<u8>, x: Vec<u8> },
    /// The bin holds no sequence compatible with the observed source block.
    Abort,
}

fn bin_weights(
    members: &[u32],
    symbol_count: usize,
    n: usize,
    mut per_position: impl FnMut(usize, u8) -> f64,
) -> (Vec<f64>, f64) {
    let mut weights = Vec::with_capacity(members.len());
    let mut syms = vec![0u8; n];
    let mut total = 0.0;
    for &seq in members {
        seq_symbols(seq as u64, symbol_count, &mut syms);
        let mut w = 1.0;
        for (i, &u) in syms.iter().enumerate() {
            w *= per_position(i, u);
            if w == 0.0 {
                break;
            }
        }
        weights.push(w);
        total += w;
    }
    (weights, total)
}

/// Encoder 2: samples u2^n from the single-letter law restricted to bin
/// (k2, f2), then the channel block xt2^n.
pub fn encoder_sample_2(
    spec: &ProtocolSpec,
    bins: &BinningScheme,
    k2: u32,
    f2: u32,
    x2_block: &[u8],
    rng: &mut ChaCha8Rng,
) -> EncodeOutcome {
    let s = &spec.sizes;
    let members = bins.bin_members(k2, f2);
    let (weights, total) = bin_weights(members, s.u2, bins.n, |i, u| {
        spec.enc2_u.row(x2_block[i] as usize)[u as usize]
    });
    if total <= 0.0 || members.is_empty() {
        return EncodeOutcome::Abort;
    }
    let draw: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = members.len() - 1;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            chosen = i;
            break;
        }
    }
    let mut u = vec![0u8; bins.n];
    seq_symbols(members[chosen] as u64, s.u2, &mut u);
    let x: Vec<u8> = (0..bins.n)
        .map(|i| {
            let row = spec
                .enc2_x
                .row(u[i] as usize * s.x2 + x2_block[i] as usize);
            sample_row(row, rng)
        })
        .collect();
    EncodeOutcome::Encoded { u, x }
}

/// Encoder 1: like encoder 2, but the single-letter law conditions on the
/// cribbed channel block xt2^n as well.
pub fn encoder_sample_1(
    spec: &ProtocolSpec,
    bins: &BinningScheme,
    k1: u32,
    f1: u32,
    x1_block: &[u8],
    xt2_block: &[u8],
    rng: &mut ChaCha8Rng,
) -> EncodeOutcome {
    let s = &spec.sizes;
    let members = bins.bin_members(k1, f1);
    let (weights, total) = bin_weights(members, s.u1, bins.n, |i, u| {
        spec.enc1_u.row(x1_block[i] as usize * s.xt2 + xt2_block[i] as usize)[u as usize]
    });
    if total <= 0.0 || members.is_empty() {
        return EncodeOutcome::Abort;
    }
    let draw: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = members.len() - 1;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            chosen = i;
            break;
        }
    }
    let mut u = vec![0u8; bins.n];
    seq_symbols(members[chosen] as u64, s.u1, &mut u);
    let x: Vec<u8> = (0..bins.n)
        .map(|i| {
            let row = spec.enc1_x.row(
                (u[i] as usize * s.x1 + x1_block[i] as usize) * s.xt2 + xt2_block[i] as usize,
            );
            sample_row(row, rng)
        })
        .collect();
    EncodeOutcome::Encoded { u, x }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    Decoded { u1: Vec<u8>, u2: Vec<u8> },
    /// No strictly-positive unique maximizer among the bin candidates.
    Failed,
}

/// Maximum-likelihood Slepian-Wolf decoder over the two bins' candidate
/// lists: returns the unique maximizer of the product single-letter score
/// p(u1, u2, w, yt). A lone candidate pair is returned as-is; exact score
/// ties and all-zero scores are decode failures.
pub fn sw_decode(
    spec: &ProtocolSpec,
    bins1: &BinningScheme,
    k1: u32,
    f1: u32,
    bins2: &BinningScheme,
    k2: u32,
    f2: u32,
    w_block: &[u8],
    yt_block: &[u8],
) -> DecodeOutcome {
    let s = &spec.sizes;
    let n = bins1.n;
    let cand1 = bins1.bin_members(k1, f1);
    let cand2 = bins2.bin_members(k2, f2);
    if cand1.is_empty() || cand2.is_empty() {
        return DecodeOutcome::Failed;
    }
    let unpack = |seq: u32, count: usize| {
        let mut syms = vec![0u8; n];
        seq_symbols(seq as u64, count, &mut syms);
        syms
    };
    if cand1.len() == 1 && cand2.len() == 1 {
        return DecodeOutcome::Decoded {
            u1: unpack(cand1[0], s.u1),
            u2: unpack(cand2[0], s.u2),
        };
    }
    let list1: Vec<Vec<u8>> = cand1.iter().map(|&c| unpack(c, s.u1)).collect();
    let list2: Vec<Vec<u8>> = cand2.iter().map(|&c| unpack(c, s.u2)).collect();
    let mut best = 0.0f64;
    let mut arg: Option<(usize, usize)> = None;
    let mut tied = false;
    for (i1, u1) in list1.iter().enumerate() {
        for (i2, u2) in list2.iter().enumerate() {
            let mut score = 1.0f64;
            for i in 0..n {
                score *= spec.sw_score(u1[i], u2[i], w_block[i], yt_block[i]);
                if score == 0.0 {
                    break;
                }
            }
            if score > best {
                best = score;
                arg = Some((i1, i2));
                tied = false;
            } else if score == best && score > 0.0 {
                tied = true;
            }
        }
    }
    match arg {
        Some((i1, i2)) if !tied && best > 0.0 => DecodeOutcome::Decoded {
            u1: list1[i1].clone(),
            u2: list2[i2].clone(),
        },
        _ => DecodeOutcome::Failed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Full enumeration of every source block, bin index, and internal
    /// random choice; exact induced law.
    Exact,
    /// Seeded sampling of complete protocol trials.
    MonteCarlo,
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub n: usize,
    pub rates: RateQuad,
    pub seed: u64,
    /// Trials for Monte-Carlo mode (ignored in exact mode).
    pub trials: u64,
    pub mode: SimMode,
    /// Pin the extra shared randomness to fixed values instead of drawing
    /// them each trial.
    pub fixed_f: Option<(u32, u32)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub mode: SimMode,
    pub n: usize,
    /// Trials actually run (0 in exact mode).
    pub trials: u64,
    pub seed: u64,
    pub rates: RateQuad,
    pub k1_bits: u32,
    pub f1_bits: u32,
    pub k2_bits: u32,
    pub f2_bits: u32,
    pub decode_error_rate: f64,
    pub encoder_abort_rate: f64,
    /// TV between the position-averaged per-symbol law of (X1, X2, W, Y)
    /// and the single-letter target.
    pub tv_first_order: f64,
    /// Exact TV between the induced block law and the i.i.d. target
    /// (exact mode only).
    pub tv_block: Option<f64>,
    /// Plug-in estimate of the block TV from the empirical block law
    /// (Monte-Carlo mode; biased upward at small trial counts).
    pub tv_block_plugin: Option<f64>,
    pub warnings: Vec<String>,
}

struct BlockAccumulator<'a> {
    spec: &'a ProtocolSpec,
    n: usize,
    /// mass per (x1, x2, w, y) cell, averaged over positions
    first_order: Vec<f64>,
    /// mass per full block key
    blocks: BTreeMap<Vec<u8>, f64>,
    decode_error_mass: f64,
    abort_mass: f64,
    total_mass: f64,
}

impl<'a> BlockAccumulator<'a> {
    fn new(spec: &'a ProtocolSpec, n: usize) -> Self {
        let s = &spec.sizes;
        BlockAccumulator {
            spec,
            n,
            first_order: vec![0.0; s.x1 * s.x2 * s.w * s.y],
            blocks: BTreeMap::new(),
            decode_error_mass: 0.0,
            abort_mass: 0.0,
            total_mass: 0.0,
        }
    }

    fn block_key(&self, x1: &[u8], x2: &[u8], w: &[u8], y: &[u8]) -> Vec<u8> {
        let mut key = Vec::with_capacity(4 * self.n);
        key.extend_from_slice(x1);
        key.extend_from_slice(x2);
        key.extend_from_slice(w);
        key.extend_from_slice(y);
        key
    }

    fn record(&mut self, x1: &[u8], x2: &[u8], w: &[u8], y: &[u8], mass: f64) {
        let s = &self.spec.sizes;
        for i in 0..self.n {
            let idx = ((x1[i] as usize * s.x2 + x2[i] as usize) * s.w + w[i] as usize) * s.y
                + y[i] as usize;
            self.first_order[idx] += mass / self.n as f64;
        }
        *self.blocks.entry(self.block_key(x1, x2, w, y)).or_insert(0.0) += mass;
        self.total_mass += mass;
    }

    fn target_block_prob(&self, key: &[u8]) -> f64 {
        let n = self.n;
        let mut p = 1.0;
        for i in 0..n {
            p *= self
                .spec
                .target_prob(key[i], key[n + i], key[2 * n + i], key[3 * n + i]);
        }
        p
    }

    fn tv_first_order(&self) -> f64 {
        self.first_order
            .iter()
            .zip(self.spec.target.probs())
            .map(|(&p, &q)| (p / self.total_mass - q).abs())
            .sum()
    }

    fn tv_block(&self) -> f64 {
        let mut tv = 0.0;
        let mut q_seen = 0.0;
        for (key, &mass) in &self.blocks {
            let q = self.target_block_prob(key);
            tv += (mass / self.total_mass - q).abs();
            q_seen += q;
        }
        tv + (1.0 - q_seen).max(0.0)
    }
}

/// Runs the protocol. In Monte-Carlo mode, `cfg.trials` full trials are
/// sampled with per-trial seeded randomness; in exact mode the induced block
/// law is enumerated exactly over every source block, bin index, and
/// internal choice (subject to [`ENUMERATION_CAP`]).
pub fn run_protocol(spec: &ProtocolSpec, cfg: &ProtocolConfig) -> Result<SimulationReport> {
    if cfg.n == 0 {
        return Err(OsrbError::ZeroBlocklength);
    }
    if cfg.mode == SimMode::MonteCarlo && cfg.trials == 0 {
        return Err(OsrbError::ZeroTrials);
    }
    let s = &spec.sizes;
    let bins1 = assign_bins(mix(cfg.seed, 0xE1), s.u1, cfg.n, cfg.rates.r01, cfg.rates.rt1)?;
    let bins2 = assign_bins(mix(cfg.seed, 0xE2), s.u2, cfg.n, cfg.rates.r02, cfg.rates.rt2)?;
    if let Some((f1, f2)) = cfg.fixed_f {
        assert!(f1 < bins1.f_count() && f2 < bins2.f_count(), "fixed F out of range");
    }

    let mut acc = BlockAccumulator::new(spec, cfg.n);
    let mut warnings = Vec::new();
    match cfg.mode {
        SimMode::MonteCarlo => run_monte_carlo(spec, cfg, &bins1, &bins2, &mut acc),
        SimMode::Exact => run_exact(spec, cfg, &bins1, &bins2, &mut acc)?,
    }

    let (tv_block, tv_block_plugin) = match cfg.mode {
        SimMode::Exact => (Some(acc.tv_block()), None),
        SimMode::MonteCarlo => {
            warnings.push(
                "plug-in block TV is biased upward until the trial count dwarfs the block space"
                    .to_string(),
            );
            (None, Some(acc.tv_block()))
        }
    };
    Ok(SimulationReport {
        mode: cfg.mode,
        n: cfg.n,
        trials: if cfg.mode == SimMode::MonteCarlo { cfg.trials } else { 0 },
        seed: cfg.seed,
        rates: cfg.rates,
        k1_bits: bins1.k_bits,
        f1_bits: bins1.f_bits,
        k2_bits: bins2.k_bits,
        f2_bits: bins2.f_bits,
        decode_error_rate: acc.decode_error_mass / acc.total_mass,
        encoder_abort_rate: acc.abort_mass / acc.total_mass,
        tv_first_order: acc.tv_first_order(),
        tv_block,
        tv_block_plugin,
        warnings,
    })
}

fn run_monte_carlo(
    spec: &ProtocolSpec,
    cfg: &ProtocolConfig,
    bins1: &BinningScheme,
    bins2: &BinningScheme,
    acc: &mut BlockAccumulator,
) {
    let s = &spec.sizes;
    let n = cfg.n;
    let zeros = vec![0u8; n];
    for trial in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(cfg.seed, 0x7134), trial));
        let mut x1 = vec![0u8; n];
        let mut x2 = vec![0u8; n];
        let mut w = vec![0u8; n];
        for i in 0..n {
            let draw: f64 = rng.random();
            let pos = spec.source_cum.partition_point(|&c| c <= draw).min(spec.source_cells.len() - 1);
            let cell = spec.source_cells[pos];
            x1[i] = cell.0;
            x2[i] = cell.1;
            w[i] = cell.2;
        }
        let k1 = rng.random_range(0..bins1.k_count());
        let k2 = rng.random_range(0..bins2.k_count());
        let (f1, f2) = match cfg.fixed_f {
            Some(p) => p,
            None => {
                let f1 = rng.random_range(0..bins1.f_count());
                let f2 = rng.random_range(0..bins2.f_count());
                (f1, f2)
            }
        };

        let (_u2, xt2) = match encoder_sample_2(spec, bins2, k2, f2, &x2, &mut rng) {
            EncodeOutcome::Encoded { u, x } => (u, x),
            EncodeOutcome::Abort => {
                acc.abort_mass += 1.0;
                acc.record(&x1, &x2, &w, &zeros, 1.0);
                continue;
            }
        };
        let (_u1, xt1) = match encoder_sample_1(spec, bins1, k1, f1, &x1, &xt2, &mut rng) {
            EncodeOutcome::Encoded { u, x } => (u, x),
            EncodeOutcome::Abort => {
                acc.abort_mass += 1.0;
                acc.record(&x1, &x2, &w, &zeros, 1.0);
                continue;
            }
        };
        let yt: Vec<u8> = (0..n)
            .map(|i| {
                let row = spec.channel.row(xt1[i] as usize * s.xt2 + xt2[i] as usize);
                sample_row(row, &mut rng)
            })
            .collect();
        let (du1, du2) = match sw_decode(spec, bins1, k1, f1, bins2, k2, f2, &w, &yt) {
            DecodeOutcome::Decoded { u1, u2 } => (u1, u2),
            DecodeOutcome::Failed => {
                acc.decode_error_mass += 1.0;
                acc.record(&x1, &x2, &w, &zeros, 1.0);
                continue;
            }
        };
        let y: Vec<u8> = (0..n)
            .map(|i| {
                let row = spec.decoder.row(
                    ((du1[i] as usize * s.u2 + du2[i] as usize) * s.w + w[i] as usize) * s.yt
                        + yt[i] as usize,
                );
                sample_row(row, &mut rng)
            })
            .collect();
        acc.record(&x1, &x2, &w, &y, 1.0);
    }
}

/// Iterates every block in the product of per-position supports.
fn for_each_block(
    supports: &[Vec<(u8, f64)>],
    block: &mut Vec<u8>,
    weight: f64,
    f: &mut impl FnMut(&[u8], f64),
) {
    if block.len() == supports.len() {
        f(block, weight);
        return;
    }
    let depth = block.len();
    for &(sym, p) in &supports[depth] {
        block.push(sym);
        for_each_block(supports, block, weight * p, f);
        block.pop();
    }
}

fn row_support(row: &[f64]) -> Vec<(u8, f64)> {
    row.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (i as u8, p))
        .collect()
}

fn run_exact(
    spec: &ProtocolSpec,
    cfg: &ProtocolConfig,
    bins1: &BinningScheme,
    bins2: &BinningScheme,
    acc: &mut BlockAccumulator,
) -> Result<()> {
    let n = cfg.n;
    let zeros = vec![0u8; n];
    let mut states: u64 = 0;
    let mut decode_memo: HashMap<(u32, u32, u32, u32, Vec<u8>), DecodeOutcome> = HashMap::new();

    // enumerate (x1, x2, w) blocks as indices into source_cells
    let cell_count = spec.source_cells.len();
    let mut cell_idx = vec![0usize; n];
    loop {
        let mut x1 = vec![0u8; n];
        let mut x2 = vec![0u8; n];
        let mut w = vec![0u8; n];
        let mut q_block = 1.0f64;
        for i in 0..n {
            let c = spec.source_cells[cell_idx[i]];
            let lo = if cell_idx[i] == 0 { 0.0 } else { spec.source_cum[cell_idx[i] - 1] };
            q_block *= spec.source_cum[cell_idx[i]] - lo;
            x1[i] = c.0;
            x2[i] = c.1;
            w[i] = c.2;
        }

        let f1_range: Vec<u32> = match cfg.fixed_f {
            Some((f1, _)) => vec![f1],
            None => (0..bins1.f_count()).collect(),
        };
        let f2_range: Vec<u32> = match cfg.fixed_f {
            Some((_, f2)) => vec![f2],
            None => (0..bins2.f_count()).collect(),
        };
        let share = q_block
            / (bins1.k_count() as f64
                * bins2.k_count() as f64
                * f1_range.len() as f64
                * f2_range.len() as f64);

        for k1 in 0..bins1.k_count() {
            for &f1 in &f1_range {
                for k2 in 0..bins2.k_count() {
                    for &f2 in &f2_range {
                        states += 1;
                        if states > ENUMERATION_CAP {
                            return Err(OsrbError::EnumerationTooLarge(ENUMERATION_CAP));
                        }
                        exact_bins_branch(
                            spec,
                            bins1,
                            bins2,
                            (k1, f1, k2, f2),
                            &x1,
                            &x2,
                            &w,
                            share,
                            &zeros,
                            &mut states,
                            &mut decode_memo,
                            acc,
                        )?;
                    }
                }
            }
        }

        // odometer over source cells
        let mut advanced = false;
        for d in (0..n).rev() {
            cell_idx[d] += 1;
            if cell_idx[d] < cell_count {
                advanced = true;
                break;
            }
            cell_idx[d] = 0;
        }
        if !advanced {
            break;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn exact_bins_branch(
    spec: &ProtocolSpec,
    bins1: &BinningScheme,
    bins2: &BinningScheme,
    bins_drawn: (u32, u32, u32, u32),
    x1: &[u8],
    x2: &[u8],
    w: &[u8],
    share: f64,
    zeros: &[u8],
    states: &mut u64,
    decode_memo: &mut HashMap<(u32, u32, u32, u32, Vec<u8>), DecodeOutcome>,
    acc: &mut BlockAccumulator,
) -> Result<()> {
    let s = &spec.sizes;
    let n = x1.len();
    let (k1, f1, k2, f2) = bins_drawn;

    let members2 = bins2.bin_members(k2, f2);
    let (w2, t2) = bin_weights(members2, s.u2, n, |i, u| {
        spec.enc2_u.row(x2[i] as usize)[u as usize]
    });
    if t2 <= 0.0 {
        acc.abort_mass += share;
        acc.record(x1, x2, w, zeros, share);
        return Ok(());
    }
    let mut u2_syms = vec![0u8; n];
    for (ci, &seq2) in members2.iter().enumerate() {
        if w2[ci] <= 0.0 {
            continue;
        }
        let p_u2 = w2[ci] / t2;
        seq_symbols(seq2 as u64, s.u2, &mut u2_syms);
        let u2 = u2_syms.clone();
        let xt2_support: Vec<Vec<(u8, f64)>> = (0..n)
            .map(|i| row_support(spec.enc2_x.row(u2[i] as usize * s.x2 + x2[i] as usize)))
            .collect();
        let mut xt2_block = Vec::with_capacity(n);
        let mut result = Ok(());
        for_each_block(&xt2_support, &mut xt2_block, 1.0, &mut |xt2, p_xt2| {
            if result.is_err() {
                return;
            }
            if let Err(e) = exact_after_enc2(
                spec,
                bins1,
                bins2,
                (k1, f1, k2, f2),
                x1,
                x2,
                w,
                xt2,
                share * p_u2 * p_xt2,
                zeros,
                states,
                decode_memo,
                acc,
            ) {
                result = Err(e);
            }
        });
        result?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn exact_after_enc2(
    spec: &ProtocolSpec,
    bins1: &BinningScheme,
    bins2: &BinningScheme,
    bins_drawn: (u32, u32, u32, u32),
    x1: &[u8],
    x2: &[u8],
    w: &[u8],
    xt2: &[u8],
    mass: f64,
    zeros: &[u8],
    states: &mut u64,
    decode_memo: &mut HashMap<(u32, u32, u32, u32, Vec<u8>), DecodeOutcome>,
    acc: &mut BlockAccumulator,
) -> Result<()> {
    let s = &spec.sizes;
    let n = x1.len();
    let (k1, f1, k2, f2) = bins_drawn;

    let members1 = bins1.bin_members(k1, f1);
    let (w1, t1) = bin_weights(members1, s.u1, n, |i, u| {
        spec.enc1_u.row(x1[i] as usize * s.xt2 + xt2[i] as usize)[u as usize]
    });
    if t1 <= 0.0 {
        acc.abort_mass += mass;
        acc.record(x1, x2, w, zeros, mass);
        return Ok(());
    }
    let mut u1_syms = vec![0u8; n];
    for (ci, &seq1) in members1.iter().enumerate() {
        if w1[ci] <= 0.0 {
            continue;
        }
        let p_u1 = w1[ci] / t1;
        seq_symbols(seq1 as u64, s.u1, &mut u1_syms);
        let u1 = u1_syms.clone();
        let xt1_support: Vec<Vec<(u8, f64)>> = (0..n)
            .map(|i| {
                row_support(spec.enc1_x.row(
                    (u1[i] as usize * s.x1 + x1[i] as usize) * s.xt2 + xt2[i] as usize,
                ))
            })
            .collect();
        let mut xt1_block = Vec::with_capacity(n);
        let mut result = Ok(());
        for_each_block(&xt1_support, &mut xt1_block, 1.0, &mut |xt1, p_xt1| {
            if result.is_err() {
                return;
            }
            // channel blocks
            let yt_support: Vec<Vec<(u8, f64)>> = (0..n)
                .map(|i| row_support(spec.channel.row(xt1[i] as usize * s.xt2 + xt2[i] as usize)))
                .collect();
            let mut yt_block = Vec::with_capacity(n);
            let mut inner = Ok(());
            for_each_block(&yt_support, &mut yt_block, 1.0, &mut |yt, p_yt| {
                if inner.is_err() {
                    return;
                }
                *states += 1;
                if *states > ENUMERATION_CAP {
                    inner = Err(OsrbError::EnumerationTooLarge(ENUMERATION_CAP));
                    return;
                }
                let branch = mass * p_u1 * p_xt1 * p_yt;
                let mut key = Vec::with_capacity(2 * n);
                key.extend_from_slice(w);
                key.extend_from_slice(yt);
                let outcome = decode_memo
                    .entry((k1, f1, k2, f2, key))
                    .or_insert_with(|| {
                        sw_decode(spec, bins1, k1, f1, bins2, k2, f2, w, yt)
                    })
                    .clone();
                match outcome {
                    DecodeOutcome::Failed => {
                        acc.decode_error_mass += branch;
                        acc.record(x1, x2, w, zeros, branch);
                    }
                    DecodeOutcome::Decoded { u1: du1, u2: du2 } => {
                        let y_support: Vec<Vec<(u8, f64)>> = (0..n)
                            .map(|i| {
                                row_support(spec.decoder.row(
                                    ((du1[i] as usize * s.u2 + du2[i] as usize) * s.w
                                        + w[i] as usize)
                                        * s.yt
                                        + yt[i] as usize,
                                ))
                            })
                            .collect();
                        let mut y_block = Vec::with_capacity(n);
                        for_each_block(&y_support, &mut y_block, 1.0, &mut |y, p_y| {
                            acc.record(x1, x2, w, y, branch * p_y);
                        });
                    }
                }
            });
            if inner.is_err() {
                result = inner;
            }
        });
        result?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
