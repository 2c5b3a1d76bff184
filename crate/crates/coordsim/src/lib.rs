//! Strong-coordination analysis for two encoders talking to one decoder over
//! a discrete memoryless multiple-access channel, with optional non-causal
//! cribbing (encoder 1 sees encoder 2's channel input) and pairwise shared
//! randomness between each encoder and the decoder.
//!
//! The crates provides:
//!
//! - [`prob`]: an exact dense engine for labeled joint pmfs (marginalization,
//!   conditioning, composition, entropy, mutual information, total variation);
//! - [`factor`]: builders for the two Markov-factorized joint shapes used by
//!   the region evaluators (cribbing and no-cribbing chains), plus structural
//!   checks;
//! - [`regions`]: evaluation of the achievable-region constraints on a built
//!   joint, cardinality caps, and a multi-restart search for low
//!   shared-randomness witnesses;
//! - [`example1`]: a bundled selector scenario (two uniform bits at encoder 1,
//!   a selector bit at encoder 2, the decoder reproduces the selected bit)
//!   with explicit witnesses and an adversarial converse-evidence search;
//! - [`osrb`]: an executable random-binning (OSRB-style) protocol at small
//!   blocklength with Slepian-Wolf decoding and total-variation measurement;
//! - [`oracle`]: slow direct-summation reference implementations used by the
//!   test suites to cross-check every information measure.

pub mod example1;
pub mod factor;
pub mod oracle;
pub(crate) mod optim;
pub mod osrb;
pub mod prob;
pub mod regions;
#[cfg(test)]
pub(crate) mod testutil;
