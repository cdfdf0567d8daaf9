//! Positive-unlabeled classification of vessel-years with bagged random
//! forests.
//!
//! The pipeline trains forests on labeled positives versus 1:1 downsampled
//! unlabeled cases under source-grouped cross-validation, averages the
//! resulting per-case scores across seeds and bags, estimates an upper
//! bound `alpha*` on the positive share of the unlabeled pool from the
//! score densities, derives the classification threshold from that bound,
//! fits a Beta distribution per case for a confidence level, and reports
//! recall, specificity, and fairness breakdowns by gear and flag region.
//!
//! The crate is deterministic end to end: every random choice derives from
//! a master seed through a stable 64-bit substream hash, so outputs are
//! bitwise identical across runs, thread counts, and the `parallel`
//! feature. Disable `parallel` (enabled by default) to drop the rayon
//! dependency and run sequentially.

pub mod alpha;
pub mod betainc;
pub mod confidence;
pub mod cv;
pub mod data;
mod exec;
pub mod featsel;
pub mod forest;
pub mod metrics;
pub mod pipeline;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use exec::ExecMode;
