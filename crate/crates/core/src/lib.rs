//! MEMD-based EEG trial enhancement.
//!
//! Multichannel trials are decomposed into aligned intrinsic mode functions
//! ([`memd`]), each IMF is turned into a Morlet time-frequency image ([`tfr`]),
//! images are scored by grey-level entropy and the informative IMFs kept
//! ([`selection`]). Kept IMFs of same-class trials are recombined into
//! artificial trials ([`augment`]), and [`eval`] measures what substitution
//! does to an LDA classifier. [`simulate`] produces synthetic datasets with
//! the shapes of a simulated-EEG benchmark and a two-run wrist motor-imagery
//! session.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod memd;
pub mod selection;
pub mod signal;
pub mod simulate;
pub mod spline;
pub mod tfr;

pub use error::{Error, Result};
pub use signal::{
    pearson_correlation, reconstruct, ClassLabel, DatasetMetadata, ImfDecomposition,
    MultichannelSignal, Segment, Trial, TrialDataset,
};
