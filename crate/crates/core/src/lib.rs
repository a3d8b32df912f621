//! Sound-zone control with variable span trade-off (VAST) filters.
//!
//! The crate designs multichannel FIR control filters that trade signal
//! distortion in a bright zone against residual power in a dark zone, with
//! optional perceptual weighting of the reproduction error. It also contains
//! the supporting pieces needed to run experiments end to end:
//!
//! * [`room`]: free-field and image-source room impulse responses,
//! * [`signal`]: convolution, sine-window WOLA segmentation, WAV I/O,
//! * [`stats`]: (weighted) spatial correlation statistics,
//! * [`eig`]: joint diagonalization of the bright/dark correlation pair,
//! * [`vast`]: rank-V, mu-regularized control filters and closed forms,
//! * [`percept`]: masking curves and reciprocal weighting filters,
//! * [`pipeline`]: static and segment-adaptive rendering of two zones,
//! * [`metrics`]: acoustic contrast, nSDP, TIR and confidence intervals.

pub mod eig;
pub mod error;
pub mod metrics;
pub mod percept;
pub mod pipeline;
pub mod room;
pub mod signal;
pub mod stats;
pub mod vast;

pub use error::{Error, Result};
