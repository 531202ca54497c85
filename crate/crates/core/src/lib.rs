//! Countable Markov partitions for a family of piecewise-hyperbolic maps of
//! the unit square.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] defines the map, its inverse branches and the standing
//!   geometric, hyperbolicity and distortion conditions.
//! * [`symbolic`] holds the admissibility rule on finite words, enumeration,
//!   gap stems, cylinder widths and the variation check.
//! * [`cantor`] computes certified Lebesgue bounds for the Cantor sets built
//!   from admissible itineraries.
//! * [`returns`] builds first-return words, the induced alphabet at symbol 1,
//!   return-time tails and the Markov/mixing checks.
//! * [`thermo`] evaluates potentials, partition sums, pressure, the
//!   discriminant scan and transfer-operator spectra.
//! * [`stats`] samples the SRB measure and estimates Lyapunov exponents,
//!   entropy, correlations and CLT statistics.

pub mod cantor;
pub mod error;
pub mod fit;
pub mod interval;
pub mod model;
pub mod returns;
pub mod stats;
pub mod symbolic;
pub mod thermo;

pub use cantor::MeasureInterval;
pub use error::{Error, Result};
pub use interval::Interval;
pub use model::{ConditionReport, ModelSpec, Point};
pub use returns::{ReturnWord, TailFit};
pub use symbolic::{RectangleSpec, VariationFit, Word};
pub use thermo::{PressureEstimate, SeparationTimes, SpectralReport};


/// Crate version embedded in randomized outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
