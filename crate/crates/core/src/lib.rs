//! Brownian hard rods on the line.
//!
//! `n` rods of length `alpha / n` diffuse on the real line under an on-site
//! potential `V` and a pair interaction `W`, and reflect off each other. The
//! crate works with two descriptions of the same system:
//!
//! * the *expanded* side, rod centers `y_1 <= ... <= y_n` with gaps of at
//!   least `alpha / n`;
//! * the *compressed* side, point particles `x_i = y_i - alpha (i - 1) / n`,
//!   obtained by removing the rod lengths.
//!
//! [`maps`] moves measures between the two sides, [`simulate`] runs the
//! particle systems, [`pde`] solves the limiting evolution equations and
//! [`functionals`] evaluates free energies, dissipation and rate functionals.
//!
//! ```
//! use rodflow::maps::{compress_particles, expand_particles};
//! use rodflow::measures::{wasserstein2, EmpiricalMeasure};
//!
//! let x = EmpiricalMeasure::new(vec![0.3, -1.0, 0.3, 2.0]).unwrap();
//! let y = expand_particles(&x, 0.5).unwrap();
//! assert_eq!(y.points(), &[-1.0, 0.425, 0.55, 2.375]);
//! let back = compress_particles(&y, 0.5).unwrap();
//! assert!(wasserstein2(&back, &x) < 1e-12);
//! ```

pub mod conv;
pub mod error;
pub mod functionals;
pub mod io;
pub mod maps;
pub mod measures;
pub mod pde;
pub mod potentials;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use maps::{Grid, Side};
pub use measures::{EmpiricalMeasure, GridDensity, Icdf, Measure, Measure1D};
pub use pde::{DensityPath, PdeConfig};
pub use potentials::{Kind, ModelParams, Potential, Profile};
pub use simulate::{ParticlePath, SimConfig};
