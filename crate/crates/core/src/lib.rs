//! Delay compensation for finite-dimensional linear plants.
//!
//! Transport delays are modelled as first-order hyperbolic "delay lines"
//! sampled on a uniform grid. On top of that the crate provides
//!
//! * the Sylvester-type operator maps that decouple a plant from its input
//!   or output delay ([`operator_maps`]),
//! * predictor feedback for input delays ([`predictor`]),
//! * an observer that reconstructs the state through a measurement delay
//!   ([`observer`]),
//! * a spectral model of a boundary-actuated wave equation used as an
//!   infinite-dimensional benchmark ([`wave`]).
//!
//! [`acceptance`] collects end-to-end numerical checks, and [`reference`]
//! holds a finite-difference wave solver used to cross-check the modal
//! model.

pub mod acceptance;
pub mod delay_line;
pub mod error;
pub mod numkit;
pub mod operator_maps;
pub mod observer;
pub mod predictor;
pub mod reference;
pub mod wave;

pub use delay_line::DelayLine;
pub use error::{Error, Result};
pub use numkit::{Grid, Matrix, SampledKernel, Vector};
