//! Computational harmonic analysis and metric geometry on discretized
//! doubling metric measure spaces.
//!
//! The crate builds adjacent systems of dyadic cube grids over finite point
//! models ([`dyadic`]), measures maximal target-free holes in balls and
//! cubes ([`holes`]), assembles porosity certificates and the cube-family
//! decompositions behind them ([`porosity`]), and runs Muckenhoupt A1/Ap
//! diagnostics for distance-power weights ([`weights`]). A small catalog of
//! reference spaces ([`catalog`]) carries closed-form oracles for the
//! model problems, and [`report`] wraps results in deterministic envelopes.
//!
//! # Quick tour
//!
//! ```
//! use porlab::catalog::{point_at, segment_with_integer_set};
//! use porlab::holes::max_free_hole;
//! use porlab::space::Ball;
//!
//! // the interval [-4, 4] sampled at 1/16, with the integers as target set
//! let (space, target) = segment_with_integer_set(4, 1.0 / 16.0).unwrap();
//! let center = point_at(&space, &[0.0]).unwrap();
//! let hole = max_free_hole(&space, &target, &Ball::new(center, 1.0)).unwrap();
//! // the largest target-free ball inside B(0, 1) has radius about 1/2
//! assert!((hole.h_value - 0.5).abs() < 1.0 / 16.0);
//! ```
//!
//! Determinism is a design rule throughout: every randomized routine takes
//! an explicit seed, parallel reductions are order-independent, and report
//! serialization is byte-stable across reruns.

pub mod catalog;
pub mod dyadic;
pub mod error;
pub mod fit;
pub mod holes;
pub mod porosity;
pub mod report;
pub mod space;
pub mod weights;

pub use error::{Error, Result};
pub use space::{Ball, MetricMeasureSpace, PointId, TargetSet};
