//! Partial-correlation screening for sample-starved, ultra-high-dimensional data.
//!
//! The pipeline is: ingest a data matrix ([`io`]), project its standardized
//! columns onto the unit sphere ([`uscore`]), estimate the scaled
//! partial-correlation matrix by leave-one-out regression ([`parsec`]) or the
//! pseudo-inverse baseline ([`pcs_hub`]), and screen entries under a chosen
//! multiple-testing error criterion ([`inference`]). [`simgen`], [`metrics`]
//! and [`experiments`] provide the simulation and scoring harness;
//! [`estimation`] fits structured precision matrices on a screened graph.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod parallel;
pub mod parsec;
pub mod pcs_hub;
pub mod screen;
pub mod simgen;
pub mod uscore;

pub use error::{ParsecError, Result};
pub use inference::ErrorControlSpec;
pub use io::{DataMatrix, Edge, EdgeSet};
pub use parsec::ScaledPCorMatrix;
pub use pcs_hub::HubPCorMatrix;
pub use uscore::{OrthonormalBasis, UScoreMatrix, ZScoreMatrix};
