//! Optimal interelectronic correlation factors f(r12) for two-electron atoms.
//!
//! The library derives the exact ordinary differential equation satisfied by
//! the correlation factor multiplying a given reference wave function
//! (Slater singlet/triplet, Gaussian, SCF product, or a correlated basis
//! expansion), solves it by power series, large-r asymptotic expansion, and
//! adaptive high-order propagation with eigenvalue shooting, and provides
//! variational machinery for energy optimization and for fitting compact
//! range-separated parameterizations of the resulting factors.

pub mod eigen;
pub mod error;
pub mod forms;
pub mod gauss_reduce;
pub mod models;
pub mod ode_builder;
pub mod polyexp;
pub mod precision;
pub mod propagate;
pub mod quadrature;
pub mod radial;
pub mod rational;
pub mod series;
pub mod variational;

pub use eigen::EigenSolution;
pub use error::{Error, Result};
pub use forms::{CorrelationFactorForm, FormKind};
pub use models::{BasisKind, BasisSpec, ModelKind, ModelSpec};
pub use ode_builder::RadialOde;
pub use propagate::PropagationResult;
pub use series::{AsymptoticExpansion, AsymptoticParams, PowerSeries};
pub use polyexp::{OdeTerm, PolyExpTerm2D};
pub use radial::{ExpPoly, IntegralRequest};
pub use rational::Rat;
pub use variational::ScfCorrelated;
