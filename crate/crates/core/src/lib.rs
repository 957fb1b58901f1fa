//! Numerical toolkit for multi-parameter estimation with indefinite causal
//! order on a bosonic mode: Fock-space operators, the switch and
//! coherent-superposition coding strategies, quantum Fisher information and
//! the closed-form Zassenhaus expansion of `exp(X + P^m)`.

pub mod applications;
pub mod bch;
pub mod cvspace;
pub mod error;
pub mod qfi;
pub mod strategies;

pub use cvspace::{CvState, FockDim, Operator, ProbeSpec, Quadrature, C64};
pub use error::{Error, Result};
pub use strategies::{QState, StrategyConfig, StrategyKind};
