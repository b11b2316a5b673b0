//! Statevector laboratory for the gradient-descent dynamics of
//! parameterized quantum circuits trained on several data at once.
//!
//! The crate is layered bottom-up: [`qsim`] (states, Paulis, Haar
//! sampling), [`ansatz`] (RPA/HEA circuits), [`taskdata`] (orthogonal data,
//! errors, loss), [`derivatives`] (exact gradients and Hessians),
//! [`kernels`] (QNTK, dQNTK, relative dQNTK, charges, loss Hessian),
//! [`trainer`] (gradient descent with trace recording), [`dynamics`]
//! (regime prediction, fits, fixed-point stability, reduced flows) and
//! [`ensemble`] (restricted-Haar frame potentials and averaged kernels).

pub mod ansatz;
pub mod derivatives;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod kernels;
pub mod qsim;
pub mod taskdata;
pub mod trainer;

pub use error::{Error, Result};
