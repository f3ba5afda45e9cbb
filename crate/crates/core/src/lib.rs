//! Green bundles, Lyapunov spectra and weak KAM solutions for Tonelli
//! Hamiltonians on the flat tori `T^1` and `T^2`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod flow;
pub mod green;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod regularity;
pub mod weakkam;

pub use model::{Hamiltonian, PhasePoint, TangentVector, TonelliModel, TorusPoint};
