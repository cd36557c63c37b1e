//! Shared numerical routines.

pub mod dist;
pub mod optim;
pub mod quadrature;
pub mod root;
