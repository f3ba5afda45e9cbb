//! Weak KAM theory on the grid: actions, Lax–Oleinik semigroups, weak KAM
//! solutions and conjugate pairs, pseudographs and barrier functions.

pub mod action;
pub mod barrier;
pub mod grid;
pub mod lax_oleinik;
pub mod pseudograph;
pub mod solve;
