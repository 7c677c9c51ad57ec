//! Second-order Lagrangian mechanics on Lie algebroids in local coordinates.

pub mod algebroid;
pub mod cli;
pub mod dynamics;
pub mod expr;
pub mod fd;
pub mod geometry;
pub mod linalg;
pub mod stabilize;
pub mod systems;
