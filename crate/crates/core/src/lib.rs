//! Quantum mechanics in generalized coordinates.

pub mod dsl;
pub mod ehrenfest;
pub mod exchange;
pub mod geometry;
pub mod madelung;
pub mod sparse;
pub mod operator;
pub mod pipeline;
pub mod presets;
pub mod sed;
pub mod solvers;
pub mod states;
