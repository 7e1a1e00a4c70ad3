//! AC optimal power flow: grid data, exact formulations, convex relaxations,
//! bound solvers and model export.

pub mod case_io;
pub mod grid;
pub mod ir;
pub mod builders;
pub mod solvers;
pub mod transforms;
pub mod export;
pub mod synth;
