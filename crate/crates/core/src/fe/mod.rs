//! Structured bilinear-quad finite elements: grid bookkeeping, element
//! stiffness, global assembly with an ersatz modulus per element, loads,
//! supports and springs, and the fine-to-coarse prolongation.

mod assembly;
mod element;
mod grid;
pub(crate) mod prolongation;

pub use assembly::{
    apply_load, assemble_global, Assembler, Axis, BoundaryConditions, GlobalSystem, PointLoad,
    Spring,
};
pub use element::{build_element_stiffness, ElementStiffness};
pub use grid::GridSpec;
pub use prolongation::{build_prolongation, Prolongation};
