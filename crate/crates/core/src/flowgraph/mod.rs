//! Signal-flow graphs: loop and path enumeration, Mason's gain formula and
//! the aggregate SAV/emissions graph of the linearised model.

pub mod canonical;
pub mod graph;
pub mod linearize;
pub mod poly;

pub use canonical::{undesired_effect_check, GainSet, UndesiredEffect};
pub use graph::{linear_transfer, Loop, MasonExpansion, Path, SignalFlowGraph};
pub use linearize::{linearize, simulated_response, Linearization, OperatingPoint, DEFAULT_REL_STEP};
pub use poly::Poly;
