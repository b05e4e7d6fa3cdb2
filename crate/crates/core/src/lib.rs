//! Trajectory synthesis for discrete-time linear systems from bounded-time
//! signal temporal logic specifications.

pub mod abstraction;
pub mod cases;
pub mod driver;
pub mod encoding;
pub mod feasibility;
pub mod io;
pub mod linsys;
pub(crate) mod lp;
pub mod robust;
pub mod stl;

pub use driver::{synthesize, Status, SynthesisConfig, SynthesisError, SynthesisResult};
