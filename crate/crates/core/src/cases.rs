//! Ready-made problem instances: the planar reach-avoid task and the
//! quadrotor inspection task.

use nalgebra::DVector;

use crate::driver::SynthesisConfig;
use crate::linsys::LinearSystem;
use crate::stl::{parse_formula, StlFormula};

pub const REACH_AVOID_SPEC: &str =
    "((x < 10 | x > 20 | y < 10 | y > 20) & 0 < x < 30 & 0 < y < 30) U[10,60] (20 < x < 30 & 0 < y < 10)";

pub const QUADROTOR_SPEC: &str = "G[0,900] ((y < 4 | y > 6 | z > 10) & 0 < x < 60 & 0 < y < 10 & 0 < z < 20) \
& F[0,900] ((x < 2 & 4 < y < 6 & z < 12) & ((4 < y < 6 & z < 12) U[0,900] (x > 58 & 4 < y < 6 & z < 12 & F[0,900] (22.5 < x < 32.5 & z < 3))))";

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// `x⁺ = x + u` in the plane with states `x, y` and inputs `ux, uy`.
pub fn reach_avoid_system() -> LinearSystem {
    let s = LinearSystem::single_integrator(2, 1.0);
    LinearSystem::with_names(s.a, s.b, s.ts, names(&["x", "y"]), names(&["ux", "uy"])).expect("valid system")
}

pub fn reach_avoid_formula() -> StlFormula {
    parse_formula(REACH_AVOID_SPEC, &reach_avoid_system().var_names()).expect("valid formula")
}

pub fn reach_avoid() -> SynthesisConfig {
    SynthesisConfig::new(reach_avoid_formula(), reach_avoid_system(), DVector::from_vec(vec![5.0, 5.0]))
}

/// Quadruple integrator per axis, `Ts = 1`, states ordered by derivative
/// level: `x y z vx vy vz ax ay az jx jy jz`, inputs `v1 v2 v3`.
pub fn quadrotor_system() -> LinearSystem {
    let s = LinearSystem::integrator_chain(4, 3, 1.0);
    let states = names(&["x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "jx", "jy", "jz"]);
    LinearSystem::with_names(s.a, s.b, s.ts, states, names(&["v1", "v2", "v3"])).expect("valid system")
}

pub fn quadrotor_formula() -> StlFormula {
    parse_formula(QUADROTOR_SPEC, &quadrotor_system().var_names()).expect("valid formula")
}

pub fn quadrotor() -> SynthesisConfig {
    let mut x0 = DVector::zeros(12);
    x0[0] = 20.0;
    x0[1] = 2.0;
    x0[2] = 1.5;
    let mut cfg = SynthesisConfig::new(quadrotor_formula(), quadrotor_system(), x0);
    cfg.feas.max_stretch = Some(QUADROTOR_MAX_STRETCH);
    cfg
}

/// Stretch cap for the quadrotor; the chain reaches any state in four
/// steps, so longer stretches only grow the programs.
pub const QUADROTOR_MAX_STRETCH: usize = 32;
