//! Discrete-time linear systems `x⁺ = Ax + Bu`, runs, finite-horizon LQR and
//! closed-loop tracking.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinSysError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("sampling period must be positive and finite")]
    SamplingPeriod,
    #[error("invalid weight matrix {0}: {1}")]
    Weight(&'static str, String),
    #[error("no gain for step {0}")]
    Horizon(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub ts: f64,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
}

impl LinearSystem {
    /// System with default names `x1…xn`, `u1…um`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, ts: f64) -> Result<Self, LinSysError> {
        let state_names = (1..=a.nrows()).map(|i| format!("x{i}")).collect();
        let input_names = (1..=b.ncols()).map(|i| format!("u{i}")).collect();
        Self::with_names(a, b, ts, state_names, input_names)
    }

    pub fn with_names(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        ts: f64,
        state_names: Vec<String>,
        input_names: Vec<String>,
    ) -> Result<Self, LinSysError> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n {
            return Err(LinSysError::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if state_names.len() != n || input_names.len() != b.ncols() {
            return Err(LinSysError::Dimension("name lists do not match A and B".into()));
        }
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(LinSysError::SamplingPeriod);
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(LinSysError::Dimension("non-finite matrix entry".into()));
        }
        Ok(LinearSystem { a, b, ts, state_names, input_names })
    }

    /// `x⁺ = x + Ts·u` in `dim` dimensions.
    pub fn single_integrator(dim: usize, ts: f64) -> Self {
        let a = DMatrix::identity(dim, dim);
        let b = DMatrix::identity(dim, dim) * ts;
        Self::new(a, b, ts).expect("valid integrator")
    }

    /// Exact discretization of `axes` independent chains of `order`
    /// integrators. States are grouped by derivative level, so with three
    /// axes and order 4 they read `p_x p_y p_z ṗ_x … p⃛_z`.
    pub fn integrator_chain(order: usize, axes: usize, ts: f64) -> Self {
        let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
        let n = order * axes;
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, axes);
        for i in 0..order {
            for ax in 0..axes {
                for j in i..order {
                    a[(i * axes + ax, j * axes + ax)] = ts.powi((j - i) as i32) / fact(j - i);
                }
                b[(i * axes + ax, ax)] = ts.powi((order - i) as i32) / fact(order - i);
            }
        }
        Self::new(a, b, ts).expect("valid chain")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// State names followed by input names, the variables of `r = (x, u)`.
    pub fn var_names(&self) -> Vec<String> {
        self.state_names.iter().chain(&self.input_names).cloned().collect()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// States `x_0…x_N` and inputs `u_0…` (one per state, or one fewer).
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub ts: f64,
}

impl Run {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Concatenated points `r_k = (x_k, u_k)`; a missing input is zero.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let m = self.inputs.first().map_or(0, |u| u.len());
        self.states
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let mut p: Vec<f64> = x.iter().copied().collect();
                match self.inputs.get(k) {
                    Some(u) => p.extend(u.iter()),
                    None => p.extend(std::iter::repeat_n(0.0, m)),
                }
                p
            })
            .collect()
    }

    /// Largest `‖x_{k+1} − Ax_k − Bu_k‖_∞` over the run.
    pub fn max_residual(&self, sys: &LinearSystem) -> f64 {
        (0..self.len().saturating_sub(1))
            .map(|k| (&self.states[k + 1] - sys.step(&self.states[k], &self.inputs[k])).amax())
            .fold(0.0, f64::max)
    }

    /// Extends a run with `x_{K'} = x_{L'-1}` by repeating `L'-1 … K'-1` up
    /// to `len` samples; with `loop_index = None` the run is truncated.
    pub fn unroll_loop(&self, loop_index: Option<usize>, len: usize) -> Run {
        let kp = self.len() - 1;
        let idx = |j: usize| match loop_index {
            Some(l) if j >= kp => fold_loop(j, kp, l),
            _ => j.min(kp),
        };
        let states = (0..len).map(|j| self.states[idx(j)].clone()).collect();
        let inputs = (0..len).filter_map(|j| self.inputs.get(idx(j)).cloned()).collect();
        Run { states, inputs, ts: self.ts }
    }
}

/// Index `j ≥ K'` of a run closing `x_{K'} = x_{L'-1}`, folded into `L'-1 … K'-1`.
pub(crate) fn fold_loop(j: usize, kp: usize, loop_index: usize) -> usize {
    let start = loop_index - 1;
    if j < kp {
        j
    } else {
        start + (j - start) % (kp - start)
    }
}

/// Feedback gains `F_0 … F_{K-1}`; with a loop index `L'`, steps past the
/// horizon reuse the gains of the loop `L'-1 … K-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSchedule {
    pub gains: Vec<DMatrix<f64>>,
    pub horizon: usize,
    pub loop_index: Option<usize>,
}

impl GainSchedule {
    pub fn gain(&self, t: usize) -> Result<&DMatrix<f64>, LinSysError> {
        let k = match self.loop_index {
            Some(l) if t >= self.horizon && l >= 1 && l <= self.horizon => fold_loop(t, self.horizon, l),
            _ => t,
        };
        self.gains.get(k).ok_or(LinSysError::Horizon(t))
    }

    pub fn unroll_loop(&self, len: usize) -> Result<GainSchedule, LinSysError> {
        let gains = (0..len).map(|t| self.gain(t).cloned()).collect::<Result<_, _>>()?;
        Ok(GainSchedule { gains, horizon: len, loop_index: None })
    }
}

pub type Disturbance<'a> = &'a mut dyn FnMut(usize) -> DVector<f64>;

fn check_vec(what: &str, v: &DVector<f64>, len: usize) -> Result<(), LinSysError> {
    if v.len() != len {
        return Err(LinSysError::Dimension(format!("{what} has length {}, expected {len}", v.len())));
    }
    Ok(())
}

/// Open-loop simulation: `x_{k+1} = Ax_k + Bu_k (+ w_k)`.
pub fn simulate(
    sys: &LinearSystem,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
    mut disturbance: Option<Disturbance<'_>>,
) -> Result<Run, LinSysError> {
    check_vec("x0", x0, sys.n())?;
    let mut states = vec![x0.clone()];
    for (k, u) in inputs.iter().enumerate() {
        check_vec("input", u, sys.m())?;
        let mut x = sys.step(&states[k], u);
        if let Some(w) = disturbance.as_mut() {
            let w = w(k);
            check_vec("disturbance", &w, sys.n())?;
            x += w;
        }
        states.push(x);
    }
    Ok(Run { states, inputs: inputs.to_vec(), ts: sys.ts })
}

fn check_weight(name: &'static str, w: &DMatrix<f64>, n: usize, definite: bool) -> Result<(), LinSysError> {
    if w.nrows() != n || w.ncols() != n {
        return Err(LinSysError::Weight(name, format!("expected {n}x{n}")));
    }
    let scale = w.amax().max(1.0);
    if (w - w.transpose()).amax() > 1e-9 * scale {
        return Err(LinSysError::Weight(name, "not symmetric".into()));
    }
    let min_eig = w.clone().symmetric_eigenvalues().min();
    if definite && min_eig <= 0.0 {
        return Err(LinSysError::Weight(name, "not positive definite".into()));
    }
    if min_eig < -1e-9 * scale {
        return Err(LinSysError::Weight(name, "not positive semidefinite".into()));
    }
    Ok(())
}

/// Backward Riccati recursion from `P_K = Q_f`; returns `F_0…F_{K-1}` and
/// `P_0…P_K`.
pub fn riccati(
    sys: &LinearSystem,
    qf: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>), LinSysError> {
    let (n, m) = (sys.n(), sys.m());
    check_weight("Qf", qf, n, true)?;
    check_weight("Q", q, n, false)?;
    check_weight("R", r, m, true)?;
    let (a, b) = (&sys.a, &sys.b);
    let mut ps = vec![qf.clone()];
    let mut fs = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let p = ps.last().unwrap();
        let bt_p = b.transpose() * p;
        let lhs = r + &bt_p * b;
        let rhs = &bt_p * a;
        let f = lhs
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| lhs.lu().solve(&rhs))
            .ok_or_else(|| LinSysError::Weight("R", "R + BᵀPB is singular".into()))?;
        let at_p = a.transpose() * p;
        let next = &at_p * a - &at_p * b * &f + q;
        ps.push((&next + next.transpose()) * 0.5);
        fs.push(f);
    }
    fs.reverse();
    ps.reverse();
    Ok((fs, ps))
}

/// Finite-horizon LQR gains
/// `F_k = (R + BᵀP_{k+1}B)⁻¹BᵀP_{k+1}A`.
pub fn lqr_gains(
    sys: &LinearSystem,
    qf: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    horizon: usize,
) -> Result<GainSchedule, LinSysError> {
    let (gains, _) = riccati(sys, qf, q, r, horizon)?;
    Ok(GainSchedule { gains, horizon, loop_index: None })
}

/// Closed loop `u_k = u*_k − F_k(x_k − x*_k)` along the nominal run.
pub fn track(
    sys: &LinearSystem,
    nominal: &Run,
    gains: &GainSchedule,
    x0: &DVector<f64>,
    mut disturbance: Option<Disturbance<'_>>,
) -> Result<Run, LinSysError> {
    check_vec("x0", x0, sys.n())?;
    if nominal.inputs.len() + 1 < nominal.len() {
        return Err(LinSysError::Dimension("nominal run lacks inputs".into()));
    }
    let mut states = vec![x0.clone()];
    let mut inputs = Vec::new();
    for k in 0..nominal.len().saturating_sub(1) {
        let x = &states[k];
        let f = gains.gain(k)?;
        let u = &nominal.inputs[k] - f * (x - &nominal.states[k]);
        let mut next = sys.step(x, &u);
        if let Some(w) = disturbance.as_mut() {
            let w = w(k);
            check_vec("disturbance", &w, sys.n())?;
            next += w;
        }
        states.push(next);
        inputs.push(u);
    }
    Ok(Run { states, inputs, ts: sys.ts })
}
