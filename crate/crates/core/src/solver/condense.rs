use super::{OptimalControlProblem, Residual, StepSensitivity, Trajectory};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Dynamics sensitivities, shooting gaps and residual Jacobians at a guess.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub steps: Vec<StepSensitivity>,
    /// `f(x_k, u_k) - x_{k+1}` per shooting interval.
    pub defects: Vec<DVector<f64>>,
    /// Measured initial state minus the guess's first state.
    pub initial_gap: DVector<f64>,
    pub stages: Vec<Residual>,
    pub terminal: Residual,
}

impl Linearization {
    pub fn is_finite(&self) -> bool {
        let fin = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        let fin_m = |m: &DMatrix<f64>| m.iter().all(|x| x.is_finite());
        self.steps.iter().all(|s| fin(&s.next) && fin_m(&s.wrt_state) && fin_m(&s.wrt_input))
            && self.defects.iter().all(fin)
            && fin(&self.initial_gap)
            && self
                .stages
                .iter()
                .chain(std::iter::once(&self.terminal))
                .all(|r| fin(&r.value) && fin_m(&r.wrt_state) && fin_m(&r.wrt_input))
    }

    /// `0.5 * |r|^2` over all stages.
    pub fn objective(&self) -> f64 {
        0.5 * self.stages.iter().chain(std::iter::once(&self.terminal)).map(|r| r.value.norm_squared()).sum::<f64>()
    }
}

pub fn linearize<P: OptimalControlProblem + ?Sized>(problem: &P, guess: &Trajectory) -> Result<Linearization> {
    guess.check_dims(problem)?;
    let n = problem.horizon();
    let mut steps = Vec::with_capacity(n);
    let mut defects = Vec::with_capacity(n);
    let mut stages = Vec::with_capacity(n);
    for k in 0..n {
        let (x, u) = (&guess.states[k], &guess.inputs[k]);
        let step = problem.step(k, x, u)?;
        defects.push(problem.state_difference(&step.next, &guess.states[k + 1]));
        steps.push(step);
        stages.push(problem.stage_residual(k, x, u)?);
    }
    let terminal = problem.terminal_residual(&guess.states[n])?;
    let initial_gap = problem.state_difference(problem.initial_state(), &guess.states[0]);
    let lin = Linearization { steps, defects, initial_gap, stages, terminal };
    if lin.is_finite() {
        Ok(lin)
    } else {
        Err(Error::NonFinite("linearization"))
    }
}

/// Dense box-constrained QP in the input increments:
/// `min 0.5 du' H du + g' du + c` subject to `lower <= du <= upper`.
#[derive(Debug, Clone)]
pub struct QpSubproblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub constant: f64,
    /// `dx_k = state_maps[k] * du + state_offsets[k]`, `k = 0..=N`.
    pub state_maps: Vec<DMatrix<f64>>,
    pub state_offsets: Vec<DVector<f64>>,
}

impl QpSubproblem {
    /// Bare QP without condensing maps.
    pub fn from_parts(hessian: DMatrix<f64>, gradient: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        Self { hessian, gradient, lower, upper, constant: 0.0, state_maps: Vec::new(), state_offsets: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn model_value(&self, du: &DVector<f64>) -> f64 {
        0.5 * du.dot(&(&self.hessian * du)) + self.gradient.dot(du) + self.constant
    }

    pub fn recover_states(&self, du: &DVector<f64>) -> Vec<DVector<f64>> {
        self.state_maps.iter().zip(&self.state_offsets).map(|(g, c)| g * du + c).collect()
    }

    /// Levenberg shift so the smallest eigenvalue is at least `shift`.
    pub fn regularize(&mut self, shift: f64) {
        for i in 0..self.dim() {
            self.hessian[(i, i)] += shift;
        }
    }
}

/// Eliminates the state increments through the linearized dynamics.
pub fn condense<P: OptimalControlProblem + ?Sized>(
    problem: &P,
    guess: &Trajectory,
    lin: &Linearization,
) -> Result<QpSubproblem> {
    if !lin.is_finite() {
        return Err(Error::NonFinite("condensing"));
    }
    let n = problem.horizon();
    let nx = problem.state_dim();
    let nu = problem.input_dim();
    let nv = nu * n;
    let rows: usize = lin.stages.iter().map(|r| r.value.len()).sum::<usize>() + lin.terminal.value.len();

    let mut jac = DMatrix::zeros(rows, nv);
    let mut res = DVector::zeros(rows);
    let mut maps = Vec::with_capacity(n + 1);
    let mut offsets = Vec::with_capacity(n + 1);
    let mut g = DMatrix::zeros(nx, nv);
    let mut c = lin.initial_gap.clone();
    let mut row = 0;

    for k in 0..n {
        let stage = &lin.stages[k];
        let m = stage.value.len();
        let cols = k * nu;
        if cols > 0 {
            let mut block = jac.view_mut((row, 0), (m, cols));
            block.gemm(1.0, &stage.wrt_state, &g.columns(0, cols), 0.0);
        }
        jac.view_mut((row, cols), (m, nu)).copy_from(&stage.wrt_input);
        res.rows_mut(row, m).copy_from(&(&stage.value + &stage.wrt_state * &c));
        row += m;

        let step = &lin.steps[k];
        let mut g_next = DMatrix::zeros(nx, nv);
        if cols > 0 {
            let mut block = g_next.columns_mut(0, cols);
            block.gemm(1.0, &step.wrt_state, &g.columns(0, cols), 0.0);
        }
        g_next.columns_mut(cols, nu).copy_from(&step.wrt_input);
        let c_next = &step.wrt_state * &c + &lin.defects[k];
        maps.push(std::mem::replace(&mut g, g_next));
        offsets.push(std::mem::replace(&mut c, c_next));
    }
    let term = &lin.terminal;
    let m = term.value.len();
    {
        let mut block = jac.view_mut((row, 0), (m, nv));
        block.gemm(1.0, &term.wrt_state, &g, 0.0);
    }
    res.rows_mut(row, m).copy_from(&(&term.value + &term.wrt_state * &c));
    maps.push(g);
    offsets.push(c);

    let jt = jac.transpose();
    let hessian = &jt * &jac;
    let gradient = &jt * &res;

    let (lb, ub) = problem.input_bounds();
    let mut lower = DVector::zeros(nv);
    let mut upper = DVector::zeros(nv);
    for k in 0..n {
        lower.rows_mut(k * nu, nu).copy_from(&(&lb - &guess.inputs[k]));
        upper.rows_mut(k * nu, nu).copy_from(&(&ub - &guess.inputs[k]));
    }
    Ok(QpSubproblem {
        hessian,
        gradient,
        lower,
        upper,
        constant: 0.5 * res.norm_squared(),
        state_maps: maps,
        state_offsets: offsets,
    })
}
