//! Primal active-set method for strictly convex box-constrained QPs.

use super::QpSubproblem;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundState {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub primal: DVector<f64>,
    /// Condensed state increments, empty for a bare QP.
    pub states: Vec<DVector<f64>>,
    pub active: Vec<BoundState>,
    /// Bound multipliers; positive means the bound pushes back.
    pub multipliers: DVector<f64>,
    pub feasible: bool,
    pub iterations: usize,
}

impl QpSolution {
    fn failed(n: usize, iterations: usize) -> Self {
        Self {
            primal: DVector::zeros(n),
            states: Vec::new(),
            active: vec![BoundState::Free; n],
            multipliers: DVector::zeros(n),
            feasible: false,
            iterations,
        }
    }

    /// Largest violation of stationarity, complementarity, dual sign and bounds.
    pub fn kkt_residual(&self, qp: &QpSubproblem) -> f64 {
        let grad = &qp.hessian * &self.primal + &qp.gradient;
        let mut worst: f64 = 0.0;
        for i in 0..qp.dim() {
            let x = self.primal[i];
            worst = worst.max(qp.lower[i] - x).max(x - qp.upper[i]);
            let r = match self.active[i] {
                BoundState::Free => grad[i].abs(),
                BoundState::Lower => (-grad[i]).max(0.0).max((x - qp.lower[i]).abs()),
                BoundState::Upper => grad[i].max(0.0).max((x - qp.upper[i]).abs()),
            };
            worst = worst.max(r);
        }
        worst
    }
}

pub fn qp_solve(qp: &QpSubproblem, max_iters: usize) -> QpSolution {
    qp_solve_warm(qp, max_iters, None)
}

/// Same as [`qp_solve`], starting from a guessed working set.
pub fn qp_solve_warm(qp: &QpSubproblem, max_iters: usize, warm: Option<&[BoundState]>) -> QpSolution {
    let n = qp.dim();
    let (lb, ub) = (&qp.lower, &qp.upper);
    let finite_data = qp.hessian.iter().chain(qp.gradient.iter()).all(|v| v.is_finite());
    if !finite_data || qp.hessian.nrows() != n || lb.len() != n || ub.len() != n || (0..n).any(|i| lb[i] > ub[i]) {
        return QpSolution::failed(n, 0);
    }

    let mut ws: Vec<BoundState> = match warm {
        Some(w) if w.len() == n => w.to_vec(),
        _ => vec![BoundState::Free; n],
    };
    let mut x = DVector::zeros(n);
    for i in 0..n {
        if ws[i] == BoundState::Lower && !lb[i].is_finite() || ws[i] == BoundState::Upper && !ub[i].is_finite() {
            ws[i] = BoundState::Free;
        }
        x[i] = match ws[i] {
            BoundState::Lower => lb[i],
            BoundState::Upper => ub[i],
            BoundState::Free => 0f64.clamp(lb[i], ub[i]),
        };
    }

    let dual_tol = 1e-11 * (1.0 + qp.gradient.amax());
    let mut at_subspace_min = false;
    let mut iterations = 0;
    while iterations < max_iters {
        let grad = &qp.hessian * &x + &qp.gradient;
        if at_subspace_min {
            let mut worst = None;
            let mut worst_val = dual_tol;
            for i in 0..n {
                let v = match ws[i] {
                    BoundState::Free => continue,
                    BoundState::Lower => -grad[i],
                    BoundState::Upper => grad[i],
                };
                if v > worst_val {
                    worst_val = v;
                    worst = Some(i);
                }
            }
            match worst {
                None => {
                    let multipliers = DVector::from_iterator(
                        n,
                        (0..n).map(|i| match ws[i] {
                            BoundState::Free => 0.0,
                            BoundState::Lower => grad[i],
                            BoundState::Upper => -grad[i],
                        }),
                    );
                    return QpSolution {
                        states: qp.recover_states(&x),
                        primal: x,
                        active: ws,
                        multipliers,
                        feasible: true,
                        iterations,
                    };
                }
                Some(i) => {
                    ws[i] = BoundState::Free;
                    at_subspace_min = false;
                }
            }
            continue;
        }

        iterations += 1;
        let free: Vec<usize> = (0..n).filter(|&i| ws[i] == BoundState::Free).collect();
        if free.is_empty() {
            at_subspace_min = true;
            continue;
        }
        let h_ff: DMatrix<f64> = qp.hessian.select_rows(&free).select_columns(&free);
        let rhs = -DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
        let Some(chol) = h_ff.cholesky() else {
            return QpSolution::failed(n, iterations);
        };
        let p = chol.solve(&rhs);
        if !p.iter().all(|v| v.is_finite()) {
            return QpSolution::failed(n, iterations);
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for (k, &i) in free.iter().enumerate() {
            if p[k] < 0.0 && lb[i].is_finite() {
                let t = (lb[i] - x[i]) / p[k];
                if t < alpha {
                    alpha = t.max(0.0);
                    blocking = Some((i, BoundState::Lower));
                }
            } else if p[k] > 0.0 && ub[i].is_finite() {
                let t = (ub[i] - x[i]) / p[k];
                if t < alpha {
                    alpha = t.max(0.0);
                    blocking = Some((i, BoundState::Upper));
                }
            }
        }
        for (k, &i) in free.iter().enumerate() {
            x[i] = (x[i] + alpha * p[k]).clamp(lb[i], ub[i]);
        }
        match blocking {
            Some((i, side)) => {
                ws[i] = side;
                x[i] = if side == BoundState::Lower { lb[i] } else { ub[i] };
            }
            None => at_subspace_min = true,
        }
    }
    QpSolution::failed(n, iterations)
}
