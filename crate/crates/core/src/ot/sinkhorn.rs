use serde::{Deserialize, Serialize};

use super::{CostMatrix, OtError, Result};
use crate::matrix::Matrix;

/// Sinkhorn-Knopp solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Entropic regularisation strength, in cost units. Must be positive.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Largest accepted absolute deviation of any row or column sum.
    pub tol_marginal: f64,
    /// Iterate on log-potentials instead of kernel scalings.
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, max_iters: 1000, tol_marginal: 1e-6, log_domain: true }
    }
}

impl SinkhornConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol_marginal: f64) -> Self {
        self.tol_marginal = tol_marginal;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(OtError::InvalidConfig(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(OtError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.tol_marginal >= 0.0) {
            return Err(OtError::InvalidConfig(format!("tol_marginal must be >= 0, got {}", self.tol_marginal)));
        }
        Ok(())
    }
}

/// Coupling returned by Sinkhorn together with its cost and solver status.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub coupling: Matrix,
    /// `sum_ij C_ij M_ij` of `coupling`.
    pub cost: f64,
    pub iterations: usize,
    /// True when every marginal of `coupling` is within `tol_marginal`.
    pub converged: bool,
    /// Largest absolute row- or column-sum deviation of `coupling`.
    pub marginal_error: f64,
}

impl TransportPlan {
    /// Recomputes `sum_ij C_ij M_ij` for this coupling.
    pub fn recompute_cost(&self, cost: &CostMatrix) -> f64 {
        cost.entries().dot(&self.coupling)
    }
}

/// Entropic OT with uniform marginals `1/T` on rows and `1/T'` on columns.
pub fn sinkhorn(cost: &CostMatrix, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    let a = vec![1.0 / cost.rows() as f64; cost.rows()];
    let b = vec![1.0 / cost.cols() as f64; cost.cols()];
    sinkhorn_with_marginals(cost, &a, &b, cfg)
}

/// Entropic OT between arbitrary positive marginals of equal total mass.
pub fn sinkhorn_with_marginals(cost: &CostMatrix, a: &[f64], b: &[f64], cfg: &SinkhornConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    check_marginals(cost.entries(), a, b)?;
    let c = cost.entries();
    let state = if cfg.log_domain { log_domain(c, a, b, cfg) } else { kernel_domain(c, a, b, cfg)? };
    let (coupling, iterations) = state;
    let marginal_error = marginal_error(&coupling, a, b);
    Ok(TransportPlan {
        cost: c.dot(&coupling),
        coupling,
        iterations,
        converged: marginal_error <= cfg.tol_marginal,
        marginal_error,
    })
}

fn check_marginals(c: &Matrix, a: &[f64], b: &[f64]) -> Result<()> {
    if c.rows() == 0 || c.cols() == 0 {
        return Err(OtError::BadMarginals("cost matrix is empty".into()));
    }
    if a.len() != c.rows() || b.len() != c.cols() {
        return Err(OtError::BadMarginals(format!(
            "cost is {}x{}, marginals have lengths {} and {}",
            c.rows(),
            c.cols(),
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(OtError::BadMarginals("marginal weights must be positive".into()));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > 1e-9 * sa.max(sb) {
        return Err(OtError::BadMarginals(format!("total masses differ: {sa} vs {sb}")));
    }
    Ok(())
}

fn marginal_error(p: &Matrix, a: &[f64], b: &[f64]) -> f64 {
    let rows = p.row_sums().into_iter().zip(a).map(|(s, m)| (s - m).abs());
    let cols = p.col_sums().into_iter().zip(b).map(|(s, m)| (s - m).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Alternating updates of scaled dual potentials `u = f/eps`, `v = g/eps`.
/// The plan is `M_ij = exp(u_i + v_j - C_ij/eps)`.
fn log_domain(c: &Matrix, a: &[f64], b: &[f64], cfg: &SinkhornConfig) -> (Matrix, usize) {
    let (n, m) = (c.rows(), c.cols());
    let neg_c = c.map(|x| -x / cfg.epsilon);
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let mut row_lse = vec![0.0; n];
    let mut iterations = 0;

    loop {
        for i in 0..n {
            let row = neg_c.row(i);
            row_lse[i] = log_sum_exp(row.iter().zip(&v).map(|(k, vj)| k + vj));
        }
        // After a column update the columns are exact; row sums are exp(u_i + row_lse_i).
        if iterations > 0 {
            let err = (0..n).map(|i| ((u[i] + row_lse[i]).exp() - a[i]).abs()).fold(0.0, f64::max);
            if iterations >= cfg.max_iters {
                break;
            }
            // rounding in the materialised plan can push a borderline estimate over tol
            if err <= cfg.tol_marginal && marginal_error(&plan_of(&u, &v, &neg_c), a, b) <= cfg.tol_marginal {
                break;
            }
        }
        for i in 0..n {
            u[i] = log_a[i] - row_lse[i];
        }
        for j in 0..m {
            let col = (0..n).map(|i| neg_c[(i, j)] + u[i]);
            v[j] = log_b[j] - log_sum_exp(col);
        }
        iterations += 1;
    }

    (plan_of(&u, &v, &neg_c), iterations)
}

fn plan_of(u: &[f64], v: &[f64], neg_c: &Matrix) -> Matrix {
    Matrix::from_fn(u.len(), v.len(), |i, j| (u[i] + v[j] + neg_c[(i, j)]).exp())
}

/// Classic scaling `M = diag(x) K diag(y)` with `K = exp(-C/eps)`.
fn kernel_domain(c: &Matrix, a: &[f64], b: &[f64], cfg: &SinkhornConfig) -> Result<(Matrix, usize)> {
    let (n, m) = (c.rows(), c.cols());
    let k = c.map(|x| (-x / cfg.epsilon).exp());
    let mut x = vec![1.0; n];
    let mut y = vec![1.0; m];
    let mut iterations = 0;

    loop {
        let ky: Vec<f64> = (0..n).map(|i| k.row(i).iter().zip(&y).map(|(kij, yj)| kij * yj).sum()).collect();
        if iterations > 0 {
            let err = (0..n).map(|i| (x[i] * ky[i] - a[i]).abs()).fold(0.0, f64::max);
            if err <= cfg.tol_marginal || iterations >= cfg.max_iters {
                break;
            }
        }
        for i in 0..n {
            x[i] = a[i] / ky[i];
        }
        for j in 0..m {
            let kx: f64 = (0..n).map(|i| k[(i, j)] * x[i]).sum();
            y[j] = b[j] / kx;
        }
        iterations += 1;
        if x.iter().chain(&y).any(|s| !s.is_finite() || *s == 0.0) {
            return Err(OtError::NumericalOverflow { iteration: iterations });
        }
    }

    Ok((Matrix::from_fn(n, m, |i, j| x[i] * k[(i, j)] * y[j]), iterations))
}

/// Balanced soft assignment of `B` samples to `K` prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeAssignment {
    /// `B x K`, rows sum to `1/B`, columns to `1/K`.
    pub codes: Matrix,
    pub iterations: usize,
    pub converged: bool,
}

impl CodeAssignment {
    /// Per-sample code distributions: each row rescaled to sum to one.
    pub fn targets(&self) -> Matrix {
        let sums = self.codes.row_sums();
        Matrix::from_fn(self.codes.rows(), self.codes.cols(), |i, j| self.codes[(i, j)] / sums[i])
    }
}

/// Equal-partition code assignment: maximises `<Q, scores> + eps H(Q)` over
/// the transportation polytope with row sums `1/B` and column sums `1/K`.
pub fn swav_codes(scores: &Matrix, cfg: &SinkhornConfig) -> Result<CodeAssignment> {
    let cost = CostMatrix::new(scores.map(|s| -s), super::Metric::Cosine)?;
    let plan = sinkhorn(&cost, cfg)?;
    Ok(CodeAssignment { codes: plan.coupling, iterations: plan.iterations, converged: plan.converged })
}
