//! Exact unregularised OT for tiny instances, by enumeration of the
//! transportation polytope's basic feasible solutions.
//!
//! A basis is a set of `T + T' - 1` cells forming a spanning tree of the
//! row/column bipartite graph; its flows are fixed by peeling leaves. Every
//! vertex of the polytope arises from some basis, so the minimum over
//! feasible bases is the LP optimum. Only meant as a test oracle.

use super::{CostMatrix, OtError, Result};

/// Largest `T * T'` accepted by the enumeration.
pub const EXACT_MAX_CELLS: usize = 16;

const FEAS_TOL: f64 = 1e-12;

/// Exact OT cost with uniform marginals.
pub fn exact_ot_small(cost: &CostMatrix) -> Result<f64> {
    let a = vec![1.0 / cost.rows() as f64; cost.rows()];
    let b = vec![1.0 / cost.cols() as f64; cost.cols()];
    exact_ot_small_with_marginals(cost, &a, &b)
}

pub fn exact_ot_small_with_marginals(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<f64> {
    let (n, m) = (cost.rows(), cost.cols());
    if n * m > EXACT_MAX_CELLS {
        return Err(OtError::InstanceTooLarge { rows: n, cols: m, max: EXACT_MAX_CELLS });
    }
    if a.len() != n || b.len() != m || n == 0 || m == 0 {
        return Err(OtError::BadMarginals("marginal lengths do not match the cost shape".into()));
    }
    let basis_size = n + m - 1;
    let cells = n * m;
    let c = cost.entries();

    let mut best = f64::INFINITY;
    for mask in 0u32..(1u32 << cells) {
        if mask.count_ones() as usize != basis_size {
            continue;
        }
        if let Some(flow) = solve_basis(mask, n, m, a, b) {
            let total: f64 = flow.iter().enumerate().map(|(k, x)| x * c[(k / m, k % m)]).sum();
            best = best.min(total);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(OtError::BadMarginals("no feasible basis found".into()))
    }
}

/// Peels leaf cells of the basis graph to fix flows. Returns `None` when the
/// cells contain a cycle or the resulting flow is infeasible.
fn solve_basis(mask: u32, n: usize, m: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let mut flow = vec![0.0; n * m];
    let mut open: Vec<bool> = (0..n * m).map(|k| mask & (1 << k) != 0).collect();
    let mut row_rem = a.to_vec();
    let mut col_rem = b.to_vec();
    let mut remaining = mask.count_ones() as usize;

    while remaining > 0 {
        let mut progressed = false;
        for i in 0..n {
            let open_cells: Vec<usize> = (0..m).filter(|&j| open[i * m + j]).collect();
            if let [j] = open_cells[..] {
                let x = row_rem[i];
                flow[i * m + j] = x;
                row_rem[i] = 0.0;
                col_rem[j] -= x;
                open[i * m + j] = false;
                remaining -= 1;
                progressed = true;
            }
        }
        for j in 0..m {
            let open_cells: Vec<usize> = (0..n).filter(|&i| open[i * m + j]).collect();
            if let [i] = open_cells[..] {
                let x = col_rem[j];
                flow[i * m + j] = x;
                col_rem[j] = 0.0;
                row_rem[i] -= x;
                open[i * m + j] = false;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            return None;
        }
    }

    let balanced = row_rem.iter().chain(&col_rem).all(|r| r.abs() <= FEAS_TOL);
    let nonneg = flow.iter().all(|&x| x >= -FEAS_TOL);
    (balanced && nonneg).then_some(flow)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_scalar_cases() {
        assert_eq!(exact_ot_small(&CostMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap(), 0.0);
        assert_eq!(exact_ot_small(&CostMatrix::from_rows(&[[1.0]]).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn two_by_two_matches_endpoint_formula() {
        // plans are [[x, .5-x], [.5-x, x]], cost linear in x, so the optimum
        // is at x = 0 or x = 0.5
        let c = [[0.3, 0.8], [0.6, 0.1]];
        let at = |x: f64| c[0][0] * x + c[0][1] * (0.5 - x) + c[1][0] * (0.5 - x) + c[1][1] * x;
        let want = at(0.0).min(at(0.5));
        let got = exact_ot_small(&CostMatrix::from_rows(&c).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn rectangular_known_value() {
        // rows 1/2, cols 1/3: optimal plan [[1/3, 1/6, 0], [0, 1/6, 1/3]]
        let c = CostMatrix::from_rows(&[[0.0, 0.5, 1.0], [1.0, 0.5, 0.0]]).unwrap();
        let got = exact_ot_small(&c).unwrap();
        assert!((got - 1.0 / 6.0).abs() < 1e-15, "{got}");
    }

    #[test]
    fn too_large_is_rejected() {
        let c = CostMatrix::new(crate::matrix::Matrix::zeros(4, 5), crate::ot::Metric::Cosine).unwrap();
        assert!(matches!(exact_ot_small(&c), Err(OtError::InstanceTooLarge { .. })));
    }
}
