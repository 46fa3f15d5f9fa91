use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric::log_sum_exp;

use super::{
    CostMatrix, CouplingMatrix, MarginalPair, ScalingPair, SinkhornConfig, SolveReport, SolverMode,
};

/// Kernel entries below this value (subnormal or flushed to zero) count as underflow.
pub const KERNEL_UNDERFLOW_THRESHOLD: f64 = f64::MIN_POSITIVE;

/// Gibbs kernel `K = exp(-C / epsilon)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub matrix: Matrix,
    pub underflow_count: usize,
}

pub fn build_kernel(cost: &CostMatrix, epsilon: f64) -> Result<Kernel> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let c = cost.matrix();
    let matrix = Matrix::from_fn(c.n(), |i, j| (-c.get(i, j) / epsilon).exp());
    let underflow_count = matrix
        .as_slice()
        .iter()
        .filter(|&&k| k < KERNEL_UNDERFLOW_THRESHOLD)
        .count();
    Ok(Kernel {
        matrix,
        underflow_count,
    })
}

/// `P_ij = u_i K_ij v_j`, without normalization.
pub fn assemble_coupling(u: &[f64], kernel: &Kernel, v: &[f64]) -> Result<CouplingMatrix> {
    let n = kernel.matrix.n();
    for (what, len) in [("u length", u.len()), ("v length", v.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                actual: len,
            });
        }
    }
    let k = &kernel.matrix;
    Ok(CouplingMatrix::from_matrix_unchecked(Matrix::from_fn(n, |i, j| {
        u[i] * k.get(i, j) * v[j]
    })))
}

/// `‖P1 − r‖₁ + ‖Pᵀ1 − c‖₁`.
pub fn marginal_residual(coupling: &CouplingMatrix, marginals: &MarginalPair) -> f64 {
    let p = coupling.matrix();
    l1(&p.row_sums(), marginals.row()) + l1(&p.col_sums(), marginals.col())
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Clone, Debug)]
pub struct SinkhornSolution {
    pub coupling: CouplingMatrix,
    pub scaling: ScalingPair,
    pub report: SolveReport,
}

/// Rows and columns with positive marginal mass; the iteration runs on this submatrix.
struct Support {
    rows: Vec<usize>,
    cols: Vec<usize>,
    r: Vec<f64>,
    c: Vec<f64>,
}

impl Support {
    fn new(m: &MarginalPair) -> Self {
        let rows: Vec<usize> = (0..m.n()).filter(|&i| m.row()[i] > 0.0).collect();
        let cols: Vec<usize> = (0..m.n()).filter(|&j| m.col()[j] > 0.0).collect();
        let r = rows.iter().map(|&i| m.row()[i]).collect();
        let c = cols.iter().map(|&j| m.col()[j]).collect();
        Support { rows, cols, r, c }
    }

    fn submatrix(&self, full: &Matrix, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows.len() * self.cols.len());
        for &i in &self.rows {
            for &j in &self.cols {
                out.push(f(full.get(i, j)));
            }
        }
        out
    }

    fn residual(&self, row_sums: &[f64], col_sums: &[f64]) -> f64 {
        l1(row_sums, &self.r) + l1(col_sums, &self.c)
    }
}

/// Sinkhorn fixed-point iteration `u ← r ⊘ (Kv)`, `v ← c ⊘ (Kᵀu)` starting
/// from `v = 1`. The L1 marginal residual is checked after every full sweep.
///
/// Non-convergence is not an error: the last iterate is returned with
/// `converged = false`. A non-finite scaling is an error naming the sweep.
pub fn sinkhorn_solve(
    cost: &CostMatrix,
    marginals: &MarginalPair,
    config: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    config.validate()?;
    if cost.n() != marginals.n() {
        return Err(Error::DimensionMismatch {
            what: "marginal length vs cost size",
            expected: cost.n(),
            actual: marginals.n(),
        });
    }
    let support = Support::new(marginals);
    let (log_u, log_v, mut report) = match config.mode {
        SolverMode::LogDomain => solve_log_domain(cost, &support, config)?,
        SolverMode::Naive => solve_naive(cost, &support, config)?,
    };

    let n = cost.n();
    let eps = config.epsilon;
    let mut full_u = vec![f64::NEG_INFINITY; n];
    let mut full_v = vec![f64::NEG_INFINITY; n];
    for (a, &i) in support.rows.iter().enumerate() {
        full_u[i] = log_u[a];
    }
    for (b, &j) in support.cols.iter().enumerate() {
        full_v[j] = log_v[b];
    }
    let p = match config.mode {
        SolverMode::LogDomain => Matrix::from_fn(n, |i, j| {
            if full_u[i] == f64::NEG_INFINITY || full_v[j] == f64::NEG_INFINITY {
                0.0
            } else {
                (full_u[i] + full_v[j] - cost.get(i, j) / eps).exp()
            }
        }),
        SolverMode::Naive => {
            let u: Vec<f64> = full_u.iter().map(|x| x.exp()).collect();
            let v: Vec<f64> = full_v.iter().map(|x| x.exp()).collect();
            Matrix::from_fn(n, |i, j| u[i] * (-cost.get(i, j) / eps).exp() * v[j])
        }
    };
    if config.mode == SolverMode::Naive {
        report.kernel_underflows = build_kernel(cost, eps)?.underflow_count;
    }
    Ok(SinkhornSolution {
        coupling: CouplingMatrix::from_matrix_unchecked(p),
        scaling: ScalingPair {
            log_u: full_u,
            log_v: full_v,
        },
        report,
    })
}

type Iterates = (Vec<f64>, Vec<f64>, SolveReport);

fn solve_log_domain(cost: &CostMatrix, s: &Support, cfg: &SinkhornConfig) -> Result<Iterates> {
    let (ni, nj) = (s.rows.len(), s.cols.len());
    let eps = cfg.epsilon;
    // -C/eps on the support, row-major ni x nj
    let neg = s.submatrix(cost.matrix(), |c| -c / eps);
    let log_r: Vec<f64> = s.r.iter().map(|x| x.ln()).collect();
    let log_c: Vec<f64> = s.c.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; ni];
    let mut g = vec![0.0; nj];
    let mut col_max = vec![0.0; nj];
    let mut col_acc = vec![0.0; nj];
    let mut row_sums = vec![0.0; ni];
    let mut col_sums = vec![0.0; nj];

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=cfg.max_iterations {
        iterations = it;
        for a in 0..ni {
            let row = &neg[a * nj..(a + 1) * nj];
            f[a] = log_r[a] - log_sum_exp(row.iter().zip(&g).map(|(k, gb)| k + gb));
        }
        ensure_finite(&f, "u", it)?;

        // column-wise log-sum-exp, traversed row-major
        col_max.fill(f64::NEG_INFINITY);
        for a in 0..ni {
            let row = &neg[a * nj..(a + 1) * nj];
            for b in 0..nj {
                col_max[b] = f64::max(col_max[b], row[b] + f[a]);
            }
        }
        col_acc.fill(0.0);
        for a in 0..ni {
            let row = &neg[a * nj..(a + 1) * nj];
            for b in 0..nj {
                col_acc[b] += (row[b] + f[a] - col_max[b]).exp();
            }
        }
        for b in 0..nj {
            g[b] = log_c[b] - (col_max[b] + col_acc[b].ln());
        }
        ensure_finite(&g, "v", it)?;

        row_sums.fill(0.0);
        col_sums.fill(0.0);
        for a in 0..ni {
            let row = &neg[a * nj..(a + 1) * nj];
            for b in 0..nj {
                let p = (f[a] + g[b] + row[b]).exp();
                row_sums[a] += p;
                col_sums[b] += p;
            }
        }
        residual = s.residual(&row_sums, &col_sums);
        if residual <= cfg.tolerance {
            break;
        }
    }
    let report = SolveReport {
        iterations,
        final_residual: residual,
        converged: residual <= cfg.tolerance,
        mode: SolverMode::LogDomain,
        kernel_underflows: 0,
    };
    Ok((f, g, report))
}

fn solve_naive(cost: &CostMatrix, s: &Support, cfg: &SinkhornConfig) -> Result<Iterates> {
    let (ni, nj) = (s.rows.len(), s.cols.len());
    let eps = cfg.epsilon;
    let k = s.submatrix(cost.matrix(), |c| (-c / eps).exp());
    let mut u = vec![1.0; ni];
    let mut v = vec![1.0; nj];
    let mut ktu = vec![0.0; nj];
    let mut row_sums = vec![0.0; ni];
    let mut col_sums = vec![0.0; nj];

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=cfg.max_iterations {
        iterations = it;
        for a in 0..ni {
            let kv: f64 = k[a * nj..(a + 1) * nj].iter().zip(&v).map(|(x, y)| x * y).sum();
            u[a] = s.r[a] / kv;
        }
        ensure_finite_positive(&u, "u", it)?;

        ktu.fill(0.0);
        for a in 0..ni {
            for b in 0..nj {
                ktu[b] += k[a * nj + b] * u[a];
            }
        }
        for b in 0..nj {
            v[b] = s.c[b] / ktu[b];
        }
        ensure_finite_positive(&v, "v", it)?;

        row_sums.fill(0.0);
        col_sums.fill(0.0);
        for a in 0..ni {
            for b in 0..nj {
                let p = u[a] * k[a * nj + b] * v[b];
                row_sums[a] += p;
                col_sums[b] += p;
            }
        }
        residual = s.residual(&row_sums, &col_sums);
        if residual <= cfg.tolerance {
            break;
        }
    }
    let report = SolveReport {
        iterations,
        final_residual: residual,
        converged: residual <= cfg.tolerance,
        mode: SolverMode::Naive,
        kernel_underflows: 0,
    };
    let log_u = u.iter().map(|x| x.ln()).collect();
    let log_v = v.iter().map(|x| x.ln()).collect();
    Ok((log_u, log_v, report))
}

fn ensure_finite(xs: &[f64], what: &'static str, iteration: usize) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what, iteration })
    }
}

fn ensure_finite_positive(xs: &[f64], what: &'static str, iteration: usize) -> Result<()> {
    if xs.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(Error::NonFinite { what, iteration })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap_cost() -> CostMatrix {
        CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    /// Closed form for the symmetric 2x2 problem with r = c = (1/2, 1/2):
    /// a + b = 1/2 and b / a = exp(-1/eps).
    fn symmetric_closed_form(eps: f64) -> (f64, f64) {
        let ratio = (-1.0 / eps).exp();
        let a = 1.0 / (2.0 * (1.0 + ratio));
        (a, ratio * a)
    }

    /// Plain fixed-point iteration on 2x2 arrays, independent of the solver.
    fn symmetric_by_iteration(eps: f64) -> [[f64; 2]; 2] {
        let k = [[1.0, (-1.0 / eps).exp()], [(-1.0 / eps).exp(), 1.0]];
        let (mut u, mut v) = ([1.0; 2], [1.0; 2]);
        for _ in 0..200 {
            for i in 0..2 {
                u[i] = 0.5 / (k[i][0] * v[0] + k[i][1] * v[1]);
            }
            for j in 0..2 {
                v[j] = 0.5 / (k[0][j] * u[0] + k[1][j] * u[1]);
            }
        }
        let mut p = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                p[i][j] = u[i] * k[i][j] * v[j];
            }
        }
        p
    }

    #[test]
    fn kernel_of_zero_cost_is_ones() {
        let k = build_kernel(&CostMatrix::new(Matrix::zeros(2)).unwrap(), 1.0).unwrap();
        assert!(k.matrix.as_slice().iter().all(|&x| x == 1.0));
        assert_eq!(k.underflow_count, 0);
    }

    #[test]
    fn kernel_of_swap_cost() {
        let k = build_kernel(&swap_cost(), 1.0).unwrap();
        assert_eq!(k.matrix.get(0, 0), 1.0);
        assert!((k.matrix.get(0, 1) - 0.367_879_441_171_442_33).abs() < 1e-15);
        assert!((k.matrix.get(1, 0) - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn kernel_underflow_is_flagged() {
        let c = CostMatrix::from_rows(&[vec![0.0, 100.0], vec![100.0, 0.0]]).unwrap();
        let k = build_kernel(&c, 0.01).unwrap();
        assert_eq!(k.underflow_count, 2);
        assert!(build_kernel(&c, 0.0).is_err());
    }

    #[test]
    fn constant_cost_gives_independent_coupling() {
        let c = CostMatrix::new(Matrix::filled(2, 3.7)).unwrap();
        let m = MarginalPair::uniform(2);
        for mode in [SolverMode::Naive, SolverMode::LogDomain] {
            let sol = sinkhorn_solve(&c, &m, &SinkhornConfig::new(0.3).with_mode(mode)).unwrap();
            assert!(sol.report.converged);
            for x in sol.coupling.matrix().as_slice() {
                assert!((x - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn symmetric_two_by_two_matches_closed_form() {
        let (a, b) = symmetric_closed_form(1.0);
        let iterated = symmetric_by_iteration(1.0);
        assert!((iterated[0][0] - a).abs() < 1e-15 && (iterated[0][1] - b).abs() < 1e-15);
        assert!((a - 0.3655293).abs() < 1e-7 && (b - 0.1344707).abs() < 1e-7);

        let m = MarginalPair::uniform(2);
        for mode in [SolverMode::Naive, SolverMode::LogDomain] {
            let cfg = SinkhornConfig::new(1.0).with_mode(mode);
            let sol = sinkhorn_solve(&swap_cost(), &m, &cfg).unwrap();
            let p = sol.coupling.matrix();
            assert!((p.get(0, 0) - a).abs() < 1e-12, "{mode:?}");
            assert!((p.get(1, 1) - a).abs() < 1e-12);
            assert!((p.get(0, 1) - b).abs() < 1e-12);
            assert!((p.get(1, 0) - b).abs() < 1e-12);
            assert!(sol.report.final_residual <= cfg.tolerance);
        }
    }

    #[test]
    fn reassembling_solved_scalings_reproduces_coupling() {
        let (a, b) = symmetric_closed_form(1.0);
        let m = MarginalPair::uniform(2);
        let sol = sinkhorn_solve(&swap_cost(), &m, &SinkhornConfig::new(1.0)).unwrap();
        let k = build_kernel(&swap_cost(), 1.0).unwrap();
        let p = assemble_coupling(&sol.scaling.u(), &k, &sol.scaling.v()).unwrap();
        assert!((p.get(0, 0) - a).abs() < 1e-12);
        assert!((p.get(0, 1) - b).abs() < 1e-12);
    }

    #[test]
    fn dirac_marginals_force_single_cell() {
        let m = MarginalPair::new(vec![1.0, 0.0], vec![1.0, 0.0]).unwrap();
        for mode in [SolverMode::Naive, SolverMode::LogDomain] {
            let sol =
                sinkhorn_solve(&swap_cost(), &m, &SinkhornConfig::new(0.5).with_mode(mode)).unwrap();
            assert_eq!(sol.coupling.matrix().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
            assert_eq!(sol.scaling.log_u[1], f64::NEG_INFINITY);
        }
    }

    #[test]
    fn assemble_identity_scaling_and_outer_product() {
        let k = build_kernel(&swap_cost(), 2.0).unwrap();
        let p = assemble_coupling(&[1.0, 1.0], &k, &[1.0, 1.0]).unwrap();
        assert_eq!(p.matrix(), &k.matrix);

        let ones = Kernel {
            matrix: Matrix::filled(2, 1.0),
            underflow_count: 0,
        };
        let p = assemble_coupling(&[2.0, 0.5], &ones, &[0.5, 2.0]).unwrap();
        assert_eq!(p.matrix().as_slice(), &[1.0, 4.0, 0.25, 1.0]);
        assert!(p.check_total_mass().is_err());
        assert!(assemble_coupling(&[1.0], &ones, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn residual_examples() {
        let m = MarginalPair::uniform(2);
        let indep = CouplingMatrix::new(Matrix::filled(2, 0.25)).unwrap();
        assert!(marginal_residual(&indep, &m) <= 1e-15);
        let diag = CouplingMatrix::new(Matrix::from_fn(2, |i, j| if i == j { 0.5 } else { 0.0 }))
            .unwrap();
        assert_eq!(marginal_residual(&diag, &m), 0.0);
        let corner = CouplingMatrix::new(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap())
            .unwrap();
        assert_eq!(marginal_residual(&corner, &m), 2.0);
    }

    #[test]
    fn forced_non_convergence_is_reported() {
        let c = CostMatrix::from_rows(&[
            vec![0.0, 2.0, 5.0],
            vec![2.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ])
        .unwrap();
        let m = MarginalPair::new(vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]).unwrap();
        let cfg = SinkhornConfig::new(0.2).with_max_iterations(1);
        let sol = sinkhorn_solve(&c, &m, &cfg).unwrap();
        assert!(!sol.report.converged);
        assert_eq!(sol.report.iterations, 1);
        assert!(sol.report.final_residual > cfg.tolerance);
    }

    #[test]
    fn naive_underflow_is_a_hard_error_naming_the_sweep() {
        // row 0 sees only underflowed kernel entries against column 1's mass
        let c = CostMatrix::from_rows(&[vec![1e4, 1e4], vec![0.0, 0.0]]).unwrap();
        let m = MarginalPair::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let err = sinkhorn_solve(&c, &m, &SinkhornConfig::new(0.01).with_mode(SolverMode::Naive))
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { iteration: 1, .. }), "{err}");
        // the stabilized iteration handles the same instance
        let sol = sinkhorn_solve(&c, &m, &SinkhornConfig::new(0.01)).unwrap();
        assert!(sol.report.converged);
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let m = MarginalPair::uniform(3);
        assert!(sinkhorn_solve(&swap_cost(), &m, &SinkhornConfig::new(1.0)).is_err());
        let m = MarginalPair::uniform(2);
        assert!(sinkhorn_solve(&swap_cost(), &m, &SinkhornConfig::new(-1.0)).is_err());
        assert!(
            sinkhorn_solve(&swap_cost(), &m, &SinkhornConfig::new(1.0).with_max_iterations(0))
                .is_err()
        );
    }
}
