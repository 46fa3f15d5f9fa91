//! Entropy-regularized optimal transport: Gibbs kernel, Sinkhorn scaling and
//! the shortest-path metric induced by a cost matrix.

mod geodesic;
mod sinkhorn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use geodesic::{check_triangle_inequality, geodesic_distance, TRIANGLE_SLACK};
pub use sinkhorn::{
    assemble_coupling, build_kernel, marginal_residual, sinkhorn_solve, Kernel, SinkhornSolution,
    KERNEL_UNDERFLOW_THRESHOLD,
};

/// Tolerance on the total mass of each marginal.
pub const MARGINAL_SUM_TOLERANCE: f64 = 1e-12;

/// Square, non-negative transport cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix(Matrix);

impl CostMatrix {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.n() == 0 {
            return Err(Error::invalid("cost matrix must be at least 1x1"));
        }
        if let Some((k, &x)) = matrix
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite() || **x < 0.0)
        {
            let n = matrix.n();
            return Err(Error::invalid(format!(
                "cost entry ({}, {}) = {x} is not a finite non-negative number",
                k / n,
                k % n
            )));
        }
        Ok(CostMatrix(matrix))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Row and column probability vectors `(r, c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalPair {
    row: Vec<f64>,
    col: Vec<f64>,
}

impl MarginalPair {
    pub fn new(row: Vec<f64>, col: Vec<f64>) -> Result<Self> {
        if row.len() != col.len() {
            return Err(Error::DimensionMismatch {
                what: "column marginal length",
                expected: row.len(),
                actual: col.len(),
            });
        }
        check_probability_vector("row marginal", &row)?;
        check_probability_vector("column marginal", &col)?;
        Ok(MarginalPair { row, col })
    }

    pub fn uniform(n: usize) -> Self {
        let w = 1.0 / n as f64;
        MarginalPair {
            row: vec![w; n],
            col: vec![w; n],
        }
    }

    pub fn row(&self) -> &[f64] {
        &self.row
    }

    pub fn col(&self) -> &[f64] {
        &self.col
    }

    pub fn n(&self) -> usize {
        self.row.len()
    }
}

fn check_probability_vector(what: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
        return Err(Error::invalid(format!(
            "{what} entry {i} = {x} is not a finite non-negative number"
        )));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > MARGINAL_SUM_TOLERANCE {
        return Err(Error::invalid(format!(
            "{what} sums to {total}, expected 1 within {MARGINAL_SUM_TOLERANCE:e}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Naive,
    #[default]
    LogDomain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    /// Maximum allowed L1 marginal residual, both sides summed.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub mode: SolverMode,
}

impl SinkhornConfig {
    pub const DEFAULT_TOLERANCE: f64 = 1e-9;
    pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

    pub fn new(epsilon: f64) -> Self {
        SinkhornConfig {
            epsilon,
            tolerance: Self::DEFAULT_TOLERANCE,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            mode: SolverMode::LogDomain,
        }
    }

    pub fn with_mode(mut self, mode: SolverMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Scaling vectors `u`, `v`, held as natural logarithms. Rows or columns with
/// zero marginal mass carry `-inf` (a zero scaling).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingPair {
    pub log_u: Vec<f64>,
    pub log_v: Vec<f64>,
}

impl ScalingPair {
    pub fn u(&self) -> Vec<f64> {
        self.log_u.iter().map(|x| x.exp()).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.log_v.iter().map(|x| x.exp()).collect()
    }
}

/// Non-negative transport plan. Construction checks entries only; the total
/// mass is checked by [`CouplingMatrix::check_total_mass`].
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix(Matrix);

impl CouplingMatrix {
    pub const TOTAL_MASS_TOLERANCE: f64 = 1e-10;

    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.n() == 0 {
            return Err(Error::invalid("coupling matrix must be at least 1x1"));
        }
        if let Some((k, x)) = matrix
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, x)| !x.is_finite() || **x < 0.0)
        {
            let n = matrix.n();
            return Err(Error::invalid(format!(
                "coupling entry ({}, {}) = {x} is not a finite non-negative number",
                k / n,
                k % n
            )));
        }
        Ok(CouplingMatrix(matrix))
    }

    pub(crate) fn from_matrix_unchecked(matrix: Matrix) -> Self {
        CouplingMatrix(matrix)
    }

    pub fn check_total_mass(&self) -> Result<()> {
        let total = self.0.sum();
        if (total - 1.0).abs() > Self::TOTAL_MASS_TOLERANCE {
            return Err(Error::invalid(format!(
                "coupling mass {total} deviates from 1 by more than {:e}",
                Self::TOTAL_MASS_TOLERANCE
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Smallest strictly positive entry, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.0
            .as_slice()
            .iter()
            .copied()
            .filter(|&x| x > 0.0)
            .min_by(f64::total_cmp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub mode: SolverMode,
    /// Kernel entries that underflowed below the stability threshold (naive mode only).
    pub kernel_underflows: usize,
}

/// All-pairs shortest-path distances over the complete graph weighted by a cost matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix(Matrix);

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.0.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Wraps an explicit distance table. Entries must be finite and non-negative
    /// with a zero diagonal.
    pub fn new(matrix: Matrix) -> Result<Self> {
        let n = matrix.n();
        for i in 0..n {
            if matrix.get(i, i) != 0.0 {
                return Err(Error::invalid(format!("distance diagonal entry {i} is non-zero")));
            }
        }
        if matrix.as_slice().iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("distances must be finite and non-negative"));
        }
        Ok(DistanceMatrix(matrix))
    }

    pub fn max(&self) -> f64 {
        self.0.as_slice().iter().copied().fold(0.0, f64::max)
    }
}
