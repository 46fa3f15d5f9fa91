//! Test instances and closed-form oracles.
//!
//! Random draws use ChaCha8 (`rand_chacha`) seeded with `seed_from_u64`.
//! Cost entries and point coordinates come from stream 0, marginals from
//! stream 1, and uniforms are formed as `low + (high - low) * U` with `U`
//! the 53-bit `[0, 1)` sample, so outputs depend only on the seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ot::{CostMatrix, CouplingMatrix, MarginalPair, MARGINAL_SUM_TOLERANCE};

const COST_STREAM: u64 = 0;
const MARGINAL_STREAM: u64 = 1;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeSpec {
    pub p: f64,
    pub depth: u32,
}

impl CascadeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::invalid(format!("cascade weight p must lie in (0, 1), got {}", self.p)));
        }
        if self.depth == 0 || self.depth > 30 {
            return Err(Error::invalid(format!("cascade depth must be in 1..=30, got {}", self.depth)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        1 << self.depth
    }
}

/// Binomial cascade of length `2^depth`. Index bits, most significant first,
/// are the left (weight `p`) / right (weight `1 - p`) choices.
pub fn binomial_cascade(p: f64, depth: u32) -> Result<Vec<f64>> {
    let spec = CascadeSpec { p, depth };
    spec.validate()?;
    let mut masses = vec![1.0];
    for _ in 0..depth {
        masses = masses.iter().flat_map(|&m| [m * p, m * (1.0 - p)]).collect();
    }
    Ok(masses)
}

/// `dims * (-log2(p^q + (1-p)^q))`, the scaling function of a `dims`-fold
/// product of binomial cascades.
pub fn cascade_exact_tau(p: f64, q: f64, dims: u32) -> f64 {
    -(dims as f64) * (p.powf(q) + (1.0 - p).powf(q)).log2()
}

/// Derivative of [`cascade_exact_tau`] in `q`.
pub fn cascade_exact_alpha(p: f64, q: f64, dims: u32) -> f64 {
    let (a, b) = (p.powf(q), (1.0 - p).powf(q));
    -(dims as f64) * (a * p.ln() + b * (1.0 - p).ln()) / ((a + b) * std::f64::consts::LN_2)
}

/// Independent coupling `P_ij = r_i c_j`.
pub fn product_coupling(r: &[f64], c: &[f64]) -> Result<CouplingMatrix> {
    let m = MarginalPair::new(r.to_vec(), c.to_vec())?;
    CouplingMatrix::new(Matrix::from_fn(m.n(), |i, j| r[i] * c[j]))
}

/// `n` points uniform on `[0, 1)^dimension` and their Euclidean distance matrix.
pub fn euclidean_cost(n: usize, dimension: usize, seed: u64) -> Result<(CostMatrix, Vec<Vec<f64>>)> {
    if n < 2 || dimension == 0 {
        return Err(Error::invalid("euclidean_cost needs n >= 2 and dimension >= 1"));
    }
    let mut rng = rng(seed, COST_STREAM);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dimension).map(|_| rng.gen::<f64>()).collect())
        .collect();
    Ok((euclidean_from_points(&points)?, points))
}

pub fn euclidean_from_points(points: &[Vec<f64>]) -> Result<CostMatrix> {
    CostMatrix::new(Matrix::from_fn(points.len(), |i, j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }))
}

/// Entries uniform on `[low, high)`, symmetrized as `(A + Aᵀ)/2`, zero diagonal.
pub fn random_uniform_cost(n: usize, seed: u64, low: f64, high: f64) -> Result<CostMatrix> {
    if !(0.0 <= low && low < high && high.is_finite()) {
        return Err(Error::invalid(format!("need 0 <= low < high, got [{low}, {high}]")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let mut rng = rng(seed, COST_STREAM);
    let raw: Vec<f64> = (0..n * n).map(|_| low + (high - low) * rng.gen::<f64>()).collect();
    CostMatrix::new(Matrix::from_fn(n, |i, j| {
        if i == j {
            0.0
        } else {
            0.5 * (raw[i * n + j] + raw[j * n + i])
        }
    }))
}

/// Strictly positive probability vector with weights uniform on `[0.1, 1)` before normalization.
pub fn random_marginal(n: usize, seed: u64, stream_offset: u64) -> Vec<f64> {
    let mut rng = rng(seed, MARGINAL_STREAM + stream_offset);
    let raw: Vec<f64> = (0..n).map(|_| 0.1 + 0.9 * rng.gen::<f64>()).collect();
    normalize(raw)
}

fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let mut v: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // push the rounding residue into the largest entry
    let residue = 1.0 - v.iter().sum::<f64>();
    if residue.abs() > MARGINAL_SUM_TOLERANCE / 10.0 {
        if let Some(max) = v.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *max += residue;
        }
    }
    v
}

/// Random row and column marginals for a seed (independent streams).
pub fn random_marginals(n: usize, seed: u64) -> Result<MarginalPair> {
    MarginalPair::new(random_marginal(n, seed, 0), random_marginal(n, seed, 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    CascadeProduct { p: f64, depth: u32 },
    EuclideanPoints { dimension: usize },
    RandomUniformCost { low: f64, high: f64 },
    ConstantCost { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(flatten)]
    pub family: Family,
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub cost: CostMatrix,
    pub marginals: MarginalPair,
    /// Known coupling, when the family has one in closed form.
    pub coupling: Option<CouplingMatrix>,
    pub points: Option<Vec<Vec<f64>>>,
}

/// Builds an instance; deterministic in `spec`. Cascade products ignore `n`
/// (the size is `2^depth`) and carry a zero cost, whose Sinkhorn coupling is
/// the product itself.
pub fn generate_instance(spec: &InstanceSpec) -> Result<Instance> {
    let n = spec.n;
    let needs_n = !matches!(spec.family, Family::CascadeProduct { .. });
    if needs_n && n < 2 {
        return Err(Error::invalid(format!("instance size must be at least 2, got {n}")));
    }
    match spec.family {
        Family::CascadeProduct { p, depth } => {
            let r = binomial_cascade(p, depth)?;
            let coupling = product_coupling(&r, &r)?;
            Ok(Instance {
                cost: CostMatrix::new(Matrix::zeros(r.len()))?,
                marginals: MarginalPair::new(r.clone(), r)?,
                coupling: Some(coupling),
                points: None,
            })
        }
        Family::EuclideanPoints { dimension } => {
            let (cost, points) = euclidean_cost(n, dimension, spec.seed)?;
            Ok(Instance {
                cost,
                marginals: random_marginals(n, spec.seed)?,
                coupling: None,
                points: Some(points),
            })
        }
        Family::RandomUniformCost { low, high } => Ok(Instance {
            cost: random_uniform_cost(n, spec.seed, low, high)?,
            marginals: random_marginals(n, spec.seed)?,
            coupling: None,
            points: None,
        }),
        Family::ConstantCost { value } => {
            let cost = CostMatrix::new(Matrix::filled(n, value))?;
            let marginals = random_marginals(n, spec.seed)?;
            let coupling = product_coupling(marginals.row(), marginals.col())?;
            Ok(Instance {
                cost,
                marginals,
                coupling: Some(coupling),
                points: None,
            })
        }
    }
}
