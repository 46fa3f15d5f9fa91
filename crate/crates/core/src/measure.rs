//! A coupling matrix read as a probability measure on the unit square, and
//! its multi-scale coverings.
//!
//! Cell `(i, j)` of an `n x n` matrix sits at `((i + 1/2)/n, (j + 1/2)/n)`.
//! Dyadic coverings need a `2^K` grid: other sizes are embedded in the
//! smallest `2^K >= n` grid and padded with zero mass, so partial sums stay
//! exact and the padding only shows up as dropped empty boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ot::{CouplingMatrix, DistanceMatrix};

/// Dimension of the ambient space the grid is embedded in.
pub const AMBIENT_DIMENSION: u32 = 2;

/// Masses are renormalized when the total deviates from 1 by more than this.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-12;

pub const MIN_LEVELS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    masses: Matrix,
    /// `total - 1` of the input when it was renormalized.
    renormalized_deviation: Option<f64>,
}

impl GridMeasure {
    pub fn n(&self) -> usize {
        self.masses.n()
    }

    pub fn masses(&self) -> &Matrix {
        &self.masses
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.masses.get(i, j)
    }

    pub fn renormalized_deviation(&self) -> Option<f64> {
        self.renormalized_deviation
    }

    /// Exponent `K` of the smallest `2^K >= n`.
    pub fn padded_exponent(&self) -> u32 {
        self.n().next_power_of_two().trailing_zeros()
    }

    pub fn padded_n(&self) -> usize {
        1 << self.padded_exponent()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let n = self.n() as f64;
        ((i as f64 + 0.5) / n, (j as f64 + 0.5) / n)
    }

    pub fn transpose(&self) -> GridMeasure {
        GridMeasure {
            masses: self.masses.transpose(),
            renormalized_deviation: self.renormalized_deviation,
        }
    }
}

pub fn measure_from_coupling(coupling: &CouplingMatrix) -> Result<GridMeasure> {
    let total = coupling.matrix().sum();
    if total <= 0.0 {
        return Err(Error::EmptyMeasure);
    }
    let deviation = total - 1.0;
    if deviation.abs() > RENORMALIZE_THRESHOLD {
        let masses = Matrix::from_fn(coupling.n(), |i, j| coupling.get(i, j) / total);
        Ok(GridMeasure {
            masses,
            renormalized_deviation: Some(deviation),
        })
    } else {
        Ok(GridMeasure {
            masses: coupling.matrix().clone(),
            renormalized_deviation: None,
        })
    }
}

/// Dyadic levels `k`, box side `2^-k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    levels: Vec<u32>,
}

impl ScaleSet {
    pub fn new(levels: Vec<u32>) -> Result<Self> {
        if levels.len() < MIN_LEVELS {
            return Err(Error::TooFewLevels {
                required: MIN_LEVELS,
                actual: levels.len(),
            });
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("scale levels must be strictly increasing"));
        }
        Ok(ScaleSet { levels })
    }

    /// Inclusive range `k_min..=k_max`.
    pub fn range(k_min: u32, k_max: u32) -> Result<Self> {
        Self::new((k_min..=k_max).collect())
    }

    /// Default scales for a measure: `k = 2 ..= log2(padded n)`.
    pub fn default_for(mu: &GridMeasure) -> Result<Self> {
        Self::range(2, mu.padded_exponent())
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn finest(&self) -> u32 {
        *self.levels.last().expect("validated non-empty")
    }

    fn check_against(&self, mu: &GridMeasure) -> Result<()> {
        let max_level = mu.padded_exponent();
        match self.levels.iter().find(|&&k| k > max_level) {
            Some(&level) => Err(Error::ScaleTooFine { level, max_level }),
            None => Ok(()),
        }
    }
}

/// Retained (positive) box masses at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMasses {
    pub level: u32,
    /// `log2` of the scale: `-k` for dyadic boxes, `log2(radius)` for metric balls.
    pub log2_scale: f64,
    pub masses: Vec<f64>,
    /// Empty boxes (including padding) left out of `masses`.
    pub dropped_boxes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseGraining {
    pub levels: Vec<LevelMasses>,
}

impl CoarseGraining {
    /// Treats a family of metric coverings as scales, one level per covering.
    pub fn from_metric_coverings(coverings: &[(u32, MetricCovering)]) -> Self {
        let levels = coverings
            .iter()
            .map(|(level, cov)| LevelMasses {
                level: *level,
                log2_scale: cov.radius.log2(),
                masses: cov.balls.iter().map(|b| b.mass).collect(),
                dropped_boxes: 0,
            })
            .collect();
        CoarseGraining { levels }
    }

    pub fn box_counts(&self) -> Vec<(u32, usize)> {
        self.levels.iter().map(|l| (l.level, l.masses.len())).collect()
    }
}

/// Dense box masses for every level `0..=K` of the padded grid; level `k` is a
/// `2^k x 2^k` row-major grid. Level `K` holds the padded cells themselves.
pub(crate) fn dense_pyramid(mu: &GridMeasure) -> Vec<Vec<f64>> {
    let big_k = mu.padded_exponent();
    let side = mu.padded_n();
    let n = mu.n();
    let mut finest = vec![0.0; side * side];
    for i in 0..n {
        finest[i * side..i * side + n].copy_from_slice(mu.masses().row(i));
    }
    let mut pyramid = vec![finest];
    for k in (0..big_k).rev() {
        let fine_side = 1usize << (k + 1);
        let s = 1usize << k;
        let fine = pyramid.last().unwrap();
        let mut coarse = vec![0.0; s * s];
        for a in 0..s {
            for b in 0..s {
                let r0 = 2 * a * fine_side;
                let r1 = (2 * a + 1) * fine_side;
                coarse[a * s + b] =
                    (fine[r0 + 2 * b] + fine[r0 + 2 * b + 1]) + (fine[r1 + 2 * b] + fine[r1 + 2 * b + 1]);
            }
        }
        pyramid.push(coarse);
    }
    pyramid.reverse();
    pyramid
}

/// Box masses per requested level; empty boxes are dropped.
pub fn dyadic_coarsen(mu: &GridMeasure, scales: &ScaleSet) -> Result<CoarseGraining> {
    scales.check_against(mu)?;
    let pyramid = dense_pyramid(mu);
    let levels = scales
        .levels()
        .iter()
        .map(|&k| {
            let dense = &pyramid[k as usize];
            let masses: Vec<f64> = dense.iter().copied().filter(|&m| m > 0.0).collect();
            LevelMasses {
                level: k,
                log2_scale: -(k as f64),
                dropped_boxes: dense.len() - masses.len(),
                masses,
            }
        })
        .collect();
    Ok(CoarseGraining { levels })
}

/// Cell distance `d_row(i, i') + d_col(j, j')` built from per-axis distances.
#[derive(Clone, Debug)]
pub struct ProductMetric {
    pub rows: DistanceMatrix,
    pub cols: DistanceMatrix,
}

impl ProductMetric {
    pub fn new(rows: DistanceMatrix, cols: DistanceMatrix) -> Self {
        ProductMetric { rows, cols }
    }

    pub fn symmetric(d: DistanceMatrix) -> Self {
        ProductMetric {
            rows: d.clone(),
            cols: d,
        }
    }

    pub fn distance(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        self.rows.get(a.0, b.0) + self.cols.get(a.1, b.1)
    }

    /// Upper bound on the distance between any two cells.
    pub fn diameter(&self) -> f64 {
        self.rows.max() + self.cols.max()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: (usize, usize),
    pub mass: f64,
    pub cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCovering {
    pub radius: f64,
    pub balls: Vec<Ball>,
}

/// Greedy disjoint covering of the support: the heaviest uncovered cell
/// (smallest linear index on ties) becomes a center and absorbs every
/// uncovered cell within `radius`. Quadratic in the support size.
pub fn metric_balls(mu: &GridMeasure, metric: &ProductMetric, radius: f64) -> Result<MetricCovering> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let n = mu.n();
    if metric.rows.n() != n || metric.cols.n() != n {
        return Err(Error::DimensionMismatch {
            what: "metric size vs measure size",
            expected: n,
            actual: metric.rows.n().max(metric.cols.n()),
        });
    }
    let mut cells: Vec<(usize, f64)> = mu
        .masses()
        .as_slice()
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, m)| *m > 0.0)
        .collect();
    cells.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut covered = vec![false; cells.len()];
    let mut balls = Vec::new();
    for c in 0..cells.len() {
        if covered[c] {
            continue;
        }
        let center = (cells[c].0 / n, cells[c].0 % n);
        let mut mass = 0.0;
        let mut count = 0;
        for (other, &(idx, m)) in cells.iter().enumerate().skip(c) {
            if !covered[other] && metric.distance(center, (idx / n, idx % n)) <= radius {
                covered[other] = true;
                mass += m;
                count += 1;
            }
        }
        balls.push(Ball {
            center,
            mass,
            cells: count,
        });
    }
    Ok(MetricCovering { radius, balls })
}
