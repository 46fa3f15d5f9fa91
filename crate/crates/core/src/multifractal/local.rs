use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dense_pyramid, GridMeasure, ScaleSet};

use super::RegressionFit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalExponent {
    /// Box index at the finest scale level (a grid cell when that level is the full resolution).
    pub cell: (usize, usize),
    pub alpha: f64,
    pub r_squared: f64,
}

/// Local exponents of every positive-mass box at the finest scale level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalExponentField {
    pub level: u32,
    pub exponents: Vec<LocalExponent>,
}

impl LocalExponentField {
    pub fn get(&self, cell: (usize, usize)) -> Option<&LocalExponent> {
        self.exponents.iter().find(|e| e.cell == cell)
    }
}

/// `α(x)`: slope of `log2` of the mass of the level-k box containing `x`
/// against `-k`, over the configured levels.
pub fn local_exponents(mu: &GridMeasure, scales: &ScaleSet) -> Result<LocalExponentField> {
    let max_level = mu.padded_exponent();
    if let Some(&level) = scales.levels().iter().find(|&&k| k > max_level) {
        return Err(Error::ScaleTooFine { level, max_level });
    }
    let pyramid = dense_pyramid(mu);
    let finest = scales.finest();
    let side = 1usize << finest;
    let xs: Vec<f64> = scales.levels().iter().map(|&k| -(k as f64)).collect();
    let mut ys = vec![0.0; xs.len()];
    let mut exponents = Vec::new();
    for a in 0..side {
        for b in 0..side {
            if pyramid[finest as usize][a * side + b] <= 0.0 {
                continue;
            }
            for (y, &k) in ys.iter_mut().zip(scales.levels()) {
                let shift = finest - k;
                let s = 1usize << k;
                let m = pyramid[k as usize][(a >> shift) * s + (b >> shift)];
                *y = m.log2();
                if !y.is_finite() {
                    return Err(Error::invalid(format!(
                        "box ({a}, {b}) has non-positive mass {m} at level {k}"
                    )));
                }
            }
            let fit = RegressionFit::least_squares(&xs, &ys)?;
            exponents.push(LocalExponent {
                cell: (a, b),
                alpha: fit.slope,
                r_squared: fit.r_squared,
            });
        }
    }
    Ok(LocalExponentField {
        level: finest,
        exponents,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub alpha: f64,
    pub count: usize,
    pub f: f64,
}

/// Coarse-grained spectrum: `f(α) ≈ log2 N_k(α) / k` with `N_k(α)` the number
/// of finest-level boxes whose exponent falls in the α bin. Empty bins are omitted.
pub fn histogram_spectrum(
    field: &LocalExponentField,
    bins: usize,
    scales: &ScaleSet,
) -> Result<Vec<HistogramBin>> {
    if bins < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {bins}")));
    }
    if field.exponents.is_empty() {
        return Err(Error::invalid("local exponent field is empty"));
    }
    let k = scales.finest();
    if k == 0 {
        return Err(Error::invalid("the finest level must be positive"));
    }
    let (lo, hi) = field
        .exponents
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.alpha), hi.max(e.alpha)));
    let f_of = |count: usize| (count as f64).log2() / k as f64;

    if hi - lo < 1e-12 {
        let count = field.exponents.len();
        return Ok(vec![HistogramBin {
            alpha: 0.5 * (lo + hi),
            count,
            f: f_of(count),
        }]);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for e in &field.exponents {
        let idx = (((e.alpha - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| HistogramBin {
            alpha: lo + (i as f64 + 0.5) * width,
            count: c,
            f: f_of(c),
        })
        .collect())
}
