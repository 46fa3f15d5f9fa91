//! Multifractal characterization of multi-scale box masses.
//!
//! Conventions: `Z(q, ε) ~ ε^τ(q)`, `τ(q) = (q − 1) D(q)` and
//! `f(α) = inf_q (q α − τ(q))`. A uniform measure on the full grid therefore
//! has `D(q) = 2` and `τ(q) = 2(q − 1)`. Logarithms are base 2.

mod legendre;
mod local;
mod partition;
mod regression;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::CoarseGraining;

pub use legendre::{
    legendre_spectrum, second_differences, tau_derivative, LegendrePoint, LegendreSpectrum,
    CONCAVITY_TOLERANCE,
};
pub use local::{
    histogram_spectrum, local_exponents, HistogramBin, LocalExponent, LocalExponentField,
};
pub use partition::{
    fit_tau, generalized_dimension, information_dimension, partition_function, PartitionTable,
    MASS_FLOOR,
};
pub use regression::RegressionFit;

/// Moment orders, plus the half-width of the window around `q = 1` where
/// `D(q)` comes from the information dimension instead of `τ/(q − 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QGrid {
    values: Vec<f64>,
    delta: f64,
}

impl QGrid {
    pub const DEFAULT_MIN: f64 = -5.0;
    pub const DEFAULT_MAX: f64 = 5.0;
    pub const DEFAULT_STEP: f64 = 0.25;
    pub const DEFAULT_DELTA: f64 = 0.125;

    pub fn new(values: Vec<f64>, delta: f64) -> Result<Self> {
        if values.windows(2).any(|w| !(w[0] < w[1])) || values.iter().any(|q| !q.is_finite()) {
            return Err(Error::invalid("q grid must be finite and strictly increasing"));
        }
        for required in [0.0, 2.0] {
            if !values.iter().any(|&q| q == required) {
                return Err(Error::invalid(format!("q grid must contain q = {required}")));
            }
        }
        if !(delta >= 0.0) {
            return Err(Error::invalid(format!("exclusion half-width must be non-negative, got {delta}")));
        }
        Ok(QGrid { values, delta })
    }

    /// `min, min + step, ..., max`, each value rounded to 1e-9 so that
    /// decimal grids hit 0, 1 and 2 exactly.
    pub fn from_range(min: f64, max: f64, step: f64, delta: f64) -> Result<Self> {
        if !(step > 0.0) || !(max > min) {
            return Err(Error::invalid(format!("bad q range {min}:{max}:{step}")));
        }
        let count = ((max - min) / step + 1e-9).floor() as usize;
        let values = (0..=count)
            .map(|i| ((min + i as f64 * step) * 1e9).round() / 1e9)
            .map(|q| if q == 0.0 { 0.0 } else { q })
            .collect();
        Self::new(values, delta)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn in_exclusion_window(&self, q: f64) -> bool {
        q == 1.0 || (q - 1.0).abs() < self.delta
    }
}

impl Default for QGrid {
    fn default() -> Self {
        Self::from_range(
            Self::DEFAULT_MIN,
            Self::DEFAULT_MAX,
            Self::DEFAULT_STEP,
            Self::DEFAULT_DELTA,
        )
        .expect("default grid is valid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub q: f64,
    pub tau: f64,
    /// `τ/(q − 1)`, or the information dimension inside the exclusion window.
    pub d: f64,
    pub alpha: f64,
    pub f: f64,
    pub in_exclusion_window: bool,
    pub fit: RegressionFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub levels: Vec<u32>,
    /// In increasing `q`.
    pub points: Vec<SpectrumPoint>,
    pub d1: f64,
    pub d1_fit: RegressionFit,
    pub legendre: LegendreSpectrum,
    pub floored_boxes: usize,
}

impl SpectrumResult {
    pub fn point(&self, q: f64) -> Option<&SpectrumPoint> {
        self.points.iter().find(|p| (p.q - q).abs() < 1e-12)
    }

    pub fn d0(&self) -> Option<f64> {
        self.point(0.0).map(|p| p.d)
    }

    pub fn d2(&self) -> Option<f64> {
        self.point(2.0).map(|p| p.d)
    }
}

/// Full estimate: τ on every grid moment (including the exclusion window,
/// where `log2 Z` is still well defined), `D(q)`, the information dimension
/// and the parametric Legendre spectrum.
pub fn analyze(cg: &CoarseGraining, qs: &QGrid) -> Result<SpectrumResult> {
    let table = partition_function(cg, qs)?;
    let (d1, d1_fit) = information_dimension(cg)?;
    let mut taus = Vec::with_capacity(qs.values().len());
    let mut fits = Vec::with_capacity(qs.values().len());
    for &q in qs.values() {
        let (tau, fit) = fit_tau(&table, q)?;
        taus.push(tau);
        fits.push(fit);
    }
    let legendre = legendre_spectrum(qs.values(), &taus)?;
    let alphas = tau_derivative(qs.values(), &taus);

    let mut points = Vec::with_capacity(taus.len());
    for (i, &q) in qs.values().iter().enumerate() {
        let in_window = qs.in_exclusion_window(q);
        let d = if in_window {
            d1
        } else {
            generalized_dimension(taus[i], q, qs.delta())?
        };
        points.push(SpectrumPoint {
            q,
            tau: taus[i],
            d,
            alpha: alphas[i],
            f: q * alphas[i] - taus[i],
            in_exclusion_window: in_window,
            fit: fits[i].clone(),
        });
    }
    Ok(SpectrumResult {
        levels: table.levels.clone(),
        points,
        d1,
        d1_fit,
        legendre,
        floored_boxes: table.floored_boxes,
    })
}
