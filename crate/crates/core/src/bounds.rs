//! Measured-versus-bound checks: the exponential decay envelope of a coupling
//! over the cost-induced distance, closed-form caps on `D(0)`, `D(1)`, `D(2)`,
//! and the occupied-box cap `N(ε) ≤ min(n², ε^-2)`.
//!
//! Bound failures are findings, not errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dense_pyramid, measure_from_coupling, CoarseGraining, GridMeasure, AMBIENT_DIMENSION};
use crate::multifractal::SpectrumResult;
use crate::ot::{CostMatrix, CouplingMatrix, DistanceMatrix};
use crate::report::float_or_label;

/// Slack added to the envelope and to the bounds before declaring a failure.
pub const ENVELOPE_SLACK: f64 = 1e-12;
pub const BOUND_SLACK: f64 = 1e-9;

/// `P_ij ≤ alpha_hat · exp(−beta_hat · d_ij)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub satisfied: bool,
    /// Smallest gap `envelope − P_ij` over all entries (zero when the envelope is tight).
    pub max_slack: f64,
    pub distinct_distances: usize,
}

impl DecayFit {
    pub fn envelope(&self, distance: f64) -> f64 {
        self.alpha_hat * (-self.beta_hat * distance).exp()
    }
}

/// Fits the rate to the per-distance maxima of `ln P` by least squares, then
/// lifts the prefactor until every entry lies under the envelope.
pub fn decay_envelope_fit(coupling: &CouplingMatrix, distance: &DistanceMatrix) -> Result<DecayFit> {
    let n = coupling.n();
    if distance.n() != n {
        return Err(Error::DimensionMismatch {
            what: "distance size vs coupling size",
            expected: n,
            actual: distance.n(),
        });
    }
    let mut points: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let p = coupling.get(i, j);
            if p > 0.0 {
                points.push((distance.get(i, j), p.ln()));
            }
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut maxima: Vec<(f64, f64)> = Vec::new();
    for (d, lp) in points {
        match maxima.last_mut() {
            Some(last) if last.0 == d => last.1 = last.1.max(lp),
            _ => maxima.push((d, lp)),
        }
    }
    if maxima.len() < 2 {
        return Err(Error::EnvelopeUnderdetermined(format!(
            "positive entries span {} distinct distance(s), need 2",
            maxima.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = maxima.iter().copied().unzip();
    let slope = crate::multifractal::RegressionFit::fit_unchecked(&xs, &ys).slope;
    let beta_hat = -slope;

    let mut log_alpha = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let p = coupling.get(i, j);
            if p > 0.0 {
                log_alpha = log_alpha.max(p.ln() + beta_hat * distance.get(i, j));
            }
        }
    }
    let mut fit = DecayFit {
        alpha_hat: log_alpha.exp(),
        beta_hat,
        satisfied: true,
        max_slack: f64::INFINITY,
        distinct_distances: maxima.len(),
    };
    for i in 0..n {
        for j in 0..n {
            let gap = fit.envelope(distance.get(i, j)) - coupling.get(i, j);
            fit.max_slack = fit.max_slack.min(gap);
        }
    }
    fit.satisfied = fit.max_slack >= -ENVELOPE_SLACK;
    Ok(fit)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundVariant {
    /// `min(L, −ln m)/L` forms.
    #[default]
    ProofBody,
    /// `(L − ln m)/L` forms, read off the displayed inequalities.
    StatementLiteral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementSource {
    /// Regression slopes across dyadic levels.
    Regression,
    /// Single-scale estimates at the finest level, for grids too small to regress.
    FinestScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredDimensions {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub source: MeasurementSource,
}

impl MeasuredDimensions {
    pub fn from_spectrum(spectrum: &SpectrumResult) -> Result<Self> {
        let missing = |q| Error::invalid(format!("spectrum has no sample at q = {q}"));
        Ok(MeasuredDimensions {
            d0: spectrum.d0().ok_or_else(|| missing(0))?,
            d1: spectrum.d1,
            d2: spectrum.d2().ok_or_else(|| missing(2))?,
            source: MeasurementSource::Regression,
        })
    }

    /// `log2 Z(q, ε) / ((q − 1) log2 ε)` at `ε = 2^-K`, the finest dyadic level
    /// (entropy form for `q = 1`).
    pub fn finest_scale(mu: &GridMeasure) -> Result<Self> {
        let k = mu.padded_exponent();
        if k == 0 {
            return Err(Error::invalid("a 1x1 grid has no non-trivial scale"));
        }
        let masses: Vec<f64> = mu.masses().as_slice().iter().copied().filter(|&m| m > 0.0).collect();
        let kf = k as f64;
        Ok(MeasuredDimensions {
            d0: (masses.len() as f64).log2() / kf,
            d1: -masses.iter().map(|m| m * m.log2()).sum::<f64>() / kf,
            d2: -masses.iter().map(|m| m * m).sum::<f64>().log2() / kf,
            source: MeasurementSource::FinestScale,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub variant: BoundVariant,
    pub n: usize,
    pub min_cost: f64,
    pub min_positive_coupling: f64,
    pub all_support_positive: bool,
    #[serde(serialize_with = "float_or_label")]
    pub bound_d0: f64,
    #[serde(serialize_with = "float_or_label")]
    pub bound_d1: f64,
    #[serde(serialize_with = "float_or_label")]
    pub bound_d2: f64,
    pub measured: MeasuredDimensions,
    pub pass_d0: bool,
    pub pass_d1: bool,
    pub pass_d2: bool,
    pub ball_cap_ok: bool,
}

/// `-ln x`, with `-ln 0 = +inf`.
fn neg_ln(x: f64) -> f64 {
    if x == 0.0 {
        f64::INFINITY
    } else {
        -x.ln()
    }
}

/// Evaluates the three dimension bounds with natural logarithms,
/// `L = ln n`, `m_C = min C_ij`, `m_P = min_{P_ij > 0} P_ij`.
pub fn dimension_bounds(
    cost: &CostMatrix,
    coupling: &CouplingMatrix,
    measured: &MeasuredDimensions,
    variant: BoundVariant,
) -> Result<BoundReport> {
    let n = cost.n();
    if n < 2 {
        return Err(Error::invalid("bounds need n >= 2 (ln n vanishes at n = 1)"));
    }
    if coupling.n() != n {
        return Err(Error::DimensionMismatch {
            what: "coupling size vs cost size",
            expected: n,
            actual: coupling.n(),
        });
    }
    let l = (n as f64).ln();
    let min_cost = cost.matrix().min();
    let min_positive = coupling.min_positive().ok_or(Error::EmptyMeasure)?;
    let (c, p) = (neg_ln(min_cost), neg_ln(min_positive));
    let (bound_d0, bound_d1, bound_d2) = match variant {
        BoundVariant::ProofBody => (l.min(c) / l, l.min(p) / l, l.min(2.0 * p) / l),
        BoundVariant::StatementLiteral => ((l + c) / l, (l + p) / l, (l + 2.0 * p) / l),
    };
    let passes = |measured: f64, bound: f64| measured <= bound + BOUND_SLACK;

    let mu = measure_from_coupling(coupling)?;
    let ball_cap_ok = ball_cap_holds(&mu);

    Ok(BoundReport {
        variant,
        n,
        min_cost,
        min_positive_coupling: min_positive,
        all_support_positive: coupling.matrix().as_slice().iter().all(|&x| x > 0.0),
        bound_d0,
        bound_d1,
        bound_d2,
        measured: measured.clone(),
        pass_d0: passes(measured.d0, bound_d0),
        pass_d1: passes(measured.d1, bound_d1),
        pass_d2: passes(measured.d2, bound_d2),
        ball_cap_ok,
    })
}

fn cap(n: usize, level: u32) -> usize {
    let per_side = 1usize << level;
    (n * n).min(per_side.pow(AMBIENT_DIMENSION))
}

/// Occupied boxes at every level `k` stay within `min(n², (2^-k)^-2)`.
pub fn ball_count_check(cg: &CoarseGraining, n: usize) -> bool {
    cg.levels.iter().all(|l| l.masses.len() <= cap(n, l.level))
}

fn ball_cap_holds(mu: &GridMeasure) -> bool {
    dense_pyramid(mu)
        .iter()
        .enumerate()
        .all(|(k, boxes)| boxes.iter().filter(|&&m| m > 0.0).count() <= cap(mu.n(), k as u32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::measure::{dyadic_coarsen, ScaleSet};
    use crate::ot::{geodesic_distance, sinkhorn_solve, MarginalPair, SinkhornConfig};

    fn swap_instance() -> (CostMatrix, CouplingMatrix) {
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let sol = sinkhorn_solve(&c, &MarginalPair::uniform(2), &SinkhornConfig::new(1.0)).unwrap();
        (c, sol.coupling)
    }

    fn measured(d0: f64, d1: f64, d2: f64) -> MeasuredDimensions {
        MeasuredDimensions {
            d0,
            d1,
            d2,
            source: MeasurementSource::Regression,
        }
    }

    #[test]
    fn exact_exponential_envelope() {
        let d = DistanceMatrix::new(Matrix::from_fn(4, |i, j| (i as f64 - j as f64).abs())).unwrap();
        let raw = Matrix::from_fn(4, |i, j| (-d.get(i, j)).exp());
        let z = raw.sum();
        let p = CouplingMatrix::new(Matrix::from_fn(4, |i, j| raw.get(i, j) / z)).unwrap();
        let fit = decay_envelope_fit(&p, &d).unwrap();
        assert!((fit.beta_hat - 1.0).abs() < 1e-12);
        assert!((fit.alpha_hat - 1.0 / z).abs() < 1e-12);
        assert!(fit.max_slack.abs() < 1e-15);
        assert!(fit.satisfied);
    }

    #[test]
    fn two_point_envelope_on_symmetric_coupling() {
        let (c, p) = swap_instance();
        let d = geodesic_distance(&c);
        let fit = decay_envelope_fit(&p, &d).unwrap();
        let (a, b) = (p.get(0, 0), p.get(0, 1));
        assert!((fit.beta_hat - (a / b).ln()).abs() < 1e-12);
        assert!((fit.beta_hat - 1.0).abs() < 1e-9);
        assert!((fit.alpha_hat - a).abs() < 1e-12);
        assert!((a - 0.36553).abs() < 1e-5);
    }

    #[test]
    fn dirac_envelope_is_underdetermined() {
        let p = CouplingMatrix::new(Matrix::from_fn(3, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 }))
            .unwrap();
        let d = DistanceMatrix::new(Matrix::from_fn(3, |i, j| (i as f64 - j as f64).abs())).unwrap();
        assert!(matches!(decay_envelope_fit(&p, &d), Err(Error::EnvelopeUnderdetermined(_))));
    }

    #[test]
    fn symmetric_instance_bounds() {
        let (c, p) = swap_instance();
        let m = measured(2.0, 1.0, 0.5);
        let r = dimension_bounds(&c, &p, &m, BoundVariant::ProofBody).unwrap();
        assert_eq!(r.min_cost, 0.0);
        assert!((r.bound_d0 - 1.0).abs() < 1e-12);
        assert!((r.bound_d1 - 1.0).abs() < 1e-12);
        assert!((r.bound_d2 - 1.0).abs() < 1e-12);
        assert!((-r.min_positive_coupling.ln() - 2.006).abs() < 1e-3);
        assert!(!r.pass_d0 && r.pass_d1 && r.pass_d2);
        assert!(r.ball_cap_ok);

        let lit = dimension_bounds(&c, &p, &m, BoundVariant::StatementLiteral).unwrap();
        assert_eq!(lit.bound_d0, f64::INFINITY);
        assert!(lit.pass_d0);
        assert_eq!(lit.measured, r.measured);
    }

    #[test]
    fn uniform_coupling_bounds() {
        let c = CostMatrix::new(Matrix::filled(4, 1.0)).unwrap();
        let p = CouplingMatrix::new(Matrix::filled(4, 1.0 / 16.0)).unwrap();
        let r = dimension_bounds(&c, &p, &measured(2.0, 2.0, 2.0), BoundVariant::ProofBody).unwrap();
        assert_eq!(r.bound_d1, 1.0);
        assert_eq!(r.bound_d2, 1.0);
        // min C = 1: -ln 1 = 0
        assert_eq!(r.bound_d0, 0.0);
        assert!(r.all_support_positive);
        assert!(!r.pass_d1);
    }

    #[test]
    fn bounds_need_two_points() {
        let c = CostMatrix::new(Matrix::zeros(1)).unwrap();
        let p = CouplingMatrix::new(Matrix::filled(1, 1.0)).unwrap();
        assert!(dimension_bounds(&c, &p, &measured(0.0, 0.0, 0.0), BoundVariant::ProofBody).is_err());
    }

    #[test]
    fn finest_scale_dimensions() {
        let mu = measure_from_coupling(&CouplingMatrix::new(Matrix::filled(4, 1.0 / 16.0)).unwrap()).unwrap();
        let m = MeasuredDimensions::finest_scale(&mu).unwrap();
        assert!((m.d0 - 2.0).abs() < 1e-12 && (m.d1 - 2.0).abs() < 1e-12 && (m.d2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ball_counts() {
        let uniform = measure_from_coupling(&CouplingMatrix::new(Matrix::filled(8, 1.0 / 64.0)).unwrap()).unwrap();
        let cg = dyadic_coarsen(&uniform, &ScaleSet::range(0, 3).unwrap()).unwrap();
        for l in &cg.levels {
            assert_eq!(l.masses.len(), cap(8, l.level));
        }
        assert!(ball_count_check(&cg, 8));

        let dirac = measure_from_coupling(
            &CouplingMatrix::new(Matrix::from_fn(8, |i, j| if i + j == 0 { 1.0 } else { 0.0 })).unwrap(),
        )
        .unwrap();
        assert!(ball_count_check(&dyadic_coarsen(&dirac, &ScaleSet::range(0, 3).unwrap()).unwrap(), 8));
        assert!(ball_cap_holds(&dirac));
        // a 6x6 grid padded to 8x8 is capped by n² = 36 at the finest level
        assert_eq!(cap(6, 3), 36);
    }
}
