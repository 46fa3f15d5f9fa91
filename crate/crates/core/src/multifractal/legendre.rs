use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Second differences of τ above this count as concavity defects.
pub const CONCAVITY_TOLERANCE: f64 = 1e-9;

const STENCIL: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegendrePoint {
    pub q: f64,
    pub alpha: f64,
    pub f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegendreSpectrum {
    /// Sorted by `alpha`, ties by `q`.
    pub points: Vec<LegendrePoint>,
    /// Moments whose τ second difference exceeds `CONCAVITY_TOLERANCE`.
    /// With `Z ~ ε^τ` a valid τ is concave; the flipped sign `-τ` is convex.
    pub concavity_defects: Vec<f64>,
    /// `min_q (q α − τ(q))` over the grid at each sampled α; only when τ is concave.
    pub direct_infimum: Option<Vec<(f64, f64)>>,
}

impl LegendreSpectrum {
    /// `(α, f)` at moment `q`, linearly interpolated between the bracketing
    /// grid moments (exact on grid points).
    pub fn at_q(&self, q: f64) -> Option<(f64, f64)> {
        let mut by_q = self.points.clone();
        by_q.sort_by(|a, b| a.q.total_cmp(&b.q));
        if let Some(p) = by_q.iter().find(|p| (p.q - q).abs() < 1e-12) {
            return Some((p.alpha, p.f));
        }
        let hi = by_q.iter().position(|p| p.q > q)?;
        if hi == 0 {
            return None;
        }
        let (a, b) = (by_q[hi - 1], by_q[hi]);
        let t = (q - a.q) / (b.q - a.q);
        Some((a.alpha + t * (b.alpha - a.alpha), a.f + t * (b.f - a.f)))
    }

    /// Distinct `(α, f)` pairs, merging neighbours closer than `tol` in both coordinates.
    pub fn distinct(&self, tol: f64) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for p in &self.points {
            if !out.iter().any(|(a, f)| (a - p.alpha).abs() <= tol && (f - p.f).abs() <= tol) {
                out.push((p.alpha, p.f));
            }
        }
        out
    }

    pub fn max_f(&self) -> Option<LegendrePoint> {
        self.points.iter().copied().max_by(|a, b| a.f.total_cmp(&b.f))
    }
}

/// First-derivative weights at `x0` for the Lagrange interpolant through `xs`.
fn derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|j| {
            let mut w = 0.0;
            for k in 0..xs.len() {
                if k == j {
                    continue;
                }
                let mut term = 1.0 / (xs[j] - xs[k]);
                for l in 0..xs.len() {
                    if l != j && l != k {
                        term *= (x0 - xs[l]) / (xs[j] - xs[l]);
                    }
                }
                w += term;
            }
            w
        })
        .collect()
}

/// `τ'(q_i)` from a five-point stencil: centred in the interior, shifted
/// one-sided towards the ends of the grid.
pub fn tau_derivative(qs: &[f64], taus: &[f64]) -> Vec<f64> {
    let len = qs.len();
    let width = STENCIL.min(len);
    (0..len)
        .map(|i| {
            let start = i.saturating_sub(width / 2).min(len - width);
            let xs = &qs[start..start + width];
            derivative_weights(qs[i], xs)
                .iter()
                .zip(&taus[start..start + width])
                .map(|(w, t)| w * t)
                .sum()
        })
        .collect()
}

/// Second differences of τ, normalized so that a uniform grid yields
/// `τ_{i+1} − 2τ_i + τ_{i−1}`. Entry `i` belongs to interior point `i + 1`.
pub fn second_differences(qs: &[f64], taus: &[f64]) -> Vec<f64> {
    (1..qs.len().saturating_sub(1))
        .map(|i| {
            let (hl, hr) = (qs[i] - qs[i - 1], qs[i + 1] - qs[i]);
            let chord = (hr * taus[i - 1] + hl * taus[i + 1]) / (hl + hr);
            2.0 * (chord - taus[i])
        })
        .collect()
}

/// Parametric Legendre transform: `α(q) = τ'(q)`, `f(α(q)) = q α(q) − τ(q)`.
pub fn legendre_spectrum(qs: &[f64], taus: &[f64]) -> Result<LegendreSpectrum> {
    if qs.len() != taus.len() {
        return Err(Error::DimensionMismatch {
            what: "tau samples vs q grid",
            expected: qs.len(),
            actual: taus.len(),
        });
    }
    if qs.len() < STENCIL {
        return Err(Error::invalid(format!(
            "the Legendre transform needs at least {STENCIL} samples of tau, got {}",
            qs.len()
        )));
    }
    let alphas = tau_derivative(qs, taus);
    let mut points: Vec<LegendrePoint> = qs
        .iter()
        .zip(taus)
        .zip(&alphas)
        .map(|((&q, &tau), &alpha)| LegendrePoint {
            q,
            alpha,
            f: q * alpha - tau,
        })
        .collect();
    points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.q.total_cmp(&b.q)));

    let concavity_defects: Vec<f64> = second_differences(qs, taus)
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > CONCAVITY_TOLERANCE)
        .map(|(i, _)| qs[i + 1])
        .collect();

    let direct_infimum = concavity_defects.is_empty().then(|| {
        points
            .iter()
            .map(|p| {
                let f = qs
                    .iter()
                    .zip(taus)
                    .map(|(q, t)| q * p.alpha - t)
                    .fold(f64::INFINITY, f64::min);
                (p.alpha, f)
            })
            .collect()
    });

    Ok(LegendreSpectrum {
        points,
        concavity_defects,
        direct_infimum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{cascade_exact_alpha, cascade_exact_tau};

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|i| lo + i as f64 * step).collect()
    }

    #[test]
    fn stencil_is_exact_on_quartics() {
        let qs = [0.0, 0.3, 1.0, 1.2, 2.0, 3.1];
        let taus: Vec<f64> = qs.iter().map(|q| q * q * q * q - 2.0 * q).collect();
        for (q, d) in qs.iter().zip(tau_derivative(&qs, &taus)) {
            assert!((d - (4.0 * q * q * q - 2.0)).abs() < 1e-9, "q={q} d={d}");
        }
    }

    #[test]
    fn linear_tau_collapses_to_one_point() {
        let qs = grid(-5.0, 5.0, 0.25);
        let taus: Vec<f64> = qs.iter().map(|q| 2.0 * (q - 1.0)).collect();
        let spec = legendre_spectrum(&qs, &taus).unwrap();
        let distinct = spec.distinct(1e-9);
        assert_eq!(distinct.len(), 1);
        assert!((distinct[0].0 - 2.0).abs() < 1e-9 && (distinct[0].1 - 2.0).abs() < 1e-9);
        assert!(spec.concavity_defects.is_empty());
    }

    #[test]
    fn cascade_alpha_and_f() {
        let qs = grid(-5.0, 5.0, 0.25);
        let taus: Vec<f64> = qs.iter().map(|&q| cascade_exact_tau(0.3, q, 2)).collect();
        let spec = legendre_spectrum(&qs, &taus).unwrap();
        for p in &spec.points {
            if p.q > -5.0 && p.q < 5.0 {
                assert!((p.alpha - cascade_exact_alpha(0.3, p.q, 2)).abs() < 1e-3, "q={}", p.q);
            }
        }
        let (_, f0) = spec.at_q(0.0).unwrap();
        assert!((f0 - 2.0).abs() < 1e-12);
        let (a1, f1) = spec.at_q(1.0).unwrap();
        assert!((f1 - a1).abs() < 1e-12);
        let h = -(0.3f64 * 0.3f64.log2() + 0.7 * 0.7f64.log2());
        assert!((a1 - 2.0 * h).abs() < 1e-3);
        assert!(spec.concavity_defects.is_empty());
        let direct = spec.direct_infimum.as_ref().unwrap();
        for ((_, fd), p) in direct.iter().zip(&spec.points) {
            assert!(*fd <= p.f + 1e-12);
        }
        assert!(spec.points.windows(2).all(|w| w[0].alpha <= w[1].alpha));
    }

    #[test]
    fn interpolation_between_grid_points() {
        let qs = [0.0, 0.5, 1.5, 2.0, 3.0];
        let taus: Vec<f64> = qs.iter().map(|q| q * q).collect();
        let spec = legendre_spectrum(&qs, &taus).unwrap();
        let (a, _) = spec.at_q(1.0).unwrap();
        // halfway between α(0.5) = 1 and α(1.5) = 3
        assert!((a - 2.0).abs() < 1e-9);
        assert!(spec.at_q(-1.0).is_none());
        assert!(spec.at_q(4.0).is_none());
    }

    #[test]
    fn convex_tau_is_flagged() {
        let qs = grid(0.0, 2.0, 0.5);
        let taus: Vec<f64> = qs.iter().map(|q| q * q).collect();
        let spec = legendre_spectrum(&qs, &taus).unwrap();
        assert_eq!(spec.concavity_defects, vec![0.5, 1.0, 1.5]);
        assert!(spec.direct_infimum.is_none());
    }

    #[test]
    fn needs_five_samples() {
        assert!(legendre_spectrum(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]).is_err());
        assert!(legendre_spectrum(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0; 3]).is_err());
    }
}
