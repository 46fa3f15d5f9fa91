use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::CoarseGraining;
use crate::numeric::log2_sum_exp2;

use super::{QGrid, RegressionFit};

/// Box masses below this are left out of the partition function and counted.
pub const MASS_FLOOR: f64 = 1e-300;

/// `log2 Z(q, k)` with `Z(q, k) = Σ_i m_i^q` over retained boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionTable {
    pub qs: Vec<f64>,
    pub levels: Vec<u32>,
    pub log2_scales: Vec<f64>,
    /// Indexed `[q][level]`.
    pub log2_z: Vec<Vec<f64>>,
    /// Boxes skipped by [`MASS_FLOOR`], summed over levels.
    pub floored_boxes: usize,
}

impl PartitionTable {
    pub fn q_index(&self, q: f64) -> Option<usize> {
        self.qs.iter().position(|&x| (x - q).abs() < 1e-12)
    }
}

pub fn partition_function(cg: &CoarseGraining, qs: &QGrid) -> Result<PartitionTable> {
    let mut log2_z = vec![Vec::with_capacity(cg.levels.len()); qs.values().len()];
    let mut floored_boxes = 0;
    let mut scratch = Vec::new();
    for level in &cg.levels {
        if let Some(&mass) = level.masses.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::NonPositiveBox {
                level: level.level,
                mass,
            });
        }
        let logs: Vec<f64> = level
            .masses
            .iter()
            .filter(|&&m| m >= MASS_FLOOR)
            .map(|m| m.log2())
            .collect();
        floored_boxes += level.masses.len() - logs.len();
        if logs.is_empty() {
            return Err(Error::invalid(format!("level {} retains no boxes", level.level)));
        }
        for (row, &q) in log2_z.iter_mut().zip(qs.values()) {
            scratch.clear();
            scratch.extend(logs.iter().map(|l| q * l));
            row.push(log2_sum_exp2(&scratch));
        }
    }
    Ok(PartitionTable {
        qs: qs.values().to_vec(),
        levels: cg.levels.iter().map(|l| l.level).collect(),
        log2_scales: cg.levels.iter().map(|l| l.log2_scale).collect(),
        log2_z,
        floored_boxes,
    })
}

/// Slope of `log2 Z(q, k)` against `log2 ε_k`, i.e. `τ(q)` under `Z ~ ε^τ(q)`.
pub fn fit_tau(table: &PartitionTable, q: f64) -> Result<(f64, RegressionFit)> {
    let idx = table
        .q_index(q)
        .ok_or_else(|| Error::invalid(format!("q = {q} is not in the partition table")))?;
    let fit = RegressionFit::least_squares(&table.log2_scales, &table.log2_z[idx])?;
    Ok((fit.slope, fit))
}

/// `D(q) = τ(q) / (q - 1)`; refuses moments inside the exclusion window around 1.
pub fn generalized_dimension(tau: f64, q: f64, delta: f64) -> Result<f64> {
    if (q - 1.0).abs() < delta || q == 1.0 {
        return Err(Error::NearUnitMoment { q, delta });
    }
    Ok(tau / (q - 1.0))
}

/// Information dimension: slope of `Σ m log2 m` against `log2 ε_k`.
pub fn information_dimension(cg: &CoarseGraining) -> Result<(f64, RegressionFit)> {
    let xs: Vec<f64> = cg.levels.iter().map(|l| l.log2_scale).collect();
    let ys: Vec<f64> = cg
        .levels
        .iter()
        .map(|l| l.masses.iter().filter(|&&m| m > 0.0).map(|m| m * m.log2()).sum())
        .collect();
    let fit = RegressionFit::least_squares(&xs, &ys)?;
    Ok((fit.slope, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::LevelMasses;

    fn levels(per_level: Vec<(u32, Vec<f64>)>) -> CoarseGraining {
        CoarseGraining {
            levels: per_level
                .into_iter()
                .map(|(k, masses)| LevelMasses {
                    level: k,
                    log2_scale: -(k as f64),
                    masses,
                    dropped_boxes: 0,
                })
                .collect(),
        }
    }

    fn uniform_levels(ks: &[u32]) -> CoarseGraining {
        levels(ks.iter().map(|&k| (k, vec![1.0 / 4f64.powi(k as i32); 1 << (2 * k)])).collect())
    }

    /// Level-k masses of the 2D p-cascade, by brute-force enumeration of products.
    fn cascade_levels(p: f64, ks: &[u32]) -> CoarseGraining {
        let base = [p * p, p * (1.0 - p), (1.0 - p) * p, (1.0 - p) * (1.0 - p)];
        levels(
            ks.iter()
                .map(|&k| {
                    let mut masses = vec![1.0];
                    for _ in 0..k {
                        masses = masses.iter().flat_map(|m| base.map(|b| m * b)).collect();
                    }
                    (k, masses)
                })
                .collect(),
        )
    }

    #[test]
    fn uniform_partition_function() {
        let cg = uniform_levels(&[1, 2, 3]);
        let qs = QGrid::new(vec![-1.0, 0.0, 1.0, 2.0], 0.125).unwrap();
        let t = partition_function(&cg, &qs).unwrap();
        for (qi, q) in qs.values().iter().enumerate() {
            for (li, k) in [1.0, 2.0, 3.0].iter().enumerate() {
                let expected = 2.0 * k * (1.0 - q);
                assert!((t.log2_z[qi][li] - expected).abs() < 1e-12);
            }
            let (tau, fit) = fit_tau(&t, *q).unwrap();
            assert!((tau - 2.0 * (q - 1.0)).abs() < 1e-12);
            assert_eq!(fit.levels_used, 3);
        }
        // Z(0, k) counts boxes
        assert_eq!(t.log2_z[1][2], 6.0);
    }

    #[test]
    fn cascade_correlation_sum() {
        // one level of the 2D cascade: 0.09² + 2·0.21² + 0.49² = 0.3364
        let z1: f64 = [0.09f64, 0.21, 0.21, 0.49].iter().map(|m| m * m).sum();
        assert!((z1 - 0.3364).abs() < 1e-15);

        let cg = cascade_levels(0.3, &[1, 2, 3, 4]);
        let qs = QGrid::new(vec![0.0, 1.0, 2.0], 0.125).unwrap();
        let t = partition_function(&cg, &qs).unwrap();
        for (li, k) in [1, 2, 3, 4].iter().enumerate() {
            assert!((t.log2_z[2][li] - (*k as f64) * z1.log2()).abs() < 1e-12);
            assert!(t.log2_z[1][li].abs() < 1e-12);
        }
        let (tau2, _) = fit_tau(&t, 2.0).unwrap();
        assert!((tau2 - -z1.log2()).abs() < 1e-12);
        assert!((tau2 - 1.571_750_389_294_305).abs() < 1e-12);
        let (tau1, _) = fit_tau(&t, 1.0).unwrap();
        assert!(tau1.abs() < 1e-12);
        assert!((generalized_dimension(tau2, 2.0, 0.125).unwrap() - 1.571_750_389_294_305).abs() < 1e-12);
    }

    #[test]
    fn information_dimension_examples() {
        let (d1, _) = information_dimension(&uniform_levels(&[1, 2, 3])).unwrap();
        assert!((d1 - 2.0).abs() < 1e-12);

        let dirac = levels(vec![(1, vec![1.0]), (2, vec![1.0]), (3, vec![1.0])]);
        assert_eq!(information_dimension(&dirac).unwrap().0, 0.0);

        let (d1, _) = information_dimension(&cascade_levels(0.3, &[1, 2, 3, 4])).unwrap();
        let h = -(0.3f64 * 0.3f64.log2() + 0.7 * 0.7f64.log2());
        assert!((d1 - 2.0 * h).abs() < 1e-12);
        assert!((d1 - 1.762581).abs() < 1e-6);
    }

    #[test]
    fn generalized_dimension_window() {
        assert_eq!(generalized_dimension(-2.0, 0.0, 0.125).unwrap(), 2.0);
        assert!(matches!(generalized_dimension(0.0, 1.0, 0.125), Err(Error::NearUnitMoment { .. })));
        assert!(generalized_dimension(0.0, 1.1, 0.125).is_err());
        assert!(generalized_dimension(0.0, 1.0, 0.0).is_err());
        assert!(generalized_dimension(0.5, 1.25, 0.125).is_ok());
    }

    #[test]
    fn partition_errors() {
        let qs = QGrid::new(vec![0.0, 2.0], 0.125).unwrap();
        let bad = levels(vec![(1, vec![1.0, 0.0])]);
        assert!(matches!(partition_function(&bad, &qs), Err(Error::NonPositiveBox { .. })));

        let two = uniform_levels(&[1, 2]);
        let t = partition_function(&two, &qs).unwrap();
        assert!(matches!(fit_tau(&t, 0.0), Err(Error::TooFewLevels { .. })));
        assert!(information_dimension(&two).is_err());
    }

    #[test]
    fn tiny_masses_are_floored_and_counted() {
        let cg = levels(vec![
            (1, vec![1.0 - 1e-305, 1e-305]),
            (2, vec![1.0]),
            (3, vec![1.0]),
        ]);
        let qs = QGrid::new(vec![-5.0, 0.0, 2.0], 0.125).unwrap();
        let t = partition_function(&cg, &qs).unwrap();
        assert_eq!(t.floored_boxes, 1);
        assert!(t.log2_z.iter().flatten().all(|z| z.is_finite()));
    }
}
