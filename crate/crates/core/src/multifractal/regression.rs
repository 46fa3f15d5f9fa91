use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::MIN_LEVELS;

/// Ordinary least-squares line through `(x, y)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub levels_used: usize,
}

impl RegressionFit {
    pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<Self> {
        assert_eq!(xs.len(), ys.len(), "abscissa and ordinate lengths differ");
        if xs.len() < MIN_LEVELS {
            return Err(Error::TooFewLevels {
                required: MIN_LEVELS,
                actual: xs.len(),
            });
        }
        Ok(Self::fit_unchecked(xs, ys))
    }

    /// Least squares without the minimum-level check. Panics on a degenerate abscissa.
    pub(crate) fn fit_unchecked(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(ys) {
            let (dx, dy) = (x - mx, y - my);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        assert!(sxx > 0.0, "abscissae have zero variance");
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let e = y - (intercept + slope * x);
                e * e
            })
            .sum();
        // a constant ordinate is fitted exactly by a flat line
        let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
        RegressionFit {
            slope,
            intercept,
            r_squared,
            levels_used: xs.len(),
        }
    }
}
