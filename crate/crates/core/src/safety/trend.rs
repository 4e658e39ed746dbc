use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    pub r_squared: f64,
}

impl TrendFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares of continuation toxicity on prompt toxicity.
/// r² is 1 when the fit leaves no residual (including constant y).
pub fn toxicity_trend(pairs: &[(f64, f64)]) -> Result<TrendFit> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::invalid("trend fit needs at least two points"));
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("trend fit inputs must be finite"));
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all prompt scores are equal; slope undefined"));
    }
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pairs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let ss_tot: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) };
    Ok(TrendFit {
        slope,
        intercept,
        n,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let f = toxicity_trend(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_eq!((f.slope, f.intercept, f.r_squared), (1.0, 0.0, 1.0));
        let f = toxicity_trend(&[(0.0, 0.2), (0.5, 0.2), (1.0, 0.2)]).unwrap();
        assert!(f.slope.abs() < 1e-15 && (f.intercept - 0.2).abs() < 1e-15);
        let f = toxicity_trend(&[(0.0, 0.1), (0.5, 0.4), (1.0, 0.6)]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert!((f.intercept - 0.35 / 3.0).abs() < 1e-12);
        assert!(toxicity_trend(&[(0.3, 0.1), (0.3, 0.5)]).is_err());
        assert!(toxicity_trend(&[(0.3, 0.1)]).is_err());
    }

    proptest! {
        #[test]
        fn recovers_noise_free_lines(a in -2.0f64..2.0, b in -1.0f64..1.0, xs in proptest::collection::vec(0.0f64..1.0, 2..50)) {
            prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
            let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, a * x + b)).collect();
            let f = toxicity_trend(&pts).unwrap();
            prop_assert!((f.slope - a).abs() < 1e-9);
            prop_assert!((f.intercept - b).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&f.r_squared));
        }
    }
}
