//! Small least-squares helpers for the log-log power-law fits used across
//! the analysis modules.

use serde::Serialize;

/// Result of an ordinary least-squares line fit `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1.0 when the points are collinear.
    /// Defined as 1 when the y-values are constant and perfectly fit.
    pub r2: f64,
    pub points: usize,
}

/// Fit a line through `(x, y)` pairs. Returns `None` with fewer than two
/// points or when the x-values are all identical (vertical data).
pub fn line_fit(points: &[(f64, f64)]) -> Option<LineFit> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - (slope * p.0 + intercept);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Some(LineFit {
        slope,
        intercept,
        r2,
        points: n,
    })
}

/// Log-log power-law fit `y = c * x^exponent` over pairs with positive x and
/// y; pairs with nonpositive coordinates are skipped (they carry no
/// information on a log scale). Returns the fit plus how many pairs were
/// used.
pub fn power_fit(points: &[(f64, f64)]) -> Option<LineFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    line_fit(&logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 - 2.0)).collect();
        let fit = line_fit(&pts).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 2.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_fit_recovers_exponent() {
        let pts: Vec<(f64, f64)> = (1..8).map(|i| {
            let x = 2f64.powi(-i);
            (x, 0.7 * x.powf(1.5))
        }).collect();
        let fit = power_fit(&pts).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-9);
        assert!((fit.intercept.exp() - 0.7).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs_are_none() {
        assert!(line_fit(&[(1.0, 2.0)]).is_none());
        assert!(line_fit(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
        assert!(power_fit(&[(0.0, 1.0), (-1.0, 2.0)]).is_none());
    }
}
