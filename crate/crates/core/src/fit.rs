//! Straight-line fits used for scaling exponents.

use alloc::vec::Vec;

/// Result of a straight-line least-squares fit `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    /// Fitted slope.
    pub slope: f64,
    /// Fitted intercept.
    pub intercept: f64,
    /// Standard error of the slope (zero for exact fits or two points).
    pub stderr: f64,
}

/// Weighted least squares. Returns `None` with fewer than two points or when
/// all `x` coincide.
pub fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<LineFit> {
    let m = x.len();
    if m < 2 || y.len() != m || w.len() != m {
        return None;
    }
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if m > 2 {
        let ssr: f64 = x
            .iter()
            .zip(y)
            .zip(w)
            .map(|((a, c), b)| {
                let r = c - intercept - slope * a;
                b * r * r
            })
            .sum();
        // Normalized weights so that uniform weights reduce to the usual OLS formula.
        let scale = m as f64 / sw;
        libm::sqrt((ssr * scale / (m as f64 - 2.0)) / (sxx * scale))
    } else {
        0.0
    };
    Some(LineFit { slope, intercept, stderr })
}

/// Ordinary least squares.
pub fn line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let w: Vec<f64> = x.iter().map(|_| 1.0).collect();
    weighted_line(x, y, &w)
}

/// Slope of `log(count)` against `log(1/delta)`, weighted by count.
/// Points with a zero count are dropped; `None` if fewer than two remain.
pub fn scaling_exponent(deltas: &[f64], counts: &[f64]) -> Option<LineFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for (d, c) in deltas.iter().zip(counts) {
        if *c > 0.0 {
            x.push(-libm::log(*d));
            y.push(libm::log(*c));
            w.push(*c);
        }
    }
    weighted_line(&x, &y, &w)
}

/// Unweighted slope of `log(count)` against `log(1/delta)`; zero counts are
/// dropped.
pub fn log_log(deltas: &[f64], counts: &[f64]) -> Option<LineFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = deltas
        .iter()
        .zip(counts)
        .filter(|(_, c)| **c > 0.0)
        .map(|(d, c)| (-libm::log(*d), libm::log(*c)))
        .unzip();
    line(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_zero_stderr() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = line(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
        assert!(f.stderr < 1e-12);
    }

    #[test]
    fn stderr_matches_textbook() {
        // Residuals +-0.5 alternating around y = x.
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.5, 0.5, 2.5, 2.5];
        let f = line(&x, &y).unwrap();
        // slope = Sxy/Sxx = 4/5; residual SS = 0.8; se = sqrt(0.8/2/5)
        assert!((f.slope - 0.8).abs() < 1e-12);
        assert!((f.stderr - libm::sqrt(0.08)).abs() < 1e-12);
    }

    #[test]
    fn single_point_is_rejected() {
        assert!(line(&[1.0], &[2.0]).is_none());
        assert!(line(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }
}
