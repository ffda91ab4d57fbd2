//! Least-squares power-law fits on log–log data.

use crate::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub points: usize,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(LabError::InvalidArgument("fit abscissae and ordinates differ in length".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(LabError::InvalidArgument(format!("fit needs at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(LabError::InvalidArgument("degenerate fit: all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(LineFit { slope, intercept, residual: (ss / nf).sqrt(), points: n })
}

/// Fits `log y = s log x + c` over points with `x > 0`, `y > 0` and finite.
pub fn log_log(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    least_squares(&lx, &ly)
}

/// Log-spaced grid of `points` values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..points)
                .map(|i| {
                    if i + 1 == points {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (points - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let ks: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let ys: Vec<f64> = ks.iter().map(|k| 3.0 * k.powf(0.25)).collect();
        let fit = log_log(&ks, &ys).unwrap();
        assert!((fit.slope - 0.25).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn degenerate_rejected() {
        assert!(least_squares(&[1.0, 1.0], &[2.0, 3.0]).is_err());
        assert!(least_squares(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(2.0, 1e4, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 2.0);
        assert_eq!(g[49], 1e4);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
