//! Ordinary least-squares straight-line fit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residual variance.
    pub slope_stderr: f64,
    /// Root-mean-square residual.
    pub residual_rms: f64,
    pub points: usize,
}

impl LinearFit {
    /// Approximate 95% interval on the slope.
    pub fn slope_ci(&self) -> (f64, f64) {
        (
            self.slope - 1.96 * self.slope_stderr,
            self.slope + 1.96 * self.slope_stderr,
        )
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::InvalidInput("x and y lengths differ".into()));
    }
    if n < 2 {
        return Err(Error::FitWindow(format!(
            "need at least two points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitWindow("all abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if n > 2 {
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        residual_rms: (ssr / nf).sqrt(),
        points: n,
    })
}
