//! Adaptive Dormand–Prince 5(4) integrator for complex-valued systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step; `f64::INFINITY` for none.
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_step: f64::INFINITY,
            min_step: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

// Dormand–Prince tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `dy/dt = f(t, y)` and returns the state at every grid time.
///
/// The grid must be strictly increasing; the first entry is the initial
/// time. Steps never cross a grid point, so grid points can double as
/// breakpoints of a piecewise-defined right-hand side.
pub fn integrate<F>(
    mut f: F,
    grid: &[f64],
    y0: &[Complex64],
    opts: &OdeOptions,
) -> Result<(Vec<Vec<Complex64>>, OdeStats)>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    if grid.is_empty() {
        return Err(Error::InvalidInput("time grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(
            "time grid must be finite and strictly increasing".into(),
        ));
    }
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0.to_vec());

    let mut y = y0.to_vec();
    let mut t = grid[0];
    let mut k: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); n]; 7];
    let mut tmp = vec![Complex64::new(0.0, 0.0); n];
    let mut y5 = vec![Complex64::new(0.0, 0.0); n];

    f(t, &y, &mut k[0]);
    stats.evaluations += 1;
    let mut h = initial_step(&y, &k[0], opts, grid.get(1).map(|t1| t1 - t).unwrap_or(1.0));

    for &target in &grid[1..] {
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::ToleranceUnreachable { t, step: h });
            }
            let remaining = target - t;
            let mut step = h.min(opts.max_step);
            let last = step >= remaining * (1.0 - 1e-12);
            if last {
                step = remaining;
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            acc += k[j][i] * *a;
                        }
                    }
                    tmp[i] = y[i] + acc * step;
                }
                f(t + C[s] * step, &tmp, &mut k[s]);
            }
            stats.evaluations += 6;
            // Stage 7 evaluated at the fifth-order solution (FSAL).
            let mut err_sq = 0.0;
            for i in 0..n {
                let mut s5 = Complex64::new(0.0, 0.0);
                let mut s4 = Complex64::new(0.0, 0.0);
                for j in 0..7 {
                    s5 += k[j][i] * B5[j];
                    s4 += k[j][i] * B4[j];
                }
                y5[i] = y[i] + s5 * step;
                let e = (s5 - s4).norm() * step;
                let scale = opts.atol + opts.rtol * y[i].norm().max(y5[i].norm());
                err_sq += (e / scale).powi(2);
            }
            let err = if n == 0 {
                0.0
            } else {
                (err_sq / n as f64).sqrt()
            };
            if err <= 1.0 {
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut y5);
                k.swap(0, 6);
                stats.accepted += 1;
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // Do not let a short final step shrink the working step size.
                h = if last { h.max(step * fac) } else { step * fac };
            } else {
                stats.rejected += 1;
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
                if h < opts.min_step {
                    return Err(Error::ToleranceUnreachable { t, step: h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn initial_step(y: &[Complex64], dy: &[Complex64], opts: &OdeOptions, span: f64) -> f64 {
    let n = y.len().max(1) as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(dy) {
        let sc = opts.atol + opts.rtol * yi.norm();
        d0 += (yi.norm() / sc).powi(2);
        d1 += (fi.norm() / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(span).min(opts.max_step).max(opts.min_step)
}
