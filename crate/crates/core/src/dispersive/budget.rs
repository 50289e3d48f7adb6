//! Coherent-state readout response and the measurement error budget.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::params::DeviceParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Error function.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x <= 3.0 {
        erf_series(x)
    } else {
        1.0 - erfc_fraction(x)
    }
}

/// Complementary error function, accurate in the far tail.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 1.0 {
        1.0 - erf_series(x)
    } else {
        erfc_fraction(x)
    }
}

// erf(x) = (2/√π) e^{−x²} Σ 2ⁿ x^{2n+1} / (2n+1)!!, all terms positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= 2.0 * x2 / (2.0 * k + 1.0);
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

// Continued fraction erfc(x) = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))),
// evaluated by the modified Lentz method.
fn erfc_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..300 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * f)
}

/// Misassignment probability for two Gaussians of width 1/2 separated by
/// `delta_alpha_eff`.
pub fn separation_error(delta_alpha_eff: f64) -> f64 {
    0.5 * erfc(delta_alpha_eff / std::f64::consts::SQRT_2)
}

/// Large-separation asymptote exp(−x²/2)/(√(2π) x).
pub fn separation_error_tail(delta_alpha_eff: f64) -> f64 {
    let x = delta_alpha_eff;
    (-x * x / 2.0).exp() / ((2.0 * std::f64::consts::PI).sqrt() * x)
}

/// Single resonator driven at its state-dependent frequency ω_r ± χ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReadoutDrive {
    pub kappa: f64,
    pub chi: f64,
    /// ω_r − ω_d, independent of the qubit state.
    pub delta_rd: f64,
    pub epsilon: Complex64,
}

/// Drive amplitude giving `n_bar` photons in both states at Δ_rd = 0.
pub fn drive_for_photons(n_bar: f64, kappa: f64, chi: f64) -> f64 {
    (n_bar * (kappa * kappa / 4.0 + chi * chi)).sqrt()
}

/// |α₊ − α₋| at Δ_rd = 0: 2√n̄ / √((κ/2χ)² + 1).
pub fn separation_at_resonance(n_bar: f64, kappa: f64, chi: f64) -> f64 {
    if chi == 0.0 {
        return 0.0;
    }
    2.0 * n_bar.sqrt() / ((kappa / (2.0 * chi)).powi(2) + 1.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResponseTime {
    Steady,
    /// Elapsed time since a step drive switched on with an empty resonator.
    At(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityResponse {
    /// Amplitude for the excited (+) and ground (−) qubit.
    pub alpha_plus: Complex64,
    pub alpha_minus: Complex64,
    pub delta_alpha: f64,
}

pub fn cavity_response(
    drive: &ReadoutDrive,
    when: ResponseTime,
    opts: &OdeOptions,
) -> Result<CavityResponse> {
    if !(drive.kappa > 0.0) {
        return Err(Error::non_physical("kappa", "must be positive"));
    }
    let (ap, am) = match when {
        ResponseTime::Steady => {
            let z = |s: f64| Complex64::new(drive.kappa / 2.0, drive.delta_rd + s * drive.chi);
            (-I * drive.epsilon / z(1.0), -I * drive.epsilon / z(-1.0))
        }
        ResponseTime::At(t) if t == 0.0 => (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
        ResponseTime::At(t) => {
            if !(t > 0.0) {
                return Err(Error::InvalidInput(
                    "response time must be non-negative".into(),
                ));
            }
            let d = *drive;
            let rhs = move |_t: f64, y: &[Complex64], dy: &mut [Complex64]| {
                for (k, s) in [1.0, -1.0].into_iter().enumerate() {
                    dy[k] =
                        -I * (d.delta_rd + s * d.chi) * y[k] - d.kappa / 2.0 * y[k] - I * d.epsilon;
                }
            };
            let (ys, _) = integrate(rhs, &[0.0, t], &[Complex64::new(0.0, 0.0); 2], opts)?;
            (ys[1][0], ys[1][1])
        }
    };
    Ok(CavityResponse {
        alpha_plus: ap,
        alpha_minus: am,
        delta_alpha: (ap - am).norm(),
    })
}

/// Measurement error for the excited state in the unfiltered setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub t_m: f64,
    pub n_bar: f64,
    pub kappa: f64,
    /// Large-detuning dispersive shift −g²δ_q/Δ².
    pub chi: f64,
    /// Purcell rate g²κ/Δ².
    pub gamma: f64,
    pub delta_alpha: f64,
    pub delta_alpha_eff: f64,
    pub p_err_sep: f64,
    pub p_purcell: f64,
    pub p_intrinsic: f64,
    pub p_err_total: f64,
    /// (4/δ_q)/(√(P_err·η)·√(n̄/n_crit)), the shortest sensible t_m.
    pub t_m_bound: f64,
    /// √(2/P_err), the smallest sensible |Δ/g|.
    pub detuning_bound: f64,
}

pub fn error_budget(
    params: &DeviceParams,
    t_m: f64,
    n_bar: f64,
    kappa: f64,
) -> Result<ErrorBudget> {
    if !(t_m > 0.0) {
        return Err(Error::InvalidInput(
            "measurement time must be positive".into(),
        ));
    }
    if !(params.eta > 0.0 && params.eta <= 1.0) {
        return Err(Error::non_physical("eta", "must lie in (0, 1]"));
    }
    if !(n_bar >= 0.0 && kappa > 0.0) {
        return Err(Error::InvalidInput(
            "photon number must be non-negative and kappa positive".into(),
        ));
    }
    let chi = super::chi_full(params)?.chi_approx;
    let d = params.derive();
    let delta = d.delta_qr_appendix;
    let gamma = params.g * params.g * kappa / (delta * delta);
    let delta_alpha = separation_at_resonance(n_bar, kappa, chi);
    let delta_alpha_eff = (params.eta * kappa * t_m).sqrt() * delta_alpha;
    let p_err_sep = separation_error(delta_alpha_eff);
    let p_purcell = 0.5 * t_m * gamma;
    let p_intrinsic = if params.t1_intrinsic.is_finite() {
        0.5 * t_m / params.t1_intrinsic
    } else {
        0.0
    };
    let p_err_total = p_err_sep + p_purcell + p_intrinsic;
    let t_m_bound =
        (4.0 / params.delta_q) / ((p_err_total * params.eta).sqrt() * (n_bar / d.n_crit).sqrt());
    Ok(ErrorBudget {
        t_m,
        n_bar,
        kappa,
        chi,
        gamma,
        delta_alpha,
        delta_alpha_eff,
        p_err_sep,
        p_purcell,
        p_intrinsic,
        p_err_total,
        t_m_bound,
        detuning_bound: (2.0 / p_err_total).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::preset;
    use crate::units::mhz_to_rad_ns;
    use proptest::prelude::*;
    use statrs::function::erf as reference;

    #[test]
    fn erf_against_reference() {
        for i in 0..=600 {
            let x = i as f64 / 100.0 / std::f64::consts::SQRT_2;
            let (a, b) = (erfc(x), reference::erfc(x));
            assert!((a - b).abs() <= 1e-9 * b, "x={x}: {a} vs {b}");
            assert!((erf(x) - reference::erf(x)).abs() < 1e-10);
        }
        // Correctly rounded values (C library).
        for (x, e) in [
            (0.5020458146424487, 0.4777041361799735),
            (2.5, 4.069520174449589e-4),
            (4.0, 1.541725790028002e-8),
        ] {
            assert!((erfc(x) / e - 1.0).abs() < 1e-14, "x={x}");
        }
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(-1.0) + erf(1.0)).abs() < 1e-16);
        assert!((erfc(-2.0) - (2.0 - erfc(2.0))).abs() < 1e-16);
    }

    #[test]
    fn tail_approximation() {
        for x in [3.0, 4.0, 5.0, 6.0] {
            let r = separation_error_tail(x) / separation_error(x);
            assert!(r > 1.0 && r < 1.12, "x={x}: {r}");
        }
    }

    #[test]
    fn separation_anchors() {
        for (x, p) in [(2.3, 1e-2), (3.1, 1e-3), (3.7, 1e-4)] {
            assert!((separation_error(x) / p - 1.0).abs() < 0.1, "{x}");
        }
    }

    #[test]
    fn worked_example() {
        let p = preset("paper-appendix").unwrap();
        let b = error_budget(&p, 400.0, 125.0, 0.01).unwrap();
        assert!((b.delta_alpha - 2.8).abs() < 0.05);
        assert!((b.delta_alpha_eff - 3.06).abs() < 0.1);
        assert!((b.p_purcell / 1e-3 - 1.0).abs() < 0.05);
        assert!(b.p_err_sep > 5e-4 && b.p_err_sep < 2e-3);
        assert!((b.p_err_total - (b.p_err_sep + 0.5 * b.t_m * (b.gamma + 0.0))).abs() < 1e-15);
    }

    #[test]
    fn separation_and_decay_limits() {
        let p = preset("paper-appendix").unwrap();
        // Strong drive: pointer states fully separated, Purcell decay remains.
        let b = error_budget(&p, 400.0, 1e5, 0.01).unwrap();
        assert!(b.p_err_sep < 1e-12);
        assert!((b.p_err_total - b.p_purcell).abs() < 1e-12);
        // Weak coupling: no decay and no information.
        let mut q = p.clone();
        q.g = mhz_to_rad_ns(1e-6);
        let b = error_budget(&q, 400.0, 125.0, 0.01).unwrap();
        assert!(b.p_purcell < 1e-15);
        assert!((b.p_err_sep - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_shift_means_no_separation() {
        assert_eq!(separation_at_resonance(100.0, 0.01, 0.0), 0.0);
        let d = ReadoutDrive {
            kappa: 0.01,
            chi: 0.0,
            delta_rd: 0.0,
            epsilon: Complex64::new(0.1, 0.0),
        };
        let r = cavity_response(&d, ResponseTime::Steady, &OdeOptions::default()).unwrap();
        assert_eq!(r.delta_alpha, 0.0);
    }

    #[test]
    fn invalid_inputs() {
        let p = preset("paper-appendix").unwrap();
        assert!(error_budget(&p, 0.0, 1.0, 0.01).is_err());
        let mut q = p.clone();
        q.eta = 0.0;
        assert!(error_budget(&q, 1.0, 1.0, 0.01).is_err());
    }

    proptest! {
        #[test]
        fn transient_reaches_steady_state(kappa in 0.005f64..0.05, chi in -0.01f64..0.01, drd in -0.01f64..0.01) {
            let d = ReadoutDrive { kappa, chi, delta_rd: drd, epsilon: Complex64::new(0.03, -0.01) };
            let opts = OdeOptions { rtol: 1e-11, atol: 1e-14, ..Default::default() };
            let ss = cavity_response(&d, ResponseTime::Steady, &opts).unwrap();
            // Remaining transient e^{−6} is removed analytically before comparing.
            let t = 12.0 / kappa;
            let tr = cavity_response(&d, ResponseTime::At(t), &opts).unwrap();
            let decay = |s: f64| (-Complex64::new(kappa / 2.0, drd + s * chi) * t).exp();
            let want_p = ss.alpha_plus * (1.0 - decay(1.0));
            let want_m = ss.alpha_minus * (1.0 - decay(-1.0));
            prop_assert!((tr.alpha_plus - want_p).norm() < 1e-8 * ss.alpha_plus.norm());
            prop_assert!((tr.alpha_minus - want_m).norm() < 1e-8 * ss.alpha_minus.norm());
            prop_assert!((tr.alpha_plus - ss.alpha_plus).norm() < 3e-3 * ss.alpha_plus.norm());
        }

        #[test]
        fn closed_form_separation(kappa in 0.005f64..0.05, chi in -0.01f64..0.01, n in 1.0f64..200.0) {
            prop_assume!(chi.abs() > 1e-6);
            let eps = drive_for_photons(n, kappa, chi);
            let d = ReadoutDrive { kappa, chi, delta_rd: 0.0, epsilon: Complex64::new(eps, 0.0) };
            let r = cavity_response(&d, ResponseTime::Steady, &OdeOptions::default()).unwrap();
            prop_assert!((r.alpha_plus.norm_sqr() / n - 1.0).abs() < 1e-12);
            prop_assert!((r.delta_alpha / separation_at_resonance(n, kappa, chi) - 1.0).abs() < 1e-12);
            let diff = -2.0 * d.epsilon * chi / (Complex64::new(kappa / 2.0, 0.0).powi(2) + chi * chi);
            prop_assert!((r.alpha_plus - r.alpha_minus - diff).norm() < 1e-12 * diff.norm());
        }
    }
}
