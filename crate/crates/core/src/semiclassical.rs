//! Classical field dynamics of the readout resonator and the filter.
//!
//! The amplitudes α (readout) and β (filter) are taken in the frame rotating
//! at the drive frequency and normalized so that |α|² and |β|² are photon
//! numbers:
//!
//! ```text
//! α' = −i Δ_rd α − i G β − (κ_rd/2) α − i ε_r
//! β' = −i Δ_fd β − i G* α − (κ_f/2) β − i ε_f
//! ```
//!
//! with Δ_rd = ω_r − ω_d for the qubit-state dependent ω_r and Δ_fd = ω_f − ω_d.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::params::{DeviceParams, DriveConfig, DrivePort};
use crate::roots::{brent, sign_changes};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Qubit state selecting the readout frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QubitState {
    Ground,
    Excited,
}

impl QubitState {
    pub fn readout_frequency(self, params: &DeviceParams) -> f64 {
        let (wg, we) = params.readout_frequencies();
        match self {
            QubitState::Ground => wg,
            QubitState::Excited => we,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            QubitState::Ground => "g",
            QubitState::Excited => "e",
        }
    }
}

/// Readout resonator as seen through the filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveResonator {
    /// Effective leakage rate at the probe frequency.
    pub kappa_eff: f64,
    /// Frequency pull at the probe frequency.
    pub delta_omega_r: f64,
    /// Leakage at the measurement frequency.
    pub kappa_r: f64,
    /// Leakage at the qubit frequency.
    pub kappa_q: f64,
    /// Suppression factor (κ_q + κ_rd)/(κ_r + κ_rd).
    pub suppression: f64,
}

/// Effective leakage and frequency pull at `omega`.
pub fn kappa_eff_and_pull(params: &DeviceParams, omega: f64) -> (f64, f64) {
    let kf = params.kappa_f;
    let dfd = params.omega_f - omega;
    let kappa_eff = 4.0 * params.coupling_abs2() / kf / (1.0 + (2.0 * dfd / kf).powi(2));
    (kappa_eff, -dfd / kf * kappa_eff)
}

/// Default frequency at which κ_r is evaluated: the midpoint of the two
/// qubit-state dependent readout frequencies.
pub fn kappa_r_probe(params: &DeviceParams) -> f64 {
    let (wg, we) = params.readout_frequencies();
    0.5 * (wg + we)
}

pub fn effective_resonator(params: &DeviceParams, omega_probe: f64) -> Result<EffectiveResonator> {
    effective_resonator_at(params, omega_probe, kappa_r_probe(params))
}

/// As [`effective_resonator`] with an explicit frequency for κ_r.
pub fn effective_resonator_at(
    params: &DeviceParams,
    omega_probe: f64,
    omega_kappa_r: f64,
) -> Result<EffectiveResonator> {
    if !(params.kappa_f > 0.0) {
        return Err(Error::non_physical(
            "kappa_f",
            "filter linewidth must be positive",
        ));
    }
    let (kappa_eff, delta_omega_r) = kappa_eff_and_pull(params, omega_probe);
    let (kappa_r, _) = kappa_eff_and_pull(params, omega_kappa_r);
    let (kappa_q, _) = kappa_eff_and_pull(params, params.omega_q_bare);
    let rd = params.kappa_r_int;
    let suppression = if kappa_r + rd > 0.0 {
        (kappa_q + rd) / (kappa_r + rd)
    } else {
        f64::NAN
    };
    Ok(EffectiveResonator {
        kappa_eff,
        delta_omega_r,
        kappa_r,
        kappa_q,
        suppression,
    })
}

/// Coupling magnitude that produces leakage `kappa_r_target` at the bare
/// readout frequency. The phase is zero.
pub fn coupling_from_kappa_r(params: &DeviceParams, kappa_r_target: f64) -> Result<Complex64> {
    if !(kappa_r_target > 0.0) || !kappa_r_target.is_finite() {
        return Err(Error::non_physical(
            "kappa_r_target",
            "must be positive and finite",
        ));
    }
    let kf = params.kappa_f;
    let x = 2.0 * (params.omega_r_bare - params.omega_f) / kf;
    Ok(Complex64::new(
        (kappa_r_target * kf * (1.0 + x * x) / 4.0).sqrt(),
        0.0,
    ))
}

/// Time series of the two field amplitudes.
#[derive(Debug, Clone, Serialize)]
pub struct FieldTrajectory {
    pub times: Vec<f64>,
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    /// Outgoing amplitude √κ_f^out · β.
    pub gamma_tl: Vec<Complex64>,
    pub n_r: Vec<f64>,
    pub n_f: Vec<f64>,
    /// Phase of the readout-drive outgoing map γ = e^{iφ} √κ_eff α.
    pub phi: f64,
}

fn detunings(params: &DeviceParams, omega_d: f64, state: QubitState) -> (f64, f64) {
    (
        state.readout_frequency(params) - omega_d,
        params.omega_f - omega_d,
    )
}

/// Phase of −iG*/(κ_f/2 + iΔ_fd).
pub fn outgoing_phase(params: &DeviceParams, omega_d: f64) -> f64 {
    let b = Complex64::new(params.kappa_f / 2.0, params.omega_f - omega_d);
    (-I * params.coupling.conj() / b).arg()
}

/// Integrates the field equations from empty resonators.
pub fn integrate_fields(
    params: &DeviceParams,
    drive: &DriveConfig,
    state: QubitState,
    grid: &[f64],
    opts: &OdeOptions,
) -> Result<FieldTrajectory> {
    integrate_fields_from(
        params,
        drive,
        state,
        grid,
        (Complex64::default(), Complex64::default()),
        opts,
    )
}

pub fn integrate_fields_from(
    params: &DeviceParams,
    drive: &DriveConfig,
    state: QubitState,
    grid: &[f64],
    initial: (Complex64, Complex64),
    opts: &OdeOptions,
) -> Result<FieldTrajectory> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("time grid is empty".into()));
    }
    let (drd, dfd) = detunings(params, drive.omega_d, state);
    let g = params.coupling;
    let a_rate = Complex64::new(params.kappa_r_int / 2.0, drd);
    let b_rate = Complex64::new(params.kappa_f / 2.0, dfd);
    let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        dy[0] = -a_rate * y[0] - I * g * y[1] - I * drive.readout_amplitude(t);
        dy[1] = -b_rate * y[1] - I * g.conj() * y[0] - I * drive.filter_amplitude(t);
    };

    // Stop at envelope kinks so that the step control never straddles them.
    let mut full: Vec<f64> = grid.to_vec();
    for bp in drive.envelope.breakpoints() {
        if bp > grid[0] && bp < grid[grid.len() - 1] {
            full.push(bp);
        }
    }
    full.sort_by(|a, b| a.partial_cmp(b).unwrap());
    full.dedup();
    let (states, _) = integrate(rhs, &full, &[initial.0, initial.1], opts)?;

    let scale = (params.kappa_f * params.kappa_f_out_fraction).sqrt();
    let mut traj = FieldTrajectory {
        times: Vec::with_capacity(grid.len()),
        alpha: Vec::with_capacity(grid.len()),
        beta: Vec::with_capacity(grid.len()),
        gamma_tl: Vec::with_capacity(grid.len()),
        n_r: Vec::with_capacity(grid.len()),
        n_f: Vec::with_capacity(grid.len()),
        phi: outgoing_phase(params, drive.omega_d),
    };
    let mut gi = 0;
    for (t, y) in full.iter().zip(states) {
        if gi < grid.len() && *t == grid[gi] {
            traj.times.push(*t);
            traj.alpha.push(y[0]);
            traj.beta.push(y[1]);
            traj.gamma_tl.push(y[1] * scale);
            traj.n_r.push(y[0].norm_sqr());
            traj.n_f.push(y[1].norm_sqr());
            gi += 1;
        }
    }
    Ok(traj)
}

/// Steady-state amplitudes under a constant drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyFields {
    pub alpha: Complex64,
    pub beta: Complex64,
    /// Filter amplitude from adiabatic elimination given the exact α.
    pub beta_quasisteady: Complex64,
}

impl SteadyFields {
    pub fn n_r(&self) -> f64 {
        self.alpha.norm_sqr()
    }
    pub fn n_f(&self) -> f64 {
        self.beta.norm_sqr()
    }
}

/// Exact solution of the 2×2 steady-state system.
pub fn steady_state_fields(
    params: &DeviceParams,
    drive: &DriveConfig,
    state: QubitState,
) -> Result<SteadyFields> {
    let (drd, dfd) = detunings(params, drive.omega_d, state);
    let g = params.coupling;
    let a = Complex64::new(params.kappa_r_int / 2.0, drd);
    let b = Complex64::new(params.kappa_f / 2.0, dfd);
    let eps_r = drive.readout_amplitude(0.0);
    let eps_f = drive.filter_amplitude(0.0);
    let det = a * b + g.norm_sqr();
    if det.norm() == 0.0 || b.norm() == 0.0 {
        return Err(Error::Singular(
            "drive sits on a lossless normal mode".into(),
        ));
    }
    let alpha = (-I * eps_r * b - g * eps_f) / det;
    let beta = (-I * a * eps_f - g.conj() * eps_r) / det;
    let beta_quasisteady = (-I * g.conj() * alpha - I * eps_f) / b;
    Ok(SteadyFields {
        alpha,
        beta,
        beta_quasisteady,
    })
}

/// Readout drive with the same effect on α as filter drive `eps_f`.
pub fn equivalent_readout_drive(
    params: &DeviceParams,
    eps_f: Complex64,
    omega_d: f64,
) -> Complex64 {
    let b = Complex64::new(params.kappa_f / 2.0, params.omega_f - omega_d);
    -I * eps_f * params.coupling / b
}

/// Inverse of [`equivalent_readout_drive`].
pub fn equivalent_filter_drive(
    params: &DeviceParams,
    eps_r: Complex64,
    omega_d: f64,
) -> Result<Complex64> {
    if params.coupling.norm() == 0.0 {
        return Err(Error::InvalidInput(
            "filter drive cannot reach a decoupled readout resonator".into(),
        ));
    }
    let b = Complex64::new(params.kappa_f / 2.0, params.omega_f - omega_d);
    Ok(eps_r * b / (-I * params.coupling))
}

/// Steady outgoing amplitude per unit filter drive.
///
/// Evaluates √κ_f/(κ_f/2 + iΔ_fd) · 2Δ/(κ_eff + κ_rd + 2i(Δ_rd + δω_r)) with
/// Δ = Δ_rd − iκ_rd/2, κ_eff and δω_r taken at the drive frequency. The
/// result vanishes at ω_d = ω_r for a loss-free readout resonator.
pub fn transfer_function(params: &DeviceParams, omega_d: f64, state: QubitState) -> Complex64 {
    let (drd, dfd) = detunings(params, omega_d, state);
    let (kappa_eff, pull) = kappa_eff_and_pull(params, omega_d);
    let kf = params.kappa_f;
    let rd = params.kappa_r_int;
    let lead = Complex64::new(kf.sqrt() * params.kappa_f_out_fraction.sqrt(), 0.0)
        / Complex64::new(kf / 2.0, dfd);
    let num = Complex64::new(2.0 * drd, -rd);
    let den = Complex64::new(kappa_eff + rd, 2.0 * (drd + pull));
    lead * num / den
}

/// Outgoing power for a filter drive relative to a readout drive producing
/// the same readout field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerRatio {
    pub ratio: f64,
    /// False when |Δ_rd| is not small compared with κ_f.
    pub valid: bool,
}

/// Closed-form ratio (Δ_rd/κ_r)²·4/(1 + (2Δ_fd/κ_f)²).
pub fn power_ratio(params: &DeviceParams, omega_d: f64, state: QubitState) -> PowerRatio {
    let (drd, dfd) = detunings(params, omega_d, state);
    let (kappa_r, _) = kappa_eff_and_pull(params, kappa_r_probe(params));
    let kf = params.kappa_f;
    PowerRatio {
        ratio: (drd / kappa_r).powi(2) * 4.0 / (1.0 + (2.0 * dfd / kf).powi(2)),
        valid: drd.abs() < 0.1 * kf,
    }
}

/// Same ratio from the exact steady states of both drive configurations.
pub fn power_ratio_exact(params: &DeviceParams, omega_d: f64, state: QubitState) -> Result<f64> {
    let eps_f = Complex64::new(1.0, 0.0);
    let filt = steady_state_fields(
        params,
        &DriveConfig::step(DrivePort::Filter, omega_d, eps_f)?,
        state,
    )?;
    let eps_r = equivalent_readout_drive(params, eps_f, omega_d);
    let read = steady_state_fields(
        params,
        &DriveConfig::step(DrivePort::Readout, omega_d, eps_r)?,
        state,
    )?;
    Ok(filt.n_f() / read.n_f())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SymmetryCriterion {
    /// Equal readout photon numbers for both qubit states.
    SymmetricReadoutPhotons,
    /// Equal filter photon numbers for both qubit states.
    SymmetricFilterPhotons,
}

/// Drive frequency satisfying the requested symmetry.
///
/// Readout symmetry is the self-consistent solution of
/// ω_d = (ω_r^g + ω_r^e)/2 + δω_r(ω_d). Filter symmetry is a sign change of
/// n_f^g − n_f^e within κ_f of the midpoint; the one closest to the midpoint
/// is returned.
pub fn find_symmetric_drive(
    params: &DeviceParams,
    port: DrivePort,
    criterion: SymmetryCriterion,
) -> Result<f64> {
    let (wg, we) = params.readout_frequencies();
    let mid = 0.5 * (wg + we);
    if (we - wg).abs() >= params.kappa_f {
        return Err(Error::InvalidInput(
            "dispersive splitting must be below the filter linewidth".into(),
        ));
    }
    match criterion {
        SymmetryCriterion::SymmetricReadoutPhotons => {
            let reach = params.coupling_abs2() / params.kappa_f;
            if reach == 0.0 {
                return Ok(mid);
            }
            let m = 1.01 * reach + 1e-12;
            brent(
                |w| w - mid - kappa_eff_and_pull(params, w).1,
                mid - m,
                mid + m,
                1e-13,
                200,
            )
        }
        SymmetryCriterion::SymmetricFilterPhotons => {
            if port == DrivePort::None {
                return Err(Error::InvalidInput(
                    "filter symmetry needs a driven port".into(),
                ));
            }
            let diff = |w: f64| -> f64 {
                let amp = Complex64::new(1.0, 0.0);
                let d = match DriveConfig::step(port, w, amp) {
                    Ok(d) => d,
                    Err(_) => return f64::NAN,
                };
                let ng = steady_state_fields(params, &d, QubitState::Ground).map(|s| s.n_f());
                let ne = steady_state_fields(params, &d, QubitState::Excited).map(|s| s.n_f());
                match (ng, ne) {
                    (Ok(a), Ok(b)) => (a - b) / (a + b),
                    _ => f64::NAN,
                }
            };
            if wg == we {
                // Every frequency is symmetric; fall back to the readout rule.
                return find_symmetric_drive(
                    params,
                    port,
                    SymmetryCriterion::SymmetricReadoutPhotons,
                );
            }
            let (lo, hi) = (mid - params.kappa_f, mid + params.kappa_f);
            let brackets = sign_changes(diff, lo, hi, 4000);
            let nearest = brackets
                .into_iter()
                .min_by(|a, b| {
                    let da = (0.5 * (a.0 + a.1) - mid).abs();
                    let db = (0.5 * (b.0 + b.1) - mid).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .ok_or(Error::NoBracket { lo, hi })?;
            brent(diff, nearest.0, nearest.1, 1e-13, 200)
        }
    }
}

/// Drive amplitude on `port` giving `n_r_target` readout photons for `state`.
///
/// The equivalent readout drive is real and positive.
pub fn calibrate_drive(
    params: &DeviceParams,
    port: DrivePort,
    omega_d: f64,
    state: QubitState,
    n_r_target: f64,
) -> Result<DriveConfig> {
    if !(n_r_target > 0.0) {
        return Err(Error::InvalidInput(
            "target photon number must be positive".into(),
        ));
    }
    let unit = DriveConfig::step(DrivePort::Readout, omega_d, Complex64::new(1.0, 0.0))?;
    let n1 = steady_state_fields(params, &unit, state)?.n_r();
    if n1 == 0.0 {
        return Err(Error::Singular(
            "readout field does not respond to the drive".into(),
        ));
    }
    let eps_r = Complex64::new((n_r_target / n1).sqrt(), 0.0);
    let amplitude = match port {
        DrivePort::Readout => eps_r,
        DrivePort::Filter => equivalent_filter_drive(params, eps_r, omega_d)?,
        DrivePort::None => {
            return Err(Error::InvalidInput(
                "cannot calibrate an undriven port".into(),
            ))
        }
    };
    DriveConfig::step(port, omega_d, amplitude)
}
