//! Driven Purcell decay: the qubit decay rate with the readout resonator
//! populated by a steady drive, and simple ac-Stark pictures of it.

mod lindblad;

pub use lindblad::{
    build_generator, evolve_observables, evolve_with, lindblad_evolve, predicted_photons,
    required_cutoff, FockTruncation, LindbladModel, Observables, PropagatorOptions,
    TruncatedDensityMatrix, MAX_DIMENSION,
};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::params::{DeviceParams, DriveConfig, DrivePort};
use crate::roots::brent;
use crate::semiclassical::{steady_state_fields, QubitState};

/// Result of fitting −ln ρ_ee(t) with a straight line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub gamma: f64,
    pub window: (f64, f64),
    /// RMS residual of −ln ρ_ee about the fitted line.
    pub residual_rms: f64,
    /// 95% interval on the rate.
    pub slope_ci: (f64, f64),
    /// Set when the residual exceeds the configured bound.
    pub poor_fit: bool,
    /// Set when ρ_ee increases somewhere in the window.
    pub non_monotone: bool,
    pub points: usize,
}

/// Default bound on the RMS residual of a rate fit.
pub const RESIDUAL_BOUND: f64 = 1e-4;

/// Least-squares decay rate of ρ_ee over `window`.
///
/// Every sample in the window must have ρ_ee ≥ 0.9.
pub fn extract_rate(
    times: &[f64],
    rho_ee: &[f64],
    window: (f64, f64),
    residual_bound: f64,
) -> Result<RateFit> {
    if times.len() != rho_ee.len() {
        return Err(Error::InvalidInput(
            "times and populations differ in length".into(),
        ));
    }
    if !(window.1 > window.0) {
        return Err(Error::FitWindow(
            "window end must be after its start".into(),
        ));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut non_monotone = false;
    let mut prev = f64::INFINITY;
    for (&t, &p) in times.iter().zip(rho_ee) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(p >= 0.9) {
            return Err(Error::FitWindow(format!(
                "excited population {p:.4} below 0.9 at t = {t}"
            )));
        }
        if p > prev {
            non_monotone = true;
        }
        prev = p;
        x.push(t);
        y.push(-p.ln());
    }
    if x.len() < 3 {
        return Err(Error::FitWindow(format!(
            "only {} samples inside the window",
            x.len()
        )));
    }
    let fit = linear_fit(&x, &y)?;
    Ok(RateFit {
        gamma: fit.slope,
        window,
        residual_rms: fit.residual_rms,
        slope_ci: fit.slope_ci(),
        poor_fit: fit.residual_rms > residual_bound,
        non_monotone,
        points: fit.points,
    })
}

/// Simple pictures of Γ(n̄)/Γ(0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StarkModel {
    /// Fourth power of the detuning ratio with a linear Stark shift.
    FilterQuartic,
    /// (1 + n̄/n_crit)⁻², the quartic law with the exact two-level shift.
    FilterTwoLevel,
    /// (1 + n̄/n_crit)⁻¹.
    NoFilterStark,
    /// [(1 + x)^(−1/2) + (1 + x)⁻¹]² / 4 with x = n̄/n_crit.
    NoFilterExact2L,
}

/// Two-level dispersive shift at zero photons, −g²/Δ_rq.
pub fn chi_two_level(params: &DeviceParams) -> f64 {
    -params.g * params.g / params.derive().delta_rq
}

/// Photon-number dependent two-level shift −g²/[Δ_rq √(1 + 4g²n/Δ_rq²)].
pub fn chi_two_level_n(params: &DeviceParams, n: f64) -> f64 {
    let d = params.derive().delta_rq;
    -params.g * params.g / (d * (1.0 + 4.0 * params.g * params.g * n / (d * d)).sqrt())
}

/// Qubit frequency shifted linearly by 2χ(0)n.
pub fn qubit_frequency_linear(params: &DeviceParams, n: f64) -> f64 {
    params.omega_q_bare + 2.0 * chi_two_level(params) * n
}

/// Qubit frequency from the two-level dressed splitting, ω_r − Δ_rq√(1 + n/n_crit).
pub fn qubit_frequency_two_level(params: &DeviceParams, n: f64) -> f64 {
    let d = params.derive();
    params.omega_r_bare - d.delta_rq * (1.0 + n / d.n_crit).sqrt()
}

/// [(ω_r − ω_q)/(ω_r − ω_q,eff)]⁴ for a given shifted qubit frequency.
pub fn quartic_suppression(params: &DeviceParams, omega_q_eff: f64) -> f64 {
    ((params.omega_r_bare - params.omega_q_bare) / (params.omega_r_bare - omega_q_eff)).powi(4)
}

pub fn stark_model(n_bar: f64, variant: StarkModel, params: &DeviceParams) -> f64 {
    let x = n_bar / params.derive().n_crit;
    match variant {
        StarkModel::FilterQuartic => {
            quartic_suppression(params, qubit_frequency_linear(params, n_bar))
        }
        StarkModel::FilterTwoLevel => (1.0 + x).powi(-2),
        StarkModel::NoFilterStark => 1.0 / (1.0 + x),
        StarkModel::NoFilterExact2L => {
            let s = (1.0 + x).powf(-0.5) + 1.0 / (1.0 + x);
            s * s / 4.0
        }
    }
}

/// Readout configuration used for a driven run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Topology {
    /// Qubit, readout resonator and filter as given.
    Filtered,
    /// Filter removed; the readout resonator decays directly at `kappa`.
    /// `g` replaces the qubit coupling when set.
    Unfiltered { kappa: f64, g: Option<f64> },
}

impl Topology {
    /// Device parameters seen by the simulation.
    pub fn apply(self, params: &DeviceParams) -> DeviceParams {
        match self {
            Topology::Filtered => params.clone(),
            Topology::Unfiltered { kappa, g } => {
                let mut p = params.clone();
                p.coupling = Complex64::new(0.0, 0.0);
                p.kappa_r_int = kappa;
                if let Some(g) = g {
                    p.g = g;
                }
                p.dressed_readout = None;
                p
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrivenSettings {
    pub n_bar_list: Vec<f64>,
    /// Fit window in ns.
    pub fit_window: (f64, f64),
    /// Extra Fock levels used for the convergence check.
    pub trunc_margin: usize,
    /// Propagator series tolerance.
    pub tolerance: f64,
    /// Output sampling interval in ns.
    pub sample_dt: f64,
    pub residual_bound: f64,
    /// Largest relative change of Γ under the widened truncation.
    pub convergence_bound: f64,
    pub topology: Topology,
}

impl Default for DrivenSettings {
    fn default() -> Self {
        Self {
            n_bar_list: vec![0.5, 1.0, 2.0, 3.0],
            fit_window: (360.0, 1000.0),
            trunc_margin: 4,
            tolerance: 1e-12,
            sample_dt: 10.0,
            residual_bound: RESIDUAL_BOUND,
            convergence_bound: 5e-3,
            topology: Topology::Filtered,
        }
    }
}

impl DrivenSettings {
    /// Reads the `[driven]` table of a configuration document, if present.
    pub fn from_document(table: &toml::Table) -> Result<Self> {
        let mut s = Self::default();
        let Some(t) = table.get("driven") else {
            return Ok(s);
        };
        let t = t
            .as_table()
            .ok_or_else(|| Error::Parse("`driven` must be a table".into()))?;
        let num = |k: &str, v: &toml::Value| -> Result<f64> {
            v.as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .ok_or_else(|| Error::Parse(format!("`driven.{k}` must be a number")))
        };
        for (k, v) in t {
            match k.as_str() {
                "n_bar_list" => {
                    let arr = v.as_array().ok_or_else(|| {
                        Error::Parse("`driven.n_bar_list` must be an array".into())
                    })?;
                    s.n_bar_list = arr.iter().map(|x| num(k, x)).collect::<Result<_>>()?;
                }
                "fit_window_ns" => {
                    let arr = v.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                        Error::Parse("`driven.fit_window_ns` must be a two-element array".into())
                    })?;
                    s.fit_window = (num(k, &arr[0])?, num(k, &arr[1])?);
                }
                "trunc_margin" => {
                    let m = v.as_integer().filter(|m| *m >= 0).ok_or_else(|| {
                        Error::Parse("`driven.trunc_margin` must be a non-negative integer".into())
                    })?;
                    s.trunc_margin = m as usize;
                }
                "tolerance" => s.tolerance = num(k, v)?,
                "sample_dt_ns" => s.sample_dt = num(k, v)?,
                "residual_bound" => s.residual_bound = num(k, v)?,
                _ => return Err(Error::UnknownKey(format!("driven.{k}"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .n_bar_list
            .iter()
            .any(|n| !(n.is_finite() && *n >= 0.0))
        {
            return Err(Error::non_physical(
                "n_bar_list",
                "photon numbers must be finite and non-negative",
            ));
        }
        if !(self.fit_window.0 >= 0.0 && self.fit_window.1 > self.fit_window.0) {
            return Err(Error::non_physical("fit_window_ns", "need 0 ≤ start < end"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1e-3) {
            return Err(Error::non_physical("tolerance", "must lie in (0, 1e-3)"));
        }
        if !(self.sample_dt > 0.0) {
            return Err(Error::non_physical("sample_dt_ns", "must be positive"));
        }
        Ok(())
    }

    fn grid(&self) -> Vec<f64> {
        let steps = (self.fit_window.1 / self.sample_dt).ceil() as usize;
        let mut g: Vec<f64> = (0..=steps).map(|i| i as f64 * self.sample_dt).collect();
        *g.last_mut().unwrap() = g.last().unwrap().max(self.fit_window.1);
        g
    }
}

/// Shortest start of a fit window that leaves the resonator transients behind.
pub fn minimum_fit_start(params: &DeviceParams) -> Result<f64> {
    let kappa_r = if params.coupling.norm() > 0.0 {
        crate::semiclassical::effective_resonator(params, params.omega_r_bare)?.kappa_r
    } else {
        params.kappa_r_int
    };
    let slowest = if params.coupling.norm() > 0.0 {
        params.kappa_f.min(kappa_r)
    } else {
        kappa_r
    };
    let slowest = if params.kappa_r_int > 0.0 && params.coupling.norm() > 0.0 {
        slowest.min(params.kappa_r_int)
    } else {
        slowest
    };
    if !(slowest > 0.0) {
        return Err(Error::non_physical(
            "kappa",
            "resonators must be lossy for a driven rate",
        ));
    }
    Ok(10.0 / slowest)
}

/// Drive on the readout port at `omega_d` giving `n_bar` photons in the
/// readout resonator tuned to `omega_d`.
pub fn calibrate_readout_drive(
    params: &DeviceParams,
    omega_d: f64,
    n_bar: f64,
) -> Result<DriveConfig> {
    if n_bar == 0.0 {
        return Ok(DriveConfig::none(omega_d));
    }
    let mut p = params.clone();
    p.dressed_readout = Some((omega_d, omega_d));
    let photons = |eps: f64| -> Result<f64> {
        let d = DriveConfig::step(DrivePort::Readout, omega_d, Complex64::new(eps, 0.0))?;
        Ok(steady_state_fields(&p, &d, QubitState::Excited)?.n_r())
    };
    let mut hi = 1e-3;
    while photons(hi)? < n_bar {
        hi *= 4.0;
        if hi > 1e6 {
            return Err(Error::NoBracket { lo: 0.0, hi });
        }
    }
    let eps = brent(
        |e| photons(e).map(|n| n - n_bar).unwrap_or(f64::NAN),
        1e-12 * hi,
        hi,
        1e-14 * hi,
        200,
    )?;
    let drive = DriveConfig::step(DrivePort::Readout, omega_d, Complex64::new(eps, 0.0))?;
    let got = photons(eps)?;
    if (got - n_bar).abs() > 5e-3 * n_bar {
        return Err(Error::Numerical(format!(
            "drive calibration reached {got:.4} photons for {n_bar}"
        )));
    }
    Ok(drive)
}

/// One driven evolution at fixed truncation.
#[derive(Debug, Clone, Serialize)]
pub struct DrivenRun {
    pub trunc: FockTruncation,
    pub fit: RateFit,
    /// Mean readout photons averaged over the fit window.
    pub n_r_window: f64,
    pub n_f_window: f64,
    /// Largest population in the top Fock level at the end of the run.
    pub edge_population: f64,
}

pub fn run_driven(
    params: &DeviceParams,
    drive: &DriveConfig,
    trunc: FockTruncation,
    settings: &DrivenSettings,
) -> Result<DrivenRun> {
    let model = build_generator(params, drive, trunc)?;
    let grid = settings.grid();
    let opts = PropagatorOptions {
        tolerance: settings.tolerance,
        ..Default::default()
    };
    let (obs, last) = evolve_observables(
        &model,
        &TruncatedDensityMatrix::excited_vacuum(trunc),
        &grid,
        &opts,
    )?;
    last.check(false)?;
    let times: Vec<f64> = obs.iter().map(|o| o.t).collect();
    let pops: Vec<f64> = obs.iter().map(|o| o.rho_ee).collect();
    let fit = extract_rate(&times, &pops, settings.fit_window, settings.residual_bound)?;
    let inside: Vec<&Observables> = obs
        .iter()
        .filter(|o| o.t >= settings.fit_window.0 && o.t <= settings.fit_window.1)
        .collect();
    let mean =
        |f: fn(&Observables) -> f64| inside.iter().map(|o| f(o)).sum::<f64>() / inside.len() as f64;
    Ok(DrivenRun {
        trunc,
        fit,
        n_r_window: mean(|o| o.n_r),
        n_f_window: mean(|o| o.n_f),
        edge_population: last.edge_population(),
    })
}

/// One row of a Γ(n̄) sweep.
#[derive(Debug, Clone, Serialize)]
pub struct DrivenPoint {
    pub n_bar: f64,
    pub n_bar_over_4ncrit: f64,
    pub omega_d: f64,
    pub epsilon: Complex64,
    pub gamma: f64,
    pub gamma_ci: (f64, f64),
    pub ratio: f64,
    pub ratio_model_quartic: f64,
    pub fit_residual: f64,
    pub n_max_r: usize,
    pub n_max_f: usize,
    /// Rate with both cutoffs raised by the margin.
    pub gamma_refined: f64,
    pub converged: bool,
    pub poor_fit: bool,
    pub n_measured: f64,
}

/// Baseline rate without drive.
pub fn baseline_rate(params: &DeviceParams, topology: Topology) -> f64 {
    crate::singlex::gamma_exact(&topology.apply(params))
}

/// Drive tracking the excited-state resonator: ω_d = ω_r + χ(n̄).
pub fn tracking_frequency(params: &DeviceParams, n_bar: f64) -> f64 {
    params.omega_r_bare + chi_two_level_n(params, n_bar)
}

/// Γ at one target photon number, with the truncation convergence check.
pub fn purcell_point(
    params: &DeviceParams,
    n_bar: f64,
    gamma0: f64,
    settings: &DrivenSettings,
) -> Result<DrivenPoint> {
    let p = settings.topology.apply(params);
    let start = minimum_fit_start(&p)?;
    if settings.fit_window.0 < start * (1.0 - 1e-9) {
        return Err(Error::FitWindow(format!(
            "window starts at {} ns, before the transients settle ({start:.1} ns)",
            settings.fit_window.0
        )));
    }
    let omega_d = tracking_frequency(&p, n_bar);
    let drive = calibrate_readout_drive(&p, omega_d, n_bar)?;
    let (n_r, n_f) = if n_bar > 0.0 {
        predicted_photons(&p, &drive)?
    } else {
        (0.0, 0.0)
    };
    let mut trunc = FockTruncation::for_photons(n_r, n_f);
    if p.coupling.norm() == 0.0 {
        trunc.n_max_filter = 0;
    }
    let base = run_driven(&p, &drive, trunc, settings)?;
    let mut wide = trunc.widened(settings.trunc_margin);
    if p.coupling.norm() == 0.0 {
        wide.n_max_filter = 0;
    }
    let refined = if settings.trunc_margin > 0 {
        run_driven(&p, &drive, wide, settings)?.fit.gamma
    } else {
        base.fit.gamma
    };
    let converged = (refined - base.fit.gamma).abs() <= settings.convergence_bound * refined.abs();
    let n_crit = p.derive().n_crit;
    let model = match settings.topology {
        Topology::Filtered => StarkModel::FilterTwoLevel,
        Topology::Unfiltered { .. } => StarkModel::NoFilterStark,
    };
    Ok(DrivenPoint {
        n_bar,
        n_bar_over_4ncrit: n_bar / (4.0 * n_crit),
        omega_d,
        epsilon: drive.amplitude,
        gamma: base.fit.gamma,
        gamma_ci: base.fit.slope_ci,
        ratio: base.fit.gamma / gamma0,
        ratio_model_quartic: stark_model(n_bar, model, &p),
        fit_residual: base.fit.residual_rms,
        n_max_r: trunc.n_max_readout,
        n_max_f: trunc.n_max_filter,
        gamma_refined: refined,
        converged,
        poor_fit: base.fit.poor_fit,
        n_measured: base.n_r_window,
    })
}

/// Γ(n̄)/Γ(0) over `settings.n_bar_list`, evaluated point by point.
pub fn purcell_vs_photons(
    params: &DeviceParams,
    settings: &DrivenSettings,
) -> Result<Vec<DrivenPoint>> {
    settings.validate()?;
    let gamma0 = baseline_rate(params, settings.topology);
    settings
        .n_bar_list
        .iter()
        .map(|&n| purcell_point(params, n, gamma0, settings))
        .collect()
}

/// Initial slope of 1 − Γ(n̄)/Γ(0) per photon, from points with n̄ ≤ `n_limit`
/// (least squares through the origin).
pub fn initial_slope(points: &[DrivenPoint], n_limit: f64) -> Option<f64> {
    let (num, den) = points
        .iter()
        .filter(|p| p.n_bar > 0.0 && p.n_bar <= n_limit)
        .fold((0.0, 0.0), |(a, b), p| {
            (a + p.n_bar * (1.0 - p.ratio), b + p.n_bar * p.n_bar)
        });
    (den > 0.0).then(|| num / den)
}
