//! Dispersive readout without a filter: dressed frequencies, dispersive
//! shift and its photon-number dependence, photon-number dependent Purcell
//! and excitation rates, and the measurement error budget.
//!
//! Everything here uses Δ = ω_q − ω_r (qubit minus resonator), the opposite
//! sign to the filter modules. Qubit levels are g, e, f, h with bare energies
//! 0, ω_q, 2ω_q − δ_q and 3ω_q − 3δ_q; neighbouring levels are coupled to the
//! resonator by g, g_ef and g_fh.

mod budget;
mod oracle;

pub use budget::{
    cavity_response, drive_for_photons, erf, erfc, error_budget, separation_at_resonance,
    separation_error, separation_error_tail, CavityResponse, ErrorBudget, ReadoutDrive,
    ResponseTime,
};
pub use oracle::{dressed_oracle, DressedLevel, OracleSpectrum};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::DeviceParams;

/// Number of qubit levels kept in a calculation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QubitLevels {
    Two,
    Three,
    Four,
}

impl QubitLevels {
    pub fn count(self) -> usize {
        match self {
            QubitLevels::Two => 2,
            QubitLevels::Three => 3,
            QubitLevels::Four => 4,
        }
    }
}

/// Couplings and detuning in the form the perturbative expressions use.
#[derive(Debug, Clone, Copy)]
struct Ladder {
    delta: f64,
    anharm: f64,
    g: f64,
    g_ef: f64,
    g_fh: f64,
}

impl Ladder {
    fn new(params: &DeviceParams, levels: QubitLevels) -> Result<Self> {
        let d = params.derive();
        if !d.dispersive_valid {
            return Err(Error::InvalidInput(
                "qubit resonant with the readout resonator".into(),
            ));
        }
        let (g_ef, g_fh) = match levels {
            QubitLevels::Two => (0.0, 0.0),
            QubitLevels::Three => (d.g_ef, 0.0),
            QubitLevels::Four => (d.g_ef, d.g_fh),
        };
        let l = Ladder {
            delta: d.delta_qr_appendix,
            anharm: params.delta_q,
            g: params.g,
            g_ef,
            g_fh,
        };
        if levels != QubitLevels::Two && l.delta == l.anharm {
            return Err(Error::InvalidInput(
                "qubit e-f transition resonant with the readout resonator".into(),
            ));
        }
        Ok(l)
    }
}

/// Dispersive shift and its large-detuning approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiPair {
    /// g²/Δ − (g_ef²/2)/(Δ − δ_q).
    pub chi: f64,
    /// −g²δ_q/Δ².
    pub chi_approx: f64,
}

pub fn chi_full(params: &DeviceParams) -> Result<ChiPair> {
    let l = Ladder::new(params, QubitLevels::Three)?;
    let g2 = l.g * l.g;
    Ok(ChiPair {
        chi: g2 / l.delta - 0.5 * l.g_ef * l.g_ef / (l.delta - l.anharm),
        chi_approx: -g2 * l.anharm / (l.delta * l.delta),
    })
}

/// Lowest-order dressed energies and the derived frequencies at photon
/// number `n`; energies are relative to n·ω_r (and ω_q for the excited branch
/// is included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DressedSpectrum {
    pub n: f64,
    pub energy_g: f64,
    pub energy_e: f64,
    /// Resonator frequency shifts from ω_r for the qubit in g and e.
    pub omega_r_g: f64,
    pub omega_r_e: f64,
    pub chi: f64,
    pub lamb_shift: f64,
    pub stark_shift: f64,
    pub omega_q_eff: f64,
}

/// Second-order dressed ladder of the three-level qubit.
pub fn dressed_spectrum(params: &DeviceParams, n: f64) -> Result<DressedSpectrum> {
    let l = Ladder::new(params, QubitLevels::Three)?;
    let g2 = l.g * l.g;
    let ge2 = l.g_ef * l.g_ef;
    let energy_g = |m: f64| -m * g2 / l.delta;
    let energy_e =
        |m: f64| params.omega_q_bare + (m + 1.0) * g2 / l.delta - m * ge2 / (l.delta - l.anharm);
    let omega_r_g = energy_g(n + 1.0) - energy_g(n);
    let omega_r_e = energy_e(n + 1.0) - energy_e(n);
    let chi = 0.5 * (omega_r_e - omega_r_g);
    let lamb_shift = g2 / l.delta;
    Ok(DressedSpectrum {
        n,
        energy_g: energy_g(n),
        energy_e: energy_e(n),
        omega_r_g,
        omega_r_e,
        chi,
        lamb_shift,
        stark_shift: 2.0 * n * chi,
        omega_q_eff: energy_e(n) - energy_g(n),
    })
}

/// Photon-number dependent dispersive shift from the fourth-order resonator
/// frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiN {
    pub chi: f64,
    /// ω_r^g(n) − ω_r and ω_r^e(n) − ω_r.
    pub omega_r_g: f64,
    pub omega_r_e: f64,
    /// dχ/dn of the expression (it is linear in n).
    pub slope: f64,
    /// (9/8)(δ_q/Δ)χ(0)/n_crit, valid for δ_q ≪ |Δ|.
    pub slope_approx: f64,
    /// n below a tenth of both critical photon numbers.
    pub valid: bool,
}

fn resonator_shifts(l: &Ladder, n: f64) -> (f64, f64) {
    let (d, dq) = (l.delta, l.anharm);
    let g2 = l.g * l.g;
    let ge2 = l.g_ef * l.g_ef;
    let gh2 = l.g_fh * l.g_fh;
    let dm = d - dq;
    let wg = -g2 / d + g2 * g2 * (2.0 * n + 1.0) / d.powi(3)
        - 2.0 * g2 * ge2 * n / (d * d * (2.0 * d - dq));
    let mut we = g2 / d - ge2 / dm - g2 * g2 * (2.0 * n + 3.0) / d.powi(3)
        + ge2 * ge2 * (2.0 * n + 1.0) / dm.powi(3)
        - 2.0 * dq * g2 * ge2 * (n + 1.0) / (d * d * dm * dm);
    if gh2 != 0.0 {
        we -= 2.0 * ge2 * gh2 * n / (dm * dm * (2.0 * d - 3.0 * dq));
    }
    (wg, we)
}

pub fn chi_n(params: &DeviceParams, n: f64, levels: QubitLevels) -> Result<ChiN> {
    let l = Ladder::new(params, levels)?;
    let (wg, we) = resonator_shifts(&l, n);
    let (wg0, we0) = resonator_shifts(&l, 0.0);
    let (wg1, we1) = resonator_shifts(&l, 1.0);
    let chi0 = 0.5 * (we0 - wg0);
    let d = params.derive();
    let n_limit = 0.1 * d.n_crit.min(d.n_crit_tilde);
    Ok(ChiN {
        chi: 0.5 * (we - wg),
        omega_r_g: wg,
        omega_r_e: we,
        slope: 0.5 * (we1 - wg1) - chi0,
        slope_approx: 9.0 / 8.0 * l.anharm / l.delta * chi0 / d.n_crit,
        valid: n >= 0.0 && n <= n_limit,
    })
}

/// Photon-number dependent Purcell rate to fifth order in the couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaN {
    /// κ(g²/Δ²)(1 − 3g²/Δ² − 6ng²/Δ² + n·g_ef²(3Δ − 4δ_q)/(Δ(Δ − δ_q)²)).
    pub full: f64,
    /// The same with g_ef = √2·g.
    pub simplified: f64,
    /// Coefficient of n in the simplified bracket; negative means suppression.
    pub slope_coefficient: f64,
}

pub fn gamma_n_analytic(params: &DeviceParams, n: f64, kappa: f64) -> Result<GammaN> {
    let l = Ladder::new(params, QubitLevels::Three)?;
    let (d, dq) = (l.delta, l.anharm);
    let x = l.g * l.g / (d * d);
    let ge2 = l.g_ef * l.g_ef;
    let full = kappa
        * x
        * (1.0 - 3.0 * x - 6.0 * n * x + n * ge2 * (3.0 * d - 4.0 * dq) / (d * (d - dq).powi(2)));
    let slope_coefficient =
        2.0 * l.g * l.g * dq * (2.0 * d - 3.0 * dq) / (d * d * (d - dq).powi(2));
    Ok(GammaN {
        full,
        simplified: kappa * x * (1.0 - 3.0 * x + n * slope_coefficient),
        slope_coefficient,
    })
}

/// Drive-induced qubit excitation rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcitationRates {
    pub g_to_e: f64,
    pub e_to_f: f64,
    /// With g_ef = √2·g, g_fh = √3·g and n(n − 1) → n².
    pub g_to_e_simplified: f64,
    pub e_to_f_simplified: f64,
}

pub fn excitation_rates(params: &DeviceParams, n: f64, kappa: f64) -> Result<ExcitationRates> {
    let l = Ladder::new(params, QubitLevels::Four)?;
    let (d, dq) = (l.delta, l.anharm);
    let dm = d - dq;
    let g2 = l.g * l.g;
    let ge2 = l.g_ef * l.g_ef;
    let gh2 = l.g_fh * l.g_fh;
    let pairs = (n * (n - 1.0)).max(0.0);
    let g_to_e = kappa * g2 * pairs / (d * d) * (g2 / (d * d) - ge2 / (d * (2.0 * d - dq))).powi(2);
    let e_to_f = kappa * ge2 * pairs / dm.powi(4)
        * (ge2 / dm - g2 / (2.0 * d - dq) - gh2 / (2.0 * d - 3.0 * dq)).powi(2);
    let n_crit = d * d / (4.0 * g2);
    let base = kappa * g2 / (d * d) * (n / n_crit).powi(2) * dq * dq;
    Ok(ExcitationRates {
        g_to_e,
        e_to_f,
        g_to_e_simplified: base / (16.0 * (2.0 * d - dq).powi(2)),
        e_to_f_simplified: base * d.powi(8)
            / (2.0 * dm.powi(6) * (2.0 * d - dq).powi(2) * (2.0 * d - 3.0 * dq).powi(2)),
    })
}
