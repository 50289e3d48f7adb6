//! Device parameters, derived quantities and drive configuration.
//!
//! Configuration documents are flat TOML tables whose keys carry a unit tag,
//! e.g. `omega_q_ghz = 5.9` or `kappa_f_inv_ns = 0.71`. Nested tables are
//! ignored here; they hold subcommand options and are read by the front end.
//!
//! Two detuning sign conventions coexist. [`DerivedQuantities::delta_rq`] and
//! [`DerivedQuantities::delta_fq`] follow the resonator-minus-qubit
//! convention used by the filter models; [`DerivedQuantities::delta_qr_appendix`]
//! is qubit-minus-resonator and is what the dispersive formulas consume.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{ghz_to_rad_ns, mhz_to_rad_ns, rad_ns_to_ghz, rad_ns_to_mhz, us_to_ns};

/// Physical description of qubit, readout resonator and filter.
///
/// All angular frequencies are in rad/ns and times in ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_q_bare: f64,
    pub omega_r_bare: f64,
    pub omega_f: f64,
    /// Qubit to readout coupling, real and positive.
    pub g: f64,
    /// e-f transition coupling; `None` selects the transmon default.
    pub g_ef: Option<f64>,
    /// Coupling of the third excited level; `None` selects the transmon default.
    pub g_fh: Option<f64>,
    /// Readout to filter coupling (complex).
    pub coupling: Complex64,
    pub kappa_f: f64,
    /// Internal loss of the readout resonator.
    pub kappa_r_int: f64,
    pub kappa_f_out_fraction: f64,
    /// Anharmonicity, positive.
    pub delta_q: f64,
    /// Intrinsic qubit lifetime; infinite when not limited.
    pub t1_intrinsic: f64,
    pub eta: f64,
    /// Qubit-state dependent readout frequencies (ground, excited) when they
    /// are given explicitly rather than derived from the dispersive shift.
    pub dressed_readout: Option<(f64, f64)>,
}

/// Quantities computed from [`DeviceParams`] that several modules share.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedQuantities {
    /// ω_r − ω_q (bare).
    pub delta_rq: f64,
    /// ω_f − ω_q (bare).
    pub delta_fq: f64,
    /// ω_q − ω_r, the sign used by the dispersive formulas.
    pub delta_qr_appendix: f64,
    /// (Δ/2g)²; zero when the qubit is resonant with the readout.
    pub n_crit: f64,
    /// (Δ − δ_q)²/(4 g_ef²).
    pub n_crit_tilde: f64,
    pub q_factor_f: f64,
    pub g_ef: f64,
    pub g_fh: f64,
    /// False when Δ = 0, which disables the dispersive expressions.
    pub dispersive_valid: bool,
}

impl DeviceParams {
    pub fn derive(&self) -> DerivedQuantities {
        let delta_rq = self.omega_r_bare - self.omega_q_bare;
        let delta_qr = -delta_rq;
        let g_ef = self.g_ef();
        let n_crit = if delta_qr == 0.0 {
            0.0
        } else {
            (delta_qr / (2.0 * self.g)).powi(2)
        };
        let n_crit_tilde = if g_ef == 0.0 {
            f64::INFINITY
        } else {
            (delta_qr - self.delta_q).powi(2) / (4.0 * g_ef * g_ef)
        };
        DerivedQuantities {
            delta_rq,
            delta_fq: self.omega_f - self.omega_q_bare,
            delta_qr_appendix: delta_qr,
            n_crit,
            n_crit_tilde,
            q_factor_f: self.omega_f / self.kappa_f,
            g_ef,
            g_fh: self.g_fh(),
            dispersive_valid: delta_qr != 0.0,
        }
    }

    /// e-f coupling, defaulting to √2·g·(1 − δ_q/2ω_q).
    pub fn g_ef(&self) -> f64 {
        self.g_ef.unwrap_or_else(|| {
            2f64.sqrt() * self.g * (1.0 - self.delta_q / (2.0 * self.omega_q_bare))
        })
    }

    /// Third-level coupling, defaulting to √3·g·(1 − δ_q/ω_q).
    pub fn g_fh(&self) -> f64 {
        self.g_fh
            .unwrap_or_else(|| 3f64.sqrt() * self.g * (1.0 - self.delta_q / self.omega_q_bare))
    }

    pub fn coupling_abs2(&self) -> f64 {
        self.coupling.norm_sqr()
    }

    /// Three-level dispersive shift g²/Δ − (g_ef²/2)/(Δ − δ_q) with Δ = ω_q − ω_r.
    pub fn chi(&self) -> f64 {
        let d = self.omega_q_bare - self.omega_r_bare;
        let ge = self.g_ef();
        self.g * self.g / d - 0.5 * ge * ge / (d - self.delta_q)
    }

    /// Readout frequencies for the qubit in ground and excited state.
    ///
    /// Explicit values win; otherwise the pair is ω_r ∓ χ around the bare
    /// frequency.
    pub fn readout_frequencies(&self) -> (f64, f64) {
        match self.dressed_readout {
            Some(pair) => pair,
            None => {
                let chi = self.chi();
                (self.omega_r_bare - chi, self.omega_r_bare + chi)
            }
        }
    }

    /// Checks the physical invariants; called by every constructor path.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("omega_q", self.omega_q_bare),
            ("omega_r", self.omega_r_bare),
            ("omega_f", self.omega_f),
            ("g", self.g),
            ("kappa_f", self.kappa_f),
            ("kappa_r_int", self.kappa_r_int),
            ("kappa_f_out_fraction", self.kappa_f_out_fraction),
            ("delta_q", self.delta_q),
            ("eta", self.eta),
            ("G", self.coupling.re),
            ("G", self.coupling.im),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::non_physical(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("omega_q", self.omega_q_bare),
            ("omega_r", self.omega_r_bare),
            ("omega_f", self.omega_f),
        ] {
            if v <= 0.0 {
                return Err(Error::non_physical(name, "frequency must be positive"));
            }
        }
        if self.g <= 0.0 {
            return Err(Error::non_physical("g", "coupling must be positive"));
        }
        if self.kappa_f <= 0.0 {
            return Err(Error::non_physical(
                "kappa_f",
                "filter linewidth must be positive",
            ));
        }
        if self.kappa_r_int < 0.0 {
            return Err(Error::non_physical(
                "kappa_r_int",
                "loss rate must be non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&self.kappa_f_out_fraction) {
            return Err(Error::non_physical(
                "kappa_f_out_fraction",
                "must lie in [0, 1]",
            ));
        }
        if self.delta_q <= 0.0 {
            return Err(Error::non_physical(
                "delta_q",
                "anharmonicity must be positive",
            ));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::non_physical("eta", "efficiency must lie in (0, 1]"));
        }
        if self.t1_intrinsic.is_nan() || self.t1_intrinsic <= 0.0 {
            return Err(Error::non_physical("t1_int", "lifetime must be positive"));
        }
        for (name, v) in [("g_ef", self.g_ef), ("g_fh", self.g_fh)] {
            if let Some(x) = v {
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::non_physical(
                        name,
                        "coupling must be finite and non-negative",
                    ));
                }
            }
        }
        if let Some((wg, we)) = self.dressed_readout {
            if !(wg.is_finite() && we.is_finite() && wg > 0.0 && we > 0.0) {
                return Err(Error::non_physical(
                    "omega_r_g/omega_r_e",
                    "frequencies must be positive",
                ));
            }
        }
        Ok(())
    }

    /// Rotating-wave validity warnings: each listed scale should stay below
    /// 0.2·ω_r.
    pub fn rwa_warnings(&self) -> Vec<String> {
        let limit = 0.2 * self.omega_r_bare;
        let checks = [
            (
                "|omega_q - omega_r|",
                (self.omega_q_bare - self.omega_r_bare).abs(),
            ),
            (
                "|omega_f - omega_r|",
                (self.omega_f - self.omega_r_bare).abs(),
            ),
            ("g", self.g),
            ("|G|", self.coupling.norm()),
        ];
        checks
            .iter()
            .filter(|(_, v)| *v >= limit)
            .map(|(name, v)| {
                format!(
                    "{name} = {:.4} GHz is not small compared with omega_r; rotating-wave approximation questionable",
                    rad_ns_to_ghz(*v)
                )
            })
            .collect()
    }

    /// Serializes into the configuration document format.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: f64| {
            let _ = writeln!(s, "{k} = {}", fmt_float(v));
        };
        kv("omega_q_ghz", rad_ns_to_ghz(self.omega_q_bare));
        kv("omega_r_ghz", rad_ns_to_ghz(self.omega_r_bare));
        kv("omega_f_ghz", rad_ns_to_ghz(self.omega_f));
        kv("g_mhz", rad_ns_to_mhz(self.g));
        if let Some(x) = self.g_ef {
            kv("g_ef_mhz", rad_ns_to_mhz(x));
        }
        if let Some(x) = self.g_fh {
            kv("g_fh_mhz", rad_ns_to_mhz(x));
        }
        kv("G_mhz", rad_ns_to_mhz(self.coupling.norm()));
        if self.coupling.im != 0.0 || self.coupling.re < 0.0 {
            kv("G_phase_rad", self.coupling.arg());
        }
        kv("kappa_f_inv_ns", 1.0 / self.kappa_f);
        kv("delta_q_mhz", rad_ns_to_mhz(self.delta_q));
        if self.kappa_r_int > 0.0 {
            kv("kappa_r_int_inv_ns", 1.0 / self.kappa_r_int);
        }
        if self.kappa_f_out_fraction != 1.0 {
            kv("kappa_f_out_fraction", self.kappa_f_out_fraction);
        }
        kv("eta", self.eta);
        if self.t1_intrinsic.is_finite() {
            kv("t1_int_us", self.t1_intrinsic / 1000.0);
        }
        if let Some((wg, we)) = self.dressed_readout {
            kv("omega_r_g_ghz", rad_ns_to_ghz(wg));
            kv("omega_r_e_ghz", rad_ns_to_ghz(we));
        }
        s
    }
}

fn fmt_float(v: f64) -> String {
    // TOML requires a decimal point or exponent for floats.
    let s = format!("{v:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

// ---------------------------------------------------------------------------
// Configuration documents
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Quantity {
    /// Circular frequency given as ω/2π.
    Frequency,
    /// A time, or the inverse of a rate.
    Time,
    Dimensionless,
}

const FIELDS: &[(&str, Quantity)] = &[
    ("omega_q", Quantity::Frequency),
    ("omega_r", Quantity::Frequency),
    ("omega_f", Quantity::Frequency),
    ("omega_r_g", Quantity::Frequency),
    ("omega_r_e", Quantity::Frequency),
    ("g", Quantity::Frequency),
    ("g_ef", Quantity::Frequency),
    ("g_fh", Quantity::Frequency),
    ("G", Quantity::Frequency),
    ("G_phase_rad", Quantity::Dimensionless),
    ("kappa_r_target", Quantity::Time),
    ("q_factor_f", Quantity::Dimensionless),
    ("kappa_f_inv", Quantity::Time),
    ("delta_q", Quantity::Frequency),
    ("kappa_r_int_inv", Quantity::Time),
    ("kappa_f_out_fraction", Quantity::Dimensionless),
    ("eta", Quantity::Dimensionless),
    ("t1_int", Quantity::Time),
];

/// Splits a key into field name and converted value, validating its unit tag.
fn convert_key(key: &str, value: f64) -> Result<(&'static str, f64)> {
    // Longest field names first so that `omega_r_g` wins over `omega_r`.
    let mut candidates: Vec<&(&str, Quantity)> = FIELDS
        .iter()
        .filter(|(name, _)| key == *name || key.starts_with(&format!("{name}_")))
        .collect();
    candidates.sort_by_key(|(name, _)| std::cmp::Reverse(name.len()));
    let mut tag_error = None;
    for &&(name, q) in &candidates {
        let tag = key.strip_prefix(name).unwrap().trim_start_matches('_');
        let converted = match (q, tag) {
            (Quantity::Dimensionless, "") => Some(value),
            (Quantity::Frequency, "ghz") => Some(ghz_to_rad_ns(value)),
            (Quantity::Frequency, "mhz") => Some(mhz_to_rad_ns(value)),
            (Quantity::Frequency, "rad_ns") => Some(value),
            (Quantity::Time, "ns") => Some(value),
            (Quantity::Time, "us") => Some(us_to_ns(value)),
            _ => None,
        };
        match converted {
            Some(v) => return Ok((name, v)),
            None => tag_error = Some(Error::UnitTag(key.to_string())),
        }
    }
    Err(tag_error.unwrap_or_else(|| Error::UnknownKey(key.to_string())))
}

fn as_number(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Parse(format!("`{key}` must be a number"))),
    }
}

/// Parses a configuration document into validated device parameters.
pub fn load_device_config(text: &str) -> Result<DeviceParams> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    device_from_table(&table)
}

/// Reads the device keys of an already parsed document (sub-tables skipped).
pub fn device_from_table(table: &toml::Table) -> Result<DeviceParams> {
    let mut fields: std::collections::BTreeMap<&'static str, (String, f64)> = Default::default();
    for (key, value) in table {
        if value.is_table() {
            continue;
        }
        let x = as_number(key, value)?;
        let (name, v) = convert_key(key, x)?;
        if let Some((prev, _)) = fields.get(name) {
            return Err(Error::Conflict(format!(
                "`{prev}` and `{key}` set the same quantity"
            )));
        }
        fields.insert(name, (key.clone(), v));
    }
    let get = |name: &str| fields.get(name).map(|(_, v)| *v);
    let require = |name: &str| get(name).ok_or_else(|| Error::MissingField(name.to_string()));

    let omega_q = require("omega_q")?;
    let omega_r = require("omega_r")?;
    let omega_f = require("omega_f")?;
    let g = require("g")?;
    let delta_q = require("delta_q")?;

    let kappa_f = match (get("q_factor_f"), get("kappa_f_inv")) {
        (Some(_), Some(_)) => {
            return Err(Error::Conflict(
                "give either `q_factor_f` or `kappa_f_inv_*`, not both".into(),
            ))
        }
        (Some(q), None) => {
            if q <= 0.0 {
                return Err(Error::non_physical("q_factor_f", "must be positive"));
            }
            omega_f / q
        }
        (None, Some(t)) => {
            if t <= 0.0 {
                return Err(Error::non_physical("kappa_f_inv", "must be positive"));
            }
            1.0 / t
        }
        (None, None) => return Err(Error::MissingField("q_factor_f (or kappa_f_inv_ns)".into())),
    };

    let kappa_r_int = match get("kappa_r_int_inv") {
        None => 0.0,
        Some(t) if t > 0.0 => 1.0 / t,
        Some(_) => {
            return Err(Error::non_physical(
                "kappa_r_int_inv",
                "must be positive (omit for no loss)",
            ))
        }
    };
    let t1_intrinsic = match get("t1_int") {
        None => f64::INFINITY,
        Some(t) if t > 0.0 => t,
        Some(_) => return Err(Error::non_physical("t1_int", "must be positive")),
    };
    let dressed_readout = match (get("omega_r_g"), get("omega_r_e")) {
        (Some(wg), Some(we)) => Some((wg, we)),
        (None, None) => None,
        _ => {
            return Err(Error::MissingField(
                "omega_r_g and omega_r_e must be given together".into(),
            ))
        }
    };

    let mut params = DeviceParams {
        omega_q_bare: omega_q,
        omega_r_bare: omega_r,
        omega_f,
        g,
        g_ef: get("g_ef"),
        g_fh: get("g_fh"),
        coupling: Complex64::new(0.0, 0.0),
        kappa_f,
        kappa_r_int,
        kappa_f_out_fraction: get("kappa_f_out_fraction").unwrap_or(1.0),
        delta_q,
        t1_intrinsic,
        eta: get("eta").unwrap_or(1.0),
        dressed_readout,
    };

    let phase = get("G_phase_rad").unwrap_or(0.0);
    params.coupling = match (get("G"), get("kappa_r_target")) {
        (Some(_), Some(_)) => {
            return Err(Error::Conflict(
                "give either `G_*` or `kappa_r_target_*`, not both".into(),
            ))
        }
        (Some(mag), None) => {
            if mag < 0.0 {
                return Err(Error::non_physical("G", "magnitude must be non-negative"));
            }
            Complex64::from_polar(mag, phase)
        }
        (None, Some(t)) => {
            if t <= 0.0 {
                return Err(Error::non_physical("kappa_r_target", "must be positive"));
            }
            params.validate()?;
            let mag = crate::semiclassical::coupling_from_kappa_r(&params, 1.0 / t)?.norm();
            Complex64::from_polar(mag, phase)
        }
        (None, None) => return Err(Error::MissingField("G_mhz (or kappa_r_target_ns)".into())),
    };
    params.validate()?;
    Ok(params)
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Named built-in parameter sets.
pub const PRESETS: &[(&str, &str)] = &[
    ("paper-sec3b", include_str!("../presets/paper-sec3b.toml")),
    ("paper-fig3a", include_str!("../presets/paper-fig3a.toml")),
    ("paper-fig3b", include_str!("../presets/paper-fig3b.toml")),
    ("paper-fig4", include_str!("../presets/paper-fig4.toml")),
    (
        "paper-appendix",
        include_str!("../presets/paper-appendix.toml"),
    ),
];

/// Configuration text of a named preset.
pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

pub fn preset(name: &str) -> Result<DeviceParams> {
    load_device_config(preset_text(name)?)
}

// ---------------------------------------------------------------------------
// Drives
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrivePort {
    Readout,
    Filter,
    None,
}

/// Time dependence multiplying the drive amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Envelope {
    /// Switched on at t = 0 and held constant.
    Step,
    /// Piecewise-linear factor through `(t_ns, factor)` points, held constant
    /// outside the table.
    Table(Vec<(f64, f64)>),
}

impl Envelope {
    pub fn factor(&self, t: f64) -> f64 {
        match self {
            Envelope::Step => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Envelope::Table(points) => {
                let (first, last) = (points[0], points[points.len() - 1]);
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let i = points.partition_point(|p| p.0 <= t);
                let (a, b) = (points[i - 1], points[i]);
                a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
            }
        }
    }

    /// Times at which the envelope has kinks; integrators stop there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Envelope::Step => vec![0.0],
            Envelope::Table(p) => p.iter().map(|x| x.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub port: DrivePort,
    /// Drive frequency (rad/ns).
    pub omega_d: f64,
    /// ε_r or ε_f, in rad/ns, normalized so that the field amplitudes square
    /// to photon numbers.
    pub amplitude: Complex64,
    pub envelope: Envelope,
}

impl DriveConfig {
    pub fn new(
        port: DrivePort,
        omega_d: f64,
        amplitude: Complex64,
        envelope: Envelope,
    ) -> Result<Self> {
        let is_zero = amplitude == Complex64::new(0.0, 0.0);
        if is_zero != (port == DrivePort::None) {
            return Err(Error::InvalidInput(
                "drive amplitude must be zero exactly when the port is `none`".into(),
            ));
        }
        if !omega_d.is_finite() || !amplitude.re.is_finite() || !amplitude.im.is_finite() {
            return Err(Error::InvalidInput(
                "drive frequency and amplitude must be finite".into(),
            ));
        }
        if let Envelope::Table(p) = &envelope {
            if p.is_empty() || p.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::InvalidInput(
                    "envelope table must be non-empty with increasing times".into(),
                ));
            }
        }
        Ok(Self {
            port,
            omega_d,
            amplitude,
            envelope,
        })
    }

    pub fn step(port: DrivePort, omega_d: f64, amplitude: Complex64) -> Result<Self> {
        Self::new(port, omega_d, amplitude, Envelope::Step)
    }

    /// Undriven configuration; the frame frequency is kept for detunings.
    pub fn none(omega_d: f64) -> Self {
        Self {
            port: DrivePort::None,
            omega_d,
            amplitude: Complex64::new(0.0, 0.0),
            envelope: Envelope::Step,
        }
    }

    pub fn readout_amplitude(&self, t: f64) -> Complex64 {
        match self.port {
            DrivePort::Readout => self.amplitude * self.envelope.factor(t),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn filter_amplitude(&self, t: f64) -> Complex64 {
        match self.port {
            DrivePort::Filter => self.amplitude * self.envelope.factor(t),
            _ => Complex64::new(0.0, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SEC3B: &str = r#"
        omega_q_ghz = 5.9
        omega_r_ghz = 6.8
        omega_f_ghz = 6.75
        q_factor_f = 30
        g_mhz = 90
        kappa_r_target_ns = 30
        delta_q_mhz = 180
    "#;

    #[test]
    fn filter_linewidth_from_quality_factor() {
        let p = load_device_config(SEC3B).unwrap();
        // ω_f/Q_f = 2π·225 MHz.
        assert!((p.kappa_f - mhz_to_rad_ns(225.0)).abs() < 1e-12);
        assert!((1.0 / p.kappa_f - 0.7074).abs() < 1e-3);
        assert!((1.0 / p.kappa_f - 0.71).abs() / 0.71 < 0.01);
    }

    #[test]
    fn missing_coupling_is_reported() {
        let text = SEC3B.replace("g_mhz = 90", "");
        match load_device_config(&text) {
            Err(Error::MissingField(f)) => assert_eq!(f, "g"),
            other => panic!("expected missing field, got {other:?}"),
        }
    }

    #[test]
    fn unknown_unit_tag_is_rejected() {
        let text = SEC3B.replace("g_mhz = 90", "g_thz = 0.00009");
        assert!(matches!(load_device_config(&text), Err(Error::UnitTag(k)) if k == "g_thz"));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{SEC3B}\nbogus = 1.0\n");
        assert!(matches!(
            load_device_config(&text),
            Err(Error::UnknownKey(_))
        ));
    }

    #[test]
    fn negative_rate_is_non_physical() {
        let text = format!("{SEC3B}\nkappa_r_int_inv_ns = -5.0\n");
        assert!(matches!(
            load_device_config(&text),
            Err(Error::NonPhysical { .. })
        ));
    }

    #[test]
    fn coupling_and_target_are_exclusive() {
        let text = format!("{SEC3B}\nG_mhz = 18.9\n");
        assert!(matches!(load_device_config(&text), Err(Error::Conflict(_))));
        let text = SEC3B.replace("kappa_r_target_ns = 30", "");
        assert!(matches!(
            load_device_config(&text),
            Err(Error::MissingField(_))
        ));
    }

    #[test]
    fn duplicate_quantity_in_two_units_conflicts() {
        let text = format!("{SEC3B}\ng_ghz = 0.09\n");
        assert!(matches!(load_device_config(&text), Err(Error::Conflict(_))));
    }

    #[test]
    fn nested_tables_are_ignored() {
        let text = format!("{SEC3B}\n[driven]\nn_bar_list = [0.5, 1.0]\n");
        assert!(load_device_config(&text).is_ok());
    }

    #[test]
    fn critical_photon_number() {
        let p = DeviceParams {
            omega_q_bare: ghz_to_rad_ns(6.0),
            omega_r_bare: ghz_to_rad_ns(6.8),
            g: mhz_to_rad_ns(100.0),
            ..preset("paper-fig4").unwrap()
        };
        let d = p.derive();
        // (800/200)² = 16.
        assert!((d.n_crit - 16.0).abs() < 1e-10);
        assert_eq!(d.delta_rq, -d.delta_qr_appendix);
    }

    #[test]
    fn resonant_qubit_disables_dispersive_formulas() {
        let mut p = preset("paper-sec3b").unwrap();
        p.omega_q_bare = p.omega_r_bare;
        let d = p.derive();
        assert_eq!(d.n_crit, 0.0);
        assert!(!d.dispersive_valid);
    }

    #[test]
    fn corrected_ef_coupling_default() {
        let p = preset("paper-sec3b").unwrap();
        let expected = 2f64.sqrt() * 90.0 * (1.0 - 180.0 / 11800.0);
        assert!((rad_ns_to_mhz(p.g_ef()) - expected).abs() < 1e-9);
        assert!((rad_ns_to_mhz(p.g_ef()) - 125.3).abs() < 0.05);
        let expected_fh = 3f64.sqrt() * 90.0 * (1.0 - 180.0 / 5900.0);
        assert!((rad_ns_to_mhz(p.g_fh()) - expected_fh).abs() < 1e-9);
    }

    #[test]
    fn presets_all_load() {
        for (name, _) in PRESETS {
            let p = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(p.rwa_warnings().is_empty(), "{name}");
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn rwa_warning_for_large_detuning() {
        let mut p = preset("paper-sec3b").unwrap();
        p.omega_q_bare = ghz_to_rad_ns(4.0);
        let w = p.rwa_warnings();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("omega_q"));
    }

    #[test]
    fn drive_amplitude_zero_iff_port_none() {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        assert!(DriveConfig::step(DrivePort::None, 1.0, z).is_ok());
        assert!(DriveConfig::step(DrivePort::None, 1.0, one).is_err());
        assert!(DriveConfig::step(DrivePort::Readout, 1.0, z).is_err());
        assert!(DriveConfig::step(DrivePort::Filter, 1.0, one).is_ok());
    }

    #[test]
    fn envelope_table_interpolates() {
        let e = Envelope::Table(vec![(0.0, 0.0), (10.0, 1.0)]);
        assert_eq!(e.factor(-1.0), 0.0);
        assert!((e.factor(2.5) - 0.25).abs() < 1e-15);
        assert_eq!(e.factor(20.0), 1.0);
        assert_eq!(Envelope::Step.factor(-1e-9), 0.0);
        assert_eq!(Envelope::Step.factor(0.0), 1.0);
    }

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    fn arb_params() -> impl Strategy<Value = DeviceParams> {
        (
            (4.0f64..8.0, 4.0f64..8.0, 4.0f64..8.0),
            (1.0f64..200.0, 0.0f64..60.0, -3.0f64..3.0),
            (5.0f64..200.0, 50.0f64..400.0, 0.5f64..1.0),
            (
                prop::option::of(10.0f64..300.0),
                prop::option::of(1.0f64..1e4),
                0.0f64..1.0,
            ),
        )
            .prop_map(
                |((wq, wr, wf), (g, gg, ph), (q, dq, eta), (t1, rd, frac))| DeviceParams {
                    omega_q_bare: ghz_to_rad_ns(wq),
                    omega_r_bare: ghz_to_rad_ns(wr),
                    omega_f: ghz_to_rad_ns(wf),
                    g: mhz_to_rad_ns(g),
                    g_ef: None,
                    g_fh: Some(mhz_to_rad_ns(g * 1.7)),
                    coupling: Complex64::from_polar(mhz_to_rad_ns(gg), ph),
                    kappa_f: ghz_to_rad_ns(wf) / q,
                    kappa_r_int: rd.map(|t| 1.0 / t).unwrap_or(0.0),
                    kappa_f_out_fraction: frac,
                    delta_q: mhz_to_rad_ns(dq),
                    t1_intrinsic: t1.map(|x| x * 1000.0).unwrap_or(f64::INFINITY),
                    eta,
                    dressed_readout: None,
                },
            )
    }

    proptest! {
        #[test]
        fn serialization_round_trip(p in arb_params()) {
            let back = load_device_config(&p.to_config_string()).unwrap();
            prop_assert!(rel(back.omega_q_bare, p.omega_q_bare) < 1e-12);
            prop_assert!(rel(back.omega_r_bare, p.omega_r_bare) < 1e-12);
            prop_assert!(rel(back.omega_f, p.omega_f) < 1e-12);
            prop_assert!(rel(back.g, p.g) < 1e-12);
            prop_assert_eq!(back.g_ef.is_some(), p.g_ef.is_some());
            prop_assert!(rel(back.g_fh.unwrap(), p.g_fh.unwrap()) < 1e-12);
            prop_assert!((back.coupling - p.coupling).norm() <= 1e-12 * p.coupling.norm().max(1e-300));
            prop_assert!(rel(back.kappa_f, p.kappa_f) < 1e-12);
            prop_assert!(rel(back.kappa_r_int, p.kappa_r_int) < 1e-12);
            prop_assert!(rel(back.kappa_f_out_fraction, p.kappa_f_out_fraction) < 1e-12);
            prop_assert!(rel(back.delta_q, p.delta_q) < 1e-12);
            prop_assert!(rel(back.t1_intrinsic, p.t1_intrinsic) < 1e-12);
            prop_assert!(rel(back.eta, p.eta) < 1e-12);
        }

        #[test]
        fn detuning_conventions_are_opposite(p in arb_params()) {
            let d = p.derive();
            prop_assert_eq!(d.delta_rq, -d.delta_qr_appendix);
            if d.delta_qr_appendix != 0.0 {
                prop_assert!(d.n_crit > 0.0);
            }
        }
    }
}
