//! Subcommand implementations. Each writes its data files and a manifest
//! into the output directory.

use std::path::PathBuf;

use purcellkit::dispersive::{
    chi_full, chi_n, dressed_oracle, error_budget, excitation_rates, gamma_n_analytic, QubitLevels,
};
use purcellkit::driven::{baseline_rate, purcell_point, DrivenPoint, DrivenSettings, Topology};
use purcellkit::ode::OdeOptions;
use purcellkit::semiclassical::{
    calibrate_drive, effective_resonator, find_symmetric_drive, integrate_fields, power_ratio,
    transfer_function, QubitState, SymmetryCriterion,
};
use purcellkit::units::{mhz_to_rad_ns, FrequencyUnit};
use purcellkit::{singlex, DeviceParams, DrivePort, Error};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{self, Resolved};
use crate::output::{echo_params, fmt_f64, freq_column, num, Emitter, Table};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) => 3,
            CliError::Io(..) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub struct Context {
    pub resolved: Resolved,
    pub units: FrequencyUnit,
    pub out: PathBuf,
    pub pool: rayon::ThreadPool,
}

impl Context {
    /// Writes the run's files and manifest.
    fn finish(&self, em: Emitter, params: &DeviceParams, options: Value) -> CliResult<()> {
        let written = em
            .finish(
                &self.resolved.source,
                self.units,
                echo_params(params, self.units),
                options,
            )
            .map_err(|e| CliError::Io(self.out.clone(), e))?;
        for p in written {
            eprintln!("wrote {}", p.display());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// rates
// ---------------------------------------------------------------------------

pub const RATE_KEYS: [&str; 9] = [
    "gamma_exact",
    "gamma_quadratic",
    "gamma_iter2",
    "gamma_qs_full",
    "gamma_qs_simple",
    "gamma_dm",
    "kappa_q",
    "kappa_r",
    "F",
];

pub fn rate_values(p: &DeviceParams) -> purcellkit::Result<([f64; 9], Map<String, Value>)> {
    let s = singlex::solve(p)?;
    let r = effective_resonator(p, p.omega_r_bare)?;
    let values = [
        s.gamma_exact,
        s.gamma_quadratic,
        s.gamma_iterative,
        s.gamma_quasisteady_full,
        s.gamma_quasisteady_simple,
        s.gamma_density_matrix,
        r.kappa_q,
        r.kappa_r,
        r.suppression,
    ];
    let mut flags = Map::new();
    flags.insert("branch_ambiguous".into(), json!(s.ambiguous));
    flags.insert("simple_form_valid".into(), json!(s.simple_form_valid));
    flags.insert(
        "gamma_iter2_other_rule".into(),
        num(s.gamma_iterative_alternative),
    );
    flags.insert("delta_omega_r".into(), num(r.delta_omega_r));
    Ok((values, flags))
}

pub fn rates(ctx: &Context) -> CliResult<()> {
    let p = ctx.resolved.params()?;
    let (values, extra) = rate_values(&p)?;
    let mut doc = Map::new();
    for (k, v) in RATE_KEYS.iter().zip(values) {
        doc.insert((*k).into(), num(v));
    }
    for (k, v) in extra {
        match k.as_str() {
            "delta_omega_r" => {
                let w = v.as_f64().unwrap_or(f64::NAN);
                doc.insert(freq_column(&k, ctx.units), num(ctx.units.from_rad_ns(w)));
            }
            _ => {
                doc.insert(k, v);
            }
        }
    }
    let doc = Value::Object(doc);
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).expect("JSON values serialize")
    );
    let mut em = Emitter::new(&ctx.out, "rates");
    em.add_json("rates.json", &doc);
    ctx.finish(em, &p, json!({}))
}

// ---------------------------------------------------------------------------
// transient
// ---------------------------------------------------------------------------

fn time_grid(t_end: f64, dt: f64) -> purcellkit::Result<Vec<f64>> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidInput("t_end and dt must be positive".into()));
    }
    let n = (t_end / dt).round() as usize;
    Ok((0..=n).map(|i| i as f64 * dt).collect())
}

pub fn transient(ctx: &Context, port: DrivePort) -> CliResult<()> {
    let p = ctx.resolved.params()?;
    let empty = toml::Table::new();
    let t = ctx.resolved.section("transient")?.unwrap_or(&empty);
    config::check_keys(
        t,
        "transient",
        &[
            "criterion",
            "n_r_target",
            "t_end_ns",
            "t_end_us",
            "dt_ns",
            "dt_us",
            "omega_d_ghz",
            "omega_d_mhz",
            "omega_d_rad_ns",
        ],
    )?;
    let criterion = t
        .get("criterion")
        .map(|v| v.as_str().unwrap_or(""))
        .unwrap_or("symmetric-readout");
    let n_r_target = t
        .get("n_r_target")
        .map(|v| config::number(v, "n_r_target"))
        .transpose()?
        .unwrap_or(50.0);
    let t_end = config::time(t, "transient", "t_end")?.unwrap_or(400.0);
    let dt = config::time(t, "transient", "dt")?.unwrap_or(0.5);
    let omega_d = match config::frequency(t, "transient", "omega_d")? {
        Some(w) => w,
        None => {
            let c = match criterion {
                "symmetric-readout" => SymmetryCriterion::SymmetricReadoutPhotons,
                "symmetric-filter" => SymmetryCriterion::SymmetricFilterPhotons,
                other => return Err(Error::InvalidInput(format!(
                    "unknown criterion `{other}` (expected symmetric-readout or symmetric-filter)"
                ))
                .into()),
            };
            find_symmetric_drive(&p, DrivePort::Filter, c)?
        }
    };
    let drive = calibrate_drive(&p, port, omega_d, QubitState::Excited, n_r_target)?;
    let grid = time_grid(t_end, dt)?;

    let mut em = Emitter::new(&ctx.out, "transient");
    for state in [QubitState::Ground, QubitState::Excited] {
        let tr = integrate_fields(&p, &drive, state, &grid, &OdeOptions::default())?;
        let mut table = Table::new([
            "t_ns", "re_alpha", "im_alpha", "re_beta", "im_beta", "n_r", "n_f", "re_gamma",
            "im_gamma",
        ]);
        for i in 0..tr.times.len() {
            let (a, b, g) = (tr.alpha[i], tr.beta[i], tr.gamma_tl[i]);
            table.push_numbers(&[
                tr.times[i],
                a.re,
                a.im,
                b.re,
                b.im,
                tr.n_r[i],
                tr.n_f[i],
                g.re,
                g.im,
            ]);
        }
        em.add(
            format!("transient_{}.csv", state.label()),
            table
                .to_csv()
                .map_err(|e| CliError::Io(ctx.out.clone(), e))?,
        );
    }
    let amp = drive.amplitude;
    let u = ctx.units;
    let options = json!({
        "port": port_name(port),
        "criterion": criterion,
        "n_r_target": n_r_target,
        "t_end_ns": t_end,
        "dt_ns": dt,
        freq_column("omega_d", u): u.from_rad_ns(omega_d),
        freq_column("re_epsilon", u): u.from_rad_ns(amp.re),
        freq_column("im_epsilon", u): u.from_rad_ns(amp.im),
    });
    ctx.finish(em, &p, options)
}

fn port_name(port: DrivePort) -> &'static str {
    match port {
        DrivePort::Readout => "readout",
        DrivePort::Filter => "filter",
        DrivePort::None => "none",
    }
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

pub fn spectrum(ctx: &Context) -> CliResult<()> {
    let p = ctx.resolved.params()?;
    let empty = toml::Table::new();
    let t = ctx.resolved.section("spectrum")?.unwrap_or(&empty);
    config::check_keys(
        t,
        "spectrum",
        &[
            "start_ghz",
            "start_mhz",
            "start_rad_ns",
            "stop_ghz",
            "stop_mhz",
            "stop_rad_ns",
            "points",
        ],
    )?;
    let (wg, we) = p.readout_frequencies();
    let mid = 0.5 * (wg + we);
    let start = config::frequency(t, "spectrum", "start")?.unwrap_or(mid - 2.0 * p.kappa_f);
    let stop = config::frequency(t, "spectrum", "stop")?.unwrap_or(mid + 2.0 * p.kappa_f);
    let points = match t.get("points") {
        None => 801,
        Some(v) => v.as_integer().filter(|n| *n >= 2).ok_or_else(|| {
            Error::InvalidInput("`spectrum.points` must be an integer of at least 2".into())
        })? as usize,
    };
    if !(stop > start) {
        return Err(Error::InvalidInput("spectrum needs start < stop".into()).into());
    }
    let u = ctx.units;
    let mut table = Table::new([
        freq_column("f", u),
        "abs_t_g".into(),
        "arg_t_g".into(),
        "abs_t_e".into(),
        "arg_t_e".into(),
        "power_ratio_g".into(),
        "power_ratio_e".into(),
    ]);
    for i in 0..points {
        let w = start + (stop - start) * i as f64 / (points - 1) as f64;
        let tg = transfer_function(&p, w, QubitState::Ground);
        let te = transfer_function(&p, w, QubitState::Excited);
        table.push_numbers(&[
            u.from_rad_ns(w),
            tg.norm(),
            tg.arg(),
            te.norm(),
            te.arg(),
            power_ratio(&p, w, QubitState::Ground).ratio,
            power_ratio(&p, w, QubitState::Excited).ratio,
        ]);
    }
    let mut em = Emitter::new(&ctx.out, "spectrum");
    em.add(
        "spectrum.csv",
        table
            .to_csv()
            .map_err(|e| CliError::Io(ctx.out.clone(), e))?,
    );
    let options = json!({
        freq_column("start", u): u.from_rad_ns(start),
        freq_column("stop", u): u.from_rad_ns(stop),
        "points": points,
    });
    ctx.finish(em, &p, options)
}

// ---------------------------------------------------------------------------
// driven-sweep
// ---------------------------------------------------------------------------

/// Readout decaying directly into the line instead of through the filter.
#[derive(Debug, Clone, Copy)]
pub struct Unfiltered {
    pub kappa_inv_ns: f64,
    pub g_mhz: Option<f64>,
}

pub fn driven_sweep(ctx: &Context, unfiltered: Option<Unfiltered>) -> CliResult<()> {
    let p = ctx.resolved.params()?;
    let mut settings = DrivenSettings::from_document(&ctx.resolved.table)?;
    if let Some(u) = unfiltered {
        if !(u.kappa_inv_ns > 0.0) {
            return Err(Error::InvalidInput("--kappa-inv-ns must be positive".into()).into());
        }
        settings.topology = Topology::Unfiltered {
            kappa: 1.0 / u.kappa_inv_ns,
            g: u.g_mhz.map(mhz_to_rad_ns),
        };
    }
    settings.validate()?;
    let gamma0 = baseline_rate(&p, settings.topology);
    let results: Vec<purcellkit::Result<DrivenPoint>> = ctx.pool.install(|| {
        settings
            .n_bar_list
            .par_iter()
            .map(|&n| purcell_point(&p, n, gamma0, &settings))
            .collect()
    });
    if !results.is_empty() && results.iter().all(|r| r.is_err()) {
        let first = results
            .into_iter()
            .find_map(|r| r.err())
            .expect("all rows failed");
        return Err(first.into());
    }

    let u = ctx.units;
    let mut table = Table::new([
        "n_bar".to_string(),
        "n_bar_over_4ncrit".into(),
        "gamma_per_ns".into(),
        "ratio".into(),
        "ratio_model_quartic".into(),
        "fit_residual".into(),
        "n_max_r".into(),
        "n_max_f".into(),
        freq_column("omega_d", u),
        "gamma_ci_lo".into(),
        "gamma_ci_hi".into(),
        "converged".into(),
        "error".into(),
    ]);
    for (n, r) in settings.n_bar_list.iter().zip(&results) {
        match r {
            Ok(pt) => {
                let mut row: Vec<String> = [
                    pt.n_bar,
                    pt.n_bar_over_4ncrit,
                    pt.gamma,
                    pt.ratio,
                    pt.ratio_model_quartic,
                    pt.fit_residual,
                ]
                .iter()
                .map(|x| fmt_f64(*x))
                .collect();
                row.push(pt.n_max_r.to_string());
                row.push(pt.n_max_f.to_string());
                row.push(fmt_f64(u.from_rad_ns(pt.omega_d)));
                row.push(fmt_f64(pt.gamma_ci.0));
                row.push(fmt_f64(pt.gamma_ci.1));
                row.push(pt.converged.to_string());
                row.push(String::new());
                table.rows.push(row);
            }
            Err(e) => {
                let mut row = vec![fmt_f64(*n)];
                row.extend(std::iter::repeat(String::new()).take(11));
                row.push(e.to_string());
                table.rows.push(row);
            }
        }
    }
    let mut em = Emitter::new(&ctx.out, "driven-sweep");
    em.add(
        "driven_sweep.csv",
        table
            .to_csv()
            .map_err(|e| CliError::Io(ctx.out.clone(), e))?,
    );
    let topology = match settings.topology {
        Topology::Filtered => json!("filtered"),
        Topology::Unfiltered { kappa, g } => json!({
            "kappa_per_ns": kappa,
            freq_column("g", u): g.map(|g| u.from_rad_ns(g)),
        }),
    };
    let options = json!({
        "n_bar_list": settings.n_bar_list,
        "fit_window_ns": [settings.fit_window.0, settings.fit_window.1],
        "trunc_margin": settings.trunc_margin,
        "tolerance": settings.tolerance,
        "sample_dt_ns": settings.sample_dt,
        "residual_bound": settings.residual_bound,
        "topology": topology,
        "gamma0_per_ns": gamma0,
    });
    ctx.finish(em, &p, options)
}

// ---------------------------------------------------------------------------
// dispersive
// ---------------------------------------------------------------------------

fn kappa_from_section(t: &toml::Table, section: &str) -> purcellkit::Result<Option<f64>> {
    match config::time(t, section, "kappa_inv")? {
        Some(x) if x > 0.0 => Ok(Some(1.0 / x)),
        Some(_) => Err(Error::InvalidInput(format!(
            "`{section}.kappa_inv` must be positive"
        ))),
        None => Ok(None),
    }
}

pub fn dispersive(ctx: &Context) -> CliResult<()> {
    let p = ctx.resolved.params()?;
    let empty = toml::Table::new();
    let t = ctx.resolved.section("dispersive")?.unwrap_or(&empty);
    config::check_keys(t, "dispersive", &["kappa_inv_ns", "kappa_inv_us", "n_max"])?;
    let d = p.derive();
    let kappa = match kappa_from_section(t, "dispersive")? {
        Some(k) => k,
        None => effective_resonator(&p, p.omega_r_bare)?.kappa_r + p.kappa_r_int,
    };
    let n_max = match t.get("n_max") {
        None => (d.n_crit / 10.0).floor() as usize,
        Some(v) => v.as_integer().filter(|n| *n >= 0).ok_or_else(|| {
            Error::InvalidInput("`dispersive.n_max` must be a non-negative integer".into())
        })? as usize,
    };
    let o3 = dressed_oracle(&p, n_max, QubitLevels::Three)?;
    let o4 = dressed_oracle(&p, n_max, QubitLevels::Four)?;
    let u = ctx.units;
    let mut table = Table::new([
        "n".to_string(),
        freq_column("shift_r_g", u),
        freq_column("shift_r_e", u),
        freq_column("chi_oracle", u),
        freq_column("chi_model", u),
        "gamma_oracle_per_ns".into(),
        "gamma_model_per_ns".into(),
        "g_to_e_oracle_per_ns".into(),
        "g_to_e_model_per_ns".into(),
        "e_to_f_oracle_per_ns".into(),
        "e_to_f_model_per_ns".into(),
    ]);
    let cell = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for row in o3.table(kappa) {
        let n = row[0] as usize;
        let model = chi_n(&p, row[0], QubitLevels::Three)?;
        let gamma = gamma_n_analytic(&p, row[0], kappa)?;
        let (exc_oracle, exc_model) = if n >= 2 {
            let r = excitation_rates(&p, row[0], kappa)?;
            (
                (o4.gamma_g_to_e(n, kappa), o4.gamma_e_to_f(n, kappa)),
                (Some(r.g_to_e), Some(r.e_to_f)),
            )
        } else {
            ((None, None), (None, None))
        };
        table.rows.push(vec![
            n.to_string(),
            fmt_f64(u.from_rad_ns(row[1])),
            fmt_f64(u.from_rad_ns(row[2])),
            fmt_f64(u.from_rad_ns(row[3])),
            fmt_f64(u.from_rad_ns(model.chi)),
            fmt_f64(row[4]),
            fmt_f64(gamma.full),
            cell(exc_oracle.0),
            cell(exc_model.0),
            cell(exc_oracle.1),
            cell(exc_model.1),
        ]);
    }
    let chi = chi_full(&p)?;
    let mut em = Emitter::new(&ctx.out, "dispersive");
    em.add(
        "dispersive.csv",
        table
            .to_csv()
            .map_err(|e| CliError::Io(ctx.out.clone(), e))?,
    );
    em.add_json(
        "dispersive.json",
        &json!({
            freq_column("chi", u): u.from_rad_ns(chi.chi),
            freq_column("chi_large_detuning", u): u.from_rad_ns(chi.chi_approx),
            "n_crit": d.n_crit,
            "n_crit_tilde": d.n_crit_tilde,
            "kappa_per_ns": kappa,
        }),
    );
    ctx.finish(em, &p, json!({ "kappa_per_ns": kappa, "n_max": n_max }))
}

// ---------------------------------------------------------------------------
// error-budget
// ---------------------------------------------------------------------------

pub fn budget(ctx: &Context) -> CliResult<()> {
    let p = ctx.resolved.params()?;
    let empty = toml::Table::new();
    let t = ctx.resolved.section("budget")?.unwrap_or(&empty);
    config::check_keys(
        t,
        "budget",
        &["t_m_ns", "t_m_us", "n_bar", "kappa_inv_ns", "kappa_inv_us"],
    )?;
    let t_m = config::time(t, "budget", "t_m")?
        .ok_or_else(|| Error::MissingField("budget.t_m_ns".into()))?;
    let n_bar = t
        .get("n_bar")
        .map(|v| config::number(v, "budget.n_bar"))
        .transpose()?
        .ok_or_else(|| Error::MissingField("budget.n_bar".into()))?;
    let kappa = match kappa_from_section(t, "budget")? {
        Some(k) => k,
        None => effective_resonator(&p, p.omega_r_bare)?.kappa_r + p.kappa_r_int,
    };
    let b = error_budget(&p, t_m, n_bar, kappa)?;
    let u = ctx.units;
    let doc = json!({
        "t_m_ns": b.t_m,
        "n_bar": b.n_bar,
        "delta_alpha": b.delta_alpha,
        "delta_alpha_eff": b.delta_alpha_eff,
        "p_sep": b.p_err_sep,
        "p_purcell": b.p_purcell,
        "p_intrinsic": b.p_intrinsic,
        "p_total": b.p_err_total,
        "t_m_bound_ns": b.t_m_bound,
        "detuning_bound": b.detuning_bound,
        "kappa_per_ns": b.kappa,
        "gamma_per_ns": b.gamma,
        freq_column("chi", u): u.from_rad_ns(b.chi),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).expect("JSON values serialize")
    );
    let mut em = Emitter::new(&ctx.out, "error-budget");
    em.add_json("error_budget.json", &doc);
    ctx.finish(
        em,
        &p,
        json!({ "t_m_ns": t_m, "n_bar": n_bar, "kappa_per_ns": kappa }),
    )
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// Rate report of every value of one configuration key.
pub fn sweep(ctx: &Context, key: Option<String>, values: Option<Vec<f64>>) -> CliResult<()> {
    let empty = toml::Table::new();
    let t = ctx.resolved.section("sweep")?.unwrap_or(&empty);
    config::check_keys(t, "sweep", &["key", "values"])?;
    let key = match key.or_else(|| t.get("key").and_then(|v| v.as_str()).map(str::to_string)) {
        Some(k) => k,
        None => return Err(Error::MissingField("sweep key (--key or sweep.key)".into()).into()),
    };
    let values = match values {
        Some(v) => v,
        None => match t.get("values") {
            Some(v) => v
                .as_array()
                .ok_or_else(|| Error::Parse("`sweep.values` must be an array".into()))?
                .iter()
                .map(|x| config::number(x, "sweep.values"))
                .collect::<purcellkit::Result<_>>()?,
            None => {
                return Err(
                    Error::MissingField("sweep values (--values or sweep.values)".into()).into(),
                )
            }
        },
    };
    if key.starts_with("sweep.") {
        return Err(Error::InvalidInput("cannot sweep the sweep settings".into()).into());
    }
    if let Some(v) = config::get_key(&ctx.resolved.table, &key) {
        if v.is_table() || config::number(v, &key).is_err() {
            return Err(Error::InvalidInput(format!("sweep key `{key}` is not numeric")).into());
        }
    }
    let base = ctx.resolved.params()?;

    let rows: Vec<purcellkit::Result<[f64; 9]>> = ctx.pool.install(|| {
        values
            .par_iter()
            .map(|&x| {
                let mut table = ctx.resolved.table.clone();
                config::set_key(&mut table, &key, toml::Value::Float(x))?;
                let p = purcellkit::params::device_from_table(&table)?;
                rate_values(&p).map(|(v, _)| v)
            })
            .collect()
    });
    if !rows.is_empty() && rows.iter().all(|r| r.is_err()) {
        let first = rows
            .into_iter()
            .find_map(|r| r.err())
            .expect("all rows failed");
        return Err(first.into());
    }

    let mut header = vec![key.clone()];
    header.extend(RATE_KEYS.iter().map(|s| s.to_string()));
    header.push("error".into());
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    for (x, r) in values.iter().zip(&rows) {
        let mut row = vec![fmt_f64(*x)];
        match r {
            Ok(v) => {
                row.extend(v.iter().map(|y| fmt_f64(*y)));
                row.push(String::new());
            }
            Err(e) => {
                row.extend(std::iter::repeat(String::new()).take(RATE_KEYS.len()));
                row.push(e.to_string());
            }
        }
        table.rows.push(row);
    }
    let mut em = Emitter::new(&ctx.out, "sweep");
    em.add(
        "sweep.csv",
        table
            .to_csv()
            .map_err(|e| CliError::Io(ctx.out.clone(), e))?,
    );
    ctx.finish(em, &base, json!({ "key": key, "values": values }))
}
