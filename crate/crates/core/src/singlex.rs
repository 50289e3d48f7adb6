//! Purcell decay in the single-excitation subspace.
//!
//! Basis: |e⟩ = |e,0,0⟩, |r⟩ = |g,1,0⟩, |f⟩ = |g,0,1⟩ and the ground state
//! |g⟩ = |g,0,0⟩, in the frame rotating at the bare qubit frequency. Detunings
//! are Δ_rq = ω_r − ω_q and Δ_fq = ω_f − ω_q. Readout-resonator loss κ_rd
//! enters as an extra damping of |r⟩ wherever the dynamics are written out.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::ode::{integrate, OdeOptions};
use crate::params::DeviceParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Coefficients (a, b, c) of λ³ + aλ² + bλ + c.
///
/// With κ_rd = 0: a = iΔ_rq + iΔ_fq + κ_f/2,
/// b = −Δ_rqΔ_fq + |G|² + g² + iΔ_rqκ_f/2, c = g²(iΔ_fq + κ_f/2).
/// Internal loss replaces iΔ_rq by iΔ_rq + κ_rd/2.
pub fn characteristic_cubic(params: &DeviceParams) -> [Complex64; 3] {
    let d = params.derive();
    let g2 = params.g * params.g;
    let r = c(params.kappa_r_int / 2.0, d.delta_rq);
    let f = c(params.kappa_f / 2.0, d.delta_fq);
    [r + f, r * f + params.coupling_abs2() + g2, f * g2]
}

fn eval_cubic(coef: &[Complex64; 3], x: Complex64) -> (Complex64, Complex64) {
    let [a, b, cc] = *coef;
    let p = ((x + a) * x + b) * x + cc;
    let dp = (x * 3.0 + a * 2.0) * x + b;
    (p, dp)
}

/// Roots of the monic cubic from the companion-matrix eigenvalues, each
/// polished by one Newton step.
pub fn solve_cubic(coef: &[Complex64; 3]) -> [Complex64; 3] {
    let [a, b, cc] = *coef;
    let zero = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let companion = Matrix3::new(-a, -b, -cc, one, zero, zero, zero, one, zero);
    let mut roots = match companion.eigenvalues() {
        Some(ev) if ev.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
            [ev[0], ev[1], ev[2]]
        }
        _ => durand_kerner(coef),
    };
    for r in &mut roots {
        let (p, dp) = eval_cubic(coef, *r);
        if dp.norm() > 0.0 {
            let candidate = *r - p / dp;
            if eval_cubic(coef, candidate).0.norm() <= p.norm() {
                *r = candidate;
            }
        }
    }
    roots
}

fn durand_kerner(coef: &[Complex64; 3]) -> [Complex64; 3] {
    let scale = 1.0 + coef.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let seed = c(0.4, 0.9);
    let mut z = [
        seed * scale,
        seed * seed * scale,
        seed * seed * seed * scale,
    ];
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..3 {
            let mut den = c(1.0, 0.0);
            for j in 0..3 {
                if i != j {
                    den *= z[i] - z[j];
                }
            }
            let step = eval_cubic(coef, z[i]).0 / den;
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved <= 1e-15 * scale {
            break;
        }
    }
    z
}

/// Quasisteady eigenvalue −g²/(iΔ_rq + κ_rd/2 + |G|²/(iΔ_fq + κ_f/2)).
pub fn lambda_quasisteady(params: &DeviceParams) -> Complex64 {
    let d = params.derive();
    let r = c(params.kappa_r_int / 2.0, d.delta_rq);
    let f = c(params.kappa_f / 2.0, d.delta_fq);
    -(params.g * params.g) / (r + params.coupling_abs2() / f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchChoice {
    pub index: usize,
    /// Set when another root is nearly as good a match.
    pub ambiguous: bool,
}

/// Picks the qubit-like root: the one whose eigenvector has the largest
/// weight on the excited qubit. Without qubit coupling this is the zero root.
pub fn classify_branch_e(roots: &[Complex64; 3], params: &DeviceParams) -> BranchChoice {
    let mut order = [0usize, 1, 2];
    if params.g == 0.0 {
        order.sort_by(|&i, &j| roots[i].norm().partial_cmp(&roots[j].norm()).unwrap());
        return BranchChoice {
            index: order[0],
            ambiguous: roots[order[1]].norm() <= 1e-12,
        };
    }
    let d = params.derive();
    let f = c(params.kappa_f / 2.0, d.delta_fq);
    let weight = |l: Complex64| {
        // c_e = 1, c_r = iλ/g, c_f = −i G* c_r/(λ + f).
        let cr = I * l / params.g;
        let den = l + f;
        let cf = if den.norm() > 0.0 {
            -I * params.coupling.conj() * cr / den
        } else {
            Complex64::new(f64::INFINITY, 0.0)
        };
        1.0 / (1.0 + cr.norm_sqr() + cf.norm_sqr())
    };
    let w = [weight(roots[0]), weight(roots[1]), weight(roots[2])];
    order.sort_by(|&i, &j| w[j].partial_cmp(&w[i]).unwrap());
    let (best, second) = (roots[order[0]], roots[order[1]]);
    let close_weight = w[order[1]] >= 0.5 * w[order[0]];
    let close_roots = (best - second).norm() <= 0.1 * best.norm().max(second.norm());
    BranchChoice {
        index: order[0],
        ambiguous: close_weight || close_roots,
    }
}

fn check_detuning(params: &DeviceParams) -> Result<()> {
    if params.omega_r_bare == params.omega_q_bare {
        return Err(Error::InvalidInput(
            "qubit resonant with the readout resonator".into(),
        ));
    }
    Ok(())
}

/// A quasisteady rate with its validity flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlaggedRate {
    pub gamma: f64,
    pub valid: bool,
}

/// Quasisteady Purcell rate (κ_rd ignored).
///
/// Full: g²|G|²κ_f / (Δ_rq²[(Δ_fq − |G|²/Δ_rq)² + (κ_f/2)²]).
/// Simple: g²κ_q/Δ_rq², valid when |G|² ≪ Δ_fqΔ_rq.
pub fn purcell_rate_quasisteady(params: &DeviceParams, simple: bool) -> Result<FlaggedRate> {
    check_detuning(params)?;
    let d = params.derive();
    let (drq, dfq) = (d.delta_rq, d.delta_fq);
    let g2 = params.g * params.g;
    let gg = params.coupling_abs2();
    let kf = params.kappa_f;
    if simple {
        let kappa_q = 4.0 * gg / kf / (1.0 + (2.0 * dfq / kf).powi(2));
        Ok(FlaggedRate {
            gamma: g2 * kappa_q / (drq * drq),
            valid: gg < 0.1 * drq * dfq,
        })
    } else {
        let den = drq * drq * ((dfq - gg / drq).powi(2) + (kf / 2.0).powi(2));
        Ok(FlaggedRate {
            gamma: g2 * gg * kf / den,
            valid: true,
        })
    }
}

/// Closed-form rate from the density-matrix quasisteady solution.
pub fn purcell_rate_density_matrix(params: &DeviceParams) -> Result<f64> {
    let d = params.derive();
    let (drq, dfq) = (d.delta_rq, d.delta_fq);
    let g2 = params.g * params.g;
    let gg = params.coupling_abs2();
    let h = (params.kappa_f / 2.0).powi(2);
    let den = (drq * dfq - gg).powi(2)
        + (drq * drq + g2) * h
        + g2 * (dfq * dfq + 2.0 * dfq * drq - gg)
        + g2 * g2;
    if !(den > 0.0) {
        return Err(Error::non_physical(
            "parameters",
            "density-matrix rate has a non-positive denominator",
        ));
    }
    Ok(g2 * gg * params.kappa_f / den)
}

/// How λ³ enters the quadratic at each refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CubeSubstitution {
    /// aλ² + bλ + (c + λ_prev³) = 0.
    Constant,
    /// aλ² + (b + λ_prev²)λ + c = 0.
    Linearized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterativeRate {
    pub gamma: f64,
    pub lambda: Complex64,
    /// Rate from the other substitution rule.
    pub gamma_alternative: f64,
    /// True when the two rules disagree by more than 0.1%.
    pub rules_disagree: bool,
}

fn quadratic_roots(a: Complex64, b: Complex64, cc: Complex64) -> [Complex64; 2] {
    let disc = (b * b - a * cc * 4.0).sqrt();
    let q = if (b + disc).norm() >= (b - disc).norm() {
        -(b + disc) / 2.0
    } else {
        -(b - disc) / 2.0
    };
    if q.norm() == 0.0 {
        return [c(0.0, 0.0), c(0.0, 0.0)];
    }
    [q / a, cc / q]
}

fn nearest(roots: [Complex64; 2], target: Complex64) -> Complex64 {
    if (roots[0] - target).norm() <= (roots[1] - target).norm() {
        roots[0]
    } else {
        roots[1]
    }
}

fn iterate(
    params: &DeviceParams,
    iterations: usize,
    rule: CubeSubstitution,
    seed: Option<Complex64>,
) -> Complex64 {
    let [a, b, cc] = characteristic_cubic(params);
    let mut lambda = match seed {
        Some(s) => s,
        None => nearest(quadratic_roots(a, b, cc), lambda_quasisteady(params)),
    };
    let remaining = if seed.is_some() {
        iterations
    } else {
        iterations - 1
    };
    for _ in 0..remaining {
        let roots = match rule {
            CubeSubstitution::Constant => quadratic_roots(a, b, cc + lambda * lambda * lambda),
            CubeSubstitution::Linearized => quadratic_roots(a, b + lambda * lambda, cc),
        };
        lambda = nearest(roots, lambda);
    }
    lambda
}

/// Rate from the quadratic approximation of the cubic, refined
/// `iterations − 1` times by feeding back the previous λ³. Each quadratic root
/// is chosen continuous with the previous iterate (the first with the
/// quasisteady estimate).
pub fn purcell_rate_iterative(params: &DeviceParams, iterations: usize) -> Result<IterativeRate> {
    if iterations == 0 {
        return Err(Error::InvalidInput(
            "at least one iteration is required".into(),
        ));
    }
    let main = iterate(params, iterations, CubeSubstitution::Constant, None);
    let alt = iterate(params, iterations, CubeSubstitution::Linearized, None);
    let (gm, ga) = (-2.0 * main.re, -2.0 * alt.re);
    Ok(IterativeRate {
        gamma: gm,
        lambda: main,
        gamma_alternative: ga,
        rules_disagree: (gm - ga).abs() > 1e-3 * gm.abs().max(ga.abs()),
    })
}

/// One refinement step started from `seed`; used to check fixed points.
pub fn refine_lambda(params: &DeviceParams, seed: Complex64, rule: CubeSubstitution) -> Complex64 {
    iterate(params, 1, rule, Some(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InternalLossRate {
    pub gamma: f64,
    /// Approximation g²(κ_q + κ_rd)/Δ_rq².
    pub gamma_approx: f64,
    pub suppression: f64,
}

/// Quasisteady rate 2 Re[g²/(iΔ_rq + |G|²/(iΔ_fq + κ_f/2) + κ_rd/2)].
pub fn purcell_rate_with_internal_loss(params: &DeviceParams) -> Result<InternalLossRate> {
    check_detuning(params)?;
    let d = params.derive();
    let gamma = -2.0 * lambda_quasisteady(params).re;
    let res = crate::semiclassical::effective_resonator(
        params,
        crate::semiclassical::kappa_r_probe(params),
    )?;
    let gamma_approx =
        params.g * params.g * (res.kappa_q + params.kappa_r_int) / d.delta_rq.powi(2);
    Ok(InternalLossRate {
        gamma,
        gamma_approx,
        suppression: res.suppression,
    })
}

/// Every rate estimate for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleExcitationSolution {
    pub coefficients: [Complex64; 3],
    pub lambdas: [Complex64; 3],
    pub branch_e: usize,
    pub ambiguous: bool,
    pub gamma_exact: f64,
    pub gamma_quadratic: f64,
    pub gamma_iterative: f64,
    pub gamma_iterative_alternative: f64,
    pub gamma_quasisteady_full: f64,
    pub gamma_quasisteady_simple: f64,
    pub simple_form_valid: bool,
    pub gamma_density_matrix: f64,
}

pub fn solve(params: &DeviceParams) -> Result<SingleExcitationSolution> {
    let coefficients = characteristic_cubic(params);
    let lambdas = solve_cubic(&coefficients);
    let branch = classify_branch_e(&lambdas, params);
    let quad = purcell_rate_iterative(params, 1)?;
    let iter2 = purcell_rate_iterative(params, 2)?;
    let simple = purcell_rate_quasisteady(params, true)?;
    Ok(SingleExcitationSolution {
        coefficients,
        lambdas,
        branch_e: branch.index,
        ambiguous: branch.ambiguous,
        gamma_exact: -2.0 * lambdas[branch.index].re,
        gamma_quadratic: quad.gamma,
        gamma_iterative: iter2.gamma,
        gamma_iterative_alternative: iter2.gamma_alternative,
        gamma_quasisteady_full: purcell_rate_quasisteady(params, false)?.gamma,
        gamma_quasisteady_simple: simple.gamma,
        simple_form_valid: simple.valid,
        gamma_density_matrix: purcell_rate_density_matrix(params)?,
    })
}

/// Exact qubit-like rate from the cubic.
pub fn gamma_exact(params: &DeviceParams) -> f64 {
    let roots = solve_cubic(&characteristic_cubic(params));
    -2.0 * roots[classify_branch_e(&roots, params).index].re
}

// ---------------------------------------------------------------------------
// Time domain
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeState {
    pub c_e: Complex64,
    pub c_r: Complex64,
    pub c_f: Complex64,
    pub rho_gg: f64,
}

impl AmplitudeState {
    pub fn excited() -> Self {
        Self {
            c_e: c(1.0, 0.0),
            c_r: c(0.0, 0.0),
            c_f: c(0.0, 0.0),
            rho_gg: 0.0,
        }
    }

    pub fn total_probability(&self) -> f64 {
        self.c_e.norm_sqr() + self.c_r.norm_sqr() + self.c_f.norm_sqr() + self.rho_gg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub window: (f64, f64),
    pub residual_rms: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<AmplitudeState>,
    pub fit: DecayFit,
}

/// Right-hand side of the amplitude equations plus the ground population.
fn amplitude_rhs(params: &DeviceParams) -> impl Fn(f64, &[Complex64], &mut [Complex64]) {
    let d = params.derive();
    let g = params.g;
    let gc = params.coupling;
    let r = c(params.kappa_r_int / 2.0, d.delta_rq);
    let f = c(params.kappa_f / 2.0, d.delta_fq);
    let (kf, krd) = (params.kappa_f, params.kappa_r_int);
    move |_t, y, dy| {
        dy[0] = -I * g * y[1];
        dy[1] = -r * y[1] - I * g * y[0] - I * gc * y[2];
        dy[2] = -f * y[2] - I * gc.conj() * y[1];
        dy[3] = c(kf * y[2].norm_sqr() + krd * y[1].norm_sqr(), 0.0);
    }
}

/// Integrates the amplitude equations and fits −ln|c_e|² where
/// |c_e|² ∈ [0.90, 0.99] and t > 10/κ_f.
pub fn evolve_single_excitation(
    params: &DeviceParams,
    initial: AmplitudeState,
    grid: &[f64],
    opts: &OdeOptions,
) -> Result<AmplitudeTrajectory> {
    let norm = initial.total_probability();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "initial state not normalized (total {norm})"
        )));
    }
    let y0 = [
        initial.c_e,
        initial.c_r,
        initial.c_f,
        c(initial.rho_gg, 0.0),
    ];
    let (ys, _) = integrate(amplitude_rhs(params), grid, &y0, opts)?;
    let states: Vec<AmplitudeState> = ys
        .iter()
        .map(|y| AmplitudeState {
            c_e: y[0],
            c_r: y[1],
            c_f: y[2],
            rho_gg: y[3].re,
        })
        .collect();

    let pe: Vec<f64> = states.iter().map(|s| s.c_e.norm_sqr()).collect();
    let fit = if pe.iter().all(|p| (p - pe[0]).abs() <= 1e-14) {
        // Nothing decays (e.g. an uncoupled qubit).
        DecayFit {
            gamma: 0.0,
            window: (grid[0], grid[grid.len() - 1]),
            residual_rms: 0.0,
            points: grid.len(),
        }
    } else {
        let t_min = grid[0] + 10.0 / params.kappa_f;
        let (x, y): (Vec<f64>, Vec<f64>) = grid
            .iter()
            .zip(&pe)
            .filter(|(t, p)| **t > t_min && (0.90..=0.99).contains(*p))
            .map(|(t, p)| (*t, -p.ln()))
            .unzip();
        if x.len() < 3 {
            return Err(Error::FitWindow(
                "no samples with excited population in [0.90, 0.99]; extend the grid".into(),
            ));
        }
        let lf: LinearFit = linear_fit(&x, &y)?;
        DecayFit {
            gamma: lf.slope,
            window: (x[0], x[x.len() - 1]),
            residual_rms: lf.residual_rms,
            points: x.len(),
        }
    };
    Ok(AmplitudeTrajectory {
        times: grid.to_vec(),
        states,
        fit,
    })
}

/// Grid long enough for the decay fit, sized from the exact rate.
pub fn decay_fit_grid(params: &DeviceParams, points: usize) -> Vec<f64> {
    let gamma = gamma_exact(params).max(1e-15);
    // Reach |c_e|² ≈ 0.87 including the initial hybridization dip.
    let t_end = (0.15 / gamma).max(20.0 / params.kappa_f);
    (0..points)
        .map(|i| t_end * i as f64 / (points - 1) as f64)
        .collect()
}

/// Density matrix in the single-excitation subspace plus ground population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubspaceDensity {
    pub ee: f64,
    pub er: Complex64,
    pub ef: Complex64,
    pub rr: f64,
    pub rf: Complex64,
    pub ff: f64,
    /// Ground population from its own rate equation.
    pub gg: f64,
}

impl SubspaceDensity {
    pub fn trace(&self) -> f64 {
        self.ee + self.rr + self.ff + self.gg
    }

    /// Ground population from the trace complement.
    pub fn gg_complement(&self) -> f64 {
        1.0 - self.ee - self.rr - self.ff
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SubspaceDensity>,
    pub max_trace_drift: f64,
}

/// Right-hand side of the seven subspace equations, state order
/// (ee, er, ef, rr, rf, ff, gg).
fn density_rhs(params: &DeviceParams) -> impl Fn(f64, &[Complex64], &mut [Complex64]) {
    let d = params.derive();
    let g = params.g;
    let gc = params.coupling;
    let gs = gc.conj();
    let (drq, dfq) = (d.delta_rq, d.delta_fq);
    let (kf, krd) = (params.kappa_f, params.kappa_r_int);
    move |_t, y, dy| {
        let (ee, er, ef, rr, rf, ff) = (y[0], y[1], y[2], y[3], y[4], y[5]);
        let (re, fr) = (er.conj(), rf.conj());
        dy[0] = I * g * (er - re);
        dy[1] = I * drq * er - I * g * (rr - ee) + I * gs * ef - krd / 2.0 * er;
        dy[2] = -(kf / 2.0) * ef + I * dfq * ef + I * gc * er - I * g * rf;
        dy[3] = -I * g * (er - re) - I * gc * fr + I * gs * rf - krd * rr;
        dy[4] = -((kf + krd) / 2.0) * rf + I * (dfq - drq) * rf - I * gc * ff + I * gc * rr
            - I * g * ef;
        dy[5] = -kf * ff - I * gs * rf + I * gc * fr;
        dy[6] = c(kf * ff.re + krd * rr.re, 0.0);
    }
}

/// Integrates the density-matrix equations from |e⟩⟨e|.
///
/// Aborts when the tracked ground population and the trace complement drift
/// apart by more than 1e-6.
pub fn evolve_single_excitation_dm(
    params: &DeviceParams,
    grid: &[f64],
    opts: &OdeOptions,
) -> Result<DensityTrajectory> {
    let mut y0 = [c(0.0, 0.0); 7];
    y0[0] = c(1.0, 0.0);
    let (ys, _) = integrate(density_rhs(params), grid, &y0, opts)?;
    let mut states = Vec::with_capacity(ys.len());
    let mut max_drift = 0.0f64;
    for (t, y) in grid.iter().zip(&ys) {
        let s = SubspaceDensity {
            ee: y[0].re,
            er: y[1],
            ef: y[2],
            rr: y[3].re,
            rf: y[4],
            ff: y[5].re,
            gg: y[6].re,
        };
        let drift = (s.trace() - 1.0).abs();
        max_drift = max_drift.max(drift);
        if drift > 1e-6 {
            return Err(Error::TraceDrift { t: *t, drift });
        }
        states.push(s);
    }
    Ok(DensityTrajectory {
        times: grid.to_vec(),
        states,
        max_trace_drift: max_drift,
    })
}
