//! Lindblad evolution of a two-level qubit coupled to a readout resonator and
//! a filter, in the frame rotating at the drive frequency.
//!
//! Basis index of |q, n_r, n_f⟩ is q·N_r·N_f + n_r·N_f + n_f with q = 0 for
//! the ground state. Density matrices are dense and row-major.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{DeviceParams, DriveConfig, DrivePort};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Number of Fock states kept is `n_max + 1` for each resonator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FockTruncation {
    /// Highest readout photon number kept.
    pub n_max_readout: usize,
    /// Highest filter photon number kept.
    pub n_max_filter: usize,
}

/// Smallest cutoff covering a coherent state with mean `n`: ⌈n + 6√n⌉ + 2.
pub fn required_cutoff(n: f64) -> usize {
    (n.max(0.0) + 6.0 * n.max(0.0).sqrt()).ceil() as usize + 2
}

impl FockTruncation {
    pub fn new(n_max_readout: usize, n_max_filter: usize) -> Self {
        Self {
            n_max_readout,
            n_max_filter,
        }
    }

    /// Cutoffs from the mean photon numbers expected in each resonator.
    pub fn for_photons(n_readout: f64, n_filter: f64) -> Self {
        Self::new(required_cutoff(n_readout), required_cutoff(n_filter))
    }

    /// Both cutoffs raised by `extra`.
    pub fn widened(self, extra: usize) -> Self {
        Self::new(self.n_max_readout + extra, self.n_max_filter + extra)
    }

    pub fn dims(self) -> (usize, usize, usize) {
        (2, self.n_max_readout + 1, self.n_max_filter + 1)
    }

    pub fn dimension(self) -> usize {
        2 * (self.n_max_readout + 1) * (self.n_max_filter + 1)
    }

    pub fn covers(self, n_readout: f64, n_filter: f64) -> bool {
        self.n_max_readout >= required_cutoff(n_readout)
            && self.n_max_filter >= required_cutoff(n_filter)
    }
}

/// Hard cap on the Hilbert-space dimension.
pub const MAX_DIMENSION: usize = 4096;

/// Jump operator that maps each basis state to at most one other state.
#[derive(Debug, Clone)]
struct Jump {
    /// (source, target, amplitude).
    entries: Vec<(usize, usize, f64)>,
}

/// Generator of the master equation on a truncated space.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub trunc: FockTruncation,
    dim: usize,
    /// Rows of the Hamiltonian (Hermitian).
    h_rows: Vec<Vec<(usize, Complex64)>>,
    /// Rows of H − (i/2)ΣC†C.
    heff_rows: Vec<Vec<(usize, Complex64)>>,
    jumps: Vec<Jump>,
}

impl LindbladModel {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn index(&self, q: usize, nr: usize, nf: usize) -> usize {
        let (_, r, f) = self.trunc.dims();
        q * r * f + nr * f + nf
    }

    fn dense(rows: &[Vec<(usize, Complex64)>], dim: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(dim, dim);
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn hamiltonian_dense(&self) -> DMatrix<Complex64> {
        Self::dense(&self.h_rows, self.dim)
    }

    pub fn effective_hamiltonian_dense(&self) -> DMatrix<Complex64> {
        Self::dense(&self.heff_rows, self.dim)
    }

    /// L(ρ) written into `out`; the result is Hermitian by construction.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let d = self.dim;
        // Y = −i H_eff ρ + ½ Σ C ρ C†.
        scratch.iter_mut().for_each(|v| *v = ZERO);
        for (i, row) in self.heff_rows.iter().enumerate() {
            let dst = &mut scratch[i * d..(i + 1) * d];
            for &(j, h) in row {
                let c = -I * h;
                let src = &rho[j * d..(j + 1) * d];
                for (y, r) in dst.iter_mut().zip(src) {
                    *y += c * r;
                }
            }
        }
        for jump in &self.jumps {
            for &(k, mk, ck) in &jump.entries {
                let src = &rho[k * d..(k + 1) * d];
                let dst = mk * d;
                for &(l, ml, cl) in &jump.entries {
                    scratch[dst + ml] += src[l] * (0.5 * ck * cl);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = scratch[i * d + j] + scratch[j * d + i].conj();
                out[i * d + j] = v;
                out[j * d + i] = v.conj();
            }
        }
    }
}

/// Builds the generator for a two-level qubit, readout resonator and filter.
///
/// H = Δ_rd a†a + Δ_fd b†b + Δ_qd σ₊σ₋ + g(a†σ₋ + aσ₊) + G a†b + G* ab†
///     + ε_r a† + ε_r* a + ε_f b† + ε_f* b,
/// with jumps √κ_f b and √κ_rd a. The drive amplitude is the envelope value
/// at t = 0 (step drives only).
pub fn build_generator(
    params: &DeviceParams,
    drive: &DriveConfig,
    trunc: FockTruncation,
) -> Result<LindbladModel> {
    let (_, nr, nf) = trunc.dims();
    let dim = trunc.dimension();
    if dim > MAX_DIMENSION {
        return Err(Error::Truncation(format!(
            "dimension {dim} exceeds the cap of {MAX_DIMENSION}"
        )));
    }
    if drive.port != DrivePort::None {
        let predicted = predicted_photons(params, drive)?;
        // A decoupled filter only needs its vacuum.
        let filter_needed = params.coupling.norm() > 0.0 || drive.port == DrivePort::Filter;
        let n_f = if filter_needed { predicted.1 } else { 0.0 };
        let ok = trunc.n_max_readout >= required_cutoff(predicted.0)
            && (!filter_needed || trunc.n_max_filter >= required_cutoff(n_f));
        if !ok {
            return Err(Error::Truncation(format!(
                "cutoffs ({}, {}) too small for predicted photon numbers ({:.3}, {:.3})",
                trunc.n_max_readout, trunc.n_max_filter, predicted.0, predicted.1
            )));
        }
    }
    let w = drive.omega_d;
    let d_rd = params.omega_r_bare - w;
    let d_fd = params.omega_f - w;
    let d_qd = params.omega_q_bare - w;
    let eps_r = drive.readout_amplitude(0.0);
    let eps_f = drive.filter_amplitude(0.0);
    let gc = params.coupling;
    let idx = |q: usize, a: usize, b: usize| q * nr * nf + a * nf + b;

    let mut h_rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); dim];
    let push = |rows: &mut Vec<Vec<(usize, Complex64)>>, i: usize, j: usize, v: Complex64| {
        if v != ZERO {
            rows[i].push((j, v));
        }
    };
    for q in 0..2 {
        for a in 0..nr {
            for b in 0..nf {
                let i = idx(q, a, b);
                let diag = d_rd * a as f64 + d_fd * b as f64 + d_qd * q as f64;
                push(&mut h_rows, i, i, Complex64::new(diag, 0.0));
                // g a†σ₋: |e,a,b⟩ → |g,a+1,b⟩ and its conjugate.
                if q == 1 && a + 1 < nr {
                    let v = Complex64::new(params.g * ((a + 1) as f64).sqrt(), 0.0);
                    let j = idx(0, a + 1, b);
                    push(&mut h_rows, j, i, v);
                    push(&mut h_rows, i, j, v);
                }
                // G a†b: |q,a,b⟩ → |q,a+1,b−1⟩.
                if b >= 1 && a + 1 < nr {
                    let v = gc * (((a + 1) * b) as f64).sqrt();
                    let j = idx(q, a + 1, b - 1);
                    push(&mut h_rows, j, i, v);
                    push(&mut h_rows, i, j, v.conj());
                }
                if a + 1 < nr {
                    let v = eps_r * ((a + 1) as f64).sqrt();
                    let j = idx(q, a + 1, b);
                    push(&mut h_rows, j, i, v);
                    push(&mut h_rows, i, j, v.conj());
                }
                if b + 1 < nf {
                    let v = eps_f * ((b + 1) as f64).sqrt();
                    let j = idx(q, a, b + 1);
                    push(&mut h_rows, j, i, v);
                    push(&mut h_rows, i, j, v.conj());
                }
            }
        }
    }

    let mut jumps = Vec::new();
    if params.kappa_f > 0.0 && nf > 1 {
        let mut entries = Vec::new();
        for q in 0..2 {
            for a in 0..nr {
                for b in 1..nf {
                    entries.push((
                        idx(q, a, b),
                        idx(q, a, b - 1),
                        (params.kappa_f * b as f64).sqrt(),
                    ));
                }
            }
        }
        jumps.push(Jump { entries });
    }
    if params.kappa_r_int > 0.0 {
        let mut entries = Vec::new();
        for q in 0..2 {
            for a in 1..nr {
                for b in 0..nf {
                    entries.push((
                        idx(q, a, b),
                        idx(q, a - 1, b),
                        (params.kappa_r_int * a as f64).sqrt(),
                    ));
                }
            }
        }
        jumps.push(Jump { entries });
    }

    // C†C is diagonal for these jumps.
    let mut heff_rows = h_rows.clone();
    for jump in &jumps {
        for &(k, _, c) in &jump.entries {
            let v = Complex64::new(0.0, -0.5 * c * c);
            match heff_rows[k].iter_mut().find(|(j, _)| *j == k) {
                Some(entry) => entry.1 += v,
                None => heff_rows[k].push((k, v)),
            }
        }
    }
    Ok(LindbladModel {
        trunc,
        dim,
        h_rows,
        heff_rows,
        jumps,
    })
}

/// Semiclassical photon numbers with the readout resonator resonant with the
/// drive, an upper bound for either qubit state.
pub fn predicted_photons(params: &DeviceParams, drive: &DriveConfig) -> Result<(f64, f64)> {
    let mut p = params.clone();
    p.dressed_readout = Some((drive.omega_d, drive.omega_d));
    let ss = crate::semiclassical::steady_state_fields(
        &p,
        drive,
        crate::semiclassical::QubitState::Excited,
    )?;
    Ok((ss.n_r(), ss.n_f()))
}

/// Density matrix on qubit ⊗ readout ⊗ filter.
#[derive(Debug, Clone)]
pub struct TruncatedDensityMatrix {
    pub dims: (usize, usize, usize),
    /// Row-major entries.
    pub entries: Vec<Complex64>,
    pub time: f64,
}

impl TruncatedDensityMatrix {
    /// Pure basis state |q, n_r, n_f⟩.
    pub fn basis(trunc: FockTruncation, q: usize, nr: usize, nf: usize) -> Result<Self> {
        let dims = trunc.dims();
        if q > 1 || nr >= dims.1 || nf >= dims.2 {
            return Err(Error::InvalidInput(
                "basis state outside the truncated space".into(),
            ));
        }
        let d = trunc.dimension();
        let mut entries = vec![ZERO; d * d];
        let i = q * dims.1 * dims.2 + nr * dims.2 + nf;
        entries[i * d + i] = Complex64::new(1.0, 0.0);
        Ok(Self {
            dims,
            entries,
            time: 0.0,
        })
    }

    /// Excited qubit with both resonators empty.
    pub fn excited_vacuum(trunc: FockTruncation) -> Self {
        Self::basis(trunc, 1, 0, 0).expect("vacuum is always inside the space")
    }

    pub fn dimension(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    fn diag(&self, i: usize) -> f64 {
        self.entries[i * self.dimension() + i].re
    }

    pub fn trace(&self) -> f64 {
        (0..self.dimension()).map(|i| self.diag(i)).sum()
    }

    /// Largest |ρ_ij − ρ_ji*|.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dimension();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst =
                    worst.max((self.entries[i * d + j] - self.entries[j * d + i].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dimension();
        let m = DMatrix::from_row_slice(d, d, &self.entries);
        let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Trace, Hermiticity and (optionally) positivity within bounds.
    pub fn check(&self, positivity: bool) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-8 {
            return Err(Error::TraceDrift {
                t: self.time,
                drift: (tr - 1.0).abs(),
            });
        }
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix not Hermitian ({herm:.2e}) at t = {}",
                self.time
            )));
        }
        if positivity {
            let lo = self.min_eigenvalue();
            if lo < -1e-8 {
                return Err(Error::Numerical(format!(
                    "negative eigenvalue {lo:.2e} at t = {}",
                    self.time
                )));
            }
        }
        Ok(())
    }

    /// Population of the excited qubit state summed over photon numbers.
    pub fn excited_population(&self) -> f64 {
        let block = self.dims.1 * self.dims.2;
        (block..2 * block).map(|i| self.diag(i)).sum()
    }

    /// ⟨a†a⟩ and ⟨b†b⟩.
    pub fn mean_photons(&self) -> (f64, f64) {
        let (_, nr, nf) = self.dims;
        let mut out = (0.0, 0.0);
        for q in 0..2 {
            for a in 0..nr {
                for b in 0..nf {
                    let p = self.diag(q * nr * nf + a * nf + b);
                    out.0 += a as f64 * p;
                    out.1 += b as f64 * p;
                }
            }
        }
        out
    }

    /// Mean readout photons conditioned on the qubit being excited.
    pub fn mean_readout_photons_excited(&self) -> f64 {
        let (_, nr, nf) = self.dims;
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..nr {
            for b in 0..nf {
                let p = self.diag(nr * nf + a * nf + b);
                num += a as f64 * p;
                den += p;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Population in the highest kept Fock state of either resonator.
    pub fn edge_population(&self) -> f64 {
        let (_, nr, nf) = self.dims;
        let mut s = 0.0;
        for q in 0..2 {
            for a in 0..nr {
                for b in 0..nf {
                    if a == nr - 1 || (nf > 1 && b == nf - 1) {
                        s += self.diag(q * nr * nf + a * nf + b);
                    }
                }
            }
        }
        s
    }
}

/// Step control for the Taylor propagator.
#[derive(Debug, Clone, Copy)]
pub struct PropagatorOptions {
    /// Series truncation: stop once a term is below `tolerance`·‖ρ‖.
    pub tolerance: f64,
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            initial_step: 0.5,
            min_step: 1e-6,
        }
    }
}

/// Values recorded at every output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    pub t: f64,
    pub rho_ee: f64,
    pub n_r: f64,
    pub n_f: f64,
    pub trace: f64,
}

// Terms above this count mean the step is too long for a well-conditioned sum.
const MAX_TERMS: usize = 40;
const GROW_BELOW: usize = 22;

fn max_abs(v: &[Complex64]) -> f64 {
    v.iter()
        .fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()))
}

/// Evolves `rho0` with the constant generator, calling `observe` at each grid
/// time (the first grid entry is the initial time). Every output sample is
/// checked for trace drift and Hermiticity.
pub fn evolve_with<F>(
    model: &LindbladModel,
    rho0: &TruncatedDensityMatrix,
    grid: &[f64],
    opts: &PropagatorOptions,
    mut observe: F,
) -> Result<TruncatedDensityMatrix>
where
    F: FnMut(&TruncatedDensityMatrix),
{
    if rho0.dims != model.trunc.dims() {
        return Err(Error::InvalidInput(
            "initial state has the wrong dimensions".into(),
        ));
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "time grid must be non-empty and strictly increasing".into(),
        ));
    }
    let n = model.dim * model.dim;
    let mut state = rho0.clone();
    state.time = grid[0];
    let mut term = vec![ZERO; n];
    let mut next = vec![ZERO; n];
    let mut acc = vec![ZERO; n];
    let mut scratch = vec![ZERO; n];
    let mut h = opts.initial_step;
    observe(&state);
    for &target in &grid[1..] {
        while state.time < target {
            let remaining = target - state.time;
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            term.copy_from_slice(&state.entries);
            acc.copy_from_slice(&state.entries);
            let scale = max_abs(&state.entries);
            let mut terms = 0;
            let mut converged = false;
            for k in 1..=MAX_TERMS {
                model.apply(&term, &mut next, &mut scratch);
                let f = step / k as f64;
                for (x, a) in next.iter_mut().zip(acc.iter_mut()) {
                    *x *= f;
                    *a += *x;
                }
                std::mem::swap(&mut term, &mut next);
                if max_abs(&term) <= opts.tolerance * scale {
                    terms = k;
                    converged = true;
                    break;
                }
            }
            if !converged {
                h = step / 2.0;
                if h < opts.min_step {
                    return Err(Error::ToleranceUnreachable {
                        t: state.time,
                        step: h,
                    });
                }
                continue;
            }
            std::mem::swap(&mut state.entries, &mut acc);
            state.time = if last { target } else { state.time + step };
            if terms < GROW_BELOW && !last {
                h = step * 1.25;
            }
        }
        let drift = (state.trace() - 1.0).abs();
        if drift > 1e-8 {
            return Err(Error::TraceDrift {
                t: state.time,
                drift,
            });
        }
        observe(&state);
    }
    Ok(state)
}

/// Full density matrices at every grid time; intended for small spaces.
pub fn lindblad_evolve(
    model: &LindbladModel,
    rho0: &TruncatedDensityMatrix,
    grid: &[f64],
    opts: &PropagatorOptions,
) -> Result<Vec<TruncatedDensityMatrix>> {
    let mut out = Vec::with_capacity(grid.len());
    evolve_with(model, rho0, grid, opts, |s| out.push(s.clone()))?;
    Ok(out)
}

/// Excited population and photon numbers at every grid time.
pub fn evolve_observables(
    model: &LindbladModel,
    rho0: &TruncatedDensityMatrix,
    grid: &[f64],
    opts: &PropagatorOptions,
) -> Result<(Vec<Observables>, TruncatedDensityMatrix)> {
    let mut out = Vec::with_capacity(grid.len());
    let last = evolve_with(model, rho0, grid, opts, |s| {
        let (n_r, n_f) = s.mean_photons();
        out.push(Observables {
            t: s.time,
            rho_ee: s.excited_population(),
            n_r,
            n_f,
            trace: s.trace(),
        });
    })?;
    Ok((out, last))
}
