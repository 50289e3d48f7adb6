//! Exact diagonalization of the undriven multi-level Jaynes–Cummings ladder.
//!
//! The Hamiltonian conserves the excitation number N = (qubit level) + (photon
//! number), so it splits into blocks spanned by |g,N⟩, |e,N−1⟩, |f,N−2⟩,
//! |h,N−3⟩. Each block is diagonalized in the frame where N·ω_r is removed,
//! and dressed states are labelled by following the eigenvectors from zero
//! coupling to full coupling.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::QubitLevels;
use crate::error::{Error, Result};
use crate::params::DeviceParams;

/// Qubit level labelling a dressed state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DressedLevel {
    G,
    E,
    F,
    H,
}

impl DressedLevel {
    fn index(self) -> usize {
        self as usize
    }
}

const CONTINUATION_STEPS: usize = 48;

#[derive(Debug, Clone)]
struct Block {
    /// Dressed eigenvector per label; label k is the state adiabatically
    /// connected to |k, N − k⟩. Components are in the same bare order.
    vectors: Vec<Vec<f64>>,
    /// Eigenvalue per label, relative to N·ω_r.
    values: Vec<f64>,
}

/// Dressed ladder up to a maximum photon number.
#[derive(Debug, Clone)]
pub struct OracleSpectrum {
    levels: usize,
    omega_q: f64,
    omega_r: f64,
    anharm: f64,
    blocks: Vec<Block>,
    /// Set when a continuation step could not follow a state unambiguously.
    pub ambiguous: bool,
    pub n_max: usize,
}

fn bare_shift(level: usize, delta: f64, anharm: f64) -> f64 {
    // Bare energy of |k, N−k⟩ minus N·ω_r.
    match level {
        0 => 0.0,
        1 => delta,
        2 => 2.0 * delta - anharm,
        _ => 3.0 * delta - 3.0 * anharm,
    }
}

/// Diagonalizes every excitation block needed for photon numbers up to
/// `n_max` in all branches.
pub fn dressed_oracle(
    params: &DeviceParams,
    n_max: usize,
    levels: QubitLevels,
) -> Result<OracleSpectrum> {
    let k = levels.count();
    if (n_max + 3) * k > 2000 {
        return Err(Error::InvalidInput(format!(
            "{} states exceed the dense diagonalization limit",
            (n_max + 3) * k
        )));
    }
    let d = params.derive();
    let delta = d.delta_qr_appendix;
    let couplings = [params.g, d.g_ef, d.g_fh];
    let mut ambiguous = false;
    let mut blocks = Vec::with_capacity(n_max + 3);
    for n_exc in 0..=n_max + 2 {
        let size = k.min(n_exc + 1);
        let mut diag = DMatrix::<f64>::zeros(size, size);
        let mut off = DMatrix::<f64>::zeros(size, size);
        for i in 0..size {
            diag[(i, i)] = bare_shift(i, delta, params.delta_q);
            if i + 1 < size {
                // ⟨k+1, N−k−1| a† coupling |k, N−k⟩ = c_k √(N − k).
                let c = couplings[i] * ((n_exc - i) as f64).sqrt();
                off[(i, i + 1)] = c;
                off[(i + 1, i)] = c;
            }
        }
        let mut vectors: Vec<Vec<f64>> = (0..size)
            .map(|i| (0..size).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut values: Vec<f64> = (0..size).map(|i| diag[(i, i)]).collect();
        for step in 1..=CONTINUATION_STEPS {
            let s = step as f64 / CONTINUATION_STEPS as f64;
            let eig = SymmetricEigen::new(&diag + &off * s);
            let mut taken = vec![false; size];
            let mut next_vectors = vectors.clone();
            let mut next_values = values.clone();
            for label in 0..size {
                let mut best = (0usize, -1.0f64);
                for col in 0..size {
                    let ov: f64 = (0..size)
                        .map(|r| vectors[label][r] * eig.eigenvectors[(r, col)])
                        .sum();
                    if ov.abs() > best.1 {
                        best = (col, ov.abs());
                    }
                }
                let (col, ov) = best;
                if taken[col] || ov * ov < 0.5 {
                    ambiguous = true;
                }
                taken[col] = true;
                // Keep the sign continuous with the previous step.
                let prev: f64 = (0..size)
                    .map(|r| vectors[label][r] * eig.eigenvectors[(r, col)])
                    .sum();
                let sign = if prev < 0.0 { -1.0 } else { 1.0 };
                next_vectors[label] = (0..size)
                    .map(|r| sign * eig.eigenvectors[(r, col)])
                    .collect();
                next_values[label] = eig.eigenvalues[col];
            }
            vectors = next_vectors;
            values = next_values;
        }
        blocks.push(Block { vectors, values });
    }
    Ok(OracleSpectrum {
        levels: k,
        omega_q: params.omega_q_bare,
        omega_r: params.omega_r_bare,
        anharm: params.delta_q,
        blocks,
        ambiguous,
        n_max,
    })
}

impl OracleSpectrum {
    fn locate(&self, level: DressedLevel, n: usize) -> Option<(usize, usize)> {
        let k = level.index();
        if k >= self.levels {
            return None;
        }
        let n_exc = n + k;
        (n_exc < self.blocks.len()).then_some((n_exc, k))
    }

    /// Exact energy of the dressed |level, n⟩ minus its bare energy.
    pub fn energy_shift(&self, level: DressedLevel, n: usize) -> Option<f64> {
        let (b, k) = self.locate(level, n)?;
        let delta = self.omega_q - self.omega_r;
        Some(self.blocks[b].values[k] - bare_shift(k, delta, self.anharm))
    }

    /// Dressed resonator frequency minus ω_r with the qubit in `level`.
    pub fn resonator_shift(&self, level: DressedLevel, n: usize) -> Option<f64> {
        Some(self.energy_shift(level, n + 1)? - self.energy_shift(level, n)?)
    }

    /// Half the difference of the excited and ground resonator frequencies.
    pub fn chi(&self, n: usize) -> Option<f64> {
        Some(
            0.5 * (self.resonator_shift(DressedLevel::E, n)?
                - self.resonator_shift(DressedLevel::G, n)?),
        )
    }

    /// ⟨upper, m_upper| a |lower, m_lower⟩ between dressed states of adjacent
    /// excitation blocks.
    fn lowering_element(
        &self,
        bra: (DressedLevel, usize),
        ket: (DressedLevel, usize),
    ) -> Option<f64> {
        let (bb, bk) = self.locate(bra.0, bra.1)?;
        let (kb, kk) = self.locate(ket.0, ket.1)?;
        if kb != bb + 1 {
            return Some(0.0);
        }
        let vb = &self.blocks[bb].vectors[bk];
        let vk = &self.blocks[kb].vectors[kk];
        // a|q, N+1−q⟩ = √(N+1−q) |q, N−q⟩.
        Some(
            (0..vb.len().min(vk.len()))
                .map(|q| vb[q] * vk[q] * ((kb - q) as f64).sqrt())
                .sum(),
        )
    }

    /// κ|⟨g,n| a |e,n⟩|² between dressed states.
    pub fn gamma(&self, n: usize, kappa: f64) -> Option<f64> {
        let m = self.lowering_element((DressedLevel::G, n), (DressedLevel::E, n))?;
        Some(kappa * m * m)
    }

    /// κ|⟨e,n−2| a |g,n⟩|².
    pub fn gamma_g_to_e(&self, n: usize, kappa: f64) -> Option<f64> {
        if n < 2 {
            return Some(0.0);
        }
        let m = self.lowering_element((DressedLevel::E, n - 2), (DressedLevel::G, n))?;
        Some(kappa * m * m)
    }

    /// κ|⟨f,n−2| a |e,n⟩|².
    pub fn gamma_e_to_f(&self, n: usize, kappa: f64) -> Option<f64> {
        if n < 2 {
            return Some(0.0);
        }
        let m = self.lowering_element((DressedLevel::F, n - 2), (DressedLevel::E, n))?;
        Some(kappa * m * m)
    }

    /// Resonator frequency shifts with the qubit in g and e, for plotting.
    pub fn table(&self, kappa: f64) -> Vec<[f64; 5]> {
        (0..=self.n_max)
            .filter_map(|n| {
                Some([
                    n as f64,
                    self.resonator_shift(DressedLevel::G, n)?,
                    self.resonator_shift(DressedLevel::E, n)?,
                    self.chi(n)?,
                    self.gamma(n, kappa)?,
                ])
            })
            .collect()
    }
}
