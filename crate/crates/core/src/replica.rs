//! Cyclic replica permutation `E^(n)` and replica traces.
//!
//! `E^(n)` has matrix elements `⟨j_1…j_n|E|i_1…i_n⟩ = Π_k δ(j_k, i_{k+1})`
//! with `i_{n+1} = i_1`, so `E|i_1,…,i_n⟩ = |i_2,…,i_n,i_1⟩`. It is only ever
//! built densely for tiny self-tests; everything else cycles indices.
//! Fermionic density matrices come from the region-first Jordan–Wigner
//! partial trace, so no extra sign factors appear here.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entangle::{analyze_region, split_state, DensityMatrix, EntangleError, Region, DEFAULT_REGION_CAP};
use crate::excitations::{build_state, BuiltState, ExcitationError, StateRecipe};
use crate::fock::{StateVector, C64};
use crate::qmref::{qm_renyi, QmError, QmState};

/// Default cap on `d^n` index tuples.
pub const DEFAULT_REPLICA_CAP: u128 = 1 << 24;
/// Largest admissible imaginary part of a replica trace.
pub const IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplicaError {
    #[error("replica number must be at least 2, got {0}")]
    BadOrder(usize),
    #[error("index tuples have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("{d}^{n} index tuples exceed the cap {cap}")]
    TooLarge { d: usize, n: usize, cap: u128 },
    #[error("replica trace has imaginary part {0:.3e}")]
    NotReal(f64),
    #[error("states live on different bases")]
    BasisMismatch,
    #[error("need {expected} states, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error(transparent)]
    Entangle(#[from] EntangleError),
    #[error(transparent)]
    Excitation(#[from] ExcitationError),
    #[error(transparent)]
    Qm(#[from] QmError),
}

/// `⟨j|E^(n)|i⟩`.
pub fn e_matrix_element(bra: &[usize], ket: &[usize]) -> Result<u8, ReplicaError> {
    if bra.len() != ket.len() {
        return Err(ReplicaError::LengthMismatch(bra.len(), ket.len()));
    }
    let n = ket.len();
    Ok((0..n).all(|k| bra[k] == ket[(k + 1) % n]) as u8)
}

/// Dense `d^n × d^n` matrix of `E^(n)`; index tuples are read with the first
/// replica as the most significant digit.
pub fn dense_e_matrix(d: usize, n: usize) -> DMatrix<f64> {
    let size = d.pow(n as u32);
    let digits = |mut v: usize| {
        let mut out = vec![0; n];
        for k in (0..n).rev() {
            out[k] = v % d;
            v /= d;
        }
        out
    };
    DMatrix::from_fn(size, size, |r, c| {
        e_matrix_element(&digits(r), &digits(c)).expect("equal lengths") as f64
    })
}

/// `Tr[ρ^{⊗n} E^(n)] = Σ_{i} Π_k ρ[i_k, i_{k+1}]`.
pub fn replica_trace(rho: &DensityMatrix, n: usize) -> Result<f64, ReplicaError> {
    replica_trace_with_cap(rho, n, DEFAULT_REPLICA_CAP)
}

pub fn replica_trace_with_cap(rho: &DensityMatrix, n: usize, cap: u128) -> Result<f64, ReplicaError> {
    let z = replica_trace_complex(rho.matrix(), n, cap)?;
    if z.im.abs() > IMAG_TOL {
        return Err(ReplicaError::NotReal(z.im));
    }
    Ok(z.re)
}

pub fn replica_trace_complex(m: &DMatrix<C64>, n: usize, cap: u128) -> Result<C64, ReplicaError> {
    if n < 2 {
        return Err(ReplicaError::BadOrder(n));
    }
    let d = m.nrows();
    let tuples = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if tuples > cap {
        return Err(ReplicaError::TooLarge { d, n, cap });
    }
    let rows: Vec<Vec<(usize, C64)>> = (0..d)
        .map(|i| (0..d).filter(|&j| m[(i, j)] != C64::new(0.0, 0.0)).map(|j| (j, m[(i, j)])).collect())
        .collect();

    fn walk(rows: &[Vec<(usize, C64)>], m: &DMatrix<C64>, start: usize, at: usize, left: usize, acc: C64) -> C64 {
        if left == 1 {
            return acc * m[(at, start)];
        }
        rows[at]
            .iter()
            .map(|&(next, v)| walk(rows, m, start, next, left - 1, acc * v))
            .sum()
    }
    Ok((0..d).map(|i| walk(&rows, m, i, i, n, C64::new(1.0, 0.0))).sum())
}

/// Both sides of `⟨ψ_1…ψ_n|E_Ω|χ_1…χ_n⟩ = ⟨χ_2…χ_n χ_1|E_{Ω_c}|ψ_1…ψ_n⟩*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PPropertyCheck {
    pub lhs: C64,
    pub rhs: C64,
    pub residual: f64,
}

/// Schmidt matrices `X[r, c]` of several states over shared region and
/// complement label sets.
fn schmidt_matrices(states: &[&StateVector], region: &Region) -> Vec<DMatrix<C64>> {
    let modes = region.modes();
    let parts: Vec<Vec<(u64, u64, C64)>> = states.iter().map(|s| split_state(s, &modes)).collect();
    let mut rows = BTreeMap::new();
    let mut cols = BTreeMap::new();
    for (r, c, _) in parts.iter().flatten() {
        rows.insert(*r, 0);
        cols.insert(*c, 0);
    }
    for (i, v) in rows.values_mut().enumerate() {
        *v = i;
    }
    for (i, v) in cols.values_mut().enumerate() {
        *v = i;
    }
    parts
        .iter()
        .map(|p| {
            let mut x = DMatrix::zeros(rows.len(), cols.len());
            for (r, c, a) in p {
                x[(rows[r], cols[c])] += a;
            }
            x
        })
        .collect()
}

/// Evaluates both sides of the Ω ↔ Ω_c exchange property by explicit
/// contraction.
pub fn check_pproperty(psis: &[StateVector], chis: &[StateVector], region: &Region, n: usize) -> Result<PPropertyCheck, ReplicaError> {
    if n < 2 {
        return Err(ReplicaError::BadOrder(n));
    }
    for list in [psis, chis] {
        if list.len() != n {
            return Err(ReplicaError::WrongCount { expected: n, got: list.len() });
        }
    }
    let first = &psis[0];
    if psis.iter().chain(chis).any(|s| !s.same_basis_as(first)) {
        return Err(ReplicaError::BasisMismatch);
    }
    let all: Vec<&StateVector> = psis.iter().chain(chis).collect();
    let x = schmidt_matrices(&all, region);
    let (psi, chi) = x.split_at(n);

    // Region side: Σ Π_k ψ_k*[r_{k+1}, c_k] χ_k[r_k, c_k] = Tr Π_k (χ_k ψ_k†).
    let dr = psi[0].nrows();
    let mut lhs_m = DMatrix::<C64>::identity(dr, dr);
    for k in 0..n {
        lhs_m *= &chi[k] * psi[k].adjoint();
    }
    // Complement side with bra (χ_2,…,χ_n,χ_1):
    // Σ Π_k χ_{k+1}*[r_k, c_{k+1}] ψ_k[r_k, c_k] = Tr Π_k (ψ_k^T χ̄_{k+1}).
    let dc = psi[0].ncols();
    let mut rhs_m = DMatrix::<C64>::identity(dc, dc);
    for k in 0..n {
        rhs_m *= psi[k].transpose() * chi[(k + 1) % n].conjugate();
    }
    let lhs = lhs_m.trace();
    let rhs = rhs_m.trace().conj();
    Ok(PPropertyCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).norm(),
    })
}

/// Full `R_n` against the factorized leading-order prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingDecomposition {
    pub order: usize,
    pub full: f64,
    pub vacuum: f64,
    pub qm: f64,
    /// `N·√(Σ|a|²)`.
    pub normalization_ratio: f64,
    /// `R_n(0) · R_n^QM · (N·√(Σ|a|²))^{2n}`.
    pub leading: f64,
    /// `full − leading`.
    pub difference: f64,
}

/// Decomposition from an already built state.
pub fn leading_from_parts(
    built: &BuiltState,
    recipe: &StateRecipe,
    vacuum: &StateVector,
    region: &Region,
    reference: &QmState,
    n: usize,
) -> Result<LeadingDecomposition, ReplicaError> {
    if n < 2 {
        return Err(ReplicaError::BadOrder(n));
    }
    let analysis = analyze_region(&built.state, vacuum, region, &[n as f64], DEFAULT_REGION_CAP)?;
    let entry = &analysis.report.renyi[0];
    let qm = qm_renyi(reference, n as f64)?.power_sum;
    Ok(leading_decomposition(n, entry.r_state, entry.r_vacuum, qm, built.normalization_ratio(recipe)))
}

/// Assembles the decomposition from the power sums `R_n(Ψ)`, `R_n(0)`,
/// `R_n^QM` and the ratio `N·√(Σ|a|²)`.
pub fn leading_decomposition(n: usize, full: f64, vacuum: f64, qm: f64, ratio: f64) -> LeadingDecomposition {
    let leading = vacuum * qm * ratio.powi(2 * n as i32);
    LeadingDecomposition {
        order: n,
        full,
        vacuum,
        qm,
        normalization_ratio: ratio,
        leading,
        difference: full - leading,
    }
}

/// Builds the state of `recipe` on `vacuum` and decomposes its `R_n`.
pub fn leading_vs_full(
    recipe: &StateRecipe,
    vacuum: &StateVector,
    region: &Region,
    reference: &QmState,
    n: usize,
) -> Result<LeadingDecomposition, ReplicaError> {
    let built = build_state(recipe, vacuum)?;
    leading_from_parts(&built, recipe, vacuum, region, reference, n)
}
