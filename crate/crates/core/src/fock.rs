//! Occupation-number bases and ladder-operator actions.
//!
//! Basis states are encoded as a `u64` key holding the occupation tuple
//! `(n_0, …, n_{M-1})` as digits in radix `n_max + 1` (radix 2 for
//! fermions), mode 0 being the most significant digit. Numeric order of
//! keys is therefore lexicographic order of occupation tuples, and that is
//! the enumeration order of every basis.
//!
//! Fermionic operators follow the Jordan–Wigner convention with ascending
//! mode strings: `c†_m |b⟩ = (-1)^{Σ_{k<m} b_k} |b + e_m⟩`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Default cap on the number of amplitudes a basis may hold.
pub const DEFAULT_DIM_CAP: usize = 1 << 26;

/// Environment variable overriding [`DEFAULT_DIM_CAP`].
pub const DIM_CAP_ENV: &str = "QENT_DIM_CAP";

/// Amplitude-count cap, honouring `QENT_DIM_CAP` when it parses.
pub fn dim_cap() -> usize {
    std::env::var(DIM_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_DIM_CAP)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("basis too large: {dim} amplitudes exceeds cap {cap}")]
    TooLarge { dim: u128, cap: usize },
    #[error("invalid basis request: {0}")]
    InvalidBasis(String),
    #[error("states live on different bases")]
    BasisMismatch,
    #[error("amplitude vector has length {got}, basis dimension is {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("occupation cutoff exceeded on mode {mode} (discarded weight {leakage:.3e})")]
    CutoffViolation { mode: usize, leakage: f64 },
    #[error("state has zero norm")]
    ZeroNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Fermi,
    Bose,
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistics::Fermi => write!(f, "fermi"),
            Statistics::Bose => write!(f, "bose"),
        }
    }
}

/// Which band a mode belongs to, where a model distinguishes bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Lower,
    Upper,
}

/// A lattice mode. The linear mode index is site-major, then species:
/// `index = site * species_count + species`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeLabel {
    pub site: usize,
    pub species: usize,
    pub band: Option<Band>,
}

impl ModeLabel {
    pub fn new(site: usize, species: usize) -> Self {
        ModeLabel {
            site,
            species,
            band: None,
        }
    }

    pub fn index(&self, species_count: usize) -> usize {
        debug_assert!(self.species < species_count);
        self.site * species_count + self.species
    }

    pub fn from_index(index: usize, species_count: usize) -> Self {
        ModeLabel::new(index / species_count, index % species_count)
    }
}

/// An occupation-number basis, possibly restricted to a set of total
/// particle numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    statistics: Statistics,
    modes: usize,
    n_max: usize,
    sectors: Option<Vec<usize>>,
    /// Sorted keys when restricted to sectors; `None` means index == key.
    keys: Option<Vec<u64>>,
    radix: u64,
    strides: Vec<u64>,
}

fn check_cap(dim: u128, cap: usize) -> Result<(), FockError> {
    if dim > cap as u128 {
        Err(FockError::TooLarge { dim, cap })
    } else {
        Ok(())
    }
}

/// Number of length-`len` tuples with digits in `[0, max]` summing to `total`.
fn count_tuples(len: usize, max: usize, total: usize) -> u128 {
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for _ in 0..len {
        let mut next = vec![0u128; total + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for d in 0..=max.min(total - s) {
                next[s + d] = next[s + d].saturating_add(w);
            }
        }
        ways = next;
    }
    ways[total]
}

/// Enumerate a basis using the cap from [`dim_cap`].
pub fn enumerate_basis(
    statistics: Statistics,
    modes: usize,
    n_max: Option<usize>,
    sectors: Option<&[usize]>,
) -> Result<FockBasis, FockError> {
    enumerate_basis_with_cap(statistics, modes, n_max, sectors, dim_cap())
}

pub fn enumerate_basis_with_cap(
    statistics: Statistics,
    modes: usize,
    n_max: Option<usize>,
    sectors: Option<&[usize]>,
    cap: usize,
) -> Result<FockBasis, FockError> {
    if modes == 0 {
        return Err(FockError::InvalidBasis("mode count must be at least 1".into()));
    }
    let n_max = match statistics {
        Statistics::Fermi => 1,
        Statistics::Bose => match n_max {
            Some(n) if n >= 1 => n,
            Some(_) => return Err(FockError::InvalidBasis("boson cutoff n_max must be >= 1".into())),
            None => return Err(FockError::InvalidBasis("boson basis requires n_max".into())),
        },
    };
    if statistics == Statistics::Fermi && modes > 64 {
        return Err(FockError::InvalidBasis(format!(
            "{modes} fermion modes do not fit a 64-bit occupation key"
        )));
    }
    let radix = (n_max + 1) as u64;
    let key_space = radix.checked_pow(modes as u32).ok_or_else(|| {
        FockError::TooLarge {
            dim: (radix as u128).saturating_pow(modes as u32),
            cap,
        }
    })?;
    let strides: Vec<u64> = (0..modes)
        .map(|m| radix.pow((modes - 1 - m) as u32))
        .collect();

    let (sectors, keys) = match sectors {
        None => {
            check_cap(key_space as u128, cap)?;
            (None, None)
        }
        Some(list) => {
            let mut list: Vec<usize> = list.to_vec();
            list.sort_unstable();
            list.dedup();
            if list.is_empty() {
                return Err(FockError::InvalidBasis("empty sector list".into()));
            }
            let max_total = modes * n_max;
            if let Some(&bad) = list.iter().find(|&&n| n > max_total) {
                return Err(FockError::InvalidBasis(format!(
                    "sector {bad} exceeds the maximum particle number {max_total}"
                )));
            }
            let dim: u128 = list
                .iter()
                .map(|&n| count_tuples(modes, n_max, n))
                .fold(0u128, |a, b| a.saturating_add(b));
            check_cap(dim, cap)?;
            let mut keys = Vec::with_capacity(dim as usize);
            for &n in &list {
                push_sector_keys(&mut keys, modes, n_max, n, &strides);
            }
            keys.sort_unstable();
            (Some(list), Some(keys))
        }
    };

    Ok(FockBasis {
        statistics,
        modes,
        n_max,
        sectors,
        keys,
        radix,
        strides,
    })
}

fn push_sector_keys(out: &mut Vec<u64>, modes: usize, n_max: usize, total: usize, strides: &[u64]) {
    fn rec(
        out: &mut Vec<u64>,
        m: usize,
        remaining: usize,
        key: u64,
        n_max: usize,
        strides: &[u64],
    ) {
        let modes = strides.len();
        if m == modes {
            if remaining == 0 {
                out.push(key);
            }
            return;
        }
        let capacity_after = (modes - m - 1) * n_max;
        let lo = remaining.saturating_sub(capacity_after);
        let hi = n_max.min(remaining);
        for d in lo..=hi {
            rec(out, m + 1, remaining - d, key + d as u64 * strides[m], n_max, strides);
        }
    }
    debug_assert_eq!(strides.len(), modes);
    rec(out, 0, total, 0, n_max, strides);
}

impl FockBasis {
    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Occupation cutoff; 1 for fermions.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn sectors(&self) -> Option<&[usize]> {
        self.sectors.as_deref()
    }

    pub fn dim(&self) -> usize {
        match &self.keys {
            Some(k) => k.len(),
            None => self.radix.pow(self.modes as u32) as usize,
        }
    }

    pub fn key(&self, index: usize) -> u64 {
        match &self.keys {
            Some(k) => k[index],
            None => index as u64,
        }
    }

    pub fn index_of(&self, key: u64) -> Option<usize> {
        match &self.keys {
            Some(k) => k.binary_search(&key).ok(),
            None => {
                if key < self.radix.pow(self.modes as u32) {
                    Some(key as usize)
                } else {
                    None
                }
            }
        }
    }

    pub fn occupation(&self, key: u64, mode: usize) -> usize {
        ((key / self.strides[mode]) % self.radix) as usize
    }

    pub fn occupations(&self, key: u64) -> Vec<usize> {
        (0..self.modes).map(|m| self.occupation(key, m)).collect()
    }

    pub fn key_of(&self, occupations: &[usize]) -> Option<u64> {
        if occupations.len() != self.modes || occupations.iter().any(|&n| n > self.n_max) {
            return None;
        }
        Some(
            occupations
                .iter()
                .zip(&self.strides)
                .map(|(&n, &s)| n as u64 * s)
                .sum(),
        )
    }

    pub fn stride(&self, mode: usize) -> u64 {
        self.strides[mode]
    }

    pub fn particle_number(&self, key: u64) -> usize {
        match self.statistics {
            Statistics::Fermi => key.count_ones() as usize,
            Statistics::Bose => (0..self.modes).map(|m| self.occupation(key, m)).sum(),
        }
    }

    /// `(-1)^{Σ_{k<mode} n_k}` for fermions, `+1` for bosons.
    pub fn jw_sign(&self, key: u64, mode: usize) -> f64 {
        match self.statistics {
            Statistics::Bose => 1.0,
            Statistics::Fermi => {
                let shift = self.modes - mode;
                let below = if shift >= 64 { 0 } else { key >> shift };
                if below.count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Renders a key as an occupation string, e.g. `0110` or `0,2,1`.
    pub fn label(&self, key: u64) -> String {
        let occ = self.occupations(key);
        match self.statistics {
            Statistics::Fermi => occ.iter().map(|n| char::from(b'0' + *n as u8)).collect(),
            Statistics::Bose => occ
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
        }
    }
}

/// Complex amplitudes over a shared basis.
#[derive(Debug, Clone)]
pub struct StateVector {
    basis: Arc<FockBasis>,
    amps: Vec<C64>,
    norm: f64,
}

fn l2(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

impl StateVector {
    pub fn new(basis: Arc<FockBasis>, amps: Vec<C64>) -> Result<Self, FockError> {
        if amps.len() != basis.dim() {
            return Err(FockError::LengthMismatch {
                expected: basis.dim(),
                got: amps.len(),
            });
        }
        let norm = l2(&amps);
        Ok(StateVector { basis, amps, norm })
    }

    pub fn zeros(basis: Arc<FockBasis>) -> Self {
        let amps = vec![C64::new(0.0, 0.0); basis.dim()];
        StateVector {
            basis,
            amps,
            norm: 0.0,
        }
    }

    /// The basis state with the given occupations, or `None` if it is not
    /// part of the basis.
    pub fn basis_state(basis: Arc<FockBasis>, occupations: &[usize]) -> Option<Self> {
        let idx = basis.key_of(occupations).and_then(|k| basis.index_of(k))?;
        let mut s = StateVector::zeros(basis);
        s.amps[idx] = C64::new(1.0, 0.0);
        s.norm = 1.0;
        Some(s)
    }

    /// The all-empty occupation state.
    pub fn empty(basis: Arc<FockBasis>) -> Option<Self> {
        let occ = vec![0; basis.modes()];
        StateVector::basis_state(basis, &occ)
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn amplitude_of(&self, occupations: &[usize]) -> C64 {
        self.basis
            .key_of(occupations)
            .and_then(|k| self.basis.index_of(k))
            .map(|i| self.amps[i])
            .unwrap_or_default()
    }

    pub fn normalized(&self) -> Result<Self, FockError> {
        if self.norm <= f64::MIN_POSITIVE {
            return Err(FockError::ZeroNorm);
        }
        Ok(self.scaled(C64::new(1.0 / self.norm, 0.0)))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let amps: Vec<C64> = self.amps.iter().map(|a| a * factor).collect();
        let norm = self.norm * factor.norm();
        StateVector {
            basis: self.basis.clone(),
            amps,
            norm,
        }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: C64, other: &StateVector) -> Result<Self, FockError> {
        same_basis(&self.basis, &other.basis)?;
        let amps: Vec<C64> = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a + factor * b)
            .collect();
        StateVector::new(self.basis.clone(), amps)
    }

    pub fn same_basis_as(&self, other: &StateVector) -> bool {
        same_basis(&self.basis, &other.basis).is_ok()
    }
}

fn same_basis(a: &Arc<FockBasis>, b: &Arc<FockBasis>) -> Result<(), FockError> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(FockError::BasisMismatch)
    }
}

/// Hermitian inner product `⟨u|v⟩`.
pub fn inner(u: &StateVector, v: &StateVector) -> Result<C64, FockError> {
    same_basis(&u.basis, &v.basis)?;
    Ok(u.amps
        .iter()
        .zip(&v.amps)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// Result of a ladder-operator application: the new state and the squared
/// norm of components discarded because they left the basis (boson cutoff
/// or particle-number sector).
#[derive(Debug, Clone)]
pub struct Ladder {
    pub state: StateVector,
    pub leakage: f64,
}

impl Ladder {
    pub fn strict(self, mode: usize) -> Result<StateVector, FockError> {
        if self.leakage > 0.0 {
            Err(FockError::CutoffViolation {
                mode,
                leakage: self.leakage,
            })
        } else {
            Ok(self.state)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutoffPolicy {
    /// Drop out-of-basis components and report their weight.
    #[default]
    Truncate,
    /// Treat any out-of-basis component as an error.
    Strict,
}

/// Applies `Σ_m coeff_m · c†_m` (or `a†_m`).
pub fn apply_creation_sum(state: &StateVector, terms: &[(usize, C64)]) -> Ladder {
    apply_ladder_sum(state, terms, true)
}

/// Applies `Σ_m coeff_m · c_m` (or `a_m`).
pub fn apply_annihilation_sum(state: &StateVector, terms: &[(usize, C64)]) -> Ladder {
    apply_ladder_sum(state, terms, false)
}

pub fn apply_creation(state: &StateVector, mode: usize) -> Ladder {
    apply_ladder_sum(state, &[(mode, C64::new(1.0, 0.0))], true)
}

pub fn apply_annihilation(state: &StateVector, mode: usize) -> Ladder {
    apply_ladder_sum(state, &[(mode, C64::new(1.0, 0.0))], false)
}

pub fn apply_creation_with(
    state: &StateVector,
    mode: usize,
    policy: CutoffPolicy,
) -> Result<Ladder, FockError> {
    let out = apply_creation(state, mode);
    match policy {
        CutoffPolicy::Truncate => Ok(out),
        CutoffPolicy::Strict => out.strict(mode).map(|state| Ladder {
            state,
            leakage: 0.0,
        }),
    }
}

fn apply_ladder_sum(state: &StateVector, terms: &[(usize, C64)], create: bool) -> Ladder {
    let basis = &state.basis;
    for &(m, _) in terms {
        assert!(m < basis.modes, "mode {m} out of range for {} modes", basis.modes);
    }
    let mut out = vec![C64::new(0.0, 0.0); basis.dim()];
    // Lost components are accumulated per target key so that contributions
    // from different source states interfere before the norm is taken.
    let mut lost: std::collections::BTreeMap<u64, C64> = Default::default();
    for (idx, &amp) in state.amps.iter().enumerate() {
        if amp.re == 0.0 && amp.im == 0.0 {
            continue;
        }
        let key = basis.key(idx);
        for &(m, coeff) in terms {
            let n = basis.occupation(key, m);
            let (target, factor) = if create {
                if basis.statistics == Statistics::Fermi && n == 1 {
                    continue;
                }
                (key + basis.strides[m], ((n + 1) as f64).sqrt())
            } else {
                if n == 0 {
                    continue;
                }
                (key - basis.strides[m], (n as f64).sqrt())
            };
            let value = amp * coeff * (factor * basis.jw_sign(key, m));
            let in_range = !create || n < basis.n_max;
            match in_range.then(|| basis.index_of(target)).flatten() {
                Some(t) => out[t] += value,
                None => *lost.entry(target).or_default() += value,
            }
        }
    }
    let leakage = lost.values().map(|v| v.norm_sqr()).sum();
    let norm = l2(&out);
    Ladder {
        state: StateVector {
            basis: basis.clone(),
            amps: out,
            norm,
        },
        leakage,
    }
}

/// Dense matrix of the annihilation operator on `mode` in this basis.
/// Creation is its adjoint.
pub fn dense_annihilation(basis: &Arc<FockBasis>, mode: usize) -> DMatrix<C64> {
    let dim = basis.dim();
    let mut mat = DMatrix::<C64>::zeros(dim, dim);
    for col in 0..dim {
        let mut e = StateVector::zeros(basis.clone());
        e.amps[col] = C64::new(1.0, 0.0);
        e.norm = 1.0;
        let out = apply_annihilation(&e, mode).state;
        for (row, v) in out.amps.iter().enumerate() {
            mat[(row, col)] = *v;
        }
    }
    mat
}

pub fn dense_creation(basis: &Arc<FockBasis>, mode: usize) -> DMatrix<C64> {
    dense_annihilation(basis, mode).adjoint()
}

/// Outcome of the randomized commutator/anticommutator expansion checks.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IdentityReport {
    pub trials: usize,
    /// Largest residual of `[A, B_1…B_n] = Σ_p (-1)^{p-1} B_1…{A,B_p}…B_n` over even `n`.
    pub max_residual_even: f64,
    /// Largest residual of the anticommutator form over odd `n`.
    pub max_residual_odd: f64,
    /// Largest residual of `[A,B] = {A,B} - 2BA`.
    pub max_residual_trivial: f64,
    /// Largest deviation from the canonical (anti)commutation relations.
    pub max_car_residual: f64,
    pub even_trials: usize,
    pub odd_trials: usize,
    pub failures: Vec<String>,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.max_residual_even
            .max(self.max_residual_odd)
            .max(self.max_residual_trivial)
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Right-hand side of the (anti)commutator expansion:
/// `Σ_p (-1)^{p-1} B_1…B_{p-1} {A,B_p} B_{p+1}…B_n`.
pub fn expansion_rhs(a: &DMatrix<C64>, bs: &[DMatrix<C64>]) -> DMatrix<C64> {
    let dim = a.nrows();
    let id = DMatrix::<C64>::identity(dim, dim);
    let mut total = DMatrix::<C64>::zeros(dim, dim);
    for p in 0..bs.len() {
        let left = bs[..p].iter().fold(id.clone(), |acc, b| acc * b);
        let right = bs[p + 1..].iter().fold(id.clone(), |acc, b| acc * b);
        let anti = a * &bs[p] + &bs[p] * a;
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        total += (left * anti * right) * C64::new(sign, 0.0);
    }
    total
}

/// Verifies the commutator (even string length) and anticommutator (odd
/// string length) expansions on random strings of fermionic ladder
/// operators realized as dense matrices, together with the canonical
/// anticommutation relations. Intended for `M ≤ 6`.
pub fn check_operator_identities(basis: &Arc<FockBasis>, trials: usize, seed: u64) -> IdentityReport {
    const TOL: f64 = 1e-12;
    let modes = basis.modes();
    let dim = basis.dim();
    let annihilators: Vec<DMatrix<C64>> = (0..modes).map(|m| dense_annihilation(basis, m)).collect();
    let creators: Vec<DMatrix<C64>> = annihilators.iter().map(|c| c.adjoint()).collect();
    let mut report = IdentityReport {
        trials,
        ..Default::default()
    };

    let id = DMatrix::<C64>::identity(dim, dim);
    for m in 0..modes {
        for k in 0..modes {
            let (car, zero) = match basis.statistics() {
                Statistics::Fermi => (
                    &annihilators[m] * &creators[k] + &creators[k] * &annihilators[m],
                    &annihilators[m] * &annihilators[k] + &annihilators[k] * &annihilators[m],
                ),
                Statistics::Bose => (
                    &annihilators[m] * &creators[k] - &creators[k] * &annihilators[m],
                    &annihilators[m] * &annihilators[k] - &annihilators[k] * &annihilators[m],
                ),
            };
            let expected = if m == k { id.clone() } else { DMatrix::zeros(dim, dim) };
            let mut diff = car - expected;
            if basis.statistics() == Statistics::Bose {
                // Only rows/cols below the cutoff on mode m are canonical.
                for idx in 0..dim {
                    if basis.occupation(basis.key(idx), m) >= basis.n_max()
                        || basis.occupation(basis.key(idx), k) >= basis.n_max()
                    {
                        diff.row_mut(idx).fill(C64::new(0.0, 0.0));
                        diff.column_mut(idx).fill(C64::new(0.0, 0.0));
                    }
                }
            }
            let r = max_abs(&diff).max(max_abs(&zero));
            report.max_car_residual = report.max_car_residual.max(r);
        }
    }
    if report.max_car_residual > TOL {
        report
            .failures
            .push(format!("canonical relations residual {:.3e}", report.max_car_residual));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng| -> (String, DMatrix<C64>) {
        let m = rng.gen_range(0..modes);
        if rng.gen_bool(0.5) {
            (format!("c{m}"), annihilators[m].clone())
        } else {
            (format!("c†{m}"), creators[m].clone())
        }
    };

    for t in 0..trials {
        let (a_name, a) = pick(&mut rng);
        let (_, b) = pick(&mut rng);
        let trivial = (&a * &b - &b * &a) - ((&a * &b + &b * &a) - (&b * &a) * C64::new(2.0, 0.0));
        report.max_residual_trivial = report.max_residual_trivial.max(max_abs(&trivial));

        let len = 1 + t % 4;
        let picks: Vec<(String, DMatrix<C64>)> = (0..len).map(|_| pick(&mut rng)).collect();
        let bs: Vec<DMatrix<C64>> = picks.iter().map(|p| p.1.clone()).collect();
        let product = bs.iter().fold(id.clone(), |acc, b| acc * b);
        let rhs = expansion_rhs(&a, &bs);
        let lhs = if len % 2 == 0 {
            &a * &product - &product * &a
        } else {
            &a * &product + &product * &a
        };
        let r = max_abs(&(lhs - rhs));
        if len % 2 == 0 {
            report.even_trials += 1;
            report.max_residual_even = report.max_residual_even.max(r);
        } else {
            report.odd_trials += 1;
            report.max_residual_odd = report.max_residual_odd.max(r);
        }
        if r > TOL {
            let names: Vec<&str> = picks.iter().map(|p| p.0.as_str()).collect();
            report
                .failures
                .push(format!("trial {t}: A={a_name} B=[{}] residual {r:.3e}", names.join(" ")));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn fermi(m: usize) -> Arc<FockBasis> {
        Arc::new(enumerate_basis(Statistics::Fermi, m, None, None).unwrap())
    }

    #[test]
    fn basis_dimensions() {
        let b = fermi(2);
        assert_eq!(b.dim(), 4);
        let labels: Vec<String> = (0..4).map(|i| b.label(b.key(i))).collect();
        assert_eq!(labels, ["00", "01", "10", "11"]);

        let b = enumerate_basis(Statistics::Bose, 2, Some(1), None).unwrap();
        assert_eq!(b.dim(), 4);

        let b = enumerate_basis(Statistics::Fermi, 4, None, Some(&[2])).unwrap();
        assert_eq!(b.dim(), 6);
        let labels: Vec<String> = (0..6).map(|i| b.label(b.key(i))).collect();
        assert_eq!(labels, ["0011", "0101", "0110", "1001", "1010", "1100"]);
    }

    #[test]
    fn bose_sector_enumeration_is_lexicographic() {
        let b = enumerate_basis(Statistics::Bose, 3, Some(2), Some(&[2])).unwrap();
        let labels: Vec<String> = (0..b.dim()).map(|i| b.label(b.key(i))).collect();
        assert_eq!(labels, ["0,0,2", "0,1,1", "0,2,0", "1,0,1", "1,1,0", "2,0,0"]);
        let b = enumerate_basis(Statistics::Bose, 3, Some(2), Some(&[0, 1])).unwrap();
        assert_eq!(b.dim(), 4);
    }

    #[test]
    fn basis_errors() {
        assert!(matches!(
            enumerate_basis_with_cap(Statistics::Fermi, 30, None, None, 1 << 26),
            Err(FockError::TooLarge { .. })
        ));
        assert!(enumerate_basis(Statistics::Fermi, 0, None, None).is_err());
        assert!(enumerate_basis(Statistics::Bose, 2, Some(0), None).is_err());
        assert!(enumerate_basis(Statistics::Bose, 2, None, None).is_err());
        assert!(enumerate_basis(Statistics::Fermi, 3, None, Some(&[4])).is_err());
        // Large mode count is fine in a small sector.
        let b = enumerate_basis(Statistics::Fermi, 48, None, Some(&[0, 1, 2])).unwrap();
        assert_eq!(b.dim(), 1 + 48 + 48 * 47 / 2);
    }

    #[test]
    fn fermion_creation_signs() {
        let b = fermi(2);
        let s10 = StateVector::basis_state(b.clone(), &[1, 0]).unwrap();
        let out = apply_creation(&s10, 1);
        assert_eq!(out.leakage, 0.0);
        assert_eq!(out.state.amplitude_of(&[1, 1]), c(-1.0));
        assert!((out.state.norm() - 1.0).abs() < 1e-15);

        let out = apply_creation(&s10, 0);
        assert_eq!(out.state.norm(), 0.0);
        assert_eq!(out.leakage, 0.0);

        let s11 = StateVector::basis_state(b.clone(), &[1, 1]).unwrap();
        let out = apply_annihilation(&s11, 1).state;
        assert_eq!(out.amplitude_of(&[1, 0]), c(-1.0));

        let vac = StateVector::empty(b).unwrap();
        assert_eq!(apply_annihilation(&vac, 0).state.norm(), 0.0);
    }

    #[test]
    fn boson_ladder() {
        let b = Arc::new(enumerate_basis(Statistics::Bose, 1, Some(2), None).unwrap());
        let one = StateVector::basis_state(b.clone(), &[1]).unwrap();
        let up = apply_creation(&one, 0);
        assert!((up.state.amplitude_of(&[2]) - c(2f64.sqrt())).norm() < 1e-15);
        assert_eq!(up.leakage, 0.0);

        let two = StateVector::basis_state(b.clone(), &[2]).unwrap();
        let down = apply_annihilation(&two, 0).state;
        assert!((down.amplitude_of(&[1]) - c(2f64.sqrt())).norm() < 1e-15);

        // a† on |2⟩ leaves the truncated space: weight 3 is reported.
        let over = apply_creation(&two, 0);
        assert_eq!(over.state.norm(), 0.0);
        assert!((over.leakage - 3.0).abs() < 1e-12);
        assert!(matches!(
            apply_creation_with(&two, 0, CutoffPolicy::Strict),
            Err(FockError::CutoffViolation { mode: 0, .. })
        ));
    }

    #[test]
    fn sector_exit_counts_as_leakage() {
        let b = Arc::new(enumerate_basis(Statistics::Fermi, 3, None, Some(&[0])).unwrap());
        let vac = StateVector::empty(b).unwrap();
        let out = apply_creation(&vac, 1);
        assert_eq!(out.state.norm(), 0.0);
        assert!((out.leakage - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inner_products() {
        let b = fermi(2);
        let s00 = StateVector::basis_state(b.clone(), &[0, 0]).unwrap();
        let s11 = StateVector::basis_state(b.clone(), &[1, 1]).unwrap();
        assert_eq!(inner(&s00, &s11).unwrap(), c(0.0));
        assert_eq!(inner(&s11, &s11).unwrap(), c(1.0));

        let b1 = fermi(1);
        let one = StateVector::basis_state(b1.clone(), &[1]).unwrap();
        let n = apply_creation(&apply_annihilation(&one, 0).state, 0).state;
        assert_eq!(inner(&one, &n).unwrap(), c(1.0));

        let other = fermi(3);
        let v = StateVector::empty(other).unwrap();
        assert_eq!(inner(&s00, &v), Err(FockError::BasisMismatch));
    }

    #[test]
    fn ascending_creation_builds_positive_basis_state() {
        let b = fermi(5);
        let occ = [1, 0, 1, 1, 0];
        let mut s = StateVector::empty(b.clone()).unwrap();
        // The product c†_0 c†_2 c†_3 |0⟩ applies the highest mode first.
        for m in [3, 2, 0] {
            s = apply_creation(&s, m).state;
        }
        assert_eq!(s.amplitude_of(&occ), c(1.0));
    }

    #[test]
    fn creation_is_adjoint_of_annihilation() {
        for basis in [
            fermi(3),
            Arc::new(enumerate_basis(Statistics::Bose, 2, Some(3), None).unwrap()),
        ] {
            for m in 0..basis.modes() {
                let a = dense_annihilation(&basis, m);
                let mut cd = DMatrix::<C64>::zeros(basis.dim(), basis.dim());
                for col in 0..basis.dim() {
                    let mut e = StateVector::zeros(basis.clone());
                    e.amps[col] = c(1.0);
                    let out = apply_creation(&e, m).state;
                    for (row, v) in out.amplitudes().iter().enumerate() {
                        cd[(row, col)] = *v;
                    }
                }
                assert!(max_abs(&(cd - a.adjoint())) < 1e-15);
            }
        }
    }

    #[test]
    fn canonical_anticommutation() {
        let report = check_operator_identities(&fermi(4), 0, 1);
        assert!(report.max_car_residual < 1e-12);
        let bose = Arc::new(enumerate_basis(Statistics::Bose, 2, Some(3), None).unwrap());
        let report = check_operator_identities(&bose, 0, 1);
        assert!(report.max_car_residual < 1e-12, "{report:?}");
    }

    #[test]
    fn operator_identities_small() {
        let report = check_operator_identities(&fermi(2), 40, 7);
        assert_eq!(report.max_residual_trivial, 0.0);
        assert!(report.max_residual() < 1e-12, "{:?}", report.failures);
        assert!(report.even_trials > 0 && report.odd_trials > 0);
        assert!(report.failures.is_empty());
    }
}
