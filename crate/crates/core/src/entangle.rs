//! Reduced density matrices of spatial regions, entropy functionals and
//! vacuum subtraction.
//!
//! Partial traces are taken in the Jordan–Wigner occupation basis after
//! moving every region mode in front of the complement modes. The
//! reordering sign of a basis state is `(-1)^P` with `P` the number of
//! (complement, region) occupied pairs whose complement mode precedes the
//! region mode. Only region configurations that actually occur in the state
//! are kept as rows, so the stored matrix is the support block of `ρ_Ω`;
//! omitted rows and columns are identically zero.
//!
//! All entropies are in nats.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{StateVector, Statistics, C64};
use crate::linalg;

/// Eigenvalues below this are dropped before taking logarithms.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Eigenvalues down to `-NEGATIVITY_TOL` are clipped to zero.
pub const NEGATIVITY_TOL: f64 = 1e-10;
/// Default cap on the number of region configurations kept in `ρ_Ω`.
pub const DEFAULT_REGION_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntangleError {
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("reduced density matrix needs {dim} region states, cap is {cap}")]
    RegionTooLarge { dim: usize, cap: usize },
    #[error("density matrix eigenvalue {0:.3e} is negative beyond tolerance")]
    NegativeEigenvalue(f64),
    #[error("eigensolver returned a non-finite value")]
    NonFinite,
    #[error("density matrix invariant violated: {0}")]
    Invalid(String),
    #[error("Rényi order must be positive, got {0}")]
    BadOrder(f64),
    #[error("every eigenvalue lies below the floor")]
    EmptySpectrum,
    #[error("states live on different bases")]
    BasisMismatch,
}

/// A set of lattice sites; the region contains every species on them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    sites: Vec<usize>,
    total_sites: usize,
    species: usize,
}

impl Region {
    pub fn new(sites: &[usize], total_sites: usize, species: usize) -> Result<Self, EntangleError> {
        let mut sites = sites.to_vec();
        sites.sort_unstable();
        sites.dedup();
        if sites.is_empty() {
            return Err(EntangleError::InvalidRegion("region is empty".into()));
        }
        if let Some(&bad) = sites.iter().find(|&&s| s >= total_sites) {
            return Err(EntangleError::InvalidRegion(format!(
                "site {bad} outside a chain of {total_sites} sites"
            )));
        }
        if sites.len() == total_sites {
            return Err(EntangleError::InvalidRegion(
                "region must be a proper subset of the chain".into(),
            ));
        }
        if species == 0 {
            return Err(EntangleError::InvalidRegion("species count must be positive".into()));
        }
        Ok(Region {
            sites,
            total_sites,
            species,
        })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn total_sites(&self) -> usize {
        self.total_sites
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn contains_site(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn complement(&self) -> Region {
        Region {
            sites: (0..self.total_sites).filter(|s| !self.contains_site(*s)).collect(),
            total_sites: self.total_sites,
            species: self.species,
        }
    }

    /// Region mode indices, ascending.
    pub fn modes(&self) -> Vec<usize> {
        self.sites
            .iter()
            .flat_map(|&x| (0..self.species).map(move |s| x * self.species + s))
            .collect()
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix over a set of
/// labelled basis states.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
    /// Occupation key of each row, in region-local encoding.
    keys: Vec<u64>,
    region_modes: Vec<usize>,
    statistics: Option<Statistics>,
    radix: u64,
}

impl DensityMatrix {
    /// Wraps a plain matrix whose rows are labelled `0, 1, …`.
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self, EntangleError> {
        let keys = (0..matrix.nrows() as u64).collect();
        let rho = DensityMatrix {
            keys,
            region_modes: Vec::new(),
            statistics: None,
            radix: matrix.nrows().max(2) as u64,
            matrix,
        };
        rho.check_invariants()?;
        Ok(rho)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn keys(&self) -> &[u64] {
        &self.keys
    }

    pub fn region_modes(&self) -> &[usize] {
        &self.region_modes
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Occupations of the region modes for row `row`.
    pub fn row_occupations(&self, row: usize) -> Vec<usize> {
        let k = self.region_modes.len();
        let key = self.keys[row];
        (0..k)
            .map(|i| ((key / self.radix.pow((k - 1 - i) as u32)) % self.radix) as usize)
            .collect()
    }

    /// Whether `ρ` couples region states of different fermion parity.
    pub fn mixes_parity(&self) -> bool {
        if self.statistics != Some(Statistics::Fermi) {
            return false;
        }
        let parity: Vec<u32> = self.keys.iter().map(|k| k.count_ones() % 2).collect();
        (0..self.dim()).any(|r| {
            (0..self.dim()).any(|c| parity[r] != parity[c] && self.matrix[(r, c)].norm() > 1e-12)
        })
    }

    pub fn check_invariants(&self) -> Result<(), EntangleError> {
        let defect = linalg::hermitian_defect(&self.matrix);
        if defect > 1e-12 {
            return Err(EntangleError::Invalid(format!("not Hermitian ({defect:.3e})")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(EntangleError::Invalid(format!("trace {tr}")));
        }
        let min = linalg::eigvalsh(&self.matrix).first().copied().unwrap_or(0.0);
        if min < -NEGATIVITY_TOL {
            return Err(EntangleError::NegativeEigenvalue(min));
        }
        Ok(())
    }
}

/// Splits every basis state of `state` into (region key, complement key,
/// signed amplitude). Region and complement keys encode the occupations of
/// the respective modes in ascending mode order.
pub(crate) fn split_state(
    state: &StateVector,
    region_modes: &[usize],
) -> Vec<(u64, u64, C64)> {
    let basis = state.basis();
    let modes = basis.modes();
    let radix = basis.n_max() as u64 + 1;
    let in_region: Vec<bool> = (0..modes).map(|m| region_modes.binary_search(&m).is_ok()).collect();
    let fermi = basis.statistics() == Statistics::Fermi;
    let mut out = Vec::new();
    for (idx, &amp) in state.amplitudes().iter().enumerate() {
        if amp.re == 0.0 && amp.im == 0.0 {
            continue;
        }
        let key = basis.key(idx);
        let mut rkey = 0u64;
        let mut ckey = 0u64;
        let mut comp_before = 0u32;
        let mut swaps = 0u32;
        for (m, &inside) in in_region.iter().enumerate() {
            let n = basis.occupation(key, m) as u64;
            if inside {
                rkey = rkey * radix + n;
                if fermi && n == 1 {
                    swaps += comp_before;
                }
            } else {
                ckey = ckey * radix + n;
                if fermi && n == 1 {
                    comp_before += 1;
                }
            }
        }
        let value = if swaps % 2 == 1 { -amp } else { amp };
        out.push((rkey, ckey, value));
    }
    out
}

/// `ρ_Ω = Tr_{Ω_c} |ψ⟩⟨ψ|` with the default region cap.
pub fn reduced_density_matrix(state: &StateVector, region: &Region) -> Result<DensityMatrix, EntangleError> {
    reduced_density_matrix_with_cap(state, region, DEFAULT_REGION_CAP)
}

pub fn reduced_density_matrix_with_cap(
    state: &StateVector,
    region: &Region,
    cap: usize,
) -> Result<DensityMatrix, EntangleError> {
    let basis = state.basis();
    if region.total_sites() * region.species() != basis.modes() {
        return Err(EntangleError::InvalidRegion(format!(
            "region describes {} modes, state has {}",
            region.total_sites() * region.species(),
            basis.modes()
        )));
    }
    if (state.norm() - 1.0).abs() > 1e-8 {
        return Err(EntangleError::NotNormalized(state.norm()));
    }
    let region_modes = region.modes();
    let parts = split_state(state, &region_modes);

    let mut rows: BTreeMap<u64, usize> = BTreeMap::new();
    for (r, _, _) in &parts {
        rows.entry(*r).or_insert(0);
    }
    if rows.len() > cap {
        return Err(EntangleError::RegionTooLarge {
            dim: rows.len(),
            cap,
        });
    }
    for (i, v) in rows.values_mut().enumerate() {
        *v = i;
    }
    let mut groups: BTreeMap<u64, Vec<(usize, C64)>> = BTreeMap::new();
    for (r, c, a) in parts {
        groups.entry(c).or_default().push((rows[&r], a));
    }
    let d = rows.len();
    let mut rho = DMatrix::<C64>::zeros(d, d);
    for members in groups.values() {
        for &(i, a) in members {
            for &(j, b) in members {
                rho[(i, j)] += a * b.conj();
            }
        }
    }
    let out = DensityMatrix {
        matrix: rho,
        keys: rows.into_keys().collect(),
        region_modes,
        statistics: Some(basis.statistics()),
        radix: basis.n_max() as u64 + 1,
    };
    out.check_invariants()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Eigenvalues, descending, clipped at zero.
    pub eigenvalues: Vec<f64>,
    /// `-ln λ` for every eigenvalue above [`EIGEN_FLOOR`], ascending.
    pub entanglement: Vec<f64>,
}

pub fn spectrum(rho: &DensityMatrix) -> Result<Spectrum, EntangleError> {
    spectrum_of_matrix(rho.matrix())
}

pub(crate) fn spectrum_of_matrix(m: &DMatrix<C64>) -> Result<Spectrum, EntangleError> {
    let mut vals = linalg::eigvalsh(m);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(EntangleError::NonFinite);
    }
    vals.reverse();
    for v in vals.iter_mut() {
        if *v < -NEGATIVITY_TOL {
            return Err(EntangleError::NegativeEigenvalue(*v));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let entanglement = vals
        .iter()
        .filter(|&&l| l > EIGEN_FLOOR)
        .map(|l| -l.ln())
        .collect();
    Ok(Spectrum {
        eigenvalues: vals,
        entanglement,
    })
}

/// `S_n` together with the power sum `R_n = Σ λ^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Renyi {
    pub entropy: f64,
    pub power_sum: f64,
}

/// Rényi entropy of order `n`; order 1 is the von Neumann entropy (with
/// `R_1 = Σ λ`).
pub fn renyi_entropy(eigenvalues: &[f64], order: f64) -> Result<Renyi, EntangleError> {
    if !(order > 0.0) || !order.is_finite() {
        return Err(EntangleError::BadOrder(order));
    }
    let kept: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > EIGEN_FLOOR).collect();
    if kept.is_empty() {
        return Err(EntangleError::EmptySpectrum);
    }
    if order == 1.0 {
        return Ok(Renyi {
            entropy: von_neumann_entropy(&kept),
            power_sum: kept.iter().sum(),
        });
    }
    let power_sum: f64 = kept.iter().map(|l| l.powf(order)).sum();
    Ok(Renyi {
        entropy: power_sum.ln() / (1.0 - order) + 0.0,
        power_sum,
    })
}

/// `−Σ λ ln λ` with `0 ln 0 = 0`.
pub fn von_neumann_entropy(eigenvalues: &[f64]) -> f64 {
    0.0 - eigenvalues
        .iter()
        .filter(|&&l| l > EIGEN_FLOOR)
        .map(|l| l * l.ln())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEntry {
    pub order: f64,
    pub state: f64,
    pub vacuum: f64,
    pub subtracted: f64,
    pub r_state: f64,
    pub r_vacuum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VonNeumannEntry {
    pub state: f64,
    pub vacuum: f64,
    pub subtracted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub unit: String,
    pub region: Vec<usize>,
    pub orders: Vec<f64>,
    pub renyi: Vec<OrderEntry>,
    pub von_neumann: VonNeumannEntry,
    pub spectrum_state: Vec<f64>,
    pub spectrum_vacuum: Vec<f64>,
    pub rank_state: usize,
    pub rank_vacuum: usize,
    pub notes: Vec<String>,
}

impl EntropyReport {
    pub fn entry(&self, order: f64) -> Option<&OrderEntry> {
        self.renyi.iter().find(|e| e.order == order)
    }

    /// Subtracted entropy for `order`, with order 1 read from the von
    /// Neumann entry.
    pub fn subtracted(&self, order: f64) -> Option<f64> {
        if order == 1.0 {
            Some(self.von_neumann.subtracted)
        } else {
            self.entry(order).map(|e| e.subtracted)
        }
    }

    pub fn vacuum_entropy(&self, order: f64) -> Option<f64> {
        if order == 1.0 {
            Some(self.von_neumann.vacuum)
        } else {
            self.entry(order).map(|e| e.vacuum)
        }
    }

    /// Same report with entropies expressed in another logarithm base
    /// (`"nats"`, `"bits"` or `"dits"`).
    pub fn in_unit(&self, unit: &str) -> Option<EntropyReport> {
        let scale = match unit {
            "nats" => 1.0,
            "bits" => 1.0 / std::f64::consts::LN_2,
            "dits" => 1.0 / std::f64::consts::LN_10,
            _ => return None,
        };
        let mut out = self.clone();
        out.unit = unit.to_string();
        for e in &mut out.renyi {
            e.state *= scale;
            e.vacuum *= scale;
            e.subtracted *= scale;
        }
        out.von_neumann.state *= scale;
        out.von_neumann.vacuum *= scale;
        out.von_neumann.subtracted *= scale;
        out.spectrum_state.iter_mut().for_each(|v| *v *= scale);
        out.spectrum_vacuum.iter_mut().for_each(|v| *v *= scale);
        Some(out)
    }
}

/// Reduced states, spectra and the entropy report of one region.
#[derive(Debug, Clone)]
pub struct RegionAnalysis {
    pub report: EntropyReport,
    pub rho_state: DensityMatrix,
    pub rho_vacuum: DensityMatrix,
    pub eigen_state: Vec<f64>,
    pub eigen_vacuum: Vec<f64>,
}

pub fn analyze_region(
    state: &StateVector,
    vacuum: &StateVector,
    region: &Region,
    orders: &[f64],
    cap: usize,
) -> Result<RegionAnalysis, EntangleError> {
    if !state.same_basis_as(vacuum) {
        return Err(EntangleError::BasisMismatch);
    }
    for &n in orders {
        if !(n > 0.0) || !n.is_finite() {
            return Err(EntangleError::BadOrder(n));
        }
    }
    let rho_state = reduced_density_matrix_with_cap(state, region, cap)?;
    let rho_vacuum = reduced_density_matrix_with_cap(vacuum, region, cap)?;
    let spec_state = spectrum(&rho_state)?;
    let spec_vacuum = spectrum(&rho_vacuum)?;

    let mut renyi = Vec::new();
    for &n in orders.iter().filter(|&&n| n != 1.0) {
        let s = renyi_entropy(&spec_state.eigenvalues, n)?;
        let v = renyi_entropy(&spec_vacuum.eigenvalues, n)?;
        renyi.push(OrderEntry {
            order: n,
            state: s.entropy,
            vacuum: v.entropy,
            subtracted: s.entropy - v.entropy,
            r_state: s.power_sum,
            r_vacuum: v.power_sum,
        });
    }
    let vs = von_neumann_entropy(&spec_state.eigenvalues);
    let vv = von_neumann_entropy(&spec_vacuum.eigenvalues);

    let mut notes = Vec::new();
    if rho_state.mixes_parity() {
        notes.push(
            "state: reduced density matrix couples region states of different fermion parity; \
             entropies use the Jordan-Wigner partial trace"
                .to_string(),
        );
    }
    if rho_vacuum.mixes_parity() {
        notes.push("vacuum: reduced density matrix couples different fermion parities".to_string());
    }

    let report = EntropyReport {
        unit: "nats".into(),
        region: region.sites().to_vec(),
        orders: orders.to_vec(),
        renyi,
        von_neumann: VonNeumannEntry {
            state: vs,
            vacuum: vv,
            subtracted: vs - vv,
        },
        rank_state: spec_state.entanglement.len(),
        rank_vacuum: spec_vacuum.entanglement.len(),
        spectrum_state: spec_state.entanglement,
        spectrum_vacuum: spec_vacuum.entanglement,
        notes,
    };
    Ok(RegionAnalysis {
        report,
        rho_state,
        rho_vacuum,
        eigen_state: spec_state.eigenvalues,
        eigen_vacuum: spec_vacuum.eigenvalues,
    })
}

/// Entropies of `ρ_Ω(ψ)` and `ρ_Ω(0)` and their differences for each order,
/// plus von Neumann.
pub fn vacuum_subtracted_report(
    state: &StateVector,
    vacuum: &StateVector,
    region: &Region,
    orders: &[f64],
) -> Result<EntropyReport, EntangleError> {
    analyze_region(state, vacuum, region, orders, DEFAULT_REGION_CAP).map(|a| a.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{enumerate_basis, FockBasis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;
    use std::sync::Arc;

    fn fermi(m: usize) -> Arc<FockBasis> {
        Arc::new(enumerate_basis(Statistics::Fermi, m, None, None).unwrap())
    }

    /// Random state of even fermion parity.
    fn random_state(basis: Arc<FockBasis>, rng: &mut ChaCha8Rng) -> StateVector {
        let amps = (0..basis.dim())
            .map(|i| {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if basis.key(i).count_ones() % 2 == 0 { z } else { C64::new(0.0, 0.0) }
            })
            .collect();
        StateVector::new(basis, amps).unwrap().normalized().unwrap()
    }

    #[test]
    fn region_validation() {
        assert!(Region::new(&[], 4, 1).is_err());
        assert!(Region::new(&[0, 1, 2, 3], 4, 1).is_err());
        assert!(Region::new(&[5], 4, 1).is_err());
        let r = Region::new(&[2, 0, 2], 4, 2).unwrap();
        assert_eq!(r.sites(), &[0, 2]);
        assert_eq!(r.modes(), vec![0, 1, 4, 5]);
        assert_eq!(r.complement().sites(), &[1, 3]);
    }

    #[test]
    fn product_state_is_pure() {
        let b = fermi(2);
        let s = StateVector::basis_state(b, &[1, 0]).unwrap();
        let rho = reduced_density_matrix(&s, &Region::new(&[0], 2, 1).unwrap()).unwrap();
        assert_eq!(rho.dim(), 1);
        assert_eq!(rho.row_occupations(0), vec![1]);
        assert_eq!(rho.matrix()[(0, 0)], C64::new(1.0, 0.0));
    }

    #[test]
    fn bell_state_is_maximally_mixed() {
        let b = fermi(2);
        let s = 1.0 / 2f64.sqrt();
        let psi = StateVector::new(b, vec![0.0, s, s, 0.0].into_iter().map(|x| C64::new(x, 0.0)).collect()).unwrap();
        let rho = reduced_density_matrix(&psi, &Region::new(&[0], 2, 1).unwrap()).unwrap();
        assert_eq!(rho.dim(), 2);
        assert!((rho.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((rho.matrix()[(1, 1)].re - 0.5).abs() < 1e-15);
        assert!(rho.matrix()[(0, 1)].norm() < 1e-15);
        let spec = spectrum(&rho).unwrap();
        assert!((spec.eigenvalues[0] - 0.5).abs() < 1e-15);
        assert!(spec.entanglement.iter().all(|e| (e - LN_2).abs() < 1e-14));
    }

    #[test]
    fn reordering_sign_matters_for_coherences() {
        let b = fermi(3);
        let s = 1.0 / 2f64.sqrt();
        let mut amps = vec![C64::new(0.0, 0.0); 8];
        amps[0b110] = C64::new(s, 0.0); // |110⟩
        amps[0b011] = C64::new(s, 0.0); // |011⟩
        let psi = StateVector::new(b, amps).unwrap();
        // Distinct complement configurations: no coherence at all.
        let rho = reduced_density_matrix(&psi, &Region::new(&[2], 3, 1).unwrap()).unwrap();
        assert!(rho.matrix()[(0, 1)].norm() < 1e-15);
        // Shared complement mode 1; only |011⟩ moves a region fermion past it.
        let rho = reduced_density_matrix(&psi, &Region::new(&[0, 2], 3, 1).unwrap()).unwrap();
        assert_eq!(rho.keys(), &[0b01, 0b10]);
        assert!((rho.matrix()[(0, 1)].re + 0.5).abs() < 1e-15);
        assert!(!rho.mixes_parity());
    }

    #[test]
    fn random_state_complementarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = fermi(12);
        let psi = random_state(b, &mut rng);
        let region = Region::new(&[0, 2, 3, 7, 8, 11], 12, 1).unwrap();
        let ra = reduced_density_matrix(&psi, &region).unwrap();
        let rb = reduced_density_matrix(&psi, &region.complement()).unwrap();
        assert!((ra.trace().re - 1.0).abs() < 1e-10);
        let p2a = (ra.matrix() * ra.matrix()).trace().re;
        let p2b = (rb.matrix() * rb.matrix()).trace().re;
        assert!((p2a - p2b).abs() < 1e-10);
        let sa = spectrum(&ra).unwrap().eigenvalues;
        let sb = spectrum(&rb).unwrap().eigenvalues;
        for (a, b) in sa.iter().zip(&sb) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn random_spectrum_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = DMatrix::<C64>::from_fn(16, 16, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = &a * a.adjoint();
        let tr = m.trace();
        let rho = DensityMatrix::from_matrix(m / tr).unwrap();
        let spec = spectrum(&rho).unwrap();
        assert!((spec.eigenvalues.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(spec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn density_matrix_rejects_bad_input() {
        let m = DMatrix::from_row_slice(2, 2, &[C64::new(0.5, 0.0), C64::new(0.1, 0.0), C64::new(0.0, 0.0), C64::new(0.5, 0.0)]);
        assert!(DensityMatrix::from_matrix(m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[C64::new(1.5, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-0.5, 0.0)]);
        assert!(matches!(DensityMatrix::from_matrix(m), Err(EntangleError::NegativeEigenvalue(_))));
    }

    #[test]
    fn renyi_examples() {
        for n in [0.5, 2.0, 3.0, 7.0] {
            assert_eq!(renyi_entropy(&[1.0], n).unwrap().entropy, 0.0);
            assert!((renyi_entropy(&[0.5, 0.5], n).unwrap().entropy - LN_2).abs() < 1e-14);
        }
        let r = renyi_entropy(&[0.9, 0.1], 2.0).unwrap();
        // Frozen: 0.81 + 0.01 = 0.82, −ln 0.82.
        assert!((r.power_sum - 0.82).abs() < 1e-15);
        assert!((r.entropy - 0.198_450_938_723_838).abs() < 1e-12);
        assert!(renyi_entropy(&[1e-13], 2.0).is_err());
        assert!(renyi_entropy(&[1.0], 0.0).is_err());
        assert!(renyi_entropy(&[1.0], -1.0).is_err());
    }

    #[test]
    fn von_neumann_examples() {
        assert_eq!(von_neumann_entropy(&[1.0, 0.0]), 0.0);
        assert!((von_neumann_entropy(&[0.5, 0.5]) - LN_2).abs() < 1e-15);
        let r1 = renyi_entropy(&[0.5, 0.5], 1.0).unwrap();
        assert!((r1.entropy - LN_2).abs() < 1e-15);
        assert!((r1.power_sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn renyi_brackets_von_neumann() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let mut v: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            let vn = von_neumann_entropy(&v);
            let lo = renyi_entropy(&v, 1.0 + 1e-4).unwrap().entropy;
            let hi = renyi_entropy(&v, 1.0 - 1e-4).unwrap().entropy;
            assert!(lo <= vn + 1e-12 && vn <= hi + 1e-12);
            assert!((hi - lo) < 1e-3);
        }
    }

    #[test]
    fn report_for_vacuum_is_zero() {
        let b = fermi(8);
        let vac = StateVector::empty(b).unwrap();
        let region = Region::new(&[0, 1], 4, 2).unwrap();
        let rep = vacuum_subtracted_report(&vac, &vac, &region, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(rep.von_neumann.subtracted, 0.0);
        assert_eq!(rep.von_neumann.vacuum, 0.0);
        assert!(rep.renyi.iter().all(|e| e.subtracted == 0.0 && e.vacuum == 0.0));
        assert_eq!(rep.renyi.len(), 2);
        let bits = rep.in_unit("bits").unwrap();
        assert_eq!(bits.unit, "bits");
        assert!(rep.in_unit("furlongs").is_none());
    }

    #[test]
    fn complementary_entropies_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = fermi(5);
        let psi = random_state(b.clone(), &mut rng);
        let region = Region::new(&[0, 1], 5, 1).unwrap();
        let a = spectrum(&reduced_density_matrix(&psi, &region).unwrap()).unwrap();
        let c = spectrum(&reduced_density_matrix(&psi, &region.complement()).unwrap()).unwrap();
        let sa = von_neumann_entropy(&a.eigenvalues);
        let sc = von_neumann_entropy(&c.eigenvalues);
        assert!((sa - sc).abs() < 1e-8);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::fock::enumerate_basis;
    use proptest::prelude::*;
    use std::sync::Arc;

    /// State of parity `odd` built from the random amplitudes.
    fn state_from(v: &[(f64, f64)], basis: Arc<crate::fock::FockBasis>, odd: bool) -> Option<StateVector> {
        let amps = v
            .iter()
            .enumerate()
            .map(|(i, &(r, im))| {
                if (basis.key(i).count_ones() % 2 == 1) == odd { C64::new(r, im) } else { C64::new(0.0, 0.0) }
            })
            .collect();
        StateVector::new(basis, amps).ok()?.normalized().ok()
    }

    /// Relabels modes by `perm` (mode m → perm[m]) as the unitary
    /// `c†_m ↦ c†_{perm[m]}`, including the JW reordering sign.
    fn relabel(psi: &StateVector, perm: &[usize]) -> StateVector {
        let basis = psi.basis().clone();
        let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
        for (idx, &a) in psi.amplitudes().iter().enumerate() {
            let occ = basis.occupations(basis.key(idx));
            let created: Vec<usize> = (0..occ.len()).filter(|&m| occ[m] == 1).map(|m| perm[m]).collect();
            let inv: usize = created
                .iter()
                .enumerate()
                .map(|(i, x)| created[i + 1..].iter().filter(|y| *y < x).count())
                .sum();
            let mut new_occ = vec![0; occ.len()];
            for &m in &created {
                new_occ[m] = 1;
            }
            let t = basis.index_of(basis.key_of(&new_occ).unwrap()).unwrap();
            amps[t] = if inv % 2 == 0 { a } else { -a };
        }
        StateVector::new(basis, amps).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn complement_spectra_coincide(v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64), mask in 1u32..63, odd: bool) {
            let basis = Arc::new(enumerate_basis(Statistics::Fermi, 6, None, None).unwrap());
            let Some(psi) = state_from(&v, basis, odd) else { return Ok(()) };
            let sites: Vec<usize> = (0..6).filter(|b| mask & (1 << b) != 0).collect();
            let region = Region::new(&sites, 6, 1).unwrap();
            let a = spectrum(&reduced_density_matrix(&psi, &region).unwrap()).unwrap().eigenvalues;
            let b = spectrum(&reduced_density_matrix(&psi, &region.complement()).unwrap()).unwrap().eigenvalues;
            for i in 0..a.len().max(b.len()) {
                let x = a.get(i).copied().unwrap_or(0.0);
                let y = b.get(i).copied().unwrap_or(0.0);
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn renyi_non_increasing_in_order(v in proptest::collection::vec(0.0f64..1.0, 1..10)) {
            let s: f64 = v.iter().sum();
            prop_assume!(s > 1e-6);
            let p: Vec<f64> = v.iter().map(|x| x / s).collect();
            let mut last = f64::INFINITY;
            for n in [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 10.0] {
                let e = renyi_entropy(&p, n).unwrap().entropy;
                prop_assert!(e >= -1e-12);
                prop_assert!(e <= last + 1e-10);
                last = e;
            }
        }

        #[test]
        fn relabeling_inside_region_preserves_entropy(
            v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 32),
            swap in 0usize..3,
            odd: bool,
        ) {
            let basis = Arc::new(enumerate_basis(Statistics::Fermi, 5, None, None).unwrap());
            let Some(psi) = state_from(&v, basis, odd) else { return Ok(()) };
            let region = Region::new(&[0, 2, 3], 5, 1).unwrap();
            let perms = [[2, 1, 0, 3, 4], [3, 1, 2, 0, 4], [0, 1, 3, 2, 4]];
            let moved = relabel(&psi, &perms[swap]);
            let a = spectrum(&reduced_density_matrix(&psi, &region).unwrap()).unwrap();
            let b = spectrum(&reduced_density_matrix(&moved, &region).unwrap()).unwrap();
            for n in [2.0, 3.0] {
                let x = renyi_entropy(&a.eigenvalues, n).unwrap().entropy;
                let y = renyi_entropy(&b.eigenvalues, n).unwrap().entropy;
                prop_assert!((x - y).abs() < 1e-10);
            }
            prop_assert!((von_neumann_entropy(&a.eigenvalues) - von_neumann_entropy(&b.eigenvalues)).abs() < 1e-10);
        }
    }
}
