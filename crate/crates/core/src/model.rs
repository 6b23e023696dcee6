//! Gapped free chains, their single-particle modes and many-body vacua.
//!
//! Three vacuum regimes are supported:
//!
//! * `Empty`: `h = m·I − t·A` with `m > 2|t|`; the vacuum is the empty state.
//! * `HalfFilled`: staggered fermion chain `h = diag(±m) − t·A`; the vacuum
//!   fills every negative-energy mode of every species.
//! * `BosonGround`: harmonic chain `H = Σ m a†a − (t/2) Σ_⟨xy⟩ X_x X_y`
//!   with `X = a + a†`, whose ground state is a squeezed vacuum found by
//!   Lanczos on the truncated basis.
//!
//! Species never mix: every species sees the same single-particle matrix.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{
    apply_annihilation_sum, apply_creation_sum, Band, FockBasis, FockError, StateVector,
    Statistics, C64,
};
use crate::linalg::{self, LanczosOptions, LinalgError};

/// Smallest gap accepted by [`spectral_gap`].
pub const MIN_GAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter `{param}`: {message}")]
    Config { param: String, message: String },
    #[error("basis incompatible with model: {0}")]
    Incompatible(String),
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

fn config_err(param: &str, message: impl Into<String>) -> ModelError {
    ModelError::Config {
        param: param.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VacuumRegime {
    Empty,
    HalfFilled,
    BosonGround,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    pub statistics: Statistics,
    pub sites: usize,
    pub species: usize,
    pub hopping: f64,
    pub mass: f64,
    pub staggered: bool,
    pub regime: VacuumRegime,
    pub n_max: Option<usize>,
    pub boundary: Boundary,
}

impl LatticeModel {
    /// Fermion chain in the `Empty` regime with two species and open ends.
    pub fn fermi_empty(sites: usize, hopping: f64, mass: f64) -> Self {
        LatticeModel {
            statistics: Statistics::Fermi,
            sites,
            species: 2,
            hopping,
            mass,
            staggered: false,
            regime: VacuumRegime::Empty,
            n_max: None,
            boundary: Boundary::Open,
        }
    }

    /// Staggered fermion chain at half filling.
    pub fn fermi_half_filled(sites: usize, hopping: f64, mass: f64) -> Self {
        LatticeModel {
            staggered: true,
            regime: VacuumRegime::HalfFilled,
            ..LatticeModel::fermi_empty(sites, hopping, mass)
        }
    }

    /// Harmonic boson chain with a single species.
    pub fn bose_ground(sites: usize, hopping: f64, mass: f64, n_max: usize) -> Self {
        LatticeModel {
            statistics: Statistics::Bose,
            sites,
            species: 1,
            hopping,
            mass,
            staggered: false,
            regime: VacuumRegime::BosonGround,
            n_max: Some(n_max),
            boundary: Boundary::Open,
        }
    }

    pub fn with_species(mut self, species: usize) -> Self {
        self.species = species;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn mode_count(&self) -> usize {
        self.sites * self.species
    }

    pub fn mode_index(&self, site: usize, species: usize) -> usize {
        site * self.species + species
    }

    /// Checks the structural and gap conditions of the chosen regime.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sites == 0 {
            return Err(config_err("sites", "must be at least 1"));
        }
        if self.species == 0 {
            return Err(config_err("species", "must be at least 1"));
        }
        if !self.hopping.is_finite() || !self.mass.is_finite() {
            return Err(config_err("hopping/mass", "must be finite"));
        }
        if self.boundary == Boundary::Periodic && self.sites < 3 {
            return Err(config_err("boundary", "periodic chains need at least 3 sites"));
        }
        match self.statistics {
            Statistics::Bose => match self.n_max {
                Some(n) if n >= 1 => {}
                _ => return Err(config_err("n_max", "boson chains need a cutoff n_max >= 1")),
            },
            Statistics::Fermi => {}
        }
        let (t, m) = (self.hopping, self.mass);
        match self.regime {
            VacuumRegime::Empty => {
                if self.staggered {
                    return Err(config_err("staggered", "the empty regime uses a uniform mass"));
                }
                if m <= 2.0 * t.abs() {
                    return Err(config_err(
                        "mass",
                        format!("gap condition m > 2|t| violated (m = {m}, t = {t})"),
                    ));
                }
            }
            VacuumRegime::HalfFilled => {
                if self.statistics != Statistics::Fermi {
                    return Err(config_err("regime", "half filling requires fermions"));
                }
                if !self.staggered {
                    return Err(config_err("staggered", "half filling requires the staggered chain"));
                }
                if self.sites % 2 != 0 {
                    return Err(config_err("sites", "half filling requires an even number of sites"));
                }
                if m.abs() <= MIN_GAP {
                    return Err(config_err(
                        "mass",
                        format!("staggered mass must be nonzero for a band gap (m = {m})"),
                    ));
                }
            }
            VacuumRegime::BosonGround => {
                if self.statistics != Statistics::Bose {
                    return Err(config_err("regime", "boson_ground requires bosons"));
                }
                if self.staggered {
                    return Err(config_err("staggered", "boson_ground uses a uniform mass"));
                }
                if m <= 2.0 * t.abs() {
                    return Err(config_err(
                        "mass",
                        format!("stability condition m > 2|t| violated (m = {m}, t = {t})"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn bonds(&self) -> Vec<(usize, usize)> {
        let n = self.sites;
        let mut b: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|x| (x, x + 1)).collect();
        if self.boundary == Boundary::Periodic {
            b.push((n - 1, 0));
        }
        b
    }
}

/// Single-particle matrix shared by every species (`N × N`).
pub fn single_particle_hamiltonian(model: &LatticeModel) -> Result<DMatrix<C64>, ModelError> {
    model.validate()?;
    let n = model.sites;
    let mut h = DMatrix::<C64>::zeros(n, n);
    for x in 0..n {
        let onsite = if model.staggered && x % 2 == 1 {
            -model.mass
        } else {
            model.mass
        };
        h[(x, x)] = C64::new(onsite, 0.0);
    }
    for (x, y) in model.bonds() {
        h[(x, y)] -= C64::new(model.hopping, 0.0);
        h[(y, x)] -= C64::new(model.hopping, 0.0);
    }
    Ok(h)
}

/// Orthonormal one-particle eigenmodes, energies ascending.
#[derive(Debug, Clone)]
pub struct SingleParticleModes {
    /// Column `k` holds `u_k(x)`.
    pub vectors: DMatrix<C64>,
    pub energies: Vec<f64>,
    pub bands: Vec<Band>,
}

impl SingleParticleModes {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn band_indices(&self, band: Band) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.bands[k] == band).collect()
    }

    /// Projector onto the span of the modes in `band`.
    pub fn band_projector(&self, band: Band) -> DMatrix<C64> {
        let n = self.vectors.nrows();
        let mut p = DMatrix::<C64>::zeros(n, n);
        for k in self.band_indices(band) {
            let u = self.vectors.column(k);
            p += &u * u.adjoint();
        }
        p
    }
}

/// Make the first entry with non-negligible modulus real and positive.
fn fix_phase(v: &mut nalgebra::DVector<C64>) {
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-10).copied() {
        let phase = first.conj() / first.norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

/// Diagonalize a Hermitian single-particle matrix. Within a degenerate
/// eigenspace the basis is canonicalized by Gram–Schmidt on the projected
/// site basis vectors `P e_0, P e_1, …`, so the identity returns the site
/// basis. Every vector's first significant entry is real positive. Bands
/// are all `Upper`; see [`modes_for`] for regime-aware labels.
pub fn diagonalize_modes(h: &DMatrix<C64>) -> Result<SingleParticleModes, ModelError> {
    const DEGENERACY_TOL: f64 = 1e-10;
    if h.nrows() != h.ncols() {
        return Err(ModelError::NotHermitian(f64::INFINITY));
    }
    let defect = linalg::hermitian_defect(h);
    if defect > 1e-12 {
        return Err(ModelError::NotHermitian(defect));
    }
    let n = h.nrows();
    let (energies, raw) = linalg::eigh(h);
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    let mut k = 0;
    while k < n {
        let mut end = k + 1;
        while end < n && (energies[end] - energies[k]).abs() < DEGENERACY_TOL {
            end += 1;
        }
        if end - k == 1 {
            let mut v = raw.column(k).into_owned();
            fix_phase(&mut v);
            vectors.set_column(k, &v);
        } else {
            let block = raw.columns(k, end - k);
            let projector = &block * block.adjoint();
            let mut chosen: Vec<nalgebra::DVector<C64>> = Vec::new();
            for site in 0..n {
                if chosen.len() == end - k {
                    break;
                }
                let mut v = projector.column(site).into_owned();
                for c in &chosen {
                    let p = c.dotc(&v);
                    v -= c * p;
                }
                let norm = v.norm();
                if norm > 1e-8 {
                    v /= C64::new(norm, 0.0);
                    fix_phase(&mut v);
                    chosen.push(v);
                }
            }
            for (offset, v) in chosen.iter().enumerate() {
                vectors.set_column(k + offset, v);
            }
        }
        k = end;
    }
    Ok(SingleParticleModes {
        vectors,
        bands: vec![Band::Upper; n],
        energies,
    })
}

/// Modes of the model with band labels: negative energies are `Lower` in
/// the half-filled regime, everything is `Upper` otherwise.
pub fn modes_for(model: &LatticeModel) -> Result<SingleParticleModes, ModelError> {
    let h = single_particle_hamiltonian(model)?;
    let mut modes = diagonalize_modes(&h)?;
    if model.regime == VacuumRegime::HalfFilled {
        modes.bands = modes
            .energies
            .iter()
            .map(|&e| if e < 0.0 { Band::Lower } else { Band::Upper })
            .collect();
        let lower = modes.band_indices(Band::Lower).len();
        if lower != model.sites / 2 {
            return Err(config_err(
                "mass",
                format!("expected {} negative-energy modes, found {lower}", model.sites / 2),
            ));
        }
    }
    Ok(modes)
}

/// Excitation gap of the finite chain: lowest particle energy (`Empty`),
/// band gap (`HalfFilled`), or lowest normal-mode frequency (`BosonGround`).
pub fn spectral_gap(model: &LatticeModel) -> Result<f64, ModelError> {
    let modes = modes_for(model)?;
    let gap = match model.regime {
        VacuumRegime::Empty => modes.energies[0],
        VacuumRegime::HalfFilled => {
            let lower = modes.band_indices(Band::Lower);
            let upper = modes.band_indices(Band::Upper);
            modes.energies[upper[0]] - modes.energies[*lower.last().expect("nonempty band")]
        }
        VacuumRegime::BosonGround => (model.mass * modes.energies[0]).max(0.0).sqrt(),
    };
    if gap <= MIN_GAP {
        return Err(config_err(
            "mass",
            format!("spectral gap {gap:.3e} is below the minimum {MIN_GAP:e}"),
        ));
    }
    Ok(gap)
}

fn check_basis(model: &LatticeModel, basis: &FockBasis) -> Result<(), ModelError> {
    if basis.statistics() != model.statistics {
        return Err(ModelError::Incompatible(format!(
            "basis statistics {} vs model {}",
            basis.statistics(),
            model.statistics
        )));
    }
    if basis.modes() != model.mode_count() {
        return Err(ModelError::Incompatible(format!(
            "basis has {} modes, model needs {}",
            basis.modes(),
            model.mode_count()
        )));
    }
    if model.statistics == Statistics::Bose && Some(basis.n_max()) != model.n_max {
        return Err(ModelError::Incompatible(format!(
            "basis cutoff {} vs model cutoff {:?}",
            basis.n_max(),
            model.n_max
        )));
    }
    Ok(())
}

/// Creation-operator coefficients of `b†_k` for one species.
pub fn mode_creation_terms(
    model: &LatticeModel,
    modes: &SingleParticleModes,
    k: usize,
    species: usize,
) -> Vec<(usize, C64)> {
    (0..model.sites)
        .map(|x| (model.mode_index(x, species), modes.vectors[(x, k)]))
        .filter(|(_, c)| c.norm() > 0.0)
        .collect()
}

/// Applies the many-body Hamiltonian of the model to a state.
pub fn apply_hamiltonian(model: &LatticeModel, state: &StateVector) -> Result<StateVector, ModelError> {
    let h = single_particle_hamiltonian(model)?;
    let mut out = StateVector::zeros(state.basis().clone());
    let one = C64::new(1.0, 0.0);
    match model.regime {
        VacuumRegime::Empty | VacuumRegime::HalfFilled => {
            for s in 0..model.species {
                for y in 0..model.sites {
                    let lowered = apply_annihilation_sum(state, &[(model.mode_index(y, s), one)]).state;
                    if lowered.norm() == 0.0 {
                        continue;
                    }
                    let terms: Vec<(usize, C64)> = (0..model.sites)
                        .filter(|&x| h[(x, y)].norm() > 0.0)
                        .map(|x| (model.mode_index(x, s), h[(x, y)]))
                        .collect();
                    let raised = apply_creation_sum(&lowered, &terms).state;
                    out = out.add_scaled(one, &raised)?;
                }
            }
        }
        VacuumRegime::BosonGround => {
            let x_op = |psi: &StateVector, mode: usize| -> StateVector {
                let a = apply_annihilation_sum(psi, &[(mode, one)]).state;
                let ad = apply_creation_sum(psi, &[(mode, one)]).state;
                a.add_scaled(one, &ad).expect("same basis")
            };
            for s in 0..model.species {
                for x in 0..model.sites {
                    let mode = model.mode_index(x, s);
                    let n = apply_creation_sum(&apply_annihilation_sum(state, &[(mode, one)]).state, &[(mode, one)]).state;
                    out = out.add_scaled(C64::new(model.mass, 0.0), &n)?;
                }
                for (x, y) in model.bonds() {
                    let xy = x_op(&x_op(state, model.mode_index(y, s)), model.mode_index(x, s));
                    out = out.add_scaled(C64::new(-0.5 * model.hopping, 0.0), &xy)?;
                }
            }
        }
    }
    Ok(out)
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
pub fn energy(model: &LatticeModel, state: &StateVector) -> Result<f64, ModelError> {
    let hpsi = apply_hamiltonian(model, state)?;
    let num = crate::fock::inner(state, &hpsi)?.re;
    Ok(num / (state.norm() * state.norm()))
}

/// Builds the many-body vacuum of the model on the given basis.
pub fn build_vacuum(
    model: &LatticeModel,
    modes: &SingleParticleModes,
    basis: &Arc<FockBasis>,
) -> Result<StateVector, ModelError> {
    build_vacuum_with(model, modes, basis, LanczosOptions::default())
}

pub fn build_vacuum_with(
    model: &LatticeModel,
    modes: &SingleParticleModes,
    basis: &Arc<FockBasis>,
    lanczos: LanczosOptions,
) -> Result<StateVector, ModelError> {
    model.validate()?;
    check_basis(model, basis)?;
    let empty = StateVector::empty(basis.clone())
        .ok_or_else(|| ModelError::Incompatible("basis lacks the empty state".into()));
    match model.regime {
        VacuumRegime::Empty => Ok(empty?),
        VacuumRegime::HalfFilled => {
            let filled = model.species * model.sites / 2;
            let needs_intermediate = basis
                .sectors()
                .is_some_and(|s| !(0..=filled).all(|n| s.contains(&n)));
            if needs_intermediate {
                slater_vacuum(model, modes, basis)
            } else {
                let mut state = empty?;
                for s in 0..model.species {
                    for k in modes.band_indices(Band::Lower) {
                        let terms = mode_creation_terms(model, modes, k, s);
                        state = apply_creation_sum(&state, &terms).state;
                    }
                }
                Ok(state.normalized()?)
            }
        }
        VacuumRegime::BosonGround => {
            let start = empty?.into_amplitudes();
            let apply = |v: &[C64]| -> Vec<C64> {
                let psi = StateVector::new(basis.clone(), v.to_vec()).expect("length checked");
                apply_hamiltonian(model, &psi)
                    .expect("validated model")
                    .into_amplitudes()
            };
            let gs = linalg::lanczos_ground(apply, start, lanczos)?;
            let mut psi = StateVector::new(basis.clone(), gs.vector)?;
            let zero = psi.amplitude_of(&vec![0; basis.modes()]);
            if zero.norm() > 0.0 {
                psi = psi.scaled(zero.conj() / zero.norm());
            }
            Ok(psi.normalized()?)
        }
    }
}

fn det(m: &DMatrix<C64>) -> C64 {
    if m.nrows() == 0 {
        C64::new(1.0, 0.0)
    } else {
        m.clone().lu().determinant()
    }
}

/// Half-filled vacuum written directly as a product of per-species Slater
/// determinants. Matches the operator construction
/// `∏_σ ∏_{k lower} b†_{k,σ} |0⟩` (species 0 leftmost) up to the JW sign of
/// reordering species-major creation strings into ascending mode order.
pub fn slater_vacuum(
    model: &LatticeModel,
    modes: &SingleParticleModes,
    basis: &Arc<FockBasis>,
) -> Result<StateVector, ModelError> {
    check_basis(model, basis)?;
    let lower = modes.band_indices(Band::Lower);
    let filled = lower.len();
    let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
    for (idx, amp) in amps.iter_mut().enumerate() {
        let key = basis.key(idx);
        let mut occupied_by_species: Vec<Vec<usize>> = vec![Vec::new(); model.species];
        for x in 0..model.sites {
            for (s, occ) in occupied_by_species.iter_mut().enumerate() {
                if basis.occupation(key, model.mode_index(x, s)) == 1 {
                    occ.push(x);
                }
            }
        }
        if occupied_by_species.iter().any(|o| o.len() != filled) {
            continue;
        }
        let mut value = C64::new(1.0, 0.0);
        for sites in &occupied_by_species {
            let sub = DMatrix::from_fn(filled, filled, |r, c| modes.vectors[(sites[r], lower[c])]);
            value *= det(&sub);
        }
        // Species-major creation order → ascending mode order.
        let order: Vec<usize> = occupied_by_species
            .iter()
            .enumerate()
            .flat_map(|(s, sites)| sites.iter().map(move |&x| model.mode_index(x, s)))
            .collect();
        let inversions = order
            .iter()
            .enumerate()
            .map(|(i, a)| order[i + 1..].iter().filter(|b| *b < a).count())
            .sum::<usize>();
        if inversions % 2 == 1 {
            value = -value;
        }
        *amp = value;
    }
    Ok(StateVector::new(basis.clone(), amps)?.normalized()?)
}
