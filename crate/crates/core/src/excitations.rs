//! Localized wave-packet creation operators and the multi-packet states built
//! from them.
//!
//! A packet `O = Σ_x φ(x) c†_{x,σ}` lives on a single species. Envelopes are
//! sampled on sites, projected onto the particle band in the half-filled
//! regime, and normalized so that `‖O|vac⟩‖ = 1`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{apply_creation_sum, Band, CutoffPolicy, FockError, StateVector, C64};
use crate::model::{LatticeModel, ModelError, SingleParticleModes, VacuumRegime};

/// Smallest admissible norm of a projected envelope.
pub const MIN_PACKET_NORM: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExcitationError {
    #[error("invalid packet: {0}")]
    InvalidProfile(String),
    #[error("packet has no weight in the particle band (norm {0:.3e})")]
    NoBandContent(f64),
    #[error("recipe has no terms")]
    EmptyRecipe,
    #[error("state vanishes (norm {0:.3e})")]
    ZeroNorm(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    /// `exp(-(x - x₀)² / (2w²))`.
    #[default]
    Gaussian,
    /// Indicator of `|x - x₀| ≤ w`.
    Rectangular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketProfile {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub species: usize,
    #[serde(default = "default_band")]
    pub band: Band,
    #[serde(default)]
    pub envelope: Envelope,
}

fn default_band() -> Band {
    Band::Upper
}

impl PacketProfile {
    pub fn gaussian(center: f64, width: f64, species: usize) -> Self {
        PacketProfile {
            center,
            width,
            species,
            band: Band::Upper,
            envelope: Envelope::Gaussian,
        }
    }

    pub fn rectangular(center: f64, width: f64, species: usize) -> Self {
        PacketProfile {
            envelope: Envelope::Rectangular,
            ..Self::gaussian(center, width, species)
        }
    }

    pub fn with_species(mut self, species: usize) -> Self {
        self.species = species;
        self
    }

    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self, model: &LatticeModel) -> Result<(), ExcitationError> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(ExcitationError::InvalidProfile(format!(
                "width must be positive, got {}",
                self.width
            )));
        }
        let last = model.sites.saturating_sub(1) as f64;
        if !(0.0..=last).contains(&self.center) {
            return Err(ExcitationError::InvalidProfile(format!(
                "center {} outside [0, {last}]",
                self.center
            )));
        }
        if self.species >= model.species {
            return Err(ExcitationError::InvalidProfile(format!(
                "species {} but the model has {}",
                self.species, model.species
            )));
        }
        Ok(())
    }

    /// Raw envelope sampled on `sites` sites.
    pub fn sample(&self, sites: usize) -> Vec<f64> {
        (0..sites)
            .map(|x| {
                let d = x as f64 - self.center;
                match self.envelope {
                    Envelope::Gaussian => (-d * d / (2.0 * self.width * self.width)).exp(),
                    Envelope::Rectangular => {
                        if d.abs() <= self.width + 1e-12 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect()
    }
}

/// A normalized packet creation operator.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketOperator {
    profile: PacketProfile,
    /// `φ(x)` per site.
    amplitudes: Vec<C64>,
    species_count: usize,
    normalized: bool,
}

impl PacketOperator {
    /// Wraps explicit site amplitudes without normalizing them.
    pub fn from_amplitudes(profile: PacketProfile, amplitudes: Vec<C64>, species_count: usize) -> Self {
        PacketOperator {
            profile,
            amplitudes,
            species_count,
            normalized: false,
        }
    }

    pub fn profile(&self) -> &PacketProfile {
        &self.profile
    }

    pub fn species(&self) -> usize {
        self.profile.species
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `(mode, φ(x))` pairs for the nonzero amplitudes.
    pub fn mode_terms(&self) -> Vec<(usize, C64)> {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(x, &c)| (x * self.species_count + self.profile.species, c))
            .collect()
    }

    /// Fraction of `Σ|φ|²` carried by the given sites.
    pub fn weight_in(&self, sites: &[usize]) -> f64 {
        let total: f64 = self.amplitudes.iter().map(|c| c.norm_sqr()).sum();
        let inside: f64 = sites
            .iter()
            .filter_map(|&x| self.amplitudes.get(x))
            .map(|c| c.norm_sqr())
            .sum();
        if total > 0.0 {
            inside / total
        } else {
            0.0
        }
    }

    pub fn apply(&self, state: &StateVector) -> crate::fock::Ladder {
        apply_creation_sum(state, &self.mode_terms())
    }
}

/// Builds the packet described by `profile`.
///
/// `vacuum` is required in the boson ground-state regime, where the
/// normalization is fixed by `‖O|vac⟩‖` on the truncated basis.
pub fn make_packet(
    profile: &PacketProfile,
    model: &LatticeModel,
    modes: &SingleParticleModes,
    vacuum: Option<&StateVector>,
) -> Result<PacketOperator, ExcitationError> {
    profile.validate(model)?;
    let raw = DVector::from_iterator(
        model.sites,
        profile.sample(model.sites).into_iter().map(|v| C64::new(v, 0.0)),
    );
    let shaped = match model.regime {
        VacuumRegime::HalfFilled => modes.band_projector(profile.band) * raw,
        VacuumRegime::Empty | VacuumRegime::BosonGround => raw,
    };
    let norm = shaped.norm();
    if norm < MIN_PACKET_NORM {
        return Err(ExcitationError::NoBandContent(norm));
    }
    let mut op = PacketOperator {
        profile: profile.clone(),
        amplitudes: shaped.iter().map(|c| c / norm).collect(),
        species_count: model.species,
        normalized: true,
    };
    if model.regime == VacuumRegime::BosonGround {
        let vac = vacuum.ok_or_else(|| {
            ExcitationError::InvalidProfile("boson ground-state packets need the vacuum".into())
        })?;
        let created = op.apply(vac).state.norm();
        if created < MIN_PACKET_NORM {
            return Err(ExcitationError::ZeroNorm(created));
        }
        op.amplitudes.iter_mut().for_each(|c| *c /= created);
    }
    Ok(op)
}

/// `Σ_x φ_p*(x) φ_q(x)`, zero across species.
pub fn packet_overlap(p: &PacketOperator, q: &PacketOperator) -> C64 {
    if p.species() != q.species() {
        return C64::new(0.0, 0.0);
    }
    spatial_overlap(p, q)
}

/// Envelope overlap ignoring the species label.
pub fn spatial_overlap(p: &PacketOperator, q: &PacketOperator) -> C64 {
    p.amplitudes
        .iter()
        .zip(&q.amplitudes)
        .map(|(a, b)| a.conj() * b)
        .sum()
}

/// One term `coefficient · O_1 O_2 ⋯ O_k |vac⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecipeTerm {
    pub coefficient: C64,
    pub operators: Vec<PacketOperator>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateRecipe {
    pub terms: Vec<RecipeTerm>,
}

impl StateRecipe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, coefficient: C64, operators: Vec<PacketOperator>) -> Self {
        self.terms.push(RecipeTerm {
            coefficient,
            operators,
        });
        self
    }

    /// `a O_i Õ_j + b O_k Õ_l`.
    pub fn two_term(a: C64, first: [PacketOperator; 2], b: C64, second: [PacketOperator; 2]) -> Self {
        Self::new().term(a, first.to_vec()).term(b, second.to_vec())
    }

    /// `√(Σ|a_α|²)`.
    pub fn coefficient_norm(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_operators(&self) -> usize {
        self.terms.iter().map(|t| t.operators.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct BuiltState {
    /// Normalized state.
    pub state: StateVector,
    /// Norm before normalization; `N = 1 / raw_norm`.
    pub raw_norm: f64,
    /// Squared norm lost to the basis truncation, summed over terms and
    /// weighted by `|a_α|²`.
    pub leakage: f64,
}

impl BuiltState {
    /// `N · √(Σ|a|²)`, equal to one for orthonormal terms.
    pub fn normalization_ratio(&self, recipe: &StateRecipe) -> f64 {
        recipe.coefficient_norm() / self.raw_norm
    }
}

pub fn build_state(recipe: &StateRecipe, vacuum: &StateVector) -> Result<BuiltState, ExcitationError> {
    build_state_with(recipe, vacuum, CutoffPolicy::Truncate)
}

pub fn build_state_with(
    recipe: &StateRecipe,
    vacuum: &StateVector,
    policy: CutoffPolicy,
) -> Result<BuiltState, ExcitationError> {
    if recipe.terms.is_empty() {
        return Err(ExcitationError::EmptyRecipe);
    }
    let mut total = StateVector::zeros(vacuum.basis().clone());
    let mut leakage = 0.0;
    for term in &recipe.terms {
        let mut psi = vacuum.clone();
        for op in term.operators.iter().rev() {
            let ladder = op.apply(&psi);
            if policy == CutoffPolicy::Strict && ladder.leakage > 0.0 {
                return Err(FockError::CutoffViolation {
                    mode: op.mode_terms().first().map_or(0, |t| t.0),
                    leakage: ladder.leakage,
                }
                .into());
            }
            leakage += ladder.leakage * term.coefficient.norm_sqr();
            psi = ladder.state;
        }
        total = total.add_scaled(term.coefficient, &psi)?;
    }
    let raw_norm = total.norm();
    if raw_norm < 1e-12 {
        return Err(ExcitationError::ZeroNorm(raw_norm));
    }
    Ok(BuiltState {
        state: total.normalized()?,
        raw_norm,
        leakage,
    })
}
