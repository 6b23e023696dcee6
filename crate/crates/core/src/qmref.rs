//! Particle-level reference: two-particle states of distinguishable particles
//! labelled by an internal index, their one-particle entropies, and residuals
//! of lattice results against them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entangle::{renyi_entropy, spectrum, von_neumann_entropy, DensityMatrix, EntangleError, EntropyReport, Renyi};
use crate::excitations::{spatial_overlap, PacketOperator, StateRecipe};
use crate::fock::{Statistics, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmError {
    #[error("reference state has no terms")]
    Empty,
    #[error("index {index} outside internal dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("reference state vanishes")]
    ZeroNorm,
    #[error("report lacks Rényi order {0}")]
    OrderMismatch(f64),
    #[error(transparent)]
    Entangle(#[from] EntangleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmTerm {
    pub coefficient: C64,
    pub first: usize,
    pub second: usize,
}

/// `Σ_α a_α |i_α⟩ ⊗ |j_α⟩` over an internal space of dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmState {
    pub dim: usize,
    pub terms: Vec<QmTerm>,
}

impl QmState {
    pub fn new(dim: usize, terms: Vec<(C64, usize, usize)>) -> Result<Self, QmError> {
        let s = QmState {
            dim,
            terms: terms
                .into_iter()
                .map(|(coefficient, first, second)| QmTerm {
                    coefficient,
                    first,
                    second,
                })
                .collect(),
        };
        s.validate()?;
        Ok(s)
    }

    /// `a |i,j⟩ + b |k,l⟩`.
    pub fn two_term(dim: usize, a: C64, (i, j): (usize, usize), b: C64, (k, l): (usize, usize)) -> Result<Self, QmError> {
        Self::new(dim, vec![(a, i, j), (b, k, l)])
    }

    pub fn validate(&self) -> Result<(), QmError> {
        if self.terms.is_empty() {
            return Err(QmError::Empty);
        }
        for t in &self.terms {
            for index in [t.first, t.second] {
                if index >= self.dim {
                    return Err(QmError::IndexOutOfRange { index, dim: self.dim });
                }
            }
        }
        Ok(())
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Coefficients `(a, b)` when the state has two terms with `i ≠ k` and
    /// `j ≠ l`.
    pub fn orthogonal_pair(&self) -> Option<(C64, C64)> {
        match self.terms.as_slice() {
            [p, q] if p.first != q.first && p.second != q.second => Some((p.coefficient, q.coefficient)),
            _ => None,
        }
    }
}

/// `ρ_1 = Tr_2 |ψ⟩⟨ψ|` of the normalized state.
pub fn qm_density_matrix(q: &QmState) -> Result<DensityMatrix, QmError> {
    q.validate()?;
    let mut psi = DMatrix::<C64>::zeros(q.dim, q.dim);
    for t in &q.terms {
        psi[(t.first, t.second)] += t.coefficient;
    }
    let norm = psi.norm();
    if norm < 1e-300 {
        return Err(QmError::ZeroNorm);
    }
    psi /= C64::new(norm, 0.0);
    Ok(DensityMatrix::from_matrix(&psi * psi.adjoint())?)
}

/// `R_n = (|a|^{2n} + |b|^{2n}) / (|a|² + |b|²)^n` and the matching `S_n`;
/// order 1 gives the binary entropy.
pub fn qm_renyi_closed_form(a: C64, b: C64, order: f64) -> Renyi {
    let (pa, pb) = (a.norm_sqr(), b.norm_sqr());
    let total = pa + pb;
    if order == 1.0 {
        let p = [pa / total, pb / total];
        return Renyi {
            entropy: von_neumann_entropy(&p),
            power_sum: 1.0,
        };
    }
    let power_sum = (pa.powf(order) + pb.powf(order)) / total.powf(order);
    Renyi {
        entropy: power_sum.ln() / (1.0 - order) + 0.0,
        power_sum,
    }
}

/// `S_n(ρ_1)`, closed form for two orthogonal terms and spectral otherwise.
pub fn qm_renyi(q: &QmState, order: f64) -> Result<Renyi, QmError> {
    if !(order > 0.0) || !order.is_finite() {
        return Err(EntangleError::BadOrder(order).into());
    }
    q.validate()?;
    if let Some((a, b)) = q.orthogonal_pair() {
        if a.norm_sqr() + b.norm_sqr() == 0.0 {
            return Err(QmError::ZeroNorm);
        }
        return Ok(qm_renyi_closed_form(a, b, order));
    }
    qm_renyi_spectral(q, order)
}

/// `S_n(ρ_1)` from the eigenvalues of [`qm_density_matrix`].
pub fn qm_renyi_spectral(q: &QmState, order: f64) -> Result<Renyi, QmError> {
    let rho = qm_density_matrix(q)?;
    let eig = spectrum(&rho)?.eigenvalues;
    Ok(renyi_entropy(&eig, order)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub separation: Option<f64>,
    pub overlap: Option<f64>,
    pub orders: Vec<f64>,
    /// `|S_n(Ψ) − S_n(0) − S_n^QM|` per order.
    pub delta: Vec<f64>,
    pub delta_von_neumann: f64,
    pub qm_entropies: Vec<f64>,
    pub qm_von_neumann: f64,
    /// `|R_n(Ψ) − R_n(0)·R_n^QM|` per order.
    pub r_residuals: Vec<f64>,
    /// `|N·√(Σ|a|²) − 1|`.
    pub norm_dev: Option<f64>,
}

impl ResidualRecord {
    pub fn delta_for(&self, order: f64) -> Option<f64> {
        if order == 1.0 {
            return Some(self.delta_von_neumann);
        }
        self.orders.iter().position(|&o| o == order).map(|i| self.delta[i])
    }

    pub fn qm_for(&self, order: f64) -> Option<f64> {
        if order == 1.0 {
            return Some(self.qm_von_neumann);
        }
        self.orders.iter().position(|&o| o == order).map(|i| self.qm_entropies[i])
    }
}

/// Residuals of a vacuum-subtracted report against the reference state.
pub fn compare(report: &EntropyReport, q: &QmState) -> Result<ResidualRecord, QmError> {
    let mut orders = Vec::new();
    let mut delta = Vec::new();
    let mut qm_entropies = Vec::new();
    let mut r_residuals = Vec::new();
    for &n in report.orders.iter().filter(|&&n| n != 1.0) {
        let entry = report.entry(n).ok_or(QmError::OrderMismatch(n))?;
        let qm = qm_renyi(q, n)?;
        orders.push(n);
        delta.push((entry.subtracted - qm.entropy).abs());
        qm_entropies.push(qm.entropy);
        r_residuals.push((entry.r_state - entry.r_vacuum * qm.power_sum).abs());
    }
    let qm_vn = qm_renyi(q, 1.0)?.entropy;
    Ok(ResidualRecord {
        separation: None,
        overlap: None,
        orders,
        delta,
        delta_von_neumann: (report.von_neumann.subtracted - qm_vn).abs(),
        qm_entropies,
        qm_von_neumann: qm_vn,
        r_residuals,
        norm_dev: None,
    })
}

/// Reference state read off a packet recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedReference {
    pub state: QmState,
    /// Packet ids (into `packets`) of each first-particle label.
    pub inside_labels: Vec<Vec<usize>>,
    /// Packet ids of each second-particle label.
    pub outside_labels: Vec<Vec<usize>>,
    pub packets: Vec<PacketOperator>,
    /// Largest `|⟨φ_in|φ_out⟩|` between an inside and an outside packet.
    pub max_overlap: f64,
    /// Distance between the mean centers of inside and outside packets.
    pub separation: Option<f64>,
}

/// Splits each term of `recipe` into the packets carrying at least half of
/// their weight on `region_sites` and the rest. The sorted packet multisets
/// on either side become the internal labels of the two particles; fermionic
/// terms pick up the sign of the reordering.
pub fn derive_reference(recipe: &StateRecipe, region_sites: &[usize], statistics: Statistics) -> Result<DerivedReference, QmError> {
    if recipe.terms.is_empty() {
        return Err(QmError::Empty);
    }
    let mut packets: Vec<PacketOperator> = Vec::new();
    let mut inside_labels: Vec<Vec<usize>> = Vec::new();
    let mut outside_labels: Vec<Vec<usize>> = Vec::new();
    let mut terms = Vec::new();
    let mut inside_ids = Vec::new();
    let mut outside_ids = Vec::new();

    for term in &recipe.terms {
        let ids: Vec<usize> = term
            .operators
            .iter()
            .map(|op| match packets.iter().position(|p| p == op) {
                Some(i) => i,
                None => {
                    packets.push(op.clone());
                    packets.len() - 1
                }
            })
            .collect();
        let inside: Vec<bool> = ids.iter().map(|&i| packets[i].weight_in(region_sites) >= 0.5).collect();
        // Target order: inside packets first, each side sorted by id.
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by_key(|&p| (!inside[p], ids[p]));
        let inversions = (0..order.len())
            .map(|a| (a + 1..order.len()).filter(|&b| order[b] < order[a]).count())
            .sum::<usize>();
        let sign = if statistics == Statistics::Fermi && inversions % 2 == 1 { -1.0 } else { 1.0 };
        let in_set: Vec<usize> = order.iter().filter(|&&p| inside[p]).map(|&p| ids[p]).collect();
        let out_set: Vec<usize> = order.iter().filter(|&&p| !inside[p]).map(|&p| ids[p]).collect();
        inside_ids.extend(in_set.iter().copied());
        outside_ids.extend(out_set.iter().copied());
        let label = |labels: &mut Vec<Vec<usize>>, set: Vec<usize>| match labels.iter().position(|l| *l == set) {
            Some(i) => i,
            None => {
                labels.push(set);
                labels.len() - 1
            }
        };
        let i = label(&mut inside_labels, in_set);
        let j = label(&mut outside_labels, out_set);
        terms.push((term.coefficient * sign, i, j));
    }
    let dim = inside_labels.len().max(outside_labels.len());
    let state = QmState::new(dim, terms)?;

    inside_ids.sort_unstable();
    inside_ids.dedup();
    outside_ids.sort_unstable();
    outside_ids.dedup();
    let mut max_overlap = 0.0f64;
    for &i in &inside_ids {
        for &o in &outside_ids {
            max_overlap = max_overlap.max(spatial_overlap(&packets[i], &packets[o]).norm());
        }
    }
    let mean = |ids: &[usize]| -> Option<f64> {
        (!ids.is_empty()).then(|| ids.iter().map(|&i| packets[i].profile().center).sum::<f64>() / ids.len() as f64)
    };
    let separation = match (mean(&inside_ids), mean(&outside_ids)) {
        (Some(a), Some(b)) => Some((b - a).abs()),
        _ => None,
    };
    Ok(DerivedReference {
        state,
        inside_labels,
        outside_labels,
        packets,
        max_overlap,
        separation,
    })
}

/// Runs the full pipeline once per separation of the two packet groups of
/// `base`, which must carry a separation sweep description.
pub fn overlap_scan(
    base: &crate::experiment::ExperimentConfig,
    separation: &crate::experiment::SeparationSweep,
    values: &[f64],
) -> Vec<crate::experiment::SweepPoint> {
    crate::experiment::separation_points(base, separation, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn maximally_entangled() {
        let s = 1.0 / 2f64.sqrt();
        let q = QmState::two_term(2, c(s), (0, 1), c(s), (1, 0)).unwrap();
        let rho = qm_density_matrix(&q).unwrap();
        assert!((rho.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((rho.matrix()[(1, 1)].re - 0.5).abs() < 1e-15);
        assert!(rho.matrix()[(0, 1)].norm() < 1e-15);
        for n in [1.0, 2.0, 3.0] {
            assert!((qm_renyi(&q, n).unwrap().entropy - LN_2).abs() < 1e-14);
        }
        assert!((qm_renyi(&q, 2.0).unwrap().power_sum - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_term_is_pure() {
        let q = QmState::new(3, vec![(c(2.0), 1, 2)]).unwrap();
        let eig = spectrum(&qm_density_matrix(&q).unwrap()).unwrap().eigenvalues;
        assert!((eig[0] - 1.0).abs() < 1e-14);
        assert!(qm_renyi(&q, 2.0).unwrap().entropy.abs() < 1e-14);
    }

    #[test]
    fn shared_second_index_is_a_product() {
        let (a, b) = (C64::new(0.6, 0.2), C64::new(0.3, -0.5));
        let q = QmState::new(2, vec![(a, 0, 0), (b, 1, 0)]).unwrap();
        let rho = qm_density_matrix(&q).unwrap();
        let norm = a.norm_sqr() + b.norm_sqr();
        assert!((rho.matrix()[(0, 1)] - a * b.conj() / norm).norm() < 1e-14);
        let eig = spectrum(&rho).unwrap().eigenvalues;
        assert!((eig[0] - 1.0).abs() < 1e-12 && eig[1].abs() < 1e-12);
        assert!(q.orthogonal_pair().is_none());
        assert!(qm_renyi(&q, 2.0).unwrap().entropy.abs() < 1e-12);
    }

    #[test]
    fn closed_form_examples() {
        let r = qm_renyi_closed_form(c(3f64.sqrt()), c(1.0), 2.0);
        assert!((r.power_sum - 0.625).abs() < 1e-15);
        assert!((r.entropy - 0.470_003_629_245_735_5).abs() < 1e-12);
        for n in [1.0, 2.0, 3.0, 0.5] {
            assert_eq!(qm_renyi_closed_form(c(1.0), c(0.0), n).entropy, 0.0);
        }
        let r = qm_renyi_closed_form(c(1.0), c(1.0), 2.0);
        assert!((r.power_sum - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_spectrum() {
        for &(ar, ai, br, bi) in &[(1.0, 0.0, 1.0, 0.0), (3f64.sqrt(), 0.0, 1.0, 0.0), (0.3, 0.4, -0.1, 0.9), (2.0, -1.0, 0.01, 0.0)] {
            let q = QmState::two_term(3, C64::new(ar, ai), (0, 2), C64::new(br, bi), (1, 0)).unwrap();
            for n in [1.0, 2.0, 3.0, 4.0, 0.5] {
                let closed = qm_renyi(&q, n).unwrap().entropy;
                let spectral = qm_renyi_spectral(&q, n).unwrap().entropy;
                assert!((closed - spectral).abs() < 1e-12, "{ar} {ai} {br} {bi} n={n}");
            }
        }
    }

    #[test]
    fn maximum_at_equal_weights() {
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 / 20.0).collect();
        for n in [1.0, 2.0, 3.0] {
            let (best, value) = grid
                .iter()
                .map(|&r| (r, qm_renyi_closed_form(c(r), c(1.0), n).entropy))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            assert_eq!(best, 1.0);
            assert!((value - LN_2).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_states() {
        assert_eq!(QmState::new(2, vec![]).unwrap_err(), QmError::Empty);
        assert!(matches!(QmState::new(2, vec![(c(1.0), 0, 2)]), Err(QmError::IndexOutOfRange { .. })));
        let zero = QmState::new(2, vec![(c(1.0), 0, 0), (c(-1.0), 0, 0)]).unwrap();
        assert_eq!(qm_density_matrix(&zero).unwrap_err(), QmError::ZeroNorm);
    }
}
