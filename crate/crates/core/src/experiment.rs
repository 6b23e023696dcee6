//! JSON experiment configs, the single-point pipeline, parameter sweeps and
//! their on-disk reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::entangle::{analyze_region, EntropyReport, Region};
use crate::excitations::{build_state, make_packet, Envelope, PacketOperator, PacketProfile, StateRecipe};
use crate::fock::{dim_cap, enumerate_basis_with_cap, Band, FockBasis, Statistics, C64};
use crate::model::{build_vacuum, modes_for, spectral_gap, Boundary, LatticeModel, ModelError, VacuumRegime};
use crate::qmref::{compare, derive_reference, QmState, ResidualRecord};
use crate::replica::{leading_decomposition, replica_trace_with_cap, LeadingDecomposition};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration errors, 3 for numerical
    /// failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config { .. } => 2,
            ExperimentError::Numerical(_) => 3,
            ExperimentError::Io(_) => 1,
        }
    }
}

fn config_error(path: impl Into<String>, message: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Config {
        path: path.into(),
        message: message.to_string(),
    }
}

fn numerical(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Numerical(e.to_string())
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub statistics: Statistics,
    pub sites: usize,
    #[serde(default)]
    pub species: Option<usize>,
    pub hopping: f64,
    pub mass: f64,
    #[serde(default)]
    pub regime: Option<VacuumRegime>,
    #[serde(default)]
    pub staggered: Option<bool>,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub boundary: Option<Boundary>,
}

impl ModelBlock {
    fn materialize(&mut self) {
        let fermi = self.statistics == Statistics::Fermi;
        self.species.get_or_insert(if fermi { 2 } else { 1 });
        let regime = *self.regime.get_or_insert(if fermi {
            VacuumRegime::Empty
        } else {
            VacuumRegime::BosonGround
        });
        self.staggered.get_or_insert(regime == VacuumRegime::HalfFilled);
        if fermi {
            self.n_max.get_or_insert(1);
        }
        self.boundary.get_or_insert(Boundary::Open);
    }

    pub fn to_model(&self) -> LatticeModel {
        let fermi = self.statistics == Statistics::Fermi;
        LatticeModel {
            statistics: self.statistics,
            sites: self.sites,
            species: self.species.unwrap_or(if fermi { 2 } else { 1 }),
            hopping: self.hopping,
            mass: self.mass,
            staggered: self.staggered.unwrap_or(false),
            regime: self.regime.unwrap_or(if fermi {
                VacuumRegime::Empty
            } else {
                VacuumRegime::BosonGround
            }),
            n_max: if fermi { None } else { self.n_max },
            boundary: self.boundary.unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub name: String,
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub species: usize,
    #[serde(default = "upper")]
    pub band: Band,
    #[serde(default)]
    pub envelope: Envelope,
}

fn upper() -> Band {
    Band::Upper
}

impl PacketSpec {
    pub fn profile(&self) -> PacketProfile {
        PacketProfile {
            center: self.center,
            width: self.width,
            species: self.species,
            band: self.band,
            envelope: self.envelope,
        }
    }
}

/// A real number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Real(f64),
    Complex([f64; 2]),
}

impl Coefficient {
    pub fn value(&self) -> C64 {
        match *self {
            Coefficient::Real(x) => C64::new(x, 0.0),
            Coefficient::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coefficient: Coefficient,
    /// Packet names; the term is `O_{p_1} O_{p_2} ⋯ |vac⟩`.
    pub packets: Vec<String>,
    /// Per-operator species overriding the packets' own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBlock {
    pub terms: Vec<TermSpec>,
    /// Explicit particle-level reference; derived from packet locations when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qm_reference: Option<QmState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionBlock {
    pub sites: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    #[serde(default = "default_orders")]
    pub orders: Vec<f64>,
    #[serde(default)]
    pub replica_check: bool,
    #[serde(default = "default_replica_orders")]
    pub replica_orders: Vec<usize>,
    #[serde(default = "default_region_cap")]
    pub region_cap: usize,
    #[serde(default = "default_replica_cap")]
    pub replica_cap: u64,
    /// Amplitude-count cap; the environment default applies when absent.
    #[serde(default)]
    pub dim_cap: Option<usize>,
    #[serde(default = "yes")]
    pub use_sectors: bool,
}

fn default_orders() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}
fn default_replica_orders() -> Vec<usize> {
    vec![2, 3]
}
fn default_region_cap() -> usize {
    crate::entangle::DEFAULT_REGION_CAP
}
fn default_replica_cap() -> u64 {
    crate::replica::DEFAULT_REPLICA_CAP as u64
}
fn yes() -> bool {
    true
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        AnalysisBlock {
            orders: default_orders(),
            replica_check: false,
            replica_orders: default_replica_orders(),
            region_cap: default_region_cap(),
            replica_cap: default_replica_cap(),
            dim_cap: None,
            use_sectors: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_directory() -> String {
    "qent-out".into()
}
fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into()]
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub packets: Vec<PacketSpec>,
    pub state: StateBlock,
    pub region: RegionBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ExperimentError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(if path == "." { "$".to_string() } else { path }, e.into_inner())
    })
}

/// Parses, fills defaults and checks a config document.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ExperimentError> {
    let config: ExperimentConfig = parse_json(text)?;
    config.validated()
}

impl ExperimentConfig {
    /// Copy with every default written out, after schema and physics checks.
    pub fn validated(mut self) -> Result<ExperimentConfig, ExperimentError> {
        self.model.materialize();
        if self.analysis.dim_cap.is_none() {
            self.analysis.dim_cap = Some(dim_cap());
        }
        self.check()?;
        Ok(self)
    }

    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check(&self) -> Result<(), ExperimentError> {
        let model = self.model.to_model();
        if self.model.statistics == Statistics::Fermi && self.model.n_max.is_some_and(|n| n != 1) {
            return Err(config_error("model.n_max", "fermions have n_max = 1"));
        }
        model.validate().map_err(|e| match e {
            ModelError::Config { param, message } => config_error(format!("model.{param}"), message),
            other => config_error("model", other),
        })?;
        spectral_gap(&model).map_err(|e| config_error("model", e))?;

        let mut names = BTreeMap::new();
        for (i, p) in self.packets.iter().enumerate() {
            if p.name.is_empty() {
                return Err(config_error(format!("packets[{i}].name"), "must not be empty"));
            }
            if names.insert(p.name.as_str(), i).is_some() {
                return Err(config_error(format!("packets[{i}].name"), format!("duplicate packet '{}'", p.name)));
            }
            p.profile()
                .validate(&model)
                .map_err(|e| config_error(format!("packets[{i}]"), e))?;
        }

        if self.state.terms.is_empty() {
            return Err(config_error("state.terms", "at least one term is required"));
        }
        for (t, term) in self.state.terms.iter().enumerate() {
            let c = term.coefficient.value();
            if !c.re.is_finite() || !c.im.is_finite() {
                return Err(config_error(format!("state.terms[{t}].coefficient"), "must be finite"));
            }
            for (j, name) in term.packets.iter().enumerate() {
                if !names.contains_key(name.as_str()) {
                    return Err(config_error(
                        format!("state.terms[{t}].packets[{j}]"),
                        format!("unknown packet '{name}'"),
                    ));
                }
            }
            if let Some(sp) = &term.species {
                if sp.len() != term.packets.len() {
                    return Err(config_error(
                        format!("state.terms[{t}].species"),
                        format!("{} entries for {} packets", sp.len(), term.packets.len()),
                    ));
                }
                if let Some(bad) = sp.iter().find(|&&s| s >= model.species) {
                    return Err(config_error(
                        format!("state.terms[{t}].species"),
                        format!("species {bad} but the model has {}", model.species),
                    ));
                }
            }
        }
        if let Some(q) = &self.state.qm_reference {
            q.validate().map_err(|e| config_error("state.qm_reference", e))?;
        }

        Region::new(&self.region.sites, model.sites, model.species).map_err(|e| config_error("region.sites", e))?;

        let a = &self.analysis;
        if a.orders.is_empty() {
            return Err(config_error("analysis.orders", "at least one order is required"));
        }
        if let Some((i, n)) = a.orders.iter().enumerate().find(|(_, &n)| !(n > 0.0) || !n.is_finite()) {
            return Err(config_error(format!("analysis.orders[{i}]"), format!("order must be positive, got {n}")));
        }
        if let Some((i, n)) = a.replica_orders.iter().enumerate().find(|(_, &n)| n < 2) {
            return Err(config_error(format!("analysis.replica_orders[{i}]"), format!("replica number must be >= 2, got {n}")));
        }
        if a.region_cap == 0 {
            return Err(config_error("analysis.region_cap", "must be positive"));
        }
        if a.replica_cap == 0 {
            return Err(config_error("analysis.replica_cap", "must be positive"));
        }
        if a.dim_cap == Some(0) {
            return Err(config_error("analysis.dim_cap", "must be positive"));
        }
        for (i, f) in self.output.formats.iter().enumerate() {
            if f != "json" && f != "csv" {
                return Err(config_error(format!("output.formats[{i}]"), format!("unknown format '{f}'")));
            }
        }

        let sectors = self.sectors();
        let cap = a.dim_cap.unwrap_or_else(dim_cap);
        enumerate_basis_with_cap(model.statistics, model.mode_count(), model.n_max, sectors.as_deref(), cap)
            .map_err(|e| config_error("model", e))?;
        Ok(())
    }

    /// Particle-number sectors the state can reach, or `None` for the full
    /// (truncated) Fock space.
    pub fn sectors(&self) -> Option<Vec<usize>> {
        let model = self.model.to_model();
        if !self.analysis.use_sectors {
            return None;
        }
        let base = match model.regime {
            VacuumRegime::Empty => 0,
            VacuumRegime::HalfFilled => model.species * model.sites / 2,
            VacuumRegime::BosonGround => return None,
        };
        let longest = self.state.terms.iter().map(|t| t.packets.len()).max().unwrap_or(0);
        Some((base..=base + longest).collect())
    }
}

/// Everything the pipeline needs, built once per config.
struct Prepared {
    model: LatticeModel,
    basis: Arc<FockBasis>,
    vacuum: crate::fock::StateVector,
    recipe: StateRecipe,
    labels: Vec<(PacketOperator, String)>,
    region: Region,
    gap: f64,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let model = config.model.to_model();
    let gap = spectral_gap(&model).map_err(numerical)?;
    let modes = modes_for(&model).map_err(numerical)?;
    let sectors = config.sectors();
    let cap = config.analysis.dim_cap.unwrap_or_else(dim_cap);
    let basis = Arc::new(
        enumerate_basis_with_cap(model.statistics, model.mode_count(), model.n_max, sectors.as_deref(), cap)
            .map_err(|e| config_error("model", e))?,
    );
    let vacuum = build_vacuum(&model, &modes, &basis).map_err(numerical)?;

    let specs: BTreeMap<&str, &PacketSpec> = config.packets.iter().map(|p| (p.name.as_str(), p)).collect();
    let mut cache: BTreeMap<(String, usize), PacketOperator> = BTreeMap::new();
    let mut labels: Vec<(PacketOperator, String)> = Vec::new();
    let mut recipe = StateRecipe::new();
    for (t, term) in config.state.terms.iter().enumerate() {
        let mut ops = Vec::new();
        for (j, name) in term.packets.iter().enumerate() {
            let spec = specs
                .get(name.as_str())
                .ok_or_else(|| config_error(format!("state.terms[{t}].packets[{j}]"), format!("unknown packet '{name}'")))?;
            let species = term.species.as_ref().map_or(spec.species, |s| s[j]);
            let key = (name.clone(), species);
            if !cache.contains_key(&key) {
                let profile = spec.profile().with_species(species);
                let op = make_packet(&profile, &model, &modes, Some(&vacuum))
                    .map_err(|e| config_error(format!("state.terms[{t}].packets[{j}]"), e))?;
                let label = if species == spec.species { name.clone() } else { format!("{name}[{species}]") };
                labels.push((op.clone(), label));
                cache.insert(key.clone(), op);
            }
            ops.push(cache[&key].clone());
        }
        recipe = recipe.term(term.coefficient.value(), ops);
    }
    let region = Region::new(&config.region.sites, model.sites, model.species).map_err(|e| config_error("region.sites", e))?;
    Ok(Prepared {
        model,
        basis,
        vacuum,
        recipe,
        labels,
        region,
        gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    /// `"derived"` from packet locations or `"config"`.
    pub source: String,
    pub state: QmState,
    pub inside_labels: Vec<Vec<String>>,
    pub outside_labels: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub basis_dim: usize,
    pub sectors: Option<Vec<usize>>,
    pub spectral_gap: f64,
    pub raw_norm: f64,
    /// `N·√(Σ|a|²)`.
    pub normalization_ratio: f64,
    pub leakage: f64,
    pub region_dim_state: usize,
    pub region_dim_vacuum: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaEntry {
    pub order: usize,
    /// `"state"` or `"vacuum"`.
    pub target: String,
    pub replica: f64,
    pub spectral: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaCheck {
    pub entries: Vec<ReplicaEntry>,
    pub max_deviation: f64,
    pub skipped: Vec<String>,
}

/// One fully evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub entropy: EntropyReport,
    pub residuals: ResidualRecord,
    pub reference: ReferenceSummary,
    pub leading: Vec<LeadingDecomposition>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replica: Option<ReplicaCheck>,
}

/// Runs the state → reduced density matrix → entropy → residual pipeline.
pub fn evaluate(config: &ExperimentConfig) -> Result<Evaluation, ExperimentError> {
    let p = prepare(config)?;
    let built = build_state(&p.recipe, &p.vacuum).map_err(numerical)?;
    let a = &config.analysis;
    let analysis = analyze_region(&built.state, &p.vacuum, &p.region, &a.orders, a.region_cap).map_err(numerical)?;

    let derived = derive_reference(&p.recipe, p.region.sites(), p.model.statistics).map_err(numerical)?;
    let name_of = |id: &usize| {
        let op = &derived.packets[*id];
        p.labels
            .iter()
            .find(|(o, _)| o == op)
            .map_or_else(|| format!("#{id}"), |(_, l)| l.clone())
    };
    let names = |sets: &[Vec<usize>]| -> Vec<Vec<String>> { sets.iter().map(|s| s.iter().map(name_of).collect()).collect() };
    let reference = match &config.state.qm_reference {
        Some(q) => ReferenceSummary {
            source: "config".into(),
            state: q.clone(),
            inside_labels: Vec::new(),
            outside_labels: Vec::new(),
        },
        None => ReferenceSummary {
            source: "derived".into(),
            state: derived.state.clone(),
            inside_labels: names(&derived.inside_labels),
            outside_labels: names(&derived.outside_labels),
        },
    };

    let mut residuals = compare(&analysis.report, &reference.state).map_err(numerical)?;
    let ratio = built.normalization_ratio(&p.recipe);
    residuals.separation = derived.separation;
    residuals.overlap = Some(derived.max_overlap);
    residuals.norm_dev = Some((ratio - 1.0).abs());

    let mut leading = Vec::new();
    for entry in &analysis.report.renyi {
        if entry.order.fract() == 0.0 && entry.order >= 2.0 {
            let n = entry.order as usize;
            let qm = crate::qmref::qm_renyi(&reference.state, entry.order).map_err(numerical)?.power_sum;
            leading.push(leading_decomposition(n, entry.r_state, entry.r_vacuum, qm, ratio));
        }
    }

    let replica = a.replica_check.then(|| {
        let mut entries = Vec::new();
        let mut skipped = Vec::new();
        for &n in &a.replica_orders {
            for (target, rho, eig) in [
                ("state", &analysis.rho_state, &analysis.eigen_state),
                ("vacuum", &analysis.rho_vacuum, &analysis.eigen_vacuum),
            ] {
                let spectral: f64 = eig.iter().map(|l| l.powi(n as i32)).sum();
                match replica_trace_with_cap(rho, n, a.replica_cap as u128) {
                    Ok(r) => entries.push(ReplicaEntry {
                        order: n,
                        target: target.into(),
                        replica: r,
                        spectral,
                        deviation: (r - spectral).abs(),
                    }),
                    Err(e) => skipped.push(format!("{target} n={n}: {e}")),
                }
            }
        }
        let max_deviation = entries.iter().map(|e| e.deviation).fold(0.0, f64::max);
        ReplicaCheck {
            entries,
            max_deviation,
            skipped,
        }
    });

    Ok(Evaluation {
        diagnostics: Diagnostics {
            basis_dim: p.basis.dim(),
            sectors: p.basis.sectors().map(|s| s.to_vec()),
            spectral_gap: p.gap,
            raw_norm: built.raw_norm,
            normalization_ratio: ratio,
            leakage: built.leakage,
            region_dim_state: analysis.rho_state.dim(),
            region_dim_vacuum: analysis.rho_vacuum.dim(),
        },
        entropy: analysis.report,
        residuals,
        reference,
        leading,
        replica,
    })
}

/// Rounds `x` to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Formats `x` with at most 12 significant digits.
pub fn fmt12(x: f64) -> String {
    let r = round12(x) + 0.0;
    if r != 0.0 && (r.abs() < 1e-4 || r.abs() >= 1e15) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round12).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 12 significant digits.
pub fn to_report_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report serializes");
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(dir, e))?;
    tmp.write_all(contents).map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ExperimentConfig,
    pub version: String,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub entropy: EntropyReport,
    pub residuals: ResidualRecord,
    pub reference: ReferenceSummary,
    pub leading: Vec<LeadingDecomposition>,
    pub diagnostics: Diagnostics,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub evaluation: Evaluation,
    pub report_path: PathBuf,
    pub replica_path: Option<PathBuf>,
}

/// Evaluates `config` and writes `report.json` (and `replica_check.json`
/// when requested) into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, ExperimentError> {
    let start = Instant::now();
    let evaluation = evaluate(config)?;
    let report = Report {
        entropy: evaluation.entropy.clone(),
        residuals: evaluation.residuals.clone(),
        reference: evaluation.reference.clone(),
        leading: evaluation.leading.clone(),
        diagnostics: evaluation.diagnostics.clone(),
        provenance: Provenance {
            config: config.clone(),
            version: VERSION.into(),
            timing: Timing {
                elapsed_seconds: start.elapsed().as_secs_f64(),
            },
        },
    };
    let report_path = out_dir.join("report.json");
    write_atomic(&report_path, to_report_json(&report).as_bytes())?;
    let replica_path = match &evaluation.replica {
        Some(check) => {
            let path = out_dir.join("replica_check.json");
            write_atomic(&path, to_report_json(check).as_bytes())?;
            Some(path)
        }
        None => None,
    };
    Ok(RunOutcome {
        evaluation,
        report_path,
        replica_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationSweep {
    pub values: Vec<f64>,
    /// Midpoint between the two packet groups.
    pub pivot: f64,
    /// Packets placed at `pivot − d/2`.
    pub left: Vec<String>,
    /// Packets placed at `pivot + d/2`.
    pub right: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexPattern {
    pub label: String,
    /// Species of every operator, term by term.
    pub species: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepParameter {
    Separation(SeparationSweep),
    /// Region `start, start+1, …, start+k−1` for each `k`.
    RegionSize {
        values: Vec<usize>,
        #[serde(default)]
        start: usize,
    },
    /// Two-term states with `a = r`, `b = 1`.
    CoefficientRatio { values: Vec<f64> },
    IndexPattern { patterns: Vec<IndexPattern> },
}

impl SweepParameter {
    pub fn kind(&self) -> &'static str {
        match self {
            SweepParameter::Separation(_) => "separation",
            SweepParameter::RegionSize { .. } => "region_size",
            SweepParameter::CoefficientRatio { .. } => "coefficient_ratio",
            SweepParameter::IndexPattern { .. } => "index_pattern",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub sweep: SweepParameter,
}

pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec, ExperimentError> {
    let mut spec: SweepSpec = parse_json(text)?;
    spec.base = spec.base.validated().map_err(|e| match e {
        ExperimentError::Config { path, message } => config_error(format!("base.{path}"), message),
        other => other,
    })?;
    spec.check()?;
    Ok(spec)
}

impl SweepSpec {
    fn check(&self) -> Result<(), ExperimentError> {
        let names: Vec<&str> = self.base.packets.iter().map(|p| p.name.as_str()).collect();
        let empty = |len: usize| if len == 0 { Err(config_error("sweep.values", "no sweep values")) } else { Ok(()) };
        match &self.sweep {
            SweepParameter::Separation(s) => {
                empty(s.values.len())?;
                for (side, list) in [("left", &s.left), ("right", &s.right)] {
                    if list.is_empty() {
                        return Err(config_error(format!("sweep.{side}"), "needs at least one packet"));
                    }
                    if let Some((i, n)) = list.iter().enumerate().find(|(_, n)| !names.contains(&n.as_str())) {
                        return Err(config_error(format!("sweep.{side}[{i}]"), format!("unknown packet '{n}'")));
                    }
                }
            }
            SweepParameter::RegionSize { values, .. } => empty(values.len())?,
            SweepParameter::CoefficientRatio { values } => {
                empty(values.len())?;
                if self.base.state.terms.len() != 2 {
                    return Err(config_error("base.state.terms", "a coefficient sweep needs exactly two terms"));
                }
            }
            SweepParameter::IndexPattern { patterns } => {
                if patterns.is_empty() {
                    return Err(config_error("sweep.patterns", "no patterns"));
                }
                for (i, p) in patterns.iter().enumerate() {
                    if p.species.len() != self.base.state.terms.len() {
                        return Err(config_error(
                            format!("sweep.patterns[{i}].species"),
                            format!("{} terms in the pattern, {} in the state", p.species.len(), self.base.state.terms.len()),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// `(value, label, config)` per sweep point, in sweep order.
    pub fn point_configs(&self) -> Vec<(f64, String, ExperimentConfig)> {
        let base = &self.base;
        match &self.sweep {
            SweepParameter::Separation(s) => s.values.iter().map(|&d| (d, String::new(), separated(base, s, d))).collect(),
            SweepParameter::RegionSize { values, start } => values
                .iter()
                .map(|&k| {
                    let mut c = base.clone();
                    c.region.sites = (*start..start + k).collect();
                    (k as f64, String::new(), c)
                })
                .collect(),
            SweepParameter::CoefficientRatio { values } => values
                .iter()
                .map(|&r| {
                    let mut c = base.clone();
                    c.state.terms[0].coefficient = Coefficient::Real(r);
                    c.state.terms[1].coefficient = Coefficient::Real(1.0);
                    (r, String::new(), c)
                })
                .collect(),
            SweepParameter::IndexPattern { patterns } => patterns
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut c = base.clone();
                    for (term, sp) in c.state.terms.iter_mut().zip(&p.species) {
                        term.species = Some(sp.clone());
                    }
                    (i as f64, p.label.clone(), c)
                })
                .collect(),
        }
    }
}

fn separated(base: &ExperimentConfig, s: &SeparationSweep, d: f64) -> ExperimentConfig {
    let mut c = base.clone();
    for p in c.packets.iter_mut() {
        if s.left.contains(&p.name) {
            p.center = s.pivot - d / 2.0;
        } else if s.right.contains(&p.name) {
            p.center = s.pivot + d / 2.0;
        }
    }
    c
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub label: String,
    pub result: Result<Evaluation, String>,
}

impl SweepPoint {
    pub fn evaluation(&self) -> Option<&Evaluation> {
        self.result.as_ref().ok()
    }

    /// `Δ_n` of the point.
    pub fn delta(&self, order: f64) -> Option<f64> {
        self.evaluation().and_then(|e| e.residuals.delta_for(order))
    }

    pub fn subtracted(&self, order: f64) -> Option<f64> {
        self.evaluation().and_then(|e| e.entropy.subtracted(order))
    }

    pub fn qm(&self, order: f64) -> Option<f64> {
        self.evaluation().and_then(|e| e.residuals.qm_for(order))
    }
}

fn evaluate_point(value: f64, label: String, config: ExperimentConfig) -> SweepPoint {
    let result = config.validated().and_then(|c| evaluate(&c)).map_err(|e| e.to_string());
    SweepPoint { value, label, result }
}

/// Evaluates every point, on `jobs` worker threads when `jobs > 1`, keeping
/// sweep order.
pub fn evaluate_points(points: Vec<(f64, String, ExperimentConfig)>, jobs: usize) -> Vec<SweepPoint> {
    if jobs <= 1 {
        return points.into_iter().map(|(v, l, c)| evaluate_point(v, l, c)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| points.into_par_iter().map(|(v, l, c)| evaluate_point(v, l, c)).collect()),
        Err(_) => points.into_iter().map(|(v, l, c)| evaluate_point(v, l, c)).collect(),
    }
}

/// Full pipeline at each separation.
pub fn separation_points(base: &ExperimentConfig, s: &SeparationSweep, values: &[f64]) -> Vec<SweepPoint> {
    let points = values.iter().map(|&d| (d, String::new(), separated(base, s, d))).collect();
    evaluate_points(points, 1)
}

pub const CSV_COLUMNS: [&str; 17] = [
    "separation",
    "overlap_abs",
    "delta_S1",
    "delta_S2",
    "delta_S3",
    "norm_dev",
    "vac_S1",
    "vac_S2",
    "value",
    "label",
    "sub_S1",
    "sub_S2",
    "sub_S3",
    "qm_S1",
    "qm_S2",
    "qm_S3",
    "error",
];

/// CSV table of a sweep, one row per point.
pub fn sweep_csv(points: &[SweepPoint]) -> Result<String, ExperimentError> {
    let opt = |x: Option<f64>| x.map(fmt12).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| ExperimentError::Io(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for p in points {
        let e = p.evaluation();
        let r = e.map(|e| &e.residuals);
        let vac = |n: f64| e.and_then(|e| e.entropy.vacuum_entropy(n));
        w.write_record([
            opt(r.and_then(|r| r.separation)),
            opt(r.and_then(|r| r.overlap)),
            opt(p.delta(1.0)),
            opt(p.delta(2.0)),
            opt(p.delta(3.0)),
            opt(r.and_then(|r| r.norm_dev)),
            opt(vac(1.0)),
            opt(vac(2.0)),
            fmt12(p.value),
            p.label.clone(),
            opt(p.subtracted(1.0)),
            opt(p.subtracted(2.0)),
            opt(p.subtracted(3.0)),
            opt(p.qm(1.0)),
            opt(p.qm(2.0)),
            opt(p.qm(3.0)),
            p.result.as_ref().err().cloned().unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremePoint {
    pub value: f64,
    pub label: String,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub kind: String,
    pub points: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Order whose `Δ_n` drives the verdict (2 when available).
    pub order: f64,
    /// `Δ_n` of the last successful point below that of the first.
    pub decreasing: Option<bool>,
    pub all_positive: Option<bool>,
    pub first: Option<ExtremePoint>,
    pub last: Option<ExtremePoint>,
    pub min: Option<ExtremePoint>,
    pub max: Option<ExtremePoint>,
    pub version: String,
}

pub fn summarize(kind: &str, points: &[SweepPoint]) -> SweepSummary {
    let succeeded = points.iter().filter(|p| p.result.is_ok()).count();
    let order = points
        .iter()
        .filter_map(|p| p.evaluation())
        .next()
        .map(|e| if e.residuals.orders.contains(&2.0) { 2.0 } else { e.residuals.orders.first().copied().unwrap_or(1.0) })
        .unwrap_or(2.0);
    let ok: Vec<ExtremePoint> = points
        .iter()
        .filter_map(|p| {
            p.delta(order).map(|delta| ExtremePoint {
                value: p.value,
                label: p.label.clone(),
                delta,
            })
        })
        .collect();
    let pick = |cmp: fn(&ExtremePoint, &ExtremePoint) -> std::cmp::Ordering| ok.iter().cloned().max_by(cmp);
    SweepSummary {
        kind: kind.into(),
        points: points.len(),
        succeeded,
        failed: points.len() - succeeded,
        order,
        decreasing: (ok.len() >= 2).then(|| ok[ok.len() - 1].delta < ok[0].delta),
        all_positive: (!ok.is_empty()).then(|| ok.iter().all(|p| p.delta > 0.0)),
        first: ok.first().cloned(),
        last: ok.last().cloned(),
        min: pick(|a, b| b.delta.total_cmp(&a.delta)),
        max: pick(|a, b| a.delta.total_cmp(&b.delta)),
        version: VERSION.into(),
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub summary: SweepSummary,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Runs every sweep point and writes `sweep.csv` and `summary.json`.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path, jobs: usize) -> Result<SweepOutcome, ExperimentError> {
    let points = evaluate_points(spec.point_configs(), jobs);
    let summary = summarize(spec.sweep.kind(), &points);
    let csv_path = out_dir.join("sweep.csv");
    write_atomic(&csv_path, sweep_csv(&points)?.as_bytes())?;
    let summary_path = out_dir.join("summary.json");
    write_atomic(&summary_path, to_report_json(&summary).as_bytes())?;
    Ok(SweepOutcome {
        points,
        summary,
        csv_path,
        summary_path,
    })
}
