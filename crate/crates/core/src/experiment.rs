//! Experiment files and report bundles.
//!
//! An experiment is a TOML file naming a scenario, a set of input states,
//! measurement families on partitions of the output sites, and the analyses
//! to run. Running it produces `report.jsonl` (one JSON record per line) and
//! CSV tables, written only after every analysis has finished.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::compat::{
    constructive_parent, jm_feasibility_search, marginalizing_witness, verify_jm_witness, commutation_chain_check,
    JmSearchOptions, JmStatus, JmWitness, StateSet,
};
use crate::covering::{
    counterexample_is_sound, non_pair_covering, non_tuple_covering, theorem1_substitutes, witness_is_sound,
    CoveringReport, Partition, TupleMode, TupleOptions, DEFAULT_TUPLE_CAP,
};
use crate::dynamics::{
    choi_state, find_markov_blanket, random_channel, verify_theorem_bound, BlanketConfig, BoundTrial, Channel,
    ChoiState,
};
use crate::error::{Error, Result};
use crate::measurement::{
    outcome_probabilities, redundancy_audit, redundancy_audit_over, verify_perfect_imprint_lemma, Povm, RecordAudit,
};
use crate::random::{mix_seed, random_density, random_pure, random_unitary, seeded};
use crate::scenarios::{
    block_majority_povm, build_grid_state, classical_copy_channel, ghz_povm, grid_channel, grid_logical_states,
    grid_partitions, noisy_grid_images, parity_povm, GridScenario, LinearImages, TiltedRepetition,
};
use crate::tensor::{CMatrix, CVector, DenseOperator, SiteSpace, State, StateVector, C64};

/// Largest output dimension for which mixed states are formed.
pub const MAX_MIXED_DIM: usize = 1 << 10;
/// Largest output dimension for pure states.
pub const MAX_PURE_DIM: usize = 1 << 16;
pub const DEFAULT_CONTRACT_TOL: f64 = 1e-9;
/// Slack for the perfect-imprint and commutation-chain residuals.
pub const PURE_IDENTITY_TOL: f64 = 1e-8;

fn default_tol() -> f64 {
    DEFAULT_CONTRACT_TOL
}

fn default_alpha() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_rank() -> usize {
    1
}

fn default_trials() -> usize {
    50
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Slack added to every analytic bound before it counts as violated.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub states: StatesConfig,
    #[serde(default)]
    pub families: Vec<FamilyConfig>,
    pub audit: Option<AuditConfig>,
    pub covering: Option<CoveringConfig>,
    pub jm: Option<JmConfig>,
    pub certify: Option<CertifyConfig>,
    pub lemma: Option<FamilyRef>,
    pub chain: Option<ChainConfig>,
    pub blanket: Option<BlanketSection>,
    pub bound: Option<BoundConfig>,
}

/// Complex amplitudes as `[re, im]` pairs.
pub type Amplitudes = Vec<[f64; 2]>;

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioConfig {
    Grid {
        n: usize,
        #[serde(default = "default_alpha")]
        alpha: [f64; 2],
        #[serde(default)]
        beta: [f64; 2],
        #[serde(default)]
        noise: f64,
    },
    ClassicalCopy {
        d: usize,
        copy_sites: Vec<usize>,
        #[serde(default)]
        filler_sites: Vec<usize>,
        input: Option<Amplitudes>,
    },
    RandomChannel {
        d_in: usize,
        site_dims: Vec<usize>,
        #[serde(default = "default_rank")]
        rank: usize,
        channel_seed: Option<u64>,
        input: Option<Amplitudes>,
    },
    Kraus {
        input_dim: usize,
        output_dims: Vec<usize>,
        kraus: Vec<EncodedMatrix>,
        input: Option<Amplitudes>,
    },
    TiltedRepetition {
        n_sites: usize,
        tilt: f64,
        #[serde(default)]
        tilt_step: f64,
        input: Option<Amplitudes>,
    },
}

/// A complex matrix stored row-major as little-endian f64 (re, im) pairs,
/// base64 encoded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

pub fn encode_matrix(m: &CMatrix) -> EncodedMatrix {
    let mut bytes = Vec::with_capacity(m.nrows() * m.ncols() * 16);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            bytes.extend_from_slice(&m[(r, c)].re.to_le_bytes());
            bytes.extend_from_slice(&m[(r, c)].im.to_le_bytes());
        }
    }
    EncodedMatrix { rows: m.nrows(), cols: m.ncols(), data: B64.encode(bytes) }
}

pub fn decode_matrix(e: &EncodedMatrix) -> Result<CMatrix> {
    let bytes = B64.decode(e.data.trim()).map_err(|err| Error::Config(format!("bad base64 matrix: {err}")))?;
    if bytes.len() != e.rows * e.cols * 16 {
        return Err(Error::Config(format!(
            "matrix data has {} bytes, expected {} for {}×{}",
            bytes.len(),
            e.rows * e.cols * 16,
            e.rows,
            e.cols
        )));
    }
    let f = |k: usize| f64::from_le_bytes(bytes[k * 8..k * 8 + 8].try_into().expect("8 bytes"));
    Ok(CMatrix::from_fn(e.rows, e.cols, |r, c| {
        let k = 2 * (r * e.cols + c);
        C64::new(f(k), f(k + 1))
    }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomKind {
    #[default]
    Mixed,
    Pure,
}

/// Inputs σ fed through the scenario map. The scenario's own input always
/// comes first.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesConfig {
    #[serde(default)]
    pub spanning: bool,
    #[serde(default)]
    pub random: usize,
    #[serde(default)]
    pub random_kind: RandomKind,
    #[serde(default)]
    pub inputs: Vec<Amplitudes>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PovmKind {
    /// (|0…0⟩ ± |1…1⟩)/√2 and the remainder.
    #[serde(alias = "row")]
    Ghz,
    #[serde(alias = "column_parity")]
    Parity,
    Computational,
    /// Computational readout with a majority vote, ties split evenly.
    Majority,
    Custom,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectConfig {
    pub label: String,
    /// Rows of `[re, im]` entries.
    pub matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub label: String,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub name: String,
    /// `grid_rows` or `grid_columns`; otherwise `blocks` is required.
    pub partition: Option<String>,
    pub blocks: Option<Vec<Vec<usize>>>,
    pub povm: PovmKind,
    /// Local effects for `custom`, placed on every block.
    #[serde(default)]
    pub effects: Vec<EffectConfig>,
    #[serde(default)]
    pub coarse_grain: Vec<GroupConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub families: Vec<String>,
    pub max_delta: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringConfig {
    #[serde(default)]
    pub pairs: Vec<[String; 2]>,
    #[serde(default)]
    pub tuples: Vec<Vec<String>>,
    #[serde(default)]
    pub mode: TupleMode,
    pub cap: Option<u128>,
    /// Expected value of every predicate checked.
    pub expect: Option<bool>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberRef {
    pub family: String,
    pub block: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Feasible,
    Infeasible,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JmConfig {
    pub members: Vec<MemberRef>,
    pub max_iters: Option<usize>,
    pub accept: Option<f64>,
    pub expect: Option<Expectation>,
}

/// Constructive parents: two families use the pair substitutes, three or
/// more use the tuple witnesses.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub families: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyRef {
    pub family: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub f: String,
    pub g: String,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlanketSection {
    pub w_q: Option<usize>,
    pub w_f: Option<usize>,
    pub f_samples: Option<usize>,
    pub xi_f_samples: Option<usize>,
    pub random_bases: Option<usize>,
    pub eigenbasis: Option<bool>,
    pub eigenbasis_max_dim: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPovm {
    #[default]
    RandomBasis,
    Computational,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub povm: TrialPovm,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// Analyses an experiment can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operation {
    Audit,
    Covering,
    Jm,
    Certify,
    Lemma,
    Chain,
    Blanket,
    Bound,
}

impl Operation {
    pub const ALL: [Operation; 8] = [
        Operation::Audit,
        Operation::Covering,
        Operation::Jm,
        Operation::Certify,
        Operation::Lemma,
        Operation::Chain,
        Operation::Blanket,
        Operation::Bound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operation::Audit => "audit",
            Operation::Covering => "covering",
            Operation::Jm => "jm",
            Operation::Certify => "certify",
            Operation::Lemma => "lemma",
            Operation::Chain => "chain",
            Operation::Blanket => "blanket",
            Operation::Bound => "bound",
        }
    }

    fn configured(self, cfg: &ExperimentConfig) -> bool {
        match self {
            Operation::Audit => cfg.audit.is_some(),
            Operation::Covering => cfg.covering.is_some(),
            Operation::Jm => cfg.jm.is_some(),
            Operation::Certify => cfg.certify.is_some(),
            Operation::Lemma => cfg.lemma.is_some(),
            Operation::Chain => cfg.chain.is_some(),
            Operation::Blanket => cfg.blanket.is_some(),
            Operation::Bound => cfg.bound.is_some(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportBundle {
    pub records: Vec<Value>,
    pub tables: BTreeMap<String, CsvTable>,
    pub violations: Vec<String>,
}

impl ReportBundle {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    /// Writes `report.jsonl` and one `<name>.csv` per table. Everything is
    /// rendered before the first file is touched.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = vec![(dir.join("report.jsonl"), self.jsonl())];
        for (name, t) in &self.tables {
            files.push((dir.join(format!("{name}.csv")), t.to_csv()?));
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        for (path, text) in &files {
            std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }

    fn table(&mut self, name: &str, header: &[&str]) -> &mut CsvTable {
        self.tables.entry(name.to_string()).or_insert_with(|| CsvTable::new(header))
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn sites(s: &[usize]) -> String {
    s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// How inputs on the reference register become output states.
enum Map {
    Channel(Channel),
    Images(LinearImages),
    Tilted(TiltedRepetition),
}

pub struct Scenario {
    map: Map,
    output: SiteSpace,
    d_in: usize,
    default_input: StateVector,
    grid_n: Option<usize>,
}

#[derive(Clone, Debug)]
pub enum Input {
    Pure(StateVector),
    Mixed(DenseOperator),
}

impl Input {
    pub fn density(&self) -> DenseOperator {
        match self {
            Input::Pure(v) => v.to_density(),
            Input::Mixed(r) => r.clone(),
        }
    }
}

fn amplitudes(a: &[[f64; 2]], d: usize) -> Result<StateVector> {
    if a.len() != d {
        return Err(Error::Config(format!("input has {} amplitudes, expected {d}", a.len())));
    }
    let v = CVector::from_iterator(d, a.iter().map(|p| C64::new(p[0], p[1])));
    StateVector::normalized(SiteSpace::new(vec![d])?, v).map_err(|e| Error::Config(format!("input: {e}")))
}

fn input_or_zero(input: &Option<Amplitudes>, d: usize) -> Result<StateVector> {
    match input {
        Some(a) => amplitudes(a, d),
        None => StateVector::basis(SiteSpace::new(vec![d])?, 0),
    }
}

impl Scenario {
    pub fn build(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        match cfg {
            ScenarioConfig::Grid { n, alpha, beta, noise } => {
                let s = GridScenario::new(*n, C64::new(alpha[0], alpha[1]), C64::new(beta[0], beta[1]), *noise)?;
                let default_input = amplitudes(&[*alpha, *beta], 2)?;
                let (map, output) = if *noise == 0.0 {
                    let ch = grid_channel(s.n)?;
                    let out = ch.output_space().clone();
                    (Map::Channel(ch), out)
                } else {
                    let im = noisy_grid_images(s.n, s.noise_p)?;
                    let out = im.output_space().clone();
                    (Map::Images(im), out)
                };
                Ok(Self { map, output, d_in: 2, default_input, grid_n: Some(s.n) })
            }
            ScenarioConfig::ClassicalCopy { d, copy_sites, filler_sites, input } => {
                let ch = classical_copy_channel(*d, copy_sites, filler_sites)?;
                Self::from_channel(ch, input)
            }
            ScenarioConfig::RandomChannel { d_in, site_dims, rank, channel_seed, input } => {
                let dim: usize = site_dims.iter().product();
                if dim * d_in * rank > MAX_PURE_DIM {
                    return Err(Error::Envelope(format!("random channel of size {} exceeds {MAX_PURE_DIM}", dim * d_in * rank)));
                }
                let ch = random_channel(*d_in, site_dims, *rank, channel_seed.unwrap_or(mix_seed(seed, 1)))?;
                Self::from_channel(ch, input)
            }
            ScenarioConfig::Kraus { input_dim, output_dims, kraus, input } => {
                let ks = kraus.iter().map(decode_matrix).collect::<Result<Vec<_>>>()?;
                let ch = Channel::new(SiteSpace::new(vec![*input_dim])?, SiteSpace::new(output_dims.clone())?, ks)?;
                Self::from_channel(ch, input)
            }
            ScenarioConfig::TiltedRepetition { n_sites, tilt, tilt_step, input } => {
                let t = TiltedRepetition { n_sites: *n_sites, tilt: *tilt, tilt_step: *tilt_step };
                t.logical_states()?;
                Ok(Self {
                    map: Map::Tilted(t),
                    output: SiteSpace::qubits(*n_sites),
                    d_in: 2,
                    default_input: input_or_zero(input, 2)?,
                    grid_n: None,
                })
            }
        }
    }

    fn from_channel(ch: Channel, input: &Option<Amplitudes>) -> Result<Self> {
        let d = ch.input_dim();
        let output = ch.output_space().clone();
        if output.total_dim() > MAX_PURE_DIM {
            return Err(Error::Envelope(format!("output dimension {} exceeds {MAX_PURE_DIM}", output.total_dim())));
        }
        Ok(Self { default_input: input_or_zero(input, d)?, map: Map::Channel(ch), output, d_in: d, grid_n: None })
    }

    pub fn output_space(&self) -> &SiteSpace {
        &self.output
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn default_input(&self) -> &StateVector {
        &self.default_input
    }

    /// Pure inputs through isometries stay pure.
    pub fn image(&self, input: &Input) -> Result<State> {
        match (&self.map, input) {
            (Map::Channel(ch), Input::Pure(v)) if ch.kraus().len() == 1 => {
                let out = &ch.kraus()[0] * v.amplitudes();
                Ok(State::Pure(StateVector::normalized(self.output.clone(), out)?))
            }
            (Map::Tilted(t), Input::Pure(v)) => Ok(State::Pure(t.encode(v)?)),
            (Map::Tilted(_), Input::Mixed(_)) => {
                Err(Error::Config("the tilted repetition scenario only accepts pure inputs".into()))
            }
            (Map::Channel(ch), i) => {
                self.check_mixed()?;
                Ok(State::Mixed(ch.apply(&i.density())?))
            }
            (Map::Images(im), i) => Ok(State::Mixed(im.apply(&i.density())?)),
        }
    }

    fn check_mixed(&self) -> Result<()> {
        if self.output.total_dim() > MAX_MIXED_DIM {
            return Err(Error::Envelope(format!(
                "mixed states on dimension {} exceed {MAX_MIXED_DIM}",
                self.output.total_dim()
            )));
        }
        Ok(())
    }

    pub fn choi(&self) -> Result<ChoiState> {
        match &self.map {
            Map::Channel(ch) => choi_state(ch),
            Map::Images(im) => im.choi(),
            Map::Tilted(_) => Err(Error::Config("the tilted repetition scenario has no channel form".into())),
        }
    }

    /// Scenario input, explicit inputs, spanning set, then random inputs.
    pub fn inputs(&self, cfg: &StatesConfig, seed: u64) -> Result<Vec<Input>> {
        let d = self.d_in;
        let mut out = vec![Input::Pure(self.default_input.clone())];
        for a in &cfg.inputs {
            out.push(Input::Pure(amplitudes(a, d)?));
        }
        if cfg.spanning {
            let space = SiteSpace::new(vec![d])?;
            for s in StateSet::spanning(&space).states() {
                if let State::Pure(v) = s {
                    out.push(Input::Pure(v.clone()));
                }
            }
        }
        let mut rng = seeded(mix_seed(seed, 2));
        let space = SiteSpace::new(vec![d])?;
        for _ in 0..cfg.random {
            out.push(match cfg.random_kind {
                RandomKind::Pure => Input::Pure(random_pure(&space, &mut rng)),
                RandomKind::Mixed => Input::Mixed(DenseOperator::new(space.clone(), random_density(d, d, &mut rng))?),
            });
        }
        Ok(out)
    }

    pub fn states(&self, cfg: &StatesConfig, seed: u64) -> Result<Vec<State>> {
        self.inputs(cfg, seed)?.iter().map(|i| self.image(i)).collect()
    }

    fn partition_named(&self, name: &str) -> Result<Partition> {
        let n = self.grid_n.ok_or_else(|| Error::Config(format!("partition '{name}' needs a grid scenario")))?;
        let (rows, cols) = grid_partitions(n);
        match name {
            "grid_rows" => Ok(rows),
            "grid_columns" => Ok(cols),
            other => Err(Error::Config(format!("unknown partition '{other}'"))),
        }
    }
}

/// A partition with one POVM per block, all sharing one label set.
#[derive(Clone, Debug)]
pub struct Family {
    pub name: String,
    pub partition: Partition,
    pub povms: Vec<Povm>,
}

fn parse_effects(effects: &[EffectConfig], block: &[usize], space: &SiteSpace) -> Result<Povm> {
    let local = space.restrict(block)?;
    let d = local.total_dim();
    let mut list = Vec::with_capacity(effects.len());
    for e in effects {
        if e.matrix.len() != d || e.matrix.iter().any(|r| r.len() != d) {
            return Err(Error::Config(format!("effect '{}' must be {d}×{d}", e.label)));
        }
        let m = CMatrix::from_fn(d, d, |r, c| C64::new(e.matrix[r][c][0], e.matrix[r][c][1]));
        list.push((e.label.clone(), DenseOperator::new(local.clone(), m)?));
    }
    Povm::new(block.to_vec(), list)
}

fn require_qubits(space: &SiteSpace, block: &[usize]) -> Result<()> {
    if block.iter().any(|&s| space.dim(s) != 2) {
        return Err(Error::Config(format!("block {block:?} must consist of qubits")));
    }
    Ok(())
}

pub fn build_family(cfg: &FamilyConfig, scenario: &Scenario) -> Result<Family> {
    let space = scenario.output_space();
    let partition = match (&cfg.partition, &cfg.blocks) {
        (Some(name), None) => scenario.partition_named(name)?,
        (None, Some(blocks)) => Partition::checked(space.n_sites(), blocks.clone())?,
        _ => return Err(Error::Config(format!("family '{}': give exactly one of partition or blocks", cfg.name))),
    };
    if cfg.povm != PovmKind::Custom && !cfg.effects.is_empty() {
        return Err(Error::Config(format!("family '{}': effects are only used by custom POVMs", cfg.name)));
    }
    let mut povms = Vec::with_capacity(partition.len());
    for block in partition.blocks() {
        space.check_sites(block)?;
        let p = match cfg.povm {
            PovmKind::Ghz => {
                require_qubits(space, block)?;
                ghz_povm(block)?
            }
            PovmKind::Parity => {
                require_qubits(space, block)?;
                parity_povm(block)?
            }
            PovmKind::Majority => {
                require_qubits(space, block)?;
                block_majority_povm(block)?
            }
            PovmKind::Computational => {
                let singles: Vec<Povm> = block.iter().map(|&s| Povm::computational(s, space.dim(s))).collect();
                Povm::product(&singles.iter().collect::<Vec<_>>())?
            }
            PovmKind::Custom => parse_effects(&cfg.effects, block, space)?,
        };
        let p = if cfg.coarse_grain.is_empty() {
            p
        } else {
            let groups: Vec<(&str, Vec<&str>)> =
                cfg.coarse_grain.iter().map(|g| (g.label.as_str(), g.members.iter().map(String::as_str).collect())).collect();
            let refs: Vec<(&str, &[&str])> = groups.iter().map(|(l, m)| (*l, m.as_slice())).collect();
            p.coarse_grained(&refs)?
        };
        povms.push(p);
    }
    Ok(Family { name: cfg.name.clone(), partition, povms })
}

fn povm_json(p: &Povm) -> Value {
    let effects: Vec<Value> = p
        .effects()
        .iter()
        .map(|e| {
            let m = e.matrix();
            Value::from(
                (0..m.nrows())
                    .map(|r| Value::from((0..m.ncols()).map(|c| json!([m[(r, c)].re, m[(r, c)].im])).collect::<Vec<_>>()))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    json!({ "support": p.support(), "labels": p.labels(), "effects": effects })
}

fn witness_json(w: &JmWitness) -> Value {
    json!({
        "parent": povm_json(&w.parent),
        "conditionals": w.conditionals,
        "residual": w.residual,
    })
}

fn covering_json(kind: &str, names: &[&str], r: &CoveringReport, sound: bool, cex_sound: Option<bool>) -> Value {
    json!({
        "op": "covering",
        "predicate": kind,
        "families": names,
        "holds": r.holds,
        "cases_checked": r.cases_checked,
        "witnesses": r.witnesses,
        "witnesses_sound": sound,
        "counterexample": r.counterexample,
        "counterexample_sound": cex_sound,
    })
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    scenario: Scenario,
    states: Vec<State>,
    families: Vec<Family>,
    blanket: Option<(ChoiState, crate::dynamics::BlanketResult)>,
}

impl Context<'_> {
    fn family(&self, name: &str) -> Result<&Family> {
        self.families
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::Config(format!("unknown family '{name}'")))
    }

    fn state_refs(&self) -> Vec<&State> {
        self.states.iter().collect()
    }

    fn pure_states(&self, what: &str) -> Result<Vec<&StateVector>> {
        self.states
            .iter()
            .map(|s| match s {
                State::Pure(v) => Ok(v),
                State::Mixed(_) => Err(Error::Config(format!("{what} needs pure states; the scenario produces mixed ones"))),
            })
            .collect()
    }

    fn audit(&self, fam: &Family) -> Result<RecordAudit> {
        redundancy_audit_over(&fam.partition, &fam.povms, &self.state_refs())
    }
}

/// Runs every configured analysis in `ops` (all configured ones when empty).
pub fn run_experiment(cfg: &ExperimentConfig, ops: &[Operation]) -> Result<ReportBundle> {
    let selected: Vec<Operation> = if ops.is_empty() {
        Operation::ALL.iter().copied().filter(|o| o.configured(cfg)).collect()
    } else {
        for o in ops {
            if !o.configured(cfg) {
                return Err(Error::Config(format!("the config has no [{}] section", o.name())));
            }
        }
        let mut v = ops.to_vec();
        v.sort();
        v.dedup();
        v
    };
    if !(cfg.tol >= 0.0) {
        return Err(Error::Config(format!("tol must be non-negative, got {}", cfg.tol)));
    }
    let scenario = Scenario::build(&cfg.scenario, cfg.seed)?;
    let needs_states = selected.iter().any(|o| matches!(o, Operation::Audit | Operation::Certify | Operation::Lemma | Operation::Chain | Operation::Jm));
    let states = if needs_states { scenario.states(&cfg.states, cfg.seed)? } else { Vec::new() };
    let mut names = std::collections::BTreeSet::new();
    let mut families = Vec::with_capacity(cfg.families.len());
    for f in &cfg.families {
        if !names.insert(f.name.clone()) {
            return Err(Error::Config(format!("duplicate family '{}'", f.name)));
        }
        families.push(build_family(f, &scenario)?);
    }
    let mut ctx = Context { cfg, scenario, states, families, blanket: None };
    let mut bundle = ReportBundle::default();
    bundle.records.push(json!({
        "op": "experiment",
        "seed": cfg.seed,
        "tol": cfg.tol,
        "sites": ctx.scenario.output_space().n_sites(),
        "dims": ctx.scenario.output_space().dims(),
        "input_dim": ctx.scenario.input_dim(),
        "states": ctx.states.len(),
        "operations": selected.iter().map(|o| o.name()).collect::<Vec<_>>(),
    }));
    for op in selected {
        match op {
            Operation::Audit => run_audit(&ctx, &mut bundle)?,
            Operation::Covering => run_covering(&ctx, &mut bundle)?,
            Operation::Jm => run_jm(&ctx, &mut bundle)?,
            Operation::Certify => run_certify(&ctx, &mut bundle)?,
            Operation::Lemma => run_lemma(&ctx, &mut bundle)?,
            Operation::Chain => run_chain(&ctx, &mut bundle)?,
            Operation::Blanket => run_blanket(&mut ctx, &mut bundle)?,
            Operation::Bound => run_bound(&mut ctx, &mut bundle)?,
        }
    }
    bundle.records.push(json!({ "op": "summary", "passed": bundle.passed(), "violations": bundle.violations }));
    Ok(bundle)
}

fn run_audit(ctx: &Context, bundle: &mut ReportBundle) -> Result<()> {
    let cfg = ctx.cfg.audit.as_ref().expect("configured");
    for name in &cfg.families {
        let fam = ctx.family(name)?;
        let a = ctx.audit(fam)?;
        if let Some(max) = cfg.max_delta {
            if a.overall_delta > max + ctx.cfg.tol {
                bundle.violations.push(format!("audit {name}: δ = {:e} exceeds {max:e}", a.overall_delta));
            }
        }
        let t = bundle.table("audit", &["family", "f", "f_prime", "delta"]);
        for p in &a.pairs {
            t.push(vec![name.clone(), p.f.to_string(), p.f_prime.to_string(), num(p.delta)]);
        }
        bundle.records.push(json!({
            "op": "audit",
            "family": name,
            "blocks": a.partition.blocks(),
            "labels": fam.povms[0].labels(),
            "overall_delta": a.overall_delta,
            "pairs": a.pairs,
        }));
    }
    Ok(())
}

fn run_covering(ctx: &Context, bundle: &mut ReportBundle) -> Result<()> {
    let cfg = ctx.cfg.covering.as_ref().expect("configured");
    let check = |bundle: &mut ReportBundle, kind: &str, names: Vec<&str>, parts: Vec<&Partition>, r: CoveringReport| {
        let sound = r.witnesses.iter().all(|w| witness_is_sound(&parts, w, cfg.mode));
        let cex = r.counterexample.as_ref().map(|c| counterexample_is_sound(&parts, c, cfg.mode));
        if !sound || cex == Some(false) {
            bundle.violations.push(format!("covering {names:?}: unsound witness or counterexample"));
        }
        if let Some(e) = cfg.expect {
            if e != r.holds {
                bundle.violations.push(format!("covering {names:?}: expected {e}, got {}", r.holds));
            }
        }
        let t = bundle.table("covering", &["predicate", "families", "holds", "cases_checked", "witnesses"]);
        t.push(vec![kind.into(), names.join(" "), r.holds.to_string(), r.cases_checked.to_string(), r.witnesses.len().to_string()]);
        bundle.records.push(covering_json(kind, &names, &r, sound, cex));
    };
    for [a, b] in &cfg.pairs {
        let (fa, fb) = (ctx.family(a)?, ctx.family(b)?);
        let r = non_pair_covering(&fa.partition, &fb.partition)?;
        check(bundle, "pair", vec![a, b], vec![&fa.partition, &fb.partition], r);
    }
    for names in &cfg.tuples {
        let fams = names.iter().map(|n| ctx.family(n)).collect::<Result<Vec<_>>>()?;
        let parts: Vec<&Partition> = fams.iter().map(|f| &f.partition).collect();
        let r = non_tuple_covering(&parts, TupleOptions { mode: cfg.mode, cap: cfg.cap.unwrap_or(DEFAULT_TUPLE_CAP) })?;
        check(bundle, "tuple", names.iter().map(String::as_str).collect(), parts, r);
    }
    Ok(())
}

fn run_jm(ctx: &Context, bundle: &mut ReportBundle) -> Result<()> {
    let cfg = ctx.cfg.jm.as_ref().expect("configured");
    let mut members = Vec::with_capacity(cfg.members.len());
    for m in &cfg.members {
        let fam = ctx.family(&m.family)?;
        let p = fam
            .povms
            .get(m.block)
            .ok_or_else(|| Error::Config(format!("family '{}' has no block {}", m.family, m.block)))?;
        members.push(p);
    }
    let mut opts = JmSearchOptions::default();
    if let Some(n) = cfg.max_iters {
        opts.max_iters = n;
    }
    if let Some(a) = cfg.accept {
        opts.accept = a;
    }
    let report = jm_feasibility_search(&members, opts)?;
    let verified = if report.is_feasible() {
        let set = StateSet::new("experiment", ctx.states.iter().map(|s| s.clone()).collect())?;
        Some(verify_jm_witness(&members, &report.witness, &set)?)
    } else {
        None
    };
    if let Some(e) = cfg.expect {
        let got = if report.is_feasible() { Expectation::Feasible } else { Expectation::Infeasible };
        if e != got {
            bundle.violations.push(format!("jm: expected {e:?}, search ended {:?}", report.status));
        }
    }
    let t = bundle.table("jm_trace", &["iteration", "residual"]);
    for (i, r) in report.trace.iter().enumerate() {
        t.push(vec![i.to_string(), num(*r)]);
    }
    bundle.records.push(json!({
        "op": "jm",
        "members": cfg.members.iter().map(|m| json!({"family": m.family, "block": m.block})).collect::<Vec<_>>(),
        "status": report.status,
        "iterations": report.iterations,
        "residual": report.residual,
        "verified_residual": verified,
        "witness": if report.status == JmStatus::Feasible { witness_json(&report.witness) } else { Value::Null },
    }));
    Ok(())
}

fn run_certify(ctx: &Context, bundle: &mut ReportBundle) -> Result<()> {
    let cfg = ctx.cfg.certify.as_ref().expect("configured");
    let fams = cfg.families.iter().map(|n| ctx.family(n)).collect::<Result<Vec<_>>>()?;
    if fams.len() < 2 {
        return Err(Error::Config("certify needs at least two families".into()));
    }
    let audits = fams.iter().map(|f| ctx.audit(f)).collect::<Result<Vec<_>>>()?;
    let overall = audits.iter().fold(0.0f64, |m, a| m.max(a.overall_delta));
    let set = StateSet::new("experiment", ctx.states.clone())?;
    // (members, substitutes) as block indices per family.
    let mut cases: Vec<(Vec<usize>, Option<Vec<usize>>)> = Vec::new();
    if fams.len() == 2 {
        for f in 0..fams[0].povms.len() {
            for g in 0..fams[1].povms.len() {
                let s = theorem1_substitutes(&fams[0].partition, &fams[1].partition, f, g)?;
                cases.push((vec![f, g], s.map(|(a, b)| vec![a, b])));
            }
        }
    } else {
        let parts: Vec<&Partition> = fams.iter().map(|f| &f.partition).collect();
        let r = non_tuple_covering(&parts, TupleOptions::default())?;
        for w in r.witnesses {
            cases.push((w.tuple, Some(w.choice)));
        }
        if let Some(c) = r.counterexample {
            cases.push((c.tuple, None));
        }
        cases.sort();
    }
    let mut worst_margin = f64::NEG_INFINITY;
    let mut certified = 0usize;
    let mut rows = Vec::new();
    for (tuple, subs) in cases {
        let Some(subs) = subs else {
            rows.push(json!({ "tuple": tuple, "substitutes": Value::Null }));
            continue;
        };
        let members: Vec<&Povm> = tuple.iter().zip(&fams).map(|(&i, f)| &f.povms[i]).collect();
        let primed: Vec<&Povm> = subs.iter().zip(&fams).map(|(&i, f)| &f.povms[i]).collect();
        let w = if fams.len() == 2 {
            constructive_parent(members[0], members[1], primed[0], primed[1])?
        } else {
            marginalizing_witness(&members, &primed)?
        };
        let residual = verify_jm_witness(&members, &w, &set)?;
        let delta = tuple
            .iter()
            .zip(&subs)
            .zip(&audits)
            .map(|((&f, &fp), a)| if f == fp { 0.0 } else { a.pair_delta(f, fp).unwrap_or(f64::INFINITY) })
            .fold(0.0f64, f64::max);
        worst_margin = worst_margin.max(residual - delta);
        certified += 1;
        if residual > delta + ctx.cfg.tol {
            bundle.violations.push(format!("certify {tuple:?}: residual {residual:e} exceeds δ = {delta:e}"));
        }
        bundle.table("certify", &["tuple", "substitutes", "residual", "delta"]).push(vec![
            sites(&tuple),
            sites(&subs),
            num(residual),
            num(delta),
        ]);
        rows.push(json!({ "tuple": tuple, "substitutes": subs, "residual": residual, "delta": delta }));
    }
    bundle.records.push(json!({
        "op": "certify",
        "families": cfg.families,
        "audited_deltas": audits.iter().map(|a| a.overall_delta).collect::<Vec<_>>(),
        "overall_delta": overall,
        "states": set.len(),
        "certified": certified,
        "worst_margin": if certified > 0 { Some(worst_margin) } else { None },
        "cases": rows,
    }));
    Ok(())
}

fn run_lemma(ctx: &Context, bundle: &mut ReportBundle) -> Result<()> {
    let cfg = ctx.cfg.lemma.as_ref().expect("configured");
    let fam = ctx.family(&cfg.family)?;
    let psis = ctx.pure_states("the lemma")?;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for f in 0..fam.povms.len() {
        for fp in 0..fam.povms.len() {
            if f == fp {
                continue;
            }
            for (k, psi) in psis.iter().enumerate() {
                match verify_perfect_imprint_lemma(&fam.povms[f], &fam.povms[fp], psi) {
                    Ok(r) => {
                        worst = worst.max(r);
                        if r > PURE_IDENTITY_TOL {
                            bundle.violations.push(format!("lemma ({f}, {fp}) on state {k}: residual {r:e}"));
                        }
                    }
                    Err(Error::Precondition(msg)) => failures.push(json!({ "f": f, "f_prime": fp, "state": k, "reason": msg })),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if !failures.is_empty() {
        bundle.violations.push(format!("lemma: {} cases fail the preconditions", failures.len()));
    }
    bundle.records.push(json!({
        "op": "lemma",
        "family": cfg.family,
        "states": psis.len(),
        "max_residual": worst,
        "precondition_failures": failures,
    }));
    Ok(())
}

fn run_chain(ctx: &Context, bundle: &mut ReportBundle) -> Result<()> {
    let cfg = ctx.cfg.chain.as_ref().expect("configured");
    let (ff, gf) = (ctx.family(&cfg.f)?, ctx.family(&cfg.g)?);
    let psis = ctx.pure_states("the commutation chain")?;
    let mut cases = Vec::new();
    let mut worst: f64 = 0.0;
    for f in 0..ff.povms.len() {
        for g in 0..gf.povms.len() {
            let Some((fp, gp)) = theorem1_substitutes(&ff.partition, &gf.partition, f, g)? else {
                cases.push(json!({ "f": f, "g": g, "substitutes": Value::Null }));
                continue;
            };
            for (k, psi) in psis.iter().enumerate() {
                let r = commutation_chain_check(&ff.povms[f], &gf.povms[g], &ff.povms[fp], &gf.povms[gp], psi)?;
                if r.preconditions_hold {
                    worst = worst.max(r.max_residual());
                    if r.max_residual() > PURE_IDENTITY_TOL {
                        bundle.violations.push(format!("chain ({f}, {g}) on state {k}: residual {:e}", r.max_residual()));
                    }
                }
                cases.push(json!({ "f": f, "g": g, "substitutes": [fp, gp], "state": k, "report": r }));
            }
        }
    }
    bundle.records.push(json!({ "op": "chain", "f": cfg.f, "g": cfg.g, "max_residual": worst, "cases": cases }));
    Ok(())
}

fn blanket_config(ctx: &Context) -> BlanketConfig {
    let s = ctx.cfg.blanket.clone().unwrap_or_default();
    let d = BlanketConfig::default();
    BlanketConfig {
        w_q: s.w_q.unwrap_or(d.w_q),
        w_f: s.w_f.unwrap_or(d.w_f),
        f_samples: s.f_samples.unwrap_or(d.f_samples),
        xi_f_samples: s.xi_f_samples.unwrap_or(d.xi_f_samples),
        random_bases: s.random_bases.unwrap_or(d.random_bases),
        eigenbasis: s.eigenbasis.unwrap_or(d.eigenbasis),
        eigenbasis_max_dim: s.eigenbasis_max_dim.unwrap_or(d.eigenbasis_max_dim),
        seed: mix_seed(ctx.cfg.seed, 3),
        ..d
    }
}

fn ensure_blanket(ctx: &mut Context) -> Result<()> {
    if ctx.blanket.is_none() {
        let choi = ctx.scenario.choi()?;
        let b = find_markov_blanket(&choi, &blanket_config(ctx))?;
        ctx.blanket = Some((choi, b));
    }
    Ok(())
}

fn run_blanket(ctx: &mut Context, bundle: &mut ReportBundle) -> Result<()> {
    ensure_blanket(ctx)?;
    let (_, b) = ctx.blanket.as_ref().expect("just computed");
    let t = bundle.table("blanket", &["q", "kind", "score"]);
    for c in &b.candidates {
        t.push(vec![sites(&c.q), serde_json::to_value(&c.kind).map(|v| v.to_string()).unwrap_or_default(), num(c.score)]);
    }
    let mut rec = serde_json::to_value(b).map_err(|e| Error::Io(e.to_string()))?;
    rec["op"] = json!("blanket");
    rec["outcomes"] = json!(b
        .decomposition
        .outcomes
        .iter()
        .map(|o| json!({ "label": o.label, "probability": o.probability, "degenerate": o.degenerate }))
        .collect::<Vec<_>>());
    bundle.records.push(rec);
    Ok(())
}

fn run_bound(ctx: &mut Context, bundle: &mut ReportBundle) -> Result<()> {
    ensure_blanket(ctx)?;
    let cfg = ctx.cfg.bound.as_ref().expect("configured").clone();
    let (choi, b) = ctx.blanket.as_ref().expect("just computed");
    let space = choi.system_space();
    let rest = space.complement(&b.q);
    if rest.len() < b.w_f {
        return Err(Error::Precondition(format!("only {} sites outside the blanket", rest.len())));
    }
    let mut rng = seeded(mix_seed(ctx.cfg.seed, 4));
    let d = choi.reference_dim();
    let mut trials = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let sigma = DenseOperator::new(SiteSpace::new(vec![d])?, random_density(d, d, &mut rng))?;
        let mut f: Vec<usize> = sample(&mut rng, rest.len(), b.w_f).into_iter().map(|i| rest[i]).collect();
        f.sort_unstable();
        let local = space.restrict(&f)?;
        let povm = match cfg.povm {
            TrialPovm::Computational => {
                let singles: Vec<Povm> = f.iter().map(|&s| Povm::computational(s, space.dim(s))).collect();
                Povm::product(&singles.iter().collect::<Vec<_>>())?
            }
            TrialPovm::RandomBasis => {
                let u = random_unitary(local.total_dim(), &mut rng);
                let labels = (0..local.total_dim()).map(|i| i.to_string()).collect();
                Povm::from_basis(f.clone(), local, &u, labels)?
            }
        };
        trials.push(BoundTrial { sigma, povm });
    }
    let r = verify_theorem_bound(choi, b, &trials)?;
    if !r.holds {
        bundle.violations.push(format!("bound: deviation {:e} exceeds {:e}", r.max_deviation, r.bound));
    }
    let t = bundle.table("deviations", &["trial", "f", "deviation", "deviation_sum"]);
    for tr in &r.trials {
        t.push(vec![tr.index.to_string(), sites(&tr.f), num(tr.deviation), num(tr.deviation_sum)]);
    }
    let t = bundle.table("fragments", &["f", "trials", "worst_case", "choi_bound", "cmi", "pinsker_bound"]);
    for fr in &r.fragments {
        t.push(vec![
            sites(&fr.f),
            fr.trials.to_string(),
            num(fr.worst_case),
            num(fr.choi_bound),
            num(fr.cmi),
            num(fr.pinsker_bound),
        ]);
    }
    bundle.records.push(json!({
        "op": "bound",
        "q": r.q,
        "delta": r.delta,
        "delta_wq": r.delta_wq,
        "bound": r.bound,
        "max_deviation": r.max_deviation,
        "max_worst_case": r.max_worst_case,
        "holds": r.holds,
        "trials": r.trials.len(),
        "fragments": r.fragments,
    }));
    Ok(())
}

/// Process exit status for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Envelope(_) | Error::LimitExceeded { .. } => 4,
        _ => 2,
    }
}

pub const EXIT_CONTRACT: i32 = 3;

/// Summary of a grid state: normalization, logical overlap, row and column
/// audits, and the outcome distributions of row 0 and column 0.
pub fn grid_summary(s: &GridScenario) -> Result<Value> {
    let state = build_grid_state(s)?;
    let (zero, one) = grid_logical_states(s.n)?;
    let (rows, cols) = grid_partitions(s.n);
    let row_povms = rows.blocks().iter().map(|b| ghz_povm(b)).collect::<Result<Vec<_>>>()?;
    let col_povms = cols.blocks().iter().map(|b| parity_povm(b)).collect::<Result<Vec<_>>>()?;
    let (row_delta, col_delta) = if s.n > 1 {
        (
            Some(redundancy_audit(&rows, &row_povms, &state)?.overall_delta),
            Some(redundancy_audit(&cols, &col_povms, &state)?.overall_delta),
        )
    } else {
        (None, None)
    };
    let trace = match &state {
        State::Pure(v) => v.amplitudes().norm_squared(),
        State::Mixed(r) => r.trace().re,
    };
    let dist = |p: &Povm| -> Result<Value> {
        let probs = outcome_probabilities(p, &state)?;
        Ok(Value::from(p.labels().iter().zip(probs).map(|(l, x)| json!({ "label": l, "probability": x })).collect::<Vec<_>>()))
    };
    Ok(json!({
        "op": "scenario",
        "kind": "grid",
        "n": s.n,
        "alpha": [s.alpha.0, s.alpha.1],
        "beta": [s.beta.0, s.beta.1],
        "noise": s.noise_p,
        "sites": s.n_sites(),
        "pure": matches!(state, State::Pure(_)),
        "trace": trace,
        "logical_overlap": zero.inner(&one).norm(),
        "row_delta": row_delta,
        "column_delta": col_delta,
        "row0": dist(&row_povms[0])?,
        "column0": dist(&col_povms[0])?,
    }))
}
