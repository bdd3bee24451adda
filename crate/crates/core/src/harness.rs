//! Experiment orchestration: seeded end-to-end campaigns over a shared
//! simulated world, configuration loading, and CSV/manifest persistence.
//!
//! All randomness flows from one root seed through labeled sub-streams, and
//! parallel runs merge results in canonical order, so output bytes never
//! depend on thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{
    amplify, estimate_beam_threshold, evaluate_pollution, execute_dfoh_attack,
    paths_originated_by, plan_dfoh_poisoning, plan_threshold_pollution, AttackError, AttackSpec,
    OscillationModel, SimContext,
};
use crate::beam::{train_embedding, EmbeddingConfig, RouteChange, ThresholdState};
use crate::dfoh::{
    train_classifier, DfohPipeline, KnowledgeBase, Link, SamplingConfig,
};
use crate::dfoh::forest::ForestConfig;
use crate::routing::{observe, propagate, Announcement, RoaTable};
use crate::topology::{
    generate_synthetic, parse_metadata, parse_relationships, AsGraph, Asn, MetadataMap, Prefix,
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySource {
    /// Generated three-tier topology.
    Synthetic(crate::topology::SynthParams),
    /// Relationship file (`asn|asn|rel` lines) plus optional metadata JSON.
    File {
        relationships: String,
        #[serde(default)]
        metadata: Option<String>,
    },
}

/// How attacker or victim ASes are picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Selection {
    List(Vec<u32>),
    Sample(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default = "default_window_days")]
    pub window_days: u32,
    #[serde(default = "default_quarantine_days")]
    pub quarantine_days: u32,
    #[serde(default = "default_window_seconds")]
    pub window_seconds: u64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub include_flagged: bool,
    /// Fraction of real links the bootstrap history has seen in both
    /// directions (vantage coverage is partial).
    #[serde(default = "default_bidir_fraction")]
    pub bootstrap_bidir_fraction: f64,
    /// Fraction of real links present in the IRR registry.
    #[serde(default = "default_irr_fraction")]
    pub bootstrap_irr_fraction: f64,
    /// Stale or wrong IRR entries, as a fraction of real link count.
    #[serde(default = "default_irr_spurious_fraction")]
    pub bootstrap_irr_spurious_fraction: f64,
}

fn default_window_days() -> u32 {
    300
}
fn default_quarantine_days() -> u32 {
    30
}
fn default_window_seconds() -> u64 {
    3600
}
fn default_k() -> f64 {
    3.0
}
fn default_bidir_fraction() -> f64 {
    0.25
}
fn default_irr_fraction() -> f64 {
    0.35
}
fn default_irr_spurious_fraction() -> f64 {
    0.3
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            sampling: SamplingConfig::default(),
            forest: ForestConfig::default(),
            embedding: EmbeddingConfig::default(),
            window_days: default_window_days(),
            quarantine_days: default_quarantine_days(),
            window_seconds: default_window_seconds(),
            k: default_k(),
            include_flagged: false,
            bootstrap_bidir_fraction: default_bidir_fraction(),
            bootstrap_irr_fraction: default_irr_fraction(),
            bootstrap_irr_spurious_fraction: default_irr_spurious_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DfohCampaignSpec {
    pub attackers: Selection,
    pub victims: Selection,
    pub budget: usize,
    #[serde(default)]
    pub allow_transit_augmentation: bool,
    #[serde(default = "default_wait_days")]
    pub wait_days: u32,
    /// Cap on distinct corpus paths fed to the planner per attacker.
    #[serde(default = "default_corpus_paths")]
    pub max_corpus_paths: usize,
    /// Top-ranked candidate count the planner classifies per pair.
    #[serde(default = "default_scan_limit")]
    pub scan_limit: usize,
    /// Days a poison announcement stays up. Each poison link costs one
    /// incorporation day, so a lifetime shorter than the budget caps how
    /// many links can still be live when the hijack lands.
    #[serde(default)]
    pub poison_lifetime_days: Option<u32>,
}

fn default_wait_days() -> u32 {
    30
}
fn default_corpus_paths() -> usize {
    5
}
fn default_scan_limit() -> usize {
    150
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamCampaignSpec {
    pub attackers: Selection,
    pub n_distinct: RangeSpec,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub oscillation: OscillationModel,
    #[serde(default = "default_baseline_events")]
    pub baseline_events: usize,
    #[serde(default = "default_baseline_origins")]
    pub baseline_origins: usize,
    #[serde(default = "default_hijack_candidates")]
    pub hijack_candidates: usize,
}

fn default_epsilon() -> f64 {
    0.05
}
fn default_baseline_events() -> usize {
    200
}
fn default_baseline_origins() -> usize {
    50
}
fn default_hijack_candidates() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSweepSpec {
    pub m_grid: Vec<usize>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySource,
    pub seed: u64,
    /// Number of vantage ASes feeding the detectors (highest-degree first).
    #[serde(default = "default_monitors")]
    pub monitors: usize,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub dfoh: Option<DfohCampaignSpec>,
    #[serde(default)]
    pub beam: Option<BeamCampaignSpec>,
    #[serde(default)]
    pub monitor_sweep: Option<MonitorSweepSpec>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_monitors() -> usize {
    15
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.monitors == 0 {
            return Err(HarnessError::Config("monitors must be >= 1".into()));
        }
        if let Some(b) = &self.beam {
            if b.n_distinct.min > b.n_distinct.max {
                return Err(HarnessError::Config("n_distinct.min > n_distinct.max".into()));
            }
            if !(b.epsilon > 0.0 && b.epsilon < 1.0) {
                return Err(HarnessError::Config("epsilon must be in (0, 1)".into()));
            }
        }
        if let Some(m) = &self.monitor_sweep {
            if m.m_grid.is_empty() || m.trials == 0 {
                return Err(HarnessError::Config(
                    "monitor sweep needs a non-empty m grid and >= 1 trial".into(),
                ));
            }
        }
        Ok(())
    }

    /// Hash over every semantically meaningful field (everything except the
    /// output directory).
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
        }
        let canon = serde_json::to_string(&value).expect("value serializes");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        hex(&h.finalize())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-stage seed derived from the root seed and a stage label.
pub fn stage_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is long enough"))
}

// ---------------------------------------------------------------------------
// Errors, manifest, bundle
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    /// CLI exit code: 2 config, 3 data, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Internal(_) => 4,
        }
    }
}

fn data_err<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Data(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_time_ms: u64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfohRow {
    pub attacker: Asn,
    pub victim: Asn,
    pub evaded: bool,
    pub links_used: usize,
    pub suspicion_before: f64,
    pub suspicion_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamRow {
    pub attacker: Asn,
    pub n_distinct: usize,
    pub theta_before: f64,
    pub theta_after: f64,
    pub undetected_before: f64,
    pub undetected_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub strategy: String,
    pub m: usize,
    pub trial: usize,
    pub detection_rate: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ResultBundle {
    pub out_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: Option<Manifest>,
    pub csvs: BTreeMap<String, PathBuf>,
    pub dfoh_rows: Vec<DfohRow>,
    pub beam_rows: Vec<BeamRow>,
    pub monitor_rows: Vec<MonitorRow>,
    pub poison_traces: Vec<(Asn, Link)>,
    /// (attacker, victim, error) for pairs that failed mid-campaign.
    pub pair_errors: Vec<(Asn, Asn, String)>,
}

struct RunWriter {
    bundle: ResultBundle,
    start: std::time::Instant,
    config_hash: String,
    seed: u64,
}

impl RunWriter {
    fn start(config: &ExperimentConfig, out_dir: &Path, outputs: &[&str]) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| HarnessError::Data(format!("cannot create {}: {e}", out_dir.display())))?;
        let mut writer = RunWriter {
            bundle: ResultBundle {
                out_dir: out_dir.to_path_buf(),
                manifest_path: out_dir.join("manifest.json"),
                ..ResultBundle::default()
            },
            start: std::time::Instant::now(),
            config_hash: config.config_hash(),
            seed: config.seed,
        };
        // The manifest lands on disk before any result file.
        writer.write_manifest(outputs.iter().map(|s| s.to_string()).collect(), 0)?;
        Ok(writer)
    }

    fn write_manifest(&mut self, outputs: Vec<String>, wall_time_ms: u64) -> Result<(), HarnessError> {
        let manifest = Manifest {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms,
            outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(data_err)?;
        std::fs::write(&self.bundle.manifest_path, text).map_err(data_err)?;
        self.bundle.manifest = Some(manifest);
        Ok(())
    }

    fn write_csv(&mut self, name: &str, header: &str, lines: &[String]) -> Result<(), HarnessError> {
        let mut text = String::from(header);
        text.push('\n');
        for line in lines {
            text.push_str(line);
            text.push('\n');
        }
        let path = self.bundle.out_dir.join(name);
        std::fs::write(&path, text).map_err(data_err)?;
        self.bundle.csvs.insert(name.to_string(), path);
        Ok(())
    }

    fn finish(mut self) -> Result<ResultBundle, HarnessError> {
        let outputs: Vec<String> = self.bundle.csvs.keys().cloned().collect();
        let wall = self.start.elapsed().as_millis() as u64;
        self.write_manifest(outputs, wall)?;
        Ok(self.bundle)
    }
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    if jobs == 0 {
        Ok(f())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| HarnessError::Internal(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

// ---------------------------------------------------------------------------
// World construction
// ---------------------------------------------------------------------------

/// The simulated ground truth every campaign runs against.
pub struct World {
    pub graph: AsGraph,
    pub metadata: MetadataMap,
    /// One /16 per AS, assigned in ascending ASN order.
    pub prefixes: BTreeMap<Asn, Prefix>,
    pub monitors: BTreeSet<Asn>,
    /// ASes without customers (candidate attackers and victims).
    pub stubs: Vec<Asn>,
}

pub fn build_world(config: &ExperimentConfig) -> Result<World, HarnessError> {
    let (graph, metadata) = match &config.topology {
        TopologySource::Synthetic(params) => {
            generate_synthetic(params, stage_seed(config.seed, "topology")).map_err(data_err)?
        }
        TopologySource::File {
            relationships,
            metadata,
        } => {
            let rel_text = std::fs::read_to_string(relationships)
                .map_err(|e| HarnessError::Data(format!("cannot read {relationships}: {e}")))?;
            let graph = parse_relationships(&rel_text).map_err(data_err)?;
            let meta = match metadata {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| HarnessError::Data(format!("cannot read {path}: {e}")))?;
                    parse_metadata(&text).map_err(data_err)?
                }
                None => MetadataMap::new(),
            };
            (graph, meta)
        }
    };
    if graph.node_count() >= u16::MAX as usize {
        return Err(HarnessError::Data(
            "too many ASes for one /16 per AS".into(),
        ));
    }
    let mut prefixes = BTreeMap::new();
    for (i, a) in graph.nodes().enumerate() {
        let prefix = Prefix::new(((i as u32) + 1) << 16, 16).map_err(data_err)?;
        prefixes.insert(a, prefix);
    }
    let mut by_degree: Vec<Asn> = graph.nodes().collect();
    by_degree.sort_by_key(|&a| (std::cmp::Reverse(graph.degree(a)), a));
    let monitors: BTreeSet<Asn> = by_degree
        .iter()
        .take(config.monitors.min(by_degree.len()))
        .copied()
        .collect();
    let stubs: Vec<Asn> = graph
        .nodes()
        .filter(|&a| {
            graph
                .adjacency(a)
                .map(|adj| adj.customers.is_empty() && !adj.providers.is_empty())
                .unwrap_or(false)
        })
        .collect();
    Ok(World {
        graph,
        metadata,
        prefixes,
        monitors,
        stubs,
    })
}

/// Seed the detector's knowledge base from the ground-truth topology, as if
/// every real link had been visible throughout the history window. Vantage
/// coverage is partial: only a configured fraction of links has been seen in
/// both directions, and only a fraction appears in the IRR registry.
pub fn bootstrap_kb(world: &World, detector: &DetectorConfig, seed: u64) -> KnowledgeBase {
    let mut kb = KnowledgeBase::new(detector.window_days, detector.quarantine_days);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for a in world.graph.nodes() {
        if let Some(adj) = world.graph.adjacency(a) {
            for n in adj.neighbors() {
                if a > n {
                    continue;
                }
                kb.insert_link(a, n, 0);
                if rng.gen_bool(detector.bootstrap_bidir_fraction) {
                    kb.insert_link(n, a, 0);
                }
                if rng.gen_bool(detector.bootstrap_irr_fraction) {
                    kb.irr_links.insert(Link::new(a, n));
                }
            }
        }
    }
    // Stale IRR entries for links that do not exist.
    let nodes: Vec<Asn> = world.graph.nodes().collect();
    if nodes.len() >= 2 {
        let spurious =
            (world.graph.edge_count() as f64 * detector.bootstrap_irr_spurious_fraction) as usize;
        let mut added = 0usize;
        while added < spurious {
            let a = nodes[rng.gen_range(0..nodes.len())];
            let b = nodes[rng.gen_range(0..nodes.len())];
            if a != b && !world.graph.has_edge(a, b) && kb.irr_links.insert(Link::new(a, b)) {
                added += 1;
            }
        }
    }
    kb
}

fn resolve_selection(
    selection: &Selection,
    pool: &[Asn],
    graph: &AsGraph,
    seed: u64,
    what: &str,
) -> Result<Vec<Asn>, HarnessError> {
    match selection {
        Selection::List(values) => {
            let mut out = Vec::with_capacity(values.len());
            for &v in values {
                let a = Asn::new(v).map_err(|e| HarnessError::Config(e.to_string()))?;
                if !graph.contains(a) {
                    return Err(HarnessError::Config(format!(
                        "{what} AS{v} not present in the topology"
                    )));
                }
                out.push(a);
            }
            Ok(out)
        }
        Selection::Sample(n) => {
            if pool.is_empty() {
                return Err(HarnessError::Data(format!("no candidate {what} ASes")));
            }
            let mut pool = pool.to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..pool.len()).rev() {
                let j = rng.gen_range(0..=i);
                pool.swap(i, j);
            }
            pool.truncate(*n);
            Ok(pool)
        }
    }
}

/// Paths the monitors observe for `origin`'s own prefix in the clean world.
fn monitor_corpus(world: &World, origin: Asn) -> Result<Vec<Vec<Asn>>, HarnessError> {
    let prefix = *world
        .prefixes
        .get(&origin)
        .ok_or_else(|| HarnessError::Internal(format!("no prefix for {origin}")))?;
    let ann = Announcement {
        prefix,
        as_path: vec![origin],
        sender: origin,
    };
    let rib = propagate(&world.graph, &[ann], &RoaTable::new(), &BTreeSet::new())
        .map_err(data_err)?;
    Ok(observe(&rib, &world.monitors, 0)
        .into_iter()
        .map(|ev| ev.announcement.as_path)
        .collect())
}

// ---------------------------------------------------------------------------
// DFOH campaign
// ---------------------------------------------------------------------------

pub fn run_dfoh_campaign(
    config: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<ResultBundle, HarnessError> {
    config.validate()?;
    let spec = config
        .dfoh
        .as_ref()
        .ok_or_else(|| HarnessError::Config("config has no dfoh campaign section".into()))?;
    let mut writer = RunWriter::start(config, out_dir, &["dfoh_results.csv", "poison_traces.csv"])?;

    let world = build_world(config)?;
    let kb = bootstrap_kb(&world, &config.detector, stage_seed(config.seed, "kb"));
    let forest = train_classifier(
        &kb,
        &world.metadata,
        &config.detector.sampling,
        config.detector.forest.clone(),
        stage_seed(config.seed, "dfoh-train"),
    )
    .map_err(data_err)?;

    let attackers = resolve_selection(
        &spec.attackers,
        &world.stubs,
        &world.graph,
        stage_seed(config.seed, "dfoh-attackers"),
        "attacker",
    )?;
    let effective_budget = match spec.poison_lifetime_days {
        // One incorporation day per link: links older than the lifetime have
        // lapsed by hijack time, so a longer plan buys nothing.
        Some(days) => spec.budget.min(days as usize),
        None => spec.budget,
    };

    // Attacker -> victims and attacker -> observed corpus, both fixed up front.
    let mut pairs: Vec<(Asn, Asn)> = Vec::new();
    let mut corpora: BTreeMap<Asn, Vec<Vec<Asn>>> = BTreeMap::new();
    for &attacker in &attackers {
        // Any AS can be the hijack victim, transit networks included.
        let victim_pool: Vec<Asn> = world
            .graph
            .nodes()
            .filter(|&v| v != attacker)
            .collect();
        let victims = resolve_selection(
            &spec.victims,
            &victim_pool,
            &world.graph,
            stage_seed(config.seed, &format!("dfoh-victims-{attacker}")),
            "victim",
        )?;
        let corpus = monitor_corpus(&world, attacker)?;
        corpora.insert(
            attacker,
            paths_originated_by(&corpus, attacker, spec.max_corpus_paths),
        );
        for victim in victims {
            if victim != attacker {
                pairs.push((attacker, victim));
            }
        }
    }

    let ctx = SimContext {
        graph: world.graph.clone(),
        roas: RoaTable::new(),
        rov_ases: BTreeSet::new(),
        monitors: world.monitors.clone(),
        metadata: world.metadata.clone(),
    };

    type PairOutcome = Result<(DfohRow, Vec<Link>), (Asn, Asn, String)>;
    let outcomes: Vec<PairOutcome> = with_pool(jobs, || {
        pairs
            .par_iter()
            .map(|&(attacker, victim)| -> PairOutcome {
                let attack = AttackSpec {
                    attacker,
                    victim,
                    parent_prefix: world.prefixes[&attacker],
                    victim_prefix: world.prefixes[&victim],
                    budget: effective_budget,
                    allow_transit_augmentation: spec.allow_transit_augmentation,
                    wait_days: spec.wait_days,
                    scan_limit: spec.scan_limit,
                };
                let run = || -> Result<(DfohRow, Vec<Link>), AttackError> {
                    let paths = &corpora[&attacker];
                    let plan =
                        plan_dfoh_poisoning(&forest, &kb, &world.metadata, &attack, paths)?;
                    let mut defender =
                        DfohPipeline::new(forest.clone(), kb.clone(), kb.current_day);
                    let result = execute_dfoh_attack(&ctx, &mut defender, &plan, &attack)?;
                    let traces = plan
                        .poison_links
                        .iter()
                        .map(|l| Link::new(l.from, l.forged_origin))
                        .collect();
                    Ok((
                        DfohRow {
                            attacker,
                            victim,
                            evaded: result.evaded,
                            links_used: result.links_used,
                            suspicion_before: result.suspicion_before,
                            suspicion_after: result.suspicion_after,
                        },
                        traces,
                    ))
                };
                run().map_err(|e| (attacker, victim, e.to_string()))
            })
            .collect()
    })?;

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut errors = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((row, links)) => {
                for link in links {
                    traces.push((row.attacker, link));
                }
                rows.push(row);
            }
            Err(e) => errors.push(e),
        }
    }
    rows.sort_by_key(|r| (r.attacker, r.victim));
    traces.sort();
    traces.dedup();

    let row_lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.attacker,
                r.victim,
                r.evaded,
                r.links_used,
                fmt6(r.suspicion_before),
                fmt6(r.suspicion_after)
            )
        })
        .collect();
    writer.write_csv(
        "dfoh_results.csv",
        "attacker,victim,evaded,links_used,suspicion_before,suspicion_after",
        &row_lines,
    )?;
    let trace_lines: Vec<String> = traces
        .iter()
        .map(|(attacker, link)| format!("{attacker},{},{}", link.0, link.1))
        .collect();
    writer.write_csv("poison_traces.csv", "attacker,endpoint_a,endpoint_b", &trace_lines)?;
    if !errors.is_empty() {
        let error_lines: Vec<String> = errors
            .iter()
            .map(|(a, v, e)| format!("{a},{v},{}", e.replace([',', '\n'], ";")))
            .collect();
        writer.write_csv("dfoh_errors.csv", "attacker,victim,error", &error_lines)?;
    }

    let mut bundle = writer.finish()?;
    bundle.dfoh_rows = rows;
    bundle.poison_traces = traces;
    bundle.pair_errors = errors;
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// BEAM campaign
// ---------------------------------------------------------------------------

/// Benign route-change churn: transient single-link failures. For a sampled
/// origin, one edge on a monitor path is withdrawn and the prefix
/// re-propagated; every monitor whose route changed yields one event (its
/// old best path flipping to the post-failure path). This matches how real
/// collectors see churn: small reroutes at a fixed vantage point, not view
/// swaps between vantage points.
fn baseline_stream(
    world: &World,
    spec: &BeamCampaignSpec,
    window_seconds: u64,
    seed: u64,
) -> Result<Vec<RouteChange>, HarnessError> {
    let nodes: Vec<Asn> = world.graph.nodes().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut origins = nodes.clone();
    for i in (1..origins.len()).rev() {
        let j = rng.gen_range(0..=i);
        origins.swap(i, j);
    }
    origins.truncate(spec.baseline_origins.max(1));

    let mut per_origin: Vec<(Asn, Vec<Vec<Asn>>)> = Vec::new();
    for &origin in &origins {
        let mut paths = monitor_corpus(world, origin)?;
        paths.sort();
        paths.dedup();
        if paths.iter().any(|p| p.len() >= 3) {
            per_origin.push((origin, paths));
        }
    }
    if per_origin.is_empty() {
        return Err(HarnessError::Data(
            "no origin yields a monitor path long enough to perturb".into(),
        ));
    }

    let target = spec.baseline_events.max(2);
    let mut events = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while events.len() < target && attempts < target * 10 {
        attempts += 1;
        let (origin, paths) = &per_origin[rng.gen_range(0..per_origin.len())];
        let long: Vec<&Vec<Asn>> = paths.iter().filter(|p| p.len() >= 3).collect();
        let p = long[rng.gen_range(0..long.len())];
        // Fail one transit edge beyond the vantage point's own first hop.
        let i = rng.gen_range(1..p.len() - 1);
        let mut failed = world.graph.clone();
        if !failed.remove_edge(p[i], p[i + 1]) {
            continue;
        }
        let ann = Announcement {
            prefix: world.prefixes[origin],
            as_path: vec![*origin],
            sender: *origin,
        };
        let Ok(rib) = propagate(&failed, &[ann], &RoaTable::new(), &BTreeSet::new()) else {
            continue;
        };
        for ev in observe(&rib, &world.monitors, 0) {
            if events.len() >= target {
                break;
            }
            let new_path = ev.announcement.as_path;
            let Some(old_path) = paths.iter().find(|bp| bp.first() == new_path.first()) else {
                continue;
            };
            if *old_path == new_path {
                continue;
            }
            // The first event pins the end of the window so a full warm-up
            // window is always covered.
            let time = if events.is_empty() {
                window_seconds - 1
            } else {
                rng.gen_range(0..window_seconds)
            };
            events.push(RouteChange {
                prefix: world.prefixes[origin],
                old_path: old_path.clone(),
                new_path,
                time,
            });
        }
    }
    if events.is_empty() {
        return Err(HarnessError::Data(
            "link failures produced no observable route changes".into(),
        ));
    }
    events.sort_by(|a, b| (a.time, a.prefix).cmp(&(b.time, b.prefix)));
    Ok(events)
}

pub fn run_beam_campaign(
    config: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<ResultBundle, HarnessError> {
    config.validate()?;
    let spec = config
        .beam
        .as_ref()
        .ok_or_else(|| HarnessError::Config("config has no beam campaign section".into()))?;
    let mut writer = RunWriter::start(config, out_dir, &["beam_results.csv"])?;

    let world = build_world(config)?;
    let emb = train_embedding(
        &world.graph,
        &config.detector.embedding,
        stage_seed(config.seed, "beam-train"),
    )
    .map_err(data_err)?;
    let window = config.detector.window_seconds;
    let template = ThresholdState::new(window, config.detector.k, config.detector.include_flagged, 0);
    let baseline = baseline_stream(&world, spec, window, stage_seed(config.seed, "beam-baseline"))?;
    let theta0 = estimate_beam_threshold(&baseline, &emb, &template).map_err(data_err)?;

    let attackers = resolve_selection(
        &spec.attackers,
        &world.stubs,
        &world.graph,
        stage_seed(config.seed, "beam-attackers"),
        "attacker",
    )?;

    // Forged-origin hijack candidates: at a monitor that routes to both
    // parties, the route for the victim's prefix flips from the monitor's
    // path to the victim over to its path to the attacker with the victim
    // forged as origin. One candidate per sampled victim.
    let nodes: Vec<Asn> = world.graph.nodes().collect();
    let mut candidates_per_attacker: BTreeMap<Asn, Vec<RouteChange>> = BTreeMap::new();
    let mut corpus_per_attacker: BTreeMap<Asn, Vec<Vec<Asn>>> = BTreeMap::new();
    let mut victim_corpus_cache: BTreeMap<Asn, Vec<Vec<Asn>>> = BTreeMap::new();
    for &attacker in &attackers {
        let corpus = monitor_corpus(&world, attacker)?;
        let paths = paths_originated_by(&corpus, attacker, 5);
        let mut rng =
            ChaCha8Rng::seed_from_u64(stage_seed(config.seed, &format!("beam-victims-{attacker}")));
        let mut victims = nodes.clone();
        for i in (1..victims.len()).rev() {
            let j = rng.gen_range(0..=i);
            victims.swap(i, j);
        }
        let mut candidates = Vec::new();
        for v in victims {
            if candidates.len() >= spec.hijack_candidates {
                break;
            }
            if v == attacker {
                continue;
            }
            if !victim_corpus_cache.contains_key(&v) {
                let vc = monitor_corpus(&world, v)?;
                victim_corpus_cache.insert(v, vc);
            }
            let victim_paths = &victim_corpus_cache[&v];
            for vp in victim_paths {
                let Some(ap) = corpus.iter().find(|p| p.first() == vp.first()) else {
                    continue;
                };
                if ap.contains(&v) {
                    continue;
                }
                let mut new_path = ap.clone();
                new_path.push(v);
                if new_path == *vp {
                    continue;
                }
                candidates.push(RouteChange {
                    prefix: world.prefixes[&v],
                    old_path: vp.clone(),
                    new_path,
                    time: 0,
                });
                break;
            }
        }
        candidates_per_attacker.insert(attacker, candidates);
        corpus_per_attacker.insert(attacker, paths);
    }

    let mut points: Vec<(Asn, usize)> = Vec::new();
    for &attacker in &attackers {
        for n in spec.n_distinct.min..=spec.n_distinct.max {
            points.push((attacker, n));
        }
    }

    let rows: Vec<Result<BeamRow, HarnessError>> = with_pool(jobs, || {
        points
            .par_iter()
            .map(|&(attacker, n)| -> Result<BeamRow, HarnessError> {
                let attack = AttackSpec {
                    attacker,
                    victim: *nodes.iter().find(|&&v| v != attacker).expect("two ASes"),
                    parent_prefix: world.prefixes[&attacker],
                    victim_prefix: world.prefixes[&attacker],
                    budget: 0,
                    allow_transit_augmentation: false,
                    wait_days: 0,
                    scan_limit: 0,
                };
                let paths = &corpus_per_attacker[&attacker];
                let candidates = &candidates_per_attacker[&attacker];
                let planned = plan_threshold_pollution(
                    &emb, theta0, &attack, paths, n, spec.epsilon,
                );
                let polluted = match &planned {
                    Ok(plan) => {
                        let amplified = amplify(
                            plan,
                            &spec.oscillation,
                            stage_seed(config.seed, &format!("amplify-{attacker}-{n}")),
                            0,
                            window,
                        );
                        let mut merged = baseline.clone();
                        merged.extend(amplified);
                        merged
                    }
                    // Nothing scores inside the target band: zero-gain row.
                    Err(AttackError::InfeasiblePollution) => baseline.clone(),
                    Err(e) => return Err(data_err(e)),
                };
                let result =
                    evaluate_pollution(&emb, &template, &baseline, &polluted, candidates)
                        .map_err(data_err)?;
                Ok(BeamRow {
                    attacker,
                    n_distinct: n,
                    theta_before: result.theta_before,
                    theta_after: result.theta_after,
                    undetected_before: result.undetected_fraction_before,
                    undetected_after: result.undetected_fraction_after,
                })
            })
            .collect()
    })?;
    let mut rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    rows.sort_by_key(|r| (r.attacker, r.n_distinct));

    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.attacker,
                r.n_distinct,
                fmt6(r.theta_before),
                fmt6(r.theta_after),
                fmt6(r.undetected_before),
                fmt6(r.undetected_after)
            )
        })
        .collect();
    writer.write_csv(
        "beam_results.csv",
        "attacker,n_distinct,theta_before,theta_after,undetected_before,undetected_after",
        &lines,
    )?;
    let mut bundle = writer.finish()?;
    bundle.beam_rows = rows;
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// Monitor sweep
// ---------------------------------------------------------------------------

pub fn load_poison_traces(path: &Path) -> Result<Vec<Link>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut links = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(HarnessError::Data(format!(
                "{}: line {}: expected 3 fields",
                path.display(),
                i + 1
            )));
        }
        let a: u32 = fields[1]
            .parse()
            .map_err(|_| HarnessError::Data(format!("bad ASN {:?}", fields[1])))?;
        let b: u32 = fields[2]
            .parse()
            .map_err(|_| HarnessError::Data(format!("bad ASN {:?}", fields[2])))?;
        links.push(Link::new(
            Asn::new(a).map_err(data_err)?,
            Asn::new(b).map_err(data_err)?,
        ));
    }
    links.sort();
    links.dedup();
    Ok(links)
}

/// Sweep monitor deployments over the poison traces of a completed DFOH
/// campaign (read from `poison_traces.csv` in the output directory).
pub fn run_monitor_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<ResultBundle, HarnessError> {
    config.validate()?;
    let spec = config
        .monitor_sweep
        .as_ref()
        .ok_or_else(|| HarnessError::Config("config has no monitor_sweep section".into()))?;
    let traces_path = out_dir.join("poison_traces.csv");
    if !traces_path.exists() {
        return Err(HarnessError::Data(format!(
            "{} not found: run the dfoh campaign first",
            traces_path.display()
        )));
    }
    let traces = load_poison_traces(&traces_path)?;
    if traces.is_empty() {
        return Err(HarnessError::Data("poison trace file has no links".into()));
    }
    let mut writer = RunWriter::start(config, out_dir, &["monitor_results.csv"])?;
    let world = build_world(config)?;

    let mut grid = spec.m_grid.clone();
    grid.sort_unstable();
    grid.dedup();

    let mut points: Vec<(&'static str, usize, usize)> = Vec::new();
    for &m in &grid {
        for trial in 0..spec.trials {
            points.push(("best_case", m, trial));
            points.push(("random", m, trial));
        }
    }
    let rows: Vec<Result<MonitorRow, HarnessError>> = with_pool(jobs, || {
        points
            .par_iter()
            .map(|&(strategy, m, trial)| {
                let deployment = match strategy {
                    "best_case" => crate::countermeasures::select_monitors_best_case(&traces, m)
                        .map_err(data_err)?,
                    _ => crate::countermeasures::select_monitors_random(
                        &world.graph,
                        m,
                        stage_seed(config.seed, &format!("monitor-trial-{trial}")),
                    ),
                };
                let rate = crate::countermeasures::detection_rate(&traces, &deployment)
                    .map_err(data_err)?;
                Ok(MonitorRow {
                    strategy: strategy.to_string(),
                    m,
                    trial,
                    detection_rate: rate,
                })
            })
            .collect()
    })?;
    let mut rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| (&a.strategy, a.m, a.trial).cmp(&(&b.strategy, b.m, b.trial)));

    let lines: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{},{}", r.strategy, r.m, r.trial, fmt6(r.detection_rate)))
        .collect();
    writer.write_csv("monitor_results.csv", "strategy,m,trial,detection_rate", &lines)?;
    let mut bundle = writer.finish()?;
    bundle.monitor_rows = rows;
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Plain-text digest of whatever result CSVs exist in an output directory.
pub fn summarize(out_dir: &Path) -> Result<String, HarnessError> {
    let mut out = String::new();
    let dfoh = out_dir.join("dfoh_results.csv");
    if dfoh.exists() {
        let text = std::fs::read_to_string(&dfoh).map_err(data_err)?;
        let mut total = 0usize;
        let mut evaded = 0usize;
        let mut zero = 0usize;
        let mut le2 = 0usize;
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                continue;
            }
            total += 1;
            if f[2] == "true" {
                evaded += 1;
                let links: usize = f[3].parse().unwrap_or(0);
                if links == 0 {
                    zero += 1;
                }
                if links <= 2 {
                    le2 += 1;
                }
            }
        }
        out.push_str(&format!(
            "dfoh: {total} pairs, {evaded} evaded ({:.1}%), zero-link {zero} ({:.1}%), <=2-link {le2} ({:.1}%)\n",
            pct(evaded, total),
            pct(zero, total),
            pct(le2, total)
        ));
    }
    let beam = out_dir.join("beam_results.csv");
    if beam.exists() {
        let text = std::fs::read_to_string(&beam).map_err(data_err)?;
        let mut n = 0usize;
        let mut theta_gain = 0.0;
        let mut undetected_gain = 0.0;
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                continue;
            }
            let tb: f64 = f[2].parse().unwrap_or(0.0);
            let ta: f64 = f[3].parse().unwrap_or(0.0);
            let ub: f64 = f[4].parse().unwrap_or(0.0);
            let ua: f64 = f[5].parse().unwrap_or(0.0);
            if tb > 0.0 {
                theta_gain += (ta - tb) / tb;
                undetected_gain += ua - ub;
                n += 1;
            }
        }
        if n > 0 {
            out.push_str(&format!(
                "beam: {n} rows, mean theta gain {:+.2}%, mean undetected gain {:+.2} pp\n",
                100.0 * theta_gain / n as f64,
                100.0 * undetected_gain / n as f64
            ));
        }
    }
    let mon = out_dir.join("monitor_results.csv");
    if mon.exists() {
        let text = std::fs::read_to_string(&mon).map_err(data_err)?;
        let mut by_key: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                continue;
            }
            let m: usize = f[1].parse().unwrap_or(0);
            let rate: f64 = f[3].parse().unwrap_or(0.0);
            let entry = by_key.entry((f[0].to_string(), m)).or_insert((0.0, 0));
            entry.0 += rate;
            entry.1 += 1;
        }
        for ((strategy, m), (sum, count)) in by_key {
            out.push_str(&format!(
                "monitors: {strategy} m={m} mean detection {:.1}%\n",
                100.0 * sum / count as f64
            ));
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Data(format!(
            "no result CSVs found in {}",
            out_dir.display()
        )));
    }
    Ok(out)
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::SynthParams;

    fn small_config(seed: u64) -> ExperimentConfig {
        let mut detector = DetectorConfig::default();
        detector.sampling.n_per_class = 60;
        detector.forest.n_trees = 15;
        detector.forest.max_depth = 8;
        detector.embedding.dimension = 16;
        detector.embedding.epochs = 20;
        ExperimentConfig {
            topology: TopologySource::Synthetic(SynthParams::desk(3, 15, 120)),
            seed,
            monitors: 8,
            detector,
            dfoh: Some(DfohCampaignSpec {
                attackers: Selection::Sample(3),
                victims: Selection::Sample(4),
                budget: 3,
                allow_transit_augmentation: false,
                wait_days: 30,
                max_corpus_paths: 5,
                scan_limit: 150,
                poison_lifetime_days: None,
            }),
            beam: Some(BeamCampaignSpec {
                attackers: Selection::Sample(2),
                n_distinct: RangeSpec { min: 1, max: 3 },
                epsilon: 0.3,
                oscillation: OscillationModel::default(),
                baseline_events: 80,
                baseline_origins: 25,
                hijack_candidates: 30,
            }),
            monitor_sweep: Some(MonitorSweepSpec {
                m_grid: vec![10, 1, 5],
                trials: 3,
            }),
            out_dir: None,
        }
    }

    #[test]
    fn strict_config_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(
            &path,
            r#"{"topology":{"synthetic":{"tier1":1,"tier2":2,"stubs":3}},"seed":1,"bogus":true}"#,
        )
        .unwrap();
        let err = load_config(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn config_roundtrip_and_hash_sensitivity() {
        let config = small_config(1);
        let json = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);

        let mut reseeded = small_config(2);
        assert_ne!(config.config_hash(), reseeded.config_hash());
        // The output directory is not semantically meaningful.
        reseeded.seed = 1;
        reseeded.out_dir = Some("/tmp/elsewhere".into());
        assert_eq!(config.config_hash(), reseeded.config_hash());
    }

    #[test]
    fn stage_seeds_differ_by_label() {
        assert_ne!(stage_seed(1, "a"), stage_seed(1, "b"));
        assert_ne!(stage_seed(1, "a"), stage_seed(2, "a"));
        assert_eq!(stage_seed(7, "x"), stage_seed(7, "x"));
    }

    #[test]
    fn world_construction_basics() {
        let world = build_world(&small_config(5)).unwrap();
        assert_eq!(world.monitors.len(), 8);
        assert!(!world.stubs.is_empty());
        assert_eq!(world.prefixes.len(), world.graph.node_count());
        let prefixes: BTreeSet<Prefix> = world.prefixes.values().copied().collect();
        assert_eq!(prefixes.len(), world.prefixes.len());
        let kb = bootstrap_kb(&world, &DetectorConfig::default(), 1);
        assert_eq!(kb.active_link_count(), world.graph.edge_count());
        let in_irr = kb.irr_links.len() as f64 / world.graph.edge_count() as f64;
        assert!(in_irr > 0.4 && in_irr < 0.8, "irr fraction {in_irr}");
    }

    #[test]
    fn dfoh_campaign_deterministic_and_isolated() {
        let config = small_config(11);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let b1 = run_dfoh_campaign(&config, d1.path(), 1).unwrap();
        let b2 = run_dfoh_campaign(&config, d2.path(), 4).unwrap();
        assert_eq!(b1.dfoh_rows.len(), 12, "errors: {:?}", b1.pair_errors);
        let c1 = std::fs::read(&b1.csvs["dfoh_results.csv"]).unwrap();
        let c2 = std::fs::read(&b2.csvs["dfoh_results.csv"]).unwrap();
        assert_eq!(c1, c2);
        let t1 = std::fs::read(&b1.csvs["poison_traces.csv"]).unwrap();
        let t2 = std::fs::read(&b2.csvs["poison_traces.csv"]).unwrap();
        assert_eq!(t1, t2);
        let manifest = b1.manifest.unwrap();
        assert_eq!(manifest.config_hash, config.config_hash());
        assert!(manifest.outputs.contains(&"dfoh_results.csv".into()));
    }

    #[test]
    fn empty_dfoh_campaign_yields_valid_manifest() {
        let mut config = small_config(3);
        config.dfoh = Some(DfohCampaignSpec {
            attackers: Selection::List(vec![]),
            victims: Selection::Sample(5),
            budget: 2,
            allow_transit_augmentation: false,
            wait_days: 30,
            max_corpus_paths: 5,
            scan_limit: 150,
            poison_lifetime_days: None,
        });
        let dir = tempfile::tempdir().unwrap();
        let bundle = run_dfoh_campaign(&config, dir.path(), 0).unwrap();
        assert!(bundle.dfoh_rows.is_empty());
        assert!(bundle.manifest_path.exists());
        let text = std::fs::read_to_string(&bundle.csvs["dfoh_results.csv"]).unwrap();
        assert_eq!(
            text,
            "attacker,victim,evaded,links_used,suspicion_before,suspicion_after\n"
        );
    }

    #[test]
    fn beam_campaign_deterministic_row_count() {
        let config = small_config(21);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let b1 = run_beam_campaign(&config, d1.path(), 1).unwrap();
        let b2 = run_beam_campaign(&config, d2.path(), 3).unwrap();
        assert_eq!(b1.beam_rows.len(), 2 * 3);
        let c1 = std::fs::read(&b1.csvs["beam_results.csv"]).unwrap();
        let c2 = std::fs::read(&b2.csvs["beam_results.csv"]).unwrap();
        assert_eq!(c1, c2);
        for row in &b1.beam_rows {
            assert!(row.theta_before > 0.0);
            assert!(row.theta_after >= row.theta_before * 0.5);
        }
    }

    #[test]
    fn monitor_sweep_needs_traces_and_normalizes_grid() {
        let config = small_config(31);
        let dir = tempfile::tempdir().unwrap();
        let missing = run_monitor_sweep(&config, dir.path(), 0).unwrap_err();
        assert_eq!(missing.exit_code(), 3);

        run_dfoh_campaign(&config, dir.path(), 0).unwrap();
        let bundle = run_monitor_sweep(&config, dir.path(), 2).unwrap();
        // grid {1,5,10} x 3 trials x 2 strategies
        assert_eq!(bundle.monitor_rows.len(), 18);
        let ms: Vec<usize> = bundle
            .monitor_rows
            .iter()
            .filter(|r| r.strategy == "best_case")
            .map(|r| r.m)
            .collect();
        assert_eq!(ms, vec![1, 1, 1, 5, 5, 5, 10, 10, 10]);
        for rows in bundle.monitor_rows.chunks(3) {
            // trials of the same (strategy, m) share the grid order
            assert!(rows.windows(2).all(|w| w[0].m == w[1].m));
        }
        let summary = summarize(dir.path()).unwrap();
        assert!(summary.contains("dfoh:"));
        assert!(summary.contains("monitors: best_case m=1"));
    }
}
