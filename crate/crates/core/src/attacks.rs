//! The adversary: knowledge-base poisoning against the DFOH-style detector
//! (false-negative search, ranked-greedy link selection, optional transit
//! augmentation) and threshold pollution against the BEAM-style detector
//! (threshold estimation, just-below-threshold score placement, oscillation
//! amplification).

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::beam::{
    detect_change, path_difference, update_threshold, BeamError, EmbeddingTable, RouteChange,
    ThresholdState,
};
use crate::dfoh::{DfohError, DfohPipeline, Forest, KnowledgeBase, Link};
use crate::routing::{
    craft_poison_announcement, observe, propagate, simulate_hijack, HijackMode, RoaTable,
    RoutingError,
};
use crate::topology::{AsGraph, Asn, MetadataMap, Prefix, TopologyError};

/// One attacker/victim scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub attacker: Asn,
    pub victim: Asn,
    /// Prefix legitimately owned by the attacker; poison sub-prefixes are
    /// carved out of it.
    pub parent_prefix: Prefix,
    /// Prefix the final hijack targets.
    pub victim_prefix: Prefix,
    pub budget: usize,
    pub allow_transit_augmentation: bool,
    pub wait_days: u32,
    /// How many top-ranked forged-origin candidates the planner classifies.
    #[serde(default = "default_scan_limit")]
    pub scan_limit: usize,
}

fn default_scan_limit() -> usize {
    150
}

impl AttackSpec {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.attacker == self.victim {
            return Err(AttackError::InvalidSpec("attacker equals victim".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonLink {
    /// Announcing AS: the attacker, or its augmented position.
    pub from: Asn,
    /// The strategically chosen forged origin.
    pub forged_origin: Asn,
    pub sub_prefix: Prefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonPlan {
    pub poison_links: Vec<PoisonLink>,
    pub predicted_evasion: bool,
    /// New transit provider acquired before poisoning, if any.
    pub augmentation: Option<Asn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollutionAnnouncement {
    /// Forged ASes appended after the attacker; the last one is the forged
    /// origin. One hop when a single forged origin already lands in the
    /// target score band, two when the band needs a finer-grained score.
    pub forged_tail: Vec<Asn>,
    pub prefix: Prefix,
    pub expected_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollutionPlan {
    pub announcements: Vec<PollutionAnnouncement>,
    /// Legitimate path the polluting announcements mutate.
    pub old_path: Vec<Asn>,
    pub n_distinct: usize,
    pub epsilon: f64,
    /// Set when the feasible set was smaller than requested.
    pub truncated: bool,
}

/// BGP convergence repeats one logical announcement many times; modeled as a
/// lognormal replication count truncated to >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationModel {
    pub mean: f64,
    pub std: f64,
}

impl Default for OscillationModel {
    fn default() -> Self {
        // March 2024 route-collector measurement: 6.43 repeats/hour, std 17.79.
        OscillationModel {
            mean: 6.43,
            std: 17.79,
        }
    }
}

impl OscillationModel {
    /// Integer replication count >= 1.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        if self.std <= 0.0 {
            return (self.mean.round() as u64).max(1);
        }
        let cv2 = (self.std / self.mean).powi(2);
        let sigma2 = (1.0 + cv2).ln();
        let mu = self.mean.ln() - sigma2 / 2.0;
        let z: f64 = StandardNormal.sample(rng);
        let x = (mu + sigma2.sqrt() * z).exp();
        (x.round() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub evaded: bool,
    pub links_used: usize,
    pub suspicion_before: f64,
    pub suspicion_after: f64,
    pub attacker_share: f64,
    /// Poison links the defender flagged despite the surrogate's prediction.
    pub mispredicted_links: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PollutionResult {
    pub theta_before: f64,
    pub theta_after: f64,
    pub undetected_fraction_before: f64,
    pub undetected_fraction_after: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error("invalid attack spec: {0}")]
    InvalidSpec(String),
    #[error("no poisoning plan possible: {0}")]
    NoPlan(String),
    #[error("no forged origin yields a score below the threshold")]
    InfeasiblePollution,
    #[error("threshold estimation error: {0}")]
    Estimation(String),
    #[error(transparent)]
    Dfoh(#[from] DfohError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Ground-truth simulation context shared by attacker and defender.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub graph: AsGraph,
    pub roas: RoaTable,
    pub rov_ases: BTreeSet<Asn>,
    pub monitors: BTreeSet<Asn>,
    pub metadata: MetadataMap,
}

/// Paths from the input route corpus that terminate at `origin`, the only
/// vantage material the planners are allowed to extrapolate from.
pub fn paths_originated_by(corpus: &[Vec<Asn>], origin: Asn, limit: usize) -> Vec<Vec<Asn>> {
    let mut paths: Vec<Vec<Asn>> = corpus
        .iter()
        .filter(|p| p.last() == Some(&origin))
        .cloned()
        .collect();
    paths.sort();
    paths.dedup();
    paths.truncate(limit);
    if paths.is_empty() {
        paths.push(vec![origin]);
    }
    paths
}

fn extend_paths(paths: &[Vec<Asn>], next: Asn) -> Vec<Vec<Asn>> {
    paths
        .iter()
        .filter(|p| !p.contains(&next))
        .map(|p| {
            let mut q = p.clone();
            q.push(next);
            q
        })
        .collect()
}

/// Candidate ranking: country match with the victim weighs 3, each shared
/// IXP 2, log-degree 1.
fn candidate_rank(
    kb: &KnowledgeBase,
    metadata: &MetadataMap,
    candidate: Asn,
    victim: Asn,
) -> f64 {
    let empty = crate::topology::AsMetadata::default();
    let mb = metadata.get(&candidate).unwrap_or(&empty);
    let mv = metadata.get(&victim).unwrap_or(&empty);
    let country = match (&mb.country, &mv.country) {
        (Some(a), Some(b)) if a == b => 1.0,
        _ => 0.0,
    };
    let shared_ixps = mb.ixps.intersection(&mv.ixps).count() as f64;
    3.0 * country + 2.0 * shared_ixps + (1.0 + kb.degree(candidate) as f64).ln()
}

/// Sub-prefix slices of `parent` deep enough to hold `n` distinct prefixes.
fn carve_subprefixes(parent: Prefix, n: usize) -> Result<Vec<Prefix>, AttackError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let depth = (usize::BITS - (n - 1).leading_zeros()) as u8; // ceil(log2(n)), 0 for n=1
    let length = parent.length() + depth + 1; // +1: the announced half inside each slice
    if length > 32 {
        return Err(AttackError::InvalidSpec(format!(
            "parent prefix {parent} too long for {n} poison sub-prefixes"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u32 {
        let base = parent.base() | (i << (32 - parent.length() as u32 - depth as u32));
        out.push(Prefix::new(base, length)?);
    }
    Ok(out)
}

/// Recover the parent slice of an announced poison sub-prefix (its covering
/// prefix one bit shorter); the inverse of [`carve_subprefixes`].
pub fn poison_parent(sub_prefix: Prefix) -> Result<Prefix, AttackError> {
    if sub_prefix.length() == 0 {
        return Err(AttackError::InvalidSpec("sub-prefix of length 0".into()));
    }
    let length = sub_prefix.length() - 1;
    let mask = if length == 0 {
        0
    } else {
        u32::MAX << (32 - length)
    };
    Ok(Prefix::new(sub_prefix.base() & mask, length)?)
}

struct CandidateSearch<'a> {
    surrogate: &'a Forest,
    metadata: &'a MetadataMap,
    victim: Asn,
    attacker: Asn,
    scan_limit: usize,
}

impl CandidateSearch<'_> {
    /// ASes B for which the surrogate leaves link (attacker, B) unflagged.
    /// Candidates are ranked by the victim-proximity heuristic first and only
    /// the top `scan_limit` are classified.
    fn false_negatives(&self, kb: &KnowledgeBase, attacker_paths: &[Vec<Asn>]) -> Vec<Asn> {
        let mut ranked: Vec<(f64, Asn)> = kb
            .adjacency()
            .keys()
            .filter(|&&b| {
                b != self.attacker
                    && b != self.victim
                    && !kb.knows(Link::new(self.attacker, b))
            })
            .map(|&b| (candidate_rank(kb, self.metadata, b, self.victim), b))
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        ranked.truncate(self.scan_limit);
        let mut out = Vec::new();
        for (_, b) in ranked {
            let link = Link::new(self.attacker, b);
            let paths = extend_paths(attacker_paths, b);
            if paths.is_empty() {
                continue;
            }
            let verdict =
                match crate::dfoh::classify_link(self.surrogate, kb, self.metadata, link, &paths) {
                    Ok(v) => v,
                    Err(DfohError::InsufficientData(_)) => continue,
                    Err(_) => continue,
                };
            if !verdict.flagged {
                out.push(b);
            }
        }
        out
    }

    fn hijack_suspicion(
        &self,
        kb: &KnowledgeBase,
        attacker_paths: &[Vec<Asn>],
    ) -> Result<crate::dfoh::Verdict, DfohError> {
        let link = Link::new(self.attacker, self.victim);
        let mut paths = extend_paths(attacker_paths, self.victim);
        if paths.is_empty() {
            paths.push(vec![self.attacker, self.victim]);
        }
        match crate::dfoh::classify_link(self.surrogate, kb, self.metadata, link, &paths) {
            Ok(v) => Ok(v),
            Err(DfohError::InsufficientData(_)) => Ok(crate::dfoh::Verdict {
                suspicion: 1.0,
                flagged: true,
                per_path: Vec::new(),
            }),
            Err(e) => Err(e),
        }
    }
}

/// White-box poisoning planner: find forged origins the surrogate classifier
/// misses, insert them greedily into a simulated knowledge base, and stop as
/// soon as the hijack link (attacker, victim) goes unflagged.
///
/// `attacker_paths` must come from routes actually observed from the
/// attacker's AS in the input corpus (see [`paths_originated_by`]).
pub fn plan_dfoh_poisoning(
    surrogate: &Forest,
    kb: &KnowledgeBase,
    metadata: &MetadataMap,
    spec: &AttackSpec,
    attacker_paths: &[Vec<Asn>],
) -> Result<PoisonPlan, AttackError> {
    spec.validate()?;
    let search = CandidateSearch {
        surrogate,
        metadata,
        victim: spec.victim,
        attacker: spec.attacker,
        scan_limit: spec.scan_limit,
    };

    let mut kb_sim = kb.clone();
    let mut chosen: Vec<Asn> = Vec::new();
    let mut augmentation = None;

    // Zero links needed when (H, V) is already a false negative.
    let mut evaded = !search.hijack_suspicion(&kb_sim, attacker_paths)?.flagged;

    if !evaded && spec.budget > 0 {
        let candidates = search.false_negatives(&kb_sim, attacker_paths);
        evaded = greedy_fill(
            &search,
            &mut kb_sim,
            &candidates,
            attacker_paths,
            spec.budget,
            &mut chosen,
        )?;
    }

    // Transit augmentation: buy a new provider, sit out the quarantine, and
    // search again from the expanded position.
    if !evaded && spec.allow_transit_augmentation && spec.wait_days >= kb.quarantine_days {
        if let Some(provider) = pick_augmentation_provider(&kb_sim, spec) {
            let day = kb_sim.current_day;
            kb_sim.insert_quarantined(spec.attacker, provider, day);
            kb_sim.advance_to(day + spec.wait_days);
            augmentation = Some(provider);
            evaded = !search.hijack_suspicion(&kb_sim, attacker_paths)?.flagged;
            if !evaded && chosen.len() < spec.budget {
                let candidates: Vec<Asn> = search
                    .false_negatives(&kb_sim, attacker_paths)
                    .into_iter()
                    .filter(|b| !chosen.contains(b))
                    .collect();
                evaded = greedy_fill(
                    &search,
                    &mut kb_sim,
                    &candidates,
                    attacker_paths,
                    spec.budget,
                    &mut chosen,
                )?;
            }
        }
    }

    let prefixes = carve_subprefixes(spec.parent_prefix, chosen.len())?;
    let poison_links = chosen
        .into_iter()
        .zip(prefixes)
        .map(|(b, slice)| PoisonLink {
            from: spec.attacker,
            forged_origin: b,
            sub_prefix: slice.lower_half().expect("carve leaves room"),
        })
        .collect();
    Ok(PoisonPlan {
        poison_links,
        predicted_evasion: evaded,
        augmentation,
    })
}

/// Ranked-greedy with marginal pruning: try candidates in rank order, keep a
/// link only when it strictly lowers the surrogate's suspicion of the hijack
/// link, and stop as soon as the link goes unflagged or the budget is spent.
fn greedy_fill(
    search: &CandidateSearch<'_>,
    kb_sim: &mut KnowledgeBase,
    candidates: &[Asn],
    attacker_paths: &[Vec<Asn>],
    budget: usize,
    chosen: &mut Vec<Asn>,
) -> Result<bool, AttackError> {
    let mut best = search
        .hijack_suspicion(kb_sim, attacker_paths)?
        .suspicion;
    for &b in candidates {
        if chosen.len() >= budget {
            break;
        }
        kb_sim.insert_link(search.attacker, b, kb_sim.current_day);
        let verdict = search.hijack_suspicion(kb_sim, attacker_paths)?;
        if verdict.suspicion < best {
            best = verdict.suspicion;
            chosen.push(b);
            if !verdict.flagged {
                return Ok(true);
            }
        } else {
            kb_sim.remove_link(Link::new(search.attacker, b));
        }
    }
    Ok(false)
}

fn pick_augmentation_provider(kb: &KnowledgeBase, spec: &AttackSpec) -> Option<Asn> {
    kb.adjacency()
        .keys()
        .filter(|&&p| {
            p != spec.attacker && p != spec.victim && !kb.knows(Link::new(spec.attacker, p))
        })
        .max_by_key(|&&p| (kb.degree(p), std::cmp::Reverse(p)))
        .copied()
}

/// Carry out a poisoning plan against the live defender pipeline, then run
/// the Type-1 hijack and measure evasion.
pub fn execute_dfoh_attack(
    ctx: &SimContext,
    defender: &mut DfohPipeline,
    plan: &PoisonPlan,
    spec: &AttackSpec,
) -> Result<AttackResult, AttackError> {
    spec.validate()?;
    let hijack_link = Link::new(spec.attacker, spec.victim);

    // Augmentation mutates the ground truth: the attacker really buys transit.
    let mut graph = ctx.graph.clone();
    if let Some(provider) = plan.augmentation {
        graph.add_provider_customer(provider, spec.attacker)?;
        let ann = crate::routing::Announcement {
            prefix: spec.parent_prefix,
            as_path: vec![spec.attacker],
            sender: spec.attacker,
        };
        let rib = propagate(&graph, &[ann], &ctx.roas, &ctx.rov_ases)?;
        let events = observe(&rib, &ctx.monitors, defender.day as u64 * 86_400);
        let declared = BTreeSet::from([Link::new(spec.attacker, provider)]);
        defender.process_events(&events, &ctx.metadata, &declared)?;
        let release = defender.day + spec.wait_days;
        defender.kb.advance_to(release);
        defender.day = release;
    }

    // Baseline verdict on the hijack link from the paths monitors would see.
    let pre = simulate_hijack(
        &graph,
        &ctx.roas,
        &ctx.rov_ases,
        spec.victim,
        spec.attacker,
        HijackMode::Type1,
        spec.victim_prefix,
    )?;
    let hijack_paths = monitor_hijack_paths(&pre, &ctx.monitors, spec);
    let suspicion_before = defender
        .judge(&ctx.metadata, hijack_link, &hijack_paths)?
        .suspicion;

    // Poisoning phase: one incorporation cycle per link.
    let mut mispredicted = 0usize;
    for link in &plan.poison_links {
        let parent = poison_parent(link.sub_prefix)?;
        let (ann, roa_delta) =
            craft_poison_announcement(link.from, link.forged_origin, parent, false)?;
        debug_assert!(ann.prefix == link.sub_prefix);
        let mut roas = ctx.roas.clone();
        roas.merge(&roa_delta);
        let rib = propagate(&graph, &[ann], &roas, &ctx.rov_ases)?;
        let events = observe(&rib, &ctx.monitors, defender.day as u64 * 86_400);
        let verdicts = defender.process_events(&events, &ctx.metadata, &BTreeSet::new())?;
        let poisoned = Link::new(link.from, link.forged_origin);
        if verdicts
            .iter()
            .any(|(l, v)| *l == poisoned && v.flagged)
        {
            mispredicted += 1;
        }
    }

    // The hijack itself, judged on the post-poisoning knowledge base.
    let outcome = simulate_hijack(
        &graph,
        &ctx.roas,
        &ctx.rov_ases,
        spec.victim,
        spec.attacker,
        HijackMode::Type1,
        spec.victim_prefix,
    )?;
    let hijack_paths = monitor_hijack_paths(&outcome, &ctx.monitors, spec);
    let verdict = defender.judge(&ctx.metadata, hijack_link, &hijack_paths)?;
    Ok(AttackResult {
        evaded: !verdict.flagged,
        links_used: plan.poison_links.len(),
        suspicion_before,
        suspicion_after: verdict.suspicion,
        attacker_share: outcome.attacker_share,
        mispredicted_links: mispredicted,
    })
}

fn monitor_hijack_paths(
    outcome: &crate::routing::HijackOutcome,
    monitors: &BTreeSet<Asn>,
    spec: &AttackSpec,
) -> Vec<Vec<Asn>> {
    let suffix = [spec.attacker, spec.victim];
    let mut paths: Vec<Vec<Asn>> = observe(&outcome.rib, monitors, 0)
        .into_iter()
        .filter(|ev| ev.announcement.as_path.ends_with(&suffix))
        .map(|ev| ev.announcement.as_path)
        .collect();
    if paths.is_empty() {
        paths.push(suffix.to_vec());
    }
    paths
}

/// Replay public route changes through the defender's exact threshold rule.
/// Equals the defender's theta bit-for-bit on identical input.
pub fn estimate_beam_threshold(
    events: &[RouteChange],
    emb: &EmbeddingTable,
    template: &ThresholdState,
) -> Result<f64, AttackError> {
    if events.is_empty() {
        return Err(AttackError::Estimation("no events".into()));
    }
    let mut state = template.clone();
    let mut events = events.to_vec();
    events.sort_by_key(|e| e.time);
    let span_start = state.boundary - state.window_seconds;
    let last = events.last().unwrap().time;
    if last < span_start + state.window_seconds.saturating_sub(1) {
        return Err(AttackError::Estimation(
            "events do not cover a full window".into(),
        ));
    }
    for ev in &events {
        detect_change(emb, &mut state, ev)?;
    }
    let boundary = state.boundary;
    update_threshold(&mut state, boundary);
    state
        .theta
        .ok_or_else(|| AttackError::Estimation("no threshold after replay".into()))
}

/// Choose forged origins whose polluted-path scores land just below the
/// current threshold, in (theta*(1-epsilon), theta).
pub fn plan_threshold_pollution(
    emb: &EmbeddingTable,
    theta: f64,
    spec: &AttackSpec,
    attacker_paths: &[Vec<Asn>],
    n_distinct: usize,
    epsilon: f64,
) -> Result<PollutionPlan, AttackError> {
    if theta <= 0.0 {
        return Err(AttackError::InvalidSpec("theta must be positive".into()));
    }
    let old_path = attacker_paths
        .iter()
        .find(|p| p.last() == Some(&spec.attacker))
        .cloned()
        .unwrap_or_else(|| vec![spec.attacker]);
    if n_distinct == 0 {
        return Ok(PollutionPlan {
            announcements: Vec::new(),
            old_path,
            n_distinct: 0,
            epsilon,
            truncated: false,
        });
    }
    let lo = theta * (1.0 - epsilon);
    let score_of = |tail: &[Asn]| -> Result<f64, AttackError> {
        let mut new_path = old_path.clone();
        new_path.extend_from_slice(tail);
        let change = RouteChange {
            prefix: spec.parent_prefix,
            old_path: old_path.clone(),
            new_path,
            time: 0,
        };
        Ok(path_difference(emb, &change)?)
    };

    // Single forged origins first.
    let mut singles: Vec<(f64, Asn)> = Vec::new();
    let mut feasible: Vec<(f64, Vec<Asn>)> = Vec::new();
    for b in emb.ases() {
        if b == spec.attacker || old_path.contains(&b) {
            continue;
        }
        let score = score_of(&[b])?;
        if score > lo && score < theta {
            feasible.push((score, vec![b]));
        }
        singles.push((score, b));
    }

    // Two-hop forged tails when single hops are too coarse for the band:
    // with tail [b1, b2] the alignment cost is close to the sum of the two
    // single-hop costs, so aim pairs at the band by that sum.
    if feasible.len() < n_distinct && old_path.len() >= 1 {
        let m = old_path.len() as f64;
        let mut by_cost: Vec<(f64, Asn)> = singles
            .iter()
            .map(|&(s, b)| (s * (m + 1.0), b))
            .collect();
        by_cost.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let lo_sum = lo * (m + 2.0);
        let hi_sum = theta * (m + 2.0);
        'pairs: for i in 0..by_cost.len() {
            let (ci, bi) = by_cost[i];
            let start = by_cost.partition_point(|&(c, _)| ci + c <= lo_sum);
            let mut tried = 0;
            for &(cj, bj) in &by_cost[start..] {
                if ci + cj >= hi_sum || tried >= 8 {
                    break;
                }
                tried += 1;
                if bi == bj {
                    continue;
                }
                let score = score_of(&[bi, bj])?;
                if score > lo && score < theta {
                    feasible.push((score, vec![bi, bj]));
                    if feasible.len() >= n_distinct {
                        break 'pairs;
                    }
                }
            }
        }
    }

    if feasible.is_empty() {
        return Err(AttackError::InfeasiblePollution);
    }
    feasible.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    feasible.dedup_by(|a, b| a.1 == b.1);
    feasible.truncate(n_distinct);
    let truncated = feasible.len() < n_distinct;
    let prefixes = carve_subprefixes(spec.parent_prefix, feasible.len())?;
    let announcements = feasible
        .into_iter()
        .zip(prefixes)
        .map(|((score, tail), prefix)| PollutionAnnouncement {
            forged_tail: tail,
            prefix,
            expected_score: score,
        })
        .collect();
    Ok(PollutionPlan {
        announcements,
        old_path,
        n_distinct,
        epsilon,
        truncated,
    })
}

/// Replicate each distinct polluting announcement per the oscillation model,
/// with timestamps spread uniformly over one window.
pub fn amplify(
    plan: &PollutionPlan,
    model: &OscillationModel,
    seed: u64,
    window_start: u64,
    window_seconds: u64,
) -> Vec<RouteChange> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0_5c1_11a7e);
    let mut out = Vec::new();
    for ann in &plan.announcements {
        let reps = model.sample(&mut rng);
        for _ in 0..reps {
            let mut new_path = plan.old_path.clone();
            new_path.extend_from_slice(&ann.forged_tail);
            out.push(RouteChange {
                prefix: ann.prefix,
                old_path: plan.old_path.clone(),
                new_path,
                time: window_start + rng.gen_range(0..window_seconds.max(1)),
            });
        }
    }
    out.sort_by(|a, b| (a.time, a.prefix).cmp(&(b.time, b.prefix)));
    out
}

/// Run the defender over baseline and polluted streams, recompute theta at
/// the boundary, and score every hijack candidate against each theta.
pub fn evaluate_pollution(
    emb: &EmbeddingTable,
    template: &ThresholdState,
    baseline_events: &[RouteChange],
    polluted_events: &[RouteChange],
    hijack_candidates: &[RouteChange],
) -> Result<PollutionResult, AttackError> {
    let theta_before = replay_theta(emb, template, baseline_events)?;
    let theta_after = replay_theta(emb, template, polluted_events)?;
    let undetected = |theta: f64| -> Result<f64, AttackError> {
        if hijack_candidates.is_empty() {
            return Ok(0.0);
        }
        let mut ok = 0usize;
        for c in hijack_candidates {
            if path_difference(emb, c)? <= theta {
                ok += 1;
            }
        }
        Ok(ok as f64 / hijack_candidates.len() as f64)
    };
    Ok(PollutionResult {
        theta_before,
        theta_after,
        undetected_fraction_before: undetected(theta_before)?,
        undetected_fraction_after: undetected(theta_after)?,
    })
}

fn replay_theta(
    emb: &EmbeddingTable,
    template: &ThresholdState,
    events: &[RouteChange],
) -> Result<f64, AttackError> {
    let mut state = template.clone();
    let mut events = events.to_vec();
    events.sort_by_key(|e| e.time);
    for ev in &events {
        detect_change(emb, &mut state, ev)?;
    }
    let boundary = state.boundary;
    update_threshold(&mut state, boundary);
    state
        .theta
        .ok_or_else(|| AttackError::Estimation("empty stream".into()))
}
