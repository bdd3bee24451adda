//! BGP propagation under Gao-Rexford policy with optional ROV filtering,
//! hijack scenarios, poisoning announcements, and the monitor observation
//! model.
//!
//! Propagation runs in the classic three phases (up via customers, one peer
//! hop, down via providers) with a Dijkstra-style relaxation per phase, so a
//! route's best-path invariants hold without a full iterate-to-fixpoint loop.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::topology::{AsGraph, Asn, Prefix};

/// A BGP announcement. `as_path` is ordered with the origin LAST and the
/// most recent sender first; a route installed at AS x has `as_path[0] == x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Announcement {
    pub prefix: Prefix,
    pub as_path: Vec<Asn>,
    pub sender: Asn,
}

impl Announcement {
    pub fn origin(&self) -> Asn {
        *self.as_path.last().expect("non-empty path")
    }

    pub fn validate(&self) -> Result<(), RoutingError> {
        if self.as_path.is_empty() {
            return Err(RoutingError::EmptyPath);
        }
        let unique: BTreeSet<Asn> = self.as_path.iter().copied().collect();
        if unique.len() != self.as_path.len() {
            return Err(RoutingError::PathLoop(self.as_path.clone()));
        }
        Ok(())
    }
}

/// RPKI validation state of a (prefix, origin) pair against a ROA table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpkiState {
    Valid,
    Invalid,
    NotFound,
}

/// ROA table. An entry covers exactly its prefix/length.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoaTable {
    pub entries: BTreeMap<Prefix, BTreeSet<Asn>>,
}

impl RoaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn authorize(&mut self, prefix: Prefix, origin: Asn) {
        self.entries.entry(prefix).or_default().insert(origin);
    }

    pub fn validate(&self, prefix: Prefix, origin: Asn) -> RpkiState {
        match self.entries.get(&prefix) {
            None => RpkiState::NotFound,
            Some(origins) if origins.contains(&origin) => RpkiState::Valid,
            Some(_) => RpkiState::Invalid,
        }
    }

    pub fn merge(&mut self, delta: &RoaTable) {
        for (p, origins) in &delta.entries {
            self.entries.entry(*p).or_default().extend(origins.iter());
        }
    }
}

/// How the owning AS learned a route; drives both preference and export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Learned {
    /// Self-originated or locally injected.
    Origin,
    Customer,
    Peer,
    Provider,
}

impl Learned {
    /// Higher is preferred.
    fn preference(self) -> u8 {
        match self {
            Learned::Origin => 3,
            Learned::Customer => 2,
            Learned::Peer => 1,
            Learned::Provider => 0,
        }
    }

    /// Gao-Rexford export: customer-learned (and own) routes go to everyone,
    /// peer/provider-learned routes only to customers.
    pub fn exports_to_non_customers(self) -> bool {
        matches!(self, Learned::Origin | Learned::Customer)
    }
}

/// Selected route at one AS: full path (owner first, origin last) plus the
/// relation class it was learned through.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RibEntry {
    pub path: Vec<Asn>,
    pub learned: Learned,
}

impl RibEntry {
    pub fn origin(&self) -> Asn {
        *self.path.last().unwrap()
    }

    /// Neighbor the route was learned from; the owner itself for origins.
    pub fn next_hop(&self) -> Asn {
        if self.path.len() > 1 && self.learned != Learned::Origin {
            self.path[1]
        } else {
            self.path[0]
        }
    }

    /// True iff `candidate` is strictly preferred over `self` under
    /// customer > peer > provider, then shortest path, then lowest next-hop.
    fn beaten_by(&self, candidate: &RibEntry) -> bool {
        let lhs = (
            Reverse(self.learned.preference()),
            self.path.len(),
            self.next_hop(),
        );
        let rhs = (
            Reverse(candidate.learned.preference()),
            candidate.path.len(),
            candidate.next_hop(),
        );
        rhs < lhs
    }
}

/// Fixed point of propagation: selected route per (AS, prefix).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RibSnapshot {
    pub best: BTreeMap<(Asn, Prefix), RibEntry>,
}

impl RibSnapshot {
    pub fn get(&self, asn: Asn, prefix: Prefix) -> Option<&RibEntry> {
        self.best.get(&(asn, prefix))
    }

    pub fn prefixes(&self) -> BTreeSet<Prefix> {
        self.best.keys().map(|(_, p)| *p).collect()
    }

    /// The entry an AS uses for traffic to `target` under longest-prefix
    /// match over the prefixes present in its RIB.
    pub fn longest_match(&self, asn: Asn, target: Prefix) -> Option<&RibEntry> {
        let lo = Prefix::new(0, 0).unwrap();
        let hi = Prefix::new(u32::MAX, 32).unwrap();
        self.best
            .range((asn, lo)..=(asn, hi))
            .filter(|((a, p), _)| *a == asn && p.covers(&target))
            .max_by_key(|((_, p), _)| p.length())
            .map(|(_, e)| e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEvent {
    pub time: u64,
    pub monitor: Asn,
    pub announcement: Announcement,
}

#[derive(Debug, Clone)]
pub struct HijackOutcome {
    /// Fraction of ASes (excluding attacker and victim) whose selected route
    /// for the contested prefix leads to the attacker.
    pub attacker_share: f64,
    /// Paths selected somewhere in the network that carry the attack.
    pub monitor_paths: Vec<Vec<Asn>>,
    pub rib: RibSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HijackMode {
    Type0,
    Type1,
}

#[derive(Debug, thiserror::Error)]
pub enum RoutingError {
    #[error("announcement has an empty AS path")]
    EmptyPath,
    #[error("AS path contains a loop: {0:?}")]
    PathLoop(Vec<Asn>),
    #[error("origin or injection AS {0} not in graph")]
    UnknownOrigin(Asn),
    #[error("invalid hijack scenario: {0}")]
    InvalidScenario(String),
    #[error("prefix {0} has no sub-prefix available")]
    NoSubPrefix(Prefix),
    #[error("route dump parse error at line {line}: {msg}")]
    DumpParse { line: usize, msg: String },
}

/// Per-prefix propagation state during one phase.
struct PhaseHeap {
    // (path_len, next_hop, node) min-heap via Reverse.
    heap: BinaryHeap<Reverse<(usize, Asn, Asn)>>,
}

impl PhaseHeap {
    fn new() -> Self {
        PhaseHeap {
            heap: BinaryHeap::new(),
        }
    }

    fn push(&mut self, entry: &RibEntry, node: Asn) {
        self.heap
            .push(Reverse((entry.path.len(), entry.next_hop(), node)));
    }

    fn pop(&mut self) -> Option<(usize, Asn, Asn)> {
        self.heap.pop().map(|Reverse(t)| t)
    }
}

fn prepend(node: Asn, path: &[Asn]) -> Vec<Asn> {
    let mut p = Vec::with_capacity(path.len() + 1);
    p.push(node);
    p.extend_from_slice(path);
    p
}

/// Propagate a set of announcements to the Gao-Rexford fixed point.
///
/// Preference: customer-learned > peer-learned > provider-learned, then
/// shortest path, then lowest next-hop ASN. Customer-learned (and own)
/// routes are exported to all neighbors; peer/provider-learned routes only
/// to customers. ASes drop paths containing themselves. ASes in `rov_ases`
/// drop Invalid routes and accept Valid and NotFound.
pub fn propagate(
    graph: &AsGraph,
    announcements: &[Announcement],
    roas: &RoaTable,
    rov_ases: &BTreeSet<Asn>,
) -> Result<RibSnapshot, RoutingError> {
    let mut by_prefix: BTreeMap<Prefix, Vec<&Announcement>> = BTreeMap::new();
    for ann in announcements {
        ann.validate()?;
        let injector = ann.as_path[0];
        if !graph.contains(injector) || !graph.contains(ann.origin()) {
            return Err(RoutingError::UnknownOrigin(if graph.contains(injector) {
                ann.origin()
            } else {
                injector
            }));
        }
        by_prefix.entry(ann.prefix).or_default().push(ann);
    }

    let mut snapshot = RibSnapshot::default();
    for (prefix, seeds) in by_prefix {
        let per_prefix = propagate_one_prefix(graph, prefix, &seeds, roas, rov_ases);
        for (asn, entry) in per_prefix {
            snapshot.best.insert((asn, prefix), entry);
        }
    }
    Ok(snapshot)
}

fn accepts(
    rov_ases: &BTreeSet<Asn>,
    roas: &RoaTable,
    receiver: Asn,
    prefix: Prefix,
    origin: Asn,
) -> bool {
    !(rov_ases.contains(&receiver) && roas.validate(prefix, origin) == RpkiState::Invalid)
}

fn propagate_one_prefix(
    graph: &AsGraph,
    prefix: Prefix,
    seeds: &[&Announcement],
    roas: &RoaTable,
    rov_ases: &BTreeSet<Asn>,
) -> BTreeMap<Asn, RibEntry> {
    // best route per AS; phases only ever improve it under the preference order
    let mut best: BTreeMap<Asn, RibEntry> = BTreeMap::new();

    for ann in seeds {
        let injector = ann.as_path[0];
        if !accepts(rov_ases, roas, injector, prefix, ann.origin()) {
            continue;
        }
        let cand = RibEntry {
            path: ann.as_path.clone(),
            learned: Learned::Origin,
        };
        match best.get(&injector) {
            Some(cur) if !cur.beaten_by(&cand) => {}
            _ => {
                best.insert(injector, cand);
            }
        }
    }

    // Phase 1: customer routes climb to providers.
    let mut heap = PhaseHeap::new();
    let mut done: BTreeSet<Asn> = BTreeSet::new();
    for (asn, entry) in &best {
        heap.push(entry, *asn);
    }
    while let Some((len, nh, node)) = heap.pop() {
        let Some(entry) = best.get(&node).cloned() else {
            continue;
        };
        if entry.path.len() != len || entry.next_hop() != nh || !done.insert(node) {
            continue;
        }
        for &p in &graph.adjacency(node).unwrap().providers {
            if done.contains(&p) || entry.path.contains(&p) {
                continue;
            }
            if !accepts(rov_ases, roas, p, prefix, entry.origin()) {
                continue;
            }
            let cand = RibEntry {
                path: prepend(p, &entry.path),
                learned: Learned::Customer,
            };
            match best.get(&p) {
                Some(cur) if !cur.beaten_by(&cand) => {}
                _ => {
                    heap.push(&cand, p);
                    best.insert(p, cand);
                }
            }
        }
    }

    // Phase 2: one lateral peer hop from customer/origin routes.
    let upstream: Vec<(Asn, RibEntry)> = best
        .iter()
        .map(|(a, e)| (*a, e.clone()))
        .collect();
    for (node, entry) in &upstream {
        debug_assert!(entry.learned.exports_to_non_customers());
        for &q in &graph.adjacency(*node).unwrap().peers {
            if entry.path.contains(&q) || !accepts(rov_ases, roas, q, prefix, entry.origin()) {
                continue;
            }
            let cand = RibEntry {
                path: prepend(q, &entry.path),
                learned: Learned::Peer,
            };
            match best.get(&q) {
                Some(cur) if !cur.beaten_by(&cand) => {}
                _ => {
                    best.insert(q, cand);
                }
            }
        }
    }

    // Phase 3: everything descends to customers.
    let mut heap = PhaseHeap::new();
    let mut done: BTreeSet<Asn> = BTreeSet::new();
    for (asn, entry) in &best {
        heap.push(entry, *asn);
    }
    while let Some((len, nh, node)) = heap.pop() {
        let Some(entry) = best.get(&node).cloned() else {
            continue;
        };
        if entry.path.len() != len || entry.next_hop() != nh || !done.insert(node) {
            continue;
        }
        for &c in &graph.adjacency(node).unwrap().customers {
            if done.contains(&c) || entry.path.contains(&c) {
                continue;
            }
            if !accepts(rov_ases, roas, c, prefix, entry.origin()) {
                continue;
            }
            let cand = RibEntry {
                path: prepend(c, &entry.path),
                learned: Learned::Provider,
            };
            match best.get(&c) {
                Some(cur) if !cur.beaten_by(&cand) => {}
                _ => {
                    heap.push(&cand, c);
                    best.insert(c, cand);
                }
            }
        }
    }

    best
}

/// Run a Type-0 or Type-1 hijack of `prefix` against the baseline where the
/// victim legitimately originates it.
pub fn simulate_hijack(
    graph: &AsGraph,
    roas: &RoaTable,
    rov_ases: &BTreeSet<Asn>,
    victim: Asn,
    attacker: Asn,
    mode: HijackMode,
    prefix: Prefix,
) -> Result<HijackOutcome, RoutingError> {
    if victim == attacker {
        return Err(RoutingError::InvalidScenario(
            "attacker equals victim".into(),
        ));
    }
    let legit = Announcement {
        prefix,
        as_path: vec![victim],
        sender: victim,
    };
    let attack_path = match mode {
        HijackMode::Type0 => vec![attacker],
        HijackMode::Type1 => vec![attacker, victim],
    };
    let attack = Announcement {
        prefix,
        as_path: attack_path.clone(),
        sender: attacker,
    };
    let rib = propagate(graph, &[legit, attack], roas, rov_ases)?;
    let (share, paths) = attacker_share(graph, &rib, prefix, &attack_path, attacker, victim);
    Ok(HijackOutcome {
        attacker_share: share,
        monitor_paths: paths,
        rib,
    })
}

/// Fraction of ASes other than attacker and victim whose longest-prefix-match
/// route for `contested` ends with the attack seed path.
pub fn attacker_share(
    graph: &AsGraph,
    rib: &RibSnapshot,
    contested: Prefix,
    attack_seed_path: &[Asn],
    attacker: Asn,
    victim: Asn,
) -> (f64, Vec<Vec<Asn>>) {
    let mut captured = 0usize;
    let mut total = 0usize;
    let mut paths = Vec::new();
    for node in graph.nodes() {
        if node == attacker || node == victim {
            continue;
        }
        total += 1;
        if let Some(entry) = rib.longest_match(node, contested) {
            if entry.path.ends_with(attack_seed_path) {
                captured += 1;
                paths.push(entry.path.clone());
            }
        }
    }
    let share = if total == 0 {
        0.0
    } else {
        captured as f64 / total as f64
    };
    (share, paths)
}

/// Craft a forged-origin poisoning announcement on a fresh sub-prefix of
/// `parent_prefix` (first available half). Returns the announcement and the
/// ROA delta: empty for the NotFound strategy, or one authorizing the forged
/// origin when `create_roa` is set.
pub fn craft_poison_announcement(
    attacker: Asn,
    forged_origin: Asn,
    parent_prefix: Prefix,
    create_roa: bool,
) -> Result<(Announcement, RoaTable), RoutingError> {
    if attacker == forged_origin {
        return Err(RoutingError::InvalidScenario(
            "forged origin equals attacker".into(),
        ));
    }
    let sub = parent_prefix
        .lower_half()
        .ok_or(RoutingError::NoSubPrefix(parent_prefix))?;
    let ann = Announcement {
        prefix: sub,
        as_path: vec![attacker, forged_origin],
        sender: attacker,
    };
    let mut delta = RoaTable::new();
    if create_roa {
        delta.authorize(sub, forged_origin);
    }
    Ok((ann, delta))
}

/// Emit one RouteEvent per (monitor, prefix) in the monitors' RIBs, ordered
/// by (monitor, prefix).
pub fn observe(rib: &RibSnapshot, monitors: &BTreeSet<Asn>, time: u64) -> Vec<RouteEvent> {
    let mut events = Vec::new();
    for ((asn, prefix), entry) in &rib.best {
        if !monitors.contains(asn) {
            continue;
        }
        events.push(RouteEvent {
            time,
            monitor: *asn,
            announcement: Announcement {
                prefix: *prefix,
                as_path: entry.path.clone(),
                sender: entry.next_hop(),
            },
        });
    }
    events
}

/// Serialize route events in the simplified dump format:
/// `time|monitor_asn|prefix|asn asn asn` with the path origin-last.
pub fn write_route_dump(events: &[RouteEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        let path: Vec<String> = ev
            .announcement
            .as_path
            .iter()
            .map(|a| a.to_string())
            .collect();
        out.push_str(&format!(
            "{}|{}|{}|{}\n",
            ev.time,
            ev.monitor,
            ev.announcement.prefix,
            path.join(" ")
        ));
    }
    out
}

pub fn parse_route_dump(text: &str) -> Result<Vec<RouteEvent>, RoutingError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('|').collect();
        if parts.len() != 4 {
            return Err(RoutingError::DumpParse {
                line: idx + 1,
                msg: "expected time|monitor|prefix|path".into(),
            });
        }
        let err = |msg: String| RoutingError::DumpParse { line: idx + 1, msg };
        let time: u64 = parts[0].parse().map_err(|_| err("bad time".into()))?;
        let monitor: Asn = parts[1].parse().map_err(|_| err("bad monitor".into()))?;
        let prefix: Prefix = parts[2].parse().map_err(|_| err("bad prefix".into()))?;
        let as_path: Vec<Asn> = parts[3]
            .split_whitespace()
            .map(|a| a.parse::<Asn>())
            .collect::<Result<_, _>>()
            .map_err(|_| err("bad path".into()))?;
        if as_path.is_empty() {
            return Err(err("empty path".into()));
        }
        let sender = if as_path.len() > 1 {
            as_path[1]
        } else {
            as_path[0]
        };
        events.push(RouteEvent {
            time,
            monitor,
            announcement: Announcement {
                prefix,
                as_path,
                sender,
            },
        });
    }
    Ok(events)
}
