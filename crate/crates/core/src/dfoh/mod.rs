//! DFOH-style forged-origin hijack detector: a 300-day link knowledge base,
//! four-category feature extraction for candidate links, a decision-forest
//! classifier, and median aggregation across the paths a new link appears in.

pub mod forest;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::routing::RouteEvent;
use crate::topology::{Asn, MetadataMap};

pub use forest::{AblationMask, Forest, ForestConfig};

/// Number of scalar feature slots; see [`FeatureVector::to_array`].
pub const N_FEATURES: usize = 15;

/// Unordered AS pair, stored (low, high).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link(pub Asn, pub Asn);

impl Link {
    pub fn new(a: Asn, b: Asn) -> Link {
        if a <= b {
            Link(a, b)
        } else {
            Link(b, a)
        }
    }

    pub fn contains(&self, a: Asn) -> bool {
        self.0 == a || self.1 == a
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub first_seen: u32,
    pub last_seen: u32,
    /// Observed with the low ASN closer to the monitor.
    pub seen_low_first: bool,
    /// Observed with the high ASN closer to the monitor.
    pub seen_high_first: bool,
}

impl LinkRecord {
    pub fn seen_both_directions(&self) -> bool {
        self.seen_low_first && self.seen_high_first
    }
}

/// Historical link set with eviction window and quarantine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    links: BTreeMap<Link, LinkRecord>,
    /// Quarantined links and their release day; excluded from the graph view
    /// until released.
    quarantine: BTreeMap<Link, u32>,
    pub window_days: u32,
    pub quarantine_days: u32,
    pub current_day: u32,
    /// Optional IRR-derived per-link bidirectionality signal.
    pub irr_links: BTreeSet<Link>,
    /// Adjacency over non-quarantined in-window links.
    #[serde(skip)]
    adjacency: BTreeMap<Asn, BTreeSet<Asn>>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new(300, 30)
    }
}

impl KnowledgeBase {
    pub fn new(window_days: u32, quarantine_days: u32) -> Self {
        KnowledgeBase {
            links: BTreeMap::new(),
            quarantine: BTreeMap::new(),
            window_days,
            quarantine_days,
            current_day: 0,
            irr_links: BTreeSet::new(),
            adjacency: BTreeMap::new(),
        }
    }

    pub fn record(&self, link: Link) -> Option<&LinkRecord> {
        self.links.get(&link)
    }

    /// A link counts as known iff it is in the window and not quarantined.
    pub fn knows(&self, link: Link) -> bool {
        self.links.contains_key(&link) && !self.quarantine.contains_key(&link)
    }

    pub fn is_quarantined(&self, link: Link) -> bool {
        self.quarantine.contains_key(&link)
    }

    pub fn active_links(&self) -> impl Iterator<Item = (Link, &LinkRecord)> + '_ {
        self.links
            .iter()
            .filter(|(l, _)| !self.quarantine.contains_key(l))
            .map(|(l, r)| (*l, r))
    }

    pub fn active_link_count(&self) -> usize {
        self.active_links().count()
    }

    pub fn adjacency(&self) -> &BTreeMap<Asn, BTreeSet<Asn>> {
        &self.adjacency
    }

    pub fn neighbors(&self, a: Asn) -> Option<&BTreeSet<Asn>> {
        self.adjacency.get(&a)
    }

    pub fn degree(&self, a: Asn) -> usize {
        self.adjacency.get(&a).map(|s| s.len()).unwrap_or(0)
    }

    fn adjacency_insert(&mut self, link: Link) {
        self.adjacency.entry(link.0).or_default().insert(link.1);
        self.adjacency.entry(link.1).or_default().insert(link.0);
    }

    fn adjacency_remove(&mut self, link: Link) {
        if let Some(s) = self.adjacency.get_mut(&link.0) {
            s.remove(&link.1);
            if s.is_empty() {
                self.adjacency.remove(&link.0);
            }
        }
        if let Some(s) = self.adjacency.get_mut(&link.1) {
            s.remove(&link.0);
            if s.is_empty() {
                self.adjacency.remove(&link.1);
            }
        }
    }

    /// Insert or refresh a link seen on `day` in the given direction
    /// (`first` is the endpoint closer to the monitor).
    pub fn insert_link(&mut self, first: Asn, second: Asn, day: u32) {
        let link = Link::new(first, second);
        let low_first = first <= second;
        let rec = self.links.entry(link).or_insert(LinkRecord {
            first_seen: day,
            last_seen: day,
            seen_low_first: false,
            seen_high_first: false,
        });
        rec.last_seen = rec.last_seen.max(day);
        if low_first {
            rec.seen_low_first = true;
        } else {
            rec.seen_high_first = true;
        }
        if !self.quarantine.contains_key(&link) {
            self.adjacency_insert(link);
        }
    }

    /// Forget a link entirely (used by planners exploring hypotheticals).
    pub fn remove_link(&mut self, link: Link) {
        self.links.remove(&link);
        self.quarantine.remove(&link);
        self.adjacency_remove(link);
    }

    /// Insert a link under quarantine; it joins the graph view once
    /// `quarantine_days` have elapsed.
    pub fn insert_quarantined(&mut self, first: Asn, second: Asn, day: u32) {
        let link = Link::new(first, second);
        self.insert_link(first, second, day);
        self.quarantine.insert(link, day + self.quarantine_days);
        self.adjacency_remove(link);
    }

    /// Advance the clock: release due quarantined links, evict links whose
    /// last sighting fell out of the window.
    pub fn advance_to(&mut self, day: u32) {
        assert!(day >= self.current_day, "time goes forward");
        self.current_day = day;
        let released: Vec<Link> = self
            .quarantine
            .iter()
            .filter(|(_, &release)| release <= day)
            .map(|(l, _)| *l)
            .collect();
        for link in released {
            self.quarantine.remove(&link);
            if self.links.contains_key(&link) {
                self.adjacency_insert(link);
            }
        }
        let horizon = day.saturating_sub(self.window_days);
        let evicted: Vec<Link> = self
            .links
            .iter()
            .filter(|(_, r)| r.last_seen < horizon)
            .map(|(l, _)| *l)
            .collect();
        for link in evicted {
            self.links.remove(&link);
            self.quarantine.remove(&link);
            self.adjacency_remove(link);
        }
    }

    /// Snapshot in the line format
    /// `asn,asn,first_seen,last_seen,dir_flags,quarantine_release`.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (link, rec) in &self.links {
            let flags = (rec.seen_low_first as u8) | ((rec.seen_high_first as u8) << 1);
            let release = self
                .quarantine
                .get(link)
                .map(|d| d.to_string())
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                link.0, link.1, rec.first_seen, rec.last_seen, flags, release
            ));
        }
        out
    }

    pub fn from_snapshot(
        text: &str,
        window_days: u32,
        quarantine_days: u32,
    ) -> Result<KnowledgeBase, DfohError> {
        let mut kb = KnowledgeBase::new(window_days, quarantine_days);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 6 {
                return Err(DfohError::Snapshot(format!(
                    "line {}: expected 6 fields",
                    idx + 1
                )));
            }
            let bad = |what: &str| DfohError::Snapshot(format!("line {}: bad {what}", idx + 1));
            let a: Asn = parts[0].parse().map_err(|_| bad("asn"))?;
            let b: Asn = parts[1].parse().map_err(|_| bad("asn"))?;
            let first: u32 = parts[2].parse().map_err(|_| bad("first_seen"))?;
            let last: u32 = parts[3].parse().map_err(|_| bad("last_seen"))?;
            let flags: u8 = parts[4].parse().map_err(|_| bad("dir_flags"))?;
            if last < first {
                return Err(bad("seen range"));
            }
            let link = Link::new(a, b);
            kb.links.insert(
                link,
                LinkRecord {
                    first_seen: first,
                    last_seen: last,
                    seen_low_first: flags & 1 != 0,
                    seen_high_first: flags & 2 != 0,
                },
            );
            if parts[5] != "-" {
                let release: u32 = parts[5].parse().map_err(|_| bad("quarantine_release"))?;
                kb.quarantine.insert(link, release);
            } else {
                kb.adjacency_insert(link);
            }
        }
        Ok(kb)
    }
}

/// Four-category feature vector for one candidate link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    // topological
    pub deg_u: f64,
    pub deg_v: f64,
    pub common_neighbors: f64,
    pub jaccard: f64,
    pub adamic_adar: f64,
    pub pref_attachment: f64,
    // peering
    pub shared_ixps: f64,
    pub shared_facilities: f64,
    pub same_country: f64,
    pub neighbor_country_overlap: f64,
    // aspath_pattern
    pub valley_free_flag: f64,
    pub max_degree_gap: f64,
    pub cone_ratio: f64,
    // bidirectionality
    pub seen_both_directions: f64,
    pub in_irr_stub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureCategory {
    Topological,
    Peering,
    AsPathPattern,
    Bidirectionality,
}

impl FeatureCategory {
    pub const ALL: [FeatureCategory; 4] = [
        FeatureCategory::Topological,
        FeatureCategory::Peering,
        FeatureCategory::AsPathPattern,
        FeatureCategory::Bidirectionality,
    ];

    pub fn of_feature(index: usize) -> FeatureCategory {
        match index {
            0..=5 => FeatureCategory::Topological,
            6..=9 => FeatureCategory::Peering,
            10..=12 => FeatureCategory::AsPathPattern,
            13..=14 => FeatureCategory::Bidirectionality,
            _ => panic!("feature index {index} out of range"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureCategory::Topological => "topological",
            FeatureCategory::Peering => "peering",
            FeatureCategory::AsPathPattern => "aspath_pattern",
            FeatureCategory::Bidirectionality => "bidirectionality",
        }
    }
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.deg_u,
            self.deg_v,
            self.common_neighbors,
            self.jaccard,
            self.adamic_adar,
            self.pref_attachment,
            self.shared_ixps,
            self.shared_facilities,
            self.same_country,
            self.neighbor_country_overlap,
            self.valley_free_flag,
            self.max_degree_gap,
            self.cone_ratio,
            self.seen_both_directions,
            self.in_irr_stub,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub suspicion: f64,
    pub flagged: bool,
    pub per_path: Vec<(Vec<Asn>, f64)>,
}

#[derive(Debug, thiserror::Error)]
pub enum DfohError {
    #[error("insufficient data for AS {0}: absent from knowledge base and metadata")]
    InsufficientData(Asn),
    #[error("training error: {0}")]
    Training(String),
    #[error("serialization error: {0}")]
    Serialization(String),
    #[error("knowledge base snapshot error: {0}")]
    Snapshot(String),
}

/// Consecutive path pairs absent from the knowledge base (quarantined links
/// count as absent), in order of first appearance.
pub fn detect_new_links(kb: &KnowledgeBase, event: &RouteEvent) -> Vec<Link> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for pair in event.announcement.as_path.windows(2) {
        let link = Link::new(pair[0], pair[1]);
        if !kb.knows(link) && seen.insert(link) {
            out.push(link);
        }
    }
    out
}

/// Compute the feature vector for a candidate link as if it were new: the
/// link itself is excluded from the knowledge-base graph first.
pub fn compute_features(
    kb: &KnowledgeBase,
    metadata: &MetadataMap,
    link: Link,
    observed_paths: &[Vec<Asn>],
) -> Result<FeatureVector, DfohError> {
    let (u, v) = (link.0, link.1);
    for endpoint in [u, v] {
        if kb.neighbors(endpoint).is_none() && !metadata.contains_key(&endpoint) {
            return Err(DfohError::InsufficientData(endpoint));
        }
    }

    // Neighborhoods with the candidate link removed.
    let nbrs = |x: Asn, other: Asn| -> BTreeSet<Asn> {
        let mut s = kb.neighbors(x).cloned().unwrap_or_default();
        s.remove(&other);
        s
    };
    let nu = nbrs(u, v);
    let nv = nbrs(v, u);
    let deg_no_link = |x: Asn| -> usize {
        let base = kb.degree(x);
        if kb.knows(link) && link.contains(x) {
            base - 1
        } else {
            base
        }
    };

    let common: BTreeSet<Asn> = nu.intersection(&nv).copied().collect();
    let union = nu.union(&nv).count();
    let jaccard = if union == 0 {
        0.0
    } else {
        common.len() as f64 / union as f64
    };
    let adamic_adar: f64 = common
        .iter()
        .map(|&w| {
            let d = deg_no_link(w).max(2) as f64;
            1.0 / d.ln()
        })
        .sum();
    let deg_u = deg_no_link(u) as f64;
    let deg_v = deg_no_link(v) as f64;

    // peering
    let empty = crate::topology::AsMetadata::default();
    let mu = metadata.get(&u).unwrap_or(&empty);
    let mv = metadata.get(&v).unwrap_or(&empty);
    let shared_ixps = mu.ixps.intersection(&mv.ixps).count() as f64;
    let shared_facilities = mu.facilities.intersection(&mv.facilities).count() as f64;
    let same_country = match (&mu.country, &mv.country) {
        (Some(a), Some(b)) if a == b => 1.0,
        _ => 0.0,
    };
    let countries = |s: &BTreeSet<Asn>| -> BTreeSet<String> {
        s.iter()
            .filter_map(|a| metadata.get(a).and_then(|m| m.country.clone()))
            .collect()
    };
    let cu = countries(&nu);
    let cv = countries(&nv);
    let cunion = cu.union(&cv).count();
    let neighbor_country_overlap = if cunion == 0 {
        0.0
    } else {
        cu.intersection(&cv).count() as f64 / cunion as f64
    };

    // aspath_pattern, over the knowledge-base graph degrees
    let max_deg = kb
        .adjacency()
        .keys()
        .map(|&a| deg_no_link(a))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let path_deg = |a: &Asn| deg_no_link(*a) as f64;
    let mut unimodal_count = 0usize;
    let mut max_gap = 0.0f64;
    for path in observed_paths {
        let degs: Vec<f64> = path.iter().map(path_deg).collect();
        if is_unimodal(&degs) {
            unimodal_count += 1;
        }
        for w in degs.windows(2) {
            max_gap = max_gap.max((w[0] - w[1]).abs() / max_deg);
        }
    }
    let valley_free_flag = if observed_paths.is_empty() {
        1.0
    } else {
        unimodal_count as f64 / observed_paths.len() as f64
    };
    let (ru, rv) = (
        two_hop_reach(kb, u, link) as f64,
        two_hop_reach(kb, v, link) as f64,
    );
    let cone_ratio = if ru.max(rv) == 0.0 {
        0.0
    } else {
        ru.min(rv) / ru.max(rv)
    };

    // bidirectionality
    let seen_both = match kb.record(link) {
        Some(rec) => rec.seen_both_directions(),
        None => {
            let mut low_first = false;
            let mut high_first = false;
            for path in observed_paths {
                for pair in path.windows(2) {
                    if Link::new(pair[0], pair[1]) == link {
                        if pair[0] == link.0 {
                            low_first = true;
                        } else {
                            high_first = true;
                        }
                    }
                }
            }
            low_first && high_first
        }
    };
    let in_irr = kb.irr_links.contains(&link);

    Ok(FeatureVector {
        deg_u,
        deg_v,
        common_neighbors: common.len() as f64,
        jaccard,
        adamic_adar,
        pref_attachment: deg_u * deg_v,
        shared_ixps,
        shared_facilities,
        same_country,
        neighbor_country_overlap,
        valley_free_flag,
        max_degree_gap: max_gap,
        cone_ratio,
        seen_both_directions: seen_both as u8 as f64,
        in_irr_stub: in_irr as u8 as f64,
    })
}

fn is_unimodal(values: &[f64]) -> bool {
    // non-decreasing prefix followed by a non-increasing suffix
    let mut i = 1;
    while i < values.len() && values[i] >= values[i - 1] {
        i += 1;
    }
    while i < values.len() && values[i] <= values[i - 1] {
        i += 1;
    }
    i == values.len()
}

/// Nodes within two hops of `x` in the kb graph, candidate link removed.
fn two_hop_reach(kb: &KnowledgeBase, x: Asn, excluded: Link) -> usize {
    let mut seen = BTreeSet::from([x]);
    let mut queue = VecDeque::from([(x, 0u8)]);
    while let Some((n, d)) = queue.pop_front() {
        if d == 2 {
            continue;
        }
        if let Some(nbrs) = kb.neighbors(n) {
            for &m in nbrs {
                if Link::new(n, m) == excluded {
                    continue;
                }
                if seen.insert(m) {
                    queue.push_back((m, d + 1));
                }
            }
        }
    }
    seen.len() - 1
}

/// Synthesize the observation context used for a training link: the highest
/// degree neighbor of `u` (excluding `v`) prepended to the link, mirroring a
/// monitor-side upstream segment.
fn training_path(kb: &KnowledgeBase, u: Asn, v: Asn) -> Vec<Asn> {
    let upstream = kb
        .neighbors(u)
        .map(|s| {
            s.iter()
                .filter(|&&n| n != v)
                .max_by_key(|&&n| (kb.degree(n), std::cmp::Reverse(n)))
                .copied()
        })
        .unwrap_or(None);
    match upstream {
        Some(w) => vec![w, u, v],
        None => vec![u, v],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_per_class: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { n_per_class: 500 }
    }
}

/// Cluster key used by the balanced sampler: degree quartile x country.
fn cluster_of(
    degree: usize,
    quartiles: &[usize; 3],
    metadata: &MetadataMap,
    a: Asn,
) -> (u8, String) {
    let q = if degree <= quartiles[0] {
        0
    } else if degree <= quartiles[1] {
        1
    } else if degree <= quartiles[2] {
        2
    } else {
        3
    };
    let country = metadata
        .get(&a)
        .and_then(|m| m.country.clone())
        .unwrap_or_else(|| "?".into());
    (q, country)
}

/// Train the link classifier. Positives are existing links featurized as-if-new;
/// negatives are synthetic forged links drawn cluster-balanced over
/// degree-quartile x country buckets.
pub fn train_classifier(
    kb: &KnowledgeBase,
    metadata: &MetadataMap,
    sampling: &SamplingConfig,
    config: ForestConfig,
    seed: u64,
) -> Result<Forest, DfohError> {
    let links: Vec<Link> = kb.active_links().map(|(l, _)| l).collect();
    if links.len() < 2 * sampling.n_per_class {
        return Err(DfohError::Training(format!(
            "need at least {} active links, have {}",
            2 * sampling.n_per_class,
            links.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5f0_de7ec);

    let nodes: Vec<Asn> = kb.adjacency().keys().copied().collect();
    let mut degrees: Vec<usize> = nodes.iter().map(|&a| kb.degree(a)).collect();
    degrees.sort_unstable();
    let quartiles = [
        degrees[degrees.len() / 4],
        degrees[degrees.len() / 2],
        degrees[3 * degrees.len() / 4],
    ];
    let cluster = |a: Asn| cluster_of(kb.degree(a), &quartiles, metadata, a);

    // Positives: round-robin over the cluster of the lower-degree endpoint.
    let mut pos_buckets: BTreeMap<(u8, String), Vec<Link>> = BTreeMap::new();
    for &l in &links {
        let key = if kb.degree(l.0) <= kb.degree(l.1) {
            cluster(l.0)
        } else {
            cluster(l.1)
        };
        pos_buckets.entry(key).or_default().push(l);
    }
    for bucket in pos_buckets.values_mut() {
        shuffle(bucket, &mut rng);
    }
    let positives = round_robin(&mut pos_buckets, sampling.n_per_class);

    // Negatives: forged (u, v) non-links with u drawn cluster-balanced and v
    // uniform, mimicking an arbitrary forged origin.
    let mut node_buckets: BTreeMap<(u8, String), Vec<Asn>> = BTreeMap::new();
    for &a in &nodes {
        node_buckets.entry(cluster(a)).or_default().push(a);
    }
    let bucket_keys: Vec<(u8, String)> = node_buckets.keys().cloned().collect();
    let mut negatives: Vec<Link> = Vec::with_capacity(sampling.n_per_class);
    let mut taken: BTreeSet<Link> = BTreeSet::new();
    let mut key_idx = 0usize;
    let mut attempts = 0usize;
    while negatives.len() < sampling.n_per_class {
        attempts += 1;
        if attempts > sampling.n_per_class * 200 {
            return Err(DfohError::Training(
                "could not sample enough forged links".into(),
            ));
        }
        let key = &bucket_keys[key_idx % bucket_keys.len()];
        key_idx += 1;
        let us = &node_buckets[key];
        let u = us[rng.gen_range(0..us.len())];
        let v = nodes[rng.gen_range(0..nodes.len())];
        if u == v {
            continue;
        }
        let link = Link::new(u, v);
        if kb.knows(link) || !taken.insert(link) {
            continue;
        }
        negatives.push(link);
    }

    let mut samples = Vec::with_capacity(positives.len() + negatives.len());
    let mut labels = Vec::with_capacity(samples.capacity());
    for &l in &positives {
        let path = training_path(kb, l.0, l.1);
        samples.push(compute_features(kb, metadata, l, &[path])?.to_array());
        labels.push(false);
    }
    for &l in &negatives {
        let path = training_path(kb, l.0, l.1);
        samples.push(compute_features(kb, metadata, l, &[path])?.to_array());
        labels.push(true);
    }
    Forest::train(&samples, &labels, config, seed)
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

fn round_robin(buckets: &mut BTreeMap<(u8, String), Vec<Link>>, want: usize) -> Vec<Link> {
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let mut progressed = false;
        for bucket in buckets.values_mut() {
            if let Some(l) = bucket.pop() {
                out.push(l);
                progressed = true;
                if out.len() == want {
                    break;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    out
}

/// Classify a candidate link: per-path tree vote fractions, aggregated by
/// median, flagged above 0.5.
pub fn classify_link(
    forest: &Forest,
    kb: &KnowledgeBase,
    metadata: &MetadataMap,
    link: Link,
    observed_paths: &[Vec<Asn>],
) -> Result<Verdict, DfohError> {
    let paths: Vec<Vec<Asn>> = if observed_paths.is_empty() {
        vec![training_path(kb, link.0, link.1)]
    } else {
        observed_paths.to_vec()
    };
    let mut per_path = Vec::with_capacity(paths.len());
    for path in paths {
        let features = compute_features(kb, metadata, link, std::slice::from_ref(&path))?;
        let suspicion = forest.suspicion(&features.to_array());
        per_path.push((path, suspicion));
    }
    let mut scores: Vec<f64> = per_path.iter().map(|(_, s)| *s).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let suspicion = median_sorted(&scores);
    Ok(Verdict {
        suspicion,
        flagged: suspicion > 0.5,
        per_path,
    })
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Fold a day's events into the knowledge base. `flagged` links are withheld;
/// `new_provider_links` (declared fresh provider connections) enter
/// quarantine. Finally the clock advances, evicting stale links.
pub fn update_knowledge_base(
    kb: &mut KnowledgeBase,
    events: &[RouteEvent],
    day: u32,
    flagged: &BTreeSet<Link>,
    new_provider_links: &BTreeSet<Link>,
) {
    for ev in events {
        for pair in ev.announcement.as_path.windows(2) {
            let link = Link::new(pair[0], pair[1]);
            if flagged.contains(&link) {
                continue;
            }
            if new_provider_links.contains(&link) && !kb.links.contains_key(&link) {
                kb.insert_quarantined(pair[0], pair[1], day);
            } else {
                kb.insert_link(pair[0], pair[1], day);
            }
        }
    }
    kb.advance_to(day);
}

/// The daily detect → classify → update cycle of the DFOH-style defender.
#[derive(Debug, Clone)]
pub struct DfohPipeline {
    pub forest: Forest,
    pub kb: KnowledgeBase,
    pub day: u32,
}

impl DfohPipeline {
    pub fn new(forest: Forest, kb: KnowledgeBase, day: u32) -> Self {
        DfohPipeline { forest, kb, day }
    }

    /// Process one batch of observed events as a detector day: flag new
    /// links, withhold flagged ones from the knowledge base, fold the rest
    /// in, and advance the clock.
    pub fn process_events(
        &mut self,
        events: &[RouteEvent],
        metadata: &MetadataMap,
        new_provider_links: &BTreeSet<Link>,
    ) -> Result<Vec<(Link, Verdict)>, DfohError> {
        // Collect every path each new link appears in across the batch.
        let mut paths_per_link: BTreeMap<Link, Vec<Vec<Asn>>> = BTreeMap::new();
        for ev in events {
            for link in detect_new_links(&self.kb, ev) {
                paths_per_link
                    .entry(link)
                    .or_default()
                    .push(ev.announcement.as_path.clone());
            }
        }
        let mut verdicts = Vec::new();
        let mut flagged = BTreeSet::new();
        for (link, paths) in &paths_per_link {
            let verdict = match classify_link(&self.forest, &self.kb, metadata, *link, paths) {
                Ok(v) => v,
                // unknown endpoint: maximal suspicion
                Err(DfohError::InsufficientData(_)) => Verdict {
                    suspicion: 1.0,
                    flagged: true,
                    per_path: paths.iter().map(|p| (p.clone(), 1.0)).collect(),
                },
                Err(e) => return Err(e),
            };
            if verdict.flagged {
                flagged.insert(*link);
            }
            verdicts.push((*link, verdict));
        }
        update_knowledge_base(&mut self.kb, events, self.day, &flagged, new_provider_links);
        self.day += 1;
        Ok(verdicts)
    }

    /// Verdict for one candidate link given the paths it was observed in,
    /// without mutating the knowledge base.
    pub fn judge(
        &self,
        metadata: &MetadataMap,
        link: Link,
        observed_paths: &[Vec<Asn>],
    ) -> Result<Verdict, DfohError> {
        match classify_link(&self.forest, &self.kb, metadata, link, observed_paths) {
            Ok(v) => Ok(v),
            Err(DfohError::InsufficientData(_)) => Ok(Verdict {
                suspicion: 1.0,
                flagged: true,
                per_path: observed_paths.iter().map(|p| (p.clone(), 1.0)).collect(),
            }),
            Err(e) => Err(e),
        }
    }
}

/// Per-category importance scores: mean impurity decrease summed per
/// category, normalized to sum 1.
pub fn feature_importances(forest: &Forest) -> BTreeMap<FeatureCategory, f64> {
    let mut per_category: BTreeMap<FeatureCategory, f64> = FeatureCategory::ALL
        .iter()
        .map(|c| (*c, 0.0))
        .collect();
    for (i, &imp) in forest.importances.iter().enumerate() {
        *per_category
            .get_mut(&FeatureCategory::of_feature(i))
            .unwrap() += imp;
    }
    let total: f64 = per_category.values().sum();
    if total > 0.0 {
        for v in per_category.values_mut() {
            *v /= total;
        }
    }
    per_category
}
