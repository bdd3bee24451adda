//! BEAM-style detector: per-AS role embeddings with a hierarchy scalar,
//! DTW path-difference scoring of route changes, and an hourly dynamic
//! threshold over the recent score distribution.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::topology::{AsGraph, Asn, Prefix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dimension: usize,
    /// Weight of the hierarchy term in role differences.
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Margin of the provider-over-customer hierarchy hinge.
    pub margin: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dimension: 64,
            lambda: 1.0,
            epochs: 50,
            learning_rate: 0.05,
            margin: 0.1,
        }
    }
}

/// Per-AS role vectors plus a scalar encoding position in the hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dimension: usize,
    pub lambda: f64,
    vectors: Vec<Vec<f64>>,
    hierarchy: Vec<f64>,
    index: std::collections::BTreeMap<Asn, usize>,
}

impl EmbeddingTable {
    pub fn contains(&self, a: Asn) -> bool {
        self.index.contains_key(&a)
    }

    pub fn ases(&self) -> impl Iterator<Item = Asn> + '_ {
        self.index.keys().copied()
    }

    pub fn vector(&self, a: Asn) -> Option<&[f64]> {
        self.index.get(&a).map(|&i| self.vectors[i].as_slice())
    }

    pub fn hierarchy(&self, a: Asn) -> Option<f64> {
        self.index.get(&a).map(|&i| self.hierarchy[i])
    }

    /// Scale all vectors and hierarchy scalars by `c`; path differences scale
    /// by exactly the same factor.
    pub fn scaled(&self, c: f64) -> EmbeddingTable {
        let mut out = self.clone();
        for v in out.vectors.iter_mut() {
            for x in v.iter_mut() {
                *x *= c;
            }
        }
        for h in out.hierarchy.iter_mut() {
            *h *= c;
        }
        out
    }

    /// `d lambda` header then `asn v1 ... vd h` per AS.
    pub fn serialize_text(&self) -> String {
        let mut out = format!("{} {}\n", self.dimension, self.lambda);
        for (asn, &i) in &self.index {
            let vals: Vec<String> = self.vectors[i].iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&format!(
                "{} {} {:.12e}\n",
                asn,
                vals.join(" "),
                self.hierarchy[i]
            ));
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<EmbeddingTable, BeamError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(BeamError::Parse("empty table".into()))?;
        let mut hp = header.split_whitespace();
        let dimension: usize = hp
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(BeamError::Parse("bad dimension".into()))?;
        let lambda: f64 = hp
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(BeamError::Parse("bad lambda".into()))?;
        let mut table = EmbeddingTable {
            dimension,
            lambda,
            vectors: Vec::new(),
            hierarchy: Vec::new(),
            index: Default::default(),
        };
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dimension + 2 {
                return Err(BeamError::Parse(format!(
                    "expected {} fields, got {}",
                    dimension + 2,
                    fields.len()
                )));
            }
            let asn: Asn = fields[0]
                .parse()
                .map_err(|_| BeamError::Parse("bad asn".into()))?;
            let mut vec = Vec::with_capacity(dimension);
            for f in &fields[1..=dimension] {
                vec.push(f.parse().map_err(|_| BeamError::Parse("bad value".into()))?);
            }
            let h: f64 = fields[dimension + 1]
                .parse()
                .map_err(|_| BeamError::Parse("bad hierarchy".into()))?;
            table.index.insert(asn, table.vectors.len());
            table.vectors.push(vec);
            table.hierarchy.push(h);
        }
        Ok(table)
    }
}

/// A route replacement event at a monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteChange {
    pub prefix: Prefix,
    pub old_path: Vec<Asn>,
    pub new_path: Vec<Asn>,
    pub time: u64,
}

impl RouteChange {
    pub fn validate(&self) -> Result<(), BeamError> {
        for path in [&self.old_path, &self.new_path] {
            if path.is_empty() {
                return Err(BeamError::InvalidChange("empty path".into()));
            }
            let unique: BTreeSet<Asn> = path.iter().copied().collect();
            if unique.len() != path.len() {
                return Err(BeamError::InvalidChange("path loop".into()));
            }
        }
        Ok(())
    }
}

/// Rolling score window and the dynamic threshold derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub window_seconds: u64,
    /// (time, score) pairs in the current window.
    pub scores: Vec<(u64, f64)>,
    pub theta: Option<f64>,
    /// Std multiplier in theta = mean + k*std.
    pub k: f64,
    /// Whether flagged scores feed the next window. Default false.
    pub include_flagged: bool,
    /// End of the window currently being accumulated.
    pub boundary: u64,
}

impl ThresholdState {
    pub fn new(window_seconds: u64, k: f64, include_flagged: bool, start: u64) -> Self {
        ThresholdState {
            window_seconds,
            scores: Vec::new(),
            theta: None,
            k,
            include_flagged,
            boundary: start + window_seconds,
        }
    }
}

impl Default for ThresholdState {
    fn default() -> Self {
        ThresholdState::new(3600, 3.0, false, 0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BeamError {
    #[error("embedding training error: {0}")]
    Training(String),
    #[error("AS {0} not in embedding table")]
    NotFound(Asn),
    #[error("invalid route change: {0}")]
    InvalidChange(String),
    #[error("embedding parse error: {0}")]
    Parse(String),
}

/// Train role embeddings by SGD: skip-gram-style proximity with negative
/// sampling plus a provider-over-customer hierarchy hinge. Deterministic
/// under a fixed seed.
pub fn train_embedding(
    graph: &AsGraph,
    config: &EmbeddingConfig,
    seed: u64,
) -> Result<EmbeddingTable, BeamError> {
    if graph.node_count() == 0 {
        return Err(BeamError::Training("empty graph".into()));
    }
    if config.dimension < 2 {
        return Err(BeamError::Training("dimension must be >= 2".into()));
    }
    let nodes: Vec<Asn> = graph.nodes().collect();
    let index: std::collections::BTreeMap<Asn, usize> =
        nodes.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let n = nodes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbea_0);
    let mut vectors: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..config.dimension)
                .map(|_| rng.gen_range(-0.5..0.5))
                .collect()
        })
        .collect();
    let mut hierarchy = vec![0.0f64; n];

    // Edge lists in deterministic order.
    let mut undirected: Vec<(usize, usize)> = Vec::new();
    let mut provider_customer: Vec<(usize, usize)> = Vec::new();
    for &a in &nodes {
        let adj = graph.adjacency(a).unwrap();
        for &c in &adj.customers {
            provider_customer.push((index[&a], index[&c]));
            undirected.push((index[&a], index[&c]));
        }
        for &p in &adj.peers {
            if a < p {
                undirected.push((index[&a], index[&p]));
            }
        }
    }

    let lr = config.learning_rate;
    let push_radius = 1.0;
    for _ in 0..config.epochs {
        for &(i, j) in &undirected {
            // attract connected pair
            for d in 0..config.dimension {
                let diff = vectors[i][d] - vectors[j][d];
                vectors[i][d] -= lr * diff;
                vectors[j][d] += lr * diff;
            }
            // repel a random non-adjacent node from i up to push_radius
            let w = rng.gen_range(0..n);
            if w != i && !graph.has_edge(nodes[i], nodes[w]) {
                let dist2: f64 = (0..config.dimension)
                    .map(|d| (vectors[i][d] - vectors[w][d]).powi(2))
                    .sum();
                let dist = dist2.sqrt();
                if dist < push_radius && dist > 1e-12 {
                    let scale = lr * (push_radius - dist) / dist;
                    for d in 0..config.dimension {
                        let diff = vectors[i][d] - vectors[w][d];
                        vectors[i][d] += scale * diff;
                        vectors[w][d] -= scale * diff;
                    }
                }
            }
        }
        // attract pairs that share a neighbor
        for (mid, &a) in nodes.iter().enumerate() {
            let nbrs: Vec<Asn> = graph.adjacency(a).unwrap().neighbors().collect();
            if nbrs.len() >= 2 {
                let x = rng.gen_range(0..nbrs.len());
                let mut y = rng.gen_range(0..nbrs.len() - 1);
                if y >= x {
                    y += 1;
                }
                let (i, j) = (index[&nbrs[x]], index[&nbrs[y]]);
                let _ = mid;
                for d in 0..config.dimension {
                    let diff = vectors[i][d] - vectors[j][d];
                    vectors[i][d] -= 0.5 * lr * diff;
                    vectors[j][d] += 0.5 * lr * diff;
                }
            }
        }
        // hierarchy hinge: provider at least margin above customer
        for &(p, c) in &provider_customer {
            if hierarchy[p] < hierarchy[c] + config.margin {
                hierarchy[p] += lr;
                hierarchy[c] -= lr;
            }
        }
    }

    for v in vectors.iter().flatten().chain(hierarchy.iter()) {
        if !v.is_finite() {
            return Err(BeamError::Training("diverged to non-finite values".into()));
        }
    }
    Ok(EmbeddingTable {
        dimension: config.dimension,
        lambda: config.lambda,
        vectors,
        hierarchy,
        index,
    })
}

/// ||vec(u) - vec(v)||_2 + lambda * |hier(u) - hier(v)|.
pub fn role_difference(emb: &EmbeddingTable, u: Asn, v: Asn) -> Result<f64, BeamError> {
    let iu = *emb.index.get(&u).ok_or(BeamError::NotFound(u))?;
    let iv = *emb.index.get(&v).ok_or(BeamError::NotFound(v))?;
    let l2: f64 = emb.vectors[iu]
        .iter()
        .zip(&emb.vectors[iv])
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(l2 + emb.lambda * (emb.hierarchy[iu] - emb.hierarchy[iv]).abs())
}

/// Boundary-anchored DTW over role differences, normalized by the longer
/// path length.
pub fn path_difference(emb: &EmbeddingTable, change: &RouteChange) -> Result<f64, BeamError> {
    change.validate()?;
    let a = &change.old_path;
    let b = &change.new_path;
    let (m, n) = (a.len(), b.len());
    let mut dp = vec![vec![f64::INFINITY; n]; m];
    for i in 0..m {
        for j in 0..n {
            let cost = role_difference(emb, a[i], b[j])?;
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(dp[i - 1][j - 1]);
                }
                if i > 0 {
                    best = best.min(dp[i - 1][j]);
                }
                if j > 0 {
                    best = best.min(dp[i][j - 1]);
                }
                best
            };
            dp[i][j] = cost + prev;
        }
    }
    Ok(dp[m - 1][n - 1] / m.max(n) as f64)
}

/// Recompute theta at any window boundaries passed by `now`:
/// theta = mean + k*std (population) over the closing window's scores, or
/// unchanged when the window is empty. Consumed scores are pruned.
pub fn update_threshold(state: &mut ThresholdState, now: u64) {
    while now >= state.boundary {
        let window_start = state.boundary.saturating_sub(state.window_seconds);
        let closing: Vec<f64> = state
            .scores
            .iter()
            .filter(|(t, _)| *t >= window_start && *t < state.boundary)
            .map(|(_, s)| *s)
            .collect();
        if !closing.is_empty() {
            let mean = closing.iter().sum::<f64>() / closing.len() as f64;
            let var = closing.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
                / closing.len() as f64;
            state.theta = Some(mean + state.k * var.sqrt());
        }
        let boundary = state.boundary;
        state.scores.retain(|(t, _)| *t >= boundary);
        state.boundary += state.window_seconds;
    }
}

/// Score a route change against the current threshold. No flagging happens
/// before the warm-up window has produced a theta. Flagged scores join the
/// window only when `include_flagged` is set.
pub fn detect_change(
    emb: &EmbeddingTable,
    state: &mut ThresholdState,
    change: &RouteChange,
) -> Result<(f64, bool), BeamError> {
    update_threshold(state, change.time);
    let score = path_difference(emb, change)?;
    let flagged = match state.theta {
        Some(theta) => score > theta,
        None => false,
    };
    if !flagged || state.include_flagged {
        state.scores.push((change.time, score));
    }
    Ok((score, flagged))
}

/// Score log line in the `time,prefix,score,theta,flagged` CSV format.
pub fn score_log_line(change: &RouteChange, score: f64, theta: Option<f64>, flagged: bool) -> String {
    format!(
        "{},{},{:.9},{},{}\n",
        change.time,
        change.prefix,
        score,
        theta.map(|t| format!("{t:.9}")).unwrap_or_else(|| "-".into()),
        flagged
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{asn, parse_relationships, SynthParams};

    fn hand_table(entries: &[(u32, Vec<f64>, f64)], lambda: f64) -> EmbeddingTable {
        let mut index = std::collections::BTreeMap::new();
        let mut vectors = Vec::new();
        let mut hierarchy = Vec::new();
        for (a, v, h) in entries {
            index.insert(asn(*a), vectors.len());
            vectors.push(v.clone());
            hierarchy.push(*h);
        }
        EmbeddingTable {
            dimension: entries[0].1.len(),
            lambda,
            vectors,
            hierarchy,
            index,
        }
    }

    #[test]
    fn two_node_hierarchy_order() {
        let g = parse_relationships("1|2|-1").unwrap();
        let emb = train_embedding(&g, &EmbeddingConfig::default(), 3).unwrap();
        assert!(emb.hierarchy(asn(1)).unwrap() > emb.hierarchy(asn(2)).unwrap());
    }

    #[test]
    fn hierarchy_mostly_satisfied_on_synthetic() {
        let g =
            crate::topology::generate_synthetic_topology(&SynthParams::desk(3, 10, 50), 9).unwrap();
        let config = EmbeddingConfig {
            dimension: 16,
            ..Default::default()
        };
        let emb = train_embedding(&g, &config, 4).unwrap();
        let mut total = 0;
        let mut satisfied = 0;
        for p in g.nodes() {
            for &c in &g.adjacency(p).unwrap().customers {
                total += 1;
                if emb.hierarchy(p).unwrap() > emb.hierarchy(c).unwrap() {
                    satisfied += 1;
                }
            }
        }
        assert!(
            satisfied as f64 >= 0.9 * total as f64,
            "{satisfied}/{total}"
        );
    }

    #[test]
    fn training_deterministic() {
        let g =
            crate::topology::generate_synthetic_topology(&SynthParams::desk(2, 5, 20), 1).unwrap();
        let config = EmbeddingConfig {
            dimension: 8,
            epochs: 10,
            ..Default::default()
        };
        let a = train_embedding(&g, &config, 5).unwrap();
        let b = train_embedding(&g, &config, 5).unwrap();
        assert_eq!(a.serialize_text(), b.serialize_text());
    }

    #[test]
    fn empty_graph_rejected() {
        let g = crate::topology::AsGraph::new();
        assert!(train_embedding(&g, &EmbeddingConfig::default(), 0).is_err());
    }

    #[test]
    fn role_difference_basics() {
        let t = hand_table(
            &[(1, vec![0.0, 0.0], 0.0), (2, vec![3.0, 4.0], 2.0)],
            1.0,
        );
        assert_eq!(role_difference(&t, asn(1), asn(1)).unwrap(), 0.0);
        assert_eq!(role_difference(&t, asn(1), asn(2)).unwrap(), 7.0);
        assert_eq!(
            role_difference(&t, asn(1), asn(2)).unwrap(),
            role_difference(&t, asn(2), asn(1)).unwrap()
        );
        assert!(role_difference(&t, asn(1), asn(9)).is_err());
    }

    fn change(old: &[u32], new: &[u32], time: u64) -> RouteChange {
        RouteChange {
            prefix: "10.0.0.0/8".parse().unwrap(),
            old_path: old.iter().map(|&a| asn(a)).collect(),
            new_path: new.iter().map(|&a| asn(a)).collect(),
            time,
        }
    }

    #[test]
    fn identical_paths_score_zero() {
        let t = hand_table(
            &[(1, vec![1.0, 0.0], 0.0), (2, vec![0.0, 1.0], 1.0)],
            1.0,
        );
        assert_eq!(path_difference(&t, &change(&[1, 2], &[1, 2], 0)).unwrap(), 0.0);
    }

    #[test]
    fn dtw_symmetric_in_paths() {
        let t = hand_table(
            &[
                (1, vec![0.0, 0.0], 0.0),
                (2, vec![1.0, 0.0], 0.5),
                (3, vec![0.0, 2.0], 1.0),
                (4, vec![3.0, 1.0], 0.2),
            ],
            1.0,
        );
        let f = path_difference(&t, &change(&[1, 2, 3], &[4, 2], 0)).unwrap();
        let r = path_difference(&t, &change(&[4, 2], &[1, 2, 3], 0)).unwrap();
        assert!((f - r).abs() < 1e-12);
    }

    #[test]
    fn empty_path_rejected() {
        let t = hand_table(&[(1, vec![0.0, 0.0], 0.0)], 1.0);
        let bad = RouteChange {
            prefix: "10.0.0.0/8".parse().unwrap(),
            old_path: vec![],
            new_path: vec![asn(1)],
            time: 0,
        };
        assert!(path_difference(&t, &bad).is_err());
    }

    #[test]
    fn threshold_zero_variance() {
        let mut state = ThresholdState::new(3600, 3.0, false, 0);
        for i in 0..4 {
            state.scores.push((i * 100, 1.0));
        }
        update_threshold(&mut state, 3600);
        assert_eq!(state.theta, Some(1.0));
        assert!(state.scores.is_empty());
    }

    #[test]
    fn threshold_population_std() {
        let mut state = ThresholdState::new(3600, 1.0, false, 0);
        state.scores.push((0, 0.0));
        state.scores.push((1, 2.0));
        update_threshold(&mut state, 3600);
        assert_eq!(state.theta, Some(2.0));
    }

    #[test]
    fn empty_window_keeps_theta() {
        let mut state = ThresholdState::new(3600, 3.0, false, 0);
        state.scores.push((0, 5.0));
        update_threshold(&mut state, 3600);
        assert_eq!(state.theta, Some(5.0));
        update_threshold(&mut state, 7200);
        assert_eq!(state.theta, Some(5.0));
    }

    #[test]
    fn identical_stream_converges_and_unflags() {
        let t = hand_table(
            &[(1, vec![0.0, 0.0], 0.0), (2, vec![1.0, 1.0], 0.5)],
            1.0,
        );
        let mut state = ThresholdState::new(3600, 3.0, false, 0);
        let mut any_flagged = false;
        for i in 0..200u64 {
            let c = change(&[1, 2], &[2, 1], i * 60);
            let (_, flagged) = detect_change(&t, &mut state, &c).unwrap();
            if i >= 60 {
                // theta established from a full window of identical scores
                any_flagged |= flagged;
            }
        }
        assert!(!any_flagged);
        let c = change(&[1, 2], &[2, 1], 100_000);
        let score = path_difference(&t, &c).unwrap();
        update_threshold(&mut state, 100_000);
        assert!((state.theta.unwrap() - score).abs() < 1e-12);
    }

    #[test]
    fn scaling_property() {
        let t = hand_table(
            &[
                (1, vec![0.2, 0.4], 0.1),
                (2, vec![1.0, 0.0], 0.7),
                (3, vec![0.3, 2.0], 0.9),
            ],
            1.0,
        );
        let c = change(&[1, 2, 3], &[3, 1], 0);
        let base = path_difference(&t, &c).unwrap();
        let scaled = path_difference(&t.scaled(2.5), &c).unwrap();
        assert!((scaled - 2.5 * base).abs() < 1e-9);
    }

    #[test]
    fn embedding_text_round_trip() {
        let g = parse_relationships("1|2|-1\n2|3|0").unwrap();
        let config = EmbeddingConfig {
            dimension: 4,
            epochs: 5,
            ..Default::default()
        };
        let emb = train_embedding(&g, &config, 2).unwrap();
        let text = emb.serialize_text();
        let back = EmbeddingTable::parse_text(&text).unwrap();
        for a in emb.ases() {
            let d = role_difference(&emb, a, asn(1)).unwrap();
            let d2 = role_difference(&back, a, asn(1)).unwrap();
            assert!((d - d2).abs() < 1e-9);
        }
        assert!(EmbeddingTable::parse_text("").is_err());
    }
}
