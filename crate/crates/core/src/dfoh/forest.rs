//! Bagged decision-forest classifier with Gini splits, trained on the
//! fixed 15-slot feature layout of [`super::FeatureVector`].
//!
//! Trees derive their RNG from `seed + tree_index`, so per-tree training is
//! order-independent and a parallel build yields the same forest as a
//! sequential one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureCategory, N_FEATURES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        // class counts: [legitimate, hijack]
        counts: [u32; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Probability of the hijack class at the reached leaf.
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => {
                    let total = counts[0] + counts[1];
                    return if total == 0 {
                        0.0
                    } else {
                        counts[1] as f64 / total as f64
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Fraction of the training set drawn (with replacement) per tree.
    pub bootstrap_fraction: f64,
    /// Feature categories excluded from training and inference.
    pub ablate: AblationMask,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 50,
            max_depth: 12,
            bootstrap_fraction: 1.0,
            ablate: AblationMask::default(),
        }
    }
}

/// Which feature categories are removed (the feature-ablation defense knob).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationMask {
    pub topological: bool,
    pub peering: bool,
    pub aspath_pattern: bool,
    pub bidirectionality: bool,
}

impl AblationMask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn only(category: FeatureCategory) -> Self {
        let mut m = Self::default();
        m.set(category, true);
        m
    }

    pub fn set(&mut self, category: FeatureCategory, on: bool) {
        match category {
            FeatureCategory::Topological => self.topological = on,
            FeatureCategory::Peering => self.peering = on,
            FeatureCategory::AsPathPattern => self.aspath_pattern = on,
            FeatureCategory::Bidirectionality => self.bidirectionality = on,
        }
    }

    pub fn ablated(&self, category: FeatureCategory) -> bool {
        match category {
            FeatureCategory::Topological => self.topological,
            FeatureCategory::Peering => self.peering,
            FeatureCategory::AsPathPattern => self.aspath_pattern,
            FeatureCategory::Bidirectionality => self.bidirectionality,
        }
    }

    /// Indices of features still in play.
    pub fn active_features(&self) -> Vec<usize> {
        (0..N_FEATURES)
            .filter(|&i| !self.ablated(FeatureCategory::of_feature(i)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub config: ForestConfig,
    pub training_seed: u64,
    /// Mean impurity-decrease importance per feature slot.
    pub importances: [f64; N_FEATURES],
}

impl Forest {
    /// Train by bagging. `labels[i]` is true for the hijack class.
    pub fn train(
        samples: &[[f64; N_FEATURES]],
        labels: &[bool],
        config: ForestConfig,
        seed: u64,
    ) -> Result<Forest, super::DfohError> {
        if samples.is_empty() || samples.len() != labels.len() {
            return Err(super::DfohError::Training(
                "empty or mismatched training set".into(),
            ));
        }
        let active = config.ablate.active_features();
        if active.is_empty() {
            return Err(super::DfohError::Training(
                "all feature categories ablated".into(),
            ));
        }
        let results: Vec<(Tree, [f64; N_FEATURES])> = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
                train_tree(samples, labels, &config, &active, &mut rng)
            })
            .collect();
        let mut trees = Vec::with_capacity(config.n_trees);
        let mut importances = [0.0; N_FEATURES];
        for (tree, imp) in results {
            trees.push(tree);
            for i in 0..N_FEATURES {
                importances[i] += imp[i];
            }
        }
        for v in importances.iter_mut() {
            *v /= config.n_trees as f64;
        }
        Ok(Forest {
            trees,
            config,
            training_seed: seed,
            importances,
        })
    }

    /// Fraction of trees whose leaf majority is the hijack class.
    pub fn suspicion(&self, x: &[f64; N_FEATURES]) -> f64 {
        let mut masked = *x;
        for i in 0..N_FEATURES {
            if self.config.ablate.ablated(FeatureCategory::of_feature(i)) {
                masked[i] = 0.0;
            }
        }
        let votes = self
            .trees
            .iter()
            .filter(|t| t.predict(&masked) > 0.5)
            .count();
        votes as f64 / self.trees.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Forest, super::DfohError> {
        serde_json::from_str(text).map_err(|e| super::DfohError::Serialization(e.to_string()))
    }
}

fn gini(counts: [u32; 2]) -> f64 {
    let total = (counts[0] + counts[1]) as f64;
    if total == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / total;
    let p1 = counts[1] as f64 / total;
    1.0 - p0 * p0 - p1 * p1
}

fn train_tree(
    samples: &[[f64; N_FEATURES]],
    labels: &[bool],
    config: &ForestConfig,
    active: &[usize],
    rng: &mut ChaCha8Rng,
) -> (Tree, [f64; N_FEATURES]) {
    let n = samples.len();
    let draw = ((n as f64 * config.bootstrap_fraction).round() as usize).max(1);
    let bag: Vec<usize> = (0..draw).map(|_| rng.gen_range(0..n)).collect();
    let mut nodes = Vec::new();
    let mut importances = [0.0; N_FEATURES];
    // Features examined per split: sqrt of the active feature count.
    let mtry = (active.len() as f64).sqrt().round().max(1.0) as usize;
    build_node(
        samples,
        labels,
        &bag,
        config.max_depth,
        active,
        mtry,
        rng,
        &mut nodes,
        &mut importances,
        draw as f64,
    );
    (Tree { nodes }, importances)
}

#[allow(clippy::too_many_arguments)]
fn build_node(
    samples: &[[f64; N_FEATURES]],
    labels: &[bool],
    indices: &[usize],
    depth_left: usize,
    active: &[usize],
    mtry: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
    importances: &mut [f64; N_FEATURES],
    root_n: f64,
) -> usize {
    let mut counts = [0u32; 2];
    for &i in indices {
        counts[labels[i] as usize] += 1;
    }
    let node_gini = gini(counts);
    if depth_left == 0 || counts[0] == 0 || counts[1] == 0 || indices.len() < 2 {
        nodes.push(Node::Leaf { counts });
        return nodes.len() - 1;
    }

    // Sample the feature subset without replacement.
    let mut pool: Vec<usize> = active.to_vec();
    let mut chosen = Vec::with_capacity(mtry);
    for _ in 0..mtry.min(pool.len()) {
        let k = rng.gen_range(0..pool.len());
        chosen.push(pool.swap_remove(k));
    }
    chosen.sort_unstable();

    let mut best: Option<(f64, usize, f64)> = None; // (weighted child gini, feature, threshold)
    for &f in &chosen {
        // Sorted sweep: evaluate every boundary between distinct values once.
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| samples[a][f].partial_cmp(&samples[b][f]).unwrap());
        let mut left = [0u32; 2];
        let mut right = counts;
        let total = indices.len() as f64;
        for k in 0..order.len() - 1 {
            let i = order[k];
            left[labels[i] as usize] += 1;
            right[labels[i] as usize] -= 1;
            let lo = samples[i][f];
            let hi = samples[order[k + 1]][f];
            if hi <= lo {
                continue;
            }
            let threshold = (lo + hi) / 2.0;
            let nl = (left[0] + left[1]) as f64;
            let nr = (right[0] + right[1]) as f64;
            let score = (nl * gini(left) + nr * gini(right)) / total;
            let better = match best {
                None => true,
                Some((s, bf, bt)) => {
                    score < s - 1e-12 || (score < s + 1e-12 && (f, threshold) < (bf, bt))
                }
            };
            if better {
                best = Some((score, f, threshold));
            }
        }
    }

    let Some((child_gini, feature, threshold)) = best else {
        nodes.push(Node::Leaf { counts });
        return nodes.len() - 1;
    };
    if node_gini - child_gini <= 1e-12 {
        nodes.push(Node::Leaf { counts });
        return nodes.len() - 1;
    }
    importances[feature] += (indices.len() as f64 / root_n) * (node_gini - child_gini);

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| samples[i][feature] <= threshold);

    let here = nodes.len();
    nodes.push(Node::Leaf { counts }); // placeholder, replaced below
    let left = build_node(
        samples,
        labels,
        &left_idx,
        depth_left - 1,
        active,
        mtry,
        rng,
        nodes,
        importances,
        root_n,
    );
    let right = build_node(
        samples,
        labels,
        &right_idx,
        depth_left - 1,
        active,
        mtry,
        rng,
        nodes,
        importances,
        root_n,
    );
    nodes[here] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    here
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_set() -> (Vec<[f64; N_FEATURES]>, Vec<bool>) {
        // Separable on feature 0.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            let mut x = [0.0; N_FEATURES];
            let hij = i % 2 == 0;
            x[0] = if hij { 1.0 + (i % 5) as f64 } else { -1.0 - (i % 5) as f64 };
            x[3] = (i % 7) as f64;
            xs.push(x);
            ys.push(hij);
        }
        (xs, ys)
    }

    #[test]
    fn learns_separable_data() {
        let (xs, ys) = toy_set();
        let forest = Forest::train(&xs, &ys, ForestConfig::default(), 1).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let s = forest.suspicion(x);
            assert_eq!(s > 0.5, *y, "x0={} s={}", x[0], s);
        }
    }

    #[test]
    fn degenerate_depth_zero_single_leaf() {
        let (xs, ys) = toy_set();
        let config = ForestConfig {
            n_trees: 1,
            max_depth: 0,
            ..Default::default()
        };
        let forest = Forest::train(&xs, &ys, config, 1).unwrap();
        assert_eq!(forest.trees[0].nodes.len(), 1);
        assert!(matches!(forest.trees[0].nodes[0], Node::Leaf { .. }));
    }

    #[test]
    fn deterministic_under_seed() {
        let (xs, ys) = toy_set();
        let a = Forest::train(&xs, &ys, ForestConfig::default(), 7).unwrap();
        let b = Forest::train(&xs, &ys, ForestConfig::default(), 7).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = Forest::train(&xs, &ys, ForestConfig::default(), 8).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn json_round_trip() {
        let (xs, ys) = toy_set();
        let forest = Forest::train(&xs, &ys, ForestConfig::default(), 3).unwrap();
        let back = Forest::from_json(&forest.to_json()).unwrap();
        assert_eq!(forest, back);
    }

    #[test]
    fn ablated_features_never_split() {
        let (xs, ys) = toy_set();
        let config = ForestConfig {
            ablate: AblationMask::only(FeatureCategory::Topological),
            ..Default::default()
        };
        let forest = Forest::train(&xs, &ys, config, 1).unwrap();
        for i in 0..6 {
            assert_eq!(forest.importances[i], 0.0);
        }
    }
}
