//! Private-monitor countermeasure: monitor selection strategies and the
//! detection-rate measurement over recorded poison links.
//!
//! A poison link counts as detected iff one of its endpoints is a private
//! monitor; there is no transitive visibility.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dfoh::Link;
use crate::topology::{AsGraph, Asn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionStrategy {
    Random,
    BestCase,
}

impl SelectionStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionStrategy::Random => "random",
            SelectionStrategy::BestCase => "best_case",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorDeployment {
    pub monitors: BTreeSet<Asn>,
    pub strategy: SelectionStrategy,
    pub m: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CountermeasureError {
    #[error("detection rate undefined for an empty link list")]
    EmptyLinks,
    #[error("no attack traces available")]
    EmptyTraces,
}

/// Uniform sample of `m` monitor ASes without replacement; deterministic
/// under `seed`. The sample is nested: the same seed with a larger `m`
/// extends the smaller deployment.
pub fn select_monitors_random(graph: &AsGraph, m: usize, seed: u64) -> MonitorDeployment {
    let mut nodes: Vec<Asn> = graph.nodes().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0_a0_0e17);
    // Fisher-Yates; taking a prefix of the permutation keeps samples nested in m.
    for i in (1..nodes.len()).rev() {
        let j = rng.gen_range(0..=i);
        nodes.swap(i, j);
    }
    let take = m.min(nodes.len());
    MonitorDeployment {
        monitors: nodes[..take].iter().copied().collect(),
        strategy: SelectionStrategy::Random,
        m: take,
    }
}

/// Greedy max-coverage: repeatedly pick the AS that is an endpoint of the
/// most currently-undetected poison links, ties broken by lowest ASN.
pub fn select_monitors_best_case(
    traces: &[Link],
    m: usize,
) -> Result<MonitorDeployment, CountermeasureError> {
    if traces.is_empty() {
        return Err(CountermeasureError::EmptyTraces);
    }
    let mut uncovered: Vec<Link> = traces.to_vec();
    let mut monitors = BTreeSet::new();
    while monitors.len() < m && !uncovered.is_empty() {
        let mut counts: std::collections::BTreeMap<Asn, usize> = Default::default();
        for l in &uncovered {
            *counts.entry(l.0).or_default() += 1;
            *counts.entry(l.1).or_default() += 1;
        }
        let (&best, _) = counts
            .iter()
            .max_by_key(|(asn, count)| (**count, std::cmp::Reverse(**asn)))
            .unwrap();
        monitors.insert(best);
        uncovered.retain(|l| !l.contains(best));
    }
    // Saturated coverage with budget to spare: pad with remaining endpoints.
    if monitors.len() < m {
        for l in traces {
            for a in [l.0, l.1] {
                if monitors.len() >= m {
                    break;
                }
                monitors.insert(a);
            }
        }
    }
    let m = monitors.len();
    Ok(MonitorDeployment {
        monitors,
        strategy: SelectionStrategy::BestCase,
        m,
    })
}

/// Fraction of poison links with at least one endpoint in the deployment.
pub fn detection_rate(
    traces: &[Link],
    deployment: &MonitorDeployment,
) -> Result<f64, CountermeasureError> {
    if traces.is_empty() {
        return Err(CountermeasureError::EmptyLinks);
    }
    let detected = traces
        .iter()
        .filter(|l| deployment.monitors.contains(&l.0) || deployment.monitors.contains(&l.1))
        .count();
    Ok(detected as f64 / traces.len() as f64)
}
