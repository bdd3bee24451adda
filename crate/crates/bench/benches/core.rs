//! Benchmarks for the hot paths of the simulation: route propagation,
//! link classification, DTW path scoring, and threshold maintenance.

use std::collections::BTreeSet;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fohsim::beam::{path_difference, train_embedding, update_threshold, EmbeddingConfig, RouteChange, ThresholdState};
use fohsim::dfoh::{classify_link, train_classifier, Link};
use fohsim::harness::{bootstrap_kb, build_world, stage_seed, DetectorConfig, ExperimentConfig, Selection, TopologySource};
use fohsim::routing::{propagate, Announcement, RoaTable};
use fohsim::topology::{generate_synthetic, Asn, Prefix, SynthParams};

fn small_world() -> (ExperimentConfig, fohsim::harness::World) {
    let config = ExperimentConfig {
        topology: TopologySource::Synthetic(SynthParams::desk(4, 40, 456)),
        seed: 3,
        monitors: 10,
        detector: DetectorConfig::default(),
        dfoh: None,
        beam: None,
        monitor_sweep: None,
        out_dir: None,
    };
    let world = build_world(&config).expect("world");
    (config, world)
}

fn bench_propagation(c: &mut Criterion) {
    let (_, world) = small_world();
    let origin = *world.stubs.first().expect("stub");
    let prefix = world.prefixes[&origin];
    let ann = Announcement {
        prefix,
        as_path: vec![origin],
        sender: origin,
    };
    let roas = RoaTable::new();
    let rov = BTreeSet::new();
    c.bench_function("propagate_500as_single_prefix", |b| {
        b.iter(|| propagate(black_box(&world.graph), &[ann.clone()], &roas, &rov).unwrap())
    });
}

fn bench_classification(c: &mut Criterion) {
    let (config, world) = small_world();
    let kb = bootstrap_kb(&world, &config.detector, stage_seed(config.seed, "kb"));
    let mut forest_cfg = config.detector.forest.clone();
    forest_cfg.n_trees = 20;
    let mut sampling = config.detector.sampling;
    sampling.n_per_class = 200;
    let forest = train_classifier(&kb, &world.metadata, &sampling, forest_cfg, 3).unwrap();

    let nodes: Vec<Asn> = world.graph.nodes().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let candidates: Vec<Link> = (0..64)
        .map(|_| loop {
            let a = nodes[rng.gen_range(0..nodes.len())];
            let b = nodes[rng.gen_range(0..nodes.len())];
            if a != b && !kb.knows(Link::new(a, b)) {
                break Link::new(a, b);
            }
        })
        .collect();
    let mut i = 0;
    c.bench_function("classify_candidate_link", |b| {
        b.iter(|| {
            i = (i + 1) % candidates.len();
            classify_link(&forest, &kb, &world.metadata, black_box(candidates[i]), &[]).unwrap()
        })
    });
}

fn bench_path_difference(c: &mut Criterion) {
    let params = SynthParams::desk(3, 20, 137);
    let (graph, _) = generate_synthetic(&params, 5).unwrap();
    let emb_cfg = EmbeddingConfig {
        dimension: 16,
        epochs: 15,
        ..EmbeddingConfig::default()
    };
    let emb = train_embedding(&graph, &emb_cfg, 5).unwrap();
    let nodes: Vec<Asn> = graph.nodes().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut draw = |len: usize| -> Vec<Asn> {
        let mut path = Vec::new();
        while path.len() < len {
            let a = nodes[rng.gen_range(0..nodes.len())];
            if !path.contains(&a) {
                path.push(a);
            }
        }
        path
    };
    let change = RouteChange {
        prefix: Prefix::new(10 << 24, 16).unwrap(),
        old_path: draw(5),
        new_path: draw(6),
        time: 0,
    };
    c.bench_function("dtw_path_difference_5x6", |b| {
        b.iter(|| path_difference(&emb, black_box(&change)).unwrap())
    });
}

fn bench_threshold_update(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scores: Vec<(u64, f64)> = (0..512)
        .map(|_| (rng.gen_range(0..3600u64), rng.gen_range(0.0..5.0)))
        .collect();
    c.bench_function("threshold_update_512_scores", |b| {
        b.iter_batched(
            || {
                let mut state = ThresholdState::new(3600, 3.0, false, 0);
                state.scores = scores.clone();
                state
            },
            |mut state| {
                update_threshold(&mut state, 3600);
                state.theta
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_campaign_pair(c: &mut Criterion) {
    // One full plan+execute cycle per iteration, via the public campaign
    // runner on a minimal single-pair corpus.
    let config = ExperimentConfig {
        topology: TopologySource::Synthetic(SynthParams::desk(3, 20, 137)),
        seed: 3,
        monitors: 8,
        detector: DetectorConfig {
            sampling: fohsim::dfoh::SamplingConfig { n_per_class: 60 },
            forest: fohsim::dfoh::ForestConfig {
                n_trees: 10,
                max_depth: 6,
                ..Default::default()
            },
            ..DetectorConfig::default()
        },
        dfoh: Some(fohsim::harness::DfohCampaignSpec {
            attackers: Selection::Sample(1),
            victims: Selection::Sample(1),
            budget: 3,
            allow_transit_augmentation: false,
            wait_days: 30,
            max_corpus_paths: 5,
            scan_limit: 150,
            poison_lifetime_days: None,
        }),
        beam: None,
        monitor_sweep: None,
        out_dir: None,
    };
    let mut group = c.benchmark_group("campaign");
    group.sample_size(10);
    group.bench_function("dfoh_single_pair_160as", |b| {
        b.iter(|| {
            let dir = tempfile::tempdir().unwrap();
            fohsim::harness::run_dfoh_campaign(black_box(&config), dir.path(), 1).unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_propagation,
    bench_classification,
    bench_path_difference,
    bench_threshold_update,
    bench_campaign_pair
);
criterion_main!(benches);
