use ncgn_core::data::{make_shape_dataset, Dataset};
use ncgn_core::dmp::{Method, MpKind, Task};
use ncgn_core::engine::{
    attention_study, evaluate_w2, evaluate_w2_with, gw_study, sample, train, CondTask, ConditionMask, GwStudyConfig, TrainConfig,
    ATTENTION_BUCKETS,
};
use ncgn_core::graph::GeometricGraph;
use ncgn_core::rng::{normal_matrix, seeded};
use ndarray::{Array2, Axis};
use rand::rngs::StdRng;
use rand::seq::index::sample as pick;
use rand::{Rng, SeedableRng};

/// Small (time, space) grids with smooth three-channel features.
fn grid_graphs(count: usize, seed: u64) -> Vec<GeometricGraph> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let (nt, ns) = (3, 4);
            let phase: f64 = rng.gen_range(0.0..1.0);
            let pos = Array2::from_shape_fn((nt * ns, 2), |(i, j)| {
                if j == 0 {
                    (i / ns) as f64 / 2.0 - 0.5
                } else {
                    (i % ns) as f64 / 3.0 - 0.5
                }
            });
            let feat = Array2::from_shape_fn((nt * ns, 3), |(i, g)| {
                0.3 * ((i % ns) as f64 + phase + g as f64).sin() + 0.02 * rng.gen::<f64>()
            });
            GeometricGraph::new(feat, pos, vec![]).unwrap()
        })
        .collect()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch: 8, lr: 3e-3, warmup_epochs: 0, hdim: 16, layers: 2, seed: 5, ..TrainConfig::transcriptomics() }
}

/// A shared pattern that the network can read off the positions, plus small
/// per-graph offsets.
#[test]
fn overfits_a_small_set() {
    let data: Vec<GeometricGraph> = (0..8)
        .map(|k| {
            let pos =
                Array2::from_shape_fn(
                    (12, 2),
                    |(i, j)| if j == 0 { (i / 4) as f64 / 2.0 - 0.5 } else { (i % 4) as f64 / 3.0 - 0.5 },
                );
            let feat = Array2::from_shape_fn((12, 3), |(i, g)| {
                2.0 * ((i % 4) as f64 + g as f64).sin() + 0.05 * (k as f64 + i as f64).cos()
            });
            GeometricGraph::new(feat, pos, vec![]).unwrap()
        })
        .collect();
    let out = train(&TrainConfig { hdim: 32, layers: 3, ..quick(200) }, &data).unwrap();
    let first = out.losses[0].loss;
    let tail: f64 = out.losses[190..].iter().map(|r| r.loss).sum::<f64>() / 10.0;
    assert!(tail < 0.1 * first, "initial {first}, final {tail}");
}

#[test]
fn training_is_deterministic() {
    let data = grid_graphs(10, 2);
    let cfg = TrainConfig { batch: 4, ..quick(3) };
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.ema.model, b.ema.model);
}

#[test]
fn ema_tracks_each_step() {
    let data = grid_graphs(4, 3);
    let cfg = TrainConfig { batch: 4, ..quick(1) };
    let init = ncgn_core::dmp::DmpModel::new(cfg.network(&data[0]), cfg.seed).unwrap();
    let out = train(&cfg, &data).unwrap();
    let (cur, ema) = (out.model.model.unwrap(), out.ema.model.unwrap());
    for (((_, name, e), (_, _, c)), (_, _, p)) in ema.params.iter().zip(cur.params.iter()).zip(init.params.iter()) {
        let want = p.values() * 0.95 + c.values() * 0.05;
        assert!((e.values() - &want).iter().all(|v| v.abs() < 1e-12), "{name}");
    }
}

#[test]
fn warmup_is_linear() {
    let cfg = TrainConfig { lr: 1e-3, warmup_epochs: 10, ..TrainConfig::transcriptomics() };
    assert!((cfg.lr_at(0, 4) - 1e-3 / 40.0).abs() < 1e-18);
    assert_eq!(cfg.lr_at(39, 4), 1e-3);
    assert_eq!(cfg.lr_at(500, 4), 1e-3);
}

#[test]
fn masks_clamp_known_values() {
    let data = grid_graphs(6, 4);
    let out = train(&quick(2), &data).unwrap();
    let full: Vec<ConditionMask> = data.iter().map(|g| ConditionMask::rows(&g.features, |_| true)).collect();
    let gen = sample(&out.ema, &data, Some(&full), 10, 4, 3).unwrap();
    for (g, r) in gen.iter().zip(&data) {
        assert_eq!(g.features, r.features);
    }
    let masks: Vec<ConditionMask> = data.iter().map(|g| CondTask::Trajectory.mask(g, -0.5).unwrap().unwrap()).collect();
    assert!(masks.iter().all(|m| m.count() == 4 * 3));
    let gen = sample(&out.ema, &data, Some(&masks), 10, 4, 3).unwrap();
    for ((g, r), m) in gen.iter().zip(&data).zip(&masks) {
        for ((idx, &k), v) in m.known.indexed_iter().zip(g.features.iter()) {
            if k {
                assert_eq!(v.to_bits(), r.features[idx].to_bits());
            }
        }
        assert_ne!(g.features, r.features);
    }
}

#[test]
fn unconditional_sampling_contract() {
    let data = grid_graphs(5, 6);
    let out = train(&quick(1), &data).unwrap();
    let gen = sample(&out.ema, &data, None, 5, 2, 1).unwrap();
    assert_eq!(gen.len(), 5);
    for (g, r) in gen.iter().zip(&data) {
        assert_eq!(g.num_nodes(), r.num_nodes());
        assert_eq!(g.positions, r.positions);
    }
    assert_eq!(gen, sample(&out.ema, &data, None, 5, 2, 1).unwrap());
    let bad = vec![ConditionMask::rows(&Array2::zeros((3, 3)), |_| true); 5];
    assert!(sample(&out.ema, &data, Some(&bad), 5, 2, 1).is_err());
}

#[test]
fn random_baseline_is_standard_normal() {
    let data = grid_graphs(40, 7);
    let cfg = TrainConfig { method: Method::Baseline(ncgn_core::dmp::BaselineKind::RandomPred), ..quick(1) };
    let out = train(&cfg, &data).unwrap();
    assert!(out.losses.is_empty());
    let gen = sample(&out.ema, &data, None, 5, 8, 2).unwrap();
    let all: Vec<f64> = gen.iter().flat_map(|g| g.features.iter().copied().collect::<Vec<_>>()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
    assert!(mean.abs() < 0.1 && (var - 1.0).abs() < 0.15, "{mean} {var}");
    assert_eq!(gen, sample(&out.ema, &data, None, 5, 8, 2).unwrap());
}

/// Bertsekas forward auction with epsilon scaling; optimal within `n * eps`.
fn auction_cost(c: &Array2<f64>) -> f64 {
    let n = c.nrows();
    let scale = c.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-12);
    let mut price = vec![0.0; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut eps = scale / 4.0;
    let last = 1e-9 * scale / n as f64;
    loop {
        owner.fill(None);
        assigned.fill(None);
        let mut queue: Vec<usize> = (0..n).rev().collect();
        while let Some(i) = queue.pop() {
            let (mut best, mut second, mut bj) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
            for j in 0..n {
                let v = -c[[i, j]] - price[j];
                if v > best {
                    second = best;
                    best = v;
                    bj = j;
                } else if v > second {
                    second = v;
                }
            }
            let gap = if second.is_finite() { best - second } else { 0.0 };
            price[bj] += gap + eps;
            if let Some(k) = owner[bj] {
                assigned[k] = None;
                queue.push(k);
            }
            owner[bj] = Some(i);
            assigned[i] = Some(bj);
        }
        if eps <= last {
            break;
        }
        eps = (eps / 5.0).max(last);
    }
    (0..n).map(|i| c[[i, assigned[i].unwrap()]]).sum()
}

/// Independent pooled protocol: own pooling, own subsampling stream, auction solver.
fn oracle_w2(a: &[GeometricGraph], b: &[GeometricGraph], size: usize, reps: usize) -> f64 {
    let pool = |gs: &[GeometricGraph]| {
        let rows: Vec<Vec<f64>> = gs
            .iter()
            .flat_map(|g| {
                (0..g.num_nodes())
                    .map(|i| g.positions.row(i).iter().chain(g.features.row(i).iter()).copied().collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect();
        rows
    };
    let (pa, pb) = (pool(a), pool(b));
    let mut rng = StdRng::seed_from_u64(99);
    let mut total = 0.0;
    for _ in 0..reps {
        let ia = pick(&mut rng, pa.len(), size).into_vec();
        let ib = pick(&mut rng, pb.len(), size).into_vec();
        let c =
            Array2::from_shape_fn((size, size), |(i, j)| pa[ia[i]].iter().zip(&pb[ib[j]]).map(|(x, y)| (x - y) * (x - y)).sum());
        total += (auction_cost(&c) / size as f64).sqrt();
    }
    total / reps as f64
}

#[test]
fn w2_protocol_matches_independent_oracle() {
    let reference = grid_graphs(120, 8);
    let mut rng = seeded(4);
    let random: Vec<GeometricGraph> = reference
        .iter()
        .map(|g| GeometricGraph::new(normal_matrix(&mut rng, g.num_nodes(), 3), g.positions.clone(), vec![]).unwrap())
        .collect();
    let ours = evaluate_w2_with(&random, &reference, Task::Features, 300, 3, 1).unwrap().mean;
    let theirs = oracle_w2(&random, &reference, 300, 3);
    assert!((ours - theirs).abs() <= 0.2 * theirs, "{ours} vs {theirs}");

    assert_eq!(evaluate_w2(&reference, &reference, Task::Features, 0).unwrap().mean, 0.0);
    let (h1, h2) = reference.split_at(60);
    let floor = evaluate_w2_with(h1, h2, Task::Features, 300, 3, 0).unwrap().mean;
    assert!(floor > 0.0 && floor < ours, "{floor}");
}

#[test]
fn auction_oracle_is_exact_on_small_cases() {
    let mut rng = seeded(2);
    for _ in 0..20 {
        let n = rng.gen_range(1..40);
        let c = Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..3.0));
        let pi = ncgn_core::transport::linear_assignment(&c);
        let exact: f64 = pi.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum();
        assert!((auction_cost(&c) - exact).abs() < 1e-6);
    }
}

fn shapes(n_train: usize, n_points: usize) -> Dataset {
    let mut ds = make_shape_dataset(n_train, 4, n_points, 3).unwrap();
    for g in ds.train.iter_mut().chain(ds.test.iter_mut()) {
        g.features = Array2::zeros((g.num_nodes(), 0));
    }
    ds
}

#[test]
fn attention_rows_are_distributions() {
    let ds = shapes(8, 24);
    let cfg = TrainConfig {
        epochs: 1,
        layers: 1,
        mp_kind: MpKind::Gat,
        method: Method::Baseline(ncgn_core::dmp::BaselineKind::FullyConnected),
        task: Task::Positions,
        ..quick(1)
    };
    let out = train(&cfg, &ds.train).unwrap();
    let study = attention_study(&out.model, &ds.train, &ATTENTION_BUCKETS, 8, 4, 0).unwrap();
    assert_eq!(study.rows.len(), 9 * 8);
    for chunk in study.rows.chunks(8) {
        let s: f64 = chunk.iter().map(|r| r.weight).sum();
        assert!((s - 1.0).abs() <= 1e-9);
        let nonzero: Vec<f64> = chunk.iter().map(|r| r.weight).filter(|&w| w > 0.0).collect();
        let (lo, hi) = nonzero.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &w| (a.min(w), b.max(w)));
        assert!(hi / lo < 3.0, "near-uniform rows expected from an untrained network: {hi} / {lo}");
    }
    let gcn = train(&TrainConfig { mp_kind: MpKind::Gcn, ..cfg }, &ds.train).unwrap();
    assert!(attention_study(&gcn.model, &ds.train, &ATTENTION_BUCKETS, 8, 4, 0).is_err());
}

#[test]
fn gw_study_anchors() {
    let ds = shapes(3, 32);
    let cfg = GwStudyConfig { noise: vec![1.0], clusters: vec![4, 8, 32], seeds: 1, ..Default::default() };
    let study = gw_study(&ds.train, &cfg).unwrap();
    assert_eq!(study.argmin, vec![(1.0, 32)]);
    let clean = study.rows.iter().find(|r| r.1 == 32).unwrap();
    assert!(clean.2 <= 1e-6, "{}", clean.2);
    let means: Vec<f64> = study.rows.iter().map(|r| r.2).collect();
    assert!(means[0] > means[1] && means[1] > means[2]);
}

#[test]
fn noised_position_sets_differ_from_clean() {
    let ds = shapes(2, 16);
    let g = &ds.train[0];
    let mean = g.positions.mean_axis(Axis(0)).unwrap();
    assert!(mean.iter().all(|v| v.abs() < 1e-12));
}
