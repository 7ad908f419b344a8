use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use ncgn_bench::{cloud, graph};
use ncgn_core::autodiff::{Mode, Session};
use ncgn_core::data::{simulate_rd, RdParams};
use ncgn_core::dmp::{prepare_one, DmpConfig, DmpModel, Method, MpKind, StructureConfig};
use ncgn_core::graph::{build_knn_edges, voxel_coarsen};
use ncgn_core::schedule::{default_bounds, eval_schedule};
use ncgn_core::transport::{gw_entropic, linear_assignment, w2_exact, GwOptions, PointCloud};

fn transport(c: &mut Criterion) {
    let mut g = c.benchmark_group("transport");
    for n in [64, 256] {
        let (a, b) = (cloud(n, 3, 1), cloud(n, 3, 2));
        g.bench_with_input(BenchmarkId::new("w2_exact", n), &n, |bch, _| {
            bch.iter(|| w2_exact(black_box(&a), black_box(&b)).unwrap())
        });
    }
    let cost = cloud(128, 128, 3);
    g.bench_function("linear_assignment_128", |bch| bch.iter(|| linear_assignment(black_box(&cost))));
    let (a, b) = (PointCloud::uniform(cloud(32, 3, 4)), PointCloud::uniform(cloud(24, 3, 5)));
    g.sample_size(10);
    g.bench_function("gw_entropic_32x24", |bch| bch.iter(|| gw_entropic(&a, &b, &GwOptions::default()).unwrap()));
    g.finish();
}

fn structure(c: &mut Criterion) {
    let mut g = c.benchmark_group("structure");
    for n in [100, 1000] {
        let gr = graph(n, 3, 0, 6);
        g.bench_with_input(BenchmarkId::new("knn_k5", n), &n, |bch, _| bch.iter(|| build_knn_edges(black_box(&gr.positions), 5)));
        g.bench_with_input(BenchmarkId::new("voxel_coarsen", n), &n, |bch, _| {
            bch.iter(|| voxel_coarsen(black_box(&gr), n / 8).unwrap())
        });
        let spec = default_bounds(n);
        g.bench_with_input(BenchmarkId::new("schedule_sweep", n), &n, |bch, _| {
            bch.iter(|| (0..=100).map(|i| eval_schedule(&spec, i as f64 / 100.0, n).unwrap().0).sum::<usize>())
        });
    }
    g.finish();
}

fn network(c: &mut Criterion) {
    let mut g = c.benchmark_group("dmp");
    g.sample_size(20);
    let gr = graph(100, 2, 3, 7);
    for kind in [MpKind::Gcn, MpKind::Gat] {
        let cfg = DmpConfig { in_dim: 6, pos_dim: 2, hdim: 32, odim: 3, layers: 3, mp_kind: kind };
        let model = DmpModel::new(cfg, 0).unwrap();
        let b = prepare_one(&gr, 0.5, &StructureConfig::new(Method::Dmp)).unwrap();
        g.bench_function(format!("forward_backward_{kind}"), |bch| {
            bch.iter(|| {
                let mut s = Session::new(&model.params, &model.bn, Mode::Train);
                let out = model.forward(&mut s, &b).unwrap();
                let sq = s.tape.mul(out, out).unwrap();
                let loss = s.tape.mean(sq);
                s.backward(loss).unwrap()
            })
        });
    }
    g.finish();
}

fn simulator(c: &mut Criterion) {
    let mut g = c.benchmark_group("data");
    g.sample_size(10);
    let p = RdParams { t_end: 20.0, ..RdParams::default() };
    g.bench_function("simulate_rd_400_steps", |bch| bch.iter(|| simulate_rd(black_box(&p), 3).unwrap()));
    g.finish();
}

criterion_group!(benches, transport, structure, network, simulator);
criterion_main!(benches);
