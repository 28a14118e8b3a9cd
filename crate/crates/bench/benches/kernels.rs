use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigfp::benchmarks::AnalyticMvFbsde;
use sigfp::embed::EmbedVariant;
use sigfp::nnkit::{Activation, NetParams, Tape};
use sigfp::pathsim::TimeGrid;
use sigfp::sigkit::{path_signature, AugPath, FeatureKind, FeatureSpec};
use sigfp::solver::{draw_block, simulate, DecouplingFields, EmbedSet, EmbedShape, FbsdeProblem, FieldModel};

fn signatures(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 121;
    let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mut values = vec![vec![0.0; 2]];
    for _ in 1..n {
        let last = values.last().unwrap();
        let next = vec![last[0] + rng.random_range(-0.1..0.1), last[1] + rng.random_range(-0.1..0.1)];
        values.push(next);
    }
    let path = AugPath::new(times, values, true).unwrap();
    for depth in [2, 4] {
        c.bench_function(&format!("signature/121 nodes, dim 3, depth {depth}"), |b| {
            b.iter(|| path_signature(&path, depth).unwrap())
        });
    }
}

fn mlp_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (rows, input) = (256, 8);
    let net = NetParams::glorot(input, &[64, 64], 1, Activation::Tanh, &mut rng);
    let x: Vec<f64> = (0..rows * input).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("mlp/forward+backward, batch 256, 64x2 tanh", |b| {
        b.iter_batched(
            || x.clone(),
            |x| {
                let mut tape = Tape::new();
                let bound = net.bind(&mut tape, true);
                let xv = tape.constant_from(rows, input, x);
                let out = bound.forward(&mut tape, xv).unwrap();
                let sq = tape.square(out);
                let loss = tape.mean(sq);
                let grads = tape.backward(loss).unwrap();
                bound.gradients(&tape, &grads)
            },
            BatchSize::SmallInput,
        )
    });
}

fn rollout(c: &mut Criterion) {
    let p = AnalyticMvFbsde::new(1);
    let features = FeatureSpec {
        kind: FeatureKind::Logsig,
        depth: 2,
    };
    let grid = TimeGrid::new(1.0, 40, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let fields = DecouplingFields::new(p.dims(), features, &[(32, Activation::Tanh); 2], &[(32, Activation::Tanh); 2], &mut rng);
    let shape = EmbedShape {
        variant: EmbedVariant::DirectNet,
        features,
        hidden: vec![(32, Activation::Tanh); 2],
    };
    let embeds = EmbedSet::learned(&p, &shape, &mut rng);
    let (block, feats) = draw_block(&p, grid, 64, 16, features, 3, 0).unwrap();
    c.bench_function("rollout/analytic d=1, N_T 40, 64x16 particles", |b| {
        b.iter(|| simulate(&p, FieldModel::Nets(&fields), &embeds, &block, &feats, 1).unwrap())
    });
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(20);
    targets = signatures, mlp_step, rollout
}
criterion_main!(kernels);
