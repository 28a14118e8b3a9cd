//! Reference computations shared by the test suites and the acceptance target.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigfp::benchmarks::{AnalyticMvFbsde, Flocking, GaussianKernel, GeometricNoise};
use sigfp::embed::compute_targets;
use sigfp::metrics::w2_1d;
use sigfp::nnkit::{DenseTensor, Tape, Var};
use sigfp::pathsim::{CondEnsemble, DriverBlock, FeatureTable, TimeGrid};
use sigfp::sigkit::{path_signature, sig_dim, AugPath, FeatureKind, FeatureSpec, TruncatedTensor};
use sigfp::solver::{draw_block, simulate, EmbedSet, FbsdeProblem, FieldModel, Slot, ZeroFields};
use sigfp::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Nodes of a random walk from the origin with uniform increments in `[-s, s]`.
pub fn random_nodes(rng: &mut ChaCha8Rng, dim: usize, nodes: usize, s: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim]];
    for _ in 1..nodes {
        let last = out.last().unwrap().clone();
        out.push(last.iter().map(|v| v + rng.random_range(-s..s)).collect());
    }
    out
}

pub fn unit_times(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

pub fn signature_of(nodes: &[Vec<f64>], depth: usize) -> TruncatedTensor {
    let path = AugPath::new(unit_times(nodes.len()), nodes.to_vec(), false).unwrap();
    path_signature(&path, depth).unwrap()
}

/// Iterated integrals of the piecewise-linear path through `nodes`, built by
/// a trapezoid recursion on `substeps` pieces per segment. Levels `0..=depth`.
pub fn quadrature_signature(nodes: &[Vec<f64>], depth: usize, substeps: usize) -> Vec<Vec<f64>> {
    let n = nodes[0].len();
    let mut levels: Vec<Vec<f64>> = (0..=depth).map(|k| vec![0.0; n.pow(k as u32)]).collect();
    levels[0][0] = 1.0;
    for seg in nodes.windows(2) {
        let dx: Vec<f64> = seg[1].iter().zip(&seg[0]).map(|(b, a)| (b - a) / substeps as f64).collect();
        for _ in 0..substeps {
            let old = levels.clone();
            for k in 1..=depth {
                let (lo, hi) = levels.split_at_mut(k);
                for (i, (a, b)) in old[k - 1].iter().zip(&lo[k - 1]).enumerate() {
                    let mid = 0.5 * (a + b);
                    for j in 0..n {
                        hi[0][i * n + j] += mid * dx[j];
                    }
                }
            }
        }
    }
    levels
}

pub struct SignatureSuite {
    pub chen_error: f64,
    pub roundtrip_error: f64,
    pub dim_mismatches: Vec<(usize, usize)>,
}

/// Chen's identity at a random split of `paths` random paths (dims 2-4,
/// depths 2-4), log/exp roundtrips of the same signatures, and the
/// dimension table for `q, M` in `1..=4`.
pub fn signature_suite(paths: usize, seed: u64) -> SignatureSuite {
    let mut r = rng(seed);
    let (mut chen, mut round) = (0f64, 0f64);
    for i in 0..paths {
        let dim = 2 + i % 3;
        let depth = 2 + (i / 3) % 3;
        let n = r.random_range(3..8);
        let nodes = random_nodes(&mut r, dim, n, 0.5);
        let whole = signature_of(&nodes, depth);
        let split = r.random_range(1..n - 1);
        let left = signature_of(&nodes[..=split], depth);
        let right = signature_of(&nodes[split..], depth);
        chen = chen.max(whole.max_abs_diff(&left.mul(&right).unwrap()));
        let back = whole.log().unwrap().exp().unwrap();
        round = round.max(whole.max_abs_diff(&back));
    }
    let mut bad = Vec::new();
    for q in 1..=4usize {
        for m in 1..=4usize {
            let series: usize = (0..=m).map(|k| (q + 1).pow(k as u32)).sum();
            let path = AugPath::new(vec![0.0, 0.5], vec![vec![0.0; q], vec![1.0; q]], true).unwrap();
            let flat = path_signature(&path, m).unwrap().flatten().len();
            if sig_dim(q, m) != series || flat != series {
                bad.push((q, m));
            }
        }
    }
    SignatureSuite {
        chen_error: chen,
        roundtrip_error: round,
        dim_mismatches: bad,
    }
}

/// A tape primitive under test: builds an output from the given inputs.
pub type Primitive = fn(&mut Tape, &[Var]) -> Result<Var>;
/// Random inputs of shapes a primitive accepts.
pub type InputGen = fn(&mut ChaCha8Rng) -> Vec<DenseTensor>;

/// Largest relative gap `|g - fd| / max(|g|, |fd|, 1e-3)` between the tape
/// gradient and central differences (step `1e-4`) of `sum(w ⊙ op(inputs))`
/// with fixed random weights `w`.
pub fn gradient_gap(op: Primitive, inputs: &[DenseTensor], weight_seed: u64) -> f64 {
    let mut probe = Tape::new();
    let pv: Vec<Var> = inputs.iter().map(|t| probe.constant(t)).collect();
    let out = op(&mut probe, &pv).unwrap();
    let (rows, cols) = probe.shape(out);
    let weights = DenseTensor::matrix(rows, cols, uniform_vec(&mut rng(weight_seed), rows * cols, -1.0, 1.0));

    let loss = |tape: &mut Tape, vars: &[Var]| -> Var {
        let y = op(tape, vars).unwrap();
        let w = tape.constant(&weights);
        let wy = tape.mul(y, w).unwrap();
        tape.sum(wy)
    };
    let value = |ins: &[DenseTensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.constant(t)).collect();
        let l = loss(&mut tape, &vars);
        tape.scalar(l)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
    let l = loss(&mut tape, &vars);
    let grads = tape.backward(l).unwrap();
    let h = 1e-4;
    let mut worst = 0f64;
    for (k, v) in vars.iter().enumerate() {
        let g = grads.get(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for (i, gi) in g.iter().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let fd = (value(&plus) - value(&minus)) / (2.0 * h);
            let gap = (gi - fd).abs() / gi.abs().max(fd.abs()).max(1e-3);
            worst = worst.max(gap);
        }
    }
    worst
}

fn mat(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseTensor {
    DenseTensor::matrix(rows, cols, uniform_vec(r, rows * cols, lo, hi))
}

/// Every tape primitive with a generator of random inputs of compatible shapes.
pub fn primitives() -> Vec<(&'static str, Primitive, InputGen)> {
    fn dims(r: &mut ChaCha8Rng) -> (usize, usize) {
        (r.random_range(1..5), r.random_range(1..5))
    }
    fn one(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let (b, c) = dims(r);
        vec![mat(r, b, c, -1.5, 1.5)]
    }
    fn positive(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let (b, c) = dims(r);
        vec![mat(r, b, c, 0.2, 2.0)]
    }
    fn two(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let (b, c) = dims(r);
        vec![mat(r, b, c, -1.5, 1.5), mat(r, b, c, -1.5, 1.5)]
    }
    fn linear(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let (b, i) = dims(r);
        let o = r.random_range(1..5);
        vec![mat(r, b, i, -1.5, 1.5), mat(r, o, i, -1.0, 1.0), mat(r, 1, o, -1.0, 1.0)]
    }
    fn matmul(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let (m, k) = dims(r);
        let n = r.random_range(1..5);
        vec![mat(r, m, k, -1.5, 1.5), mat(r, k, n, -1.5, 1.5)]
    }
    fn col(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let (b, c) = dims(r);
        vec![mat(r, b, c, -1.5, 1.5), mat(r, b, 1, -1.5, 1.5)]
    }
    fn row(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let (b, c) = dims(r);
        vec![mat(r, b, c, -1.5, 1.5), mat(r, 1, c, -1.5, 1.5)]
    }
    fn concat(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let b = r.random_range(1..5);
        (0..3).map(|_| {
            let c = r.random_range(1..4);
            mat(r, b, c, -1.5, 1.5)
        }).collect()
    }
    fn slice(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let b = r.random_range(1..5);
        vec![mat(r, b, 5, -1.5, 1.5)]
    }
    fn matvec(r: &mut ChaCha8Rng) -> Vec<DenseTensor> {
        let (b, c) = dims(r);
        let k = r.random_range(1..4);
        vec![mat(r, b, k * c, -1.5, 1.5), mat(r, b, c, -1.5, 1.5)]
    }
    vec![
        ("linear", |t, v| t.linear(v[0], v[1], v[2]), linear),
        ("matmul", |t, v| t.matmul(v[0], v[1]), matmul),
        ("add", |t, v| t.add(v[0], v[1]), two),
        ("sub", |t, v| t.sub(v[0], v[1]), two),
        ("mul", |t, v| t.mul(v[0], v[1]), two),
        ("mul_col", |t, v| t.mul_col(v[0], v[1]), col),
        ("add_row", |t, v| t.add_row(v[0], v[1]), row),
        ("affine", |t, v| Ok(t.affine(v[0], -0.7, 0.3)), one),
        ("scale", |t, v| Ok(t.scale(v[0], 1.9)), one),
        ("neg", |t, v| Ok(t.neg(v[0])), one),
        ("tanh", |t, v| Ok(t.tanh(v[0])), one),
        ("silu", |t, v| Ok(t.silu(v[0])), one),
        ("exp", |t, v| Ok(t.exp(v[0])), one),
        ("sin", |t, v| Ok(t.sin(v[0])), one),
        ("cos", |t, v| Ok(t.cos(v[0])), one),
        ("sqrt", |t, v| Ok(t.sqrt(v[0])), positive),
        ("square", |t, v| Ok(t.square(v[0])), one),
        ("sum", |t, v| Ok(t.sum(v[0])), one),
        ("mean", |t, v| Ok(t.mean(v[0])), one),
        ("row_sum", |t, v| Ok(t.row_sum(v[0])), one),
        ("concat", |t, v| t.concat(v), concat),
        ("slice_cols", |t, v| t.slice_cols(v[0], 1, 3), slice),
        ("row_matvec", |t, v| t.row_matvec(v[0], v[1]), matvec),
    ]
}

/// Worst gradient gap of each primitive over `instances` random inputs.
pub fn autodiff_suite(instances: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    primitives()
        .into_iter()
        .map(|(name, op, gen)| {
            let worst = (0..instances)
                .map(|_| {
                    let inputs = gen(&mut r);
                    gradient_gap(op, &inputs, r.random())
                })
                .fold(0f64, f64::max);
            (name, worst)
        })
        .collect()
}

/// Mean `|X_T - exact|` of the Euler scheme for `dX = X dW` at each `N_T`.
pub fn euler_strong_errors(steps: &[usize], paths: usize, seed: u64) -> Vec<f64> {
    let p = GeometricNoise { sigma: 1.0 };
    let spec = FeatureSpec {
        kind: FeatureKind::Sig,
        depth: 1,
    };
    steps
        .iter()
        .map(|&n| {
            let grid = TimeGrid::new(1.0, n, 1).unwrap();
            let (block, feats) = draw_block(&p, grid, paths, 1, spec, seed, n as u64).unwrap();
            let sim = simulate(&p, FieldModel::Oracle(&ZeroFields), &EmbedSet::zero(), &block, &feats, 0).unwrap();
            let xt = &sim.x[n];
            (0..paths)
                .map(|r| (xt[r] - p.exact(1.0, block.idio_value(r, n)[0])).abs())
                .sum::<f64>()
                / paths as f64
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Single-node ensemble (nodes 0 and 1 identical) holding one cloud.
pub fn one_cloud(x: &[Vec<f64>], y: &[Vec<f64>]) -> CondEnsemble {
    let (dx, dy) = (x[0].len(), y[0].len());
    let xs: Vec<f64> = x.concat();
    let ys: Vec<f64> = y.concat();
    CondEnsemble::from_nodes(&[xs.clone(), xs], &[ys.clone(), ys], 1, x.len(), dx, dy).unwrap()
}

/// Features of a one-step zero common path, enough to feed `compute_targets`.
pub fn flat_features(q: usize, dx: usize, n1: usize) -> (TimeGrid, FeatureTable) {
    let grid = TimeGrid::new(1.0, 1, 1).unwrap();
    let block = DriverBlock::from_parts(grid, q, dx, n1, 1, vec![0.0; q], vec![0.0; n1 * q], vec![0.0; n1 * dx]).unwrap();
    (grid, FeatureTable::from_block(&block, FeatureKind::Sig, 2).unwrap())
}

pub fn targets(problem: &dyn FbsdeProblem, slot: Slot, x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let ens = one_cloud(x, y);
    let (grid, feats) = flat_features(problem.dims().q, problem.dims().dx, x.len());
    let t = compute_targets(problem, slot, &ens, &feats, &grid, 0..1).unwrap();
    (0..t.len()).map(|s| t.target_row(s).to_vec()).collect()
}

/// `m4` of the flocking model written out per particle, for comparison with the library.
pub fn m4_by_hand(beta: f64, qdiag: f64, x: &[f64], v: &[f64], particles: &[Vec<f64>]) -> Vec<f64> {
    let d = x.len();
    let n = particles.len() as f64;
    let mut gap_mean = vec![0.0; d];
    let mut grad_mean = vec![vec![0.0; d]; d];
    let mut w_mean = 0.0;
    for p in particles {
        let (xp, vp) = p.split_at(d);
        let r2: f64 = (0..d).map(|i| (x[i] - xp[i]).powi(2)).sum();
        let w = (1.0 + r2).powf(-beta);
        w_mean += w / n;
        for a in 0..d {
            gap_mean[a] += w * (vp[a] - v[a]) / n;
            for b in 0..d {
                let dwdx = -2.0 * beta * (x[b] - xp[b]) * (1.0 + r2).powf(-beta - 1.0);
                grad_mean[a][b] += dwdx * (vp[a] - v[a]) / n;
            }
        }
    }
    let mut out = vec![0.0; 2 * d];
    for b in 0..d {
        out[b] = (0..d).map(|a| grad_mean[a][b] * qdiag * gap_mean[a]).sum();
        out[d + b] = -gap_mean[b] * w_mean;
    }
    out
}

/// All orderings of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// `W2` between equal-size samples by minimizing over every pairing.
pub fn w2_brute(a: &[f64], b: &[f64]) -> f64 {
    permutations(a.len())
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).powi(2)).sum::<f64>() / a.len() as f64)
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Worst deviation of every small-instance oracle: flocking `m4`, the
/// targets of all three benchmarks, and `w2_1d`.
pub fn brute_force_suite(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();

    // m4 of the query (x, v) = (0, 0) against particles (1, 2) and (-2, 1) at
    // beta = 1, d = 1: w = 1/2, 1/5 and dw/dx = 1/2, -4/25.
    let f1 = Flocking::standard(1, 1.0, 0.1, 0.3);
    let ens = one_cloud(&[vec![1.0, 2.0], vec![-2.0, 1.0]], &[vec![0.0; 2], vec![0.0; 2]]);
    let mut hand = [0.0; 2];
    f1.m4(&[0.0], &[0.0], &ens.cloud(0, 0), &mut hand);
    let want = [0.42 * 0.5 * 0.6, -0.6 * 0.35];
    out.push(("m4 hand", (hand[0] - want[0]).abs().max((hand[1] - want[1]).abs())));

    // Random three-particle clouds: library vs per-particle formula, every
    // query, every ordering.
    let mut m4_gap = 0f64;
    for &(beta, d) in &[(0.0, 2), (0.5, 1), (1.0, 2), (1.0, 3)] {
        let f = Flocking::standard(d, beta, 0.1, 0.3);
        let parts: Vec<Vec<f64>> = (0..3).map(|_| uniform_vec(&mut r, 2 * d, -1.0, 1.0)).collect();
        for perm in permutations(3) {
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| parts[i].clone()).collect();
            let got = targets(&f, Slot::M4, &shuffled, &vec![vec![0.0; 2 * d]; 3]);
            for (k, p) in shuffled.iter().enumerate() {
                let (x, v) = p.split_at(d);
                let want = m4_by_hand(beta, 0.5, x, v, &parts);
                for (a, b) in got[k].iter().zip(&want) {
                    m4_gap = m4_gap.max((a - b).abs());
                }
                if beta == 0.0 {
                    // first block vanishes, second is -(E[v'] - v)
                    for c in 0..d {
                        let mean_v = parts.iter().map(|q| q[d + c]).sum::<f64>() / 3.0;
                        m4_gap = m4_gap.max(got[k][c].abs()).max((got[k][d + c] + (mean_v - v[c])).abs());
                    }
                }
            }
        }
    }
    out.push(("m4 permutations", m4_gap));

    // Kernel target: mean of three kernel values.
    let kernel = GaussianKernel::new(2);
    let xs: Vec<Vec<f64>> = (0..3).map(|_| uniform_vec(&mut r, 2, -1.0, 1.0)).collect();
    let got = targets(&kernel, Slot::M1, &xs, &vec![vec![0.0]; 3]);
    let mut kgap = 0f64;
    for (k, x) in xs.iter().enumerate() {
        let want = xs
            .iter()
            .map(|p| (-((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)) / 2.0).exp())
            .sum::<f64>()
            / 3.0;
        kgap = kgap.max((got[k][0] - want).abs());
    }
    out.push(("kernel targets", kgap));

    // Analytic m1 = (E[exp(-|x - x'|^2 / d)], E[x'], E[y']).
    let a = AnalyticMvFbsde::new(2);
    let xs: Vec<Vec<f64>> = (0..3).map(|_| uniform_vec(&mut r, 2, -1.0, 1.0)).collect();
    let ys: Vec<Vec<f64>> = (0..3).map(|_| uniform_vec(&mut r, 1, -1.0, 1.0)).collect();
    let got = targets(&a, Slot::M1, &xs, &ys);
    let mut agap = 0f64;
    for (k, x) in xs.iter().enumerate() {
        let ker = xs
            .iter()
            .map(|p| (-((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)) / 2.0).exp())
            .sum::<f64>()
            / 3.0;
        let want = [
            ker,
            (xs[0][0] + xs[1][0] + xs[2][0]) / 3.0,
            (xs[0][1] + xs[1][1] + xs[2][1]) / 3.0,
            (ys[0][0] + ys[1][0] + ys[2][0]) / 3.0,
        ];
        for (g, w) in got[k].iter().zip(&want) {
            agap = agap.max((g - w).abs());
        }
    }
    out.push(("analytic targets", agap));

    let mut wgap = 0f64;
    for _ in 0..200 {
        let a = uniform_vec(&mut r, 3, -2.0, 2.0);
        let b = uniform_vec(&mut r, 3, -2.0, 2.0);
        wgap = wgap.max((w2_1d(&a, &b).unwrap() - w2_brute(&a, &b)).abs());
    }
    out.push(("w2_1d", wgap));
    out
}
