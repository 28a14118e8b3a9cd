mod common;

use common::{rng, uniform_vec};
use rand::seq::SliceRandom;
use sigfp::embed::{embed_loss, train_embed, EmbedArch, EmbedTarget, EmbedTrainConfig, EmbedVariant};
use sigfp::nnkit::{Activation, AdamState, LrSchedule};
use sigfp::pathsim::{generate_drivers, DriverSpec, FeatureTable, StreamRng, TimeGrid};
use sigfp::sigkit::{FeatureKind, FeatureSpec};
use sigfp::solver::Slot;
use sigfp::Error;

const SIG2: FeatureSpec = FeatureSpec {
    kind: FeatureKind::Sig,
    depth: 2,
};

fn arch(variant: EmbedVariant, ell: usize, seed: u64) -> EmbedArch {
    EmbedArch::with_layers(variant, SIG2, 1, 2, ell, &[(16, Activation::Tanh)], &mut rng(seed))
}

fn zero_start(_: &mut StreamRng, out: &mut [f64]) {
    out.fill(0.0);
}

/// Samples on random common paths with random states; the target is the
/// current common value `W0_t`, a linear functional of the signature.
fn common_value_data(seed: u64, paths: usize) -> EmbedTarget {
    let grid = TimeGrid::new(1.0, 8, 2).unwrap();
    let spec = DriverSpec {
        grid,
        q: 1,
        dx: 2,
        n1: 1,
        n2: paths,
    };
    let block = generate_drivers(seed, 0, &spec, &zero_start).unwrap();
    let table = FeatureTable::from_block(&block, FeatureKind::Sig, 2).unwrap();
    let mut r = rng(seed);
    let mut data = EmbedTarget {
        slot: Slot::M1,
        ell: 1,
        dx: 2,
        feat_dim: table.dim(),
        time: vec![],
        state: vec![],
        feats: vec![],
        target: vec![],
    };
    for node in 0..=8 {
        for j2 in 0..paths {
            let f = table.get(j2, node);
            data.time.push(grid.time(node));
            data.state.extend(uniform_vec(&mut r, 2, -1.0, 1.0));
            data.feats.extend_from_slice(f);
            data.target.push(block.common_value(j2, node)[0]);
        }
    }
    data
}

fn mean_abs_error(a: &EmbedArch, data: &EmbedTarget) -> f64 {
    (0..data.len())
        .map(|s| {
            let p = a.predict_row(data.time[s], data.state_row(s), data.feat_row(s)).unwrap();
            (p[0] - data.target_row(s)[0]).abs()
        })
        .sum::<f64>()
        / data.len() as f64
}

fn fit(data: &EmbedTarget, steps: usize) -> EmbedArch {
    let mut a = arch(EmbedVariant::LinearFunctional, 1, 31);
    let mut adam = AdamState::new(&a.net);
    let cfg = EmbedTrainConfig {
        steps,
        batch_size: usize::MAX,
        schedule: LrSchedule::every(1e-2, 0.5, 500),
    };
    train_embed(&mut a, data, &cfg, &mut adam, 1, 1).unwrap();
    a
}

#[test]
fn signature_layout_puts_unit_time_then_path() {
    let data = common_value_data(2, 4);
    for s in 0..data.len() {
        let f = data.feat_row(s);
        assert_eq!(f[0], 1.0);
        assert!((f[1] - data.time[s]).abs() < 1e-14);
        assert!((f[2] - data.target_row(s)[0]).abs() < 1e-12);
    }
}

#[test]
fn zeroed_output_predicts_zero_and_unit_coefficients_select_a_feature() {
    let mut a = arch(EmbedVariant::LinearFunctional, 2, 1);
    a.net = a.net.zeroed_output();
    let feats = [1.0, 0.3, -0.7, 0.09, 0.1, -0.2, 0.245];
    assert_eq!(a.predict_row(0.3, &[0.5, -0.5], &feats).unwrap(), vec![0.0, 0.0]);
    let last = a.net.layers.len() - 1;
    let bias = a.net.layers[last].bias.data_mut();
    bias[0] = 1.0;
    bias[7 + 2] = 1.0;
    assert_eq!(a.predict_row(0.3, &[0.5, -0.5], &feats).unwrap(), vec![1.0, -0.7]);
}

#[test]
fn direct_net_reads_time_state_and_features() {
    let a = arch(EmbedVariant::DirectNet, 3, 4);
    let mut r = rng(5);
    for _ in 0..20 {
        let t = uniform_vec(&mut r, 1, 0.0, 1.0)[0];
        let x = uniform_vec(&mut r, 2, -1.0, 1.0);
        let f = uniform_vec(&mut r, 7, -1.0, 1.0);
        let input: Vec<f64> = [vec![t], x.clone(), f.clone()].concat();
        assert_eq!(a.predict_row(t, &x, &f).unwrap(), a.net.eval_row(&input));
    }
    assert!(a.predict_row(0.0, &[0.0, 0.0], &[0.0; 6]).is_err());
}

#[test]
fn zero_targets_give_zero_loss_for_a_zeroed_output() {
    let mut data = common_value_data(3, 4);
    data.target.fill(0.0);
    for variant in [EmbedVariant::LinearFunctional, EmbedVariant::DirectNet] {
        let mut a = arch(variant, 1, 6);
        a.net = a.net.zeroed_output();
        assert_eq!(embed_loss(&a, &data).unwrap(), 0.0);
        let cfg = EmbedTrainConfig {
            steps: 5,
            batch_size: 8,
            schedule: LrSchedule::constant(1e-2),
        };
        let mut adam = AdamState::new(&a.net);
        let trace = train_embed(&mut a, &data, &cfg, &mut adam, 1, 1).unwrap();
        assert!(trace.iter().all(|&l| l == 0.0), "{trace:?}");
    }
}

#[test]
fn linear_functional_learns_a_linear_target_and_shuffled_features_do_not() {
    let data = common_value_data(7, 64);
    let untrained = mean_abs_error(&arch(EmbedVariant::LinearFunctional, 1, 31), &data);
    let trained = fit(&data, 2000);
    let mae = mean_abs_error(&trained, &data);
    assert!(mae <= 1e-2, "trained mae {mae}");
    assert!(untrained > mae);
    let held_out = common_value_data(8, 64);
    assert!(mean_abs_error(&trained, &held_out) <= 2e-2);

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng(9));
    let shuffled: Vec<f64> = order.iter().flat_map(|&s| data.feat_row(s).to_vec()).collect();
    let ablated = fit(&data.with_features(shuffled), 2000);
    let ablated_mae = mean_abs_error(&ablated, &held_out);
    assert!(ablated_mae > 10.0 * mae, "ablated {ablated_mae} vs {mae}");
}

#[test]
fn huge_rate_reports_divergence_with_its_trace() {
    let mut data = common_value_data(4, 16);
    data.target.iter_mut().for_each(|v| *v *= 1e3);
    let mut a = arch(EmbedVariant::DirectNet, 1, 2);
    a.net = a.net.zeroed_output();
    let cfg = EmbedTrainConfig {
        steps: 2000,
        batch_size: usize::MAX,
        schedule: LrSchedule::constant(1e6),
    };
    let mut adam = AdamState::new(&a.net);
    match train_embed(&mut a, &data, &cfg, &mut adam, 1, 3) {
        Err(Error::Training { stage, trace, .. }) => {
            assert_eq!(stage, 3);
            assert!(!trace.is_empty());
        }
        other => panic!("expected a training error, got {other:?}"),
    }
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let data = common_value_data(5, 2);
    let mut a = arch(EmbedVariant::LinearFunctional, 2, 1);
    let cfg = EmbedTrainConfig {
        steps: 1,
        batch_size: 4,
        schedule: LrSchedule::constant(1e-3),
    };
    let mut adam = AdamState::new(&a.net);
    assert!(train_embed(&mut a, &data, &cfg, &mut adam, 1, 1).is_err());
}
