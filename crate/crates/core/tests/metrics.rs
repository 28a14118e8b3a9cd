use proptest::prelude::*;
use sigfp::metrics::{mee, mee_curve, w2_1d, write_metric_rows, write_series, MetricRow};
use sigfp::Error;

#[test]
fn mee_of_identical_inputs_is_zero_and_of_an_offset_is_its_size() {
    let a = vec![vec![0.1, 0.2, 0.3, 0.4], vec![1.0, -1.0, 2.0, -2.0]];
    assert_eq!(mee(&a, &a, 2).unwrap(), 0.0);
    let shifted: Vec<Vec<f64>> = a
        .iter()
        .map(|node| node.iter().enumerate().map(|(i, v)| if i % 2 == 1 { v - 0.7 } else { *v }).collect())
        .collect();
    assert!((mee(&shifted, &a, 2).unwrap() - 0.7).abs() < 1e-15);
}

#[test]
fn mee_of_two_trajectories_at_two_times_by_hand() {
    // differences (3,4), (0,1) at t0 and (1,0), (6,8) at t1: norms 5, 1, 1, 10
    let est = vec![vec![3.0, 4.0, 0.0, 1.0], vec![1.0, 0.0, 6.0, 8.0]];
    let zero = vec![vec![0.0; 4], vec![0.0; 4]];
    assert_eq!(mee(&est, &zero, 2).unwrap(), 17.0 / 4.0);
    assert_eq!(mee_curve(&est, &zero, 2).unwrap(), vec![3.0, 5.5]);
}

#[test]
fn mee_rejects_misaligned_shapes() {
    let a = vec![vec![0.0; 4]];
    assert!(matches!(mee(&a, &[vec![0.0; 2]], 2), Err(Error::Usage(_))));
    assert!(matches!(mee(&a, &[vec![0.0; 4], vec![0.0; 4]], 2), Err(Error::Usage(_))));
    assert!(matches!(mee(&a, &a, 3), Err(Error::Usage(_))));
    assert!(mee(&[], &[], 1).is_err());
}

#[test]
fn w2_examples() {
    assert_eq!(w2_1d(&[0.0], &[1.0]).unwrap(), 1.0);
    assert_eq!(w2_1d(&[3.0, 1.0, 2.0], &[2.0, 3.0, 1.0]).unwrap(), 0.0);
    assert!(matches!(w2_1d(&[0.0, 1.0], &[1.0]), Err(Error::Usage(_))));
}

#[test]
fn metric_rows_refuse_non_finite_values() {
    let row = |value: f64| MetricRow {
        run_id: "r".into(),
        seed: 3,
        stage: 2,
        metric: "mee_y".into(),
        time_index: None,
        value,
    };
    let mut out = Vec::new();
    write_metric_rows(&mut out, &[row(0.5)]).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text, "run_id,seed,stage,metric,time_index,value\nr,3,2,mee_y,,0.5\n");
    assert!(matches!(write_metric_rows(Vec::new(), &[row(f64::NAN)]), Err(Error::Data(_))));

    let mut out = Vec::new();
    write_series(&mut out, "step", &[(0.0, 1.5), (1.0, 0.25)], 9).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "step,value,seed\n0,1.5,9\n1,0.25,9\n");
}

fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..12).prop_flat_map(|n| {
        let v = || prop::collection::vec(-10.0f64..10.0, n);
        (v(), v(), v())
    })
}

proptest! {
    #[test]
    fn w2_is_a_metric((a, b, c) in triple()) {
        let ab = w2_1d(&a, &b).unwrap();
        prop_assert_eq!(ab, w2_1d(&b, &a).unwrap());
        prop_assert_eq!(w2_1d(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= w2_1d(&a, &c).unwrap() + w2_1d(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn mee_detects_any_translation(
        est in prop::collection::vec(-5.0f64..5.0, 6),
        shift in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        prop_assume!(shift.iter().any(|s| s.abs() > 1e-9));
        let nodes = vec![est.clone(), est];
        prop_assert_eq!(mee(&nodes, &nodes, 2).unwrap(), 0.0);
        let moved: Vec<Vec<f64>> = nodes
            .iter()
            .map(|n| n.iter().enumerate().map(|(i, v)| v + shift[i % 2]).collect())
            .collect();
        prop_assert!(mee(&moved, &nodes, 2).unwrap() > 0.0);
    }
}
