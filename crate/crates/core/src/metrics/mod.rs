//! Error metrics and their CSV rows.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Mean over trajectories and nodes of the Euclidean distance between two
/// processes. Each input holds one `[J x width]` array per node.
pub fn mee(estimate: &[Vec<f64>], reference: &[Vec<f64>], width: usize) -> Result<f64> {
    if estimate.len() != reference.len() || estimate.is_empty() || width == 0 {
        return Err(Error::usage(format!(
            "mee needs matching non-empty node lists, got {} and {}",
            estimate.len(),
            reference.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (n, (a, b)) in estimate.iter().zip(reference).enumerate() {
        if a.len() != b.len() || a.len() % width != 0 {
            return Err(Error::usage(format!(
                "node {n}: {} estimated values vs {} reference values (width {width})",
                a.len(),
                b.len()
            )));
        }
        for (ra, rb) in a.chunks(width).zip(b.chunks(width)) {
            total += ra.iter().zip(rb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Per-node mean Euclidean distance (the MAE / MEE curve over time).
pub fn mee_curve(estimate: &[Vec<f64>], reference: &[Vec<f64>], width: usize) -> Result<Vec<f64>> {
    estimate
        .iter()
        .zip(reference)
        .map(|(a, b)| mee(std::slice::from_ref(a), std::slice::from_ref(b), width))
        .collect()
}

/// Exact 2-Wasserstein distance between two equal-size empirical measures on the line.
pub fn w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::usage(format!(
            "w2_1d needs equal non-zero sample counts, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let ms = sa.iter().zip(&sb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(ms.sqrt())
}

/// One long-format metric value. `time_index` is `None` for aggregates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: u64,
    pub stage: usize,
    pub metric: String,
    pub time_index: Option<usize>,
    pub value: f64,
}

pub fn write_metric_rows<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        if !r.value.is_finite() {
            return Err(Error::Data(format!("metric {} at stage {} is not finite", r.metric, r.stage)));
        }
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `(step|t_n, value, seed)` series as CSV.
pub fn write_series<W: Write>(out: W, key: &str, values: &[(f64, f64)], seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([key, "value", "seed"])?;
    for (k, v) in values {
        w.write_record([k.to_string(), v.to_string(), seed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mee_of_identical_inputs_is_zero() {
        let a = vec![vec![1.0, 2.0, 3.0, 4.0]; 3];
        assert_eq!(mee(&a, &a, 2).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_gives_its_size() {
        let a = vec![vec![0.5, 1.0, -2.0, 0.0]; 4];
        let b: Vec<Vec<f64>> = a.iter().map(|n| n.iter().enumerate().map(|(i, v)| if i % 2 == 1 { v + 0.3 } else { *v }).collect()).collect();
        assert!((mee(&a, &b, 2).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_usage_error() {
        let a = vec![vec![0.0; 4]];
        let b = vec![vec![0.0; 6]];
        assert!(matches!(mee(&a, &b, 2), Err(Error::Usage(_))));
        assert!(matches!(mee(&a, &[], 2), Err(Error::Usage(_))));
    }

    #[test]
    fn w2_basics() {
        assert_eq!(w2_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(w2_1d(&[3.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(w2_1d(&[0.0], &[1.0, 2.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn non_finite_metric_rejected() {
        let rows = [MetricRow {
            run_id: "r".into(),
            seed: 1,
            stage: 1,
            metric: "mee_x".into(),
            time_index: None,
            value: f64::NAN,
        }];
        assert!(write_metric_rows(Vec::new(), &rows).is_err());
    }
}
