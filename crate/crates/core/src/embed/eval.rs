use super::arch::EmbedArch;
use crate::error::{Error, Result};

/// Held-out evaluation points with reference embedding values.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSet {
    pub times: Vec<f64>,
    pub rows: usize,
    pub dx: usize,
    pub feat_dim: usize,
    pub ell: usize,
    /// `[node][row][dx]`
    pub state: Vec<f64>,
    /// `[node][row][F]`
    pub feats: Vec<f64>,
    /// `[node][row][ell]`
    pub reference: Vec<f64>,
}

/// `MAE_{t_n}`: mean over rows of the Euclidean distance between the
/// reference and the prediction, for every node.
pub fn mae_at_time(arch: &EmbedArch, eval: &EvalSet) -> Result<Vec<f64>> {
    if arch.ell != eval.ell || arch.feat_dim != eval.feat_dim || arch.state_dim != eval.dx {
        return Err(Error::config("evaluation set does not match the embedding architecture"));
    }
    let (r, dx, f, ell) = (eval.rows, eval.dx, eval.feat_dim, eval.ell);
    Ok(eval
        .times
        .iter()
        .enumerate()
        .map(|(n, &t)| {
            let mut total = 0.0;
            for j in 0..r {
                let k = n * r + j;
                let pred = arch
                    .predict_row(t, &eval.state[k * dx..(k + 1) * dx], &eval.feats[k * f..(k + 1) * f])
                    .expect("dimensions checked above");
                let refv = &eval.reference[k * ell..(k + 1) * ell];
                total += pred.iter().zip(refv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            }
            total / r as f64
        })
        .collect())
}

pub fn time_average(curve: &[f64]) -> f64 {
    curve.iter().sum::<f64>() / curve.len() as f64
}
