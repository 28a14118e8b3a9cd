use serde::{Deserialize, Serialize};

use super::tensor::TruncatedTensor;
use crate::error::{Error, Result};

/// Which representation of the path is fed to networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Sig,
    Logsig,
}

/// Flattened length of the truncated signature of a time-augmented
/// `q`-dimensional path, leading 1 included: `((q+1)^{M+1} - 1) / q`.
pub fn sig_dim(q: usize, depth: usize) -> usize {
    ((q + 1).pow(depth as u32 + 1) - 1) / q
}

/// Flattened log-signature length in full tensor coordinates (levels `1..=M`).
pub fn logsig_dim(q: usize, depth: usize) -> usize {
    sig_dim(q, depth) - 1
}

/// Feature representation and truncation depth shared by every network of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub depth: usize,
}

impl FeatureSpec {
    pub fn dim(&self, q: usize) -> usize {
        feature_dim(self.kind, q, self.depth)
    }
}

pub fn feature_dim(kind: FeatureKind, q: usize, depth: usize) -> usize {
    match kind {
        FeatureKind::Sig => sig_dim(q, depth),
        FeatureKind::Logsig => logsig_dim(q, depth),
    }
}

/// Flatten a signature as a network feature vector.
pub fn features(sig: &TruncatedTensor, kind: FeatureKind) -> Result<Vec<f64>> {
    Ok(match kind {
        FeatureKind::Sig => sig.flatten(),
        FeatureKind::Logsig => sig.log()?.flatten_without_unit(),
    })
}

/// Sampled path, optionally augmented with its time coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct AugPath {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    augmented: bool,
}

impl AugPath {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, augmented: bool) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Data(format!(
                "path needs matching non-empty times/values, got {} and {}",
                times.len(),
                values.len()
            )));
        }
        let q = values[0].len();
        if let Some(i) = values.iter().position(|v| v.len() != q) {
            return Err(Error::Data(format!("node {i} has dimension {}, expected {q}", values[i].len())));
        }
        if let Some(i) = times.windows(2).position(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::Data(format!(
                "times must increase strictly: t[{}] = {} then t[{}] = {}",
                i,
                times[i],
                i + 1,
                times[i + 1]
            )));
        }
        Ok(Self {
            times,
            values,
            augmented,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Dimension of the nodes the signature sees (`q + 1` when augmented).
    pub fn ambient_dim(&self) -> usize {
        self.values[0].len() + usize::from(self.augmented)
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.ambient_dim());
        if self.augmented {
            v.push(self.times[i]);
        }
        v.extend_from_slice(&self.values[i]);
        v
    }
}

/// Running signature of a piecewise-linear path that grows one node at a time.
#[derive(Clone, Debug)]
pub struct SignatureStream {
    sig: TruncatedTensor,
    last: Vec<f64>,
    scratch: Vec<f64>,
}

impl SignatureStream {
    pub fn new(origin: &[f64], depth: usize) -> Self {
        Self {
            sig: TruncatedTensor::identity(origin.len(), depth),
            last: origin.to_vec(),
            scratch: vec![0.0; origin.len()],
        }
    }

    pub fn push(&mut self, node: &[f64]) -> Result<()> {
        for ((d, n), l) in self.scratch.iter_mut().zip(node).zip(&self.last) {
            *d = n - l;
        }
        self.sig.extend_segment(&self.scratch)?;
        self.last.copy_from_slice(node);
        Ok(())
    }

    /// Extend by a raw increment instead of an absolute node.
    pub fn push_increment(&mut self, delta: &[f64]) -> Result<()> {
        self.sig.extend_segment(delta)?;
        for (l, d) in self.last.iter_mut().zip(delta) {
            *l += d;
        }
        Ok(())
    }

    pub fn signature(&self) -> &TruncatedTensor {
        &self.sig
    }
}

/// Truncated signature of the linear interpolation of `path`.
pub fn path_signature(path: &AugPath, depth: usize) -> Result<TruncatedTensor> {
    if depth == 0 {
        return Err(Error::usage("signature depth must be at least 1"));
    }
    let mut stream = SignatureStream::new(&path.node(0), depth);
    for i in 1..path.len() {
        stream.push(&path.node(i))?;
    }
    Ok(stream.sig)
}

/// Left fold of Chen products over the segment exponentials. Slower than
/// [`path_signature`]; kept as the literal definition.
pub fn path_signature_by_products(path: &AugPath, depth: usize) -> Result<TruncatedTensor> {
    let dim = path.ambient_dim();
    let mut acc = TruncatedTensor::identity(dim, depth);
    for i in 1..path.len() {
        let (a, b) = (path.node(i - 1), path.node(i));
        let delta: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
        acc = acc.mul(&TruncatedTensor::segment(&delta, depth))?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signature_dimensions() {
        assert_eq!(sig_dim(1, 3), 15);
        assert_eq!(sig_dim(1, 1), 3);
        assert_eq!(sig_dim(3, 2), 21);
        assert_eq!(logsig_dim(1, 2), 6);
    }

    #[test]
    fn single_node_path_is_identity() {
        let p = AugPath::new(vec![0.0], vec![vec![0.3, 0.1]], true).unwrap();
        assert_eq!(path_signature(&p, 3).unwrap(), TruncatedTensor::identity(3, 3));
    }

    #[test]
    fn straight_augmented_line() {
        let c = 1.7;
        let times: Vec<f64> = (0..=5).map(|i| i as f64 / 5.0).collect();
        let values = times.iter().map(|t| vec![c * t]).collect();
        let p = AugPath::new(times, values, true).unwrap();
        let s = path_signature(&p, 3).unwrap();
        let expected = TruncatedTensor::segment(&[1.0, c], 3);
        assert!(s.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn non_increasing_times_rejected() {
        let err = AugPath::new(vec![0.0, 0.5, 0.5], vec![vec![0.0]; 3], true).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn product_fold_equals_stream() {
        let times = vec![0.0, 0.1, 0.35, 0.4];
        let values = vec![vec![0.0, 0.0], vec![0.3, -0.2], vec![-0.1, 0.5], vec![0.2, 0.2]];
        let p = AugPath::new(times, values, true).unwrap();
        let a = path_signature(&p, 4).unwrap();
        let b = path_signature_by_products(&p, 4).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-14);
    }
}
