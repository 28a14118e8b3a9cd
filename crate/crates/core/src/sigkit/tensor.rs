use crate::error::{Error, Result};

/// Element of the tensor algebra over `R^dim`, truncated at `depth`.
///
/// `levels[k]` holds the `dim^k` coefficients of level `k` in row-major
/// multi-index order. Level 0 is a single scalar: 1 for signatures, 0 for
/// log-signatures.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedTensor {
    dim: usize,
    depth: usize,
    levels: Vec<Vec<f64>>,
}

impl TruncatedTensor {
    pub fn zero(dim: usize, depth: usize) -> Self {
        let levels = (0..=depth).map(|k| vec![0.0; dim.pow(k as u32)]).collect();
        Self { dim, depth, levels }
    }

    pub fn identity(dim: usize, depth: usize) -> Self {
        let mut t = Self::zero(dim, depth);
        t.levels[0][0] = 1.0;
        t
    }

    pub fn from_levels(dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::usage("a truncated tensor needs depth >= 1"));
        }
        for (k, l) in levels.iter().enumerate() {
            if l.len() != dim.pow(k as u32) {
                return Err(Error::usage(format!(
                    "level {k} holds {} values, expected {}",
                    l.len(),
                    dim.pow(k as u32)
                )));
            }
        }
        Ok(Self {
            dim,
            depth: levels.len() - 1,
            levels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Tensor exponential of a straight segment: level `k` is `delta^{⊗k} / k!`.
    pub fn segment(delta: &[f64], depth: usize) -> Self {
        let dim = delta.len();
        let mut levels = Vec::with_capacity(depth + 1);
        levels.push(vec![1.0]);
        for k in 1..=depth {
            let prev: &Vec<f64> = &levels[k - 1];
            let mut next = Vec::with_capacity(prev.len() * dim);
            for p in prev {
                for d in delta {
                    next.push(p * d / k as f64);
                }
            }
            levels.push(next);
        }
        Self { dim, depth, levels }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.depth != other.depth {
            return Err(Error::usage(format!(
                "tensor product of (dim {}, depth {}) with (dim {}, depth {})",
                self.dim, self.depth, other.dim, other.depth
            )));
        }
        Ok(())
    }

    /// Truncated tensor product: level `k` is `sum_{i+j=k} a_i ⊗ b_j`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = Self::zero(self.dim, self.depth);
        for k in 0..=self.depth {
            let target = &mut out.levels[k];
            for i in 0..=k {
                let a = &self.levels[i];
                let b = &other.levels[k - i];
                let nb = b.len();
                for (ia, av) in a.iter().enumerate() {
                    if *av == 0.0 {
                        continue;
                    }
                    let row = &mut target[ia * nb..(ia + 1) * nb];
                    for (t, bv) in row.iter_mut().zip(b) {
                        *t += av * bv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// In-place right multiplication by the exponential of a segment,
    /// evaluated by Horner's scheme so no segment tensor is materialised.
    pub fn extend_segment(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.dim {
            return Err(Error::usage(format!(
                "segment of dim {} applied to tensor of dim {}",
                delta.len(),
                self.dim
            )));
        }
        // (S ⊗ exp(δ))_k = sum_{i<=k} S_i ⊗ δ^{⊗(k-i)}/(k-i)!, built from the top level down
        // so each level reads only lower, not-yet-updated levels.
        for k in (1..=self.depth).rev() {
            let mut acc = self.levels[0].clone();
            for i in 1..=k {
                // acc <- acc ⊗ δ / (k - i + 1) + S_i
                let div = (k - i + 1) as f64;
                let mut next = Vec::with_capacity(acc.len() * self.dim);
                for a in &acc {
                    for d in delta {
                        next.push(a * d / div);
                    }
                }
                for (n, s) in next.iter_mut().zip(&self.levels[i]) {
                    *n += s;
                }
                acc = next;
            }
            self.levels[k] = acc;
        }
        Ok(())
    }

    /// Truncated logarithm `sum_{n>=1} (-1)^{n+1}/n (S - 1)^{⊗n}`; level 0 of the result is 0.
    pub fn log(&self) -> Result<Self> {
        if (self.levels[0][0] - 1.0).abs() > 1e-12 {
            return Err(Error::usage(format!(
                "logarithm needs level-0 coefficient 1, got {}",
                self.levels[0][0]
            )));
        }
        let mut x = self.clone();
        x.levels[0][0] = 0.0;
        let mut power = x.clone();
        let mut out = Self::zero(self.dim, self.depth);
        for n in 1..=self.depth {
            let coef = if n % 2 == 1 { 1.0 } else { -1.0 } / n as f64;
            out.axpy(coef, &power);
            if n < self.depth {
                power = power.mul(&x)?;
            }
        }
        Ok(out)
    }

    /// Truncated exponential `sum_n X^{⊗n}/n!` of an element with zero level 0.
    pub fn exp(&self) -> Result<Self> {
        if self.levels[0][0] != 0.0 {
            return Err(Error::usage("exponential expects a zero level-0 coefficient"));
        }
        let mut out = Self::identity(self.dim, self.depth);
        let mut power = Self::identity(self.dim, self.depth);
        let mut fact = 1.0;
        for n in 1..=self.depth {
            power = power.mul(self)?;
            fact *= n as f64;
            out.axpy(1.0 / fact, &power);
        }
        Ok(out)
    }

    fn axpy(&mut self, a: f64, other: &Self) {
        for (l, o) in self.levels.iter_mut().zip(&other.levels) {
            for (x, y) in l.iter_mut().zip(o) {
                *x += a * y;
            }
        }
    }

    /// Levels `0..=depth`, level-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.levels.iter().flatten().copied().collect()
    }

    /// Levels `1..=depth`, level-major (the log-signature layout).
    pub fn flatten_without_unit(&self) -> Vec<f64> {
        self.levels[1..].iter().flatten().copied().collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .zip(other.levels.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
