use crate::error::{Error, Result};

/// Particle states grouped by coarse node and common path.
///
/// The `N1` particles sharing common path `n2` at node `i` form the empirical
/// conditional law used as the Step-2 training target input.
#[derive(Clone, Debug, PartialEq)]
pub struct CondEnsemble {
    n_nodes: usize,
    n2: usize,
    n1: usize,
    dx: usize,
    dy: usize,
    /// `[node][n2][n1][dx]`
    x: Vec<f64>,
    /// `[node][n2][n1][dy]`
    y: Vec<f64>,
}

/// The `N1` particles of one `(node, n2)` pair.
#[derive(Clone, Copy, Debug)]
pub struct Cloud<'a> {
    pub n1: usize,
    pub dx: usize,
    pub dy: usize,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

impl<'a> Cloud<'a> {
    pub fn x(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.dx..(i + 1) * self.dx]
    }

    pub fn y(&self, i: usize) -> &'a [f64] {
        &self.y[i * self.dy..(i + 1) * self.dy]
    }

    pub fn mean_x(&self) -> Vec<f64> {
        mean_rows(self.x, self.dx, self.n1)
    }

    pub fn mean_y(&self) -> Vec<f64> {
        mean_rows(self.y, self.dy, self.n1)
    }

    pub fn var_x(&self) -> Vec<f64> {
        let m = self.mean_x();
        let mut v = vec![0.0; self.dx];
        for i in 0..self.n1 {
            for (c, xv) in self.x(i).iter().enumerate() {
                v[c] += (xv - m[c]).powi(2);
            }
        }
        v.iter().map(|s| s / self.n1 as f64).collect()
    }
}

fn mean_rows(data: &[f64], width: usize, n: usize) -> Vec<f64> {
    let mut m = vec![0.0; width];
    for row in data.chunks(width) {
        for (a, b) in m.iter_mut().zip(row) {
            *a += b;
        }
    }
    m.iter().map(|s| s / n as f64).collect()
}

impl CondEnsemble {
    /// Group per-node batch arrays (`[B x dx]` and `[B x dy]`, `B = N2 * N1`,
    /// row `n2 * N1 + n1`) into conditional clouds.
    pub fn from_nodes(x_nodes: &[Vec<f64>], y_nodes: &[Vec<f64>], n2: usize, n1: usize, dx: usize, dy: usize) -> Result<Self> {
        if x_nodes.len() != y_nodes.len() || x_nodes.is_empty() {
            return Err(Error::Internal(format!(
                "ensemble needs matching node lists, got {} and {}",
                x_nodes.len(),
                y_nodes.len()
            )));
        }
        let b = n1 * n2;
        for (i, (xn, yn)) in x_nodes.iter().zip(y_nodes).enumerate() {
            if xn.len() != b * dx || yn.len() != b * dy {
                return Err(Error::Internal(format!(
                    "ragged ensemble at node {i}: {} x-values and {} y-values for {b} particles",
                    xn.len(),
                    yn.len()
                )));
            }
        }
        Ok(Self {
            n_nodes: x_nodes.len(),
            n2,
            n1,
            dx,
            dy,
            x: x_nodes.concat(),
            y: y_nodes.concat(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn dx(&self) -> usize {
        self.dx
    }

    pub fn dy(&self) -> usize {
        self.dy
    }

    pub fn cloud(&self, node: usize, n2: usize) -> Cloud<'_> {
        let bx = (node * self.n2 + n2) * self.n1 * self.dx;
        let by = (node * self.n2 + n2) * self.n1 * self.dy;
        Cloud {
            n1: self.n1,
            dx: self.dx,
            dy: self.dy,
            x: &self.x[bx..bx + self.n1 * self.dx],
            y: &self.y[by..by + self.n1 * self.dy],
        }
    }

    /// Reorder particles inside each common block; `perm[n2]` is a permutation of `0..N1`.
    pub fn permute_within_blocks(&self, perm: &[Vec<usize>]) -> Self {
        let mut out = self.clone();
        for node in 0..self.n_nodes {
            for (j2, p) in perm.iter().enumerate() {
                for (dst, &src) in p.iter().enumerate() {
                    let base = (node * self.n2 + j2) * self.n1;
                    out.x[(base + dst) * self.dx..(base + dst + 1) * self.dx]
                        .copy_from_slice(&self.x[(base + src) * self.dx..(base + src + 1) * self.dx]);
                    out.y[(base + dst) * self.dy..(base + dst + 1) * self.dy]
                        .copy_from_slice(&self.y[(base + src) * self.dy..(base + src + 1) * self.dy]);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_particle_is_dirac() {
        let x = vec![vec![0.5, -1.0]];
        let y = vec![vec![2.0, 3.0]];
        let e = CondEnsemble::from_nodes(&x, &y, 2, 1, 1, 1).unwrap();
        assert_eq!(e.cloud(0, 1).mean_x(), vec![-1.0]);
        assert_eq!(e.cloud(0, 1).var_x(), vec![0.0]);
    }

    #[test]
    fn identical_particles_have_zero_variance() {
        let x = vec![vec![1.5; 4 * 2]];
        let y = vec![vec![0.0; 4]];
        let e = CondEnsemble::from_nodes(&x, &y, 1, 4, 2, 1).unwrap();
        assert_eq!(e.cloud(0, 0).mean_x(), vec![1.5, 1.5]);
        assert_eq!(e.cloud(0, 0).var_x(), vec![0.0, 0.0]);
    }

    #[test]
    fn ragged_input_is_internal_error() {
        let x = vec![vec![0.0; 4], vec![0.0; 3]];
        let y = vec![vec![0.0; 4], vec![0.0; 4]];
        assert!(matches!(
            CondEnsemble::from_nodes(&x, &y, 2, 2, 1, 1),
            Err(Error::Internal(_))
        ));
    }
}
