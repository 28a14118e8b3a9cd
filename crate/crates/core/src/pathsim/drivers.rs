use std::io::Write;

use rand_distr::{Distribution, StandardNormal};

use super::grid::TimeGrid;
use super::rng::{stream, Purpose, StreamRng};
use crate::error::{Error, Result};
use crate::sigkit::{feature_dim, features, FeatureKind, SignatureStream};

/// Brownian drivers and initial states for `N2` common paths, each paired
/// with `N1` idiosyncratic paths.
///
/// Batch row `r = n2 * N1 + n1` is used for every per-particle array
/// produced from a block.
#[derive(Clone, Debug, PartialEq)]
pub struct DriverBlock {
    grid: TimeGrid,
    q: usize,
    dx: usize,
    n1: usize,
    n2: usize,
    seed: u64,
    /// `[n2][fine step][q]`
    common_fine: Vec<f64>,
    /// `[n2][coarse step][q]`, sums of fine sub-increments
    common_coarse: Vec<f64>,
    /// `[n2][n1][coarse step][q]`
    idio: Vec<f64>,
    /// `[n2][n1][dx]`
    initial: Vec<f64>,
}

/// Sampler for the initial law `mu_0`.
pub type InitialSampler<'a> = &'a dyn Fn(&mut StreamRng, &mut [f64]);

pub struct DriverSpec {
    pub grid: TimeGrid,
    pub q: usize,
    pub dx: usize,
    pub n1: usize,
    pub n2: usize,
}

fn gaussian_fill(rng: &mut StreamRng, out: &mut [f64], scale: f64) {
    for v in out {
        let z: f64 = StandardNormal.sample(rng);
        *v = scale * z;
    }
}

/// Sample a block. `epoch` distinguishes regenerations under the same seed.
pub fn generate_drivers(seed: u64, epoch: u64, spec: &DriverSpec, mu0: InitialSampler<'_>) -> Result<DriverBlock> {
    let DriverSpec { grid, q, dx, n1, n2 } = *spec;
    grid.validate()?;
    if q == 0 || n1 == 0 || n2 == 0 || dx == 0 {
        return Err(Error::config("driver counts and dimensions must be positive"));
    }
    let nf = grid.fine_steps();
    let nt = grid.n_steps;
    let ff = grid.fine_factor;
    let fine_sd = grid.fine_dt().sqrt();
    let coarse_sd = grid.dt().sqrt();

    let mut common_fine = vec![0.0; n2 * nf * q];
    let mut common_coarse = vec![0.0; n2 * nt * q];
    let mut idio = vec![0.0; n2 * n1 * nt * q];
    let mut initial = vec![0.0; n2 * n1 * dx];
    for j2 in 0..n2 {
        let mut rng = stream(seed, Purpose::CommonNoise, epoch, j2 as u64, 0);
        let fine = &mut common_fine[j2 * nf * q..(j2 + 1) * nf * q];
        gaussian_fill(&mut rng, fine, fine_sd);
        let coarse = &mut common_coarse[j2 * nt * q..(j2 + 1) * nt * q];
        for i in 0..nt {
            for s in 0..ff {
                let f = (i * ff + s) * q;
                for c in 0..q {
                    coarse[i * q + c] += fine[f + c];
                }
            }
        }
        for j1 in 0..n1 {
            let row = j2 * n1 + j1;
            let mut rng = stream(seed, Purpose::IdioNoise, epoch, j2 as u64, j1 as u64);
            gaussian_fill(&mut rng, &mut idio[row * nt * q..(row + 1) * nt * q], coarse_sd);
            let mut rng = stream(seed, Purpose::InitialState, epoch, j2 as u64, j1 as u64);
            mu0(&mut rng, &mut initial[row * dx..(row + 1) * dx]);
        }
    }
    Ok(DriverBlock {
        grid,
        q,
        dx,
        n1,
        n2,
        seed,
        common_fine,
        common_coarse,
        idio,
        initial,
    })
}

impl DriverBlock {
    /// Assemble a block from explicit arrays (layouts as documented on the fields).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        grid: TimeGrid,
        q: usize,
        dx: usize,
        n1: usize,
        n2: usize,
        common_fine: Vec<f64>,
        idio: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        let (nf, nt, ff) = (grid.fine_steps(), grid.n_steps, grid.fine_factor);
        if common_fine.len() != n2 * nf * q || idio.len() != n2 * n1 * nt * q || initial.len() != n2 * n1 * dx {
            return Err(Error::usage("driver arrays do not match the declared sizes"));
        }
        let mut common_coarse = vec![0.0; n2 * nt * q];
        for j2 in 0..n2 {
            for i in 0..nt {
                for s in 0..ff {
                    for c in 0..q {
                        common_coarse[(j2 * nt + i) * q + c] += common_fine[(j2 * nf + i * ff + s) * q + c];
                    }
                }
            }
        }
        Ok(Self {
            grid,
            q,
            dx,
            n1,
            n2,
            seed: 0,
            common_fine,
            common_coarse,
            idio,
            initial,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dx(&self) -> usize {
        self.dx
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn batch(&self) -> usize {
        self.n1 * self.n2
    }

    /// Common path that batch row `row` belongs to.
    pub fn common_index(&self, row: usize) -> usize {
        row / self.n1
    }

    pub fn common_fine(&self, n2: usize) -> &[f64] {
        let nf = self.grid.fine_steps() * self.q;
        &self.common_fine[n2 * nf..(n2 + 1) * nf]
    }

    pub fn common_fine_mut(&mut self, n2: usize) -> &mut [f64] {
        let nf = self.grid.fine_steps() * self.q;
        &mut self.common_fine[n2 * nf..(n2 + 1) * nf]
    }

    /// Recompute coarse common increments after editing fine ones.
    pub fn refresh_coarse(&mut self) {
        let rebuilt = Self::from_parts(
            self.grid,
            self.q,
            self.dx,
            self.n1,
            self.n2,
            std::mem::take(&mut self.common_fine),
            std::mem::take(&mut self.idio),
            std::mem::take(&mut self.initial),
        )
        .expect("sizes unchanged");
        let seed = self.seed;
        *self = Self { seed, ..rebuilt };
    }

    pub fn common_increment(&self, n2: usize, step: usize) -> &[f64] {
        let o = (n2 * self.grid.n_steps + step) * self.q;
        &self.common_coarse[o..o + self.q]
    }

    pub fn idio_increment(&self, row: usize, step: usize) -> &[f64] {
        let o = (row * self.grid.n_steps + step) * self.q;
        &self.idio[o..o + self.q]
    }

    pub fn initial_state(&self, row: usize) -> &[f64] {
        &self.initial[row * self.dx..(row + 1) * self.dx]
    }

    /// `[B x q]` idiosyncratic increments for one coarse step.
    pub fn idio_batch(&self, step: usize) -> Vec<f64> {
        (0..self.batch()).flat_map(|r| self.idio_increment(r, step).iter().copied()).collect()
    }

    /// `[B x q]` common increments for one coarse step, repeated across each block of `N1` rows.
    pub fn common_batch(&self, step: usize) -> Vec<f64> {
        (0..self.batch())
            .flat_map(|r| self.common_increment(self.common_index(r), step).iter().copied())
            .collect()
    }

    pub fn initial_batch(&self) -> Vec<f64> {
        self.initial.clone()
    }

    /// Common Brownian value `W^0_{t_i}` on the coarse grid.
    pub fn common_value(&self, n2: usize, node: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.q];
        for s in 0..node {
            for (a, b) in w.iter_mut().zip(self.common_increment(n2, s)) {
                *a += b;
            }
        }
        w
    }

    /// Idiosyncratic Brownian value `W_{t_i}` of a batch row.
    pub fn idio_value(&self, row: usize, node: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.q];
        for s in 0..node {
            for (a, b) in w.iter_mut().zip(self.idio_increment(row, s)) {
                *a += b;
            }
        }
        w
    }

    /// Write cumulative coarse paths as CSV: `step,n2,n1,w0_0..,w_0..`.
    pub fn dump_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "n2".into(), "n1".into()];
        header.extend((0..self.q).map(|c| format!("w0_{c}")));
        header.extend((0..self.q).map(|c| format!("w_{c}")));
        wtr.write_record(&header)?;
        for row in 0..self.batch() {
            let j2 = self.common_index(row);
            let mut w0 = vec![0.0; self.q];
            let mut w = vec![0.0; self.q];
            for step in 0..=self.grid.n_steps {
                if step > 0 {
                    for c in 0..self.q {
                        w0[c] += self.common_increment(j2, step - 1)[c];
                        w[c] += self.idio_increment(row, step - 1)[c];
                    }
                }
                let mut rec = vec![step.to_string(), j2.to_string(), (row % self.n1).to_string()];
                rec.extend(w0.iter().chain(&w).map(|v| v.to_string()));
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Flattened path features of each common path at every coarse node.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    kind: FeatureKind,
    depth: usize,
    dim: usize,
    n_nodes: usize,
    n2: usize,
    /// `[n2][node][dim]`
    data: Vec<f64>,
}

impl FeatureTable {
    /// Stream the signature of the time-augmented fine common path of every
    /// `n2`, recording features at each coarse node. Node `i` only sees fine
    /// increments inside `[0, t_i]`.
    pub fn from_block(block: &DriverBlock, kind: FeatureKind, depth: usize) -> Result<Self> {
        let grid = block.grid;
        let q = block.q;
        let dim = feature_dim(kind, q, depth);
        let n_nodes = grid.n_steps + 1;
        let mut data = Vec::with_capacity(block.n2 * n_nodes * dim);
        let mut delta = vec![0.0; q + 1];
        for j2 in 0..block.n2 {
            let fine = block.common_fine(j2);
            let mut s = SignatureStream::new(&vec![0.0; q + 1], depth);
            data.extend(features(s.signature(), kind)?);
            for i in 0..grid.n_steps {
                for sub in 0..grid.fine_factor {
                    let f = i * grid.fine_factor + sub;
                    delta[0] = grid.fine_time(f + 1) - grid.fine_time(f);
                    delta[1..].copy_from_slice(&fine[f * q..(f + 1) * q]);
                    s.push_increment(&delta)?;
                }
                data.extend(features(s.signature(), kind)?);
            }
        }
        Ok(Self {
            kind,
            depth,
            dim,
            n_nodes,
            n2: block.n2,
            data,
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn get(&self, n2: usize, node: usize) -> &[f64] {
        let o = (n2 * self.n_nodes + node) * self.dim;
        &self.data[o..o + self.dim]
    }

    /// `[B x dim]` features for a node, one row per particle of `block`.
    pub fn batch(&self, block: &DriverBlock, node: usize) -> Vec<f64> {
        (0..block.batch())
            .flat_map(|r| self.get(block.common_index(r), node).iter().copied())
            .collect()
    }

    /// Permute the common-path assignment (row `n2` gets the features of `perm[n2]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        let w = self.n_nodes * self.dim;
        for (j, &p) in perm.iter().enumerate() {
            out.data[j * w..(j + 1) * w].copy_from_slice(&self.data[p * w..(p + 1) * w]);
        }
        out
    }
}
