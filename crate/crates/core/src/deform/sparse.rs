//! Block-sparse symmetric normal equations with 12x12 node blocks, solved
//! by block-Jacobi preconditioned conjugate gradients.

use nalgebra::{SMatrix, SVector};

use super::energy::Residual;
use super::graph::NODE_PARAMS;
use crate::par;

pub type Block = SMatrix<f64, NODE_PARAMS, NODE_PARAMS>;
pub type BlockVec = SVector<f64, NODE_PARAMS>;

/// `J^T W J` and `J^T W r` in node blocks. Row `m` stores the blocks of the
/// nodes in `cols[m]` (sorted, including `m`).
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub cols: Vec<Vec<usize>>,
    pub blocks: Vec<Vec<Block>>,
    pub rhs: Vec<BlockVec>,
}

impl NormalEquations {
    /// Assembles from residuals; `weight(r)` is the term weight. Each row is
    /// summed in residual order, so the result does not depend on threads.
    pub fn assemble(neighbors: &[Vec<usize>], residuals: &[Residual], weight: impl Fn(&Residual) -> f64 + Sync) -> Self {
        let n = neighbors.len();
        let cols: Vec<Vec<usize>> = (0..n)
            .map(|m| {
                let mut c = neighbors[m].clone();
                c.push(m);
                c.sort_unstable();
                c.dedup();
                c
            })
            .collect();
        let mut incident: Vec<Vec<(u32, u8)>> = vec![Vec::new(); n];
        for (ri, r) in residuals.iter().enumerate() {
            for (bi, (s, _)) in r.blocks.iter().enumerate() {
                incident[*s].push((ri as u32, bi as u8));
            }
        }
        let rows = par::map_range(n, |m| {
            let mut row = vec![Block::zeros(); cols[m].len()];
            let mut g = BlockVec::zeros();
            for &(ri, bi) in &incident[m] {
                let r = &residuals[ri as usize];
                let w = weight(r);
                let jm = &r.blocks[bi as usize].1;
                let jmt = jm.transpose();
                g += w * jmt * r.value;
                for (s, js) in &r.blocks {
                    let slot = cols[m].binary_search(s).expect("residual couples neighbouring nodes");
                    row[slot] += w * jmt * js;
                }
            }
            (row, g)
        });
        let (blocks, rhs) = rows.into_iter().unzip();
        NormalEquations { cols, blocks, rhs }
    }

    pub fn node_count(&self) -> usize {
        self.cols.len()
    }

    fn diag_slot(&self, m: usize) -> usize {
        self.cols[m].binary_search(&m).expect("diagonal block present")
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.node_count() * NODE_PARAMS);
        for m in 0..self.node_count() {
            let b = &self.blocks[m][self.diag_slot(m)];
            d.extend((0..NODE_PARAMS).map(|i| b[(i, i)]));
        }
        d
    }

    /// `y = (H + diag(damp)) x`.
    pub fn apply(&self, damp: &[f64], x: &[BlockVec]) -> Vec<BlockVec> {
        par::map_range(self.node_count(), |m| {
            let mut y = BlockVec::zeros();
            for (slot, &c) in self.cols[m].iter().enumerate() {
                y += self.blocks[m][slot] * x[c];
            }
            for i in 0..NODE_PARAMS {
                y[i] += damp[m * NODE_PARAMS + i] * x[m][i];
            }
            y
        })
    }

    /// Solves `(H + diag(damp)) x = b` by preconditioned conjugate
    /// gradients. Returns `None` if the damped system is not positive
    /// definite.
    pub fn solve(&self, damp: &[f64], b: &[BlockVec], tol: f64, max_iter: usize) -> Option<Vec<BlockVec>> {
        let n = self.node_count();
        let precond: Vec<Block> = par::map_range(n, |m| {
            let mut d = self.blocks[m][self.diag_slot(m)];
            for i in 0..NODE_PARAMS {
                d[(i, i)] += damp[m * NODE_PARAMS + i];
            }
            d.cholesky().map(|c| c.inverse()).unwrap_or_else(|| {
                let mut id = Block::zeros();
                for i in 0..NODE_PARAMS {
                    id[(i, i)] = 1.0 / d[(i, i)].abs().max(1e-12);
                }
                id
            })
        });
        let dot = |a: &[BlockVec], b: &[BlockVec]| par::sum_range(a.len(), |i| a[i].dot(&b[i]));
        let mut x = vec![BlockVec::zeros(); n];
        let mut r: Vec<BlockVec> = b.to_vec();
        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            return Some(x);
        }
        let mut z: Vec<BlockVec> = (0..n).map(|m| precond[m] * r[m]).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..max_iter {
            let ap = self.apply(damp, &p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return None;
            }
            let alpha = rz / pap;
            for m in 0..n {
                x[m] += alpha * p[m];
                r[m] -= alpha * ap[m];
            }
            if dot(&r, &r).sqrt() <= tol * bnorm {
                break;
            }
            z = (0..n).map(|m| precond[m] * r[m]).collect();
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for m in 0..n {
                p[m] = z[m] + beta * p[m];
            }
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::energy::{NodeJac, Term};
    use crate::geometry::Vec3;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_dense_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 4;
        let neighbors = vec![vec![1], vec![0, 2], vec![1, 3], vec![2]];
        let mut residuals = Vec::new();
        for _ in 0..40 {
            let a = rng.random_range(0..n - 1);
            let mut blocks = Vec::new();
            for s in [a, a + 1] {
                let j = NodeJac::from_fn(|_, _| rng.random_range(-1.0..1.0));
                blocks.push((s, j));
            }
            residuals.push(Residual {
                term: Term::Reg,
                dim: 3,
                value: Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                scale: 1.0,
                blocks,
            });
        }
        let ne = NormalEquations::assemble(&neighbors, &residuals, |_| 2.0);
        let np = n * NODE_PARAMS;
        let mut dense = DMatrix::zeros(np, np);
        let mut g = DVector::zeros(np);
        for r in &residuals {
            let mut jrow = DMatrix::zeros(3, np);
            for (s, j) in &r.blocks {
                jrow.view_mut((0, s * NODE_PARAMS), (3, NODE_PARAMS)).copy_from(j);
            }
            dense += 2.0 * jrow.transpose() * &jrow;
            g += 2.0 * jrow.transpose() * DVector::from_column_slice(r.value.as_slice());
        }
        let damp = vec![0.1; np];
        for i in 0..np {
            dense[(i, i)] += 0.1;
        }
        let b: Vec<BlockVec> = ne.rhs.clone();
        let x = ne.solve(&damp, &b, 1e-12, 1000).unwrap();
        let xd = dense.cholesky().unwrap().solve(&g);
        for m in 0..n {
            for i in 0..NODE_PARAMS {
                assert!((x[m][i] - xd[m * NODE_PARAMS + i]).abs() < 1e-8);
            }
        }
    }
}
