//! Small dense tensors of type (p,q) on a Euclidean space of dimension 1 or 2.
//!
//! Components are stored row-major with the `up` (contravariant) slots first and
//! the `down` (covariant) slots after them. Index raising and lowering is the
//! identity on components, so only the slot types matter for sign conventions.

use crate::error::{Error, Result};

/// Highest total rank `p + q` supported by the field machinery.
pub const MAX_RANK: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub up: usize,
    pub down: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

/// Number of components of a (p,q) tensor in `dim` dimensions.
pub fn n_components(dim: usize, up: usize, down: usize) -> usize {
    dim.pow((up + down) as u32)
}

fn unflatten(mut flat: usize, dim: usize, rank: usize, out: &mut [usize]) {
    for k in (0..rank).rev() {
        out[k] = flat % dim;
        flat /= dim;
    }
}

fn flatten(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

impl Tensor {
    pub fn zeros(dim: usize, up: usize, down: usize) -> Self {
        Self {
            up,
            down,
            dim,
            data: vec![0.0; n_components(dim, up, down)],
        }
    }

    pub fn from_data(dim: usize, up: usize, down: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_components(dim, up, down) {
            return Err(Error::Shape(format!(
                "tensor ({up},{down}) in {dim}D needs {} components, got {}",
                n_components(dim, up, down),
                data.len()
            )));
        }
        Ok(Self {
            up,
            down,
            dim,
            data,
        })
    }

    pub fn rank(&self) -> usize {
        self.up + self.down
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flatten(idx, self.dim)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let k = flatten(idx, self.dim);
        self.data[k] = v;
    }

    /// Full contraction `a : b` of two tensors with identical slot layout.
    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// The (p+1,q+1) tensor κ̂ that linearizes the Lie derivative in ∇u:
    ///
    /// κ̂^{a₁…a_p c}_{b₁…b_q d} = Σ_r κ^{a…}_{b₁…d…b_q} δ^c_{b_r} − Σ_r κ^{a₁…c…a_p}_{b…} δ^{a_r}_d.
    ///
    /// Slot order of the result is `[a₁…a_p, c, b₁…b_q, d]`.
    pub fn hat(&self) -> Tensor {
        let (p, q, n) = (self.up, self.down, self.dim);
        let mut out = Tensor::zeros(n, p + 1, q + 1);
        let rank = p + q + 2;
        let mut idx = vec![0usize; rank];
        let mut src = vec![0usize; p + q];
        for flat in 0..out.data.len() {
            unflatten(flat, n, rank, &mut idx);
            let a = &idx[..p];
            let c = idx[p];
            let b = &idx[p + 1..p + 1 + q];
            let d = idx[p + 1 + q];
            let mut v = 0.0;
            for r in 0..q {
                if b[r] == c {
                    src[..p].copy_from_slice(a);
                    src[p..].copy_from_slice(b);
                    src[p + r] = d;
                    v += self.get(&src);
                }
            }
            for r in 0..p {
                if a[r] == d {
                    src[..p].copy_from_slice(a);
                    src[p..].copy_from_slice(b);
                    src[r] = c;
                    v -= self.get(&src);
                }
            }
            out.data[flat] = v;
        }
        out
    }

    /// `self ∴ other^`: contracts every slot of `self` (type (p,q)) against the
    /// matching slots of the hat of `other` (type (q,p)), leaving a (1,1) tensor
    /// `[c][d]`, returned row-major as `dim × dim` values.
    pub fn hat_contract(&self, other: &Tensor) -> Result<Vec<f64>> {
        if self.up != other.down || self.down != other.up || self.dim != other.dim {
            return Err(Error::Shape(format!(
                "hat contraction needs dual types, got ({},{}) and ({},{})",
                self.up, self.down, other.up, other.down
            )));
        }
        let h = other.hat();
        let n = self.dim;
        // other is (q,p): hat slots are [q ups of other, c, p downs of other, d].
        let (p, q) = (self.up, self.down);
        let mut out = vec![0.0; n * n];
        let mut sidx = vec![0usize; p + q];
        let mut hidx = vec![0usize; p + q + 2];
        for flat in 0..self.data.len() {
            let v = self.data[flat];
            if v == 0.0 {
                continue;
            }
            unflatten(flat, n, p + q, &mut sidx);
            // self ups (a's) pair with hat downs, self downs (b's) pair with hat ups.
            hidx[..q].copy_from_slice(&sidx[p..]);
            hidx[q + 1..q + 1 + p].copy_from_slice(&sidx[..p]);
            for c in 0..n {
                hidx[q] = c;
                for d in 0..n {
                    hidx[q + 1 + p] = d;
                    out[c * n + d] += v * h.get(&hidx);
                }
            }
        }
        Ok(out)
    }

    /// `κ̂ : ∇u` with the convention κ̂^{…c}_{…d} ∂_c u^d, where `grad_u[c*dim+d] = ∂_c u^d`.
    pub fn hat_apply(&self, grad_u: &[f64]) -> Tensor {
        let h = self.hat();
        let (p, q, n) = (self.up, self.down, self.dim);
        let mut out = Tensor::zeros(n, p, q);
        let mut idx = vec![0usize; p + q];
        let mut hidx = vec![0usize; p + q + 2];
        for flat in 0..out.data.len() {
            unflatten(flat, n, p + q, &mut idx);
            hidx[..p].copy_from_slice(&idx[..p]);
            hidx[p + 1..p + 1 + q].copy_from_slice(&idx[p..]);
            let mut v = 0.0;
            for c in 0..n {
                hidx[p] = c;
                for d in 0..n {
                    hidx[p + 1 + q] = d;
                    v += h.get(&hidx) * grad_u[c * n + d];
                }
            }
            out.data[flat] = v;
        }
        out
    }
}

/// Reorders components stored as `[A][B]` (with `first` slots in A and
/// `second` slots in B) into `[B][A]`.
pub fn swap_slots(dim: usize, first: usize, second: usize, data: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    let nb = dim.pow(second as u32);
    let na = dim.pow(first as u32);
    for a in 0..na {
        for b in 0..nb {
            out[b * na + a] = data[a * nb + b];
        }
    }
    out
}

/// Outer product `a ⊗ b` of two vectors, row-major.
pub fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_of_one_form_density_gives_transpose_gradient_term() {
        let m = Tensor::from_data(2, 0, 1, vec![1.0, 2.0]).unwrap();
        let grad_u = [0.5, -1.0, 3.0, 2.0];
        let r = m.hat_apply(&grad_u);
        // (∇u)ᵀm: component b = m_d ∂_b u^d
        assert_eq!(r.data, vec![0.5 * 1.0 - 1.0 * 2.0, 3.0 * 1.0 + 2.0 * 2.0]);
    }

    #[test]
    fn hat_of_vector_gives_minus_pi_dot_grad_u() {
        let v = Tensor::from_data(2, 1, 0, vec![1.0, 2.0]).unwrap();
        let grad_u = [0.5, -1.0, 3.0, 2.0];
        let r = v.hat_apply(&grad_u);
        // -π^c ∂_c u^a
        assert_eq!(r.data, vec![-(0.5 + 2.0 * 3.0), -(-1.0 + 2.0 * 2.0)]);
    }

    #[test]
    fn scalar_hat_is_zero() {
        let s = Tensor::from_data(2, 0, 0, vec![4.0]).unwrap();
        assert!(s.hat().data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dual_hat_contractions_cancel() {
        let k = Tensor::from_data(2, 1, 1, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let p = Tensor::from_data(2, 1, 1, vec![0.3, 4.0, -1.0, 2.0]).unwrap();
        let a = p.hat_contract(&k).unwrap();
        let b = k.hat_contract(&p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).abs() < 1e-14);
        }
    }

    #[test]
    fn mismatched_types_are_rejected() {
        let a = Tensor::zeros(2, 1, 0);
        let b = Tensor::zeros(2, 1, 0);
        assert!(a.hat_contract(&b).is_err());
    }
}
