//! Eulerian unknowns at one instant.

use crate::error::{Error, Result};

/// Prognostic state: velocity, advected scalar densities, optional entropy
/// density and optional advected tensor (or magnetic field).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    /// Velocity per cell; the second component is zero in 1D.
    pub u: Vec<[f64; 2]>,
    /// `rho[k][cell]`: one entry per mass component (the water depth for shallow water).
    pub rho: Vec<Vec<f64>>,
    pub s: Option<Vec<f64>>,
    /// `tensor[cell * ncomp + comp]`.
    pub tensor: Option<Vec<f64>>,
}

impl State {
    pub fn n_cells(&self) -> usize {
        self.u.len()
    }

    pub fn entropy(&self, cell: usize) -> f64 {
        self.s.as_ref().map_or(0.0, |s| s[cell])
    }

    pub fn rho_at(&self, cell: usize) -> Vec<f64> {
        self.rho.iter().map(|r| r[cell]).collect()
    }

    pub fn tensor_at(&self, cell: usize, ncomp: usize) -> &[f64] {
        match &self.tensor {
            Some(t) => &t[cell * ncomp..(cell + 1) * ncomp],
            None => &[],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.u.iter().all(|v| v[0].is_finite() && v[1].is_finite())
            && self.rho.iter().flatten().all(|v| v.is_finite())
            && self.s.iter().flatten().all(|v| v.is_finite())
            && self.tensor.iter().flatten().all(|v| v.is_finite())
    }

    /// `self + k * other` over every prognostic array; the time is taken from `self`.
    pub fn axpy(&self, k: f64, other: &State) -> State {
        let lin =
            |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + k * y).collect::<Vec<_>>();
        State {
            t: self.t,
            u: self
                .u
                .iter()
                .zip(&other.u)
                .map(|(a, b)| [a[0] + k * b[0], a[1] + k * b[1]])
                .collect(),
            rho: self
                .rho
                .iter()
                .zip(&other.rho)
                .map(|(a, b)| lin(a, b))
                .collect(),
            s: self
                .s
                .as_ref()
                .zip(other.s.as_ref())
                .map(|(a, b)| lin(a, b)),
            tensor: self
                .tensor
                .as_ref()
                .zip(other.tensor.as_ref())
                .map(|(a, b)| lin(a, b)),
        }
    }

    pub fn check_shape(&self, n_cells: usize, n_rho: usize, tensor_ncomp: usize) -> Result<()> {
        let bad = self.u.len() != n_cells
            || self.rho.len() != n_rho
            || self.rho.iter().any(|r| r.len() != n_cells)
            || self.s.as_ref().is_some_and(|s| s.len() != n_cells)
            || match &self.tensor {
                Some(t) => t.len() != n_cells * tensor_ncomp || tensor_ncomp == 0,
                None => tensor_ncomp != 0,
            };
        if bad {
            return Err(Error::Shape(
                "state arrays do not match the grid and model".into(),
            ));
        }
        Ok(())
    }
}
