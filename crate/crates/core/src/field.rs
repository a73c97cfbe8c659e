//! Cell-centered tensor fields and per-face boundary fields.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tensor::{n_components, Tensor, MAX_RANK};

/// Whether a field transforms as a tensor field or as a tensor field density.
/// The distinction selects the Lie-derivative formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Function,
    Density,
}

#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    up: usize,
    down: usize,
    kind: Kind,
    /// Row-major per cell: `data[cell * ncomp + comp]`.
    data: Vec<f64>,
}

impl Field {
    pub fn new(
        grid: Arc<Grid>,
        up: usize,
        down: usize,
        kind: Kind,
        data: Vec<f64>,
    ) -> Result<Self> {
        if up + down > MAX_RANK {
            return Err(Error::Shape(format!(
                "rank ({up},{down}) exceeds p+q <= {MAX_RANK}"
            )));
        }
        let expected = grid.n_cells() * n_components(grid.dim, up, down);
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "field needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            grid,
            up,
            down,
            kind,
            data,
        })
    }

    pub fn zeros(grid: Arc<Grid>, up: usize, down: usize, kind: Kind) -> Self {
        let len = grid.n_cells() * n_components(grid.dim, up, down);
        Self {
            grid,
            up,
            down,
            kind,
            data: vec![0.0; len],
        }
    }

    /// Samples `f` at every cell center; `f` returns all components of the cell.
    pub fn from_fn(
        grid: Arc<Grid>,
        up: usize,
        down: usize,
        kind: Kind,
        mut f: impl FnMut([f64; 2]) -> Vec<f64>,
    ) -> Result<Self> {
        let nc = n_components(grid.dim, up, down);
        let mut data = Vec::with_capacity(grid.n_cells() * nc);
        for c in 0..grid.n_cells() {
            let v = f(grid.center(c));
            if v.len() != nc {
                return Err(Error::Shape(format!(
                    "sampler returned {} components, expected {nc}",
                    v.len()
                )));
            }
            data.extend(v);
        }
        Self::new(grid, up, down, kind, data)
    }

    pub fn scalar(grid: Arc<Grid>, kind: Kind, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let data = (0..grid.n_cells()).map(|c| f(grid.center(c))).collect();
        Self {
            grid,
            up: 0,
            down: 0,
            kind,
            data,
        }
    }

    /// Scalar field from per-cell values in cell order.
    pub fn scalar_from(grid: Arc<Grid>, kind: Kind, values: impl IntoIterator<Item = f64>) -> Self {
        let data: Vec<f64> = values.into_iter().collect();
        assert_eq!(data.len(), grid.n_cells(), "one value per cell");
        Self {
            grid,
            up: 0,
            down: 0,
            kind,
            data,
        }
    }

    pub fn vector(grid: Arc<Grid>, kind: Kind, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> Self {
        let dim = grid.dim;
        let mut data = Vec::with_capacity(grid.n_cells() * dim);
        for c in 0..grid.n_cells() {
            let v = f(grid.center(c));
            data.extend_from_slice(&v[..dim]);
        }
        Self {
            grid,
            up: 1,
            down: 0,
            kind,
            data,
        }
    }

    pub fn one_form(grid: Arc<Grid>, kind: Kind, f: impl FnMut([f64; 2]) -> [f64; 2]) -> Self {
        let mut v = Self::vector(grid, kind, f);
        v.up = 0;
        v.down = 1;
        v
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn kind(&self) -> Kind {
        self.kind
    }
    pub fn rank(&self) -> (usize, usize) {
        (self.up, self.down)
    }
    pub fn ncomp(&self) -> usize {
        n_components(self.grid.dim, self.up, self.down)
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
    pub fn value(&self, cell: usize) -> &[f64] {
        let nc = self.ncomp();
        &self.data[cell * nc..(cell + 1) * nc]
    }

    /// One component over all cells.
    pub fn component(&self, comp: usize) -> Vec<f64> {
        let nc = self.ncomp();
        self.data.iter().skip(comp).step_by(nc).copied().collect()
    }

    pub fn tensor_at(&self, cell: usize) -> Tensor {
        Tensor {
            up: self.up,
            down: self.down,
            dim: self.grid.dim,
            data: self.value(cell).to_vec(),
        }
    }

    /// Relabels the kind; the data is unchanged. Used where a formula produces a
    /// density from function-valued inputs (e.g. ρ·u).
    pub fn with_kind(mut self, kind: Kind) -> Self {
        self.kind = kind;
        self
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn check_compatible(&self, other: &Field) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        if self.rank() != other.rank() {
            return Err(Error::Shape(format!(
                "rank {:?} vs {:?}",
                self.rank(),
                other.rank()
            )));
        }
        if self.kind != other.kind {
            return Err(Error::Kind(format!("{:?} vs {:?}", self.kind, other.kind)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_compatible(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Field {
            data,
            ..self.clone()
        })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_compatible(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Field {
            data,
            ..self.clone()
        })
    }

    pub fn scale(&self, k: f64) -> Field {
        Field {
            data: self.data.iter().map(|a| a * k).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Values on the faces of one patch (or of the whole boundary when `patch` is `None`).
#[derive(Debug, Clone)]
pub struct BoundaryField {
    pub patch: Option<usize>,
    /// Global face indices, in the order of `data`.
    pub faces: Vec<usize>,
    pub ncomp: usize,
    pub data: Vec<f64>,
}

impl BoundaryField {
    pub fn new(
        patch: Option<usize>,
        faces: Vec<usize>,
        ncomp: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != faces.len() * ncomp {
            return Err(Error::Shape(format!(
                "boundary field has {} values for {} faces of {ncomp} components",
                data.len(),
                faces.len()
            )));
        }
        Ok(Self {
            patch,
            faces,
            ncomp,
            data,
        })
    }

    /// Scalar boundary field sampled from face geometry over the given faces.
    pub fn from_faces(
        grid: &Grid,
        patch: Option<usize>,
        mut f: impl FnMut(&crate::grid::Face) -> f64,
    ) -> Self {
        let faces: Vec<usize> = match patch {
            Some(p) => grid.patches[p].faces.clone(),
            None => (0..grid.faces.len()).collect(),
        };
        let data = faces.iter().map(|&k| f(&grid.faces[k])).collect();
        Self {
            patch,
            faces,
            ncomp: 1,
            data,
        }
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.data[k * self.ncomp..(k + 1) * self.ncomp]
    }
}
