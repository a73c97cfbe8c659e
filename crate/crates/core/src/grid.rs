//! Uniform cell-centered grids in one or two dimensions with named boundary patches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum cells per axis required by the second-order one-sided stencils.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }

    /// +1 for the high end of the axis, -1 for the low end.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left | Side::Bottom => -1.0,
            Side::Right | Side::Top => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// One boundary face: the cell it closes, its outward unit normal and area element.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub cell: usize,
    pub side: Side,
    pub normal: [f64; 2],
    pub da: f64,
    pub center: [f64; 2],
    pub patch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub name: String,
    /// Indices into [`Grid::faces`].
    pub faces: Vec<usize>,
}

/// Declares a patch as the part of one side whose tangential coordinate lies in `range`
/// (the whole side when `range` is `None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub name: String,
    pub side: Side,
    #[serde(default)]
    pub range: Option<[f64; 2]>,
}

impl PatchSpec {
    pub fn side(side: Side) -> Self {
        Self {
            name: side.name().to_string(),
            side,
            range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub cells: [usize; 2],
    pub dx: [f64; 2],
    pub faces: Vec<Face>,
    pub patches: Vec<Patch>,
    side_faces: [Vec<usize>; 4],
}

impl Grid {
    /// Builds a uniform grid. An empty `patches` list uses one patch per side
    /// (`left`, `right` and in 2D `bottom`, `top`).
    pub fn new(
        dim: usize,
        extents: &[[f64; 2]],
        cells: &[usize],
        patches: &[PatchSpec],
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if extents.len() != dim || cells.len() != dim {
            return Err(Error::Grid(format!(
                "expected {dim} extents and cell counts"
            )));
        }
        let mut lo = [0.0, 0.0];
        let mut hi = [1.0, 1.0];
        let mut n = [1usize, 1];
        for ax in 0..dim {
            let [a, b] = extents[ax];
            if !(b - a > 0.0) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Grid(format!(
                    "non-positive extent [{a}, {b}] on axis {ax}"
                )));
            }
            if cells[ax] < MIN_CELLS {
                return Err(Error::Grid(format!(
                    "axis {ax} has {} cells; the second-order stencil needs at least {MIN_CELLS}",
                    cells[ax]
                )));
            }
            lo[ax] = a;
            hi[ax] = b;
            n[ax] = cells[ax];
        }
        let dx = [(hi[0] - lo[0]) / n[0] as f64, (hi[1] - lo[1]) / n[1] as f64];

        let sides: &[Side] = if dim == 1 {
            &Side::ALL[..2]
        } else {
            &Side::ALL
        };
        let specs: Vec<PatchSpec> = if patches.is_empty() {
            sides.iter().map(|&s| PatchSpec::side(s)).collect()
        } else {
            patches.to_vec()
        };
        for s in &specs {
            if !sides.contains(&s.side) {
                return Err(Error::Grid(format!(
                    "patch '{}' lies on side '{}' absent in {dim}D",
                    s.name,
                    s.side.name()
                )));
            }
        }

        let mut grid = Grid {
            dim,
            lo,
            hi,
            cells: n,
            dx,
            faces: Vec::new(),
            patches: specs
                .iter()
                .map(|s| Patch {
                    name: s.name.clone(),
                    faces: Vec::new(),
                })
                .collect(),
            side_faces: Default::default(),
        };
        let mut seen = std::collections::BTreeSet::new();
        for s in &specs {
            if !seen.insert(s.name.clone()) {
                return Err(Error::Grid(format!("duplicate patch name '{}'", s.name)));
            }
        }

        for &side in sides {
            let axis = side.axis();
            let along = 1 - axis;
            let count = if dim == 1 { 1 } else { n[along] };
            for k in 0..count {
                let (i, j) = match side {
                    Side::Left => (0, k),
                    Side::Right => (n[0] - 1, k),
                    Side::Bottom => (k, 0),
                    Side::Top => (k, n[1] - 1),
                };
                let cell = j * n[0] + i;
                let mut center = grid.center(cell);
                center[axis] = if side.sign() < 0.0 {
                    lo[axis]
                } else {
                    hi[axis]
                };
                let mut normal = [0.0, 0.0];
                normal[axis] = side.sign();
                let da = if dim == 1 { 1.0 } else { dx[along] };
                let t = center[along];
                let owners: Vec<usize> = specs
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| {
                        s.side == side && in_range(s.range, t, lo[along], hi[along], dim)
                    })
                    .map(|(p, _)| p)
                    .collect();
                if owners.len() != 1 {
                    return Err(Error::Grid(format!(
                        "boundary face at ({:.4}, {:.4}) on side '{}' belongs to {} patches; patches must partition the boundary",
                        center[0],
                        center[1],
                        side.name(),
                        owners.len()
                    )));
                }
                let fidx = grid.faces.len();
                grid.faces.push(Face {
                    cell,
                    side,
                    normal,
                    da,
                    center,
                    patch: owners[0],
                });
                grid.patches[owners[0]].faces.push(fidx);
                grid.side_faces[side.slot()].push(fidx);
            }
        }
        if let Some(p) = grid.patches.iter().find(|p| p.faces.is_empty()) {
            return Err(Error::Grid(format!("patch '{}' contains no faces", p.name)));
        }
        Ok(grid)
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.dx[0]
        } else {
            self.dx[0] * self.dx[1]
        }
    }

    /// Smallest spacing over the active axes.
    pub fn min_dx(&self) -> f64 {
        if self.dim == 1 {
            self.dx[0]
        } else {
            self.dx[0].min(self.dx[1])
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    pub fn ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.cells[0], cell / self.cells[0])
    }

    pub fn center(&self, cell: usize) -> [f64; 2] {
        let (i, j) = self.ij(cell);
        let x = self.lo[0] + (i as f64 + 0.5) * self.dx[0];
        let y = if self.dim == 1 {
            0.0
        } else {
            self.lo[1] + (j as f64 + 0.5) * self.dx[1]
        };
        [x, y]
    }

    pub fn patch(&self, name: &str) -> Option<(usize, &Patch)> {
        self.patches
            .iter()
            .enumerate()
            .find(|(_, p)| p.name == name)
    }

    /// Global face index of the k-th face along `side` (k counts cells along the side).
    pub fn side_face(&self, side: Side, k: usize) -> Option<usize> {
        self.side_faces[side.slot()].get(k).copied()
    }

    /// Total boundary measure: perimeter in 2D, number of endpoints in 1D.
    pub fn boundary_measure(&self) -> f64 {
        self.faces.iter().map(|f| f.da).sum()
    }

    pub fn domain_volume(&self) -> f64 {
        self.cell_volume() * self.n_cells() as f64
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        (0..self.dim).all(|ax| x[ax] >= self.lo[ax] && x[ax] <= self.hi[ax])
    }
}

fn in_range(range: Option<[f64; 2]>, t: f64, lo: f64, hi: f64, dim: usize) -> bool {
    if dim == 1 {
        return true;
    }
    match range {
        None => true,
        Some([a, b]) => t >= a && (t < b || (b >= hi && t <= hi)) && t >= lo,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_unit_grid() {
        let g = Grid::new(1, &[[0.0, 1.0]], &[8], &[]).unwrap();
        assert_eq!(g.dx[0], 0.125);
        assert_eq!(g.faces.len(), 2);
        assert_eq!(g.faces[0].normal, [-1.0, 0.0]);
        assert_eq!(g.faces[1].normal, [1.0, 0.0]);
        assert_eq!(g.boundary_measure(), 2.0);
    }

    #[test]
    fn two_dimensional_faces_and_perimeter() {
        let g = Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[8, 8], &[]).unwrap();
        assert_eq!(g.faces.len(), 32);
        assert!(g.faces.iter().all(|f| f.da == 0.125));
        assert!((g.boundary_measure() - 4.0).abs() < 1e-14);
        for f in &g.faces {
            let n = (f.normal[0].powi(2) + f.normal[1].powi(2)).sqrt();
            assert_eq!(n, 1.0);
        }
    }

    #[test]
    fn too_few_cells_is_rejected() {
        let err = Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[2, 8], &[]).unwrap_err();
        assert!(err.to_string().contains("at least 4"));
    }

    #[test]
    fn non_positive_extent_is_rejected() {
        assert!(Grid::new(1, &[[1.0, 1.0]], &[8], &[]).is_err());
    }

    #[test]
    fn split_side_patches_partition_boundary() {
        let specs = vec![
            PatchSpec {
                name: "in_low".into(),
                side: Side::Left,
                range: Some([0.0, 0.5]),
            },
            PatchSpec {
                name: "in_high".into(),
                side: Side::Left,
                range: Some([0.5, 1.0]),
            },
            PatchSpec::side(Side::Right),
            PatchSpec::side(Side::Bottom),
            PatchSpec::side(Side::Top),
        ];
        let g = Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[8, 8], &specs).unwrap();
        assert_eq!(g.patch("in_low").unwrap().1.faces.len(), 4);
        assert_eq!(g.patch("in_high").unwrap().1.faces.len(), 4);
    }

    #[test]
    fn uncovered_faces_are_rejected() {
        let specs = vec![PatchSpec::side(Side::Left), PatchSpec::side(Side::Right)];
        assert!(Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[8, 8], &specs).is_err());
    }
}
