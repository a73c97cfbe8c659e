//! Lagrangian side of the open-fluid description, checked numerically:
//! flow maps, pushforward densities and the boundary Piola identity.

use std::sync::Arc;

use crate::dynamics::Solver;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sources::BoundaryEval;
use crate::state::State;

/// A velocity field with its divergence, evaluated at `(t, x)`.
pub trait VelocityField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: [f64; 2]) -> Result<([f64; 2], f64)>;
}

/// Closed-form velocity; `f` returns `(u, div u)`.
pub struct Analytic<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, [f64; 2]) -> ([f64; 2], f64)> VelocityField for Analytic<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, t: f64, x: [f64; 2]) -> Result<([f64; 2], f64)> {
        Ok((self.f)(t, x))
    }
}

/// Stored velocity frames on the nodes `[lo, cell centers…, hi]` of each axis,
/// where the end nodes carry the boundary face values. Interpolation is
/// multilinear in space and linear in time; outside the domain the boundary
/// node value is extended up to `margin`.
#[derive(Debug, Clone)]
pub struct Frames {
    dim: usize,
    nodes: [Vec<f64>; 2],
    margin: f64,
    lo: [f64; 2],
    hi: [f64; 2],
    pub times: Vec<f64>,
    /// `[frame][node][comp]` with nodes row-major (axis 0 fastest).
    u: Vec<Vec<[f64; 2]>>,
    div: Vec<Vec<f64>>,
}

/// Derivative at `x[i]` of the quadratic through three nodes.
fn d3(x: [f64; 3], y: [f64; 3], at: usize) -> f64 {
    let xa = x[at];
    let mut d = 0.0;
    for j in 0..3 {
        // derivative of the j-th Lagrange basis polynomial
        let mut s = 0.0;
        for k in 0..3 {
            if k == j {
                continue;
            }
            let mut p = 1.0 / (x[j] - x[k]);
            for l in 0..3 {
                if l != j && l != k {
                    p *= (xa - x[l]) / (x[j] - x[l]);
                }
            }
            s += p;
        }
        d += y[j] * s;
    }
    d
}

fn deriv_line(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let s = i.clamp(1, n - 2) - 1;
            d3(
                [x[s], x[s + 1], x[s + 2]],
                [y[s], y[s + 1], y[s + 2]],
                i - s,
            )
        })
        .collect()
}

impl Frames {
    pub fn new(grid: &Grid, margin: f64) -> Self {
        let mut nodes = [vec![0.0], vec![0.0]];
        for a in 0..grid.dim {
            let mut v = vec![grid.lo[a]];
            v.extend((0..grid.cells[a]).map(|i| grid.lo[a] + (i as f64 + 0.5) * grid.dx[a]));
            v.push(grid.hi[a]);
            nodes[a] = v;
        }
        Self {
            dim: grid.dim,
            nodes,
            margin,
            lo: [grid.lo[0], if grid.dim == 2 { grid.lo[1] } else { 0.0 }],
            hi: [grid.hi[0], if grid.dim == 2 { grid.hi[1] } else { 0.0 }],
            times: Vec::new(),
            u: Vec::new(),
            div: Vec::new(),
        }
    }

    fn nn(&self) -> [usize; 2] {
        [self.nodes[0].len(), self.nodes[1].len()]
    }

    /// Appends the velocity of `state` with boundary values from `be`.
    pub fn push(&mut self, grid: &Grid, state: &State, be: &BoundaryEval) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(state.t > last) {
                return Err(Error::Config(
                    "frames must be pushed in increasing time".into(),
                ));
            }
        }
        let [n0, n1] = self.nn();
        let mut u = vec![[f64::NAN; 2]; n0 * n1];
        let at = |i: usize, j: usize| j * n0 + i;
        let (o0, o1) = (1, if self.dim == 2 { 1 } else { 0 });
        for c in 0..grid.n_cells() {
            let (i, j) = grid.ij(c);
            u[at(i + o0, j + o1)] = state.u[c];
        }
        for (k, f) in grid.faces.iter().enumerate() {
            let (i, j) = grid.ij(f.cell);
            let (mut a, mut b) = (i + o0, j + o1);
            match f.side.axis() {
                0 => a = if f.side.sign() < 0.0 { 0 } else { n0 - 1 },
                _ => b = if f.side.sign() < 0.0 { 0 } else { n1 - 1 },
            }
            u[at(a, b)] = be.faces[k].state.u;
        }
        if self.dim == 2 {
            for (a, b, da, db) in [
                (0, 0, 1, 1),
                (n0 - 1, 0, n0 - 2, 1),
                (0, n1 - 1, 1, n1 - 2),
                (n0 - 1, n1 - 1, n0 - 2, n1 - 2),
            ] {
                let p = u[at(da, b)];
                let q = u[at(a, db)];
                u[at(a, b)] = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            }
        }
        let mut div = vec![0.0; n0 * n1];
        for j in 0..n1 {
            let y: Vec<f64> = (0..n0).map(|i| u[at(i, j)][0]).collect();
            for (i, d) in deriv_line(&self.nodes[0], &y).into_iter().enumerate() {
                div[at(i, j)] += d;
            }
        }
        if self.dim == 2 {
            for i in 0..n0 {
                let y: Vec<f64> = (0..n1).map(|j| u[at(i, j)][1]).collect();
                for (j, d) in deriv_line(&self.nodes[1], &y).into_iter().enumerate() {
                    div[at(i, j)] += d;
                }
            }
        }
        self.times.push(state.t);
        self.u.push(u);
        self.div.push(div);
        Ok(())
    }

    fn locate(&self, axis: usize, x: f64) -> Result<(usize, f64)> {
        let nd = &self.nodes[axis];
        let (lo, hi) = (self.lo[axis], self.hi[axis]);
        if x < lo - self.margin - 1e-12 || x > hi + self.margin + 1e-12 {
            return Err(Error::Degenerate(format!(
                "position {x} left the stored velocity's bounding box"
            )));
        }
        let xc = x.clamp(lo, hi);
        let k = nd.partition_point(|&v| v <= xc).clamp(1, nd.len() - 1) - 1;
        Ok((k, (xc - nd[k]) / (nd[k + 1] - nd[k])))
    }

    fn spatial(&self, frame: usize, x: [f64; 2]) -> Result<([f64; 2], f64)> {
        let n0 = self.nodes[0].len();
        let (i, a) = self.locate(0, x[0])?;
        let (j, b, jn) = if self.dim == 2 {
            let (j, b) = self.locate(1, x[1])?;
            (j, b, 1)
        } else {
            (0, 0.0, 0)
        };
        let u = &self.u[frame];
        let dv = &self.div[frame];
        let w = [
            ((1.0 - a) * (1.0 - b), i, j),
            (a * (1.0 - b), i + 1, j),
            ((1.0 - a) * b, i, j + jn),
            (a * b, i + 1, j + jn),
        ];
        let mut out = [0.0; 2];
        let mut d = 0.0;
        for (wt, p, q) in w {
            if wt == 0.0 {
                continue;
            }
            let k = q * n0 + p;
            out[0] += wt * u[k][0];
            out[1] += wt * u[k][1];
            d += wt * dv[k];
        }
        Ok((out, d))
    }
}

impl VelocityField for Frames {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: [f64; 2]) -> Result<([f64; 2], f64)> {
        let ts = &self.times;
        if ts.is_empty() || t < ts[0] - 1e-12 || t > ts[ts.len() - 1] + 1e-12 {
            return Err(Error::Degenerate(format!(
                "time {t} is outside the stored frames"
            )));
        }
        if ts.len() == 1 {
            return self.spatial(0, x);
        }
        let k = ts.partition_point(|&v| v <= t).clamp(1, ts.len() - 1) - 1;
        let a = ((t - ts[k]) / (ts[k + 1] - ts[k])).clamp(0.0, 1.0);
        let (u0, d0) = self.spatial(k, x)?;
        let (u1, d1) = self.spatial(k + 1, x)?;
        Ok((
            [(1.0 - a) * u0[0] + a * u1[0], (1.0 - a) * u0[1] + a * u1[1]],
            (1.0 - a) * d0 + a * d1,
        ))
    }
}

/// Label positions, Jacobians and carried material densities at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub dim: usize,
    pub t: f64,
    pub labels: Vec<[f64; 2]>,
    pub pos: Vec<[f64; 2]>,
    pub jac: Vec<f64>,
    /// Material density ϱ carried by each label.
    pub varrho: Vec<f64>,
    /// Box `[lo, hi]` per axis; steps crossing its boundary are split at the crossing.
    pub domain: Option<[[f64; 2]; 2]>,
}

pub type Source = dyn Fn(f64, [f64; 2]) -> f64;

impl FlowMap {
    /// Identity map at `t0` with `Jφ = 1`.
    pub fn identity(dim: usize, t0: f64, labels: Vec<[f64; 2]>, varrho: Vec<f64>) -> Result<Self> {
        if varrho.len() != labels.len() {
            return Err(Error::Shape("one material density per label".into()));
        }
        let n = labels.len();
        Ok(Self {
            dim,
            t: t0,
            pos: labels.clone(),
            labels,
            jac: vec![1.0; n],
            varrho,
            domain: None,
        })
    }

    pub fn with_domain(mut self, domain: [[f64; 2]; 2]) -> Self {
        self.domain = Some(domain);
        self
    }

    /// Signed distance to the domain boundary, positive inside.
    fn depth(&self, x: [f64; 2]) -> Option<f64> {
        let b = self.domain?;
        Some(
            (0..self.dim)
                .map(|c| (x[c] - b[c][0]).min(b[c][1] - x[c]))
                .fold(f64::INFINITY, f64::min),
        )
    }

    /// One RK4 step of `φ̇ = u(t,φ)`, `J̇ = (div u∘φ) J`, `ϱ̇ = (θ∘φ) J`.
    pub fn step(
        &mut self,
        field: &dyn VelocityField,
        dt: f64,
        theta: Option<&Source>,
    ) -> Result<()> {
        let t = self.t;
        for i in 0..self.pos.len() {
            let y0 = (self.pos[i], self.jac[i], self.varrho[i]);
            let mut y = rk4(self.dim, field, theta, t, dt, y0)?;
            if let (Some(d0), Some(d1)) = (self.depth(y0.0), self.depth(y.0)) {
                if (d0 > 0.0) != (d1 > 0.0) && d0 != d1 {
                    let tau = (dt * d0 / (d0 - d1)).clamp(0.0, dt);
                    let mid = rk4(self.dim, field, theta, t, tau, y0)?;
                    y = rk4(self.dim, field, theta, t + tau, dt - tau, mid)?;
                }
            }
            (self.pos[i], self.jac[i], self.varrho[i]) = y;
            if !(self.jac[i] > 0.0) {
                return Err(Error::Degenerate(format!(
                    "label {i} lost orientation (Jφ = {})",
                    self.jac[i]
                )));
            }
        }
        self.t += dt;
        Ok(())
    }

    /// Advances to `t1` with steps of at most `dt`.
    pub fn advance(
        &mut self,
        field: &dyn VelocityField,
        t1: f64,
        dt: f64,
        theta: Option<&Source>,
    ) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Config("label step must be positive".into()));
        }
        let n = ((t1 - self.t) / dt - 1e-9).ceil().max(0.0) as usize;
        let h = if n > 0 { (t1 - self.t) / n as f64 } else { 0.0 };
        for _ in 0..n {
            self.step(field, h, theta)?;
        }
        self.t = t1;
        Ok(())
    }
}

type LabelState = ([f64; 2], f64, f64);

fn rk4(
    dim: usize,
    field: &dyn VelocityField,
    theta: Option<&Source>,
    t: f64,
    dt: f64,
    y: LabelState,
) -> Result<LabelState> {
    if dt == 0.0 {
        return Ok(y);
    }
    let rhs = |t: f64, x: [f64; 2], j: f64| -> Result<([f64; 2], f64, f64)> {
        let (u, d) = field.eval(t, x)?;
        Ok((u, d * j, theta.map_or(0.0, |f| f(t, x)) * j))
    };
    let (x0, j0, r0) = y;
    let add = |x: [f64; 2], k: [f64; 2], h: f64| [x[0] + h * k[0], x[1] + h * k[1]];
    let (a1, b1, c1) = rhs(t, x0, j0)?;
    let (a2, b2, c2) = rhs(t + 0.5 * dt, add(x0, a1, 0.5 * dt), j0 + 0.5 * dt * b1)?;
    let (a3, b3, c3) = rhs(t + 0.5 * dt, add(x0, a2, 0.5 * dt), j0 + 0.5 * dt * b2)?;
    let (a4, b4, c4) = rhs(t + dt, add(x0, a3, dt), j0 + dt * b3)?;
    let w = dt / 6.0;
    let mut x = x0;
    for c in 0..dim {
        x[c] += w * (a1[c] + 2.0 * a2[c] + 2.0 * a3[c] + a4[c]);
    }
    Ok((
        x,
        j0 + w * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
        r0 + w * (c1 + 2.0 * c2 + 2.0 * c3 + c4),
    ))
}

/// RK4 flow map from `t0` to `t1`.
pub fn integrate_flow_map(
    field: &dyn VelocityField,
    labels: Vec<[f64; 2]>,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<FlowMap> {
    let n = labels.len();
    let mut fm = FlowMap::identity(field.dim(), t0, labels, vec![0.0; n])?;
    fm.advance(field, t1, dt, None)?;
    Ok(fm)
}

/// Cell-center density estimated from the labels of a 1D map.
#[derive(Debug, Clone, PartialEq)]
pub struct Pushforward {
    pub rho: Vec<f64>,
    /// Cells holding fewer than [`MIN_LABELS_PER_CELL`] labels.
    pub undersampled: Vec<usize>,
}

pub const MIN_LABELS_PER_CELL: usize = 4;

/// `ρ = (ϱ∘φ⁻¹) Jφ⁻¹` at the cell centers, linearly interpolated between the
/// labels that bracket each center.
pub fn pushforward_density(fm: &FlowMap, grid: &Grid) -> Result<Pushforward> {
    if grid.dim != 1 || fm.dim != 1 {
        return Err(Error::Shape(
            "pushforward is implemented for one-dimensional maps".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..fm.pos.len()).collect();
    idx.sort_by(|&a, &b| fm.pos[a][0].total_cmp(&fm.pos[b][0]));
    let xs: Vec<f64> = idx.iter().map(|&i| fm.pos[i][0]).collect();
    let vals: Vec<f64> = idx.iter().map(|&i| fm.varrho[i] / fm.jac[i]).collect();
    let mut count = vec![0usize; grid.n_cells()];
    for &x in &xs {
        if grid.contains([x, 0.0]) {
            let c = (((x - grid.lo[0]) / grid.dx[0]) as usize).min(grid.cells[0] - 1);
            count[c] += 1;
        }
    }
    let mut rho = Vec::with_capacity(grid.n_cells());
    for c in 0..grid.n_cells() {
        let x = grid.center(c)[0];
        let k = xs.partition_point(|&v| v <= x);
        if k == 0 || k == xs.len() {
            return Err(Error::Degenerate(format!("no labels around cell {c}")));
        }
        let a = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
        rho.push((1.0 - a) * vals[k - 1] + a * vals[k]);
    }
    let undersampled = (0..grid.n_cells())
        .filter(|&c| count[c] < MIN_LABELS_PER_CELL)
        .collect();
    Ok(Pushforward { rho, undersampled })
}

/// `∫ ϱ dX` over the labels whose image lies in `[lo, hi]`, trapezoidal in `X`
/// with the partial end segments cut where `φ` crosses the boundary.
pub fn material_mass_1d(fm: &FlowMap, lo: f64, hi: f64) -> f64 {
    let mut idx: Vec<usize> = (0..fm.labels.len()).collect();
    idx.sort_by(|&a, &b| fm.labels[a][0].total_cmp(&fm.labels[b][0]));
    let mut total = 0.0;
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (xa, xb) = (fm.labels[a][0], fm.labels[b][0]);
        let (pa, pb) = (fm.pos[a][0], fm.pos[b][0]);
        let (ra, rb) = (fm.varrho[a], fm.varrho[b]);
        // parameter range s ∈ [0,1] with φ(s) ∈ [lo, hi]
        let at = |p: f64| (p - pa) / (pb - pa);
        let s0 = at(lo).clamp(0.0, 1.0);
        let s1 = at(hi).clamp(0.0, 1.0);
        if s1 <= s0 {
            continue;
        }
        let r = |s: f64| ra + s * (rb - ra);
        total += 0.5 * (r(s0) + r(s1)) * (s1 - s0) * (xb - xa);
    }
    total
}

/// Regular label lattice with spacing `delta` covering `[lo, hi]` per axis plus
/// `margin` layers outside. Boundary points are the lattice labels on the edges
/// of the label domain, corners excluded.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub dim: usize,
    pub delta: f64,
    pub labels: Vec<[f64; 2]>,
    pub boundary: Vec<BoundaryPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub label: usize,
    /// Outward label-space normal.
    pub normal: [f64; 2],
    /// Neighbors along the edge, ordered so that `next − prev` is the
    /// counter-clockwise tangent. `None` in 1D.
    pub prev: Option<usize>,
    pub next: Option<usize>,
}

impl Lattice {
    pub fn new(dim: usize, lo: f64, hi: f64, n: usize, margin: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) || dim == 0 || dim > 2 {
            return Err(Error::Config(
                "lattice needs n ≥ 2 intervals on a non-empty interval".into(),
            ));
        }
        let delta = (hi - lo) / n as f64;
        let m = margin as isize;
        let side = (n as isize) + 2 * m + 1;
        let coord = |i: isize| lo + (i - m) as f64 * delta;
        let mut labels = Vec::new();
        let id = |i: isize, j: isize| (j * side + i) as usize;
        if dim == 1 {
            labels.extend((0..side).map(|i| [coord(i), 0.0]));
            let boundary = vec![
                BoundaryPoint {
                    label: m as usize,
                    normal: [-1.0, 0.0],
                    prev: None,
                    next: None,
                },
                BoundaryPoint {
                    label: (m + n as isize) as usize,
                    normal: [1.0, 0.0],
                    prev: None,
                    next: None,
                },
            ];
            return Ok(Self {
                dim,
                delta,
                labels,
                boundary,
            });
        }
        for j in 0..side {
            for i in 0..side {
                labels.push([coord(i), coord(j)]);
            }
        }
        let (a, b) = (m, m + n as isize);
        let mut boundary = Vec::new();
        for k in a + 1..b {
            boundary.push(BoundaryPoint {
                label: id(k, a),
                normal: [0.0, -1.0],
                prev: Some(id(k - 1, a)),
                next: Some(id(k + 1, a)),
            });
            boundary.push(BoundaryPoint {
                label: id(b, k),
                normal: [1.0, 0.0],
                prev: Some(id(b, k - 1)),
                next: Some(id(b, k + 1)),
            });
            boundary.push(BoundaryPoint {
                label: id(k, b),
                normal: [0.0, 1.0],
                prev: Some(id(k + 1, b)),
                next: Some(id(k - 1, b)),
            });
            boundary.push(BoundaryPoint {
                label: id(a, k),
                normal: [-1.0, 0.0],
                prev: Some(id(a, k + 1)),
                next: Some(id(a, k - 1)),
            });
        }
        Ok(Self {
            dim,
            delta,
            labels,
            boundary,
        })
    }
}

/// Number of nearest labels used for the deformation gradient fit.
pub fn knn_size(dim: usize) -> usize {
    if dim == 1 {
        3
    } else {
        6
    }
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<[f64; 2]>) -> Option<Vec<[f64; 2]>> {
    let n = a.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r][0] -= f * b[col][0];
            b[r][1] -= f * b[col][1];
        }
    }
    let mut x = vec![[0.0; 2]; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s[0] -= a[r][c] * x[c][0];
            s[1] -= a[r][c] * x[c][1];
        }
        x[r] = [s[0] / a[r][r], s[1] / a[r][r]];
    }
    Some(x)
}

/// Deformation gradient `F[a][b] = ∂φ^a/∂X^b` at label `i` from a least-squares
/// quadratic fit over its nearest labels.
pub fn deformation_gradient(fm: &FlowMap, i: usize) -> Result<[[f64; 2]; 2]> {
    let d = fm.dim;
    let k = knn_size(d);
    let x0 = fm.labels[i];
    let mut near: Vec<(f64, usize)> = fm
        .labels
        .iter()
        .enumerate()
        .map(|(j, x)| ((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2), j))
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let basis = |dx: [f64; 2]| -> Vec<f64> {
        if d == 1 {
            vec![dx[0], dx[0] * dx[0]]
        } else {
            vec![dx[0], dx[1], dx[0] * dx[0], dx[0] * dx[1], dx[1] * dx[1]]
        }
    };
    let nb = if d == 1 { 2 } else { 5 };
    let mut ata = vec![vec![0.0; nb]; nb];
    let mut atb = vec![[0.0; 2]; nb];
    for &(_, j) in near.iter().take(k) {
        if j == i {
            continue;
        }
        let dx = [fm.labels[j][0] - x0[0], fm.labels[j][1] - x0[1]];
        let dp = [fm.pos[j][0] - fm.pos[i][0], fm.pos[j][1] - fm.pos[i][1]];
        let row = basis(dx);
        for a in 0..nb {
            for b in 0..nb {
                ata[a][b] += row[a] * row[b];
            }
            atb[a][0] += row[a] * dp[0];
            atb[a][1] += row[a] * dp[1];
        }
    }
    let x = solve(ata, atb)
        .ok_or_else(|| Error::Degenerate(format!("degenerate local Jacobian at label {i}")))?;
    let mut f = [[0.0; 2]; 2];
    for b in 0..d {
        f[0][b] = x[b][0];
        f[1][b] = x[b][1];
    }
    if d == 1 {
        f[1][1] = 1.0;
    }
    Ok(f)
}

fn det(f: &[[f64; 2]; 2]) -> f64 {
    f[0][0] * f[1][1] - f[0][1] * f[1][0]
}

/// Largest `|Jφ − det ∇φ|` over the labels that have a full neighborhood.
pub fn jacobian_consistency(fm: &FlowMap, lattice: &Lattice, margin: usize) -> Result<f64> {
    let side = ((lattice.labels.len() as f64).powf(1.0 / fm.dim as f64)).round() as usize;
    let mut worst: f64 = 0.0;
    for (i, _) in fm.labels.iter().enumerate() {
        let (a, b) = (i % side, i / side);
        let inside = |v: usize| v >= margin.max(1) && v + margin.max(1) < side;
        if !inside(a) || (fm.dim == 2 && !inside(b)) {
            continue;
        }
        worst = worst.max((fm.jac[i] - det(&deformation_gradient(fm, i)?)).abs());
    }
    Ok(worst)
}

/// Largest `|N·((∇φ⁻¹·w)∘φ) Jφ − (n·w)∘φ Jφ_∂|` over the tracked boundary points.
/// The left side uses the fitted deformation gradient and the evolved `Jφ`; the
/// right side takes `n` and `Jφ_∂` from the image of the boundary labels.
pub fn boundary_piola_residual(
    fm: &FlowMap,
    lattice: &Lattice,
    w: &dyn Fn([f64; 2]) -> [f64; 2],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for bp in &lattice.boundary {
        let i = bp.label;
        let f = deformation_gradient(fm, i)?;
        let dt = det(&f);
        if dt.abs() < 1e-14 {
            return Err(Error::Degenerate(format!(
                "degenerate local Jacobian at label {i}"
            )));
        }
        let wv = w(fm.pos[i]);
        let n = bp.normal;
        let (lhs, rhs) = if fm.dim == 1 {
            (n[0] * wv[0] / f[0][0] * fm.jac[i], n[0] * wv[0])
        } else {
            let finv_w = [
                (f[1][1] * wv[0] - f[0][1] * wv[1]) / dt,
                (-f[1][0] * wv[0] + f[0][0] * wv[1]) / dt,
            ];
            let lhs = (n[0] * finv_w[0] + n[1] * finv_w[1]) * fm.jac[i];
            let (p, q) = (bp.prev.unwrap(), bp.next.unwrap());
            let h = 2.0 * lattice.delta;
            // image tangent; the outward normal is its clockwise rotation
            let t = [
                (fm.pos[q][0] - fm.pos[p][0]) / h,
                (fm.pos[q][1] - fm.pos[p][1]) / h,
            ];
            let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
            let nn = [t[1] / len, -t[0] / len];
            // Jφ_∂ is the length ratio |t| when Jφ is the area ratio
            (lhs, (nn[0] * wv[0] + nn[1] * wv[1]) * len)
        };
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Eulerian run kept for the material comparison.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Arc<Grid>,
    pub frames: Frames,
    pub states: Vec<State>,
    /// `Σ ρ V` per frame.
    pub mass: Vec<f64>,
    /// `∫θ_ρ dx + ∫ j_ρ da` per frame.
    pub mass_rate: Vec<f64>,
}

impl Trajectory {
    /// Runs `solver` from `state0` to `t_end` with fixed step `dt`, storing every step.
    pub fn record(
        solver: &Solver,
        state0: &State,
        t_end: f64,
        dt: f64,
        margin: f64,
    ) -> Result<Self> {
        let g = solver.model.grid.clone();
        let mut frames = Frames::new(&g, margin);
        let mut states = Vec::new();
        let mut mass = Vec::new();
        let mut mass_rate = Vec::new();
        let mut s = state0.clone();
        let n = ((t_end - s.t) / dt - 1e-9).ceil().max(1.0) as usize;
        let h = (t_end - s.t) / n as f64;
        for k in 0..=n {
            let (bulk, be) = solver.realize(&s)?;
            frames.push(&g, &s, &be)?;
            let vol = g.cell_volume();
            mass.push(s.rho.iter().flatten().sum::<f64>() * vol);
            let th: f64 = bulk.theta_rho.iter().flatten().sum::<f64>() * vol;
            let jb: f64 = be
                .faces
                .iter()
                .zip(&g.faces)
                .map(|(fd, f)| fd.flux.j_rho.iter().sum::<f64>() * f.da)
                .sum();
            mass_rate.push(th + jb);
            states.push(s.clone());
            if k < n {
                s = solver.step(&s, h)?;
            }
        }
        Ok(Self {
            grid: g,
            frames,
            states,
            mass,
            mass_rate,
        })
    }

    /// `∫ (∫θ + ∫j) dt` by the trapezoidal rule over the frames.
    pub fn flux_integral(&self) -> f64 {
        let t = &self.frames.times;
        (1..t.len())
            .map(|k| 0.5 * (self.mass_rate[k] + self.mass_rate[k - 1]) * (t[k] - t[k - 1]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EquivalenceReport {
    pub n_labels: usize,
    pub labels_per_cell: usize,
    /// Largest `|ρ_pushforward − ρ_Euler|` at the cell centers of the final frame.
    pub max_density_error: f64,
    pub material_mass_change: f64,
    pub eulerian_mass_change: f64,
    /// Time integral of the Eulerian bulk plus boundary mass rate.
    pub flux_integral: f64,
    /// `|material change − Eulerian change|`.
    pub bookkeeping_error: f64,
    pub undersampled_cells: usize,
}

/// Seeds labels on the domain plus a `margin` band on the inflow sides, carries `ϱ` with `ϱ̇ = (θ_ρ∘φ)Jφ`
/// through the stored velocity, and compares the pushforward and the mass
/// inside the domain with the Eulerian run.
pub fn equivalence_check_1d(
    solver: &Solver,
    traj: &Trajectory,
    initial_density: &dyn Fn(f64) -> f64,
    labels_per_cell: usize,
) -> Result<EquivalenceReport> {
    let g = &traj.grid;
    if g.dim != 1 || solver.model.n_rho() != 1 {
        return Err(Error::Model(
            "the equivalence check needs a one-dimensional single-component run".into(),
        ));
    }
    if labels_per_cell < MIN_LABELS_PER_CELL {
        return Err(Error::Config(format!(
            "at least {MIN_LABELS_PER_CELL} labels per cell are needed"
        )));
    }
    let times = &traj.frames.times;
    if times.len() < 2 {
        return Err(Error::Config("trajectory needs at least two frames".into()));
    }
    let (lo, hi) = (g.lo[0], g.hi[0]);
    let delta = g.dx[0] / labels_per_cell as f64;
    let margin = traj.frames.margin;
    let n_out = (margin / delta).floor() as isize;
    let n_in = (g.cells[0] * labels_per_cell) as isize;
    // exterior labels only on the sides where fluid enters
    let u_lo = traj.frames.spatial(0, [lo, 0.0])?.0[0];
    let u_hi = traj.frames.spatial(0, [hi, 0.0])?.0[0];
    let first = if u_lo > 0.0 { -n_out } else { 0 };
    let end = if u_hi < 0.0 { n_in + n_out } else { n_in };
    let labels: Vec<[f64; 2]> = (first..=end)
        .map(|i| [lo + i as f64 * delta, 0.0])
        .collect();
    let varrho = labels.iter().map(|x| initial_density(x[0])).collect();
    let mut fm =
        FlowMap::identity(1, times[0], labels, varrho)?.with_domain([[lo, hi], [0.0, 0.0]]);

    let theta_expr = solver.sources.bulk.theta_rho.first().cloned();
    let theta = move |t: f64, x: [f64; 2]| match &theta_expr {
        Some(e) if x[0] >= lo && x[0] <= hi => e.eval(x, t),
        _ => 0.0,
    };
    let m0 = material_mass_1d(&fm, lo, hi);
    for k in 1..times.len() {
        fm.step(&traj.frames, times[k] - times[k - 1], Some(&theta))?;
    }
    let push = pushforward_density(&fm, g)?;
    let last = traj.states.last().unwrap();
    let max_density_error = push
        .rho
        .iter()
        .zip(&last.rho[0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let material_mass_change = material_mass_1d(&fm, lo, hi) - m0;
    let eulerian_mass_change = traj.mass[traj.mass.len() - 1] - traj.mass[0];
    Ok(EquivalenceReport {
        n_labels: fm.labels.len(),
        labels_per_cell,
        max_density_error,
        material_mass_change,
        eulerian_mass_change,
        flux_integral: traj.flux_integral(),
        bookkeeping_error: (material_mass_change - eulerian_mass_change).abs(),
        undersampled_cells: push.undersampled.len(),
    })
}
