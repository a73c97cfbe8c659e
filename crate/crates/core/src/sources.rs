//! Bulk sources and per-patch boundary flux closures.
//!
//! Every closure produces, on each face of its patch, a *face state*
//! (the boundary values of u, ρ_k, s and the advected tensor that enter the
//! boundary-aware stencils) and the fluxes `J`, `j_ρ`, `j_s`, `j_T`. On the
//! face state the boundary rows
//!
//! ```text
//! (u·n) ∂𝔩/∂u + σ·n = −J + σ_ext·n,   ρ_k u·n = −j_k,   s u·n = −j_s,   T u·n = −j_T
//! ```
//!
//! hold exactly for every mode except `closed` with a nonzero advective stress.

use serde::{Deserialize, Deserializer, Serialize};

use crate::dynamics::advective_stress;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Face, Grid};
use crate::models::{Family, Local, Model, Point};
use crate::ops;
use crate::state::State;

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Expr>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(Expr),
        Many(Vec<Expr>),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::One(e) => vec![e],
        Raw::Many(v) => v,
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BulkSpec {
    #[serde(default)]
    pub b: Option<[Expr; 2]>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub theta_rho: Vec<Expr>,
    #[serde(default)]
    pub theta_s: Option<Expr>,
    #[serde(default, deserialize_with = "one_or_many")]
    pub theta_tensor: Vec<Expr>,
}

/// Bulk sources sampled at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkFields {
    pub b: Vec<[f64; 2]>,
    pub theta_rho: Vec<Vec<f64>>,
    pub theta_s: Vec<f64>,
    /// `[cell * ncomp + comp]`.
    pub theta_tensor: Vec<f64>,
    /// External stress `[σ^x_x, σ^x_y, σ^y_x, σ^y_y]` per cell.
    pub sigma_ext: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    Closed,
    Inflow {
        u0: [Expr; 2],
        #[serde(deserialize_with = "one_or_many")]
        rho0: Vec<Expr>,
        #[serde(default)]
        s0: Option<Expr>,
        /// Alternative to `s0`: the entropy follows from the state equation.
        #[serde(default)]
        t0: Option<Expr>,
        #[serde(default, deserialize_with = "one_or_many")]
        tensor0: Vec<Expr>,
    },
    OutflowViscous {
        u0: [Expr; 2],
        #[serde(default)]
        t0: Option<Expr>,
    },
    OutflowInviscid {
        nu0: Expr,
    },
    FreeOpen,
    Prescribed {
        #[serde(rename = "J")]
        j_mom: [Expr; 2],
        #[serde(deserialize_with = "one_or_many")]
        j_rho: Vec<Expr>,
        #[serde(default)]
        j_s: Option<Expr>,
    },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Closed => "closed",
            Mode::Inflow { .. } => "inflow",
            Mode::OutflowViscous { .. } => "outflow_viscous",
            Mode::OutflowInviscid { .. } => "outflow_inviscid",
            Mode::FreeOpen => "free_open",
            Mode::Prescribed { .. } => "prescribed",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxClosure {
    pub patch: String,
    #[serde(flatten)]
    pub mode: Mode,
}

impl FluxClosure {
    pub fn new(patch: &str, mode: Mode) -> Self {
        Self {
            patch: patch.to_string(),
            mode,
        }
    }
}

/// Boundary values of the unknowns and of the model derivatives at one face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceState {
    pub u: [f64; 2],
    pub rho: Vec<f64>,
    pub s: f64,
    pub tensor: Vec<f64>,
    pub r: [f64; 2],
    pub local: Local,
    /// Density potential paired with `j_ρ`: ∂𝔩/∂ρ_k, plus `λΔρ` for Korteweg.
    pub psi: Vec<f64>,
    /// Advective stress `σ^c_d` as `[c*2 + d]`.
    pub sigma_adv: [f64; 4],
}

impl FaceState {
    pub fn un(&self, n: [f64; 2]) -> f64 {
        self.u[0] * n[0] + self.u[1] * n[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceFlux {
    pub j_mom: [f64; 2],
    pub j_rho: Vec<f64>,
    pub j_s: f64,
    pub j_tensor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceData {
    pub state: FaceState,
    /// Raw quadratic traces of the cell data, for diagnostics.
    pub trace: FaceState,
    pub flux: FaceFlux,
    pub sigma_ext: [f64; 4],
}

/// Maximum absolute residual of each boundary row over a set of faces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RowResiduals {
    pub momentum: f64,
    pub mass: f64,
    pub entropy: f64,
    pub tensor: f64,
    pub korteweg: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryEval {
    pub faces: Vec<FaceData>,
}

/// `σ·n` with `(σ·n)_d = σ^c_d n_c`.
pub fn stress_dot_n(sigma: &[f64; 4], n: [f64; 2]) -> [f64; 2] {
    [
        sigma[0] * n[0] + sigma[2] * n[1],
        sigma[1] * n[0] + sigma[3] * n[1],
    ]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn row_residuals_of(
    fs: &FaceState,
    flux: &FaceFlux,
    sigma_ext: &[f64; 4],
    n: [f64; 2],
) -> RowResiduals {
    let un = fs.un(n);
    let sa = stress_dot_n(&fs.sigma_adv, n);
    let se = stress_dot_n(sigma_ext, n);
    let mom = (0..2)
        .map(|i| (un * fs.local.m[i] + sa[i] + flux.j_mom[i] - se[i]).abs())
        .fold(0.0, f64::max);
    let mass = fs
        .rho
        .iter()
        .zip(&flux.j_rho)
        .map(|(r, j)| (r * un + j).abs())
        .fold(0.0, f64::max);
    let tensor = fs
        .tensor
        .iter()
        .zip(&flux.j_tensor)
        .map(|(t, j)| (t * un + j).abs())
        .fold(0.0, f64::max);
    RowResiduals {
        momentum: mom,
        mass,
        entropy: (fs.s * un + flux.j_s).abs(),
        tensor,
        korteweg: 0.0,
    }
}

impl RowResiduals {
    fn max(self, o: RowResiduals) -> RowResiduals {
        RowResiduals {
            momentum: self.momentum.max(o.momentum),
            mass: self.mass.max(o.mass),
            entropy: self.entropy.max(o.entropy),
            tensor: self.tensor.max(o.tensor),
            korteweg: self.korteweg.max(o.korteweg),
        }
    }

    pub fn worst(&self) -> f64 {
        [
            self.momentum,
            self.mass,
            self.entropy,
            self.tensor,
            self.korteweg,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl BoundaryEval {
    /// Row residuals on the face states (first) and on the raw traces (second),
    /// restricted to `patch` when given.
    pub fn row_residuals(&self, grid: &Grid, patch: Option<usize>) -> (RowResiduals, RowResiduals) {
        let mut a = RowResiduals::default();
        let mut b = RowResiduals::default();
        for (k, fd) in self.faces.iter().enumerate() {
            let f = &grid.faces[k];
            if patch.is_some_and(|p| p != f.patch) {
                continue;
            }
            a = a.max(row_residuals_of(
                &fd.state,
                &fd.flux,
                &fd.sigma_ext,
                f.normal,
            ));
            b = b.max(row_residuals_of(
                &fd.trace,
                &fd.flux,
                &fd.sigma_ext,
                f.normal,
            ));
        }
        (a, b)
    }
}

/// Bulk sources plus one closure per boundary patch.
#[derive(Debug, Clone)]
pub struct Sources {
    pub bulk: BulkSpec,
    pub closures: Vec<FluxClosure>,
    /// Closure index for every patch of the grid.
    by_patch: Vec<usize>,
}

fn closure_err(patch: &str, msg: impl Into<String>) -> Error {
    Error::Closure {
        patch: patch.to_string(),
        msg: msg.into(),
    }
}

impl Sources {
    pub fn new(bulk: BulkSpec, closures: Vec<FluxClosure>, model: &Model) -> Result<Self> {
        let grid = &model.grid;
        let mut by_patch = vec![usize::MAX; grid.patches.len()];
        for (ci, c) in closures.iter().enumerate() {
            let (p, _) = grid
                .patch(&c.patch)
                .ok_or_else(|| closure_err(&c.patch, "no such patch on the grid"))?;
            if by_patch[p] != usize::MAX {
                return Err(closure_err(&c.patch, "patch has more than one closure"));
            }
            by_patch[p] = ci;
        }
        if let Some(p) = by_patch.iter().position(|&c| c == usize::MAX) {
            return Err(closure_err(&grid.patches[p].name, "patch has no closure"));
        }
        let n_rho = model.n_rho();
        let nt = model.tensor_ncomp();
        if !bulk.theta_rho.is_empty() && bulk.theta_rho.len() != n_rho {
            return Err(Error::Config(format!("theta_rho needs {n_rho} entries")));
        }
        if !bulk.theta_tensor.is_empty() && bulk.theta_tensor.len() != nt {
            return Err(Error::Config(format!("theta_tensor needs {nt} entries")));
        }
        for c in &closures {
            match &c.mode {
                Mode::Inflow {
                    rho0,
                    s0,
                    t0,
                    tensor0,
                    ..
                } => {
                    if rho0.len() != n_rho {
                        return Err(closure_err(&c.patch, format!("rho0 needs {n_rho} entries")));
                    }
                    if model.requires_entropy() && s0.is_none() && t0.is_none() {
                        return Err(closure_err(
                            &c.patch,
                            "inflow needs s0 or t0 for this state equation",
                        ));
                    }
                    if !tensor0.is_empty() && tensor0.len() != nt {
                        return Err(closure_err(&c.patch, format!("tensor0 needs {nt} entries")));
                    }
                }
                Mode::OutflowViscous { t0, .. } if model.requires_entropy() && t0.is_none() => {
                    return Err(closure_err(
                        &c.patch,
                        "outflow_viscous needs t0 for this state equation",
                    ));
                }
                Mode::Prescribed { j_rho, .. } => {
                    if nt > 0 {
                        return Err(closure_err(
                            &c.patch,
                            "prescribed fluxes are not supported for tensor-advecting models",
                        ));
                    }
                    if j_rho.len() != n_rho {
                        return Err(closure_err(
                            &c.patch,
                            format!("j_rho needs {n_rho} entries"),
                        ));
                    }
                }
                _ => {}
            }
        }
        let s = Self {
            bulk,
            closures,
            by_patch,
        };
        s.check_signs(grid, 0.0)?;
        Ok(s)
    }

    /// All walls closed, no bulk sources.
    pub fn closed(model: &Model) -> Result<Self> {
        let closures = model
            .grid
            .patches
            .iter()
            .map(|p| FluxClosure::new(&p.name, Mode::Closed))
            .collect();
        Self::new(BulkSpec::default(), closures, model)
    }

    pub fn closure_of_patch(&self, patch: usize) -> &FluxClosure {
        &self.closures[self.by_patch[patch]]
    }

    fn check_signs(&self, grid: &Grid, t: f64) -> Result<()> {
        for (k, f) in grid.faces.iter().enumerate() {
            check_face_sign(self.closure_of_patch(f.patch), k, f, t)?;
        }
        Ok(())
    }

    pub fn evaluate_bulk(&self, model: &Model, t: f64) -> BulkFields {
        let g = &model.grid;
        let n = g.n_cells();
        let at = |e: &Expr| (0..n).map(|c| e.eval(g.center(c), t)).collect::<Vec<_>>();
        let b = match &self.bulk.b {
            Some([bx, by]) => (0..n)
                .map(|c| {
                    let x = g.center(c);
                    [bx.eval(x, t), if g.dim == 2 { by.eval(x, t) } else { 0.0 }]
                })
                .collect(),
            None => vec![[0.0; 2]; n],
        };
        let theta_rho = if self.bulk.theta_rho.is_empty() {
            vec![vec![0.0; n]; model.n_rho()]
        } else {
            self.bulk.theta_rho.iter().map(at).collect()
        };
        let theta_s = self.bulk.theta_s.as_ref().map_or_else(|| vec![0.0; n], at);
        let nt = model.tensor_ncomp();
        let mut theta_tensor = vec![0.0; n * nt];
        for (k, e) in self.bulk.theta_tensor.iter().enumerate() {
            for c in 0..n {
                theta_tensor[c * nt + k] = e.eval(g.center(c), t);
            }
        }
        let sigma_ext = (0..n).map(|c| eval_stress(model, g.center(c), t)).collect();
        BulkFields {
            b,
            theta_rho,
            theta_s,
            theta_tensor,
            sigma_ext,
        }
    }

    /// Face states, fluxes and traces on every boundary face.
    pub fn evaluate_boundary(&self, model: &Model, state: &State, t: f64) -> Result<BoundaryEval> {
        let g = &model.grid;
        let tr = Traces::new(model, state);
        let mut faces = Vec::with_capacity(g.faces.len());
        for (k, f) in g.faces.iter().enumerate() {
            let cl = self.closure_of_patch(f.patch);
            check_face_sign(cl, k, f, t)?;
            let raw = tr.raw(k);
            let trace = face_state(model, &raw, k)?;
            let sigma_ext = eval_stress(model, f.center, t);
            let (state_f, flux) = apply_closure(model, cl, k, f, raw, &trace, &sigma_ext, t)?;
            faces.push(FaceData {
                state: state_f,
                trace,
                flux,
                sigma_ext,
            });
        }
        Ok(BoundaryEval { faces })
    }
}

fn eval_stress(model: &Model, x: [f64; 2], t: f64) -> [f64; 4] {
    match &model.spec.boundary_stress {
        Some(s) => {
            let mut v = [0.0; 4];
            for (k, e) in s.iter().enumerate() {
                // in 1D only σ^x_x is meaningful
                if model.grid.dim == 2 || k == 0 {
                    v[k] = e.eval(x, t);
                }
            }
            v
        }
        None => [0.0; 4],
    }
}

fn vec2(e: &[Expr; 2], x: [f64; 2], t: f64, dim: usize) -> [f64; 2] {
    [
        e[0].eval(x, t),
        if dim == 2 { e[1].eval(x, t) } else { 0.0 },
    ]
}

fn check_face_sign(cl: &FluxClosure, k: usize, f: &Face, t: f64) -> Result<()> {
    match &cl.mode {
        Mode::Inflow { u0, .. } => {
            let un = dot([u0[0].eval(f.center, t), u0[1].eval(f.center, t)], f.normal);
            if !(un < 0.0) {
                return Err(closure_err(
                    &cl.patch,
                    format!("inflow needs u0·n < 0, got {un} on face {k}"),
                ));
            }
        }
        Mode::OutflowViscous { u0, .. } => {
            let un = dot([u0[0].eval(f.center, t), u0[1].eval(f.center, t)], f.normal);
            if !(un > 0.0) {
                return Err(closure_err(
                    &cl.patch,
                    format!("outflow_viscous needs u0·n > 0, got {un} on face {k}"),
                ));
            }
        }
        Mode::OutflowInviscid { nu0 } => {
            let v = nu0.eval(f.center, t);
            if !(v > 0.0) {
                return Err(closure_err(
                    &cl.patch,
                    format!("outflow_inviscid needs nu0 > 0, got {v} on face {k}"),
                ));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Raw boundary data before the model is evaluated.
#[derive(Debug, Clone)]
pub struct RawFace {
    pub u: [f64; 2],
    pub rho: Vec<f64>,
    pub s: f64,
    pub tensor: Vec<f64>,
    /// λ times the trace of the Neumann Laplacian of ρ (Korteweg only).
    pub lap: f64,
}

struct Traces {
    u: [Vec<f64>; 2],
    rho: Vec<Vec<f64>>,
    s: Option<Vec<f64>>,
    tensor: Vec<Vec<f64>>,
    lap: Vec<f64>,
}

impl Traces {
    fn new(model: &Model, state: &State) -> Self {
        let g = &model.grid;
        let comp = |k: usize| state.u.iter().map(|v| v[k]).collect::<Vec<_>>();
        let u = [
            ops::traces(g, &comp(0)),
            if g.dim == 2 {
                ops::traces(g, &comp(1))
            } else {
                vec![0.0; g.faces.len()]
            },
        ];
        let rho = state.rho.iter().map(|r| ops::traces(g, r)).collect();
        let s = state.s.as_ref().map(|s| ops::traces(g, s));
        let nt = model.tensor_ncomp();
        let tensor = (0..nt)
            .map(|k| {
                let q: Vec<f64> = state
                    .tensor
                    .as_ref()
                    .unwrap()
                    .iter()
                    .skip(k)
                    .step_by(nt)
                    .copied()
                    .collect();
                ops::traces(g, &q)
            })
            .collect();
        let lap = if model.family() == Family::EulerKorteweg {
            let l = model.korteweg_laplacian(state);
            ops::traces(g, &l)
                .into_iter()
                .map(|v| model.spec.lambda * v)
                .collect()
        } else {
            vec![0.0; g.faces.len()]
        };
        Self {
            u,
            rho,
            s,
            tensor,
            lap,
        }
    }

    fn raw(&self, k: usize) -> RawFace {
        RawFace {
            u: [self.u[0][k], self.u[1][k]],
            rho: self.rho.iter().map(|r| r[k]).collect(),
            s: self.s.as_ref().map_or(0.0, |s| s[k]),
            tensor: self.tensor.iter().map(|t| t[k]).collect(),
            lap: self.lap[k],
        }
    }
}

/// Evaluates the model at boundary data on face `k`.
pub fn face_state(model: &Model, raw: &RawFace, k: usize) -> Result<FaceState> {
    let p = Point {
        u: raw.u,
        rho: &raw.rho,
        s: raw.s,
        tensor: &raw.tensor,
        grad_rho: [0.0; 2],
        r: model.r_face[k],
        phi: model.phi_face[k],
        z: model.z_face[k],
    };
    let local = model.local(&p)?;
    let sigma_adv = advective_stress(model, &raw.tensor, &local.dl_dtensor)?;
    let psi = local.dl_drho.iter().map(|d| d + raw.lap).collect();
    Ok(FaceState {
        u: raw.u,
        rho: raw.rho.clone(),
        s: raw.s,
        tensor: raw.tensor.clone(),
        r: p.r,
        local,
        psi,
        sigma_adv,
    })
}

/// Fluxes of the freely open form `J = −(u·n)m − σ·n + σ_ext·n`, `j = −(u·n)(ρ, s, T)`
/// evaluated with normal velocity `un` on face state `fs`.
fn advective_fluxes(fs: &FaceState, un: f64, n: [f64; 2], sigma_ext: &[f64; 4]) -> FaceFlux {
    let sa = stress_dot_n(&fs.sigma_adv, n);
    let se = stress_dot_n(sigma_ext, n);
    FaceFlux {
        j_mom: [
            -un * fs.local.m[0] - sa[0] + se[0],
            -un * fs.local.m[1] - sa[1] + se[1],
        ],
        j_rho: fs.rho.iter().map(|r| -un * r).collect(),
        j_s: -un * fs.s,
        j_tensor: fs.tensor.iter().map(|v| -un * v).collect(),
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_closure(
    model: &Model,
    cl: &FluxClosure,
    k: usize,
    f: &Face,
    mut raw: RawFace,
    trace: &FaceState,
    sigma_ext: &[f64; 4],
    t: f64,
) -> Result<(FaceState, FaceFlux)> {
    let n = f.normal;
    let dim = model.grid.dim;
    let eos = model.eos;
    match &cl.mode {
        Mode::Closed => {
            let un = dot(raw.u, n);
            raw.u = [raw.u[0] - un * n[0], raw.u[1] - un * n[1]];
            let fs = face_state(model, &raw, k)?;
            let zero = FaceFlux {
                j_mom: [0.0; 2],
                j_rho: vec![0.0; fs.rho.len()],
                j_s: 0.0,
                j_tensor: vec![0.0; fs.tensor.len()],
            };
            Ok((fs, zero))
        }
        Mode::FreeOpen => {
            let un = trace.un(n);
            let flux = advective_fluxes(trace, un, n, sigma_ext);
            Ok((trace.clone(), flux))
        }
        Mode::OutflowInviscid { nu0 } => {
            let nu = nu0.eval(f.center, t);
            let un = dot(raw.u, n);
            raw.u = [raw.u[0] + (nu - un) * n[0], raw.u[1] + (nu - un) * n[1]];
            let fs = face_state(model, &raw, k)?;
            let flux = advective_fluxes(&fs, nu, n, sigma_ext);
            Ok((fs, flux))
        }
        Mode::OutflowViscous { u0, t0 } => {
            raw.u = vec2(u0, f.center, t, dim);
            if let (Some(t0), Some(eos)) = (t0, eos) {
                if eos.uses_entropy() {
                    let mass: f64 = raw.rho.iter().sum();
                    raw.s = eos.entropy_from_temperature(mass, t0.eval(f.center, t))?;
                }
            }
            let fs = face_state(model, &raw, k)?;
            let flux = advective_fluxes(&fs, fs.un(n), n, sigma_ext);
            Ok((fs, flux))
        }
        Mode::Inflow {
            u0,
            rho0,
            s0,
            t0,
            tensor0,
        } => {
            raw.u = vec2(u0, f.center, t, dim);
            raw.rho = rho0.iter().map(|e| e.eval(f.center, t)).collect();
            let mass: f64 = raw.rho.iter().sum();
            raw.s = match (s0, t0, eos) {
                (Some(s0), _, _) => s0.eval(f.center, t),
                (None, Some(t0), Some(eos)) if eos.uses_entropy() => {
                    eos.entropy_from_temperature(mass, t0.eval(f.center, t))?
                }
                _ => raw.s,
            };
            if !tensor0.is_empty() {
                raw.tensor = tensor0.iter().map(|e| e.eval(f.center, t)).collect();
            }
            let fs = face_state(model, &raw, k)?;
            let flux = advective_fluxes(&fs, fs.un(n), n, sigma_ext);
            Ok((fs, flux))
        }
        Mode::Prescribed { j_mom, j_rho, j_s } => {
            let jm = vec2(j_mom, f.center, t, dim);
            let jr: Vec<f64> = j_rho.iter().map(|e| e.eval(f.center, t)).collect();
            let js = j_s.as_ref().map_or(0.0, |e| e.eval(f.center, t));
            let se = stress_dot_n(sigma_ext, n);
            let j_eff = [jm[0] - se[0], jm[1] - se[1]];
            let j_tot: f64 = jr.iter().sum();
            let scale = 1.0 + j_eff[0].abs() + j_eff[1].abs();
            if j_tot == 0.0 {
                if j_eff[0].abs() + j_eff[1].abs() > 1e-14 * scale || js != 0.0 {
                    return Err(closure_err(
                        &cl.patch,
                        format!("J or j_s nonzero with zero mass flux on face {k}"),
                    ));
                }
                let un = dot(raw.u, n);
                raw.u = [raw.u[0] - un * n[0], raw.u[1] - un * n[1]];
            } else {
                let r = model.r_face[k];
                let r = if model.has_rotation() { r } else { [0.0; 2] };
                raw.u = [j_eff[0] / j_tot - r[0], j_eff[1] / j_tot - r[1]];
                let un = dot(raw.u, n);
                if un.abs() < 1e-14 * (1.0 + raw.u[0].abs() + raw.u[1].abs()) {
                    return Err(closure_err(
                        &cl.patch,
                        format!("J·n must be nonzero when j_rho ≠ 0 (face {k})"),
                    ));
                }
                raw.rho = jr.iter().map(|j| -j / un).collect();
                raw.s = -js / un;
            }
            let fs = face_state(model, &raw, k)?;
            let flux = FaceFlux {
                j_mom: jm,
                j_rho: jr,
                j_s: js,
                j_tensor: Vec::new(),
            };
            Ok((fs, flux))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelSpec;
    use crate::thermo::StateEquation;
    use std::sync::Arc;

    fn e(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn euler_1d(n: usize) -> Model {
        let g = Arc::new(Grid::new(1, &[[0.0, 1.0]], &[n], &[]).unwrap());
        Model::new(
            ModelSpec::new(Family::Euler),
            Some(StateEquation::ideal_gas(2.5, 1.4, 1.0, 1.0, 0.0)),
            g,
        )
        .unwrap()
    }

    fn smooth_state(m: &Model) -> State {
        let g = &m.grid;
        let n = g.n_cells();
        let x = |c: usize| g.center(c)[0];
        State {
            t: 0.0,
            u: (0..n).map(|c| [0.3 + 0.1 * x(c), 0.0]).collect(),
            rho: vec![(0..n).map(|c| 1.0 + 0.2 * x(c)).collect()],
            s: Some((0..n).map(|c| 0.1 * x(c)).collect()),
            tensor: None,
        }
    }

    fn sources(m: &Model, left: Mode, right: Mode) -> Sources {
        Sources::new(
            BulkSpec::default(),
            vec![
                FluxClosure::new("left", left),
                FluxClosure::new("right", right),
            ],
            m,
        )
        .unwrap()
    }

    #[test]
    fn closed_gives_zero_fluxes_and_no_normal_velocity() {
        let m = euler_1d(16);
        let src = Sources::closed(&m).unwrap();
        let be = src.evaluate_boundary(&m, &smooth_state(&m), 0.0).unwrap();
        for fd in &be.faces {
            assert_eq!(fd.flux.j_mom, [0.0, 0.0]);
            assert_eq!(fd.flux.j_rho, vec![0.0]);
            assert_eq!(fd.flux.j_s, 0.0);
            assert_eq!(fd.state.u[0], 0.0);
        }
    }

    #[test]
    fn inflow_fluxes_follow_prescribed_state() {
        let m = euler_1d(16);
        let inflow = Mode::Inflow {
            u0: [e("0.2"), e("0")],
            rho0: vec![e("1.5")],
            s0: Some(e("0.1")),
            t0: None,
            tensor0: vec![],
        };
        let src = sources(&m, inflow, Mode::FreeOpen);
        let be = src.evaluate_boundary(&m, &smooth_state(&m), 0.0).unwrap();
        let fl = &be.faces[0].flux;
        assert!((fl.j_rho[0] - 0.3).abs() < 1e-15);
        assert!((fl.j_mom[0] - 0.3 * 0.2).abs() < 1e-15);
        assert!((fl.j_s - 0.02).abs() < 1e-15);
        let mut other = smooth_state(&m);
        other.rho[0].iter_mut().for_each(|r| *r *= 2.0);
        let be2 = src.evaluate_boundary(&m, &other, 0.0).unwrap();
        assert_eq!(be2.faces[0].flux, *fl);
    }

    #[test]
    fn inflow_sign_violation_names_face() {
        let m = euler_1d(16);
        let bad = Mode::Inflow {
            u0: [e("0.1"), e("0")],
            rho0: vec![e("1")],
            s0: Some(e("0")),
            t0: None,
            tensor0: vec![],
        };
        let err = Sources::new(
            BulkSpec::default(),
            vec![
                FluxClosure::new("left", Mode::Closed),
                FluxClosure::new("right", bad),
            ],
            &m,
        )
        .unwrap_err();
        assert!(err.to_string().contains("face 1"), "{err}");
    }

    #[test]
    fn outflow_inviscid_fluxes() {
        let m = euler_1d(16);
        let src = sources(&m, Mode::Closed, Mode::OutflowInviscid { nu0: e("0.3") });
        let be = src.evaluate_boundary(&m, &smooth_state(&m), 0.0).unwrap();
        let fd = &be.faces[1];
        assert_eq!(fd.state.u[0], 0.3);
        assert!((fd.flux.j_rho[0] + 0.3 * fd.state.rho[0]).abs() < 1e-15);
        assert!((fd.flux.j_s + 0.3 * fd.state.s).abs() < 1e-15);
        assert!((fd.flux.j_mom[0] + 0.3 * fd.state.rho[0] * 0.3).abs() < 1e-15);
    }

    #[test]
    fn outflow_viscous_pins_temperature() {
        let m = euler_1d(16);
        let src = sources(
            &m,
            Mode::Closed,
            Mode::OutflowViscous {
                u0: [e("0.4"), e("0")],
                t0: Some(e("1.3")),
            },
        );
        let be = src.evaluate_boundary(&m, &smooth_state(&m), 0.0).unwrap();
        let fs = &be.faces[1].state;
        assert_eq!(fs.u[0], 0.4);
        assert!((fs.local.t - 1.3).abs() < 1e-12);
    }

    #[test]
    fn boundary_relations_hold_on_face_states() {
        let m = euler_1d(16);
        for (l, r) in [
            (
                Mode::Inflow {
                    u0: [e("0.2"), e("0")],
                    rho0: vec![e("1.5")],
                    s0: None,
                    t0: Some(e("0.9")),
                    tensor0: vec![],
                },
                Mode::FreeOpen,
            ),
            (Mode::FreeOpen, Mode::OutflowInviscid { nu0: e("0.5") }),
            (
                Mode::Closed,
                Mode::OutflowViscous {
                    u0: [e("0.4"), e("0")],
                    t0: Some(e("1.1")),
                },
            ),
        ] {
            let src = sources(&m, l, r);
            let be = src.evaluate_boundary(&m, &smooth_state(&m), 0.0).unwrap();
            let (rows, _) = be.row_residuals(&m.grid, None);
            assert!(rows.worst() < 1e-14, "{rows:?}");
            for fd in &be.faces {
                let (fs, fl) = (&fd.state, &fd.flux);
                assert!((fl.j_s * fs.rho[0] - fl.j_rho[0] * fs.s).abs() < 1e-14);
                assert!((fl.j_mom[0] * fs.rho[0] - fl.j_rho[0] * fs.local.m[0]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn free_open_case_reproduces_boundary_rows() {
        let g = Arc::new(Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[8, 8], &[]).unwrap());
        let m = Model::new(
            ModelSpec::new(Family::Euler),
            Some(StateEquation::barotropic(1.0, 2.0)),
            g.clone(),
        )
        .unwrap();
        let closures = g
            .patches
            .iter()
            .map(|p| FluxClosure::new(&p.name, Mode::FreeOpen))
            .collect();
        let src = Sources::new(BulkSpec::default(), closures, &m).unwrap();
        let st = State {
            t: 0.0,
            u: vec![[0.4, 0.0]; 64],
            rho: vec![vec![2.0; 64]],
            s: None,
            tensor: None,
        };
        let be = src.evaluate_boundary(&m, &st, 0.0).unwrap();
        let right = g.patch("right").unwrap().1.faces[0];
        assert!((be.faces[right].flux.j_mom[0] + 0.4 * 0.8).abs() < 1e-14);
        let (a, b) = be.row_residuals(&g, None);
        assert_eq!(a.worst(), 0.0);
        assert!(b.worst() < 1e-14);
    }

    #[test]
    fn prescribed_reconstructs_face_state() {
        let m = euler_1d(16);
        // ρ_b = 2, u_b = 0.25 leaving through the right face
        let pr = Mode::Prescribed {
            j_mom: [e("-0.125"), e("0")],
            j_rho: vec![e("-0.5")],
            j_s: Some(e("-0.05")),
        };
        let src = sources(&m, Mode::Closed, pr);
        let be = src.evaluate_boundary(&m, &smooth_state(&m), 0.0).unwrap();
        let fs = &be.faces[1].state;
        assert!(
            (fs.u[0] - 0.25).abs() < 1e-15
                && (fs.rho[0] - 2.0).abs() < 1e-15
                && (fs.s - 0.2).abs() < 1e-15
        );
        let bad = Mode::Prescribed {
            j_mom: [e("0.1"), e("0")],
            j_rho: vec![e("0")],
            j_s: None,
        };
        let src = sources(&m, Mode::Closed, bad);
        assert!(src.evaluate_boundary(&m, &smooth_state(&m), 0.0).is_err());
    }

    #[test]
    fn missing_and_duplicate_patches_rejected() {
        let m = euler_1d(16);
        assert!(Sources::new(
            BulkSpec::default(),
            vec![FluxClosure::new("left", Mode::Closed)],
            &m
        )
        .is_err());
        let dup = vec![
            FluxClosure::new("left", Mode::Closed),
            FluxClosure::new("left", Mode::Closed),
            FluxClosure::new("right", Mode::Closed),
        ];
        assert!(Sources::new(BulkSpec::default(), dup, &m).is_err());
        let unknown = vec![
            FluxClosure::new("left", Mode::Closed),
            FluxClosure::new("top", Mode::Closed),
        ];
        assert!(Sources::new(BulkSpec::default(), unknown, &m).is_err());
    }

    #[test]
    fn bulk_sources_sampled_at_centers() {
        let m = euler_1d(8);
        let bulk = BulkSpec {
            b: Some([e("sin(x)"), e("0")]),
            theta_rho: vec![e("0.1")],
            ..Default::default()
        };
        let src = Sources::new(
            bulk,
            vec![
                FluxClosure::new("left", Mode::Closed),
                FluxClosure::new("right", Mode::Closed),
            ],
            &m,
        )
        .unwrap();
        let bf = src.evaluate_bulk(&m, 0.0);
        let total: f64 = bf.theta_rho[0].iter().sum::<f64>() * m.grid.cell_volume();
        assert!((total - 0.1).abs() < 1e-15);
        for c in 0..8 {
            assert_eq!(bf.b[c][0], m.grid.center(c)[0].sin());
        }
        let zero = Sources::closed(&m).unwrap().evaluate_bulk(&m, 0.0);
        assert!(zero.b.iter().all(|v| *v == [0.0, 0.0]) && zero.theta_s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn closure_config_parses() {
        let c: FluxClosure = serde_json::from_str(
            r#"{"patch":"left","mode":"inflow","u0":[0.5,0],"rho0":1.2,"t0":"1 + 0*t"}"#,
        )
        .unwrap();
        assert_eq!(c.mode.name(), "inflow");
        let c: FluxClosure =
            serde_json::from_str(r#"{"patch":"right","mode":"outflow_inviscid","nu0":0.3}"#)
                .unwrap();
        assert_eq!(c.mode.name(), "outflow_inviscid");
        assert!(
            serde_json::from_str::<FluxClosure>(r#"{"patch":"right","mode":"sideways"}"#).is_err()
        );
    }
}
