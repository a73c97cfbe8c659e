//! Tendencies of the open-fluid equations and explicit time stepping.
//!
//! The default *momentum* formulation evolves the densities in flux form and
//! the momentum density `m = ∂𝔩/∂u` through
//!
//! ```text
//! ṁ_i = −D(u m_i + σ_i; −J_i) − m_d G_i(u^d) + ρ_k G_i(∂𝔩/∂ρ_k) + s G_i(∂𝔩/∂s) + T^I G_i(∂𝔩/∂T_I) + b_i
//! ```
//!
//! where `D` and `G` are the boundary-aware operators of [`crate::ops`] fed
//! with the closure face states and fluxes, `σ = σ_adv − σ_ext`, and the
//! velocity tendency is recovered from `ṁ = Ṁ(u + R) + M u̇`. The *velocity*
//! formulation (Euler, rotating and shallow-water families) advances `u`
//! directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Kind};
use crate::grid::Grid;
use crate::models::{Family, Model, TensorKind};
use crate::ops::{div_with_flux, grad_with_faces};
use crate::sources::{BoundaryEval, BulkFields, FaceData, RowResiduals, Sources};
use crate::state::State;
use crate::tensor::{swap_slots, Tensor};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    #[default]
    Momentum,
    Velocity,
}

/// Time derivatives of every prognostic array, plus the implied `ṁ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub du: Vec<[f64; 2]>,
    pub dm: Vec<[f64; 2]>,
    pub drho: Vec<Vec<f64>>,
    pub ds: Option<Vec<f64>>,
    pub dtensor: Option<Vec<f64>>,
}

impl Tendency {
    pub fn as_state(&self) -> State {
        State {
            t: 0.0,
            u: self.du.clone(),
            rho: self.drho.clone(),
            s: self.ds.clone(),
            tensor: self.dtensor.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.as_state().all_finite() && self.dm.iter().all(|v| v[0].is_finite() && v[1].is_finite())
    }
}

/// Stress `σ^c_d` (row-major `[c*2 + d]`) induced by an advected tensor of type
/// (up, down) and kind `kind`, with `dl` stored in the same slot order as `t`.
pub fn stress_point(
    dim: usize,
    up: usize,
    down: usize,
    kind: TensorKind,
    t: &[f64],
    dl: &[f64],
) -> Result<[f64; 4]> {
    let tt = Tensor::from_data(dim, up, down, t.to_vec())?;
    let dd = Tensor::from_data(dim, down, up, swap_slots(dim, up, down, dl))?;
    let s = tt.hat_contract(&dd)?;
    let mut out = [0.0; 4];
    for c in 0..dim {
        for d in 0..dim {
            out[c * 2 + d] = s[c * dim + d];
        }
    }
    if kind == TensorKind::Field {
        let pair: f64 = t.iter().zip(dl).map(|(a, b)| a * b).sum();
        for c in 0..dim {
            out[c * 2 + c] += pair;
        }
    }
    Ok(out)
}

/// Advective stress of the model at one point: `σ_π`, `σ_κ`, or `B ⊗ ∂𝔩/∂B` for MHD.
pub fn advective_stress(model: &Model, tensor: &[f64], dl: &[f64]) -> Result<[f64; 4]> {
    match model.tensor_layout() {
        None => Ok([0.0; 4]),
        Some((up, down, kind, _)) => {
            let kind = if model.family() == Family::Mhd {
                TensorKind::Density
            } else {
                kind
            };
            stress_point(model.grid.dim, up, down, kind, tensor, dl)
        }
    }
}

/// Field-level stress assembly: the kind of `advected` selects σ_π (density) or σ_κ (function).
pub fn assemble_stress(advected: &Field, dl_dadv: &Field) -> Result<Field> {
    let (up, down) = advected.rank();
    if dl_dadv.rank() != (down, up) {
        return Err(Error::Shape(format!("∂𝔩/∂T must have type ({down},{up})")));
    }
    if !advected.same_grid(dl_dadv) {
        return Err(Error::Shape("fields live on different grids".into()));
    }
    let kind = match advected.kind() {
        Kind::Density => TensorKind::Density,
        Kind::Function => TensorKind::Field,
    };
    let g = advected.grid();
    let dim = g.dim;
    let mut data = Vec::with_capacity(g.n_cells() * dim * dim);
    for c in 0..g.n_cells() {
        let dl = swap_slots(dim, down, up, dl_dadv.value(c));
        let s = stress_point(dim, up, down, kind, advected.value(c), &dl)?;
        for a in 0..dim {
            for b in 0..dim {
                data.push(s[a * 2 + b]);
            }
        }
    }
    Field::new(g.clone(), 1, 1, Kind::Density, data)
}

fn face_array(be: &BoundaryEval, f: impl Fn(&FaceData) -> f64) -> Vec<f64> {
    be.faces.iter().map(f).collect()
}

/// A model with its sources and integration settings.
#[derive(Debug, Clone)]
pub struct Solver {
    pub model: Model,
    pub sources: Sources,
    pub formulation: Formulation,
    pub cfl: f64,
}

pub const DEFAULT_CFL: f64 = 0.5;

impl Solver {
    pub fn new(model: Model, sources: Sources, formulation: Formulation) -> Result<Self> {
        if formulation == Formulation::Velocity
            && !matches!(
                model.family(),
                Family::Euler | Family::EulerRotatingGravity | Family::ShallowWaterRotating
            )
        {
            return Err(Error::Model(format!(
                "velocity formulation is only available for euler, rotating and shallow-water models, not '{}'",
                model.family().name()
            )));
        }
        Ok(Self {
            model,
            sources,
            formulation,
            cfl: DEFAULT_CFL,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.model.grid
    }

    pub fn check_state(&self, state: &State) -> Result<()> {
        state.check_shape(
            self.grid().n_cells(),
            self.model.n_rho(),
            self.model.tensor_ncomp(),
        )?;
        if self.model.requires_entropy() && state.s.is_none() {
            return Err(Error::Shape(
                "this state equation needs an entropy density".into(),
            ));
        }
        Ok(())
    }

    /// Bulk fields and boundary data at the state's time.
    pub fn realize(&self, state: &State) -> Result<(BulkFields, BoundaryEval)> {
        let bulk = self.sources.evaluate_bulk(&self.model, state.t);
        let be = self
            .sources
            .evaluate_boundary(&self.model, state, state.t)?;
        Ok((bulk, be))
    }

    pub fn tendency(&self, state: &State) -> Result<Tendency> {
        let (bulk, be) = self.realize(state)?;
        self.tendency_with(state, &bulk, &be)
    }

    /// Boundary data with the per-row residual report on face states and raw traces.
    /// The Korteweg row `∇ρ·n` is measured on the Neumann face gradient.
    pub fn boundary_report(
        &self,
        state: &State,
    ) -> Result<(BoundaryEval, RowResiduals, RowResiduals)> {
        let be = self
            .sources
            .evaluate_boundary(&self.model, state, state.t)?;
        let (mut a, b) = be.row_residuals(self.grid(), None);
        if self.model.family() == Family::EulerKorteweg {
            let g = self.grid();
            let rho = &state.rho[0];
            let qb: Vec<f64> = g.faces.iter().map(|f| rho[f.cell]).collect();
            for (k, f) in g.faces.iter().enumerate() {
                let h = g.dx[f.side.axis()];
                let dn = (qb[k] - rho[f.cell]) / (0.5 * h);
                a.korteweg = a.korteweg.max((self.model.spec.lambda * dn).abs());
            }
        }
        Ok((be, a, b))
    }

    /// Tendency for given bulk fields and boundary data.
    pub fn tendency_with(
        &self,
        state: &State,
        bulk: &BulkFields,
        be: &BoundaryEval,
    ) -> Result<Tendency> {
        self.check_state(state)?;
        let g = self.grid();
        let n = g.n_cells();
        let model = &self.model;

        let mut drho = Vec::with_capacity(state.rho.len());
        for (k, rho) in state.rho.iter().enumerate() {
            let flux: Vec<[f64; 2]> = (0..n)
                .map(|c| [rho[c] * state.u[c][0], rho[c] * state.u[c][1]])
                .collect();
            let fb = face_array(be, |f| -f.flux.j_rho[k]);
            let d = div_with_flux(g, &flux, &fb);
            drho.push(
                d.iter()
                    .zip(&bulk.theta_rho[k])
                    .map(|(d, th)| -d + th)
                    .collect::<Vec<_>>(),
            );
        }
        let ds = state.s.as_ref().map(|s| {
            let flux: Vec<[f64; 2]> = (0..n)
                .map(|c| [s[c] * state.u[c][0], s[c] * state.u[c][1]])
                .collect();
            let fb = face_array(be, |f| -f.flux.j_s);
            let d = div_with_flux(g, &flux, &fb);
            d.iter()
                .zip(&bulk.theta_s)
                .map(|(d, th)| -d + th)
                .collect::<Vec<_>>()
        });

        let mut t = match self.formulation {
            Formulation::Momentum => self.momentum_tendency(state, bulk, be, drho, ds)?,
            Formulation::Velocity => self.velocity_tendency(state, bulk, be, drho, ds)?,
        };
        if model.tensor_ncomp() > 0 {
            t.dtensor = Some(self.tensor_tendency(state, bulk, be));
        }
        if !t.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite tendency at t = {}",
                state.t
            )));
        }
        Ok(t)
    }

    fn grad_u(&self, state: &State, be: &BoundaryEval) -> Vec<[[f64; 2]; 2]> {
        // out[cell][c][d] = G_c(u^d)
        let g = self.grid();
        let n = g.n_cells();
        let mut out = vec![[[0.0; 2]; 2]; n];
        for d in 0..g.dim {
            let q: Vec<f64> = state.u.iter().map(|v| v[d]).collect();
            let qb = face_array(be, |f| f.state.u[d]);
            let gr = grad_with_faces(g, &q, &qb);
            for c in 0..n {
                out[c][0][d] = gr[c][0];
                out[c][1][d] = gr[c][1];
            }
        }
        out
    }

    fn momentum_tendency(
        &self,
        state: &State,
        bulk: &BulkFields,
        be: &BoundaryEval,
        drho: Vec<Vec<f64>>,
        ds: Option<Vec<f64>>,
    ) -> Result<Tendency> {
        let g = self.grid();
        let model = &self.model;
        let n = g.n_cells();
        let dim = g.dim;
        let locals = model.locals(state)?;
        let lap = model.korteweg_laplacian(state);
        let lam = model.spec.lambda;
        let nt = model.tensor_ncomp();

        let mut sigma = Vec::with_capacity(n);
        for c in 0..n {
            let sa = advective_stress(model, state.tensor_at(c, nt), &locals[c].dl_dtensor)?;
            let se = bulk.sigma_ext[c];
            sigma.push([sa[0] - se[0], sa[1] - se[1], sa[2] - se[2], sa[3] - se[3]]);
        }
        let gu = self.grad_u(state, be);

        let mut dm: Vec<[f64; 2]> = bulk.b.clone();
        for i in 0..dim {
            let flux: Vec<[f64; 2]> = (0..n)
                .map(|c| {
                    let (u, m) = (state.u[c], locals[c].m[i]);
                    [u[0] * m + sigma[c][i], u[1] * m + sigma[c][2 + i]]
                })
                .collect();
            let fb = face_array(be, |f| -f.flux.j_mom[i]);
            let d = div_with_flux(g, &flux, &fb);
            for c in 0..n {
                let m = locals[c].m;
                dm[c][i] += -d[c] - (0..dim).map(|k| m[k] * gu[c][i][k]).sum::<f64>();
            }
        }
        for (k, rho) in state.rho.iter().enumerate() {
            let psi: Vec<f64> = (0..n)
                .map(|c| locals[c].dl_drho[k] + lam * lap[c])
                .collect();
            let psib = face_array(be, |f| f.state.psi[k]);
            let gp = grad_with_faces(g, &psi, &psib);
            for c in 0..n {
                dm[c][0] += rho[c] * gp[c][0];
                dm[c][1] += rho[c] * gp[c][1];
            }
        }
        if let Some(s) = &state.s {
            let q: Vec<f64> = locals.iter().map(|l| l.dl_ds).collect();
            let qb = face_array(be, |f| f.state.local.dl_ds);
            let gq = grad_with_faces(g, &q, &qb);
            for c in 0..n {
                dm[c][0] += s[c] * gq[c][0];
                dm[c][1] += s[c] * gq[c][1];
            }
        }
        for comp in 0..nt {
            let q: Vec<f64> = locals.iter().map(|l| l.dl_dtensor[comp]).collect();
            let qb = face_array(be, |f| f.state.local.dl_dtensor[comp]);
            let gq = grad_with_faces(g, &q, &qb);
            for c in 0..n {
                let tc = state.tensor_at(c, nt)[comp];
                dm[c][0] += tc * gq[c][0];
                dm[c][1] += tc * gq[c][1];
            }
        }
        if dim == 1 {
            dm.iter_mut().for_each(|v| v[1] = 0.0);
        }
        let rot = model.has_rotation();
        let du = (0..n)
            .map(|c| {
                let mdot: f64 = drho.iter().map(|d| d[c]).sum();
                let r = if rot { model.r[c] } else { [0.0; 2] };
                let mass = locals[c].mass;
                let u = state.u[c];
                [
                    (dm[c][0] - mdot * (u[0] + r[0])) / mass,
                    (dm[c][1] - mdot * (u[1] + r[1])) / mass,
                ]
            })
            .collect();
        Ok(Tendency {
            du,
            dm,
            drho,
            ds,
            dtensor: None,
        })
    }

    fn velocity_tendency(
        &self,
        state: &State,
        bulk: &BulkFields,
        be: &BoundaryEval,
        drho: Vec<Vec<f64>>,
        ds: Option<Vec<f64>>,
    ) -> Result<Tendency> {
        let g = self.grid();
        let model = &self.model;
        let n = g.n_cells();
        let dim = g.dim;
        let locals = model.locals(state)?;
        let gu = self.grad_u(state, be);
        let rot = model.has_rotation();
        let two_omega = model.curl_r();

        // force potential: p/ρ is handled through G(p)/ρ; SW uses g(h+Z)
        let (gforce, by_rho): (Vec<[f64; 2]>, bool) =
            if model.family() == Family::ShallowWaterRotating {
                let gc = model.spec.g_const;
                let q: Vec<f64> = (0..n)
                    .map(|c| gc * (state.rho[0][c] + model.z[c]))
                    .collect();
                let qb = face_array(be, |f| f.state.local.g);
                (grad_with_faces(g, &q, &qb), false)
            } else {
                let q: Vec<f64> = locals.iter().map(|l| l.p).collect();
                let qb = face_array(be, |f| f.state.local.p);
                (grad_with_faces(g, &q, &qb), true)
            };
        let gphi = if model.family() == Family::EulerRotatingGravity {
            let qb = model.phi_face.clone();
            grad_with_faces(g, &model.phi, &qb)
        } else {
            vec![[0.0; 2]; n]
        };

        let mut du = vec![[0.0; 2]; n];
        let mut dm = vec![[0.0; 2]; n];
        for c in 0..n {
            let u = state.u[c];
            let rho = locals[c].mass;
            let r = if rot { model.r[c] } else { [0.0; 2] };
            let th: f64 = bulk.theta_rho.iter().map(|t| t[c]).sum();
            let cor = if dim == 2 {
                [-two_omega[c] * u[1], two_omega[c] * u[0]]
            } else {
                [0.0; 2]
            };
            for i in 0..dim {
                let adv: f64 = (0..dim).map(|k| u[k] * gu[c][k][i]).sum();
                let force = if by_rho {
                    gforce[c][i] / rho
                } else {
                    gforce[c][i]
                };
                du[c][i] =
                    -adv - cor[i] - force - gphi[c][i] + (bulk.b[c][i] - th * (u[i] + r[i])) / rho;
            }
            let mdot: f64 = drho.iter().map(|d| d[c]).sum();
            for i in 0..dim {
                dm[c][i] = mdot * (u[i] + r[i]) + rho * du[c][i];
            }
        }
        Ok(Tendency {
            du,
            dm,
            drho,
            ds,
            dtensor: None,
        })
    }

    fn tensor_tendency(&self, state: &State, bulk: &BulkFields, be: &BoundaryEval) -> Vec<f64> {
        let g = self.grid();
        let model = &self.model;
        let n = g.n_cells();
        let dim = g.dim;
        let (up, down, kind, nt) = model.tensor_layout().expect("tensor model");
        let tensor = state.tensor.as_ref().expect("checked shape");
        let comp = |k: usize| -> Vec<f64> { (0..n).map(|c| tensor[c * nt + k]).collect() };
        let mut out = bulk.theta_tensor.clone();
        if model.family() == Family::Mhd {
            // Ḃ = −div(u⊗B − B⊗u) in the bulk; the boundary carries j_B = −(u·n)B
            for d in 0..dim {
                let flux: Vec<[f64; 2]> = (0..n)
                    .map(|c| {
                        let (u, b) = (state.u[c], &tensor[c * nt..c * nt + nt]);
                        [
                            u[0] * b[d] - b[0] * state.u[c][d],
                            u[1] * b[d] - b[1] * state.u[c][d],
                        ]
                    })
                    .collect();
                let fb = face_array(be, |f| -f.flux.j_tensor[d]);
                let dv = div_with_flux(g, &flux, &fb);
                for c in 0..n {
                    out[c * nt + d] -= dv[c];
                }
            }
            return out;
        }
        let gu = self.grad_u(state, be);
        for k in 0..nt {
            let q = comp(k);
            let qb = face_array(be, |f| f.state.tensor[k]);
            match kind {
                TensorKind::Density => {
                    let flux: Vec<[f64; 2]> = (0..n)
                        .map(|c| [state.u[c][0] * q[c], state.u[c][1] * q[c]])
                        .collect();
                    let fb = face_array(be, |f| -f.flux.j_tensor[k]);
                    let dv = div_with_flux(g, &flux, &fb);
                    for c in 0..n {
                        out[c * nt + k] -= dv[c];
                    }
                }
                TensorKind::Field => {
                    let gq = grad_with_faces(g, &q, &qb);
                    for c in 0..n {
                        out[c * nt + k] -= state.u[c][0] * gq[c][0] + state.u[c][1] * gq[c][1];
                    }
                }
            }
        }
        for c in 0..n {
            let t = Tensor {
                up,
                down,
                dim,
                data: tensor[c * nt..(c + 1) * nt].to_vec(),
            };
            let mut gm = vec![0.0; dim * dim];
            for a in 0..dim {
                for b in 0..dim {
                    gm[a * dim + b] = gu[c][a][b];
                }
            }
            let h = t.hat_apply(&gm);
            for k in 0..nt {
                out[c * nt + k] -= h.data[k];
            }
        }
        out
    }

    /// Largest signal speed `|u| + c` over the cells.
    pub fn max_signal_speed(&self, state: &State) -> Result<f64> {
        let model = &self.model;
        let nt = model.tensor_ncomp();
        let dxm = self.grid().min_dx();
        let mut vmax: f64 = 0.0;
        for c in 0..state.n_cells() {
            let u = state.u[c];
            let mass: f64 = state.rho.iter().map(|r| r[c]).sum();
            let mut c2 = match (model.family(), model.eos) {
                (Family::ShallowWaterRotating, _) => model.spec.g_const * mass,
                (_, Some(eos)) => eos.sound_speed(mass, state.entropy(c))?.powi(2),
                _ => 0.0,
            };
            let t2: f64 = state.tensor_at(c, nt).iter().map(|v| v * v).sum();
            c2 += match model.family() {
                Family::Mhd => t2 / mass,
                Family::TensorAdvected => {
                    2.0 * model.spec.tensor.as_ref().map_or(1.0, |t| t.mu) * t2 / mass
                }
                Family::EulerKorteweg => {
                    model.spec.lambda * mass * (std::f64::consts::PI / dxm).powi(2)
                }
                _ => 0.0,
            };
            vmax = vmax.max((u[0] * u[0] + u[1] * u[1]).sqrt() + c2.max(0.0).sqrt());
        }
        Ok(vmax)
    }

    /// Largest admissible step `cfl · Δx_min / max(|u| + c)`.
    pub fn cfl_bound(&self, state: &State) -> Result<f64> {
        let v = self.max_signal_speed(state)?;
        Ok(if v > 0.0 {
            self.cfl * self.grid().min_dx() / v
        } else {
            f64::INFINITY
        })
    }

    /// One classical RK4 step; sources and closures are re-evaluated at each stage time.
    pub fn step(&self, state: &State, dt: f64) -> Result<State> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let bound = self.cfl_bound(state)?;
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, bound });
        }
        self.rk4(state, dt)
    }

    /// RK4 without the CFL guard.
    pub fn rk4(&self, state: &State, dt: f64) -> Result<State> {
        let stage = |base: &State, k: &Tendency, h: f64, t: f64| {
            let mut s = base.axpy(h, &k.as_state());
            s.t = t;
            s
        };
        let t0 = state.t;
        let k1 = self.tendency(state)?;
        let k2 = self.tendency(&stage(state, &k1, 0.5 * dt, t0 + 0.5 * dt))?;
        let k3 = self.tendency(&stage(state, &k2, 0.5 * dt, t0 + 0.5 * dt))?;
        let k4 = self.tendency(&stage(state, &k3, dt, t0 + dt))?;
        let mut out = state
            .axpy(dt / 6.0, &k1.as_state())
            .axpy(dt / 3.0, &k2.as_state())
            .axpy(dt / 3.0, &k3.as_state())
            .axpy(dt / 6.0, &k4.as_state());
        out.t = t0 + dt;
        if !out.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite state after step to t = {}",
                out.t
            )));
        }
        Ok(out)
    }

    /// Advances to `t_end` with steps of at most `dt_max` (or the CFL bound).
    pub fn advance(&self, state: &State, t_end: f64, dt_max: Option<f64>) -> Result<State> {
        let mut s = state.clone();
        while s.t < t_end - 1e-14 * t_end.abs().max(1.0) {
            let bound = self.cfl_bound(&s)?;
            let dt = dt_max.map_or(bound, |d| d.min(bound)).min(t_end - s.t);
            s = self.step(&s, dt)?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::grid::Grid;
    use crate::models::{ModelSpec, TensorSpec};
    use crate::sources::{BulkSpec, FluxClosure, Mode};
    use crate::thermo::StateEquation;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn grid2(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[n, n], &[]).unwrap())
    }

    fn closed(model: Model) -> Solver {
        let src = Sources::closed(&model).unwrap();
        Solver::new(model, src, Formulation::Momentum).unwrap()
    }

    #[test]
    fn stress_table_examples() {
        let s = stress_point(2, 1, 0, TensorKind::Density, &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(s, [3.0, 4.0, 6.0, 8.0]);
        let s = stress_point(2, 0, 1, TensorKind::Density, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(s, [0.0, 0.0, -1.0, 0.0]);
        let m = Model::new(
            ModelSpec::new(Family::Mhd),
            Some(StateEquation::barotropic(1.0, 2.0)),
            grid2(4),
        )
        .unwrap();
        assert_eq!(
            advective_stress(&m, &[1.0, 0.0], &[-1.0, 0.0]).unwrap(),
            [-1.0, 0.0, 0.0, 0.0]
        );
    }

    fn int_tensor(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-5i32..=5).prop_map(f64::from), len)
    }

    fn sym(v: &[f64]) -> Vec<f64> {
        vec![v[0], v[1], v[1], v[2]]
    }

    fn antisym(a: f64) -> Vec<f64> {
        vec![0.0, a, -a, 0.0]
    }

    proptest! {
        #[test]
        fn generic_stress_matches_closed_forms(a in int_tensor(3), b in int_tensor(3), v in int_tensor(2), w in int_tensor(2), x in -5i32..5, y in -5i32..5) {
            let d = 2;
            let kd = |c: usize, e: usize| if c == e { 1.0 } else { 0.0 };
            // σ_π rows
            let s = stress_point(d, 1, 0, TensorKind::Density, &v, &w).unwrap();
            for c in 0..2 { for e in 0..2 { prop_assert_eq!(s[c*2+e], v[c] * w[e]); } }
            let s = stress_point(d, 0, 1, TensorKind::Density, &v, &w).unwrap();
            for c in 0..2 { for e in 0..2 { prop_assert_eq!(s[c*2+e], -v[e] * w[c]); } }
            let (p, l) = (sym(&a), sym(&b));
            let s = stress_point(d, 2, 0, TensorKind::Density, &p, &l).unwrap();
            for c in 0..2 { for e in 0..2 {
                let want: f64 = (0..2).map(|i| 2.0 * p[i*2+c] * l[i*2+e]).sum();
                prop_assert_eq!(s[c*2+e], want);
            } }
            let s = stress_point(d, 0, 2, TensorKind::Density, &p, &l).unwrap();
            for c in 0..2 { for e in 0..2 {
                let want: f64 = (0..2).map(|i| -2.0 * p[i*2+e] * l[i*2+c]).sum();
                prop_assert_eq!(s[c*2+e], want);
            } }
            // σ_κ rows
            let s = stress_point(d, 1, 0, TensorKind::Field, &v, &w).unwrap();
            let pair = v[0]*w[0] + v[1]*w[1];
            for c in 0..2 { for e in 0..2 { prop_assert_eq!(s[c*2+e], pair * kd(c, e) + v[c] * w[e]); } }
            let s = stress_point(d, 0, 1, TensorKind::Field, &v, &w).unwrap();
            for c in 0..2 { for e in 0..2 { prop_assert_eq!(s[c*2+e], pair * kd(c, e) - v[e] * w[c]); } }
            let (k, l) = (antisym(x as f64), antisym(y as f64));
            let s = stress_point(d, 0, 2, TensorKind::Field, &k, &l).unwrap();
            let pair: f64 = k.iter().zip(&l).map(|(p, q)| p * q).sum();
            for c in 0..2 { for e in 0..2 {
                let want: f64 = pair * kd(c, e) - (0..2).map(|i| 2.0 * k[i*2+e] * l[i*2+c]).sum::<f64>();
                prop_assert_eq!(s[c*2+e], want);
            } }
        }
    }

    #[test]
    fn field_level_assembly_matches_pointwise() {
        let g = grid2(4);
        let t = Field::from_fn(g.clone(), 1, 1, Kind::Density, |x| {
            vec![x[0], 1.0, -x[1], 2.0]
        })
        .unwrap();
        let dl = Field::from_fn(g.clone(), 1, 1, Kind::Function, |x| {
            vec![0.5, x[1], 3.0, -1.0]
        })
        .unwrap();
        let s = assemble_stress(&t, &dl).unwrap();
        assert_eq!(s.rank(), (1, 1));
        for c in 0..g.n_cells() {
            let want = stress_point(
                2,
                1,
                1,
                TensorKind::Density,
                t.value(c),
                &swap_slots(2, 1, 1, dl.value(c)),
            )
            .unwrap();
            assert_eq!(s.value(c), &want[..]);
        }
        assert!(assemble_stress(&t, &t.clone().with_kind(Kind::Function).scale(1.0)).is_ok());
        let bad = Field::zeros(g, 1, 0, Kind::Function);
        assert!(assemble_stress(&t, &bad).is_err());
    }

    fn uniform(n: usize, rho: f64, u: [f64; 2], s: Option<f64>, tensor: Option<Vec<f64>>) -> State {
        State {
            t: 0.0,
            u: vec![u; n],
            rho: vec![vec![rho; n]],
            s: s.map(|s| vec![s; n]),
            tensor: tensor.map(|t| t.iter().cycle().take(n * t.len()).copied().collect()),
        }
    }

    #[test]
    fn uniform_state_at_rest_has_zero_tendency() {
        let m = Model::new(
            ModelSpec::new(Family::Euler),
            Some(StateEquation::ideal_gas(2.5, 1.4, 1.0, 1.0, 0.0)),
            grid2(8),
        )
        .unwrap();
        let sol = closed(m);
        let t = sol
            .tendency(&uniform(64, 1.3, [0.0; 2], Some(0.2), None))
            .unwrap();
        assert!(t
            .du
            .iter()
            .all(|v| v[0].abs() < 1e-14 && v[1].abs() < 1e-14));
        assert!(t.drho[0].iter().all(|v| v.abs() < 1e-14));
        let next = sol
            .step(&uniform(64, 1.3, [0.0; 2], Some(0.2), None), 0.01)
            .unwrap();
        assert!((next.rho[0][10] - 1.3).abs() < 1e-14);
    }

    #[test]
    fn linear_density_transport_1d() {
        let g = Arc::new(Grid::new(1, &[[0.0, 1.0]], &[16], &[]).unwrap());
        let m = Model::new(
            ModelSpec::new(Family::Euler),
            Some(StateEquation::barotropic(1.0, 2.0)),
            g.clone(),
        )
        .unwrap();
        let st = State {
            t: 0.0,
            u: vec![[1.0, 0.0]; 16],
            rho: vec![(0..16).map(|c| 1.0 + 0.1 * g.center(c)[0]).collect()],
            s: None,
            tensor: None,
        };
        let sol = Solver::new(
            m.clone(),
            Sources::new(BulkSpec::default(), free_open(&g), &m).unwrap(),
            Formulation::Momentum,
        )
        .unwrap();
        let t = sol.tendency(&st).unwrap();
        for c in 0..16 {
            assert!((t.drho[0][c] + 0.1).abs() < 1e-12, "{c}: {}", t.drho[0][c]);
        }
    }

    fn free_open(g: &Grid) -> Vec<FluxClosure> {
        g.patches
            .iter()
            .map(|p| FluxClosure::new(&p.name, Mode::FreeOpen))
            .collect()
    }

    #[test]
    fn mhd_constant_fields_are_steady() {
        let g = grid2(8);
        let m = Model::new(
            ModelSpec::new(Family::Mhd),
            Some(StateEquation::barotropic(1.0, 2.0)),
            g.clone(),
        )
        .unwrap();
        let sol = Solver::new(
            m.clone(),
            Sources::new(BulkSpec::default(), free_open(&g), &m).unwrap(),
            Formulation::Momentum,
        )
        .unwrap();
        let t = sol
            .tendency(&uniform(64, 1.0, [0.3, -0.2], None, Some(vec![0.5, 0.7])))
            .unwrap();
        // open faces carry only −(u·n)B, so boundary cells see B·n enter or leave
        let db = t.dtensor.unwrap();
        for (c, v) in db.chunks(2).enumerate() {
            let (i, j) = (c % 8, c / 8);
            if (1..7).contains(&i) && (1..7).contains(&j) {
                assert!(v.iter().all(|x| x.abs() < 1e-13), "{c}: {v:?}");
            }
        }
        assert!(t
            .du
            .iter()
            .all(|v| v[0].abs() < 1e-13 && v[1].abs() < 1e-13));
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let m = Model::new(
            ModelSpec::new(Family::Euler),
            Some(StateEquation::barotropic(1.0, 2.0)),
            grid2(8),
        )
        .unwrap();
        let sol = closed(m);
        let st = uniform(64, 1.0, [0.0; 2], None, None);
        let bound = sol.cfl_bound(&st).unwrap();
        assert!(matches!(sol.step(&st, 2.0 * bound), Err(Error::Cfl { .. })));
    }

    #[test]
    fn velocity_formulation_rejected_for_tensor_models() {
        let mut spec = ModelSpec::new(Family::TensorAdvected);
        spec.tensor = Some(TensorSpec {
            up: 1,
            down: 0,
            kind: TensorKind::Density,
            mu: 1.0,
        });
        let m = Model::new(spec, Some(StateEquation::barotropic(1.0, 2.0)), grid2(4)).unwrap();
        let src = Sources::closed(&m).unwrap();
        assert!(Solver::new(m, src, Formulation::Velocity).is_err());
    }

    #[test]
    fn rk4_is_fourth_order_in_time() {
        // ρ_t = −(ρu)_x + θ with u = 1 and an inflow carrying ρ0(t): exact in space for linear data
        let g = Arc::new(Grid::new(1, &[[0.0, 1.0]], &[8], &[]).unwrap());
        let m = Model::new(
            ModelSpec::new(Family::Euler),
            Some(StateEquation::barotropic(1e-6, 2.0)),
            g.clone(),
        )
        .unwrap();
        let e = |s: &str| Expr::parse(s).unwrap();
        let src = Sources::new(
            BulkSpec {
                theta_rho: vec![e("cos(t)")],
                ..Default::default()
            },
            vec![
                FluxClosure::new(
                    "left",
                    Mode::Inflow {
                        u0: [e("1"), e("0")],
                        rho0: vec![e("2 + sin(t)")],
                        s0: None,
                        t0: None,
                        tensor0: vec![],
                    },
                ),
                FluxClosure::new(
                    "right",
                    Mode::OutflowViscous {
                        u0: [e("1"), e("0")],
                        t0: None,
                    },
                ),
            ],
            &m,
        )
        .unwrap();
        let sol = Solver::new(m, src, Formulation::Momentum).unwrap();
        let st = State {
            t: 0.0,
            u: vec![[1.0, 0.0]; 8],
            rho: vec![vec![2.0; 8]],
            s: None,
            tensor: None,
        };
        let run = |k: usize| {
            let mut s = st.clone();
            let dt = 0.2 / k as f64;
            for _ in 0..k {
                s = sol.rk4(&s, dt).unwrap();
            }
            s.rho[0][3]
        };
        let (a, b, c) = (run(4), run(8), run(16));
        let order = ((a - b) / (b - c)).abs().log2();
        assert!(order > 3.7, "order {order}");
    }
}
