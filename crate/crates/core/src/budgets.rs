//! Global balance audits: mass, entropy, energy and its kinetic/internal/potential split.
//!
//! Every `d_dt` is the chain rule of the discrete integral through the solver
//! tendency, so a residual measures spatial and boundary consistency only.

use serde::Serialize;

use crate::dynamics::{Solver, Tendency};
use crate::error::{Error, Result};
use crate::models::{Family, Local};
use crate::ops::grad_with_faces;
use crate::sources::{BoundaryEval, BulkFields, FaceData};
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub quantity: String,
    pub d_dt: f64,
    pub bulk: f64,
    pub boundary: f64,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    /// Magnitude the residual is judged against: the largest column, or the integrand size when larger.
    #[serde(skip)]
    pub scale: f64,
}

pub const CSV_HEADER: &str = "quantity,d_dt,bulk,boundary,residual,tol,pass";

impl BudgetReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            self.quantity, self.d_dt, self.bulk, self.boundary, self.residual, self.tol, self.pass
        )
    }

    /// Columnwise maximum difference to `other`.
    pub fn max_column_diff(&self, other: &BudgetReport) -> f64 {
        [
            (self.d_dt, other.d_dt),
            (self.bulk, other.bulk),
            (self.boundary, other.boundary),
        ]
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

pub fn to_csv(reports: &[BudgetReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// `tol = abs + c · Δx² · scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub c: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-8, c: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Total mass, or one component.
    Mass(Option<usize>),
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyForm {
    Generic,
    Euler,
    Rotating,
    ShallowWater,
}

impl EnergyForm {
    pub fn name(self) -> &'static str {
        match self {
            EnergyForm::Generic => "energy_generic",
            EnergyForm::Euler => "energy_euler",
            EnergyForm::Rotating => "energy_rotating",
            EnergyForm::ShallowWater => "energy_shallow_water",
        }
    }

    /// The model-specific form for a family, if there is one.
    pub fn specific(family: Family) -> Option<EnergyForm> {
        match family {
            Family::Euler => Some(EnergyForm::Euler),
            Family::EulerRotatingGravity => Some(EnergyForm::Rotating),
            Family::ShallowWaterRotating => Some(EnergyForm::ShallowWater),
            _ => None,
        }
    }
}

/// Integrated boundary energy flow in each equivalent form.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryForms {
    pub forms: Vec<(String, f64)>,
    /// Largest pairwise difference divided by `scale`.
    pub max_relative: f64,
    pub scale: f64,
    /// Largest violation of `j_s = (s/ρ) j_ρ` and `J = (j_ρ/ρ) ∂𝔩/∂u` over the faces;
    /// for MHD, of the cross-product identity relative to `|B||u||∂𝔩/∂B|`.
    pub relation_violation: f64,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sq(a: [f64; 2]) -> f64 {
    dot(a, a)
}

/// Everything needed to audit one state.
pub struct Audit<'a> {
    pub solver: &'a Solver,
    pub state: &'a State,
    pub bulk: BulkFields,
    pub be: BoundaryEval,
    pub tendency: Tendency,
    pub locals: Vec<Local>,
    pub tol: Tolerance,
}

impl<'a> Audit<'a> {
    pub fn new(solver: &'a Solver, state: &'a State) -> Result<Self> {
        let (bulk, be) = solver.realize(state)?;
        Self::with(solver, state, bulk, be)
    }

    pub fn with(
        solver: &'a Solver,
        state: &'a State,
        bulk: BulkFields,
        be: BoundaryEval,
    ) -> Result<Self> {
        let tendency = solver.tendency_with(state, &bulk, &be)?;
        let locals = solver.model.locals(state)?;
        Ok(Self {
            solver,
            state,
            bulk,
            be,
            tendency,
            locals,
            tol: Tolerance::default(),
        })
    }

    fn vol(&self) -> f64 {
        self.solver.grid().cell_volume()
    }

    fn report(&self, name: &str, d_dt: f64, bulk: f64, boundary: f64) -> BudgetReport {
        self.report_scaled(name, d_dt, bulk, boundary, 0.0)
    }

    /// `floor` enters the tolerance scale when the columns cancel below the size of their integrands.
    fn report_scaled(
        &self,
        name: &str,
        d_dt: f64,
        bulk: f64,
        boundary: f64,
        floor: f64,
    ) -> BudgetReport {
        let residual = d_dt - bulk - boundary;
        let h = self.solver.grid().min_dx();
        let scale = d_dt.abs().max(bulk.abs()).max(boundary.abs()).max(floor);
        let tol = self.tol.abs + self.tol.c * h * h * scale;
        BudgetReport {
            quantity: name.to_string(),
            d_dt,
            bulk,
            boundary,
            residual,
            tol,
            pass: residual.abs() <= tol,
            scale,
        }
    }

    fn cell_sum(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.state.n_cells()).map(f).sum::<f64>() * self.vol()
    }

    fn face_sum(&self, f: impl Fn(&FaceData, [f64; 2]) -> f64) -> f64 {
        let g = self.solver.grid();
        self.be
            .faces
            .iter()
            .zip(&g.faces)
            .map(|(fd, face)| f(fd, face.normal) * face.da)
            .sum()
    }

    fn r_cell(&self, c: usize) -> [f64; 2] {
        if self.solver.model.has_rotation() {
            self.solver.model.r[c]
        } else {
            [0.0; 2]
        }
    }

    fn r_face(fd: &FaceData, rot: bool) -> [f64; 2] {
        if rot {
            fd.state.r
        } else {
            [0.0; 2]
        }
    }

    pub fn quantity_budget(&self, q: Quantity) -> Result<BudgetReport> {
        let t = &self.tendency;
        match q {
            Quantity::Mass(None) => Ok(self.report(
                "mass",
                self.cell_sum(|c| t.drho.iter().map(|d| d[c]).sum()),
                self.cell_sum(|c| self.bulk.theta_rho.iter().map(|th| th[c]).sum()),
                self.face_sum(|fd, _| fd.flux.j_rho.iter().sum()),
            )),
            Quantity::Mass(Some(k)) => {
                if k >= t.drho.len() {
                    return Err(Error::Model(format!("no density component {k}")));
                }
                let name = match self.solver.model.spec.components.get(k) {
                    Some(c) => format!("mass_{}", c.name),
                    None => format!("mass_{k}"),
                };
                Ok(self.report(
                    &name,
                    self.cell_sum(|c| t.drho[k][c]),
                    self.cell_sum(|c| self.bulk.theta_rho[k][c]),
                    self.face_sum(|fd, _| fd.flux.j_rho[k]),
                ))
            }
            Quantity::Entropy => {
                let ds =
                    t.ds.as_ref()
                        .ok_or_else(|| Error::Model("state has no entropy density".into()))?;
                Ok(self.report(
                    "entropy",
                    self.cell_sum(|c| ds[c]),
                    self.cell_sum(|c| self.bulk.theta_s[c]),
                    self.face_sum(|fd, _| fd.flux.j_s),
                ))
            }
        }
    }

    /// `d/dt ∫𝔢` by the chain rule, including the discrete Korteweg gradient energy.
    pub fn energy_rate(&self) -> f64 {
        let model = &self.solver.model;
        let t = &self.tendency;
        let st = self.state;
        let nt = model.tensor_ncomp();
        let mut rate = self.cell_sum(|c| {
            let l = &self.locals[c];
            let u = st.u[c];
            let r = self.r_cell(c);
            let ur = dot(u, [u[0] + r[0], u[1] + r[1]]);
            let mut v = l.mass * dot(u, t.du[c]);
            v += l
                .dl_drho
                .iter()
                .enumerate()
                .map(|(k, d)| (ur - d) * t.drho[k][c])
                .sum::<f64>();
            if let Some(ds) = &t.ds {
                v -= l.dl_ds * ds[c];
            }
            if let Some(dt) = &t.dtensor {
                v -= (0..nt)
                    .map(|i| l.dl_dtensor[i] * dt[c * nt + i])
                    .sum::<f64>();
            }
            v
        });
        if model.family() == Family::EulerKorteweg {
            let g = self.solver.grid();
            let gr = model.korteweg_gradient(st);
            let d = &t.drho[0];
            let db: Vec<f64> = g.faces.iter().map(|f| d[f.cell]).collect();
            let gd = grad_with_faces(g, d, &db);
            rate += model.spec.lambda * self.cell_sum(|c| dot(gr[c], gd[c]));
        }
        rate
    }

    /// `Σ σ_ext : ∇u` over the cells (volume weighted).
    fn ext_stress_power(&self) -> f64 {
        if self.solver.model.spec.boundary_stress.is_none() {
            return 0.0;
        }
        let g = self.solver.grid();
        let mut gu = Vec::new();
        for d in 0..2 {
            let q: Vec<f64> = self.state.u.iter().map(|v| v[d]).collect();
            let qb: Vec<f64> = self.be.faces.iter().map(|f| f.state.u[d]).collect();
            gu.push(grad_with_faces(g, &q, &qb));
        }
        self.cell_sum(|c| {
            let s = self.bulk.sigma_ext[c];
            (0..2)
                .flat_map(|a| (0..2).map(move |d| (a, d)))
                .map(|(a, d)| s[a * 2 + d] * gu[d][c][a])
                .sum()
        })
    }

    fn theta_s_at(&self, c: usize) -> f64 {
        self.bulk.theta_s.get(c).copied().unwrap_or(0.0)
    }

    pub fn energy_budget(&self, form: EnergyForm) -> Result<BudgetReport> {
        let model = &self.solver.model;
        let fam = model.family();
        if form != EnergyForm::Generic && EnergyForm::specific(fam) != Some(form) {
            return Err(Error::Model(format!(
                "{} does not apply to the '{}' model",
                form.name(),
                fam.name()
            )));
        }
        let st = self.state;
        let b = &self.bulk;
        let nt = model.tensor_ncomp();
        let lap = model.korteweg_laplacian(st);
        let lam = model.spec.lambda;
        let rot = model.has_rotation();
        let power = self.ext_stress_power();
        let (bulk, boundary) = match form {
            EnergyForm::Generic => {
                let bulk = self.cell_sum(|c| {
                    let l = &self.locals[c];
                    let mut v = dot(b.b[c], st.u[c]);
                    v -= (0..l.dl_drho.len())
                        .map(|k| b.theta_rho[k][c] * (l.dl_drho[k] + lam * lap[c]))
                        .sum::<f64>();
                    v -= self.theta_s_at(c) * l.dl_ds;
                    v -= (0..nt)
                        .map(|i| b.theta_tensor[c * nt + i] * l.dl_dtensor[i])
                        .sum::<f64>();
                    v
                }) - power;
                let boundary = self.face_sum(|fd, _| {
                    let fs = &fd.state;
                    let fl = &fd.flux;
                    dot(fl.j_mom, fs.u)
                        - fl.j_rho
                            .iter()
                            .zip(&fs.psi)
                            .map(|(j, p)| j * p)
                            .sum::<f64>()
                        - fl.j_s * fs.local.dl_ds
                        - fl.j_tensor
                            .iter()
                            .zip(&fs.local.dl_dtensor)
                            .map(|(j, d)| j * d)
                            .sum::<f64>()
                });
                (bulk, boundary)
            }
            EnergyForm::Euler => {
                let bulk = self.cell_sum(|c| {
                    let l = &self.locals[c];
                    let u = st.u[c];
                    dot(b.b[c], u)
                        + b.theta_rho[0][c] * (l.g - 0.5 * sq(u))
                        + self.theta_s_at(c) * l.t
                }) - power;
                let boundary = self.face_sum(|fd, _| {
                    let (fs, fl) = (&fd.state, &fd.flux);
                    dot(fl.j_mom, fs.u)
                        + fl.j_rho[0] * (fs.local.g - 0.5 * sq(fs.u))
                        + fl.j_s * fs.local.t
                });
                (bulk, boundary)
            }
            EnergyForm::Rotating | EnergyForm::ShallowWater => {
                let sw = form == EnergyForm::ShallowWater;
                let pot_c = |c: usize| {
                    if sw {
                        self.locals[c].g
                    } else {
                        self.locals[c].g + model.phi[c]
                    }
                };
                let bulk = self.cell_sum(|c| {
                    let u = st.u[c];
                    let r = self.r_cell(c);
                    dot(b.b[c], u) - b.theta_rho[0][c] * (0.5 * sq(u) + dot(u, r) - pot_c(c))
                        + if sw {
                            0.0
                        } else {
                            self.theta_s_at(c) * self.locals[c].t
                        }
                }) - power;
                let phi_face = &model.phi_face;
                let boundary = self
                    .be
                    .faces
                    .iter()
                    .zip(&self.solver.grid().faces)
                    .enumerate()
                    .map(|(k, (fd, face))| {
                        let (fs, fl) = (&fd.state, &fd.flux);
                        let r = Self::r_face(fd, rot);
                        let pot = if sw {
                            fs.local.g
                        } else {
                            fs.local.g + phi_face[k]
                        };
                        let v = dot(fl.j_mom, fs.u)
                            - fl.j_rho[0] * (0.5 * sq(fs.u) + dot(fs.u, r) - pot)
                            + if sw { 0.0 } else { fl.j_s * fs.local.t };
                        v * face.da
                    })
                    .sum();
                (bulk, boundary)
            }
        };
        Ok(self.report(form.name(), self.energy_rate(), bulk, boundary))
    }

    /// Kinetic, internal (Euler-type only) and potential (rotating and shallow water) budgets.
    pub fn energy_split_budget(&self) -> Result<Vec<BudgetReport>> {
        let model = &self.solver.model;
        let fam = model.family();
        let sw = fam == Family::ShallowWaterRotating;
        let potential = matches!(
            fam,
            Family::EulerRotatingGravity | Family::ShallowWaterRotating
        );
        if !matches!(
            fam,
            Family::Euler | Family::EulerRotatingGravity | Family::ShallowWaterRotating
        ) {
            return Err(Error::Model(format!(
                "energy splits are not defined for the '{}' model",
                fam.name()
            )));
        }
        let g = self.solver.grid();
        let st = self.state;
        let t = &self.tendency;
        let b = &self.bulk;
        // force potential per cell and on the faces
        let (q, qb): (Vec<f64>, Vec<f64>) = if sw {
            (
                self.locals.iter().map(|l| l.g).collect(),
                self.be.faces.iter().map(|f| f.state.local.g).collect(),
            )
        } else {
            (
                self.locals.iter().map(|l| l.p).collect(),
                self.be.faces.iter().map(|f| f.state.local.p).collect(),
            )
        };
        let gq = grad_with_faces(g, &q, &qb);
        let gphi = if fam == Family::EulerRotatingGravity {
            grad_with_faces(g, &model.phi, &model.phi_face)
        } else {
            vec![[0.0; 2]; g.n_cells()]
        };
        // exchange with the kinetic energy
        let exchange_at = |c: usize| {
            let u = st.u[c];
            if sw {
                self.locals[c].mass * dot(u, gq[c])
            } else {
                dot(u, gq[c])
            }
        };
        let exchange = self.cell_sum(exchange_at);
        let exchange_size = self.cell_sum(|c| exchange_at(c).abs());
        let pot_work_at = |c: usize| self.locals[c].mass * dot(st.u[c], gphi[c]);
        let pot_work = self.cell_sum(pot_work_at);
        let pot_work_size = self.cell_sum(|c| pot_work_at(c).abs());

        let pot_c = |c: usize| {
            if sw {
                self.locals[c].g
            } else if potential {
                model.phi[c]
            } else {
                0.0
            }
        };
        let kin = self.report_scaled(
            "energy_kinetic",
            self.cell_sum(|c| {
                let u = st.u[c];
                self.locals[c].mass * dot(u, t.du[c]) + 0.5 * sq(u) * t.drho[0][c]
            }),
            self.cell_sum(|c| {
                let u = st.u[c];
                dot(b.b[c], u) - b.theta_rho[0][c] * (0.5 * sq(u) + dot(u, self.r_cell(c)))
            }) - exchange
                - pot_work,
            self.face_sum(|fd, _| fd.flux.j_rho[0] * 0.5 * sq(fd.state.u)),
            exchange_size.max(pot_work_size),
        );
        let mut out = vec![kin];
        if !sw {
            out.push(self.report_scaled(
                "energy_internal",
                self.cell_sum(|c| {
                    let l = &self.locals[c];
                    let u = st.u[c];
                    let r = self.r_cell(c);
                    // ∂𝔢/∂ρ minus its kinetic and potential parts
                    let de =
                        dot(u, [u[0] + r[0], u[1] + r[1]]) - l.dl_drho[0] - 0.5 * sq(u) - pot_c(c);
                    de * t.drho[0][c] - l.dl_ds * t.ds.as_ref().map_or(0.0, |d| d[c])
                }),
                exchange
                    + self.cell_sum(|c| {
                        b.theta_rho[0][c] * self.locals[c].g + self.theta_s_at(c) * self.locals[c].t
                    }),
                self.face_sum(|fd, _| {
                    fd.flux.j_rho[0] * fd.state.local.g + fd.flux.j_s * fd.state.local.t
                }),
                exchange_size,
            ));
        }
        if potential {
            let (bulk, boundary) = if sw {
                (
                    exchange + self.cell_sum(|c| b.theta_rho[0][c] * self.locals[c].g),
                    self.face_sum(|fd, _| fd.flux.j_rho[0] * fd.state.local.g),
                )
            } else {
                let phib = &model.phi_face;
                let bnd: f64 = self
                    .be
                    .faces
                    .iter()
                    .zip(&g.faces)
                    .enumerate()
                    .map(|(k, (fd, f))| fd.flux.j_rho[0] * phib[k] * f.da)
                    .sum();
                (
                    pot_work + self.cell_sum(|c| b.theta_rho[0][c] * model.phi[c]),
                    bnd,
                )
            };
            out.push(self.report_scaled(
                "energy_potential",
                self.cell_sum(|c| pot_c(c) * t.drho[0][c]),
                bulk,
                boundary,
                if sw { exchange_size } else { pot_work_size },
            ));
        }
        Ok(out)
    }

    /// Sum of the split reports as one report.
    pub fn split_total(&self) -> Result<BudgetReport> {
        let parts = self.energy_split_budget()?;
        let sum = |f: fn(&BudgetReport) -> f64| parts.iter().map(f).sum::<f64>();
        let floor = parts.iter().map(BudgetReport::scale).fold(0.0, f64::max);
        Ok(self.report_scaled(
            "energy_split_sum",
            sum(|r| r.d_dt),
            sum(|r| r.bulk),
            sum(|r| r.boundary),
            floor,
        ))
    }

    /// Every budget that applies to the model.
    pub fn all(&self) -> Result<Vec<BudgetReport>> {
        let model = &self.solver.model;
        let mut out = vec![self.quantity_budget(Quantity::Mass(None))?];
        if model.n_rho() > 1 {
            for k in 0..model.n_rho() {
                out.push(self.quantity_budget(Quantity::Mass(Some(k)))?);
            }
        }
        if self.state.s.is_some() {
            out.push(self.quantity_budget(Quantity::Entropy)?);
        }
        out.push(self.energy_budget(EnergyForm::Generic)?);
        if let Some(form) = EnergyForm::specific(model.family()) {
            out.push(self.energy_budget(form)?);
            out.extend(self.energy_split_budget()?);
        }
        Ok(out)
    }

    /// Evaluates the equivalent boundary energy-flow expressions on the face states.
    pub fn boundary_form_equivalence(&self) -> BoundaryForms {
        let model = &self.solver.model;
        let fam = model.family();
        let g = self.solver.grid();
        let mut names: Vec<&str> = vec!["J.u-j.dl/drho-j_s.dl/ds-j_T.dl/dT"];
        let plain = model.tensor_ncomp() == 0;
        if plain {
            names.extend([
                "j(m.u/rho-dl/drho)-j_s.dl/ds",
                "j(m.u/rho-dl/drho-(s/rho)dl/ds)",
                "(rho.dl/drho+s.dl/ds-u.m)(u.n)",
            ]);
        }
        if fam == Family::Euler {
            names.extend([
                "J.u+j(g-|u|^2/2)+j_s.T",
                "j(|u|^2/2+g)+j_s.T",
                "j(|u|^2/2+h)",
                "-(e+p)u.n",
            ]);
        }
        if fam == Family::Mhd {
            names.push("-(m.u)(u.n)-(dl/dB.u)(B.n)+(dl/dB.B)(u.n)");
        }
        let mut totals = vec![0.0; names.len()];
        let mut scale = 0.0;
        let mut violation: f64 = 0.0;
        for (fd, face) in self.be.faces.iter().zip(&g.faces) {
            let (fs, fl) = (&fd.state, &fd.flux);
            let n = face.normal;
            let l = &fs.local;
            let un = fs.un(n);
            let mass = l.mass;
            let j: f64 = fl.j_rho.iter().sum();
            let jpsi: f64 = fl.j_rho.iter().zip(&fs.psi).map(|(a, b)| a * b).sum();
            let jt: f64 = fl
                .j_tensor
                .iter()
                .zip(&l.dl_dtensor)
                .map(|(a, b)| a * b)
                .sum();
            let mu = dot(l.m, fs.u);
            let ju = dot(fl.j_mom, fs.u);
            let mut v = vec![ju - jpsi - fl.j_s * l.dl_ds - jt];
            scale += face.da * (ju.abs() + jpsi.abs() + (fl.j_s * l.dl_ds).abs() + jt.abs());
            if plain {
                v.push(j * mu / mass - jpsi - fl.j_s * l.dl_ds);
                v.push(j * mu / mass - jpsi - j * fs.s / mass * l.dl_ds);
                let rho_psi: f64 = fs.rho.iter().zip(&fs.psi).map(|(a, b)| a * b).sum();
                v.push((rho_psi + fs.s * l.dl_ds - mu) * un);
                violation = violation.max((fl.j_s - fs.s / mass * j).abs());
                for i in 0..2 {
                    violation = violation.max((fl.j_mom[i] - j / mass * l.m[i]).abs());
                }
            }
            if fam == Family::Euler {
                let u2 = sq(fs.u);
                v.push(ju + j * (l.g - 0.5 * u2) + fl.j_s * l.t);
                v.push(j * (0.5 * u2 + l.g) + fl.j_s * l.t);
                v.push(j * (0.5 * u2 + l.h_enth));
                v.push(-(l.energy() + l.p) * un);
            }
            if fam == Family::Mhd {
                let bb = [fs.tensor[0], fs.tensor[1]];
                let lb = [l.dl_dtensor[0], l.dl_dtensor[1]];
                let rho_psi: f64 = fs.rho.iter().zip(&fs.psi).map(|(a, b)| a * b).sum();
                // the mass part −j ∂𝔩/∂ρ = ρ ∂𝔩/∂ρ (u·n) is added to close the identity
                v.push(-mu * un - dot(lb, fs.u) * dot(bb, n) + dot(lb, bb) * un + rho_psi * un);
                let lift = |a: [f64; 2]| [a[0], a[1], 0.0];
                let size = (sq(bb) * sq(fs.u) * sq(lb)).sqrt();
                if size > 0.0 {
                    violation =
                        violation.max(cross_identity_defect(lift(bb), lift(fs.u), lift(lb)) / size);
                }
            }
            scale += face.da * v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
            for (t, x) in totals.iter_mut().zip(v) {
                *t += x * face.da;
            }
        }
        let mut max_diff: f64 = 0.0;
        for a in 0..totals.len() {
            for b in a + 1..totals.len() {
                max_diff = max_diff.max((totals[a] - totals[b]).abs());
            }
        }
        BoundaryForms {
            forms: names.into_iter().map(String::from).zip(totals).collect(),
            max_relative: if scale > 0.0 {
                max_diff / scale
            } else {
                max_diff
            },
            scale,
            relation_violation: violation,
        }
    }
}

/// `(B×u)×L = (L·B)u − (L·u)B` for 3-vectors; returns the largest component difference.
pub fn cross_identity_defect(b: [f64; 3], u: [f64; 3], l: [f64; 3]) -> f64 {
    let cross = |a: [f64; 3], c: [f64; 3]| {
        [
            a[1] * c[2] - a[2] * c[1],
            a[2] * c[0] - a[0] * c[2],
            a[0] * c[1] - a[1] * c[0],
        ]
    };
    let d3 = |a: [f64; 3], c: [f64; 3]| a[0] * c[0] + a[1] * c[1] + a[2] * c[2];
    let lhs = cross(cross(b, u), l);
    let (lb, lu) = (d3(l, b), d3(l, u));
    (0..3)
        .map(|i| (lhs[i] - (lb * u[i] - lu * b[i])).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Formulation;
    use crate::expr::Expr;
    use crate::grid::Grid;
    use crate::models::{Model, ModelSpec};
    use crate::sources::{BulkSpec, FluxClosure, Mode, Sources};
    use crate::thermo::StateEquation;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn e(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn euler(n: usize, dim: usize) -> Model {
        let g = if dim == 1 {
            Grid::new(1, &[[0.0, 1.0]], &[n], &[]).unwrap()
        } else {
            Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[n, n], &[]).unwrap()
        };
        Model::new(
            ModelSpec::new(Family::Euler),
            Some(StateEquation::ideal_gas(2.5, 1.4, 1.0, 1.0, 0.0)),
            Arc::new(g),
        )
        .unwrap()
    }

    fn smooth(m: &Model, u0: f64) -> State {
        let g = &m.grid;
        let n = g.n_cells();
        State {
            t: 0.0,
            u: (0..n)
                .map(|c| {
                    let x = g.center(c);
                    [
                        u0 * (1.0 + 0.2 * x[1]),
                        0.1 * (x[0] * 3.0).sin() * if g.dim == 2 { 1.0 } else { 0.0 },
                    ]
                })
                .collect(),
            rho: vec![(0..n)
                .map(|c| 1.0 + 0.2 * (g.center(c)[0] * 2.0).cos())
                .collect()],
            s: Some((0..n).map(|c| 0.1 + 0.05 * g.center(c)[1]).collect()),
            tensor: None,
        }
    }

    fn solver(m: Model, bulk: BulkSpec, closures: Vec<FluxClosure>) -> Solver {
        let src = Sources::new(bulk, closures, &m).unwrap();
        Solver::new(m, src, Formulation::Momentum).unwrap()
    }

    #[test]
    fn closed_zero_sources_conserve_mass_and_entropy() {
        let m = euler(8, 2);
        let src = Sources::closed(&m).unwrap();
        let s = Solver::new(m.clone(), src, Formulation::Momentum).unwrap();
        let st = smooth(&m, 0.0);
        let a = Audit::new(&s, &st).unwrap();
        for q in [Quantity::Mass(None), Quantity::Entropy] {
            let r = a.quantity_budget(q).unwrap();
            assert!(r.d_dt.abs() < 1e-13 && r.residual.abs() < 1e-13, "{r:?}");
        }
    }

    #[test]
    fn constant_mass_source_gives_its_rate() {
        let m = euler(8, 2);
        let closures = m
            .grid
            .patches
            .iter()
            .map(|p| FluxClosure::new(&p.name, Mode::Closed))
            .collect();
        let s = solver(
            m.clone(),
            BulkSpec {
                theta_rho: vec![e("0.1")],
                ..Default::default()
            },
            closures,
        );
        let r = Audit::new(&s, &smooth(&m, 0.0))
            .unwrap()
            .quantity_budget(Quantity::Mass(None))
            .unwrap();
        assert!((r.d_dt - 0.1).abs() < 1e-13 && (r.bulk - 0.1).abs() < 1e-13 && r.pass);
    }

    #[test]
    fn inflow_boundary_column_is_the_flux_times_length() {
        let m = euler(8, 2);
        let closures = m
            .grid
            .patches
            .iter()
            .map(|p| {
                let mode = if p.name == "left" {
                    Mode::Inflow {
                        u0: [e("0.3"), e("0")],
                        rho0: vec![e("1")],
                        s0: Some(e("0.1")),
                        t0: None,
                        tensor0: vec![],
                    }
                } else {
                    Mode::Closed
                };
                FluxClosure::new(&p.name, mode)
            })
            .collect();
        let s = solver(m.clone(), BulkSpec::default(), closures);
        let r = Audit::new(&s, &smooth(&m, 0.0))
            .unwrap()
            .quantity_budget(Quantity::Mass(None))
            .unwrap();
        assert!((r.boundary - 0.3).abs() < 1e-14, "{r:?}");
        assert!(r.residual.abs() < 1e-13);
    }

    #[test]
    fn entropy_source_enters_as_temperature_work() {
        let m = euler(8, 2);
        let closures = m
            .grid
            .patches
            .iter()
            .map(|p| FluxClosure::new(&p.name, Mode::Closed))
            .collect();
        let s = solver(
            m.clone(),
            BulkSpec {
                theta_s: Some(e("0.2 + x")),
                ..Default::default()
            },
            closures,
        );
        let st = smooth(&m, 0.0);
        let a = Audit::new(&s, &st).unwrap();
        let r = a.energy_budget(EnergyForm::Euler).unwrap();
        let g = &m.grid;
        let want: f64 = (0..g.n_cells())
            .map(|c| {
                let x = g.center(c);
                (0.2 + x[0])
                    * m.eos
                        .unwrap()
                        .temperature_of(st.rho[0][c], st.s.as_ref().unwrap()[c])
                        .unwrap()
            })
            .sum::<f64>()
            * g.cell_volume();
        assert!(
            (r.bulk - want).abs() < 1e-13 * want.abs(),
            "{} vs {want}",
            r.bulk
        );
    }

    #[test]
    fn generic_and_euler_energy_agree_and_splits_sum() {
        let m = euler(12, 2);
        let closures = m
            .grid
            .patches
            .iter()
            .map(|p| {
                let mode = match p.name.as_str() {
                    "left" => Mode::Inflow {
                        u0: [e("0.4"), e("0")],
                        rho0: vec![e("1.1")],
                        s0: Some(e("0.1")),
                        t0: None,
                        tensor0: vec![],
                    },
                    "right" => Mode::OutflowInviscid { nu0: e("0.4") },
                    _ => Mode::FreeOpen,
                };
                FluxClosure::new(&p.name, mode)
            })
            .collect();
        let bulk = BulkSpec {
            b: Some([e("0.1*y"), e("x")]),
            theta_rho: vec![e("0.05")],
            theta_s: Some(e("0.01")),
            theta_tensor: vec![],
        };
        let s = solver(m.clone(), bulk, closures);
        let st = smooth(&m, 0.4);
        let a = Audit::new(&s, &st).unwrap();
        let gen = a.energy_budget(EnergyForm::Generic).unwrap();
        let eul = a.energy_budget(EnergyForm::Euler).unwrap();
        assert!(
            gen.max_column_diff(&eul) <= 1e-12 * gen.scale(),
            "{gen:?} {eul:?}"
        );
        let sum = a.split_total().unwrap();
        assert!(
            sum.max_column_diff(&eul) <= 1e-10 * eul.scale(),
            "{sum:?} {eul:?}"
        );
        assert!(a.energy_budget(EnergyForm::Rotating).is_err());
    }

    #[test]
    fn euler_at_rest_with_mass_source_has_zero_kinetic_budget() {
        let m = euler(8, 2);
        let closures = m
            .grid
            .patches
            .iter()
            .map(|p| FluxClosure::new(&p.name, Mode::Closed))
            .collect();
        let s = solver(
            m.clone(),
            BulkSpec {
                theta_rho: vec![e("0.3")],
                ..Default::default()
            },
            closures,
        );
        let mut st = smooth(&m, 0.0);
        st.u.iter_mut().for_each(|v| *v = [0.0; 2]);
        let a = Audit::new(&s, &st).unwrap();
        let split = a.energy_split_budget().unwrap();
        let k = &split[0];
        assert_eq!((k.d_dt, k.bulk, k.boundary), (0.0, 0.0, 0.0));
        let want: f64 = a.locals.iter().map(|l| 0.3 * l.g).sum::<f64>() * m.grid.cell_volume();
        assert!((split[1].bulk - want).abs() < 1e-14 * want);
    }

    #[test]
    fn boundary_forms_agree_for_euler() {
        let m = euler(10, 2);
        let closures = m
            .grid
            .patches
            .iter()
            .map(|p| {
                let mode = match p.name.as_str() {
                    "left" => Mode::Inflow {
                        u0: [e("0.4"), e("0.1")],
                        rho0: vec![e("1.1")],
                        s0: Some(e("0.1")),
                        t0: None,
                        tensor0: vec![],
                    },
                    "right" => Mode::OutflowViscous {
                        u0: [e("0.4"), e("0")],
                        t0: Some(e("1.2")),
                    },
                    _ => Mode::FreeOpen,
                };
                FluxClosure::new(&p.name, mode)
            })
            .collect();
        let s = solver(m.clone(), BulkSpec::default(), closures);
        let f = Audit::new(&s, &smooth(&m, 0.4))
            .unwrap()
            .boundary_form_equivalence();
        assert_eq!(f.forms.len(), 8);
        assert!(f.max_relative < 1e-12, "{f:?}");
        assert!(f.relation_violation < 1e-14);

        let closed = Solver::new(
            m.clone(),
            Sources::closed(&m).unwrap(),
            Formulation::Momentum,
        )
        .unwrap();
        let st = smooth(&m, 0.4);
        let f = Audit::new(&closed, &st)
            .unwrap()
            .boundary_form_equivalence();
        assert!(f.forms.iter().all(|(_, v)| v.abs() < 1e-15), "{f:?}");
    }

    #[test]
    fn csv_has_the_expected_header() {
        let m = euler(4, 1);
        let s = Solver::new(
            m.clone(),
            Sources::closed(&m).unwrap(),
            Formulation::Momentum,
        )
        .unwrap();
        let st = smooth(&m, 0.0);
        let csv = to_csv(&Audit::new(&s, &st).unwrap().all().unwrap());
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("mass,"));
    }

    proptest! {
        #[test]
        fn cross_product_identity(v in prop::collection::vec(-3.0f64..3.0, 9)) {
            let d = cross_identity_defect([v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]);
            prop_assert!(d < 1e-12);
        }
    }
}
