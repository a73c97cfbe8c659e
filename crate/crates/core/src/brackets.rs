//! Discrete functionals, the Lie–Poisson bracket and the extended evolution identity.
//!
//! With `v = ∂𝔣/∂m`, `w = ∂𝔥/∂m`, `φ_k = ∂𝔣/∂D_k` and `ψ_k = ∂𝔥/∂D_k` over the
//! advected densities `D_k ∈ {ρ_k, s}`, the bracket is evaluated as
//!
//! ```text
//! {f,h} = Σ V [ m·((w·G)v − (v·G)w) + Σ_k D_k (w·Gφ_k − v·Gψ_k) ]
//! ```
//!
//! with boundary-aware gradients `G` fed by the functional partials at the face
//! states. Swapping `f` and `h` flips the sign term by term. The bulk part is the
//! isolated-`∂𝔣` form and the boundary part collects the discrete summation by
//! parts, so `bulk + boundary` equals the single expression to round-off.

use std::fmt;
use std::sync::Arc;

use crate::dynamics::{Solver, Tendency};
use crate::error::{Error, Result};
use crate::models::{Family, Model, Point};
use crate::ops::{div_with_flux, grad_with_faces};
use crate::sources::{BoundaryEval, BulkFields};
use crate::state::State;

/// Arguments of a functional density at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub m: [f64; 2],
    pub rho: Vec<f64>,
    pub s: f64,
    pub r: [f64; 2],
    pub phi: f64,
    pub z: f64,
}

/// Pointwise partials of a functional density.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub dm: [f64; 2],
    pub drho: Vec<f64>,
    pub ds: f64,
}

pub type DensityFn = Arc<dyn Fn(&Sample) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Functional {
    Mass,
    Entropy,
    Momentum(usize),
    /// `∫ ½|m|²/ρ`.
    Kinetic,
    Hamiltonian,
    /// Any density; partials by central differences.
    Custom {
        name: String,
        density: DensityFn,
    },
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub const FD_STEP: f64 = 1e-6;

impl Functional {
    pub fn name(&self) -> String {
        match self {
            Functional::Mass => "mass".into(),
            Functional::Entropy => "entropy".into(),
            Functional::Momentum(i) => format!("momentum_{}", ["x", "y"][*i]),
            Functional::Kinetic => "kinetic".into(),
            Functional::Hamiltonian => "hamiltonian".into(),
            Functional::Custom { name, .. } => name.clone(),
        }
    }

    /// Mass, entropy (if present), momentum components, kinetic energy and the Hamiltonian.
    pub fn catalogue(model: &Model) -> Vec<Functional> {
        let mut v = vec![Functional::Mass];
        if model.requires_entropy() {
            v.push(Functional::Entropy);
        }
        for i in 0..model.grid.dim {
            v.push(Functional::Momentum(i));
        }
        v.push(Functional::Kinetic);
        v.push(Functional::Hamiltonian);
        v
    }

    fn point<'a>(smp: &'a Sample) -> Point<'a> {
        Point {
            u: [0.0; 2],
            rho: &smp.rho,
            s: smp.s,
            tensor: &[],
            grad_rho: [0.0; 2],
            r: smp.r,
            phi: smp.phi,
            z: smp.z,
        }
    }

    pub fn density(&self, model: &Model, smp: &Sample) -> Result<f64> {
        let mass: f64 = smp.rho.iter().sum();
        Ok(match self {
            Functional::Mass => mass,
            Functional::Entropy => smp.s,
            Functional::Momentum(i) => smp.m[*i],
            Functional::Kinetic => 0.5 * (smp.m[0] * smp.m[0] + smp.m[1] * smp.m[1]) / mass,
            Functional::Hamiltonian => model.hamiltonian(smp.m, &Self::point(smp))?.h,
            Functional::Custom { density, .. } => density(smp),
        })
    }

    pub fn partials(&self, model: &Model, smp: &Sample) -> Result<Partials> {
        let nr = smp.rho.len();
        let mass: f64 = smp.rho.iter().sum();
        Ok(match self {
            Functional::Mass => Partials {
                dm: [0.0; 2],
                drho: vec![1.0; nr],
                ds: 0.0,
            },
            Functional::Entropy => Partials {
                dm: [0.0; 2],
                drho: vec![0.0; nr],
                ds: 1.0,
            },
            Functional::Momentum(i) => {
                let mut dm = [0.0; 2];
                dm[*i] = 1.0;
                Partials {
                    dm,
                    drho: vec![0.0; nr],
                    ds: 0.0,
                }
            }
            Functional::Kinetic => {
                let m2 = smp.m[0] * smp.m[0] + smp.m[1] * smp.m[1];
                Partials {
                    dm: [smp.m[0] / mass, smp.m[1] / mass],
                    drho: vec![-0.5 * m2 / (mass * mass); nr],
                    ds: 0.0,
                }
            }
            Functional::Hamiltonian => {
                let h = model.hamiltonian(smp.m, &Self::point(smp))?;
                Partials {
                    dm: h.dh_dm,
                    drho: h.dh_drho,
                    ds: h.dh_ds,
                }
            }
            Functional::Custom { .. } => self.fd_partials(model, smp)?,
        })
    }

    /// Central differences with step `FD_STEP · max(|x|, 1)`.
    pub fn fd_partials(&self, model: &Model, smp: &Sample) -> Result<Partials> {
        let diff = |set: &dyn Fn(&mut Sample, f64), x: f64| -> Result<f64> {
            let h = FD_STEP * x.abs().max(1.0);
            let mut a = smp.clone();
            let mut b = smp.clone();
            set(&mut a, x + h);
            set(&mut b, x - h);
            let d = (self.density(model, &a)? - self.density(model, &b)?) / (2.0 * h);
            if d.is_finite() {
                Ok(d)
            } else {
                Err(Error::Numerical(format!(
                    "functional '{}' is not differentiable here",
                    self.name()
                )))
            }
        };
        let dm = [
            diff(&|s, v| s.m[0] = v, smp.m[0])?,
            diff(&|s, v| s.m[1] = v, smp.m[1])?,
        ];
        let mut drho = Vec::with_capacity(smp.rho.len());
        for k in 0..smp.rho.len() {
            drho.push(diff(&|s, v| s.rho[k] = v, smp.rho[k])?);
        }
        let ds = diff(&|s, v| s.s = v, smp.s)?;
        Ok(Partials { dm, drho, ds })
    }
}

/// Bulk and boundary parts of `{f,h}`, the single-expression value, and the
/// continuum boundary form `∫ (w·n)(m·v + Σ D_k φ_k) da` on the face states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketValue {
    pub bulk: f64,
    pub boundary: f64,
    pub single: f64,
    pub boundary_continuum: f64,
}

impl BracketValue {
    pub fn total(&self) -> f64 {
        self.bulk + self.boundary
    }
}

/// One row of the extended evolution identity.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRow {
    pub functional: String,
    pub bulk: f64,
    pub boundary: f64,
    /// Bulk sources plus boundary fluxes paired with the partials.
    pub sources: f64,
    pub d_dt: f64,
    pub residual: f64,
}

pub const CSV_HEADER: &str = "functional,bulk,boundary,sources,d/dt,residual";

impl EvolutionRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e}",
            self.functional, self.bulk, self.boundary, self.sources, self.d_dt, self.residual
        )
    }
}

pub fn to_csv(rows: &[EvolutionRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Partials of one functional on cells and boundary faces.
#[derive(Debug, Clone)]
pub struct Derivs {
    pub cell: Vec<Partials>,
    pub face: Vec<Partials>,
}

impl Derivs {
    fn dm(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        (
            self.cell.iter().map(|p| p.dm[i]).collect(),
            self.face.iter().map(|p| p.dm[i]).collect(),
        )
    }

    /// Partial with respect to advected density `k` (components first, then entropy).
    fn dd(&self, k: usize, n_rho: usize) -> (Vec<f64>, Vec<f64>) {
        let pick = |p: &Partials| if k < n_rho { p.drho[k] } else { p.ds };
        (
            self.cell.iter().map(pick).collect(),
            self.face.iter().map(pick).collect(),
        )
    }
}

/// Bracket evaluations at one state.
pub struct Brackets<'a> {
    pub solver: &'a Solver,
    pub state: &'a State,
    pub bulk: BulkFields,
    pub be: BoundaryEval,
    cells: Vec<Sample>,
    faces: Vec<Sample>,
    /// Advected densities `ρ_k` then `s`, on cells and faces.
    dens: Vec<(Vec<f64>, Vec<f64>)>,
    m: [Vec<f64>; 2],
    mb: [Vec<f64>; 2],
}

fn check_model(model: &Model) -> Result<()> {
    if model.tensor_ncomp() > 0 || model.family() == Family::EulerKorteweg {
        return Err(Error::Model(format!(
            "the bracket form is available for models without advected tensors or gradient energy, not '{}'",
            model.family().name()
        )));
    }
    Ok(())
}

impl<'a> Brackets<'a> {
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
        let model = &solver.model;
        check_model(model)?;
        solver.check_state(state)?;
        let g = solver.grid();
        let mut cells = Vec::with_capacity(g.n_cells());
        for c in 0..g.n_cells() {
            let rho = state.rho_at(c);
            let m = model.momentum_from_velocity_point(state.u[c], &rho, model.r[c])?;
            cells.push(Sample {
                m,
                rho,
                s: state.entropy(c),
                r: model.r[c],
                phi: model.phi[c],
                z: model.z[c],
            });
        }
        let faces: Vec<Sample> = be
            .faces
            .iter()
            .enumerate()
            .map(|(k, fd)| Sample {
                m: fd.state.local.m,
                rho: fd.state.rho.clone(),
                s: fd.state.s,
                r: model.r_face[k],
                phi: model.phi_face[k],
                z: model.z_face[k],
            })
            .collect();
        let mut dens: Vec<(Vec<f64>, Vec<f64>)> = (0..model.n_rho())
            .map(|k| {
                (
                    state.rho[k].clone(),
                    be.faces.iter().map(|f| f.state.rho[k]).collect(),
                )
            })
            .collect();
        if let Some(s) = &state.s {
            dens.push((s.clone(), be.faces.iter().map(|f| f.state.s).collect()));
        }
        let m = [
            cells.iter().map(|s| s.m[0]).collect(),
            cells.iter().map(|s| s.m[1]).collect(),
        ];
        let mb = [
            faces.iter().map(|s| s.m[0]).collect(),
            faces.iter().map(|s| s.m[1]).collect(),
        ];
        Ok(Self {
            solver,
            state,
            bulk,
            be,
            cells,
            faces,
            dens,
            m,
            mb,
        })
    }

    fn model(&self) -> &Model {
        &self.solver.model
    }

    pub fn functional_value(&self, f: &Functional) -> Result<f64> {
        let v: Result<Vec<f64>> = self
            .cells
            .iter()
            .map(|s| f.density(self.model(), s))
            .collect();
        Ok(v?.iter().sum::<f64>() * self.solver.grid().cell_volume())
    }

    /// Pointwise partials on the cells and on the face states.
    pub fn functional_derivative(&self, f: &Functional) -> Result<Derivs> {
        let model = self.model();
        let cell = self
            .cells
            .iter()
            .map(|s| f.partials(model, s))
            .collect::<Result<Vec<_>>>()?;
        let face = self
            .faces
            .iter()
            .map(|s| f.partials(model, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Derivs { cell, face })
    }

    fn n_rho(&self) -> usize {
        self.model().n_rho()
    }

    /// `Σ V [a D(F; fb) + F·G(a; a_b)]`, the discrete counterpart of `∫_∂ a F·n`.
    fn by_parts(&self, flux: &[[f64; 2]], fb: &[f64], a: &[f64], ab: &[f64]) -> f64 {
        let g = self.solver.grid();
        let d = div_with_flux(g, flux, fb);
        let ga = grad_with_faces(g, a, ab);
        (0..g.n_cells())
            .map(|c| a[c] * d[c] + flux[c][0] * ga[c][0] + flux[c][1] * ga[c][1])
            .sum::<f64>()
            * g.cell_volume()
    }

    pub fn lie_poisson(&self, f: &Derivs, h: &Derivs) -> BracketValue {
        let g = self.solver.grid();
        let n = g.n_cells();
        let dim = g.dim;
        let vol = g.cell_volume();
        let nr = self.n_rho();
        let v: Vec<(Vec<f64>, Vec<f64>)> = (0..dim).map(|i| f.dm(i)).collect();
        let w: Vec<(Vec<f64>, Vec<f64>)> = (0..dim).map(|i| h.dm(i)).collect();
        let gv: Vec<Vec<[f64; 2]>> = v.iter().map(|(a, b)| grad_with_faces(g, a, b)).collect();
        let gw: Vec<Vec<[f64; 2]>> = w.iter().map(|(a, b)| grad_with_faces(g, a, b)).collect();
        let wn: Vec<f64> = g
            .faces
            .iter()
            .enumerate()
            .map(|(k, fc)| (0..dim).map(|j| w[j].1[k] * fc.normal[j]).sum())
            .collect();

        let mut single = 0.0;
        let mut bulk = 0.0;
        let mut boundary = 0.0;
        for c in 0..n {
            for i in 0..dim {
                let wgv: f64 = (0..dim).map(|j| w[j].0[c] * gv[i][c][j]).sum();
                let vgw: f64 = (0..dim).map(|j| v[j].0[c] * gw[i][c][j]).sum();
                single += self.m[i][c] * (wgv - vgw);
                // −(∇w)ᵀm·v
                bulk -= (0..dim).map(|j| self.m[j][c] * gw[j][c][i]).sum::<f64>() * v[i].0[c];
            }
        }
        // momentum transport: −D(w m_i)·v_i in the bulk, by-parts remainder on the boundary
        for i in 0..dim {
            let flux: Vec<[f64; 2]> = (0..n)
                .map(|c| {
                    [
                        w[0].0[c] * self.m[i][c],
                        if dim == 2 {
                            w[1].0[c] * self.m[i][c]
                        } else {
                            0.0
                        },
                    ]
                })
                .collect();
            let fb: Vec<f64> = (0..g.faces.len()).map(|k| wn[k] * self.mb[i][k]).collect();
            let d = div_with_flux(g, &flux, &fb);
            bulk -= (0..n).map(|c| d[c] * v[i].0[c]).sum::<f64>();
            boundary += self.by_parts(&flux, &fb, &v[i].0, &v[i].1) / vol;
        }
        for (k, (dc, db)) in self.dens.iter().enumerate() {
            let (phi, phib) = f.dd(k, nr);
            let (psi, psib) = h.dd(k, nr);
            let gphi = grad_with_faces(g, &phi, &phib);
            let gpsi = grad_with_faces(g, &psi, &psib);
            for c in 0..n {
                let wg: f64 = (0..dim).map(|j| w[j].0[c] * gphi[c][j]).sum();
                let vg: f64 = (0..dim).map(|j| v[j].0[c] * gpsi[c][j]).sum();
                single += dc[c] * (wg - vg);
                bulk -= dc[c] * vg;
            }
            let flux: Vec<[f64; 2]> = (0..n)
                .map(|c| {
                    [
                        dc[c] * w[0].0[c],
                        if dim == 2 { dc[c] * w[1].0[c] } else { 0.0 },
                    ]
                })
                .collect();
            let fb: Vec<f64> = (0..g.faces.len()).map(|q| db[q] * wn[q]).collect();
            let d = div_with_flux(g, &flux, &fb);
            bulk -= (0..n).map(|c| d[c] * phi[c]).sum::<f64>();
            boundary += self.by_parts(&flux, &fb, &phi, &phib) / vol;
        }
        let boundary_continuum = g
            .faces
            .iter()
            .enumerate()
            .map(|(q, fc)| {
                let mv: f64 = (0..dim).map(|i| self.mb[i][q] * v[i].1[q]).sum();
                let dp: f64 = self
                    .dens
                    .iter()
                    .enumerate()
                    .map(|(k, (_, db))| db[q] * f.dd(k, nr).1[q])
                    .sum();
                wn[q] * (mv + dp) * fc.da
            })
            .sum();
        BracketValue {
            bulk: bulk * vol,
            boundary: boundary * vol,
            single: single * vol,
            boundary_continuum,
        }
    }

    /// Per-face sum of the boundary bracket integrand and the boundary source
    /// pairing. Free-open faces cancel exactly.
    pub fn boundary_face_defects(&self, f: &Derivs, h: &Derivs) -> Vec<f64> {
        let g = self.solver.grid();
        let dim = g.dim;
        let nr = self.n_rho();
        let has_s = self.state.s.is_some();
        let v: Vec<(Vec<f64>, Vec<f64>)> = (0..dim).map(|i| f.dm(i)).collect();
        let w: Vec<(Vec<f64>, Vec<f64>)> = (0..dim).map(|i| h.dm(i)).collect();
        g.faces
            .iter()
            .enumerate()
            .map(|(q, fc)| {
                let wn: f64 = (0..dim).map(|j| w[j].1[q] * fc.normal[j]).sum();
                let mv: f64 = (0..dim).map(|i| self.mb[i][q] * v[i].1[q]).sum();
                let dp: f64 = self
                    .dens
                    .iter()
                    .enumerate()
                    .map(|(k, (_, db))| db[q] * f.dd(k, nr).1[q])
                    .sum();
                let fl = &self.be.faces[q].flux;
                let p = &f.face[q];
                let mut src = fl.j_mom[0] * p.dm[0] + fl.j_mom[1] * p.dm[1];
                src += (0..nr).map(|k| fl.j_rho[k] * p.drho[k]).sum::<f64>();
                if has_s {
                    src += fl.j_s * p.ds;
                }
                (wn * (mv + dp) + src) * fc.da
            })
            .collect()
    }

    /// `∫(b·v + θ·φ) dx + ∫_∂ (J·v_b + j·φ_b) da` for the functional partials `f`.
    pub fn source_pairing(&self, f: &Derivs) -> f64 {
        let g = self.solver.grid();
        let nr = self.n_rho();
        let b = &self.bulk;
        let has_s = self.state.s.is_some();
        let bulk: f64 = (0..g.n_cells())
            .map(|c| {
                let p = &f.cell[c];
                let mut x = b.b[c][0] * p.dm[0] + b.b[c][1] * p.dm[1];
                x += (0..nr).map(|k| b.theta_rho[k][c] * p.drho[k]).sum::<f64>();
                if has_s {
                    x += b.theta_s[c] * p.ds;
                }
                x
            })
            .sum::<f64>()
            * g.cell_volume();
        let bnd: f64 = self
            .be
            .faces
            .iter()
            .zip(&g.faces)
            .zip(&f.face)
            .map(|((fd, fc), p)| {
                let fl = &fd.flux;
                let mut x = fl.j_mom[0] * p.dm[0] + fl.j_mom[1] * p.dm[1];
                x += (0..nr).map(|k| fl.j_rho[k] * p.drho[k]).sum::<f64>();
                if has_s {
                    x += fl.j_s * p.ds;
                }
                x * fc.da
            })
            .sum();
        bulk + bnd
    }

    /// `d/dt f` chained through a tendency.
    pub fn chain_rate(&self, f: &Derivs, t: &Tendency) -> f64 {
        let g = self.solver.grid();
        let nr = self.n_rho();
        (0..g.n_cells())
            .map(|c| {
                let p = &f.cell[c];
                let mut x = t.dm[c][0] * p.dm[0] + t.dm[c][1] * p.dm[1];
                x += (0..nr).map(|k| t.drho[k][c] * p.drho[k]).sum::<f64>();
                if let Some(ds) = &t.ds {
                    x += ds[c] * p.ds;
                }
                x
            })
            .sum::<f64>()
            * g.cell_volume()
    }

    /// `ḟ` against `{f,h} + sources` with the solver's own tendency.
    pub fn extended_evolution(&self, f: &Functional) -> Result<EvolutionRow> {
        let t = self
            .solver
            .tendency_with(self.state, &self.bulk, &self.be)?;
        let df = self.functional_derivative(f)?;
        let dh = self.functional_derivative(&Functional::Hamiltonian)?;
        let br = self.lie_poisson(&df, &dh);
        let sources = self.source_pairing(&df);
        let d_dt = self.chain_rate(&df, &t);
        Ok(EvolutionRow {
            functional: f.name(),
            bulk: br.bulk,
            boundary: br.boundary,
            sources,
            d_dt,
            residual: d_dt - br.total() - sources,
        })
    }

    /// Momentum and density tendencies assembled from the Hamiltonian partials:
    /// `ṁ = −D(w m; −J) − (∇w)ᵀm − Σ D_k ∇ψ_k + b`, `Ḋ_k = −D(D_k w; −j_k) + θ_k`.
    pub fn hamiltonian_tendency(&self) -> Result<(Vec<[f64; 2]>, Vec<Vec<f64>>)> {
        let g = self.solver.grid();
        let n = g.n_cells();
        let dim = g.dim;
        let nr = self.n_rho();
        let h = self.functional_derivative(&Functional::Hamiltonian)?;
        let w: Vec<(Vec<f64>, Vec<f64>)> = (0..dim).map(|i| h.dm(i)).collect();
        let gw: Vec<Vec<[f64; 2]>> = w.iter().map(|(a, b)| grad_with_faces(g, a, b)).collect();
        let mut dm = self.bulk.b.clone();
        for i in 0..dim {
            let flux: Vec<[f64; 2]> = (0..n)
                .map(|c| {
                    [
                        w[0].0[c] * self.m[i][c],
                        if dim == 2 {
                            w[1].0[c] * self.m[i][c]
                        } else {
                            0.0
                        },
                    ]
                })
                .collect();
            let fb: Vec<f64> = self.be.faces.iter().map(|f| -f.flux.j_mom[i]).collect();
            let d = div_with_flux(g, &flux, &fb);
            for c in 0..n {
                dm[c][i] -= d[c] + (0..dim).map(|j| self.m[j][c] * gw[j][c][i]).sum::<f64>();
            }
        }
        let mut dd = Vec::with_capacity(self.dens.len());
        for (k, (dc, _)) in self.dens.iter().enumerate() {
            let (psi, psib) = h.dd(k, nr);
            let gp = grad_with_faces(g, &psi, &psib);
            for c in 0..n {
                for i in 0..dim {
                    dm[c][i] -= dc[c] * gp[c][i];
                }
            }
            let flux: Vec<[f64; 2]> = (0..n)
                .map(|c| {
                    [
                        dc[c] * w[0].0[c],
                        if dim == 2 { dc[c] * w[1].0[c] } else { 0.0 },
                    ]
                })
                .collect();
            let fb: Vec<f64> = self
                .be
                .faces
                .iter()
                .map(|f| {
                    if k < nr {
                        -f.flux.j_rho[k]
                    } else {
                        -f.flux.j_s
                    }
                })
                .collect();
            let d = div_with_flux(g, &flux, &fb);
            let theta = if k < nr {
                &self.bulk.theta_rho[k]
            } else {
                &self.bulk.theta_s
            };
            dd.push((0..n).map(|c| -d[c] + theta[c]).collect());
        }
        Ok((dm, dd))
    }
}

/// `(f(S(dt)) − f(S(−dt))) / 2dt` with two RK4 steps; a time-difference cross-check of `ḟ`.
pub fn time_difference_rate(
    solver: &Solver,
    state: &State,
    f: &Functional,
    dt: f64,
) -> Result<f64> {
    let fwd = solver.rk4(state, dt)?;
    let bwd = solver.rk4(state, -dt)?;
    let a = Brackets::new(solver, &fwd)?.functional_value(f)?;
    let b = Brackets::new(solver, &bwd)?.functional_value(f)?;
    Ok((a - b) / (2.0 * dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Formulation;
    use crate::expr::Expr;
    use crate::grid::Grid;
    use crate::models::ModelSpec;
    use crate::sources::{BulkSpec, FluxClosure, Mode, Sources};
    use crate::thermo::StateEquation;
    use proptest::prelude::*;

    fn e(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn euler(n: usize) -> Model {
        let g = Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[n, n], &[]).unwrap();
        Model::new(
            ModelSpec::new(Family::Euler),
            Some(StateEquation::ideal_gas(2.5, 1.4, 1.0, 1.0, 0.0)),
            Arc::new(g),
        )
        .unwrap()
    }

    /// Smooth state whose traces match the open-flow closures below.
    fn state(m: &Model) -> State {
        let g = &m.grid;
        let n = g.n_cells();
        State {
            t: 0.0,
            u: (0..n)
                .map(|c| {
                    let x = g.center(c);
                    [
                        0.5 + 0.1 * x[0] * x[0],
                        0.4 * (3.0 * x[1]).sin() * (1.0 - x[0]) * x[1] * (1.0 - x[1]),
                    ]
                })
                .collect(),
            rho: vec![(0..n)
                .map(|c| 1.0 + 0.2 * (2.0 * g.center(c)[0]).cos())
                .collect()],
            s: Some((0..n).map(|c| 0.1 + 0.05 * g.center(c)[1]).collect()),
            tensor: None,
        }
    }

    fn open(m: &Model, bulk: BulkSpec, free: bool) -> Solver {
        let cl = m
            .grid
            .patches
            .iter()
            .map(|p| {
                let mode = match (p.name.as_str(), free) {
                    (_, true) => Mode::FreeOpen,
                    ("left", _) => Mode::Inflow {
                        u0: [e("0.5"), e("0.4*sin(3*y)*y*(1-y)")],
                        rho0: vec![e("1.2")],
                        s0: Some(e("0.1+0.05*y")),
                        t0: None,
                        tensor0: vec![],
                    },
                    ("right", _) => Mode::OutflowInviscid { nu0: e("0.6") },
                    _ => Mode::Closed,
                };
                FluxClosure::new(&p.name, mode)
            })
            .collect();
        Solver::new(
            m.clone(),
            Sources::new(bulk, cl, m).unwrap(),
            Formulation::Momentum,
        )
        .unwrap()
    }

    #[test]
    fn catalogue_partials_match_finite_differences() {
        let m = euler(4);
        let smp = Sample {
            m: [0.3, -0.7],
            rho: vec![1.3],
            s: 0.2,
            r: [0.0; 2],
            phi: 0.0,
            z: 0.0,
        };
        for f in Functional::catalogue(&m) {
            let a = f.partials(&m, &smp).unwrap();
            let b = f.fd_partials(&m, &smp).unwrap();
            for i in 0..2 {
                assert!((a.dm[i] - b.dm[i]).abs() < 1e-8, "{f:?}");
            }
            assert!(
                (a.drho[0] - b.drho[0]).abs() < 1e-8 && (a.ds - b.ds).abs() < 1e-8,
                "{f:?}"
            );
        }
        let k = Functional::Kinetic.partials(&m, &smp).unwrap();
        assert!((k.dm[0] - 0.3 / 1.3).abs() < 1e-15);
        assert!((k.drho[0] + 0.5 * 0.58 / (1.3 * 1.3)).abs() < 1e-15);
    }

    #[test]
    fn custom_functional_uses_finite_differences() {
        let m = euler(4);
        let f = Functional::Custom {
            name: "m_x_sq".into(),
            density: Arc::new(|s: &Sample| s.m[0] * s.m[0] * s.rho[0]),
        };
        let smp = Sample {
            m: [2.0, 0.0],
            rho: vec![3.0],
            s: 0.0,
            r: [0.0; 2],
            phi: 0.0,
            z: 0.0,
        };
        let p = f.partials(&m, &smp).unwrap();
        assert!((p.dm[0] - 12.0).abs() < 1e-7 && (p.drho[0] - 4.0).abs() < 1e-7);
        let bad = Functional::Custom {
            name: "kink".into(),
            density: Arc::new(|s: &Sample| if s.m[0] > 0.0 { f64::NAN } else { 0.0 }),
        };
        assert!(bad.partials(&m, &smp).is_err());
    }

    #[test]
    fn bracket_is_antisymmetric_and_splits_consistently() {
        let m = euler(10);
        let s = open(&m, BulkSpec::default(), false);
        let st = state(&m);
        let b = Brackets::new(&s, &st).unwrap();
        let cat = Functional::catalogue(&m);
        let ds: Vec<Derivs> = cat
            .iter()
            .map(|f| b.functional_derivative(f).unwrap())
            .collect();
        for (i, fi) in ds.iter().enumerate() {
            for fj in &ds[i..] {
                let ab = b.lie_poisson(fi, fj);
                let ba = b.lie_poisson(fj, fi);
                let scale = ab.single.abs().max(1.0);
                assert!((ab.single + ba.single).abs() < 1e-12 * scale);
                assert!((ab.total() - ab.single).abs() < 1e-12 * scale, "{ab:?}");
            }
        }
    }

    #[test]
    fn mass_against_hamiltonian_on_closed_walls() {
        let m = euler(8);
        let s = Solver::new(
            m.clone(),
            Sources::closed(&m).unwrap(),
            Formulation::Momentum,
        )
        .unwrap();
        let st = state(&m);
        let b = Brackets::new(&s, &st).unwrap();
        let v = b.lie_poisson(
            &b.functional_derivative(&Functional::Mass).unwrap(),
            &b.functional_derivative(&Functional::Hamiltonian).unwrap(),
        );
        assert!(v.boundary_continuum.abs() < 1e-15);
        assert!(v.bulk.abs() < 1e-14, "{v:?}");
    }

    #[test]
    fn constant_mass_source_rate() {
        let m = euler(8);
        let s = Solver::new(
            m.clone(),
            Sources::new(
                BulkSpec {
                    theta_rho: vec![e("0.1")],
                    ..Default::default()
                },
                m.grid
                    .patches
                    .iter()
                    .map(|p| FluxClosure::new(&p.name, Mode::Closed))
                    .collect(),
                &m,
            )
            .unwrap(),
            Formulation::Momentum,
        )
        .unwrap();
        let st = state(&m);
        let row = Brackets::new(&s, &st)
            .unwrap()
            .extended_evolution(&Functional::Mass)
            .unwrap();
        assert!(
            (row.d_dt - 0.1).abs() < 1e-13 && (row.sources - 0.1).abs() < 1e-13,
            "{row:?}"
        );
        assert!(row.residual.abs() < 1e-13);
    }

    #[test]
    fn evolution_residual_is_second_order() {
        let bulk = || BulkSpec {
            b: Some([e("0.1*y"), e("x")]),
            theta_rho: vec![e("0.05*(1+x)")],
            theta_s: Some(e("0.01")),
            theta_tensor: vec![],
        };
        let res = |n: usize| -> Vec<f64> {
            let m = euler(n);
            let s = open(&m, bulk(), false);
            let st = state(&m);
            let b = Brackets::new(&s, &st).unwrap();
            Functional::catalogue(&m)
                .iter()
                .map(|f| b.extended_evolution(f).unwrap().residual.abs())
                .collect()
        };
        let (a, c) = (res(16), res(32));
        for (x, y) in a.iter().zip(&c) {
            assert!(*x < 1e-12 || (x / y).log2() > 1.8, "{x} {y}");
        }
    }

    #[test]
    fn free_open_boundary_bracket_cancels_fluxes() {
        let m = euler(16);
        let s = open(&m, BulkSpec::default(), true);
        let st = state(&m);
        let b = Brackets::new(&s, &st).unwrap();
        let dh = b.functional_derivative(&Functional::Hamiltonian).unwrap();
        for f in Functional::catalogue(&m) {
            let df = b.functional_derivative(&f).unwrap();
            let v = b.lie_poisson(&df, &dh);
            let src = b.source_pairing(&df);
            let scale = v.boundary_continuum.abs().max(1.0);
            assert!((v.boundary_continuum + src).abs() < 1e-13 * scale, "{f:?}");
            let worst = b
                .boundary_face_defects(&df, &dh)
                .into_iter()
                .fold(0.0, |m: f64, d| m.max(d.abs()));
            assert!(worst < 1e-14 * scale, "{f:?} {worst}");
        }
    }

    #[test]
    fn hamiltonian_tendency_matches_velocity_chain_rule() {
        let m = euler(8);
        let bulk = BulkSpec {
            b: Some([e("0.1*y"), e("x")]),
            theta_rho: vec![e("0.05*(1+x)")],
            theta_s: Some(e("0.01")),
            theta_tensor: vec![],
        };
        let s = open(&m, bulk, false);
        let st = state(&m);
        let b = Brackets::new(&s, &st).unwrap();
        let (dm, dd) = b.hamiltonian_tendency().unwrap();
        let t = s.tendency(&st).unwrap();
        for c in 0..st.n_cells() {
            let rho = st.rho[0][c];
            for i in 0..2 {
                let chain = rho * t.du[c][i] + st.u[c][i] * t.drho[0][c];
                assert!(
                    (dm[c][i] - chain).abs() < 1e-12 * (1.0 + chain.abs()),
                    "{c} {i}"
                );
            }
            assert!((dd[0][c] - t.drho[0][c]).abs() < 1e-13);
            assert!((dd[1][c] - t.ds.as_ref().unwrap()[c]).abs() < 1e-13);
        }
    }

    #[test]
    fn time_difference_agrees_with_chain_rule() {
        let m = euler(8);
        let s = open(
            &m,
            BulkSpec {
                theta_rho: vec![e("0.2")],
                ..Default::default()
            },
            false,
        );
        let st = state(&m);
        let b = Brackets::new(&s, &st).unwrap();
        let row = b.extended_evolution(&Functional::Hamiltonian).unwrap();
        let err = |dt: f64| {
            (time_difference_rate(&s, &st, &Functional::Hamiltonian, dt).unwrap() - row.d_dt).abs()
        };
        let (a, b) = (err(2e-3), err(1e-3));
        assert!(b < 1e-5 * row.d_dt.abs() && (a / b).log2() > 1.8, "{a} {b}");
    }

    #[test]
    fn tensor_models_are_rejected() {
        let g = Arc::new(Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[4, 4], &[]).unwrap());
        let mm = Model::new(
            ModelSpec::new(Family::Mhd),
            Some(StateEquation::barotropic(1.0, 2.0)),
            g,
        )
        .unwrap();
        let s = Solver::new(
            mm.clone(),
            Sources::closed(&mm).unwrap(),
            Formulation::Momentum,
        )
        .unwrap();
        let st = State {
            t: 0.0,
            u: vec![[0.0; 2]; 16],
            rho: vec![vec![1.0; 16]],
            s: None,
            tensor: Some(vec![0.0; 32]),
        };
        assert!(Brackets::new(&s, &st).is_err());
    }

    proptest! {
        #[test]
        fn kinetic_partials_oracle(mx in -2.0f64..2.0, my in -2.0f64..2.0, rho in 0.5f64..3.0) {
            let m = euler(4);
            let smp = Sample { m: [mx, my], rho: vec![rho], s: 0.0, r: [0.0; 2], phi: 0.0, z: 0.0 };
            let a = Functional::Kinetic.partials(&m, &smp).unwrap();
            let b = Functional::Kinetic.fd_partials(&m, &smp).unwrap();
            prop_assert!((a.dm[0] - b.dm[0]).abs() < 1e-7 && (a.drho[0] - b.drho[0]).abs() < 1e-6);
        }
    }
}
