//! Model catalogue: Lagrangian and Hamiltonian densities, their partial
//! derivatives and the Legendre map between velocity and momentum.
//!
//! Every family shares the structure
//!
//! ```text
//! 𝔩 = ½M|u|² + M R·u − U(ρ, s; x) − E_extra
//! ```
//!
//! where `M` is the total mass (or water depth), `R` the Coriolis vector
//! potential, `U` the internal plus potential energy and `E_extra` the energy
//! stored in an advected tensor, magnetic field or density gradient.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{Field, Kind};
use crate::grid::Grid;
use crate::ops;
use crate::state::State;
use crate::tensor::{n_components, swap_slots, MAX_RANK};
use crate::thermo::StateEquation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Euler,
    EulerRotatingGravity,
    ShallowWaterRotating,
    MulticomponentEuler,
    TensorAdvected,
    Mhd,
    EulerKorteweg,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Euler => "euler",
            Family::EulerRotatingGravity => "euler_rotating_gravity",
            Family::ShallowWaterRotating => "shallow_water_rotating",
            Family::MulticomponentEuler => "multicomponent_euler",
            Family::TensorAdvected => "tensor_advected",
            Family::Mhd => "mhd",
            Family::EulerKorteweg => "euler_korteweg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    /// Tensor field density π, advected by `div(uπ) + π̂:∇u`.
    Density,
    /// Tensor field κ, advected by `u·∇κ + κ̂:∇u`.
    Field,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub up: usize,
    pub down: usize,
    pub kind: TensorKind,
    /// Coefficient of the stored energy ½μ|π|².
    #[serde(default = "one")]
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub name: String,
    /// Formation energy per unit mass added to ε.
    #[serde(default)]
    pub e: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    /// Coriolis vector potential R(x, y).
    #[serde(default)]
    pub r: Option<[Expr; 2]>,
    /// Gravitational potential φ(x, y).
    #[serde(default)]
    pub phi: Option<Expr>,
    /// Bottom topography Z(x, y).
    #[serde(default)]
    pub z: Option<Expr>,
    #[serde(default)]
    pub g_const: f64,
    /// Korteweg coefficient λ in −½λ|∇ρ|².
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub tensor: Option<TensorSpec>,
    /// External stress σ^c_d(x, y, t) as `[σ^x_x, σ^x_y, σ^y_x, σ^y_y]`.
    #[serde(default)]
    pub boundary_stress: Option<[Expr; 4]>,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            r: None,
            phi: None,
            z: None,
            g_const: 0.0,
            lambda: 0.0,
            components: Vec::new(),
            tensor: None,
            boundary_stress: None,
        }
    }
}

/// Pointwise inputs of the densities.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub u: [f64; 2],
    pub rho: &'a [f64],
    pub s: f64,
    pub tensor: &'a [f64],
    pub grad_rho: [f64; 2],
    pub r: [f64; 2],
    pub phi: f64,
    pub z: f64,
}

/// Pointwise densities and partial derivatives of 𝔩.
#[derive(Debug, Clone, PartialEq)]
pub struct Local {
    pub mass: f64,
    /// ∂𝔩/∂u.
    pub m: [f64; 2],
    pub dl_drho: Vec<f64>,
    pub dl_ds: f64,
    pub dl_dtensor: Vec<f64>,
    pub dl_dgradrho: [f64; 2],
    pub lagrangian: f64,
    pub kinetic: f64,
    /// Thermodynamic internal energy ε.
    pub internal: f64,
    /// ρφ for the rotating model, ½g(h+Z)² for shallow water.
    pub potential: f64,
    /// Tensor, magnetic or gradient energy.
    pub extra: f64,
    pub p: f64,
    pub t: f64,
    pub g: f64,
    pub h_enth: f64,
}

impl Local {
    pub fn energy(&self) -> f64 {
        self.kinetic + self.internal + self.potential + self.extra
    }
}

/// Pointwise Hamiltonian density and its partials.
#[derive(Debug, Clone, PartialEq)]
pub struct Ham {
    pub h: f64,
    pub dh_dm: [f64; 2],
    pub dh_drho: Vec<f64>,
    pub dh_ds: f64,
    pub dh_dtensor: Vec<f64>,
}

/// Variational derivatives over the grid.
#[derive(Debug, Clone)]
pub struct VarDerivs {
    pub dl_du: Field,
    pub dl_drho: Vec<Field>,
    pub dl_ds: Option<Field>,
    pub dl_dtensor: Option<Field>,
    pub dl_dgradrho: Option<Field>,
}

/// A [`ModelSpec`] bound to a grid, with R, φ and Z sampled at cells and traced to faces.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub eos: Option<StateEquation>,
    pub grid: Arc<Grid>,
    pub r: Vec<[f64; 2]>,
    pub phi: Vec<f64>,
    pub z: Vec<f64>,
    pub r_face: Vec<[f64; 2]>,
    pub phi_face: Vec<f64>,
    pub z_face: Vec<f64>,
}

fn sample(grid: &Grid, e: &Option<Expr>) -> Vec<f64> {
    match e {
        Some(e) => (0..grid.n_cells())
            .map(|c| e.eval(grid.center(c), 0.0))
            .collect(),
        None => vec![0.0; grid.n_cells()],
    }
}

impl Model {
    pub fn new(spec: ModelSpec, eos: Option<StateEquation>, grid: Arc<Grid>) -> Result<Self> {
        Self::validate(&spec, eos.as_ref(), &grid)?;
        let r = match &spec.r {
            Some([rx, ry]) => (0..grid.n_cells())
                .map(|c| {
                    let x = grid.center(c);
                    [
                        rx.eval(x, 0.0),
                        if grid.dim == 2 { ry.eval(x, 0.0) } else { 0.0 },
                    ]
                })
                .collect(),
            None => vec![[0.0; 2]; grid.n_cells()],
        };
        let phi = sample(&grid, &spec.phi);
        let z = sample(&grid, &spec.z);
        let mut model = Model {
            spec,
            eos,
            grid,
            r: Vec::new(),
            phi: Vec::new(),
            z: Vec::new(),
            r_face: Vec::new(),
            phi_face: Vec::new(),
            z_face: Vec::new(),
        };
        model.set_potentials(r, phi, z)?;
        Ok(model)
    }

    fn validate(spec: &ModelSpec, eos: Option<&StateEquation>, grid: &Grid) -> Result<()> {
        let needs_eos = spec.family != Family::ShallowWaterRotating;
        match (needs_eos, eos) {
            (true, None) => {
                return Err(Error::Model(format!(
                    "family '{}' needs a state equation",
                    spec.family.name()
                )))
            }
            (true, Some(e)) => e.validate()?,
            _ => {}
        }
        match spec.family {
            Family::ShallowWaterRotating if !(spec.g_const > 0.0) => {
                return Err(Error::Model("shallow water needs g_const > 0".into()))
            }
            Family::MulticomponentEuler if spec.components.is_empty() => {
                return Err(Error::Model(
                    "multicomponent model needs at least one component".into(),
                ))
            }
            Family::TensorAdvected => {
                let t = spec
                    .tensor
                    .as_ref()
                    .ok_or_else(|| Error::Model("tensor_advected needs a tensor spec".into()))?;
                if t.up + t.down > MAX_RANK || t.up + t.down == 0 {
                    return Err(Error::Model(format!(
                        "unsupported tensor rank ({},{})",
                        t.up, t.down
                    )));
                }
            }
            Family::Mhd if grid.dim != 2 => {
                return Err(Error::Model("mhd requires a two-dimensional grid".into()))
            }
            Family::EulerKorteweg if !(spec.lambda >= 0.0) => {
                return Err(Error::Model(
                    "Korteweg coefficient must be non-negative".into(),
                ))
            }
            _ => {}
        }
        if spec.family != Family::MulticomponentEuler && !spec.components.is_empty() {
            return Err(Error::Model(
                "components are only allowed for multicomponent_euler".into(),
            ));
        }
        Ok(())
    }

    /// Replaces R, φ and Z by cell data; face values are quadratic traces.
    pub fn set_potentials(&mut self, r: Vec<[f64; 2]>, phi: Vec<f64>, z: Vec<f64>) -> Result<()> {
        let n = self.grid.n_cells();
        if r.len() != n || phi.len() != n || z.len() != n {
            return Err(Error::Shape(
                "potential arrays must have one value per cell".into(),
            ));
        }
        let rx: Vec<f64> = r.iter().map(|v| v[0]).collect();
        let ry: Vec<f64> = r.iter().map(|v| v[1]).collect();
        let tx = ops::traces(&self.grid, &rx);
        let ty = ops::traces(&self.grid, &ry);
        self.r_face = tx.into_iter().zip(ty).map(|(a, b)| [a, b]).collect();
        self.phi_face = ops::traces(&self.grid, &phi);
        self.z_face = ops::traces(&self.grid, &z);
        self.r = r;
        self.phi = phi;
        self.z = z;
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn n_rho(&self) -> usize {
        if self.spec.family == Family::MulticomponentEuler {
            self.spec.components.len()
        } else {
            1
        }
    }

    /// Rank, kind and component count of the advected tensor, if any.
    pub fn tensor_layout(&self) -> Option<(usize, usize, TensorKind, usize)> {
        let d = self.grid.dim;
        match self.spec.family {
            Family::TensorAdvected => {
                let t = self.spec.tensor.as_ref()?;
                Some((t.up, t.down, t.kind, n_components(d, t.up, t.down)))
            }
            Family::Mhd => Some((1, 0, TensorKind::Field, d)),
            _ => None,
        }
    }

    pub fn tensor_ncomp(&self) -> usize {
        self.tensor_layout().map_or(0, |l| l.3)
    }

    pub fn has_rotation(&self) -> bool {
        matches!(
            self.spec.family,
            Family::EulerRotatingGravity | Family::ShallowWaterRotating
        )
    }

    /// Whether the model carries the entropy density as a thermodynamic variable.
    pub fn requires_entropy(&self) -> bool {
        self.eos.is_some_and(|e| e.uses_entropy())
            && self.spec.family != Family::ShallowWaterRotating
    }

    pub fn rho_floor(&self) -> f64 {
        self.eos
            .map_or(crate::thermo::DEFAULT_RHO_FLOOR, |e| e.rho_floor())
    }

    fn check_mass(&self, mass: f64) -> Result<()> {
        if !(mass >= self.rho_floor()) {
            return Err(Error::Degenerate(format!(
                "mass density {mass:e} below floor {:e}",
                self.rho_floor()
            )));
        }
        Ok(())
    }

    /// Point data for `cell`; `grad_rho` is only used by the Korteweg family.
    pub fn point<'a>(
        &self,
        state: &'a State,
        rho: &'a [f64],
        cell: usize,
        grad_rho: [f64; 2],
    ) -> Point<'a> {
        Point {
            u: state.u[cell],
            rho,
            s: state.entropy(cell),
            tensor: state.tensor_at(cell, self.tensor_ncomp()),
            grad_rho,
            r: self.r[cell],
            phi: self.phi[cell],
            z: self.z[cell],
        }
    }

    /// U(ρ, s) with its partials and the thermodynamic point.
    fn potential_energy(
        &self,
        rho: &[f64],
        s: f64,
        phi: f64,
        z: f64,
    ) -> Result<(f64, f64, Vec<f64>, f64, [f64; 4])> {
        // returns (internal ε, potential, ∂U/∂ρ_k, T, [p, g, h_enth, eps_rho])
        let mass: f64 = rho.iter().sum();
        self.check_mass(mass)?;
        match self.spec.family {
            Family::ShallowWaterRotating => {
                let g = self.spec.g_const;
                let eta = mass + z;
                Ok((
                    0.0,
                    0.5 * g * eta * eta,
                    vec![g * eta],
                    0.0,
                    [0.5 * g * mass * mass, g * eta, g * eta, 0.0],
                ))
            }
            fam => {
                let eos = self.eos.as_ref().expect("validated");
                let tp = eos.thermo(mass, s)?;
                let (extra_internal, du): (f64, Vec<f64>) = if fam == Family::MulticomponentEuler {
                    let ex = self
                        .spec
                        .components
                        .iter()
                        .zip(rho)
                        .map(|(c, r)| c.e * r)
                        .sum();
                    (
                        ex,
                        self.spec
                            .components
                            .iter()
                            .map(|c| tp.eps_rho + c.e)
                            .collect(),
                    )
                } else {
                    (0.0, vec![tp.eps_rho])
                };
                let (pot, du) = if fam == Family::EulerRotatingGravity {
                    (mass * phi, du.into_iter().map(|d| d + phi).collect())
                } else {
                    (0.0, du)
                };
                Ok((
                    tp.eps + extra_internal,
                    pot,
                    du,
                    tp.t,
                    [tp.p, tp.g, tp.h_enth, tp.eps_rho],
                ))
            }
        }
    }

    fn extra_energy(&self, tensor: &[f64], grad_rho: [f64; 2]) -> (f64, Vec<f64>, [f64; 2]) {
        match self.spec.family {
            Family::TensorAdvected => {
                let mu = self.spec.tensor.as_ref().map_or(1.0, |t| t.mu);
                let e = 0.5 * mu * tensor.iter().map(|v| v * v).sum::<f64>();
                (e, tensor.iter().map(|v| -mu * v).collect(), [0.0; 2])
            }
            Family::Mhd => {
                let e = 0.5 * tensor.iter().map(|v| v * v).sum::<f64>();
                (e, tensor.iter().map(|v| -v).collect(), [0.0; 2])
            }
            Family::EulerKorteweg => {
                let l = self.spec.lambda;
                let e = 0.5 * l * (grad_rho[0].powi(2) + grad_rho[1].powi(2));
                (e, Vec::new(), [-l * grad_rho[0], -l * grad_rho[1]])
            }
            _ => (0.0, Vec::new(), [0.0; 2]),
        }
    }

    fn rot(&self, r: [f64; 2]) -> [f64; 2] {
        if self.has_rotation() {
            r
        } else {
            [0.0; 2]
        }
    }

    pub fn local(&self, p: &Point) -> Result<Local> {
        let (internal, potential, du, t, [pr, g, h_enth, _]) =
            self.potential_energy(p.rho, p.s, p.phi, p.z)?;
        let mass: f64 = p.rho.iter().sum();
        let r = self.rot(p.r);
        let u = p.u;
        let u2 = u[0] * u[0] + u[1] * u[1];
        let ru = r[0] * u[0] + r[1] * u[1];
        let (extra, dl_dtensor, dl_dgradrho) = self.extra_energy(p.tensor, p.grad_rho);
        let kinetic = 0.5 * mass * u2;
        Ok(Local {
            mass,
            m: [mass * (u[0] + r[0]), mass * (u[1] + r[1])],
            dl_drho: du.iter().map(|d| 0.5 * u2 + ru - d).collect(),
            dl_ds: -t,
            dl_dtensor,
            dl_dgradrho,
            lagrangian: kinetic + mass * ru - internal - potential - extra,
            kinetic,
            internal,
            potential,
            extra,
            p: pr,
            t,
            g,
            h_enth,
        })
    }

    /// Closed-form Hamiltonian density 𝔥(m, ρ, s, …) = |m − MR|²/(2M) + U + E_extra.
    pub fn hamiltonian(&self, m: [f64; 2], p: &Point) -> Result<Ham> {
        let (internal, potential, du, t, _) = self.potential_energy(p.rho, p.s, p.phi, p.z)?;
        let mass: f64 = p.rho.iter().sum();
        let r = self.rot(p.r);
        let q = [m[0] - mass * r[0], m[1] - mass * r[1]];
        let q2 = q[0] * q[0] + q[1] * q[1];
        let (extra, dl_dtensor, _) = self.extra_energy(p.tensor, p.grad_rho);
        let qr = q[0] * r[0] + q[1] * r[1];
        Ok(Ham {
            h: q2 / (2.0 * mass) + internal + potential + extra,
            dh_dm: [q[0] / mass, q[1] / mass],
            dh_drho: du
                .iter()
                .map(|d| -q2 / (2.0 * mass * mass) - qr / mass + d)
                .collect(),
            dh_ds: t,
            dh_dtensor: dl_dtensor.iter().map(|v| -v).collect(),
        })
    }

    /// u = m/M − R.
    pub fn velocity_from_momentum_point(
        &self,
        m: [f64; 2],
        rho: &[f64],
        r: [f64; 2],
    ) -> Result<[f64; 2]> {
        let mass: f64 = rho.iter().sum();
        self.check_mass(mass)?;
        let r = self.rot(r);
        Ok([m[0] / mass - r[0], m[1] / mass - r[1]])
    }

    pub fn momentum_from_velocity_point(
        &self,
        u: [f64; 2],
        rho: &[f64],
        r: [f64; 2],
    ) -> Result<[f64; 2]> {
        let mass: f64 = rho.iter().sum();
        self.check_mass(mass)?;
        let r = self.rot(r);
        Ok([mass * (u[0] + r[0]), mass * (u[1] + r[1])])
    }

    /// Density gradient with the face value equal to the adjacent cell value,
    /// so its normal component vanishes on every boundary face.
    pub fn korteweg_gradient(&self, state: &State) -> Vec<[f64; 2]> {
        if self.spec.family != Family::EulerKorteweg {
            return vec![[0.0; 2]; self.grid.n_cells()];
        }
        let rho = &state.rho[0];
        let qb: Vec<f64> = self.grid.faces.iter().map(|f| rho[f.cell]).collect();
        ops::grad_with_faces(&self.grid, rho, &qb)
    }

    /// Divergence of [`Self::korteweg_gradient`] with zero normal flux, so that
    /// `∂𝔩/∂ρ + λ·lap` is the potential `∂𝔩/∂ρ − div ∂𝔩/∂∇ρ`.
    pub fn korteweg_laplacian(&self, state: &State) -> Vec<f64> {
        if self.spec.family != Family::EulerKorteweg {
            return vec![0.0; self.grid.n_cells()];
        }
        let g = self.korteweg_gradient(state);
        ops::div_with_flux(&self.grid, &g, &vec![0.0; self.grid.faces.len()])
    }

    /// Pointwise `Local` at every cell.
    pub fn locals(&self, state: &State) -> Result<Vec<Local>> {
        let gr = self.korteweg_gradient(state);
        (0..self.grid.n_cells())
            .map(|c| {
                let rho = state.rho_at(c);
                self.local(&self.point(state, &rho, c, gr[c]))
            })
            .collect()
    }

    fn vector_field(&self, kind: Kind, up: usize, v: impl Fn(usize) -> [f64; 2]) -> Field {
        let d = self.grid.dim;
        let mut data = Vec::with_capacity(self.grid.n_cells() * d);
        for c in 0..self.grid.n_cells() {
            data.extend_from_slice(&v(c)[..d]);
        }
        Field::new(self.grid.clone(), up, 1 - up, kind, data).expect("sized by construction")
    }

    pub fn momentum_from_velocity(&self, state: &State) -> Result<Field> {
        let ms = (0..self.grid.n_cells())
            .map(|c| self.momentum_from_velocity_point(state.u[c], &state.rho_at(c), self.r[c]))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.vector_field(Kind::Density, 0, |c| ms[c]))
    }

    pub fn velocity_from_momentum(&self, m: &Field, rho: &[Vec<f64>]) -> Result<Field> {
        if m.rank() != (0, 1) || m.kind() != Kind::Density {
            return Err(Error::Kind("momentum must be a 1-form density".into()));
        }
        let us = (0..self.grid.n_cells())
            .map(|c| {
                let mv = m.value(c);
                let mm = [mv[0], if self.grid.dim == 2 { mv[1] } else { 0.0 }];
                let r: Vec<f64> = rho.iter().map(|x| x[c]).collect();
                self.velocity_from_momentum_point(mm, &r, self.r[c])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.vector_field(Kind::Function, 1, |c| us[c]))
    }

    pub fn variational_derivatives(&self, state: &State) -> Result<VarDerivs> {
        let locals = self.locals(state)?;
        let g = &self.grid;
        let scalar = |f: &dyn Fn(&Local) -> f64| {
            Field::scalar_from(g.clone(), Kind::Function, locals.iter().map(f))
        };
        let dl_du = self.vector_field(Kind::Density, 0, |c| locals[c].m);
        let dl_drho = (0..self.n_rho())
            .map(|k| scalar(&|l: &Local| l.dl_drho[k]))
            .collect();
        let dl_ds = state.s.as_ref().map(|_| scalar(&|l: &Local| l.dl_ds));
        let dl_dtensor = match self.tensor_layout() {
            Some((up, down, kind, _)) => {
                let d = g.dim;
                let data = locals
                    .iter()
                    .flat_map(|l| swap_slots(d, up, down, &l.dl_dtensor))
                    .collect();
                // ∂𝔩/∂π of a density is a function of the dual type and vice versa
                let k = match kind {
                    TensorKind::Density => Kind::Function,
                    TensorKind::Field => Kind::Density,
                };
                Some(Field::new(g.clone(), down, up, k, data)?)
            }
            None => None,
        };
        let dl_dgradrho = (self.spec.family == Family::EulerKorteweg)
            .then(|| self.vector_field(Kind::Function, 1, |c| locals[c].dl_dgradrho));
        Ok(VarDerivs {
            dl_du,
            dl_drho,
            dl_ds,
            dl_dtensor,
            dl_dgradrho,
        })
    }

    pub fn energy_density(&self, state: &State) -> Result<Field> {
        let locals = self.locals(state)?;
        Ok(Field::scalar_from(
            self.grid.clone(),
            Kind::Density,
            locals.iter().map(Local::energy),
        ))
    }

    /// 𝔥 and ∂𝔥/∂m on the grid.
    pub fn hamiltonian_density(&self, m: &Field, state: &State) -> Result<(Field, Field)> {
        let gr = self.korteweg_gradient(state);
        let hs = (0..self.grid.n_cells())
            .map(|c| {
                let rho = state.rho_at(c);
                let mv = m.value(c);
                let mm = [mv[0], if self.grid.dim == 2 { mv[1] } else { 0.0 }];
                self.hamiltonian(mm, &self.point(state, &rho, c, gr[c]))
            })
            .collect::<Result<Vec<_>>>()?;
        let h = Field::scalar_from(self.grid.clone(), Kind::Density, hs.iter().map(|h| h.h));
        let dh = self.vector_field(Kind::Function, 1, |c| hs[c].dh_dm);
        Ok((h, dh))
    }

    /// Scalar curl of R (equal to 2ω).
    pub fn curl_r(&self) -> Vec<f64> {
        if self.grid.dim == 1 {
            return vec![0.0; self.grid.n_cells()];
        }
        let rx: Vec<f64> = self.r.iter().map(|v| v[0]).collect();
        let ry: Vec<f64> = self.r.iter().map(|v| v[1]).collect();
        let a = ops::deriv(&self.grid, &ry, 0);
        let b = ops::deriv(&self.grid, &rx, 1);
        a.iter().zip(&b).map(|(p, q)| p - q).collect()
    }
}
