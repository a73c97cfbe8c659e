//! Scenario configuration: JSON schema, validation and construction of the
//! solver and initial state.
//!
//! ```json
//! {
//!   "grid": { "dim": 1, "extents": [[0, 1]], "cells": [64] },
//!   "model": { "family": "euler" },
//!   "state_equation": { "family": "barotropic", "kappa": 1, "gamma": 2 },
//!   "initial": { "u": ["0.1", "0"], "rho": "1 + 0.1*sin(2*pi*x)" },
//!   "bulk_sources": { "theta_rho": "0.05" },
//!   "boundaries": [
//!     { "patch": "left", "mode": "inflow", "params": { "u0": [0.1, 0], "rho0": 1 } },
//!     { "patch": "right", "mode": "outflow_inviscid", "params": { "nu0": 0.1 } }
//!   ],
//!   "t_end": 0.5,
//!   "cfl": 0.4
//! }
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{Formulation, Solver, DEFAULT_CFL};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Grid, PatchSpec};
use crate::models::{Family, Model, ModelSpec};
use crate::ops;
use crate::sources::{BulkSpec, FluxClosure, Mode, Sources};
use crate::state::State;
use crate::thermo::StateEquation;

/// Largest accepted cell count per axis.
pub const MAX_CELLS_PER_AXIS: usize = 4096;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub extents: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
    #[serde(default)]
    pub patches: Vec<PatchSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(Expr),
    Many(Vec<Expr>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<Expr> {
        match self {
            OneOrMany::One(e) => vec![e.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub u: Option<[Expr; 2]>,
    pub rho: OneOrMany,
    /// Entropy density.
    #[serde(default)]
    pub s: Option<Expr>,
    /// Temperature, converted to entropy through the state equation.
    #[serde(default)]
    pub temperature: Option<Expr>,
    #[serde(default)]
    pub tensor: Option<Vec<Expr>>,
    /// Magnetic vector potential A with B = (∂_y A, −∂_x A).
    #[serde(default)]
    pub vector_potential: Option<Expr>,
}

impl InitialConfig {
    pub fn rho_exprs(&self) -> Vec<Expr> {
        self.rho.to_vec()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub patch: String,
    pub mode: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

impl BoundaryConfig {
    pub fn closure(&self) -> Result<FluxClosure> {
        let mut obj = self.params.clone();
        obj.insert("mode".into(), serde_json::Value::String(self.mode.clone()));
        let mode: Mode =
            serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| Error::Closure {
                patch: self.patch.clone(),
                msg: e.to_string(),
            })?;
        Ok(FluxClosure::new(&self.patch, mode))
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Time-series row every this many steps.
    #[serde(default = "one")]
    pub every: usize,
    /// Snapshot every this many steps; 0 writes only the initial and final states.
    #[serde(default)]
    pub snapshot_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            every: 1,
            snapshot_every: 0,
        }
    }
}

fn four() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(default = "four")]
    pub labels_per_cell: usize,
    /// Width of the upstream label band; defaults to the inflow distance plus two cells.
    #[serde(default)]
    pub margin: Option<f64>,
    /// Label spacings (intervals per side) for the Piola residual study.
    #[serde(default)]
    pub piola_levels: Option<Vec<usize>>,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            labels_per_cell: 4,
            margin: None,
            piola_levels: None,
        }
    }
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

fn default_scheme() -> String {
    "rk4".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub grid: GridConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub state_equation: Option<StateEquation>,
    pub initial: InitialConfig,
    #[serde(default)]
    pub bulk_sources: BulkSpec,
    #[serde(default)]
    pub boundaries: Vec<BoundaryConfig>,
    /// Fixed step; when absent the step follows from `cfl`.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default)]
    pub formulation: Formulation,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub material: MaterialConfig,
}

fn n_rho_of(spec: &ModelSpec) -> usize {
    if spec.family == Family::MulticomponentEuler {
        spec.components.len()
    } else {
        1
    }
}

impl Scenario {
    /// Parses and validates; errors name the JSON path, line and column.
    pub fn from_json_str(src: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(src);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            Error::Config(format!(
                "{origin}: line {} column {}: at `{}`: {inner}",
                inner.line(),
                inner.column(),
                e.path()
            ))
        })?;
        sc.validate()
            .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&src, &path.display().to_string())
    }

    /// Checks that need no allocation of fields.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.dim != 1 && g.dim != 2 {
            return Err(Error::Config(format!(
                "grid.dim must be 1 or 2, got {}",
                g.dim
            )));
        }
        if g.extents.len() != g.dim || g.cells.len() != g.dim {
            return Err(Error::Config(format!(
                "grid needs {} extents and cell counts",
                g.dim
            )));
        }
        if let Some(&n) = g.cells.iter().find(|&&n| n > MAX_CELLS_PER_AXIS) {
            return Err(Error::Config(format!(
                "grid.cells {n} exceeds {MAX_CELLS_PER_AXIS}"
            )));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config("t_end must be positive".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::Config("dt must be positive".into()));
            }
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config("cfl must lie in (0, 1]".into()));
        }
        if self.scheme != "rk4" {
            return Err(Error::Config(format!(
                "unknown scheme '{}'; only rk4 is available",
                self.scheme
            )));
        }
        if self.output.every == 0 {
            return Err(Error::Config("output.every must be at least 1".into()));
        }
        let nr = n_rho_of(&self.model);
        if self.initial.rho.to_vec().len() != nr {
            return Err(Error::Config(format!("initial.rho needs {nr} entries")));
        }
        let needs_s = self.state_equation.is_some_and(|e| e.uses_entropy());
        if needs_s && self.initial.s.is_none() && self.initial.temperature.is_none() {
            return Err(Error::Config(
                "initial.s or initial.temperature is required for this state equation".into(),
            ));
        }
        if self.initial.s.is_some() && self.initial.temperature.is_some() {
            return Err(Error::Config(
                "give initial.s or initial.temperature, not both".into(),
            ));
        }
        if self.initial.tensor.is_some() && self.initial.vector_potential.is_some() {
            return Err(Error::Config(
                "give initial.tensor or initial.vector_potential, not both".into(),
            ));
        }
        if self.initial.vector_potential.is_some() && self.model.family != Family::Mhd {
            return Err(Error::Config(
                "initial.vector_potential applies to the mhd family only".into(),
            ));
        }
        if self.material.labels_per_cell < crate::material::MIN_LABELS_PER_CELL {
            return Err(Error::Config(format!(
                "material.labels_per_cell must be at least {}",
                crate::material::MIN_LABELS_PER_CELL
            )));
        }
        for b in &self.boundaries {
            b.closure()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// The same scenario with every axis refined by `2^level` and the fixed
    /// step and output cadence scaled to keep the sample times.
    pub fn refined(&self, level: u32) -> Self {
        let f = 1usize << level;
        let mut s = self.clone();
        s.grid.cells.iter_mut().for_each(|n| *n *= f);
        s.dt = s.dt.map(|dt| dt / f as f64);
        s.output.every *= f;
        s.output.snapshot_every *= f;
        s
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::new(
            self.grid.dim,
            &self.grid.extents,
            &self.grid.cells,
            &self.grid.patches,
        )?))
    }

    pub fn build_solver(&self) -> Result<Solver> {
        let grid = self.build_grid()?;
        let model = Model::new(self.model.clone(), self.state_equation, grid.clone())?;
        let closures = if self.boundaries.is_empty() {
            grid.patches
                .iter()
                .map(|p| FluxClosure::new(&p.name, Mode::Closed))
                .collect()
        } else {
            self.boundaries
                .iter()
                .map(|b| b.closure())
                .collect::<Result<Vec<_>>>()?
        };
        let sources = Sources::new(self.bulk_sources.clone(), closures, &model)?;
        let mut solver = Solver::new(model, sources, self.formulation)?;
        solver.cfl = self.cfl;
        Ok(solver)
    }

    pub fn initial_state(&self, solver: &Solver) -> Result<State> {
        let model = &solver.model;
        let g = &model.grid;
        let n = g.n_cells();
        let at = |e: &Expr| -> Vec<f64> { (0..n).map(|c| e.eval(g.center(c), 0.0)).collect() };
        let u = match &self.initial.u {
            Some([a, b]) => {
                let (x, y) = (at(a), at(b));
                (0..n)
                    .map(|c| [x[c], if g.dim == 2 { y[c] } else { 0.0 }])
                    .collect()
            }
            None => vec![[0.0; 2]; n],
        };
        let rho: Vec<Vec<f64>> = self.initial.rho.to_vec().iter().map(at).collect();
        let mass: Vec<f64> = (0..n).map(|c| rho.iter().map(|r| r[c]).sum()).collect();
        let s = if let Some(e) = &self.initial.s {
            Some(at(e))
        } else if let Some(e) = &self.initial.temperature {
            let eos = model.eos.as_ref().ok_or_else(|| {
                Error::Config("initial.temperature needs a state equation".into())
            })?;
            let t = at(e);
            Some(
                (0..n)
                    .map(|c| eos.entropy_from_temperature(mass[c], t[c]))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let nt = model.tensor_ncomp();
        let tensor = if nt == 0 {
            None
        } else if let Some(a) = &self.initial.vector_potential {
            let av = at(a);
            let (dx, dy) = (ops::deriv(g, &av, 0), ops::deriv(g, &av, 1));
            Some((0..n).flat_map(|c| [dy[c], -dx[c]]).collect())
        } else {
            let es = self
                .initial
                .tensor
                .as_ref()
                .ok_or_else(|| Error::Config(format!("initial.tensor needs {nt} entries")))?;
            if es.len() != nt {
                return Err(Error::Config(format!("initial.tensor needs {nt} entries")));
            }
            let cols: Vec<Vec<f64>> = es.iter().map(at).collect();
            Some(
                (0..n)
                    .flat_map(|c| cols.iter().map(move |v| v[c]).collect::<Vec<_>>())
                    .collect(),
            )
        };
        let state = State {
            t: 0.0,
            u,
            rho,
            s,
            tensor,
        };
        solver.check_state(&state)?;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPEN: &str = r#"{
        "grid": { "dim": 1, "extents": [[0, 1]], "cells": [16] },
        "model": { "family": "euler" },
        "state_equation": { "family": "barotropic", "kappa": 1, "gamma": 2 },
        "initial": { "u": ["0.1", "0"], "rho": "1 + 0.1*sin(2*pi*x)" },
        "bulk_sources": { "theta_rho": "0.05" },
        "boundaries": [
            { "patch": "left", "mode": "inflow", "params": { "u0": [0.1, 0], "rho0": 1 } },
            { "patch": "right", "mode": "outflow_inviscid", "params": { "nu0": 0.1 } }
        ],
        "t_end": 0.5
    }"#;

    #[test]
    fn parses_and_builds() {
        let sc = Scenario::from_json_str(OPEN, "open.json").unwrap();
        assert_eq!(sc.formulation, Formulation::Momentum);
        let solver = sc.build_solver().unwrap();
        let st = sc.initial_state(&solver).unwrap();
        assert_eq!(st.rho[0].len(), 16);
        assert!((st.u[3][0] - 0.1).abs() < 1e-15);
        assert_eq!(sc.hash().len(), 64);
        assert_eq!(sc.refined(2).grid.cells, vec![64]);
    }

    #[test]
    fn malformed_config_names_path_and_line() {
        let bad = OPEN.replace("\"cells\": [16]", "\"cells\": [\"x\"]");
        let msg = Scenario::from_json_str(&bad, "bad.json")
            .unwrap_err()
            .to_string();
        assert!(
            msg.contains("bad.json") && msg.contains("line 2") && msg.contains("grid.cells"),
            "{msg}"
        );
        let bad = OPEN.replace("\"t_end\": 0.5", "\"t_end\": -1");
        assert!(Scenario::from_json_str(&bad, "x").is_err());
        let bad = OPEN.replace("1 + 0.1*sin(2*pi*x)", "1 + (");
        assert!(Scenario::from_json_str(&bad, "x").is_err());
        let bad = OPEN.replace("\"nu0\": 0.1", "\"nu1\": 0.1");
        assert!(Scenario::from_json_str(&bad, "x").is_err());
    }

    #[test]
    fn missing_entropy_for_ideal_gas_is_rejected() {
        let bad = OPEN.replace(
            r#"{ "family": "barotropic", "kappa": 1, "gamma": 2 }"#,
            r#"{ "family": "ideal_gas", "cv": 2.5, "gamma": 1.4, "t_ref": 1, "rho_ref": 1, "sigma_ref": 0 }"#,
        );
        let msg = Scenario::from_json_str(&bad, "x").unwrap_err().to_string();
        assert!(msg.contains("temperature"), "{msg}");
    }

    #[test]
    fn uncovered_patch_is_rejected_at_build() {
        let sc = Scenario::from_json_str(OPEN, "x").unwrap();
        let mut s2 = sc.clone();
        s2.boundaries.pop();
        assert!(s2.build_solver().is_err());
    }

    #[test]
    fn temperature_initialization_inverts_the_state_equation() {
        let src = OPEN
            .replace(
                r#"{ "family": "barotropic", "kappa": 1, "gamma": 2 }"#,
                r#"{ "family": "ideal_gas", "cv": 2.5, "gamma": 1.4, "t_ref": 1, "rho_ref": 1, "sigma_ref": 0 }"#,
            )
            .replace(r#""rho": "1 + 0.1*sin(2*pi*x)""#, r#""rho": "1 + 0.1*sin(2*pi*x)", "temperature": "1.3""#)
            .replace(r#""rho0": 1 }"#, r#""rho0": 1, "t0": 1.3 }"#);
        let sc = Scenario::from_json_str(&src, "x").unwrap();
        let solver = sc.build_solver().unwrap();
        let st = sc.initial_state(&solver).unwrap();
        let eos = solver.model.eos.unwrap();
        for c in 0..16 {
            let t = eos
                .temperature_of(st.rho[0][c], st.s.as_ref().unwrap()[c])
                .unwrap();
            assert!((t - 1.3).abs() < 1e-12);
        }
    }
}
