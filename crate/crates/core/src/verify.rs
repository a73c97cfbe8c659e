//! Verification suites run against a scenario: budgets, bracket identities,
//! Legendre consistency, stress tables and material-side checks.

use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::brackets::{self, Brackets, Functional};
use crate::budgets::{self, Audit, EnergyForm};
use crate::config::Scenario;
use crate::dynamics::{advective_stress, stress_point, Solver};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::Grid;
use crate::material::{self, Analytic, Lattice, Trajectory};
use crate::models::{ComponentSpec, Family, Model, ModelSpec, Point, TensorKind, TensorSpec};
use crate::runner::{fitted_order, MIN_ORDER};
use crate::sources::Mode;
use crate::thermo::StateEquation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Budgets,
    Bracket,
    Legendre,
    StressTables,
    Material,
    All,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "budgets" => Suite::Budgets,
            "bracket" => Suite::Bracket,
            "legendre" => Suite::Legendre,
            "stress_tables" => Suite::StressTables,
            "material" => Suite::Material,
            "all" => Suite::All,
            _ => {
                return Err(Error::Config(format!(
                    "unknown suite '{s}'; expected budgets, bracket, legendre, stress_tables, material or all"
                )))
            }
        })
    }
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Budgets => "budgets",
            Suite::Bracket => "bracket",
            Suite::Legendre => "legendre",
            Suite::StressTables => "stress_tables",
            Suite::Material => "material",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    /// `true` when `value ≥ tol` is required instead of `value ≤ tol`.
    pub at_least: bool,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol,
            at_least: false,
            pass: value <= tol,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol,
            at_least: true,
            pass: value >= tol,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Reason the suite does not apply to the scenario.
    pub skipped: Option<String>,
    /// `(file name, contents)` pairs such as `budgets.csv`.
    #[serde(skip)]
    pub artifacts: Vec<(String, String)>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>, artifacts: Vec<(String, String)>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self {
            suite: suite.name().into(),
            checks,
            pass,
            skipped: None,
            artifacts,
        }
    }
}

/// Human-readable table of every check.
pub fn render(reports: &[SuiteReport]) -> String {
    let mut s = format!(
        "{:<14} {:<44} {:>12} {:>14} {}\n",
        "suite", "check", "value", "bound", "verdict"
    );
    for r in reports {
        if let Some(why) = &r.skipped {
            s.push_str(&format!(
                "{:<14} {:<44} {:>12} {:>14} SKIP ({why})\n",
                r.suite, "-", "-", "-"
            ));
            continue;
        }
        for c in &r.checks {
            let bound = format!("{}{:.2e}", if c.at_least { "≥ " } else { "≤ " }, c.tol);
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            s.push_str(&format!(
                "{:<14} {:<44} {:>12.3e} {:>14} {verdict}\n",
                r.suite, c.name, c.value, bound
            ));
        }
    }
    s
}

/// Runs one suite, or every suite for [`Suite::All`]. Suites that do not apply
/// to the scenario's model are reported as skipped under `All`.
pub fn run_suite(suite: Suite, sc: &Scenario) -> Result<Vec<SuiteReport>> {
    let one = |s: Suite| -> Result<SuiteReport> {
        match s {
            Suite::Budgets => budgets_suite(sc),
            Suite::Bracket => bracket_suite(sc),
            Suite::Legendre => legendre_suite(sc),
            Suite::StressTables => stress_tables_suite(sc),
            Suite::Material => material_suite(sc),
            Suite::All => unreachable!(),
        }
    };
    if suite != Suite::All {
        return Ok(vec![one(suite)?]);
    }
    let mut out = Vec::new();
    for s in [
        Suite::Budgets,
        Suite::Bracket,
        Suite::Legendre,
        Suite::StressTables,
        Suite::Material,
    ] {
        match one(s) {
            Ok(r) => out.push(r),
            Err(Error::Model(why)) => out.push(SuiteReport {
                suite: s.name().into(),
                checks: vec![],
                pass: true,
                skipped: Some(why),
                artifacts: vec![],
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn rel(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub fn budgets_suite(sc: &Scenario) -> Result<SuiteReport> {
    let solver = sc.build_solver()?;
    let st = sc.initial_state(&solver)?;
    let audit = Audit::new(&solver, &st)?;
    let reports = audit.all()?;
    let mut checks: Vec<Check> = reports
        .iter()
        .map(|r| Check::at_most(format!("residual {}", r.quantity), r.residual.abs(), r.tol))
        .collect();
    let generic = audit.energy_budget(EnergyForm::Generic)?;
    if let Some(form) = EnergyForm::specific(solver.model.family()) {
        let spec = audit.energy_budget(form)?;
        checks.push(Check::at_most(
            format!("generic vs {}", form.name()),
            rel(
                generic.max_column_diff(&spec),
                generic.scale().max(spec.scale()),
            ),
            1e-10,
        ));
        let sum = audit.split_total()?;
        checks.push(Check::at_most(
            "energy splits sum to total",
            rel(sum.max_column_diff(&spec), sum.scale().max(spec.scale())),
            1e-10,
        ));
    }
    let forms = audit.boundary_form_equivalence();
    checks.push(Check::at_most(
        "boundary energy forms agree",
        forms.max_relative,
        1e-10,
    ));
    if solver.model.family() == Family::Mhd {
        checks.push(Check::at_most(
            "mhd cross-product identity",
            forms.relation_violation,
            1e-10,
        ));
    }
    Ok(SuiteReport::new(
        Suite::Budgets,
        checks,
        vec![("budgets.csv".into(), budgets::to_csv(&reports))],
    ))
}

pub fn bracket_suite(sc: &Scenario) -> Result<SuiteReport> {
    let solver = sc.build_solver()?;
    let st = sc.initial_state(&solver)?;
    let b = Brackets::new(&solver, &st)?;
    let cat = Functional::catalogue(&solver.model);
    let derivs = cat
        .iter()
        .map(|f| b.functional_derivative(f))
        .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();

    // defects relative to the largest entry of the bracket table
    let mut anti: f64 = 0.0;
    let mut split: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..cat.len() {
        for j in 0..cat.len() {
            let a = b.lie_poisson(&derivs[i], &derivs[j]);
            let c = b.lie_poisson(&derivs[j], &derivs[i]);
            scale = scale
                .max(a.single.abs())
                .max(a.bulk.abs())
                .max(a.boundary.abs());
            anti = anti.max((a.single + c.single).abs());
            split = split.max((a.bulk + a.boundary - a.single).abs());
        }
    }
    checks.push(Check::at_most("antisymmetry", rel(anti, scale), 1e-10));
    checks.push(Check::at_most(
        "bulk + boundary = bracket",
        rel(split, scale),
        1e-10,
    ));

    let h2 = solver.grid().min_dx().powi(2);
    let mut rows = Vec::new();
    for f in &cat {
        let row = b.extended_evolution(f)?;
        let scale = row
            .d_dt
            .abs()
            .max(row.bulk.abs())
            .max(row.boundary.abs())
            .max(row.sources.abs());
        checks.push(Check::at_most(
            format!("evolution {}", row.functional),
            row.residual.abs(),
            1e-8 + 10.0 * h2 * scale,
        ));
        rows.push(row);
    }

    let g = solver.grid();
    let h_idx = cat
        .iter()
        .position(|f| matches!(f, Functional::Hamiltonian))
        .unwrap();
    let free: Vec<usize> = (0..g.faces.len())
        .filter(|&q| {
            matches!(
                solver.sources.closure_of_patch(g.faces[q].patch).mode,
                Mode::FreeOpen
            )
        })
        .collect();
    if !free.is_empty() {
        let mut worst: f64 = 0.0;
        for d in &derivs {
            let defects = b.boundary_face_defects(d, &derivs[h_idx]);
            let scale = b
                .lie_poisson(d, &derivs[h_idx])
                .boundary_continuum
                .abs()
                .max(1.0);
            worst = worst.max(free.iter().map(|&q| defects[q].abs()).fold(0.0, f64::max) / scale);
        }
        checks.push(Check::at_most("case B facewise cancellation", worst, 1e-12));
    }
    let (_, rows_state, _) = solver.boundary_report(&st)?;
    let scale = st.rho.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    checks.push(Check::at_most(
        "case A boundary rows",
        rows_state.worst() / scale,
        1e-12,
    ));
    Ok(SuiteReport::new(
        Suite::Bracket,
        checks,
        vec![("bracket.csv".into(), brackets::to_csv(&rows))],
    ))
}

fn reference_models(eos: StateEquation) -> Result<Vec<Model>> {
    let g = std::sync::Arc::new(Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[4, 4], &[])?);
    let mut specs = vec![ModelSpec::new(Family::Euler)];
    let mut rot = ModelSpec::new(Family::EulerRotatingGravity);
    rot.phi = Some(Expr::constant(1.5));
    specs.push(rot);
    let mut sw = ModelSpec::new(Family::ShallowWaterRotating);
    sw.g_const = 9.81;
    specs.push(sw);
    let mut mc = ModelSpec::new(Family::MulticomponentEuler);
    mc.components = vec![
        ComponentSpec {
            name: "a".into(),
            e: 0.3,
        },
        ComponentSpec {
            name: "b".into(),
            e: -0.1,
        },
    ];
    specs.push(mc);
    let mut ta = ModelSpec::new(Family::TensorAdvected);
    ta.tensor = Some(TensorSpec {
        up: 1,
        down: 1,
        kind: TensorKind::Density,
        mu: 0.7,
    });
    specs.push(ta);
    specs.push(ModelSpec::new(Family::Mhd));
    let mut k = ModelSpec::new(Family::EulerKorteweg);
    k.lambda = 0.4;
    specs.push(k);
    specs
        .into_iter()
        .map(|s| {
            let e = (s.family != Family::ShallowWaterRotating).then_some(eos);
            Model::new(s, e, g.clone())
        })
        .collect()
}

/// Number of random states per family in the Legendre suite.
pub const LEGENDRE_SAMPLES: usize = 100;

pub fn legendre_suite(sc: &Scenario) -> Result<SuiteReport> {
    let gas = StateEquation::ideal_gas(2.5, 1.4, 1.0, 1.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut checks = Vec::new();
    for model in reference_models(gas)? {
        let (mut trip, mut ham): (f64, f64) = (0.0, 0.0);
        for _ in 0..LEGENDRE_SAMPLES {
            let u = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let r = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let rho: Vec<f64> = (0..model.n_rho())
                .map(|_| rng.random_range(0.2..3.0))
                .collect();
            let tensor: Vec<f64> = (0..model.tensor_ncomp())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let s = rng.random_range(-0.5..0.5);
            let grad = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let p = Point {
                u,
                rho: &rho,
                s,
                tensor: &tensor,
                grad_rho: grad,
                r,
                phi: rng.random_range(-1.0..1.0),
                z: 0.3,
            };
            let m = model.momentum_from_velocity_point(u, &rho, r)?;
            let back = model.velocity_from_momentum_point(m, &rho, r)?;
            let un = u[0].abs().max(u[1].abs()).max(1.0);
            trip = trip.max((back[0] - u[0]).abs().max((back[1] - u[1]).abs()) / un);
            let l = model.local(&p)?;
            let h = model.hamiltonian(m, &p)?;
            let legendre = m[0] * u[0] + m[1] * u[1] - l.lagrangian;
            ham = ham.max((h.h - legendre).abs() / (1.0 + h.h.abs()));
        }
        let fam = model.family().name();
        checks.push(Check::at_most(format!("round trip {fam}"), trip, 1e-13));
        checks.push(Check::at_most(format!("hamiltonian {fam}"), ham, 1e-13));
    }

    // momentum-form tendencies against the velocity form through the chain rule
    let solver = sc.build_solver()?;
    let st = sc.initial_state(&solver)?;
    if let Ok(b) = Brackets::new(&solver, &st) {
        let (dm, _) = b.hamiltonian_tendency()?;
        let t = solver.tendency(&st)?;
        let model = &solver.model;
        let mut worst: f64 = 0.0;
        for c in 0..st.n_cells() {
            let mass: f64 = st.rho.iter().map(|r| r[c]).sum();
            let dmass: f64 = t.drho.iter().map(|r| r[c]).sum();
            let r = if model.has_rotation() {
                model.r[c]
            } else {
                [0.0; 2]
            };
            for i in 0..solver.grid().dim {
                let chain = mass * t.du[c][i] + (st.u[c][i] + r[i]) * dmass;
                worst = worst.max((dm[c][i] - chain).abs() / (1.0 + chain.abs()));
            }
        }
        checks.push(Check::at_most(
            "momentum form = velocity form",
            worst,
            1e-12,
        ));
    }
    Ok(SuiteReport::new(Suite::Legendre, checks, vec![]))
}

/// Stress rows for integer tensors compared with their closed forms.
pub fn stress_tables_suite(sc: &Scenario) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut int = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| f64::from(rng.random_range(-5i32..=5)))
            .collect()
    };
    let kd = |c: usize, e: usize| if c == e { 1.0 } else { 0.0 };
    let g = std::sync::Arc::new(Grid::new(2, &[[0.0, 1.0], [0.0, 1.0]], &[4, 4], &[])?);
    let mhd = Model::new(
        ModelSpec::new(Family::Mhd),
        Some(StateEquation::barotropic(1.0, 2.0)),
        g,
    )?;
    let mut worst = [0.0f64; 8];
    let names = [
        "sigma_pi vector density",
        "sigma_pi one-form density",
        "sigma_pi symmetric (2,0) density",
        "sigma_pi symmetric (0,2) density",
        "sigma_kappa vector field",
        "sigma_kappa one-form",
        "sigma_kappa two-form",
        "mhd B ⊗ dl/dB",
    ];
    for _ in 0..200 {
        let (v, w) = (int(2), int(2));
        let (a, b) = (int(3), int(3));
        let (p, l) = (vec![a[0], a[1], a[1], a[2]], vec![b[0], b[1], b[1], b[2]]);
        let (x, y) = (int(1)[0], int(1)[0]);
        let (k, q) = (vec![0.0, x, -x, 0.0], vec![0.0, y, -y, 0.0]);
        let pair_vw = v[0] * w[0] + v[1] * w[1];
        let pair_kq: f64 = k.iter().zip(&q).map(|(a, b)| a * b).sum();
        let rows: [(
            usize,
            usize,
            TensorKind,
            &[f64],
            &[f64],
            Box<dyn Fn(usize, usize) -> f64>,
        ); 7] = [
            (
                1,
                0,
                TensorKind::Density,
                &v,
                &w,
                Box::new(|c, e| v[c] * w[e]),
            ),
            (
                0,
                1,
                TensorKind::Density,
                &v,
                &w,
                Box::new(|c, e| -v[e] * w[c]),
            ),
            (
                2,
                0,
                TensorKind::Density,
                &p,
                &l,
                Box::new(|c, e| (0..2).map(|i| 2.0 * p[i * 2 + c] * l[i * 2 + e]).sum()),
            ),
            (
                0,
                2,
                TensorKind::Density,
                &p,
                &l,
                Box::new(|c, e| (0..2).map(|i| -2.0 * p[i * 2 + e] * l[i * 2 + c]).sum()),
            ),
            (
                1,
                0,
                TensorKind::Field,
                &v,
                &w,
                Box::new(|c, e| pair_vw * kd(c, e) + v[c] * w[e]),
            ),
            (
                0,
                1,
                TensorKind::Field,
                &v,
                &w,
                Box::new(|c, e| pair_vw * kd(c, e) - v[e] * w[c]),
            ),
            (
                0,
                2,
                TensorKind::Field,
                &k,
                &q,
                Box::new(|c, e| {
                    pair_kq * kd(c, e)
                        - (0..2)
                            .map(|i| 2.0 * k[i * 2 + e] * q[i * 2 + c])
                            .sum::<f64>()
                }),
            ),
        ];
        for (r, (up, down, kind, t, dl, want)) in rows.iter().enumerate() {
            let s = stress_point(2, *up, *down, *kind, t, dl)?;
            for c in 0..2 {
                for e in 0..2 {
                    worst[r] = worst[r].max((s[c * 2 + e] - want(c, e)).abs());
                }
            }
        }
        let s = advective_stress(&mhd, &v, &w)?;
        for c in 0..2 {
            for e in 0..2 {
                worst[7] = worst[7].max((s[c * 2 + e] - v[c] * w[e]).abs());
            }
        }
    }
    let checks = names
        .iter()
        .zip(worst)
        .map(|(n, w)| Check::at_most(*n, w, 0.0))
        .collect();
    Ok(SuiteReport::new(Suite::StressTables, checks, vec![]))
}

/// Material density of a label: the initial density inside the domain, the
/// inflow density at the entry time outside it.
fn label_density(sc: &Scenario, solver: &Solver) -> Result<impl Fn(f64) -> f64> {
    let g = solver.grid();
    let (lo, hi) = (g.lo[0], g.hi[0]);
    let rho = sc.initial.rho_exprs()[0].clone();
    let side = |face_x: f64, sign: f64| -> Option<(f64, Expr)> {
        let q = g
            .faces
            .iter()
            .position(|f| (f.center[0] - face_x).abs() < 1e-12)?;
        match &solver.sources.closure_of_patch(g.faces[q].patch).mode {
            Mode::Inflow { u0, rho0, .. } => {
                let speed = -sign * u0[0].eval([face_x, 0.0], 0.0);
                (speed > 0.0).then(|| (speed, rho0[0].clone()))
            }
            _ => None,
        }
    };
    let left = side(lo, -1.0);
    let right = side(hi, 1.0);
    Ok(move |x: f64| {
        if x < lo {
            if let Some((c, r)) = &left {
                return r.eval([lo, 0.0], (lo - x) / c);
            }
        } else if x > hi {
            if let Some((c, r)) = &right {
                return r.eval([hi, 0.0], (x - hi) / c);
            }
        }
        rho.eval([x, 0.0], 0.0)
    })
}

/// Velocity of the Piola test map and its divergence.
fn piola_flow(_t: f64, x: [f64; 2]) -> ([f64; 2], f64) {
    let (s0, c0, s1, c1) = (x[0].sin(), x[0].cos(), x[1].sin(), x[1].cos());
    (
        [0.3 * s0 * c1 + 0.2 * x[0] * x[0], 0.2 * s1],
        0.3 * c0 * c1 + 0.4 * x[0] + 0.2 * c1,
    )
}

pub fn material_suite(sc: &Scenario) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut artifacts = Vec::new();
    let solver = sc.build_solver()?;
    if solver.grid().dim == 1 && solver.model.n_rho() == 1 && solver.model.tensor_ncomp() == 0 {
        let st0 = sc.initial_state(&solver)?;
        let g = solver.grid();
        let dt0 = match sc.dt {
            Some(dt) => dt,
            None => 0.5 * solver.cfl_bound(&st0)?,
        };
        let speed = st0.u.iter().fold(0.0f64, |m, u| m.max(u[0].abs()));
        let margin = sc
            .material
            .margin
            .unwrap_or(1.5 * speed * sc.t_end + 2.0 * g.dx[0]);
        let mut errs = Vec::new();
        let mut book = Vec::new();
        let mut hs = Vec::new();
        let mut csv = String::from(
            "dx,labels,max_density_error,material_mass_change,eulerian_mass_change,flux_integral\n",
        );
        for level in 0..3u32 {
            let s = sc.refined(level);
            let solver = s.build_solver()?;
            let st = s.initial_state(&solver)?;
            let traj =
                Trajectory::record(&solver, &st, s.t_end, dt0 / f64::from(1 << level), margin)?;
            let init = label_density(&s, &solver)?;
            let r =
                material::equivalence_check_1d(&solver, &traj, &init, s.material.labels_per_cell)?;
            let dx = solver.grid().dx[0];
            csv.push_str(&format!(
                "{dx:e},{},{:e},{:e},{:e},{:e}\n",
                r.n_labels,
                r.max_density_error,
                r.material_mass_change,
                r.eulerian_mass_change,
                r.flux_integral
            ));
            checks.push(Check::at_most(
                format!("undersampled cells (dx = {dx:.4})"),
                r.undersampled_cells as f64,
                0.0,
            ));
            hs.push(dx);
            errs.push(r.max_density_error);
            book.push((
                r.bookkeeping_error,
                r.eulerian_mass_change.abs().max(r.flux_integral.abs()),
            ));
            checks.push(Check::at_most(
                format!("eulerian mass change = flux integral (dx = {dx:.4})"),
                rel(
                    (r.eulerian_mass_change - r.flux_integral).abs(),
                    r.flux_integral.abs().max(1e-300),
                ),
                10.0 * dx * dx,
            ));
        }
        checks.push(Check::at_least(
            "pushforward density order",
            fitted_order(&hs, &errs),
            MIN_ORDER,
        ));
        let (fine_err, fine_scale) = book[2];
        let h = hs[2];
        checks.push(Check::at_most(
            "material mass bookkeeping",
            fine_err,
            10.0 * h * h * fine_scale.max(1e-3),
        ));
        artifacts.push(("material.csv".into(), csv));
    }

    let levels = sc
        .material
        .piola_levels
        .clone()
        .unwrap_or_else(|| vec![8, 16, 32]);
    if levels.len() < 3 {
        return Err(Error::Config(
            "material.piola_levels needs at least 3 entries".into(),
        ));
    }
    let flow = Analytic {
        dim: 2,
        f: piola_flow,
    };
    let w = |x: [f64; 2]| [1.0 + x[1] * x[0], (2.0 * x[0]).cos()];
    let (mut hs, mut pr, mut jc) = (Vec::new(), Vec::new(), Vec::new());
    for &n in &levels {
        let lat = Lattice::new(2, 0.0, 1.0, n, 2)?;
        let fm = material::integrate_flow_map(&flow, lat.labels.clone(), 0.0, 0.5, 0.01)?;
        hs.push(lat.delta);
        pr.push(material::boundary_piola_residual(&fm, &lat, &w)?);
        jc.push(material::jacobian_consistency(&fm, &lat, 2)?);
    }
    checks.push(Check::at_least(
        "boundary piola residual order",
        fitted_order(&hs, &pr),
        MIN_ORDER,
    ));
    checks.push(Check::at_least(
        "jacobian ODE vs label fit order",
        fitted_order(&hs, &jc),
        MIN_ORDER,
    ));
    let lat = Lattice::new(2, 0.0, 1.0, levels[0], 1)?;
    let n = lat.labels.len();
    let id = material::FlowMap::identity(2, 0.0, lat.labels.clone(), vec![0.0; n])?;
    checks.push(Check::at_most(
        "piola residual of the identity map",
        material::boundary_piola_residual(&id, &lat, &w)?,
        1e-13,
    ));
    Ok(SuiteReport::new(Suite::Material, checks, artifacts))
}
