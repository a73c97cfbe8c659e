//! Scenario orchestration: time loop, time series, snapshots, run summary and
//! grid-refinement studies.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::budgets::Audit;
use crate::config::Scenario;
use crate::dynamics::Solver;
use crate::error::{Error, Result};
use crate::snapshot::{write_atomic, write_snapshot};
use crate::state::State;

/// Worker cap from `OPENFLUID_THREADS`, defaulting to the available cores.
pub fn worker_threads() -> usize {
    std::env::var("OPENFLUID_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Column names of `timeseries.csv` for a solver and its initial state.
pub fn timeseries_header(solver: &Solver, state: &State) -> Result<Vec<String>> {
    let model = &solver.model;
    let mut h = vec!["t".to_string(), "mass".to_string()];
    if model.n_rho() > 1 {
        for k in 0..model.n_rho() {
            h.push(format!("mass_{}", component_name(solver, k)));
        }
    }
    for c in [
        "entropy",
        "energy_total",
        "energy_kinetic",
        "energy_internal",
        "energy_potential",
    ] {
        h.push(c.into());
    }
    let audit = Audit::new(solver, state)?;
    for r in audit.all()? {
        for p in ["bulk", "boundary", "residual"] {
            h.push(format!("{p}_{}", r.quantity));
        }
    }
    Ok(h)
}

fn component_name(solver: &Solver, k: usize) -> String {
    solver
        .model
        .spec
        .components
        .get(k)
        .map_or_else(|| k.to_string(), |c| c.name.clone())
}

/// One time-series row, aligned with [`timeseries_header`].
pub fn timeseries_row(solver: &Solver, state: &State) -> Result<Vec<f64>> {
    let model = &solver.model;
    let vol = model.grid.cell_volume();
    let mut row = vec![state.t, state.rho.iter().flatten().sum::<f64>() * vol];
    if model.n_rho() > 1 {
        row.extend(state.rho.iter().map(|r| r.iter().sum::<f64>() * vol));
    }
    row.push(
        state
            .s
            .as_ref()
            .map_or(0.0, |s| s.iter().sum::<f64>() * vol),
    );
    let audit = Audit::new(solver, state)?;
    let sum =
        |f: &dyn Fn(&crate::models::Local) -> f64| audit.locals.iter().map(f).sum::<f64>() * vol;
    row.push(sum(&|l| l.energy()));
    row.push(sum(&|l| l.kinetic));
    // stored tensor, magnetic and gradient energy is reported with the internal energy
    row.push(sum(&|l| l.internal + l.extra));
    row.push(sum(&|l| l.potential));
    for r in audit.all()? {
        row.extend([r.bulk, r.boundary, r.residual]);
    }
    Ok(row)
}

fn csv_line(row: &[f64]) -> String {
    let mut s = row
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    NumericalAbort,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub scenario_hash: String,
    pub status: RunStatus,
    pub message: Option<String>,
    pub steps: usize,
    pub t_final: f64,
    pub rows: usize,
    pub snapshots: Vec<String>,
    pub final_snapshot: Option<String>,
    /// Largest `|residual_*|` over the run, per budget.
    pub max_abs_residual: BTreeMap<String, f64>,
}

/// Callback receiving each time-series row.
pub type RowSink<'a> = dyn FnMut(&[f64]) -> Result<()> + 'a;
/// Callback receiving `(step, state)` at each snapshot.
pub type SnapSink<'a> = dyn FnMut(usize, &State) -> Result<()> + 'a;

/// Outcome of the time loop.
pub struct Simulation {
    pub header: Vec<String>,
    pub steps: usize,
    pub last_good: State,
    pub abort: Option<Error>,
    pub max_abs_residual: BTreeMap<String, f64>,
}

/// Integrates `sc` to `t_end`, passing rows and snapshots to the sinks.
/// A failure inside the loop stops integration and is returned in `abort`.
pub fn simulate(
    sc: &Scenario,
    solver: &Solver,
    state0: State,
    rows: &mut RowSink,
    snaps: &mut SnapSink,
) -> Result<Simulation> {
    let header = timeseries_header(solver, &state0)?;
    let mut max_res: BTreeMap<String, f64> = BTreeMap::new();
    let mut record = |row: &[f64], rows: &mut RowSink| -> Result<()> {
        for (name, v) in header.iter().zip(row) {
            if name.starts_with("residual_") {
                let e = max_res
                    .entry(name.trim_start_matches("residual_").to_string())
                    .or_insert(0.0);
                *e = e.max(v.abs());
            }
        }
        rows(row)
    };
    let mut st = state0;
    record(&timeseries_row(solver, &st)?, rows)?;
    snaps(0, &st)?;
    let t_end = sc.t_end;
    let eps = 1e-12 * t_end.max(1.0);
    let mut steps = 0;
    let mut abort = None;
    while t_end - st.t > eps {
        let attempt = (|| -> Result<State> {
            let mut dt = match sc.dt {
                Some(dt) => dt,
                None => solver.cfl_bound(&st)?,
            };
            dt = dt.min(t_end - st.t);
            let next = solver.step(&st, dt)?;
            if !next.all_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite state at t = {}",
                    next.t
                )));
            }
            Ok(next)
        })();
        let next = match attempt {
            Ok(n) => n,
            Err(e) => {
                abort = Some(e);
                break;
            }
        };
        let row = match timeseries_row(solver, &next) {
            Ok(r) => r,
            Err(e) => {
                abort = Some(e);
                break;
            }
        };
        steps += 1;
        let done = t_end - next.t <= eps;
        if steps % sc.output.every == 0 || done {
            record(&row, rows)?;
        }
        if sc.output.snapshot_every > 0 && steps % sc.output.snapshot_every == 0 && !done {
            snaps(steps, &next)?;
        }
        st = next;
    }
    Ok(Simulation {
        header,
        steps,
        last_good: st,
        abort,
        max_abs_residual: max_res,
    })
}

/// Runs a scenario and writes `timeseries.csv`, `snapshots/`, `final.csv`
/// (or `last_good.csv` after a numerical abort) and `summary.json`.
/// Nothing is written if the scenario cannot be built.
pub fn run_scenario(sc: &Scenario, out: &Path) -> Result<RunRecord> {
    let solver = sc.build_solver()?;
    let state0 = sc.initial_state(&solver)?;
    let header = timeseries_header(&solver, &state0)?;

    fs::create_dir_all(out.join("snapshots"))?;
    let mut csv = header.join(",");
    csv.push('\n');
    let mut n_rows = 0;
    let mut snapshots = Vec::new();
    let sim = {
        let mut rows = |r: &[f64]| -> Result<()> {
            csv.push_str(&csv_line(r));
            n_rows += 1;
            Ok(())
        };
        let mut snaps = |k: usize, s: &State| -> Result<()> {
            let name = format!("snapshots/step_{k:06}.csv");
            write_snapshot(&out.join(&name), &solver.model, s)?;
            snapshots.push(name);
            Ok(())
        };
        simulate(sc, &solver, state0, &mut rows, &mut snaps)?
    };
    write_atomic(&out.join("timeseries.csv"), csv.as_bytes())?;
    let (status, message, final_name) = match &sim.abort {
        None => (RunStatus::Completed, None, "final.csv"),
        Some(e) => (
            RunStatus::NumericalAbort,
            Some(e.to_string()),
            "last_good.csv",
        ),
    };
    write_snapshot(&out.join(final_name), &solver.model, &sim.last_good)?;
    let record = RunRecord {
        scenario_hash: sc.hash(),
        status,
        message,
        steps: sim.steps,
        t_final: sim.last_good.t,
        rows: n_rows,
        snapshots,
        final_snapshot: Some(final_name.to_string()),
        max_abs_residual: sim.max_abs_residual,
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&out.join("summary.json"), json.as_bytes())?;
    match sim.abort {
        Some(e) => Err(e),
        None => Ok(record),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fitted_order(h: &[f64], r: &[f64]) -> f64 {
    let n = h.len() as f64;
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Order a nominally second-order residual must reach.
pub const MIN_ORDER: f64 = 1.8;
/// Residuals below this fraction of the budget scale count as round-off.
pub const ROUNDOFF: f64 = 1e-11;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub quantity: String,
    pub dx: Vec<f64>,
    pub residual: Vec<f64>,
    pub order: Option<f64>,
    /// `true` when every level sits at round-off and the slope is not tested.
    pub skipped: bool,
    pub monotone: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub levels: usize,
    pub rows: Vec<ConvergenceRow>,
    pub pass: bool,
}

impl ConvergenceTable {
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<28} {:>10} {:>8} {}\n",
            "quantity", "order", "status", "residuals (coarse → fine)"
        );
        for r in &self.rows {
            let order = r.order.map_or("-".to_string(), |o| format!("{o:.3}"));
            let status = if r.skipped {
                "roundoff"
            } else if r.pass {
                "PASS"
            } else {
                "FAIL"
            };
            let res: Vec<String> = r.residual.iter().map(|v| format!("{v:.3e}")).collect();
            let flag = if r.monotone { "" } else { " (non-monotone)" };
            s.push_str(&format!(
                "{:<28} {:>10} {:>8} {}{}\n",
                r.quantity,
                order,
                status,
                res.join(" "),
                flag
            ));
        }
        s
    }
}

struct LevelResult {
    dx: f64,
    residual: BTreeMap<String, f64>,
    scale: BTreeMap<String, f64>,
}

fn run_level(sc: &Scenario) -> Result<LevelResult> {
    let solver = sc.build_solver()?;
    let st = sc.initial_state(&solver)?;
    let mut scale: BTreeMap<String, f64> = BTreeMap::new();
    let header = timeseries_header(&solver, &st)?;
    let mut rows = |r: &[f64]| -> Result<()> {
        for (name, v) in header.iter().zip(r) {
            for p in ["bulk_", "boundary_"] {
                if let Some(q) = name.strip_prefix(p) {
                    let e = scale.entry(q.to_string()).or_insert(0.0);
                    *e = e.max(v.abs());
                }
            }
        }
        Ok(())
    };
    let sim = simulate(sc, &solver, st, &mut rows, &mut |_, _| Ok(()))?;
    if let Some(e) = sim.abort {
        return Err(e);
    }
    Ok(LevelResult {
        dx: solver.grid().min_dx(),
        residual: sim.max_abs_residual,
        scale,
    })
}

/// Runs `sc` on `levels` successively halved grids and fits the order of each
/// budget residual.
pub fn convergence_study(sc: &Scenario, levels: usize) -> Result<ConvergenceTable> {
    if levels < 3 {
        return Err(Error::Config(format!(
            "convergence study needs at least 3 levels, got {levels}"
        )));
    }
    let scenarios: Vec<Scenario> = (0..levels).map(|l| sc.refined(l as u32)).collect();
    let workers = worker_threads().max(1);
    let mut results: Vec<Option<Result<LevelResult>>> = (0..levels).map(|_| None).collect();
    for chunk in (0..levels).collect::<Vec<_>>().chunks(workers) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&l| {
                    (l, {
                        let sc = &scenarios[l];
                        s.spawn(move || run_level(sc))
                    })
                })
                .collect();
            for (l, h) in handles {
                results[l] = Some(
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Numerical("worker panicked".into()))),
                );
            }
        });
    }
    let results: Vec<LevelResult> = results
        .into_iter()
        .map(|r| r.unwrap())
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for q in results[0].residual.keys() {
        let dx: Vec<f64> = results.iter().map(|r| r.dx).collect();
        let res: Vec<f64> = results.iter().map(|r| r.residual[q]).collect();
        let scale = results
            .iter()
            .map(|r| r.scale.get(q).copied().unwrap_or(0.0))
            .fold(1e-300, f64::max);
        let skipped = res.iter().all(|&v| v <= ROUNDOFF * scale.max(1.0));
        let monotone = res.windows(2).all(|w| w[1] < w[0]);
        let order = (!skipped && res.iter().all(|&v| v > 0.0)).then(|| fitted_order(&dx, &res));
        let pass = skipped || order.is_some_and(|o| o >= MIN_ORDER);
        rows.push(ConvergenceRow {
            quantity: q.clone(),
            dx,
            residual: res,
            order,
            skipped,
            monotone,
            pass,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(ConvergenceTable { levels, rows, pass })
}
