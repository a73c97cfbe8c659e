//! Grid snapshots as CSV with header `x[,y],component…`, one row per cell.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::models::Model;
use crate::state::State;

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Named cell columns of a state: `u_x[,u_y]`, densities, `s`, tensor components.
pub fn state_columns(model: &Model, state: &State) -> Vec<(String, Vec<f64>)> {
    let g = &model.grid;
    let mut cols = vec![("u_x".to_string(), state.u.iter().map(|v| v[0]).collect())];
    if g.dim == 2 {
        cols.push(("u_y".to_string(), state.u.iter().map(|v| v[1]).collect()));
    }
    let names: Vec<String> =
        if model.spec.components.len() == state.rho.len() && state.rho.len() > 1 {
            model
                .spec
                .components
                .iter()
                .map(|c| format!("rho_{}", c.name))
                .collect()
        } else if state.rho.len() == 1 {
            vec!["rho".into()]
        } else {
            (0..state.rho.len()).map(|k| format!("rho_{k}")).collect()
        };
    for (name, r) in names.into_iter().zip(&state.rho) {
        cols.push((name, r.clone()));
    }
    if let Some(s) = &state.s {
        cols.push(("s".into(), s.clone()));
    }
    if let Some(t) = &state.tensor {
        let nt = model.tensor_ncomp();
        for k in 0..nt {
            cols.push((
                format!("tensor_{k}"),
                t.iter().skip(k).step_by(nt).copied().collect(),
            ));
        }
    }
    cols
}

pub fn snapshot_csv(grid: &Grid, cols: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from("x");
    if grid.dim == 2 {
        out.push_str(",y");
    }
    for (name, _) in cols {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for c in 0..grid.n_cells() {
        let x = grid.center(c);
        out.push_str(&x[0].to_string());
        if grid.dim == 2 {
            out.push(',');
            out.push_str(&x[1].to_string());
        }
        for (_, v) in cols {
            out.push(',');
            out.push_str(&v[c].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_snapshot(path: &Path, model: &Model, state: &State) -> Result<()> {
    write_atomic(
        path,
        snapshot_csv(&model.grid, &state_columns(model, state)).as_bytes(),
    )
}

/// Header and rows of a snapshot file.
pub fn read_snapshot(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}
