//! Drivers for the subcommands. Each writes its artifacts into the output
//! directory and a `summary.json` that echoes the resolved config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde_json::{json, Value};
use uot_core::asymptotics::{cell_b, cell_b_prime, optimal_density, plateau_constants};
use uot_core::dual::{dual_objective, solve_weights, TransportSolution};
use uot_core::lbfgs::Termination;
use uot_core::quantization::{quant_marginal, solve_quantization, solve_quantization_from, QuantizationState};
use uot_core::{io, DiscreteMeasure, GridDensity};

use crate::config::{Command, ExperimentConfig, SweepParameter};

/// What a successful run produced; `converged == false` maps to exit code 3.
#[derive(Debug)]
pub struct Outcome {
    pub converged: bool,
    pub summary: PathBuf,
    pub files: Vec<PathBuf>,
}

pub fn run(mut config: ExperimentConfig) -> Result<Outcome> {
    let dir = config.output_dir().to_path_buf();
    fs::create_dir_all(&dir).map_err(|e| uot_core::UotError::Io { path: dir.display().to_string(), source: e })?;
    let command = config.command.context("command not resolved")?;
    match command {
        Command::Transport => transport(&mut config, &dir),
        Command::Quantize => quantize(&mut config, &dir),
        Command::CellProblem => cell_problem(&config, &dir),
        Command::AsymptoticDensity => asymptotic_density(&mut config, &dir),
        Command::Sweep => sweep(&mut config, &dir),
    }
}

fn finish(dir: &Path, config: &ExperimentConfig, converged: bool, mut files: Vec<PathBuf>, result: Value) -> Result<Outcome> {
    let summary = dir.join("summary.json");
    files.push(summary.clone());
    let doc = json!({
        "command": config.command,
        "status": if converged { "ok" } else { "not-converged" },
        "config": config,
        "files": files.iter().map(|f| f.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "result": result,
    });
    io::write_json(&summary, &doc)?;
    Ok(Outcome { converged, summary, files })
}

fn solve_transport(config: &mut ExperimentConfig) -> Result<(GridDensity, DiscreteMeasure, TransportSolution)> {
    let g = config.load_density()?;
    let nu = config.target(g.total_mass())?;
    let sol = solve_weights(&g, &nu, &config.model, &config.solver_options())?;
    Ok((g, nu, sol))
}

fn transport_result(g: &GridDensity, nu: &DiscreteMeasure, sol: &TransportSolution) -> Value {
    json!({
        "w": sol.w,
        "g_value": sol.g_value,
        "grad_norm": sol.grad_norm,
        "duality_gap": sol.duality_gap,
        "iterations": sol.iterations,
        "evaluations": sol.evaluations,
        "termination": sol.termination,
        "converged": sol.converged,
        "certified": sol.certified,
        "rho_cell_masses": sol.rho_cell_masses,
        "rho_mass": sol.rho.total_mass(),
        "mu_mass": g.total_mass(),
        "nu_masses": nu.masses(),
        "residual_cells": sol.tessellation.residual_count(),
    })
}

fn transport(config: &mut ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let (g, nu, sol) = solve_transport(config)?;
    let files = vec![dir.join("labels.csv"), dir.join("rho.csv"), dir.join("sites.csv")];
    io::save_labels(&files[0], &sol.tessellation)?;
    io::save_raster(&files[1], &sol.rho)?;
    io::save_sites(&files[2], &nu)?;
    finish(dir, config, sol.certified, files, transport_result(&g, &nu, &sol))
}

fn run_quantization(config: &ExperimentConfig, g: &GridDensity) -> Result<QuantizationState> {
    let (method, opts) = (config.quant_method(), config.quant_options());
    if config.nu.is_some() {
        let start = config.target(g.total_mass())?;
        if let Some(m) = config.sites {
            ensure!(m == start.len(), "'sites' is {m} but 'nu' has {} points", start.len());
        }
        Ok(solve_quantization_from(g, start.points().to_vec(), &config.model, method, &opts)?)
    } else {
        let m = config.sites.context("quantize needs 'sites' or start points in 'nu'")?;
        Ok(solve_quantization(g, m, &config.model, method, &opts)?)
    }
}

fn quantize(config: &mut ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let g = config.load_density()?;
    let state = run_quantization(config, &g)?;
    let (t, rho) = quant_marginal(&g, &state.points, &config.model)?;
    // Value of the dual at w = 0 with the optimal masses; undefined when a
    // site has zero mass.
    let g_at_zero = DiscreteMeasure::new(state.points.clone(), state.masses.clone(), None)
        .ok()
        .and_then(|nu| dual_objective(&g, &nu, &config.model, &vec![0.0; nu.len()]).ok());
    let sites = DiscreteMeasure::new(state.points.clone(), state.masses.clone(), None)?;
    let files = vec![dir.join("labels.csv"), dir.join("rho.csv"), dir.join("sites.csv")];
    io::save_labels(&files[0], &t)?;
    io::save_raster(&files[1], &rho)?;
    io::save_sites(&files[2], &sites)?;
    let converged = state.termination == Termination::GradientTolerance;
    let mut result = serde_json::to_value(&state)?;
    result["dual_at_zero"] = json!(g_at_zero);
    result["mu_mass"] = json!(g.total_mass());
    finish(dir, config, converged, files, result)
}

fn cell_problem(config: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let z = config.table.samples()?;
    let b = z.iter().map(|z| cell_b(&config.model, *z)).collect::<uot_core::Result<Vec<_>>>()?;
    let bp = z.iter().map(|z| cell_b_prime(&config.model, *z)).collect::<uot_core::Result<Vec<_>>>()?;
    let path = dir.join("cell_table.csv");
    io::save_cell_samples(&path, &z, &b, &bp)?;
    let plateau = plateau_constants(&config.model);
    let result = json!({
        "samples": z.len(),
        "z_plateau": plateau.z_plateau,
        "slope_plateau": finite_or_null(plateau.slope_plateau),
        "f_zero": finite_or_null(config.model.f_zero()),
    });
    finish(dir, config, true, vec![path], result)
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn asymptotic_density(config: &mut ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let p = config.p.context("asymptotic-density needs 'P'")?;
    let g = config.load_density()?;
    let res = optimal_density(&g, &config.model, p)?;
    let path = dir.join("density.csv");
    io::save_raster(&path, &res.density)?;
    let zero_cells = res.density.values().iter().filter(|d| **d == 0.0).count();
    let result = json!({
        "lambda": res.lambda,
        "P": res.p_target,
        "energy": res.energy,
        "integral": res.density.total_mass(),
        "zero_cells": zero_cells,
        "tie_density": res.tie_density,
        "tie_cells": res.tie_cells,
    });
    finish(dir, config, true, vec![path], result)
}

fn sweep(config: &mut ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let spec = config.sweep.clone().context("sweep needs a 'sweep' section")?;
    ensure!(!spec.values.is_empty(), "sweep has no values");
    let task = match (spec.parameter, spec.task) {
        (SweepParameter::Epsilon, None) => Command::Transport,
        (SweepParameter::P, None) => Command::AsymptoticDensity,
        (SweepParameter::Epsilon, Some(t @ (Command::Transport | Command::Quantize))) => t,
        (SweepParameter::P, Some(t @ Command::AsymptoticDensity)) => t,
        (p, Some(t)) => bail!("cannot sweep {p} with task '{t}'"),
    };
    config.sweep.as_mut().expect("checked above").task = Some(task);
    let g = config.load_density()?;

    let mut rows = Vec::new();
    let mut all_converged = true;
    for &value in &spec.values {
        let mut local = config.clone();
        let (v, converged, extra) = match task {
            Command::Transport => {
                local.model = local.model.with_epsilon(value)?;
                let nu = local.target(g.total_mass())?;
                let sol = solve_weights(&g, &nu, &local.model, &local.solver_options())?;
                (sol.g_value, sol.certified, json!({"duality_gap": sol.duality_gap, "iterations": sol.iterations}))
            }
            Command::Quantize => {
                local.model = local.model.with_epsilon(value)?;
                let s = run_quantization(&local, &g)?;
                let ok = s.termination == Termination::GradientTolerance;
                (s.energy, ok, json!({"iterations": s.iterations, "zero_mass_sites": s.zero_mass_sites.len()}))
            }
            _ => {
                let r = optimal_density(&g, &local.model, value)?;
                (r.energy, true, json!({"lambda": r.lambda}))
            }
        };
        all_converged &= converged;
        rows.push(json!({spec.parameter.to_string(): value, "value": v, "converged": converged, "details": extra}));
    }

    let path = dir.join("sweep.csv");
    let mut text = format!("{},value,converged\n", spec.parameter);
    for row in &rows {
        let key = spec.parameter.to_string();
        writeln!(text, "{},{},{}", row[&key], row["value"], row["converged"]).expect("write to string");
    }
    fs::write(&path, text).map_err(|e| uot_core::UotError::Io { path: path.display().to_string(), source: e })?;
    finish(dir, config, all_converged, vec![path], json!({ "entries": rows }))
}
