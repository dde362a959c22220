//! The experiment commands.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use tumorkin::analysis::{convergence_study, g_index, sg_moment_series, ConvergencePoint, GIndexReport, MomentSeries};
use tumorkin::calibration::{calibrate_cohort, synth_cohort, CohortReport};
use tumorkin::control::ControlSpec;
use tumorkin::dsmc::{self, CollocationPlan, DsmcConfig, DsmcRun, InitialCondition};
use tumorkin::growth::GrowthParams;
use tumorkin::sg::{self, gamma_initial, statistics_rule, GridSpec, SgProblem, SgSolution};

use crate::config::{RunConfig, Solver};
use crate::error::{CliError, CliResult};
use crate::io::{read_patients, write_json, write_labelled, write_patients, write_table};

/// Initial density on the grid for the Galerkin solver.
pub fn initial_density(ic: &InitialCondition, grid: &GridSpec) -> CliResult<Vec<f64>> {
    match *ic {
        InitialCondition::Gamma { shape, scale } => Ok(gamma_initial(grid, shape, scale)?),
        InitialCondition::Point { x0 } => {
            if !(x0 >= 0.0 && x0 <= grid.x_max) {
                return Err(CliError::Config(format!("point initial size {x0} outside the grid")));
            }
            let i = (x0 / grid.dx()).round() as usize;
            let mut f = vec![0.0; grid.n];
            f[i] = 1.0 / grid.volume(i);
            Ok(f)
        }
    }
}

fn sg_problem(cfg: &RunConfig, control: Option<ControlSpec>) -> SgProblem {
    SgProblem { grid: cfg.grid, model: cfg.model.clone(), order: cfg.order, control, allow_unstable: false }
}

fn dsmc_config(cfg: &RunConfig, output_times: Vec<f64>) -> DsmcConfig {
    DsmcConfig {
        n_particles: cfg.dsmc.n_particles,
        dt: cfg.dsmc.dt,
        eps: cfg.dsmc.eps(),
        t_final: cfg.grid.t_final,
        output_times,
        seed: cfg.seed,
        initial: cfg.initial,
        x_max: cfg.grid.x_max,
        hist_bins: cfg.dsmc.hist_bins,
        band: cfg.band,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub solver: Solver,
    pub final_time: f64,
    pub final_expected_m: f64,
    pub final_p_lo: f64,
    pub final_p_hi: f64,
    pub final_var_z: f64,
    pub activation_time: Option<f64>,
    /// Galerkin runs only.
    pub mass_drift: Option<f64>,
    pub c_a: Option<f64>,
    pub stability_ratio: Option<f64>,
    pub stability_violations: Option<usize>,
    pub min_reconstructed: Option<f64>,
    /// Particle runs only.
    pub min_size: Option<f64>,
    pub clamp_events: Option<u64>,
}

fn write_moments(path: &Path, m: &MomentSeries, header: &[&str]) -> CliResult<()> {
    let rows: Vec<Vec<f64>> =
        (0..m.times.len()).map(|j| vec![m.times[j], m.expected_m[j], m.p_lo[j], m.p_hi[j], m.var_z[j]]).collect();
    write_table(path, header, &rows)
}

fn write_snapshots(out: &Path, sol: &SgSolution, grid: &GridSpec) -> CliResult<()> {
    let k = sol.basis.len();
    let names: Vec<String> = std::iter::once("x".to_string()).chain((0..k).map(|h| format!("fhat_{h}"))).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    for (j, s) in sol.snapshots.iter().enumerate() {
        let rows: Vec<Vec<f64>> =
            (0..grid.n).map(|i| std::iter::once(grid.x(i)).chain((0..k).map(|h| s.value(i, h))).collect()).collect();
        write_table(&out.join(format!("snapshot_{j:03}.csv")), &header, &rows)?;
    }
    let times: Vec<Vec<f64>> = sol.snapshots.iter().enumerate().map(|(j, s)| vec![j as f64, s.time]).collect();
    write_table(&out.join("snapshot_times.csv"), &["index", "t"], &times)
}

fn write_dsmc(out: &Path, run: &DsmcRun) -> CliResult<()> {
    let m = &run.moments;
    for q in 0..m.n_nodes() {
        let rows: Vec<Vec<f64>> =
            (0..m.times.len()).map(|j| vec![m.times[j], m.node_m[j][q], m.node_e[j][q], run.node_var[j][q]]).collect();
        write_table(&out.join(format!("node_{q:03}.csv")), &["t", "m", "E", "var"], &rows)?;
        let h = &run.histograms[q];
        let rows: Vec<Vec<f64>> =
            h.density.iter().enumerate().map(|(b, d)| vec![h.edges[b], h.edges[b + 1], *d]).collect();
        write_table(&out.join(format!("hist_node_{q:03}.csv")), &["bin_left", "bin_right", "density"], &rows)?;
    }
    let rows: Vec<Vec<f64>> =
        (0..m.times.len()).map(|j| vec![m.times[j], m.expected_m[j], m.p_lo[j], m.p_hi[j]]).collect();
    write_table(&out.join("moments.csv"), &["t", "Em_z", "p10", "p90"], &rows)
}

fn summary_from(solver: Solver, m: &MomentSeries) -> SimulateSummary {
    let j = m.times.len() - 1;
    SimulateSummary {
        solver,
        final_time: m.times[j],
        final_expected_m: m.expected_m[j],
        final_p_lo: m.p_lo[j],
        final_p_hi: m.p_hi[j],
        final_var_z: m.var_z[j],
        activation_time: None,
        mass_drift: None,
        c_a: None,
        stability_ratio: None,
        stability_violations: None,
        min_reconstructed: None,
        min_size: None,
        clamp_events: None,
    }
}

/// Runs the configured solver and writes snapshots and moment series.
pub fn simulate(cfg: &RunConfig, out: &Path) -> CliResult<SimulateSummary> {
    let times = cfg.output_times();
    let summary = match cfg.solver {
        Solver::Sg => {
            let ic = initial_density(&cfg.initial, &cfg.grid)?;
            let sol = sg::solve(&ic, &sg_problem(cfg, cfg.control), &times)?;
            write_snapshots(out, &sol, &cfg.grid)?;
            let m = sg_moment_series(&sol, &cfg.grid, cfg.band)?;
            write_moments(&out.join("moments.csv"), &m, &["t", "mean_m", "p10", "p90", "var_z"])?;
            SimulateSummary {
                activation_time: sol.activation_time,
                mass_drift: Some(sol.mass_drift),
                c_a: Some(sol.stability.c_a),
                stability_ratio: Some(sol.stability.worst_ratio),
                stability_violations: Some(sol.stability.violations.len()),
                min_reconstructed: Some(sol.min_reconstructed),
                ..summary_from(Solver::Sg, &m)
            }
        }
        Solver::Dsmc => {
            let plan = CollocationPlan::new(&cfg.model, cfg.order)?;
            let run = dsmc::run(&plan, &dsmc_config(cfg, times), cfg.control.as_ref())?;
            write_dsmc(out, &run)?;
            SimulateSummary {
                activation_time: run.activation_time,
                min_size: Some(run.min_size),
                clamp_events: Some(run.clamp_events),
                ..summary_from(Solver::Dsmc, &run.moments)
            }
        }
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Per-node `G_kappa` at the final time, with the node weights.
fn final_node_g(cfg: &RunConfig, spec: ControlSpec) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let t = cfg.grid.t_final;
    match cfg.solver {
        Solver::Sg => {
            let ic = initial_density(&cfg.initial, &cfg.grid)?;
            let sol = sg::solve(&ic, &sg_problem(cfg, Some(spec)), &[t])?;
            let rule = statistics_rule(&sol.basis)?;
            let last = sol.snapshots.last().ok_or_else(|| CliError::Numerical("no snapshot".into()))?;
            let g = rule
                .nodes()
                .map(|z| g_index(&sg::reconstruct(last, &sol.basis, z)?, cfg.grid.dx(), spec.x_d))
                .collect::<tumorkin::Result<Vec<f64>>>()?;
            Ok((g, rule.weights.clone()))
        }
        Solver::Dsmc => {
            let plan = CollocationPlan::new(&cfg.model, cfg.order)?;
            let run = dsmc::run(&plan, &dsmc_config(cfg, vec![t]), Some(&spec))?;
            let j = run.moments.times.len() - 1;
            Ok((run.moments.node_g(j, spec.x_d), run.moments.weights.clone()))
        }
    }
}

/// Runs the controlled experiment for every penalisation in the sweep.
pub fn control_sweep(cfg: &RunConfig, out: &Path) -> CliResult<GIndexReport> {
    let base = cfg.control.ok_or_else(|| CliError::Config("control-sweep needs a control section".into()))?;
    let kappas =
        &cfg.sweep.as_ref().ok_or_else(|| CliError::Config("control-sweep needs a sweep section".into()))?.kappas;
    if kappas.is_empty() {
        return Err(CliError::Config("sweep.kappas is empty".into()));
    }
    let specs = kappas
        .iter()
        .map(|&kappa| {
            let s = ControlSpec { kappa, ..base };
            s.validate().map(|_| s)
        })
        .collect::<tumorkin::Result<Vec<_>>>()?;
    let results: Vec<CliResult<(Vec<f64>, Vec<f64>)>> = specs.par_iter().map(|s| final_node_g(cfg, *s)).collect();
    let mut report = GIndexReport::new();
    for (s, r) in specs.iter().zip(results) {
        let (g, w) = r?;
        report.push(s.kappa, &g, &w, cfg.band);
    }
    let rows: Vec<Vec<f64>> = (0..report.kappas.len())
        .map(|i| vec![report.kappas[i], report.eg[i], report.band_lo[i], report.band_hi[i]])
        .collect();
    write_table(&out.join("g_index.csv"), &["kappa", "EG", "band_lo", "band_hi"], &rows)?;
    Ok(report)
}

/// First-moment error against the reference order for each configured order.
pub fn converge(cfg: &RunConfig, out: &Path) -> CliResult<Vec<ConvergencePoint>> {
    let c = cfg.converge.as_ref().ok_or_else(|| CliError::Config("converge needs a converge section".into()))?;
    let ic = initial_density(&cfg.initial, &cfg.grid)?;
    let pts = convergence_study(&sg_problem(cfg, cfg.control), &ic, &c.orders, c.ref_order)?;
    let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.order as f64, p.l2_error]).collect();
    write_table(&out.join("convergence.csv"), &["M", "l2_error"], &rows)?;
    Ok(pts)
}

/// Fits the cohort in `input` (or the configured file) and writes the report.
pub fn calibrate(cfg: &RunConfig, input: Option<&Path>, out: &Path) -> CliResult<CohortReport> {
    let c = cfg.calibrate.as_ref().ok_or_else(|| CliError::Config("calibrate needs a calibrate section".into()))?;
    let path = input
        .map(Path::to_path_buf)
        .or_else(|| c.input.clone())
        .ok_or_else(|| CliError::Config("no input CSV given".into()))?;
    let series = read_patients(&path)?;
    let report = calibrate_cohort(&series, &cfg.fit_options(c)?)?;
    write_json(&out.join("fits.json"), &report.patients)?;
    let rows: Vec<(String, Vec<f64>)> =
        report.rows.iter().map(|r| (r.parameter.clone(), vec![r.lo, r.hi, r.c1, r.c2, r.ks_pvalue])).collect();
    write_labelled(&out.join("cohort.csv"), &["parameter", "lo", "hi", "c1", "c2", "ks_pvalue"], &rows)?;
    if !report.failures.is_empty() {
        write_json(&out.join("failures.json"), &report.failures)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TruthRecord<'a> {
    id: &'a str,
    z: &'a [f64],
    params: &'a GrowthParams,
}

/// Writes a synthetic cohort and the parameters it was drawn from.
pub fn synth(cfg: &RunConfig, out: &Path) -> CliResult<usize> {
    let s = cfg.synth.as_ref().ok_or_else(|| CliError::Config("synth needs a synth section".into()))?;
    let cohort = synth_cohort(&cfg.model, &cfg.synth_options(s, cfg.seed)?)?;
    let series: Vec<_> = cohort.iter().map(|p| p.series.clone()).collect();
    write_patients(&out.join("cohort.csv"), &series)?;
    let truth: Vec<TruthRecord> =
        cohort.iter().map(|p| TruthRecord { id: &p.series.id, z: &p.z, params: &p.truth }).collect();
    write_json(&out.join("truth.json"), &truth)?;
    Ok(cohort.len())
}
