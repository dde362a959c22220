use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tumorkin_cli::{commands, CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "tumorkin", version, about = "Kinetic tumour-growth experiments under parameter uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "TUMORKIN_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured solver and write snapshots and moments.
    Simulate,
    /// Sweep the control penalisation and report the target-variability index.
    ControlSweep,
    /// Spectral convergence of the first moment in the chaos order.
    Converge,
    /// Fit a cohort of tumour-volume series.
    Calibrate {
        /// Patient CSV with header patient_id,t_days,volume_mm3.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write a synthetic cohort.
    Synth,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let out: &Path = &out;
    match cli.command {
        Command::Simulate => {
            let s = commands::simulate(&cfg, out)?;
            println!(
                "t = {}: E_z[m] = {:.6}, band = [{:.6}, {:.6}], Var_z(m) = {:.3e}",
                s.final_time, s.final_expected_m, s.final_p_lo, s.final_p_hi, s.final_var_z
            );
            if let (Some(d), Some(r), Some(v)) = (s.mass_drift, s.stability_ratio, s.stability_violations) {
                println!("mass drift = {d:.3e}, stability ratio = {r:.6}, violations = {v}");
            }
            if let Some(m) = s.min_size {
                println!("min particle size = {m:.3e}");
            }
        }
        Command::ControlSweep => {
            let r = commands::control_sweep(&cfg, out)?;
            for i in 0..r.kappas.len() {
                println!(
                    "kappa = {}: E_z[G] = {:.6e} [{:.6e}, {:.6e}]",
                    r.kappas[i], r.eg[i], r.band_lo[i], r.band_hi[i]
                );
            }
            println!("strictly monotone: {}", r.strictly_monotone());
        }
        Command::Converge => {
            for p in commands::converge(&cfg, out)? {
                println!("M = {:2}: {:.3e}", p.order, p.l2_error);
            }
        }
        Command::Calibrate { input } => {
            let r = commands::calibrate(&cfg, input.as_deref(), out)?;
            println!("{} fitted, {} failed", r.patients.len(), r.failures.len());
            for row in &r.rows {
                println!(
                    "{:>6}  [{:.4}, {:.4}]  c1 = {:.4}  c2 = {:.4}  KS p = {:.3}",
                    row.parameter, row.lo, row.hi, row.c1, row.c2, row.ks_pvalue
                );
            }
        }
        Command::Synth => {
            let n = commands::synth(&cfg, out)?;
            println!("wrote {n} synthetic patients to {}", out.join("cohort.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
