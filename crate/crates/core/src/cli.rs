//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 numerical failure,
//! 3 search completed but the target thresholds were not met.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::analysis::FinalStateReport;
use crate::config::{figure, RunConfig, FIGURES};
use crate::dynamics::integrate;
use crate::error::{Error, Result};
use crate::export::{
    report_json, search_json, sweep_csv, sweep_json, timeseries_csv, Provenance,
};
use crate::sweep::{
    run_sweep, search_bell_velocity, search_w_velocities, VelocityRange,
};

#[derive(Debug, Parser)]
#[command(
    name = "pbgsim",
    version,
    about = "Excitation sharing between atoms flying through a photonic-crystal defect mode"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one configured run; write its time series, final-state
    /// report, and a config sidecar
    Simulate {
        /// TOML run configuration
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Output file stem; defaults to the config file's stem
        #[arg(long)]
        stem: Option<String>,
    },
    /// Integrate the same scene across a grid of injection speeds
    Sweep {
        /// TOML run configuration supplying everything but the swept speeds
        config: PathBuf,
        /// Second atom's speed range, lo:hi:n
        #[arg(long)]
        vb: VelocityRange,
        /// Third atom's speed range, lo:hi:n
        #[arg(long)]
        vc: Option<VelocityRange>,
        /// Evaluate grid points one at a time instead of in parallel
        #[arg(long)]
        serial: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        stem: Option<String>,
    },
    /// Search injection speeds for the best entangled final state
    Search {
        /// TOML run configuration supplying everything but the searched speeds
        config: PathBuf,
        #[arg(long, value_enum)]
        target: Target,
        /// Second atom's speed bracket, lo:hi:n
        #[arg(long, default_value = "500:560:61")]
        vb: VelocityRange,
        /// Third atom's speed bracket (w target only), lo:hi:n
        #[arg(long, default_value = "500:560:61")]
        vc: VelocityRange,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        stem: Option<String>,
    },
    /// Rerun a built-in scene by id
    Figure {
        /// Scene id (2, 3, 4a, 4b, 4c, 4d, 5, 6); see --list
        id: Option<String>,
        /// List the built-in scenes
        #[arg(long)]
        list: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    /// Even two-atom excitation split with the photon mode empty
    Bell,
    /// Even three-atom excitation split with the photon mode empty
    W,
}

/// Parses `args` and runs the selected command, mapping every outcome to a
/// process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { config, out_dir, stem } => {
            let cfg = RunConfig::from_path(&config)?;
            let stem = stem_or_default(stem, &config);
            prepare_dir(&out_dir)?;
            let report = simulate_to_files(&cfg, &out_dir, &stem)?;
            print_report(&stem, &report);
            Ok(0)
        }
        Command::Sweep { config, vb, vc, serial, out_dir, stem } => {
            let cfg = RunConfig::from_path(&config)?;
            let stem = stem_or_default(stem, &config);
            prepare_dir(&out_dir)?;
            sweep_to_files(&cfg, &vb, vc.as_ref(), !serial, &out_dir, &stem)?;
            Ok(0)
        }
        Command::Search { config, target, vb, vc, out_dir, stem } => {
            let cfg = RunConfig::from_path(&config)?;
            let stem = stem_or_default(stem, &config);
            prepare_dir(&out_dir)?;
            search_to_files(&cfg, target, &vb, &vc, &out_dir, &stem)
        }
        Command::Figure { id, list, out_dir } => {
            if list || id.is_none() {
                for recipe in FIGURES {
                    let kind = if recipe.sweep.is_some() { "sweep" } else { "run" };
                    println!("{:4}  {:5}  {}", recipe.id, kind, recipe.description);
                }
                return Ok(0);
            }
            let id = id.unwrap();
            let recipe = figure(&id)
                .ok_or_else(|| Error::invalid(format!("unknown figure {id:?}; try --list")))?;
            prepare_dir(&out_dir)?;
            for (stem, text) in recipe.runs {
                let cfg = RunConfig::from_toml_str(text)?;
                match recipe.sweep {
                    Some((vb, vc)) => {
                        sweep_to_files(&cfg, &vb.parse()?, Some(&vc.parse()?), true, &out_dir, stem)?;
                    }
                    None => {
                        let report = simulate_to_files(&cfg, &out_dir, stem)?;
                        print_report(stem, &report);
                    }
                }
            }
            Ok(0)
        }
    }
}

fn stem_or_default(stem: Option<String>, config: &Path) -> String {
    stem.unwrap_or_else(|| {
        config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string())
    })
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn pretty(value: serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(&value).expect("json serialization is infallible");
    s.push('\n');
    s
}

fn simulate_to_files(cfg: &RunConfig, out_dir: &Path, stem: &str) -> Result<FinalStateReport> {
    let problem = cfg.build_problem()?;
    let series = integrate(&problem)?;
    let report = FinalStateReport::from_series(&series)?;
    let prov = Provenance::new(cfg.sha256_hex()?);
    write_file(&out_dir.join(format!("{stem}.csv")), &timeseries_csv(&series)?)?;
    write_file(
        &out_dir.join(format!("{stem}.report.json")),
        &pretty(report_json(&report, &prov)),
    )?;
    write_file(&out_dir.join(format!("{stem}.config.toml")), &cfg.to_toml_string()?)?;
    Ok(report)
}

fn sweep_to_files(
    cfg: &RunConfig,
    vb: &VelocityRange,
    vc: Option<&VelocityRange>,
    parallel: bool,
    out_dir: &Path,
    stem: &str,
) -> Result<()> {
    let vb_vals = vb.values();
    let vc_vals = vc.map(VelocityRange::values);
    let points = run_sweep(&vb_vals, vc_vals.as_deref(), parallel, |b, c| {
        cfg.build_problem_with_speeds(Some(b), c)
    })?;
    let prov = Provenance::new(cfg.sha256_hex()?);
    write_file(&out_dir.join(format!("{stem}.sweep.csv")), &sweep_csv(&points)?)?;
    write_file(
        &out_dir.join(format!("{stem}.sweep.json")),
        &pretty(sweep_json(&vb_vals, vc_vals.as_deref(), &points, &prov)),
    )?;
    write_file(&out_dir.join(format!("{stem}.config.toml")), &cfg.to_toml_string()?)?;
    println!("{stem}: swept {} grid points", points.len());
    Ok(())
}

fn search_to_files(
    cfg: &RunConfig,
    target: Target,
    vb: &VelocityRange,
    vc: &VelocityRange,
    out_dir: &Path,
    stem: &str,
) -> Result<i32> {
    let (name, outcome) = match target {
        Target::Bell => (
            "bell",
            search_bell_velocity(vb, |v| cfg.build_problem_with_speeds(Some(v), None))?,
        ),
        Target::W => (
            "w",
            search_w_velocities(vb, vc, |b, c| {
                cfg.build_problem_with_speeds(Some(b), Some(c))
            })?,
        ),
    };
    let prov = Provenance::new(cfg.sha256_hex()?);
    write_file(
        &out_dir.join(format!("{stem}.search.json")),
        &pretty(search_json(name, &outcome, &prov)),
    )?;
    let speeds: Vec<String> = outcome.v_mps.iter().map(|v| format!("{v:.2} m/s")).collect();
    println!(
        "{stem}: best {name} point at {} (objective {:.3e}, {} evaluations): target {}",
        speeds.join(", "),
        outcome.objective,
        outcome.evaluations,
        if outcome.target_met { "met" } else { "NOT met" }
    );
    print_report(stem, &outcome.report);
    Ok(if outcome.target_met { 0 } else { 3 })
}

fn print_report(stem: &str, report: &FinalStateReport) {
    let pops: Vec<String> = report
        .labels
        .iter()
        .zip(&report.populations)
        .map(|(l, p)| format!("{l}={p:.4}"))
        .collect();
    let mut line = format!(
        "{stem}: final populations {}, photon {:.4}",
        pops.join(" "),
        report.photon_prob
    );
    if let Some(s) = report.entropy_nats {
        line += &format!(", entropy {s:.4} nats");
    }
    if let Some(w) = report.w_fidelity {
        line += &format!(", W fidelity {w:.4}");
    }
    println!("{line}");
}
