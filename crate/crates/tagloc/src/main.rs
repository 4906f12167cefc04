//! Command-line front end: scenario simulation, method comparison,
//! tag-map building, and Monte-Carlo sweeps over seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use tagloc::formats;
use tagloc::map_builder;
use tagloc::metrics::{self, DEFAULT_SUCCESS_THRESHOLD};
use tagloc::sim::{self, Method, Scenario, Stream, Truth};
use tagloc::{Error, Result};

#[derive(Parser)]
#[command(name = "tagloc", about = "Fiducial-tag robot localization toolkit")]
struct Cli {
    /// Worker threads for parallel jobs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path overrides, e.g. --set sensor.ar1_rho=0.8
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate truth, odometry, and measurement streams for a scenario.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the comparative methods over a scenario's streams.
    Localize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Directory holding truth/odometry/measurement CSVs from `simulate`;
        /// when omitted the streams are regenerated from the scenario.
        #[arg(long)]
        streams: Option<PathBuf>,
        /// Replacement tag map (e.g. the output of `build-map`).
        #[arg(long)]
        map: Option<PathBuf>,
        /// Methods to run (comma separated); defaults to all.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_SUCCESS_THRESHOLD)]
        success_threshold: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a mapping session into a tag map.
    BuildMap {
        /// Mapping session file (TOML).
        #[arg(long)]
        session: PathBuf,
        /// Output tag-map file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo sweep over seeds; reports per-method median RMSE.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Number of consecutive seeds starting from the scenario seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_SUCCESS_THRESHOLD)]
        success_threshold: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .ok();
    }
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. } => ExitCode::from(2),
                Error::NonConverged { .. } => ExitCode::from(3),
                _ => ExitCode::from(4),
            }
        }
    }
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Simulate { scenario, out } => cmd_simulate(&scenario, &out),
        Cmd::Localize {
            scenario,
            streams,
            map,
            methods,
            success_threshold,
            out,
        } => cmd_localize(&scenario, streams.as_deref(), map.as_deref(), &methods, success_threshold, &out),
        Cmd::BuildMap { session, out } => cmd_build_map(&session, &out),
        Cmd::Sweep {
            scenario,
            seeds,
            methods,
            success_threshold,
            out,
        } => cmd_sweep(&scenario, seeds, &methods, success_threshold, &out),
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let mut scenario = formats::read_scenario(&args.scenario)?;
    let overrides: Vec<(String, String)> = args
        .sets
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse {
                    file: format!("override '{s}'"),
                    message: "expected KEY=VALUE".into(),
                })
        })
        .collect::<Result<_>>()?;
    if !overrides.is_empty() {
        scenario = formats::apply_overrides(&scenario, &overrides)?;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    if names.is_empty() {
        return Ok(Method::all().to_vec());
    }
    names.iter().map(|n| n.parse()).collect()
}

fn cmd_simulate(args: &ScenarioArgs, out: &Path) -> Result<ExitCode> {
    let scenario = load_scenario(args)?;
    let truth = sim::generate_truth(&scenario)?;
    let stream = sim::synthesize_stream(&scenario, &truth);
    std::fs::create_dir_all(out)?;
    formats::write_scenario(&out.join("scenario.toml"), &scenario)?;
    formats::write_truth_csv(&out.join("truth.csv"), &truth.poses)?;
    formats::write_odometry_csv(&out.join("odometry.csv"), &stream.odometry)?;
    formats::write_measurements_csv(&out.join("measurements.csv"), &stream.measurements)?;
    println!(
        "scenario '{}': {} epochs, {} detections written to {}",
        scenario.name,
        scenario.duration_epochs,
        stream.measurements.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_streams(scenario: &Scenario, dir: Option<&Path>) -> Result<(Truth, Stream)> {
    match dir {
        Some(d) => {
            let poses = formats::read_truth_csv(&d.join("truth.csv"))?;
            let odometry = formats::read_odometry_csv(&d.join("odometry.csv"))?;
            let measurements = formats::read_measurements_csv(&d.join("measurements.csv"))?;
            let truth = Truth {
                poses,
                controls: odometry.clone(),
            };
            Ok((
                truth,
                Stream {
                    odometry,
                    measurements,
                    diagnostics: Default::default(),
                },
            ))
        }
        None => {
            let truth = sim::generate_truth(scenario)?;
            let stream = sim::synthesize_stream(scenario, &truth);
            Ok((truth, stream))
        }
    }
}

fn cmd_localize(
    args: &ScenarioArgs,
    streams: Option<&Path>,
    map: Option<&Path>,
    methods: &[String],
    success_threshold: f64,
    out: &Path,
) -> Result<ExitCode> {
    let mut scenario = load_scenario(args)?;
    if let Some(map_path) = map {
        scenario.tag_layout = formats::read_tag_map(map_path)?;
    }
    let methods = parse_methods(methods)?;
    let (truth, stream) = load_streams(&scenario, streams)?;

    let runs: Vec<_> = methods
        .par_iter()
        .map(|&m| sim::run_method(m, &scenario, &stream).map(|r| (m, r)))
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(out)?;
    let mut summary = Vec::new();
    for (m, record) in &runs {
        let errors = metrics::position_errors(&record.poses, &truth.poses)?;
        let report = metrics::summarize(&errors, success_threshold)?;
        formats::write_trajectory_csv(
            &out.join(format!("trajectory_{}.csv", m.name())),
            &record.poses,
            &errors,
        )?;
        println!(
            "{:12} rmse {:.4} m  mean {:.4} m  std {:.4} m  success {:.1}%",
            m.name(),
            report.rmse,
            report.mean,
            report.std,
            report.success_rate * 100.0
        );
        summary.push((m.name().to_string(), report));
    }
    formats::write_summary_csv(&out.join("summary.csv"), &summary)?;

    // Proportional reductions against the measurement-only chain when present.
    let baseline_name = Method::TagSlam.name();
    if let Some((_, base)) = summary.iter().find(|(n, _)| n == baseline_name) {
        let base = base.clone();
        let rows: Vec<_> = summary
            .iter()
            .filter(|(n, _)| n != baseline_name)
            .map(|(n, r)| (n.clone(), metrics::proportional_reduction(&base, r)))
            .collect();
        formats::write_reduction_csv(&out.join("reduction.csv"), baseline_name, &rows)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_build_map(session_path: &Path, out: &Path) -> Result<ExitCode> {
    let session = formats::read_session(session_path)?;
    if session.observations.is_empty() {
        return Err(Error::Parse {
            file: session_path.display().to_string(),
            message: "session contains no observations".into(),
        });
    }
    let graph = map_builder::build_graph(&session);
    let (map, report) = map_builder::optimize(&graph, 100, 1e-12);
    let meta = formats::write_optimize_meta(&session_path.display().to_string(), &report);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    formats::write_tag_map(out, &map, Some(&meta))?;
    println!(
        "{} tags, {} factors, cost {:.3e} -> {:.3e} in {} iterations ({})",
        map.entries.len(),
        graph.factors.len(),
        report.initial_cost,
        report.final_cost,
        report.iterations,
        if report.converged { "converged" } else { "NOT converged" }
    );
    if !graph.skipped_tags.is_empty() {
        eprintln!("warning: skipped tags with no anchored pose: {:?}", graph.skipped_tags);
    }
    if report.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(Error::NonConverged {
            iters: report.iterations,
        })
    }
}

fn cmd_sweep(
    args: &ScenarioArgs,
    seeds: u64,
    methods: &[String],
    success_threshold: f64,
    out: &Path,
) -> Result<ExitCode> {
    let base = load_scenario(args)?;
    let methods = parse_methods(methods)?;

    let jobs: Vec<(u64, Method)> = (0..seeds)
        .flat_map(|i| methods.iter().map(move |&m| (base.seed + i, m)))
        .collect();
    let results: Vec<(u64, Method, f64, f64)> = jobs
        .par_iter()
        .map(|&(seed, m)| {
            let mut scenario = base.clone();
            scenario.seed = seed;
            let truth = sim::generate_truth(&scenario)?;
            let stream = sim::synthesize_stream(&scenario, &truth);
            let record = sim::run_method(m, &scenario, &stream)?;
            let errors = metrics::position_errors(&record.poses, &truth.poses)?;
            let report = metrics::summarize(&errors, success_threshold)?;
            Ok((seed, m, report.rmse, report.success_rate))
        })
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(out)?;
    let mut per_method: BTreeMap<&'static str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut rows = String::from("seed,method,rmse_m,success_rate\n");
    for (seed, m, rmse, success) in &results {
        use std::fmt::Write as _;
        writeln!(rows, "{seed},{},{rmse},{success}", m.name()).unwrap();
        let entry = per_method.entry(m.name()).or_default();
        entry.0.push(*rmse);
        entry.1.push(*success);
    }
    std::fs::write(out.join("sweep_runs.csv"), rows)?;

    let mut summary = String::from("method,median_rmse_m,median_success_rate,seeds\n");
    for (name, (rmses, successes)) in &per_method {
        use std::fmt::Write as _;
        let med_rmse = metrics::median(rmses);
        let med_success = metrics::median(successes);
        writeln!(summary, "{name},{med_rmse},{med_success},{}", rmses.len()).unwrap();
        println!(
            "{name:12} median rmse {med_rmse:.4} m  median success {:.1}%  over {} seeds",
            med_success * 100.0,
            rmses.len()
        );
    }
    std::fs::write(out.join("sweep_summary.csv"), summary)?;
    Ok(ExitCode::SUCCESS)
}
