//! The `posg` command line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{load_model_file, Belief, GameModel};
use crate::partition::Region;
use crate::simulator::{estimate_value, rollouts, write_traces_jsonl};
use crate::value_iteration::{solve_game_with, terminal_value, SolutionBundle, SolveOptions, DEFAULT_REGION_CAP};

#[derive(Debug, Parser)]
#[command(name = "posg", version, about = "Exact Stackelberg solver for one-sided partially observable stochastic games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a model and write the solution bundle.
    Solve(SolveArgs),
    /// Sample the solved value functions on a belief grid as CSV.
    PlotData(PlotArgs),
    /// Estimate the root value by simulation.
    Simulate(SimulateArgs),
    /// Write the per-stage partitions as JSON.
    PartitionDump(DumpArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Replaces the model's initial belief, e.g. `0.5,0.5`.
    #[arg(long, value_delimiter = ',')]
    pub belief: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_REGION_CAP)]
    pub region_cap: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Grid points per simplex edge.
    #[arg(long, default_value_t = 101, value_parser = clap::value_parser!(u64).range(2..))]
    pub grid: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// The initial belief the bundle was solved with, if it was overridden.
    #[arg(long, value_delimiter = ',')]
    pub belief: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write every episode trace here as JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Configures the global worker pool from `POSG_THREADS`.
pub fn init_threads() {
    if let Some(n) = std::env::var("POSG_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let stdout = io::stdout();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, &mut stdout.lock()),
        Command::PlotData(a) => cmd_plot_data(&a, &mut stdout.lock()),
        Command::Simulate(a) => cmd_simulate(&a, &mut stdout.lock()),
        Command::PartitionDump(a) => cmd_partition_dump(&a, &mut stdout.lock()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        Error::Json(j) => Error::InvalidArgument(format!("{}: {j}", path.display())),
        e => e,
    }
}

fn read_model(path: &Path, belief: Option<&Vec<f64>>) -> Result<GameModel> {
    let model = load_model_file(path).map_err(|e| with_path(path, e))?;
    match belief {
        Some(b) => model.with_initial_belief(b.clone()),
        None => Ok(model),
    }
}

fn read_bundle(path: &Path) -> Result<SolutionBundle> {
    let bytes = fs::read(path).map_err(|e| with_path(path, e.into()))?;
    SolutionBundle::from_json(&bytes).map_err(|e| with_path(path, e))
}

fn write_output(path: Option<&PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| with_path(p, e.into())),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

pub fn cmd_solve(args: &SolveArgs, stdout: &mut dyn Write) -> Result<()> {
    let model = read_model(&args.model, args.belief.as_ref())?;
    let opts = SolveOptions {
        region_cap: args.region_cap,
        ..SolveOptions::default()
    };
    let bundle = solve_game_with(&model, args.horizon as usize, args.epsilon, opts)?;
    if let Some(out) = &args.out {
        fs::write(out, bundle.to_json()).map_err(|e| with_path(out, e.into()))?;
    }
    let states = &model.tables().states;
    writeln!(stdout, "horizon = {}", bundle.horizon)?;
    writeln!(stdout, "epsilon = {}", bundle.epsilon)?;
    writeln!(stdout, "b0 = {:?}", bundle.root.belief)?;
    writeln!(stdout, "v_L(b0) = {:.6}", bundle.root.leader_value)?;
    for (s, v) in states.iter().zip(&bundle.root.follower_values) {
        writeln!(stdout, "v_F(b0, {s}) = {v:.6}")?;
    }
    let regions: Vec<String> = bundle.stages.iter().map(|s| s.partition.len().to_string()).collect();
    writeln!(stdout, "regions per stage = {}", regions.join(","))?;
    Ok(())
}

/// Grid points `k / (g - 1)` of the `n`-simplex, last coordinate implied.
pub fn simplex_grid(n: usize, g: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, g: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() + 1 == n {
            let mut b: Vec<f64> = prefix.iter().map(|&k| k as f64 / (g - 1) as f64).collect();
            b.push(left as f64 / (g - 1) as f64);
            out.push(b);
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(n, left - k, g, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, g - 1, g, &mut Vec::new(), &mut out);
    out
}

pub fn cmd_plot_data(args: &PlotArgs, stdout: &mut dyn Write) -> Result<()> {
    let bundle = read_bundle(&args.bundle)?;
    let n = bundle.root.belief.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["stage".to_string()];
    header.extend((1..n).map(|i| format!("b{i}")));
    header.extend(["region_id".to_string(), "v_L".to_string()]);
    header.extend((1..=n).map(|i| format!("v_F_s{i}")));
    w.write_record(&header).map_err(csv_error)?;
    let grid = simplex_grid(n, args.grid as usize);
    for stage in &bundle.stages {
        for point in &grid {
            let b = Belief::from_unnormalized(point).expect("grid point on simplex");
            let e = stage.evaluate(&b)?;
            let mut row = vec![stage.stage_index.to_string()];
            row.extend(point[..n - 1].iter().map(|x| format!("{x}")));
            row.push(e.region.to_string());
            row.push(format!("{}", e.leader_value));
            row.extend(e.follower_values.iter().map(|v| format!("{v}")));
            w.write_record(&row).map_err(csv_error)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_output(args.out.as_ref(), &String::from_utf8(bytes).expect("csv is utf-8"), stdout)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e.to_string()))
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let model = read_model(&args.model, args.belief.as_ref())?;
    let bundle = read_bundle(&args.bundle)?;
    let n = args.episodes as usize;
    let est = estimate_value(&model, &bundle, n, args.seed)?;
    if let Some(out) = &args.out {
        let traces = rollouts(&model, &bundle, n, args.seed)?;
        let file = fs::File::create(out).map_err(|e| with_path(out, e.into()))?;
        write_traces_jsonl(&traces, io::BufWriter::new(file))?;
    }
    writeln!(stdout, "episodes = {}", est.episodes)?;
    writeln!(stdout, "seed = {}", est.seed)?;
    writeln!(stdout, "mean = {:.6}", est.mean)?;
    if let Some(se) = est.std_error {
        writeln!(stdout, "std_error = {se:.6}")?;
    }
    writeln!(stdout, "exact v_L(b0) = {:.6}", bundle.root.leader_value)?;
    writeln!(stdout, "fallback_events = {}", est.fallback_events)?;
    Ok(())
}

#[derive(Serialize)]
struct StageDump<'a> {
    stage: usize,
    regions: &'a [Region],
}

pub fn cmd_partition_dump(args: &DumpArgs, stdout: &mut dyn Write) -> Result<()> {
    let bundle = read_bundle(&args.bundle)?;
    let n = bundle.root.belief.len();
    let terminal = terminal_value(n, 1, bundle.horizon);
    let dump: Vec<StageDump> = bundle
        .stages
        .iter()
        .chain(std::iter::once(&terminal))
        .map(|s| StageDump {
            stage: s.stage_index,
            regions: &s.partition.regions,
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&dump)?;
    text.push('\n');
    write_output(args.out.as_ref(), &text, stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(simplex_grid(2, 2), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(simplex_grid(2, 101).len(), 101);
        assert_eq!(simplex_grid(3, 3).len(), 6);
        assert_eq!(simplex_grid(1, 5), vec![vec![1.0]]);
    }

    #[test]
    fn horizon_zero_is_a_usage_error() {
        let err = Cli::try_parse_from(["posg", "solve", "--model", "m.json", "--horizon", "0"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
