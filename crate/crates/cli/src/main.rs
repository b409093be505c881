use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use meshsoc::experiment::{self, Experiment};
use meshsoc::report;
use meshsoc::{DataflowGraph, Mode, RunReport, SocConfig};

/// Cycle-level simulation of a dataflow application on a tiled SoC.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// SoC floorplan (TOML).
    #[arg(long)]
    soc: PathBuf,
    /// Dataflow graph (TOML).
    #[arg(long)]
    dataflow: PathBuf,
    /// Execution mode; ignored with --compare.
    #[arg(long, default_value = "p2p", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long, default_value_t = 64)]
    frames: usize,
    /// Seed for the generated input frames.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metrics CSV. A `.manifest.toml` is written next to it. Without this
    /// flag the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run serial, pipe and p2p and emit DRAM and throughput tables.
    #[arg(long)]
    compare: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}{suffix}"))
}

fn run(args: &Args) -> Result<()> {
    let cfg = SocConfig::load(&args.soc)?;
    let graph = DataflowGraph::load(&args.dataflow)?;
    let runs: Vec<Experiment> = if args.compare {
        experiment::compare(&cfg, &graph, args.frames, args.seed)?
    } else {
        vec![experiment::run_experiment(
            &cfg,
            &graph,
            args.mode,
            args.frames,
            args.seed,
        )?]
    };
    let reports: Vec<RunReport> = runs.into_iter().map(|e| e.report).collect();
    let csv = report::to_csv(&reports)?;
    let tables = if args.compare {
        Some((
            report::dram_table(&reports)?,
            report::throughput_table(&reports)?,
        ))
    } else {
        None
    };

    match &args.out {
        Some(out) => {
            fs::write(out, &csv).with_context(|| format!("writing {}", out.display()))?;
            let manifest = report::manifest(
                &reports,
                &args.soc.display().to_string(),
                &args.dataflow.display().to_string(),
                &out.display().to_string(),
            );
            let mpath = sibling(out, ".manifest.toml");
            fs::write(&mpath, manifest).with_context(|| format!("writing {}", mpath.display()))?;
            if let Some((dram, tput)) = &tables {
                fs::write(sibling(out, "_dram.csv"), dram)?;
                fs::write(sibling(out, "_throughput.csv"), tput)?;
            }
        }
        None => print!("{csv}"),
    }
    if let Some((dram, tput)) = &tables {
        eprintln!("DRAM accesses\n{dram}\nThroughput\n{tput}");
    } else {
        let r = &reports[0];
        eprintln!(
            "{}: {} frames in {} cycles, {:.1} frames/s, {} DRAM words",
            r.mode,
            r.frames,
            r.total_cycles,
            r.frames_per_second,
            r.dram_words()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
