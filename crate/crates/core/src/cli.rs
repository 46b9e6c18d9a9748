//! `ir` command-line front end.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::harness::{
    run_experiment, summaries_from_csv, summarize, IrMatrix, Manifest, MatrixGrid, MatrixMeta, RunConfig, SummaryRow,
};
use crate::render::{encode_png, render_curves, render_matrix, ColorMap, RenderMode, RenderSpec, Series};

pub const OUTPUT_DIR_ENV: &str = "IR_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "ir", version, about = "Measure interventional robustness of RL training pipelines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train agent populations, build IR matrices and write an artifact bundle.
    Run(RunArgs),
    /// Render a matrix CSV (or performance.csv) to a PNG image.
    Plot(PlotArgs),
    /// Print the summary table of a run.
    Summary(SummaryArgs),
    /// Print the default run config.
    DefaultConfig,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run config (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory; overrides IR_OUTPUT_DIR and the config.
    #[arg(short, long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(short, long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Matrix CSV (raw.csv / relative.csv) or performance.csv.
    pub input: PathBuf,
    #[arg(long, default_value = "raw", value_parser = ["raw", "relative"])]
    pub mode: String,
    /// Truncation bound for relative mode.
    #[arg(long, default_value_t = 0.5)]
    pub bound: f64,
    /// dusk | gray | redblue (default: dusk for raw, redblue for relative).
    #[arg(long)]
    pub colormap: Option<String>,
    /// Pixels per matrix cell.
    #[arg(long, default_value_t = 1)]
    pub scale: u32,
    /// Output image; defaults to `<input stem>.<mode>.png` beside the input.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    pub manifest: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Output directory precedence: flag, then `IR_OUTPUT_DIR`, then config, then `ir-output`.
pub fn resolve_output_dir(flag: Option<&Path>, env: Option<&str>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("ir-output"))
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let text = read(&args.config)?;
    let mut config =
        RunConfig::from_toml(&text).with_context(|| format!("{}: invalid run config", args.config.display()))?;
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    config
        .validate()
        .with_context(|| format!("{}: invalid run config", args.config.display()))?;
    let env = std::env::var(OUTPUT_DIR_ENV).ok();
    let dir = resolve_output_dir(args.output_dir.as_deref(), env.as_deref(), config.output_dir.as_deref());
    let report = run_experiment(&config, &dir)?;
    writeln!(out, "{}", report.manifest_path.display())?;
    Ok(())
}

fn default_plot_path(input: &Path, mode: &str) -> PathBuf {
    let stem = input.file_stem().map_or_else(|| "matrix".into(), |s| s.to_string_lossy().into_owned());
    input.with_file_name(format!("{stem}.{mode}.png"))
}

pub fn cmd_plot(args: &PlotArgs, out: &mut dyn Write) -> Result<PathBuf> {
    let text = read(&args.input)?;
    let output = args.output.clone().unwrap_or_else(|| default_plot_path(&args.input, &args.mode));
    if text.starts_with(PERFORMANCE_HEADER) {
        let series = parse_performance(&text).with_context(|| format!("{}", args.input.display()))?;
        let png = encode_png(&render_curves(&series)?)?;
        std::fs::write(&output, png).with_context(|| format!("cannot write {}", output.display()))?;
        writeln!(out, "wrote {}", output.display())?;
        return Ok(output);
    }

    let grid = MatrixGrid::from_csv(&text).with_context(|| format!("{}", args.input.display()))?;
    let mode: RenderMode = args.mode.parse()?;
    let color_map = match &args.colormap {
        Some(c) => c.parse()?,
        None if mode == RenderMode::Raw => ColorMap::Dusk,
        None => ColorMap::RedBlue,
    };
    let spec = RenderSpec {
        mode,
        bound: args.bound,
        color_map,
        scale: args.scale,
    };
    let rendered = render_matrix(&grid, &spec)?;
    std::fs::write(&output, rendered.png_bytes()?).with_context(|| format!("cannot write {}", output.display()))?;
    writeln!(out, "wrote {}", output.display())?;
    if mode == RenderMode::Relative {
        writeln!(
            out,
            "truncated {}/{} cells ({:.3}%) outside ±{}",
            rendered.truncated,
            rendered.total_cells,
            100.0 * rendered.truncated_fraction(),
            spec.bound
        )?;
    }
    let meta = MatrixMeta {
        pipeline: String::new(),
        algorithm: String::new(),
        checkpoint: 0,
        agents: 0,
        trials: 0,
        spotter_seed: 0,
        sampling_seed: 0,
    };
    // raw matrices also report their summary means
    if let Ok(raw) = IrMatrix::from_grid(grid, meta) {
        if raw.grid.rows[0].iter().all(Option::is_some) {
            let s = summarize(&raw);
            writeln!(
                out,
                "original {:.3} intervened {:.3} normalized {:.3}",
                s.original, s.intervened, s.normalized
            )?;
        }
    }
    Ok(output)
}

pub const PERFORMANCE_HEADER: &str = "pipeline,algorithm,checkpoint,agent,mean_return";

/// Mean return over agents per (pipeline, checkpoint), pipelines in file order.
pub fn parse_performance(text: &str) -> Result<Vec<Series>> {
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<(String, u64), (f64, usize)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            bail!("row {}: expected 5 fields", i + 1);
        }
        let ckpt: u64 = f[2].parse().with_context(|| format!("row {}, column 3", i + 1))?;
        let ret: f64 = f[4].parse().with_context(|| format!("row {}, column 5", i + 1))?;
        if !order.iter().any(|p| p == f[0]) {
            order.push(f[0].to_string());
        }
        let e = acc.entry((f[0].to_string(), ckpt)).or_insert((0.0, 0));
        e.0 += ret;
        e.1 += 1;
    }
    Ok(order
        .into_iter()
        .map(|name| Series {
            points: acc
                .iter()
                .filter(|((p, _), _)| *p == name)
                .map(|((_, c), (s, n))| (*c, s / *n as f64))
                .collect(),
            name,
        })
        .collect())
}

pub fn format_summary_table(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<16} {:>10} {:>9} {:>11} {:>11}\n",
        "Algorithm", "Checkpoint", "Original", "Intervened", "Normalized"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<16} {:>10} {:>9.3} {:>11.3} {:>11.3}\n",
            r.algorithm, r.checkpoint, r.original, r.intervened, r.normalized
        ));
    }
    s
}

pub fn cmd_summary(args: &SummaryArgs, out: &mut dyn Write) -> Result<()> {
    let manifest = Manifest::from_json(&read(&args.manifest)?)
        .with_context(|| format!("{}", args.manifest.display()))?;
    if manifest.artifacts.is_empty() {
        writeln!(out, "no artifacts")?;
        return Ok(());
    }
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    for a in &manifest.artifacts {
        let p = base.join(&a.path);
        if !p.is_file() {
            bail!("missing artifact {}", p.display());
        }
    }
    let summary = manifest
        .summary
        .as_deref()
        .context("manifest lists artifacts but no summary file")?;
    let rows = summaries_from_csv(&read(&base.join(summary))?).with_context(|| summary.to_string())?;
    write!(out, "{}", format_summary_table(&rows))?;
    Ok(())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Plot(a) => cmd_plot(&a, out).map(|_| ()),
        Command::Summary(a) => cmd_summary(&a, out),
        Command::DefaultConfig => {
            write!(out, "{}", RunConfig::default().to_toml())?;
            Ok(())
        }
    }
}
