use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robust_spc::bootstrap::SzFactor;
use robust_spc::cli_io::{
    ChartArtifact, ChartConfig, RunConfig, SimulateConfig, cmd_monitor, cmd_phase1, cmd_qq,
    cmd_simulate, load_dataset,
};
use robust_spc::depth::DepthKind;
use robust_spc::robust_stats::TrimProportion;
use robust_spc::SpcError;

/// Robust control charts: fit, monitor, simulate and diagnose.
#[derive(Parser)]
#[command(name = "rspc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit chart limits from Phase-I subgroups and write an artifact.
    Phase1 {
        /// Subgroup CSV (subgroup_id, x1, ..., xp).
        #[arg(long)]
        data: PathBuf,
        /// Artifact path to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        chart: ChartFlags,
    },
    /// Plot Phase-II subgroups against a fitted artifact, one JSON object per line.
    Monitor {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write records here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo run-length grid.
    Simulate {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        phase2_cap: Option<usize>,
        /// Also write QQ plot-point files.
        #[arg(long)]
        qq: bool,
        /// Master seed for the grid.
        #[arg(long = "sim-seed")]
        sim_seed: Option<u64>,
        #[command(flatten)]
        chart: ChartFlags,
    },
    /// Write QQ plot-point files for a univariate dataset.
    Qq {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
    },
}

/// Chart settings; each overrides the same key in the `[chart]` table.
#[derive(Args)]
struct ChartFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tail_prob: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    depth: Option<DepthKind>,
    #[arg(long)]
    trim_fraction: Option<f64>,
    #[arg(long)]
    cutvalue: Option<f64>,
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_sz_factor)]
    sz_factor: Option<SzFactor>,
    #[arg(long)]
    q: Option<f64>,
}

fn parse_sz_factor(s: &str) -> Result<SzFactor, String> {
    match s {
        "procedure" => Ok(SzFactor::Procedure),
        "asymptotic" => Ok(SzFactor::Asymptotic),
        _ => Err(format!("expected procedure or asymptotic, got {s:?}")),
    }
}

impl ChartFlags {
    fn load(self) -> Result<RunConfig, SpcError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = ChartConfig {
            family: self.family,
            alpha: self.alpha,
            tail_prob: self.tail_prob,
            lambda: self.lambda,
            l: self.l,
            mean: self.mean,
            sigma: self.sigma,
            k: self.k,
            n: self.n,
            depth: self.depth,
            trim_fraction: self.trim_fraction,
            cutvalue: self.cutvalue,
            quantile: self.quantile,
            resamples: self.resamples,
            seed: self.seed,
            sz_factor: self.sz_factor,
            q: self.q,
        };
        config.chart = flags.or(&config.chart);
        Ok(config)
    }
}

/// 2 for bad input or usage, 3 for faults during computation.
fn exit_code(e: &SpcError) -> u8 {
    match e {
        SpcError::InvalidParameter(_)
        | SpcError::Parse { .. }
        | SpcError::RaggedSubgroup { .. }
        | SpcError::Io(_)
        | SpcError::DimensionMismatch { .. }
        | SpcError::UnsupportedDimension { .. } => 2,
        _ => 3,
    }
}

fn fail(context: &str, e: SpcError) -> ExitCode {
    eprintln!("rspc {context}: {e}");
    ExitCode::from(exit_code(&e))
}

fn phase1(data: &Path, out: &Path, chart: ChartFlags) -> ExitCode {
    let config = match chart.load() {
        Ok(c) => c,
        Err(e) => return fail("phase1", e),
    };
    let family = config.chart.family.clone().unwrap_or_default();
    let context = format!("phase1 [{family}]");
    let result = load_dataset(data)
        .and_then(|d| cmd_phase1(&config, &d))
        .and_then(|a| a.write(out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&context, e),
    }
}

fn monitor(artifact: &Path, data: &Path, out: Option<&Path>) -> ExitCode {
    let result = (|| {
        let artifact = ChartArtifact::read(artifact)?;
        let dataset = load_dataset(data)?;
        match out {
            Some(path) => {
                let file = std::fs::File::create(path)
                    .map_err(|e| SpcError::Io(format!("{}: {e}", path.display())))?;
                cmd_monitor(&artifact, &dataset, &mut BufWriter::new(file))
            }
            None => cmd_monitor(&artifact, &dataset, &mut std::io::stdout().lock()),
        }
    })();
    match result {
        Ok(s) if s.faults > 0 => ExitCode::from(3),
        Ok(s) if s.signals > 0 => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => fail("monitor", e),
    }
}

struct SimulateOverrides {
    replications: Option<usize>,
    phase2_cap: Option<usize>,
    qq: bool,
    seed: Option<u64>,
}

fn simulate(out_dir: &Path, o: SimulateOverrides, chart: ChartFlags) -> ExitCode {
    let mut config = match chart.load() {
        Ok(c) => c,
        Err(e) => return fail("simulate", e),
    };
    let sim = config.simulate.get_or_insert_with(SimulateConfig::default);
    sim.replications = o.replications.or(sim.replications);
    sim.phase2_cap = o.phase2_cap.or(sim.phase2_cap);
    sim.seed = o.seed.or(sim.seed);
    sim.qq |= o.qq;
    match cmd_simulate(&config, out_dir) {
        Ok(outputs) => {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(err, "wrote {}", outputs.table.display());
            let _ = writeln!(err, "wrote {}", outputs.metadata.display());
            for p in &outputs.qq {
                let _ = writeln!(err, "wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail("simulate", e),
    }
}

fn qq(data: &Path, out_dir: &Path, alpha: f64) -> ExitCode {
    let result = TrimProportion::new(alpha)
        .and_then(|a| load_dataset(data).and_then(|d| cmd_qq(&d, a, out_dir)));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => fail("qq", e),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Phase1 { data, out, chart } => phase1(&data, &out, chart),
        Command::Monitor { artifact, data, out } => monitor(&artifact, &data, out.as_deref()),
        Command::Simulate { out_dir, replications, phase2_cap, qq, sim_seed, chart } => simulate(
            &out_dir,
            SimulateOverrides { replications, phase2_cap, qq, seed: sim_seed },
            chart,
        ),
        Command::Qq { data, out_dir, alpha } => qq(&data, &out_dir, alpha),
    }
}
