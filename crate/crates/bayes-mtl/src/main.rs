use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bayes_mtl::config::{ConfigFile, Overrides};
use bayes_mtl::manifest::RunManifest;
use bayes_mtl::output::{atomic_write, manifest_path};
use bayes_mtl::run::{self, SimulationSpec};
use bayes_mtl::{format, Error, Result};
use bayes_mtl_core::model::{Definiteness, ValidatedEnsemble};
use bayes_mtl_core::phase::{Axis, Parameter};
use bayes_mtl_core::{solver, synth, SolverOptions};
use clap::{ArgAction, Args, Parser, Subcommand};

/// Asymptotic Bayes risk of semi-supervised multitask classification on
/// correlated Gaussian mixtures.
#[derive(Parser)]
#[command(name = "bayes-mtl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Ensemble configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seed for every random draw [default: file value, else 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output file [default: stdout]. A `.manifest.json` is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Fixed-point tolerance (sup-norm) [default: 1e-12].
    #[arg(long)]
    tol: Option<f64>,
    /// Damping weight of the new iterate, in (0, 1] [default: 0.5].
    #[arg(long)]
    damping: Option<f64>,
    /// Iteration cap [default: 100000].
    #[arg(long)]
    max_iter: Option<usize>,
    /// Accept a singular positive semidefinite C (e.g. identical tasks).
    #[arg(long)]
    allow_singular: bool,
}

#[derive(Args)]
struct Sweeps {
    /// Linear sweep of lambdaK, sigmaK, alphaK, etaK, cIJ or c (all
    /// correlations). K, I, J are 1-based.
    #[arg(long, num_args = 4, value_names = ["NAME", "MIN", "MAX", "STEPS"], action = ArgAction::Append)]
    sweep: Vec<String>,
}

#[derive(Args)]
struct Sampling {
    /// Dimension D.
    #[arg(short = 'D', long = "dim", default_value_t = 1000)]
    dim: usize,
    /// Points per task, comma separated [default: round(alpha_t D)].
    #[arg(short = 'N', long = "sizes", value_delimiter = ',')]
    sizes: Vec<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed-point equations and print overlaps and risks as JSON.
    Risk {
        #[command(flatten)]
        common: Common,
    },
    /// Feasibility (and optionally risk) over a 1- or 2-axis grid, as CSV.
    Phase {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweeps: Sweeps,
        /// Also solve for the per-task risk in every cell.
        #[arg(long)]
        with_risk: bool,
    },
    /// Empirical risk of the optimal supervised classifier against theory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweeps: Sweeps,
        #[command(flatten)]
        sampling: Sampling,
        /// Fresh test points per task.
        #[arg(long, default_value_t = 10_000)]
        n_test: usize,
        /// Write each sweep point's dataset to this directory.
        #[arg(long)]
        dump_data: Option<PathBuf>,
        /// With --dump-data, also write the hidden class means.
        #[arg(long, requires = "dump_data")]
        dump_hidden: bool,
    },
    /// Error of the plug-in estimates of C and sigma over several seeds.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampling: Sampling,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
}

struct Context {
    ensemble: ValidatedEnsemble,
    seed: u64,
    solver: SolverOptions,
    out: Option<PathBuf>,
    args: Vec<String>,
    started: Instant,
}

impl Context {
    fn new(common: &Common, args: Vec<String>) -> Result<Self> {
        let file = ConfigFile::load(&common.config)?;
        let policy = if common.allow_singular {
            Definiteness::Semidefinite
        } else {
            Definiteness::Positive
        };
        let ensemble = file.validate(policy)?;
        let overrides = Overrides {
            seed: common.seed,
            tol: common.tol,
            damping: common.damping,
            max_iter: common.max_iter,
        };
        Ok(Self {
            seed: overrides.seed(&file),
            solver: overrides.solver(&file),
            ensemble,
            out: common.out.clone(),
            args,
            started: Instant::now(),
        })
    }

    /// Writes `bytes` to `--out` (plus manifest) or stdout.
    fn emit(&self, subcommand: &str, bytes: &[u8], mut extra: Vec<PathBuf>) -> Result<()> {
        let Some(path) = &self.out else {
            use std::io::Write;
            return std::io::stdout()
                .write_all(bytes)
                .map_err(|e| Error::io("<stdout>", e));
        };
        atomic_write(path, bytes)?;
        let mut outputs = vec![path.clone()];
        outputs.append(&mut extra);
        let mut config = ConfigFile::from_ensemble(self.ensemble.config());
        config.seed = Some(self.seed);
        let manifest = RunManifest {
            subcommand: subcommand.into(),
            args: self.args.clone(),
            config,
            seed: self.seed,
            solver: self.solver.into(),
            outputs,
            version: env!("CARGO_PKG_VERSION").into(),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        atomic_write(&manifest_path(path), format::json(&manifest)?.as_bytes())
    }
}

fn parse_axes(raw: &[String]) -> Result<Vec<Axis>> {
    raw.chunks(4)
        .map(|c| {
            let bad = |what: &str, v: &str| {
                Error::Usage(format!("--sweep {}: invalid {what} `{v}`", c[0]))
            };
            let parameter: Parameter =
                c[0].parse()
                    .map_err(|e: bayes_mtl_core::phase::ParseParameterError| {
                        Error::Usage(e.to_string())
                    })?;
            let min: f64 = c[1].parse().map_err(|_| bad("MIN", &c[1]))?;
            let max: f64 = c[2].parse().map_err(|_| bad("MAX", &c[2]))?;
            let steps: usize = c[3].parse().map_err(|_| bad("STEPS", &c[3]))?;
            Ok(Axis::new(parameter, min, max, steps)?)
        })
        .collect()
}

fn sizes(sampling: &Sampling) -> Option<Vec<usize>> {
    (!sampling.sizes.is_empty()).then(|| sampling.sizes.clone())
}

fn cmd_risk(ctx: &Context) -> Result<ExitCode> {
    let (overlaps, converged) = match solver::solve(&ctx.ensemble, &ctx.solver) {
        Ok(o) => (o, true),
        Err(bayes_mtl_core::Error::NoConvergence(partial)) => (*partial, false),
        Err(e) => return Err(e.into()),
    };
    let report = solver::risk_from_overlaps(overlaps)?;
    ctx.emit("risk", run::risk_json(&report)?.as_bytes(), Vec::new())?;
    if converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "warning: no convergence after {} iterations (residual {}); result is the last iterate",
            report.overlaps.iterations, report.overlaps.residual
        );
        Ok(ExitCode::from(2))
    }
}

fn cmd_phase(ctx: &Context, sweeps: &Sweeps, with_risk: bool) -> Result<ExitCode> {
    let axes = parse_axes(&sweeps.sweep)?;
    let grid = run::phase_grid(&ctx.ensemble, &axes, with_risk, &ctx.solver)?;
    ctx.emit(
        "phase",
        &run::phase_csv(&grid, ctx.ensemble.tasks())?,
        Vec::new(),
    )?;
    let stalled = grid.cells.iter().filter(|c| !c.converged).count();
    if stalled == 0 {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "warning: {stalled} cell(s) hit the iteration cap; their risks are last iterates"
        );
        Ok(ExitCode::from(2))
    }
}

fn dump(dir: &Path, index: usize, data: &synth::Dataset, hidden: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = run::dataset_csvs(data, hidden)?;
    let mut written = Vec::new();
    for (t, bytes) in files.tasks.iter().enumerate() {
        let p = dir.join(format!("point{}_task{}.csv", index + 1, t + 1));
        atomic_write(&p, bytes)?;
        written.push(p);
    }
    if let Some(bytes) = files.hidden {
        let p = dir.join(format!("point{}_hidden.csv", index + 1));
        atomic_write(&p, &bytes)?;
        written.push(p);
    }
    Ok(written)
}

fn cmd_simulate(
    ctx: &Context,
    sweeps: &Sweeps,
    sampling: &Sampling,
    n_test: usize,
    dump_data: Option<&Path>,
    dump_hidden: bool,
) -> Result<ExitCode> {
    let mut axes = parse_axes(&sweeps.sweep)?;
    if axes.len() > 1 {
        return Err(Error::Usage("simulate sweeps at most one parameter".into()));
    }
    if ctx.ensemble.eta().iter().any(|&e| e != 1.0) {
        eprintln!(
            "warning: not every eta is 1; the classifier is optimal only for fully labeled data"
        );
    }
    let spec = SimulationSpec {
        axis: axes.pop(),
        dim: sampling.dim,
        sizes: sizes(sampling),
        n_test,
        seed: ctx.seed,
    };
    let rows = run::simulate(&ctx.ensemble, &spec, &ctx.solver)?;
    let mut extra = Vec::new();
    if let Some(dir) = dump_data {
        for (i, row) in rows.iter().enumerate() {
            let ens = match (&spec.axis, row.param) {
                (Some(axis), Some(v)) => bayes_mtl_core::phase::apply_coordinates(
                    &ctx.ensemble,
                    std::slice::from_ref(axis),
                    &[v],
                )?,
                _ => ctx.ensemble.clone(),
            };
            let sizes = spec
                .sizes
                .clone()
                .unwrap_or_else(|| synth::sizes_from_alpha(&ens, spec.dim));
            let data = synth::generate(&ens, spec.dim, &sizes, spec.seed.wrapping_add(i as u64))?;
            extra.extend(dump(dir, i, &data, dump_hidden)?);
        }
    }
    ctx.emit(
        "simulate",
        &run::simulation_csv(&rows, ctx.ensemble.tasks())?,
        extra,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_estimate(ctx: &Context, sampling: &Sampling, seeds: usize) -> Result<ExitCode> {
    let sizes = sizes(sampling);
    let rows = run::estimate(
        &ctx.ensemble,
        sampling.dim,
        sizes.as_deref(),
        ctx.seed,
        seeds,
    )?;
    let clamped = rows.iter().filter(|r| r.clamped.iter().any(|&c| c)).count();
    if clamped > 0 {
        eprintln!("warning: negative variance estimate clamped to 0 in {clamped} seed(s)");
    }
    ctx.emit(
        "estimate",
        &run::estimate_csv(&rows, ctx.ensemble.tasks())?,
        Vec::new(),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Risk { common }
        | Command::Phase { common, .. }
        | Command::Simulate { common, .. }
        | Command::Estimate { common, .. } => common,
    }
}

fn execute(cli: Cli, args: Vec<String>) -> Result<ExitCode> {
    let common = common(&cli.command);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(e.to_string()))?;
    let ctx = Context::new(common, args)?;
    pool.install(|| match &cli.command {
        Command::Risk { .. } => cmd_risk(&ctx),
        Command::Phase {
            sweeps, with_risk, ..
        } => cmd_phase(&ctx, sweeps, *with_risk),
        Command::Simulate {
            sweeps,
            sampling,
            n_test,
            dump_data,
            dump_hidden,
            ..
        } => cmd_simulate(
            &ctx,
            sweeps,
            sampling,
            *n_test,
            dump_data.as_deref(),
            *dump_hidden,
        ),
        Command::Estimate {
            sampling, seeds, ..
        } => cmd_estimate(&ctx, sampling, *seeds),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli, std::env::args().skip(1).collect()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
