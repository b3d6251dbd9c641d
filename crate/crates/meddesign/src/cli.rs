//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use meddesign_core::design::{confidence_halfwidth, round_exact};
use meddesign_core::optimizer::optimize_design_with;
use meddesign_core::simulation::run_study_with;
use meddesign_core::{ContourMap, Design, Error, Objective, OptimProblem, SensitivityReport};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{parse_config, ConfigError, ProblemConfig};
use crate::io::{self, FileError};
use crate::parallel::{thread_pool, Rayon};

#[derive(Debug, Parser)]
#[command(name = "meddesign", version, about = "Optimal designs for two-drug combination studies")]
pub struct Cli {
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, env = "MEDDESIGN_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Directory receiving all output files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for an optimal design.
    Optimize {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        swarm: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        n_points: Option<usize>,
        /// Also round the result to an exact design with this many observations.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Equivalence-theorem check of a design.
    Verify {
        #[arg(long, short)]
        config: PathBuf,
        design: PathBuf,
    },
    /// Efficiency of a candidate design relative to a reference design.
    Efficiency {
        #[arg(long, short)]
        config: PathBuf,
        candidate: PathBuf,
        reference: PathBuf,
    },
    /// Monte Carlo comparison of designs by contour RMSE.
    Simulate {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(required = true)]
        designs: Vec<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Total sample sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Contour atoms of the configured surface.
    Contour {
        #[arg(long, short)]
        config: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error at {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    File(#[from] FileError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot start worker threads: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_range() => 2,
            CliError::Core(Error::NoFeasibleDesign) => 3,
            _ => 1,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let pool = thread_pool(cli.threads)?;
    std::fs::create_dir_all(&cli.out).map_err(|source| FileError::Io {
        path: cli.out.clone(),
        source,
    })?;
    pool.install(|| dispatch(cli))
}

/// Manifest fields shared by every command.
struct Manifest {
    command: &'static str,
    config_path: PathBuf,
    inputs: Vec<PathBuf>,
    overrides: Map<String, Value>,
    seed: Option<u64>,
}

impl Manifest {
    fn new(command: &'static str, config_path: &Path) -> Self {
        Manifest {
            command,
            config_path: config_path.to_path_buf(),
            inputs: Vec::new(),
            overrides: Map::new(),
            seed: None,
        }
    }

    fn set<T: Into<Value>>(&mut self, flag: &str, value: Option<T>) {
        if let Some(v) = value {
            self.overrides.insert(flag.to_string(), v.into());
        }
    }

    fn write(&self, out: &Path, cfg: &ProblemConfig) -> Result<(), CliError> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| Ok(json!({"path": p.display().to_string(), "sha256": file_hash(p)?})))
            .collect::<Result<Vec<_>, FileError>>()?;
        let defaults: Map<String, Value> = cfg
            .defaults
            .iter()
            .map(|(f, v)| (f.clone(), Value::String(v.clone())))
            .collect();
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config_path.display().to_string(),
            "config_sha256": file_hash(&self.config_path)?,
            "inputs": inputs,
            "overrides": self.overrides,
            "seed": self.seed,
            "defaults_applied": defaults,
            "resolved": cfg.resolved(),
        });
        io::write_json(&out.join("run.json"), &manifest)?;
        Ok(())
    }
}

fn file_hash(path: &Path) -> Result<String, FileError> {
    let bytes = std::fs::read(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn report_json(r: &SensitivityReport) -> Value {
    json!({
        "criterion": r.criterion_value,
        "max_psi": r.max_psi,
        "argmax": {"c": r.argmax.c, "d": r.argmax.d},
        "elb": r.elb,
        "vacuous": r.vacuous,
        "support_residuals": r.support_residuals,
    })
}

fn emit(out: &Path, name: &str, value: &Value) -> Result<(), CliError> {
    io::write_json(&out.join(name), value)?;
    // stdout is a convenience copy; a closed pipe is not an error
    let _ = writeln!(std::io::stdout().lock(), "{value:#}");
    Ok(())
}

fn load_designs(cfg: &ProblemConfig, paths: &[PathBuf]) -> Result<Vec<Design>, CliError> {
    paths
        .iter()
        .map(|p| {
            let d = io::read_design(p)?;
            d.check_region(&cfg.region).map_err(|source| FileError::Design {
                path: p.clone(),
                source,
            })?;
            Ok(d)
        })
        .collect()
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Optimize {
            config,
            seed,
            swarm,
            iters,
            restarts,
            n_points,
            n,
        } => {
            let cfg = parse_config(config)?;
            let mut manifest = Manifest::new("optimize", config);
            manifest.set("seed", *seed);
            manifest.set("swarm", *swarm);
            manifest.set("iters", *iters);
            manifest.set("restarts", *restarts);
            manifest.set("n_points", *n_points);
            manifest.set("n", *n);
            let mut pso = cfg.optimizer.pso;
            pso.seed = seed.unwrap_or(pso.seed);
            pso.swarm_size = swarm.unwrap_or(pso.swarm_size);
            pso.iterations = iters.unwrap_or(pso.iterations);
            pso.restarts = restarts.unwrap_or(pso.restarts);
            pso.validate()?;
            manifest.seed = Some(pso.seed);
            let n_points = n_points.or(cfg.optimizer.n_points).ok_or_else(|| {
                CliError::Usage("the number of support points is not set (optimizer.n_points or --n-points)".into())
            })?;
            let objective = cfg.objective()?;
            let problem = OptimProblem::new(cfg.region, objective, n_points)?;
            log::info!(
                "optimizing {} design with {} points: swarm {}, {} iterations, {} restarts, seed {}",
                problem.objective.name(),
                n_points,
                pso.swarm_size,
                pso.iterations,
                pso.restarts,
                pso.seed
            );
            let result = optimize_design_with(&problem, &pso, &Rayon)?;
            log::info!(
                "criterion {:.6}, elb {:.6}, certified {}",
                result.criterion_value,
                result.report.elb,
                result.certified
            );
            io::write_design(&out.join("design.csv"), &result.design)?;
            if let Some(n) = n {
                io::write_exact_design(&out.join("exact.csv"), &round_exact(&result.design, *n)?)?;
            }
            let value = json!({
                "objective": problem.objective.name(),
                "design": io::design_json(&result.design),
                "criterion_value": result.criterion_value,
                "report": report_json(&result.report),
                "certified": result.certified,
                "evaluations": result.evaluations,
                "trace": result.trace.iter().map(|(i, v)| json!([i, v])).collect::<Vec<_>>(),
            });
            io::write_json(&out.join("result.json"), &value)?;
            manifest.write(out, &cfg)?;
        }
        Command::Verify { config, design } => {
            let cfg = parse_config(config)?;
            let mut manifest = Manifest::new("verify", config);
            manifest.inputs.push(design.clone());
            let d = load_designs(&cfg, std::slice::from_ref(design))?.remove(0);
            let objective = cfg.objective()?;
            let report = objective.report(&d, &cfg.region)?;
            let mut value = report_json(&report);
            value["objective"] = json!(objective.name());
            if let (Some(conf), false) = (cfg.confidence, cfg.criterion.levels.is_empty()) {
                let measure = cfg.med_criterion()?.config().measure().clone();
                let mut widths = Vec::with_capacity(measure.len());
                for x in measure.points() {
                    widths.push(confidence_halfwidth(x, &d, &cfg.model, &conf)?);
                }
                let max = widths.iter().copied().fold(0.0, f64::max);
                let mean = widths.iter().sum::<f64>() / widths.len() as f64;
                value["confidence"] = json!({
                    "alpha": conf.alpha,
                    "n_total": conf.n_total,
                    "max_halfwidth": max,
                    "mean_halfwidth": mean,
                });
            }
            emit(out, "verify.json", &value)?;
            manifest.write(out, &cfg)?;
        }
        Command::Efficiency {
            config,
            candidate,
            reference,
        } => {
            let cfg = parse_config(config)?;
            let mut manifest = Manifest::new("efficiency", config);
            manifest.inputs.extend([candidate.clone(), reference.clone()]);
            let designs = load_designs(&cfg, &[candidate.clone(), reference.clone()])?;
            let objective = cfg.objective()?;
            let (vc, vr) = (objective.value(&designs[0])?, objective.value(&designs[1])?);
            let ratio = match objective {
                // D-efficiency from -log det values
                Objective::D { .. } => ((vr - vc) / objective.param_count() as f64).exp(),
                _ => vr / vc,
            };
            emit(out, "efficiency.json", &json!({ "ratio": ratio }))?;
            manifest.write(out, &cfg)?;
        }
        Command::Simulate {
            config,
            designs,
            reps,
            seed,
            n,
        } => {
            let cfg = parse_config(config)?;
            let mut manifest = Manifest::new("simulate", config);
            manifest.inputs.extend(designs.iter().cloned());
            manifest.set("reps", *reps);
            manifest.set("seed", *seed);
            if !n.is_empty() {
                manifest.set("n", Some(n.clone()));
            }
            let (scenario, mut sim) = cfg.scenario()?;
            sim.reps = reps.unwrap_or(sim.reps);
            sim.seed = seed.unwrap_or(sim.seed);
            if !n.is_empty() {
                sim.n_totals = n.clone();
            }
            if sim.reps == 0 || sim.n_totals.contains(&0) {
                return Err(CliError::Usage("--reps and --n must be positive".into()));
            }
            manifest.seed = Some(sim.seed);
            let loaded = load_designs(&cfg, designs)?;
            let mut named = Vec::with_capacity(loaded.len());
            for (path, d) in designs.iter().zip(loaded) {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                if named.iter().any(|(n, _): &(String, Design)| *n == name) {
                    return Err(CliError::Usage(format!("two designs are named {name:?}")));
                }
                named.push((name, d));
            }
            log::info!(
                "simulating {} designs, N in {:?}, {} replicates, seed {}",
                named.len(),
                sim.n_totals,
                sim.reps,
                sim.seed
            );
            let result = run_study_with(&scenario, &named, &sim, &Rayon)?;
            io::write_rmse_csv(&out.join("rmse.csv"), &result)?;
            emit(out, "summary.json", &io::summary_json(&result))?;
            manifest.write(out, &cfg)?;
        }
        Command::Contour { config } => {
            let cfg = parse_config(config)?;
            if cfg.criterion.levels.is_empty() {
                return Err(ConfigError {
                    path: "criterion.levels".into(),
                    reason: "no contour levels configured".into(),
                }
                .into());
            }
            let m = &cfg.criterion.measure;
            let map = ContourMap::new(&cfg.model, &cfg.region, m.contour_grid)?;
            let measure = map.measure(&cfg.criterion.levels, m.atoms_per_level)?;
            io::write_contour(&out.join("contour.csv"), &measure)?;
            Manifest::new("contour", config).write(out, &cfg)?;
        }
    }
    Ok(())
}
