use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use osp_cli::config::CriterionMode;
use osp_cli::io::Table;
use osp_cli::report::{curve_table, grid_table, log_table};
use osp_cli::{
    dataset_to_csv, ingest_csv, load_dataset, load_model, run_pipeline, CliError, ModelFile, Overrides, RunConfig,
    EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK,
};
use osp_core::eval::{coverage_error_curve, osp_overlap, GridMethod, SelectionMethod};
use osp_core::net::warm_start;
use osp_core::oracle::{
    analytic_example_coverage, solve_osp_decoupled, solve_osp_exact, solve_sc_exact, AlphaAllocation,
    FiniteHypothesisClass, OracleSolution,
};
use osp_core::select::linspace;
use osp_core::synth::{synthesize, SyntheticKind, SyntheticSpec};
use osp_core::train::sgda_from;
use osp_core::{evaluate, ScoreRule};
use serde_json::json;

#[derive(Parser)]
#[command(name = "osp", version, about = "One-sided selective classification: train, select, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Harden,
    Sr,
    Abstention,
}

impl From<Rule> for ScoreRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Harden => ScoreRule::Harden,
            Rule::Sr => ScoreRule::SoftmaxResponse,
            Rule::Abstention => ScoreRule::Abstention,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleMode {
    /// Exhaustive search over K-tuples of sets.
    Sc,
    /// Per-class one-sided optima swept over error allocations.
    Decoupled,
    /// The one-sided problem of a single class.
    Osp,
    /// Closed-form coverage of the uniform example.
    Analytic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassKind {
    Thresholds,
    Intervals,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Synth {
        /// TOML file holding a synthetic spec; the uniform example when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Warm start and descent-ascent training at one μ on a whole dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Fill the (μ, t) grid on validation data and pick a cell.
    Select {
        #[arg(long)]
        val: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "harden")]
        rule: Rule,
        #[arg(long, value_enum, default_value = "error")]
        criterion: CriterionMode,
        #[arg(long)]
        target: f64,
        #[arg(long, default_value_t = 100)]
        t_steps: usize,
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
    /// Test metrics of one model at one threshold.
    Eval {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value = "harden")]
        rule: Rule,
    },
    /// Coverage-error curve: select on validation data at each target, measure on test data.
    Curve {
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "harden")]
        rule: Rule,
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        t_steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact solvers over a finite class of one-feature thresholds or intervals.
    Oracle {
        #[arg(long, value_enum, default_value = "decoupled")]
        mode: OracleMode,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "thresholds")]
        class: ClassKind,
        #[arg(long, default_value_t = 0)]
        feature: usize,
        /// Class index for the one-sided mode.
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Sweep every split of the integer error budget instead of the uniform α grid.
        #[arg(long)]
        count_grid: bool,
    },
    /// Full run: split, warm start, μ grid, selection, evaluation, optional curve.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn resolve(config: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    cfg.apply(overrides);
    Ok(cfg)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json prints"));
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<(f64, Arc<osp_core::net::SelectiveModel>)>> {
    paths
        .iter()
        .map(|p| {
            let (param, m) = load_model(p)?;
            Ok((param, Arc::new(m)))
        })
        .collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn solution_json(s: &OracleSolution) -> serde_json::Value {
    json!({
        "value": s.value,
        "error": s.error,
        "feasible": s.feasible,
        "choice": s.choice,
        "alpha": s.alpha.as_ref().map(|a| a.alphas().to_vec()),
    })
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth { spec, n, seed, out } => {
            let mut s = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str::<SyntheticSpec>(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
                }
                None => SyntheticSpec {
                    kind: SyntheticKind::AnalyticExample,
                    n: 1000,
                    seed: 0,
                },
            };
            s.n = n.unwrap_or(s.n);
            s.seed = seed.unwrap_or(s.seed);
            let data = synthesize(&s).map_err(CliError::from)?;
            write(&out, dataset_to_csv(&data).as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Train {
            config,
            overrides,
            mu,
            out,
            log,
        } => {
            let mut cfg = resolve(config.as_deref(), &overrides)?;
            cfg.mu_grid = vec![mu];
            cfg.validate()?;
            let data = load_dataset(&cfg.dataset)?;
            let spec = cfg.backbone.spec(data.dim())?;
            let tc = cfg.train_config(mu);
            let warm = warm_start(&data, &spec, data.num_classes(), &tc.warm_start_config()).map_err(CliError::from)?;
            let outcome = sgda_from(warm, &data, &tc).map_err(CliError::from)?;
            let hash = cfg.config_hash();
            write(&out, &ModelFile::new(&hash, cfg.seed, mu, &outcome.model).to_bytes())?;
            if let Some(p) = log {
                write(&p, &log_table(&hash, cfg.seed, mu, &outcome.log))?;
            }
            Ok(EXIT_OK)
        }
        Command::Select {
            val,
            models,
            rule,
            criterion,
            target,
            t_steps,
            grid_out,
        } => {
            let val = ingest_csv(&val)?;
            let models = load_models(&models)?;
            let method = GridMethod::new("select", &models, &linspace(0.0, 1.0, t_steps), &val, rule.into())
                .map_err(CliError::from)?;
            let (s, _) = method.choose(criterion.with_target(target)).map_err(CliError::from)?;
            if let Some(p) = grid_out {
                write(&p, &grid_table("", 0, &method.grid))?;
            }
            print_json(&serde_json::to_value(&s)?);
            Ok(if s.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
        }
        Command::Eval { test, model, t, rule } => {
            let test = ingest_csv(&test)?;
            let (_, m) = load_model(&model)?;
            let m = Arc::new(m);
            let family = osp_core::DecisionSetFamily::from_scores(Arc::clone(&m), t, rule.into()).map_err(CliError::from)?;
            let metrics = evaluate(&family, &test).map_err(CliError::from)?;
            let overlap = match rule {
                Rule::Harden => Some(osp_overlap(&m, t, &test).map_err(CliError::from)?),
                _ => None,
            };
            print_json(&json!({ "metrics": metrics, "overlap": overlap }));
            Ok(EXIT_OK)
        }
        Command::Curve {
            val,
            test,
            models,
            rule,
            targets,
            t_steps,
            out,
        } => {
            let (val, test) = (ingest_csv(&val)?, ingest_csv(&test)?);
            let models = load_models(&models)?;
            let tag = match rule {
                Rule::Harden => "osp",
                Rule::Sr => "sr",
                Rule::Abstention => "dg",
            };
            let method =
                GridMethod::new(tag, &models, &linspace(0.0, 1.0, t_steps), &val, rule.into()).map_err(CliError::from)?;
            let points = coverage_error_curve(&method, &targets, &test).map_err(CliError::from)?;
            write(&out, &curve_table("", 0, &points))?;
            Ok(if points.iter().all(|p| p.feasible) { EXIT_OK } else { EXIT_INFEASIBLE })
        }
        Command::Oracle {
            mode,
            data,
            eps,
            class,
            feature,
            k,
            count_grid,
        } => {
            if let OracleMode::Analytic = mode {
                let (c, lo, hi) = analytic_example_coverage(eps).map_err(CliError::from)?;
                print_json(&json!({ "coverage": c, "accept_below": lo, "accept_above": hi }));
                return Ok(EXIT_OK);
            }
            let Some(path) = data else {
                bail!(CliError::config("--data is required for this oracle mode"));
            };
            let data = ingest_csv(&path)?;
            let cuts = FiniteHypothesisClass::data_cuts(&data, feature);
            let class = match class {
                ClassKind::Thresholds => FiniteHypothesisClass::thresholds(feature, &cuts),
                ClassKind::Intervals => FiniteHypothesisClass::intervals(feature, &cuts),
            };
            let out = match mode {
                OracleMode::Sc => solution_json(&solve_sc_exact(&data, &class, eps).map_err(CliError::from)?),
                OracleMode::Osp => solution_json(&solve_osp_exact(&data, &class, k, eps).map_err(CliError::from)?),
                OracleMode::Decoupled => {
                    let grid = if count_grid {
                        AlphaAllocation::count_grid(data.num_classes(), eps, data.len())
                    } else {
                        AlphaAllocation::default_grid(data.num_classes())
                    };
                    let d = solve_osp_decoupled(&data, &class, eps, &grid).map_err(CliError::from)?;
                    let max_overlap = d.outcomes.iter().map(|o| o.overlap).fold(0.0, f64::max);
                    let mut v = solution_json(&d.best);
                    v["max_overlap"] = json!(max_overlap);
                    v["allocations"] = json!(d.outcomes.len());
                    v
                }
                OracleMode::Analytic => unreachable!("handled above"),
            };
            print_json(&out);
            Ok(EXIT_OK)
        }
        Command::Pipeline { config, overrides } => {
            let cfg = resolve(config.as_deref(), &overrides)?;
            let summary = run_pipeline(&cfg)?;
            let m = &summary.metrics;
            let mut t = Table::new(&m.config_hash, m.seed, &["output_dir", "coverage", "error", "mu", "t", "feasible"]);
            t.row([
                cfg.output_dir.display().to_string(),
                m.coverage.to_string(),
                m.error.to_string(),
                m.mu.to_string(),
                m.t.to_string(),
                m.feasible.to_string(),
            ]);
            print!("{}", String::from_utf8(t.into_bytes())?);
            Ok(if summary.feasible() { EXIT_OK } else { EXIT_INFEASIBLE })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Usage errors share the input-error code; help and version output succeed.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(EXIT_INPUT, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
