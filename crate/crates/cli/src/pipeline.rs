//! split → warm start → μ-grid descent-ascent → selection → test evaluation.

use std::sync::Arc;

use osp_core::eval::{coverage_error_curve, osp_overlap, CurvePoint, GridMethod, SelectionMethod};
use osp_core::net::{warm_start, SelectiveModel};
use osp_core::select::Selection;
use osp_core::synth::synthesize;
use osp_core::train::{dg_train, sgda_from, DGConfig, TrainOutcome};
use osp_core::{evaluate, LabeledDataset};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DatasetSource, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{dataset_to_csv, ingest_csv, ModelFile, RunWriter};
use crate::report::{curve_table, grid_table, log_table, MetricsRecord};

/// What a finished run reports back; everything here is also on disk.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config_hash: String,
    pub metrics: MetricsRecord,
    pub selection: Selection,
    pub curve: Vec<CurvePoint>,
    pub artifacts: Vec<String>,
}

impl RunSummary {
    pub fn feasible(&self) -> bool {
        self.selection.feasible
    }
}

#[derive(Debug, Serialize)]
struct DataSummary {
    source: String,
    n: usize,
    dim: usize,
    num_classes: usize,
    sha256: String,
    split_sizes: [usize; 3],
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    status: &'a str,
    config_hash: &'a str,
    seed: u64,
    split_seed: u64,
    stages: &'a [&'static str],
    data: Option<&'a DataSummary>,
    artifacts: &'a [String],
}

#[derive(Debug, Serialize)]
struct ErrorManifest<'a> {
    status: &'a str,
    config_hash: &'a str,
    seed: u64,
    failed_stage: &'a str,
    kind: &'a str,
    message: String,
    exit_code: i32,
    completed_stages: &'a [&'static str],
    artifacts: &'a [String],
}

pub fn load_dataset(source: &DatasetSource) -> CliResult<LabeledDataset> {
    match source {
        DatasetSource::Csv(p) => ingest_csv(p),
        DatasetSource::Synthetic(s) => Ok(synthesize(s)?),
    }
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(format!("worker pool: {e}")))
}

struct Run<'a> {
    cfg: &'a RunConfig,
    hash: String,
    writer: RunWriter,
    stages: Vec<&'static str>,
    data: Option<DataSummary>,
}

impl Run<'_> {
    fn done(&mut self, stage: &'static str) {
        self.stages.push(stage);
    }

    fn model_file(&mut self, rel: &str, param: f64, model: &SelectiveModel) -> CliResult<()> {
        let file = ModelFile::new(&self.hash, self.cfg.seed, param, model);
        self.writer.write(rel, &file.to_bytes())
    }

    fn execute(&mut self, stage: &mut &'static str) -> CliResult<(MetricsRecord, Selection, Vec<CurvePoint>)> {
        let cfg = self.cfg;
        let seed = cfg.seed;
        self.writer.write("config.toml", cfg.to_toml().as_bytes())?;

        *stage = "data";
        let data = load_dataset(&cfg.dataset)?;
        let parts = data.split(&cfg.split, cfg.split_seed)?;
        let (train, val, test) = (&parts[0], &parts[1], &parts[2]);
        if train.is_empty() || val.is_empty() || test.is_empty() {
            return Err(CliError::config("a split part is empty; use more data or larger fractions"));
        }
        self.data = Some(DataSummary {
            source: match &cfg.dataset {
                DatasetSource::Csv(p) => p.display().to_string(),
                DatasetSource::Synthetic(_) => "synthetic".into(),
            },
            n: data.len(),
            dim: data.dim(),
            num_classes: data.num_classes(),
            sha256: hex::encode(Sha256::digest(dataset_to_csv(&data).as_bytes())),
            split_sizes: [train.len(), val.len(), test.len()],
        });
        self.done("data");

        *stage = "warm_start";
        let k = data.num_classes();
        let spec = cfg.backbone.spec(data.dim())?;
        let base = cfg.train_config(cfg.mu_grid[0]);
        let warm = warm_start(train, &spec, k, &base.warm_start_config())?;
        self.model_file("models/warm.json", 0.0, &warm)?;
        self.done("warm_start");

        *stage = "train";
        let workers = pool(cfg.workers)?;
        let outcomes: Vec<_> = workers.install(|| {
            cfg.mu_grid
                .par_iter()
                .map(|&mu| sgda_from(warm.clone(), train, &cfg.train_config(mu)))
                .collect()
        });
        let mut models = Vec::with_capacity(outcomes.len());
        for (i, (mu, out)) in cfg.mu_grid.iter().zip(outcomes).enumerate() {
            let TrainOutcome { model, log, .. } = out?;
            self.model_file(&format!("models/mu_{i}.json"), *mu, &model)?;
            self.writer.write(&format!("logs/mu_{i}.csv"), &log_table(&self.hash, seed, *mu, &log))?;
            models.push((*mu, Arc::new(model)));
        }
        self.done("train");

        *stage = "select";
        let method = GridMethod::osp(&models, &cfg.t_grid, val)?;
        self.writer.write("grid.csv", &grid_table(&self.hash, seed, &method.grid))?;
        let (selection, family) = method.choose(cfg.criterion)?;
        self.done("select");

        *stage = "eval";
        let test_metrics = evaluate(&family, test)?;
        let chosen = &models[selection.mu_index(&method.grid)].1;
        let overlap = osp_overlap(chosen, selection.cell.t, test)?;
        let record = MetricsRecord::new(&self.hash, seed, &selection, &test_metrics, overlap);
        self.writer.write("metrics.csv", &record.to_csv())?;
        self.done("eval");

        let mut curve = Vec::new();
        if !cfg.curve_targets.is_empty() {
            *stage = "curve";
            curve.extend(coverage_error_curve(&method, &cfg.curve_targets, test)?);
            let sr = GridMethod::softmax_response(Arc::new(warm), &cfg.t_grid, val)?;
            curve.extend(coverage_error_curve(&sr, &cfg.curve_targets, test)?);
            if !cfg.dg_payoffs.is_empty() {
                let fit_cfg = base.warm_start_config();
                for &o in &cfg.dg_payoffs {
                    DGConfig {
                        payoff: o,
                        thresholds: cfg.t_grid.clone(),
                    }
                    .validate(k)?;
                }
                let dg: Vec<_> = workers.install(|| {
                    cfg.dg_payoffs
                        .par_iter()
                        .map(|&o| {
                            let dcfg = DGConfig {
                                payoff: o,
                                thresholds: cfg.t_grid.clone(),
                            };
                            dg_train(train, &spec, &dcfg, &fit_cfg)
                        })
                        .collect()
                });
                let mut dg_models = Vec::with_capacity(dg.len());
                for (i, (o, m)) in cfg.dg_payoffs.iter().zip(dg).enumerate() {
                    let m = m?;
                    self.model_file(&format!("models/dg_{i}.json"), *o, &m)?;
                    dg_models.push((*o, Arc::new(m)));
                }
                let dg_method = GridMethod::gamblers(&dg_models, &cfg.t_grid, val)?;
                curve.extend(coverage_error_curve(&dg_method, &cfg.curve_targets, test)?);
            }
            self.writer.write("curve.csv", &curve_table(&self.hash, seed, &curve))?;
            self.done("curve");
        }
        Ok((record, selection, curve))
    }
}

/// Runs the whole pipeline into `cfg.output_dir`.
///
/// The config is validated before any compute. On a stage failure the completed artifacts
/// stay on disk next to `error.json`; otherwise `manifest.json` lists everything written.
/// An infeasible selection still completes; check [`RunSummary::feasible`].
pub fn run_pipeline(cfg: &RunConfig) -> CliResult<RunSummary> {
    cfg.validate()?;
    let mut run = Run {
        cfg,
        hash: cfg.config_hash(),
        writer: RunWriter::create(&cfg.output_dir)?,
        stages: Vec::new(),
        data: None,
    };
    let mut stage = "config";
    match run.execute(&mut stage) {
        Ok((metrics, selection, curve)) => {
            let status = if selection.feasible { "ok" } else { "infeasible" };
            let mut artifacts = run.writer.artifacts().to_vec();
            artifacts.push("manifest.json".into());
            let manifest = Manifest {
                status,
                config_hash: &run.hash,
                seed: cfg.seed,
                split_seed: cfg.split_seed,
                stages: &run.stages,
                data: run.data.as_ref(),
                artifacts: &artifacts,
            };
            run.writer.write_json("manifest.json", &manifest)?;
            Ok(RunSummary {
                config_hash: run.hash,
                metrics,
                selection,
                curve,
                artifacts,
            })
        }
        Err(e) => {
            let artifacts = run.writer.artifacts().to_vec();
            let manifest = ErrorManifest {
                status: "error",
                config_hash: &run.hash,
                seed: cfg.seed,
                failed_stage: stage,
                kind: e.kind(),
                message: e.to_string(),
                exit_code: e.exit_code(),
                completed_stages: &run.stages,
                artifacts: &artifacts,
            };
            // The original failure matters more than a failure to record it.
            let _ = run.writer.write_json("error.json", &manifest);
            Err(e)
        }
    }
}
