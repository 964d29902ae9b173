//! Pipeline stages shared by the single-stage subcommands, `pipeline` and
//! `ablate`. Every stage output is rounded to f32 so an artifact reloaded
//! from disk is identical to the in-memory value handed to the next stage.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::info;
use rali_core::alignment::{encode_adapter, train_alignment, AlignTrainConfig, AlignmentAdapter};
use rali_core::compression::{bucketed_kmeans, fit_pca, make_buckets, plain_kmeans, KMeansConfig, PcaModel};
use rali_core::dataset::{encode_packed, EmbeddingDataset};
use rali_core::metrics::{evaluate_with, format_table, EvalOptions, EvalReport};
use rali_core::numcore::Rng;
use rali_core::scoring::{encode_model, finetune_scoring, ScoreFitConfig, ScoringModel};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, StageExt};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn dataset_hash(ds: &EmbeddingDataset) -> Result<String, CliError> {
    Ok(sha256_hex(&encode_packed(ds).stage("hash")?))
}

pub fn align_seed(cfg: &PipelineConfig) -> u64 {
    Rng::derive_seed(cfg.seed, "align")
}

pub fn finetune_seed(cfg: &PipelineConfig) -> u64 {
    Rng::derive_seed(cfg.seed, "finetune")
}

/// Trained adapter, or `None` when alignment is switched off.
pub fn stage_align(cfg: &PipelineConfig, train: &EmbeddingDataset) -> Result<Option<AlignmentAdapter>, CliError> {
    if !cfg.align.enabled {
        return Ok(None);
    }
    let data;
    let train = if cfg.align.seed_augmentation {
        train
    } else {
        data = train.first_text_only();
        &data
    };
    let tc = AlignTrainConfig {
        lr: cfg.align.lr,
        epochs: cfg.align.epochs,
        batch_size: cfg.align.batch_size,
        seed: align_seed(cfg),
        temperature_init: cfg.align.temperature,
        weight_decay: cfg.align.weight_decay,
    };
    let mut adapter = train_alignment(train, &tc).stage("align")?.adapter;
    adapter.quantize_f32();
    Ok(Some(adapter))
}

/// Projection-only model (no basis vectors yet).
pub fn stage_pca(
    cfg: &PipelineConfig,
    train: &EmbeddingDataset,
    adapter: Option<AlignmentAdapter>,
) -> Result<ScoringModel, CliError> {
    let mut pca = if cfg.pca_enabled {
        fit_pca(train, adapter.as_ref(), cfg.pca_m).stage("pca")?
    } else {
        PcaModel::identity(train.dim())
    };
    pca.quantize_f32();
    let basis = rali_core::compression::BasisSet {
        centroids: vec![],
        scores: vec![],
        bucket_of: vec![],
    };
    ScoringModel::new(pca, basis, adapter).stage("pca")
}

/// Adds the (bucketed) k-means basis to a projection-only model.
pub fn stage_cluster(
    cfg: &PipelineConfig,
    train: &EmbeddingDataset,
    projection: &ScoringModel,
) -> Result<ScoringModel, CliError> {
    if projection.input_dim() != train.dim() {
        return Err(CliError::Stage {
            stage: "cluster",
            source: rali_core::Error::Dim {
                expected: projection.input_dim(),
                got: train.dim(),
            },
        });
    }
    let z = train
        .records()
        .iter()
        .map(|r| projection.embed(&r.image_emb).map(|v| v.into_inner()))
        .collect::<rali_core::Result<Vec<_>>>()
        .stage("cluster")?;
    let scores = train.scores();
    let kc = KMeansConfig {
        seed: cfg.seed,
        max_iters: cfg.kmeans.max_iters,
        tol: cfg.kmeans.tol,
        n_init: cfg.kmeans.n_init,
    };
    let fitted = if cfg.kmeans.bucketed {
        let spec = make_buckets(train, cfg.kmeans.buckets, cfg.kmeans.k).stage("cluster")?;
        bucketed_kmeans(&z, &scores, &spec, &kc).stage("cluster")?
    } else {
        plain_kmeans(&z, &scores, cfg.kmeans.k, &kc).stage("cluster")?
    };
    let mut model = projection.clone();
    model.basis = fitted.basis;
    model.quantize_f32();
    model.validate().stage("cluster")?;
    Ok(model)
}

pub fn stage_finetune(
    cfg: &PipelineConfig,
    train: &EmbeddingDataset,
    init: &ScoringModel,
) -> Result<ScoringModel, CliError> {
    if !cfg.finetune.enabled {
        return Ok(init.clone());
    }
    let fc = ScoreFitConfig {
        lr: cfg.finetune.lr,
        epochs: cfg.finetune.epochs,
        batch_size: cfg.finetune.batch_size,
        seed: finetune_seed(cfg),
        train_targets: cfg.finetune.targets.clone(),
    };
    let mut model = finetune_scoring(init, train, &fc).stage("finetune")?.model;
    model.quantize_f32();
    Ok(model)
}

pub fn stage_eval(cfg: &PipelineConfig, model: &ScoringModel, data: &EmbeddingDataset) -> Result<EvalReport, CliError> {
    let t = Instant::now();
    let report = evaluate_with(model, data, &EvalOptions { logistic: cfg.logistic }).stage("eval")?;
    info!(
        "predicted {} images, {:.1} µs per image",
        data.len(),
        t.elapsed().as_secs_f64() * 1e6 / data.len().max(1) as f64
    );
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: Option<u64>,
    /// Input name → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Artifact name → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
    pub report: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub adapter: Option<AlignmentAdapter>,
    pub init: ScoringModel,
    pub model: ScoringModel,
    pub report: EvalReport,
    pub manifest: Manifest,
}

fn write_artifact(dir: Option<&Path>, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = dir {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn record(stage: &str, seed: Option<u64>, inputs: &[(&str, &str)], outputs: &[(&str, &str)]) -> StageRecord {
    let map = |kv: &[(&str, &str)]| kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    StageRecord {
        stage: stage.into(),
        seed,
        inputs: map(inputs),
        outputs: map(outputs),
    }
}

/// align → pca → cluster → finetune → eval. With `artifacts`, each
/// intermediate is written there as soon as it exists, followed by the
/// report and `manifest.json`.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    train: &EmbeddingDataset,
    test: &EmbeddingDataset,
    artifacts: Option<&Path>,
) -> Result<PipelineOutcome, CliError> {
    if let Some(dir) = artifacts {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let train_hash = dataset_hash(train)?;
    let test_hash = dataset_hash(test)?;
    let mut stages = Vec::new();
    let t = Instant::now();

    let adapter = stage_align(cfg, train)?;
    let adapter_hash = match &adapter {
        Some(a) => {
            let bytes = encode_adapter(a);
            write_artifact(artifacts, "adapter.rqa", &bytes)?;
            let h = sha256_hex(&bytes);
            stages.push(record("align", Some(align_seed(cfg)), &[("train", &train_hash)], &[("adapter.rqa", &h)]));
            Some(h)
        }
        None => None,
    };
    info!("align done after {:.2?}", t.elapsed());

    let projection = stage_pca(cfg, train, adapter.clone())?;
    let bytes = encode_model(&projection);
    write_artifact(artifacts, "pca.rqm", &bytes)?;
    let pca_hash = sha256_hex(&bytes);
    let mut inputs = vec![("train", train_hash.as_str())];
    if let Some(h) = &adapter_hash {
        inputs.push(("adapter.rqa", h));
    }
    stages.push(record("pca", None, &inputs, &[("pca.rqm", &pca_hash)]));
    info!("pca done after {:.2?}", t.elapsed());

    let init = stage_cluster(cfg, train, &projection)?;
    let bytes = encode_model(&init);
    write_artifact(artifacts, "init.rqm", &bytes)?;
    let init_hash = sha256_hex(&bytes);
    stages.push(record(
        "cluster",
        Some(cfg.seed),
        &[("train", &train_hash), ("pca.rqm", &pca_hash)],
        &[("init.rqm", &init_hash)],
    ));
    info!("cluster done after {:.2?}", t.elapsed());

    let model = stage_finetune(cfg, train, &init)?;
    let bytes = encode_model(&model);
    write_artifact(artifacts, "model.rqm", &bytes)?;
    let model_hash = sha256_hex(&bytes);
    stages.push(record(
        "finetune",
        cfg.finetune.enabled.then(|| finetune_seed(cfg)),
        &[("train", &train_hash), ("init.rqm", &init_hash)],
        &[("model.rqm", &model_hash)],
    ));
    info!("finetune done after {:.2?}", t.elapsed());

    let report = stage_eval(cfg, &model, test)?;
    write_artifact(artifacts, "report.jsonl", format!("{}\n", report.to_json_line()).as_bytes())?;
    stages.push(record("eval", None, &[("test", &test_hash), ("model.rqm", &model_hash)], &[]));

    let manifest = Manifest {
        config_hash: cfg.hash(),
        config: cfg.values().clone(),
        seed: cfg.seed,
        stages,
        report: Some(report.clone()),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_artifact(artifacts, "manifest.json", json.as_bytes())?;
    Ok(PipelineOutcome {
        adapter,
        init,
        model,
        report,
        manifest,
    })
}

/// One component-ablation arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationCase {
    pub alignment: bool,
    pub pca: bool,
    pub bucketed: bool,
    pub seed_augmentation: bool,
    pub scoring_definition: bool,
}

pub const ABLATION_CASES: [AblationCase; 6] = [
    AblationCase { alignment: false, pca: true, bucketed: true, seed_augmentation: false, scoring_definition: true },
    AblationCase { alignment: true, pca: false, bucketed: true, seed_augmentation: true, scoring_definition: true },
    AblationCase { alignment: true, pca: true, bucketed: false, seed_augmentation: true, scoring_definition: true },
    AblationCase { alignment: true, pca: true, bucketed: true, seed_augmentation: false, scoring_definition: true },
    AblationCase { alignment: true, pca: true, bucketed: true, seed_augmentation: true, scoring_definition: false },
    AblationCase { alignment: true, pca: true, bucketed: true, seed_augmentation: true, scoring_definition: true },
];

impl AblationCase {
    pub fn apply(&self, cfg: &PipelineConfig) -> Result<PipelineConfig, CliError> {
        cfg.with(&[
            ("align.enabled", self.alignment.to_string()),
            ("pca.enabled", self.pca.to_string()),
            ("kmeans.bucketed", self.bucketed.to_string()),
            ("align.seed_augmentation", self.seed_augmentation.to_string()),
            ("finetune.enabled", self.scoring_definition.to_string()),
        ])
    }
}

type CaseRow = (&'static str, fn(&AblationCase) -> bool);
type MetricRow = (&'static str, fn(&EvalReport) -> f64);

fn mark(on: bool) -> &'static str {
    if on {
        "✓"
    } else {
        "×"
    }
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub cases: Vec<(AblationCase, EvalReport)>,
    /// `(M, K, N)` with reports without and with fine-tuning.
    pub sweep: Vec<((usize, usize, usize), EvalReport, EvalReport)>,
}

pub fn run_ablation(
    cfg: &PipelineConfig,
    train: &EmbeddingDataset,
    test: &EmbeddingDataset,
) -> Result<AblationResult, CliError> {
    let mut cases = Vec::new();
    for (i, case) in ABLATION_CASES.iter().enumerate() {
        let out = run_pipeline(&case.apply(cfg)?, train, test, None)?;
        info!("ablation case {}: {}", i + 1, out.report.cell());
        cases.push((*case, out.report));
    }
    let mut sweep = Vec::new();
    let ms = if cfg.sweep_m.is_empty() { vec![cfg.pca_m] } else { cfg.sweep_m.clone() };
    let ks = if cfg.sweep_k.is_empty() { vec![cfg.kmeans.k] } else { cfg.sweep_k.clone() };
    let ns = if cfg.sweep_n.is_empty() { vec![cfg.kmeans.buckets] } else { cfg.sweep_n.clone() };
    if !(cfg.sweep_m.is_empty() && cfg.sweep_k.is_empty() && cfg.sweep_n.is_empty()) {
        for &m in &ms {
            for &k in &ks {
                for &n in &ns {
                    let base = cfg.with(&[("pca.m", m.to_string()), ("kmeans.k", k.to_string()), ("kmeans.buckets", n.to_string())])?;
                    let full = run_pipeline(&base, train, test, None)?;
                    let without = evaluate_with(&full.init, test, &EvalOptions { logistic: cfg.logistic }).stage("eval")?;
                    sweep.push(((m, k, n), without, full.report));
                }
            }
        }
    }
    Ok(AblationResult { cases, sweep })
}

impl AblationResult {
    /// One row per switch, one column per case.
    pub fn case_table(&self) -> String {
        let rows: [CaseRow; 5] = [
            ("Contrastive Alignment", |c| c.alignment),
            ("PCA Reduction", |c| c.pca),
            ("Bucketed K-Means", |c| c.bucketed),
            ("Seed Augmentation", |c| c.seed_augmentation),
            ("Scoring Definition", |c| c.scoring_definition),
        ];
        let w = 22;
        let mut out = format!("{:<w$}", "");
        for i in 0..self.cases.len() {
            out.push_str(&format!(" | {:^8}", format!("Case {}", i + 1)));
        }
        out.push('\n');
        for (name, get) in rows {
            out.push_str(&format!("{name:<w$}"));
            for (c, _) in &self.cases {
                out.push_str(&format!(" | {:^8}", mark(get(c))));
            }
            out.push('\n');
        }
        let metrics: [MetricRow; 2] = [("PLCC", |r| r.plcc), ("SRCC", |r| r.srcc)];
        for (name, get) in metrics {
            out.push_str(&format!("{name:<w$}"));
            for (_, r) in &self.cases {
                out.push_str(&format!(" | {:^8}", format!("{:.3}", get(r))));
            }
            out.push('\n');
        }
        out
    }

    pub fn sweep_table(&self) -> String {
        let mut out = format!(
            "{:>5} {:>6} {:>6}  {:<15}  {:<15}\n",
            "M", "K", "N", "w/o scoring def", "with scoring def"
        );
        for ((m, k, n), without, with) in &self.sweep {
            out.push_str(&format!("{m:>5} {k:>6} {n:>6}  {:<15}  {:<15}\n", without.cell(), with.cell()));
        }
        out
    }

    pub fn report_table(&self) -> String {
        let rows: Vec<(String, EvalReport)> = self
            .cases
            .iter()
            .enumerate()
            .map(|(i, (_, r))| (format!("case {}", i + 1), r.clone()))
            .collect();
        format_table(&rows)
    }
}
