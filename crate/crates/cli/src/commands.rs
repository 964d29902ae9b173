use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rali_core::alignment::{decode_adapter, encode_adapter, load_adapter, ADAPTER_MAGIC};
use rali_core::dataset::{
    decode_packed, gen_synthetic, load_dataset, save_dataset, DatasetFormat, EmbeddingDataset, SyntheticSpec,
    MAX_SCORE, MIN_SCORE, PACKED_MAGIC,
};
use rali_core::metrics::format_table;
use rali_core::scoring::{decode_model, encode_model, load_model, ScoringModel, MODEL_MAGIC};
use rali_core::Error;
use serde_json::json;

use crate::config::{resolve_data_path, PipelineConfig};
use crate::error::{CliError, StageExt};
use crate::stages::{self, sha256_hex};
use crate::{Cli, Command};

fn core_io(path: &Path, e: Error) -> CliError {
    match e {
        Error::Io(source) => CliError::io(path, source),
        other => CliError::Stage {
            stage: "load",
            source: other,
        },
    }
}

pub fn load_data(path: &Path) -> Result<EmbeddingDataset, CliError> {
    load_dataset(path, DatasetFormat::from_path(path)).map_err(|e| core_io(path, e))
}

fn load_scoring_model(path: &Path) -> Result<ScoringModel, CliError> {
    load_model(path).map_err(|e| core_io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String, CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(bytes))
}

fn require(path: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
    path.ok_or_else(|| CliError::Config(format!("no {key} dataset given (use --{key} or the `{key}` key)")))
}

fn emit(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

/// Config overrides contributed by command-line flags, applied last.
fn flag_overrides(cli: &Cli) -> Vec<(String, String)> {
    let mut o = cli.overrides.clone();
    let mut set = |k: &str, v: String| o.push((k.to_string(), v));
    if let Some(s) = cli.seed {
        set("seed", s.to_string());
    }
    match &cli.command {
        Command::GenSynth {
            n,
            dim,
            noise_sigma,
            text_seeds,
            holdout,
            ..
        } => {
            n.map(|v| set("n", v.to_string()));
            dim.map(|v| set("dim", v.to_string()));
            noise_sigma.map(|v| set("noise_sigma", v.to_string()));
            text_seeds.map(|v| set("text_seeds", v.to_string()));
            holdout.map(|v| set("holdout", v.to_string()));
        }
        Command::Align {
            data,
            no_seed_augmentation,
            ..
        } => {
            if let Some(p) = &data.train {
                set("train", p.display().to_string());
            }
            if *no_seed_augmentation {
                set("align.seed_augmentation", "false".into());
            }
        }
        Command::Pca { data, m, skip_pca, .. } => {
            if let Some(p) = &data.train {
                set("train", p.display().to_string());
            }
            m.map(|v| set("pca.m", v.to_string()));
            if *skip_pca {
                set("pca.enabled", "false".into());
            }
        }
        Command::Cluster {
            data,
            k,
            buckets,
            plain_kmeans,
            ..
        } => {
            if let Some(p) = &data.train {
                set("train", p.display().to_string());
            }
            k.map(|v| set("kmeans.k", v.to_string()));
            buckets.map(|v| set("kmeans.buckets", v.to_string()));
            if *plain_kmeans {
                set("kmeans.bucketed", "false".into());
            }
        }
        Command::Finetune { data, .. } => {
            if let Some(p) = &data.train {
                set("train", p.display().to_string());
            }
        }
        Command::Pipeline {
            data,
            test,
            out_dir,
            skip_align,
            skip_pca,
            plain_kmeans,
            no_seed_augmentation,
            skip_finetune,
        } => {
            if let Some(p) = &data.train {
                set("train", p.display().to_string());
            }
            if let Some(p) = test {
                set("test", p.display().to_string());
            }
            if let Some(p) = out_dir {
                set("out_dir", p.display().to_string());
            }
            // the no-alignment arm also drops seed augmentation, as in the
            // first ablation case
            if *skip_align {
                set("align.enabled", "false".into());
                set("align.seed_augmentation", "false".into());
            }
            if *skip_pca {
                set("pca.enabled", "false".into());
            }
            if *plain_kmeans {
                set("kmeans.bucketed", "false".into());
            }
            if *no_seed_augmentation {
                set("align.seed_augmentation", "false".into());
            }
            if *skip_finetune {
                set("finetune.enabled", "false".into());
            }
        }
        Command::Ablate {
            data,
            test,
            sweep_m,
            sweep_k,
            sweep_n,
        } => {
            if let Some(p) = &data.train {
                set("train", p.display().to_string());
            }
            if let Some(p) = test {
                set("test", p.display().to_string());
            }
            for (key, v) in [("sweep.m", sweep_m), ("sweep.k", sweep_k), ("sweep.n", sweep_n)] {
                if let Some(v) = v {
                    set(key, v.clone());
                }
            }
        }
        Command::Eval { logistic: true, .. } => set("eval.logistic", "true".into()),
        _ => {}
    }
    o
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), &flag_overrides(cli))?;
    match &cli.command {
        Command::GenSynth { out: path, test_out, .. } => gen_synth(&cfg, path, test_out.as_deref(), out),
        Command::Align { out: path, .. } => {
            let train = load_data(&require(cfg.train.clone(), "train")?)?;
            let adapter = stages::stage_align(&cfg.with(&[("align.enabled", "true".into())])?, &train)?
                .expect("alignment enabled");
            let hash = write_file(path, &encode_adapter(&adapter))?;
            emit(
                out,
                json!({"artifact": path, "sha256": hash, "seed": stages::align_seed(&cfg),
                       "temperature": adapter.temperature()})
                .to_string(),
            )
        }
        Command::Pca { adapter, out: path, .. } => {
            let train = load_data(&require(cfg.train.clone(), "train")?)?;
            let adapter = match adapter {
                Some(p) => Some(load_adapter(p).map_err(|e| core_io(p, e))?),
                None => None,
            };
            let model = stages::stage_pca(&cfg, &train, adapter)?;
            let hash = write_file(path, &encode_model(&model))?;
            emit(
                out,
                json!({"artifact": path, "sha256": hash, "input_dim": model.input_dim(),
                       "output_dim": model.basis_dim(),
                       "eigenvalues": model.pca.eigenvalues.as_slice()})
                .to_string(),
            )
        }
        Command::Cluster { model, out: path, .. } => {
            let train = load_data(&require(cfg.train.clone(), "train")?)?;
            let base = load_scoring_model(model)?;
            let init = stages::stage_cluster(&cfg, &train, &base)?;
            let hash = write_file(path, &encode_model(&init))?;
            emit(
                out,
                json!({"artifact": path, "sha256": hash, "k": init.k(), "seed": cfg.seed}).to_string(),
            )
        }
        Command::Finetune { model, out: path, .. } => {
            let train = load_data(&require(cfg.train.clone(), "train")?)?;
            let init = load_scoring_model(model)?;
            let tuned = stages::stage_finetune(&cfg.with(&[("finetune.enabled", "true".into())])?, &train, &init)?;
            let hash = write_file(path, &encode_model(&tuned))?;
            emit(
                out,
                json!({"artifact": path, "sha256": hash, "seed": stages::finetune_seed(&cfg)}).to_string(),
            )
        }
        Command::Pipeline { .. } => {
            let train = load_data(&require(cfg.train.clone(), "train")?)?;
            let test = load_data(&require(cfg.test.clone(), "test")?)?;
            let dir = cfg
                .out_dir
                .clone()
                .ok_or_else(|| CliError::Config("no output directory (use --out-dir or `out_dir`)".into()))?;
            let outcome = stages::run_pipeline(&cfg, &train, &test, Some(&dir))?;
            emit(out, outcome.report.to_json_line())?;
            emit(out, format_table(&[("pipeline".into(), outcome.report)]))
        }
        Command::Ablate { .. } => {
            let train = load_data(&require(cfg.train.clone(), "train")?)?;
            let test = load_data(&require(cfg.test.clone(), "test")?)?;
            let result = stages::run_ablation(&cfg, &train, &test)?;
            for (i, (_, r)) in result.cases.iter().enumerate() {
                emit(out, json!({"case": i + 1, "report": r}).to_string())?;
            }
            emit(out, result.case_table())?;
            if !result.sweep.is_empty() {
                emit(out, result.sweep_table())?;
            }
            Ok(())
        }
        Command::Score { model, data, out: path } => {
            let model = load_scoring_model(model)?;
            let data_path = resolve_data_path(&data.display().to_string()).unwrap_or_else(|| data.clone());
            let ds = load_data(&data_path)?;
            let lines = score_lines(&model, &ds)?;
            match path {
                Some(p) => {
                    write_file(p, lines.as_bytes())?;
                    Ok(())
                }
                None => out.write_all(lines.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
            }
        }
        Command::Eval { model, data, .. } => {
            let model = load_scoring_model(model)?;
            let data_path = resolve_data_path(&data.display().to_string()).unwrap_or_else(|| data.clone());
            let ds = load_data(&data_path)?;
            check_dims(&model, &ds, "eval")?;
            let report = stages::stage_eval(&cfg, &model, &ds)?;
            emit(out, report.to_json_line())?;
            emit(out, format_table(&[(data_path.display().to_string(), report)]))
        }
        Command::Inspect { path } => emit(out, inspect(path)?),
    }
}

fn gen_synth(cfg: &PipelineConfig, path: &Path, test_out: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    if cfg.holdout > 0 && test_out.is_none() {
        return Err(CliError::Config("--holdout needs --test-out".into()));
    }
    let spec = SyntheticSpec {
        n: cfg.n + cfg.holdout,
        dim: cfg.dim,
        seed: cfg.seed,
        noise_sigma: cfg.noise_sigma,
        n_text_seeds: cfg.text_seeds,
    };
    let all = gen_synthetic(&spec).stage("gen-synth")?;
    let (train, test) = all.split_at(cfg.n);
    let mut written = vec![(path, train)];
    if let Some(p) = test_out {
        written.push((p, test));
    }
    for (p, ds) in written {
        save_dataset(&ds, p, DatasetFormat::from_path(p)).map_err(|e| core_io(p, e))?;
        let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
        let scores = ds.scores();
        let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
        emit(
            out,
            json!({"artifact": p, "records": ds.len(), "dim": ds.dim(), "seed": cfg.seed,
                   "noise_sigma": cfg.noise_sigma, "text_seeds": cfg.text_seeds,
                   "mean_score": mean, "sha256": sha256_hex(&bytes)})
            .to_string(),
        )?;
    }
    Ok(())
}

fn check_dims(model: &ScoringModel, ds: &EmbeddingDataset, stage: &'static str) -> Result<(), CliError> {
    if model.input_dim() != ds.dim() {
        return Err(CliError::Stage {
            stage,
            source: Error::Dim {
                expected: model.input_dim(),
                got: ds.dim(),
            },
        });
    }
    Ok(())
}

/// One JSON line per record with the clamped score and the five largest
/// weights. Everything is computed before anything is returned.
pub fn score_lines(model: &ScoringModel, ds: &EmbeddingDataset) -> Result<String, CliError> {
    check_dims(model, ds, "score")?;
    let t = Instant::now();
    let mut text = String::new();
    for r in ds.records() {
        let (s, w) = model.predict(&r.image_emb).map_err(|e| e.for_record(&r.id)).stage("score")?;
        let mut idx: Vec<usize> = (0..w.dim()).collect();
        idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
        let top: Vec<_> = idx.iter().take(5).map(|&i| json!({"index": i, "weight": w[i]})).collect();
        text.push_str(&json!({"id": r.id, "score": s.clamp(MIN_SCORE, MAX_SCORE), "top": top}).to_string());
        text.push('\n');
    }
    if !ds.is_empty() {
        info!(
            "scored {} images, {:.1} µs per image",
            ds.len(),
            t.elapsed().as_secs_f64() * 1e6 / ds.len() as f64
        );
    }
    Ok(text)
}

fn inspect(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let hash = sha256_hex(&bytes);
    let magic = bytes.get(..4).unwrap_or(&[]);
    let v = if magic == PACKED_MAGIC {
        let ds = decode_packed(&bytes).stage("inspect")?;
        dataset_summary("RQE1", &ds)
    } else if magic == ADAPTER_MAGIC {
        let a = decode_adapter(&bytes).stage("inspect")?;
        json!({"format": "RQA1", "dim": a.dim(), "temperature": a.temperature()})
    } else if magic == MODEL_MAGIC {
        let m = decode_model(&bytes).stage("inspect")?;
        let (lo, hi) = m
            .basis
            .scores
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &s| (l.min(s), h.max(s)));
        json!({"format": "RQM1", "input_dim": m.input_dim(), "output_dim": m.basis_dim(), "k": m.k(),
               "adapter": m.adapter.is_some(), "softmax_scale": m.softmax_scale,
               "scale_trained": m.scale_trained,
               "score_range": if m.k() > 0 { json!([lo, hi]) } else { json!(null) }})
    } else {
        let ds = load_dataset(path, DatasetFormat::Jsonl).map_err(|e| core_io(path, e))?;
        dataset_summary("jsonl", &ds)
    };
    let mut v = v;
    v["path"] = json!(path);
    v["sha256"] = json!(hash);
    Ok(v.to_string())
}

fn dataset_summary(format: &str, ds: &EmbeddingDataset) -> serde_json::Value {
    let scores = ds.scores();
    let texts: usize = ds.records().iter().map(|r| r.text_embs.len()).sum();
    json!({"format": format, "records": ds.len(), "dim": ds.dim(), "text_embeddings": texts,
           "score_min": scores.iter().copied().fold(f64::INFINITY, f64::min),
           "score_max": scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)})
}
