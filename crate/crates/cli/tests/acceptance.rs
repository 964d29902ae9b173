//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rali_cli::{run_pipeline, PipelineConfig, ABLATION_CASES};
use rali_core::alignment::{contrastive_loss, AlignmentAdapter};
use rali_core::compression::{
    bucketed_kmeans, fit_pca_points, kmeans, kmeans_restarts, make_buckets, BasisSet, KMeansConfig, PcaModel,
};
use rali_core::dataset::{gen_synthetic, SyntheticSpec};
use rali_core::metrics::{plcc, srcc};
use rali_core::numcore::{DenseMatrix, DenseVector, Rng};
use rali_core::scoring::{encode_model, score_gradients, ScoringModel};
use rali_oracles::{central_difference, exhaustive_kmeans_optimum, max_relative_error};
use sha2::{Digest, Sha256};

const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const GRADIENT_BUDGET: Duration = Duration::from_secs(10);
const EXACT_TOL: f64 = 1e-12;
const PCA_TOL: f64 = 1e-8;
const INVARIANCE_TOL: f64 = 1e-10;
const OPTIMUM_MATCH_RATE: f64 = 0.95;
const E2E_BUDGET: Duration = Duration::from_secs(60);
const E2E_MIN_PLCC: f64 = 0.90;
const E2E_MIN_SRCC: f64 = 0.88;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normals(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

fn random_adapter(rng: &mut Rng, d: usize) -> AlignmentAdapter {
    let mut a = AlignmentAdapter::identity(d, 0.07).unwrap();
    for w in a.weight.as_mut_slice() {
        *w += 0.3 * rng.normal();
    }
    a.bias = DenseVector::new(normals(rng, d, 0.1)).unwrap();
    a.log_temperature = rng.uniform(0.1f64.ln(), 1.0f64.ln());
    a
}

fn random_model(rng: &mut Rng, d: usize, m: usize, k: usize) -> ScoringModel {
    let pca = PcaModel {
        mean: DenseVector::new(normals(rng, d, 1.0)).unwrap(),
        projection: DenseMatrix::new(d, m, normals(rng, d * m, 1.0)).unwrap(),
        eigenvalues: DenseVector::zeros(m),
    };
    let basis = BasisSet {
        centroids: (0..k).map(|_| DenseVector::new(normals(rng, m, 1.0)).unwrap()).collect(),
        scores: (0..k).map(|_| rng.uniform(1.0, 5.0)).collect(),
        bucket_of: (0..k).collect(),
    };
    let adapter = random_adapter(rng, d);
    let mut model = ScoringModel::new(pca, basis, Some(adapter)).unwrap();
    model.softmax_scale = rng.uniform(0.5, 2.5);
    model
}

fn adapter_params(a: &AlignmentAdapter) -> Vec<f64> {
    let mut p = a.weight.as_slice().to_vec();
    p.extend_from_slice(a.bias.as_slice());
    p.push(a.log_temperature);
    p
}

fn model_params(m: &ScoringModel) -> Vec<f64> {
    let mut p: Vec<f64> = m.basis.centroids.iter().flat_map(|c| c.as_slice().to_vec()).collect();
    p.extend_from_slice(&m.basis.scores);
    p.push(m.softmax_scale);
    p.extend_from_slice(m.pca.projection.as_slice());
    p
}

fn with_model_params(m: &ScoringModel, p: &[f64]) -> ScoringModel {
    let mut out = m.clone();
    let mut it = p.iter().copied();
    for c in &mut out.basis.centroids {
        c.as_mut_slice().iter_mut().for_each(|v| *v = it.next().unwrap());
    }
    out.basis.scores.iter_mut().for_each(|v| *v = it.next().unwrap());
    out.softmax_scale = it.next().unwrap();
    out.pca.projection.as_mut_slice().iter_mut().for_each(|v| *v = it.next().unwrap());
    out
}

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let mut rng = Rng::new(11);
    let mut worst_contrastive: f64 = 0.0;
    for _ in 0..25 {
        let (d, b) = (2 + rng.below(5), 2 + rng.below(6));
        let adapter = random_adapter(&mut rng, d);
        let xs: Vec<DenseVector> = (0..b).map(|_| DenseVector::new(normals(&mut rng, d, 1.0)).unwrap()).collect();
        let ts: Vec<DenseVector> = (0..b).map(|_| DenseVector::new(normals(&mut rng, d, 1.0)).unwrap()).collect();
        let batch: Vec<_> = xs.iter().zip(&ts).collect();
        let analytic = contrastive_loss(&adapter, &batch).unwrap().gradients.flatten();
        let numeric = central_difference(
            |p| {
                let a = AlignmentAdapter {
                    weight: DenseMatrix::new(d, d, p[..d * d].to_vec()).unwrap(),
                    bias: DenseVector::new(p[d * d..d * d + d].to_vec()).unwrap(),
                    log_temperature: p[d * d + d],
                };
                contrastive_loss(&a, &batch).unwrap().loss
            },
            &adapter_params(&adapter),
            FD_STEP,
        );
        worst_contrastive = worst_contrastive.max(max_relative_error(&analytic, &numeric));
    }

    let mut worst_scoring: f64 = 0.0;
    for _ in 0..25 {
        let (d, m, k) = (3 + rng.below(4), 2 + rng.below(3), 1 + rng.below(6));
        let model = random_model(&mut rng, d, m, k);
        let x = DenseVector::new(normals(&mut rng, d, 1.0)).unwrap();
        let s = rng.uniform(1.0, 5.0);
        let g = score_gradients(&model, &x, s).unwrap();
        let mut analytic: Vec<f64> = g.centroids.iter().flatten().copied().collect();
        analytic.extend_from_slice(&g.scores);
        analytic.push(g.scale);
        analytic.extend_from_slice(&g.projection);
        let numeric = central_difference(
            |p| {
                let (y, _) = with_model_params(&model, p).predict(&x).unwrap();
                0.5 * (y - s) * (y - s)
            },
            &model_params(&model),
            FD_STEP,
        );
        worst_scoring = worst_scoring.max(max_relative_error(&analytic, &numeric));
    }
    let elapsed = t.elapsed();
    check(
        worst_contrastive < FD_REL_TOL && worst_scoring < FD_REL_TOL && elapsed < GRADIENT_BUDGET,
        format!(
            "25+25 models, max rel err contrastive {worst_contrastive:.2e}, scoring {worst_scoring:.2e}, {elapsed:.2?}"
        ),
    )
}

fn scoring_exactness() -> Outcome {
    let basis = BasisSet {
        centroids: vec![DenseVector::new(vec![1.0, 0.0]).unwrap(), DenseVector::new(vec![-1.0, 0.0]).unwrap()],
        scores: vec![5.0, 1.0],
        bucket_of: vec![0, 1],
    };
    let model = ScoringModel::new(PcaModel::identity(2), basis, None).unwrap();
    let (y, _) = model.predict(&DenseVector::new(vec![1.0, 0.0]).unwrap()).unwrap();
    let hand_err = (y - 4.523188311911529).abs();

    let mut rng = Rng::new(12);
    let mut worst_sum: f64 = 0.0;
    for _ in 0..100 {
        let (d, m, k) = (2 + rng.below(8), 1 + rng.below(4), 1 + rng.below(20));
        let model = random_model(&mut rng, d, m, k);
        for _ in 0..100 {
            let x = DenseVector::new(normals(&mut rng, d, 1.0)).unwrap();
            let (_, w) = model.predict(&x).unwrap();
            worst_sum = worst_sum.max((w.as_slice().iter().sum::<f64>() - 1.0).abs());
        }
    }
    check(
        hand_err <= EXACT_TOL && worst_sum <= EXACT_TOL,
        format!("two-basis error {hand_err:.1e}, worst |sum w - 1| {worst_sum:.1e} over 10000 predictions"),
    )
}

fn convex_bound() -> Outcome {
    let mut rng = Rng::new(13);
    let mut violations = 0;
    for _ in 0..1000 {
        let (d, m, k) = (2 + rng.below(8), 1 + rng.below(4), 1 + rng.below(30));
        let model = random_model(&mut rng, d, m, k);
        let lo = model.basis.scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = model.basis.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..100 {
            let x = DenseVector::new(normals(&mut rng, d, 3.0)).unwrap();
            let (y, _) = model.predict(&x).unwrap();
            if !(lo <= y && y <= hi) {
                violations += 1;
            }
        }
    }
    check(violations == 0, format!("{violations} violations over 100000 predictions"))
}

fn kmeans_oracle() -> Outcome {
    let mut rng = Rng::new(14);
    let (mut beaten, mut matched, mut trace_violations) = (0, 0, 0);
    for instance in 0..100u64 {
        let n = 2 + rng.below(7);
        let k = 1 + rng.below(3.min(n));
        let points: Vec<Vec<f64>> = (0..n).map(|_| normals(&mut rng, 2, 1.0)).collect();
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        let optimum = exhaustive_kmeans_optimum(&points, k);
        let cfg = KMeansConfig { seed: instance, ..KMeansConfig::default() };
        let fit = kmeans_restarts(&refs, k, &mut Rng::new(instance), &cfg).unwrap();
        let sse = fit.objective(&refs);
        let slack = 1e-9 * (1.0 + optimum);
        if sse < optimum - slack {
            beaten += 1;
        }
        if (sse - optimum).abs() <= slack {
            matched += 1;
        }
        let single = kmeans(&refs, k, &mut Rng::new(instance), cfg.max_iters, cfg.tol).unwrap();
        for trace in [&fit.objective_trace, &single.objective_trace] {
            trace_violations += trace.windows(2).filter(|w| w[1] > w[0] + 1e-12 * (1.0 + w[0])).count();
        }
    }
    let rate = matched as f64 / 100.0;
    check(
        beaten == 0 && rate >= OPTIMUM_MATCH_RATE && trace_violations == 0,
        format!("oracle beaten {beaten}, matched {matched}/100, objective increases {trace_violations}"),
    )
}

fn bucketing_contract() -> Outcome {
    let ds = gen_synthetic(&SyntheticSpec::new(5000, 64, 15)).unwrap();
    let spec = make_buckets(&ds, 240, 250).unwrap();
    let total: usize = spec.allocation.iter().sum();
    let uncovered = spec
        .populations
        .iter()
        .zip(&spec.allocation)
        .filter(|(&p, &a)| p > 0 && a == 0)
        .count();
    let embeddings: Vec<Vec<f64>> = ds.records().iter().map(|r| r.image_emb.as_slice().to_vec()).collect();
    let fit = bucketed_kmeans(&embeddings, &ds.scores(), &spec, &KMeansConfig { seed: 15, ..KMeansConfig::default() })
        .unwrap();
    let outside = fit
        .basis
        .scores
        .iter()
        .zip(&fit.basis.bucket_of)
        .filter(|(&f, &b)| {
            let (lo, hi) = spec.interval(b);
            !(lo <= f && f <= hi)
        })
        .count();
    check(
        total == 250 && uncovered == 0 && outside == 0 && fit.basis.len() == 250,
        format!(
            "sum k_n = {total}, nonempty buckets without centroid {uncovered}, scores outside interval {outside}"
        ),
    )
}

fn pca_identities() -> Outcome {
    let mut rng = Rng::new(16);
    let scales: Vec<f64> = (0..64).map(|j| 3.0 * 0.92f64.powi(j)).collect();
    let points: Vec<Vec<f64>> = (0..200)
        .map(|_| scales.iter().map(|s| s * rng.normal() + 0.5).collect())
        .collect();
    let full = fit_pca_points(&points, 64).unwrap();
    let mut worst_ortho: f64 = 0.0;
    let mut worst_recon: f64 = 0.0;
    for m in [1, 8, 20, 32, 63] {
        let pca = fit_pca_points(&points, m).unwrap();
        let u = &pca.projection;
        for a in 0..m {
            for b in 0..m {
                let g: f64 = (0..64).map(|r| u.get(r, a) * u.get(r, b)).sum();
                worst_ortho = worst_ortho.max((g - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        let mse: f64 = points
            .iter()
            .map(|p| {
                let x = DenseVector::new(p.clone()).unwrap();
                let back = pca.reconstruct(&pca.project(&x).unwrap()).unwrap();
                p.iter().zip(back.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum::<f64>()
            / points.len() as f64;
        let discarded: f64 = full.eigenvalues.as_slice()[m..].iter().sum();
        worst_recon = worst_recon.max((mse - discarded).abs());
    }
    check(
        worst_ortho <= PCA_TOL && worst_recon <= PCA_TOL,
        format!("max |UᵀU - I| {worst_ortho:.1e}, max |recon error - discarded| {worst_recon:.1e}"),
    )
}

fn metric_correctness() -> Outcome {
    let examples = [
        (plcc(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), 1.0),
        (plcc(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]), 0.9897433186107870),
        (plcc(&[1.0, 2.0], &[2.0, 1.0]), -1.0),
        (srcc(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]), 1.0),
        (srcc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0),
        (srcc(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]), 0.8660254037844387),
    ];
    let worst_example = examples.iter().map(|(got, want)| (got.as_ref().unwrap() - want).abs()).fold(0.0, f64::max);

    let mut rng = Rng::new(17);
    let mut worst_inv: f64 = 0.0;
    for _ in 0..1000 {
        let n = 3 + rng.below(60);
        let a = normals(&mut rng, n, 1.0);
        let b: Vec<f64> = a.iter().map(|v| v + rng.normal()).collect();
        let (scale, shift) = (rng.uniform(0.01, 100.0), rng.uniform(-50.0, 50.0));
        let affine: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
        let mono: Vec<f64> = a.iter().map(|v| v.exp() + v * v * v).collect();
        let p = plcc(&a, &b).unwrap();
        let s = srcc(&a, &b).unwrap();
        worst_inv = worst_inv
            .max((plcc(&affine, &b).unwrap() - p).abs())
            .max((srcc(&affine, &b).unwrap() - s).abs())
            .max((srcc(&mono, &b).unwrap() - s).abs());
    }
    check(
        worst_example <= EXACT_TOL && worst_inv <= INVARIANCE_TOL,
        format!("worst example error {worst_example:.1e}, worst invariance drift {worst_inv:.1e} over 1000 sequences"),
    )
}

fn e2e_config() -> PipelineConfig {
    let set = |k: &str, v: &str| (k.to_string(), v.to_string());
    PipelineConfig::load(
        None,
        &[
            set("seed", "7"),
            set("n", "2000"),
            set("holdout", "500"),
            set("dim", "64"),
            set("noise_sigma", "0.05"),
            set("pca.m", "32"),
            set("kmeans.k", "50"),
            set("kmeans.buckets", "48"),
        ],
    )
    .unwrap()
}

fn sha(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// End-to-end run plus the determinism rerun, both on one worker thread.
fn end_to_end() -> (Outcome, Outcome) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let cfg = e2e_config();
        let t = Instant::now();
        let spec = SyntheticSpec {
            n: cfg.n + cfg.holdout,
            dim: cfg.dim,
            seed: cfg.seed,
            noise_sigma: cfg.noise_sigma,
            n_text_seeds: cfg.text_seeds,
        };
        let (train, test) = gen_synthetic(&spec).unwrap().split_at(cfg.n);
        let full = run_pipeline(&cfg, &train, &test, None).unwrap();
        let elapsed = t.elapsed();

        let no_finetune = ABLATION_CASES[4];
        assert!(!no_finetune.scoring_definition);
        let arm = run_pipeline(&no_finetune.apply(&cfg).unwrap(), &train, &test, None).unwrap();

        let r = &full.report;
        let e2e = check(
            r.plcc >= E2E_MIN_PLCC && r.srcc >= E2E_MIN_SRCC && elapsed < E2E_BUDGET && arm.report.plcc < r.plcc,
            format!(
                "held-out PLCC {:.4} SRCC {:.4} in {elapsed:.2?} on 1 thread; without scoring definition PLCC {:.4}",
                r.plcc, r.srcc, arm.report.plcc
            ),
        );

        let again = run_pipeline(&cfg, &train, &test, None).unwrap();
        let (h1, h2) = (sha(&encode_model(&full.model)), sha(&encode_model(&again.model)));
        let det = check(h1 == h2, format!("model sha256 {} vs {}", &h1[..16], &h2[..16]));
        (e2e, det)
    })
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    };
    report("gradient fidelity", gradient_fidelity());
    report("scoring exactness", scoring_exactness());
    report("convex combination bound", convex_bound());
    report("k-means oracle", kmeans_oracle());
    report("bucketing contract", bucketing_contract());
    report("PCA identities", pca_identities());
    let (e2e, det) = end_to_end();
    report("end-to-end synthetic", e2e);
    report("metric correctness", metric_correctness());
    report("determinism", det);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
