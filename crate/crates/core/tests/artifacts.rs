use rali_core::alignment::{load_adapter, save_adapter, train_alignment, AlignTrainConfig};
use rali_core::compression::{bucketed_kmeans, fit_pca, make_buckets, KMeansConfig};
use rali_core::dataset::{gen_synthetic, load_dataset, save_dataset, DatasetFormat, SyntheticSpec};
use rali_core::metrics::evaluate;
use rali_core::scoring::{finetune_scoring, load_model, save_model, ScoreFitConfig, ScoringModel};
use rali_core::ErrorKind;

fn corpus() -> (rali_core::dataset::EmbeddingDataset, rali_core::dataset::EmbeddingDataset) {
    gen_synthetic(&SyntheticSpec::new(600, 12, 21)).unwrap().split_at(450)
}

#[test]
fn datasets_survive_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = corpus();
    for (name, format) in [("d.rqe", DatasetFormat::Packed), ("d.jsonl", DatasetFormat::Jsonl)] {
        let path = dir.path().join(name);
        save_dataset(&train, &path, format).unwrap();
        let back = load_dataset(&path, DatasetFormat::from_path(&path)).unwrap();
        assert_eq!(back.dim(), train.dim());
        assert_eq!(back.records(), train.records());
        assert_eq!(back.meta["source"], path.display().to_string());
    }
}

#[test]
fn library_pipeline_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = corpus();

    let align = AlignTrainConfig { epochs: 2, batch_size: 64, seed: 1, ..AlignTrainConfig::default() };
    let mut adapter = train_alignment(&train, &align).unwrap().adapter;
    adapter.quantize_f32();
    save_adapter(&adapter, dir.path().join("a.rqa")).unwrap();
    assert_eq!(load_adapter(dir.path().join("a.rqa")).unwrap(), adapter);

    let pca = fit_pca(&train, Some(&adapter), 6).unwrap();
    let z: Vec<Vec<f64>> = train
        .records()
        .iter()
        .map(|r| pca.project(&adapter.apply(&r.image_emb).unwrap()).unwrap().into_inner())
        .collect();
    let spec = make_buckets(&train, 10, 20).unwrap();
    let fit = bucketed_kmeans(&z, &train.scores(), &spec, &KMeansConfig::default()).unwrap();
    assert_eq!(fit.basis.len(), 20);

    let init = ScoringModel::new(pca, fit.basis, Some(adapter)).unwrap();
    let cfg = ScoreFitConfig { epochs: 5, ..ScoreFitConfig::default() };
    let run = finetune_scoring(&init, &train, &cfg).unwrap();
    assert!(run.epoch_losses.last() < run.epoch_losses.first());

    let mut model = run.model;
    model.quantize_f32();
    let path = dir.path().join("m.rqm");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    for r in test.records() {
        assert_eq!(back.predict(&r.image_emb).unwrap().0, model.predict(&r.image_emb).unwrap().0);
    }
    let before = evaluate(&init, &test).unwrap();
    let after = evaluate(&back, &test).unwrap();
    assert_eq!(after.n, test.len());
    assert!(after.plcc > 0.5, "{after:?}");
    assert!(after.mse < before.mse, "{before:?} -> {after:?}");
}

#[test]
fn truncated_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = corpus();
    let path = dir.path().join("d.rqe");
    save_dataset(&train, &path, DatasetFormat::Packed).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let err = load_dataset(&path, DatasetFormat::Packed).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Validation);

    let missing = load_model(dir.path().join("nope.rqm")).unwrap_err();
    assert_eq!(missing.kind(), ErrorKind::Io);
}
