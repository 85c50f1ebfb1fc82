use emogaze::features::{bin_label, SequenceLayout};
use emogaze::io::{Dataset, LabelDim, LoadOptions};
use emogaze::model::split::{stratified_split, SplitTable, DEFAULT_FRACTIONS};
use emogaze::model::train::{predict_all, train};
use emogaze::model::{build_examples, prepare_splits, InputVariant, ModelConfig};
use emogaze::pipeline::{run_pipeline, PipelineConfig};
use emogaze::synth::{generate_cohort, CohortSpec, PlantedEffects};
use emogaze::table::{read_features, read_sequences, write_features, write_sequences};
use emogaze::Net;

fn small_cohort(seed: u64) -> Dataset {
    let spec = CohortSpec {
        seed,
        n_participants: 8,
        trials_per_participant: 12,
        ..Default::default()
    };
    generate_cohort(&spec, &PlantedEffects::default()).unwrap()
}

#[test]
fn dataset_survives_disk() {
    let ds = small_cohort(1);
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    let back = Dataset::load(dir.path(), LoadOptions::default()).unwrap();
    assert_eq!(back.participants, ds.participants);
    assert_eq!(back.trials.len(), ds.trials.len());
    let cfg = PipelineConfig::default();
    let a = run_pipeline(&ds, &cfg).unwrap();
    let b = run_pipeline(&back, &cfg).unwrap();
    assert_eq!(a.features, b.features);
}

#[test]
fn tables_round_trip_and_feed_the_model() {
    let ds = small_cohort(2);
    let cfg = PipelineConfig::default();
    let out = run_pipeline(&ds, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (fp, sp) = (dir.path().join("features.csv"), dir.path().join("sequences.csv"));
    write_features(&out.features, &fp).unwrap();
    write_sequences(&out.sequences, &cfg.sequence, &sp).unwrap();
    let features = read_features(&fp).unwrap();
    let sequences = read_sequences(&sp, &cfg.sequence).unwrap();
    assert_eq!(features, out.features);
    assert_eq!(sequences.len(), out.sequences.len());

    let mut table = SplitTable {
        trial_ids: features.iter().map(|r| r.trial_id.clone()).collect(),
        by_label: Vec::new(),
    };
    for dim in LabelDim::ALL {
        let labels: Vec<usize> = features.iter().map(|r| bin_label(r.rating(dim) as i64).unwrap().index()).collect();
        table.by_label.push((dim, stratified_split(&labels, DEFAULT_FRACTIONS, 3).unwrap()));
    }
    let split_path = dir.path().join("split.csv");
    table.write(&split_path).unwrap();
    assert_eq!(SplitTable::read(&split_path).unwrap(), table);

    let examples = build_examples(&features, &sequences, LabelDim::FeltValence).unwrap();
    let prepared = prepare_splits(examples, table.get(LabelDim::FeltValence).unwrap(), &SequenceLayout::default()).unwrap();
    let config = ModelConfig {
        lstm_hidden: 4,
        max_epochs: 3,
        variant: InputVariant::EyePersonalityStimulus,
        ..Default::default()
    };
    let (net, log) = train(&config, &prepared.train, &prepared.validation).unwrap();
    assert!(log.best_epoch >= 1 && log.best_epoch <= 3);

    let ckpt = dir.path().join("model.txt");
    net.save(&ckpt).unwrap();
    let loaded = Net::load(&ckpt).unwrap();
    assert_eq!(predict_all(&loaded, &prepared.test).unwrap(), predict_all(&net, &prepared.test).unwrap());
}
