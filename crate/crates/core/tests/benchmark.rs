use predtown_core::config::PipelineConfig;
use predtown_core::cube::{build_dataset, CrimeTaxonomy, NormalizeScope};
use predtown_core::ingest::CleanIncident;
use predtown_core::models::Family;
use predtown_core::report::{run_benchmark, split_and_scale};
use predtown_core::synthgen::{generate, write_incidents, GenConfig};

fn small_gen() -> GenConfig {
    GenConfig { n_neighborhoods: 30, end: "2016-12".into(), seed: 4, ..GenConfig::default() }
}

#[test]
fn train_fit_clamps_test_rows() {
    let g = generate(&small_gen()).unwrap();
    let incidents: Vec<CleanIncident> = g
        .incidents
        .iter()
        .map(|i| CleanIncident { occurrence_date: i.date, crime_type: i.crime_type.clone(), neighborhood: i.neighborhood.clone() })
        .collect();
    let raw = build_dataset::<f64>(&incidents, &CrimeTaxonomy::standard(), None).dataset;
    let clamped = split_and_scale(&raw, NormalizeScope::TrainFit, true, 0.7, true, 1).unwrap();
    assert!(clamped.test.rows.iter().flat_map(|r| &r.features).all(|&v| (0.0..=1.0).contains(&v)));
    let open = split_and_scale(&raw, NormalizeScope::TrainFit, false, 0.7, true, 1).unwrap();
    assert_eq!(open.train, clamped.train);
    assert!(open.test.rows.iter().flat_map(|r| &r.features).any(|&v| !(0.0..=1.0).contains(&v)));
    let full = split_and_scale(&raw, NormalizeScope::Full, true, 0.7, true, 1).unwrap();
    assert_eq!(full.split, clamped.split);
}

#[test]
fn reused_folds_reproduce_tuning_scores() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    write_incidents(std::fs::File::create(&raw).unwrap(), &generate(&small_gen()).unwrap().incidents).unwrap();
    let mut config = PipelineConfig::from_toml("[grids.dtree]\nmax_depth = [2, 4]\n").unwrap();
    config.benchmark.incidents = vec![raw];
    config.benchmark.out_dir = dir.path().join("out");
    config.benchmark.families = vec![Family::Dtree, Family::Gnb];
    config.benchmark.k = 4;
    config.benchmark.reuse_tuning_folds = true;
    config.benchmark.shuffle_control = false;
    let outcome = run_benchmark::<f64>(&config).unwrap();
    for m in &outcome.report.models {
        let tune: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("out/tune/{}.json", m.family))).unwrap()).unwrap();
        let per_fold: Vec<f64> = serde_json::from_value(tune["per_fold_auc"].clone()).unwrap();
        assert_eq!(m.cv_auc.len(), 4);
        assert!(m.control_accuracy.is_none());
        // Neither family draws random numbers here, so the same folds give the same scores.
        assert_eq!(m.cv_auc, per_fold, "{}", m.family);
    }
}
