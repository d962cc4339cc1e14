use std::path::Path;

use ricesim_core::experiments::{
    run_experiment1, run_experiment2, ExperimentBody, ExperimentSettings, Ltc, RegionSubset, RunSummary, SubsetRegions,
};
use ricesim_core::policy::TrainBudget;
use ricesim_core::report::{read_report, render_tables, write_report, ReportFormat};
use ricesim_core::{Error, ExperimentResult, Model, SimConfig};

fn tiny(seeds: Vec<u64>) -> ExperimentSettings {
    ExperimentSettings {
        model: Model::default_27(),
        budget: TrainBudget {
            iterations: 1,
            population: 4,
            elite_fraction: 0.25,
            ..Default::default()
        },
        seeds,
        quantize_levels: None,
        subsets: SubsetRegions::default(),
    }
}

fn check_summary(s: &RunSummary, n: usize) {
    let mut ranks = s.ranks.clone();
    ranks.sort_unstable();
    assert_eq!(ranks, (0..n).collect::<Vec<_>>(), "{}", s.label);
    assert_eq!(s.region_rewards.len(), n);
    assert!(s.region_rewards.iter().all(|r| r.std >= 0.0));
    assert!(s.temperature_increase.std >= 0.0 && s.collective_reward.std >= 0.0);
    assert!(s.actions.mitigation_rate.std >= 0.0);
}

#[test]
fn experiment2_grid_is_complete_and_ordered() {
    let result = run_experiment2(&tiny(vec![3])).unwrap();
    let ExperimentBody::Experiment2(e) = &result.body else {
        panic!("wrong experiment")
    };
    assert_eq!(e.tests.len(), 8);
    let expected: Vec<(RegionSubset, bool)> = [false, true]
        .iter()
        .flat_map(|&on| RegionSubset::ALL.iter().map(move |&s| (s, on)))
        .collect();
    let got: Vec<(RegionSubset, bool)> = e.tests.iter().map(|t| (t.subset, t.negotiation_on)).collect();
    assert_eq!(got, expected);
    for t in &e.tests {
        let grid: Vec<Ltc> = t.subtests.iter().map(|s| s.ltc).collect();
        assert_eq!(grid, Ltc::grid());
        for s in &t.subtests {
            assert!(s.label.starts_with(&t.label));
            check_summary(s, 27);
        }
    }
    assert_eq!(e.deltas.len(), 4);
    assert!(e.deltas.iter().all(|d| d.per_ltc.len() == 9));
    assert!(result.metadata.notes.iter().any(|n| n.contains("labor grid")));
}

#[test]
fn experiment1_summaries_are_well_formed() {
    let result = run_experiment1(&tiny(vec![1, 2])).unwrap();
    let ExperimentBody::Experiment1(e) = &result.body else {
        panic!("wrong experiment")
    };
    check_summary(&e.no_nego, 27);
    check_summary(&e.nego, 27);
    assert_eq!(e.no_nego.seeds.len(), 2);
    assert_eq!(e.gains.len(), 27);
    assert!(e.rank_correlation.is_some_and(|r| (-1.0..=1.0).contains(&r)));
    assert_eq!(result.metadata.seeds, vec![1, 2]);
    assert_eq!(result.metadata.episodes, 2 * 2 * (1 + 5 + 1));
    let tables = render_tables(&result).unwrap();
    assert!(tables.contains(&result.metadata.config_hash));
}

fn round_trip(result: &ExperimentResult, format: ReportFormat, dir: &Path, name: &str) {
    let path = dir.join(name);
    write_report(result, format, &path).unwrap();
    let back = read_report(&path, format).unwrap();
    assert_eq!(&back, result, "{name}");
}

#[test]
fn reports_round_trip_through_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let e1 = run_experiment1(&tiny(vec![1])).unwrap();
    round_trip(&e1, ReportFormat::Json, dir.path(), "e1.json");
    round_trip(&e1, ReportFormat::Csv, dir.path(), "e1.csv");
    let e2 = run_experiment2(&tiny(vec![2])).unwrap();
    round_trip(&e2, ReportFormat::Csv, dir.path(), "e2.csv");
}

#[test]
fn empty_and_mismatched_reports_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut e1 = run_experiment1(&tiny(vec![1])).unwrap();
    if let ExperimentBody::Experiment1(e) = &mut e1.body {
        e.no_nego.seeds.clear();
        e.nego.seeds.clear();
    }
    let path = dir.path().join("empty.json");
    assert!(matches!(
        write_report(&e1, ReportFormat::Json, &path),
        Err(Error::EmptyResult)
    ));
    assert!(!path.exists());

    let bogus = dir.path().join("bogus.json");
    std::fs::write(&bogus, r#"{"schema_version": 99}"#).unwrap();
    assert!(read_report(&bogus, ReportFormat::Json).is_err());
}

#[test]
fn shipped_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/default.toml");
    let loaded = SimConfig::load(&path).unwrap();
    assert_eq!(loaded, SimConfig::default());
    assert_eq!(loaded.model().unwrap().hash(), Model::default_27().hash());

    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("copy.toml");
    loaded.save(&copy).unwrap();
    assert_eq!(SimConfig::load(&copy).unwrap(), loaded);
}

#[test]
fn settings_hash_follows_configuration() {
    let a = ExperimentSettings::from_config(&SimConfig::default()).unwrap();
    let mut cfg = SimConfig::default();
    cfg.training.iterations = 7;
    let b = ExperimentSettings::from_config(&cfg).unwrap();
    assert_eq!(
        a.hash(),
        ExperimentSettings::from_config(&SimConfig::default()).unwrap().hash()
    );
    assert_ne!(a.hash(), b.hash());
}
