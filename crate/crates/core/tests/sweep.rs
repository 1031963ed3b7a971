mod common;

use common::tiny_config;
use lsa_core::config::Config;
use lsa_core::model::ParamFilter;
use lsa_core::plan::{parse_placements, table_label};
use lsa_core::train::sweep::sweep;
use lsa_core::train::{train, TrainSettings};

#[test]
fn single_cell_matches_its_run() {
    let cfg = tiny_config("seeds=4");
    let data = cfg.dataset().unwrap();
    let places = parse_placements("S3:B1").unwrap();
    let table = sweep(&cfg, std::slice::from_ref(&places), false, &data).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    assert_eq!(row.label, "SA (S: 3 - B: 1)");
    let (seed, cell) = &row.runs[0];
    assert_eq!(*seed, 4);

    let mut solo = cfg.clone();
    solo.plan.placements = places;
    solo.seed = 4;
    let mut model = solo.build_model(&data).unwrap();
    let out = train(&mut model, &data, &TrainSettings::from_config(&solo), &solo.hash()).unwrap();
    assert_eq!(cell.as_ref().unwrap().to_text(false), out.report.to_text(false));
    assert_eq!(row.mean_accuracy(), out.report.final_eval().map(|e| e.tally.accuracy()));
    assert!(table.to_text().contains(&format!("config_hash={}", cfg.hash())));
}

#[test]
fn baseline_row_comes_first_and_counts_follow_placements() {
    let mut cfg = Config::default();
    cfg.apply_text("epochs=0\ntrain_count=16\neval_count=8\nseeds=1,2").unwrap();
    let data = cfg.dataset().unwrap();
    let sets = [parse_placements("S3:B3").unwrap(), parse_placements("S3:B1,2,3").unwrap()];
    let table = sweep(&cfg, &sets, true, &data).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert_eq!(table.rows[0].label, "Baseline (No SA)");
    assert_eq!(table.rows[0].params_sa, 0);
    for row in &table.rows[1..] {
        let expect = 5_120 * row.placements.len();
        assert_eq!(row.params_sa, expect, "{}", row.label);
        assert_eq!(row.runs.len(), 2);
        let mut c = cfg.clone();
        c.plan.placements = row.placements.clone();
        let m = c.build_model(&data).unwrap();
        assert_eq!(m.count_parameters(ParamFilter::SaOnly), row.params_sa);
        assert_eq!(row.label, table_label(&row.placements));
    }
}

#[test]
fn rows_are_sorted_and_failures_marked() {
    let cfg = tiny_config("epochs=1\nseeds=1");
    let data = cfg.dataset().unwrap();
    let sets = [parse_placements("S3:B1").unwrap(), parse_placements("S2:B1").unwrap()];
    let table = sweep(&cfg, &sets, true, &data).unwrap();
    let means: Vec<f64> = table.rows[1..].iter().map(|r| r.mean_accuracy().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] >= w[1]));

    let broken = tiny_config("lr=1e300\nepochs=2\nseeds=1,2");
    let table = sweep(&broken, &sets[..1], true, &data).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table.rows.iter().all(|r| r.failed() == 2));
    assert!(table.to_text().contains("FAIL"));
}

#[test]
fn invalid_placements_are_rejected_up_front() {
    let cfg = tiny_config("");
    let data = cfg.dataset().unwrap();
    assert!(sweep(&cfg, &[parse_placements("S3:B9").unwrap()], true, &data).is_err());
}
