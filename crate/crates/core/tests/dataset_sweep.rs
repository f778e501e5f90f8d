use std::fs;

use tempfile::TempDir;
use zydeco::eval::{compare, run_dataset_level, sweep, SweepResult};
use zydeco::matching::{read_snapshot, write_snapshot};
use zydeco::pipeline::PipelineConfig;
use zydeco::synth::{write_dataset, DatasetSpec};
use zydeco::Error;

fn short_spec() -> DatasetSpec {
    DatasetSpec { duration: 2.0, ..DatasetSpec::default() }
}

#[test]
fn sweep_rows_follow_the_grid_and_carry_the_hash() {
    let tmp = TempDir::new().unwrap();
    let spec = DatasetSpec { noise_levels_db: vec![10.0, 0.0, 5.0, 7.0], ..short_spec() };
    write_dataset(&spec, tmp.path()).unwrap();
    let cfg = PipelineConfig::default();
    let r = sweep(tmp.path(), &cfg).unwrap();
    assert_eq!(r.grid(), vec![0.0, 5.0, 7.0, 10.0]);
    assert_eq!(r.config_hash, cfg.hash().unwrap());
    for l in &r.levels {
        assert!(l.max_table_bits <= 32_768);
        let c = l.metrics.counts;
        assert_eq!(c.true_pos + c.false_neg, c.truth_total);
    }

    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    let back = SweepResult::read_csv(std::str::from_utf8(&csv).unwrap()).unwrap();
    assert_eq!(back.grid(), r.grid());
    for (x, y) in back.levels.iter().zip(&r.levels) {
        assert!((x.metrics.tpr - y.metrics.tpr).abs() <= 5e-7);
        assert_eq!(x.metrics.counts, y.metrics.counts);
    }
    for d in compare(&back, &back).unwrap() {
        assert_eq!(d.tpr_pct.unwrap_or(0.0), 0.0);
    }
}

#[test]
fn tampered_recording_is_an_integrity_error() {
    let tmp = TempDir::new().unwrap();
    let m = write_dataset(&DatasetSpec { noise_levels_db: vec![0.0], ..short_spec() }, tmp.path()).unwrap();
    let path = tmp.path().join(&m.levels[0].recording.file);
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&path, bytes).unwrap();
    let err = sweep(tmp.path(), &PipelineConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Integrity(_)), "{err}");
}

#[test]
fn single_level_run_matches_the_sweep_row() {
    let tmp = TempDir::new().unwrap();
    write_dataset(&DatasetSpec { noise_levels_db: vec![0.0, 7.0], ..short_spec() }, tmp.path()).unwrap();
    let cfg = PipelineConfig::default();
    let all = sweep(tmp.path(), &cfg).unwrap();
    let one = run_dataset_level(tmp.path(), 7.0, &cfg).unwrap();
    assert_eq!(all.level(7.0).unwrap().metrics, one.metrics);
    assert!(run_dataset_level(tmp.path(), 3.0, &cfg).is_err());

    let snap = tmp.path().join("t.fplt");
    write_snapshot(&snap, &one.table).unwrap();
    assert!(fs::metadata(&snap).unwrap().len() <= 4096);
    assert_eq!(read_snapshot(&snap).unwrap(), one.table);
}

#[test]
fn detector_seed_changes_only_through_the_config_hash() {
    let tmp = TempDir::new().unwrap();
    write_dataset(&DatasetSpec { noise_levels_db: vec![5.0], ..short_spec() }, tmp.path()).unwrap();
    let a = PipelineConfig::default();
    let b = PipelineConfig { detector_seed: 12, ..a.clone() };
    let (ra, rb) = (sweep(tmp.path(), &a).unwrap(), sweep(tmp.path(), &b).unwrap());
    assert_ne!(ra.config_hash, rb.config_hash);
    assert_eq!(sweep(tmp.path(), &a).unwrap(), ra);
}
