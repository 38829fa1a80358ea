use std::path::Path;
use std::process::Command;

use arinfer::baselines::{asymptotic_ls_ci, NullQuantileTable};
use arinfer::estimation::EstimatorSpec;
use arinfer::experiments::{
    ci_pair_rows, emit_ci_pairs, read_ci_pairs, run_ci_study, run_sequential_demo, run_unit_root_study_with_table,
    stream_series, summarize_ci, summarize_unit_root, StudyConfig,
};
use arinfer::model::{simulate, Family, InitPolicy};
use arinfer::region::ScanConfig;
use arinfer::rng::child_seed;
use arinfer::sequential::EProcessState;
use arinfer::split::{split_region, test_statistic, NullSpec};

const BIN: &str = env!("CARGO_BIN_EXE_arinfer");

#[test]
fn single_replication_matches_direct_calls() {
    let mut cfg = StudyConfig::normal_ci(9);
    cfg.r = 1;
    let report = run_ci_study(&cfg).unwrap();
    let rec = &report.ci_records[0];
    let seed = child_seed(9, &[0, 0]);
    assert_eq!(rec.seed, seed);
    let s = simulate(Family::Normal.model(), 0.5, 100, InitPolicy::Stationary, seed).unwrap();
    let fs = split_region(
        Family::Normal.model(),
        &s,
        cfg.split(),
        &EstimatorSpec::LeastSquares,
        0.1,
        &ScanConfig::default(),
    )
    .unwrap();
    let ls = asymptotic_ls_ci(&s, 0.1).unwrap();
    assert_eq!(rec.theta_hat, fs.theta_hat);
    assert_eq!(rec.fs_intervals, fs.region.intervals());
    assert_eq!((rec.ls_lo, rec.ls_hi), (ls.lo, ls.hi));
    assert_eq!(report.ci_rows[0].cp_fs, if fs.region.contains(0.5) { 1.0 } else { 0.0 });
}

#[test]
fn aggregates_match_records() {
    let mut cfg = StudyConfig::cauchy_ci(3);
    cfg.r = 200;
    cfg.theta0 = vec![0.0, 0.5];
    let report = run_ci_study(&cfg).unwrap();
    for (i, row) in report.ci_rows.iter().enumerate() {
        let recs: Vec<_> = report.ci_records.iter().filter(|r| r.theta0 == row.theta0).cloned().collect();
        assert_eq!(recs.len(), 200);
        assert_eq!(summarize_ci(cfg.theta0[i], &recs, row.n_failed), *row);
        let cp = recs.iter().filter(|r| r.fs_intervals.iter().any(|iv| iv.lo <= r.theta0 && r.theta0 <= iv.hi)).count();
        assert_eq!(cp as f64 / 200.0, row.cp_fs);
        let al: f64 =
            recs.iter().map(|r| r.fs_intervals.iter().map(|iv| iv.hi - iv.lo).sum::<f64>()).sum::<f64>() / 200.0;
        assert!((al - row.al_fs).abs() < 1e-12);
    }

    let mut ur = StudyConfig::unit_root(4);
    ur.r = 50;
    ur.t_len = 200;
    ur.theta0 = vec![0.9, 1.0];
    ur.keep_records = true;
    let table = arinfer::baselines::df_null_quantiles(&[0.1], 2000, 200, 1).unwrap();
    let report = run_unit_root_study_with_table(&ur, &table).unwrap();
    for row in &report.unit_root_rows {
        let recs: Vec<_> = report.unit_root_records.iter().filter(|r| r.theta0 == row.theta0).cloned().collect();
        assert_eq!(summarize_unit_root(row.theta0, &recs, row.n_failed), *row);
        for r in &recs {
            let s = simulate(Family::Normal.model(), r.theta0, 200, InitPolicy::default_for(r.theta0), r.seed).unwrap();
            let t = test_statistic(
                Family::Normal.model(),
                &s,
                ur.split(),
                &EstimatorSpec::LeastSquares,
                &NullSpec::Simple(1.0),
            )
            .unwrap();
            assert_eq!(t.p_value, r.p_value);
            assert_eq!(r.fs_reject, t.p_value <= 0.1);
        }
    }
}

#[test]
fn ci_pairs_round_trip() {
    let cfg = StudyConfig::normal_ci(20220);
    let report = run_ci_study(&StudyConfig { r: 30, ..cfg }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.csv");
    emit_ci_pairs(&report, 20, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# version="));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 41);
    let rows = read_ci_pairs(&path).unwrap();
    assert_eq!(rows, ci_pair_rows(&report, 20).unwrap());
    for (rec, pair) in report.ci_records.iter().zip(rows.chunks(2)) {
        assert_eq!((pair[0].method.as_str(), pair[1].method.as_str()), ("FS", "LS"));
        assert!(pair[0].lo <= rec.theta_hat && rec.theta_hat <= pair[0].hi);
    }
}

#[test]
fn sequential_demo_final_row_matches_replay() {
    let mut cfg = StudyConfig::sequential_demo(5);
    cfg.r = 2;
    cfg.t_len = 80;
    let demo = run_sequential_demo(&cfg).unwrap();
    assert_eq!(demo.steps.len(), 160);
    let theta0 = cfg.theta0[0];
    for rep in 0..2 {
        let steps: Vec<_> = demo.steps.iter().filter(|s| s.replication == rep).collect();
        let s = simulate(
            Family::Normal.model(),
            theta0,
            80,
            InitPolicy::default_for(theta0),
            child_seed(5, &[0, rep as u64]),
        )
        .unwrap();
        let mut st = EProcessState::new(Family::Normal, EstimatorSpec::LeastSquares, 0.0).unwrap();
        st.extend(s.values()).unwrap();
        let last = steps.last().unwrap();
        let expected = st.log_n(&NullSpec::Simple(cfg.null_theta), 1e-10).unwrap();
        assert!((last.log_n - expected).abs() < 1e-10);
        assert!(steps
            .windows(2)
            .all(|w| w[1].dbar_hi - w[1].dbar_lo <= w[0].dbar_hi - w[0].dbar_lo + 1e-12 || w[1].dbar_lo.is_nan()));
        assert_eq!(steps[0].log_n, 0.0);
        assert_eq!(steps[0].p_bar, 1.0);
    }
}

#[test]
fn stream_series_on_a_single_point() {
    let (_, steps) =
        stream_series(Family::Cauchy, EstimatorSpec::LeastSquares, &[0.3], 0.1, &NullSpec::Simple(1.0), 0.5, 0)
            .unwrap();
    assert_eq!(steps.len(), 1);
    assert_eq!(steps[0].log_n, 0.0);
    assert!(steps[0].dbar_covers_theta0);
}

fn arinfer(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("ARINFER_WORKERS").output().unwrap()
}

#[test]
fn cli_reproduce_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out_dir = format!("run{workers}");
        let o =
            arinfer(&["reproduce", "normal-ci", "-r", "60", "--workers", workers, "--out-dir", &out_dir], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let files: Vec<Vec<u8>> = ["report.json", "summary.csv", "ci_pairs.csv"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(&out_dir).join(f)).unwrap())
            .collect();
        outputs.push((o.stdout, files));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn cli_simulate_ci_and_test() {
    let dir = tempfile::tempdir().unwrap();
    let o = arinfer(&["simulate", "--theta", "0.5", "-T", "100", "--seed", "3", "--out", "x.txt"], dir.path());
    assert!(o.status.success());
    let o2 = arinfer(&["simulate", "--theta", "0.5", "-T", "100", "--seed", "3"], dir.path());
    assert_eq!(std::fs::read(dir.path().join("x.txt")).unwrap(), o2.stdout);

    let o = arinfer(&["ci", "--input", "x.txt", "--alpha", "0.1"], dir.path());
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["t1"], 50);
    assert!(v["fs_length"].as_f64().unwrap() > 0.0);

    let o = arinfer(&["test", "--input", "x.txt", "--null-lo", "0.9", "--null-hi", "1.1"], dir.path());
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let p = v["test"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn cli_sequential_resume_matches_single_pass() {
    let dir = tempfile::tempdir().unwrap();
    let s = simulate(Family::Normal.model(), 0.5, 60, InitPolicy::Stationary, 8).unwrap();
    let write = |name: &str, vals: &[f64]| {
        std::fs::write(dir.path().join(name), vals.iter().map(|v| format!("{v}\n")).collect::<String>()).unwrap()
    };
    write("all.txt", s.values());
    write("a.txt", &s.values()[..25]);
    write("b.txt", &s.values()[25..]);
    let full = arinfer(&["sequential", "--input", "all.txt"], dir.path());
    let first = arinfer(&["sequential", "--input", "a.txt", "--snapshot-out", "snap.json"], dir.path());
    let second = arinfer(&["sequential", "--input", "b.txt", "--resume", "snap.json"], dir.path());
    assert!(full.status.success() && first.status.success() && second.status.success());
    let full = String::from_utf8(full.stdout).unwrap();
    let first = String::from_utf8(first.stdout).unwrap();
    let second = String::from_utf8(second.stdout).unwrap();
    let mut joined: Vec<&str> = first.lines().collect();
    joined.extend(second.lines().skip(1));
    assert_eq!(full.lines().collect::<Vec<_>>(), joined);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(arinfer(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(arinfer(&["--version"], dir.path()).status.code(), Some(0));
    assert_eq!(arinfer(&["reproduce", "no-such-study"], dir.path()).status.code(), Some(1));
    assert_eq!(arinfer(&["ci", "--input", "missing.txt"], dir.path()).status.code(), Some(1));
    std::fs::write(dir.path().join("zeros.txt"), "0\n0\n0\n0\n0\n0\n").unwrap();
    assert_eq!(arinfer(&["ci", "--input", "zeros.txt"], dir.path()).status.code(), Some(2));
}

#[test]
fn shipped_table_drives_default_unit_root_config() {
    let cfg = StudyConfig::unit_root(1);
    let table = arinfer::experiments::default_df_table(&cfg).unwrap();
    assert_eq!(table, NullQuantileTable::shipped());
}

#[test]
fn default_seed_reproduces_reference_outputs() {
    let reference = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../reference");
    let dir = tempfile::tempdir().unwrap();
    for study in ["normal-ci", "cauchy-ci", "unit-root"] {
        let o = arinfer(&["reproduce", study, "--out-dir", study], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for entry in std::fs::read_dir(reference.join(study)).unwrap() {
            let entry = entry.unwrap();
            let fresh = std::fs::read(dir.path().join(study).join(entry.file_name())).unwrap();
            assert_eq!(fresh, std::fs::read(entry.path()).unwrap(), "{study}/{:?}", entry.file_name());
        }
    }
}
