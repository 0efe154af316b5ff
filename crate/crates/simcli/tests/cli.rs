use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;
use uowsn_sim::runner::{self, metadata_path, RunOptions};
use uowsn_sim::validate;

fn uowsn() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_uowsn"));
    c.env_remove("UOWSN_OUTPUT_DIR").env("RUST_LOG", "error");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL_CONNECTIVITY: &str = r#"
kind = "connectivity_sweep"
seed = 5
trials = 40
phi = [1.0, 2.5]
R = [8, 14]
M = [30, 60]
k = [1, 2]
border_mode = ["torus", "bounded"]
"#;

const SMALL_LOCALIZATION: &str = r#"
kind = "localization_sweep"
seed = 9
trials = 3
M = [40]
anchors = [4, 6]
phi = [2.4]
R = [45]
noise_pct = [0, 5]
max_iters = 60
"#;

fn run_file(config: &str, out: &Path, threads: usize) -> Vec<u8> {
    let c = validate(config).unwrap();
    runner::run(&c, out, &RunOptions { threads: Some(threads), fresh: true }).unwrap();
    fs::read(out).unwrap()
}

#[test]
fn single_point_single_trial_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = "kind = \"connectivity_sweep\"\nseed = 1\ntrials = 1\nphi = 1.5\nR = 10\nM = 50\n";
    let text = String::from_utf8(run_file(cfg, &dir.path().join("one.csv"), 1)).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "phi,R,M,k,mode,p_analytic,p_mc,stderr,trials,seed");
    assert!(lines[1].starts_with("1.5,10.0,50,1,bounded,"));
}

#[test]
fn full_range_grid_has_one_row_per_point_with_both_values() {
    let dir = TempDir::new().unwrap();
    let cfg = "kind = \"connectivity_sweep\"\nseed = 1\ntrials = 2\nangle_unit = \"deg\"\nphi = [40, 90, 135, 360]\nR = [1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20]\nM = [100, 500]\nborder_mode = \"torus\"\n";
    let text = String::from_utf8(run_file(cfg, &dir.path().join("grid.csv"), 2)).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 160);
    for r in &rows {
        assert!(r[5].parse::<f64>().is_ok(), "analytic missing in {r:?}");
        assert!(r[6].parse::<f64>().is_ok(), "simulated missing in {r:?}");
    }
}

#[test]
fn output_is_identical_across_thread_counts_and_reruns() {
    let dir = TempDir::new().unwrap();
    for cfg in [SMALL_CONNECTIVITY, SMALL_LOCALIZATION] {
        let a = run_file(cfg, &dir.path().join("a.csv"), 1);
        let b = run_file(cfg, &dir.path().join("b.csv"), 4);
        let c = run_file(cfg, &dir.path().join("c.csv"), 3);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}

#[test]
fn localization_rows_cover_grid_seeds_and_methods() {
    let dir = TempDir::new().unwrap();
    let text = String::from_utf8(run_file(SMALL_LOCALIZATION, &dir.path().join("l.csv"), 2)).unwrap();
    let rows: Vec<_> = text.lines().skip(1).collect();
    // 2 anchor counts x 2 noise levels x 3 seeds x 3 methods
    assert_eq!(rows.len(), 36);
    assert!(rows[0].starts_with("proposed,40,4,2.4,45.0,0.0,"));
    assert!(rows[1].starts_with("mds_map,40,4,"));
    assert!(rows[2].starts_with("dv_hop,40,4,"));
}

#[test]
fn deleting_the_last_row_and_rerunning_restores_it() {
    let dir = TempDir::new().unwrap();
    for (i, cfg) in [SMALL_CONNECTIVITY, SMALL_LOCALIZATION].into_iter().enumerate() {
        let out = dir.path().join(format!("r{i}.csv"));
        let full = run_file(cfg, &out, 2);
        let text = String::from_utf8(full.clone()).unwrap();
        let cut = text.trim_end_matches('\n').rfind('\n').unwrap() + 1;
        fs::write(&out, &text[..cut]).unwrap();
        let c = validate(cfg).unwrap();
        let s = runner::run(&c, &out, &RunOptions { threads: Some(2), fresh: false }).unwrap();
        assert_eq!(s.resumed, s.rows - 1);
        assert_eq!(fs::read(&out).unwrap(), full);

        // a torn final line is dropped and recomputed
        fs::write(&out, &text[..cut + 5]).unwrap();
        runner::run(&c, &out, &RunOptions { threads: Some(1), fresh: false }).unwrap();
        assert_eq!(fs::read(&out).unwrap(), full);
    }
}

#[test]
fn resuming_under_a_different_config_is_refused() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    run_file(SMALL_CONNECTIVITY, &out, 1);
    let other = validate(&SMALL_CONNECTIVITY.replace("seed = 5", "seed = 6")).unwrap();
    let err = runner::run(&other, &out, &RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("different config"), "{err}");
    assert!(fs::read_to_string(metadata_path(&out)).unwrap().contains("config_sha256"));
}

#[test]
fn validate_echo_round_trips_through_the_binary() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{SMALL_LOCALIZATION}angle_unit = \"deg\"\n"));
    let out = uowsn().arg("validate").arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let echo = String::from_utf8(out.stdout).unwrap();
    assert!(echo.contains(&format!("phi = [{:?}]", 2.4f64.to_radians())), "{echo}");
    let again = write(dir.path(), "echo.toml", &echo);
    let out2 = uowsn().arg("validate").arg(&again).output().unwrap();
    assert_eq!(String::from_utf8(out2.stdout).unwrap(), echo);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad =
        write(dir.path(), "bad.toml", "kind = \"connectivity_sweep\"\nseed = 1\nphi = 1\nR = [0]\nM = 50\ntypo = 3\n");
    let out = uowsn().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 4: R") && err.contains("line 6: typo"), "{err}");

    let good = write(dir.path(), "good.toml", "kind = \"channel_table\"\nseed = 1\ndistance = [5]\n");
    let blocker = write(dir.path(), "file", "");
    let out = uowsn().args(["run"]).arg(&good).arg("--output").arg(blocker.join("x.csv")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = uowsn().arg("run").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = uowsn().args(["figures"]).arg(dir.path()).args(["--plots", "/nonexistent/plotter"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_dir_env_and_overrides() {
    let dir = TempDir::new().unwrap();
    let cfg =
        write(dir.path(), "ch.toml", "kind = \"channel_table\"\nseed = 1\ndistance = [5, 50]\nnoise_pct = [0, 3]\n");
    let out = uowsn().arg("run").arg(&cfg).env("UOWSN_OUTPUT_DIR", dir.path().join("res")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let default = fs::read_to_string(dir.path().join("res/channel_table.csv")).unwrap();
    // four presets x two distances x two noise levels
    assert_eq!(default.lines().count(), 1 + 16);

    let other = dir.path().join("seeded.csv");
    let out = uowsn().arg("run").arg(&cfg).args(["--seed", "2", "--output"]).arg(&other).output().unwrap();
    assert!(out.status.success());
    let seeded = fs::read_to_string(&other).unwrap();
    assert_ne!(seeded, default);
    // noiseless rows do not depend on the seed apart from the seed column
    let noiseless = |t: &str| -> Vec<String> {
        t.lines()
            .skip(1)
            .filter(|l| l.split(',').nth(2) == Some("0.0"))
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(noiseless(&seeded), noiseless(&default));
}

#[test]
fn noiseless_channel_rows_recover_distance() {
    let dir = TempDir::new().unwrap();
    let cfg = "kind = \"channel_table\"\nseed = 4\ndistance = [1, 5, 10, 50, 100]\nchlorophyll = [0.0, 2.0]\nwater = [\"coastal\"]\n";
    let text = String::from_utf8(run_file(cfg, &dir.path().join("c.csv"), 1)).unwrap();
    let mut n = 0;
    for r in csv::Reader::from_reader(text.as_bytes()).records().map(Result::unwrap) {
        let (d, est): (f64, f64) = (r[1].parse().unwrap(), r[6].parse().unwrap());
        assert!((est - d).abs() <= 1e-9 * d, "{r:?}");
        n += 1;
    }
    assert_eq!(n, 15);
}
