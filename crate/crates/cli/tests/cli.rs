use std::fs;
use std::process::{Command, Output};

use dimcons::output::{self, BoxCountRow, EstimateRow};

fn dimcons(out: &std::path::Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimcons"))
        .args(args)
        .env("DIMCONS_OUT", out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn dim_on_cantor_passes_and_writes_readable_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = dimcons(dir.path(), &["dim", "--system", "cantor-thirds", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("VERDICT dim-box-vs-closed-form PASS"), "{}", stdout(&o));
    let est: Vec<EstimateRow> = output::read_rows(&dir.path().join("dim_estimates.csv")).unwrap();
    assert_eq!(est[0].method, "box_regression");
    assert!((est[0].value - 0.631).abs() < 2.0 * est[0].stderr);
    let boxes: Vec<BoxCountRow> = output::read_rows(&dir.path().join("dim_box_counts.csv")).unwrap();
    assert!(boxes.windows(2).all(|w| w[0].delta > w[1].delta && w[0].count <= w[1].count));
    let header = fs::read_to_string(dir.path().join("dim_box_counts.csv")).unwrap();
    assert!(header.starts_with("delta,count\n"));
    let header = fs::read_to_string(dir.path().join("dim_estimates.csv")).unwrap();
    assert!(header.starts_with("value,stderr,delta_min,delta_max,method\n"));
}

#[test]
fn out_flag_overrides_the_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = dimcons(
        env_dir.path(),
        &["dim", "--system", "unit-interval", "--seed", "2", "--out", flag_dir.path().to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(flag_dir.path().join("dim_verdicts.csv").exists());
    assert!(!env_dir.path().join("dim_verdicts.csv").exists());
}

#[test]
fn counting_example_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dimcons(dir.path(), &["counting", "--n", "3", "--k", "1", "--ladder", "2^-3..2^-6", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("VERDICT counting-trend-3-1 PASS"));
    assert!(dir.path().join("counting_3_1_bins.csv").exists());
}

#[test]
fn non_orthogonal_system_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(
        &file,
        "name = \"bad\"\n[[maps]]\nratio = 0.5\ntranslation = [0, 0]\northogonal = [[1, 0.5], [0, 1]]\n\
         [[maps]]\nratio = 2\ntranslation = [0.5, 0]\n",
    )
    .unwrap();
    let o = dimcons(dir.path(), &["dim", "--system", file.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("maps[0]") && err.contains("orthogonal"), "{err}");
    assert!(err.contains("maps[1]"), "{err}");
}

#[test]
fn missing_fields_are_all_listed() {
    let dir = tempfile::tempdir().unwrap();
    let o = dimcons(dir.path(), &["sweep", "--system", "four-corner", "--ladder", "2^-1..3^-4"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for field in ["seed", "s:", "ladder"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "system = \"four-corner\"\ns = 0.6\nseed = 11\nladder = \"2^-4..2^-6\"\n").unwrap();
    let o = dimcons(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--s", "0.4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("bound=0.400"), "{}", stdout(&o));
}

#[test]
fn budget_overrun_is_scale_limited_with_partial_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = dimcons(
        dir.path(),
        &["sweep", "--system", "cantor-dust", "--s", "0.5", "--ladder", "2^-3,2^-4,2^-5,2^-20", "--seed", "1"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stdout(&o).contains("SCALE-LIMITED"));
    let rows = fs::read_to_string(dir.path().join("sweep_exceptional.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);
}

#[test]
fn systems_lists_every_bundled_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = dimcons(dir.path(), &["systems"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().count() > 8);
    assert!(stdout(&o).contains("pinwheel"));
}
