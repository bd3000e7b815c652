use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn segdyn(args: &[&str], config: &str, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segdyn"))
        .args(args)
        .arg("--config")
        .arg(fixture(config))
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

// a cheap version of the triad fixture: 32 cells
const SMALL_TRIAD: [&str; 4] = ["--set", "resolution=[2,2,2,2,2]", "--set", "samples_per_cell=20"];

#[test]
fn trivial_fixture_has_zero_entropies() {
    let dir = tempfile::tempdir().unwrap();
    ok(segdyn(&["all"], "trivial.json", dir.path()));
    let e = json(&dir.path().join("entropy.json"));
    assert_eq!(e["metric_entropy"].as_f64(), Some(0.0));
    assert_eq!(e["ks"]["unweighted_sum"].as_f64(), Some(0.0));
    assert_eq!(e["ks"]["stationary_weighted"].as_f64(), Some(0.0));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("1 cells"));
}

#[test]
fn transitions_are_byte_identical_under_a_fixed_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        for stage in ["calibrate", "segments", "transitions"] {
            let mut args = vec![stage, "--jobs", jobs];
            args.extend(SMALL_TRIAD);
            ok(segdyn(&args, "triad.json", dir.path()));
        }
    }
    for name in [
        "cover.json",
        "gamma.json",
        "markov.json",
        "tensors.json",
        "predicates.json",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let digests = |d: &Path| {
        let m = json(&d.join("manifest.json"));
        m["stages"]
            .as_object()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v["outputs"].clone()))
            .collect::<Vec<_>>()
    };
    // output_dir differs, so compare the digests rather than whole manifests
    assert_eq!(digests(a.path()), digests(b.path()));

    for (dir, seed) in [(&a, "7"), (&b, "11")] {
        let mut args = vec!["encode", "--seed", seed];
        args.extend(SMALL_TRIAD);
        ok(segdyn(&args, "triad.json", dir.path()));
    }
    let x = std::fs::read(a.path().join("starts.csv")).unwrap();
    let y = std::fs::read(b.path().join("starts.csv")).unwrap();
    assert!(x != y, "a different seed should draw different start points");
}

#[test]
fn missing_dependency_exits_3_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = segdyn(&["shadow"], "trivial.json", dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cover.json"));

    ok(segdyn(&["calibrate"], "trivial.json", dir.path()));
    let o = segdyn(&["shadow"], "trivial.json", dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("library") && err.contains("segdyn segments"), "{err}");
}

#[test]
fn invalid_config_exits_1_listing_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = segdyn(
        &[
            "calibrate",
            "--set",
            "epsilon=-1",
            "--set",
            "n_t=1",
            "--set",
            "samples_per_cell=0",
        ],
        "trivial.json",
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["epsilon", "n_t", "samples_per_cell"] {
        assert!(err.contains(field), "{field} not reported in {err}");
    }
    // nothing was computed
    assert!(!dir.path().join("cover.json").exists());
}

#[test]
fn check_revalidates_without_recomputing() {
    let dir = tempfile::tempdir().unwrap();
    let o = segdyn(&["all", "--check"], "trivial.json", dir.path());
    assert_eq!(o.status.code(), Some(3));

    ok(segdyn(&["all"], "trivial.json", dir.path()));
    let o = ok(segdyn(&["all", "--check"], "trivial.json", dir.path()));
    assert!(String::from_utf8_lossy(&o.stdout).contains("check transitions"));

    let gamma = dir.path().join("gamma.json");
    let text = std::fs::read_to_string(&gamma).unwrap();
    std::fs::write(&gamma, text.replace("\"n_cells\": 1", "\"n_cells\": 2")).unwrap();
    let o = segdyn(&["transitions", "--check"], "trivial.json", dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma.json"));

    std::fs::remove_file(dir.path().join("entropy.json")).unwrap();
    let o = segdyn(&["entropy", "--check"], "trivial.json", dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn lorenz_shadow_stays_within_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let coarse = ["--set", "resolution=[6,6,6]", "--set", "orbits.max_draws=300"];
    for stage in ["calibrate", "segments", "shadow"] {
        let mut args = vec![stage];
        args.extend(coarse);
        ok(segdyn(&args, "lorenz.json", dir.path()));
    }
    let report = json(&dir.path().join("shadow.json"));
    let eps = report["epsilon"].as_f64().unwrap();
    assert_eq!(eps, 1.0);
    assert!(report["max_error"].as_f64().unwrap() <= eps + 1e-6);
    assert!(report["max_error_any"].as_f64().unwrap() <= eps + 1e-6);
    assert!(!report["per_orbit"].as_array().unwrap().is_empty());
    assert!(dir.path().join("pseudo_orbit.csv").exists());
}
