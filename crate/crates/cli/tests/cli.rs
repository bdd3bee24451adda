use std::path::Path;
use std::process::Command;

fn fohsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fohsim"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "topology": {"synthetic": {"tier1": 3, "tier2": 12, "stubs": 90}},
  "seed": 5,
  "monitors": 6,
  "detector": {
    "sampling": {"n_per_class": 50},
    "forest": {"n_trees": 10, "max_depth": 6, "bootstrap_fraction": 1.0,
               "ablate": {"topological": false, "peering": false,
                          "aspath_pattern": false, "bidirectionality": false}},
    "embedding": {"dimension": 8, "lambda": 1.0, "epochs": 10,
                  "learning_rate": 0.05, "margin": 0.1}
  },
  "dfoh": {"attackers": {"sample": 2}, "victims": {"sample": 3}, "budget": 2},
  "beam": {"attackers": {"sample": 2}, "n_distinct": {"min": 1, "max": 2},
           "epsilon": 0.3, "baseline_events": 60, "baseline_origins": 20,
           "hijack_candidates": 20},
  "monitor_sweep": {"m_grid": [1, 4], "trials": 2}
}"#,
    )
    .unwrap();
    path
}

#[test]
fn missing_config_is_a_config_error() {
    let status = fohsim().arg("gen-topology").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"topology": {"synthetic": {"tier1": 1, "tier2": 0, "stubs": 0}}, "seed": 1, "mystery": 1}"#).unwrap();
    let status = fohsim()
        .args(["gen-topology", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_relationship_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(
        &path,
        r#"{"topology": {"file": {"relationships": "/nonexistent/rel.txt"}}, "seed": 1}"#,
    )
    .unwrap();
    let status = fohsim()
        .args(["gen-topology", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn full_flow_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");

    for out in [&out1, &out2] {
        for cmd in ["gen-topology", "train-dfoh", "train-beam", "attack-dfoh", "attack-beam"] {
            let output = fohsim()
                .args([cmd, "--config"])
                .arg(&config)
                .arg("--out")
                .arg(out)
                .output()
                .unwrap();
            assert!(
                output.status.success(),
                "{cmd} failed: {}",
                String::from_utf8_lossy(&output.stderr)
            );
        }
        // eval-monitors depends on the campaign's poison traces; run last,
        // the second run with explicit --jobs.
        let jobs = if out == &out2 { ["--jobs", "3"] } else { ["--jobs", "1"] };
        let output = fohsim()
            .args(["eval-monitors", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .args(jobs)
            .output()
            .unwrap();
        assert!(output.status.success());
    }

    for name in [
        "topology.txt",
        "metadata.json",
        "forest.json",
        "kb_snapshot.csv",
        "embedding.txt",
        "dfoh_results.csv",
        "poison_traces.csv",
        "beam_results.csv",
        "monitor_results.csv",
        "manifest.json",
    ] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        if name == "manifest.json" {
            assert!(!a.is_empty() && !b.is_empty());
        } else {
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    let report = fohsim().arg("report").arg("--out").arg(&out1).output().unwrap();
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("dfoh:"), "report output: {text}");
    assert!(text.contains("beam:"));
    assert!(text.contains("monitors:"));
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for (out, seed) in [(&out1, "5"), (&out2, "6")] {
        let status = fohsim()
            .args(["gen-topology", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .args(["--seed", seed])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(out1.join("topology.txt")).unwrap();
    let b = std::fs::read(out2.join("topology.txt")).unwrap();
    assert_ne!(a, b);
}
