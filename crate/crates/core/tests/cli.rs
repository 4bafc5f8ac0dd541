use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cubethrust"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn allocate_full_set() {
    let o = run(&["allocate", "--wrench", "1,0,0,0,0,0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("total_thrust"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let o = run(&["allocate", "--wrench", "0,0,0,0,0,-1", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("allocation.json")).unwrap()).unwrap();
    assert_eq!(report["feasible"], true);
    assert!((report["total_thrust"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    let again = tempfile::tempdir().unwrap();
    let o = run(&["replay", p(&dir.path().join("manifest.json")), "--out", p(again.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(dir.path().join("allocation.json")).unwrap(),
        fs::read(again.path().join("allocation.json")).unwrap()
    );
}

#[test]
fn exit_codes() {
    // too few thrusters to produce every wrench
    assert_eq!(code(&run(&["allocate", "--ids", "1,2,3,4,5", "--wrench", "0,0,0,1,0,0"])), 3);
    assert_eq!(code(&run(&["allocate", "--ids", "1,25", "--wrench", "1,0,0,0,0,0"])), 2);
    assert_eq!(code(&run(&["allocate", "--wrench", "1,0,0"])), 2);
    assert_eq!(code(&run(&["search"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["simulate", "--scenario", "/nonexistent/scenario.json", "--out", "/tmp/x"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"t_final\": ").unwrap();
    assert_eq!(code(&run(&["simulate", "--scenario", p(&bad), "--out", p(dir.path())])), 2);
    fs::write(&bad, "{\"warp_factor\": 9}").unwrap();
    assert_eq!(code(&run(&["simulate", "--scenario", p(&bad), "--out", p(dir.path())])), 2);
    fs::write(&bad, "{\"dt\": -1.0}").unwrap();
    assert_eq!(code(&run(&["simulate", "--scenario", p(&bad), "--out", p(dir.path())])), 2);
}

#[test]
fn search_replays_from_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = run(&["search", "--n-min", "6", "--n-max", "6", "--out", p(a.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(a.path().join("summary.csv")).unwrap();
    let row = summary.lines().nth(1).unwrap();
    assert!(row.starts_with("6,134596,"), "{row}");
    assert!(a.path().join("optimal_ids.csv").exists());

    let manifest = a.path().join("manifest.json");
    let o = run(&["search", "--config", p(&manifest), "--out", p(b.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(a.path().join("summary.csv")).unwrap(), fs::read(b.path().join("summary.csv")).unwrap());

    let c = tempfile::tempdir().unwrap();
    let o = run(&["replay", p(&manifest), "--out", p(c.path()), "--threads", "2"]);
    assert_eq!(code(&o), 0);
    for f in ["summary.csv", "optimal_ids.csv", "optimal_N6.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(c.path().join(f)).unwrap(), "{f}");
    }
    let bad = c.path().join("bogus.json");
    fs::write(&bad, "{\"command\": 1}").unwrap();
    assert_eq!(code(&run(&["replay", p(&bad), "--out", p(c.path())])), 2);
}

#[test]
fn simulate_and_batch_short_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("short.json");
    fs::write(&scenario, "{\"t_final\": 1.0}").unwrap();

    let a = dir.path().join("a");
    let o = run(&["simulate", "--scenario", p(&scenario), "--ids", "1,3,5,11,14,18,24", "--out", p(&a)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["result.json", "trajectory.csv", "activity.csv", "rms.csv", "manifest.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let b = dir.path().join("b");
    let o = run(&["simulate", "--scenario", p(&a.join("manifest.json")), "--out", p(&b)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());

    let sets = dir.path().join("sets.csv");
    fs::write(&sets, "n_thrusters,thruster_ids\n6,--\n7,1 3 5 11 14 18 24\n12,1 3 5 7 9 11 13 15 17 19 21 23\n").unwrap();
    let c = dir.path().join("c");
    let o = run(&["batch", "--scenario", p(&scenario), "--sets", p(&sets), "--out", p(&c)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 2);
    for f in ["table4.csv", "activity.csv", "rms.csv", "trends.json", "trajectory_N7.csv", "trajectory_N12.csv"] {
        assert!(c.join(f).exists(), "{f}");
    }
    // the first simulated row matches the standalone run
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(c.join("trajectory_N7.csv")).unwrap());

    for (src, files) in [
        (&a, vec!["trajectory.csv", "activity.csv", "rms.csv"]),
        (&c, vec!["table4.csv", "activity.csv", "rms.csv", "trajectory_N12.csv"]),
    ] {
        let d = dir.path().join("replayed");
        let o = run(&["replay", p(&src.join("manifest.json")), "--out", p(&d)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        for f in files {
            assert_eq!(fs::read(src.join(f)).unwrap(), fs::read(d.join(f)).unwrap(), "{f}");
        }
    }
}
