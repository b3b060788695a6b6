use std::path::Path;
use std::process::{Command, Output};

fn rspc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rspc")).args(args).output().expect("binary runs")
}

fn write_subgroups(path: &Path, count: usize, n: usize, offset: f64) {
    let mut text = String::from("subgroup_id,x\n");
    for g in 0..count {
        for i in 0..n {
            // Deterministic spread in (-0.5, 0.5), no RNG needed.
            let v = ((g * 7 + i * 13) % 17) as f64 / 17.0 - 0.5 + offset;
            text.push_str(&format!("{},{v}\n", g + 1));
        }
    }
    std::fs::write(path, text).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn phase1_then_monitor_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (ph1, ok, bad, art) = (
        dir.path().join("p1.csv"),
        dir.path().join("ok.csv"),
        dir.path().join("bad.csv"),
        dir.path().join("a.json"),
    );
    write_subgroups(&ph1, 10, 5, 0.0);
    write_subgroups(&ok, 6, 5, 0.0);
    write_subgroups(&bad, 6, 5, 4.0);

    let fit = rspc(&[
        "phase1", "--data", p(&ph1), "--out", p(&art), "--family", "known-shewhart", "--mean", "0",
        "--sigma", "1", "--k", "3", "--n", "5",
    ]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(art.exists());

    let quiet = rspc(&["monitor", "--artifact", p(&art), "--data", p(&ok)]);
    assert_eq!(quiet.status.code(), Some(0));
    assert_eq!(String::from_utf8(quiet.stdout).unwrap().lines().count(), 6);

    let loud = rspc(&["monitor", "--artifact", p(&art), "--data", p(&bad)]);
    assert_eq!(loud.status.code(), Some(1));
    assert!(String::from_utf8(loud.stdout).unwrap().contains("\"in_control\":false"));
}

#[test]
fn usage_and_input_errors_exit_two() {
    assert_eq!(rspc(&["phase1", "--bogus"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_subgroups(&data, 10, 5, 0.0);
    let out = dir.path().join("a.json");
    let r = rspc(&["phase1", "--data", p(&data), "--out", p(&out), "--family", "tau2"]);
    assert_eq!(r.status.code(), Some(2), "univariate data for a bivariate chart");
    let r = rspc(&["phase1", "--data", p(&data), "--out", p(&out), "--alpha", "0.7"]);
    assert_eq!(r.status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    assert_eq!(rspc(&["phase1", "--data", p(&missing), "--out", p(&out)]).status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[chart]\nfamily = \"shewhart\"\n\n[simulate]\nseed = 9\nreplications = 20\nphase2_cap = 300\n\n\
         [[simulate.scenario]]\nname = \"clean\"\nn = 5\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let r = rspc(&["simulate", "--config", p(&cfg), "--out-dir", p(&out)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        outputs.push(std::fs::read(out.join("arl.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
