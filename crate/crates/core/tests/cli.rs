use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use skillbasin::cli::{self, MANIFEST_FILE};
use skillbasin::stability::read_partitions_csv;
use skillbasin::LabourNetwork;

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("skillbasin").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

fn synth(dir: &Path, seed: &str) {
    let code = run(&["synth", "--out", s(dir), "--seed", seed, "--runs", "5", "--tau-max", "8", "--gammas", "0,0.2"]);
    assert_eq!(code, 0);
}

#[test]
fn synth_writes_declared_outputs_with_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("synth");
    synth(&out, "1");
    for f in [
        "data/transitions.csv",
        "data/employment.csv",
        "data/sectors.csv",
        "data/ground_truth.json",
        "gamma_0/partitions.csv",
        "gamma_0/delta_r2.csv",
        "gamma_0/recovery.json",
        "gamma_0.2/pairwise_delta_r2.csv",
        "gamma_0.2/ce_vs_re.csv",
        "gamma_sensitivity.csv",
        "report.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let m = manifest(&out);
    assert_eq!(m["command"], "synth");
    for o in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(out.join(o["path"].as_str().unwrap())).unwrap();
        let digest = sha2_hex(&bytes);
        assert_eq!(o["sha256"], digest.as_str());
    }
}

fn sha2_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "5");
    synth(&b, "5");
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{} differs", k.display());
    }
    let c = tmp.path().join("c");
    synth(&c, "6");
    assert_ne!(files(&c)[Path::new("data/transitions.csv")], fa[Path::new("data/transitions.csv")]);
}

#[test]
fn scan_on_generated_data_matches_synth_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("synth");
    synth(&out, "2");
    let scan = tmp.path().join("scan");
    let code = run(&[
        "scan", "--input", s(&out.join("data")), "--out", s(&scan), "--seed", "2", "--runs", "5",
        "--tau-max", "8", "--gammas", "0,0.2", "--t0", "2014", "--t1", "2016",
    ]);
    assert_eq!(code, 0);
    for f in ["gamma_0/delta_r2.csv", "gamma_0.2/partitions.csv", "gamma_0.2/scan.csv", "gamma_sensitivity.csv"] {
        assert_eq!(fs::read_to_string(out.join(f)).unwrap(), fs::read_to_string(scan.join(f)).unwrap(), "{f}");
    }
    assert_eq!(manifest(&scan)["inputs"].as_array().unwrap().len(), 3);
}

#[test]
fn build_outputs_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("synth");
    synth(&out, "3");
    let build = tmp.path().join("build");
    assert_eq!(run(&["build", "--input", s(&out.join("data")), "--out", s(&build), "--gamma", "0.1"]), 0);
    let net = LabourNetwork::read_json_file(&build.join("network.json")).unwrap();
    assert_eq!(net.gamma, 0.1);
    let mut csv = Vec::new();
    net.write_edge_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap(), fs::read_to_string(build.join("network.csv")).unwrap());
    assert!(net.graph().edges().all(|(_, _, w)| w > 0.1));

    let detect = tmp.path().join("detect");
    let code = run(&[
        "detect", "--network", s(&build.join("network.json")), "--input", s(&out.join("data")),
        "--out", s(&detect), "--runs", "4", "--tau-max", "6", "--anchor-tau", "2",
    ]);
    assert_eq!(code, 0);
    for f in ["partitions.csv", "summary.csv", "dendrogram.json", "dendrogram.nwk", "crosstab.csv"] {
        assert!(detect.join(f).is_file(), "missing {f}");
    }
    let path = detect.join("partitions.csv");
    let sweep = read_partitions_csv(fs::File::open(&path).unwrap(), &path, &net.index).unwrap();
    assert_eq!(sweep.taus(), (1..=6).collect::<Vec<_>>());
}

#[test]
fn diagnose_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("synth");
    synth(&out, "4");
    let diag = tmp.path().join("diag");
    let code = run(&["diagnose", "--input", s(&out.join("data")), "--out", s(&diag), "--null-reps", "20", "--bins", "5"]);
    assert_eq!(code, 0);
    let null = fs::read_to_string(diag.join("null_model.csv")).unwrap();
    assert!(null.starts_with("statistic,bin_lo,bin_hi,observed,null_mean"));
    assert!(diag.join("assortativity.json").is_file());
    assert!(diag.join("sector_edge_share.csv").is_file());
}

#[test]
fn input_and_config_problems_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let out = tmp.path().join("out");
    assert_eq!(run(&["build", "--input", s(&missing), "--out", s(&out)]), 2);
    assert_eq!(run(&["build", "--bogus-flag"]), 2);
    assert_eq!(run(&["detect", "--input", s(&missing), "--out", s(&out), "--runs", "1"]), 2);
    assert_eq!(run(&["scan", "--input", s(&missing), "--out", s(&out), "--t0", "2014"]), 2);

    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "gamma = 0.1\nnot a pair\n").unwrap();
    assert_eq!(run(&["build", "--config", s(&conf), "--input", s(&missing), "--out", s(&out)]), 2);
    fs::write(&conf, "no_such_key = 3\n").unwrap();
    assert_eq!(run(&["build", "--config", s(&conf), "--input", s(&missing), "--out", s(&out)]), 2);
    assert!(!out.join(MANIFEST_FILE).exists());
}

#[test]
fn shared_config_file_serves_every_command() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("synth");
    synth(&out, "7");
    let conf = tmp.path().join("run.conf");
    fs::write(&conf, format!("input = {}\nruns = 4\ntau_max = 5\ngamma = 0.1\nt0 = 2014\nt1 = 2016\n", s(&out.join("data")))).unwrap();
    for cmd in ["build", "detect", "scan"] {
        let dir = tmp.path().join(cmd);
        assert_eq!(run(&[cmd, "--config", s(&conf), "--out", s(&dir)]), 0, "{cmd}");
        assert_eq!(manifest(&dir)["config"]["gamma"], 0.1);
    }
    assert_eq!(manifest(&tmp.path().join("detect"))["config"]["runs"], 4);
}
