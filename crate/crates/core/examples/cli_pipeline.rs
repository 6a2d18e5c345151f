//! Drives the command-line pipeline from code: `synth` writes a planted
//! data set, then `build`, `detect` and `scan` run on it from a shared
//! `key = value` configuration file. Every output directory ends up with
//! a `manifest.json`.
//!
//! ```bash
//! cargo run --release --example cli_pipeline
//! ```

use std::fs;

use skillbasin::cli;

pub fn run() -> skillbasin::Result<()> {
    let root = std::env::temp_dir().join("skillbasin-cli-pipeline");
    let io = |e: std::io::Error| skillbasin::Error::Computation(e.to_string());
    fs::create_dir_all(&root).map_err(io)?;
    let conf = root.join("run.conf");
    fs::write(&conf, "# shared settings\nseed = 11\nruns = 20\ngamma = 0.1\n").map_err(io)?;
    let conf = conf.to_string_lossy().into_owned();
    let dir = |name: &str| root.join(name).to_string_lossy().into_owned();
    let data = root.join("synth").join("data").to_string_lossy().into_owned();

    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--out".into(), dir("synth"), "--seed".into(), "3".into(), "--runs".into(), "10".into()],
        vec!["build".into(), "--config".into(), conf.clone(), "--input".into(), data.clone(), "--out".into(), dir("build")],
        vec!["detect".into(), "--config".into(), conf.clone(), "--input".into(), data.clone(), "--out".into(), dir("detect")],
        vec![
            "scan".into(), "--config".into(), conf, "--input".into(), data, "--out".into(), dir("scan"),
            "--t0".into(), "2014".into(), "--t1".into(), "2016".into(), "--gammas".into(), "0,0.1".into(),
        ],
    ];
    for args in steps {
        let code = cli::run(std::iter::once("skillbasin".to_string()).chain(args.iter().cloned()));
        println!("skillbasin {} → exit {code}", args[0]);
        if code != 0 {
            return Err(skillbasin::Error::Computation(format!("{} failed", args[0])));
        }
    }
    let summary = fs::read_to_string(root.join("scan").join("gamma_sensitivity.csv")).map_err(io)?;
    print!("{summary}");
    let manifest = fs::read_to_string(root.join("scan").join(cli::MANIFEST_FILE)).map_err(io)?;
    let v: serde_json::Value = serde_json::from_str(&manifest)?;
    println!("scan manifest: config sha256 {}", v["config_sha256"]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> skillbasin::Result<()> {
    run()
}
