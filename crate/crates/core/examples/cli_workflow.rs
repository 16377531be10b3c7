//! The command-line workflow driven in-process: generate a corpus, train a
//! teacher, score and select pseudo labels, retrain, evaluate, quantify.
//! Each step writes a manifest with input/output digests.
//!
//! cargo run --release --example cli_workflow -- [work_dir]

use std::path::PathBuf;

use vesselforge::cli::{run, RunManifest, MANIFEST_FILE};

fn step(args: &[&str]) {
    let mut argv = vec!["vesselforge"];
    argv.extend_from_slice(args);
    println!("$ {}", argv.join(" "));
    let code = run(argv);
    assert_eq!(code, 0, "step failed with exit code {code}");
}

fn main() -> vesselforge::Result<()> {
    let work = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cli_workflow_out".into()));
    std::fs::create_dir_all(&work).unwrap();
    let p = |s: &str| work.join(s).display().to_string();

    std::fs::write(
        p("corpus.json"),
        r#"{ "phantom": { "dims": [48, 48, 48], "tree": { "root_radius_mm": 3.0, "depth": 2 },
                          "intensity": { "noise_sigma": 100.0, "blur_sigma_vox": 0.7 } },
             "splits": { "labeled": 3, "unlabeled": 8, "validation": 1, "test": 2 } }"#,
    )
    .unwrap();
    std::fs::write(
        p("pipeline.json"),
        r#"{ "splits": { "labeled": "data/labeled.json", "unlabeled": "data/unlabeled.json",
                         "validation": "data/validation.json", "test": "data/test.json" },
             "train": { "epochs": 300, "checkpoint_every": 50 },
             "selection": [ { "min_mean_precision": 0.8, "cap": 4 } ],
             "final_retrain": false, "pseudo_threshold": 0.9, "pseudo_min_component_voxels": 20 }"#,
    )
    .unwrap();

    step(&["phantom", "--config", &p("corpus.json"), "--out", &p("data"), "--seed", "1"]);
    step(&["train", "--config", &p("pipeline.json"), "--out", &p("teacher")]);
    step(&["pseudolabel", "--config", &p("pipeline.json"), "--model", &p("teacher/model.json"), "--out", &p("scored")]);
    step(&["select", "--config", &p("pipeline.json"), "--candidates", &p("scored/candidates.json"), "--out", &p("selected")]);
    step(&[
        "train", "--config", &p("pipeline.json"), "--stage", "iteration_1",
        "--pseudo", &p("selected/selected.json"), "--out", &p("student"),
    ]);
    step(&["evaluate", "--config", &p("pipeline.json"), "--model", &p("student/model.json"), "--out", &p("eval")]);
    step(&["morph", "--mask", &p("data/test000.vvol.json"), "--mask", &p("data/test001.vvol.json"), "--out", &p("morph")]);

    for dir in ["teacher", "scored", "student", "eval"] {
        let m = RunManifest::load(&work.join(dir).join(MANIFEST_FILE))?;
        println!("{dir}: command {}, seed {}, config {}…, {} outputs", m.command, m.seed, &m.config_sha256[..12], m.outputs.len());
    }
    print!("{}", std::fs::read_to_string(p("teacher/metrics.csv")).unwrap());
    print!("{}", std::fs::read_to_string(p("eval/metrics.csv")).unwrap());
    print!("{}", std::fs::read_to_string(p("morph/morphometry.csv")).unwrap());
    Ok(())
}
