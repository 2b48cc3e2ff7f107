use std::path::Path;
use std::process::{Command, Output};

use apimap::eval::generator::GeneratorConfig;
use apimap::eval::{default_templates, generate_corpus};
use apimap::RawRequest;

fn apimap(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_apimap"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("APIMAP_STATE")
        .env_remove("APIMAP_CONFIG")
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "apimap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_jsonl(path: &Path, rs: &[RawRequest]) {
    let text: String = rs.iter().map(|r| r.to_json_line() + "\n").collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn learn_baseline_classify_reset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("quick.toml"), "[ae]\nepochs = 2\nbatch_size = 32\n").unwrap();
    let corpus = generate_corpus(
        &default_templates(),
        &GeneratorConfig {
            benign_train: 300,
            benign_test: 0,
            attacks: Vec::new(),
            seed: 11,
        },
    );
    write_jsonl(&d.join("train.jsonl"), &corpus.train);
    let mut probe = corpus.train[..3].to_vec();
    probe.push(RawRequest::new("GET", "/not/learned/at/all"));
    write_jsonl(&d.join("probe.jsonl"), &probe);

    apimap(
        d,
        &[
            "--config",
            "quick.toml",
            "learn",
            "train.jsonl",
            "--dump-tree",
            "tree.json",
        ],
    );
    let tree: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("tree.json")).unwrap()).unwrap();
    assert!(!tree["children"].as_array().unwrap().is_empty());

    apimap(
        d,
        &[
            "--config",
            "quick.toml",
            "baseline",
            "--emit-schema",
            "schema.json",
            "--emit-openapi",
            "openapi.json",
            "--ae-model",
            "model.json",
        ],
    );
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("openapi.json")).unwrap()).unwrap();
    assert_eq!(doc["openapi"], "3.0.3");
    assert!(d.join("schema.json").exists());
    let model = apimap::autoencoder::AEModel::load(&d.join("model.json")).unwrap();
    assert!(model.threshold.is_some());

    let out = apimap(d, &["classify", "probe.jsonl", "--latency"]);
    let verdicts: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(verdicts.len(), 4);
    assert!(verdicts[..3].iter().all(|v| v["outcome"] == "accepted"));
    assert_eq!(verdicts[3]["outcome"], "anomalous");
    assert!(String::from_utf8_lossy(&out.stderr).contains("Median"));

    apimap(d, &["reset"]);
    let out = Command::new(env!("CARGO_BIN_EXE_apimap"))
        .current_dir(d)
        .args(["classify", "probe.jsonl"])
        .output()
        .unwrap();
    assert!(!out.status.success(), "classify after reset must fail");
}
