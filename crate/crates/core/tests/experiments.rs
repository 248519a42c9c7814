use fedsv_core::config::{digest, parse_config, ExperimentConfig};
use fedsv_core::experiments::{
    detection_curve, prepare, random_detection_curve, run_backdoor_detection, run_detection, run_summarization,
    write_detection_tables,
};
use fedsv_core::manifest::{RunManifest, MANIFEST_FILE};
use fedsv_core::valuation::{ParticipantId, ValueVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BASE: &str = r#"
seed = 4

[dataset]
kind = "blobs"
train = 600
validation = 200
test = 200
features = 5
classes = 3
separation = 3.0

[partition]
mode = "iid"
participants = 10

[training]
rounds = 4
participant_fraction = 0.5
local_epochs = 1
batch_size = 16
learning_rate = 0.1
metric = { kind = "neg-loss", cap = 3.0 }
"#;

fn noisy() -> ExperimentConfig {
    let text = format!("{BASE}\n[corruption]\nkind = \"label-flip\"\naffected_count = 3\nflip_ratio = 0.5\n");
    ExperimentConfig::from_toml(&text).unwrap()
}

#[test]
fn shuffled_values_average_to_diagonal() {
    let bad = [0u32, 3, 4, 9];
    let mut total = 0.0;
    for s in 0..100 {
        let mut vals: Vec<f64> = (0..20).map(f64::from).collect();
        vals.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
        let v = ValueVector::from_pairs(None, vals.into_iter().enumerate().map(|(i, x)| (ParticipantId(i as u32), x)));
        total += detection_curve(&v, 20, &bad).unwrap().auc;
    }
    assert!((total / 100.0 - 0.5).abs() <= 0.05);
    let baseline = random_detection_curve(20, &bad, 100, 3).unwrap();
    assert!((baseline.auc - 0.5).abs() <= 0.05);
}

#[test]
fn every_method_reads_the_same_rounds() {
    let cfg = noisy();
    let prepared = prepare(&cfg).unwrap();
    assert_eq!(prepared.bad().len(), 3);
    let out = run_detection(&cfg, &prepared).unwrap();
    for c in &out.curves {
        assert_eq!((c.curve.inspected[0], c.curve.detected[0]), (0.0, 0.0));
        assert_eq!((*c.curve.inspected.last().unwrap(), *c.curve.detected.last().unwrap()), (1.0, 1.0));
        assert!(c.curve.detected.windows(2).all(|w| w[0] <= w[1]));
    }
    let loo_total: f64 = out.loo_report.per_round_utility_delta.iter().sum();
    let sv_total: f64 = out.sv_report.per_round_utility_delta.iter().sum();
    assert_eq!(loo_total, sv_total);
    assert!(out.attack_success_rate.is_none());
}

#[test]
fn dismissing_nobody_reproduces_the_run() {
    let cfg = noisy();
    let prepared = prepare(&cfg).unwrap();
    let out = run_detection(&cfg, &prepared).unwrap();
    let result = run_summarization(&cfg, &prepared, &out.run.rounds, &out.sv_report).unwrap();
    assert_eq!(result.baseline_accuracy, out.test_accuracy);
    for row in &result.accuracy {
        assert_eq!(row[0], out.test_accuracy);
        assert!(row.iter().all(|a| (0.0..=1.0).contains(a)));
    }
    assert!(run_summarization(&cfg, &prepared, &[], &out.sv_report).is_err());
}

#[test]
fn inert_backdoor_looks_random() {
    let text = format!(
        "{BASE}\n[corruption]\nkind = \"backdoor\"\naffected_fraction = 0.3\ntarget_label = 0\nquota = 0\ntrigger = {{ indices = [], value = 0.0 }}\n"
    );
    let mut mean = 0.0;
    let seeds = 10;
    for s in 0..seeds {
        let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
        cfg.seed = 100 + s;
        let out = run_backdoor_detection(&cfg).unwrap();
        assert!(out.attack_success_rate.is_some());
        mean += out.auc("fed-sv").unwrap() / seeds as f64;
    }
    assert!((mean - 0.5).abs() <= 0.15, "mean auc {mean}");
}

#[test]
fn tables_are_reproducible() {
    let cfg = noisy();
    let write = || {
        let dir = tempfile::tempdir().unwrap();
        let out = run_detection(&cfg, &prepare(&cfg).unwrap()).unwrap();
        let paths = write_detection_tables(dir.path(), &out).unwrap();
        let bytes: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        bytes
    };
    assert_eq!(write(), write());
}

#[test]
fn digest_is_of_file_bytes() {
    assert_eq!(digest(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, BASE).unwrap();
    let (cfg, d) = parse_config(&path).unwrap();
    assert_eq!(d, digest(BASE.as_bytes()));
    assert_eq!(cfg.seed, 4);
}

#[test]
fn manifest_written_whole() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = RunManifest::start("noisy-detect", 4);
    assert_eq!(m.seeds.len(), fedsv_core::seed::ALL_STREAMS.len());
    m.finish(dir.path()).unwrap();
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from(MANIFEST_FILE)]);
    let back: RunManifest = serde_json::from_slice(&std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(back, m);
}
