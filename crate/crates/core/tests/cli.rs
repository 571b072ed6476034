use std::fs;
use std::path::Path;
use std::process::Command;

use resgrad::analysis::{read_moments_csv, MomentMode, PREDICTION_HEADER};
use resgrad::cli::{read_summary, RunConfig};
use resgrad::numerics::SeededRng;
use resgrad::probes::VarTrace;
use resgrad::resnet::{build_network, NetSpec, Variant};

fn resgrad(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_resgrad"))
        .args(args)
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).into_owned()
        + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().expect("exit code"), text)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(resgrad(&["--help"]).0, 0);
    assert_eq!(resgrad(&["--version"]).0, 0);
    assert_eq!(resgrad(&[]).0, 1);
    assert_eq!(resgrad(&["train", "--variant", "0"]).0, 1);
    assert_eq!(resgrad(&["train", "--dataset", "mnist"]).0, 1);
    assert_eq!(resgrad(&["train", "--dataset", "cifar10"]).0, 1);
    assert_eq!(resgrad(&["train", "--batch-size", "1"]).0, 1);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[sgd]\nlearnig_rate = 0.1\n").unwrap();
    let (code, text) = resgrad(&["predict", "--config", path(&cfg)]);
    assert_eq!(code, 1);
    assert!(text.contains("learnig_rate"), "{text}");
}

#[test]
fn predict_writes_tables_that_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = resgrad(&["predict", "--out", path(dir.path())]);
    assert_eq!(code, 0);

    let reports = read_moments_csv(fs::File::open(dir.path().join("moments.csv")).unwrap()).unwrap();
    assert_eq!(reports.len(), 18);
    let at_zero = |mode| {
        *reports
            .iter()
            .find(|r| r.a == 0.0 && r.mode == mode)
            .expect("a = 0 row")
    };
    assert!((at_zero(MomentMode::Oracle).eq14_constant - 1.0).abs() < 1e-6);
    assert_eq!(at_zero(MomentMode::PaperFormula).c2, 1.5);

    let mut rdr = csv::Reader::from_path(dir.path().join("prediction.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), PREDICTION_HEADER);
    let blocks: Vec<usize> = rdr
        .records()
        .map(|r| r.unwrap()[0].parse().unwrap())
        .collect();
    assert_eq!(blocks, (1..=15).collect::<Vec<_>>());
}

#[test]
fn verify_moments_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = resgrad(&["verify-moments", "--out", path(dir.path())]);
    assert_eq!(code, 0, "{text}");
    let rows = csv::Reader::from_path(dir.path().join("verify_moments.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 6);
}

#[test]
fn exploding_run_exits_two_and_keeps_its_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = resgrad(&["train", "--variant", "3", "--steps", "100", "--out", path(dir.path())]);
    assert_eq!(code, 2, "{text}");
    let trace = VarTrace::read_csv(fs::File::open(dir.path().join("variance_trace.csv")).unwrap()).unwrap();
    assert!(!trace.rows.is_empty());
    let summary = read_summary(fs::File::open(dir.path().join("summary.csv")).unwrap()).unwrap();
    assert_eq!(summary.len(), 1);
    assert!(summary[0].1.is_nan() && summary[0].2);
}

#[test]
fn trace_has_one_row_per_block_per_probe() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = resgrad(&["train", "--steps", "250", "--out", path(dir.path())]);
    assert_eq!(code, 0);
    let trace = VarTrace::read_csv(fs::File::open(dir.path().join("variance_trace.csv")).unwrap()).unwrap();
    assert_eq!(trace.steps(), vec![1, 100, 200]);
    for step in trace.steps() {
        let blocks: Vec<usize> = trace.at_step(step).iter().map(|r| r.block_index).collect();
        assert_eq!(blocks, (1..=15).collect::<Vec<_>>());
    }
    let acc_rows = csv::Reader::from_path(dir.path().join("accuracy.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(acc_rows, 250);
}

#[test]
fn single_variant_ablation_equals_train() {
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let ablate_dir = dir.path().join("ablate");
    let common = ["--variant", "2", "--steps", "120", "--seed", "4"];
    let (c1, _) = resgrad(&[&["train", "--out", path(&train_dir)][..], &common].concat());
    let (c2, _) = resgrad(&[&["ablate", "--out", path(&ablate_dir)][..], &common].concat());
    assert_eq!((c1, c2), (0, 0));
    for f in ["variance_trace.csv", "accuracy.csv", "a_stats.csv", "summary.csv"] {
        let a = fs::read(train_dir.join(f)).unwrap();
        let b = fs::read(ablate_dir.join("model-2").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    assert_eq!(
        fs::read(train_dir.join("summary.csv")).unwrap(),
        fs::read(ablate_dir.join("summary.csv")).unwrap()
    );
}

#[test]
fn variants_start_from_the_same_parameters() {
    let cfg = RunConfig::default();
    let models: Vec<_> = Variant::ALL
        .iter()
        .map(|&v| build_network(&cfg.net_spec(v), &mut SeededRng::new(cfg.run.seed)).unwrap())
        .collect();
    let weights = |m: &resgrad::resnet::Model| -> Vec<(String, Vec<f64>)> {
        m.tensors()
            .into_iter()
            .filter(|(n, _, _)| n.ends_with(".w"))
            .map(|(n, t, _)| (n, t.to_vec()))
            .collect()
    };
    assert_eq!(models[0].checkpoint_bytes(), models[1].checkpoint_bytes());
    assert_eq!(weights(&models[0]), weights(&models[2]));
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "[net]\nscales = 2\nblocks_per_scale = 2\nbase_width = 8\n\n[sgd]\nsteps = 30\nprobe_every = 10\nbatch_size = 32\n\n[data]\nper_class = 50\n\n[run]\nout = \"{}\"\n",
            out.display()
        ),
    )
    .unwrap();
    let (code, text) = resgrad(&["train", "--config", path(&cfg)]);
    assert_eq!(code, 0, "{text}");
    let trace = VarTrace::read_csv(fs::File::open(out.join("variance_trace.csv")).unwrap()).unwrap();
    assert_eq!(trace.steps(), vec![1, 10, 20, 30]);
    assert_eq!(trace.at_step(10).len(), NetSpec::uniform(2, 2, 8, 2).total_blocks());
}

#[test]
fn sweep_writes_one_trace_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = resgrad(&["sweep", "--steps", "0", "--out", path(dir.path())]);
    assert_eq!(code, 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("sweep_summary.csv")).unwrap();
    let settings: Vec<(usize, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert_eq!(settings.len(), 6);
    for (bs, scale) in settings {
        let f = dir.path().join(format!("bs{bs}_init{scale}")).join("variance_trace.csv");
        let trace = VarTrace::read_csv(fs::File::open(f).unwrap()).unwrap();
        assert_eq!(trace.steps(), vec![0]);
        assert_eq!(trace.rows.len(), 15);
    }
}

#[test]
fn cifar_directory_feeds_training() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cifar-10-batches-bin");
    fs::create_dir(&data).unwrap();
    let mut rng = SeededRng::new(8);
    for i in 1..=5 {
        let labels: Vec<u8> = (0..20).map(|j| (j % 10) as u8).collect();
        let pixels: Vec<u8> = (0..20 * 3072).map(|_| rng.index(256) as u8).collect();
        resgrad::data::write_cifar10_records(&data.join(format!("data_batch_{i}.bin")), &labels, &pixels)
            .unwrap();
    }
    let out = dir.path().join("out");
    let args = ["train", "--dataset", "cifar10", "--cifar-dir", path(&data), "--steps", "5", "--batch-size", "16"];
    let (code, text) = resgrad(&[&args[..], &["--out", path(&out)]].concat());
    assert_eq!(code, 0, "{text}");
    assert!(out.join("variance_trace.csv").exists());

    let (code, _) = resgrad(&["train", "--dataset", "cifar10", "--cifar-dir", path(&dir.path().join("missing"))]);
    assert_eq!(code, 1);
}
