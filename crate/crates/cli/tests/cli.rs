use std::path::Path;
use std::process::{Command, Output};

use hcattn::model::{param_count, Dims, ModelConfig, Preset};

fn hcattn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcattn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &[&str] = &[
    "--symbols", "8", "--max-len", "5", "--train-size", "60", "--dev-size", "10", "--test-size", "10",
    "--d-model", "16", "--d-ff", "24", "--heads", "2", "--layers", "2", "--max-tokens", "120",
];

fn with_tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(TINY.iter().copied()).collect()
}

#[test]
fn param_count_matches_formula() {
    let dir = tempfile::tempdir().unwrap();
    let o = hcattn(&["param-count", "--preset", "HC_SA", "--dims", "small"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let expected = param_count(&ModelConfig::preset(Preset::HC_SA, Dims::SMALL).with_vocab(0, 0).with_gamma(1.0)).total;
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), format!("total {expected}"));
    // 5 encoder + 5 decoder self sites + 5 cross sites
    let sites = out.lines().filter(|l| l.starts_with("enc_self,") || l.starts_with("dec_self,") || l.starts_with("cross,"));
    assert_eq!(sites.count(), 15);
}

#[test]
fn zero_steps_saves_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = hcattn(&with_tiny(&["train", "--task", "copy", "--steps", "0", "--out-dir", "a", "--seed", "3"]), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = hcattn(&with_tiny(&["train", "--task", "copy", "--steps", "0", "--out-dir", "b", "--seed", "3"]), dir.path());
    assert!(o.status.success());
    let a = std::fs::read(dir.path().join("a/model.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/model.json")).unwrap();
    assert_eq!(a, b);
    let model = hcattn::model::load_checkpoint::<f64>(&dir.path().join("a/model.json")).unwrap();
    let fresh = hcattn::Model64::new(model.config().clone(), model_seed(3)).unwrap();
    for (name, t) in model.params().iter() {
        assert_eq!(t, fresh.params().get(name).unwrap(), "{name}");
    }
}

/// Model initialisation seed derived from a root seed.
fn model_seed(root: u64) -> u64 {
    root + 3
}

#[test]
fn train_then_translate_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let o = hcattn(&with_tiny(&["train", "--steps", "3", "--out-dir", "m", "--eval-interval", "3"]), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.json", "vocab.src", "vocab.tgt", "metrics.csv", "config.toml"] {
        assert!(dir.path().join("m").join(f).exists(), "{f}");
    }
    std::fs::write(dir.path().join("in.txt"), "1 2 3\n4 5\n").unwrap();
    let o = hcattn(&["translate", "--model", "m", "--input", "in.txt", "--max-len", "6"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);

    let mut args = vec!["evaluate", "--model", "m", "--out-dir", "ev"];
    args.extend(&TINY[..10]);
    let o = hcattn(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ev/eval.csv")).unwrap();
    assert!(csv.starts_with("split,sentences,bleu,loss,token_accuracy\ntest,10,"));
}

#[test]
fn sweep_emits_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_tiny(&[
        "sweep", "--enc-offsets", "all", "--dec-offsets", "causal", "--steps", "2", "--eval-interval", "2",
        "--decode-max-len", "6", "--out-dir", "sw",
    ]);
    let o = hcattn(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().any(|r| r.contains("\"(l,r)\",\"(l,c)\"")));

    let one = hcattn(
        &with_tiny(&["sweep", "--enc-offsets", "l,r", "--dec-offsets", "l,c", "--steps", "1", "--out-dir", "one"]),
        dir.path(),
    );
    assert!(one.status.success());
    let csv = std::fs::read_to_string(dir.path().join("one/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hcattn(&["train", "--no-such-flag"], dir.path()).status.code(), Some(2));
    assert_eq!(hcattn(&["no-such-command"], dir.path()).status.code(), Some(2));
    let o = hcattn(&with_tiny(&["sweep", "--dec-offsets", "l,r", "--out-dir", "x"]), dir.path());
    assert_eq!(o.status.code(), Some(2));
    // rejected before anything is written
    assert!(!dir.path().join("x").exists());
    std::fs::write(dir.path().join("bad.toml"), "[train]\nstepz = 3\n").unwrap();
    assert_eq!(hcattn(&["--config", "bad.toml", "train"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = hcattn(&["translate", "--model", "missing", "--input", "nothing.txt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "seed = 9\nout-dir = \"from-file\"\n[data]\nsymbols = 6\ntrain-size = 40\n[train]\nsteps = 0\n",
    )
    .unwrap();
    let mut args = vec!["--config", "run.toml", "train", "--train-size", "30", "--out-dir", "from-flag"];
    args.extend(["--d-model", "16", "--d-ff", "24", "--heads", "2", "--layers", "2", "--dev-size", "5", "--max-len", "4"]);
    let o = hcattn(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("from-file").exists());
    let echoed: toml::Table = std::fs::read_to_string(dir.path().join("from-flag/config.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(echoed["seed"].as_integer(), Some(9));
    assert_eq!(echoed["data"]["symbols"].as_integer(), Some(6));
    assert_eq!(echoed["data"]["train-size"].as_integer(), Some(30));
    assert_eq!(echoed["train"]["steps"].as_integer(), Some(0));
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["d1", "d2"] {
        let o = hcattn(
            &["gen-data", "--task", "reverse", "--train-size", "20", "--dev-size", "5", "--test-size", "5", "--out-dir", out],
            dir.path(),
        );
        assert!(o.status.success());
    }
    for f in ["train.src", "train.tgt", "dev.src", "test.tgt", "vocab.src"] {
        assert_eq!(
            std::fs::read(dir.path().join("d1").join(f)).unwrap(),
            std::fs::read(dir.path().join("d2").join(f)).unwrap(),
            "{f}"
        );
    }
    let src = std::fs::read_to_string(dir.path().join("d1/train.src")).unwrap();
    let tgt = std::fs::read_to_string(dir.path().join("d1/train.tgt")).unwrap();
    for (s, t) in src.lines().zip(tgt.lines()) {
        let mut r: Vec<&str> = s.split(' ').collect();
        r.reverse();
        assert_eq!(r.join(" "), t);
    }
}
