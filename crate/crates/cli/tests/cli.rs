use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const DESK: &str = "state_size = 32\nprojection_dim = 32\nembed_dim = 16\nlr = 0.005\nbatch = 10\nepochs = 3\nbeam = 2\n";

fn eve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eve")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        fs::write(root.join("desk.cfg"), DESK).unwrap();
        let o = eve(&["synth", "--seed", "3", "--out", s(&root.join("data"))]);
        assert!(o.status.success(), "{}", stderr(&o));
        Fixture { _dir: dir, root }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn encode(&self, out: &str, with_actions: bool) -> Output {
        let (a2, a3, det, act, dict, cfg, out) = (
            self.p("data/activations2d"),
            self.p("data/activations3d"),
            self.p("data/detections.jsonl"),
            self.p("data/actions.jsonl"),
            self.p("data/dictionary.txt"),
            self.p("desk.cfg"),
            self.p(out),
        );
        let mut args = vec![
            "encode",
            "--activations-2d",
            s(&a2),
            "--activations-3d",
            s(&a3),
            "--detections",
            s(&det),
            "--dict",
            s(&dict),
            "--config",
            s(&cfg),
            "--out",
            s(&out),
        ];
        if with_actions {
            args.extend(["--actions", s(&act)]);
        }
        eve(&args)
    }

    fn train(&self, codes: &str, ckpt: &str) -> Output {
        eve(&[
            "train",
            "--codes",
            s(&self.p(codes)),
            "--corpus",
            s(&self.p("data/corpus.jsonl")),
            "--config",
            s(&self.p("desk.cfg")),
            "--ckpt-out",
            s(&self.p(ckpt)),
        ])
    }
}

#[test]
fn full_pipeline() {
    let f = Fixture::new();
    let o = f.encode("codes", true);
    assert!(o.status.success(), "{}", stderr(&o));
    let codes = fs::read_dir(f.p("codes")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "code")).count();
    assert_eq!(codes, 20);
    assert!(f.p("codes/manifest.json").is_file());

    let o = f.train("codes", "ckpt");
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(f.p("ckpt/loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let o = eve(&[
        "caption",
        "--ckpt",
        s(&f.p("ckpt/model.ckpt")),
        "--codes",
        s(&f.p("codes")),
        "--out",
        s(&f.p("pred.jsonl")),
        "--config",
        s(&f.p("desk.cfg")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(f.p("pred.jsonl")).unwrap().lines().count(), 20);

    let o = eve(&["eval", "--pred", s(&f.p("pred.jsonl")), "--refs", s(&f.p("data/corpus.jsonl")), "--out", s(&f.p("scores.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["bleu4", "rougel", "ciderd"] {
        assert!(printed[key].is_number(), "{key}");
    }
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.p("scores.json")).unwrap()).unwrap();
    assert_eq!(printed, written);
}

#[test]
fn eval_of_references_scores_one() {
    let f = Fixture::new();
    let corpus = fs::read_to_string(f.p("data/corpus.jsonl")).unwrap();
    let preds: String = corpus
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            format!("{}\n", serde_json::json!({"video_id": v["video_id"], "caption": v["captions"][0]}))
        })
        .collect();
    fs::write(f.p("pred.jsonl"), preds).unwrap();
    let o = eve(&["eval", "--pred", s(&f.p("pred.jsonl")), "--refs", s(&f.p("data/corpus.jsonl"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["bleu4"].as_f64(), Some(1.0));
    assert_eq!(v["rougel"].as_f64(), Some(1.0));
}

#[test]
fn encode_without_actions_shrinks_code() {
    let f = Fixture::new();
    assert!(f.encode("full", true).status.success());
    assert!(f.encode("bare", false).status.success());
    let read = |p: &str| -> serde_json::Value { serde_json::from_str(&fs::read_to_string(f.p(p)).unwrap()).unwrap() };
    let (full, bare) = (read("full/manifest.json"), read("bare/manifest.json"));
    let actions = full["action_labels"].as_array().unwrap().len() as u64;
    assert_eq!(bare["d"].as_u64().unwrap(), full["d"].as_u64().unwrap() - 2 * actions);
    assert_eq!(bare["has_actions"], false);
}

#[test]
fn corrupt_tensor_exits_2_naming_file() {
    let f = Fixture::new();
    let bad = f.p("data/activations2d/video05.tensor");
    let bytes = fs::read(&bad).unwrap();
    fs::write(&bad, &bytes[..bytes.len() - 4]).unwrap();
    let o = f.encode("codes", true);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("video05.tensor"), "{}", stderr(&o));
}

#[test]
fn train_with_missing_code_exits_2_naming_video() {
    let f = Fixture::new();
    assert!(f.encode("codes", true).status.success());
    fs::remove_file(f.p("codes/video11.code")).unwrap();
    let o = f.train("codes", "ckpt");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("video11"), "{}", stderr(&o));
}

#[test]
fn bad_config_exits_2() {
    let f = Fixture::new();
    fs::write(f.p("desk.cfg"), "state_size = 32\nprojection_dim = 32\ncolour = blue\n").unwrap();
    let o = f.encode("codes", true);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}

#[test]
fn help_lists_every_flag() {
    let cases: [(&str, &[&str]); 5] = [
        ("encode", &["--activations-2d", "--activations-3d", "--detections", "--actions", "--dict", "--config", "--out", "--workers"]),
        ("train", &["--codes", "--corpus", "--config", "--ckpt-out", "--workers"]),
        ("caption", &["--ckpt", "--codes", "--out", "--config", "--workers"]),
        ("eval", &["--pred", "--refs", "--out"]),
        ("synth", &["--seed", "--out", "--videos"]),
    ];
    for (cmd, flags) in cases {
        let o = eve(&[cmd, "--help"]);
        assert!(o.status.success());
        let text = String::from_utf8_lossy(&o.stdout);
        for flag in flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        assert!(eve(&["synth", "--seed", "9", "--videos", "5", "--out", s(&dir.path().join(name))]).status.success());
    }
    for file in ["detections.jsonl", "actions.jsonl", "corpus.jsonl", "dictionary.txt", "MANIFEST.json", "activations2d/video03.tensor"] {
        assert_eq!(fs::read(dir.path().join("a").join(file)).unwrap(), fs::read(dir.path().join("b").join(file)).unwrap(), "{file}");
    }
}
