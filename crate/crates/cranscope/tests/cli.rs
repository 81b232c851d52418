use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cranscope::dataset::load_dataset;
use cranscope::io::{read_json, write_json, write_rgb};
use cranscope::report::Manifest;
use cranscope_core::calibration::{GreyReference, RadiometricCorrection, Rect};
use cranscope_core::segmentation::PixelScorer;
use cranscope_core::synth::{render_card, SessionDistortion};

fn cranscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cranscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(out: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", p(out)];
    args.extend_from_slice(extra);
    let o = cranscope(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn reference() -> GreyReference {
    cranscope::io::load_grey_reference(None).unwrap()
}

fn write_card(dir: &Path, distortion: Option<SessionDistortion>) -> (PathBuf, PathBuf) {
    let (card, rects) = render_card(&reference());
    let card = match distortion {
        Some(d) => d.apply(&card).unwrap(),
        None => card,
    };
    let card_path = dir.join("card.png");
    let rects_path = dir.join("patches.json");
    write_rgb(&card_path, &card).unwrap();
    write_json(&rects_path, &rects).unwrap();
    (card_path, rects_path)
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<_> = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e.path().strip_prefix(dir).unwrap().to_path_buf();
            (rel, fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&cranscope(&["--help"])), 0);
    let v = cranscope(&["--version"]);
    assert_eq!(code(&v), 0);
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(code(&cranscope(&[])), 64);
    assert_eq!(code(&cranscope(&["run", "--bogus"])), 64);
}

#[test]
fn calibrate_identity_card_gives_unit_gain() {
    let dir = tempfile::tempdir().unwrap();
    let (card, rects) = write_card(dir.path(), None);
    let out = dir.path().join("cal.json");
    let o = cranscope(&[
        "calibrate",
        "--card",
        p(&card),
        "--patches",
        p(&rects),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let corr: RadiometricCorrection = read_json(&out).unwrap();
    for c in 0..3 {
        // 8-bit quantization of the card bounds the achievable precision
        assert!((corr.gain[c] - 1.0).abs() < 0.01, "{:?}", corr.gain);
        assert!(corr.offset[c].abs() < 0.005, "{:?}", corr.offset);
    }
}

#[test]
fn calibrate_recovers_distortion() {
    let dir = tempfile::tempdir().unwrap();
    let d = SessionDistortion {
        gain: [0.9, 0.85, 1.02],
        offset: [0.01, -0.015, 0.02],
    };
    let (card, rects) = write_card(dir.path(), Some(d));
    let out = dir.path().join("cal.json");
    let o = cranscope(&[
        "calibrate",
        "--card",
        p(&card),
        "--patches",
        p(&rects),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let corr: RadiometricCorrection = read_json(&out).unwrap();
    let want = d.inverse("x");
    for c in 0..3 {
        assert!((corr.gain[c] - want.gain[c]).abs() < 0.01);
        assert!((corr.offset[c] - want.offset[c]).abs() < 0.01);
    }
}

#[test]
fn calibrate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (card, rects) = write_card(dir.path(), None);
    // no rectangles at all
    assert_eq!(code(&cranscope(&["calibrate", "--card", p(&card)])), 64);
    // too few --rect values
    assert_eq!(
        code(&cranscope(&[
            "calibrate",
            "--card",
            p(&card),
            "--rect",
            "0,0,24,24"
        ])),
        64
    );
    // a patch off the card is a data error
    let far: Vec<Rect> = (0..6).map(|i| Rect::new(5000 + i, 0, 24, 24)).collect();
    let far_path = dir.path().join("far.json");
    write_json(&far_path, &far).unwrap();
    let out = dir.path().join("cal.json");
    assert_eq!(
        code(&cranscope(&[
            "calibrate",
            "--card",
            p(&card),
            "--patches",
            p(&far_path),
            "--out",
            p(&out)
        ])),
        2
    );
    // missing card file
    let missing = dir.path().join("nope.png");
    assert_eq!(
        code(&cranscope(&[
            "calibrate",
            "--card",
            p(&missing),
            "--patches",
            p(&rects)
        ])),
        2
    );
    // identical patches cannot be fitted
    let flat: Vec<Rect> = (0..6).map(|_| Rect::new(0, 0, 8, 8)).collect();
    let flat_path = dir.path().join("flat.json");
    write_json(&flat_path, &flat).unwrap();
    assert_eq!(
        code(&cranscope(&[
            "calibrate",
            "--card",
            p(&card),
            "--patches",
            p(&flat_path),
            "--out",
            p(&out)
        ])),
        2
    );
}

#[test]
fn synth_writes_one_directory_per_bog_date() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--dates", "6", "--bogs", "2", "--seed", "4"]);
    let index = load_dataset(&data).unwrap();
    assert_eq!(index.sessions.len(), 12);
    assert_eq!(index.frame_count(), 12);
    for s in &index.sessions {
        assert!(data.join(&s.dir).join("truth").is_dir());
    }
}

#[test]
fn synth_is_deterministic_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let args = ["--dates", "2", "--bogs", "1", "--seed", "11"];
    synth(&a, &args);
    synth(&b, &args);
    synth(&c, &["--dates", "2", "--bogs", "1", "--seed", "12"]);
    assert_eq!(files(&a), files(&b));
    assert_ne!(files(&a), files(&c));
}

#[test]
fn synth_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let bad_sum = cranscope(&["synth", "--out", p(&out), "--mixture", "0.5,0.5,0.5,0,0"]);
    assert_eq!(code(&bad_sum), 64);
    let negative = cranscope(&["synth", "--out", p(&out), "--mixture", "1.2,-0.2,0,0,0"]);
    assert_eq!(code(&negative), 64);
    let short = cranscope(&["synth", "--out", p(&out), "--mixture", "1,0"]);
    assert_eq!(code(&short), 64);
    assert_eq!(
        code(&cranscope(&["synth", "--out", p(&out), "--dates", "0"])),
        64
    );
    assert!(!out.exists());
}

#[test]
fn synth_refuses_occupied_output_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("keep"), "x").unwrap();
    let args = ["synth", "--out", p(&out), "--dates", "1", "--bogs", "1"];
    assert_ne!(code(&cranscope(&args)), 0);
    assert!(out.join("keep").exists());
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&cranscope(&forced)), 0);
    assert!(!out.join("keep").exists());
}

#[test]
fn eval_identical_dirs_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--dates", "2", "--bogs", "1"]);
    let o = cranscope(&["eval", "--pred", p(&data), "--truth", p(&data)]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["miou"], 1.0);
    assert_eq!(report["count_mae"], 0.0);
}

#[test]
fn eval_mismatched_sets_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    synth(&a, &["--dates", "2", "--bogs", "1"]);
    synth(&b, &["--dates", "3", "--bogs", "1"]);
    assert_eq!(
        code(&cranscope(&["eval", "--pred", p(&a), "--truth", p(&b)])),
        2
    );
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(
        code(&cranscope(&["eval", "--pred", p(&empty), "--truth", p(&a)])),
        2
    );
}

#[test]
fn run_on_empty_dataset_writes_empty_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    let out = dir.path().join("out");
    let o = cranscope(&["run", "--dataset", p(&data), "--train", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));
    let csv = fs::read_to_string(out.join("ripeness.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    let risk: serde_json::Value = read_json(&out.join("risk.json")).unwrap();
    assert_eq!(risk, serde_json::json!([]));
}

#[test]
fn run_without_scorer_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--dates", "1", "--bogs", "1"]);
    let out = dir.path().join("out");
    assert_eq!(
        code(&cranscope(&[
            "run",
            "--dataset",
            p(&data),
            "--out",
            p(&out)
        ])),
        64
    );
    assert_eq!(code(&cranscope(&["run", "--train", "--out", p(&out)])), 64);
    // a config path that does not exist fails validation
    let missing = dir.path().join("missing");
    assert_eq!(
        code(&cranscope(&[
            "run",
            "--dataset",
            p(&missing),
            "--train",
            "--out",
            p(&out)
        ])),
        64
    );
    assert!(!out.exists());
}

#[test]
fn untrained_scorer_aborts_with_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--dates", "1", "--bogs", "1"]);
    let scorer = PixelScorer {
        weights: [0.0; 7],
        trained: false,
        training_loss_history: vec![],
    };
    let scorer_path = dir.path().join("scorer.json");
    write_json(&scorer_path, &scorer).unwrap();
    let out = dir.path().join("out");
    let o = cranscope(&[
        "run",
        "--dataset",
        p(&data),
        "--scorer",
        p(&scorer_path),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("scorer"));
    assert!(!out.exists());
    assert!(!dir.path().join("out.partial").exists());
}

#[test]
fn empty_segmentation_fails_in_color_stage() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--dates", "2", "--bogs", "1"]);
    // a scorer that fires on nothing leaves no berry pixels
    let scorer = PixelScorer {
        weights: [-20.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        trained: true,
        training_loss_history: vec![],
    };
    let scorer_path = dir.path().join("scorer.json");
    write_json(&scorer_path, &scorer).unwrap();
    let out = dir.path().join("out");
    let o = cranscope(&[
        "run",
        "--dataset",
        p(&data),
        "--scorer",
        p(&scorer_path),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("color-model"));
    assert!(!out.exists());
}

#[test]
fn staged_commands_match_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--dates", "2", "--bogs", "1", "--seed", "9"]);
    let scorer = dir.path().join("scorer.json");
    let o = cranscope(&["train", "--dataset", p(&data), "--out", p(&scorer)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let seg = dir.path().join("seg");
    let o = cranscope(&[
        "segment",
        "--dataset",
        p(&data),
        "--scorer",
        p(&scorer),
        "--out",
        p(&seg),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = cranscope(&["eval", "--pred", p(&seg), "--truth", p(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["miou"].as_f64().unwrap() >= 0.7);

    let cls = dir.path().join("cls");
    let o = cranscope(&[
        "classify",
        "--dataset",
        p(&data),
        "--masks",
        p(&seg),
        "--out",
        p(&cls),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let run = dir.path().join("run");
    let o = cranscope(&[
        "run",
        "--dataset",
        p(&data),
        "--scorer",
        p(&scorer),
        "--out",
        p(&run),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(cls.join("histograms.csv")).unwrap(),
        fs::read(run.join("histograms.csv")).unwrap()
    );

    let rep = dir.path().join("rep");
    let o = cranscope(&[
        "report",
        "--histograms",
        p(&cls.join("histograms.csv")),
        "--dataset",
        p(&data),
        "--out",
        p(&rep),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["ripeness.csv", "risk.json", "varieties.json"] {
        assert_eq!(
            fs::read(rep.join(name)).unwrap(),
            fs::read(run.join(name)).unwrap(),
            "{name}"
        );
    }
    let missing = dir.path().join("none.csv");
    let rep2 = dir.path().join("rep2");
    let o = cranscope(&["report", "--histograms", p(&missing), "--out", p(&rep2)]);
    assert_eq!(code(&o), 2);
    let o = cranscope(&[
        "report",
        "--histograms",
        p(&cls.join("histograms.csv")),
        "--threshold",
        "0",
        "--out",
        p(&rep2),
    ]);
    assert_eq!(code(&o), 64);
}

#[test]
fn run_manifest_tracks_config_and_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--dates", "2", "--bogs", "1", "--seed", "2"]);
    let run = |out: &Path, extra: &[&str]| -> Manifest {
        let mut args = vec![
            "run",
            "--dataset",
            p(&data),
            "--train",
            "--out",
            p(out),
            "--manifest",
        ];
        args.extend_from_slice(extra);
        let o = cranscope(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let printed: Manifest = serde_json::from_slice(&o.stdout).unwrap();
        let stored: Manifest = read_json(&out.join("manifest.json")).unwrap();
        assert_eq!(printed, stored);
        printed
    };
    let a = run(&dir.path().join("a"), &[]);
    let b = run(&dir.path().join("b"), &["--jobs", "1"]);
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.input_hash, b.input_hash);
    let c = run(&dir.path().join("c"), &["--threshold", "0.7"]);
    assert_ne!(a.config_hash, c.config_hash);
    assert_eq!(a.input_hash, c.input_hash);

    let bog = data.join("B1").join("bog.json");
    let mut text = fs::read_to_string(&bog).unwrap();
    text.push('\n');
    fs::write(&bog, text).unwrap();
    let d = run(&dir.path().join("d"), &[]);
    assert_eq!(a.config_hash, d.config_hash);
    assert_ne!(a.input_hash, d.input_hash);
}

#[test]
fn histogram_svgs_are_xml_with_five_bars_per_panel() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, &["--dates", "3", "--bogs", "2", "--seed", "5"]);
    let out = dir.path().join("out");
    let o = cranscope(&["run", "--dataset", p(&data), "--train", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for bog in ["B1", "B2"] {
        let text = fs::read_to_string(out.join(format!("histograms_{bog}.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        let panels: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("panel"))
            .collect();
        assert_eq!(panels.len(), 3);
        for panel in panels {
            let bars = panel
                .descendants()
                .filter(|n| n.has_tag_name("rect") && n.attribute("class") == Some("bar"))
                .count();
            assert_eq!(bars, 5);
        }
    }
}
