use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use synopsis_core::ingest::{parse_annotations, write_tubes, FrameSource};
use synopsis_core::synth::{background_plate, random_tubes, SyntheticConfig, SyntheticVideo};
use synopsis_core::{BoundingBox, Tube, VideoMeta};
use tempfile::TempDir;

fn synopsis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synopsis"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "failed: {}\n{}", stderr(&o), stdout(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const W: u32 = 64;
const H: u32 = 48;

struct Fixture {
    dir: TempDir,
    tubes: Vec<Tube>,
    frame_count: u32,
}

impl Fixture {
    fn new(tubes: Vec<Tube>, frame_count: u32) -> Self {
        let dir = TempDir::new().unwrap();
        let frames = dir.path().join("frames");
        fs::create_dir(&frames).unwrap();
        let video = SyntheticVideo::new(background_plate(W, H, 5), tubes.clone(), frame_count);
        for i in 0..frame_count {
            video.frame(i).unwrap().save(frames.join(format!("frame_{i:04}.png"))).unwrap();
        }
        let mut det = Vec::new();
        write_tubes(&tubes, &mut det).unwrap();
        fs::write(dir.path().join("detections.txt"), det).unwrap();
        Fixture {
            dir,
            tubes,
            frame_count,
        }
    }

    fn synthetic(seed: u64, tube_count: usize) -> Self {
        let cfg = SyntheticConfig {
            width: W,
            height: H,
            frame_count: 120,
            tube_count,
            min_length: 8,
            max_length: 30,
            min_side: 18,
            max_side: 24,
            max_speed: 1.5,
            seed,
        };
        Fixture::new(random_tubes(&cfg).unwrap(), cfg.frame_count)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn meta(&self) -> VideoMeta {
        VideoMeta::new(W, H, self.frame_count, 25.0).unwrap()
    }

    /// Writes tubes and meta directly, skipping extraction.
    fn stage_tubes(&self) -> (PathBuf, PathBuf) {
        let mut buf = Vec::new();
        write_tubes(&self.tubes, &mut buf).unwrap();
        let tubes = self.path("tubes.csv");
        fs::write(&tubes, buf).unwrap();
        let meta = self.path("meta.json");
        fs::write(&meta, serde_json::to_string(&self.meta()).unwrap()).unwrap();
        (tubes, meta)
    }
}

fn straight_tube(id: u64, start: u32, len: u32, left: u32) -> Tube {
    Tube::new(
        id,
        None,
        (start..start + len).map(|f| BoundingBox::new(f, left, 10, 20, 20)).collect(),
    )
    .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn init_writes_defaults_and_refuses_to_overwrite() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("s.toml");
    ok(synopsis(&["init", s(&cfg)]));
    let text = fs::read_to_string(&cfg).unwrap();
    assert!(text.contains("collision_threshold = 0.2"));
    assert!(text.contains("initial_threshold = 80"));

    let again = synopsis(&["init", s(&cfg)]);
    assert_eq!(again.status.code(), Some(2));
    ok(synopsis(&["init", s(&cfg), "--force"]));
}

#[test]
fn missing_detections_exit_2() {
    let f = Fixture::synthetic(1, 2);
    let o = synopsis(&[
        "extract",
        "--frames",
        s(&f.path("frames")),
        "--detections",
        s(&f.path("absent.txt")),
        "-o",
        s(&f.path("out")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("detections not found"), "{}", stderr(&o));
}

#[test]
fn extract_writes_one_row_per_box() {
    let f = Fixture::synthetic(3, 4);
    let out = f.path("out");
    ok(synopsis(&[
        "extract",
        "--frames",
        s(&f.path("frames")),
        "--detections",
        s(&f.path("detections.txt")),
        "-o",
        s(&out),
    ]));
    let text = fs::read_to_string(out.join("tubes.csv")).unwrap();
    let rows: BTreeSet<(u32, u64)> = text
        .lines()
        .map(|l| {
            let mut it = l.split(',');
            (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), text.lines().count(), "one row per (frame, id)");
    let extracted = parse_annotations(text.as_bytes(), &f.meta()).unwrap();
    assert_eq!(extracted, f.tubes);

    let summary = json(&out.join("extraction.json"));
    assert_eq!(summary["boxes_missed"], 0);
    assert_eq!(summary["log"].as_array().unwrap().len() as u32, f.frame_count);
    assert!(out.join("background.png").exists());
    assert_eq!(json(&out.join("meta.json"))["frame_count"], f.frame_count);
}

#[test]
fn empty_video_gives_empty_tube_file() {
    let f = Fixture::new(Vec::new(), 40);
    let out = f.path("out");
    ok(synopsis(&[
        "extract",
        "--frames",
        s(&f.path("frames")),
        "--detections",
        s(&f.path("detections.txt")),
        "-o",
        s(&out),
    ]));
    assert_eq!(fs::read_to_string(out.join("tubes.csv")).unwrap(), "");
    let summary = json(&out.join("extraction.json"));
    let frames: Vec<u64> = summary["log"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["frame"].as_u64().unwrap())
        .collect();
    assert_eq!(frames, (0..40).collect::<Vec<_>>());
    assert_eq!(summary["detector_queries"], 1);
}

#[test]
fn single_tube_schedules_at_zero() {
    let f = Fixture::new(vec![straight_tube(7, 30, 25, 5)], 100);
    let (tubes, meta) = f.stage_tubes();
    let out = f.path("syn");
    ok(synopsis(&["synopsize", "--tubes", s(&tubes), "--meta", s(&meta), "-o", s(&out)]));
    let schedule = json(&out.join("schedule.json"));
    assert_eq!(schedule["placements"][0]["synopsis_start"], 0);
    assert_eq!(schedule["synopsis_length"], 25);
    let report = json(&out.join("report.json"));
    assert_eq!(report["fr"].as_f64().unwrap(), 25.0 / 100.0);
}

#[test]
fn synopsize_is_byte_identical_across_runs() {
    let f = Fixture::synthetic(11, 20);
    let (tubes, meta) = f.stage_tubes();
    for dir in ["a", "b"] {
        ok(synopsis(&["synopsize", "--tubes", s(&tubes), "--meta", s(&meta), "-o", s(&f.path(dir))]));
    }
    for name in ["schedule.json", "report.json"] {
        assert_eq!(
            fs::read(f.path("a").join(name)).unwrap(),
            fs::read(f.path("b").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn sweep_reports_each_threshold() {
    let f = Fixture::synthetic(12, 12);
    let (tubes, meta) = f.stage_tubes();
    let out = f.path("sweep.json");
    let o = ok(synopsis(&[
        "sweep",
        "--tubes",
        s(&tubes),
        "--meta",
        s(&meta),
        "--thresholds",
        "0.01,0.1,0.5",
        "-o",
        s(&out),
    ]));
    let table = stdout(&o);
    assert!(table.lines().next().unwrap().contains("level"));
    for th in ["TH=0.01", "TH=0.1", "TH=0.5"] {
        assert!(table.contains(th), "{table}");
    }
    let rows = json(&out);
    assert_eq!(rows.as_array().unwrap().len(), 3);
    assert!(rows[0]["report"]["collision_level"].is_number());

    let syn = f.path("syn");
    ok(synopsis(&[
        "synopsize",
        "--tubes",
        s(&tubes),
        "--meta",
        s(&meta),
        "-o",
        s(&syn),
        "--sweep",
        "0.01,0.1,0.5",
    ]));
    assert_eq!(json(&syn.join("sweep.json")), rows);
}

#[test]
fn pipeline_renders_schedule_and_manifest_matches_tubes() {
    let f = Fixture::synthetic(21, 5);
    let out = f.path("out");
    ok(synopsis(&[
        "extract",
        "--frames",
        s(&f.path("frames")),
        "--detections",
        s(&f.path("detections.txt")),
        "-o",
        s(&out),
    ]));
    let meta = out.join("meta.json");
    let tubes = out.join("tubes.csv");
    ok(synopsis(&[
        "synopsize",
        "--tubes",
        s(&tubes),
        "--meta",
        s(&meta),
        "--extraction",
        s(&out.join("extraction.json")),
        "-o",
        s(&out),
    ]));
    assert_eq!(json(&out.join("report.json"))["mor"].as_f64(), Some(0.0));
    let render_dir = out.join("synopsis");
    ok(synopsis(&[
        "render",
        "--schedule",
        s(&out.join("schedule.json")),
        "--tubes",
        s(&tubes),
        "--frames",
        s(&f.path("frames")),
        "--background",
        s(&out.join("background.png")),
        "--meta",
        s(&meta),
        "-o",
        s(&render_dir),
    ]));
    let length = json(&out.join("schedule.json"))["synopsis_length"].as_u64().unwrap();
    let pngs = fs::read_dir(&render_dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("frame_"))
        .count();
    assert_eq!(pngs as u64, length);

    let known: BTreeSet<(u64, u64)> = f
        .tubes
        .iter()
        .flat_map(|t| t.boxes().iter().map(move |b| (t.id(), b.frame as u64)))
        .collect();
    let manifest = json(&render_dir.join("manifest.json"));
    assert_eq!(manifest.as_array().unwrap().len() as u64, length);
    for entry in manifest.as_array().unwrap() {
        for obj in entry["objects"].as_array().unwrap() {
            let key = (obj["tube_id"].as_u64().unwrap(), obj["source_frame"].as_u64().unwrap());
            assert!(known.contains(&key), "{key:?} not in tube file");
        }
    }

    // a background sample directory works in place of the image
    let again = f.path("again");
    ok(synopsis(&[
        "render",
        "--schedule",
        s(&out.join("schedule.json")),
        "--tubes",
        s(&tubes),
        "--frames",
        s(&f.path("frames")),
        "--background",
        s(&out.join("background")),
        "--meta",
        s(&meta),
        "-o",
        s(&again),
    ]));
    assert_eq!(
        fs::read(render_dir.join("manifest.json")).unwrap(),
        fs::read(again.join("manifest.json")).unwrap()
    );
}

#[test]
fn zero_length_schedule_warns_and_emits_nothing() {
    let f = Fixture::synthetic(4, 2);
    let (tubes, meta) = f.stage_tubes();
    let schedule = f.path("schedule.json");
    fs::write(&schedule, r#"{"synopsis_length": 0, "placements": []}"#).unwrap();
    let out = f.path("render");
    let o = ok(synopsis(&[
        "render",
        "--schedule",
        s(&schedule),
        "--tubes",
        s(&tubes),
        "--frames",
        s(&f.path("frames")),
        "--background",
        s(&f.path("frames/frame_0000.png")),
        "--meta",
        s(&meta),
        "-o",
        s(&out),
    ]));
    assert!(stderr(&o).to_lowercase().contains("nothing to render"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn schedule_tube_mismatch_names_the_tube() {
    let f = Fixture::new(vec![straight_tube(1, 0, 10, 0), straight_tube(2, 5, 10, 30)], 40);
    let (tubes, meta) = f.stage_tubes();
    let schedule = f.path("schedule.json");
    fs::write(
        &schedule,
        r#"{"synopsis_length": 10, "placements": [
            {"group_index": 0, "tube_ids": [1], "synopsis_start": 0, "per_tube_starts": [0]},
            {"group_index": 1, "tube_ids": [4242], "synopsis_start": 0, "per_tube_starts": [0]}]}"#,
    )
    .unwrap();
    for cmd in ["render", "score"] {
        let mut args = vec![cmd, "--schedule", s(&schedule), "--tubes", s(&tubes), "--meta", s(&meta)];
        let frames = f.path("frames");
        let bg = f.path("frames/frame_0000.png");
        let out = f.path("o");
        if cmd == "render" {
            args.extend(["--frames", s(&frames), "--background", s(&bg), "-o", s(&out)]);
        }
        let o = synopsis(&args);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        assert!(stderr(&o).contains("4242"), "{cmd}: {}", stderr(&o));
    }
}

#[test]
fn score_identity_and_reversed_schedules() {
    let tubes = vec![straight_tube(1, 0, 10, 0), straight_tube(2, 15, 10, 20), straight_tube(3, 30, 10, 40)];
    let f = Fixture::new(tubes, 40);
    let (tubes, meta) = f.stage_tubes();
    let write = |name: &str, starts: [u32; 3]| {
        let placements: Vec<Value> = starts
            .iter()
            .enumerate()
            .map(|(i, &st)| {
                serde_json::json!({"group_index": i, "tube_ids": [i + 1], "synopsis_start": st, "per_tube_starts": [st]})
            })
            .collect();
        let len = starts.iter().max().unwrap() + 10;
        let p = f.path(name);
        fs::write(&p, serde_json::json!({"synopsis_length": len, "placements": placements}).to_string()).unwrap();
        p
    };
    let identity = write("identity.json", [0, 15, 30]);
    let reversed = write("reversed.json", [20, 10, 0]);

    let report = f.path("identity_report.json");
    ok(synopsis(&["score", "--schedule", s(&identity), "--tubes", s(&tubes), "--meta", s(&meta), "-o", s(&report)]));
    let r = json(&report);
    assert_eq!(r["fr"].as_f64(), Some(1.0));
    assert_eq!(r["cdr"].as_f64(), Some(0.0));

    let report = f.path("reversed_report.json");
    ok(synopsis(&["score", "--schedule", s(&reversed), "--tubes", s(&tubes), "--meta", s(&meta), "-o", s(&report)]));
    assert_eq!(json(&report)["cdr"].as_f64(), Some(1.0));
}

#[test]
fn malformed_tube_file_reports_the_line() {
    let f = Fixture::synthetic(5, 1);
    let (_, meta) = f.stage_tubes();
    let tubes = f.path("bad.csv");
    fs::write(&tubes, "1,1,0,0,10,10\n2,1,0,0,10,10\n3,1,zero,0,10,10\n").unwrap();
    let o = synopsis(&["synopsize", "--tubes", s(&tubes), "--meta", s(&meta), "-o", s(&f.path("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn thread_flag_is_validated() {
    let f = Fixture::synthetic(6, 6);
    let (tubes, meta) = f.stage_tubes();
    let o = synopsis(&["--threads", "0", "synopsize", "--tubes", s(&tubes), "--meta", s(&meta), "-o", s(&f.path("o"))]);
    assert_eq!(o.status.code(), Some(2));
    ok(synopsis(&["--threads", "2", "synopsize", "--tubes", s(&tubes), "--meta", s(&meta), "-o", s(&f.path("o"))]));
}

#[test]
fn bad_config_exits_2() {
    let f = Fixture::synthetic(7, 2);
    let (tubes, meta) = f.stage_tubes();
    let cfg = f.path("bad.toml");
    fs::write(&cfg, "[scheduler]\ndecay_rate = 1.5\n").unwrap();
    let o = synopsis(&["-c", s(&cfg), "synopsize", "--tubes", s(&tubes), "--meta", s(&meta), "-o", s(&f.path("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("decay_rate"), "{}", stderr(&o));
}

#[test]
fn run_chains_stages_and_reruns_identically() {
    let f = Fixture::synthetic(8, 4);
    let cfg = f.path("run.toml");
    let write_cfg = |out: &str| {
        fs::write(
            &cfg,
            format!(
                "[paths]\nframes = {:?}\ndetections = {:?}\noutput = {:?}\n",
                s(&f.path("frames")),
                s(&f.path("detections.txt")),
                s(&f.path(out))
            ),
        )
        .unwrap();
    };
    write_cfg("first");
    ok(synopsis(&["-c", s(&cfg), "run"]));
    write_cfg("second");
    ok(synopsis(&["-c", s(&cfg), "run"]));
    for name in ["tubes.csv", "schedule.json", "report.json", "synopsis/manifest.json", "synopsis/frame_000000.png"] {
        assert_eq!(
            fs::read(f.path("first").join(name)).unwrap(),
            fs::read(f.path("second").join(name)).unwrap(),
            "{name}"
        );
    }
}
