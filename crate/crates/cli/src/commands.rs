use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use image::RgbImage;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use synopsis_core::ingest::{
    median_background, parse_annotations, parse_records, run_extraction, tubes_from_records, write_tubes,
    BackgroundSampleStore, FrameLogEntry, FrameSource, ImageDirFrames, RawRgbFrames, RecordedDetections,
};
use synopsis_core::metrics::{format_table, missed_boxes};
use synopsis_core::render::render_to_dir;
use synopsis_core::types::index_tubes;
use synopsis_core::{
    build_groups, read_schedule, rearrange, score, write_schedule, MetricsReport, SchedulerConfig, SynopsisSchedule,
    Tube, VideoMeta,
};

use crate::config::PipelineConfig;

/// Bad input exits with 2, anything else with 1.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Internal(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Internal(e) => e,
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait ResultExt<T> {
    fn input(self, what: impl FnOnce() -> String) -> CmdResult<T>;
    fn internal(self, what: impl FnOnce() -> String) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn input(self, what: impl FnOnce() -> String) -> CmdResult<T> {
        self.map_err(|e| Failure::Input(e.into().context(what())))
    }

    fn internal(self, what: impl FnOnce() -> String) -> CmdResult<T> {
        self.map_err(|e| Failure::Internal(e.into().context(what())))
    }
}

fn bad_input(message: String) -> Failure {
    Failure::Input(anyhow!(message))
}

fn shown(path: &Path) -> String {
    path.display().to_string()
}

// ---------------------------------------------------------------------------
// shared readers and writers

pub fn load_config(path: Option<&Path>) -> CmdResult<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).input(|| format!("config {}", shown(p))),
        None => Ok(PipelineConfig::default()),
    }
}

fn open_frames(path: &Path, cfg: &PipelineConfig) -> CmdResult<Box<dyn FrameSource>> {
    if path.is_dir() {
        let frames = ImageDirFrames::open(path).input(|| format!("frames {}", shown(path)))?;
        return Ok(Box::new(frames));
    }
    if !path.exists() {
        return Err(bad_input(format!("frames not found: {}", shown(path))));
    }
    let meta = cfg
        .video
        .ok_or_else(|| bad_input("raw frame files need [video] width and height in the config".into()))?;
    let frames = RawRgbFrames::open(path, meta.width, meta.height).input(|| format!("frames {}", shown(path)))?;
    Ok(Box::new(frames))
}

pub fn resolve_meta(meta_path: Option<&Path>, cfg: &PipelineConfig) -> CmdResult<VideoMeta> {
    if let Some(p) = meta_path {
        let file = File::open(p).input(|| format!("meta not found: {}", shown(p)))?;
        let meta: VideoMeta = serde_json::from_reader(BufReader::new(file)).input(|| format!("meta {}", shown(p)))?;
        meta.validate().input(|| format!("meta {}", shown(p)))?;
        return Ok(meta);
    }
    cfg.video
        .ok_or_else(|| bad_input("video metadata missing: pass --meta or set [video] in the config".into()))
}

pub fn read_tubes(path: &Path, meta: &VideoMeta) -> CmdResult<Vec<Tube>> {
    let file = File::open(path).input(|| format!("tubes not found: {}", shown(path)))?;
    parse_annotations(BufReader::new(file), meta).input(|| format!("tubes {}", shown(path)))
}

fn read_schedule_file(path: &Path, tubes: &[Tube]) -> CmdResult<SynopsisSchedule> {
    let index = index_tubes(tubes).input(|| "tube file".into())?;
    let file = File::open(path).input(|| format!("schedule not found: {}", shown(path)))?;
    read_schedule(BufReader::new(file), &index).input(|| format!("schedule {} does not match the tubes", shown(path)))
}

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).internal(|| format!("creating {}", shown(parent)))?;
    }
    Ok(BufWriter::new(File::create(path).internal(|| format!("creating {}", shown(path)))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).internal(|| format!("writing {}", shown(path)))?;
    writeln!(out).and_then(|_| out.flush()).internal(|| format!("writing {}", shown(path)))
}

/// Summary written next to the extracted tubes.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub frames: u32,
    pub detector_queries: usize,
    pub skipped_frames: usize,
    pub mode_switches: usize,
    /// Boxes in the detection file, and those on frames the detector never saw.
    pub boxes_total: u64,
    pub boxes_missed: u64,
    pub log: Vec<FrameLogEntry>,
}

fn read_detection_counts(path: Option<&Path>) -> CmdResult<Option<(u64, u64)>> {
    let Some(p) = path else { return Ok(None) };
    let file = File::open(p).input(|| format!("extraction summary not found: {}", shown(p)))?;
    let s: ExtractionSummary =
        serde_json::from_reader(BufReader::new(file)).input(|| format!("extraction summary {}", shown(p)))?;
    Ok((s.boxes_total > 0).then_some((s.boxes_total, s.boxes_missed)))
}

// ---------------------------------------------------------------------------
// subcommands

pub fn init(output: &Path, force: bool) -> CmdResult {
    if output.exists() && !force {
        return Err(bad_input(format!("{} exists; pass --force to overwrite", shown(output))));
    }
    let mut out = create(output)?;
    out.write_all(PipelineConfig::default_document().as_bytes())
        .and_then(|_| out.flush())
        .internal(|| format!("writing {}", shown(output)))?;
    println!("wrote {}", shown(output));
    Ok(())
}

pub struct ExtractArgs<'a> {
    pub frames: &'a Path,
    pub detections: &'a Path,
    pub out: &'a Path,
}

pub fn extract(cfg: &PipelineConfig, args: &ExtractArgs) -> CmdResult<ExtractionSummary> {
    if !args.detections.is_file() {
        return Err(bad_input(format!("detections not found: {}", shown(args.detections))));
    }
    let frames = open_frames(args.frames, cfg)?;
    if frames.frame_count() == 0 {
        return Err(bad_input(format!("no frames in {}", shown(args.frames))));
    }
    let first = frames.frame(0).input(|| "reading frame 0".into())?;
    let meta = VideoMeta::new(
        first.width(),
        first.height(),
        frames.frame_count(),
        cfg.video.map_or(25.0, |m| m.fps),
    )
    .input(|| "video metadata".into())?;

    let file = File::open(args.detections).input(|| format!("detections {}", shown(args.detections)))?;
    let records = parse_records(BufReader::new(file)).input(|| format!("detections {}", shown(args.detections)))?;
    let mut source =
        RecordedDetections::from_records(&records, &meta).input(|| format!("detections {}", shown(args.detections)))?;
    let extraction = run_extraction(frames.as_ref(), &mut source, &cfg.extraction).input(|| "extraction".into())?;

    let truth = tubes_from_records(&records, &meta).input(|| format!("detections {}", shown(args.detections)))?;
    let (boxes_total, boxes_missed) = missed_boxes(&truth, extraction.skipped_frames());

    fs::create_dir_all(args.out).internal(|| format!("creating {}", shown(args.out)))?;
    let tubes_path = args.out.join("tubes.csv");
    let mut out = create(&tubes_path)?;
    write_tubes(&extraction.tubes, &mut out)
        .and_then(|_| out.flush())
        .internal(|| format!("writing {}", shown(&tubes_path)))?;
    write_json(&args.out.join("meta.json"), &meta)?;
    extraction
        .store
        .save(&args.out.join("background"))
        .internal(|| "writing background samples".into())?;
    if !extraction.store.is_empty() {
        let bg = median_background(&extraction.store).internal(|| "median background".into())?;
        let p = args.out.join("background.png");
        bg.save(&p).internal(|| format!("writing {}", shown(&p)))?;
    } else {
        warn!("no empty frame was seen; background.png not written");
    }

    let summary = ExtractionSummary {
        frames: meta.frame_count,
        detector_queries: extraction.detector_queries(),
        skipped_frames: extraction.skipped_frames().count(),
        mode_switches: extraction.mode_switches(),
        boxes_total,
        boxes_missed,
        log: extraction.log,
    };
    write_json(&args.out.join("extraction.json"), &summary)?;
    println!(
        "{} tubes from {} frames; detector queried on {} frames, {} frames skipped, {}/{} boxes missed",
        extraction.tubes.len(),
        summary.frames,
        summary.detector_queries,
        summary.skipped_frames,
        summary.boxes_missed,
        summary.boxes_total
    );
    Ok(summary)
}

pub struct SynopsizeArgs<'a> {
    pub tubes: &'a Path,
    pub meta: Option<&'a Path>,
    pub extraction: Option<&'a Path>,
    pub out: &'a Path,
}

pub fn synopsize(cfg: &PipelineConfig, args: &SynopsizeArgs) -> CmdResult<MetricsReport> {
    let meta = resolve_meta(args.meta, cfg)?;
    let tubes = read_tubes(args.tubes, &meta)?;
    let detection = read_detection_counts(args.extraction)?;
    let (schedule, report) = plan(&tubes, &meta, cfg, &cfg.scheduler, detection)?;

    fs::create_dir_all(args.out).internal(|| format!("creating {}", shown(args.out)))?;
    let path = args.out.join("schedule.json");
    let mut out = create(&path)?;
    write_schedule(&schedule, &mut out)
        .and_then(|_| out.flush().map_err(Into::into))
        .internal(|| format!("writing {}", shown(&path)))?;
    write_json(&args.out.join("report.json"), &report)?;
    print!("{}", format_table(&[("synopsis".to_string(), report.clone())]));
    Ok(report)
}

fn plan(
    tubes: &[Tube],
    meta: &VideoMeta,
    cfg: &PipelineConfig,
    scheduler: &SchedulerConfig,
    detection: Option<(u64, u64)>,
) -> CmdResult<(SynopsisSchedule, MetricsReport)> {
    let groups = build_groups(tubes, &cfg.grouping).input(|| "grouping".into())?;
    info!("{} tubes in {} groups", tubes.len(), groups.len());
    let schedule = rearrange(&groups, tubes, scheduler).input(|| "scheduling".into())?.schedule;
    let report = score(&schedule, tubes, meta, detection).input(|| "scoring".into())?;
    Ok((schedule, report))
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub collision_threshold: f64,
    pub report: MetricsReport,
}

pub struct SweepArgs<'a> {
    pub tubes: &'a Path,
    pub meta: Option<&'a Path>,
    pub thresholds: &'a [f64],
    pub out: Option<&'a Path>,
}

pub fn sweep(cfg: &PipelineConfig, args: &SweepArgs) -> CmdResult<Vec<SweepRow>> {
    if args.thresholds.is_empty() {
        return Err(bad_input("sweep needs at least one threshold".into()));
    }
    let meta = resolve_meta(args.meta, cfg)?;
    let tubes = read_tubes(args.tubes, &meta)?;
    let mut rows = Vec::with_capacity(args.thresholds.len());
    for &th in args.thresholds {
        let scheduler = SchedulerConfig {
            collision_threshold: th,
            ..cfg.scheduler.clone()
        };
        scheduler.validate().input(|| format!("threshold {th}"))?;
        let (_, report) = plan(&tubes, &meta, cfg, &scheduler, None)?;
        rows.push(SweepRow {
            collision_threshold: th,
            report,
        });
    }
    let labelled: Vec<(String, MetricsReport)> = rows
        .iter()
        .map(|r| (format!("TH={}", r.collision_threshold), r.report.clone()))
        .collect();
    print!("{}", format_table(&labelled));
    if let Some(p) = args.out {
        write_json(p, &rows)?;
    }
    Ok(rows)
}

pub struct RenderArgs<'a> {
    pub schedule: &'a Path,
    pub tubes: &'a Path,
    pub frames: &'a Path,
    pub background: &'a Path,
    pub meta: Option<&'a Path>,
    pub out: &'a Path,
}

fn load_background(path: &Path, capacity: usize) -> CmdResult<RgbImage> {
    if path.is_dir() {
        let store = BackgroundSampleStore::load(path, capacity).input(|| format!("background {}", shown(path)))?;
        return median_background(&store).input(|| format!("background {}", shown(path)));
    }
    if !path.exists() {
        return Err(bad_input(format!("background not found: {}", shown(path))));
    }
    Ok(image::open(path).input(|| format!("background {}", shown(path)))?.to_rgb8())
}

/// Returns the number of frames written.
pub fn render(cfg: &PipelineConfig, args: &RenderArgs) -> CmdResult<u32> {
    let meta = resolve_meta(args.meta, cfg)?;
    let tubes = read_tubes(args.tubes, &meta)?;
    let schedule = read_schedule_file(args.schedule, &tubes)?;
    if schedule.synopsis_length() == 0 {
        warn!("schedule {} has length 0; nothing to render", shown(args.schedule));
        return Ok(0);
    }
    let frames = open_frames(args.frames, cfg)?;
    let background = load_background(args.background, cfg.extraction.empty_frame.fifo_capacity)?;
    let index = index_tubes(&tubes).input(|| "tube file".into())?;
    // Core errors during rendering come from inconsistent inputs (sizes, missing frames).
    let n = render_to_dir(&schedule, &index, frames.as_ref(), &background, &cfg.render, args.out)
        .input(|| "rendering".into())?;
    println!("{n} synopsis frames written to {}", shown(args.out));
    Ok(n)
}

pub struct ScoreArgs<'a> {
    pub schedule: &'a Path,
    pub tubes: &'a Path,
    pub meta: Option<&'a Path>,
    pub extraction: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

pub fn score_schedule(cfg: &PipelineConfig, args: &ScoreArgs) -> CmdResult<MetricsReport> {
    let meta = resolve_meta(args.meta, cfg)?;
    let tubes = read_tubes(args.tubes, &meta)?;
    let schedule = read_schedule_file(args.schedule, &tubes)?;
    let detection = read_detection_counts(args.extraction)?;
    let report = score(&schedule, &tubes, &meta, detection).input(|| "scoring".into())?;
    print!("{}", format_table(&[(shown(args.schedule), report.clone())]));
    if let Some(p) = args.out {
        write_json(p, &report)?;
    }
    Ok(report)
}

/// Runs the stages enabled in the config, wiring each stage's outputs into the next.
pub fn run(cfg: &PipelineConfig) -> CmdResult {
    let need = |p: &Option<PathBuf>, name: &str| {
        p.clone()
            .ok_or_else(|| bad_input(format!("[paths] {name} is required for this run")))
    };
    let out = need(&cfg.paths.output, "output")?;
    let tubes = out.join("tubes.csv");
    let meta = out.join("meta.json");
    let extraction = out.join("extraction.json");
    if cfg.stages.extract {
        extract(
            cfg,
            &ExtractArgs {
                frames: &need(&cfg.paths.frames, "frames")?,
                detections: &need(&cfg.paths.detections, "detections")?,
                out: &out,
            },
        )?;
    }
    let meta_arg = meta.exists().then_some(meta.as_path());
    if cfg.stages.synopsize {
        synopsize(
            cfg,
            &SynopsizeArgs {
                tubes: &tubes,
                meta: meta_arg,
                extraction: extraction.exists().then_some(extraction.as_path()),
                out: &out,
            },
        )?;
    }
    if cfg.stages.render {
        let background = if out.join("background.png").exists() {
            out.join("background.png")
        } else {
            out.join("background")
        };
        render(
            cfg,
            &RenderArgs {
                schedule: &out.join("schedule.json"),
                tubes: &tubes,
                frames: &need(&cfg.paths.frames, "frames")?,
                background: &background,
                meta: meta_arg,
                out: &out.join("synopsis"),
            },
        )?;
    }
    Ok(())
}
