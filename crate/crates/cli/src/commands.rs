//! Subcommand implementations.
//!
//! All output files are written through [`write_text`], which stages the
//! contents in a sibling temp file and renames into place, so an interrupted
//! run never leaves a partial file behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use cornerwalk::detector::TraceStep;
use cornerwalk::eval::run_benchmark;
use cornerwalk::geometry::BBox;
use cornerwalk::merge::RunPhase;
use cornerwalk::oracle::{build_oracle, OracleKind, OracleSpec};
use cornerwalk::{
    compose_batch, detect_scene_detailed, evaluate_detections, generate_scenes, IterStats, PrPoint,
    Scene, SceneDetectionRecord,
};

use crate::config::Resolved;

/// Iteration statistics sidecar written next to a detections file, so a later
/// `eval` can reproduce the full benchmark report.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct StatsFile {
    pub iters: IterStats,
}

/// One detection run in a trace dump.
#[derive(Serialize)]
struct TraceLine<'a> {
    scene_id: u64,
    phase: RunPhase,
    start: BBox,
    status: &'static str,
    iterations: usize,
    windows: &'a [TraceStep],
}

pub fn gen_scenes(resolved: &Resolved, out: &Path) -> Result<()> {
    let scenes = generate_scenes(resolved.count, &resolved.law, resolved.seed)?;
    write_text(out, &pretty(&scenes)?)
}

pub fn detect(
    resolved: &Resolved,
    scenes_path: &Path,
    out: &Path,
    trace: Option<&Path>,
) -> Result<()> {
    let scenes = read_scenes(scenes_path)?;
    let oracle = build_oracle(
        &resolved.oracle,
        resolved.detector.tau,
        resolved.detector.warp,
    )?;
    let mut detections = String::new();
    let mut trace_lines = String::new();
    let mut counts = Vec::new();
    for scene in &scenes {
        let result = detect_scene_detailed(
            scene,
            oracle.as_ref(),
            &resolved.pyramid,
            &resolved.detector,
        )
        .with_context(|| format!("detection failed on scene {}", scene.id()))?;
        for run in &result.runs {
            counts.push(run.outcome.iterations);
            if trace.is_some() {
                let line = TraceLine {
                    scene_id: scene.id(),
                    phase: run.phase,
                    start: run.start,
                    status: run.outcome.status.name(),
                    iterations: run.outcome.iterations,
                    windows: &run.outcome.trace,
                };
                trace_lines.push_str(&serde_json::to_string(&line)?);
                trace_lines.push('\n');
            }
        }
        for det in &result.detections {
            let record = SceneDetectionRecord {
                scene_id: scene.id(),
                bbox: det.bbox,
                score: det.score,
            };
            detections.push_str(&serde_json::to_string(&record)?);
            detections.push('\n');
        }
    }
    write_text(out, &detections)?;
    let stats = StatsFile {
        iters: IterStats::from_counts(&counts),
    };
    write_text(&stats_path(out), &pretty(&stats)?)?;
    if let Some(path) = trace {
        write_text(path, &trace_lines)?;
    }
    Ok(())
}

pub fn augment(resolved: &Resolved, scenes_path: &Path, out: &Path) -> Result<()> {
    let scenes = read_scenes(scenes_path)?;
    let regions = compose_batch(
        &scenes,
        resolved.batch_size,
        resolved.seed,
        &resolved.detector,
    )?;
    let mut lines = String::new();
    for region in &regions {
        lines.push_str(&serde_json::to_string(region)?);
        lines.push('\n');
    }
    write_text(out, &lines)
}

pub fn eval(
    resolved: &Resolved,
    scenes_path: &Path,
    detections_path: &Path,
    out: &Path,
    pr_csv: Option<&Path>,
) -> Result<()> {
    let scenes = read_scenes(scenes_path)?;
    let detections = read_detections(detections_path)?;
    let stats = read_stats(&stats_path(detections_path))?;
    let report = evaluate_detections(&scenes, &detections, stats.iters, resolved.ap_mode)?;
    write_text(out, &pretty(&report)?)?;
    if let Some(path) = pr_csv {
        write_text(path, &pr_to_csv(&report.pr))?;
    }
    Ok(())
}

pub fn sweep(
    resolved: &Resolved,
    scenes_path: Option<&Path>,
    noise: &[f64],
    out: &Path,
) -> Result<()> {
    let scenes = match scenes_path {
        Some(path) => read_scenes(path)?,
        None => generate_scenes(resolved.count, &resolved.law, resolved.seed)?,
    };
    let mut csv = String::from("noise_p,ap,n_boxes\n");
    for &p in noise {
        let spec = OracleSpec {
            kind: OracleKind::Noisy,
            noise_p: p,
            ..resolved.oracle.clone()
        };
        let oracle = build_oracle(&spec, resolved.detector.tau, resolved.detector.warp)?;
        let output = run_benchmark(
            &scenes,
            oracle.as_ref(),
            &resolved.pyramid,
            &resolved.detector,
            resolved.ap_mode,
        )?;
        csv.push_str(&format!(
            "{},{},{}\n",
            p, output.report.ap, output.report.n_boxes
        ));
    }
    write_text(out, &csv)
}

pub fn simulate(resolved: &Resolved, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let scenes_path = out_dir.join("scenes.json");
    let detections_path = out_dir.join("detections.jsonl");
    gen_scenes(resolved, &scenes_path)?;
    detect(resolved, &scenes_path, &detections_path, None)?;
    eval(
        resolved,
        &scenes_path,
        &detections_path,
        &out_dir.join("report.json"),
        Some(&out_dir.join("pr.csv")),
    )
}

/// Sidecar path for a detections file: `dets.jsonl` -> `dets.jsonl.stats.json`.
pub fn stats_path(detections: &Path) -> PathBuf {
    let name = detections
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    detections.with_file_name(format!("{name}.stats.json"))
}

fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scene file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing scene file {}", path.display()))
}

fn read_detections(path: &Path) -> Result<Vec<SceneDetectionRecord>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading detections file {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line)
            .with_context(|| format!("parsing {} line {}", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

fn read_stats(path: &Path) -> Result<StatsFile> {
    if !path.exists() {
        return Ok(StatsFile::default());
    }
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading stats file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing stats file {}", path.display()))
}

fn pretty(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn pr_to_csv(pr: &[PrPoint]) -> String {
    let mut csv = String::from("recall,precision\n");
    for point in pr {
        csv.push_str(&format!("{},{}\n", point.recall, point.precision));
    }
    csv
}

/// Writes `contents` to `path` via a temp file in the same directory and an
/// atomic rename.
fn write_text(path: &Path, contents: &str) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)
        .with_context(|| format!("creating output directory {}", parent.display()))?;
    let name = path
        .file_name()
        .with_context(|| format!("output path {} has no file name", path.display()))?;
    let tmp = parent.join(format!(".{}.tmp{}", name.to_string_lossy(), process::id()));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("moving {} into place at {}", tmp.display(), path.display()))?;
    Ok(())
}
