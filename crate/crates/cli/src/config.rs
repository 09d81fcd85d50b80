//! Config resolution: command-line flags override config-file values, which
//! override the built-in defaults.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use cornerwalk::{
    ApMode, DetectorConfig, OracleKind, OracleSpec, PyramidSpec, SceneLaw, WarpFrame,
};

/// Flags shared by every subcommand. All optional; unset flags defer to the
/// config file, then to the defaults.
#[derive(Debug, Args)]
pub struct CommonOpts {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for scene generation, sampling and oracle noise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corner step length in warped pixels.
    #[arg(long)]
    pub l: Option<f64>,
    /// Stop band half-width in warped pixels.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Iteration cap per walk.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Warped input side; also sets the proposal window side.
    #[arg(long)]
    pub warp: Option<u32>,
    /// IoU threshold for the first merge pass.
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// IoU threshold for the post-refinement merge pass.
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// Enlargement factor for the rescale-and-redetect pass.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Disable the rescale-and-redetect pass.
    #[arg(long)]
    pub no_refine: bool,
    /// Number of pyramid scales.
    #[arg(long)]
    pub scales: Option<usize>,
    /// Size ratio between successive pyramid scales.
    #[arg(long)]
    pub scale_step: Option<f64>,
    /// Comma-separated canvas aspect multipliers.
    #[arg(long, value_delimiter = ',')]
    pub aspects: Option<Vec<f64>>,
    /// Sliding-window stride on the canvas.
    #[arg(long)]
    pub stride: Option<u32>,
    /// Direction oracle: ground-truth, noisy or grid.
    #[arg(long, value_parser = parse_oracle_kind)]
    pub oracle: Option<OracleKind>,
    /// Softening mass spread over non-argmax activations.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Per-corner flip probability for the noisy oracle.
    #[arg(long)]
    pub noise_p: Option<f64>,
    /// Grid file for the replay oracle.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// AP protocol: eleven-point or all-point.
    #[arg(long, value_parser = parse_ap_mode)]
    pub ap_mode: Option<ApMode>,
    /// Number of scenes to generate.
    #[arg(long)]
    pub count: Option<usize>,
    /// Training batch size (multiple of 32).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Scene-law overrides as a JSON object, e.g. `{"instances":[2,4]}`.
    #[arg(long, value_parser = parse_law_patch)]
    pub law: Option<serde_json::Map<String, serde_json::Value>>,
}

fn parse_oracle_kind(s: &str) -> Result<OracleKind, String> {
    match s {
        "ground-truth" => Ok(OracleKind::GroundTruth),
        "noisy" => Ok(OracleKind::Noisy),
        "grid" => Ok(OracleKind::Grid),
        other => Err(format!(
            "unknown oracle `{other}` (expected ground-truth, noisy or grid)"
        )),
    }
}

fn parse_ap_mode(s: &str) -> Result<ApMode, String> {
    match s {
        "eleven-point" => Ok(ApMode::ElevenPoint),
        "all-point" => Ok(ApMode::AllPoint),
        other => Err(format!(
            "unknown AP mode `{other}` (expected eleven-point or all-point)"
        )),
    }
}

fn parse_law_patch(s: &str) -> Result<serde_json::Map<String, serde_json::Value>, String> {
    serde_json::from_str(s).map_err(|e| format!("--law expects a JSON object: {e}"))
}

/// The fully resolved configuration a run executes under.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub detector: DetectorConfig,
    pub pyramid: PyramidSpec,
    pub oracle: OracleSpec,
    pub law: SceneLaw,
    pub ap_mode: ApMode,
    pub seed: u64,
    pub count: usize,
    pub batch_size: usize,
}

/// Config-file shape. Sections may be partial; missing fields of a present
/// section fall back to that section's defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    detector: Option<DetectorConfig>,
    pyramid: Option<PyramidSpec>,
    oracle: Option<OracleSpec>,
    law: Option<SceneLaw>,
    ap_mode: Option<ApMode>,
    seed: Option<u64>,
    count: Option<usize>,
    batch_size: Option<usize>,
}

/// Merges flags over the config file over the defaults and validates the
/// result.
pub fn resolve(opts: &CommonOpts) -> Result<Resolved> {
    let (raw, file) = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            let raw: serde_json::Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing config file {}", path.display()))?;
            let file: FileConfig = serde_json::from_value(raw.clone())
                .with_context(|| format!("invalid config file {}", path.display()))?;
            (raw, file)
        }
        None => (serde_json::Value::Null, FileConfig::default()),
    };

    let mut detector = file.detector.unwrap_or_default();
    let mut pyramid = file.pyramid.unwrap_or_default();
    let mut oracle = file.oracle.unwrap_or_default();
    let mut law = file.law.unwrap_or_default();
    let mut ap_mode = file.ap_mode.unwrap_or_default();
    let seed = opts.seed.or(file.seed).unwrap_or(0);
    let count = opts.count.or(file.count).unwrap_or(100);
    let batch_size = opts.batch_size.or(file.batch_size).unwrap_or(64);

    if let Some(v) = opts.l {
        detector.l = v;
    }
    if let Some(v) = opts.tau {
        detector.tau = v;
    }
    if let Some(v) = opts.max_iters {
        detector.max_iters = v;
    }
    if let Some(side) = opts.warp {
        detector.warp = WarpFrame::new(side)?;
        pyramid.window = side;
    }
    if let Some(v) = opts.alpha0 {
        detector.alpha0 = v;
    }
    if let Some(v) = opts.alpha1 {
        detector.alpha1 = v;
    }
    if let Some(v) = opts.beta {
        detector.beta = v;
    }
    if opts.no_refine {
        detector.refine = false;
    }
    // Without refinement the single merge pass uses a stricter threshold,
    // unless alpha0 was pinned explicitly by flag or config file.
    let alpha0_pinned = opts.alpha0.is_some() || raw.pointer("/detector/alpha0").is_some();
    if !detector.refine && !alpha0_pinned {
        detector.alpha0 = DetectorConfig::ALPHA0_NO_REFINE;
    }

    if let Some(v) = opts.scales {
        pyramid.n_scales = v;
    }
    if let Some(v) = opts.scale_step {
        pyramid.scale_step = v;
    }
    if let Some(v) = &opts.aspects {
        pyramid.aspects = v.clone();
    }
    if let Some(v) = opts.stride {
        pyramid.stride = v;
    }

    if let Some(v) = opts.oracle {
        oracle.kind = v;
    }
    if let Some(v) = opts.epsilon {
        oracle.epsilon = v;
    }
    if let Some(v) = opts.noise_p {
        oracle.noise_p = v;
    }
    if let Some(v) = &opts.grid {
        oracle.grid = Some(v.clone());
    }
    // The run seed drives oracle noise unless the config file pins its own.
    if opts.seed.is_some() || raw.pointer("/oracle/seed").is_none() {
        oracle.seed = seed;
    }

    if let Some(patch) = &opts.law {
        law = patch_law(&law, patch)?;
    }
    if let Some(v) = opts.ap_mode {
        ap_mode = v;
    }

    detector.validate()?;
    pyramid.validate()?;
    law.validate()?;

    Ok(Resolved {
        detector,
        pyramid,
        oracle,
        law,
        ap_mode,
        seed,
        count,
        batch_size,
    })
}

fn patch_law(
    law: &SceneLaw,
    patch: &serde_json::Map<String, serde_json::Value>,
) -> Result<SceneLaw> {
    let mut value = serde_json::to_value(law).expect("law serializes");
    let obj = value.as_object_mut().expect("law serializes to an object");
    for (key, val) in patch {
        obj.insert(key.clone(), val.clone());
    }
    serde_json::from_value(value).context("invalid --law override")
}

/// Prints the resolved config as one JSON line on stderr, keeping stdout
/// clean for piped output.
pub fn echo(command: &str, resolved: &Resolved) {
    #[derive(Serialize)]
    struct Line<'a> {
        command: &'a str,
        #[serde(flatten)]
        resolved: &'a Resolved,
    }
    eprintln!(
        "{}",
        serde_json::to_string(&Line { command, resolved }).expect("config serializes")
    );
}
