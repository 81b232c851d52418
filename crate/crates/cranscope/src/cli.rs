//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{ArgAction, ArgGroup, Args, Parser, Subcommand};
use cranscope_core::albedo::CLASSES;
use cranscope_core::calibration::{fit_correction, measure_grey_patches, Rect, GREY_PATCHES};
use cranscope_core::timeline::{variety_comparison, RiskConfig};

use crate::config::PipelineConfig;
use crate::dataset::load_dataset;
use crate::error::{AppError, AppResult, DataExt, StageExt};
use crate::eval::cmd_eval;
use crate::io::{load_grey_reference, load_palette, read_json, read_rgb, write_json};
use crate::pipeline::{
    classify_stage, cmd_run, color_stage, histogram_stage, load_masks, load_stages, scorer_stage,
    segment_stage, timeline_stage, write_atomically, write_masks, write_reports, COLOR_MODEL_JSON,
    INDEX_JSON,
};
use crate::report::{read_histograms_csv, write_histograms_csv, HISTOGRAMS_CSV, MANIFEST_JSON};
use crate::synth::{cmd_synth, SynthOptions};

#[derive(Debug, Parser)]
#[command(
    name = "cranscope",
    version,
    about = "Cranberry ripeness from calibrated drone imagery"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a radiometric correction from a color-card image.
    Calibrate(CalibrateArgs),
    /// Write a synthetic season in the dataset layout.
    Synth(SynthArgs),
    /// Fit the pixel scorer from annotated crops.
    Train(TrainArgs),
    /// Segment every crop and write instance masks.
    Segment(StageArgs),
    /// Classify berries in existing masks and write class histograms.
    Classify(ClassifyArgs),
    /// Full pipeline: calibrate, tile, segment, classify, report.
    Run(RunArgs),
    /// Compare predicted masks against truth masks.
    Eval(EvalArgs),
    /// Ripeness tables and plots from a histogram CSV.
    Report(ReportArgs),
}

fn parse_rect(s: &str) -> Result<Rect, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("expected x,y,w,h: {e}"))?;
    match v[..] {
        [x, y, w, h] => Ok(Rect::new(x, y, w, h)),
        _ => Err("expected four integers x,y,w,h".into()),
    }
}

fn parse_mixture(s: &str) -> Result<[f64; CLASSES], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("expected five numbers: {e}"))?;
    v.try_into()
        .map_err(|_| "expected five comma-separated shares".to_string())
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("rects").required(true).args(["patches", "rect"])))]
pub struct CalibrateArgs {
    /// Card image (PNG).
    #[arg(long)]
    pub card: PathBuf,
    /// JSON list of six {x, y, w, h} patch rectangles, lightest first.
    #[arg(long)]
    pub patches: Option<PathBuf>,
    /// One patch rectangle `x,y,w,h`; repeat six times, lightest first.
    #[arg(long, value_parser = parse_rect)]
    pub rect: Vec<Rect>,
    /// Grey reference JSON (six values).
    #[arg(long = "grey-reference")]
    pub grey_reference: Option<PathBuf>,
    /// Session id recorded in the output; defaults to the card file stem.
    #[arg(long)]
    pub session: Option<String>,
    #[arg(long, default_value = "calibration.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub bogs: usize,
    #[arg(long, default_value_t = 6)]
    pub dates: usize,
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Berries per frame; 80 to 160 at random when omitted.
    #[arg(long)]
    pub berries: Option<usize>,
    #[arg(long, default_value_t = 0.03)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0.1)]
    pub occlusion: f64,
    /// Fixed class mixture `c1,c2,c3,c4,c5` for every date.
    #[arg(long, value_parser = parse_mixture)]
    pub mixture: Option<[f64; CLASSES]>,
    /// Skip the per-session camera distortion.
    #[arg(long)]
    pub no_distort: bool,
    #[arg(long, default_value_t = cranscope_core::image::DEFAULT_CROP_W)]
    pub width: usize,
    #[arg(long, default_value_t = cranscope_core::image::DEFAULT_CROP_H)]
    pub height: usize,
    #[arg(long)]
    pub palette: Option<PathBuf>,
    #[arg(long = "grey-reference")]
    pub grey_reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Replace a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

/// Settings shared by every pipeline command. Flags override the config
/// file.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// TOML or JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Trained scorer JSON.
    #[arg(long)]
    pub scorer: Option<PathBuf>,
    /// Color model JSON; fitted from segmented berries when omitted.
    #[arg(long = "color-model")]
    pub color_model: Option<PathBuf>,
    #[arg(long = "grey-reference")]
    pub grey_reference: Option<PathBuf>,
    #[arg(long)]
    pub palette: Option<PathBuf>,
    /// Fit the scorer from annotated crops.
    #[arg(long)]
    pub train: bool,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long = "min-area")]
    pub min_area: Option<usize>,
    #[arg(long)]
    pub rfg: Option<u32>,
    #[arg(long)]
    pub rig: Option<u32>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "learning-rate")]
    pub learning_rate: Option<f64>,
    #[arg(long = "train-seed")]
    pub train_seed: Option<u64>,
    #[arg(long = "max-train-pixels")]
    pub max_train_pixels: Option<usize>,
    /// Ripeness ratio marking overheating risk.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Classes counted as red, e.g. `4,5`.
    #[arg(long = "red-classes", value_delimiter = ',')]
    pub red_classes: Option<Vec<u8>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "color-seed")]
    pub color_seed: Option<u64>,
    #[arg(long = "color-sample")]
    pub color_sample: Option<usize>,
    #[arg(long = "crop-width")]
    pub crop_width: Option<usize>,
    #[arg(long = "crop-height")]
    pub crop_height: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl PipelineArgs {
    /// Config file (if any) with flag overrides applied.
    pub fn resolve(&self, output: Option<&Path>) -> AppResult<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        fn set_path(slot: &mut Option<PathBuf>, v: &Option<PathBuf>) {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
        set_path(&mut c.dataset, &self.dataset);
        set_path(&mut c.scorer, &self.scorer);
        set_path(&mut c.color_model, &self.color_model);
        set_path(&mut c.grey_reference, &self.grey_reference);
        set_path(&mut c.palette, &self.palette);
        if let Some(out) = output {
            c.output = Some(out.to_path_buf());
        }
        c.train |= self.train;
        set(&mut c.segmentation.tau, &self.tau);
        set(&mut c.segmentation.kappa, &self.kappa);
        set(&mut c.segmentation.min_area, &self.min_area);
        set(&mut c.segmentation.r_fg, &self.rfg);
        set(&mut c.segmentation.r_ig, &self.rig);
        set(&mut c.training.epochs, &self.epochs);
        set(&mut c.training.learning_rate, &self.learning_rate);
        set(&mut c.training.seed, &self.train_seed);
        set(&mut c.training.max_pixels_per_class, &self.max_train_pixels);
        set(&mut c.risk.threshold, &self.threshold);
        set(&mut c.risk.red_classes, &self.red_classes);
        set(&mut c.k, &self.k);
        set(&mut c.color_seed, &self.color_seed);
        set(&mut c.color_sample, &self.color_sample);
        set(&mut c.crop_width, &self.crop_width);
        set(&mut c.crop_height, &self.crop_height);
        set(&mut c.jobs, &self.jobs);
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Where to write the scorer JSON.
    #[arg(long, default_value = "scorer.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    /// Directory written by `segment` (or a run output).
    #[arg(long)]
    pub masks: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    /// Print the run manifest to stdout.
    #[arg(long)]
    pub manifest: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub histograms: PathBuf,
    /// Dataset root, read for bog varieties.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long = "red-classes", value_delimiter = ',')]
    pub red_classes: Option<Vec<u8>>,
    #[arg(long)]
    pub palette: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

fn calibrate(a: &CalibrateArgs) -> AppResult<()> {
    let rects: [Rect; GREY_PATCHES] = match &a.patches {
        Some(p) => read_json(p)?,
        None => a.rect.clone().try_into().map_err(|v: Vec<Rect>| {
            AppError::Usage(format!(
                "need {GREY_PATCHES} --rect values, got {}",
                v.len()
            ))
        })?,
    };
    let reference = load_grey_reference(a.grey_reference.as_deref())?;
    let card = read_rgb(&a.card)?;
    let session = a.session.clone().unwrap_or_else(|| {
        a.card
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let ctx = || a.card.display().to_string();
    let m = measure_grey_patches(&card, &rects, session).context(ctx)?;
    let corr = fit_correction(&m, &reference).context(ctx)?;
    write_json(&a.out, &corr)?;
    println!(
        "gain {:?} offset {:?} residual_rms {:.3e} -> {}",
        corr.gain,
        corr.offset,
        corr.residual_rms,
        a.out.display()
    );
    Ok(())
}

fn synth(a: &SynthArgs) -> AppResult<()> {
    let opts = SynthOptions {
        bogs: a.bogs,
        dates: a.dates,
        frames: a.frames,
        seed: a.seed,
        berries: a.berries,
        jitter: a.jitter,
        occlusion_rate: a.occlusion,
        mixture: a.mixture,
        distort: !a.no_distort,
        width: a.width,
        height: a.height,
    };
    let palette = load_palette(a.palette.as_deref())?;
    let reference = load_grey_reference(a.grey_reference.as_deref())?;
    let rec = cmd_synth(&a.out, &opts, &palette, &reference, a.jobs, a.force)?;
    println!(
        "wrote {} bogs x {} dates x {} frames to {}",
        rec.scripts.len(),
        opts.dates,
        opts.frames,
        a.out.display()
    );
    Ok(())
}

fn train(a: &TrainArgs) -> AppResult<()> {
    let mut cfg = a.pipeline.resolve(None)?;
    cfg.train = true;
    let loaded = load_stages(&cfg)?;
    let scorer = scorer_stage(&loaded.crops, &cfg)?;
    write_json(&a.out, &scorer)?;
    println!("scorer -> {}", a.out.display());
    Ok(())
}

fn segment(a: &StageArgs) -> AppResult<()> {
    let cfg = a.pipeline.resolve(a.out.as_deref())?;
    let out = cfg.output()?.to_path_buf();
    let loaded = load_stages(&cfg)?;
    let scorer = scorer_stage(&loaded.crops, &cfg)?;
    write_atomically(&out, a.force, |dir| {
        let masks = segment_stage(&loaded.crops, &scorer, &cfg, &loaded.pool).stage("segment")?;
        write_masks(dir, &loaded.crops, &masks).stage("masks")?;
        write_json(&dir.join(INDEX_JSON), &loaded.index)?;
        println!("{} masks -> {}", masks.len(), out.display());
        Ok(())
    })
}

fn classify(a: &ClassifyArgs) -> AppResult<()> {
    let cfg = a.stage.pipeline.resolve(a.stage.out.as_deref())?;
    let out = cfg.output()?.to_path_buf();
    let loaded = load_stages(&cfg)?;
    write_atomically(&out, a.stage.force, |dir| {
        let masks = load_masks(&a.masks, &loaded.crops).stage("masks")?;
        let model = color_stage(&loaded.crops, &masks, &cfg).stage("color-model")?;
        write_json(&dir.join(COLOR_MODEL_JSON), &model)?;
        let cls = classify_stage(&loaded.crops, &masks, &model, &loaded.pool).stage("classify")?;
        let hists = histogram_stage(&loaded.crops, &cls);
        write_histograms_csv(&dir.join(HISTOGRAMS_CSV), &hists)?;
        println!("{} histograms -> {}", hists.len(), out.display());
        Ok(())
    })
}

fn run_cmd(a: &RunArgs) -> AppResult<()> {
    let cfg = a.stage.pipeline.resolve(a.stage.out.as_deref())?;
    let summary = cmd_run(&cfg, a.stage.force)?;
    if a.manifest {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary.manifest).expect("manifest serializes")
        );
    } else {
        println!(
            "{} bogs, {} crops -> {} (see {MANIFEST_JSON})",
            summary.manifest.bogs,
            summary.manifest.crops,
            summary.output.display()
        );
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> AppResult<()> {
    let report = cmd_eval(&a.pred, &a.truth)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

fn report(a: &ReportArgs) -> AppResult<()> {
    let mut risk = RiskConfig::default();
    if let Some(t) = a.threshold {
        risk.threshold = t;
    }
    if let Some(r) = &a.red_classes {
        risk.red_classes = r.clone();
    }
    risk.validate()
        .map_err(|e| AppError::Usage(e.to_string()))?;
    let palette = load_palette(a.palette.as_deref())?;
    let mut hists = read_histograms_csv(&a.histograms)?;
    if let Some(root) = &a.dataset {
        let index = load_dataset(root)?;
        for h in &mut hists {
            h.variety = index
                .sessions
                .iter()
                .find(|s| s.bog_id == h.bog_id)
                .map(|s| s.variety);
        }
    }
    hists.sort_by(|x, y| (&x.bog_id, x.date).cmp(&(&y.bog_id, y.date)));
    let cfg = PipelineConfig {
        risk,
        ..PipelineConfig::default()
    };
    write_atomically(&a.out, a.force, |dir| {
        let series = timeline_stage(&hists, &cfg).map_err(|e| match e {
            AppError::Stage { source, .. } => *source,
            other => other,
        })?;
        write_reports(dir, &hists, &series, &palette)?;
        let ranks = variety_comparison(&series);
        println!(
            "{} bogs, {} varieties ranked -> {}",
            series.len(),
            ranks.len(),
            a.out.display()
        );
        Ok(())
    })
}

/// Parse `args` and run the command, returning the process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("CRANSCOPE_LOG")
        .try_init();

    let result = match &cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Segment(a) => segment(a),
        Command::Classify(a) => classify(a),
        Command::Run(a) => run_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
