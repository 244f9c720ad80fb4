//! Command-line frontend: detection runs, scoring, synthetic clip
//! generation, classifier training, throughput reports and the child-side
//! backend stub.

use clap::{Parser, Subcommand, ValueEnum};
use mgd::appearance::{
    load_model, save_model, serve_protocol, train_linear_classifier, CentroidDetector,
    CropClassifier, CropDetector, ExternalBackend, PassthroughClassifier, ProtocolKind,
    ServeBackend, TrainParams,
};
use mgd::eval::{evaluate, measure_fps, DetectionRecord};
use mgd::imgproc::{crop, resize_bilinear};
use mgd::seqio::{
    annotate_frame, load_annotations, load_detections, load_pgm, load_sequence, save_annotations,
    save_detections, save_pgm, save_png, save_sequence,
};
use mgd::synth::{synth_generate, SynthConfig};
use mgd::{Frame, Pipeline, PipelineConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mgd", version, about = "Motion-guided small-target detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detection pipeline over a frame sequence.
    Detect {
        /// Directory of %06d.pgm or %06d.png frames, contiguous from 0.
        seq_dir: PathBuf,
        /// Pipeline config file (`key = value`); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output detection CSV (`frame,x,y,w,h,confidence,stage`).
        #[arg(long)]
        out: PathBuf,
        /// Write frames with drawn detection boxes into this directory.
        #[arg(long)]
        annotate: Option<PathBuf>,
        /// Export the 32x32 classifier crops of every emitted detection,
        /// with a manifest CSV, for building training sets.
        #[arg(long)]
        export_crops: Option<PathBuf>,
        /// Classifier backend: passthrough, linear:<model>, external:<cmd>.
        #[arg(long, default_value = "passthrough")]
        lac_backend: String,
        /// Detector backend: centroid, external:<cmd>.
        #[arg(long, default_value = "centroid")]
        lad_backend: String,
    },
    /// Score a detection CSV against ground truth.
    Eval {
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// IoU threshold; a match requires strictly greater overlap.
        #[arg(long, default_value_t = 0.25)]
        iou: f64,
    },
    /// Render a synthetic clip with ground truth.
    Synth {
        /// Scene description (TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output directory: frames plus gt.csv and distractors.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the linear crop classifier.
    TrainClassifier {
        /// Directory of 32x32 crop images.
        #[arg(long)]
        crops: PathBuf,
        /// CSV of `filename,label` rows with label 0 or 1.
        #[arg(long)]
        labels: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure end-to-end throughput over a sequence.
    Bench {
        seq_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the external-backend wire protocol on stdin/stdout with a
    /// built-in backend. Useful for integration tests and as a reference
    /// implementation of the child side.
    BackendStub {
        #[arg(long)]
        kind: StubKind,
        /// passthrough | linear:<model> for cls; centroid for det.
        #[arg(long, default_value_t = String::from("default"))]
        backend: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StubKind {
    Cls,
    Det,
}

enum AppError {
    /// Bad input: config files, CSV files, sequences, CLI values.
    Config(String),
    /// A classifier/detector backend failed.
    Backend(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Backend(_) => 3,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "{m}"),
            AppError::Backend(m) => write!(f, "backend: {m}"),
        }
    }
}

impl From<mgd::seqio::SeqIoError> for AppError {
    fn from(e: mgd::seqio::SeqIoError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<mgd::ConfigError> for AppError {
    fn from(e: mgd::ConfigError) -> Self {
        AppError::Config(format!("config: {e}"))
    }
}

impl From<mgd::PipelineError> for AppError {
    fn from(e: mgd::PipelineError) -> Self {
        AppError::Config(format!("stream: {e}"))
    }
}

impl From<mgd::appearance::BackendError> for AppError {
    fn from(e: mgd::appearance::BackendError) -> Self {
        AppError::Backend(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig, AppError> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn split_external(spec: &str) -> Result<(String, Vec<String>), AppError> {
    let rest = spec.strip_prefix("external:").expect("checked by caller");
    let mut parts = rest.split_whitespace().map(String::from);
    let program = parts
        .next()
        .ok_or_else(|| AppError::Config(format!("empty external backend command `{spec}`")))?;
    Ok((program, parts.collect()))
}

fn make_classifier(spec: &str) -> Result<Box<dyn CropClassifier>, AppError> {
    if spec == "passthrough" {
        return Ok(Box::new(PassthroughClassifier));
    }
    if let Some(path) = spec.strip_prefix("linear:") {
        return Ok(Box::new(load_model(Path::new(path))?));
    }
    if spec.starts_with("external:") {
        let (program, args) = split_external(spec)?;
        return Ok(Box::new(ExternalBackend::spawn(&program, &args, ProtocolKind::Classifier)?));
    }
    Err(AppError::Config(format!("unknown classifier backend `{spec}`")))
}

fn make_detector(spec: &str) -> Result<Box<dyn CropDetector>, AppError> {
    if spec == "centroid" {
        return Ok(Box::new(CentroidDetector::default()));
    }
    if spec.starts_with("external:") {
        let (program, args) = split_external(spec)?;
        return Ok(Box::new(ExternalBackend::spawn(&program, &args, ProtocolKind::Detector)?));
    }
    Err(AppError::Config(format!("unknown detector backend `{spec}`")))
}

fn run(command: Command) -> Result<(), AppError> {
    match command {
        Command::Detect { seq_dir, config, out, annotate, export_crops, lac_backend, lad_backend } => {
            detect(&seq_dir, &config, &out, annotate, export_crops, &lac_backend, &lad_backend)
        }
        Command::Eval { det, gt, iou } => {
            if !(iou > 0.0 && iou < 1.0) {
                return Err(AppError::Config("--iou must be in (0, 1)".into()));
            }
            let dets = load_detections(&det)?;
            let truth = load_annotations(&gt)?;
            let report = evaluate(&dets, &truth, iou);
            println!("precision {:.6}", report.precision);
            println!("recall {:.6}", report.recall);
            println!("f1 {:.6}", report.f1);
            println!("ap {:.6}", report.ap);
            println!(
                "tp {} fp {} fn {}",
                report.true_positives, report.false_positives, report.false_negatives
            );
            Ok(())
        }
        Command::Synth { config, seed, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| AppError::Config(format!("{}: {e}", config.display())))?;
            let scfg: SynthConfig = toml::from_str(&text)
                .map_err(|e| AppError::Config(format!("{}: {e}", config.display())))?;
            scfg.validate().map_err(AppError::Config)?;
            let (frames, gt, distractors) = synth_generate(&scfg, seed);
            save_sequence(&out, &frames)?;
            save_annotations(&out.join("gt.csv"), &gt)?;
            save_annotations(&out.join("distractors.csv"), &distractors)?;
            println!("wrote {} frames to {}", frames.len(), out.display());
            Ok(())
        }
        Command::TrainClassifier { crops, labels, out } => train(&crops, &labels, &out),
        Command::Bench { seq_dir, config } => {
            let cfg = load_config(&config)?;
            let frames = load_sequence(&seq_dir)?;
            if frames.len() < 30 {
                return Err(AppError::Config(format!(
                    "need at least 30 frames for a stable figure, got {}",
                    frames.len()
                )));
            }
            let mut pipeline = Pipeline::with_builtin(cfg);
            let fps = measure_fps(&mut pipeline, &frames);
            println!(
                "fps {:.2} ({} frames at {}x{})",
                fps,
                frames.len(),
                frames[0].width(),
                frames[0].height()
            );
            Ok(())
        }
        Command::BackendStub { kind, backend } => {
            let serve = match (kind, backend.as_str()) {
                (StubKind::Cls, "default" | "passthrough") => {
                    ServeBackend::Classifier(Box::new(PassthroughClassifier))
                }
                (StubKind::Cls, spec) if spec.starts_with("linear:") => {
                    let path = spec.strip_prefix("linear:").unwrap();
                    ServeBackend::Classifier(Box::new(load_model(Path::new(path))?))
                }
                (StubKind::Det, "default" | "centroid") => {
                    ServeBackend::Detector(Box::new(CentroidDetector::default()))
                }
                (_, other) => {
                    return Err(AppError::Config(format!("unknown stub backend `{other}`")))
                }
            };
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            serve_protocol(stdin, stdout, serve)?;
            Ok(())
        }
    }
}

fn detect(
    seq_dir: &Path,
    config: &Option<PathBuf>,
    out: &Path,
    annotate: Option<PathBuf>,
    export_crops: Option<PathBuf>,
    lac_backend: &str,
    lad_backend: &str,
) -> Result<(), AppError> {
    let cfg = load_config(config)?;
    let frames = load_sequence(seq_dir)?;
    let classifier = make_classifier(lac_backend)?;
    let detector = make_detector(lad_backend)?;
    let mut pipeline = Pipeline::new(cfg, classifier, detector);

    let mut results = Vec::new();
    for frame in &frames {
        if let Some(r) = pipeline.push_frame(frame.clone())? {
            results.push(r);
        }
    }
    results.extend(pipeline.flush()?);

    let mut records = Vec::new();
    let mut backend_errors = 0usize;
    for r in &results {
        backend_errors += r.diagnostics.backend_errors;
        for det in &r.detections {
            records.push(DetectionRecord { frame: r.frame_index, det: *det });
        }
    }
    save_detections(out, &records)?;

    if let Some(dir) = &annotate {
        std::fs::create_dir_all(dir)
            .map_err(|e| AppError::Config(format!("{}: {e}", dir.display())))?;
        for r in &results {
            let boxes: Vec<_> = r.detections.iter().map(|d| d.bbox).collect();
            let img = annotate_frame(&frames[r.frame_index as usize], &boxes);
            save_png(&dir.join(format!("{:06}.png", r.frame_index)), &img)?;
        }
    }

    if let Some(dir) = &export_crops {
        std::fs::create_dir_all(dir)
            .map_err(|e| AppError::Config(format!("{}: {e}", dir.display())))?;
        let mut manifest = String::new();
        let mut n = 0usize;
        for r in &results {
            for det in &r.detections {
                let Ok(patch) = crop(&frames[r.frame_index as usize], &det.bbox) else {
                    continue;
                };
                let small = resize_bilinear(&patch, 32, 32);
                let name = format!("crop_{:06}_{n:04}.pgm", r.frame_index);
                save_pgm(&dir.join(&name), &small)?;
                use std::fmt::Write as _;
                writeln!(
                    manifest,
                    "{name},{},{},{},{},{}",
                    r.frame_index, det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h
                )
                .unwrap();
                n += 1;
            }
        }
        std::fs::write(dir.join("manifest.csv"), manifest)
            .map_err(|e| AppError::Config(format!("{}: {e}", dir.display())))?;
    }

    if backend_errors > 0 {
        return Err(AppError::Backend(format!(
            "{backend_errors} backend failures during the run (detections written to {})",
            out.display()
        )));
    }
    println!("wrote {} detections over {} frames to {}", records.len(), results.len(), out.display());
    Ok(())
}

fn train(crops: &Path, labels: &Path, out: &Path) -> Result<(), AppError> {
    let text = std::fs::read_to_string(labels)
        .map_err(|e| AppError::Config(format!("{}: {e}", labels.display())))?;
    let mut samples: Vec<(Frame, bool)> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (file, label) = line.split_once(',').ok_or_else(|| {
            AppError::Config(format!("{}:{}: expected `file,label`", labels.display(), line_no + 1))
        })?;
        let label = match label.trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(AppError::Config(format!(
                    "{}:{}: label must be 0 or 1, got `{other}`",
                    labels.display(),
                    line_no + 1
                )))
            }
        };
        let path = crops.join(file.trim());
        let frame = load_pgm(&path, 0)?;
        let frame =
            if (frame.width(), frame.height()) == (32, 32) { frame } else { resize_bilinear(&frame, 32, 32) };
        samples.push((frame, label));
    }
    if samples.is_empty() {
        return Err(AppError::Config(format!("{}: no samples", labels.display())));
    }
    let model = train_linear_classifier(&samples, &TrainParams::default())?;
    save_model(out, &model)?;

    let mut correct = 0usize;
    let mut model_eval = model.clone();
    for (f, label) in &samples {
        use mgd::appearance::classify_crop;
        let score = classify_crop(&mut model_eval, f)?;
        if (score.value() > 0.5) == *label {
            correct += 1;
        }
    }
    println!(
        "trained on {} samples, training accuracy {:.1}%, model written to {}",
        samples.len(),
        100.0 * correct as f64 / samples.len() as f64,
        out.display()
    );
    Ok(())
}
