//! Command-line surface for the deblurring pipeline: degradation synthesis,
//! filter training, restoration, sharpness-guided blending, and metric
//! reporting over flat dataset directories.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use deblur_core::blending::{blend, run_round, BlendConfig, BlendState};
use deblur_core::inference::restore;
use deblur_core::io::{load_image, save_image};
use deblur_core::kernel::NoiseSpec;
use deblur_core::learning::{train, TrainConfig};
use deblur_core::metrics::{psnr, ssim};
use deblur_core::sharpness::{sharpness_report, QConfig};
use deblur_core::{degrade, FilterBank, Image, KernelSpec};

#[derive(Parser)]
#[command(name = "deblur", version, about = "Dictionary-based out-of-focus deblurring toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Blur (and optionally add noise to) images with a known kernel
    Degrade(DegradeArgs),
    /// Learn a restoration filter bank from a sharp corpus
    Train(TrainArgs),
    /// Restore degraded images with one or more filter banks
    Restore(RestoreArgs),
    /// Fuse candidate restorations with sharpness-guided weights
    Blend(BlendArgs),
    /// Score original/degraded/restored triples (PSNR, SSIM, Q, V, J)
    Eval(EvalArgs),
}

/// Optional JSON config file; flags override these, these override defaults.
#[derive(Debug, Default, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    kernel: Option<KernelSpec>,
    patch_size: Option<usize>,
    stride: Option<usize>,
    noise_sigma: Option<f64>,
    seed: Option<u64>,
    pinv_tolerance: Option<f64>,
    eta: Option<f64>,
    epsilon_w: Option<f64>,
    q_patch_size: Option<usize>,
    q_tau: Option<f64>,
    q_scale: Option<f64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    fn q_config(&self) -> QConfig {
        let d = QConfig::default();
        QConfig {
            patch_size: self.q_patch_size.unwrap_or(d.patch_size),
            tau: self.q_tau.unwrap_or(d.tau),
            scale: self.q_scale.unwrap_or(d.scale),
        }
    }
}

#[derive(Args)]
struct DegradeArgs {
    /// Input image file or flat directory of .png/.pgm files
    #[arg(long)]
    input: PathBuf,
    /// Output directory
    #[arg(long)]
    output: PathBuf,
    /// Blur kernel: gaussian:K:SIGMA, box:K, or identity
    #[arg(long)]
    kernel: Option<KernelSpec>,
    /// Additive Gaussian noise standard deviation
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Noise RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file (flags take precedence)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of sharp training images
    #[arg(long)]
    corpus: PathBuf,
    /// Output filter bank file (.dfbk)
    #[arg(long)]
    output: PathBuf,
    /// Blur kernel the bank will undo: gaussian:K:SIGMA, box:K, or identity
    #[arg(long)]
    kernel: Option<KernelSpec>,
    /// Odd filter side length
    #[arg(long)]
    patch_size: Option<usize>,
    /// Stride between training patch centers (default: 1, or 2 for corpora
    /// larger than 100 images)
    #[arg(long)]
    stride: Option<usize>,
    /// Relative singular-value cutoff for the pseudoinverse
    #[arg(long)]
    pinv_tolerance: Option<f64>,
    /// JSON config file (flags take precedence)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RestoreArgs {
    /// Degraded image file or flat directory
    #[arg(long)]
    input: PathBuf,
    /// Filter bank file; repeat for multiple banks
    #[arg(long = "bank", required = true)]
    banks: Vec<PathBuf>,
    /// Output directory
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BlendArgs {
    /// Candidate restorations of the same scene (at least two)
    #[arg(required = true, num_args = 2..)]
    candidates: Vec<PathBuf>,
    /// Output blended image
    #[arg(long)]
    output: PathBuf,
    /// Blend report path (key = value lines); defaults next to the image
    #[arg(long)]
    report: Option<PathBuf>,
    /// Minimum per-round Q gain before stopping
    #[arg(long)]
    eta: Option<f64>,
    /// JSON config file (flags take precedence)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of sharp originals
    #[arg(long)]
    original: PathBuf,
    /// Directory of degraded inputs (matching filenames)
    #[arg(long)]
    degraded: PathBuf,
    /// Directory of restored outputs (matching filenames)
    #[arg(long)]
    restored: PathBuf,
    /// CSV output path
    #[arg(long, default_value = "eval.csv")]
    csv: PathBuf,
    /// JSON config file (flags take precedence)
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Provenance record written next to every batch of outputs.
#[derive(serde::Serialize)]
struct RunManifest {
    command: String,
    tool_version: &'static str,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: serde_json::Value,
    elapsed_ms: u128,
}

impl RunManifest {
    fn write(&self, dir: &Path) -> Result<PathBuf, String> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text)
            .map_err(|e| format!("cannot write manifest {}: {e}", path.display()))?;
        Ok(path)
    }
}

fn main() {
    init_thread_pool();
    let cli = Cli::parse();
    let start = Instant::now();
    let result = match cli.command {
        Command::Degrade(args) => cmd_degrade(args, start),
        Command::Train(args) => cmd_train(args, start),
        Command::Restore(args) => cmd_restore(args, start),
        Command::Blend(args) => cmd_blend(args, start),
        Command::Eval(args) => cmd_eval(args, start),
    };
    if let Err(failures) = result {
        for f in &failures {
            eprintln!("error: {f}");
        }
        std::process::exit(1);
    }
}

/// DEBLUR_THREADS caps the worker count; unset means one worker per core.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("DEBLUR_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        } else {
            eprintln!("warning: ignoring non-numeric DEBLUR_THREADS={v}");
        }
    }
}

/// A file as-is, or the sorted image files of a flat directory (no recursion).
fn list_inputs(path: &Path) -> Result<Vec<PathBuf>, String> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(format!("no such file or directory: {}", path.display()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| format!("cannot list {}: {e}", path.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("png" | "pgm")
                )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(format!("no .png or .pgm files in {}", path.display()));
    }
    Ok(files)
}

fn ensure_dir(path: &Path) -> Result<(), String> {
    fs::create_dir_all(path).map_err(|e| format!("cannot create {}: {e}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string())
}

type CmdResult = Result<(), Vec<String>>;

fn cmd_degrade(args: DegradeArgs, start: Instant) -> CmdResult {
    let file = FileConfig::load(args.config.as_deref()).map_err(|e| vec![e])?;
    let kernel_spec = args
        .kernel
        .or(file.kernel)
        .unwrap_or(KernelSpec::Gaussian { size: 15, sigma: 2.10 });
    let noise_sigma = args.noise_sigma.or(file.noise_sigma).unwrap_or(0.0);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let kernel = kernel_spec.to_kernel().map_err(|e| vec![e.to_string()])?;

    let inputs = list_inputs(&args.input).map_err(|e| vec![e])?;
    ensure_dir(&args.output).map_err(|e| vec![e])?;

    // each file gets its own deterministic noise stream
    let results: Vec<Result<(PathBuf, Image), String>> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let img = load_image(path).map_err(|e| e.to_string())?;
            let noise = NoiseSpec {
                sigma: noise_sigma,
                seed: seed.wrapping_add(i as u64),
            };
            let out = degrade(&img, &kernel, &noise);
            Ok((args.output.join(format!("{}.png", stem(path))), out))
        })
        .collect();

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (path, result) in inputs.iter().zip(results) {
        match result {
            Ok((out_path, img)) => match save_image(&img, &out_path) {
                Ok(()) => outputs.push(out_path),
                Err(e) => failures.push(format!("{}: {e}", path.display())),
            },
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }

    let manifest = RunManifest {
        command: "degrade".to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
        inputs,
        outputs: outputs.clone(),
        config: serde_json::json!({
            "kernel": kernel_spec.to_string(),
            "noise_sigma": noise_sigma,
            "seed": seed,
        }),
        elapsed_ms: start.elapsed().as_millis(),
    };
    manifest.write(&args.output).map_err(|e| vec![e])?;
    println!("degraded {} image(s) -> {}", outputs.len(), args.output.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(failures)
    }
}

fn cmd_train(args: TrainArgs, start: Instant) -> CmdResult {
    let file = FileConfig::load(args.config.as_deref()).map_err(|e| vec![e])?;
    let kernel = args
        .kernel
        .or(file.kernel)
        .unwrap_or(KernelSpec::Gaussian { size: 15, sigma: 2.10 });
    let patch_size = args.patch_size.or(file.patch_size).unwrap_or(21);
    let mut config = TrainConfig::new(patch_size, kernel);
    config.stride = args.stride.or(file.stride);
    if let Some(t) = args.pinv_tolerance.or(file.pinv_tolerance) {
        config.pinv_tolerance = t;
    }

    let inputs = list_inputs(&args.corpus).map_err(|e| vec![e])?;
    let corpus: Vec<Image> = inputs
        .par_iter()
        .map(|p| load_image(p).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map_err(|e| vec![e])?;

    let bank = train(&corpus, &config).map_err(|e| vec![e.to_string()])?;
    bank.write(&args.output).map_err(|e| vec![e.to_string()])?;

    print_histogram(&bank);
    let out_dir = args
        .output
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let manifest = RunManifest {
        command: "train".to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
        inputs,
        outputs: vec![args.output.clone()],
        config: serde_json::to_value(&config).expect("config serializes"),
        elapsed_ms: start.elapsed().as_millis(),
    };
    manifest.write(&out_dir).map_err(|e| vec![e])?;
    println!("wrote bank {}", args.output.display());
    Ok(())
}

/// Per-bucket population summary: patches per (strength, coherence) cell and
/// the number of angle bins left empty.
fn print_histogram(bank: &FilterBank) {
    println!("bucket population (24 angle bins x 3 strength x 3 coherence):");
    println!("  strength coherence     patches   empty-angles");
    for s in 0..3 {
        for c in 0..3 {
            let mut total = 0u64;
            let mut empty = 0;
            for a in 0..24 {
                let n = bank.counts()[(a * 3 + s) * 3 + c];
                total += n;
                if n == 0 {
                    empty += 1;
                }
            }
            println!("  {s:8} {c:9} {total:11} {empty:14}");
        }
    }
    let populated = bank.counts().iter().filter(|&&n| n > 0).count();
    println!("  populated buckets: {populated}/216");
}

fn cmd_restore(args: RestoreArgs, start: Instant) -> CmdResult {
    let banks: Vec<(String, FilterBank)> = args
        .banks
        .iter()
        .map(|p| FilterBank::read(p).map(|b| (stem(p), b)))
        .collect::<Result<_, _>>()
        .map_err(|e| vec![e.to_string()])?;

    let inputs = list_inputs(&args.input).map_err(|e| vec![e])?;
    ensure_dir(&args.output).map_err(|e| vec![e])?;

    // one output per (input, bank) pair; the bank stem disambiguates when
    // several banks are given
    let multi = banks.len() > 1;
    let results: Vec<Result<Vec<(PathBuf, Image)>, String>> = inputs
        .par_iter()
        .map(|path| {
            let img = load_image(path).map_err(|e| e.to_string())?;
            banks
                .iter()
                .map(|(tag, bank)| {
                    let out = restore(&img, bank).map_err(|e| e.to_string())?;
                    let name = if multi {
                        format!("{}__{}.png", stem(path), tag)
                    } else {
                        format!("{}.png", stem(path))
                    };
                    Ok((args.output.join(name), out))
                })
                .collect()
        })
        .collect();

    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (path, result) in inputs.iter().zip(results) {
        match result {
            Ok(pairs) => {
                for (out_path, img) in pairs {
                    match save_image(&img, &out_path) {
                        Ok(()) => outputs.push(out_path),
                        Err(e) => failures.push(format!("{}: {e}", path.display())),
                    }
                }
            }
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }

    let manifest = RunManifest {
        command: "restore".to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
        inputs,
        outputs: outputs.clone(),
        config: serde_json::json!({
            "banks": args.banks,
        }),
        elapsed_ms: start.elapsed().as_millis(),
    };
    manifest.write(&args.output).map_err(|e| vec![e])?;
    println!("restored {} image(s) -> {}", outputs.len(), args.output.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(failures)
    }
}

fn cmd_blend(args: BlendArgs, start: Instant) -> CmdResult {
    let file = FileConfig::load(args.config.as_deref()).map_err(|e| vec![e])?;
    let mut config = BlendConfig::default();
    if let Some(eta) = args.eta.or(file.eta) {
        config.eta = eta;
    }
    if let Some(ew) = file.epsilon_w {
        config.epsilon_w = ew;
    }
    let qconfig = file.q_config();

    let candidates: Vec<Image> = args
        .candidates
        .par_iter()
        .map(|p| load_image(p).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map_err(|e| vec![e])?;

    let result = blend(&candidates, &config, &qconfig).map_err(|e| vec![e.to_string()])?;
    save_image(&result.image, &args.output).map_err(|e| vec![e.to_string()])?;

    let report = blend_report(&result);
    let report_path = args
        .report
        .unwrap_or_else(|| args.output.with_extension("report.txt"));
    fs::write(&report_path, &report)
        .map_err(|e| vec![format!("cannot write report {}: {e}", report_path.display())])?;
    print!("{report}");

    let out_dir = args
        .output
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let manifest = RunManifest {
        command: "blend".to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
        inputs: args.candidates,
        outputs: vec![args.output, report_path],
        config: serde_json::json!({
            "blend": config,
            "q": qconfig,
        }),
        elapsed_ms: start.elapsed().as_millis(),
    };
    manifest.write(&out_dir).map_err(|e| vec![e])?;
    Ok(())
}

/// Line-oriented key = value report: candidate scores, per-round weights and
/// Q, and the termination reason.
fn blend_report(result: &deblur_core::blending::BlendResult) -> String {
    let state = &result.state;
    let n = state.candidates.len();
    let mut out = String::new();
    out.push_str(&format!("candidates = {n}\n"));
    for (i, q) in state.q_values.iter().enumerate() {
        out.push_str(&format!("q_candidate_{i} = {q:.6}\n"));
    }
    out.push_str(&format!("tie_broken = {}\n", result.tie_broken));
    // replay the deterministic weight trajectory round by round
    let mut replay = BlendState::new(state.candidates.clone(), state.q_values.clone());
    for (round, q) in state.q_history.iter().enumerate() {
        let weights: Vec<String> = replay.weights.iter().map(|w| format!("{w:.6}")).collect();
        out.push_str(&format!("round_{round}_weights = {}\n", weights.join(" ")));
        out.push_str(&format!("round_{round}_q = {q:.6}\n"));
        if round + 1 < state.q_history.len() {
            replay = run_round(&replay).expect("replayed rounds already succeeded");
        }
    }
    out.push_str(&format!("rounds = {}\n", state.round));
    out.push_str(&format!("termination = {:?}\n", result.termination));
    out
}

struct EvalRow {
    name: String,
    psnr: f64,
    ssim: f64,
    report: deblur_core::sharpness::SharpnessReport,
}

fn cmd_eval(args: EvalArgs, start: Instant) -> CmdResult {
    let file = FileConfig::load(args.config.as_deref()).map_err(|e| vec![e])?;
    let qconfig = file.q_config();

    let originals = list_inputs(&args.original).map_err(|e| vec![e])?;
    let results: Vec<Result<EvalRow, String>> = originals
        .par_iter()
        .map(|orig_path| {
            let name = orig_path
                .file_name()
                .expect("listed files have names")
                .to_string_lossy()
                .into_owned();
            let degr_path = find_counterpart(&args.degraded, orig_path)?;
            let rest_path = find_counterpart(&args.restored, orig_path)?;
            let original = load_image(orig_path).map_err(|e| e.to_string())?;
            let degraded = load_image(&degr_path).map_err(|e| e.to_string())?;
            let restored = load_image(&rest_path).map_err(|e| e.to_string())?;
            let psnr = psnr(&original, &restored).map_err(|e| e.to_string())?;
            let ssim = ssim(&original, &restored).map_err(|e| e.to_string())?;
            let report = sharpness_report(&original, &degraded, &restored, &qconfig)
                .map_err(|e| e.to_string())?;
            Ok(EvalRow { name, psnr, ssim, report })
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (path, result) in originals.iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }

    print_eval_table(&rows);
    write_eval_csv(&rows, &args.csv).map_err(|e| vec![e])?;

    let csv_dir = args
        .csv
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let manifest = RunManifest {
        command: "eval".to_string(),
        tool_version: env!("CARGO_PKG_VERSION"),
        inputs: originals,
        outputs: vec![args.csv.clone()],
        config: serde_json::json!({ "q": qconfig }),
        elapsed_ms: start.elapsed().as_millis(),
    };
    manifest.write(&csv_dir).map_err(|e| vec![e])?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(failures)
    }
}

/// The file in `dir` with the same stem as `original` (extension may differ,
/// e.g. a .pgm original restored to .png).
fn find_counterpart(dir: &Path, original: &Path) -> Result<PathBuf, String> {
    let exact = dir.join(original.file_name().expect("listed files have names"));
    if exact.is_file() {
        return Ok(exact);
    }
    for ext in ["png", "pgm"] {
        let candidate = dir.join(format!("{}.{ext}", stem(original)));
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(format!(
        "no counterpart of {} in {}",
        original.display(),
        dir.display()
    ))
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.3}")
    }
}

fn print_eval_table(rows: &[EvalRow]) {
    let name_w = rows
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(4)
        .max("mean".len());
    println!(
        "{:<name_w$} {:>8} {:>7} {:>8} {:>8} {:>8} {:>8} {:>6}  well_behaved",
        "name", "psnr", "ssim", "q_orig", "q_degr", "q_rest", "v", "j"
    );
    for r in rows {
        println!(
            "{:<name_w$} {:>8} {:>7.4} {:>8.3} {:>8.3} {:>8.3} {:>8.4} {:>6.4}  {}",
            r.name,
            fmt_db(r.psnr),
            r.ssim,
            r.report.q_original,
            r.report.q_degraded,
            r.report.q_restored,
            r.report.v,
            r.report.j,
            r.report.well_behaved
        );
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        println!(
            "{:<name_w$} {:>8} {:>7.4} {:>8.3} {:>8.3} {:>8.3} {:>8.4} {:>6.4}",
            "mean",
            fmt_db(mean(&|r| r.psnr)),
            mean(&|r| r.ssim),
            mean(&|r| r.report.q_original),
            mean(&|r| r.report.q_degraded),
            mean(&|r| r.report.q_restored),
            mean(&|r| r.report.v),
            mean(&|r| r.report.j),
        );
    }
}

/// Fixed, append-only column contract.
fn write_eval_csv(rows: &[EvalRow], path: &Path) -> Result<(), String> {
    let mut text = String::from("name,psnr,ssim,q_orig,q_degr,q_rest,v,j,well_behaved\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.name,
            fmt_db(r.psnr),
            r.ssim,
            r.report.q_original,
            r.report.q_degraded,
            r.report.q_restored,
            r.report.v,
            r.report.j,
            r.report.well_behaved
        ));
    }
    fs::write(path, text).map_err(|e| format!("cannot write csv {}: {e}", path.display()))
}
