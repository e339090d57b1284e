mod selftest;
mod settings;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stlane::data::io::{frame_to_rgb, write_mask};
use stlane::data::{gen_corpus, load_all, CorpusSpec};
use stlane::gradsuite::{layer_suites, primitive_suites, SuiteResult};
use stlane::gradcheck::TOLERANCE;
use stlane::metrics::EvalReport;
use stlane::model::{count_macs, count_params, named_variants, ModelConfig};
use stlane::train::{evaluate, predict_masks, train, Checkpoint, Observer, TraceRow};
use stlane::Error;

use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "stlane", version, about = "Spatial-temporal lane detection engine")]
struct Cli {
    /// Key-value config file; later files override earlier ones.
    #[arg(long, global = true)]
    config: Vec<PathBuf>,
    /// Override one setting, e.g. `--set backbone=segnet`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for data generation, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Checkpoint to read (eval, infer) or write (train).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic train / clean-test / occluded-test corpus.
    GenData(GenData),
    /// Train a model on a dataset directory.
    Train(DataArg),
    /// Evaluate a checkpoint on one or more dataset directories.
    Eval(EvalArgs),
    /// Predict one sequence and write the mask and an overlay PNG.
    Infer(InferArgs),
    /// Parameter and MAC counts.
    Complexity(ComplexityArgs),
    /// Central-difference gradient checks of every primitive and cell.
    Gradcheck(GradcheckArgs),
    /// Run the built-in property checks.
    Selftest,
}

#[derive(Args, Debug)]
struct GenData {
    #[arg(long, default_value_t = 32)]
    train: usize,
    #[arg(long, default_value_t = 8)]
    test_normal: usize,
    #[arg(long, default_value_t = 8)]
    test_occluded: usize,
    /// Materialise the ×4 augmentation of the train split.
    #[arg(long)]
    augment: bool,
}

#[derive(Args, Debug)]
struct DataArg {
    /// Dataset root containing `index.txt`.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset roots; each is reported as one row.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    data: PathBuf,
    /// Position of the sequence in the index.
    #[arg(long, default_value_t = 0)]
    sample: usize,
}

#[derive(Args, Debug)]
struct ComplexityArgs {
    /// Report every named architecture variant at full size.
    #[arg(long, visible_alias = "all-paper-variants")]
    all_variants: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Random instances per suite.
    #[arg(long, default_value_t = 20)]
    instances: usize,
}

/// Exit status: 1 for failed checks, 2 for usage, 3 for I/O and format.
enum Failure {
    Check(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Usage(_) | Error::Config(_) => 2,
                Error::Io { .. } | Error::Image { .. } | Error::Format { .. } | Error::Ingestion { .. } => 3,
                Error::Divergence { .. } | Error::Internal(_) => 1,
            })
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let settings = Settings::resolve(&cli.config, &cli.set, cli.seed)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::GenData(a) => gen_data(&settings, a, &out),
        Command::Train(a) => train_cmd(&settings, &a.data, &out, cli.checkpoint.as_deref()),
        Command::Eval(a) => eval_cmd(&settings, &a.data, &out, need_checkpoint(&cli)?),
        Command::Infer(a) => infer_cmd(&settings, a, &out, need_checkpoint(&cli)?),
        Command::Complexity(a) => complexity_cmd(&settings, a),
        Command::Gradcheck(a) => gradcheck_cmd(a.instances, settings.seed),
        Command::Selftest => selftest::run(settings.seed).map_err(Failure::Check),
    }
}

fn need_checkpoint(cli: &Cli) -> Result<&Path, Error> {
    cli.checkpoint
        .as_deref()
        .ok_or_else(|| Error::Usage("this command needs --checkpoint <path>".into()))
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn gen_data(settings: &Settings, a: &GenData, out: &Path) -> Outcome {
    let mut spec = CorpusSpec::new(a.train, a.test_normal, a.test_occluded, settings.seed);
    spec.augment = a.augment;
    spec.hw = settings.model.input_hw;
    spec.k = settings.sequence_frames;
    eprintln!("gen-data: seed = {}, hw = {:?}, k = {}, augment = {}", spec.seed, spec.hw, spec.k, spec.augment);
    for (split, n) in gen_corpus(out, &spec)? {
        println!("{split}: {n} sequences in {}", out.join(split).display());
    }
    Ok(())
}

struct TrainLog {
    trace: fs::File,
    dir: PathBuf,
}

impl Observer for TrainLog {
    fn on_step(&mut self, row: &TraceRow) -> stlane::Result<()> {
        use std::io::Write;
        writeln!(self.trace, "{}", row.to_line()).map_err(|source| Error::Io {
            path: self.dir.join("trace.csv"),
            source,
        })?;
        if let Some(m) = &row.eval {
            eprintln!("step {:>5}  loss {:.4}  train F1 {:.4}", row.step, row.loss, m.f_measure);
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, checkpoint: &Checkpoint) -> stlane::Result<()> {
        checkpoint.save(&self.dir.join(format!("step_{:06}.stln", checkpoint.step)))
    }
}

fn train_cmd(settings: &Settings, data: &Path, out: &Path, checkpoint: Option<&Path>) -> Outcome {
    settings.log();
    create_dir(out)?;
    write_text(&out.join("config.txt"), &settings.to_kv())?;
    let samples = load_all(data, settings.sequence_frames, settings.model.input_hw)?;
    eprintln!("train: {} sequences from {}", samples.len(), data.display());
    let trace_path = out.join("trace.csv");
    let trace = fs::File::create(&trace_path).map_err(|source| Error::Io {
        path: trace_path.clone(),
        source,
    })?;
    let mut log = TrainLog {
        trace,
        dir: out.to_path_buf(),
    };
    let outcome = train(&settings.model, &settings.train, &samples, &mut log)?;
    let path = checkpoint.map_or_else(|| out.join("model.stln"), Path::to_path_buf);
    outcome.checkpoint().save(&path)?;
    let report = evaluate(&outcome.model, &samples, "train", settings.threads)?;
    write_text(&out.join("train_report.txt"), &report.to_kv())?;
    println!(
        "trained {} steps (class weight {:.3}); train F1 {:.4}; checkpoint {}",
        outcome.steps,
        outcome.class_weight,
        report.pooled.f_measure,
        path.display()
    );
    Ok(())
}

fn eval_cmd(settings: &Settings, data: &[PathBuf], out: &Path, checkpoint: &Path) -> Outcome {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.to_model()?;
    eprintln!("# model (from {})\n{}", checkpoint.display(), model.config.to_kv());
    let macs = count_macs(&model.config, model.config.input_hw)? as f64 / 1e9;
    let params = count_params(&model.config)? as f64 / 1e6;
    let mut reports = Vec::new();
    for dir in data {
        let samples = load_all(dir, settings.sequence_frames, model.config.input_hw)?;
        let name = dir.file_name().map_or_else(|| dir.display().to_string(), |s| s.to_string_lossy().into_owned());
        reports.push(evaluate(&model, &samples, &name, settings.threads)?);
    }
    println!(
        "{:<16} {:>12} {:>10} {:>8} {:>11} {:>10} {:>11}",
        "Set", "Test Acc (%)", "Precision", "Recall", "F1-Measure", "MACs (G)", "Params (M)"
    );
    for r in &reports {
        let m = &r.pooled;
        println!(
            "{:<16} {:>12.2} {:>10.4} {:>8.4} {:>11.4} {:>10.3} {:>11.3}",
            r.name,
            100.0 * m.accuracy,
            m.precision,
            m.recall,
            m.f_measure,
            macs,
            params
        );
    }
    create_dir(out)?;
    let mut rows = format!("{}\n", EvalReport::ROW_HEADER);
    for r in &reports {
        rows.push_str(&r.to_row());
        rows.push('\n');
        write_text(&out.join(format!("eval_{}.txt", r.name)), &r.to_kv())?;
    }
    write_text(&out.join("eval.csv"), &rows)?;
    Ok(())
}

fn infer_cmd(settings: &Settings, a: &InferArgs, out: &Path, checkpoint: &Path) -> Outcome {
    let model = Checkpoint::load(checkpoint)?.to_model()?;
    let samples = load_all(&a.data, settings.sequence_frames, model.config.input_hw)?;
    let sample = samples
        .get(a.sample)
        .ok_or_else(|| Error::Usage(format!("--sample {} but the index has {} sequences", a.sample, samples.len())))?;
    let fitted = stlane::train::fit_samples(&model.config, std::slice::from_ref(sample))?;
    let mask = predict_masks(&model, &fitted)?.remove(0);

    let last = sample.frames.last().expect("validated sample has frames");
    let mut overlay = frame_to_rgb(last);
    for (y, row) in (0..mask.h).map(|y| (y, y * mask.w)) {
        for x in 0..mask.w {
            if mask.data[row + x] == 1 {
                let p = overlay.get_pixel_mut(x as u32, y as u32);
                p.0 = [(p.0[0] as u16 / 2 + 128) as u8, p.0[1] / 2, p.0[2] / 2];
            }
        }
    }
    create_dir(out)?;
    let clip = &sample.meta.clip;
    let mask_path = out.join(format!("{clip}_mask.png"));
    let overlay_path = out.join(format!("{clip}_overlay.png"));
    write_mask(&mask_path, &mask)?;
    overlay.save(&overlay_path).map_err(|source| Error::Image {
        path: overlay_path.clone(),
        source,
    })?;
    println!(
        "{clip}: {} lane pixels; wrote {} and {}",
        mask.lane_pixels(),
        mask_path.display(),
        overlay_path.display()
    );
    Ok(())
}

fn complexity_cmd(settings: &Settings, a: &ComplexityArgs) -> Outcome {
    let rows: Vec<(String, ModelConfig)> = if a.all_variants {
        named_variants().into_iter().map(|(n, c)| (n.to_string(), c)).collect()
    } else {
        settings.log();
        vec![(settings.model.label(), settings.model.clone())]
    };
    println!("{:<26} {:>2} {:>11} {:>10}", "Model", "K", "Params (M)", "MACs (G)");
    for (name, cfg) in rows {
        let params = count_params(&cfg)? as f64 / 1e6;
        let macs = count_macs(&cfg, cfg.input_hw)? as f64 / 1e9;
        println!("{name:<26} {:>2} {params:>11.2} {macs:>10.2}", cfg.frames());
    }
    Ok(())
}

fn print_suites(results: &[SuiteResult]) -> bool {
    let mut ok = true;
    for r in results {
        let pass = r.passed(TOLERANCE);
        ok &= pass;
        println!(
            "{:<4} {:<28} instances {:>3}/{:<3} redrawn {:>3} coords {:>6} max rel err {:.3e}",
            if pass { "ok" } else { "FAIL" },
            r.name,
            r.instances,
            r.requested,
            r.redrawn,
            r.coords,
            r.max_rel_error
        );
    }
    ok
}

fn gradcheck_cmd(instances: usize, seed: u64) -> Outcome {
    let mut ok = print_suites(&primitive_suites(instances, seed)?);
    ok &= print_suites(&layer_suites(instances, seed)?);
    if ok {
        println!("all gradient checks passed (tolerance {TOLERANCE:e})");
        Ok(())
    } else {
        Err(Failure::Check("gradient check above tolerance".into()))
    }
}
