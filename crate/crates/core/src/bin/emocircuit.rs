use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use emocircuit::gwr::{self, GwrNetwork};
use emocircuit::pipeline::gradcheck::{layer_cases, model_case, GradcheckCase, GRADCHECK_TOLERANCE};
use emocircuit::pipeline::{
    build_report, fit_perception, fresh_state, load_corpus, replay, synth_config, train_audio, train_cross,
    train_visual, LoadedEvent, ReplayOutput, Settings, StageReport, SCHEMA,
};
use emocircuit::session::{load_session, load_state, save_state, save_synthetic, write_manifest, BlobMode, Config, ModelState};
use emocircuit::{frontend, Error, Result};

const GWR_HELP: &str = "\
CSV columns, in order: id,habituation,age,wins,arousal_mean,valence_mean,concept,w0..w{dim-1}.
age counts steps since the neuron was created; wins counts annotated samples it absorbed;
arousal_mean, valence_mean and concept are empty for neurons that never won an annotated sample.
DOT output is an undirected graph: nodes labeled `id: concept v=<mean valence>`, edges carry `age`.";

#[derive(Parser)]
#[command(name = "emocircuit", version, about = "Crossmodal emotion perception, affective memories and mood")]
struct Cli {
    /// Plain-text config with `[section]` headers and `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set mood.strength=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Directory for all outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Session JSONL file.
    #[arg(long)]
    session: PathBuf,
    /// Model state to continue from; a fresh state is created when absent.
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum GwrFormat {
    Dot,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference check of every layer and of a whole model. Exits 3 if
    /// any relative error reaches 1e-4.
    Gradcheck {
        #[arg(long)]
        seed: u64,
        /// Model profile for the whole-model check: full, desk or tiny.
        #[arg(long, default_value = "desk")]
        profile: String,
        /// Elements probed per parameter tensor in the whole-model check.
        #[arg(long, default_value_t = 8)]
        per_tensor: usize,
    },
    /// Generate a synthetic session (`session.jsonl` plus media blobs).
    Synth {
        #[arg(long)]
        seed: u64,
    },
    /// Train the visual channel on the concept labels.
    TrainVisual(StageArgs),
    /// Train the auditory channel on the concept labels.
    TrainAudio(StageArgs),
    /// Fine-tune the crossmodal model on arousal and valence.
    TrainCross(StageArgs),
    /// Fit the perception network and the appraisal heads.
    FitPerception(StageArgs),
    /// Feed a session through perception, memories and mood in order.
    Replay {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        state: PathBuf,
    },
    /// Concordance and accuracy tables of a replay against the session annotations.
    Report {
        #[arg(long)]
        session: PathBuf,
        /// Directory written by `replay`; defaults to `--out`.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long, default_value = "replay")]
        title: String,
    },
    /// Export a network topology.
    #[command(after_help = GWR_HELP)]
    ExportGwr {
        #[arg(long)]
        state: PathBuf,
        /// `perception`, `mood` or `memory:<subject>`.
        #[arg(long)]
        which: String,
        #[arg(long, value_enum, default_value = "dot")]
        format: GwrFormat,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gradcheck { .. } => "gradcheck",
            Command::Synth { .. } => "synth",
            Command::TrainVisual(_) => "train-visual",
            Command::TrainAudio(_) => "train-audio",
            Command::TrainCross(_) => "train-cross",
            Command::FitPerception(_) => "fit-perception",
            Command::Replay { .. } => "replay",
            Command::Report { .. } => "report",
            Command::ExportGwr { .. } => "export-gwr",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Gradcheck { seed, .. } | Command::Synth { seed } => Some(*seed),
            Command::TrainVisual(a) | Command::TrainAudio(a) | Command::TrainCross(a) | Command::FitPerception(a) => {
                Some(a.seed)
            }
            _ => None,
        }
    }
}

/// Files produced by a command, relative to `--out`, and a deferred failure
/// reported after the manifest is written.
struct Outcome {
    outputs: Vec<String>,
    failure: Option<Error>,
}

impl From<Vec<String>> for Outcome {
    fn from(outputs: Vec<String>) -> Self {
        Self { outputs, failure: None }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Config::parse(&text, SCHEMA)?
        }
        None => Config::default(),
    };
    for s in &cli.set {
        cfg.set_override(s, SCHEMA)?;
    }
    Ok(cfg)
}

fn write_text(out: &Path, name: &str, text: &str) -> Result<String> {
    let path = out.join(name);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(name.to_string())
}

fn blob_mode(s: &Settings) -> BlobMode {
    if s.side_file_blobs {
        BlobMode::SideFiled
    } else {
        BlobMode::Embedded
    }
}

fn gradcheck_csv(cases: &[GradcheckCase]) -> String {
    let mut s = String::from("name,max_rel_error,checked,passed\n");
    for c in cases {
        s.push_str(&format!("{},{},{},{}\n", c.name, c.max_rel_error, c.checked, c.passed()));
    }
    s
}

type Stage = fn(&mut ModelState, &[LoadedEvent], &Settings, u64) -> Result<StageReport>;

fn run_stage(stage: Stage, name: &str, a: &StageArgs, s: &Settings, out: &Path) -> Result<Outcome> {
    let data = load_corpus(&a.session)?;
    let mut state = match &a.state {
        Some(p) => load_state(p)?,
        None => fresh_state(s)?,
    };
    let report = stage(&mut state, &data, s, a.seed)?;
    for (k, v) in s.effective() {
        state.hyperparameters.insert(k, v);
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_state(&state, &out.join("state.json"), blob_mode(s))?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    let report_name = write_text(out, &format!("{name}.json"), &text)?;
    println!("{name}: {} training events, final loss {:?}", report.train_events, report.losses.last());
    if let Some(acc) = report.test_accuracy {
        println!("  test accuracy {acc:.4}");
    }
    if let Some((a, v)) = report.test_ccc {
        println!("  test CCC arousal {a:.4} valence {v:.4}");
    }
    Ok(vec!["state.json".to_string(), report_name].into())
}

fn select_network<'a>(state: &'a ModelState, which: &str) -> Result<&'a GwrNetwork> {
    match which {
        "perception" => state.perception.as_ref().ok_or_else(|| Error::Invalid("state has no perception network".into())),
        "mood" => Ok(&state.mood.network),
        _ => {
            let subject = which.strip_prefix("memory:").ok_or_else(|| {
                Error::Invalid(format!("--which must be perception, mood or memory:<subject>, got '{which}'"))
            })?;
            state.memories.get(subject).map(|m| &m.network).ok_or_else(|| {
                let known: Vec<&str> = state.memories.memories.keys().map(String::as_str).collect();
                Error::Invalid(format!("no memory for subject '{subject}' (known: {})", known.join(", ")))
            })
        }
    }
}

fn run(cli: &Cli, s: &Settings) -> Result<Outcome> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Gradcheck { seed, profile, per_tensor } => {
            let mut cases = layer_cases(*seed)?;
            cases.push(model_case(profile, *seed, *per_tensor)?);
            for c in &cases {
                let verdict = if c.passed() { "ok" } else { "FAIL" };
                println!("{:<24} {:>12.3e} ({} probes) {verdict}", c.name, c.max_rel_error, c.checked);
            }
            let outputs = vec![write_text(out, "gradcheck.csv", &gradcheck_csv(&cases))?];
            let failed: Vec<&str> = cases.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
            let failure = (!failed.is_empty()).then(|| {
                Error::Numeric(format!("relative error >= {GRADCHECK_TOLERANCE} in {}", failed.join(", ")))
            });
            Ok(Outcome { outputs, failure })
        }
        Command::Synth { seed } => {
            let events = frontend::synth_stream(&synth_config(&s.synth)?, *seed)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            save_synthetic(&out.join("session.jsonl"), &events)?;
            println!("synth: {} events", events.len());
            Ok(vec!["session.jsonl".to_string()].into())
        }
        Command::TrainVisual(a) => run_stage(train_visual, "train-visual", a, s, out),
        Command::TrainAudio(a) => run_stage(train_audio, "train-audio", a, s, out),
        Command::TrainCross(a) => run_stage(train_cross, "train-cross", a, s, out),
        Command::FitPerception(a) => run_stage(fit_perception, "fit-perception", a, s, out),
        Command::Replay { session, state } => {
            let data = load_corpus(session)?;
            let mut st = load_state(state)?;
            let result = replay(&mut st, &data, s)?;
            let mut outputs = result.write_dir(out)?;
            save_state(&st, &out.join("state_final.json"), blob_mode(s))?;
            outputs.push("state_final.json".into());
            println!("replay: {} events, {} mood updates", result.percepts.len(), result.total_mood_updates());
            Ok(outputs.into())
        }
        Command::Report { session, replay, title } => {
            let events = load_session(session)?;
            let result = ReplayOutput::read_dir(replay.as_deref().unwrap_or(out))?;
            let report = build_report(title, &events, &result)?;
            let csv = report.to_csv();
            print!("{csv}");
            Ok(vec![write_text(out, "report.csv", &csv)?, write_text(out, "report.json", &report.to_json()?)?].into())
        }
        Command::ExportGwr { state, which, format } => {
            let st = load_state(state)?;
            let net = select_network(&st, which)?;
            let stem = which.replace(':', "_");
            let (name, text) = match format {
                GwrFormat::Dot => (format!("gwr_{stem}.dot"), gwr::to_dot(net, which)),
                GwrFormat::Csv => (format!("gwr_{stem}.csv"), gwr::to_csv(net)),
            };
            Ok(vec![write_text(out, &name, &text)?].into())
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let s = Settings::from_config(&cfg)?;
    let outcome = run(cli, &s)?;
    let canonical: String = s.effective().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    write_manifest(&cli.out, cli.command.name(), &canonical, cli.command.seed(), &outcome.outputs)?;
    outcome.failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
