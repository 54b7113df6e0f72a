//! Command-line front end: ingest, tokenize, train, generate, evaluate, and
//! the attention report. Exit codes: 0 success, 1 domain error, 2 usage
//! error. Every run prints the effective configuration it can be reproduced
//! from.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use msat::gen::{attn_report, generate, GenerationTask, SamplingConfig};
use msat::metrics::evaluate_corpus;
use msat::midi::{normalize, parse_smf, song_to_smf, CanonicalSong, NormalizeOptions, Rejection};
use msat::nn::{load_msat, load_single};
use msat::rep::{encode, serialize, write_tokens, Scale};
use msat::train::{train_msat, train_single_scale, ConfigError, TrainConfig};

#[derive(Parser)]
#[command(name = "msat", version, about = "multi-scale music generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse MIDI files into the canonical song corpus.
    Ingest(IngestArgs),
    /// Serialize a song corpus into token files at one scale.
    Tokenize(TokenizeArgs),
    /// Train one single-scale decoder.
    TrainSingle(TrainSingleArgs),
    /// Train the multi-scale model on top of single-scale checkpoints.
    TrainMsat(TrainMsatArgs),
    /// Sample a song from a trained multi-scale checkpoint.
    Generate(GenerateArgs),
    /// Score a generated corpus against a paired reference corpus.
    Evaluate(EvaluateArgs),
    /// Print the global fusion attention table of a checkpoint.
    AttnReport(AttnReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of .mid/.midi files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for song JSON files (overwritten, never appended).
    #[arg(long)]
    out: PathBuf,
    /// Truncate songs to this many beats.
    #[arg(long)]
    max_beats: Option<u16>,
}

#[derive(Args)]
struct TokenizeArgs {
    /// Directory of song JSON files.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for token files.
    #[arg(long)]
    out: PathBuf,
    /// Serialization order: note, bar, or track.
    #[arg(long)]
    scale: String,
}

/// Flags mirroring the config-file keys one-to-one; flags override the file.
#[derive(Args, Default)]
struct TrainFlags {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    max_steps: Option<String>,
    #[arg(long)]
    max_seq_len: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    target_scale: Option<String>,
    #[arg(long)]
    val_every: Option<String>,
    #[arg(long)]
    ckpt: Option<String>,
    #[arg(long)]
    bar_init: Option<String>,
    #[arg(long)]
    d_model: Option<String>,
    #[arg(long)]
    n_embed: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    heads: Option<String>,
    #[arg(long)]
    d_ff: Option<String>,
    #[arg(long)]
    max_len: Option<String>,
}

impl TrainFlags {
    fn overrides(&self) -> [(&'static str, &Option<String>); 18] {
        [
            ("lr", &self.lr),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("batch_size", &self.batch_size),
            ("max_steps", &self.max_steps),
            ("max_seq_len", &self.max_seq_len),
            ("seed", &self.seed),
            ("fusion", &self.fusion),
            ("target_scale", &self.target_scale),
            ("val_every", &self.val_every),
            ("ckpt", &self.ckpt),
            ("bar_init", &self.bar_init),
            ("d_model", &self.d_model),
            ("n_embed", &self.n_embed),
            ("layers", &self.layers),
            ("heads", &self.heads),
            ("d_ff", &self.d_ff),
            ("max_len", &self.max_len),
        ]
    }

    fn build(&self) -> Result<TrainConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                TrainConfig::parse(&text).map_err(config_usage)?
            }
            None => TrainConfig::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(value) = value {
                cfg.set(key, value).map_err(config_usage)?;
            }
        }
        cfg.finish().map_err(config_usage)
    }
}

#[derive(Args)]
struct TrainSingleArgs {
    /// Scale to train: note, bar, or track.
    #[arg(long)]
    scale: String,
    /// Directory of training song JSON files.
    #[arg(long)]
    data: PathBuf,
    /// Directory of validation songs; defaults to validating on the
    /// training set.
    #[arg(long)]
    valid: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct TrainMsatArgs {
    /// Pretrained note-scale checkpoint.
    #[arg(long)]
    note_ckpt: PathBuf,
    /// Pretrained track-scale checkpoint.
    #[arg(long)]
    track_ckpt: PathBuf,
    /// Pretrained bar-scale checkpoint (required when bar_init=pretrained).
    #[arg(long)]
    bar_ckpt: Option<PathBuf>,
    /// Directory of training song JSON files.
    #[arg(long)]
    data: PathBuf,
    /// Directory of validation songs.
    #[arg(long)]
    valid: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct GenerateArgs {
    /// Multi-scale checkpoint to sample from.
    #[arg(long)]
    model: PathBuf,
    /// Task: "instruments" or "continue".
    #[arg(long)]
    task: String,
    /// Comma-separated program numbers (instruments task).
    #[arg(long)]
    instruments: Option<String>,
    /// Prompt song JSON (continue task).
    #[arg(long)]
    prompt: Option<PathBuf>,
    /// Beats of the prompt to preserve (continue task).
    #[arg(long, default_value_t = 16)]
    n_beats: u16,
    /// Output song JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the song as a Standard MIDI File.
    #[arg(long)]
    smf: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Softmax temperature for every field.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Top-k cutoff for every field.
    #[arg(long, default_value_t = 32)]
    top_k: usize,
    #[arg(long, default_value_t = 1024)]
    max_events: usize,
    /// Sample without the validity mask.
    #[arg(long)]
    no_filter: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of generated song JSON files.
    #[arg(long)]
    generated: PathBuf,
    /// Directory of reference song JSON files, paired with the generated
    /// ones in sorted filename order.
    #[arg(long)]
    reference: PathBuf,
    /// Write the full machine-readable report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttnReportArgs {
    /// Multi-scale checkpoint with global fusion.
    #[arg(long)]
    model: PathBuf,
}

enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn config_usage(e: ConfigError) -> Failure {
    usage(e.to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Tokenize(args) => tokenize(args),
        Command::TrainSingle(args) => train_single_cmd(args),
        Command::TrainMsat(args) => train_msat_cmd(args),
        Command::Generate(args) => generate_cmd(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::AttnReport(args) => attn_report_cmd(args),
    }
}

/// Files in `dir` with one of the given extensions, sorted by name so every
/// run visits them in the same order.
fn sorted_files(dir: &Path, extensions: &[&str]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| extensions.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn load_corpus(dir: &Path) -> anyhow::Result<Vec<CanonicalSong>> {
    sorted_files(dir, &["json"])?
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            CanonicalSong::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))
        })
        .collect()
}

fn write_out(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn ingest(args: IngestArgs) -> Result<(), Failure> {
    let opts = match args.max_beats {
        Some(max_beats) => NormalizeOptions { max_beats },
        None => NormalizeOptions::default(),
    };
    println!("# ingest in {} out {} max_beats {}", args.input.display(), args.out.display(), opts.max_beats);
    fs::create_dir_all(&args.out).map_err(anyhow::Error::from)?;

    let mut kept = 0usize;
    let mut rejected = 0usize;
    for path in sorted_files(&args.input, &["mid", "midi"])? {
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let raw = match parse_smf(&bytes) {
            Ok(raw) => raw,
            Err(e) => {
                eprintln!("rejected {}: {e}", path.display());
                rejected += 1;
                continue;
            }
        };
        match normalize(&raw, opts) {
            Ok(song) => {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                write_out(&args.out.join(format!("{stem}.json")), song.to_json().as_bytes())?;
                kept += 1;
            }
            Err(Rejection::NonCommonTime) => {
                eprintln!("rejected {}: not entirely in 4/4", path.display());
                rejected += 1;
            }
            Err(Rejection::NoPitchedNotes) => {
                eprintln!("rejected {}: no pitched notes", path.display());
                rejected += 1;
            }
        }
    }
    println!("ingested {kept} songs, rejected {rejected}");
    Ok(())
}

fn parse_scale(name: &str) -> Result<Scale, Failure> {
    Scale::from_name(name)
        .ok_or_else(|| usage(format!("--scale must be note, bar, or track, got {name}")))
}

fn tokenize(args: TokenizeArgs) -> Result<(), Failure> {
    let scale = parse_scale(&args.scale)?;
    println!("# tokenize in {} out {} scale {}", args.input.display(), args.out.display(), scale.name());
    fs::create_dir_all(&args.out).map_err(anyhow::Error::from)?;

    let mut count = 0usize;
    for path in sorted_files(&args.input, &["json"])? {
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let song = CanonicalSong::from_json(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        let seq = serialize(&encode(&song), scale);
        let stem = path.file_stem().unwrap_or_default().to_string_lossy();
        write_out(&args.out.join(format!("{stem}.tokens")), write_tokens(&seq).as_bytes())?;
        count += 1;
    }
    println!("tokenized {count} songs at the {} scale", scale.name());
    Ok(())
}

fn print_banner(cfg: &TrainConfig, lines: &[String]) {
    println!("# effective configuration");
    for line in lines {
        println!("# {line}");
    }
    print!("{}", cfg.render());
}

fn train_single_cmd(args: TrainSingleArgs) -> Result<(), Failure> {
    let scale = parse_scale(&args.scale)?;
    let cfg = args.flags.build()?;
    let mut banner = vec![format!("train-single scale {}", scale.name()), format!("data {}", args.data.display())];
    if let Some(valid) = &args.valid {
        banner.push(format!("valid {}", valid.display()));
    }
    print_banner(&cfg, &banner);

    let train = load_corpus(&args.data)?;
    let valid = match &args.valid {
        Some(dir) => load_corpus(dir)?,
        None => Vec::new(),
    };
    let mut log = std::io::stdout();
    train_single_scale(&train, &valid, scale, &cfg, &mut log)?;
    println!("saved checkpoint to {}", cfg.ckpt.display());
    Ok(())
}

fn train_msat_cmd(args: TrainMsatArgs) -> Result<(), Failure> {
    let cfg = args.flags.build()?;
    let mut banner = vec![
        format!("train-msat data {}", args.data.display()),
        format!("note_ckpt {}", args.note_ckpt.display()),
        format!("track_ckpt {}", args.track_ckpt.display()),
    ];
    if let Some(bar) = &args.bar_ckpt {
        banner.push(format!("bar_ckpt {}", bar.display()));
    }
    if let Some(valid) = &args.valid {
        banner.push(format!("valid {}", valid.display()));
    }
    print_banner(&cfg, &banner);

    let note = load_single(&args.note_ckpt)?;
    let track = load_single(&args.track_ckpt)?;
    let bar = match &args.bar_ckpt {
        Some(path) => Some(load_single(path)?),
        None => None,
    };
    let train = load_corpus(&args.data)?;
    let valid = match &args.valid {
        Some(dir) => load_corpus(dir)?,
        None => Vec::new(),
    };
    let mut log = std::io::stdout();
    train_msat(&train, &valid, &note, &track, bar.as_ref(), &cfg, &mut log)?;
    println!("saved checkpoint to {}", cfg.ckpt.display());
    Ok(())
}

fn parse_programs(text: &str) -> Result<Vec<u8>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u8>()
                .ok()
                .filter(|&p| p <= 127)
                .ok_or_else(|| usage(format!("--instruments expects programs 0-127, got {s}")))
        })
        .collect()
}

fn generate_cmd(args: GenerateArgs) -> Result<(), Failure> {
    if args.temperature <= 0.0 {
        return Err(usage("--temperature must be positive"));
    }
    if args.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let task = match args.task.as_str() {
        "instruments" => {
            let list = args
                .instruments
                .as_deref()
                .ok_or_else(|| usage("--task instruments needs --instruments"))?;
            GenerationTask::InstrumentInformed { programs: parse_programs(list)? }
        }
        "continue" => {
            let path = args
                .prompt
                .as_ref()
                .ok_or_else(|| usage("--task continue needs --prompt"))?;
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let prompt = CanonicalSong::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            GenerationTask::Continuation { prompt, beats: args.n_beats }
        }
        other => return Err(usage(format!("--task must be instruments or continue, got {other}"))),
    };
    let cfg = SamplingConfig {
        temperature: [args.temperature; 6],
        top_k: [args.top_k; 6],
        max_events: args.max_events,
        seed: args.seed,
        validity_filter: !args.no_filter,
    };
    eprintln!(
        "# generate model {} task {} seed {} temperature {} top_k {} max_events {} filter {}",
        args.model.display(),
        args.task,
        cfg.seed,
        args.temperature,
        args.top_k,
        cfg.max_events,
        cfg.validity_filter,
    );

    let model = load_msat(&args.model)?;
    let (song, diag) = generate(&model, &task, &cfg).map_err(anyhow::Error::from)?;
    eprintln!(
        "generated {} notes; masked fallbacks {}, grammar repairs {}, dropped notes {}",
        song.note_count(),
        diag.masked_fallbacks,
        diag.grammar_repairs,
        diag.dropped_notes,
    );

    let json = song.to_json();
    match &args.out {
        Some(path) => write_out(path, json.as_bytes())?,
        None => println!("{json}"),
    }
    if let Some(path) = &args.smf {
        write_out(path, &song_to_smf(&song))?;
    }
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<(), Failure> {
    println!("# evaluate generated {} reference {}", args.generated.display(), args.reference.display());
    let generated = load_corpus(&args.generated)?;
    let reference = load_corpus(&args.reference)?;
    let report = evaluate_corpus(&generated, &reference).map_err(anyhow::Error::from)?;
    print!("{}", report.table());
    if let Some(path) = &args.out {
        write_out(path, report.to_json().as_bytes())?;
        println!("wrote report to {}", path.display());
    }
    Ok(())
}

fn attn_report_cmd(args: AttnReportArgs) -> Result<(), Failure> {
    let model = load_msat(&args.model)?;
    let table = attn_report(&model).map_err(anyhow::Error::from)?;
    print!("{table}");
    Ok(())
}
