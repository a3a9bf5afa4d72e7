//! Command-line front end. The binary only forwards to [`main_with`].

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bits::BitString;
use crate::channel::ChannelSpec;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::key::StegoKey;
use crate::model::TokenId;
use crate::pipeline::{cap_bits, seeded_message, EccSummary, Pipeline, Reference, RunMetrics};
use crate::security::{compare, sample_class, Generator, SecurityReport};
use crate::sweep::{run_sweep, SweepSpec};
use crate::text::StegoText;
use crate::vq::TokenGrid;

#[derive(Debug, Parser)]
#[command(name = "tokensteg", version, about = "Token-level image steganography with a text side channel")]
pub struct Cli {
    /// TOML config with `[section]` headers; defaults fill anything missing.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// 64 hex digits. Derived from the seed when absent.
    #[arg(long, global = true)]
    pub key: Option<String>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hide a message in a generated image (and the ECC text, if enabled).
    Embed(EmbedArgs),
    /// Recover a message from a received image and optional text.
    Extract(ExtractArgs),
    /// Pass an image file through the configured channel.
    Attack(AttackArgs),
    /// Frequency test of stego grids against cover grids.
    SecurityTest(SecurityArgs),
    /// Seeded runs over channel settings or text lengths.
    Sweep(SweepArgs),
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Message file, embedded byte by byte.
    #[arg(long, conflicts_with = "random_bits")]
    pub message: Option<PathBuf>,
    /// Embed this many seeded random bits instead.
    #[arg(long)]
    pub random_bits: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Words (`.txt`) or token ids (`.json`).
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// `reference.json` from `embed`, for scoring.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Channel stages; the config's channel when absent.
    #[arg(long)]
    pub stages: Option<String>,
}

#[derive(Debug, Args)]
pub struct SecurityArgs {
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    /// Also run the greedy-copy control.
    #[arg(long)]
    pub with_control: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `;`-separated channel settings.
    #[arg(long, conflicts_with = "max_tokens")]
    pub channels: Option<String>,
    /// Comma-separated text lengths.
    #[arg(long)]
    pub max_tokens: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub runs: u64,
    #[arg(long, default_value_t = 1000)]
    pub bits: usize,
}

#[derive(Debug, Serialize)]
struct Manifest {
    config_hash: String,
    condition: u32,
    message_bits: usize,
    embedded_bits: usize,
    capacity_bits: usize,
    image: String,
    text: Option<String>,
    ecc: Option<EccSummary>,
}

#[derive(Debug, Serialize)]
struct ExtractReport {
    message: String,
    complete: bool,
    issues: Vec<String>,
    optim_iterations: usize,
    optim_final_loss: f64,
    metrics: Option<RunMetrics>,
}

struct Context {
    config: PipelineConfig,
    key: StegoKey,
    seed: u64,
    jobs: usize,
    out: PathBuf,
}

impl Context {
    fn from_cli(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = cli.seed {
            config.run.seed = s;
        }
        let seed = config.run.seed;
        let key = match &cli.key {
            Some(h) => StegoKey::from_hex(h)?,
            None => StegoKey::from_u64(seed),
        };
        Ok(Self {
            config,
            key,
            seed,
            jobs: cli.jobs.max(1),
            out: cli.out.clone(),
        })
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn save_image(ctx: &Context, stem: &str, image: &ImageTensor) -> Result<PathBuf> {
    let path = ctx.out_path(&format!("{stem}.tsim"))?;
    image.save(&path)?;
    fs::write(ctx.out_path(&format!("{stem}.pnm"))?, image.to_pnm()?)?;
    Ok(path)
}

fn read_text_tokens(path: &Path) -> Result<Vec<TokenId>> {
    let raw = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&raw).map_err(|e| Error::MalformedInput(format!("{}: {e}", path.display())))
    } else {
        StegoText::parse_words(&raw)
    }
}

fn embed(ctx: &Context, args: &EmbedArgs) -> Result<String> {
    let message = match (&args.message, args.random_bits) {
        (Some(p), _) => BitString::from_bytes(&fs::read(p)?),
        (None, Some(n)) => seeded_message(ctx.seed, n),
        (None, None) => return Err(Error::MalformedInput("give --message or --random-bits".into())),
    };
    let pipeline = Pipeline::new(ctx.config.clone())?;
    let sent = pipeline.send(&message, &ctx.key)?;
    let image = save_image(ctx, "stego", &sent.image)?;
    let text = match &sent.text {
        Some(t) => {
            let path = ctx.out_path("stego.txt")?;
            fs::write(&path, t.to_words() + "\n")?;
            write_json(&ctx.out_path("stego.tokens.json")?, &t.tokens)?;
            Some(path.display().to_string())
        }
        None => None,
    };
    write_json(
        &ctx.out_path("reference.json")?,
        &Reference {
            grid: sent.grid.clone(),
            message: message.to_string(),
            embedded_bits: sent.embedded_bits,
        },
    )?;
    let manifest = Manifest {
        config_hash: ctx.config.hash(),
        condition: sent.condition.0,
        message_bits: sent.message_bits,
        embedded_bits: sent.embedded_bits,
        capacity_bits: sent.capacity_bits,
        image: image.display().to_string(),
        text,
        ecc: sent.ecc,
    };
    write_json(&ctx.out_path("manifest.json")?, &manifest)?;
    Ok(serde_json::to_string_pretty(&manifest)?)
}

fn extract(ctx: &Context, args: &ExtractArgs) -> Result<String> {
    let pipeline = Pipeline::new(ctx.config.clone())?;
    let received = ImageTensor::load(&args.image)?;
    let text = args.text.as_deref().map(read_text_tokens).transpose()?;
    let reference: Option<Reference> = match &args.reference {
        Some(p) => Some(
            serde_json::from_str(&fs::read_to_string(p)?)
                .map_err(|e| Error::MalformedInput(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let got = pipeline.receive(&received, text.as_deref(), &ctx.key)?;
    let metrics = match &reference {
        Some(r) => Some(score_against(&pipeline, ctx.seed, r, &got)?),
        None => None,
    };
    let report = ExtractReport {
        message: got.message.to_string(),
        complete: got.complete,
        issues: got.issues.clone(),
        optim_iterations: got.optim.iterations,
        optim_final_loss: got.optim.final_loss,
        metrics,
    };
    write_json(&ctx.out_path("extract.json")?, &report)?;
    fs::write(ctx.out_path("message.bin")?, got.message.to_bytes())?;
    if let Some(m) = &report.metrics {
        let mut line = serde_json::to_string(m)?;
        line.push('\n');
        fs::write(ctx.out_path("metrics.jsonl")?, line)?;
    }
    let summary = serde_json::to_string_pretty(&report)?;
    if !got.complete {
        eprintln!("{summary}");
        return Err(Error::PartialRecovery {
            recovered: got.message.len(),
        });
    }
    Ok(summary)
}

fn score_against(
    pipeline: &Pipeline,
    seed: u64,
    reference: &Reference,
    got: &crate::pipeline::ReceiverOutput,
) -> Result<RunMetrics> {
    let truth = reference.message_bits()?;
    let grid: &TokenGrid = &reference.grid;
    if grid.len() != got.m1.len() {
        return Err(Error::ShapeMismatch("reference grid does not match the tokenizer".into()));
    }
    Ok(RunMetrics {
        seed,
        channel: pipeline.channel().to_string(),
        rq_m1: got.m1.recovery_rate(grid),
        rq_m12: got.m12.recovery_rate(grid),
        rq_m123: got.m123.recovery_rate(grid),
        cap: cap_bits(&truth, &got.message),
        message_bits: truth.len(),
        embedded_bits: reference.embedded_bits,
        recovered: got.complete && got.message == truth,
        ecc: None,
        optim_iterations: got.optim.iterations,
        optim_final_loss: got.optim.final_loss,
    })
}

fn attack(ctx: &Context, args: &AttackArgs) -> Result<String> {
    let image = ImageTensor::load(&args.image)?;
    let channel = match &args.stages {
        Some(s) => ChannelSpec::parse(s, ctx.config.channel.noise_seed)?,
        None => ctx.config.channel.spec()?,
    };
    let attacked = channel.apply(&image).round_to_f32();
    let path = save_image(ctx, "attacked", &attacked)?;
    Ok(format!("{} -> {} ({channel})", args.image.display(), path.display()))
}

fn security(ctx: &Context, args: &SecurityArgs) -> Result<String> {
    if args.samples < 1000 {
        return Err(Error::MalformedInput("--samples must be at least 1000".into()));
    }
    let c = &ctx.config;
    let cover = sample_class(c, Generator::Cover, args.samples, ctx.seed, "reference", ctx.jobs)?;
    let mut reports: Vec<SecurityReport> = Vec::new();
    let mut generators = vec![Generator::Cover, Generator::Stego];
    if args.with_control {
        generators.push(Generator::Greedy);
    }
    for g in generators {
        let other = sample_class(c, g, args.samples, ctx.seed, "candidate", ctx.jobs)?;
        reports.push(compare(c, &cover, &other, ctx.seed));
    }
    write_json(&ctx.out_path("security.json")?, &reports)?;
    let mut out = format!(
        "{:<8} {:>12} {:>12} {:>12} {:>10} {:>22} {:>9}\n",
        "class", "pooled p", "token p", "KS p", "min pos p", "KL bits (null)", "capacity"
    );
    for r in &reports {
        out.push_str(&format!(
            "{:<8} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.2e} {:>9.2e} ({:.1e}±{:.0e}) {:>9.1}\n",
            format!("{:?}", r.generator).to_lowercase(),
            r.pooled_rank.p_value,
            r.pooled_token.p_value,
            r.per_position.p_value,
            r.min_position_p,
            r.kl_bits.estimate,
            r.kl_bits.null_mean,
            r.kl_bits.null_std,
            r.mean_capacity,
        ));
    }
    Ok(out)
}

fn sweep(ctx: &Context, args: &SweepArgs) -> Result<String> {
    let spec = match (&args.channels, &args.max_tokens) {
        (Some(c), _) => SweepSpec::channels(c, args.runs, ctx.seed, args.bits),
        (None, Some(m)) => SweepSpec::max_tokens(m, args.runs, ctx.seed, args.bits)?,
        (None, None) => return Err(Error::MalformedInput("give --channels or --max-tokens".into())),
    };
    let table = run_sweep(&ctx.config, &spec, ctx.jobs)?;
    fs::write(ctx.out_path("sweep.jsonl")?, table.to_jsonl())?;
    let rendered = table.render();
    fs::write(ctx.out_path("sweep.txt")?, &rendered)?;
    Ok(rendered)
}

/// Runs the command line; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => {
            // A closed stdout (e.g. piping into `head`) is not a failure.
            let _ = writeln!(std::io::stdout(), "{}", out.trim_end());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<String> {
    let ctx = Context::from_cli(cli)?;
    match &cli.command {
        Command::Embed(a) => embed(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Attack(a) => attack(&ctx, a),
        Command::SecurityTest(a) => security(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::ShowConfig => Ok(ctx.config.to_toml()),
    }
}
