//! `tinyturbo` command-line interface.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tinyturbo::{
    ChannelKind, ChannelSpec, CodeSpec, Loss, Puncture, SisoAlgorithm, TrainConfig, TrellisKind,
    WeightScheme,
};

use config::{DecoderSection, FileConfig, Precision, Resolved};

#[derive(Parser)]
#[command(
    name = "tinyturbo",
    version,
    about = "Turbo code simulation, decoding and decoder-weight training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BER/BLER of one decoder over an SNR grid.
    Simulate(SimArgs),
    /// Paired BER/BLER of several decoders on identical noise.
    Compare(SimArgs),
    /// Per-position posterior mean and std for the all-zero message.
    Analyze(AnalyzeArgs),
    /// Encode message lines into serialized codewords, symbols or channel LLRs.
    Encode(EncodeArgs),
    /// Decode LLR frames into message bits.
    Decode(DecodeArgs),
    /// Learn decoder weights.
    Train(TrainArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TrellisArg {
    Lte,
    #[value(name = "757")]
    Turbo757,
}

#[derive(Clone, Copy, ValueEnum)]
enum PunctureArg {
    None,
    RateHalf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Awgn,
    Bursty,
    /// A single deterministic spike (see `--burst-position`, `--burst-amplitude`).
    Burst,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    Map,
    Maxlog,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Bce,
    Mse,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Shared,
    Positional,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Block length of the LTE code (embedded QPP interleaver).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    trellis: Option<TrellisArg>,
    #[arg(long, value_enum)]
    puncture: Option<PunctureArg>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ChannelArgs {
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    /// SNR in dB; a comma-separated list gives a grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    sigma_b: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    burst_position: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    burst_amplitude: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    channel: ChannelArgs,
    /// `tinyturbo`, `map:M`, `maxlog:M` or `WEIGHTS.json[@map|@maxlog]`; repeatable.
    #[arg(long = "decoder")]
    decoders: Vec<String>,
    /// Frames per SNR point (upper bound when early stopping is on).
    #[arg(long)]
    frames: Option<u64>,
    /// Stop a point once every decoder has this many block errors; 0 disables.
    #[arg(long)]
    min_errors: Option<u64>,
    /// Decode externally generated LLR frames instead of simulating the channel.
    #[arg(long, requires = "messages")]
    llr_in: Option<PathBuf>,
    /// Transmitted messages matching `--llr-in`, one per line.
    #[arg(long)]
    messages: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long = "decoder")]
    decoders: Vec<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    channel: ChannelArgs,
    /// Message file (one message of 0/1 characters per line); stdin if absent.
    input: Option<PathBuf>,
    /// Encode this many random messages instead of reading input.
    #[arg(long, conflicts_with = "input")]
    random: Option<u64>,
    /// Also write the messages that were encoded.
    #[arg(long)]
    messages_out: Option<PathBuf>,
    /// Emit coded bits instead of BPSK symbols.
    #[arg(long, conflicts_with = "llr")]
    bits: bool,
    /// Pass the symbols through the channel and emit demapped LLRs.
    #[arg(long)]
    llr: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "decoder")]
    decoder: Option<String>,
    /// LLR frames, one per line; stdin if absent.
    #[arg(long)]
    llr_in: Option<PathBuf>,
    /// Emit final posterior LLRs instead of hard decisions.
    #[arg(long)]
    posterior: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    base: Option<BaseArg>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Decoder iterations M when starting from all-ones weights.
    #[arg(long)]
    iterations: Option<usize>,
    /// Starting weights; all-ones if absent.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Measure validation BER every this many steps.
    #[arg(long)]
    validate_every: Option<usize>,
    #[arg(long)]
    val_frames: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    val_snr: Option<f64>,
    #[arg(long, default_value = "weights.json")]
    out: PathBuf,
    /// Loss/BER curve CSV; stdout if absent.
    #[arg(long)]
    curves: Option<PathBuf>,
}

fn resolve(
    common: &CommonArgs,
    channel: Option<&ChannelArgs>,
    decoders: &[String],
) -> Result<Resolved> {
    let file = FileConfig::load(common.config.as_deref())?;
    let mut code = file.code.clone().unwrap_or_else(|| CodeSpec::lte(40));
    if let Some(k) = common.k {
        code = CodeSpec {
            interleaver: tinyturbo::interleave::InterleaverSpec::Lte { k },
            ..code
        };
    }
    match common.trellis {
        Some(TrellisArg::Lte) => code.trellis = TrellisKind::Lte,
        Some(TrellisArg::Turbo757) => code.trellis = TrellisKind::Turbo757,
        None => {}
    }
    match common.puncture {
        Some(PunctureArg::None) => code.puncture = Puncture::None,
        Some(PunctureArg::RateHalf) => code.puncture = Puncture::RateHalf,
        None => {}
    }

    let section = file.channel;
    let mut kind = section.map_or(ChannelKind::Awgn, |c| c.kind);
    let mut snrs = file
        .snr
        .clone()
        .unwrap_or_else(|| vec![section.map_or(0.0, |c| c.snr_db)]);
    if let Some(ch) = channel {
        kind = channel_kind(ch, kind)?;
        if let Some(s) = &ch.snr {
            snrs = s.clone();
        }
    }
    if snrs.is_empty() {
        bail!("empty SNR grid");
    }
    let channel = ChannelSpec {
        snr_db: snrs[0],
        kind,
    };
    channel.validate()?;

    let decoders = if decoders.is_empty() {
        file.decoder.clone()
    } else {
        decoders
            .iter()
            .map(|d| DecoderSection::parse(d))
            .collect::<Result<_>>()?
    };
    let mut labels: Vec<String> = decoders.iter().map(DecoderSection::label).collect();
    labels.sort();
    labels.dedup();
    if labels.len() != decoders.len() {
        bail!("decoder labels must be unique");
    }

    Ok(Resolved {
        code,
        channel,
        snrs,
        decoders,
        seed: common.seed.or(file.seed).unwrap_or(0),
        max_frames: file.max_frames.unwrap_or(200_000),
        min_block_errors: match file.min_block_errors {
            Some(0) => None,
            Some(n) => Some(n),
            None => Some(100),
        },
        trials: file.trials.unwrap_or(10_000),
        precision: common.precision.or(file.precision).unwrap_or_default(),
        train: file.train.unwrap_or_default(),
    })
}

fn channel_kind(ch: &ChannelArgs, base: ChannelKind) -> Result<ChannelKind> {
    let kind = match (ch.channel, base) {
        (None, k) => k,
        (Some(ChannelArg::Awgn), _) => ChannelKind::Awgn,
        (Some(ChannelArg::Bursty), k @ ChannelKind::Bursty { .. }) => k,
        (Some(ChannelArg::Bursty), _) => ChannelKind::Bursty {
            sigma_b: 5.0,
            rho: 0.01,
        },
        (Some(ChannelArg::Burst), k @ ChannelKind::DeterministicBurst { .. }) => k,
        (Some(ChannelArg::Burst), _) => ChannelKind::DeterministicBurst {
            position: 56,
            amplitude: 10.0,
        },
    };
    Ok(match kind {
        ChannelKind::Bursty { sigma_b, rho } => ChannelKind::Bursty {
            sigma_b: ch.sigma_b.unwrap_or(sigma_b),
            rho: ch.rho.unwrap_or(rho),
        },
        ChannelKind::DeterministicBurst {
            position,
            amplitude,
        } if ch.sigma_b.is_none() && ch.rho.is_none() => ChannelKind::DeterministicBurst {
            position: ch.burst_position.unwrap_or(position),
            amplitude: ch.burst_amplitude.unwrap_or(amplitude),
        },
        ChannelKind::Awgn
            if ch.sigma_b.is_none()
                && ch.rho.is_none()
                && ch.burst_position.is_none()
                && ch.burst_amplitude.is_none() =>
        {
            ChannelKind::Awgn
        }
        _ => bail!("channel parameters do not match the selected channel kind"),
    })
}

fn default_decoders(r: &mut Resolved, defaults: &[&str]) -> Result<()> {
    if r.decoders.is_empty() {
        r.decoders = defaults
            .iter()
            .map(|d| DecoderSection::parse(d))
            .collect::<Result<_>>()?;
    }
    Ok(())
}

macro_rules! with_precision {
    ($p:expr, $f:ident($($arg:expr),*)) => {
        match $p {
            Precision::F32 => run::$f::<f32>($($arg),*),
            Precision::F64 => run::$f::<f64>($($arg),*),
        }
    };
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) | Command::Compare(a) if a.llr_in.is_some() => {
            let mut r = resolve(&a.common, Some(&a.channel), &a.decoders)?;
            default_decoders(&mut r, &["tinyturbo"])?;
            let (llr, msgs) = (a.llr_in.unwrap(), a.messages.unwrap());
            with_precision!(r.precision, external(&r, &llr, &msgs, a.out.as_deref()))
        }
        Command::Simulate(a) => {
            let mut r = resolve(&a.common, Some(&a.channel), &a.decoders)?;
            default_decoders(&mut r, &["tinyturbo"])?;
            if r.decoders.len() != 1 {
                bail!("simulate takes exactly one decoder; use compare for several");
            }
            apply_stop(&mut r, a.frames, a.min_errors);
            with_precision!(r.precision, simulate(&r, a.out.as_deref()))
        }
        Command::Compare(a) => {
            let mut r = resolve(&a.common, Some(&a.channel), &a.decoders)?;
            default_decoders(&mut r, &["tinyturbo", "maxlog:3", "map:6"])?;
            apply_stop(&mut r, a.frames, a.min_errors);
            with_precision!(r.precision, compare(&r, a.out.as_deref()))
        }
        Command::Analyze(a) => {
            let mut r = resolve(&a.common, Some(&a.channel), &a.decoders)?;
            default_decoders(&mut r, &["tinyturbo", "maxlog:3", "map:6"])?;
            if let Some(t) = a.trials {
                r.trials = t;
            }
            with_precision!(r.precision, analyze(&r, a.out.as_deref()))
        }
        Command::Encode(a) => {
            let r = resolve(&a.common, Some(&a.channel), &[])?;
            let opts = run::EncodeOptions {
                input: a.input.as_deref(),
                random: a.random,
                messages_out: a.messages_out.as_deref(),
                bits: a.bits,
                llr: a.llr,
                out: a.out.as_deref(),
            };
            with_precision!(r.precision, encode(&r, &opts))
        }
        Command::Decode(a) => {
            let decoders: Vec<String> = a.decoder.into_iter().collect();
            let mut r = resolve(&a.common, None, &decoders)?;
            default_decoders(&mut r, &["tinyturbo"])?;
            if r.decoders.len() != 1 {
                bail!("decode takes exactly one decoder");
            }
            with_precision!(
                r.precision,
                decode(&r, a.llr_in.as_deref(), a.posterior, a.out.as_deref())
            )
        }
        Command::Train(a) => {
            let mut r = resolve(&a.common, Some(&a.channel), &[])?;
            let tc = train_config(&a, &r)?;
            r.train = tc;
            let init = match &a.init {
                Some(p) => DecoderSection {
                    weights: Some(p.to_string_lossy().into_owned()),
                    algorithm: Some(r.train.base_algorithm),
                    ..Default::default()
                },
                None => DecoderSection {
                    algorithm: Some(r.train.base_algorithm),
                    iterations: Some(a.iterations.unwrap_or(3)),
                    ..Default::default()
                },
            };
            r.decoders = vec![init];
            with_precision!(r.precision, train(&r, &a.out, a.curves.as_deref()))
        }
    }
}

fn apply_stop(r: &mut Resolved, frames: Option<u64>, min_errors: Option<u64>) {
    if let Some(f) = frames {
        r.max_frames = f;
    }
    match min_errors {
        Some(0) => r.min_block_errors = None,
        Some(n) => r.min_block_errors = Some(n),
        None => {}
    }
}

fn train_config(a: &TrainArgs, r: &Resolved) -> Result<TrainConfig> {
    let mut tc = r.train.clone();
    if let Some(l) = a.loss {
        tc.loss = match l {
            LossArg::Bce => Loss::Bce,
            LossArg::Mse => Loss::MseToTeacher,
        };
    }
    if let Some(s) = a.scheme {
        tc.scheme = match s {
            SchemeArg::Shared => WeightScheme::Shared,
            SchemeArg::Positional => WeightScheme::Positional,
        };
    }
    if let Some(b) = a.base {
        tc.base_algorithm = match b {
            BaseArg::Map => SisoAlgorithm::Map,
            BaseArg::Maxlog => SisoAlgorithm::MaxLogMap,
        };
    }
    if let Some(snr) = &a.channel.snr {
        if snr.len() != 1 {
            bail!("training takes a single SNR");
        }
        tc.train_snr_db = snr[0];
    }
    if a.channel.channel.is_some() || a.channel.sigma_b.is_some() || a.channel.rho.is_some() {
        tc.channel = r.channel.kind;
    }
    tc.learning_rate = a.lr.unwrap_or(tc.learning_rate);
    tc.batch_size = a.batch.unwrap_or(tc.batch_size);
    tc.steps = a.steps.unwrap_or(tc.steps);
    tc.seed = a.common.seed.unwrap_or(tc.seed);
    tc.validate_every = a.validate_every.unwrap_or(tc.validate_every);
    tc.validation_frames = a.val_frames.unwrap_or(tc.validation_frames);
    tc.validation_snr_db = a.val_snr.unwrap_or(tc.validation_snr_db);
    tc.validate()?;
    Ok(tc)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
