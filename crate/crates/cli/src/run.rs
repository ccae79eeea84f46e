//! Subcommand bodies, generic over the decoder scalar.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::Rng;
use serde_json::{json, Value};
use tinyturbo::channel::{demap, frame_rng, parse_llr_frames};
use tinyturbo::decoder::{turbo_decode, DecodeConfig};
use tinyturbo::harness::{self, llr_stats_csv, StopRule};
use tinyturbo::{train as trainer, Real, TurboCode};

use crate::config::{Precision, Resolved};

/// RNG stream for `encode --random` messages.
const MESSAGE_STREAM: u64 = 0x656e_636f_6465;

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .context("reading stdin")?;
            Ok(s)
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn metadata(command: &str, r: &Resolved) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "code": r.code,
        "channel": r.channel,
        "snr_db": r.snrs,
        "decoders": r.decoders.iter().map(|d| d.describe()).collect::<Vec<_>>(),
        "seed": r.seed,
        "precision": match r.precision { Precision::F32 => "f32", Precision::F64 => "f64" },
    })
}

fn stop_rule(r: &Resolved) -> StopRule {
    StopRule {
        max_frames: r.max_frames,
        min_block_errors: r.min_block_errors,
    }
}

fn decoders<T: Real>(r: &Resolved) -> Result<(Vec<DecodeConfig<T>>, Vec<String>)> {
    let cfgs = r
        .decoders
        .iter()
        .map(|d| d.build())
        .collect::<Result<_>>()?;
    Ok((cfgs, r.decoders.iter().map(|d| d.label()).collect()))
}

fn code(r: &Resolved) -> Result<TurboCode> {
    Ok(r.code.build()?)
}

pub fn simulate<T: Real>(r: &Resolved, out: Option<&Path>) -> Result<()> {
    let code = code(r)?;
    let (cfgs, _) = decoders::<T>(r)?;
    let res = harness::simulate(&code, &cfgs[0], &r.channel, &r.snrs, stop_rule(r), r.seed)?;
    let mut meta = metadata("simulate", r);
    meta["stop"] = json!(stop_rule(r));
    write_output(out, &res.to_csv(&meta))
}

pub fn compare<T: Real>(r: &Resolved, out: Option<&Path>) -> Result<()> {
    let code = code(r)?;
    let (cfgs, labels) = decoders::<T>(r)?;
    let res = harness::compare(
        &code,
        &cfgs,
        &labels,
        &r.channel,
        &r.snrs,
        stop_rule(r),
        r.seed,
    )?;
    let mut meta = metadata("compare", r);
    meta["stop"] = json!(stop_rule(r));
    meta["paired"] = json!(res
        .points
        .iter()
        .map(|p| {
            p.pairs
                .iter()
                .map(|c| {
                    json!({
                        "snr_db": p.snr_db,
                        "a": labels[c.a],
                        "b": labels[c.b],
                        "a_better": c.a_better,
                        "b_better": c.b_better,
                        "p_a_better": c.p_value_a_better(),
                        "p_b_better": c.p_value_b_better(),
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>());
    write_output(out, &res.to_csv(&meta))
}

pub fn analyze<T: Real>(r: &Resolved, out: Option<&Path>) -> Result<()> {
    let code = code(r)?;
    let (cfgs, labels) = decoders::<T>(r)?;
    let stats = harness::analyze_llr(&code, &cfgs, &r.channel, r.trials, r.seed)?;
    let mut meta = metadata("analyze", r);
    meta["trials"] = json!(r.trials);
    meta["crossing_fraction"] = json!(labels
        .iter()
        .zip(&stats)
        .map(|(l, s)| (l.clone(), json!(s.crossing_fraction())))
        .collect::<serde_json::Map<_, _>>());
    write_output(out, &llr_stats_csv(&labels, &stats, &meta))
}

/// Parses messages: one per line, `0`/`1` characters with optional whitespace.
fn parse_messages(text: &str, k: usize) -> Result<Vec<Vec<u8>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(no, line)| {
            let bits = line
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| match c {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    _ => bail!(
                        "line {}: message characters must be 0 or 1, got {c:?}",
                        no + 1
                    ),
                })
                .collect::<Result<Vec<u8>>>()?;
            if bits.len() != k {
                bail!(
                    "line {}: message has {} bits, code expects K = {k}",
                    no + 1,
                    bits.len()
                );
            }
            Ok(bits)
        })
        .collect()
}

fn bit_line(bits: &[u8]) -> String {
    bits.iter()
        .map(|&b| if b == 1 { '1' } else { '0' })
        .collect()
}

fn real_line<T: Real>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub struct EncodeOptions<'a> {
    pub input: Option<&'a Path>,
    pub random: Option<u64>,
    pub messages_out: Option<&'a Path>,
    pub bits: bool,
    pub llr: bool,
    pub out: Option<&'a Path>,
}

pub fn encode<T: Real>(r: &Resolved, opts: &EncodeOptions<'_>) -> Result<()> {
    let code = code(r)?;
    let messages = match opts.random {
        Some(n) => (0..n)
            .map(|i| random_message(r.seed, i, code.k()))
            .collect(),
        None => parse_messages(&read_input(opts.input)?, code.k())?,
    };
    if r.snrs.len() != 1 && opts.llr {
        bail!("encode --llr takes a single SNR");
    }
    let sigma = r.channel.sigma();
    let stream = r.channel.snr_db.to_bits();
    let mut text = String::new();
    for (i, msg) in messages.iter().enumerate() {
        let cw = code.encode(msg)?;
        let line = if opts.bits {
            bit_line(&code.serialize_bits(&cw))
        } else if opts.llr {
            let mut rng = frame_rng(r.seed, stream, i as u64);
            let rx = r.channel.transmit(&code.serialize::<T>(&cw), &mut rng);
            real_line(&demap(&rx, sigma)?)
        } else {
            real_line(&code.serialize::<T>(&cw))
        };
        text.push_str(&line);
        text.push('\n');
    }
    if let Some(p) = opts.messages_out {
        let body: String = messages.iter().map(|m| bit_line(m) + "\n").collect();
        write_output(Some(p), &body)?;
    }
    write_output(opts.out, &text)
}

fn load_frames<T: Real>(
    code: &TurboCode,
    path: Option<&Path>,
) -> Result<Vec<tinyturbo::channel::LlrFrame<T>>> {
    parse_llr_frames::<T>(&read_input(path)?)?
        .iter()
        .enumerate()
        .map(|(i, f)| {
            code.depuncture(f)
                .with_context(|| format!("LLR frame {}", i + 1))
        })
        .collect()
}

pub fn decode<T: Real>(
    r: &Resolved,
    llr_in: Option<&Path>,
    posterior: bool,
    out: Option<&Path>,
) -> Result<()> {
    let code = code(r)?;
    let (cfgs, _) = decoders::<T>(r)?;
    let mut text = String::new();
    for frame in load_frames::<T>(&code, llr_in)? {
        let res = turbo_decode(&code, &frame, &cfgs[0])?;
        text.push_str(&if posterior {
            real_line(&res.posterior)
        } else {
            bit_line(&res.bits)
        });
        text.push('\n');
    }
    write_output(out, &text)
}

/// Error counts of every decoder on externally supplied frames.
pub fn external<T: Real>(
    r: &Resolved,
    llr_in: &Path,
    messages: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let code = code(r)?;
    let (cfgs, labels) = decoders::<T>(r)?;
    let frames = load_frames::<T>(&code, Some(llr_in))?;
    let msgs = parse_messages(&read_input(Some(messages))?, code.k())?;
    if frames.len() != msgs.len() {
        bail!("{} LLR frames but {} messages", frames.len(), msgs.len());
    }
    let mut meta = metadata("external", r);
    meta["llr_in"] = json!(llr_in.display().to_string());
    let mut text = format!(
        "# {}\ndecoder,frames,bit_errors,block_errors,ber,bler\n",
        serde_json::to_string(&meta)?
    );
    for (cfg, label) in cfgs.iter().zip(&labels) {
        let (mut bits, mut blocks) = (0u64, 0u64);
        for (frame, msg) in frames.iter().zip(&msgs) {
            let res = turbo_decode(&code, frame, cfg)?;
            let e = res.bits.iter().zip(msg).filter(|(a, b)| a != b).count() as u64;
            bits += e;
            blocks += u64::from(e > 0);
        }
        let n = frames.len().max(1) as f64;
        text.push_str(&format!(
            "{label},{},{bits},{blocks},{:e},{:e}\n",
            frames.len(),
            bits as f64 / (n * code.k() as f64),
            blocks as f64 / n
        ));
    }
    write_output(out, &text)
}

pub fn train<T: Real>(r: &Resolved, weights_out: &Path, curves: Option<&Path>) -> Result<()> {
    let code = code(r)?;
    let template = r.decoders[0].build::<T>()?;
    let tc = &r.train;
    let every = (tc.steps / 20).max(1);
    let report = trainer::train_with_progress(&code, tc, &template, |step, loss| {
        if step % every == 0 || step == tc.steps {
            eprintln!("step {step}/{} loss {loss:.6}", tc.steps);
        }
    })?;
    std::fs::write(weights_out, report.weights.to_json() + "\n")
        .with_context(|| format!("writing {}", weights_out.display()))?;
    let meta = json!({
        "command": "train",
        "version": env!("CARGO_PKG_VERSION"),
        "code": r.code,
        "train": tc,
        "iterations": template.iterations,
        "weights_out": weights_out.display().to_string(),
        "precision": match r.precision { Precision::F32 => "f32", Precision::F64 => "f64" },
    });
    write_output(
        curves,
        &format!(
            "# {}\n{}",
            serde_json::to_string(&meta)?,
            report.curves_csv()
        ),
    )
}

/// Uniform random message drawn from its own RNG stream.
fn random_message(seed: u64, index: u64, k: usize) -> Vec<u8> {
    let mut rng = frame_rng(seed, MESSAGE_STREAM, index);
    (0..k).map(|_| rng.random_range(0..2u8)).collect()
}
