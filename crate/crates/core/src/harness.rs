//! Monte-Carlo error-rate evaluation and LLR statistics.
//!
//! Every frame's message and noise come from [`frame_rng`] keyed by
//! `(seed, SNR, frame index)`, so decoders compared under the same seed see
//! identical channel realizations and results do not depend on thread count.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::channel::{demap, frame_rng, ChannelSpec, LlrFrame};
use crate::codec::TurboCode;
use crate::decoder::{turbo_decode, DecodeConfig};
use crate::error::{Error, Result};
use crate::scalar::Real;
use rand::Rng;

/// Frames simulated between stop-rule checks.
const CHUNK: u64 = 1000;

/// When to stop simulating one SNR point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StopRule {
    pub max_frames: u64,
    /// Stop early once every decoder has made this many block errors.
    pub min_block_errors: Option<u64>,
}

impl StopRule {
    /// Exactly `n` frames.
    pub fn frames(n: u64) -> Self {
        StopRule {
            max_frames: n,
            min_block_errors: None,
        }
    }
}

impl Default for StopRule {
    /// 100 block errors or 2e5 frames, whichever comes first.
    fn default() -> Self {
        StopRule {
            max_frames: 200_000,
            min_block_errors: Some(100),
        }
    }
}

/// Error tallies of one decoder at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimRow {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub block_errors: u64,
    pub ber: f64,
    pub bler: f64,
}

impl SimRow {
    fn new(snr_db: f64, frames: u64, bit_errors: u64, block_errors: u64, k: usize) -> Self {
        let f = frames.max(1) as f64;
        SimRow {
            snr_db,
            frames,
            bit_errors,
            block_errors,
            ber: bit_errors as f64 / (f * k as f64),
            bler: block_errors as f64 / f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
    pub channel: ChannelSpec,
    pub seed: u64,
}

/// Paired per-frame comparison of decoders `a` and `b` at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairedCounts {
    pub a: usize,
    pub b: usize,
    /// Frames where `a` made fewer bit errors than `b`.
    pub a_better: u64,
    /// Frames where `b` made fewer bit errors than `a`.
    pub b_better: u64,
}

impl PairedCounts {
    /// One-sided sign-test p-value for "a is better than b" (ties dropped).
    pub fn p_value_a_better(&self) -> f64 {
        sign_test_p(self.a_better, self.b_better)
    }

    pub fn p_value_b_better(&self) -> f64 {
        sign_test_p(self.b_better, self.a_better)
    }
}

/// `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`.
pub fn sign_test_p(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 || wins == 0 {
        return 1.0;
    }
    let dist = Binomial::new(0.5, n).expect("p = 1/2 is valid");
    dist.sf(wins - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparePoint {
    pub snr_db: f64,
    /// One row per decoder, in input order.
    pub rows: Vec<SimRow>,
    /// Every ordered pair `a < b`.
    pub pairs: Vec<PairedCounts>,
}

impl ComparePoint {
    pub fn pair(&self, a: usize, b: usize) -> PairedCounts {
        if let Some(p) = self.pairs.iter().find(|p| p.a == a && p.b == b) {
            return *p;
        }
        let p = self
            .pairs
            .iter()
            .find(|p| p.a == b && p.b == a)
            .expect("pair index in range");
        PairedCounts {
            a,
            b,
            a_better: p.b_better,
            b_better: p.a_better,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareResult {
    pub labels: Vec<String>,
    pub points: Vec<ComparePoint>,
    pub channel: ChannelSpec,
    pub seed: u64,
}

fn snr_stream(snr_db: f64) -> u64 {
    snr_db.to_bits()
}

/// Random message and its received channel LLRs for frame `index` of `stream`.
pub fn generate_frame<T: Real>(
    code: &TurboCode,
    channel: &ChannelSpec,
    seed: u64,
    stream: u64,
    index: u64,
) -> (Vec<u8>, LlrFrame<T>) {
    let mut rng = frame_rng(seed, stream, index);
    let msg: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
    let frame = transmit_message(code, channel, &msg, &mut rng);
    (msg, frame)
}

fn transmit_message<T: Real, R: Rng>(
    code: &TurboCode,
    channel: &ChannelSpec,
    msg: &[u8],
    rng: &mut R,
) -> LlrFrame<T> {
    let coded = code.encode(msg).expect("message length matches code");
    let tx = code.serialize::<T>(&coded);
    let rx = channel.transmit(&tx, rng);
    let llr = demap(&rx, channel.sigma()).expect("sigma is positive for finite SNR");
    code.depuncture(&llr).expect("stream length matches code")
}

fn check_inputs<T: Real>(
    code: &TurboCode,
    cfgs: &[DecodeConfig<T>],
    channel: &ChannelSpec,
    stop: &StopRule,
) -> Result<()> {
    if cfgs.is_empty() {
        return Err(Error::Config(
            "no decoder configurations to evaluate".into(),
        ));
    }
    if stop.max_frames == 0 {
        return Err(Error::Config("stop rule allows zero frames".into()));
    }
    channel.validate()?;
    cfgs.iter().try_for_each(|c| c.validate(code.k()))
}

/// Runs several decoders on the same frames at every SNR in `snrs`.
///
/// `channel` supplies the noise model; its own SNR is replaced by each grid value.
pub fn compare<T: Real>(
    code: &TurboCode,
    cfgs: &[DecodeConfig<T>],
    labels: &[String],
    channel: &ChannelSpec,
    snrs: &[f64],
    stop: StopRule,
    seed: u64,
) -> Result<CompareResult> {
    check_inputs(code, cfgs, channel, &stop)?;
    if labels.len() != cfgs.len() {
        return Err(Error::Config(
            "one label per decoder configuration is required".into(),
        ));
    }
    let n = cfgs.len();
    let mut points = Vec::with_capacity(snrs.len());
    for &snr in snrs {
        let ch = channel.with_snr(snr);
        ch.validate()?;
        let stream = snr_stream(snr);
        let mut frames = 0u64;
        let mut bit_err = vec![0u64; n];
        let mut blk_err = vec![0u64; n];
        let mut better = vec![vec![0u64; n]; n];
        while frames < stop.max_frames {
            let end = (frames + CHUNK).min(stop.max_frames);
            let chunk: Vec<Vec<u32>> = (frames..end)
                .into_par_iter()
                .map(|idx| -> Result<Vec<u32>> {
                    let (msg, frame) = generate_frame::<T>(code, &ch, seed, stream, idx);
                    cfgs.iter()
                        .map(|cfg| {
                            let out = turbo_decode(code, &frame, cfg)?;
                            Ok(out.bits.iter().zip(&msg).filter(|(a, b)| a != b).count() as u32)
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            for errs in &chunk {
                for i in 0..n {
                    bit_err[i] += errs[i] as u64;
                    blk_err[i] += u64::from(errs[i] > 0);
                    for j in 0..n {
                        if errs[i] < errs[j] {
                            better[i][j] += 1;
                        }
                    }
                }
            }
            frames = end;
            if let Some(min) = stop.min_block_errors {
                if blk_err.iter().all(|&b| b >= min) {
                    break;
                }
            }
        }
        let rows = (0..n)
            .map(|i| SimRow::new(snr, frames, bit_err[i], blk_err[i], code.k()))
            .collect();
        let pairs = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .map(|(a, b)| PairedCounts {
                a,
                b,
                a_better: better[a][b],
                b_better: better[b][a],
            })
            .collect();
        points.push(ComparePoint {
            snr_db: snr,
            rows,
            pairs,
        });
    }
    Ok(CompareResult {
        labels: labels.to_vec(),
        points,
        channel: *channel,
        seed,
    })
}

/// Error rates of one decoder over an SNR grid.
pub fn simulate<T: Real>(
    code: &TurboCode,
    cfg: &DecodeConfig<T>,
    channel: &ChannelSpec,
    snrs: &[f64],
    stop: StopRule,
    seed: u64,
) -> Result<SimResult> {
    let res = compare(
        code,
        std::slice::from_ref(cfg),
        &["decoder".to_string()],
        channel,
        snrs,
        stop,
        seed,
    )?;
    Ok(SimResult {
        rows: res.points.into_iter().map(|p| p.rows[0]).collect(),
        channel: *channel,
        seed,
    })
}

/// Per-position mean and standard deviation of final posteriors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlrStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LlrStats {
    /// Fraction of positions whose `mean + 2 std` reaches zero (a wrong decision lies within two sigma).
    pub fn crossing_fraction(&self) -> f64 {
        let n = self.mean.len().max(1) as f64;
        self.upper_band().filter(|&u| u >= 0.0).count() as f64 / n
    }

    /// Largest `mean + 2 std` over positions.
    pub fn max_upper(&self) -> f64 {
        self.upper_band().fold(f64::NEG_INFINITY, f64::max)
    }

    fn upper_band(&self) -> impl Iterator<Item = f64> + '_ {
        self.mean.iter().zip(&self.std).map(|(m, s)| m + 2.0 * s)
    }
}

/// Sends the all-zero codeword `trials` times and collects posterior statistics per decoder.
pub fn analyze_llr<T: Real>(
    code: &TurboCode,
    cfgs: &[DecodeConfig<T>],
    channel: &ChannelSpec,
    trials: u64,
    seed: u64,
) -> Result<Vec<LlrStats>> {
    check_inputs(code, cfgs, channel, &StopRule::frames(trials.max(1)))?;
    if trials == 0 {
        return Err(Error::Config("analysis needs at least one trial".into()));
    }
    let k = code.k();
    let n = cfgs.len();
    let zeros = vec![0u8; k];
    let stream = snr_stream(channel.snr_db) ^ 0x616e_616c;
    // Welford accumulators, fed in frame order
    let mut mean = vec![vec![0.0f64; k]; n];
    let mut m2 = vec![vec![0.0f64; k]; n];
    let mut done = 0u64;
    while done < trials {
        let end = (done + CHUNK).min(trials);
        let chunk: Vec<Vec<Vec<f64>>> = (done..end)
            .into_par_iter()
            .map(|idx| -> Result<Vec<Vec<f64>>> {
                let mut rng = frame_rng(seed, stream, idx);
                let frame = transmit_message::<T, _>(code, channel, &zeros, &mut rng);
                cfgs.iter()
                    .map(|cfg| {
                        Ok(turbo_decode(code, &frame, cfg)?
                            .posterior
                            .iter()
                            .map(|v| v.as_f64())
                            .collect())
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (j, per_cfg) in chunk.iter().enumerate() {
            let count = (done + j as u64 + 1) as f64;
            for (c, post) in per_cfg.iter().enumerate() {
                for (i, &v) in post.iter().enumerate() {
                    let delta = v - mean[c][i];
                    mean[c][i] += delta / count;
                    m2[c][i] += delta * (v - mean[c][i]);
                }
            }
        }
        done = end;
    }
    let t = trials as f64;
    Ok(mean
        .into_iter()
        .zip(m2)
        .map(|(mean, m2)| {
            let std = m2
                .iter()
                .map(|&q| {
                    if trials < 2 {
                        0.0
                    } else {
                        (q / (t - 1.0)).max(0.0).sqrt()
                    }
                })
                .collect();
            LlrStats { mean, std }
        })
        .collect())
}

fn metadata_line(metadata: &serde_json::Value) -> String {
    format!(
        "# {}\n",
        serde_json::to_string(metadata).expect("metadata serializes")
    )
}

impl SimResult {
    /// CSV with a `# {json}` metadata header line.
    pub fn to_csv(&self, metadata: &serde_json::Value) -> String {
        let mut out = metadata_line(metadata);
        out.push_str("snr_db,frames,bit_errors,block_errors,ber,bler\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:e},{:e}\n",
                r.snr_db, r.frames, r.bit_errors, r.block_errors, r.ber, r.bler
            ));
        }
        out
    }
}

impl CompareResult {
    pub fn to_csv(&self, metadata: &serde_json::Value) -> String {
        let mut out = metadata_line(metadata);
        out.push_str("snr_db,frames");
        for l in &self.labels {
            out.push_str(&format!(
                ",{l}_bit_errors,{l}_block_errors,{l}_ber,{l}_bler"
            ));
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!("{},{}", p.snr_db, p.rows[0].frames));
            for r in &p.rows {
                out.push_str(&format!(
                    ",{},{},{:e},{:e}",
                    r.bit_errors, r.block_errors, r.ber, r.bler
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// `position,<label>_mean,<label>_std,...` rows.
pub fn llr_stats_csv(
    labels: &[String],
    stats: &[LlrStats],
    metadata: &serde_json::Value,
) -> String {
    let mut out = metadata_line(metadata);
    out.push_str("position");
    for l in labels {
        out.push_str(&format!(",{l}_mean,{l}_std"));
    }
    out.push('\n');
    let k = stats.first().map_or(0, |s| s.mean.len());
    for i in 0..k {
        out.push_str(&i.to_string());
        for s in stats {
            out.push_str(&format!(",{},{}", s.mean[i], s.std[i]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodeSpec;
    use crate::siso::SisoAlgorithm;

    #[test]
    fn noiseless_channel_has_no_errors() {
        let code = CodeSpec::lte(40).build().unwrap();
        let cfg = DecodeConfig::<f64>::classical(SisoAlgorithm::MaxLogMap, 3);
        let r = simulate(
            &code,
            &cfg,
            &ChannelSpec::awgn(40.0),
            &[40.0],
            StopRule::frames(1000),
            1,
        )
        .unwrap();
        assert_eq!(r.rows[0].frames, 1000);
        assert_eq!(r.rows[0].bit_errors, 0);
        assert_eq!(r.rows[0].ber, 0.0);
    }

    #[test]
    fn row_arithmetic_and_stop_rule() {
        let code = CodeSpec::lte(40).build().unwrap();
        let cfg = DecodeConfig::<f64>::classical(SisoAlgorithm::MaxLogMap, 1);
        let stop = StopRule {
            max_frames: 50_000,
            min_block_errors: Some(20),
        };
        let r = simulate(
            &code,
            &cfg,
            &ChannelSpec::awgn(-2.0),
            &[-2.0, -1.0],
            stop,
            3,
        )
        .unwrap();
        for row in &r.rows {
            assert!(row.block_errors >= 20);
            assert_eq!(row.frames % CHUNK, 0);
            assert_eq!(row.ber, row.bit_errors as f64 / (row.frames as f64 * 40.0));
            assert_eq!(row.bler, row.block_errors as f64 / row.frames as f64);
            assert!(row.block_errors <= row.frames && row.bit_errors <= 40 * row.frames);
        }
    }

    #[test]
    fn self_comparison_gives_identical_columns() {
        let code = CodeSpec::lte(40).build().unwrap();
        let cfg = DecodeConfig::<f64>::tinyturbo();
        let labels = vec!["a".to_string(), "b".to_string()];
        let r = compare(
            &code,
            &[cfg.clone(), cfg],
            &labels,
            &ChannelSpec::awgn(0.0),
            &[0.0],
            StopRule::frames(500),
            9,
        )
        .unwrap();
        let p = &r.points[0];
        assert_eq!(p.rows[0], p.rows[1]);
        assert_eq!((p.pairs[0].a_better, p.pairs[0].b_better), (0, 0));
        assert_eq!(p.pair(1, 0).a, 1);
    }

    #[test]
    fn reruns_are_identical() {
        let code = CodeSpec::lte(40).build().unwrap();
        let cfg = DecodeConfig::<f64>::classical(SisoAlgorithm::Map, 2);
        let run = || {
            simulate(
                &code,
                &cfg,
                &ChannelSpec::bursty(1.0, 5.0, 0.01),
                &[1.0],
                StopRule::frames(1500),
                5,
            )
            .unwrap()
        };
        let meta = serde_json::json!({"seed": 5});
        assert_eq!(run().to_csv(&meta), run().to_csv(&meta));
    }

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test_p(0, 10), 1.0);
        assert!((sign_test_p(1, 0) - 0.5).abs() < 1e-12);
        // P(X >= 9 | n = 10) = 11 / 1024
        assert!((sign_test_p(9, 1) - 11.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_analysis_has_zero_spread() {
        let code = CodeSpec::lte(40).build().unwrap();
        let cfgs = [
            DecodeConfig::<f64>::classical(SisoAlgorithm::MaxLogMap, 3),
            DecodeConfig::tinyturbo(),
        ];
        let stats = analyze_llr(&code, &cfgs, &ChannelSpec::awgn(400.0), 20, 1).unwrap();
        for s in &stats {
            assert!(s.std.iter().all(|&v| v == 0.0));
            assert!(s.mean.iter().all(|&v| v < 0.0));
            assert_eq!(s.crossing_fraction(), 0.0);
        }
    }

    #[test]
    fn csv_layout() {
        let code = CodeSpec::lte(40).build().unwrap();
        let cfg = DecodeConfig::<f64>::classical(SisoAlgorithm::MaxLogMap, 1);
        let r = simulate(
            &code,
            &cfg,
            &ChannelSpec::awgn(40.0),
            &[40.0],
            StopRule::frames(10),
            1,
        )
        .unwrap();
        let csv = r.to_csv(&serde_json::json!({"k": 40}));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], r#"# {"k":40}"#);
        assert_eq!(lines[1], "snr_db,frames,bit_errors,block_errors,ber,bler");
        assert_eq!(lines[2], "40,10,0,0,0e0,0e0");
    }
}
