//! BPSK channels and channel-LLR demapping.
//!
//! SNR convention: `sigma = 10^(-snr_db / 20)` per coded BPSK symbol. LLRs are
//! `log P(bit = 1) / P(bit = 0)`, so with `0 -> -1` mapping a positive
//! channel LLR is evidence for bit 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Noise model applied on top of the AWGN component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    /// Each symbol independently receives an extra `N(0, sigma_b^2)` with probability `rho`.
    Bursty {
        sigma_b: f64,
        rho: f64,
    },
    /// A single additive spike of `amplitude` at stream index `position`.
    DeterministicBurst {
        position: usize,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub snr_db: f64,
    #[serde(flatten)]
    pub kind: ChannelKind,
}

impl ChannelSpec {
    pub fn awgn(snr_db: f64) -> Self {
        ChannelSpec {
            snr_db,
            kind: ChannelKind::Awgn,
        }
    }

    pub fn bursty(snr_db: f64, sigma_b: f64, rho: f64) -> Self {
        ChannelSpec {
            snr_db,
            kind: ChannelKind::Bursty { sigma_b, rho },
        }
    }

    pub fn deterministic_burst(snr_db: f64, position: usize, amplitude: f64) -> Self {
        ChannelSpec {
            snr_db,
            kind: ChannelKind::DeterministicBurst {
                position,
                amplitude,
            },
        }
    }

    pub fn with_snr(self, snr_db: f64) -> Self {
        ChannelSpec { snr_db, ..self }
    }

    pub fn sigma(&self) -> f64 {
        snr_to_sigma(self.snr_db)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::Config(format!(
                "SNR must be finite, got {}",
                self.snr_db
            )));
        }
        if let ChannelKind::Bursty { sigma_b, rho } = self.kind {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Config(format!(
                    "burst probability {rho} not in [0, 1]"
                )));
            }
            if !(sigma_b >= 0.0) {
                return Err(Error::Config(format!("burst std {sigma_b} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Adds channel noise to `symbols`.
    pub fn transmit<T: Real, R: Rng + ?Sized>(&self, symbols: &[T], rng: &mut R) -> Vec<T> {
        let sigma = self.sigma();
        let mut out: Vec<T> = symbols
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(rng);
                let mut noise = sigma * z;
                if let ChannelKind::Bursty { sigma_b, rho } = self.kind {
                    if rng.random_bool(rho) {
                        let w: f64 = StandardNormal.sample(rng);
                        noise += sigma_b * w;
                    }
                }
                x + T::of(noise)
            })
            .collect();
        if let ChannelKind::DeterministicBurst {
            position,
            amplitude,
        } = self.kind
        {
            if let Some(y) = out.get_mut(position) {
                *y += T::of(amplitude);
            }
        }
        out
    }
}

/// `sigma = 10^(-snr_db / 20)`.
pub fn snr_to_sigma(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

/// AWGN log-likelihood ratio `2 y / sigma^2` of every received value.
pub fn demap<T: Real>(received: &[T], sigma: f64) -> Result<Vec<T>> {
    if !(sigma > 0.0) {
        return Err(Error::Contract(format!(
            "demapper needs sigma > 0, got {sigma}"
        )));
    }
    let scale = T::of(2.0 / (sigma * sigma));
    Ok(received.iter().map(|&y| scale * y).collect())
}

/// Channel LLRs of one turbo frame split by stream; punctured positions hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrFrame<T> {
    pub sys: Vec<T>,
    pub par1: Vec<T>,
    pub par2: Vec<T>,
    pub tail_sys1: Vec<T>,
    pub tail_par1: Vec<T>,
    pub tail_sys2: Vec<T>,
    pub tail_par2: Vec<T>,
}

impl<T: Real> LlrFrame<T> {
    pub fn zeros(k: usize, m: usize) -> Self {
        LlrFrame {
            sys: vec![T::zero(); k],
            par1: vec![T::zero(); k],
            par2: vec![T::zero(); k],
            tail_sys1: vec![T::zero(); m],
            tail_par1: vec![T::zero(); m],
            tail_sys2: vec![T::zero(); m],
            tail_par2: vec![T::zero(); m],
        }
    }

    pub fn k(&self) -> usize {
        self.sys.len()
    }

    pub fn memory(&self) -> usize {
        self.tail_sys1.len()
    }
}

/// Parses LLR frames: one frame per line, whitespace-separated reals.
///
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_llr_frames<T: Real>(text: &str) -> Result<Vec<Vec<T>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(no, line)| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map(T::of).map_err(|e| {
                        Error::Format(format!("line {}: bad LLR {tok:?}: {e}", no + 1))
                    })
                })
                .collect()
        })
        .collect()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent RNG stream for frame `frame` of experiment stream `stream`.
///
/// Depends only on its arguments, so any worker can regenerate any frame.
pub fn frame_rng(seed: u64, stream: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream)));
    rng.set_stream(frame);
    rng
}
