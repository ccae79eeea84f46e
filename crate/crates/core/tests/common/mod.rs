//! Test-only reference implementations that share no code with the library.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Shift-register RSC encoder straight from the generator polynomials.
///
/// `feedback` and `feedforward` hold the coefficient of `D^i` in bit `i`.
pub struct Register {
    pub memory: usize,
    pub feedback: u32,
    pub feedforward: u32,
}

pub const LTE: Register = Register {
    memory: 3,
    feedback: 0b1011,
    feedforward: 0b1101,
};
pub const TURBO_757: Register = Register {
    memory: 2,
    feedback: 0b111,
    feedforward: 0b101,
};

fn coeff(poly: u32, i: usize) -> u8 {
    ((poly >> i) & 1) as u8
}

impl Register {
    /// Returns `(parity, tail_sys, tail_par)` for a terminated encoding of `bits`.
    pub fn encode(&self, bits: &[u8]) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        // reg[j] is the feedback value from j + 1 steps ago
        let mut reg = vec![0u8; self.memory];
        let fb_sum = |reg: &[u8]| {
            (1..=self.memory).fold(0, |acc, i| acc ^ (coeff(self.feedback, i) & reg[i - 1]))
        };
        let ff_sum = |reg: &[u8]| {
            (1..=self.memory).fold(0, |acc, i| acc ^ (coeff(self.feedforward, i) & reg[i - 1]))
        };
        let step = |u: u8, reg: &mut Vec<u8>| -> u8 {
            let a = u ^ fb_sum(reg);
            let p = (coeff(self.feedforward, 0) & a) ^ ff_sum(reg);
            reg.insert(0, a);
            reg.pop();
            p
        };
        let parity = bits.iter().map(|&u| step(u, &mut reg)).collect();
        let mut tail_sys = Vec::new();
        let mut tail_par = Vec::new();
        for _ in 0..self.memory {
            let u = fb_sum(&reg);
            tail_sys.push(u);
            tail_par.push(step(u, &mut reg));
        }
        assert!(reg.iter().all(|&b| b == 0), "register not flushed");
        (parity, tail_sys, tail_par)
    }
}

/// Soft inputs of one constituent decoder.
#[derive(Clone, Debug)]
pub struct Soft {
    pub sys: Vec<f64>,
    pub par: Vec<f64>,
    pub prior: Vec<f64>,
    pub tail_sys: Vec<f64>,
    pub tail_par: Vec<f64>,
}

impl Soft {
    pub fn random(rng: &mut ChaCha8Rng, k: usize, m: usize, scale: f64) -> Self {
        let d = Normal::new(0.0, scale).unwrap();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| d.sample(rng)).collect() };
        Soft {
            sys: draw(k),
            par: draw(k),
            prior: draw(k),
            tail_sys: draw(m),
            tail_par: draw(m),
        }
    }
}

fn sign(b: u8) -> f64 {
    if b == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Log-likelihood (up to a constant) of every terminated message, by enumeration.
fn path_scores(reg: &Register, soft: &Soft) -> Vec<(u32, f64)> {
    let k = soft.sys.len();
    (0..1u32 << k)
        .map(|msg| {
            let bits: Vec<u8> = (0..k).map(|i| ((msg >> i) & 1) as u8).collect();
            let (par, ts, tp) = reg.encode(&bits);
            let mut score = 0.0;
            for i in 0..k {
                score += 0.5 * sign(bits[i]) * (soft.sys[i] + soft.prior[i])
                    + 0.5 * sign(par[i]) * soft.par[i];
            }
            for j in 0..reg.memory {
                score +=
                    0.5 * sign(ts[j]) * soft.tail_sys[j] + 0.5 * sign(tp[j]) * soft.tail_par[j];
            }
            (msg, score)
        })
        .collect()
}

/// Exact bitwise posterior log-odds over all `2^K` messages.
pub fn exhaustive_map(reg: &Register, soft: &Soft) -> Vec<f64> {
    let scores = path_scores(reg, soft);
    let top = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    (0..soft.sys.len())
        .map(|i| {
            let mut p = [0.0f64; 2];
            for &(msg, s) in &scores {
                p[((msg >> i) & 1) as usize] += (s - top).exp();
            }
            p[1].ln() - p[0].ln()
        })
        .collect()
}

/// Best-path score difference per bit over all `2^K` messages.
pub fn exhaustive_max_log(reg: &Register, soft: &Soft) -> Vec<f64> {
    let scores = path_scores(reg, soft);
    (0..soft.sys.len())
        .map(|i| {
            let mut best = [f64::NEG_INFINITY; 2];
            for &(msg, s) in &scores {
                let b = ((msg >> i) & 1) as usize;
                best[b] = best[b].max(s);
            }
            best[1] - best[0]
        })
        .collect()
}

/// `|got - want| <= tol * max(1, |want|)`.
pub fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(1.0)
}

pub fn random_bits(rng: &mut ChaCha8Rng, k: usize) -> Vec<u8> {
    (0..k).map(|_| rng.random_range(0..2u8)).collect()
}
