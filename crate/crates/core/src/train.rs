//! Learning decoder weights by backpropagating through the unrolled decoder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelKind, ChannelSpec};
use crate::codec::TurboCode;
use crate::decoder::{
    decode_backward, turbo_decode, turbo_decode_taped, DecodeConfig, WeightScheme, WeightSet,
};
use crate::error::{check_len, Error, Result};
use crate::harness::{generate_frame, simulate, StopRule};
use crate::scalar::{sigmoid, softplus, Real};
use crate::siso::SisoAlgorithm;

/// RNG stream reserved for training batches; evaluation streams are keyed by SNR.
const TRAIN_STREAM: u64 = 0x7472_6169_6e00_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Bit-wise cross-entropy against the transmitted message.
    Bce,
    /// Mean squared error against a MAP decoder's posteriors.
    #[serde(alias = "mse")]
    MseToTeacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: Loss,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_snr_db: f64,
    pub steps: usize,
    pub base_algorithm: SisoAlgorithm,
    pub scheme: WeightScheme,
    pub seed: u64,
    /// Training channel; AWGN unless retraining for another noise model.
    pub channel: ChannelKind,
    /// Validation BER is measured every this many steps (0 disables it).
    pub validate_every: usize,
    pub validation_frames: u64,
    pub validation_snr_db: f64,
}

impl Default for TrainConfig {
    /// Published training setup: BCE, Adam at 8e-4, batch 1000, -1 dB, 5000 steps.
    fn default() -> Self {
        TrainConfig {
            loss: Loss::Bce,
            learning_rate: 0.0008,
            batch_size: 1000,
            train_snr_db: -1.0,
            steps: 5000,
            base_algorithm: SisoAlgorithm::MaxLogMap,
            scheme: WeightScheme::Shared,
            seed: 0,
            channel: ChannelKind::Awgn,
            validate_every: 0,
            validation_frames: 2000,
            validation_snr_db: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config(
                "batch size and step count must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "bad learning rate {}",
                self.learning_rate
            )));
        }
        if self.scheme == WeightScheme::Classical {
            return Err(Error::Config(
                "classical weights have nothing to train".into(),
            ));
        }
        ChannelSpec {
            snr_db: self.train_snr_db,
            kind: self.channel,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    pub weights: WeightSet<T>,
    /// Mean batch loss at every step.
    pub loss_curve: Vec<f64>,
    /// `(step, validation BER)` pairs.
    pub ber_curve: Vec<(usize, f64)>,
}

impl<T: Real> TrainReport<T> {
    /// `step,loss,val_ber` rows; `val_ber` is empty where no validation ran.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("step,loss,val_ber\n");
        let mut ber = self.ber_curve.iter().peekable();
        for (i, l) in self.loss_curve.iter().enumerate() {
            let step = i + 1;
            match ber.peek() {
                Some(&&(s, b)) if s == step => {
                    out.push_str(&format!("{step},{l},{b}\n"));
                    ber.next();
                }
                _ => out.push_str(&format!("{step},{l},\n")),
            }
        }
        out
    }
}

/// Mean over the batch of the summed per-bit cross-entropy.
pub fn bce_loss<T: Real>(posteriors: &[Vec<T>], messages: &[Vec<u8>]) -> Result<T> {
    check_len("batch", posteriors.len(), messages.len())?;
    if posteriors.is_empty() {
        return Ok(T::zero());
    }
    let mut total = T::zero();
    for (l, u) in posteriors.iter().zip(messages) {
        check_len("message", l.len(), u.len())?;
        total += frame_bce(l, u);
    }
    Ok(total / T::of(posteriors.len() as f64))
}

fn frame_bce<T: Real>(l: &[T], u: &[u8]) -> T {
    l.iter()
        .zip(u)
        .map(|(&l, &u)| if u == 1 { softplus(-l) } else { softplus(l) })
        .sum()
}

/// Per-frame contribution to `d bce / d posterior`, before dividing by the batch size.
fn frame_bce_grad<T: Real>(l: &[T], u: &[u8]) -> Vec<T> {
    l.iter()
        .zip(u)
        .map(|(&l, &u)| sigmoid(l) - T::of(u as f64))
        .collect()
}

/// Mean squared difference over every batch entry and position.
pub fn mse_teacher_loss<T: Real>(student: &[Vec<T>], teacher: &[Vec<T>]) -> Result<T> {
    check_len("batch", student.len(), teacher.len())?;
    let mut total = T::zero();
    let mut count = 0usize;
    for (s, t) in student.iter().zip(teacher) {
        check_len("teacher posterior", s.len(), t.len())?;
        total += s.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
        count += s.len();
    }
    if count == 0 {
        return Ok(T::zero());
    }
    Ok(total / T::of(count as f64))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    /// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr: T::of(lr),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// A fixed batch of received frames, for loss evaluation outside the training loop.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub messages: Vec<Vec<u8>>,
    pub frames: Vec<crate::channel::LlrFrame<T>>,
}

/// Draws training batch `step` of a run seeded with `seed`.
pub fn training_batch<T: Real>(
    code: &TurboCode,
    channel: &ChannelSpec,
    seed: u64,
    step: usize,
    batch_size: usize,
) -> Batch<T> {
    let (messages, frames) = (0..batch_size)
        .into_par_iter()
        .map(|b| {
            let idx = (step * batch_size + b) as u64;
            generate_frame::<T>(code, channel, seed, TRAIN_STREAM, idx)
        })
        .unzip();
    Batch { messages, frames }
}

/// Loss of `cfg` on `batch` and its gradient with respect to the weights.
pub fn loss_and_gradient<T: Real>(
    code: &TurboCode,
    cfg: &DecodeConfig<T>,
    batch: &Batch<T>,
    loss: Loss,
) -> Result<(T, Vec<T>)> {
    let b = batch.frames.len();
    if b == 0 {
        return Err(Error::Config("empty batch".into()));
    }
    let teacher_cfg = DecodeConfig::classical(SisoAlgorithm::Map, cfg.iterations);
    let scale = T::one() / T::of(b as f64);
    let kscale = T::of(2.0) / T::of((b * code.k()) as f64);
    let per_frame = (0..b)
        .into_par_iter()
        .map(|i| -> Result<(T, Vec<T>)> {
            let (out, tape) = turbo_decode_taped(code, &batch.frames[i], cfg)?;
            let (value, grad_post) = match loss {
                Loss::Bce => {
                    let msg = &batch.messages[i];
                    let g: Vec<T> = frame_bce_grad(&out.posterior, msg)
                        .into_iter()
                        .map(|g| g * scale)
                        .collect();
                    (frame_bce(&out.posterior, msg) * scale, g)
                }
                Loss::MseToTeacher => {
                    let teacher = turbo_decode(code, &batch.frames[i], &teacher_cfg)?.posterior;
                    let mut sq = T::zero();
                    let g = out
                        .posterior
                        .iter()
                        .zip(&teacher)
                        .map(|(&s, &t)| {
                            sq += (s - t) * (s - t);
                            kscale * (s - t)
                        })
                        .collect();
                    (sq * kscale / T::of(2.0), g)
                }
            };
            let gw = decode_backward(code, &tape, cfg, &grad_post)?;
            Ok((value, gw))
        })
        .collect::<Result<Vec<_>>>()?;

    // serial reduction in frame order keeps results independent of thread count
    let mut total = T::zero();
    let mut grad = vec![T::zero(); cfg.weights.num_params()];
    for (v, g) in per_frame {
        total += v;
        for (a, x) in grad.iter_mut().zip(g) {
            *a += x;
        }
    }
    Ok((total, grad))
}

fn initial_weights<T: Real>(
    code: &TurboCode,
    template: &DecodeConfig<T>,
    scheme: WeightScheme,
) -> Result<WeightSet<T>> {
    let base = template.weights.clone().into_trainable();
    match (scheme, base.scheme()) {
        (WeightScheme::Positional, WeightScheme::Positional)
        | (WeightScheme::Shared, WeightScheme::Shared) => Ok(base),
        (WeightScheme::Positional, _) => WeightSet::broadcast(&base, code.k()),
        (WeightScheme::Shared, _) => Err(Error::Config(
            "cannot train shared weights from a positional template".into(),
        )),
        (WeightScheme::Classical, _) => Err(Error::Config(
            "classical weights have nothing to train".into(),
        )),
    }
}

/// Trains the weights of `template` (iterations and starting point) with Adam.
///
/// Classical templates start from all-ones weights.
pub fn train<T: Real>(
    code: &TurboCode,
    tc: &TrainConfig,
    template: &DecodeConfig<T>,
) -> Result<TrainReport<T>> {
    train_with_progress(code, tc, template, |_, _| {})
}

/// [`train`] with a callback receiving `(step, loss)` after each update.
pub fn train_with_progress<T: Real>(
    code: &TurboCode,
    tc: &TrainConfig,
    template: &DecodeConfig<T>,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainReport<T>> {
    tc.validate()?;
    template.validate(code.k())?;
    let weights = initial_weights(code, template, tc.scheme)?;
    let mut cfg = DecodeConfig::with_weights(tc.base_algorithm, weights);
    let channel = ChannelSpec {
        snr_db: tc.train_snr_db,
        kind: tc.channel,
    };
    let mut adam = Adam::new(tc.learning_rate, cfg.weights.num_params());
    let mut loss_curve = Vec::with_capacity(tc.steps);
    let mut ber_curve = Vec::new();

    for step in 0..tc.steps {
        let batch = training_batch::<T>(code, &channel, tc.seed, step, tc.batch_size);
        let (loss, grad) = loss_and_gradient(code, &cfg, &batch, tc.loss)?;
        adam.step(cfg.weights.values_mut(), &grad);
        loss_curve.push(loss.as_f64());
        progress(step + 1, loss.as_f64());

        if tc.validate_every > 0 && (step + 1) % tc.validate_every == 0 {
            let res = simulate(
                code,
                &cfg,
                &ChannelSpec::awgn(tc.validation_snr_db),
                &[tc.validation_snr_db],
                StopRule::frames(tc.validation_frames),
                tc.seed ^ 0x5641_4c49_44,
            )?;
            ber_curve.push((step + 1, res.rows[0].ber));
        }
    }
    Ok(TrainReport {
        weights: cfg.weights,
        loss_curve,
        ber_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodeSpec;

    #[test]
    fn bce_examples() {
        let l = bce_loss(&[vec![0.0f64; 4]], &[vec![0, 1, 1, 0]]).unwrap();
        assert!((l / 4.0 - std::f64::consts::LN_2).abs() < 1e-12);
        let l = bce_loss(&[vec![20.0f64]], &[vec![1]]).unwrap();
        assert!(l < 1e-8 && l >= 0.0);
        // independent evaluation of -[u log s(L) + (1-u) log s(-L)]
        let post = vec![vec![0.3f64, -1.7, 2.2], vec![-0.4, 4.1, -3.3]];
        let msgs = vec![vec![1u8, 0, 0], vec![1, 1, 0]];
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut want = 0.0;
        for (l, u) in post.iter().zip(&msgs) {
            for (&x, &b) in l.iter().zip(u) {
                let b = b as f64;
                want -= b * sig(x).ln() + (1.0 - b) * sig(-x).ln();
            }
        }
        want /= 2.0;
        assert!((bce_loss(&post, &msgs).unwrap() - want).abs() < 1e-12);
        assert!(bce_loss(&post, &msgs[..1]).is_err());
        assert!(bce_loss(&[vec![0.0f64; 2]], &[vec![0]]).is_err());
    }

    #[test]
    fn bce_gradient_matches_difference_quotient() {
        let l = [0.7f64, -2.0];
        let u = [1u8, 1];
        let g = frame_bce_grad(&l, &u);
        for i in 0..2 {
            let h = 1e-6;
            let mut up = l;
            up[i] += h;
            let mut dn = l;
            dn[i] -= h;
            let fd = (frame_bce(&up, &u) - frame_bce(&dn, &u)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn mse_examples() {
        let s = vec![vec![1.0f64, 2.0, 3.0]];
        assert_eq!(mse_teacher_loss(&s, &s).unwrap(), 0.0);
        let t = vec![vec![1.5f64, 2.5, 3.5]];
        assert!((mse_teacher_loss(&s, &t).unwrap() - 0.25).abs() < 1e-15);
        let a = vec![vec![0.2f64, -1.0], vec![3.0, 0.5]];
        let b = vec![vec![1.2f64, 1.0], vec![2.5, 0.0]];
        let want = (1.0 + 4.0 + 0.25 + 0.25) / 4.0;
        assert!((mse_teacher_loss(&a, &b).unwrap() - want).abs() < 1e-15);
        assert!(mse_teacher_loss(&a, &b[..1]).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = [1.0f64, 1.0, 1.0];
        let mut opt = Adam::new(0.01, 3);
        opt.step(&mut p, &[2.0, -0.5, 0.0]);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] - 1.01).abs() < 1e-9);
        assert_eq!(p[2], 1.0);
    }

    fn small_run(lr: f64, loss: Loss) -> TrainConfig {
        TrainConfig {
            loss,
            learning_rate: lr,
            batch_size: 8,
            steps: 3,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_freezes_weights() {
        let code = CodeSpec::lte(40).build().unwrap();
        let template = DecodeConfig::<f64>::classical(SisoAlgorithm::MaxLogMap, 2);
        let report = train(&code, &small_run(0.0, Loss::Bce), &template).unwrap();
        assert_eq!(report.weights, WeightSet::shared_ones(2));
        assert_eq!(report.loss_curve.len(), 3);
    }

    #[test]
    fn training_is_deterministic() {
        let code = CodeSpec::lte(40).build().unwrap();
        let template = DecodeConfig::<f64>::classical(SisoAlgorithm::MaxLogMap, 2);
        for loss in [Loss::Bce, Loss::MseToTeacher] {
            let a = train(&code, &small_run(0.01, loss), &template).unwrap();
            let b = train(&code, &small_run(0.01, loss), &template).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.weights, WeightSet::shared_ones(2));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let code = CodeSpec::lte(40).build().unwrap();
        let template = DecodeConfig::<f64>::classical(SisoAlgorithm::MaxLogMap, 2);
        let mut tc = small_run(0.01, Loss::Bce);
        tc.batch_size = 0;
        assert!(matches!(
            train(&code, &tc, &template),
            Err(Error::Config(_))
        ));
        let mut tc = small_run(0.01, Loss::Bce);
        tc.scheme = WeightScheme::Classical;
        assert!(train(&code, &tc, &template).is_err());
    }

    #[test]
    fn curves_csv_layout() {
        let r = TrainReport {
            weights: WeightSet::<f64>::shared_ones(1),
            loss_curve: vec![3.0, 2.0],
            ber_curve: vec![(2, 0.1)],
        };
        assert_eq!(r.curves_csv(), "step,loss,val_ber\n1,3,\n2,2,0.1\n");
    }
}
