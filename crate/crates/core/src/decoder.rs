//! Iterative turbo decoding with weighted extrinsic exchange.
//!
//! Iteration `i` runs decoder 1 on `(sys, par1)` and decoder 2 on
//! `(pi(sys), par2)`. Each half-iteration passes on
//!
//! ```text
//! L_e = w1 * posterior - w2 * L_sys - w3 * prior
//! ```
//!
//! with `(w1, w2, w3) = alpha_i` after decoder 1 and `beta_i` after decoder 2.
//! The decision is taken on decoder 2's last posterior, deinterleaved.

use serde::{Deserialize, Serialize};

use crate::channel::LlrFrame;
use crate::codec::TurboCode;
use crate::error::{check_len, Error, Result};
use crate::scalar::Real;
use crate::siso::{
    siso_backward, siso_decode, siso_decode_taped, SisoAlgorithm, SisoInput, SisoWorkspace,
};

/// How extrinsic scaling weights are shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Unweighted exchange; every weight is 1.
    Classical,
    /// Six scalars per iteration, reused at every bit position.
    Shared,
    /// Six length-`K` vectors per iteration.
    Positional,
}

/// Per-iteration extrinsic weights.
///
/// Flat storage: shared weights at `6 i + j`; positional at `(6 i + j) K + k`,
/// where `j` runs over `(alpha1, alpha2, alpha3, beta1, beta2, beta3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet<T> {
    scheme: WeightScheme,
    iterations: usize,
    k: usize,
    values: Vec<T>,
}

/// Published TinyTurbo weights, rows `(alpha1, alpha2, alpha3, beta1, beta2, beta3)`.
pub const TINYTURBO_WEIGHTS: [[f64; 6]; 3] = [
    [0.445, 0.584, 1.0, 0.641, 0.779, 0.662],
    [0.834, 0.795, 0.725, 0.863, 0.716, 0.645],
    [0.911, 0.715, 0.638, 0.263, 0.616, 0.938],
];

impl<T: Real> WeightSet<T> {
    pub fn classical(iterations: usize) -> Self {
        WeightSet {
            scheme: WeightScheme::Classical,
            iterations,
            k: 0,
            values: Vec::new(),
        }
    }

    pub fn shared(rows: &[[T; 6]]) -> Self {
        WeightSet {
            scheme: WeightScheme::Shared,
            iterations: rows.len(),
            k: 0,
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn shared_ones(iterations: usize) -> Self {
        Self::shared(&vec![[T::one(); 6]; iterations])
    }

    /// Positional set with `values` in the flat layout described on the type.
    pub fn positional(iterations: usize, k: usize, values: Vec<T>) -> Result<Self> {
        check_len("positional weights", 6 * iterations * k, values.len())?;
        Ok(WeightSet {
            scheme: WeightScheme::Positional,
            iterations,
            k,
            values,
        })
    }

    /// Positional set that repeats each shared scalar at every position.
    pub fn broadcast(shared: &Self, k: usize) -> Result<Self> {
        if shared.scheme == WeightScheme::Positional {
            return Err(Error::Config("weights are already positional".into()));
        }
        let values = (0..shared.iterations * 6)
            .flat_map(|idx| std::iter::repeat_n(shared.get(idx / 6, idx % 6, 0), k))
            .collect();
        Self::positional(shared.iterations, k, values)
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Blocklength of a positional set; 0 otherwise.
    pub fn block_len(&self) -> usize {
        self.k
    }

    /// Trainable scalars (`6M` shared, `6MK` positional, 0 classical).
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    /// Weight `j` of iteration `iter` at bit position `pos`.
    #[inline]
    pub fn get(&self, iter: usize, j: usize, pos: usize) -> T {
        match self.scheme {
            WeightScheme::Classical => T::one(),
            WeightScheme::Shared => self.values[6 * iter + j],
            WeightScheme::Positional => self.values[(6 * iter + j) * self.k + pos],
        }
    }

    /// Classical weights become an explicit all-ones shared set.
    pub fn into_trainable(self) -> Self {
        match self.scheme {
            WeightScheme::Classical => Self::shared_ones(self.iterations),
            _ => self,
        }
    }

    pub fn to_file(&self) -> WeightFile {
        let weights = (0..self.iterations)
            .map(|i| match self.scheme {
                WeightScheme::Classical => WeightRow::Shared([1.0; 6]),
                WeightScheme::Shared => {
                    WeightRow::Shared(std::array::from_fn(|j| self.get(i, j, 0).as_f64()))
                }
                WeightScheme::Positional => WeightRow::Positional(std::array::from_fn(|j| {
                    (0..self.k).map(|p| self.get(i, j, p).as_f64()).collect()
                })),
            })
            .collect();
        WeightFile {
            scheme: self.scheme,
            iterations: self.iterations,
            k: (self.scheme == WeightScheme::Positional).then_some(self.k),
            weights,
        }
    }

    pub fn from_file(file: &WeightFile) -> Result<Self> {
        if file.weights.len() != file.iterations && file.scheme != WeightScheme::Classical {
            return Err(Error::Format(format!(
                "weight file declares {} iterations but has {} rows",
                file.iterations,
                file.weights.len()
            )));
        }
        match file.scheme {
            WeightScheme::Classical => Ok(Self::classical(file.iterations)),
            WeightScheme::Shared => {
                let rows = file
                    .weights
                    .iter()
                    .map(|r| match r {
                        WeightRow::Shared(v) => Ok(v.map(T::of)),
                        WeightRow::Positional(_) => {
                            Err(Error::Format("shared weight file has a vector row".into()))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::shared(&rows))
            }
            WeightScheme::Positional => {
                let k = file
                    .k
                    .ok_or_else(|| Error::Format("positional weight file needs K".into()))?;
                let mut values = Vec::with_capacity(6 * k * file.iterations);
                for r in &file.weights {
                    let WeightRow::Positional(vs) = r else {
                        return Err(Error::Format(
                            "positional weight file has a scalar row".into(),
                        ));
                    };
                    for v in vs {
                        check_len("positional weight vector", k, v.len())?;
                        values.extend(v.iter().map(|&x| T::of(x)));
                    }
                }
                Self::positional(file.iterations, k, values)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("weight file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("weight file: {e}")))?;
        Self::from_file(&file)
    }
}

/// On-disk weight file: `{scheme, iterations, K, weights: [[a1, a2, a3, b1, b2, b3], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub scheme: WeightScheme,
    pub iterations: usize,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub weights: Vec<WeightRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightRow {
    Shared([f64; 6]),
    Positional([Vec<f64>; 6]),
}

/// The 18 published TinyTurbo weights (shared, 3 iterations).
pub fn tinyturbo_preset<T: Real>() -> WeightSet<T> {
    let rows: Vec<[T; 6]> = TINYTURBO_WEIGHTS.iter().map(|r| r.map(T::of)).collect();
    WeightSet::shared(&rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig<T> {
    pub iterations: usize,
    pub algorithm: SisoAlgorithm,
    pub weights: WeightSet<T>,
}

impl<T: Real> DecodeConfig<T> {
    pub fn classical(algorithm: SisoAlgorithm, iterations: usize) -> Self {
        DecodeConfig {
            iterations,
            algorithm,
            weights: WeightSet::classical(iterations),
        }
    }

    /// TinyTurbo preset over max-log-MAP, 3 iterations.
    pub fn tinyturbo() -> Self {
        Self::with_weights(SisoAlgorithm::MaxLogMap, tinyturbo_preset())
    }

    pub fn with_weights(algorithm: SisoAlgorithm, weights: WeightSet<T>) -> Self {
        DecodeConfig {
            iterations: weights.iterations(),
            algorithm,
            weights,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config(
                "at least one decoding iteration is required".into(),
            ));
        }
        if self.weights.iterations() != self.iterations {
            return Err(Error::Config(format!(
                "weights cover {} iterations, decoder runs {}",
                self.weights.iterations(),
                self.iterations
            )));
        }
        if self.weights.scheme() == WeightScheme::Positional && self.weights.block_len() != k {
            return Err(Error::Config(format!(
                "positional weights are for K = {}, code has K = {k}",
                self.weights.block_len()
            )));
        }
        Ok(())
    }
}

/// Posteriors of one iteration, both in natural (deinterleaved) bit order.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace<T> {
    pub posterior1: Vec<T>,
    pub posterior2: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput<T> {
    pub bits: Vec<u8>,
    pub posterior: Vec<T>,
    pub trajectory: Vec<IterationTrace<T>>,
}

/// Forward record of a decode, consumed by [`decode_backward`].
#[derive(Debug, Clone)]
pub struct DecodeTape<T> {
    sys_interleaved: Vec<T>,
    sys: Vec<T>,
    iterations: Vec<IterationTape<T>>,
}

#[derive(Debug, Clone)]
struct IterationTape<T> {
    prior1: Vec<T>,
    posterior1: Vec<T>,
    ws1: SisoWorkspace<T>,
    prior2: Vec<T>,
    posterior2: Vec<T>,
    ws2: SisoWorkspace<T>,
}

/// `out[k] = w1 posterior[k] - w2 sys[k] - w3 prior[k]`.
pub fn weighted_extrinsic<T: Real>(
    posterior: &[T],
    sys: &[T],
    prior: &[T],
    w: (T, T, T),
) -> Result<Vec<T>> {
    check_len("systematic LLRs", posterior.len(), sys.len())?;
    check_len("prior LLRs", posterior.len(), prior.len())?;
    Ok(posterior
        .iter()
        .zip(sys)
        .zip(prior)
        .map(|((&l, &s), &a)| w.0 * l - w.1 * s - w.2 * a)
        .collect())
}

/// Per-position form of [`weighted_extrinsic`].
pub fn weighted_extrinsic_positional<T: Real>(
    posterior: &[T],
    sys: &[T],
    prior: &[T],
    w1: &[T],
    w2: &[T],
    w3: &[T],
) -> Result<Vec<T>> {
    let k = posterior.len();
    for (what, len) in [("systematic LLRs", sys.len()), ("prior LLRs", prior.len())] {
        check_len(what, k, len)?;
    }
    for w in [w1, w2, w3] {
        check_len("positional weights", k, w.len())?;
    }
    Ok((0..k)
        .map(|i| w1[i] * posterior[i] - w2[i] * sys[i] - w3[i] * prior[i])
        .collect())
}

fn weigh<T: Real>(
    weights: &WeightSet<T>,
    iter: usize,
    base: usize,
    post: &[T],
    sys: &[T],
    prior: &[T],
    out: &mut [T],
) {
    match weights.scheme() {
        WeightScheme::Classical => {
            for i in 0..post.len() {
                out[i] = post[i] - sys[i] - prior[i];
            }
        }
        WeightScheme::Shared => {
            let w1 = weights.get(iter, base, 0);
            let w2 = weights.get(iter, base + 1, 0);
            let w3 = weights.get(iter, base + 2, 0);
            for i in 0..post.len() {
                out[i] = w1 * post[i] - w2 * sys[i] - w3 * prior[i];
            }
        }
        WeightScheme::Positional => {
            for i in 0..post.len() {
                out[i] = weights.get(iter, base, i) * post[i]
                    - weights.get(iter, base + 1, i) * sys[i]
                    - weights.get(iter, base + 2, i) * prior[i];
            }
        }
    }
}

fn check_frame<T: Real>(
    code: &TurboCode,
    frame: &LlrFrame<T>,
    cfg: &DecodeConfig<T>,
) -> Result<()> {
    let (k, m) = (code.k(), code.memory());
    check_len("frame systematic", k, frame.sys.len())?;
    check_len("frame parity 1", k, frame.par1.len())?;
    check_len("frame parity 2", k, frame.par2.len())?;
    for t in [
        &frame.tail_sys1,
        &frame.tail_par1,
        &frame.tail_sys2,
        &frame.tail_par2,
    ] {
        check_len("frame tail", m, t.len())?;
    }
    cfg.validate(k)
}

/// Decodes one frame.
pub fn turbo_decode<T: Real>(
    code: &TurboCode,
    frame: &LlrFrame<T>,
    cfg: &DecodeConfig<T>,
) -> Result<DecodeOutput<T>> {
    decode_impl(code, frame, cfg, false).map(|(out, _)| out)
}

/// Decodes one frame and keeps the tape needed for [`decode_backward`].
pub fn turbo_decode_taped<T: Real>(
    code: &TurboCode,
    frame: &LlrFrame<T>,
    cfg: &DecodeConfig<T>,
) -> Result<(DecodeOutput<T>, DecodeTape<T>)> {
    decode_impl(code, frame, cfg, true).map(|(out, tape)| (out, tape.expect("tape recorded")))
}

fn decode_impl<T: Real>(
    code: &TurboCode,
    frame: &LlrFrame<T>,
    cfg: &DecodeConfig<T>,
    record: bool,
) -> Result<(DecodeOutput<T>, Option<DecodeTape<T>>)> {
    check_frame(code, frame, cfg)?;
    let k = code.k();
    let pi = code.interleaver();
    let trellis = code.trellis();
    let run = if record {
        siso_decode_taped
    } else {
        siso_decode
    };

    let mut sys_i = vec![T::zero(); k];
    pi.apply_into(&frame.sys, &mut sys_i);
    let mut prior1 = vec![T::zero(); k];
    let mut ext = vec![T::zero(); k];
    let mut prior2 = vec![T::zero(); k];
    let mut trajectory = Vec::with_capacity(cfg.iterations);
    let mut tapes = Vec::new();
    let mut last_post2 = Vec::new();

    for it in 0..cfg.iterations {
        let out1 = run(
            trellis,
            &SisoInput {
                sys: &frame.sys,
                par: &frame.par1,
                prior: &prior1,
                tail_sys: &frame.tail_sys1,
                tail_par: &frame.tail_par1,
            },
            cfg.algorithm,
        )?;
        weigh(
            &cfg.weights,
            it,
            0,
            &out1.posterior,
            &frame.sys,
            &prior1,
            &mut ext,
        );
        pi.apply_into(&ext, &mut prior2);

        let out2 = run(
            trellis,
            &SisoInput {
                sys: &sys_i,
                par: &frame.par2,
                prior: &prior2,
                tail_sys: &frame.tail_sys2,
                tail_par: &frame.tail_par2,
            },
            cfg.algorithm,
        )?;
        weigh(
            &cfg.weights,
            it,
            3,
            &out2.posterior,
            &sys_i,
            &prior2,
            &mut ext,
        );
        let next_prior1 = pi.apply_inverse(&ext)?;

        trajectory.push(IterationTrace {
            posterior1: out1.posterior.clone(),
            posterior2: pi.apply_inverse(&out2.posterior)?,
        });
        if record {
            tapes.push(IterationTape {
                prior1: std::mem::replace(&mut prior1, next_prior1),
                posterior1: out1.posterior,
                ws1: out1.workspace,
                prior2: prior2.clone(),
                posterior2: out2.posterior.clone(),
                ws2: out2.workspace,
            });
        } else {
            prior1 = next_prior1;
        }
        last_post2 = out2.posterior;
    }

    let posterior = pi.apply_inverse(&last_post2)?;
    let bits = posterior.iter().map(|&l| u8::from(l > T::zero())).collect();
    let tape = record.then(|| DecodeTape {
        sys_interleaved: sys_i,
        sys: frame.sys.clone(),
        iterations: tapes,
    });
    Ok((
        DecodeOutput {
            bits,
            posterior,
            trajectory,
        },
        tape,
    ))
}

/// Gradient of a scalar loss with respect to the trainable weights.
///
/// `grad_posterior` is the loss derivative with respect to the final
/// (deinterleaved) posterior. The result has the layout of
/// [`WeightSet::values`]; classical weights have no parameters.
pub fn decode_backward<T: Real>(
    code: &TurboCode,
    tape: &DecodeTape<T>,
    cfg: &DecodeConfig<T>,
    grad_posterior: &[T],
) -> Result<Vec<T>> {
    let k = code.k();
    check_len("posterior gradient", k, grad_posterior.len())?;
    if tape.iterations.len() != cfg.iterations {
        return Err(Error::Contract(
            "tape was recorded with a different iteration count".into(),
        ));
    }
    let pi = code.interleaver();
    let trellis = code.trellis();
    let w = &cfg.weights;
    let scheme = w.scheme();
    let mut grad_w = vec![T::zero(); w.num_params()];

    let mut acc = |iter: usize, j: usize, pos: usize, v: T| match scheme {
        WeightScheme::Classical => {}
        WeightScheme::Shared => grad_w[6 * iter + j] += v,
        WeightScheme::Positional => grad_w[(6 * iter + j) * k + pos] += v,
    };

    // final posterior = deinterleave(posterior2) -> its adjoint interleaves
    let mut g_post2 = pi.apply(grad_posterior)?;
    // gradient w.r.t. decoder 2's weighted extrinsic (zero after the last iteration)
    let mut g_ext2 = vec![T::zero(); k];
    let mut g_prior2 = vec![T::zero(); k];
    let mut g_ext1 = vec![T::zero(); k];
    let mut g_post1 = vec![T::zero(); k];
    let mut g_prior1 = vec![T::zero(); k];

    for it in (0..cfg.iterations).rev() {
        let rec = &tape.iterations[it];
        for i in 0..k {
            let g = g_ext2[i];
            g_post2[i] += w.get(it, 3, i) * g;
            acc(it, 3, i, g * rec.posterior2[i]);
            acc(it, 4, i, -g * tape.sys_interleaved[i]);
            acc(it, 5, i, -g * rec.prior2[i]);
            g_prior2[i] = -w.get(it, 5, i) * g;
        }
        let back2 = siso_backward(trellis, &rec.ws2, &g_post2, None)?;
        for i in 0..k {
            g_prior2[i] += back2.prior[i];
        }
        // prior2 = interleave(ext1)
        pi.apply_inverse_into(&g_prior2, &mut g_ext1);
        for i in 0..k {
            let g = g_ext1[i];
            g_post1[i] = w.get(it, 0, i) * g;
            acc(it, 0, i, g * rec.posterior1[i]);
            acc(it, 1, i, -g * tape.sys[i]);
            acc(it, 2, i, -g * rec.prior1[i]);
            g_prior1[i] = -w.get(it, 2, i) * g;
        }
        let back1 = siso_backward(trellis, &rec.ws1, &g_post1, None)?;
        for i in 0..k {
            g_prior1[i] += back1.prior[i];
        }
        // prior1 = deinterleave(ext2 of the previous iteration)
        pi.apply_into(&g_prior1, &mut g_ext2);
        g_post2.iter_mut().for_each(|g| *g = T::zero());
    }
    Ok(grad_w)
}
