//! BCJR soft-input soft-output decoding of one RSC constituent code.
//!
//! Log-domain forward/backward recursions over `K + m` trellis steps. The last
//! `m` steps are the termination: only the feedback-forced branch leaves each
//! state, the prior is zero, and no posterior is produced. Branch metrics are
//!
//! ```text
//! gamma_t(s', u) = 1/2 (x_u * L_sys + x_p * L_par) + 1/2 x_u * L_prior,   x_b = 2b - 1
//! ```
//!
//! Every alpha/beta row is shifted by its maximum after each step; posteriors are
//! invariant under such shifts, and the backward pass treats the shifts as constants.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::{log_add, Real};
use crate::trellis::Trellis;

/// Log-sum-exp semiring (exact MAP) or its max approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SisoAlgorithm {
    #[serde(alias = "log_map")]
    Map,
    #[serde(alias = "maxlog")]
    MaxLogMap,
}

impl SisoAlgorithm {
    #[inline]
    pub(crate) fn exact(self) -> bool {
        matches!(self, SisoAlgorithm::Map)
    }
}

/// Inputs to one constituent decoder. Lengths: `K` for the first three, `m` for the tails.
#[derive(Debug, Clone, Copy)]
pub struct SisoInput<'a, T> {
    pub sys: &'a [T],
    pub par: &'a [T],
    pub prior: &'a [T],
    pub tail_sys: &'a [T],
    pub tail_par: &'a [T],
}

/// Forward/backward state kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct SisoWorkspace<T> {
    k: usize,
    m: usize,
    num_states: usize,
    algorithm: SisoAlgorithm,
    /// `(K + m + 1) x S`, row-normalized.
    alpha: Vec<T>,
    /// `(K + m + 1) x S`, row-normalized.
    beta: Vec<T>,
    /// `(K + m) x 4`, indexed by `2 u + p`. Empty unless the tape was recorded.
    gamma: Vec<T>,
}

impl<T: Real> SisoWorkspace<T> {
    pub fn alpha(&self, step: usize) -> &[T] {
        &self.alpha[step * self.num_states..(step + 1) * self.num_states]
    }

    pub fn beta(&self, step: usize) -> &[T] {
        &self.beta[step * self.num_states..(step + 1) * self.num_states]
    }

    pub fn is_taped(&self) -> bool {
        !self.gamma.is_empty()
    }

    pub fn algorithm(&self) -> SisoAlgorithm {
        self.algorithm
    }
}

#[derive(Debug, Clone)]
pub struct SisoOutput<T> {
    pub posterior: Vec<T>,
    pub extrinsic: Vec<T>,
    pub workspace: SisoWorkspace<T>,
}

/// Gradients with respect to every [`SisoInput`] field.
#[derive(Debug, Clone, PartialEq)]
pub struct SisoGradient<T> {
    pub sys: Vec<T>,
    pub par: Vec<T>,
    pub prior: Vec<T>,
    pub tail_sys: Vec<T>,
    pub tail_par: Vec<T>,
}

/// `1/2 (x_s L_sys + x_p L_par) + 1/2 s(u) L_prior`, with `s(1) = +1`, `s(0) = -1`.
#[inline]
pub fn branch_metric<T: Real>(sys: T, par: T, prior: T, x_sys: T, x_par: T, u: u8) -> T {
    let su = if u == 1 { T::one() } else { -T::one() };
    T::half() * (x_sys * sys + x_par * par) + T::half() * su * prior
}

/// Numerically stable log-sum-exp; `-inf` for an empty or all `-inf` input.
pub fn lse<T: Real>(values: &[T]) -> T {
    let m = max_of(values);
    if m == T::neg_infinity() {
        return m;
    }
    m + values.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

/// Plain maximum; the max-log replacement for [`lse`].
pub fn max_of<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::neg_infinity(), |a, &b| a.max(b))
}

/// Derivative of `lse` (softmax) or of `max` (one-hot at the first maximum).
pub fn reduce_weights<T: Real>(values: &[T], exact: bool, out: &mut [T]) {
    let m = max_of(values);
    out.iter_mut().for_each(|w| *w = T::zero());
    if m == T::neg_infinity() {
        return;
    }
    if exact {
        let mut total = T::zero();
        for (w, &v) in out.iter_mut().zip(values) {
            *w = (v - m).exp();
            total += *w;
        }
        out.iter_mut().for_each(|w| *w /= total);
    } else if let Some(i) = values.iter().position(|&v| v == m) {
        out[i] = T::one();
    }
}

/// The four branch metrics of step `t`, indexed by `2 u + p`.
#[inline]
fn step_metrics<T: Real>(sys_plus_prior: T, par: T) -> [T; 4] {
    let h = T::half();
    let a = h * sys_plus_prior;
    let b = h * par;
    [-a - b, -a + b, a - b, a + b]
}

struct Geometry {
    k: usize,
    m: usize,
    ns: usize,
}

fn check_input<T: Real>(trellis: &Trellis, input: &SisoInput<'_, T>) -> Result<Geometry> {
    let k = input.sys.len();
    let m = trellis.memory();
    check_len("siso parity", k, input.par.len())?;
    check_len("siso prior", k, input.prior.len())?;
    check_len("siso tail systematic", m, input.tail_sys.len())?;
    check_len("siso tail parity", m, input.tail_par.len())?;
    if k == 0 {
        return Err(Error::Contract("siso decode of an empty block".into()));
    }
    Ok(Geometry {
        k,
        m,
        ns: trellis.num_states(),
    })
}

#[inline]
fn gamma_at<T: Real>(input: &SisoInput<'_, T>, k: usize, t: usize) -> [T; 4] {
    if t < k {
        step_metrics(input.sys[t] + input.prior[t], input.par[t])
    } else {
        step_metrics(input.tail_sys[t - k], input.tail_par[t - k])
    }
}

/// Whether edge `(s', u)` exists at step `t` (tail steps force the termination input).
#[inline]
fn edge_valid(trellis: &Trellis, k: usize, t: usize, s: usize, u: u8) -> bool {
    t < k || trellis.termination_input(s) == u
}

fn normalize<T: Real>(row: &mut [T]) {
    let m = max_of(row);
    if m.is_finite() {
        row.iter_mut().for_each(|v| *v -= m);
    }
}

/// Runs BCJR without recording a tape.
pub fn siso_decode<T: Real>(
    trellis: &Trellis,
    input: &SisoInput<'_, T>,
    algorithm: SisoAlgorithm,
) -> Result<SisoOutput<T>> {
    run(trellis, input, algorithm, false)
}

/// Runs BCJR and keeps the branch metrics needed by [`siso_backward`].
pub fn siso_decode_taped<T: Real>(
    trellis: &Trellis,
    input: &SisoInput<'_, T>,
    algorithm: SisoAlgorithm,
) -> Result<SisoOutput<T>> {
    run(trellis, input, algorithm, true)
}

fn run<T: Real>(
    trellis: &Trellis,
    input: &SisoInput<'_, T>,
    algorithm: SisoAlgorithm,
    record: bool,
) -> Result<SisoOutput<T>> {
    let Geometry { k, m, ns } = check_input(trellis, input)?;
    let exact = algorithm.exact();
    let steps = k + m;
    let ninf = T::neg_infinity();

    let gamma: Vec<T> = (0..steps).flat_map(|t| gamma_at(input, k, t)).collect();

    let mut alpha = vec![ninf; (steps + 1) * ns];
    alpha[0] = T::zero();
    for t in 0..steps {
        let g = &gamma[4 * t..4 * t + 4];
        let (head, tail) = alpha.split_at_mut((t + 1) * ns);
        let prev = &head[t * ns..];
        let row = &mut tail[..ns];
        for (s, out) in row.iter_mut().enumerate() {
            let mut acc = ninf;
            for &(sp, u) in trellis.prev_transitions(s) {
                if edge_valid(trellis, k, t, sp, u) {
                    let p = trellis.parity_out(sp, u) as usize;
                    acc = log_add(acc, prev[sp] + g[2 * u as usize + p], exact);
                }
            }
            *out = acc;
        }
        normalize(row);
    }

    let mut beta = vec![ninf; (steps + 1) * ns];
    beta[steps * ns] = T::zero();
    for t in (0..steps).rev() {
        let g = &gamma[4 * t..4 * t + 4];
        let (head, tail) = beta.split_at_mut((t + 1) * ns);
        let next = &tail[..ns];
        let row = &mut head[t * ns..];
        for (s, out) in row.iter_mut().enumerate() {
            let mut acc = ninf;
            for u in 0..2u8 {
                if edge_valid(trellis, k, t, s, u) {
                    let p = trellis.parity_out(s, u) as usize;
                    let ns_ = trellis.next_state(s, u);
                    acc = log_add(acc, next[ns_] + g[2 * u as usize + p], exact);
                }
            }
            *out = acc;
        }
        normalize(row);
    }

    let mut posterior = Vec::with_capacity(k);
    let mut zbuf = [vec![ninf; ns], vec![ninf; ns]];
    for t in 0..k {
        let g = &gamma[4 * t..4 * t + 4];
        let a = &alpha[t * ns..(t + 1) * ns];
        let b = &beta[(t + 1) * ns..(t + 2) * ns];
        for s in 0..ns {
            for u in 0..2u8 {
                let p = trellis.parity_out(s, u) as usize;
                zbuf[u as usize][s] = a[s] + g[2 * u as usize + p] + b[trellis.next_state(s, u)];
            }
        }
        let reduce = if exact { lse::<T> } else { max_of::<T> };
        posterior.push(reduce(&zbuf[1]) - reduce(&zbuf[0]));
    }

    let extrinsic = posterior
        .iter()
        .zip(input.sys)
        .zip(input.prior)
        .map(|((&l, &s), &p)| l - s - p)
        .collect();

    Ok(SisoOutput {
        posterior,
        extrinsic,
        workspace: SisoWorkspace {
            k,
            m,
            num_states: ns,
            algorithm,
            alpha,
            beta,
            gamma: if record { gamma } else { Vec::new() },
        },
    })
}

/// Reverse-mode pass through a taped [`siso_decode_taped`] run.
///
/// `grad_posterior` and the optional `grad_extrinsic` are upstream derivatives of
/// a scalar loss; the result holds its derivatives with respect to each input.
pub fn siso_backward<T: Real>(
    trellis: &Trellis,
    ws: &SisoWorkspace<T>,
    grad_posterior: &[T],
    grad_extrinsic: Option<&[T]>,
) -> Result<SisoGradient<T>> {
    if !ws.is_taped() {
        return Err(Error::Contract(
            "siso backward requires a forward pass with tape recording".into(),
        ));
    }
    let (k, m, ns) = (ws.k, ws.m, ws.num_states);
    if trellis.num_states() != ns || trellis.memory() != m {
        return Err(Error::Contract(
            "workspace was recorded with a different trellis".into(),
        ));
    }
    check_len("posterior gradient", k, grad_posterior.len())?;
    if let Some(ge) = grad_extrinsic {
        check_len("extrinsic gradient", k, ge.len())?;
    }
    let exact = ws.algorithm.exact();
    let steps = k + m;
    let zero = T::zero();

    let mut g_alpha = vec![zero; (steps + 1) * ns];
    let mut g_beta = vec![zero; (steps + 1) * ns];
    let mut g_gamma = vec![zero; steps * 4];
    let mut grad = SisoGradient {
        sys: vec![zero; k],
        par: vec![zero; k],
        prior: vec![zero; k],
        tail_sys: vec![zero; m],
        tail_par: vec![zero; m],
    };

    // posterior = lse(S1) - lse(S0)   [extrinsic = posterior - sys - prior]
    let mut z = vec![zero; 2 * ns];
    let mut w = vec![zero; 2 * ns];
    for t in 0..k {
        let mut gl = grad_posterior[t];
        if let Some(ge) = grad_extrinsic {
            gl += ge[t];
            grad.sys[t] -= ge[t];
            grad.prior[t] -= ge[t];
        }
        if gl == zero {
            continue;
        }
        let g = &ws.gamma[4 * t..4 * t + 4];
        let a = ws.alpha(t);
        let b = ws.beta(t + 1);
        for u in 0..2u8 {
            for s in 0..ns {
                let p = trellis.parity_out(s, u) as usize;
                z[s] = a[s] + g[2 * u as usize + p] + b[trellis.next_state(s, u)];
            }
            reduce_weights(&z[..ns], exact, &mut w[..ns]);
            let sign = if u == 1 { gl } else { -gl };
            for s in 0..ns {
                let gz = sign * w[s];
                if gz == zero {
                    continue;
                }
                let p = trellis.parity_out(s, u) as usize;
                g_alpha[t * ns + s] += gz;
                g_gamma[4 * t + 2 * u as usize + p] += gz;
                g_beta[(t + 1) * ns + trellis.next_state(s, u)] += gz;
            }
        }
    }

    // beta_t(s) = reduce_u (beta_{t+1}(next(s, u)) + gamma_t(s, u)); adjoint runs forward in t
    let mut pair = [zero; 2];
    let mut pw = [zero; 2];
    for t in 0..steps {
        let g = &ws.gamma[4 * t..4 * t + 4];
        for s in 0..ns {
            let up = g_beta[t * ns + s];
            if up == zero {
                continue;
            }
            let next = ws.beta(t + 1);
            for u in 0..2u8 {
                pair[u as usize] = if edge_valid(trellis, k, t, s, u) {
                    let p = trellis.parity_out(s, u) as usize;
                    next[trellis.next_state(s, u)] + g[2 * u as usize + p]
                } else {
                    T::neg_infinity()
                };
            }
            reduce_weights(&pair, exact, &mut pw);
            for u in 0..2u8 {
                let gz = up * pw[u as usize];
                if gz == zero {
                    continue;
                }
                let p = trellis.parity_out(s, u) as usize;
                g_beta[(t + 1) * ns + trellis.next_state(s, u)] += gz;
                g_gamma[4 * t + 2 * u as usize + p] += gz;
            }
        }
    }

    // alpha_{t+1}(s) = reduce over predecessors; adjoint runs backward in t
    for t in (0..steps).rev() {
        let g = &ws.gamma[4 * t..4 * t + 4];
        let prev = ws.alpha(t);
        for s in 0..ns {
            let up = g_alpha[(t + 1) * ns + s];
            if up == zero {
                continue;
            }
            let preds = trellis.prev_transitions(s);
            for (slot, &(sp, u)) in preds.iter().enumerate() {
                pair[slot] = if edge_valid(trellis, k, t, sp, u) {
                    let p = trellis.parity_out(sp, u) as usize;
                    prev[sp] + g[2 * u as usize + p]
                } else {
                    T::neg_infinity()
                };
            }
            reduce_weights(&pair, exact, &mut pw);
            for (slot, &(sp, u)) in preds.iter().enumerate() {
                let gz = up * pw[slot];
                if gz == zero {
                    continue;
                }
                let p = trellis.parity_out(sp, u) as usize;
                g_alpha[t * ns + sp] += gz;
                g_gamma[4 * t + 2 * u as usize + p] += gz;
            }
        }
    }

    // gamma = [-a - b, -a + b, a - b, a + b] with a = (sys + prior) / 2, b = par / 2
    let h = T::half();
    for t in 0..steps {
        let gg = &g_gamma[4 * t..4 * t + 4];
        let ga = h * (gg[2] + gg[3] - gg[0] - gg[1]);
        let gb = h * (gg[1] + gg[3] - gg[0] - gg[2]);
        if t < k {
            grad.sys[t] += ga;
            grad.prior[t] += ga;
            grad.par[t] += gb;
        } else {
            grad.tail_sys[t - k] += ga;
            grad.tail_par[t - k] += gb;
        }
    }
    Ok(grad)
}
