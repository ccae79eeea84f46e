//! Recursive systematic convolutional (RSC) constituent codes and their trellises.
//!
//! Polynomials are bitmasks: bit `i` is the coefficient of `D^i`. The encoder
//! register holds the last `m` feedback bits; bit `i - 1` of the state integer is
//! the feedback bit from `i` steps ago.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator description `(1, g1(D) / g2(D))` of an RSC code with memory `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RscSpec {
    pub memory: u32,
    /// Feedforward polynomial `g1(D)`.
    pub feedforward: u32,
    /// Feedback polynomial `g2(D)`; its constant term must be set.
    pub feedback: u32,
}

impl RscSpec {
    /// LTE constituent code: `g1 = 1 + D^2 + D^3`, `g2 = 1 + D + D^3`.
    pub const LTE: RscSpec = RscSpec {
        memory: 3,
        feedforward: 0b1101,
        feedback: 0b1011,
    };

    /// Turbo-757 constituent code: `g1 = 1 + D^2`, `g2 = 1 + D + D^2`.
    pub const TURBO_757: RscSpec = RscSpec {
        memory: 2,
        feedforward: 0b101,
        feedback: 0b111,
    };

    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || self.memory > 16 {
            return Err(Error::Config(format!(
                "RSC memory must be in 1..=16, got {}",
                self.memory
            )));
        }
        let limit = 1u32 << (self.memory + 1);
        if self.feedforward >= limit || self.feedback >= limit {
            return Err(Error::Config(format!(
                "polynomial degree exceeds memory {} (g1 = {:#b}, g2 = {:#b})",
                self.memory, self.feedforward, self.feedback
            )));
        }
        if self.feedback & 1 == 0 {
            return Err(Error::Config(format!(
                "feedback polynomial {:#b} has no constant term",
                self.feedback
            )));
        }
        Ok(())
    }
}

/// Dense transition tables of an RSC trellis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trellis {
    spec: RscSpec,
    num_states: usize,
    next_state: Vec<[usize; 2]>,
    parity_out: Vec<[u8; 2]>,
    prev_transitions: Vec<[(usize, u8); 2]>,
    termination_input: Vec<u8>,
}

#[inline]
fn parity(x: u32) -> u8 {
    (x.count_ones() & 1) as u8
}

/// Builds the trellis tables for `spec`.
pub fn build_trellis(spec: RscSpec) -> Result<Trellis> {
    spec.validate()?;
    let m = spec.memory;
    let num_states = 1usize << m;
    let mask = (num_states - 1) as u32;
    // taps on the register only (constant term excluded)
    let fb_taps = spec.feedback >> 1;
    let ff_taps = spec.feedforward >> 1;
    let ff_now = spec.feedforward & 1;

    let mut next_state = Vec::with_capacity(num_states);
    let mut parity_out = Vec::with_capacity(num_states);
    let mut termination_input = Vec::with_capacity(num_states);
    for s in 0..num_states as u32 {
        let mut nexts = [0usize; 2];
        let mut pars = [0u8; 2];
        for u in 0..2u32 {
            let a = (u as u8) ^ parity(fb_taps & s);
            let p = (a & ff_now as u8) ^ parity(ff_taps & s);
            nexts[u as usize] = (((s << 1) | a as u32) & mask) as usize;
            pars[u as usize] = p;
        }
        next_state.push(nexts);
        parity_out.push(pars);
        // choosing u equal to the register feedback makes the shifted-in bit zero
        termination_input.push(parity(fb_taps & s));
    }

    let mut incoming: Vec<Vec<(usize, u8)>> = vec![Vec::with_capacity(2); num_states];
    for (s, nexts) in next_state.iter().enumerate() {
        for (u, &ns) in nexts.iter().enumerate() {
            incoming[ns].push((s, u as u8));
        }
    }
    let prev_transitions = incoming
        .into_iter()
        .map(|v| {
            debug_assert_eq!(v.len(), 2);
            [v[0], v[1]]
        })
        .collect();

    Ok(Trellis {
        spec,
        num_states,
        next_state,
        parity_out,
        prev_transitions,
        termination_input,
    })
}

/// Trellis of the LTE constituent code (8 states).
pub fn lte_trellis() -> Trellis {
    build_trellis(RscSpec::LTE).expect("LTE polynomials are valid")
}

/// Trellis of the Turbo-757 constituent code (4 states).
pub fn turbo757_trellis() -> Trellis {
    build_trellis(RscSpec::TURBO_757).expect("757 polynomials are valid")
}

impl Trellis {
    pub fn spec(&self) -> RscSpec {
        self.spec
    }

    pub fn memory(&self) -> usize {
        self.spec.memory as usize
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn next_state(&self, state: usize, input: u8) -> usize {
        self.next_state[state][input as usize]
    }

    #[inline]
    pub fn parity_out(&self, state: usize, input: u8) -> u8 {
        self.parity_out[state][input as usize]
    }

    /// The two `(predecessor, input)` pairs that lead into `state`.
    #[inline]
    pub fn prev_transitions(&self, state: usize) -> &[(usize, u8); 2] {
        &self.prev_transitions[state]
    }

    /// Input bit that shifts a zero into the register from `state`.
    #[inline]
    pub fn termination_input(&self, state: usize) -> u8 {
        self.termination_input[state]
    }

    /// Runs the encoder over `bits` from the zero state, then terminates it.
    ///
    /// Returns `(parity, tail_systematic, tail_parity, final_state)`; the final
    /// state is always 0 and is returned so callers can assert it.
    pub fn encode_terminated(&self, bits: &[u8]) -> (Vec<u8>, Vec<u8>, Vec<u8>, usize) {
        let mut state = 0usize;
        let mut par = Vec::with_capacity(bits.len());
        for &u in bits {
            par.push(self.parity_out(state, u));
            state = self.next_state(state, u);
        }
        let m = self.memory();
        let mut tail_sys = Vec::with_capacity(m);
        let mut tail_par = Vec::with_capacity(m);
        for _ in 0..m {
            let u = self.termination_input(state);
            tail_sys.push(u);
            tail_par.push(self.parity_out(state, u));
            state = self.next_state(state, u);
        }
        (par, tail_sys, tail_par, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Shift-register simulator written against coefficient lists, independent
    /// of the bitmask arithmetic above. `reg[0]` is the most recent feedback bit.
    fn step_by_hand(g1: &[u8], g2: &[u8], reg: &[u8], u: u8) -> (Vec<u8>, u8) {
        let m = reg.len();
        let mut a = u;
        for i in 1..=m {
            a ^= g2[i] & reg[i - 1];
        }
        let mut p = g1[0] & a;
        for i in 1..=m {
            p ^= g1[i] & reg[i - 1];
        }
        let mut next = vec![a];
        next.extend_from_slice(&reg[..m - 1]);
        (next, p)
    }

    fn reg_of(state: usize, m: usize) -> Vec<u8> {
        (0..m).map(|i| ((state >> i) & 1) as u8).collect()
    }

    fn state_of(reg: &[u8]) -> usize {
        reg.iter()
            .enumerate()
            .map(|(i, &b)| (b as usize) << i)
            .sum()
    }

    #[test]
    fn lte_tables_match_hand_stepped_register() {
        let t = lte_trellis();
        assert_eq!(t.num_states(), 8);
        let g1 = [1, 0, 1, 1];
        let g2 = [1, 1, 0, 1];
        for s in 0..8 {
            for u in 0..2u8 {
                let (next, p) = step_by_hand(&g1, &g2, &reg_of(s, 3), u);
                assert_eq!(t.next_state(s, u), state_of(&next), "state {s} input {u}");
                assert_eq!(t.parity_out(s, u), p, "state {s} input {u}");
            }
        }
    }

    #[test]
    fn turbo757_tables_match_hand_stepped_register() {
        let t = turbo757_trellis();
        assert_eq!(t.num_states(), 4);
        let g1 = [1, 0, 1];
        let g2 = [1, 1, 1];
        for s in 0..4 {
            for u in 0..2u8 {
                let (next, p) = step_by_hand(&g1, &g2, &reg_of(s, 2), u);
                assert_eq!(t.next_state(s, u), state_of(&next));
                assert_eq!(t.parity_out(s, u), p);
            }
        }
    }

    #[test]
    fn zero_state_absorbs_zero_input() {
        for t in [lte_trellis(), turbo757_trellis()] {
            assert_eq!(t.next_state(0, 0), 0);
            assert_eq!(t.parity_out(0, 0), 0);
        }
    }

    #[test]
    fn termination_reaches_zero_from_every_state() {
        for t in [lte_trellis(), turbo757_trellis()] {
            for start in 0..t.num_states() {
                let mut s = start;
                for _ in 0..t.memory() {
                    s = t.next_state(s, t.termination_input(s));
                }
                assert_eq!(s, 0, "start state {start}");
            }
        }
    }

    #[test]
    fn transitions_are_bijective_and_inverse_consistent() {
        for spec in [
            RscSpec::LTE,
            RscSpec::TURBO_757,
            RscSpec {
                memory: 4,
                feedforward: 0b10001,
                feedback: 0b10011,
            },
        ] {
            let t = build_trellis(spec).unwrap();
            let n = t.num_states();
            for u in 0..2u8 {
                let mut seen = vec![false; n];
                for s in 0..n {
                    let ns = t.next_state(s, u);
                    assert!(ns < n);
                    assert!(!seen[ns], "input {u} not a bijection");
                    seen[ns] = true;
                }
            }
            for s in 0..n {
                for &(p, u) in t.prev_transitions(s) {
                    assert_eq!(t.next_state(p, u), s);
                }
                let [(p0, u0), (p1, u1)] = *t.prev_transitions(s);
                assert_ne!((p0, u0), (p1, u1));
            }
        }
    }

    #[test]
    fn rejects_invalid_polynomials() {
        let no_const = RscSpec {
            memory: 3,
            feedforward: 0b1101,
            feedback: 0b1010,
        };
        assert!(matches!(build_trellis(no_const), Err(Error::Config(_))));
        let too_long = RscSpec {
            memory: 2,
            feedforward: 0b1101,
            feedback: 0b111,
        };
        assert!(matches!(build_trellis(too_long), Err(Error::Config(_))));
        let zero_mem = RscSpec {
            memory: 0,
            feedforward: 1,
            feedback: 1,
        };
        assert!(build_trellis(zero_mem).is_err());
    }
}
