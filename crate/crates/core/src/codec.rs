//! Turbo encoding, puncturing and the serialized frame layout.
//!
//! Serialized stream order (before puncturing), `m` = constituent memory:
//!
//! ```text
//! s_0 p1_0 p2_0  s_1 p1_1 p2_1  ...  s_{K-1} p1_{K-1} p2_{K-1}
//! ts1_0 tp1_0 ... ts1_{m-1} tp1_{m-1}     (encoder 1 termination)
//! ts2_0 tp2_0 ... ts2_{m-1} tp2_{m-1}     (encoder 2 termination)
//! ```
//!
//! Punctured positions are dropped from the stream; tails are never punctured.
//! BPSK maps bit 0 to -1 and bit 1 to +1.

use serde::{Deserialize, Serialize};

use crate::channel::LlrFrame;
use crate::error::{check_len, Error, Result};
use crate::interleave::{InterleaverSpec, Permutation};
use crate::scalar::Real;
use crate::trellis::{build_trellis, RscSpec, Trellis};

/// Which parity bits survive transmission.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Puncture {
    /// Rate 1/3: everything is sent.
    #[default]
    None,
    /// Rate 1/2: `p1_k` for even `k`, `p2_k` for odd `k`.
    RateHalf,
    /// Periodic keep-masks over `k` for each parity stream.
    Pattern {
        parity1: Vec<bool>,
        parity2: Vec<bool>,
    },
}

impl Puncture {
    fn validate(&self) -> Result<()> {
        if let Puncture::Pattern { parity1, parity2 } = self {
            if parity1.is_empty() || parity2.is_empty() {
                return Err(Error::Config("puncture pattern must be non-empty".into()));
            }
        }
        Ok(())
    }

    #[inline]
    fn keeps(&self, stream: usize, k: usize) -> bool {
        match self {
            Puncture::None => true,
            Puncture::RateHalf => (k % 2 == 0) == (stream == 1),
            Puncture::Pattern { parity1, parity2 } => {
                let p = if stream == 1 { parity1 } else { parity2 };
                p[k % p.len()]
            }
        }
    }
}

/// Full definition of a turbo code.
#[derive(Debug, Clone)]
pub struct TurboCode {
    trellis: Trellis,
    interleaver: Permutation,
    puncture: Puncture,
    /// For every logical bit (unpunctured order), its index in the serialized stream.
    layout: Vec<Option<usize>>,
    n: usize,
}

/// Encoder output, before puncturing and symbol mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedFrame {
    pub systematic: Vec<u8>,
    pub parity1: Vec<u8>,
    pub parity2: Vec<u8>,
    pub tail_sys1: Vec<u8>,
    pub tail_par1: Vec<u8>,
    pub tail_sys2: Vec<u8>,
    pub tail_par2: Vec<u8>,
}

/// Constituent trellis choice in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrellisKind {
    Lte,
    #[serde(rename = "757")]
    Turbo757,
    Custom(RscSpec),
}

impl TrellisKind {
    pub fn spec(&self) -> RscSpec {
        match *self {
            TrellisKind::Lte => RscSpec::LTE,
            TrellisKind::Turbo757 => RscSpec::TURBO_757,
            TrellisKind::Custom(s) => s,
        }
    }
}

/// Serializable description from which a [`TurboCode`] is built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub interleaver: InterleaverSpec,
    pub trellis: TrellisKind,
    #[serde(default)]
    pub puncture: Puncture,
}

impl CodeSpec {
    /// LTE rate-1/3 code with the embedded interleaver for `k`.
    pub fn lte(k: usize) -> Self {
        CodeSpec {
            interleaver: InterleaverSpec::Lte { k },
            trellis: TrellisKind::Lte,
            puncture: Puncture::None,
        }
    }

    pub fn with_trellis(mut self, trellis: TrellisKind) -> Self {
        self.trellis = trellis;
        self
    }

    pub fn with_puncture(mut self, puncture: Puncture) -> Self {
        self.puncture = puncture;
        self
    }

    pub fn build(&self) -> Result<TurboCode> {
        TurboCode::new(
            build_trellis(self.trellis.spec())?,
            self.interleaver.build()?,
            self.puncture.clone(),
        )
    }
}

impl TurboCode {
    pub fn new(trellis: Trellis, interleaver: Permutation, puncture: Puncture) -> Result<Self> {
        if interleaver.is_empty() {
            return Err(Error::Config("blocklength must be at least 1".into()));
        }
        puncture.validate()?;
        let k = interleaver.len();
        let m = trellis.memory();
        let mut layout = Vec::with_capacity(3 * k + 4 * m);
        let mut next = 0usize;
        let mut push = |keep: bool, layout: &mut Vec<Option<usize>>| {
            if keep {
                layout.push(Some(next));
                next += 1;
            } else {
                layout.push(None);
            }
        };
        for i in 0..k {
            push(true, &mut layout);
            push(puncture.keeps(1, i), &mut layout);
            push(puncture.keeps(2, i), &mut layout);
        }
        for _ in 0..4 * m {
            push(true, &mut layout);
        }
        let n = next;
        Ok(TurboCode {
            trellis,
            interleaver,
            puncture,
            layout,
            n,
        })
    }

    /// Message length `K`.
    pub fn k(&self) -> usize {
        self.interleaver.len()
    }

    /// Transmitted length `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn memory(&self) -> usize {
        self.trellis.memory()
    }

    pub fn trellis(&self) -> &Trellis {
        &self.trellis
    }

    pub fn interleaver(&self) -> &Permutation {
        &self.interleaver
    }

    pub fn puncture(&self) -> &Puncture {
        &self.puncture
    }

    /// Logical (unpunctured) length `3K + 4m`.
    pub fn logical_len(&self) -> usize {
        self.layout.len()
    }

    /// Serialized stream index of every logical bit; `None` if punctured.
    pub fn layout(&self) -> &[Option<usize>] {
        &self.layout
    }

    pub fn encode(&self, message: &[u8]) -> Result<CodedFrame> {
        check_len("message", self.k(), message.len())?;
        if let Some(&b) = message.iter().find(|&&b| b > 1) {
            return Err(Error::Contract(format!("message bit out of range: {b}")));
        }
        let (parity1, tail_sys1, tail_par1, end1) = self.trellis.encode_terminated(message);
        let interleaved = self.interleaver.apply(message)?;
        let (parity2, tail_sys2, tail_par2, end2) = self.trellis.encode_terminated(&interleaved);
        debug_assert_eq!((end1, end2), (0, 0));
        Ok(CodedFrame {
            systematic: message.to_vec(),
            parity1,
            parity2,
            tail_sys1,
            tail_par1,
            tail_sys2,
            tail_par2,
        })
    }

    /// Logical bit sequence in stream order, including punctured positions.
    fn logical_bits(&self, frame: &CodedFrame) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.logical_len());
        for i in 0..self.k() {
            out.extend([frame.systematic[i], frame.parity1[i], frame.parity2[i]]);
        }
        for j in 0..self.memory() {
            out.extend([frame.tail_sys1[j], frame.tail_par1[j]]);
        }
        for j in 0..self.memory() {
            out.extend([frame.tail_sys2[j], frame.tail_par2[j]]);
        }
        out
    }

    /// Transmitted bits in stream order with punctured positions removed.
    pub fn serialize_bits(&self, frame: &CodedFrame) -> Vec<u8> {
        self.logical_bits(frame)
            .into_iter()
            .zip(&self.layout)
            .filter_map(|(b, slot)| slot.map(|_| b))
            .collect()
    }

    /// BPSK symbols (`0 -> -1`, `1 -> +1`) of the transmitted stream.
    pub fn serialize<T: Real>(&self, frame: &CodedFrame) -> Vec<T> {
        self.serialize_bits(frame).into_iter().map(bpsk).collect()
    }

    /// Reinserts zero LLRs at punctured positions and splits the stream.
    pub fn depuncture<T: Real>(&self, received: &[T]) -> Result<LlrFrame<T>> {
        check_len("received LLRs", self.n(), received.len())?;
        let k = self.k();
        let m = self.memory();
        let at = |logical: usize| self.layout[logical].map_or(T::zero(), |i| received[i]);
        let mut frame = LlrFrame::zeros(k, m);
        for i in 0..k {
            frame.sys[i] = at(3 * i);
            frame.par1[i] = at(3 * i + 1);
            frame.par2[i] = at(3 * i + 2);
        }
        let base1 = 3 * k;
        let base2 = 3 * k + 2 * m;
        for j in 0..m {
            frame.tail_sys1[j] = at(base1 + 2 * j);
            frame.tail_par1[j] = at(base1 + 2 * j + 1);
            frame.tail_sys2[j] = at(base2 + 2 * j);
            frame.tail_par2[j] = at(base2 + 2 * j + 1);
        }
        Ok(frame)
    }
}

/// `0 -> -1`, `1 -> +1`.
#[inline]
pub fn bpsk<T: Real>(bit: u8) -> T {
    if bit != 0 {
        T::one()
    } else {
        -T::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interleave::qpp;
    use crate::trellis::lte_trellis;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lte40() -> TurboCode {
        CodeSpec::lte(40).build().unwrap()
    }

    #[test]
    fn coded_lengths() {
        assert_eq!(lte40().n(), 132);
        assert_eq!(
            CodeSpec::lte(40)
                .with_puncture(Puncture::RateHalf)
                .build()
                .unwrap()
                .n(),
            92
        );
        assert_eq!(CodeSpec::lte(200).build().unwrap().n(), 612);
        assert_eq!(
            CodeSpec::lte(200)
                .with_puncture(Puncture::RateHalf)
                .build()
                .unwrap()
                .n(),
            412
        );
        assert_eq!(CodeSpec::lte(1008).build().unwrap().n(), 3036);
        let c757 = CodeSpec::lte(40)
            .with_trellis(TrellisKind::Turbo757)
            .build()
            .unwrap();
        assert_eq!(c757.n(), 3 * 40 + 8);
    }

    #[test]
    fn all_zero_message_gives_all_zero_codeword() {
        let code = lte40();
        let frame = code.encode(&[0; 40]).unwrap();
        let bits = code.serialize_bits(&frame);
        assert_eq!(bits.len(), 132);
        assert!(bits.iter().all(|&b| b == 0));
    }

    #[test]
    fn impulse_response_of_lte_rsc() {
        // hand-stepped 1/(1+D+D^3) feedback sequence a = 1,1,1,0,1,0,0,1
        // parity = a_k + a_{k-2} + a_{k-3}
        let code = lte40();
        let mut msg = [0u8; 40];
        msg[0] = 1;
        let frame = code.encode(&msg).unwrap();
        assert_eq!(&frame.parity1[..8], &[1, 1, 0, 0, 1, 1, 1, 0]);
    }

    #[test]
    fn random_messages_terminate_both_encoders() {
        let code = lte40();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let msg: Vec<u8> = (0..40).map(|_| rng.random_range(0..2)).collect();
            let t = code.trellis();
            let (_, _, _, end1) = t.encode_terminated(&msg);
            let (_, _, _, end2) = t.encode_terminated(&code.interleaver().apply(&msg).unwrap());
            assert_eq!((end1, end2), (0, 0));
            code.encode(&msg).unwrap();
        }
    }

    #[test]
    fn rate_half_puncture_zeroes_dropped_parity() {
        let code =
            TurboCode::new(lte_trellis(), qpp(4, 1, 2).unwrap(), Puncture::RateHalf).unwrap();
        assert_eq!(code.n(), 2 * 4 + 12);
        let received: Vec<f64> = (1..=code.n()).map(|v| v as f64).collect();
        let f = code.depuncture(&received).unwrap();
        assert_eq!(f.par1[1], 0.0);
        assert_eq!(f.par1[3], 0.0);
        assert_eq!(f.par2[0], 0.0);
        assert_eq!(f.par2[2], 0.0);
        assert!(f.par1[0] != 0.0 && f.par2[1] != 0.0);
        assert!(f.sys.iter().all(|&v| v != 0.0));
    }

    #[test]
    fn unpunctured_depuncture_is_a_reshape() {
        let code = lte40();
        let received: Vec<f64> = (0..132).map(|v| v as f64).collect();
        let f = code.depuncture(&received).unwrap();
        assert_eq!(f.sys[2], 6.0);
        assert_eq!(f.par1[2], 7.0);
        assert_eq!(f.par2[2], 8.0);
        assert_eq!(f.tail_sys1, vec![120.0, 122.0, 124.0]);
        assert_eq!(f.tail_par1, vec![121.0, 123.0, 125.0]);
        assert_eq!(f.tail_sys2, vec![126.0, 128.0, 130.0]);
        assert_eq!(f.tail_par2, vec![127.0, 129.0, 131.0]);
        assert!(code.depuncture(&received[..131]).is_err());
    }

    #[test]
    fn length_and_range_errors() {
        let code = lte40();
        assert!(matches!(code.encode(&[0; 39]), Err(Error::Length { .. })));
        let mut bad = [0u8; 40];
        bad[3] = 2;
        assert!(matches!(code.encode(&bad), Err(Error::Contract(_))));
        let empty_pattern = Puncture::Pattern {
            parity1: vec![],
            parity2: vec![true],
        };
        assert!(TurboCode::new(lte_trellis(), qpp(40, 3, 10).unwrap(), empty_pattern).is_err());
    }

    fn xor(a: &[u8], b: &[u8]) -> Vec<u8> {
        a.iter().zip(b).map(|(x, y)| x ^ y).collect()
    }

    proptest! {
        #[test]
        fn encoding_is_linear(a in proptest::collection::vec(0u8..2, 40), b in proptest::collection::vec(0u8..2, 40)) {
            let code = lte40();
            let sum = xor(&a, &b);
            let ea = code.serialize_bits(&code.encode(&a).unwrap());
            let eb = code.serialize_bits(&code.encode(&b).unwrap());
            let es = code.serialize_bits(&code.encode(&sum).unwrap());
            prop_assert_eq!(xor(&ea, &eb), es);
        }

        #[test]
        fn depuncture_preserves_surviving_values(vals in proptest::collection::vec(-50.0f64..50.0, 92), half in any::<bool>()) {
            let p = if half { Puncture::RateHalf } else { Puncture::None };
            let code = CodeSpec::lte(40).with_puncture(p).build().unwrap();
            let received = &vals[..code.n().min(92)];
            let mut padded = received.to_vec();
            padded.resize(code.n(), 1.5);
            let f = code.depuncture(&padded).unwrap();
            let mut logical = Vec::new();
            for i in 0..40 {
                logical.extend([f.sys[i], f.par1[i], f.par2[i]]);
            }
            for j in 0..3 { logical.extend([f.tail_sys1[j], f.tail_par1[j]]); }
            for j in 0..3 { logical.extend([f.tail_sys2[j], f.tail_par2[j]]); }
            for (l, slot) in code.layout().iter().enumerate() {
                match slot {
                    Some(i) => prop_assert_eq!(logical[l].to_bits(), padded[*i].to_bits()),
                    None => prop_assert_eq!(logical[l], 0.0),
                }
            }
        }
    }
}
