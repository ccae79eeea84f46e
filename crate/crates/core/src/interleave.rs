//! Quadratic permutation polynomial (QPP) interleavers.
//!
//! Convention: interleaving reads by address, `out[i] = in[forward[i]]`, as in
//! 3GPP TS 36.212. Deinterleaving writes back through the same table.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A bijection on `0..K` with its inverse table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

/// `(K, f1, f2)` entries from 3GPP TS 36.212 Table 5.1.3-3.
const LTE_QPP_TABLE: &[(usize, u64, u64)] = &[
    (40, 3, 10),
    (48, 7, 12),
    (56, 19, 42),
    (64, 7, 16),
    (72, 7, 18),
    (80, 11, 20),
    (88, 5, 22),
    (96, 11, 24),
    (104, 7, 26),
    (112, 41, 84),
    (120, 103, 90),
    (128, 15, 32),
    (136, 9, 34),
    (144, 17, 108),
    (152, 9, 38),
    (160, 21, 120),
    (168, 101, 84),
    (176, 21, 44),
    (184, 57, 46),
    (192, 23, 48),
    (200, 13, 50),
    (208, 27, 52),
    (216, 11, 36),
    (224, 27, 56),
    (232, 85, 58),
    (240, 29, 60),
    (248, 33, 62),
    (256, 15, 32),
    (264, 17, 198),
    (272, 33, 68),
    (280, 103, 210),
    (288, 19, 36),
    (296, 19, 74),
    (304, 37, 76),
    (312, 19, 78),
    (320, 21, 120),
    (328, 21, 82),
    (336, 115, 84),
    (344, 193, 86),
    (352, 21, 44),
    (360, 133, 90),
    (368, 81, 46),
    (376, 45, 94),
    (384, 23, 48),
    (392, 243, 98),
    (400, 151, 40),
    (408, 155, 102),
    (416, 25, 52),
    (424, 51, 106),
    (432, 47, 72),
    (440, 91, 110),
    (448, 29, 168),
    (456, 29, 114),
    (464, 247, 58),
    (472, 29, 118),
    (480, 89, 180),
    (488, 91, 122),
    (496, 157, 62),
    (504, 55, 84),
    (512, 31, 64),
    (1008, 55, 84),
    (1024, 31, 64),
    (6144, 263, 480),
];

/// Blocklengths with embedded LTE interleaver parameters.
pub fn lte_supported_sizes() -> impl Iterator<Item = usize> {
    LTE_QPP_TABLE.iter().map(|&(k, _, _)| k)
}

/// Looks up the LTE `(f1, f2)` pair for blocklength `k`.
pub fn lte_qpp_params(k: usize) -> Result<(u64, u64)> {
    LTE_QPP_TABLE
        .iter()
        .find(|&&(size, _, _)| size == k)
        .map(|&(_, f1, f2)| (f1, f2))
        .ok_or_else(|| Error::UnsupportedBlockLength {
            k,
            supported: lte_supported_sizes()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        })
}

/// QPP interleaver `forward[i] = (f1 i + f2 i^2) mod K`.
pub fn qpp(k: usize, f1: u64, f2: u64) -> Result<Permutation> {
    if k == 0 {
        return Err(Error::Config("interleaver size must be at least 1".into()));
    }
    let kk = k as u128;
    let forward = (0..k as u128)
        .map(|i| ((f1 as u128 * i + (f2 as u128 % kk) * (i * i % kk)) % kk) as usize)
        .collect();
    Permutation::from_forward(forward).map_err(|_| {
        Error::Config(format!(
            "(K={k}, f1={f1}, f2={f2}) is not a valid QPP: map is not bijective"
        ))
    })
}

/// LTE interleaver for one of the embedded blocklengths.
pub fn lte_qpp(k: usize) -> Result<Permutation> {
    let (f1, f2) = lte_qpp_params(k)?;
    qpp(k, f1, f2)
}

/// How a code's interleaver is specified in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InterleaverSpec {
    Qpp { k: usize, f1: u64, f2: u64 },
    Lte { k: usize },
}

impl InterleaverSpec {
    pub fn k(&self) -> usize {
        match *self {
            InterleaverSpec::Qpp { k, .. } | InterleaverSpec::Lte { k } => k,
        }
    }

    pub fn build(&self) -> Result<Permutation> {
        match *self {
            InterleaverSpec::Qpp { k, f1, f2 } => qpp(k, f1, f2),
            InterleaverSpec::Lte { k } => lte_qpp(k),
        }
    }
}

impl Permutation {
    pub fn identity(k: usize) -> Self {
        let forward: Vec<usize> = (0..k).collect();
        Permutation {
            inverse: forward.clone(),
            forward,
        }
    }

    /// Wraps a forward table, failing if it is not a bijection on `0..len`.
    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let k = forward.len();
        let mut inverse = vec![usize::MAX; k];
        for (i, &f) in forward.iter().enumerate() {
            if f >= k || inverse[f] != usize::MAX {
                return Err(Error::Config(format!(
                    "permutation table is not a bijection (entry {i} -> {f})"
                )));
            }
            inverse[f] = i;
        }
        Ok(Permutation { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// `out[i] = seq[forward[i]]`.
    pub fn apply<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        check_len("interleaver input", self.len(), seq.len())?;
        Ok(self.forward.iter().map(|&j| seq[j]).collect())
    }

    /// Undoes [`Permutation::apply`]: `out[forward[i]] = seq[i]`.
    pub fn apply_inverse<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        check_len("deinterleaver input", self.len(), seq.len())?;
        Ok(self.inverse.iter().map(|&j| seq[j]).collect())
    }

    /// Allocation-free [`Permutation::apply`]; lengths must already agree.
    #[inline]
    pub(crate) fn apply_into<T: Copy>(&self, seq: &[T], out: &mut [T]) {
        debug_assert_eq!(seq.len(), self.len());
        for (o, &j) in out.iter_mut().zip(&self.forward) {
            *o = seq[j];
        }
    }

    #[inline]
    pub(crate) fn apply_inverse_into<T: Copy>(&self, seq: &[T], out: &mut [T]) {
        debug_assert_eq!(seq.len(), self.len());
        for (o, &j) in out.iter_mut().zip(&self.inverse) {
            *o = seq[j];
        }
    }
}
