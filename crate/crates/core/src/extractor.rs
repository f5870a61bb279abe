//! Fibonacci LFSR generation and whitening, and Berlekamp–Massey linear complexity.
//!
//! Register positions run `1..=d`; position 1 holds the newest bit. Each step
//! computes the XOR of the tapped positions (plus the input bit when
//! whitening), shifts every bit one position up and stores the feedback bit at
//! position 1, so the output obeys `s_n = Σ_{t ∈ taps} s_{n-t}`.

use serde::{Deserialize, Serialize};

use crate::bits::BitStream;
use crate::error::{Error, Result};

/// Maximal-length tap sets (XOR form) by degree.
const MAXIMAL_TAPS: &[(u32, &[u32])] = &[
    (2, &[2, 1]),
    (3, &[3, 2]),
    (4, &[4, 3]),
    (5, &[5, 3]),
    (6, &[6, 5]),
    (7, &[7, 6]),
    (8, &[8, 6, 5, 4]),
    (9, &[9, 5]),
    (10, &[10, 7]),
    (11, &[11, 9]),
    (12, &[12, 6, 4, 1]),
    (13, &[13, 4, 3, 1]),
    (14, &[14, 5, 3, 1]),
    (15, &[15, 14]),
    (16, &[16, 15, 13, 4]),
    (17, &[17, 14]),
    (18, &[18, 11]),
    (19, &[19, 6, 2, 1]),
    (20, &[20, 17]),
    (21, &[21, 19]),
    (22, &[22, 21]),
    (23, &[23, 18]),
    (24, &[24, 23, 22, 17]),
    (32, &[32, 22, 2, 1]),
    (64, &[64, 63, 61, 60]),
    (128, &[128, 126, 101, 99]),
];

/// Tabulated maximal-length taps for `degree`, if known.
pub fn maximal_taps(degree: u32) -> Option<Vec<u32>> {
    MAXIMAL_TAPS
        .iter()
        .find(|(d, _)| *d == degree)
        .map(|(_, t)| t.to_vec())
}

mod hex_u128 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let text = String::deserialize(d)?;
        let digits = text
            .strip_prefix("0x")
            .or_else(|| text.strip_prefix("0X"))
            .ok_or_else(|| D::Error::custom("initial_state must be a 0x-prefixed hex string"))?;
        u128::from_str_radix(digits, 16).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LfsrConfig {
    pub degree: u32,
    pub taps: Vec<u32>,
    #[serde(with = "hex_u128")]
    pub initial_state: u128,
}

impl Default for LfsrConfig {
    fn default() -> Self {
        Self::maximal(64).expect("degree 64 is tabulated")
    }
}

fn degree_mask(degree: u32) -> u128 {
    if degree >= 128 {
        u128::MAX
    } else {
        (1u128 << degree) - 1
    }
}

impl LfsrConfig {
    /// Tabulated maximal-length taps with an all-ones initial state.
    pub fn maximal(degree: u32) -> Result<Self> {
        let taps = maximal_taps(degree).ok_or_else(|| {
            Error::InvalidConfig(format!("no tabulated maximal-length taps for degree {degree}"))
        })?;
        Ok(Self {
            degree,
            taps,
            initial_state: degree_mask(degree),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=128).contains(&self.degree) {
            return Err(Error::InvalidConfig(format!(
                "LFSR degree must lie in [2, 128], got {}",
                self.degree
            )));
        }
        if self.taps.is_empty() {
            return Err(Error::InvalidConfig("LFSR taps must be non-empty".into()));
        }
        if let Some(t) = self.taps.iter().find(|&&t| t < 1 || t > self.degree) {
            return Err(Error::InvalidConfig(format!(
                "tap {t} outside [1, {}]",
                self.degree
            )));
        }
        if self.taps.iter().max() != Some(&self.degree) {
            return Err(Error::InvalidConfig("largest tap must equal the degree".into()));
        }
        let mut sorted = self.taps.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.taps.len() {
            return Err(Error::InvalidConfig("duplicate LFSR taps".into()));
        }
        if self.initial_state == 0 {
            return Err(Error::InvalidConfig("LFSR initial state must be non-zero".into()));
        }
        if self.initial_state & !degree_mask(self.degree) != 0 {
            return Err(Error::InvalidConfig(format!(
                "initial state wider than {} bits",
                self.degree
            )));
        }
        Ok(())
    }
}

/// Register state: bit `p - 1` holds position `p`.
#[derive(Debug, Clone)]
pub struct Lfsr {
    state: u128,
    taps: u128,
    mask: u128,
}

impl Lfsr {
    pub fn new(cfg: &LfsrConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            state: cfg.initial_state,
            taps: cfg.taps.iter().fold(0u128, |m, &t| m | 1u128 << (t - 1)),
            mask: degree_mask(cfg.degree),
        })
    }

    /// One step with `input` XORed into the feedback; returns the new position-1 bit.
    #[inline]
    pub fn step(&mut self, input: bool) -> bool {
        let fb = ((self.state & self.taps).count_ones() & 1 == 1) ^ input;
        self.state = ((self.state << 1) | fb as u128) & self.mask;
        fb
    }

    pub fn state(&self) -> u128 {
        self.state
    }
}

/// `n` free-running feedback bits.
pub fn lfsr_generate(cfg: &LfsrConfig, n: usize) -> Result<BitStream> {
    let mut reg = Lfsr::new(cfg)?;
    let mut out = BitStream::with_capacity(n, format!("lfsr{}", cfg.degree));
    for _ in 0..n {
        out.push(reg.step(false));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Whitened {
    pub bits: BitStream,
    pub keep_bits: usize,
    pub block_bits: usize,
    pub blocks: usize,
    /// Trailing input bits that did not fill a block.
    pub discarded_bits: usize,
}

/// Steps the register once per input bit with the bit XORed into the
/// feedback, and after each `block_bits` inputs emits the `keep_bits`
/// lowest-position state bits, oldest first.
pub fn lfsr_whiten(
    raw: &BitStream,
    cfg: &LfsrConfig,
    keep_bits: usize,
    block_bits: usize,
) -> Result<Whitened> {
    if keep_bits == 0 {
        return Err(Error::ZeroEntropy);
    }
    if block_bits == 0 || keep_bits > block_bits {
        return Err(Error::InvalidArgument(format!(
            "need 0 < keep_bits ≤ block_bits, got keep {keep_bits}, block {block_bits}"
        )));
    }
    if keep_bits > cfg.degree as usize {
        return Err(Error::InvalidArgument(format!(
            "keep_bits {keep_bits} exceeds LFSR degree {}",
            cfg.degree
        )));
    }
    if raw.len() < block_bits {
        return Err(Error::InsufficientData {
            what: "whitening input bits",
            needed: block_bits,
            got: raw.len(),
        });
    }
    let mut reg = Lfsr::new(cfg)?;
    let blocks = raw.len() / block_bits;
    let mut out = BitStream::with_capacity(blocks * keep_bits, format!("whitened({})", raw.source));
    let mut input = raw.iter();
    for _ in 0..blocks {
        for bit in input.by_ref().take(block_bits) {
            reg.step(bit);
        }
        let state = reg.state();
        for p in (0..keep_bits).rev() {
            out.push((state >> p) & 1 == 1);
        }
    }
    Ok(Whitened {
        bits: out,
        keep_bits,
        block_bits,
        blocks,
        discarded_bits: raw.len() - blocks * block_bits,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BmResult {
    pub linear_complexity: usize,
    /// `c_1..c_L` of `s_n = Σ c_j s_{n-j}`.
    pub connection_polynomial: Vec<bool>,
}

impl BmResult {
    /// Runs the recurrence from `seed` (the first `L` bits) out to `n` bits.
    pub fn regenerate(&self, seed: &[bool], n: usize) -> Vec<bool> {
        let l = self.linear_complexity;
        let mut s: Vec<bool> = seed.iter().take(l).copied().collect();
        while s.len() < n {
            let k = s.len();
            let bit = (1..=l).fold(false, |acc, j| acc ^ (self.connection_polynomial[j - 1] & s[k - j]));
            s.push(bit);
        }
        s.truncate(n);
        s
    }
}

/// Little-endian packed bit vector.
#[derive(Debug, Clone)]
struct Words(Vec<u64>);

impl Words {
    fn zeros(bits: usize) -> Self {
        Self(vec![0; bits / 64 + 2])
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        (self.0[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    /// 64 bits starting at bit `offset`.
    #[inline]
    fn window(&self, offset: usize) -> u64 {
        let (w, sh) = (offset / 64, offset % 64);
        let lo = self.0.get(w).copied().unwrap_or(0);
        if sh == 0 {
            lo
        } else {
            let hi = self.0.get(w + 1).copied().unwrap_or(0);
            (lo >> sh) | (hi << (64 - sh))
        }
    }

    /// `self ^= other << shift`, touching only words that can hold bits `< limit`.
    fn xor_shifted(&mut self, other: &Words, shift: usize, limit: usize) {
        let (ws, bs) = (shift / 64, shift % 64);
        let last = (limit / 64 + 1).min(self.0.len());
        for i in ws..last {
            let j = i - ws;
            let mut v = other.0.get(j).copied().unwrap_or(0) << bs;
            if bs != 0 && j > 0 {
                v |= other.0[j - 1] >> (64 - bs);
            }
            self.0[i] ^= v;
        }
    }
}

/// Runs BM over `bits`; calls `on_step(prefix_len, L)` after every bit.
fn bm_core(bits: &BitStream, mut on_step: impl FnMut(usize, usize)) -> BmResult {
    let n = bits.len();
    // reversed sequence: rev[j] = s[n-1-j], so s_N, s_{N-1}, … are contiguous from n-1-N
    let mut rev = Words::zeros(n);
    for (i, b) in bits.iter().enumerate() {
        if b {
            rev.set(n - 1 - i);
        }
    }
    let mut c = Words::zeros(n);
    let mut b = Words::zeros(n);
    c.set(0);
    b.set(0);
    let mut l = 0usize;
    let mut m: isize = -1;
    for big_n in 0..n {
        let offset = n - 1 - big_n;
        let mut acc = 0u64;
        for w in 0..=(l / 64) {
            let mut cw = c.0[w];
            if w == l / 64 {
                let keep = l % 64 + 1;
                if keep < 64 {
                    cw &= (1u64 << keep) - 1;
                }
            }
            acc ^= cw & rev.window(offset + 64 * w);
        }
        if acc.count_ones() & 1 == 1 {
            let shift = (big_n as isize - m) as usize;
            if 2 * l <= big_n {
                let t = c.clone();
                c.xor_shifted(&b, shift, n);
                l = big_n + 1 - l;
                m = big_n as isize;
                b = t;
            } else {
                c.xor_shifted(&b, shift, n);
            }
        }
        on_step(big_n + 1, l);
    }
    BmResult {
        linear_complexity: l,
        connection_polynomial: (1..=l).map(|j| c.get(j)).collect(),
    }
}

/// Shortest LFSR generating `bits`.
pub fn berlekamp_massey(bits: &BitStream) -> BmResult {
    bm_core(bits, |_, _| {})
}

/// `(prefix_length, L)` at prefix lengths `step, 2·step, …` and at the full length.
pub fn linear_complexity_profile(bits: &BitStream, step: usize) -> Result<Vec<(usize, usize)>> {
    if step < 1 {
        return Err(Error::InvalidArgument("profile step must be ≥ 1".into()));
    }
    let n = bits.len();
    let mut profile = Vec::with_capacity(n / step + 1);
    bm_core(bits, |len, l| {
        if len % step == 0 || len == n {
            profile.push((len, l));
        }
    });
    Ok(profile)
}
