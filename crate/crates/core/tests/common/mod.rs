#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scatter_qrng::BitStream;

/// Shortest `L` such that some `c ∈ GF(2)^L` satisfies `s_k = Σ c_j s_{k-j}` for all `k ≥ L`,
/// found by trying every length and every coefficient vector.
pub fn brute_force_linear_complexity(s: &[bool]) -> (usize, Vec<bool>) {
    let n = s.len();
    for l in 0..=n {
        'poly: for mask in 0u64..(1u64 << l) {
            for k in l..n {
                let mut bit = false;
                for j in 1..=l {
                    if (mask >> (j - 1)) & 1 == 1 {
                        bit ^= s[k - j];
                    }
                }
                if bit != s[k] {
                    continue 'poly;
                }
            }
            return (l, (1..=l).map(|j| (mask >> (j - 1)) & 1 == 1).collect());
        }
    }
    unreachable!("L = n always works")
}

/// Textbook Berlekamp–Massey over `Vec<u8>`.
pub fn naive_berlekamp_massey(s: &[bool]) -> usize {
    let n = s.len();
    let mut c = vec![0u8; n + 1];
    let mut b = vec![0u8; n + 1];
    c[0] = 1;
    b[0] = 1;
    let (mut l, mut m) = (0usize, -1isize);
    for i in 0..n {
        let mut d = s[i] as u8;
        for j in 1..=l {
            d ^= c[j] & s[i - j] as u8;
        }
        if d == 1 {
            let t = c.clone();
            let shift = (i as isize - m) as usize;
            for j in 0..=n - shift {
                c[j + shift] ^= b[j];
            }
            if 2 * l <= i {
                l = i + 1 - l;
                m = i as isize;
                b = t;
            }
        }
    }
    l
}

pub fn bits_from_u64(x: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| (x >> i) & 1 == 1).collect()
}

pub fn fair_coin(n: usize, seed: u64) -> BitStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BitStream::from_bools((0..n).map(|_| rng.random::<bool>()), format!("coin{seed}"))
}

/// Bernoulli(`p_one`) bits.
pub fn biased_coin(n: usize, p_one: f64, seed: u64) -> BitStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BitStream::from_bools((0..n).map(|_| rng.random_bool(p_one)), format!("biased{seed}"))
}
