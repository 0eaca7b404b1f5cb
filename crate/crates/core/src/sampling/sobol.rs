//! Owen-scrambled Sobol points in up to 1024 dimensions.
//!
//! Direction numbers are the Joe–Kuo "D6" set (first 1024 dimensions).
//! Scrambling uses the hash-based nested-uniform construction: the bits of
//! each coordinate are reversed, pushed through a seeded hash in which every
//! output bit depends only on lower input bits, and reversed back.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const BITS: usize = 32;
const TABLE: &str = include_str!("../../data/joe_kuo_d6_1024.txt");

/// Largest supported dimension.
pub const MAX_DIM: usize = 1024;

fn directions() -> &'static [[u32; BITS]] {
    static DIRS: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
    DIRS.get_or_init(|| {
        let mut dirs = Vec::with_capacity(MAX_DIM);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k);
        }
        dirs.push(first);
        for line in TABLE.lines().skip(1) {
            let fields: Vec<u32> = line
                .split_whitespace()
                .map(|t| t.parse().expect("malformed direction-number table"))
                .collect();
            let (s, a) = (fields[1] as usize, fields[2]);
            let m = &fields[3..3 + s];
            let mut v = [0u32; BITS];
            for k in 0..BITS {
                v[k] = if k < s {
                    m[k] << (BITS - 1 - k)
                } else {
                    let mut val = v[k - s] ^ (v[k - s] >> s);
                    for j in 1..s {
                        if (a >> (s - 1 - j)) & 1 == 1 {
                            val ^= v[k - j];
                        }
                    }
                    val
                };
            }
            dirs.push(v);
        }
        debug_assert_eq!(dirs.len(), MAX_DIM);
        dirs
    })
}

/// Raw (unscrambled) Sobol coordinate as a 32-bit fixed-point fraction, in
/// Gray-code order.
fn sobol_bits(index: u32, dim: usize) -> u32 {
    let v = &directions()[dim];
    let mut out = 0u32;
    let mut i = index ^ (index >> 1);
    let mut k = 0;
    while i != 0 {
        if i & 1 == 1 {
            out ^= v[k];
        }
        i >>= 1;
        k += 1;
    }
    out
}

fn hash(n: u32) -> u32 {
    let mut h = n ^ 0x79c6_8e4a;
    h ^= h >> 16;
    h = h.wrapping_mul(0x7feb_352d);
    h ^= h >> 15;
    h = h.wrapping_mul(0x846c_a68b);
    h ^= h >> 16;
    h
}

fn lk_scramble(mut n: u32, seed: u32) -> u32 {
    let s = hash(seed);
    n ^= n.wrapping_mul(0x3d20_adea);
    n = n.wrapping_add(s);
    n = n.wrapping_mul((s >> 16) | 1);
    n ^= n.wrapping_mul(0x0552_6c56);
    n ^= n.wrapping_mul(0x53a2_2864);
    n
}

fn owen_scramble(x: u32, dim: usize, seed: u64) -> u32 {
    let folded = (seed as u32) ^ hash((seed >> 32) as u32 ^ 0x2545_f491);
    let dim_seed = (dim as u32).wrapping_mul(0x9c8f_2d3b) ^ folded;
    lk_scramble(x.reverse_bits(), dim_seed).reverse_bits()
}

fn to_unit(bits: u32) -> f64 {
    bits as f64 / 4_294_967_296.0
}

/// `n` scrambled Sobol points in `[0, 1)^dim`, row-major.
pub fn scrambled(n: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_dim(dim)?;
    check_len(n)?;
    Ok((0..n as u32)
        .map(|i| {
            (0..dim)
                .map(|d| to_unit(owen_scramble(sobol_bits(i, d), d, seed)))
                .collect()
        })
        .collect())
}

/// Unscrambled points; exposed for tests against published values.
pub fn unscrambled(n: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    check_dim(dim)?;
    check_len(n)?;
    Ok((0..n as u32)
        .map(|i| (0..dim).map(|d| to_unit(sobol_bits(i, d))).collect())
        .collect())
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::UnsupportedDimension { dim, max: MAX_DIM });
    }
    Ok(())
}

fn check_len(n: usize) -> Result<()> {
    if n > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "at most 2^32 Sobol points supported, requested {n}"
        )));
    }
    Ok(())
}
