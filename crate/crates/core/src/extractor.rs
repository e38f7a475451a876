//! Toeplitz-matrix hashing over GF(2).
//!
//! For input length `n`, output length `m` and a seed `s` of `n + m - 1`
//! bits, the matrix entries are `T[i][j] = s[i - j + n - 1]`: the first
//! column reads `s[n-1..n+m-1]` top to bottom and the first row reads
//! `s[0..n]` right to left. Output bit `i` is `Σ_j T[i][j]·x_j`, which is
//! coefficient `n - 1 + i` of the polynomial product `S(z)·X(z)`.
//!
//! The input is cut into blocks of `L` bits. Block `[b, b + L)` only touches
//! the seed window `s[n-b-L .. n-b+m-1)`, so each block is one carry-less
//! polynomial multiply; block results are XORed together.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::BitStream;
use crate::bounds::certified_output_length;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gf2::{bit_window, mul};
use crate::rng::{StreamKey, DOMAIN_EXTRACTOR};

const MIN_BLOCK_BITS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub seed: BitStream,
}

impl ToeplitzSpec {
    pub fn new(n_in: usize, n_out: usize, seed: BitStream) -> Result<Self> {
        let spec = ToeplitzSpec { n_in, n_out, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Required seed length `n_in + n_out - 1`.
    pub fn seed_len(n_in: usize, n_out: usize) -> Result<usize> {
        if n_in == 0 {
            return Err(Error::invalid("Toeplitz input length must be at least 1"));
        }
        if n_out > n_in {
            return Err(Error::invalid(format!(
                "output length {n_out} exceeds input length {n_in}"
            )));
        }
        Ok(n_in + n_out - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let need = Self::seed_len(self.n_in, self.n_out)?;
        if self.seed.len() != need {
            return Err(Error::invalid(format!(
                "seed has {} bits, {need} required",
                self.seed.len()
            )));
        }
        Ok(())
    }

    /// Matrix entry `T[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> bool {
        self.seed.get(i + self.n_in - 1 - j)
    }
}

/// Output length and seed requirement for a given min-entropy budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionPlan {
    pub n_in: usize,
    pub n_out: usize,
    pub seed_bits: usize,
    pub total_min_entropy: f64,
    pub epsilon_h: f64,
}

impl ExtractionPlan {
    pub fn with_seed(&self, seed: BitStream) -> Result<ToeplitzSpec> {
        ToeplitzSpec::new(self.n_in, self.n_out, seed)
    }
}

/// `n_out` from the leftover hash lemma, capped at `n_in`.
pub fn plan(n_in: usize, total_min_entropy: f64, epsilon_h: f64) -> Result<ExtractionPlan> {
    let m = certified_output_length(total_min_entropy, epsilon_h)?;
    let n_out = (m.min(n_in as u64)) as usize;
    Ok(ExtractionPlan {
        n_in,
        n_out,
        seed_bits: ToeplitzSpec::seed_len(n_in, n_out)?,
        total_min_entropy,
        epsilon_h,
    })
}

/// Deterministic seed derived from a label, for tests and reproducible
/// demonstrations. Not a substitute for an independent seed source.
pub fn fixture_seed(label: &[u8], len: usize) -> BitStream {
    let mut rng = StreamKey::derive(label, DOMAIN_EXTRACTOR).stream(0);
    let mut bytes = vec![0u8; len.div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    if !len.is_multiple_of(8) {
        if let Some(last) = bytes.last_mut() {
            *last &= 0xffu8 << (8 - len % 8);
        }
    }
    BitStream::from_bytes(bytes, len).expect("padding cleared")
}

fn block_bits(n_out: usize) -> usize {
    n_out.next_multiple_of(64).max(MIN_BLOCK_BITS)
}

/// `T·x` over GF(2). Bit-identical for every execution mode.
pub fn extract(input: &BitStream, spec: &ToeplitzSpec, exec: Execution) -> Result<BitStream> {
    spec.validate()?;
    if input.len() != spec.n_in {
        return Err(Error::invalid(format!(
            "input has {} bits but the extractor expects {}",
            input.len(),
            spec.n_in
        )));
    }
    let (n, m) = (spec.n_in, spec.n_out);
    if m == 0 {
        return Ok(BitStream::zeros(0));
    }
    let x = input.to_words();
    let s = spec.seed.to_words();
    let l = block_bits(m);
    let blocks = n.div_ceil(l);
    let out_words = m.div_ceil(64);
    let y = exec.map_reduce(
        blocks,
        || vec![0u64; out_words],
        |b| {
            let b0 = b * l;
            let lb = l.min(n - b0);
            let window = bit_window(&s, n - b0 - lb, m + lb - 1);
            let xb = bit_window(&x, b0, lb);
            bit_window(&mul(&window, &xb), lb - 1, m)
        },
        |mut acc, part| {
            for (a, p) in acc.iter_mut().zip(&part) {
                *a ^= p;
            }
            acc
        },
    );
    Ok(BitStream::from_words(&y, m))
}
