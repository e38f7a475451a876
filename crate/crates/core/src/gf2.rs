//! Polynomial arithmetic over GF(2) on little-endian `u64` words: bit `k` of
//! word `w` is the coefficient of `z^(64w + k)`.
//!
//! Multiplication is Karatsuba over a schoolbook base case built on a 64x64
//! carry-less multiply. On x86-64 the base case uses `PCLMULQDQ` when the
//! CPU supports it, otherwise a 4-bit windowed software multiply.

const SCHOOLBOOK_WORDS: usize = 32;

/// Carry-less product of two 64-bit polynomials as `(low, high)` words.
pub fn clmul64(a: u64, b: u64) -> (u64, u64) {
    #[cfg(target_arch = "x86_64")]
    if has_pclmul() {
        // SAFETY: the CPU supports the instructions used.
        return unsafe { x86::clmul(a, b) };
    }
    clmul64_soft(a, b)
}

/// Portable carry-less multiply.
pub fn clmul64_soft(a: u64, b: u64) -> (u64, u64) {
    let mut table = [0u128; 16];
    let a = a as u128;
    for k in 1..16 {
        table[k] = if k & 1 == 1 {
            table[k - 1] ^ a
        } else {
            table[k >> 1] << 1
        };
    }
    let mut acc = 0u128;
    for nib in (0..16).rev() {
        acc = (acc << 4) ^ table[(b >> (4 * nib) & 0xf) as usize];
    }
    (acc as u64, (acc >> 64) as u64)
}

#[cfg(target_arch = "x86_64")]
fn has_pclmul() -> bool {
    std::arch::is_x86_feature_detected!("pclmulqdq")
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    #[target_feature(enable = "pclmulqdq,sse2")]
    pub unsafe fn clmul(a: u64, b: u64) -> (u64, u64) {
        let p = _mm_clmulepi64_si128(_mm_set_epi64x(0, a as i64), _mm_set_epi64x(0, b as i64), 0x00);
        (
            _mm_cvtsi128_si64(p) as u64,
            _mm_cvtsi128_si64(_mm_srli_si128::<8>(p)) as u64,
        )
    }

    /// `out ^= a * b`; `out.len() >= a.len() + b.len()`.
    #[target_feature(enable = "pclmulqdq,sse2")]
    pub unsafe fn schoolbook(a: &[u64], b: &[u64], out: &mut [u64]) {
        for (i, &x) in a.iter().enumerate() {
            let xv = _mm_set_epi64x(0, x as i64);
            let mut carry = _mm_setzero_si128();
            for (j, &y) in b.iter().enumerate() {
                let p = _mm_clmulepi64_si128(xv, _mm_set_epi64x(0, y as i64), 0x00);
                let p = _mm_xor_si128(p, carry);
                out[i + j] ^= _mm_cvtsi128_si64(p) as u64;
                carry = _mm_srli_si128::<8>(p);
            }
            out[i + b.len()] ^= _mm_cvtsi128_si64(carry) as u64;
        }
    }
}

fn schoolbook_soft(a: &[u64], b: &[u64], out: &mut [u64]) {
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            let (lo, hi) = clmul64_soft(x, y);
            out[i + j] ^= lo;
            out[i + j + 1] ^= hi;
        }
    }
}

#[derive(Clone, Copy)]
enum Kernel {
    Soft,
    #[cfg(target_arch = "x86_64")]
    Pclmul,
}

impl Kernel {
    fn detect() -> Self {
        #[cfg(target_arch = "x86_64")]
        if has_pclmul() {
            return Kernel::Pclmul;
        }
        Kernel::Soft
    }

    fn schoolbook(self, a: &[u64], b: &[u64], out: &mut [u64]) {
        match self {
            Kernel::Soft => schoolbook_soft(a, b, out),
            // SAFETY: selected only after runtime feature detection.
            #[cfg(target_arch = "x86_64")]
            Kernel::Pclmul => unsafe { x86::schoolbook(a, b, out) },
        }
    }
}

/// Full product, `a.len() + b.len()` words.
pub fn mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; a.len() + b.len()];
    mul_acc(Kernel::detect(), a, b, &mut out);
    out
}

/// Full product using only the portable kernel.
pub fn mul_portable(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; a.len() + b.len()];
    mul_acc(Kernel::Soft, a, b, &mut out);
    out
}

/// `out ^= a * b`.
fn mul_acc(k: Kernel, a: &[u64], b: &[u64], out: &mut [u64]) {
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if s.is_empty() {
        return;
    }
    if s.len() <= SCHOOLBOOK_WORDS {
        k.schoolbook(s, l, out);
    } else if l.len() >= 2 * s.len() {
        for (c, chunk) in l.chunks(s.len()).enumerate() {
            let off = c * s.len();
            mul_acc(k, s, chunk, &mut out[off..off + s.len() + chunk.len()]);
        }
    } else {
        karatsuba(k, s, l, out);
    }
}

/// Requires `s.len() <= l.len() < 2 * s.len()`.
fn karatsuba(k: Kernel, s: &[u64], l: &[u64], out: &mut [u64]) {
    let h = l.len().div_ceil(2);
    let (l0, l1) = l.split_at(h);
    let (s0, s1) = s.split_at(h.min(s.len()));

    let mut p0 = vec![0u64; s0.len() + l0.len()];
    mul_acc(k, s0, l0, &mut p0);
    let mut p2 = vec![0u64; s1.len() + l1.len()];
    mul_acc(k, s1, l1, &mut p2);

    let fold = |lo: &[u64], hi: &[u64]| {
        let mut v = lo.to_vec();
        for (x, y) in v.iter_mut().zip(hi) {
            *x ^= y;
        }
        v
    };
    let (ss, ls) = (fold(s0, s1), fold(l0, l1));
    let mut p1 = vec![0u64; ss.len() + ls.len()];
    mul_acc(k, &ss, &ls, &mut p1);
    for (x, y) in p1.iter_mut().zip(&p0) {
        *x ^= y;
    }
    for (x, y) in p1.iter_mut().zip(&p2) {
        *x ^= y;
    }

    xor_into(out, &p0, 0);
    xor_into(out, &p2, 2 * h);
    xor_into(out, &p1, h);
}

fn xor_into(out: &mut [u64], v: &[u64], off: usize) {
    let n = v.len().min(out.len().saturating_sub(off));
    debug_assert!(v[n..].iter().all(|&w| w == 0), "product overflowed its buffer");
    for (x, y) in out[off..off + n].iter_mut().zip(v) {
        *x ^= y;
    }
}

/// Bits `[start, start + len)` of `words` as a new word vector, with bits
/// past the end of `words` read as zero.
pub fn bit_window(words: &[u64], start: usize, len: usize) -> Vec<u64> {
    let n = len.div_ceil(64);
    let (w0, sh) = (start / 64, start % 64);
    let get = |i: usize| words.get(i).copied().unwrap_or(0);
    let mut out: Vec<u64> = (0..n)
        .map(|k| {
            let lo = get(w0 + k) >> sh;
            if sh == 0 {
                lo
            } else {
                lo | get(w0 + k + 1) << (64 - sh)
            }
        })
        .collect();
    if !len.is_multiple_of(64) {
        if let Some(last) = out.last_mut() {
            *last &= (1u64 << (len % 64)) - 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut out = vec![0u64; a.len() + b.len()];
        for i in 0..a.len() * 64 {
            if a[i / 64] >> (i % 64) & 1 == 0 {
                continue;
            }
            for j in 0..b.len() * 64 {
                if b[j / 64] >> (j % 64) & 1 == 1 {
                    out[(i + j) / 64] ^= 1 << ((i + j) % 64);
                }
            }
        }
        out
    }

    #[test]
    fn clmul_small_cases() {
        assert_eq!(clmul64(0b11, 0b11), (0b101, 0));
        assert_eq!(clmul64(1 << 63, 1 << 63), (0, 1 << 62));
        assert_eq!(clmul64_soft(u64::MAX, 1), (u64::MAX, 0));
    }

    #[test]
    fn large_unbalanced_product_matches_portable() {
        let a: Vec<u64> = (0..517u64).map(|i| i.wrapping_mul(0x9e3779b97f4a7c15)).collect();
        let b: Vec<u64> = (0..2900u64)
            .map(|i| (i ^ 0x55).wrapping_mul(0xbf58476d1ce4e5b9))
            .collect();
        assert_eq!(mul(&a, &b), mul_portable(&a, &b));
        let mut direct = vec![0u64; a.len() + b.len()];
        schoolbook_soft(&a, &b, &mut direct);
        assert_eq!(mul_portable(&a, &b), direct);
    }

    proptest! {
        #[test]
        fn clmul_kernels_agree(a in any::<u64>(), b in any::<u64>()) {
            prop_assert_eq!(clmul64(a, b), clmul64_soft(a, b));
            prop_assert_eq!(clmul64(a, b), clmul64(b, a));
        }

        #[test]
        fn product_matches_bitwise_oracle(
            a in proptest::collection::vec(any::<u64>(), 0..12),
            b in proptest::collection::vec(any::<u64>(), 0..12),
        ) {
            prop_assert_eq!(mul(&a, &b), naive(&a, &b));
        }

        #[test]
        fn karatsuba_matches_schoolbook(
            a in proptest::collection::vec(any::<u64>(), 33..200),
            b in proptest::collection::vec(any::<u64>(), 33..300),
        ) {
            let mut direct = vec![0u64; a.len() + b.len()];
            schoolbook_soft(&a, &b, &mut direct);
            prop_assert_eq!(mul(&a, &b), direct.clone());
            prop_assert_eq!(mul_portable(&a, &b), direct);
        }

        #[test]
        fn window_extracts_bits(
            w in proptest::collection::vec(any::<u64>(), 1..6),
            start in 0usize..400,
            len in 0usize..200,
        ) {
            let win = bit_window(&w, start, len);
            prop_assert_eq!(win.len(), len.div_ceil(64));
            for k in 0..len {
                let src = start + k;
                let expected = w.get(src / 64).map_or(0, |x| x >> (src % 64) & 1);
                prop_assert_eq!(win[k / 64] >> (k % 64) & 1, expected);
            }
            if len % 64 != 0 {
                prop_assert_eq!(win[len / 64] >> (len % 64), 0);
            }
        }
    }
}
