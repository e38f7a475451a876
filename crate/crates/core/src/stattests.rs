//! Eight statistical randomness tests with p-values: frequency, block
//! frequency, cumulative sums (forward and reverse), runs, longest run of
//! ones, binary matrix rank, discrete Fourier transform, and serial.
//!
//! Statistics and p-values follow the reference algorithms of NIST
//! SP 800-22 rev. 1a, including its integer truncation in the cumulative
//! sums series and its threshold for the spectral test.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use libm::erfc;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::bits::BitStream;
use crate::error::{Error, Result};
use crate::exec::Execution;

pub const DEFAULT_THRESHOLD: f64 = 0.01;
pub const DEFAULT_BLOCK_FREQUENCY_M: usize = 128;
pub const RANK_MIN_BITS: usize = 38_912;
const MAX_SERIAL_M: usize = 16;

/// The tests of the battery, in reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Frequency,
    BlockFrequency,
    CumulativeSums,
    Runs,
    LongestRun,
    Rank,
    Fft,
    Serial,
}

impl TestKind {
    pub const ALL: [TestKind; 8] = [
        TestKind::Frequency,
        TestKind::BlockFrequency,
        TestKind::CumulativeSums,
        TestKind::Runs,
        TestKind::LongestRun,
        TestKind::Rank,
        TestKind::Fft,
        TestKind::Serial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Frequency => "Frequency",
            TestKind::BlockFrequency => "BlockFrequency",
            TestKind::CumulativeSums => "CumulativeSums",
            TestKind::Runs => "Runs",
            TestKind::LongestRun => "LongestRun",
            TestKind::Rank => "Rank",
            TestKind::Fft => "FFT",
            TestKind::Serial => "Serial",
        }
    }

    /// Shortest input the battery runs the test on.
    pub fn min_bits(self) -> usize {
        match self {
            TestKind::Frequency | TestKind::CumulativeSums | TestKind::Runs => 100,
            TestKind::BlockFrequency => DEFAULT_BLOCK_FREQUENCY_M,
            TestKind::LongestRun => 128,
            TestKind::Rank => RANK_MIN_BITS,
            TestKind::Fft => 1000,
            TestKind::Serial => 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: TestKind,
    /// One value, or two for cumulative sums (forward, reverse) and serial
    /// (first and second differences). Empty when skipped.
    pub p_values: Vec<f64>,
    pub threshold: f64,
    pub passed: bool,
    pub skipped: Option<String>,
    pub parameters: BTreeMap<String, u64>,
}

impl TestReport {
    pub fn min_p(&self) -> Option<f64> {
        self.p_values.iter().copied().reduce(f64::min)
    }
}

fn check_len(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        Err(Error::insufficient(format!(
            "{what} needs at least {min} bits, got {n}"
        )))
    } else {
        Ok(())
    }
}

fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(a, x)
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Monobit test.
pub fn frequency(bits: &BitStream) -> Result<f64> {
    check_len(bits.len(), 1, "frequency test")?;
    let n = bits.len() as f64;
    let s = 2.0 * bits.count_ones() as f64 - n;
    Ok(erfc(s.abs() / n.sqrt() / SQRT_2))
}

/// Frequency within `m`-bit blocks; trailing bits are discarded.
pub fn block_frequency(bits: &BitStream, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("block length must be positive"));
    }
    check_len(bits.len(), m, "block frequency test")?;
    let blocks = bits.len() / m;
    let mut chi2 = 0.0;
    let mut it = bits.iter();
    for _ in 0..blocks {
        let ones = it.by_ref().take(m).filter(|&b| b).count();
        let pi = ones as f64 / m as f64;
        chi2 += (pi - 0.5).powi(2);
    }
    chi2 *= 4.0 * m as f64;
    Ok(igamc(blocks as f64 / 2.0, chi2 / 2.0))
}

fn cusum_p(n: i64, z: i64) -> f64 {
    let sn = (n as f64).sqrt();
    let zf = z as f64;
    let mut sum1 = 0.0;
    let mut k = (-n / z + 1) / 4;
    while k <= (n / z - 1) / 4 {
        sum1 += normal_cdf((4 * k + 1) as f64 * zf / sn) - normal_cdf((4 * k - 1) as f64 * zf / sn);
        k += 1;
    }
    let mut sum2 = 0.0;
    let mut k = (-n / z - 3) / 4;
    while k <= (n / z - 1) / 4 {
        sum2 += normal_cdf((4 * k + 3) as f64 * zf / sn) - normal_cdf((4 * k + 1) as f64 * zf / sn);
        k += 1;
    }
    (1.0 - sum1 + sum2).clamp(0.0, 1.0)
}

/// Cumulative sums: `[forward, reverse]`.
pub fn cumulative_sums(bits: &BitStream) -> Result<[f64; 2]> {
    check_len(bits.len(), 1, "cumulative sums test")?;
    let (mut s, mut sup, mut inf) = (0i64, 0i64, 0i64);
    for b in bits.iter() {
        s += if b { 1 } else { -1 };
        sup = sup.max(s);
        inf = inf.min(s);
    }
    let forward = sup.max(-inf);
    // The reverse walk visits s_n - s_k, whose extremes follow from the
    // forward extremes (including the empty prefix).
    let reverse = (s - inf.min(0)).max(sup.max(0) - s);
    let n = bits.len() as i64;
    Ok([cusum_p(n, forward), cusum_p(n, reverse)])
}

/// Runs test. Returns 0 when the monobit prerequisite fails.
pub fn runs(bits: &BitStream) -> Result<f64> {
    check_len(bits.len(), 2, "runs test")?;
    let n = bits.len() as f64;
    let pi = bits.count_ones() as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return Ok(0.0);
    }
    let mut v = 1u64;
    let mut prev = bits.get(0);
    for b in bits.iter().skip(1) {
        v += (b != prev) as u64;
        prev = b;
    }
    let num = (v as f64 - 2.0 * n * pi * (1.0 - pi)).abs();
    let den = 2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi);
    Ok(erfc(num / den))
}

struct LongestRunTable {
    m: usize,
    /// Class boundaries: run lengths `<= v[0]`, `== v[1]`, ..., `>= v[K]`.
    v: &'static [usize],
    pi: &'static [f64],
}

const LR_8: LongestRunTable = LongestRunTable {
    m: 8,
    v: &[1, 2, 3, 4],
    pi: &[0.21484375, 0.3671875, 0.23046875, 0.1875],
};
const LR_128: LongestRunTable = LongestRunTable {
    m: 128,
    v: &[4, 5, 6, 7, 8, 9],
    pi: &[
        0.1174035788,
        0.242955959,
        0.249363483,
        0.17517706,
        0.102701071,
        0.112398847,
    ],
};
const LR_10000: LongestRunTable = LongestRunTable {
    m: 10_000,
    v: &[10, 11, 12, 13, 14, 15, 16],
    pi: &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
};

fn longest_run_table(n: usize) -> &'static LongestRunTable {
    if n < 6272 {
        &LR_8
    } else if n < 750_000 {
        &LR_128
    } else {
        &LR_10000
    }
}

/// Longest run of ones in blocks; the block size is chosen from the input
/// length (8, 128 or 10^4 bits).
pub fn longest_run(bits: &BitStream) -> Result<(f64, usize)> {
    check_len(bits.len(), 128, "longest run test")?;
    let t = longest_run_table(bits.len());
    let blocks = bits.len() / t.m;
    let k = t.v.len();
    let mut counts = vec![0u64; k];
    let mut it = bits.iter();
    for _ in 0..blocks {
        let (mut run, mut longest) = (0usize, 0usize);
        for b in it.by_ref().take(t.m) {
            run = if b { run + 1 } else { 0 };
            longest = longest.max(run);
        }
        let class = if longest <= t.v[0] {
            0
        } else if longest >= t.v[k - 1] {
            k - 1
        } else {
            longest - t.v[0]
        };
        counts[class] += 1;
    }
    let nb = blocks as f64;
    let chi2: f64 = counts
        .iter()
        .zip(t.pi)
        .map(|(&c, &p)| (c as f64 - nb * p).powi(2) / (nb * p))
        .sum();
    Ok((igamc((k - 1) as f64 / 2.0, chi2 / 2.0), t.m))
}

fn gf2_rank32(mut rows: [u32; 32]) -> u32 {
    let mut rank = 0;
    for col in 0..32 {
        let bit = 1u32 << (31 - col);
        let Some(pivot) = (rank as usize..32).find(|&r| rows[r] & bit != 0) else {
            continue;
        };
        rows.swap(rank as usize, pivot);
        let p = rows[rank as usize];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank as usize && *row & bit != 0 {
                *row ^= p;
            }
        }
        rank += 1;
    }
    rank
}

/// Probability that a random `m x q` GF(2) matrix has rank `r`.
pub fn rank_probability(r: u32, m: u32, q: u32) -> f64 {
    let exponent = (r * (q + m - r)) as f64 - (m * q) as f64;
    let mut p = exponent.exp2();
    for i in 0..r {
        let i = i as f64;
        p *= (1.0 - (i - q as f64).exp2()) * (1.0 - (i - m as f64).exp2()) / (1.0 - (i - r as f64).exp2());
    }
    p
}

/// Binary rank of disjoint 32x32 matrices.
pub fn rank(bits: &BitStream) -> Result<f64> {
    check_len(bits.len(), RANK_MIN_BITS, "rank test")?;
    let n_mat = bits.len() / 1024;
    let bytes = bits.as_bytes();
    let (mut full, mut minus_one) = (0u64, 0u64);
    for k in 0..n_mat {
        let rows: [u32; 32] = std::array::from_fn(|i| {
            let o = k * 128 + i * 4;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]])
        });
        match gf2_rank32(rows) {
            32 => full += 1,
            31 => minus_one += 1,
            _ => {}
        }
    }
    let n = n_mat as f64;
    let p32 = rank_probability(32, 32, 32);
    let p31 = rank_probability(31, 32, 32);
    let p30 = 1.0 - p32 - p31;
    let rest = n - full as f64 - minus_one as f64;
    let chi2 = (full as f64 - p32 * n).powi(2) / (p32 * n)
        + (minus_one as f64 - p31 * n).powi(2) / (p31 * n)
        + (rest - p30 * n).powi(2) / (p30 * n);
    Ok((-chi2 / 2.0).exp())
}

/// Discrete Fourier transform (spectral) test.
pub fn spectral(bits: &BitStream) -> Result<f64> {
    check_len(bits.len(), 2, "spectral test")?;
    let n = bits.len();
    let mut buf: Vec<Complex<f64>> = bits
        .iter()
        .map(|b| Complex::new(if b { 1.0 } else { -1.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let nf = n as f64;
    let t = (20f64.ln() * nf).sqrt();
    let n1 = buf[..n / 2].iter().filter(|c| c.norm() < t).count() as f64;
    let n0 = 0.95 * nf / 2.0;
    let d = (n1 - n0) / (nf * 0.95 * 0.05 / 4.0).sqrt();
    Ok(erfc(d.abs() / SQRT_2))
}

fn psi2(bits: &BitStream, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mask = (1usize << m) - 1;
    let mut counts = vec![0u64; 1 << m];
    let mut v = 0usize;
    for b in bits.iter().take(m - 1) {
        v = (v << 1) | b as usize;
    }
    for k in 0..n {
        let b = bits.get((k + m - 1) % n);
        v = ((v << 1) | b as usize) & mask;
        counts[v] += 1;
    }
    let sum: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
    sum * (1usize << m) as f64 / n as f64 - n as f64
}

/// Serial test with overlapping `m`-bit patterns: `[p1, p2]`.
pub fn serial(bits: &BitStream, m: usize) -> Result<[f64; 2]> {
    if !(2..=24).contains(&m) {
        return Err(Error::invalid(format!("serial pattern length {m} not in 2..=24")));
    }
    check_len(bits.len(), m, "serial test")?;
    let (a, b, c) = (psi2(bits, m), psi2(bits, m - 1), psi2(bits, m - 2));
    let d1 = a - b;
    let d2 = a - 2.0 * b + c;
    Ok([
        igamc((1usize << (m - 2)) as f64, d1 / 2.0),
        igamc((1usize << (m - 2)) as f64 / 2.0, d2 / 2.0),
    ])
}

/// `min(16, ⌊log₂ n⌋ - 3)`, at least 2.
pub fn serial_block_length(n: usize) -> usize {
    let lg = usize::BITS as usize - 1 - n.max(1).leading_zeros() as usize;
    lg.saturating_sub(3).clamp(2, MAX_SERIAL_M)
}

fn run_one(kind: TestKind, bits: &BitStream, threshold: f64) -> TestReport {
    let n = bits.len();
    let mut parameters = BTreeMap::from([("n".to_string(), n as u64)]);
    let result: Result<Vec<f64>> = if n < kind.min_bits() {
        Err(Error::insufficient(format!(
            "needs at least {} bits, got {n}",
            kind.min_bits()
        )))
    } else {
        match kind {
            TestKind::Frequency => frequency(bits).map(|p| vec![p]),
            TestKind::BlockFrequency => {
                parameters.insert("M".into(), DEFAULT_BLOCK_FREQUENCY_M as u64);
                block_frequency(bits, DEFAULT_BLOCK_FREQUENCY_M).map(|p| vec![p])
            }
            TestKind::CumulativeSums => cumulative_sums(bits).map(Vec::from),
            TestKind::Runs => runs(bits).map(|p| vec![p]),
            TestKind::LongestRun => longest_run(bits).map(|(p, m)| {
                parameters.insert("M".into(), m as u64);
                vec![p]
            }),
            TestKind::Rank => {
                parameters.insert("matrix_rows".into(), 32);
                parameters.insert("matrix_cols".into(), 32);
                rank(bits).map(|p| vec![p])
            }
            TestKind::Fft => spectral(bits).map(|p| vec![p]),
            TestKind::Serial => {
                let m = serial_block_length(n);
                parameters.insert("m".into(), m as u64);
                serial(bits, m).map(Vec::from)
            }
        }
    };
    match result {
        Ok(p_values) => TestReport {
            test: kind,
            passed: p_values.iter().all(|&p| p >= threshold),
            p_values,
            threshold,
            skipped: None,
            parameters,
        },
        Err(e) => TestReport {
            test: kind,
            p_values: Vec::new(),
            threshold,
            passed: false,
            skipped: Some(e.to_string()),
            parameters,
        },
    }
}

/// All eight tests; too-short inputs mark individual tests as skipped.
pub fn run_battery(bits: &BitStream, threshold: f64, exec: Execution) -> Vec<TestReport> {
    exec.map_slice(&TestKind::ALL, |&k| run_one(k, bits, threshold))
}

/// True when every test ran and passed.
pub fn battery_passed(reports: &[TestReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamReports {
    pub first: Vec<TestReport>,
    pub second: Vec<TestReport>,
    pub joint: Vec<TestReport>,
}

pub fn battery_on_streams(
    first: &BitStream,
    second: &BitStream,
    joint: &BitStream,
    threshold: f64,
    exec: Execution,
) -> StreamReports {
    StreamReports {
        first: run_battery(first, threshold, exec),
        second: run_battery(second, threshold, exec),
        joint: run_battery(joint, threshold, exec),
    }
}

/// Plain-text pass/fail table, one row per test and one column per stream.
pub fn render_table(columns: &[(&str, &[TestReport])]) -> String {
    let mut out = format!("{:<16}", "test");
    for (name, _) in columns {
        out.push_str(&format!(" {name:>22}"));
    }
    out.push('\n');
    for (row, kind) in TestKind::ALL.iter().enumerate() {
        out.push_str(&format!("{:<16}", kind.name()));
        for (_, reports) in columns {
            let r = &reports[row];
            let cell = match (&r.skipped, r.min_p()) {
                (Some(_), _) | (None, None) => "skipped".to_string(),
                (None, Some(p)) => format!("{p:.6} {}", if r.passed { "pass" } else { "FAIL" }),
            };
            out.push_str(&format!(" {cell:>22}"));
        }
        out.push('\n');
    }
    out
}

/// CSV with one row per test and stream: `stream,test,p_min,passed`.
pub fn render_csv(columns: &[(&str, &[TestReport])]) -> String {
    let mut out = String::from("stream,test,p_min,passed\n");
    for (name, reports) in columns {
        for r in reports.iter() {
            let p = r.min_p().map_or(String::new(), |p| format!("{p:.6}"));
            out.push_str(&format!("{name},{},{p},{}\n", r.test.name(), r.passed));
        }
    }
    out
}
