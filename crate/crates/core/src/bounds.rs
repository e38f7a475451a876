//! Certified min-entropy rate curves and the randomness-expansion
//! accounting built on them.
//!
//! With violation `χ = g - w`, `L = log₂ e`, and `d = r - 1` for the
//! Miller-Shi curve (`d = 1` for Huang-Shi):
//!
//! ```text
//! π(χ) = 2Lχ²/d
//! Δ    = (ε/q)·8Lχ²/d² + (ε/q)²·(32Lχ³/(3d³))·2^((ε/q)·4Lχ/d)
//!        + log₂(2/δ²)/(Nε) + 2rq
//! r_gen = π - Δ,   r_in = q·log₂11 + H₂(q),   r_exp = r_gen - r_in
//! ```
//!
//! All logarithms are base 2.

use std::f64::consts::LOG2_E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::protocol::binary_entropy;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    /// Miller-Shi.
    #[default]
    Ms,
    /// Huang-Shi.
    Hs,
}

impl std::str::FromStr for BoundKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ms" => Ok(BoundKind::Ms),
            "hs" => Ok(BoundKind::Hs),
            _ => Err(Error::invalid(format!("unknown bound {s:?} (expected ms or hs)"))),
        }
    }
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundKind::Ms => "ms",
            BoundKind::Hs => "hs",
        })
    }
}

pub const DEFAULT_CLASSICAL_BOUND: f64 = 2.0 / 3.0;
pub const DEFAULT_ALPHABET: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub g: f64,
    pub w: f64,
    pub r: u32,
    pub n_rounds: f64,
    pub q: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub kind: BoundKind,
}

impl BoundQuery {
    /// `w = 2/3`, `r = 4`.
    pub fn new(kind: BoundKind, g: f64, n_rounds: f64, q: f64, epsilon: f64, delta: f64) -> Self {
        BoundQuery {
            g,
            w: DEFAULT_CLASSICAL_BOUND,
            r: DEFAULT_ALPHABET,
            n_rounds,
            q,
            epsilon,
            delta,
            kind,
        }
    }

    pub fn chi(&self) -> f64 {
        self.g - self.w
    }

    fn validate_shape(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(what.to_string()))
            }
        };
        check(
            self.g.is_finite() && (0.0..=1.0).contains(&self.g),
            "g must lie in [0, 1]",
        )?;
        check((0.0..1.0).contains(&self.w), "w must lie in [0, 1)")?;
        check(self.r >= 2, "alphabet size r must be at least 2")?;
        check(
            self.n_rounds.is_finite() && self.n_rounds >= 1.0,
            "n_rounds must be >= 1",
        )?;
        check(self.q > 0.0 && self.q <= 1.0, "q must lie in (0, 1]")?;
        check(self.epsilon > 0.0 && self.epsilon <= 1.0, "epsilon must lie in (0, 1]")?;
        check(self.delta > 0.0 && self.delta < 1.0, "delta must lie in (0, 1)")
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if self.chi() < 0.0 {
            return Err(Error::NoViolation {
                score: self.g,
                bound: self.w,
            });
        }
        Ok(())
    }

    fn divisor(&self) -> f64 {
        match self.kind {
            BoundKind::Ms => (self.r - 1) as f64,
            BoundKind::Hs => 1.0,
        }
    }
}

/// The four additive pieces of `Δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTerms {
    pub first_order: f64,
    pub second_order: f64,
    pub smoothing: f64,
    pub spot_check: f64,
}

impl PenaltyTerms {
    pub fn total(&self) -> f64 {
        self.first_order + self.second_order + self.smoothing + self.spot_check
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub pi: f64,
    pub delta_penalty: f64,
    pub terms: PenaltyTerms,
    pub r_gen: f64,
    pub r_in: f64,
    pub r_exp: f64,
    pub total_min_entropy: f64,
    pub net_bits: f64,
    /// Whether `r_gen > 0`, i.e. any min-entropy is certified.
    pub certified: bool,
}

/// `π(χ)` for the given curve.
pub fn rate_curve(kind: BoundKind, chi: f64, r: u32) -> f64 {
    let d = match kind {
        BoundKind::Ms => (r - 1) as f64,
        BoundKind::Hs => 1.0,
    };
    2.0 * LOG2_E * chi * chi / d
}

/// Per-round input randomness `q·log₂11 + H₂(q)`.
pub fn input_rate(q: f64) -> f64 {
    q * 11f64.log2() + binary_entropy(q)
}

fn evaluate(qry: &BoundQuery, chi: f64) -> EntropyReport {
    let d = qry.divisor();
    let x = qry.epsilon / qry.q;
    let r = qry.r as f64;
    let pi = 2.0 * LOG2_E * chi * chi / d;
    let terms = PenaltyTerms {
        first_order: x * 8.0 * LOG2_E * chi * chi / (d * d),
        second_order: x * x * (32.0 * LOG2_E * chi.powi(3) / (3.0 * d.powi(3))) * (x * 4.0 * LOG2_E * chi / d).exp2(),
        smoothing: (2.0 / (qry.delta * qry.delta)).log2() / (qry.n_rounds * qry.epsilon),
        spot_check: 2.0 * r * qry.q,
    };
    let delta_penalty = terms.total();
    let r_gen = pi - delta_penalty;
    let r_in = input_rate(qry.q);
    let r_exp = r_gen - r_in;
    EntropyReport {
        pi,
        delta_penalty,
        terms,
        r_gen,
        r_in,
        r_exp,
        total_min_entropy: qry.n_rounds * r_gen,
        net_bits: qry.n_rounds * r_exp,
        certified: r_gen > 0.0,
    }
}

/// Rate report for the curve named in `qry.kind`.
pub fn rate(qry: &BoundQuery) -> Result<EntropyReport> {
    qry.validate()?;
    Ok(evaluate(qry, qry.chi()))
}

pub fn rate_ms(qry: &BoundQuery) -> Result<EntropyReport> {
    rate(&BoundQuery {
        kind: BoundKind::Ms,
        ..*qry
    })
}

pub fn rate_hs(qry: &BoundQuery) -> Result<EntropyReport> {
    rate(&BoundQuery {
        kind: BoundKind::Hs,
        ..*qry
    })
}

const GRID_POINTS: usize = 50;
const GRID_PASSES: usize = 3;
const ZOOM_CELLS: f64 = 2.0;
const LOG_EPS_RANGE: (f64, f64) = (-16.0, 0.0);
const LOG_Q_MIN: f64 = -12.0;
const Q_MAX: f64 = 0.5;

fn grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(move |k| if k + 1 == GRID_POINTS { hi } else { lo + step * k as f64 })
}

fn zoom(best: f64, lo: f64, hi: f64, bounds: (f64, f64)) -> (f64, f64) {
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    (
        (best - ZOOM_CELLS * step).max(bounds.0),
        (best + ZOOM_CELLS * step).min(bounds.1),
    )
}

/// Best operating point found by an optimiser.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub q: f64,
    pub epsilon: f64,
    pub report: EntropyReport,
}

/// Outcome of [`optimize`]: a point with net randomness, or the best
/// non-positive point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Optimization {
    Net(Optimum),
    NoNetRandomness(Optimum),
}

impl Optimization {
    pub fn optimum(&self) -> &Optimum {
        match self {
            Optimization::Net(o) | Optimization::NoNetRandomness(o) => o,
        }
    }

    pub fn is_net(&self) -> bool {
        matches!(self, Optimization::Net(_))
    }
}

/// Maximise `r_gen` (equivalently `r_exp`) over `ε` at fixed `q` with a
/// three-pass log grid over `ε ∈ [1e-16, 1]`.
pub fn optimize_epsilon(base: &BoundQuery) -> Result<Optimum> {
    base.validate()?;
    Ok(optimize_epsilon_unchecked(base, base.chi()))
}

fn optimize_epsilon_unchecked(base: &BoundQuery, chi: f64) -> Optimum {
    let (mut lo, mut hi) = LOG_EPS_RANGE;
    let mut best: Option<Optimum> = None;
    for _ in 0..GRID_PASSES {
        for le in grid(lo, hi) {
            let epsilon = 10f64.powf(le);
            let report = evaluate(&BoundQuery { epsilon, ..*base }, chi);
            if best.is_none_or(|b| report.r_gen > b.report.r_gen) {
                best = Some(Optimum {
                    q: base.q,
                    epsilon,
                    report,
                });
            }
        }
        let b = best.expect("grid is non-empty");
        (lo, hi) = zoom(b.epsilon.log10(), lo, hi, LOG_EPS_RANGE);
    }
    best.expect("grid is non-empty")
}

/// Maximise `r_exp` over `q ∈ (0, 0.5]` and `ε ∈ (0, 1]` with a three-pass,
/// 50×50 log grid. Requires `g ≥ w`.
pub fn optimize(g: f64, n_rounds: f64, delta: f64, kind: BoundKind) -> Result<Optimization> {
    optimize_with(&BoundQuery::new(kind, g, n_rounds, Q_MAX, 1.0, delta))
}

/// As [`optimize`], taking `w`, `r` and the other fixed inputs from `base`
/// (its `q` and `epsilon` are ignored).
pub fn optimize_with(base: &BoundQuery) -> Result<Optimization> {
    base.validate()?;
    let chi = base.chi();
    let q_bounds = (LOG_Q_MIN, Q_MAX.log10());
    let (mut qlo, mut qhi) = q_bounds;
    let (mut elo, mut ehi) = LOG_EPS_RANGE;
    let mut best: Option<Optimum> = None;
    for _ in 0..GRID_PASSES {
        for lq in grid(qlo, qhi) {
            for le in grid(elo, ehi) {
                let (q, epsilon) = (10f64.powf(lq), 10f64.powf(le));
                let report = evaluate(&BoundQuery { q, epsilon, ..*base }, chi);
                if best.is_none_or(|b| report.r_exp > b.report.r_exp) {
                    best = Some(Optimum { q, epsilon, report });
                }
            }
        }
        let b = best.expect("grid is non-empty");
        (qlo, qhi) = zoom(b.q.log10(), qlo, qhi, q_bounds);
        (elo, ehi) = zoom(b.epsilon.log10(), elo, ehi, LOG_EPS_RANGE);
    }
    let b = best.expect("grid is non-empty");
    Ok(if b.report.r_exp > 0.0 {
        Optimization::Net(b)
    } else {
        Optimization::NoNetRandomness(b)
    })
}

/// Largest round count searched by [`n_min`].
pub const N_MIN_CAP: f64 = 1e16;

/// Smallest `N` for which [`optimize`] finds net randomness, by bisection on
/// `log₁₀ N`. `None` when even `N = 1e16` is not enough.
pub fn n_min(g: f64, delta: f64, kind: BoundKind) -> Result<Option<f64>> {
    let net = |n: f64| optimize(g, n, delta, kind).map(|o| o.is_net());
    if !net(N_MIN_CAP)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0f64, N_MIN_CAP.log10());
    if net(1.0)? {
        return Ok(Some(1.0));
    }
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if net(10f64.powf(mid))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(10f64.powf(hi).ceil()))
}

/// `N_min` for each score; non-violating scores report `None`.
pub fn n_min_curve(gs: &[f64], delta: f64, kind: BoundKind, exec: Execution) -> Result<Vec<(f64, Option<f64>)>> {
    exec.map_slice(gs, |&g| {
        if g <= DEFAULT_CLASSICAL_BOUND {
            return Ok((g, None));
        }
        n_min(g, delta, kind).map(|n| (g, n))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub g: f64,
    pub q: f64,
    pub eps_opt: f64,
    pub r_gen: f64,
    pub r_in: f64,
    pub r_exp: f64,
    pub net_bits: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "g,q,eps_opt,r_gen,r_in,r_exp,net_bits";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e}",
            self.g, self.q, self.eps_opt, self.r_gen, self.r_in, self.r_exp, self.net_bits
        )
    }
}

/// The `(g, q) → r_exp` surface with `ε` optimised per cell; rows are
/// ordered by `g` then `q`. Scores below `w` are evaluated at zero violation.
pub fn sweep(
    gs: &[f64],
    qs: &[f64],
    n_rounds: f64,
    delta: f64,
    kind: BoundKind,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    let cells: Vec<(f64, f64)> = gs.iter().flat_map(|&g| qs.iter().map(move |&q| (g, q))).collect();
    for &(g, q) in &cells {
        BoundQuery::new(kind, g, n_rounds, q, 1.0, delta).validate_shape()?;
    }
    Ok(exec.map_slice(&cells, |&(g, q)| {
        let base = BoundQuery::new(kind, g, n_rounds, q, 1.0, delta);
        let o = optimize_epsilon_unchecked(&base, base.chi().max(0.0));
        SweepRow {
            g,
            q,
            eps_opt: o.epsilon,
            r_gen: o.report.r_gen,
            r_in: o.report.r_in,
            r_exp: o.report.r_exp,
            net_bits: o.report.net_bits,
        }
    }))
}

/// Default hashing error `2^-100`.
pub const DEFAULT_EPSILON_H: f64 = 7.888609052210118e-31;

/// Leftover-hash output length `floor(H - 2·log₂(1/ε_h))`, at least 0.
pub fn certified_output_length(total_min_entropy: f64, epsilon_h: f64) -> Result<u64> {
    if !(epsilon_h > 0.0 && epsilon_h < 1.0) {
        return Err(Error::invalid(format!("epsilon_h = {epsilon_h} is not in (0, 1)")));
    }
    if total_min_entropy.is_nan() {
        return Err(Error::invalid("total min-entropy is NaN"));
    }
    let m = (total_min_entropy - 2.0 * (1.0 / epsilon_h).log2()).floor();
    Ok(if m > 0.0 { m as u64 } else { 0 })
}
