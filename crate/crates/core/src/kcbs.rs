//! KCBS geometry, observables, the modified-KCBS game score with its
//! compatibility corrections, and exhaustive classical-bound oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::protocol::{self, QutritDevice, TrialRecord};
use crate::qutrit::{basis, Geometry, Ket, Mat3, NoiseModel, Outcome, C64};

/// An ordered pair of observable indices measured sequentially.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u8; 2]", into = "[u8; 2]")]
pub struct SettingPair {
    first: u8,
    second: u8,
}

/// The eleven game inputs, in canonical order.
pub const GAME_SETTINGS: [SettingPair; 11] = [
    SettingPair::raw(1, 2),
    SettingPair::raw(2, 1),
    SettingPair::raw(2, 3),
    SettingPair::raw(3, 2),
    SettingPair::raw(3, 4),
    SettingPair::raw(4, 3),
    SettingPair::raw(4, 5),
    SettingPair::raw(5, 4),
    SettingPair::raw(5, 1),
    SettingPair::raw(1, 5),
    SettingPair::raw(1, 1),
];

/// Settings whose correlators enter the score, with their sign.
const SCORE_TERMS: [(SettingPair, f64); 6] = [
    (SettingPair::raw(1, 2), 1.0),
    (SettingPair::raw(3, 2), 1.0),
    (SettingPair::raw(3, 4), 1.0),
    (SettingPair::raw(5, 4), 1.0),
    (SettingPair::raw(5, 1), 1.0),
    (SettingPair::raw(1, 1), -1.0),
];

impl SettingPair {
    const fn raw(first: u8, second: u8) -> Self {
        SettingPair { first, second }
    }

    /// A game input; rejects pairs outside the eleven-element set.
    pub fn new(first: u8, second: u8) -> Result<Self> {
        let s = SettingPair::raw(first, second);
        if GAME_SETTINGS.contains(&s) {
            Ok(s)
        } else {
            Err(Error::invalid(format!("({first},{second}) is not a game setting")))
        }
    }

    pub fn first(self) -> u8 {
        self.first
    }

    pub fn second(self) -> u8 {
        self.second
    }

    /// Position in [`GAME_SETTINGS`].
    pub fn index(self) -> usize {
        GAME_SETTINGS
            .iter()
            .position(|&s| s == self)
            .expect("SettingPair is always a game setting")
    }

    pub fn from_index(k: usize) -> Result<Self> {
        GAME_SETTINGS
            .get(k)
            .copied()
            .ok_or_else(|| Error::invalid(format!("setting index {k} not in 0..11")))
    }

    pub fn reversed(self) -> Self {
        SettingPair::raw(self.second, self.first)
    }
}

impl Default for SettingPair {
    /// The generation-round setting `(1,2)`.
    fn default() -> Self {
        SettingPair::raw(1, 2)
    }
}

impl TryFrom<[u8; 2]> for SettingPair {
    type Error = Error;
    fn try_from(v: [u8; 2]) -> Result<Self> {
        SettingPair::new(v[0], v[1])
    }
}

impl From<SettingPair> for [u8; 2] {
    fn from(s: SettingPair) -> Self {
        [s.first, s.second]
    }
}

impl std::fmt::Display for SettingPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.first, self.second)
    }
}

/// Five unit vectors with consecutive ones orthogonal, plus the reference
/// state `|3⟩`.
#[derive(Clone, Debug)]
pub struct Pentagram {
    pub vectors: [Ket; 5],
    pub psi: Ket,
}

/// The symmetric pentagram around `|3⟩`:
/// `v_j = (sinθ cos(4πj/5), sinθ sin(4πj/5), cosθ)` with
/// `cos²θ = cos(π/5) / (1 + cos(π/5))`.
pub fn pentagram_vectors() -> Pentagram {
    use std::f64::consts::PI;
    let c5 = (PI / 5.0).cos();
    let cos2 = c5 / (1.0 + c5);
    let (ct, st) = (cos2.sqrt(), (1.0 - cos2).sqrt());
    let vectors = std::array::from_fn(|k| {
        let phi = 4.0 * PI * (k + 1) as f64 / 5.0;
        Ket::new(
            C64::new(st * phi.cos(), 0.0),
            C64::new(st * phi.sin(), 0.0),
            C64::new(ct, 0.0),
        )
    });
    Pentagram { vectors, psi: basis(3) }
}

/// `1 - 2|v⟩⟨v|`.
pub fn observable_from(v: &Ket) -> Mat3 {
    Mat3::identity() - v * v.adjoint() * C64::new(2.0, 0.0)
}

/// `A_i` for the ideal pentagram, `i` in `1..=5`.
pub fn observable(i: usize) -> Result<Mat3> {
    if !(1..=5).contains(&i) {
        return Err(Error::invalid(format!("observable index {i} not in 1..=5")));
    }
    Ok(observable_from(&pentagram_vectors().vectors[i - 1]))
}

/// `Σ_i ⟨ψ|A_i A_{i+1}|ψ⟩` evaluated by operator algebra.
pub fn kcbs_expectation(p: &Pentagram) -> f64 {
    (0..5)
        .map(|i| {
            let a = observable_from(&p.vectors[i]);
            let b = observable_from(&p.vectors[(i + 1) % 5]);
            (p.psi.adjoint() * a * b * p.psi)[(0, 0)].re
        })
        .sum()
}

/// Result of an exhaustive search over deterministic ±1 strategies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Enumeration {
    pub min: i32,
    pub max: i32,
    /// First strategy attaining the minimum.
    pub argmin: Vec<i8>,
    pub strategies: usize,
}

fn enumerate(width: usize, value: impl Fn(&[i8]) -> i32) -> Enumeration {
    let mut best = Enumeration {
        min: i32::MAX,
        max: i32::MIN,
        argmin: Vec::new(),
        strategies: 1 << width,
    };
    let mut a = vec![0i8; width];
    for mask in 0..(1u32 << width) {
        for (k, x) in a.iter_mut().enumerate() {
            *x = if mask >> k & 1 == 1 { -1 } else { 1 };
        }
        let v = value(&a);
        if v < best.min {
            best.min = v;
            best.argmin = a.clone();
        }
        best.max = best.max.max(v);
    }
    best
}

/// All `2^5` assignments of `A_1..A_5` to `±1` in
/// `A1A2 + A2A3 + A3A4 + A4A5 + A5A1`.
pub fn enumerate_kcbs() -> Enumeration {
    enumerate(5, |a| (0..5).map(|i| (a[i] * a[(i + 1) % 5]) as i32).sum())
}

pub fn classical_bound_kcbs() -> i32 {
    enumerate_kcbs().min
}

/// All `2^10` strategies with independent first-position values
/// `a_1..a_5` and second-position values `b_1..b_5` in
/// `a1b2 + a3b2 + a3b4 + a5b4 + a5b1 - a1b1`.
pub fn enumerate_bell_form() -> Enumeration {
    enumerate(10, |x| {
        let (a, b) = x.split_at(5);
        let t = |i: usize, j: usize| (a[i - 1] * b[j - 1]) as i32;
        t(1, 2) + t(3, 2) + t(3, 4) + t(5, 4) + t(5, 1) - t(1, 1)
    })
}

pub fn classical_bound_bell_form() -> i32 {
    enumerate_bell_form().min
}

/// Classical winning threshold of the game: `-(bell bound)/6`.
pub fn classical_game_threshold() -> f64 {
    -(classical_bound_bell_form() as f64) / 6.0
}

/// `(4√5 - 4)/6`, the ideal quantum score.
pub fn quantum_game_score() -> f64 {
    (4.0 * 5f64.sqrt() - 4.0) / 6.0
}

/// Sufficient statistics of one setting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingCounts {
    pub n: u64,
    pub sum_first: i64,
    pub sum_second: i64,
    pub sum_product: i64,
}

impl SettingCounts {
    fn add(&mut self, a: Outcome, b: Outcome) {
        let (x, y) = (a.value() as i64, b.value() as i64);
        self.n += 1;
        self.sum_first += x;
        self.sum_second += y;
        self.sum_product += x * y;
    }

    fn merge(&mut self, o: &SettingCounts) {
        self.n += o.n;
        self.sum_first += o.sum_first;
        self.sum_second += o.sum_second;
        self.sum_product += o.sum_product;
    }

    fn mean(&self, sum: i64) -> f64 {
        sum as f64 / self.n as f64
    }
}

/// Per-setting counts over game rounds. Merging is commutative and
/// associative, so shards can be tallied independently.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameTally {
    pub counts: [SettingCounts; 11],
}

impl GameTally {
    pub fn add(&mut self, s: SettingPair, a: Outcome, b: Outcome) {
        self.counts[s.index()].add(a, b);
    }

    /// Adds a record if it is a game round.
    pub fn add_record(&mut self, r: &TrialRecord) {
        if r.is_game_round {
            self.add(r.setting, r.outcomes.0, r.outcomes.1);
        }
    }

    pub fn merge(mut self, other: &GameTally) -> GameTally {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.merge(b);
        }
        self
    }

    pub fn get(&self, s: SettingPair) -> &SettingCounts {
        &self.counts[s.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|c| c.n).sum()
    }

    pub fn missing(&self) -> Vec<SettingPair> {
        GAME_SETTINGS.iter().copied().filter(|s| self.get(*s).n == 0).collect()
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> GameTally {
        let mut t = GameTally::default();
        for r in records {
            t.add_record(r);
        }
        t
    }
}

/// Compatibility estimator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Estimator {
    /// Difference of positional means of `A_j`.
    #[default]
    E1,
    /// Twice the difference of positional `+1` frequencies of `A_j`.
    E2,
}

/// `ε_ij` from a tally: compares `A_j` measured first in `(j,i)` with `A_j`
/// measured second in `(i,j)`.
pub fn epsilon_from_tally(t: &GameTally, i: u8, j: u8, est: Estimator) -> Result<f64> {
    let ij = SettingPair::new(i, j)?;
    let ji = SettingPair::new(j, i)?;
    let (first, second) = (t.get(ji), t.get(ij));
    if first.n == 0 || second.n == 0 {
        return Err(Error::insufficient(format!(
            "epsilon_{i}{j} needs trials of both {ji} and {ij}"
        )));
    }
    Ok(match est {
        Estimator::E1 => (first.mean(first.sum_first) - second.mean(second.sum_second)).abs(),
        Estimator::E2 => {
            let plus = |n: u64, sum: i64| (n as i64 + sum) as f64 / (2 * n) as f64;
            2.0 * (plus(first.n, first.sum_first) - plus(second.n, second.sum_second)).abs()
        }
    })
}

pub fn epsilon_estimate(records: &[TrialRecord], i: u8, j: u8, est: Estimator) -> Result<f64> {
    epsilon_from_tally(&GameTally::from_records(records), i, j, est)
}

/// The six correlators and six compatibility terms entering the score.
/// Order: `(1,2), (3,2), (3,4), (5,4), (5,1), (1,1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KcbsTerms {
    pub correlators: [f64; 6],
    pub epsilons: [f64; 6],
}

impl KcbsTerms {
    /// Left-hand side `⟨A1A2⟩ + ⟨A3A2⟩ + ⟨A3A4⟩ + ⟨A5A4⟩ + ⟨A5A1⟩ - ⟨A1A1⟩`.
    pub fn chi(&self) -> f64 {
        SCORE_TERMS
            .iter()
            .zip(&self.correlators)
            .map(|((_, sign), c)| sign * c)
            .sum()
    }

    pub fn epsilon_sum(&self) -> f64 {
        self.epsilons.iter().sum()
    }

    /// Noncontextual bound corrected for incompatibility, `-4 - Σε`.
    pub fn rhs(&self) -> f64 {
        -4.0 - self.epsilon_sum()
    }

    pub fn game_score(&self) -> f64 {
        -(self.chi() + self.epsilon_sum()) / 6.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub setting: SettingPair,
    pub count: u64,
    pub correlator: f64,
    pub mean_first: f64,
    pub mean_second: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonTerm {
    pub pair: SettingPair,
    pub value: f64,
}

/// Game score with its ingredients. `g` is reported unclamped; a constant
/// device scores `-2/3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub settings: Vec<SettingSummary>,
    pub epsilons: Vec<EpsilonTerm>,
    pub chi_value: f64,
    pub rhs_bound: f64,
    pub g: f64,
    pub sigma_g: f64,
    pub n_game_rounds: u64,
}

impl ScoreReport {
    pub fn g_clamped(&self) -> f64 {
        self.g.clamp(0.0, 1.0)
    }

    pub fn setting(&self, s: SettingPair) -> &SettingSummary {
        &self.settings[s.index()]
    }

    pub fn correlator(&self, s: SettingPair) -> f64 {
        self.setting(s).correlator
    }

    pub fn epsilon_sum(&self) -> f64 {
        self.epsilons.iter().map(|e| e.value).sum()
    }
}

/// Score a tally. Every one of the eleven settings must be present.
pub fn score_tally(t: &GameTally) -> Result<ScoreReport> {
    let missing = t.missing();
    if !missing.is_empty() {
        let names: Vec<String> = missing.iter().map(|s| s.to_string()).collect();
        return Err(Error::insufficient(format!(
            "no game rounds for setting(s) {}",
            names.join(", ")
        )));
    }
    let settings = GAME_SETTINGS
        .iter()
        .map(|&s| {
            let c = t.get(s);
            SettingSummary {
                setting: s,
                count: c.n,
                correlator: c.mean(c.sum_product),
                mean_first: c.mean(c.sum_first),
                mean_second: c.mean(c.sum_second),
            }
        })
        .collect::<Vec<_>>();

    let mut terms = KcbsTerms {
        correlators: [0.0; 6],
        epsilons: [0.0; 6],
    };
    let mut var = 0.0;
    let mut epsilons = Vec::with_capacity(6);
    for (k, &(s, _)) in SCORE_TERMS.iter().enumerate() {
        let c = &settings[s.index()];
        terms.correlators[k] = c.correlator;
        var += (1.0 - c.correlator * c.correlator) / c.count as f64;

        let eps = epsilon_from_tally(t, s.first, s.second, Estimator::E1)?;
        terms.epsilons[k] = eps;
        epsilons.push(EpsilonTerm { pair: s, value: eps });
        let a = &settings[s.reversed().index()];
        var += (1.0 - a.mean_first * a.mean_first) / a.count as f64;
        var += (1.0 - c.mean_second * c.mean_second) / c.count as f64;
    }
    Ok(ScoreReport {
        settings,
        epsilons,
        chi_value: terms.chi(),
        rhs_bound: terms.rhs(),
        g: terms.game_score(),
        sigma_g: var.sqrt() / 6.0,
        n_game_rounds: t.total(),
    })
}

/// Score the game rounds among `records`; generation rounds are ignored.
pub fn game_score(records: &[TrialRecord]) -> Result<ScoreReport> {
    score_tally(&GameTally::from_records(records))
}

/// Inputs of a depolarisation-strength calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub target_g: f64,
    pub tolerance: f64,
    /// Noise held fixed; its `p_depolarize` is ignored.
    pub base: NoiseModel,
    pub geometry: Geometry,
    pub game_rounds: u64,
    pub seed: Vec<u8>,
    pub execution: Execution,
}

impl CalibrationSpec {
    /// Rotation table, 1.3% dark readout error, 10^6 game rounds.
    pub fn new(target_g: f64, tolerance: f64) -> Self {
        CalibrationSpec {
            target_g,
            tolerance,
            base: NoiseModel {
                p_depolarize: 0.0,
                ..NoiseModel::PAPER_LIKE
            },
            geometry: Geometry::Table,
            game_rounds: 1_000_000,
            seed: b"calibration".to_vec(),
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub noise: NoiseModel,
    pub g: f64,
    pub sigma_g: f64,
    pub evaluations: usize,
}

/// Upper end of the depolarisation search.
pub const CALIBRATION_P_MAX: f64 = 0.5;

/// Bisection over `p_depolarize ∈ [0, 0.5]` with common random numbers so
/// that the simulated score lands within `tolerance` of `target_g`.
pub fn calibrate_noise(spec: &CalibrationSpec) -> Result<Calibration> {
    if !(spec.target_g.is_finite() && spec.tolerance > 0.0) {
        return Err(Error::invalid("target_g must be finite and tolerance positive"));
    }
    if spec.game_rounds < 11 {
        return Err(Error::invalid("calibration needs at least 11 game rounds"));
    }
    spec.base.validate()?;
    let mut evaluations = 0;
    let mut eval = |p: f64| -> Result<ScoreReport> {
        evaluations += 1;
        let noise = NoiseModel {
            p_depolarize: p,
            ..spec.base
        };
        let device = QutritDevice::new(spec.geometry, noise, &spec.seed)?;
        let tally = protocol::play_game_rounds(&device, spec.game_rounds, &spec.seed, spec.execution)?;
        score_tally(&tally)
    };
    let done = |p: f64, r: &ScoreReport, evaluations: usize| Calibration {
        noise: NoiseModel {
            p_depolarize: p,
            ..spec.base
        },
        g: r.g,
        sigma_g: r.sigma_g,
        evaluations,
    };

    let (mut lo, mut hi) = (0.0, CALIBRATION_P_MAX);
    let at_lo = eval(lo)?;
    if (at_lo.g - spec.target_g).abs() <= spec.tolerance {
        return Ok(done(lo, &at_lo, evaluations));
    }
    if at_lo.g < spec.target_g {
        return Err(Error::CalibrationFailure(format!(
            "target {} exceeds the noiseless score {:.4}",
            spec.target_g, at_lo.g
        )));
    }
    let at_hi = eval(hi)?;
    if at_hi.g > spec.target_g + spec.tolerance {
        return Err(Error::CalibrationFailure(format!(
            "target {} is below the score {:.4} at p_depolarize = {hi}",
            spec.target_g, at_hi.g
        )));
    }
    let mut best = (hi, at_hi);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let r = eval(mid)?;
        if (r.g - spec.target_g).abs() < (best.1.g - spec.target_g).abs() {
            best = (mid, r.clone());
        }
        if (r.g - spec.target_g).abs() <= spec.tolerance / 10.0 || hi - lo < 1e-7 {
            break;
        }
        if r.g > spec.target_g {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1.g - spec.target_g).abs() > spec.tolerance {
        return Err(Error::CalibrationFailure(format!(
            "closest score {:.4} at p_depolarize = {:.3e} misses target {} ± {}",
            best.1.g, best.0, spec.target_g, spec.tolerance
        )));
    }
    Ok(done(best.0, &best.1, evaluations))
}
