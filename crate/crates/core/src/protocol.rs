//! The spot-checking expansion protocol: each round is a game round with
//! probability `q` (random setting) or a generation round (fixed setting).
//!
//! Rounds are split into shards of [`SHARD_ROUNDS`]. Shard `k` draws its
//! protocol randomness from stream `k` of the protocol key and re-seeds the
//! device with stream `k` of the device key, so sequential and parallel runs
//! produce identical logs.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitStream;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kcbs::{score_tally, GameTally, ScoreReport, SettingPair, GAME_SETTINGS};
use crate::qutrit::{
    measure_with_angles, measure_with_unitaries, Geometry, NoiseModel, Outcome, QutritState, RotationAngles, Unitary3,
};
use crate::rng::{StreamKey, DOMAIN_DEVICE, DOMAIN_PROTOCOL};

/// Rounds per shard.
pub const SHARD_ROUNDS: u64 = 1 << 16;

/// A setting whose game-round frequency deviates by more than this many
/// standard deviations is flagged.
pub const DISTRIBUTION_FLAG_SIGMA: f64 = 5.0;

mod hex_seed {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_rounds: u64,
    /// Spot-check probability. `q = 1` is accepted as the all-game boundary.
    pub q: f64,
    pub score_threshold: f64,
    /// Game-input distribution over [`GAME_SETTINGS`].
    pub distribution: [f64; 11],
    #[serde(with = "hex_seed")]
    pub master_seed: Vec<u8>,
    pub generation_setting: SettingPair,
}

impl ProtocolConfig {
    /// Uniform inputs, threshold 2/3, generation setting `(1,2)`.
    pub fn new(n_rounds: u64, q: f64, master_seed: &[u8]) -> Self {
        ProtocolConfig {
            n_rounds,
            q,
            score_threshold: 2.0 / 3.0,
            distribution: [1.0 / 11.0; 11],
            master_seed: master_seed.to_vec(),
            generation_setting: SettingPair::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::invalid("n_rounds must be at least 1"));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::invalid(format!("q = {} is not in (0, 1]", self.q)));
        }
        if !self.score_threshold.is_finite() {
            return Err(Error::invalid("score_threshold must be finite"));
        }
        if self.distribution.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::invalid("input distribution has a negative or non-finite entry"));
        }
        let total: f64 = self.distribution.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("input distribution sums to {total}")));
        }
        Ok(())
    }

    fn cdf(&self) -> [f64; 11] {
        let mut acc = 0.0;
        self.distribution.map(|p| {
            acc += p;
            acc
        })
    }

    fn shards(&self) -> u64 {
        self.n_rounds.div_ceil(SHARD_ROUNDS)
    }
}

/// Shannon entropy of the input distribution, in bits.
pub fn distribution_entropy(d: &[f64; 11]) -> f64 {
    d.iter().filter(|p| **p > 0.0).map(|p| -p * p.log2()).sum()
}

pub fn binary_entropy(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        0.0
    } else {
        -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
    }
}

/// Input randomness consumed: `N·(q·H(inputs) + H₂(q))` bits; for the
/// uniform distribution `H(inputs) = log₂ 11`.
pub fn input_entropy(config: &ProtocolConfig) -> f64 {
    config.n_rounds as f64 * (config.q * distribution_entropy(&config.distribution) + binary_entropy(config.q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialRecord {
    pub index: u64,
    pub is_game_round: bool,
    pub setting: SettingPair,
    pub outcomes: (Outcome, Outcome),
}

/// A measurement device. It only ever sees the setting pair, never whether
/// the round is a spot check.
pub trait Device: Clone + Send + Sync {
    /// Called before the first round of each shard.
    fn begin_shard(&mut self, _shard: u64) {}

    /// Measure `A_first` then `A_second` on a freshly prepared system.
    fn play(&mut self, setting: SettingPair) -> std::result::Result<(Outcome, Outcome), String>;
}

/// Simulated qutrit prepared in `|3⟩` each round.
#[derive(Clone, Debug)]
pub struct QutritDevice {
    geometry: Geometry,
    noise: NoiseModel,
    key: StreamKey,
    angles: [RotationAngles; 5],
    forward: [Unitary3; 5],
    back: [Unitary3; 5],
    rng: ChaCha20Rng,
}

impl QutritDevice {
    pub fn new(geometry: Geometry, noise: NoiseModel, device_seed: &[u8]) -> Result<Self> {
        noise.validate()?;
        let angles: [RotationAngles; 5] = std::array::from_fn(|k| geometry.angles(k + 1).expect("index in range"));
        let key = StreamKey::derive(device_seed, DOMAIN_DEVICE);
        Ok(QutritDevice {
            geometry,
            noise,
            key,
            forward: angles.map(|a| a.unitary()),
            back: angles.map(|a| a.inverse_unitary()),
            angles,
            rng: key.stream(0),
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    fn measure(&mut self, state: QutritState, i: u8) -> (Outcome, QutritState) {
        let k = i as usize - 1;
        let m = if self.noise.angle_jitter_sd > 0.0 {
            measure_with_angles(state, &self.angles[k], &self.noise, &mut self.rng)
        } else {
            measure_with_unitaries(state, &self.forward[k], &self.back[k], &self.noise, &mut self.rng)
        };
        (m.value, m.post_state)
    }
}

impl Device for QutritDevice {
    fn begin_shard(&mut self, shard: u64) {
        self.rng = self.key.stream(shard);
    }

    fn play(&mut self, s: SettingPair) -> std::result::Result<(Outcome, Outcome), String> {
        let (a, state) = self.measure(QutritState::basis(3), s.first());
        let (b, _) = self.measure(state, s.second());
        Ok((a, b))
    }
}

/// Always answers the same value.
#[derive(Clone, Copy, Debug)]
pub struct ConstantDevice(pub Outcome);

impl Device for ConstantDevice {
    fn play(&mut self, _: SettingPair) -> std::result::Result<(Outcome, Outcome), String> {
        Ok((self.0, self.0))
    }
}

/// Noncontextual deterministic strategy: `A_i` always yields `values[i-1]`.
#[derive(Clone, Copy, Debug)]
pub struct DeterministicDevice(pub [Outcome; 5]);

impl Device for DeterministicDevice {
    fn play(&mut self, s: SettingPair) -> std::result::Result<(Outcome, Outcome), String> {
        Ok((self.0[s.first() as usize - 1], self.0[s.second() as usize - 1]))
    }
}

/// Wraps a device and fails on the `fail_after`-th play of a shard.
#[derive(Clone, Debug)]
pub struct FailingDevice<D> {
    pub inner: D,
    pub fail_after: u64,
    played: u64,
}

impl<D> FailingDevice<D> {
    pub fn new(inner: D, fail_after: u64) -> Self {
        FailingDevice {
            inner,
            fail_after,
            played: 0,
        }
    }
}

impl<D: Device> Device for FailingDevice<D> {
    fn begin_shard(&mut self, shard: u64) {
        self.played = 0;
        self.inner.begin_shard(shard);
    }

    fn play(&mut self, s: SettingPair) -> std::result::Result<(Outcome, Outcome), String> {
        if self.played == self.fail_after {
            return Err("device stopped responding".into());
        }
        self.played += 1;
        self.inner.play(s)
    }
}

/// A setting whose game-round count is far from its expected count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionFlag {
    pub setting: SettingPair,
    pub observed: u64,
    pub expected: f64,
    pub z: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProtocolResult {
    pub trials: Vec<TrialRecord>,
    /// `None` when some game setting never occurred.
    pub score_report: Option<ScoreReport>,
    pub accepted: bool,
    pub input_entropy_bits: f64,
    /// Two bits per round, first outcome then second; `+1 → 1`.
    pub raw_output: BitStream,
    pub n_game_rounds: u64,
    pub distribution_flags: Vec<DistributionFlag>,
}

impl ProtocolResult {
    /// First-position outcomes of every round.
    pub fn first_stream(&self) -> BitStream {
        self.trials.iter().map(|t| t.outcomes.0.bit()).collect()
    }

    /// Second-position outcomes of every round.
    pub fn second_stream(&self) -> BitStream {
        self.trials.iter().map(|t| t.outcomes.1.bit()).collect()
    }
}

fn sample_setting(cdf: &[f64; 11], u: f64) -> SettingPair {
    let k = cdf.iter().position(|&c| u < c).unwrap_or_else(|| {
        // Rounding left the last cumulative value just below one.
        cdf.iter().rposition(|&c| c > 0.0).unwrap_or(10)
    });
    GAME_SETTINGS[k]
}

struct ShardFailure {
    round: u64,
    reason: String,
}

fn play_shard<D: Device>(
    config: &ProtocolConfig,
    cdf: &[f64; 11],
    key: &StreamKey,
    device: &mut D,
    shard: u64,
    mut visit: impl FnMut(TrialRecord),
) -> std::result::Result<(), ShardFailure> {
    let start = shard * SHARD_ROUNDS;
    let end = (start + SHARD_ROUNDS).min(config.n_rounds);
    let mut rng = key.stream(shard);
    device.begin_shard(shard);
    for index in start..end {
        let is_game_round = rng.gen::<f64>() < config.q;
        let setting = if is_game_round {
            sample_setting(cdf, rng.gen())
        } else {
            config.generation_setting
        };
        let outcomes = device
            .play(setting)
            .map_err(|reason| ShardFailure { round: index, reason })?;
        visit(TrialRecord {
            index,
            is_game_round,
            setting,
            outcomes,
        });
    }
    Ok(())
}

/// Run the protocol against `device`.
pub fn run<D: Device>(config: &ProtocolConfig, device: &D, exec: Execution) -> Result<ProtocolResult> {
    config.validate()?;
    let cdf = config.cdf();
    let key = StreamKey::derive(&config.master_seed, DOMAIN_PROTOCOL);
    let shards = exec.map_range(config.shards() as usize, |k| {
        let mut d = device.clone();
        let mut trials = Vec::with_capacity(SHARD_ROUNDS as usize);
        let r = play_shard(config, &cdf, &key, &mut d, k as u64, |t| trials.push(t));
        (trials, r.err())
    });
    let mut trials = Vec::with_capacity(config.n_rounds as usize);
    for (part, failure) in shards {
        trials.extend(part);
        if let Some(f) = failure {
            let partial = finish(config, trials);
            return Err(Error::DeviceFailure {
                round: f.round,
                reason: f.reason,
                partial: Box::new(partial),
            });
        }
    }
    Ok(finish(config, trials))
}

/// Play `n` game rounds (`q = 1`) and return only the tally.
pub fn play_game_rounds<D: Device>(device: &D, n: u64, seed: &[u8], exec: Execution) -> Result<GameTally> {
    let config = ProtocolConfig::new(n, 1.0, seed);
    config.validate()?;
    let cdf = config.cdf();
    let key = StreamKey::derive(&config.master_seed, DOMAIN_PROTOCOL);
    let parts = exec.map_range(config.shards() as usize, |k| {
        let mut d = device.clone();
        let mut tally = GameTally::default();
        let r = play_shard(&config, &cdf, &key, &mut d, k as u64, |t| tally.add_record(&t));
        r.map(|_| tally)
    });
    let mut total = GameTally::default();
    for p in parts {
        match p {
            Ok(t) => total = total.merge(&t),
            Err(f) => {
                return Err(Error::DeviceFailure {
                    round: f.round,
                    reason: f.reason,
                    partial: Box::default(),
                })
            }
        }
    }
    Ok(total)
}

/// Re-score a recorded log through the same decision path as [`run`].
pub fn replay(log: &[TrialRecord], config: &ProtocolConfig) -> Result<ProtocolResult> {
    config.validate()?;
    if log.len() as u64 != config.n_rounds {
        return Err(Error::invalid(format!(
            "log has {} rounds but n_rounds is {}",
            log.len(),
            config.n_rounds
        )));
    }
    for (k, t) in log.iter().enumerate() {
        if t.index != k as u64 {
            return Err(Error::invalid(format!("record {k} carries round index {}", t.index)));
        }
        if !t.is_game_round && t.setting != config.generation_setting {
            return Err(Error::invalid(format!(
                "generation round {k} uses setting {} instead of {}",
                t.setting, config.generation_setting
            )));
        }
    }
    let result = finish(config, log.to_vec());
    if result.score_report.is_none() {
        let missing = GameTally::from_records(log).missing();
        let names: Vec<String> = missing.iter().map(|s| s.to_string()).collect();
        return Err(Error::insufficient(format!(
            "log has no game rounds for setting(s) {}",
            names.join(", ")
        )));
    }
    Ok(result)
}

fn distribution_flags(config: &ProtocolConfig, tally: &GameTally) -> Vec<DistributionFlag> {
    let n = tally.total() as f64;
    if n == 0.0 {
        return Vec::new();
    }
    GAME_SETTINGS
        .iter()
        .zip(&config.distribution)
        .filter_map(|(&s, &p)| {
            let observed = tally.get(s).n;
            let expected = n * p;
            let sd = (n * p * (1.0 - p)).sqrt();
            let z = if sd > 0.0 {
                (observed as f64 - expected) / sd
            } else if observed as f64 == expected {
                0.0
            } else {
                f64::INFINITY
            };
            (z.abs() > DISTRIBUTION_FLAG_SIGMA).then_some(DistributionFlag {
                setting: s,
                observed,
                expected,
                z,
            })
        })
        .collect()
}

fn finish(config: &ProtocolConfig, trials: Vec<TrialRecord>) -> ProtocolResult {
    let tally = GameTally::from_records(&trials);
    let score_report = score_tally(&tally).ok();
    let accepted = score_report.as_ref().is_some_and(|r| r.g >= config.score_threshold);
    let mut raw_output = BitStream::zeros(0);
    for t in &trials {
        raw_output.push(t.outcomes.0.bit());
        raw_output.push(t.outcomes.1.bit());
    }
    ProtocolResult {
        score_report,
        accepted,
        input_entropy_bits: input_entropy(config),
        raw_output,
        n_game_rounds: tally.total(),
        distribution_flags: distribution_flags(config, &tally),
        trials,
    }
}
