//! Synthetic data sets with known statistics.

use crate::kcbs::SettingPair;
use crate::protocol::TrialRecord;
use crate::qutrit::Outcome;

/// Trials per setting in [`reference_game_log`].
pub const REFERENCE_TRIALS_PER_SETTING: u64 = 4000;

/// `(first, second, ⟨A_first⟩, ⟨A_second⟩, ⟨A_first A_second⟩)` per setting.
const REFERENCE_STATISTICS: [(u8, u8, f64, f64, f64); 11] = [
    (1, 2, 0.082, 0.091, -0.768),
    (2, 1, 0.096, 0.065, -0.783),
    (2, 3, 0.098, 0.088, -0.767),
    (3, 2, 0.107, 0.089, -0.750),
    (3, 4, 0.084, 0.103, -0.773),
    (4, 3, 0.122, 0.068, -0.762),
    (4, 5, 0.095, 0.075, -0.782),
    (5, 4, 0.056, 0.070, -0.789),
    (5, 1, 0.100, 0.109, -0.773),
    (1, 5, 0.109, 0.066, -0.767),
    (1, 1, 0.106, 0.107, 0.977),
];

/// A game-round log reproducing the trapped-ion KCBS measurement record:
/// correlators, first-position marginals and compatibility terms
/// (`ε12 = 0.005, ε32 = 0.009, ε34 = 0.019, ε54 = 0.025, ε51 = 0, ε11 = 0.001`),
/// with 4000 trials per setting. The second-position marginals of `(3,2)`,
/// `(3,4)`, `(5,4)`, `(5,1)` and `(1,1)` are chosen so that the positional
/// estimator returns those compatibility terms; the log scores
/// `g = 4.771/6`.
///
/// Outcome pair `(a, b)` occurs `n/4·(1 + a·m1 + b·m2 + ab·c)` times.
pub fn reference_game_log() -> Vec<TrialRecord> {
    let n = REFERENCE_TRIALS_PER_SETTING as f64;
    let mut log = Vec::with_capacity(11 * REFERENCE_TRIALS_PER_SETTING as usize);
    for (i, j, m1, m2, c) in REFERENCE_STATISTICS {
        let setting = SettingPair::new(i, j).expect("game setting");
        for (a, b) in [
            (Outcome::Plus, Outcome::Plus),
            (Outcome::Plus, Outcome::Minus),
            (Outcome::Minus, Outcome::Plus),
            (Outcome::Minus, Outcome::Minus),
        ] {
            let (x, y) = (a.value() as f64, b.value() as f64);
            let count = (n / 4.0 * (1.0 + x * m1 + y * m2 + x * y * c)).round() as u64;
            for _ in 0..count {
                log.push(TrialRecord {
                    index: log.len() as u64,
                    is_game_round: true,
                    setting,
                    outcomes: (a, b),
                });
            }
        }
    }
    log
}
