//! Three-level system simulation: rotations, projective measurement with the
//! Lüders rule, and a small phenomenological noise model.
//!
//! Basis order is `(|1⟩, |2⟩, |3⟩)`, stored at indices 0, 1, 2. `|3⟩` is the
//! fluorescing level. An observable `A_i = 1 - 2|v_i⟩⟨v_i|` is measured by
//! rotating `|v_i⟩` onto `|3⟩`, detecting fluorescence, and rotating back; a
//! fluorescent detection is recorded as `a_i = -1`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat3 = Matrix3<C64>;
pub type Ket = Vector3<C64>;

const PURE_NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-10;
const JITTER_CUTOFF_SD: f64 = 4.0;

/// Basis ket `|k⟩`, `k` in `1..=3`.
pub fn basis(k: usize) -> Ket {
    assert!((1..=3).contains(&k), "qutrit basis index {k} out of range");
    let mut v = Ket::zeros();
    v[k - 1] = C64::new(1.0, 0.0);
    v
}

/// A 3x3 unitary.
#[derive(Clone, Debug, PartialEq)]
pub struct Unitary3(Mat3);

impl Unitary3 {
    pub fn identity() -> Self {
        Unitary3(Mat3::identity())
    }

    /// Wrap a matrix, checking `U†U = 1` entrywise within 1e-10.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let u = Unitary3(m);
        let err = u.unitarity_error();
        if err > UNITARY_TOL {
            return Err(Error::InvariantViolation(format!(
                "matrix is not unitary (max |U†U - 1| = {err:e})"
            )));
        }
        Ok(u)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn adjoint(&self) -> Unitary3 {
        Unitary3(self.0.adjoint())
    }

    /// Largest entry of `|U†U - 1|`.
    pub fn unitarity_error(&self) -> f64 {
        max_abs_entry(&(self.0.adjoint() * self.0 - Mat3::identity()))
    }

    /// Largest entrywise distance to `other`.
    pub fn distance(&self, other: &Unitary3) -> f64 {
        max_abs_entry(&(self.0 - other.0))
    }

    pub fn apply(&self, v: &Ket) -> Ket {
        self.0 * v
    }
}

impl std::ops::Mul for &Unitary3 {
    type Output = Unitary3;
    fn mul(self, rhs: &Unitary3) -> Unitary3 {
        Unitary3(self.0 * rhs.0)
    }
}

pub(crate) fn max_abs_entry(m: &Mat3) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_angles(theta: f64, phi: f64) -> Result<()> {
    if theta.is_finite() && phi.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "rotation angles must be finite (theta = {theta}, phi = {phi})"
        )))
    }
}

fn r1_unchecked(theta: f64, phi: f64) -> Mat3 {
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let up = C64::from_polar(s, phi);
    let down = -C64::from_polar(s, -phi);
    Mat3::new(c, z, up, z, one, z, down, z, c)
}

fn r2_unchecked(theta: f64, phi: f64) -> Mat3 {
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let up = -C64::from_polar(s, -phi);
    let down = C64::from_polar(s, phi);
    Mat3::new(one, z, z, z, c, up, z, down, c)
}

/// Rotation coupling `|1⟩ ↔ |3⟩`, leaving `|2⟩` fixed.
pub fn r1(theta: f64, phi: f64) -> Result<Unitary3> {
    check_angles(theta, phi)?;
    Ok(Unitary3(r1_unchecked(theta, phi)))
}

/// Rotation coupling `|2⟩ ↔ |3⟩`, leaving `|1⟩` fixed.
pub fn r2(theta: f64, phi: f64) -> Result<Unitary3> {
    check_angles(theta, phi)?;
    Ok(Unitary3(r2_unchecked(theta, phi)))
}

/// Angles of one measurement rotation `U = R1(theta1, phi1) · R2(theta2, phi2)`,
/// in radians. `R2` acts first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationAngles {
    pub theta1: f64,
    pub phi1: f64,
    pub theta2: f64,
    pub phi2: f64,
}

impl RotationAngles {
    const fn in_pi(theta1: f64, phi1: f64, theta2: f64, phi2: f64) -> Self {
        RotationAngles {
            theta1: theta1 * PI,
            phi1: phi1 * PI,
            theta2: theta2 * PI,
            phi2: phi2 * PI,
        }
    }

    pub fn unitary(&self) -> Unitary3 {
        Unitary3(r1_unchecked(self.theta1, self.phi1) * r2_unchecked(self.theta2, self.phi2))
    }

    /// `R2(theta2, π - phi2) · R1(theta1, π - phi1)`: the inverse pulse
    /// sequence. Equals `unitary()†` whenever both phases are 0 or π.
    pub fn inverse_unitary(&self) -> Unitary3 {
        Unitary3(r2_unchecked(self.theta2, PI - self.phi2) * r1_unchecked(self.theta1, PI - self.phi1))
    }

    /// The measured axis `v = U†|3⟩`.
    pub fn axis(&self) -> Ket {
        self.unitary().adjoint().apply(&basis(3))
    }

    fn jittered<R: Rng + ?Sized>(&self, sd: f64, rng: &mut R) -> RotationAngles {
        if sd == 0.0 {
            return *self;
        }
        RotationAngles {
            theta1: self.theta1 + truncated_normal(sd, rng),
            theta2: self.theta2 + truncated_normal(sd, rng),
            ..*self
        }
    }
}

/// Experimental rotation table for the five KCBS observables (angles in
/// units of π).
pub const ROTATION_TABLE: [RotationAngles; 5] = [
    RotationAngles::in_pi(0.531, 1.0, 0.066, 0.0),
    RotationAngles::in_pi(0.442, 0.0, 0.328, 0.0),
    RotationAngles::in_pi(0.191, 1.0, 0.506, 1.0),
    RotationAngles::in_pi(0.104, 1.0, 0.526, 0.0),
    RotationAngles::in_pi(0.377, 0.0, 0.404, 1.0),
];

fn check_setting(i: usize) -> Result<()> {
    if (1..=5).contains(&i) {
        Ok(())
    } else {
        Err(Error::invalid(format!("setting index {i} not in 1..=5")))
    }
}

/// `U_i` from the rotation table.
pub fn u_table(i: usize) -> Result<Unitary3> {
    check_setting(i)?;
    Ok(ROTATION_TABLE[i - 1].unitary())
}

/// `U_i†` realised as the inverse pulse sequence.
pub fn u_inverse(i: usize) -> Result<Unitary3> {
    check_setting(i)?;
    Ok(ROTATION_TABLE[i - 1].inverse_unitary())
}

/// Which rotations a simulated device uses for the five observables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    /// The experimental rotation table (axes orthogonal to about 1e-3).
    #[default]
    Table,
    /// Exact regular-pentagram axes, realised with the same two-rotation
    /// pulse structure.
    Pentagram,
}

impl Geometry {
    pub fn angles(self, i: usize) -> Result<RotationAngles> {
        check_setting(i)?;
        Ok(match self {
            Geometry::Table => ROTATION_TABLE[i - 1],
            Geometry::Pentagram => pentagram_angles()[i - 1],
        })
    }
}

/// Rotation angles whose axes `U†|3⟩` are exactly the pentagram vectors.
///
/// For a real axis `(a, b, c)` with `c > 0`, `U†|3⟩ = (-e^{iφ1} sin(θ1/2),
/// e^{-iφ2} sin(θ2/2) cos(θ1/2), cos(θ1/2) cos(θ2/2))`, so the phases only
/// carry signs.
pub fn pentagram_angles() -> [RotationAngles; 5] {
    let p = crate::kcbs::pentagram_vectors();
    std::array::from_fn(|k| {
        let v = &p.vectors[k];
        let (a, b, c) = (v[0].re, v[1].re, v[2].re);
        let s1 = a.abs();
        let phi1 = if a > 0.0 { PI } else { 0.0 };
        let c1 = (1.0 - s1 * s1).sqrt();
        let phi2 = if b < 0.0 { PI } else { 0.0 };
        let theta2 = 2.0 * (b.abs() / c1).atan2(c / c1);
        RotationAngles {
            theta1: 2.0 * s1.asin(),
            phi1,
            theta2,
            phi2,
        }
    })
}

/// Either a pure state or a density operator.
#[derive(Clone, Debug, PartialEq)]
pub enum QutritState {
    Pure(Ket),
    Mixed(Mat3),
}

impl QutritState {
    /// `|k⟩` as a pure state.
    pub fn basis(k: usize) -> Self {
        QutritState::Pure(basis(k))
    }

    pub fn pure(amplitudes: Ket) -> Result<Self> {
        let s = QutritState::Pure(amplitudes);
        s.validate()?;
        Ok(s)
    }

    pub fn mixed(rho: Mat3) -> Result<Self> {
        let s = QutritState::Mixed(rho);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            QutritState::Pure(v) => {
                let n = v.norm_squared();
                if !n.is_finite() || (n - 1.0).abs() > PURE_NORM_TOL {
                    return Err(Error::InvariantViolation(format!("pure state has squared norm {n}")));
                }
            }
            QutritState::Mixed(rho) => {
                let herm = max_abs_entry(&(rho - rho.adjoint()));
                if !herm.is_finite() || herm > HERMITIAN_TOL {
                    return Err(Error::InvariantViolation(format!(
                        "density matrix not Hermitian (deviation {herm:e})"
                    )));
                }
                let tr = rho.trace();
                if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
                    return Err(Error::InvariantViolation(format!("density matrix trace is {tr}")));
                }
                let min_eig = rho
                    .symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                if min_eig < -EIGEN_TOL {
                    return Err(Error::InvariantViolation(format!(
                        "density matrix has eigenvalue {min_eig:e}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn density(&self) -> Mat3 {
        match self {
            QutritState::Pure(v) => v * v.adjoint(),
            QutritState::Mixed(rho) => *rho,
        }
    }

    pub fn into_mixed(self) -> Self {
        QutritState::Mixed(self.density())
    }

    /// `⟨k|ρ|k⟩`.
    pub fn population(&self, k: usize) -> f64 {
        assert!((1..=3).contains(&k));
        match self {
            QutritState::Pure(v) => v[k - 1].norm_sqr(),
            QutritState::Mixed(rho) => rho[(k - 1, k - 1)].re,
        }
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        match self {
            QutritState::Pure(v) => v.norm_squared().powi(2),
            QutritState::Mixed(rho) => (rho * rho).trace().re,
        }
    }

    /// `⟨ψ|O|ψ⟩` or `tr(ρO)`.
    pub fn expectation(&self, op: &Mat3) -> f64 {
        match self {
            QutritState::Pure(v) => (v.adjoint() * op * v)[(0, 0)].re,
            QutritState::Mixed(rho) => (rho * op).trace().re,
        }
    }

    pub fn apply(&mut self, u: &Unitary3) {
        match self {
            QutritState::Pure(v) => *v = u.0 * *v,
            QutritState::Mixed(rho) => *rho = u.0 * *rho * u.0.adjoint(),
        }
    }

    /// `ρ → (1-p)ρ + p·1/3`. Converts a pure state to mixed when `p > 0`.
    pub fn depolarize(&mut self, p: f64) {
        if p == 0.0 {
            return;
        }
        let rho = self.density() * C64::new(1.0 - p, 0.0) + Mat3::identity() * C64::new(p / 3.0, 0.0);
        *self = QutritState::Mixed(rho);
    }

    /// Scale the `|1⟩–|2⟩` coherence by `1 - p`.
    pub fn dephase_12(&mut self, p: f64) {
        if p == 0.0 {
            return;
        }
        let mut rho = self.density();
        rho[(0, 1)] *= 1.0 - p;
        rho[(1, 0)] *= 1.0 - p;
        *self = QutritState::Mixed(rho);
    }

    /// Remove accumulated rounding drift.
    pub fn renormalize(&mut self) {
        match self {
            QutritState::Pure(v) => {
                let n = v.norm();
                *v /= C64::new(n, 0.0);
            }
            QutritState::Mixed(rho) => {
                let h = (*rho + rho.adjoint()) * C64::new(0.5, 0.0);
                let tr = h.trace().re;
                *rho = h / C64::new(tr, 0.0);
            }
        }
    }

    /// Normalised state after a dark detection (support on `|1⟩, |2⟩`),
    /// with coherence inside the dark subspace kept.
    fn project_dark(&self) -> QutritState {
        match self {
            QutritState::Pure(v) => {
                let mut w = *v;
                w[2] = C64::new(0.0, 0.0);
                let n = w.norm();
                QutritState::Pure(w / C64::new(n, 0.0))
            }
            QutritState::Mixed(rho) => {
                let mut m = *rho;
                for k in 0..3 {
                    m[(2, k)] = C64::new(0.0, 0.0);
                    m[(k, 2)] = C64::new(0.0, 0.0);
                }
                let tr = m.trace().re;
                QutritState::Mixed(m / C64::new(tr, 0.0))
            }
        }
    }

    fn bright(&self) -> QutritState {
        match self {
            QutritState::Pure(_) => QutritState::Pure(basis(3)),
            QutritState::Mixed(_) => QutritState::Mixed(basis(3) * basis(3).adjoint()),
        }
    }
}

/// A ±1 measurement value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Minus,
    Plus,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Minus => -1,
            Outcome::Plus => 1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(Outcome::Plus),
            -1 => Some(Outcome::Minus),
            _ => None,
        }
    }

    /// Raw-output bit: `+1 → 1`, `-1 → 0`.
    pub fn bit(self) -> bool {
        self == Outcome::Plus
    }

    pub fn flip(self) -> Self {
        match self {
            Outcome::Minus => Outcome::Plus,
            Outcome::Plus => Outcome::Minus,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeasurementOutcome {
    pub value: Outcome,
    /// Whether the physical branch was the fluorescent one (before readout
    /// errors).
    pub fluorescent: bool,
    pub post_state: QutritState,
}

/// Phenomenological noise. All probabilities are per event; the jitter is a
/// per-rotation Gaussian error on `theta1` and `theta2`, truncated at ±4 sd.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default)]
    pub p_depolarize: f64,
    #[serde(default)]
    pub p_dark_flip: f64,
    #[serde(default)]
    pub p_bright_flip: f64,
    #[serde(default)]
    pub dephase_12: f64,
    #[serde(default)]
    pub angle_jitter_sd: f64,
}

/// Readout error of the dark levels.
pub const DARK_READOUT_ERROR: f64 = 0.013;

/// Depolarisation strength of the `paper-like` preset, found by
/// [`crate::kcbs::calibrate_noise`] against a score of 0.795 with the
/// rotation table, 1.3% dark readout error and 10^6 game rounds.
pub const PAPER_LIKE_P_DEPOLARIZE: f64 = 2.44140625e-3;

impl NoiseModel {
    pub const NOISELESS: NoiseModel = NoiseModel {
        p_depolarize: 0.0,
        p_dark_flip: 0.0,
        p_bright_flip: 0.0,
        dephase_12: 0.0,
        angle_jitter_sd: 0.0,
    };

    /// Calibrated preset reproducing the experimental score.
    pub const PAPER_LIKE: NoiseModel = NoiseModel {
        p_depolarize: PAPER_LIKE_P_DEPOLARIZE,
        p_dark_flip: DARK_READOUT_ERROR,
        p_bright_flip: 0.0,
        dephase_12: 0.0,
        angle_jitter_sd: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_depolarize", self.p_depolarize),
            ("p_dark_flip", self.p_dark_flip),
            ("p_bright_flip", self.p_bright_flip),
            ("dephase_12", self.dephase_12),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        if !(self.angle_jitter_sd >= 0.0 && self.angle_jitter_sd.is_finite()) {
            return Err(Error::invalid(format!(
                "angle_jitter_sd = {} must be finite and >= 0",
                self.angle_jitter_sd
            )));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        *self == Self::NOISELESS
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::NOISELESS
    }
}

fn truncated_normal<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= JITTER_CUTOFF_SD {
            return z * sd;
        }
    }
}

/// Ideal fluorescence measurement `M = 2|3⟩⟨3| - 1` with Lüders update.
/// The fluorescent branch is reported as `-1`.
pub fn project_measure<R: Rng + ?Sized>(state: &QutritState, rng: &mut R) -> Result<MeasurementOutcome> {
    state.validate()?;
    Ok(project(state, 0.0, 0.0, rng))
}

fn project<R: Rng + ?Sized>(
    state: &QutritState,
    p_bright_flip: f64,
    p_dark_flip: f64,
    rng: &mut R,
) -> MeasurementOutcome {
    let p3 = state.population(3).clamp(0.0, 1.0);
    let fluorescent = rng.gen::<f64>() < p3;
    let (post_state, flip_p) = if fluorescent {
        (state.bright(), p_bright_flip)
    } else {
        (state.project_dark(), p_dark_flip)
    };
    let mut value = if fluorescent { Outcome::Minus } else { Outcome::Plus };
    if flip_p > 0.0 && rng.gen::<f64>() < flip_p {
        value = value.flip();
    }
    MeasurementOutcome {
        value,
        fluorescent,
        post_state,
    }
}

/// Measure observable `A_i` with the rotation table.
pub fn measure_observable<R: Rng + ?Sized>(
    state: &QutritState,
    i: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    state.validate()?;
    noise.validate()?;
    let angles = Geometry::Table.angles(i)?;
    Ok(measure_with_angles(state.clone(), &angles, noise, rng))
}

/// Rotate, detect, rotate back, drawing fresh angle jitter for both
/// rotations. The caller guarantees a valid state.
pub fn measure_with_angles<R: Rng + ?Sized>(
    state: QutritState,
    angles: &RotationAngles,
    noise: &NoiseModel,
    rng: &mut R,
) -> MeasurementOutcome {
    let forward = angles.jittered(noise.angle_jitter_sd, rng).unitary();
    let back = angles.jittered(noise.angle_jitter_sd, rng).inverse_unitary();
    measure_with_unitaries(state, &forward, &back, noise, rng)
}

/// As [`measure_with_angles`] with fixed rotations (jitter is not applied).
/// Mixed representation is used whenever the noise model is not noiseless.
pub fn measure_with_unitaries<R: Rng + ?Sized>(
    mut state: QutritState,
    forward: &Unitary3,
    back: &Unitary3,
    noise: &NoiseModel,
    rng: &mut R,
) -> MeasurementOutcome {
    if !noise.is_noiseless() {
        if let QutritState::Pure(_) = state {
            state = state.into_mixed();
        }
    }
    state.apply(forward);
    state.depolarize(noise.p_depolarize);
    let mut m = project(&state, noise.p_bright_flip, noise.p_dark_flip, rng);
    m.post_state.dephase_12(noise.dephase_12);
    m.post_state.apply(back);
    m.post_state.depolarize(noise.p_depolarize);
    m.post_state.renormalize();
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ket(a: [C64; 3]) -> Ket {
        Ket::new(a[0], a[1], a[2])
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// `|<a|b>|`, insensitive to global phase.
    fn overlap(a: &Ket, b: &Ket) -> f64 {
        a.dotc(b).norm()
    }

    #[test]
    fn zero_rotation_is_identity() {
        for phi in [0.0, 0.3, PI, -2.0] {
            assert!(r1(0.0, phi).unwrap().distance(&Unitary3::identity()) < 1e-15);
            assert!(r2(0.0, phi).unwrap().distance(&Unitary3::identity()) < 1e-15);
        }
    }

    #[test]
    fn pi_rotations_transfer_population() {
        let to1 = r1(PI, 0.0).unwrap().apply(&basis(3));
        assert!((overlap(&to1, &basis(1)) - 1.0).abs() < 1e-12);
        let to2 = r2(PI, 0.0).unwrap().apply(&basis(3));
        assert!((overlap(&to2, &basis(2)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotations_are_unitary_and_invert() {
        assert!(r1(PI / 2.0, 0.0).unwrap().unitarity_error() < 1e-12);
        for (t, p) in [(0.7, 0.2), (2.1, PI), (-1.3, 0.0)] {
            let prod = &r2(t, p).unwrap() * &r2(-t, p).unwrap();
            assert!(prod.distance(&Unitary3::identity()) < 1e-12);
        }
    }

    #[test]
    fn non_finite_angles_rejected() {
        assert!(matches!(r1(f64::NAN, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(r2(0.0, f64::INFINITY), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn table_entries() {
        let a = ROTATION_TABLE[0];
        assert_eq!((a.theta1, a.phi1, a.theta2, a.phi2), (0.531 * PI, PI, 0.066 * PI, 0.0));
        let u1 = u_table(1).unwrap();
        let direct = &r1(0.531 * PI, PI).unwrap() * &r2(0.066 * PI, 0.0).unwrap();
        assert!(u1.distance(&direct) < 1e-15);
        assert!(u_table(0).is_err() && u_table(6).is_err());
        // Row 3 inverse uses phases π - π = 0.
        let inv3 = &r2(0.506 * PI, 0.0).unwrap() * &r1(0.191 * PI, 0.0).unwrap();
        assert!(u_inverse(3).unwrap().distance(&inv3) < 1e-15);
    }

    #[test]
    fn table_unitaries_and_inverses() {
        for i in 1..=5 {
            let u = u_table(i).unwrap();
            assert!(u.unitarity_error() < 1e-10);
            let inv = u_inverse(i).unwrap();
            assert!(inv.distance(&u.adjoint()) < 1e-10);
            assert!((&inv * &u).distance(&Unitary3::identity()) < 1e-10);
        }
    }

    #[test]
    fn table_axes_form_near_pentagram() {
        let v: Vec<Ket> = (1..=5).map(|i| ROTATION_TABLE[i - 1].axis()).collect();
        for i in 0..5 {
            assert!(overlap(&v[i], &v[(i + 1) % 5]) <= 0.02, "axes {i},{}", i + 1);
            // |<v_i|3>|^2 close to 1/sqrt(5).
            assert!((v[i][2].norm_sqr() - 1.0 / 5f64.sqrt()).abs() < 2e-3);
        }
    }

    #[test]
    fn pentagram_angles_reproduce_axes() {
        let p = crate::kcbs::pentagram_vectors();
        for (k, a) in pentagram_angles().iter().enumerate() {
            assert!((overlap(&a.axis(), &p.vectors[k]) - 1.0).abs() < 1e-12);
            assert!(a.inverse_unitary().distance(&a.unitary().adjoint()) < 1e-12);
        }
    }

    #[test]
    fn bright_state_always_fluoresces() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let m = project_measure(&QutritState::basis(3), &mut rng).unwrap();
            assert!(m.fluorescent);
            assert_eq!(m.value, Outcome::Minus);
            assert_eq!(m.post_state, QutritState::basis(3));
        }
    }

    #[test]
    fn dark_superposition_keeps_coherence() {
        let s = 0.5f64.sqrt();
        let psi = ket([c(s), C64::new(0.0, s), c(0.0)]);
        let state = QutritState::pure(psi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = project_measure(&state, &mut rng).unwrap();
        assert!(!m.fluorescent);
        assert_eq!(m.value, Outcome::Plus);
        let QutritState::Pure(post) = m.post_state else {
            panic!("pure input must stay pure")
        };
        assert!((overlap(&post, &psi) - 1.0).abs() < 1e-12);

        let mixed = QutritState::mixed(psi * psi.adjoint()).unwrap();
        let m = project_measure(&mixed, &mut rng).unwrap();
        assert!((m.post_state.purity() - 1.0).abs() < 1e-12);
        let rho = m.post_state.density();
        assert!((rho[(0, 1)] - (psi * psi.adjoint())[(0, 1)]).norm() < 1e-12);
    }

    #[test]
    fn branch_frequency_matches_population() {
        let s = 0.5f64.sqrt();
        let state = QutritState::pure(ket([c(s), c(0.0), c(s)])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let bright = (0..n)
            .filter(|_| project_measure(&state, &mut rng).unwrap().fluorescent)
            .count() as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((bright / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(QutritState::pure(ket([c(1.0), c(1.0), c(0.0)])).is_err());
        let mut rho = Mat3::identity() / c(3.0);
        rho[(0, 1)] = c(0.2);
        assert!(QutritState::mixed(rho).is_err());
        let neg = Mat3::from_diagonal(&Vector3::new(c(1.2), c(-0.2), c(0.0)));
        assert!(QutritState::mixed(neg).is_err());
        let bad = QutritState::Pure(ket([c(2.0), c(0.0), c(0.0)]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            project_measure(&bad, &mut rng),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn noiseless_marginal_on_bright_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 1_000_000;
        for i in [1, 3] {
            let sum: i64 = (0..n)
                .map(|_| {
                    measure_observable(&QutritState::basis(3), i, &NoiseModel::NOISELESS, &mut rng)
                        .unwrap()
                        .value
                        .value() as i64
                })
                .sum();
            let mean = sum as f64 / n as f64;
            assert!((mean - 0.1056).abs() < 0.003, "A_{i}: {mean}");
        }
    }

    #[test]
    fn noiseless_measurement_is_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let angles = Geometry::Table.angles(2).unwrap();
        for _ in 0..2000 {
            let first = measure_with_angles(QutritState::basis(3), &angles, &NoiseModel::NOISELESS, &mut rng);
            let second = measure_with_angles(first.post_state.clone(), &angles, &NoiseModel::NOISELESS, &mut rng);
            assert_eq!(first.value, second.value);
        }
    }

    #[test]
    fn paper_like_marginals_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 50_000;
        for i in 1..=5 {
            let angles = Geometry::Table.angles(i).unwrap();
            let sum: i64 = (0..n)
                .map(|_| {
                    measure_with_angles(QutritState::basis(3), &angles, &NoiseModel::PAPER_LIKE, &mut rng)
                        .value
                        .value() as i64
                })
                .sum();
            let mean = sum as f64 / n as f64;
            assert!((0.05..=0.13).contains(&mean), "A_{i}: {mean}");
        }
    }

    #[test]
    fn noise_validation() {
        let mut n = NoiseModel::PAPER_LIKE;
        assert!(n.validate().is_ok());
        n.p_dark_flip = 1.5;
        assert!(n.validate().is_err());
        n = NoiseModel {
            angle_jitter_sd: -0.1,
            ..NoiseModel::NOISELESS
        };
        assert!(n.validate().is_err());
    }

    #[test]
    fn drift_stays_bounded_over_long_sequences() {
        let noise = NoiseModel {
            p_depolarize: 0.01,
            dephase_12: 0.05,
            angle_jitter_sd: 0.01,
            ..NoiseModel::PAPER_LIKE
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut state = QutritState::basis(3);
        for k in 0..1000 {
            let angles = Geometry::Table.angles(k % 5 + 1).unwrap();
            state = measure_with_angles(state, &angles, &noise, &mut rng).post_state;
        }
        state.validate().unwrap();
    }

    proptest! {
        #[test]
        fn any_rotation_is_unitary(t1 in -10.0f64..10.0, p1 in -10.0f64..10.0, t2 in -10.0f64..10.0, p2 in -10.0f64..10.0) {
            let u = &r1(t1, p1).unwrap() * &r2(t2, p2).unwrap();
            prop_assert!(u.unitarity_error() < 1e-10);
        }

        #[test]
        fn inverse_sequence_restores_random_state(
            re in proptest::array::uniform3(-1.0f64..1.0),
            im in proptest::array::uniform3(-1.0f64..1.0),
            i in 1usize..=5,
        ) {
            let raw = ket(std::array::from_fn(|k| C64::new(re[k], im[k])));
            prop_assume!(raw.norm() > 1e-3);
            let psi = raw / c(raw.norm());
            let back = u_inverse(i).unwrap().apply(&u_table(i).unwrap().apply(&psi));
            prop_assert!((back - psi).norm() < 1e-10);
        }

        #[test]
        fn noisy_post_states_stay_valid(seed in any::<u64>(), pd in 0.0f64..0.3, ph in 0.0f64..1.0, sd in 0.0f64..0.2) {
            let noise = NoiseModel { p_depolarize: pd, p_dark_flip: 0.1, p_bright_flip: 0.05, dephase_12: ph, angle_jitter_sd: sd };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = QutritState::basis(3);
            for i in [1, 2, 3, 4, 5] {
                state = measure_with_angles(state, &Geometry::Table.angles(i).unwrap(), &noise, &mut rng).post_state;
                prop_assert!(state.validate().is_ok());
            }
        }
    }
}
