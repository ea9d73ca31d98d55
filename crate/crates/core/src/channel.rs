//! Lossy channels between each party and the measurement station.
//!
//! All transmittances are linear and already include the detector
//! efficiency of the arm. The dB helpers treat a positive dB value as
//! attenuation.

use crate::error::{Error, Result};
use crate::scalar::{db_to_linear, Scalar};

/// Fiber attenuation used when a config gives distances in km.
pub const DEFAULT_ALPHA_DB_PER_KM: f64 = 0.2;

/// `eta_d * 10^(-alpha * L / 10)`.
pub fn distance_to_transmittance<T: Scalar>(length_km: T, alpha_db_per_km: T, eta_d: T) -> T {
    eta_d * db_to_linear(alpha_db_per_km * length_km)
}

fn check_eta<T: Scalar>(name: &str, eta: T) -> Result<()> {
    if eta >= T::zero() && eta <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidChannel(format!("{name} = {eta} is outside [0, 1]")))
    }
}

/// Fixed transmittances for both arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableChannel<T> {
    pub eta_a: T,
    pub eta_b: T,
}

impl<T: Scalar> StableChannel<T> {
    pub fn new(eta_a: T, eta_b: T) -> Result<Self> {
        check_eta("eta_a", eta_a)?;
        check_eta("eta_b", eta_b)?;
        Ok(Self { eta_a, eta_b })
    }

    /// Both arms specified as fiber lengths.
    pub fn from_distances(l_a_km: T, l_b_km: T, alpha_db_per_km: T, eta_d: T) -> Result<Self> {
        Self::new(
            distance_to_transmittance(l_a_km, alpha_db_per_km, eta_d),
            distance_to_transmittance(l_b_km, alpha_db_per_km, eta_d),
        )
    }

    pub fn swapped(&self) -> Self {
        Self {
            eta_a: self.eta_b,
            eta_b: self.eta_a,
        }
    }
}

/// Discrete transmittance distribution per arm: `(eta, probability)` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct UnstableChannel<T> {
    levels_a: Vec<(T, T)>,
    levels_b: Vec<(T, T)>,
}

impl<T: Scalar> UnstableChannel<T> {
    pub fn new(levels_a: Vec<(T, T)>, levels_b: Vec<(T, T)>) -> Result<Self> {
        for (arm, levels) in [("A", &levels_a), ("B", &levels_b)] {
            if levels.is_empty() {
                return Err(Error::InvalidChannel(format!("arm {arm} has no levels")));
            }
            let mut total = T::zero();
            for &(eta, p) in levels.iter() {
                check_eta("level transmittance", eta)?;
                if !(p >= T::zero() && p <= T::one()) {
                    return Err(Error::InvalidChannel(format!(
                        "arm {arm}: level probability {p} is outside [0, 1]"
                    )));
                }
                total = total + p;
            }
            let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
            if (total - T::one()).abs() > tol {
                return Err(Error::InvalidChannel(format!(
                    "arm {arm}: level probabilities sum to {total}, not 1"
                )));
            }
        }
        Ok(Self { levels_a, levels_b })
    }

    /// Levels given as positive dB losses; `eta_d` multiplies every level.
    pub fn from_db_levels(levels_a: &[(T, T)], levels_b: &[(T, T)], eta_d: T) -> Result<Self> {
        let conv = |levels: &[(T, T)]| -> Vec<(T, T)> {
            levels.iter().map(|&(db, p)| (eta_d * db_to_linear(db), p)).collect()
        };
        Self::new(conv(levels_a), conv(levels_b))
    }

    pub fn levels_a(&self) -> &[(T, T)] {
        &self.levels_a
    }

    pub fn levels_b(&self) -> &[(T, T)] {
        &self.levels_b
    }

    pub fn swapped(&self) -> Self {
        Self {
            levels_a: self.levels_b.clone(),
            levels_b: self.levels_a.clone(),
        }
    }
}

/// Threshold ratio `delta` and extra attenuation `eta_prime`, both linear.
///
/// The stronger arm is attenuated by `eta_prime` when its transmittance
/// exceeds the weaker one by more than a factor `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationPolicy<T> {
    pub delta: T,
    pub eta_prime: T,
}

impl<T: Scalar> CompensationPolicy<T> {
    pub fn new(delta: T, eta_prime: T) -> Result<Self> {
        if !(delta > T::zero()) {
            return Err(Error::InvalidChannel(format!(
                "compensation threshold {delta} must be > 0"
            )));
        }
        if !(eta_prime > T::zero() && eta_prime <= T::one()) {
            return Err(Error::InvalidChannel(format!(
                "extra attenuation {eta_prime} is outside (0, 1]"
            )));
        }
        Ok(Self { delta, eta_prime })
    }

    /// Never triggers.
    pub fn disabled() -> Self {
        Self {
            delta: T::infinity(),
            eta_prime: T::one(),
        }
    }

    /// From table-style dB values.
    ///
    /// `delta_db` is a (usually negative) bound on `loss_A - loss_B`:
    /// Alice is attenuated when `loss_A - loss_B < delta_db`, i.e. when
    /// `eta_a / eta_b > 10^(-delta_db/10)`. Bob symmetrically.
    /// `eta_prime_db` is a positive attenuation.
    pub fn from_db(delta_db: T, eta_prime_db: T) -> Result<Self> {
        if eta_prime_db < T::zero() {
            return Err(Error::InvalidChannel(format!(
                "extra attenuation {eta_prime_db} dB must be >= 0"
            )));
        }
        Self::new(db_to_linear(delta_db), db_to_linear(eta_prime_db))
    }
}

/// One joint channel realization with its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmittancePair<T> {
    pub eta_a: T,
    pub eta_b: T,
    pub weight: T,
}

impl<T: Scalar> TransmittancePair<T> {
    pub fn certain(eta_a: T, eta_b: T) -> Self {
        Self {
            eta_a,
            eta_b,
            weight: T::one(),
        }
    }
}

/// Either kind of channel.
#[derive(Debug, Clone, PartialEq)]
pub enum Channel<T> {
    Stable(StableChannel<T>),
    Unstable(UnstableChannel<T>),
}

impl<T: Scalar> Channel<T> {
    pub fn pairs(&self) -> Vec<TransmittancePair<T>> {
        match self {
            Channel::Stable(c) => vec![TransmittancePair::certain(c.eta_a, c.eta_b)],
            Channel::Unstable(c) => pair_distribution(c),
        }
    }

    pub fn swapped(&self) -> Self {
        match self {
            Channel::Stable(c) => Channel::Stable(c.swapped()),
            Channel::Unstable(c) => Channel::Unstable(c.swapped()),
        }
    }
}

/// Cartesian product of the two arms' levels, weights multiplied.
pub fn pair_distribution<T: Scalar>(channel: &UnstableChannel<T>) -> Vec<TransmittancePair<T>> {
    let mut pairs = Vec::with_capacity(channel.levels_a.len() * channel.levels_b.len());
    for &(eta_a, p_a) in &channel.levels_a {
        for &(eta_b, p_b) in &channel.levels_b {
            pairs.push(TransmittancePair {
                eta_a,
                eta_b,
                weight: p_a * p_b,
            });
        }
    }
    pairs
}

/// Attenuates the stronger arm of `pair` when the ratio exceeds the threshold.
pub fn apply_compensation<T: Scalar>(
    pair: TransmittancePair<T>,
    policy: &CompensationPolicy<T>,
) -> TransmittancePair<T> {
    let TransmittancePair {
        eta_a,
        eta_b,
        weight,
    } = pair;
    // ratios compared as products so a zero arm never divides
    if eta_a > policy.delta * eta_b {
        TransmittancePair {
            eta_a: eta_a * policy.eta_prime,
            eta_b,
            weight,
        }
    } else if eta_b > policy.delta * eta_a {
        TransmittancePair {
            eta_a,
            eta_b: eta_b * policy.eta_prime,
            weight,
        }
    } else {
        pair
    }
}

/// Applies the policy to every pair.
pub fn compensate_all<T: Scalar>(
    pairs: &[TransmittancePair<T>],
    policy: &CompensationPolicy<T>,
) -> Vec<TransmittancePair<T>> {
    pairs.iter().map(|&p| apply_compensation(p, policy)).collect()
}
