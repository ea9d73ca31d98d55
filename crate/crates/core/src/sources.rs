//! Four-intensity source sets (vacuum `o`, X-basis decoys `x`, `y`, Z-basis
//! signal `z`) described by their photon-number distributions.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default photon-number cutoff.
pub const DEFAULT_K_MAX: usize = 30;

/// Maximum tail mass `1 - sum(a_k)` a truncated distribution may drop.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// Relative slack used when comparing ratio chains.
const RATIO_TOLERANCE: f64 = 1e-9;

/// One of the four sources each party switches between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    O,
    X,
    Y,
    Z,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::O, Source::X, Source::Y, Source::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Source::O => "o",
            Source::X => "x",
            Source::Y => "y",
            Source::Z => "z",
        }
    }
}

/// Diagonal photon-number state `sum_k a_k |k><k|`, truncated at `K_max`.
///
/// The tail beyond the cutoff is dropped, never renormalized: `a_1` and `a_2`
/// enter the decoy bounds linearly and must keep their exact values.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution<T> {
    intensity: T,
    coefficients: Vec<T>,
}

impl<T: Scalar> PhotonDistribution<T> {
    /// Phase-randomized weak coherent state: `a_k = e^{-mu} mu^k / k!`.
    pub fn poisson(intensity: T, k_max: usize) -> Result<Self> {
        if !(intensity >= T::zero()) || !intensity.is_finite() {
            return Err(Error::InvalidIntensity(format!(
                "mean photon number {intensity} must be finite and >= 0"
            )));
        }
        let mut coefficients = Vec::with_capacity(k_max + 1);
        let mut term = (-intensity).exp();
        coefficients.push(term);
        for k in 1..=k_max {
            term = term * intensity / T::lit(k as f64);
            coefficients.push(term);
        }
        Self::from_coefficients(intensity, coefficients)
    }

    /// The vacuum state (`a_0 = 1`).
    pub fn vacuum(k_max: usize) -> Self {
        let mut coefficients = vec![T::zero(); k_max + 1];
        coefficients[0] = T::one();
        Self {
            intensity: T::zero(),
            coefficients,
        }
    }

    /// General (non-Poisson) distribution. `intensity` is a nominal label.
    pub fn from_coefficients(intensity: T, coefficients: Vec<T>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidDistribution("no coefficients".into()));
        }
        let mut total = T::zero();
        for (k, &a) in coefficients.iter().enumerate() {
            if !(a >= T::zero() && a <= T::one()) {
                return Err(Error::InvalidDistribution(format!(
                    "a_{k} = {a} is outside [0, 1]"
                )));
            }
            total = total + a;
        }
        let slack = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        if total > T::one() + slack {
            return Err(Error::InvalidDistribution(format!(
                "coefficients sum to {total} > 1"
            )));
        }
        let tail_tol = T::lit(TAIL_TOLERANCE).max(T::epsilon() * T::lit(64.0));
        if T::one() - total > tail_tol {
            return Err(Error::InvalidDistribution(format!(
                "truncation drops {} of the probability mass (tolerance {TAIL_TOLERANCE:e}); raise K_max",
                T::one() - total
            )));
        }
        Ok(Self {
            intensity,
            coefficients,
        })
    }

    pub fn intensity(&self) -> T {
        self.intensity
    }

    pub fn k_max(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    /// `a_k`, zero beyond the cutoff.
    #[inline]
    pub fn a(&self, k: usize) -> T {
        self.coefficients.get(k).copied().unwrap_or_else(T::zero)
    }
}

/// One party's four sources and their usage probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec<T> {
    pub(crate) x: PhotonDistribution<T>,
    pub(crate) y: PhotonDistribution<T>,
    pub(crate) z: PhotonDistribution<T>,
    pub(crate) o: PhotonDistribution<T>,
    pub(crate) p_x: T,
    pub(crate) p_y: T,
    pub(crate) p_z: T,
    pub(crate) p_o: T,
}

fn validate_probabilities<T: Scalar>(p_x: T, p_y: T, p_z: T) -> Result<T> {
    for (name, p) in [("p_x", p_x), ("p_y", p_y), ("p_z", p_z)] {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::InvalidProbability(format!("{name} = {p} is outside [0, 1]")));
        }
    }
    let sum = p_x + p_y + p_z;
    if sum > T::one() + T::lit(1e-12) {
        return Err(Error::InvalidProbability(format!(
            "p_x + p_y + p_z = {sum} exceeds 1"
        )));
    }
    Ok((T::one() - sum).max(T::zero()))
}

impl<T: Scalar> SourceSpec<T> {
    /// Assembles a source set from arbitrary distributions.
    pub fn new(
        x: PhotonDistribution<T>,
        y: PhotonDistribution<T>,
        z: PhotonDistribution<T>,
        p_x: T,
        p_y: T,
        p_z: T,
    ) -> Result<Self> {
        let p_o = validate_probabilities(p_x, p_y, p_z)?;
        if !(x.intensity() > T::zero()) {
            return Err(Error::InvalidIntensity(format!(
                "mu_x = {} must be > 0",
                x.intensity()
            )));
        }
        if !(x.intensity() < y.intensity()) {
            return Err(Error::InvalidIntensityOrder {
                mu_x: x.intensity().to_f64_lossy(),
                mu_y: y.intensity().to_f64_lossy(),
            });
        }
        let k_max = x.k_max().max(y.k_max()).max(z.k_max());
        Ok(Self {
            x,
            y,
            z,
            o: PhotonDistribution::vacuum(k_max),
            p_x,
            p_y,
            p_z,
            p_o,
        })
    }

    pub fn distribution(&self, source: Source) -> &PhotonDistribution<T> {
        match source {
            Source::O => &self.o,
            Source::X => &self.x,
            Source::Y => &self.y,
            Source::Z => &self.z,
        }
    }

    pub fn probability(&self, source: Source) -> T {
        match source {
            Source::O => self.p_o,
            Source::X => self.p_x,
            Source::Y => self.p_y,
            Source::Z => self.p_z,
        }
    }

    /// Photon-number coefficient of `source` at `k`.
    #[inline]
    pub fn a(&self, source: Source, k: usize) -> T {
        self.distribution(source).a(k)
    }

    pub fn k_max(&self) -> usize {
        self.x.k_max().max(self.y.k_max()).max(self.z.k_max())
    }
}

/// Builds a weak-coherent-state source set truncated at `k_max`.
pub fn build_wcs_source<T: Scalar>(
    mu_x: T,
    mu_y: T,
    mu_z: T,
    p_x: T,
    p_y: T,
    p_z: T,
    k_max: usize,
) -> Result<SourceSpec<T>> {
    validate_probabilities(p_x, p_y, p_z)?;
    if !(mu_x > T::zero()) || !(mu_z > T::zero()) {
        return Err(Error::InvalidIntensity(format!(
            "intensities must be > 0 (mu_x = {mu_x}, mu_z = {mu_z})"
        )));
    }
    if !(mu_x < mu_y) {
        return Err(Error::InvalidIntensityOrder {
            mu_x: mu_x.to_f64_lossy(),
            mu_y: mu_y.to_f64_lossy(),
        });
    }
    SourceSpec::new(
        PhotonDistribution::poisson(mu_x, k_max)?,
        PhotonDistribution::poisson(mu_y, k_max)?,
        PhotonDistribution::poisson(mu_z, k_max)?,
        p_x,
        p_y,
        p_z,
    )
}

fn ratio_chain_holds<T: Scalar>(spec: &SourceSpec<T>) -> bool {
    let x = &spec.x;
    let y = &spec.y;
    let tol = T::lit(RATIO_TOLERANCE);
    // r_k = y_k / x_k compared by cross-multiplication so zero tails are harmless.
    let ge = |lhs: T, rhs: T| lhs >= rhs - tol * rhs.abs();
    if !ge(y.a(2) * x.a(1), y.a(1) * x.a(2)) {
        return false;
    }
    let k_max = x.k_max().max(y.k_max());
    (3..=k_max).all(|k| ge(y.a(k) * x.a(2), y.a(2) * x.a(k)))
}

/// Whether both parties' `x`/`y` distributions satisfy the ratio chain
/// `y_k/x_k >= y_2/x_2 >= y_1/x_1` for every `k` in `3..=K_max`.
pub fn check_decoy_conditions<T: Scalar>(alice: &SourceSpec<T>, bob: &SourceSpec<T>) -> bool {
    ratio_chain_holds(alice) && ratio_chain_holds(bob)
}

/// `K_a = a_y1 a_x2 / (a_x1 a_y2)` and the matching `K_b`.
pub fn ka_kb<T: Scalar>(alice: &SourceSpec<T>, bob: &SourceSpec<T>) -> Result<(T, T)> {
    let ratio = |s: &SourceSpec<T>, who: [&'static str; 2]| -> Result<T> {
        let (x1, x2, y1, y2) = (s.x.a(1), s.x.a(2), s.y.a(1), s.y.a(2));
        if x1 == T::zero() {
            return Err(Error::DivisionByZero(who[0]));
        }
        if y2 == T::zero() {
            return Err(Error::DivisionByZero(who[1]));
        }
        Ok(y1 * x2 / (x1 * y2))
    };
    Ok((ratio(alice, ["a_x1", "a_y2"])?, ratio(bob, ["b_x1", "b_y2"])?))
}

/// The twelve free source parameters, Alice's six followed by Bob's:
/// `mu_x, mu_y, mu_z, p_x, p_y, p_z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector<T>(pub [T; 12]);

impl<T: Scalar> ParamVector<T> {
    pub const LEN: usize = 12;
    pub const NAMES: [&'static str; 12] = [
        "mu_ax", "mu_ay", "mu_az", "p_ax", "p_ay", "p_az", "mu_bx", "mu_by", "mu_bz", "p_bx",
        "p_by", "p_bz",
    ];

    pub fn new(alice: [T; 6], bob: [T; 6]) -> Self {
        let mut v = [T::zero(); 12];
        v[..6].copy_from_slice(&alice);
        v[6..].copy_from_slice(&bob);
        Self(v)
    }

    /// Same six values for both parties.
    pub fn symmetric(party: [T; 6]) -> Self {
        Self::new(party, party)
    }

    pub fn alice(&self) -> &[T] {
        &self.0[..6]
    }

    pub fn bob(&self) -> &[T] {
        &self.0[6..]
    }

    /// Exchanges Alice's and Bob's halves.
    pub fn swapped(&self) -> Self {
        let mut v = [T::zero(); 12];
        v[..6].copy_from_slice(self.bob());
        v[6..].copy_from_slice(self.alice());
        Self(v)
    }

    fn party_source(half: &[T], k_max: usize) -> Result<SourceSpec<T>> {
        build_wcs_source(half[0], half[1], half[2], half[3], half[4], half[5], k_max)
    }

    pub fn alice_source(&self, k_max: usize) -> Result<SourceSpec<T>> {
        Self::party_source(self.alice(), k_max)
    }

    pub fn bob_source(&self, k_max: usize) -> Result<SourceSpec<T>> {
        Self::party_source(self.bob(), k_max)
    }

    /// Checks the raw invariants: intensities in `(0, mu_cap]`, `mu_x < mu_y`,
    /// probabilities non-negative with sum at most one, per party.
    pub fn validate(&self, mu_cap: T) -> Result<()> {
        for half in [self.alice(), self.bob()] {
            for &mu in &half[..3] {
                if !(mu > T::zero() && mu <= mu_cap) {
                    return Err(Error::InvalidIntensity(format!(
                        "intensity {mu} is outside (0, {mu_cap}]"
                    )));
                }
            }
            if !(half[0] < half[1]) {
                return Err(Error::InvalidIntensityOrder {
                    mu_x: half[0].to_f64_lossy(),
                    mu_y: half[1].to_f64_lossy(),
                });
            }
            validate_probabilities(half[3], half[4], half[5])?;
        }
        Ok(())
    }
}

impl<T> std::ops::Index<usize> for ParamVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> std::ops::IndexMut<usize> for ParamVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}
