//! Secure key rate from source-pair statistics.
//!
//! The single-photon yield lower bound and phase-flip error upper bound use
//! the four-intensity decoy estimator; the finite-size path replaces every
//! mean value by its worst case inside a standard-error interval and scans
//! the shared vacuum term `H` over its interval, keeping the minimum rate.

use crate::bsm::ObservedStats;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sources::{ka_kb, Source, SourceSpec};

use Source::{O, X, Y, Z};

/// Grid points of the `H` scan before golden-section refinement.
pub const H_SCAN_POINTS: usize = 201;
/// Refinement stops when the bracket is below this fraction of `H_upper - H_lower`.
pub const H_SCAN_REL_TOL: f64 = 1e-4;

/// Logarithm base of the binary entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropyBase {
    #[default]
    Two,
    Natural,
}

/// `H(p) = -p log p - (1-p) log(1-p)`, with `H(0) = H(1) = 0`.
pub fn binary_entropy<T: Scalar>(p: T, base: EntropyBase) -> Result<T> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::OutOfRange {
            name: "entropy argument",
            value: p.to_f64_lossy(),
            range: "[0, 1]",
        });
    }
    Ok(entropy_unchecked(p, base))
}

#[inline]
fn entropy_unchecked<T: Scalar>(p: T, base: EntropyBase) -> T {
    if p <= T::zero() || p >= T::one() {
        return T::zero();
    }
    let q = T::one() - p;
    let nats = -p * p.ln() - q * q.ln();
    match base {
        EntropyBase::Natural => nats,
        EntropyBase::Two => nats / T::lit(std::f64::consts::LN_2),
    }
}

/// Statistical-fluctuation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationConfig<T> {
    /// Standard-error multiplier.
    pub gamma: T,
    /// Failure probability the multiplier corresponds to; informational.
    pub epsilon: T,
    /// Worst-case additive combinations as single sets instead of each
    /// source pair separately.
    pub joint: bool,
}

impl<T: Scalar> Default for FluctuationConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(5.3),
            epsilon: T::lit(1e-7),
            joint: true,
        }
    }
}

impl<T: Scalar> FluctuationConfig<T> {
    pub fn new(gamma: T, epsilon: T, joint: bool) -> Result<Self> {
        if !(gamma > T::zero()) {
            return Err(Error::OutOfRange {
                name: "gamma",
                value: gamma.to_f64_lossy(),
                range: "(0, inf)",
            });
        }
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(Error::OutOfRange {
                name: "epsilon",
                value: epsilon.to_f64_lossy(),
                range: "(0, 1)",
            });
        }
        Ok(Self { gamma, epsilon, joint })
    }
}

/// Interval `[S - gamma sqrt(S/N), S + gamma sqrt(S/N)]` for the mean of an
/// observed yield `S` over `N` pulse pairs, clamped to `[0, 1]`.
pub fn fluctuation_bounds<T: Scalar>(s_obs: T, n: T, cfg: &FluctuationConfig<T>) -> Result<(T, T)> {
    if !(n > T::zero()) {
        return Err(Error::EmptySet);
    }
    let delta = cfg.gamma * (s_obs.max(T::zero()) / n).sqrt();
    Ok((
        (s_obs - delta).clamp_to(T::zero(), T::one()),
        (s_obs + delta).clamp_to(T::zero(), T::one()),
    ))
}

/// Which party's `k = 1, 2` coefficients play the role of Alice's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `K_a <= K_b`.
    Normal,
    /// `K_a > K_b`: Alice's and Bob's `x`, `y` coefficients for `k = 1, 2` exchanged.
    Swapped,
}

/// A value that had to be clamped while building a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    S11Lower,
    S11Upper,
    E11Lower,
    E11Upper,
    KeyRate,
}

/// Bound coefficients after the branch choice. The `k = 0` entries are never
/// exchanged.
#[derive(Debug, Clone, Copy)]
struct Coefficients<T> {
    branch: Branch,
    ax1: T,
    ay1: T,
    bx1: T,
    bx2: T,
    by1: T,
    by2: T,
    ax0: T,
    ay0: T,
    bx0: T,
    by0: T,
    denominator: T,
}

impl<T: Scalar> Coefficients<T> {
    fn new(alice: &SourceSpec<T>, bob: &SourceSpec<T>) -> Result<Self> {
        let (ka, kb) = ka_kb(alice, bob)?;
        let branch = if ka > kb { Branch::Swapped } else { Branch::Normal };
        let (a, b) = match branch {
            Branch::Normal => (alice, bob),
            Branch::Swapped => (bob, alice),
        };
        let mut c = Self {
            branch,
            ax1: a.a(X, 1),
            ay1: a.a(Y, 1),
            bx1: b.a(X, 1),
            bx2: b.a(X, 2),
            by1: b.a(Y, 1),
            by2: b.a(Y, 2),
            ax0: alice.a(X, 0),
            ay0: alice.a(Y, 0),
            bx0: bob.a(X, 0),
            by0: bob.a(Y, 0),
            denominator: T::zero(),
        };
        let gap = c.bx1 * c.by2 - c.bx2 * c.by1;
        let scale = (c.bx1 * c.by2).abs().max(T::min_positive_value());
        if !(gap > T::epsilon() * T::lit(8.0) * scale) {
            return Err(Error::DegenerateDenominator);
        }
        c.denominator = c.ax1 * c.ay1 * gap;
        if !(c.denominator > T::zero()) {
            return Err(Error::DegenerateDenominator);
        }
        Ok(c)
    }

    fn s_plus_terms(&self) -> [(T, Source, Source); 3] {
        [
            (self.ay1 * self.by2, X, X),
            (self.ax1 * self.bx2 * self.ay0, O, Y),
            (self.ax1 * self.bx2 * self.by0, Y, O),
        ]
    }

    fn s_minus_terms(&self) -> [(T, Source, Source); 2] {
        [
            (self.ax1 * self.bx2, Y, Y),
            (self.ax1 * self.bx2 * self.ay0 * self.by0, O, O),
        ]
    }

    fn h_terms(&self) -> [(T, Source, Source); 3] {
        [
            (self.ax0, O, X),
            (self.bx0, X, O),
            (-self.ax0 * self.bx0, O, O),
        ]
    }

    fn h_weight(&self) -> T {
        self.ay1 * self.by2
    }

    fn e11_denominator(&self) -> T {
        self.ax1 * self.bx1
    }
}

fn combine<T: Scalar, const N: usize>(terms: &[(T, Source, Source); N], stats: &ObservedStats<T>) -> T {
    terms
        .iter()
        .fold(T::zero(), |acc, &(c, l, r)| acc + c * stats.yield_of(l, r))
}

/// Lower bound on the single-photon-pair yield from mean yields.
pub fn s11_lower_bound<T: Scalar>(
    stats: &ObservedStats<T>,
    alice: &SourceSpec<T>,
    bob: &SourceSpec<T>,
) -> Result<(T, Branch)> {
    let c = Coefficients::new(alice, bob)?;
    let s_plus = combine(&c.s_plus_terms(), stats);
    let s_minus = combine(&c.s_minus_terms(), stats);
    let h = combine(&c.h_terms(), stats);
    let raw = (s_plus - s_minus - c.h_weight() * h) / c.denominator;
    Ok((raw.clamp_to(T::zero(), T::one()), c.branch))
}

/// The shared vacuum term `H = a_x0 S_ox + b_x0 S_xo - a_x0 b_x0 S_oo`.
pub fn h_term<T: Scalar>(stats: &ObservedStats<T>, alice: &SourceSpec<T>, bob: &SourceSpec<T>) -> T {
    let (ax0, bx0) = (alice.a(X, 0), bob.a(X, 0));
    ax0 * stats.yield_of(O, X) + bx0 * stats.yield_of(X, O) - ax0 * bx0 * stats.yield_of(O, O)
}

/// Upper bound on the single-photon phase-flip error rate, clamped to
/// `[0, 0.5]`.
pub fn e11ph_upper_bound<T: Scalar>(
    t_xx: T,
    h: T,
    s11_lower: T,
    alice: &SourceSpec<T>,
    bob: &SourceSpec<T>,
) -> Result<T> {
    if !(s11_lower > T::zero()) {
        return Err(Error::ZeroS11);
    }
    let denom = alice.a(X, 1) * bob.a(X, 1) * s11_lower;
    if !(denom > T::zero()) {
        return Err(Error::DivisionByZero("a_x1 * b_x1"));
    }
    let raw = (t_xx - h / T::lit(2.0)) / denom;
    Ok(raw.clamp_to(T::zero(), T::lit(0.5)))
}

/// Everything computed on the way to the key rate.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateReport<T> {
    pub branch: Branch,
    /// `S_+` as used (lower bound in the finite-size path).
    pub s_plus: T,
    /// `S_-` as used (upper bound in the finite-size path).
    pub s_minus: T,
    /// `H` from the observed yields.
    pub h_observed: T,
    pub h_lower: T,
    pub h_upper: T,
    /// `H` at which the rate is minimal.
    pub h_argmin: T,
    /// `T_xx` as used (upper bound in the finite-size path).
    pub t_xx: T,
    pub s11_lower: T,
    pub e11ph_upper: T,
    pub s_zz: T,
    pub e_zz: T,
    pub r_per_pair: T,
    pub clamps: Vec<Clamp>,
}

/// Fixed inputs of `R(H)`.
struct RateFunction<'a, T> {
    c: &'a Coefficients<T>,
    s_plus: T,
    s_minus: T,
    t_xx: T,
    prefactor: T,
    signal: T,
    ec_cost: T,
    base: EntropyBase,
}

struct RatePoint<T> {
    s11: T,
    e11: T,
    rate: T,
    clamps: Vec<Clamp>,
}

impl<T: Scalar> RateFunction<'_, T> {
    fn eval(&self, h: T) -> RatePoint<T> {
        let mut clamps = Vec::new();
        let raw = (self.s_plus - self.s_minus - self.c.h_weight() * h) / self.c.denominator;
        let s11 = raw.clamp_to(T::zero(), T::one());
        if raw < T::zero() || raw.is_nan() {
            clamps.push(Clamp::S11Lower);
        } else if raw > T::one() {
            clamps.push(Clamp::S11Upper);
        }
        let e11 = if s11 > T::zero() {
            let raw_e = (self.t_xx - h / T::lit(2.0)) / (self.c.e11_denominator() * s11);
            if raw_e < T::zero() {
                clamps.push(Clamp::E11Lower);
            } else if raw_e > T::lit(0.5) {
                clamps.push(Clamp::E11Upper);
            }
            raw_e.clamp_to(T::zero(), T::lit(0.5))
        } else {
            T::lit(0.5)
        };
        let privacy = if s11 > T::zero() {
            self.signal * s11 * (T::one() - entropy_unchecked(e11, self.base))
        } else {
            T::zero()
        };
        RatePoint {
            s11,
            e11,
            rate: self.prefactor * (privacy - self.ec_cost),
            clamps,
        }
    }
}

fn rate_function<'a, T: Scalar>(
    c: &'a Coefficients<T>,
    stats: &ObservedStats<T>,
    alice: &SourceSpec<T>,
    bob: &SourceSpec<T>,
    f: T,
    base: EntropyBase,
    (s_plus, s_minus, t_xx): (T, T, T),
) -> RateFunction<'a, T> {
    let zz = stats.get(Z, Z);
    let e_zz = zz.error_rate.clamp_to(T::zero(), T::one());
    RateFunction {
        c,
        s_plus,
        s_minus,
        t_xx,
        prefactor: alice.probability(Z) * bob.probability(Z),
        signal: alice.a(Z, 1) * bob.a(Z, 1),
        ec_cost: f * zz.yield_ * entropy_unchecked(e_zz, base),
        base,
    }
}

fn finish<T: Scalar>(
    c: &Coefficients<T>,
    rf: &RateFunction<'_, T>,
    stats: &ObservedStats<T>,
    h_observed: T,
    (h_lower, h_upper, h_argmin): (T, T, T),
) -> KeyRateReport<T> {
    let point = rf.eval(h_argmin);
    let mut clamps = point.clamps;
    let r = if point.rate > T::zero() {
        point.rate
    } else {
        clamps.push(Clamp::KeyRate);
        T::zero()
    };
    let zz = stats.get(Z, Z);
    KeyRateReport {
        branch: c.branch,
        s_plus: rf.s_plus,
        s_minus: rf.s_minus,
        h_observed,
        h_lower,
        h_upper,
        h_argmin,
        t_xx: rf.t_xx,
        s11_lower: point.s11,
        e11ph_upper: point.e11,
        s_zz: zz.yield_,
        e_zz: zz.error_rate,
        r_per_pair: r,
        clamps,
    }
}

/// Key rate with every observable taken at its mean value.
pub fn key_rate_asymptotic<T: Scalar>(
    stats: &ObservedStats<T>,
    alice: &SourceSpec<T>,
    bob: &SourceSpec<T>,
    f: T,
    base: EntropyBase,
) -> Result<KeyRateReport<T>> {
    let c = Coefficients::new(alice, bob)?;
    let s_plus = combine(&c.s_plus_terms(), stats);
    let s_minus = combine(&c.s_minus_terms(), stats);
    let h = combine(&c.h_terms(), stats);
    let t_xx = stats.error_yield_of(X, X);
    let rf = rate_function(&c, stats, alice, bob, f, base, (s_plus, s_minus, t_xx));
    Ok(finish(&c, &rf, stats, h, (h, h, h)))
}

/// Interval of `sum c_i <S_i>` given the observed yields.
///
/// Joint: one standard-error interval for the whole combination, with
/// variance `sum c_i^2 S_i / N_i` (for equal weights this is exactly the
/// interval of the union of the sets). Independent: every `<S_i>` is
/// worst-cased on its own and the extremes are added.
fn combination_interval<T: Scalar, const N: usize>(
    terms: &[(T, Source, Source); N],
    stats: &ObservedStats<T>,
    cfg: &FluctuationConfig<T>,
) -> Result<(T, T)> {
    let mut value = T::zero();
    if cfg.joint {
        let mut variance = T::zero();
        for &(c, l, r) in terms {
            let n = stats.count_of(l, r);
            if !(n > T::zero()) {
                return Err(Error::EmptySet);
            }
            let s = stats.yield_of(l, r);
            value = value + c * s;
            variance = variance + c * c * s.max(T::zero()) / n;
        }
        let delta = cfg.gamma * variance.sqrt();
        Ok(((value - delta).max(T::zero()), value + delta))
    } else {
        let (mut lo, mut hi) = (T::zero(), T::zero());
        for &(c, l, r) in terms {
            let (s_lo, s_hi) = fluctuation_bounds(stats.yield_of(l, r), stats.count_of(l, r), cfg)?;
            if c >= T::zero() {
                lo = lo + c * s_lo;
                hi = hi + c * s_hi;
            } else {
                lo = lo + c * s_hi;
                hi = hi + c * s_lo;
            }
        }
        Ok((lo.max(T::zero()), hi))
    }
}

/// Minimizes `R(H)` over `[lo, hi]`: uniform grid, then golden-section
/// refinement around the best grid point. Ties go to the smaller `H`.
fn scan_h<T: Scalar>(rf: &RateFunction<'_, T>, lo: T, hi: T) -> T {
    if !(hi > lo) {
        return lo;
    }
    let steps = H_SCAN_POINTS - 1;
    let width = hi - lo;
    let at = |i: usize| lo + width * T::lit(i as f64) / T::lit(steps as f64);
    let mut best_i = 0;
    let mut best = rf.eval(lo).rate;
    for i in 1..=steps {
        let r = rf.eval(at(i)).rate;
        if r < best {
            best = r;
            best_i = i;
        }
    }
    let mut a = at(best_i.saturating_sub(1));
    let mut b = at((best_i + 1).min(steps));
    let tol = width * T::lit(H_SCAN_REL_TOL);
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = rf.eval(x1).rate;
    let mut f2 = rf.eval(x2).rate;
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = rf.eval(x1).rate;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = rf.eval(x2).rate;
        }
    }
    let (h_ref, r_ref) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if r_ref < best {
        h_ref
    } else {
        at(best_i)
    }
}

/// Finite-size key rate `min_H R(H)` with worst-case fluctuations.
pub fn key_rate_finite<T: Scalar>(
    stats: &ObservedStats<T>,
    alice: &SourceSpec<T>,
    bob: &SourceSpec<T>,
    cfg: &FluctuationConfig<T>,
    f: T,
    base: EntropyBase,
) -> Result<KeyRateReport<T>> {
    let c = Coefficients::new(alice, bob)?;
    let (s_plus, _) = combination_interval(&c.s_plus_terms(), stats, cfg)?;
    let (_, s_minus) = combination_interval(&c.s_minus_terms(), stats, cfg)?;
    let (h_lo, h_hi) = combination_interval(&c.h_terms(), stats, cfg)?;
    let (_, t_xx) = fluctuation_bounds(stats.error_yield_of(X, X), stats.count_of(X, X), cfg)?;
    let h_obs = combine(&c.h_terms(), stats);
    let rf = rate_function(&c, stats, alice, bob, f, base, (s_plus, s_minus, t_xx));
    let h_min = scan_h(&rf, h_lo, h_hi);
    Ok(finish(&c, &rf, stats, h_obs, (h_lo, h_hi, h_min)))
}

/// `R(H)` at a given `H` with the finite-size worst-case inputs; exposed so
/// callers can inspect the scan.
pub fn key_rate_at_h<T: Scalar>(
    stats: &ObservedStats<T>,
    alice: &SourceSpec<T>,
    bob: &SourceSpec<T>,
    cfg: &FluctuationConfig<T>,
    f: T,
    base: EntropyBase,
    h: T,
) -> Result<T> {
    let c = Coefficients::new(alice, bob)?;
    let (s_plus, _) = combination_interval(&c.s_plus_terms(), stats, cfg)?;
    let (_, s_minus) = combination_interval(&c.s_minus_terms(), stats, cfg)?;
    let (_, t_xx) = fluctuation_bounds(stats.error_yield_of(X, X), stats.count_of(X, X), cfg)?;
    let rf = rate_function(&c, stats, alice, bob, f, base, (s_plus, s_minus, t_xx));
    Ok(rf.eval(h).rate)
}
