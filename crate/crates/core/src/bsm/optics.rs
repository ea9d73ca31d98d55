//! Linear-optics response of the polarization Bell-state analyzer to Fock
//! inputs.
//!
//! Alice's pulse enters port `a`, Bob's port `b` of a 50:50 beam splitter;
//! each output port ends in a polarizing beam splitter and two threshold
//! detectors. Detector order: `cH, cV, dH, dV`.
//!
//! For `k` photons in mode `u` and `j` photons in mode `v` the probability
//! that every photon lands inside a detector subset `D` has the closed form
//!
//! ```text
//! P(D) = A^k * sum_i C(j,i) C(k+i,i) (c^2/A)^i (V - c^2/A)^(j-i)
//! ```
//!
//! with `A = |u_D|^2`, `V = |v_D|^2` and `c = <u_D, v_D>`. Exact occupancy
//! patterns then follow by inclusion-exclusion over subsets.

use crate::scalar::Scalar;

/// Measurement basis of one party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    X,
    Z,
}

pub(crate) const DETECTORS: usize = 4;

/// Two-click patterns heralding `|psi+>` (same output port).
pub(crate) const PSI_PLUS: [[usize; 2]; 2] = [[0, 1], [2, 3]];
/// Two-click patterns heralding `|psi->` (opposite ports, opposite polarizations).
pub(crate) const PSI_MINUS: [[usize; 2]; 2] = [[0, 3], [1, 2]];

/// Jones vector `(H, V)` of bit `bit` in `basis`.
pub(crate) fn polarization(basis: Basis, bit: usize) -> [f64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match (basis, bit) {
        (Basis::Z, 0) => [1.0, 0.0],
        (Basis::Z, _) => [0.0, 1.0],
        (Basis::X, 0) => [h, h],
        (Basis::X, _) => [h, -h],
    }
}

/// Detector-mode amplitudes of one photon entering port `a` (`port_b = false`)
/// or port `b` with polarization `pol`.
pub(crate) fn mode_vector(pol: [f64; 2], port_b: bool) -> [f64; DETECTORS] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let s = if port_b { -h } else { h };
    [h * pol[0], h * pol[1], s * pol[0], s * pol[1]]
}

/// Probability that all `k + j` photons land in detectors selected by `mask`.
fn prob_within<T: Scalar>(mask: u8, k: usize, j: usize, u: &[T; 4], v: &[T; 4], binom: &Binomials<T>) -> T {
    let (mut a2, mut c, mut v2) = (T::zero(), T::zero(), T::zero());
    for o in 0..DETECTORS {
        if mask & (1 << o) != 0 {
            a2 = a2 + u[o] * u[o];
            c = c + u[o] * v[o];
            v2 = v2 + v[o] * v[o];
        }
    }
    if k == 0 {
        return v2.powi(j as i32);
    }
    if a2 <= T::zero() {
        return T::zero();
    }
    let x = c * c / a2;
    let y = (v2 - x).max(T::zero());
    let mut sum = T::zero();
    for i in 0..=j {
        sum = sum + binom.get(j, i) * binom.get(k + i, i) * x.powi(i as i32) * y.powi((j - i) as i32);
    }
    a2.powi(k as i32) * sum
}

/// Pascal triangle up to `n_max`.
pub(crate) struct Binomials<T> {
    n_max: usize,
    rows: Vec<T>,
}

impl<T: Scalar> Binomials<T> {
    pub(crate) fn new(n_max: usize) -> Self {
        let w = n_max + 1;
        let mut rows = vec![T::zero(); w * w];
        for n in 0..=n_max {
            rows[n * w] = T::one();
            for i in 1..=n {
                rows[n * w + i] = rows[(n - 1) * w + i - 1] + rows[(n - 1) * w + i];
            }
        }
        Self { n_max, rows }
    }

    #[inline]
    pub(crate) fn get(&self, n: usize, i: usize) -> T {
        self.rows[n * (self.n_max + 1) + i]
    }
}

/// Heralding probabilities for `k` photons from Alice and `j` from Bob after
/// the channel, including dark counts: `(psi_plus, psi_minus)`.
pub(crate) fn herald_probabilities<T: Scalar>(
    k: usize,
    j: usize,
    u: &[T; 4],
    v: &[T; 4],
    dark: T,
    binom: &Binomials<T>,
) -> (T, T) {
    let mut within = [T::zero(); 16];
    for mask in 0u8..16 {
        if mask.count_ones() <= 2 {
            within[mask as usize] = prob_within(mask, k, j, u, v, binom);
        }
    }
    // exact occupancy for the empty set, singletons and pairs
    let exact = |mask: u8| -> T {
        let mut acc = T::zero();
        let mut sub = mask;
        loop {
            let sign = (mask.count_ones() - sub.count_ones()) % 2;
            let val = within[sub as usize];
            acc = if sign == 0 { acc + val } else { acc - val };
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        acc.max(T::zero())
    };
    let quiet = (T::one() - dark) * (T::one() - dark);
    let click = |pair: [usize; 2]| -> T {
        let m0 = 1u8 << pair[0];
        let m1 = 1u8 << pair[1];
        let both = exact(m0 | m1);
        let first = exact(m0) * dark;
        let second = exact(m1) * dark;
        let none = exact(0) * dark * dark;
        quiet * (both + first + second + none)
    };
    let plus = click(PSI_PLUS[0]) + click(PSI_PLUS[1]);
    let minus = click(PSI_MINUS[0]) + click(PSI_MINUS[1]);
    (plus, minus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modes(alice: [f64; 2], bob: [f64; 2]) -> ([f64; 4], [f64; 4]) {
        (mode_vector(alice, false), mode_vector(bob, true))
    }

    #[test]
    fn hong_ou_mandel_single_photons() {
        let b = Binomials::new(8);
        // identical diagonal polarizations bunch: only psi+ with probability 1/2
        let (u, v) = modes(polarization(Basis::X, 0), polarization(Basis::X, 0));
        let (p, m) = herald_probabilities(1, 1, &u, &v, 0.0, &b);
        assert!((p - 0.5).abs() < 1e-14 && m.abs() < 1e-14);
        // orthogonal diagonal polarizations project onto psi- with probability 1/2
        let (u, v) = modes(polarization(Basis::X, 0), polarization(Basis::X, 1));
        let (p, m) = herald_probabilities(1, 1, &u, &v, 0.0, &b);
        assert!(p.abs() < 1e-14 && (m - 0.5).abs() < 1e-14);
        // H and V always give one H and one V click
        let (u, v) = modes(polarization(Basis::Z, 0), polarization(Basis::Z, 1));
        let (p, m) = herald_probabilities(1, 1, &u, &v, 0.0, &b);
        assert!((p + m - 1.0).abs() < 1e-14);
        // H and H never herald
        let (u, v) = modes(polarization(Basis::Z, 0), polarization(Basis::Z, 0));
        let (p, m) = herald_probabilities(1, 1, &u, &v, 0.0, &b);
        assert!((p + m).abs() < 1e-14);
    }

    #[test]
    fn dark_counts_only() {
        let b = Binomials::new(2);
        let (u, v) = modes(polarization(Basis::Z, 0), polarization(Basis::Z, 1));
        let d = 0.01;
        let (p, m) = herald_probabilities(0, 0, &u, &v, d, &b);
        let expected = 4.0 * d * d * (1.0 - d) * (1.0 - d);
        assert!((p + m - expected).abs() < 1e-16);
    }

    #[test]
    fn total_probability_is_one() {
        let b = Binomials::new(12);
        let (u, v) = modes(polarization(Basis::X, 0), polarization(Basis::X, 1));
        for (k, j) in [(0, 3), (2, 2), (3, 1), (5, 4)] {
            let all = prob_within(0b1111, k, j, &u, &v, &b);
            assert!((all - 1.0).abs() < 1e-12, "k={k} j={j}: {all}");
        }
    }
}
