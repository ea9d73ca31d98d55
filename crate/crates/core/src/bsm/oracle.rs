//! Event-by-event Monte Carlo of the Bell-state analyzer.
//!
//! Independent of the closed-form tables: photon survival is sampled photon
//! by photon, the interference outcome is drawn from an explicit Fock-space
//! state vector built with creation operators, and every detector draws its
//! own dark count.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::optics::{mode_vector, polarization, Basis, DETECTORS, PSI_MINUS, PSI_PLUS};
use super::DetectorSpec;

const CHUNK: u64 = 1 << 18;

/// Empirical yield and error yield with binomial standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub trials: u64,
    pub s_hat: f64,
    pub s_se: f64,
    pub t_hat: f64,
    pub t_se: f64,
}

impl OracleEstimate {
    fn from_counts(trials: u64, heralds: u64, errors: u64) -> Self {
        let n = trials as f64;
        let s_hat = heralds as f64 / n;
        let t_hat = errors as f64 / n;
        Self {
            trials,
            s_hat,
            s_se: (s_hat * (1.0 - s_hat) / n).sqrt(),
            t_hat,
            t_se: (t_hat * (1.0 - t_hat) / n).sqrt(),
        }
    }
}

type Occupation = [u8; DETECTORS];

/// Output photon-number distribution for `k` photons in port `a` with
/// polarization `pol_a` and `j` in port `b` with `pol_b`.
fn output_distribution(k: usize, j: usize, pol_a: [f64; 2], pol_b: [f64; 2]) -> Vec<(Occupation, f64)> {
    let u = mode_vector(pol_a, false);
    let v = mode_vector(pol_b, true);
    let mut state: HashMap<Occupation, f64> = HashMap::from([([0u8; DETECTORS], 1.0)]);
    let create = |state: &HashMap<Occupation, f64>, amps: &[f64; DETECTORS]| {
        let mut next: HashMap<Occupation, f64> = HashMap::new();
        for (occ, &amp) in state {
            for (o, &w) in amps.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let mut up = *occ;
                up[o] += 1;
                *next.entry(up).or_insert(0.0) += amp * w * f64::from(up[o]).sqrt();
            }
        }
        next
    };
    for _ in 0..k {
        state = create(&state, &u);
    }
    for _ in 0..j {
        state = create(&state, &v);
    }
    let norm: f64 = (1..=k).chain(1..=j).map(|x| x as f64).product();
    let mut dist: Vec<(Occupation, f64)> = state
        .into_iter()
        .map(|(occ, amp)| (occ, amp * amp / norm))
        .filter(|&(_, p)| p > 0.0)
        .collect();
    dist.sort_by_key(|a| a.0);
    dist
}

struct Cumulative {
    patterns: Vec<Occupation>,
    cdf: Vec<f64>,
}

impl Cumulative {
    fn new(dist: Vec<(Occupation, f64)>) -> Self {
        let mut acc = 0.0;
        let mut patterns = Vec::with_capacity(dist.len());
        let mut cdf = Vec::with_capacity(dist.len());
        for (occ, p) in dist {
            acc += p;
            patterns.push(occ);
            cdf.push(acc);
        }
        Self { patterns, cdf }
    }

    fn sample(&self, r: f64) -> Occupation {
        let total = *self.cdf.last().unwrap_or(&1.0);
        let target = r * total;
        let i = self.cdf.partition_point(|&c| c <= target);
        self.patterns[i.min(self.patterns.len() - 1)]
    }
}

/// Estimates `s_mn` and `t_mn` by direct simulation.
///
/// Runs `trials` events split into fixed chunks with independent ChaCha
/// streams, so the result depends only on `seed`, never on thread count.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_oracle(
    eta_a: f64,
    eta_b: f64,
    det: &DetectorSpec<f64>,
    basis: Basis,
    m: usize,
    n: usize,
    trials: u64,
    seed: u64,
) -> OracleEstimate {
    assert!(trials > 0, "oracle needs at least one trial");
    // cache[k][j][bit_a][sent_b]
    let mut cache: Vec<Vec<[[Cumulative; 2]; 2]>> = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let mut row = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let make = |a: usize, b: usize| {
                Cumulative::new(output_distribution(k, j, polarization(basis, a), polarization(basis, b)))
            };
            row.push([[make(0, 0), make(0, 1)], [make(1, 0), make(1, 1)]]);
        }
        cache.push(row);
    }
    let e = det.misalignment(basis);
    let d = det.dark_count;

    let chunks = trials.div_ceil(CHUNK);
    let (heralds, errors) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let len = CHUNK.min(trials - c * CHUNK);
            let (mut h, mut err) = (0u64, 0u64);
            for _ in 0..len {
                let bit_a = usize::from(rng.gen::<bool>());
                let bit_b = usize::from(rng.gen::<bool>());
                let sent_b = if rng.gen::<f64>() < e { 1 - bit_b } else { bit_b };
                let k = (0..m).filter(|_| rng.gen::<f64>() < eta_a).count();
                let j = (0..n).filter(|_| rng.gen::<f64>() < eta_b).count();
                let occ = cache[k][j][bit_a][sent_b].sample(rng.gen::<f64>());
                let mut clicks = [false; DETECTORS];
                for (o, click) in clicks.iter_mut().enumerate() {
                    let dark = rng.gen::<f64>() < d;
                    *click = occ[o] > 0 || dark;
                }
                if clicks.iter().filter(|&&c| c).count() != 2 {
                    continue;
                }
                let fired = |pair: &[usize; 2]| clicks[pair[0]] && clicks[pair[1]];
                let plus = PSI_PLUS.iter().any(fired);
                let minus = PSI_MINUS.iter().any(fired);
                if !(plus || minus) {
                    continue;
                }
                h += 1;
                let wrong = match basis {
                    Basis::Z => bit_a == bit_b,
                    Basis::X => (plus && bit_a != bit_b) || (minus && bit_a == bit_b),
                };
                if wrong {
                    err += 1;
                }
            }
            (h, err)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    OracleEstimate::from_counts(trials, heralds, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_vector_is_normalized() {
        for (k, j) in [(0, 0), (1, 1), (2, 3), (4, 2)] {
            let dist = output_distribution(k, j, polarization(Basis::X, 0), polarization(Basis::X, 1));
            let total: f64 = dist.iter().map(|x| x.1).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hom_dip_in_state_vector() {
        let dist = output_distribution(1, 1, polarization(Basis::Z, 0), polarization(Basis::Z, 0));
        // identical photons never leave through different ports
        for (occ, p) in dist {
            let c = occ[0] + occ[1];
            assert!(c != 1 || p < 1e-15);
        }
    }

    #[test]
    fn no_photons_no_dark_counts_no_heralds() {
        let det = DetectorSpec::new(0.0, 0.01, 0.01).unwrap();
        let est = monte_carlo_oracle(0.5, 0.5, &det, Basis::Z, 0, 0, 100_000, 1);
        assert_eq!(est.s_hat, 0.0);
        assert_eq!(est.t_hat, 0.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let det = DetectorSpec::new(0.01, 0.02, 0.02).unwrap();
        let a = monte_carlo_oracle(0.4, 0.3, &det, Basis::X, 2, 1, 300_000, 9);
        let b = monte_carlo_oracle(0.4, 0.3, &det, Basis::X, 2, 1, 300_000, 9);
        assert_eq!(a, b);
    }
}
