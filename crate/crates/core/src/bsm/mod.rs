//! Modeled observables of the Bell-state measurement.
//!
//! The detection model: 50:50 beam splitter, two polarizing beam splitters,
//! four threshold detectors with independent dark-count probability `d`.
//! Only two-click patterns with one H and one V detector herald a success
//! (`psi+` when both clicks share an output port, `psi-` otherwise); every
//! other pattern is discarded. Misalignment flips the polarization of Bob's
//! whole pulse with probability `E_d` of his basis.
//!
//! Photon-number yields `s_mn` and error yields `t_mn` are tabulated per
//! transmittance pair, then combined with the source distributions into the
//! per-source-pair yields `S_lr` and error rates `E_lr`.

mod optics;
pub mod oracle;

pub use optics::Basis;
pub use oracle::{monte_carlo_oracle, OracleEstimate};

use crate::channel::TransmittancePair;
use crate::error::{check_range, Result};
use crate::scalar::Scalar;
use crate::sources::{Source, SourceSpec};
use optics::{herald_probabilities, mode_vector, polarization, Binomials};

/// Dark counts and misalignment of the measurement station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec<T> {
    pub dark_count: T,
    pub misalignment_x: T,
    pub misalignment_z: T,
}

impl<T: Scalar> DetectorSpec<T> {
    pub fn new(dark_count: T, misalignment_x: T, misalignment_z: T) -> Result<Self> {
        check_range("dark_count", dark_count.to_f64_lossy(), 0.0, 0.5, "[0, 0.5]")?;
        check_range("misalignment_x", misalignment_x.to_f64_lossy(), 0.0, 0.5, "[0, 0.5]")?;
        check_range("misalignment_z", misalignment_z.to_f64_lossy(), 0.0, 0.5, "[0, 0.5]")?;
        Ok(Self {
            dark_count,
            misalignment_x,
            misalignment_z,
        })
    }

    pub fn misalignment(&self, basis: Basis) -> T {
        match basis {
            Basis::X => self.misalignment_x,
            Basis::Z => self.misalignment_z,
        }
    }
}

/// Bases of Alice's and Bob's pulses for one table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisSetting {
    pub alice: Basis,
    pub bob: Basis,
}

impl BasisSetting {
    pub const X: Self = Self { alice: Basis::X, bob: Basis::X };
    pub const Z: Self = Self { alice: Basis::Z, bob: Basis::Z };
    pub const XZ: Self = Self { alice: Basis::X, bob: Basis::Z };
    pub const ZX: Self = Self { alice: Basis::Z, bob: Basis::X };

    pub fn matched(&self) -> bool {
        self.alice == self.bob
    }
}

/// `s[m][n]` and `t[m][n]` for `m, n <= K_max`.
///
/// Mismatched-basis tables carry yields only; their error yields are zero
/// because no bit comparison is defined across bases.
#[derive(Debug, Clone, PartialEq)]
pub struct FockYieldTable<T> {
    setting: BasisSetting,
    dim: usize,
    s: Vec<T>,
    t: Vec<T>,
}

impl<T: Scalar> FockYieldTable<T> {
    fn zeros(setting: BasisSetting, dim: usize) -> Self {
        Self {
            setting,
            dim,
            s: vec![T::zero(); dim * dim],
            t: vec![T::zero(); dim * dim],
        }
    }

    pub fn setting(&self) -> BasisSetting {
        self.setting
    }

    pub fn k_max(&self) -> usize {
        self.dim - 1
    }

    #[inline]
    pub fn s(&self, m: usize, n: usize) -> T {
        self.s[m * self.dim + n]
    }

    #[inline]
    pub fn t(&self, m: usize, n: usize) -> T {
        self.t[m * self.dim + n]
    }

    /// `sum_i w_i * table_i`, all tables sharing a setting and size.
    pub fn weighted_sum<'a, I>(tables: I) -> Option<Self>
    where
        I: IntoIterator<Item = (T, &'a FockYieldTable<T>)>,
    {
        let mut iter = tables.into_iter();
        let (w0, first) = iter.next()?;
        let mut out = Self::zeros(first.setting, first.dim);
        out.accumulate(w0, first);
        for (w, table) in iter {
            out.accumulate(w, table);
        }
        Some(out)
    }

    fn accumulate(&mut self, weight: T, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.s.iter_mut().zip(&other.s) {
            *a = *a + weight * b;
        }
        for (a, &b) in self.t.iter_mut().zip(&other.t) {
            *a = *a + weight * b;
        }
    }
}

/// Channel-independent response: heralding and error probabilities for `k`
/// and `j` photons arriving at the beam splitter.
#[derive(Debug, Clone)]
pub struct BsmResponse<T> {
    setting: BasisSetting,
    dim: usize,
    valid: Vec<T>,
    error: Vec<T>,
}

impl<T: Scalar> BsmResponse<T> {
    pub fn new(det: &DetectorSpec<T>, setting: BasisSetting, k_max: usize) -> Self {
        let dim = k_max + 1;
        let binom = Binomials::new(2 * k_max + 1);
        let e = det.misalignment(setting.bob);
        let quarter = T::lit(0.25);
        let to_t = |m: [f64; 4]| m.map(T::lit);

        let mut valid = vec![T::zero(); dim * dim];
        let mut error = vec![T::zero(); dim * dim];
        // outcome[bit_a][sent_b] -> (psi+, psi-) for every (k, j)
        for bit_a in 0..2 {
            let u = to_t(mode_vector(polarization(setting.alice, bit_a), false));
            for sent_b in 0..2 {
                let v = to_t(mode_vector(polarization(setting.bob, sent_b), true));
                for k in 0..dim {
                    for j in 0..dim {
                        let (plus, minus) =
                            herald_probabilities(k, j, &u, &v, det.dark_count, &binom);
                        let idx = k * dim + j;
                        // intended Bob bit that leads to this sent polarization
                        for bit_b in 0..2 {
                            let w = if bit_b == sent_b { T::one() - e } else { e } * quarter;
                            valid[idx] = valid[idx] + w * (plus + minus);
                            let err = match (setting.alice, setting.bob) {
                                (Basis::Z, Basis::Z) if bit_a == bit_b => plus + minus,
                                (Basis::Z, Basis::Z) => T::zero(),
                                (Basis::X, Basis::X) if bit_a == bit_b => minus,
                                (Basis::X, Basis::X) => plus,
                                _ => T::zero(),
                            };
                            error[idx] = error[idx] + w * err;
                        }
                    }
                }
            }
        }
        Self {
            setting,
            dim,
            valid,
            error,
        }
    }

    pub fn setting(&self) -> BasisSetting {
        self.setting
    }

    /// Binomially thins the emitted photon numbers by the arm transmittances.
    pub fn thin(&self, eta_a: T, eta_b: T) -> FockYieldTable<T> {
        let dim = self.dim;
        let ba = thinning_matrix(eta_a, dim);
        let bb = thinning_matrix(eta_b, dim);
        let mut out = FockYieldTable::zeros(self.setting, dim);
        // tmp[k][n] = sum_j W[k][j] * bb[n][j]
        let mut tmp_s = vec![T::zero(); dim * dim];
        let mut tmp_t = vec![T::zero(); dim * dim];
        for k in 0..dim {
            for n in 0..dim {
                let (mut acc_s, mut acc_t) = (T::zero(), T::zero());
                for j in 0..=n {
                    let w = bb[n * dim + j];
                    acc_s = acc_s + self.valid[k * dim + j] * w;
                    acc_t = acc_t + self.error[k * dim + j] * w;
                }
                tmp_s[k * dim + n] = acc_s;
                tmp_t[k * dim + n] = acc_t;
            }
        }
        for m in 0..dim {
            for n in 0..dim {
                let (mut acc_s, mut acc_t) = (T::zero(), T::zero());
                for k in 0..=m {
                    let w = ba[m * dim + k];
                    acc_s = acc_s + w * tmp_s[k * dim + n];
                    acc_t = acc_t + w * tmp_t[k * dim + n];
                }
                let s = acc_s.clamp_to(T::zero(), T::one());
                out.s[m * dim + n] = s;
                out.t[m * dim + n] = acc_t.clamp_to(T::zero(), s);
            }
        }
        out
    }
}

/// `B[m][k] = C(m,k) eta^k (1-eta)^(m-k)`.
fn thinning_matrix<T: Scalar>(eta: T, dim: usize) -> Vec<T> {
    let mut b = vec![T::zero(); dim * dim];
    b[0] = T::one();
    for m in 1..dim {
        for k in 0..=m {
            let stay = if k < m { b[(m - 1) * dim + k] * (T::one() - eta) } else { T::zero() };
            let pass = if k > 0 { b[(m - 1) * dim + k - 1] * eta } else { T::zero() };
            b[m * dim + k] = stay + pass;
        }
    }
    b
}

/// Photon-number yield table for one transmittance pair and basis.
pub fn fock_yields<T: Scalar>(
    eta_a: T,
    eta_b: T,
    det: &DetectorSpec<T>,
    basis: Basis,
    k_max: usize,
) -> FockYieldTable<T> {
    let setting = BasisSetting {
        alice: basis,
        bob: basis,
    };
    BsmResponse::new(det, setting, k_max).thin(eta_a, eta_b)
}

/// Pulse-pair count, yield, error yield and error rate of one source pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairStats<T> {
    pub count: T,
    pub yield_: T,
    pub error_yield: T,
    pub error_rate: T,
}

/// Statistics for all sixteen source pairs `(l, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedStats<T> {
    pub n_total: T,
    pairs: [[PairStats<T>; 4]; 4],
}

impl<T: Scalar> ObservedStats<T> {
    pub fn get(&self, l: Source, r: Source) -> &PairStats<T> {
        &self.pairs[l.index()][r.index()]
    }

    pub fn yield_of(&self, l: Source, r: Source) -> T {
        self.get(l, r).yield_
    }

    pub fn error_yield_of(&self, l: Source, r: Source) -> T {
        self.get(l, r).error_yield
    }

    pub fn count_of(&self, l: Source, r: Source) -> T {
        self.get(l, r).count
    }

    /// Builds stats from raw yields and error yields (e.g. measured data).
    pub fn from_yields(
        n_total: T,
        alice: &SourceSpec<T>,
        bob: &SourceSpec<T>,
        yields: [[(T, T); 4]; 4],
    ) -> Self {
        let mut pairs = [[PairStats::default(); 4]; 4];
        for l in Source::ALL {
            for r in Source::ALL {
                let (s, t) = yields[l.index()][r.index()];
                pairs[l.index()][r.index()] = PairStats {
                    count: n_total * alice.probability(l) * bob.probability(r),
                    yield_: s,
                    error_yield: t,
                    error_rate: if s > T::zero() { t / s } else { T::zero() },
                };
            }
        }
        Self { n_total, pairs }
    }

    /// Same statistics seen from the other side (Alice and Bob exchanged).
    pub fn transposed(&self) -> Self {
        let pairs = std::array::from_fn(|l| std::array::from_fn(|r| self.pairs[r][l]));
        Self {
            n_total: self.n_total,
            pairs,
        }
    }
}

fn basis_of(source: Source) -> Option<Basis> {
    match source {
        Source::O => None,
        Source::X | Source::Y => Some(Basis::X),
        Source::Z => Some(Basis::Z),
    }
}

/// Yield tables averaged over a channel's transmittance-pair distribution.
///
/// Averaging the tables first is exact because every observable is linear
/// in `s_mn` and `t_mn`; it makes repeated evaluations (optimizer) cheap.
#[derive(Debug, Clone)]
pub struct ChannelResponse<T> {
    x: FockYieldTable<T>,
    z: FockYieldTable<T>,
    xz: FockYieldTable<T>,
    zx: FockYieldTable<T>,
}

impl<T: Scalar> ChannelResponse<T> {
    pub fn new(pairs: &[TransmittancePair<T>], det: &DetectorSpec<T>, k_max: usize) -> Self {
        assert!(!pairs.is_empty(), "channel response needs at least one transmittance pair");
        let average = |setting: BasisSetting| {
            let response = BsmResponse::new(det, setting, k_max);
            let tables: Vec<_> = pairs
                .iter()
                .map(|p| (p.weight, response.thin(p.eta_a, p.eta_b)))
                .collect();
            FockYieldTable::weighted_sum(tables.iter().map(|(w, t)| (*w, t))).expect("non-empty")
        };
        Self {
            x: average(BasisSetting::X),
            z: average(BasisSetting::Z),
            xz: average(BasisSetting::XZ),
            zx: average(BasisSetting::ZX),
        }
    }

    pub fn table(&self, setting: BasisSetting) -> &FockYieldTable<T> {
        match (setting.alice, setting.bob) {
            (Basis::X, Basis::X) => &self.x,
            (Basis::Z, Basis::Z) => &self.z,
            (Basis::X, Basis::Z) => &self.xz,
            (Basis::Z, Basis::X) => &self.zx,
        }
    }

    pub fn k_max(&self) -> usize {
        self.x.k_max()
    }

    fn table_index(l: Source, r: Source) -> usize {
        // a vacuum side contributes only m = 0 (or n = 0), so any table of
        // the other side's basis gives the same numbers
        let a = basis_of(l).or(basis_of(r)).unwrap_or(Basis::X);
        let b = basis_of(r).or(basis_of(l)).unwrap_or(Basis::X);
        match (a, b) {
            (Basis::X, Basis::X) => 0,
            (Basis::Z, Basis::Z) => 1,
            (Basis::X, Basis::Z) => 2,
            (Basis::Z, Basis::X) => 3,
        }
    }

    fn table_at(&self, index: usize) -> &FockYieldTable<T> {
        [&self.x, &self.z, &self.xz, &self.zx][index]
    }

    /// `(sum_m a_m s_mn, sum_m a_m t_mn)` for `n < width`.
    fn fold_rows(table: &FockYieldTable<T>, a: &[T], width: usize) -> (Vec<T>, Vec<T>) {
        let dim = table.dim;
        let mut u_s = vec![T::zero(); width];
        let mut u_t = vec![T::zero(); width];
        for (m, &am) in a.iter().enumerate().take(dim) {
            if am == T::zero() {
                continue;
            }
            let row = m * dim;
            for n in 0..width {
                u_s[n] = u_s[n] + am * table.s[row + n];
                u_t[n] = u_t[n] + am * table.t[row + n];
            }
        }
        (u_s, u_t)
    }

    /// `(S_lr, T_lr)` as the convex combination `sum a_lm b_rn (s_mn, t_mn)`.
    pub fn pair_yields(&self, alice: &SourceSpec<T>, bob: &SourceSpec<T>, l: Source, r: Source) -> (T, T) {
        let table = self.table_at(Self::table_index(l, r));
        let a = significant_prefix(alice.distribution(l).coefficients(), table.dim);
        let b = significant_prefix(bob.distribution(r).coefficients(), table.dim);
        let (u_s, u_t) = Self::fold_rows(table, a, b.len());
        dot_pair(b, &u_s, &u_t)
    }

    pub fn observe(&self, alice: &SourceSpec<T>, bob: &SourceSpec<T>, n_total: T) -> ObservedStats<T> {
        let dim = self.x.dim;
        let bs: Vec<&[T]> = Source::ALL
            .iter()
            .map(|&r| significant_prefix(bob.distribution(r).coefficients(), dim))
            .collect();
        let width = bs.iter().map(|b| b.len()).max().unwrap_or(0);
        let mut yields = [[(T::zero(), T::zero()); 4]; 4];
        for l in Source::ALL {
            let a = significant_prefix(alice.distribution(l).coefficients(), dim);
            let mut folded: [Option<(Vec<T>, Vec<T>)>; 4] = [None, None, None, None];
            for r in Source::ALL {
                let k = Self::table_index(l, r);
                let (u_s, u_t) = folded[k].get_or_insert_with(|| Self::fold_rows(self.table_at(k), a, width));
                yields[l.index()][r.index()] = dot_pair(bs[r.index()], u_s, u_t);
            }
        }
        ObservedStats::from_yields(n_total, alice, bob, yields)
    }
}

/// Terms below this weight are dropped from the double sums; their total
/// contribution is below `dim * 1e-40`.
const NEGLIGIBLE: f64 = 1e-40;

/// `coefficients` up to the last entry that is not negligible.
fn significant_prefix<T: Scalar>(coefficients: &[T], dim: usize) -> &[T] {
    let cutoff = T::lit(NEGLIGIBLE).max(T::min_positive_value());
    let len = coefficients
        .iter()
        .take(dim)
        .rposition(|&c| c > cutoff)
        .map_or(0, |i| i + 1);
    &coefficients[..len]
}

fn dot_pair<T: Scalar>(b: &[T], u_s: &[T], u_t: &[T]) -> (T, T) {
    b.iter()
        .zip(u_s.iter().zip(u_t))
        .fold((T::zero(), T::zero()), |(s, t), (&bn, (&us, &ut))| (s + bn * us, t + bn * ut))
}

/// Modeled statistics for all source pairs over a transmittance-pair
/// distribution.
pub fn observed_stats<T: Scalar>(
    alice: &SourceSpec<T>,
    bob: &SourceSpec<T>,
    pair_dist: &[TransmittancePair<T>],
    det: &DetectorSpec<T>,
    n_total: T,
) -> ObservedStats<T> {
    let k_max = alice.k_max().max(bob.k_max());
    ChannelResponse::new(pair_dist, det, k_max).observe(alice, bob, n_total)
}
