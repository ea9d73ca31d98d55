//! Ties a channel, the detector model and the protocol settings into a key
//! rate as a function of the twelve source parameters.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bsm::{BasisSetting, ChannelResponse, DetectorSpec, ObservedStats};
use crate::channel::{compensate_all, Channel, CompensationPolicy, TransmittancePair};
use crate::error::Result;
use crate::keyrate::{key_rate_asymptotic, key_rate_finite, EntropyBase, FluctuationConfig, KeyRateReport};
use crate::optimizer::{optimize_from, OptimizationTrace, OptimizerConfig, ParamBounds};
use crate::scalar::Scalar;
use crate::sources::{ParamVector, SourceSpec, DEFAULT_K_MAX};

/// Everything but the channel and the source parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig<T> {
    /// Total number of pulse pairs `N_t`.
    pub n_total: T,
    /// Error-correction inefficiency `f`.
    pub ec_efficiency: T,
    pub fluctuation: FluctuationConfig<T>,
    pub entropy_base: EntropyBase,
    pub k_max: usize,
}

impl<T: Scalar> Default for ProtocolConfig<T> {
    fn default() -> Self {
        Self {
            n_total: T::lit(1e11),
            ec_efficiency: T::lit(1.16),
            fluctuation: FluctuationConfig::default(),
            entropy_base: EntropyBase::Two,
            k_max: DEFAULT_K_MAX,
        }
    }
}

/// Precomputed channel response plus protocol settings.
#[derive(Debug, Clone)]
pub struct KeyRateModel<T> {
    response: ChannelResponse<T>,
    pairs: Vec<TransmittancePair<T>>,
    detector: DetectorSpec<T>,
    protocol: ProtocolConfig<T>,
}

impl<T: Scalar> KeyRateModel<T> {
    pub fn new(pairs: Vec<TransmittancePair<T>>, detector: DetectorSpec<T>, protocol: ProtocolConfig<T>) -> Self {
        let response = ChannelResponse::new(&pairs, &detector, protocol.k_max);
        Self {
            response,
            pairs,
            detector,
            protocol,
        }
    }

    /// Model over `channel`, with `policy` applied to every transmittance pair.
    pub fn with_channel(
        channel: &Channel<T>,
        policy: Option<&CompensationPolicy<T>>,
        detector: DetectorSpec<T>,
        protocol: ProtocolConfig<T>,
    ) -> Self {
        let mut pairs = channel.pairs();
        if let Some(policy) = policy {
            pairs = compensate_all(&pairs, policy);
        }
        Self::new(pairs, detector, protocol)
    }

    pub fn pairs(&self) -> &[TransmittancePair<T>] {
        &self.pairs
    }

    pub fn detector(&self) -> &DetectorSpec<T> {
        &self.detector
    }

    pub fn protocol(&self) -> &ProtocolConfig<T> {
        &self.protocol
    }

    pub fn response(&self) -> &ChannelResponse<T> {
        &self.response
    }

    /// Same channel response with different protocol settings.
    pub fn with_protocol(&self, protocol: ProtocolConfig<T>) -> Self {
        assert_eq!(protocol.k_max, self.protocol.k_max, "k_max is baked into the response");
        Self {
            protocol,
            ..self.clone()
        }
    }

    pub fn sources(&self, x: &ParamVector<T>) -> Result<(SourceSpec<T>, SourceSpec<T>)> {
        Ok((x.alice_source(self.protocol.k_max)?, x.bob_source(self.protocol.k_max)?))
    }

    pub fn stats(&self, x: &ParamVector<T>) -> Result<ObservedStats<T>> {
        let (alice, bob) = self.sources(x)?;
        Ok(self.response.observe(&alice, &bob, self.protocol.n_total))
    }

    /// Finite-size report.
    pub fn evaluate(&self, x: &ParamVector<T>) -> Result<KeyRateReport<T>> {
        let (alice, bob) = self.sources(x)?;
        let stats = self.response.observe(&alice, &bob, self.protocol.n_total);
        key_rate_finite(
            &stats,
            &alice,
            &bob,
            &self.protocol.fluctuation,
            self.protocol.ec_efficiency,
            self.protocol.entropy_base,
        )
    }

    /// Report with all observables at their mean values.
    pub fn evaluate_asymptotic(&self, x: &ParamVector<T>) -> Result<KeyRateReport<T>> {
        let (alice, bob) = self.sources(x)?;
        let stats = self.response.observe(&alice, &bob, self.protocol.n_total);
        key_rate_asymptotic(&stats, &alice, &bob, self.protocol.ec_efficiency, self.protocol.entropy_base)
    }

    /// Finite-size rate, zero wherever the parameters admit no key.
    pub fn key_rate(&self, x: &ParamVector<T>) -> T {
        self.evaluate(x).map(|r| r.r_per_pair).unwrap_or_else(|_| T::zero())
    }

    /// Single-photon yield and X-basis error rate of the model itself.
    pub fn true_single_photon(&self) -> (T, T) {
        let x = self.response.table(BasisSetting::X);
        let s = x.s(1, 1);
        let e = if s > T::zero() { x.t(1, 1) / s } else { T::zero() };
        (s, e)
    }
}

/// A symmetric interior point, used when screening finds no positive rate.
pub fn default_initial<T: Scalar>() -> ParamVector<T> {
    let half = [0.1, 0.3, 0.45, 0.1, 0.1, 0.6].map(T::lit);
    ParamVector::symmetric(half)
}

/// Number of random candidates examined by [`screen_starts`] in
/// [`optimize_key_rate`].
pub const SCREEN_SAMPLES: usize = 20_000;

/// Mean transmittances of the two arms over the pair distribution.
fn mean_transmittances<T: Scalar>(pairs: &[TransmittancePair<T>]) -> (T, T) {
    pairs.iter().fold((T::zero(), T::zero()), |(a, b), p| {
        (a + p.weight * p.eta_a, b + p.weight * p.eta_b)
    })
}

fn screening_candidate<R: Rng>(rng: &mut R, strong_is_alice: bool, ratio: f64) -> ParamVector<f64> {
    let mu_x = 10f64.powf(rng.gen_range(-2.3..-0.3));
    let spread = rng.gen_range(1.5..8.0);
    let scale = if ratio < 1.0 { rng.gen_range(ratio.ln()..0.0).exp() } else { 1.0 };
    let (px, py, pz) = loop {
        let px: f64 = rng.gen_range(0.02..0.6);
        let py: f64 = rng.gen_range(0.01..0.5);
        let pz: f64 = rng.gen_range(0.05..0.9);
        if px + py + pz < 0.99 {
            break (px, py, pz);
        }
    };
    let weak = [mu_x, mu_x * spread, rng.gen_range(0.1..0.9), px, py, pz];
    let mut strong = weak;
    strong[0] *= scale;
    strong[1] *= scale;
    strong[2] = rng.gen_range(0.1..0.9);
    if strong_is_alice {
        ParamVector::new(strong, weak)
    } else {
        ParamVector::new(weak, strong)
    }
}

/// Deterministic random screening for starting points.
///
/// Draws `samples` candidates with log-uniform decoy intensities whose
/// stronger arm is scaled toward balanced arrival intensities, and returns
/// the `count` best by key rate. Falls back to [`default_initial`] when no
/// candidate yields a key.
pub fn screen_starts<T: Scalar>(
    model: &KeyRateModel<T>,
    bounds: &ParamBounds<T>,
    samples: usize,
    count: usize,
    seed: u64,
) -> Vec<ParamVector<T>> {
    let (eta_a, eta_b) = mean_transmittances(model.pairs());
    let (eta_a, eta_b) = (eta_a.to_f64_lossy(), eta_b.to_f64_lossy());
    let strong_is_alice = eta_a > eta_b;
    let ratio = if eta_a > 0.0 && eta_b > 0.0 {
        eta_a.min(eta_b) / eta_a.max(eta_b)
    } else {
        1.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<ParamVector<T>> = (0..samples)
        .map(|_| {
            let c = screening_candidate(&mut rng, strong_is_alice, ratio);
            bounds.project(&ParamVector(c.0.map(T::lit)))
        })
        .collect();
    let mut scored: Vec<(usize, T)> = candidates
        .par_iter()
        .map(|x| model.key_rate(x))
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| *r > T::zero())
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    let mut out: Vec<ParamVector<T>> = scored.iter().take(count).map(|&(i, _)| candidates[i]).collect();
    if out.is_empty() && count > 0 {
        out.push(bounds.project(&default_initial()));
    }
    out
}

/// Optimized parameters with their rate, report and the optimizer trace.
#[derive(Debug, Clone)]
pub struct OptimizedKeyRate<T> {
    pub params: ParamVector<T>,
    /// Finite-size rate at `params`, zero when no key is possible.
    pub rate: T,
    /// `None` when the bounds at `params` admit no key at all.
    pub report: Option<KeyRateReport<T>>,
    pub trace: OptimizationTrace<T>,
}

/// Maximizes the finite-size key rate of `model`.
///
/// Climbs from `initial` (if given) followed by the best screened
/// candidates, `cfg.multistart` starts in total.
pub fn optimize_key_rate<T: Scalar>(
    model: &KeyRateModel<T>,
    initial: Option<&ParamVector<T>>,
    cfg: &OptimizerConfig<T>,
    bounds: &ParamBounds<T>,
) -> Result<OptimizedKeyRate<T>> {
    cfg.validate()?;
    let mut starts: Vec<ParamVector<T>> = initial.into_iter().copied().collect();
    let screened = cfg.multistart.saturating_sub(starts.len());
    starts.extend(screen_starts(model, bounds, SCREEN_SAMPLES, screened, cfg.seed));
    let result = optimize_from(&starts, |x: &ParamVector<T>| model.key_rate(x), cfg, bounds)?;
    let report = model.evaluate(&result.best).ok();
    Ok(OptimizedKeyRate {
        params: result.best,
        rate: report.as_ref().map_or(T::zero(), |r| r.r_per_pair),
        report,
        trace: result.trace,
    })
}
