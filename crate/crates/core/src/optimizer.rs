//! Maximization over the twelve source parameters.
//!
//! Finite-difference gradient ascent with a backtracking line search; when
//! the gradient stalls, a search over the `3^12 - 1` neighbors
//! `x + delta * dl` (`delta_k` in `{-1, 0, 1}`) looks for a better point to
//! jump to. Every probe is projected onto the feasible set first.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sources::ParamVector;

const DIM: usize = 12;
/// `3^12`.
pub const NEIGHBORHOOD_SIZE: usize = 531_441;
/// Index of the all-zero offset in base-3 enumeration.
const CENTER_INDEX: usize = (NEIGHBORHOOD_SIZE - 1) / 2;

fn is_intensity(k: usize) -> bool {
    k % 6 < 3
}

/// Feasible set of the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds<T> {
    pub mu_min: T,
    pub mu_cap: T,
    /// Minimum gap enforced between `mu_x` and `mu_y`.
    pub order_margin: T,
    /// Floor on every source probability, including the vacuum remainder.
    pub p_min: T,
}

impl<T: Scalar> Default for ParamBounds<T> {
    fn default() -> Self {
        Self {
            mu_min: T::lit(1e-6),
            mu_cap: T::one(),
            order_margin: T::lit(1e-4),
            p_min: T::lit(1e-6),
        }
    }
}

impl<T: Scalar> ParamBounds<T> {
    pub fn is_feasible(&self, x: &ParamVector<T>) -> bool {
        let slack = T::lit(1e-12);
        (0..2).all(|party| {
            let h = &x.0[party * 6..party * 6 + 6];
            let mu_ok = h[..3].iter().all(|&m| m >= self.mu_min - slack && m <= self.mu_cap + slack);
            let order_ok = h[1] - h[0] >= self.order_margin - slack;
            let p_ok = h[3..].iter().all(|&p| p >= self.p_min - slack);
            let sum = h[3] + h[4] + h[5];
            mu_ok && order_ok && p_ok && sum <= T::one() - self.p_min + slack
        })
    }

    /// Euclidean-style projection: clamp intensities, restore the
    /// `mu_x < mu_y` gap around the pair's midpoint, and project the three
    /// probabilities onto `{p_i >= p_min, sum <= 1 - p_min}`.
    pub fn project(&self, x: &ParamVector<T>) -> ParamVector<T> {
        let mut out = *x;
        for party in 0..2 {
            let h = &mut out.0[party * 6..party * 6 + 6];
            for m in h[..3].iter_mut() {
                *m = m.clamp_to(self.mu_min, self.mu_cap);
            }
            if h[1] - h[0] < self.order_margin {
                let half = self.order_margin / T::lit(2.0);
                let mid = ((h[0] + h[1]) / T::lit(2.0))
                    .clamp_to(self.mu_min + half, self.mu_cap - half);
                h[0] = mid - half;
                h[1] = mid + half;
            }
            let probs = project_capped_simplex(
                [h[3], h[4], h[5]],
                self.p_min,
                T::one() - self.p_min,
            );
            h[3..].copy_from_slice(&probs);
        }
        out
    }
}

/// Projects onto `{p_i >= floor, sum p_i <= cap}`.
fn project_capped_simplex<T: Scalar>(p: [T; 3], floor: T, cap: T) -> [T; 3] {
    let clamped = p.map(|v| v.clamp_to(floor, T::one()));
    if clamped.iter().fold(T::zero(), |a, &b| a + b) <= cap {
        return clamped;
    }
    // shift to the standard simplex of mass `cap - 3 floor`
    let mass = cap - T::lit(3.0) * floor;
    let mut y = p.map(|v| if v.is_nan() { floor } else { v } - floor);
    let mut sorted = y;
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    // the largest component always stays in the support
    let mut cum = sorted[0];
    let mut theta = sorted[0] - mass;
    for (i, &s) in sorted.iter().enumerate().skip(1) {
        cum = cum + s;
        let t = (cum - mass) / T::lit((i + 1) as f64);
        if s - t > T::zero() {
            theta = t;
        }
    }
    for v in y.iter_mut() {
        *v = (*v - theta).max(T::zero()) + floor;
    }
    y
}

/// How the plateau-escape neighborhood is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborhoodPolicy {
    /// Neighbors sampled at intermediate stagnations (0 skips the sampled pass).
    pub sample_size: usize,
    /// Search all `3^12 - 1` neighbors before terminating.
    pub full_at_final: bool,
    /// Search all neighbors at every stagnation.
    pub always_full: bool,
}

impl Default for NeighborhoodPolicy {
    fn default() -> Self {
        Self {
            sample_size: 2000,
            full_at_final: true,
            always_full: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig<T> {
    pub fd_step_mu: T,
    pub fd_step_p: T,
    pub initial_step: T,
    pub backtrack: T,
    pub min_step: T,
    /// Neighborhood step `dl`.
    pub jump_step: T,
    pub max_iterations: usize,
    /// Relative improvement below which a move counts as stagnation.
    pub tolerance: T,
    pub multistart: usize,
    pub seed: u64,
    pub neighborhood: NeighborhoodPolicy,
    /// Per-coordinate sampling ranges for restart points; `None` samples the
    /// whole feasible box.
    pub start_region: Option<[(T, T); DIM]>,
}

impl<T: Scalar> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            fd_step_mu: T::lit(1e-4),
            fd_step_p: T::lit(1e-4),
            initial_step: T::lit(0.05),
            backtrack: T::lit(0.5),
            min_step: T::lit(1e-6),
            jump_step: T::lit(0.01),
            max_iterations: 500,
            tolerance: T::lit(1e-4),
            multistart: 8,
            seed: 0,
            neighborhood: NeighborhoodPolicy::default(),
            start_region: None,
        }
    }
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fd_step_mu", self.fd_step_mu),
            ("fd_step_p", self.fd_step_p),
            ("initial_step", self.initial_step),
            ("min_step", self.min_step),
            ("jump_step", self.jump_step),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) {
                return Err(Error::OutOfRange {
                    name,
                    value: v.to_f64_lossy(),
                    range: "(0, inf)",
                });
            }
        }
        if !(self.backtrack > T::zero() && self.backtrack < T::one()) {
            return Err(Error::OutOfRange {
                name: "backtrack",
                value: self.backtrack.to_f64_lossy(),
                range: "(0, 1)",
            });
        }
        if self.multistart == 0 {
            return Err(Error::OutOfRange {
                name: "multistart",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        Ok(())
    }

    fn fd_step(&self, k: usize) -> T {
        if is_intensity(k) {
            self.fd_step_mu
        } else {
            self.fd_step_p
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Start,
    Gradient,
    Jump,
    Terminate,
}

impl MoveKind {
    pub fn label(self) -> &'static str {
        match self {
            MoveKind::Start => "start",
            MoveKind::Gradient => "gradient",
            MoveKind::Jump => "jump",
            MoveKind::Terminate => "terminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep<T> {
    /// Restart index.
    pub start: usize,
    pub iteration: usize,
    pub params: ParamVector<T>,
    pub value: T,
    pub kind: MoveKind,
    /// Whether a probe behind this move was moved by the projection.
    pub projected: bool,
}

/// Accepted moves of every restart, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizationTrace<T> {
    pub steps: Vec<TraceStep<T>>,
    pub evaluations: usize,
}

/// Central-difference gradient with probes projected into the feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub components: [T; DIM],
    pub projected: bool,
}

/// Central differences per coordinate. A component is zero when both probes
/// are below the centre value or when projection collapses the probes.
pub fn fd_gradient<T, F>(
    x: &ParamVector<T>,
    objective: &F,
    cfg: &OptimizerConfig<T>,
    bounds: &ParamBounds<T>,
) -> Gradient<T>
where
    T: Scalar,
    F: Fn(&ParamVector<T>) -> T + Sync,
{
    let centre = objective(x);
    fd_gradient_at(x, centre, objective, cfg, bounds)
}

fn fd_gradient_at<T, F>(
    x: &ParamVector<T>,
    centre: T,
    objective: &F,
    cfg: &OptimizerConfig<T>,
    bounds: &ParamBounds<T>,
) -> Gradient<T>
where
    T: Scalar,
    F: Fn(&ParamVector<T>) -> T + Sync,
{
    let probes: Vec<(T, bool)> = (0..DIM)
        .into_par_iter()
        .map(|k| {
            let step = cfg.fd_step(k);
            let mut up = *x;
            up[k] = up[k] + step;
            let mut down = *x;
            down[k] = down[k] - step;
            let up_p = bounds.project(&up);
            let down_p = bounds.project(&down);
            let projected = up_p != up || down_p != down;
            let span = up_p[k] - down_p[k];
            if !(span > T::zero()) {
                return (T::zero(), projected);
            }
            let (r_up, r_down) = (objective(&up_p), objective(&down_p));
            if r_up < centre && r_down < centre {
                (T::zero(), projected)
            } else {
                ((r_up - r_down) / span, projected)
            }
        })
        .collect();
    let mut components = [T::zero(); DIM];
    let mut projected = false;
    for (k, (g, p)) in probes.into_iter().enumerate() {
        components[k] = if g.is_finite() { g } else { T::zero() };
        projected |= p;
    }
    Gradient {
        components,
        projected,
    }
}

fn neighbor<T: Scalar>(x: &ParamVector<T>, mut idx: usize, step: T) -> ParamVector<T> {
    let mut out = *x;
    for k in 0..DIM {
        let digit = idx % 3;
        idx /= 3;
        out[k] = out[k] + step * T::lit(digit as f64 - 1.0);
    }
    out
}

/// Which neighbors to examine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborhoodSearch {
    Full,
    Sampled { count: usize, seed: u64 },
}

/// Best strictly better neighbor of `x` (value `current`), if any. Ties go
/// to the lowest base-3 index so the result is independent of scheduling.
pub fn neighborhood_jump<T, F>(
    x: &ParamVector<T>,
    current: T,
    objective: &F,
    step: T,
    bounds: &ParamBounds<T>,
    search: NeighborhoodSearch,
) -> Option<(ParamVector<T>, T)>
where
    T: Scalar,
    F: Fn(&ParamVector<T>) -> T + Sync,
{
    let indices: Vec<usize> = match search {
        NeighborhoodSearch::Full => (0..NEIGHBORHOOD_SIZE).filter(|&i| i != CENTER_INDEX).collect(),
        NeighborhoodSearch::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = count.min(NEIGHBORHOOD_SIZE - 1);
            let mut picked: Vec<usize> = index::sample(&mut rng, NEIGHBORHOOD_SIZE - 1, count)
                .into_iter()
                .map(|i| if i >= CENTER_INDEX { i + 1 } else { i })
                .collect();
            picked.sort_unstable();
            picked
        }
    };
    let best = indices
        .par_iter()
        .filter_map(|&i| {
            let cand = bounds.project(&neighbor(x, i, step));
            if coincides(&cand, x) {
                return None;
            }
            let r = objective(&cand);
            (r > current).then_some((i, cand, r))
        })
        .reduce_with(|a, b| {
            if b.2 > a.2 || (b.2 == a.2 && b.0 < a.0) {
                b
            } else {
                a
            }
        });
    best.map(|(_, cand, r)| (cand, r))
}

/// Equal up to projection round-off.
fn coincides<T: Scalar>(a: &ParamVector<T>, b: &ParamVector<T>) -> bool {
    let tol = T::lit(1e-12);
    a.0.iter().zip(b.0.iter()).all(|(&u, &v)| (u - v).abs() <= tol)
}

fn significant<T: Scalar>(new: T, old: T, tol: T) -> bool {
    if old == T::zero() {
        new > T::zero()
    } else {
        new > old + tol * old.abs()
    }
}

/// Outcome of [`optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult<T> {
    pub best: ParamVector<T>,
    pub value: T,
    pub trace: OptimizationTrace<T>,
}

struct Counter<'a, T, F> {
    objective: &'a F,
    count: std::sync::atomic::AtomicUsize,
    _t: std::marker::PhantomData<T>,
}

impl<T, F> Counter<'_, T, F>
where
    T: Scalar,
    F: Fn(&ParamVector<T>) -> T + Sync,
{
    fn eval(&self, x: &ParamVector<T>) -> T {
        self.count.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let v = (self.objective)(x);
        if v.is_nan() {
            T::neg_infinity()
        } else {
            v
        }
    }
}

/// Backtracking search along the normalized gradient, or along component
/// `only` of it. Returns the first strictly better projected point.
fn line_search<T, F>(
    x: &ParamVector<T>,
    value: T,
    grad: &Gradient<T>,
    only: Option<usize>,
    objective: &F,
    cfg: &OptimizerConfig<T>,
    bounds: &ParamBounds<T>,
) -> Option<(ParamVector<T>, T, bool)>
where
    T: Scalar,
    F: Fn(&ParamVector<T>) -> T + Sync,
{
    let mut dir = [T::zero(); DIM];
    match only {
        Some(k) if grad.components[k] == T::zero() => return None,
        Some(k) => dir[k] = grad.components[k].signum(),
        None => {
            let norm = grad.components.iter().fold(T::zero(), |a, &g| a + g * g).sqrt();
            if !(norm > T::zero() && norm.is_finite()) {
                return None;
            }
            for (d, &g) in dir.iter_mut().zip(&grad.components) {
                *d = g / norm;
            }
        }
    }
    let mut step = cfg.initial_step;
    while step >= cfg.min_step {
        let mut cand = *x;
        for k in 0..DIM {
            cand[k] = cand[k] + step * dir[k];
        }
        let cand_p = bounds.project(&cand);
        if coincides(&cand_p, x) {
            return None;
        }
        let rc = objective(&cand_p);
        if rc > value {
            return Some((cand_p, rc, cand_p != cand || grad.projected));
        }
        step = step * cfg.backtrack;
    }
    None
}

fn climb<T, F>(
    start_idx: usize,
    initial: ParamVector<T>,
    objective: &F,
    cfg: &OptimizerConfig<T>,
    bounds: &ParamBounds<T>,
    trace: &mut Vec<TraceStep<T>>,
) -> (ParamVector<T>, T)
where
    T: Scalar,
    F: Fn(&ParamVector<T>) -> T + Sync,
{
    let mut x = initial;
    let mut r = objective(&x);
    trace.push(TraceStep {
        start: start_idx,
        iteration: 0,
        params: x,
        value: r,
        kind: MoveKind::Start,
        projected: false,
    });
    let jump_seed = |iteration: usize| {
        cfg.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(((start_idx as u64) << 32) | iteration as u64)
    };
    let mut iteration = 0;
    while iteration < cfg.max_iterations {
        iteration += 1;
        let start_value = r;
        let grad = fd_gradient_at(&x, r, objective, cfg, bounds);
        let moved = match line_search(&x, r, &grad, None, objective, cfg, bounds) {
            Some((cand, rc, projected)) => {
                x = cand;
                r = rc;
                trace.push(TraceStep {
                    start: start_idx,
                    iteration,
                    params: x,
                    value: r,
                    kind: MoveKind::Gradient,
                    projected,
                });
                true
            }
            None => false,
        };
        if significant(r, start_value, cfg.tolerance) {
            continue;
        }
        // kinks can dominate the full direction; retry each component alone
        let grad = if moved {
            fd_gradient_at(&x, r, objective, cfg, bounds)
        } else {
            grad
        };
        for k in 0..DIM {
            if let Some((cand, rc, projected)) = line_search(&x, r, &grad, Some(k), objective, cfg, bounds) {
                x = cand;
                r = rc;
                trace.push(TraceStep {
                    start: start_idx,
                    iteration,
                    params: x,
                    value: r,
                    kind: MoveKind::Gradient,
                    projected,
                });
            }
        }
        if significant(r, start_value, cfg.tolerance) {
            continue;
        }

        // stagnation: look around
        let policy = cfg.neighborhood;
        let first = if policy.always_full {
            Some(NeighborhoodSearch::Full)
        } else if policy.sample_size > 0 {
            Some(NeighborhoodSearch::Sampled {
                count: policy.sample_size,
                seed: jump_seed(iteration),
            })
        } else {
            None
        };
        let mut escaped = false;
        if let Some(search) = first {
            if let Some((cand, rc)) = neighborhood_jump(&x, r, objective, cfg.jump_step, bounds, search) {
                escaped = significant(rc, r, cfg.tolerance);
                x = cand;
                r = rc;
                trace.push(TraceStep {
                    start: start_idx,
                    iteration,
                    params: x,
                    value: r,
                    kind: MoveKind::Jump,
                    projected: false,
                });
            }
        }
        if !escaped && policy.full_at_final && !policy.always_full {
            if let Some((cand, rc)) =
                neighborhood_jump(&x, r, objective, cfg.jump_step, bounds, NeighborhoodSearch::Full)
            {
                escaped = significant(rc, r, cfg.tolerance);
                x = cand;
                r = rc;
                trace.push(TraceStep {
                    start: start_idx,
                    iteration,
                    params: x,
                    value: r,
                    kind: MoveKind::Jump,
                    projected: false,
                });
            }
        }
        if !escaped {
            break;
        }
    }
    trace.push(TraceStep {
        start: start_idx,
        iteration,
        params: x,
        value: r,
        kind: MoveKind::Terminate,
        projected: false,
    });
    (x, r)
}

/// Uniform sample from `region` (or the box), projected.
pub fn random_feasible<T: Scalar, R: Rng>(
    rng: &mut R,
    bounds: &ParamBounds<T>,
    region: Option<&[(T, T); DIM]>,
) -> ParamVector<T> {
    let mut v = [T::zero(); DIM];
    for (k, slot) in v.iter_mut().enumerate() {
        let (lo, hi) = match region {
            Some(r) => r[k],
            None if is_intensity(k) => (bounds.mu_min, bounds.mu_cap),
            None => (bounds.p_min, T::one()),
        };
        *slot = lo + (hi - lo) * T::lit(rng.gen::<f64>());
    }
    let mut x = ParamVector(v);
    for party in 0..2 {
        let base = party * 6;
        if x[base] > x[base + 1] {
            x.0.swap(base, base + 1);
        }
    }
    bounds.project(&x)
}

/// Gradient ascent with plateau escape from `initial` plus `multistart - 1`
/// seeded restarts; returns the best point found.
pub fn optimize<T, F>(
    initial: &ParamVector<T>,
    objective: F,
    cfg: &OptimizerConfig<T>,
    bounds: &ParamBounds<T>,
) -> Result<OptimizationResult<T>>
where
    T: Scalar,
    F: Fn(&ParamVector<T>) -> T + Sync,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![*initial];
    for _ in 1..cfg.multistart {
        starts.push(random_feasible(&mut rng, bounds, cfg.start_region.as_ref()));
    }
    optimize_from(&starts, objective, cfg, bounds)
}

/// Runs one climb from each of `starts` in order; `cfg.multistart` is
/// ignored.
pub fn optimize_from<T, F>(
    starts: &[ParamVector<T>],
    objective: F,
    cfg: &OptimizerConfig<T>,
    bounds: &ParamBounds<T>,
) -> Result<OptimizationResult<T>>
where
    T: Scalar,
    F: Fn(&ParamVector<T>) -> T + Sync,
{
    cfg.validate()?;
    if starts.is_empty() {
        return Err(Error::InfeasibleInitial("no starting point".into()));
    }
    if let Some(bad) = starts.iter().find(|x| !bounds.is_feasible(x)) {
        return Err(Error::InfeasibleInitial(format!("{:?}", bad.0)));
    }
    let counter = Counter {
        objective: &objective,
        count: Default::default(),
        _t: std::marker::PhantomData,
    };
    let eval = |x: &ParamVector<T>| counter.eval(x);

    let mut steps = Vec::new();
    let mut best: Option<(ParamVector<T>, T)> = None;
    for (i, start) in starts.iter().enumerate() {
        let (x, r) = climb(i, *start, &eval, cfg, bounds, &mut steps);
        if best.as_ref().is_none_or(|b| r > b.1) {
            best = Some((x, r));
        }
    }
    let (best, value) = best.expect("at least one start");
    Ok(OptimizationResult {
        best,
        value,
        trace: OptimizationTrace {
            steps,
            evaluations: counter.count.into_inner(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_point() -> ParamVector<f64> {
        ParamVector::new([0.1, 0.3, 0.5, 0.1, 0.2, 0.6], [0.12, 0.32, 0.45, 0.15, 0.1, 0.6])
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let g = fd_gradient(&sample_point(), &|_: &ParamVector<f64>| 3.0, &OptimizerConfig::default(), &ParamBounds::default());
        assert!(g.components.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn strict_local_max_zeroes_every_component() {
        let c = sample_point();
        let f = move |x: &ParamVector<f64>| -(0..12).map(|k| (x[k] - c[k]).abs()).sum::<f64>();
        let g = fd_gradient(&c, &f, &OptimizerConfig::default(), &ParamBounds::default());
        assert!(g.components.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projection_restores_constraints() {
        let b = ParamBounds::<f64>::default();
        let x = ParamVector::new([0.5, 0.4, 1.7, 0.8, 0.7, -0.2], [0.0, 0.0, 0.3, 0.3, 0.3, 0.3]);
        let p = b.project(&x);
        assert!(b.is_feasible(&p), "{p:?}");
        let y = sample_point();
        assert_eq!(b.project(&y), y);
    }

    #[test]
    fn simplex_projection_is_tight() {
        let p = project_capped_simplex([0.6, 0.6, 0.1], 0.0, 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15 && p[2].abs() < 1e-15);
    }

    #[test]
    fn neighbor_offsets_cover_all_signs() {
        let x = ParamVector([0.5_f64; 12]);
        let lo = neighbor(&x, 0, 0.1);
        assert!(lo.0.iter().all(|&v| (v - 0.4).abs() < 1e-15));
        assert_eq!(neighbor(&x, CENTER_INDEX, 0.1), x);
        let hi = neighbor(&x, NEIGHBORHOOD_SIZE - 1, 0.1);
        assert!(hi.0.iter().all(|&v| (v - 0.6).abs() < 1e-15));
    }

    #[test]
    fn infeasible_initial_rejected() {
        let x = ParamVector::new([0.3, 0.1, 0.5, 0.1, 0.2, 0.6], [0.1, 0.3, 0.5, 0.1, 0.2, 0.6]);
        let err = optimize(&x, |_| 0.0, &OptimizerConfig::default(), &ParamBounds::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleInitial(_)));
    }
}
