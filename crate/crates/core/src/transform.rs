//! The smoothing transform behind the competitive guarantee.
//!
//! For a diminishing-returns valuation `f`, the potential
//!
//! ```text
//! U(x) = 1/(e−1) ∫₀¹ eᵗ · t·f(x/t) dt,
//! ∇U(x) = 1/(e−1) ∫₀¹ eᵗ · ∇f(x/t) dt
//! ```
//!
//! is again a diminishing-returns valuation, and it is (1−1/e)-balanced:
//! `f(x)/γ ≥ U(x) + f̂(∇U(x))` with `γ = 1−1/e`, where `f̂` is the
//! nonnegative concave conjugate `f̂(α) = sup_x f(x) − ⟨α, x⟩`. Greedy
//! allocation guided by `∇U` therefore certifies a (1−1/e) fraction of any
//! feasible solution through the dual pair `(∇U(x), β)`.
//!
//! Integrals are computed by composite Simpson quadrature on `[t_min, 1]`,
//! split at every `t` where the integrand can lose smoothness along the ray
//! `t ↦ x/t` (budget saturations, piecewise-linear knots, polymatroid
//! tight-set switches). Splitting is essential: the conjugate integrand is a
//! step function in `t` for budget-additive valuations, and uniform rules
//! would stall near 1e−2 accuracy no matter the node count. Below `t_min`
//! the integrand is extended by its value at `t_min`. Near the origin the
//! rule switches to geometrically graded pieces integrated in `ln t`,
//! because conjugate integrands of logarithmic valuations grow like
//! `ln(1/t)` there — integrable, but hostile to uniform nodes.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::{pairwise_sum, Real};
use crate::valuation::{ray, ValuationExpr};

/// Errors from quadrature configuration.
#[derive(Debug, Clone, thiserror::Error)]
pub enum TransformError {
    #[error("invalid quadrature scheme: {0}")]
    InvalidScheme(String),
}

/// Composite-Simpson configuration: total node budget and lower cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureScheme<T> {
    nodes: usize,
    t_min: T,
}

impl<T: Real> Default for QuadratureScheme<T> {
    fn default() -> Self {
        QuadratureScheme {
            nodes: 257,
            t_min: T::of(1e-6),
        }
    }
}

impl<T: Real> QuadratureScheme<T> {
    /// Builds a scheme with `nodes` quadrature nodes (odd, ≥ 33) and lower
    /// cutoff `t_min ∈ (0, 1e−4]`.
    pub fn new(nodes: usize, t_min: T) -> Result<Self, TransformError> {
        if nodes < 33 || nodes % 2 == 0 {
            return Err(TransformError::InvalidScheme(format!(
                "node count must be odd and at least 33, got {nodes}"
            )));
        }
        if !(t_min > T::zero() && t_min <= T::of(1e-4)) {
            return Err(TransformError::InvalidScheme(format!(
                "t_min must lie in (0, 1e-4], got {t_min}"
            )));
        }
        Ok(QuadratureScheme { nodes, t_min })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn t_min(&self) -> T {
        self.t_min
    }
}

/// What the transform needs from a valuation: values, gradients, and the
/// nonsmooth points of `t ↦ f(base/t)`. Implemented by [`ValuationExpr`]
/// and by the engine's per-arrival compiled views.
pub trait RayValuation<T: Real> {
    /// Dimension of the points this valuation reads.
    fn dim(&self) -> usize;
    /// Value at `x ≥ 0`.
    fn value(&self, x: &[T]) -> T;
    /// Adds the upward gradient at `x` into `out` (`out.len() ≥ dim`).
    fn add_grad(&self, x: &[T], out: &mut [T]);
    /// Appends every `t ∈ (lo, hi)` where `t ↦ value(base/t)` may lose
    /// smoothness; the output need not be sorted.
    fn ray_breakpoints(&self, base: &[T], lo: T, hi: T, out: &mut Vec<T>);
}

impl<T: Real> RayValuation<T> for ValuationExpr<T> {
    fn dim(&self) -> usize {
        self.min_dim()
    }

    fn value(&self, x: &[T]) -> T {
        ValuationExpr::value(self, x)
    }

    fn add_grad(&self, x: &[T], out: &mut [T]) {
        self.grad_into(x, T::one(), out);
    }

    fn ray_breakpoints(&self, base: &[T], lo: T, hi: T, out: &mut Vec<T>) {
        out.extend(ray::ray_breakpoints(self, base, lo, hi));
    }
}

/// Below this `t` the quadrature switches to geometrically graded pieces
/// integrated in `u = ln t`. Conjugate integrands can grow like `ln(1/t)`
/// as `t → 0` (e.g. for logarithmic valuations); in `u` that growth is
/// linear and composite Simpson converges at full order again.
const GRADE_CEIL: f64 = 1e-2;
/// Node count for each graded (log-substituted) piece.
const GRADE_NODES: usize = 33;

fn simpson_coeff<T: Real>(i: usize, m: usize) -> T {
    if i == 0 || i == m - 1 {
        T::one()
    } else if i % 2 == 1 {
        T::of(4.0)
    } else {
        T::of(2.0)
    }
}

/// Emits `(t, w)` pairs such that `∫₀¹ eᵗ φ(t) dt / (e−1) ≈ Σ w·φ(t)`:
/// piecewise composite Simpson on `[t_min, 1]` split at `breakpoints`
/// (sorted, strictly inside the interval) plus the constant-extension strip
/// below `t_min`. Pieces ending at or below [`GRADE_CEIL`] — a geometric
/// ladder guarantees they exist — are integrated in `u = ln t`; the node
/// budget is spent on the remaining bulk of `[t_min, 1]`. Piece-endpoint
/// nodes are nudged inward so `φ` is never sampled exactly on a kink.
pub(crate) fn for_each_quad_node<T: Real>(
    scheme: &QuadratureScheme<T>,
    breakpoints: &[T],
    mut visit: impl FnMut(T, T),
) {
    let lo = scheme.t_min;
    let hi = T::one();
    let scale = (T::e() - T::one()).recip();
    let ceil = T::of(GRADE_CEIL * (1.0 + 1e-9));

    // ∫₀^{t_min} eᵗ φ(t) dt ≈ t_min · e^{t_min} φ(t_min).
    visit(lo, lo * lo.exp() * scale);

    let mut bounds: Vec<T> = Vec::with_capacity(breakpoints.len() + 8);
    let mut rung = lo * T::of(10.0);
    while rung <= ceil {
        bounds.push(rung);
        rung *= T::of(10.0);
    }
    bounds.extend(breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
    bounds.push(hi);
    bounds.sort_by(|a, b| a.partial_cmp(b).expect("bounds are finite"));
    bounds.dedup_by(|a, b| (*a - *b).abs() <= T::of(1e-12) * (T::one() + b.abs()));

    let mut pieces: Vec<(T, T)> = Vec::with_capacity(bounds.len());
    let mut start = lo;
    for &end in &bounds {
        if end - start > T::epsilon() * (T::one() + end.abs()) {
            pieces.push((start, end));
            start = end;
        }
    }

    let uniform_total: T = pieces
        .iter()
        .filter(|&&(_, b)| b > ceil)
        .map(|&(a, b)| b - a)
        .sum();

    for &(a, b) in &pieces {
        if b <= ceil {
            // Graded piece: Simpson in u = ln t; dt = t du folds into the
            // weight, so callers still just supply φ(t).
            let (ua, ub) = (a.ln(), b.ln());
            let hu = (ub - ua) / T::of((GRADE_NODES - 1) as f64);
            let nudge = (ub - ua) * T::of(1e-9);
            let third = hu / T::of(3.0);
            for i in 0..GRADE_NODES {
                let u = if i == 0 {
                    ua + nudge
                } else if i == GRADE_NODES - 1 {
                    ub - nudge
                } else {
                    ua + hu * T::of(i as f64)
                };
                let t = u.exp();
                let coeff: T = simpson_coeff(i, GRADE_NODES);
                visit(t, coeff * third * t * t.exp() * scale);
            }
        } else {
            let len = b - a;
            let frac = (len / uniform_total).as_f64();
            let budget = (scheme.nodes as f64 * frac).round() as usize;
            let m = budget.max(3) | 1; // odd, at least 3
            let h = len / T::of((m - 1) as f64);
            let nudge = len * T::of(1e-9);
            let third = h / T::of(3.0);
            for i in 0..m {
                let t = if i == 0 {
                    a + nudge
                } else if i == m - 1 {
                    b - nudge
                } else {
                    a + h * T::of(i as f64)
                };
                let coeff: T = simpson_coeff(i, m);
                visit(t, coeff * third * t.exp() * scale);
            }
        }
    }
}

fn scale_point<T: Real>(x: &[T], t: T, buf: &mut Vec<T>) {
    buf.clear();
    buf.extend(x.iter().map(|&v| v / t));
}

/// The potential `U` (and its companion conjugate bound) of a valuation
/// under a fixed quadrature scheme.
pub struct UTransform<'a, T: Real, V: RayValuation<T> + ?Sized> {
    f: &'a V,
    scheme: QuadratureScheme<T>,
}

impl<'a, T: Real, V: RayValuation<T> + ?Sized> UTransform<'a, T, V> {
    pub fn new(f: &'a V, scheme: QuadratureScheme<T>) -> Self {
        UTransform { f, scheme }
    }

    pub fn scheme(&self) -> &QuadratureScheme<T> {
        &self.scheme
    }

    pub fn base(&self) -> &V {
        self.f
    }

    fn breakpoints(&self, x: &[T]) -> Vec<T> {
        let mut bps = Vec::new();
        self.f
            .ray_breakpoints(x, self.scheme.t_min, T::one(), &mut bps);
        bps.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints are finite"));
        bps.dedup_by(|a, b| (*a - *b).abs() <= T::of(1e-12) * (T::one() + b.abs()));
        bps
    }

    /// `U(x)`.
    pub fn u_eval(&self, x: &[T]) -> T {
        let bps = self.breakpoints(x);
        let mut terms = Vec::with_capacity(self.scheme.nodes + 8);
        let mut buf = Vec::with_capacity(x.len());
        for_each_quad_node(&self.scheme, &bps, |t, w| {
            scale_point(x, t, &mut buf);
            terms.push(w * t * self.f.value(&buf));
        });
        pairwise_sum(&terms)
    }

    /// `∇U(x)`, sized like the base valuation's gradient.
    pub fn u_grad(&self, x: &[T]) -> Vec<T> {
        let dim = self.f.dim().max(x.len());
        let mut out = vec![T::zero(); dim];
        let mut g = vec![T::zero(); dim];
        let bps = self.breakpoints(x);
        let mut buf = Vec::with_capacity(x.len());
        for_each_quad_node(&self.scheme, &bps, |t, w| {
            scale_point(x, t, &mut buf);
            for v in g.iter_mut() {
                *v = T::zero();
            }
            self.f.add_grad(&buf, &mut g);
            for (o, &gi) in out.iter_mut().zip(g.iter()) {
                *o += w * gi;
            }
        });
        out
    }

    /// Upper bound on `f̂(∇U(x))`:
    /// `1/(e−1) ∫₀¹ eᵗ (f(x/t) − ⟨∇f(x/t), x/t⟩) dt`, which dominates the
    /// conjugate by convexity. Certificates use this sound direction.
    pub fn fhat_upper_at_ugrad(&self, x: &[T]) -> T {
        let bps = self.breakpoints(x);
        let mut terms = Vec::with_capacity(self.scheme.nodes + 8);
        let dim = self.f.dim().max(x.len());
        let mut g = vec![T::zero(); dim];
        let mut buf = Vec::with_capacity(x.len());
        for_each_quad_node(&self.scheme, &bps, |t, w| {
            scale_point(x, t, &mut buf);
            let fv = self.f.value(&buf);
            for v in g.iter_mut() {
                *v = T::zero();
            }
            self.f.add_grad(&buf, &mut g);
            let mut dot = T::zero();
            for (&gi, &pi) in g.iter().zip(buf.iter()) {
                dot += gi * pi;
            }
            terms.push(w * (fv - dot));
        });
        pairwise_sum(&terms)
    }

    /// Balancedness slack `f(x)/γ − U(x) − f̂-upper(x)`; a nonnegative value
    /// certifies the γ-balanced inequality at `x`. The value, potential, and
    /// conjugate bound share one quadrature sweep.
    pub fn balanced_check(&self, x: &[T], gamma: T) -> T {
        let bps = self.breakpoints(x);
        let mut u_terms = Vec::with_capacity(self.scheme.nodes + 8);
        let mut fhat_terms = Vec::with_capacity(self.scheme.nodes + 8);
        let dim = self.f.dim().max(x.len());
        let mut g = vec![T::zero(); dim];
        let mut buf = Vec::with_capacity(x.len());
        for_each_quad_node(&self.scheme, &bps, |t, w| {
            scale_point(x, t, &mut buf);
            let fv = self.f.value(&buf);
            for v in g.iter_mut() {
                *v = T::zero();
            }
            self.f.add_grad(&buf, &mut g);
            let mut dot = T::zero();
            for (&gi, &pi) in g.iter().zip(buf.iter()) {
                dot += gi * pi;
            }
            u_terms.push(w * t * fv);
            fhat_terms.push(w * (fv - dot));
        });
        self.f.value(x) / gamma - pairwise_sum(&u_terms) - pairwise_sum(&fhat_terms)
    }
}

/// `f̂(∇f(x)) = f(x) − ⟨∇f(x), x⟩`, the conjugate value at the valuation's
/// own supergradient (exact; used by the plain-greedy baseline's dual).
pub fn fhat_at_fgrad<T: Real, V: RayValuation<T> + ?Sized>(f: &V, x: &[T]) -> T {
    let dim = f.dim().max(x.len());
    let mut g = vec![T::zero(); dim];
    f.add_grad(x, &mut g);
    let mut dot = T::zero();
    for (&gi, &xi) in g.iter().zip(x.iter()) {
        dot += gi * xi;
    }
    (f.value(x) - dot).max(T::zero())
}

/// Lower bound on the conjugate `f̂(α) = sup_x f(x) − ⟨α, x⟩` by projected
/// supergradient ascent over the box `[0, radius]^dim`, from several
/// deterministic starts. Being a lower bound, it can only strengthen
/// assertions that an upper bound (like [`UTransform::fhat_upper_at_ugrad`])
/// indeed dominates the conjugate.
pub fn fhat_numeric<T: Real, V: RayValuation<T> + ?Sized>(
    f: &V,
    alpha: &[T],
    radius: T,
    iters: usize,
) -> T {
    assert!(radius > T::zero(), "search radius must be positive");
    let dim = f.dim().max(alpha.len());
    let objective = |x: &[T]| -> T {
        let mut dot = T::zero();
        for (&ai, &xi) in alpha.iter().zip(x.iter()) {
            dot += ai * xi;
        }
        f.value(x) - dot
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_CA11);
    let mut starts: Vec<Vec<T>> = vec![
        vec![T::zero(); dim],
        vec![radius; dim],
        vec![radius * T::of(0.5); dim],
    ];
    for _ in 0..5 {
        starts.push(
            (0..dim)
                .map(|_| radius * T::of(rng.gen_range(0.0..1.0)))
                .collect(),
        );
    }

    // Geometric step decay from `radius` down to `radius·1e−5`: the tail
    // steps pin the iterate to within ~1e−5·radius of the maximizer.
    let iters = iters.max(1);
    let decay = T::of(1e-5_f64.powf(1.0 / iters as f64));
    let mut best = T::zero(); // x = 0 is always feasible and scores f(0) − 0 = 0
    let mut g = vec![T::zero(); dim];
    for mut x in starts {
        best = best.max(objective(&x));
        let mut eta = radius;
        for _ in 0..iters {
            for v in g.iter_mut() {
                *v = T::zero();
            }
            f.add_grad(&x, &mut g);
            for i in 0..dim {
                let ai = alpha.get(i).copied().unwrap_or_else(T::zero);
                x[i] = (x[i] + eta * (g[i] - ai)).max(T::zero()).min(radius);
            }
            best = best.max(objective(&x));
            eta *= decay;
        }
    }
    best
}

/// `1 − 1/e`, the balancedness constant certified by the transform.
pub fn gamma_e<T: Real>() -> T {
    T::one() - T::e().recip()
}
