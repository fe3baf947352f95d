//! Nonsmooth-point detection along scaling rays.
//!
//! The potential transform integrates `t ↦ e^t·φ(f, x/t)` over `t ∈ (0, 1]`.
//! The integrand is smooth except where the gradient of `f` jumps along the
//! ray `t ↦ x/t`: budget saturations, piecewise-linear knots, and polymatroid
//! tight-set changes. Composite quadrature converges fast only on smooth
//! pieces, so this module reports every such `t` and the integrator splits
//! there.
//!
//! Crossings are found analytically where the ray stays a pure scaling of a
//! base point, and by monotone bisection elsewhere (every coordinate of
//! `x/t` is nonincreasing in `t`, hence so is any inner value).

use super::{coord_or_zero, dot_map, ValuationExpr};
use crate::polymatroid::{pm_ray_breakpoints, tight_set};
use crate::scalar::Real;

/// How points along the ray are produced for a given subtree: either the
/// subtree sees the raw ray `base/t`, or (below value-composing nodes) a
/// derived trajectory computed by the parent chain.
pub(crate) enum RayPath<'a, T: Real> {
    Pure(&'a [T]),
    Map(&'a dyn Fn(T, &mut Vec<T>)),
}

impl<T: Real> RayPath<'_, T> {
    fn point(&self, t: T, buf: &mut Vec<T>) {
        match self {
            RayPath::Pure(base) => {
                buf.clear();
                buf.extend(base.iter().map(|&v| v / t));
            }
            RayPath::Map(f) => f(t, buf),
        }
    }
}

/// All `t` strictly inside `(lo, hi)` where `t ↦ f(base/t)` can lose
/// smoothness, sorted ascending and deduplicated.
pub(crate) fn ray_breakpoints<T: Real>(
    expr: &ValuationExpr<T>,
    base: &[T],
    lo: T,
    hi: T,
) -> Vec<T> {
    let mut out = Vec::new();
    collect(expr, &RayPath::Pure(base), lo, hi, &mut out);
    out.retain(|t| *t > lo && *t < hi);
    out.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints are finite"));
    out.dedup_by(|a, b| (*a - *b).abs() <= T::of(1e-12) * (T::one() + b.abs()));
    out
}

/// Locates the unique `t ∈ (lo, hi)` with `value_at(t) = level` for a
/// nonincreasing `value_at`, if the level is strictly bracketed.
fn push_level_crossing<T: Real>(
    value_at: &mut dyn FnMut(T) -> T,
    level: T,
    lo: T,
    hi: T,
    out: &mut Vec<T>,
) {
    let v_lo = value_at(lo);
    let v_hi = value_at(hi);
    if !(v_lo > level && level > v_hi) {
        return;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..100 {
        let mid = (a + b) * T::of(0.5);
        if mid <= a || mid >= b {
            break;
        }
        if value_at(mid) > level {
            a = mid;
        } else {
            b = mid;
        }
    }
    out.push((a + b) * T::of(0.5));
}

fn collect<T: Real>(
    expr: &ValuationExpr<T>,
    path: &RayPath<'_, T>,
    lo: T,
    hi: T,
    out: &mut Vec<T>,
) {
    match expr {
        ValuationExpr::Linear { .. } => {}
        ValuationExpr::BudgetAdditive { weights, budget } => {
            if *budget <= T::zero() || weights.is_empty() {
                return;
            }
            match path {
                RayPath::Pure(base) => {
                    let mass = dot_map(weights, base);
                    if mass > T::zero() {
                        out.push(mass / *budget);
                    }
                }
                RayPath::Map(_) => {
                    let mut buf = Vec::new();
                    let mut value_at = |t: T| {
                        path.point(t, &mut buf);
                        dot_map(weights, &buf)
                    };
                    push_level_crossing(&mut value_at, *budget, lo, hi, out);
                }
            }
        }
        ValuationExpr::ConcaveScalar { func, inner } => {
            collect(inner, path, lo, hi, out);
            let kinks = func.kinks();
            if kinks.is_empty() {
                return;
            }
            // The inner value along the ray: analytic for a linear inner on
            // a pure ray (value c/t crosses level k at t = c/k), bisected
            // otherwise.
            if let (RayPath::Pure(base), ValuationExpr::Linear { weights }) = (path, &**inner) {
                let c = dot_map(weights, base);
                if c > T::zero() {
                    for k in kinks {
                        if k > T::zero() {
                            out.push(c / k);
                        }
                    }
                }
                return;
            }
            let mut buf = Vec::new();
            let mut value_at = |t: T| {
                path.point(t, &mut buf);
                inner.value(&buf)
            };
            for k in kinks {
                push_level_crossing(&mut value_at, k, lo, hi, out);
            }
        }
        ValuationExpr::Sum { terms } => {
            for term in terms {
                if term.coeff > T::zero() {
                    collect(&term.expr, path, lo, hi, out);
                }
            }
        }
        ValuationExpr::LinTransform { rows, inner } => match path {
            RayPath::Pure(base) => {
                // A·(base/t) = (A·base)/t stays a pure ray in the synthetic
                // space.
                let qbase: Vec<T> = rows.iter().map(|row| dot_map(row, base)).collect();
                collect(inner, &RayPath::Pure(&qbase), lo, hi, out);
            }
            RayPath::Map(_) => {
                let mapped = |t: T, buf: &mut Vec<T>| {
                    let mut tmp = Vec::new();
                    path.point(t, &mut tmp);
                    buf.clear();
                    buf.extend(rows.iter().map(|row| dot_map(row, &tmp)));
                };
                collect(inner, &RayPath::Map(&mapped), lo, hi, out);
            }
        },
        ValuationExpr::Compose { outer, inners } => {
            for g in inners {
                collect(g, path, lo, hi, out);
            }
            let mapped = |t: T, buf: &mut Vec<T>| {
                let mut tmp = Vec::new();
                path.point(t, &mut tmp);
                buf.clear();
                buf.extend(inners.iter().map(|g| g.value(&tmp)));
            };
            collect(outer, &RayPath::Map(&mapped), lo, hi, out);
        }
        ValuationExpr::Polymatroid { rank, scale } => match path {
            RayPath::Pure(base) => {
                let zbase: Vec<T> = scale
                    .iter()
                    .map(|(&c, &s)| s * coord_or_zero(base, c))
                    .collect();
                let bps = pm_ray_breakpoints(rank, &zbase, lo, hi)
                    .expect("rank oracle validated at construction");
                out.extend(bps);
            }
            RayPath::Map(_) => {
                // Tight sets grow with the point, so each element's
                // membership flips at most once as t increases (point
                // shrinking): bisect the flip per element.
                let mut buf = Vec::new();
                let mut member = |t: T, e: usize| {
                    path.point(t, &mut buf);
                    let z: Vec<T> = scale
                        .iter()
                        .map(|(&c, &s)| s * coord_or_zero(&buf, c))
                        .collect();
                    tight_set(rank, &z)
                        .expect("rank oracle validated at construction")
                        .contains(e)
                };
                for e in 0..scale.len() {
                    if !member(lo, e) || member(hi, e) {
                        continue;
                    }
                    let (mut a, mut b) = (lo, hi);
                    for _ in 0..100 {
                        let mid = (a + b) * T::of(0.5);
                        if mid <= a || mid >= b {
                            break;
                        }
                        if member(mid, e) {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    out.push((a + b) * T::of(0.5));
                }
            }
        },
    }
}
