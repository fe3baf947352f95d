//! Valuation expression algebra.
//!
//! A [`ValuationExpr`] denotes a function `f : ℝ₊^A → ℝ₊` that is zero at the
//! origin, monotone increasing, concave, and has coordinate-wise
//! nonincreasing upward gradients (right derivatives at kinks). The node
//! kinds are closed under these properties, so any tree built through the
//! validating constructors is a usable objective.
//!
//! Coordinates are dense indices ([`CoordId`]); evaluation takes a slice
//! indexed by coordinate, and coordinates beyond the slice read as zero.

pub mod check;
pub(crate) mod ray;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::polymatroid::{self, PolymatroidError, RankOracle};
use crate::scalar::Real;

/// Identifier of an allocation coordinate: a dense index into point vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Default)]
#[serde(transparent)]
pub struct CoordId(pub u32);

// Hand-written so coordinates parse both as JSON numbers and as the string
// keys JSON objects force on maps (including through the buffered content
// path taken inside tagged enums).
impl<'de> Deserialize<'de> for CoordId {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        struct IdVisitor;

        impl serde::de::Visitor<'_> for IdVisitor {
            type Value = CoordId;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a coordinate index")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<CoordId, E> {
                u32::try_from(v)
                    .map(CoordId)
                    .map_err(|_| E::custom(format!("coordinate index {v} out of range")))
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<CoordId, E> {
                u32::try_from(v)
                    .map(CoordId)
                    .map_err(|_| E::custom(format!("coordinate index {v} out of range")))
            }

            fn visit_str<E: serde::de::Error>(self, s: &str) -> Result<CoordId, E> {
                s.parse::<u32>()
                    .map(CoordId)
                    .map_err(|_| E::custom(format!("coordinate index {s:?} is not an integer")))
            }
        }

        deserializer.deserialize_any(IdVisitor)
    }
}

impl CoordId {
    /// Position of this coordinate in a dense vector.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CoordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Errors raised while constructing or evaluating valuations.
#[derive(Debug, Clone, thiserror::Error)]
pub enum ValuationError {
    /// A weight, coefficient, or scalar parameter is negative or NaN.
    #[error("negative or non-numeric parameter: {0}")]
    NegativeWeight(String),
    /// Structural arity disagrees (rows vs. inner dimension, inner list vs.
    /// outer arity, parameter list length, …).
    #[error("arity mismatch: {0}")]
    ArityMismatch(String),
    /// A node references a coordinate outside the declared space.
    #[error("unknown coordinate {coord} in a space of dimension {dim}")]
    UnknownCoord { coord: u32, dim: usize },
    /// The right derivative at the origin is not finite, so the valuation
    /// cannot participate in gradient-guided allocation.
    #[error("gradient unbounded at the origin: {0}")]
    UnboundedGradient(String),
    /// Evaluation point has a negative or non-finite coordinate.
    #[error("input coordinate {coord} is negative or non-finite: {value}")]
    NegativeInput { coord: usize, value: f64 },
    /// A rank-oracle problem surfaced through a polymatroid node.
    #[error(transparent)]
    Rank(#[from] PolymatroidError),
}

/// One-dimensional concave building blocks for [`ValuationExpr::ConcaveScalar`].
///
/// Each function maps `[0, ∞) → [0, ∞)`, is zero at zero, concave, and
/// monotone with a finite initial slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "ScalarConcaveRepr<T>",
    into = "ScalarConcaveRepr<T>",
    bound(
        serialize = "T: Real + Serialize",
        deserialize = "T: Real + Deserialize<'de>"
    )
)]
pub enum ScalarConcave<T> {
    /// `min(s, cap)`.
    Cap { cap: T },
    /// `ln(1 + rate·s)`.
    Log1p { rate: T },
    /// `1 − exp(−rate·s)`.
    ExpSat { rate: T },
    /// Piecewise-linear concave through the origin: interpolates the knots
    /// `(x_k, y_k)` (strictly increasing `x_k > 0`) and continues with
    /// `tail_slope` after the last knot. Segment slopes must be
    /// nonincreasing and nonnegative.
    Pwl { knots: Vec<(T, T)>, tail_slope: T },
}

/// Wire form of [`ScalarConcave`]: `{"name": …, "params": […]}`. For `pwl`
/// the parameters are the flattened knots followed by the tail slope.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScalarConcaveRepr<T> {
    name: String,
    params: Vec<T>,
}

impl<T: Real> From<ScalarConcave<T>> for ScalarConcaveRepr<T> {
    fn from(sc: ScalarConcave<T>) -> Self {
        match sc {
            ScalarConcave::Cap { cap } => ScalarConcaveRepr {
                name: "cap".into(),
                params: vec![cap],
            },
            ScalarConcave::Log1p { rate } => ScalarConcaveRepr {
                name: "log1p".into(),
                params: vec![rate],
            },
            ScalarConcave::ExpSat { rate } => ScalarConcaveRepr {
                name: "exp_sat".into(),
                params: vec![rate],
            },
            ScalarConcave::Pwl { knots, tail_slope } => {
                let mut params = Vec::with_capacity(knots.len() * 2 + 1);
                for (x, y) in knots {
                    params.push(x);
                    params.push(y);
                }
                params.push(tail_slope);
                ScalarConcaveRepr {
                    name: "pwl".into(),
                    params,
                }
            }
        }
    }
}

impl<T: Real> TryFrom<ScalarConcaveRepr<T>> for ScalarConcave<T> {
    type Error = ValuationError;

    fn try_from(repr: ScalarConcaveRepr<T>) -> Result<Self, ValuationError> {
        let one_param = |params: &[T]| -> Result<T, ValuationError> {
            if params.len() != 1 {
                return Err(ValuationError::ArityMismatch(format!(
                    "scalar function expects 1 parameter, got {}",
                    params.len()
                )));
            }
            Ok(params[0])
        };
        let sc = match repr.name.as_str() {
            "cap" => ScalarConcave::Cap {
                cap: one_param(&repr.params)?,
            },
            "log1p" => ScalarConcave::Log1p {
                rate: one_param(&repr.params)?,
            },
            "exp_sat" => ScalarConcave::ExpSat {
                rate: one_param(&repr.params)?,
            },
            "pwl" => {
                if repr.params.len() % 2 == 0 {
                    return Err(ValuationError::ArityMismatch(format!(
                        "pwl expects flattened knots plus a tail slope (odd count), got {}",
                        repr.params.len()
                    )));
                }
                let n_knots = repr.params.len() / 2;
                let knots = (0..n_knots)
                    .map(|k| (repr.params[2 * k], repr.params[2 * k + 1]))
                    .collect();
                ScalarConcave::Pwl {
                    knots,
                    tail_slope: repr.params[n_knots * 2],
                }
            }
            other => {
                return Err(ValuationError::ArityMismatch(format!(
                    "unknown scalar function name {other:?}"
                )))
            }
        };
        sc.validate()?;
        Ok(sc)
    }
}

impl<T: Real> ScalarConcave<T> {
    /// Checks parameter sanity, concavity of the segment slopes, and a
    /// finite initial slope.
    pub fn validate(&self) -> Result<(), ValuationError> {
        let nonneg = |v: T, what: &str| -> Result<(), ValuationError> {
            if v.is_nan() || v < T::zero() {
                return Err(ValuationError::NegativeWeight(format!("{what} is {v}")));
            }
            Ok(())
        };
        match self {
            ScalarConcave::Cap { cap } => {
                nonneg(*cap, "cap")?;
                if !cap.is_finite() {
                    return Err(ValuationError::UnboundedGradient(format!(
                        "cap parameter {cap} is not finite"
                    )));
                }
            }
            ScalarConcave::Log1p { rate } | ScalarConcave::ExpSat { rate } => {
                nonneg(*rate, "rate")?;
                if !rate.is_finite() {
                    return Err(ValuationError::UnboundedGradient(format!(
                        "initial slope {rate} is not finite"
                    )));
                }
            }
            ScalarConcave::Pwl { knots, tail_slope } => {
                nonneg(*tail_slope, "tail slope")?;
                if !tail_slope.is_finite() {
                    return Err(ValuationError::UnboundedGradient(
                        "tail slope is not finite".into(),
                    ));
                }
                let mut prev = (T::zero(), T::zero());
                let mut prev_slope = T::infinity();
                for &(x, y) in knots {
                    nonneg(x, "knot position")?;
                    nonneg(y, "knot value")?;
                    if !x.is_finite() || !y.is_finite() {
                        return Err(ValuationError::UnboundedGradient(
                            "knot coordinates must be finite".into(),
                        ));
                    }
                    if x <= prev.0 {
                        return Err(ValuationError::ArityMismatch(
                            "pwl knot positions must be strictly increasing and positive".into(),
                        ));
                    }
                    let slope = (y - prev.1) / (x - prev.0);
                    if slope < T::zero() {
                        return Err(ValuationError::NegativeWeight(
                            "pwl segment slope is negative".into(),
                        ));
                    }
                    if slope > prev_slope {
                        return Err(ValuationError::ArityMismatch(
                            "pwl segment slopes must be nonincreasing".into(),
                        ));
                    }
                    prev = (x, y);
                    prev_slope = slope;
                }
                if *tail_slope > prev_slope {
                    return Err(ValuationError::ArityMismatch(
                        "pwl tail slope exceeds the last segment slope".into(),
                    ));
                }
                if !self.slope_at_zero().is_finite() {
                    return Err(ValuationError::UnboundedGradient(
                        "initial slope is not finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Function value at `s ≥ 0`.
    pub fn value(&self, s: T) -> T {
        match self {
            ScalarConcave::Cap { cap } => s.min(*cap),
            ScalarConcave::Log1p { rate } => (*rate * s).ln_1p(),
            ScalarConcave::ExpSat { rate } => -(-(*rate * s)).exp_m1(),
            ScalarConcave::Pwl { knots, tail_slope } => {
                let mut prev = (T::zero(), T::zero());
                for &(x, y) in knots {
                    if s <= x {
                        let slope = (y - prev.1) / (x - prev.0);
                        return prev.1 + slope * (s - prev.0);
                    }
                    prev = (x, y);
                }
                prev.1 + *tail_slope * (s - prev.0)
            }
        }
    }

    /// Upward (right) derivative at `s ≥ 0`.
    pub fn right_slope(&self, s: T) -> T {
        match self {
            ScalarConcave::Cap { cap } => {
                if s < *cap {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ScalarConcave::Log1p { rate } => *rate / (T::one() + *rate * s),
            ScalarConcave::ExpSat { rate } => *rate * (-(*rate * s)).exp(),
            ScalarConcave::Pwl { knots, tail_slope } => {
                let mut prev = (T::zero(), T::zero());
                for &(x, y) in knots {
                    if s < x {
                        return (y - prev.1) / (x - prev.0);
                    }
                    prev = (x, y);
                }
                *tail_slope
            }
        }
    }

    /// Right derivative at the origin.
    pub fn slope_at_zero(&self) -> T {
        self.right_slope(T::zero())
    }

    /// Input values where the derivative jumps.
    pub fn kinks(&self) -> Vec<T> {
        match self {
            ScalarConcave::Cap { cap } => {
                if *cap > T::zero() {
                    vec![*cap]
                } else {
                    Vec::new()
                }
            }
            ScalarConcave::Log1p { .. } | ScalarConcave::ExpSat { .. } => Vec::new(),
            ScalarConcave::Pwl { knots, .. } => knots.iter().map(|&(x, _)| x).collect(),
        }
    }
}

/// A weighted term of a [`ValuationExpr::Sum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct SumTerm<T> {
    pub coeff: T,
    pub expr: ValuationExpr<T>,
}

/// Expression tree denoting a monotone concave diminishing-returns valuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "snake_case",
    bound(
        serialize = "T: Real + Serialize",
        deserialize = "T: Real + Deserialize<'de>"
    )
)]
pub enum ValuationExpr<T> {
    /// `⟨w, x⟩` with `w ≥ 0`.
    Linear { weights: BTreeMap<CoordId, T> },
    /// `min(⟨w, x⟩, budget)`.
    BudgetAdditive {
        weights: BTreeMap<CoordId, T>,
        budget: T,
    },
    /// `M(g(x))` for a 1-D concave `M` and an inner valuation `g`.
    ConcaveScalar {
        #[serde(rename = "fn")]
        func: ScalarConcave<T>,
        inner: Box<ValuationExpr<T>>,
    },
    /// `Σ_k coeff_k · f_k(x)` with `coeff_k ≥ 0`.
    Sum { terms: Vec<SumTerm<T>> },
    /// `g(Ax)` for a nonnegative matrix `A` (one sparse row per synthetic
    /// input of `g`).
    LinTransform {
        rows: Vec<BTreeMap<CoordId, T>>,
        inner: Box<ValuationExpr<T>>,
    },
    /// `h(g_1(x), …, g_k(x))`: `outer` reads synthetic coordinate `i` from
    /// the value of `inners[i]`.
    Compose {
        outer: Box<ValuationExpr<T>>,
        inners: Vec<ValuationExpr<T>>,
    },
    /// Polymatroid valuation over per-coordinate scaled mass: the ground
    /// element for each `scale` key `a` receives `scale[a] · x_a`.
    Polymatroid {
        rank: RankOracle<T>,
        scale: BTreeMap<CoordId, T>,
    },
}

fn validate_weights<T: Real>(
    weights: &BTreeMap<CoordId, T>,
    what: &str,
) -> Result<(), ValuationError> {
    for (c, w) in weights {
        if w.is_nan() || *w < T::zero() {
            return Err(ValuationError::NegativeWeight(format!(
                "{what} for coordinate {c} is {w}"
            )));
        }
        if !w.is_finite() {
            return Err(ValuationError::UnboundedGradient(format!(
                "{what} for coordinate {c} is infinite"
            )));
        }
    }
    Ok(())
}

/// Reads coordinate `c` from a dense point, treating absent entries as zero.
#[inline]
pub(crate) fn coord_or_zero<T: Real>(x: &[T], c: CoordId) -> T {
    x.get(c.index()).copied().unwrap_or_else(T::zero)
}

pub(crate) fn dot_map<T: Real>(weights: &BTreeMap<CoordId, T>, x: &[T]) -> T {
    let mut acc = T::zero();
    for (&c, &w) in weights {
        acc += w * coord_or_zero(x, c);
    }
    acc
}

impl<T: Real> ValuationExpr<T> {
    /// Builds `⟨w, x⟩`.
    pub fn linear(
        weights: impl IntoIterator<Item = (CoordId, T)>,
    ) -> Result<Self, ValuationError> {
        let weights: BTreeMap<_, _> = weights.into_iter().collect();
        validate_weights(&weights, "linear weight")?;
        Ok(ValuationExpr::Linear { weights })
    }

    /// Builds `min(⟨w, x⟩, budget)`.
    pub fn budget_additive(
        weights: impl IntoIterator<Item = (CoordId, T)>,
        budget: T,
    ) -> Result<Self, ValuationError> {
        let weights: BTreeMap<_, _> = weights.into_iter().collect();
        validate_weights(&weights, "budget-additive weight")?;
        if budget.is_nan() || budget < T::zero() {
            return Err(ValuationError::NegativeWeight(format!(
                "budget is {budget}"
            )));
        }
        if !budget.is_finite() {
            return Err(ValuationError::NegativeWeight("budget is infinite".into()));
        }
        Ok(ValuationExpr::BudgetAdditive { weights, budget })
    }

    /// Wraps `inner` with a 1-D concave function.
    pub fn concave(func: ScalarConcave<T>, inner: Self) -> Result<Self, ValuationError> {
        func.validate()?;
        Ok(ValuationExpr::ConcaveScalar {
            func,
            inner: Box::new(inner),
        })
    }

    /// Builds a nonnegative combination of valuations.
    pub fn sum(terms: impl IntoIterator<Item = (T, Self)>) -> Result<Self, ValuationError> {
        let terms: Vec<SumTerm<T>> = terms
            .into_iter()
            .map(|(coeff, expr)| SumTerm { coeff, expr })
            .collect();
        for t in &terms {
            if t.coeff.is_nan() || t.coeff < T::zero() {
                return Err(ValuationError::NegativeWeight(format!(
                    "sum coefficient is {}",
                    t.coeff
                )));
            }
            if !t.coeff.is_finite() {
                return Err(ValuationError::UnboundedGradient(
                    "sum coefficient is infinite".into(),
                ));
            }
        }
        Ok(ValuationExpr::Sum { terms })
    }

    /// Builds `inner(Ax)`; `rows[i]` is the sparse row producing synthetic
    /// input `i` of `inner`.
    pub fn lin_transform(
        rows: Vec<BTreeMap<CoordId, T>>,
        inner: Self,
    ) -> Result<Self, ValuationError> {
        for row in &rows {
            validate_weights(row, "matrix entry")?;
        }
        let need = inner.min_dim();
        if need > rows.len() {
            return Err(ValuationError::ArityMismatch(format!(
                "inner expression reads {need} synthetic inputs but only {} rows are given",
                rows.len()
            )));
        }
        Ok(ValuationExpr::LinTransform {
            rows,
            inner: Box::new(inner),
        })
    }

    /// Builds `outer(inners[0](x), …, inners[k−1](x))`.
    pub fn compose(outer: Self, inners: Vec<Self>) -> Result<Self, ValuationError> {
        let need = outer.min_dim();
        if need > inners.len() {
            return Err(ValuationError::ArityMismatch(format!(
                "outer expression reads {need} inputs but only {} inners are given",
                inners.len()
            )));
        }
        Ok(ValuationExpr::Compose {
            outer: Box::new(outer),
            inners,
        })
    }

    /// Builds the polymatroid valuation of `rank` over scaled coordinates.
    pub fn polymatroid(
        rank: RankOracle<T>,
        scale: impl IntoIterator<Item = (CoordId, T)>,
    ) -> Result<Self, ValuationError> {
        let scale: BTreeMap<_, _> = scale.into_iter().collect();
        validate_weights(&scale, "polymatroid scale")?;
        rank.validate(scale.len())?;
        Ok(ValuationExpr::Polymatroid { rank, scale })
    }

    /// Re-runs every constructor check on an existing tree (used after
    /// deserialization, which bypasses the constructors).
    pub fn validate(&self) -> Result<(), ValuationError> {
        match self {
            ValuationExpr::Linear { weights } => validate_weights(weights, "linear weight"),
            ValuationExpr::BudgetAdditive { weights, budget } => {
                validate_weights(weights, "budget-additive weight")?;
                if budget.is_nan() || *budget < T::zero() || !budget.is_finite() {
                    return Err(ValuationError::NegativeWeight(format!(
                        "budget is {budget}"
                    )));
                }
                Ok(())
            }
            ValuationExpr::ConcaveScalar { func, inner } => {
                func.validate()?;
                inner.validate()
            }
            ValuationExpr::Sum { terms } => {
                for t in &terms[..] {
                    if t.coeff.is_nan() || t.coeff < T::zero() || !t.coeff.is_finite() {
                        return Err(ValuationError::NegativeWeight(format!(
                            "sum coefficient is {}",
                            t.coeff
                        )));
                    }
                    t.expr.validate()?;
                }
                Ok(())
            }
            ValuationExpr::LinTransform { rows, inner } => {
                for row in rows {
                    validate_weights(row, "matrix entry")?;
                }
                if inner.min_dim() > rows.len() {
                    return Err(ValuationError::ArityMismatch(format!(
                        "inner expression reads {} synthetic inputs but only {} rows are given",
                        inner.min_dim(),
                        rows.len()
                    )));
                }
                inner.validate()
            }
            ValuationExpr::Compose { outer, inners } => {
                if outer.min_dim() > inners.len() {
                    return Err(ValuationError::ArityMismatch(format!(
                        "outer expression reads {} inputs but only {} inners are given",
                        outer.min_dim(),
                        inners.len()
                    )));
                }
                outer.validate()?;
                for g in inners {
                    g.validate()?;
                }
                Ok(())
            }
            ValuationExpr::Polymatroid { rank, scale } => {
                validate_weights(scale, "polymatroid scale")?;
                rank.validate(scale.len())?;
                Ok(())
            }
        }
    }

    /// Smallest dimension of a point vector that covers every referenced
    /// coordinate (in the expression's own coordinate space).
    pub fn min_dim(&self) -> usize {
        let max_key = |m: &BTreeMap<CoordId, T>| {
            m.keys().next_back().map(|c| c.index() + 1).unwrap_or(0)
        };
        match self {
            ValuationExpr::Linear { weights } => max_key(weights),
            ValuationExpr::BudgetAdditive { weights, .. } => max_key(weights),
            ValuationExpr::ConcaveScalar { inner, .. } => inner.min_dim(),
            ValuationExpr::Sum { terms } => {
                terms.iter().map(|t| t.expr.min_dim()).max().unwrap_or(0)
            }
            ValuationExpr::LinTransform { rows, .. } => {
                rows.iter().map(max_key).max().unwrap_or(0)
            }
            ValuationExpr::Compose { inners, .. } => {
                inners.iter().map(|g| g.min_dim()).max().unwrap_or(0)
            }
            ValuationExpr::Polymatroid { scale, .. } => max_key(scale),
        }
    }

    /// Rejects coordinates at or beyond `dim`.
    pub fn check_coords(&self, dim: usize) -> Result<(), ValuationError> {
        let over = self.min_dim();
        if over > dim {
            return Err(ValuationError::UnknownCoord {
                coord: over as u32 - 1,
                dim,
            });
        }
        Ok(())
    }

    fn ensure_valid_point(x: &[T]) -> Result<(), ValuationError> {
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() || *v < T::zero() {
                return Err(ValuationError::NegativeInput {
                    coord: i,
                    value: v.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Evaluates the valuation at `x ≥ 0`.
    pub fn eval(&self, x: &[T]) -> Result<T, ValuationError> {
        Self::ensure_valid_point(x)?;
        Ok(self.value(x))
    }

    /// Upward gradient at `x ≥ 0`, sized to cover both `x` and every
    /// referenced coordinate.
    pub fn grad(&self, x: &[T]) -> Result<Vec<T>, ValuationError> {
        Self::ensure_valid_point(x)?;
        Ok(self.gradient(x))
    }

    /// Unchecked evaluation (callers guarantee `x ≥ 0`).
    pub(crate) fn value(&self, x: &[T]) -> T {
        match self {
            ValuationExpr::Linear { weights } => dot_map(weights, x),
            ValuationExpr::BudgetAdditive { weights, budget } => dot_map(weights, x).min(*budget),
            ValuationExpr::ConcaveScalar { func, inner } => func.value(inner.value(x)),
            ValuationExpr::Sum { terms } => {
                let mut acc = T::zero();
                for t in terms {
                    if t.coeff > T::zero() {
                        acc += t.coeff * t.expr.value(x);
                    }
                }
                acc
            }
            ValuationExpr::LinTransform { rows, inner } => {
                let q: Vec<T> = rows.iter().map(|row| dot_map(row, x)).collect();
                inner.value(&q)
            }
            ValuationExpr::Compose { outer, inners } => {
                let q: Vec<T> = inners.iter().map(|g| g.value(x)).collect();
                outer.value(&q)
            }
            ValuationExpr::Polymatroid { rank, scale } => {
                let z: Vec<T> = scale
                    .iter()
                    .map(|(&c, &s)| s * coord_or_zero(x, c))
                    .collect();
                polymatroid::pm_value(rank, &z).expect("rank oracle validated at construction")
            }
        }
    }

    /// Unchecked dense gradient.
    pub(crate) fn gradient(&self, x: &[T]) -> Vec<T> {
        let dim = self.min_dim().max(x.len());
        let mut out = vec![T::zero(); dim];
        self.grad_into(x, T::one(), &mut out);
        out
    }

    /// Accumulates `factor · ∇f(x)` into `out`.
    pub(crate) fn grad_into(&self, x: &[T], factor: T, out: &mut [T]) {
        if factor == T::zero() {
            return;
        }
        match self {
            ValuationExpr::Linear { weights } => {
                for (&c, &w) in weights {
                    out[c.index()] += factor * w;
                }
            }
            ValuationExpr::BudgetAdditive { weights, budget } => {
                if dot_map(weights, x) < *budget {
                    for (&c, &w) in weights {
                        out[c.index()] += factor * w;
                    }
                }
            }
            ValuationExpr::ConcaveScalar { func, inner } => {
                let v = inner.value(x);
                inner.grad_into(x, factor * func.right_slope(v), out);
            }
            ValuationExpr::Sum { terms } => {
                for t in terms {
                    t.expr.grad_into(x, factor * t.coeff, out);
                }
            }
            ValuationExpr::LinTransform { rows, inner } => {
                let q: Vec<T> = rows.iter().map(|row| dot_map(row, x)).collect();
                let mut gq = vec![T::zero(); rows.len()];
                inner.grad_into(&q, factor, &mut gq);
                for (row, &g) in rows.iter().zip(gq.iter()) {
                    if g != T::zero() {
                        for (&c, &w) in row {
                            out[c.index()] += g * w;
                        }
                    }
                }
            }
            ValuationExpr::Compose { outer, inners } => {
                let q: Vec<T> = inners.iter().map(|g| g.value(x)).collect();
                let mut gq = vec![T::zero(); inners.len()];
                outer.grad_into(&q, factor, &mut gq);
                for (g, &gi) in inners.iter().zip(gq.iter()) {
                    g.grad_into(x, gi, out);
                }
            }
            ValuationExpr::Polymatroid { rank, scale } => {
                let z: Vec<T> = scale
                    .iter()
                    .map(|(&c, &s)| s * coord_or_zero(x, c))
                    .collect();
                let g = polymatroid::pm_grad(rank, &z)
                    .expect("rank oracle validated at construction");
                for ((&c, &s), ge) in scale.iter().zip(g.iter()) {
                    out[c.index()] += factor * s * *ge;
                }
            }
        }
    }

    /// Finite bound on the gradient everywhere: `‖∇f(0)‖∞` (gradients are
    /// coordinate-wise nonincreasing, so the origin attains the maximum).
    pub fn grad_bound(&self) -> T {
        let zero = vec![T::zero(); self.min_dim()];
        self.gradient(&zero)
            .into_iter()
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Restriction to the coordinates in `keep`: evaluating the result
    /// anywhere equals evaluating `self` with all other coordinates zeroed.
    pub fn restrict(&self, keep: &BTreeSet<CoordId>) -> Self {
        let filter_map = |m: &BTreeMap<CoordId, T>| -> BTreeMap<CoordId, T> {
            m.iter()
                .filter(|(c, _)| keep.contains(c))
                .map(|(&c, &w)| (c, w))
                .collect()
        };
        match self {
            ValuationExpr::Linear { weights } => ValuationExpr::Linear {
                weights: filter_map(weights),
            },
            ValuationExpr::BudgetAdditive { weights, budget } => ValuationExpr::BudgetAdditive {
                weights: filter_map(weights),
                budget: *budget,
            },
            ValuationExpr::ConcaveScalar { func, inner } => ValuationExpr::ConcaveScalar {
                func: func.clone(),
                inner: Box::new(inner.restrict(keep)),
            },
            ValuationExpr::Sum { terms } => ValuationExpr::Sum {
                terms: terms
                    .iter()
                    .map(|t| SumTerm {
                        coeff: t.coeff,
                        expr: t.expr.restrict(keep),
                    })
                    .collect(),
            },
            ValuationExpr::LinTransform { rows, inner } => ValuationExpr::LinTransform {
                rows: rows.iter().map(filter_map).collect(),
                inner: inner.clone(),
            },
            ValuationExpr::Compose { outer, inners } => ValuationExpr::Compose {
                outer: outer.clone(),
                inners: inners.iter().map(|g| g.restrict(keep)).collect(),
            },
            // The ground set is positional in the sorted key order, so keys
            // must stay; zeroing the scale removes the coordinate's effect.
            ValuationExpr::Polymatroid { rank, scale } => ValuationExpr::Polymatroid {
                rank: rank.clone(),
                scale: scale
                    .iter()
                    .map(|(&c, &s)| (c, if keep.contains(&c) { s } else { T::zero() }))
                    .collect(),
            },
        }
    }

    /// Parses a JSON expression and validates it.
    pub fn from_json(s: &str) -> Result<Self, ValuationError>
    where
        T: for<'de> Deserialize<'de>,
    {
        let expr: Self = serde_json::from_str(s).map_err(|e| {
            ValuationError::ArityMismatch(format!("malformed expression JSON: {e}"))
        })?;
        expr.validate()?;
        Ok(expr)
    }

    /// Serializes to the JSON wire form.
    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("expression trees always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(i: u32) -> CoordId {
        CoordId(i)
    }

    fn min_x_1() -> ValuationExpr<f64> {
        ValuationExpr::budget_additive([(c(0), 1.0)], 1.0).unwrap()
    }

    #[test]
    fn linear_eval_and_grad() {
        let f = ValuationExpr::linear([(c(0), 2.0), (c(1), 0.5)]).unwrap();
        assert_eq!(f.eval(&[1.0, 2.0]).unwrap(), 3.0);
        assert_eq!(f.grad(&[1.0, 2.0]).unwrap(), vec![2.0, 0.5]);
        assert_eq!(f.eval(&[]).unwrap(), 0.0);
        assert_eq!(f.min_dim(), 2);
    }

    #[test]
    fn budget_additive_saturates_with_right_derivative_zero() {
        let f: ValuationExpr<f64> =
            ValuationExpr::budget_additive([(c(0), 1.0), (c(1), 1.0)], 1.0).unwrap();
        assert_eq!(f.eval(&[0.2, 0.3]).unwrap(), 0.5);
        assert_eq!(f.grad(&[0.2, 0.3]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(f.eval(&[0.7, 0.6]).unwrap(), 1.0);
        assert_eq!(f.grad(&[0.7, 0.6]).unwrap(), vec![0.0, 0.0]);
        // Exactly at the budget the upward derivative is already zero.
        assert_eq!(f.grad(&[1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn concave_scalar_values_and_slopes() {
        let log = ScalarConcave::Log1p { rate: 2.0 };
        assert!((log.value(1.0) - 3.0f64.ln()).abs() < 1e-15);
        assert!((log.right_slope(1.0) - 2.0 / 3.0).abs() < 1e-15);
        let sat = ScalarConcave::ExpSat { rate: 1.0 };
        assert!((sat.value(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let pwl = ScalarConcave::Pwl {
            knots: vec![(1.0, 2.0), (2.0, 3.0)],
            tail_slope: 0.25,
        };
        assert_eq!(pwl.value(0.5), 1.0);
        assert_eq!(pwl.value(1.5), 2.5);
        assert_eq!(pwl.value(3.0), 3.25);
        assert_eq!(pwl.right_slope(1.0), 1.0); // right side of the first knot
        assert_eq!(pwl.right_slope(2.0), 0.25);
        assert_eq!(pwl.kinks(), vec![1.0, 2.0]);
    }

    #[test]
    fn infinite_initial_slope_is_rejected() {
        let err = ScalarConcave::Log1p {
            rate: f64::INFINITY,
        }
        .validate()
        .unwrap_err();
        assert!(matches!(err, ValuationError::UnboundedGradient(_)));
        let err = ScalarConcave::Pwl {
            knots: vec![(1.0, f64::INFINITY)],
            tail_slope: 0.0,
        }
        .validate()
        .unwrap_err();
        assert!(matches!(err, ValuationError::UnboundedGradient(_)));
    }

    #[test]
    fn negative_parameters_are_rejected() {
        assert!(matches!(
            ValuationExpr::linear([(c(0), -1.0)]).unwrap_err(),
            ValuationError::NegativeWeight(_)
        ));
        assert!(matches!(
            ValuationExpr::budget_additive([(c(0), 1.0)], -0.5).unwrap_err(),
            ValuationError::NegativeWeight(_)
        ));
        assert!(matches!(
            ValuationExpr::sum([(-1.0, min_x_1())]).unwrap_err(),
            ValuationError::NegativeWeight(_)
        ));
    }

    #[test]
    fn negative_input_is_rejected() {
        let f = min_x_1();
        assert!(matches!(
            f.eval(&[-0.1]).unwrap_err(),
            ValuationError::NegativeInput { coord: 0, .. }
        ));
    }

    #[test]
    fn compose_arity_is_checked() {
        let outer = ValuationExpr::linear([(c(0), 1.0), (c(1), 1.0)]).unwrap();
        let inner = min_x_1();
        assert!(matches!(
            ValuationExpr::compose(outer, vec![inner]).unwrap_err(),
            ValuationError::ArityMismatch(_)
        ));
    }

    #[test]
    fn lin_transform_chain_rule() {
        // h(x) = min(q, 1) with q = 0.5·x_0 + 2·x_1.
        let inner = min_x_1();
        let row: BTreeMap<CoordId, f64> = [(c(0), 0.5), (c(1), 2.0)].into_iter().collect();
        let h = ValuationExpr::lin_transform(vec![row], inner).unwrap();
        assert_eq!(h.eval(&[1.0, 0.1]).unwrap(), 0.7);
        assert_eq!(h.grad(&[1.0, 0.1]).unwrap(), vec![0.5, 2.0]);
        assert_eq!(h.eval(&[2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(h.grad(&[2.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn compose_chain_rule() {
        // h(x) = min(x_0, 1) + min(x_1, 1) through a linear outer.
        let outer = ValuationExpr::linear([(c(0), 1.0), (c(1), 1.0)]).unwrap();
        let g0 = min_x_1();
        let g1 = ValuationExpr::budget_additive([(c(1), 1.0)], 1.0).unwrap();
        let h = ValuationExpr::compose(outer, vec![g0, g1]).unwrap();
        assert_eq!(h.eval(&[0.5, 2.0]).unwrap(), 1.5);
        assert_eq!(h.grad(&[0.5, 2.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn sum_with_zero_coefficient_contributes_nothing() {
        let f = ValuationExpr::sum([(0.0, min_x_1()), (2.0, min_x_1())]).unwrap();
        assert_eq!(f.eval(&[0.25]).unwrap(), 0.5);
        assert_eq!(f.grad(&[0.25]).unwrap(), vec![2.0]);
    }

    #[test]
    fn restrict_zeroes_removed_coordinates() {
        let f: ValuationExpr<f64> =
            ValuationExpr::budget_additive([(c(0), 1.0), (c(1), 1.0)], 1.0).unwrap();
        let keep: BTreeSet<CoordId> = [c(1)].into_iter().collect();
        let r = f.restrict(&keep);
        assert_eq!(r.eval(&[5.0, 0.3]).unwrap(), 0.3);
        let g = r.grad(&[5.0, 0.3]).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 1.0);
        // Idempotence and the empty restriction.
        assert_eq!(r.restrict(&keep), r);
        let none = f.restrict(&BTreeSet::new());
        assert_eq!(none.eval(&[9.0, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn restrict_keeps_polymatroid_ground_set_aligned() {
        let rank = RankOracle::CardinalityCap { k: 1.0 };
        let f = ValuationExpr::polymatroid(rank, [(c(0), 1.0), (c(1), 1.0)]).unwrap();
        let keep: BTreeSet<CoordId> = [c(1)].into_iter().collect();
        let r = f.restrict(&keep);
        assert_eq!(r.eval(&[0.9, 0.4]).unwrap(), 0.4);
        let g = r.grad(&[0.9, 0.4]).unwrap();
        assert_eq!(g, vec![0.0, 1.0]);
    }

    #[test]
    fn grad_bound_is_the_origin_gradient_sup_norm() {
        let f = ValuationExpr::sum([
            (1.0, min_x_1()),
            (
                1.0,
                ValuationExpr::budget_additive([(c(1), 1.0)], 1.0).unwrap(),
            ),
        ])
        .unwrap();
        assert_eq!(f.grad_bound(), 1.0);
        let g = ValuationExpr::linear([(c(0), 3.0), (c(1), 0.5)]).unwrap();
        assert_eq!(g.grad_bound(), 3.0);
    }

    #[test]
    fn json_round_trip_matches_wire_format() {
        let f = ValuationExpr::sum([
            (1.5, min_x_1()),
            (
                1.0,
                ValuationExpr::concave(
                    ScalarConcave::Log1p { rate: 2.0 },
                    ValuationExpr::linear([(c(1), 1.0)]).unwrap(),
                )
                .unwrap(),
            ),
        ])
        .unwrap();
        let json = f.to_json();
        let back: ValuationExpr<f64> = ValuationExpr::from_json(&json).unwrap();
        assert_eq!(back, f);

        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["kind"], "sum");
        assert_eq!(v["terms"][0]["expr"]["kind"], "budget_additive");
        assert_eq!(v["terms"][0]["expr"]["weights"]["0"], 1.0);
        assert_eq!(v["terms"][1]["expr"]["fn"]["name"], "log1p");
    }

    #[test]
    fn json_parse_validates() {
        let bad = r#"{"kind":"linear","weights":{"0":-2.0}}"#;
        assert!(ValuationExpr::<f64>::from_json(bad).is_err());
        let unknown_fn = r#"{"kind":"concave_scalar","fn":{"name":"pow","params":[0.5]},
                             "inner":{"kind":"linear","weights":{"0":1.0}}}"#;
        assert!(ValuationExpr::<f64>::from_json(unknown_fn).is_err());
    }

    #[test]
    fn works_in_f32_too() {
        let f: ValuationExpr<f32> =
            ValuationExpr::budget_additive([(c(0), 1.0f32)], 1.0f32).unwrap();
        assert_eq!(f.eval(&[0.25f32]).unwrap(), 0.25f32);
        assert_eq!(f.grad_bound(), 1.0f32);
    }
}
