//! Sampling-based verification of the diminishing-returns contract.
//!
//! [`check_cdr`] probes a valuation at random points and rejects it on the
//! first observed violation of: value zero at the origin, nonnegative and
//! monotone values, coordinate-wise nonincreasing gradients, midpoint
//! concavity, or disagreement between the analytic gradient and central
//! finite differences (checked away from kinks).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ValuationExpr;
use crate::scalar::Real;

/// Anything the checker (and instance smoke tests) can probe: a value plus
/// an upward gradient over a fixed-dimension nonnegative orthant.
pub trait CdrValuation<T: Real> {
    /// Dimension of the point vectors this valuation reads.
    fn input_len(&self) -> usize;
    /// Function value at `x ≥ 0`.
    fn value_at(&self, x: &[T]) -> T;
    /// Upward gradient at `x ≥ 0`; must have length `input_len()`.
    fn gradient_at(&self, x: &[T]) -> Vec<T>;
}

impl<T: Real> CdrValuation<T> for ValuationExpr<T> {
    fn input_len(&self) -> usize {
        self.min_dim()
    }

    fn value_at(&self, x: &[T]) -> T {
        self.value(x)
    }

    fn gradient_at(&self, x: &[T]) -> Vec<T> {
        let mut g = self.gradient(x);
        g.truncate(self.min_dim().max(x.len()));
        g
    }
}

/// Deterministic source of probe points for [`check_cdr`].
pub struct PointSampler {
    rng: ChaCha8Rng,
    scale: f64,
}

impl PointSampler {
    /// Sampler over `[0, 2]` per coordinate with roughly 30% exact zeros.
    pub fn new(seed: u64) -> Self {
        Self::with_scale(seed, 2.0)
    }

    /// Sampler over `[0, scale]` per coordinate.
    pub fn with_scale(seed: u64, scale: f64) -> Self {
        assert!(scale > 0.0, "sampler scale must be positive");
        PointSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale,
        }
    }

    /// A random nonnegative point (sparse: coordinates are zero with
    /// probability 0.3 so boundary faces get probed).
    pub fn point<T: Real>(&mut self, dim: usize) -> Vec<T> {
        (0..dim)
            .map(|_| {
                if self.rng.gen_bool(0.3) {
                    T::zero()
                } else {
                    T::of(self.rng.gen_range(0.0..self.scale))
                }
            })
            .collect()
    }

    /// A small nonnegative perturbation (for monotonicity probes `y = x + u`).
    pub fn bump<T: Real>(&mut self, dim: usize) -> Vec<T> {
        (0..dim)
            .map(|_| {
                if self.rng.gen_bool(0.3) {
                    T::zero()
                } else {
                    T::of(self.rng.gen_range(0.0..self.scale * 0.5))
                }
            })
            .collect()
    }

    fn mix(&mut self) -> f64 {
        self.rng.gen_range(0.05..0.95)
    }

    fn coord_subset(&mut self, dim: usize, max: usize) -> Vec<usize> {
        if dim <= max {
            return (0..dim).collect();
        }
        let mut picked = Vec::with_capacity(max);
        while picked.len() < max {
            let i = self.rng.gen_range(0..dim);
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
        picked
    }
}

/// First observed violation of the diminishing-returns contract, with the
/// witnessing points (as `f64` regardless of the working scalar).
#[derive(Debug, Clone, thiserror::Error)]
pub enum PropertyViolation {
    #[error("f(0) = {value}, expected 0")]
    NonzeroAtOrigin { value: f64 },
    #[error("negative value {value} at {x:?}")]
    NegativeValue { x: Vec<f64>, value: f64 },
    #[error("monotonicity violated: f(x) = {fx} but f(y) = {fy} for y ≥ x; x = {x:?}, y = {y:?}")]
    ValueDecrease {
        x: Vec<f64>,
        y: Vec<f64>,
        fx: f64,
        fy: f64,
    },
    #[error("gradient coordinate {coord} is negative ({grad}) at {x:?}")]
    NegativeGradient {
        x: Vec<f64>,
        coord: usize,
        grad: f64,
    },
    #[error(
        "diminishing returns violated at coordinate {coord}: gradient {gx} at x grows to {gy} at y ≥ x; x = {x:?}, y = {y:?}"
    )]
    GradientIncrease {
        x: Vec<f64>,
        y: Vec<f64>,
        coord: usize,
        gx: f64,
        gy: f64,
    },
    #[error(
        "concavity violated: f(mid) = {mid_value} below the chord value {chord}; x = {x:?}, y = {y:?}"
    )]
    ConcavityGap {
        x: Vec<f64>,
        y: Vec<f64>,
        mid_value: f64,
        chord: f64,
    },
    #[error(
        "gradient mismatch at coordinate {coord}: analytic {grad} vs central difference {fd} at {x:?}"
    )]
    GradientMismatch {
        x: Vec<f64>,
        coord: usize,
        grad: f64,
        fd: f64,
    },
}

/// Statistics from a passed check.
#[derive(Debug, Clone, Default)]
pub struct CdrReport {
    /// Number of sampled base points.
    pub samples: usize,
    /// Individual finite-difference comparisons performed.
    pub fd_checks: usize,
    /// Finite-difference probes skipped because they straddled a kink.
    pub fd_kink_skips: usize,
    /// Largest relative error between analytic gradients and central
    /// differences over all non-skipped probes.
    pub max_fd_rel_err: f64,
    /// Smallest (most negative) concavity slack seen, scaled.
    pub min_concavity_slack: f64,
    /// Smallest monotonicity slack seen, scaled.
    pub min_monotone_slack: f64,
}

const FD_COORDS_PER_POINT: usize = 4;

/// Samples `samples` random point pairs and verifies the full contract at
/// tolerance `tol`; returns statistics or the first violation.
pub fn check_cdr<T: Real, F: CdrValuation<T>>(
    f: &F,
    sampler: &mut PointSampler,
    samples: usize,
    tol: f64,
) -> Result<CdrReport, PropertyViolation> {
    let dim = f.input_len();
    let tol_t = T::of(tol);
    let to64 = |v: &[T]| v.iter().map(|w| w.as_f64()).collect::<Vec<f64>>();

    let mut report = CdrReport {
        samples,
        min_concavity_slack: f64::INFINITY,
        min_monotone_slack: f64::INFINITY,
        ..CdrReport::default()
    };

    let origin = vec![T::zero(); dim];
    let f0 = f.value_at(&origin);
    if f0.abs() > tol_t {
        return Err(PropertyViolation::NonzeroAtOrigin { value: f0.as_f64() });
    }
    for (i, g) in f.gradient_at(&origin).iter().enumerate() {
        if *g < -tol_t {
            return Err(PropertyViolation::NegativeGradient {
                x: to64(&origin),
                coord: i,
                grad: g.as_f64(),
            });
        }
    }

    for _ in 0..samples {
        let x: Vec<T> = sampler.point(dim);
        let u: Vec<T> = sampler.bump(dim);
        let y: Vec<T> = x.iter().zip(u.iter()).map(|(&a, &b)| a + b).collect();

        let fx = f.value_at(&x);
        let fy = f.value_at(&y);
        if fx < -tol_t {
            return Err(PropertyViolation::NegativeValue {
                x: to64(&x),
                value: fx.as_f64(),
            });
        }
        let mono_scale = T::one() + fx.abs();
        let mono_slack = (fy - fx) / mono_scale;
        report.min_monotone_slack = report.min_monotone_slack.min(mono_slack.as_f64());
        if mono_slack < -tol_t {
            return Err(PropertyViolation::ValueDecrease {
                x: to64(&x),
                y: to64(&y),
                fx: fx.as_f64(),
                fy: fy.as_f64(),
            });
        }

        let gx = f.gradient_at(&x);
        let gy = f.gradient_at(&y);
        for i in 0..dim {
            if gx[i] < -tol_t {
                return Err(PropertyViolation::NegativeGradient {
                    x: to64(&x),
                    coord: i,
                    grad: gx[i].as_f64(),
                });
            }
            let scale = T::one() + gx[i].abs();
            if gy[i] - gx[i] > tol_t * scale {
                return Err(PropertyViolation::GradientIncrease {
                    x: to64(&x),
                    y: to64(&y),
                    coord: i,
                    gx: gx[i].as_f64(),
                    gy: gy[i].as_f64(),
                });
            }
        }

        // Midpoint concavity along the segment [x, y].
        let lambda = T::of(sampler.mix());
        let z: Vec<T> = x
            .iter()
            .zip(y.iter())
            .map(|(&a, &b)| lambda * a + (T::one() - lambda) * b)
            .collect();
        let fz = f.value_at(&z);
        let chord = lambda * fx + (T::one() - lambda) * fy;
        let conc_scale = T::one() + fx.abs() + fy.abs();
        let conc_slack = (fz - chord) / conc_scale;
        report.min_concavity_slack = report.min_concavity_slack.min(conc_slack.as_f64());
        if conc_slack < -tol_t {
            return Err(PropertyViolation::ConcavityGap {
                x: to64(&x),
                y: to64(&y),
                mid_value: fz.as_f64(),
                chord: chord.as_f64(),
            });
        }

        // Finite-difference agreement on a few coordinates. One-sided
        // differences that straddle a kink disagree with each other; those
        // probes are skipped rather than judged.
        let x_sup = x.iter().fold(T::zero(), |a, &b| a.max(b));
        let h = T::of(1e-6) * (T::one() + x_sup);
        let mut probe = x.clone();
        for i in sampler.coord_subset(dim, FD_COORDS_PER_POINT) {
            if x[i] < h {
                continue; // too close to the boundary for a central stencil
            }
            probe[i] = x[i] + h;
            let f_plus = f.value_at(&probe);
            probe[i] = x[i] - h;
            let f_minus = f.value_at(&probe);
            probe[i] = x[i];

            let right = (f_plus - fx) / h;
            let left = (fx - f_minus) / h;
            let fd_scale = T::one() + right.abs().max(left.abs());
            if (right - left).abs() > T::of(100.0) * tol_t * fd_scale {
                report.fd_kink_skips += 1;
                continue;
            }
            let central = (f_plus - f_minus) / (h + h);
            report.fd_checks += 1;
            let denom = T::one().max(gx[i].abs());
            let rel = ((central - gx[i]).abs() / denom).as_f64();
            report.max_fd_rel_err = report.max_fd_rel_err.max(rel);
            if rel > tol {
                return Err(PropertyViolation::GradientMismatch {
                    x: to64(&x),
                    coord: i,
                    grad: gx[i].as_f64(),
                    fd: central.as_f64(),
                });
            }
        }
    }

    Ok(report)
}
