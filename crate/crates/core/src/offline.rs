//! Hindsight-optimum estimators for the offline concave program
//! `max f(x)` subject to `Σ_{a∈A_j} x_a ≤ 1` per arrival and `x ≥ 0`.
//!
//! [`frank_wolfe`] returns a feasible point, hence a lower bound on the
//! optimum; combined with the engine's dual upper bound it brackets OPT and
//! the two ends give the empirical and certified competitive ratios.
//! Conditional gradient suits the feasible set — the linear oracle over a
//! product of capped simplices is a per-block argmax — but with a fixed
//! `2/(k+2)` schedule it can stall on nonsmooth objectives (budget kinks
//! make supergradients flip between faces), so a projected-supergradient
//! polish phase with best-iterate tracking follows whenever the gap
//! estimate has not converged.

use crate::instance::Instance;
use crate::scalar::Real;
use crate::transform::RayValuation;

/// Errors from the brute-force oracle.
#[derive(Debug, Clone, thiserror::Error)]
pub enum OfflineError {
    #[error("instance dimension {dim} exceeds brute-force cap {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("unsupported grid step {0}; use 0.05, 0.1, or 0.25")]
    BadGridStep(f64),
}

/// A feasible primal point and its value: a certified lower bound on OPT.
#[derive(Debug, Clone, PartialEq)]
pub struct OptEstimate<T> {
    pub lower_bound: T,
    pub iterations: usize,
    pub converged: bool,
    pub x_star: Vec<T>,
}

/// Default iteration budget for [`frank_wolfe`].
pub const FW_MAX_ITERS: usize = 5000;
/// Default gap tolerance for [`frank_wolfe`].
pub const FW_TOL: f64 = 1e-5;

fn blocks<T: Real>(instance: &Instance<T>) -> Vec<Vec<usize>> {
    instance
        .arrivals
        .iter()
        .map(|a| a.options.iter().map(|c| c.0 as usize).collect())
        .collect()
}

/// Projects one block of `x` onto `{z ≥ 0, Σz ≤ 1}` in place.
fn project_block<T: Real>(x: &mut [T], block: &[usize]) {
    for &a in block {
        if x[a] < T::zero() {
            x[a] = T::zero();
        }
    }
    let total: T = block.iter().map(|&a| x[a]).sum();
    if total <= T::one() {
        return;
    }
    // Water-level shift: find τ with Σ max(x_a − τ, 0) = 1.
    let mut vals: Vec<T> = block.iter().map(|&a| x[a]).collect();
    vals.sort_by(|p, q| q.partial_cmp(p).expect("allocations are finite"));
    let mut prefix = T::zero();
    let mut tau = T::zero();
    for (i, &v) in vals.iter().enumerate() {
        prefix += v;
        let k = T::of((i + 1) as f64);
        let candidate = (prefix - T::one()) / k;
        let next = vals.get(i + 1).copied().unwrap_or_else(T::zero);
        if candidate >= next {
            tau = candidate;
            break;
        }
    }
    for &a in block {
        x[a] = (x[a] - tau).max(T::zero());
    }
}

/// Conditional-gradient ascent with a supergradient polish phase. Always
/// returns a feasible `x_star`; `lower_bound = f(x_star)` is the best value
/// seen. `converged` reports whether the Frank–Wolfe gap estimate fell
/// below `tol`.
pub fn frank_wolfe<T: Real>(instance: &Instance<T>, max_iters: usize, tol: T) -> OptEstimate<T> {
    let dim = instance.dim();
    let blocks = blocks(instance);
    if dim == 0 || blocks.is_empty() {
        return OptEstimate {
            lower_bound: T::zero(),
            iterations: 0,
            converged: true,
            x_star: vec![T::zero(); dim],
        };
    }
    let f = &instance.valuation;
    let mut x = vec![T::zero(); dim];
    let mut grad = vec![T::zero(); dim];
    let mut best_x = x.clone();
    let mut best_val = RayValuation::value(f, &x);
    let mut iterations = 0;
    let mut converged = false;

    for k in 0..max_iters.max(1) {
        iterations += 1;
        for g in grad.iter_mut() {
            *g = T::zero();
        }
        f.add_grad(&x, &mut grad);
        // Linear maximizer: mass 1 on each block's best positive gradient.
        let mut gap = T::zero();
        let mut vertex = vec![T::zero(); dim];
        for block in &blocks {
            let mut best: Option<usize> = None;
            for &a in block {
                if grad[a] > T::zero() && best.map_or(true, |b| grad[a] > grad[b]) {
                    best = Some(a);
                }
            }
            if let Some(a) = best {
                vertex[a] = T::one();
            }
        }
        for a in 0..dim {
            gap += grad[a] * (vertex[a] - x[a]);
        }
        if gap < tol {
            converged = true;
            break;
        }
        let step = T::of(2.0) / T::of((k + 2) as f64);
        for a in 0..dim {
            x[a] = x[a] + step * (vertex[a] - x[a]);
        }
        let val = RayValuation::value(f, &x);
        if val > best_val {
            best_val = val;
            best_x.copy_from_slice(&x);
        }
    }

    if !converged {
        // Polish: projected supergradient ascent from the best point with a
        // geometrically decaying step, keeping the best feasible iterate.
        let polish = max_iters.min(2000);
        let scale = T::one() / (T::one() + f.grad_bound());
        let mut eta = scale;
        let decay = T::of(1e-5_f64.powf(1.0 / polish.max(1) as f64));
        x.copy_from_slice(&best_x);
        for _ in 0..polish {
            iterations += 1;
            for g in grad.iter_mut() {
                *g = T::zero();
            }
            f.add_grad(&x, &mut grad);
            for block in &blocks {
                for &a in block {
                    x[a] += eta * grad[a];
                }
                project_block(&mut x, block);
            }
            let val = RayValuation::value(f, &x);
            if val > best_val {
                best_val = val;
                best_x.copy_from_slice(&x);
            }
            eta *= decay;
        }
    }

    OptEstimate {
        lower_bound: best_val,
        iterations,
        converged,
        x_star: best_x,
    }
}

const GRID_DIM_MAX: usize = 6;

/// Exhaustive search over the feasible grid with spacing `grid_step`
/// (0.05, 0.1, or 0.25). Exact up to grid resolution; intended as a test
/// oracle for tiny instances.
pub fn grid_brute_force<T: Real>(
    instance: &Instance<T>,
    grid_step: f64,
) -> Result<T, OfflineError> {
    let dim = instance.dim();
    if dim > GRID_DIM_MAX {
        return Err(OfflineError::DimensionTooLarge {
            dim,
            max: GRID_DIM_MAX,
        });
    }
    let levels = match grid_step {
        s if (s - 0.05).abs() < 1e-12 => 20usize,
        s if (s - 0.1).abs() < 1e-12 => 10,
        s if (s - 0.25).abs() < 1e-12 => 4,
        other => return Err(OfflineError::BadGridStep(other)),
    };
    let step = T::one() / T::of(levels as f64);
    let blocks = blocks(instance);
    let f = &instance.valuation;
    let mut x = vec![T::zero(); dim];
    let mut best = RayValuation::value(f, &x);

    // DFS over blocks; within a block, over coordinates with the remaining
    // per-block budget.
    struct Dfs<'a, T: Real> {
        f: &'a crate::valuation::ValuationExpr<T>,
        blocks: &'a [Vec<usize>],
        levels: usize,
        step: T,
    }
    impl<T: Real> Dfs<'_, T> {
        fn go(&self, b: usize, slot: usize, left: usize, x: &mut [T], best: &mut T) {
            if b == self.blocks.len() {
                let val = RayValuation::value(self.f, x);
                if val > *best {
                    *best = val;
                }
                return;
            }
            let block = &self.blocks[b];
            if slot == block.len() {
                self.go(b + 1, 0, self.levels, x, best);
                return;
            }
            let a = block[slot];
            for units in 0..=left {
                x[a] = self.step * T::of(units as f64);
                self.go(b, slot + 1, left - units, x, best);
            }
            x[a] = T::zero();
        }
    }

    let dfs = Dfs {
        f,
        blocks: &blocks,
        levels,
        step,
    };
    dfs.go(0, 0, levels, &mut x, &mut best);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{dual_upper_bound, run_online, Policy};
    use crate::instance::{generate, Arrival, Family, GenParams, InstanceMeta};
    use crate::transform::QuadratureScheme;
    use crate::valuation::{CoordId, ValuationExpr};
    use std::collections::BTreeMap;

    fn fw(instance: &Instance<f64>) -> OptEstimate<f64> {
        frank_wolfe(instance, FW_MAX_ITERS, FW_TOL)
    }

    #[test]
    fn tie_optimum_is_reached() {
        let inst = generate(Family::TwoAgentTie, GenParams::default(), 0).unwrap();
        let est = fw(&inst);
        assert!(
            est.lower_bound >= 2.0 - 1e-3,
            "lower bound {}",
            est.lower_bound
        );
        assert!(est.lower_bound <= 2.0 + 1e-9);
    }

    #[test]
    fn triangular_optimum_is_reached() {
        let inst = generate(
            Family::Triangular,
            GenParams {
                n: 5,
                ..GenParams::default()
            },
            0,
        )
        .unwrap();
        let est = fw(&inst);
        assert!(
            est.lower_bound >= 5.0 - 1e-2,
            "lower bound {}",
            est.lower_bound
        );
    }

    #[test]
    fn empty_instance_yields_zero() {
        let inst: Instance<f64> = Instance {
            coords: vec![],
            arrivals: vec![],
            valuation: ValuationExpr::Linear {
                weights: BTreeMap::new(),
            },
            meta: InstanceMeta {
                family: "empty".into(),
                params: BTreeMap::new(),
                seed: 0,
            },
        };
        let est = fw(&inst);
        assert_eq!(est.lower_bound, 0.0);
        assert!(est.converged);
    }

    #[test]
    fn iterates_stay_feasible() {
        for family in [Family::RandomMixture, Family::ConcaveReturns] {
            let inst = generate(family, GenParams { n: 4, m: 3, k: 2 }, 5).unwrap();
            let est = fw(&inst);
            for arrival in &inst.arrivals {
                let total: f64 = arrival
                    .options
                    .iter()
                    .map(|c| est.x_star[c.0 as usize])
                    .sum();
                assert!(total <= 1.0 + 1e-9, "block {} overflows: {total}", arrival.j);
            }
            for &v in &est.x_star {
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn grid_oracle_on_the_tie_instance() {
        let inst = generate(Family::TwoAgentTie, GenParams::default(), 0).unwrap();
        let v = grid_brute_force(&inst, 0.05).unwrap();
        assert!((v - 2.0).abs() < 1e-12, "grid optimum {v}");
    }

    #[test]
    fn grid_oracle_on_a_single_budget() {
        let inst: Instance<f64> = Instance {
            coords: vec![CoordId(0)],
            arrivals: vec![Arrival {
                j: 0,
                options: vec![CoordId(0)],
            }],
            valuation: ValuationExpr::budget_additive([(CoordId(0), 1.0)], 1.0).unwrap(),
            meta: InstanceMeta {
                family: "one".into(),
                params: BTreeMap::new(),
                seed: 0,
            },
        };
        let v = grid_brute_force(&inst, 0.25).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_oracle_matches_blockwise_argmax_for_linear() {
        // Two arrivals, two options each; linear objective picks the best
        // weight per block.
        let weights = [(CoordId(0), 0.3), (CoordId(1), 0.9), (CoordId(2), 0.7), (CoordId(3), 0.2)];
        let inst: Instance<f64> = Instance {
            coords: weights.iter().map(|&(c, _)| c).collect(),
            arrivals: vec![
                Arrival {
                    j: 0,
                    options: vec![CoordId(0), CoordId(1)],
                },
                Arrival {
                    j: 1,
                    options: vec![CoordId(2), CoordId(3)],
                },
            ],
            valuation: ValuationExpr::linear(weights).unwrap(),
            meta: InstanceMeta {
                family: "linear".into(),
                params: BTreeMap::new(),
                seed: 0,
            },
        };
        let v = grid_brute_force(&inst, 0.1).unwrap();
        assert!((v - (0.9 + 0.7)).abs() < 1e-12, "grid {v}");
        // Frank–Wolfe agrees on this easy case.
        let est = fw(&inst);
        assert!((est.lower_bound - 1.6).abs() < 1e-6);
    }

    #[test]
    fn grid_rejects_large_instances_and_odd_steps() {
        let inst = generate(
            Family::Triangular,
            GenParams {
                n: 5,
                ..GenParams::default()
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            grid_brute_force(&inst, 0.25),
            Err(OfflineError::DimensionTooLarge { .. })
        ));
        let tie = generate(Family::TwoAgentTie, GenParams::default(), 0).unwrap();
        assert!(matches!(
            grid_brute_force(&tie, 0.2),
            Err(OfflineError::BadGridStep(_))
        ));
    }

    #[test]
    fn frank_wolfe_dominates_the_grid_up_to_resolution() {
        for (family, n, m) in [
            (Family::TwoAgentTie, 1, 1),
            (Family::ConcaveReturns, 3, 2),
            (Family::PolymatroidAssignment, 2, 5),
        ] {
            let inst = generate(family, GenParams { n, m, k: 1 }, 2).unwrap();
            if inst.dim() > 6 {
                continue;
            }
            let grid = grid_brute_force(&inst, 0.1).unwrap();
            let est = fw(&inst);
            let allowance = inst.valuation.grad_bound() * 0.1 * inst.dim() as f64;
            assert!(
                est.lower_bound >= grid - allowance,
                "{family}: fw {} vs grid {grid} (allowance {allowance})",
                est.lower_bound
            );
        }
    }

    #[test]
    fn lower_bound_respects_weak_duality() {
        for family in [
            Family::TwoAgentTie,
            Family::Triangular,
            Family::ConcaveReturns,
            Family::WholePage,
        ] {
            let inst = generate(family, GenParams { n: 5, m: 3, k: 2 }, 4).unwrap();
            let est = fw(&inst);
            let (_, cert, _) = run_online(
                &inst,
                Policy::Balanced,
                1e-2,
                QuadratureScheme::default(),
            )
            .unwrap();
            let dual = dual_upper_bound(&cert).unwrap();
            assert!(
                est.lower_bound <= dual + 1e-6 * (1.0 + dual),
                "{family}: primal bound {} above dual {dual}",
                est.lower_bound
            );
        }
    }
}
