//! Polymatroid rank oracles and the induced concave valuations.
//!
//! A monotone submodular rank function `r` over a ground set `[m]` induces
//! the valuation
//!
//! ```text
//! pm_value(r, x) = min_{S ⊆ [m]} ( r(S) + Σ_{i ∉ S} x_i ),
//! ```
//!
//! the total amount of mass the polymatroid of `r` can absorb from the box
//! `[0, x]`. Ground sets are capped at 20 elements so every operation can
//! enumerate subsets exactly; subsets are represented as bitmasks.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Subset of the ground set, encoded as a bitmask over element indices.
pub type SubsetMask = u32;

/// Largest supported ground set; all operations enumerate `2^m` subsets.
pub const MAX_GROUND: usize = 20;

/// Errors from polymatroid operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolymatroidError {
    /// An index, subset bit, or arity does not fit the declared ground set.
    #[error("polymatroid argument out of range: {0}")]
    OutOfRange(String),
    /// Ground set too large for exact subset enumeration.
    #[error("ground set of size {m} exceeds the enumeration limit of {max}")]
    GroundSetTooLarge { m: usize, max: usize },
}

/// Monotone submodular rank function over a ground set `[m]`.
///
/// `m` is supplied by the caller (the length of the point being evaluated);
/// [`RankOracle::validate`] checks that the oracle is consistent with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankOracle<T> {
    /// `r(S) = min(|S|, k)`; `k` may be fractional.
    CardinalityCap { k: T },
    /// Table of `2^m` values indexed by subset bitmask.
    Explicit { m: usize, values: Vec<T> },
    /// Partition capacities: `r(S) = Σ_b min(|S ∩ block_b|, cap_b)`.
    Partition { blocks: Vec<Vec<usize>>, caps: Vec<T> },
    /// Weighted coverage: `r(S)` is the total weight of items covered by the
    /// elements of `S`; `covers[e]` lists the items element `e` covers.
    WeightedCoverage { weights: Vec<T>, covers: Vec<Vec<usize>> },
}

impl<T: Real> RankOracle<T> {
    /// Checks internal consistency against a ground set of size `m`.
    pub fn validate(&self, m: usize) -> Result<(), PolymatroidError> {
        if m > MAX_GROUND {
            return Err(PolymatroidError::GroundSetTooLarge { m, max: MAX_GROUND });
        }
        match self {
            RankOracle::CardinalityCap { k } => {
                if !k.is_finite() || *k < T::zero() {
                    return Err(PolymatroidError::OutOfRange(format!(
                        "cardinality cap must be finite and nonnegative, got {k}"
                    )));
                }
            }
            RankOracle::Explicit { m: em, values } => {
                if *em != m {
                    return Err(PolymatroidError::OutOfRange(format!(
                        "explicit table declares m={em} but ground set has {m} elements"
                    )));
                }
                if values.len() != 1usize << m {
                    return Err(PolymatroidError::OutOfRange(format!(
                        "explicit table has {} entries, expected {}",
                        values.len(),
                        1usize << m
                    )));
                }
                if values[0] != T::zero() {
                    return Err(PolymatroidError::OutOfRange(
                        "explicit table must assign 0 to the empty set".into(),
                    ));
                }
                if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
                    return Err(PolymatroidError::OutOfRange(
                        "explicit table entries must be finite and nonnegative".into(),
                    ));
                }
            }
            RankOracle::Partition { blocks, caps } => {
                if blocks.len() != caps.len() {
                    return Err(PolymatroidError::OutOfRange(format!(
                        "{} blocks but {} caps",
                        blocks.len(),
                        caps.len()
                    )));
                }
                let mut seen = vec![false; m];
                for block in blocks {
                    for &e in block {
                        if e >= m {
                            return Err(PolymatroidError::OutOfRange(format!(
                                "block element {e} outside ground set of size {m}"
                            )));
                        }
                        if seen[e] {
                            return Err(PolymatroidError::OutOfRange(format!(
                                "element {e} appears in two blocks"
                            )));
                        }
                        seen[e] = true;
                    }
                }
                if caps.iter().any(|c| !c.is_finite() || *c < T::zero()) {
                    return Err(PolymatroidError::OutOfRange(
                        "partition caps must be finite and nonnegative".into(),
                    ));
                }
            }
            RankOracle::WeightedCoverage { weights, covers } => {
                if covers.len() != m {
                    return Err(PolymatroidError::OutOfRange(format!(
                        "coverage lists {} elements but ground set has {m}",
                        covers.len()
                    )));
                }
                if weights.len() > 64 {
                    return Err(PolymatroidError::OutOfRange(
                        "weighted coverage supports at most 64 items".into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
                    return Err(PolymatroidError::OutOfRange(
                        "item weights must be finite and nonnegative".into(),
                    ));
                }
                for list in covers {
                    if list.iter().any(|&i| i >= weights.len()) {
                        return Err(PolymatroidError::OutOfRange(
                            "coverage references an item with no weight".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn compile(&self, m: usize) -> CompiledRank<'_, T> {
        match self {
            RankOracle::CardinalityCap { k } => CompiledRank::Card { k: *k },
            RankOracle::Explicit { values, .. } => CompiledRank::Table(values),
            RankOracle::Partition { blocks, caps } => {
                let masks = blocks
                    .iter()
                    .map(|b| b.iter().fold(0u32, |acc, &e| acc | (1 << e)))
                    .collect();
                CompiledRank::Partition { masks, caps }
            }
            RankOracle::WeightedCoverage { weights, covers } => {
                let elem_items = covers
                    .iter()
                    .map(|list| list.iter().fold(0u64, |acc, &i| acc | (1 << i)))
                    .collect();
                let _ = m;
                CompiledRank::Coverage {
                    weights,
                    elem_items,
                }
            }
        }
    }
}

enum CompiledRank<'a, T> {
    Card { k: T },
    Table(&'a [T]),
    Partition { masks: Vec<u32>, caps: &'a [T] },
    Coverage { weights: &'a [T], elem_items: Vec<u64> },
}

impl<T: Real> CompiledRank<'_, T> {
    #[inline]
    fn rank(&self, s: SubsetMask) -> T {
        match self {
            CompiledRank::Card { k } => {
                let c = T::of(s.count_ones() as f64);
                c.min(*k)
            }
            CompiledRank::Table(values) => values[s as usize],
            CompiledRank::Partition { masks, caps } => {
                let mut total = T::zero();
                for (mask, cap) in masks.iter().zip(caps.iter()) {
                    let c = T::of((s & mask).count_ones() as f64);
                    total += c.min(*cap);
                }
                total
            }
            CompiledRank::Coverage {
                weights,
                elem_items,
            } => {
                let mut covered = 0u64;
                let mut bits = s;
                while bits != 0 {
                    let e = bits.trailing_zeros() as usize;
                    covered |= elem_items[e];
                    bits &= bits - 1;
                }
                let mut total = T::zero();
                while covered != 0 {
                    let i = covered.trailing_zeros() as usize;
                    total += weights[i];
                    covered &= covered - 1;
                }
                total
            }
        }
    }
}

/// Maximal minimizer of `S ↦ r(S) + x([m]∖S)`.
///
/// Minimizers are closed under union and intersection, so the union of all
/// minimizers is itself a minimizer: the unique maximal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TightSet {
    /// Bitmask of the maximal minimizer.
    pub mask: SubsetMask,
    /// Ground set size the mask refers to.
    pub m: usize,
}

impl TightSet {
    /// Whether element `i` belongs to the tight set.
    pub fn contains(&self, i: usize) -> bool {
        i < self.m && (self.mask >> i) & 1 == 1
    }

    /// Elements of the tight set in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m).filter(|&i| self.contains(i))
    }
}

fn ensure_ground<T: Real>(oracle: &RankOracle<T>, m: usize) -> Result<(), PolymatroidError> {
    oracle.validate(m)
}

/// Rank of a subset. Errors if the mask has bits outside `[m]` or the oracle
/// does not fit a ground set of size `m`.
pub fn rank<T: Real>(
    oracle: &RankOracle<T>,
    m: usize,
    subset: SubsetMask,
) -> Result<T, PolymatroidError> {
    ensure_ground(oracle, m)?;
    if m < 32 && subset >> m != 0 {
        return Err(PolymatroidError::OutOfRange(format!(
            "subset mask {subset:#b} has bits outside ground set of size {m}"
        )));
    }
    Ok(oracle.compile(m).rank(subset))
}

/// Sums of `x` over every subset, by bitmask DP. `out[s] = Σ_{i ∈ s} x_i`.
fn subset_sums<T: Real>(x: &[T]) -> Vec<T> {
    let m = x.len();
    let mut out = vec![T::zero(); 1 << m];
    for s in 1usize..(1 << m) {
        let low = s.trailing_zeros() as usize;
        out[s] = out[s & (s - 1)] + x[low];
    }
    out
}

struct MinScan<T> {
    best: T,
    union_mask: SubsetMask,
}

fn min_form_scan<T: Real>(compiled: &CompiledRank<'_, T>, x: &[T]) -> MinScan<T> {
    let m = x.len();
    let sums = subset_sums(x);
    let total = sums[(1 << m) - 1];
    let mut best = total; // S = ∅
    let mut union_mask: SubsetMask = 0;
    for s in 1usize..(1 << m) {
        let v = compiled.rank(s as SubsetMask) + (total - sums[s]);
        if v < best {
            best = v;
            union_mask = s as SubsetMask;
        } else if v == best {
            union_mask |= s as SubsetMask;
        }
    }
    MinScan { best, union_mask }
}

/// Value of the polymatroid valuation `min_S r(S) + x([m]∖S)` at `x ≥ 0`.
pub fn pm_value<T: Real>(oracle: &RankOracle<T>, x: &[T]) -> Result<T, PolymatroidError> {
    ensure_ground(oracle, x.len())?;
    let compiled = oracle.compile(x.len());
    Ok(min_form_scan(&compiled, x).best)
}

/// Maximal minimizer of the min-form objective at `x`.
pub fn tight_set<T: Real>(oracle: &RankOracle<T>, x: &[T]) -> Result<TightSet, PolymatroidError> {
    ensure_ground(oracle, x.len())?;
    let compiled = oracle.compile(x.len());
    let scan = min_form_scan(&compiled, x);
    Ok(TightSet {
        mask: scan.union_mask,
        m: x.len(),
    })
}

/// Upward (right-derivative) gradient of [`pm_value`] at `x`:
/// coordinate `i` gets `1` exactly when `i` lies outside the tight set.
pub fn pm_grad<T: Real>(oracle: &RankOracle<T>, x: &[T]) -> Result<Vec<T>, PolymatroidError> {
    let ts = tight_set(oracle, x)?;
    Ok((0..x.len())
        .map(|i| if ts.contains(i) { T::zero() } else { T::one() })
        .collect())
}

/// Lovász extension `L_r(w) = Σ_k (w_(k) − w_(k+1)) · r({(1), …, (k)})`
/// for `w ≥ 0`, where `(k)` sorts coordinates by decreasing weight.
pub fn lovasz<T: Real>(oracle: &RankOracle<T>, w: &[T]) -> Result<T, PolymatroidError> {
    let m = w.len();
    ensure_ground(oracle, m)?;
    let compiled = oracle.compile(m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap().then(a.cmp(&b)));
    let mut total = T::zero();
    let mut prefix: SubsetMask = 0;
    for (pos, &i) in order.iter().enumerate() {
        prefix |= 1 << i;
        let next = if pos + 1 < m { w[order[pos + 1]] } else { T::zero() };
        let gap = w[i] - next;
        if gap > T::zero() {
            total += gap * compiled.rank(prefix);
        }
    }
    Ok(total)
}

/// Parameter values `t ∈ (t_lo, t_hi)` at which the minimizing subset of
/// `S ↦ r(S) + z(S̄)/t` changes along the ray `z/t`, sorted increasing.
///
/// In `s = 1/t` the objective is a lower envelope of lines
/// `r(S) + s·z(S̄)`, so the switches are found by walking the envelope from
/// small `s` to large, always following the line of smallest slope among the
/// current minimizers.
pub fn pm_ray_breakpoints<T: Real>(
    oracle: &RankOracle<T>,
    zbase: &[T],
    t_lo: T,
    t_hi: T,
) -> Result<Vec<T>, PolymatroidError> {
    let m = zbase.len();
    ensure_ground(oracle, m)?;
    if m == 0 || t_lo >= t_hi {
        return Ok(Vec::new());
    }
    let compiled = oracle.compile(m);
    let full = (1usize << m) - 1;
    let sums = subset_sums(zbase);
    let total = sums[full];
    // slope[s] = z(S̄), intercept[s] = r(S), as functions of s = 1/t.
    let ranks: Vec<T> = (0..=full)
        .map(|s| compiled.rank(s as SubsetMask))
        .collect();
    let s_lo = t_hi.recip();
    let s_hi = t_lo.recip();

    // Line minimal at s_lo; among ties pick the smallest slope so the walk
    // can only ever cross to strictly smaller slopes.
    let mut cur = 0usize;
    let mut cur_val = ranks[0] + s_lo * total;
    let mut cur_slope = total;
    for s in 1..=full {
        let slope = total - sums[s];
        let v = ranks[s] + s_lo * slope;
        if v < cur_val || (v == cur_val && slope < cur_slope) {
            cur = s;
            cur_val = v;
            cur_slope = slope;
        }
    }

    let mut switches: Vec<T> = Vec::new();
    let mut s_cur = s_lo;
    loop {
        let r_cur = ranks[cur];
        let mut next_s = T::infinity();
        let mut next_line = usize::MAX;
        let mut next_slope = T::zero();
        for s in 0..=full {
            let slope = total - sums[s];
            if slope >= cur_slope {
                continue;
            }
            // Crossing point of the two lines.
            let cross = (ranks[s] - r_cur) / (cur_slope - slope);
            if cross > s_cur && cross < s_hi {
                if cross < next_s || (cross == next_s && slope < next_slope) {
                    next_s = cross;
                    next_line = s;
                    next_slope = slope;
                }
            }
        }
        if next_line == usize::MAX {
            break;
        }
        switches.push(next_s.recip());
        s_cur = next_s;
        cur = next_line;
        cur_slope = next_slope;
    }
    switches.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(switches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap1() -> RankOracle<f64> {
        RankOracle::CardinalityCap { k: 1.0 }
    }

    fn unit_box() -> RankOracle<f64> {
        RankOracle::Partition {
            blocks: vec![vec![0], vec![1]],
            caps: vec![1.0, 1.0],
        }
    }

    #[test]
    fn pm_value_cardinality_cap_examples() {
        assert_eq!(pm_value(&cap1(), &[0.3, 0.4]).unwrap(), 0.7);
        assert_eq!(pm_value(&cap1(), &[0.6, 0.7]).unwrap(), 1.0);
    }

    #[test]
    fn tight_set_and_grad_examples() {
        let ts = tight_set(&cap1(), &[0.3, 0.4]).unwrap();
        assert_eq!(ts.mask, 0);
        assert_eq!(pm_grad(&cap1(), &[0.3, 0.4]).unwrap(), vec![1.0, 1.0]);

        let ts = tight_set(&cap1(), &[0.6, 0.7]).unwrap();
        assert_eq!(ts.mask, 0b11);
        assert_eq!(pm_grad(&cap1(), &[0.6, 0.7]).unwrap(), vec![0.0, 0.0]);

        // At x = (1, 0) the minimizers are ∅, {0}, and {0,1}, all at value 1;
        // the maximal one is the full set.
        let ts = tight_set(&cap1(), &[1.0, 0.0]).unwrap();
        assert_eq!(ts.mask, 0b11);
    }

    #[test]
    fn pm_value_unit_box_sums_clipped_coordinates() {
        assert_eq!(pm_value(&unit_box(), &[0.5, 1.2]).unwrap(), 1.5);
        assert_eq!(pm_grad(&unit_box(), &[0.5, 1.2]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn lovasz_examples() {
        assert_eq!(lovasz(&cap1(), &[1.0, 1.0]).unwrap(), 1.0);
        // Modular rank |S| makes the extension linear: w = (0.5, 0.2) ↦ 0.7.
        let modular = RankOracle::Partition {
            blocks: vec![vec![0], vec![1]],
            caps: vec![10.0f64, 10.0],
        };
        assert!((lovasz(&modular, &[0.5, 0.2]).unwrap() - 0.7).abs() < 1e-15);
        // On indicator vectors the extension reproduces the rank.
        assert_eq!(lovasz(&cap1(), &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(lovasz(&cap1(), &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn explicit_table_round_trip_and_validation() {
        let table = RankOracle::Explicit {
            m: 2,
            values: vec![0.0, 1.0, 1.0, 1.5],
        };
        assert_eq!(rank(&table, 2, 0b11).unwrap(), 1.5);
        assert!(matches!(
            rank(&table, 2, 0b100),
            Err(PolymatroidError::OutOfRange(_))
        ));
        let bad = RankOracle::Explicit {
            m: 2,
            values: vec![0.5, 1.0, 1.0, 1.5],
        };
        assert!(bad.validate(2).is_err());
        let big = RankOracle::CardinalityCap { k: 3.0 };
        assert!(matches!(
            big.validate(MAX_GROUND + 1),
            Err(PolymatroidError::GroundSetTooLarge { .. })
        ));
    }

    #[test]
    fn weighted_coverage_rank() {
        // Two elements covering overlapping item sets.
        let r = RankOracle::WeightedCoverage {
            weights: vec![2.0, 1.0, 4.0],
            covers: vec![vec![0, 1], vec![1, 2]],
        };
        assert_eq!(rank(&r, 2, 0b01).unwrap(), 3.0);
        assert_eq!(rank(&r, 2, 0b10).unwrap(), 5.0);
        assert_eq!(rank(&r, 2, 0b11).unwrap(), 7.0);
        // Coverage functions are submodular: marginal of element 1 shrinks.
        assert!(rank(&r, 2, 0b11).unwrap() - rank(&r, 2, 0b01).unwrap() <= 5.0);
    }

    /// Feasibility-driven maximal fill of the polymatroid intersected with
    /// the box `[0, x]`: an independent oracle for `pm_value`. All maximal
    /// points of a polymatroid have the same coordinate sum, so filling
    /// greedily in any order reaches the same total.
    fn sequential_fill(oracle: &RankOracle<f64>, x: &[f64], order: &[usize]) -> f64 {
        let m = x.len();
        let mut z = vec![0.0f64; m];
        for &i in order {
            let mut room = x[i];
            for s in 0..(1usize << m) {
                if s >> i & 1 == 1 {
                    let zs: f64 = (0..m).filter(|&e| s >> e & 1 == 1).map(|e| z[e]).sum();
                    let r = rank(oracle, m, s as SubsetMask).unwrap();
                    room = room.min(r - zs);
                }
            }
            z[i] += room.max(0.0);
        }
        z.iter().sum()
    }

    #[test]
    fn min_form_matches_sequential_fill() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = rng.gen_range(1..=5);
            let oracle = match rng.gen_range(0..3) {
                0 => RankOracle::CardinalityCap {
                    k: rng.gen_range(0.0..3.0),
                },
                1 => {
                    let split = rng.gen_range(0..=m);
                    let b0: Vec<usize> = (0..split).collect();
                    let b1: Vec<usize> = (split..m).collect();
                    RankOracle::Partition {
                        blocks: vec![b0, b1],
                        caps: vec![rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)],
                    }
                }
                _ => {
                    let items = rng.gen_range(1..4);
                    let weights = (0..items).map(|_| rng.gen_range(0.0..2.0)).collect();
                    let covers = (0..m)
                        .map(|_| (0..items).filter(|_| rng.gen_bool(0.6)).collect())
                        .collect();
                    RankOracle::WeightedCoverage { weights, covers }
                }
            };
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.5)).collect();
            let want = pm_value(&oracle, &x).unwrap();
            let fwd: Vec<usize> = (0..m).collect();
            let rev: Vec<usize> = (0..m).rev().collect();
            for order in [fwd, rev] {
                let got = sequential_fill(&oracle, &x, &order);
                assert!(
                    (got - want).abs() < 1e-9,
                    "fill {got} vs min-form {want} for x={x:?}"
                );
            }
        }
    }

    #[test]
    fn ray_breakpoints_track_tight_set_changes() {
        // z/t with z = (0.5, 0.2) against cap 1: the tight set flips where
        // 0.7/t = 1, i.e. t = 0.7.
        let bps = pm_ray_breakpoints(&cap1(), &[0.5, 0.2], 1e-6, 1.0).unwrap();
        assert_eq!(bps.len(), 1);
        assert!((bps[0] - 0.7).abs() < 1e-12);
        // Validate against direct evaluation on both sides.
        let g_lo = pm_grad(&cap1(), &[0.5 / 0.69, 0.2 / 0.69]).unwrap();
        let g_hi = pm_grad(&cap1(), &[0.5 / 0.71, 0.2 / 0.71]).unwrap();
        assert_eq!(g_lo, vec![0.0, 0.0]);
        assert_eq!(g_hi, vec![1.0, 1.0]);
        // No breakpoints for the zero ray.
        assert!(pm_ray_breakpoints(&cap1(), &[0.0, 0.0], 1e-6, 1.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ray_breakpoints_partition_produces_one_switch_per_block() {
        let oracle = RankOracle::Partition {
            blocks: vec![vec![0], vec![1]],
            caps: vec![1.0f64, 1.0],
        };
        let bps = pm_ray_breakpoints(&oracle, &[0.5, 0.25], 1e-6, 1.0).unwrap();
        assert_eq!(bps.len(), 2);
        assert!((bps[0] - 0.25).abs() < 1e-12);
        assert!((bps[1] - 0.5).abs() < 1e-12);
    }
}
