//! Problem instances: a coordinate universe, an ordered arrival sequence,
//! and one diminishing-returns valuation over the whole universe.
//!
//! Files carry the valuation inline so an instance JSON is self-contained
//! and reproducible. Seeded generators cover the benchmark families used by
//! the experiment harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::polymatroid::RankOracle;
use crate::scalar::Real;
use crate::valuation::check::{check_cdr, PointSampler};
use crate::valuation::{CoordId, ScalarConcave, ValuationError, ValuationExpr};

/// Errors from instance construction, generation, or (de)serialization.
#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed instance file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid valuation: {0}")]
    Valuation(#[from] ValuationError),
    #[error("valuation fails diminishing-returns checks: {0}")]
    Property(String),
    #[error("invalid instance: {0}")]
    Validation(String),
    #[error("bad generator parameters: {0}")]
    BadParams(String),
}

/// One online arrival: its position and the options it opens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub j: usize,
    pub options: Vec<CoordId>,
}

/// Origin of a generated instance: family, parameters, and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub family: String,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
}

/// A complete allocation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct Instance<T: Real> {
    pub coords: Vec<CoordId>,
    pub arrivals: Vec<Arrival>,
    pub valuation: ValuationExpr<T>,
    pub meta: InstanceMeta,
}

impl<T: Real> Instance<T> {
    /// Length of the allocation vector: one slot per id up to the largest
    /// declared coordinate.
    pub fn dim(&self) -> usize {
        self.coords
            .iter()
            .map(|c| c.0 as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn n_arrivals(&self) -> usize {
        self.arrivals.len()
    }

    /// Checks every structural invariant: distinct coordinates, contiguous
    /// arrival indices, nonempty pairwise-disjoint option sets drawn from
    /// the declared universe, and a valuation that passes a quick
    /// diminishing-returns smoke test.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let mut universe = BTreeSet::new();
        for &c in &self.coords {
            if !universe.insert(c) {
                return Err(InstanceError::Validation(format!(
                    "duplicate coordinate id {}",
                    c.0
                )));
            }
        }
        let mut claimed: BTreeSet<CoordId> = BTreeSet::new();
        for (idx, arrival) in self.arrivals.iter().enumerate() {
            if arrival.j != idx {
                return Err(InstanceError::Validation(format!(
                    "arrival {idx}: index field says {}",
                    arrival.j
                )));
            }
            if arrival.options.is_empty() {
                return Err(InstanceError::Validation(format!(
                    "arrival {idx}: empty option set"
                )));
            }
            for &c in &arrival.options {
                if !universe.contains(&c) {
                    return Err(InstanceError::Validation(format!(
                        "arrival {idx}: option {} is not a declared coordinate",
                        c.0
                    )));
                }
                if !claimed.insert(c) {
                    return Err(InstanceError::Validation(format!(
                        "arrival {idx}: option {} already offered by an earlier arrival",
                        c.0
                    )));
                }
            }
        }
        self.valuation.validate()?;
        let dim = self.dim();
        self.valuation.check_coords(dim)?;
        if dim > 0 {
            let mut sampler = PointSampler::new(0xC0FFEE ^ self.meta.seed);
            check_cdr(&self.valuation, &mut sampler, 100, 1e-5)
                .map_err(|v| InstanceError::Property(format!("{v:?}")))?;
        }
        Ok(())
    }
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> Instance<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let instance: Instance<T> = serde_json::from_str(text)?;
        instance.validate()?;
        Ok(instance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// The built-in benchmark families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Nested budget-additive agents; the classic worst case for greedy
    /// budgeted matching, with known optimum `n`.
    Triangular,
    /// Concave functions of random linear loads, one per agent.
    ConcaveReturns,
    /// Page configurations crediting several budgeted agents at once.
    WholePage,
    /// Assignment value measured through a polymatroid rank, decomposed
    /// exactly over its distinct bang-per-buck levels.
    PolymatroidAssignment,
    /// Two agents, one contested item: the standing worked example.
    TwoAgentTie,
    /// Random expression exercising every valuation node kind.
    RandomMixture,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Triangular,
        Family::ConcaveReturns,
        Family::WholePage,
        Family::PolymatroidAssignment,
        Family::TwoAgentTie,
        Family::RandomMixture,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Triangular => "triangular",
            Family::ConcaveReturns => "concave_returns",
            Family::WholePage => "whole_page",
            Family::PolymatroidAssignment => "polymatroid_assignment",
            Family::TwoAgentTie => "two_agent_tie",
            Family::RandomMixture => "random_mixture",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                InstanceError::BadParams(format!(
                    "unknown family {s:?}; expected one of: {}",
                    Family::ALL.map(|f| f.name()).join(", ")
                ))
            })
    }
}

/// Size knobs shared by the generators; families ignore what they don't use.
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    /// Number of arrivals.
    pub n: usize,
    /// Number of agents / polymatroid ground elements.
    pub m: usize,
    /// Options per arrival (where the family has a choice).
    pub k: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { n: 10, m: 4, k: 3 }
    }
}

/// Builds a deterministic instance of the requested family.
pub fn generate(family: Family, params: GenParams, seed: u64) -> Result<Instance<f64>, InstanceError> {
    if params.n < 1 {
        return Err(InstanceError::BadParams("need at least one arrival".into()));
    }
    let instance = match family {
        Family::Triangular => triangular(params.n, seed),
        Family::ConcaveReturns => concave_returns(params.n, params.m, seed)?,
        Family::WholePage => whole_page(params.n, params.m, params.k, seed)?,
        Family::PolymatroidAssignment => polymatroid_assignment(params.n, params.m, seed)?,
        Family::TwoAgentTie => two_agent_tie(seed),
        Family::RandomMixture => random_mixture(params.n, params.k, seed)?,
    };
    instance.validate()?;
    Ok(instance)
}

fn meta(family: Family, params: &[(&str, f64)], seed: u64) -> InstanceMeta {
    InstanceMeta {
        family: family.name().to_string(),
        params: params
            .iter()
            .map(|&(k, v)| (k.to_string(), v))
            .collect(),
        seed,
    }
}

/// `n` agents with unit budgets; arrival `j` can serve any agent `i ≥ j`.
/// Sending arrival `j` entirely to agent `j` fills every budget, so the
/// offline optimum is exactly `n`, while myopic policies overuse the early
/// agents and are squeezed toward `1 − 1/e` as `n` grows.
fn triangular(n: usize, seed: u64) -> Instance<f64> {
    let mut coords = Vec::new();
    let mut arrivals = Vec::new();
    // Coordinate (j, i) = "arrival j serves agent i", laid out arrival-major.
    let mut per_agent: BTreeMap<usize, Vec<CoordId>> = BTreeMap::new();
    let mut next = 0u32;
    for j in 0..n {
        let mut options = Vec::new();
        for i in j..n {
            let c = CoordId(next);
            next += 1;
            coords.push(c);
            options.push(c);
            per_agent.entry(i).or_default().push(c);
        }
        arrivals.push(Arrival { j, options });
    }
    let terms: Vec<(f64, ValuationExpr<f64>)> = per_agent
        .into_values()
        .map(|cs| {
            let weights: Vec<(CoordId, f64)> = cs.into_iter().map(|c| (c, 1.0)).collect();
            (
                1.0,
                ValuationExpr::budget_additive(weights, 1.0).expect("unit weights are valid"),
            )
        })
        .collect();
    Instance {
        coords,
        arrivals,
        valuation: ValuationExpr::sum(terms).expect("sum of valid terms"),
        meta: meta(
            Family::Triangular,
            &[("n", n as f64), ("opt", n as f64)],
            seed,
        ),
    }
}

fn scalar_kind(rng: &mut ChaCha8Rng, which: usize) -> ScalarConcave<f64> {
    match which % 3 {
        0 => ScalarConcave::Log1p {
            rate: rng.gen_range(0.5..2.5),
        },
        1 => ScalarConcave::ExpSat {
            rate: rng.gen_range(0.5..2.0),
        },
        _ => {
            let s0 = rng.gen_range(0.8..1.2);
            let s1 = rng.gen_range(0.3..0.7) * s0;
            let x1 = rng.gen_range(0.4..0.8);
            let x2 = x1 + rng.gen_range(0.4..0.8);
            ScalarConcave::Pwl {
                knots: vec![(x1, s0 * x1), (x2, s0 * x1 + s1 * (x2 - x1))],
                tail_slope: s1 * rng.gen_range(0.2..0.9),
            }
        }
    }
}

/// `m` agents, each valuing its random linear load through its own concave
/// curve; arrival `j` chooses which agent receives item `j`.
fn concave_returns(n: usize, m: usize, seed: u64) -> Result<Instance<f64>, InstanceError> {
    if m < 1 {
        return Err(InstanceError::BadParams("need at least one agent".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636f6e63);
    let id = |j: usize, i: usize| CoordId((j * m + i) as u32);
    let coords: Vec<CoordId> = (0..n * m).map(|c| CoordId(c as u32)).collect();
    let arrivals: Vec<Arrival> = (0..n)
        .map(|j| Arrival {
            j,
            options: (0..m).map(|i| id(j, i)).collect(),
        })
        .collect();
    let mut terms = Vec::with_capacity(m);
    for i in 0..m {
        let weights: Vec<(CoordId, f64)> = (0..n)
            .map(|j| (id(j, i), rng.gen_range(0.3..1.0)))
            .collect();
        let curve = scalar_kind(&mut rng, i);
        terms.push((
            1.0,
            ValuationExpr::concave(curve, ValuationExpr::linear(weights)?)?,
        ));
    }
    Ok(Instance {
        coords,
        arrivals,
        valuation: ValuationExpr::sum(terms)?,
        meta: meta(
            Family::ConcaveReturns,
            &[("n", n as f64), ("m", m as f64)],
            seed,
        ),
    })
}

/// Each arrival offers `k` page configurations; a configuration credits a
/// few of the `m` budgeted agents at once. The valuation is the agents'
/// budget-additive total read through the credit matrix.
fn whole_page(n: usize, m: usize, k: usize, seed: u64) -> Result<Instance<f64>, InstanceError> {
    if m < 1 || k < 1 {
        return Err(InstanceError::BadParams(
            "need at least one agent and one configuration per arrival".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70616765);
    let id = |j: usize, c: usize| CoordId((j * k + c) as u32);
    let coords: Vec<CoordId> = (0..n * k).map(|c| CoordId(c as u32)).collect();
    let arrivals: Vec<Arrival> = (0..n)
        .map(|j| Arrival {
            j,
            options: (0..k).map(|c| id(j, c)).collect(),
        })
        .collect();
    // rows[i]: how much credit agent i earns from each configuration.
    let mut rows: Vec<BTreeMap<CoordId, f64>> = vec![BTreeMap::new(); m];
    for j in 0..n {
        for c in 0..k {
            let credited = 1 + rng.gen_range(0..m.min(3));
            for _ in 0..credited {
                let agent = rng.gen_range(0..m);
                rows[agent].insert(id(j, c), rng.gen_range(0.2..1.0));
            }
        }
    }
    for row in rows.iter_mut() {
        if row.is_empty() {
            row.insert(id(rng.gen_range(0..n), rng.gen_range(0..k)), 0.5);
        }
    }
    let budget_terms: Vec<(f64, ValuationExpr<f64>)> = (0..m)
        .map(|i| {
            let budget = rng.gen_range(0.5..1.5) * (n as f64 * 0.25).max(1.0);
            Ok((
                1.0,
                ValuationExpr::budget_additive([(CoordId(i as u32), 1.0)], budget)?,
            ))
        })
        .collect::<Result<_, ValuationError>>()?;
    let valuation = ValuationExpr::lin_transform(rows, ValuationExpr::sum(budget_terms)?)?;
    Ok(Instance {
        coords,
        arrivals,
        valuation,
        meta: meta(
            Family::WholePage,
            &[("n", n as f64), ("m", m as f64), ("k", k as f64)],
            seed,
        ),
    })
}

/// Exact level decomposition of the assignment objective
/// `x ↦ max { Σ (w_a/b_a)·z_a : z ∈ P(rank), z_a ≤ b_a·x_a }`: with the
/// distinct ratios `θ_1 > … > θ_L` of `w_a/b_a` and `E_ℓ = {a : w_a/b_a ≥ θ_ℓ}`,
/// the objective equals `Σ_ℓ (θ_ℓ − θ_{ℓ+1}) · rank-extension(b⊙x restricted
/// to E_ℓ)`. The integrand is a step function of the level, so the
/// decomposition is exact, not a discretization.
fn assignment_valuation(
    rank: RankOracle<f64>,
    coords: &[CoordId],
    costs: &[f64],
    weights: &[f64],
) -> Result<ValuationExpr<f64>, ValuationError> {
    let mut levels: Vec<f64> = weights
        .iter()
        .zip(costs)
        .map(|(&w, &b)| w / b)
        .collect();
    levels.sort_by(|a, b| b.partial_cmp(a).expect("ratios are finite"));
    levels.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    let full_scale = |active: &dyn Fn(usize) -> bool| -> Vec<(CoordId, f64)> {
        coords
            .iter()
            .enumerate()
            .map(|(a, &c)| (c, if active(a) { costs[a] } else { 0.0 }))
            .collect()
    };
    if levels.len() == 1 {
        // Uniform bang-per-buck: a single rank node, with the common ratio
        // folded into the scale by positive homogeneity.
        let theta = levels[0];
        return ValuationExpr::polymatroid(
            rank,
            full_scale(&|_| true)
                .into_iter()
                .map(|(c, s)| (c, s * theta)),
        );
    }
    let mut terms = Vec::with_capacity(levels.len());
    for (idx, &theta) in levels.iter().enumerate() {
        let next = levels.get(idx + 1).copied().unwrap_or(0.0);
        let scale = full_scale(&|a: usize| weights[a] / costs[a] >= theta - 1e-12);
        terms.push((
            theta - next,
            ValuationExpr::polymatroid(rank.clone(), scale)?,
        ));
    }
    ValuationExpr::sum(terms)
}

/// Options are the ground elements of a random polymatroid; each has a cost
/// `b_a` and weight `w_a` with quantized bang-per-buck ratios, spread
/// round-robin over `n` arrivals.
fn polymatroid_assignment(n: usize, m: usize, seed: u64) -> Result<Instance<f64>, InstanceError> {
    if m > 20 {
        return Err(InstanceError::BadParams(format!(
            "polymatroid ground set capped at 20 elements, got {m}"
        )));
    }
    if m < n {
        return Err(InstanceError::BadParams(format!(
            "need at least one option per arrival: m = {m} < n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x706f6c79);
    let coords: Vec<CoordId> = (0..m).map(|c| CoordId(c as u32)).collect();
    let mut arrivals: Vec<Arrival> = (0..n).map(|j| Arrival { j, options: vec![] }).collect();
    for (a, &c) in coords.iter().enumerate() {
        arrivals[a % n].options.push(c);
    }
    let costs: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..1.5)).collect();
    // Quantized ratio levels keep the number of decomposition terms small
    // and make the uniform-ratio collapse reachable.
    let ratio_menu = [0.5, 1.0, 1.5];
    let weights: Vec<f64> = costs
        .iter()
        .map(|&b| b * ratio_menu[rng.gen_range(0..ratio_menu.len())])
        .collect();
    let rank = match rng.gen_range(0..3) {
        0 => RankOracle::CardinalityCap {
            k: rng.gen_range(1.0..(m as f64 / 2.0).max(1.5)),
        },
        1 => {
            let mut blocks: Vec<Vec<usize>> = Vec::new();
            let mut caps = Vec::new();
            let mut e = 0;
            while e < m {
                let width = rng.gen_range(1..=3.min(m - e));
                blocks.push((e..e + width).collect());
                caps.push(rng.gen_range(0.5..2.0));
                e += width;
            }
            RankOracle::Partition { blocks, caps }
        }
        _ => {
            let sets = (m / 2).max(1);
            let covers: Vec<Vec<usize>> = (0..m)
                .map(|_| {
                    let mut cover: Vec<usize> = (0..sets)
                        .filter(|_| rng.gen_range(0.0..1.0) < 0.6)
                        .collect();
                    if cover.is_empty() {
                        cover.push(rng.gen_range(0..sets));
                    }
                    cover
                })
                .collect();
            let weights = (0..sets).map(|_| rng.gen_range(0.4..1.2)).collect();
            RankOracle::WeightedCoverage { weights, covers }
        }
    };
    let valuation = assignment_valuation(rank, &coords, &costs, &weights)?;
    Ok(Instance {
        coords,
        arrivals,
        valuation,
        meta: meta(
            Family::PolymatroidAssignment,
            &[("n", n as f64), ("m", m as f64)],
            seed,
        ),
    })
}

/// Two unit-budget agents. Arrival 0 is one contested item either agent can
/// take; arrival 1 helps only agent 1. Hindsight gives item 1 to agent 2 and
/// item 2 to agent 1 for a value of 2; myopic play wastes arrival 1.
fn two_agent_tie(seed: u64) -> Instance<f64> {
    let coords = vec![CoordId(0), CoordId(1), CoordId(2)];
    let arrivals = vec![
        Arrival {
            j: 0,
            options: vec![CoordId(0), CoordId(1)],
        },
        Arrival {
            j: 1,
            options: vec![CoordId(2)],
        },
    ];
    let valuation = ValuationExpr::sum([
        (
            1.0,
            ValuationExpr::budget_additive([(CoordId(0), 1.0), (CoordId(2), 1.0)], 1.0)
                .expect("valid"),
        ),
        (
            1.0,
            ValuationExpr::budget_additive([(CoordId(1), 1.0)], 1.0).expect("valid"),
        ),
    ])
    .expect("valid");
    Instance {
        coords,
        arrivals,
        valuation,
        meta: meta(Family::TwoAgentTie, &[("opt", 2.0)], seed),
    }
}

/// A grab-bag valuation touching every expression node kind, for shakeout
/// testing rather than any particular economics.
fn random_mixture(n: usize, k: usize, seed: u64) -> Result<Instance<f64>, InstanceError> {
    if k < 1 {
        return Err(InstanceError::BadParams(
            "need at least one option per arrival".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d697874);
    let dim = n * k;
    let coords: Vec<CoordId> = (0..dim).map(|c| CoordId(c as u32)).collect();
    let arrivals: Vec<Arrival> = (0..n)
        .map(|j| Arrival {
            j,
            options: (0..k).map(|c| CoordId((j * k + c) as u32)).collect(),
        })
        .collect();

    let subset = |rng: &mut ChaCha8Rng, lo: usize| -> Vec<(CoordId, f64)> {
        let size = rng.gen_range(lo..=lo.max(dim.min(4)));
        let mut picked = BTreeSet::new();
        while picked.len() < size.min(dim) {
            picked.insert(rng.gen_range(0..dim));
        }
        picked
            .into_iter()
            .map(|c| (CoordId(c as u32), rng.gen_range(0.2..1.0)))
            .collect()
    };

    let mut terms: Vec<(f64, ValuationExpr<f64>)> = Vec::new();
    // Budget-additive block.
    terms.push((
        1.0,
        ValuationExpr::budget_additive(subset(&mut rng, 2), rng.gen_range(0.6..1.6))?,
    ));
    // Concave-of-linear block.
    let which = rng.gen_range(0..3);
    let curve = scalar_kind(&mut rng, which);
    terms.push((
        rng.gen_range(0.4..1.0),
        ValuationExpr::concave(curve, ValuationExpr::linear(subset(&mut rng, 2))?)?,
    ));
    // Matrix-credited budgets.
    let rows: Vec<BTreeMap<CoordId, f64>> = (0..2)
        .map(|_| subset(&mut rng, 1).into_iter().collect())
        .collect();
    let inner = ValuationExpr::sum([
        (
            1.0,
            ValuationExpr::budget_additive([(CoordId(0), 1.0)], rng.gen_range(0.5..1.2))?,
        ),
        (
            1.0,
            ValuationExpr::budget_additive([(CoordId(1), 1.0)], rng.gen_range(0.5..1.2))?,
        ),
    ])?;
    terms.push((1.0, ValuationExpr::lin_transform(rows, inner)?));
    // Composition: a budgeted mix of two inner expressions.
    let outer = ValuationExpr::budget_additive(
        [(CoordId(0), 1.0), (CoordId(1), rng.gen_range(0.5..1.0))],
        rng.gen_range(0.8..1.5),
    )?;
    let inner_a = ValuationExpr::concave(
        ScalarConcave::Log1p {
            rate: rng.gen_range(0.5..2.0),
        },
        ValuationExpr::linear(subset(&mut rng, 1))?,
    )?;
    let inner_b = ValuationExpr::budget_additive(subset(&mut rng, 1), rng.gen_range(0.5..1.2))?;
    terms.push((
        rng.gen_range(0.4..1.0),
        ValuationExpr::compose(outer, vec![inner_a, inner_b])?,
    ));
    // Polymatroid block over the first few coordinates.
    let ground = dim.min(6);
    let scale: Vec<(CoordId, f64)> = (0..ground)
        .map(|c| (CoordId(c as u32), rng.gen_range(0.4..1.2)))
        .collect();
    terms.push((
        rng.gen_range(0.4..1.0),
        ValuationExpr::polymatroid(
            RankOracle::CardinalityCap {
                k: rng.gen_range(1.0..ground as f64),
            },
            scale,
        )?,
    ));
    // A faint linear term so no coordinate is ever entirely ignored.
    let sweep: Vec<(CoordId, f64)> = coords.iter().map(|&c| (c, 0.02)).collect();
    terms.push((1.0, ValuationExpr::linear(sweep)?));

    Ok(Instance {
        coords,
        arrivals,
        valuation: ValuationExpr::sum(terms)?,
        meta: meta(
            Family::RandomMixture,
            &[("n", n as f64), ("k", k as f64)],
            seed,
        ),
    })
}
