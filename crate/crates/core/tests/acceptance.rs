//! End-to-end acceptance checks. Each test exercises one headline guarantee
//! of the library at its stated tolerance and prints a single summary line;
//! run with `--nocapture` to see the lines.

use std::collections::BTreeMap;
use std::f64::consts::E;
use std::time::Instant;

use cdr_alloc::polymatroid::{pm_grad, pm_value, rank, RankOracle, SubsetMask};
use cdr_alloc::{
    check_cdr, dual_upper_bound, frank_wolfe, gamma_e, generate, run_online, verify_certificate,
    CdrValuation, CoordId, Family, GenParams, Instance, Policy, PointSampler, QuadratureScheme,
    ScalarConcave, UTransform, ValuationExpr, FW_MAX_ITERS, FW_TOL,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(id: u32) -> CoordId {
    CoordId(id)
}

fn run(
    inst: &Instance<f64>,
    policy: Policy,
    delta: f64,
) -> (
    cdr_alloc::AllocationState<f64>,
    cdr_alloc::DualCertificate<f64>,
    cdr_alloc::RunReport,
) {
    run_online(inst, policy, delta, QuadratureScheme::default()).expect("engine run")
}

/// Random valuation in one of the five shape families used by the
/// balanced-inequality sweep.
fn random_valuation(shape: usize, rng: &mut ChaCha8Rng) -> ValuationExpr<f64> {
    let dim = rng.gen_range(2..=6usize);
    let coords = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<(CoordId, f64)> {
        (0..dim)
            .map(|i| (c(i as u32), rng.gen_range(lo..hi)))
            .collect()
    };
    match shape {
        0 => ValuationExpr::linear(coords(rng, 0.05, 2.0)).unwrap(),
        1 => {
            let w = coords(rng, 0.1, 2.0);
            let b = rng.gen_range(0.3..3.0);
            ValuationExpr::budget_additive(w, b).unwrap()
        }
        2 => {
            let curve = match rng.gen_range(0..4) {
                0 => ScalarConcave::Cap {
                    cap: rng.gen_range(0.5..2.0),
                },
                1 => ScalarConcave::Log1p {
                    rate: rng.gen_range(0.5..2.5),
                },
                2 => ScalarConcave::ExpSat {
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
            };
            let inner = ValuationExpr::linear(coords(rng, 0.2, 1.5)).unwrap();
            ValuationExpr::concave(curve, inner).unwrap()
        }
        3 => {
            // Whole-page shape: budgets credited through a sparse matrix.
            let rows: Vec<BTreeMap<CoordId, f64>> = (0..rng.gen_range(2..=3usize))
                .map(|_| {
                    let mut row = BTreeMap::new();
                    for i in 0..dim {
                        if rng.gen_bool(0.6) {
                            row.insert(c(i as u32), rng.gen_range(0.2..1.0));
                        }
                    }
                    row.entry(c(rng.gen_range(0..dim) as u32))
                        .or_insert_with(|| rng.gen_range(0.2..1.0));
                    row
                })
                .collect();
            let inner = ValuationExpr::sum(rows.iter().enumerate().map(|(i, _)| {
                (
                    1.0,
                    ValuationExpr::budget_additive(
                        [(c(i as u32), rng.gen_range(0.5..1.2))],
                        rng.gen_range(0.4..1.5),
                    )
                    .unwrap(),
                )
            }))
            .unwrap();
            ValuationExpr::lin_transform(rows, inner).unwrap()
        }
        _ => {
            let m = rng.gen_range(2..=5usize);
            let scale: Vec<(CoordId, f64)> = (0..m)
                .map(|i| (c(i as u32), rng.gen_range(0.4..1.5)))
                .collect();
            let oracle = random_rank(m, rng);
            ValuationExpr::polymatroid(oracle, scale).unwrap()
        }
    }
}

fn random_rank(m: usize, rng: &mut ChaCha8Rng) -> RankOracle<f64> {
    match rng.gen_range(0..3) {
        0 => RankOracle::CardinalityCap {
            k: rng.gen_range(0.5..m as f64),
        },
        1 => {
            let blocks: Vec<Vec<usize>> = (0..2)
                .map(|b| (0..m).filter(|i| i % 2 == b).collect())
                .collect();
            let caps = vec![rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
            RankOracle::Partition { blocks, caps }
        }
        _ => {
            let items = rng.gen_range(2..=4usize);
            let weights: Vec<f64> = (0..items).map(|_| rng.gen_range(0.2..1.2)).collect();
            let covers: Vec<Vec<usize>> = (0..m)
                .map(|_| (0..items).filter(|_| rng.gen_bool(0.6)).collect())
                .collect();
            RankOracle::WeightedCoverage { weights, covers }
        }
    }
}

/// The balanced inequality `(1/γ)·f(x) ≥ U(x) + f̂(∇U(x))` must hold for
/// every CDR valuation; sweep ≥1000 random (valuation, point) pairs across
/// the five shape families.
#[test]
fn balanced_inequality_across_families() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC_E_01);
    let gamma = gamma_e::<f64>();
    let scheme = QuadratureScheme::<f64>::default();
    assert_eq!(scheme.nodes(), 257);
    let mut pairs = 0usize;
    let mut worst = f64::INFINITY;
    for shape in 0..5 {
        for _ in 0..42 {
            let f = random_valuation(shape, &mut rng);
            let dim = f.min_dim();
            let u = UTransform::new(&f, scheme.clone());
            for _ in 0..5 {
                let x: Vec<f64> = (0..dim)
                    .map(|_| {
                        if rng.gen_bool(0.1) {
                            0.0
                        } else {
                            rng.gen_range(0.0..2.2)
                        }
                    })
                    .collect();
                let fx = f.eval(&x).unwrap();
                let slack = u.balanced_check(&x, gamma);
                let floor = -1e-5 * (1.0 + fx);
                assert!(
                    slack >= floor,
                    "shape {shape}: slack {slack} below {floor} at x={x:?}"
                );
                worst = worst.min(slack / (1.0 + fx));
                pairs += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(pairs >= 1000, "only {pairs} pairs");
    assert!(secs < 120.0, "sweep took {secs:.1}s");
    println!(
        "[PASS] balanced inequality: {pairs} pairs, worst normalized slack {worst:.3e}, {secs:.1}s"
    );
}

/// For `f = min(x, 1)` the balanced inequality is tight: the slack vanishes
/// and `U(x) + f̂(∇U(x))` equals `e·x/(e−1)` on `0 < x < 1`.
#[test]
fn budget_tightness_witness() {
    let f = ValuationExpr::budget_additive([(c(0), 1.0)], 1.0).unwrap();
    let u = UTransform::new(&f, QuadratureScheme::default());
    let gamma = gamma_e::<f64>();
    let mut worst = 0.0f64;
    for k in 1..=9 {
        let x = [0.1 * k as f64];
        let slack = u.balanced_check(&x, gamma);
        let total = u.u_eval(&x) + u.fhat_upper_at_ugrad(&x);
        let oracle = E * x[0] / (E - 1.0);
        assert!(slack.abs() <= 1e-5, "slack {slack} at x={}", x[0]);
        assert!(
            (total - oracle).abs() <= 1e-5,
            "U+f̂ = {total} vs closed form {oracle} at x={}",
            x[0]
        );
        worst = worst.max(slack.abs()).max((total - oracle).abs());
    }
    println!("[PASS] tightness witness: max deviation {worst:.3e} over x ∈ {{0.1,…,0.9}}");
}

/// The triangular instance drives the water-filling policy to its worst
/// case: the empirical ratio approaches 1−1/e from above and the certified
/// ratio stays above 1−1/e − 0.01. Larger n must not look better than
/// smaller n by more than noise.
#[test]
fn triangular_adwords_hard_instance() {
    let start = Instant::now();
    let params = |n| GenParams {
        n,
        ..GenParams::default()
    };
    let inst = generate(Family::Triangular, params(100), 0).unwrap();
    let (_, cert, report) = run(&inst, Policy::Balanced, 1e-3);
    verify_certificate(&cert, gamma_e()).expect("certificate verifies");
    let secs = start.elapsed().as_secs_f64();
    let empirical = report.primal / 100.0;
    assert!(
        (0.62..=0.68).contains(&empirical),
        "empirical ratio {empirical}"
    );
    assert!(
        report.certified_ratio >= gamma_e::<f64>() - 0.01,
        "certified ratio {}",
        report.certified_ratio
    );
    assert!(secs < 60.0, "n=100 run took {secs:.1}s");

    let small = run(
        &generate(Family::Triangular, params(10), 0).unwrap(),
        Policy::Balanced,
        1e-3,
    )
    .2;
    let large = run(
        &generate(Family::Triangular, params(200), 0).unwrap(),
        Policy::Balanced,
        1e-3,
    )
    .2;
    assert!(
        small.certified_ratio >= large.certified_ratio - 0.02,
        "trend violated: {} vs {}",
        small.certified_ratio,
        large.certified_ratio
    );
    println!(
        "[PASS] triangular hard instance: empirical {empirical:.4}, certified {:.4} (n=10: {:.4}, n=200: {:.4}), {secs:.1}s",
        report.certified_ratio, small.certified_ratio, large.certified_ratio
    );
}

/// On the tie instance the plain gradient policy wastes half the value
/// while water filling keeps three quarters.
#[test]
fn greedy_baseline_separation_on_the_tie() {
    let inst = generate(Family::TwoAgentTie, GenParams::default(), 0).unwrap();
    let opt = 2.0;
    let plain = run(&inst, Policy::PlainGreedy, 1e-3).2.primal / opt;
    let balanced = run(&inst, Policy::Balanced, 1e-3).2.primal / opt;
    assert!((plain - 0.50).abs() <= 0.01, "plain ratio {plain}");
    assert!((balanced - 0.75).abs() <= 0.01, "balanced ratio {balanced}");
    println!("[PASS] baseline separation: plain {plain:.4}, balanced {balanced:.4}");
}

fn family_lineup() -> Vec<(Family, GenParams, u64)> {
    vec![
        (
            Family::Triangular,
            GenParams {
                n: 20,
                ..GenParams::default()
            },
            0,
        ),
        (Family::ConcaveReturns, GenParams { n: 15, m: 4, k: 1 }, 7),
        (Family::WholePage, GenParams { n: 12, m: 4, k: 3 }, 7),
        (
            Family::PolymatroidAssignment,
            GenParams { n: 5, m: 6, k: 1 },
            7,
        ),
        (Family::TwoAgentTie, GenParams::default(), 0),
        (Family::RandomMixture, GenParams { n: 10, m: 4, k: 2 }, 7),
    ]
}

/// Weak duality brackets the optimum on every shipped family: the
/// Frank–Wolfe lower bound and the online primal both sit below the dual
/// upper bound.
#[test]
fn duality_sandwich_on_all_families() {
    let mut lines = Vec::new();
    for (family, params, seed) in family_lineup() {
        let inst = generate(family, params, seed).unwrap();
        let (_, cert, report) = run(&inst, Policy::Balanced, 1e-2);
        let dual = dual_upper_bound(&cert).expect("feasible certificate");
        let opt = frank_wolfe(&inst, FW_MAX_ITERS, FW_TOL);
        assert!(
            opt.lower_bound <= dual * (1.0 + 1e-3),
            "{family}: offline bound {} above dual {dual}",
            opt.lower_bound
        );
        assert!(
            report.primal <= dual * (1.0 + 1e-3),
            "{family}: primal {} above dual {dual}",
            report.primal
        );
        lines.push(format!(
            "{family} {:.3}≤{:.3}",
            opt.lower_bound.max(report.primal),
            dual
        ));
    }
    println!("[PASS] duality sandwich: {}", lines.join(", "));
}

/// Every run of either policy must emit a feasible dual: `β_j` covers every
/// option's final `α_a` to within 1e−9.
#[test]
fn dual_feasibility_after_every_run() {
    let mut worst = f64::INFINITY;
    let mut runs = 0usize;
    for (family, params, seed) in family_lineup() {
        let inst = generate(family, params, seed).unwrap();
        for policy in [Policy::Balanced, Policy::PlainGreedy] {
            for delta in [1e-2, 5e-2] {
                let (_, cert, _) = run(&inst, policy, delta);
                let vr = verify_certificate(&cert, policy.default_gamma::<f64>())
                    .expect("certificate verifies");
                assert!(
                    vr.feasibility_slack >= -1e-9,
                    "{family}/{policy}: slack {}",
                    vr.feasibility_slack
                );
                worst = worst.min(vr.feasibility_slack);
                runs += 1;
            }
        }
    }
    println!("[PASS] dual feasibility: {runs} runs, min slack {worst:.3e} ≥ -1e-9");
}

/// The diminishing-returns property suite passes for every node kind, every
/// closure operation, and the U-transform of each.
#[test]
fn cdr_property_suite_with_u_transforms() {
    struct UView<'a>(&'a UTransform<'a, f64, ValuationExpr<f64>>);
    impl CdrValuation<f64> for UView<'_> {
        fn input_len(&self) -> usize {
            self.0.base().min_dim()
        }
        fn value_at(&self, x: &[f64]) -> f64 {
            self.0.u_eval(x)
        }
        fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
            self.0.u_grad(x)
        }
    }

    let linear = ValuationExpr::linear([(c(0), 0.8), (c(1), 1.3)]).unwrap();
    let budget = ValuationExpr::budget_additive([(c(0), 1.0), (c(1), 0.6)], 0.9).unwrap();
    let explicit_values: Vec<f64> = (0..8u32)
        .map(|mask| 0.8 * (mask.count_ones() as f64).min(2.0))
        .collect();
    let cases: Vec<(&str, ValuationExpr<f64>)> = vec![
        ("linear", linear.clone()),
        ("budget_additive", budget.clone()),
        (
            "concave_cap",
            ValuationExpr::concave(ScalarConcave::Cap { cap: 1.1 }, linear.clone()).unwrap(),
        ),
        (
            "concave_log1p",
            ValuationExpr::concave(ScalarConcave::Log1p { rate: 1.4 }, linear.clone()).unwrap(),
        ),
        (
            "concave_expsat",
            ValuationExpr::concave(ScalarConcave::ExpSat { rate: 0.9 }, linear.clone()).unwrap(),
        ),
        (
            "concave_pwl",
            ValuationExpr::concave(
                ScalarConcave::Pwl {
                    knots: vec![(0.5, 0.5), (1.2, 0.85)],
                    tail_slope: 0.2,
                },
                linear.clone(),
            )
            .unwrap(),
        ),
        (
            "polymatroid_cap",
            ValuationExpr::polymatroid(
                RankOracle::CardinalityCap { k: 1.5 },
                [(c(0), 1.0), (c(1), 0.7), (c(2), 1.2)],
            )
            .unwrap(),
        ),
        (
            "polymatroid_explicit",
            ValuationExpr::polymatroid(
                RankOracle::Explicit {
                    m: 3,
                    values: explicit_values,
                },
                [(c(0), 0.9), (c(1), 1.1), (c(2), 0.8)],
            )
            .unwrap(),
        ),
        (
            "polymatroid_partition",
            ValuationExpr::polymatroid(
                RankOracle::Partition {
                    blocks: vec![vec![0, 2], vec![1]],
                    caps: vec![1.0, 0.5],
                },
                [(c(0), 1.0), (c(1), 1.0), (c(2), 0.6)],
            )
            .unwrap(),
        ),
        (
            "polymatroid_coverage",
            ValuationExpr::polymatroid(
                RankOracle::WeightedCoverage {
                    weights: vec![0.7, 1.1, 0.4],
                    covers: vec![vec![0, 1], vec![1], vec![0, 2]],
                },
                [(c(0), 1.0), (c(1), 0.8), (c(2), 1.3)],
            )
            .unwrap(),
        ),
        (
            "sum",
            ValuationExpr::sum([(1.0, budget.clone()), (0.6, linear.clone())]).unwrap(),
        ),
        (
            "lin_transform",
            ValuationExpr::lin_transform(
                vec![
                    [(c(0), 0.5), (c(2), 1.0)].into_iter().collect(),
                    [(c(1), 0.8)].into_iter().collect(),
                ],
                ValuationExpr::budget_additive([(c(0), 1.0), (c(1), 1.0)], 1.2).unwrap(),
            )
            .unwrap(),
        ),
        (
            "compose",
            ValuationExpr::compose(
                ValuationExpr::budget_additive([(c(0), 1.0), (c(1), 0.8)], 1.5).unwrap(),
                vec![
                    ValuationExpr::concave(ScalarConcave::Log1p { rate: 1.0 }, linear.clone())
                        .unwrap(),
                    budget.clone(),
                ],
            )
            .unwrap(),
        ),
    ];

    let mut worst_fd = 0.0f64;
    for (i, (name, f)) in cases.iter().enumerate() {
        f.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut sampler = PointSampler::new(0xCD12 + i as u64);
        let report = check_cdr(f, &mut sampler, 120, 1e-5)
            .unwrap_or_else(|v| panic!("{name} fails the property suite: {v}"));
        worst_fd = worst_fd.max(report.max_fd_rel_err);

        let u = UTransform::new(f, QuadratureScheme::default());
        let view = UView(&u);
        let mut sampler = PointSampler::new(0xD400 + i as u64);
        let report = check_cdr(&view, &mut sampler, 40, 1e-5)
            .unwrap_or_else(|v| panic!("U({name}) fails the property suite: {v}"));
        worst_fd = worst_fd.max(report.max_fd_rel_err);
    }
    println!(
        "[PASS] property suite: {} node/closure kinds plus U-transforms, max FD error {worst_fd:.3e}",
        cases.len()
    );
}

/// The tight-set evaluation of the polymatroid objective agrees with the
/// brute-force minimum form, and its gradient matches one-sided finite
/// differences.
#[test]
fn polymatroid_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC_E_08);
    let mut worst_val = 0.0f64;
    let mut worst_grad = 0.0f64;
    for fixture in 0..100 {
        let m = rng.gen_range(2..=6usize);
        let oracle = random_rank(m, &mut rng);
        for _ in 0..20 {
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.8)).collect();
            let fast = pm_value(&oracle, &x).unwrap();
            let mut brute = f64::INFINITY;
            for mask in 0..(1u32 << m) as SubsetMask {
                let mut v = rank(&oracle, m, mask).unwrap();
                for (i, &xi) in x.iter().enumerate() {
                    if mask >> i & 1 == 0 {
                        v += xi;
                    }
                }
                brute = brute.min(v);
            }
            let err = (fast - brute).abs();
            assert!(err <= 1e-9, "fixture {fixture}: {fast} vs {brute}");
            worst_val = worst_val.max(err);
        }
        for _ in 0..200 {
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.8)).collect();
            let g = pm_grad(&oracle, &x).unwrap();
            let base = pm_value(&oracle, &x).unwrap();
            let h = 1e-7;
            for i in 0..m {
                let mut xp = x.clone();
                xp[i] += h;
                let fd = (pm_value(&oracle, &xp).unwrap() - base) / h;
                let err = (fd - g[i]).abs();
                assert!(
                    err <= 1e-5,
                    "fixture {fixture} coord {i}: grad {} vs fd {fd}",
                    g[i]
                );
                worst_grad = worst_grad.max(err);
            }
        }
    }
    println!(
        "[PASS] polymatroid oracle: 100 fixtures, value err {worst_val:.3e}, grad err {worst_grad:.3e}"
    );
}

/// Shrinking the step size moves the primal by at most the engine's stated
/// discretization allowance `2·δ·n·G_max`.
#[test]
fn discretization_convergence() {
    let inst = generate(
        Family::Triangular,
        GenParams {
            n: 50,
            ..GenParams::default()
        },
        0,
    )
    .unwrap();
    let coarse = run(&inst, Policy::Balanced, 1e-2).2.primal;
    let fine = run(&inst, Policy::Balanced, 1e-3).2.primal;
    let g_max = inst.valuation.grad_bound();
    let allowance = 2.0 * 1e-2 * 50.0 * g_max;
    let diff = (coarse - fine).abs();
    assert!(diff < allowance, "|{coarse} − {fine}| = {diff} ≥ {allowance}");
    println!(
        "[PASS] discretization: |primal(1e-2) − primal(1e-3)| = {diff:.4} < {allowance:.2}"
    );
}
