use proptest::prelude::*;
use proptest::strategy::ValueTree;

use super::*;

fn lp(objective: &[f64], bounds: &[Bounds]) -> LpProblem {
    let mut p = LpProblem::new();
    for (c, b) in objective.iter().zip(bounds) {
        p.add_var(*b, *c);
    }
    p
}

fn check_strong_duality(p: &LpProblem, s: &LpSolution) {
    let dual = s.dual_objective(p, 0.0);
    assert!(
        (dual - s.objective).abs() < 1e-8 * (1.0 + s.objective.abs()),
        "primal {} dual {}",
        s.objective,
        dual
    );
}

fn check_feasible(p: &LpProblem, x: &[f64], tol: f64) {
    for row in &p.constraints {
        let lhs: f64 = row.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let ok = match row.relation {
            Relation::Le => lhs <= row.rhs + tol,
            Relation::Ge => lhs >= row.rhs - tol,
            Relation::Eq => (lhs - row.rhs).abs() <= tol,
        };
        assert!(ok, "row violated: {lhs} {} {}", row.relation.symbol(), row.rhs);
    }
    for (v, b) in x.iter().zip(&p.bounds) {
        assert!(*v >= b.lower - tol && *v <= b.upper + tol);
    }
}

#[test]
fn single_binding_bound() {
    let mut p = lp(&[1.0], &[Bounds::FREE]);
    p.add_constraint(&[(0, 1.0)], Relation::Ge, 3.0);
    let s = solve(&p).unwrap();
    assert!(s.is_optimal());
    assert!((s.x[0] - 3.0).abs() < 1e-12);
    assert!((s.objective - 3.0).abs() < 1e-12);
    assert!((s.duals[0] - 1.0).abs() < 1e-12);
    check_strong_duality(&p, &s);
}

#[test]
fn unbounded_and_infeasible() {
    let p = lp(&[-1.0], &[Bounds::NONNEG]);
    assert_eq!(solve(&p).unwrap().status, LpStatus::Unbounded);

    let mut q = lp(&[1.0], &[Bounds::NONNEG]);
    q.add_constraint(&[(0, 1.0)], Relation::Le, -1.0);
    assert_eq!(solve(&q).unwrap().status, LpStatus::Infeasible);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let mut p = lp(&[1.0, 1.0], &[Bounds::NONNEG, Bounds::NONNEG]);
    p.add_constraint(&[(0, 1.0)], Relation::Ge, 1.0);
    p.constraints[0].coeffs.pop();
    assert!(matches!(solve(&p), Err(LpError::DimensionMismatch(_))));
    let mut q = lp(&[1.0], &[Bounds::new(2.0, 1.0)]);
    q.add_constraint(&[(0, 1.0)], Relation::Ge, 0.0);
    assert!(matches!(solve(&q), Err(LpError::InvalidBounds { .. })));
}

#[test]
fn bounds_of_every_kind() {
    // min x0 - x1 + x2 + x3 with x0 in [1, 4], x1 <= 2, x2 free, x3 in [-1, -1]
    let mut p = lp(
        &[1.0, -1.0, 1.0, 1.0],
        &[
            Bounds::new(1.0, 4.0),
            Bounds::new(f64::NEG_INFINITY, 2.0),
            Bounds::FREE,
            Bounds::fixed(-1.0),
        ],
    );
    p.add_constraint(&[(2, 1.0), (0, 1.0)], Relation::Ge, -5.0);
    p.add_constraint(&[(2, 1.0)], Relation::Ge, -10.0);
    let s = solve(&p).unwrap();
    assert!(s.is_optimal());
    // x0 = 1, x1 = 2, x2 = -6, x3 = -1
    assert!((s.objective - (1.0 - 2.0 - 6.0 - 1.0)).abs() < 1e-10, "{:?}", s.x);
    check_feasible(&p, &s.x, 1e-9);
    check_strong_duality(&p, &s);
}

#[test]
fn equality_rows_and_redundancy() {
    let mut p = lp(&[1.0, 2.0, 3.0], &[Bounds::NONNEG; 3]);
    p.add_constraint(&[(0, 1.0), (1, 1.0), (2, 1.0)], Relation::Eq, 1.0);
    p.add_constraint(&[(0, 2.0), (1, 2.0), (2, 2.0)], Relation::Eq, 2.0);
    p.add_constraint(&[(0, 1.0)], Relation::Le, 0.25);
    let s = solve(&p).unwrap();
    assert!(s.is_optimal());
    assert!((s.objective - (0.25 + 2.0 * 0.75)).abs() < 1e-10);
    check_feasible(&p, &s.x, 1e-9);
    check_strong_duality(&p, &s);
}

/// Klee-Minty cube in dimension `n`, scaled so Dantzig's rule visits every vertex.
fn klee_minty(n: usize) -> LpProblem {
    let mut p = lp(&vec![0.0; n], &vec![Bounds::NONNEG; n]);
    for j in 0..n {
        p.objective[j] = -(2f64.powi((n - 1 - j) as i32));
    }
    for i in 0..n {
        let mut terms = Vec::new();
        for j in 0..i {
            terms.push((j, 2f64.powi((i - j + 1) as i32)));
        }
        terms.push((i, 1.0));
        p.add_constraint(&terms, Relation::Le, 5f64.powi((i + 1) as i32));
    }
    p
}

#[test]
fn klee_minty_terminates() {
    for n in 2..=8 {
        let p = klee_minty(n);
        let s = solve(&p).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective + 5f64.powi(n as i32)).abs() < 1e-6 * 5f64.powi(n as i32));
        assert!(s.pivots <= 1 << n, "n={n} pivots={}", s.pivots);
        check_strong_duality(&p, &s);
    }
}

#[test]
fn degenerate_cycling_instance_terminates() {
    // Beale's example cycles under the textbook rule without anti-cycling.
    let mut p = lp(&[-0.75, 150.0, -0.02, 6.0], &[Bounds::NONNEG; 4]);
    p.add_constraint(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0);
    p.add_constraint(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0);
    p.add_constraint(&[(2, 1.0)], Relation::Le, 1.0);
    let s = solve(&p).unwrap();
    assert!(s.is_optimal());
    assert!((s.objective + 0.05).abs() < 1e-10);
    assert!(s.pivots < 100);
    check_strong_duality(&p, &s);
}

#[test]
fn highly_degenerate_vertex() {
    // many rows through the optimum
    let n = 6;
    let mut p = lp(&vec![-1.0; n], &vec![Bounds::NONNEG; n]);
    for i in 0..n {
        for k in 0..n {
            let terms: Vec<(usize, f64)> = (0..n)
                .map(|j| (j, if j == i || j == k { 1.0 } else { 0.5 }))
                .collect();
            let total: f64 = terms.iter().map(|t| t.1).sum();
            p.add_constraint(&terms, Relation::Le, total);
        }
    }
    let s = solve(&p).unwrap();
    assert!(s.is_optimal());
    assert!((s.objective + n as f64).abs() < 1e-9);
    assert!(s.pivots < 500);
}

#[test]
fn dump_is_deterministic() {
    let p = klee_minty(3);
    let a = dump_problem(&p);
    assert_eq!(a, dump_problem(&p.clone()));
    assert!(a.starts_with("vars 3 rows 3"));
    assert_eq!(a.lines().count(), 1 + 1 + 3 + 3);
}

// brute-force vertex enumeration over boxed problems

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Minimum over all feasible vertices, `None` if there is none.
fn vertex_oracle(p: &LpProblem) -> Option<f64> {
    let n = p.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = p
        .constraints
        .iter()
        .map(|r| (r.coeffs.clone(), r.rhs))
        .collect();
    for (j, b) in p.bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), b.lower));
        planes.push((e, b.upper));
    }
    let mut best: Option<f64> = None;
    for_each_subset(planes.len(), n, &mut |idx| {
        let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            let feasible = p.constraints.iter().all(|row| {
                let lhs: f64 = row.coeffs.iter().zip(&x).map(|(a, v)| a * v).sum();
                match row.relation {
                    Relation::Le => lhs <= row.rhs + 1e-9,
                    Relation::Ge => lhs >= row.rhs - 1e-9,
                    Relation::Eq => (lhs - row.rhs).abs() <= 1e-9,
                }
            }) && x
                .iter()
                .zip(&p.bounds)
                .all(|(v, b)| *v >= b.lower - 1e-9 && *v <= b.upper + 1e-9);
            if feasible {
                let obj: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
    });
    best
}

fn random_boxed_lp(max_vars: usize, max_rows: usize) -> impl Strategy<Value = LpProblem> {
    (1..=max_vars, 1..=max_rows).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-5i32..=5, n),
            prop::collection::vec((-3i32..=3, 1i32..=6), n),
            prop::collection::vec((prop::collection::vec(-4i32..=4, n), 0usize..3, -10i32..=10), m),
        )
            .prop_map(move |(c, bnds, rows)| {
                let mut p = LpProblem::new();
                for (cj, (lo, w)) in c.iter().zip(&bnds) {
                    p.add_var(Bounds::new(*lo as f64, (*lo + *w) as f64), *cj as f64);
                }
                for (coeffs, rel, rhs) in rows {
                    let rel = [Relation::Le, Relation::Ge, Relation::Eq][rel];
                    let terms: Vec<(usize, f64)> =
                        coeffs.iter().enumerate().map(|(j, a)| (j, *a as f64)).collect();
                    p.add_constraint(&terms, rel, rhs as f64);
                }
                p
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_vertex_enumeration(p in random_boxed_lp(5, 6)) {
        let s = solve(&p).unwrap();
        match vertex_oracle(&p) {
            Some(v) => {
                prop_assert!(s.is_optimal(), "status {:?}\n{}", s.status, dump_problem(&p));
                prop_assert!((s.objective - v).abs() < 1e-7, "{} vs {}\n{}", s.objective, v, dump_problem(&p));
                check_feasible(&p, &s.x, 1e-8);
                check_strong_duality(&p, &s);
            }
            None => prop_assert_eq!(s.status, LpStatus::Infeasible),
        }
    }

    #[test]
    fn complementary_slackness(p in random_boxed_lp(6, 6)) {
        let s = solve(&p).unwrap();
        if s.is_optimal() {
            for (row, y) in p.constraints.iter().zip(&s.duals) {
                let lhs: f64 = row.coeffs.iter().zip(&s.x).map(|(a, v)| a * v).sum();
                prop_assert!((y * (lhs - row.rhs)).abs() < 1e-8);
                match row.relation {
                    Relation::Le => prop_assert!(*y <= 1e-9),
                    Relation::Ge => prop_assert!(*y >= -1e-9),
                    Relation::Eq => {}
                }
            }
        }
    }
}

#[test]
fn vertex_oracle_at_full_size() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = random_boxed_lp(8, 8);
    for _ in 0..6 {
        let p = strategy.new_tree(&mut runner).unwrap().current();
        let s = solve(&p).unwrap();
        match vertex_oracle(&p) {
            Some(v) => assert!((s.objective - v).abs() < 1e-7),
            None => assert_eq!(s.status, LpStatus::Infeasible),
        }
    }
}

// parametric

fn abs_problem() -> LpProblem {
    let mut p = lp(&[1.0], &[Bounds::FREE]);
    p.add_parametric_constraint(&[(0, 1.0)], Relation::Ge, 0.0, 1.0);
    p.add_parametric_constraint(&[(0, 1.0)], Relation::Ge, 0.0, -1.0);
    p.set_parameter_range(-1.0, 1.0);
    p
}

#[test]
fn parametric_absolute_value() {
    let sol = solve_parametric_rhs(&abs_problem()).unwrap();
    let pieces = sol.value.pieces();
    assert_eq!(pieces.len(), 2);
    assert!((pieces[0].slope + 1.0).abs() < 1e-12);
    assert!((pieces[1].slope - 1.0).abs() < 1e-12);
    assert!(sol.value.eval(0.0).unwrap().abs() < 1e-12);
    assert!((sol.value.eval(-0.7).unwrap() - 0.7).abs() < 1e-12);
    assert!(!sol.truncated());
}

fn scaled_super_replication() -> (LpProblem, f64) {
    let (u, d, r): (f64, f64, f64) = (1.1, 1.0 / 1.1, 0.03 / 12.0);
    let (ku, kd) = (1.2, 1.0);
    let mut p = lp(&[1.0, 1.0], &[Bounds::FREE, Bounds::FREE]);
    p.add_parametric_constraint(&[(0, u), (1, r.exp())], Relation::Ge, 0.0, ku);
    p.add_parametric_constraint(&[(0, d), (1, r.exp())], Relation::Ge, 0.0, kd);
    p.set_parameter_range(0.0, 3.0);
    let q = (r.exp() - d) / (u - d);
    (p, (-r).exp() * (q * ku + (1.0 - q) * kd))
}

#[test]
fn parametric_positive_homogeneity() {
    let (p, price) = scaled_super_replication();
    let sol = solve_parametric_rhs(&p).unwrap();
    assert_eq!(sol.value.len(), 1);
    assert!((sol.value.pieces()[0].slope - price).abs() < 1e-12);
    assert!(sol.value.eval(0.0).unwrap().abs() < 1e-12);
    assert!((solve_at(&p, 1.0).unwrap().objective - price).abs() < 1e-12);
}

#[test]
fn parametric_truncates_infeasible_ends() {
    // x >= z, x <= 1, x >= 0 on z in [-2, 2]: feasible only for z <= 1
    let mut p = lp(&[1.0], &[Bounds::NONNEG]);
    p.add_parametric_constraint(&[(0, 1.0)], Relation::Ge, 0.0, 1.0);
    p.add_constraint(&[(0, 1.0)], Relation::Le, 1.0);
    p.set_parameter_range(-2.0, 2.0);
    let sol = solve_parametric_rhs(&p).unwrap();
    assert!(sol.truncated());
    let (lo, hi) = sol.value.domain();
    assert_eq!(lo, -2.0);
    assert!((hi - 1.0).abs() < 1e-12);
    assert!((sol.value.eval(0.5).unwrap() - 0.5).abs() < 1e-12);
    assert!(sol.value.eval(-1.0).unwrap().abs() < 1e-12);

    let mut never = lp(&[1.0], &[Bounds::new(0.0, 1.0)]);
    never.add_parametric_constraint(&[(0, 1.0)], Relation::Ge, 5.0, 1.0);
    never.set_parameter_range(0.0, 1.0);
    assert!(matches!(
        solve_parametric_rhs(&never),
        Err(parametric::ParametricError::Infeasible { .. })
    ));

    let mut unb = lp(&[-1.0], &[Bounds::NONNEG]);
    unb.add_parametric_constraint(&[(0, 1.0)], Relation::Ge, 0.0, 1.0);
    unb.set_parameter_range(0.0, 1.0);
    assert!(matches!(
        solve_parametric_rhs(&unb),
        Err(parametric::ParametricError::Unbounded { .. })
    ));
}

/// Random parametric LP of the hedging shape: a CVaR-like epigraph with the
/// parameter in a budget row, so the value function has several kinks.
fn random_parametric(seed: u64) -> LpProblem {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(2..=4);
    let m = rng.gen_range(3..=7);
    let mut p = LpProblem::new();
    let x: Vec<usize> = (0..k).map(|_| p.add_var(Bounds::NONNEG, 0.0)).collect();
    let eta = p.add_var(Bounds::FREE, 1.0);
    let c = rng.gen_range(0.2..0.9);
    let probs: Vec<f64> = {
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    };
    let mut budget = vec![];
    for j in 0..m {
        let uj = p.add_var(Bounds::NONNEG, probs[j] / (1.0 - c));
        let target: f64 = rng.gen_range(0.5..1.5);
        // u_j + eta + W_j(x) >= target
        let mut terms: Vec<(usize, f64)> = x.iter().map(|&xi| (xi, rng.gen_range(0.3..1.7))).collect();
        terms.push((eta, 1.0));
        terms.push((uj, 1.0));
        p.add_constraint(&terms, Relation::Ge, target);
    }
    for &xi in &x {
        budget.push((xi, 1.0));
    }
    p.add_parametric_constraint(&budget, Relation::Eq, 0.0, 1.0);
    p.set_parameter_range(0.0, 2.0);
    p
}

#[test]
fn parametric_matches_dense_resolve_grid() {
    for seed in 0..40 {
        let p = random_parametric(seed);
        let sol = solve_parametric_rhs(&p).unwrap();
        assert!(sol.value.slopes_nondecreasing());
        let (lo, hi) = sol.value.domain();
        for k in 0..=100 {
            let z = lo + (hi - lo) * k as f64 / 100.0;
            let direct = solve_at(&p, z).unwrap();
            assert!(direct.is_optimal());
            let v = sol.value.eval(z).unwrap();
            assert!(
                (direct.objective - v).abs() < 1e-8,
                "seed {seed} z {z}: {} vs {v}",
                direct.objective
            );
            // the interpolated decision is feasible and attains the value
            let x = sol.decision_at(z).unwrap();
            let fixed = p.at_parameter(z);
            check_feasible(&fixed, &x, 1e-8);
            let obj: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            assert!((obj - v).abs() < 1e-8);
        }
    }
}

#[test]
fn duals_equal_local_slope() {
    for seed in 0..20 {
        let p = random_parametric(seed);
        let sol = solve_parametric_rhs(&p).unwrap();
        for piece in sol.value.pieces() {
            if piece.z_hi - piece.z_lo < 1e-4 {
                continue;
            }
            let z = 0.5 * (piece.z_lo + piece.z_hi);
            let s = solve_at(&p, z).unwrap();
            let slope: f64 = p
                .constraints
                .iter()
                .zip(&s.duals)
                .map(|(row, y)| y * row.rhs_direction)
                .sum();
            assert!((slope - piece.slope).abs() < 1e-8, "seed {seed}: {slope} vs {}", piece.slope);
            check_strong_duality(&p.at_parameter(z), &s);
        }
    }
}

#[test]
fn parametric_degenerate_breakpoints() {
    // v >= k z - k^2/2 for many k: tangent lines of z^2/2, several through each breakpoint
    let mut p = lp(&[1.0], &[Bounds::FREE]);
    for k in -5..=5 {
        let k = k as f64;
        for _ in 0..3 {
            p.add_parametric_constraint(&[(0, 1.0)], Relation::Ge, -k * k / 2.0, k);
        }
    }
    p.set_parameter_range(-6.0, 6.0);
    let sol = solve_parametric_rhs(&p).unwrap();
    assert_eq!(sol.value.len(), 11);
    for k in 0..=120 {
        let z = -6.0 + 0.1 * k as f64;
        let direct = solve_at(&p, z).unwrap().objective;
        assert!((direct - sol.value.eval(z).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn objective_constant_shifts_every_value() {
    let mut p = abs_problem();
    p.objective_constant = 2.5;
    let sol = solve_parametric_rhs(&p).unwrap();
    assert!((sol.value.eval(0.4).unwrap() - 2.9).abs() < 1e-12);
    let s = solve_at(&p, -0.3).unwrap();
    assert!((s.objective - 2.8).abs() < 1e-12);
    check_strong_duality(&p.at_parameter(-0.3), &s);
}

#[test]
fn near_parallel_cuts_trace_exactly() {
    // v >= s z - s^2/2 for slopes clustered within 1e-7 of each other
    let mut p = lp(&[1.0], &[Bounds::FREE]);
    let slopes: Vec<f64> = (0..40).map(|k| 1.0 - 1e-7 * k as f64).collect();
    for &s in &slopes {
        p.add_parametric_constraint(&[(0, 1.0)], Relation::Ge, -s * s / 2.0, s);
    }
    p.set_parameter_range(0.0, 2.0);
    let sol = solve_parametric_rhs(&p).unwrap();
    assert!(sol.value.slopes_nondecreasing());
    for k in 0..=50 {
        let z = 0.04 * k as f64;
        let direct = solve_at(&p, z).unwrap().objective;
        assert!((direct - sol.value.eval(z).unwrap()).abs() < 1e-9, "z = {z}");
    }
}
