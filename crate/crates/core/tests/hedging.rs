use riskctl::backtest::{replay, Path};
use riskctl::hedging::{
    algo2_node, price_from_value, AlgorithmSpec, CostToGo, HedgeModel, HedgeSolution, HedgingError, NodeCtx,
    RiskSpec, Variant,
};
use riskctl::lattice::{build_index_tree, LatticeParams};
use riskctl::market::{AssetMenu, GicContract, Product};
use riskctl::simplex::{value_at, Piece, PiecewiseLinearValue};

fn params(periods: usize, subperiods: usize) -> LatticeParams {
    LatticeParams {
        periods,
        subperiods,
        period_years: 1.0 / periods as f64,
        ..LatticeParams::default()
    }
}

fn model(p: &LatticeParams, call: bool, risk: RiskSpec, algorithm: AlgorithmSpec) -> HedgeModel {
    HedgeModel {
        menu: AssetMenu::new(p, true, call, false).unwrap(),
        tree: build_index_tree(p).unwrap(),
        product: Product::Gic(GicContract::default()),
        risk,
        algorithm,
    }
}

fn gic(periods: usize, subperiods: usize, risk: RiskSpec) -> HedgeModel {
    model(&params(periods, subperiods), true, risk, AlgorithmSpec::default())
}

fn super_replication() -> RiskSpec {
    RiskSpec {
        super_replication: true,
        ..RiskSpec::default()
    }
}

/// Risk-neutral price by enumerating every path of the unfolded tree.
fn crr_price(p: &LatticeParams) -> f64 {
    let u = (p.sigma * p.period_years.sqrt()).exp();
    let d = 1.0 / u;
    let growth = p.cash_growth();
    let q = (growth - d) / (u - d);
    let contract = GicContract::default();
    let mut total = 0.0;
    for mask in 0u32..(1 << p.periods) {
        let ups = mask.count_ones() as i32;
        let downs = p.periods as i32 - ups;
        let prob = q.powi(ups) * (1.0 - q).powi(downs);
        total += prob * contract.payoff(u.powi(ups - downs));
    }
    total / growth.powi(p.periods as i32)
}

#[test]
fn complete_market_matches_crr() {
    for t in 1..=6 {
        let p = params(t, 1);
        let m = model(&p, false, super_replication(), AlgorithmSpec::default());
        let s = m.solve().unwrap();
        let want = crr_price(&p);
        assert!((s.f0 - want).abs() < 1e-9, "T={t}: {} vs {want}", s.f0);
    }
}

#[test]
fn riskless_claim_costs_its_discounted_value() {
    let m = gic(2, 2, RiskSpec::cvar(0.6, 0.0));
    let ctx = NodeCtx::new(&m, 0, 0).unwrap();
    for c in [0.6, 0.95] {
        let g = vec![1.02; ctx.children.len()];
        let (cost, d) = algo2_node(&m, &ctx, &g, &RiskSpec::cvar(c, 0.0)).unwrap();
        assert!((cost - 1.02 / m.menu.cash_growth()).abs() < 1e-12);
        assert!(d.holdings.stock.abs() < 1e-12 && d.holdings.option.abs() < 1e-12);
    }
}

#[test]
fn one_lp_per_live_node() {
    let m = gic(2, 3, RiskSpec::cvar(0.6, 0.0));
    let s = m.solve().unwrap();
    assert_eq!(s.lp_solves, 3 + 1 + 1);
}

#[test]
fn price_is_monotone_in_retention() {
    let mut last = f64::NEG_INFINITY;
    for c in [0.3, 0.5, 0.7, 0.9] {
        let f0 = gic(4, 4, RiskSpec::cvar(c, 0.0)).solve().unwrap().f0;
        assert!(f0 >= last - 1e-12, "c={c}: {f0} < {last}");
        last = f0;
    }
}

#[test]
fn super_replication_dominates_and_is_the_limit() {
    let sr = gic(2, 2, super_replication()).solve().unwrap().f0;
    for c in [0.0, 0.5, 0.9] {
        for g0 in [0.0, 0.01] {
            let f0 = gic(2, 2, RiskSpec::cvar(c, g0)).solve().unwrap().f0;
            assert!(f0 <= sr + 1e-12);
        }
    }
    let near = gic(2, 2, RiskSpec::cvar(0.999, 0.0)).solve().unwrap().f0;
    assert!((near - sr).abs() < 1e-6, "{near} vs {sr}");
}

#[test]
fn option_never_raises_the_price() {
    for c in [0.5, 0.6, 0.95] {
        let p = params(12, 6);
        let with = model(&p, true, RiskSpec::cvar(c, 0.0), AlgorithmSpec::default());
        let without = model(&p, false, RiskSpec::cvar(c, 0.0), AlgorithmSpec::default());
        assert!(with.solve().unwrap().f0 <= without.solve().unwrap().f0 + 1e-12);
    }
}

fn pathwise(periods: usize, subperiods: usize, c: f64, gamma3: f64) -> HedgeModel {
    gic(
        periods,
        subperiods,
        RiskSpec {
            gamma3: Some(gamma3),
            ..RiskSpec::cvar(c, 0.0)
        },
    )
}

#[test]
fn loose_cap_gives_constant_cost_to_go() {
    let stateless = gic(3, 2, RiskSpec::cvar(0.6, 0.0)).solve().unwrap();
    let capped = pathwise(3, 2, 0.6, 10.0).solve().unwrap();
    for (t, i, f) in capped.functions() {
        let c = stateless.store[t][i].scalar().unwrap();
        // near the top of the domain the cap binds through growth
        for p in f.pieces().iter().filter(|p| p.z_lo < 1.0) {
            assert!(p.slope.abs() < 1e-9, "({t},{i}) slope {}", p.slope);
            assert!((p.eval(p.z_lo) - c).abs() < 1e-9, "({t},{i})");
        }
    }
    assert!((capped.f0 - stateless.f0).abs() < 1e-9);
}

#[test]
fn zero_cap_in_complete_market_is_super_replication() {
    let p = params(1, 1);
    let risk = RiskSpec {
        gamma3: Some(0.0),
        ..RiskSpec::cvar(0.5, 0.0)
    };
    let s = model(&p, false, risk, AlgorithmSpec::default()).solve().unwrap();
    let sr = model(&p, false, super_replication(), AlgorithmSpec::default()).solve().unwrap();
    assert!((s.f0 - sr.f0).abs() < 1e-9, "{} vs {}", s.f0, sr.f0);
}

/// Every path of the tree as child positions.
fn all_paths(m: &HedgeModel) -> Vec<Path> {
    let mut paths = vec![(0usize, Vec::new())];
    for t in 0..m.tree.periods() {
        paths = paths
            .into_iter()
            .flat_map(|(i, steps)| {
                m.tree.children(t, i).iter().enumerate().map(move |(pos, c)| {
                    let mut s: Vec<usize> = steps.clone();
                    s.push(pos);
                    (c.index, s)
                }).collect::<Vec<_>>()
            })
            .collect();
    }
    paths.into_iter().map(|(_, steps)| Path { steps }).collect()
}

#[test]
fn cap_holds_on_every_path() {
    let m = pathwise(2, 2, 0.59, 0.01);
    let s = m.solve().unwrap();
    let paths = all_paths(&m);
    assert_eq!(paths.len(), 9);
    let mut worst = f64::NEG_INFINITY;
    for p in &paths {
        let r = replay(&m, &s, p).unwrap();
        worst = worst.max(r.max_accumulated);
    }
    assert!(worst <= 0.01 + 1e-8, "{worst}");
}

/// Dense re-solve check of every stored cost-to-go.
fn check_grid(m: &HedgeModel, s: &HedgeSolution) {
    let mut checked = 0;
    for (t, i, f) in s.functions() {
        assert!(f.slopes_nondecreasing(), "({t},{i})");
        let lp = m.node_problem(s, t, i).unwrap();
        let (lo, hi) = f.domain();
        for k in 0..=50 {
            let z = lo + (hi - lo) * k as f64 / 50.0;
            let v = value_at(&lp, z).unwrap().unwrap();
            let w = f.eval(z).unwrap();
            assert!((v - w).abs() < 1e-8, "({t},{i}) z={z}: {v} vs {w}");
        }
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn pathwise_cost_to_go_matches_dense_resolves() {
    let m = pathwise(4, 3, 0.59, 0.02);
    check_grid(&m, &m.solve().unwrap());
}

fn capital(variant: Variant, overlay: Option<RiskSpec>) -> HedgeModel {
    let alg = AlgorithmSpec {
        variant,
        overlay,
        ..AlgorithmSpec::default()
    };
    model(&params(3, 3), true, RiskSpec::cvar(0.59, 0.0), alg)
}

#[test]
fn capital_variants_match_dense_resolves() {
    for (v, overlay) in [
        (Variant::StochasticProgram, None),
        (Variant::Barrier, None),
        (Variant::Coherent, None),
        (Variant::Coherent, Some(RiskSpec::cvar(0.59, 0.0))),
    ] {
        let m = capital(v, overlay);
        check_grid(&m, &m.solve().unwrap());
    }
}

#[test]
fn ample_capital_has_no_risk() {
    for v in [Variant::StochasticProgram, Variant::Barrier, Variant::Coherent] {
        let m = capital(v, None);
        let s = m.solve().unwrap();
        let sr = s.super_replication.as_ref().unwrap();
        for (t, i, f) in s.functions() {
            if sr[t][i] > f.domain().1 {
                continue;
            }
            assert!(f.eval(sr[t][i]).unwrap() <= 1e-9, "{v:?} ({t},{i})");
        }
    }
}

#[test]
fn barrier_without_bite_is_the_undiscounted_zero_weight_program() {
    let p = params(1, 3);
    let barrier = AlgorithmSpec {
        variant: Variant::Barrier,
        barrier_gamma0: 1e6,
        ..AlgorithmSpec::default()
    };
    let sp = AlgorithmSpec {
        variant: Variant::StochasticProgram,
        lambda: 0.0,
        ..AlgorithmSpec::default()
    };
    let a = model(&p, true, RiskSpec::cvar(0.6, 0.0), barrier).solve().unwrap();
    let b = model(&p, true, RiskSpec::cvar(0.6, 0.0), sp).solve().unwrap();
    let (fa, fb) = (a.store[0][0].function().unwrap(), b.store[0][0].function().unwrap());
    let g = p.cash_growth();
    let (lo, hi) = fa.domain();
    for k in 0..=10 {
        let z = lo + (hi - lo) * k as f64 / 10.0;
        assert!((fa.eval(z).unwrap() - g * fb.eval(z).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn coherent_price_with_overlay_is_positive_and_root_is_zero() {
    let m = capital(Variant::Coherent, Some(RiskSpec::cvar(0.59, 0.0)));
    let s = m.solve().unwrap();
    let root = s.store[0][0].function().unwrap();
    assert!(root.eval(s.f0).unwrap().abs() < 1e-9);
    assert!(s.f0 > 0.9 && s.f0 < 1.1);
}

#[test]
fn serial_and_parallel_sweeps_agree_bitwise() {
    let run = |threads: usize, m: &HedgeModel| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| m.solve().unwrap())
    };
    for m in [pathwise(3, 2, 0.59, 0.02), capital(Variant::Coherent, None)] {
        let (a, b) = (run(1, &m), run(4, &m));
        assert_eq!(a.f0.to_bits(), b.f0.to_bits());
        for (la, lb) in a.store.iter().zip(&b.store) {
            for (x, y) in la.iter().zip(lb) {
                match (x, y) {
                    (CostToGo::Function(f), CostToGo::Function(g)) => {
                        assert_eq!(f.hyperplanes(), g.hyperplanes());
                    }
                    _ => assert_eq!(x, y),
                }
            }
        }
    }
}

#[test]
fn price_extraction() {
    let v = PiecewiseLinearValue::new(vec![
        Piece { z_lo: 0.0, z_hi: 1.0, slope: -1.0, intercept: 1.0 },
        Piece { z_lo: 1.0, z_hi: 2.0, slope: 1.0, intercept: -1.0 },
    ])
    .unwrap();
    assert!((price_from_value(&v, 0.0).unwrap() - 1.0).abs() < 1e-15);
    let high = PiecewiseLinearValue::constant(0.0, 2.0, 0.5);
    assert!(matches!(price_from_value(&high, 0.0), Err(HedgingError::NoRoot(_))));
}
