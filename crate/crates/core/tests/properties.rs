use mqdyn::curve::energy_partition;
use mqdyn::measure::quantile_coupling;
use mqdyn::verify::{random_joint, random_partition};
use mqdyn::{
    AtomicMeasure, Coupling, GridPathLaw, Interpolation, LawOrigin, MarginalCurve, TimePartition,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn measure() -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::btree_map(-20i32..20, 1u32..20, 1..6).prop_map(|atoms| {
        let (p, w): (Vec<f64>, Vec<f64>) = atoms
            .into_iter()
            .map(|(x, w)| (x as f64 / 4.0, w as f64))
            .unzip();
        AtomicMeasure::from_weights(&p, &w).unwrap()
    })
}

/// Mass of atom `j` of `nu` mirrored, so that a quantile coupling with the
/// reflection becomes the anti-monotone plan.
fn anti_monotone(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Vec<Vec<f64>> {
    let flipped =
        AtomicMeasure::new(nu.positions().iter().map(|x| -x).collect(), nu.masses().to_vec()).unwrap();
    let q = quantile_coupling(mu, &flipped).matrix();
    let m = nu.len();
    q.into_iter()
        .map(|row| (0..m).map(|j| row[m - 1 - j]).collect())
        .collect()
}

/// A plan mixing the monotone, independent and anti-monotone couplings.
fn mixed(mu: &AtomicMeasure, nu: &AtomicMeasure, w: [u8; 3]) -> Coupling {
    let total = w.iter().map(|x| *x as f64).sum::<f64>().max(1.0);
    let (a, b) = (w[0] as f64 / total, w[1] as f64 / total);
    let c = if w.iter().all(|x| *x == 0) { 1.0 } else { w[2] as f64 / total };
    let q = quantile_coupling(mu, nu).matrix();
    let i = Coupling::independent(mu, nu).matrix();
    let r = anti_monotone(mu, nu);
    let rows = (0..mu.len())
        .map(|k| {
            (0..nu.len())
                .map(|j| a * q[k][j] + b * i[k][j] + c * r[k][j])
                .collect()
        })
        .collect();
    Coupling::new(mu.clone(), nu.clone(), rows).unwrap()
}

fn weights() -> impl Strategy<Value = [u8; 3]> {
    [0u8..4, 0u8..4, 0u8..4]
}

/// F_mu >= F_nu at every atom of either measure.
fn cdf_dominates(mu: &AtomicMeasure, nu: &AtomicMeasure) -> bool {
    mu.positions()
        .iter()
        .chain(nu.positions())
        .all(|x| mu.cdf(*x) >= nu.cdf(*x) - 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quantile_coupling_has_the_marginals(mu in measure(), nu in measure()) {
        let q = quantile_coupling(&mu, &nu);
        for (i, m) in mu.masses().iter().enumerate() {
            prop_assert!((q.row(i).iter().sum::<f64>() - m).abs() < 1e-12);
        }
        for (j, m) in nu.masses().iter().enumerate() {
            let col: f64 = (0..mu.len()).map(|i| q.mass(i, j)).sum();
            prop_assert!((col - m).abs() < 1e-12);
        }
        prop_assert!((q.cost() - mu.w2(&nu).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn w2_is_a_metric(a in measure(), b in measure(), c in measure()) {
        prop_assert!(a.w2(&a) < 1e-12);
        prop_assert!((a.w2(&b) - b.w2(&a)).abs() < 1e-12);
        prop_assert!(a.w2(&c) <= a.w2(&b) + b.w2(&c) + 1e-9);
    }

    #[test]
    fn quantile_plan_is_cheapest(mu in measure(), nu in measure(), w in weights()) {
        prop_assert!(quantile_coupling(&mu, &nu).cost() <= mixed(&mu, &nu, w).cost() + 1e-9);
    }

    #[test]
    fn sto_matches_cdf_domination(mu in measure(), nu in measure()) {
        prop_assert_eq!(mu.sto_leq(&nu), cdf_dominates(&mu, &nu));
        if mu.sto_leq(&nu) && nu.sto_leq(&mu) {
            prop_assert!(mu.approx_eq(&nu));
        }
    }

    #[test]
    fn sto_is_preserved_by_right_shifts(mu in measure(), shift in 0.0f64..3.0) {
        prop_assert!(mu.sto_leq(&mu.affine(1.0, shift).unwrap()));
        prop_assert!(mu.sto_leq(&mu));
    }

    #[test]
    fn product_is_associative(
        a in measure(), b in measure(), c in measure(), d in measure(),
        w1 in weights(), w2 in weights(), w3 in weights(),
    ) {
        let p = mixed(&a, &b, w1);
        let q = mixed(&b, &c, w2);
        let r = mixed(&c, &d, w3);
        let left = p.product(&q).unwrap().product(&r).unwrap();
        let right = p.product(&q.product(&r).unwrap()).unwrap();
        prop_assert!(left.cdf_distance(&right) < 1e-12);
    }

    #[test]
    fn concat_projects_to_its_parts(a in measure(), b in measure(), c in measure(), w1 in weights(), w2 in weights()) {
        let p = mixed(&a, &b, w1);
        let q = mixed(&b, &c, w2);
        let t = p.concat(&q).unwrap();
        prop_assert!(t.project(0, 1).unwrap().cdf_distance(&p) < 1e-12);
        prop_assert!(t.project(1, 2).unwrap().cdf_distance(&q) < 1e-12);
        prop_assert!(t.project(0, 2).unwrap().cdf_distance(&p.product(&q).unwrap()) < 1e-12);
    }

    #[test]
    fn increasing_kernels_are_closed_under_products(a in measure(), b in measure(), c in measure()) {
        let p = quantile_coupling(&a, &b);
        let q = quantile_coupling(&b, &c);
        prop_assert!(p.increasing_kernel());
        prop_assert!(q.increasing_kernel());
        prop_assert!(p.product(&q).unwrap().increasing_kernel());
    }

    #[test]
    fn lo_order_is_a_partial_order_with_the_quantile_plan_least(
        mu in measure(), nu in measure(), w1 in weights(), w2 in weights(),
    ) {
        let p = mixed(&mu, &nu, w1);
        let q = mixed(&mu, &nu, w2);
        // The monotone plan has the largest joint CDF.
        let least = quantile_coupling(&mu, &nu);
        prop_assert!(p.lo_leq(&p).unwrap());
        prop_assert!(least.lo_leq(&p).unwrap());
        if p.lo_leq(&q).unwrap() && q.lo_leq(&p).unwrap() {
            prop_assert!(p.cdf_distance(&q) < 1e-9);
        }
    }

    #[test]
    fn make_markov_is_idempotent_and_keeps_pairs(seed in any::<u64>(), dims in [1usize..4, 1usize..4, 1usize..4]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (joint, _, _) = random_joint(&mut rng, dims).unwrap();
        let grid: TimePartition = "0,0.5,1".parse().unwrap();
        let l = GridPathLaw::from_joint(grid, joint, Interpolation::Linear, LawOrigin::Custom).unwrap();
        let once = l.make_markov_at(&[0.5]).unwrap();
        let twice = once.make_markov_at(&[0.5]).unwrap();
        prop_assert!(once.is_markov().unwrap());
        prop_assert!(once.joint_of().unwrap().max_abs_diff(&twice.joint_of().unwrap()).unwrap() < 1e-12);
        for (a, b) in [(0, 1), (1, 2)] {
            let before = l.pair_coupling(a, b).unwrap();
            let after = once.pair_coupling(a, b).unwrap();
            prop_assert!(before.cdf_distance(&after) < 1e-12);
        }
        for k in 0..3 {
            prop_assert!(l.marginal(k).approx_eq(once.marginal(k)));
        }
    }

    #[test]
    fn make_markov_commutes_with_restriction(seed in any::<u64>(), dims in [1usize..4, 1usize..4, 1usize..4]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (joint, _, _) = random_joint(&mut rng, dims).unwrap();
        let grid: TimePartition = "0,0.5,1".parse().unwrap();
        let l = GridPathLaw::from_joint(grid, joint, Interpolation::Linear, LawOrigin::Custom).unwrap();
        // Restricting to the first two times forgets the Markov gluing.
        let glued = l.make_markov_at(&[0.5]).unwrap().joint_of().unwrap().restrict(0, 1).unwrap();
        let plain = l.joint_of().unwrap().restrict(0, 1).unwrap();
        prop_assert!(glued.max_abs_diff(&plain).unwrap() < 1e-12);
    }

    #[test]
    fn energy_grows_under_refinement(seed in any::<u64>(), which in 0usize..5, levels in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = MarginalCurve::presets(levels).swap_remove(which);
        let coarse = random_partition(&mut rng, 0.0, 1.0, 3);
        let extra = random_partition(&mut rng, 0.0, 1.0, 4);
        let fine = coarse.with_times(extra.interior());
        prop_assert!(fine.contains_all(&coarse));
        let (e0, e1) = (energy_partition(&c, &coarse).unwrap(), energy_partition(&c, &fine).unwrap());
        prop_assert!(e1 >= e0 - 1e-12, "{} < {}", e1, e0);
    }

    #[test]
    fn partitions_round_trip_through_text(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_partition(&mut rng, 0.0, 1.0, n);
        let text = p.times().iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(",");
        let back: TimePartition = text.parse().unwrap();
        prop_assert_eq!(back.times(), p.times());
    }
}
