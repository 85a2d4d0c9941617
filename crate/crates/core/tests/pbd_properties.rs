use fdx_core::pbd::PbdAccumulator;
use fdx_core::{binomial_tail_gt, pbd_pmf, pbd_tail_gt};
use proptest::prelude::*;

/// Exact pmf by summing over all `2^k` outcomes.
fn enumerate_pmf(p: &[f64]) -> Vec<f64> {
    let k = p.len();
    let mut mass = vec![0.0; k + 1];
    for mask in 0u32..(1 << k) {
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if mask >> i & 1 == 1 { pi } else { 1.0 - pi };
        }
        mass[mask.count_ones() as usize] += prob;
    }
    mass
}

fn enumerate_tail(p: &[f64], t: f64) -> f64 {
    enumerate_pmf(p)
        .iter()
        .enumerate()
        .filter(|(j, _)| *j as f64 > t)
        .map(|(_, m)| m)
        .sum()
}

fn probs(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![
            4 => 0.0..=1.0f64,
            1 => 0.0..1e-3f64,
            1 => (1.0 - 1e-3)..=1.0f64,
            1 => Just(0.0),
            1 => Just(1.0),
        ],
        1..=max_len,
    )
}

fn positive_probs(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..=1.0f64, 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pmf_is_normalized(p in probs(400)) {
        let pmf = pbd_pmf(&p).unwrap();
        prop_assert!((pmf.total() - 1.0).abs() <= 1e-12, "total {}", pmf.total());
        prop_assert!(pmf.mass().iter().all(|&m| (0.0..=1.0).contains(&m)));
    }

    #[test]
    fn tail_is_monotone_in_threshold(p in probs(60), a in 0.0..70.0f64, b in 0.0..70.0f64) {
        let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(pbd_tail_gt(&p, t1).unwrap() >= pbd_tail_gt(&p, t2).unwrap());
    }

    #[test]
    fn matches_enumeration(p in probs(16)) {
        let pmf = pbd_pmf(&p).unwrap();
        let exact = enumerate_pmf(&p);
        for (j, (&got, &want)) in pmf.mass().iter().zip(&exact).enumerate() {
            prop_assert!((got - want).abs() <= 1e-12, "mass[{j}] {got} vs {want}");
        }
        for t in (0..=2 * p.len()).map(|h| h as f64 / 2.0) {
            prop_assert!((pbd_tail_gt(&p, t).unwrap() - enumerate_tail(&p, t)).abs() <= 1e-12);
        }
    }

    #[test]
    fn accumulator_matches_batch(p in probs(80)) {
        let mut acc = PbdAccumulator::new();
        for &x in &p {
            acc.push(x).unwrap();
        }
        prop_assert_eq!(acc.pmf(), pbd_pmf(&p).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lowering_one_probability_lowers_every_tail(
        p in probs(20),
        idx in any::<prop::sample::Index>(),
        frac in 0.0..1.0f64,
    ) {
        let l = idx.index(p.len());
        let mut q = p.clone();
        q[l] *= frac;
        let before = enumerate_pmf(&p);
        let after = enumerate_pmf(&q);
        let (mut tb, mut ta) = (0.0, 0.0);
        for c in (1..=p.len()).rev() {
            tb += before[c];
            ta += after[c];
            prop_assert!(ta <= tb + 1e-12, "count {c}: {ta} > {tb}");
            let lib_b = pbd_tail_gt(&p, (c - 1) as f64).unwrap();
            let lib_a = pbd_tail_gt(&q, (c - 1) as f64).unwrap();
            prop_assert!(lib_a <= lib_b + 1e-12);
            prop_assert!((lib_a - ta).abs() <= 1e-10 && (lib_b - tb).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn geometric_mean_binomial_is_stochastically_smaller(p in positive_probs(50)) {
        let k = p.len();
        let geo = (p.iter().map(|x| x.ln()).sum::<f64>() / k as f64).exp();
        for t in 0..k {
            let t = t as f64;
            let lower = binomial_tail_gt(k, geo, t).unwrap();
            let tail = pbd_tail_gt(&p, t).unwrap();
            prop_assert!(lower <= tail + 1e-12, "t={t}: binomial {lower} > pbd {tail}");
        }
    }
}

#[test]
fn strict_threshold_at_integer_boundary() {
    let p = [0.5, 0.5, 0.5, 0.5];
    assert!((pbd_tail_gt(&p, 2.0).unwrap() - 5.0 / 16.0).abs() < 1e-15);
    assert!((pbd_tail_gt(&p, 1.999).unwrap() - 11.0 / 16.0).abs() < 1e-15);
}
