use fdx_core::procedures::{guo_romano_critical_value, lehmann_romano_critical_value};
use fdx_core::simharness::derive_seed;
use fdx_core::{
    compute_metrics, gen_iid, guo_romano, lfdr_oracle, pbd_tail_gt, procedure1, procedure2,
    pvalue_from_z_sided, FdxLevel, Gaussian, LfdrVector, PValueSide, ProcedureOptions,
    TwoGroupModel,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

/// Plain-arithmetic reference: tail of every prefix of the sorted values.
fn reference_tails(sorted: &[f64], level: &FdxLevel) -> Vec<f64> {
    let mut mass = vec![1.0];
    let mut tails = Vec::with_capacity(sorted.len());
    for (i, &p) in sorted.iter().enumerate() {
        let mut next = vec![0.0; mass.len() + 1];
        for (j, &m) in mass.iter().enumerate() {
            next[j] += m * (1.0 - p);
            next[j + 1] += m * p;
        }
        mass = next;
        let k = i + 1;
        let allowed = (level.gamma() * k as f64 + 1e-9).floor() as usize;
        tails.push(mass[allowed + 1..].iter().sum());
    }
    tails
}

/// lfdr values from a mixture of Beta laws: mostly near one, some near zero.
fn beta_mixture(m: usize, seed: u64) -> LfdrVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = Beta::new(0.3, 6.0).unwrap();
    let high = Beta::new(6.0, 0.5).unwrap();
    let share = rng.random_range(0.02..0.4);
    let values = (0..m)
        .map(|_| {
            if rng.random::<f64>() < share {
                low.sample(&mut rng)
            } else {
                high.sample(&mut rng)
            }
        })
        .collect();
    LfdrVector::new(values).unwrap()
}

fn simulated(m: usize, seed: u64) -> LfdrVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = rng.random_range(0.05..0.35);
    let mu = -rng.random_range(1.0..3.5);
    let data = gen_iid(m, pi, mu, seed).unwrap();
    lfdr_oracle(&data.z, &TwoGroupModel::standard(pi, mu).unwrap()).unwrap()
}

fn instance() -> impl Strategy<Value = (LfdrVector, FdxLevel)> {
    (
        prop::sample::select(vec![100usize, 1000, 5000]),
        any::<u64>(),
        any::<bool>(),
        prop::sample::select(vec![0.05, 0.1, 0.2]),
        prop::sample::select(vec![0.01, 0.05, 0.1]),
    )
        .prop_map(|(m, seed, beta, gamma, alpha)| {
            let lfdr = if beta {
                beta_mixture(m, seed)
            } else {
                simulated(m, seed)
            };
            (lfdr, FdxLevel::new(gamma, alpha).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn shortcuts_reach_the_full_scan((lfdr, level) in instance()) {
        let opts = ProcedureOptions::default();
        let full = procedure1(&lfdr, &level, &opts);
        let fast = procedure2(&lfdr, &level, &opts);
        prop_assert_eq!(&full.rejected, &fast.rejected);
        prop_assert_eq!(full.tail_at_k, fast.tail_at_k);
        prop_assert!(fast.k_final <= fast.k2 && fast.k2 <= fast.k1, "{} {} {}", fast.k_final, fast.k2, fast.k1);
    }

    #[test]
    fn prefilter_never_changes_k((lfdr, level) in instance()) {
        let plain = procedure2(&lfdr, &level, &ProcedureOptions::default());
        let filtered = procedure2(&lfdr, &level, &ProcedureOptions { prefilter: true, ..Default::default() });
        prop_assert_eq!(plain.rejected, filtered.rejected);
    }

    #[test]
    fn larger_alpha_never_rejects_less((lfdr, level) in instance(), bump in 0.0..0.2f64) {
        let wider = FdxLevel::new(level.gamma(), (level.alpha() + bump).min(0.99)).unwrap();
        let opts = ProcedureOptions::default();
        prop_assert!(procedure2(&lfdr, &wider, &opts).k_final >= procedure2(&lfdr, &level, &opts).k_final);
    }

    #[test]
    fn randomized_extra_is_well_formed((lfdr, level) in instance(), seed in any::<u64>()) {
        let opts = ProcedureOptions { randomize: true, seed, prefilter: false };
        let res = procedure2(&lfdr, &level, &opts);
        let plain = procedure2(&lfdr, &level, &ProcedureOptions::default());
        prop_assert_eq!(&res.rejected, &plain.rejected);
        prop_assert!(res.final_rejections() == res.k_final || res.final_rejections() == res.k_final + 1);
        if let Some(extra) = res.randomized_extra {
            prop_assert!((0.0..=1.0).contains(&extra.probability));
            prop_assert_eq!(extra.index, lfdr.rank()[res.k_final]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn no_prefix_beyond_k_passes(
        m in prop::sample::select(vec![100usize, 400, 1000]),
        seed in any::<u64>(),
        beta in any::<bool>(),
    ) {
        let lfdr = if beta { beta_mixture(m, seed) } else { simulated(m, seed) };
        let level = FdxLevel::new(0.1, 0.05).unwrap();
        let res = procedure2(&lfdr, &level, &ProcedureOptions::default());
        let tails = reference_tails(&lfdr.sorted_values(), &level);
        for (i, &t) in tails.iter().enumerate().skip(res.k_final) {
            prop_assert!(t > level.alpha() - 1e-12, "k={} passes with tail {t}", i + 1);
        }
        if res.k_final > 0 {
            prop_assert!((tails[res.k_final - 1] - res.tail_at_k).abs() < 1e-10);
            prop_assert!(res.tail_at_k <= level.alpha());
        }
    }
}

#[test]
fn tail_at_k_is_the_library_tail() {
    let lfdr = simulated(2000, 9);
    let level = FdxLevel::new(0.05, 0.05).unwrap();
    let res = procedure2(&lfdr, &level, &ProcedureOptions::default());
    let sorted = lfdr.sorted_values();
    let k = res.k_final;
    assert!(k > 0);
    let expected = pbd_tail_gt(&sorted[..k], level.tolerated_false(k) as f64).unwrap();
    assert_eq!(res.tail_at_k, expected);
}

/// Resampling `theta | z` from independent Bernoulli(lfdr) reproduces the tail.
#[test]
fn exceedance_given_data_matches_tail() {
    let level = FdxLevel::new(0.1, 0.05).unwrap();
    let draws = 10_000;
    for d in 0..5u64 {
        let lfdr = simulated(1000, 100 + d);
        let res = procedure2(&lfdr, &level, &ProcedureOptions::default());
        let k = res.k_final;
        if k == 0 {
            continue;
        }
        let probs: Vec<f64> = res.rejected.iter().map(|&i| lfdr.values()[i]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(7, d));
        let allowed = level.tolerated_false(k);
        let hits = (0..draws)
            .filter(|_| probs.iter().filter(|&&p| rng.random::<f64>() < p).count() > allowed)
            .count();
        let freq = hits as f64 / draws as f64;
        let se = (res.tail_at_k * (1.0 - res.tail_at_k) / draws as f64)
            .sqrt()
            .max(1e-4);
        assert!(
            (freq - res.tail_at_k).abs() <= 3.0 * se,
            "dataset {d}: frequency {freq} vs tail {}",
            res.tail_at_k
        );
    }
}

#[test]
fn oracle_procedure2_controls_fdx() {
    let level = FdxLevel::new(0.1, 0.05).unwrap();
    let (pi, mu, reps) = (0.2, -2.0, 1000);
    let model = TwoGroupModel::standard(pi, mu).unwrap();
    let mut exceed = 0;
    for r in 0..reps {
        let data = gen_iid(1000, pi, mu, derive_seed(31, r)).unwrap();
        let lfdr = lfdr_oracle(&data.z, &model).unwrap();
        let res = procedure2(&lfdr, &level, &ProcedureOptions::default());
        exceed += usize::from(
            compute_metrics(&res.rejected, &data.theta, level.gamma())
                .unwrap()
                .exceeded,
        );
    }
    let freq = exceed as f64 / reps as f64;
    let bound = level.alpha() + 3.0 * (level.alpha() * (1.0 - level.alpha()) / reps as f64).sqrt();
    assert!(freq <= bound, "FDX {freq} above {bound}");
}

#[test]
fn guo_romano_dominates_lehmann_romano() {
    for gamma in [0.05, 0.1, 0.3] {
        let level = FdxLevel::new(gamma, 0.05).unwrap();
        for m in 1..=100 {
            for i in 1..=m {
                let gr = guo_romano_critical_value(m, i, &level);
                let lr = lehmann_romano_critical_value(m, i, &level);
                assert!(gr >= lr - 1e-10, "m={m} i={i}: GR {gr} < LR {lr}");
            }
        }
    }
}

#[test]
fn guo_romano_controls_fdx_on_iid_data() {
    let level = FdxLevel::new(0.1, 0.05).unwrap();
    let (pi, mu, reps) = (0.2, -2.0, 1000);
    let null = Gaussian::standard();
    let mut exceed = 0;
    for r in 0..reps {
        let data = gen_iid(500, pi, mu, derive_seed(41, r)).unwrap();
        let p = pvalue_from_z_sided(&data.z, &null, PValueSide::Lower).unwrap();
        let rejected = guo_romano(&p, &level).unwrap();
        exceed += usize::from(
            compute_metrics(&rejected, &data.theta, level.gamma())
                .unwrap()
                .exceeded,
        );
    }
    let freq = exceed as f64 / reps as f64;
    assert!(freq <= level.alpha() + 0.01, "GR FDX {freq}");
}
