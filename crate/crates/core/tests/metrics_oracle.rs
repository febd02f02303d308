//! Overlap, surface distance and the signed-rank test against brute force.

mod support;

use dilseg_core::metrics::{
    assd, dsc, evaluate, surface, wilcoxon_normal_approx, wilcoxon_one_tailed, Class, LabelMap, Spacing,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::metric_oracles::*;

#[test]
fn hundred_random_pairs_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let (ma, mb) = (random_mask(&mut rng), random_mask(&mut rng));
        let (a, b) = (to_map(&ma, Class::Wall), to_map(&mb, Class::Wall));
        assert_eq!(dsc(&a, &b, Class::Wall).unwrap(), brute_dsc(&ma, &mb), "case {}", case);

        let (sa, sb) = (brute_surface(&ma, SIDE, SIDE), brute_surface(&mb, SIDE, SIDE));
        let mut fast = surface(&a, Class::Wall);
        fast.sort_unstable();
        assert_eq!(fast, sa, "surface case {}", case);
        let expect = brute_assd(&sa, &sb, Spacing::default());
        let got = assd(&a, &b, Class::Wall).unwrap();
        match (got, expect) {
            (Some(g), Some(e)) => assert!((g - e).abs() <= 1e-9, "case {}: {} vs {}", case, g, e),
            (g, e) => assert_eq!(g, e, "case {}", case),
        }
    }
}

#[test]
fn anisotropic_spacing_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spacing = Spacing { row_mm: 0.7, col_mm: 0.3 };
    for _ in 0..20 {
        let (ma, mb) = (random_mask(&mut rng), random_mask(&mut rng));
        let mut a = to_map(&ma, Class::Tumor);
        let mut b = to_map(&mb, Class::Tumor);
        a.set_spacing(spacing).unwrap();
        b.set_spacing(spacing).unwrap();
        let expect = brute_assd(&brute_surface(&ma, SIDE, SIDE), &brute_surface(&mb, SIDE, SIDE), spacing);
        let got = assd(&a, &b, Class::Tumor).unwrap();
        if let (Some(g), Some(e)) = (got, expect) {
            assert!((g - e).abs() <= 1e-9);
        } else {
            assert_eq!(got, expect);
        }
    }
}

#[test]
fn hand_computed_examples() {
    let square = |c0: usize| {
        let mut m = LabelMap::filled(8, 8, Class::Background).unwrap();
        for r in 2..5 {
            for c in c0..c0 + 3 {
                m.set(r, c, Class::Lumen);
            }
        }
        m
    };
    let d = dsc(&square(2), &square(3), Class::Lumen).unwrap().unwrap();
    assert_eq!(d, 12.0 / 18.0);
    assert_eq!(format!("{:.4}", d), "0.6667");
    assert_eq!(surface(&square(2), Class::Lumen).len(), 8);

    let mut a = LabelMap::filled(8, 8, Class::Background).unwrap();
    let mut b = a.clone();
    a.set(4, 1, Class::Tumor);
    b.set(4, 4, Class::Tumor);
    assert_eq!(surface(&a, Class::Tumor), vec![(4, 1)]);
    assert_eq!(assd(&a, &b, Class::Tumor).unwrap(), Some(1.5));

    let empty = LabelMap::filled(8, 8, Class::Background).unwrap();
    assert!(surface(&empty, Class::Tumor).is_empty());
    assert_eq!(dsc(&empty, &empty, Class::Tumor).unwrap(), None);
    assert_eq!(assd(&a, &empty, Class::Tumor).unwrap(), None);
}

#[test]
fn identical_maps_score_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let codes: Vec<u8> = (0..SIDE * SIDE).map(|_| rng.gen_range(0..4)).collect();
    let m = LabelMap::new(SIDE, SIDE, codes).unwrap();
    let r = evaluate(&m, &m).unwrap();
    for class in Class::ALL {
        assert_eq!(r.dsc(class), Some(1.0));
        assert_eq!(r.assd(class), Some(0.0));
    }
}

#[test]
fn five_positive_differences() {
    let x = [0.9, 0.8, 0.85, 0.7, 0.95];
    let y = [0.5, 0.6, 0.4, 0.65, 0.3];
    let r = wilcoxon_one_tailed(&x, &y).unwrap().unwrap();
    assert!(r.exact);
    assert_eq!(r.p_value, 0.03125);
    assert_eq!(enumerate_p(&x, &y), Some(0.03125));
}

#[test]
fn zero_differences_are_undefined() {
    let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    assert_eq!(wilcoxon_one_tailed(&x, &x).unwrap(), None);
}

#[test]
fn exact_mode_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for n in 5..=12 {
        for trial in 0..20 {
            // coarse grid so ties and zero differences occur
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 * 0.125).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 * 0.125).collect();
            let got = wilcoxon_one_tailed(&x, &y).unwrap().map(|r| r.p_value);
            let want = enumerate_p(&x, &y);
            match (got, want) {
                (Some(g), Some(w)) => assert!((g - w).abs() < 1e-12, "n={} trial={}: {} vs {}", n, trial, g, w),
                (g, w) => assert_eq!(g, w),
            }
        }
    }
}

#[test]
fn normal_approximation_is_close_at_twelve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let exact = wilcoxon_one_tailed(&x, &y).unwrap().unwrap();
        let approx = wilcoxon_normal_approx(&x, &y).unwrap().unwrap();
        assert!(exact.exact && !approx.exact);
        assert!((exact.p_value - approx.p_value).abs() <= 0.01, "{} vs {}", exact.p_value, approx.p_value);
    }
}

fn mask_strategy() -> impl Strategy<Value = (usize, usize, Vec<u8>, Vec<u8>)> {
    (1usize..=12, 1usize..=12).prop_flat_map(|(h, w)| {
        (Just(h), Just(w), prop::collection::vec(0u8..4, h * w), prop::collection::vec(0u8..4, h * w))
    })
}

proptest! {
    #[test]
    fn symmetry_range_and_scaling((h, w, a, b) in mask_strategy(), class in 0u8..4) {
        let class = Class::from_code(class).unwrap();
        let ma = LabelMap::new(h, w, a).unwrap();
        let mb = LabelMap::new(h, w, b).unwrap();
        let d_ab = dsc(&ma, &mb, class).unwrap();
        prop_assert_eq!(d_ab, dsc(&mb, &ma, class).unwrap());
        if let Some(d) = d_ab {
            prop_assert!((0.0..=1.0).contains(&d));
        }
        let s_ab = assd(&ma, &mb, class).unwrap();
        let s_ba = assd(&mb, &ma, class).unwrap();
        match (s_ab, s_ba) {
            (Some(x), Some(y)) => {
                prop_assert!(x >= 0.0);
                prop_assert!((x - y).abs() <= 1e-12);
            }
            (x, y) => prop_assert_eq!(x, y),
        }
        let double = Spacing { row_mm: 1.0, col_mm: 1.0 };
        let (mut a2, mut b2) = (ma.clone(), mb.clone());
        a2.set_spacing(double).unwrap();
        b2.set_spacing(double).unwrap();
        prop_assert_eq!(dsc(&a2, &b2, class).unwrap(), d_ab);
        if let (Some(x), Some(y)) = (s_ab, assd(&a2, &b2, class).unwrap()) {
            prop_assert!((2.0 * x - y).abs() <= 1e-12);
        }
    }
}
