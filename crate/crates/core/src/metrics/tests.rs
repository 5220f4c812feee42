use super::*;
use crate::layers::gaussian_blur;
use proptest::prelude::*;
use rand::Rng;

fn map(h: usize, w: usize, values: &[f64]) -> Tensor {
    Tensor::new(&[h, w, 1], values.to_vec()).unwrap()
}

fn random_map(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(&[h, w, 1], |_| rng.gen::<f64>())
}

fn random_fixations(h: usize, w: usize, k: usize, rng: &mut ChaCha8Rng) -> FixationMap {
    let points = (0..k)
        .map(|_| (rng.gen_range(0..h), rng.gen_range(0..w)))
        .collect();
    FixationMap::new(h, w, points).unwrap()
}

#[test]
fn fixation_map_basics() {
    let f = FixationMap::new(3, 4, vec![(2, 1), (0, 3), (2, 1)]).unwrap();
    assert_eq!(f.points(), &[(0, 3), (2, 1)]);
    assert!(f.contains((2, 1)) && !f.contains((1, 1)));
    assert_eq!(FixationMap::from_grid(&f.to_grid()).unwrap(), f);
    assert_eq!(f.mirrored().points(), &[(0, 0), (2, 2)]);
    assert_eq!(f.rescaled(6, 8).unwrap().points(), &[(0, 6), (4, 2)]);
    assert!(FixationMap::new(3, 4, vec![(3, 0)]).is_err());
}

#[test]
fn csv_parsing() {
    let f = FixationMap::parse_csv("row,col\n1, 2\n\n# note\n0,0\n", 3, 3).unwrap();
    assert_eq!(f.points(), &[(0, 0), (1, 2)]);
    assert_eq!(FixationMap::parse_csv(&f.to_csv(), 3, 3).unwrap(), f);
    assert!(FixationMap::parse_csv("1,2\nx,y\n", 3, 3).is_err());
    assert!(FixationMap::parse_csv("5,0\n", 3, 3).is_err());
}

#[test]
fn nss_examples() {
    let s = map(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let f = FixationMap::new(2, 2, vec![(0, 0)]).unwrap();
    assert!((nss(&s, &f).unwrap() - 3f64.sqrt()).abs() < 1e-12);

    let all = FixationMap::new(2, 2, vec![(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
    assert!(nss(&map(2, 2, &[0.3, 0.9, -1.0, 2.0]), &all).unwrap().abs() < 1e-12);
}

#[test]
fn nss_of_blurred_fixation_is_standardized_peak() {
    let f = FixationMap::new(20, 20, vec![(9, 11)]).unwrap();
    let s = gaussian_blur(&f.to_grid(), 2.0).unwrap();
    let (mean, std) = moments(s.data());
    let want = (s.data()[9 * 20 + 11] - mean) / std;
    let got = nss(&s, &f).unwrap();
    assert!(got > 0.0);
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn degenerate_and_mismatched_inputs() {
    let f = FixationMap::new(2, 2, vec![(0, 0)]).unwrap();
    assert!(matches!(
        nss(&Tensor::filled(&[2, 2, 1], 0.5), &f),
        Err(Error::Degenerate(_))
    ));
    assert!(matches!(
        nss(&Tensor::zeros(&[2, 3, 1]), &f),
        Err(Error::Dimension(_))
    ));
    let empty = FixationMap::new(2, 2, vec![]).unwrap();
    assert!(matches!(
        nss(&map(2, 2, &[1.0, 0.0, 0.0, 0.0]), &empty),
        Err(Error::Data(_))
    ));
    assert!(cc(
        &Tensor::filled(&[2, 2, 1], 1.0),
        &map(2, 2, &[1.0, 0.0, 0.0, 0.0])
    )
    .is_err());
    assert!(fixation_density(&empty, None).is_err());
}

#[test]
fn cc_examples() {
    let d = map(2, 2, &[4.0, 3.0, 2.0, 1.0]);
    let s = map(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    assert!((cc(&s, &d).unwrap() + 1.0).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = random_map(5, 6, &mut rng);
    assert!((cc(&d.map(|v| 3.0 * v - 7.0), &d).unwrap() - 1.0).abs() < 1e-12);
    assert!((cc(&d.scale(-1.0), &d).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn density_single_fixation_is_gaussian_bump() {
    let f = FixationMap::new(41, 41, vec![(20, 20)]).unwrap();
    let sigma = 2.5;
    let d = fixation_density(&f, Some(sigma)).unwrap();
    assert_eq!(d.max(), 1.0);
    assert_eq!(d.data()[20 * 41 + 20], 1.0);
    let r = (crate::layers::gaussian_kernel_size(sigma) / 2) as isize;
    for dy in -r - 1..=r + 1 {
        for dx in -r - 1..=r + 1 {
            let want = if dy.abs() <= r && dx.abs() <= r {
                (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp()
            } else {
                0.0
            };
            let got = d.data()[((20 + dy) * 41 + 20 + dx) as usize];
            assert!((got - want).abs() < 1e-12, "offset ({dy},{dx})");
        }
    }
}

#[test]
fn density_two_far_fixations() {
    let f = FixationMap::new(30, 60, vec![(15, 10), (15, 50)]).unwrap();
    let d = fixation_density(&f, None).unwrap();
    assert!((d.data()[15 * 60 + 10] - 1.0).abs() < 1e-12);
    assert!((d.data()[15 * 60 + 50] - 1.0).abs() < 1e-12);
    assert_eq!(d.data()[15 * 60 + 30], 0.0);
}

#[test]
fn auc_examples() {
    let s = map(2, 3, &[0.9, 0.1, 0.8, 0.2, 0.3, 0.0]);
    let f = FixationMap::new(2, 3, vec![(0, 0), (0, 2)]).unwrap();
    assert_eq!(auc_judd(&s, &f).unwrap(), 1.0);
    assert_eq!(auc_judd(&Tensor::filled(&[2, 3, 1], 4.0), &f).unwrap(), 0.5);
    let all: Vec<_> = (0..2).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
    assert!(auc_judd(&s, &FixationMap::new(2, 3, all).unwrap()).is_err());
}

#[test]
fn roc_auc_hand_example() {
    // Thresholds 0.8 and 0.4: (FPR, TPR) = (1/3, 1/2), (2/3, 1).
    let auc = roc_auc(&[0.8, 0.4], &[0.9, 0.5, 0.1], Thresholds::Positives);
    let want = 0.5 * (1.0 / 3.0) * 0.5 + 0.5 * (1.0 / 3.0) * 1.5 + (1.0 / 3.0);
    assert!((auc - want).abs() < 1e-15);
    // Full sweep: pairs won 3 of 6, tie at 0.5 counts one half.
    let auc = roc_auc(&[0.8, 0.5], &[0.9, 0.5, 0.1], Thresholds::All);
    assert!((auc - 3.5 / 6.0).abs() < 1e-15);
}

#[test]
fn sauc_examples() {
    let s = map(2, 3, &[0.9, 0.1, 0.8, 0.2, 0.3, 0.0]);
    let f = FixationMap::new(2, 3, vec![(0, 0), (0, 2)]).unwrap();
    let others = vec![
        FixationMap::new(2, 3, vec![(1, 0), (0, 0)]).unwrap(),
        FixationMap::new(4, 6, vec![(3, 5), (2, 2)]).unwrap(),
    ];
    assert_eq!(sauc(&s, &f, &others, 10, 3).unwrap(), 1.0);
    let a = sauc(&s, &f, &others, 10, 7).unwrap();
    assert_eq!(a, sauc(&s, &f, &others, 10, 7).unwrap());
    let none = vec![FixationMap::new(2, 3, vec![(0, 0)]).unwrap()];
    assert!(matches!(sauc(&s, &f, &none, 10, 1), Err(Error::Data(_))));
}

#[test]
fn sauc_under_null_is_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut total = 0.0;
    for trial in 0..100 {
        let s = random_map(16, 16, &mut rng);
        let f = random_fixations(16, 16, 12, &mut rng);
        let others: Vec<_> = (0..5)
            .map(|_| random_fixations(16, 16, 12, &mut rng))
            .collect();
        total += sauc(&s, &f, &others, 10, trial).unwrap();
    }
    assert!((total / 100.0 - 0.5).abs() < 0.03);
}

#[test]
fn sauc_discounts_center_bias() {
    let (h, w) = (32, 32);
    let center = Tensor::from_fn(&[h, w, 1], |i| {
        let (r, c) = ((i / w) as f64 - 15.5, (i % w) as f64 - 15.5);
        (-(r * r + c * c) / (2.0 * 36.0)).exp()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let biased = |rng: &mut ChaCha8Rng| {
        let points = (0..20)
            .map(|_| {
                let r = (15.5 + 5.0 * (rng.gen::<f64>() - 0.5) * 2.0) as usize;
                let c = (15.5 + 5.0 * (rng.gen::<f64>() - 0.5) * 2.0) as usize;
                (r, c)
            })
            .collect();
        FixationMap::new(h, w, points).unwrap()
    };
    let f = biased(&mut rng);
    let others: Vec<_> = (0..10).map(|_| biased(&mut rng)).collect();
    let judd = auc_judd(&center, &f).unwrap();
    let shuffled = sauc(&center, &f, &others, 20, 1).unwrap();
    assert!(shuffled < judd, "sauc {shuffled} vs auc {judd}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn affine_and_monotone_invariance(seed in any::<u64>(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_map(8, 8, &mut rng);
        let d = random_map(8, 8, &mut rng);
        let f = random_fixations(8, 8, 6, &mut rng);
        let t = s.map(|v| a * v + b);
        prop_assert!((nss(&t, &f).unwrap() - nss(&s, &f).unwrap()).abs() < 1e-10);
        prop_assert!((cc(&t, &d).unwrap() - cc(&s, &d).unwrap()).abs() < 1e-10);
        let base = auc_judd(&s, &f).unwrap();
        prop_assert!((auc_judd(&s.map(f64::exp), &f).unwrap() - base).abs() < 1e-12);
        prop_assert!((auc_judd(&s.map(|v| (v - 0.5).powi(3)), &f).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn cc_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_map(6, 7, &mut rng);
        let d = random_map(6, 7, &mut rng);
        let r = cc(&s, &d).unwrap();
        prop_assert!((r - cc(&d, &s).unwrap()).abs() < 1e-15);
        prop_assert!(r.abs() <= 1.0);
    }

    #[test]
    fn auc_in_unit_interval(seed in any::<u64>(), k in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Tensor::from_fn(&[6, 6, 1], |_| rng.gen_range(0..4) as f64);
        let f = random_fixations(6, 6, k, &mut rng);
        let a = auc_judd(&s, &f).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
