mod common;

use common::*;
use proptest::prelude::*;
use saliency_core::metrics::{auc_judd, cc, fixation_density, nss, sauc};

fn check_instance(seed: u64) -> Result<(), TestCaseError> {
    let inst = random_instance(seed, 16, 16);
    let data = inst.map.data();
    let f = &inst.fixations;

    let got = nss(&inst.map, f).unwrap();
    prop_assert!((got - nss_oracle(data, 16, f)).abs() < 1e-10, "nss {got}");

    let density = fixation_density(f, None).unwrap();
    let got = cc(&inst.map, &density).unwrap();
    prop_assert!((got - cc_oracle(data, density.data())).abs() < 1e-10, "cc {got}");

    let got = auc_judd(&inst.map, f).unwrap();
    prop_assert!((got - auc_judd_oracle(data, 16, f)).abs() < 1e-12, "auc {got}");

    let neg = shuffled_negatives(&inst);
    prop_assume!(!neg.is_empty() && neg.len() <= f.len());
    let pos: Vec<f64> = f.points().iter().map(|&(r, c)| data[r * 16 + c]).collect();
    let got = sauc(&inst.map, f, &inst.others, 3, seed).unwrap();
    prop_assert!((got - mann_whitney(&pos, &neg)).abs() < 1e-12, "sauc {got}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_brute_force(seed in any::<u64>()) {
        check_instance(seed)?;
    }
}
