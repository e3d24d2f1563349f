//! Property tests for the spec invariants that hold on arbitrary inputs.

use proptest::prelude::*;
use tailfuse::*;

fn collection(bounds: Vec<f64>) -> BoundCollection {
    let meta = CollectionMeta {
        config: FusionConfig {
            n_fusions: bounds.len(),
            n1: 1,
            support: (0.0, 1.0),
            ci_level: 0.95,
            seed: 0,
            tilt: TiltSpec::Gamma,
        },
        reference_fingerprint: String::new(),
        threshold: 0.5,
        attempted: bounds.len(),
        succeeded: bounds.len(),
        failed_indices: vec![],
    };
    BoundCollection::new(bounds, meta).unwrap()
}

proptest! {
    // empirical F_B is a right-continuous ECDF: 0 below the minimum, 1 at and
    // above the maximum, nondecreasing, with jump k/N at the k-th order stat
    #[test]
    fn empirical_fb_is_an_ecdf(
        mut bounds in prop::collection::vec(0.0f64..1.0, 1..60),
        p in 0.0f64..1.0,
        q in 0.0f64..1.0,
    ) {
        bounds.iter_mut().for_each(|b| *b = (*b * 1e6).round() / 1e6);
        let coll = collection(bounds);
        prop_assert_eq!(empirical_fb(&coll, coll.min() - 1e-9), 0.0);
        prop_assert_eq!(empirical_fb(&coll, coll.max()), 1.0);
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(empirical_fb(&coll, lo) <= empirical_fb(&coll, hi));
        // exchangeability: the sorted view ignores generation order
        let mut rev = coll.bounds.clone();
        rev.reverse();
        let coll_rev = collection(rev);
        prop_assert_eq!(coll.sorted(), coll_rev.sorted());
    }

    // complement identity against the binomial CDF, full parameter range
    #[test]
    fn orderstat_complement_identity(n in 1usize..400, jfrac in 0.0f64..1.0, f in 0.0f64..=1.0) {
        let j = 1 + ((n - 1) as f64 * jfrac).floor() as usize;
        let a = orderstat_exceed_prob(n, j, f).unwrap();
        let b = stats::binomial_cdf(j - 1, n, f);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }

    // the estimated CDF is a nondecreasing step function hitting 1 at max
    #[test]
    fn estimated_cdf_nondecreasing(
        x0 in prop::collection::vec(0.05f64..30.0, 12..40),
        x1 in prop::collection::vec(0.05f64..40.0, 12..40),
        t1 in 0.0f64..45.0,
        t2 in 0.0f64..45.0,
    ) {
        let sample = FusedSample::two_sample(x0, x1).unwrap();
        if let Ok(fit) = fit_drm(&sample, &TiltSpec::Gamma, &SolverOptions::default()) {
            if fit.converged {
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let a = estimate_cdf(&fit, &sample, lo);
                let b = estimate_cdf(&fit, &sample, hi);
                prop_assert!(a <= b + 1e-12);
                let tmax = sample.augmented().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((estimate_cdf(&fit, &sample, tmax) - 1.0).abs() < 1e-8);
            }
        }
    }

    // trimming drops exactly the k largest values and preserves order
    #[test]
    fn trim_reference_drops_largest(
        v in prop::collection::vec(0.0f64..100.0, 1..50),
        kfrac in 0.0f64..1.0,
    ) {
        let k = ((v.len() - 1) as f64 * kfrac).floor() as usize;
        let trimmed = trim_reference(&v, k);
        prop_assert_eq!(trimmed.len(), v.len() - k);
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let cutoff = sorted[v.len() - 1 - k];
        prop_assert!(trimmed.iter().all(|&x| x <= cutoff));
        // order preserved: trimmed is a subsequence of v
        let mut it = v.iter();
        for t in &trimmed {
            prop_assert!(it.any(|x| x == t));
        }
    }
}
