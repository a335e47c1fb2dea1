use imax::data::{
    class_centroids, generate_domain, long_tail_counts, long_tail_rank_counts, split_labeled_unlabeled, DomainSpec,
    LongTailSpec, SplitOptions,
};
use proptest::prelude::*;

#[test]
fn frozen_rank_counts() {
    let cases: [((usize, usize, f64), &[usize]); 6] = [
        ((2, 5, 10.0), &[9, 1]),
        ((5, 5, 10.0), &[11, 7, 4, 2, 1]),
        ((11, 5, 10.0), &[12, 10, 8, 6, 5, 4, 3, 2, 2, 2, 1]),
        ((5, 5, 50.0), &[15, 6, 2, 1, 1]),
        ((5, 10, 50.0), &[31, 12, 4, 2, 1]),
        ((2, 10, 50.0), &[19, 1]),
    ];
    for ((k, m, g), expect) in cases {
        let got = long_tail_rank_counts(&LongTailSpec::ordered(k, m, g).unwrap()).unwrap();
        assert_eq!(got, expect, "K={k} m_L={m} γ={g}");
    }
}

fn exact_tail(spec: &LongTailSpec) -> f64 {
    let k = spec.num_classes;
    let total: f64 = (0..k).map(|j| spec.rank_weight(j)).sum();
    spec.budget() as f64 * spec.rank_weight(k - 1) / total
}

proptest! {
    #[test]
    fn counts_meet_budget_and_decay(k in 2usize..24, m in 1usize..60, g in 1.0f64..100.0, seed in any::<u64>()) {
        let spec = LongTailSpec::shuffled(k, m, g, seed).unwrap();
        let ranks = long_tail_rank_counts(&spec).unwrap();
        prop_assert_eq!(ranks.iter().sum::<usize>(), m * k);
        prop_assert!(ranks.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(*ranks.last().unwrap() >= 1);
        let by_class = long_tail_counts(&spec).unwrap();
        for c in 0..k {
            prop_assert_eq!(by_class[c], ranks[spec.rank_of(c)]);
        }
    }

    /// The ratio bound holds wherever the exact tail share is at least one
    /// sample; below that the floor of 1 caps the achievable ratio.
    #[test]
    fn head_tail_ratio_tracks_gamma(k in 2usize..24, m in 10usize..60, g in 1.0f64..100.0) {
        let spec = LongTailSpec::ordered(k, m, g).unwrap();
        let c = long_tail_rank_counts(&spec).unwrap();
        let r = c[0] as f64 / c[k - 1] as f64;
        prop_assert!(r <= 2.0 * g);
        if exact_tail(&spec) >= 1.0 {
            prop_assert!(r >= g / 2.0, "{:?} ratio {} γ {}", c, r, g);
        }
    }

    #[test]
    fn split_partitions_and_is_seeded(k in 2usize..5, d in 1usize..4, gen_seed in any::<u64>(), split_seed in any::<u64>(), longtail in any::<bool>()) {
        let centroids = class_centroids::<f64>(k, d, 3.0, gen_seed);
        let spec = DomainSpec {
            domain_id: 0,
            mean_shift: vec![0.5; d],
            rotation_seed: gen_seed ^ 1,
            rotation_strength: 0.2,
            noise_scale: 1.0,
        };
        let raw = generate_domain(&spec, &centroids, &vec![60; k], gen_seed).unwrap();
        prop_assert_eq!(&raw, &generate_domain(&spec, &centroids, &vec![60; k], gen_seed).unwrap());
        let lt = LongTailSpec::shuffled(k, 3, 5.0, split_seed).unwrap();
        let opts = SplitOptions { longtail_unlabeled: longtail, ..SplitOptions::default() };
        let a = split_labeled_unlabeled(raw.clone(), &lt, split_seed, &opts).unwrap();
        let b = split_labeled_unlabeled(raw, &lt, split_seed, &opts).unwrap();
        prop_assert_eq!(a.content_hash(), b.content_hash());
        let mut seen = vec![0u8; a.len()];
        for &i in a.labeled_indices().iter().chain(a.unlabeled_indices()) {
            seen[i] += 1;
        }
        if !longtail {
            prop_assert!(seen.iter().all(|&s| s == 1));
        } else {
            prop_assert!(seen.iter().all(|&s| s <= 1));
        }
        prop_assert_eq!(a.labeled_counts(), long_tail_counts(&lt).unwrap());
        prop_assert!(a.unlabeled_indices().len() >= 5 * a.labeled_indices().len());
    }
}
