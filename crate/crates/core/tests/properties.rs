//! Property tests across modules.

use std::sync::Arc;

use msearch::enumeration::{insert_sequence, load_or_build};
use msearch::par::with_threads;
use msearch::toll::{parse_rational, TailRule};
use msearch::tree::enumerate_trees;
use msearch::{convolve, exact_moments, tree_counts, MomentMode, Model, Real, Series, SplitSampler, TollSpec};
use proptest::prelude::*;
use rug::{Integer, Rational};

fn ints(v: &[i64]) -> Series<Integer> {
    Series::from_integers((), &v.iter().map(|&x| Integer::from(x)).collect::<Vec<_>>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convolution_matches_schoolbook(a in prop::collection::vec(-50i64..50, 1..40), b in prop::collection::vec(-50i64..50, 1..40)) {
        let deg = a.len() + b.len() - 2;
        let got = convolve(&ints(&a), &ints(&b), deg).unwrap();
        let mut want = vec![0i64; deg + 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                want[i + j] += x * y;
            }
        }
        for (k, w) in want.iter().enumerate() {
            prop_assert_eq!(&got.coeffs()[k], &Integer::from(*w));
        }
    }

    #[test]
    fn convolution_is_thread_count_invariant(a in prop::collection::vec(-1000i64..1000, 1..200)) {
        let s = ints(&a);
        let one = with_threads(1, || convolve(&s, &s, a.len()).unwrap());
        let many = with_threads(4, || convolve(&s, &s, a.len()).unwrap());
        prop_assert_eq!(one.coeffs(), many.coeffs());
    }

    #[test]
    fn split_probabilities_sum_to_one(m in 2usize..5, n in 0usize..30) {
        let t = tree_counts(m, n).unwrap();
        if n + 1 >= m {
            let r = n - (m - 1);
            let mut total = Rational::new();
            msearch::tree::compositions(r, m, 0, &mut vec![0; m], &mut |parts| {
                total += t.split_probability(parts).unwrap();
            });
            prop_assert_eq!(total, Rational::from(1));
        }
    }

    #[test]
    fn insertion_builds_consistent_trees(m in 2usize..5, keys in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle()) {
        let t = insert_sequence(m, &keys);
        prop_assert_eq!(t.size, keys.len());
        prop_assert!(t.is_consistent(m));
    }

    #[test]
    fn sampled_trees_are_consistent(m in 2usize..5, n in 0usize..200, seed in any::<u64>(), rp in any::<bool>()) {
        let table = Arc::new(tree_counts(m, n).unwrap());
        let model = if rp { Model::RandomPermutation } else { Model::Uniform };
        let s = SplitSampler::new(table, seed, model);
        let tree = s.sample_tree(n, &mut s.rng(0)).unwrap();
        prop_assert_eq!(tree.size, n);
        prop_assert!(tree.is_consistent(m));
    }

    #[test]
    fn integer_tolls_give_exact_means(m in 2usize..4, vals in prop::collection::vec(-3i64..4, 8), x in prop::collection::vec(-2i64..3, 2)) {
        // engine mean against a direct average over every shape
        let n_max = 7;
        let values: Vec<Real> = vals.iter().map(|&v| Real::from_int(v)).collect();
        let initial: Vec<Real> = x[..m - 1].iter().map(|&v| Real::from_int(v)).collect();
        let spec = TollSpec::custom(m, values, TailRule::Zero, initial).unwrap();
        let table = tree_counts(m, n_max).unwrap();
        let mt = exact_moments(&spec, &table, 2, n_max, MomentMode::Exact).unwrap();
        for n in 0..=n_max {
            let shapes = enumerate_trees(m, n);
            let toll = |k: usize| Rational::from(vals[k]);
            let init = |k: usize| Rational::from(x[k]);
            let mut s1 = Rational::new();
            let mut s2 = Rational::new();
            for t in &shapes {
                let v: Rational = t.functional(m, &toll, &init);
                s2 += Rational::from(&v * &v);
                s1 += v;
            }
            let k = shapes.len() as u32;
            prop_assert_eq!(mt.moment(1, n), Real::Exact(s1 / k));
            prop_assert_eq!(mt.moment(2, n), Real::Exact(s2 / k));
        }
    }

    #[test]
    fn rationals_parse_exactly(p in -10_000i64..10_000, q in 1i64..10_000) {
        let r = parse_rational(&format!("{p}/{q}")).unwrap();
        prop_assert_eq!(r, Rational::from((p, q)));
    }
}

#[test]
fn count_cache_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let built = load_or_build(dir.path(), 3, 60).unwrap();
    let loaded = load_or_build(dir.path(), 3, 60).unwrap();
    assert_eq!(built.counts(), loaded.counts());
    assert!(msearch::enumeration::cache_path(dir.path(), 3, 60).exists());
}

#[test]
fn enumerated_shapes_match_counts() {
    for m in 2..=4 {
        let t = tree_counts(m, 9).unwrap();
        for n in 0..=9 {
            assert_eq!(Integer::from(enumerate_trees(m, n).len()), t.counts()[n], "m = {m}, n = {n}");
        }
    }
}
