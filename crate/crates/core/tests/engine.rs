use bitjoin::constraints::{compatible_order, ConstraintSet, DegreeConstraint};
use bitjoin::enumerate::{resolve_order, wcj, wcj_binarised};
use bitjoin::index::IndexedQuery;
use bitjoin::oracle::{
    answers_over, call_bound, nested_loop_join, prefix_counts, random_instance, InstanceShape,
};
use bitjoin::relation::{encode_instance, RawTable};
use bitjoin::{Code, JoinQuery, VarId};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn plain(q: &JoinQuery, order: &[VarId]) -> (Vec<Vec<Code>>, u64) {
    let mut out = Vec::new();
    let stats = wcj(&IndexedQuery::new(q, order).unwrap(), |a| {
        out.push(a.to_vec())
    });
    out.sort();
    (out, stats.recursive_calls)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn engines_agree_with_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_instance(&mut rng, &InstanceShape::default());
        let mut order = q.order();
        order.shuffle(&mut rng);
        let expected = nested_loop_join(&q).unwrap();

        let (got, calls) = plain(&q, &order);
        prop_assert_eq!(&got, &expected);
        let bound = call_bound(&q, &order).unwrap();
        prop_assert!(calls <= bound, "{} > {}", calls, bound);

        let mut bin = Vec::new();
        wcj_binarised(&q, None, Some(&order), |a| bin.push(a.to_vec())).unwrap();
        bin.sort();
        prop_assert_eq!(&bin, &expected);
    }

    #[test]
    fn last_prefix_is_the_join(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_instance(&mut rng, &InstanceShape::default());
        let mut order = q.order();
        order.shuffle(&mut rng);
        let counts = prefix_counts(&q, &order).unwrap();
        prop_assert_eq!(*counts.last().unwrap() as usize, nested_loop_join(&q).unwrap().len());
        let mut reordered: Vec<Vec<Code>> = answers_over(&q, &order)
            .unwrap()
            .into_iter()
            .map(|a| {
                let mut codes = vec![0; q.num_vars()];
                for (v, c) in order.iter().zip(a) {
                    codes[v.index()] = c;
                }
                codes
            })
            .collect();
        reordered.sort();
        prop_assert_eq!(reordered, nested_loop_join(&q).unwrap());
    }
}

/// Answers arrive in lexicographic order of the chosen variable order.
#[test]
fn answers_are_emitted_in_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let q = random_instance(&mut rng, &InstanceShape::default());
        let mut order = q.order();
        order.shuffle(&mut rng);
        let mut keys = Vec::new();
        wcj_binarised(&q, None, Some(&order), |a| {
            keys.push(order.iter().map(|v| a[v.index()]).collect::<Vec<_>>())
        })
        .unwrap();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }
}

/// `R(x3, x1) = S(x3, x2) = {(i, i)}`: with `x1, x2` first the projected
/// prefix has `N²` answers, with the compatible order it stays at `N`.
#[test]
fn incompatible_order_inflates_prefixes() {
    let n = 12;
    let vals: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let rows: Vec<[&str; 2]> = vals.iter().map(|v| [v.as_str(), v.as_str()]).collect();
    let rows: Vec<&[&str]> = rows.iter().map(|r| r.as_slice()).collect();
    let r = RawTable::new("R", &["x3", "x1"], &rows);
    let s = RawTable::new("S", &["x3", "x2"], &rows);
    let names: Vec<String> = ["x1", "x2", "x3"].iter().map(|s| s.to_string()).collect();
    let q = encode_instance(&[r, s], &names).unwrap();
    let n = n as u64;
    assert_eq!(prefix_counts(&q, &q.order()).unwrap(), vec![n, n * n, n]);

    let x = |i| [VarId(i)].into_iter().collect();
    let both = |a, b| [VarId(a), VarId(b)].into_iter().collect();
    let cs = ConstraintSet::for_query(
        &q,
        vec![
            DegreeConstraint::cardinality(both(0, 2), n).unwrap(),
            DegreeConstraint::cardinality(both(1, 2), n).unwrap(),
            DegreeConstraint::functional_dependency(x(2), VarId(0), both(0, 2)).unwrap(),
            DegreeConstraint::functional_dependency(x(2), VarId(1), both(1, 2)).unwrap(),
        ],
    )
    .unwrap();
    let order = compatible_order(&cs).unwrap();
    assert_eq!(order, vec![VarId(2), VarId(0), VarId(1)]);
    assert_eq!(prefix_counts(&q, &order).unwrap(), vec![n, n, n]);
    assert_eq!(resolve_order(&q, Some(&cs), None).unwrap(), order);

    let (_, slow) = plain(&q, &q.order());
    let (_, fast) = plain(&q, &order);
    assert!(slow > n * n, "{slow}");
    assert!(fast <= (1 + n) * 3 * n + 1, "{fast}");
}
