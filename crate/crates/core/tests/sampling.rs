use bitjoin::estimate::EstimatorContext;
use bitjoin::lp::{solve_cover_card, FractionalCover};
use bitjoin::oracle::{chi_square_uniformity, nested_loop_join, random_instance, InstanceShape};
use bitjoin::sampler::{BinarySampler, SampleError, Sampler};
use bitjoin::{JoinQuery, Rational};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn agm_weights(q: &JoinQuery) -> Vec<Rational> {
    let edges: Vec<_> = q.relations().iter().map(|r| r.var_set()).collect();
    let sizes: Vec<u64> = q.relations().iter().map(|r| r.len() as u64).collect();
    let cover: FractionalCover<Rational> = solve_cover_card(q.num_vars(), &edges, &sizes).unwrap();
    cover.weights
}

/// Every learned value bounds the answers below its node from above.
#[test]
fn memo_overrides_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut entries = 0;
    for _ in 0..100 {
        let q = random_instance(&mut rng, &InstanceShape::default());
        let order = q.order();
        let ctx = EstimatorContext::<f64>::agm(&q, &order, &agm_weights(&q)).unwrap();
        let answers = nested_loop_join(&q).unwrap();
        let mut sampler = Sampler::new(&ctx);
        let _ = sampler.sample(20, &mut rng, Some(2_000));
        for (prefix, value) in sampler.memo().iter() {
            entries += 1;
            let below = answers
                .iter()
                .filter(|a| {
                    prefix
                        .iter()
                        .enumerate()
                        .all(|(i, &c)| a[order[i].index()] == c)
                })
                .count();
            assert!(value >= below as f64, "{prefix:?}: {value} < {below}");
            let mut w = ctx.walker();
            for &c in prefix {
                w.bind(c);
            }
            assert!(value <= w.estimate());
        }
    }
    assert!(entries > 0);
}

#[test]
fn random_instances_sample_uniformly_or_report_empty() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut checked = 0;
    for _ in 0..40 {
        let q = random_instance(&mut rng, &InstanceShape::default());
        let answers = nested_loop_join(&q).unwrap();
        let sampler = BinarySampler::agm(&q, &q.order(), &agm_weights(&q)).unwrap();
        let (result, stats) = sampler.sample(2_000, &mut rng, Some(2_000_000));
        if answers.is_empty() {
            assert!(matches!(result, Err(SampleError::Empty(_))));
            assert_eq!(stats.final_up_root, 0.0);
            continue;
        }
        let drawn = result.unwrap();
        assert!(
            stats.mean_trials_per_success()
                <= 1.25 * stats.initial_up_root / answers.len() as f64 + 0.1
        );
        if answers.len() >= 2 && answers.len() <= 50 {
            let report = chi_square_uniformity(&drawn, &answers).unwrap();
            assert!(report.chi_square.is_finite());
            checked += 1;
        } else {
            assert!(drawn.iter().all(|a| answers.binary_search(a).is_ok()));
        }
    }
    assert!(checked > 0);
}
