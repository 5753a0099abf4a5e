//! Brute-force reference machinery.
//!
//! The join oracle enumerates `D^X` literally and probes hash sets of
//! relation projections; it shares no code with the sorted index.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::constraints::{
    compatible_order, guard_relation, max_degree, ConstraintSet, DegreeConstraint,
};
use crate::relation::{Code, Dictionary, JoinQuery, Relation, VarId, VarSet};

/// Largest grid the oracle agrees to enumerate.
pub const MAX_GRID: f64 = 1e7;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("oracle grid |D|^n = {0} exceeds 1e7")]
    TooLarge(f64),
    #[error("sample {0} is not one of the expected categories")]
    UnknownCategory(String),
    #[error("{samples} samples are too few for {categories} categories")]
    TooFewSamples { samples: usize, categories: usize },
}

struct Probe {
    /// Positions (in the enumerated variable list) of the relation's
    /// surviving columns.
    positions: Vec<usize>,
    rows: HashSet<Vec<Code>>,
}

/// `ans(Q|vars)`: assignments to `vars` (in the given order) that agree
/// with every relation projected onto `vars`.
pub fn answers_over(q: &JoinQuery, vars: &[VarId]) -> Result<Vec<Vec<Code>>, OracleError> {
    let d = q.domain_size();
    let grid = (d as f64).powi(vars.len() as i32);
    if grid > MAX_GRID {
        return Err(OracleError::TooLarge(grid));
    }
    let probes: Vec<Probe> = q
        .relations()
        .iter()
        .map(|r| {
            let cols: Vec<usize> = (0..r.vars().len())
                .filter(|&c| vars.contains(&r.vars()[c]))
                .collect();
            let positions = cols
                .iter()
                .map(|&c| vars.iter().position(|&v| v == r.vars()[c]).unwrap())
                .collect();
            let rows = r
                .rows()
                .iter()
                .map(|row| cols.iter().map(|&c| row[c]).collect())
                .collect();
            Probe { positions, rows }
        })
        .collect();
    let mut out = Vec::new();
    if d == 0 && !vars.is_empty() {
        return Ok(out);
    }
    let mut cand = vec![0 as Code; vars.len()];
    let mut key = Vec::new();
    loop {
        let ok = probes.iter().all(|p| {
            key.clear();
            key.extend(p.positions.iter().map(|&i| cand[i]));
            p.rows.contains(&key)
        });
        if ok {
            out.push(cand.clone());
        }
        // odometer, last position fastest
        let mut i = vars.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            cand[i] += 1;
            if (cand[i] as usize) < d {
                break;
            }
            cand[i] = 0;
        }
    }
}

/// `ans(Q)` as codes indexed by `VarId`, sorted.
pub fn nested_loop_join(q: &JoinQuery) -> Result<Vec<Vec<Code>>, OracleError> {
    answers_over(q, &q.order())
}

/// `|ans(Q|X_i)|` for the prefixes `X_1..X_n` of `order`.
pub fn prefix_counts(q: &JoinQuery, order: &[VarId]) -> Result<Vec<u64>, OracleError> {
    (1..=order.len())
        .map(|i| answers_over(q, &order[..i]).map(|a| a.len() as u64))
        .collect()
}

/// `(1 + |D|) · Σ_{0 ≤ i ≤ n} |ans(Q|X_i)|`, where `X_0 = ∅` contributes 1
/// unless some relation is empty; never below the one root call.
pub fn call_bound(q: &JoinQuery, order: &[VarId]) -> Result<u64, OracleError> {
    let root = answers_over(q, &[])?.len() as u64;
    let total: u64 = root + prefix_counts(q, order)?.iter().sum::<u64>();
    Ok(((1 + q.domain_size() as u64) * total).max(1))
}

/// Shape limits for [`random_instance`].
#[derive(Clone, Copy, Debug)]
pub struct InstanceShape {
    pub max_vars: usize,
    pub max_relations: usize,
    pub max_domain: usize,
    pub max_tuples: usize,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            max_vars: 4,
            max_relations: 4,
            max_domain: 6,
            max_tuples: 40,
        }
    }
}

/// A random query within `shape` whose relations cover every variable.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, shape: &InstanceShape) -> JoinQuery {
    let n = rng.random_range(1..=shape.max_vars);
    let m = rng.random_range(1..=shape.max_relations);
    let d = rng.random_range(1..=shape.max_domain);
    let mut edges: Vec<Vec<VarId>> = (0..m)
        .map(|_| {
            let k = rng.random_range(1..=n.min(3));
            let mut vars: Vec<VarId> = (0..n as u32).map(VarId).collect();
            vars.shuffle(rng);
            vars.truncate(k);
            vars
        })
        .collect();
    for x in (0..n as u32).map(VarId) {
        if !edges.iter().any(|e| e.contains(&x)) {
            let i = rng.random_range(0..m);
            edges[i].push(x);
        }
    }
    let relations = edges
        .into_iter()
        .enumerate()
        .map(|(i, vars)| {
            let rows = (0..rng.random_range(0..=shape.max_tuples))
                .map(|_| {
                    (0..vars.len())
                        .map(|_| rng.random_range(0..d as Code))
                        .collect()
                })
                .collect();
            Relation::new(format!("R{i}"), vars, rows).expect("distinct variables")
        })
        .collect();
    let mut dict = Dictionary::new();
    for v in 0..d {
        dict.intern(&v.to_string());
    }
    let names = (1..=n).map(|i| format!("x{i}")).collect();
    JoinQuery::new(names, relations, dict).expect("covering relations")
}

/// Cardinality constraints `|R|` for every relation plus a few degree
/// constraints that `q` satisfies, keeping the dependency graph acyclic.
pub fn random_degree_constraints<R: Rng + ?Sized>(rng: &mut R, q: &JoinQuery) -> ConstraintSet {
    let mut cs = ConstraintSet::cardinalities_of(q);
    let mut constraints = cs.constraints().to_vec();
    for _ in 0..rng.random_range(0..=3) {
        let e = q.relations()[rng.random_range(0..q.relations().len())].var_set();
        let (_, r) = guard_relation(q, &e).expect("edge of q");
        if r.vars().len() < 2 || r.is_empty() {
            continue;
        }
        let mut vars = r.vars().to_vec();
        vars.shuffle(rng);
        let a_len = rng.random_range(1..vars.len());
        let b_len = rng.random_range(a_len + 1..=vars.len());
        let lhs: VarSet = vars[..a_len].iter().copied().collect();
        let rhs: VarSet = vars[..b_len].iter().copied().collect();
        let (deg, _) = max_degree(r, &lhs, &rhs);
        let c = DegreeConstraint::new(lhs, rhs, deg.max(1), r.var_set())
            .expect("A within B within guard");
        constraints.push(c);
        let candidate = ConstraintSet::for_query(q, constraints.clone()).expect("guards are edges");
        if compatible_order(&candidate).is_ok() {
            cs = candidate;
        } else {
            constraints.pop();
        }
    }
    cs
}

/// Upper 0.01 quantiles of the chi-square distribution, df = 1..=200.
const CHI2_99: [f64; 200] = [
    6.6349, 9.2103, 11.3449, 13.2767, 15.0863, 16.8119, 18.4753, 20.0902, 21.6660, 23.2093,
    24.7250, 26.2170, 27.6882, 29.1412, 30.5779, 31.9999, 33.4087, 34.8053, 36.1909, 37.5662,
    38.9322, 40.2894, 41.6384, 42.9798, 44.3141, 45.6417, 46.9629, 48.2782, 49.5879, 50.8922,
    52.1914, 53.4858, 54.7755, 56.0609, 57.3421, 58.6192, 59.8925, 61.1621, 62.4281, 63.6907,
    64.9501, 66.2062, 67.4593, 68.7095, 69.9568, 71.2014, 72.4433, 73.6826, 74.9195, 76.1539,
    77.3860, 78.6158, 79.8433, 81.0688, 82.2921, 83.5134, 84.7328, 85.9502, 87.1657, 88.3794,
    89.5913, 90.8015, 92.0100, 93.2169, 94.4221, 95.6257, 96.8278, 98.0284, 99.2275, 100.4252,
    101.6214, 102.8163, 104.0098, 105.2020, 106.3929, 107.5825, 108.7709, 109.9581, 111.1440,
    112.3288, 113.5124, 114.6949, 115.8763, 117.0565, 118.2357, 119.4139, 120.5910, 121.7671,
    122.9422, 124.1163, 125.2895, 126.4617, 127.6329, 128.8032, 129.9727, 131.1412, 132.3089,
    133.4757, 134.6416, 135.8067, 136.9710, 138.1345, 139.2971, 140.4590, 141.6201, 142.7804,
    143.9400, 145.0988, 146.2569, 147.4143, 148.5710, 149.7269, 150.8822, 152.0367, 153.1906,
    154.3438, 155.4964, 156.6483, 157.7995, 158.9502, 160.1002, 161.2495, 162.3983, 163.5465,
    164.6940, 165.8410, 166.9874, 168.1332, 169.2784, 170.4231, 171.5673, 172.7108, 173.8539,
    174.9963, 176.1383, 177.2797, 178.4207, 179.5611, 180.7009, 181.8403, 182.9792, 184.1176,
    185.2555, 186.3930, 187.5299, 188.6664, 189.8024, 190.9380, 192.0730, 193.2077, 194.3419,
    195.4756, 196.6089, 197.7418, 198.8742, 200.0062, 201.1378, 202.2690, 203.3998, 204.5301,
    205.6600, 206.7896, 207.9187, 209.0474, 210.1758, 211.3037, 212.4313, 213.5585, 214.6853,
    215.8117, 216.9378, 218.0635, 219.1888, 220.3138, 221.4384, 222.5626, 223.6865, 224.8101,
    225.9333, 227.0561, 228.1786, 229.3008, 230.4227, 231.5442, 232.6653, 233.7862, 234.9067,
    236.0269, 237.1468, 238.2664, 239.3856, 240.5046, 241.6232, 242.7415, 243.8595, 244.9772,
    246.0947, 247.2118, 248.3286, 249.4451,
];

/// Critical value at significance 0.01; Wilson–Hilferty beyond the table.
pub fn chi_square_critical(df: usize) -> f64 {
    assert!(df >= 1, "degrees of freedom must be positive");
    if df <= CHI2_99.len() {
        return CHI2_99[df - 1];
    }
    const Z: f64 = 2.326_347_874;
    let k = df as f64;
    let h = 2.0 / (9.0 * k);
    k * (1.0 - h + Z * h.sqrt()).powi(3)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformityReport<T: Ord> {
    pub categories: BTreeMap<T, u64>,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub pass: bool,
}

/// Pearson goodness of fit of `samples` against the uniform law on
/// `categories`.
pub fn chi_square_uniformity<T: Ord + Clone + std::fmt::Debug>(
    samples: &[T],
    categories: &[T],
) -> Result<UniformityReport<T>, OracleError> {
    let mut counts: BTreeMap<T, u64> = categories.iter().map(|c| (c.clone(), 0)).collect();
    let k = counts.len();
    if k < 2 || samples.len() < 5 * k {
        return Err(OracleError::TooFewSamples {
            samples: samples.len(),
            categories: k,
        });
    }
    for s in samples {
        *counts
            .get_mut(s)
            .ok_or_else(|| OracleError::UnknownCategory(format!("{s:?}")))? += 1;
    }
    let expected = samples.len() as f64 / k as f64;
    let chi_square = counts
        .values()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    let degrees_of_freedom = k - 1;
    Ok(UniformityReport {
        pass: chi_square < chi_square_critical(degrees_of_freedom),
        categories: counts,
        chi_square,
        degrees_of_freedom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::validate;
    use crate::relation::tests::triangle_example;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_instances_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let q = random_instance(&mut rng, &InstanceShape::default());
            assert!(q.num_vars() <= 4 && q.relations().len() <= 4 && q.domain_size() <= 6);
            assert!(q.relations().iter().all(|r| r.len() <= 40));
            let cs = random_degree_constraints(&mut rng, &q);
            assert!(validate(&q, &cs).all_passed());
            assert!(compatible_order(&cs).is_ok());
        }
    }

    #[test]
    fn triangle_example_answers() {
        let q = triangle_example();
        assert_eq!(
            nested_loop_join(&q).unwrap(),
            vec![vec![0, 0, 3], vec![1, 0, 2], vec![1, 1, 0], vec![1, 1, 2]]
        );
    }

    #[test]
    fn empty_relation_gives_nothing() {
        let q = triangle_example().with_relation_rows("T", vec![]).unwrap();
        assert!(nested_loop_join(&q).unwrap().is_empty());
        assert_eq!(prefix_counts(&q, &q.order()).unwrap(), vec![0, 0, 0]);
        assert_eq!(call_bound(&q, &q.order()).unwrap(), 1);
    }

    #[test]
    fn single_relation_is_itself() {
        let rows = vec![vec![0, 1], vec![1, 1], vec![2, 0]];
        let r = Relation::new("R", vec![VarId(0), VarId(1)], rows.clone()).unwrap();
        let mut dict = Dictionary::new();
        for v in ["a", "b", "c"] {
            dict.intern(v);
        }
        let q = JoinQuery::new(vec!["x".into(), "y".into()], vec![r], dict).unwrap();
        assert_eq!(nested_loop_join(&q).unwrap(), rows);
        assert_eq!(prefix_counts(&q, &q.order()).unwrap(), vec![3, 3]);
    }

    #[test]
    fn triangle_example_prefix_counts() {
        let q = triangle_example();
        assert_eq!(prefix_counts(&q, &q.order()).unwrap(), vec![3, 4, 4]);
        assert_eq!(call_bound(&q, &q.order()).unwrap(), 5 * 12);
        let full = prefix_counts(&q, &q.order()).unwrap();
        assert_eq!(
            *full.last().unwrap() as usize,
            nested_loop_join(&q).unwrap().len()
        );
    }

    #[test]
    fn chi_square_examples() {
        let cats = [0, 1, 2, 3];
        let balanced: Vec<i32> = (0..1000).map(|i| i % 4).collect();
        let r = chi_square_uniformity(&balanced, &cats).unwrap();
        assert_eq!(r.chi_square, 0.0);
        assert!(r.pass);
        assert_eq!(r.degrees_of_freedom, 3);
        assert_eq!(r.categories.values().sum::<u64>(), 1000);

        let lumped = vec![2; 1000];
        let r = chi_square_uniformity(&lumped, &cats).unwrap();
        assert!((r.chi_square - 3000.0).abs() < 1e-9);
        assert!(!r.pass);

        assert_eq!(
            chi_square_uniformity(&[7; 100], &cats),
            Err(OracleError::UnknownCategory("7".into()))
        );
        assert!(matches!(
            chi_square_uniformity(&[0; 10], &cats),
            Err(OracleError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn critical_values() {
        assert!((chi_square_critical(1) - 6.6349).abs() < 1e-3);
        assert!((chi_square_critical(3) - 11.3449).abs() < 1e-3);
        // the approximation continues the table smoothly
        let approx_200 = {
            let k = 200.0f64;
            let h = 2.0 / (9.0 * k);
            k * (1.0 - h + 2.326_347_874 * h.sqrt()).powi(3)
        };
        assert!((approx_200 - chi_square_critical(200)).abs() < 0.1);
        assert!(chi_square_critical(201) > chi_square_critical(200));
    }
}
