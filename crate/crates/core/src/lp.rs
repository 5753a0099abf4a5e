//! Covering programs `min Σ_j ω_j ln N_j  s.t.  Σ_{j covers x} ω_j ≥ 1, ω ≥ 0`,
//! solved by enumerating basic feasible solutions.
//!
//! Vertices are computed in the scalar type `T`, so with a rational `T`
//! the returned cover is exact. Objective values are compared in `f64`.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::constraints::ConstraintSet;
use crate::relation::{VarId, VarSet};

/// Scalars a covering program can be solved over.
pub trait LpScalar:
    Num + Signed + Clone + PartialOrd + FromPrimitive + ToPrimitive + Display + Debug
{
    /// Whether `self` should be treated as zero when pivoting or testing
    /// feasibility.
    fn is_negligible(&self) -> bool;
}

impl LpScalar for f64 {
    fn is_negligible(&self) -> bool {
        self.abs() < 1e-9
    }
}

impl LpScalar for f32 {
    fn is_negligible(&self) -> bool {
        self.abs() < 1e-5
    }
}

impl LpScalar for BigRational {
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
}

impl LpScalar for Ratio<i64> {
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
}

/// Largest `rows + columns` accepted by the vertex enumeration.
pub const MAX_PROGRAM_SIZE: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LpError {
    #[error("variable {0} is not covered by any term")]
    Uncovered(VarId),
    #[error("program has {0} rows plus columns, more than {MAX_PROGRAM_SIZE}; supply weights explicitly")]
    TooLarge(usize),
    #[error("expected {expected} weights, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("weight {0} is negative")]
    NegativeWeight(usize),
    #[error("weights leave variable {0} covered less than once")]
    Undercovered(VarId),
    #[error("no feasible vertex")]
    Infeasible,
}

/// A covering program: column `j` costs `costs[j]` and covers the rows
/// listed in `covers[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoveringLp {
    rows: Vec<VarId>,
    covers: Vec<VarSet>,
    costs: Vec<f64>,
}

impl CoveringLp {
    /// Rows are the variables `0..num_vars`; every one must be covered by
    /// some column.
    pub fn new(num_vars: usize, covers: Vec<VarSet>, costs: Vec<f64>) -> Result<Self, LpError> {
        assert_eq!(covers.len(), costs.len());
        let rows: Vec<VarId> = (0..num_vars as u32).map(VarId).collect();
        if let Some(&x) = rows.iter().find(|x| !covers.iter().any(|c| c.contains(x))) {
            return Err(LpError::Uncovered(x));
        }
        Ok(Self {
            rows,
            covers,
            costs,
        })
    }

    pub fn num_columns(&self) -> usize {
        self.covers.len()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    fn row_pattern(&self, x: VarId) -> Vec<bool> {
        self.covers.iter().map(|c| c.contains(&x)).collect()
    }

    /// Distinct row patterns; identical rows are one constraint.
    fn distinct_rows(&self) -> Vec<Vec<bool>> {
        let mut out: Vec<Vec<bool>> = Vec::new();
        for &x in &self.rows {
            let p = self.row_pattern(x);
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    /// Exact coverage check of `weights`.
    pub fn check<T: LpScalar>(&self, weights: &[T]) -> Result<(), LpError> {
        if weights.len() != self.num_columns() {
            return Err(LpError::WrongLength {
                expected: self.num_columns(),
                got: weights.len(),
            });
        }
        if let Some(j) = weights.iter().position(|w| w.is_negative()) {
            return Err(LpError::NegativeWeight(j));
        }
        for &x in &self.rows {
            let total = self
                .covers
                .iter()
                .zip(weights)
                .filter(|(c, _)| c.contains(&x))
                .fold(T::zero(), |acc, (_, w)| acc + w.clone());
            if total < T::one() && !(total.clone() - T::one()).is_negligible() {
                return Err(LpError::Undercovered(x));
            }
        }
        Ok(())
    }

    /// `Σ_j ω_j · costs[j]` in `f64`.
    pub fn objective<T: LpScalar>(&self, weights: &[T]) -> f64 {
        weights
            .iter()
            .zip(&self.costs)
            .map(|(w, c)| {
                if w.is_zero() {
                    0.0
                } else {
                    w.to_f64().unwrap_or(f64::NAN) * c
                }
            })
            .sum()
    }

    /// An optimal vertex. Among vertices whose objectives agree to `1e-12`
    /// relative, the one with the smaller `Σ ω` wins, then the
    /// lexicographically larger vector (weight on earlier columns).
    pub fn solve<T: LpScalar>(&self) -> Result<Vec<T>, LpError> {
        let rows = self.distinct_rows();
        let m = self.num_columns();
        let size = rows.len() + m;
        if size > MAX_PROGRAM_SIZE {
            return Err(LpError::TooLarge(size));
        }
        // Constraint k < rows.len() is a coverage row, otherwise the bound
        // ω_{k - rows.len()} ≥ 0.
        let constraint = |k: usize| -> (Vec<T>, T) {
            if k < rows.len() {
                let a = rows[k]
                    .iter()
                    .map(|&b| if b { T::one() } else { T::zero() })
                    .collect();
                (a, T::one())
            } else {
                let mut a = vec![T::zero(); m];
                a[k - rows.len()] = T::one();
                (a, T::zero())
            }
        };
        let mut best: Option<(f64, T, Vec<T>)> = None;
        let mut chosen = Vec::with_capacity(m);
        for_each_subset(size, m, &mut chosen, &mut |subset| {
            let (a, b): (Vec<Vec<T>>, Vec<T>) = subset.iter().map(|&k| constraint(k)).unzip();
            let Some(w) = solve_square(a, b) else { return };
            if self.check(&w).is_err() {
                return;
            }
            let w: Vec<T> = w
                .into_iter()
                .map(|x| if x.is_negligible() { T::zero() } else { x })
                .collect();
            let obj = self.objective(&w);
            let sum = w.iter().fold(T::zero(), |acc, x| acc + x.clone());
            let better = match &best {
                None => true,
                Some((bo, bs, bw)) => {
                    let tol = 1e-12 * bo.abs().max(1.0);
                    if obj < bo - tol {
                        true
                    } else if obj > bo + tol {
                        false
                    } else {
                        match sum.partial_cmp(bs) {
                            Some(Ordering::Less) => true,
                            Some(Ordering::Greater) => false,
                            _ => lex_cmp(&w, bw) == Ordering::Greater,
                        }
                    }
                }
            };
            if better {
                best = Some((obj, sum, w));
            }
        });
        best.map(|(_, _, w)| w).ok_or(LpError::Infeasible)
    }
}

fn lex_cmp<T: PartialOrd>(a: &[T], b: &[T]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn for_each_subset(n: usize, k: usize, chosen: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    let start = chosen.last().map_or(0, |&l| l + 1);
    for i in start..n {
        if n - i < k - chosen.len() {
            break;
        }
        chosen.push(i);
        for_each_subset(n, k, chosen, f);
        chosen.pop();
    }
}

/// Gauss–Jordan with partial pivoting; `None` when singular.
fn solve_square<T: LpScalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !a[r][col].is_negligible())
            .max_by(|&r, &s| {
                a[r][col]
                    .abs()
                    .partial_cmp(&a[s][col].abs())
                    .unwrap_or(Ordering::Equal)
            })?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col].clone();
        for x in &mut a[col][col..] {
            *x = x.clone() / p.clone();
        }
        b[col] = b[col].clone() / p;
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            let pivot_row = a[col][col..].to_vec();
            for (x, p) in a[r][col..].iter_mut().zip(pivot_row) {
                *x = x.clone() - f.clone() * p;
            }
            b[r] = b[r].clone() - f * b[col].clone();
        }
    }
    Some(b)
}

/// Weights of a covering program together with its bound.
#[derive(Clone, Debug, PartialEq)]
pub struct FractionalCover<T> {
    pub weights: Vec<T>,
    /// `ln ∏_j N_j^{ω_j}`.
    pub log_bound: f64,
}

impl<T: LpScalar> FractionalCover<T> {
    pub fn log2_bound(&self) -> f64 {
        self.log_bound / std::f64::consts::LN_2
    }

    pub fn bound(&self) -> f64 {
        self.log_bound.exp()
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.to_f64().unwrap_or(f64::NAN))
            .collect()
    }

    /// Space-separated weights, e.g. `1/2 1/2 1/2`.
    pub fn format_weights(&self) -> String {
        self.weights
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn ln_size(n: u64) -> f64 {
    (n.max(1) as f64).ln()
}

/// Program for a cardinality class: column `j` is edge `edges[j]` with
/// cost `ln sizes[j]` (sizes below 1 cost nothing).
pub fn card_program(
    num_vars: usize,
    edges: &[VarSet],
    sizes: &[u64],
) -> Result<CoveringLp, LpError> {
    CoveringLp::new(
        num_vars,
        edges.to_vec(),
        sizes.iter().map(|&n| ln_size(n)).collect(),
    )
}

/// Program for a degree class: column `δ` covers `B_δ ∖ A_δ` at cost
/// `ln N_δ`.
pub fn degree_program(cs: &ConstraintSet) -> Result<CoveringLp, LpError> {
    let covers = cs
        .constraints()
        .iter()
        .map(|c| c.free_vars().collect())
        .collect();
    let costs = cs
        .constraints()
        .iter()
        .map(|c| ln_size(c.bound()))
        .collect();
    CoveringLp::new(cs.num_vars(), covers, costs)
}

fn finish<T: LpScalar>(lp: &CoveringLp, weights: Vec<T>) -> FractionalCover<T> {
    FractionalCover {
        log_bound: lp.objective(&weights),
        weights,
    }
}

/// Optimal fractional edge cover for edge sizes `sizes`.
pub fn solve_cover_card<T: LpScalar>(
    num_vars: usize,
    edges: &[VarSet],
    sizes: &[u64],
) -> Result<FractionalCover<T>, LpError> {
    let lp = card_program(num_vars, edges, sizes)?;
    let w = lp.solve()?;
    Ok(finish(&lp, w))
}

/// Optimal cover of the degree-constraint program, one weight per
/// constraint of `cs`.
pub fn solve_cover_degree<T: LpScalar>(cs: &ConstraintSet) -> Result<FractionalCover<T>, LpError> {
    let lp = degree_program(cs)?;
    let w = lp.solve()?;
    Ok(finish(&lp, w))
}

/// Checks user weights against `lp` and reports their bound.
pub fn checked_cover<T: LpScalar>(
    lp: &CoveringLp,
    weights: Vec<T>,
) -> Result<FractionalCover<T>, LpError> {
    lp.check(&weights)?;
    Ok(finish(lp, weights))
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse {0:?} as a fraction p/q")]
pub struct FractionError(pub String);

/// Parses `p/q` or an integer `p`.
pub fn parse_fraction(s: &str) -> Result<BigRational, FractionError> {
    let err = || FractionError(s.to_string());
    let s = s.trim();
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s, "1"),
    };
    let p: BigInt = p.parse().map_err(|_| err())?;
    let q: BigInt = q.parse().map_err(|_| err())?;
    if q.is_zero() {
        return Err(err());
    }
    Ok(BigRational::new(p, q))
}

/// `n/1` for integers.
pub fn rational_from_u64(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::tests::{fd_example, set};
    use crate::constraints::DegreeConstraint;
    use proptest::prelude::*;

    fn r(p: i64, q: i64) -> BigRational {
        BigRational::new(p.into(), q.into())
    }

    fn triangle() -> Vec<VarSet> {
        vec![set(&[0, 1]), set(&[1, 2]), set(&[0, 2])]
    }

    #[test]
    fn triangle_is_half_half_half() {
        let cover: FractionalCover<BigRational> =
            solve_cover_card(3, &triangle(), &[64, 64, 64]).unwrap();
        assert_eq!(cover.weights, vec![r(1, 2), r(1, 2), r(1, 2)]);
        assert_eq!(cover.format_weights(), "1/2 1/2 1/2");
        assert!((cover.log2_bound() - 9.0).abs() < 1e-12);
        assert!((cover.bound() - 512.0).abs() < 1e-9);
    }

    #[test]
    fn single_edge_and_path() {
        let one: FractionalCover<BigRational> =
            solve_cover_card(2, &[set(&[0, 1])], &[10]).unwrap();
        assert_eq!(one.format_weights(), "1");
        let path: FractionalCover<BigRational> =
            solve_cover_card(3, &[set(&[0, 1]), set(&[1, 2])], &[7, 7]).unwrap();
        assert_eq!(path.weights, vec![r(1, 1), r(1, 1)]);
        assert!((path.bound() - 49.0).abs() < 1e-9);
    }

    #[test]
    fn float_scalars_agree() {
        let exact: FractionalCover<BigRational> =
            solve_cover_card(3, &triangle(), &[16, 64, 4]).unwrap();
        let f: FractionalCover<f64> = solve_cover_card(3, &triangle(), &[16, 64, 4]).unwrap();
        let g: FractionalCover<f32> = solve_cover_card(3, &triangle(), &[16, 64, 4]).unwrap();
        let s: FractionalCover<Ratio<i64>> =
            solve_cover_card(3, &triangle(), &[16, 64, 4]).unwrap();
        for (((e, a), b), c) in exact
            .weights_f64()
            .iter()
            .zip(f.weights_f64())
            .zip(g.weights_f64())
            .zip(s.weights_f64())
        {
            assert!((e - a).abs() < 1e-9 && (e - b).abs() < 1e-5 && (e - c).abs() < 1e-12);
        }
        assert!((exact.log_bound - f.log_bound).abs() < 1e-9);
    }

    #[test]
    fn fd_class_bound_is_n() {
        let n = 1000;
        let cover: FractionalCover<BigRational> = solve_cover_degree(&fd_example(n)).unwrap();
        assert!((cover.log_bound - (n as f64).ln()).abs() < 1e-12);
        assert_eq!(cover.weights, vec![r(1, 1), r(0, 1), r(0, 1), r(1, 1)]);
    }

    #[test]
    fn cardinality_only_degree_matches_card() {
        let edges = triangle();
        let sizes = [9, 25, 49];
        let cs = ConstraintSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            edges.clone(),
            edges
                .iter()
                .zip(sizes)
                .map(|(e, n)| DegreeConstraint::cardinality(e.clone(), n).unwrap())
                .collect(),
        )
        .unwrap();
        let d: FractionalCover<BigRational> = solve_cover_degree(&cs).unwrap();
        let c: FractionalCover<BigRational> = solve_cover_card(3, &edges, &sizes).unwrap();
        assert_eq!(d, c);
    }

    /// Objective over a grid of weights in steps of 1/4, as an independent
    /// upper bound on the optimum.
    fn grid_min(lp: &CoveringLp) -> f64 {
        let m = lp.num_columns();
        let mut best = f64::INFINITY;
        let mut w = vec![0u32; m];
        loop {
            let ws: Vec<BigRational> = w.iter().map(|&k| r(k as i64, 4)).collect();
            if lp.check(&ws).is_ok() {
                best = best.min(lp.objective(&ws));
            }
            let mut i = 0;
            loop {
                if i == m {
                    return best;
                }
                w[i] += 1;
                if w[i] <= 8 {
                    break;
                }
                w[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn triangle_with_fd() {
        let n = 100u64;
        let edges = triangle();
        let mut constraints: Vec<_> = edges
            .iter()
            .map(|e| DegreeConstraint::cardinality(e.clone(), n).unwrap())
            .collect();
        constraints.push(
            DegreeConstraint::functional_dependency(set(&[0]), VarId(1), set(&[0, 1])).unwrap(),
        );
        let cs = ConstraintSet::new(
            vec!["x1".into(), "x2".into(), "x3".into()],
            edges,
            constraints,
        )
        .unwrap();
        let cover: FractionalCover<BigRational> = solve_cover_degree(&cs).unwrap();
        let agm = 1.5 * (n as f64).ln();
        let via_t = (n as f64).ln();
        assert!(cover.log_bound <= agm.min(via_t) + 1e-12);
        let lp = degree_program(&cs).unwrap();
        assert!(cover.log_bound <= grid_min(&lp) + 1e-12);
        assert!((cover.log_bound - via_t).abs() < 1e-12);
    }

    #[test]
    fn uncovered_and_too_large() {
        let err = solve_cover_card::<BigRational>(3, &[set(&[0, 1])], &[4]).unwrap_err();
        assert_eq!(err, LpError::Uncovered(VarId(2)));
        let edges: Vec<VarSet> = (0..11).map(|i| set(&[i])).collect();
        let sizes = vec![2; 11];
        assert_eq!(
            solve_cover_card::<BigRational>(11, &edges, &sizes).unwrap_err(),
            LpError::TooLarge(22)
        );
    }

    #[test]
    fn user_weights_checked() {
        let lp = card_program(3, &triangle(), &[4, 4, 4]).unwrap();
        let ok = checked_cover(&lp, vec![r(1, 2), r(1, 2), r(1, 2)]).unwrap();
        assert!((ok.log_bound - 1.5 * 4f64.ln()).abs() < 1e-12);
        assert_eq!(
            lp.check(&[r(1, 4), r(1, 2), r(1, 2)]),
            Err(LpError::Undercovered(VarId(0)))
        );
        assert_eq!(
            lp.check(&[r(1, 1), r(1, 1)]),
            Err(LpError::WrongLength {
                expected: 3,
                got: 2
            })
        );
        assert_eq!(
            lp.check(&[r(-1, 1), r(1, 1), r(1, 1)]),
            Err(LpError::NegativeWeight(0))
        );
    }

    #[test]
    fn fractions_round_trip() {
        assert_eq!(parse_fraction("1/2").unwrap(), r(1, 2));
        assert_eq!(parse_fraction(" 3 ").unwrap(), r(3, 1));
        assert_eq!(parse_fraction("2/4").unwrap().to_string(), "1/2");
        assert!(parse_fraction("1/0").is_err());
        assert!(parse_fraction("x").is_err());
        assert_eq!(rational_from_u64(5).to_string(), "5");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn optimum_beats_grid(
            edges in proptest::collection::vec(proptest::collection::btree_set(0u32..4, 1..4), 1..5),
            sizes in proptest::collection::vec(1u64..50, 5),
        ) {
            let edges: Vec<VarSet> = edges.into_iter().map(|e| e.into_iter().map(VarId).collect()).collect();
            let sizes = &sizes[..edges.len()];
            let lp = match card_program(4, &edges, sizes) {
                Ok(lp) => lp,
                Err(LpError::Uncovered(_)) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let cover: FractionalCover<BigRational> = solve_cover_card(4, &edges, sizes).unwrap();
            prop_assert!(lp.check(&cover.weights).is_ok());
            prop_assert!(cover.log_bound <= grid_min(&lp) + 1e-9);
        }
    }
}
