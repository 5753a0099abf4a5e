//! Bitwise re-encoding of a query over `{0, 1}`.
//!
//! Every variable `x` becomes `b` bit variables `x^1..x^b` (most significant
//! first), so the enumerator branches on bits instead of whole values. With
//! MSB-first bits the lexicographic order of binarised rows is the order of
//! the original rows.

use thiserror::Error;

use crate::constraints::{ConstraintSet, DegreeConstraint};
use crate::relation::{Code, Dictionary, JoinQuery, Relation, Tuple, VarId, VarSet};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BinariseError {
    #[error("value {value} does not fit in {bits} bits")]
    ValueTooWide { value: Code, bits: u32 },
    #[error("binarised tuple misses bit variable {0}")]
    MissingBit(VarId),
    #[error("decoded code {code} is outside the domain of size {domain_size}")]
    CodeOutOfDomain { code: Code, domain_size: usize },
}

/// `max(1, ⌈log2 domain_size⌉)`.
pub fn bit_width(domain_size: usize) -> u32 {
    if domain_size <= 2 {
        1
    } else {
        usize::BITS - (domain_size - 1).leading_zeros()
    }
}

/// MSB-first expansion of `k` on `bits` bits.
pub fn bin_value(k: Code, bits: u32) -> Result<Vec<Code>, BinariseError> {
    if bits < Code::BITS && k >> bits != 0 {
        return Err(BinariseError::ValueTooWide { value: k, bits });
    }
    Ok((0..bits).rev().map(|i| (k >> i) & 1).collect())
}

/// Mapping between original variables and their bit variables.
///
/// Bit `i` (0-based, most significant first) of variable `x` is the
/// binarised variable `x * bits + i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitLayout {
    bits: u32,
    num_vars: usize,
    domain_size: usize,
}

impl BitLayout {
    pub fn new(num_vars: usize, domain_size: usize) -> Self {
        Self {
            bits: bit_width(domain_size),
            num_vars,
            domain_size,
        }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn num_bit_vars(&self) -> usize {
        self.num_vars * self.bits as usize
    }

    pub fn bit_var(&self, x: VarId, bit: u32) -> VarId {
        debug_assert!(bit < self.bits);
        VarId(x.0 * self.bits + bit)
    }

    /// Original variable and 0-based bit index of a bit variable.
    pub fn source(&self, bv: VarId) -> (VarId, u32) {
        (VarId(bv.0 / self.bits), bv.0 % self.bits)
    }

    pub fn bin_vars(&self, vars: &VarSet) -> VarSet {
        vars.iter()
            .flat_map(|&x| (0..self.bits).map(move |i| self.bit_var(x, i)))
            .collect()
    }

    /// `x_1^1..x_1^b, …, x_n^1..x_n^b` for the order `x_1..x_n`.
    pub fn binarised_order(&self, order: &[VarId]) -> Vec<VarId> {
        order
            .iter()
            .flat_map(|&x| (0..self.bits).map(move |i| self.bit_var(x, i)))
            .collect()
    }

    /// Folds bit values (indexed by bit variable) into codes indexed by
    /// original variable, without domain checks.
    pub fn fold_into(&self, bits: &[Code], out: &mut Vec<Code>) {
        let b = self.bits as usize;
        out.clear();
        out.extend(
            bits.chunks_exact(b)
                .map(|chunk| chunk.iter().fold(0, |acc, &bit| (acc << 1) | bit)),
        );
    }
}

/// A binarised query with the layout that produced it.
#[derive(Clone, Debug)]
pub struct BinarisedQuery {
    pub query: JoinQuery,
    pub layout: BitLayout,
}

/// Re-encodes every relation of `q` bitwise; `|bin(R)| = |R|`.
pub fn bin_query(q: &JoinQuery) -> BinarisedQuery {
    let layout = BitLayout::new(q.num_vars(), q.domain_size());
    let b = layout.bits;
    let var_names: Vec<String> = q
        .var_names()
        .iter()
        .flat_map(|name| (1..=b).map(move |i| format!("{name}^{i}")))
        .collect();
    let relations = q
        .relations()
        .iter()
        .map(|r| {
            let vars: Vec<VarId> = r
                .vars()
                .iter()
                .flat_map(|&x| (0..b).map(move |i| layout.bit_var(x, i)))
                .collect();
            let rows = r
                .rows()
                .iter()
                .map(|row| {
                    row.iter()
                        .flat_map(|&k| bin_value(k, b).expect("codes fit the layout"))
                        .collect()
                })
                .collect();
            Relation::new(r.name(), vars, rows).expect("bit variables are distinct")
        })
        .collect();
    let mut dict = Dictionary::new();
    dict.intern("0");
    dict.intern("1");
    let query =
        JoinQuery::new(var_names, relations, dict).expect("binarisation preserves coverage");
    BinarisedQuery { query, layout }
}

/// Inverse of bitwise encoding on a full binarised tuple.
pub fn debin_tuple(t: &Tuple, layout: &BitLayout) -> Result<Tuple, BinariseError> {
    let mut pairs = Vec::with_capacity(layout.num_vars);
    for x in 0..layout.num_vars as u32 {
        let mut code: Code = 0;
        for i in 0..layout.bits {
            let bv = layout.bit_var(VarId(x), i);
            let bit = t.get(bv).ok_or(BinariseError::MissingBit(bv))?;
            code = (code << 1) | bit;
        }
        if code as usize >= layout.domain_size {
            return Err(BinariseError::CodeOutOfDomain {
                code,
                domain_size: layout.domain_size,
            });
        }
        pairs.push((VarId(x), code));
    }
    Ok(Tuple::from_pairs(pairs).expect("distinct variables"))
}

/// `(A, B, N) ↦ (bin A, bin B, N)` with guard `bin e`.
pub fn bin_constraints(cs: &ConstraintSet, layout: &BitLayout) -> ConstraintSet {
    let var_names = cs
        .var_names()
        .iter()
        .flat_map(|name| (1..=layout.bits).map(move |i| format!("{name}^{i}")))
        .collect();
    let edges = cs.edges().iter().map(|e| layout.bin_vars(e)).collect();
    let constraints = cs
        .constraints()
        .iter()
        .map(|c| {
            DegreeConstraint::new(
                layout.bin_vars(c.lhs()),
                layout.bin_vars(c.rhs()),
                c.bound(),
                layout.bin_vars(c.guard()),
            )
            .expect("binarisation preserves A ⊆ B ⊆ guard")
        })
        .collect();
    ConstraintSet::from_parts_unchecked(var_names, edges, constraints)
}
