//! Dictionary-encoded relational data model.
//!
//! Every raw value of an instance is mapped to a dense integer code through a
//! single [`Dictionary`]. Variables are identified by [`VarId`], which is the
//! position of the variable in the query's declared order. Relations store
//! their columns in ascending `VarId` order and their rows sorted and
//! deduplicated.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

/// Dense dictionary code of a domain value.
pub type Code = u32;

/// A variable, identified by its position in the query's declared order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

pub type VarSet = BTreeSet<VarId>;

/// Bijection between raw value tokens and dense codes `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dictionary {
    forward: HashMap<String, Code>,
    backward: Vec<String>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the code of `raw`, assigning the next free code on first sight.
    pub fn intern(&mut self, raw: &str) -> Code {
        if let Some(&code) = self.forward.get(raw) {
            return code;
        }
        let code = self.backward.len() as Code;
        self.forward.insert(raw.to_owned(), code);
        self.backward.push(raw.to_owned());
        code
    }

    pub fn code(&self, raw: &str) -> Option<Code> {
        self.forward.get(raw).copied()
    }

    pub fn value(&self, code: Code) -> Option<&str> {
        self.backward.get(code as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.backward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backward.is_empty()
    }

    pub fn values(&self) -> &[String] {
        &self.backward
    }
}

/// A partial assignment: `(variable, code)` pairs sorted by variable.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tuple(Vec<(VarId, Code)>);

impl Tuple {
    /// The empty tuple.
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn unit(var: VarId, code: Code) -> Self {
        Self(vec![(var, code)])
    }

    /// Builds a tuple from arbitrary pairs. Returns `None` if a variable repeats.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (VarId, Code)>) -> Option<Self> {
        let mut pairs: Vec<_> = pairs.into_iter().collect();
        pairs.sort_unstable_by_key(|&(v, _)| v);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return None;
        }
        Some(Self(pairs))
    }

    /// Zips sorted-distinct `vars` with `codes`.
    pub(crate) fn from_sorted(vars: &[VarId], codes: &[Code]) -> Self {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]));
        Self(vars.iter().copied().zip(codes.iter().copied()).collect())
    }

    pub fn get(&self, var: VarId) -> Option<Code> {
        self.0
            .binary_search_by_key(&var, |&(v, _)| v)
            .ok()
            .map(|i| self.0[i].1)
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.iter().map(|&(v, _)| v)
    }

    pub fn var_set(&self) -> VarSet {
        self.vars().collect()
    }

    pub fn codes(&self) -> impl Iterator<Item = Code> + '_ {
        self.0.iter().map(|&(_, c)| c)
    }

    pub fn pairs(&self) -> &[(VarId, Code)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self ∪ {var ↦ code}`. Returns `None` if `var` is already assigned.
    pub fn extended(&self, var: VarId, code: Code) -> Option<Self> {
        match self.0.binary_search_by_key(&var, |&(v, _)| v) {
            Ok(_) => None,
            Err(pos) => {
                let mut pairs = self.0.clone();
                pairs.insert(pos, (var, code));
                Some(Self(pairs))
            }
        }
    }

    /// Restriction of the tuple to the variables in `vars`.
    pub fn restrict(&self, vars: &VarSet) -> Self {
        Self(
            self.0
                .iter()
                .copied()
                .filter(|(v, _)| vars.contains(v))
                .collect(),
        )
    }
}

/// Restriction `t|Y`; variables of `y` absent from `t` are ignored.
pub fn restrict(t: &Tuple, y: &VarSet) -> Tuple {
    t.restrict(y)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelationError {
    #[error("relation `{0}` lists a variable twice")]
    DuplicateVariable(String),
    #[error("relation `{name}`: row {row} has {found} values, expected {expected}")]
    Arity {
        name: String,
        row: usize,
        found: usize,
        expected: usize,
    },
}

/// A set of tuples over a fixed variable set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    name: String,
    vars: Vec<VarId>,
    rows: Vec<Vec<Code>>,
}

impl Relation {
    /// Builds a relation whose rows list codes in the order of `vars`.
    ///
    /// Columns are rearranged into ascending variable order; rows are sorted
    /// and deduplicated.
    pub fn new(
        name: impl Into<String>,
        vars: Vec<VarId>,
        rows: Vec<Vec<Code>>,
    ) -> Result<Self, RelationError> {
        let name = name.into();
        let mut perm: Vec<usize> = (0..vars.len()).collect();
        perm.sort_by_key(|&i| vars[i]);
        let sorted_vars: Vec<VarId> = perm.iter().map(|&i| vars[i]).collect();
        if sorted_vars.windows(2).any(|w| w[0] == w[1]) {
            return Err(RelationError::DuplicateVariable(name));
        }
        let mut out = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != vars.len() {
                return Err(RelationError::Arity {
                    name,
                    row: i,
                    found: row.len(),
                    expected: vars.len(),
                });
            }
            out.push(perm.iter().map(|&j| row[j]).collect());
        }
        Ok(Self::from_canonical(name, sorted_vars, out))
    }

    /// `vars` must already be strictly ascending.
    fn from_canonical(name: String, vars: Vec<VarId>, mut rows: Vec<Vec<Code>>) -> Self {
        rows.sort_unstable();
        rows.dedup();
        Self { name, vars, rows }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Variables in ascending order.
    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn var_set(&self) -> VarSet {
        self.vars.iter().copied().collect()
    }

    /// Rows, sorted, each listing codes in the order of [`Relation::vars`].
    pub fn rows(&self) -> &[Vec<Code>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn tuples(&self) -> impl Iterator<Item = Tuple> + '_ {
        self.rows.iter().map(|r| Tuple::from_sorted(&self.vars, r))
    }

    pub fn contains(&self, t: &Tuple) -> bool {
        if t.len() != self.vars.len() || !t.vars().eq(self.vars.iter().copied()) {
            return false;
        }
        let row: Vec<Code> = t.codes().collect();
        self.rows.binary_search(&row).is_ok()
    }

    /// Whether `row` agrees with `t` on every shared variable.
    fn agrees(&self, row: &[Code], t: &Tuple) -> bool {
        self.vars
            .iter()
            .zip(row)
            .all(|(&v, &c)| t.get(v).is_none_or(|tc| tc == c))
    }

    pub(crate) fn with_rows(&self, rows: Vec<Vec<Code>>) -> Self {
        Self::from_canonical(self.name.clone(), self.vars.clone(), rows)
    }
}

/// `R[t]`: rows agreeing with `t`, projected onto `X_R − vars(t)`.
pub fn filter(r: &Relation, t: &Tuple) -> Relation {
    let keep: Vec<usize> = (0..r.vars.len())
        .filter(|&i| t.get(r.vars[i]).is_none())
        .collect();
    let vars = keep.iter().map(|&i| r.vars[i]).collect();
    let rows = r
        .rows
        .iter()
        .filter(|row| r.agrees(row, t))
        .map(|row| keep.iter().map(|&i| row[i]).collect())
        .collect();
    Relation::from_canonical(r.name.clone(), vars, rows)
}

/// `R|Y`: deduplicated restrictions of every tuple to `X_R ∩ Y`.
pub fn project(r: &Relation, y: &VarSet) -> Relation {
    let keep: Vec<usize> = (0..r.vars.len())
        .filter(|&i| y.contains(&r.vars[i]))
        .collect();
    let vars = keep.iter().map(|&i| r.vars[i]).collect();
    let rows = r
        .rows
        .iter()
        .map(|row| keep.iter().map(|&i| row[i]).collect())
        .collect();
    Relation::from_canonical(r.name.clone(), vars, rows)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("variable order is empty")]
    EmptyOrder,
    #[error("variable `{0}` appears twice in the order")]
    DuplicateOrderVariable(String),
    #[error("relation `{relation}` uses variable `{var}` which is not in the order")]
    UnknownVariable { relation: String, var: String },
    #[error("variable `{0}` is not used by any relation")]
    UncoveredVariable(String),
    #[error("relation `{relation}` holds code {code} outside the domain of size {domain_size}")]
    CodeOutOfDomain {
        relation: String,
        code: Code,
        domain_size: usize,
    },
    #[error(transparent)]
    Relation(#[from] RelationError),
}

/// A full conjunctive query together with its (encoded) data.
#[derive(Clone, Debug)]
pub struct JoinQuery {
    var_names: Vec<String>,
    relations: Vec<Relation>,
    domain_size: usize,
    dictionary: Dictionary,
}

impl JoinQuery {
    /// `var_names[i]` names `VarId(i)`; the declared order is `0..n`.
    pub fn new(
        var_names: Vec<String>,
        relations: Vec<Relation>,
        dictionary: Dictionary,
    ) -> Result<Self, QueryError> {
        Self::with_domain(var_names, relations, dictionary.len(), dictionary)
    }

    pub(crate) fn with_domain(
        var_names: Vec<String>,
        relations: Vec<Relation>,
        domain_size: usize,
        dictionary: Dictionary,
    ) -> Result<Self, QueryError> {
        if var_names.is_empty() {
            return Err(QueryError::EmptyOrder);
        }
        let mut seen = HashSet::new();
        for name in &var_names {
            if !seen.insert(name.as_str()) {
                return Err(QueryError::DuplicateOrderVariable(name.clone()));
            }
        }
        let n = var_names.len();
        let mut covered = vec![false; n];
        for r in &relations {
            for &v in r.vars() {
                if v.index() >= n {
                    return Err(QueryError::UnknownVariable {
                        relation: r.name().to_owned(),
                        var: v.to_string(),
                    });
                }
                covered[v.index()] = true;
            }
            if let Some(&code) = r
                .rows()
                .iter()
                .flatten()
                .find(|&&c| c as usize >= domain_size)
            {
                return Err(QueryError::CodeOutOfDomain {
                    relation: r.name().to_owned(),
                    code,
                    domain_size,
                });
            }
        }
        if let Some(i) = covered.iter().position(|&c| !c) {
            return Err(QueryError::UncoveredVariable(var_names[i].clone()));
        }
        Ok(Self {
            var_names,
            relations,
            domain_size,
            dictionary,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    /// The declared global order, `x_1..x_n`.
    pub fn order(&self) -> Vec<VarId> {
        (0..self.var_names.len() as u32).map(VarId).collect()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.var_names[v.index()]
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.var_names
            .iter()
            .position(|n| n == name)
            .map(|i| VarId(i as u32))
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name() == name)
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    /// Decodes a full assignment (codes indexed by `VarId`) into raw values.
    pub fn decode<'a>(&'a self, codes: &[Code]) -> Vec<&'a str> {
        codes
            .iter()
            .map(|&c| self.dictionary.value(c).unwrap_or("?"))
            .collect()
    }

    /// Returns a copy of the query with relation `name`'s tuples replaced.
    pub fn with_relation_rows(&self, name: &str, rows: Vec<Vec<Code>>) -> Option<Self> {
        let idx = self.relations.iter().position(|r| r.name() == name)?;
        let mut q = self.clone();
        q.relations[idx] = q.relations[idx].with_rows(rows);
        Some(q)
    }

    pub(crate) fn replace_relations(&self, relations: Vec<Relation>) -> Self {
        Self {
            var_names: self.var_names.clone(),
            relations,
            domain_size: self.domain_size,
            dictionary: self.dictionary.clone(),
        }
    }
}

/// `true` iff no relation of `q` becomes empty under `t`.
pub fn is_consistent(q: &JoinQuery, t: &Tuple) -> bool {
    q.relations
        .iter()
        .all(|r| r.rows.iter().any(|row| r.agrees(row, t)))
}

/// A named table of raw string values with a header naming its variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(name: impl Into<String>, header: &[&str], rows: &[&[&str]]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| (*s).to_owned()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| (*s).to_owned()).collect())
                .collect(),
        }
    }
}

/// Dictionary-encodes raw tables into a [`JoinQuery`] over `order`.
///
/// Codes are handed out in first-appearance order: tables in the given
/// order, rows top to bottom, columns left to right.
pub fn encode_instance(tables: &[RawTable], order: &[String]) -> Result<JoinQuery, QueryError> {
    if order.is_empty() {
        return Err(QueryError::EmptyOrder);
    }
    let position: HashMap<&str, VarId> = order
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), VarId(i as u32)))
        .collect();
    let mut dictionary = Dictionary::new();
    let mut relations = Vec::with_capacity(tables.len());
    for table in tables {
        let vars = table
            .header
            .iter()
            .map(|h| {
                position
                    .get(h.as_str())
                    .copied()
                    .ok_or_else(|| QueryError::UnknownVariable {
                        relation: table.name.clone(),
                        var: h.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rows = table
            .rows
            .iter()
            .map(|row| row.iter().map(|raw| dictionary.intern(raw)).collect())
            .collect();
        relations.push(Relation::new(table.name.clone(), vars, rows)?);
    }
    JoinQuery::new(order.to_vec(), relations, dictionary)
}
