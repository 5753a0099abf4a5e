//! JSON query specs and the CSV relations they point to.

use std::path::{Path, PathBuf};

use bitjoin::constraints::{ConstraintSet, DegreeConstraint};
use bitjoin::lp::parse_fraction;
use bitjoin::relation::{encode_instance, RawTable};
use bitjoin::{JoinQuery, Rational, VarId, VarSet};
use indexmap::IndexMap;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub path: PathBuf,
    /// Renames the CSV header columns positionally.
    #[serde(default)]
    pub variables: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ConstraintSpec {
    Degree {
        a: Vec<String>,
        b: Vec<String>,
        n: u64,
        #[serde(default)]
        guard: Option<Vec<String>>,
    },
    Functional {
        from: Vec<String>,
        to: String,
        #[serde(default)]
        guard: Option<Vec<String>>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub relations: IndexMap<String, RelationSpec>,
    #[serde(default)]
    pub order: Option<Vec<String>>,
    #[serde(default)]
    pub constraints: Option<Vec<ConstraintSpec>>,
    #[serde(default)]
    pub weights: Option<Vec<String>>,
}

impl QuerySpec {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(format!("spec: {e}")))
    }
}

/// A loaded spec: encoded query plus parsed constraints and weights.
#[derive(Clone, Debug)]
pub struct Instance {
    pub query: JoinQuery,
    /// Whether the spec fixed the variable order.
    pub explicit_order: bool,
    pub constraints: Option<ConstraintSet>,
    pub weights: Option<Vec<Rational>>,
}

pub fn read_csv(name: &str, path: &Path, rename: Option<&[String]>) -> Result<RawTable, CliError> {
    let err = |e: &dyn std::fmt::Display| {
        CliError::Parse(format!("relation `{name}` ({}): {e}", path.display()))
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| err(&e))?;
    let mut header: Vec<String> = reader
        .headers()
        .map_err(|e| err(&e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if let Some(names) = rename {
        if names.len() != header.len() {
            return Err(err(&format!(
                "{} variables for {} columns",
                names.len(),
                header.len()
            )));
        }
        header = names.to_vec();
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(&e))?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok(RawTable {
        name: name.to_owned(),
        header,
        rows,
    })
}

fn var_set(q: &JoinQuery, names: &[String], what: &str) -> Result<VarSet, CliError> {
    names
        .iter()
        .map(|n| {
            q.var_id(n)
                .ok_or_else(|| CliError::Parse(format!("{what}: unknown variable `{n}`")))
        })
        .collect()
}

fn default_guard(q: &JoinQuery, rhs: &VarSet, what: &str) -> Result<VarSet, CliError> {
    q.relations()
        .iter()
        .map(|r| r.var_set())
        .find(|e| rhs.is_subset(e))
        .ok_or_else(|| CliError::Parse(format!("{what}: no relation contains all of B")))
}

fn build_constraint(
    q: &JoinQuery,
    i: usize,
    c: &ConstraintSpec,
) -> Result<DegreeConstraint, CliError> {
    let what = format!("constraint {i}");
    let (lhs, rhs, n, guard) = match c {
        ConstraintSpec::Degree { a, b, n, guard } => {
            (var_set(q, a, &what)?, var_set(q, b, &what)?, *n, guard)
        }
        ConstraintSpec::Functional { from, to, guard } => {
            let lhs = var_set(q, from, &what)?;
            let mut rhs = lhs.clone();
            rhs.extend(var_set(q, std::slice::from_ref(to), &what)?);
            (lhs, rhs, 1, guard)
        }
    };
    let guard = match guard {
        Some(g) => var_set(q, g, &what)?,
        None => default_guard(q, &rhs, &what)?,
    };
    DegreeConstraint::new(lhs, rhs, n, guard).map_err(|e| CliError::Parse(format!("{what}: {e}")))
}

/// Reads the CSVs (relative to `base`) and encodes the instance.
pub fn load(spec: &QuerySpec, base: &Path) -> Result<Instance, CliError> {
    if spec.relations.is_empty() {
        return Err(CliError::Parse("spec has no relations".into()));
    }
    let tables = spec
        .relations
        .iter()
        .map(|(name, r)| read_csv(name, &base.join(&r.path), r.variables.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    let order = match &spec.order {
        Some(o) => o.clone(),
        None => {
            let mut seen: Vec<String> = Vec::new();
            for h in tables.iter().flat_map(|t| &t.header) {
                if !seen.contains(h) {
                    seen.push(h.clone());
                }
            }
            seen
        }
    };
    let query = encode_instance(&tables, &order).map_err(|e| CliError::Parse(e.to_string()))?;
    let constraints = spec
        .constraints
        .as_ref()
        .map(|cs| {
            let built = cs
                .iter()
                .enumerate()
                .map(|(i, c)| build_constraint(&query, i, c))
                .collect::<Result<Vec<_>, _>>()?;
            ConstraintSet::for_query(&query, built).map_err(|e| CliError::Parse(e.to_string()))
        })
        .transpose()?;
    let weights = spec
        .weights
        .as_ref()
        .map(|ws| {
            ws.iter()
                .map(|w| parse_fraction(w).map_err(|e| CliError::Parse(e.to_string())))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    Ok(Instance {
        query,
        explicit_order: spec.order.is_some(),
        constraints,
        weights,
    })
}

/// Loads the spec file at `path`; CSV paths resolve against its directory.
pub fn load_file(path: &Path) -> Result<Instance, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let spec = QuerySpec::from_json(&text)?;
    load(&spec, path.parent().unwrap_or(Path::new(".")))
}

/// Resolves comma-separated variable names to a permutation.
pub fn parse_order(q: &JoinQuery, names: &str) -> Result<Vec<VarId>, CliError> {
    let order = names
        .split(',')
        .map(|n| {
            let n = n.trim();
            q.var_id(n)
                .ok_or_else(|| CliError::Parse(format!("--order: unknown variable `{n}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut sorted = order.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != order.len() || order.len() != q.num_vars() {
        return Err(CliError::Parse(
            "--order must list every variable exactly once".into(),
        ));
    }
    Ok(order)
}
