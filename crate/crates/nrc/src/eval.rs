//! Reference evaluator and database loading.
//!
//! Values mirror the type language: scalars, records, sets, bags (as
//! multiplicity maps), and closures. Evaluation is environment-based and
//! total on well-typed closed terms; the only calculus-sensitive operator
//! is `promote`, which produces a bag of multiplicity 1 in the mixed
//! calculus and is the identity in the set-only one (`dedup` can decide
//! from its argument's shape alone).
//!
//! Databases bind free variables to table values. The JSON format is
//! `{"tables": {name: {"kind": "set"|"bag", "type": "<col : Type, …>",
//! "rows": [{col: value, …}, …]}}}`; a bag table lists duplicate rows once
//! per occurrence.

use serde_json::json;
use thiserror::Error;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ast::{AtomType, CollKind, Cst, Name, Term, TypeExpr};
use crate::parse::parse_type;
use crate::typing::Calculus;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
    Rec(BTreeMap<Name, Value>),
    Set(BTreeSet<Value>),
    /// Multiset as value → multiplicity (> 0).
    Bag(BTreeMap<Value, u64>),
    Closure { var: Name, body: Term, env: Env },
}

pub type Env = BTreeMap<Name, Value>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVar(Name),
    #[error("cannot evaluate a term with holes (found [{0}])")]
    Hole(String),
    #[error("ill-typed at runtime: {0}")]
    Stuck(&'static str),
}

impl Value {
    fn as_bool(&self) -> Result<bool, EvalError> {
        match self {
            Value::Bool(b) => Ok(*b),
            _ => Err(EvalError::Stuck("expected a boolean")),
        }
    }
    fn as_int(&self) -> Result<i64, EvalError> {
        match self {
            Value::Int(i) => Ok(*i),
            _ => Err(EvalError::Stuck("expected an integer")),
        }
    }

    /// An empty collection of the given kind.
    pub fn empty_coll(kind: CollKind) -> Value {
        match kind {
            CollKind::Set => Value::Set(BTreeSet::new()),
            CollKind::Bag => Value::Bag(BTreeMap::new()),
        }
    }

    /// Renders a value as JSON: sets and bags become arrays (bags repeat
    /// elements), records become objects, closures a placeholder string.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Bool(b) => json!(b),
            Value::Int(i) => json!(i),
            Value::Str(s) => json!(s),
            Value::Rec(fields) => serde_json::Value::Object(
                fields.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
            Value::Set(elems) => {
                serde_json::Value::Array(elems.iter().map(Value::to_json).collect())
            }
            Value::Bag(elems) => serde_json::Value::Array(
                elems
                    .iter()
                    .flat_map(|(v, n)| std::iter::repeat_with(|| v.to_json()).take(*n as usize))
                    .collect(),
            ),
            Value::Closure { .. } => json!("<closure>"),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Rec(fields) => {
                write!(f, "<")?;
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k} = {v}")?;
                }
                write!(f, ">")
            }
            Value::Set(elems) => {
                write!(f, "{{")?;
                for (i, v) in elems.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "}}")
            }
            Value::Bag(elems) => {
                write!(f, "{{|")?;
                let mut first = true;
                for (v, n) in elems {
                    for _ in 0..*n {
                        if !first {
                            write!(f, ", ")?;
                        }
                        first = false;
                        write!(f, "{v}")?;
                    }
                }
                write!(f, "|}}")
            }
            Value::Closure { var, .. } => write!(f, "<closure \\{var}>"),
        }
    }
}

fn bag_insert(bag: &mut BTreeMap<Value, u64>, v: Value, n: u64) {
    if n > 0 {
        *bag.entry(v).or_insert(0) += n;
    }
}

/// Evaluates a closed-under-`env` term. `calc` only matters for `promote`.
pub fn eval(calc: Calculus, env: &Env, t: &Term) -> Result<Value, EvalError> {
    match t {
        Term::Var(x) => env.get(x).cloned().ok_or_else(|| EvalError::UnboundVar(x.clone())),
        Term::Hole(p) => Err(EvalError::Hole(p.clone())),
        Term::Const(c, args) => {
            let vals: Vec<Value> =
                args.iter().map(|a| eval(calc, env, a)).collect::<Result<_, _>>()?;
            match (c, vals.as_slice()) {
                (Cst::Bool(b), []) => Ok(Value::Bool(*b)),
                (Cst::Int(i), []) => Ok(Value::Int(*i)),
                (Cst::Str(s), []) => Ok(Value::Str(s.clone())),
                (Cst::And, [a, b]) => Ok(Value::Bool(a.as_bool()? && b.as_bool()?)),
                (Cst::Or, [a, b]) => Ok(Value::Bool(a.as_bool()? || b.as_bool()?)),
                (Cst::Not, [a]) => Ok(Value::Bool(!a.as_bool()?)),
                (Cst::Add, [a, b]) => Ok(Value::Int(a.as_int()?.wrapping_add(b.as_int()?))),
                (Cst::Le, [a, b]) => Ok(Value::Bool(a.as_int()? <= b.as_int()?)),
                (Cst::Eq, [a, b]) => match (a, b) {
                    (Value::Int(_), Value::Int(_)) | (Value::Str(_), Value::Str(_)) => {
                        Ok(Value::Bool(a == b))
                    }
                    _ => Err(EvalError::Stuck("equality needs two ints or two strings")),
                },
                _ => Err(EvalError::Stuck("constant applied to the wrong arguments")),
            }
        }
        Term::Record(fields) => {
            let mut out = BTreeMap::new();
            for (l, v) in fields {
                out.insert(l.clone(), eval(calc, env, v)?);
            }
            Ok(Value::Rec(out))
        }
        Term::Proj(subject, label) => match eval(calc, env, subject)? {
            Value::Rec(fields) => fields
                .get(label)
                .cloned()
                .ok_or(EvalError::Stuck("projection from a record without the field")),
            _ => Err(EvalError::Stuck("projection from a non-record")),
        },
        Term::Lam(x, _, body) => Ok(Value::Closure {
            var: x.clone(),
            body: (**body).clone(),
            env: env.clone(),
        }),
        Term::App(fun, arg) => {
            let f = eval(calc, env, fun)?;
            let a = eval(calc, env, arg)?;
            match f {
                Value::Closure { var, body, env: captured } => {
                    let mut inner = captured;
                    inner.insert(var, a);
                    eval(calc, &inner, &body)
                }
                _ => Err(EvalError::Stuck("application of a non-function")),
            }
        }
        Term::Empty(kind, _) => Ok(Value::empty_coll(*kind)),
        Term::Single(kind, e) => {
            let v = eval(calc, env, e)?;
            Ok(match kind {
                CollKind::Set => Value::Set(BTreeSet::from([v])),
                CollKind::Bag => {
                    let mut m = BTreeMap::new();
                    bag_insert(&mut m, v, 1);
                    Value::Bag(m)
                }
            })
        }
        Term::Union(kind, l, r) => {
            let lv = eval(calc, env, l)?;
            let rv = eval(calc, env, r)?;
            match (kind, lv, rv) {
                (CollKind::Set, Value::Set(mut a), Value::Set(b)) => {
                    a.extend(b);
                    Ok(Value::Set(a))
                }
                (CollKind::Bag, Value::Bag(mut a), Value::Bag(b)) => {
                    for (v, n) in b {
                        bag_insert(&mut a, v, n);
                    }
                    Ok(Value::Bag(a))
                }
                _ => Err(EvalError::Stuck("union of mismatched collections")),
            }
        }
        Term::Comp(kind, head, x, src) => match (kind, eval(calc, env, src)?) {
            (CollKind::Set, Value::Set(elems)) => {
                let mut out = BTreeSet::new();
                for v in elems {
                    let mut inner = env.clone();
                    inner.insert(x.clone(), v);
                    match eval(calc, &inner, head)? {
                        Value::Set(hs) => out.extend(hs),
                        _ => return Err(EvalError::Stuck("set comprehension head not a set")),
                    }
                }
                Ok(Value::Set(out))
            }
            (CollKind::Bag, Value::Bag(elems)) => {
                let mut out = BTreeMap::new();
                for (v, n) in elems {
                    let mut inner = env.clone();
                    inner.insert(x.clone(), v);
                    match eval(calc, &inner, head)? {
                        Value::Bag(hs) => {
                            for (hv, hn) in hs {
                                bag_insert(&mut out, hv, hn.saturating_mul(n));
                            }
                        }
                        _ => return Err(EvalError::Stuck("bag comprehension head not a bag")),
                    }
                }
                Ok(Value::Bag(out))
            }
            _ => Err(EvalError::Stuck("comprehension over a mismatched collection")),
        },
        Term::Where(kind, cond, body) => {
            if eval(calc, env, cond)?.as_bool()? {
                eval(calc, env, body)
            } else {
                Ok(Value::empty_coll(*kind))
            }
        }
        Term::IsEmpty(s) => match eval(calc, env, s)? {
            Value::Set(elems) => Ok(Value::Bool(elems.is_empty())),
            _ => Err(EvalError::Stuck("emptiness test on a non-set")),
        },
        Term::Dedup(s) => match eval(calc, env, s)? {
            Value::Bag(elems) => Ok(Value::Set(elems.into_keys().collect())),
            Value::Set(elems) => Ok(Value::Set(elems)),
            _ => Err(EvalError::Stuck("dedup of a non-collection")),
        },
        Term::Promote(s) => match (calc, eval(calc, env, s)?) {
            (Calculus::SetBag, Value::Set(elems)) => {
                let mut m = BTreeMap::new();
                for v in elems {
                    bag_insert(&mut m, v, 1);
                }
                Ok(Value::Bag(m))
            }
            (Calculus::SetOnly, Value::Set(elems)) => Ok(Value::Set(elems)),
            _ => Err(EvalError::Stuck("promote of a non-set")),
        },
    }
}

// ---------------------------------------------------------------------------
// Databases
// ---------------------------------------------------------------------------

/// A named table: a set- or bag-kinded collection of flat records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub kind: CollKind,
    pub row_type: TypeExpr,
    pub value: Value,
}

impl Table {
    /// The collection type a query sees for this table.
    pub fn coll_type(&self) -> TypeExpr {
        TypeExpr::coll(self.kind, self.row_type.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    pub tables: BTreeMap<Name, Table>,
}

#[derive(Debug, Error)]
pub enum DbError {
    #[error("invalid database JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("database JSON must be an object with a `tables` object")]
    Shape,
    #[error("table `{table}`: {msg}")]
    Table { table: String, msg: String },
}

fn table_err(table: &str, msg: impl Into<String>) -> DbError {
    DbError::Table { table: table.to_owned(), msg: msg.into() }
}

/// Converts one JSON cell to a value of the given atomic type.
fn cell_value(table: &str, col: &str, ty: &AtomType, v: &serde_json::Value) -> Result<Value, DbError> {
    match (ty, v) {
        (AtomType::Bool, serde_json::Value::Bool(b)) => Ok(Value::Bool(*b)),
        (AtomType::Int, serde_json::Value::Number(n)) => n
            .as_i64()
            .map(Value::Int)
            .ok_or_else(|| table_err(table, format!("column `{col}`: not a 64-bit integer"))),
        (AtomType::String, serde_json::Value::String(s)) => Ok(Value::Str(s.clone())),
        _ => Err(table_err(table, format!("column `{col}`: expected {ty:?}"))),
    }
}

impl Database {
    /// Parses the JSON database format described in the module docs.
    pub fn from_json(src: &str) -> Result<Database, DbError> {
        let root: serde_json::Value = serde_json::from_str(src)?;
        let tables = root.get("tables").and_then(|t| t.as_object()).ok_or(DbError::Shape)?;
        let mut out = BTreeMap::new();
        for (name, spec) in tables {
            let kind = match spec.get("kind").and_then(|k| k.as_str()) {
                Some("set") | None => CollKind::Set,
                Some("bag") => CollKind::Bag,
                Some(other) => {
                    return Err(table_err(name, format!("unknown kind `{other}`")));
                }
            };
            let ty_src = spec
                .get("type")
                .and_then(|t| t.as_str())
                .ok_or_else(|| table_err(name, "missing `type`"))?;
            let row_type = parse_type(ty_src)
                .map_err(|e| table_err(name, format!("bad row type: {}", e.msg)))?;
            let cols: Vec<(Name, AtomType)> = match &row_type {
                TypeExpr::Record(fields) => fields
                    .iter()
                    .map(|(l, t)| match t {
                        TypeExpr::Atom(a) => Ok((l.clone(), *a)),
                        _ => Err(table_err(name, format!("column `{l}` is not atomic"))),
                    })
                    .collect::<Result<_, _>>()?,
                _ => return Err(table_err(name, "row type must be a record of atoms")),
            };
            let rows = spec
                .get("rows")
                .and_then(|r| r.as_array())
                .ok_or_else(|| table_err(name, "missing `rows` array"))?;
            let mut set = BTreeSet::new();
            let mut bag = BTreeMap::new();
            for row in rows {
                let obj = row
                    .as_object()
                    .ok_or_else(|| table_err(name, "row is not an object"))?;
                let mut rec = BTreeMap::new();
                for (col, aty) in &cols {
                    let cell = obj
                        .get(col)
                        .ok_or_else(|| table_err(name, format!("row missing column `{col}`")))?;
                    rec.insert(col.clone(), cell_value(name, col, aty, cell)?);
                }
                if let Some(extra) = obj.keys().find(|k| !cols.iter().any(|(c, _)| c == *k)) {
                    return Err(table_err(name, format!("row has unknown column `{extra}`")));
                }
                match kind {
                    CollKind::Set => {
                        set.insert(Value::Rec(rec));
                    }
                    CollKind::Bag => bag_insert(&mut bag, Value::Rec(rec), 1),
                }
            }
            let value = match kind {
                CollKind::Set => Value::Set(set),
                CollKind::Bag => Value::Bag(bag),
            };
            out.insert(name.clone(), Table { kind, row_type, value });
        }
        Ok(Database { tables: out })
    }

    /// The value environment binding each table name to its contents.
    pub fn value_env(&self) -> Env {
        self.tables.iter().map(|(n, t)| (n.clone(), t.value.clone())).collect()
    }

    /// `(name, collection type)` pairs for extending a typing environment.
    pub fn type_entries(&self) -> Vec<(Name, TypeExpr)> {
        self.tables.iter().map(|(n, t)| (n.clone(), t.coll_type())).collect()
    }
}
