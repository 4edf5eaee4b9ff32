//! Recognition of SQL-shaped queries and deterministic SQL emission.
//!
//! Normalization leaves relation-typed terms in a fragment that maps directly
//! onto flat SQL: unions of select blocks, where each block is a chain of
//! generators over named tables (possibly under `dedup`/`promote`), a
//! conjunction of scalar guards, and a head building one output row.
//! [`recognize`] matches that fragment and produces a [`NormalQuery`];
//! [`to_sql`] prints it as a single ANSI-style statement. Callers are
//! expected to hand `recognize` a normal form — it matches shapes and does
//! not re-run the rewriter — and anything outside the fragment is reported
//! as [`NotTranslatable`] with the offending position.
//!
//! Emission conventions: set `union` becomes `UNION`, bag `union` becomes
//! `UNION ALL`, `dedup` becomes `SELECT DISTINCT`, and `promote` re-reads a
//! set query as a bag of multiplicity one (also via `DISTINCT`, since a
//! plain projection may emit duplicate rows). Scalar heads are labelled
//! `_1`, zero-field rows `_dummy`, booleans print as `0`/`1`, and string
//! literals are single-quoted with quote doubling.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ast::{fresh, AtomType, CollKind, Cst, Name, Path, Term, TypeExpr};
use crate::pretty::pretty_type;
use crate::rewrite::render_path;
use crate::typing::{infer, infer_in, TypeEnv};

/// A subterm that cannot be turned into SQL, with the path to it and a
/// human-readable reason.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not SQL-translatable at {}: {reason}", render_path(.position))]
pub struct NotTranslatable {
    pub position: Path,
    pub reason: String,
}

fn nt(position: Path, reason: impl Into<String>) -> NotTranslatable {
    NotTranslatable { position, reason: reason.into() }
}

/// The output row shape of a query: named atomic columns, one anonymous
/// scalar column (`_1`), or the zero-field row (`_dummy`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowShape {
    Columns(Vec<(String, AtomType)>),
    Scalar(AtomType),
    Unit,
}

/// Classifies an element type as a flat SQL row, if it is one.
pub fn row_shape(elem: &TypeExpr) -> Option<RowShape> {
    match elem {
        TypeExpr::Atom(a) => Some(RowShape::Scalar(*a)),
        TypeExpr::Record(fields) if fields.is_empty() => Some(RowShape::Unit),
        TypeExpr::Record(fields) => {
            let mut cols = Vec::new();
            for (label, ty) in fields {
                match ty {
                    TypeExpr::Atom(a) => cols.push((label.clone(), *a)),
                    _ => return None,
                }
            }
            Some(RowShape::Columns(cols))
        }
        _ => None,
    }
}

/// A scalar expression over the generator-bound rows of a select block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SqlExpr {
    /// An integer, string, or boolean literal.
    Lit(Cst),
    /// `alias.column`; scalar-rowed aliases use the column `_1`.
    Col(Name, String),
    /// An applied primitive: `and`, `or`, `not`, `+`, `=`, `<=`.
    App(Cst, Vec<SqlExpr>),
    /// An emptiness test on a subquery: `NOT EXISTS (…)`.
    NotExists(Box<NormalQuery>),
}

/// One generator source in a `FROM` list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    /// A named database table.
    Table(Name),
    /// A parenthesized subquery (`dedup` of a bag query as a set source, or
    /// `promote` of a set query as a bag source).
    Sub(Box<NormalQuery>),
}

/// The head of a select block: what one output row looks like.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    /// A record head: labelled scalar columns.
    Columns(Vec<(String, SqlExpr)>),
    /// A bare scalar head, emitted as the column `_1`.
    Scalar(SqlExpr),
    /// The zero-field row, emitted as `1 AS _dummy`.
    Unit,
}

/// One select block: generators, flattened guards, and a row head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectComp {
    pub kind: CollKind,
    pub distinct: bool,
    /// `(alias, source)` pairs, outermost generator first. Aliases are
    /// unique within the block.
    pub generators: Vec<(Name, Source)>,
    /// Guard conjuncts, in the order the `where` layers were crossed.
    pub guards: Vec<SqlExpr>,
    pub head: Head,
}

/// A query in the SQL-translatable fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormalQuery {
    /// The empty set or bag, with the row shape its type dictates.
    Empty { kind: CollKind, shape: RowShape },
    /// Set union (`UNION`) or bag union (`UNION ALL`).
    Union { kind: CollKind, left: Box<NormalQuery>, right: Box<NormalQuery> },
    Select(SelectComp),
    /// `dedup` of a bag query: a set query.
    Dedup(Box<NormalQuery>),
    /// `promote` of a set query: a bag query with every multiplicity one.
    Promote(Box<NormalQuery>),
}

/// Matches a relation-typed term against the SQL-translatable fragment.
///
/// The term must typecheck in `env` at a set or bag of flat rows (records of
/// atoms, or bare atoms for single-column queries). The match is purely
/// structural; run the rewriter first if the term may contain redexes.
pub fn recognize(env: &TypeEnv, t: &Term) -> Result<NormalQuery, NotTranslatable> {
    let ty = infer(env, t)
        .map_err(|e| nt(Vec::new(), format!("query does not typecheck: {e}")))?;
    let kind = match &ty {
        TypeExpr::Coll(kind, elem) => {
            if row_shape(elem).is_none() {
                return Err(nt(
                    Vec::new(),
                    format!(
                        "rows of type {} are not flat records of atomic fields",
                        pretty_type(elem)
                    ),
                ));
            }
            *kind
        }
        _ => {
            return Err(nt(
                Vec::new(),
                format!(
                    "query has type {}, but SQL needs a set or bag of flat rows",
                    pretty_type(&ty)
                ),
            ));
        }
    };
    Recognizer { env, scope: Vec::new() }.query(t, &Vec::new(), kind)
}

/// Convenience: [`recognize`] then [`to_sql`].
pub fn translate(env: &TypeEnv, t: &Term) -> Result<String, NotTranslatable> {
    recognize(env, t).map(|q| to_sql(&q))
}

fn at(path: &Path, i: usize) -> Path {
    let mut p = path.clone();
    p.push(i);
    p
}

fn shape_name(t: &Term) -> &'static str {
    match t {
        Term::Var(_) => "a variable",
        Term::Hole(_) => "a hole",
        Term::Const(..) => "a primitive application",
        Term::Record(_) => "a record",
        Term::Proj(..) => "a projection",
        Term::Lam(..) => "a lambda",
        Term::App(..) => "an application",
        Term::Empty(..) => "an empty collection",
        Term::Single(..) => "a singleton",
        Term::Union(..) => "a union",
        Term::Comp(..) => "a comprehension",
        Term::Where(..) => "a guard",
        Term::IsEmpty(_) => "an emptiness test",
        Term::Dedup(_) => "a deduplication",
        Term::Promote(_) => "a promotion",
    }
}

struct Recognizer<'a> {
    env: &'a TypeEnv,
    /// Generator aliases in scope, innermost last, with their row types.
    scope: Vec<(Name, TypeExpr)>,
}

impl<'a> Recognizer<'a> {
    fn stack(&self) -> Vec<(Name, Option<TypeExpr>)> {
        self.scope.iter().map(|(n, ty)| (n.clone(), Some(ty.clone()))).collect()
    }

    fn alias_row(&self, x: &Name) -> Option<&TypeExpr> {
        self.scope.iter().rev().find(|(n, _)| n == x).map(|(_, ty)| ty)
    }

    /// Names a fresh alias must avoid: enclosing aliases, table names, and
    /// the free variables of the term still to be walked.
    fn avoid(&self, rest: &Term) -> BTreeSet<Name> {
        let mut avoid = self.avoid_base();
        avoid.extend(rest.free_vars());
        avoid
    }

    fn avoid_base(&self) -> BTreeSet<Name> {
        let mut avoid: BTreeSet<Name> = self.scope.iter().map(|(n, _)| n.clone()).collect();
        avoid.extend(self.env.vars.keys().cloned());
        avoid
    }

    fn query(
        &mut self,
        t: &Term,
        path: &Path,
        kind: CollKind,
    ) -> Result<NormalQuery, NotTranslatable> {
        match t {
            Term::Empty(k, ann) => {
                if *k != kind {
                    return Err(nt(path.clone(), format!("{k} literal where a {kind} query is needed")));
                }
                let elem = match ann {
                    Some(elem) => (**elem).clone(),
                    None => match infer_in(self.env, &self.stack(), t) {
                        Ok(TypeExpr::Coll(_, elem)) => *elem,
                        _ => {
                            return Err(nt(
                                path.clone(),
                                "cannot determine the row type of an unannotated empty literal",
                            ));
                        }
                    },
                };
                let shape = row_shape(&elem).ok_or_else(|| {
                    nt(path.clone(), format!("rows of type {} are not flat", pretty_type(&elem)))
                })?;
                Ok(NormalQuery::Empty { kind, shape })
            }
            Term::Union(k, l, r) => {
                if *k != kind {
                    return Err(nt(path.clone(), format!("{k} union where a {kind} query is needed")));
                }
                Ok(NormalQuery::Union {
                    kind,
                    left: Box::new(self.query(l, &at(path, 0), kind)?),
                    right: Box::new(self.query(r, &at(path, 1), kind)?),
                })
            }
            Term::Dedup(inner) => {
                if kind != CollKind::Set {
                    return Err(nt(path.clone(), "dedup yields a set where a bag query is needed"));
                }
                Ok(NormalQuery::Dedup(Box::new(self.query(inner, &at(path, 0), CollKind::Bag)?)))
            }
            Term::Promote(inner) => {
                if kind != CollKind::Bag {
                    return Err(nt(path.clone(), "promote yields a bag where a set query is needed"));
                }
                Ok(NormalQuery::Promote(Box::new(self.query(inner, &at(path, 0), CollKind::Set)?)))
            }
            Term::Var(x) => {
                // A bare table read: select every row under a fresh alias.
                if self.alias_row(x).is_some() {
                    return Err(nt(
                        path.clone(),
                        format!("row variable `{x}` is not a query by itself"),
                    ));
                }
                let (elem, k) = self.table_type(x, path)?;
                if k != kind {
                    return Err(nt(
                        path.clone(),
                        format!("table `{x}` is a {k}, but the context needs a {kind}"),
                    ));
                }
                let alias = fresh("x", &self.avoid(t));
                Ok(NormalQuery::Select(SelectComp {
                    kind,
                    distinct: false,
                    generators: vec![(alias.clone(), Source::Table(x.clone()))],
                    guards: Vec::new(),
                    head: var_head(&alias, &elem),
                }))
            }
            Term::Single(..) | Term::Comp(..) | Term::Where(..) => {
                Ok(NormalQuery::Select(self.select(t, path, kind)?))
            }
            other => Err(nt(
                path.clone(),
                format!("{} is not a SQL-shaped query", shape_name(other)),
            )),
        }
    }

    /// The row type and kind of the named table.
    fn table_type(&self, x: &Name, path: &Path) -> Result<(TypeExpr, CollKind), NotTranslatable> {
        let ty = self
            .env
            .vars
            .get(x)
            .ok_or_else(|| nt(path.clone(), format!("unbound variable `{x}`")))?;
        match ty {
            TypeExpr::Coll(k, elem) => {
                if row_shape(elem).is_none() {
                    return Err(nt(
                        path.clone(),
                        format!("table `{x}` has non-flat rows of type {}", pretty_type(elem)),
                    ));
                }
                Ok(((**elem).clone(), *k))
            }
            _ => Err(nt(
                path.clone(),
                format!("`{x}` has type {}, not a table", pretty_type(ty)),
            )),
        }
    }

    /// Walks a generator/guard spine down to the head and assembles one
    /// select block. Shadowed binders are renamed so aliases stay unique.
    fn select(
        &mut self,
        t: &Term,
        path: &Path,
        kind: CollKind,
    ) -> Result<SelectComp, NotTranslatable> {
        let scope_base = self.scope.len();
        let mut generators: Vec<(Name, Source)> = Vec::new();
        let mut guards: Vec<SqlExpr> = Vec::new();
        let mut cur = t.clone();
        let mut cpath = path.clone();
        let result = loop {
            match cur {
                Term::Where(k, cond, body) => {
                    if k != kind {
                        break Err(nt(cpath.clone(), format!("{k} guard inside a {kind} query")));
                    }
                    guards.push(self.expr(&cond, &at(&cpath, 0))?);
                    cpath.push(1);
                    cur = *body;
                }
                Term::Comp(k, head, x, src) => {
                    if k != kind {
                        break Err(nt(
                            cpath.clone(),
                            format!("{k} comprehension inside a {kind} query"),
                        ));
                    }
                    let (source, elem) = self.source(&src, &at(&cpath, 1), kind)?;
                    // Rename the binder when it collides with an enclosing
                    // alias, a table name, or another free variable of the
                    // head (its own occurrences don't count).
                    let mut avoid = self.avoid_base();
                    let mut head_fv = head.free_vars();
                    head_fv.remove(&x);
                    avoid.extend(head_fv);
                    let (alias, head) = if avoid.contains(&x) {
                        let a = fresh(&x, &avoid);
                        let renamed = head.subst(&x, &Term::var(a.clone()));
                        (a, renamed)
                    } else {
                        (x, *head)
                    };
                    generators.push((alias.clone(), source));
                    self.scope.push((alias, elem));
                    cpath.push(0);
                    cur = head;
                }
                Term::Single(_, e) => {
                    let head = self.head(&e, &at(&cpath, 0))?;
                    break Ok(SelectComp { kind, distinct: false, generators, guards, head });
                }
                // A collection-valued head that is itself a source shape
                // (`dedup b`, `promote q`, or a table) contributes its rows
                // directly: draw from it and return the drawn row.
                Term::Var(_) | Term::Dedup(_) | Term::Promote(_) => {
                    if let Term::Var(x) = &cur {
                        if self.alias_row(x).is_some() {
                            break Err(nt(
                                cpath.clone(),
                                format!("head must build a row, but `{x}` is a whole collection"),
                            ));
                        }
                    }
                    let (source, elem) = self.source(&cur, &cpath, kind)?;
                    let alias = fresh("x", &self.avoid(&cur));
                    generators.push((alias.clone(), source));
                    let head = var_head(&alias, &elem);
                    break Ok(SelectComp { kind, distinct: false, generators, guards, head });
                }
                ref other => {
                    break Err(nt(
                        cpath.clone(),
                        format!("{} cannot be the head of a select block", shape_name(other)),
                    ));
                }
            }
        };
        self.scope.truncate(scope_base);
        result
    }

    /// Matches one generator source and returns it with its row type.
    fn source(
        &mut self,
        src: &Term,
        path: &Path,
        kind: CollKind,
    ) -> Result<(Source, TypeExpr), NotTranslatable> {
        match (src, kind) {
            (Term::Var(x), _) => {
                if self.alias_row(x).is_some() {
                    return Err(nt(
                        path.clone(),
                        format!("generator cannot draw from row variable `{x}`"),
                    ));
                }
                let (elem, k) = self.table_type(x, path)?;
                if k != kind {
                    return Err(nt(
                        path.clone(),
                        format!("table `{x}` is a {k}, but the generator needs a {kind}"),
                    ));
                }
                Ok((Source::Table(x.clone()), elem))
            }
            (Term::Dedup(inner), CollKind::Set) => {
                let q = self.query(inner, &at(path, 0), CollKind::Bag)?;
                let elem = self.source_elem(src, path)?;
                Ok((Source::Sub(Box::new(NormalQuery::Dedup(Box::new(q)))), elem))
            }
            (Term::Promote(inner), CollKind::Bag) => {
                let q = self.query(inner, &at(path, 0), CollKind::Set)?;
                let elem = self.source_elem(src, path)?;
                Ok((Source::Sub(Box::new(NormalQuery::Promote(Box::new(q)))), elem))
            }
            (Term::Dedup(_), CollKind::Bag) => {
                Err(nt(path.clone(), "dedup yields a set, but the generator needs a bag"))
            }
            (Term::Promote(_), CollKind::Set) => {
                Err(nt(path.clone(), "promote yields a bag, but the generator needs a set"))
            }
            (other, _) => Err(nt(
                path.clone(),
                format!(
                    "{} cannot be a generator source; only tables, dedup of a bag query, \
                     and promote of a set query can",
                    shape_name(other)
                ),
            )),
        }
    }

    /// Row type of a non-table generator source, via type inference under
    /// the current aliases.
    fn source_elem(&self, src: &Term, path: &Path) -> Result<TypeExpr, NotTranslatable> {
        match infer_in(self.env, &self.stack(), src) {
            Ok(TypeExpr::Coll(_, elem)) => {
                if row_shape(&elem).is_none() {
                    return Err(nt(
                        path.clone(),
                        format!("source rows of type {} are not flat", pretty_type(&elem)),
                    ));
                }
                Ok(*elem)
            }
            Ok(ty) => Err(nt(
                path.clone(),
                format!("generator source has type {}, not a collection", pretty_type(&ty)),
            )),
            Err(e) => Err(nt(path.clone(), format!("generator source does not typecheck: {e}"))),
        }
    }

    fn head(&mut self, e: &Term, path: &Path) -> Result<Head, NotTranslatable> {
        match e {
            Term::Record(fields) if fields.is_empty() => Ok(Head::Unit),
            Term::Record(fields) => {
                let mut cols = Vec::new();
                for (i, (label, fe)) in fields.iter().enumerate() {
                    cols.push((label.clone(), self.expr(fe, &at(path, i))?));
                }
                Ok(Head::Columns(cols))
            }
            Term::Var(x) => match self.alias_row(x) {
                Some(TypeExpr::Record(fields)) if fields.is_empty() => Ok(Head::Unit),
                Some(TypeExpr::Record(fields)) => {
                    let cols = fields
                        .iter()
                        .map(|(l, _)| (l.clone(), SqlExpr::Col(x.clone(), l.clone())))
                        .collect();
                    Ok(Head::Columns(cols))
                }
                _ => Ok(Head::Scalar(self.expr(e, path)?)),
            },
            _ => Ok(Head::Scalar(self.expr(e, path)?)),
        }
    }

    /// Matches a scalar expression over the aliases in scope.
    fn expr(&mut self, t: &Term, path: &Path) -> Result<SqlExpr, NotTranslatable> {
        match t {
            Term::Const(c, args) if args.is_empty() && c.is_literal() => Ok(SqlExpr::Lit(c.clone())),
            Term::Const(c, args) => {
                let mut rendered = Vec::new();
                for (i, a) in args.iter().enumerate() {
                    rendered.push(self.expr(a, &at(path, i))?);
                }
                Ok(SqlExpr::App(c.clone(), rendered))
            }
            Term::Var(x) => match self.alias_row(x) {
                Some(TypeExpr::Atom(_)) => Ok(SqlExpr::Col(x.clone(), "_1".into())),
                Some(_) => Err(nt(
                    path.clone(),
                    format!("row variable `{x}` used where a scalar is needed"),
                )),
                None => Err(nt(
                    path.clone(),
                    format!("variable `{x}` is not bound by a generator, so it has no SQL form"),
                )),
            },
            Term::Proj(base, label) => match &**base {
                Term::Var(x) => match self.alias_row(x) {
                    Some(TypeExpr::Record(fields)) => {
                        if fields.iter().any(|(l, _)| l == label) {
                            Ok(SqlExpr::Col(x.clone(), label.clone()))
                        } else {
                            Err(nt(path.clone(), format!("row `{x}` has no column `{label}`")))
                        }
                    }
                    Some(_) => Err(nt(path.clone(), format!("`{x}` is not a record row"))),
                    None => Err(nt(
                        path.clone(),
                        format!("projection base `{x}` is not a generator-bound row"),
                    )),
                },
                other => Err(nt(
                    at(path, 0),
                    format!("projection base must be a bound row variable, not {}", shape_name(other)),
                )),
            },
            Term::IsEmpty(arg) => {
                let q = self.query(arg, &at(path, 0), CollKind::Set)?;
                Ok(SqlExpr::NotExists(Box::new(q)))
            }
            other => Err(nt(
                path.clone(),
                format!("{} cannot appear in a scalar SQL expression", shape_name(other)),
            )),
        }
    }
}

/// The head that returns a whole source row under `alias`.
fn var_head(alias: &Name, elem: &TypeExpr) -> Head {
    match elem {
        TypeExpr::Atom(_) => Head::Scalar(SqlExpr::Col(alias.clone(), "_1".into())),
        TypeExpr::Record(fields) if fields.is_empty() => Head::Unit,
        TypeExpr::Record(fields) => Head::Columns(
            fields.iter().map(|(l, _)| (l.clone(), SqlExpr::Col(alias.clone(), l.clone()))).collect(),
        ),
        _ => Head::Unit, // unreachable: sources are checked flat before this
    }
}

/// Prints a recognized query as one SQL statement. Deterministic: equal
/// queries print identically.
pub fn to_sql(q: &NormalQuery) -> String {
    match q {
        NormalQuery::Empty { shape, .. } => empty_sql(shape),
        NormalQuery::Union { kind, left, right } => {
            let op = match kind {
                CollKind::Set => "UNION",
                CollKind::Bag => "UNION ALL",
            };
            format!("{} {} {}", to_sql(left), op, to_sql(right))
        }
        NormalQuery::Select(sc) => select_sql(sc, false),
        // Both eliminate duplicates: dedup by definition, promote because the
        // set it reads has each element once.
        NormalQuery::Dedup(inner) => sql_distinct(inner),
        NormalQuery::Promote(inner) => sql_distinct(inner),
    }
}

/// SQL for `q` with duplicate rows removed.
fn sql_distinct(q: &NormalQuery) -> String {
    match q {
        NormalQuery::Select(sc) => select_sql(sc, true),
        // No rows to deduplicate.
        NormalQuery::Empty { .. } => to_sql(q),
        // UNION already removes duplicates.
        NormalQuery::Union { kind: CollKind::Set, .. } => to_sql(q),
        NormalQuery::Union { kind: CollKind::Bag, .. } => {
            format!("SELECT DISTINCT * FROM ({})", to_sql(q))
        }
        NormalQuery::Dedup(_) => to_sql(q),
        NormalQuery::Promote(inner) => sql_distinct(inner),
    }
}

fn sql_atom(a: AtomType) -> &'static str {
    match a {
        AtomType::Int | AtomType::Bool => "INT",
        AtomType::String => "TEXT",
    }
}

fn empty_sql(shape: &RowShape) -> String {
    let cols = match shape {
        RowShape::Columns(cols) => cols
            .iter()
            .map(|(l, a)| format!("CAST(NULL AS {}) AS {}", sql_atom(*a), l))
            .collect::<Vec<_>>()
            .join(", "),
        RowShape::Scalar(a) => format!("CAST(NULL AS {}) AS _1", sql_atom(*a)),
        RowShape::Unit => "1 AS _dummy".to_string(),
    };
    format!("SELECT {cols} WHERE 1=0")
}

fn select_sql(sc: &SelectComp, force_distinct: bool) -> String {
    let mut s = String::from("SELECT ");
    if sc.distinct || force_distinct {
        s.push_str("DISTINCT ");
    }
    match &sc.head {
        Head::Columns(cols) => {
            let rendered = cols
                .iter()
                .map(|(l, e)| format!("{} AS {}", render_expr(e, false), l))
                .collect::<Vec<_>>()
                .join(", ");
            s.push_str(&rendered);
        }
        Head::Scalar(e) => {
            s.push_str(&format!("{} AS _1", render_expr(e, false)));
        }
        Head::Unit => s.push_str("1 AS _dummy"),
    }
    if !sc.generators.is_empty() {
        let items = sc
            .generators
            .iter()
            .map(|(alias, src)| match src {
                Source::Table(t) => format!("{t} AS {alias}"),
                Source::Sub(q) => format!("({}) AS {alias}", to_sql(q)),
            })
            .collect::<Vec<_>>()
            .join(", ");
        s.push_str(" FROM ");
        s.push_str(&items);
    }
    if !sc.guards.is_empty() {
        s.push_str(" WHERE ");
        let protect = sc.guards.len() > 1;
        let rendered = sc
            .guards
            .iter()
            .map(|g| render_expr(g, protect))
            .collect::<Vec<_>>()
            .join(" AND ");
        s.push_str(&rendered);
    }
    s
}

/// Renders a scalar expression. With `protect`, compound expressions are
/// parenthesized so they can sit inside a larger one.
fn render_expr(e: &SqlExpr, protect: bool) -> String {
    match e {
        SqlExpr::Lit(Cst::Int(i)) => i.to_string(),
        SqlExpr::Lit(Cst::Bool(b)) => if *b { "1" } else { "0" }.to_string(),
        SqlExpr::Lit(Cst::Str(s)) => format!("'{}'", s.replace('\'', "''")),
        SqlExpr::Lit(c) => c.name().to_string(), // unreachable: only literals are stored
        SqlExpr::Col(alias, col) => format!("{alias}.{col}"),
        SqlExpr::App(op, args) => {
            let body = match op {
                Cst::Not => format!("NOT {}", render_expr(&args[0], true)),
                _ => {
                    let sym = match op {
                        Cst::And => "AND".to_string(),
                        Cst::Or => "OR".to_string(),
                        Cst::Add => "+".to_string(),
                        Cst::Eq => "=".to_string(),
                        Cst::Le => "<=".to_string(),
                        _ => op.name(),
                    };
                    args.iter()
                        .map(|a| render_expr(a, true))
                        .collect::<Vec<_>>()
                        .join(&format!(" {sym} "))
                }
            };
            if protect {
                format!("({body})")
            } else {
                body
            }
        }
        SqlExpr::NotExists(q) => {
            let body = format!("NOT EXISTS ({})", to_sql(q));
            if protect {
                format!("({body})")
            } else {
                body
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{eval, Database, Value};
    use crate::parse::parse_term;
    use crate::rewrite::{is_normal, normalize, Strategy};
    use crate::typing::Calculus;

    fn env() -> TypeEnv {
        let row = TypeExpr::record(vec![
            ("id".into(), TypeExpr::Atom(AtomType::Int)),
            ("name".into(), TypeExpr::Atom(AtomType::String)),
        ]);
        let idrow = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
        TypeEnv::new(Calculus::SetBag)
            .with_var("t", TypeExpr::set_of(idrow.clone()))
            .with_var("u", TypeExpr::set_of(row))
            .with_var("b", TypeExpr::bag_of(idrow))
    }

    fn sql(src: &str) -> String {
        let t = parse_term(src).expect("parse").term;
        translate(&env(), &t).expect("translate")
    }

    fn err(src: &str) -> NotTranslatable {
        let t = parse_term(src).expect("parse").term;
        translate(&env(), &t).expect_err("should not translate")
    }

    #[test]
    fn single_table_projection() {
        assert_eq!(sql("for (x <- t) {<id = x.id>}"), "SELECT x.id AS id FROM t AS x");
    }

    #[test]
    fn scalar_head_gets_anonymous_column() {
        assert_eq!(sql("for (x <- t) {x.id}"), "SELECT x.id AS _1 FROM t AS x");
    }

    #[test]
    fn guard_becomes_where() {
        assert_eq!(
            sql("for (x <- t) (where x.id <= 2 do {<id = x.id>})"),
            "SELECT x.id AS id FROM t AS x WHERE x.id <= 2"
        );
    }

    #[test]
    fn empty_set_of_rows() {
        assert_eq!(sql("{} : {<id : Int>}"), "SELECT CAST(NULL AS INT) AS id WHERE 1=0");
        assert_eq!(sql("{} : {Int}"), "SELECT CAST(NULL AS INT) AS _1 WHERE 1=0");
        assert_eq!(
            sql("{} : {<id : Int, name : String>}"),
            "SELECT CAST(NULL AS INT) AS id, CAST(NULL AS TEXT) AS name WHERE 1=0"
        );
    }

    #[test]
    fn dedup_of_bag_comprehension_is_select_distinct() {
        assert_eq!(
            sql("dedup (bagfor (x <- b) {|<id = x.id>|})"),
            "SELECT DISTINCT x.id AS id FROM b AS x"
        );
    }

    #[test]
    fn set_union_and_bag_union() {
        assert_eq!(
            sql("(for (x <- t) {x.id}) union (for (y <- t) {y.id + 1})"),
            "SELECT x.id AS _1 FROM t AS x UNION SELECT y.id + 1 AS _1 FROM t AS y"
        );
        assert_eq!(
            sql("(bagfor (x <- b) {|x.id|}) uplus (bagfor (y <- b) {|y.id|})"),
            "SELECT x.id AS _1 FROM b AS x UNION ALL SELECT y.id AS _1 FROM b AS y"
        );
    }

    #[test]
    fn nested_generators_join_with_conjoined_guards() {
        assert_eq!(
            sql("for (x <- t) for (y <- u) (where x.id = y.id do (where y.id <= 3 do \
                 {<a = x.id, b = y.name>}))"),
            "SELECT x.id AS a, y.name AS b FROM t AS x, u AS y \
             WHERE (x.id = y.id) AND (y.id <= 3)"
        );
    }

    #[test]
    fn promote_reads_a_set_as_a_bag_of_distinct_rows() {
        assert_eq!(sql("promote t"), "SELECT DISTINCT x.id AS id FROM t AS x");
        assert_eq!(
            sql("promote (for (x <- t) {<id = x.id>})"),
            "SELECT DISTINCT x.id AS id FROM t AS x"
        );
    }

    #[test]
    fn promote_source_becomes_a_subquery() {
        assert_eq!(
            sql("bagfor (x <- promote t) {|<id = x.id>|}"),
            "SELECT x.id AS id FROM (SELECT DISTINCT x.id AS id FROM t AS x) AS x"
        );
    }

    #[test]
    fn dedup_source_becomes_a_subquery() {
        assert_eq!(
            sql("for (x <- dedup b) {<id = x.id>}"),
            "SELECT x.id AS id FROM (SELECT DISTINCT x.id AS id FROM b AS x) AS x"
        );
    }

    #[test]
    fn bare_table_reads_select_all() {
        assert_eq!(sql("t"), "SELECT x.id AS id FROM t AS x");
        assert_eq!(sql("b"), "SELECT x.id AS id FROM b AS x");
    }

    #[test]
    fn singleton_needs_no_from_clause() {
        assert_eq!(sql("{<id = 1>}"), "SELECT 1 AS id");
        assert_eq!(sql("{|<id = 7>|}"), "SELECT 7 AS id");
    }

    #[test]
    fn emptiness_guard_is_not_exists() {
        assert_eq!(
            sql("for (x <- t) (where (empty t) do {x.id})"),
            "SELECT x.id AS _1 FROM t AS x WHERE NOT EXISTS (SELECT x_1.id AS id FROM t AS x_1)"
        );
    }

    #[test]
    fn unit_rows_emit_a_dummy_column() {
        assert_eq!(sql("for (x <- t) {<>}"), "SELECT 1 AS _dummy FROM t AS x");
        assert_eq!(
            sql("where (empty (for (x <- t) {<>})) do {<id = 1>}"),
            "SELECT 1 AS id WHERE NOT EXISTS (SELECT 1 AS _dummy FROM t AS x)"
        );
    }

    #[test]
    fn whole_row_head_expands_to_columns() {
        assert_eq!(sql("for (x <- u) {x}"), "SELECT x.id AS id, x.name AS name FROM u AS x");
    }

    #[test]
    fn collection_valued_head_is_drawn_from() {
        // The inner select's alias is scoped to its subquery, so reusing the
        // name for the outer FROM item is unambiguous.
        assert_eq!(
            sql("for (x <- t) (dedup b)"),
            "SELECT x_1.id AS id FROM t AS x, (SELECT DISTINCT x_1.id AS id FROM b AS x_1) AS x_1"
        );
    }

    #[test]
    fn shadowed_binder_is_renamed() {
        assert_eq!(
            sql("for (x <- t) for (x <- t) {<id = x.id>}"),
            "SELECT x_1.id AS id FROM t AS x, t AS x_1"
        );
    }

    #[test]
    fn string_literals_and_booleans_render_sql_style() {
        assert_eq!(
            sql("for (x <- u) (where x.name = \"O'Brien\" do {<ok = true>})"),
            "SELECT 1 AS ok FROM u AS x WHERE x.name = 'O''Brien'"
        );
    }

    #[test]
    fn dedup_over_a_bag_union_wraps_a_subquery() {
        assert_eq!(
            sql("dedup ((bagfor (x <- b) {|x.id|}) uplus (bagfor (y <- b) {|y.id|}))"),
            "SELECT DISTINCT * FROM (SELECT x.id AS _1 FROM b AS x UNION ALL \
             SELECT y.id AS _1 FROM b AS y)"
        );
    }

    #[test]
    fn rejects_non_collection_and_non_flat_types() {
        let e = err("\\x : Int. x");
        assert!(e.position.is_empty());
        assert!(e.reason.contains("Int -> Int"), "{}", e.reason);

        let e = err("{{1}}");
        assert!(e.reason.contains("not flat"), "{}", e.reason);
    }

    #[test]
    fn rejects_bad_sources_and_heads_with_positions() {
        let e = err("for (x <- {<id = 1>}) {<id = x.id>}");
        assert_eq!(e.position, vec![1]);
        assert!(e.reason.contains("generator source"), "{}", e.reason);

        let e = err("for (x <- t) {(\\y : Int. y) x.id}");
        assert!(e.reason.contains("scalar SQL expression"), "{}", e.reason);
    }

    #[test]
    fn rejects_free_scalar_variables() {
        let t = parse_term("for (x <- t) {x.id + n}").unwrap().term;
        let env = env().with_var("n", TypeExpr::Atom(AtomType::Int));
        let e = translate(&env, &t).expect_err("free scalar");
        assert!(e.reason.contains("not bound by a generator"), "{}", e.reason);
    }

    #[test]
    fn flagship_normal_form_round_trip() {
        // The motivating pipeline: normalize a nested query, then emit SQL.
        let t = parse_term("for (y <- for (x <- t) {{<id = x.id>}}) y").unwrap().term;
        let env = env();
        let nf = normalize(&env, &t, Strategy::LeftmostOutermost, 1_000).unwrap().term;
        assert!(is_normal(&env, &nf));
        assert_eq!(translate(&env, &nf).unwrap(), "SELECT x.id AS id FROM t AS x");
    }

    // ---- agreement with a real SQL engine --------------------------------

    fn test_db() -> Database {
        Database::from_json(
            r#"{
              "tables": {
                "t": {"kind": "set", "type": "<id : Int>",
                       "rows": [{"id": 1}, {"id": 2}, {"id": 3}]},
                "u": {"kind": "set", "type": "<id : Int, name : String>",
                       "rows": [{"id": 1, "name": "a"}, {"id": 2, "name": "b"}]},
                "b": {"kind": "bag", "type": "<id : Int>",
                       "rows": [{"id": 1}, {"id": 1}, {"id": 2}]}
              }
            }"#,
        )
        .expect("db")
    }

    fn load_sqlite(db: &Database) -> rusqlite::Connection {
        let conn = rusqlite::Connection::open_in_memory().expect("open");
        for (name, table) in &db.tables {
            let fields = match &table.row_type {
                TypeExpr::Record(fs) => fs.clone(),
                _ => panic!("non-record table row"),
            };
            let cols = fields
                .iter()
                .map(|(l, ty)| match ty {
                    TypeExpr::Atom(a) => format!("{l} {}", sql_atom(*a)),
                    _ => panic!("non-atomic column"),
                })
                .collect::<Vec<_>>()
                .join(", ");
            conn.execute_batch(&format!("CREATE TABLE {name} ({cols});")).expect("create");
            let mut insert_row = |row: &Value| {
                let Value::Rec(cells) = row else { panic!("non-record row") };
                let rendered = fields
                    .iter()
                    .map(|(l, _)| match &cells[l] {
                        Value::Int(i) => i.to_string(),
                        Value::Bool(bv) => if *bv { "1" } else { "0" }.to_string(),
                        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
                        other => panic!("non-atomic cell {other:?}"),
                    })
                    .collect::<Vec<_>>()
                    .join(", ");
                conn.execute_batch(&format!("INSERT INTO {name} VALUES ({rendered});"))
                    .expect("insert");
            };
            match &table.value {
                Value::Set(rows) => rows.iter().for_each(&mut insert_row),
                Value::Bag(rows) => {
                    for (row, mult) in rows {
                        for _ in 0..*mult {
                            insert_row(row);
                        }
                    }
                }
                other => panic!("non-collection table {other:?}"),
            }
        }
        conn
    }

    /// Reads the result rows of `sql` as a collection value of the query's
    /// element type. Set results are read modulo duplicates.
    fn sql_value(
        conn: &rusqlite::Connection,
        sql: &str,
        kind: CollKind,
        elem: &TypeExpr,
    ) -> Value {
        let mut stmt = conn.prepare(sql).expect("prepare");
        let ncols = stmt.column_count();
        let mut rows = stmt.query([]).expect("query");
        let mut out = Vec::new();
        while let Some(row) = rows.next().expect("row") {
            let value = match elem {
                TypeExpr::Record(fields) if fields.is_empty() => Value::Rec(Default::default()),
                TypeExpr::Record(fields) => {
                    let mut rec = std::collections::BTreeMap::new();
                    for (l, ty) in fields {
                        rec.insert(l.clone(), cell(row, l, ty));
                    }
                    Value::Rec(rec)
                }
                TypeExpr::Atom(_) => {
                    assert_eq!(ncols, 1);
                    cell(row, "_1", elem)
                }
                other => panic!("non-flat element {other:?}"),
            };
            out.push(value);
        }
        match kind {
            CollKind::Set => Value::Set(out.into_iter().collect()),
            CollKind::Bag => {
                let mut bag = std::collections::BTreeMap::new();
                for v in out {
                    *bag.entry(v).or_insert(0u64) += 1;
                }
                Value::Bag(bag)
            }
        }
    }

    fn cell(row: &rusqlite::Row<'_>, col: &str, ty: &TypeExpr) -> Value {
        match ty {
            TypeExpr::Atom(AtomType::Int) => Value::Int(row.get::<_, i64>(col).expect("int")),
            TypeExpr::Atom(AtomType::Bool) => Value::Bool(row.get::<_, i64>(col).expect("bool") != 0),
            TypeExpr::Atom(AtomType::String) => Value::Str(row.get::<_, String>(col).expect("str")),
            other => panic!("non-atomic column {other:?}"),
        }
    }

    #[test]
    fn sql_agrees_with_the_evaluator() {
        let db = test_db();
        let conn = load_sqlite(&db);
        let mut env = TypeEnv::new(Calculus::SetBag);
        for (n, ty) in db.type_entries() {
            env = env.with_var(n, ty);
        }
        let venv = db.value_env();
        let queries = [
            "for (x <- t) (where x.id <= 2 do {<id = x.id>})",
            "for (x <- t) for (y <- u) (where x.id = y.id do {<id = x.id, name = y.name>})",
            "(for (x <- t) {x.id}) union (for (y <- t) {y.id + 1})",
            "dedup (bagfor (x <- b) {|<id = x.id>|})",
            "bagfor (x <- b) {|<id = x.id + 1>|}",
            "(bagfor (x <- b) {|x.id|}) uplus (bagfor (y <- b) {|y.id|})",
            "promote (for (x <- t) {<id = x.id>})",
            "bagfor (x <- promote t) {|<id = x.id>|}",
            "for (x <- dedup b) {<id = x.id>}",
            "for (x <- t) (where (empty ({} : {<id : Int>})) do {x.id})",
            "for (x <- u) (where (not (empty (for (y <- t) (where y.id = x.id do {<>})))) \
             do {<name = x.name>})",
            "{} : {<id : Int>}",
        ];
        for src in queries {
            let t = parse_term(src).expect("parse").term;
            let ty = infer(&env, &t).expect("type");
            let TypeExpr::Coll(kind, elem) = ty else { panic!("not a collection") };
            let expected = eval(Calculus::SetBag, &venv, &t).expect("eval");
            let sql = translate(&env, &t).expect("translate");
            let got = sql_value(&conn, &sql, kind, &elem);
            assert_eq!(got, expected, "query `{src}` — sql `{sql}`");
        }
    }
}
