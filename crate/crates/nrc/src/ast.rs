//! Core term and type representation for the query calculus.
//!
//! Terms form a higher-order nested relational calculus with two collection
//! kinds (sets and bags), records over atomic types, an emptiness test, and
//! the two kind-changing operators `dedup` (bag → set) and `promote`
//! (set → bag). Contexts are ordinary terms containing indexed holes `[p]`;
//! holes behave like distinguished free variables and are never bound.
//!
//! Records — in types and in terms — are kept in sorted label order at
//! construction time. Record types compare up to label-set equality, and the
//! canonical order makes derived structural equality implement exactly that
//! while keeping `Eq`/`Ord`/`Hash` mutually consistent.

use std::collections::BTreeSet;
use std::fmt;

/// Variable names. Fresh names are derived with [`fresh`].
pub type Name = String;

/// Hole indices for contexts, written `[p]` in the surface syntax.
pub type HoleId = String;

/// Which collection semantics a node lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollKind {
    Set,
    Bag,
}

impl fmt::Display for CollKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollKind::Set => write!(f, "set"),
            CollKind::Bag => write!(f, "bag"),
        }
    }
}

/// Atomic (base) types of the built-in signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomType {
    Bool,
    Int,
    String,
}

impl fmt::Display for AtomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomType::Bool => write!(f, "Bool"),
            AtomType::Int => write!(f, "Int"),
            AtomType::String => write!(f, "String"),
        }
    }
}

/// Types: atoms, functions, records, and collections.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeExpr {
    Atom(AtomType),
    Fun(Box<TypeExpr>, Box<TypeExpr>),
    /// Fields are sorted by label; construct through [`TypeExpr::record`].
    Record(Vec<(String, TypeExpr)>),
    Coll(CollKind, Box<TypeExpr>),
}

impl TypeExpr {
    pub fn fun(dom: TypeExpr, cod: TypeExpr) -> TypeExpr {
        TypeExpr::Fun(Box::new(dom), Box::new(cod))
    }

    /// Record type with fields canonicalized to sorted label order.
    /// Labels must be distinct (the parser reports duplicates before here).
    pub fn record(mut fields: Vec<(String, TypeExpr)>) -> TypeExpr {
        fields.sort_by(|a, b| a.0.cmp(&b.0));
        debug_assert!(fields.windows(2).all(|w| w[0].0 != w[1].0));
        TypeExpr::Record(fields)
    }

    pub fn coll(kind: CollKind, elem: TypeExpr) -> TypeExpr {
        TypeExpr::Coll(kind, Box::new(elem))
    }

    pub fn set_of(elem: TypeExpr) -> TypeExpr {
        TypeExpr::coll(CollKind::Set, elem)
    }

    pub fn bag_of(elem: TypeExpr) -> TypeExpr {
        TypeExpr::coll(CollKind::Bag, elem)
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, TypeExpr::Atom(_))
    }

    /// A relation type is a collection (of either kind) of records whose
    /// fields are all atomic. The degenerate empty record counts.
    pub fn is_relation(&self) -> bool {
        match self {
            TypeExpr::Coll(_, elem) => match elem.as_ref() {
                TypeExpr::Record(fields) => fields.iter().all(|(_, t)| t.is_atomic()),
                _ => false,
            },
            _ => false,
        }
    }
}

/// Constants of the built-in signature: literals plus the scalar operators.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cst {
    Bool(bool),
    Int(i64),
    Str(String),
    And,
    Or,
    Not,
    Add,
    Eq,
    Le,
}

impl Cst {
    /// Arity of the constant; literals are 0-ary.
    pub fn arity(&self) -> usize {
        match self {
            Cst::Bool(_) | Cst::Int(_) | Cst::Str(_) => 0,
            Cst::Not => 1,
            Cst::And | Cst::Or | Cst::Add | Cst::Eq | Cst::Le => 2,
        }
    }

    /// True for 0-ary value constants (the only normal constant forms).
    pub fn is_literal(&self) -> bool {
        self.arity() == 0
    }

    /// The display name used in call syntax and diagnostics.
    pub fn name(&self) -> String {
        match self {
            Cst::Bool(b) => b.to_string(),
            Cst::Int(i) => i.to_string(),
            Cst::Str(s) => format!("{:?}", s),
            Cst::And => "and".into(),
            Cst::Or => "or".into(),
            Cst::Not => "not".into(),
            Cst::Add => "+".into(),
            Cst::Eq => "=".into(),
            Cst::Le => "<=".into(),
        }
    }
}

/// Terms of the calculus. Collection formers carry their [`CollKind`]:
/// `Empty(Set, ..)` is `{}`, `Empty(Bag, ..)` is `{||}`, `Where(Bag, ..)` is
/// `bagwhere .. do ..`, and so on. Empty collections carry an optional
/// element-type annotation (required to infer their type standalone).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Name),
    Hole(HoleId),
    /// Constant application; literals have an empty argument list.
    Const(Cst, Vec<Term>),
    /// Fields sorted by label; construct through [`Term::record`].
    Record(Vec<(String, Term)>),
    Proj(Box<Term>, String),
    Lam(Name, TypeExpr, Box<Term>),
    App(Box<Term>, Box<Term>),
    /// Annotation is the element type.
    Empty(CollKind, Option<Box<TypeExpr>>),
    Single(CollKind, Box<Term>),
    Union(CollKind, Box<Term>, Box<Term>),
    /// `Comp(k, head, x, src)` is the comprehension with `head` under the
    /// binder `x` drawing from `src`.
    Comp(CollKind, Box<Term>, Name, Box<Term>),
    /// `Where(k, cond, body)`: `cond` is boolean, `body` the guarded collection.
    Where(CollKind, Box<Term>, Box<Term>),
    /// Emptiness test on a set-typed argument.
    IsEmpty(Box<Term>),
    /// Duplicate elimination, `dedup`.
    Dedup(Box<Term>),
    /// Multiplicity-one inclusion, `promote`.
    Promote(Box<Term>),
}

/// A position in a term: the list of child indices from the root.
pub type Path = Vec<usize>;

impl Term {
    pub fn var(name: impl Into<Name>) -> Term {
        Term::Var(name.into())
    }

    pub fn hole(id: impl Into<HoleId>) -> Term {
        Term::Hole(id.into())
    }

    pub fn int(i: i64) -> Term {
        Term::Const(Cst::Int(i), vec![])
    }

    pub fn bool(b: bool) -> Term {
        Term::Const(Cst::Bool(b), vec![])
    }

    pub fn str(s: impl Into<String>) -> Term {
        Term::Const(Cst::Str(s.into()), vec![])
    }

    /// Record term with fields canonicalized to sorted label order.
    pub fn record(mut fields: Vec<(String, Term)>) -> Term {
        fields.sort_by(|a, b| a.0.cmp(&b.0));
        debug_assert!(fields.windows(2).all(|w| w[0].0 != w[1].0));
        Term::Record(fields)
    }

    pub fn proj(subject: Term, label: impl Into<String>) -> Term {
        Term::Proj(Box::new(subject), label.into())
    }

    pub fn lam(x: impl Into<Name>, ty: TypeExpr, body: Term) -> Term {
        Term::Lam(x.into(), ty, Box::new(body))
    }

    pub fn app(fun: Term, arg: Term) -> Term {
        Term::App(Box::new(fun), Box::new(arg))
    }

    pub fn empty(kind: CollKind, elem: TypeExpr) -> Term {
        Term::Empty(kind, Some(Box::new(elem)))
    }

    pub fn single(kind: CollKind, elem: Term) -> Term {
        Term::Single(kind, Box::new(elem))
    }

    pub fn union(kind: CollKind, l: Term, r: Term) -> Term {
        Term::Union(kind, Box::new(l), Box::new(r))
    }

    pub fn comp(kind: CollKind, head: Term, x: impl Into<Name>, src: Term) -> Term {
        Term::Comp(kind, Box::new(head), x.into(), Box::new(src))
    }

    pub fn where_(kind: CollKind, cond: Term, body: Term) -> Term {
        Term::Where(kind, Box::new(cond), Box::new(body))
    }

    pub fn is_empty(subject: Term) -> Term {
        Term::IsEmpty(Box::new(subject))
    }

    pub fn dedup(subject: Term) -> Term {
        Term::Dedup(Box::new(subject))
    }

    pub fn promote(subject: Term) -> Term {
        Term::Promote(Box::new(subject))
    }

    /// Children in the fixed traversal order used for positions.
    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Var(_) | Term::Hole(_) | Term::Empty(..) => vec![],
            Term::Const(_, args) => args.iter().collect(),
            Term::Record(fields) => fields.iter().map(|(_, t)| t).collect(),
            Term::Proj(s, _) | Term::Lam(_, _, s) | Term::Single(_, s) => vec![s],
            Term::IsEmpty(s) | Term::Dedup(s) | Term::Promote(s) => vec![s],
            Term::App(a, b) | Term::Union(_, a, b) => vec![a, b],
            Term::Comp(_, h, _, s) => vec![h, s],
            Term::Where(_, c, b) => vec![c, b],
        }
    }

    /// The binder scoping child `i`, if any: lambda bodies and
    /// comprehension heads are under a binder, everything else is not.
    pub fn binder_of_child(&self, i: usize) -> Option<&Name> {
        match (self, i) {
            (Term::Lam(x, _, _), 0) => Some(x),
            (Term::Comp(_, _, x, _), 0) => Some(x),
            _ => None,
        }
    }

    pub fn get_at(&self, path: &[usize]) -> Option<&Term> {
        let mut t = self;
        for &i in path {
            t = *t.children().get(i)?;
        }
        Some(t)
    }

    /// Rebuild this term with the subterm at `path` replaced.
    /// Panics if the path is invalid (callers derive paths from traversals).
    pub fn replace_at(&self, path: &[usize], new: Term) -> Term {
        fn write(t: &Term, path: &[usize], new: Term) -> Term {
            let Some((&i, rest)) = path.split_first() else {
                return new;
            };
            let mut out = t.clone();
            match &mut out {
                Term::Const(_, args) => args[i] = write(&args[i], rest, new),
                Term::Record(fields) => fields[i].1 = write(&fields[i].1, rest, new),
                Term::Proj(s, _)
                | Term::Lam(_, _, s)
                | Term::Single(_, s)
                | Term::IsEmpty(s)
                | Term::Dedup(s)
                | Term::Promote(s) => {
                    assert_eq!(i, 0);
                    **s = write(s, rest, new);
                }
                Term::App(a, b) | Term::Union(_, a, b) => {
                    let c = if i == 0 { a } else { b };
                    **c = write(c, rest, new);
                }
                Term::Comp(_, h, _, s) => {
                    let c = if i == 0 { h } else { s };
                    **c = write(c, rest, new);
                }
                Term::Where(_, c0, b0) => {
                    let c = if i == 0 { c0 } else { b0 };
                    **c = write(c, rest, new);
                }
                Term::Var(_) | Term::Hole(_) | Term::Empty(..) => {
                    panic!("replace_at: path descends into a leaf")
                }
            }
            out
        }
        write(self, path, new)
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Free term variables (holes are not included; see [`Term::holes`]).
    pub fn free_vars(&self) -> BTreeSet<Name> {
        fn go(t: &Term, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
            match t {
                Term::Var(x) => {
                    if !bound.iter().any(|b| b == x) {
                        out.insert(x.clone());
                    }
                }
                _ => {
                    for (i, c) in t.children().into_iter().enumerate() {
                        if let Some(x) = t.binder_of_child(i) {
                            bound.push(x.clone());
                            go(c, bound, out);
                            bound.pop();
                        } else {
                            go(c, bound, out);
                        }
                    }
                }
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    /// All hole indices occurring in the term (as a set).
    pub fn holes(&self) -> BTreeSet<HoleId> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let Term::Hole(p) = t {
                out.insert(p.clone());
            }
        });
        out
    }

    /// Occurrence count of each hole (for linearity checks).
    pub fn hole_occurrences(&self) -> std::collections::BTreeMap<HoleId, usize> {
        let mut out = std::collections::BTreeMap::new();
        self.visit(&mut |t| {
            if let Term::Hole(p) = t {
                *out.entry(p.clone()).or_insert(0) += 1;
            }
        });
        out
    }

    /// All binder names occurring anywhere in the term.
    pub fn binders(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| match t {
            Term::Lam(x, _, _) | Term::Comp(_, _, x, _) => {
                out.insert(x.clone());
            }
            _ => {}
        });
        out
    }

    /// Preorder traversal over every subterm.
    pub fn visit(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Capture-avoiding substitution of `n` for the free variable `x`.
    pub fn subst(&self, x: &str, n: &Term) -> Term {
        let n_fv = n.free_vars();
        self.subst_in(x, n, &n_fv)
    }

    fn subst_in(&self, x: &str, n: &Term, n_fv: &BTreeSet<Name>) -> Term {
        match self {
            Term::Var(y) => {
                if y == x {
                    n.clone()
                } else {
                    self.clone()
                }
            }
            Term::Hole(_) | Term::Empty(..) | Term::Const(_, _)
                if self.children().is_empty() =>
            {
                self.clone()
            }
            Term::Lam(y, ty, body) => {
                if y == x {
                    self.clone()
                } else {
                    let (y2, body2) = rebind(y, body, x, n_fv);
                    Term::Lam(y2, ty.clone(), Box::new(body2.subst_in(x, n, n_fv)))
                }
            }
            Term::Comp(k, head, y, src) => {
                let src2 = src.subst_in(x, n, n_fv);
                if y == x {
                    Term::comp(*k, (**head).clone(), y.clone(), src2)
                } else {
                    let (y2, head2) = rebind(y, head, x, n_fv);
                    Term::comp(*k, head2.subst_in(x, n, n_fv), y2, src2)
                }
            }
            _ => self.map_children(|c| c.subst_in(x, n, n_fv)),
        }
    }

    /// Rebuild with each child transformed (binders untouched).
    pub fn map_children(&self, mut f: impl FnMut(&Term) -> Term) -> Term {
        match self {
            Term::Var(_) | Term::Hole(_) | Term::Empty(..) => self.clone(),
            Term::Const(c, args) => Term::Const(c.clone(), args.iter().map(|a| f(a)).collect()),
            Term::Record(fields) => Term::Record(
                fields.iter().map(|(l, t)| (l.clone(), f(t))).collect(),
            ),
            Term::Proj(s, l) => Term::proj(f(s), l.clone()),
            Term::Lam(x, ty, b) => Term::lam(x.clone(), ty.clone(), f(b)),
            Term::App(a, b) => Term::app(f(a), f(b)),
            Term::Single(k, s) => Term::single(*k, f(s)),
            Term::Union(k, a, b) => Term::union(*k, f(a), f(b)),
            Term::Comp(k, h, x, s) => Term::comp(*k, f(h), x.clone(), f(s)),
            Term::Where(k, c, b) => Term::where_(*k, f(c), f(b)),
            Term::IsEmpty(s) => Term::is_empty(f(s)),
            Term::Dedup(s) => Term::dedup(f(s)),
            Term::Promote(s) => Term::promote(f(s)),
        }
    }

    /// Alpha-equivalence: structural equality modulo bound-variable names.
    /// Holes compare by index.
    pub fn alpha_eq(&self, other: &Term) -> bool {
        fn go(a: &Term, b: &Term, env: &mut Vec<(Name, Name)>) -> bool {
            match (a, b) {
                (Term::Var(x), Term::Var(y)) => {
                    for (l, r) in env.iter().rev() {
                        match (l == x, r == y) {
                            (true, true) => return true,
                            (false, false) => continue,
                            _ => return false,
                        }
                    }
                    x == y
                }
                (Term::Hole(p), Term::Hole(q)) => p == q,
                (Term::Const(c, xs), Term::Const(d, ys)) => {
                    c == d
                        && xs.len() == ys.len()
                        && xs.iter().zip(ys).all(|(x, y)| go(x, y, env))
                }
                (Term::Record(xs), Term::Record(ys)) => {
                    xs.len() == ys.len()
                        && xs
                            .iter()
                            .zip(ys)
                            .all(|((l1, x), (l2, y))| l1 == l2 && go(x, y, env))
                }
                (Term::Proj(x, l1), Term::Proj(y, l2)) => l1 == l2 && go(x, y, env),
                (Term::Lam(x, tx, bx), Term::Lam(y, ty, by)) => {
                    tx == ty && {
                        env.push((x.clone(), y.clone()));
                        let r = go(bx, by, env);
                        env.pop();
                        r
                    }
                }
                (Term::App(a1, a2), Term::App(b1, b2)) => go(a1, b1, env) && go(a2, b2, env),
                (Term::Empty(k1, t1), Term::Empty(k2, t2)) => k1 == k2 && t1 == t2,
                (Term::Single(k1, x), Term::Single(k2, y)) => k1 == k2 && go(x, y, env),
                (Term::Union(k1, a1, a2), Term::Union(k2, b1, b2)) => {
                    k1 == k2 && go(a1, b1, env) && go(a2, b2, env)
                }
                (Term::Comp(k1, h1, x, s1), Term::Comp(k2, h2, y, s2)) => {
                    k1 == k2 && go(s1, s2, env) && {
                        env.push((x.clone(), y.clone()));
                        let r = go(h1, h2, env);
                        env.pop();
                        r
                    }
                }
                (Term::Where(k1, c1, b1), Term::Where(k2, c2, b2)) => {
                    k1 == k2 && go(c1, c2, env) && go(b1, b2, env)
                }
                (Term::IsEmpty(x), Term::IsEmpty(y)) => go(x, y, env),
                (Term::Dedup(x), Term::Dedup(y)) => go(x, y, env),
                (Term::Promote(x), Term::Promote(y)) => go(x, y, env),
                _ => false,
            }
        }
        go(self, other, &mut Vec::new())
    }

    /// Alpha-canonical representative: bound variables renamed to `!0`,
    /// `!1`, … in traversal order. With `canon_holes`, hole indices are
    /// likewise renamed positionally (used to key reduction-graph nodes
    /// where hole identity is immaterial).
    pub fn canon(&self, canon_holes: bool) -> Term {
        fn go(
            t: &Term,
            env: &Vec<(Name, Name)>,
            next: &mut usize,
            holes: &mut Vec<(HoleId, HoleId)>,
            canon_holes: bool,
        ) -> Term {
            match t {
                Term::Var(x) => {
                    for (old, new) in env.iter().rev() {
                        if old == x {
                            return Term::Var(new.clone());
                        }
                    }
                    t.clone()
                }
                Term::Hole(p) if canon_holes => {
                    for (old, new) in holes.iter() {
                        if old == p {
                            return Term::Hole(new.clone());
                        }
                    }
                    let new = format!("!h{}", holes.len());
                    holes.push((p.clone(), new.clone()));
                    Term::Hole(new)
                }
                Term::Lam(x, ty, b) => {
                    let nx = format!("!{next}");
                    *next += 1;
                    let mut env2 = env.clone();
                    env2.push((x.clone(), nx.clone()));
                    Term::lam(nx, ty.clone(), go(b, &env2, next, holes, canon_holes))
                }
                Term::Comp(k, h, x, s) => {
                    let s2 = go(s, env, next, holes, canon_holes);
                    let nx = format!("!{next}");
                    *next += 1;
                    let mut env2 = env.clone();
                    env2.push((x.clone(), nx.clone()));
                    Term::comp(*k, go(h, &env2, next, holes, canon_holes), nx, s2)
                }
                _ => {
                    // map_children preserves child order, which is all the
                    // canonical numbering depends on.
                    let mut out = t.clone();
                    match &mut out {
                        Term::Const(_, args) => {
                            for a in args {
                                *a = go(a, env, next, holes, canon_holes);
                            }
                        }
                        Term::Record(fields) => {
                            for (_, v) in fields {
                                *v = go(v, env, next, holes, canon_holes);
                            }
                        }
                        Term::Proj(s, _)
                        | Term::Single(_, s)
                        | Term::IsEmpty(s)
                        | Term::Dedup(s)
                        | Term::Promote(s) => **s = go(s, env, next, holes, canon_holes),
                        Term::App(a, b) | Term::Union(_, a, b) => {
                            **a = go(a, env, next, holes, canon_holes);
                            **b = go(b, env, next, holes, canon_holes);
                        }
                        Term::Where(_, c, b) => {
                            **c = go(c, env, next, holes, canon_holes);
                            **b = go(b, env, next, holes, canon_holes);
                        }
                        Term::Var(_) | Term::Hole(_) | Term::Empty(..) => {}
                        Term::Lam(..) | Term::Comp(..) => unreachable!(),
                    }
                    out
                }
            }
        }
        go(self, &Vec::new(), &mut 0, &mut Vec::new(), canon_holes)
    }
}

/// Rename the binder `y` away from the free variables of the payload when
/// substituting for `x` under it (callers have already ruled out `y == x`).
fn rebind(y: &Name, body: &Term, x: &str, n_fv: &BTreeSet<Name>) -> (Name, Term) {
    if n_fv.contains(y) {
        let mut avoid = n_fv.clone();
        avoid.extend(body.free_vars());
        avoid.insert(x.to_string());
        let y2 = fresh(y, &avoid);
        let body2 = body.subst(y, &Term::Var(y2.clone()));
        (y2, body2)
    } else {
        (y.clone(), body.clone())
    }
}

/// Smallest-suffix fresh name: `base` itself if unused, else `base_1`,
/// `base_2`, ….
pub fn fresh(base: &str, avoid: &BTreeSet<Name>) -> Name {
    if !avoid.contains(base) {
        return base.to_string();
    }
    for i in 1.. {
        let cand = format!("{base}_{i}");
        if !avoid.contains(&cand) {
            return cand;
        }
    }
    unreachable!()
}
