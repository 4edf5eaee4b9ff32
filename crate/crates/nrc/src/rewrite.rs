//! The reduction relation: root contractions closed under congruence,
//! redex enumeration, normal-form testing, and fuel-bounded normalization
//! with a pluggable strategy.
//!
//! Every contraction rule has a [`RuleTag`]; [`contract_root`] produces all
//! root contracta of a term, and [`step_all`] closes that under congruence
//! by descending into every child position. Rules that synthesize an empty
//! collection out of nothing (`comp-empty-src`, `where-false`) need a type
//! annotation for the result; they recover it by inference when possible
//! and fall back to an unannotated empty literal otherwise. Rules that move
//! a subterm under a binder (`comp-assoc`, `where-comp`, and their bag
//! twins) rename the binder to a fresh name when it would capture.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use std::collections::BTreeSet;
use std::collections::VecDeque;
use std::fmt;

use crate::ast::{fresh, CollKind, Cst, Name, Path, Term, TypeExpr};
use crate::typing::{infer_in, Calculus, TypeEnv};

/// One tag per contraction rule. The set/bag structural rules come in
/// mirrored pairs; the `dedup-*`/`promote-*` rules change collection kind
/// in the mixed calculus and preserve it in the set-only calculus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleTag {
    Beta,
    Proj,
    DeltaConst,
    CompEmptyHead,
    CompEmptySrc,
    CompSingleton,
    CompUnionHead,
    CompUnionSrc,
    CompAssoc,
    CompWhereSrc,
    WhereTrue,
    WhereFalse,
    WhereEmpty,
    WhereUnion,
    WhereComp,
    WhereWhere,
    EmptyFlatten,
    BagcompEmptyHead,
    BagcompEmptySrc,
    BagcompSingleton,
    BagcompUnionHead,
    BagcompUnionSrc,
    BagcompAssoc,
    BagcompWhereSrc,
    BagwhereTrue,
    BagwhereFalse,
    BagwhereEmpty,
    BagwhereUnion,
    BagwhereComp,
    BagwhereWhere,
    DedupEmpty,
    DedupSingleton,
    DedupUnion,
    DedupPromote,
    DedupComp,
    DedupWhere,
    PromoteEmpty,
    PromoteSingleton,
    PromoteWhere,
}

impl RuleTag {
    pub fn as_str(self) -> &'static str {
        use RuleTag::*;
        match self {
            Beta => "beta",
            Proj => "proj",
            DeltaConst => "delta-const",
            CompEmptyHead => "comp-empty-head",
            CompEmptySrc => "comp-empty-src",
            CompSingleton => "comp-singleton",
            CompUnionHead => "comp-union-head",
            CompUnionSrc => "comp-union-src",
            CompAssoc => "comp-assoc",
            CompWhereSrc => "comp-where-src",
            WhereTrue => "where-true",
            WhereFalse => "where-false",
            WhereEmpty => "where-empty",
            WhereUnion => "where-union",
            WhereComp => "where-comp",
            WhereWhere => "where-where",
            EmptyFlatten => "empty-flatten",
            BagcompEmptyHead => "bagcomp-empty-head",
            BagcompEmptySrc => "bagcomp-empty-src",
            BagcompSingleton => "bagcomp-singleton",
            BagcompUnionHead => "bagcomp-union-head",
            BagcompUnionSrc => "bagcomp-union-src",
            BagcompAssoc => "bagcomp-assoc",
            BagcompWhereSrc => "bagcomp-where-src",
            BagwhereTrue => "bagwhere-true",
            BagwhereFalse => "bagwhere-false",
            BagwhereEmpty => "bagwhere-empty",
            BagwhereUnion => "bagwhere-union",
            BagwhereComp => "bagwhere-comp",
            BagwhereWhere => "bagwhere-where",
            DedupEmpty => "dedup-empty",
            DedupSingleton => "dedup-singleton",
            DedupUnion => "dedup-union",
            DedupPromote => "dedup-promote",
            DedupComp => "dedup-comp",
            DedupWhere => "dedup-where",
            PromoteEmpty => "promote-empty",
            PromoteSingleton => "promote-singleton",
            PromoteWhere => "promote-where",
        }
    }
}

impl fmt::Display for RuleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single reduction step on a whole term: applying `rule` to the redex
/// rooted at `position` inside `before` yields `after`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub rule: RuleTag,
    pub position: Path,
    pub before: Term,
    pub after: Term,
}

/// Renders a child-index path for traces: the root is `ε`, everything else
/// is dot-separated indices.
pub fn render_path(path: &[usize]) -> String {
    if path.is_empty() {
        "ε".to_owned()
    } else {
        path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".")
    }
}

/// Renders a trace, one `<step#> <rule> @ <position> :: <term after>` line
/// per step, numbered from 1.
pub fn render_trace(steps: &[Step]) -> String {
    let mut out = String::new();
    for (i, s) in steps.iter().enumerate() {
        out.push_str(&format!(
            "{} {} @ {} :: {}\n",
            i + 1,
            s.rule,
            render_path(&s.position),
            s.after
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Deterministic: the first redex in a preorder walk (children in the
    /// fixed order of [`Term::children`]), first matching rule.
    LeftmostOutermost,
    /// Uniform choice among all redexes at each step, seeded.
    Random(u64),
    /// Breadth-first exploration of the whole reduction graph.
    Exhaustive,
}

#[derive(Debug, Clone, Error)]
pub enum RewriteError {
    #[error("fuel exhausted after {fuel} steps; last term: {last}")]
    FuelExhausted { fuel: u64, last: Term },
}

/// Result of [`normalize`]: the normal form reached, the steps that led
/// there, and every distinct normal form found (a singleton unless the
/// exhaustive strategy discovered several).
#[derive(Debug, Clone)]
pub struct Normalized {
    pub term: Term,
    pub trace: Vec<Step>,
    pub normal_forms: Vec<Term>,
}

/// Binder context for a subterm: innermost binder last, `None` when the
/// binder's type could not be recovered.
pub type Scope = Vec<(Name, Option<TypeExpr>)>;

// ---------------------------------------------------------------------------
// Root contraction
// ---------------------------------------------------------------------------

/// Applies a constant of arity >= 1 to literal arguments.
fn eval_const(op: &Cst, args: &[Term]) -> Option<Term> {
    fn lit(t: &Term) -> Option<&Cst> {
        match t {
            Term::Const(c, a) if a.is_empty() && c.is_literal() => Some(c),
            _ => None,
        }
    }
    fn as_bool(c: &Cst) -> Option<bool> {
        match c {
            Cst::Bool(b) => Some(*b),
            _ => None,
        }
    }
    fn as_int(c: &Cst) -> Option<i64> {
        match c {
            Cst::Int(i) => Some(*i),
            _ => None,
        }
    }
    let lits: Vec<&Cst> = args.iter().map(lit).collect::<Option<Vec<_>>>()?;
    let out = match (op, lits.as_slice()) {
        (Cst::And, [a, b]) => Cst::Bool(as_bool(a)? && as_bool(b)?),
        (Cst::Or, [a, b]) => Cst::Bool(as_bool(a)? || as_bool(b)?),
        (Cst::Not, [a]) => Cst::Bool(!as_bool(a)?),
        (Cst::Add, [a, b]) => Cst::Int(as_int(a)?.wrapping_add(as_int(b)?)),
        (Cst::Le, [a, b]) => Cst::Bool(as_int(a)? <= as_int(b)?),
        (Cst::Eq, [Cst::Int(a), Cst::Int(b)]) => Cst::Bool(a == b),
        (Cst::Eq, [Cst::Str(a), Cst::Str(b)]) => Cst::Bool(a == b),
        _ => return None,
    };
    Some(Term::Const(out, vec![]))
}

/// Infers the element type of `t` (which should be a collection) in the
/// given scope, or `None` when inference cannot see through it.
fn elem_type(env: &TypeEnv, scope: &Scope, t: &Term) -> Option<TypeExpr> {
    match infer_in(env, scope, t) {
        Ok(TypeExpr::Coll(_, elem)) => Some(*elem),
        _ => None,
    }
}

/// An empty literal of the given kind, annotated with the element type of
/// `like` when that can be inferred in scope.
fn empty_like(env: &TypeEnv, scope: &Scope, kind: CollKind, like: &Term) -> Term {
    match elem_type(env, scope, like) {
        Some(elem) => Term::empty(kind, elem),
        None => Term::Empty(kind, None),
    }
}

/// Fresh binder avoiding every name free in the given terms, plus `taken`.
fn fresh_binder(base: &str, terms: &[&Term], taken: &[&Name]) -> Name {
    let mut avoid: BTreeSet<Name> = BTreeSet::new();
    for t in terms {
        avoid.extend(t.free_vars());
        avoid.extend(t.binders());
    }
    for n in taken {
        avoid.insert((*n).clone());
    }
    fresh(base, &avoid)
}

/// All root-position contracta of `t`, each with its rule tag, in the fixed
/// order the rules are defined in; when two rules produce structurally equal
/// contracta (e.g. a comprehension that is empty on both sides), only the
/// first is kept.
///
/// `scope` lists the binders enclosing `t`, innermost last; it is consulted
/// only for type inference (result annotations and the relation-typedness
/// test of `empty-flatten`).
pub fn contract_root(env: &TypeEnv, scope: &Scope, t: &Term) -> Vec<(RuleTag, Term)> {
    use CollKind::*;
    let mut out: Vec<(RuleTag, Term)> = Vec::new();
    let push = |tag: RuleTag, term: Term, out: &mut Vec<(RuleTag, Term)>| {
        if !out.iter().any(|(_, prev)| *prev == term) {
            out.push((tag, term));
        }
    };

    match t {
        // (λx:T. M) N  ⇝  M[N/x]
        Term::App(f, arg) => {
            if let Term::Lam(x, _, body) = &**f {
                push(RuleTag::Beta, body.subst(x, arg), &mut out);
            }
        }
        // ⟨…, ℓ = M, …⟩.ℓ  ⇝  M
        Term::Proj(subject, label) => {
            if let Term::Record(fields) = &**subject {
                if let Some((_, v)) = fields.iter().find(|(l, _)| l == label) {
                    push(RuleTag::Proj, v.clone(), &mut out);
                }
            }
        }
        // c(c̄₁, …, c̄ₙ)  ⇝  the value of c on those literals (n ≥ 1)
        Term::Const(op, args) => {
            if op.arity() >= 1 {
                if let Some(v) = eval_const(op, args) {
                    push(RuleTag::DeltaConst, v, &mut out);
                }
            }
        }
        Term::Comp(kind, head, x, src) => {
            let (t_empty_head, t_empty_src, t_single, t_union_head, t_union_src, t_assoc, t_where_src) =
                match kind {
                    Set => (
                        RuleTag::CompEmptyHead,
                        RuleTag::CompEmptySrc,
                        RuleTag::CompSingleton,
                        RuleTag::CompUnionHead,
                        RuleTag::CompUnionSrc,
                        RuleTag::CompAssoc,
                        RuleTag::CompWhereSrc,
                    ),
                    Bag => (
                        RuleTag::BagcompEmptyHead,
                        RuleTag::BagcompEmptySrc,
                        RuleTag::BagcompSingleton,
                        RuleTag::BagcompUnionHead,
                        RuleTag::BagcompUnionSrc,
                        RuleTag::BagcompAssoc,
                        RuleTag::BagcompWhereSrc,
                    ),
                };
            // { ∅ | x ← M }  ⇝  ∅   (the head node is reused: same type)
            if matches!(&**head, Term::Empty(k, _) if k == kind) {
                push(t_empty_head, (**head).clone(), &mut out);
            }
            // { M | x ← ∅ }  ⇝  ∅   (annotated by inferring M under x)
            if matches!(&**src, Term::Empty(k, _) if k == kind) {
                let mut inner = scope.clone();
                inner.push((x.clone(), elem_type(env, scope, src)));
                push(t_empty_src, empty_like(env, &inner, *kind, head), &mut out);
            }
            // { M | x ← {N} }  ⇝  M[N/x]
            if let Term::Single(k, n) = &**src {
                if k == kind {
                    push(t_single, head.subst(x, n), &mut out);
                }
            }
            // { M ∪ N | x ← R }  ⇝  { M | x ← R } ∪ { N | x ← R }
            if let Term::Union(k, m, n) = &**head {
                if k == kind {
                    push(
                        t_union_head,
                        Term::union(
                            *kind,
                            Term::comp(*kind, (**m).clone(), x.clone(), (**src).clone()),
                            Term::comp(*kind, (**n).clone(), x.clone(), (**src).clone()),
                        ),
                        &mut out,
                    );
                }
            }
            // { M | x ← N ∪ R }  ⇝  { M | x ← N } ∪ { M | x ← R }
            if let Term::Union(k, n, r) = &**src {
                if k == kind {
                    push(
                        t_union_src,
                        Term::union(
                            *kind,
                            Term::comp(*kind, (**head).clone(), x.clone(), (**n).clone()),
                            Term::comp(*kind, (**head).clone(), x.clone(), (**r).clone()),
                        ),
                        &mut out,
                    );
                }
            }
            // { M | y ← { R | z ← N } }  ⇝  { { M | y ← R } | z ← N },
            // renaming z when it occurs free in M (it moves over M's scope).
            if let Term::Comp(k, r, z, n) = &**src {
                if k == kind {
                    let (z2, r2) = if head.free_vars().contains(z) {
                        let z2 = fresh_binder(z, &[head, r, n], &[x, z]);
                        (z2.clone(), r.subst(z, &Term::var(z2)))
                    } else {
                        (z.clone(), (**r).clone())
                    };
                    push(
                        t_assoc,
                        Term::comp(
                            *kind,
                            Term::comp(*kind, (**head).clone(), x.clone(), r2),
                            z2,
                            (**n).clone(),
                        ),
                        &mut out,
                    );
                }
            }
            // { M | x ← where N do R }  ⇝  where N do { M | x ← R }
            // (the guard stays outside the binder: nothing can be captured)
            if let Term::Where(k, cond, body) = &**src {
                if k == kind {
                    push(
                        t_where_src,
                        Term::where_(
                            *kind,
                            (**cond).clone(),
                            Term::comp(*kind, (**head).clone(), x.clone(), (**body).clone()),
                        ),
                        &mut out,
                    );
                }
            }
        }
        Term::Where(kind, cond, body) => {
            let (t_true, t_false, t_empty, t_union, t_comp, t_where) = match kind {
                Set => (
                    RuleTag::WhereTrue,
                    RuleTag::WhereFalse,
                    RuleTag::WhereEmpty,
                    RuleTag::WhereUnion,
                    RuleTag::WhereComp,
                    RuleTag::WhereWhere,
                ),
                Bag => (
                    RuleTag::BagwhereTrue,
                    RuleTag::BagwhereFalse,
                    RuleTag::BagwhereEmpty,
                    RuleTag::BagwhereUnion,
                    RuleTag::BagwhereComp,
                    RuleTag::BagwhereWhere,
                ),
            };
            match &**cond {
                // where true do M  ⇝  M
                Term::Const(Cst::Bool(true), args) if args.is_empty() => {
                    push(t_true, (**body).clone(), &mut out);
                }
                // where false do M  ⇝  ∅
                Term::Const(Cst::Bool(false), args) if args.is_empty() => {
                    push(t_false, empty_like(env, scope, *kind, body), &mut out);
                }
                _ => {}
            }
            // where M do ∅  ⇝  ∅   (the body node is reused)
            if matches!(&**body, Term::Empty(k, _) if k == kind) {
                push(t_empty, (**body).clone(), &mut out);
            }
            // where M do (N ∪ R)  ⇝  (where M do N) ∪ (where M do R)
            if let Term::Union(k, n, r) = &**body {
                if k == kind {
                    push(
                        t_union,
                        Term::union(
                            *kind,
                            Term::where_(*kind, (**cond).clone(), (**n).clone()),
                            Term::where_(*kind, (**cond).clone(), (**r).clone()),
                        ),
                        &mut out,
                    );
                }
            }
            // where M do { N | x ← R }  ⇝  { where M do N | x ← R },
            // renaming x when it occurs free in M (M moves under the binder).
            if let Term::Comp(k, n, x, r) = &**body {
                if k == kind {
                    let (x2, n2) = if cond.free_vars().contains(x) {
                        let x2 = fresh_binder(x, &[cond, n, r], &[x]);
                        (x2.clone(), n.subst(x, &Term::var(x2)))
                    } else {
                        (x.clone(), (**n).clone())
                    };
                    push(
                        t_comp,
                        Term::comp(
                            *kind,
                            Term::where_(*kind, (**cond).clone(), n2),
                            x2,
                            (**r).clone(),
                        ),
                        &mut out,
                    );
                }
            }
            // where M do where N do R  ⇝  where (M ∧ N) do R
            if let Term::Where(k, n, r) = &**body {
                if k == kind {
                    push(
                        t_where,
                        Term::where_(
                            *kind,
                            Term::Const(Cst::And, vec![(**cond).clone(), (**n).clone()]),
                            (**r).clone(),
                        ),
                        &mut out,
                    );
                }
            }
        }
        // empty M  ⇝  empty { {⟨⟩} | x ← M }   when M is not relation-typed;
        // skipped when M's type cannot be inferred (no annotation to go on).
        // The result iterates M into a {⟨⟩}-typed relation, which is the
        // flat shape an emptiness test can be emitted from.
        Term::IsEmpty(subject) => {
            if let Ok(ty) = infer_in(env, scope, subject) {
                if !ty.is_relation() {
                    let x = fresh_binder("x", &[subject], &[]);
                    push(
                        RuleTag::EmptyFlatten,
                        Term::is_empty(Term::comp(
                            CollKind::Set,
                            Term::single(CollKind::Set, Term::record(vec![])),
                            x,
                            (**subject).clone(),
                        )),
                        &mut out,
                    );
                }
            }
        }
        Term::Dedup(arg) => {
            // In the mixed calculus δ consumes bag shapes and produces set
            // ones; in the set-only calculus it commutes through the same
            // shapes at the set kind.
            let (src_kind, dst_kind) = match env.calculus {
                Calculus::SetBag => (Bag, Set),
                Calculus::SetOnly => (Set, Set),
            };
            match &**arg {
                // δ ∅  ⇝  ∅
                Term::Empty(k, ann) if *k == src_kind => {
                    push(RuleTag::DedupEmpty, Term::Empty(dst_kind, ann.clone()), &mut out);
                }
                // δ {M}  ⇝  {M}
                Term::Single(k, m) if *k == src_kind => {
                    push(RuleTag::DedupSingleton, Term::Single(dst_kind, m.clone()), &mut out);
                }
                // δ (M ∪ N)  ⇝  δM ∪ δN
                Term::Union(k, m, n) if *k == src_kind => {
                    push(
                        RuleTag::DedupUnion,
                        Term::union(dst_kind, Term::dedup((**m).clone()), Term::dedup((**n).clone())),
                        &mut out,
                    );
                }
                // διM  ⇝  M
                Term::Promote(m) => {
                    push(RuleTag::DedupPromote, (**m).clone(), &mut out);
                }
                // δ { M | x ← N }  ⇝  { δM | x ← δN }
                Term::Comp(k, head, x, src) if *k == src_kind => {
                    push(
                        RuleTag::DedupComp,
                        Term::comp(
                            dst_kind,
                            Term::dedup((**head).clone()),
                            x.clone(),
                            Term::dedup((**src).clone()),
                        ),
                        &mut out,
                    );
                }
                // δ (where M do N)  ⇝  where M do δN
                Term::Where(k, cond, body) if *k == src_kind => {
                    push(
                        RuleTag::DedupWhere,
                        Term::where_(dst_kind, (**cond).clone(), Term::dedup((**body).clone())),
                        &mut out,
                    );
                }
                _ => {}
            }
        }
        Term::Promote(arg) => {
            // ι distributes over nothing but the three shapes below; in
            // particular ι(M ∪ N) and ι{M | x ← N} are normal (distributing
            // would not preserve multiplicities).
            let dst_kind = match env.calculus {
                Calculus::SetBag => Bag,
                Calculus::SetOnly => Set,
            };
            match &**arg {
                // ι ∅  ⇝  ∅ (at the bag kind in the mixed calculus)
                Term::Empty(Set, ann) => {
                    push(RuleTag::PromoteEmpty, Term::Empty(dst_kind, ann.clone()), &mut out);
                }
                // ι {M}  ⇝  {M}
                Term::Single(Set, m) => {
                    push(RuleTag::PromoteSingleton, Term::Single(dst_kind, m.clone()), &mut out);
                }
                // ι (where M do N)  ⇝  where M do ιN
                Term::Where(Set, cond, body) => {
                    push(
                        RuleTag::PromoteWhere,
                        Term::where_(dst_kind, (**cond).clone(), Term::promote((**body).clone())),
                        &mut out,
                    );
                }
                _ => {}
            }
        }
        _ => {}
    }
    out
}

// ---------------------------------------------------------------------------
// Congruence closure
// ---------------------------------------------------------------------------

/// Pushes the binder introduced by `t` for its `i`-th child onto `scope`,
/// returning true when something was pushed. The comprehension binder's
/// type is recovered by inferring the source; a lambda's is its annotation.
fn push_binder(env: &TypeEnv, scope: &mut Scope, t: &Term, i: usize) -> bool {
    match (t, i) {
        (Term::Lam(x, ty, _), 0) => {
            scope.push((x.clone(), Some(ty.clone())));
            true
        }
        (Term::Comp(_, _, x, src), 0) => {
            let elem = elem_type(env, scope, src);
            scope.push((x.clone(), elem));
            true
        }
        _ => false,
    }
}

/// Rebuilds the binder scope enclosing `path`: the variables bound by the
/// lambdas and comprehensions on the way down, outermost first. The path
/// must be valid for `root`.
pub fn scope_at(env: &TypeEnv, root: &Term, path: &[usize]) -> Scope {
    let mut scope = Vec::new();
    let mut cur = root;
    for &i in path {
        push_binder(env, &mut scope, cur, i);
        cur = cur.children()[i];
    }
    scope
}

fn walk_steps(
    env: &TypeEnv,
    scope: &mut Scope,
    root: &Term,
    sub: &Term,
    path: &mut Path,
    out: &mut Vec<Step>,
    stop_at_first: bool,
) {
    for (tag, contractum) in contract_root(env, scope, sub) {
        out.push(Step {
            rule: tag,
            position: path.clone(),
            before: root.clone(),
            after: root.replace_at(path, contractum),
        });
        if stop_at_first {
            return;
        }
    }
    for (i, child) in sub.children().into_iter().enumerate() {
        let pushed = push_binder(env, scope, sub, i);
        path.push(i);
        walk_steps(env, scope, root, child, path, out, stop_at_first);
        path.pop();
        if pushed {
            scope.pop();
        }
        if stop_at_first && !out.is_empty() {
            return;
        }
    }
}

/// Every one-step reduct of `t` at every position: root contracta plus
/// congruence descent into each child, in preorder.
pub fn step_all(env: &TypeEnv, t: &Term) -> Vec<Step> {
    let mut out = Vec::new();
    let mut scope = Vec::new();
    walk_steps(env, &mut scope, t, t, &mut Vec::new(), &mut out, false);
    out
}

/// The first step a preorder walk finds: the leftmost-outermost redex,
/// contracted by the first matching rule.
pub fn first_step(env: &TypeEnv, t: &Term) -> Option<Step> {
    let mut out = Vec::new();
    let mut scope = Vec::new();
    walk_steps(env, &mut scope, t, t, &mut Vec::new(), &mut out, true);
    out.into_iter().next()
}

/// True iff `t` has no redex.
pub fn is_normal(env: &TypeEnv, t: &Term) -> bool {
    first_step(env, t).is_none()
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Reduces `t` to a normal form under the given strategy, recording the
/// trace. The exhaustive strategy additionally explores the entire
/// reduction graph (breadth-first, visited terms deduplicated up to alpha
/// and hole renaming) and reports every distinct normal form it finds; the
/// returned `term`/`trace` are still the leftmost-outermost ones so output
/// stays deterministic.
///
/// `fuel` bounds the number of steps taken (or, for the exhaustive
/// strategy, graph nodes expanded).
pub fn normalize(
    env: &TypeEnv,
    t: &Term,
    strategy: Strategy,
    fuel: u64,
) -> Result<Normalized, RewriteError> {
    let mut rng = match strategy {
        Strategy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut term = t.clone();
    let mut trace = Vec::new();
    let mut used: u64 = 0;
    loop {
        let step = match &mut rng {
            None => first_step(env, &term),
            Some(rng) => {
                let steps = step_all(env, &term);
                if steps.is_empty() {
                    None
                } else {
                    let i = rng.gen_range(0..steps.len());
                    Some(steps.into_iter().nth(i).unwrap())
                }
            }
        };
        match step {
            None => break,
            Some(step) => {
                if used >= fuel {
                    return Err(RewriteError::FuelExhausted { fuel, last: term });
                }
                used += 1;
                term = step.after.clone();
                trace.push(step);
            }
        }
    }
    let normal_forms = match strategy {
        Strategy::Exhaustive => normal_forms_exhaustive(env, t, fuel)?,
        _ => vec![term.clone()],
    };
    Ok(Normalized { term, trace, normal_forms })
}

/// Explores the whole reduction graph of `t` breadth-first and returns the
/// distinct normal forms in discovery order, deduplicated up to alpha
/// equivalence (and hole renaming). `fuel` bounds the number of expanded
/// nodes.
pub fn normal_forms_exhaustive(
    env: &TypeEnv,
    t: &Term,
    fuel: u64,
) -> Result<Vec<Term>, RewriteError> {
    let mut seen: BTreeSet<Term> = BTreeSet::new();
    let mut forms: Vec<Term> = Vec::new();
    let mut queue: VecDeque<Term> = VecDeque::new();
    seen.insert(t.canon(true));
    queue.push_back(t.clone());
    let mut expanded: u64 = 0;
    while let Some(cur) = queue.pop_front() {
        if expanded >= fuel {
            return Err(RewriteError::FuelExhausted { fuel, last: cur });
        }
        expanded += 1;
        let steps = step_all(env, &cur);
        if steps.is_empty() {
            forms.push(cur);
            continue;
        }
        for s in steps {
            if seen.insert(s.after.canon(true)) {
                queue.push_back(s.after);
            }
        }
    }
    Ok(forms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::AtomType;
    use crate::parse::parse_term;
    use crate::typing::infer;

    fn p(src: &str) -> Term {
        parse_term(src).expect(src).term
    }

    /// Environment with a flat relation `t : {<id : Int>}`, a nested set
    /// `u : {{Int}}`, a bag table `b : {|<a : Int>|}`, and scalars.
    fn env() -> TypeEnv {
        let row = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
        let row_a = TypeExpr::record(vec![("a".into(), TypeExpr::Atom(AtomType::Int))]);
        TypeEnv::new(Calculus::SetBag)
            .with_var("t", TypeExpr::set_of(row))
            .with_var("u", TypeExpr::set_of(TypeExpr::set_of(TypeExpr::Atom(AtomType::Int))))
            .with_var("b", TypeExpr::bag_of(row_a))
            .with_var("c", TypeExpr::Atom(AtomType::Bool))
            .with_var("n", TypeExpr::Atom(AtomType::Int))
    }

    fn tags(env: &TypeEnv, t: &Term) -> Vec<RuleTag> {
        contract_root(env, &Vec::new(), t).into_iter().map(|(tag, _)| tag).collect()
    }

    #[test]
    fn beta_proj_and_constants_contract() {
        let e = env();
        let cases = [
            (r"(\x : Int. x + 1) 2", RuleTag::Beta, "2 + 1"),
            ("<a = 1, b = 2>.b", RuleTag::Proj, "2"),
            ("1 + 2", RuleTag::DeltaConst, "3"),
            ("and(true, false)", RuleTag::DeltaConst, "false"),
            ("not(false)", RuleTag::DeltaConst, "true"),
            (r#""x" = "x""#, RuleTag::DeltaConst, "true"),
            ("3 <= 2", RuleTag::DeltaConst, "false"),
        ];
        for (src, tag, expect) in cases {
            let got = contract_root(&e, &Vec::new(), &p(src));
            assert_eq!(got, vec![(tag, p(expect))], "{src}");
        }
        // Constants fire only on literal arguments, and literals are normal.
        assert!(tags(&e, &p("n + 2")).is_empty());
        assert!(tags(&e, &p("7")).is_empty());
        let big = Term::Const(Cst::Add, vec![Term::int(i64::MAX), Term::int(1)]);
        assert_eq!(contract_root(&e, &Vec::new(), &big), vec![(RuleTag::DeltaConst, Term::int(i64::MIN))]);
    }

    #[test]
    fn comprehension_rules_fire_in_order() {
        let e = env();
        // Head and source empties, singleton source.
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("for (x <- t) ({} : {Int})")),
            vec![(RuleTag::CompEmptyHead, p("{} : {Int}"))]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("for (x <- {} : {<id : Int>}) {x.id}")),
            vec![(RuleTag::CompEmptySrc, p("{} : {Int}"))]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("for (x <- {<id = 1>}) {x.id}")),
            vec![(RuleTag::CompSingleton, p("{<id = 1>.id}"))]
        );
        // Unions in head and source.
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("for (x <- t) ({x.id} union {7})")),
            vec![(
                RuleTag::CompUnionHead,
                p("(for (x <- t) {x.id}) union (for (x <- t) {7})")
            )]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("for (x <- t union t) {x.id}")),
            vec![(
                RuleTag::CompUnionSrc,
                p("(for (x <- t) {x.id}) union (for (x <- t) {x.id})")
            )]
        );
        // Nested comprehension source, guard in the source.
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("for (y <- for (x <- t) {x.id}) {y}")),
            vec![(RuleTag::CompAssoc, p("for (x <- t) (for (y <- {x.id}) {y})"))]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("for (x <- where c do t) {x.id}")),
            vec![(RuleTag::CompWhereSrc, p("where c do (for (x <- t) {x.id})"))]
        );
    }

    #[test]
    fn comp_assoc_renames_captured_inner_binder() {
        let e = env().with_var("x", TypeExpr::Atom(AtomType::Int));
        // The inner binder x would capture the head's free x: it is renamed.
        let redex = p("for (y <- for (x <- t) {x.id}) {y + x}");
        let got = contract_root(&e, &Vec::new(), &redex);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, RuleTag::CompAssoc);
        assert_eq!(got[0].1, p("for (x_1 <- t) (for (y <- {x_1.id}) {y + x})"));
    }

    #[test]
    fn where_rules_fire_in_order() {
        let e = env();
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("where true do {1}")),
            vec![(RuleTag::WhereTrue, p("{1}"))]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("where false do {1}")),
            vec![(RuleTag::WhereFalse, p("{} : {Int}"))]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("where c do ({} : {Int})")),
            vec![(RuleTag::WhereEmpty, p("{} : {Int}"))]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("where c do ({1} union {2})")),
            vec![(
                RuleTag::WhereUnion,
                p("(where c do {1}) union (where c do {2})")
            )]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("where c do (for (x <- t) {x.id})")),
            vec![(RuleTag::WhereComp, p("for (x <- t) (where c do {x.id})"))]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("where c do (where n = 1 do t)")),
            vec![(RuleTag::WhereWhere, p("where and(c, n = 1) do t"))]
        );
    }

    #[test]
    fn where_comp_renames_captured_binder() {
        let e = env().with_var("x", TypeExpr::Atom(AtomType::Bool));
        let redex = p("where x do (for (x <- t) {x.id})");
        let got = contract_root(&e, &Vec::new(), &redex);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, RuleTag::WhereComp);
        assert_eq!(got[0].1, p("for (x_1 <- t) (where x do {x_1.id})"));
    }

    #[test]
    fn empty_flatten_fires_only_on_non_relation_types() {
        let e = env();
        // u : {{Int}} is not a relation: flatten.
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("empty u")),
            vec![(RuleTag::EmptyFlatten, p("empty (for (x <- u) {<>})"))]
        );
        // t : {<id : Int>} is a relation: normal.
        assert!(tags(&e, &p("empty t")).is_empty());
        // The flattened form itself is normal at the root: {<>} is a relation.
        assert!(tags(&e, &p("empty (for (x <- u) {<>})")).is_empty());
    }

    #[test]
    fn bag_rules_mirror_set_rules() {
        let e = env();
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("bagfor (x <- b) {|x.a|}")).len(),
            0
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("bagfor (x <- {|<a = 1>|}) {|x.a|}")),
            vec![(RuleTag::BagcompSingleton, p("{|<a = 1>.a|}"))]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("bagfor (x <- bagwhere c do b) {|x.a|}")),
            vec![(
                RuleTag::BagcompWhereSrc,
                p("bagwhere c do (bagfor (x <- b) {|x.a|})")
            )]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("bagwhere c do (bagfor (x <- b) {|x.a|})")),
            vec![(
                RuleTag::BagwhereComp,
                p("bagfor (x <- b) (bagwhere c do {|x.a|})")
            )]
        );
        assert_eq!(
            contract_root(&e, &Vec::new(), &p("bagwhere false do {|1|}")),
            vec![(RuleTag::BagwhereFalse, p("{||} : {|Int|}"))]
        );
    }

    #[test]
    fn dedup_rules_change_kind_in_the_mixed_calculus() {
        let e = env();
        let cases = [
            ("dedup ({||} : {|Int|})", RuleTag::DedupEmpty, "{} : {Int}"),
            ("dedup {|n|}", RuleTag::DedupSingleton, "{n}"),
            (
                "dedup ({|n|} uplus {|1|})",
                RuleTag::DedupUnion,
                "(dedup {|n|}) union (dedup {|1|})",
            ),
            ("dedup (promote {n})", RuleTag::DedupPromote, "{n}"),
            (
                "dedup (bagfor (x <- b) {|x.a|})",
                RuleTag::DedupComp,
                "for (x <- dedup b) (dedup {|x.a|})",
            ),
            (
                "dedup (bagwhere c do b)",
                RuleTag::DedupWhere,
                "where c do (dedup b)",
            ),
            ("promote ({} : {Int})", RuleTag::PromoteEmpty, "{||} : {|Int|}"),
            ("promote {n}", RuleTag::PromoteSingleton, "{|n|}"),
            (
                "promote (where c do t)",
                RuleTag::PromoteWhere,
                "bagwhere c do (promote t)",
            ),
        ];
        for (src, tag, expect) in cases {
            assert_eq!(
                contract_root(&e, &Vec::new(), &p(src)),
                vec![(tag, p(expect))],
                "{src}"
            );
        }
    }

    #[test]
    fn promote_does_not_distribute_over_union_or_comprehension() {
        let e = env();
        for src in [
            "promote ({1} union {2})",
            "promote (for (x <- t) {x.id})",
            "promote (dedup b)",
            "dedup b",
        ] {
            assert!(tags(&e, &p(src)).is_empty(), "{src} should be normal at the root");
        }
        // And no enumerated step anywhere in them distributes ι.
        for src in ["promote ({n} union {n})", "promote (for (x <- t) {x.id})"] {
            for s in step_all(&e, &p(src)) {
                assert!(
                    !matches!(s.after, Term::Union(CollKind::Bag, _, _)),
                    "{src} must not step to a bag union"
                );
            }
        }
    }

    #[test]
    fn set_only_dedup_and_promote_stay_at_the_set_kind() {
        let row = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
        let e = TypeEnv::new(Calculus::SetOnly).with_var("t", TypeExpr::set_of(row));
        let cases = [
            ("dedup ({} : {Int})", RuleTag::DedupEmpty, "{} : {Int}"),
            ("dedup {1}", RuleTag::DedupSingleton, "{1}"),
            ("dedup (promote t)", RuleTag::DedupPromote, "t"),
            (
                "dedup (for (x <- t) {x.id})",
                RuleTag::DedupComp,
                "for (x <- dedup t) (dedup {x.id})",
            ),
            ("promote ({} : {Int})", RuleTag::PromoteEmpty, "{} : {Int}"),
            ("promote {1}", RuleTag::PromoteSingleton, "{1}"),
            (
                "promote (where true do t)",
                RuleTag::PromoteWhere,
                "where true do (promote t)",
            ),
        ];
        for (src, tag, expect) in cases {
            assert_eq!(
                contract_root(&e, &Vec::new(), &p(src)),
                vec![(tag, p(expect))],
                "{src}"
            );
        }
    }

    #[test]
    fn step_all_enumerates_every_position() {
        let e = env();
        let t = p("dedup (promote {n} uplus promote {1})");
        let steps = step_all(&e, &t);
        let got: Vec<(RuleTag, String)> = steps
            .iter()
            .map(|s| (s.rule, render_path(&s.position)))
            .collect();
        assert_eq!(
            got,
            vec![
                (RuleTag::DedupUnion, "ε".to_owned()),
                (RuleTag::PromoteSingleton, "0.0".to_owned()),
                (RuleTag::PromoteSingleton, "0.1".to_owned()),
            ]
        );
        // Replaying a step's position and rule on `before` gives `after`.
        for s in &steps {
            let sub = s.before.get_at(&s.position).unwrap();
            let contracta = contract_root(&e, &scope_at(&e, &s.before, &s.position), sub);
            let (_, c) = contracta.into_iter().find(|(tag, _)| *tag == s.rule).unwrap();
            assert_eq!(s.before.replace_at(&s.position, c), s.after);
        }
        assert!(step_all(&e, &p("{1}")).is_empty());
    }

    #[test]
    fn leftmost_outermost_prefers_shallow_then_first_rule() {
        let e = env();
        // Both the root (where-true) and the body (delta-const) are redexes;
        // the root wins.
        let s = first_step(&e, &p("where true do {1 + 2}")).unwrap();
        assert_eq!(s.rule, RuleTag::WhereTrue);
        assert_eq!(s.position, Vec::<usize>::new());
    }

    #[test]
    fn flagship_query_normalizes_in_two_steps() {
        let e = env();
        let t = p("for (y <- for (x <- t) {{x.id}}) y");
        assert_eq!(infer(&e, &t).unwrap(), TypeExpr::set_of(TypeExpr::Atom(AtomType::Int)));
        let got = normalize(&e, &t, Strategy::LeftmostOutermost, 1_000_000).unwrap();
        assert_eq!(got.term, p("for (x <- t) {x.id}"));
        let rules: Vec<RuleTag> = got.trace.iter().map(|s| s.rule).collect();
        assert_eq!(rules, vec![RuleTag::CompAssoc, RuleTag::CompSingleton]);
        assert_eq!(
            render_trace(&got.trace),
            "1 comp-assoc @ ε :: for (x <- t) for (y <- {{x.id}}) y\n\
             2 comp-singleton @ 0 :: for (x <- t) {x.id}\n"
        );
        assert!(is_normal(&e, &got.term));
    }

    #[test]
    fn random_strategy_is_seed_deterministic_and_converges() {
        let e = env();
        let t = p("dedup (promote {n} uplus promote {1 + 2})");
        let a = normalize(&e, &t, Strategy::Random(7), 1_000_000).unwrap();
        let b = normalize(&e, &t, Strategy::Random(7), 1_000_000).unwrap();
        assert_eq!(a.term, b.term);
        assert_eq!(
            a.trace.iter().map(|s| (s.rule, s.position.clone())).collect::<Vec<_>>(),
            b.trace.iter().map(|s| (s.rule, s.position.clone())).collect::<Vec<_>>()
        );
        let lo = normalize(&e, &t, Strategy::LeftmostOutermost, 1_000_000).unwrap();
        assert_eq!(a.term, lo.term);
        assert_eq!(lo.term, p("{n} union {3}"));
    }

    #[test]
    fn exhaustive_strategy_reports_all_normal_forms() {
        let e = env();
        let t = p("dedup (promote {1} uplus promote {2})");
        let got = normalize(&e, &t, Strategy::Exhaustive, 10_000).unwrap();
        assert_eq!(got.term, p("{1} union {2}"));
        assert_eq!(got.normal_forms, vec![p("{1} union {2}")]);
        // The flagship query also has a unique normal form.
        let t = p("for (y <- for (x <- t) {{x.id}}) y");
        let forms = normal_forms_exhaustive(&e, &t, 10_000).unwrap();
        assert_eq!(forms, vec![p("for (x <- t) {x.id}")]);
    }

    #[test]
    fn fuel_exhaustion_reports_the_last_term() {
        let e = env();
        let t = p("for (y <- for (x <- t) {{x.id}}) y");
        match normalize(&e, &t, Strategy::LeftmostOutermost, 1) {
            Err(RewriteError::FuelExhausted { fuel: 1, last }) => {
                assert_eq!(last, p("for (x <- t) for (y <- {{x.id}}) y"));
            }
            other => panic!("expected fuel exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_rules_with_equal_contracta_are_reported_once() {
        let e = env();
        // Both comp-empty-head and comp-empty-src produce the same empty.
        let t = p("for (x <- {} : {Int}) ({} : {Int})");
        let got = contract_root(&e, &Vec::new(), &t);
        assert_eq!(got, vec![(RuleTag::CompEmptyHead, p("{} : {Int}"))]);
        // where-true on an empty body: where-true wins, where-empty dedups.
        let t = p("where true do ({} : {Int})");
        let got = contract_root(&e, &Vec::new(), &t);
        assert_eq!(got, vec![(RuleTag::WhereTrue, p("{} : {Int}"))]);
        // Distinct contracta are both kept, in rule order.
        let t = p("for (x <- ({1} union {2})) ({} : {Bool})");
        let got = tags(&e, &t);
        assert_eq!(got, vec![RuleTag::CompEmptyHead, RuleTag::CompUnionSrc]);
    }

    #[test]
    fn steps_preserve_types() {
        let e = env();
        for src in [
            "for (y <- for (x <- t) {{x.id}}) y",
            "dedup (promote {n} uplus promote {1})",
            "where c do (for (x <- t) {x.id})",
            "bagfor (x <- bagwhere c do b) {|x.a|}",
            "empty u",
            r"(\x : Int. {x}) (2 + 3)",
        ] {
            let t = p(src);
            let ty = infer(&e, &t).expect(src);
            for s in step_all(&e, &t) {
                assert_eq!(infer(&e, &s.after).expect(src), ty, "{src} via {}", s.rule);
            }
        }
    }
}
