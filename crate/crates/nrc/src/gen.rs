//! Seeded random generation of well-typed terms, relation queries,
//! databases, and the hole/instantiation configurations the property suites
//! run on.
//!
//! Everything here is deterministic in the seed: the same inputs produce the
//! same output, so failures found by a suite can be replayed from the seed
//! alone. Generation is type-directed — terms are built to a target type and
//! double-checked with the type checker before being returned — and roughly
//! 30% of collection draws come from redex templates (one family per rewrite
//! rule) so the rewrite relation is exercised far more densely than uniform
//! generation would manage.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ast::{AtomType, CollKind, Name, Term, TypeExpr};
use crate::eval::{Database, Table, Value};
use crate::meta::Instantiation;
use crate::typing::{infer, Calculus, TypeEnv};

/// How much of the calculus the generator may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fragment {
    /// Sets only: no bags, no `dedup`/`promote`.
    SetOnly,
    /// Sets plus `dedup`/`promote` as set-to-set operators (the image of
    /// erasure).
    DeltaIota,
    /// The full mixed calculus: bags, `dedup`, `promote`.
    Heterogeneous,
}

/// Configuration for [`gen_well_typed`].
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub seed: u64,
    /// Upper bound on the size (node count) of the generated term.
    pub max_size: usize,
    /// Generate at this type; when absent a type is drawn from the fragment.
    pub type_target: Option<TypeExpr>,
    /// Free variables (tables and constants) the term may use.
    pub table_env: TypeEnv,
    pub fragment: Fragment,
}

impl GenConfig {
    pub fn new(seed: u64, fragment: Fragment) -> GenConfig {
        GenConfig {
            seed,
            max_size: 40,
            type_target: None,
            table_env: default_tables(fragment),
            fragment,
        }
    }
}

/// A generated term together with the type it was checked at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedTerm {
    pub term: Term,
    pub ty: TypeExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("generation failed after {attempts} attempts (seed {seed}): {reason}")]
pub struct GenerationFailed {
    pub seed: u64,
    pub attempts: u32,
    pub reason: String,
}

/// Fraction of collection draws that come from redex templates.
const REDEX_BIAS: f64 = 0.3;
const MAX_ATTEMPTS: u32 = 64;

/// A small table environment matching the fragment: set tables always, a bag
/// table only where bags exist.
pub fn default_tables(fragment: Fragment) -> TypeEnv {
    let calculus = match fragment {
        Fragment::Heterogeneous => Calculus::SetBag,
        _ => Calculus::SetOnly,
    };
    let idrow = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
    let wide = TypeExpr::record(vec![
        ("id".into(), TypeExpr::Atom(AtomType::Int)),
        ("name".into(), TypeExpr::Atom(AtomType::String)),
    ]);
    let mut env = TypeEnv::new(calculus)
        .with_var("t", TypeExpr::set_of(idrow.clone()))
        .with_var("u", TypeExpr::set_of(wide));
    if fragment == Fragment::Heterogeneous {
        env = env.with_var("bb", TypeExpr::bag_of(idrow));
    }
    env
}

/// Generates a term that type-checks at the (chosen or given) target type in
/// `cfg.table_env`, with size ≤ `cfg.max_size`. Deterministic per seed.
pub fn gen_well_typed(cfg: &GenConfig) -> Result<TypedTerm, GenerationFailed> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        env: cfg.table_env.clone(),
        fragment: cfg.fragment,
        scope: Vec::new(),
        counter: 0,
    };
    for _ in 0..MAX_ATTEMPTS {
        let ty = match &cfg.type_target {
            Some(ty) => ty.clone(),
            None => g.gen_type(2),
        };
        let term = g.term(&ty, cfg.max_size);
        g.scope.clear();
        if term.size() > cfg.max_size {
            continue;
        }
        if infer(&cfg.table_env, &term).as_ref() == Ok(&ty) {
            return Ok(TypedTerm { term, ty });
        }
    }
    Err(GenerationFailed {
        seed: cfg.seed,
        attempts: MAX_ATTEMPTS,
        reason: "no candidate passed the size and type checks".into(),
    })
}

struct Gen {
    rng: ChaCha8Rng,
    env: TypeEnv,
    fragment: Fragment,
    /// Binders currently in scope, innermost last.
    scope: Vec<(Name, TypeExpr)>,
    counter: usize,
}

impl Gen {
    fn bags(&self) -> bool {
        self.fragment == Fragment::Heterogeneous
    }

    fn fresh_binder(&mut self) -> Name {
        let mut avoid: BTreeSet<Name> = self.env.vars.keys().cloned().collect();
        avoid.extend(self.scope.iter().map(|(n, _)| n.clone()));
        loop {
            self.counter += 1;
            let cand = format!("v{}", self.counter);
            if !avoid.contains(&cand) {
                return cand;
            }
        }
    }

    fn coll_kind(&mut self) -> CollKind {
        if self.bags() && self.rng.gen_bool(0.5) {
            CollKind::Bag
        } else {
            CollKind::Set
        }
    }

    fn atom(&mut self) -> AtomType {
        match self.rng.gen_range(0..4) {
            0 | 1 => AtomType::Int,
            2 => AtomType::Bool,
            _ => AtomType::String,
        }
    }

    /// A first-order type of the fragment: atoms, flat-ish records, and
    /// collections nested up to `depth`. Collections dominate — they are
    /// where the interesting operators live — and function types enter terms
    /// through beta-redex templates instead, so every constructor is still
    /// covered.
    fn gen_type(&mut self, depth: usize) -> TypeExpr {
        let roll = self.rng.gen_range(0..8);
        match roll {
            0 => TypeExpr::Atom(self.atom()),
            1 => self.gen_record_type(),
            _ if depth > 0 => {
                let kind = self.coll_kind();
                TypeExpr::coll(kind, self.gen_type(depth - 1))
            }
            _ => TypeExpr::Atom(self.atom()),
        }
    }

    fn gen_record_type(&mut self) -> TypeExpr {
        let labels = ["a", "b", "c"];
        let n = self.rng.gen_range(1..=3);
        let fields =
            labels.iter().take(n).map(|l| (l.to_string(), TypeExpr::Atom(self.atom()))).collect();
        TypeExpr::record(fields)
    }

    /// Variables in scope (binders shadowing tables) with exactly this type.
    fn vars_of(&self, ty: &TypeExpr) -> Vec<Name> {
        let mut out = Vec::new();
        for (n, t) in &self.env.vars {
            if t == ty && !self.scope.iter().any(|(s, _)| s == n) {
                out.push(n.clone());
            }
        }
        for (n, t) in &self.scope {
            if t == ty {
                out.push(n.clone());
            }
        }
        out
    }

    /// Record-typed variables with a field of type `ty`, as (var, label).
    fn projections_of(&self, ty: &TypeExpr) -> Vec<(Name, String)> {
        let mut out = Vec::new();
        let mut consider = |n: &Name, t: &TypeExpr| {
            if let TypeExpr::Record(fields) = t {
                for (l, ft) in fields {
                    if ft == ty {
                        out.push((n.clone(), l.clone()));
                    }
                }
            }
        };
        for (n, t) in &self.env.vars {
            if !self.scope.iter().any(|(s, _)| s == n) {
                consider(n, t);
            }
        }
        for (n, t) in &self.scope {
            consider(n, t);
        }
        out
    }

    /// The cheapest closed term of a type; total, so generation never gets
    /// stuck when the budget runs out.
    fn leaf(&mut self, ty: &TypeExpr) -> Term {
        match ty {
            TypeExpr::Atom(AtomType::Int) => Term::int(self.rng.gen_range(0..10)),
            TypeExpr::Atom(AtomType::Bool) => Term::bool(self.rng.gen()),
            TypeExpr::Atom(AtomType::String) => {
                let pool = ["a", "b", "xy"];
                Term::str(pool[self.rng.gen_range(0..pool.len())])
            }
            TypeExpr::Record(fields) => {
                let fs = fields.iter().map(|(l, t)| (l.clone(), self.leaf(t))).collect();
                Term::record(fs)
            }
            TypeExpr::Coll(kind, elem) => Term::empty(*kind, (**elem).clone()),
            TypeExpr::Fun(dom, cod) => {
                let x = self.fresh_binder();
                let body = self.leaf(cod);
                Term::lam(x, (**dom).clone(), body)
            }
        }
    }

    fn term(&mut self, ty: &TypeExpr, budget: usize) -> Term {
        if budget <= 1 {
            let vars = self.vars_of(ty);
            if !vars.is_empty() && self.rng.gen_bool(0.5) {
                return Term::var(vars[self.rng.gen_range(0..vars.len())].clone());
            }
            return self.leaf(ty);
        }
        if self.rng.gen_bool(REDEX_BIAS) {
            if let Some(t) = self.redex_template(ty, budget) {
                return t;
            }
        }
        // A var or projection of the right type, occasionally.
        if self.rng.gen_bool(0.2) {
            let vars = self.vars_of(ty);
            if !vars.is_empty() {
                return Term::var(vars[self.rng.gen_range(0..vars.len())].clone());
            }
        }
        if self.rng.gen_bool(0.15) {
            let projs = self.projections_of(ty);
            if !projs.is_empty() {
                let (v, l) = projs[self.rng.gen_range(0..projs.len())].clone();
                return Term::proj(Term::var(v), l);
            }
        }
        match ty {
            TypeExpr::Atom(a) => self.atom_term(*a, budget),
            TypeExpr::Record(fields) => {
                let share = (budget - 1) / fields.len().max(1);
                let fs = fields
                    .iter()
                    .map(|(l, t)| (l.clone(), self.term(t, share.max(1))))
                    .collect::<Vec<_>>();
                Term::record(fs)
            }
            TypeExpr::Coll(kind, elem) => self.coll_term(*kind, elem, budget),
            TypeExpr::Fun(dom, cod) => {
                let x = self.fresh_binder();
                self.scope.push((x.clone(), (**dom).clone()));
                let body = self.term(cod, budget - 1);
                self.scope.pop();
                Term::lam(x, (**dom).clone(), body)
            }
        }
    }

    fn atom_term(&mut self, a: AtomType, budget: usize) -> Term {
        match a {
            AtomType::Int => match self.rng.gen_range(0..3) {
                0 if budget >= 3 => {
                    let l = self.term(&TypeExpr::Atom(AtomType::Int), (budget - 1) / 2);
                    let r = self.term(&TypeExpr::Atom(AtomType::Int), (budget - 1) / 2);
                    Term::Const(crate::ast::Cst::Add, vec![l, r])
                }
                _ => self.leaf(&TypeExpr::Atom(a)),
            },
            AtomType::Bool => match self.rng.gen_range(0..5) {
                0 if budget >= 3 => {
                    let op = if self.rng.gen() { crate::ast::Cst::And } else { crate::ast::Cst::Or };
                    let l = self.term(&TypeExpr::Atom(AtomType::Bool), (budget - 1) / 2);
                    let r = self.term(&TypeExpr::Atom(AtomType::Bool), (budget - 1) / 2);
                    Term::Const(op, vec![l, r])
                }
                1 if budget >= 2 => {
                    let x = self.term(&TypeExpr::Atom(AtomType::Bool), budget - 1);
                    Term::Const(crate::ast::Cst::Not, vec![x])
                }
                2 if budget >= 3 => {
                    let ta = if self.rng.gen() { AtomType::Int } else { AtomType::String };
                    let op =
                        if ta == AtomType::Int && self.rng.gen() { crate::ast::Cst::Le } else { crate::ast::Cst::Eq };
                    let l = self.term(&TypeExpr::Atom(ta), (budget - 1) / 2);
                    let r = self.term(&TypeExpr::Atom(ta), (budget - 1) / 2);
                    Term::Const(op, vec![l, r])
                }
                3 if budget >= 3 => {
                    let elem = self.gen_type(1);
                    let arg = self.term(&TypeExpr::set_of(elem), budget - 1);
                    Term::is_empty(arg)
                }
                _ => self.leaf(&TypeExpr::Atom(a)),
            },
            AtomType::String => self.leaf(&TypeExpr::Atom(a)),
        }
    }

    fn coll_term(&mut self, kind: CollKind, elem: &TypeExpr, budget: usize) -> Term {
        if budget <= 1 {
            return Term::empty(kind, elem.clone());
        }
        // Weighted constructor choice; weights tilt toward comprehensions so
        // generated terms have something to normalize.
        let mut choices: Vec<(u32, u8)> = vec![(1, 0), (3, 1), (2, 2), (4, 3), (2, 4)];
        if kind == CollKind::Set && self.bags() {
            choices.push((4, 5)); // dedup of a bag
        }
        if kind == CollKind::Set && self.fragment == Fragment::DeltaIota {
            choices.push((3, 6)); // dedup/promote as set endomaps
        }
        if kind == CollKind::Bag {
            choices.push((4, 7)); // promote of a set
        }
        let total: u32 = choices.iter().map(|(w, _)| w).sum();
        let mut roll = self.rng.gen_range(0..total);
        let mut pick = 0u8;
        for (w, c) in &choices {
            if roll < *w {
                pick = *c;
                break;
            }
            roll -= w;
        }
        match pick {
            0 => Term::empty(kind, elem.clone()),
            1 => Term::single(kind, self.term(elem, budget - 1)),
            2 => {
                let l = self.coll_term(kind, elem, (budget - 1) / 2);
                let r = self.coll_term(kind, elem, (budget - 1) / 2);
                Term::union(kind, l, r)
            }
            3 => {
                let src_elem = self.gen_type(1);
                let src = self.term(&TypeExpr::coll(kind, src_elem.clone()), (budget - 1) / 2);
                let x = self.fresh_binder();
                self.scope.push((x.clone(), src_elem));
                let head = self.term(&TypeExpr::coll(kind, elem.clone()), (budget - 1) / 2);
                self.scope.pop();
                Term::comp(kind, head, x, src)
            }
            4 => {
                let cond = self.term(&TypeExpr::Atom(AtomType::Bool), (budget - 1) / 3);
                let body = self.term(&TypeExpr::coll(kind, elem.clone()), (budget - 1) / 2);
                Term::where_(kind, cond, body)
            }
            5 => Term::dedup(self.term(&TypeExpr::bag_of(elem.clone()), budget - 1)),
            6 => {
                let inner = self.term(&TypeExpr::set_of(elem.clone()), budget - 1);
                if self.rng.gen() {
                    Term::dedup(inner)
                } else {
                    Term::promote(inner)
                }
            }
            _ => Term::promote(self.term(&TypeExpr::set_of(elem.clone()), budget - 1)),
        }
    }

    /// A term whose root is a known redex: one family of shapes per rewrite
    /// rule, so every contraction gets exercised. Returns `None` when no
    /// family fits the target type or budget.
    fn redex_template(&mut self, ty: &TypeExpr, budget: usize) -> Option<Term> {
        if budget < 4 {
            return None;
        }
        // Beta and projection redexes exist at every type.
        let universal = self.rng.gen_range(0..5);
        if universal == 0 {
            // (\x : A. body) arg
            let dom = self.gen_type(1);
            let x = self.fresh_binder();
            let arg = self.term(&dom, (budget - 2) / 3);
            self.scope.push((x.clone(), dom.clone()));
            let body = self.term(ty, (budget - 2) / 2);
            self.scope.pop();
            return Some(Term::app(Term::lam(x, dom, body), arg));
        }
        if universal == 1 {
            // <a = M, pad = N>.a
            let pad = self.leaf(&TypeExpr::Atom(AtomType::Int));
            let m = self.term(ty, budget - 3);
            let rec =
                Term::record(vec![("a".into(), m), ("pad".into(), pad)]);
            return Some(Term::proj(rec, "a"));
        }
        match ty {
            TypeExpr::Atom(AtomType::Int) => {
                Some(Term::Const(crate::ast::Cst::Add, vec![Term::int(1), Term::int(2)]))
            }
            TypeExpr::Atom(AtomType::Bool) => Some(match self.rng.gen_range(0..3) {
                0 => Term::Const(crate::ast::Cst::And, vec![Term::bool(true), Term::bool(false)]),
                1 => Term::Const(crate::ast::Cst::Le, vec![Term::int(1), Term::int(2)]),
                // empty over a non-relation set: rewrites through the
                // flattening rule.
                _ => Term::is_empty(self.term(
                    &TypeExpr::set_of(TypeExpr::set_of(TypeExpr::Atom(AtomType::Int))),
                    budget - 2,
                )),
            }),
            TypeExpr::Coll(kind, elem) => Some(self.coll_redex(*kind, elem, budget)),
            _ => None,
        }
    }

    fn coll_redex(&mut self, kind: CollKind, elem: &TypeExpr, budget: usize) -> Term {
        let target = TypeExpr::coll(kind, elem.clone());
        let b = budget.saturating_sub(2).max(2);
        let mut families: Vec<u8> = (0..12).collect();
        if kind == CollKind::Set && self.bags() {
            families.push(12); // dedup chains
        }
        if kind == CollKind::Bag {
            families.push(13); // promote chains
        }
        let fam = families[self.rng.gen_range(0..families.len())];
        match fam {
            // comprehension with an empty head / empty source
            0 => {
                let src_elem = self.gen_type(0);
                let src = self.term(&TypeExpr::coll(kind, src_elem.clone()), b / 2);
                let x = self.fresh_binder();
                Term::comp(kind, Term::empty(kind, elem.clone()), x, src)
            }
            1 => {
                let src_elem = self.gen_type(0);
                let x = self.fresh_binder();
                self.scope.push((x.clone(), src_elem.clone()));
                let head = self.term(&target, b / 2);
                self.scope.pop();
                Term::comp(kind, head, x, Term::empty(kind, src_elem))
            }
            // comprehension over a singleton
            2 => {
                let src_elem = self.gen_type(0);
                let v = self.term(&src_elem, b / 3);
                let x = self.fresh_binder();
                self.scope.push((x.clone(), src_elem.clone()));
                let head = self.term(&target, b / 2);
                self.scope.pop();
                Term::comp(kind, head, x, Term::single(kind, v))
            }
            // union in head / union in source
            3 => {
                let src_elem = self.gen_type(0);
                let src = self.term(&TypeExpr::coll(kind, src_elem.clone()), b / 3);
                let x = self.fresh_binder();
                self.scope.push((x.clone(), src_elem));
                let h1 = self.term(&target, b / 3);
                let h2 = self.term(&target, b / 3);
                self.scope.pop();
                Term::comp(kind, Term::union(kind, h1, h2), x, src)
            }
            4 => {
                let src_elem = self.gen_type(0);
                let s1 = self.term(&TypeExpr::coll(kind, src_elem.clone()), b / 3);
                let s2 = self.term(&TypeExpr::coll(kind, src_elem.clone()), b / 3);
                let x = self.fresh_binder();
                self.scope.push((x.clone(), src_elem));
                let head = self.term(&target, b / 3);
                self.scope.pop();
                Term::comp(kind, head, x, Term::union(kind, s1, s2))
            }
            // comprehension over a comprehension (associativity)
            5 => {
                let mid = self.gen_type(0);
                let inner_elem = self.gen_type(0);
                let inner_src = self.term(&TypeExpr::coll(kind, inner_elem.clone()), b / 4);
                let y = self.fresh_binder();
                self.scope.push((y.clone(), inner_elem));
                let inner_head = self.term(&TypeExpr::coll(kind, mid.clone()), b / 4);
                self.scope.pop();
                let src = Term::comp(kind, inner_head, y, inner_src);
                let x = self.fresh_binder();
                self.scope.push((x.clone(), mid));
                let head = self.term(&target, b / 3);
                self.scope.pop();
                Term::comp(kind, head, x, src)
            }
            // comprehension over a guard
            6 => {
                let src_elem = self.gen_type(0);
                let cond = self.term(&TypeExpr::Atom(AtomType::Bool), b / 4);
                let inner = self.term(&TypeExpr::coll(kind, src_elem.clone()), b / 4);
                let src = Term::where_(kind, cond, inner);
                let x = self.fresh_binder();
                self.scope.push((x.clone(), src_elem));
                let head = self.term(&target, b / 3);
                self.scope.pop();
                Term::comp(kind, head, x, src)
            }
            // guards: literal condition, empty body, union body,
            // comprehension body, nested guard
            7 => Term::where_(kind, Term::bool(self.rng.gen()), self.term(&target, b)),
            8 => {
                let cond = self.term(&TypeExpr::Atom(AtomType::Bool), b / 2);
                Term::where_(kind, cond, Term::empty(kind, elem.clone()))
            }
            9 => {
                let cond = self.term(&TypeExpr::Atom(AtomType::Bool), b / 3);
                let l = self.term(&target, b / 3);
                let r = self.term(&target, b / 3);
                Term::where_(kind, cond, Term::union(kind, l, r))
            }
            10 => {
                let cond = self.term(&TypeExpr::Atom(AtomType::Bool), b / 3);
                let src_elem = self.gen_type(0);
                let src = self.term(&TypeExpr::coll(kind, src_elem.clone()), b / 3);
                let x = self.fresh_binder();
                self.scope.push((x.clone(), src_elem));
                let head = self.term(&target, b / 3);
                self.scope.pop();
                Term::where_(kind, cond, Term::comp(kind, head, x, src))
            }
            11 => {
                let c1 = self.term(&TypeExpr::Atom(AtomType::Bool), b / 3);
                let c2 = self.term(&TypeExpr::Atom(AtomType::Bool), b / 3);
                let body = self.term(&target, b / 3);
                Term::where_(kind, c1, Term::where_(kind, c2, body))
            }
            // dedup pushed through each bag constructor
            12 => {
                let bag = TypeExpr::bag_of(elem.clone());
                let inner = match self.rng.gen_range(0..6) {
                    0 => Term::empty(CollKind::Bag, elem.clone()),
                    1 => Term::single(CollKind::Bag, self.term(elem, b / 2)),
                    2 => {
                        let l = self.term(&bag, b / 2);
                        let r = self.term(&bag, b / 2);
                        Term::union(CollKind::Bag, l, r)
                    }
                    3 => Term::promote(self.term(&target, b / 2)),
                    4 => {
                        let cond = self.term(&TypeExpr::Atom(AtomType::Bool), b / 3);
                        let body = self.term(&bag, b / 2);
                        Term::where_(CollKind::Bag, cond, body)
                    }
                    _ => {
                        let src_elem = self.gen_type(0);
                        let src =
                            self.term(&TypeExpr::bag_of(src_elem.clone()), b / 3);
                        let x = self.fresh_binder();
                        self.scope.push((x.clone(), src_elem));
                        let head = self.term(&bag, b / 3);
                        self.scope.pop();
                        Term::comp(CollKind::Bag, head, x, src)
                    }
                };
                Term::dedup(inner)
            }
            // promote pushed through each set constructor it commutes with
            _ => {
                let set = TypeExpr::set_of(elem.clone());
                let inner = match self.rng.gen_range(0..3) {
                    0 => Term::empty(CollKind::Set, elem.clone()),
                    1 => Term::single(CollKind::Set, self.term(elem, b / 2)),
                    _ => {
                        let cond = self.term(&TypeExpr::Atom(AtomType::Bool), b / 3);
                        let body = self.term(&set, b / 2);
                        Term::where_(CollKind::Set, cond, body)
                    }
                };
                Term::promote(inner)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Relation queries (for the semantics and SQL suites)
// ---------------------------------------------------------------------------

/// Generates a closed, relation-typed query over the tables of `env`.
///
/// The shapes stay inside the fragment whose normal forms the SQL recognizer
/// accepts: heads build flat rows, lambdas only appear applied, and
/// collection subterms are themselves relation queries (which normalization
/// flattens into generators). Nesting, correlation through `empty`, and
/// mixed set/bag operators are all exercised.
pub fn gen_query(env: &TypeEnv, seed: u64, max_size: usize) -> TypedTerm {
    let mut g = QueryGen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        tables: env
            .vars
            .iter()
            .filter_map(|(n, ty)| match ty {
                TypeExpr::Coll(k, elem) => {
                    crate::sqlgen::row_shape(elem).map(|_| (n.clone(), *k, (**elem).clone()))
                }
                _ => None,
            })
            .collect(),
        scope: Vec::new(),
        counter: 0,
    };
    assert!(!g.tables.is_empty(), "gen_query needs at least one flat table");
    let kind = if g.rng.gen_bool(0.5) { CollKind::Set } else { CollKind::Bag };
    let elem = g.pick_elem();
    let term = g.rel(kind, &elem, max_size.max(6));
    let ty = TypeExpr::coll(kind, elem);
    debug_assert_eq!(infer(env, &term).as_ref(), Ok(&ty));
    TypedTerm { term, ty }
}

struct QueryGen {
    rng: ChaCha8Rng,
    /// `(name, kind, row type)` of each usable table.
    tables: Vec<(Name, CollKind, TypeExpr)>,
    /// Row- or scalar-typed binders in scope.
    scope: Vec<(Name, TypeExpr)>,
    counter: usize,
}

impl QueryGen {
    fn fresh_binder(&mut self) -> Name {
        self.counter += 1;
        format!("q{}", self.counter)
    }

    /// An output row type: some table's row, a fresh flat record, or a bare
    /// atom (single-column query).
    fn pick_elem(&mut self) -> TypeExpr {
        match self.rng.gen_range(0..4) {
            0 | 1 => {
                let i = self.rng.gen_range(0..self.tables.len());
                self.tables[i].2.clone()
            }
            2 => TypeExpr::Atom(AtomType::Int),
            _ => TypeExpr::record(vec![
                ("k".into(), TypeExpr::Atom(AtomType::Int)),
                ("s".into(), TypeExpr::Atom(AtomType::String)),
            ]),
        }
    }

    fn rel(&mut self, kind: CollKind, elem: &TypeExpr, budget: usize) -> Term {
        if budget <= 2 {
            // Prefer reading a matching table over the empty leaf.
            if let Some(t) = self.exact_table(kind, elem) {
                return t;
            }
            return Term::empty(kind, elem.clone());
        }
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=11 => {
                if let Some(t) = self.exact_table(kind, elem) {
                    t
                } else {
                    Term::single(kind, self.row_expr(elem, budget - 1))
                }
            }
            12..=15 => Term::empty(kind, elem.clone()),
            16..=33 => Term::single(kind, self.row_expr(elem, budget - 1)),
            34..=45 => {
                let l = self.rel(kind, elem, (budget - 1) / 2);
                let r = self.rel(kind, elem, (budget - 1) / 2);
                Term::union(kind, l, r)
            }
            46..=73 => {
                // A generator: source is a table or a nested subquery,
                // adapted to the comprehension's kind when needed.
                let (src, src_elem) = self.source(kind, (budget - 1) / 2);
                let x = self.fresh_binder();
                self.scope.push((x.clone(), src_elem));
                let head = self.rel(kind, elem, (budget - 1) / 2);
                self.scope.pop();
                Term::comp(kind, head, x, src)
            }
            74..=85 => {
                let cond = self.guard((budget - 1) / 2);
                let body = self.rel(kind, elem, (budget - 1) / 2);
                Term::where_(kind, cond, body)
            }
            86..=92 => match kind {
                CollKind::Set => Term::dedup(self.rel(CollKind::Bag, elem, budget - 1)),
                CollKind::Bag => Term::promote(self.rel(CollKind::Set, elem, budget - 1)),
            },
            _ => {
                // A beta redex whose body is itself a query: lambdas occur,
                // but only applied, so they normalize away.
                let x = self.fresh_binder();
                let dom = TypeExpr::Atom(AtomType::Int);
                let arg = self.scalar(&AtomType::Int, 3);
                self.scope.push((x.clone(), dom.clone()));
                let body = self.rel(kind, elem, budget.saturating_sub(4));
                self.scope.pop();
                Term::app(Term::lam(x, dom, body), arg)
            }
        }
    }

    fn exact_table(&mut self, kind: CollKind, elem: &TypeExpr) -> Option<Term> {
        let hits: Vec<&Name> = self
            .tables
            .iter()
            .filter(|(_, k, e)| *k == kind && e == elem)
            .map(|(n, _, _)| n)
            .collect();
        if hits.is_empty() {
            return None;
        }
        Some(Term::var(hits[self.rng.gen_range(0..hits.len())].clone()))
    }

    /// A generator source of the given kind: a table (kind-adapted with
    /// `dedup`/`promote`) or a nested subquery.
    fn source(&mut self, kind: CollKind, budget: usize) -> (Term, TypeExpr) {
        if self.rng.gen_bool(0.7) || budget < 4 {
            let i = self.rng.gen_range(0..self.tables.len());
            let (name, tkind, row) = self.tables[i].clone();
            let var = Term::var(name);
            let src = match (tkind, kind) {
                (a, b) if a == b => var,
                (CollKind::Bag, CollKind::Set) => Term::dedup(var),
                (CollKind::Set, CollKind::Bag) => Term::promote(var),
                _ => unreachable!(),
            };
            (src, row)
        } else {
            let src_elem = self.pick_elem();
            let sub = self.rel(kind, &src_elem, budget);
            (sub, src_elem)
        }
    }

    fn guard(&mut self, budget: usize) -> Term {
        if budget <= 2 {
            return Term::bool(self.rng.gen());
        }
        match self.rng.gen_range(0..6) {
            0 => {
                let l = self.scalar(&AtomType::Int, (budget - 1) / 2);
                let r = self.scalar(&AtomType::Int, (budget - 1) / 2);
                let op = if self.rng.gen() { crate::ast::Cst::Le } else { crate::ast::Cst::Eq };
                Term::Const(op, vec![l, r])
            }
            1 => {
                let op = if self.rng.gen() { crate::ast::Cst::And } else { crate::ast::Cst::Or };
                let l = self.guard((budget - 1) / 2);
                let r = self.guard((budget - 1) / 2);
                Term::Const(op, vec![l, r])
            }
            2 => Term::Const(crate::ast::Cst::Not, vec![self.guard(budget - 1)]),
            3 => {
                // A correlated emptiness test over a set subquery.
                let elem = self.pick_elem();
                Term::is_empty(self.rel(CollKind::Set, &elem, (budget - 1).min(8)))
            }
            _ => {
                let l = self.scalar(&AtomType::Int, (budget - 1) / 2);
                let r = self.scalar(&AtomType::Int, (budget - 1) / 2);
                Term::Const(crate::ast::Cst::Le, vec![l, r])
            }
        }
    }

    /// A row expression at `elem` over the binders in scope.
    fn row_expr(&mut self, elem: &TypeExpr, budget: usize) -> Term {
        match elem {
            TypeExpr::Record(fields) => {
                let share = budget / fields.len().max(1);
                let fs = fields
                    .iter()
                    .map(|(l, t)| match t {
                        TypeExpr::Atom(a) => (l.clone(), self.scalar(a, share.max(1))),
                        _ => (l.clone(), Term::int(0)), // rows are flat by construction
                    })
                    .collect();
                Term::record(fs)
            }
            TypeExpr::Atom(a) => self.scalar(a, budget),
            _ => Term::int(0),
        }
    }

    fn scalar(&mut self, a: &AtomType, budget: usize) -> Term {
        // Projections from row binders and direct scalar binders first.
        let mut candidates: Vec<Term> = Vec::new();
        for (n, ty) in &self.scope {
            match ty {
                TypeExpr::Record(fields) => {
                    for (l, ft) in fields {
                        if ft == &TypeExpr::Atom(*a) {
                            candidates.push(Term::proj(Term::var(n.clone()), l.clone()));
                        }
                    }
                }
                TypeExpr::Atom(av) if av == a => candidates.push(Term::var(n.clone())),
                _ => {}
            }
        }
        if !candidates.is_empty() && self.rng.gen_bool(0.6) {
            let i = self.rng.gen_range(0..candidates.len());
            return candidates.swap_remove(i);
        }
        match a {
            AtomType::Int if budget >= 3 && self.rng.gen_bool(0.3) => {
                let l = self.scalar(&AtomType::Int, (budget - 1) / 2);
                let r = self.scalar(&AtomType::Int, (budget - 1) / 2);
                Term::Const(crate::ast::Cst::Add, vec![l, r])
            }
            AtomType::Int => Term::int(self.rng.gen_range(0..4)),
            AtomType::Bool => Term::bool(self.rng.gen()),
            AtomType::String => {
                let pool = ["a", "b", "c"];
                Term::str(pool[self.rng.gen_range(0..pool.len())])
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Schemas and databases
// ---------------------------------------------------------------------------

/// A random schema: 1–3 flat tables; when there are at least two, both
/// collection kinds appear.
pub fn gen_schema(seed: u64) -> Vec<(Name, CollKind, TypeExpr)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3);
    let names = ["t", "u", "v"];
    let field_pool: [(&str, AtomType); 3] =
        [("n", AtomType::Int), ("name", AtomType::String), ("flag", AtomType::Bool)];
    (0..n)
        .map(|i| {
            let kind = if i == 0 {
                CollKind::Set
            } else if i == n - 1 {
                CollKind::Bag
            } else if rng.gen() {
                CollKind::Set
            } else {
                CollKind::Bag
            };
            // Always include a small integer key so joins and guards hit.
            let mut fields = vec![("id".to_string(), TypeExpr::Atom(AtomType::Int))];
            let extra = rng.gen_range(0..=2);
            for (l, a) in field_pool.iter().take(extra) {
                fields.push((l.to_string(), TypeExpr::Atom(*a)));
            }
            (names[i].to_string(), kind, TypeExpr::record(fields))
        })
        .collect()
}

/// The typing environment a schema induces.
pub fn schema_env(schema: &[(Name, CollKind, TypeExpr)]) -> TypeEnv {
    let mut env = TypeEnv::new(Calculus::SetBag);
    for (n, k, row) in schema {
        env = env.with_var(n.clone(), TypeExpr::coll(*k, row.clone()));
    }
    env
}

/// A random database instance for a schema: ≤ 4 rows per table, cell values
/// drawn from small pools so joins, guards, and duplicates actually occur.
pub fn gen_db(seed: u64, schema: &[(Name, CollKind, TypeExpr)]) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tables = std::collections::BTreeMap::new();
    for (name, kind, row) in schema {
        let fields = match row {
            TypeExpr::Record(fs) => fs.clone(),
            _ => Vec::new(),
        };
        let nrows = rng.gen_range(0..=4);
        let mut set = BTreeSet::new();
        let mut bag = std::collections::BTreeMap::new();
        for _ in 0..nrows {
            let mut rec = std::collections::BTreeMap::new();
            for (l, ty) in &fields {
                let v = match ty {
                    TypeExpr::Atom(AtomType::Int) => Value::Int(rng.gen_range(0..4)),
                    TypeExpr::Atom(AtomType::Bool) => Value::Bool(rng.gen()),
                    TypeExpr::Atom(AtomType::String) => {
                        let pool = ["a", "b", "c"];
                        Value::Str(pool[rng.gen_range(0..pool.len())].to_string())
                    }
                    _ => Value::Int(0),
                };
                rec.insert(l.clone(), v);
            }
            match kind {
                CollKind::Set => {
                    set.insert(Value::Rec(rec));
                }
                CollKind::Bag => {
                    *bag.entry(Value::Rec(rec)).or_insert(0u64) += 1;
                }
            }
        }
        let value = match kind {
            CollKind::Set => Value::Set(set),
            CollKind::Bag => Value::Bag(bag),
        };
        tables.insert(name.clone(), Table { kind: *kind, row_type: row.clone(), value });
    }
    Database { tables }
}

// ---------------------------------------------------------------------------
// Continuations, frames, and instantiations (for the metatheory suites)
// ---------------------------------------------------------------------------

/// The fixed table environment the hole-configuration generators build over.
pub fn meta_tables() -> TypeEnv {
    let idrow = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
    TypeEnv::new(Calculus::SetBag)
        .with_var("t", TypeExpr::set_of(idrow.clone()))
        .with_var("u", TypeExpr::set_of(idrow.clone()))
        .with_var("bb", TypeExpr::bag_of(idrow))
}

/// A generated continuation: the term, and an environment in which it
/// type-checks (tables plus one entry per hole).
#[derive(Debug, Clone)]
pub struct KConfig {
    pub env: TypeEnv,
    pub term: Term,
}

/// Generates an auxiliary continuation (`aux = true`) or a regular one
/// (`aux = false`, pure comprehension heads) with at least one hole.
pub fn gen_continuation(seed: u64, aux: bool, max_size: usize) -> KConfig {
    let mut g = KGen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        aux,
        holes: Vec::new(),
        counter: 0,
        binder: 0,
    };
    let idrow = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
    let mut term = g.k(&idrow, max_size.max(4));
    if g.holes.is_empty() {
        // Guarantee at least one hole without disturbing the shape.
        let p = g.fresh_hole(&TypeExpr::set_of(idrow.clone()));
        term = Term::union(CollKind::Set, term, Term::hole(p));
    }
    let mut env = meta_tables();
    for (p, ty) in &g.holes {
        env = env.with_hole(p.clone(), ty.clone());
    }
    debug_assert!(if aux {
        crate::meta::is_aux_continuation(&term)
    } else {
        crate::meta::is_continuation(&term)
    });
    debug_assert!(infer(&env, &term).is_ok());
    KConfig { env, term }
}

struct KGen {
    rng: ChaCha8Rng,
    aux: bool,
    holes: Vec<(String, TypeExpr)>,
    counter: usize,
    binder: usize,
}

impl KGen {
    fn fresh_hole(&mut self, ty: &TypeExpr) -> String {
        self.counter += 1;
        let p = format!("h{}", self.counter);
        self.holes.push((p.clone(), ty.clone()));
        p
    }

    fn fresh_binder(&mut self) -> Name {
        self.binder += 1;
        format!("k{}", self.binder)
    }

    /// A pure (hole-free) set term of `{elem}` over the tables.
    fn pure_set(&mut self, elem: &TypeExpr, budget: usize) -> Term {
        let idrow = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
        if elem == &idrow && budget >= 1 && self.rng.gen_bool(0.5) {
            let table = if self.rng.gen() { "t" } else { "u" };
            return Term::var(table);
        }
        if budget >= 2 && self.rng.gen_bool(0.5) {
            return Term::single(CollKind::Set, self.pure_row(elem));
        }
        Term::empty(CollKind::Set, elem.clone())
    }

    fn pure_row(&mut self, elem: &TypeExpr) -> Term {
        match elem {
            TypeExpr::Record(fields) => Term::record(
                fields
                    .iter()
                    .map(|(l, t)| (l.clone(), self.pure_row(t)))
                    .collect(),
            ),
            TypeExpr::Atom(AtomType::Int) => Term::int(self.rng.gen_range(0..5)),
            TypeExpr::Atom(AtomType::Bool) => Term::bool(self.rng.gen()),
            TypeExpr::Atom(AtomType::String) => Term::str("s"),
            _ => Term::int(0),
        }
    }

    fn pure_cond(&mut self) -> Term {
        match self.rng.gen_range(0..3) {
            0 => Term::bool(true),
            1 => Term::is_empty(Term::var("t")),
            _ => Term::Const(
                crate::ast::Cst::Le,
                vec![Term::int(self.rng.gen_range(0..3)), Term::int(2)],
            ),
        }
    }

    /// A continuation of type `{elem}` with holes along the spine.
    fn k(&mut self, elem: &TypeExpr, budget: usize) -> Term {
        let set_ty = TypeExpr::set_of(elem.clone());
        if budget <= 1 {
            return if self.rng.gen_bool(0.7) {
                Term::hole(self.fresh_hole(&set_ty))
            } else {
                self.pure_set(elem, 1)
            };
        }
        match self.rng.gen_range(0..10) {
            0 | 1 => Term::hole(self.fresh_hole(&set_ty)),
            2 => self.pure_set(elem, budget),
            3 | 4 => {
                let l = self.k(elem, (budget - 1) / 2);
                let r = self.k(elem, (budget - 1) / 2);
                Term::union(CollKind::Set, l, r)
            }
            5 | 6 | 7 => {
                // {head | x ← source}: the source is a continuation; the head
                // is pure for regular continuations and may be a continuation
                // for auxiliary ones.
                let idrow = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
                let x = self.fresh_binder();
                let src = if self.rng.gen_bool(0.3) {
                    // A singleton source keeps the special classification
                    // case reachable.
                    Term::single(CollKind::Set, self.pure_row(&idrow))
                } else {
                    self.k(&idrow, (budget - 1) / 2)
                };
                let head = if self.aux && self.rng.gen_bool(0.6) {
                    self.k(elem, (budget - 1) / 2)
                } else {
                    self.pure_set(elem, (budget - 1) / 2)
                };
                Term::comp(CollKind::Set, head, x, src)
            }
            8 => Term::where_(CollKind::Set, self.pure_cond(), self.k(elem, budget - 2)),
            _ => {
                // dedup of a bag-typed hole or of a promoted continuation.
                if self.rng.gen_bool(0.5) {
                    let p = self.fresh_hole(&TypeExpr::bag_of(elem.clone()));
                    Term::dedup(Term::hole(p))
                } else {
                    Term::dedup(Term::promote(self.k(elem, budget - 2)))
                }
            }
        }
    }
}

/// Generates a random frame over the metatheory tables: payloads are pure,
/// and comprehension-source frames get a head that may use the bound row.
pub fn gen_frame(seed: u64) -> crate::meta::Frame {
    use crate::meta::Frame;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match rng.gen_range(0..5) {
        0 => {
            let source = if rng.gen() { Term::var("t") } else { Term::var("u") };
            Frame::CompHeadHole { var: "fx".into(), source }
        }
        1 => {
            let head = if rng.gen() {
                Term::single(CollKind::Set, Term::var("fx"))
            } else {
                Term::single(
                    CollKind::Set,
                    Term::record(vec![("id".into(), Term::proj(Term::var("fx"), "id"))]),
                )
            };
            Frame::CompSrcHole { var: "fx".into(), head }
        }
        2 => {
            let cond = match rng.gen_range(0..3) {
                0 => Term::bool(true),
                1 => Term::is_empty(Term::var("u")),
                _ => Term::Const(crate::ast::Cst::Le, vec![Term::int(1), Term::int(2)]),
            };
            Frame::WhereHole { cond }
        }
        3 => Frame::DedupHole,
        _ => Frame::PromoteHole,
    }
}

/// Generates a permutable classification configuration: an auxiliary
/// continuation `q` (type-correct in the returned environment) and an
/// instantiation for a subset of its holes.
///
/// Payloads are hole-free and mostly closed over the tables; a payload may
/// mention a binder only when that binder scopes its hole and no hole sits
/// in the binding comprehension's source, which keeps every reduct of the
/// instantiated term inside the classifiable corner of the calculus.
pub fn gen_classify_config(seed: u64) -> (TypeEnv, Term, Instantiation) {
    let kcfg = gen_continuation(seed, true, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
    let mut eta = Instantiation::new();
    let holes = kcfg.term.holes();
    let paths = crate::meta::hole_paths(&kcfg.term);
    for p in holes {
        // Mostly instantiate every hole; leave one out now and then so the
        // partial-domain path stays covered.
        if rng.gen_bool(0.9) || eta.is_empty() {
            let ty = kcfg.env.holes.get(&p).cloned().expect("hole type");
            let eligible = eligible_binders(&kcfg.term, &paths[&p]);
            let payload = gen_payload(&mut rng, &ty, &eligible);
            eta.insert(p, payload);
        }
    }
    (kcfg.env, kcfg.term, eta)
}

/// Binders a payload at `path` may mention: comprehension binders that scope
/// the position, skipping any whose comprehension has a hole in its source.
fn eligible_binders(q: &Term, path: &[usize]) -> Vec<(Name, TypeExpr)> {
    let idrow = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
    let mut out = Vec::new();
    let mut cur = q;
    for &i in path {
        if let Term::Comp(_, _, x, src) = cur {
            if i == 0 && src.holes().is_empty() {
                out.push((x.clone(), idrow.clone()));
            }
        }
        cur = cur.children()[i];
    }
    out
}

/// A pure payload of the hole's collection type; reducible half the time so
/// instantiated terms step inside payloads too.
fn gen_payload(
    rng: &mut ChaCha8Rng,
    ty: &TypeExpr,
    eligible: &[(Name, TypeExpr)],
) -> Term {
    let (kind, elem) = match ty {
        TypeExpr::Coll(k, e) => (*k, (**e).clone()),
        _ => (CollKind::Set, ty.clone()),
    };
    let idrow = TypeExpr::record(vec![("id".into(), TypeExpr::Atom(AtomType::Int))]);
    let row = |rng: &mut ChaCha8Rng| -> Term {
        if !eligible.is_empty() && rng.gen_bool(0.4) {
            let (x, _) = &eligible[rng.gen_range(0..eligible.len())];
            if rng.gen() {
                Term::var(x.clone())
            } else {
                Term::record(vec![("id".into(), Term::proj(Term::var(x.clone()), "id"))])
            }
        } else {
            Term::record(vec![("id".into(), Term::int(rng.gen_range(0..5)))])
        }
    };
    let base = |rng: &mut ChaCha8Rng| -> Term {
        if elem == idrow {
            match rng.gen_range(0..4) {
                0 if kind == CollKind::Set => Term::var("t"),
                1 if kind == CollKind::Bag => Term::var("bb"),
                _ => Term::single(kind, row(rng)),
            }
        } else {
            Term::single(kind, Term::int(rng.gen_range(0..5)))
        }
    };
    match rng.gen_range(0..6) {
        // Irreducible payloads.
        0 | 1 => base(rng),
        // where true do … — one guaranteed payload step.
        2 => Term::where_(kind, Term::bool(true), base(rng)),
        // A comprehension over a singleton — steps by the singleton rule.
        3 => {
            let v = Term::record(vec![("id".into(), Term::int(rng.gen_range(0..5)))]);
            Term::comp(kind, base(rng), "py", Term::single(kind, v))
        }
        // A beta redex of collection type.
        4 => Term::app(
            Term::lam("pz", TypeExpr::Atom(AtomType::Int), base(rng)),
            Term::int(rng.gen_range(0..5)),
        ),
        // Union with an empty side (or a plain union at bag kind).
        _ => Term::union(kind, base(rng), Term::empty(kind, elem.clone())),
    }
}
