//! Hole-indexed contexts and the reduction theory built over them:
//! simultaneous instantiation, the continuation grammars, one-level frames
//! with their two hole measures, renaming reduction, the four-way step
//! classifier, bound-variable and neutrality predicates, and longest
//! reduction paths.
//!
//! Everything here works in the set-only fragment: continuations, frames,
//! and measures are defined for set-kinded collection formers (plus `dedup`
//! and `promote` at set kind). Holes `[p]` behave like distinguished free
//! variables — they are never bound, and [`instantiate`] plugs them
//! *textually*, so binders in the surrounding term may capture free
//! variables of a payload. That is deliberate: all other operations treat
//! terms up to alpha, but plugging is an operation on concrete syntax.

use crate::ast::{CollKind, Cst, HoleId, Name, Path, Term};
use crate::pretty::pretty;
use crate::rewrite::{contract_root, scope_at, step_all, RuleTag, Step};
use crate::typing::TypeEnv;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// A finite map from hole indices to payload terms, applied simultaneously.
pub type Instantiation = BTreeMap<HoleId, Term>;

/// A finite map from hole indices to hole indices; its total extension is
/// the identity off the domain.
pub type Renaming = BTreeMap<HoleId, HoleId>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetaError {
    #[error("not a continuation: {0}")]
    NotAContinuation(String),
    #[error("hole {0} would occur more than once")]
    HoleClash(HoleId),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("reduction graph exceeded {cap} distinct terms")]
    CapExceeded { cap: usize },
}

// ---------------------------------------------------------------------------
// Instantiation
// ---------------------------------------------------------------------------

/// The support of a term: the set of hole indices occurring in it.
pub fn support(t: &Term) -> BTreeSet<HoleId> {
    t.holes()
}

/// True when `t` contains no holes. Pure terms are the degenerate
/// continuations: any hole-free term qualifies as a pure segment.
pub fn is_pure(t: &Term) -> bool {
    t.holes().is_empty()
}

fn is_linear(t: &Term) -> bool {
    t.hole_occurrences().values().all(|&n| n <= 1)
}

/// Rebuilds `t` with each child mapped through `f`, leaving binders and
/// annotations as written.
fn map_children(t: &Term, f: &mut impl FnMut(&Term) -> Term) -> Term {
    match t {
        Term::Var(_) | Term::Hole(_) | Term::Empty(..) => t.clone(),
        Term::Const(c, args) => Term::Const(c.clone(), args.iter().map(|a| f(a)).collect()),
        Term::Record(fields) => {
            Term::Record(fields.iter().map(|(l, v)| (l.clone(), f(v))).collect())
        }
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

/// Simultaneously plugs each hole `p` in the domain of `eta` with its
/// payload, textually. Holes outside the domain stay holes; binders above a
/// hole capture like-named free variables of the payload (no renaming).
pub fn instantiate(t: &Term, eta: &Instantiation) -> Term {
    if let Term::Hole(p) = t {
        if let Some(m) = eta.get(p) {
            return m.clone();
        }
        return t.clone();
    }
    map_children(t, &mut |c| instantiate(c, eta))
}

/// Applies a hole renaming: each hole index is mapped through `sigma`,
/// identity off its domain.
pub fn rename_holes(t: &Term, sigma: &Renaming) -> Term {
    if let Term::Hole(p) = t {
        return Term::Hole(sigma.get(p).cloned().unwrap_or_else(|| p.clone()));
    }
    map_children(t, &mut |c| rename_holes(c, sigma))
}

/// An instantiation is permutable when no payload mentions a hole the
/// instantiation also binds — exactly the condition for single-hole
/// pluggings to commute, making the simultaneous reading order-free.
pub fn is_permutable(eta: &Instantiation) -> bool {
    eta.values()
        .all(|m| m.holes().iter().all(|h| !eta.contains_key(h)))
}

// ---------------------------------------------------------------------------
// Continuation grammars
// ---------------------------------------------------------------------------

fn matches_continuation(t: &Term, aux: bool) -> bool {
    if is_pure(t) {
        return true;
    }
    match t {
        Term::Hole(_) => true,
        Term::Union(CollKind::Set, l, r) => {
            matches_continuation(l, aux) && matches_continuation(r, aux)
        }
        Term::Comp(CollKind::Set, h, _, s) => {
            let head_ok = if aux { matches_continuation(h, aux) } else { is_pure(h) };
            head_ok && matches_continuation(s, aux)
        }
        Term::Where(CollKind::Set, c, b) => is_pure(c) && matches_continuation(b, aux),
        Term::Dedup(s) | Term::Promote(s) => matches_continuation(s, aux),
        _ => false,
    }
}

/// Regular continuations: holes are linear and appear only along chains of
/// set unions, comprehension *sources*, guarded bodies, `dedup`, and
/// `promote`; comprehension heads and `where` conditions stay pure.
/// Ambiguity is resolved by reading subterms as pure whenever possible.
pub fn is_continuation(t: &Term) -> bool {
    is_linear(t) && matches_continuation(t, false)
}

/// Auxiliary continuations: like [`is_continuation`], but comprehension
/// heads may carry holes too.
pub fn is_aux_continuation(t: &Term) -> bool {
    is_linear(t) && matches_continuation(t, true)
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

/// One-level contexts over a distinguished shallow hole `□`: the building
/// blocks auxiliary continuations are peeled into for the measure and
/// classification arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    /// `{□ | var ← source}` — the hole is the comprehension head.
    CompHeadHole { var: Name, source: Term },
    /// `{head | var ← □}` — the hole is the comprehension source.
    CompSrcHole { var: Name, head: Term },
    /// `where cond do □`, with a pure boolean condition.
    WhereHole { cond: Term },
    /// `dedup □`.
    DedupHole,
    /// `promote □`.
    PromoteHole,
}

impl Frame {
    /// The term the frame embeds alongside `□`, if any.
    fn embedded(&self) -> Option<&Term> {
        match self {
            Frame::CompHeadHole { source, .. } => Some(source),
            Frame::CompSrcHole { head, .. } => Some(head),
            Frame::WhereHole { cond } => Some(cond),
            Frame::DedupHole | Frame::PromoteHole => None,
        }
    }

    /// Holes of the embedded term.
    pub fn support(&self) -> BTreeSet<HoleId> {
        self.embedded().map(Term::holes).unwrap_or_default()
    }

    /// A frame is well-formed when its embedded side fits the auxiliary
    /// grammar (and a `where` condition is pure).
    pub fn is_valid(&self) -> bool {
        match self {
            Frame::CompHeadHole { source, .. } => is_aux_continuation(source),
            Frame::CompSrcHole { head, .. } => is_aux_continuation(head),
            Frame::WhereHole { cond } => is_pure(cond),
            Frame::DedupHole | Frame::PromoteHole => true,
        }
    }

    /// `F^p`: the frame as a term, with `□` re-indexed to the hole `p`.
    pub fn plug(&self, p: &HoleId) -> Term {
        let hole = Term::hole(p.clone());
        match self {
            Frame::CompHeadHole { var, source } => {
                Term::comp(CollKind::Set, hole, var.clone(), source.clone())
            }
            Frame::CompSrcHole { var, head } => {
                Term::comp(CollKind::Set, head.clone(), var.clone(), hole)
            }
            Frame::WhereHole { cond } => Term::where_(CollKind::Set, cond.clone(), hole),
            Frame::DedupHole => Term::dedup(hole),
            Frame::PromoteHole => Term::promote(hole),
        }
    }
}

/// `Q ∘ₚ F`: replaces the hole `p` of `q` by the frame with `□` re-indexed
/// to `p`. The embedded holes of `f` join the result, so they must stay
/// disjoint from the other holes of `q` — and from `p` itself — for the
/// result to remain linear.
pub fn compose(q: &Term, p: &HoleId, f: &Frame) -> Result<Term, MetaError> {
    if !is_aux_continuation(q) {
        return Err(MetaError::NotAContinuation(pretty(q)));
    }
    if !f.is_valid() {
        return Err(MetaError::NotAContinuation(pretty(&f.plug(p))));
    }
    if !q.holes().contains(p) {
        return Err(MetaError::PreconditionViolated(format!(
            "hole {p} does not occur in the target"
        )));
    }
    let f_supp = f.support();
    if f_supp.contains(p) {
        return Err(MetaError::HoleClash(p.clone()));
    }
    let mut rest = q.holes();
    rest.remove(p);
    if let Some(clash) = f_supp.intersection(&rest).next() {
        return Err(MetaError::HoleClash(clash.clone()));
    }
    let mut eta = Instantiation::new();
    eta.insert(p.clone(), f.plug(p));
    Ok(instantiate(q, &eta))
}

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------

/// `|q|ₚ`: counts the frames stacked around the hole `p` in `q`, except
/// that sitting in a comprehension *head* is free. Unions take the larger
/// branch; subterms not containing `p` contribute nothing.
pub fn measure_len(q: &Term, p: &HoleId) -> Result<u64, MetaError> {
    if !is_aux_continuation(q) {
        return Err(MetaError::NotAContinuation(pretty(q)));
    }
    Ok(len_rec(q, p))
}

/// `‖q‖ₚ`: like [`measure_len`], but a comprehension head costs one too,
/// so every frame strictly deepens the measure.
pub fn measure_sz(q: &Term, p: &HoleId) -> Result<u64, MetaError> {
    if !is_aux_continuation(q) {
        return Err(MetaError::NotAContinuation(pretty(q)));
    }
    Ok(sz_rec(q, p))
}

fn len_rec(q: &Term, p: &HoleId) -> u64 {
    if !q.holes().contains(p) {
        return 0;
    }
    match q {
        Term::Hole(_) => 1,
        Term::Union(_, l, r) => len_rec(l, p).max(len_rec(r, p)),
        Term::Comp(_, h, _, s) => {
            if h.holes().contains(p) {
                len_rec(h, p)
            } else {
                len_rec(s, p) + 1
            }
        }
        Term::Where(_, _, b) => len_rec(b, p) + 1,
        Term::Dedup(s) | Term::Promote(s) => len_rec(s, p) + 1,
        _ => unreachable!("validated continuation"),
    }
}

fn sz_rec(q: &Term, p: &HoleId) -> u64 {
    if !q.holes().contains(p) {
        return 0;
    }
    match q {
        Term::Hole(_) => 1,
        Term::Union(_, l, r) => sz_rec(l, p).max(sz_rec(r, p)),
        Term::Comp(_, h, _, s) => {
            if h.holes().contains(p) {
                sz_rec(h, p) + 1
            } else {
                sz_rec(s, p) + 1
            }
        }
        Term::Where(_, _, b) => sz_rec(b, p) + 1,
        Term::Dedup(s) | Term::Promote(s) => sz_rec(s, p) + 1,
        _ => unreachable!("validated continuation"),
    }
}

// ---------------------------------------------------------------------------
// Renaming reduction
// ---------------------------------------------------------------------------

/// Renames every occurrence of a duplicated hole in `t` to a fresh index —
/// all occurrences, so the results are pairwise distinct — and returns the
/// now-linear term together with the renaming mapping the fresh indices
/// back to the originals. Fresh indices are `q1`, `q2`, … skipping `taken`.
fn linearize(t: &Term, taken: &mut BTreeSet<HoleId>) -> (Term, Renaming) {
    let occ = t.hole_occurrences();
    taken.extend(occ.keys().cloned());
    let mut sigma = Renaming::new();
    let mut counter = 1usize;
    let out = linearize_go(t, &occ, taken, &mut sigma, &mut counter);
    (out, sigma)
}

fn linearize_go(
    t: &Term,
    occ: &BTreeMap<HoleId, usize>,
    taken: &mut BTreeSet<HoleId>,
    sigma: &mut Renaming,
    counter: &mut usize,
) -> Term {
    if let Term::Hole(p) = t {
        if occ.get(p).copied().unwrap_or(0) > 1 {
            let fresh = loop {
                let cand = format!("q{counter}");
                *counter += 1;
                if !taken.contains(&cand) {
                    break cand;
                }
            };
            taken.insert(fresh.clone());
            sigma.insert(fresh.clone(), p.clone());
            return Term::Hole(fresh);
        }
        return t.clone();
    }
    map_children(t, &mut |c| linearize_go(c, occ, taken, sigma, counter))
}

/// The renaming-reduction steps of `q`: for each one-step reduct `C`, a
/// linear `Q′` and renaming `σ` with `Q′σ = C`. Duplicated holes get fresh
/// indices disjoint from `avoid` and from the holes of `q`; holes the step
/// deletes simply drop out, and undisturbed holes keep their index.
pub fn renaming_steps(
    env: &TypeEnv,
    q: &Term,
    avoid: &BTreeSet<HoleId>,
) -> Vec<(Term, Renaming, RuleTag)> {
    step_all(env, q)
        .into_iter()
        .map(|s| {
            let mut taken = avoid.clone();
            taken.extend(q.holes());
            let (relabeled, sigma) = linearize(&s.after, &mut taken);
            (relabeled, sigma, s.rule)
        })
        .collect()
}

/// `η^σ`: the instantiation that makes renaming commute with plugging —
/// each renamed hole takes the payload of its original, and bindings for
/// holes the renaming retired are dropped.
pub fn rename_inst(eta: &Instantiation, sigma: &Renaming) -> Instantiation {
    let retired: BTreeSet<&HoleId> = sigma.values().collect();
    let mut out = Instantiation::new();
    for (fresh, orig) in sigma {
        if let Some(m) = eta.get(orig) {
            out.insert(fresh.clone(), m.clone());
        }
    }
    for (p, m) in eta {
        if !sigma.contains_key(p) && !retired.contains(p) {
            out.insert(p.clone(), m.clone());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Step classification
// ---------------------------------------------------------------------------

/// The four shapes a one-step reduct of an instantiated continuation can
/// take, with the witnesses needed to rebuild the reduct in each case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    /// The continuation itself stepped, up to relabeling duplicated holes:
    /// the reduct is `instantiate(q_prime, rename_inst(eta, sigma))` with
    /// `sigma` applied back to the holes the instantiation leaves open.
    ContinuationReduction { q_prime: Term, sigma: Renaming },
    /// A comprehension whose head still carries holes collapsed over a pure
    /// singleton source: writing the original continuation as
    /// `q1[q_idx ↦ {q2 | var ← {l}}]`, the reduct is
    /// `q1[q_idx ↦ q2[l/var]]` instantiated with the payloads of the holes
    /// in `q2` substituted the same way.
    SpecialReduction { q1: Term, q2: Term, q_idx: HoleId, var: Name, l: Term },
    /// A payload stepped on its own; the reduct is
    /// `instantiate(q, eta_prime)`.
    WithinEta { eta_prime: Instantiation },
    /// The step consumed the boundary between a frame of the continuation
    /// and the payload plugged into it: writing the continuation as
    /// `compose(q0, p, frame)`, the frame applied to the payload contracts
    /// to `m`, and the reduct is `q0[p ↦ m]` under the remaining payloads.
    AtInterface { q0: Term, p: HoleId, frame: Frame, m: Term },
}

/// The path of each hole occurrence (with duplicated holes, the last one
/// in preorder wins; continuations keep holes linear so this is unique).
pub fn hole_paths(t: &Term) -> BTreeMap<HoleId, Path> {
    fn go(t: &Term, path: &mut Path, out: &mut BTreeMap<HoleId, Path>) {
        if let Term::Hole(p) = t {
            out.insert(p.clone(), path.clone());
            return;
        }
        for (i, c) in t.children().into_iter().enumerate() {
            path.push(i);
            go(c, path, out);
            path.pop();
        }
    }
    let mut out = BTreeMap::new();
    go(t, &mut Vec::new(), &mut out);
    out
}

fn precondition(msg: impl Into<String>) -> MetaError {
    MetaError::PreconditionViolated(msg.into())
}

/// Classifies one reduction step of `instantiate(q, eta)` into the four
/// possible interaction shapes and verifies that the returned witnesses
/// reconstruct the observed reduct exactly.
///
/// Preconditions: `q` is an auxiliary continuation, `eta` is permutable and
/// binds only holes of `q`, and `step` is a step of the instantiated term.
/// When a case's equations admit several decompositions (a `where true` over
/// a hole is both a continuation step and a frame/payload interaction), the
/// continuation-step reading wins; the witnesses are one valid choice, not
/// the only one. Reconstruction is exact structural equality, so payloads
/// whose free variables collide with binder names the step must rename can
/// make classification fail honestly rather than approximately.
pub fn classify(
    env: &TypeEnv,
    q: &Term,
    eta: &Instantiation,
    step: &Step,
) -> Result<Classification, MetaError> {
    if !is_aux_continuation(q) {
        return Err(precondition(format!(
            "not an auxiliary continuation: {}",
            pretty(q)
        )));
    }
    if !is_permutable(eta) {
        return Err(precondition("instantiation is not permutable"));
    }
    let supp = q.holes();
    if let Some(extra) = eta.keys().find(|p| !supp.contains(*p)) {
        return Err(precondition(format!(
            "instantiation binds hole {extra}, which the continuation lacks"
        )));
    }
    if step.before != instantiate(q, eta) {
        return Err(precondition(
            "step does not start from the instantiated continuation",
        ));
    }

    // A redex at or below an instantiated hole lies within that payload.
    for (p, path) in &hole_paths(q) {
        if eta.contains_key(p) && step.position.starts_with(path) {
            return classify_within(env, q, eta, step, p, path);
        }
    }

    // Otherwise the redex position exists in the continuation itself.
    let pos = &step.position;
    let q_sub = q
        .get_at(pos)
        .ok_or_else(|| precondition("redex position does not exist in the continuation"))?;
    let scope = scope_at(env, q, pos);

    // Try to replay the same rule on the continuation at the same position.
    let replay = contract_root(env, &scope, q_sub)
        .into_iter()
        .find(|(tag, _)| *tag == step.rule);

    if let Some((_, contractum)) = replay {
        if step.rule == RuleTag::CompSingleton {
            if let Term::Comp(CollKind::Set, head, x, src) = q_sub {
                if let Term::Single(CollKind::Set, l) = src.as_ref() {
                    if !head.holes().is_empty() {
                        return classify_special(q, eta, step, pos, head, x, l);
                    }
                }
            }
        }
        let c_full = q.replace_at(pos, contractum);
        let mut taken = q.holes();
        for (p, m) in eta {
            taken.insert(p.clone());
            taken.extend(m.holes());
        }
        let (q_prime, sigma) = linearize(&c_full, &mut taken);
        // Holes the instantiation leaves open keep their original names in
        // the plain reduct, so σ is applied back to whatever `instantiate`
        // does not fill.
        let rebuilt = rename_holes(&instantiate(&q_prime, &rename_inst(eta, &sigma)), &sigma);
        if rebuilt != step.after {
            return Err(precondition(
                "replaying the rule on the continuation does not reconstruct the reduct",
            ));
        }
        return Ok(Classification::ContinuationReduction { q_prime, sigma });
    }

    classify_interface(env, q, eta, step, pos, q_sub, &scope)
}

fn classify_within(
    env: &TypeEnv,
    q: &Term,
    eta: &Instantiation,
    step: &Step,
    p: &HoleId,
    hole_path: &Path,
) -> Result<Classification, MetaError> {
    let payload = &eta[p];
    let reduced = step
        .after
        .get_at(hole_path)
        .ok_or_else(|| precondition("reduct lost the payload position"))?
        .clone();
    // The payload itself must make this step, under the binders that
    // enclose the hole (typed from the instantiated term).
    let rel = step.position[hole_path.len()..].to_vec();
    let mut env2 = env.clone();
    for (x, ty) in scope_at(env, &step.before, hole_path) {
        let ty = ty.ok_or_else(|| {
            precondition("cannot type a binder enclosing the payload")
        })?;
        env2 = env2.with_var(x, ty);
    }
    let genuine = step_all(&env2, payload)
        .into_iter()
        .any(|s| s.position == rel && s.rule == step.rule && s.after == reduced);
    if !genuine {
        return Err(precondition("the payload does not make the claimed step"));
    }
    let mut eta_prime = eta.clone();
    eta_prime.insert(p.clone(), reduced);
    if instantiate(q, &eta_prime) != step.after {
        return Err(precondition(
            "stepped payload does not reconstruct the reduct",
        ));
    }
    Ok(Classification::WithinEta { eta_prime })
}

fn classify_special(
    q: &Term,
    eta: &Instantiation,
    step: &Step,
    pos: &Path,
    head: &Term,
    x: &Name,
    l: &Term,
) -> Result<Classification, MetaError> {
    let mut taken = q.holes();
    taken.extend(eta.keys().cloned());
    let mut counter = 1usize;
    let q_idx = loop {
        let cand = format!("q{counter}");
        counter += 1;
        if !taken.contains(&cand) {
            break cand;
        }
    };
    let q1 = q.replace_at(pos, Term::Hole(q_idx.clone()));
    let q2 = head.clone();
    let q2_supp = q2.holes();
    let q_prime = q.replace_at(pos, q2.subst(x, l));
    let eta_star: Instantiation = eta
        .iter()
        .map(|(p, m)| {
            let m2 = if q2_supp.contains(p) { m.subst(x, l) } else { m.clone() };
            (p.clone(), m2)
        })
        .collect();
    if instantiate(&q_prime, &eta_star) != step.after {
        return Err(precondition(
            "singleton-collapse witnesses do not reconstruct the reduct",
        ));
    }
    Ok(Classification::SpecialReduction {
        q1,
        q2,
        q_idx,
        var: x.clone(),
        l: l.clone(),
    })
}

fn classify_interface(
    env: &TypeEnv,
    q: &Term,
    eta: &Instantiation,
    step: &Step,
    pos: &Path,
    q_sub: &Term,
    scope: &crate::rewrite::Scope,
) -> Result<Classification, MetaError> {
    use RuleTag::*;
    // Which child of the node must be an instantiated hole for this rule to
    // have seen the payload's root constructor.
    let (frame, p) = match (step.rule, q_sub) {
        (CompEmptyHead | CompUnionHead, Term::Comp(CollKind::Set, h, x, s)) => {
            let Term::Hole(p) = h.as_ref() else {
                return Err(precondition("rule needs a hole in the comprehension head"));
            };
            (Frame::CompHeadHole { var: x.clone(), source: (**s).clone() }, p.clone())
        }
        (
            CompEmptySrc | CompSingleton | CompUnionSrc | CompAssoc | CompWhereSrc,
            Term::Comp(CollKind::Set, h, x, s),
        ) => {
            let Term::Hole(p) = s.as_ref() else {
                return Err(precondition("rule needs a hole in the comprehension source"));
            };
            (Frame::CompSrcHole { var: x.clone(), head: (**h).clone() }, p.clone())
        }
        (
            WhereEmpty | WhereUnion | WhereComp | WhereWhere,
            Term::Where(CollKind::Set, c, b),
        ) => {
            let Term::Hole(p) = b.as_ref() else {
                return Err(precondition("rule needs a hole in the guarded body"));
            };
            (Frame::WhereHole { cond: (**c).clone() }, p.clone())
        }
        (
            DedupEmpty | DedupSingleton | DedupUnion | DedupPromote | DedupComp | DedupWhere,
            Term::Dedup(s),
        ) => {
            let Term::Hole(p) = s.as_ref() else {
                return Err(precondition("rule needs a hole under dedup"));
            };
            (Frame::DedupHole, p.clone())
        }
        (PromoteEmpty | PromoteSingleton | PromoteWhere, Term::Promote(s)) => {
            let Term::Hole(p) = s.as_ref() else {
                return Err(precondition("rule needs a hole under promote"));
            };
            (Frame::PromoteHole, p.clone())
        }
        _ => {
            return Err(precondition(format!(
                "rule {} does not interact with any frame at the redex position",
                step.rule
            )))
        }
    };
    let Some(payload) = eta.get(&p) else {
        return Err(precondition(format!("hole {p} carries no payload")));
    };
    let mut plug = Instantiation::new();
    plug.insert(p.clone(), payload.clone());
    let applied = instantiate(&frame.plug(&p), &plug);
    let m = contract_root(env, scope, &applied)
        .into_iter()
        .find(|(tag, _)| *tag == step.rule)
        .map(|(_, m)| m)
        .ok_or_else(|| {
            precondition("frame applied to the payload does not contract by the step's rule")
        })?;
    let q0 = q.replace_at(pos, Term::Hole(p.clone()));
    let mut eta_rest = eta.clone();
    eta_rest.remove(&p);
    let mut plug_m = Instantiation::new();
    plug_m.insert(p.clone(), m.clone());
    if instantiate(&instantiate(&q0, &plug_m), &eta_rest) != step.after {
        return Err(precondition(
            "frame/payload witnesses do not reconstruct the reduct",
        ));
    }
    Ok(Classification::AtInterface { q0, p, frame, m })
}

// ---------------------------------------------------------------------------
// Bound variables and neutrality
// ---------------------------------------------------------------------------

/// The binders of `q` that can capture into a payload: a comprehension
/// contributes its binder only when its *head* carries a hole. Regular
/// continuations therefore have no such binders at all.
pub fn bv(q: &Term) -> BTreeSet<Name> {
    if is_pure(q) {
        return BTreeSet::new();
    }
    match q {
        Term::Hole(_) => BTreeSet::new(),
        Term::Union(_, l, r) => {
            let mut out = bv(l);
            out.extend(bv(r));
            out
        }
        Term::Comp(_, h, x, s) => {
            let mut out = bv(h);
            out.extend(bv(s));
            if !h.holes().is_empty() {
                out.insert(x.clone());
            }
            out
        }
        Term::Where(_, _, b) => bv(b),
        Term::Dedup(s) | Term::Promote(s) => bv(s),
        _ => BTreeSet::new(),
    }
}

/// Neutral terms: variables (holes count — they behave like variables),
/// applied constants, projections, applications, emptiness tests, and
/// `dedup`. Neutrality is a shape, not normality: `dedup {|1|}` is neutral
/// and reducible at once.
pub fn is_neutral(t: &Term) -> bool {
    match t {
        Term::Var(_) | Term::Hole(_) | Term::Proj(..) | Term::App(..) => true,
        Term::IsEmpty(_) | Term::Dedup(_) => true,
        Term::Const(c, _) => !Cst::is_literal(c),
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Longest reduction paths
// ---------------------------------------------------------------------------

/// Default node budget for [`maxred`]: generous for desk-scale terms.
pub const MAXRED_DEFAULT_CAP: usize = 100_000;

/// Length of the longest reduction sequence from `t`, by memoized
/// exhaustive search of the reduction graph. Nodes are identified up to
/// alpha and hole renaming. Errs once the graph grows past `cap` distinct
/// nodes, and reports a cycle (impossible for well-typed terms) honestly
/// instead of looping.
pub fn maxred(env: &TypeEnv, t: &Term, cap: usize) -> Result<u64, MetaError> {
    let succ = |env: &TypeEnv, t: &Term| step_all(env, t).into_iter().map(|s| s.after).collect();
    search(env, t, cap, &mut BTreeMap::new(), &mut BTreeSet::new(), &succ)
}

/// [`maxred`] over the renaming-reduction graph, where duplicated holes are
/// freshly relabeled at every step so reducts stay linear.
pub fn maxred_renaming(env: &TypeEnv, t: &Term, cap: usize) -> Result<u64, MetaError> {
    let succ = |env: &TypeEnv, t: &Term| {
        renaming_steps(env, t, &BTreeSet::new())
            .into_iter()
            .map(|(n, _, _)| n)
            .collect()
    };
    search(env, t, cap, &mut BTreeMap::new(), &mut BTreeSet::new(), &succ)
}

/// The longest path from every node reachable from `t`, keyed by canonical
/// form — the memo table of the same search [`maxred`] runs, in one pass.
pub fn maxred_map(env: &TypeEnv, t: &Term, cap: usize) -> Result<BTreeMap<Term, u64>, MetaError> {
    let succ = |env: &TypeEnv, t: &Term| step_all(env, t).into_iter().map(|s| s.after).collect();
    let mut memo = BTreeMap::new();
    search(env, t, cap, &mut memo, &mut BTreeSet::new(), &succ)?;
    Ok(memo)
}

/// [`maxred_map`] over the renaming-reduction graph.
pub fn maxred_renaming_map(
    env: &TypeEnv,
    t: &Term,
    cap: usize,
) -> Result<BTreeMap<Term, u64>, MetaError> {
    let succ = |env: &TypeEnv, t: &Term| {
        renaming_steps(env, t, &BTreeSet::new())
            .into_iter()
            .map(|(n, _, _)| n)
            .collect()
    };
    let mut memo = BTreeMap::new();
    search(env, t, cap, &mut memo, &mut BTreeSet::new(), &succ)?;
    Ok(memo)
}

/// Longest-path weight of an instantiation: the sum over its payloads.
pub fn maxred_inst(env: &TypeEnv, eta: &Instantiation, cap: usize) -> Result<u64, MetaError> {
    let mut sum = 0;
    for m in eta.values() {
        sum += maxred(env, m, cap)?;
    }
    Ok(sum)
}

fn search(
    env: &TypeEnv,
    t: &Term,
    cap: usize,
    memo: &mut BTreeMap<Term, u64>,
    visiting: &mut BTreeSet<Term>,
    succ: &dyn Fn(&TypeEnv, &Term) -> Vec<Term>,
) -> Result<u64, MetaError> {
    let key = t.canon(true);
    if let Some(&v) = memo.get(&key) {
        return Ok(v);
    }
    if !visiting.insert(key.clone()) {
        return Err(precondition("reduction graph has a cycle"));
    }
    if memo.len() + visiting.len() > cap {
        return Err(MetaError::CapExceeded { cap });
    }
    let mut best = 0;
    for n in succ(env, t) {
        best = best.max(1 + search(env, &n, cap, memo, visiting, succ)?);
    }
    visiting.remove(&key);
    memo.insert(key, best);
    Ok(best)
}
