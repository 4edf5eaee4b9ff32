//! Forgetful translation from the mixed set/bag calculus into the set-only
//! calculus with `dedup`/`promote`: every bag construct collapses onto its
//! set counterpart while `dedup` and `promote` survive homomorphically.
//!
//! The translation preserves typing (at erased types) and simulates every
//! reduction step one-for-one: if `M ⇝ M'` then `erase(M) ⇝ erase(M')` by
//! the rule [`erased_tag`] assigns, at the same position.

use crate::ast::{CollKind, Term, TypeExpr};
use crate::rewrite::RuleTag;
use crate::typing::{Calculus, TypeEnv};

/// Collapses both collection kinds onto sets, homomorphically.
pub fn erase_type(ty: &TypeExpr) -> TypeExpr {
    match ty {
        TypeExpr::Atom(a) => TypeExpr::Atom(*a),
        TypeExpr::Fun(dom, cod) => TypeExpr::fun(erase_type(dom), erase_type(cod)),
        TypeExpr::Record(fields) => TypeExpr::record(
            fields.iter().map(|(l, t)| (l.clone(), erase_type(t))).collect(),
        ),
        TypeExpr::Coll(_, elem) => TypeExpr::set_of(erase_type(elem)),
    }
}

/// Erases a term: `℧ ↦ ∅`, `⦃M⦄ ↦ {M}`, `⊎ ↦ ∪`, bag comprehensions and
/// guards onto their set forms; `dedup`/`promote` stay.
pub fn erase_term(t: &Term) -> Term {
    match t {
        Term::Var(x) => Term::var(x.clone()),
        Term::Hole(p) => Term::Hole(p.clone()),
        Term::Const(c, args) => Term::Const(c.clone(), args.iter().map(erase_term).collect()),
        Term::Record(fields) => Term::record(
            fields.iter().map(|(l, v)| (l.clone(), erase_term(v))).collect(),
        ),
        Term::Proj(subject, label) => Term::proj(erase_term(subject), label.clone()),
        Term::Lam(x, ty, body) => Term::lam(x.clone(), erase_type(ty), erase_term(body)),
        Term::App(f, a) => Term::app(erase_term(f), erase_term(a)),
        Term::Empty(_, ann) => Term::Empty(
            CollKind::Set,
            ann.as_ref().map(|ty| Box::new(erase_type(ty))),
        ),
        Term::Single(_, e) => Term::single(CollKind::Set, erase_term(e)),
        Term::Union(_, l, r) => Term::union(CollKind::Set, erase_term(l), erase_term(r)),
        Term::Comp(_, head, x, src) => Term::comp(
            CollKind::Set,
            erase_term(head),
            x.clone(),
            erase_term(src),
        ),
        Term::Where(_, cond, body) => {
            Term::where_(CollKind::Set, erase_term(cond), erase_term(body))
        }
        Term::IsEmpty(s) => Term::is_empty(erase_term(s)),
        Term::Dedup(s) => Term::dedup(erase_term(s)),
        Term::Promote(s) => Term::promote(erase_term(s)),
    }
}

/// Erases every binding of a typing environment and switches it to the
/// set-only calculus.
pub fn erase_env(env: &TypeEnv) -> TypeEnv {
    let mut out = TypeEnv::new(Calculus::SetOnly);
    for (x, ty) in &env.vars {
        out = out.with_var(x.clone(), erase_type(ty));
    }
    for (p, ty) in &env.holes {
        out = out.with_hole(p.clone(), erase_type(ty));
    }
    out
}

/// The rule that simulates a given step after erasure: bag rules map onto
/// their set counterparts, everything else is itself.
pub fn erased_tag(tag: RuleTag) -> RuleTag {
    use RuleTag::*;
    match tag {
        BagcompEmptyHead => CompEmptyHead,
        BagcompEmptySrc => CompEmptySrc,
        BagcompSingleton => CompSingleton,
        BagcompUnionHead => CompUnionHead,
        BagcompUnionSrc => CompUnionSrc,
        BagcompAssoc => CompAssoc,
        BagcompWhereSrc => CompWhereSrc,
        BagwhereTrue => WhereTrue,
        BagwhereFalse => WhereFalse,
        BagwhereEmpty => WhereEmpty,
        BagwhereUnion => WhereUnion,
        BagwhereComp => WhereComp,
        BagwhereWhere => WhereWhere,
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::AtomType;
    use crate::parse::{parse_term, parse_type};
    use crate::rewrite::step_all;
    use crate::typing::infer;

    fn p(src: &str) -> Term {
        parse_term(src).expect(src).term
    }
    fn ty(src: &str) -> TypeExpr {
        parse_type(src).expect(src)
    }

    #[test]
    fn types_collapse_onto_sets() {
        let cases = [
            ("{|Int|}", "{Int}"),
            ("Bool", "Bool"),
            ("<a : Int> -> {|<a : Int>|}", "<a : Int> -> {<a : Int>}"),
            ("{{|<x : String>|}}", "{{<x : String>}}"),
        ];
        for (src, expect) in cases {
            assert_eq!(erase_type(&ty(src)), ty(expect), "{src}");
        }
    }

    #[test]
    fn terms_collapse_onto_set_constructs() {
        let cases = [
            ("{|1|} uplus {|2|}", "{1} union {2}"),
            ("bagwhere c do ({||} : {|Int|})", "where c do ({} : {Int})"),
            ("dedup (promote {1})", "dedup (promote {1})"),
            ("bagfor (x <- b) {|x.a|}", "for (x <- b) {x.a}"),
            ("bagempty b", "empty (dedup b)"),
            (r"\f : Int -> {|Int|}. f 1", r"\f : Int -> {Int}. f 1"),
        ];
        for (src, expect) in cases {
            assert_eq!(erase_term(&p(src)), p(expect), "{src}");
        }
    }

    #[test]
    fn erasure_is_idempotent() {
        for src in [
            "bagfor (x <- b) (bagwhere x.a = 1 do {|x|})",
            "dedup ({|n|} uplus promote {n})",
            "for (y <- for (x <- t) {{x.id}}) y",
        ] {
            let once = erase_term(&p(src));
            assert_eq!(erase_term(&once), once, "{src}");
        }
    }

    fn bag_env() -> TypeEnv {
        let row = TypeExpr::record(vec![("a".into(), TypeExpr::Atom(AtomType::Int))]);
        TypeEnv::new(Calculus::SetBag)
            .with_var("b", TypeExpr::bag_of(row.clone()))
            .with_var("s", TypeExpr::set_of(row))
            .with_var("c", TypeExpr::Atom(AtomType::Bool))
            .with_var("n", TypeExpr::Atom(AtomType::Int))
    }

    #[test]
    fn erasure_preserves_typability_at_erased_types() {
        let env = bag_env();
        let erased = erase_env(&env);
        for src in [
            "bagfor (x <- b) {|x.a|}",
            "dedup (b uplus promote s)",
            "bagwhere c do (promote (where c do s))",
            "empty (dedup b)",
            r"(\x : {|<a : Int>|}. dedup x) b",
        ] {
            let t = p(src);
            let before = infer(&env, &t).expect(src);
            let after = infer(&erased, &erase_term(&t)).expect(src);
            assert_eq!(after, erase_type(&before), "{src}");
        }
    }

    #[test]
    fn erasure_rejects_nothing_the_set_only_checker_would() {
        // The erased image never contains a bag constructor, so the
        // set-only checker's kind restriction cannot fire on it.
        let env = bag_env();
        let t = p("dedup (bagfor (x <- b) (bagwhere x.a <= 3 do {|x|}))");
        infer(&env, &t).unwrap();
        let erased = erase_term(&t);
        assert!(!format!("{erased}").contains('|'));
        infer(&erase_env(&env), &erased).unwrap();
    }

    #[test]
    fn every_step_is_simulated_one_for_one() {
        let env = bag_env();
        let erased_env = erase_env(&env);
        for src in [
            "bagfor (x <- bagwhere c do b) {|x.a|}",
            "bagfor (x <- {|<a = 1>|}) {|x.a + n|}",
            "dedup (bagfor (x <- b) ({|x.a|} uplus {|1|}))",
            "bagwhere c do (bagwhere n = 1 do b)",
            "promote (where c do s)",
            "dedup (promote s)",
            "empty (dedup (bagfor (x <- b) {|{x.a}|}))",
        ] {
            let t = p(src);
            infer(&env, &t).expect(src);
            let steps = step_all(&env, &t);
            assert!(!steps.is_empty(), "{src} should step");
            let erased_steps = step_all(&erased_env, &erase_term(&t));
            for s in steps {
                let want_after = erase_term(&s.after);
                let want_tag = erased_tag(s.rule);
                assert!(
                    erased_steps.iter().any(|es| es.rule == want_tag
                        && es.position == s.position
                        && es.after == want_after),
                    "{src}: step {} at {:?} not simulated",
                    s.rule,
                    s.position
                );
            }
        }
    }

    #[test]
    fn erasure_commutes_with_substitution() {
        // Substituting then erasing picks the same fresh names as erasing
        // then substituting, because erasure never changes free variables.
        let m = p(r"bagfor (y <- b) {|y.a + x|}");
        let n = p("n + 1");
        let lhs = erase_term(&m.subst("x", &n));
        let rhs = erase_term(&m).subst("x", &erase_term(&n));
        assert_eq!(lhs, rhs);
    }
}
