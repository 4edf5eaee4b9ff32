//! Canonical pretty-printer for terms and types.
//!
//! Printing is the inverse of parsing on the canonical form: for every term
//! `t` built from parseable names, `parse(pretty(t))` re-reads as exactly
//! `t`. Sugar (multi-generator `for`, `bagempty`) is accepted by the parser
//! but never produced here.
//!
//! Precedence, loosest to tightest:
//!
//! | level | forms                                   |
//! |-------|-----------------------------------------|
//! | 0     | `\x : T. M`, `where`/`bagwhere`, `for`/`bagfor` |
//! | 1     | `union`, `uplus` (left-assoc)           |
//! | 2     | `=`, `<=` (non-assoc)                   |
//! | 3     | `+` (left-assoc)                        |
//! | 4     | application, `empty`, `dedup`, `promote`|
//! | 5     | atoms, projection `.l` (postfix)        |

use crate::ast::{CollKind, Cst, Term, TypeExpr};
use std::fmt::Write;

/// Render a term in canonical concrete syntax.
pub fn pretty(t: &Term) -> String {
    let mut s = String::new();
    go(t, 0, &mut s);
    s
}

/// Render a type in canonical concrete syntax.
pub fn pretty_type(ty: &TypeExpr) -> String {
    let mut s = String::new();
    go_type(ty, 0, &mut s);
    s
}

fn wrap(cond: bool, out: &mut String, body: impl FnOnce(&mut String)) {
    if cond {
        out.push('(');
        body(out);
        out.push(')');
    } else {
        body(out);
    }
}

fn go(t: &Term, lvl: u8, out: &mut String) {
    match t {
        Term::Var(x) => out.push_str(x),
        Term::Hole(p) => {
            let _ = write!(out, "[{p}]");
        }
        Term::Const(c, args) => go_const(c, args, lvl, out),
        Term::Record(fields) => {
            out.push('<');
            for (i, (l, v)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{l} = ");
                go(v, 0, out);
            }
            out.push('>');
        }
        Term::Proj(s, l) => {
            go(s, 5, out);
            let _ = write!(out, ".{l}");
        }
        Term::Lam(x, ty, b) => wrap(lvl > 0, out, |out| {
            let _ = write!(out, "\\{x} : ");
            go_type(ty, 0, out);
            out.push_str(". ");
            go(b, 0, out);
        }),
        Term::App(f, a) => wrap(lvl > 4, out, |out| {
            go(f, 4, out);
            out.push(' ');
            go(a, 5, out);
        }),
        Term::Empty(k, ann) => {
            out.push_str(match k {
                CollKind::Set => "{}",
                CollKind::Bag => "{||}",
            });
            if let Some(elem) = ann {
                out.push_str(" : ");
                go_type(&TypeExpr::coll(*k, (**elem).clone()), 1, out);
            }
        }
        Term::Single(k, e) => {
            let (open, close) = match k {
                CollKind::Set => ("{", "}"),
                CollKind::Bag => ("{|", "|}"),
            };
            out.push_str(open);
            go(e, 0, out);
            out.push_str(close);
        }
        Term::Union(k, a, b) => wrap(lvl > 1, out, |out| {
            go(a, 1, out);
            out.push_str(match k {
                CollKind::Set => " union ",
                CollKind::Bag => " uplus ",
            });
            go(b, 2, out);
        }),
        Term::Comp(k, h, x, s) => wrap(lvl > 0, out, |out| {
            out.push_str(match k {
                CollKind::Set => "for (",
                CollKind::Bag => "bagfor (",
            });
            let _ = write!(out, "{x} <- ");
            go(s, 0, out);
            out.push_str(") ");
            go(h, 0, out);
        }),
        Term::Where(k, c, b) => wrap(lvl > 0, out, |out| {
            out.push_str(match k {
                CollKind::Set => "where ",
                CollKind::Bag => "bagwhere ",
            });
            go(c, 1, out);
            out.push_str(" do ");
            go(b, 0, out);
        }),
        Term::IsEmpty(s) => prefix("empty", s, lvl, out),
        Term::Dedup(s) => prefix("dedup", s, lvl, out),
        Term::Promote(s) => prefix("promote", s, lvl, out),
    }
}

fn prefix(kw: &str, s: &Term, lvl: u8, out: &mut String) {
    wrap(lvl > 4, out, |out| {
        out.push_str(kw);
        out.push(' ');
        go(s, 5, out);
    });
}

fn go_const(c: &Cst, args: &[Term], lvl: u8, out: &mut String) {
    match (c, args) {
        (Cst::Bool(b), []) => {
            let _ = write!(out, "{b}");
        }
        (Cst::Int(i), []) => {
            let _ = write!(out, "{i}");
        }
        (Cst::Str(s), []) => {
            let _ = write!(out, "{s:?}");
        }
        (Cst::Eq, [a, b]) => infix(" = ", a, b, 2, 3, 3, lvl, out),
        (Cst::Le, [a, b]) => infix(" <= ", a, b, 2, 3, 3, lvl, out),
        (Cst::Add, [a, b]) => infix(" + ", a, b, 3, 3, 4, lvl, out),
        (Cst::And, [a, b]) => call("and", &[a, b], out),
        (Cst::Or, [a, b]) => call("or", &[a, b], out),
        (Cst::Not, [a]) => call("not", &[a], out),
        _ => {
            // Malformed arity; print as a call so debugging output stays usable.
            let refs: Vec<&Term> = args.iter().collect();
            call(&c.name(), &refs, out);
        }
    }
}

fn infix(op: &str, a: &Term, b: &Term, own: u8, la: u8, lb: u8, lvl: u8, out: &mut String) {
    wrap(lvl > own, out, |out| {
        go(a, la, out);
        out.push_str(op);
        go(b, lb, out);
    });
}

fn call(name: &str, args: &[&Term], out: &mut String) {
    out.push_str(name);
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        go(a, 0, out);
    }
    out.push(')');
}

fn go_type(ty: &TypeExpr, lvl: u8, out: &mut String) {
    match ty {
        TypeExpr::Atom(a) => {
            let _ = write!(out, "{a}");
        }
        TypeExpr::Fun(d, c) => wrap(lvl > 0, out, |out| {
            go_type(d, 1, out);
            out.push_str(" -> ");
            go_type(c, 0, out);
        }),
        TypeExpr::Record(fields) => {
            out.push('<');
            for (i, (l, t)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{l} : ");
                go_type(t, 0, out);
            }
            out.push('>');
        }
        TypeExpr::Coll(k, elem) => {
            let (open, close) = match k {
                CollKind::Set => ("{", "}"),
                CollKind::Bag => ("{|", "|}"),
            };
            out.push_str(open);
            go_type(elem, 0, out);
            out.push_str(close);
        }
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty(self))
    }
}

impl std::fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty_type(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{AtomType, CollKind::*};

    fn t_int() -> TypeExpr {
        TypeExpr::Atom(AtomType::Int)
    }

    #[test]
    fn atoms_and_scalars() {
        assert_eq!(pretty(&Term::var("x")), "x");
        assert_eq!(pretty(&Term::hole("p")), "[p]");
        assert_eq!(pretty(&Term::int(-7)), "-7");
        assert_eq!(pretty(&Term::str("a\"b")), "\"a\\\"b\"");
        assert_eq!(
            pretty(&Term::Const(Cst::Add, vec![Term::int(1), Term::int(2)])),
            "1 + 2"
        );
        assert_eq!(
            pretty(&Term::Const(
                Cst::Eq,
                vec![
                    Term::Const(Cst::Add, vec![Term::var("a"), Term::var("b")]),
                    Term::var("c"),
                ],
            )),
            "a + b = c"
        );
        assert_eq!(
            pretty(&Term::Const(Cst::And, vec![Term::bool(true), Term::var("q")])),
            "and(true, q)"
        );
    }

    #[test]
    fn precedence_projection_before_application() {
        // f x.a means f (x.a); the other association needs parens.
        let tight = Term::app(Term::var("f"), Term::proj(Term::var("x"), "a"));
        assert_eq!(pretty(&tight), "f x.a");
        let loose = Term::proj(Term::app(Term::var("f"), Term::var("x")), "a");
        assert_eq!(pretty(&loose), "(f x).a");
    }

    #[test]
    fn collection_forms() {
        let t = Term::union(
            Set,
            Term::single(Set, Term::var("x")),
            Term::empty(Set, t_int()),
        );
        assert_eq!(pretty(&t), "{x} union {} : {Int}");
        let b = Term::union(
            Bag,
            Term::single(Bag, Term::var("x")),
            Term::empty(Bag, t_int()),
        );
        assert_eq!(pretty(&b), "{|x|} uplus {||} : {|Int|}");
        let c = Term::comp(
            Set,
            Term::single(Set, Term::proj(Term::var("x"), "id")),
            "x",
            Term::var("t"),
        );
        assert_eq!(pretty(&c), "for (x <- t) {x.id}");
        let w = Term::where_(Set, Term::bool(true), Term::single(Set, Term::int(1)));
        assert_eq!(pretty(&w), "where true do {1}");
    }

    #[test]
    fn union_association() {
        let l = Term::union(Set, Term::union(Set, Term::var("a"), Term::var("b")), Term::var("c"));
        assert_eq!(pretty(&l), "a union b union c");
        let r = Term::union(Set, Term::var("a"), Term::union(Set, Term::var("b"), Term::var("c")));
        assert_eq!(pretty(&r), "a union (b union c)");
    }

    #[test]
    fn lambda_and_where_parenthesize_as_operands() {
        let lam = Term::lam("x", t_int(), Term::var("x"));
        let t = Term::app(lam.clone(), Term::int(3));
        assert_eq!(pretty(&t), "(\\x : Int. x) 3");
        let u = Term::union(
            Set,
            Term::where_(Set, Term::var("b"), Term::var("s")),
            Term::var("t"),
        );
        assert_eq!(pretty(&u), "(where b do s) union t");
    }

    #[test]
    fn kind_changing_operators() {
        let t = Term::is_empty(Term::dedup(Term::var("t")));
        assert_eq!(pretty(&t), "empty (dedup t)");
        let p = Term::promote(Term::proj(Term::var("x"), "a"));
        assert_eq!(pretty(&p), "promote x.a");
    }

    #[test]
    fn types_render() {
        let f = TypeExpr::fun(TypeExpr::fun(t_int(), t_int()), t_int());
        assert_eq!(pretty_type(&f), "(Int -> Int) -> Int");
        let g = TypeExpr::fun(t_int(), TypeExpr::fun(t_int(), t_int()));
        assert_eq!(pretty_type(&g), "Int -> Int -> Int");
        let r = TypeExpr::record(vec![
            ("name".into(), TypeExpr::Atom(AtomType::String)),
            ("id".into(), t_int()),
        ]);
        assert_eq!(pretty_type(&r), "<id : Int, name : String>");
        assert_eq!(pretty_type(&TypeExpr::bag_of(r)), "{|<id : Int, name : String>|}");
    }

    #[test]
    fn records_print_sorted() {
        let t = Term::record(vec![("b".into(), Term::int(2)), ("a".into(), Term::int(1))]);
        assert_eq!(pretty(&t), "<a = 1, b = 2>");
        assert_eq!(pretty(&Term::record(vec![])), "<>");
    }
}
