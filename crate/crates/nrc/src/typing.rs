//! Bidirectional type checker.
//!
//! Inference handles every form except an unannotated empty collection
//! literal, which only checks against an expected type. Lambdas are
//! annotated in the surface syntax, so inference is total on parsed,
//! fully-annotated terms. Errors carry the path of the offending node so
//! the CLI can point at its source span.
//!
//! The checker serves two calculi: the full one with both collection kinds,
//! and the set-only target of erasure, where `dedup` and `promote` act on
//! sets (and bag-kinded constructors are rejected outright).

use crate::ast::{AtomType, CollKind, Cst, HoleId, Name, Path, Term, TypeExpr};
use std::collections::BTreeMap;
use std::fmt;

/// Which calculus terms are checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Calculus {
    /// Sets and bags, with `dedup : {|T|} -> {T}` and `promote : {T} -> {|T|}`.
    SetBag,
    /// Sets only; `dedup` and `promote` are `{T} -> {T}`.
    SetOnly,
}

/// Typing context: free variables, typed holes, and the ambient calculus.
#[derive(Clone, Debug)]
pub struct TypeEnv {
    pub vars: BTreeMap<Name, TypeExpr>,
    pub holes: BTreeMap<HoleId, TypeExpr>,
    pub calculus: Calculus,
}

impl TypeEnv {
    pub fn new(calculus: Calculus) -> TypeEnv {
        TypeEnv {
            vars: BTreeMap::new(),
            holes: BTreeMap::new(),
            calculus,
        }
    }

    pub fn with_var(mut self, name: impl Into<Name>, ty: TypeExpr) -> TypeEnv {
        self.vars.insert(name.into(), ty);
        self
    }

    pub fn with_hole(mut self, id: impl Into<HoleId>, ty: TypeExpr) -> TypeEnv {
        self.holes.insert(id.into(), ty);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeErrorKind {
    UnboundVariable(Name),
    UnboundHole(HoleId),
    /// The binder is in scope but its type could not be established
    /// (used when re-checking subterms of partially typed contexts).
    UnknownBinderType(Name),
    FieldMissing { label: String, ty: TypeExpr },
    DuplicateLabel(String),
    NotAFunction(TypeExpr),
    NotACollection(TypeExpr),
    KindMismatch { expected: CollKind, found: CollKind },
    MissingAnnotation,
    ArityMismatch { op: String, expected: usize, found: usize },
    ArgTypeMismatch { expected: TypeExpr, found: TypeExpr },
    TypeMismatch { expected: TypeExpr, found: TypeExpr },
}

impl TypeErrorKind {
    /// Stable diagnostic code, printed as `ERR <code> at <span>: <message>`.
    pub fn code(&self) -> &'static str {
        match self {
            TypeErrorKind::UnboundVariable(_) => "UnboundVariable",
            TypeErrorKind::UnboundHole(_) => "UnboundHole",
            TypeErrorKind::UnknownBinderType(_) => "UnknownBinderType",
            TypeErrorKind::FieldMissing { .. } => "FieldMissing",
            TypeErrorKind::DuplicateLabel(_) => "DuplicateLabel",
            TypeErrorKind::NotAFunction(_) => "NotAFunction",
            TypeErrorKind::NotACollection(_) => "NotACollection",
            TypeErrorKind::KindMismatch { .. } => "KindMismatch",
            TypeErrorKind::MissingAnnotation => "MissingAnnotation",
            TypeErrorKind::ArityMismatch { .. } => "ArityMismatch",
            TypeErrorKind::ArgTypeMismatch { .. } => "ArgTypeMismatch",
            TypeErrorKind::TypeMismatch { .. } => "TypeMismatch",
        }
    }
}

impl fmt::Display for TypeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeErrorKind::UnboundVariable(x) => write!(f, "unbound variable `{x}`"),
            TypeErrorKind::UnboundHole(p) => write!(f, "hole `[{p}]` has no declared type"),
            TypeErrorKind::UnknownBinderType(x) => {
                write!(f, "cannot determine the type of the binder `{x}`")
            }
            TypeErrorKind::FieldMissing { label, ty } => {
                write!(f, "type `{ty}` has no field `{label}`")
            }
            TypeErrorKind::DuplicateLabel(l) => write!(f, "duplicate record label `{l}`"),
            TypeErrorKind::NotAFunction(ty) => {
                write!(f, "expected a function, found a value of type `{ty}`")
            }
            TypeErrorKind::NotACollection(ty) => {
                write!(f, "expected a collection, found a value of type `{ty}`")
            }
            TypeErrorKind::KindMismatch { expected, found } => {
                write!(f, "expected a {expected} here, found a {found}")
            }
            TypeErrorKind::MissingAnnotation => {
                write!(f, "an empty collection literal needs a type annotation here")
            }
            TypeErrorKind::ArityMismatch { op, expected, found } => {
                write!(f, "`{op}` expects {expected} argument(s), found {found}")
            }
            TypeErrorKind::ArgTypeMismatch { expected, found } => {
                write!(f, "argument has type `{found}`, but `{expected}` is required")
            }
            TypeErrorKind::TypeMismatch { expected, found } => {
                write!(f, "expected type `{expected}`, found `{found}`")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub path: Path,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)
    }
}

impl std::error::Error for TypeError {}

/// A stack of binders enclosing the term being checked. `None` marks a
/// binder that is in scope but whose type is unknown; looking one up fails
/// rather than falling through to an outer binding of the same name.
pub type BinderStack = [(Name, Option<TypeExpr>)];

/// Infer the type of a closed-in-`env` term.
pub fn infer(env: &TypeEnv, t: &Term) -> Result<TypeExpr, TypeError> {
    infer_in(env, &[], t)
}

/// Infer under an explicit stack of enclosing binders.
pub fn infer_in(env: &TypeEnv, stack: &BinderStack, t: &Term) -> Result<TypeExpr, TypeError> {
    let mut scope: Vec<(Name, Option<TypeExpr>)> = stack.to_vec();
    infer_rec(env, &mut scope, t, &mut Vec::new())
}

/// Check a term against an expected type.
pub fn check(env: &TypeEnv, t: &Term, expected: &TypeExpr) -> Result<(), TypeError> {
    let mut scope = Vec::new();
    check_rec(env, &mut scope, t, expected, &mut Vec::new())
}

fn lookup(
    env: &TypeEnv,
    scope: &[(Name, Option<TypeExpr>)],
    x: &str,
    path: &Path,
) -> Result<TypeExpr, TypeError> {
    for (name, ty) in scope.iter().rev() {
        if name == x {
            return ty.clone().ok_or_else(|| TypeError {
                kind: TypeErrorKind::UnknownBinderType(x.to_string()),
                path: path.clone(),
            });
        }
    }
    env.vars.get(x).cloned().ok_or_else(|| TypeError {
        kind: TypeErrorKind::UnboundVariable(x.to_string()),
        path: path.clone(),
    })
}

fn err(kind: TypeErrorKind, path: &Path) -> TypeError {
    TypeError { kind, path: path.clone() }
}

fn infer_rec(
    env: &TypeEnv,
    scope: &mut Vec<(Name, Option<TypeExpr>)>,
    t: &Term,
    path: &mut Path,
) -> Result<TypeExpr, TypeError> {
    match t {
        Term::Var(x) => lookup(env, scope, x, path),
        Term::Hole(p) => env.holes.get(p).cloned().ok_or_else(|| {
            err(TypeErrorKind::UnboundHole(p.clone()), path)
        }),
        Term::Const(c, args) => infer_const(env, scope, c, args, path),
        Term::Record(fields) => {
            for w in fields.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(err(TypeErrorKind::DuplicateLabel(w[0].0.clone()), path));
                }
            }
            let mut tys = Vec::with_capacity(fields.len());
            for (i, (l, v)) in fields.iter().enumerate() {
                path.push(i);
                let ty = infer_rec(env, scope, v, path)?;
                path.pop();
                tys.push((l.clone(), ty));
            }
            Ok(TypeExpr::Record(tys))
        }
        Term::Proj(s, l) => {
            path.push(0);
            let ts = infer_rec(env, scope, s, path)?;
            path.pop();
            match &ts {
                TypeExpr::Record(fields) => fields
                    .iter()
                    .find(|(fl, _)| fl == l)
                    .map(|(_, ft)| ft.clone())
                    .ok_or_else(|| {
                        err(TypeErrorKind::FieldMissing { label: l.clone(), ty: ts.clone() }, path)
                    }),
                _ => Err(err(TypeErrorKind::FieldMissing { label: l.clone(), ty: ts }, path)),
            }
        }
        Term::Lam(x, ty, body) => {
            scope.push((x.clone(), Some(ty.clone())));
            path.push(0);
            let tb = infer_rec(env, scope, body, path);
            path.pop();
            scope.pop();
            Ok(TypeExpr::fun(ty.clone(), tb?))
        }
        Term::App(f, a) => {
            path.push(0);
            let tf = infer_rec(env, scope, f, path)?;
            path.pop();
            match tf {
                TypeExpr::Fun(dom, cod) => {
                    path.push(1);
                    let r = check_rec(env, scope, a, &dom, path).map_err(|e| {
                        promote_arg_error(e, path)
                    });
                    path.pop();
                    r?;
                    Ok(*cod)
                }
                other => Err(err(TypeErrorKind::NotAFunction(other), path)),
            }
        }
        Term::Empty(kind, ann) => {
            check_kind_allowed(env, *kind, path)?;
            match ann {
                Some(elem) => Ok(TypeExpr::coll(*kind, (**elem).clone())),
                None => Err(err(TypeErrorKind::MissingAnnotation, path)),
            }
        }
        Term::Single(kind, e) => {
            check_kind_allowed(env, *kind, path)?;
            path.push(0);
            let te = infer_rec(env, scope, e, path)?;
            path.pop();
            Ok(TypeExpr::coll(*kind, te))
        }
        Term::Union(kind, a, b) => {
            check_kind_allowed(env, *kind, path)?;
            // Prefer inferring the operand that can stand alone, then check
            // the other against it; this lets one side be an unannotated
            // empty literal.
            path.push(0);
            let ta = infer_rec(env, scope, a, path);
            path.pop();
            let ta = match ta {
                Ok(t) => {
                    expect_coll(&t, *kind, path)?;
                    path.push(1);
                    check_rec(env, scope, b, &t, path)?;
                    path.pop();
                    t
                }
                Err(e) if e.kind == TypeErrorKind::MissingAnnotation => {
                    path.push(1);
                    let tb = infer_rec(env, scope, b, path)?;
                    path.pop();
                    expect_coll(&tb, *kind, path)?;
                    path.push(0);
                    check_rec(env, scope, a, &tb, path)?;
                    path.pop();
                    tb
                }
                Err(e) => return Err(e),
            };
            Ok(ta)
        }
        Term::Comp(kind, head, x, src) => {
            check_kind_allowed(env, *kind, path)?;
            path.push(1);
            let ts = infer_rec(env, scope, src, path)?;
            path.pop();
            let elem = expect_coll(&ts, *kind, &with(path, 1))?;
            scope.push((x.clone(), Some(elem)));
            path.push(0);
            let th = infer_rec(env, scope, head, path);
            path.pop();
            scope.pop();
            let th = th?;
            expect_coll(&th, *kind, &with(path, 0))?;
            Ok(th)
        }
        Term::Where(kind, cond, body) => {
            check_kind_allowed(env, *kind, path)?;
            path.push(0);
            check_rec(env, scope, cond, &TypeExpr::Atom(AtomType::Bool), path)?;
            path.pop();
            path.push(1);
            let tb = infer_rec(env, scope, body, path)?;
            path.pop();
            expect_coll(&tb, *kind, &with(path, 1))?;
            Ok(tb)
        }
        Term::IsEmpty(s) => {
            path.push(0);
            let ts = infer_rec(env, scope, s, path)?;
            path.pop();
            expect_coll(&ts, CollKind::Set, &with(path, 0))?;
            Ok(TypeExpr::Atom(AtomType::Bool))
        }
        Term::Dedup(s) => {
            path.push(0);
            let ts = infer_rec(env, scope, s, path)?;
            path.pop();
            let arg_kind = match env.calculus {
                Calculus::SetBag => CollKind::Bag,
                Calculus::SetOnly => CollKind::Set,
            };
            let elem = expect_coll(&ts, arg_kind, &with(path, 0))?;
            Ok(TypeExpr::set_of(elem))
        }
        Term::Promote(s) => {
            path.push(0);
            let ts = infer_rec(env, scope, s, path)?;
            path.pop();
            let elem = expect_coll(&ts, CollKind::Set, &with(path, 0))?;
            let out_kind = match env.calculus {
                Calculus::SetBag => CollKind::Bag,
                Calculus::SetOnly => CollKind::Set,
            };
            Ok(TypeExpr::coll(out_kind, elem))
        }
    }
}

fn with(path: &Path, i: usize) -> Path {
    let mut p = path.clone();
    p.push(i);
    p
}

/// In the set-only calculus, bag-kinded constructors are ill-formed.
fn check_kind_allowed(env: &TypeEnv, kind: CollKind, path: &Path) -> Result<(), TypeError> {
    if env.calculus == Calculus::SetOnly && kind == CollKind::Bag {
        return Err(err(
            TypeErrorKind::KindMismatch { expected: CollKind::Set, found: CollKind::Bag },
            path,
        ));
    }
    Ok(())
}

fn expect_coll(ty: &TypeExpr, kind: CollKind, path: &Path) -> Result<TypeExpr, TypeError> {
    match ty {
        TypeExpr::Coll(k, elem) if *k == kind => Ok((**elem).clone()),
        TypeExpr::Coll(k, _) => Err(err(
            TypeErrorKind::KindMismatch { expected: kind, found: *k },
            path,
        )),
        other => Err(err(TypeErrorKind::NotACollection(other.clone()), path)),
    }
}

/// When a checked argument fails right at its root with a plain mismatch,
/// report it as an argument-type error.
fn promote_arg_error(e: TypeError, arg_path: &Path) -> TypeError {
    match e.kind {
        TypeErrorKind::TypeMismatch { expected, found } if e.path == *arg_path => TypeError {
            kind: TypeErrorKind::ArgTypeMismatch { expected, found },
            path: e.path,
        },
        _ => e,
    }
}

fn infer_const(
    env: &TypeEnv,
    scope: &mut Vec<(Name, Option<TypeExpr>)>,
    c: &Cst,
    args: &[Term],
    path: &mut Path,
) -> Result<TypeExpr, TypeError> {
    use AtomType::*;
    if args.len() != c.arity() {
        return Err(err(
            TypeErrorKind::ArityMismatch {
                op: c.name(),
                expected: c.arity(),
                found: args.len(),
            },
            path,
        ));
    }
    let atom = |a| TypeExpr::Atom(a);
    match c {
        Cst::Bool(_) => Ok(atom(Bool)),
        Cst::Int(_) => Ok(atom(Int)),
        Cst::Str(_) => Ok(atom(String)),
        Cst::Not => {
            path.push(0);
            check_rec(env, scope, &args[0], &atom(Bool), path)?;
            path.pop();
            Ok(atom(Bool))
        }
        Cst::And | Cst::Or => {
            for (i, a) in args.iter().enumerate() {
                path.push(i);
                check_rec(env, scope, a, &atom(Bool), path)?;
                path.pop();
            }
            Ok(atom(Bool))
        }
        Cst::Add | Cst::Le => {
            for (i, a) in args.iter().enumerate() {
                path.push(i);
                check_rec(env, scope, a, &atom(Int), path)?;
                path.pop();
            }
            Ok(atom(if matches!(c, Cst::Add) { Int } else { Bool }))
        }
        Cst::Eq => {
            // Equality is overloaded over Int and String.
            path.push(0);
            let ta = infer_rec(env, scope, &args[0], path)?;
            path.pop();
            if ta != atom(Int) && ta != atom(String) {
                return Err(err(
                    TypeErrorKind::ArgTypeMismatch { expected: atom(Int), found: ta },
                    &with(path, 0),
                ));
            }
            path.push(1);
            check_rec(env, scope, &args[1], &ta, path)?;
            path.pop();
            Ok(atom(Bool))
        }
    }
}

fn check_rec(
    env: &TypeEnv,
    scope: &mut Vec<(Name, Option<TypeExpr>)>,
    t: &Term,
    expected: &TypeExpr,
    path: &mut Path,
) -> Result<(), TypeError> {
    match t {
        Term::Empty(kind, None) => {
            check_kind_allowed(env, *kind, path)?;
            match expected {
                TypeExpr::Coll(k, _) if k == kind => Ok(()),
                TypeExpr::Coll(k, _) => Err(err(
                    TypeErrorKind::KindMismatch { expected: *k, found: *kind },
                    path,
                )),
                other => Err(err(TypeErrorKind::NotACollection(other.clone()), path)),
            }
        }
        Term::Single(kind, e) => {
            check_kind_allowed(env, *kind, path)?;
            match expected {
                TypeExpr::Coll(k, elem) if k == kind => {
                    path.push(0);
                    let r = check_rec(env, scope, e, elem, path);
                    path.pop();
                    r
                }
                _ => fallback_check(env, scope, t, expected, path),
            }
        }
        Term::Union(kind, a, b) => {
            check_kind_allowed(env, *kind, path)?;
            match expected {
                TypeExpr::Coll(k, _) if k == kind => {
                    path.push(0);
                    check_rec(env, scope, a, expected, path)?;
                    path.pop();
                    path.push(1);
                    let r = check_rec(env, scope, b, expected, path);
                    path.pop();
                    r
                }
                _ => fallback_check(env, scope, t, expected, path),
            }
        }
        Term::Where(kind, cond, body) => {
            check_kind_allowed(env, *kind, path)?;
            match expected {
                TypeExpr::Coll(k, _) if k == kind => {
                    path.push(0);
                    check_rec(env, scope, cond, &TypeExpr::Atom(AtomType::Bool), path)?;
                    path.pop();
                    path.push(1);
                    let r = check_rec(env, scope, body, expected, path);
                    path.pop();
                    r
                }
                _ => fallback_check(env, scope, t, expected, path),
            }
        }
        Term::Lam(x, ann, body) => match expected {
            TypeExpr::Fun(dom, cod) => {
                if ann != dom.as_ref() {
                    return Err(err(
                        TypeErrorKind::TypeMismatch {
                            expected: (**dom).clone(),
                            found: ann.clone(),
                        },
                        path,
                    ));
                }
                scope.push((x.clone(), Some(ann.clone())));
                path.push(0);
                let r = check_rec(env, scope, body, cod, path);
                path.pop();
                scope.pop();
                r
            }
            _ => fallback_check(env, scope, t, expected, path),
        },
        _ => fallback_check(env, scope, t, expected, path),
    }
}

fn fallback_check(
    env: &TypeEnv,
    scope: &mut Vec<(Name, Option<TypeExpr>)>,
    t: &Term,
    expected: &TypeExpr,
    path: &mut Path,
) -> Result<(), TypeError> {
    let found = infer_rec(env, scope, t, path)?;
    if &found == expected {
        Ok(())
    } else if let (TypeExpr::Coll(ke, ee), TypeExpr::Coll(kf, ef)) = (expected, &found) {
        if ke != kf && ee == ef {
            return Err(err(
                TypeErrorKind::KindMismatch { expected: *ke, found: *kf },
                path,
            ));
        }
        Err(err(
            TypeErrorKind::TypeMismatch { expected: expected.clone(), found },
            path,
        ))
    } else {
        Err(err(
            TypeErrorKind::TypeMismatch { expected: expected.clone(), found },
            path,
        ))
    }
}
