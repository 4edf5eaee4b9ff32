//! Parser for the surface syntax.
//!
//! The grammar mirrors the pretty-printer's precedence table (see
//! [`crate::pretty`]). Two pieces of sugar are accepted on input only:
//! multi-generator comprehensions `for (x <- M, y <- N) H` nest to
//! `for (x <- M) for (y <- N) H`, and `bagempty M` reads as
//! `empty (dedup M)`.
//!
//! Alongside the term, parsing produces a [`SpanTree`] mirroring the term's
//! child structure, so later phases can report byte spans for any node by
//! its path. Nodes synthesized by desugaring inherit the span of the
//! construct that produced them.

use crate::ast::{AtomType, CollKind, Cst, Term, TypeExpr};
use std::fmt;

/// Byte range `(start, end)` into the source text.
pub type Span = (usize, usize);

/// Spans arranged parallel to [`Term::children`] order.
#[derive(Debug, Clone)]
pub struct SpanTree {
    pub span: Span,
    pub kids: Vec<SpanTree>,
}

impl SpanTree {
    fn leaf(span: Span) -> SpanTree {
        SpanTree { span, kids: vec![] }
    }

    /// Span of the node at `path`, falling back to the deepest recorded
    /// ancestor when the path outruns the tree.
    pub fn at(&self, path: &[usize]) -> Span {
        let mut node = self;
        for &i in path {
            match node.kids.get(i) {
                Some(k) => node = k,
                None => break,
            }
        }
        node.span
    }
}

/// A parsed term plus its span information.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub term: Term,
    pub spans: SpanTree,
}

#[derive(Debug, Clone)]
pub struct ParseError {
    pub msg: String,
    /// Byte offset of the offending token.
    pub at: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at byte {})", self.msg, self.at)
    }
}

impl std::error::Error for ParseError {}

/// 1-based `(line, column)` for a byte offset.
pub fn line_col(src: &str, at: usize) -> (usize, usize) {
    let at = at.min(src.len());
    let mut line = 1;
    let mut col = 1;
    for (i, ch) in src.char_indices() {
        if i >= at {
            break;
        }
        if ch == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

// ---------------------------------------------------------------- lexer --

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LBrace,
    RBrace,
    LBagBrace,
    RBagBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Comma,
    Dot,
    Colon,
    Eq,
    Le,
    Arrow,
    Gen,
    Plus,
    Backslash,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBagBrace => "`{|`".into(),
            Tok::RBagBrace => "`|}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Gen => "`<-`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Backslash => "`\\`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Lexed {
    tok: Tok,
    start: usize,
    end: usize,
}

fn lex(src: &str) -> Result<Vec<Lexed>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if b == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = match b {
            b'{' if bytes.get(i + 1) == Some(&b'|') => {
                i += 2;
                Tok::LBagBrace
            }
            b'{' => {
                i += 1;
                Tok::LBrace
            }
            b'|' if bytes.get(i + 1) == Some(&b'}') => {
                i += 2;
                Tok::RBagBrace
            }
            b'}' => {
                i += 1;
                Tok::RBrace
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b'[' => {
                i += 1;
                Tok::LBracket
            }
            b']' => {
                i += 1;
                Tok::RBracket
            }
            b'<' if bytes.get(i + 1) == Some(&b'=') => {
                i += 2;
                Tok::Le
            }
            b'<' if bytes.get(i + 1) == Some(&b'-') => {
                i += 2;
                Tok::Gen
            }
            b'<' => {
                i += 1;
                Tok::Lt
            }
            b'>' => {
                i += 1;
                Tok::Gt
            }
            b',' => {
                i += 1;
                Tok::Comma
            }
            b'.' => {
                i += 1;
                Tok::Dot
            }
            b':' => {
                i += 1;
                Tok::Colon
            }
            b'=' => {
                i += 1;
                Tok::Eq
            }
            b'+' => {
                i += 1;
                Tok::Plus
            }
            b'\\' => {
                i += 1;
                Tok::Backslash
            }
            b'-' if bytes.get(i + 1) == Some(&b'>') => {
                i += 2;
                Tok::Arrow
            }
            b'-' if bytes.get(i + 1).is_some_and(|c| c.is_ascii_digit()) => {
                i += 1;
                let ds = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let text = &src[ds..i];
                let v: i64 = text.parse().map_err(|_| ParseError {
                    msg: format!("integer literal out of range: -{text}"),
                    at: start,
                })?;
                Tok::Int(-v)
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let text = &src[start..i];
                let v: i64 = text.parse().map_err(|_| ParseError {
                    msg: format!("integer literal out of range: {text}"),
                    at: start,
                })?;
                Tok::Int(v)
            }
            b'"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(ParseError {
                                msg: "unterminated string literal".into(),
                                at: start,
                            })
                        }
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(b'\\') => {
                            let esc = bytes.get(i + 1).copied();
                            let ch = match esc {
                                Some(b'"') => '"',
                                Some(b'\\') => '\\',
                                Some(b'n') => '\n',
                                Some(b't') => '\t',
                                Some(b'r') => '\r',
                                _ => {
                                    return Err(ParseError {
                                        msg: "unsupported escape in string literal".into(),
                                        at: i,
                                    })
                                }
                            };
                            s.push(ch);
                            i += 2;
                        }
                        Some(_) => {
                            // Keep multi-byte UTF-8 sequences intact.
                            let rest = &src[i..];
                            let ch = rest.chars().next().unwrap();
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                Tok::Str(s)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                Tok::Ident(src[start..i].to_string())
            }
            _ => {
                return Err(ParseError {
                    msg: format!("unexpected character `{}`", &src[i..].chars().next().unwrap()),
                    at: i,
                })
            }
        };
        out.push(Lexed { tok, start, end: i });
    }
    out.push(Lexed {
        tok: Tok::Eof,
        start: src.len(),
        end: src.len(),
    });
    Ok(out)
}

// --------------------------------------------------------------- parser --

const RESERVED: &[&str] = &[
    "for", "bagfor", "where", "bagwhere", "do", "union", "uplus", "empty", "bagempty", "dedup",
    "promote", "true", "false", "and", "or", "not", "Int", "Bool", "String",
];

struct Parser<'a> {
    toks: &'a [Lexed],
    pos: usize,
}

type PTerm = (Term, SpanTree);

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self) -> usize {
        self.toks[self.pos].start
    }

    fn next(&mut self) -> Lexed {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, ctx: &str) -> Result<Lexed, ParseError> {
        if self.peek() == want {
            Ok(self.next())
        } else {
            Err(ParseError {
                msg: format!("expected {} {}, found {}", want.describe(), ctx, self.peek().describe()),
                at: self.peek_at(),
            })
        }
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Tok::Ident(s) => Some(s.as_str()),
            _ => None,
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_ident() == Some(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, ctx: &str) -> Result<(String, Span), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let l = self.next();
                Ok((s, (l.start, l.end)))
            }
            other => Err(ParseError {
                msg: format!("expected identifier {}, found {}", ctx, other.describe()),
                at: self.peek_at(),
            }),
        }
    }

    // level 0: binder forms and guards, else the union level
    fn term(&mut self) -> Result<PTerm, ParseError> {
        match self.peek() {
            Tok::Backslash => self.lambda(),
            Tok::Ident(s) if s == "for" => self.comp(CollKind::Set),
            Tok::Ident(s) if s == "bagfor" => self.comp(CollKind::Bag),
            Tok::Ident(s) if s == "where" => self.where_(CollKind::Set),
            Tok::Ident(s) if s == "bagwhere" => self.where_(CollKind::Bag),
            _ => self.union_level(),
        }
    }

    fn lambda(&mut self) -> Result<PTerm, ParseError> {
        let open = self.next(); // backslash
        let (x, _) = self.ident("after `\\`")?;
        self.expect(&Tok::Colon, "after the bound variable")?;
        let ty = self.ty()?;
        self.expect(&Tok::Dot, "after the binder type")?;
        let (body, body_sp) = self.term()?;
        let span = (open.start, body_sp.span.1);
        Ok((
            Term::lam(x, ty, body),
            SpanTree { span, kids: vec![body_sp] },
        ))
    }

    fn comp(&mut self, kind: CollKind) -> Result<PTerm, ParseError> {
        let open = self.next(); // for / bagfor
        self.expect(&Tok::LParen, "after the comprehension keyword")?;
        let mut gens: Vec<(String, Term, SpanTree)> = Vec::new();
        loop {
            let (x, _) = self.ident("as a generator variable")?;
            self.expect(&Tok::Gen, "after the generator variable")?;
            let (src, src_sp) = self.term()?;
            gens.push((x, src, src_sp));
            if !matches!(self.peek(), Tok::Comma) {
                break;
            }
            self.next();
        }
        self.expect(&Tok::RParen, "to close the generators")?;
        let (head, head_sp) = self.term()?;
        let span = (open.start, head_sp.span.1);
        // Nest right: the first generator is outermost.
        let mut term = head;
        let mut tree = head_sp;
        for (x, src, src_sp) in gens.into_iter().rev() {
            term = Term::comp(kind, term, x, src);
            tree = SpanTree {
                span,
                kids: vec![tree, src_sp],
            };
        }
        Ok((term, tree))
    }

    fn where_(&mut self, kind: CollKind) -> Result<PTerm, ParseError> {
        let open = self.next(); // where / bagwhere
        let (cond, cond_sp) = self.union_level()?;
        if !self.eat_keyword("do") {
            return Err(ParseError {
                msg: format!("expected `do` after the guard, found {}", self.peek().describe()),
                at: self.peek_at(),
            });
        }
        let (body, body_sp) = self.term()?;
        let span = (open.start, body_sp.span.1);
        Ok((
            Term::where_(kind, cond, body),
            SpanTree { span, kids: vec![cond_sp, body_sp] },
        ))
    }

    // level 1: union / uplus, left-associative
    fn union_level(&mut self) -> Result<PTerm, ParseError> {
        let (mut t, mut sp) = self.cmp()?;
        loop {
            let kind = match self.peek_ident() {
                Some("union") => CollKind::Set,
                Some("uplus") => CollKind::Bag,
                _ => break,
            };
            self.next();
            let (r, r_sp) = self.cmp()?;
            let span = (sp.span.0, r_sp.span.1);
            t = Term::union(kind, t, r);
            sp = SpanTree { span, kids: vec![sp, r_sp] };
        }
        Ok((t, sp))
    }

    // level 2: = and <=, non-associative
    fn cmp(&mut self) -> Result<PTerm, ParseError> {
        let (l, l_sp) = self.add()?;
        let op = match self.peek() {
            Tok::Eq => Cst::Eq,
            Tok::Le => Cst::Le,
            _ => return Ok((l, l_sp)),
        };
        self.next();
        let (r, r_sp) = self.add()?;
        let span = (l_sp.span.0, r_sp.span.1);
        Ok((
            Term::Const(op, vec![l, r]),
            SpanTree { span, kids: vec![l_sp, r_sp] },
        ))
    }

    // level 3: +, left-associative
    fn add(&mut self) -> Result<PTerm, ParseError> {
        let (mut t, mut sp) = self.app()?;
        while matches!(self.peek(), Tok::Plus) {
            self.next();
            let (r, r_sp) = self.app()?;
            let span = (sp.span.0, r_sp.span.1);
            t = Term::Const(Cst::Add, vec![t, r]);
            sp = SpanTree { span, kids: vec![sp, r_sp] };
        }
        Ok((t, sp))
    }

    // level 4: application and the prefix operators
    fn app(&mut self) -> Result<PTerm, ParseError> {
        let kw = self.peek_ident().map(str::to_owned);
        if let Some(kw) = kw.as_deref() {
            let build: Option<fn(Term) -> Term> = match kw {
                "empty" => Some(Term::is_empty),
                "dedup" => Some(Term::dedup),
                "promote" => Some(Term::promote),
                "bagempty" => Some(|t| Term::is_empty(Term::dedup(t))),
                _ => None,
            };
            if let Some(build) = build {
                let open = self.next();
                let (arg, arg_sp) = self.atom()?;
                let span = (open.start, arg_sp.span.1);
                let term = build(arg);
                // bagempty produces two nested nodes; give both the construct span.
                let tree = if kw == "bagempty" {
                    SpanTree {
                        span,
                        kids: vec![SpanTree { span, kids: vec![arg_sp] }],
                    }
                } else {
                    SpanTree { span, kids: vec![arg_sp] }
                };
                return Ok((term, tree));
            }
        }
        let (mut t, mut sp) = self.atom()?;
        while self.starts_atom() {
            let (arg, arg_sp) = self.atom()?;
            let span = (sp.span.0, arg_sp.span.1);
            t = Term::app(t, arg);
            sp = SpanTree { span, kids: vec![sp, arg_sp] };
        }
        Ok((t, sp))
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::Int(_) | Tok::Str(_) | Tok::LParen | Tok::LBrace | Tok::LBagBrace | Tok::Lt
            | Tok::LBracket => true,
            Tok::Ident(s) => {
                !RESERVED.contains(&s.as_str())
                    || matches!(s.as_str(), "true" | "false" | "and" | "or" | "not")
            }
            _ => false,
        }
    }

    // level 5: atoms, then postfix projections
    fn atom(&mut self) -> Result<PTerm, ParseError> {
        let (mut t, mut sp) = self.bare_atom()?;
        while matches!(self.peek(), Tok::Dot) {
            self.next();
            let (label, lsp) = self.ident("as a field label")?;
            let span = (sp.span.0, lsp.1);
            t = Term::proj(t, label);
            sp = SpanTree { span, kids: vec![sp] };
        }
        Ok((t, sp))
    }

    fn bare_atom(&mut self) -> Result<PTerm, ParseError> {
        let at = self.peek_at();
        match self.peek().clone() {
            Tok::Int(i) => {
                let l = self.next();
                Ok((Term::int(i), SpanTree::leaf((l.start, l.end))))
            }
            Tok::Str(s) => {
                let l = self.next();
                Ok((Term::str(s), SpanTree::leaf((l.start, l.end))))
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "false" => {
                    let l = self.next();
                    Ok((Term::bool(s == "true"), SpanTree::leaf((l.start, l.end))))
                }
                "and" | "or" => {
                    let open = self.next();
                    self.expect(&Tok::LParen, "after the operator name")?;
                    let (a, a_sp) = self.term()?;
                    self.expect(&Tok::Comma, "between the operands")?;
                    let (b, b_sp) = self.term()?;
                    let close = self.expect(&Tok::RParen, "to close the operand list")?;
                    let op = if s == "and" { Cst::And } else { Cst::Or };
                    Ok((
                        Term::Const(op, vec![a, b]),
                        SpanTree { span: (open.start, close.end), kids: vec![a_sp, b_sp] },
                    ))
                }
                "not" => {
                    let open = self.next();
                    self.expect(&Tok::LParen, "after the operator name")?;
                    let (a, a_sp) = self.term()?;
                    let close = self.expect(&Tok::RParen, "to close the operand list")?;
                    Ok((
                        Term::Const(Cst::Not, vec![a]),
                        SpanTree { span: (open.start, close.end), kids: vec![a_sp] },
                    ))
                }
                kw if RESERVED.contains(&kw) => Err(ParseError {
                    msg: format!("keyword `{kw}` cannot appear here"),
                    at,
                }),
                _ => {
                    let l = self.next();
                    Ok((Term::var(s), SpanTree::leaf((l.start, l.end))))
                }
            },
            Tok::LBracket => {
                let open = self.next();
                let id = match self.peek().clone() {
                    Tok::Ident(s) => {
                        self.next();
                        s
                    }
                    Tok::Int(i) if i >= 0 => {
                        self.next();
                        i.to_string()
                    }
                    other => {
                        return Err(ParseError {
                            msg: format!("expected a hole name, found {}", other.describe()),
                            at: self.peek_at(),
                        })
                    }
                };
                let close = self.expect(&Tok::RBracket, "to close the hole")?;
                Ok((Term::hole(id), SpanTree::leaf((open.start, close.end))))
            }
            Tok::LParen => {
                let open = self.next();
                let (t, mut sp) = self.term()?;
                let close = self.expect(&Tok::RParen, "to close the parenthesis")?;
                sp.span = (open.start, close.end);
                Ok((t, sp))
            }
            Tok::LBrace => self.braces(CollKind::Set, Tok::RBrace),
            Tok::LBagBrace => self.braces(CollKind::Bag, Tok::RBagBrace),
            Tok::Lt => self.record(),
            other => Err(ParseError {
                msg: format!("expected a term, found {}", other.describe()),
                at,
            }),
        }
    }

    fn braces(&mut self, kind: CollKind, close_tok: Tok) -> Result<PTerm, ParseError> {
        let open = self.next();
        if self.peek() == &close_tok {
            let close = self.next();
            let mut span = (open.start, close.end);
            let ann = if matches!(self.peek(), Tok::Colon) {
                self.next();
                let ty_at = self.peek_at();
                let ty = self.ty()?;
                span.1 = self.toks[self.pos.saturating_sub(1)].end;
                match ty {
                    TypeExpr::Coll(k, elem) if k == kind => Some(Box::new(*elem)),
                    other => {
                        return Err(ParseError {
                            msg: format!(
                                "annotation on an empty {kind} literal must be a {kind} type, found `{other}`"
                            ),
                            at: ty_at,
                        })
                    }
                }
            } else {
                None
            };
            Ok((Term::Empty(kind, ann), SpanTree::leaf(span)))
        } else {
            let (e, e_sp) = self.term()?;
            let close = self.expect(&close_tok, "to close the collection literal")?;
            Ok((
                Term::single(kind, e),
                SpanTree { span: (open.start, close.end), kids: vec![e_sp] },
            ))
        }
    }

    fn record(&mut self) -> Result<PTerm, ParseError> {
        let open = self.next(); // <
        if matches!(self.peek(), Tok::Gt) {
            let close = self.next();
            return Ok((Term::Record(vec![]), SpanTree::leaf((open.start, close.end))));
        }
        let mut fields: Vec<(String, Term, SpanTree)> = Vec::new();
        loop {
            let (label, label_sp) = self.ident("as a record label")?;
            if fields.iter().any(|(l, _, _)| *l == label) {
                return Err(ParseError {
                    msg: format!("duplicate record label `{label}`"),
                    at: label_sp.0,
                });
            }
            self.expect(&Tok::Eq, "after the record label")?;
            let (v, v_sp) = self.term()?;
            fields.push((label, v, v_sp));
            if matches!(self.peek(), Tok::Comma) {
                self.next();
            } else {
                break;
            }
        }
        let close = self.expect(&Tok::Gt, "to close the record")?;
        fields.sort_by(|a, b| a.0.cmp(&b.0));
        let kids = fields.iter().map(|(_, _, sp)| sp.clone()).collect();
        let term = Term::Record(fields.into_iter().map(|(l, v, _)| (l, v)).collect());
        Ok((term, SpanTree { span: (open.start, close.end), kids }))
    }

    // ------------------------------------------------------------ types --

    fn ty(&mut self) -> Result<TypeExpr, ParseError> {
        let d = self.ty_atom()?;
        if matches!(self.peek(), Tok::Arrow) {
            self.next();
            let c = self.ty()?;
            Ok(TypeExpr::fun(d, c))
        } else {
            Ok(d)
        }
    }

    fn ty_atom(&mut self) -> Result<TypeExpr, ParseError> {
        let at = self.peek_at();
        match self.peek().clone() {
            Tok::Ident(s) => match s.as_str() {
                "Int" => {
                    self.next();
                    Ok(TypeExpr::Atom(AtomType::Int))
                }
                "Bool" => {
                    self.next();
                    Ok(TypeExpr::Atom(AtomType::Bool))
                }
                "String" => {
                    self.next();
                    Ok(TypeExpr::Atom(AtomType::String))
                }
                other => Err(ParseError {
                    msg: format!("unknown type `{other}`"),
                    at,
                }),
            },
            Tok::LBrace => {
                self.next();
                let t = self.ty()?;
                self.expect(&Tok::RBrace, "to close the set type")?;
                Ok(TypeExpr::set_of(t))
            }
            Tok::LBagBrace => {
                self.next();
                let t = self.ty()?;
                self.expect(&Tok::RBagBrace, "to close the bag type")?;
                Ok(TypeExpr::bag_of(t))
            }
            Tok::Lt => {
                self.next();
                if matches!(self.peek(), Tok::Gt) {
                    self.next();
                    return Ok(TypeExpr::Record(vec![]));
                }
                let mut fields: Vec<(String, TypeExpr)> = Vec::new();
                loop {
                    let (label, label_sp) = self.ident("as a record-type label")?;
                    if fields.iter().any(|(l, _)| *l == label) {
                        return Err(ParseError {
                            msg: format!("duplicate record label `{label}`"),
                            at: label_sp.0,
                        });
                    }
                    self.expect(&Tok::Colon, "after the record-type label")?;
                    let t = self.ty()?;
                    fields.push((label, t));
                    if matches!(self.peek(), Tok::Comma) {
                        self.next();
                    } else {
                        break;
                    }
                }
                self.expect(&Tok::Gt, "to close the record type")?;
                Ok(TypeExpr::record(fields))
            }
            Tok::LParen => {
                self.next();
                let t = self.ty()?;
                self.expect(&Tok::RParen, "to close the parenthesis")?;
                Ok(t)
            }
            other => Err(ParseError {
                msg: format!("expected a type, found {}", other.describe()),
                at,
            }),
        }
    }
}

/// Parse a complete term (the whole input must be consumed).
pub fn parse_term(src: &str) -> Result<Parsed, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks: &toks, pos: 0 };
    let (term, spans) = p.term()?;
    if p.peek() != &Tok::Eof {
        return Err(ParseError {
            msg: format!("unexpected {} after the term", p.peek().describe()),
            at: p.peek_at(),
        });
    }
    Ok(Parsed { term, spans })
}

/// Parse a complete type.
pub fn parse_type(src: &str) -> Result<TypeExpr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks: &toks, pos: 0 };
    let ty = p.ty()?;
    if p.peek() != &Tok::Eof {
        return Err(ParseError {
            msg: format!("unexpected {} after the type", p.peek().describe()),
            at: p.peek_at(),
        });
    }
    Ok(ty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::CollKind::*;
    use crate::pretty::pretty;

    fn parses_to(src: &str, want: &Term) {
        let got = parse_term(src).expect("parse should succeed");
        assert_eq!(&got.term, want, "parsing `{src}`");
    }

    fn roundtrips(t: &Term) {
        let printed = pretty(t);
        let back = parse_term(&printed)
            .unwrap_or_else(|e| panic!("reparse of `{printed}` failed: {e}"));
        assert_eq!(&back.term, t, "round-trip through `{printed}`");
    }

    #[test]
    fn flagship_query_parses() {
        let src = "for (y <- for (x <- t) {{x.id}}) y";
        let inner = Term::comp(
            Set,
            Term::single(Set, Term::single(Set, Term::proj(Term::var("x"), "id"))),
            "x",
            Term::var("t"),
        );
        let want = Term::comp(Set, Term::var("y"), "y", inner);
        parses_to(src, &want);
        roundtrips(&want);
    }

    #[test]
    fn multi_generator_sugar_nests() {
        let sugar = parse_term("for (x <- s, y <- t) {x}").unwrap();
        let plain = parse_term("for (x <- s) for (y <- t) {x}").unwrap();
        assert_eq!(sugar.term, plain.term);
        let bag = parse_term("bagfor (x <- s, y <- t) {|x|}").unwrap();
        let bag_plain = parse_term("bagfor (x <- s) bagfor (y <- t) {|x|}").unwrap();
        assert_eq!(bag.term, bag_plain.term);
    }

    #[test]
    fn bagempty_sugar() {
        let t = parse_term("bagempty b").unwrap();
        assert_eq!(t.term, Term::is_empty(Term::dedup(Term::var("b"))));
    }

    #[test]
    fn projection_binds_tighter_than_application() {
        let t = parse_term("f x.a").unwrap();
        assert_eq!(
            t.term,
            Term::app(Term::var("f"), Term::proj(Term::var("x"), "a"))
        );
        let u = parse_term("(f x).a").unwrap();
        assert_eq!(
            u.term,
            Term::proj(Term::app(Term::var("f"), Term::var("x")), "a")
        );
    }

    #[test]
    fn scalar_operators() {
        let t = parse_term("x.a + 1 <= y.b").unwrap();
        assert_eq!(
            t.term,
            Term::Const(
                Cst::Le,
                vec![
                    Term::Const(Cst::Add, vec![Term::proj(Term::var("x"), "a"), Term::int(1)]),
                    Term::proj(Term::var("y"), "b"),
                ],
            )
        );
        let n = parse_term("and(not(p), q = \"hi\")").unwrap();
        assert_eq!(
            n.term,
            Term::Const(
                Cst::And,
                vec![
                    Term::Const(Cst::Not, vec![Term::var("p")]),
                    Term::Const(Cst::Eq, vec![Term::var("q"), Term::str("hi")]),
                ],
            )
        );
    }

    #[test]
    fn empty_annotations() {
        let t = parse_term("{} : {Int}").unwrap();
        assert_eq!(t.term, Term::empty(Set, TypeExpr::Atom(AtomType::Int)));
        let b = parse_term("{||} : {|<a : Bool>|}").unwrap();
        assert_eq!(
            b.term,
            Term::empty(
                Bag,
                TypeExpr::record(vec![("a".into(), TypeExpr::Atom(AtomType::Bool))])
            )
        );
        assert!(parse_term("{} : {|Int|}").is_err());
        assert!(parse_term("{} : Int").is_err());
        let bare = parse_term("{}").unwrap();
        assert_eq!(bare.term, Term::Empty(Set, None));
    }

    #[test]
    fn record_labels_sort_and_reject_duplicates() {
        let t = parse_term("<b = 2, a = 1>").unwrap();
        assert_eq!(
            t.term,
            Term::record(vec![("a".into(), Term::int(1)), ("b".into(), Term::int(2))])
        );
        assert!(parse_term("<a = 1, a = 2>").is_err());
        assert!(parse_type("<a : Int, a : Bool>").is_err());
    }

    #[test]
    fn spans_follow_children() {
        let src = "for (x <- t) {x.id}";
        let p = parse_term(src).unwrap();
        // Children of the comprehension: [head, src].
        let (s, e) = p.spans.at(&[1]);
        assert_eq!(&src[s..e], "t");
        let (s, e) = p.spans.at(&[0]);
        assert_eq!(&src[s..e], "{x.id}");
        let (s, e) = p.spans.at(&[0, 0]);
        assert_eq!(&src[s..e], "x.id");
    }

    #[test]
    fn record_spans_follow_sorted_order() {
        let src = "<b = 22, a = 11>";
        let p = parse_term(src).unwrap();
        // After sorting, child 0 is the value of label `a`.
        let (s, e) = p.spans.at(&[0]);
        assert_eq!(&src[s..e], "11");
        let (s, e) = p.spans.at(&[1]);
        assert_eq!(&src[s..e], "22");
    }

    #[test]
    fn reports_errors_with_offsets() {
        let err = parse_term("for (x <- ) {x}").unwrap_err();
        assert_eq!(err.at, 10);
        let err = parse_term("{x} union").unwrap_err();
        assert!(err.msg.contains("expected a term"));
        assert!(parse_term("(x").is_err());
        assert!(parse_term("x)").is_err());
        assert!(parse_term("\"oops").is_err());
    }

    #[test]
    fn comments_and_whitespace_are_skipped() {
        let src = "# heading\nfor (x <- t) # gen\n  {x}\n";
        let p = parse_term(src).unwrap();
        assert_eq!(
            p.term,
            Term::comp(Set, Term::single(Set, Term::var("x")), "x", Term::var("t"))
        );
    }

    #[test]
    fn canonical_round_trips() {
        for src in [
            "\\x : Int. x + 1",
            "(\\x : {Int}. where empty x do {1}) {}: {Int}",
            "for (x <- dedup t) {|x.a|}",
            "bagfor (x <- promote s) bagwhere x.a = 3 do {|x|}",
            "{<a = 1, b = \"two\">} union {} : {<a : Int, b : String>}",
            "[p] union (for (x <- [q]) {x})",
            "empty ({x} union {y})",
            "not(empty t)",
            "f (g x).a",
        ] {
            let t = parse_term(src).expect(src).term;
            roundtrips(&t);
        }
    }
}
