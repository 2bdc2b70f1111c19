//! Recursive-descent parser. All binders are alpha-renamed to globally
//! unique names on the way in, so substitution downstream is capture-free.

use crate::front::lexer::{lex, Tok, Token};
use crate::infer::{Decl, DeclKind, DiagCode, Diagnostic};
use crate::syntax::{
    fresh_suffix, Name, QualType, Qualifier, Span, Term, TermKind, Type,
};

/// Parser state shared across sources so a file can reference the
/// prelude's bindings.
#[derive(Default)]
pub struct ParseSession {
    term_scope: Vec<(String, Name)>,
    type_scope: Vec<(String, Name)>,
    top_level: Vec<String>,
}

impl ParseSession {
    pub fn new() -> ParseSession {
        ParseSession::default()
    }

    /// Parses one source on top of the session's accumulated scope.
    pub fn parse_source(&mut self, src: &str, prelude: bool) -> Result<Vec<Decl>, Diagnostic> {
        let tokens = lex(src).map_err(|e| {
            Diagnostic::new(DiagCode::Syntax, "lex", e.span, e.message)
        })?;
        let mut p = Parser { toks: tokens, pos: 0, sess: self, prelude };
        p.program()
    }
}

/// Convenience entry point: prelude source (if any) then the main source.
pub fn parse_program(prelude: Option<&str>, src: &str) -> Result<Vec<Decl>, Diagnostic> {
    let mut sess = ParseSession::new();
    let mut decls = Vec::new();
    if let Some(p) = prelude {
        decls.extend(sess.parse_source(p, true)?);
    }
    decls.extend(sess.parse_source(src, false)?);
    Ok(decls)
}

struct Parser<'s> {
    toks: Vec<Token>,
    pos: usize,
    sess: &'s mut ParseSession,
    prelude: bool,
}

type PResult<T> = Result<T, Diagnostic>;

impl<'s> Parser<'s> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }
    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }
    fn span(&self) -> Span {
        self.toks[self.pos].span
    }
    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }
    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::new(DiagCode::Syntax, "parse", self.span(), msg))
    }
    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Span> {
        if self.peek() == &tok {
            let s = self.span();
            self.bump();
            Ok(s)
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let sp = self.span();
                self.bump();
                Ok((s, sp))
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    // -- scope helpers ------------------------------------------------

    fn bind_term(&mut self, surface: &str) -> Name {
        let unique = if surface == "_" {
            format!("_${}", fresh_suffix())
        } else {
            format!("{surface}${}", fresh_suffix())
        };
        self.sess.term_scope.push((surface.to_string(), unique.clone()));
        unique
    }

    fn bind_type(&mut self, surface: &str) -> Name {
        let unique = format!("{surface}${}", fresh_suffix());
        self.sess.type_scope.push((surface.to_string(), unique.clone()));
        unique
    }

    /// Top-level names keep their surface spelling so reported types read
    /// naturally; they must therefore be unique per program.
    fn bind_top(&mut self, surface: &str, span: Span) -> PResult<Name> {
        if surface == "_" {
            let unique = format!("_${}", fresh_suffix());
            self.sess.term_scope.push(("_".into(), unique.clone()));
            return Ok(unique);
        }
        if self.sess.top_level.iter().any(|n| n == surface) {
            return Err(Diagnostic::new(
                DiagCode::Syntax,
                "parse",
                span,
                format!("`{surface}` is already defined at top level"),
            ));
        }
        self.sess.top_level.push(surface.to_string());
        self.sess.term_scope.push((surface.to_string(), surface.to_string()));
        Ok(surface.to_string())
    }

    fn resolve_term(&self, surface: &str, span: Span) -> PResult<Name> {
        self.sess
            .term_scope
            .iter()
            .rev()
            .find(|(s, _)| s == surface)
            .map(|(_, u)| u.clone())
            .ok_or_else(|| {
                Diagnostic::new(
                    DiagCode::Unbound,
                    "parse",
                    span,
                    format!("unbound name `{surface}`"),
                )
            })
    }

    fn resolve_type(&self, surface: &str, span: Span) -> PResult<Name> {
        self.sess
            .type_scope
            .iter()
            .rev()
            .find(|(s, _)| s == surface)
            .map(|(_, u)| u.clone())
            .ok_or_else(|| {
                Diagnostic::new(
                    DiagCode::Unbound,
                    "parse",
                    span,
                    format!("unbound type name `{surface}`"),
                )
            })
    }

    fn term_mark(&self) -> usize {
        self.sess.term_scope.len()
    }
    fn type_mark(&self) -> usize {
        self.sess.type_scope.len()
    }
    fn reset_scopes(&mut self, tm: usize, ty: usize) {
        self.sess.term_scope.truncate(tm);
        self.sess.type_scope.truncate(ty);
    }

    // -- program ------------------------------------------------------

    fn program(&mut self) -> PResult<Vec<Decl>> {
        let mut decls = Vec::new();
        while self.peek() != &Tok::Eof {
            decls.push(self.top_decl()?);
            if self.peek() == &Tok::Semi {
                while self.peek() == &Tok::Semi {
                    self.bump();
                }
            } else if self.peek() != &Tok::Eof {
                return self.err("expected `;` between declarations");
            }
        }
        Ok(decls)
    }

    fn top_decl(&mut self) -> PResult<Decl> {
        let start = self.span();
        match self.peek() {
            Tok::Val => {
                self.bump();
                let (surface, nspan) = self.ident_or_wild()?;
                self.expect(Tok::Eq, "`=`")?;
                let rhs = self.expr()?;
                let name = self.bind_top(&surface, nspan)?;
                Ok(Decl {
                    kind: DeclKind::Val,
                    name: Some(name),
                    assumed: None,
                    span: start.join(rhs.span),
                    term: Some(rhs),
                    prelude: self.prelude,
                })
            }
            Tok::Def => {
                self.bump();
                let (surface, nspan) = self.ident("definition name")?;
                let rhs = self.def_body(&surface)?;
                let name = self.bind_top(&surface, nspan)?;
                Ok(Decl {
                    kind: DeclKind::Def,
                    name: Some(name),
                    assumed: None,
                    span: start.join(rhs.span),
                    term: Some(rhs),
                    prelude: self.prelude,
                })
            }
            Tok::Assume => {
                self.bump();
                let (surface, nspan) = self.ident("assumed name")?;
                self.expect(Tok::Colon, "`:`")?;
                let qt = self.qualtype()?;
                let name = self.bind_top(&surface, nspan)?;
                Ok(Decl {
                    kind: DeclKind::Assume,
                    name: Some(name),
                    assumed: Some(qt),
                    term: None,
                    span: start,
                    prelude: self.prelude,
                })
            }
            _ => {
                let e = self.expr()?;
                Ok(Decl {
                    kind: DeclKind::Expr,
                    name: None,
                    assumed: None,
                    span: e.span,
                    term: Some(e),
                    prelude: self.prelude,
                })
            }
        }
    }

    fn ident_or_wild(&mut self) -> PResult<(String, Span)> {
        if self.peek() == &Tok::Underscore {
            let sp = self.span();
            self.bump();
            Ok(("_".into(), sp))
        } else {
            self.ident("name")
        }
    }

    /// `def f(a: T)(b: U): R = body` desugars to nested annotated lambdas
    /// with an ascribed body; the outermost self-reference carries the
    /// definition's name.
    fn def_body(&mut self, defname: &str) -> PResult<Term> {
        let tm = self.term_mark();
        let ty = self.type_mark();
        struct Group {
            self_name: Name,
            arg: Name,
            ann: QualType,
        }
        let mut groups: Vec<Group> = Vec::new();
        let mut first = true;
        while self.peek() == &Tok::LParen {
            let self_name = if first {
                first = false;
                self.bind_term(defname)
            } else {
                format!("{defname}${}", fresh_suffix())
            };
            self.bump();
            let (arg, ann) = self.param_group()?;
            self.expect(Tok::RParen, "`)`")?;
            let arg = self.bind_term(&arg);
            groups.push(Group { self_name, arg, ann });
        }
        if groups.is_empty() {
            return self.err("`def` needs at least one argument group");
        }
        let ret = if self.peek() == &Tok::Colon {
            self.bump();
            Some(self.qualtype()?)
        } else {
            None
        };
        self.expect(Tok::Eq, "`=`")?;
        let body = self.expr()?;
        self.reset_scopes(tm, ty);
        let mut t = match ret {
            Some(r) => Term::with_span(TermKind::Ascribe(Box::new(body.clone()), r), body.span),
            None => body,
        };
        for g in groups.into_iter().rev() {
            let span = t.span;
            t = Term::with_span(
                TermKind::Abs {
                    self_name: g.self_name,
                    arg: g.arg,
                    ann: Some(g.ann),
                    body: Box::new(t),
                },
                span,
            );
        }
        Ok(t)
    }

    /// Parses `x: T^q`, `x`, or nothing (a unit-argument group), without
    /// binding the argument.
    fn param_group(&mut self) -> PResult<(String, QualType)> {
        if self.peek() == &Tok::RParen {
            return Ok(("_".into(), QualType::unqualified(Type::Base)));
        }
        let (surface, _) = self.ident_or_wild()?;
        let ann = if self.peek() == &Tok::Colon {
            self.bump();
            self.qualtype()?
        } else {
            return self.err("`def` parameters need a type annotation");
        };
        Ok((surface, ann))
    }

    // -- terms ----------------------------------------------------------

    fn expr(&mut self) -> PResult<Term> {
        let lhs = self.app_chain()?;
        if self.peek() == &Tok::ColonEq {
            self.bump();
            let rhs = self.app_chain()?;
            let span = lhs.span.join(rhs.span);
            return Ok(Term::with_span(
                TermKind::Assign(Box::new(lhs), Box::new(rhs)),
                span,
            ));
        }
        Ok(lhs)
    }

    fn app_chain(&mut self) -> PResult<Term> {
        let mut head = self.prefix()?;
        loop {
            match self.peek() {
                Tok::LBracket => {
                    self.bump();
                    let qt = self.qualtype()?;
                    let end = self.expect(Tok::RBracket, "`]`")?;
                    let span = head.span.join(end);
                    head = Term::with_span(TermKind::TApp(Box::new(head), qt), span);
                }
                Tok::LParen | Tok::LBrace | Tok::Ident(_) | Tok::UnitLit => {
                    let arg = self.atom()?;
                    let span = head.span.join(arg.span);
                    head = Term::with_span(TermKind::App(Box::new(head), Box::new(arg)), span);
                }
                _ => break,
            }
        }
        Ok(head)
    }

    fn prefix(&mut self) -> PResult<Term> {
        let start = self.span();
        match self.peek() {
            Tok::RefKw => {
                self.bump();
                let inner = self.prefix()?;
                let span = start.join(inner.span);
                Ok(Term::with_span(TermKind::RefAlloc(Box::new(inner)), span))
            }
            Tok::Bang => {
                self.bump();
                let inner = self.prefix()?;
                let span = start.join(inner.span);
                Ok(Term::with_span(TermKind::Deref(Box::new(inner)), span))
            }
            Tok::NewKw => {
                // `new Ref(e)` is surface sugar for `ref e`.
                self.bump();
                self.expect(Tok::RefTy, "`Ref` after `new`")?;
                self.expect(Tok::LParen, "`(`")?;
                let inner = if self.peek() == &Tok::RParen {
                    Term::with_span(TermKind::Unit, self.span())
                } else {
                    self.expr()?
                };
                let end = self.expect(Tok::RParen, "`)`")?;
                Ok(Term::with_span(TermKind::RefAlloc(Box::new(inner)), start.join(end)))
            }
            Tok::Lambda => self.lambda(),
            Tok::BigLambda => self.type_lambda(),
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> PResult<Term> {
        let start = self.span();
        match self.peek().clone() {
            Tok::UnitLit => {
                self.bump();
                Ok(Term::with_span(TermKind::Unit, start))
            }
            Tok::Ident(surface) => {
                self.bump();
                let unique = self.resolve_term(&surface, start)?;
                Ok(Term::with_span(TermKind::Var(unique), start))
            }
            Tok::LParen => {
                self.bump();
                if self.peek() == &Tok::RParen {
                    let end = self.span();
                    self.bump();
                    return Ok(Term::with_span(TermKind::Unit, start.join(end)));
                }
                let inner = self.expr()?;
                if self.peek() == &Tok::Colon {
                    self.bump();
                    let qt = self.qualtype()?;
                    let end = self.expect(Tok::RParen, "`)`")?;
                    return Ok(Term::with_span(
                        TermKind::Ascribe(Box::new(inner), qt),
                        start.join(end),
                    ));
                }
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::LBrace => self.brace(),
            Tok::Lambda => self.lambda(),
            Tok::BigLambda => self.type_lambda(),
            _ => self.err("expected an expression"),
        }
    }

    fn lambda(&mut self) -> PResult<Term> {
        let start = self.expect(Tok::Lambda, "`\\`")?;
        let tm = self.term_mark();
        let self_surface = match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                s
            }
            _ => "anon".to_string(),
        };
        let self_name = self.bind_term(&self_surface);
        self.expect(Tok::LParen, "`(`")?;
        let (arg, ann) = if self.peek() == &Tok::RParen {
            // `\f() => e`: a unit argument, annotated so the lambda can
            // be inferred.
            ("_".to_string(), Some(QualType::unqualified(Type::Base)))
        } else {
            let (surface, _) = self.ident_or_wild()?;
            if self.peek() == &Tok::Colon {
                self.bump();
                let qt = self.qualtype()?;
                (surface, Some(qt))
            } else {
                (surface, None)
            }
        };
        self.expect(Tok::RParen, "`)`")?;
        let arg = self.bind_term(&arg);
        self.expect(Tok::FatArrow, "`=>`")?;
        let body = self.expr()?;
        self.reset_scopes(tm, self.type_mark());
        let span = start.join(body.span);
        Ok(Term::with_span(
            TermKind::Abs { self_name, arg, ann, body: Box::new(body) },
            span,
        ))
    }

    fn type_lambda(&mut self) -> PResult<Term> {
        let start = self.expect(Tok::BigLambda, "`/\\`")?;
        let tm = self.term_mark();
        let tym = self.type_mark();
        let self_surface = match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                s
            }
            _ => "anon".to_string(),
        };
        let self_name = self.bind_term(&self_surface);
        self.expect(Tok::LBracket, "`[`")?;
        let (tv_surface, _) = self.ident("type variable")?;
        let qv_surface = if self.peek() == &Tok::Caret {
            self.bump();
            self.ident("qualifier variable")?.0
        } else {
            format!("{}q", tv_surface.to_lowercase())
        };
        // The bound may mention the self-reference; an elided bound is
        // the wild one, accepting arbitrary instantiations.
        let bound = if self.peek() == &Tok::Subtype {
            self.bump();
            self.qualtype()?
        } else {
            QualType::new(Type::Top, Qualifier::var(self_name.clone()).with_fresh())
        };
        let tvar = self.bind_type(&tv_surface);
        let qvar = self.bind_term(&qv_surface);
        self.expect(Tok::RBracket, "`]`")?;
        self.expect(Tok::FatArrow, "`=>`")?;
        let body = self.expr()?;
        self.reset_scopes(tm, tym);
        let span = start.join(body.span);
        Ok(Term::with_span(
            TermKind::TAbs { self_name, tvar, qvar, bound, body: Box::new(body) },
            span,
        ))
    }

    /// Braces are a thunk `{ e }`, an argument lambda `{ x => e }`, or a
    /// block `{ val x = e; ... ; e }` when it declares anything.
    fn brace(&mut self) -> PResult<Term> {
        let start = self.expect(Tok::LBrace, "`{`")?;
        // `{ x => e }`
        if let (Tok::Ident(_), Tok::FatArrow) = (self.peek(), self.peek2()) {
            let tm = self.term_mark();
            let (surface, _) = self.ident("parameter")?;
            let arg = self.bind_term(&surface);
            self.bump(); // =>
            let body = self.block_items_as_term()?;
            self.reset_scopes(tm, self.type_mark());
            let end = self.expect(Tok::RBrace, "`}`")?;
            let self_name = format!("anon${}", fresh_suffix());
            return Ok(Term::with_span(
                TermKind::Abs { self_name, arg, ann: None, body: Box::new(body) },
                start.join(end),
            ));
        }
        let tm = self.term_mark();
        let tym = self.type_mark();
        let (term, had_decls) = self.block_items()?;
        self.reset_scopes(tm, tym);
        let end = self.expect(Tok::RBrace, "`}`")?;
        let span = start.join(end);
        if had_decls {
            Ok(Term { span, ..term })
        } else {
            // A pure expression sequence in braces is a thunk.
            let self_name = format!("thunk${}", fresh_suffix());
            let arg = format!("_${}", fresh_suffix());
            Ok(Term::with_span(
                TermKind::Abs {
                    self_name,
                    arg,
                    ann: Some(QualType::unqualified(Type::Base)),
                    body: Box::new(term),
                },
                span,
            ))
        }
    }

    fn block_items_as_term(&mut self) -> PResult<Term> {
        let (t, _) = self.block_items()?;
        Ok(t)
    }

    /// A `;`-separated sequence of local declarations and expressions,
    /// folded into nested lets. Returns whether any declaration occurred.
    fn block_items(&mut self) -> PResult<(Term, bool)> {
        enum Item {
            Bind(Name, Term),
            Plain(Term),
        }
        let mut items: Vec<Item> = Vec::new();
        let mut had_decls = false;
        loop {
            match self.peek() {
                Tok::RBrace | Tok::Eof => break,
                Tok::Val => {
                    self.bump();
                    let (surface, _) = self.ident_or_wild()?;
                    self.expect(Tok::Eq, "`=`")?;
                    let rhs = self.expr()?;
                    let name = self.bind_term(&surface);
                    items.push(Item::Bind(name, rhs));
                    had_decls = true;
                }
                Tok::Def => {
                    self.bump();
                    let (surface, _) = self.ident("definition name")?;
                    let rhs = self.def_body(&surface)?;
                    let name = self.bind_term(&surface);
                    items.push(Item::Bind(name, rhs));
                    had_decls = true;
                }
                _ => {
                    let e = self.expr()?;
                    items.push(Item::Plain(e));
                }
            }
            if self.peek() == &Tok::Semi {
                while self.peek() == &Tok::Semi {
                    self.bump();
                }
            } else {
                break;
            }
        }
        if items.is_empty() {
            return self.err("empty block");
        }
        // The trailing expression is the block's result; a trailing
        // declaration leaves unit.
        let mut acc = match items.pop().unwrap() {
            Item::Plain(e) => e,
            Item::Bind(name, rhs) => {
                let span = rhs.span;
                Term::with_span(
                    TermKind::Let { name, rhs: Box::new(rhs), body: Box::new(Term::unit()) },
                    span,
                )
            }
        };
        while let Some(item) = items.pop() {
            let (name, rhs) = match item {
                Item::Bind(name, rhs) => (name, rhs),
                Item::Plain(e) => (format!("_${}", fresh_suffix()), e),
            };
            let span = rhs.span.join(acc.span);
            acc = Term::with_span(
                TermKind::Let { name, rhs: Box::new(rhs), body: Box::new(acc) },
                span,
            );
        }
        Ok((acc, had_decls))
    }

    // -- types ----------------------------------------------------------

    fn qual(&mut self) -> PResult<Qualifier> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut q = Qualifier::empty();
        if self.peek() != &Tok::RBrace {
            loop {
                match self.peek().clone() {
                    Tok::Star => {
                        self.bump();
                        q.fresh = true;
                    }
                    Tok::Ident(surface) => {
                        let sp = self.span();
                        self.bump();
                        let unique = self.resolve_term(&surface, sp)?;
                        q.vars.insert(unique);
                    }
                    _ => return self.err("expected a qualifier atom (`*` or a name)"),
                }
                if self.peek() == &Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RBrace, "`}`")?;
        Ok(q)
    }

    fn opt_caret_qual(&mut self) -> PResult<Qualifier> {
        if self.peek() == &Tok::Caret {
            self.bump();
            self.qual()
        } else {
            Ok(Qualifier::empty())
        }
    }

    pub(crate) fn qualtype(&mut self) -> PResult<QualType> {
        if self.peek() == &Tok::Forall {
            return self.forall_type();
        }
        let head = self.qualtype_atom()?;
        if matches!(self.peek(), Tok::ThinArrow | Tok::FatArrow) {
            self.bump();
            let cod = self.qualtype()?;
            let self_name = format!("f${}", fresh_suffix());
            let arg = format!("x${}", fresh_suffix());
            return Ok(QualType::unqualified(Type::fun(self_name, arg, head, cod)));
        }
        Ok(head)
    }

    fn forall_type(&mut self) -> PResult<QualType> {
        self.expect(Tok::Forall, "`forall`")?;
        let tm = self.term_mark();
        let tym = self.type_mark();
        let self_surface = match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                s
            }
            _ => "anon".to_string(),
        };
        let self_name = self.bind_term(&self_surface);
        self.expect(Tok::LBracket, "`[`")?;
        let (tv_surface, _) = self.ident("type variable")?;
        let qv_surface = if self.peek() == &Tok::Caret {
            self.bump();
            self.ident("qualifier variable")?.0
        } else {
            format!("{}q", tv_surface.to_lowercase())
        };
        let bound = if self.peek() == &Tok::Subtype {
            self.bump();
            self.qualtype()?
        } else {
            QualType::new(Type::Top, Qualifier::var(self_name.clone()).with_fresh())
        };
        let tvar = self.bind_type(&tv_surface);
        let qvar = self.bind_term(&qv_surface);
        self.expect(Tok::RBracket, "`]`")?;
        self.expect(Tok::Dot, "`.`")?;
        let cod = self.qualtype()?;
        self.reset_scopes(tm, tym);
        Ok(QualType::unqualified(Type::all(self_name, tvar, qvar, bound, cod)))
    }

    fn qualtype_atom(&mut self) -> PResult<QualType> {
        let ty = self.type_atom()?;
        match ty {
            AtomTy::Plain(t) => {
                let q = self.opt_caret_qual()?;
                Ok(QualType::new(t, q))
            }
            AtomTy::Grouped(qt) => {
                if self.peek() == &Tok::Caret {
                    if !qt.qual.is_empty() {
                        return self.err("type already carries a qualifier");
                    }
                    self.bump();
                    let q = self.qual()?;
                    return Ok(QualType::new(qt.ty, q));
                }
                Ok(qt)
            }
        }
    }

    fn type_atom(&mut self) -> PResult<AtomTy> {
        let start = self.span();
        match self.peek().clone() {
            Tok::UnitTy => {
                self.bump();
                Ok(AtomTy::Plain(Type::Base))
            }
            Tok::TopTy => {
                self.bump();
                Ok(AtomTy::Plain(Type::Top))
            }
            Tok::RefTy => {
                self.bump();
                self.expect(Tok::LBracket, "`[`")?;
                let inner = self.qualtype()?;
                self.expect(Tok::RBracket, "`]`")?;
                Ok(AtomTy::Plain(Type::reference(inner)))
            }
            Tok::Forall => Ok(AtomTy::Grouped(self.forall_type()?)),
            Tok::Ident(surface) => {
                self.bump();
                if self.peek() == &Tok::LParen {
                    // `f(x: T^p) -> U^q` with a named self-reference.
                    self.bump();
                    self.named_fun(&surface)
                } else {
                    let unique = self.resolve_type(&surface, start)?;
                    Ok(AtomTy::Plain(Type::TVar(unique)))
                }
            }
            Tok::LParen => {
                self.bump();
                self.paren_type()
            }
            _ => self.err("expected a type"),
        }
    }

    /// After `self (` — the domain group of a named function type.
    fn named_fun(&mut self, self_surface: &str) -> PResult<AtomTy> {
        let tm = self.term_mark();
        let self_name = self.bind_term(self_surface);
        let (arg_surface, dom) = self.fun_domain()?;
        self.expect(Tok::RParen, "`)`")?;
        let arg = self.bind_term(&arg_surface);
        if !matches!(self.peek(), Tok::ThinArrow | Tok::FatArrow) {
            return self.err("expected `->` after a function domain");
        }
        self.bump();
        let cod = self.qualtype()?;
        self.reset_scopes(tm, self.type_mark());
        Ok(AtomTy::Plain(Type::fun(self_name, arg, dom, cod)))
    }

    /// Parses `x: T^q`, `T^q`, or nothing inside a function domain group.
    fn fun_domain(&mut self) -> PResult<(String, QualType)> {
        if self.peek() == &Tok::RParen {
            return Ok(("_".into(), QualType::unqualified(Type::Base)));
        }
        if let (Tok::Ident(ate), Tok::Colon) = (self.peek().clone(), self.peek2().clone()) {
            self.bump();
            self.bump();
            let qt = self.qualtype()?;
            return Ok((ate, qt));
        }
        if (self.peek() == &Tok::Underscore) && self.peek2() == &Tok::Colon {
            self.bump();
            self.bump();
            let qt = self.qualtype()?;
            return Ok(("_".into(), qt));
        }
        let qt = self.qualtype()?;
        Ok(("_".into(), qt))
    }

    /// After `(` in type position: a parameter group, a domain, or a
    /// grouped type.
    fn paren_type(&mut self) -> PResult<AtomTy> {
        if self.peek() == &Tok::RParen {
            // `() -> U`
            self.bump();
            if !matches!(self.peek(), Tok::ThinArrow | Tok::FatArrow) {
                return self.err("expected `->` after `()`");
            }
            self.bump();
            let cod = self.qualtype()?;
            let self_name = format!("f${}", fresh_suffix());
            let arg = format!("x${}", fresh_suffix());
            return Ok(AtomTy::Plain(Type::fun(
                self_name,
                arg,
                QualType::unqualified(Type::Base),
                cod,
            )));
        }
        if let (Tok::Ident(arg_surface), Tok::Colon) = (self.peek().clone(), self.peek2().clone())
        {
            // `(x: T^p) -> U^q`
            self.bump();
            self.bump();
            let tm = self.term_mark();
            let dom = self.qualtype()?;
            self.expect(Tok::RParen, "`)`")?;
            let arg = self.bind_term(&arg_surface);
            if !matches!(self.peek(), Tok::ThinArrow | Tok::FatArrow) {
                return self.err("expected `->` after a function domain");
            }
            self.bump();
            let cod = self.qualtype()?;
            self.reset_scopes(tm, self.type_mark());
            let self_name = format!("f${}", fresh_suffix());
            return Ok(AtomTy::Plain(Type::fun(self_name, arg, dom, cod)));
        }
        let inner = self.qualtype()?;
        self.expect(Tok::RParen, "`)`")?;
        if matches!(self.peek(), Tok::ThinArrow | Tok::FatArrow) {
            self.bump();
            let cod = self.qualtype()?;
            let self_name = format!("f${}", fresh_suffix());
            let arg = format!("x${}", fresh_suffix());
            return Ok(AtomTy::Plain(Type::fun(self_name, arg, inner, cod)));
        }
        Ok(AtomTy::Grouped(inner))
    }
}

enum AtomTy {
    Plain(Type),
    Grouped(QualType),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::TermKind;

    fn parse_one(src: &str) -> Decl {
        let mut decls = parse_program(None, src).unwrap();
        assert_eq!(decls.len(), 1, "expected one declaration");
        decls.pop().unwrap()
    }

    #[test]
    fn parses_unit() {
        let d = parse_one("unit");
        assert!(matches!(d.term.unwrap().kind, TermKind::Unit));
    }

    #[test]
    fn parses_capture_fresh_shape() {
        let d = parse_one(r"val captureFresh = \cf(x: Ref[Unit]^{*}) => \g() => x");
        let t = d.term.unwrap();
        let TermKind::Abs { ann: Some(ann), body, .. } = &t.kind else {
            panic!("outer lambda expected")
        };
        assert!(ann.qual.fresh);
        assert!(matches!(ann.ty, Type::Ref(_)));
        let TermKind::Abs { ann: Some(inner_ann), body: inner_body, .. } = &body.kind else {
            panic!("inner lambda expected")
        };
        assert_eq!(inner_ann.ty, Type::Base);
        assert!(matches!(&inner_body.kind, TermKind::Var(x) if x.starts_with("x$")));
    }

    #[test]
    fn parses_blocks_vs_thunks() {
        // Declarations make a block.
        let d = parse_one("{ val x = ref unit; x }");
        assert!(matches!(d.term.unwrap().kind, TermKind::Let { .. }));
        // A bare expression makes a thunk.
        let d = parse_one("{ unit }");
        let t = d.term.unwrap();
        let TermKind::Abs { ann: Some(ann), .. } = &t.kind else { panic!("thunk expected") };
        assert_eq!(ann.ty, Type::Base);
        // A parameter arrow makes an unannotated lambda.
        let d = parse_one("{ x => x }");
        let t = d.term.unwrap();
        assert!(matches!(&t.kind, TermKind::Abs { ann: None, .. }));
    }

    #[test]
    fn parses_new_ref_sugar() {
        let d = parse_one("new Ref(unit)");
        assert!(matches!(d.term.unwrap().kind, TermKind::RefAlloc(_)));
    }

    #[test]
    fn parses_type_application_and_ascription() {
        let d = parse_one(r"val f = /\t[X^x <: Top^{*}] => \g(v: X^{x}) => (v : X^{x})");
        let TermKind::TAbs { bound, body, .. } = &d.term.unwrap().kind else {
            panic!("type lambda expected")
        };
        assert!(bound.qual.fresh);
        assert!(matches!(&body.kind, TermKind::Abs { .. }));
    }

    #[test]
    fn application_is_juxtaposition() {
        let d = parse_one("val r = { val id = \\f(x: Unit^{}) => x; id unit; id(unit) }");
        assert!(d.term.is_some());
    }

    #[test]
    fn alpha_renames_shadowing() {
        let d = parse_one(r"\f(x: Unit^{}) => \g(x: Unit^{}) => x");
        let TermKind::Abs { arg: outer_arg, body, .. } = &d.term.unwrap().kind else {
            panic!()
        };
        let TermKind::Abs { arg: inner_arg, body: inner_body, .. } = &body.kind else {
            panic!()
        };
        assert_ne!(outer_arg, inner_arg);
        let TermKind::Var(x) = &inner_body.kind else { panic!() };
        assert_eq!(x, inner_arg);
    }

    #[test]
    fn rejects_unbound_names() {
        assert!(parse_program(None, "mystery").is_err());
    }

    #[test]
    fn rejects_top_level_redefinition() {
        assert!(parse_program(None, "val a = unit; val a = unit").is_err());
    }

    #[test]
    fn parses_named_fun_types() {
        let d = parse_one(
            "assume inferFn : ((farg: (f() -> Ref[Unit]^{f})^{*}) -> Ref[Unit]^{farg})^{}",
        );
        let qt = d.assumed.unwrap();
        let Type::Fun(outer) = &qt.ty else { panic!("function type expected") };
        assert!(outer.dom.qual.fresh);
        let Type::Fun(inner) = &outer.dom.ty else { panic!("inner function expected") };
        assert!(inner.cod.qual.contains_var(&inner.self_name));
        assert!(outer.cod.qual.contains_var(&outer.arg));
    }
}
