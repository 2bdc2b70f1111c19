//! Core syntax: qualifiers, types, terms, typing contexts, and the pure
//! operations on them (substitution, saturation, overlap, occurrence).

use std::collections::BTreeSet;
use std::fmt;

pub type Name = String;

/// Set of term variables, used for observation filters and increments.
pub type Obs = BTreeSet<Name>;

/// Fresh-name counter shared by the parser and the checker's synthesized
/// binders. Uniqueness of the suffix keeps every binder distinct.
pub fn fresh_suffix() -> u64 {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(1);
    COUNTER.fetch_add(1, Ordering::Relaxed)
}

pub fn fresh_name(base: &str) -> Name {
    format!("{base}${}", fresh_suffix())
}

/// A source span in bytes. Synthesized nodes use `Span::default()`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }
    pub fn join(self, other: Span) -> Span {
        if self == Span::default() {
            return other;
        }
        if other == Span::default() {
            return self;
        }
        Span { start: self.start.min(other.start), end: self.end.max(other.end) }
    }
}

/// A single qualifier atom. Qualifiers themselves are stored as
/// [`Qualifier`]; this enum exists for building and inspecting them.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum QualAtom {
    TermVar(Name),
    /// The freshness marker.
    Fresh,
    /// A qualifier hole. A hole is owned by the self entry whose qualifier
    /// carries it; its identity is that entry's position in the context.
    Hole,
}

/// A reachability qualifier: a finite set of term variables possibly
/// extended with the freshness marker and at most one hole.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qualifier {
    pub vars: BTreeSet<Name>,
    pub fresh: bool,
    pub hole: bool,
}

impl Qualifier {
    pub fn empty() -> Qualifier {
        Qualifier::default()
    }

    pub fn fresh_only() -> Qualifier {
        Qualifier { fresh: true, ..Qualifier::default() }
    }

    pub fn hole_only() -> Qualifier {
        Qualifier { hole: true, ..Qualifier::default() }
    }

    pub fn var(name: impl Into<Name>) -> Qualifier {
        let mut q = Qualifier::default();
        q.vars.insert(name.into());
        q
    }

    pub fn from_atoms<I: IntoIterator<Item = QualAtom>>(atoms: I) -> Qualifier {
        let mut q = Qualifier::default();
        for a in atoms {
            match a {
                QualAtom::TermVar(x) => {
                    q.vars.insert(x);
                }
                QualAtom::Fresh => q.fresh = true,
                QualAtom::Hole => q.hole = true,
            }
        }
        q
    }

    pub fn atoms(&self) -> Vec<QualAtom> {
        let mut out: Vec<QualAtom> =
            self.vars.iter().cloned().map(QualAtom::TermVar).collect();
        if self.fresh {
            out.push(QualAtom::Fresh);
        }
        if self.hole {
            out.push(QualAtom::Hole);
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty() && !self.fresh && !self.hole
    }

    pub fn contains_var(&self, x: &str) -> bool {
        self.vars.contains(x)
    }

    /// Atom-set inclusion.
    pub fn is_subset(&self, other: &Qualifier) -> bool {
        self.vars.is_subset(&other.vars)
            && (!self.fresh || other.fresh)
            && (!self.hole || other.hole)
    }

    pub fn union(&self, other: &Qualifier) -> Qualifier {
        Qualifier {
            vars: self.vars.union(&other.vars).cloned().collect(),
            fresh: self.fresh || other.fresh,
            hole: self.hole || other.hole,
        }
    }

    pub fn union_vars(&self, vars: &Obs) -> Qualifier {
        let mut q = self.clone();
        q.vars.extend(vars.iter().cloned());
        q
    }

    pub fn with_fresh(mut self) -> Qualifier {
        self.fresh = true;
        self
    }

    pub fn with_hole(mut self) -> Qualifier {
        self.hole = true;
        self
    }

    pub fn without_var(&self, x: &str) -> Qualifier {
        let mut q = self.clone();
        q.vars.remove(x);
        q
    }

    /// `q ∖ {♦, ∇}`: the plain-variable part.
    pub fn strip_markers(&self) -> Qualifier {
        Qualifier { vars: self.vars.clone(), fresh: false, hole: false }
    }

    pub fn strip_hole(&self) -> Qualifier {
        Qualifier { hole: false, ..self.clone() }
    }

    /// Qualifier substitution `q[p/x]`: if `x ∈ q` then `(q ∖ {x}) ∪ p`,
    /// otherwise `q` unchanged.
    pub fn subst(&self, p: &Qualifier, x: &str) -> Qualifier {
        if !self.vars.contains(x) {
            return self.clone();
        }
        self.without_var(x).union(p)
    }
}

impl fmt::Display for Qualifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for v in &self.vars {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "{}", display_name(v))?;
            first = false;
        }
        if self.fresh {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "*")?;
            first = false;
        }
        if self.hole {
            if !first {
                write!(f, ",")?;
            }
            write!(f, "?")?;
        }
        write!(f, "}}")
    }
}

/// Strips the uniquifying suffix the parser appends to binders.
pub fn display_name(n: &str) -> &str {
    match n.find('$') {
        Some(i) if i > 0 => &n[..i],
        _ => n,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QualType {
    pub ty: Type,
    pub qual: Qualifier,
}

impl QualType {
    pub fn new(ty: Type, qual: Qualifier) -> QualType {
        QualType { ty, qual }
    }
    pub fn unqualified(ty: Type) -> QualType {
        QualType { ty, qual: Qualifier::empty() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunType {
    pub self_name: Name,
    pub arg: Name,
    pub dom: QualType,
    pub cod: QualType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllType {
    pub self_name: Name,
    pub tvar: Name,
    pub qvar: Name,
    pub bound: QualType,
    pub cod: QualType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Type {
    /// The base type; the surface language calls it `Unit`.
    Base,
    Top,
    TVar(Name),
    Ref(Box<QualType>),
    Fun(Box<FunType>),
    All(Box<AllType>),
}

impl Type {
    pub fn fun(self_name: impl Into<Name>, arg: impl Into<Name>, dom: QualType, cod: QualType) -> Type {
        Type::Fun(Box::new(FunType {
            self_name: self_name.into(),
            arg: arg.into(),
            dom,
            cod,
        }))
    }

    pub fn all(
        self_name: impl Into<Name>,
        tvar: impl Into<Name>,
        qvar: impl Into<Name>,
        bound: QualType,
        cod: QualType,
    ) -> Type {
        Type::All(Box::new(AllType {
            self_name: self_name.into(),
            tvar: tvar.into(),
            qvar: qvar.into(),
            bound,
            cod,
        }))
    }

    pub fn reference(inner: QualType) -> Type {
        Type::Ref(Box::new(inner))
    }
}

/// Occurrence polarity for term variables inside types.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Any,
    Pos,
    Neg,
}

impl Polarity {
    pub fn flip(self) -> Polarity {
        match self {
            Polarity::Any => Polarity::Any,
            Polarity::Pos => Polarity::Neg,
            Polarity::Neg => Polarity::Pos,
        }
    }
}

/// Occurrence predicate: does `y` occur in `t` at the requested polarity?
///
/// The function case follows the displayed rules: a positive occurrence in
/// a function type is a negative occurrence in the domain type, a positive
/// occurrence in the codomain type, or membership in the codomain
/// qualifier; dually for negative. Universal types mirror functions with
/// the bound in the domain role. Occurrences inside a `Ref` referent are
/// invariant and count at every polarity.
pub fn occurs(y: &str, t: &Type, pol: Polarity) -> bool {
    match t {
        Type::Base | Type::Top | Type::TVar(_) => false,
        Type::Ref(inner) => occurs_qualtype_any(y, inner),
        Type::Fun(f) => {
            if y == f.self_name || y == f.arg {
                return false;
            }
            occurs_fun_shape(y, &f.dom, &f.cod, pol)
        }
        Type::All(a) => {
            if y == a.self_name || y == a.qvar {
                return false;
            }
            occurs_fun_shape(y, &a.bound, &a.cod, pol)
        }
    }
}

fn occurs_fun_shape(y: &str, dom: &QualType, cod: &QualType, pol: Polarity) -> bool {
    match pol {
        Polarity::Any => {
            occurs(y, &dom.ty, Polarity::Any)
                || dom.qual.contains_var(y)
                || occurs(y, &cod.ty, Polarity::Any)
                || cod.qual.contains_var(y)
        }
        Polarity::Pos => {
            occurs(y, &dom.ty, Polarity::Neg)
                || occurs(y, &cod.ty, Polarity::Pos)
                || cod.qual.contains_var(y)
        }
        Polarity::Neg => {
            occurs(y, &dom.ty, Polarity::Pos)
                || dom.qual.contains_var(y)
                || occurs(y, &cod.ty, Polarity::Neg)
        }
    }
}

fn occurs_qualtype_any(y: &str, qt: &QualType) -> bool {
    qt.qual.contains_var(y) || occurs(y, &qt.ty, Polarity::Any)
}

/// `T[p/x]` on every qualifier inside `T`. Binders are globally unique,
/// so the substitution is capture-free; shadowed binders stop it anyway.
pub fn type_subst_var(t: &Type, p: &Qualifier, x: &str) -> Type {
    match t {
        Type::Base => Type::Base,
        Type::Top => Type::Top,
        Type::TVar(n) => Type::TVar(n.clone()),
        Type::Ref(inner) => Type::reference(qualtype_subst_var(inner, p, x)),
        Type::Fun(f) => {
            if x == f.self_name || x == f.arg {
                return t.clone();
            }
            Type::fun(
                f.self_name.clone(),
                f.arg.clone(),
                qualtype_subst_var(&f.dom, p, x),
                qualtype_subst_var(&f.cod, p, x),
            )
        }
        Type::All(a) => {
            if x == a.self_name || x == a.qvar {
                return t.clone();
            }
            Type::all(
                a.self_name.clone(),
                a.tvar.clone(),
                a.qvar.clone(),
                qualtype_subst_var(&a.bound, p, x),
                qualtype_subst_var(&a.cod, p, x),
            )
        }
    }
}

pub fn qualtype_subst_var(qt: &QualType, p: &Qualifier, x: &str) -> QualType {
    QualType { ty: type_subst_var(&qt.ty, p, x), qual: qt.qual.subst(p, x) }
}

/// `T[V^s/X^x]`: replaces the type variable `X` by `V` and the qualifier
/// variable `x` by `s` throughout `T`.
pub fn type_subst_tvar(t: &Type, v: &Type, s: &Qualifier, tvar: &str, qvar: &str) -> Type {
    match t {
        Type::Base => Type::Base,
        Type::Top => Type::Top,
        Type::TVar(n) => {
            if n == tvar {
                v.clone()
            } else {
                Type::TVar(n.clone())
            }
        }
        Type::Ref(inner) => Type::reference(qualtype_subst_tvar(inner, v, s, tvar, qvar)),
        Type::Fun(f) => {
            if qvar == f.self_name || qvar == f.arg {
                return t.clone();
            }
            Type::fun(
                f.self_name.clone(),
                f.arg.clone(),
                qualtype_subst_tvar(&f.dom, v, s, tvar, qvar),
                qualtype_subst_tvar(&f.cod, v, s, tvar, qvar),
            )
        }
        Type::All(a) => {
            if a.tvar == tvar {
                return t.clone();
            }
            if qvar == a.self_name || qvar == a.qvar {
                return t.clone();
            }
            Type::all(
                a.self_name.clone(),
                a.tvar.clone(),
                a.qvar.clone(),
                qualtype_subst_tvar(&a.bound, v, s, tvar, qvar),
                qualtype_subst_tvar(&a.cod, v, s, tvar, qvar),
            )
        }
    }
}

pub fn qualtype_subst_tvar(
    qt: &QualType,
    v: &Type,
    s: &Qualifier,
    tvar: &str,
    qvar: &str,
) -> QualType {
    QualType {
        ty: type_subst_tvar(&qt.ty, v, s, tvar, qvar),
        qual: qt.qual.subst(s, qvar),
    }
}

/// Alpha-equivalence of types: structural equality up to bound names.
pub fn alpha_eq(t1: &Type, t2: &Type) -> bool {
    fn go(t1: &Type, t2: &Type, m1: &mut Vec<(Name, Name)>, m2: &mut Vec<(Name, Name)>) -> bool {
        // m1 maps t1 binders to canonical names, m2 likewise for t2.
        fn resolve(m: &[(Name, Name)], n: &str) -> Name {
            m.iter()
                .rev()
                .find(|(orig, _)| orig == n)
                .map(|(_, c)| c.clone())
                .unwrap_or_else(|| format!("free:{n}"))
        }
        fn qual_eq(
            q1: &Qualifier,
            q2: &Qualifier,
            m1: &[(Name, Name)],
            m2: &[(Name, Name)],
        ) -> bool {
            if q1.fresh != q2.fresh || q1.hole != q2.hole {
                return false;
            }
            let r1: BTreeSet<Name> = q1.vars.iter().map(|v| resolve(m1, v)).collect();
            let r2: BTreeSet<Name> = q2.vars.iter().map(|v| resolve(m2, v)).collect();
            r1 == r2
        }
        match (t1, t2) {
            (Type::Base, Type::Base) | (Type::Top, Type::Top) => true,
            (Type::TVar(a), Type::TVar(b)) => resolve(m1, a) == resolve(m2, b),
            (Type::Ref(a), Type::Ref(b)) => {
                qual_eq(&a.qual, &b.qual, m1, m2) && go(&a.ty, &b.ty, m1, m2)
            }
            (Type::Fun(a), Type::Fun(b)) => {
                if !qual_eq(&a.dom.qual, &b.dom.qual, m1, m2) {
                    return false;
                }
                let depth = m1.len();
                m1.push((a.self_name.clone(), format!("#self{depth}")));
                m2.push((b.self_name.clone(), format!("#self{depth}")));
                let dom_ok = go(&a.dom.ty, &b.dom.ty, m1, m2)
                    && qual_eq(&a.dom.qual, &b.dom.qual, m1, m2);
                m1.push((a.arg.clone(), format!("#arg{depth}")));
                m2.push((b.arg.clone(), format!("#arg{depth}")));
                let cod_ok = dom_ok
                    && go(&a.cod.ty, &b.cod.ty, m1, m2)
                    && qual_eq(&a.cod.qual, &b.cod.qual, m1, m2);
                m1.truncate(depth);
                m2.truncate(depth);
                cod_ok
            }
            (Type::All(a), Type::All(b)) => {
                let depth = m1.len();
                m1.push((a.self_name.clone(), format!("#self{depth}")));
                m2.push((b.self_name.clone(), format!("#self{depth}")));
                let bound_ok = go(&a.bound.ty, &b.bound.ty, m1, m2)
                    && qual_eq(&a.bound.qual, &b.bound.qual, m1, m2);
                m1.push((a.tvar.clone(), format!("#tvar{depth}")));
                m2.push((b.tvar.clone(), format!("#tvar{depth}")));
                m1.push((a.qvar.clone(), format!("#qvar{depth}")));
                m2.push((b.qvar.clone(), format!("#qvar{depth}")));
                let cod_ok = bound_ok
                    && go(&a.cod.ty, &b.cod.ty, m1, m2)
                    && qual_eq(&a.cod.qual, &b.cod.qual, m1, m2);
                m1.truncate(depth);
                m2.truncate(depth);
                cod_ok
            }
            _ => false,
        }
    }
    go(t1, t2, &mut Vec::new(), &mut Vec::new())
}

pub fn alpha_eq_qualtype(a: &QualType, b: &QualType) -> bool {
    a.qual == b.qual && alpha_eq(&a.ty, &b.ty)
}

// ---------------------------------------------------------------------------
// Terms

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub kind: TermKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermKind {
    /// The single base constant, `unit`.
    Unit,
    Var(Name),
    RefAlloc(Box<Term>),
    Deref(Box<Term>),
    Assign(Box<Term>, Box<Term>),
    Abs {
        self_name: Name,
        arg: Name,
        ann: Option<QualType>,
        body: Box<Term>,
    },
    App(Box<Term>, Box<Term>),
    TAbs {
        self_name: Name,
        tvar: Name,
        qvar: Name,
        bound: QualType,
        body: Box<Term>,
    },
    TApp(Box<Term>, QualType),
    Ascribe(Box<Term>, QualType),
    /// Surface `val x = rhs; body`, kept distinct so the argument-first
    /// rule applies deterministically.
    Let {
        name: Name,
        rhs: Box<Term>,
        body: Box<Term>,
    },
}

impl Term {
    pub fn new(kind: TermKind) -> Term {
        Term { kind, span: Span::default() }
    }
    pub fn with_span(kind: TermKind, span: Span) -> Term {
        Term { kind, span }
    }

    pub fn unit() -> Term {
        Term::new(TermKind::Unit)
    }
    pub fn var(n: impl Into<Name>) -> Term {
        Term::new(TermKind::Var(n.into()))
    }
    pub fn alloc(t: Term) -> Term {
        Term::new(TermKind::RefAlloc(Box::new(t)))
    }
    pub fn deref(t: Term) -> Term {
        Term::new(TermKind::Deref(Box::new(t)))
    }
    pub fn assign(lhs: Term, rhs: Term) -> Term {
        Term::new(TermKind::Assign(Box::new(lhs), Box::new(rhs)))
    }
    pub fn abs(self_name: impl Into<Name>, arg: impl Into<Name>, ann: Option<QualType>, body: Term) -> Term {
        Term::new(TermKind::Abs {
            self_name: self_name.into(),
            arg: arg.into(),
            ann,
            body: Box::new(body),
        })
    }
    pub fn app(f: Term, a: Term) -> Term {
        Term::new(TermKind::App(Box::new(f), Box::new(a)))
    }
    pub fn tabs(
        self_name: impl Into<Name>,
        tvar: impl Into<Name>,
        qvar: impl Into<Name>,
        bound: QualType,
        body: Term,
    ) -> Term {
        Term::new(TermKind::TAbs {
            self_name: self_name.into(),
            tvar: tvar.into(),
            qvar: qvar.into(),
            bound,
            body: Box::new(body),
        })
    }
    pub fn tapp(f: Term, arg: QualType) -> Term {
        Term::new(TermKind::TApp(Box::new(f), arg))
    }
    pub fn ascribe(t: Term, qt: QualType) -> Term {
        Term::new(TermKind::Ascribe(Box::new(t), qt))
    }
    pub fn let_in(name: impl Into<Name>, rhs: Term, body: Term) -> Term {
        Term::new(TermKind::Let { name: name.into(), rhs: Box::new(rhs), body: Box::new(body) })
    }

    /// Free term variables (the self and argument binders are bound).
    pub fn free_vars(&self) -> Obs {
        fn go(t: &Term, bound: &mut Vec<Name>, out: &mut Obs) {
            match &t.kind {
                TermKind::Unit => {}
                TermKind::Var(x) => {
                    if !bound.iter().any(|b| b == x) {
                        out.insert(x.clone());
                    }
                }
                TermKind::RefAlloc(t) | TermKind::Deref(t) => go(t, bound, out),
                TermKind::Assign(a, b) => {
                    go(a, bound, out);
                    go(b, bound, out);
                }
                TermKind::Abs { self_name, arg, body, .. } => {
                    bound.push(self_name.clone());
                    bound.push(arg.clone());
                    go(body, bound, out);
                    bound.pop();
                    bound.pop();
                }
                TermKind::App(a, b) => {
                    go(a, bound, out);
                    go(b, bound, out);
                }
                TermKind::TAbs { self_name, body, .. } => {
                    bound.push(self_name.clone());
                    go(body, bound, out);
                    bound.pop();
                }
                TermKind::TApp(t, _) => go(t, bound, out),
                TermKind::Ascribe(t, _) => go(t, bound, out),
                TermKind::Let { name, rhs, body } => {
                    go(rhs, bound, out);
                    bound.push(name.clone());
                    go(body, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = Obs::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Contexts

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Entry {
    /// `x : T^q`
    Var { name: Name, qt: QualType },
    /// `X^x <: T^q`
    TVar { tvar: Name, qvar: Name, bound: QualType },
    /// `f : Top^q`, where `q` may carry a hole.
    SelfRef { name: Name, qual: Qualifier },
}

impl Entry {
    /// The term-level name this entry binds, if any.
    pub fn term_name(&self) -> Option<&Name> {
        match self {
            Entry::Var { name, .. } | Entry::SelfRef { name, .. } => Some(name),
            Entry::TVar { .. } => None,
        }
    }

    /// The qualifier-level name this entry binds (term variables and the
    /// qualifier variable of a type-variable bound).
    pub fn qual_name(&self) -> &Name {
        match self {
            Entry::Var { name, .. } | Entry::SelfRef { name, .. } => name,
            Entry::TVar { qvar, .. } => qvar,
        }
    }

    /// The qualifier recorded for the bound name.
    pub fn recorded_qual(&self) -> &Qualifier {
        match self {
            Entry::Var { qt, .. } => &qt.qual,
            Entry::TVar { bound, .. } => &bound.qual,
            Entry::SelfRef { qual, .. } => qual,
        }
    }
}

/// An ordered typing context. Entries are pushed and popped at the back;
/// the only in-place mutation is hole instantiation on self entries.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Context {
    entries: Vec<Entry>,
}

impl Context {
    pub fn new() -> Context {
        Context::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, idx: usize) -> &Entry {
        &self.entries[idx]
    }

    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    pub fn push_var(&mut self, name: impl Into<Name>, qt: QualType) {
        self.entries.push(Entry::Var { name: name.into(), qt });
    }

    pub fn push_self(&mut self, name: impl Into<Name>, qual: Qualifier) {
        self.entries.push(Entry::SelfRef { name: name.into(), qual });
    }

    pub fn push_tvar(&mut self, tvar: impl Into<Name>, qvar: impl Into<Name>, bound: QualType) {
        self.entries.push(Entry::TVar { tvar: tvar.into(), qvar: qvar.into(), bound });
    }

    pub fn pop(&mut self) -> Option<Entry> {
        self.entries.pop()
    }

    pub fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
    }

    /// Latest entry binding `name` at the qualifier level.
    pub fn lookup_qual_binding(&self, name: &str) -> Option<(usize, &Entry)> {
        self.entries
            .iter()
            .enumerate()
            .rev()
            .find(|(_, e)| e.qual_name() == name)
    }

    /// Latest term binding (variable or self entry) for `name`.
    pub fn lookup_term(&self, name: &str) -> Option<(usize, &Entry)> {
        self.entries
            .iter()
            .enumerate()
            .rev()
            .find(|(_, e)| e.term_name().map(|n| n == name).unwrap_or(false))
    }

    pub fn lookup_tvar(&self, tvar: &str) -> Option<(usize, &QualType)> {
        self.entries.iter().enumerate().rev().find_map(|(i, e)| match e {
            Entry::TVar { tvar: t, bound, .. } if t == tvar => Some((i, bound)),
            _ => None,
        })
    }

    /// Is `name` in the qualifier-level domain of the context?
    pub fn binds_qual(&self, name: &str) -> bool {
        self.lookup_qual_binding(name).is_some()
    }

    pub fn binds_tvar(&self, name: &str) -> bool {
        self.lookup_tvar(name).is_some()
    }

    /// Extends the hole of the self entry at `idx` with `vars`.
    /// The entry must be a self entry carrying a hole.
    pub fn instantiate_hole(&mut self, idx: usize, vars: &Obs) {
        match &mut self.entries[idx] {
            Entry::SelfRef { qual, .. } if qual.hole => {
                qual.vars.extend(vars.iter().cloned());
            }
            e => panic!("instantiate_hole on non-holed entry {e:?}"),
        }
    }
}

/// Result of qualifier saturation: the transitively reachable variables
/// plus taint flags recording whether the traversal saw the freshness
/// marker or a hole.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Saturation {
    pub vars: Obs,
    pub fresh_seen: bool,
    pub hole_seen: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoreError {
    /// A qualifier mentions a variable absent from the context.
    UnknownVar(Name),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::UnknownVar(x) => write!(f, "unknown variable `{}` in qualifier", display_name(x)),
        }
    }
}

/// Transitive closure of a qualifier through the context's recorded
/// reachability. `x ↝ y` iff `x`'s entry qualifier contains `y`.
pub fn saturate(ctx: &Context, q: &Qualifier) -> Result<Saturation, CoreError> {
    let mut sat = Saturation {
        vars: Obs::new(),
        fresh_seen: q.fresh,
        hole_seen: q.hole,
    };
    let mut work: Vec<Name> = q.vars.iter().cloned().collect();
    while let Some(x) = work.pop() {
        if !sat.vars.insert(x.clone()) {
            continue;
        }
        let Some((_, entry)) = ctx.lookup_qual_binding(&x) else {
            return Err(CoreError::UnknownVar(x));
        };
        let r = entry.recorded_qual();
        sat.fresh_seen |= r.fresh;
        sat.hole_seen |= r.hole;
        for y in &r.vars {
            if !sat.vars.contains(y) {
                work.push(y.clone());
            }
        }
    }
    Ok(sat)
}

/// Qualifier overlap `p ⋒ q`: the freshness marker plus the intersection
/// of the two saturations.
pub fn overlap(ctx: &Context, p: &Qualifier, q: &Qualifier) -> Result<Qualifier, CoreError> {
    let sp = saturate(ctx, p)?;
    let sq = saturate(ctx, q)?;
    let mut out = Qualifier::fresh_only();
    out.vars = sp.vars.intersection(&sq.vars).cloned().collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qual(vars: &[&str]) -> Qualifier {
        let mut q = Qualifier::default();
        for v in vars {
            q.vars.insert(v.to_string());
        }
        q
    }

    #[test]
    fn subst_removes_and_unions() {
        let q = qual(&["x", "a"]);
        let p = qual(&["b", "c"]);
        assert_eq!(q.subst(&p, "x"), qual(&["a", "b", "c"]));
    }

    #[test]
    fn subst_absent_is_identity() {
        let q = qual(&["a"]);
        assert_eq!(q.subst(&qual(&["b"]), "x"), qual(&["a"]));
    }

    #[test]
    fn subst_singleton() {
        // {x}[{a}/x] = {a}, the dependent-application step.
        assert_eq!(Qualifier::var("x").subst(&qual(&["a"]), "x"), qual(&["a"]));
    }

    #[test]
    fn subst_identity_on_self() {
        // q[{x}/x] = q for all q.
        let q = qual(&["x", "y"]).with_fresh();
        assert_eq!(q.subst(&Qualifier::var("x"), "x"), q);
    }

    #[test]
    fn type_subst_var_rewrites_quals() {
        let t = Type::reference(QualType::new(Type::Base, qual(&["x"])));
        let got = type_subst_var(&t, &qual(&["a"]), "x");
        assert_eq!(got, Type::reference(QualType::new(Type::Base, qual(&["a"]))));

        let f = Type::fun(
            "f",
            "y",
            QualType::new(Type::Base, qual(&["x"])),
            QualType::new(Type::Base, qual(&["x"])),
        );
        let got = type_subst_var(&f, &qual(&["a", "b"]), "x");
        let want = Type::fun(
            "f",
            "y",
            QualType::new(Type::Base, qual(&["a", "b"])),
            QualType::new(Type::Base, qual(&["a", "b"])),
        );
        assert_eq!(got, want);
    }

    #[test]
    fn type_subst_var_fresh_var_is_identity() {
        let f = Type::fun(
            "f",
            "y",
            QualType::new(Type::Base, qual(&["x"])),
            QualType::new(Type::Base, qual(&["f", "y"])),
        );
        assert_eq!(type_subst_var(&f, &qual(&["zz"]), "unused"), f);
    }

    #[test]
    fn type_subst_tvar_replaces_both() {
        let t = Type::TVar("X".into());
        let got = type_subst_tvar(&t, &Type::Base, &qual(&["a"]), "X", "x");
        assert_eq!(got, Type::Base);

        let qt = Type::reference(QualType::new(Type::TVar("X".into()), Qualifier::empty()));
        let got = type_subst_tvar(&qt, &Type::Base, &qual(&["a"]), "X", "x");
        assert_eq!(got, Type::reference(QualType::unqualified(Type::Base)));

        // X^{x} instantiated at B^{a}.
        let body = QualType::new(Type::TVar("X".into()), qual(&["x"]));
        let got = qualtype_subst_tvar(&body, &Type::Base, &qual(&["a"]), "X", "x");
        assert_eq!(got, QualType::new(Type::Base, qual(&["a"])));
    }

    #[test]
    fn saturate_empty() {
        let ctx = Context::new();
        let s = saturate(&ctx, &Qualifier::empty()).unwrap();
        assert!(s.vars.is_empty() && !s.fresh_seen && !s.hole_seen);
    }

    #[test]
    fn saturate_chases_entries_and_flags_fresh() {
        // ctx = [a: Ref B^♦, c: Ref B^{a}], q = {c}
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(Type::reference(QualType::unqualified(Type::Base)), Qualifier::fresh_only()));
        ctx.push_var("c", QualType::new(Type::reference(QualType::unqualified(Type::Base)), qual(&["a"])));
        let s = saturate(&ctx, &Qualifier::var("c")).unwrap();
        assert_eq!(s.vars, ["a", "c"].iter().map(|s| s.to_string()).collect());
        assert!(s.fresh_seen);
        assert!(!s.hole_seen);
    }

    #[test]
    fn saturate_flags_holes() {
        let mut ctx = Context::new();
        ctx.push_self("f", Qualifier::hole_only());
        let s = saturate(&ctx, &Qualifier::var("f")).unwrap();
        assert_eq!(s.vars, ["f"].iter().map(|s| s.to_string()).collect());
        assert!(!s.fresh_seen);
        assert!(s.hole_seen);
    }

    #[test]
    fn saturate_unknown_var_errs() {
        let ctx = Context::new();
        assert!(saturate(&ctx, &Qualifier::var("z")).is_err());
    }

    #[test]
    fn saturation_is_a_closure() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(Type::Base, Qualifier::fresh_only()));
        ctx.push_var("b", QualType::new(Type::Base, qual(&["a"])));
        ctx.push_var("c", QualType::new(Type::Base, qual(&["b"])));
        let s1 = saturate(&ctx, &qual(&["c"])).unwrap();
        let again = Qualifier { vars: s1.vars.clone(), fresh: false, hole: false };
        let s2 = saturate(&ctx, &again).unwrap();
        assert_eq!(s1.vars, s2.vars);
    }

    #[test]
    fn overlap_disjoint_is_fresh_only() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(Type::Base, Qualifier::fresh_only()));
        ctx.push_var("b", QualType::new(Type::Base, Qualifier::fresh_only()));
        let o = overlap(&ctx, &Qualifier::var("a"), &Qualifier::var("b")).unwrap();
        assert_eq!(o, Qualifier::fresh_only());
    }

    #[test]
    fn overlap_sees_aliasing() {
        // c reaches a, so {a} ⋒ {c} = {♦, a}.
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(Type::Base, Qualifier::fresh_only()));
        ctx.push_var("c", QualType::new(Type::Base, qual(&["a"])));
        let o = overlap(&ctx, &Qualifier::var("a"), &Qualifier::var("c")).unwrap();
        assert_eq!(o, qual(&["a"]).with_fresh());
    }

    #[test]
    fn overlap_with_empty() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(Type::Base, Qualifier::fresh_only()));
        let o = overlap(&ctx, &Qualifier::empty(), &Qualifier::var("a")).unwrap();
        assert_eq!(o, Qualifier::fresh_only());
    }

    #[test]
    fn occurs_base_never() {
        assert!(!occurs("x", &Type::Base, Polarity::Any));
    }

    #[test]
    fn occurs_codomain_qualifier_is_positive() {
        // z in f(x: B^∅) -> B^{z}: positive, not negative.
        let t = Type::fun(
            "f",
            "x",
            QualType::unqualified(Type::Base),
            QualType::new(Type::Base, qual(&["z"])),
        );
        assert!(occurs("z", &t, Polarity::Pos));
        assert!(!occurs("z", &t, Polarity::Neg));
        assert!(occurs("z", &t, Polarity::Any));
    }

    #[test]
    fn occurs_domain_qualifier_is_negative() {
        let t = Type::fun(
            "f",
            "x",
            QualType::new(Type::Base, qual(&["z"])),
            QualType::unqualified(Type::Base),
        );
        assert!(occurs("z", &t, Polarity::Neg));
        assert!(!occurs("z", &t, Polarity::Pos));
    }

    #[test]
    fn occurs_ref_referent_counts_everywhere() {
        let t = Type::reference(QualType::new(Type::Base, qual(&["f"])));
        assert!(occurs("f", &t, Polarity::Neg));
        assert!(occurs("f", &t, Polarity::Pos));
        assert!(occurs("f", &t, Polarity::Any));
    }

    #[test]
    fn occurs_any_false_implies_both_polarities_false() {
        let t = Type::fun(
            "f",
            "x",
            QualType::new(Type::Base, qual(&["a"])),
            QualType::new(
                Type::reference(QualType::new(Type::Base, qual(&["b"]))),
                qual(&["c"]),
            ),
        );
        for y in ["z", "w"] {
            assert!(!occurs(y, &t, Polarity::Any));
            assert!(!occurs(y, &t, Polarity::Pos));
            assert!(!occurs(y, &t, Polarity::Neg));
        }
    }

    #[test]
    fn alpha_eq_ignores_binder_names() {
        let t1 = Type::fun(
            "f",
            "x",
            QualType::unqualified(Type::Base),
            QualType::new(Type::Base, qual(&["f"])),
        );
        let t2 = Type::fun(
            "g",
            "y",
            QualType::unqualified(Type::Base),
            QualType::new(Type::Base, qual(&["g"])),
        );
        assert!(alpha_eq(&t1, &t2));
        let t3 = Type::fun(
            "g",
            "y",
            QualType::unqualified(Type::Base),
            QualType::new(Type::Base, qual(&["y"])),
        );
        assert!(!alpha_eq(&t1, &t3));
    }
}
