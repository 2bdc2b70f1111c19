//! Canonical pretty-printer. Deterministic: qualifier atoms print sorted,
//! unused binders are elided, and binder names are de-collided against
//! the free names in scope so output re-parses to an alpha-equivalent
//! tree.

use crate::syntax::{
    display_name, occurs, Name, Polarity, QualType, Qualifier, Term, TermKind, Type,
};
use std::collections::BTreeSet;

pub fn pretty_qual(q: &Qualifier) -> String {
    let mut parts: Vec<String> = q.vars.iter().map(|v| display_name(v).to_string()).collect();
    parts.sort();
    if q.fresh {
        parts.push("*".into());
    }
    if q.hole {
        parts.push("?".into());
    }
    format!("{{{}}}", parts.join(","))
}

pub fn pretty_type(t: &Type) -> String {
    Printer::default().ty(t)
}

pub fn pretty_qualtype(qt: &QualType) -> String {
    Printer::default().qualtype_outer(qt)
}

pub fn pretty_term(t: &Term) -> String {
    Printer::default().term(t)
}

#[derive(Default)]
struct Printer {
    /// Maps unique binder names to their printed spellings.
    renames: Vec<(Name, String)>,
}

impl Printer {
    fn printed(&self, unique: &str) -> String {
        self.renames
            .iter()
            .rev()
            .find(|(u, _)| u == unique)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(|| display_name(unique).to_string())
    }

    /// Picks a collision-free spelling for a binder: the display base,
    /// primed until it differs from the printed form of every free name
    /// it would capture.
    fn bind(&mut self, unique: &str, avoid: &BTreeSet<String>) -> String {
        let base = display_name(unique).to_string();
        let mut candidate = if base.is_empty() || base == "_" { "u".to_string() } else { base };
        while avoid.contains(&candidate) {
            candidate.push('\'');
        }
        self.renames.push((unique.to_string(), candidate.clone()));
        candidate
    }

    fn unbind(&mut self, n: usize) {
        for _ in 0..n {
            self.renames.pop();
        }
    }

    /// Printed spellings of free names under a binder, for de-collision.
    fn avoid_set(&self, frees: &BTreeSet<Name>, minus: &[&Name]) -> BTreeSet<String> {
        frees
            .iter()
            .filter(|f| !minus.contains(f))
            .map(|f| self.printed(f))
            .collect()
    }

    fn qual(&self, q: &Qualifier) -> String {
        let mut parts: Vec<String> = q.vars.iter().map(|v| self.printed(v)).collect();
        parts.sort();
        if q.fresh {
            parts.push("*".into());
        }
        if q.hole {
            parts.push("?".into());
        }
        format!("{{{}}}", parts.join(","))
    }

    /// A qualified type in a context where function arrows need no
    /// parentheses unless qualified.
    fn qualtype_outer(&mut self, qt: &QualType) -> String {
        if qt.qual.is_empty() {
            self.ty(&qt.ty)
        } else {
            format!("{}^{}", self.ty_atomic(&qt.ty), self.qual(&qt.qual))
        }
    }

    fn ty(&mut self, t: &Type) -> String {
        match t {
            Type::Base => "Unit".into(),
            Type::Top => "Top".into(),
            Type::TVar(x) => self.printed(x),
            Type::Ref(inner) => format!("Ref[{}]", self.qualtype_outer(inner)),
            Type::Fun(f) => {
                let frees = type_free_names(t);
                let self_used = occurs_in_qualtype(&f.self_name, &f.dom)
                    || occurs_in_qualtype(&f.self_name, &f.cod);
                let arg_used = occurs_in_qualtype(&f.arg, &f.cod);

                let mut avoid = self.avoid_set(&frees, &[]);
                let n0 = self.renames.len();
                let self_txt = if self_used {
                    let s = self.bind(&f.self_name, &avoid);
                    avoid.insert(s.clone());
                    s
                } else {
                    String::new()
                };
                let dom_txt = if arg_used {
                    let dom = self.qualtype_outer(&f.dom);
                    let arg = self.bind(&f.arg, &avoid);
                    format!("{arg}: {dom}")
                } else if f.dom.ty == Type::Base && f.dom.qual.is_empty() {
                    // Thunk style: `f() -> U`.
                    String::new()
                } else {
                    self.qualtype_outer(&f.dom)
                };
                let cod = self.qualtype_outer(&f.cod);
                self.unbind(self.renames.len() - n0);
                format!("{self_txt}({dom_txt}) -> {cod}")
            }
            Type::All(a) => {
                let frees = type_free_names(t);
                let self_used = occurs_in_qualtype(&a.self_name, &a.bound)
                    || occurs_in_qualtype(&a.self_name, &a.cod);
                let mut avoid = self.avoid_set(&frees, &[]);
                let n0 = self.renames.len();
                let self_txt = if self_used {
                    let s = self.bind(&a.self_name, &avoid);
                    avoid.insert(s.clone());
                    s
                } else {
                    String::new()
                };
                let bound = self.qualtype_outer(&a.bound);
                let tv_avoid = self.avoid_set(&type_free_tvars(t), &[]);
                let tv = self.bind(&a.tvar, &tv_avoid);
                let qv = self.bind(&a.qvar, &avoid);
                let cod = self.qualtype_outer(&a.cod);
                self.unbind(self.renames.len() - n0);
                let wild = Qualifier::var(a.self_name.clone()).with_fresh();
                let default_bound = a.bound.ty == Type::Top
                    && (a.bound.qual == Qualifier::fresh_only() || a.bound.qual == wild);
                if default_bound {
                    format!("forall {self_txt}[{tv}^{qv}]. {cod}")
                } else {
                    format!("forall {self_txt}[{tv}^{qv} <: {bound}]. {cod}")
                }
            }
        }
    }

    /// Like [`Printer::ty`] but parenthesizes arrows and quantifiers so a
    /// qualifier can attach.
    fn ty_atomic(&mut self, t: &Type) -> String {
        match t {
            Type::Fun(_) | Type::All(_) => format!("({})", self.ty(t)),
            _ => self.ty(t),
        }
    }

    fn term(&mut self, t: &Term) -> String {
        match &t.kind {
            TermKind::Unit => "unit".into(),
            TermKind::Var(x) => self.printed(x),
            TermKind::RefAlloc(inner) => format!("ref {}", self.term_atom(inner)),
            TermKind::Deref(inner) => format!("!{}", self.term_atom(inner)),
            TermKind::Assign(l, r) => {
                format!("{} := {}", self.term_app(l), self.term_app(r))
            }
            TermKind::Abs { self_name, arg, ann, body } => {
                let frees = t.free_vars();
                let mut avoid = self.avoid_set(&frees, &[]);
                let n0 = self.renames.len();
                let s = self.bind(self_name, &avoid);
                avoid.insert(s.clone());
                let ann_txt = ann.as_ref().map(|qt| self.qualtype_outer(qt));
                let a = self.bind(arg, &avoid);
                let body_txt = self.term(body);
                self.unbind(self.renames.len() - n0);
                match ann_txt {
                    Some(ann) => format!("\\{s}({a}: {ann}) => {body_txt}"),
                    None => format!("\\{s}({a}) => {body_txt}"),
                }
            }
            TermKind::App(f, a) => {
                format!("{} {}", self.term_app(f), self.term_atom(a))
            }
            TermKind::TAbs { self_name, tvar, qvar, bound, body } => {
                let frees = t.free_vars();
                let mut avoid = self.avoid_set(&frees, &[]);
                let n0 = self.renames.len();
                let s = self.bind(self_name, &avoid);
                avoid.insert(s.clone());
                let bound_txt = self.qualtype_outer(bound);
                let tv = self.bind(tvar, &BTreeSet::new());
                let qv = self.bind(qvar, &avoid);
                let body_txt = self.term(body);
                self.unbind(self.renames.len() - n0);
                format!("/\\{s}[{tv}^{qv} <: {bound_txt}] => {body_txt}")
            }
            TermKind::TApp(f, qt) => {
                format!("{}[{}]", self.term_app(f), self.qualtype_outer(qt))
            }
            TermKind::Ascribe(inner, qt) => {
                format!("({} : {})", self.term(inner), self.qualtype_outer(qt))
            }
            TermKind::Let { name, rhs, body } => {
                let frees = t.free_vars();
                let avoid = self.avoid_set(&frees, &[]);
                let rhs_txt = self.term(rhs);
                let n0 = self.renames.len();
                let n = self.bind(name, &avoid);
                let body_txt = self.term(body);
                self.unbind(self.renames.len() - n0);
                format!("{{ val {n} = {rhs_txt}; {body_txt} }}")
            }
        }
    }

    fn term_app(&mut self, t: &Term) -> String {
        match &t.kind {
            TermKind::App(..) | TermKind::TApp(..) | TermKind::Var(_) | TermKind::Unit
            | TermKind::Ascribe(..) | TermKind::Deref(_) => self.term(t),
            _ => format!("({})", self.term(t)),
        }
    }

    fn term_atom(&mut self, t: &Term) -> String {
        match &t.kind {
            TermKind::Var(_) | TermKind::Unit | TermKind::Ascribe(..) => self.term(t),
            _ => format!("({})", self.term(t)),
        }
    }
}

fn occurs_in_qualtype(y: &str, qt: &QualType) -> bool {
    qt.qual.contains_var(y) || occurs(y, &qt.ty, Polarity::Any)
}

/// Free term-level names of a type (variables in qualifiers).
fn type_free_names(t: &Type) -> BTreeSet<Name> {
    fn go(t: &Type, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        let qual = |q: &Qualifier, bound: &Vec<Name>, out: &mut BTreeSet<Name>| {
            for v in &q.vars {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
        };
        match t {
            Type::Base | Type::Top | Type::TVar(_) => {}
            Type::Ref(inner) => {
                qual(&inner.qual, bound, out);
                go(&inner.ty, bound, out);
            }
            Type::Fun(f) => {
                bound.push(f.self_name.clone());
                qual(&f.dom.qual, bound, out);
                go(&f.dom.ty, bound, out);
                bound.push(f.arg.clone());
                qual(&f.cod.qual, bound, out);
                go(&f.cod.ty, bound, out);
                bound.pop();
                bound.pop();
            }
            Type::All(a) => {
                bound.push(a.self_name.clone());
                qual(&a.bound.qual, bound, out);
                go(&a.bound.ty, bound, out);
                bound.push(a.qvar.clone());
                qual(&a.cod.qual, bound, out);
                go(&a.cod.ty, bound, out);
                bound.pop();
                bound.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    go(t, &mut Vec::new(), &mut out);
    out
}

/// Free type-variable names of a type.
fn type_free_tvars(t: &Type) -> BTreeSet<Name> {
    fn go(t: &Type, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
        match t {
            Type::Base | Type::Top => {}
            Type::TVar(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            Type::Ref(inner) => go(&inner.ty, bound, out),
            Type::Fun(f) => {
                go(&f.dom.ty, bound, out);
                go(&f.cod.ty, bound, out);
            }
            Type::All(a) => {
                go(&a.bound.ty, bound, out);
                bound.push(a.tvar.clone());
                go(&a.cod.ty, bound, out);
                bound.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    go(t, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qvars(vars: &[&str]) -> Qualifier {
        let mut q = Qualifier::default();
        for v in vars {
            q.vars.insert(v.to_string());
        }
        q
    }

    #[test]
    fn prints_sorted_qualifiers() {
        let q = qvars(&["b", "a"]).with_fresh();
        assert_eq!(pretty_qual(&q), "{a,b,*}");
        assert_eq!(pretty_qual(&Qualifier::empty()), "{}");
    }

    #[test]
    fn elides_empty_qualifier_and_unused_binders() {
        let t = Type::fun(
            "f$1",
            "u$2",
            QualType::unqualified(Type::Base),
            QualType::unqualified(Type::Base),
        );
        assert_eq!(pretty_type(&t), "() -> Unit");
    }

    #[test]
    fn prints_capture_fresh_type() {
        // (x: Ref[Unit]^{*}) -> (g() -> Ref[Unit]^{g})^{x}
        let inner = Type::fun(
            "g$1",
            "u$2",
            QualType::unqualified(Type::Base),
            QualType::new(
                Type::reference(QualType::unqualified(Type::Base)),
                qvars(&["g$1"]),
            ),
        );
        let outer = Type::fun(
            "cf$3",
            "x$4",
            QualType::new(
                Type::reference(QualType::unqualified(Type::Base)),
                Qualifier::fresh_only(),
            ),
            QualType::new(inner, qvars(&["x$4"])),
        );
        assert_eq!(
            pretty_type(&outer),
            "(x: Ref[Unit]^{*}) -> (g() -> Ref[Unit]^{g})^{x}"
        );
    }

    #[test]
    fn binder_collision_gets_primed() {
        // Binder x$9 shadows a free variable that also prints as `x`.
        let t = Type::fun(
            "f$8",
            "x$9",
            QualType::new(Type::Base, qvars(&["x"])),
            QualType::new(Type::Base, qvars(&["x$9", "x"])),
        );
        let s = pretty_type(&t);
        assert_eq!(s, "(x': Unit^{x}) -> Unit^{x,x'}");
    }
}
