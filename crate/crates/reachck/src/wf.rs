//! Well-formedness of qualifiers, types, and contexts, plus the
//! context-subsumption relation characterizing hole instantiation.

use crate::syntax::{
    display_name, occurs, Context, Entry, Name, Obs, Polarity, QualType, Qualifier, Type,
};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WfErrorKind {
    HoleInQualifier,
    UnboundVariable(Name),
    UnboundTypeVariable(Name),
    /// The self-reference occurs at a polarity the rules forbid
    /// (positively in the domain, or negatively in the codomain).
    SelfInBadPolarity(Name),
    /// The self-reference appears in the domain qualifier without the
    /// freshness marker.
    SelfWithoutFresh(Name),
    /// A hole in the qualifier of a non-self context entry.
    HoleOutsideSelf,
}

/// A step on the path from the root of the checked object to the
/// offending position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathStep {
    RefInner,
    FunDom,
    FunCod,
    AllBound,
    AllCod,
    ContextEntry(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WfError {
    pub kind: WfErrorKind,
    pub path: Vec<PathStep>,
}

impl WfError {
    fn here(kind: WfErrorKind) -> WfError {
        WfError { kind, path: Vec::new() }
    }
    fn under(mut self, step: PathStep) -> WfError {
        self.path.insert(0, step);
        self
    }
}

impl fmt::Display for WfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            WfErrorKind::HoleInQualifier => write!(f, "qualifier contains a hole"),
            WfErrorKind::UnboundVariable(x) => {
                write!(f, "unbound variable `{}` in qualifier", display_name(x))
            }
            WfErrorKind::UnboundTypeVariable(x) => {
                write!(f, "unbound type variable `{}`", display_name(x))
            }
            WfErrorKind::SelfInBadPolarity(x) => write!(
                f,
                "self-reference `{}` occurs at a forbidden polarity",
                display_name(x)
            ),
            WfErrorKind::SelfWithoutFresh(x) => write!(
                f,
                "self-reference `{}` in a domain qualifier without the freshness marker",
                display_name(x)
            ),
            WfErrorKind::HoleOutsideSelf => {
                write!(f, "hole in the qualifier of a non-self context entry")
            }
        }
    }
}

/// Well-formed qualifier: no holes, all variables bound.
pub fn wf_qual(ctx: &Context, q: &Qualifier) -> Result<(), WfError> {
    if q.hole {
        return Err(WfError::here(WfErrorKind::HoleInQualifier));
    }
    for x in &q.vars {
        if !ctx.binds_qual(x) {
            return Err(WfError::here(WfErrorKind::UnboundVariable(x.clone())));
        }
    }
    Ok(())
}

pub fn wf_qualtype(ctx: &Context, qt: &QualType) -> Result<(), WfError> {
    wf_qual(ctx, &qt.qual)?;
    wf_type(ctx, &qt.ty)
}

pub fn wf_type(ctx: &Context, t: &Type) -> Result<(), WfError> {
    match t {
        Type::Base | Type::Top => Ok(()),
        Type::TVar(x) => {
            if ctx.binds_tvar(x) {
                Ok(())
            } else {
                Err(WfError::here(WfErrorKind::UnboundTypeVariable(x.clone())))
            }
        }
        Type::Ref(inner) => wf_qualtype(ctx, inner).map_err(|e| e.under(PathStep::RefInner)),
        Type::Fun(fun) => {
            let mut ctx1 = ctx.clone();
            ctx1.push_self(fun.self_name.clone(), Qualifier::fresh_only());
            wf_qualtype(&ctx1, &fun.dom).map_err(|e| e.under(PathStep::FunDom))?;
            let mut ctx2 = ctx1;
            ctx2.push_var(fun.arg.clone(), fun.dom.clone());
            wf_qualtype(&ctx2, &fun.cod).map_err(|e| e.under(PathStep::FunCod))?;
            if occurs(&fun.self_name, &fun.dom.ty, Polarity::Pos) {
                return Err(WfError::here(WfErrorKind::SelfInBadPolarity(fun.self_name.clone()))
                    .under(PathStep::FunDom));
            }
            if fun.dom.qual.contains_var(&fun.self_name) && !fun.dom.qual.fresh {
                return Err(WfError::here(WfErrorKind::SelfWithoutFresh(fun.self_name.clone()))
                    .under(PathStep::FunDom));
            }
            if occurs(&fun.self_name, &fun.cod.ty, Polarity::Neg) {
                return Err(WfError::here(WfErrorKind::SelfInBadPolarity(fun.self_name.clone()))
                    .under(PathStep::FunCod));
            }
            Ok(())
        }
        Type::All(all) => {
            // Mirrors the function rule with the bound in the domain role.
            let mut ctx1 = ctx.clone();
            ctx1.push_self(all.self_name.clone(), Qualifier::fresh_only());
            wf_qualtype(&ctx1, &all.bound).map_err(|e| e.under(PathStep::AllBound))?;
            let mut ctx2 = ctx1;
            ctx2.push_tvar(all.tvar.clone(), all.qvar.clone(), all.bound.clone());
            wf_qualtype(&ctx2, &all.cod).map_err(|e| e.under(PathStep::AllCod))?;
            if occurs(&all.self_name, &all.bound.ty, Polarity::Pos) {
                return Err(WfError::here(WfErrorKind::SelfInBadPolarity(all.self_name.clone()))
                    .under(PathStep::AllBound));
            }
            if all.bound.qual.contains_var(&all.self_name) && !all.bound.qual.fresh {
                return Err(WfError::here(WfErrorKind::SelfWithoutFresh(all.self_name.clone()))
                    .under(PathStep::AllBound));
            }
            if occurs(&all.self_name, &all.cod.ty, Polarity::Neg) {
                return Err(WfError::here(WfErrorKind::SelfInBadPolarity(all.self_name.clone()))
                    .under(PathStep::AllCod));
            }
            Ok(())
        }
    }
}

/// Well-formed context: folds left, checking each entry against its
/// prefix. Only self entries may carry a hole.
pub fn wf_context(ctx: &Context) -> Result<(), WfError> {
    let mut prefix = Context::new();
    for (i, entry) in ctx.entries().iter().enumerate() {
        match entry {
            Entry::Var { qt, .. } => {
                if qt.qual.hole {
                    return Err(WfError::here(WfErrorKind::HoleOutsideSelf)
                        .under(PathStep::ContextEntry(i)));
                }
                wf_qualtype(&prefix, qt).map_err(|e| e.under(PathStep::ContextEntry(i)))?;
            }
            Entry::TVar { bound, .. } => {
                if bound.qual.hole {
                    return Err(WfError::here(WfErrorKind::HoleOutsideSelf)
                        .under(PathStep::ContextEntry(i)));
                }
                wf_qualtype(&prefix, bound).map_err(|e| e.under(PathStep::ContextEntry(i)))?;
            }
            Entry::SelfRef { qual, .. } => {
                wf_qual(&prefix, &qual.strip_hole())
                    .map_err(|e| e.under(PathStep::ContextEntry(i)))?;
            }
        }
        prefix.push(entry.clone());
    }
    Ok(())
}

/// Context subsumption: `g2` results from instantiating holes in `g1`
/// zero or more times. Non-self entries must be identical; each self
/// entry of `g2` may extend the corresponding `g1` entry's hole with a
/// hole-free, freshness-free qualifier closed under the preceding
/// entries.
pub fn ctx_subsumes(g1: &Context, g2: &Context) -> bool {
    if g1.len() != g2.len() {
        return false;
    }
    for (i, (e1, e2)) in g1.entries().iter().zip(g2.entries()).enumerate() {
        match (e1, e2) {
            (Entry::SelfRef { name: n1, qual: q1 }, Entry::SelfRef { name: n2, qual: q2 }) => {
                if n1 != n2 {
                    return false;
                }
                if q1 == q2 {
                    continue;
                }
                // Instantiation requires a hole to fill.
                if !q1.hole || !q2.hole || q1.fresh != q2.fresh {
                    return false;
                }
                if !q1.vars.is_subset(&q2.vars) {
                    return false;
                }
                let delta: Obs = q2.vars.difference(&q1.vars).cloned().collect();
                // The increment must be closed under the preceding prefix.
                for x in &delta {
                    let bound_before = g1.entries()[..i]
                        .iter()
                        .any(|e| e.qual_name() == x);
                    if !bound_before {
                        return false;
                    }
                }
            }
            _ => {
                if e1 != e2 {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::QualType;

    fn qvars(vars: &[&str]) -> Qualifier {
        let mut q = Qualifier::default();
        for v in vars {
            q.vars.insert(v.to_string());
        }
        q
    }

    fn ref_unit() -> Type {
        Type::reference(QualType::unqualified(Type::Base))
    }

    #[test]
    fn wf_qual_accepts_bound_vars_and_fresh() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
        assert!(wf_qual(&ctx, &qvars(&["a"]).with_fresh()).is_ok());
    }

    #[test]
    fn wf_qual_rejects_holes() {
        let ctx = Context::new();
        let err = wf_qual(&ctx, &Qualifier::hole_only()).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::HoleInQualifier);
    }

    #[test]
    fn wf_qual_rejects_unbound() {
        let ctx = Context::new();
        let err = wf_qual(&ctx, &qvars(&["z"])).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::UnboundVariable("z".into()));
    }

    #[test]
    fn wf_fun_self_and_fresh_in_domain_ok() {
        // f(x: B^{♦,f}) -> B^{f}
        let t = Type::fun(
            "f",
            "x",
            QualType::new(Type::Base, qvars(&["f"]).with_fresh()),
            QualType::new(Type::Base, qvars(&["f"])),
        );
        assert!(wf_type(&Context::new(), &t).is_ok());
    }

    #[test]
    fn wf_fun_self_without_fresh_rejected() {
        let t = Type::fun(
            "f",
            "x",
            QualType::new(Type::Base, qvars(&["f"])),
            QualType::unqualified(Type::Base),
        );
        let err = wf_type(&Context::new(), &t).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::SelfWithoutFresh("f".into()));
    }

    #[test]
    fn wf_fun_self_under_ref_in_codomain_rejected() {
        // f(x: B^∅) -> (Ref (B^{f}))^∅ — the referent occurrence is
        // invariant, so it counts negatively as well.
        let t = Type::fun(
            "f",
            "x",
            QualType::unqualified(Type::Base),
            QualType::unqualified(Type::reference(QualType::new(Type::Base, qvars(&["f"])))),
        );
        let err = wf_type(&Context::new(), &t).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::SelfInBadPolarity("f".into()));
    }

    #[test]
    fn wf_context_empty_ok() {
        assert!(wf_context(&Context::new()).is_ok());
    }

    #[test]
    fn wf_context_self_with_hole_ok() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_self("f", qvars(&["a"]).with_hole());
        assert!(wf_context(&ctx).is_ok());
    }

    #[test]
    fn wf_context_hole_outside_self_rejected() {
        let mut ctx = Context::new();
        ctx.push_var("x", QualType::new(Type::Base, Qualifier::hole_only()));
        let err = wf_context(&ctx).unwrap_err();
        assert_eq!(err.kind, WfErrorKind::HoleOutsideSelf);
    }

    #[test]
    fn ctx_subsumes_reflexive() {
        let mut ctx = Context::new();
        ctx.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_self("f", Qualifier::hole_only());
        assert!(ctx_subsumes(&ctx, &ctx));
    }

    #[test]
    fn ctx_subsumes_hole_instantiation() {
        // [x: Ref^♦, f: Top^{∇}] ⊑ [x: Ref^♦, f: Top^{∇,x}]
        let mut g1 = Context::new();
        g1.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        g1.push_self("f", Qualifier::hole_only());
        let mut g2 = g1.clone();
        g2.instantiate_hole(1, &["x".to_string()].into_iter().collect());
        assert!(ctx_subsumes(&g1, &g2));
        assert!(!ctx_subsumes(&g2, &g1));
    }

    #[test]
    fn ctx_subsumes_rejects_changed_var_entry() {
        let mut g1 = Context::new();
        g1.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        let mut g2 = Context::new();
        g2.push_var("x", QualType::new(ref_unit(), Qualifier::empty()));
        assert!(!ctx_subsumes(&g1, &g2));
    }

    #[test]
    fn ctx_subsumes_rejects_out_of_scope_increment() {
        // The increment must be closed under the prefix before the self
        // entry, so extending f's hole with the later-bound y is not
        // subsumption.
        let mut g1 = Context::new();
        g1.push_self("f", Qualifier::hole_only());
        g1.push_var("y", QualType::new(ref_unit(), Qualifier::fresh_only()));
        let mut g2 = g1.clone();
        g2.instantiate_hole(0, &["y".to_string()].into_iter().collect());
        assert!(!ctx_subsumes(&g1, &g2));
    }

    #[test]
    fn wf_type_stable_under_subsumption() {
        let mut g1 = Context::new();
        g1.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        g1.push_self("f", Qualifier::hole_only());
        let t = Type::fun(
            "g",
            "y",
            QualType::new(ref_unit(), qvars(&["x"]).with_fresh()),
            QualType::new(Type::Base, qvars(&["f"])),
        );
        assert!(wf_type(&g1, &t).is_ok());
        let mut g2 = g1.clone();
        g2.instantiate_hole(1, &["x".to_string()].into_iter().collect());
        assert!(ctx_subsumes(&g1, &g2));
        assert!(wf_type(&g2, &t).is_ok());
    }
}
