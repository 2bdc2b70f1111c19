//! Algorithmic subqualifying: exposure, unification against holes in the
//! context, and the check/infer entry points built on them.

use crate::stats;
use crate::syntax::{display_name, Context, Entry, Name, Obs, Qualifier};
use std::fmt;

/// Qualifier exposure: the largest superset of `q` that is still a
/// subqualifier of `q`.
///
/// Stage one walks the context in reverse and, for each variable of `q`
/// bound by a term entry, folds in that entry's recorded qualifier
/// (markers stripped). Stage two walks forward and adds every variable
/// whose recorded qualifier is already contained in the set. The two
/// ordered sweeps visit each entry at most once.
pub fn expose(ctx: &Context, q: &Qualifier) -> Qualifier {
    let mut out = q.clone();
    // Stage 1: self-reference extension, reverse order. Only self entries
    // participate; expanding an ordinary variable's recorded qualifier
    // into the set would not be a subqualifier of it.
    for i in (0..ctx.len()).rev() {
        let Entry::SelfRef { name, qual: p } = ctx.entry(i) else { continue };
        if !out.vars.contains(name) {
            continue;
        }
        if !p.vars.is_subset(&out.vars) {
            out.vars.extend(p.vars.iter().cloned());
        }
    }
    // Stage 2: variable absorption, forward order.
    for i in 0..ctx.len() {
        let entry = ctx.entry(i);
        let name = entry.qual_name();
        if out.vars.contains(name) {
            continue;
        }
        let p = entry.recorded_qual();
        if !p.fresh && !p.hole && p.vars.is_subset(&out.vars) {
            out.vars.insert(name.clone());
        }
    }
    out
}

/// Algorithmic subqualifying check: `p ⊆ expose(q)`, requiring both
/// sides well-formed (hole-free, variables bound).
pub fn qual_check(ctx: &Context, p: &Qualifier, q: &Qualifier) -> bool {
    if p.hole || q.hole {
        return false;
    }
    let bound = |qq: &Qualifier| qq.vars.iter().all(|x| ctx.binds_qual(x));
    if !bound(p) || !bound(q) {
        return false;
    }
    p.is_subset(&expose(ctx, q))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UnifyFail {
    /// The freshness marker is left over on the smaller side.
    ResidualFresh,
    /// A hole is left over on the smaller side.
    ResidualHole,
    /// The variable's recorded qualifier is fresh or holed and no
    /// eligible self-reference is available to absorb it.
    NoRule(Name),
    UnknownVar(Name),
}

impl fmt::Display for UnifyFail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnifyFail::ResidualFresh => write!(f, "the freshness marker cannot be unified away"),
            UnifyFail::ResidualHole => write!(f, "a qualifier hole cannot be unified away"),
            UnifyFail::NoRule(x) => write!(
                f,
                "`{}` reaches fresh or unresolved data and no enclosing self-reference can absorb it",
                display_name(x)
            ),
            UnifyFail::UnknownVar(x) => write!(f, "unknown variable `{}`", display_name(x)),
        }
    }
}

/// Qualifier unification `Γ ⊢ p ⇓ q ⊣ Γ'`: hides `p ∖ q` inside holes of
/// self entries, or upcasts residual variables through their recorded
/// qualifiers. `q` is expected to be already exposed.
pub fn unify(ctx: &Context, p: &Qualifier, q: &Qualifier) -> Result<Context, UnifyFail> {
    // qu3: nothing left over.
    if p.is_subset(q) {
        return Ok(ctx.clone());
    }
    if p.fresh && !q.fresh {
        return Err(UnifyFail::ResidualFresh);
    }
    if p.hole && !q.hole {
        return Err(UnifyFail::ResidualHole);
    }
    // Residual variables are processed in reverse context order: pick the
    // one introduced last.
    let x = p
        .vars
        .difference(&q.vars)
        .map(|x| match ctx.lookup_qual_binding(x) {
            Some((i, _)) => Ok((i, x.clone())),
            None => Err(UnifyFail::UnknownVar(x.clone())),
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .max()
        .expect("nonempty residual");
    let (x_pos, x) = x;

    // qu1: a holed self-reference in q introduced after x; among the
    // candidates the one defined earliest wins.
    let candidate = ctx
        .entries()
        .iter()
        .enumerate()
        .skip(x_pos + 1)
        .find(|(_, e)| match e {
            Entry::SelfRef { name, qual } => qual.hole && q.vars.contains(name),
            _ => false,
        })
        .map(|(i, _)| i);
    if let Some(f_pos) = candidate {
        let rest = unify(ctx, &p.without_var(&x), q)?;
        let mut out = rest;
        out.instantiate_hole(f_pos, &std::iter::once(x.clone()).collect::<Obs>());
        stats::count_unification();
        return Ok(out);
    }

    // qu2: upcast x through its recorded qualifier.
    let (_, entry) = ctx.lookup_qual_binding(&x).expect("checked above");
    let r = entry.recorded_qual();
    if r.fresh || r.hole {
        return Err(UnifyFail::NoRule(x));
    }
    let r = r.clone();
    unify(ctx, &p.subst(&r, &x), q)
}

/// Algorithmic subqualifying with inference: expose, then unify. Every
/// downstream algorithm goes through this entry point.
pub fn qual_infer(ctx: &Context, p: &Qualifier, q: &Qualifier) -> Result<Context, UnifyFail> {
    stats::count_infer();
    let exposed = expose(ctx, q);
    unify(ctx, p, &exposed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{QualType, Type};
    use crate::wf::ctx_subsumes;

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
    fn expose_empty() {
        assert_eq!(expose(&Context::new(), &Qualifier::empty()), Qualifier::empty());
    }

    #[test]
    fn expose_absorbs_contained_vars() {
        // [a: Ref^♦, b: Ref^♦, c: Ref^{a,b}]: expose({a,b}) = {a,b,c}
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_var("b", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_var("c", QualType::new(ref_unit(), qvars(&["a", "b"])));
        assert_eq!(expose(&ctx, &qvars(&["a", "b"])), qvars(&["a", "b", "c"]));
    }

    #[test]
    fn expose_unfolds_self_entries() {
        // [x: Ref^♦, f: Top^{x}]: expose({f}) = {f,x}
        let mut ctx = Context::new();
        ctx.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_self("f", qvars(&["x"]));
        assert_eq!(expose(&ctx, &qvars(&["f"])), qvars(&["f", "x"]));
    }

    #[test]
    fn expose_idempotent() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_var("b", QualType::new(ref_unit(), qvars(&["a"])));
        ctx.push_self("f", qvars(&["b"]).with_hole());
        for q in [qvars(&["f"]), qvars(&["a", "b"]), Qualifier::fresh_only()] {
            let once = expose(&ctx, &q);
            assert_eq!(expose(&ctx, &once), once);
        }
    }

    #[test]
    fn check_absorption() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_var("b", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_var("c", QualType::new(ref_unit(), qvars(&["a", "b"])));
        assert!(qual_check(&ctx, &qvars(&["c"]), &qvars(&["a", "b"])));
        // {b} and {c} are incomparable.
        assert!(!qual_check(&ctx, &qvars(&["b"]), &qvars(&["c"])));
        assert!(!qual_check(&ctx, &qvars(&["c"]), &qvars(&["b"])));
        // ∅ below everything.
        assert!(qual_check(&ctx, &Qualifier::empty(), &qvars(&["b"])));
    }

    #[test]
    fn unify_subset_is_identity() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
        let out = unify(&ctx, &qvars(&["a"]), &qvars(&["a"]).with_fresh()).unwrap();
        assert_eq!(out, ctx);
    }

    #[test]
    fn unify_records_into_hole() {
        // […, x: Ref^♦, f: Top^{∇}] ⊢ unify({x},{f}) extends f's hole with x.
        let mut ctx = Context::new();
        ctx.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_self("f", Qualifier::hole_only());
        let out = unify(&ctx, &qvars(&["x"]), &qvars(&["f"])).unwrap();
        assert!(ctx_subsumes(&ctx, &out));
        match out.entry(1) {
            Entry::SelfRef { qual, .. } => {
                assert_eq!(qual, &qvars(&["x"]).with_hole());
            }
            e => panic!("unexpected entry {e:?}"),
        }
        assert!(qual_check(&out, &qvars(&["x"]), &qvars(&["f"])));
    }

    #[test]
    fn unify_fresh_expansion_fails_without_self() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
        let err = unify(&ctx, &qvars(&["a"]), &Qualifier::empty()).unwrap_err();
        assert_eq!(err, UnifyFail::NoRule("a".into()));
    }

    #[test]
    fn unify_prefers_earliest_self_after_x() {
        // Two eligible selves after x: the earlier one gets the variable.
        let mut ctx = Context::new();
        ctx.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_self("f", Qualifier::hole_only());
        ctx.push_self("g", Qualifier::hole_only());
        let out = unify(&ctx, &qvars(&["x"]), &qvars(&["f", "g"])).unwrap();
        match (out.entry(1), out.entry(2)) {
            (Entry::SelfRef { qual: qf, .. }, Entry::SelfRef { qual: qg, .. }) => {
                assert_eq!(qf, &qvars(&["x"]).with_hole());
                assert_eq!(qg, &Qualifier::hole_only());
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn unify_self_before_x_is_not_eligible() {
        // The self entry precedes x, so packing x into it would break
        // prefix closure; the upcast route then fails on the fresh
        // expansion.
        let mut ctx = Context::new();
        ctx.push_self("f", Qualifier::hole_only());
        ctx.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        assert!(unify(&ctx, &qvars(&["x"]), &qvars(&["f"])).is_err());
    }

    #[test]
    fn unify_upcasts_through_entries() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::empty()));
        ctx.push_var("b", QualType::new(ref_unit(), qvars(&["a"])));
        // {b} ⇓ {a}: b upcasts to {a}.
        let out = unify(&ctx, &qvars(&["b"]), &qvars(&["a"])).unwrap();
        assert_eq!(out, ctx);
    }

    #[test]
    fn infer_exposes_first() {
        // [a: Ref^♦, b: Ref^♦, c: Ref^{a,b}] ⊢ {c} < {a,b}: exposure
        // absorbs c, no unification needed.
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_var("b", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_var("c", QualType::new(ref_unit(), qvars(&["a", "b"])));
        let out = qual_infer(&ctx, &qvars(&["c"]), &qvars(&["a", "b"])).unwrap();
        assert_eq!(out, ctx);
    }

    #[test]
    fn infer_monotonic_and_only_holes_change() {
        let mut ctx = Context::new();
        ctx.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_self("f", Qualifier::hole_only());
        let out = qual_infer(&ctx, &qvars(&["x"]), &qvars(&["f"])).unwrap();
        assert!(ctx_subsumes(&ctx, &out));
        assert_eq!(out.entry(0), ctx.entry(0));
    }
}
