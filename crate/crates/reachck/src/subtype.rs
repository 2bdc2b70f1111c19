//! Algorithmic self-aware subtype checking.
//!
//! Checking `Γ ⊢ T1 <:^q_δ T2` proceeds in two phases: the subtype is
//! first self-unpacked under its initial reachability, then the recursive
//! syntax-directed phase compares the two types, inserting a fresh hole
//! for each compared function pair and inferring the increment δ from
//! whatever unification records into it.

use crate::qual::{qual_infer, UnifyFail};
use crate::stats;
use crate::syntax::{
    alpha_eq, type_subst_var, Context, Entry, Name, Obs, QualType, Qualifier, Type,
};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubOk {
    /// The inferred increment δ: plain variables only.
    pub delta: Obs,
    pub ctx: Context,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubFail {
    Structure { lhs: String, rhs: String },
    Qualifier(UnifyFail),
    /// A reference's parts or a quantifier bound needed a nonempty
    /// increment, which those positions do not admit.
    InvariantIncrement,
    /// Kernel rule: quantifier bounds must agree.
    BoundMismatch,
}

impl fmt::Display for SubFail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubFail::Structure { lhs, rhs } => {
                write!(f, "no subtyping between `{lhs}` and `{rhs}`")
            }
            SubFail::Qualifier(e) => write!(f, "qualifier check failed: {e}"),
            SubFail::InvariantIncrement => {
                write!(f, "invariant position required additional reachability")
            }
            SubFail::BoundMismatch => write!(f, "quantifier bounds differ"),
        }
    }
}

impl From<UnifyFail> for SubFail {
    fn from(e: UnifyFail) -> SubFail {
        SubFail::Qualifier(e)
    }
}

/// Self unpacking: when the initial reachability is not fresh, eagerly
/// replaces the self-reference with it in the domain type and the whole
/// codomain, leaving the domain qualifier untouched.
pub fn self_unpack(t: &Type, q: &Qualifier) -> Type {
    if q.fresh {
        return t.clone();
    }
    match t {
        Type::Fun(f) => Type::fun(
            f.self_name.clone(),
            f.arg.clone(),
            QualType::new(type_subst_var(&f.dom.ty, q, &f.self_name), f.dom.qual.clone()),
            QualType::new(
                type_subst_var(&f.cod.ty, q, &f.self_name),
                f.cod.qual.subst(q, &f.self_name),
            ),
        ),
        Type::All(a) => Type::all(
            a.self_name.clone(),
            a.tvar.clone(),
            a.qvar.clone(),
            QualType::new(type_subst_var(&a.bound.ty, q, &a.self_name), a.bound.qual.clone()),
            QualType::new(
                type_subst_var(&a.cod.ty, q, &a.self_name),
                a.cod.qual.subst(q, &a.self_name),
            ),
        ),
        _ => t.clone(),
    }
}

/// Type exposure: unfolds a type-variable head to its recorded bound.
pub fn type_expose(ctx: &Context, t: &Type) -> Type {
    let mut t = t.clone();
    while let Type::TVar(x) = &t {
        match ctx.lookup_tvar(x) {
            Some((_, bound)) => t = bound.ty.clone(),
            None => break,
        }
    }
    t
}

/// Toplevel subtype checking: self-unpack, then recurse.
pub fn subtype_check(
    ctx: &Context,
    t1: &Type,
    q: &Qualifier,
    t2: &Type,
) -> Result<SubOk, SubFail> {
    let snap = stats::snapshot("subtype_check", ctx);
    let unpacked = self_unpack(t1, q);
    let out = check_rec(ctx, &unpacked, q, t2)?;
    snap.check(&out.ctx);
    Ok(out)
}

fn structure_fail(t1: &Type, t2: &Type) -> SubFail {
    SubFail::Structure { lhs: describe(t1), rhs: describe(t2) }
}

fn describe(t: &Type) -> String {
    match t {
        Type::Base => "Unit".into(),
        Type::Top => "Top".into(),
        Type::TVar(x) => crate::syntax::display_name(x).to_string(),
        Type::Ref(_) => "Ref[..]".into(),
        Type::Fun(_) => "a function type".into(),
        Type::All(_) => "a universal type".into(),
    }
}

fn check_rec(ctx: &Context, t1: &Type, o: &Qualifier, t2: &Type) -> Result<SubOk, SubFail> {
    match (t1, t2) {
        (Type::Base, Type::Base) => Ok(SubOk { delta: Obs::new(), ctx: ctx.clone() }),
        (_, Type::Top) => Ok(SubOk { delta: Obs::new(), ctx: ctx.clone() }),
        (Type::TVar(x), Type::TVar(y)) if x == y => {
            Ok(SubOk { delta: Obs::new(), ctx: ctx.clone() })
        }
        (Type::TVar(x), _) => {
            let Some((_, bound)) = ctx.lookup_tvar(x) else {
                return Err(structure_fail(t1, t2));
            };
            let bound_ty = bound.ty.clone();
            check_rec(ctx, &bound_ty, o, t2)
        }
        (Type::Ref(p1), Type::Ref(p2)) => {
            let fresh = Qualifier::fresh_only();
            let r1 = check_rec(ctx, &p1.ty, &fresh, &p2.ty)?;
            if !r1.delta.is_empty() {
                return Err(SubFail::InvariantIncrement);
            }
            let r2 = check_rec(&r1.ctx, &p2.ty, &fresh, &p1.ty)?;
            if !r2.delta.is_empty() {
                return Err(SubFail::InvariantIncrement);
            }
            let c3 = qual_infer(&r2.ctx, &p1.qual, &p2.qual)?;
            let c4 = qual_infer(&c3, &p2.qual, &p1.qual)?;
            Ok(SubOk { delta: Obs::new(), ctx: c4 })
        }
        (Type::Fun(f1), Type::Fun(f2)) => {
            // Align binders: rewrite the subtype's self/arg to the
            // supertype's names.
            let f = f2.self_name.clone();
            let x = f2.arg.clone();
            let rename = |qt: &QualType| {
                let qt = crate::syntax::qualtype_subst_var(qt, &Qualifier::var(f.clone()), &f1.self_name);
                crate::syntax::qualtype_subst_var(&qt, &Qualifier::var(x.clone()), &f1.arg)
            };
            let dom1 = rename(&f1.dom);
            let cod1 = rename(&f1.cod);

            let base = ctx.len();
            let mut c = ctx.clone();
            c.push_self(f.clone(), o.clone().with_hole());

            // Contravariant domain types.
            let r1 = check_rec(&c, &f2.dom.ty, &Qualifier::fresh_only(), &dom1.ty)?;
            let delta1 = r1.delta;
            // Domain qualifiers, skipped when the subtype domain accepts
            // arbitrary arguments.
            let wild = dom1.qual.fresh && dom1.qual.contains_var(&f);
            let c2 = if wild {
                r1.ctx
            } else {
                qual_infer(&r1.ctx, &f2.dom.qual.union_vars(&delta1), &dom1.qual)?
            };

            // Covariant codomains, with the argument shifted by δ1 on the
            // subtype side.
            let shift = Qualifier::var(x.clone()).union_vars(&delta1);
            let cod1_shift = crate::syntax::qualtype_subst_var(&cod1, &shift, &x);
            let mut c2x = c2;
            c2x.push_var(x.clone(), QualType::new(f2.dom.ty.clone(), f2.dom.qual.clone()));
            let r2 = check_rec(&c2x, &cod1_shift.ty, &Qualifier::fresh_only(), &f2.cod.ty)?;
            let delta2 = r2.delta;
            let c4 = qual_infer(&r2.ctx, &cod1_shift.qual.union_vars(&delta2), &f2.cod.qual)?;

            pop_self(c4, base, o, &f, &x, &[&delta1, &delta2])
        }
        (Type::All(a1), Type::All(a2)) => {
            let f = a2.self_name.clone();
            let tv = a2.tvar.clone();
            let qv = a2.qvar.clone();
            let rename = |qt: &QualType| {
                let qt = crate::syntax::qualtype_subst_var(qt, &Qualifier::var(f.clone()), &a1.self_name);
                let qt = crate::syntax::qualtype_subst_var(&qt, &Qualifier::var(qv.clone()), &a1.qvar);
                QualType::new(
                    crate::syntax::type_subst_tvar(
                        &qt.ty,
                        &Type::TVar(tv.clone()),
                        &Qualifier::var(qv.clone()),
                        &a1.tvar,
                        // The qualifier part was already renamed above.
                        "#none",
                    ),
                    qt.qual,
                )
            };
            let bound1 = rename(&a1.bound);
            let cod1 = rename(&a1.cod);

            // Kernel quantification: identical bound types.
            if !alpha_eq(&bound1.ty, &a2.bound.ty) {
                return Err(SubFail::BoundMismatch);
            }

            let base = ctx.len();
            let mut c = ctx.clone();
            c.push_self(f.clone(), o.clone().with_hole());

            let wild = bound1.qual.fresh && bound1.qual.contains_var(&f);
            let c2 = if wild {
                c
            } else {
                qual_infer(&c, &a2.bound.qual, &bound1.qual)?
            };

            let mut c2x = c2;
            c2x.push_tvar(tv.clone(), qv.clone(), QualType::new(a2.bound.ty.clone(), a2.bound.qual.clone()));
            let r2 = check_rec(&c2x, &cod1.ty, &Qualifier::fresh_only(), &a2.cod.ty)?;
            let delta2 = r2.delta;
            let c4 = qual_infer(&r2.ctx, &cod1.qual.union_vars(&delta2), &a2.cod.qual)?;

            pop_self(c4, base, o, &f, &qv, &[&delta2])
        }
        _ => Err(structure_fail(t1, t2)),
    }
}

/// Pops the self entry pushed at `base`, reads the increment unified into
/// its hole, and assembles the final δ.
fn pop_self(
    mut out: Context,
    base: usize,
    o: &Qualifier,
    f: &Name,
    x: &Name,
    deltas: &[&Obs],
) -> Result<SubOk, SubFail> {
    let o_after = match out.entry(base) {
        Entry::SelfRef { name, qual } => {
            debug_assert_eq!(name, f);
            qual.clone()
        }
        e => panic!("self entry expected at {base}, found {e:?}"),
    };
    let delta0: Obs = o_after.vars.difference(&o.vars).cloned().collect();
    out.truncate(base);
    let mut delta: Obs = delta0;
    for d in deltas {
        delta.extend(d.iter().cloned());
    }
    delta.remove(f);
    delta.remove(x);
    Ok(SubOk { delta, ctx: out })
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

    fn obs(vars: &[&str]) -> Obs {
        vars.iter().map(|s| s.to_string()).collect()
    }

    fn ref_unit() -> Type {
        Type::reference(QualType::unqualified(Type::Base))
    }

    #[test]
    fn unpack_non_function_unchanged() {
        assert_eq!(self_unpack(&Type::Base, &qvars(&["y"])), Type::Base);
    }

    #[test]
    fn unpack_fresh_unchanged() {
        let t = Type::fun(
            "f",
            "x",
            QualType::new(Type::Base, qvars(&["f"]).with_fresh()),
            QualType::new(ref_unit(), qvars(&["f"])),
        );
        assert_eq!(self_unpack(&t, &Qualifier::fresh_only()), t);
    }

    #[test]
    fn unpack_substitutes_codomain_but_not_domain_qual() {
        // f(x: B^{♦,f}) -> (Ref B^{f})^{f} unpacked at {y}:
        // domain qualifier keeps f, codomain f becomes y.
        let t = Type::fun(
            "f",
            "x",
            QualType::new(Type::Base, qvars(&["f"]).with_fresh()),
            QualType::new(
                Type::reference(QualType::new(Type::Base, qvars(&["f"]))),
                qvars(&["f"]),
            ),
        );
        let got = self_unpack(&t, &qvars(&["y"]));
        let want = Type::fun(
            "f",
            "x",
            QualType::new(Type::Base, qvars(&["f"]).with_fresh()),
            QualType::new(
                Type::reference(QualType::new(Type::Base, qvars(&["y"]))),
                qvars(&["y"]),
            ),
        );
        assert_eq!(got, want);
    }

    #[test]
    fn expose_type_variables() {
        let mut ctx = Context::new();
        assert_eq!(type_expose(&ctx, &Type::Base), Type::Base);
        ctx.push_tvar("X", "x", QualType::new(ref_unit(), qvars(&["q"])));
        assert_eq!(type_expose(&ctx, &Type::TVar("X".into())), ref_unit());
        ctx.push_tvar("Y", "y", QualType::new(Type::TVar("X".into()), Qualifier::empty()));
        assert_eq!(type_expose(&ctx, &Type::TVar("Y".into())), ref_unit());
    }

    #[test]
    fn base_reflexive() {
        let ctx = Context::new();
        let r = subtype_check(&ctx, &Type::Base, &qvars(&["anything"]), &Type::Base).unwrap();
        assert!(r.delta.is_empty());
        assert_eq!(r.ctx, ctx);
    }

    #[test]
    fn packing_into_fresh_function() {
        // ctx = [x: Ref^♦] ⊢ (g() -> Ref^{x}) <:^♦ (f() -> Ref^{f})
        // succeeds with x recorded into f's hole and δ = {x}.
        let mut ctx = Context::new();
        ctx.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        let t1 = Type::fun(
            "g",
            "u1",
            QualType::unqualified(Type::Base),
            QualType::new(ref_unit(), qvars(&["x"])),
        );
        let t2 = Type::fun(
            "f",
            "u2",
            QualType::unqualified(Type::Base),
            QualType::new(ref_unit(), qvars(&["f"])),
        );
        let r = subtype_check(&ctx, &t1, &Qualifier::fresh_only(), &t2).unwrap();
        assert_eq!(r.delta, obs(&["x"]));
        assert_eq!(r.ctx, ctx);
    }

    #[test]
    fn unpacking_bound_function() {
        // ctx = [nF: (f() -> Ref^{f})^♦] ⊢ (f() -> Ref^{f}) <:^{nF}_∅ (() -> Ref^{nF})
        let fun_ty = Type::fun(
            "f",
            "u1",
            QualType::unqualified(Type::Base),
            QualType::new(ref_unit(), qvars(&["f"])),
        );
        let mut ctx = Context::new();
        ctx.push_var("nF", QualType::new(fun_ty.clone(), Qualifier::fresh_only()));
        let t2 = Type::fun(
            "g",
            "u2",
            QualType::unqualified(Type::Base),
            QualType::new(ref_unit(), qvars(&["nF"])),
        );
        let r = subtype_check(&ctx, &fun_ty, &Qualifier::var("nF"), &t2).unwrap();
        assert!(r.delta.is_empty(), "unexpected increment {:?}", r.delta);
        assert_eq!(r.ctx, ctx);
    }

    #[test]
    fn ref_requires_both_directions() {
        let mut ctx = Context::new();
        ctx.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
        let t1 = Type::reference(QualType::new(Type::Base, qvars(&["a"])));
        let t2 = Type::reference(QualType::new(Type::Base, Qualifier::empty()));
        assert!(subtype_check(&ctx, &t1, &Qualifier::fresh_only(), &t2).is_err());
        let t3 = Type::reference(QualType::new(Type::Base, qvars(&["a"])));
        assert!(subtype_check(&ctx, &t1, &Qualifier::fresh_only(), &t3).is_ok());
    }

    #[test]
    fn tvar_uses_bound_for_transitivity() {
        let mut ctx = Context::new();
        ctx.push_tvar("X", "x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        let r = subtype_check(&ctx, &Type::TVar("X".into()), &Qualifier::fresh_only(), &ref_unit())
            .unwrap();
        assert!(r.delta.is_empty());
        // And anything is below Top.
        let r = subtype_check(&ctx, &Type::TVar("X".into()), &Qualifier::fresh_only(), &Type::Top)
            .unwrap();
        assert!(r.delta.is_empty());
    }

    #[test]
    fn all_kernel_bound_mismatch_rejected() {
        let ctx = Context::new();
        let mk = |bound: Type| {
            Type::all(
                "f",
                "X",
                "x",
                QualType::new(bound, Qualifier::fresh_only()),
                QualType::new(Type::TVar("X".into()), qvars(&["x"])),
            )
        };
        let t1 = mk(Type::Top);
        let t2 = mk(ref_unit());
        let err = subtype_check(&ctx, &t1, &Qualifier::fresh_only(), &t2).unwrap_err();
        assert_eq!(err, SubFail::BoundMismatch);
    }

    #[test]
    fn reflexivity_structural() {
        let ctx = {
            let mut c = Context::new();
            c.push_var("a", QualType::new(ref_unit(), Qualifier::fresh_only()));
            c
        };
        let t = Type::all(
            "f",
            "X",
            "x",
            QualType::new(Type::Top, Qualifier::fresh_only()),
            QualType::new(
                Type::fun(
                    "g",
                    "y",
                    QualType::new(Type::TVar("X".into()), qvars(&["x"]).with_fresh()),
                    QualType::new(Type::TVar("X".into()), qvars(&["y"])),
                ),
                qvars(&["a"]),
            ),
        );
        let r = subtype_check(&ctx, &t, &qvars(&["a"]), &t).unwrap();
        assert!(r.delta.is_empty(), "got {:?}", r.delta);
        assert_eq!(r.ctx, ctx);
    }

    #[test]
    fn context_monotonicity_on_success() {
        let mut ctx = Context::new();
        ctx.push_var("x", QualType::new(ref_unit(), Qualifier::fresh_only()));
        ctx.push_self("h", Qualifier::hole_only());
        // (u() -> Ref^{x})^... <: (f() -> Ref^{h}): x packs into h's hole
        // via the codomain qualifier check.
        let t1 = Type::fun(
            "g",
            "u1",
            QualType::unqualified(Type::Base),
            QualType::new(ref_unit(), qvars(&["x"])),
        );
        let t2 = Type::fun(
            "f",
            "u2",
            QualType::unqualified(Type::Base),
            QualType::new(ref_unit(), qvars(&["h"])),
        );
        let r = subtype_check(&ctx, &t1, &Qualifier::fresh_only(), &t2).unwrap();
        assert!(ctx_subsumes(&ctx, &r.ctx));
        assert_eq!(r.ctx.len(), ctx.len());
    }
}
