//! The three-mode bidirectional typer: inference, type checking with
//! qualifier synthesis, and full checking, plus algorithmic application
//! conformance and the top-level program driver.

use crate::avoid::{avoid_app, polarized_subst, AvoidFail};
use crate::front::pretty::{pretty_qual, pretty_qualtype, pretty_type};
use crate::qual::{qual_infer, UnifyFail};
use crate::stats;
use crate::subtype::{subtype_check, type_expose};
use crate::syntax::{
    fresh_name, occurs, overlap, qualtype_subst_tvar, qualtype_subst_var, saturate,
    type_subst_var, Context, Entry, Name, Obs, Polarity, QualType, Qualifier, Span, Term,
    TermKind, Type,
};
use crate::wf::{wf_qualtype, WfError};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiagCode {
    Syntax,
    Unbound,
    AnnotationIllFormed,
    ExposureMismatch,
    /// Freshly allocated or locally scoped data reaches a position that
    /// cannot name it.
    FreshEscape,
    ConformanceFailure,
    AvoidanceFailure,
    QualifierMismatch,
    SubtypeMismatch,
    CannotInfer,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::Syntax => "syntax",
            DiagCode::Unbound => "unbound",
            DiagCode::AnnotationIllFormed => "annotation-ill-formed",
            DiagCode::ExposureMismatch => "exposure-mismatch",
            DiagCode::FreshEscape => "fresh-escape",
            DiagCode::ConformanceFailure => "conformance-failure",
            DiagCode::AvoidanceFailure => "avoidance-failure",
            DiagCode::QualifierMismatch => "qualifier-mismatch",
            DiagCode::SubtypeMismatch => "subtype-mismatch",
            DiagCode::CannotInfer => "cannot-infer",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub message: String,
    pub span: Span,
    /// The typing or subtyping rule that failed.
    pub rule: &'static str,
    pub expected: Option<String>,
    pub actual: Option<String>,
}

impl Diagnostic {
    pub fn new(code: DiagCode, rule: &'static str, span: Span, message: impl Into<String>) -> Diagnostic {
        Diagnostic { code, message: message.into(), span, rule, expected: None, actual: None }
    }
    fn expected(mut self, s: String) -> Diagnostic {
        self.expected = Some(s);
        self
    }
    fn actual(mut self, s: String) -> Diagnostic {
        self.actual = Some(s);
        self
    }
    fn from_wf(e: WfError, rule: &'static str, span: Span) -> Diagnostic {
        Diagnostic::new(DiagCode::AnnotationIllFormed, rule, span, e.to_string())
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code.as_str(), self.message)?;
        if let Some(e) = &self.expected {
            write!(f, " (expected {e}")?;
            if let Some(a) = &self.actual {
                write!(f, ", got {a}")?;
            }
            write!(f, ")")?;
        } else if let Some(a) = &self.actual {
            write!(f, " (got {a})")?;
        }
        Ok(())
    }
}

/// Result of inference: the observation filter, the qualified type, and
/// the output context.
#[derive(Clone, Debug)]
pub struct Typed {
    pub filter: Obs,
    pub qt: QualType,
    pub ctx: Context,
}

fn unify_diag(e: UnifyFail, rule: &'static str, span: Span, expected: &Qualifier, actual: &Qualifier) -> Diagnostic {
    let code = match e {
        UnifyFail::ResidualFresh | UnifyFail::NoRule(_) => DiagCode::FreshEscape,
        UnifyFail::ResidualHole | UnifyFail::UnknownVar(_) => DiagCode::QualifierMismatch,
    };
    Diagnostic::new(code, rule, span, e.to_string())
        .expected(pretty_qual(expected))
        .actual(pretty_qual(actual))
}

fn strip_to_obs(q: &Qualifier, drop: &[&str]) -> Obs {
    q.vars
        .iter()
        .filter(|v| !drop.contains(&v.as_str()))
        .cloned()
        .collect()
}

fn obs_minus(mut obs: Obs, drop: &[&str]) -> Obs {
    for d in drop {
        obs.remove(*d);
    }
    obs
}

/// Inference mode: `Γ[φ] ⊢ t ⇒ Q ⊣ Γ'`.
pub fn infer(ctx: &Context, t: &Term) -> Result<Typed, Diagnostic> {
    let snap = stats::snapshot("infer", ctx);
    let out = infer_inner(ctx, t)?;
    snap.check(&out.ctx);
    debug_assert_eq!(out.ctx.len(), ctx.len(), "pushed entries must be popped");
    Ok(out)
}

fn infer_inner(ctx: &Context, t: &Term) -> Result<Typed, Diagnostic> {
    match &t.kind {
        TermKind::Unit => Ok(Typed {
            filter: Obs::new(),
            qt: QualType::unqualified(Type::Base),
            ctx: ctx.clone(),
        }),
        TermKind::Var(x) => {
            let Some((_, entry)) = ctx.lookup_term(x) else {
                return Err(Diagnostic::new(
                    DiagCode::Unbound,
                    "ti-var",
                    t.span,
                    format!("unbound variable `{}`", crate::syntax::display_name(x)),
                ));
            };
            let ty = match entry {
                Entry::Var { qt, .. } => qt.ty.clone(),
                Entry::SelfRef { .. } => Type::Top,
                Entry::TVar { .. } => unreachable!("lookup_term skips type entries"),
            };
            Ok(Typed {
                filter: std::iter::once(x.clone()).collect(),
                qt: QualType::new(ty, Qualifier::var(x.clone())),
                ctx: ctx.clone(),
            })
        }
        TermKind::RefAlloc(inner) => {
            let r = infer(ctx, inner)?;
            if r.qt.qual.fresh {
                return Err(Diagnostic::new(
                    DiagCode::FreshEscape,
                    "ti-ref",
                    t.span,
                    "a freshly allocated value cannot be stored in a reference without a name",
                )
                .actual(pretty_qual(&r.qt.qual)));
            }
            Ok(Typed {
                filter: r.filter,
                qt: QualType::new(Type::reference(r.qt), Qualifier::fresh_only()),
                ctx: r.ctx,
            })
        }
        TermKind::Deref(inner) => {
            let r = infer(ctx, inner)?;
            let exposed = type_expose(&r.ctx, &r.qt.ty);
            let Type::Ref(referent) = exposed else {
                return Err(Diagnostic::new(
                    DiagCode::ExposureMismatch,
                    "ti-get",
                    t.span,
                    "dereference of a non-reference",
                )
                .actual(pretty_type(&r.qt.ty)));
            };
            if referent.qual.fresh {
                return Err(Diagnostic::new(
                    DiagCode::FreshEscape,
                    "ti-get",
                    t.span,
                    "referent qualifier is fresh and cannot enter the observation",
                ));
            }
            let mut filter = r.filter;
            filter.extend(referent.qual.vars.iter().cloned());
            Ok(Typed { filter, qt: *referent, ctx: r.ctx })
        }
        TermKind::Assign(lhs, rhs) => {
            let r1 = infer(ctx, lhs)?;
            let exposed = type_expose(&r1.ctx, &r1.qt.ty);
            let Type::Ref(referent) = exposed else {
                return Err(Diagnostic::new(
                    DiagCode::ExposureMismatch,
                    "ti-put",
                    t.span,
                    "assignment to a non-reference",
                )
                .actual(pretty_type(&r1.qt.ty)));
            };
            let (phi2, ctx2) = check_full(&r1.ctx, rhs, &referent)?;
            let mut filter = r1.filter;
            filter.extend(phi2);
            Ok(Typed { filter, qt: QualType::unqualified(Type::Base), ctx: ctx2 })
        }
        TermKind::Abs { self_name, arg, ann: Some(dom), body } => {
            check_lambda_annotation(ctx, self_name, dom, t.span, "ti-abs")?;
            let (filter, fun_qual, cod, ctx_out) =
                infer_abs_body(ctx, self_name, arg, dom, body, t.span)?;
            Ok(Typed {
                filter,
                qt: QualType::new(
                    Type::fun(self_name.clone(), arg.clone(), dom.clone(), cod),
                    fun_qual,
                ),
                ctx: ctx_out,
            })
        }
        TermKind::Abs { ann: None, .. } => Err(Diagnostic::new(
            DiagCode::CannotInfer,
            "ti-abs",
            t.span,
            "cannot infer the type of an unannotated function; add an argument annotation or an expected type",
        )),
        TermKind::TAbs { self_name, tvar, qvar, bound, body } => {
            check_lambda_annotation(ctx, self_name, bound, t.span, "ti-tabs")?;
            let base = ctx.len();
            let mut c = ctx.clone();
            c.push_self(self_name.clone(), Qualifier::hole_only());
            c.push_tvar(tvar.clone(), qvar.clone(), bound.clone());
            let r = infer(&c, body)?;
            let cod_ty = apply_self_constraint(&r.qt.ty, self_name, t.span)?;
            let (hole, mut ctx_out) = pop_frame(r.ctx, base, self_name);
            ctx_out.truncate(base);
            let fun_qual = function_observation(
                &bound.qual,
                &r.qt.qual,
                &r.filter,
                &hole,
                &[self_name, qvar],
            );
            Ok(Typed {
                filter: fun_qual.vars.clone(),
                qt: QualType::new(
                    Type::all(
                        self_name.clone(),
                        tvar.clone(),
                        qvar.clone(),
                        bound.clone(),
                        QualType::new(cod_ty, r.qt.qual),
                    ),
                    fun_qual,
                ),
                ctx: ctx_out,
            })
        }
        TermKind::Let { name, rhs, body } => {
            // Argument first, then the enclosing abstraction at exactly
            // the inferred argument type.
            let r_rhs = infer(ctx, rhs)?;
            let p = r_rhs.qt.qual.clone();
            let rhs_qt = r_rhs.qt;
            let self_name = fresh_name("let");
            let (phi_lam, fun_qual, cod, ctx_out) =
                infer_abs_body(&r_rhs.ctx, &self_name, name, &rhs_qt, body, t.span)?;
            let avoided = avoid_app(&self_name, &fun_qual, name, &p, &cod)
                .map_err(|e| avoid_diag(e, "ti-let", t.span))?;
            let result = qualtype_subst_var(
                &qualtype_subst_var(&avoided, &p, name),
                &fun_qual,
                &self_name,
            );
            let mut filter = phi_lam;
            filter.extend(r_rhs.filter);
            filter.extend(strip_to_obs(&avoided.qual, &[self_name.as_str(), name.as_str()]));
            filter = obs_minus(filter, &[self_name.as_str(), name.as_str()]);
            Ok(Typed { filter, qt: result, ctx: ctx_out })
        }
        TermKind::App(fun, arg) => {
            let r1 = infer(ctx, fun)?;
            let q = r1.qt.qual.clone();
            let exposed = type_expose(&r1.ctx, &r1.qt.ty);
            let Type::Fun(ft) = exposed else {
                return Err(Diagnostic::new(
                    DiagCode::ExposureMismatch,
                    "ti-app",
                    t.span,
                    "application of a non-function",
                )
                .actual(pretty_type(&r1.qt.ty)));
            };
            if q.fresh && occurs(&ft.self_name, &ft.dom.ty, Polarity::Any) {
                return Err(Diagnostic::new(
                    DiagCode::FreshEscape,
                    "ti-app",
                    t.span,
                    "a fresh function whose domain mentions its self-reference cannot be applied",
                ));
            }
            let dom_ty = type_subst_var(&ft.dom.ty, &q, &ft.self_name);
            let (phi2, s, ctx2) = check_infer_qual(&r1.ctx, arg, &dom_ty)?;
            let (phi3, ctx3) =
                conformance(&ctx2, &ft.self_name, &q, &s, &ft.dom.qual, arg.span)?;
            let avoided = avoid_app(&ft.self_name, &q, &ft.arg, &s, &ft.cod)
                .map_err(|e| avoid_diag(e, "ti-app", t.span))?;
            let result = qualtype_subst_var(
                &qualtype_subst_var(&avoided, &s, &ft.arg),
                &q,
                &ft.self_name,
            );
            let mut filter = r1.filter;
            filter.extend(phi2);
            filter.extend(phi3);
            filter.extend(strip_to_obs(&avoided.qual, &[ft.self_name.as_str(), ft.arg.as_str()]));
            filter = obs_minus(filter, &[ft.self_name.as_str(), ft.arg.as_str()]);
            Ok(Typed { filter, qt: result, ctx: ctx3 })
        }
        TermKind::TApp(fun, targ) => {
            let r1 = infer(ctx, fun)?;
            let q = r1.qt.qual.clone();
            wf_qualtype(&r1.ctx, targ)
                .map_err(|e| Diagnostic::from_wf(e, "ti-tapp", t.span))?;
            let exposed = type_expose(&r1.ctx, &r1.qt.ty);
            let Type::All(at) = exposed else {
                return Err(Diagnostic::new(
                    DiagCode::ExposureMismatch,
                    "ti-tapp",
                    t.span,
                    "type application of a non-universal",
                )
                .actual(pretty_type(&r1.qt.ty)));
            };
            if q.fresh && occurs(&at.self_name, &at.bound.ty, Polarity::Any) {
                return Err(Diagnostic::new(
                    DiagCode::FreshEscape,
                    "ti-tapp",
                    t.span,
                    "a fresh universal whose bound mentions its self-reference cannot be instantiated",
                ));
            }
            let bound_ty = type_subst_var(&at.bound.ty, &q, &at.self_name);
            let sub = subtype_check(&r1.ctx, &targ.ty, &Qualifier::fresh_only(), &bound_ty)
                .map_err(|e| {
                    Diagnostic::new(
                        DiagCode::SubtypeMismatch,
                        "ti-tapp",
                        t.span,
                        format!("type argument does not satisfy the bound: {e}"),
                    )
                    .expected(pretty_type(&bound_ty))
                    .actual(pretty_type(&targ.ty))
                })?;
            if !sub.delta.is_empty() {
                return Err(Diagnostic::new(
                    DiagCode::SubtypeMismatch,
                    "ti-tapp",
                    t.span,
                    "bound conversion required additional reachability",
                ));
            }
            let (phi2, ctx3) =
                conformance(&sub.ctx, &at.self_name, &q, &targ.qual, &at.bound.qual, t.span)?;
            let avoided = avoid_app(&at.self_name, &q, &at.qvar, &targ.qual, &at.cod)
                .map_err(|e| avoid_diag(e, "ti-tapp", t.span))?;
            let result = qualtype_subst_var(
                &qualtype_subst_tvar(&avoided, &targ.ty, &targ.qual, &at.tvar, &at.qvar),
                &q,
                &at.self_name,
            );
            let mut filter = r1.filter;
            filter.extend(phi2);
            let mut s_and_r = strip_to_obs(&targ.qual, &[at.self_name.as_str(), at.qvar.as_str()]);
            s_and_r.extend(strip_to_obs(&avoided.qual, &[at.self_name.as_str(), at.qvar.as_str()]));
            filter.extend(s_and_r);
            filter = obs_minus(filter, &[at.self_name.as_str(), at.qvar.as_str()]);
            Ok(Typed { filter, qt: result, ctx: ctx3 })
        }
        TermKind::Ascribe(inner, qt) => {
            wf_qualtype(ctx, qt).map_err(|e| Diagnostic::from_wf(e, "ti-as", t.span))?;
            let (filter, ctx_out) = check_full(ctx, inner, qt)?;
            Ok(Typed { filter, qt: qt.clone(), ctx: ctx_out })
        }
    }
}

/// The annotation constraints shared by term and type abstraction: the
/// annotation is well-formed under the self entry, the self-reference
/// does not occur positively in it, and its presence in the qualifier
/// requires freshness.
fn check_lambda_annotation(
    ctx: &Context,
    self_name: &Name,
    ann: &QualType,
    span: Span,
    rule: &'static str,
) -> Result<(), Diagnostic> {
    let mut c = ctx.clone();
    c.push_self(self_name.clone(), Qualifier::fresh_only());
    wf_qualtype(&c, ann).map_err(|e| Diagnostic::from_wf(e, rule, span))?;
    if occurs(self_name, &ann.ty, Polarity::Pos) {
        return Err(Diagnostic::new(
            DiagCode::AnnotationIllFormed,
            rule,
            span,
            "the self-reference occurs positively in the argument annotation",
        ));
    }
    if ann.qual.contains_var(self_name) && !ann.qual.fresh {
        return Err(Diagnostic::new(
            DiagCode::AnnotationIllFormed,
            rule,
            span,
            "a self-reference in an argument qualifier requires the freshness marker",
        ));
    }
    Ok(())
}

/// Enforces the self-occurrence constraints on an inferred result type by
/// polarized substitution of the self-reference for itself, which keeps
/// covariant occurrences and deletes contravariant ones.
fn apply_self_constraint(ty: &Type, self_name: &Name, span: Span) -> Result<Type, Diagnostic> {
    polarized_subst(ty, &Qualifier::var(self_name.clone()), self_name, Polarity::Pos).map_err(
        |_| {
            Diagnostic::new(
                DiagCode::AvoidanceFailure,
                "ti-abs",
                span,
                "the function's captured resources appear in an invariant position of its result type",
            )
        },
    )
}

/// Shared body of annotated-lambda inference and of the implicit lambda
/// in a let: pushes the holed self entry and the argument, infers the
/// body, applies the self constraint, and pops the frame.
/// Returns (filter, function qualifier, codomain, output context).
fn infer_abs_body(
    ctx: &Context,
    self_name: &Name,
    arg: &Name,
    dom: &QualType,
    body: &Term,
    span: Span,
) -> Result<(Obs, Qualifier, QualType, Context), Diagnostic> {
    let base = ctx.len();
    let mut c = ctx.clone();
    c.push_self(self_name.clone(), Qualifier::hole_only());
    c.push_var(arg.clone(), dom.clone());
    let r = infer(&c, body)?;
    let cod_ty = apply_self_constraint(&r.qt.ty, self_name, span)?;
    let (hole, mut ctx_out) = pop_frame(r.ctx, base, self_name);
    ctx_out.truncate(base);
    let fun_qual = function_observation(
        &dom.qual,
        &r.qt.qual,
        &r.filter,
        &hole,
        &[self_name, arg],
    );
    Ok((
        fun_qual.vars.clone(),
        fun_qual,
        QualType::new(cod_ty, r.qt.qual),
        ctx_out,
    ))
}

/// Reads the self entry's accumulated hole contents at `base`.
fn pop_frame(ctx: Context, base: usize, self_name: &Name) -> (Obs, Context) {
    let hole = match ctx.entry(base) {
        Entry::SelfRef { name, qual } => {
            debug_assert_eq!(name, self_name);
            qual.vars.clone()
        }
        e => panic!("expected the pushed self entry at {base}, found {e:?}"),
    };
    (hole, ctx)
}

/// `r := (p, q, φ, hole) ∖ {♦, f, x}` — the inferred function
/// observation, folding the popped hole into it.
fn function_observation(
    p: &Qualifier,
    q: &Qualifier,
    phi: &Obs,
    hole: &Obs,
    drop: &[&Name],
) -> Qualifier {
    let mut vars: Obs = p.vars.clone();
    vars.extend(q.vars.iter().cloned());
    vars.extend(phi.iter().cloned());
    vars.extend(hole.iter().cloned());
    for d in drop {
        vars.remove(*d);
    }
    Qualifier { vars, fresh: false, hole: false }
}

fn avoid_diag(e: AvoidFail, rule: &'static str, span: Span) -> Diagnostic {
    Diagnostic::new(DiagCode::AvoidanceFailure, rule, span, e.to_string())
}

/// Checking mode with qualifier synthesis: `Γ[φ] ⊢ t ⇐ T ⇒ q ⊣ Γ'`.
pub fn check_infer_qual(
    ctx: &Context,
    t: &Term,
    expected: &Type,
) -> Result<(Obs, Qualifier, Context), Diagnostic> {
    let snap = stats::snapshot("check_infer_qual", ctx);
    let out = check_infer_qual_inner(ctx, t, expected)?;
    snap.check(&out.2);
    Ok(out)
}

fn check_infer_qual_inner(
    ctx: &Context,
    t: &Term,
    expected: &Type,
) -> Result<(Obs, Qualifier, Context), Diagnostic> {
    match (&t.kind, expected) {
        // tc-ref: peel the reference, synthesize freshness.
        (TermKind::RefAlloc(inner), Type::Ref(referent)) => {
            let (phi, ctx_out) = check_full(ctx, inner, referent)?;
            Ok((phi, Qualifier::fresh_only(), ctx_out))
        }
        // tc-abs: unannotated lambda against a function type.
        (TermKind::Abs { self_name, arg, ann: None, body }, Type::Fun(ft)) => {
            // Rewrite the type-side binders to the term's names.
            let dom = qualtype_subst_var(&ft.dom, &Qualifier::var(self_name.clone()), &ft.self_name);
            let cod = qualtype_subst_var(&ft.cod, &Qualifier::var(self_name.clone()), &ft.self_name);
            let cod = qualtype_subst_var(&cod, &Qualifier::var(arg.clone()), &ft.arg);
            let base = ctx.len();
            let mut c = ctx.clone();
            c.push_self(self_name.clone(), Qualifier::hole_only());
            c.push_var(arg.clone(), dom.clone());
            let (phi, ctx1) = check_full(&c, body, &cod)?;
            let (hole, mut ctx_out) = pop_frame(ctx1, base, self_name);
            ctx_out.truncate(base);
            let r = function_observation(&dom.qual, &cod.qual, &phi, &hole, &[self_name, arg]);
            Ok((r.vars.clone(), r, ctx_out))
        }
        // tc-sub: infer, then convert.
        _ => {
            let r = infer(ctx, t)?;
            let sub = subtype_check(&r.ctx, &r.qt.ty, &r.qt.qual, expected).map_err(|e| {
                Diagnostic::new(
                    DiagCode::SubtypeMismatch,
                    "tc-sub",
                    t.span,
                    e.to_string(),
                )
                .expected(pretty_type(expected))
                .actual(pretty_qualtype(&r.qt))
            })?;
            let mut synthesized = r.qt.qual.clone();
            synthesized.vars.extend(sub.delta.iter().cloned());
            let mut filter = r.filter;
            filter.extend(sub.delta.iter().cloned());
            filter.extend(r.qt.qual.vars.iter().cloned());
            Ok((filter, synthesized, sub.ctx))
        }
    }
}

/// Full checking mode: `Γ[φ] ⊢ t ⇐ T^q ⊣ Γ'`.
pub fn check_full(ctx: &Context, t: &Term, expected: &QualType) -> Result<(Obs, Context), Diagnostic> {
    let snap = stats::snapshot("check_full", ctx);
    let (mut phi, synthesized, ctx1) = check_infer_qual(ctx, t, &expected.ty)?;
    let ctx2 = qual_infer(&ctx1, &synthesized, &expected.qual)
        .map_err(|e| unify_diag(e, "tq-sub", t.span, &expected.qual, &synthesized))?;
    phi.extend(expected.qual.vars.iter().cloned());
    snap.check(&ctx2);
    Ok((phi, ctx2))
}

/// Algorithmic application conformance: the three rules are tried in
/// order and the first success wins.
pub fn conformance(
    ctx: &Context,
    fname: &Name,
    fqual: &Qualifier,
    argqual: &Qualifier,
    domqual: &Qualifier,
    span: Span,
) -> Result<(Obs, Context), Diagnostic> {
    // fa-wild: the domain accepts arbitrary arguments.
    if domqual.fresh && domqual.contains_var(fname) {
        return Ok((Obs::new(), ctx.clone()));
    }
    // fa-sub: the argument is bounded by the domain qualifier.
    if let Ok(ctx2) = qual_infer(ctx, argqual, domqual) {
        return Ok((Obs::new(), ctx2));
    }
    // fa-fresh: a fresh domain tolerates overlap up to its named part.
    if domqual.fresh {
        let core = |e: crate::syntax::CoreError| {
            Diagnostic::new(DiagCode::ConformanceFailure, "fa-fresh", span, e.to_string())
        };
        let sat_s = saturate(ctx, argqual).map_err(core)?;
        let sat_q = saturate(ctx, fqual).map_err(core)?;
        if sat_s.hole_seen || sat_q.hole_seen {
            return Err(Diagnostic::new(
                DiagCode::ConformanceFailure,
                "fa-fresh",
                span,
                "overlap involves unresolved qualifier holes",
            ));
        }
        let ov = overlap(ctx, argqual, fqual).map_err(core)?;
        match qual_infer(ctx, &ov, domqual) {
            Ok(ctx2) => return Ok((ov.vars, ctx2)),
            Err(_) => {
                return Err(Diagnostic::new(
                    DiagCode::ConformanceFailure,
                    "fa-fresh",
                    span,
                    format!(
                        "argument overlaps the function beyond the permitted region: overlap {}",
                        pretty_qual(&ov)
                    ),
                )
                .expected(pretty_qual(domqual))
                .actual(pretty_qual(argqual)));
            }
        }
    }
    Err(Diagnostic::new(
        DiagCode::ConformanceFailure,
        "fa-sub",
        span,
        "argument qualifier does not conform to the domain",
    )
    .expected(pretty_qual(domqual))
    .actual(pretty_qual(argqual)))
}

// ---------------------------------------------------------------------------
// Program driver

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeclKind {
    Val,
    Def,
    Expr,
    Assume,
}

#[derive(Clone, Debug)]
pub struct Decl {
    pub kind: DeclKind,
    pub name: Option<Name>,
    /// For `Assume`, the declared type; otherwise absent.
    pub assumed: Option<QualType>,
    /// For everything else, the right-hand side.
    pub term: Option<Term>,
    pub span: Span,
    pub prelude: bool,
}

#[derive(Clone, Debug)]
pub struct DeclRow {
    pub name: Name,
    pub qt: QualType,
    pub filter: Obs,
    pub prelude: bool,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub struct ProgramReport {
    pub rows: Vec<DeclRow>,
    pub diagnostic: Option<Diagnostic>,
    /// The type of the whole program folded through the let nest; only
    /// present when checking succeeded.
    pub final_qt: Option<QualType>,
}

impl ProgramReport {
    pub fn ok(&self) -> bool {
        self.diagnostic.is_none()
    }
}

enum Frame {
    Let { self_name: Name, arg: Name, arg_qual: Qualifier, rhs_filter: Obs },
    Assume { name: Name, qual: Qualifier },
}

/// Desugars the declaration sequence into a nested let term, checks it
/// incrementally under the empty context, and reports per-declaration
/// results or the first diagnostic.
pub fn typecheck_program(decls: &[Decl]) -> ProgramReport {
    let mut rows = Vec::new();
    let mut ctx = Context::new();
    let mut frames: Vec<Frame> = Vec::new();

    for decl in decls {
        match decl.kind {
            DeclKind::Assume => {
                let name = decl.name.clone().expect("assume binds a name");
                let qt = decl.assumed.clone().expect("assume carries a type");
                if let Err(e) = wf_qualtype(&ctx, &qt) {
                    return ProgramReport {
                        rows,
                        diagnostic: Some(Diagnostic::from_wf(e, "assume", decl.span)),
                        final_qt: None,
                    };
                }
                rows.push(DeclRow {
                    name: name.clone(),
                    qt: qt.clone(),
                    filter: Obs::new(),
                    prelude: decl.prelude,
                    span: decl.span,
                });
                frames.push(Frame::Assume { name: name.clone(), qual: qt.qual.clone() });
                ctx.push_var(name, qt);
            }
            DeclKind::Val | DeclKind::Def | DeclKind::Expr => {
                let term = decl.term.as_ref().expect("value declaration carries a term");
                let r = match infer(&ctx, term) {
                    Ok(r) => r,
                    Err(d) => {
                        return ProgramReport { rows, diagnostic: Some(d), final_qt: None }
                    }
                };
                debug_assert!(
                    !has_holes(&r.qt),
                    "inference must not leave holes in a result type"
                );
                let name = decl
                    .name
                    .clone()
                    .unwrap_or_else(|| fresh_name("it"));
                rows.push(DeclRow {
                    name: name.clone(),
                    qt: r.qt.clone(),
                    filter: r.filter.clone(),
                    prelude: decl.prelude,
                    span: decl.span,
                });
                let self_name = fresh_name("top");
                ctx = r.ctx;
                ctx.push_self(self_name.clone(), Qualifier::hole_only());
                ctx.push_var(name.clone(), r.qt.clone());
                frames.push(Frame::Let {
                    self_name,
                    arg: name,
                    arg_qual: r.qt.qual,
                    rhs_filter: r.filter,
                });
            }
        }
    }

    // Fold the implicit unit body back out through the let nest. Each
    // frame pops its entries and substitutes the binding away, exactly as
    // the let rule does.
    let mut result = QualType::unqualified(Type::Base);
    let mut filter = Obs::new();
    while let Some(frame) = frames.pop() {
        match frame {
            Frame::Assume { name, qual } => {
                ctx.pop();
                if qual.fresh && occurs(&name, &result.ty, Polarity::Any) {
                    match crate::avoid::avoid_var(&result.ty, &name) {
                        Ok((delta, ty)) => {
                            result = QualType::new(ty, result.qual.union_vars(&delta));
                        }
                        Err(e) => {
                            return ProgramReport {
                                rows,
                                diagnostic: Some(avoid_diag(e, "ti-let", Span::default())),
                                final_qt: None,
                            };
                        }
                    }
                }
                result = qualtype_subst_var(&result, &qual, &name);
                filter.remove(&name);
            }
            Frame::Let { self_name, arg, arg_qual, rhs_filter } => {
                ctx.pop();
                let (hole, _) = pop_frame(ctx.clone(), ctx.len() - 1, &self_name);
                ctx.pop();
                let fun_qual = function_observation(
                    &arg_qual,
                    &result.qual,
                    &filter,
                    &hole,
                    &[&self_name, &arg],
                );
                let avoided = match avoid_app(&self_name, &fun_qual, &arg, &arg_qual, &result) {
                    Ok(v) => v,
                    Err(e) => {
                        return ProgramReport {
                            rows,
                            diagnostic: Some(avoid_diag(e, "ti-let", Span::default())),
                            final_qt: None,
                        };
                    }
                };
                result = qualtype_subst_var(
                    &qualtype_subst_var(&avoided, &arg_qual, &arg),
                    &fun_qual,
                    &self_name,
                );
                let mut phi = fun_qual.vars.clone();
                phi.extend(rhs_filter);
                phi.extend(strip_to_obs(&avoided.qual, &[self_name.as_str(), arg.as_str()]));
                filter = obs_minus(phi, &[self_name.as_str(), arg.as_str()]);
            }
        }
    }
    debug_assert!(ctx.is_empty());
    debug_assert!(!has_holes(&result) && !result.qual.hole);

    ProgramReport { rows, diagnostic: None, final_qt: Some(result) }
}

fn has_holes(qt: &QualType) -> bool {
    fn ty(t: &Type) -> bool {
        match t {
            Type::Base | Type::Top | Type::TVar(_) => false,
            Type::Ref(inner) => inner.qual.hole || ty(&inner.ty),
            Type::Fun(f) => {
                f.dom.qual.hole || f.cod.qual.hole || ty(&f.dom.ty) || ty(&f.cod.ty)
            }
            Type::All(a) => {
                a.bound.qual.hole || a.cod.qual.hole || ty(&a.bound.ty) || ty(&a.cod.ty)
            }
        }
    }
    qt.qual.hole || ty(&qt.ty)
}
