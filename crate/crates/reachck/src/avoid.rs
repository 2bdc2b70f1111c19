//! Polarity-guided avoidance: rewriting an out-of-scope variable into the
//! outermost self-reference in covariant positions and deleting it from
//! contravariant ones. Occurrences under a `Ref` are invariant and admit
//! no sound rewrite, so they fail.

use crate::syntax::{
    display_name, occurs, Name, Obs, Polarity, QualType, Qualifier, Type,
};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AvoidFail {
    /// The variable occurs inside a reference referent.
    UnderRef(Name),
    /// The variable occurs but the type has no top-level self-reference.
    NoSelf(Name),
}

impl fmt::Display for AvoidFail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AvoidFail::UnderRef(x) => write!(
                f,
                "`{}` escapes inside a reference type and cannot be rewritten away",
                display_name(x)
            ),
            AvoidFail::NoSelf(x) => write!(
                f,
                "`{}` escapes and the type has no self-reference to absorb it",
                display_name(x)
            ),
        }
    }
}

/// Polarized substitution `T[r/±y]`. At the substituting polarity the
/// variable is replaced by `r` in qualifiers; at the opposite polarity it
/// is dropped.
pub fn polarized_subst(
    t: &Type,
    r: &Qualifier,
    y: &str,
    pol: Polarity,
) -> Result<Type, AvoidFail> {
    debug_assert!(matches!(pol, Polarity::Pos | Polarity::Neg));
    match t {
        Type::Base | Type::Top | Type::TVar(_) => Ok(t.clone()),
        Type::Ref(inner) => {
            if inner.qual.contains_var(y) || occurs(y, &inner.ty, Polarity::Any) {
                Err(AvoidFail::UnderRef(y.to_string()))
            } else {
                Ok(t.clone())
            }
        }
        Type::Fun(f) => {
            if y == f.self_name || y == f.arg {
                return Ok(t.clone());
            }
            let (dom, cod) = subst_fun_shape(&f.dom, &f.cod, r, y, pol)?;
            Ok(Type::fun(f.self_name.clone(), f.arg.clone(), dom, cod))
        }
        Type::All(a) => {
            if y == a.self_name || y == a.qvar {
                return Ok(t.clone());
            }
            let (bound, cod) = subst_fun_shape(&a.bound, &a.cod, r, y, pol)?;
            Ok(Type::all(
                a.self_name.clone(),
                a.tvar.clone(),
                a.qvar.clone(),
                bound,
                cod,
            ))
        }
    }
}

fn subst_fun_shape(
    dom: &QualType,
    cod: &QualType,
    r: &Qualifier,
    y: &str,
    pol: Polarity,
) -> Result<(QualType, QualType), AvoidFail> {
    let dom_ty = polarized_subst(&dom.ty, r, y, pol.flip())?;
    let cod_ty = polarized_subst(&cod.ty, r, y, pol)?;
    let (dom_qual, cod_qual) = match pol {
        Polarity::Pos => (dom.qual.without_var(y), cod.qual.subst(r, y)),
        Polarity::Neg => (dom.qual.subst(r, y), cod.qual.without_var(y)),
        Polarity::Any => unreachable!(),
    };
    Ok((QualType::new(dom_ty, dom_qual), QualType::new(cod_ty, cod_qual)))
}

/// Avoidance core: eliminates `z` from `T`, reporting the qualifier
/// increment the rewrite requires.
pub fn avoid_var(t: &Type, z: &str) -> Result<(Obs, Type), AvoidFail> {
    if !occurs(z, t, Polarity::Any) {
        return Ok((Obs::new(), t.clone()));
    }
    let self_name = match t {
        Type::Fun(f) => &f.self_name,
        Type::All(a) => &a.self_name,
        _ => return Err(AvoidFail::NoSelf(z.to_string())),
    };
    let rewritten = polarized_subst(t, &Qualifier::var(self_name.clone()), z, Polarity::Pos)?;
    Ok((std::iter::once(z.to_string()).collect(), rewritten))
}

/// Application avoidance: the wrapper the application rules invoke on the
/// instantiated codomain. The self pass runs only when the function
/// qualifier is fresh, the argument pass only when the argument qualifier
/// is; each successful pass adds its increment to the result qualifier.
pub fn avoid_app(
    fname: &str,
    fqual: &Qualifier,
    xname: &str,
    xqual: &Qualifier,
    cod: &QualType,
) -> Result<QualType, AvoidFail> {
    let (delta1, u) = if fqual.fresh {
        avoid_var(&cod.ty, fname)?
    } else {
        (Obs::new(), cod.ty.clone())
    };
    let (delta2, v) = if xqual.fresh {
        avoid_var(&u, xname)?
    } else {
        (Obs::new(), u)
    };
    let qual = cod.qual.union_vars(&delta1).union_vars(&delta2);
    Ok(QualType::new(v, qual))
}
