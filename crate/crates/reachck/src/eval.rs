//! Big-step interpreter with an append-only store and a dynamic
//! reachability auditor. The audit approximates the semantic soundness
//! statement at desk scale: checker-accepted programs must not get stuck,
//! results may reach only locations the checked qualifier describes, and
//! writes stay within the observation filter's denotation.

use crate::infer::ProgramReport;
use crate::syntax::{display_name, Name, Obs, Qualifier, Term, TermKind};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

pub type Loc = usize;

#[derive(Clone, Debug)]
pub enum Value {
    Unit,
    Loc(Loc),
    Closure(Rc<Closure>),
    TypeClosure(Rc<TypeClosure>),
    /// Runtime stand-in for an assumed combinator without a body.
    Native(Name, usize),
}

#[derive(Debug)]
pub struct Closure {
    pub env: Env,
    pub self_name: Name,
    pub arg: Name,
    pub body: Term,
}

#[derive(Debug)]
pub struct TypeClosure {
    pub env: Env,
    pub self_name: Name,
    pub body: Term,
}

pub type Env = BTreeMap<Name, Value>;

/// Append-only store: locations are never removed, assignment replaces
/// the cell contents in place.
#[derive(Clone, Debug, Default)]
pub struct Store {
    pub cells: Vec<Value>,
}

impl Store {
    pub fn alloc(&mut self, v: Value) -> Loc {
        self.cells.push(v);
        self.cells.len() - 1
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditTrace {
    pub fresh_locs: BTreeSet<Loc>,
    pub reads: BTreeSet<Loc>,
    pub writes: BTreeSet<Loc>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalError {
    Stuck(String),
    OutOfFuel,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Stuck(msg) => write!(f, "stuck: {msg}"),
            EvalError::OutOfFuel => write!(f, "out of fuel"),
        }
    }
}

fn restrict_env(env: &Env, body: &Term, keep: &[&Name]) -> Env {
    let free = body.free_vars();
    env.iter()
        .filter(|(k, _)| free.contains(*k) && !keep.contains(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

/// Call-by-value big-step evaluation. Ascriptions and annotations erase;
/// fuel is decremented once per visited node.
pub fn evaluate(
    env: &Env,
    store: &mut Store,
    trace: &mut AuditTrace,
    t: &Term,
    fuel: &mut u64,
) -> Result<Value, EvalError> {
    if *fuel == 0 {
        return Err(EvalError::OutOfFuel);
    }
    *fuel -= 1;
    match &t.kind {
        TermKind::Unit => Ok(Value::Unit),
        TermKind::Var(x) => env
            .get(x)
            .cloned()
            .ok_or_else(|| EvalError::Stuck(format!("unbound variable `{}`", display_name(x)))),
        TermKind::RefAlloc(inner) => {
            let v = evaluate(env, store, trace, inner, fuel)?;
            let l = store.alloc(v);
            trace.fresh_locs.insert(l);
            Ok(Value::Loc(l))
        }
        TermKind::Deref(inner) => {
            let v = evaluate(env, store, trace, inner, fuel)?;
            let Value::Loc(l) = v else {
                return Err(EvalError::Stuck("dereference of a non-location".into()));
            };
            trace.reads.insert(l);
            Ok(store.cells[l].clone())
        }
        TermKind::Assign(lhs, rhs) => {
            let vl = evaluate(env, store, trace, lhs, fuel)?;
            let Value::Loc(l) = vl else {
                return Err(EvalError::Stuck("assignment to a non-location".into()));
            };
            let vr = evaluate(env, store, trace, rhs, fuel)?;
            trace.writes.insert(l);
            store.cells[l] = vr;
            Ok(Value::Unit)
        }
        TermKind::Abs { self_name, arg, body, .. } => Ok(Value::Closure(Rc::new(Closure {
            env: restrict_env(env, body, &[self_name, arg]),
            self_name: self_name.clone(),
            arg: arg.clone(),
            body: (**body).clone(),
        }))),
        TermKind::TAbs { self_name, body, .. } => {
            Ok(Value::TypeClosure(Rc::new(TypeClosure {
                env: restrict_env(env, body, &[self_name]),
                self_name: self_name.clone(),
                body: (**body).clone(),
            })))
        }
        TermKind::App(fun, arg) => {
            let vf = evaluate(env, store, trace, fun, fuel)?;
            let va = evaluate(env, store, trace, arg, fuel)?;
            apply(vf, va, store, trace, fuel)
        }
        TermKind::TApp(fun, _) => {
            let vf = evaluate(env, store, trace, fun, fuel)?;
            match vf {
                Value::TypeClosure(tc) => {
                    let mut env2 = tc.env.clone();
                    env2.insert(tc.self_name.clone(), Value::TypeClosure(tc.clone()));
                    evaluate(&env2, store, trace, &tc.body, fuel)
                }
                Value::Native(name, args) => Ok(Value::Native(name, args)),
                _ => Err(EvalError::Stuck("type application of a non-type-closure".into())),
            }
        }
        TermKind::Ascribe(inner, _) => evaluate(env, store, trace, inner, fuel),
        TermKind::Let { name, rhs, body } => {
            let v = evaluate(env, store, trace, rhs, fuel)?;
            let mut env2 = env.clone();
            env2.insert(name.clone(), v);
            evaluate(&env2, store, trace, body, fuel)
        }
    }
}

fn apply(
    vf: Value,
    va: Value,
    store: &mut Store,
    trace: &mut AuditTrace,
    fuel: &mut u64,
) -> Result<Value, EvalError> {
    match vf {
        Value::Closure(c) => {
            let mut env2 = c.env.clone();
            env2.insert(c.self_name.clone(), Value::Closure(c.clone()));
            env2.insert(c.arg.clone(), va);
            evaluate(&env2, store, trace, &c.body, fuel)
        }
        Value::Native(name, args) => native_apply(&name, args + 1),
        _ => Err(EvalError::Stuck("application of a non-closure".into())),
    }
}

/// Semantics of assumed combinators. The only bodiless combinator the
/// bundled prelude assumes is `throw`, which discards the capability and
/// returns unit.
fn native_apply(name: &str, args: usize) -> Result<Value, EvalError> {
    match (display_name(name), args) {
        ("throw", 1) => Ok(Value::Unit),
        _ => Err(EvalError::Stuck(format!(
            "assumed combinator `{}` applied to {} arguments has no semantics",
            display_name(name),
            args
        ))),
    }
}

/// Shallow reachability: a location reaches itself only; closures reach
/// the union over their captured environment.
pub fn reachable_locs(v: &Value) -> BTreeSet<Loc> {
    match v {
        Value::Unit | Value::Native(..) => BTreeSet::new(),
        Value::Loc(l) => std::iter::once(*l).collect(),
        Value::Closure(c) => c.env.values().flat_map(reachable_locs).collect(),
        Value::TypeClosure(c) => c.env.values().flat_map(reachable_locs).collect(),
    }
}

/// Per-declaration audit outcome.
#[derive(Clone, Debug)]
pub struct DeclAudit {
    pub name: Name,
    /// Clause (a): evaluation completed without getting stuck.
    pub not_stuck: bool,
    /// Clause (b): the result reaches only locations described by the
    /// checked qualifier (plus fresh allocations when it carries the
    /// freshness marker).
    pub value_reach_ok: bool,
    /// Clause (c): writes stay within the filter's denotation plus fresh
    /// allocations.
    pub writes_ok: bool,
    pub detail: Option<String>,
}

impl DeclAudit {
    pub fn ok(&self) -> bool {
        self.not_stuck && self.value_reach_ok && self.writes_ok
    }
}

#[derive(Clone, Debug)]
pub enum AuditOutcome {
    Passed(Vec<DeclAudit>),
    OutOfFuel,
    /// The program was not accepted by the checker, so there is nothing
    /// to audit.
    NotChecked,
    Violations(Vec<DeclAudit>),
}

/// The declarations as terms, in program order, paired with the bindings'
/// names. Assumed combinators get native stand-ins.
pub struct RunnableProgram<'a> {
    pub decls: Vec<(Name, Option<&'a Term>)>,
}

/// Evaluates a checker-accepted program declaration by declaration,
/// auditing each result against its checked qualifier and filter.
pub fn dynamic_check(
    program: &RunnableProgram<'_>,
    report: &ProgramReport,
    fuel: u64,
) -> AuditOutcome {
    if !report.ok() {
        return AuditOutcome::NotChecked;
    }
    let mut env = Env::new();
    let mut store = Store::default();
    let mut trace = AuditTrace::default();
    let mut fuel = fuel;
    let mut audits = Vec::new();
    let mut all_ok = true;

    for ((name, term), row) in program.decls.iter().zip(&report.rows) {
        debug_assert_eq!(name, &row.name);
        let Some(term) = term else {
            // Assumed combinator: bind the native stand-in.
            env.insert(name.clone(), Value::Native(name.clone(), 0));
            continue;
        };
        let before = trace.clone();
        let v = match evaluate(&env, &mut store, &mut trace, term, &mut fuel) {
            Ok(v) => v,
            Err(EvalError::OutOfFuel) => return AuditOutcome::OutOfFuel,
            Err(EvalError::Stuck(msg)) => {
                audits.push(DeclAudit {
                    name: name.clone(),
                    not_stuck: false,
                    value_reach_ok: false,
                    writes_ok: false,
                    detail: Some(msg),
                });
                return AuditOutcome::Violations(audits);
            }
        };
        let fresh_here: BTreeSet<Loc> =
            trace.fresh_locs.difference(&before.fresh_locs).copied().collect();
        let writes_here: BTreeSet<Loc> =
            trace.writes.difference(&before.writes).copied().collect();

        let audit = audit_decl(name, &v, &row.qt.qual, &row.filter, &env, &fresh_here, &writes_here);
        all_ok &= audit.ok();
        audits.push(audit);
        env.insert(name.clone(), v);
    }

    if all_ok {
        AuditOutcome::Passed(audits)
    } else {
        AuditOutcome::Violations(audits)
    }
}

/// Audits one declaration result; exposed separately so negative-control
/// fixtures can inject a wrong qualifier.
pub fn audit_decl(
    name: &str,
    value: &Value,
    qual: &Qualifier,
    filter: &Obs,
    env: &Env,
    fresh_here: &BTreeSet<Loc>,
    writes_here: &BTreeSet<Loc>,
) -> DeclAudit {
    let denote = |vars: &BTreeSet<Name>| -> BTreeSet<Loc> {
        vars.iter()
            .filter_map(|x| env.get(x))
            .flat_map(reachable_locs)
            .collect()
    };

    let mut allowed = denote(&qual.vars);
    if qual.fresh {
        allowed.extend(fresh_here.iter().copied());
    }
    let reached = reachable_locs(value);
    let value_reach_ok = reached.is_subset(&allowed);

    let mut writable = denote(filter);
    writable.extend(fresh_here.iter().copied());
    let writes_ok = writes_here.is_subset(&writable);

    let detail = if value_reach_ok && writes_ok {
        None
    } else {
        Some(format!(
            "reached {:?} allowed {:?}; wrote {:?} writable {:?}",
            reached, allowed, writes_here, writable
        ))
    };
    DeclAudit { name: name.to_string(), not_stuck: true, value_reach_ok, writes_ok, detail }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::Term;

    fn run(t: &Term) -> (Value, Store, AuditTrace) {
        let mut store = Store::default();
        let mut trace = AuditTrace::default();
        let mut fuel = 1_000_000;
        let v = evaluate(&Env::new(), &mut store, &mut trace, t, &mut fuel).unwrap();
        (v, store, trace)
    }

    #[test]
    fn unit_evaluates() {
        let (v, store, _) = run(&Term::unit());
        assert!(matches!(v, Value::Unit));
        assert!(store.cells.is_empty());
    }

    #[test]
    fn let_ref_deref() {
        // val x = ref unit; !x
        let t = Term::let_in("x", Term::alloc(Term::unit()), Term::deref(Term::var("x")));
        let (v, store, trace) = run(&t);
        assert!(matches!(v, Value::Unit));
        assert_eq!(store.cells.len(), 1);
        assert_eq!(trace.reads, std::iter::once(0).collect());
        assert_eq!(trace.fresh_locs, std::iter::once(0).collect());
    }

    #[test]
    fn closure_captures_location() {
        // val x = ref unit; \g(u) => x — the closure reaches location 0.
        let lam = Term::abs("g", "u", None, Term::var("x"));
        let t = Term::let_in("x", Term::alloc(Term::unit()), lam);
        let (v, _, trace) = run(&t);
        assert_eq!(reachable_locs(&v), std::iter::once(0).collect());
        assert_eq!(trace.fresh_locs, std::iter::once(0).collect());
    }

    #[test]
    fn assignment_writes_and_returns_unit() {
        let t = Term::let_in(
            "x",
            Term::alloc(Term::unit()),
            Term::assign(Term::var("x"), Term::unit()),
        );
        let (v, _, trace) = run(&t);
        assert!(matches!(v, Value::Unit));
        assert_eq!(trace.writes, std::iter::once(0).collect());
    }

    #[test]
    fn stuck_on_bad_deref() {
        let mut store = Store::default();
        let mut trace = AuditTrace::default();
        let mut fuel = 100;
        let err =
            evaluate(&Env::new(), &mut store, &mut trace, &Term::deref(Term::unit()), &mut fuel)
                .unwrap_err();
        assert!(matches!(err, EvalError::Stuck(_)));
    }

    #[test]
    fn out_of_fuel_reported() {
        let mut store = Store::default();
        let mut trace = AuditTrace::default();
        let mut fuel = 0;
        let err = evaluate(&Env::new(), &mut store, &mut trace, &Term::unit(), &mut fuel)
            .unwrap_err();
        assert_eq!(err, EvalError::OutOfFuel);
    }

    #[test]
    fn determinism() {
        let t = Term::let_in(
            "x",
            Term::alloc(Term::unit()),
            Term::let_in(
                "y",
                Term::alloc(Term::var("x")),
                Term::deref(Term::deref(Term::var("y"))),
            ),
        );
        let (v1, s1, t1) = run(&t);
        let (v2, s2, t2) = run(&t);
        assert_eq!(format!("{v1:?}"), format!("{v2:?}"));
        assert_eq!(s1.cells.len(), s2.cells.len());
        assert_eq!(t1, t2);
    }

    #[test]
    fn shallow_reachability_of_nested_ref() {
        // y = ref (ref unit): y reaches only the outer location.
        let t = Term::alloc(Term::alloc(Term::unit()));
        let (v, _, _) = run(&t);
        assert_eq!(reachable_locs(&v), std::iter::once(1).collect());
    }

    #[test]
    fn negative_control_wrong_qualifier_fails_audit() {
        let (v, _, trace) = run(&Term::alloc(Term::unit()));
        // Correct qualifier {♦} passes clause (b).
        let env = Env::new();
        let ok = audit_decl(
            "it",
            &v,
            &Qualifier::fresh_only(),
            &Obs::new(),
            &env,
            &trace.fresh_locs,
            &trace.writes,
        );
        assert!(ok.value_reach_ok);
        // Injected empty qualifier must fail clause (b).
        let bad = audit_decl(
            "it",
            &v,
            &Qualifier::empty(),
            &Obs::new(),
            &env,
            &trace.fresh_locs,
            &trace.writes,
        );
        assert!(!bad.value_reach_ok);
    }
}
