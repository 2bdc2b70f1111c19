//! Per-run statistics and optional deep instrumentation.
//!
//! The counters echo the numbers the CLI reports with `--trace`: how many
//! hole instantiations unification performed and how many qualifier
//! inferences ran. The audit switch additionally checks, on every checker
//! operation, that the output context subsumes the input and records any
//! violation instead of panicking.

use crate::syntax::Context;
use crate::wf::ctx_subsumes;
use std::cell::{Cell, RefCell};

thread_local! {
    static UNIFICATIONS: Cell<u64> = const { Cell::new(0) };
    static INFERENCES: Cell<u64> = const { Cell::new(0) };
    static AUDIT: Cell<bool> = const { Cell::new(false) };
    static AUDITED_OPS: Cell<u64> = const { Cell::new(0) };
    static VIOLATIONS: RefCell<Vec<String>> = const { RefCell::new(Vec::new()) };
}

pub fn reset() {
    UNIFICATIONS.with(|c| c.set(0));
    INFERENCES.with(|c| c.set(0));
    AUDITED_OPS.with(|c| c.set(0));
    VIOLATIONS.with(|v| v.borrow_mut().clear());
}

pub fn count_unification() {
    UNIFICATIONS.with(|c| c.set(c.get() + 1));
}

pub fn count_infer() {
    INFERENCES.with(|c| c.set(c.get() + 1));
}

pub fn unifications() -> u64 {
    UNIFICATIONS.with(|c| c.get())
}

pub fn inferences() -> u64 {
    INFERENCES.with(|c| c.get())
}

/// Enables per-operation context monotonicity checks on this thread.
pub fn set_audit(on: bool) {
    AUDIT.with(|c| c.set(on));
}

pub fn audit_enabled() -> bool {
    AUDIT.with(|c| c.get())
}

pub fn audited_ops() -> u64 {
    AUDITED_OPS.with(|c| c.get())
}

pub fn violations() -> Vec<String> {
    VIOLATIONS.with(|v| v.borrow().clone())
}

/// Snapshot of the input context for a later monotonicity check.
pub struct CtxSnapshot {
    ctx: Option<Context>,
    op: &'static str,
}

pub fn snapshot(op: &'static str, ctx: &Context) -> CtxSnapshot {
    if audit_enabled() {
        CtxSnapshot { ctx: Some(ctx.clone()), op }
    } else {
        CtxSnapshot { ctx: None, op }
    }
}

impl CtxSnapshot {
    /// Checks `ctx_subsumes(input, output)` when auditing is on.
    pub fn check(&self, out: &Context) {
        let Some(input) = &self.ctx else { return };
        AUDITED_OPS.with(|c| c.set(c.get() + 1));
        if !ctx_subsumes(input, out) {
            VIOLATIONS.with(|v| {
                v.borrow_mut().push(format!(
                    "{}: output context does not subsume input (len {} -> {})",
                    self.op,
                    input.len(),
                    out.len()
                ))
            });
        }
    }
}
