//! Fault-injection hooks used by `verify` to prove its checks can fail.
//! Never enabled outside the `--inject-fault` CLI path.

use std::sync::atomic::{AtomicBool, Ordering};

static LT_STRICT: AtomicBool = AtomicBool::new(false);

/// Makes the causal mask drop the diagonal (`j < i` instead of `j <= i`).
pub fn set_lt_strict(on: bool) {
    LT_STRICT.store(on, Ordering::Relaxed);
}

#[inline]
pub(crate) fn lt_strict() -> bool {
    LT_STRICT.load(Ordering::Relaxed)
}
