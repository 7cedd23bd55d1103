//! Shared fixtures for the benchmarks.

use gaplab_core::{build_aklt, build_kappa_example, ClassATuple};

/// The κ-example with `(n0, k_R, k_L, κ, n) = (1, 1, 1, 0.5, 2)`.
pub fn e1() -> ClassATuple {
    build_kappa_example(1, 1, 1, 0.5, 2).expect("valid parameters")
}

pub fn aklt() -> ClassATuple {
    build_aklt()
}
