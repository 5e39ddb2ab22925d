//! Problems shared by the benchmarks.

use aronsson_core::{DomainSpec, Problem};

/// `g = 0`, `τ = 1` on `(−1, 1)`.
pub fn zero_data(h: f64) -> Problem {
    Problem::from_expr(DomainSpec::interval(-1.0, 1.0, h), "0", 1.0).expect("valid problem")
}

/// Unequal end values on `(−1, 1)`.
pub fn tilted(h: f64) -> Problem {
    Problem::from_expr(DomainSpec::interval(-1.0, 1.0, h), "1.5 - 2 * x", 1.0)
        .expect("valid problem")
}

pub fn unit_disc(h: f64) -> Problem {
    Problem::from_expr(DomainSpec::unit_disc(h), "0", 1.0).expect("valid problem")
}

/// `g = x` on the unit square.
pub fn square(h: f64, tau: f64) -> Problem {
    Problem::from_expr(DomainSpec::rectangle([0.0, 1.0], [0.0, 1.0], h), "x", tau)
        .expect("valid problem")
}
