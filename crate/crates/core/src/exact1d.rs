//! Every viscosity solution on an interval, in closed form.
//!
//! On `(l, r)` a solution is `C¹` with nondecreasing derivative and solves
//! `u″ = τ` wherever `u′ ≠ 0`. It is therefore a descending parabola, a flat
//! piece at some height `c`, then an ascending parabola:
//!
//! ```text
//! u(x) = c + τ/2 · (pos(x − m2)² + pos(m1 − x)²),   m1 ≤ m2
//! ```
//!
//! The boundary values fix `m1` and `m2` as functions of `c`, and the
//! admissible heights form an interval `[c_min, c_max]`. The lowest height
//! has no flat piece (the minimal solution), the highest has no well (the
//! maximal solution).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};

fn pos(t: f64) -> f64 {
    t.max(0.0)
}

fn default_tau() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaFlatSolution {
    pub l: f64,
    pub r: f64,
    pub m1: f64,
    pub m2: f64,
    pub c: f64,
    /// Curvature of the parabolic pieces.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl ParabolaFlatSolution {
    pub fn value(&self, x: f64) -> f64 {
        self.c + 0.5 * self.tau * (pos(x - self.m2).powi(2) + pos(self.m1 - x).powi(2))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.tau * (pos(x - self.m2) - pos(self.m1 - x))
    }

    /// `[m1, m2] ∩ [l, r]` when it has positive length.
    pub fn flat_interval(&self) -> Option<(f64, f64)> {
        let a = self.m1.max(self.l);
        let b = self.m2.min(self.r);
        (b - a > 1e-12 * (self.r - self.l)).then_some((a, b))
    }

    fn validate(&self) -> Result<()> {
        let fin = [self.l, self.r, self.m1, self.m2, self.c, self.tau]
            .iter()
            .all(|v| v.is_finite());
        if !fin {
            return Err(Error::Parameter("solution has non-finite fields".into()));
        }
        if self.l >= self.r {
            return Err(Error::Parameter(format!(
                "empty interval [{}, {}]",
                self.l, self.r
            )));
        }
        if self.m1 > self.m2 {
            return Err(Error::Parameter(format!(
                "vertices out of order: m1 = {} > m2 = {}",
                self.m1, self.m2
            )));
        }
        Ok(())
    }
}

/// All solutions with boundary values `g_l`, `g_r`, indexed by flat height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub l: f64,
    pub r: f64,
    pub g_l: f64,
    pub g_r: f64,
    pub tau: f64,
    pub c_min: f64,
    pub c_max: f64,
}

/// Family for unit curvature.
pub fn family(l: f64, r: f64, g_l: f64, g_r: f64) -> Result<Family> {
    family_tau(l, r, g_l, g_r, 1.0)
}

/// Family for any nonzero `tau`, reduced to unit curvature by scaling and,
/// for negative `tau`, negation.
pub fn family_tau(l: f64, r: f64, g_l: f64, g_r: f64, tau: f64) -> Result<Family> {
    if !(l.is_finite() && r.is_finite() && l < r) {
        return Err(Error::Parameter(format!("need l < r, got [{l}, {r}]")));
    }
    if !(g_l.is_finite() && g_r.is_finite()) {
        return Err(Error::Parameter("boundary values must be finite".into()));
    }
    if !tau.is_finite() || tau == 0.0 {
        return Err(Error::Parameter(format!(
            "closed-form family needs a finite nonzero tau, got {tau}"
        )));
    }
    let (s, a) = (tau.signum(), tau.abs());
    let (lo, hi) = unit_range(l, r, s * g_l / a, s * g_r / a);
    let (c_min, c_max) = if s > 0.0 {
        (a * lo, a * hi)
    } else {
        (-a * hi, -a * lo)
    };
    Ok(Family {
        l,
        r,
        g_l,
        g_r,
        tau,
        c_min,
        c_max,
    })
}

/// Vertex of the single parabola `c + (x − m)²/2` through both endpoints.
fn through_vertex(l: f64, r: f64, gl: f64, gr: f64) -> (f64, f64) {
    let m = 0.5 * (l + r) + (gl - gr) / (r - l);
    (m, gl - 0.5 * (l - m).powi(2))
}

fn vertices(l: f64, r: f64, gl: f64, gr: f64, c: f64) -> (f64, f64) {
    (
        l + (2.0 * (gl - c)).max(0.0).sqrt(),
        r - (2.0 * (gr - c)).max(0.0).sqrt(),
    )
}

fn unit_range(l: f64, r: f64, gl: f64, gr: f64) -> (f64, f64) {
    let (_, c_min) = through_vertex(l, r, gl, gr);
    let top = gl.min(gr);
    let (m1, m2) = vertices(l, r, gl, gr, top);
    let c_max = if m1 <= m2 && top > c_min { top } else { c_min };
    (c_min, c_max)
}

impl Family {
    pub fn is_singleton(&self) -> bool {
        self.c_max <= self.c_min
    }

    /// Member with flat height `c`, which must lie in `[c_min, c_max]`.
    pub fn member(&self, c: f64) -> Result<ParabolaFlatSolution> {
        let slack = 1e-12 * (1.0 + self.c_min.abs().max(self.c_max.abs()));
        if !(c >= self.c_min - slack && c <= self.c_max + slack) {
            return Err(Error::Parameter(format!(
                "flat height {c} outside the admissible range [{}, {}]",
                self.c_min, self.c_max
            )));
        }
        let (s, a) = (self.tau.signum(), self.tau.abs());
        let (gl, gr) = (s * self.g_l / a, s * self.g_r / a);
        let cu = s * c / a;
        let at_min = if s > 0.0 {
            c <= self.c_min
        } else {
            c >= self.c_max
        };
        let (m1, m2) = if at_min || self.is_singleton() {
            let (m, _) = through_vertex(self.l, self.r, gl, gr);
            (m, m)
        } else {
            let (m1, m2) = vertices(self.l, self.r, gl, gr, cu);
            (m1, m2.max(m1))
        };
        let c_exact = if self.is_singleton() || at_min {
            s * a * through_vertex(self.l, self.r, gl, gr).1
        } else {
            c
        };
        let sol = ParabolaFlatSolution {
            l: self.l,
            r: self.r,
            m1,
            m2,
            c: c_exact,
            tau: self.tau,
        };
        sol.validate()?;
        Ok(sol)
    }

    /// Pointwise smallest member.
    pub fn minimal(&self) -> ParabolaFlatSolution {
        self.member(self.c_min).expect("c_min is admissible")
    }

    /// Pointwise largest member.
    pub fn maximal(&self) -> ParabolaFlatSolution {
        self.member(self.c_max).expect("c_max is admissible")
    }

    /// `k` members with equispaced heights from `c_min` to `c_max`. A
    /// single-member family yields one solution.
    pub fn enumerate(&self, k: usize) -> Vec<ParabolaFlatSolution> {
        if self.is_singleton() || k <= 1 {
            return vec![self.minimal()];
        }
        (0..k)
            .map(|i| {
                let c = if i + 1 == k {
                    self.c_max
                } else {
                    self.c_min + (self.c_max - self.c_min) * i as f64 / (k - 1) as f64
                };
                self.member(c).expect("equispaced heights are admissible")
            })
            .collect()
    }
}

pub fn minimal(l: f64, r: f64, g_l: f64, g_r: f64) -> Result<ParabolaFlatSolution> {
    Ok(family(l, r, g_l, g_r)?.minimal())
}

pub fn maximal(l: f64, r: f64, g_l: f64, g_r: f64) -> Result<ParabolaFlatSolution> {
    Ok(family(l, r, g_l, g_r)?.maximal())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityReport {
    /// `u″ = τ` on the parabolic pieces.
    pub parabolas_ok: bool,
    /// `u′ = 0` and continuous at vertices inside the interval.
    pub junctions_ok: bool,
    /// Sub- and supersolution tests of `Δ∞u = τ|Du|²` pass everywhere.
    pub solves_aronsson: bool,
    /// Sub- and supersolution tests of the normalized equation pass
    /// everywhere, including points of vanishing gradient.
    pub solves_normalized: bool,
    pub failures: Vec<String>,
}

/// Checks a member against both equations with quadratic test functions.
///
/// Since `u` is `C¹` and piecewise quadratic, a quadratic touching from
/// above at `x` has slope `u′(x)` and curvature at least the larger
/// one-sided second derivative; from below, at most the smaller. Where
/// `u′ ≠ 0` both equations reduce to `u″ = τ`. Where `u′ = 0` the Aronsson
/// tests are vacuous, while the normalized equation needs the upper
/// curvature `≥ τ` and the lower `≤ τ`; a flat piece inside the interval
/// fails the first of these for `τ > 0`.
pub fn verify_viscosity(sol: &ParabolaFlatSolution) -> ViscosityReport {
    let mut failures = Vec::new();
    if let Err(e) = sol.validate() {
        failures.push(e.to_string());
        return ViscosityReport {
            parabolas_ok: false,
            junctions_ok: false,
            solves_aronsson: false,
            solves_normalized: false,
            failures,
        };
    }
    let (l, r, tau) = (sol.l, sol.r, sol.tau);
    let w = r - l;

    let mut parabolas_ok = true;
    let d = 1e-3 * w;
    let n = 400;
    for i in 1..n {
        let x = l + w * i as f64 / n as f64;
        let on_left = x + d < sol.m1;
        let on_right = x - d > sol.m2;
        if !(on_left || on_right) || x - d <= l || x + d >= r {
            continue;
        }
        let second = (sol.value(x + d) - 2.0 * sol.value(x) + sol.value(x - d)) / (d * d);
        if (second - tau).abs() > 1e-5 * (1.0 + tau.abs()) * (1.0 + sol.c.abs()) {
            parabolas_ok = false;
            failures.push(format!(
                "second derivative {second} at x = {x}, expected {tau}"
            ));
            break;
        }
    }

    let mut junctions_ok = true;
    for m in [sol.m1, sol.m2] {
        if m <= l + d || m >= r - d {
            continue;
        }
        let left = (sol.value(m) - sol.value(m - d)) / d;
        let right = (sol.value(m + d) - sol.value(m)) / d;
        if sol.derivative(m).abs() > 1e-12
            || (right - left).abs() > 2.0 * tau.abs() * d * (1.0 + 1e-6)
        {
            junctions_ok = false;
            failures.push(format!("slope jump {} at junction x = {m}", right - left));
        }
    }

    // One-sided curvatures.
    let curv = |x: f64| -> (f64, f64) {
        let left = if x > sol.m2 || x <= sol.m1 { tau } else { 0.0 };
        let right = if x >= sol.m2 || x < sol.m1 { tau } else { 0.0 };
        (left, right)
    };
    let mut probes: Vec<f64> = (1..n).map(|i| l + w * i as f64 / n as f64).collect();
    for m in [sol.m1, sol.m2] {
        if m > l && m < r {
            probes.push(m);
        }
    }
    probes.sort_by(f64::total_cmp);

    let mut aronsson_fail: Vec<f64> = Vec::new();
    let mut normalized_fail: Vec<f64> = Vec::new();
    for &x in &probes {
        let p = sol.derivative(x);
        let (a, b) = curv(x);
        let upper = a.max(b);
        let lower = a.min(b);
        let sub_a = p * p * (upper - tau) >= -1e-12;
        let super_a = p * p * (lower - tau) <= 1e-12;
        if !(sub_a && super_a) {
            aronsson_fail.push(x);
        }
        // With p ≠ 0 this is u″ = τ again; with p = 0 it is the
        // eigenvalue condition on the test function's curvature.
        if !(upper >= tau && lower <= tau) {
            normalized_fail.push(x);
        }
    }
    let solves_aronsson = aronsson_fail.is_empty() && parabolas_ok && junctions_ok;
    let solves_normalized = normalized_fail.is_empty() && solves_aronsson;
    for (name, xs) in [
        ("Aronsson", &aronsson_fail),
        ("normalized", &normalized_fail),
    ] {
        if let (Some(a), Some(b)) = (xs.first(), xs.last()) {
            let piece = sol
                .flat_interval()
                .map(|(p, q)| format!(" (flat piece [{p}, {q}])"))
                .unwrap_or_default();
            failures.push(format!(
                "{name} test fails at {} probe points in [{a}, {b}]{piece}",
                xs.len()
            ));
        }
    }
    ViscosityReport {
        parabolas_ok,
        junctions_ok,
        solves_aronsson,
        solves_normalized,
        failures,
    }
}

/// Evaluates `sol` at the active nodes of a 1D grid spanning `[l, r]`.
pub fn sample(sol: &ParabolaFlatSolution, grid: Arc<Grid>) -> Result<GridFunction> {
    let spec = grid.spec();
    let tol = 1e-9 * (1.0 + sol.l.abs().max(sol.r.abs()));
    if grid.dim() != 1 || (spec.x[0] - sol.l).abs() > tol || (spec.x[1] - sol.r).abs() > tol {
        return Err(Error::GridMismatch(format!(
            "solution lives on [{}, {}], grid is {:?}",
            sol.l, sol.r, spec
        )));
    }
    Ok(GridFunction::from_fn(grid, |p| sol.value(p[0])))
}
