//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use aronsson_cli::verify;
use aronsson_core::analysis::{
    box_sup_hamiltonian, check_absolute_minimizing, check_ordering, classify, detect_flat_pieces,
    detect_wells, AbsMinParams, IndexBox,
};
use aronsson_core::exact1d::{self, family_tau};
use aronsson_core::game::{self, dpp_update, supersolution_residual, DppOperator};
use aronsson_core::variational::{lp_energy, lp_energy_gradient, minimize_lp};
use aronsson_core::{
    BoundaryData, DomainSpec, GameParams, Grid, GridFunction, LpParams, Problem, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const SOLUTION_TOL: f64 = 0.05;
const EXAMPLE_ONE_SECONDS: f64 = 30.0;
const RUN_2D_SECONDS: f64 = 300.0;
const SUPER_FLOOR: f64 = 0.01;
const FLAT_RESIDUAL_TOL: f64 = 1e-9;
const ROUNDOFF: f64 = 1e-12;
const CONSISTENCY_K: f64 = 1.0;
const GRADIENT_REL: f64 = 1e-5;
const U2_MARGIN: f64 = 0.5;
const U2_MARGIN_TOL: f64 = 0.01;
const BATTERY_SLACK: f64 = 0.05;
const SEED: u64 = 2024;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn interval(h: f64) -> Arc<Grid> {
    Arc::new(Grid::new(DomainSpec::interval(-1.0, 1.0, h)).unwrap())
}

fn zero_data(h: f64) -> Problem {
    Problem::from_expr(DomainSpec::interval(-1.0, 1.0, h), "0", 1.0).unwrap()
}

fn pair(grid: &Arc<Grid>, gl: f64, gr: f64, tau: f64) -> Problem {
    let b = BoundaryData::from_fn(grid, |p| if p[0] < 0.0 { gl } else { gr }).unwrap();
    Problem::new(grid.clone(), b, tau).unwrap()
}

fn u2(p: [f64; 2]) -> f64 {
    0.5 * p[0] * p[0] - 0.5
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn criterion_1() -> Outcome {
    let pb = zero_data(0.004);
    let ((u, rep), dt) = timed(|| game::value_iteration(&pb, &GameParams::new(0.02)).unwrap());
    let err = u.sup_error(u2);
    let secs = dt.as_secs_f64();
    ensure(
        rep.converged && err <= SOLUTION_TOL && secs <= EXAMPLE_ONE_SECONDS,
        format!(
            "converged={} sup error {err:.4} in {secs:.2} s",
            rep.converged
        ),
    )
}

fn criterion_2() -> Outcome {
    let (u, rep) = minimize_lp(&zero_data(0.004), &LpParams::default()).unwrap();
    let sup = u.sup_error(|_| 0.0);
    let wells = detect_wells(&u).len();
    ensure(
        rep.converged && sup <= SOLUTION_TOL && wells == 0,
        format!(
            "converged={} sup |u| {sup:.2e}, {wells} well(s)",
            rep.converged
        ),
    )
}

fn random_pairs() -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..20)
        .map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
        .collect()
}

fn criterion_3() -> Outcome {
    let grid = interval(0.004);
    let mut cases = vec![(0.0, 0.0)];
    cases.extend(random_pairs());
    let mut worst_order: f64 = 0.0;
    let mut worst_game: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    let mut unconverged = 0;
    for (gl, gr) in cases {
        let pb = pair(&grid, gl, gr, 1.0);
        let (ug, rg) = game::value_iteration(&pb, &GameParams::new(0.02)).unwrap();
        let (uv, rv) = minimize_lp(&pb, &LpParams::default()).unwrap();
        unconverged += usize::from(!rg.converged) + usize::from(!rv.converged);
        let fam = family_tau(-1.0, 1.0, gl, gr, 1.0).unwrap();
        let (lo, hi) = (fam.minimal(), fam.maximal());
        worst_order = worst_order.max(
            check_ordering(&ug, &uv, SOLUTION_TOL)
                .unwrap()
                .worst_violation,
        );
        worst_game = worst_game.max(ug.sup_error(|p| lo.value(p[0])));
        worst_var = worst_var.max(uv.sup_error(|p| hi.value(p[0])));
    }
    ensure(
        worst_order <= SOLUTION_TOL && worst_game <= SOLUTION_TOL && worst_var <= SOLUTION_TOL,
        format!(
            "21 problems: ordering violation {worst_order:.2e}, game vs minimal {worst_game:.4}, \
             variational vs maximal {worst_var:.4}, {unconverged} unconverged run(s)"
        ),
    )
}

const HEIGHTS: [f64; 5] = [-0.5, -0.375, -0.25, -0.125, 0.0];

fn criterion_4() -> Outcome {
    let grid = interval(0.01);
    let fam = family_tau(-1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
    let expected = [
        Verdict::ValueFunctionOnly,
        Verdict::Intermediate,
        Verdict::Intermediate,
        Verdict::Intermediate,
        Verdict::AbsoluteMinimizerOnly,
    ];
    let mut correct = 0;
    let mut got = Vec::new();
    for (c, want) in HEIGHTS.into_iter().zip(expected) {
        let u = exact1d::sample(&fam.member(c).unwrap(), grid.clone()).unwrap();
        let v = classify(&u).verdict;
        correct += usize::from(v == want);
        got.push(format!("{v:?}"));
    }
    ensure(
        correct == 5,
        format!("{correct}/5 correct: {}", got.join(", ")),
    )
}

fn criterion_5() -> Outcome {
    let grid = interval(0.01);
    let eps = 0.05;
    let fam = family_tau(-1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
    let mut lowest = f64::INFINITY;
    let mut flat_dev: f64 = 0.0;
    let mut flat_nodes = 0;
    for c in HEIGHTS {
        let sol = fam.member(c).unwrap();
        let u = exact1d::sample(&sol, grid.clone()).unwrap();
        let res = supersolution_residual(&u, eps, 1.0).unwrap();
        for &n in grid.interior() {
            lowest = lowest.min(res.get(n));
            let x = grid.coords(n)[0];
            // Nodes whose whole ball lies on the flat piece.
            if let Some((a, b)) = sol.flat_interval() {
                if x - eps >= a - 1e-12 && x + eps <= b + 1e-12 && x - eps > -1.0 && x + eps < 1.0 {
                    flat_nodes += 1;
                    flat_dev = flat_dev.max((res.get(n) - 0.5 * eps * eps).abs());
                }
            }
        }
    }
    ensure(
        lowest >= -SUPER_FLOOR * eps * eps && flat_dev <= FLAT_RESIDUAL_TOL && flat_nodes > 0,
        format!(
            "min residual {lowest:.3e}, flat deviation {flat_dev:.1e} over {flat_nodes} node(s)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let grid = interval(0.004);
    let mut cases = vec![(0.0, 0.0, 1.0)];
    cases.extend(random_pairs().into_iter().map(|(a, b)| (a, b, 1.0)));
    cases.extend([(0.5, 1.0, -1.0), (2.0, -1.0, 0.5)]);
    let mut wells = 0;
    let mut flats = 0;
    for (gl, gr, tau) in cases.iter().copied() {
        let pb = pair(&grid, gl, gr, tau);
        let (ug, _) = game::value_iteration(&pb, &GameParams::new(0.02)).unwrap();
        let (uv, _) = minimize_lp(&pb, &LpParams::default()).unwrap();
        let s = if tau < 0.0 { -1.0 } else { 1.0 };
        flats += detect_flat_pieces(&ug.map(|x| s * x)).len();
        wells += detect_wells(&uv.map(|x| s * x)).len();
    }
    let disc = Problem::from_expr(DomainSpec::unit_disc(0.02), "0", 1.0).unwrap();
    let (ug, _) = game::value_iteration(&disc, &GameParams::new(0.1)).unwrap();
    let (uv, _) = minimize_lp(&disc, &LpParams::default()).unwrap();
    flats += detect_flat_pieces(&ug).len();
    wells += detect_wells(&uv).len();
    ensure(
        wells == 0 && flats == 0,
        format!("{} problems: {wells} well(s) in variational outputs, {flats} flat piece(s) in game outputs", cases.len() + 1),
    )
}

fn criterion_7() -> Outcome {
    let h = 0.01;
    let eps = 0.05;
    let sq =
        Problem::from_expr(DomainSpec::rectangle([0.0, 1.0], [0.0, 1.0], h), "x", 0.0).unwrap();
    let ((u_sq, r_sq), t_sq) = timed(|| game::value_iteration(&sq, &GameParams::new(eps)).unwrap());
    let e_sq = u_sq.sup_error(|p| p[0]);
    let disc = Problem::from_expr(DomainSpec::unit_disc(h), "0", 1.0).unwrap();
    let ((u_g, r_g), t_g) = timed(|| game::value_iteration(&disc, &GameParams::new(eps)).unwrap());
    let e_g = u_g.sup_error(|p| 0.5 * (p[0] * p[0] + p[1] * p[1]) - 0.5);
    let ((u_v, r_v), t_v) = timed(|| minimize_lp(&disc, &LpParams::default()).unwrap());
    let e_v = u_v.sup_error(|_| 0.0);
    let slowest = t_sq.max(t_g).max(t_v).as_secs_f64();
    ensure(
        r_sq.converged
            && r_g.converged
            && r_v.converged
            && e_sq.max(e_g).max(e_v) <= SOLUTION_TOL
            && slowest <= RUN_2D_SECONDS,
        format!(
            "square game {e_sq:.2e} ({:.1} s), disc game {e_g:.4} ({:.1} s), disc variational {e_v:.2e} ({:.1} s)",
            t_sq.as_secs_f64(),
            t_g.as_secs_f64(),
            t_v.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let grid = interval(0.004);
    let base = pair(&grid, 0.0, 0.0, 1.0);
    let (g1, _) = game::value_iteration(&base, &GameParams::new(0.02)).unwrap();
    let (v1, _) = minimize_lp(&base, &LpParams::default()).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for lambda in [2.0, 5.0] {
        let pb = base.transformed(|x| lambda * x, lambda);
        let (gl, _) = game::value_iteration(&pb, &GameParams::new(0.02)).unwrap();
        let (vl, _) = minimize_lp(&pb, &LpParams::default()).unwrap();
        let eg = gl.sup_distance(&g1.map(|x| lambda * x)).unwrap();
        let ev = vl.sup_distance(&v1.map(|x| lambda * x)).unwrap();
        ok &= eg.max(ev) <= lambda * SOLUTION_TOL;
        parts.push(format!("λ={lambda}: game {eg:.2e}, variational {ev:.2e}"));
    }
    ensure(ok, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let grids = [
        DomainSpec::interval(-1.0, 1.0, 0.02),
        DomainSpec::rectangle([0.0, 1.0], [0.0, 0.6], 0.05),
        DomainSpec::unit_disc(0.05),
    ];
    let mut mono: f64 = 0.0;
    let mut shift: f64 = 0.0;
    for spec in grids {
        let grid = Arc::new(Grid::new(spec).unwrap());
        let op = DppOperator::new(grid.clone(), 0.15, 0.8).unwrap();
        for _ in 0..100 {
            let u = GridFunction::from_fn(grid.clone(), |_| rng.random_range(-1.0..1.0));
            let above = u
                .values()
                .iter()
                .map(|a| a + rng.random_range(0.0..0.5))
                .collect();
            let v = GridFunction::from_values(grid.clone(), above).unwrap();
            let c: f64 = rng.random_range(-1.0..1.0);
            let (tu, tv, ts) = (op.apply(&u), op.apply(&v), op.apply(&u.map(|x| x + c)));
            for &n in grid.interior() {
                mono = mono.max(tu.get(n) - tv.get(n));
                shift = shift.max((ts.get(n) - tu.get(n) - c).abs());
            }
        }
    }
    // Consistency on φ = x²/2, away from the origin and the collar.
    let mut k: f64 = 0.0;
    for eps in [0.1, 0.05, 0.025] {
        for spec in [
            DomainSpec::interval(-1.0, 1.0, eps / 5.0),
            DomainSpec::rectangle([-1.0, 1.0], [-0.5, 0.5], eps / 5.0),
        ] {
            let grid = Arc::new(Grid::new(spec).unwrap());
            let phi = GridFunction::from_fn(grid.clone(), |p| 0.5 * p[0] * p[0]);
            for &n in grid.interior() {
                let p = grid.coords(n);
                let inside = p[0].abs() <= 1.0 - 2.0 * eps
                    && (grid.dim() == 1 || p[1].abs() <= 0.5 - 2.0 * eps);
                if p[0].abs() < 2.0 * eps || !inside {
                    continue;
                }
                let t = dpp_update(&phi, n, eps, 0.0).unwrap();
                k = k.max((t - phi.get(n) - 0.5 * eps * eps).abs() / eps.powi(3));
            }
        }
    }
    ensure(
        mono <= ROUNDOFF && shift <= ROUNDOFF && k <= CONSISTENCY_K,
        format!("monotonicity excess {mono:.1e}, shift defect {shift:.1e}, consistency K {k:.2e}"),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let spec = match i % 3 {
            0 => DomainSpec::interval(0.0, 1.0, 1.0 / rng.random_range(6..20) as f64),
            1 => DomainSpec::rectangle([0.0, 1.0], [0.0, 0.2 * rng.random_range(2..6) as f64], 0.2),
            _ => DomainSpec::unit_disc([0.2, 0.25, 0.4][rng.random_range(0..3)]),
        };
        let grid = Arc::new(Grid::new(spec).unwrap());
        for p in [2.0, 4.0, 8.0] {
            let u = GridFunction::from_fn(grid.clone(), |_| {
                let x: f64 = rng.random_range(0.1..1.0);
                if rng.random_bool(0.5) {
                    -x
                } else {
                    x
                }
            });
            let an = lp_energy_gradient(&u, p);
            let mut err: f64 = 0.0;
            let mut norm: f64 = 0.0;
            for &n in grid.interior() {
                let d = 1e-6;
                let mut a = u.clone();
                a.set(n, u.get(n) + d);
                let mut b = u.clone();
                b.set(n, u.get(n) - d);
                let fd = (lp_energy(&a, p).value() - lp_energy(&b, p).value()) / (2.0 * d);
                err = err.max((fd - an.get(n)).abs());
                norm = norm.max(an.get(n).abs());
            }
            worst = worst.max(err / norm);
        }
    }
    ensure(
        worst <= GRADIENT_REL,
        format!("60 checks, worst relative error {worst:.2e}"),
    )
}

fn criterion_11() -> Outcome {
    let grid = interval(0.01);
    let full = IndexBox {
        x: [0, grid.nx() - 1],
        y: [0, 0],
    };
    let u = GridFunction::from_fn(grid.clone(), u2);
    let zero = GridFunction::zeros(grid.clone());
    let margin = box_sup_hamiltonian(&grid, u.values(), full, 1.0)
        - box_sup_hamiltonian(&grid, zero.values(), full, 1.0);

    let params = AbsMinParams {
        trials: 40,
        perturbations_per_trial: 5,
        slack: BATTERY_SLACK,
        seed: SEED,
    };
    let grid = interval(0.004);
    let mut cases = vec![(0.0, 0.0)];
    cases.extend(random_pairs());
    let mut worst = f64::NEG_INFINITY;
    let mut beaten = 0;
    for (gl, gr) in cases {
        let (uv, _) = minimize_lp(&pair(&grid, gl, gr, 1.0), &LpParams::default()).unwrap();
        let rep = check_absolute_minimizing(&uv, 1.0, &params);
        assert_eq!(rep.perturbations, 200);
        worst = worst.max(rep.worst_margin);
        beaten += rep.beaten;
    }
    ensure(
        (margin - U2_MARGIN).abs() <= U2_MARGIN_TOL && worst <= BATTERY_SLACK && beaten == 0,
        format!("u₂ margin {margin:.4}; variational worst margin {worst:.2e} over 21 × 200 perturbations"),
    )
}

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures"))
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Also covers the fixture half of criteria 6 and 11.
fn criterion_12() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let sa = verify(fixtures(), &a, None, Some(SEED)).map_err(|e| e.to_string())?;
    verify(fixtures(), &b, None, Some(SEED)).map_err(|e| e.to_string())?;
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    let failing: Vec<String> = sa
        .fixtures
        .iter()
        .flat_map(|f| {
            f.checks
                .iter()
                .filter(|c| !c.passed)
                .map(move |c| format!("{}:{}", f.name, c.name))
        })
        .collect();
    ensure(
        ta == tb && !ta.is_empty() && failing.is_empty() && sa.exit_code == 0,
        format!(
            "{} artifact(s), identical={}, {} fixture(s), failing checks: [{}]",
            ta.len(),
            ta == tb,
            sa.fixtures.len(),
            failing.join(", ")
        ),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    // Timed criteria run alone; the rest share threads.
    let results: Vec<(usize, Outcome)> = std::thread::scope(|s| {
        let untimed: Vec<_> = criteria
            .iter()
            .filter(|(n, _)| !matches!(n, 1 | 7))
            .map(|&(n, f)| (n, s.spawn(f)))
            .collect();
        let mut out: Vec<(usize, Outcome)> = untimed
            .into_iter()
            .map(|(n, h)| (n, h.join().unwrap_or_else(|_| Err("panicked".into()))))
            .collect();
        for &(n, f) in criteria.iter().filter(|(n, _)| matches!(n, 1 | 7)) {
            out.push((n, f()));
        }
        out
    });
    let mut results = results;
    results.sort_by_key(|(n, _)| *n);
    let mut failed = 0;
    for (n, r) in &results {
        match r {
            Ok(msg) => println!("PASS criterion {n:>2}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {n:>2}: {msg}");
            }
        }
    }
    println!(
        "acceptance: {}/{} passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
