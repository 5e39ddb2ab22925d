//! Wells, flat pieces, classification and the checks that tie solver
//! outputs to the extremal solutions.
//!
//! A *well* is a set whose closure dips strictly below the values on its
//! rim; a *flat piece* is an open set on which the function is constant. A
//! solution without wells is the maximal one, a solution without flat
//! pieces is the minimal one, and one with both is intermediate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, NodeClass};

/// Detection tolerances, relative to the range of the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureTolerances {
    /// A well must be deeper than this fraction of the range.
    pub well_rel: f64,
    /// Flat pieces oscillate by at most this fraction of the range.
    pub flat_rel: f64,
    /// Minimum inradius of a flat piece, in cells.
    pub min_inradius_cells: f64,
}

impl Default for FeatureTolerances {
    fn default() -> Self {
        FeatureTolerances {
            well_rel: 1e-3,
            flat_rel: 1e-6,
            min_inradius_cells: 3.0,
        }
    }
}

impl FeatureTolerances {
    /// Range of `u` over active nodes, floored so that fields constant up to
    /// round-off do not produce features from noise.
    fn scale(u: &GridFunction) -> f64 {
        let (lo, hi) = u.range();
        let mag = lo.abs().max(hi.abs());
        (hi - lo).max(1e-9 * (1.0 + mag))
    }

    pub fn well_tol(&self, u: &GridFunction) -> f64 {
        self.well_rel * Self::scale(u)
    }

    pub fn flat_tol(&self, u: &GridFunction) -> f64 {
        self.flat_rel * Self::scale(u)
    }
}

/// Axis-aligned bounding box `[[xmin, xmax], [ymin, ymax]]`.
pub type Extent = [[f64; 2]; 2];

fn extent(grid: &Grid, nodes: &[usize]) -> Extent {
    let mut e = [[f64::INFINITY, f64::NEG_INFINITY]; 2];
    for &n in nodes {
        let p = grid.coords(n);
        for a in 0..2 {
            e[a][0] = e[a][0].min(p[a]);
            e[a][1] = e[a][1].max(p[a]);
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Well {
    /// Interior nodes of the component, increasing.
    pub nodes: Vec<usize>,
    /// The component is a connected piece of `{u < threshold}`.
    pub threshold: f64,
    pub witness_min: f64,
    pub depth: f64,
    pub extent: Extent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatPiece {
    pub nodes: Vec<usize>,
    pub height: f64,
    /// Distance from the deepest node to the nearest node outside the piece.
    pub inradius: f64,
    pub extent: Extent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Neither wells nor flat pieces: minimal and maximal coincide.
    Unique,
    /// Flat pieces only: the maximal solution.
    AbsoluteMinimizerOnly,
    /// Wells only: the minimal solution.
    ValueFunctionOnly,
    /// Both.
    Intermediate,
}

impl Verdict {
    pub fn from_features(has_wells: bool, has_flats: bool) -> Self {
        match (has_wells, has_flats) {
            (false, false) => Verdict::Unique,
            (false, true) => Verdict::AbsoluteMinimizerOnly,
            (true, false) => Verdict::ValueFunctionOnly,
            (true, true) => Verdict::Intermediate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub has_wells: bool,
    pub has_flats: bool,
    pub verdict: Verdict,
}

struct Dsu {
    parent: Vec<usize>,
    members: Vec<Vec<usize>>,
    min: Vec<f64>,
    touches: Vec<bool>,
}

impl Dsu {
    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }
}

pub fn detect_wells(u: &GridFunction) -> Vec<Well> {
    detect_wells_with(u, &FeatureTolerances::default())
}

/// Sweeps the threshold upward through the interior values. A component of
/// `{u < t}` that is not next to the collar is recorded, at its largest
/// extent, just before it first reaches the collar; it is a well if its
/// minimum lies more than `well_tol` below that threshold.
pub fn detect_wells_with(u: &GridFunction, tol: &FeatureTolerances) -> Vec<Well> {
    let grid = u.grid();
    let well_tol = tol.well_tol(u);
    let interior = grid.interior();
    let mut order: Vec<usize> = interior.to_vec();
    order.sort_by(|&a, &b| u.get(a).total_cmp(&u.get(b)).then(a.cmp(&b)));

    let m = interior.len();
    let mut dsu = Dsu {
        parent: (0..m).collect(),
        members: interior.iter().map(|&n| vec![n]).collect(),
        min: interior.iter().map(|&n| u.get(n)).collect(),
        touches: interior
            .iter()
            .map(|&n| {
                grid.axis_neighbors(n)
                    .any(|k| grid.class(k) != NodeClass::Interior)
            })
            .collect(),
    };
    let mut added = vec![false; m];
    let mut wells = Vec::new();

    let record = |dsu: &Dsu, root: usize, t: f64, wells: &mut Vec<Well>| {
        if dsu.min[root] < t - well_tol {
            let mut nodes: Vec<usize> = dsu.members[root]
                .iter()
                .copied()
                .filter(|&n| u.get(n) < t)
                .collect();
            nodes.sort_unstable();
            wells.push(Well {
                extent: extent(grid, &nodes),
                nodes,
                threshold: t,
                witness_min: dsu.min[root],
                depth: t - dsu.min[root],
            });
        }
    };

    for &n in &order {
        let t = u.get(n);
        let s = grid.slot(n);
        added[s] = true;
        let mut roots: Vec<usize> = grid
            .axis_neighbors(n)
            .filter(|&k| grid.is_interior(k) && added[grid.slot(k)])
            .map(|k| grid.slot(k))
            .collect();
        for r in roots.iter_mut() {
            *r = dsu.find(*r);
        }
        roots.sort_unstable();
        roots.dedup();
        let will_touch = dsu.touches[s] || roots.iter().any(|&r| dsu.touches[r]);
        if will_touch {
            for &r in &roots {
                if !dsu.touches[r] {
                    record(&dsu, r, t, &mut wells);
                }
            }
        }
        for &r in &roots {
            let (big, small) = if dsu.members[r].len() >= dsu.members[s].len() {
                (r, dsu.find(s))
            } else {
                (dsu.find(s), r)
            };
            if big == small {
                continue;
            }
            let moved = std::mem::take(&mut dsu.members[small]);
            dsu.members[big].extend(moved);
            dsu.min[big] = dsu.min[big].min(dsu.min[small]);
            dsu.touches[big] = dsu.touches[big] || dsu.touches[small];
            dsu.parent[small] = big;
        }
    }
    wells.sort_by(|a, b| a.nodes.cmp(&b.nodes));
    wells
}

pub fn detect_flat_pieces(u: &GridFunction) -> Vec<FlatPiece> {
    detect_flat_pieces_with(u, &FeatureTolerances::default())
}

/// Connected sets of interior nodes whose axis neighbourhoods oscillate by
/// at most `flat_tol`, whose total oscillation is at most `flat_tol`, and
/// which contain a discrete ball of radius larger than the minimum inradius.
pub fn detect_flat_pieces_with(u: &GridFunction, tol: &FeatureTolerances) -> Vec<FlatPiece> {
    let grid = u.grid();
    let flat_tol = tol.flat_tol(u);
    let r_min = tol.min_inradius_cells * grid.h();
    let mut member = vec![false; grid.len()];
    for &n in grid.interior() {
        let v = u.get(n);
        let (mut lo, mut hi) = (v, v);
        for k in grid.axis_neighbors(n) {
            lo = lo.min(u.get(k));
            hi = hi.max(u.get(k));
        }
        member[n] = hi - lo <= flat_tol;
    }
    let mut seen = vec![false; grid.len()];
    let mut pieces = Vec::new();
    for &n in grid.interior() {
        if !member[n] || seen[n] {
            continue;
        }
        let mut comp = vec![n];
        seen[n] = true;
        let mut i = 0;
        while i < comp.len() {
            let a = comp[i];
            i += 1;
            for k in grid.axis_neighbors(a) {
                if member[k] && !seen[k] {
                    seen[k] = true;
                    comp.push(k);
                }
            }
        }
        let (lo, hi) = comp
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
                (lo.min(u.get(k)), hi.max(u.get(k)))
            });
        if hi - lo > flat_tol {
            continue;
        }
        comp.sort_unstable();
        let inradius = inradius(grid, &comp);
        if inradius > r_min * (1.0 + 1e-9) {
            pieces.push(FlatPiece {
                height: comp.iter().map(|&k| u.get(k)).sum::<f64>() / comp.len() as f64,
                inradius,
                extent: extent(grid, &comp),
                nodes: comp,
            });
        }
    }
    pieces
}

/// Largest distance from a node of `set` to the nearest lattice point not
/// in `set` (points beyond the lattice count as outside).
fn inradius(grid: &Grid, set: &[usize]) -> f64 {
    // Exact squared Euclidean distance transform, separable by axis, on the
    // lattice padded by one cell.
    let (nx, ny) = (
        grid.nx() + 2,
        if grid.dim() == 2 { grid.ny() + 2 } else { 1 },
    );
    let inf = 1e30;
    let mut f = vec![0.0; nx * ny];
    for &n in set {
        let (ix, iy) = grid.ix_iy(n);
        let iy = if grid.dim() == 2 { iy + 1 } else { 0 };
        f[iy * nx + ix + 1] = inf;
    }
    let mut line = Vec::new();
    for iy in 0..ny {
        line.clear();
        line.extend_from_slice(&f[iy * nx..(iy + 1) * nx]);
        let d = edt_1d(&line);
        f[iy * nx..(iy + 1) * nx].copy_from_slice(&d);
    }
    if ny > 1 {
        for ix in 0..nx {
            line.clear();
            line.extend((0..ny).map(|iy| f[iy * nx + ix]));
            let d = edt_1d(&line);
            for (iy, v) in d.into_iter().enumerate() {
                f[iy * nx + ix] = v;
            }
        }
    }
    let best = f.iter().copied().fold(0.0, f64::max);
    grid.h() * best.sqrt()
}

/// Lower envelope of parabolas (Felzenszwalb and Huttenlocher).
fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let sq = |q: usize| (q * q) as f64;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + sq(q)) - (f[p] + sq(p))) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *out = (q as f64 - p as f64).powi(2) + f[p];
    }
    d
}

pub fn classify(u: &GridFunction) -> Classification {
    classify_with(u, &FeatureTolerances::default())
}

pub fn classify_with(u: &GridFunction, tol: &FeatureTolerances) -> Classification {
    let has_wells = !detect_wells_with(u, tol).is_empty();
    let has_flats = !detect_flat_pieces_with(u, tol).is_empty();
    Classification {
        has_wells,
        has_flats,
        verdict: Verdict::from_features(has_wells, has_flats),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleCheck {
    pub holds: bool,
    /// `max_boundary − max_interior`; negative when violated.
    pub margin: f64,
    pub max_interior: f64,
    pub min_interior: f64,
    pub max_boundary: f64,
}

/// Interior values may not exceed the boundary maximum by more than `tol`.
pub fn check_max_principle(u: &GridFunction, tol: f64) -> MaxPrincipleCheck {
    let grid = u.grid();
    let max_of = |nodes: &[usize]| {
        nodes
            .iter()
            .map(|&n| u.get(n))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let max_interior = max_of(grid.interior());
    let min_interior = grid
        .interior()
        .iter()
        .map(|&n| u.get(n))
        .fold(f64::INFINITY, f64::min);
    let max_boundary = max_of(grid.boundary());
    MaxPrincipleCheck {
        holds: max_interior <= max_boundary + tol,
        margin: max_boundary - max_interior,
        max_interior,
        min_interior,
        max_boundary,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub holds: bool,
    /// `max (u_min − u_max)⁺`.
    pub worst_violation: f64,
    pub worst_violation_at: [f64; 2],
    /// `max (u_max − u_min)`.
    pub max_gap: f64,
    pub max_gap_at: [f64; 2],
    /// `min (u_max − u_min)`.
    pub min_gap: f64,
    pub min_gap_at: [f64; 2],
}

/// `u_min ≤ u_max + tol` at every active node.
pub fn check_ordering(
    u_min: &GridFunction,
    u_max: &GridFunction,
    tol: f64,
) -> Result<OrderingCheck> {
    if !u_min.same_grid(u_max) {
        return Err(Error::GridMismatch(
            "ordering check needs a common grid".into(),
        ));
    }
    let grid = u_min.grid();
    let mut out = OrderingCheck {
        holds: true,
        worst_violation: 0.0,
        worst_violation_at: [f64::NAN; 2],
        max_gap: f64::NEG_INFINITY,
        max_gap_at: [f64::NAN; 2],
        min_gap: f64::INFINITY,
        min_gap_at: [f64::NAN; 2],
    };
    for n in grid.active_nodes() {
        let gap = u_max.get(n) - u_min.get(n);
        let p = grid.coords(n);
        if gap > out.max_gap {
            out.max_gap = gap;
            out.max_gap_at = p;
        }
        if gap < out.min_gap {
            out.min_gap = gap;
            out.min_gap_at = p;
        }
        if -gap > out.worst_violation {
            out.worst_violation = -gap;
            out.worst_violation_at = p;
        }
    }
    if out.worst_violation_at[0].is_nan() {
        out.worst_violation_at = out.min_gap_at;
    }
    out.holds = out.worst_violation <= tol;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsMinParams {
    pub trials: usize,
    pub perturbations_per_trial: usize,
    pub slack: f64,
    pub seed: u64,
}

impl Default for AbsMinParams {
    fn default() -> Self {
        AbsMinParams {
            trials: 40,
            perturbations_per_trial: 5,
            slack: 0.05,
            seed: 0,
        }
    }
}

/// Index box `[x0, x1] × [y0, y1]`, closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexBox {
    pub x: [usize; 2],
    pub y: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsMinReport {
    pub trials: usize,
    pub perturbations: usize,
    /// Competitors whose sup of `H` beat `u`'s by more than the slack.
    pub beaten: usize,
    /// Largest `sup_V H(u) − sup_V H(v)` seen.
    pub worst_margin: f64,
    pub worst_box: Option<IndexBox>,
    pub passed: bool,
}

/// Max over the box elements of `H(Dv, v) = ½|Dv|² − τv` for the piecewise
/// linear interpolant of `v` (two triangles per cell in 2D), with `v` taken
/// at the element mean.
pub fn box_sup_hamiltonian(grid: &Grid, v: &[f64], b: IndexBox, tau: f64) -> f64 {
    let h = grid.h();
    let pot = |vals: &[f64]| -tau * vals.iter().sum::<f64>() / vals.len() as f64;
    let mut best = f64::NEG_INFINITY;
    if grid.dim() == 1 {
        for i in b.x[0]..b.x[1] {
            let (a, c) = (v[i], v[i + 1]);
            let s = (c - a) / h;
            best = best.max(0.5 * s * s + pot(&[a, c]));
        }
        return best;
    }
    for j in b.y[0]..b.y[1] {
        for i in b.x[0]..b.x[1] {
            let v00 = v[grid.index(i, j)];
            let v10 = v[grid.index(i + 1, j)];
            let v01 = v[grid.index(i, j + 1)];
            let v11 = v[grid.index(i + 1, j + 1)];
            let (gx, gy) = ((v10 - v00) / h, (v01 - v00) / h);
            best = best.max(0.5 * (gx * gx + gy * gy) + pot(&[v00, v10, v01]));
            let (gx, gy) = ((v11 - v01) / h, (v11 - v10) / h);
            best = best.max(0.5 * (gx * gx + gy * gy) + pot(&[v11, v10, v01]));
        }
    }
    best
}

fn box_valid(grid: &Grid, b: IndexBox) -> bool {
    if b.x[1] < b.x[0] + 2 || b.x[1] >= grid.nx() || b.y[1] >= grid.ny() {
        return false;
    }
    if grid.dim() == 2 && b.y[1] < b.y[0] + 2 {
        return false;
    }
    for j in b.y[0]..=b.y[1] {
        for i in b.x[0]..=b.x[1] {
            let n = grid.index(i, j);
            let edge =
                i == b.x[0] || i == b.x[1] || (grid.dim() == 2 && (j == b.y[0] || j == b.y[1]));
            let ok = if edge {
                grid.is_active(n)
            } else {
                grid.is_interior(n)
            };
            if !ok {
                return false;
            }
        }
    }
    true
}

/// Competitor equal to `u` on the box edges: linear in 1D, the bilinearly
/// blended (Coons) patch of the edge values in 2D.
fn edge_interpolant(grid: &Grid, u: &GridFunction, b: IndexBox) -> Vec<f64> {
    let mut v = u.values().to_vec();
    let [i0, i1] = b.x;
    let [j0, j1] = b.y;
    let at = |i: usize, j: usize| u.get(grid.index(i, j));
    for j in j0..=j1 {
        for i in i0..=i1 {
            let s = (i - i0) as f64 / (i1 - i0) as f64;
            let val = if grid.dim() == 1 {
                (1.0 - s) * at(i0, 0) + s * at(i1, 0)
            } else {
                let t = (j - j0) as f64 / (j1 - j0) as f64;
                (1.0 - s) * at(i0, j) + s * at(i1, j) + (1.0 - t) * at(i, j0) + t * at(i, j1)
                    - ((1.0 - s) * (1.0 - t) * at(i0, j0)
                        + s * (1.0 - t) * at(i1, j0)
                        + (1.0 - s) * t * at(i0, j1)
                        + s * t * at(i1, j1))
            };
            v[grid.index(i, j)] = val;
        }
    }
    v
}

fn random_box(grid: &Grid, rng: &mut ChaCha8Rng) -> Option<IndexBox> {
    for _ in 0..200 {
        let c = grid.interior()[rng.random_range(0..grid.interior().len())];
        let (ix, iy) = grid.ix_iy(c);
        let hx = rng.random_range(1..=(grid.nx() / 2).max(1));
        let b = if grid.dim() == 1 {
            IndexBox {
                x: [ix.saturating_sub(hx), (ix + hx).min(grid.nx() - 1)],
                y: [0, 0],
            }
        } else {
            let hy = rng.random_range(1..=(grid.ny() / 2).max(1));
            IndexBox {
                x: [ix.saturating_sub(hx), (ix + hx).min(grid.nx() - 1)],
                y: [iy.saturating_sub(hy), (iy + hy).min(grid.ny() - 1)],
            }
        };
        if box_valid(grid, b) {
            return Some(b);
        }
    }
    None
}

/// Sampling test of the absolute minimizing property for
/// `H(p, z) = ½|p|² − τz`.
///
/// The first trial uses the whole lattice when it is a valid box; the rest
/// use random sub-boxes whose inner nodes are interior. Each trial compares
/// `u` with the edge interpolant and with random bumps added to either the
/// interpolant or `u`, all agreeing with `u` on the box edges.
pub fn check_absolute_minimizing(
    u: &GridFunction,
    tau: f64,
    params: &AbsMinParams,
) -> AbsMinReport {
    let grid = u.grid().as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut report = AbsMinReport {
        trials: 0,
        perturbations: 0,
        beaten: 0,
        worst_margin: f64::NEG_INFINITY,
        worst_box: None,
        passed: true,
    };
    let full = IndexBox {
        x: [0, grid.nx() - 1],
        y: [0, grid.ny() - 1],
    };
    for trial in 0..params.trials {
        let b = if trial == 0 && box_valid(grid, full) {
            Some(full)
        } else {
            random_box(grid, &mut rng)
        };
        let Some(b) = b else { continue };
        report.trials += 1;
        let e_u = box_sup_hamiltonian(grid, u.values(), b, tau);
        let interp = edge_interpolant(grid, u, b);
        let lx = (b.x[1] - b.x[0]) as f64 * grid.h();
        let ly = (b.y[1] - b.y[0]) as f64 * grid.h();
        let side = if grid.dim() == 1 { lx } else { lx.min(ly) };
        for k in 0..params.perturbations_per_trial.max(1) {
            let mut v = if k == 0 || rng.random_bool(0.5) {
                interp.clone()
            } else {
                u.values().to_vec()
            };
            if k > 0 {
                let amp = rng.random_range(-0.25..0.25) * side;
                let fx = rng.random_range(1..=3) as f64;
                let fy = rng.random_range(1..=3) as f64;
                for j in b.y[0]..=b.y[1] {
                    for i in b.x[0]..=b.x[1] {
                        let s = (i - b.x[0]) as f64 / (b.x[1] - b.x[0]) as f64;
                        let mut phi = (std::f64::consts::PI * fx * s).sin();
                        if grid.dim() == 2 {
                            let t = (j - b.y[0]) as f64 / (b.y[1] - b.y[0]) as f64;
                            phi *= (std::f64::consts::PI * fy * t).sin();
                        }
                        let n = grid.index(i, j);
                        let edge = i == b.x[0]
                            || i == b.x[1]
                            || (grid.dim() == 2 && (j == b.y[0] || j == b.y[1]));
                        if !edge {
                            v[n] += amp * phi;
                        }
                    }
                }
            }
            report.perturbations += 1;
            let margin = e_u - box_sup_hamiltonian(grid, &v, b, tau);
            if margin > report.worst_margin {
                report.worst_margin = margin;
                report.worst_box = Some(b);
            }
            if margin > params.slack {
                report.beaten += 1;
            }
        }
    }
    report.passed = report.beaten == 0;
    report
}
