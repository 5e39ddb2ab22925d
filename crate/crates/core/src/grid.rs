//! Uniform lattices over intervals, rectangles and discs, boundary data and
//! scalar fields.
//!
//! A lattice node is *interior* if it lies strictly inside the domain,
//! *boundary* if it is not interior but touches an interior node (axis or
//! diagonal neighbour), and *exterior* otherwise. Boundary nodes carry the
//! Dirichlet data.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expression};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    Interval,
    Rectangle,
    /// Open disc masked out of the bounding rectangle.
    Disc {
        center: [f64; 2],
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub kind: DomainKind,
    /// Bounds of the first axis.
    pub x: [f64; 2],
    /// Bounds of the second axis; ignored for intervals.
    pub y: [f64; 2],
    pub h: f64,
}

impl DomainSpec {
    pub fn interval(x0: f64, x1: f64, h: f64) -> Self {
        DomainSpec {
            kind: DomainKind::Interval,
            x: [x0, x1],
            y: [0.0, 0.0],
            h,
        }
    }

    pub fn rectangle(x: [f64; 2], y: [f64; 2], h: f64) -> Self {
        DomainSpec {
            kind: DomainKind::Rectangle,
            x,
            y,
            h,
        }
    }

    pub fn disc(center: [f64; 2], radius: f64, x: [f64; 2], y: [f64; 2], h: f64) -> Self {
        DomainSpec {
            kind: DomainKind::Disc { center, radius },
            x,
            y,
            h,
        }
    }

    /// Unit disc centred at the origin inside a box with a two-cell margin.
    /// `2/h` must be an integer.
    pub fn unit_disc(h: f64) -> Self {
        let b = 1.0 + 2.0 * h;
        Self::disc([0.0, 0.0], 1.0, [-b, b], [-b, b], h)
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::Interval => 1,
            _ => 2,
        }
    }

    fn cells(lo: f64, hi: f64, h: f64, axis: &str) -> Result<usize> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Domain(format!("{axis} bounds must be finite")));
        }
        if hi <= lo {
            return Err(Error::Domain(format!(
                "{axis} extent [{lo}, {hi}] has zero measure"
            )));
        }
        let n = (hi - lo) / h;
        let r = n.round();
        if r < 1.0 || (n - r).abs() > 1e-6 * n {
            return Err(Error::Domain(format!(
                "h = {h} does not divide the {axis} extent {} (ratio {n})",
                hi - lo
            )));
        }
        Ok(r as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::Domain(format!(
                "spacing h must be positive, got {}",
                self.h
            )));
        }
        Self::cells(self.x[0], self.x[1], self.h, "x")?;
        if self.dim() == 2 {
            Self::cells(self.y[0], self.y[1], self.h, "y")?;
        }
        if let DomainKind::Disc { center, radius } = self.kind {
            if !(radius.is_finite() && radius > 0.0) {
                return Err(Error::Domain(format!(
                    "disc radius must be positive, got {radius}"
                )));
            }
            let fits = center[0] - radius > self.x[0]
                && center[0] + radius < self.x[1]
                && center[1] - radius > self.y[0]
                && center[1] + radius < self.y[1];
            if !fits {
                return Err(Error::Domain(
                    "disc must lie strictly inside its bounding rectangle".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Interior => "interior",
            NodeClass::Boundary => "boundary",
            NodeClass::Exterior => "exterior",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: DomainSpec,
    nx: usize,
    ny: usize,
    class: Vec<NodeClass>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    slot: Vec<usize>,
}

pub const NO_SLOT: usize = usize::MAX;

impl Grid {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        spec.validate()?;
        let nx = DomainSpec::cells(spec.x[0], spec.x[1], spec.h, "x")? + 1;
        let ny = if spec.dim() == 2 {
            DomainSpec::cells(spec.y[0], spec.y[1], spec.h, "y")? + 1
        } else {
            1
        };
        let mut g = Grid {
            spec,
            nx,
            ny,
            class: vec![NodeClass::Exterior; nx * ny],
            interior: Vec::new(),
            boundary: Vec::new(),
            slot: vec![NO_SLOT; nx * ny],
        };
        for node in 0..nx * ny {
            let (ix, iy) = g.ix_iy(node);
            let inside = match spec.kind {
                DomainKind::Interval => ix > 0 && ix + 1 < nx,
                DomainKind::Rectangle => ix > 0 && ix + 1 < nx && iy > 0 && iy + 1 < ny,
                DomainKind::Disc { center, radius } => {
                    let p = g.coords(node);
                    let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                    d2 < radius * radius * (1.0 - 1e-12)
                }
            };
            if inside {
                g.class[node] = NodeClass::Interior;
            }
        }
        for node in 0..nx * ny {
            if g.class[node] == NodeClass::Interior {
                continue;
            }
            let touches = g
                .king_neighbors(node)
                .any(|m| g.class[m] == NodeClass::Interior);
            if touches {
                g.class[node] = NodeClass::Boundary;
            }
        }
        for node in 0..nx * ny {
            match g.class[node] {
                NodeClass::Interior => {
                    g.slot[node] = g.interior.len();
                    g.interior.push(node);
                }
                NodeClass::Boundary => g.boundary.push(node),
                NodeClass::Exterior => {}
            }
        }
        if g.interior.is_empty() {
            return Err(Error::Domain("grid has no interior nodes".into()));
        }
        Ok(g)
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of lattice nodes, exterior included.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn ix_iy(&self, node: usize) -> (usize, usize) {
        (node % self.nx, node / self.nx)
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let (ix, iy) = self.ix_iy(node);
        let lerp = |lo: f64, hi: f64, i: usize, n: usize| {
            if n == 0 {
                lo
            } else {
                (lo * (n - i) as f64 + hi * i as f64) / n as f64
            }
        };
        let x = lerp(self.spec.x[0], self.spec.x[1], ix, self.nx - 1);
        let y = if self.dim() == 2 {
            lerp(self.spec.y[0], self.spec.y[1], iy, self.ny - 1)
        } else {
            0.0
        };
        [x, y]
    }

    pub fn class(&self, node: usize) -> NodeClass {
        self.class[node]
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.class[node] == NodeClass::Interior
    }

    /// Interior or boundary.
    pub fn is_active(&self, node: usize) -> bool {
        self.class[node] != NodeClass::Exterior
    }

    /// Interior nodes in increasing index order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Boundary nodes in increasing index order.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Position of `node` in [`Grid::interior`], or [`NO_SLOT`].
    pub fn slot(&self, node: usize) -> usize {
        self.slot[node]
    }

    /// Interior and boundary nodes in increasing index order.
    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&n| self.is_active(n))
    }

    /// Lattice node at integer offset `(dx, dy)` from `node`, if inside the lattice.
    pub fn offset(&self, node: usize, dx: isize, dy: isize) -> Option<usize> {
        let (ix, iy) = self.ix_iy(node);
        let jx = ix as isize + dx;
        let jy = iy as isize + dy;
        if jx < 0 || jy < 0 || jx >= self.nx as isize || jy >= self.ny as isize {
            None
        } else {
            Some(self.index(jx as usize, jy as usize))
        }
    }

    /// Axis neighbours (2 in 1D, 4 in 2D) that exist in the lattice.
    pub fn axis_neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        const D: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        let k = 2 * self.dim();
        D[..k]
            .iter()
            .filter_map(move |&(dx, dy)| self.offset(node, dx, dy))
    }

    /// Axis and diagonal neighbours.
    pub fn king_neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let ry: isize = if self.dim() == 2 { 1 } else { 0 };
        (-ry..=ry).flat_map(move |dy| {
            (-1isize..=1).filter_map(move |dx| {
                if dx == 0 && dy == 0 {
                    None
                } else {
                    self.offset(node, dx, dy)
                }
            })
        })
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let p = self.coords(a);
        let q = self.coords(b);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    pub fn counts(&self) -> NodeCounts {
        NodeCounts {
            interior: self.interior.len(),
            boundary: self.boundary.len(),
            exterior: self.len() - self.interior.len() - self.boundary.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCounts {
    pub interior: usize,
    pub boundary: usize,
    pub exterior: usize,
}

/// Integer offsets within Euclidean distance `radius` of the origin, sorted
/// by distance then lexicographically. The origin comes first.
pub fn ball_offsets(dim: usize, h: f64, radius: f64) -> Vec<(isize, isize, f64)> {
    let k = (radius / h * (1.0 + 1e-9)).floor() as isize;
    let ky = if dim == 2 { k } else { 0 };
    let mut out = Vec::new();
    for dy in -ky..=ky {
        for dx in -k..=k {
            let d = h * ((dx * dx + dy * dy) as f64).sqrt();
            if d <= radius * (1.0 + 1e-9) {
                out.push((dx, dy, d));
            }
        }
    }
    out.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    out
}

/// Active nodes within distance `eps` of `node`, the node itself included,
/// in increasing index order.
pub fn ball_stencil(grid: &Grid, node: usize, eps: f64) -> Result<Vec<usize>> {
    if !(eps >= grid.h() * (1.0 - 1e-12)) {
        return Err(Error::Parameter(format!(
            "stencil radius {eps} is smaller than the spacing {}",
            grid.h()
        )));
    }
    let mut out: Vec<usize> = ball_offsets(grid.dim(), grid.h(), eps)
        .into_iter()
        .filter_map(|(dx, dy, _)| grid.offset(node, dx, dy))
        .filter(|&m| grid.is_active(m))
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Dirichlet data sampled on the boundary collar.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    source: Option<String>,
    values: Vec<f64>,
    lipschitz: f64,
}

impl BoundaryData {
    /// Parses `src` and samples it. See [`sample_boundary`].
    pub fn from_expr(src: &str, grid: &Grid) -> Result<Self> {
        let e = parse_expr(src)?;
        let mut b = sample_boundary(&e, grid)?;
        b.source = Some(src.trim().to_string());
        Ok(b)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mut values = vec![0.0; grid.len()];
        for &n in grid.boundary() {
            let v = f(grid.coords(n));
            if !v.is_finite() {
                return Err(Error::BoundaryNode {
                    node: n,
                    coords: grid.coords(n),
                    message: format!("value {v} is not finite"),
                });
            }
            values[n] = v;
        }
        Ok(Self::with_values(grid, values))
    }

    fn with_values(grid: &Grid, values: Vec<f64>) -> Self {
        let b = grid.boundary();
        let mut lip: f64 = 0.0;
        for (i, &a) in b.iter().enumerate() {
            for &c in &b[i + 1..] {
                let d = grid.distance(a, c);
                lip = lip.max((values[a] - values[c]).abs() / d);
            }
        }
        BoundaryData {
            source: None,
            values,
            lipschitz: lip,
        }
    }

    /// Expression text this data was sampled from, if any.
    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    /// Value at a boundary node; zero elsewhere.
    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Full-lattice array, zero off the boundary.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lipschitz_estimate(&self) -> f64 {
        self.lipschitz
    }

    pub fn max(&self, grid: &Grid) -> f64 {
        grid.boundary()
            .iter()
            .map(|&n| self.values[n])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self, grid: &Grid) -> f64 {
        grid.boundary()
            .iter()
            .map(|&n| self.values[n])
            .fold(f64::INFINITY, f64::min)
    }

    /// Applies `f` to every boundary value. The Lipschitz estimate is
    /// recomputed; the source text is dropped.
    pub fn map(&self, grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for &n in grid.boundary() {
            values[n] = f(self.values[n]);
        }
        Self::with_values(grid, values)
    }
}

/// Evaluates `g` at every boundary node of `grid`.
pub fn sample_boundary(g: &Expression, grid: &Grid) -> Result<BoundaryData> {
    if grid.dim() == 1 && g.uses_y() {
        return Err(Error::Parameter(
            "boundary expression uses y on a one-dimensional domain".into(),
        ));
    }
    let mut values = vec![0.0; grid.len()];
    for &n in grid.boundary() {
        let p = grid.coords(n);
        values[n] = g.eval(p[0], p[1]).map_err(|e| Error::BoundaryNode {
            node: n,
            coords: p,
            message: e.to_string(),
        })?;
    }
    Ok(BoundaryData::with_values(grid, values))
}

/// A scalar field on the active nodes of a grid.
///
/// Values are stored for every lattice node; exterior entries are zero and
/// never read.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = (0..grid.len())
            .map(|n| if grid.is_active(n) { c } else { 0.0 })
            .collect();
        GridFunction { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|n| {
                if grid.is_active(n) {
                    f(grid.coords(n))
                } else {
                    0.0
                }
            })
            .collect();
        GridFunction { grid, values }
    }

    /// Takes a full-lattice array. Active entries must be finite.
    pub fn from_values(grid: Arc<Grid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a lattice of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        for (n, v) in values.iter_mut().enumerate() {
            if !grid.is_active(n) {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::NonFinite(format!("value at node {n}")));
            }
        }
        Ok(GridFunction { grid, values })
    }

    /// Interior values from `f`, boundary values from `g`.
    pub fn from_fn_with_boundary(
        grid: Arc<Grid>,
        g: &BoundaryData,
        f: impl FnMut([f64; 2]) -> f64,
    ) -> Self {
        let mut u = Self::from_fn(grid, f);
        u.set_boundary(g);
        u
    }

    pub fn set_boundary(&mut self, g: &BoundaryData) {
        for &n in self.grid.boundary() {
            self.values[n] = g.value(n);
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn set(&mut self, node: usize, v: f64) {
        self.values[node] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Applies `f` to every active value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..self.grid.len())
            .map(|n| {
                if self.grid.is_active(n) {
                    f(self.values[n])
                } else {
                    0.0
                }
            })
            .collect();
        GridFunction {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(
                "functions live on different grids".into(),
            ))
        }
    }

    /// Maximum of `|self − other|` over active nodes.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .grid
            .active_nodes()
            .map(|n| (self.values[n] - other.values[n]).abs())
            .fold(0.0, f64::max))
    }

    /// Maximum of `|self − f|` over active nodes.
    pub fn sup_error(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.grid
            .active_nodes()
            .map(|n| (self.values[n] - f(self.grid.coords(n))).abs())
            .fold(0.0, f64::max)
    }

    /// `(min, max)` over active nodes.
    pub fn range(&self) -> (f64, f64) {
        self.grid
            .active_nodes()
            .map(|n| self.values[n])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        if g.dim() == 1 {
            writeln!(w, "ix,x,class,value")?;
        } else {
            writeln!(w, "ix,iy,x,y,class,value")?;
        }
        for n in g.active_nodes() {
            let (ix, iy) = g.ix_iy(n);
            let p = g.coords(n);
            let c = g.class(n).as_str();
            let v = self.values[n];
            if g.dim() == 1 {
                writeln!(w, "{ix},{:?},{c},{v:?}", p[0])?;
            } else {
                writeln!(w, "{ix},{iy},{:?},{:?},{c},{v:?}", p[0], p[1])?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a field written by [`GridFunction::write_csv`] for `grid`.
    /// Every active node must appear exactly once.
    pub fn read_csv<R: BufRead>(grid: Arc<Grid>, r: R) -> Result<Self> {
        let dim = grid.dim();
        let want = if dim == 1 {
            "ix,x,class,value"
        } else {
            "ix,iy,x,y,class,value"
        };
        let mut lines = r.lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(Error::Csv("empty file".into())),
        };
        if header.trim() != want {
            return Err(Error::Csv(format!(
                "expected header '{want}', found '{}'",
                header.trim()
            )));
        }
        let mut values = vec![0.0; grid.len()];
        let mut seen = vec![false; grid.len()];
        for (i, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let bad = |m: String| Error::Csv(format!("line {lineno}: {m}"));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 + 2 * dim {
                return Err(bad(format!(
                    "expected {} fields, found {}",
                    2 + 2 * dim,
                    fields.len()
                )));
            }
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| bad(format!("bad index '{s}'")))
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("bad number '{s}'")))
            };
            let ix = idx(fields[0])?;
            let iy = if dim == 2 { idx(fields[1])? } else { 0 };
            if ix >= grid.nx() || iy >= grid.ny() {
                return Err(bad(format!("index ({ix}, {iy}) outside the lattice")));
            }
            let n = grid.index(ix, iy);
            let p = grid.coords(n);
            for a in 0..dim {
                let x = num(fields[dim + a])?;
                if (x - p[a]).abs() > 1e-9 * (1.0 + p[a].abs()) {
                    return Err(bad(format!(
                        "coordinate {x} does not match lattice value {}",
                        p[a]
                    )));
                }
            }
            let class = fields[2 * dim];
            if class != grid.class(n).as_str() {
                return Err(bad(format!(
                    "node class '{class}' but grid says '{}'",
                    grid.class(n).as_str()
                )));
            }
            let v = num(fields[2 * dim + 1])?;
            if !v.is_finite() {
                return Err(bad("value is not finite".into()));
            }
            if seen[n] {
                return Err(bad(format!("node ({ix}, {iy}) listed twice")));
            }
            seen[n] = true;
            values[n] = v;
        }
        if let Some(n) = grid.active_nodes().find(|&n| !seen[n]) {
            return Err(Error::Csv(format!("node {:?} missing", grid.ix_iy(n))));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn load_csv(grid: Arc<Grid>, path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(grid, std::io::BufReader::new(f))
    }
}

/// Dirichlet problem `Δ∞u − τ|Du|² = 0` in the domain, `u = g` on the collar.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Arc<Grid>,
    pub g: BoundaryData,
    pub tau: f64,
}

impl Problem {
    pub fn new(grid: Arc<Grid>, g: BoundaryData, tau: f64) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::Parameter(format!("tau must be finite, got {tau}")));
        }
        if g.values().len() != grid.len() {
            return Err(Error::GridMismatch(
                "boundary data sampled on another grid".into(),
            ));
        }
        Ok(Problem { grid, g, tau })
    }

    /// Builds the grid and samples `g_expr` on it.
    pub fn from_expr(spec: DomainSpec, g_expr: &str, tau: f64) -> Result<Self> {
        let grid = Arc::new(Grid::new(spec)?);
        let g = BoundaryData::from_expr(g_expr, &grid)?;
        Self::new(grid, g, tau)
    }

    /// Same grid with boundary data and `tau` transformed.
    pub fn transformed(&self, g: impl Fn(f64) -> f64, tau: f64) -> Self {
        Problem {
            grid: self.grid.clone(),
            g: self.g.map(&self.grid, g),
            tau,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xs(grid: &Grid, nodes: &[usize]) -> Vec<f64> {
        nodes.iter().map(|&n| grid.coords(n)[0]).collect()
    }

    #[test]
    fn interval_classification() {
        let g = Grid::new(DomainSpec::interval(-1.0, 1.0, 0.5)).unwrap();
        assert_eq!(xs(&g, g.interior()), vec![-0.5, 0.0, 0.5]);
        assert_eq!(xs(&g, g.boundary()), vec![-1.0, 1.0]);
    }

    #[test]
    fn square_classification() {
        let g = Grid::new(DomainSpec::rectangle([0.0, 1.0], [0.0, 1.0], 0.5)).unwrap();
        assert_eq!(g.interior().len(), 1);
        assert_eq!(g.coords(g.interior()[0]), [0.5, 0.5]);
        assert_eq!(g.boundary().len(), 8);
        assert_eq!(g.counts().exterior, 0);
    }

    #[test]
    fn bad_specs() {
        assert!(Grid::new(DomainSpec::interval(-1.0, 1.0, 0.0)).is_err());
        assert!(Grid::new(DomainSpec::interval(-1.0, 1.0, -0.1)).is_err());
        assert!(Grid::new(DomainSpec::interval(1.0, 1.0, 0.1)).is_err());
        assert!(Grid::new(DomainSpec::interval(0.0, 1.0, 0.3)).is_err());
        assert!(Grid::new(DomainSpec::interval(0.0, 1.0, 1.0)).is_err());
        assert!(Grid::new(DomainSpec::disc(
            [0.0, 0.0],
            1.0,
            [-1.0, 1.0],
            [-1.0, 1.0],
            0.1
        ))
        .is_err());
    }

    #[test]
    fn disc_partition() {
        let g = Grid::new(DomainSpec::unit_disc(0.1)).unwrap();
        let c = g.counts();
        assert_eq!(c.interior + c.boundary + c.exterior, g.len());
        for &n in g.interior() {
            let p = g.coords(n);
            assert!(p[0] * p[0] + p[1] * p[1] < 1.0);
            for m in g.king_neighbors(n) {
                assert!(g.is_active(m));
            }
        }
        for &n in g.boundary() {
            let p = g.coords(n);
            assert!(p[0] * p[0] + p[1] * p[1] >= 1.0 - 1e-12);
            assert!(g.king_neighbors(n).any(|m| g.is_interior(m)));
        }
        assert!(c.exterior > 0);
    }

    #[test]
    fn stencils() {
        let g = Grid::new(DomainSpec::interval(-1.0, 1.0, 0.1)).unwrap();
        let zero = g
            .interior()
            .iter()
            .copied()
            .find(|&n| g.coords(n)[0].abs() < 1e-12)
            .unwrap();
        let s = ball_stencil(&g, zero, 0.25).unwrap();
        let v = xs(&g, &s);
        let want = [-0.2, -0.1, 0.0, 0.1, 0.2];
        assert_eq!(v.len(), 5);
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let near = g.interior()[0];
        let s = ball_stencil(&g, near, 0.25).unwrap();
        assert!(s.iter().any(|&m| g.class(m) == NodeClass::Boundary));
        assert!(ball_stencil(&g, zero, 0.05).is_err());

        let g2 = Grid::new(DomainSpec::rectangle([-3.0, 3.0], [-3.0, 3.0], 1.0)).unwrap();
        let c = g2.index(3, 3);
        assert_eq!(g2.coords(c), [0.0, 0.0]);
        let s = ball_stencil(&g2, c, 1.0).unwrap();
        assert_eq!(s.len(), 5);
    }

    #[test]
    fn boundary_sampling() {
        let g = Grid::new(DomainSpec::interval(-1.0, 1.0, 0.1)).unwrap();
        let b = BoundaryData::from_expr("0", &g).unwrap();
        assert_eq!(b.lipschitz_estimate(), 0.0);
        for &n in g.boundary() {
            assert_eq!(b.value(n), 0.0);
        }
        let sq = Grid::new(DomainSpec::rectangle([0.0, 1.0], [0.0, 1.0], 0.1)).unwrap();
        let b = BoundaryData::from_expr("x", &sq).unwrap();
        assert!((b.lipschitz_estimate() - 1.0).abs() < 1e-12);
        for &n in sq.boundary() {
            assert_eq!(b.value(n), sq.coords(n)[0]);
        }
        let b = BoundaryData::from_expr("min(1, abs(x))", &g).unwrap();
        for &n in g.boundary() {
            assert_eq!(b.value(n), 1.0);
        }
        match BoundaryData::from_expr("1/(x+1)", &g) {
            Err(Error::BoundaryNode { node, .. }) => assert_eq!(node, 0),
            other => panic!("{other:?}"),
        }
        assert!(BoundaryData::from_expr("y", &g).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = Arc::new(Grid::new(DomainSpec::unit_disc(0.25)).unwrap());
        let u = GridFunction::from_fn(g.clone(), |p| (p[0] * 3.1).sin() + p[1] / 7.0);
        let s = u.to_csv_string();
        let back = GridFunction::read_csv(g.clone(), s.as_bytes()).unwrap();
        assert_eq!(u, back);
        assert!(s.starts_with("ix,iy,x,y,class,value\n"));

        let g1 = Arc::new(Grid::new(DomainSpec::interval(-1.0, 1.0, 0.1)).unwrap());
        let u = GridFunction::from_fn(g1.clone(), |p| p[0] / 3.0);
        let back = GridFunction::read_csv(g1.clone(), u.to_csv_string().as_bytes()).unwrap();
        assert_eq!(u, back);
        let truncated: String = u
            .to_csv_string()
            .lines()
            .take(4)
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(GridFunction::read_csv(g1, truncated.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn stencil_symmetry(k in 1usize..4, i in 0usize..1000, j in 0usize..1000) {
            let g = Grid::new(DomainSpec::unit_disc(0.125)).unwrap();
            let a = g.interior()[i % g.interior().len()];
            let b = g.interior()[j % g.interior().len()];
            let eps = 0.125 * k as f64 + 0.01;
            let sa = ball_stencil(&g, a, eps).unwrap();
            let sb = ball_stencil(&g, b, eps).unwrap();
            prop_assert_eq!(sa.contains(&b), sb.contains(&a));
        }

        #[test]
        fn refinement_keeps_coverage(cells in 2usize..20, w in 0.5f64..3.0) {
            let h = w / cells as f64;
            let coarse = Grid::new(DomainSpec::interval(0.0, w, h)).unwrap();
            let fine = Grid::new(DomainSpec::interval(0.0, w, h / 2.0)).unwrap();
            for &n in coarse.interior() {
                let x = coarse.coords(n)[0];
                let near = fine.interior().iter().any(|&m| (fine.coords(m)[0] - x).abs() <= h / 2.0 + 1e-12);
                prop_assert!(near);
            }
        }

        #[test]
        fn partition(r in 0.3f64..0.9, h in prop::sample::select(vec![0.05, 0.1, 0.2])) {
            let g = Grid::new(DomainSpec::disc([0.0, 0.0], r, [-1.0, 1.0], [-1.0, 1.0], h)).unwrap();
            let c = g.counts();
            prop_assert_eq!(c.interior + c.boundary + c.exterior, g.len());
        }
    }
}
