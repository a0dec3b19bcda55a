//! Eigenpair localization and eigencurve tracing on reconstructed boundary functions.
//!
//! Eigenpairs are common zeros of the surfaces built at `x = 1` and `x = c`. The
//! zero sets are extracted with marching squares, the two polyline families
//! are intersected cell by cell, and every intersection seeds a 2-D Newton
//! iteration on the pair of sampled surfaces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::oracle::direct_characteristics;
use crate::problem::Problem;
use crate::sampling::{CharacteristicSurface, SurfaceId};

pub type Point = (f64, f64);

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid search box: {0}")]
    BadBox(String),
    #[error("arc step must be positive and finite (got {0})")]
    ArcStep(f64),
    #[error("start point ({0}, {1}) lies outside the search box")]
    StartOutside(f64, f64),
    #[error("start point ({mu1}, {mu2}) is not on the zero set: |B| = {value:e} exceeds {limit:e}")]
    StartOffCurve { mu1: f64, mu2: f64, value: f64, limit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    mu1: (f64, f64),
    mu2: (f64, f64),
    grid: usize,
}

impl Default for SearchBox {
    fn default() -> Self {
        SearchBox { mu1: (0.0, 50.0), mu2: (0.0, 50.0), grid: 200 }
    }
}

impl SearchBox {
    pub fn new(mu1: (f64, f64), mu2: (f64, f64), grid: usize) -> Result<Self, SolverError> {
        for (name, (lo, hi)) in [("mu1", mu1), ("mu2", mu2)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SolverError::BadBox(format!("{name} range [{lo}, {hi}] needs finite lo < hi")));
            }
        }
        if grid < 2 {
            return Err(SolverError::BadBox(format!("grid must be at least 2 (got {grid})")));
        }
        Ok(SearchBox { mu1, mu2, grid })
    }

    /// Parses `lo1:hi1:lo2:hi2`.
    pub fn parse_ranges(text: &str, grid: usize) -> Result<Self, SolverError> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 4 {
            return Err(SolverError::BadBox(format!("expected lo1:hi1:lo2:hi2, got '{text}'")));
        }
        let mut v = [0.0; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.trim().parse().map_err(|_| SolverError::BadBox(format!("bad number '{p}' in '{text}'")))?;
        }
        Self::new((v[0], v[1]), (v[2], v[3]), grid)
    }

    pub fn mu1(&self) -> (f64, f64) {
        self.mu1
    }

    pub fn mu2(&self) -> (f64, f64) {
        self.mu2
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn with_grid(&self, grid: usize) -> Result<Self, SolverError> {
        Self::new(self.mu1, self.mu2, grid)
    }

    pub fn contains(&self, (a, b): Point) -> bool {
        a >= self.mu1.0 && a <= self.mu1.1 && b >= self.mu2.0 && b <= self.mu2.1
    }

    fn contains_with_margin(&self, (a, b): Point, margin: f64) -> bool {
        a >= self.mu1.0 - margin && a <= self.mu1.1 + margin && b >= self.mu2.0 - margin && b <= self.mu2.1 + margin
    }

    pub fn cell_size(&self) -> (f64, f64) {
        let g = self.grid as f64;
        ((self.mu1.1 - self.mu1.0) / g, (self.mu2.1 - self.mu2.0) / g)
    }

    fn coord(range: (f64, f64), i: usize, grid: usize) -> f64 {
        if i == grid {
            range.1
        } else {
            range.0 + (range.1 - range.0) * (i as f64 / grid as f64)
        }
    }

    /// Grid node `(i, j)`, with `i` along `mu1`.
    pub fn node(&self, i: usize, j: usize) -> Point {
        (Self::coord(self.mu1, i, self.grid), Self::coord(self.mu2, j, self.grid))
    }

    /// Intersection with `[-h1, h1] x [-h2, h2]`, or `None` if it is empty.
    pub fn clip(&self, (h1, h2): (f64, f64)) -> Option<SearchBox> {
        let mu1 = (self.mu1.0.max(-h1), self.mu1.1.min(h1));
        let mu2 = (self.mu2.0.max(-h2), self.mu2.1.min(h2));
        SearchBox::new(mu1, mu2, self.grid).ok()
    }

    /// Mirror image under `mu1 -> -mu1`.
    pub fn reflect_mu1(&self) -> SearchBox {
        SearchBox { mu1: (-self.mu1.1, -self.mu1.0), ..*self }
    }

    /// Where the segment from `p` along unit direction `t` leaves the box.
    fn exit_distance(&self, p: Point, t: Point) -> f64 {
        let mut best = f64::INFINITY;
        for (x, d, (lo, hi)) in [(p.0, t.0, self.mu1), (p.1, t.1, self.mu2)] {
            if d > 0.0 {
                best = best.min((hi - x) / d);
            } else if d < 0.0 {
                best = best.min((lo - x) / d);
            }
        }
        best.max(0.0)
    }
}

impl fmt::Display for SearchBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] x [{}, {}]", self.mu1.0, self.mu1.1, self.mu2.0, self.mu2.1)
    }
}

impl FromStr for SearchBox {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_ranges(s, SearchBox::default().grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub mu1: f64,
    pub mu2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub residual1: f64,
    pub residual2: f64,
    pub refined_by_oracle: bool,
    /// Root of the sampled surfaces this pair came from.
    pub sampled: Point,
    /// The two zero curves met at a near-zero angle.
    pub tangential: bool,
}

impl EigenPair {
    pub fn new(mu: Point, residuals: (f64, f64), sampled: Point, tangential: bool, refined_by_oracle: bool) -> Self {
        EigenPair {
            mu1: mu.0,
            mu2: mu.1,
            lambda1: mu.0 * mu.0,
            lambda2: mu.1 * mu.1,
            residual1: residuals.0,
            residual2: residuals.1,
            refined_by_oracle,
            sampled,
            tangential,
        }
    }

    pub fn mu(&self) -> Point {
        (self.mu1, self.mu2)
    }

    fn residual_sum(&self) -> f64 {
        self.residual1 + self.residual2
    }
}

/// Order used for all eigenpair output: `mu1^2 + mu2^2`, then `mu1`, then `mu2`.
pub fn eigenpair_order(a: &EigenPair, b: &EigenPair) -> std::cmp::Ordering {
    (a.lambda1 + a.lambda2)
        .total_cmp(&(b.lambda1 + b.lambda2))
        .then(a.mu1.total_cmp(&b.mu1))
        .then(a.mu2.total_cmp(&b.mu2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSegment {
    pub surface_id: SurfaceId,
    pub points: Vec<Point>,
    pub arc_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    BoxClipped { requested: SearchBox, used: SearchBox },
    BoxOutsideHull { requested: SearchBox },
    DegenerateCells { surface: SurfaceId, cells: usize },
    NewtonDiverged { seed: Point },
    Tangential { mu: Point },
    ZeroLineFiltered { mu: Point, distance: f64 },
    ZeroLineConfirmed { mu: Point, distance: f64 },
    GridInconsistent { mu: Point, grid: usize },
    OracleUnrefined { mu: Point },
    OracleMerged { mu: Point },
    CorrectorFailed { mu: Point },
    Bridged { from: Point, to: Point },
    UnresolvedExit { from: Point },
    StepLimit { steps: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::BoxClipped { requested, used } => {
                write!(f, "search box {requested} exceeds the lattice hull; searching {used}")
            }
            Diagnostic::BoxOutsideHull { requested } => {
                write!(f, "search box {requested} does not meet the lattice hull; nothing searched")
            }
            Diagnostic::DegenerateCells { surface, cells } => {
                write!(f, "{surface}: {cells} grid cells with all corners exactly zero")
            }
            Diagnostic::NewtonDiverged { seed } => write!(f, "Newton diverged from seed ({}, {})", seed.0, seed.1),
            Diagnostic::Tangential { mu } => {
                write!(f, "suspected tangential intersection at ({}, {}): Jacobian nearly singular", mu.0, mu.1)
            }
            Diagnostic::ZeroLineFiltered { mu, distance } => write!(
                f,
                "root ({}, {}) is {distance:.2e} rad from a regularizer zero line and was discarded",
                mu.0, mu.1
            ),
            Diagnostic::ZeroLineConfirmed { mu, distance } => write!(
                f,
                "root ({}, {}) is {distance:.2e} rad from a regularizer zero line; kept after direct check",
                mu.0, mu.1
            ),
            Diagnostic::GridInconsistent { mu, grid } => {
                write!(f, "root ({}, {}) was found only on the {grid}-cell grid", mu.0, mu.1)
            }
            Diagnostic::OracleUnrefined { mu } => {
                write!(f, "direct refinement of ({}, {}) did not converge; sampled root kept", mu.0, mu.1)
            }
            Diagnostic::OracleMerged { mu } => {
                write!(f, "root ({}, {}) refined onto an already reported eigenpair", mu.0, mu.1)
            }
            Diagnostic::CorrectorFailed { mu } => {
                write!(f, "corrector failed near ({}, {}) at the minimum step; curve ends there", mu.0, mu.1)
            }
            Diagnostic::Bridged { from, to } => write!(
                f,
                "curve bridged from ({}, {}) to ({}, {}) across a zero-line crossing; a new piece starts there",
                from.0, from.1, to.0, to.1
            ),
            Diagnostic::UnresolvedExit { from } => write!(
                f,
                "curve runs from ({}, {}) to the box wall through a stretch the samples do not resolve",
                from.0, from.1
            ),
            Diagnostic::StepLimit { steps } => write!(f, "curve tracing stopped after {steps} steps"),
        }
    }
}

/// Surface values on the `(grid+1)^2` nodes of a box.
struct GridValues {
    bx: SearchBox,
    values: Vec<f64>,
    scale: f64,
}

impl GridValues {
    fn sample(surface: &CharacteristicSurface, bx: SearchBox) -> Self {
        let g = bx.grid;
        let values: Vec<f64> = (0..=g)
            .into_par_iter()
            .flat_map_iter(|i| (0..=g).map(move |j| (i, j)))
            .map(|(i, j)| {
                let (a, b) = bx.node(i, j);
                surface.value(a, b)
            })
            .collect();
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        GridValues { bx, values, scale }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.bx.grid + 1) + j]
    }
}

type EdgeId = usize;

fn h_edge(g: usize, i: usize, j: usize) -> EdgeId {
    2 * (i * (g + 1) + j)
}

fn v_edge(g: usize, i: usize, j: usize) -> EdgeId {
    2 * (i * (g + 1) + j) + 1
}

fn edge_nodes(g: usize, e: EdgeId) -> ((usize, usize), (usize, usize)) {
    let node = e / 2;
    let (i, j) = (node / (g + 1), node % (g + 1));
    if e % 2 == 0 {
        ((i, j), (i + 1, j))
    } else {
        ((i, j), (i, j + 1))
    }
}

/// Zero set of one surface over a box.
#[derive(Debug, Clone)]
pub struct Contours {
    pub segments: Vec<CurveSegment>,
    pub degenerate_cells: Vec<(usize, usize)>,
    /// `max |B|` over the grid nodes.
    pub scale: f64,
    /// Line pieces per grid cell, keyed by `(i, j)`.
    pub cell_pieces: BTreeMap<(usize, usize), Vec<[Point; 2]>>,
    pub search_box: SearchBox,
}

/// Marching-squares extraction of `{B = 0}` with edge crossings refined by bisection.
pub fn zero_contours(surface: &CharacteristicSurface, bx: &SearchBox) -> Contours {
    let (h1, h2) = surface.table().hull();
    if !(bx.mu1.0.abs().max(bx.mu1.1.abs()) <= h1 && bx.mu2.0.abs().max(bx.mu2.1.abs()) <= h2) {
        warn!("{}: search box {bx} extends beyond the lattice hull |mu1| <= {h1:.4}, |mu2| <= {h2:.4}", surface.id());
    }
    let grid = GridValues::sample(surface, *bx);
    extract(surface, &grid)
}

fn extract(surface: &CharacteristicSurface, grid: &GridValues) -> Contours {
    let g = grid.bx.grid;
    let pos = |i: usize, j: usize| grid.at(i, j) > 0.0;

    let mut crossing_edges = Vec::new();
    for i in 0..=g {
        for j in 0..=g {
            if i < g && pos(i, j) != pos(i + 1, j) {
                crossing_edges.push(h_edge(g, i, j));
            }
            if j < g && pos(i, j) != pos(i, j + 1) {
                crossing_edges.push(v_edge(g, i, j));
            }
        }
    }
    let tol = 1e-10 * grid.scale;
    let points: Vec<Point> = crossing_edges
        .par_iter()
        .map(|&e| {
            let ((ia, ja), (ib, jb)) = edge_nodes(g, e);
            edge_root(surface, grid.bx.node(ia, ja), grid.at(ia, ja), grid.bx.node(ib, jb), tol)
        })
        .collect();
    let edge_point: BTreeMap<EdgeId, Point> = crossing_edges.iter().copied().zip(points).collect();

    // cells in parallel, saddles may need the centre value
    let cells: Vec<((usize, usize), Vec<(EdgeId, EdgeId)>, bool)> = (0..g)
        .into_par_iter()
        .flat_map_iter(|i| (0..g).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let corners = [grid.at(i, j), grid.at(i + 1, j), grid.at(i + 1, j + 1), grid.at(i, j + 1)];
            if corners.iter().all(|&v| v == 0.0) {
                return Some(((i, j), Vec::new(), true));
            }
            let [s00, s10, s11, s01] = corners.map(|v| v > 0.0);
            let bottom = h_edge(g, i, j);
            let top = h_edge(g, i, j + 1);
            let left = v_edge(g, i, j);
            let right = v_edge(g, i + 1, j);
            let mut crossing = Vec::with_capacity(4);
            if s00 != s10 {
                crossing.push(bottom);
            }
            if s10 != s11 {
                crossing.push(right);
            }
            if s11 != s01 {
                crossing.push(top);
            }
            if s01 != s00 {
                crossing.push(left);
            }
            match crossing.len() {
                0 => None,
                2 => Some(((i, j), vec![(crossing[0], crossing[1])], false)),
                _ => {
                    let (a0, b0) = grid.bx.node(i, j);
                    let (a1, b1) = grid.bx.node(i + 1, j + 1);
                    let centre = surface.value(0.5 * (a0 + a1), 0.5 * (b0 + b1)) > 0.0;
                    let pieces = if centre == s00 {
                        // the 00-11 diagonal is connected, cut off corners 10 and 01
                        vec![(bottom, right), (top, left)]
                    } else {
                        vec![(left, bottom), (right, top)]
                    };
                    Some(((i, j), pieces, false))
                }
            }
        })
        .collect();

    let mut degenerate_cells = Vec::new();
    let mut cell_pieces = BTreeMap::new();
    let mut links: BTreeMap<EdgeId, Vec<EdgeId>> = BTreeMap::new();
    for (cell, pieces, degenerate) in cells {
        if degenerate {
            degenerate_cells.push(cell);
            continue;
        }
        let mut lines = Vec::with_capacity(pieces.len());
        for (a, b) in pieces {
            lines.push([edge_point[&a], edge_point[&b]]);
            links.entry(a).or_default().push(b);
            links.entry(b).or_default().push(a);
        }
        cell_pieces.insert(cell, lines);
    }

    let arc_step = {
        let (d1, d2) = grid.bx.cell_size();
        d1.hypot(d2)
    };
    let mut segments = Vec::new();
    let mut visited: BTreeSet<EdgeId> = BTreeSet::new();
    let walk = |start: EdgeId, visited: &mut BTreeSet<EdgeId>| {
        let mut chain = vec![start];
        visited.insert(start);
        let mut prev = None;
        let mut cur = start;
        loop {
            let next = links[&cur].iter().copied().find(|&n| Some(n) != prev && !visited.contains(&n));
            match next {
                Some(n) => {
                    visited.insert(n);
                    chain.push(n);
                    prev = Some(cur);
                    cur = n;
                }
                None => {
                    // close the loop if we came back round to the start
                    if chain.len() > 2 && links[&cur].contains(&start) {
                        chain.push(start);
                    }
                    break;
                }
            }
        }
        CurveSegment {
            surface_id: surface.id(),
            points: chain.iter().map(|e| edge_point[e]).collect(),
            arc_step,
        }
    };
    // open chains start at edges with a single neighbour (the box boundary)
    let ends: Vec<EdgeId> = links.iter().filter(|(_, n)| n.len() == 1).map(|(&e, _)| e).collect();
    for e in ends {
        if !visited.contains(&e) {
            segments.push(walk(e, &mut visited));
        }
    }
    let rest: Vec<EdgeId> = links.keys().copied().collect();
    for e in rest {
        if !visited.contains(&e) {
            segments.push(walk(e, &mut visited));
        }
    }

    Contours { segments, degenerate_cells, scale: grid.scale, cell_pieces, search_box: grid.bx }
}

/// Bisection along a grid edge from `a` (value `fa`) towards `b`.
fn edge_root(surface: &CharacteristicSurface, a: Point, fa: f64, b: Point, tol: f64) -> Point {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let lerp = |t: f64| (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
    let len = (b.0 - a.0).hypot(b.1 - a.1);
    let sign_a = fa > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = lerp(mid);
        let v = surface.value(p.0, p.1);
        if v.abs() <= tol || (hi - lo) * len <= 1e-13 {
            return p;
        }
        if (v > 0.0) == sign_a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lerp(0.5 * (lo + hi))
}

fn segment_intersection(p: [Point; 2], q: [Point; 2]) -> Option<Point> {
    let r = (p[1].0 - p[0].0, p[1].1 - p[0].1);
    let s = (q[1].0 - q[0].0, q[1].1 - q[0].1);
    let denom = r.0 * s.1 - r.1 * s.0;
    let scale = r.0.hypot(r.1) * s.0.hypot(s.1);
    if denom.abs() <= 1e-14 * scale {
        return None;
    }
    let w = (q[0].0 - p[0].0, q[0].1 - p[0].1);
    let t = (w.0 * s.1 - w.1 * s.0) / denom;
    let u = (w.0 * r.1 - w.1 * r.0) / denom;
    let eps = 1e-12;
    if (-eps..=1.0 + eps).contains(&t) && (-eps..=1.0 + eps).contains(&u) {
        Some((p[0].0 + t * r.0, p[0].1 + t * r.1))
    } else {
        None
    }
}

/// Every crossing of a piece of `a` with a piece of `b` in the same cell.
pub fn intersection_seeds(a: &Contours, b: &Contours) -> Vec<Point> {
    let mut seeds = Vec::new();
    for (cell, pa) in &a.cell_pieces {
        if let Some(pb) = b.cell_pieces.get(cell) {
            for &x in pa {
                for &y in pb {
                    if let Some(p) = segment_intersection(x, y) {
                        seeds.push(p);
                    }
                }
            }
        }
    }
    seeds
}

/// Distance from `p` to the segment `a`-`b`.
fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = (b.0 - a.0, b.1 - a.1);
    let len2 = d.0 * d.0 + d.1 * d.1;
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p.0 - a.0) * d.0 + (p.1 - a.1) * d.1) / len2).clamp(0.0, 1.0);
    dist(p, (a.0 + t * d.0, a.1 + t * d.1))
}

/// Least-squares step of minimal norm for a nearly rank-deficient 2x2 system.
fn damped_step(j: [[f64; 2]; 2], f: [f64; 2]) -> Point {
    // -J^T (J J^T + lambda I)^{-1} f
    let norm2 = j[0][0].powi(2) + j[0][1].powi(2) + j[1][0].powi(2) + j[1][1].powi(2);
    let lambda = 1e-12 * norm2.max(f64::MIN_POSITIVE);
    let a = j[0][0] * j[0][0] + j[0][1] * j[0][1] + lambda;
    let b = j[0][0] * j[1][0] + j[0][1] * j[1][1];
    let d = j[1][0] * j[1][0] + j[1][1] * j[1][1] + lambda;
    let det = a * d - b * b;
    let z0 = (d * f[0] - b * f[1]) / det;
    let z1 = (a * f[1] - b * f[0]) / det;
    (-(j[0][0] * z0 + j[1][0] * z1), -(j[0][1] * z0 + j[1][1] * z1))
}

/// `|sin|` of the angle between the two rows.
fn row_angle(j: [[f64; 2]; 2]) -> f64 {
    let n0 = j[0][0].hypot(j[0][1]);
    let n1 = j[1][0].hypot(j[1][1]);
    if n0 == 0.0 || n1 == 0.0 {
        return 0.0;
    }
    ((j[0][0] * j[1][1] - j[0][1] * j[1][0]) / (n0 * n1)).abs()
}

const TANGENTIAL_SIN: f64 = 1e-6;

struct NewtonResult {
    mu: Point,
    tangential: bool,
}

/// Newton iteration on a map of the plane. `jacobian` returns the value with its Jacobian.
fn newton_2d<F>(
    mut eval: F,
    seed: Point,
    max_iter: usize,
    max_step: f64,
    max_travel: f64,
    step_tol: f64,
    accept: impl Fn([f64; 2]) -> bool,
) -> Option<NewtonResult>
where
    F: FnMut(Point) -> Option<([f64; 2], [[f64; 2]; 2])>,
{
    let mut mu = seed;
    let mut tangential = false;
    for _ in 0..max_iter {
        let (f, j) = eval(mu)?;
        let singular = row_angle(j) < TANGENTIAL_SIN;
        tangential |= singular;
        let mut step = if singular {
            damped_step(j, f)
        } else {
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            (-(j[1][1] * f[0] - j[0][1] * f[1]) / det, -(j[0][0] * f[1] - j[1][0] * f[0]) / det)
        };
        if !(step.0.is_finite() && step.1.is_finite()) {
            return None;
        }
        let len = step.0.hypot(step.1);
        if len > max_step {
            step = (step.0 * max_step / len, step.1 * max_step / len);
        }
        mu = (mu.0 + step.0, mu.1 + step.1);
        if (mu.0 - seed.0).hypot(mu.1 - seed.1) > max_travel {
            return None;
        }
        if len <= step_tol * (1.0 + mu.0.hypot(mu.1)) {
            break;
        }
    }
    let (f, j) = eval(mu)?;
    tangential |= row_angle(j) < TANGENTIAL_SIN;
    accept(f).then_some(NewtonResult { mu, tangential })
}

fn forward_jacobian(f0: [f64; 2], mu: Point, mut eval: impl FnMut(Point) -> [f64; 2]) -> [[f64; 2]; 2] {
    let h1 = 1e-6 * (1.0 + mu.0.abs());
    let h2 = 1e-6 * (1.0 + mu.1.abs());
    let a = eval((mu.0 + h1, mu.1));
    let b = eval((mu.0, mu.1 + h2));
    [[(a[0] - f0[0]) / h1, (b[0] - f0[0]) / h2], [(a[1] - f0[1]) / h1, (b[1] - f0[1]) / h2]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FindOptions {
    /// Roots closer than this to a regularizer zero line (radians) need direct confirmation.
    pub exclusion_band: f64,
    pub dedup_tol: f64,
    /// Repeat the search on a grid with half as many cells and merge the results.
    pub grid_check: bool,
}

impl Default for FindOptions {
    fn default() -> Self {
        FindOptions { exclusion_band: 1e-4, dedup_tol: 1e-4, grid_check: true }
    }
}

#[derive(Debug, Clone)]
pub struct EigenSearch {
    pub pairs: Vec<EigenPair>,
    pub diagnostics: Vec<Diagnostic>,
    /// The box actually searched after clipping to the lattice hull.
    pub searched: Option<SearchBox>,
}

/// Common zeros of the `x = 1` surface `s1` and the `x = c` surface `s2` inside `bx`.
///
/// Both surfaces are searched in regularized mode. When `oracle` is given, roots
/// inside the zero-line exclusion band are kept only if direct shooting
/// confirms them.
pub fn find_eigenpairs(
    s1: &CharacteristicSurface,
    s2: &CharacteristicSurface,
    bx: &SearchBox,
    opts: &FindOptions,
    oracle: Option<&Problem>,
) -> EigenSearch {
    let s1 = s1.with_mode(crate::sampling::SurfaceMode::Regularized);
    let s2 = s2.with_mode(crate::sampling::SurfaceMode::Regularized);
    let mut diagnostics = Vec::new();

    let (a1, b1) = s1.table().hull();
    let (a2, b2) = s2.table().hull();
    let hull = (a1.min(a2), b1.min(b2));
    let Some(used) = bx.clip(hull) else {
        warn!("search box {bx} does not meet the lattice hull");
        diagnostics.push(Diagnostic::BoxOutsideHull { requested: *bx });
        return EigenSearch { pairs: Vec::new(), diagnostics, searched: None };
    };
    if used != *bx {
        warn!("search box {bx} clipped to the lattice hull {used}");
        diagnostics.push(Diagnostic::BoxClipped { requested: *bx, used });
    }

    let mut pairs = search_grid(&s1, &s2, &used, opts, &mut diagnostics);
    if opts.grid_check && used.grid >= 4 {
        let coarse_box = used.with_grid(used.grid / 2).expect("grid stays valid");
        let mut scratch = Vec::new();
        let coarse = search_grid(&s1, &s2, &coarse_box, opts, &mut scratch);
        for p in &pairs {
            if !coarse.iter().any(|q| dist(p.mu(), q.mu()) < opts.dedup_tol) {
                diagnostics.push(Diagnostic::GridInconsistent { mu: p.mu(), grid: used.grid });
            }
        }
        for q in coarse {
            if !pairs.iter().any(|p| dist(p.mu(), q.mu()) < opts.dedup_tol) {
                diagnostics.push(Diagnostic::GridInconsistent { mu: q.mu(), grid: coarse_box.grid });
                pairs.push(q);
            }
        }
        pairs = dedup(pairs, opts.dedup_tol);
    }

    let filtered = exclusion_filter(pairs, &s1, &s2, opts.exclusion_band, oracle);
    diagnostics.extend(filtered.diagnostics);
    let mut pairs = filtered.pairs;
    pairs.sort_by(eigenpair_order);
    for d in &diagnostics {
        debug!("{d}");
    }
    EigenSearch { pairs, diagnostics, searched: Some(used) }
}

fn dist(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn search_grid(
    s1: &CharacteristicSurface,
    s2: &CharacteristicSurface,
    bx: &SearchBox,
    opts: &FindOptions,
    diagnostics: &mut Vec<Diagnostic>,
) -> Vec<EigenPair> {
    let (c1, c2) = rayon::join(|| zero_contours(s1, bx), || zero_contours(s2, bx));
    for c in [&c1, &c2] {
        if !c.degenerate_cells.is_empty() {
            let surface = c.segments.first().map(|s| s.surface_id).unwrap_or(SurfaceId::B1);
            diagnostics.push(Diagnostic::DegenerateCells { surface, cells: c.degenerate_cells.len() });
        }
    }
    let seeds = intersection_seeds(&c1, &c2);
    let scales = (c1.scale.max(f64::MIN_POSITIVE), c2.scale.max(f64::MIN_POSITIVE));
    let (d1, d2) = bx.cell_size();
    let cell = d1.hypot(d2);

    let results: Vec<Result<EigenPair, Point>> = seeds
        .par_iter()
        .map(|&seed| {
            let eval = |mu: Point| [s1.value(mu.0, mu.1) / scales.0, s2.value(mu.0, mu.1) / scales.1];
            let found = newton_2d(
                |mu| {
                    if !bx.contains_with_margin(mu, cell) {
                        return None;
                    }
                    let f = eval(mu);
                    Some((f, forward_jacobian(f, mu, eval)))
                },
                seed,
                60,
                2.0 * cell,
                4.0 * cell,
                1e-12,
                |f| f[0].abs() <= 1e-8 && f[1].abs() <= 1e-8,
            );
            match found {
                Some(r) if bx.contains(r.mu) => {
                    let res1 = s1.deregularized(r.mu.0, r.mu.1).value.abs();
                    let res2 = s2.deregularized(r.mu.0, r.mu.1).value.abs();
                    Ok(EigenPair::new(r.mu, (res1, res2), r.mu, r.tangential, false))
                }
                _ => Err(seed),
            }
        })
        .collect();

    let mut pairs = Vec::new();
    for r in results {
        match r {
            Ok(p) => {
                if p.tangential {
                    diagnostics.push(Diagnostic::Tangential { mu: p.mu() });
                }
                pairs.push(p)
            }
            Err(seed) => diagnostics.push(Diagnostic::NewtonDiverged { seed }),
        }
    }
    dedup(pairs, opts.dedup_tol)
}

/// Merge pairs closer than `tol`, keeping the smaller residual. Output is sorted.
pub fn dedup(mut pairs: Vec<EigenPair>, tol: f64) -> Vec<EigenPair> {
    pairs.sort_by(eigenpair_order);
    let mut out: Vec<EigenPair> = Vec::with_capacity(pairs.len());
    for p in pairs {
        match out.iter_mut().find(|q| dist(q.mu(), p.mu()) < tol) {
            Some(q) => {
                if p.residual_sum() < q.residual_sum() {
                    *q = p;
                }
            }
            None => out.push(p),
        }
    }
    out.sort_by(eigenpair_order);
    out
}

pub struct Filtered {
    pub pairs: Vec<EigenPair>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Drop roots within `band` radians of a zero line of either regularizer unless
/// direct shooting confirms them to 1e-6.
pub fn exclusion_filter(
    pairs: Vec<EigenPair>,
    s1: &CharacteristicSurface,
    s2: &CharacteristicSurface,
    band: f64,
    oracle: Option<&Problem>,
) -> Filtered {
    let mut out = Filtered { pairs: Vec::new(), diagnostics: Vec::new() };
    for p in pairs {
        let (a, b) = p.mu();
        let d = s1.table().zero_line_distance(a, b).min(s2.table().zero_line_distance(a, b));
        if d >= band {
            out.pairs.push(p);
            continue;
        }
        let confirmed = oracle.is_some_and(|problem| {
            let r = refine_with_oracle(problem, &p);
            r.refined_by_oracle && r.residual1 <= 1e-6 && r.residual2 <= 1e-6 && dist(r.mu(), p.mu()) <= 1e-2
        });
        if confirmed {
            out.diagnostics.push(Diagnostic::ZeroLineConfirmed { mu: p.mu(), distance: d });
            out.pairs.push(p);
        } else {
            out.diagnostics.push(Diagnostic::ZeroLineFiltered { mu: p.mu(), distance: d });
        }
    }
    out
}

/// Residual bound for pairs refined by direct shooting.
pub const ORACLE_TOL: f64 = 1e-9;

/// Newton on `(y(1), y(c))` from direct shooting, starting at `e`.
/// Returns `e` unchanged with `refined_by_oracle = false` if it does not converge.
pub fn refine_with_oracle(problem: &Problem, e: &EigenPair) -> EigenPair {
    let eval = |mu: Point| direct_characteristics(problem, mu.0, mu.1).ok().map(|(a, b)| [a, b]);
    let found = newton_2d(
        |mu| {
            let f = eval(mu)?;
            let h1 = 1e-6 * (1.0 + mu.0.abs());
            let h2 = 1e-6 * (1.0 + mu.1.abs());
            let p1 = eval((mu.0 + h1, mu.1))?;
            let m1 = eval((mu.0 - h1, mu.1))?;
            let p2 = eval((mu.0, mu.1 + h2))?;
            let m2 = eval((mu.0, mu.1 - h2))?;
            let j = [
                [(p1[0] - m1[0]) / (2.0 * h1), (p2[0] - m2[0]) / (2.0 * h2)],
                [(p1[1] - m1[1]) / (2.0 * h1), (p2[1] - m2[1]) / (2.0 * h2)],
            ];
            Some((f, j))
        },
        e.mu(),
        40,
        0.25,
        1.0,
        1e-14,
        |f| f[0].abs() <= ORACLE_TOL && f[1].abs() <= ORACLE_TOL,
    );
    match found.and_then(|r| eval(r.mu).map(|f| (r, f))) {
        Some((r, f)) => EigenPair::new(r.mu, (f[0].abs(), f[1].abs()), e.sampled, e.tangential || r.tangential, true),
        None => EigenPair { refined_by_oracle: false, ..*e },
    }
}

/// Refine every pair in parallel, merge pairs that land on the same root and sort.
pub fn refine_all(problem: &Problem, pairs: &[EigenPair], dedup_tol: f64) -> (Vec<EigenPair>, Vec<Diagnostic>) {
    let refined: Vec<EigenPair> = pairs.par_iter().map(|p| refine_with_oracle(problem, p)).collect();
    let mut diagnostics = Vec::new();
    for p in &refined {
        if !p.refined_by_oracle {
            diagnostics.push(Diagnostic::OracleUnrefined { mu: p.mu() });
        }
    }
    let before = refined.clone();
    let merged = dedup(refined, dedup_tol);
    for p in &before {
        if !merged.iter().any(|q| q == p) {
            diagnostics.push(Diagnostic::OracleMerged { mu: p.sampled });
        }
    }
    (merged, diagnostics)
}

#[derive(Debug, Clone)]
pub struct Trace {
    /// Pieces in order along the curve. A new piece starts wherever the
    /// tracer had to bridge a stretch it could not resolve.
    pub segments: Vec<CurveSegment>,
    pub closed: bool,
    pub exited: bool,
    pub diagnostics: Vec<Diagnostic>,
}

const CORRECTOR_TOL: f64 = 1e-8;
const MAX_TRACE_STEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Predictor steps are lengthened to land at least this far (radians) from
    /// a regularizer zero line, where the reconstructed sign is unreliable.
    pub leap_band: f64,
    /// Longest extrapolation (in mu) across a stretch where the corrector fails.
    /// Zero disables bridging.
    pub max_bridge: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { leap_band: 0.1, max_bridge: 1.0 }
    }
}

/// Pseudo-arclength continuation of `{B = 0}` from `start`, with default options.
pub fn trace_curve(
    surface: &CharacteristicSurface,
    start: Point,
    arc_step: f64,
    bx: &SearchBox,
) -> Result<Trace, SolverError> {
    trace_curve_with(surface, start, arc_step, bx, &TraceOptions::default())
}

/// Pseudo-arclength continuation of `{B = 0}` from `start`.
///
/// The regularized surface is followed in one direction until the curve
/// closes, leaves the box, or the corrector gives up; if it leaves the box it
/// is then followed backwards from `start` so the segment spans the box.
/// Residuals are measured against the largest stored sample.
pub fn trace_curve_with(
    surface: &CharacteristicSurface,
    start: Point,
    arc_step: f64,
    bx: &SearchBox,
    opts: &TraceOptions,
) -> Result<Trace, SolverError> {
    if !(arc_step.is_finite() && arc_step > 0.0) {
        return Err(SolverError::ArcStep(arc_step));
    }
    if !bx.contains(start) {
        return Err(SolverError::StartOutside(start.0, start.1));
    }
    let surface = &surface.with_mode(crate::sampling::SurfaceMode::Regularized);
    let scale = surface.table().max_abs_sample().max(f64::MIN_POSITIVE);
    let tracer = Tracer { surface, scale, arc_step, bx, leap_band: opts.leap_band, max_bridge: opts.max_bridge };

    let b0 = surface.value(start.0, start.1);
    let limit = 1e-6 * scale;
    let corrected = if b0.abs() <= limit { tracer.project(start, arc_step) } else { None };
    let Some(origin) = corrected else {
        return Err(SolverError::StartOffCurve { mu1: start.0, mu2: start.1, value: b0.abs(), limit });
    };

    let t0 = tracer.tangent(origin, None).ok_or(SolverError::StartOffCurve {
        mu1: start.0,
        mu2: start.1,
        value: b0.abs(),
        limit,
    })?;
    let mut diagnostics = Vec::new();
    let forward = tracer.follow(origin, t0, &mut diagnostics);
    let mut pieces = forward.pieces;
    let (closed, mut exited) = (forward.closed, forward.exited);
    if !closed {
        let backward = tracer.follow(origin, (-t0.0, -t0.1), &mut diagnostics);
        exited |= backward.exited;
        let mut back: Vec<Vec<Point>> = backward.pieces.into_iter().rev().map(|mut p| {
            p.reverse();
            p
        }).collect();
        // the last backward piece ends at the origin, where the first forward piece starts
        let joint = back.last_mut().expect("walk has a piece");
        joint.pop();
        joint.extend(pieces.remove(0));
        back.extend(pieces);
        pieces = back;
    }
    let segments =
        pieces.into_iter().map(|points| CurveSegment { surface_id: surface.id(), points, arc_step }).collect();
    Ok(Trace { segments, closed, exited, diagnostics })
}

struct Tracer<'a> {
    surface: &'a CharacteristicSurface,
    scale: f64,
    arc_step: f64,
    bx: &'a SearchBox,
    leap_band: f64,
    max_bridge: f64,
}

enum Bridge {
    Landed(Point, Point),
    /// No landing before the continuation reaches the box wall.
    Wall,
    Nothing,
}

struct Walk {
    pieces: Vec<Vec<Point>>,
    closed: bool,
    exited: bool,
}

impl Tracer<'_> {
    fn value(&self, p: Point) -> f64 {
        self.surface.value(p.0, p.1)
    }

    fn gradient(&self, p: Point) -> Point {
        let h1 = 1e-6 * (1.0 + p.0.abs());
        let h2 = 1e-6 * (1.0 + p.1.abs());
        let g1 = (self.value((p.0 + h1, p.1)) - self.value((p.0 - h1, p.1))) / (2.0 * h1);
        let g2 = (self.value((p.0, p.1 + h2)) - self.value((p.0, p.1 - h2))) / (2.0 * h2);
        (g1, g2)
    }

    /// Unit tangent from the gradient, oriented along `prev` if given.
    /// Falls back to `prev` where the gradient vanishes.
    fn tangent(&self, p: Point, prev: Option<Point>) -> Option<Point> {
        let g = self.gradient(p);
        let n = g.0.hypot(g.1);
        if !(n > 0.0) || !n.is_finite() {
            return prev;
        }
        let mut t = (-g.1 / n, g.0 / n);
        if let Some(q) = prev {
            let dot = t.0 * q.0 + t.1 * q.1;
            if dot < 0.0 {
                t = (-t.0, -t.1);
            }
            // where the gradient is unreliable trust the previous direction
            if dot.abs() < 0.5 {
                return Some(q);
            }
        }
        Some(t)
    }

    /// Root of `B` on the line `p + s n`, `|s| <= reach`, by bracketing and bisection.
    fn correct_along(&self, p: Point, n: Point, reach: f64) -> Option<Point> {
        let at = |s: f64| (p.0 + s * n.0, p.1 + s * n.1);
        let f0 = self.value(p);
        if f0.abs() <= 1e-14 * self.scale {
            return Some(p);
        }
        // expand symmetrically until the sign changes
        let mut bracket = None;
        let mut r = reach / 64.0;
        while r <= reach * (1.0 + 1e-12) && bracket.is_none() {
            for s in [r, -r] {
                let f = self.value(at(s));
                if f == 0.0 {
                    return Some(at(s));
                }
                if (f > 0.0) != (f0 > 0.0) {
                    bracket = Some(if s > 0.0 { (0.0, s, f0) } else { (s, 0.0, f) });
                    break;
                }
            }
            r *= 2.0;
        }
        let (mut lo, mut hi, mut flo) = bracket?;
        let tol = 1e-13 * (1.0 + p.0.hypot(p.1));
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = self.value(at(mid));
            if fm == 0.0 {
                return Some(at(mid));
            }
            if (fm > 0.0) == (flo > 0.0) {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let q = at(0.5 * (lo + hi));
        (self.value(q).abs() <= CORRECTOR_TOL * self.scale).then_some(q)
    }

    /// Pull `p` onto the curve along the local gradient.
    fn project(&self, p: Point, reach: f64) -> Option<Point> {
        let g = self.gradient(p);
        let n = g.0.hypot(g.1);
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        self.correct_along(p, (g.0 / n, g.1 / n), reach)
    }

    fn zero_line_distance(&self, p: Point) -> f64 {
        self.surface.table().zero_line_distance(p.0, p.1)
    }

    /// The root at `p` moves by less than a quarter step under the estimated
    /// truncation error of the series.
    fn resolved(&self, p: Point) -> bool {
        let g = self.gradient(p);
        g.0.hypot(g.1) * self.arc_step >= 16.0 * self.surface.table().truncation_estimate(p.0, p.1)
    }

    /// Step length from `cur` along `t`: `h`, lengthened (up to the bridge
    /// length) until the predicted point clears the zero-line band.
    fn leap(&self, cur: Point, t: Point, h: f64) -> f64 {
        let at = |s: f64| (cur.0 + s * t.0, cur.1 + s * t.1);
        if self.zero_line_distance(at(h)) >= self.leap_band {
            return h;
        }
        let limit = self.max_bridge.max(1.8 * self.arc_step);
        let mut s = h;
        while s < limit {
            s = (s + self.arc_step / 16.0).min(limit);
            if self.zero_line_distance(at(s)) >= self.leap_band {
                return s;
            }
        }
        h
    }

    /// Point on the curve beyond a stretch the corrector cannot resolve:
    /// predictions further along `t`, clear of the zero lines, corrected
    /// across the tangent. The landing point must continue in the same direction.
    fn bridge(&self, cur: Point, t: Point) -> Bridge {
        let normal = (-t.1, t.0);
        let mut d = 2.0 * self.arc_step;
        while d <= self.max_bridge {
            let p = (cur.0 + d * t.0, cur.1 + d * t.1);
            if !self.bx.contains(p) {
                return Bridge::Wall;
            }
            if self.zero_line_distance(p) >= 2.0 * self.leap_band {
                let reach = (0.5 * self.arc_step).max(0.25 * d);
                let landed = self.correct_along(p, normal, reach).and_then(|q| {
                    let tq = self.tangent(q, Some(t))?;
                    let chord = (q.0 - cur.0, q.1 - cur.1);
                    let along = (chord.0 * t.0 + chord.1 * t.1) / chord.0.hypot(chord.1);
                    let turn = tq.0 * t.0 + tq.1 * t.1;
                    let ok = self.zero_line_distance(q) >= self.leap_band && along > 0.9 && turn > 0.8 && self.resolved(q);
                    ok.then_some((q, tq))
                });
                if let Some((q, tq)) = landed {
                    return Bridge::Landed(q, tq);
                }
            }
            d += 0.25 * self.arc_step;
        }
        if self.bx.exit_distance(cur, t) <= self.max_bridge {
            Bridge::Wall
        } else {
            Bridge::Nothing
        }
    }

    fn follow(&self, origin: Point, t0: Point, diagnostics: &mut Vec<Diagnostic>) -> Walk {
        let mut pieces = Vec::new();
        let mut points = vec![origin];
        let mut t = t0;
        let mut h = self.arc_step;
        let min_h = self.arc_step / 64.0;
        let mut travelled = 0.0;
        let mut cur = origin;
        let done = |mut pieces: Vec<Vec<Point>>, points, closed, exited| {
            pieces.push(points);
            Walk { pieces, closed, exited }
        };
        for _ in 0..MAX_TRACE_STEPS {
            let to_exit = self.bx.exit_distance(cur, t);
            let step = self.leap(cur, t, h);
            let hitting_wall = step >= to_exit;
            let step = step.min(to_exit);
            let predicted = (cur.0 + step * t.0, cur.1 + step * t.1);
            let normal = (-t.1, t.0);
            let reach = 0.5 * h.max(0.5 * step);
            let corrected = if step > 0.0 { self.correct_along(predicted, normal, reach) } else { None };
            let next = corrected.and_then(|q| {
                let tq = self.tangent(q, Some(t))?;
                // refuse sharp turns, they mean a jump to another branch
                let chord = ((q.0 - cur.0), (q.1 - cur.1));
                let len = chord.0.hypot(chord.1);
                let along = (chord.0 * t.0 + chord.1 * t.1) / len.max(f64::MIN_POSITIVE);
                (len > 0.0 && along > 0.5 && self.resolved(q)).then_some((q, tq, len))
            });
            match next {
                Some((q, tq, len)) => {
                    travelled += len;
                    if len > 2.0 * self.arc_step {
                        diagnostics.push(Diagnostic::Bridged { from: cur, to: q });
                        pieces.push(std::mem::take(&mut points));
                    }
                    points.push(q);
                    cur = q;
                    t = tq;
                    if hitting_wall || !self.bx.contains(q) {
                        return done(pieces, points, false, true);
                    }
                    if points.len() > 1 && travelled > 3.0 * self.arc_step {
                        let prev = points[points.len() - 2];
                        if segment_distance(origin, prev, q) < self.arc_step {
                            points.push(origin);
                            return done(pieces, points, true, false);
                        }
                    }
                    h = (2.0 * h).min(self.arc_step);
                }
                None => {
                    if hitting_wall && step < min_h {
                        // the curve meets the wall closer than the minimum step
                        return done(pieces, points, false, true);
                    }
                    h *= 0.5;
                    if h >= min_h {
                        continue;
                    }
                    // the secant over the last few points is steadier than the local tangent
                    let back = points[points.len().saturating_sub(6)];
                    let chord = (cur.0 - back.0, cur.1 - back.1);
                    let len = chord.0.hypot(chord.1);
                    let dir = if len > 0.0 { (chord.0 / len, chord.1 / len) } else { t };
                    match self.bridge(cur, dir) {
                        Bridge::Landed(q, tq) => {
                            diagnostics.push(Diagnostic::Bridged { from: cur, to: q });
                            pieces.push(std::mem::replace(&mut points, vec![q]));
                            travelled += (q.0 - cur.0).hypot(q.1 - cur.1);
                            cur = q;
                            t = tq;
                            h = self.arc_step;
                        }
                        Bridge::Wall => {
                            diagnostics.push(Diagnostic::UnresolvedExit { from: cur });
                            return done(pieces, points, false, true);
                        }
                        Bridge::Nothing => {
                            diagnostics.push(Diagnostic::CorrectorFailed { mu: cur });
                            return done(pieces, points, false, false);
                        }
                    }
                }
            }
        }
        diagnostics.push(Diagnostic::StepLimit { steps: MAX_TRACE_STEPS });
        done(pieces, points, false, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffexpr::CoeffExpr;
    use crate::sampling::{build_sample_table, FillMode, RegularizerConfig, SampleTable, SurfaceMode};
    use std::f64::consts::PI;
    use std::sync::Arc;

    /// A surface whose table holds `f` on the lattice (not a shooting solution).
    fn synthetic(f: impl Fn(f64, f64) -> f64, beta: f64, n: usize, id: SurfaceId) -> CharacteristicSurface {
        let reg = RegularizerConfig::default();
        let mut samples = Vec::new();
        let ni = n as i64;
        for j in -ni..=ni {
            for k in -ni..=ni {
                samples.push(f(j as f64 * PI / beta, k as f64 * PI / beta));
            }
        }
        let t = SampleTable::from_parts(1.0, beta, beta, n, reg, samples, "test".into()).unwrap();
        CharacteristicSurface::new(Arc::new(t), SurfaceMode::Regularized, id)
    }

    #[test]
    fn box_validation_and_parsing() {
        assert!(SearchBox::new((1.0, 0.0), (0.0, 1.0), 10).is_err());
        assert!(SearchBox::new((0.0, 1.0), (0.0, 1.0), 1).is_err());
        let b = SearchBox::parse_ranges("0:2:1:3", 20).unwrap();
        assert_eq!(b.mu1(), (0.0, 2.0));
        assert_eq!(b.mu2(), (1.0, 3.0));
        assert!(SearchBox::parse_ranges("0:2:1", 20).is_err());
        assert!(SearchBox::parse_ranges("0:x:1:2", 20).is_err());
        assert_eq!(b.node(20, 20), (2.0, 3.0));
        assert_eq!(b.reflect_mu1().mu1(), (-2.0, 0.0));
        let c = SearchBox::default().clip((13.0, 18.0)).unwrap();
        assert_eq!(c.mu1(), (0.0, 13.0));
        assert_eq!(c.mu2(), (0.0, 18.0));
        assert!(SearchBox::new((20.0, 30.0), (0.0, 1.0), 4).unwrap().clip((13.0, 18.0)).is_none());
    }

    #[test]
    fn segment_intersections() {
        let p = [(0.0, 0.0), (1.0, 1.0)];
        let q = [(0.0, 1.0), (1.0, 0.0)];
        let x = segment_intersection(p, q).unwrap();
        assert!((x.0 - 0.5).abs() < 1e-15 && (x.1 - 0.5).abs() < 1e-15);
        assert!(segment_intersection(p, [(0.0, 1.0), (1.0, 2.0)]).is_none());
        assert!(segment_intersection(p, [(2.0, 0.0), (3.0, -1.0)]).is_none());
    }

    #[test]
    fn damped_step_solves_rank_one_system() {
        // both rows along (1, 0): min-norm solution of x = -1
        let s = damped_step([[1.0, 0.0], [2.0, 0.0]], [1.0, 2.0]);
        assert!((s.0 + 1.0).abs() < 1e-9 && s.1.abs() < 1e-9);
        assert!(row_angle([[1.0, 0.0], [2.0, 0.0]]) < 1e-15);
        assert!((row_angle([[1.0, 0.0], [0.0, 3.0]]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn contours_of_a_line() {
        let s = synthetic(|a, b| (a - 1.0) * (sinc_pw(a) * sinc_pw(b)).powi(2), 6.0, 20, SurfaceId::B1);
        let bx = SearchBox::new((0.0, 2.0), (0.0, 2.0), 16).unwrap();
        let c = zero_contours(&s, &bx);
        assert_eq!(c.segments.len(), 1);
        assert_eq!(c.segments[0].points.len(), 17);
        for p in &c.segments[0].points {
            assert!((p.0 - 1.0).abs() < 1e-2, "{p:?}");
            assert!(s.value(p.0, p.1).abs() <= 1e-9 * c.scale);
        }
    }

    fn sinc_pw(t: f64) -> f64 {
        crate::sampling::sinc(t)
    }

    #[test]
    fn positive_surface_has_no_contours() {
        let s = synthetic(|a, b| 1.0 + 0.0 * a * b, 6.0, 8, SurfaceId::B1);
        let c = zero_contours(&s, &SearchBox::new((0.0, 2.0), (0.0, 2.0), 8).unwrap());
        assert!(c.segments.is_empty());
        assert!(c.cell_pieces.is_empty());
    }

    #[test]
    fn degenerate_cells_are_reported() {
        let s = synthetic(|_, _| 0.0, 6.0, 4, SurfaceId::B2);
        let c = zero_contours(&s, &SearchBox::new((0.0, 1.0), (0.0, 1.0), 4).unwrap());
        assert_eq!(c.degenerate_cells.len(), 16);
        assert!(c.segments.is_empty());
    }

    fn constant_weight_surfaces(n: usize) -> (Problem, CharacteristicSurface, CharacteristicSurface) {
        let one = || CoeffExpr::parse("1").unwrap();
        let p = Problem::new(one(), one(), CoeffExpr::parse("0").unwrap(), 0.7).unwrap();
        let reg = RegularizerConfig::default();
        let (t1, _) = build_sample_table(&p, 1.0, n, reg, FillMode::Mirrored).unwrap();
        let (t2, _) = build_sample_table(&p, 0.7, n, reg, FillMode::Mirrored).unwrap();
        let s1 = CharacteristicSurface::regularized(Arc::new(t1), SurfaceId::B1);
        let s2 = CharacteristicSurface::regularized(Arc::new(t2), SurfaceId::B2);
        (p, s1, s2)
    }

    #[test]
    fn constant_weight_contours_are_circles() {
        let (_, s1, _) = constant_weight_surfaces(50);
        let bx = SearchBox::new((0.0, 4.4), (0.0, 4.4), 60).unwrap();
        let c = zero_contours(&s1, &bx);
        assert_eq!(c.segments.len(), 1);
        let seg = &c.segments[0];
        for p in &seg.points {
            // the circle meets zero lines of the regularizer on both axes, where the surface is flat
            if s1.table().zero_line_distance(p.0, p.1) > 0.1 {
                assert!((p.0.hypot(p.1) - PI).abs() < 1e-4, "{p:?}");
            }
            assert!(s1.value(p.0, p.1).abs() <= 1e-9 * c.scale);
        }
        for w in seg.points.windows(2) {
            assert!(dist(w[0], w[1]) <= 2.0 * seg.arc_step);
        }
    }

    #[test]
    fn constant_weight_circle_traces_closed() {
        let (_, s1, _) = constant_weight_surfaces(50);
        let bx = SearchBox::new((-7.0, 7.0), (-7.0, 7.0), 40).unwrap();
        let tr = trace_curve(&s1, (PI, 0.01), 0.1, &bx).unwrap();
        assert!(tr.closed, "{:?}", tr.diagnostics);
        assert!(!tr.exited);
        assert_eq!(tr.segments.len(), 1);
        for p in &tr.segments[0].points {
            assert!((p.0.hypot(p.1) - PI).abs() < 1e-4, "{p:?}");
        }
        for w in tr.segments[0].points.windows(2) {
            assert!(dist(w[0], w[1]) <= 2.0 * tr.segments[0].arc_step);
        }
        assert_eq!(tr.segments[0].points.first(), tr.segments[0].points.last());
    }

    #[test]
    fn trace_exits_small_box_in_one_step() {
        let (_, s1, _) = constant_weight_surfaces(30);
        let bx = SearchBox::new((2.9, 3.3), (0.4, 0.8), 4).unwrap();
        let tr = trace_curve(&s1, (PI * 0.2f64.cos(), PI * 0.2f64.sin()), 5.0, &bx).unwrap();
        assert!(tr.exited);
        assert!(tr.segments[0].points.len() >= 2);
    }

    #[test]
    fn trace_rejects_bad_starts() {
        let (_, s1, _) = constant_weight_surfaces(20);
        let bx = SearchBox::new((0.0, 4.0), (0.0, 4.0), 20).unwrap();
        assert!(matches!(trace_curve(&s1, (1.0, 1.0), 0.1, &bx), Err(SolverError::StartOffCurve { .. })));
        assert!(matches!(trace_curve(&s1, (9.0, 1.0), 0.1, &bx), Err(SolverError::StartOutside(..))));
        assert!(matches!(trace_curve(&s1, (PI, 0.0), 0.0, &bx), Err(SolverError::ArcStep(_))));
    }

    #[test]
    fn airy_box_below_first_curve_is_empty() {
        let p = Problem::airy_example();
        let reg = RegularizerConfig::default();
        let (t1, _) = build_sample_table(&p, 1.0, 20, reg, FillMode::Mirrored).unwrap();
        let (t2, _) = build_sample_table(&p, 0.7, 20, reg, FillMode::Mirrored).unwrap();
        let s1 = CharacteristicSurface::regularized(Arc::new(t1), SurfaceId::B1);
        let s2 = CharacteristicSurface::regularized(Arc::new(t2), SurfaceId::B2);
        let bx = SearchBox::new((0.0, 2.0), (0.0, 2.0), 40).unwrap();
        let r = find_eigenpairs(&s1, &s2, &bx, &FindOptions::default(), Some(&p));
        assert!(r.pairs.is_empty());
    }

    #[test]
    fn fake_root_on_zero_line_is_filtered() {
        let p = Problem::airy_example();
        let reg = RegularizerConfig::default();
        let (t1, _) = build_sample_table(&p, 1.0, 6, reg, FillMode::Mirrored).unwrap();
        let (t2, _) = build_sample_table(&p, 0.7, 6, reg, FillMode::Mirrored).unwrap();
        let s1 = CharacteristicSurface::regularized(Arc::new(t1.clone()), SurfaceId::B1);
        let s2 = CharacteristicSurface::regularized(Arc::new(t2), SurfaceId::B2);
        // sigma1 mu1 + sigma2 mu2 = pi at x = 1
        let (sg1, sg2) = t1.sigmas();
        let mu1 = 0.5;
        let mu2 = (PI - sg1 * mu1) / sg2;
        let fake = EigenPair::new((mu1, mu2), (0.0, 0.0), (mu1, mu2), false, false);
        let out = exclusion_filter(vec![fake], &s1, &s2, 1e-4, Some(&p));
        assert!(out.pairs.is_empty());
        assert!(matches!(out.diagnostics[0], Diagnostic::ZeroLineFiltered { .. }));
        let out = exclusion_filter(vec![fake], &s1, &s2, 1e-4, None);
        assert!(out.pairs.is_empty());
    }

    #[test]
    fn refine_is_a_fixed_point_at_a_root() {
        let p = Problem::airy_example();
        let seed = EigenPair::new((7.78815, 7.59082), (0.0, 0.0), (7.78815, 7.59082), false, false);
        let r = refine_with_oracle(&p, &seed);
        assert!(r.refined_by_oracle);
        assert!((r.mu1 - 7.788149097670813).abs() < 1e-6 && (r.mu2 - 7.5908224365786845).abs() < 1e-6);
        assert!(r.residual1 <= ORACLE_TOL && r.residual2 <= ORACLE_TOL);
        assert_eq!(r.lambda1, r.mu1 * r.mu1);
        let again = refine_with_oracle(&p, &r);
        assert!((again.mu1 - r.mu1).abs() < 1e-12 && (again.mu2 - r.mu2).abs() < 1e-12);
    }

    #[test]
    fn refine_failure_returns_original() {
        let p = Problem::airy_example();
        let seed = EigenPair::new((1.0, 1.0), (0.5, 0.5), (1.0, 1.0), false, false);
        let r = refine_with_oracle(&p, &seed);
        assert!(!r.refined_by_oracle);
        assert_eq!(r.mu(), seed.mu());
    }

    #[test]
    fn dedup_keeps_smaller_residual_and_sorts() {
        let a = EigenPair::new((3.0, 4.0), (1e-3, 1e-3), (3.0, 4.0), false, false);
        let b = EigenPair::new((3.0 + 5e-5, 4.0), (1e-6, 1e-6), (3.0, 4.0), false, false);
        let c = EigenPair::new((1.0, 1.0), (1e-3, 1e-3), (1.0, 1.0), false, false);
        let out = dedup(vec![a, b, c], 1e-4);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].mu(), (1.0, 1.0));
        assert_eq!(out[1].mu(), b.mu());
    }
}
