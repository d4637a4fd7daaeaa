//! Two-dimensional elastic maps and principal component scores.
//!
//! An elastic map is a rectangular grid of nodes placed in data space. Fitting
//! alternates between assigning every point to its nearest node and solving
//! the quadratic problem
//!
//! ```text
//! U = (1/N)   Σ_points ‖x_j − y_k(j)‖²
//!   + (λ/|E|) Σ_edges  ‖y_a − y_b‖²
//!   + (μ/|R|) Σ_ribs   ‖y_a − 2 y_b + y_c‖²
//! ```
//!
//! for the node positions. Edges join lattice neighbours; ribs are triples of
//! consecutive nodes along a grid row or column. Each half-step can only lower
//! `U`, so the recorded energy trace is non-increasing.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::labeling::Label;

/// Proximal weight added to the node solve, relative to the mean diagonal.
const PROXIMAL_RIDGE: f64 = 1e-9;

/// Principal component scores of a `[row × dimension]` matrix.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// One unit-length component per row, ordered by decreasing variance.
    pub components: DMatrix<f64>,
    /// Variance of the scores along each component (n − 1 denominator).
    pub variances: Vec<f64>,
    /// `[row × component]`.
    pub scores: DMatrix<f64>,
    pub total_variance: f64,
}

pub fn pca(data: &DMatrix<f64>, n_components: usize) -> Result<Pca> {
    let (n, d) = data.shape();
    let rank = n.saturating_sub(1).min(d);
    if n_components == 0 || rank < n_components {
        return Err(Error::RankDeficient { rank, required: n_components });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in PCA input".into()));
    }
    let mean = DVector::from_fn(d, |j, _| data.column(j).mean());
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let total_variance = centered.norm_squared() / (n - 1) as f64;

    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut components = DMatrix::zeros(n_components, d);
    for (k, &src) in order.iter().take(n_components).enumerate() {
        let mut v = v_t.row(src).into_owned();
        // Sign convention: largest-magnitude loading is positive.
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.neg_mut();
        }
        components.set_row(k, &v);
    }
    let scores = &centered * components.transpose();
    let variances = (0..n_components).map(|k| scores.column(k).norm_squared() / (n - 1) as f64).collect();
    Ok(Pca { mean, components, variances, scores, total_variance })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticNetParams {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Stretching coefficient.
    pub lambda: f64,
    /// Bending coefficient.
    pub mu: f64,
    pub max_iterations: usize,
    /// Stop once the relative energy change falls below this.
    pub tolerance: f64,
}

impl Default for ElasticNetParams {
    fn default() -> Self {
        Self { grid_rows: 10, grid_cols: 10, lambda: 0.0, mu: 8.1, max_iterations: 200, tolerance: 1e-6 }
    }
}

impl ElasticNetParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_rows < 2 || self.grid_cols < 2 {
            return Err(Error::InvalidConfig(format!(
                "elastic grid {}x{} must be at least 2x2",
                self.grid_rows, self.grid_cols
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite() && self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidConfig("elasticity coefficients must be finite and non-negative".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Energy of a map split into its three terms (already weighted).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub approximation: f64,
    pub stretching: f64,
    pub bending: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.approximation + self.stretching + self.bending
    }
}

#[derive(Debug, Clone)]
pub struct ElasticMap {
    pub params: ElasticNetParams,
    /// `[node × dimension]`; node `k` sits at lattice row `k / cols`, column `k % cols`.
    pub nodes: DMatrix<f64>,
    /// Nearest node per data point.
    pub assignment: Vec<usize>,
    /// Total energy after initial assignment and after every iteration.
    pub energy_trace: Vec<f64>,
}

impl ElasticMap {
    pub fn n_nodes(&self) -> usize {
        self.params.grid_rows * self.params.grid_cols
    }

    /// Lattice coordinates `(column, row)` of node `k`.
    pub fn node_grid_coords(&self, k: usize) -> [f64; 2] {
        let cols = self.params.grid_cols;
        [(k % cols) as f64, (k / cols) as f64]
    }

    pub fn energy(&self, data: &DMatrix<f64>) -> Energy {
        let grid = Grid::new(self.params.grid_rows, self.params.grid_cols);
        energy(data, &self.nodes, &self.assignment, &grid, &self.params)
    }
}

struct Grid {
    rows: usize,
    cols: usize,
    edges: Vec<(usize, usize)>,
    ribs: Vec<(usize, usize, usize)>,
}

impl Grid {
    fn new(rows: usize, cols: usize) -> Self {
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        let mut ribs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
                if c + 2 < cols {
                    ribs.push((id(r, c), id(r, c + 1), id(r, c + 2)));
                }
                if r + 2 < rows {
                    ribs.push((id(r, c), id(r + 1, c), id(r + 2, c)));
                }
            }
        }
        Self { rows, cols, edges, ribs }
    }

    fn n_nodes(&self) -> usize {
        self.rows * self.cols
    }

    /// Quadratic form of the elastic terms: λ/|E| L_E + μ/|R| RᵀR.
    fn elastic_matrix(&self, params: &ElasticNetParams) -> DMatrix<f64> {
        let m = self.n_nodes();
        let mut a = DMatrix::zeros(m, m);
        if !self.edges.is_empty() && params.lambda > 0.0 {
            let w = params.lambda / self.edges.len() as f64;
            for &(i, j) in &self.edges {
                a[(i, i)] += w;
                a[(j, j)] += w;
                a[(i, j)] -= w;
                a[(j, i)] -= w;
            }
        }
        if !self.ribs.is_empty() && params.mu > 0.0 {
            let w = params.mu / self.ribs.len() as f64;
            for &(i, j, k) in &self.ribs {
                let idx = [i, j, k];
                let coef = [1.0, -2.0, 1.0];
                for (p, &ip) in idx.iter().enumerate() {
                    for (q, &iq) in idx.iter().enumerate() {
                        a[(ip, iq)] += w * coef[p] * coef[q];
                    }
                }
            }
        }
        a
    }
}

fn energy(
    data: &DMatrix<f64>,
    nodes: &DMatrix<f64>,
    assignment: &[usize],
    grid: &Grid,
    params: &ElasticNetParams,
) -> Energy {
    let n = data.nrows() as f64;
    let approximation =
        assignment.iter().enumerate().map(|(j, &k)| (data.row(j) - nodes.row(k)).norm_squared()).sum::<f64>() / n;
    let stretching = if grid.edges.is_empty() {
        0.0
    } else {
        params.lambda * grid.edges.iter().map(|&(a, b)| (nodes.row(a) - nodes.row(b)).norm_squared()).sum::<f64>()
            / grid.edges.len() as f64
    };
    let bending = if grid.ribs.is_empty() {
        0.0
    } else {
        params.mu
            * grid
                .ribs
                .iter()
                .map(|&(a, b, c)| (nodes.row(a) - nodes.row(b) * 2.0 + nodes.row(c)).norm_squared())
                .sum::<f64>()
            / grid.ribs.len() as f64
    };
    Energy { approximation, stretching, bending }
}

fn nearest_node(point: nalgebra::DVectorView<'_, f64>, nodes: &DMatrix<f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for k in 0..nodes.nrows() {
        let d: f64 = nodes.row(k).iter().zip(point.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

fn assign(data: &DMatrix<f64>, nodes: &DMatrix<f64>) -> Vec<usize> {
    let t = data.transpose();
    (0..data.nrows()).into_par_iter().map(|j| nearest_node(t.column(j), nodes)).collect()
}

/// Regular grid in the plane of the first two principal components,
/// spanning ±2 standard deviations along each.
fn initial_nodes(data: &DMatrix<f64>, grid: &Grid) -> Result<DMatrix<f64>> {
    let p = pca(data, 2)?;
    let d = data.ncols();
    let sd: Vec<f64> = p.variances.iter().map(|v| v.sqrt()).collect();
    let span = |i: usize, n: usize| -2.0 + 4.0 * i as f64 / (n - 1) as f64;
    Ok(DMatrix::from_fn(grid.n_nodes(), d, |k, j| {
        let (r, c) = (k / grid.cols, k % grid.cols);
        p.mean[j]
            + span(c, grid.cols) * sd[0] * p.components[(0, j)]
            + span(r, grid.rows) * sd[1] * p.components[(1, j)]
    }))
}

/// Minimise U over node positions for a fixed assignment. A small proximal
/// term `ε‖Y − Y_old‖²` keeps the system definite when empty nodes are not
/// pinned by the elastic terms.
fn solve_nodes(
    data: &DMatrix<f64>,
    assignment: &[usize],
    old: &DMatrix<f64>,
    elastic: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = old.nrows();
    let n = data.nrows() as f64;
    let mut a = elastic.clone();
    let mut b = DMatrix::zeros(m, data.ncols());
    for (j, &k) in assignment.iter().enumerate() {
        a[(k, k)] += 1.0 / n;
        let mut row = b.row_mut(k);
        row += data.row(j) / n;
    }
    let eps = PROXIMAL_RIDGE * (a.trace() / m as f64).max(f64::MIN_POSITIVE);
    for k in 0..m {
        a[(k, k)] += eps;
    }
    b += old * eps;
    let chol = a.cholesky().ok_or_else(|| Error::InvalidInput("elastic map system is not positive definite".into()))?;
    Ok(chol.solve(&b))
}

/// Fit an elastic map to the rows of `data`.
pub fn fit_elastic_map(data: &DMatrix<f64>, params: &ElasticNetParams) -> Result<ElasticMap> {
    params.validate()?;
    if data.nrows() < 4 {
        return Err(Error::InsufficientData(format!("elastic map needs at least 4 points, got {}", data.nrows())));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in elastic map input".into()));
    }
    if params.lambda == 0.0 && params.mu == 0.0 {
        log::warn!("elastic map with lambda = mu = 0: empty nodes are held only by the proximal ridge");
    }
    let grid = Grid::new(params.grid_rows, params.grid_cols);
    let elastic = grid.elastic_matrix(params);
    let mut nodes = initial_nodes(data, &grid)?;
    let mut assignment = assign(data, &nodes);
    let mut trace = vec![energy(data, &nodes, &assignment, &grid, params).total()];

    for _ in 0..params.max_iterations {
        nodes = solve_nodes(data, &assignment, &nodes, &elastic)?;
        assignment = assign(data, &nodes);
        let u = energy(data, &nodes, &assignment, &grid, params).total();
        let prev = *trace.last().unwrap();
        trace.push(u);
        if (prev - u).abs() <= params.tolerance * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(ElasticMap { params: *params, nodes, assignment, energy_trace: trace })
}

/// Closest point of segment `a + s (b − a)`, `s ∈ [0, 1]`.
fn project_segment(x: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> (f64, f64) {
    let e = b - a;
    let ee = e.norm_squared();
    let s = if ee > 0.0 { ((x - a).dot(&e) / ee).clamp(0.0, 1.0) } else { 0.0 };
    ((x - (a + e * s)).norm_squared(), s)
}

/// Closest point of the triangle `p0 p1 p2` to `x`, as squared distance and
/// barycentric weights.
fn project_triangle(x: &DVector<f64>, p: [&DVector<f64>; 3]) -> (f64, [f64; 3]) {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let r = x - p[0];
    let (a11, a12, a22) = (e1.norm_squared(), e1.dot(&e2), e2.norm_squared());
    let det = a11 * a22 - a12 * a12;
    if det > 1e-14 * a11 * a22 {
        let (b1, b2) = (e1.dot(&r), e2.dot(&r));
        let s = (a22 * b1 - a12 * b2) / det;
        let t = (a11 * b2 - a12 * b1) / det;
        if s >= 0.0 && t >= 0.0 && s + t <= 1.0 {
            return ((r - &e1 * s - &e2 * t).norm_squared(), [1.0 - s - t, s, t]);
        }
    }
    let (d01, s01) = project_segment(x, p[0], p[1]);
    let (d02, s02) = project_segment(x, p[0], p[2]);
    let (d12, s12) = project_segment(x, p[1], p[2]);
    let mut best = (d01, [1.0 - s01, s01, 0.0]);
    if d02 < best.0 {
        best = (d02, [1.0 - s02, 0.0, s02]);
    }
    if d12 < best.0 {
        best = (d12, [0.0, 1.0 - s12, s12]);
    }
    best
}

/// Internal `(column, row)` coordinates of a point: its projection onto the
/// piecewise-linear surface around the nearest node, read off the lattice.
pub fn project_internal(map: &ElasticMap, point: &[f64]) -> Result<[f64; 2]> {
    if point.len() != map.nodes.ncols() {
        return Err(Error::InvalidInput(format!("point has dimension {}, map has {}", point.len(), map.nodes.ncols())));
    }
    let x = DVector::from_column_slice(point);
    let k = nearest_node(x.column(0), &map.nodes);
    let (rows, cols) = (map.params.grid_rows, map.params.grid_cols);
    let (kr, kc) = (k / cols, k % cols);
    let id = |r: usize, c: usize| r * cols + c;

    // Each lattice cell splits into (r,c)(r,c+1)(r+1,c) and (r+1,c+1)(r+1,c)(r,c+1).
    let mut triangles = Vec::new();
    for r in kr.saturating_sub(1)..=kr.min(rows - 2) {
        for c in kc.saturating_sub(1)..=kc.min(cols - 2) {
            for tri in [[id(r, c), id(r, c + 1), id(r + 1, c)], [id(r + 1, c + 1), id(r + 1, c), id(r, c + 1)]] {
                if tri.contains(&k) {
                    triangles.push(tri);
                }
            }
        }
    }
    let node = |i: usize| map.nodes.row(i).transpose();
    let mut best: Option<(f64, [usize; 3], [f64; 3])> = None;
    for tri in triangles {
        let (p0, p1, p2) = (node(tri[0]), node(tri[1]), node(tri[2]));
        let (d, w) = project_triangle(&x, [&p0, &p1, &p2]);
        if best.as_ref().is_none_or(|b| d < b.0) {
            best = Some((d, tri, w));
        }
    }
    let (_, tri, w) = best.expect("every node belongs to a lattice triangle");
    let mut out = [0.0; 2];
    for (i, &node) in tri.iter().enumerate() {
        let g = map.node_grid_coords(node);
        out[0] += w[i] * g[0];
        out[1] += w[i] * g[1];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddedPoint {
    pub ticker: String,
    pub label: Label,
    pub coords: Vec<f64>,
}

/// Per-company coordinates (2D internal or 3D principal component scores).
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Embedding {
    pub points: Vec<EmbeddedPoint>,
}

impl Embedding {
    pub fn dims(&self) -> usize {
        self.points.first().map_or(0, |p| p.coords.len())
    }
}

pub fn embed_internal(
    map: &ElasticMap,
    data: &DMatrix<f64>,
    tickers: &[String],
    labels: &[Label],
) -> Result<Embedding> {
    let points = (0..data.nrows())
        .map(|j| {
            let row: Vec<f64> = data.row(j).iter().copied().collect();
            let c = project_internal(map, &row)?;
            Ok(EmbeddedPoint { ticker: tickers[j].clone(), label: labels[j], coords: c.to_vec() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Embedding { points })
}

pub fn embed_principal(p: &Pca, tickers: &[String], labels: &[Label]) -> Embedding {
    Embedding {
        points: (0..p.scores.nrows())
            .map(|j| EmbeddedPoint {
                ticker: tickers[j].clone(),
                label: labels[j],
                coords: p.scores.row(j).iter().copied().collect(),
            })
            .collect(),
    }
}

/// `ticker,label,coord1,coord2[,coord3]`.
pub fn write_embedding_csv<W: Write>(out: W, e: &Embedding) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["ticker".to_string(), "label".to_string()];
    header.extend((1..=e.dims()).map(|i| format!("coord{i}")));
    w.write_record(&header)?;
    for p in &e.points {
        let mut rec = vec![p.ticker.clone(), p.label.to_string()];
        rec.extend(p.coords.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
}

pub fn write_energy_csv<W: Write>(out: W, trace: &[f64]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "energy"])?;
    for (i, u) in trace.iter().enumerate() {
        w.write_record([i.to_string(), u.to_string()])?;
    }
    w.flush()
}
