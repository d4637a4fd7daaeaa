//! Pearson correlation and the two correlation-based dissimilarities used for
//! nearest-neighbour search.
//!
//! With `c = cos 2α` the two measures are `2 sin α` (Distance) and `sin 2α`
//! (Proximity). They agree to first order for small α; Proximity folds
//! anticorrelated pairs back onto zero and is therefore not a metric.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ReturnMatrix;
use crate::labeling::{Label, LabelSet};

/// A Pearson coefficient, always within [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Correlation(f64);

impl Correlation {
    pub fn new(value: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::InvalidInput(format!("correlation {value} outside [-1, 1]")));
        }
        Ok(Self(value))
    }

    /// Clamp rounding overshoot past ±1.
    pub fn clamped(value: f64) -> Self {
        Self(value.clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Distance,
    Proximity,
}

impl Measure {
    pub const ALL: [Measure; 2] = [Measure::Distance, Measure::Proximity];

    pub fn apply(self, c: Correlation) -> f64 {
        match self {
            Measure::Distance => distance(c),
            Measure::Proximity => proximity(c),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Distance => "distance",
            Measure::Proximity => "proximity",
        }
    }

    /// Largest value the measure can take.
    pub fn upper_bound(self) -> f64 {
        match self {
            Measure::Distance => 2.0,
            Measure::Proximity => 1.0,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "distance" => Ok(Measure::Distance),
            "proximity" => Ok(Measure::Proximity),
            other => Err(Error::InvalidConfig(format!("unknown measure '{other}'"))),
        }
    }
}

/// Product-moment correlation of two equally long series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("correlation needs 2 observations, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if is_degenerate(x, sxx) || is_degenerate(y, syy) {
        return Err(Error::DegenerateSeries { ticker: None });
    }
    Ok(Correlation::clamped(sxy / (sxx * syy).sqrt()))
}

// A constant series can leave rounding residue of order eps * |x| per term.
fn is_degenerate(x: &[f64], ss: f64) -> bool {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 16.0 * x.len() as f64 * (f64::EPSILON * scale).powi(2);
    !(ss.is_finite() && ss > floor)
}

/// `sqrt(2 (1 - c))`, in [0, 2].
pub fn distance(c: Correlation) -> f64 {
    (2.0 * (1.0 - c.0)).max(0.0).sqrt()
}

/// `sqrt(1 - c^2)`, in [0, 1].
pub fn proximity(c: Correlation) -> f64 {
    (1.0 - c.0 * c.0).max(0.0).sqrt()
}

/// Evaluate `2 sin α = sqrt(2(1 - cos 2α))` and `sin 2α = sqrt(1 - cos²2α)`
/// on every angle, returning the largest absolute discrepancy.
pub fn verify_angle_identities(alphas: &[f64]) -> f64 {
    alphas
        .iter()
        .map(|&a| {
            let c = Correlation::clamped((2.0 * a).cos());
            let d = (2.0 * a.sin() - distance(c)).abs();
            let p = ((2.0 * a).sin() - proximity(c)).abs();
            d.max(p)
        })
        .fold(0.0, f64::max)
}

/// Symmetric company × company dissimilarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    tickers: Vec<String>,
    measure: Measure,
    values: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Wrap precomputed values, checking symmetry, zero diagonal and range.
    pub fn from_values(tickers: Vec<String>, measure: Measure, values: DMatrix<f64>) -> Result<Self> {
        let n = tickers.len();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "distance matrix is {}x{} for {n} tickers",
                values.nrows(),
                values.ncols()
            )));
        }
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(Error::InvalidInput("nonzero diagonal".into()));
            }
            for j in 0..i {
                let v = values[(i, j)];
                if v != values[(j, i)] || !(0.0..=measure.upper_bound()).contains(&v) {
                    return Err(Error::InvalidInput(format!("bad entry ({i}, {j}) = {v}")));
                }
            }
        }
        Ok(Self { tickers, measure, values })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn len(&self) -> usize {
        self.tickers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickers.is_empty()
    }

    pub fn index_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }
}

/// Pairwise measure between all company columns of `returns`.
pub fn distance_matrix(returns: &ReturnMatrix, measure: Measure) -> Result<DistanceMatrix> {
    let n = returns.n_companies();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 companies, got {n}")));
    }
    let m = returns.returns();
    let cols: Vec<&[f64]> = m.as_slice().chunks(m.nrows().max(1)).collect();
    let tickers = returns.tickers();
    for (c, col) in cols.iter().enumerate() {
        if col.len() < 2 {
            return Err(Error::InsufficientData("fewer than 2 return rows".into()));
        }
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        if is_degenerate(col, ss) {
            return Err(Error::DegenerateSeries { ticker: Some(tickers[c].clone()) });
        }
    }

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let upper = pairs
        .par_iter()
        .map(|&(i, j)| {
            pearson(cols[i], cols[j])
                .map(|c| measure.apply(c))
                .map_err(|_| Error::DegenerateSeries { ticker: Some(tickers[i].clone()) })
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut values = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(upper) {
        values[(i, j)] = v;
        values[(j, i)] = v;
    }
    Ok(DistanceMatrix { tickers: tickers.to_vec(), measure, values })
}

/// In-class and cross-class pair distances.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PairPartition {
    pub ww: Vec<f64>,
    pub ll: Vec<f64>,
    pub wl: Vec<f64>,
}

pub fn partition_pairs(dm: &DistanceMatrix, labels: &LabelSet) -> Result<PairPartition> {
    let class: Vec<Option<Label>> = dm.tickers.iter().map(|t| labels.label_of(t)).collect();
    for t in labels.winners.iter().chain(&labels.losers) {
        if dm.index_of(t).is_none() {
            return Err(Error::InvalidInput(format!("labeled ticker '{t}' not in distance matrix")));
        }
    }
    let mut out = PairPartition::default();
    let n = dm.len();
    for i in 0..n {
        for j in i + 1..n {
            let v = dm.get(i, j);
            match (class[i], class[j]) {
                (Some(Label::Winner), Some(Label::Winner)) => out.ww.push(v),
                (Some(Label::Loser), Some(Label::Loser)) => out.ll.push(v),
                (Some(Label::Winner), Some(Label::Loser)) | (Some(Label::Loser), Some(Label::Winner)) => out.wl.push(v),
                _ => {}
            }
        }
    }
    Ok(out)
}

pub fn write_distance_matrix_csv<W: Write>(out: W, dm: &DistanceMatrix) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(dm.tickers.iter().cloned());
    w.write_record(&header)?;
    for (i, t) in dm.tickers.iter().enumerate() {
        let mut rec = vec![t.clone()];
        rec.extend((0..dm.len()).map(|j| dm.get(i, j).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Three columns `ww,ll,wl`; shorter columns are padded with empty cells.
pub fn write_partition_csv<W: Write>(out: W, p: &PairPartition) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ww", "ll", "wl"])?;
    let rows = p.ww.len().max(p.ll.len()).max(p.wl.len());
    let cell = |v: &[f64], i: usize| v.get(i).map(|x| x.to_string()).unwrap_or_default();
    for i in 0..rows {
        w.write_record([cell(&p.ww, i), cell(&p.ll, i), cell(&p.wl, i)])?;
    }
    w.flush()
}
