//! k-NN classification under leave-one-out cross-validation on a
//! precomputed distance matrix, plus proportion-estimate statistics.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{compute_log_returns, slice_initial_window, PricePanel};
use crate::labeling::{Label, LabelSet};
use crate::metrics::{distance_matrix, DistanceMatrix, Measure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 1 }
    }
}

/// Sampling distribution of an observed error proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProportionEstimate {
    pub p: f64,
    pub n: usize,
    pub mu: f64,
    pub sigma: f64,
}

/// `mu = p`, `sigma = sqrt(p (1 - p) / n)` with `p = errors / n`.
pub fn proportion_estimate(errors: usize, n: usize) -> Result<ProportionEstimate> {
    if n == 0 {
        return Err(Error::InvalidInput("proportion over an empty sample".into()));
    }
    if errors > n {
        return Err(Error::InvalidInput(format!("{errors} errors out of {n}")));
    }
    let p = errors as f64 / n as f64;
    Ok(ProportionEstimate { p, n, mu: p, sigma: (p * (1.0 - p) / n as f64).sqrt() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prediction {
    pub ticker: String,
    pub truth: Label,
    pub predicted: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoocvReport {
    pub window_months: u32,
    pub measure: Measure,
    pub total_errors: usize,
    pub winner_errors: usize,
    pub loser_errors: usize,
    pub n_winners: usize,
    pub n_losers: usize,
    pub total_rate: f64,
    pub winner_rate: f64,
    pub loser_rate: f64,
    pub winner_estimate: ProportionEstimate,
    pub loser_estimate: ProportionEstimate,
    pub predictions: Vec<Prediction>,
}

/// Winner/loser class per matrix row; middle and unknown companies are `None`.
fn classes(dm: &DistanceMatrix, labels: &LabelSet) -> Vec<Option<Label>> {
    dm.tickers().iter().map(|t| labels.label_of(t).filter(|l| *l != Label::Middle)).collect()
}

fn vote(test: usize, dm: &DistanceMatrix, class: &[Option<Label>], k: usize) -> Result<Label> {
    let mut candidates: Vec<(usize, Label)> =
        class.iter().enumerate().filter(|&(j, _)| j != test).filter_map(|(j, c)| c.map(|c| (j, c))).collect();
    if candidates.len() < k {
        return Err(Error::InvalidConfig(format!("k = {k} but only {} training points", candidates.len())));
    }
    let tickers = dm.tickers();
    let row = |j: usize| dm.get(test, j);
    let cmp = |a: &(usize, Label), b: &(usize, Label)| {
        row(a.0).total_cmp(&row(b.0)).then_with(|| tickers[a.0].cmp(&tickers[b.0]))
    };
    if k == 1 {
        return Ok(candidates.iter().min_by(|a, b| cmp(a, b)).unwrap().1);
    }
    candidates.sort_by(cmp);
    let winners = candidates[..k].iter().filter(|c| c.1 == Label::Winner).count();
    let losers = k - winners;
    Ok(match winners.cmp(&losers) {
        std::cmp::Ordering::Greater => Label::Winner,
        std::cmp::Ordering::Less => Label::Loser,
        std::cmp::Ordering::Equal => candidates[0].1,
    })
}

/// Majority label among the `k` nearest labeled companies other than the
/// test company. Distance ties go to the lexicographically smaller ticker; a
/// split vote falls back to the single nearest neighbour.
pub fn knn_vote(test_index: usize, dm: &DistanceMatrix, labels: &LabelSet, cfg: KnnConfig) -> Result<Label> {
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if test_index >= dm.len() {
        return Err(Error::InvalidInput(format!("test index {test_index} out of range")));
    }
    let class = classes(dm, labels);
    if class[test_index].is_none() {
        return Err(Error::InvalidInput(format!("{} is not labeled winner or loser", dm.tickers()[test_index])));
    }
    vote(test_index, dm, &class, cfg.k)
}

/// Leave-one-out predictions for every winner and loser in `dm`, in matrix
/// order.
pub fn loocv_predictions(dm: &DistanceMatrix, labels: &LabelSet, cfg: KnnConfig) -> Result<Vec<Prediction>> {
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let class = classes(dm, labels);
    let count = |l: Label| class.iter().filter(|c| **c == Some(l)).count();
    let (nw, nl) = (count(Label::Winner), count(Label::Loser));
    if nw < 2 || nl < 2 {
        return Err(Error::InvalidInput(format!("LOOCV needs at least 2 winners and 2 losers, got {nw} and {nl}")));
    }
    let tested: Vec<(usize, Label)> = class.iter().enumerate().filter_map(|(i, c)| c.map(|c| (i, c))).collect();
    tested
        .par_iter()
        .map(|&(i, truth)| {
            Ok(Prediction { ticker: dm.tickers()[i].clone(), truth, predicted: vote(i, dm, &class, cfg.k)? })
        })
        .collect()
}

pub fn loocv(dm: &DistanceMatrix, labels: &LabelSet, cfg: KnnConfig) -> Result<LoocvReport> {
    let predictions = loocv_predictions(dm, labels, cfg)?;
    summarize(0, dm.measure(), predictions)
}

fn summarize(window_months: u32, measure: Measure, predictions: Vec<Prediction>) -> Result<LoocvReport> {
    let of = |l: Label| predictions.iter().filter(move |p| p.truth == l);
    let n_winners = of(Label::Winner).count();
    let n_losers = of(Label::Loser).count();
    let winner_errors = of(Label::Winner).filter(|p| p.predicted != p.truth).count();
    let loser_errors = of(Label::Loser).filter(|p| p.predicted != p.truth).count();
    let total_errors = predictions.iter().filter(|p| p.predicted != p.truth).count();
    let winner_estimate = proportion_estimate(winner_errors, n_winners)?;
    let loser_estimate = proportion_estimate(loser_errors, n_losers)?;
    Ok(LoocvReport {
        window_months,
        measure,
        total_errors,
        winner_errors,
        loser_errors,
        n_winners,
        n_losers,
        total_rate: total_errors as f64 / (n_winners + n_losers) as f64,
        winner_rate: winner_estimate.p,
        loser_rate: loser_estimate.p,
        winner_estimate,
        loser_estimate,
        predictions,
    })
}

/// LOOCV for every (window, measure) pair. Each window's returns come from
/// its own slice of the panel, restricted to winners and losers.
pub fn loocv_sweep(
    panel: &PricePanel,
    labels: &LabelSet,
    windows: &[u32],
    measures: &[Measure],
    cfg: KnnConfig,
) -> Result<Vec<LoocvReport>> {
    let joined = panel.select(&labels.labeled())?;
    let cells: Vec<(u32, Measure)> = windows.iter().flat_map(|&w| measures.iter().map(move |&m| (w, m))).collect();
    cells
        .par_iter()
        .map(|&(months, measure)| {
            let slice = slice_initial_window(&joined, months)?;
            let returns = compute_log_returns(&slice)?;
            let dm = distance_matrix(&returns, measure)?;
            let predictions = loocv_predictions(&dm, labels, cfg)?;
            summarize(months, measure, predictions)
        })
        .collect()
}

pub fn write_reports_csv<W: Write>(out: W, reports: &[LoocvReport]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "window_months",
        "measure",
        "total_rate",
        "winner_rate",
        "loser_rate",
        "winner_sigma",
        "loser_sigma",
    ])?;
    for r in reports {
        w.write_record([
            r.window_months.to_string(),
            r.measure.to_string(),
            r.total_rate.to_string(),
            r.winner_rate.to_string(),
            r.loser_rate.to_string(),
            r.winner_estimate.sigma.to_string(),
            r.loser_estimate.sigma.to_string(),
        ])?;
    }
    w.flush()
}

pub fn reports_json(reports: &[LoocvReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}
