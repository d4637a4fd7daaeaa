//! Winner / loser labeling by the ratio of average prices between a final
//! and a beginning frame ("1/3 average price" method).

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{window_end_exclusive, PricePanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Winner,
    Loser,
    Middle,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Winner => "winner",
            Label::Loser => "loser",
            Label::Middle => "middle",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "winner" => Ok(Label::Winner),
            "loser" => Ok(Label::Loser),
            "middle" => Ok(Label::Middle),
            other => Err(Error::InvalidInput(format!("unknown label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompanyScore {
    pub ticker: String,
    pub avp_begin: f64,
    pub avp_end: f64,
    /// `avp_end / avp_begin`; above 1 means the company grew.
    pub growth: f64,
}

/// Disjoint winner / loser / middle partition of a company pool.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LabelSet {
    pub winners: Vec<String>,
    pub losers: Vec<String>,
    pub middle: Vec<String>,
}

impl LabelSet {
    pub fn label_of(&self, ticker: &str) -> Option<Label> {
        if self.winners.iter().any(|t| t == ticker) {
            Some(Label::Winner)
        } else if self.losers.iter().any(|t| t == ticker) {
            Some(Label::Loser)
        } else if self.middle.iter().any(|t| t == ticker) {
            Some(Label::Middle)
        } else {
            None
        }
    }

    /// Winners followed by losers: the companies that enter classification.
    pub fn labeled(&self) -> Vec<String> {
        self.winners.iter().chain(&self.losers).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.winners.len() + self.losers.len() + self.middle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidConfig(format!("window start {start} after end {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    /// The first `months` calendar months of `dates`, clipped to the data.
    pub fn leading(dates: &[NaiveDate], months: u32) -> Result<Self> {
        let (first, last) = bounds(dates)?;
        let end = window_end_exclusive(first, months)?.pred_opt().expect("date underflow");
        Self::new(first, end.min(last))
    }

    /// The last `months` calendar months of `dates` (counting the month of
    /// the final date), clipped to the data.
    pub fn trailing(dates: &[NaiveDate], months: u32) -> Result<Self> {
        let (first, last) = bounds(dates)?;
        let start = last
            .with_day(1)
            .and_then(|d| d.checked_sub_months(Months::new(months.saturating_sub(1))))
            .ok_or_else(|| Error::InvalidInput("trailing window underflows the calendar".into()))?;
        Self::new(start.max(first), last)
    }
}

fn bounds(dates: &[NaiveDate]) -> Result<(NaiveDate, NaiveDate)> {
    match (dates.first(), dates.last()) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err(Error::InvalidInput("empty calendar".into())),
    }
}

pub fn average_price(prices: &[f64]) -> Result<f64> {
    if prices.is_empty() {
        return Err(Error::InvalidInput("average of an empty price list".into()));
    }
    Ok(prices.iter().sum::<f64>() / prices.len() as f64)
}

/// Score every company in the panel by end-window over begin-window mean
/// price.
pub fn score_companies(panel: &PricePanel, begin: DateWindow, end: DateWindow) -> Result<Vec<CompanyScore>> {
    let rows_in = |w: DateWindow, name: &str| -> Result<Vec<usize>> {
        let dates = panel.dates();
        let (first, last) = bounds(dates)?;
        if w.start < first || w.end > last {
            return Err(Error::InvalidInput(format!(
                "{name} window {}..{} outside panel range {first}..{last}",
                w.start, w.end
            )));
        }
        let rows: Vec<usize> = (0..dates.len()).filter(|&t| w.contains(dates[t])).collect();
        if rows.is_empty() {
            return Err(Error::InvalidInput(format!("{name} window {}..{} contains no trading days", w.start, w.end)));
        }
        Ok(rows)
    };
    let begin_rows = rows_in(begin, "begin")?;
    let end_rows = rows_in(end, "end")?;
    let prices = panel.prices();
    panel
        .tickers()
        .iter()
        .enumerate()
        .map(|(c, ticker)| {
            let column = |rows: &[usize]| rows.iter().map(|&t| prices[(t, c)]).collect::<Vec<_>>();
            let avp_begin = average_price(&column(&begin_rows))?;
            let avp_end = average_price(&column(&end_rows))?;
            Ok(CompanyScore { ticker: ticker.clone(), avp_begin, avp_end, growth: avp_end / avp_begin })
        })
        .collect()
}

/// Sort by growth (descending, ties by ticker) and split off the top and
/// bottom `floor(N / 3)` companies.
pub fn label_thirds(scores: &[CompanyScore]) -> Result<LabelSet> {
    let n = scores.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("labeling needs at least 3 companies, got {n}")));
    }
    if let Some(s) = scores.iter().find(|s| !(s.growth.is_finite() && s.growth > 0.0)) {
        return Err(Error::InvalidInput(format!("{}: invalid growth {}", s.ticker, s.growth)));
    }
    let mut order: Vec<&CompanyScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        b.growth.partial_cmp(&a.growth).unwrap_or(Ordering::Equal).then_with(|| a.ticker.cmp(&b.ticker))
    });
    let third = n / 3;
    let names = |s: &[&CompanyScore]| s.iter().map(|c| c.ticker.clone()).collect::<Vec<_>>();
    Ok(LabelSet {
        winners: names(&order[..third]),
        middle: names(&order[third..n - third]),
        losers: names(&order[n - third..]),
    })
}

/// `ticker,label,growth`, in score order.
pub fn write_labels_csv<W: Write>(out: W, labels: &LabelSet, scores: &[CompanyScore]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidInput(format!("writing labels: {e}"));
    w.write_record(["ticker", "label", "growth"]).map_err(io)?;
    for s in scores {
        let label =
            labels.label_of(&s.ticker).ok_or_else(|| Error::InvalidInput(format!("{} has no label", s.ticker)))?;
        w.write_record([s.ticker.as_str(), label.as_str(), &s.growth.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("writing labels: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn score(ticker: &str, growth: f64) -> CompanyScore {
        CompanyScore { ticker: ticker.into(), avp_begin: 1.0, avp_end: growth, growth }
    }

    #[test]
    fn average_price_cases() {
        assert_eq!(average_price(&[10.0, 10.0, 10.0]).unwrap(), 10.0);
        assert_eq!(average_price(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(average_price(&[7.2]).unwrap(), 7.2);
        assert!(average_price(&[]).is_err());
    }

    fn panel() -> PricePanel {
        let dates: Vec<NaiveDate> = (1..=6).map(|d| NaiveDate::from_ymd_opt(2020, 1, d).unwrap()).collect();
        // A doubles, B goes 50 -> 40
        let prices =
            DMatrix::from_column_slice(6, 2, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 50.0, 50.0, 50.0, 40.0, 40.0, 40.0]);
        PricePanel::new(dates, vec!["A".into(), "B".into()], prices).unwrap()
    }

    #[test]
    fn score_growth_ratios() {
        let p = panel();
        let d = |x| NaiveDate::from_ymd_opt(2020, 1, x).unwrap();
        let begin = DateWindow::new(d(1), d(3)).unwrap();
        let end = DateWindow::new(d(4), d(6)).unwrap();
        let s = score_companies(&p, begin, end).unwrap();
        assert_eq!(s[0].growth, 2.0);
        assert!((s[1].growth - 0.8).abs() < 1e-15);

        let same = score_companies(&p, begin, begin).unwrap();
        assert!(same.iter().all(|s| s.growth == 1.0));

        let outside = DateWindow::new(d(5), NaiveDate::from_ymd_opt(2020, 2, 1).unwrap()).unwrap();
        assert!(score_companies(&p, begin, outside).is_err());
    }

    #[test]
    fn thirds_smallest_case() {
        let l = label_thirds(&[score("b", 1.0), score("a", 2.0), score("c", 0.5)]).unwrap();
        assert_eq!(l.winners, vec!["a"]);
        assert_eq!(l.middle, vec!["b"]);
        assert_eq!(l.losers, vec!["c"]);
        assert!(label_thirds(&[score("a", 1.0), score("b", 1.0)]).is_err());
    }

    #[test]
    fn thirds_tie_break_is_lexicographic() {
        let l = label_thirds(&[score("z", 1.0), score("a", 1.0), score("m", 1.0)]).unwrap();
        assert_eq!(l.winners, vec!["a"]);
        assert_eq!(l.losers, vec!["z"]);
    }

    #[test]
    fn default_windows() {
        let d = |y, m, x| NaiveDate::from_ymd_opt(y, m, x).unwrap();
        let dates = vec![d(2009, 7, 2), d(2009, 9, 30), d(2009, 10, 1), d(2012, 3, 30), d(2012, 4, 2), d(2012, 6, 29)];
        let begin = DateWindow::leading(&dates, 3).unwrap();
        assert_eq!((begin.start, begin.end), (d(2009, 7, 2), d(2009, 9, 30)));
        let end = DateWindow::trailing(&dates, 3).unwrap();
        assert_eq!((end.start, end.end), (d(2012, 4, 1), d(2012, 6, 29)));
    }

    proptest! {
        #[test]
        fn thirds_partition(growths in proptest::collection::vec(0.1f64..10.0, 3..120)) {
            let scores: Vec<_> = growths.iter().enumerate().map(|(i, g)| score(&format!("T{i:03}"), *g)).collect();
            let l = label_thirds(&scores).unwrap();
            let n = scores.len();
            prop_assert_eq!(l.winners.len(), n / 3);
            prop_assert_eq!(l.losers.len(), n / 3);
            prop_assert_eq!(l.len(), n);
            let g = |t: &String| scores.iter().find(|s| &s.ticker == t).unwrap().growth;
            let min_w = l.winners.iter().map(g).fold(f64::INFINITY, f64::min);
            let max_l = l.losers.iter().map(g).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min_w >= max_l);
            for t in &l.middle {
                prop_assert!(g(t) <= min_w && g(t) >= max_l);
            }
        }

        #[test]
        fn labels_are_scale_free(growths in proptest::collection::vec(0.5f64..2.0, 6..30), pick in 0usize..6, scale in 0.01f64..100.0) {
            let n = growths.len();
            let dates: Vec<NaiveDate> = (1..=4).map(|d| NaiveDate::from_ymd_opt(2020, 1, d).unwrap()).collect();
            let tickers: Vec<String> = (0..n).map(|i| format!("T{i:02}")).collect();
            let build = |s: f64| {
                let m = DMatrix::from_fn(4, n, |t, c| {
                    let base = if t < 2 { 1.0 } else { growths[c] };
                    if c == pick { base * s } else { base }
                });
                PricePanel::new(dates.clone(), tickers.clone(), m).unwrap()
            };
            let begin = DateWindow::new(dates[0], dates[1]).unwrap();
            let end = DateWindow::new(dates[2], dates[3]).unwrap();
            let a = label_thirds(&score_companies(&build(1.0), begin, end).unwrap()).unwrap();
            let b = label_thirds(&score_companies(&build(scale), begin, end).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
