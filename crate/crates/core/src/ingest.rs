//! Price ingestion: calendar alignment, missing-value cleaning, log-returns
//! and initial-window slicing.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Months, NaiveDate};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

const DATE_FORMAT: &str = "%Y-%m-%d";

/// One company's closing prices before cleaning. `None` marks a missing close.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub ticker: String,
    observations: Vec<(NaiveDate, Option<f64>)>,
}

impl RawSeries {
    pub fn new(ticker: impl Into<String>, observations: Vec<(NaiveDate, Option<f64>)>) -> Result<Self> {
        let ticker = ticker.into();
        if let Some(w) = observations.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidInput(format!("{ticker}: dates not strictly increasing at {}", w[1].0)));
        }
        if let Some((d, p)) = observations.iter().find(|(_, p)| p.is_some_and(|p| !(p.is_finite() && p > 0.0))) {
            return Err(Error::InvalidInput(format!("{ticker}: non-positive price {} on {d}", p.unwrap())));
        }
        Ok(Self { ticker, observations })
    }

    pub fn observations(&self) -> &[(NaiveDate, Option<f64>)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.observations.iter().filter(|(_, p)| p.is_none()).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.observations.is_empty() {
            return 1.0;
        }
        self.missing_count() as f64 / self.observations.len() as f64
    }

    fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.observations.iter().map(|(d, _)| *d)
    }
}

/// Cleaned closing prices, one row per trading day (oldest first) and one
/// column per company. Every entry is present and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    prices: DMatrix<f64>,
}

impl PricePanel {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        check_shape(&dates, &tickers, &prices)?;
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidInput(format!("non-positive price {p} in panel")));
        }
        Ok(Self { dates, tickers, prices })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_companies(&self) -> usize {
        self.tickers.len()
    }

    /// Restrict the panel to `tickers`, in the given order.
    pub fn select(&self, tickers: &[String]) -> Result<Self> {
        let idx = column_indices(&self.tickers, tickers)?;
        Ok(Self {
            dates: self.dates.clone(),
            tickers: tickers.to_vec(),
            prices: self.prices.select_columns(idx.iter()),
        })
    }
}

/// Daily log-returns; row `t` holds ln(P[t+1] / P[t]) and is dated by the
/// later of the two trading days.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    returns: DMatrix<f64>,
}

impl ReturnMatrix {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        check_shape(&dates, &tickers, &returns)?;
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("non-finite log-return".into()));
        }
        Ok(Self { dates, tickers, returns })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_companies(&self) -> usize {
        self.tickers.len()
    }

    pub fn select(&self, tickers: &[String]) -> Result<Self> {
        let idx = column_indices(&self.tickers, tickers)?;
        Ok(Self {
            dates: self.dates.clone(),
            tickers: tickers.to_vec(),
            returns: self.returns.select_columns(idx.iter()),
        })
    }

    /// Company vectors as rows: `[company × day]`.
    pub fn company_rows(&self) -> DMatrix<f64> {
        self.returns.transpose()
    }
}

fn check_shape(dates: &[NaiveDate], tickers: &[String], m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != dates.len() || m.ncols() != tickers.len() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{} but there are {} dates and {} tickers",
            m.nrows(),
            m.ncols(),
            dates.len(),
            tickers.len()
        )));
    }
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("dates not strictly increasing".into()));
    }
    Ok(())
}

fn column_indices(have: &[String], want: &[String]) -> Result<Vec<usize>> {
    want.iter()
        .map(|t| have.iter().position(|h| h == t).ok_or_else(|| Error::InvalidInput(format!("unknown ticker '{t}'"))))
        .collect()
}

/// Re-index a series onto the index trading calendar. Observations on
/// non-index days are dropped; index days the series lacks become missing.
pub fn align_to_index_calendar(series: &RawSeries, index_dates: &[NaiveDate]) -> Result<RawSeries> {
    if index_dates.is_empty() {
        return Err(Error::InvalidInput("empty index calendar".into()));
    }
    if index_dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("index calendar not strictly increasing".into()));
    }
    let obs = series.observations();
    let mut j = 0;
    let aligned = index_dates
        .iter()
        .map(|&d| {
            while j < obs.len() && obs[j].0 < d {
                j += 1;
            }
            match obs.get(j) {
                Some(&(od, p)) if od == d => (d, p),
                _ => (d, None),
            }
        })
        .collect();
    Ok(RawSeries { ticker: series.ticker.clone(), observations: aligned })
}

/// How remaining gaps are filled once sparse companies have been dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillMethod {
    /// Mean of the available closes of all surviving companies on that date.
    #[default]
    CrossSection,
    /// Mean of the company's own available closes.
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanOptions {
    /// Companies with a missing fraction strictly above this are dropped.
    pub missing_threshold: f64,
    pub fill: FillMethod,
}

impl Default for CleanOptions {
    fn default() -> Self {
        Self { missing_threshold: 0.20, fill: FillMethod::CrossSection }
    }
}

/// Drop companies with too many gaps, fill the rest and assemble a panel.
/// Returns the panel and the dropped tickers in input order.
pub fn clean_panel(aligned: &[RawSeries], opts: CleanOptions) -> Result<(PricePanel, Vec<String>)> {
    if !(0.0..=1.0).contains(&opts.missing_threshold) {
        return Err(Error::InvalidConfig(format!("missing threshold {} outside [0, 1]", opts.missing_threshold)));
    }
    let Some(first) = aligned.first() else {
        return Err(Error::EmptyPanel);
    };
    let dates: Vec<NaiveDate> = first.dates().collect();
    if let Some(s) = aligned.iter().find(|s| !s.dates().eq(dates.iter().copied())) {
        return Err(Error::InvalidInput(format!("{} is not aligned to the shared calendar", s.ticker)));
    }

    let (kept, dropped): (Vec<&RawSeries>, Vec<&RawSeries>) =
        aligned.iter().partition(|s| s.missing_fraction() <= opts.missing_threshold);
    let dropped = dropped.into_iter().map(|s| s.ticker.clone()).collect();
    if kept.is_empty() {
        return Err(Error::EmptyPanel);
    }

    let n_rows = dates.len();
    let mut prices = DMatrix::<f64>::zeros(n_rows, kept.len());
    match opts.fill {
        FillMethod::CrossSection => {
            for (t, &date) in dates.iter().enumerate() {
                let (sum, n) =
                    kept.iter().filter_map(|s| s.observations[t].1).fold((0.0, 0usize), |(s, n), p| (s + p, n + 1));
                if n == 0 {
                    return Err(Error::UnfillableDate { date });
                }
                let mean = sum / n as f64;
                for (c, s) in kept.iter().enumerate() {
                    prices[(t, c)] = s.observations[t].1.unwrap_or(mean);
                }
            }
        }
        FillMethod::Temporal => {
            for (c, s) in kept.iter().enumerate() {
                let present: Vec<f64> = s.observations.iter().filter_map(|o| o.1).collect();
                if present.is_empty() {
                    return Err(Error::UnfillableDate { date: dates[0] });
                }
                let mean = present.iter().sum::<f64>() / present.len() as f64;
                for t in 0..n_rows {
                    prices[(t, c)] = s.observations[t].1.unwrap_or(mean);
                }
            }
        }
    }
    let tickers = kept.iter().map(|s| s.ticker.clone()).collect();
    Ok((PricePanel::new(dates, tickers, prices)?, dropped))
}

/// Align every series to the calendar (in parallel) and clean the result.
pub fn build_panel(
    series: &[RawSeries],
    index_dates: &[NaiveDate],
    opts: CleanOptions,
) -> Result<(PricePanel, Vec<String>)> {
    let aligned = series.par_iter().map(|s| align_to_index_calendar(s, index_dates)).collect::<Result<Vec<_>>>()?;
    clean_panel(&aligned, opts)
}

pub fn compute_log_returns(panel: &PricePanel) -> Result<ReturnMatrix> {
    let n = panel.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData(format!("log-returns need at least 2 price rows, got {n}")));
    }
    let p = panel.prices();
    let returns = DMatrix::from_fn(n - 1, panel.n_companies(), |t, c| (p[(t + 1, c)] / p[(t, c)]).ln());
    ReturnMatrix::new(panel.dates[1..].to_vec(), panel.tickers.clone(), returns)
}

/// Row-dated data that can be cut down to its first `n` rows.
pub trait DatedRows: Sized {
    fn row_dates(&self) -> &[NaiveDate];
    fn head(&self, n: usize) -> Self;
}

impl DatedRows for PricePanel {
    fn row_dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    fn head(&self, n: usize) -> Self {
        Self {
            dates: self.dates[..n].to_vec(),
            tickers: self.tickers.clone(),
            prices: self.prices.rows(0, n).into_owned(),
        }
    }
}

impl DatedRows for ReturnMatrix {
    fn row_dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    fn head(&self, n: usize) -> Self {
        Self {
            dates: self.dates[..n].to_vec(),
            tickers: self.tickers.clone(),
            returns: self.returns.rows(0, n).into_owned(),
        }
    }
}

/// First day after a window of `months` calendar months starting in the month
/// of `start`. A window opened on 2009-07-02 with 3 months covers July
/// through September.
pub fn window_end_exclusive(start: NaiveDate, months: u32) -> Result<NaiveDate> {
    start
        .with_day(1)
        .and_then(|d| d.checked_add_months(Months::new(months)))
        .ok_or_else(|| Error::InvalidInput(format!("window of {months} months overflows the calendar")))
}

/// Keep the rows falling inside the first `months` calendar months of `data`.
pub fn slice_initial_window<T: DatedRows>(data: &T, months: u32) -> Result<T> {
    if months == 0 {
        return Err(Error::InvalidInput("window length must be at least 1 month".into()));
    }
    let dates = data.row_dates();
    let (Some(&start), Some(&last)) = (dates.first(), dates.last()) else {
        return Err(Error::InsufficientData("no rows to slice".into()));
    };
    let end = window_end_exclusive(start, months)?;
    // The data must reach into the final month of the window.
    let final_month = window_end_exclusive(start, months - 1)?;
    if last < final_month {
        return Err(Error::InsufficientData(format!(
            "{months}-month window from {start} needs data through {}, last date is {last}",
            end.pred_opt().unwrap_or(end)
        )));
    }
    let n = dates.partition_point(|d| *d < end);
    Ok(data.head(n))
}

// ---------------------------------------------------------------------------
// CSV input / output
// ---------------------------------------------------------------------------

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

fn parse_price(path: &Path, field: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case("NA") {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|e| Error::parse(path, format!("bad price '{field}': {e}")))
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(false).from_reader(rdr)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut rdr = csv_reader(open(path)?);
    let header = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>().map_err(|e| Error::parse(path, e))?;
    Ok((header, rows))
}

fn record_date(path: &Path, rec: &csv::StringRecord) -> Result<NaiveDate> {
    let raw = rec.get(0).unwrap_or("");
    parse_date(raw).ok_or_else(|| Error::parse(path, format!("bad date '{raw}'")))
}

/// Read a `date` column calendar file. Rows are sorted; duplicates rejected.
pub fn read_calendar(path: &Path) -> Result<Vec<NaiveDate>> {
    let (_, rows) = read_rows(path)?;
    let mut dates = rows.iter().map(|r| record_date(path, r)).collect::<Result<Vec<_>>>()?;
    dates.sort_unstable();
    if dates.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::parse(path, "duplicate calendar date"));
    }
    Ok(dates)
}

/// Read a single company's `date,close` file. The ticker is the file stem.
pub fn read_company_csv(path: &Path) -> Result<RawSeries> {
    let ticker = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::parse(path, "cannot derive ticker from file name"))?
        .to_string();
    let (header, rows) = read_rows(path)?;
    if header.len() < 2 {
        return Err(Error::parse(path, "expected columns date,close"));
    }
    let mut obs = rows
        .iter()
        .map(|r| Ok((record_date(path, r)?, parse_price(path, r.get(1).unwrap_or(""))?)))
        .collect::<Result<Vec<_>>>()?;
    obs.sort_by_key(|(d, _)| *d);
    RawSeries::new(ticker, obs).map_err(|e| Error::parse(path, e))
}

/// Read every `*.csv` in `dir` as one company, skipping `exclude` (typically
/// the calendar file). Companies come back sorted by ticker.
pub fn read_company_dir(dir: &Path, exclude: Option<&Path>) -> Result<Vec<RawSeries>> {
    let exclude = exclude.and_then(|p| fs::canonicalize(p).ok());
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .filter(|p| exclude.is_none() || fs::canonicalize(p).ok() != exclude)
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no CSV files in {}", dir.display())));
    }
    paths.par_iter().map(|p| read_company_csv(p)).collect()
}

/// Read a wide `date,ticker1,ticker2,...` file. Returns the row dates (used
/// as the calendar) and one raw series per ticker column.
pub fn read_wide_csv(path: &Path) -> Result<(Vec<NaiveDate>, Vec<RawSeries>)> {
    let (header, rows) = read_rows(path)?;
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if tickers.is_empty() {
        return Err(Error::parse(path, "no ticker columns"));
    }
    let mut parsed = rows
        .iter()
        .map(|r| {
            let date = record_date(path, r)?;
            let prices = r.iter().skip(1).map(|f| parse_price(path, f)).collect::<Result<Vec<_>>>()?;
            Ok((date, prices))
        })
        .collect::<Result<Vec<_>>>()?;
    parsed.sort_by_key(|(d, _)| *d);
    let dates: Vec<NaiveDate> = parsed.iter().map(|(d, _)| *d).collect();
    let series = tickers
        .iter()
        .enumerate()
        .map(|(c, t)| {
            let obs = parsed.iter().map(|(d, p)| (*d, p[c])).collect();
            RawSeries::new(t.clone(), obs).map_err(|e| Error::parse(path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dates, series))
}

fn write_wide<W: Write>(out: W, dates: &[NaiveDate], tickers: &[String], values: &DMatrix<f64>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(tickers.iter().cloned());
    w.write_record(&header)?;
    for (t, d) in dates.iter().enumerate() {
        let mut rec = vec![d.format(DATE_FORMAT).to_string()];
        rec.extend((0..tickers.len()).map(|c| values[(t, c)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()
}

pub fn write_panel_csv<W: Write>(out: W, panel: &PricePanel) -> std::io::Result<()> {
    write_wide(out, &panel.dates, &panel.tickers, &panel.prices)
}

pub fn write_returns_csv<W: Write>(out: W, returns: &ReturnMatrix) -> std::io::Result<()> {
    write_wide(out, &returns.dates, &returns.tickers, &returns.returns)
}
