//! Run configuration and its flat `key = value` file format.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments of
//! the same key win, which is how command-line flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::classify::KnnConfig;
use crate::embed::ElasticNetParams;
use crate::error::{Error, Result};
use crate::ingest::{parse_date, CleanOptions, FillMethod};
use crate::metrics::Measure;
use crate::synth::SynthSpec;

/// Where prices come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// One `date,close` CSV per company plus an index calendar.
    CompanyDir {
        dir: PathBuf,
        calendar: PathBuf,
    },
    /// A wide `date,ticker...` CSV; its own dates are the calendar unless one
    /// is given.
    WideCsv {
        path: PathBuf,
        calendar: Option<PathBuf>,
    },
    Synth(SynthSpec),
}

/// Which companies the elastic map and PCA are fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbedPool {
    #[default]
    Labeled,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub clean: CleanOptions,
    /// Length of the beginning and final labeling frames when no explicit
    /// dates are given.
    pub label_months: u32,
    pub begin_window: Option<(NaiveDate, NaiveDate)>,
    pub end_window: Option<(NaiveDate, NaiveDate)>,
    pub windows: Vec<u32>,
    pub measures: Vec<Measure>,
    pub knn: KnnConfig,
    pub bins: usize,
    /// Window (months) used for histograms and embeddings; defaults to the
    /// shortest sweep window.
    pub detail_window: Option<u32>,
    pub elastic: ElasticNetParams,
    pub embed_pool: EmbedPool,
    pub out_dir: PathBuf,
}

/// Synthetic market used when no data is supplied: three equal classes over
/// roughly three years of weekdays.
pub fn default_synth() -> SynthSpec {
    SynthSpec { n_winners: 16, n_losers: 16, n_middle: 16, n_days: 756, ..SynthSpec::default() }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synth(default_synth()),
            clean: CleanOptions::default(),
            label_months: 3,
            begin_window: None,
            end_window: None,
            windows: vec![3, 6, 9, 12, 15, 18],
            measures: Measure::ALL.to_vec(),
            knn: KnnConfig::default(),
            bins: 20,
            detail_window: None,
            elastic: ElasticNetParams::default(),
            embed_pool: EmbedPool::Labeled,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Parse the flat key-value text into an ordered map.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn read_pairs(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text)
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| Error::InvalidConfig(format!("{key} = '{v}': {e}")))
}

fn date(key: &str, v: &str) -> Result<NaiveDate> {
    parse_date(v).ok_or_else(|| Error::InvalidConfig(format!("{key} = '{v}': expected YYYY-MM-DD")))
}

impl RunConfig {
    /// Build a config from key-value pairs on top of the defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut synth = default_synth();
        let mut data: Option<PathBuf> = None;
        let mut calendar: Option<PathBuf> = None;
        let (mut bs, mut be, mut es, mut ee) = (None, None, None, None);

        for (k, v) in pairs {
            let key = k.as_str();
            match key {
                "data" => data = Some(PathBuf::from(v)),
                "calendar" => calendar = Some(PathBuf::from(v)),
                "out" => cfg.out_dir = PathBuf::from(v),
                "windows" => cfg.windows = v.split(',').map(|w| value::<u32>(key, w.trim())).collect::<Result<_>>()?,
                "measure" => {
                    cfg.measures = match v.trim().to_ascii_lowercase().as_str() {
                        "both" => Measure::ALL.to_vec(),
                        other => vec![other.parse()?],
                    }
                }
                "k" => cfg.knn.k = value(key, v)?,
                "bins" => cfg.bins = value(key, v)?,
                "seed" => synth.seed = value(key, v)?,
                "missing_threshold" => cfg.clean.missing_threshold = value(key, v)?,
                "fill" => {
                    cfg.clean.fill = match v.as_str() {
                        "cross_section" => FillMethod::CrossSection,
                        "temporal" => FillMethod::Temporal,
                        _ => {
                            return Err(Error::InvalidConfig(format!(
                                "fill = '{v}': expected cross_section or temporal"
                            )))
                        }
                    }
                }
                "label_months" => cfg.label_months = value(key, v)?,
                "begin_start" => bs = Some(date(key, v)?),
                "begin_end" => be = Some(date(key, v)?),
                "end_start" => es = Some(date(key, v)?),
                "end_end" => ee = Some(date(key, v)?),
                "detail_window" => cfg.detail_window = Some(value(key, v)?),
                "grid_rows" => cfg.elastic.grid_rows = value(key, v)?,
                "grid_cols" => cfg.elastic.grid_cols = value(key, v)?,
                "lambda" => cfg.elastic.lambda = value(key, v)?,
                "mu" => cfg.elastic.mu = value(key, v)?,
                "max_iterations" => cfg.elastic.max_iterations = value(key, v)?,
                "tolerance" => cfg.elastic.tolerance = value(key, v)?,
                "embed_pool" => {
                    cfg.embed_pool = match v.as_str() {
                        "labeled" => EmbedPool::Labeled,
                        "all" => EmbedPool::All,
                        _ => return Err(Error::InvalidConfig(format!("embed_pool = '{v}': expected labeled or all"))),
                    }
                }
                "synth_winners" => synth.n_winners = value(key, v)?,
                "synth_losers" => synth.n_losers = value(key, v)?,
                "synth_middle" => synth.n_middle = value(key, v)?,
                "synth_days" => synth.n_days = value(key, v)?,
                "synth_intra_rho" => synth.intra_rho = value(key, v)?,
                "synth_cross_rho" => synth.cross_rho = value(key, v)?,
                "synth_drift_winner" => synth.drift_winner = value(key, v)?,
                "synth_drift_loser" => synth.drift_loser = value(key, v)?,
                "synth_volatility" => synth.volatility = value(key, v)?,
                "synth_start" => synth.start_date = date(key, v)?,
                _ => return Err(Error::InvalidConfig(format!("unknown key '{key}'"))),
            }
        }

        cfg.begin_window = pair_window("begin", bs, be)?;
        cfg.end_window = pair_window("end", es, ee)?;
        cfg.source = match data {
            Some(path) if path.is_dir() => DataSource::CompanyDir {
                dir: path,
                calendar: calendar
                    .ok_or_else(|| Error::InvalidConfig("a company directory needs --calendar".into()))?,
            },
            // Missing paths are reported as data errors when loading.
            Some(path) if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => {
                DataSource::WideCsv { path, calendar }
            }
            Some(path) => DataSource::CompanyDir { dir: path, calendar: calendar.unwrap_or_default() },
            None => DataSource::Synth(synth),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() || self.windows.contains(&0) {
            return Err(Error::InvalidConfig("windows must be a non-empty list of positive months".into()));
        }
        if self.windows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("windows must be strictly increasing".into()));
        }
        if self.measures.is_empty() {
            return Err(Error::InvalidConfig("no measure selected".into()));
        }
        if self.knn.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::InvalidConfig("bins must be at least 1".into()));
        }
        if self.label_months == 0 {
            return Err(Error::InvalidConfig("label_months must be positive".into()));
        }
        if let (Some(b), Some(e)) = (self.begin_window, self.end_window) {
            if b.1 >= e.0 {
                return Err(Error::InvalidConfig("begin window must end before the end window starts".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.clean.missing_threshold) {
            return Err(Error::InvalidConfig("missing_threshold must lie in [0, 1]".into()));
        }
        self.elastic.validate()?;
        if let DataSource::Synth(spec) = &self.source {
            spec.validate()?;
        }
        Ok(())
    }

    /// Window used for histograms and embeddings.
    pub fn detail_months(&self) -> u32 {
        self.detail_window.unwrap_or(self.windows[0])
    }
}

fn pair_window(name: &str, a: Option<NaiveDate>, b: Option<NaiveDate>) -> Result<Option<(NaiveDate, NaiveDate)>> {
    match (a, b) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) if a <= b => Ok(Some((a, b))),
        (Some(_), Some(_)) => Err(Error::InvalidConfig(format!("{name} window start after its end"))),
        _ => Err(Error::InvalidConfig(format!("{name} window needs both {name}_start and {name}_end"))),
    }
}
