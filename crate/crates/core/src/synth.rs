//! Synthetic market panels with known structure.
//!
//! Returns follow a two-factor block model: every company in a class loads on
//! that class's factor with weight `sqrt(intra_rho)` and carries independent
//! noise with weight `sqrt(1 - intra_rho)`. The two class factors are
//! themselves correlated so that any winner/loser pair has correlation
//! `cross_rho`. Middle companies (if any) carry noise only.

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::PricePanel;
use crate::labeling::LabelSet;

const START_PRICE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_winners: usize,
    pub n_losers: usize,
    pub n_middle: usize,
    /// Number of price rows.
    pub n_days: usize,
    pub intra_rho: f64,
    pub cross_rho: f64,
    pub drift_winner: f64,
    pub drift_loser: f64,
    pub volatility: f64,
    pub seed: u64,
    pub start_date: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_winners: 16,
            n_losers: 16,
            n_middle: 0,
            n_days: 63,
            intra_rho: 0.8,
            cross_rho: 0.0,
            drift_winner: 0.002,
            drift_loser: -0.002,
            volatility: 0.02,
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2009, 7, 2).unwrap(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(0.0..1.0).contains(&self.intra_rho) {
            return bad(format!("intra_rho {} outside [0, 1)", self.intra_rho));
        }
        if !(0.0..=self.intra_rho).contains(&self.cross_rho) {
            return bad(format!("cross_rho {} outside [0, intra_rho = {}]", self.cross_rho, self.intra_rho));
        }
        if !(self.volatility.is_finite() && self.volatility > 0.0) {
            return bad(format!("volatility {} must be positive", self.volatility));
        }
        if !(self.drift_winner.is_finite() && self.drift_loser.is_finite()) {
            return bad("drifts must be finite".into());
        }
        if self.n_days < 2 {
            return bad(format!("n_days {} < 2", self.n_days));
        }
        if self.n_winners + self.n_losers + self.n_middle < 3 {
            return bad("need at least 3 companies".into());
        }
        Ok(())
    }

    fn n_companies(&self) -> usize {
        self.n_winners + self.n_losers + self.n_middle
    }
}

/// `n` consecutive weekdays starting on (or after) `start`.
pub fn weekday_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start.iter_days().filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)).take(n).collect()
}

fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("SYN{i:03}")).collect()
}

fn prices_from_returns(returns: &DMatrix<f64>) -> DMatrix<f64> {
    let (n_ret, n_co) = returns.shape();
    let mut prices = DMatrix::zeros(n_ret + 1, n_co);
    for c in 0..n_co {
        let mut log_p = START_PRICE.ln();
        prices[(0, c)] = START_PRICE;
        for t in 0..n_ret {
            log_p += returns[(t, c)];
            prices[(t + 1, c)] = log_p.exp();
        }
    }
    prices
}

/// Independent Gaussian random walks; all population correlations are zero.
pub fn gen_null_panel(n_companies: usize, n_days: usize, volatility: f64, seed: u64) -> Result<PricePanel> {
    let spec = SynthSpec {
        n_winners: 0,
        n_losers: 0,
        n_middle: n_companies,
        n_days,
        intra_rho: 0.0,
        cross_rho: 0.0,
        drift_winner: 0.0,
        drift_loser: 0.0,
        volatility,
        seed,
        ..SynthSpec::default()
    };
    gen_planted_panel(&spec).map(|(panel, _)| panel)
}

/// Panel with planted winner/loser correlation blocks. Columns are ordered
/// winners, losers, middle; the returned labels are the planted classes.
pub fn gen_planted_panel(spec: &SynthSpec) -> Result<(PricePanel, LabelSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_ret = spec.n_days - 1;
    let n = spec.n_companies();
    let factor_corr = if spec.intra_rho > 0.0 { spec.cross_rho / spec.intra_rho } else { 0.0 };
    let load = spec.intra_rho.sqrt();
    let idio = (1.0 - spec.intra_rho).sqrt();
    let drift_middle = 0.5 * (spec.drift_winner + spec.drift_loser);

    let mut returns = DMatrix::zeros(n_ret, n);
    for t in 0..n_ret {
        let fw: f64 = StandardNormal.sample(&mut rng);
        let g: f64 = StandardNormal.sample(&mut rng);
        let fl = factor_corr * fw + (1.0 - factor_corr * factor_corr).sqrt() * g;
        for c in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let (drift, shock) = if c < spec.n_winners {
                (spec.drift_winner, load * fw + idio * e)
            } else if c < spec.n_winners + spec.n_losers {
                (spec.drift_loser, load * fl + idio * e)
            } else {
                (drift_middle, e)
            };
            returns[(t, c)] = drift + spec.volatility * shock;
        }
    }

    let names = tickers(n);
    let labels = LabelSet {
        winners: names[..spec.n_winners].to_vec(),
        losers: names[spec.n_winners..spec.n_winners + spec.n_losers].to_vec(),
        middle: names[spec.n_winners + spec.n_losers..].to_vec(),
    };
    let panel = PricePanel::new(weekday_calendar(spec.start_date, spec.n_days), names, prices_from_returns(&returns))?;
    Ok((panel, labels))
}
