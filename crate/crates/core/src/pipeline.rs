//! End-to-end orchestration: ingest → label → sweep → histograms →
//! embeddings, with every artifact rendered in memory before anything is
//! written.

use std::fs;
use std::path::{Path, PathBuf};

use crate::classify::{loocv_sweep, reports_json, write_reports_csv, LoocvReport};
use crate::config::{DataSource, EmbedPool, RunConfig};
use crate::embed::{
    embed_internal, embed_principal, fit_elastic_map, pca, write_embedding_csv, write_energy_csv, ElasticMap, Embedding,
};
use crate::error::{Error, Result};
use crate::ingest::{
    build_panel, compute_log_returns, read_calendar, read_company_dir, read_wide_csv, slice_initial_window,
    write_panel_csv, write_returns_csv, PricePanel,
};
use crate::labeling::{label_thirds, score_companies, write_labels_csv, CompanyScore, DateWindow, Label, LabelSet};
use crate::metrics::{
    distance_matrix, partition_pairs, write_distance_matrix_csv, write_partition_csv, DistanceMatrix, Measure,
    PairPartition,
};
use crate::report::{build_pair_histogram, render_plots, summary_table, write_pair_histogram_csv, PairHistogram};
use crate::synth::gen_planted_panel;

/// Pipeline stages; each one adds its own artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Ingest,
    Label,
    Analyze,
    Hist,
    Embed,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Synth, Stage::Ingest, Stage::Label, Stage::Analyze, Stage::Hist, Stage::Embed];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::Analyze => "analyze",
            Stage::Hist => "hist",
            Stage::Embed => "embed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub measure: Measure,
    pub matrix: DistanceMatrix,
    pub partition: PairPartition,
    pub histogram: PairHistogram,
}

#[derive(Debug, Clone)]
pub struct EmbedAnalysis {
    pub map: ElasticMap,
    pub internal: Embedding,
    pub principal: Embedding,
}

/// Everything a run produced.
#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub panel: Option<PricePanel>,
    pub n_input: usize,
    pub dropped: Vec<String>,
    pub scores: Vec<CompanyScore>,
    pub labels: LabelSet,
    /// Planted classes, for synthetic runs.
    pub true_labels: Option<LabelSet>,
    pub reports: Vec<LoocvReport>,
    pub pairs: Vec<PairAnalysis>,
    pub embedding: Option<EmbedAnalysis>,
    pub summary: String,
    pub artifacts: Vec<Artifact>,
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::InvalidInput(format!("rendering CSV: {e}")))?;
    Ok(buf)
}

struct Loaded {
    panel: PricePanel,
    n_input: usize,
    dropped: Vec<String>,
    true_labels: Option<LabelSet>,
}

fn load(source: &DataSource, cfg: &RunConfig) -> Result<Loaded> {
    match source {
        DataSource::Synth(spec) => {
            let (panel, truth) = gen_planted_panel(spec)?;
            Ok(Loaded { n_input: panel.n_companies(), panel, dropped: Vec::new(), true_labels: Some(truth) })
        }
        DataSource::CompanyDir { dir, calendar } => {
            let series = read_company_dir(dir, Some(calendar))?;
            let dates = read_calendar(calendar)?;
            let (panel, dropped) = build_panel(&series, &dates, cfg.clean)?;
            Ok(Loaded { n_input: series.len(), panel, dropped, true_labels: None })
        }
        DataSource::WideCsv { path, calendar } => {
            let (own, series) = read_wide_csv(path)?;
            let dates = match calendar {
                Some(c) => read_calendar(c)?,
                None => own,
            };
            let (panel, dropped) = build_panel(&series, &dates, cfg.clean)?;
            Ok(Loaded { n_input: series.len(), panel, dropped, true_labels: None })
        }
    }
}

fn label_windows(panel: &PricePanel, cfg: &RunConfig) -> Result<(DateWindow, DateWindow)> {
    let begin = match cfg.begin_window {
        Some((a, b)) => DateWindow::new(a, b)?,
        None => DateWindow::leading(panel.dates(), cfg.label_months)?,
    };
    let end = match cfg.end_window {
        Some((a, b)) => DateWindow::new(a, b)?,
        None => DateWindow::trailing(panel.dates(), cfg.label_months)?,
    };
    if begin.end >= end.start {
        return Err(Error::InsufficientData(format!(
            "labeling frames overlap: begin ends {}, end starts {}",
            begin.end, end.start
        )));
    }
    Ok((begin, end))
}

fn labels_of(set: &LabelSet, tickers: &[String]) -> Vec<Label> {
    tickers.iter().map(|t| set.label_of(t).unwrap_or(Label::Middle)).collect()
}

/// Compute the requested stages and render their artifacts in memory.
pub fn compute_stages(cfg: &RunConfig, stages: &[Stage]) -> Result<PipelineOutput> {
    cfg.validate()?;
    let wants = |s: Stage| stages.contains(&s);
    let mut out = PipelineOutput::default();
    let mut artifacts = Vec::new();

    if wants(Stage::Synth) {
        let DataSource::Synth(spec) = &cfg.source else {
            return Err(Error::InvalidConfig("synth stage needs a synthetic source (no --data)".into()));
        };
        let (panel, truth) = gen_planted_panel(spec).map_err(|e| e.in_stage("synth"))?;
        artifacts.push(Artifact { name: "prices.csv".into(), bytes: csv_bytes(|b| write_panel_csv(b, &panel))? });
        let mut planted = String::from("ticker,label\n");
        for t in panel.tickers() {
            let label = truth.label_of(t).unwrap_or(Label::Middle);
            planted.push_str(&format!("{t},{label}\n"));
        }
        artifacts.push(Artifact { name: "true_labels.csv".into(), bytes: planted.into_bytes() });
        out.true_labels = Some(truth);
        out.panel = Some(panel);
    }

    let needs_panel = stages.iter().any(|s| *s != Stage::Synth);
    if !needs_panel {
        out.artifacts = artifacts;
        return Ok(out);
    }

    let loaded = load(&cfg.source, cfg).map_err(|e| e.in_stage("ingest"))?;
    let panel = loaded.panel;
    out.n_input = loaded.n_input;
    out.dropped = loaded.dropped;
    out.true_labels = loaded.true_labels.or(out.true_labels);

    if wants(Stage::Ingest) {
        let returns = compute_log_returns(&panel).map_err(|e| e.in_stage("ingest"))?;
        artifacts.push(Artifact { name: "panel.csv".into(), bytes: csv_bytes(|b| write_panel_csv(b, &panel))? });
        artifacts.push(Artifact { name: "returns.csv".into(), bytes: csv_bytes(|b| write_returns_csv(b, &returns))? });
        let mut dropped = String::from("ticker\n");
        for t in &out.dropped {
            dropped.push_str(t);
            dropped.push('\n');
        }
        artifacts.push(Artifact { name: "dropped.csv".into(), bytes: dropped.into_bytes() });
    }

    let label_stage = || -> Result<(Vec<CompanyScore>, LabelSet)> {
        let (begin, end) = label_windows(&panel, cfg)?;
        let scores = score_companies(&panel, begin, end)?;
        let labels = label_thirds(&scores)?;
        Ok((scores, labels))
    };
    let needs_labels = stages.iter().any(|s| matches!(s, Stage::Label | Stage::Analyze | Stage::Hist | Stage::Embed));
    if !needs_labels {
        out.panel = Some(panel);
        out.artifacts = artifacts;
        return Ok(out);
    }
    let (scores, labels) = label_stage().map_err(|e| e.in_stage("label"))?;
    if wants(Stage::Label) {
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &labels, &scores)?;
        artifacts.push(Artifact { name: "labels.csv".into(), bytes: buf });
    }

    if wants(Stage::Analyze) {
        let reports =
            loocv_sweep(&panel, &labels, &cfg.windows, &cfg.measures, cfg.knn).map_err(|e| e.in_stage("analyze"))?;
        artifacts.push(Artifact { name: "loocv.csv".into(), bytes: csv_bytes(|b| write_reports_csv(b, &reports))? });
        artifacts.push(Artifact { name: "loocv.json".into(), bytes: reports_json(&reports).into_bytes() });
        out.summary = summary_table(&reports);
        artifacts.push(Artifact { name: "summary.txt".into(), bytes: out.summary.clone().into_bytes() });
        out.reports = reports;
    }

    let detail = || -> Result<crate::ingest::ReturnMatrix> {
        let slice = slice_initial_window(&panel, cfg.detail_months())?;
        compute_log_returns(&slice)
    };

    if wants(Stage::Hist) {
        let hist_stage = || -> Result<Vec<PairAnalysis>> {
            let returns = detail()?.select(&labels.labeled())?;
            cfg.measures
                .iter()
                .map(|&measure| {
                    let matrix = distance_matrix(&returns, measure)?;
                    let partition = partition_pairs(&matrix, &labels)?;
                    let histogram = build_pair_histogram(&partition, cfg.bins)?;
                    Ok(PairAnalysis { measure, matrix, partition, histogram })
                })
                .collect()
        };
        let pairs = hist_stage().map_err(|e| e.in_stage("hist"))?;
        for p in &pairs {
            let m = p.measure;
            artifacts.push(Artifact {
                name: format!("dm_{m}.csv"),
                bytes: csv_bytes(|b| write_distance_matrix_csv(b, &p.matrix))?,
            });
            artifacts.push(Artifact {
                name: format!("pairs_{m}.csv"),
                bytes: csv_bytes(|b| write_partition_csv(b, &p.partition))?,
            });
            artifacts.push(Artifact {
                name: format!("hist_{m}.csv"),
                bytes: csv_bytes(|b| write_pair_histogram_csv(b, &p.histogram))?,
            });
        }
        out.pairs = pairs;
    }

    if wants(Stage::Embed) {
        let embed_stage = || -> Result<EmbedAnalysis> {
            let returns = detail()?;
            let pool = match cfg.embed_pool {
                EmbedPool::Labeled => labels.labeled(),
                EmbedPool::All => returns.tickers().to_vec(),
            };
            let returns = returns.select(&pool)?;
            let data = returns.company_rows();
            let classes = labels_of(&labels, &pool);
            let map = fit_elastic_map(&data, &cfg.elastic)?;
            let internal = embed_internal(&map, &data, &pool, &classes)?;
            let principal = embed_principal(&pca(&data, 3)?, &pool, &classes);
            Ok(EmbedAnalysis { map, internal, principal })
        };
        let e = embed_stage().map_err(|e| e.in_stage("embed"))?;
        artifacts.push(Artifact {
            name: "embedding2d.csv".into(),
            bytes: csv_bytes(|b| write_embedding_csv(b, &e.internal))?,
        });
        artifacts.push(Artifact {
            name: "embedding3d.csv".into(),
            bytes: csv_bytes(|b| write_embedding_csv(b, &e.principal))?,
        });
        artifacts.push(Artifact {
            name: "energy.csv".into(),
            bytes: csv_bytes(|b| write_energy_csv(b, &e.map.energy_trace))?,
        });
        out.embedding = Some(e);
    }

    let histograms: Vec<(Measure, PairHistogram)> =
        out.pairs.iter().map(|p| (p.measure, p.histogram.clone())).collect();
    let embeddings: Vec<(&str, &Embedding)> =
        out.embedding.iter().flat_map(|e| [("map", &e.internal), ("pca", &e.principal)]).collect();
    for (name, svg) in render_plots(&out.reports, &histograms, &embeddings) {
        artifacts.push(Artifact { name, bytes: svg.into_bytes() });
    }

    out.panel = Some(panel);
    out.scores = scores;
    out.labels = labels;
    out.artifacts = artifacts;
    Ok(out)
}

/// Write artifacts into `dir`. On failure, files written so far are removed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for a in artifacts {
        let path = dir.join(&a.name);
        if let Err(e) = fs::write(&path, &a.bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(Error::io(&path, e));
        }
        written.push(path);
    }
    Ok(written)
}

/// Run the given stages and write their artifacts to `cfg.out_dir`.
pub fn run_stages(cfg: &RunConfig, stages: &[Stage]) -> Result<PipelineOutput> {
    let out = compute_stages(cfg, stages)?;
    write_artifacts(&cfg.out_dir, &out.artifacts)?;
    Ok(out)
}

/// The full pipeline: every stage except synthetic-data export.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    run_stages(cfg, &[Stage::Ingest, Stage::Label, Stage::Analyze, Stage::Hist, Stage::Embed])
}
