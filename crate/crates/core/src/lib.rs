//! Tests whether long-horizon winner and loser components of a stock index
//! can be told apart from the first months of their daily log-returns.
//!
//! The pipeline cleans closing prices onto the index calendar, labels the top
//! and bottom thirds by the ratio of final to beginning average price, and
//! runs leave-one-out k-NN under two correlation-based dissimilarities. Pair
//! distance histograms and elastic-map embeddings describe the class
//! structure; a synthetic market generator provides ground truth.

pub mod classify;
pub mod config;
pub mod embed;
pub mod error;
pub mod ingest;
pub mod labeling;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use classify::{knn_vote, loocv, loocv_sweep, proportion_estimate, KnnConfig, LoocvReport, ProportionEstimate};
pub use config::{DataSource, EmbedPool, RunConfig};
pub use embed::{fit_elastic_map, pca, project_internal, ElasticMap, ElasticNetParams, Embedding};
pub use error::{Error, ErrorKind, Result};
pub use ingest::{
    align_to_index_calendar, clean_panel, compute_log_returns, slice_initial_window, CleanOptions, FillMethod,
    PricePanel, RawSeries, ReturnMatrix,
};
pub use labeling::{average_price, label_thirds, score_companies, CompanyScore, DateWindow, Label, LabelSet};
pub use metrics::{
    distance, distance_matrix, partition_pairs, pearson, proximity, verify_angle_identities, Correlation,
    DistanceMatrix, Measure, PairPartition,
};
pub use pipeline::{run_pipeline, run_stages, PipelineOutput, Stage};
pub use report::{build_histogram, build_pair_histogram, emit_plots, Histogram, PairHistogram};
pub use synth::{gen_null_panel, gen_planted_panel, SynthSpec};
