pub mod cli;
pub mod decomposition;
pub mod detectors;
pub mod features;
pub mod forest;
pub mod harness;
pub mod ingest;
pub mod labeling;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod scenarios;
