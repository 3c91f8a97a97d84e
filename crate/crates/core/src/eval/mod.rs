//! Word error rate, inverse real-time factor and the benchmark harness.

mod bench;
mod metrics;
mod plot;

pub use bench::{
    ar_baseline_decode, latency_comparison, latency_csv, sweep, utterance_seed, ArDecoded, BenchReport, BenchRow,
    LatencyRow, UtteranceResult, LATENCY_CSV_HEADER, REPORT_CSV_HEADER, TIMING_CSV_HEADER,
};
pub use metrics::{edit_distance, rtfx, wer, CorpusWer};
pub use plot::{line_chart_svg, Series};
