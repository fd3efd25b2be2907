use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::index::{LinkMode, Linker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub mode: LinkMode,
    pub mentions: usize,
    pub run_seconds: Vec<f64>,
    pub median_seconds: f64,
    pub mentions_per_sec: f64,
    pub max_mentions: usize,
    pub threads: usize,
    pub hardware: String,
}

fn hardware_note() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{} {} cpu, {cores} logical cores", std::env::consts::OS, std::env::consts::ARCH)
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mentions per second of known-span linking, one document at a time on the
/// calling thread. One untimed warm-up pass precedes `runs` timed passes
/// (at least 3); the median pass time is reported.
pub fn bench_throughput(
    linker: &Linker<'_>,
    docs: &[Document],
    mode: LinkMode,
    runs: usize,
) -> Result<ThroughputReport> {
    if mode.is_end_to_end() {
        return Err(Error::Config(
            "throughput is measured for collective and per_mention modes only".into(),
        ));
    }
    let mentions: usize = docs.iter().map(|d| d.mentions.len()).sum();
    if mentions == 0 {
        return Err(Error::NoMentions);
    }
    let runs = runs.max(3);
    let pass = || -> Result<()> {
        for d in docs {
            std::hint::black_box(linker.link_document(d, mode)?);
        }
        Ok(())
    };
    pass()?;
    let mut run_seconds = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        pass()?;
        run_seconds.push(t.elapsed().as_secs_f64());
    }
    let median_seconds = median(&run_seconds);
    Ok(ThroughputReport {
        mode,
        mentions,
        mentions_per_sec: mentions as f64 / median_seconds,
        run_seconds,
        median_seconds,
        max_mentions: linker.context.max_mentions,
        threads: 1,
        hardware: hardware_note(),
    })
}

/// Collective over per-mention throughput.
pub fn throughput_ratio(collective: &ThroughputReport, per_mention: &ThroughputReport) -> f64 {
    collective.mentions_per_sec / per_mention.mentions_per_sec
}
