//! Text and CSV renderings of the runtime metrics, plus process resource
//! sampling for the behavior-system table.

use std::fmt::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::runtime::MetricsRecord;

pub const CSV_HEADER: &str = "behavior,a,t1_us,t2_ms,t3_ms";

fn fields(m: &MetricsRecord) -> [String; 3] {
    [
        format!("{:.3}", m.t1_us),
        format!("{:.3}", m.t2_ms),
        format!("{:.3}", m.t3_ms),
    ]
}

/// One row per behavior, LF line endings.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for m in records {
        let [t1, t2, t3] = fields(m);
        writeln!(out, "{},{},{t1},{t2},{t3}", m.behavior, m.a).unwrap();
    }
    out
}

/// Share of the mission spent in monitoring checks: Σt2 / duration.
pub fn monitoring_fraction(records: &[MetricsRecord], duration_s: f64) -> f64 {
    if duration_s <= 0.0 {
        return 0.0;
    }
    records.iter().fold(0.0, |acc, m| acc + m.t2_ms) / 1e3 / duration_s
}

/// Share of the mission spent activating and deactivating: Σa·t3 / duration.
pub fn activation_fraction(records: &[MetricsRecord], duration_s: f64) -> f64 {
    if duration_s <= 0.0 {
        return 0.0;
    }
    records
        .iter()
        .fold(0.0, |acc, m| acc + m.a as f64 * m.t3_ms)
        / 1e3
        / duration_s
}

pub fn percent(fraction: f64) -> String {
    format!("{:.2}%", fraction * 100.0)
}

pub fn metrics_table(records: &[MetricsRecord], duration_s: f64) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<34} {:>5} {:>10} {:>10} {:>10}",
        "behavior", "a", "t1 (us)", "t2 (ms)", "t3 (ms)"
    )
    .unwrap();
    for m in records {
        let [t1, t2, t3] = fields(m);
        writeln!(
            out,
            "{:<34} {:>5} {t1:>10} {t2:>10} {t3:>10}",
            m.behavior, m.a
        )
        .unwrap();
    }
    writeln!(
        out,
        "monitoring: {} of {duration_s:.3} s",
        percent(monitoring_fraction(records, duration_s))
    )
    .unwrap();
    writeln!(
        out,
        "activation management: {} of {duration_s:.3} s",
        percent(activation_fraction(records, duration_s))
    )
    .unwrap();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceUsage {
    pub peak_mb: f64,
    pub mean_cpu_percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemRow {
    pub system: String,
    pub behaviors: usize,
    /// `None` when resources were not sampled.
    pub usage: Option<ResourceUsage>,
}

pub fn systems_table(rows: &[SystemRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<34} {:>3} {:>8} {:>7}", "system", "b", "MB", "CPU%").unwrap();
    for r in rows {
        let (mb, cpu) = match r.usage {
            Some(u) => (
                format!("{:.1}", u.peak_mb),
                format!("{:.2}", u.mean_cpu_percent),
            ),
            None => ("n/a".into(), "n/a".into()),
        };
        writeln!(out, "{:<34} {:>3} {mb:>8} {cpu:>7}", r.system, r.behaviors).unwrap();
    }
    out
}

/// Kernel clock ticks per second for `/proc/self/stat` CPU times.
const CLOCK_TICKS_PER_SEC: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct ProcSample {
    rss_kb: u64,
    cpu_ticks: u64,
}

fn parse_status_rss(status: &str) -> Option<u64> {
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// utime + stime from a `/proc/<pid>/stat` line.
fn parse_stat_cpu(stat: &str) -> Option<u64> {
    // The command name may contain spaces; fields restart after ')'.
    let rest = &stat[stat.rfind(')')? + 1..];
    let f: Vec<&str> = rest.split_whitespace().collect();
    // `rest` starts at field 3 (state); utime and stime are fields 14, 15.
    Some(f.get(11)?.parse::<u64>().ok()? + f.get(12)?.parse::<u64>().ok()?)
}

fn read_sample() -> Option<ProcSample> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    Some(ProcSample {
        rss_kb: parse_status_rss(&status)?,
        cpu_ticks: parse_stat_cpu(&stat)?,
    })
}

/// Samples this process's resident memory and CPU time once per period
/// on a background thread.
pub struct ResourceSampler {
    stop: Arc<AtomicBool>,
    thread: JoinHandle<Option<ResourceUsage>>,
}

impl ResourceSampler {
    pub fn start(period: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            let begin = Instant::now();
            let first = read_sample()?;
            let mut peak_kb = first.rss_kb;
            let mut last = first;
            let mut next = begin + period;
            while !flag.load(Ordering::SeqCst) {
                if Instant::now() >= next {
                    if let Some(s) = read_sample() {
                        peak_kb = peak_kb.max(s.rss_kb);
                        last = s;
                    }
                    next += period;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            if let Some(s) = read_sample() {
                peak_kb = peak_kb.max(s.rss_kb);
                last = s;
            }
            let wall = begin.elapsed().as_secs_f64();
            let cpu = (last.cpu_ticks - first.cpu_ticks) as f64 / CLOCK_TICKS_PER_SEC;
            Some(ResourceUsage {
                peak_mb: peak_kb as f64 / 1024.0,
                mean_cpu_percent: if wall > 0.0 { cpu / wall * 100.0 } else { 0.0 },
            })
        });
        Self { stop, thread }
    }

    /// `None` where `/proc` is unavailable.
    pub fn finish(self) -> Option<ResourceUsage> {
        self.stop.store(true, Ordering::SeqCst);
        self.thread.join().ok().flatten()
    }
}
