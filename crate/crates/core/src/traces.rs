//! RSSI traces: data model, the `seq,rssi` trace file format, packet-loss
//! filtering, dataset manifests, and a synthetic generator for normal links.
//!
//! A trace file is ASCII with LF line endings. Header lines start with `#` and
//! carry `key=value` pairs (`id`, `src`, `dst`, `noise`, `label`); every other
//! non-empty line is one `seq,rssi` record. Sequence numbers start at 0 and must
//! be strictly increasing. A gap in the sequence marks the trace as lossy.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::inject::{AnomalyKind, InjectionPlan};
use crate::seed;

/// Default number of samples per trace (30 s of packets at 100 ms).
pub const DEFAULT_TRACE_LENGTH: usize = 300;

/// Valid RSSI interval. The floor doubles as the degradation target for
/// injected anomalies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssiRange {
    pub floor: f64,
    pub ceil: f64,
}

impl Default for RssiRange {
    fn default() -> Self {
        RssiRange {
            floor: 0.0,
            ceil: 127.0,
        }
    }
}

impl RssiRange {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.floor && v <= self.ceil
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.floor, self.ceil)
    }
}

/// One link's RSSI sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub id: String,
    pub values: Vec<f64>,
    pub src_node: u32,
    pub dst_node: u32,
    pub noise_level: i32,
    pub label: AnomalyKind,
    /// Set when at least one sequence number was missing in the source file.
    pub lossy: bool,
}

impl Trace {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Self {
        Trace {
            id: id.into(),
            values,
            src_node: 0,
            dst_node: 0,
            noise_level: 0,
            label: AnomalyKind::NoAnomaly,
            lossy: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Serializes into the trace file format. Integral values are written
    /// without a fractional part; others use the shortest exact decimal form.
    pub fn to_file_string(&self) -> String {
        let mut out = String::with_capacity(16 * self.values.len() + 64);
        let _ = writeln!(out, "# id={}", self.id);
        let _ = writeln!(out, "# src={}", self.src_node);
        let _ = writeln!(out, "# dst={}", self.dst_node);
        let _ = writeln!(out, "# noise={}", self.noise_level);
        let _ = writeln!(out, "# label={}", self.label);
        for (seq, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", seq, v);
        }
        out
    }
}

/// Options for [`parse_trace_file_with`].
#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    pub length: usize,
    pub range: RssiRange,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            length: DEFAULT_TRACE_LENGTH,
            range: RssiRange::default(),
        }
    }
}

/// Parses a trace file expecting `length` samples and the default RSSI range.
pub fn parse_trace_file(text: &str, length: usize) -> Result<Trace> {
    parse_trace_file_with(
        text,
        &ParseOptions {
            length,
            ..ParseOptions::default()
        },
    )
}

/// Parses a trace file. Position `k` of the result holds the RSSI of sequence
/// number `k`; positions whose sequence number never appears hold the floor and
/// set [`Trace::lossy`].
pub fn parse_trace_file_with(text: &str, opts: &ParseOptions) -> Result<Trace> {
    let mut trace = Trace::new("", vec![opts.range.floor; opts.length]);
    let mut seen = vec![false; opts.length];
    let mut last_seq: Option<usize> = None;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            parse_header(header.trim(), line_no, &mut trace)?;
            continue;
        }
        let (seq, rssi) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected `seq,rssi`, got `{line}`"),
        })?;
        let seq: usize = seq.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad sequence number `{}`", seq.trim()),
        })?;
        let rssi: f64 = rssi.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad rssi `{}`", rssi.trim()),
        })?;
        if !rssi.is_finite() || !opts.range.contains(rssi) {
            return Err(Error::Range {
                line: line_no,
                value: rssi,
                floor: opts.range.floor,
                ceil: opts.range.ceil,
            });
        }
        if let Some(prev) = last_seq {
            if seq <= prev {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("sequence number {seq} does not follow {prev}"),
                });
            }
        }
        if seq >= opts.length {
            return Err(Error::Parse {
                line: line_no,
                message: format!("sequence number {seq} beyond trace length {}", opts.length),
            });
        }
        last_seq = Some(seq);
        trace.values[seq] = rssi;
        seen[seq] = true;
    }

    trace.lossy = seen.iter().any(|s| !s);
    Ok(trace)
}

fn parse_header(header: &str, line: usize, trace: &mut Trace) -> Result<()> {
    let Some((key, value)) = header.split_once('=') else {
        // free-form comment
        return Ok(());
    };
    let value = value.trim();
    let bad = |what: &str| Error::Parse {
        line,
        message: format!("bad {what} `{value}`"),
    };
    match key.trim() {
        "id" => trace.id = value.to_string(),
        "src" => trace.src_node = value.parse().map_err(|_| bad("src"))?,
        "dst" => trace.dst_node = value.parse().map_err(|_| bad("dst"))?,
        "noise" => trace.noise_level = value.parse().map_err(|_| bad("noise"))?,
        "label" => trace.label = value.parse().map_err(|_| bad("label"))?,
        _ => {}
    }
    Ok(())
}

/// Which side of the packet-loss filter to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossFilter {
    #[default]
    KeepComplete,
    KeepLossy,
}

/// Keeps only traces without packet loss.
pub fn filter_complete(traces: Vec<Trace>) -> Vec<Trace> {
    filter_by_loss(traces, LossFilter::KeepComplete)
}

pub fn filter_by_loss(traces: Vec<Trace>, keep: LossFilter) -> Vec<Trace> {
    let want_lossy = keep == LossFilter::KeepLossy;
    traces.into_iter().filter(|t| t.lossy == want_lossy).collect()
}

/// How a dataset came to be.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Ingested,
    Synthetic { mean: f64, stddev: f64 },
    Injected { base_count: usize, plan: InjectionPlan },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Ingested => write!(f, "ingested"),
            Provenance::Synthetic { mean, stddev } => {
                write!(f, "synthetic mean={mean} stddev={stddev}")
            }
            Provenance::Injected { base_count, plan } => write!(
                f,
                "injected base={base_count} fraction={} seed={}",
                plan.affected_fraction, plan.seed
            ),
        }
    }
}

/// A collection of equal-length traces.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub traces: Vec<Trace>,
    pub trace_length: usize,
    pub seed: u64,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(traces: Vec<Trace>, trace_length: usize, seed: u64, provenance: Provenance) -> Result<Self> {
        if let Some(t) = traces.iter().find(|t| t.len() != trace_length) {
            return Err(Error::param(
                "traces",
                format!("trace `{}` has length {}, expected {trace_length}", t.id, t.len()),
            ));
        }
        Ok(LabeledDataset {
            traces,
            trace_length,
            seed,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Number of traces per label, in [`AnomalyKind::ALL`] order.
    pub fn class_counts(&self) -> [usize; 5] {
        let mut counts = [0; 5];
        for t in &self.traces {
            counts[t.label.index()] += 1;
        }
        counts
    }

    /// Manifest text: header lines with `trace_length`, `seed` and
    /// `provenance`, then one `id,label,seed_offset` line per trace.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# trace_length={}", self.trace_length);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# provenance={}", self.provenance);
        for (i, t) in self.traces.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", t.id, t.label, i);
        }
        out
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: AnomalyKind,
    pub seed_offset: u64,
}

/// Parsed manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub trace_length: usize,
    pub seed: u64,
    pub provenance: String,
    pub entries: Vec<ManifestEntry>,
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut trace_length = None;
    let mut seed = None;
    let mut provenance = String::new();
    let mut entries = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if let Some(header) = line.strip_prefix('#') {
            if let Some((k, v)) = header.split_once('=') {
                match k.trim() {
                    "trace_length" => {
                        trace_length = Some(v.trim().parse().map_err(|_| bad(format!("bad trace_length `{v}`")))?)
                    }
                    "seed" => seed = Some(v.trim().parse().map_err(|_| bad(format!("bad seed `{v}`")))?),
                    "provenance" => provenance = v.trim().to_string(),
                    _ => {}
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [id, label, offset] = fields[..] else {
            return Err(bad(format!("expected `id,label,seed_offset`, got `{line}`")));
        };
        entries.push(ManifestEntry {
            id: id.to_string(),
            label: label.parse().map_err(|_| bad(format!("bad label `{label}`")))?,
            seed_offset: offset.parse().map_err(|_| bad(format!("bad seed_offset `{offset}`")))?,
        });
    }
    Ok(Manifest {
        trace_length: trace_length.ok_or_else(|| Error::Parse {
            line: 0,
            message: "manifest lacks trace_length header".into(),
        })?,
        seed: seed.ok_or_else(|| Error::Parse {
            line: 0,
            message: "manifest lacks seed header".into(),
        })?,
        provenance,
        entries,
    })
}

/// Generates `count` normal traces: Gaussian noise around `mean`, rounded to
/// integer RSSI and clamped to the default range. Trace `i` draws from its own
/// stream derived from `(seed, i)`.
pub fn generate_synthetic_normal(
    count: usize,
    length: usize,
    mean: f64,
    stddev: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if count < 1 {
        return Err(Error::param("traces", "count must be at least 1"));
    }
    if length < 8 {
        return Err(Error::param("traces", format!("length {length} < 8")));
    }
    if !(stddev >= 0.0) || !stddev.is_finite() {
        return Err(Error::param("traces", format!("stddev {stddev} must be >= 0")));
    }
    if !mean.is_finite() {
        return Err(Error::param("traces", "mean must be finite"));
    }
    let range = RssiRange::default();
    let noise = Normal::new(0.0, stddev).map_err(|e| Error::param("traces", e.to_string()))?;
    let traces = (0..count)
        .map(|i| {
            let mut rng = seed::rng_indexed(seed, "synthetic-normal", i as u64);
            let values = (0..length)
                .map(|_| range.clamp((mean + noise.sample(&mut rng)).round()))
                .collect();
            let mut t = Trace::new(format!("syn-{i:05}"), values);
            t.src_node = 0;
            t.dst_node = i as u32 + 1;
            t
        })
        .collect();
    LabeledDataset::new(traces, length, seed, Provenance::Synthetic { mean, stddev })
}

impl FromStr for LossFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(LossFilter::KeepComplete),
            "lossy" => Ok(LossFilter::KeepLossy),
            other => Err(Error::param("traces", format!("unknown loss filter `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(pairs: impl IntoIterator<Item = (usize, i64)>) -> String {
        pairs
            .into_iter()
            .map(|(s, r)| format!("{s},{r}\n"))
            .collect()
    }

    #[test]
    fn complete_constant_trace() {
        let text = records((0..300).map(|s| (s, 40)));
        let t = parse_trace_file(&text, 300).unwrap();
        assert_eq!(t.values, vec![40.0; 300]);
        assert!(!t.lossy);
    }

    #[test]
    fn gap_marks_lossy() {
        let text = records([(0, 40), (1, 41), (3, 39)]);
        let t = parse_trace_file(&text, 4).unwrap();
        assert!(t.lossy);
        assert_eq!(t.values, vec![40.0, 41.0, 0.0, 39.0]);
    }

    #[test]
    fn round_robin_matches_independent_reader() {
        let text: String = (0..300).map(|s| format!("{},{}\n", s, s % 128)).collect();
        // independent reader: take the text after the comma on each line
        let expected: Vec<f64> = text
            .lines()
            .map(|l| l[l.find(',').unwrap() + 1..].parse::<f64>().unwrap())
            .collect();
        let t = parse_trace_file(&text, 300).unwrap();
        assert_eq!(t.values, expected);
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = "# id=x\n0,40\n1;40\n";
        match parse_trace_file(text, 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_rssi() {
        let text = "0,40\n1,128\n";
        assert!(matches!(parse_trace_file(text, 2), Err(Error::Range { line: 2, .. })));
        assert!(matches!(parse_trace_file("0,-1\n", 1), Err(Error::Range { line: 1, .. })));
    }

    #[test]
    fn non_increasing_sequence_rejected() {
        assert!(matches!(parse_trace_file("0,1\n0,1\n", 2), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_trace_file("0,1\n5,1\n", 3), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn headers_round_trip() {
        let mut t = Trace::new("link-3-7", vec![40.0, 12.5, 0.0, 127.0, 33.0, 1.0, 2.0, 3.0]);
        t.src_node = 3;
        t.dst_node = 7;
        t.noise_level = -2;
        t.label = AnomalyKind::SlowD;
        let back = parse_trace_file(&t.to_file_string(), 8).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn file_format_is_exact() {
        let t = Trace::new("a", vec![40.0, 41.0]);
        assert_eq!(
            t.to_file_string(),
            "# id=a\n# src=0\n# dst=0\n# noise=0\n# label=None\n0,40\n1,41\n"
        );
    }

    #[test]
    fn filter_keeps_complete() {
        let mk = |lossy| Trace {
            lossy,
            ..Trace::new("t", vec![1.0])
        };
        let kept = filter_complete(vec![mk(false), mk(true), mk(false)]);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|t| !t.lossy));
        assert!(filter_complete(vec![mk(true), mk(true)]).is_empty());
        assert_eq!(filter_by_loss(vec![mk(false), mk(true)], LossFilter::KeepLossy).len(), 1);
    }

    #[test]
    fn synthetic_zero_variance_is_constant() {
        let ds = generate_synthetic_normal(1, 300, 40.0, 0.0, 11).unwrap();
        assert_eq!(ds.traces[0].values, vec![40.0; 300]);
        assert_eq!(ds.traces[0].label, AnomalyKind::NoAnomaly);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic_normal(5, 300, 40.0, 3.0, 5).unwrap();
        let b = generate_synthetic_normal(5, 300, 40.0, 3.0, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_normal(5, 300, 40.0, 3.0, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_mean_converges() {
        let ds = generate_synthetic_normal(1000, 300, 40.0, 3.0, 99).unwrap();
        let n = (ds.len() * ds.trace_length) as f64;
        let mean: f64 = ds.traces.iter().flat_map(|t| t.values.iter()).sum::<f64>() / n;
        assert!((mean - 40.0).abs() < 0.5, "mean {mean}");
    }

    #[test]
    fn synthetic_rejects_bad_parameters() {
        assert!(generate_synthetic_normal(1, 300, 40.0, -1.0, 0).is_err());
        assert!(generate_synthetic_normal(0, 300, 40.0, 1.0, 0).is_err());
        assert!(generate_synthetic_normal(1, 7, 40.0, 1.0, 0).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let ds = generate_synthetic_normal(3, 16, 40.0, 2.0, 8).unwrap();
        let m = parse_manifest(&ds.manifest()).unwrap();
        assert_eq!(m.trace_length, 16);
        assert_eq!(m.seed, 8);
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.entries[2].id, "syn-00002");
        assert_eq!(m.entries[2].seed_offset, 2);
    }

    proptest::proptest! {
        #[test]
        fn serialize_parse_round_trip(values in proptest::collection::vec(0u8..=127, 8..64)) {
            let t = Trace::new("p", values.iter().map(|&v| f64::from(v)).collect());
            let back = parse_trace_file(&t.to_file_string(), t.len()).unwrap();
            proptest::prop_assert_eq!(back, t);
        }

        #[test]
        fn filter_is_idempotent(flags in proptest::collection::vec(proptest::bool::ANY, 0..20)) {
            let traces: Vec<Trace> = flags
                .iter()
                .enumerate()
                .map(|(i, &lossy)| Trace { lossy, ..Trace::new(format!("t{i}"), vec![1.0]) })
                .collect();
            let once = filter_complete(traces);
            let twice = filter_complete(once.clone());
            proptest::prop_assert_eq!(once, twice);
        }
    }
}
