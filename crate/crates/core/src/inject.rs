//! Synthetic injection of the four link-layer anomaly shapes.
//!
//! Sample positions in this module are 1-based: position `x` addresses
//! `values[x - 1]`, and a start of 200 means the 200th sample.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kv;
use crate::seed;
use crate::traces::{LabeledDataset, Provenance, Trace, DEFAULT_TRACE_LENGTH};

/// Label of a trace. Class indices follow [`AnomalyKind::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum AnomalyKind {
    /// Sudden degradation without recovery.
    SuddenD,
    /// Sudden degradation with recovery.
    SuddenR,
    /// Instantaneous single-sample drops.
    InstaD,
    /// Slow, gradual degradation.
    SlowD,
    /// No anomaly; the majority class. Written as `None` in files.
    #[default]
    NoAnomaly,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 5] = [
        AnomalyKind::SuddenD,
        AnomalyKind::SuddenR,
        AnomalyKind::InstaD,
        AnomalyKind::SlowD,
        AnomalyKind::NoAnomaly,
    ];

    pub const ANOMALIES: [AnomalyKind; 4] = [
        AnomalyKind::SuddenD,
        AnomalyKind::SuddenR,
        AnomalyKind::InstaD,
        AnomalyKind::SlowD,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_anomaly(self) -> bool {
        self != AnomalyKind::NoAnomaly
    }

    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::SuddenD => "SuddenD",
            AnomalyKind::SuddenR => "SuddenR",
            AnomalyKind::InstaD => "InstaD",
            AnomalyKind::SlowD => "SlowD",
            AnomalyKind::NoAnomaly => "None",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnomalyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param("inject", format!("unknown anomaly kind `{s}`")))
    }
}

/// Inclusive integer interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntRange {
    pub lo: usize,
    pub hi: usize,
}

impl IntRange {
    pub const fn new(lo: usize, hi: usize) -> Self {
        IntRange { lo, hi }
    }

    pub fn contains(&self, v: usize) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn scaled(self, factor: f64) -> Self {
        let s = |v: usize| ((v as f64 * factor).round() as usize).max(1);
        IntRange::new(s(self.lo), s(self.hi))
    }
}

impl fmt::Display for IntRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

impl FromStr for IntRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = split_interval(s)?;
        let p = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::param("inject", format!("bad interval bound `{v}`")))
        };
        Ok(IntRange::new(p(lo)?, p(hi)?))
    }
}

/// Inclusive real interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealRange {
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Display for RealRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

impl FromStr for RealRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = split_interval(s)?;
        let p = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::param("inject", format!("bad interval bound `{v}`")))
        };
        Ok(RealRange { lo: p(lo)?, hi: p(hi)? })
    }
}

fn split_interval(s: &str) -> Result<(&str, &str)> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split_once(',')
        .map(|(a, b)| (a.trim(), b.trim()))
        .ok_or_else(|| Error::param("inject", format!("expected `[lo,hi]`, got `{s}`")))
}

/// Parameter ranges for synthetic injection. Defaults describe 300-sample
/// traces; [`InjectionPlan::scaled_to`] adapts them to other lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionPlan {
    pub affected_fraction: f64,
    pub suddend_start: IntRange,
    pub suddenr_start: IntRange,
    pub suddenr_duration: IntRange,
    /// Fraction of the trace length hit by InstaD, one sample per hit.
    pub instad_rate: f64,
    pub slowd_start: IntRange,
    pub slowd_duration: IntRange,
    pub slowd_slope: RealRange,
    pub floor: f64,
    pub seed: u64,
}

impl Default for InjectionPlan {
    fn default() -> Self {
        InjectionPlan {
            affected_fraction: 0.33,
            suddend_start: IntRange::new(200, 280),
            suddenr_start: IntRange::new(25, 275),
            suddenr_duration: IntRange::new(5, 20),
            instad_rate: 0.01,
            slowd_start: IntRange::new(1, 20),
            slowd_duration: IntRange::new(150, 180),
            slowd_slope: RealRange { lo: 0.5, hi: 1.5 },
            floor: 0.0,
            seed: 0,
        }
    }
}

impl InjectionPlan {
    /// Default plan with every position and duration range multiplied by
    /// `length / 300` and rounded (minimum 1). Rates and slopes are kept.
    pub fn scaled_to(length: usize) -> Self {
        let f = length as f64 / DEFAULT_TRACE_LENGTH as f64;
        let d = InjectionPlan::default();
        InjectionPlan {
            suddend_start: d.suddend_start.scaled(f),
            suddenr_start: d.suddenr_start.scaled(f),
            suddenr_duration: d.suddenr_duration.scaled(f),
            slowd_start: d.slowd_start.scaled(f),
            slowd_duration: d.slowd_duration.scaled(f),
            ..d
        }
    }

    /// Number of InstaD positions for a trace of `length` samples.
    pub fn instad_count(&self, length: usize) -> usize {
        ((self.instad_rate * length as f64).round() as usize).clamp(1, length)
    }

    /// Traces injected per corpus copy, and whether the minimum of one had to
    /// be enforced.
    pub fn affected_count(&self, base: usize) -> (usize, bool) {
        let raw = (self.affected_fraction * base as f64 + 1e-9).floor() as usize;
        if raw == 0 {
            (1.min(base), true)
        } else {
            (raw.min(base), false)
        }
    }

    pub fn validate(&self, length: usize) -> Result<()> {
        let err = |m: String| Err(Error::param("inject", m));
        if !(self.affected_fraction > 0.0 && self.affected_fraction <= 1.0) {
            return err(format!("affected_fraction {} not in (0,1]", self.affected_fraction));
        }
        for (name, r) in [
            ("suddend_start", self.suddend_start),
            ("suddenr_start", self.suddenr_start),
            ("suddenr_duration", self.suddenr_duration),
            ("slowd_start", self.slowd_start),
            ("slowd_duration", self.slowd_duration),
        ] {
            if r.lo < 1 || r.lo > r.hi || r.hi > length {
                return err(format!("{name} {r} not within [1,{length}]"));
            }
        }
        if self.suddenr_start.hi + self.suddenr_duration.hi - 1 > length {
            return err(format!(
                "suddenr window {} + {} overruns trace length {length}",
                self.suddenr_start, self.suddenr_duration
            ));
        }
        if !(self.instad_rate > 0.0 && self.instad_rate <= 1.0) {
            return err(format!("instad_rate {} not in (0,1]", self.instad_rate));
        }
        let s = self.slowd_slope;
        if !(s.lo.is_finite() && s.hi.is_finite() && 0.0 <= s.lo && s.lo <= s.hi) {
            return err(format!("slowd_slope {s} invalid"));
        }
        if !self.floor.is_finite() {
            return err("floor must be finite".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "affected_fraction = {}\nsuddend_start = {}\nsuddenr_start = {}\nsuddenr_duration = {}\n\
             instad_rate = {}\nslowd_start = {}\nslowd_duration = {}\nslowd_slope = {}\nfloor = {}\nseed = {}\n",
            self.affected_fraction,
            self.suddend_start,
            self.suddenr_start,
            self.suddenr_duration,
            self.instad_rate,
            self.slowd_start,
            self.slowd_duration,
            self.slowd_slope,
            self.floor,
            self.seed
        )
    }

    /// Reads a plan from key-value text. Missing keys keep their value in
    /// `base`; unknown keys are rejected.
    pub fn from_kv(text: &str, base: InjectionPlan) -> Result<Self> {
        let map = kv::parse(text)?;
        let mut p = base;
        for key in map.keys() {
            let known = [
                "affected_fraction",
                "suddend_start",
                "suddenr_start",
                "suddenr_duration",
                "instad_rate",
                "slowd_start",
                "slowd_duration",
                "slowd_slope",
                "floor",
                "seed",
            ];
            if !known.contains(&key.as_str()) {
                return Err(Error::param("inject", format!("unknown plan key `{key}`")));
            }
        }
        macro_rules! take {
            ($($f:ident),*) => {
                $(if let Some(v) = kv::field(&map, stringify!($f), "inject")? { p.$f = v; })*
            };
        }
        take!(
            affected_fraction,
            suddend_start,
            suddenr_start,
            suddenr_duration,
            instad_rate,
            slowd_start,
            slowd_duration,
            slowd_slope,
            floor,
            seed
        );
        Ok(p)
    }
}

fn check_position(name: &str, x: usize, len: usize) -> Result<()> {
    if x < 1 || x > len {
        return Err(Error::param("inject", format!("{name} {x} outside [1,{len}]")));
    }
    Ok(())
}

/// Drops every sample from `start` on to `floor`.
pub fn inject_sudden_d(trace: &Trace, start: usize, floor: f64) -> Result<Trace> {
    check_position("start", start, trace.len())?;
    let mut out = trace.clone();
    for v in &mut out.values[start - 1..] {
        *v = v.min(floor);
    }
    out.label = AnomalyKind::SuddenD;
    Ok(out)
}

/// Drops `duration` samples beginning at `start` to `floor`, then recovers.
pub fn inject_sudden_r(trace: &Trace, start: usize, duration: usize, floor: f64) -> Result<Trace> {
    let n = trace.len();
    check_position("start", start, n)?;
    if duration < 1 || start + duration - 1 > n {
        return Err(Error::param(
            "inject",
            format!("window start={start} duration={duration} exceeds trace length {n}"),
        ));
    }
    let mut out = trace.clone();
    for v in &mut out.values[start - 1..start - 1 + duration] {
        *v = v.min(floor);
    }
    out.label = AnomalyKind::SuddenR;
    Ok(out)
}

/// Drops each listed sample to `floor`.
pub fn inject_insta_d(trace: &Trace, positions: &[usize], floor: f64) -> Result<Trace> {
    let n = trace.len();
    let mut seen = vec![false; n];
    for &p in positions {
        check_position("position", p, n)?;
        if std::mem::replace(&mut seen[p - 1], true) {
            return Err(Error::param("inject", format!("duplicate position {p}")));
        }
    }
    let mut out = trace.clone();
    for &p in positions {
        out.values[p - 1] = out.values[p - 1].min(floor);
    }
    out.label = AnomalyKind::InstaD;
    Ok(out)
}

/// Linear ramp-down: inside the window, sample `x` is lowered by
/// `slope * (x - start)`; after the window the final offset is held. Results
/// are clamped at `floor`.
pub fn inject_slow_d(trace: &Trace, start: usize, duration: usize, slope: f64, floor: f64) -> Result<Trace> {
    let n = trace.len();
    check_position("start", start, n)?;
    if duration < 1 {
        return Err(Error::param("inject", "duration must be at least 1"));
    }
    if !(slope.is_finite() && slope >= 0.0) {
        return Err(Error::param("inject", format!("slope {slope} must be finite and >= 0")));
    }
    let mut out = trace.clone();
    let end = start + duration - 1;
    for x in start..=n {
        let offset = f64::min(0.0, -slope * (x.min(end) - start) as f64);
        let v = &mut out.values[x - 1];
        *v = f64::max(*v + offset, floor).min(*v);
    }
    out.label = AnomalyKind::SlowD;
    Ok(out)
}

/// Injects `kind` into `trace` with parameters drawn uniformly from `plan`.
pub fn inject_random<R: Rng>(trace: &Trace, kind: AnomalyKind, plan: &InjectionPlan, rng: &mut R) -> Result<Trace> {
    let n = trace.len();
    let floor = plan.floor;
    match kind {
        AnomalyKind::SuddenD => {
            let r = plan.suddend_start;
            inject_sudden_d(trace, rng.random_range(r.lo..=r.hi.min(n)), floor)
        }
        AnomalyKind::SuddenR => {
            let d = plan.suddenr_duration;
            let duration = rng.random_range(d.lo..=d.hi);
            let s = plan.suddenr_start;
            let hi = s.hi.min(n + 1 - duration).max(s.lo);
            inject_sudden_r(trace, rng.random_range(s.lo..=hi), duration, floor)
        }
        AnomalyKind::InstaD => {
            let candidates: Vec<usize> = (1..=n).filter(|&x| trace.values[x - 1] > floor).collect();
            let want = plan.instad_count(n).min(candidates.len());
            let mut positions: Vec<usize> = index::sample(rng, candidates.len(), want)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            positions.sort_unstable();
            inject_insta_d(trace, &positions, floor)
        }
        AnomalyKind::SlowD => {
            let s = plan.slowd_start;
            let d = plan.slowd_duration;
            let start = rng.random_range(s.lo..=s.hi);
            let duration = rng.random_range(d.lo..=d.hi);
            let slope = if plan.slowd_slope.hi > plan.slowd_slope.lo {
                rng.random_range(plan.slowd_slope.lo..=plan.slowd_slope.hi)
            } else {
                plan.slowd_slope.lo
            };
            inject_slow_d(trace, start, duration, slope, floor)
        }
        AnomalyKind::NoAnomaly => Ok(trace.clone()),
    }
}

/// Builds the labeled dataset: one copy of `base` per anomaly kind, with the
/// kind injected into a seeded random `affected_fraction` of that copy's
/// traces. Copies are concatenated in [`AnomalyKind::ANOMALIES`] order.
pub fn build_labeled_dataset(base: &[Trace], plan: &InjectionPlan) -> Result<LabeledDataset> {
    let first = base
        .first()
        .ok_or_else(|| Error::param("inject", "base corpus is empty"))?;
    let length = first.len();
    plan.validate(length)?;
    let (affected, clamped) = plan.affected_count(base.len());
    if clamped {
        log::warn!(
            "base of {} traces is smaller than 1/{}; injecting one trace per copy",
            base.len(),
            plan.affected_fraction
        );
    }

    let mut traces = Vec::with_capacity(base.len() * AnomalyKind::ANOMALIES.len());
    for kind in AnomalyKind::ANOMALIES {
        let tag = kind.name().to_ascii_lowercase();
        let mut select = seed::rng_for(plan.seed, &format!("select-{tag}"));
        let mut hit = vec![false; base.len()];
        for i in index::sample(&mut select, base.len(), affected) {
            hit[i] = true;
        }
        for (i, t) in base.iter().enumerate() {
            let mut out = if hit[i] {
                let mut rng = seed::rng_indexed(plan.seed, &format!("params-{tag}"), i as u64);
                inject_random(t, kind, plan, &mut rng)?
            } else {
                Trace {
                    label: AnomalyKind::NoAnomaly,
                    ..t.clone()
                }
            };
            out.id = format!("{}.{}", t.id, tag);
            traces.push(out);
        }
    }
    LabeledDataset::new(
        traces,
        length,
        plan.seed,
        Provenance::Injected {
            base_count: base.len(),
            plan: plan.clone(),
        },
    )
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::traces::generate_synthetic_normal;

    fn constant(n: usize, v: f64) -> Trace {
        Trace::new("c", vec![v; n])
    }

    #[test]
    fn sudden_d_floors_tail() {
        let t = inject_sudden_d(&constant(300, 40.0), 200, 0.0).unwrap();
        assert!(t.values[..199].iter().all(|&v| v == 40.0));
        assert!(t.values[199..].iter().all(|&v| v == 0.0));
        assert_eq!(t.label, AnomalyKind::SuddenD);

        let last = inject_sudden_d(&constant(300, 40.0), 300, 0.0).unwrap();
        assert_eq!(last.values.iter().filter(|&&v| v == 0.0).count(), 1);
        assert_eq!(last.values[299], 0.0);

        assert!(inject_sudden_d(&constant(300, 40.0), 0, 0.0).is_err());
        assert!(inject_sudden_d(&constant(300, 40.0), 301, 0.0).is_err());
    }

    #[test]
    fn sudden_r_window() {
        let t = inject_sudden_r(&constant(300, 40.0), 100, 5, 0.0).unwrap();
        let floored: Vec<usize> = (1..=300).filter(|&x| t.values[x - 1] == 0.0).collect();
        assert_eq!(floored, vec![100, 101, 102, 103, 104]);

        let r = inject_sudden_r(&constant(300, 40.0), 25, 5, 0.0).unwrap();
        assert_eq!(r.values[28], 0.0);
        assert_eq!(r.values[29], 40.0);

        assert!(inject_sudden_r(&constant(300, 40.0), 290, 20, 0.0).is_err());
    }

    #[test]
    fn insta_d_positions() {
        let plan = InjectionPlan::default();
        assert_eq!(plan.instad_count(300), 3);
        assert_eq!(plan.instad_count(100), 1);
        assert_eq!(plan.instad_count(64), 1);

        let t = inject_insta_d(&constant(300, 40.0), &[3, 150, 299], 0.0).unwrap();
        assert_eq!(t.values.iter().filter(|&&v| v == 0.0).count(), 3);
        assert!(inject_insta_d(&constant(10, 40.0), &[2, 2], 0.0).is_err());
        assert!(inject_insta_d(&constant(10, 40.0), &[11], 0.0).is_err());
    }

    #[test]
    fn slow_d_formula() {
        let t = inject_slow_d(&constant(300, 40.0), 10, 150, 1.0, 0.0).unwrap();
        assert_eq!(t.values[20 - 1], 30.0);
        assert_eq!(t.values[50 - 1], 0.0);
        assert_eq!(t.values[10 - 1], 40.0);
        assert_eq!(t.values[9 - 1], 40.0);

        let h = inject_slow_d(&constant(300, 60.0), 1, 21, 0.5, 0.0).unwrap();
        assert_eq!(h.values[21 - 1], 50.0);
        // offset held after the window
        assert_eq!(h.values[299], 50.0);
        assert!(inject_slow_d(&constant(300, 40.0), 1, 150, -1.0, 0.0).is_err());
    }

    #[test]
    fn full_scale_counts() {
        let plan = InjectionPlan::default();
        assert_eq!(plan.affected_count(2123), (700, false));
        let base = vec![constant(300, 40.0); 2123];
        let ds = build_labeled_dataset(&base, &plan).unwrap();
        assert_eq!(ds.len(), 8492);
        assert_eq!(ds.class_counts(), [700, 700, 700, 700, 5692]);
    }

    #[test]
    fn small_scale_counts_and_determinism() {
        let base = generate_synthetic_normal(10, 300, 40.0, 3.0, 1).unwrap().traces;
        let plan = InjectionPlan {
            affected_fraction: 0.5,
            seed: 17,
            ..InjectionPlan::default()
        };
        let a = build_labeled_dataset(&base, &plan).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(a.class_counts(), [5, 5, 5, 5, 20]);
        let b = build_labeled_dataset(&base, &plan).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_base_still_injects_one() {
        let base = vec![constant(300, 40.0); 2];
        let ds = build_labeled_dataset(&base, &InjectionPlan::default()).unwrap();
        assert_eq!(ds.class_counts(), [1, 1, 1, 1, 4]);
    }

    #[test]
    fn scaled_plan_for_64_samples() {
        let p = InjectionPlan::scaled_to(64);
        assert_eq!(p.suddend_start, IntRange::new(43, 60));
        assert_eq!(p.suddenr_start, IntRange::new(5, 59));
        assert_eq!(p.suddenr_duration, IntRange::new(1, 4));
        assert_eq!(p.slowd_start, IntRange::new(1, 4));
        assert_eq!(p.slowd_duration, IntRange::new(32, 38));
        p.validate(64).unwrap();
        InjectionPlan::default().validate(300).unwrap();
    }

    #[test]
    fn plan_kv_round_trip() {
        let p = InjectionPlan {
            seed: 99,
            affected_fraction: 0.1,
            ..InjectionPlan::scaled_to(64)
        };
        let back = InjectionPlan::from_kv(&p.to_kv(), InjectionPlan::default()).unwrap();
        assert_eq!(back, p);
        assert!(InjectionPlan::from_kv("bogus = 1\n", InjectionPlan::default()).is_err());
    }

    fn trace_strategy() -> impl Strategy<Value = Trace> {
        prop::collection::vec(0u8..=127, 300).prop_map(|v| Trace::new("r", v.into_iter().map(f64::from).collect()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sudden_d_floor_count(t in trace_strategy(), start in 1usize..=300) {
            let out = inject_sudden_d(&t, start, 0.0).unwrap();
            // brute-force recount
            let mut floored = 0;
            for v in &out.values { if *v == 0.0 { floored += 1; } }
            prop_assert!(floored >= 300 - start + 1);
        }

        #[test]
        fn sudden_r_only_touches_window(t in trace_strategy(), start in 25usize..=275, dur in 5usize..=20) {
            let out = inject_sudden_r(&t, start, dur, 0.0).unwrap();
            for x in 1..=300 {
                if x < start || x >= start + dur {
                    prop_assert_eq!(out.values[x - 1], t.values[x - 1]);
                } else {
                    prop_assert_eq!(out.values[x - 1], 0.0);
                }
            }
        }

        #[test]
        fn insta_d_diff_count(v in prop::collection::vec(1u8..=127, 300), seed in any::<u64>()) {
            let t = Trace::new("r", v.into_iter().map(f64::from).collect());
            let plan = InjectionPlan::default();
            let mut rng = seed::rng_for(seed, "t");
            let out = inject_random(&t, AnomalyKind::InstaD, &plan, &mut rng).unwrap();
            let diff = out.values.iter().zip(&t.values).filter(|(a, b)| a != b).count();
            prop_assert_eq!(diff, 3);
        }

        #[test]
        fn injection_never_raises(t in trace_strategy(), kind in 0usize..4, seed in any::<u64>()) {
            let plan = InjectionPlan::default();
            let kind = AnomalyKind::ANOMALIES[kind];
            let mut rng = seed::rng_for(seed, "t");
            let out = inject_random(&t, kind, &plan, &mut rng).unwrap();
            prop_assert_eq!(out.label, kind);
            for (a, b) in out.values.iter().zip(&t.values) {
                prop_assert!(a <= b);
                prop_assert!(*a >= plan.floor && *a <= 127.0);
            }
            if kind == AnomalyKind::SuddenD {
                // the latest possible start is 280, and nothing recovers after it
                prop_assert!(out.values[279..].iter().all(|&v| v == plan.floor));
            }
        }

        #[test]
        fn dataset_counts_match_fraction(n in 4usize..60, frac in 0.05f64..=1.0, seed in any::<u64>()) {
            let base: Vec<Trace> = (0..n).map(|i| Trace::new(format!("b{i}"), vec![40.0; 300])).collect();
            let plan = InjectionPlan { affected_fraction: frac, seed, ..InjectionPlan::default() };
            let ds = build_labeled_dataset(&base, &plan).unwrap();
            let expected = ((frac * n as f64 + 1e-9).floor() as usize).max(1);
            let counts = ds.class_counts();
            for k in 0..4 { prop_assert_eq!(counts[k], expected); }
            prop_assert_eq!(counts[4], 4 * n - 4 * expected);
        }
    }
}
