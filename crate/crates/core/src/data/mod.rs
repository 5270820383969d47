//! Power traces, channel parsing, grid alignment, normalization, windowing,
//! the train/test split and synthetic households.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

mod synth;

pub use synth::{synth_household, DutyCycle, SynthAppliance, SynthConfig, DISJOINT_CYCLE};

/// Seconds between samples in UK-DALE style channels.
pub const DEFAULT_PERIOD: u32 = 6;

/// Uniformly sampled power series in watts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PowerTrace {
    pub start_time: i64,
    pub period: u32,
    pub values: Vec<f64>,
}

impl PowerTrace {
    pub fn new(start_time: i64, period: u32, values: Vec<f64>) -> Result<Self> {
        if period == 0 {
            return Err(Error::Argument("trace period must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Argument(format!(
                "trace value {} at index {i} is not a finite non-negative wattage",
                values[i]
            )));
        }
        Ok(PowerTrace {
            start_time,
            period,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> i64 {
        self.start_time + index as i64 * self.period as i64
    }

    /// Sub-trace over `[from, to)` sample indices, with its start time moved.
    pub fn slice(&self, from: usize, to: usize) -> PowerTrace {
        PowerTrace {
            start_time: self.timestamp(from),
            period: self.period,
            values: self.values[from..to].to_vec(),
        }
    }

    pub fn same_timebase(&self, other: &PowerTrace) -> bool {
        self.start_time == other.start_time && self.period == other.period && self.len() == other.len()
    }
}

/// A channel as read from disk: timestamped samples, possibly with gaps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTrace {
    pub samples: Vec<(i64, f64)>,
}

/// Parse a UK-DALE style channel: one `unix_ts watts` pair per line.
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_channel(text: &str) -> Result<RawTrace> {
    let mut samples: Vec<(i64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (ts, watts) = match (fields.next(), fields.next(), fields.next()) {
            (Some(ts), Some(w), None) => (ts, w),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected `timestamp watts`, got `{line}`"),
                })
            }
        };
        let ts: i64 = ts.parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("bad timestamp `{ts}`"),
        })?;
        let watts: f64 = watts.parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("bad power value `{watts}`"),
        })?;
        if !watts.is_finite() || watts < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("power value {watts} is not a finite non-negative number"),
            });
        }
        if let Some(&(prev, _)) = samples.last() {
            if ts < prev {
                return Err(Error::Order { line: line_no, ts, prev });
            }
        }
        samples.push((ts, watts));
    }
    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(RawTrace { samples })
}

/// Parse a labels file: `channel_number name` per line.
pub fn parse_labels(text: &str) -> Result<Vec<(u32, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Parse {
            line: i + 1,
            reason: format!("expected `channel name`, got `{line}`"),
        };
        let mut fields = line.split_whitespace();
        let n: u32 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let name = fields.next().ok_or_else(bad)?;
        if fields.next().is_some() {
            return Err(bad());
        }
        out.push((n, name.to_string()));
    }
    Ok(out)
}

/// How raw channels are snapped onto the sample grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AlignPolicy {
    pub period: u32,
    /// Gaps up to this many seconds are forward-filled; longer gaps read as zero.
    pub max_fill_seconds: i64,
}

impl Default for AlignPolicy {
    fn default() -> Self {
        AlignPolicy {
            period: DEFAULT_PERIOD,
            max_fill_seconds: 180,
        }
    }
}

/// Aggregate channel plus named appliance channels for one client.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HouseholdDataset {
    pub household_id: String,
    pub aggregate: PowerTrace,
    pub appliances: BTreeMap<String, PowerTrace>,
}

impl HouseholdDataset {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in &self.appliances {
            if !t.same_timebase(&self.aggregate) {
                return Err(Error::Alignment(format!(
                    "appliance `{name}` does not share the aggregate timebase"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.aggregate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aggregate.is_empty()
    }

    pub fn appliance(&self, name: &str) -> Result<&PowerTrace> {
        self.appliances.get(name).ok_or_else(|| Error::Key(name.to_string()))
    }

    pub fn slice(&self, from: usize, to: usize) -> HouseholdDataset {
        HouseholdDataset {
            household_id: self.household_id.clone(),
            aggregate: self.aggregate.slice(from, to),
            appliances: self
                .appliances
                .iter()
                .map(|(k, v)| (k.clone(), v.slice(from, to)))
                .collect(),
        }
    }
}

/// Elementwise sum of equally long traces, accumulated in the given order.
pub(crate) fn sum_values<'a>(len: usize, traces: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut total = alloc::vec![0.0; len];
    for t in traces {
        for (a, v) in total.iter_mut().zip(t) {
            *a += v;
        }
    }
    total
}

fn snap_channel(raw: &RawTrace, t0: i64, n: usize, policy: &AlignPolicy) -> Vec<f64> {
    let period = policy.period as i64;
    let s = &raw.samples;
    let mut out = Vec::with_capacity(n);
    let mut j = 0usize;
    for k in 0..n {
        let g = t0 + k as i64 * period;
        // latest sample at or before the slot's upper half-boundary
        while j + 1 < s.len() && 2 * s[j + 1].0 <= 2 * g + period {
            j += 1;
        }
        let (ts, v) = s[j];
        let value = if 2 * ts > 2 * g - period && 2 * ts <= 2 * g + period {
            v
        } else if ts > g {
            0.0
        } else if j + 1 < s.len() && s[j + 1].0 - ts <= policy.max_fill_seconds {
            v
        } else {
            0.0
        };
        out.push(value);
    }
    out
}

/// Snap channels onto a common grid over their overlapping time range.
/// Without a mains channel the aggregate is the sum of the appliances.
pub fn align_and_fill(
    household_id: &str,
    aggregate: Option<&RawTrace>,
    appliances: &[(String, RawTrace)],
    policy: &AlignPolicy,
) -> Result<HouseholdDataset> {
    if policy.period == 0 {
        return Err(Error::Argument("alignment period must be positive".into()));
    }
    let all: Vec<&RawTrace> = aggregate.into_iter().chain(appliances.iter().map(|(_, r)| r)).collect();
    if all.is_empty() {
        return Err(Error::Argument("no channels to align".into()));
    }
    if all.iter().any(|r| r.samples.is_empty()) {
        return Err(Error::EmptyTrace);
    }
    let start = all.iter().map(|r| r.samples[0].0).max().unwrap();
    let end = all.iter().map(|r| r.samples.last().unwrap().0).min().unwrap();
    let period = policy.period as i64;
    let t0 = start.div_euclid(period) * period + if start.rem_euclid(period) == 0 { 0 } else { period };
    if start > end || t0 > end {
        return Err(Error::Alignment(format!(
            "channels do not overlap on the {}-second grid (overlap {start}..{end})",
            policy.period
        )));
    }
    let n = ((end - t0) / period + 1) as usize;

    let mut apps = BTreeMap::new();
    for (name, raw) in appliances {
        let values = snap_channel(raw, t0, n, policy);
        if apps
            .insert(name.clone(), PowerTrace::new(t0, policy.period, values)?)
            .is_some()
        {
            return Err(Error::Key(format!("duplicate appliance `{name}`")));
        }
    }
    let aggregate = match aggregate {
        Some(raw) => PowerTrace::new(t0, policy.period, snap_channel(raw, t0, n, policy))?,
        None => PowerTrace::new(
            t0,
            policy.period,
            sum_values(n, apps.values().map(|t: &PowerTrace| t.values.as_slice())),
        )?,
    };
    Ok(HouseholdDataset {
        household_id: household_id.to_string(),
        aggregate,
        appliances: apps,
    })
}

/// Min-max statistics of a channel's training split.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MinMaxStats {
    pub min: f64,
    pub max: f64,
}

impl MinMaxStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("min-max statistics of an empty series".into()));
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(MinMaxStats { min, max })
    }

    /// Constant channels map to zero.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        if self.max > self.min {
            y * (self.max - self.min) + self.min
        } else {
            self.min
        }
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

pub fn minmax_normalize(values: &[f64], stats: &MinMaxStats) -> Vec<f64> {
    values.iter().map(|&x| stats.normalize(x)).collect()
}

pub fn denormalize(values: &[f64], stats: &MinMaxStats) -> Vec<f64> {
    values.iter().map(|&y| stats.denormalize(y)).collect()
}

/// One supervised example: an input window and the value to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: Vec<f64>,
    pub target: f64,
}

/// Number of windows [`make_windows`] yields; `None` when the series is too short.
pub fn window_count(len: usize, window: usize, horizon: usize) -> Option<usize> {
    (len + 1).checked_sub(window + horizon).filter(|&c| c > 0)
}

/// Stride-1 sliding windows; the target sits `horizon` steps after the
/// window's last element.
pub fn make_windows(values: &[f64], window: usize, horizon: usize) -> Result<Vec<Sample>> {
    if window == 0 {
        return Err(Error::Argument("window length must be positive".into()));
    }
    let count = window_count(values.len(), window, horizon).ok_or_else(|| {
        Error::shape(
            "make_windows",
            format!(
                "series of length {} is shorter than window {window} + horizon {horizon}",
                values.len()
            ),
        )
    })?;
    Ok((0..count)
        .map(|i| Sample {
            window: values[i..i + window].to_vec(),
            target: values[i + window - 1 + horizon],
        })
        .collect())
}

/// Contiguous train/test split in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SplitSpec {
    pub train_minutes: u32,
    pub test_minutes: u32,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::UKDALE_3_DAYS
    }
}

impl SplitSpec {
    /// 4070 training minutes followed by 250 test minutes.
    pub const UKDALE_3_DAYS: SplitSpec = SplitSpec {
        train_minutes: 4070,
        test_minutes: 250,
    };

    /// `(train, test)` sample counts on a grid with the given period.
    pub fn sample_counts(&self, period: u32) -> Result<(usize, usize)> {
        if self.train_minutes == 0 || self.test_minutes == 0 {
            return Err(Error::Argument("split minutes must be positive".into()));
        }
        if period == 0 || 60 % period != 0 {
            return Err(Error::Argument(format!(
                "a {period}-second period does not divide a minute"
            )));
        }
        let per_minute = (60 / period) as usize;
        Ok((
            self.train_minutes as usize * per_minute,
            self.test_minutes as usize * per_minute,
        ))
    }
}

pub fn split_train_test(
    dataset: &HouseholdDataset,
    spec: &SplitSpec,
) -> Result<(HouseholdDataset, HouseholdDataset)> {
    let (train, test) = spec.sample_counts(dataset.aggregate.period)?;
    if train + test > dataset.len() {
        return Err(Error::Argument(format!(
            "split needs {} samples but household `{}` has {}",
            train + test,
            dataset.household_id,
            dataset.len()
        )));
    }
    Ok((dataset.slice(0, train), dataset.slice(train, train + test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn raw(samples: &[(i64, f64)]) -> RawTrace {
        RawTrace {
            samples: samples.to_vec(),
        }
    }

    #[test]
    fn parse_channel_cases() {
        let r = parse_channel("0 100.0\n6 101.0").unwrap();
        assert_eq!(r.samples, vec![(0, 100.0), (6, 101.0)]);
        assert_eq!(parse_channel(""), Err(Error::EmptyTrace));
        assert_eq!(parse_channel("\n\n"), Err(Error::EmptyTrace));
        assert!(matches!(parse_channel("abc"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_channel("0 1\n6 2\n12 x"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_channel("0 1\n6 2 3"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_channel("0 -5"), Err(Error::Parse { line: 1, .. })));
        assert_eq!(
            parse_channel("10 1\n4 2"),
            Err(Error::Order {
                line: 2,
                ts: 4,
                prev: 10
            })
        );
    }

    #[test]
    fn parse_labels_cases() {
        let l = parse_labels("1 aggregate\n2 kettle\n\n3 fridge\n").unwrap();
        assert_eq!(l, vec![(1, "aggregate".into()), (2, "kettle".into()), (3, "fridge".into())]);
        assert!(matches!(parse_labels("x kettle"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn aligned_traces_unchanged() {
        let a = raw(&[(0, 1.0), (6, 2.0), (12, 3.0)]);
        let b = raw(&[(0, 10.0), (6, 20.0), (12, 30.0)]);
        let ds = align_and_fill(
            "h",
            Some(&a),
            &[("b".into(), b)],
            &AlignPolicy::default(),
        )
        .unwrap();
        assert_eq!(ds.aggregate.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(ds.appliance("b").unwrap().values, vec![10.0, 20.0, 30.0]);
        assert_eq!(ds.aggregate.start_time, 0);
        ds.validate().unwrap();
    }

    #[test]
    fn short_gap_forward_filled() {
        let a = raw(&[(0, 1.0), (6, 2.0), (18, 4.0), (24, 5.0)]);
        let ds = align_and_fill("h", None, &[("a".into(), a)], &AlignPolicy::default()).unwrap();
        assert_eq!(ds.appliance("a").unwrap().values, vec![1.0, 2.0, 2.0, 4.0, 5.0]);
        assert_eq!(ds.aggregate.values, vec![1.0, 2.0, 2.0, 4.0, 5.0]);
    }

    #[test]
    fn long_gap_zero_filled() {
        let mut s = vec![(0, 7.0), (6, 7.0)];
        s.push((606, 9.0));
        s.push((612, 9.0));
        let ds = align_and_fill("h", None, &[("a".into(), raw(&s))], &AlignPolicy::default()).unwrap();
        let v = &ds.appliance("a").unwrap().values;
        assert_eq!(v.len(), 103);
        assert_eq!(v[0], 7.0);
        assert_eq!(v[1], 7.0);
        assert!(v[2..101].iter().all(|&x| x == 0.0));
        assert_eq!(v[101], 9.0);
        assert_eq!(v[102], 9.0);
    }

    #[test]
    fn jittered_timestamps_snap_to_grid() {
        let a = raw(&[(1, 1.0), (7, 2.0), (14, 3.0), (19, 4.0)]);
        let b = raw(&[(0, 5.0), (6, 6.0), (12, 7.0), (18, 8.0), (24, 9.0)]);
        let ds = align_and_fill("h", None, &[("a".into(), a), ("b".into(), b)], &AlignPolicy::default()).unwrap();
        // overlap 1..19, grid starts at 6
        assert_eq!(ds.aggregate.start_time, 6);
        assert_eq!(ds.appliance("a").unwrap().values, vec![2.0, 3.0, 4.0]);
        assert_eq!(ds.appliance("b").unwrap().values, vec![6.0, 7.0, 8.0]);
    }

    #[test]
    fn no_overlap_is_alignment_error() {
        let a = raw(&[(0, 1.0), (6, 1.0)]);
        let b = raw(&[(100, 1.0), (106, 1.0)]);
        assert!(matches!(
            align_and_fill("h", None, &[("a".into(), a), ("b".into(), b)], &AlignPolicy::default()),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn minmax_cases() {
        let s = MinMaxStats { min: 0.0, max: 200.0 };
        assert_eq!(s.normalize(100.0), 0.5);
        let c = MinMaxStats::from_values(&[3.0, 3.0]).unwrap();
        assert_eq!(minmax_normalize(&[3.0, 3.0], &c), vec![0.0, 0.0]);
        assert_eq!(denormalize(&[0.0, 0.0], &c), vec![3.0, 3.0]);
    }

    #[test]
    fn windows_small_cases() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        let w = make_windows(&v, 3, 1).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0], Sample { window: vec![0.0, 1.0, 2.0], target: 3.0 });
        assert_eq!(make_windows(&v[..4], 3, 1).unwrap().len(), 1);
        assert!(matches!(make_windows(&v[..3], 3, 1), Err(Error::Shape { .. })));
    }

    #[test]
    fn window_count_matches_enumeration() {
        for len in 0..=10usize {
            for w in 1..=5usize {
                for h in 0..=3usize {
                    let values: Vec<f64> = (0..len).map(|i| i as f64).collect();
                    let mut brute = Vec::new();
                    for start in 0..len {
                        let t = start + w - 1 + h;
                        if t < len {
                            brute.push((start, t));
                        }
                    }
                    match make_windows(&values, w, h) {
                        Ok(samples) => {
                            assert_eq!(samples.len(), brute.len());
                            for (s, (start, t)) in samples.iter().zip(&brute) {
                                assert_eq!(s.window[0], *start as f64);
                                assert_eq!(s.target, *t as f64);
                            }
                        }
                        Err(_) => assert!(brute.is_empty()),
                    }
                }
            }
        }
    }

    fn flat_dataset(n: usize) -> HouseholdDataset {
        let agg = PowerTrace::new(1000, 6, (0..n).map(|i| i as f64).collect()).unwrap();
        let mut apps = BTreeMap::new();
        apps.insert("x".to_string(), agg.clone());
        HouseholdDataset {
            household_id: "h".into(),
            aggregate: agg,
            appliances: apps,
        }
    }

    #[test]
    fn three_day_split_sizes() {
        let ds = flat_dataset(4320 * 10);
        let (train, test) = split_train_test(&ds, &SplitSpec::UKDALE_3_DAYS).unwrap();
        assert_eq!(train.len(), 40700);
        assert_eq!(test.len(), 2500);
        assert_eq!(test.aggregate.start_time, 1000 + 40700 * 6);
    }

    #[test]
    fn small_split_is_ordered_partition() {
        let ds = flat_dataset(20);
        let (train, test) = split_train_test(&ds, &SplitSpec { train_minutes: 1, test_minutes: 1 }).unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 10);
        let mut joined = train.aggregate.values.clone();
        joined.extend_from_slice(&test.aggregate.values);
        assert_eq!(joined, ds.aggregate.values);
        assert!(split_train_test(&flat_dataset(19), &SplitSpec { train_minutes: 1, test_minutes: 1 }).is_err());
    }
}
