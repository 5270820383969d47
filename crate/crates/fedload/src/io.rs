//! Channel and labels files, UK-DALE house directories, dataset CSVs and
//! atomic file writes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fedload_core::data::{align_and_fill, parse_channel, parse_labels, AlignPolicy, HouseholdDataset, PowerTrace, RawTrace, DEFAULT_PERIOD};
use fedload_core::eval::AGGREGATE;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Label names treated as the whole-house meter.
pub const MAINS_LABELS: [&str; 2] = ["aggregate", "mains"];

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write `bytes` to a temporary file next to `path`, then rename it into
/// place. Parent directories are created as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Read one `unix_ts watts` channel file.
pub fn ingest_channel(path: &Path) -> Result<RawTrace> {
    parse_channel(&read_text(path)?).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a `channel_number name` labels file.
pub fn read_labels(path: &Path) -> Result<Vec<(u32, String)>> {
    parse_labels(&read_text(path)?).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Half-open `[start, end)` window of unix seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TimeRange {
    pub start: Option<i64>,
    pub end: Option<i64>,
}

impl TimeRange {
    pub fn contains(&self, ts: i64) -> bool {
        self.start.is_none_or(|s| ts >= s) && self.end.is_none_or(|e| ts < e)
    }
}

/// Load a UK-DALE style house directory: `labels.dat` plus one
/// `channel_<n>.dat` per label. A channel labelled `aggregate` or `mains`
/// becomes the aggregate; without one the aggregate is the appliance sum.
/// Channels are read in parallel. The household id is the directory name
/// unless `id` is given.
pub fn load_house(dir: &Path, id: Option<&str>, policy: &AlignPolicy, range: TimeRange) -> Result<HouseholdDataset> {
    let labels = read_labels(&dir.join("labels.dat"))?;
    if labels.is_empty() {
        return Err(Error::format(dir.join("labels.dat"), "no channels listed"));
    }
    let channels: Vec<(String, RawTrace)> = labels
        .par_iter()
        .map(|(n, name)| {
            let path = dir.join(format!("channel_{n}.dat"));
            let mut raw = ingest_channel(&path)?;
            raw.samples.retain(|&(ts, _)| range.contains(ts));
            if raw.samples.is_empty() {
                return Err(Error::File {
                    path,
                    source: fedload_core::Error::EmptyTrace,
                });
            }
            Ok((name.clone(), raw))
        })
        .collect::<Result<_>>()?;

    let mut mains = None;
    let mut appliances = Vec::new();
    for (name, raw) in channels {
        if MAINS_LABELS.contains(&name.as_str()) {
            if mains.is_some() {
                return Err(Error::format(dir.join("labels.dat"), "more than one mains channel"));
            }
            mains = Some(raw);
        } else {
            appliances.push((name, raw));
        }
    }
    let id = match id {
        Some(id) => id.to_string(),
        None => file_stem(dir)?,
    };
    Ok(align_and_fill(&id, mains.as_ref(), &appliances, policy)?)
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::format(path, "cannot derive a household id from the path"))
}

/// Serialize a household as CSV: `timestamp,aggregate,<appliance>...`.
pub fn dataset_to_csv(ds: &HouseholdDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["timestamp".to_string(), AGGREGATE.to_string()];
    header.extend(ds.appliances.keys().cloned());
    let wrap = |e| Error::csv("<dataset>", e);
    w.write_record(&header).map_err(wrap)?;
    let columns: Vec<&[f64]> = std::iter::once(ds.aggregate.values.as_slice())
        .chain(ds.appliances.values().map(|t| t.values.as_slice()))
        .collect();
    let mut row = Vec::with_capacity(header.len());
    for i in 0..ds.len() {
        row.clear();
        row.push(ds.aggregate.timestamp(i).to_string());
        row.extend(columns.iter().map(|c| c[i].to_string()));
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::csv("<dataset>", e.into_error().into()))
}

pub fn write_dataset(path: &Path, ds: &HouseholdDataset) -> Result<()> {
    write_atomic(path, &dataset_to_csv(ds)?)
}

/// Read a dataset CSV written by [`write_dataset`]. The household id is the
/// file stem; the period is the spacing of the first two rows and must be
/// uniform.
pub fn read_dataset(path: &Path) -> Result<HouseholdDataset> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.len() < 2 || &header[0] != "timestamp" || &header[1] != AGGREGATE {
        return Err(Error::format(path, "header must start with `timestamp,aggregate`"));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut times: Vec<i64> = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 1];
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = i + 2;
        let bad = |what: &str, v: &str| Error::format(path, format!("line {line}: bad {what} `{v}`"));
        times.push(rec[0].trim().parse().map_err(|_| bad("timestamp", &rec[0]))?);
        for (c, col) in cols.iter_mut().enumerate() {
            let v = &rec[c + 1];
            col.push(v.trim().parse().map_err(|_| bad("value", v))?);
        }
    }
    if times.is_empty() {
        return Err(Error::File {
            path: path.to_path_buf(),
            source: fedload_core::Error::EmptyTrace,
        });
    }
    let period = if times.len() > 1 { times[1] - times[0] } else { DEFAULT_PERIOD as i64 };
    if period <= 0 || period > u32::MAX as i64 {
        return Err(Error::format(path, format!("timestamps must increase, got step {period}")));
    }
    if let Some(k) = times.windows(2).position(|w| w[1] - w[0] != period) {
        return Err(Error::format(path, format!("line {}: timestamps are not evenly spaced", k + 3)));
    }
    let trace = |values: Vec<f64>| {
        PowerTrace::new(times[0], period as u32, values).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })
    };
    let mut cols = cols.into_iter();
    let aggregate = trace(cols.next().unwrap_or_default())?;
    let mut appliances = BTreeMap::new();
    for (name, values) in names.into_iter().zip(cols) {
        if appliances.insert(name.clone(), trace(values)?).is_some() {
            return Err(Error::format(path, format!("duplicate column `{name}`")));
        }
    }
    Ok(HouseholdDataset {
        household_id: file_stem(path)?,
        aggregate,
        appliances,
    })
}
