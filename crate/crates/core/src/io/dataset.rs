//! Acquisition record: a structured-text header plus columnar binary records.
//!
//! Binary layout:
//!
//! ```text
//! phasemix-dataset v1\n
//! <header as one line of JSON>\n
//! u64 LE record count
//! u32 LE setting index   × count
//! u32 LE sample index    × count
//! f64 LE value           × count
//! ```
//!
//! The text export keeps the same header behind `# ` and writes one
//! tab-separated record per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{DemodConfig, PhaseMixingModel};
use crate::state::MeasurementDescription;

pub const FORMAT_NAME: &str = "phasemix-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    Homodyne,
    Resonator,
    Explicit,
    /// Components drawn directly from a component-level law.
    Component,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingAxis {
    /// HD local-oscillator phase, radians.
    Theta,
    /// RD detuning in half-linewidths.
    Detuning,
    /// A single unscanned setting.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub beam: String,
    pub technique: Technique,
    pub axis: SettingAxis,
    pub settings: Vec<f64>,
    pub counts: Vec<u64>,
    pub seed: u64,
    /// Shot-noise variance the raw values were divided by (as a square root).
    pub sql_normalization: f64,
    pub state: Option<serde_json::Value>,
    pub measurements: Vec<MeasurementDescription>,
    pub mixing: Option<PhaseMixingModel>,
    pub demod: Option<DemodConfig>,
    pub filter_taps: Option<Vec<f64>>,
    /// Per-sample variance of independent Gaussian background, in SQL units.
    pub background_variance: Option<f64>,
    /// Digest of the run configuration that produced the file.
    #[serde(default)]
    pub config_digest: Option<String>,
}

impl DatasetHeader {
    pub fn new(beam: impl Into<String>, technique: Technique, axis: SettingAxis, seed: u64) -> Self {
        Self {
            version: FORMAT_VERSION,
            beam: beam.into(),
            technique,
            axis,
            settings: Vec::new(),
            counts: Vec::new(),
            seed,
            sql_normalization: 1.0,
            state: None,
            measurements: Vec::new(),
            mixing: None,
            demod: None,
            filter_taps: None,
            background_variance: None,
            config_digest: None,
        }
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Header plus columnar records grouped by setting.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    setting_index: Vec<u32>,
    sample_index: Vec<u32>,
    values: Vec<f64>,
}

impl Dataset {
    /// One group of values per `(setting, values)` entry; counts are filled in.
    pub fn from_groups(mut header: DatasetHeader, groups: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        let total: usize = groups.iter().map(|(_, v)| v.len()).sum();
        let (mut setting_index, mut sample_index, mut values) =
            (Vec::with_capacity(total), Vec::with_capacity(total), Vec::with_capacity(total));
        header.settings.clear();
        header.counts.clear();
        for (i, (setting, group)) in groups.into_iter().enumerate() {
            if group.len() > u32::MAX as usize {
                return Err(Error::invalid("more than 2^32 samples in one setting"));
            }
            header.settings.push(setting);
            header.counts.push(group.len() as u64);
            setting_index.extend(std::iter::repeat_n(i as u32, group.len()));
            sample_index.extend(0..group.len() as u32);
            values.extend(group);
        }
        let ds = Self {
            header,
            setting_index,
            sample_index,
            values,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: h.version,
                expected: FORMAT_VERSION,
            });
        }
        if h.settings.len() != h.counts.len() {
            return Err(Error::Malformed(format!(
                "{} settings but {} counts",
                h.settings.len(),
                h.counts.len()
            )));
        }
        if h.total_count() != self.values.len() as u64 {
            return Err(Error::CountMismatch {
                header: h.total_count(),
                records: self.values.len() as u64,
            });
        }
        if !(h.sql_normalization.is_finite() && h.sql_normalization > 0.0) {
            return Err(Error::Malformed("SQL normalization must be positive".into()));
        }
        let mut expected = 0usize;
        for (i, &count) in h.counts.iter().enumerate() {
            for k in 0..count as usize {
                if self.setting_index[expected + k] != i as u32 || self.sample_index[expected + k] != k as u32 {
                    return Err(Error::Malformed(format!(
                        "record {} is out of order for setting {i}",
                        expected + k
                    )));
                }
            }
            expected += count as usize;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn setting_indices(&self) -> &[u32] {
        &self.setting_index
    }

    pub fn sample_indices(&self) -> &[u32] {
        &self.sample_index
    }

    /// Values of setting `i`, in acquisition order.
    pub fn group(&self, i: usize) -> &[f64] {
        let start: u64 = self.header.counts[..i].iter().sum();
        let end = start + self.header.counts[i];
        &self.values[start as usize..end as usize]
    }

    pub fn groups(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        (0..self.header.settings.len()).map(move |i| (self.header.settings[i], self.group(i)))
    }

    /// Divides all values by `sqrt(shot_noise_variance)` and records the factor.
    pub fn normalize_to_sql(&mut self, shot_noise_variance: f64) -> Result<()> {
        if !(shot_noise_variance.is_finite() && shot_noise_variance > 0.0) {
            return Err(Error::invalid("shot-noise variance must be positive"));
        }
        let scale = shot_noise_variance.sqrt();
        self.values.iter_mut().for_each(|v| *v /= scale);
        self.header.sql_normalization *= shot_noise_variance;
        if let Some(b) = self.header.background_variance.as_mut() {
            *b /= shot_noise_variance;
        }
        Ok(())
    }
}

fn parse_version(line: &str, prefix: &str) -> Result<u32> {
    let rest = line
        .strip_prefix(prefix)
        .and_then(|r| r.strip_prefix(" v"))
        .ok_or_else(|| Error::Malformed(format!("not a {FORMAT_NAME} file: first line {line:?}")))?;
    let found: u32 = rest
        .trim()
        .parse()
        .map_err(|_| Error::Malformed(format!("unreadable format version {rest:?}")))?;
    if found != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(found)
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{FORMAT_NAME} v{FORMAT_VERSION}")?;
    serde_json::to_writer(&mut w, &ds.header)?;
    w.write_all(b"\n")?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for x in &ds.setting_index {
        w.write_all(&x.to_le_bytes())?;
    }
    for x in &ds.sample_index {
        w.write_all(&x.to_le_bytes())?;
    }
    for x in &ds.values {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_header_line<R: BufRead>(r: &mut R, strip: &str) -> Result<DatasetHeader> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let json = line
        .trim_end_matches('\n')
        .strip_prefix(strip)
        .ok_or_else(|| Error::Malformed("missing header line".into()))?;
    let header: DatasetHeader = serde_json::from_str(json)?;
    if header.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(header)
}

/// Reads either the binary or the text form, recognized by the first line.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let first = first.trim_end_matches('\n');
    if first.starts_with('#') {
        parse_version(first.trim_start_matches("# "), FORMAT_NAME)?;
        return read_text_body(r);
    }
    parse_version(first, FORMAT_NAME)?;
    let header = read_header_line(&mut r, "")?;

    let mut count = [0u8; 8];
    r.read_exact(&mut count).map_err(|_| Error::Truncated {
        expected: header.total_count(),
        found: 0,
    })?;
    let count = u64::from_le_bytes(count);
    if count != header.total_count() {
        return Err(Error::CountMismatch {
            header: header.total_count(),
            records: count,
        });
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let need = count as usize * 16;
    if body.len() < need {
        return Err(Error::Truncated {
            expected: count,
            found: (body.len() / 16) as u64,
        });
    }
    if body.len() > need {
        return Err(Error::Malformed(format!("{} trailing bytes after the records", body.len() - need)));
    }
    let n = count as usize;
    let u32s = |off: usize| -> Vec<u32> {
        body[off..off + 4 * n]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect()
    };
    let setting_index = u32s(0);
    let sample_index = u32s(4 * n);
    let values = body[8 * n..16 * n]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let ds = Dataset {
        header,
        setting_index,
        sample_index,
        values,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_dataset_text(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# {FORMAT_NAME} v{FORMAT_VERSION}")?;
    w.write_all(b"# ")?;
    serde_json::to_writer(&mut w, &ds.header)?;
    w.write_all(b"\n")?;
    writeln!(w, "setting_index\tsample_index\tvalue")?;
    for i in 0..ds.len() {
        // `{:?}` on f64 prints the shortest string that reads back exactly
        writeln!(w, "{}\t{}\t{:?}", ds.setting_index[i], ds.sample_index[i], ds.values[i])?;
    }
    w.flush()?;
    Ok(())
}

fn read_text_body<R: BufRead>(mut r: R) -> Result<Dataset> {
    let header = read_header_line(&mut r, "# ")?;
    let mut columns = String::new();
    r.read_line(&mut columns)?;
    if columns.trim_end() != "setting_index\tsample_index\tvalue" {
        return Err(Error::Malformed(format!("unexpected column line {columns:?}")));
    }
    let mut setting_index = Vec::new();
    let mut sample_index = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Malformed(format!("record line {}: {line:?}", lineno + 1));
        let mut it = line.split('\t');
        let (Some(a), Some(b), Some(c), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        setting_index.push(a.parse().map_err(|_| bad())?);
        sample_index.push(b.parse().map_err(|_| bad())?);
        values.push(c.parse().map_err(|_| bad())?);
    }
    let found = values.len() as u64;
    if found < header.total_count() {
        return Err(Error::Truncated {
            expected: header.total_count(),
            found,
        });
    }
    let ds = Dataset {
        header,
        setting_index,
        sample_index,
        values,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let header = DatasetHeader::new("beam-0", Technique::Homodyne, SettingAxis::Theta, 42);
        let groups = vec![
            (0.0, vec![1.0, -0.5, f64::MIN_POSITIVE, 1e300]),
            (0.7, vec![0.1 + 0.2, -3.25]),
        ];
        Dataset::from_groups(header, groups).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let ds = sample();
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
        assert!(back.values().iter().zip(ds.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tsv");
        let ds = sample();
        write_dataset_text(&ds, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn truncation_names_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dataset(&sample(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 20]).unwrap();
        match read_dataset(&path) {
            Err(Error::Truncated { expected: 6, found }) => assert!(found < 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dataset(&sample(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let pos = bytes.iter().position(|&b| b == b'1').unwrap();
        bytes[pos] = b'7';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(Error::VersionMismatch { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn count_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dataset(&sample(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let nl = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(1).unwrap().0;
        bytes[nl + 1..nl + 9].copy_from_slice(&5u64.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_dataset(&path),
            Err(Error::CountMismatch { header: 6, records: 5 })
        ));
    }

    #[test]
    fn groups_follow_counts() {
        let ds = sample();
        assert_eq!(ds.group(1), &[0.1 + 0.2, -3.25]);
        assert_eq!(ds.header.counts, vec![4, 2]);
        assert_eq!(ds.groups().count(), 2);
    }

    #[test]
    fn sql_normalization_scales_values() {
        let mut ds = sample();
        ds.normalize_to_sql(4.0).unwrap();
        assert_eq!(ds.group(0)[0], 0.5);
        assert_eq!(ds.header.sql_normalization, 4.0);
    }
}
