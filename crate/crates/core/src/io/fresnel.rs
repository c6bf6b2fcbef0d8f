//! Importer for measured bistatic data in whitespace-delimited text form.
//!
//! Each data row holds a transmitter angle (degrees), a receiver angle
//! (degrees), a frequency (GHz) and the real and imaginary parts of the total
//! and incident fields. Column positions can be remapped. Lines starting
//! with `#`, `%`, `!` or `//`, blank lines and lines whose first field is not
//! numeric (headers) are skipped. The scattered field is stored as total
//! minus incident.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::domain::FrequencySet;
use crate::io::bundle::{DatasetBundle, FieldRecord, Manifest, BUNDLE_SCHEMA};
use crate::linalg::{CVector, KpMap};
use crate::{Complex64, Error, Result, CONVENTION};

/// Radius of the measurement circle used when none is given, metres.
pub const DEFAULT_RADIUS: f64 = 1.67;

/// Zero-based column positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnMap {
    pub tx: usize,
    pub rx: usize,
    pub freq: usize,
    pub total_re: usize,
    pub total_im: usize,
    pub inc_re: usize,
    pub inc_im: usize,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            tx: 0,
            rx: 1,
            freq: 2,
            total_re: 3,
            total_im: 4,
            inc_re: 5,
            inc_im: 6,
        }
    }
}

impl ColumnMap {
    fn width(&self) -> usize {
        1 + self.as_array().into_iter().max().unwrap_or(0)
    }

    fn as_array(&self) -> [usize; 7] {
        [self.tx, self.rx, self.freq, self.total_re, self.total_im, self.inc_re, self.inc_im]
    }
}

/// Parses `name=index` pairs separated by commas, e.g. `tx=1,rx=0`.
/// Unlisted columns keep their default position.
impl FromStr for ColumnMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut map = ColumnMap::default();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (name, idx) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("column map entry `{item}` is not name=index")))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("column index in `{item}` is not an integer")))?;
            let slot = match name.trim() {
                "tx" => &mut map.tx,
                "rx" => &mut map.rx,
                "freq" => &mut map.freq,
                "total_re" => &mut map.total_re,
                "total_im" => &mut map.total_im,
                "inc_re" => &mut map.inc_re,
                "inc_im" => &mut map.inc_im,
                other => return Err(Error::Config(format!("unknown column name `{other}`"))),
            };
            *slot = idx;
        }
        let mut cols = map.as_array();
        cols.sort_unstable();
        if cols.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("column map assigns one column twice".into()));
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelOptions {
    pub columns: ColumnMap,
    pub radius: f64,
}

impl Default for FresnelOptions {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            radius: DEFAULT_RADIUS,
        }
    }
}

struct Row {
    tx: f64,
    rx: f64,
    total: Complex64,
    incident: Complex64,
}

fn is_comment(line: &str) -> bool {
    line.is_empty() || line.starts_with(['#', '%', '!']) || line.starts_with("//")
}

/// Quantised keys so tiny formatting differences do not split groups.
fn freq_key(ghz: f64) -> i64 {
    (ghz * 1e6).round() as i64
}

fn angle_key(deg: f64) -> i64 {
    (deg.rem_euclid(360.0) * 1e6).round() as i64
}

pub fn import_fresnel(path: &Path, options: &FresnelOptions) -> Result<DatasetBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    parse_fresnel(&text, path, &name, options)
}

/// Parses file contents. `path` is only used in error messages.
pub fn parse_fresnel(
    text: &str,
    path: &Path,
    source_name: &str,
    options: &FresnelOptions,
) -> Result<DatasetBundle> {
    if !(options.radius.is_finite() && options.radius > 0.0) {
        return Err(Error::Config("radius must be positive".into()));
    }
    let cols = options.columns;
    let width = cols.width();
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    // freq key -> (GHz, tx key -> (tx angle, rows))
    let mut groups: BTreeMap<i64, (f64, BTreeMap<i64, (f64, Vec<Row>)>)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if is_comment(line) {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()).collect();
        // A leading token that is not numeric marks a header line; NaN and
        // inf parse as floats and are caught below.
        if fields[0].parse::<f64>().is_err() {
            continue;
        }
        if fields.len() < width {
            return Err(err(line_no, format!("expected at least {width} columns, found {}", fields.len())));
        }
        let num = |c: usize| -> Result<f64> {
            let v: f64 = fields[c]
                .parse()
                .map_err(|_| err(line_no, format!("column {c}: `{}` is not a number", fields[c])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(line_no, format!("column {c}: non-finite value `{}`", fields[c])))
            }
        };
        let row = Row {
            tx: num(cols.tx)?,
            rx: num(cols.rx)?,
            total: Complex64::new(num(cols.total_re)?, num(cols.total_im)?),
            incident: Complex64::new(num(cols.inc_re)?, num(cols.inc_im)?),
        };
        let ghz = num(cols.freq)?;
        if ghz <= 0.0 {
            return Err(err(line_no, format!("frequency {ghz} GHz is not positive")));
        }
        let by_tx = &mut groups.entry(freq_key(ghz)).or_insert_with(|| (ghz, BTreeMap::new())).1;
        by_tx
            .entry(angle_key(row.tx))
            .or_insert_with(|| (row.tx.rem_euclid(360.0), Vec::new()))
            .1
            .push(row);
    }
    if groups.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }

    let tx_keys: Vec<i64> = groups.values().next().expect("non-empty").1.keys().copied().collect();
    let tx_angles: Vec<f64> = groups.values().next().expect("non-empty").1.values().map(|g| g.0).collect();
    let freqs_ghz: Vec<f64> = groups.values().map(|g| g.0).collect();
    for (ghz, by_tx) in groups.values() {
        if by_tx.keys().ne(tx_keys.iter()) {
            return Err(Error::Data(format!(
                "transmitter angles at {ghz} GHz differ from those at {} GHz",
                freqs_ghz[0]
            )));
        }
    }

    // Receiver counts must agree for every (k, p); report all offenders.
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, by_tx) in groups.values() {
        for (_, rows) in by_tx.values() {
            *counts.entry(rows.len()).or_default() += 1;
        }
    }
    if counts.len() > 1 {
        let expected = counts.iter().max_by_key(|(_, &n)| n).map(|(&q, _)| q).expect("non-empty");
        let offenders: Vec<String> = groups
            .values()
            .enumerate()
            .flat_map(|(k, (_, by_tx))| {
                by_tx.values().enumerate().filter_map(move |(p, (_, rows))| {
                    (rows.len() != expected).then(|| format!("(k={k}, p={p}): {} rows", rows.len()))
                })
            })
            .collect();
        return Err(Error::Data(format!(
            "inconsistent receiver counts, expected {expected} per (k, p); offending {}",
            offenders.join(", ")
        )));
    }

    let nk = groups.len();
    let np = tx_keys.len();
    let mut scattered = Vec::with_capacity(nk * np);
    let mut incident = Vec::with_capacity(nk * np);
    for (k, (_, by_tx)) in groups.into_values().enumerate() {
        for (p, (tx_deg, mut rows)) in by_tx.into_values().enumerate() {
            // Order by angle measured from the transmitter so each arc is
            // contiguous, then express the angles unwrapped from it.
            let rel = |r: &Row| (r.rx - tx_deg).rem_euclid(360.0);
            rows.sort_by(|a, b| rel(a).total_cmp(&rel(b)));
            let angles: Vec<f64> = rows.iter().map(|r| tx_deg + rel(r)).collect();
            if let Some(w) = angles.windows(2).find(|w| angle_key(w[0]) == angle_key(w[1])) {
                return Err(Error::Data(format!(
                    "duplicate receiver angle {:.6} deg at (k={k}, p={p})",
                    w[0].rem_euclid(360.0)
                )));
            }
            scattered.push(FieldRecord {
                rx_angles_deg: angles.clone(),
                values: CVector::from_iterator(rows.len(), rows.iter().map(|r| r.total - r.incident)),
            });
            incident.push(FieldRecord {
                rx_angles_deg: angles,
                values: CVector::from_iterator(rows.len(), rows.iter().map(|r| r.incident)),
            });
        }
    }
    let frequencies_hz: Vec<f64> = freqs_ghz.iter().map(|g| g * 1e9).collect();
    FrequencySet::new(frequencies_hz.clone())?;
    let rx_counts = (0..np).map(|p| scattered[p].values.len()).collect();
    let bundle = DatasetBundle {
        manifest: Manifest {
            schema: BUNDLE_SCHEMA.into(),
            convention: CONVENTION.into(),
            units: "V/m".into(),
            provenance: format!("imported from {source_name}"),
            frequencies_hz,
            radius: options.radius,
            tx_angles_deg: tx_angles,
            rx_counts,
            scattered_from_total: true,
            has_incident: true,
            ground_truth: None,
        },
        scattered: KpMap::from_vec(nk, np, scattered),
        incident: Some(KpMap::from_vec(nk, np, incident)),
    };
    bundle.validate()?;
    Ok(bundle)
}
