//! Dataset bundles: a `manifest.toml` plus one CSV per `(k, p)`.
//!
//! Directory layout:
//!
//! - `manifest.toml`: schema, sign convention, units, frequencies, circle
//!   radius, transmitter angles, receiver counts, provenance and an optional
//!   ground-truth scene;
//! - `fields_k{k}_p{p}.csv`: scattered field, header `rx_angle_deg,re_vpm,im_vpm`;
//! - `incident_k{k}_p{p}.csv`: incident field at the receivers, same header
//!   (present when `has_incident = true`).
//!
//! Indices are zero-based. Receiver angles are in degrees, unwrapped so they
//! increase strictly within each file. Floats are written with 17 significant
//! digits, which makes export followed by import lossless.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{FrequencySet, Point2, SceneSpec, SensorArray};
use crate::linalg::{CVector, KpMap};
use crate::{Complex64, Error, Result, CONVENTION};

pub const BUNDLE_SCHEMA: &str = "scatlab-bundle/1";
pub const FIELD_HEADER: &str = "rx_angle_deg,re_vpm,im_vpm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub convention: String,
    pub units: String,
    pub provenance: String,
    pub frequencies_hz: Vec<f64>,
    /// Radius of the sensor circle, metres.
    pub radius: f64,
    pub tx_angles_deg: Vec<f64>,
    /// Receivers per transmitter (`Q_p`).
    pub rx_counts: Vec<usize>,
    /// True when the scattered field was formed as total minus incident.
    #[serde(default)]
    pub scattered_from_total: bool,
    #[serde(default)]
    pub has_incident: bool,
    #[serde(default)]
    pub ground_truth: Option<SceneSpec>,
}

/// Field samples of one `(k, p)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecord {
    pub rx_angles_deg: Vec<f64>,
    pub values: CVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub manifest: Manifest,
    pub scattered: KpMap<FieldRecord>,
    pub incident: Option<KpMap<FieldRecord>>,
}

fn angle_deg(p: &Point2) -> f64 {
    p.y.atan2(p.x).to_degrees().rem_euclid(360.0)
}

/// Makes a sequence of angles strictly increasing by adding whole turns.
fn unwrap_increasing(angles: &mut [f64]) {
    for i in 1..angles.len() {
        while angles[i] <= angles[i - 1] {
            angles[i] += 360.0;
        }
    }
}

impl DatasetBundle {
    /// Packages simulated fields. Sensors must lie on one circle about the
    /// origin.
    pub fn from_fields(
        sensors: &SensorArray,
        freqs: &FrequencySet,
        scattered: &KpMap<CVector>,
        incident: Option<&KpMap<CVector>>,
        ground_truth: Option<SceneSpec>,
        provenance: &str,
    ) -> Result<Self> {
        let radius = sensors.tx_positions()[0].norm();
        let all = sensors.tx_positions().iter().chain(sensors.rx_positions());
        if all.clone().any(|p| (p.norm() - radius).abs() > 1e-9 * radius) {
            return Err(Error::Geometry("bundle export needs all sensors on one circle".into()));
        }
        let rx_angles: Vec<Vec<f64>> = (0..sensors.n_tx())
            .map(|p| {
                let mut a: Vec<f64> = sensors
                    .receivers_of(p)
                    .iter()
                    .map(|&q| angle_deg(&sensors.rx_positions()[q]))
                    .collect();
                unwrap_increasing(&mut a);
                a
            })
            .collect();
        let record = |m: &KpMap<CVector>| {
            m.map(|(_, p), v| FieldRecord {
                rx_angles_deg: rx_angles[p].clone(),
                values: v.clone(),
            })
        };
        let bundle = Self {
            manifest: Manifest {
                schema: BUNDLE_SCHEMA.into(),
                convention: CONVENTION.into(),
                units: "V/m".into(),
                provenance: provenance.into(),
                frequencies_hz: freqs.hz().to_vec(),
                radius,
                tx_angles_deg: sensors.tx_positions().iter().map(angle_deg).collect(),
                rx_counts: (0..sensors.n_tx()).map(|p| sensors.rx_count(p)).collect(),
                scattered_from_total: false,
                has_incident: incident.is_some(),
                ground_truth,
            },
            scattered: record(scattered),
            incident: incident.map(record),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn n_freq(&self) -> usize {
        self.manifest.frequencies_hz.len()
    }

    pub fn n_tx(&self) -> usize {
        self.manifest.tx_angles_deg.len()
    }

    /// Checks counts, angle ordering, finiteness and the manifest tags.
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        if m.schema != BUNDLE_SCHEMA {
            return Err(Error::Data(format!("unsupported bundle schema `{}`", m.schema)));
        }
        if m.convention != CONVENTION {
            return Err(Error::Data(format!(
                "bundle uses time convention `{}`, expected `{CONVENTION}`",
                m.convention
            )));
        }
        if m.units != "V/m" {
            return Err(Error::Data(format!("bundle units must be V/m, got `{}`", m.units)));
        }
        if m.rx_counts.len() != self.n_tx() {
            return Err(Error::Data("rx_counts must list one entry per transmitter".into()));
        }
        FrequencySet::new(m.frequencies_hz.clone())?;
        let check = |map: &KpMap<FieldRecord>, what: &str| -> Result<()> {
            if map.n_freq() != self.n_freq() || map.n_tx() != self.n_tx() {
                return Err(Error::Data(format!("{what} records do not cover every (k, p)")));
            }
            for ((k, p), r) in map.iter() {
                if r.values.len() != m.rx_counts[p] || r.rx_angles_deg.len() != m.rx_counts[p] {
                    return Err(Error::Data(format!(
                        "{what} ({k}, {p}) has {} samples, manifest says {}",
                        r.values.len(),
                        m.rx_counts[p]
                    )));
                }
                if r.rx_angles_deg.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Data(format!(
                        "{what} ({k}, {p}) receiver angles are not strictly increasing"
                    )));
                }
                if r.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("{what} ({k}, {p}) has non-finite samples")));
                }
                let first = &map.get(0, p).rx_angles_deg;
                if r.rx_angles_deg != *first {
                    return Err(Error::Data(format!(
                        "{what} ({k}, {p}) uses different receiver angles than frequency 0"
                    )));
                }
            }
            Ok(())
        };
        check(&self.scattered, "scattered")?;
        match (&self.incident, m.has_incident) {
            (Some(inc), true) => check(inc, "incident")?,
            (None, false) => {}
            _ => return Err(Error::Data("has_incident disagrees with the records".into())),
        }
        Ok(())
    }

    pub fn frequencies(&self) -> Result<FrequencySet> {
        FrequencySet::new(self.manifest.frequencies_hz.clone())
    }

    /// Measured scattered fields per `(k, p)`.
    pub fn measured(&self) -> KpMap<CVector> {
        self.scattered.map(|_, r| r.values.clone())
    }

    /// Sensor layout implied by the recorded angles. Receivers are the
    /// distinct stations over all transmitters, ordered by angle in [0, 360).
    pub fn sensor_array(&self) -> Result<SensorArray> {
        let r = self.manifest.radius;
        let key = |a: f64| (a.rem_euclid(360.0) * 1e9).round() as i64;
        let mut stations: Vec<(i64, f64)> = Vec::new();
        for p in 0..self.n_tx() {
            for &a in &self.scattered.get(0, p).rx_angles_deg {
                stations.push((key(a), a.rem_euclid(360.0)));
            }
        }
        stations.sort_by_key(|s| s.0);
        stations.dedup_by_key(|s| s.0);
        let sets: Vec<Vec<usize>> = (0..self.n_tx())
            .map(|p| {
                self.scattered
                    .get(0, p)
                    .rx_angles_deg
                    .iter()
                    .map(|&a| stations.binary_search_by_key(&key(a), |s| s.0).expect("station listed"))
                    .collect()
            })
            .collect();
        let tx = self.manifest.tx_angles_deg.iter().map(|&a| Point2::polar(r, a)).collect();
        let rx = stations.iter().map(|s| Point2::polar(r, s.1)).collect();
        if sets.iter().all(|s| s.iter().copied().eq(0..stations.len())) {
            SensorArray::new(tx, rx)
        } else {
            SensorArray::with_receiver_sets(tx, rx, sets)
        }
    }

    pub fn export(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = toml::to_string(&self.manifest)
            .map_err(|e| Error::Data(format!("cannot encode manifest: {e}")))?;
        write_file(&dir.join("manifest.toml"), &manifest)?;
        for ((k, p), r) in self.scattered.iter() {
            write_file(&field_path(dir, "fields", k, p), &encode_csv(r))?;
        }
        if let Some(inc) = &self.incident {
            for ((k, p), r) in inc.iter() {
                write_file(&field_path(dir, "incident", k, p), &encode_csv(r))?;
            }
        }
        Ok(())
    }

    pub fn import(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.toml");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = toml::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
        let (nk, np) = (manifest.frequencies_hz.len(), manifest.tx_angles_deg.len());
        let read = |prefix: &str| -> Result<KpMap<FieldRecord>> {
            let mut out = Vec::with_capacity(nk * np);
            for k in 0..nk {
                for p in 0..np {
                    out.push(read_csv(&field_path(dir, prefix, k, p))?);
                }
            }
            Ok(KpMap::from_vec(nk, np, out))
        };
        let scattered = read("fields")?;
        let incident = if manifest.has_incident { Some(read("incident")?) } else { None };
        let bundle = Self { manifest, scattered, incident };
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn field_path(dir: &Path, prefix: &str, k: usize, p: usize) -> PathBuf {
    dir.join(format!("{prefix}_k{k}_p{p}.csv"))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn encode_csv(r: &FieldRecord) -> String {
    let mut s = String::with_capacity(64 * (r.values.len() + 1));
    s.push_str(FIELD_HEADER);
    s.push('\n');
    for (a, v) in r.rx_angles_deg.iter().zip(r.values.iter()) {
        writeln!(s, "{a:.16e},{:.16e},{:.16e}", v.re, v.im).expect("writing to a String");
    }
    s
}

fn read_csv(path: &Path) -> Result<FieldRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == FIELD_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{FIELD_HEADER}`"))),
    }
    let mut angles = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(parse_err(i + 1, format!("expected 3 columns, found {}", cols.len())));
        }
        let mut nums = [0.0f64; 3];
        for (n, c) in nums.iter_mut().zip(&cols) {
            *n = c.parse().map_err(|_| parse_err(i + 1, format!("`{c}` is not a number")))?;
            if !n.is_finite() {
                return Err(parse_err(i + 1, format!("non-finite value `{c}`")));
            }
        }
        angles.push(nums[0]);
        values.push(Complex64::new(nums[1], nums[2]));
    }
    Ok(FieldRecord {
        rx_angles_deg: angles,
        values: CVector::from_vec(values),
    })
}
