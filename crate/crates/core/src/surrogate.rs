//! Neural surrogate of the forward model: a fully connected network mapping a
//! relative-permittivity map to the scattered field at the receivers.
//!
//! The output vector stacks one block per `(k, p)`, frequency-major, each block
//! holding the real parts of the `Q_p` receiver samples followed by the
//! imaginary parts. Inputs and outputs are standardised per feature with the
//! training statistics.

use std::io::{Read, Write};
use std::path::Path;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{rasterize, ContrastMap, FrequencySet, ImagingGrid, SceneSpec, SensorArray};
use crate::forward::{simulate, GreensOperators, SolverSettings};
use crate::inversion::{FieldSimulator, SurrogateMode};
use crate::linalg::{CVector, KpMap};
use crate::rng::{stream, stream_at, Stage};
use crate::{Error, Result, CONVENTION};

/// Version tag written at the start of every model file.
pub const MODEL_HEADER: &str = "SCATLAB-MLP-1\n";

/// Bounds of the per-scatterer permittivity draw.
pub const EPS_RANGE: (f64, f64) = (1.1, 5.0);

const MAX_RESAMPLES: u64 = 8;

/// SHA-256 over the grid, sensor layout, frequencies and sign convention.
///
/// Lengths are quantised to 1 nm and frequencies to 1 mHz so that layouts
/// rebuilt from text files hash like the originals.
pub fn geometry_hash(grid: &ImagingGrid, sensors: &SensorArray, freqs: &FrequencySet) -> String {
    let nm = |v: f64| ((v * 1e9).round() as i64).to_le_bytes();
    let mut h = Sha256::new();
    h.update(CONVENTION.as_bytes());
    for v in [grid.nx() as u64, grid.ny() as u64] {
        h.update(v.to_le_bytes());
    }
    let c = grid.center();
    for v in [grid.extent_x(), grid.extent_y(), c.x, c.y] {
        h.update(nm(v));
    }
    for set in [sensors.tx_positions(), sensors.rx_positions()] {
        h.update((set.len() as u64).to_le_bytes());
        for p in set {
            h.update(nm(p.x));
            h.update(nm(p.y));
        }
    }
    for p in 0..sensors.n_tx() {
        for q in sensors.receivers_of(p) {
            h.update((q as u64).to_le_bytes());
        }
        h.update(u64::MAX.to_le_bytes());
    }
    for f in freqs.hz() {
        h.update(((f * 1e3).round() as i64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Shape of the stacked output vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputLayout {
    pub n_freq: usize,
    pub n_tx: usize,
    /// Receivers observing each transmitter.
    pub rx_counts: Vec<usize>,
}

impl OutputLayout {
    pub fn from_greens(greens: &GreensOperators) -> Self {
        Self {
            n_freq: greens.n_freq(),
            n_tx: greens.n_tx(),
            rx_counts: (0..greens.n_tx()).map(|p| greens.rx_count(p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        2 * self.n_freq * self.rx_counts.iter().sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self, fields: &KpMap<CVector>) -> Result<Vec<f64>> {
        if fields.n_freq() != self.n_freq || fields.n_tx() != self.n_tx {
            return Err(Error::Data("field map does not match the output layout".into()));
        }
        let mut out = Vec::with_capacity(self.len());
        for ((_, p), v) in fields.iter() {
            if v.len() != self.rx_counts[p] {
                return Err(Error::Data(format!(
                    "transmitter {p} has {} samples, layout expects {}",
                    v.len(),
                    self.rx_counts[p]
                )));
            }
            out.extend(v.iter().map(|c| c.re));
            out.extend(v.iter().map(|c| c.im));
        }
        Ok(out)
    }

    pub fn unflatten(&self, flat: &[f64]) -> KpMap<CVector> {
        let mut offset = 0;
        KpMap::from_fn(self.n_freq, self.n_tx, |_, p| {
            let q = self.rx_counts[p];
            let v = CVector::from_fn(q, |i, _| Complex64::new(flat[offset + i], flat[offset + q + i]));
            offset += 2 * q;
            v
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub template: usize,
    /// Sub-stream counter that produced this sample; unique within a set.
    pub stream: u64,
    /// Permittivity drawn for each primitive of the template.
    pub eps_r: Vec<f64>,
    /// Flattened `ε_R` map.
    pub input: Vec<f64>,
    /// Stacked output vector.
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub seed: u64,
    pub templates: Vec<SceneSpec>,
    pub geometry_hash: String,
    pub nx: usize,
    pub ny: usize,
    pub layout: OutputLayout,
    pub samples: Vec<TrainingSample>,
}

/// Inputs needed to simulate training samples.
#[derive(Clone, Copy)]
pub struct SimulationSetup<'a> {
    pub grid: &'a ImagingGrid,
    pub sensors: &'a SensorArray,
    pub freqs: &'a FrequencySet,
    pub greens: &'a GreensOperators,
    pub incident: &'a KpMap<CVector>,
    pub solver: SolverSettings,
}

/// Draws `n_per_config` permittivity assignments per template and simulates
/// each with `λ = 1`. Samples whose forward solve does not converge are
/// redrawn from the next sub-stream.
pub fn generate_training_set(
    templates: &[SceneSpec],
    n_per_config: usize,
    seed: u64,
    setup: &SimulationSetup<'_>,
) -> Result<TrainingSet> {
    if n_per_config == 0 || templates.is_empty() {
        return Err(Error::Config("need at least one template and one sample per template".into()));
    }
    for t in templates {
        t.validate_against(setup.grid)?;
    }
    let layout = OutputLayout::from_greens(setup.greens);
    let unit = KpMap::from_fn(layout.n_freq, layout.n_tx, |_, _| Complex64::new(1.0, 0.0));
    let mut samples = Vec::with_capacity(templates.len() * n_per_config);
    for (t, template) in templates.iter().enumerate() {
        for i in 0..n_per_config {
            let base = ((t * n_per_config + i) as u64) * MAX_RESAMPLES;
            let mut accepted = None;
            for attempt in 0..MAX_RESAMPLES {
                let counter = base + attempt;
                let mut rng = stream_at(seed, Stage::TrainingSet as u64, counter);
                let mut scene = template.clone();
                let eps_r: Vec<f64> = scene
                    .primitives
                    .iter_mut()
                    .map(|p| {
                        let e = rng.random_range(EPS_RANGE.0..EPS_RANGE.1);
                        p.set_eps_r(e);
                        e
                    })
                    .collect();
                let chi = rasterize(&scene, setup.grid)?;
                let fields = simulate(&chi, &unit, setup.greens, setup.incident, &setup.solver)?;
                if fields.all_converged() {
                    accepted = Some(TrainingSample {
                        template: t,
                        stream: counter,
                        eps_r,
                        input: chi.permittivity(),
                        target: layout.flatten(&fields.scattered)?,
                    });
                    break;
                }
                warn!("sample {i} of template {t}: forward solve did not converge, redrawing");
            }
            samples.push(accepted.ok_or_else(|| {
                Error::Numerical(format!(
                    "sample {i} of template {t} failed to converge after {MAX_RESAMPLES} draws"
                ))
            })?);
        }
        info!("template {t}: {n_per_config} samples");
    }
    Ok(TrainingSet {
        seed,
        templates: templates.to_vec(),
        geometry_hash: geometry_hash(setup.grid, setup.sensors, setup.freqs),
        nx: setup.grid.nx(),
        ny: setup.grid.ny(),
        layout,
        samples,
    })
}

impl TrainingSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::Data(format!("cannot write training set: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::Data(format!("cannot read training set {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Hidden layer widths.
    pub layers: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            layers: vec![512, 512],
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 2000,
            patience: 100,
            validation_fraction: 0.2,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden layers must have positive width".into()));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("learning rate, batch size and epochs must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-feature affine normalisation `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Statistics over the rows of `data`; features with zero spread get scale 1.
    pub fn fit<'a>(data: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> Self {
        let n = data.clone().count() as f64;
        let mut mean = vec![0.0; dim];
        for row in data.clone() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; dim];
        for row in data {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m).powi(2) / n;
            }
        }
        let scale = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }

    fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.scale).map(|((z, m), s)| z * s + m).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

/// Loss curves and bookkeeping from [`train`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub seed: u64,
    pub config: TrainingConfig,
    pub n_train: usize,
    pub n_validation: usize,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    /// Validation MSE in field units (V/m)², at the best snapshot.
    pub best_validation_mse_physical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    layer_sizes: Vec<usize>,
    activation: String,
    geometry_hash: String,
    nx: usize,
    ny: usize,
    layout: OutputLayout,
    convention: String,
    training: TrainingRecord,
}

/// Trained network plus its normalisation and geometry metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    layers: Vec<Layer>,
    input_norm: Standardizer,
    output_norm: Standardizer,
    geometry_hash: String,
    nx: usize,
    ny: usize,
    layout: OutputLayout,
    record: TrainingRecord,
}

fn forward_pass(layers: &[Layer], x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut acts = vec![x.clone()];
    for (i, layer) in layers.iter().enumerate() {
        let mut z = &layer.w * acts.last().expect("input present");
        for mut col in z.column_iter_mut() {
            col += &layer.b;
        }
        if i + 1 < layers.len() {
            z.apply(|v| *v = v.tanh());
        }
        acts.push(z);
    }
    acts
}

fn columns(rows: &[&[f64]], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, rows.len(), |i, j| rows[j][i])
}

fn mse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (pred - target).norm_squared() / pred.len() as f64
}

struct Adam {
    m: Vec<(DMatrix<f64>, DVector<f64>)>,
    v: Vec<(DMatrix<f64>, DVector<f64>)>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(layers: &[Layer], lr: f64) -> Self {
        let zeros = || {
            layers
                .iter()
                .map(|l| (DMatrix::zeros(l.w.nrows(), l.w.ncols()), DVector::zeros(l.b.len())))
                .collect()
        };
        Self { m: zeros(), v: zeros(), t: 0, lr }
    }

    fn step(&mut self, layers: &mut [Layer], grads: &[(DMatrix<f64>, DVector<f64>)]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        };
        for (i, layer) in layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[i];
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            update(layer.w.as_mut_slice(), gw.as_slice(), mw.as_mut_slice(), vw.as_mut_slice());
            update(layer.b.as_mut_slice(), gb.as_slice(), mb.as_mut_slice(), vb.as_mut_slice());
        }
    }
}

/// Gradients of the mean squared error for one batch.
fn backward(
    layers: &[Layer],
    acts: &[DMatrix<f64>],
    target: &DMatrix<f64>,
) -> Vec<(DMatrix<f64>, DVector<f64>)> {
    let out = acts.last().expect("output present");
    let mut delta = (out - target) * (2.0 / out.len() as f64);
    let mut grads = Vec::with_capacity(layers.len());
    for i in (0..layers.len()).rev() {
        let gw = &delta * acts[i].transpose();
        let gb = delta.column_sum();
        if i > 0 {
            let mut prev = layers[i].w.transpose() * &delta;
            prev.zip_apply(&acts[i], |d, a| *d *= 1.0 - a * a);
            delta = prev;
        }
        grads.push((gw, gb));
    }
    grads.reverse();
    grads
}

/// Trains a surrogate by mini-batch Adam on the standardised MSE and returns
/// the snapshot with the lowest validation loss.
pub fn train(set: &TrainingSet, config: &TrainingConfig, seed: u64) -> Result<Surrogate> {
    config.validate()?;
    if set.samples.len() < 2 {
        return Err(Error::Data("training needs at least two samples".into()));
    }
    if set.samples.len() < 50 {
        warn!("training on only {} samples", set.samples.len());
    }
    let n_in = set.nx * set.ny;
    let n_out = set.layout.len();
    if set.samples.iter().any(|s| s.input.len() != n_in || s.target.len() != n_out) {
        return Err(Error::Data("training samples do not match the set's layout".into()));
    }
    let mut order: Vec<usize> = (0..set.samples.len()).collect();
    order.shuffle(&mut stream(seed, Stage::TrainingSplit));
    let n_val = ((set.samples.len() as f64 * config.validation_fraction).round() as usize)
        .clamp(1, set.samples.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_idx = train_idx.to_vec();

    let input_norm = Standardizer::fit(train_idx.iter().map(|&i| set.samples[i].input.as_slice()), n_in);
    let output_norm = Standardizer::fit(train_idx.iter().map(|&i| set.samples[i].target.as_slice()), n_out);
    let xs: Vec<Vec<f64>> = set.samples.iter().map(|s| input_norm.apply(&s.input)).collect();
    let ys: Vec<Vec<f64>> = set.samples.iter().map(|s| output_norm.apply(&s.target)).collect();
    let gather = |idx: &[usize], data: &[Vec<f64>], dim: usize| {
        columns(&idx.iter().map(|&i| data[i].as_slice()).collect::<Vec<_>>(), dim)
    };
    let x_val = gather(val_idx, &xs, n_in);
    let y_val = gather(val_idx, &ys, n_out);

    let mut sizes = vec![n_in];
    sizes.extend(&config.layers);
    sizes.push(n_out);
    let mut init = stream(seed, Stage::WeightInit);
    let mut layers: Vec<Layer> = sizes
        .windows(2)
        .map(|w| {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            Layer {
                w: DMatrix::from_fn(w[1], w[0], |_, _| init.random_range(-limit..limit)),
                b: DVector::zeros(w[1]),
            }
        })
        .collect();

    let mut adam = Adam::new(&layers, config.learning_rate);
    let mut batching = stream(seed, Stage::Batching);
    let mut record = TrainingRecord {
        seed,
        config: config.clone(),
        n_train: train_idx.len(),
        n_validation: n_val,
        best_validation_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = layers.clone();
    let mut shuffled = train_idx.clone();
    for epoch in 0..config.epochs {
        shuffled.shuffle(&mut batching);
        let mut epoch_loss = 0.0;
        for batch in shuffled.chunks(config.batch_size) {
            let x = gather(batch, &xs, n_in);
            let y = gather(batch, &ys, n_out);
            let acts = forward_pass(&layers, &x);
            epoch_loss += mse(acts.last().expect("output"), &y) * batch.len() as f64;
            let grads = backward(&layers, &acts, &y);
            adam.step(&mut layers, &grads);
        }
        let val = mse(forward_pass(&layers, &x_val).last().expect("output"), &y_val);
        if !val.is_finite() {
            return Err(Error::Numerical(format!(
                "validation loss is {val} at epoch {epoch} (training loss {:.3e})",
                epoch_loss / shuffled.len() as f64
            )));
        }
        record.train_loss.push(epoch_loss / shuffled.len() as f64);
        record.validation_loss.push(val);
        if val < record.best_validation_loss {
            record.best_validation_loss = val;
            record.best_epoch = epoch;
            best = layers.clone();
        } else if epoch - record.best_epoch >= config.patience {
            info!("early stop at epoch {epoch}, best {:.3e} at {}", record.best_validation_loss, record.best_epoch);
            break;
        }
    }
    let mut surrogate = Surrogate {
        layers: best,
        input_norm,
        output_norm,
        geometry_hash: set.geometry_hash.clone(),
        nx: set.nx,
        ny: set.ny,
        layout: set.layout.clone(),
        record,
    };
    let physical: f64 = val_idx
        .iter()
        .map(|&i| {
            let s = &set.samples[i];
            let pred = surrogate.predict_flat(&s.input);
            pred.iter().zip(&s.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n_out as f64
        })
        .sum::<f64>()
        / n_val as f64;
    surrogate.record.best_validation_mse_physical = physical;
    Ok(surrogate)
}

impl Surrogate {
    pub fn record(&self) -> &TrainingRecord {
        &self.record
    }

    pub fn geometry_hash(&self) -> &str {
        &self.geometry_hash
    }

    pub fn layout(&self) -> &OutputLayout {
        &self.layout
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].w.ncols()];
        sizes.extend(self.layers.iter().map(|l| l.w.nrows()));
        sizes
    }

    /// Output vector for a flattened `ε_R` map, in field units.
    pub fn predict_flat(&self, eps_r: &[f64]) -> Vec<f64> {
        let x = DMatrix::from_column_slice(eps_r.len(), 1, &self.input_norm.apply(eps_r));
        let acts = forward_pass(&self.layers, &x);
        self.output_norm.invert(acts.last().expect("output").as_slice())
    }

    /// Simulated receiver fields for `chi`; only `ε_R = 1 + Re χ` is used.
    pub fn predict(&self, chi: &ContrastMap) -> Result<KpMap<CVector>> {
        if chi.nx() != self.nx || chi.ny() != self.ny {
            return Err(Error::ModelMismatch(format!(
                "surrogate expects a {}x{} map, got {}x{}",
                self.nx,
                self.ny,
                chi.nx(),
                chi.ny()
            )));
        }
        let eps = chi.permittivity();
        if eps.iter().any(|e| !(1.0..=8.0).contains(e)) {
            warn!("permittivity outside [1, 8]; surrogate is extrapolating");
        }
        let out = self.predict_flat(&eps);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("surrogate produced non-finite output".into()));
        }
        Ok(self.layout.unflatten(&out))
    }

    /// Checks the geometry and returns a simulator usable by the inversion.
    pub fn bind(
        &self,
        grid: &ImagingGrid,
        sensors: &SensorArray,
        freqs: &FrequencySet,
    ) -> Result<BoundSurrogate<'_>> {
        let hash = geometry_hash(grid, sensors, freqs);
        if hash != self.geometry_hash {
            return Err(Error::ModelMismatch(format!(
                "surrogate was trained for geometry {} but the run uses {}",
                self.geometry_hash, hash
            )));
        }
        Ok(BoundSurrogate { surrogate: self })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut std::io::BufReader::new(file)).map_err(|e| match e {
            ReadError::Io(e) => Error::io(path, e),
            ReadError::Format(m) => Error::Data(format!("{}: {m}", path.display())),
        })
    }

    fn metadata(&self) -> Metadata {
        Metadata {
            layer_sizes: self.layer_sizes(),
            activation: "tanh".into(),
            geometry_hash: self.geometry_hash.clone(),
            nx: self.nx,
            ny: self.ny,
            layout: self.layout.clone(),
            convention: CONVENTION.into(),
            training: self.record.clone(),
        }
    }

    /// Header, metadata length (u64 LE), JSON metadata, then f64 LE arrays:
    /// input mean and scale, output mean and scale, and per layer the
    /// row-major weights followed by the bias.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let meta = serde_json::to_vec(&self.metadata()).map_err(std::io::Error::other)?;
        w.write_all(MODEL_HEADER.as_bytes())?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        let mut put = |xs: &mut dyn Iterator<Item = f64>| -> std::io::Result<()> {
            for x in xs {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        for s in [&self.input_norm, &self.output_norm] {
            put(&mut s.mean.iter().copied())?;
            put(&mut s.scale.iter().copied())?;
        }
        for l in &self.layers {
            put(&mut l.w.transpose().iter().copied())?;
            put(&mut l.b.iter().copied())?;
        }
        Ok(())
    }

    fn read_from(r: &mut impl Read) -> std::result::Result<Self, ReadError> {
        let mut header = vec![0u8; MODEL_HEADER.len()];
        r.read_exact(&mut header)?;
        if header != MODEL_HEADER.as_bytes() {
            return Err(ReadError::Format("not a SCATLAB-MLP-1 model file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(ReadError::Format("metadata length is implausible".into()));
        }
        let mut meta = vec![0u8; len];
        r.read_exact(&mut meta)?;
        let meta: Metadata = serde_json::from_slice(&meta)
            .map_err(|e| ReadError::Format(format!("bad metadata: {e}")))?;
        if meta.activation != "tanh" {
            return Err(ReadError::Format(format!("unsupported activation {}", meta.activation)));
        }
        let sizes = &meta.layer_sizes;
        if sizes.len() < 2 || sizes[0] != meta.nx * meta.ny || *sizes.last().unwrap() != meta.layout.len() {
            return Err(ReadError::Format("layer sizes disagree with the metadata".into()));
        }
        let mut take = |n: usize| -> std::result::Result<Vec<f64>, ReadError> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
        };
        let (n_in, n_out) = (sizes[0], *sizes.last().unwrap());
        let input_norm = Standardizer { mean: take(n_in)?, scale: take(n_in)? };
        let output_norm = Standardizer { mean: take(n_out)?, scale: take(n_out)? };
        let mut layers = Vec::new();
        for win in sizes.windows(2) {
            let w = DMatrix::from_row_slice(win[1], win[0], &take(win[0] * win[1])?);
            let b = DVector::from_vec(take(win[1])?);
            layers.push(Layer { w, b });
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(ReadError::Format(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self {
            layers,
            input_norm,
            output_norm,
            geometry_hash: meta.geometry_hash,
            nx: meta.nx,
            ny: meta.ny,
            layout: meta.layout,
            record: meta.training,
        })
    }
}

enum ReadError {
    Io(std::io::Error),
    Format(String),
}

impl From<std::io::Error> for ReadError {
    fn from(e: std::io::Error) -> Self {
        ReadError::Io(e)
    }
}

/// A surrogate whose geometry has been checked against the run.
pub struct BoundSurrogate<'a> {
    surrogate: &'a Surrogate,
}

impl FieldSimulator for BoundSurrogate<'_> {
    fn mode(&self) -> SurrogateMode {
        SurrogateMode::Neural
    }

    fn simulate(&self, chi: &ContrastMap) -> Result<KpMap<CVector>> {
        self.surrogate.predict(chi)
    }
}
