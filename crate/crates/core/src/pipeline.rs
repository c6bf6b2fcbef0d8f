//! End-to-end stages driven by a [`Config`]: geometry setup, synthetic data,
//! training-set generation and inversion runs.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{rasterize, ContrastMap, FrequencySet, ImagingGrid, SensorArray};
use crate::forward::{build_greens, incident_at_receivers, incident_field, simulate, GreensOperators};
use crate::inversion::{run, ExactForward, InversionState, Problem, SurrogateMode};
use crate::io::bundle::DatasetBundle;
use crate::io::config::Config;
use crate::io::record::RunRecord;
use crate::linalg::{norm_sq, CVector, KpMap};
use crate::rng::{stream, Stage};
use crate::subspace::decompose;
use crate::surrogate::{generate_training_set, SimulationSetup, Surrogate, TrainingSet};
use crate::{Complex64, Error, Result};

/// Discretised geometry shared by every stage.
pub struct Setup {
    pub grid: ImagingGrid,
    pub sensors: SensorArray,
    pub freqs: FrequencySet,
    pub greens: GreensOperators,
    /// Incident field at the cell centres per `(k, p)`.
    pub incident: KpMap<CVector>,
}

impl Setup {
    pub fn new(grid: ImagingGrid, sensors: SensorArray, freqs: FrequencySet) -> Result<Self> {
        sensors.validate_against(&grid)?;
        let greens = build_greens(&grid, &sensors, &freqs)?;
        let incident = incident_field(&sensors, &grid, &freqs);
        Ok(Self {
            grid,
            sensors,
            freqs,
            greens,
            incident,
        })
    }

    pub fn from_config(config: &Config) -> Result<Self> {
        Self::new(config.grid()?, config.sensors()?, config.frequencies()?)
    }

    /// Grid from the config, sensors and frequencies from the data.
    pub fn from_bundle(config: &Config, bundle: &DatasetBundle) -> Result<Self> {
        Self::new(config.grid()?, bundle.sensor_array()?, bundle.frequencies()?)
    }

    pub fn simulation(&self, config: &Config) -> SimulationSetup<'_> {
        SimulationSetup {
            grid: &self.grid,
            sensors: &self.sensors,
            freqs: &self.freqs,
            greens: &self.greens,
            incident: &self.incident,
            solver: config.inversion.solver,
        }
    }
}

/// Adds circular complex Gaussian noise to each vector so that
/// `‖v‖² / (Q σ²)` equals the requested SNR.
pub fn add_noise(fields: &mut KpMap<CVector>, snr_db: f64, seed: u64) {
    let mut rng = stream(seed, Stage::SyntheticData);
    for v in fields.values_mut() {
        let power = norm_sq(v.as_slice()) / v.len().max(1) as f64;
        let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
        for x in v.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *x += Complex64::new(sigma * re, sigma * im);
        }
    }
}

/// Simulates the configured scene with the configured calibration factors
/// and packages the result, ground truth included.
pub fn synthesize(config: &Config, setup: &Setup) -> Result<DatasetBundle> {
    let scene = config.scene.resolve()?;
    let truth = rasterize(&scene, &setup.grid)?;
    let per_tx = config.synthetic.lambdas(setup.sensors.n_tx())?;
    let lambdas = KpMap::from_fn(setup.freqs.len(), per_tx.len(), |_, p| per_tx[p]);
    let fields = simulate(&truth, &lambdas, &setup.greens, &setup.incident, &config.inversion.solver)?;
    if !fields.all_converged() {
        log::warn!("forward solve did not reach the requested tolerance for every (k, p)");
    }
    let mut scattered = fields.scattered;
    if let Some(snr) = config.synthetic.snr_db {
        add_noise(&mut scattered, snr, config.seed);
    }
    // Receivers co-located with a transmitter have no finite incident field;
    // such layouts are exported without incident records.
    let incident = match incident_at_receivers(&setup.sensors, &setup.freqs) {
        Ok(inc) => Some(inc.map(|(_, p), v| v * per_tx[p])),
        Err(Error::Geometry(msg)) => {
            log::info!("omitting incident records: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let provenance = format!(
        "synthetic, seed {}, snr_db {}",
        config.seed,
        config.synthetic.snr_db.map_or("none".to_string(), |s| s.to_string())
    );
    DatasetBundle::from_fields(
        &setup.sensors,
        &setup.freqs,
        &scattered,
        incident.as_ref(),
        Some(scene),
        &provenance,
    )
}

pub fn training_set(config: &Config, setup: &Setup) -> Result<TrainingSet> {
    generate_training_set(
        &config.surrogate.template_scenes()?,
        config.surrogate.n_per_config,
        config.seed,
        &setup.simulation(config),
    )
}

/// Ground truth of a bundle on the given grid, if it has one.
pub fn bundle_truth(bundle: &DatasetBundle, grid: &ImagingGrid) -> Result<Option<ContrastMap>> {
    bundle.manifest.ground_truth.as_ref().map(|s| rasterize(s, grid)).transpose()
}

pub struct InversionOutcome {
    pub state: InversionState,
    pub record: RunRecord,
    pub truth: Option<ContrastMap>,
}

/// Runs the inversion of `config` on `bundle`. A surrogate is required when
/// the config asks for the neural forward model.
pub fn invert(
    config: &Config,
    bundle: &DatasetBundle,
    data_source: &str,
    surrogate: Option<&Surrogate>,
) -> Result<InversionOutcome> {
    let start = Instant::now();
    config.validate()?;
    let setup = Setup::from_bundle(config, bundle)?;
    let decomposition = decompose(&setup.greens, config.inversion.cutoff)?;
    let measured = bundle.measured();
    let problem = Problem {
        greens: &setup.greens,
        decomposition: &decomposition,
        incident: &setup.incident,
        measured: &measured,
    };
    let truth = bundle_truth(bundle, &setup.grid)?;
    let inversion = config.inversion.to_config();
    let shape = (setup.grid.nx(), setup.grid.ny());
    let state = match config.inversion.surrogate_mode {
        SurrogateMode::ExactForward => {
            let sim = ExactForward::new(&setup.greens, &setup.incident, config.inversion.solver);
            run(&problem, &inversion, &sim, shape, truth.as_ref())?
        }
        SurrogateMode::Neural => {
            let model = surrogate.ok_or_else(|| {
                Error::Config("surrogate_mode = \"neural\" needs a trained surrogate model".into())
            })?;
            let sim = model.bind(&setup.grid, &setup.sensors, &setup.freqs)?;
            run(&problem, &inversion, &sim, shape, truth.as_ref())?
        }
    };
    let record = RunRecord::from_state(config, data_source, &state, start.elapsed().as_secs_f64());
    Ok(InversionOutcome { state, record, truth })
}
