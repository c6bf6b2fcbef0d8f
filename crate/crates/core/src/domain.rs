//! Imaging grid, sensor geometry, frequencies and contrast representation.
//!
//! The contrast of a cell is `χ = ε_r − 1 + σ/(jωε₀)`, so free space is
//! `χ = 0` and a passive medium has `Re χ ≥ 0`, `Im χ ≤ 0` under `exp(+jωt)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Vacuum electromagnetic constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Permittivity of free space, F/m.
    pub eps0: f64,
    /// Permeability of free space, H/m.
    pub mu0: f64,
}

impl PhysicalConstants {
    pub const VACUUM: PhysicalConstants = PhysicalConstants {
        eps0: 8.854_187_812_8e-12,
        mu0: 1.256_637_062_12e-6,
    };

    pub fn speed_of_light(&self) -> f64 {
        1.0 / (self.eps0 * self.mu0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn polar(radius: f64, angle_deg: f64) -> Self {
        let a = angle_deg.to_radians();
        Self::new(radius * a.cos(), radius * a.sin())
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Uniform grid of square cells covering the investigation domain.
///
/// Cells are numbered row-major with `x` varying fastest:
/// `l = iy * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingGrid {
    nx: usize,
    ny: usize,
    extent_x: f64,
    extent_y: f64,
    center: Point2,
    cell_size: f64,
    centers: Vec<Point2>,
}

impl ImagingGrid {
    /// Grid centred on the origin.
    pub fn new(nx: usize, ny: usize, extent_x: f64, extent_y: f64) -> Result<Self> {
        Self::with_center(nx, ny, extent_x, extent_y, Point2::new(0.0, 0.0))
    }

    pub fn square(n: usize, extent: f64) -> Result<Self> {
        Self::new(n, n, extent, extent)
    }

    pub fn with_center(
        nx: usize,
        ny: usize,
        extent_x: f64,
        extent_y: f64,
        center: Point2,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config("grid cell counts must be positive".into()));
        }
        if !(extent_x > 0.0 && extent_y > 0.0 && extent_x.is_finite() && extent_y.is_finite()) {
            return Err(Error::Config("grid extent must be positive and finite".into()));
        }
        let dx = extent_x / nx as f64;
        let dy = extent_y / ny as f64;
        if ((dx - dy) / dx).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "cells must be square: extent_x/nx = {dx} m but extent_y/ny = {dy} m"
            )));
        }
        let x0 = center.x - 0.5 * extent_x;
        let y0 = center.y - 0.5 * extent_y;
        let centers = (0..ny)
            .flat_map(|iy| {
                (0..nx).map(move |ix| {
                    Point2::new(x0 + (ix as f64 + 0.5) * dx, y0 + (iy as f64 + 0.5) * dx)
                })
            })
            .collect();
        Ok(Self {
            nx,
            ny,
            extent_x,
            extent_y,
            center,
            cell_size: dx,
            centers,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn extent_x(&self) -> f64 {
        self.extent_x
    }

    pub fn extent_y(&self) -> f64 {
        self.extent_y
    }

    pub fn center(&self) -> Point2 {
        self.center
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    /// Radius of the disk with the same area as one cell.
    pub fn equivalent_radius(&self) -> f64 {
        self.cell_size / PI.sqrt()
    }

    pub fn cell_centers(&self) -> &[Point2] {
        &self.centers
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// True when `p` lies in the closed rectangle covered by the grid.
    pub fn covers(&self, p: &Point2) -> bool {
        (p.x - self.center.x).abs() <= 0.5 * self.extent_x
            && (p.y - self.center.y).abs() <= 0.5 * self.extent_y
    }

    /// Distance from the grid centre to its farthest corner.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.extent_x.hypot(self.extent_y)
    }
}

/// Transmitter and receiver positions.
///
/// Receivers are stored once; each transmitter either sees all of them or a
/// subset given by index lists (the Fresnel bistatic layout measures a
/// different arc for each source).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorArray {
    tx_positions: Vec<Point2>,
    rx_positions: Vec<Point2>,
    rx_sets: Option<Vec<Vec<usize>>>,
}

impl SensorArray {
    /// Every transmitter observed by every receiver.
    pub fn new(tx_positions: Vec<Point2>, rx_positions: Vec<Point2>) -> Result<Self> {
        if tx_positions.is_empty() || rx_positions.is_empty() {
            return Err(Error::Geometry(
                "sensor array needs at least one transmitter and one receiver".into(),
            ));
        }
        Ok(Self {
            tx_positions,
            rx_positions,
            rx_sets: None,
        })
    }

    /// Transmitter `p` is observed by receivers `rx_sets[p]`.
    pub fn with_receiver_sets(
        tx_positions: Vec<Point2>,
        rx_positions: Vec<Point2>,
        rx_sets: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let mut array = Self::new(tx_positions, rx_positions)?;
        if rx_sets.len() != array.tx_positions.len() {
            return Err(Error::Geometry(format!(
                "{} receiver sets given for {} transmitters",
                rx_sets.len(),
                array.tx_positions.len()
            )));
        }
        for (p, set) in rx_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Geometry(format!("transmitter {p} has no receivers")));
            }
            if let Some(&bad) = set.iter().find(|&&i| i >= array.rx_positions.len()) {
                return Err(Error::Geometry(format!(
                    "transmitter {p} references receiver {bad} out of range"
                )));
            }
        }
        array.rx_sets = Some(rx_sets);
        Ok(array)
    }

    /// `n_tx` transmitters and `n_rx` receivers evenly spaced on one circle,
    /// starting at angle zero.
    pub fn ring(radius: f64, n_tx: usize, n_rx: usize) -> Result<Self> {
        let tx = (0..n_tx)
            .map(|p| Point2::polar(radius, 360.0 * p as f64 / n_tx as f64))
            .collect();
        let rx = (0..n_rx)
            .map(|q| Point2::polar(radius, 360.0 * q as f64 / n_rx as f64))
            .collect();
        Self::new(tx, rx)
    }

    pub fn n_tx(&self) -> usize {
        self.tx_positions.len()
    }

    pub fn tx_positions(&self) -> &[Point2] {
        &self.tx_positions
    }

    /// All receiver positions (the union over transmitters).
    pub fn rx_positions(&self) -> &[Point2] {
        &self.rx_positions
    }

    pub fn rx_sets(&self) -> Option<&[Vec<usize>]> {
        self.rx_sets.as_deref()
    }

    /// Indices of the receivers that observe transmitter `p`.
    pub fn receivers_of(&self, p: usize) -> Vec<usize> {
        match &self.rx_sets {
            Some(sets) => sets[p].clone(),
            None => (0..self.rx_positions.len()).collect(),
        }
    }

    /// Number of receivers observing transmitter `p`.
    pub fn rx_count(&self, p: usize) -> usize {
        match &self.rx_sets {
            Some(sets) => sets[p].len(),
            None => self.rx_positions.len(),
        }
    }

    /// Distinct receiver sets and, for every transmitter, the set it uses.
    pub fn receiver_groups(&self) -> (Vec<Vec<usize>>, Vec<usize>) {
        match &self.rx_sets {
            None => (
                vec![(0..self.rx_positions.len()).collect()],
                vec![0; self.n_tx()],
            ),
            Some(sets) => {
                let mut groups: Vec<Vec<usize>> = Vec::new();
                let mut group_of = Vec::with_capacity(sets.len());
                for set in sets {
                    match groups.iter().position(|g| g == set) {
                        Some(g) => group_of.push(g),
                        None => {
                            group_of.push(groups.len());
                            groups.push(set.clone());
                        }
                    }
                }
                (groups, group_of)
            }
        }
    }

    /// Rejects sensors lying inside (or on the boundary of) the imaging domain.
    pub fn validate_against(&self, grid: &ImagingGrid) -> Result<()> {
        let inside = |p: &Point2| grid.covers(p);
        if let Some((i, p)) = self.tx_positions.iter().enumerate().find(|(_, p)| inside(p)) {
            return Err(Error::Geometry(format!(
                "transmitter {i} at ({}, {}) lies inside the imaging domain",
                p.x, p.y
            )));
        }
        if let Some((i, p)) = self.rx_positions.iter().enumerate().find(|(_, p)| inside(p)) {
            return Err(Error::Geometry(format!(
                "receiver {i} at ({}, {}) lies inside the imaging domain",
                p.x, p.y
            )));
        }
        Ok(())
    }
}

/// Radius of the Fresnel measurement circle, metres.
pub const FRESNEL_RADIUS: f64 = 1.67;

/// The Fresnel-style bistatic layout: 8 transmitters every 45° on a 1.67 m
/// circle; 360 receiver stations every 1° on the same circle, of which each
/// transmitter uses the 241 stations from +60° to +300° relative to itself.
///
/// The receiver arc is an assumption (it follows the 2005 Fresnel database
/// description); imported datasets carry their own angles.
pub fn fresnel_geometry() -> SensorArray {
    let tx_angles: Vec<f64> = (0..8).map(|p| 45.0 * p as f64).collect();
    let tx = tx_angles
        .iter()
        .map(|&a| Point2::polar(FRESNEL_RADIUS, a))
        .collect();
    let rx = (0..360)
        .map(|q| Point2::polar(FRESNEL_RADIUS, q as f64))
        .collect();
    let sets = tx_angles
        .iter()
        .map(|&a| {
            (60..=300)
                .map(|offset| (a as usize + offset) % 360)
                .collect()
        })
        .collect();
    SensorArray::with_receiver_sets(tx, rx, sets).expect("static Fresnel layout is valid")
}

/// Receiver angles (degrees, unwrapped and increasing) observed by Fresnel
/// transmitter `p`.
pub fn fresnel_receiver_angles(p: usize) -> Vec<f64> {
    let base = 45.0 * p as f64;
    (60..=300).map(|o| base + o as f64).collect()
}

/// Strictly increasing list of operating frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySet {
    frequencies_hz: Vec<f64>,
}

impl FrequencySet {
    pub fn new(frequencies_hz: Vec<f64>) -> Result<Self> {
        if frequencies_hz.is_empty() {
            return Err(Error::Config("at least one frequency is required".into()));
        }
        if frequencies_hz.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Config("frequencies must be positive and finite".into()));
        }
        if frequencies_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("frequencies must be strictly increasing".into()));
        }
        Ok(Self { frequencies_hz })
    }

    pub fn len(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies_hz.is_empty()
    }

    pub fn hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn angular(&self, k: usize) -> f64 {
        2.0 * PI * self.frequencies_hz[k]
    }

    /// Background (vacuum) wavenumber `k₀ = ω √(μ₀ε₀)`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        let c = PhysicalConstants::VACUUM;
        self.angular(k) * (c.mu0 * c.eps0).sqrt()
    }

    pub fn wavelength(&self, k: usize) -> f64 {
        2.0 * PI / self.wavenumber(k)
    }
}

/// Complex contrast per grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastMap {
    nx: usize,
    ny: usize,
    values: Vec<Complex64>,
}

impl ContrastMap {
    pub fn zeros(grid: &ImagingGrid) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            values: vec![Complex64::new(0.0, 0.0); grid.n_cells()],
        }
    }

    pub fn new(grid: &ImagingGrid, values: Vec<Complex64>) -> Result<Self> {
        Self::from_shape(grid.nx(), grid.ny(), values)
    }

    pub fn from_shape(nx: usize, ny: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::Data(format!(
                "contrast map has {} values for a {nx}x{ny} grid",
                values.len()
            )));
        }
        Ok(Self { nx, ny, values })
    }

    /// Lossless map from relative permittivities.
    pub fn from_permittivity(grid: &ImagingGrid, eps_r: &[f64]) -> Result<Self> {
        Self::new(grid, eps_r.iter().map(|e| Complex64::new(e - 1.0, 0.0)).collect())
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn matches(&self, grid: &ImagingGrid) -> bool {
        self.nx == grid.nx() && self.ny == grid.ny()
    }

    /// Relative permittivity `ε_R = 1 + Re χ` per cell.
    pub fn permittivity(&self) -> Vec<f64> {
        self.values.iter().map(|c| 1.0 + c.re).collect()
    }

    /// Conductivity per cell (S/m) at angular frequency `omega`.
    pub fn conductivity(&self, omega: f64) -> Vec<f64> {
        let eps0 = PhysicalConstants::VACUUM.eps0;
        self.values.iter().map(|c| -c.im * omega * eps0).collect()
    }
}

/// Homogeneous primitive used to describe ground-truth scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Circle {
        center: [f64; 2],
        radius: f64,
        eps_r: f64,
    },
    Annulus {
        center: [f64; 2],
        inner_radius: f64,
        outer_radius: f64,
        eps_r: f64,
    },
}

impl Primitive {
    pub fn eps_r(&self) -> f64 {
        match self {
            Primitive::Circle { eps_r, .. } | Primitive::Annulus { eps_r, .. } => *eps_r,
        }
    }

    pub fn set_eps_r(&mut self, value: f64) {
        match self {
            Primitive::Circle { eps_r, .. } | Primitive::Annulus { eps_r, .. } => *eps_r = value,
        }
    }

    pub fn contains(&self, p: &Point2) -> bool {
        match *self {
            Primitive::Circle { center, radius, .. } => {
                Point2::new(center[0], center[1]).distance(p) < radius
            }
            Primitive::Annulus {
                center,
                inner_radius,
                outer_radius,
                ..
            } => {
                let r = Point2::new(center[0], center[1]).distance(p);
                r >= inner_radius && r < outer_radius
            }
        }
    }

    fn bounding_radius(&self) -> (Point2, f64) {
        match *self {
            Primitive::Circle { center, radius, .. } => (Point2::new(center[0], center[1]), radius),
            Primitive::Annulus {
                center,
                outer_radius,
                ..
            } => (Point2::new(center[0], center[1]), outer_radius),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Primitive::Circle { radius, .. } => radius > 0.0,
            Primitive::Annulus {
                inner_radius,
                outer_radius,
                ..
            } => inner_radius >= 0.0 && outer_radius > inner_radius,
        };
        if !ok {
            return Err(Error::Config(format!("invalid primitive radii: {self:?}")));
        }
        if !(self.eps_r() > 1.0 && self.eps_r().is_finite()) {
            return Err(Error::Config(format!(
                "primitive permittivity must exceed 1, got {}",
                self.eps_r()
            )));
        }
        Ok(())
    }
}

/// Piecewise-homogeneous scene in a vacuum background. Later primitives
/// overwrite earlier ones where they overlap.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub primitives: Vec<Primitive>,
}

impl SceneSpec {
    /// Foam cylinder (d = 80 mm, ε_R = 1.45) with a plastic rod
    /// (d = 31 mm, ε_R = 3) touching it on the −x side.
    pub fn foam_diel_ext() -> Self {
        Self {
            primitives: vec![
                Primitive::Circle {
                    center: [0.0, 0.0],
                    radius: 0.040,
                    eps_r: 1.45,
                },
                Primitive::Circle {
                    center: [-0.0555, 0.0],
                    radius: 0.0155,
                    eps_r: 3.0,
                },
            ],
        }
    }

    /// Same foam cylinder with the plastic rod embedded, offset 5 mm along −x.
    pub fn foam_diel_int() -> Self {
        Self {
            primitives: vec![
                Primitive::Circle {
                    center: [0.0, 0.0],
                    radius: 0.040,
                    eps_r: 1.45,
                },
                Primitive::Circle {
                    center: [-0.005, 0.0],
                    radius: 0.0155,
                    eps_r: 3.0,
                },
            ],
        }
    }

    /// Checks every primitive and that each lies entirely within `grid`.
    pub fn validate_against(&self, grid: &ImagingGrid) -> Result<()> {
        for (i, prim) in self.primitives.iter().enumerate() {
            prim.validate()?;
            let (c, r) = prim.bounding_radius();
            let gc = grid.center();
            if (c.x - gc.x).abs() + r > 0.5 * grid.extent_x()
                || (c.y - gc.y).abs() + r > 0.5 * grid.extent_y()
            {
                return Err(Error::Config(format!(
                    "primitive {i} extends outside the imaging grid"
                )));
            }
        }
        Ok(())
    }
}

/// Samples `scene` at the cell centres of `grid`.
pub fn rasterize(scene: &SceneSpec, grid: &ImagingGrid) -> Result<ContrastMap> {
    scene.validate_against(grid)?;
    let values = grid
        .cell_centers()
        .iter()
        .map(|c| {
            let eps = scene
                .primitives
                .iter()
                .rev()
                .find(|p| p.contains(c))
                .map_or(1.0, Primitive::eps_r);
            Complex64::new(eps - 1.0, 0.0)
        })
        .collect();
    ContrastMap::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_rectangular_cells() {
        assert!(ImagingGrid::new(10, 10, 0.1, 0.2).is_err());
        assert!(ImagingGrid::new(10, 20, 0.1, 0.2).is_ok());
        assert!(ImagingGrid::new(0, 20, 0.1, 0.2).is_err());
    }

    #[test]
    fn cell_centers_are_strictly_inside() {
        let g = ImagingGrid::with_center(7, 5, 0.7, 0.5, Point2::new(0.2, -0.1)).unwrap();
        assert!((g.cell_size() - 0.1).abs() < 1e-15);
        for c in g.cell_centers() {
            assert!((c.x - 0.2).abs() < 0.35 && (c.y + 0.1).abs() < 0.25);
        }
        assert_eq!(g.cell_centers()[g.index(3, 2)], Point2::new(0.2, -0.1));
    }

    #[test]
    fn sensors_inside_domain_are_rejected() {
        let g = ImagingGrid::square(4, 0.2).unwrap();
        let bad = SensorArray::new(vec![Point2::new(0.05, 0.0)], vec![Point2::new(1.0, 0.0)]).unwrap();
        assert!(matches!(bad.validate_against(&g), Err(Error::Geometry(_))));
        let good = SensorArray::ring(1.0, 4, 16).unwrap();
        good.validate_against(&g).unwrap();
        assert!(SensorArray::new(vec![], vec![Point2::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn fresnel_layout() {
        let s = fresnel_geometry();
        assert_eq!(s.n_tx(), 8);
        for p in 0..8 {
            assert_eq!(s.rx_count(p), 241);
        }
        for pos in s.tx_positions().iter().chain(s.rx_positions()) {
            assert!((pos.norm() - 1.67).abs() < 1e-12);
        }
        assert_eq!(s.tx_positions()[0], Point2::new(1.67, 0.0));
        let (groups, group_of) = s.receiver_groups();
        assert_eq!(groups.len(), 8);
        assert_eq!(group_of, (0..8).collect::<Vec<_>>());
        // Transmitter 0 never sees the station at its own position.
        assert!(!s.receivers_of(0).contains(&0));
        assert_eq!(s.receivers_of(0)[0], 60);
        assert_eq!(fresnel_receiver_angles(1)[0], 105.0);
    }

    #[test]
    fn frequency_set_validation() {
        assert!(FrequencySet::new(vec![]).is_err());
        assert!(FrequencySet::new(vec![2e9, 2e9]).is_err());
        assert!(FrequencySet::new(vec![-1.0]).is_err());
        let f = FrequencySet::new(vec![3e9]).unwrap();
        assert!((f.wavelength(0) - 0.099_930_819).abs() < 1e-8);
    }

    #[test]
    fn empty_scene_rasterizes_to_zero() {
        let g = ImagingGrid::square(9, 0.3).unwrap();
        let chi = rasterize(&SceneSpec::default(), &g).unwrap();
        assert!(chi.values().iter().all(|c| *c == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn primitive_outside_grid_is_rejected() {
        let g = ImagingGrid::square(10, 0.1).unwrap();
        let scene = SceneSpec {
            primitives: vec![Primitive::Circle {
                center: [0.04, 0.0],
                radius: 0.02,
                eps_r: 2.0,
            }],
        };
        assert!(matches!(rasterize(&scene, &g), Err(Error::Config(_))));
        let low = SceneSpec {
            primitives: vec![Primitive::Circle {
                center: [0.0, 0.0],
                radius: 0.02,
                eps_r: 0.9,
            }],
        };
        assert!(rasterize(&low, &g).is_err());
    }

    #[test]
    fn foam_diel_ext_layout() {
        let g = ImagingGrid::square(64, 0.16).unwrap();
        let chi = rasterize(&SceneSpec::foam_diel_ext(), &g).unwrap();
        let eps = chi.permittivity();
        let at = |x: f64, y: f64| {
            let ix = ((x + 0.08) / g.cell_size()).floor() as usize;
            let iy = ((y + 0.08) / g.cell_size()).floor() as usize;
            eps[g.index(ix, iy)]
        };
        assert!((at(0.001, 0.001) - 1.45).abs() < 1e-12);
        assert!((at(-0.055, 0.001) - 3.0).abs() < 1e-12);
        assert!((at(0.06, 0.001) - 1.0).abs() < 1e-12);
        assert!((at(0.0, 0.06) - 1.0).abs() < 1e-12);
        assert!(chi.values().iter().all(|c| c.im == 0.0));
    }

    #[test]
    fn annulus_and_overwrite_order() {
        let g = ImagingGrid::square(40, 0.2).unwrap();
        let scene = SceneSpec {
            primitives: vec![
                Primitive::Annulus {
                    center: [0.0, 0.0],
                    inner_radius: 0.03,
                    outer_radius: 0.06,
                    eps_r: 2.0,
                },
                Primitive::Circle {
                    center: [0.045, 0.0],
                    radius: 0.01,
                    eps_r: 4.0,
                },
            ],
        };
        let chi = rasterize(&scene, &g).unwrap();
        let eps = chi.permittivity();
        let at = |x: f64, y: f64| {
            let ix = ((x + 0.1) / g.cell_size()).floor() as usize;
            let iy = ((y + 0.1) / g.cell_size()).floor() as usize;
            eps[g.index(ix, iy)]
        };
        assert_eq!(at(0.0025, 0.0025), 1.0);
        assert_eq!(at(0.0, 0.0425), 2.0);
        assert_eq!(at(0.0475, 0.0025), 4.0);
    }
}
