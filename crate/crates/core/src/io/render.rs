//! PNG heatmaps and CSV traces.
//!
//! Heatmaps use a linear viridis-like scale between the map's minimum and
//! maximum, with a vertical colour bar on the right (maximum at the top).
//! The numeric range is stored in PNG `tEXt` chunks (`Title`, `min`, `max`).
//! The y axis points up: the top image row holds the last grid row.

use std::fmt::Write as _;
use std::io::BufWriter;
use std::path::Path;

use crate::domain::ContrastMap;
use crate::inversion::CostBreakdown;
use crate::linalg::KpMap;
use crate::{Complex64, Error, Result};

const ANCHORS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [72.0, 40.0, 120.0],
    [62.0, 74.0, 137.0],
    [49.0, 104.0, 142.0],
    [38.0, 130.0, 142.0],
    [31.0, 158.0, 137.0],
    [53.0, 183.0, 121.0],
    [110.0, 206.0, 88.0],
    [253.0, 231.0, 37.0],
];

/// Colour for `t` in [0, 1].
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (ANCHORS.len() - 1) as f64;
    let i = (x.floor() as usize).min(ANCHORS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (ANCHORS[i], ANCHORS[i + 1]);
    [0, 1, 2].map(|c| (a[c] + f * (b[c] - a[c])).round() as u8)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Pixels per grid cell along each axis.
    pub scale: u32,
    /// Colour bar width in cells.
    pub bar_cells: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { scale: 8, bar_cells: 2 }
    }
}

/// Raw RGB image plus the range it encodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
    pub min: f64,
    pub max: f64,
    pub title: String,
}

impl Heatmap {
    /// Pixel at `(x, y)` in image coordinates (origin top-left).
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y * self.width + x) as usize;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Top-left pixel of grid cell `(ix, iy)`.
    pub fn cell_pixel(&self, ix: usize, iy: usize, options: &RenderOptions) -> [u8; 3] {
        let rows = self.height / options.scale;
        self.pixel(ix as u32 * options.scale, (rows - 1 - iy as u32) * options.scale)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let png_err = |e: png::EncodingError| Error::Data(format!("{}: {e}", path.display()));
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("Title".into(), self.title.clone()).map_err(png_err)?;
        enc.add_text_chunk("min".into(), format!("{:.6e}", self.min)).map_err(png_err)?;
        enc.add_text_chunk("max".into(), format!("{:.6e}", self.max)).map_err(png_err)?;
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&self.rgb).map_err(png_err)?;
        writer.finish().map_err(png_err)
    }
}

/// Renders row-major values (`iy * nx + ix`). Non-finite values take the
/// minimum colour. A constant map yields a single-colour image.
pub fn heatmap(values: &[f64], nx: usize, ny: usize, title: &str, options: &RenderOptions) -> Result<Heatmap> {
    if nx == 0 || ny == 0 || values.len() != nx * ny {
        return Err(Error::Data(format!("map of {} values does not fit {nx}x{ny}", values.len())));
    }
    if options.scale == 0 {
        return Err(Error::Config("render scale must be at least 1".into()));
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let min = finite.clone().fold(f64::INFINITY, f64::min);
    let max = finite.fold(f64::NEG_INFINITY, f64::max);
    let (min, max) = if min.is_finite() { (min, max) } else { (0.0, 0.0) };
    let constant = max <= min;
    if constant {
        log::warn!("{title}: map is constant ({min}); rendering a single colour");
    }
    let t = |v: f64| if constant { 0.0 } else { (v - min) / (max - min) };

    let s = options.scale as usize;
    let map_w = nx * s;
    let bar_w = options.bar_cells as usize * s;
    let (width, height) = (map_w + bar_w, ny * s);
    let mut rgb = vec![0u8; 3 * width * height];
    for row in 0..height {
        let iy = ny - 1 - row / s;
        for col in 0..width {
            let colour = if col < map_w {
                colormap(t(values[iy * nx + col / s]))
            } else if constant {
                colormap(0.0)
            } else {
                colormap(1.0 - row as f64 / (height - 1).max(1) as f64)
            };
            let i = 3 * (row * width + col);
            rgb[i..i + 3].copy_from_slice(&colour);
        }
    }
    Ok(Heatmap {
        width: width as u32,
        height: height as u32,
        rgb,
        min,
        max,
        title: title.into(),
    })
}

/// Heatmap of the relative permittivity `1 + Re χ`.
pub fn permittivity_heatmap(chi: &ContrastMap, options: &RenderOptions) -> Result<Heatmap> {
    heatmap(&chi.permittivity(), chi.nx(), chi.ny(), "relative permittivity", options)
}

/// One CSV row per outer iteration: cost terms, NSE when available, and
/// `|λ|` and phase (degrees) for every `(k, p)`.
pub fn trace_csv(costs: &[CostBreakdown], lambdas: &[KpMap<Complex64>], nse: &[f64]) -> Result<String> {
    if lambdas.len() != costs.len() || !(nse.is_empty() || nse.len() == costs.len()) {
        return Err(Error::Data("trace columns have different lengths".into()));
    }
    let mut s = String::from("iteration,total,data_term,state_term,calib_term,reg_term");
    if !nse.is_empty() {
        s.push_str(",nse");
    }
    if let Some(first) = lambdas.first() {
        for ((k, p), _) in first.iter() {
            write!(s, ",lambda_abs_k{k}_p{p},lambda_phase_deg_k{k}_p{p}").expect("writing to a String");
        }
    }
    s.push('\n');
    for (i, c) in costs.iter().enumerate() {
        write!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            i + 1,
            c.total,
            c.data_term,
            c.state_term,
            c.calib_term,
            c.reg_term
        )
        .expect("writing to a String");
        if let Some(v) = nse.get(i) {
            write!(s, ",{v:.16e}").expect("writing to a String");
        }
        for l in lambdas[i].values() {
            write!(s, ",{:.16e},{:.16e}", l.norm(), l.arg().to_degrees()).expect("writing to a String");
        }
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{rasterize, ImagingGrid, Primitive, SceneSpec};

    #[test]
    fn colormap_is_monotone_in_brightness() {
        let lum = |c: [u8; 3]| 0.2126 * c[0] as f64 + 0.7152 * c[1] as f64 + 0.0722 * c[2] as f64;
        let samples: Vec<f64> = (0..=20).map(|i| lum(colormap(i as f64 / 20.0))).collect();
        assert!(samples.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn constant_map_is_one_colour() {
        let h = heatmap(&[2.5; 12], 4, 3, "c", &RenderOptions::default()).unwrap();
        let first = h.pixel(0, 0);
        assert!(h.rgb.chunks(3).all(|p| p == first));
        assert_eq!((h.min, h.max), (2.5, 2.5));
    }

    #[test]
    fn two_disks_are_distinct_at_their_centres() {
        let grid = ImagingGrid::square(32, 0.15).unwrap();
        let scene = SceneSpec {
            primitives: vec![
                Primitive::Circle { center: [-0.04, 0.0], radius: 0.02, eps_r: 1.5 },
                Primitive::Circle { center: [0.04, 0.03], radius: 0.02, eps_r: 3.0 },
            ],
        };
        let chi = rasterize(&scene, &grid).unwrap();
        let opts = RenderOptions::default();
        let h = permittivity_heatmap(&chi, &opts).unwrap();
        let cell = |x: f64, y: f64| {
            let d = grid.cell_size();
            let ix = ((x + 0.075) / d) as usize;
            let iy = ((y + 0.075) / d) as usize;
            h.cell_pixel(ix, iy, &opts)
        };
        let (a, b, bg) = (cell(-0.04, 0.0), cell(0.04, 0.03), cell(0.06, -0.06));
        assert_eq!(b, colormap(1.0));
        assert_eq!(bg, colormap(0.0));
        assert_eq!(a, colormap(0.25));
        // y up: the disk at positive y appears in the upper half.
        let row_of_b = (0..h.height).find(|&y| h.pixel(h.width / 2 + 60, y) == colormap(1.0));
        assert!(row_of_b.unwrap() < h.height / 2);
    }

    #[test]
    fn png_carries_range_annotations() {
        let h = heatmap(&[1.0, 2.0, 3.0, 4.0], 2, 2, "eps", &RenderOptions { scale: 3, bar_cells: 1 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        h.write_png(&path).unwrap();
        let file = std::io::BufReader::new(std::fs::File::open(&path).unwrap());
        let mut reader = png::Decoder::new(file).read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        reader.next_frame(&mut buf).unwrap();
        assert_eq!(buf, h.rgb);
        let text = &reader.info().uncompressed_latin1_text;
        let get = |k: &str| text.iter().find(|c| c.keyword == k).map(|c| c.text.clone());
        assert_eq!(get("min").unwrap().parse::<f64>().unwrap(), 1.0);
        assert_eq!(get("max").unwrap().parse::<f64>().unwrap(), 4.0);
    }

    #[test]
    fn trace_has_one_row_per_iteration() {
        let costs = vec![CostBreakdown::default(); 5];
        let lambdas = vec![KpMap::from_fn(2, 3, |_, _| Complex64::new(0.0, 2.0)); 5];
        let csv = trace_csv(&costs, &lambdas, &[0.1; 5]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0].split(',').count(), 7 + 12);
        assert!(lines[5].starts_with("5,"));
        let fields: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields[7], 2.0);
        assert!((fields[8] - 90.0).abs() < 1e-12);
        assert!(trace_csv(&costs, &lambdas[..4], &[]).is_err());
    }
}
