//! File formats, run configuration and result persistence.

pub mod bundle;
pub mod config;
pub mod fresnel;
pub mod record;
pub mod render;

pub use bundle::{DatasetBundle, FieldRecord, Manifest};
pub use config::Config;
pub use fresnel::{import_fresnel, ColumnMap, FresnelOptions};
pub use record::RunRecord;
pub use render::{heatmap, permittivity_heatmap, trace_csv, Heatmap, RenderOptions};
