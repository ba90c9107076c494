//! Experiment orchestration: hop sweeps over the best device paths, the
//! idle-decay experiment, synthetic devices and SVG charts.

mod decay;
mod device_gen;
mod plot;
mod results;
mod sweep;

pub use decay::{crossing_time, run_decay, summarize_decay, write_decay_csv, DecayRow, DecaySpec, DecaySummary, Delays};
pub use device_gen::{generate_device, DeviceGenSpec};
pub use plot::{aggregate, render_decay_svg, render_svg, SeriesPoint, SeriesStats};
pub use results::{read_results, write_results, ResultRow, CSV_HEADER_COMMENT};
pub use sweep::{device_path_noise, run_experiment, ExperimentSpec, HopRange, QremSetting};
