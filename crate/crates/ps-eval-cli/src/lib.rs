//! Metrics, codecs, dataset I/O and the command-line surface of the
//! photometric-stereo toolkit.

mod cli;
mod color_table;
mod commands;
mod config;
mod dataset_dir;
mod error;
mod gradcheck_suite;
mod metrics;
mod pfm;
mod png_codec;
mod table;

pub use cli::{run_cli, Cli, Command, MethodArg, PrecisionArg};
pub use color_table::error_color_table;
pub use commands::{load_prediction, load_split, parse_subset};
pub use config::{EvalBlock, LightsConfig, RenderBlock, ToolkitConfig, CONFIG_VERSION};
pub use dataset_dir::{load_dataset, load_dataset_raw, save_dataset, scene_dirs};
pub use error::{EvalError, EvalResult};
pub use gradcheck_suite::{full_net_check, full_suite, layer_suite, module_check, SuiteItem};
pub use metrics::{error_map, eval_report, mae, ErrorMap, EvalReport, Percentiles};
pub use pfm::{read_pfm_normals, write_pfm_normals};
pub use png_codec::{
    load_image_png16, load_mask_png, load_normal_png, save_image_png16, save_mask_png,
    save_normal_png,
};
pub use table::{ablation_table, row_average};
