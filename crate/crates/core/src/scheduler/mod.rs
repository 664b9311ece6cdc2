//! Lowering of a workload onto the accelerator: tiling into bank passes,
//! ECU events, dependencies, the three dataflow optimizations and a
//! functional replay that checks the result.

mod build;
pub mod replay;
pub mod tile;
pub mod timing;
pub mod trace;
mod transforms;
mod types;

pub use build::compile;
pub use replay::{replay_denoiser, replay_error, replay_reverse};
pub use tile::{tile_gemm, tile_ragged, TileSpec};
pub use timing::{activation_lane_latency, ecu_event_cost, evaluate, start_times};
pub use trace::{trace_csv, trace_records, TraceRecord, TRACE_HEADER};
pub use transforms::{apply_dac_sharing, apply_pipelining};
pub use types::*;
