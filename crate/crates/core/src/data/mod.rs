//! Track ingestion, resampling, windowing, splitting and synthetic scenes.

pub mod archive;
pub mod parse;
pub mod resample;
pub mod split;
pub mod synthetic;
pub mod track;
pub mod window;

pub use archive::{ArchiveHeader, SceneArchive};
pub use parse::{parse_track_str, parse_track_table, TableSchema};
pub use resample::{resample_aligned, resample_track};
pub use split::{split_dataset, DatasetSplit};
pub use synthetic::{generate_synthetic, ManeuverMix, SyntheticConfig};
pub use track::{Frame, VehicleClass, VehicleTrack};
pub use window::{window_scenes, AgentHistory, SceneWindow, State, WindowConfig, FUTURE_STEPS, HISTORY_STEPS};

use crate::error::Result;

/// Resample (aligned to the global clock), window and split in one go.
pub fn prepare_scenes(
    tracks: &[VehicleTrack],
    source_hz: f64,
    window: &WindowConfig,
    seed: u64,
) -> Result<DatasetSplit> {
    let resampled = tracks
        .iter()
        .map(|t| resample_aligned(t, source_hz, window.hz))
        .collect::<Result<Vec<_>>>()?;
    let windows = window_scenes(&resampled, window);
    split_dataset(windows, (7, 1, 2), seed)
}
