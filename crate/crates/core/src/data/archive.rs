use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::split::DatasetSplit;
use crate::error::{EpnError, Result};
use crate::geometry::GridSpec;

pub const ARCHIVE_MAGIC: &str = "EPN-SCENES";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub magic: String,
    pub version: u32,
    pub th: usize,
    pub tf: usize,
    pub hz: f64,
    pub grid: GridSpec,
    /// Unit of every numeric field, keyed by field name.
    pub units: BTreeMap<String, String>,
    /// Free-text description of every record field.
    pub fields: BTreeMap<String, String>,
    /// Path of the run manifest that produced this archive, if any.
    #[serde(default)]
    pub manifest: Option<String>,
}

impl ArchiveHeader {
    pub fn new(th: usize, tf: usize, hz: f64, grid: GridSpec) -> Self {
        let units = [
            ("x", "m"),
            ("y", "m"),
            ("v", "m/s"),
            ("a", "m/s^2"),
            ("timestamp", "s"),
            ("ego_plan", "m"),
            ("grid.length", "m"),
            ("grid.width", "m"),
            ("hz", "1/s"),
        ];
        let fields = [
            ("window_id", "sequential id, sorted by (target_id, t_now)"),
            ("target_id", "vehicle whose future is predicted"),
            ("ego_id", "vehicle whose future positions serve as the planned trajectory"),
            ("t_now", "index of the present frame in the target's resampled track"),
            ("target.states", "th states (x lateral, y longitudinal, v, a), oldest first"),
            ("neighbors", "histories of every other vehicle inside the target grid at t_now, including the ego"),
            ("future", "tf future states of the target"),
            ("ego_plan", "tf future (x, y) positions of the ego"),
        ];
        Self {
            magic: ARCHIVE_MAGIC.into(),
            version: ARCHIVE_VERSION,
            th,
            tf,
            hz,
            grid,
            units: units.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            fields: fields.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            manifest: None,
        }
    }
}

/// Self-describing container of split scene windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneArchive {
    pub header: ArchiveHeader,
    pub split: DatasetSplit,
}

impl SceneArchive {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| EpnError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EpnError::io(path, e))?;
        let archive: SceneArchive = serde_json::from_str(&text)
            .map_err(|e| EpnError::Archive(format!("{}: not a scene archive ({e})", path.display())))?;
        if archive.header.magic != ARCHIVE_MAGIC {
            return Err(EpnError::Archive(format!("{}: bad magic `{}`", path.display(), archive.header.magic)));
        }
        if archive.header.version != ARCHIVE_VERSION {
            return Err(EpnError::Archive(format!("{}: unsupported version {}", path.display(), archive.header.version)));
        }
        for w in archive.split.all() {
            w.validate(archive.header.th, archive.header.tf)?;
        }
        Ok(archive)
    }
}
