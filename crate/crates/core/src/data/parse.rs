//! Track-table ingestion.
//!
//! Supported column layouts (header names are matched case-insensitively):
//!
//! * `generic`: `vehicle_id,timestamp,x,y[,v][,a][,lane_id][,class]`, metric, seconds.
//! * `ngsim`: `Vehicle_ID`, `Global_Time` (ms) or `Frame_ID` (10 Hz), `Local_X`,
//!   `Local_Y`, optional `v_Vel`, `v_Acc`, `Lane_ID`, `v_Class`; feet and ft/s.
//! * `highd`: `id`, `frame` (25 Hz), `x`, `y`, optional `width`, `height`,
//!   `xVelocity`, `yVelocity`, `xAcceleration`, `laneId`. HighD's `x` runs along
//!   the road, so axes are swapped; vehicles travelling towards negative `x` are
//!   rotated by 180° so that increasing longitudinal position is always forward.
//!
//! The delimiter is sniffed from the header: comma, semicolon, tab, or runs of
//! whitespace.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::track::{Frame, VehicleClass, VehicleTrack};
use crate::error::{EpnError, Result};

pub const FEET_TO_METERS: f64 = 0.3048;
pub const NGSIM_HZ: f64 = 10.0;
pub const HIGHD_HZ: f64 = 25.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSchema {
    Ngsim,
    Highd,
    GenericCsv,
}

impl TableSchema {
    /// Native sampling rate, when the schema fixes one.
    pub fn native_hz(self) -> Option<f64> {
        match self {
            TableSchema::Ngsim => Some(NGSIM_HZ),
            TableSchema::Highd => Some(HIGHD_HZ),
            TableSchema::GenericCsv => None,
        }
    }
}

impl FromStr for TableSchema {
    type Err = EpnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ngsim" => Ok(TableSchema::Ngsim),
            "highd" => Ok(TableSchema::Highd),
            "generic" | "generic_csv" | "csv" => Ok(TableSchema::GenericCsv),
            other => Err(EpnError::Config(format!("unknown table schema `{other}`"))),
        }
    }
}

pub fn parse_track_table(path: &Path, schema: TableSchema) -> Result<Vec<VehicleTrack>> {
    let text = std::fs::read_to_string(path).map_err(|e| EpnError::io(path, e))?;
    parse_track_str(&text, schema, Some(path))
}

struct Table<'a> {
    columns: HashMap<String, usize>,
    path: Option<&'a Path>,
}

impl Table<'_> {
    fn require(&self, name: &str) -> Result<usize> {
        self.optional(name).ok_or_else(|| EpnError::Schema {
            column: name.to_string(),
            path: self.path.map(Path::to_path_buf),
        })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.columns.get(&name.to_ascii_lowercase()).copied()
    }
}

struct Row<'r> {
    fields: &'r csv::StringRecord,
    line: u64,
    path: Option<&'r Path>,
}

impl Row<'_> {
    fn num(&self, col: usize) -> Result<f64> {
        let raw = self.fields.get(col).unwrap_or("").trim();
        raw.parse::<f64>().map_err(|_| EpnError::Parse {
            path: self.path.map(Path::to_path_buf),
            line: self.line,
            message: format!("column {} is not a number: `{raw}`", col + 1),
        })
    }

    fn int(&self, col: usize) -> Result<i64> {
        let v = self.num(col)?;
        if v.fract() != 0.0 {
            return Err(EpnError::Parse {
                path: self.path.map(Path::to_path_buf),
                line: self.line,
                message: format!("column {} is not an integer: {v}", col + 1),
            });
        }
        Ok(v as i64)
    }

    fn opt_num(&self, col: Option<usize>) -> Result<Option<f64>> {
        col.map(|c| self.num(c)).transpose()
    }
}

fn sniff(header: &str) -> Option<u8> {
    [b',', b';', b'\t'].into_iter().find(|&d| header.as_bytes().contains(&d))
}

pub fn parse_track_str(text: &str, schema: TableSchema, path: Option<&Path>) -> Result<Vec<VehicleTrack>> {
    let header = text.lines().next().unwrap_or("");
    let normalized;
    let (body, delim) = match sniff(header) {
        Some(d) => (text, d),
        None => {
            normalized = text.lines().map(|l| l.split_whitespace().collect::<Vec<_>>().join("\t")).collect::<Vec<_>>().join("\n");
            (normalized.as_str(), b'\t')
        }
    };
    let mut reader = csv::ReaderBuilder::new().delimiter(delim).trim(csv::Trim::All).flexible(true).from_reader(body.as_bytes());
    let headers = reader.headers().map_err(|e| csv_err(e, path))?.clone();
    let table = Table {
        columns: headers.iter().enumerate().map(|(i, h)| (h.to_ascii_lowercase(), i)).collect(),
        path,
    };

    let mut rows: BTreeMap<i64, (VehicleClass, Vec<Frame>)> = BTreeMap::new();
    let derive_v: bool;
    let derive_a: bool;

    match schema {
        TableSchema::GenericCsv => {
            let id = table.require("vehicle_id")?;
            let ts = table.require("timestamp")?;
            let x = table.require("x")?;
            let y = table.require("y")?;
            let v = table.optional("v");
            let a = table.optional("a");
            let lane = table.optional("lane_id");
            let class = table.optional("class");
            derive_v = v.is_none();
            derive_a = a.is_none();
            for rec in reader.records() {
                let rec = rec.map_err(|e| csv_err(e, path))?;
                let row = Row { line: rec.position().map_or(0, |p| p.line()), fields: &rec, path };
                let vc = class.and_then(|c| rec.get(c)).map(parse_class).unwrap_or_default();
                let frame = Frame {
                    timestamp: row.num(ts)?,
                    x: row.num(x)?,
                    y: row.num(y)?,
                    v: row.opt_num(v)?.unwrap_or(0.0),
                    a: row.opt_num(a)?.unwrap_or(0.0),
                    lane_id: lane.map(|c| row.int(c)).transpose()?,
                };
                rows.entry(row.int(id)?).or_insert_with(|| (vc, Vec::new())).1.push(frame);
            }
        }
        TableSchema::Ngsim => {
            let id = table.require("vehicle_id")?;
            let time = table.optional("global_time");
            let frame_col = if time.is_none() { Some(table.require("frame_id")?) } else { table.optional("frame_id") };
            let x = table.require("local_x")?;
            let y = table.require("local_y")?;
            let v = table.optional("v_vel");
            let a = table.optional("v_acc");
            let lane = table.optional("lane_id");
            let class = table.optional("v_class");
            derive_v = v.is_none();
            derive_a = a.is_none();
            for rec in reader.records() {
                let rec = rec.map_err(|e| csv_err(e, path))?;
                let row = Row { line: rec.position().map_or(0, |p| p.line()), fields: &rec, path };
                let timestamp = match time {
                    Some(c) => row.num(c)? / 1000.0,
                    None => row.num(frame_col.expect("frame column"))? / NGSIM_HZ,
                };
                let vc = match class.map(|c| row.int(c)).transpose()? {
                    Some(2) => VehicleClass::Car,
                    Some(3) => VehicleClass::Truck,
                    Some(_) => VehicleClass::Other,
                    None => VehicleClass::Car,
                };
                let frame = Frame {
                    timestamp,
                    x: row.num(x)? * FEET_TO_METERS,
                    y: row.num(y)? * FEET_TO_METERS,
                    v: row.opt_num(v)?.map_or(0.0, |s| s * FEET_TO_METERS),
                    a: row.opt_num(a)?.map_or(0.0, |s| s * FEET_TO_METERS),
                    lane_id: lane.map(|c| row.int(c)).transpose()?,
                };
                rows.entry(row.int(id)?).or_insert_with(|| (vc, Vec::new())).1.push(frame);
            }
        }
        TableSchema::Highd => {
            let id = table.require("id")?;
            let frame_col = table.require("frame")?;
            let x = table.require("x")?;
            let y = table.require("y")?;
            let width = table.optional("width");
            let height = table.optional("height");
            let xv = table.optional("xvelocity");
            let yv = table.optional("yvelocity");
            let xa = table.optional("xacceleration");
            let lane = table.optional("laneid");
            derive_v = xv.is_none();
            derive_a = xa.is_none();
            // (longitudinal, lateral, speed, long. accel, raw x-velocity)
            let mut raw: BTreeMap<i64, Vec<(Frame, f64)>> = BTreeMap::new();
            for rec in reader.records() {
                let rec = rec.map_err(|e| csv_err(e, path))?;
                let row = Row { line: rec.position().map_or(0, |p| p.line()), fields: &rec, path };
                let cx = row.num(x)? + row.opt_num(width)?.unwrap_or(0.0) / 2.0;
                let cy = row.num(y)? + row.opt_num(height)?.unwrap_or(0.0) / 2.0;
                let vx = row.opt_num(xv)?.unwrap_or(0.0);
                let vy = row.opt_num(yv)?.unwrap_or(0.0);
                let frame = Frame {
                    timestamp: row.num(frame_col)? / HIGHD_HZ,
                    x: cy,
                    y: cx,
                    v: vx.hypot(vy),
                    a: row.opt_num(xa)?.unwrap_or(0.0),
                    lane_id: lane.map(|c| row.int(c)).transpose()?,
                };
                raw.entry(row.int(id)?).or_default().push((frame, vx));
            }
            for (vid, frames) in raw {
                let forward = match xv {
                    Some(_) => frames.iter().map(|(_, vx)| vx).sum::<f64>() >= 0.0,
                    None => frames.last().map(|(f, _)| f.y).unwrap_or(0.0) >= frames.first().map(|(f, _)| f.y).unwrap_or(0.0),
                };
                let sign = if forward { 1.0 } else { -1.0 };
                let fs = frames
                    .into_iter()
                    .map(|(mut f, _)| {
                        f.x *= sign;
                        f.y *= sign;
                        f.a *= sign;
                        f
                    })
                    .collect();
                rows.insert(vid, (VehicleClass::Car, fs));
            }
        }
    }

    let mut tracks = Vec::with_capacity(rows.len());
    for (vehicle_id, (vehicle_class, frames)) in rows {
        let mut track = VehicleTrack { vehicle_id, vehicle_class, frames, derived: Default::default() };
        for w in track.frames.windows(2) {
            if w[1].timestamp <= w[0].timestamp {
                return Err(EpnError::Data {
                    vehicle_id,
                    message: format!("non-monotonic timestamps ({} then {})", w[0].timestamp, w[1].timestamp),
                });
            }
        }
        if derive_v || derive_a {
            track.derive_channels(derive_v, derive_a);
        }
        track.validate()?;
        tracks.push(track);
    }
    Ok(tracks)
}

fn parse_class(s: &str) -> VehicleClass {
    match s.trim().to_ascii_lowercase().as_str() {
        "car" | "2" => VehicleClass::Car,
        "truck" | "3" => VehicleClass::Truck,
        _ => VehicleClass::Other,
    }
}

fn csv_err(e: csv::Error, path: Option<&Path>) -> EpnError {
    EpnError::Parse {
        path: path.map(PathBuf::from),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}
