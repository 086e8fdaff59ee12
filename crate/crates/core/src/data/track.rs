use serde::{Deserialize, Serialize};

use crate::error::{EpnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    #[default]
    Car,
    Truck,
    Other,
}

/// One sample of a vehicle's driving state. `x` is lateral, `y` longitudinal
/// (increasing in the direction of travel), all metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_id: Option<i64>,
}

/// Channels that were not present in the source table and were derived
/// by finite differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DerivedChannels {
    pub velocity: bool,
    pub acceleration: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleTrack {
    pub vehicle_id: i64,
    #[serde(default)]
    pub vehicle_class: VehicleClass,
    pub frames: Vec<Frame>,
    #[serde(default)]
    pub derived: DerivedChannels,
}

impl VehicleTrack {
    pub fn new(vehicle_id: i64, frames: Vec<Frame>) -> Self {
        Self { vehicle_id, vehicle_class: VehicleClass::Car, frames, derived: DerivedChannels::default() }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Strictly increasing timestamps and non-negative speeds.
    pub fn validate(&self) -> Result<()> {
        for w in self.frames.windows(2) {
            if w[1].timestamp <= w[0].timestamp {
                return Err(EpnError::Data {
                    vehicle_id: self.vehicle_id,
                    message: format!("timestamps not strictly increasing ({} then {})", w[0].timestamp, w[1].timestamp),
                });
            }
        }
        if let Some(f) = self.frames.iter().find(|f| !(f.v >= 0.0)) {
            return Err(EpnError::Data {
                vehicle_id: self.vehicle_id,
                message: format!("negative or non-finite speed {} at t={}", f.v, f.timestamp),
            });
        }
        Ok(())
    }

    /// Fills velocity and/or acceleration from first differences of position /
    /// velocity; the first frame copies the next one (forward fill).
    pub fn derive_channels(&mut self, velocity: bool, acceleration: bool) {
        let n = self.frames.len();
        if velocity {
            for i in 1..n {
                let (p, c) = (self.frames[i - 1], self.frames[i]);
                let dt = c.timestamp - p.timestamp;
                self.frames[i].v = (c.x - p.x).hypot(c.y - p.y) / dt;
            }
            if n > 1 {
                self.frames[0].v = self.frames[1].v;
            } else if n == 1 {
                self.frames[0].v = 0.0;
            }
            self.derived.velocity = true;
        }
        if acceleration {
            for i in (1..n).rev() {
                let (p, c) = (self.frames[i - 1], self.frames[i]);
                self.frames[i].a = (c.v - p.v) / (c.timestamp - p.timestamp);
            }
            if n > 1 {
                self.frames[0].a = self.frames[1].a;
            } else if n == 1 {
                self.frames[0].a = 0.0;
            }
            self.derived.acceleration = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: f64, y: f64) -> Frame {
        Frame { timestamp: t, x: 0.0, y, v: 0.0, a: 0.0, lane_id: None }
    }

    #[test]
    fn derives_velocity_and_acceleration_with_forward_fill() {
        let mut t = VehicleTrack::new(1, vec![frame(0.0, 0.0), frame(0.2, 2.0), frame(0.4, 5.0)]);
        t.derive_channels(true, true);
        let v: Vec<f64> = t.frames.iter().map(|f| f.v).collect();
        assert!((v[0] - 10.0).abs() < 1e-12 && (v[1] - 10.0).abs() < 1e-12 && (v[2] - 15.0).abs() < 1e-12);
        let a: Vec<f64> = t.frames.iter().map(|f| f.a).collect();
        assert!((a[2] - 25.0).abs() < 1e-9 && a[1].abs() < 1e-9 && a[0].abs() < 1e-9);
        assert!(t.derived.velocity && t.derived.acceleration);
    }

    #[test]
    fn validate_rejects_repeated_timestamp() {
        let t = VehicleTrack::new(7, vec![frame(0.0, 0.0), frame(0.0, 1.0)]);
        match t.validate() {
            Err(EpnError::Data { vehicle_id, .. }) => assert_eq!(vehicle_id, 7),
            other => panic!("expected data error, got {other:?}"),
        }
    }
}
