use super::track::VehicleTrack;
use crate::error::{EpnError, Result};

pub const TARGET_HZ: f64 = 5.0;

/// Integer decimation factor between two rates.
pub fn stride_for(source_hz: f64, target_hz: f64) -> Result<usize> {
    let err = || EpnError::UnsupportedRate { source_hz, target_hz };
    if !(source_hz > 0.0 && target_hz > 0.0) || target_hz > source_hz {
        return Err(err());
    }
    let ratio = source_hz / target_hz;
    let stride = ratio.round();
    if (ratio - stride).abs() > 1e-9 {
        return Err(err());
    }
    Ok(stride as usize)
}

/// Keeps every `source_hz / target_hz`-th frame, starting at frame 0.
pub fn resample_track(track: &VehicleTrack, source_hz: f64, target_hz: f64) -> Result<VehicleTrack> {
    let stride = stride_for(source_hz, target_hz)?;
    let mut out = track.clone();
    out.frames = track.frames.iter().step_by(stride).copied().collect();
    Ok(out)
}

/// Drops leading frames until the first timestamp lies on the global
/// `target_hz` clock, then resamples. Tracks recorded by the same sensor stay
/// mutually aligned after decimation.
pub fn resample_aligned(track: &VehicleTrack, source_hz: f64, target_hz: f64) -> Result<VehicleTrack> {
    stride_for(source_hz, target_hz)?;
    let on_clock = |t: f64| {
        let k = t * target_hz;
        (k - k.round()).abs() < 1e-6
    };
    let first = track.frames.iter().position(|f| on_clock(f.timestamp)).unwrap_or(track.frames.len());
    let mut trimmed = track.clone();
    trimmed.frames.drain(..first);
    resample_track(&trimmed, source_hz, target_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::track::Frame;

    fn track(hz: f64, n: usize) -> VehicleTrack {
        VehicleTrack::new(
            1,
            (0..n)
                .map(|i| Frame { timestamp: i as f64 / hz, x: 0.0, y: i as f64, v: 1.0, a: 0.0, lane_id: None })
                .collect(),
        )
    }

    #[test]
    fn highd_rate_200_frames_to_40() {
        let r = resample_track(&track(25.0, 200), 25.0, 5.0).unwrap();
        assert_eq!(r.frames.len(), 40);
        assert_eq!(r.frames[1].y, 5.0);
        for w in r.frames.windows(2) {
            assert!((w[1].timestamp - w[0].timestamp - 0.2).abs() < 1e-9);
        }
    }

    #[test]
    fn ngsim_rate_80_frames_to_40() {
        assert_eq!(resample_track(&track(10.0, 80), 10.0, 5.0).unwrap().frames.len(), 40);
    }

    #[test]
    fn same_rate_is_identity() {
        let t = track(5.0, 17);
        assert_eq!(resample_track(&t, 5.0, 5.0).unwrap(), t);
    }

    #[test]
    fn non_integer_ratio_rejected() {
        assert!(matches!(resample_track(&track(12.0, 10), 12.0, 5.0), Err(EpnError::UnsupportedRate { .. })));
        assert!(matches!(stride_for(5.0, 10.0), Err(EpnError::UnsupportedRate { .. })));
    }

    #[test]
    fn aligned_resampling_starts_on_the_clock() {
        let mut t = track(25.0, 30);
        t.frames.drain(..3);
        let r = resample_aligned(&t, 25.0, 5.0).unwrap();
        assert!((r.frames[0].timestamp - 0.2).abs() < 1e-12);
        assert_eq!(r.frames.len(), 5);
    }
}
