//! Parses an NGSIM-style table (feet, 10 Hz), converts to meters and
//! downsamples to 5 Hz.

use epn::data::{parse_track_str, resample_aligned, TableSchema};

fn main() -> epn::Result<()> {
    let mut table = String::from("Vehicle_ID Frame_ID Local_X Local_Y v_Vel v_Acc Lane_ID v_Class\n");
    for vid in [7, 8] {
        for frame in 100..130 {
            let y = 300.0 + 40.0 * vid as f64 + 6.5 * (frame - 100) as f64;
            table.push_str(&format!("{vid} {frame} {:.2} {y:.2} 65.0 0.0 2 2\n", 18.0 + 0.1 * vid as f64));
        }
    }
    let tracks = parse_track_str(&table, TableSchema::Ngsim, None)?;
    let hz = TableSchema::Ngsim.native_hz().expect("fixed rate");
    for t in &tracks {
        let r = resample_aligned(t, hz, 5.0)?;
        let (a, b) = (r.frames[0], r.frames[1]);
        println!(
            "vehicle {}: {} frames at {hz} Hz -> {} at 5 Hz, first step {:.3} m in {:.1} s",
            t.vehicle_id,
            t.len(),
            r.len(),
            b.y - a.y,
            b.timestamp - a.timestamp
        );
    }
    Ok(())
}
