//! Occupancy grid and social tensor around one target.

use std::collections::HashMap;

use epn::data::{generate_synthetic, prepare_scenes, SyntheticConfig, WindowConfig};
use epn::geometry::{build_occupancy_mask, ego_cell, scatter_social_tensor, to_target_frame, GridSpec};

fn main() -> epn::Result<()> {
    let synth = SyntheticConfig { num_scenes: 3, vehicles_per_scene: 9, seed: 5, ..Default::default() };
    let split = prepare_scenes(&generate_synthetic(&synth)?, synth.hz, &WindowConfig::default(), 1)?;
    let window = split.all().max_by_key(|w| w.neighbors.len()).expect("windows");
    let framed = to_target_frame(window);
    let grid = GridSpec::default();
    let occ = build_occupancy_mask(&framed, &grid);

    println!("window {} (target {}, ego {})", window.window_id, window.target_id, window.ego_id);
    for i in (0..grid.rows).rev() {
        let row: String = (0..grid.cols)
            .map(|j| if i == grid.rows / 2 && j == grid.cols / 2 { 'T' } else if occ.mask.get(i, j) == 1 { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }
    print!("{}", occ.listing());
    println!("ego cell: {:?}", ego_cell(&framed, &grid));

    let features: HashMap<i64, Vec<f64>> = framed.neighbors.iter().map(|n| (n.vehicle_id, vec![n.vehicle_id as f64; 4])).collect();
    let t = scatter_social_tensor(&occ, &features, 4)?;
    println!("filled cells: {:?}", t.nonzero_cells());
    Ok(())
}
