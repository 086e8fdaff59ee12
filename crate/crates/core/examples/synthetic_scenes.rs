//! Generates a synthetic highway, cuts scene windows and writes an archive.
//!
//! cargo run --release --example synthetic_scenes -- [out.json]

use epn::data::{generate_synthetic, prepare_scenes, ArchiveHeader, SceneArchive, SyntheticConfig, WindowConfig};

fn main() -> epn::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "scenes.json".into());
    let synth = SyntheticConfig { num_scenes: 40, seed: 7, ..Default::default() };
    let tracks = generate_synthetic(&synth)?;
    let window = WindowConfig::default();
    let split = prepare_scenes(&tracks, synth.hz, &window, 42)?;
    let (tr, va, te) = split.counts();
    println!("{} tracks -> {tr} train / {va} val / {te} test windows", tracks.len());

    let w = &split.train[0];
    println!(
        "window {}: target {} ego {} with {} neighbors, history {} steps, future {} steps",
        w.window_id,
        w.target_id,
        w.ego_id,
        w.neighbors.len(),
        w.target.states.len(),
        w.future.len()
    );
    let header = ArchiveHeader::new(window.th, window.tf, window.hz, window.grid);
    SceneArchive { header, split }.save(out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
