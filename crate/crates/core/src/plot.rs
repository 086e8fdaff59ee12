//! Static SVG rendering of prediction records: longitudinal axis to the
//! right, lateral axis up. Output depends only on the record.

use std::fmt::Write as _;

use crate::predict::{PredictionEntry, PredictionRecord};

const WIDTH: f64 = 900.0;
const PANEL: f64 = 260.0;
const MARGIN: f64 = 40.0;
/// Minimum lateral extent shown, meters.
const MIN_LATERAL: f64 = 14.0;

pub const PALETTE: [&str; 8] = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#9a6324"];

struct Frame {
    y0: f64,
    y1: f64,
    x0: f64,
    x1: f64,
    top: f64,
}

impl Frame {
    fn fit(entry: &PredictionEntry, top: f64) -> Self {
        let mut pts: Vec<[f64; 2]> = entry.history.iter().chain(&entry.truth).copied().collect();
        for h in &entry.prediction.hypotheses {
            pts.extend(&h.trajectory);
        }
        for (_, n) in &entry.neighbors {
            pts.extend(n);
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in pts.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 0.0, 0.0, 1.0);
        }
        let mid = 0.5 * (x0 + x1);
        let half = (0.5 * (x1 - x0)).max(MIN_LATERAL / 2.0) * 1.1;
        let span = (y1 - y0).max(1.0);
        Self { y0: y0 - 0.03 * span, y1: y1 + 0.03 * span, x0: mid - half, x1: mid + half, top }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let u = MARGIN + (p[1] - self.y0) / (self.y1 - self.y0) * (WIDTH - 2.0 * MARGIN);
        let v = self.top + PANEL - MARGIN / 2.0 - (p[0] - self.x0) / (self.x1 - self.x0) * (PANEL - MARGIN);
        (u, v)
    }

    fn polyline(&self, s: &mut String, pts: &[[f64; 2]], style: &str) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (u, v) = self.map(p);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" {style} points="{}"/>"#, coords.join(" "));
    }

    fn dot(&self, s: &mut String, p: [f64; 2], r: f64, fill: &str) {
        let (u, v) = self.map(p);
        let _ = writeln!(s, r#"<circle cx="{u:.2}" cy="{v:.2}" r="{r}" fill="{fill}"/>"#);
    }
}

fn panel(s: &mut String, entry: &PredictionEntry, top: f64) {
    let f = Frame::fit(entry, top);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.2}" font-family="monospace" font-size="12">window {} target {} k={}</text>"#,
        top + 14.0,
        entry.prediction.window_id,
        entry.prediction.target_id,
        entry.prediction.hypotheses.len()
    );
    for (id, hist) in &entry.neighbors {
        let color = if *id == entry.ego_id { "#555555" } else { "#b0b0b0" };
        f.polyline(s, hist, &format!(r#"stroke="{color}" stroke-width="1.5""#));
        if let Some(&p) = hist.last() {
            f.dot(s, p, 3.0, color);
        }
    }
    for (i, h) in entry.prediction.hypotheses.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = vec![entry.prediction.origin];
        path.extend(&h.trajectory);
        f.polyline(s, &path, &format!(r#"class="hypothesis" stroke="{color}" stroke-width="1.5""#));
        f.dot(s, h.endpoint.refined, 2.5, color);
    }
    let mut truth = entry.history.last().copied().into_iter().collect::<Vec<_>>();
    truth.extend(&entry.truth);
    f.polyline(s, &truth, r##"stroke="#000000" stroke-width="2" stroke-dasharray="6 4""##);
    f.polyline(s, &entry.history, r##"stroke="#000000" stroke-width="2.5""##);
    if let Some(&p) = entry.history.last() {
        f.dot(s, p, 4.0, "#000000");
    }
}

/// One panel per entry, stacked vertically.
pub fn render_svg(record: &PredictionRecord) -> String {
    let height = PANEL * record.entries.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (i, e) in record.entries.iter().enumerate() {
        panel(&mut s, e, i as f64 * PANEL);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EndpointHypothesis;
    use crate::predict::{Hypothesis, PredictionSet};

    fn entry(k: usize, neighbors: bool) -> PredictionEntry {
        let traj = |dx: f64| (1..=25).map(|t| [dx, t as f64 * 5.0]).collect::<Vec<_>>();
        PredictionEntry {
            prediction: PredictionSet {
                window_id: 3,
                target_id: 1,
                origin: [0.0, 0.0],
                hypotheses: (0..k)
                    .map(|i| Hypothesis {
                        endpoint: EndpointHypothesis::new([i as f64, 125.0], [0.0, 0.0]),
                        displacements: vec![[0.0, 5.0]; 25],
                        trajectory: traj(i as f64 * 0.5),
                    })
                    .collect(),
            },
            history: (-14..=0).map(|t| [0.0, t as f64 * 5.0]).collect(),
            truth: traj(0.0),
            ego_id: 2,
            ego_plan: vec![],
            neighbors: if neighbors { vec![(2, vec![[0.0, -20.0], [0.0, -15.0]])] } else { vec![] },
        }
    }

    #[test]
    fn six_hypotheses_six_curves_and_deterministic() {
        let rec = PredictionRecord::new(6, 1, vec![entry(6, true)]);
        let a = render_svg(&rec);
        assert_eq!(a.matches(r#"class="hypothesis""#).count(), 6);
        assert_eq!(a, render_svg(&rec));
        assert!(a.starts_with("<svg"));
    }

    #[test]
    fn no_neighbors_no_grey_glyphs() {
        let rec = PredictionRecord::new(2, 1, vec![entry(2, false)]);
        let s = render_svg(&rec);
        assert!(!s.contains("#b0b0b0") && !s.contains("#555555"));
    }
}
