//! Plain SVG plots of the workspace, predicate regions and trajectories.

use std::fmt::Write;

use crate::scenario::PredicateSpec;

const SIZE: f64 = 640.0;
const PAD: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const FILLS: [&str; 6] = ["#a6cee3", "#fb9a99", "#b2df8a", "#cab2d6", "#fdbf6f", "#ffff99"];

/// One planar trajectory with its sample times.
#[derive(Debug, Clone)]
pub struct Track {
    pub label: String,
    pub times: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

/// Axis-aligned view box in workspace coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl View {
    /// Square box around the predicates and tracks with a one-unit margin.
    pub fn fit(preds: &[PredicateSpec], tracks: &[Track]) -> View {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut grow = |p: [f64; 2]| {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        };
        for p in preds {
            match p {
                PredicateSpec::Disk { center, radius, .. } if center.len() >= 2 => {
                    grow([center[0] - radius, center[1] - radius]);
                    grow([center[0] + radius, center[1] + radius]);
                }
                PredicateSpec::Rect { lo, hi, .. } if lo.len() >= 2 => {
                    grow([lo[0], lo[1]]);
                    grow([hi[0], hi[1]]);
                }
                _ => {}
            }
        }
        for t in tracks {
            t.points.iter().for_each(|&p| grow(p));
        }
        if !lo[0].is_finite() {
            return View { lo: [-1.0, -1.0], hi: [1.0, 1.0] };
        }
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]) + 2.0;
        let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        View { lo: [mid[0] - side / 2.0, mid[1] - side / 2.0], hi: [mid[0] + side / 2.0, mid[1] + side / 2.0] }
    }

    fn scale(&self) -> f64 {
        (SIZE - 2.0 * PAD) / (self.hi[0] - self.lo[0]).max(self.hi[1] - self.lo[1])
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let s = self.scale();
        (PAD + (p[0] - self.lo[0]) * s, SIZE - PAD - (p[1] - self.lo[1]) * s)
    }
}

/// Renders regions, tracks and time markers every `snapshot` seconds.
pub fn render(title: &str, preds: &[PredicateSpec], tracks: &[Track], snapshot: f64) -> String {
    let view = View::fit(preds, tracks);
    let s = view.scale();
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{PAD}" y="24" font-size="16">{}</text>"#, escape(title));
    let (x0, y0) = view.px(view.lo);
    let (x1, y1) = view.px(view.hi);
    let _ = writeln!(out, r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="gray"/>"#, x1 - x0, y0 - y1);
    for (k, x) in [(0, view.lo[0]), (1, view.hi[0])] {
        let (px, _) = view.px([x, view.lo[1]]);
        let anchor = if k == 0 { "start" } else { "end" };
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{:.2}" font-size="11" text-anchor="{anchor}">{x:.1}</text>"#, y0 + 14.0);
    }
    for y in [view.lo[1], view.hi[1]] {
        let (_, py) = view.px([view.lo[0], y]);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{py:.2}" font-size="11" text-anchor="end">{y:.1}</text>"#, x0 - 4.0);
    }

    for (i, p) in preds.iter().enumerate() {
        let fill = FILLS[i % FILLS.len()];
        let name = escape(p.name());
        match p {
            PredicateSpec::Disk { center, radius, .. } if center.len() >= 2 => {
                let (cx, cy) = view.px([center[0], center[1]]);
                let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="{fill}" fill-opacity="0.6" stroke="dimgray"/>"#, radius * s);
                let _ = writeln!(out, r#"<text x="{cx:.2}" y="{cy:.2}" font-size="12" text-anchor="middle">{name}</text>"#);
            }
            PredicateSpec::Rect { lo, hi, .. } if lo.len() >= 2 => {
                let (ax, ay) = view.px([lo[0], hi[1]]);
                let (bx, by) = view.px([hi[0], lo[1]]);
                let _ = writeln!(
                    out,
                    r#"<rect x="{ax:.2}" y="{ay:.2}" width="{:.2}" height="{:.2}" fill="{fill}" fill-opacity="0.6" stroke="dimgray"/>"#,
                    bx - ax,
                    by - ay
                );
                let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{name}</text>"#, (ax + bx) / 2.0, (ay + by) / 2.0);
            }
            PredicateSpec::HalfPlane { normal, offset, .. } if normal.len() >= 2 => {
                if let Some((a, b)) = boundary_segment(&view, [normal[0], normal[1]], *offset) {
                    let (ax, ay) = view.px(a);
                    let (bx, by) = view.px(b);
                    let _ = writeln!(out, r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="dimgray" stroke-dasharray="6 4"/>"#);
                    let _ = writeln!(out, r#"<text x="{ax:.2}" y="{ay:.2}" font-size="12">{name}</text>"#);
                }
            }
            _ => {}
        }
    }

    for (i, t) in tracks.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = t.points.iter().map(|&p| {
            let (x, y) = view.px(p);
            format!("{x:.2},{y:.2}")
        }).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        if let Some(&first) = t.points.first() {
            let (x, y) = view.px(first);
            let _ = writeln!(out, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#, x - 4.0, y - 4.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">{}</text>"#, x + 6.0, y - 6.0, escape(&t.label));
        }
        if snapshot > 0.0 {
            let mut next = snapshot;
            for (&time, &p) in t.times.iter().zip(&t.points) {
                if time + 1e-9 >= next {
                    let (x, y) = view.px(p);
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="{color}">t={next}</text>"#, x + 4.0, y + 12.0);
                    next += snapshot;
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Part of `{x : n . x = offset}` inside the view.
fn boundary_segment(view: &View, n: [f64; 2], offset: f64) -> Option<([f64; 2], [f64; 2])> {
    let mut hits = Vec::new();
    for x in [view.lo[0], view.hi[0]] {
        if n[1] != 0.0 {
            let y = (offset - n[0] * x) / n[1];
            if y >= view.lo[1] && y <= view.hi[1] {
                hits.push([x, y]);
            }
        }
    }
    for y in [view.lo[1], view.hi[1]] {
        if n[0] != 0.0 {
            let x = (offset - n[1] * y) / n[0];
            if x >= view.lo[0] && x <= view.hi[0] {
                hits.push([x, y]);
            }
        }
    }
    (hits.len() >= 2).then(|| (hits[0], hits[hits.len() - 1]))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
