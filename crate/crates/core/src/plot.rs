//! Static SVG scatter of 2×2 covariances in cone coordinates with fitted
//! components drawn as curves. Two panels: `x` against `y`, and `z` against
//! `y`.

use std::fmt::Write as _;

use crate::dataset::GaussianDataset;
use crate::error::{GpcaError, Result};
use crate::geodesic::GeodesicSegment;
use crate::spd::{spd_to_cone, ConeCoords, SpdMatrix};

const PANEL: f64 = 360.0;
const MARGIN: f64 = 48.0;
const SAMPLES: usize = 200;
const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// A component drawn over the times `range`, clipped to its interval.
pub struct Curve<'a> {
    pub label: String,
    pub segment: &'a GeodesicSegment,
    pub range: (f64, f64),
}

impl<'a> Curve<'a> {
    /// Covers `times` padded by 10% of their spread on each side.
    pub fn spanning(label: impl Into<String>, segment: &'a GeodesicSegment, times: &[f64]) -> Self {
        let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        let pad = 0.1 * (hi - lo);
        Curve {
            label: label.into(),
            segment,
            range: (lo - pad, hi + pad),
        }
    }

    fn points(&self) -> Vec<ConeCoords> {
        let lo = self.segment.clip_time(self.range.0);
        let hi = self.segment.clip_time(self.range.1);
        (0..=SAMPLES)
            .filter_map(|i| {
                let t = lo + (hi - lo) * i as f64 / SAMPLES as f64;
                self.segment.eval(t).ok().and_then(|s| spd_to_cone(&s).ok())
            })
            .collect()
    }
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let pad = 0.05 * (hi - lo).max(1e-9);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn map(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo) * PANEL
    }
}

pub fn cone_plot_svg(
    dataset: &GaussianDataset,
    curves: &[Curve<'_>],
    barycenter: Option<&SpdMatrix>,
) -> Result<String> {
    if dataset.dim() != 2 {
        return Err(GpcaError::UnsupportedDimension(dataset.dim()));
    }
    let data = dataset.matrices().iter().map(spd_to_cone).collect::<Result<Vec<_>>>()?;
    let bary = barycenter.map(spd_to_cone).transpose()?;
    let lines: Vec<Vec<ConeCoords>> = curves.iter().map(Curve::points).collect();
    let all = || data.iter().chain(bary.iter()).chain(lines.iter().flatten());
    let ya = Axis::fit(all().map(|c| c.y));
    let panels = [
        ("x", Axis::fit(all().map(|c| c.x)), 0usize),
        ("z", Axis::fit(all().map(|c| c.z)), 1),
    ];
    let pick = |c: &ConeCoords, which: usize| if which == 0 { c.x } else { c.z };

    let width = 2.0 * (PANEL + 2.0 * MARGIN);
    let height = PANEL + 2.0 * MARGIN + 16.0 * curves.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (name, axis, which) in &panels {
        let ox = MARGIN + *which as f64 * (PANEL + 2.0 * MARGIN);
        let px = |c: &ConeCoords| ox + ya.map(c.y);
        let py = |c: &ConeCoords| MARGIN + PANEL - axis.map(pick(c, *which));
        let _ = writeln!(
            s,
            r#"<rect x="{ox}" y="{MARGIN}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">y</text>"#,
            ox + PANEL / 2.0,
            MARGIN + PANEL + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{name}</text>"#,
            ox - 30.0,
            MARGIN + PANEL / 2.0
        );
        for (v, anchor, x, y) in [
            (ya.lo, "start", ox, MARGIN + PANEL + 14.0),
            (ya.hi, "end", ox + PANEL, MARGIN + PANEL + 14.0),
        ] {
            let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
        }
        for (v, y) in [(axis.lo, MARGIN + PANEL), (axis.hi, MARGIN + 10.0)] {
            let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{v:.3}</text>"#, ox - 4.0);
        }
        for (j, line) in lines.iter().enumerate() {
            if line.len() < 2 {
                continue;
            }
            let path: Vec<String> = line.iter().map(|c| format!("{:.2},{:.2}", px(c), py(c))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
                PALETTE[j % PALETTE.len()],
                path.join(" ")
            );
        }
        for c in &data {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="black"/>"#, px(c), py(c));
        }
        if let Some(b) = &bary {
            let (x, y) = (px(b), py(b));
            let _ = writeln!(
                s,
                r#"<path d="M{:.2},{:.2} l10,10 m0,-10 l-10,10" stroke="gray" stroke-width="2"/>"#,
                x - 5.0,
                y - 5.0
            );
        }
    }
    for (j, c) in curves.iter().enumerate() {
        let y = PANEL + 2.0 * MARGIN + 12.0 + 16.0 * j as f64 - 8.0;
        let color = PALETTE[j % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#,
            MARGIN + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            MARGIN + 26.0,
            y + 4.0,
            escape(&c.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
