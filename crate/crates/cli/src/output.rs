//! Artifact writers: curve CSVs, self-contained log-log SVG plots, binary
//! PPM images with sidecar metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use sphere_spde::analysis::ErrorCurve;

/// 17 significant digits: round-trips every f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// FNV-1a over the canonical config text; stamped into `.meta` sidecars so
/// artifacts can be traced back to the exact configuration.
pub fn config_hash(canonical: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Cumulative least-squares log2 slopes: entry `i` fits rows `0..=i`,
/// skipping zero errors; empty until two usable points exist.
fn cumulative_slopes(curve: &ErrorCurve) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(curve.len());
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for i in 0..curve.len() {
        if curve.errors[i] > 0.0 {
            xs.push(curve.abscissae[i].log2());
            ys.push(curve.errors[i].log2());
        }
        if xs.len() < 2 {
            out.push(None);
            continue;
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        out.push(Some(sxy / sxx));
    }
    out
}

/// Writes one error curve in the shared schema
/// `sweep_param,value,error,stderr,slope_cum` (stderr empty in exact mode).
pub fn write_curve_csv(
    path: &Path,
    sweep_param: &str,
    curve: &ErrorCurve,
    stderr: Option<&[f64]>,
) -> Result<()> {
    let slopes = cumulative_slopes(curve);
    let mut text = String::from("sweep_param,value,error,stderr,slope_cum\n");
    for i in 0..curve.len() {
        let se = match stderr {
            Some(s) => fmt_f64(s[i]),
            None => String::new(),
        };
        let slope = slopes[i].map(fmt_f64).unwrap_or_default();
        writeln!(
            text,
            "{sweep_param},{},{},{se},{slope}",
            fmt_f64(curve.abscissae[i]),
            fmt_f64(curve.errors[i]),
        )?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

struct PlotFrame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    lx_min: f64,
    lx_max: f64,
    ly_min: f64,
    ly_max: f64,
}

impl PlotFrame {
    fn x(&self, lx: f64) -> f64 {
        self.x0 + (lx - self.lx_min) / (self.lx_max - self.lx_min) * self.w
    }

    fn y(&self, ly: f64) -> f64 {
        // SVG y grows downward
        self.y0 + self.h - (ly - self.ly_min) / (self.ly_max - self.ly_min) * self.h
    }
}

/// Self-contained log2-log2 SVG plot of one or more curves, with dyadic
/// tick labels and an optional dashed reference-slope guide line anchored
/// at the last point of the first curve.
pub fn write_svg_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    curves: &[(String, &ErrorCurve)],
    reference_slope: Option<f64>,
) -> Result<()> {
    const COLORS: [&str; 6] = [
        "#1b6ca8", "#c0392b", "#1e8449", "#8e44ad", "#d68910", "#34495e",
    ];
    let (width, height) = (640.0, 480.0);
    let frame = {
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for (_, c) in curves {
            for i in 0..c.len() {
                if c.errors[i] > 0.0 {
                    lx.push(c.abscissae[i].log2());
                    ly.push(c.errors[i].log2());
                }
            }
        }
        anyhow::ensure!(!lx.is_empty(), "nothing to plot: all errors are zero");
        let (lx_min, lx_max) = (
            lx.iter().cloned().fold(f64::INFINITY, f64::min),
            lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        let (ly_min, ly_max) = (
            ly.iter().cloned().fold(f64::INFINITY, f64::min),
            ly.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        let pad = |a: f64, b: f64| if a == b { (a - 1.0, b + 1.0) } else { (a, b) };
        let (lx_min, lx_max) = pad(lx_min, lx_max);
        let (ly_min, ly_max) = pad(ly_min, ly_max);
        PlotFrame {
            x0: 70.0,
            y0: 40.0,
            w: width - 100.0,
            h: height - 110.0,
            lx_min,
            lx_max,
            ly_min,
            ly_max,
        }
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )?;
    writeln!(
        svg,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    )?;
    writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="monospace" font-size="14">{}</text>"#,
        width / 2.0,
        title
    )?;
    // frame
    writeln!(
        svg,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        frame.x0, frame.y0, frame.w, frame.h
    )?;
    // dyadic ticks
    let x_ticks = tick_range(frame.lx_min, frame.lx_max);
    for &t in &x_ticks {
        let x = frame.x(t);
        writeln!(
            svg,
            r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#cccccc"/>"##,
            frame.y0,
            frame.y0 + frame.h
        )?;
        writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle" font-family="monospace" font-size="11">2^{t:.0}</text>"#,
            frame.y0 + frame.h + 18.0
        )?;
    }
    let y_ticks = tick_range(frame.ly_min, frame.ly_max);
    for &t in &y_ticks {
        let y = frame.y(t);
        writeln!(
            svg,
            r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#cccccc"/>"##,
            frame.x0,
            frame.x0 + frame.w
        )?;
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="monospace" font-size="11">2^{t:.0}</text>"#,
            frame.x0 - 6.0,
            y + 4.0
        )?;
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="monospace" font-size="12">{}</text>"#,
        frame.x0 + frame.w / 2.0,
        height - 14.0,
        x_label
    )?;
    writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="monospace" font-size="12" transform="rotate(-90 18 {})">error</text>"#,
        frame.y0 + frame.h / 2.0,
        frame.y0 + frame.h / 2.0
    )?;

    for (ci, (label, curve)) in curves.iter().enumerate() {
        let color = COLORS[ci % COLORS.len()];
        let mut points = String::new();
        for i in 0..curve.len() {
            if curve.errors[i] > 0.0 {
                let x = frame.x(curve.abscissae[i].log2());
                let y = frame.y(curve.errors[i].log2());
                write!(points, "{x:.2},{y:.2} ")?;
                writeln!(
                    svg,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
                )?;
            }
        }
        writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.trim_end()
        )?;
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12" fill="{color}">{label}</text>"#,
            frame.x0 + frame.w + 6.0 - 60.0,
            frame.y0 + 16.0 * (ci as f64 + 1.0),
        )?;
    }

    if let Some(slope) = reference_slope {
        if let Some((_, first)) = curves.first() {
            if let Some(i) = (0..first.len()).rev().find(|&i| first.errors[i] > 0.0) {
                let (ax, ay) = (first.abscissae[i].log2(), first.errors[i].log2());
                let bx = frame.lx_min;
                let by = ay + slope * (bx - ax);
                writeln!(
                    svg,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
                    frame.x(ax),
                    frame.y(ay),
                    frame.x(bx),
                    frame.y(by)
                )?;
                writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" font-family="monospace" font-size="11" fill="gray">slope {slope}</text>"#,
                    frame.x(bx) + 8.0,
                    frame.y(by) - 6.0
                )?;
            }
        }
    }
    writeln!(svg, "</svg>")?;
    fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

fn tick_range(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-9);
    let step = (span / 8.0).ceil().max(1.0);
    let mut t = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    while t <= hi + 1e-9 {
        ticks.push(t);
        t += step;
    }
    ticks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMap {
    Gray,
    Diverging,
}

impl ColorMap {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gray" => Ok(ColorMap::Gray),
            "diverging" => Ok(ColorMap::Diverging),
            other => anyhow::bail!("unknown colormap {other:?} (gray | diverging)"),
        }
    }

    /// Maps `v` in `[0, 1]` to RGB.
    fn rgb(&self, v: f64) -> [u8; 3] {
        let v = v.clamp(0.0, 1.0);
        match self {
            ColorMap::Gray => {
                let g = (v * 255.0).round() as u8;
                [g, g, g]
            }
            ColorMap::Diverging => {
                // blue -> white -> red
                if v < 0.5 {
                    let t = v / 0.5;
                    [(255.0 * t).round() as u8, (255.0 * t).round() as u8, 255]
                } else {
                    let t = (v - 0.5) / 0.5;
                    [
                        255,
                        (255.0 * (1.0 - t)).round() as u8,
                        (255.0 * (1.0 - t)).round() as u8,
                    ]
                }
            }
        }
    }
}

/// Binary P6 PPM, rows from colatitude 0 (north pole) downward, plus a
/// `.meta` sidecar recording the value range and config hash.
pub fn write_ppm(
    path: &Path,
    values: &[f64],
    width: usize,
    height: usize,
    colormap: ColorMap,
    hash: &str,
) -> Result<()> {
    anyhow::ensure!(values.len() == width * height, "value grid size mismatch");
    let (vmin, vmax) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let mut data = Vec::with_capacity(width * height * 3 + 32);
    data.extend_from_slice(format!("P6\n{width} {height}\n255\n").as_bytes());
    for &v in values {
        data.extend_from_slice(&colormap.rgb((v - vmin) / span));
    }
    fs::write(path, data).with_context(|| format!("writing {}", path.display()))?;
    let meta = format!(
        "min = {}\nmax = {}\nwidth = {width}\nheight = {height}\nconfig_hash = {hash}\n",
        fmt_f64(vmin),
        fmt_f64(vmax)
    );
    fs::write(path.with_extension("meta"), meta)
        .with_context(|| format!("writing sidecar for {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash(""), "cbf29ce484222325");
        assert_eq!(config_hash("a = 1\n"), config_hash("a = 1\n"));
        assert_ne!(config_hash("a = 1\n"), config_hash("a = 2\n"));
    }

    #[test]
    fn float_format_round_trips() {
        for &v in &[1.0, -0.333333333333333315, 2f64.powi(-40), 1.0 / 3.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn cumulative_slope_skips_zeros() {
        let mut curve = ErrorCurve::new();
        curve.push(8.0, 0.0);
        curve.push(4.0, 4.0);
        curve.push(2.0, 2.0);
        curve.push(1.0, 1.0);
        let slopes = cumulative_slopes(&curve);
        assert_eq!(slopes[0], None);
        assert_eq!(slopes[1], None);
        assert!((slopes[2].unwrap() - 1.0).abs() < 1e-12);
        assert!((slopes[3].unwrap() - 1.0).abs() < 1e-12);
    }
}
