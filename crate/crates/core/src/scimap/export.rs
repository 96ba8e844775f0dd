use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MapError, Topic};
use crate::util::{parse_field, tsv_rows};

pub const MAP_COLUMNS: [&str; 7] = [
    "topic_id",
    "size",
    "x",
    "y",
    "field",
    "interdisciplinarity",
    "mean_year",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub topic_id: usize,
    pub size: usize,
    pub x: f64,
    pub y: f64,
    pub field: String,
    pub interdisciplinarity: f64,
    pub mean_year: f64,
}

impl From<&Topic> for MapRow {
    fn from(t: &Topic) -> Self {
        Self {
            topic_id: t.id,
            size: t.size,
            x: t.x,
            y: t.y,
            field: t.field.clone(),
            interdisciplinarity: t.interdisciplinarity,
            mean_year: t.mean_year,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorBy {
    #[default]
    Field,
    Interdisciplinarity,
    MeanYear,
}

impl std::str::FromStr for ColorBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "field" => Ok(Self::Field),
            "interdisciplinarity" => Ok(Self::Interdisciplinarity),
            "mean_year" => Ok(Self::MeanYear),
            other => Err(format!("unknown overlay `{other}`")),
        }
    }
}

pub fn write_map_table<W: Write>(rows: &[MapRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", MAP_COLUMNS.join("\t"))?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.topic_id, r.size, r.x, r.y, r.field, r.interdisciplinarity, r.mean_year
        )?;
    }
    Ok(())
}

pub fn read_map_table<R: BufRead>(r: R) -> Result<Vec<MapRow>, MapError> {
    tsv_rows(r, &MAP_COLUMNS)?
        .into_iter()
        .map(|(line, c)| {
            Ok(MapRow {
                topic_id: parse_field(line, "topic_id", &c[0])?,
                size: parse_field(line, "size", &c[1])?,
                x: parse_field(line, "x", &c[2])?,
                y: parse_field(line, "y", &c[3])?,
                field: c[4].clone(),
                interdisciplinarity: parse_field(line, "interdisciplinarity", &c[5])?,
                mean_year: parse_field(line, "mean_year", &c[6])?,
            })
        })
        .collect()
}

/// Writes the map table to `out_path` and, when `svg` is set, a scatter
/// next to it with the `.svg` extension. Returns the written paths.
pub fn export_map(
    topics: &[Topic],
    out_path: &Path,
    svg: Option<ColorBy>,
) -> Result<Vec<PathBuf>, MapError> {
    let rows: Vec<MapRow> = topics.iter().map(MapRow::from).collect();
    let mut buf = Vec::new();
    write_map_table(&rows, &mut buf)?;
    fs::write(out_path, buf)?;
    let mut written = vec![out_path.to_path_buf()];
    if let Some(color_by) = svg {
        let svg_path = out_path.with_extension("svg");
        fs::write(&svg_path, render_svg(&rows, color_by))?;
        written.push(svg_path);
    }
    Ok(written)
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];
const LOW: (f64, f64, f64) = (253.0, 231.0, 37.0);
const HIGH: (f64, f64, f64) = (68.0, 1.0, 84.0);

fn ramp(t: f64) -> String {
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(LOW.0, HIGH.0),
        mix(LOW.1, HIGH.1),
        mix(LOW.2, HIGH.2)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG scatter: dot area proportional to topic size, colored by
/// the chosen overlay, legend to the right of the plot.
pub fn render_svg(rows: &[MapRow], color_by: ColorBy) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for r in rows {
        x0 = x0.min(r.x);
        x1 = x1.max(r.x);
        y0 = y0.min(r.y);
        y1 = y1.max(r.y);
    }
    if rows.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let max_size = rows.iter().map(|r| r.size).max().unwrap_or(1).max(1) as f64;
    let radius = |size: usize| 0.04 * span * (size as f64 / max_size).sqrt();
    let pad = 0.1 * span + 0.04 * span;
    let legend_w = 0.6 * span;
    let font = 0.035 * span;

    let (colors, legend): (Vec<String>, Vec<(String, String)>) = match color_by {
        ColorBy::Field => {
            let mut fields: Vec<&str> = rows.iter().map(|r| r.field.as_str()).collect();
            fields.sort_unstable();
            fields.dedup();
            let color =
                |f: &str| PALETTE[fields.binary_search(&f).unwrap_or(0) % PALETTE.len()].to_owned();
            (
                rows.iter().map(|r| color(&r.field)).collect(),
                fields.iter().map(|f| (color(f), (*f).to_owned())).collect(),
            )
        }
        ColorBy::Interdisciplinarity | ColorBy::MeanYear => {
            let value = |r: &MapRow| match color_by {
                ColorBy::MeanYear => r.mean_year,
                _ => r.interdisciplinarity,
            };
            let lo = rows.iter().map(value).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(value).fold(f64::NEG_INFINITY, f64::max);
            let t = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            let legend = if hi > lo {
                vec![
                    (ramp(0.0), format!("{lo:.3}")),
                    (ramp(1.0), format!("{hi:.3}")),
                ]
            } else if rows.is_empty() {
                Vec::new()
            } else {
                vec![(ramp(0.0), format!("{lo:.3}"))]
            };
            (rows.iter().map(|r| ramp(t(value(r)))).collect(), legend)
        }
    };

    let (vx, vy) = (x0 - pad, -(y1 + pad));
    let (vw, vh) = (x1 - x0 + 2.0 * pad + legend_w, y1 - y0 + 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="{vx:.6} {vy:.6} {vw:.6} {vh:.6}">"#
    );
    let _ = writeln!(
        s,
        r##"<g id="topics" fill-opacity="0.8" stroke="#333333" stroke-width="{:.6}">"##,
        span * 0.002
    );
    for (r, c) in rows.iter().zip(&colors) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.6}" cy="{:.6}" r="{:.6}" fill="{c}"><title>topic {} ({})</title></circle>"#,
            r.x,
            -r.y,
            radius(r.size),
            r.topic_id,
            escape(&r.field)
        );
    }
    let _ = writeln!(s, "</g>");
    let lx = x1 + pad;
    let _ = writeln!(
        s,
        r#"<g id="legend" font-family="sans-serif" font-size="{font:.6}">"#
    );
    for (i, (color, label)) in legend.iter().enumerate() {
        let ly = vy + pad + i as f64 * font * 1.5;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.6}" y="{:.6}" width="{font:.6}" height="{font:.6}" fill="{color}"/><text x="{:.6}" y="{ly:.6}">{}</text>"#,
            ly - font,
            lx + font * 1.5,
            escape(label)
        );
    }
    let _ = writeln!(s, "</g>\n</svg>");
    s
}
