//! Minimal SVG line charts: accuracy against predicted fraction, one line
//! per (variant, observed fraction) group in the report CSV.

use std::fmt::Write as _;
use std::path::Path;

use nmnf_core::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct Row {
    variant: String,
    observed: f64,
    predicted: f64,
    accuracy: f64,
}

fn parse_csv(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        offset: 0,
        detail: format!("not readable: {e}"),
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "variant,seed,observed_frac,predicted_frac,accuracy,num_sequences" {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset: 0,
            detail: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    let mut offset = header.len() as u64 + 1;
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::Format {
                path: path.display().to_string(),
                offset,
                detail: format!("expected 6 columns, got {}", parts.len()),
            });
        }
        let field = |i: usize| -> Result<f64> {
            parts[i].parse().map_err(|_| Error::Format {
                path: path.display().to_string(),
                offset,
                detail: format!("bad number {:?}", parts[i]),
            })
        };
        rows.push(Row {
            variant: parts[0].to_string(),
            observed: field(2)?,
            predicted: field(3)?,
            accuracy: field(4)?,
        });
        offset += line.len() as u64 + 1;
    }
    if rows.is_empty() {
        return Err(Error::Format {
            path: path.display().to_string(),
            offset,
            detail: "report has no rows".into(),
        });
    }
    Ok(rows)
}

fn x_pos(pred: f64, lo: f64, hi: f64) -> f64 {
    let span = (hi - lo).max(1e-9);
    MARGIN_L + (pred - lo) / span * (WIDTH - MARGIN_L - MARGIN_R)
}

fn y_pos(acc: f64) -> f64 {
    HEIGHT - MARGIN_B - acc.clamp(0.0, 1.0) * (HEIGHT - MARGIN_T - MARGIN_B)
}

/// Renders the report as an SVG document.
pub fn render_csv(path: &Path) -> Result<String> {
    let rows = parse_csv(path)?;
    // Group by (variant, observed); average accuracy over seeds per x.
    type Group = (String, f64, Vec<(f64, f64, usize)>);
    let mut groups: Vec<Group> = Vec::new();
    for row in &rows {
        let key_pos = groups
            .iter()
            .position(|(v, o, _)| *v == row.variant && (*o - row.observed).abs() < 1e-12);
        let entry = match key_pos {
            Some(i) => &mut groups[i],
            None => {
                groups.push((row.variant.clone(), row.observed, Vec::new()));
                groups.last_mut().unwrap()
            }
        };
        match entry
            .2
            .iter_mut()
            .find(|(p, _, _)| (*p - row.predicted).abs() < 1e-12)
        {
            Some(point) => {
                point.1 += row.accuracy;
                point.2 += 1;
            }
            None => entry.2.push((row.predicted, row.accuracy, 1)),
        }
    }
    groups.sort_by(|a, b| (&a.0, a.1).partial_cmp(&(&b.0, b.1)).unwrap());
    for g in groups.iter_mut() {
        g.2.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.predicted).collect();
    let (xlo, xhi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // Axes and ticks.
    let (x0, y0) = (MARGIN_L, HEIGHT - MARGIN_B);
    let x1 = WIDTH - MARGIN_R;
    let _ = writeln!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN_T}" stroke="black"/>"#
    );
    for i in 0..=5 {
        let acc = i as f64 / 5.0;
        let y = y_pos(acc);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/><text x="{}" y="{}" font-size="11" text-anchor="end">{:.1}</text>"#,
            x0 - 4.0,
            x0 - 8.0,
            y + 4.0,
            acc
        );
    }
    let mut xticks: Vec<f64> = xs.clone();
    xticks.sort_by(f64::total_cmp);
    xticks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    for &p in &xticks {
        let x = x_pos(p, xlo, xhi);
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" font-size="11" text-anchor="middle">{p}</text>"#,
            y0 + 4.0,
            y0 + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">predicted fraction</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">accuracy</text>"#,
        (y0 + MARGIN_T) / 2.0,
        (y0 + MARGIN_T) / 2.0
    );

    // Lines and legend.
    for (gi, (variant, observed, points)) in groups.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(p, acc_sum, n)| {
                format!("{:.2},{:.2}", x_pos(p, xlo, xhi), y_pos(acc_sum / n as f64))
            })
            .collect();
        if path.len() == 1 {
            let xy: Vec<&str> = path[0].split(',').collect();
            let _ = writeln!(
                svg,
                r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/>"#,
                xy[0], xy[1]
            );
        } else {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
        let ly = MARGIN_T + 16.0 * gi as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}" font-size="11">{variant} obs={observed}</text>"#,
            x1 + 10.0,
            ly,
            x1 + 28.0,
            ly + 5.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
