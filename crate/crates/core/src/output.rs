//! Mass diagnostics, CSV snapshots and SVG renderings.

use std::fmt::Write as _;
use std::io::{Read, Write};

use thiserror::Error;

use crate::geometry::NetworkGeometry;
use crate::hdg::{HdgSystem, SystemState};
use crate::time_integration::StepRecord;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad snapshot row {row}: {message}")]
    BadRow { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    All,
    LeftHalf,
    RightHalf,
}

/// `∫ u ds` of one equation over the elements of a region.
///
/// Elements are assigned to a half by the x-coordinate of their midpoint
/// relative to the middle of the geometry's bounding box.
pub fn compute_mass(system: &HdgSystem, state: &SystemState, eq: usize, region: Region) -> f64 {
    let geometry = system.geometry();
    let d = system.discretization();
    let bb = geometry.bounding_box();
    let x_mid = 0.5 * (bb[0] + bb[2]);
    let mut total = 0.0;
    for (e, el) in d.elements.iter().enumerate() {
        if region != Region::All {
            let x = geometry.arcs[el.arc].point_at(el.s0 + 0.5 * el.h)[0];
            let left = x < x_mid;
            if left != (region == Region::LeftHalf) {
                continue;
            }
        }
        let em = &system.element_matrices(e)[eq];
        let uo = system.layout(el.arc).u[eq];
        let u = &state.bulk[e][uo..uo + 2];
        total += el.h * (em.average[0] * u[0] + em.average[1] * u[1]);
    }
    total
}

/// Mass of every equation over a single arc.
pub fn arc_masses(system: &HdgSystem, state: &SystemState, eq: usize) -> Vec<f64> {
    let d = system.discretization();
    let mut out = vec![0.0; d.arcs.len()];
    for (e, el) in d.elements.iter().enumerate() {
        let em = &system.element_matrices(e)[eq];
        let uo = system.layout(el.arc).u[eq];
        out[el.arc] += el.h * (em.average[0] * state.bulk[e][uo] + em.average[1] * state.bulk[e][uo + 1]);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassReport {
    pub time: f64,
    pub total: Vec<f64>,
    /// `(left, right)` per equation.
    pub split: Vec<(f64, f64)>,
}

pub fn mass_report(system: &HdgSystem, state: &SystemState) -> MassReport {
    let n = system.n_equations();
    MassReport {
        time: state.time,
        total: (0..n).map(|eq| compute_mass(system, state, eq, Region::All)).collect(),
        split: (0..n)
            .map(|eq| {
                (
                    compute_mass(system, state, eq, Region::LeftHalf),
                    compute_mass(system, state, eq, Region::RightHalf),
                )
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRow {
    pub arc: usize,
    pub equation: usize,
    pub s: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub rows: Vec<SnapshotRow>,
}

/// Samples traces at mesh nodes and the bulk solution at element midpoints.
pub fn snapshot(system: &HdgSystem, state: &SystemState) -> Snapshot {
    let d = system.discretization();
    let mut rows = Vec::new();
    for (a, mesh) in d.arcs.iter().enumerate() {
        let layout = system.layout(a);
        for eq in 0..system.n_equations() {
            for (node, &s) in mesh.nodes.iter().enumerate() {
                rows.push(SnapshotRow { arc: a, equation: eq, s, value: state.traces[d.trace_index(a, eq, node)] });
                if node + 1 < mesh.n_nodes() {
                    let e = d.element_offset[a] + node;
                    let b = &state.bulk[e][layout.u[eq]..layout.u[eq] + 2];
                    rows.push(SnapshotRow {
                        arc: a,
                        equation: eq,
                        s: d.element_midpoint(e),
                        value: 0.5 * (b[0] + b[1]),
                    });
                }
            }
        }
    }
    Snapshot { time: state.time, rows }
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_num(v: f64) -> String {
    if v == 0.0 && v.is_sign_positive() {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_snapshot<W: Write>(snap: &Snapshot, out: W) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arc_id", "equation", "s", "value", "time"])?;
    let time = fmt_num(snap.time);
    for r in &snap.rows {
        w.write_record([r.arc.to_string(), r.equation.to_string(), fmt_num(r.s), fmt_num(r.value), time.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot<R: Read>(input: R) -> Result<Snapshot, OutputError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    let mut time = 0.0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<&str, OutputError> {
            rec.get(k).ok_or_else(|| OutputError::BadRow { row: i + 1, message: format!("missing column {k}") })
        };
        let bad = |e: String| OutputError::BadRow { row: i + 1, message: e };
        rows.push(SnapshotRow {
            arc: field(0)?.parse().map_err(|e| bad(format!("{e}")))?,
            equation: field(1)?.parse().map_err(|e| bad(format!("{e}")))?,
            s: field(2)?.parse().map_err(|e| bad(format!("{e}")))?,
            value: field(3)?.parse().map_err(|e| bad(format!("{e}")))?,
        });
        time = field(4)?.parse().map_err(|e| bad(format!("{e}")))?;
    }
    Ok(Snapshot { time, rows })
}

pub fn write_diagnostics<W: Write>(records: &[StepRecord], out: W) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "time", "dt", "newton_iterations", "accepted"])?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            fmt_num(r.time),
            fmt_num(r.dt),
            r.newton_iterations.to_string(),
            r.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const RAMP: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Viridis-like colour for `t ∈ [0, 1]`.
pub fn colour(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3).map(|k| (RAMP[i][k] + f * (RAMP[i + 1][k] - RAMP[i][k])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

struct Canvas {
    bb: [f64; 4],
    scale: f64,
    margin: f64,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new(geometry: &NetworkGeometry, plot_width: f64, extra_right: f64, extra_top: f64) -> Self {
        let margin = 40.0;
        if geometry.arcs.is_empty() {
            return Canvas { bb: [0.0; 4], scale: 1.0, margin, width: plot_width + 2.0 * margin, height: 2.0 * margin };
        }
        let bb = geometry.bounding_box();
        let span = (bb[2] - bb[0]).max(bb[3] - bb[1]).max(1e-12);
        let scale = plot_width / span;
        Canvas {
            bb,
            scale,
            margin,
            width: (bb[2] - bb[0]) * scale + 2.0 * margin + extra_right,
            height: (bb[3] - bb[1]) * scale + 2.0 * margin + extra_top,
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (self.margin + (p[0] - self.bb[0]) * self.scale, self.height - self.margin - (p[1] - self.bb[1]) * self.scale)
    }
}

fn svg_header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width:.1}\" height=\"{height:.1}\" viewBox=\"0 0 {width:.1} {height:.1}\">"
    );
    let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{width:.1}\" height=\"{height:.1}\" fill=\"white\"/>");
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plan view of the network with element segments coloured by the bulk
/// mean of one equation.
pub fn render_birdview(system: &HdgSystem, state: &SystemState, eq: usize, title: &str) -> String {
    let geometry = system.geometry();
    let d = system.discretization();
    let means: Vec<f64> = d
        .elements
        .iter()
        .enumerate()
        .map(|(e, el)| {
            let uo = system.layout(el.arc).u[eq];
            0.5 * (state.bulk[e][uo] + state.bulk[e][uo + 1])
        })
        .collect();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = !(hi - lo >= 1e-14);
    let norm = |v: f64| if degenerate { 0.5 } else { (v - lo) / (hi - lo) };

    let canvas = Canvas::new(geometry, 600.0, 110.0, 30.0);
    let mut out = String::new();
    svg_header(&mut out, canvas.width, canvas.height);
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        canvas.margin,
        escape(title)
    );
    for (a, arc) in geometry.arcs.iter().enumerate() {
        let _ = writeln!(out, "<g id=\"arc-{a}\" stroke-width=\"6\" stroke-linecap=\"round\">");
        for e in d.arc_elements(a) {
            let el = &d.elements[e];
            let (x0, y0) = canvas.map(arc.point_at(el.s0));
            let (x1, y1) = canvas.map(arc.point_at(el.s0 + el.h));
            let _ = writeln!(
                out,
                "<polyline points=\"{x0:.2},{y0:.2} {x1:.2},{y1:.2}\" fill=\"none\" stroke=\"{}\"/>",
                colour(norm(means[e]))
            );
        }
        let _ = writeln!(out, "</g>");
    }

    let bar_x = canvas.width - 80.0;
    let bar_top = canvas.margin + 30.0;
    let bar_h = (canvas.height - 2.0 * canvas.margin - 30.0).max(60.0);
    let _ = writeln!(out, "<defs><linearGradient id=\"ramp\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">");
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let c = if degenerate { colour(0.5) } else { colour(t) };
        let _ = writeln!(out, "<stop offset=\"{t:.1}\" stop-color=\"{c}\"/>");
    }
    let _ = writeln!(out, "</linearGradient></defs>");
    let _ = writeln!(out, "<g id=\"colourbar\" font-family=\"sans-serif\" font-size=\"11\">");
    let _ = writeln!(
        out,
        "<rect x=\"{bar_x:.1}\" y=\"{bar_top:.1}\" width=\"16\" height=\"{bar_h:.1}\" fill=\"url(#ramp)\" stroke=\"black\"/>"
    );
    let (lo_s, hi_s) = if means.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\">{hi_s:.4e}</text>", bar_x + 20.0, bar_top + 8.0);
    let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\">{lo_s:.4e}</text>", bar_x + 20.0, bar_top + bar_h);
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

/// Network diagram: numbered segments and connection nodes marked with the
/// letter of their kind.
pub fn render_geometry(geometry: &NetworkGeometry) -> String {
    let canvas = Canvas::new(geometry, 600.0, 0.0, 0.0);
    let mut out = String::new();
    svg_header(&mut out, canvas.width, canvas.height);
    let _ = writeln!(out, "<g id=\"segments\" stroke=\"black\" stroke-width=\"2\">");
    for arc in &geometry.arcs {
        let (x0, y0) = canvas.map(arc.start);
        let (x1, y1) = canvas.map(arc.end);
        let _ = writeln!(out, "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y1:.2}\"/>");
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "<g id=\"labels\" fill=\"blue\" font-family=\"sans-serif\" font-size=\"12\">");
    for arc in &geometry.arcs {
        let (x, y) = canvas.map(arc.point_at(0.5 * arc.length));
        let _ = writeln!(out, "<text class=\"segment-label\" x=\"{:.2}\" y=\"{:.2}\">{}</text>", x + 4.0, y - 4.0, arc.id);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "<g id=\"nodes\" font-family=\"sans-serif\" font-size=\"9\">");
    for conn in &geometry.connections {
        let member = &conn.members[0];
        let arc = &geometry.arcs[member.arc];
        let p = match member.attachment {
            crate::geometry::Attachment::Start => arc.start,
            crate::geometry::Attachment::End => arc.end,
            crate::geometry::Attachment::Interior(s) => arc.point_at(s),
        };
        let (x, y) = canvas.map(p);
        let _ = writeln!(out, "<circle class=\"node\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"6\" fill=\"red\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"white\" text-anchor=\"middle\">{}</text>",
            x,
            y + 3.0,
            conn.kind.letter()
        );
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_ends_and_clamping() {
        assert_eq!(colour(0.0), "#440154");
        assert_eq!(colour(1.0), "#fde725");
        assert_eq!(colour(-3.0), colour(0.0));
        assert_eq!(colour(7.0), colour(1.0));
        assert_eq!(colour(f64::NAN), colour(0.0));
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "-0");
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(1e-300).parse::<f64>().unwrap(), 1e-300);
    }

    #[test]
    fn diagnostics_layout() {
        let records = [
            StepRecord { step: 1, time: 64.0, dt: 64.0, newton_iterations: 3, accepted: true },
            StepRecord { step: 2, time: 140.8, dt: 76.8, newton_iterations: 25, accepted: false },
        ];
        let mut buf = Vec::new();
        write_diagnostics(&records, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,time,dt,newton_iterations,accepted\n1,64,64,3,true\n2,140.8,76.8,25,false\n"
        );
    }
}
