//! Multi-arc network geometry built from `points.csv` / `lines.csv`.
//!
//! `points.csv` rows are `tag,x,y` and `lines.csv` rows are
//! `start_tag,end_tag`. Lines starting with `#` are comments and an
//! optional header row is recognised by a non-numeric `x` field (points)
//! or by the literal header `start_tag,end_tag` (lines).
//!
//! The first letter of a tag classifies the point: `J` junction, `T`
//! T-junction (an arc endpoint lying on the interior of another arc) and
//! `B` boundary.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("duplicate point tag `{0}`")]
    DuplicateTag(String),
    #[error("tag `{0}` must start with J, T or B")]
    BadTagPrefix(String),
    #[error("malformed row at line {0}")]
    MalformedRow(usize),
    #[error("unknown point tag `{0}`")]
    UnknownTag(String),
    #[error("T-junction point `{0}` does not lie on the interior of any arc")]
    TPointNotOnAnyArc(String),
    #[error("T-junction point `{0}` touches more than one arc interior")]
    TPointOnMultipleArcs(String),
    #[error("arc {0} has zero length")]
    ZeroLengthArc(usize),
    #[error("length scale must be positive, got {0}")]
    NonpositiveScale(f64),
    #[error("invalid connection at `{tag}`: {reason}")]
    InvalidConnection { tag: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PointKind {
    Junction,
    TJunction,
    Boundary,
}

impl PointKind {
    pub fn letter(self) -> char {
        match self {
            PointKind::Junction => 'J',
            PointKind::TJunction => 'T',
            PointKind::Boundary => 'B',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedPoint {
    pub tag: String,
    pub x: f64,
    pub y: f64,
}

impl TaggedPoint {
    pub fn kind(&self) -> PointKind {
        match self.tag.as_bytes()[0] {
            b'J' => PointKind::Junction,
            b'T' => PointKind::TJunction,
            _ => PointKind::Boundary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub id: usize,
    pub start_tag: String,
    pub end_tag: String,
    /// Physical length (after scaling).
    pub length: f64,
    /// Origin of the local coordinate, `s ∈ [x0, x0 + length]`.
    pub x0: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl Arc {
    /// Planar position of the point at distance `offset` from the start.
    pub fn point_at(&self, offset: f64) -> [f64; 2] {
        let r = offset / self.length;
        [
            self.start[0] + r * (self.end[0] - self.start[0]),
            self.start[1] + r * (self.end[1] - self.start[1]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Attachment {
    Start,
    End,
    /// Interior point at the given distance from the arc start.
    Interior(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub arc: usize,
    pub attachment: Attachment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub node_tag: String,
    pub kind: PointKind,
    pub members: Vec<Member>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGeometry {
    pub arcs: Vec<Arc>,
    pub connections: Vec<Connection>,
    pub length_scale: f64,
    /// Unscaled points as read, kept for re-serialisation.
    pub points: Vec<TaggedPoint>,
}

fn records(text: &str) -> csv::StringRecordsIntoIter<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .into_records()
}

fn normalize_tag(raw: &str) -> Result<String, GeometryError> {
    let mut chars = raw.chars();
    let first = chars.next().ok_or_else(|| GeometryError::BadTagPrefix(raw.to_string()))?;
    let upper = first.to_ascii_uppercase();
    if !matches!(upper, 'J' | 'T' | 'B') {
        return Err(GeometryError::BadTagPrefix(raw.to_string()));
    }
    Ok(std::iter::once(upper).chain(chars).collect())
}

fn is_blank(record: &csv::StringRecord) -> bool {
    record.iter().all(str::is_empty)
}

/// Parses `points.csv` text into tagged points in file order.
pub fn parse_points(csv_text: &str) -> Result<Vec<TaggedPoint>, GeometryError> {
    let mut points = Vec::new();
    let mut seen = HashMap::new();
    let mut first_data_row = true;
    for record in records(csv_text) {
        let record = record.map_err(|e| GeometryError::MalformedRow(e.position().map_or(0, |p| p.line() as usize)))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if is_blank(&record) {
            continue;
        }
        if record.len() != 3 {
            return Err(GeometryError::MalformedRow(line));
        }
        let x = record[1].parse::<f64>();
        if first_data_row {
            first_data_row = false;
            if x.is_err() {
                continue;
            }
        }
        let (Ok(x), Ok(y)) = (x, record[2].parse::<f64>()) else {
            return Err(GeometryError::MalformedRow(line));
        };
        if !x.is_finite() || !y.is_finite() {
            return Err(GeometryError::MalformedRow(line));
        }
        let tag = normalize_tag(&record[0])?;
        if seen.insert(tag.clone(), ()).is_some() {
            return Err(GeometryError::DuplicateTag(tag));
        }
        points.push(TaggedPoint { tag, x, y });
    }
    Ok(points)
}

/// Parses `lines.csv` text into `(start_tag, end_tag)` pairs.
pub fn parse_lines(csv_text: &str) -> Result<Vec<(String, String)>, GeometryError> {
    let mut lines = Vec::new();
    let mut first_data_row = true;
    for record in records(csv_text) {
        let record = record.map_err(|e| GeometryError::MalformedRow(e.position().map_or(0, |p| p.line() as usize)))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if is_blank(&record) {
            continue;
        }
        if record.len() != 2 || record[0].is_empty() || record[1].is_empty() {
            return Err(GeometryError::MalformedRow(line));
        }
        if first_data_row {
            first_data_row = false;
            if record[0].eq_ignore_ascii_case("start_tag") && record[1].eq_ignore_ascii_case("end_tag") {
                continue;
            }
        }
        let fix = |raw: &str| normalize_tag(raw).unwrap_or_else(|_| raw.to_string());
        lines.push((fix(&record[0]), fix(&record[1])));
    }
    Ok(lines)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Builds the network: scales coordinates, computes arc lengths and
/// classifies every node into a connection.
pub fn build_geometry(
    points: &[TaggedPoint],
    lines: &[(String, String)],
    length_scale: f64,
) -> Result<NetworkGeometry, GeometryError> {
    if !(length_scale > 0.0 && length_scale.is_finite()) {
        return Err(GeometryError::NonpositiveScale(length_scale));
    }
    let index: HashMap<&str, usize> = points.iter().enumerate().map(|(i, p)| (p.tag.as_str(), i)).collect();
    let lookup = |tag: &str| index.get(tag).copied().ok_or_else(|| GeometryError::UnknownTag(tag.to_string()));
    let scaled = |p: &TaggedPoint| [p.x * length_scale, p.y * length_scale];

    let mut arcs = Vec::with_capacity(lines.len());
    // point index -> endpoint attachments
    let mut endpoints: BTreeMap<usize, Vec<Member>> = BTreeMap::new();
    for (id, (a, b)) in lines.iter().enumerate() {
        let (ia, ib) = (lookup(a)?, lookup(b)?);
        let (start, end) = (scaled(&points[ia]), scaled(&points[ib]));
        let length = distance(start, end);
        if ia == ib || !(length > 0.0) {
            return Err(GeometryError::ZeroLengthArc(id));
        }
        arcs.push(Arc { id, start_tag: a.clone(), end_tag: b.clone(), length, x0: 0.0, start, end });
        endpoints.entry(ia).or_default().push(Member { arc: id, attachment: Attachment::Start });
        endpoints.entry(ib).or_default().push(Member { arc: id, attachment: Attachment::End });
    }

    let tolerance = 1e-9 * length_scale;
    let mut connections = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        let Some(members) = endpoints.remove(&pi) else {
            log::warn!("point `{}` is not used by any line", point.tag);
            continue;
        };
        let kind = point.kind();
        let invalid = |reason: &str| GeometryError::InvalidConnection { tag: point.tag.clone(), reason: reason.into() };
        let members = match kind {
            PointKind::Boundary => {
                if members.len() != 1 {
                    return Err(invalid("boundary point must terminate exactly one arc"));
                }
                members
            }
            PointKind::Junction => {
                if members.len() < 2 {
                    return Err(invalid("junction point must join at least two arcs"));
                }
                members
            }
            PointKind::TJunction => {
                if members.len() != 1 {
                    return Err(invalid("T-junction point must terminate exactly one arc"));
                }
                let p = scaled(point);
                let mut hits = Vec::new();
                for arc in arcs.iter().filter(|arc| arc.id != members[0].arc) {
                    let d = [arc.end[0] - arc.start[0], arc.end[1] - arc.start[1]];
                    let r = ((p[0] - arc.start[0]) * d[0] + (p[1] - arc.start[1]) * d[1]) / (arc.length * arc.length);
                    let offset = r * arc.length;
                    if offset <= tolerance || offset >= arc.length - tolerance {
                        continue;
                    }
                    if distance(arc.point_at(offset), p) <= tolerance {
                        hits.push(Member { arc: arc.id, attachment: Attachment::Interior(offset) });
                    }
                }
                match hits.len() {
                    0 => return Err(GeometryError::TPointNotOnAnyArc(point.tag.clone())),
                    1 => {}
                    _ => return Err(GeometryError::TPointOnMultipleArcs(point.tag.clone())),
                }
                let mut members = members;
                members.extend(hits);
                members
            }
        };
        connections.push(Connection { node_tag: point.tag.clone(), kind, members });
    }

    let geometry = NetworkGeometry { arcs, connections, length_scale, points: points.to_vec() };
    if !geometry.is_connected() {
        log::warn!("network geometry is not connected");
    }
    Ok(geometry)
}

impl NetworkGeometry {
    /// Parses and builds a geometry from the text of both CSV files.
    pub fn from_csv(points_csv: &str, lines_csv: &str, length_scale: f64) -> Result<Self, GeometryError> {
        build_geometry(&parse_points(points_csv)?, &parse_lines(lines_csv)?, length_scale)
    }

    /// A single arc `B0 → B1` of the given length.
    pub fn segment(length: f64) -> Result<Self, GeometryError> {
        let points = vec![
            TaggedPoint { tag: "B0".into(), x: 0.0, y: 0.0 },
            TaggedPoint { tag: "B1".into(), x: 1.0, y: 0.0 },
        ];
        build_geometry(&points, &[("B0".into(), "B1".into())], length)
    }

    /// `n` arcs in a row joined at junctions, each of the given length.
    pub fn chain(n: usize, arc_length: f64) -> Result<Self, GeometryError> {
        let tag = |i: usize| if i == 0 || i == n { format!("B{i}") } else { format!("J{i}") };
        let points: Vec<_> = (0..=n).map(|i| TaggedPoint { tag: tag(i), x: i as f64, y: 0.0 }).collect();
        let lines: Vec<_> = (0..n).map(|i| (tag(i), tag(i + 1))).collect();
        build_geometry(&points, &lines, arc_length)
    }

    /// `k` arcs radiating from a central junction `J0`.
    pub fn star(k: usize, arc_length: f64) -> Result<Self, GeometryError> {
        let mut points = vec![TaggedPoint { tag: "J0".into(), x: 0.0, y: 0.0 }];
        let mut lines = Vec::new();
        for i in 0..k {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            let tag = format!("B{}", i + 1);
            points.push(TaggedPoint { tag: tag.clone(), x: angle.cos(), y: angle.sin() });
            lines.push(("J0".to_string(), tag));
        }
        build_geometry(&points, &lines, arc_length)
    }

    pub fn connection(&self, tag: &str) -> Option<&Connection> {
        self.connections.iter().find(|c| c.node_tag == tag)
    }

    /// Bounding box `[xmin, ymin, xmax, ymax]` of all arc endpoints.
    pub fn bounding_box(&self) -> [f64; 4] {
        let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for arc in &self.arcs {
            for p in [arc.start, arc.end] {
                bb[0] = bb[0].min(p[0]);
                bb[1] = bb[1].min(p[1]);
                bb[2] = bb[2].max(p[0]);
                bb[3] = bb[3].max(p[1]);
            }
        }
        bb
    }

    pub fn is_connected(&self) -> bool {
        if self.arcs.is_empty() {
            return true;
        }
        let mut adjacency = vec![Vec::new(); self.arcs.len()];
        for c in &self.connections {
            for a in &c.members {
                for b in &c.members {
                    if a.arc != b.arc {
                        adjacency[a.arc].push(b.arc);
                    }
                }
            }
        }
        let mut seen = vec![false; self.arcs.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Arcs sharing a connection with `arc`, not including `arc` itself.
    pub fn neighbours(&self, arc: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .connections
            .iter()
            .filter(|c| c.members.iter().any(|m| m.arc == arc))
            .flat_map(|c| c.members.iter().map(|m| m.arc))
            .filter(|&a| a != arc)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn to_points_csv(&self) -> String {
        let mut out = String::from("tag,x,y\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.tag, p.x, p.y);
        }
        out
    }

    pub fn to_lines_csv(&self) -> String {
        let mut out = String::from("start_tag,end_tag\n");
        for arc in &self.arcs {
            let _ = writeln!(out, "{},{}", arc.start_tag, arc.end_tag);
        }
        out
    }

    /// Aligned text description of arcs and connections.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "arcs: {}  connections: {}  length scale: {}", self.arcs.len(), self.connections.len(), self.length_scale);
        let _ = writeln!(out, "{:>4}  {:>8}  {:>8}  {:>12}", "arc", "start", "end", "length");
        for arc in &self.arcs {
            let _ = writeln!(out, "{:>4}  {:>8}  {:>8}  {:>12.4}", arc.id, arc.start_tag, arc.end_tag, arc.length);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>8}  {:<11}  members", "node", "kind");
        for c in &self.connections {
            let kind = match c.kind {
                PointKind::Junction => "junction",
                PointKind::TJunction => "t-junction",
                PointKind::Boundary => "boundary",
            };
            let members: Vec<String> = c
                .members
                .iter()
                .map(|m| match m.attachment {
                    Attachment::Start => format!("{}:start", m.arc),
                    Attachment::End => format!("{}:end", m.arc),
                    Attachment::Interior(s) => format!("{}:s={s:.4}", m.arc),
                })
                .collect();
            let _ = writeln!(out, "{:>8}  {:<11}  {}", c.node_tag, kind, members.join(" "));
        }
        out
    }
}
