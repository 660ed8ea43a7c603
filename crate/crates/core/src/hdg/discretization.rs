use super::HdgError;
use crate::geometry::{Attachment, NetworkGeometry};

/// Mesh of a single arc: sorted node coordinates from `0` to the arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcMesh {
    pub nodes: Vec<f64>,
}

impl ArcMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// One element of the global element list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementRef {
    pub arc: usize,
    /// Index of the left node within the arc mesh.
    pub left: usize,
    pub s0: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub h_target: f64,
    pub n_equations: usize,
    pub arcs: Vec<ArcMesh>,
    pub elements: Vec<ElementRef>,
    /// First global element of each arc.
    pub element_offset: Vec<usize>,
    pub trace_offset: Vec<usize>,
    pub n_traces: usize,
    /// Mesh node of every connection member, indexed like `connections[c].members`.
    pub member_nodes: Vec<Vec<usize>>,
    pub multiplier_offset: Vec<usize>,
    pub n_multipliers: usize,
    /// `(connection, member)` pinned to each arc node, if any.
    node_constraint: Vec<Vec<Option<(usize, usize)>>>,
}

/// Splits every arc into `⌈L/h⌉` uniform elements and moves (or inserts)
/// nodes so that every T-junction point is a mesh node.
pub fn build_discretization(
    geometry: &NetworkGeometry,
    h_target: f64,
    n_equations: usize,
) -> Result<Discretization, HdgError> {
    if !(h_target > 0.0 && h_target.is_finite()) {
        return Err(HdgError::InvalidDiscretization(format!("h must be positive, got {h_target}")));
    }
    let mut arcs: Vec<ArcMesh> = geometry
        .arcs
        .iter()
        .map(|arc| {
            let n = ((arc.length / h_target) - 1e-12).ceil().max(1.0) as usize;
            ArcMesh { nodes: (0..=n).map(|i| arc.length * i as f64 / n as f64).collect() }
        })
        .collect();

    let mut pinned: Vec<Vec<bool>> = arcs
        .iter()
        .map(|m| {
            let mut p = vec![false; m.n_nodes()];
            p[0] = true;
            *p.last_mut().unwrap() = true;
            p
        })
        .collect();
    for conn in &geometry.connections {
        for member in &conn.members {
            if let Attachment::Interior(offset) = member.attachment {
                snap_node(&mut arcs[member.arc], &mut pinned[member.arc], offset);
            }
        }
    }

    let mut node_constraint: Vec<Vec<Option<(usize, usize)>>> =
        arcs.iter().map(|m| vec![None; m.n_nodes()]).collect();
    let mut member_nodes = Vec::with_capacity(geometry.connections.len());
    for (ci, conn) in geometry.connections.iter().enumerate() {
        let mut nodes = Vec::with_capacity(conn.members.len());
        for (mi, member) in conn.members.iter().enumerate() {
            let mesh = &arcs[member.arc];
            let node = match member.attachment {
                Attachment::Start => 0,
                Attachment::End => mesh.n_nodes() - 1,
                Attachment::Interior(offset) => nearest_node(mesh, offset),
            };
            let slot = &mut node_constraint[member.arc][node];
            if let Some((other, _)) = slot {
                return Err(HdgError::InvalidDiscretization(format!(
                    "arc {} node {} is claimed by connections {} and {}",
                    member.arc, node, geometry.connections[*other].node_tag, conn.node_tag
                )));
            }
            *slot = Some((ci, mi));
            nodes.push(node);
        }
        member_nodes.push(nodes);
    }

    let mut elements = Vec::new();
    let mut element_offset = Vec::with_capacity(arcs.len());
    let mut trace_offset = Vec::with_capacity(arcs.len());
    let mut n_traces = 0;
    for (a, mesh) in arcs.iter().enumerate() {
        element_offset.push(elements.len());
        trace_offset.push(n_traces);
        n_traces += n_equations * mesh.n_nodes();
        for e in 0..mesh.n_elements() {
            let (s0, s1) = (mesh.nodes[e], mesh.nodes[e + 1]);
            elements.push(ElementRef { arc: a, left: e, s0, h: s1 - s0 });
        }
    }
    let mut multiplier_offset = Vec::with_capacity(geometry.connections.len());
    let mut n_multipliers = 0;
    for conn in &geometry.connections {
        multiplier_offset.push(n_multipliers);
        n_multipliers += n_equations * conn.members.len();
    }

    Ok(Discretization {
        h_target,
        n_equations,
        arcs,
        elements,
        element_offset,
        trace_offset,
        n_traces,
        member_nodes,
        multiplier_offset,
        n_multipliers,
        node_constraint,
    })
}

fn nearest_node(mesh: &ArcMesh, offset: f64) -> usize {
    let mut best = 0;
    for (i, s) in mesh.nodes.iter().enumerate() {
        if (s - offset).abs() < (mesh.nodes[best] - offset).abs() {
            best = i;
        }
    }
    best
}

fn snap_node(mesh: &mut ArcMesh, pinned: &mut Vec<bool>, offset: f64) {
    let length = *mesh.nodes.last().unwrap();
    let j = nearest_node(mesh, offset);
    if (mesh.nodes[j] - offset).abs() <= 1e-9 * length.max(1.0) {
        pinned[j] = true;
        return;
    }
    if !pinned[j] {
        mesh.nodes[j] = offset;
        pinned[j] = true;
        return;
    }
    let pos = mesh.nodes.partition_point(|&s| s < offset);
    mesh.nodes.insert(pos, offset);
    pinned.insert(pos, true);
}

impl Discretization {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_traces + self.n_multipliers
    }

    pub fn trace_index(&self, arc: usize, eq: usize, node: usize) -> usize {
        self.trace_offset[arc] + eq * self.arcs[arc].n_nodes() + node
    }

    /// Global multiplier index of `(connection, equation, member)`.
    pub fn multiplier_index(&self, connection: usize, eq: usize, member: usize) -> usize {
        self.multiplier_offset[connection] + eq * self.member_nodes[connection].len() + member
    }

    pub fn node_constraint(&self, arc: usize, node: usize) -> Option<(usize, usize)> {
        self.node_constraint[arc][node]
    }

    pub fn arc_elements(&self, arc: usize) -> std::ops::Range<usize> {
        let start = self.element_offset[arc];
        start..start + self.arcs[arc].n_elements()
    }

    /// Midpoint coordinate of a global element.
    pub fn element_midpoint(&self, element: usize) -> f64 {
        let e = &self.elements[element];
        e.s0 + 0.5 * e.h
    }
}
