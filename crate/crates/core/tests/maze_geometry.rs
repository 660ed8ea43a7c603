mod common;

use common::repo_root;
use netflux_core::geometry::{Attachment, NetworkGeometry, PointKind};

fn maze() -> NetworkGeometry {
    let dir = repo_root().join("data/maze_3_data");
    let pts = std::fs::read_to_string(dir.join("points.csv")).unwrap();
    let lns = std::fs::read_to_string(dir.join("lines.csv")).unwrap();
    NetworkGeometry::from_csv(&pts, &lns, 50.0).unwrap()
}

#[test]
fn maze_shape() {
    let g = maze();
    assert_eq!(g.arcs.len(), 29);
    assert!(g.is_connected());
    for arc in &g.arcs {
        assert!((50.0..=300.0).contains(&arc.length), "arc {} has length {}", arc.id, arc.length);
    }
    let count = |k: PointKind| g.connections.iter().filter(|c| c.kind == k).count();
    assert_eq!(count(PointKind::Boundary), 5);
    assert!(count(PointKind::Junction) > 0);
    assert!(count(PointKind::TJunction) > 0);
}

#[test]
fn t_points_sit_inside_an_arc() {
    let g = maze();
    for conn in g.connections.iter().filter(|c| c.kind == PointKind::TJunction) {
        let interior: Vec<_> =
            conn.members.iter().filter(|m| matches!(m.attachment, Attachment::Interior(_))).collect();
        assert_eq!(interior.len(), 1, "{}", conn.node_tag);
        if let Attachment::Interior(s) = interior[0].attachment {
            assert!(s > 0.0 && s < g.arcs[interior[0].arc].length);
        }
    }
}

#[test]
fn csv_round_trip() {
    let g = maze();
    let again = NetworkGeometry::from_csv(&g.to_points_csv(), &g.to_lines_csv(), g.length_scale).unwrap();
    assert_eq!(again.arcs.len(), g.arcs.len());
    for (a, b) in g.arcs.iter().zip(&again.arcs) {
        assert!((a.length - b.length).abs() < 1e-9);
    }
}

#[test]
fn tumour_arc_has_neighbours() {
    let g = maze();
    let n = g.neighbours(17);
    assert!(!n.is_empty());
    assert!(!n.contains(&17));
}
