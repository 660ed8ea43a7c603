mod common;

use std::collections::BTreeMap;

use common::*;
use netflux_core::geometry::NetworkGeometry;
use netflux_core::output::{
    compute_mass, mass_report, read_snapshot, render_birdview, render_geometry, snapshot, write_snapshot, Region,
};
use netflux_core::problems::Model;
use proptest::prelude::*;

fn heat_on(geometry: NetworkGeometry, h: f64) -> netflux_core::hdg::HdgSystem {
    system(Model::Heat, geometry, h, &params(&[("nu", 1.0)]), 1.0, &BTreeMap::new())
}

fn maze_geometry() -> NetworkGeometry {
    let dir = repo_root().join("data/maze_3_data");
    let pts = std::fs::read_to_string(dir.join("points.csv")).unwrap();
    let lns = std::fs::read_to_string(dir.join("lines.csv")).unwrap();
    NetworkGeometry::from_csv(&pts, &lns, 50.0).unwrap()
}

#[test]
fn mass_of_constants() {
    let sys = heat_on(NetworkGeometry::segment(50.0).unwrap(), 15.0);
    let one = state_from(&sys, &["1"]);
    assert!((compute_mass(&sys, &one, 0, Region::All) - 50.0).abs() < 1e-12);
    let zero = sys.zero_state(0.0);
    assert_eq!(compute_mass(&sys, &zero, 0, Region::All), 0.0);
}

#[test]
fn mass_of_linear_profile_is_exact() {
    let sys = heat_on(NetworkGeometry::chain(3, 2.0).unwrap(), 0.3);
    let st = state_from(&sys, &["1 + 2*s"]);
    // each arc of length 2 carries ∫(1 + 2s) = 6
    assert!((compute_mass(&sys, &st, 0, Region::All) - 18.0).abs() < 1e-12);
    let rep = mass_report(&sys, &st);
    let (l, r) = rep.split[0];
    assert!((l + r - rep.total[0]).abs() <= 1e-12 * rep.total[0]);
    assert!(l > 0.0 && r > 0.0);
}

#[test]
fn snapshot_rows_and_zero_formatting() {
    let sys = heat_on(NetworkGeometry::star(3, 1.0).unwrap(), 0.25);
    let snap = snapshot(&sys, &sys.zero_state(0.0));
    let d = sys.discretization();
    let expected: usize = d.arcs.iter().map(|m| m.n_nodes() + m.n_elements()).sum();
    assert_eq!(snap.rows.len(), expected);
    let mut buf = Vec::new();
    write_snapshot(&snap, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("arc_id,equation,s,value,time"));
    for line in lines {
        assert_eq!(line.split(',').nth(3), Some("0"), "{line}");
    }
}

#[test]
fn snapshot_rows_are_sorted() {
    let sys = system(
        Model::KellerSegel,
        NetworkGeometry::chain(2, 1.0).unwrap(),
        0.3,
        &params(&[("chi0", 0.1)]),
        1.0,
        &BTreeMap::new(),
    );
    let snap = snapshot(&sys, &state_from(&sys, &["s", "1 - s"]));
    assert_eq!(snap.rows.len(), 2 * 2 * (5 + 4));
    assert!(snap.rows.windows(2).all(|w| {
        let a = (w[0].arc, w[0].equation);
        let b = (w[1].arc, w[1].equation);
        a < b || (a == b && w[0].s < w[1].s)
    }));
}

proptest! {
    #[test]
    fn mass_is_linear(coeffs in proptest::collection::vec(-5.0f64..5.0, 14), alpha in -3.0f64..3.0) {
        let sys = heat_on(NetworkGeometry::chain(2, 1.5).unwrap(), 0.5);
        let mut st = sys.zero_state(0.0);
        let mut k = 0;
        for b in st.bulk.iter_mut() {
            for v in b.iter_mut() {
                *v = coeffs[k % coeffs.len()];
                k += 1;
            }
        }
        let mut scaled = st.clone();
        scaled.bulk.iter_mut().flatten().for_each(|v| *v *= alpha);
        for region in [Region::All, Region::LeftHalf, Region::RightHalf] {
            let m = compute_mass(&sys, &st, 0, region);
            let ms = compute_mass(&sys, &scaled, 0, region);
            prop_assert!((ms - alpha * m).abs() <= 1e-12 * (1.0 + m.abs() * alpha.abs()));
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 8), time in 0.0f64..1e4) {
        let sys = heat_on(NetworkGeometry::segment(1.0).unwrap(), 0.5);
        let mut st = sys.zero_state(time);
        st.traces.iter_mut().zip(&values).for_each(|(t, v)| *t = *v);
        for (e, b) in st.bulk.iter_mut().enumerate() {
            b[0] = values[(3 + e) % values.len()];
            b[1] = values[(5 + e) % values.len()];
        }
        let snap = snapshot(&sys, &st);
        let mut buf = Vec::new();
        write_snapshot(&snap, &mut buf).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back.time.to_bits(), snap.time.to_bits());
        prop_assert_eq!(back.rows.len(), snap.rows.len());
        for (a, b) in back.rows.iter().zip(&snap.rows) {
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
            prop_assert_eq!(a.s.to_bits(), b.s.to_bits());
        }
    }
}

#[test]
fn maze_birdview_has_one_group_per_arc() {
    let sys = heat_on(maze_geometry(), 30.0);
    let st = state_from(&sys, &["sin(0.01*s)"]);
    let svg = render_birdview(&sys, &st, 0, "u at t = 0");
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let groups: Vec<_> = doc
        .descendants()
        .filter(|n| n.tag_name().name() == "g" && n.attribute("id").is_some_and(|id| id.starts_with("arc-")))
        .collect();
    assert_eq!(groups.len(), 29);
    let polylines = doc.descendants().filter(|n| n.tag_name().name() == "polyline").count();
    assert_eq!(polylines, sys.discretization().n_elements());
    assert_eq!(svg, render_birdview(&sys, &st, 0, "u at t = 0"));
}

#[test]
fn constant_field_uses_one_colour() {
    let sys = heat_on(NetworkGeometry::star(3, 1.0).unwrap(), 0.2);
    let svg = render_birdview(&sys, &state_from(&sys, &["2.5"]), 0, "const");
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let mut colours: Vec<_> =
        doc.descendants().filter(|n| n.tag_name().name() == "polyline").filter_map(|n| n.attribute("stroke")).collect();
    colours.dedup();
    assert_eq!(colours.len(), 1);
    let stops: Vec<_> =
        doc.descendants().filter(|n| n.tag_name().name() == "stop").filter_map(|n| n.attribute("stop-color")).collect();
    assert!(stops.iter().all(|c| *c == colours[0]));
}

#[test]
fn geometry_drawing_labels_every_segment() {
    let svg = render_geometry(&maze_geometry());
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let mut labels: Vec<usize> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("segment-label"))
        .map(|n| n.text().unwrap().parse().unwrap())
        .collect();
    labels.sort_unstable();
    assert_eq!(labels, (0..29).collect::<Vec<_>>());
    let nodes = doc.descendants().filter(|n| n.attribute("class") == Some("node")).count();
    assert_eq!(nodes, 30);

    let single = render_geometry(&NetworkGeometry::segment(1.0).unwrap());
    let doc = roxmltree::Document::parse(&single).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("segment-label")).count(), 1);
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("node")).count(), 2);
}

#[test]
fn empty_geometry_gives_valid_canvas() {
    let g = NetworkGeometry::from_csv("tag,x,y\n", "start_tag,end_tag\n", 1.0).unwrap();
    let svg = render_geometry(&g);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}
