mod common;

use std::collections::BTreeMap;

use common::*;
use netflux_core::config::{NewtonConfig, NewtonStrategy, TimeConfig};
use netflux_core::geometry::{build_geometry, Attachment, NetworkGeometry, TaggedPoint};
use netflux_core::problems::Model;
use netflux_core::time_integration::{advance, step, StepMode};
use proptest::prelude::*;

fn polyline(coords: &[(f64, f64)]) -> (Vec<TaggedPoint>, Vec<(String, String)>) {
    let n = coords.len() - 1;
    let tag = |i: usize| if i == 0 || i == n { format!("B{i}") } else { format!("J{i}") };
    let points = coords.iter().enumerate().map(|(i, &(x, y))| TaggedPoint { tag: tag(i), x, y }).collect();
    let lines = (0..n).map(|i| (tag(i), tag(i + 1))).collect();
    (points, lines)
}

fn distinct_neighbours(coords: &[(f64, f64)]) -> bool {
    coords.windows(2).all(|w| (w[0].0 - w[1].0).hypot(w[0].1 - w[1].1) > 1e-3)
}

proptest! {
    #[test]
    fn lengths_scale_with_the_length_scale(
        coords in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..8).prop_filter("distinct", |c| distinct_neighbours(c)),
        scale in 0.01f64..500.0,
    ) {
        let (points, lines) = polyline(&coords);
        let g = build_geometry(&points, &lines, scale).unwrap();
        for (arc, w) in g.arcs.iter().zip(coords.windows(2)) {
            let unscaled = (w[0].0 - w[1].0).hypot(w[0].1 - w[1].1);
            prop_assert!((arc.length - scale * unscaled).abs() <= 1e-12 * arc.length);
        }
        let ends: usize = g
            .connections
            .iter()
            .flat_map(|c| &c.members)
            .filter(|m| matches!(m.attachment, Attachment::Start | Attachment::End))
            .count();
        prop_assert_eq!(ends, 2 * g.arcs.len());
    }

    #[test]
    fn csv_reparse_is_identical(
        coords in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..8).prop_filter("distinct", |c| distinct_neighbours(c)),
        scale in 0.01f64..500.0,
    ) {
        let (points, lines) = polyline(&coords);
        let g = build_geometry(&points, &lines, scale).unwrap();
        let again = NetworkGeometry::from_csv(&g.to_points_csv(), &g.to_lines_csv(), scale).unwrap();
        prop_assert_eq!(again, g);
    }
}

#[test]
fn keller_segel_is_contained_in_the_organ_model() {
    let shared = [("nu", 1.3), ("mu", 0.7), ("a", 0.4), ("b", 0.9), ("k1", 1e-3), ("k2", 0.05)];
    let geometry = || NetworkGeometry::star(3, 1.0).unwrap();
    let ks = system(Model::KellerSegel, geometry(), 0.2, &params(&shared), 1.0, &BTreeMap::new());
    let mut ooc_params = params(&shared);
    ooc_params.extend(params(&[("c", 0.0), ("d", 0.0), ("m1", 0.0), ("sigma", 123.0), ("epsilon", 2.0)]));
    let ooc = system(Model::OrganOnChip, geometry(), 0.2, &ooc_params, 1.0, &BTreeMap::new());

    let u = "1 + 0.5*cos(pi*s)";
    let phi = "0.1 + 0.05*s";
    let mut a = state_from(&ks, &[u, phi]);
    let mut b = state_from(&ooc, &[u, "0", "0", phi]);
    let cfg = NewtonConfig { eps_abs: 1e-12, ..NewtonConfig::default() };
    for _ in 0..5 {
        a = step(&ks, &a, 0.05, &cfg).unwrap().state;
        b = step(&ooc, &b, 0.05, &cfg).unwrap().state;
    }
    let (dk, dz) = (ks.discretization(), ooc.discretization());
    let mut worst = 0.0f64;
    for (e, el) in dk.elements.iter().enumerate() {
        for (ek, ez) in [(0, 0), (1, 3)] {
            let ok = ks.layout(el.arc).u[ek];
            let oz = ooc.layout(el.arc).u[ez];
            for j in 0..2 {
                worst = worst.max((a.bulk[e][ok + j] - b.bulk[e][oz + j]).abs());
            }
        }
    }
    for arc in 0..dk.arcs.len() {
        for node in 0..dk.arcs[arc].n_nodes() {
            for (ek, ez) in [(0, 0), (1, 3)] {
                let x = a.traces[dk.trace_index(arc, ek, node)];
                let y = b.traces[dz.trace_index(arc, ez, node)];
                worst = worst.max((x - y).abs());
            }
        }
    }
    assert!(worst < 1e-10, "max difference {worst:e}");
}

#[test]
fn failed_steps_do_not_advance_time() {
    let sys = system(
        Model::KellerSegel,
        NetworkGeometry::chain(2, 1.0).unwrap(),
        0.25,
        &params(&[("chi0", 1.0), ("a", 1.0), ("b", 1.0)]),
        1.0,
        &BTreeMap::new(),
    );
    let s0 = state_from(&sys, &["1 + 0.8*cos(pi*s)", "0.5 + 0.4*cos(2*pi*s)"]);
    // a tight iteration cap only succeeds once dt is small
    let time = TimeConfig {
        t_final: 100.0,
        dt_init: 50.0,
        adaptive: true,
        dt_min: 1e-6,
        dt_max: 100.0,
        newton: NewtonConfig { eps_abs: 1e-10, max_iterations: 3, strategy: NewtonStrategy::LineSearch },
    };
    let mut seen = Vec::new();
    let out = advance(&sys, s0.clone(), &time, StepMode::Adaptive { t_final: 100.0, max_steps: Some(3) }, |r, st| {
        seen.push((*r, st.clone()));
    })
    .unwrap();
    assert!(seen.iter().any(|(r, _)| !r.accepted), "expected at least one rejected attempt");
    let mut last = s0;
    let mut prev_dt: Option<(f64, bool)> = None;
    for (rec, st) in &seen {
        if let Some((dt, false)) = prev_dt {
            assert_eq!(rec.dt, 0.5 * dt);
        }
        if rec.accepted {
            assert!((st.time - (last.time + rec.dt)).abs() <= 1e-12 * st.time);
            last = st.clone();
        } else {
            assert_eq!(st.time, last.time);
            assert_eq!(st.max_abs_diff(&last), 0.0);
        }
        prev_dt = Some((rec.dt, rec.accepted));
    }
    assert_eq!(out.accepted_steps(), 3);
}
