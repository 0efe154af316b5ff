use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Point2, Vector2};
use proptest::prelude::*;
use rand::Rng;
use uowsn_core::netgraph::{deploy, in_sector, wrap_angle, BorderMode, Deployment, DirectedSectorGraph, NodeSector};
use uowsn_core::rng;

/// Rotates the offset into the sector's own frame, where the sector is
/// centred on the +x axis, and tests there.
fn rotated_frame_oracle(s: &NodeSector, p: &Point2<f64>) -> bool {
    let d = p - s.position;
    let (sin, cos) = s.orientation.sin_cos();
    let local = Vector2::new(cos * d.x + sin * d.y, -sin * d.x + cos * d.y);
    let r = local.norm();
    r > 0.0 && r <= s.range && local.y.atan2(local.x).abs() <= s.scan_angle / 2.0
}

fn sector(x: f64, y: f64, orientation: f64, phi: f64, range: f64) -> NodeSector {
    NodeSector::new(Point2::new(x, y), orientation, phi, range).unwrap()
}

#[test]
fn in_sector_matches_rotated_frame_oracle() {
    let mut r = rng::stream(200, &[]);
    for _ in 0..100_000 {
        let s = sector(
            r.random_range(0.0..100.0),
            r.random_range(0.0..100.0),
            r.random_range(0.0..TAU),
            r.random_range(0.01..=TAU),
            r.random_range(0.1..50.0),
        );
        let p = Point2::new(r.random_range(-20.0..120.0), r.random_range(-20.0..120.0));
        assert_eq!(in_sector(&s, &p), rotated_frame_oracle(&s, &p), "{s:?} {p}");
    }
}

#[test]
fn boundary_and_behind_cases() {
    let s = sector(0.0, 0.0, 0.3, FRAC_PI_2, 10.0);
    assert!(in_sector(&s, &(Point2::origin() + Vector2::new(0.3f64.cos(), 0.3f64.sin()) * 10.0)));
    assert!(!in_sector(&s, &Point2::new(-5.0 * 0.3f64.cos(), -5.0 * 0.3f64.sin())));
    assert!(!in_sector(&s, &Point2::origin()));
}

/// Node `i` in the middle, looking along +x with a quarter-circle sector.
/// `j`, `k`, `l` sit inside it and look away; `g`, `h`, `f` sit behind `i`
/// and look straight at it.
#[test]
fn hand_built_seven_node_fixture() {
    let phi = FRAC_PI_2;
    let at = |from: (f64, f64)| (50.0 - from.1).atan2(50.0 - from.0);
    let (g, h, f) = ((40.0, 50.0), (42.0, 58.0), (38.0, 44.0));
    let nodes = vec![
        sector(50.0, 50.0, 0.0, phi, 20.0), // i
        sector(60.0, 52.0, 0.0, phi, 20.0), // j
        sector(62.0, 45.0, 0.0, phi, 20.0), // k
        sector(58.0, 57.0, 0.0, phi, 20.0), // l
        sector(g.0, g.1, at(g), phi, 20.0),
        sector(h.0, h.1, at(h), phi, 20.0),
        sector(f.0, f.1, at(f), phi, 20.0),
    ];
    let graph = DirectedSectorGraph::from_sectors(nodes, 100.0, BorderMode::Bounded);
    assert_eq!(graph.descendants(0).unwrap(), vec![1, 2, 3]);
    assert_eq!(graph.antecedents(0).unwrap(), vec![4, 5, 6]);
}

#[test]
fn k_connectivity_matches_brute_force_degrees() {
    for t in 0..500u64 {
        let mut r = rng::stream(201, &[t]);
        let m = r.random_range(1..=8);
        let side = 10.0;
        let d = Deployment::new(m, side, r.random_range(0.2..=TAU), r.random_range(1.0..12.0));
        let g = deploy(&d, &mut r).unwrap();
        let nodes = g.nodes();
        let mut out = vec![0; m];
        let mut inn = vec![0; m];
        for i in 0..m {
            for j in 0..m {
                if i != j && rotated_frame_oracle(&nodes[i], &nodes[j].position) {
                    out[i] += 1;
                    inn[j] += 1;
                }
            }
        }
        for k in 1..=4 {
            let expected = (0..m).all(|i| out[i] >= k && inn[i] >= k);
            assert_eq!(g.is_k_connected(k), expected, "trial {t} k {k}");
        }
    }
}

#[test]
fn full_disk_equals_unit_disk_graph() {
    for t in 0..50u64 {
        let g = deploy(&Deployment::new(40, 100.0, TAU, 25.0), &mut rng::stream(202, &[t])).unwrap();
        let p = g.positions();
        for i in 0..40 {
            for j in 0..40 {
                let d = ((p[(i, 0)] - p[(j, 0)]).powi(2) + (p[(i, 1)] - p[(j, 1)]).powi(2)).sqrt();
                assert_eq!(g.has_edge(i, j), i != j && d <= 25.0);
            }
            assert_eq!(g.descendants(i).unwrap(), g.antecedents(i).unwrap());
        }
    }
}

#[test]
fn transpose_duality_on_random_graphs() {
    for t in 0..100u64 {
        let g = deploy(&Deployment::new(50, 100.0, 1.2, 30.0), &mut rng::stream(203, &[t])).unwrap();
        for i in 0..50 {
            for j in g.descendants(i).unwrap() {
                assert!(g.antecedents(j).unwrap().contains(&i));
            }
            for j in g.antecedents(i).unwrap() {
                assert!(g.descendants(j).unwrap().contains(&i));
            }
        }
    }
}

#[test]
fn same_seed_same_text() {
    let d = Deployment::new(60, 100.0, 2.0, 20.0);
    let a = deploy(&d, &mut rng::stream(204, &[1])).unwrap().to_text();
    let b = deploy(&d, &mut rng::stream(204, &[1])).unwrap().to_text();
    assert_eq!(a, b);
}

#[test]
fn two_facing_nodes_connect() {
    let g = DirectedSectorGraph::from_sectors(
        vec![sector(0.0, 0.0, 0.0, 1.0, 5.0), sector(3.0, 0.0, PI, 1.0, 5.0)],
        10.0,
        BorderMode::Bounded,
    );
    assert!(g.is_k_connected(1));
    assert!(!g.is_k_connected(2));
}

fn regrown(g: &DirectedSectorGraph, phi: f64, range: f64) -> DirectedSectorGraph {
    let nodes = g.nodes().iter().map(|n| NodeSector::new(n.position, n.orientation, phi, range).unwrap()).collect();
    DirectedSectorGraph::from_sectors(nodes, g.area_side(), g.border())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wrap_angle_lands_in_half_open_interval(a in -100.0f64..100.0) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((a - w) / TAU - ((a - w) / TAU).round()).abs() < 1e-9);
    }

    #[test]
    fn edges_grow_with_angle_and_range(
        seed in 0u64..10_000,
        phi in 0.05f64..TAU,
        grow in 0.0f64..3.0,
        range in 1.0f64..30.0,
        extra in 0.0f64..20.0,
        torus in any::<bool>(),
    ) {
        let border = if torus { BorderMode::Torus } else { BorderMode::Bounded };
        let d = Deployment::new(30, 100.0, phi, range).with_border(border);
        let g = deploy(&d, &mut rng::stream(seed, &[])).unwrap();
        let wider = regrown(&g, (phi + grow).min(TAU), range);
        let longer = regrown(&g, phi, range + extra);
        for i in 0..30 {
            for j in 0..30 {
                if g.has_edge(i, j) {
                    prop_assert!(wider.has_edge(i, j));
                    prop_assert!(longer.has_edge(i, j));
                }
            }
        }
    }

    #[test]
    fn adjacency_has_empty_diagonal_and_matches_sectors(seed in 0u64..10_000, phi in 0.05f64..=TAU) {
        let g = deploy(&Deployment::new(25, 50.0, phi, 15.0), &mut rng::stream(seed, &[])).unwrap();
        for i in 0..25 {
            prop_assert!(!g.has_edge(i, i));
            let n = &g.nodes()[i];
            prop_assert!(n.orientation >= 0.0 && n.orientation < TAU);
            for j in 0..25 {
                prop_assert_eq!(g.has_edge(i, j), in_sector(n, &g.nodes()[j].position));
            }
        }
    }
}
