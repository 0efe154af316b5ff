use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use nalgebra::DMatrix;

use super::DirectedSectorGraph;
use crate::{Error, Result};

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest directed paths over a weight matrix where a finite
/// entry `(i, j)` is an edge `i → j` and `+∞` means no edge. Unreachable
/// pairs stay `+∞`. Dijkstra from every source.
pub fn all_pairs_shortest_paths(weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = weights.nrows();
    if weights.ncols() != m {
        return Err(Error::domain("weights", "matrix must be square"));
    }
    let mut successors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for i in 0..m {
        for j in 0..m {
            let w = weights[(i, j)];
            if i == j || w == f64::INFINITY {
                continue;
            }
            if w.is_nan() || w < 0.0 {
                return Err(Error::domain("weights", format!("edge ({i}, {j}) has weight {w}")));
            }
            successors[i].push((j, w));
        }
    }

    let mut out = DMatrix::from_element(m, m, f64::INFINITY);
    let mut dist = vec![f64::INFINITY; m];
    let mut heap = BinaryHeap::new();
    for src in 0..m {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        dist[src] = 0.0;
        heap.push(Entry(0.0, src));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &successors[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Entry(nd, v));
                }
            }
        }
        for (j, &d) in dist.iter().enumerate() {
            out[(src, j)] = d;
        }
    }
    Ok(out)
}

/// Shortest directed path lengths on the graph's links. Weights off the
/// adjacency are ignored; weights on it must be finite and non-negative.
pub fn shortest_path_distances(graph: &DirectedSectorGraph, weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = graph.len();
    if weights.shape() != (m, m) {
        return Err(Error::domain("weights", format!("shape {:?} does not match {m} nodes", weights.shape())));
    }
    let masked = DMatrix::from_fn(m, m, |i, j| {
        if graph.has_edge(i, j) {
            if weights[(i, j)].is_finite() {
                weights[(i, j)]
            } else {
                f64::NAN
            }
        } else {
            f64::INFINITY
        }
    });
    all_pairs_shortest_paths(&masked)
}

/// Breadth-first hop counts from `source` over a (possibly asymmetric)
/// boolean link matrix. `None` marks unreachable nodes.
pub fn hop_counts(links: &DMatrix<bool>, source: usize) -> Vec<Option<usize>> {
    let m = links.nrows();
    let mut hops = vec![None; m];
    hops[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let next = hops[u].unwrap() + 1;
        for v in 0..m {
            if v != u && links[(u, v)] && hops[v].is_none() {
                hops[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    hops
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{deploy, BorderMode, Deployment, NodeSector};
    use crate::rng;
    use nalgebra::Point2;
    use rand::Rng;

    fn floyd_warshall(w: &DMatrix<f64>) -> DMatrix<f64> {
        let m = w.nrows();
        let mut d = w.clone();
        for i in 0..m {
            d[(i, i)] = 0.0;
        }
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    if d[(i, k)] + d[(k, j)] < d[(i, j)] {
                        d[(i, j)] = d[(i, k)] + d[(k, j)];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn chain_adds_lengths() {
        let inf = f64::INFINITY;
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, inf, inf, 0.0, 3.0, inf, inf, 0.0]);
        let d = all_pairs_shortest_paths(&w).unwrap();
        assert_eq!(d[(0, 2)], 5.0);
        assert_eq!(d[(2, 0)], inf);
    }

    #[test]
    fn clique_unit_costs() {
        let sectors: Vec<NodeSector> = (0..5)
            .map(|i| NodeSector::new(Point2::new(i as f64 * 0.1, 0.0), 0.0, std::f64::consts::TAU, 10.0).unwrap())
            .collect();
        let g = DirectedSectorGraph::from_sectors(sectors, 10.0, BorderMode::Bounded);
        let d = shortest_path_distances(&g, &DMatrix::from_element(5, 5, 1.0)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(d[(i, j)], if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn negative_weight_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(all_pairs_shortest_paths(&w), Err(Error::Domain { .. })));
    }

    #[test]
    fn matches_floyd_warshall_on_random_graphs() {
        for t in 0..200u64 {
            let mut r = rng::stream(77, &[t]);
            let m = r.random_range(2..=30);
            let phi = r.random_range(0.3..std::f64::consts::TAU);
            let g = deploy(&Deployment::new(m, 10.0, phi, r.random_range(1.0..6.0)), &mut r).unwrap();
            let weights =
                DMatrix::from_fn(m, m, |i, j| if g.has_edge(i, j) { g.distance(i, j) * 1.3 } else { f64::INFINITY });
            let fast = shortest_path_distances(&g, &weights).unwrap();
            let slow = floyd_warshall(&weights);
            for i in 0..m {
                for j in 0..m {
                    let (a, b) = (fast[(i, j)], slow[(i, j)]);
                    assert!(a == b || (a - b).abs() < 1e-9, "trial {t} ({i},{j}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn hops_on_a_line() {
        let links = DMatrix::from_fn(4, 4, |i, j| (i as i64 - j as i64).abs() == 1);
        assert_eq!(hop_counts(&links, 0), vec![Some(0), Some(1), Some(2), Some(3)]);
        let mut cut = links.clone();
        cut[(1, 2)] = false;
        assert_eq!(hop_counts(&cut, 0), vec![Some(0), Some(1), None, None]);
    }
}
