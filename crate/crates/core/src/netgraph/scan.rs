use nalgebra::Point2;

use super::{displacement, BorderMode, NodeSector};

/// Uniform-grid bucketing of sectors for degree queries that avoid building
/// the dense adjacency. Cells are at least as wide as the largest range, so
/// every link of a node is found in its own and the eight adjacent cells.
pub struct SectorIndex<'a> {
    sectors: &'a [NodeSector],
    side: f64,
    border: BorderMode,
    cells: usize,
    cell_size: f64,
    buckets: Vec<Vec<u32>>,
}

impl<'a> SectorIndex<'a> {
    pub fn new(sectors: &'a [NodeSector], side: f64, border: BorderMode) -> Self {
        let reach = sectors.iter().map(|s| s.range).fold(0.0f64, f64::max);
        let mut cells = if reach > 0.0 { (side / reach).floor() as usize } else { 1 };
        // Fewer than three cells per side would visit some cells twice.
        if cells < 3 {
            cells = 1;
        }
        cells = cells.min(1024);
        let cell_size = side / cells as f64;
        let mut buckets = vec![Vec::new(); cells * cells];
        let mut index = SectorIndex { sectors, side, border, cells, cell_size, buckets: Vec::new() };
        for (i, s) in sectors.iter().enumerate() {
            let (cx, cy) = index.cell_of(&s.position);
            buckets[cy * cells + cx].push(i as u32);
        }
        index.buckets = buckets;
        index
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    fn cell_of(&self, p: &Point2<f64>) -> (usize, usize) {
        let clamp = |v: f64| ((v / self.cell_size).floor().max(0.0) as usize).min(self.cells - 1);
        (clamp(p.x), clamp(p.y))
    }

    /// Calls `visit(j)` for every other node that could share a link with `i`.
    fn for_each_candidate(&self, i: usize, mut visit: impl FnMut(usize) -> bool) {
        let (cx, cy) = self.cell_of(&self.sectors[i].position);
        let n = self.cells as isize;
        let span: &[isize] = if self.cells == 1 { &[0] } else { &[-1, 0, 1] };
        for &dy in span {
            for &dx in span {
                let (mut x, mut y) = (cx as isize + dx, cy as isize + dy);
                match self.border {
                    BorderMode::Torus => {
                        x = x.rem_euclid(n);
                        y = y.rem_euclid(n);
                    }
                    BorderMode::Bounded => {
                        if x < 0 || y < 0 || x >= n || y >= n {
                            continue;
                        }
                    }
                }
                for &j in &self.buckets[y as usize * self.cells + x as usize] {
                    let j = j as usize;
                    if j != i && !visit(j) {
                        return;
                    }
                }
            }
        }
    }

    /// Out- and in-degree of node `i`, counting each only up to `cap`.
    pub fn degrees_capped(&self, i: usize, cap: usize) -> (usize, usize) {
        let me = &self.sectors[i];
        let (mut out, mut inn) = (0, 0);
        self.for_each_candidate(i, |j| {
            let offset = displacement(&me.position, &self.sectors[j].position, self.side, self.border);
            if out < cap && me.covers_offset(offset) {
                out += 1;
            }
            if inn < cap && self.sectors[j].covers_offset(-offset) {
                inn += 1;
            }
            out < cap || inn < cap
        });
        (out, inn)
    }

    pub fn degrees(&self, i: usize) -> (usize, usize) {
        self.degrees_capped(i, usize::MAX)
    }

    /// Same answer as [`super::DirectedSectorGraph::is_k_connected`], stopping
    /// at the first node short of `k` links in either direction.
    pub fn is_k_connected(&self, k: usize) -> bool {
        !self.sectors.is_empty()
            && (0..self.sectors.len()).all(|i| {
                let (o, a) = self.degrees_capped(i, k);
                o >= k && a >= k
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{BorderMode, Deployment, DirectedSectorGraph};
    use crate::rng;
    use rand::Rng;

    #[test]
    fn agrees_with_dense_adjacency() {
        for t in 0..300u64 {
            let mut r = rng::stream(21, &[t]);
            let border = if t % 2 == 0 { BorderMode::Bounded } else { BorderMode::Torus };
            let m = r.random_range(1..80);
            let d = Deployment::new(m, 50.0, r.random_range(0.2..std::f64::consts::TAU), r.random_range(0.0..20.0))
                .with_border(border);
            let sectors = d.sample_sectors(&mut r).unwrap();
            let g = DirectedSectorGraph::from_sectors(sectors.clone(), 50.0, border);
            let index = SectorIndex::new(&sectors, 50.0, border);
            let (out, inn) = (g.out_degrees(), g.in_degrees());
            for i in 0..m {
                assert_eq!(index.degrees(i), (out[i], inn[i]), "trial {t} node {i}");
            }
            for k in 1..4 {
                assert_eq!(index.is_k_connected(k), g.is_k_connected(k));
            }
        }
    }
}
