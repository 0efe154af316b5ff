use nalgebra::{DMatrix, DVector};

use super::AnchorSet;
use crate::netgraph::hop_counts;

/// Range-free DV-hop. Returns estimated positions and which nodes could be
/// placed; anchors keep their given positions.
pub(crate) fn dv_hop(links: &DMatrix<bool>, anchors: &AnchorSet) -> (DMatrix<f64>, Vec<bool>) {
    let m = links.nrows();
    let idx = anchors.indices();
    let truth = anchors.true_positions();
    let k = idx.len();
    let hops: Vec<Vec<Option<usize>>> = idx.iter().map(|&a| hop_counts(links, a)).collect();

    // average metres per hop seen from each anchor
    let correction: Vec<Option<f64>> = (0..k)
        .map(|a| {
            let (mut dist, mut count) = (0.0, 0usize);
            for b in (0..k).filter(|&b| b != a) {
                if let Some(h) = hops[a][idx[b]] {
                    dist += (truth.row(a) - truth.row(b)).norm();
                    count += h;
                }
            }
            (count > 0).then(|| dist / count as f64)
        })
        .collect();

    let centroid = truth.row_mean();
    let mut est = DMatrix::from_fn(m, 2, |_, c| centroid[c]);
    let mut localized = vec![false; m];
    for (a, &node) in idx.iter().enumerate() {
        est.row_mut(node).copy_from(&truth.row(a));
        localized[node] = true;
    }

    for node in (0..m).filter(|n| !idx.contains(n)) {
        let nearest = (0..k).filter(|&a| correction[a].is_some()).filter_map(|a| hops[a][node].map(|h| (h, a))).min();
        let Some((_, near)) = nearest else { continue };
        let per_hop = correction[near].unwrap();
        let reach: Vec<(usize, f64)> = (0..k).filter_map(|a| hops[a][node].map(|h| (a, h as f64 * per_hop))).collect();
        if reach.len() < 3 {
            continue;
        }
        if let Some(p) = laterate(&reach, truth) {
            est.row_mut(node).copy_from(&p.transpose());
            localized[node] = true;
        }
    }
    (est, localized)
}

/// Linear least squares on range equations, differenced against the last
/// anchor.
fn laterate(reach: &[(usize, f64)], truth: &DMatrix<f64>) -> Option<DVector<f64>> {
    let (last, d_last) = *reach.last()?;
    let pl = truth.row(last);
    let n = reach.len() - 1;
    let mut a = DMatrix::zeros(n, 2);
    let mut b = DVector::zeros(n);
    for (row, &(anc, d)) in reach[..n].iter().enumerate() {
        let p = truth.row(anc);
        a[(row, 0)] = 2.0 * (pl[0] - p[0]);
        a[(row, 1)] = 2.0 * (pl[1] - p[1]);
        b[row] = d * d - d_last * d_last - p.norm_squared() + pl.norm_squared();
    }
    let x = a.svd(true, true).solve(&b, 1e-12).ok()?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}
