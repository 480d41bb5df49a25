//! Exact diameters of point sets.

use crate::math::matrix::dist;
use crate::math::Matrix;

/// Largest subsample the brute-force diameter visits.
pub const BRUTE_FORCE_LIMIT: usize = 20_000;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

/// Diameter of a planar point set: hull, then rotating calipers over
/// antipodal vertex pairs.
pub fn diameter_2d(points: &[[f64; 2]]) -> f64 {
    let h = convex_hull(points);
    match h.len() {
        0 | 1 => 0.0,
        2 => dist(&h[0], &h[1]),
        n => {
            let mut best: f64 = 0.0;
            let mut j = 1;
            for i in 0..n {
                let ni = (i + 1) % n;
                // Advance j while the triangle (i, i+1, j) keeps growing.
                while cross(h[i], h[ni], h[(j + 1) % n]).abs() > cross(h[i], h[ni], h[j]).abs() {
                    j = (j + 1) % n;
                }
                best = best.max(dist(&h[i], &h[j])).max(dist(&h[ni], &h[j]));
            }
            best
        }
    }
}

/// Max pairwise distance over all rows.
pub fn diameter_brute_force(x: &Matrix) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..x.rows() {
        for j in i + 1..x.rows() {
            best = best.max(dist(x.row(i), x.row(j)));
        }
    }
    best
}

/// Exact in two dimensions; otherwise brute force over the first
/// [`BRUTE_FORCE_LIMIT`] rows.
pub fn empirical_diameter(x: &Matrix) -> f64 {
    if x.cols() == 2 {
        let pts: Vec<[f64; 2]> = (0..x.rows()).map(|r| [x.get(r, 0), x.get(r, 1)]).collect();
        diameter_2d(&pts)
    } else if x.rows() > BRUTE_FORCE_LIMIT {
        diameter_brute_force(&x.row_block(0, BRUTE_FORCE_LIMIT))
    } else {
        diameter_brute_force(x)
    }
}
