//! Exact k-nearest-neighbor queries over point sets.
//!
//! The grid accelerator returns exactly what brute force returns: neighbors
//! are ordered by `(squared distance, point index)`, so distance ties are
//! broken by index on both paths.

use alloc::vec::Vec;
use core::cmp::Ordering;

use hashbrown::HashMap;

use crate::math::Point3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KnnBackend {
    #[default]
    Grid,
    BruteForce,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    fn cmp_key(&self, other: &Neighbor) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }

    pub fn distance(&self) -> f64 {
        libm::sqrt(self.dist2)
    }
}

/// Bounded sorted list holding the best `k` candidates seen so far.
struct Best {
    k: usize,
    items: Vec<Neighbor>,
}

impl Best {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, n: Neighbor) {
        if self.items.len() == self.k {
            match self.items.last() {
                Some(worst) if n.cmp_key(worst) == Ordering::Less => {}
                _ => return,
            }
        }
        let pos = self
            .items
            .partition_point(|e| e.cmp_key(&n) == Ordering::Less);
        self.items.insert(pos, n);
        self.items.truncate(self.k);
    }

    fn full(&self) -> bool {
        self.items.len() == self.k
    }
}

/// Brute-force `k` nearest neighbors of `query`, skipping index `exclude`.
pub fn knn_brute_force(
    points: &[Point3],
    query: Point3,
    exclude: Option<usize>,
    k: usize,
) -> Vec<Neighbor> {
    let mut best = Best::new(k);
    if k == 0 {
        return best.items;
    }
    for (index, p) in points.iter().enumerate() {
        if Some(index) == exclude {
            continue;
        }
        best.offer(Neighbor {
            index,
            dist2: query.distance_squared(*p),
        });
    }
    best.items
}

type CellKey = [i64; 3];

/// Uniform hash grid over a fixed point slice.
pub struct SpatialGrid<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: HashMap<CellKey, (u32, u32)>,
    order: Vec<u32>,
    min: CellKey,
    max: CellKey,
}

impl<'a> SpatialGrid<'a> {
    /// Grid with a cell size chosen so a surface-like cloud holds roughly
    /// `target_per_cell` points per occupied cell.
    pub fn auto(points: &'a [Point3], target_per_cell: usize) -> Self {
        Self::new(points, auto_cell_size(points, target_per_cell))
    }

    pub fn new(points: &'a [Point3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be positive");
        let keys: Vec<CellKey> = points.iter().map(|p| key_of(*p, cell)).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        order.sort_unstable_by(|a, b| keys[*a as usize].cmp(&keys[*b as usize]).then(a.cmp(b)));
        let mut cells = HashMap::new();
        let mut min = [i64::MAX; 3];
        let mut max = [i64::MIN; 3];
        let mut start = 0usize;
        while start < order.len() {
            let key = keys[order[start] as usize];
            let mut end = start + 1;
            while end < order.len() && keys[order[end] as usize] == key {
                end += 1;
            }
            cells.insert(key, (start as u32, end as u32));
            for a in 0..3 {
                min[a] = min[a].min(key[a]);
                max[a] = max[a].max(key[a]);
            }
            start = end;
        }
        Self {
            points,
            cell,
            cells,
            order,
            min,
            max,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// `k` nearest neighbors of `query`, skipping index `exclude`.
    pub fn knn(&self, query: Point3, exclude: Option<usize>, k: usize) -> Vec<Neighbor> {
        let mut best = Best::new(k);
        if k == 0 || self.points.is_empty() {
            return best.items;
        }
        let q = key_of(query, self.cell);
        // Rings closer than this cannot intersect the occupied key range.
        let mut r: i64 = (0..3)
            .map(|a| (self.min[a] - q[a]).max(q[a] - self.max[a]).max(0))
            .max()
            .unwrap_or(0);
        loop {
            self.visit_ring(q, r, |index| {
                if Some(index) != exclude {
                    best.offer(Neighbor {
                        index,
                        dist2: query.distance_squared(self.points[index]),
                    });
                }
            });
            let covered = (0..3).all(|a| q[a] - r <= self.min[a] && q[a] + r >= self.max[a]);
            if covered {
                break;
            }
            if best.full() {
                // Unvisited points lie at least `r` whole cells away.
                let bound = (r as f64) * self.cell * (1.0 - 1e-9);
                if best.items[k - 1].dist2 < bound * bound {
                    break;
                }
            }
            r += 1;
        }
        best.items
    }

    /// Nearest point to `query` (ties broken by lower index).
    pub fn nearest(&self, query: Point3) -> Option<Neighbor> {
        self.knn(query, None, 1).into_iter().next()
    }

    fn visit_ring(&self, q: CellKey, r: i64, mut f: impl FnMut(usize)) {
        let lo = |a: usize| (q[a] - r).max(self.min[a]);
        let hi = |a: usize| (q[a] + r).min(self.max[a]);
        for x in lo(0)..=hi(0) {
            let x_edge = (x - q[0]).abs() == r;
            for y in lo(1)..=hi(1) {
                let edge = x_edge || (y - q[1]).abs() == r;
                if edge {
                    for z in lo(2)..=hi(2) {
                        self.visit_cell([x, y, z], &mut f);
                    }
                } else {
                    for z in [q[2] - r, q[2] + r] {
                        if z >= self.min[2] && z <= self.max[2] {
                            self.visit_cell([x, y, z], &mut f);
                        }
                    }
                }
            }
        }
    }

    #[inline]
    fn visit_cell(&self, key: CellKey, f: &mut impl FnMut(usize)) {
        if let Some(&(s, e)) = self.cells.get(&key) {
            for &i in &self.order[s as usize..e as usize] {
                f(i as usize);
            }
        }
    }
}

#[inline]
fn key_of(p: Point3, cell: f64) -> CellKey {
    [
        libm::floor(p.x / cell) as i64,
        libm::floor(p.y / cell) as i64,
        libm::floor(p.z / cell) as i64,
    ]
}

fn auto_cell_size(points: &[Point3], target_per_cell: usize) -> f64 {
    let Some(first) = points.first() else {
        return 1.0;
    };
    let (lo, hi) = points
        .iter()
        .fold((*first, *first), |(lo, hi), p| (lo.component_min(*p), hi.component_max(*p)));
    let diag = (hi - lo).norm();
    let n = points.len() as f64;
    let cell = diag * libm::sqrt(target_per_cell.max(1) as f64 / n);
    if cell > 0.0 && cell.is_finite() {
        cell
    } else {
        1.0
    }
}

/// `k` nearest neighbors of point `query` within `points` (excluding itself).
pub fn knn_of_point(
    points: &[Point3],
    grid: Option<&SpatialGrid<'_>>,
    query: usize,
    k: usize,
) -> Vec<Neighbor> {
    match grid {
        Some(g) => g.knn(points[query], Some(query), k),
        None => knn_brute_force(points, points[query], Some(query), k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random::<f64>() * 2.0, rng.random::<f64>() * 0.1))
            .collect()
    }

    #[test]
    fn grid_matches_brute_force() {
        let pts = cloud(600, 3);
        for cell in [0.01, 0.05, 0.3, 5.0] {
            let grid = SpatialGrid::new(&pts, cell);
            for q in (0..pts.len()).step_by(7) {
                assert_eq!(grid.knn(pts[q], Some(q), 9), knn_brute_force(&pts, pts[q], Some(q), 9));
            }
        }
    }

    #[test]
    fn ties_break_by_index() {
        let pts = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 0.0),
        ];
        let grid = SpatialGrid::new(&pts, 0.3);
        let got = grid.knn(pts[3], Some(3), 2);
        assert_eq!(got.iter().map(|n| n.index).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(got, knn_brute_force(&pts, pts[3], Some(3), 2));
    }

    #[test]
    fn nearest_from_far_outside() {
        let pts = cloud(100, 9);
        let grid = SpatialGrid::auto(&pts, 8);
        let q = Vec3::new(50.0, -20.0, 3.0);
        assert_eq!(grid.nearest(q), knn_brute_force(&pts, q, None, 1).first().copied());
    }

    #[test]
    fn fewer_points_than_k() {
        let pts = cloud(4, 1);
        let grid = SpatialGrid::auto(&pts, 8);
        assert_eq!(grid.knn(pts[0], Some(0), 10).len(), 3);
    }
}
