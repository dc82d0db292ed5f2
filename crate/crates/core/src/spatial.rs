//! Uniform hash grid over a point set for radius and box queries.

use std::collections::HashMap;

use crate::se3::Vec3;

#[derive(Debug, Clone)]
pub struct PointIndex {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl PointIndex {
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell size must be positive");
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p, cell)).or_default().push(i as u32);
        }
        PointIndex { cell, cells }
    }

    /// Indices of every point that may lie within `radius` of `center`.
    /// The result is a superset; callers apply their own exact test.
    /// Indices are returned in ascending order.
    pub fn candidates(&self, center: &Vec3, radius: f64) -> Vec<u32> {
        let lo = key(&(center - Vec3::repeat(radius)), self.cell);
        let hi = key(&(center + Vec3::repeat(radius)), self.cell);
        let mut out = Vec::new();
        let span = (hi.0 - lo.0 + 1) * (hi.1 - lo.1 + 1) * (hi.2 - lo.2 + 1);
        if span as usize > self.cells.len() {
            for v in self.cells.values() {
                out.extend_from_slice(v);
            }
        } else {
            for i in lo.0..=hi.0 {
                for j in lo.1..=hi.1 {
                    for k in lo.2..=hi.2 {
                        if let Some(v) = self.cells.get(&(i, j, k)) {
                            out.extend_from_slice(v);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn key(p: &Vec3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}
