use std::collections::HashMap;

use super::{LeakageError, Result};

/// Label of points that belong to no cluster.
pub const NOISE: i32 = -1;
const UNVISITED: i32 = -2;

/// Uniform grid with `eps`-sized cells; neighbours of a point lie in the 3x3 block around its cell.
struct Grid {
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[[f64; 2]], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { eps, cells }
    }

    fn key(p: &[f64; 2], eps: f64) -> (i64, i64) {
        ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64)
    }

    fn neighbours(&self, points: &[[f64; 2]], i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = points[i];
        let (cx, cy) = Self::key(&p, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                let Some(bucket) = self.cells.get(&(cx.saturating_add(dx), cy.saturating_add(dy))) else {
                    continue;
                };
                for &j in bucket {
                    let q = points[j];
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                    if d2 <= eps2 {
                        out.push(j);
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Density clustering of 2D points.
///
/// A point is core when at least `min_samples` points (itself included) lie
/// within Euclidean distance `eps`. Clusters are the connected components of
/// core points plus the border points they reach; a border point reachable
/// from several clusters joins the one discovered first (clusters are
/// discovered in order of their lowest-index core point). Cluster ids start
/// at 0; everything else is [`NOISE`].
pub fn dbscan(points: &[[f64; 2]], eps: f64, min_samples: usize) -> Result<Vec<i32>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(LeakageError::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if min_samples == 0 {
        return Err(LeakageError::InvalidParameter("min_samples must be at least 1".into()));
    }
    if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(LeakageError::InvalidParameter("points must be finite".into()));
    }
    let grid = Grid::new(points, eps);
    let mut neighbourhoods = Vec::with_capacity(points.len());
    let mut buf = Vec::new();
    for i in 0..points.len() {
        grid.neighbours(points, i, &mut buf);
        neighbourhoods.push(buf.clone());
    }
    let core: Vec<bool> = neighbourhoods.iter().map(|nb| nb.len() >= min_samples).collect();

    let mut labels = vec![UNVISITED; points.len()];
    let mut next = 0;
    let mut queue = Vec::new();
    for i in 0..points.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        if !core[i] {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = next;
        queue.push(i);
        while let Some(q) = queue.pop() {
            if !core[q] {
                continue;
            }
            for &j in &neighbourhoods[q] {
                if labels[j] == UNVISITED || labels[j] == NOISE {
                    labels[j] = next;
                    queue.push(j);
                }
            }
        }
        next += 1;
    }
    Ok(labels)
}
