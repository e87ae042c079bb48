//! Density-Based Clustering Validation index.

use std::collections::BTreeMap;

use super::{LeakageError, Result, NOISE};

const DIM: i32 = 2;

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Per-cluster density structure.
struct ClusterDensity {
    members: Vec<usize>,
    /// Indices into `members` of MST vertices with degree >= 2 (all members if none).
    internal: Vec<usize>,
    sparseness: f64,
}

/// All-points core distance of every member, within its own cluster.
///
/// `core(o) = (sum_{p != o} (1 / d(o, p))^D / (n - 1))^(-1/D)`; a duplicate
/// point makes the sum infinite and the core distance 0.
fn core_distances(points: &[[f64; 2]], members: &[usize]) -> Vec<f64> {
    let n = members.len();
    members
        .iter()
        .map(|&o| {
            let sum: f64 = members.iter().filter(|&&p| p != o).map(|&p| dist(&points[o], &points[p]).powi(-DIM)).sum();
            (sum / (n - 1) as f64).powf(-1.0 / DIM as f64)
        })
        .collect()
}

/// Prim's algorithm on the complete mutual-reachability graph; returns MST edges.
fn mst(points: &[[f64; 2]], members: &[usize], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = members.len();
    let mreach = |a: usize, b: usize| core[a].max(core[b]).max(dist(&points[members[a]], &points[members[b]]));
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    in_tree[0] = true;
    for j in 1..n {
        best[j] = mreach(0, j);
    }
    for _ in 1..n {
        let (next, _) = (0..n)
            .filter(|&j| !in_tree[j])
            .map(|j| (j, best[j]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("vertices remain");
        in_tree[next] = true;
        edges.push((parent[next], next, best[next]));
        for j in 0..n {
            if !in_tree[j] {
                let w = mreach(next, j);
                if w < best[j] {
                    best[j] = w;
                    parent[j] = next;
                }
            }
        }
    }
    edges
}

/// DBCV score in `[-1, 1]` of a labelled 2D point set.
///
/// Each cluster's validity is `(separation - sparseness) / max(separation,
/// sparseness)`, where sparseness is the heaviest internal edge of the
/// cluster's mutual-reachability MST and separation the smallest
/// mutual-reachability distance between its internal vertices and those of
/// any other cluster. Validities are weighted by cluster size over the total
/// point count, noise included; noise and single-point clusters contribute 0.
pub fn dbcv(points: &[[f64; 2]], labels: &[i32]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(LeakageError::InvalidParameter(format!("{} points but {} labels", points.len(), labels.len())));
    }
    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            groups.entry(l).or_default().push(i);
        }
    }
    groups.retain(|_, m| m.len() >= 2);
    if groups.len() < 2 {
        return Err(LeakageError::TooFewClusters(groups.len()));
    }

    let mut core = vec![0.0; points.len()];
    let clusters: Vec<ClusterDensity> = groups
        .into_values()
        .map(|mut members| {
            // Canonical vertex order for the MST.
            members.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(points[a][1].total_cmp(&points[b][1])));
            let local_core = core_distances(points, &members);
            for (&m, &c) in members.iter().zip(&local_core) {
                core[m] = c;
            }
            let edges = mst(points, &members, &local_core);
            let mut degree = vec![0usize; members.len()];
            for &(a, b, _) in &edges {
                degree[a] += 1;
                degree[b] += 1;
            }
            let internal_edges: Vec<f64> =
                edges.iter().filter(|(a, b, _)| degree[*a] > 1 && degree[*b] > 1).map(|e| e.2).collect();
            let sparseness = if internal_edges.is_empty() {
                edges.iter().map(|e| e.2).fold(0.0, f64::max)
            } else {
                internal_edges.into_iter().fold(0.0, f64::max)
            };
            let mut internal: Vec<usize> = (0..members.len()).filter(|&k| degree[k] > 1).collect();
            if internal.is_empty() {
                internal = (0..members.len()).collect();
            }
            ClusterDensity { members, internal, sparseness }
        })
        .collect();

    let k = clusters.len();
    let mut separation = vec![f64::INFINITY; k];
    for i in 0..k {
        for j in i + 1..k {
            let mut best = f64::INFINITY;
            for &a in &clusters[i].internal {
                let pa = clusters[i].members[a];
                for &b in &clusters[j].internal {
                    let pb = clusters[j].members[b];
                    best = best.min(core[pa].max(core[pb]).max(dist(&points[pa], &points[pb])));
                }
            }
            separation[i] = separation[i].min(best);
            separation[j] = separation[j].min(best);
        }
    }

    let total = points.len() as f64;
    let score: f64 = clusters
        .iter()
        .zip(&separation)
        .map(|(c, &sep)| {
            let denom = sep.max(c.sparseness);
            let validity = if denom > 0.0 { (sep - c.sparseness) / denom } else { 0.0 };
            validity * c.members.len() as f64 / total
        })
        .sum();
    Ok(score.clamp(-1.0, 1.0))
}
