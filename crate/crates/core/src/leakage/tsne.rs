//! Exact t-SNE with dense O(n^2) gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LeakageError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneParams {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities and the initial momentum.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            learning_rate: 200.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

/// One image placed in the embedded plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduced2D {
    pub image_id: String,
    pub x: f64,
    pub y: f64,
}

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;

fn squared_distances(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = data[i].iter().zip(&data[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

/// Row-stochastic Gaussian affinities `p_{j|i}` (row-major, zero diagonal).
///
/// Each row's precision `1 / (2 sigma_i^2)` is bisected until the row's
/// Shannon entropy (nats) is within 1e-5 of `ln(perplexity)`. Returns the
/// matrix and the per-row precisions.
pub fn conditional_probabilities(sq_dist: &[f64], n: usize, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut betas = vec![1.0; n];
    for i in 0..n {
        let row = &sq_dist[i * n..(i + 1) * n];
        let d_min = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        let out = &mut p[i * n..(i + 1) * n];
        for _ in 0..MAX_BISECTIONS {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    out[j] = 0.0;
                    continue;
                }
                let shifted = row[j] - d_min;
                let v = (-beta * shifted).exp();
                out[j] = v;
                sum += v;
                weighted += shifted * v;
            }
            let entropy = sum.ln() + beta * weighted / sum;
            for v in out.iter_mut() {
                *v /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
        betas[i] = beta;
    }
    (p, betas)
}

/// Embeds `data` (one row per point) into two dimensions.
///
/// Affinities are symmetrized as `(p_{j|i} + p_{i|j}) / 2n`. The KL divergence
/// is minimized by gradient descent with momentum, per-parameter adaptive
/// gains and early exaggeration. The initial layout is drawn from
/// `N(0, 1e-4^2)` with the given seed, so results are reproducible.
pub fn tsne(data: &[Vec<f64>], params: &TsneParams) -> Result<Vec<[f64; 2]>> {
    let n = data.len();
    let perplexity = params.perplexity;
    if !(perplexity > 1.0) || !perplexity.is_finite() {
        return Err(LeakageError::InvalidParameter(format!("perplexity must exceed 1, got {perplexity}")));
    }
    if !(n as f64 > 3.0 * perplexity) {
        return Err(LeakageError::PerplexityTooLarge { perplexity, n });
    }
    if !(params.learning_rate > 0.0) {
        return Err(LeakageError::InvalidParameter("learning rate must be positive".into()));
    }
    let dim = data[0].len();
    if data.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(LeakageError::InvalidParameter("rows must be finite and of equal length".into()));
    }
    if data.iter().all(|r| r == &data[0]) {
        return Err(LeakageError::DegenerateInput);
    }

    let sq = squared_distances(data);
    let (cond, _) = conditional_probabilities(&sq, n, perplexity);
    drop(sq);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }
    drop(cond);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0; 2]; n];
    let mut num = vec![0.0; n * n];

    for iter in 0..params.iterations {
        let early = iter < params.exaggeration_iterations;
        let exaggeration = if early { params.early_exaggeration } else { 1.0 };
        let momentum = if early { params.initial_momentum } else { params.final_momentum };

        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        for g in grad.iter_mut() {
            *g = [0.0; 2];
        }
        for i in 0..n {
            for j in i + 1..n {
                let q = num[i * n + j];
                let coeff = 4.0 * (exaggeration * p[i * n + j] - q / z) * q;
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                grad[i][0] += coeff * dx;
                grad[i][1] += coeff * dy;
                grad[j][0] -= coeff * dx;
                grad[j][1] -= coeff * dy;
            }
        }
        for i in 0..n {
            for k in 0..2 {
                let same_sign = (grad[i][k] > 0.0) == (update[i][k] > 0.0);
                gains[i][k] = if same_sign { gains[i][k] * 0.8 } else { gains[i][k] + 0.2 };
                gains[i][k] = gains[i][k].max(MIN_GAIN);
                update[i][k] = momentum * update[i][k] - params.learning_rate * gains[i][k] * grad[i][k];
                y[i][k] += update[i][k];
            }
        }
        let (mx, my) = y.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        let (mx, my) = (mx / n as f64, my / n as f64);
        for p in y.iter_mut() {
            p[0] -= mx;
            p[1] -= my;
        }
    }
    Ok(y)
}

/// Runs [`tsne`] and tags each output row with its image id.
pub fn reduce(ids: &[String], data: &[Vec<f64>], params: &TsneParams) -> Result<Vec<Reduced2D>> {
    if ids.len() != data.len() {
        return Err(LeakageError::InvalidParameter(format!("{} ids for {} embedding rows", ids.len(), data.len())));
    }
    let y = tsne(data, params)?;
    Ok(ids.iter().zip(y).map(|(id, [x, y])| Reduced2D { image_id: id.clone(), x, y }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(n_per: usize, centers: &[Vec<f64>], spread: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, spread).unwrap();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..n_per {
                data.push(c.iter().map(|v| v + normal.sample(&mut rng)).collect());
                labels.push(k);
            }
        }
        (data, labels)
    }

    #[test]
    fn perplexity_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<Vec<f64>> = (0..120).map(|_| (0..10).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let n = data.len();
        let (p, _) = conditional_probabilities(&squared_distances(&data), n, 30.0);
        for i in 0..n {
            let row = &p[i * n..(i + 1) * n];
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
            assert!((h.exp() - 30.0).abs() < 1e-3, "row {i}: perplexity {}", h.exp());
        }
    }

    #[test]
    fn preconditions() {
        let data: Vec<Vec<f64>> = (0..90).map(|i| vec![i as f64]).collect();
        assert!(matches!(tsne(&data, &TsneParams::default()), Err(LeakageError::PerplexityTooLarge { .. })));
        let same = vec![vec![1.0, 2.0]; 100];
        assert_eq!(tsne(&same, &TsneParams::default()), Err(LeakageError::DegenerateInput));
        let p = TsneParams { perplexity: 1.0, ..Default::default() };
        assert!(matches!(tsne(&same, &p), Err(LeakageError::InvalidParameter(_))));
    }

    #[test]
    fn separates_two_blobs_and_is_deterministic() {
        let centers = vec![vec![0.0; 5], vec![20.0; 5]];
        let (data, labels) = blobs(100, &centers, 1.0, 4);
        let params = TsneParams { iterations: 500, seed: 11, ..Default::default() };
        let y = tsne(&data, &params).unwrap();
        let mut correct = 0;
        for i in 0..y.len() {
            let nn = (0..y.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let da = (y[i][0] - y[a][0]).powi(2) + (y[i][1] - y[a][1]).powi(2);
                    let db = (y[i][0] - y[b][0]).powi(2) + (y[i][1] - y[b][1]).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap();
            correct += usize::from(labels[nn] == labels[i]);
        }
        assert!(correct as f64 >= 0.95 * y.len() as f64);
        assert_eq!(tsne(&data, &params).unwrap(), y);
    }

    #[test]
    fn duplicates_embed_together() {
        let centers = vec![vec![0.0; 4], vec![10.0; 4], vec![-10.0, 10.0, 0.0, 5.0]];
        let (mut data, _) = blobs(30, &centers, 1.0, 5);
        let originals = data.len();
        data.extend(data.clone());
        let y = tsne(&data, &TsneParams { seed: 2, ..Default::default() }).unwrap();
        let diameter = y
            .iter()
            .flat_map(|a| y.iter().map(move |b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()))
            .fold(0.0, f64::max);
        for i in 0..originals {
            let j = i + originals;
            let d = ((y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2)).sqrt();
            assert!(d < 1e-3 * diameter, "pair {i}: {d} vs diameter {diameter}");
        }
    }
}
