use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{MapError, Topic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutMethod {
    #[default]
    Pca,
    /// PCA start refined by stress majorization.
    Stress,
}

impl std::str::FromStr for LayoutMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pca" => Ok(Self::Pca),
            "stress" => Ok(Self::Stress),
            other => Err(format!("unknown layout method `{other}`")),
        }
    }
}

const STRESS_TOL: f64 = 1e-6;
const STRESS_MAX_ITER: usize = 500;

pub fn layout_2d(
    topics: &[Topic],
    method: LayoutMethod,
    seed: u64,
) -> Result<Vec<(f64, f64)>, MapError> {
    let vectors: Vec<&[f64]> = topics.iter().map(|t| t.vector.as_slice()).collect();
    if vectors.len() < 2 {
        return Err(MapError::TooFewTopics(vectors.len()));
    }
    let start = match pca(&vectors) {
        Some(c) => c,
        None => {
            log::warn!("all topic vectors coincide; returning jittered coordinates");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            return Ok((0..vectors.len())
                .map(|_| {
                    (
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    )
                })
                .collect());
        }
    };
    Ok(match method {
        LayoutMethod::Pca => start,
        LayoutMethod::Stress => stress(&vectors, start, seed),
    })
}

/// Scores on the two leading principal axes. Each axis is oriented so that
/// its largest-magnitude loading is positive. `None` when all rows coincide.
fn pca(vectors: &[&[f64]]) -> Option<Vec<(f64, f64)>> {
    let t = vectors.len();
    let d = vectors[0].len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(*v) {
            *m += x / t as f64;
        }
    }
    let x = DMatrix::from_fn(t, d, |i, j| vectors[i][j] - mean[j]);
    let gram = &x * x.transpose();
    let trace = gram.trace();
    if trace <= 1e-24 {
        return None;
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = [vec![0.0; t], vec![0.0; t]];
    for (k, axis) in axes.iter_mut().enumerate() {
        let Some(&idx) = order.get(k) else { break };
        let lambda = eig.eigenvalues[idx];
        if lambda <= 1e-12 * trace {
            continue;
        }
        let u = eig.eigenvectors.column(idx);
        let loading = x.transpose() * u;
        let mut lead = 0;
        for j in 1..d {
            if loading[j].abs() > loading[lead].abs() + 1e-12 {
                lead = j;
            }
        }
        let sign = if loading[lead] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * lambda.sqrt();
        for i in 0..t {
            axis[i] = u[i] * scale;
        }
    }
    Some((0..t).map(|i| (axes[0][i], axes[1][i])).collect())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn raw_stress(target: &[Vec<f64>], c: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            let d = ((c[i].0 - c[j].0).powi(2) + (c[i].1 - c[j].1).powi(2)).sqrt();
            s += (d - target[i][j]).powi(2);
        }
    }
    s
}

/// SMACOF iterations from `init` towards the pairwise vector distances.
/// Coincident starting points are separated with seeded jitter.
pub fn stress(vectors: &[&[f64]], init: Vec<(f64, f64)>, seed: u64) -> Vec<(f64, f64)> {
    let n = vectors.len();
    let target: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclid(vectors[i], vectors[j])).collect())
        .collect();
    let mut c = init;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = target.iter().flatten().fold(0.0f64, |a, &b| a.max(b)) * 1e-6;
    for i in 0..n {
        for j in 0..i {
            if c[i] == c[j] && target[i][j] > 0.0 {
                let dx: f64 = StandardNormal.sample(&mut rng);
                let dy: f64 = StandardNormal.sample(&mut rng);
                c[i].0 += dx * scale;
                c[i].1 += dy * scale;
            }
        }
    }
    let mut current = raw_stress(&target, &c);
    for _ in 0..STRESS_MAX_ITER {
        if current == 0.0 {
            break;
        }
        let mut next = vec![(0.0, 0.0); n];
        for i in 0..n {
            let (mut bx, mut by) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = ((c[i].0 - c[j].0).powi(2) + (c[i].1 - c[j].1).powi(2)).sqrt();
                let b = if d > 0.0 { target[i][j] / d } else { 0.0 };
                bx += b * (c[i].0 - c[j].0);
                by += b * (c[i].1 - c[j].1);
            }
            next[i] = (bx / n as f64, by / n as f64);
        }
        // The Guttman transform assumes a centred configuration.
        let (mx, my) = next.iter().fold((0.0, 0.0), |a, p| {
            (a.0 + p.0 / n as f64, a.1 + p.1 / n as f64)
        });
        let cx = c.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let cy = c.iter().map(|p| p.1).sum::<f64>() / n as f64;
        for p in &mut next {
            p.0 += cx - mx;
            p.1 += cy - my;
        }
        let s = raw_stress(&target, &next);
        let improvement = (current - s) / current;
        c = next;
        current = s;
        if improvement < STRESS_TOL {
            break;
        }
    }
    c
}
