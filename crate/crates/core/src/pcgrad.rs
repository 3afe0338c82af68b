//! Gradient surgery across objectives: conflicting gradient pairs are
//! resolved by projecting one gradient off the other's direction before
//! summation.

use rand::seq::SliceRandom;
use rand::Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of the angle between two gradients; zero when either vanishes.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Projects each objective gradient off every conflicting peer and sums.
///
/// For each objective i, the other objectives are visited in a fresh random
/// order; whenever the working copy of g_i has a negative dot product with
/// the ORIGINAL g_j, its projection onto g_j is subtracted. Zero-norm peers
/// are skipped. With no conflicts the merge equals the plain sum.
pub fn pcgrad_merge<R: Rng>(grads: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
    assert!(!grads.is_empty());
    let dim = grads[0].len();
    assert!(
        grads.iter().all(|g| g.len() == dim),
        "gradient length mismatch"
    );
    let norms_sq: Vec<f64> = grads.iter().map(|g| dot(g, g)).collect();
    let mut merged = vec![0.0; dim];
    let mut order: Vec<usize> = Vec::with_capacity(grads.len() - 1);
    for i in 0..grads.len() {
        let mut work = grads[i].clone();
        order.clear();
        order.extend((0..grads.len()).filter(|&j| j != i));
        order.shuffle(rng);
        for &j in &order {
            if norms_sq[j] == 0.0 {
                continue;
            }
            let conflict = dot(&work, &grads[j]);
            if conflict < 0.0 {
                let scale = conflict / norms_sq[j];
                for (w, g) in work.iter_mut().zip(&grads[j]) {
                    *w -= scale * g;
                }
            }
        }
        for (m, w) in merged.iter_mut().zip(&work) {
            *m += w;
        }
    }
    merged
}

/// Plain gradient sum, the ablation counterpart of [`pcgrad_merge`].
pub fn sum_merge(grads: &[Vec<f64>]) -> Vec<f64> {
    let mut merged = vec![0.0; grads[0].len()];
    for g in grads {
        for (m, v) in merged.iter_mut().zip(g) {
            *m += v;
        }
    }
    merged
}
