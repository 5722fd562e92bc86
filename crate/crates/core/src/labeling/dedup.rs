use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DedupError {
    #[error("embedding {0} has zero norm")]
    ZeroVector(usize),
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Whether `cand` is strictly below `threshold` in cosine similarity to
/// every vector in `kept`.
pub fn is_novel(kept: &[&[f64]], cand: &[f64], threshold: f64) -> bool {
    kept.iter().all(|k| cosine(k, cand) < threshold)
}

/// Greedy de-duplication in input order: a vector is kept iff it is novel
/// with respect to everything kept before it. Returns kept indices.
pub fn dedup_prompts(embeddings: &[Vec<f64>], threshold: f64) -> Result<Vec<usize>, DedupError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(DedupError::Threshold(threshold));
    }
    if let Some(i) = embeddings
        .iter()
        .position(|e| e.iter().all(|&x| x == 0.0))
    {
        return Err(DedupError::ZeroVector(i));
    }
    let mut kept: Vec<usize> = Vec::new();
    for (i, e) in embeddings.iter().enumerate() {
        let refs: Vec<&[f64]> = kept.iter().map(|&k| embeddings[k].as_slice()).collect();
        if is_novel(&refs, e, threshold) {
            kept.push(i);
        }
    }
    Ok(kept)
}
