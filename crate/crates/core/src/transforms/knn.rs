use super::Metric;
use crate::error::{Error, Result};

pub fn dissimilarity(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidProvider(format!(
            "embedding dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    match metric {
        Metric::Euclidean => Ok(a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()),
        Metric::CosineDistance => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::InvalidInput(
                    "cosine distance is undefined for a zero-norm vector".into(),
                ));
            }
            Ok(1.0 - dot / (na * nb))
        }
    }
}

/// Mean dissimilarity from `query` to its `k` nearest candidates.
/// Equal distances are ordered by candidate index.
pub fn knn_mean_distance(
    query: &[f64],
    candidates: &[Vec<f64>],
    k: usize,
    metric: Metric,
) -> Result<f64> {
    if k == 0 || k > candidates.len() {
        return Err(Error::InvalidInput(format!(
            "k must satisfy 1 <= k <= {}, got {k}",
            candidates.len()
        )));
    }
    let mut dists = candidates
        .iter()
        .map(|c| dissimilarity(query, c, metric))
        .collect::<Result<Vec<f64>>>()?;
    // stable sort keeps index order among ties
    dists.sort_by(|a, b| a.total_cmp(b));
    Ok(dists[..k].iter().sum::<f64>() / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_unit_neighbours() {
        let c = vec![vec![3.0, 4.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let d = knn_mean_distance(&[0.0, 0.0], &c, 2, Metric::Euclidean).unwrap();
        assert_eq!(d, 1.0);
        let all = knn_mean_distance(&[0.0, 0.0], &c, 3, Metric::Euclidean).unwrap();
        assert!((all - 7.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn self_distance_is_zero() {
        let c = vec![vec![0.3, 0.4], vec![1.0, 1.0]];
        assert_eq!(knn_mean_distance(&[0.3, 0.4], &c, 1, Metric::Euclidean).unwrap(), 0.0);
        let cos = knn_mean_distance(&[0.3, 0.4], &c, 1, Metric::CosineDistance).unwrap();
        assert!(cos.abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        let c = vec![vec![0.0, 0.0]];
        assert!(knn_mean_distance(&[1.0, 0.0], &c, 1, Metric::CosineDistance).is_err());
    }

    #[test]
    fn dimension_mismatch_is_provider_error() {
        let c = vec![vec![1.0, 0.0, 2.0]];
        assert!(matches!(
            knn_mean_distance(&[1.0, 0.0], &c, 1, Metric::Euclidean),
            Err(Error::InvalidProvider(_))
        ));
    }

    #[test]
    fn k_bounds() {
        let c = vec![vec![1.0]];
        assert!(knn_mean_distance(&[0.0], &c, 0, Metric::Euclidean).is_err());
        assert!(knn_mean_distance(&[0.0], &c, 2, Metric::Euclidean).is_err());
    }
}
