//! In-memory classification dataset and a synthetic Gaussian-cluster
//! generator used when no image files are on hand.

use crate::numerics::{Rng, Tensor};

/// Feature matrix with one integer class label per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `n x d` feature matrix.
    features: Tensor,
    /// `n` labels, each in `[0, classes)`.
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Dataset {
        assert_eq!(features.rows(), labels.len(), "row/label count mismatch");
        assert!(classes >= 1, "need at least one class");
        assert!(
            labels.iter().all(|&l| l < classes),
            "label outside [0, classes)"
        );
        assert!(features.all_finite(), "non-finite feature");
        Dataset { features, labels, classes }
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Copies the selected rows into a dense `(features, labels)` pair.
    pub fn gather(&self, rows: &[usize]) -> (Tensor, Vec<usize>) {
        let d = self.dim();
        let mut f = Tensor::zeros(&[rows.len(), d]);
        let mut l = Vec::with_capacity(rows.len());
        for (i, &r) in rows.iter().enumerate() {
            f.data_mut()[i * d..(i + 1) * d].copy_from_slice(self.features.row(r));
            l.push(self.labels[r]);
        }
        (f, l)
    }
}

/// Unit-variance Gaussian clusters at random centers whose pairwise
/// distances are at least `separation`; labels are the cluster ids, rows
/// grouped by class.
pub fn make_blobs(
    classes: usize,
    per_class: usize,
    d: usize,
    separation: f64,
    rng: &mut Rng,
) -> Dataset {
    assert!(classes >= 1 && per_class >= 1 && d >= 1, "all sizes must be at least 1");
    assert!(separation >= 0.0 && separation.is_finite(), "bad separation");

    // Rejection-sample centers; widen the proposal radius if a spacing this
    // tight keeps failing, so termination never depends on luck.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    let mut radius = separation.max(1.0);
    let mut failures = 0usize;
    while centers.len() < classes {
        let candidate: Vec<f64> = (0..d).map(|_| radius * rng.normal()).collect();
        let spaced = centers.iter().all(|c| {
            let dist2: f64 = c.iter().zip(&candidate).map(|(a, b)| (a - b) * (a - b)).sum();
            dist2 >= separation * separation
        });
        if spaced {
            centers.push(candidate);
        } else {
            failures += 1;
            if failures % 100 == 0 {
                radius *= 2.0;
            }
        }
    }

    let n = classes * per_class;
    let mut features = Tensor::zeros(&[n, d]);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for s in 0..per_class {
            let row = class * per_class + s;
            for (j, &c) in center.iter().enumerate() {
                features.data_mut()[row * d + j] = c + rng.normal();
            }
            labels.push(class);
        }
    }
    Dataset::new(features, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_all_labels_zero() {
        let mut rng = Rng::new(1);
        let data = make_blobs(1, 12, 3, 5.0, &mut rng);
        assert_eq!(data.len(), 12);
        assert!(data.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn row_count_is_classes_times_per_class() {
        let mut rng = Rng::new(2);
        let data = make_blobs(4, 7, 5, 2.0, &mut rng);
        assert_eq!(data.len(), 28);
        assert_eq!(data.features().rows(), 28);
        assert_eq!(data.features().cols(), 5);
        assert_eq!(data.classes(), 4);
    }

    /// Well-separated unit-variance clusters are almost perfectly classified
    /// by the nearest class centroid.
    #[test]
    fn nearest_centroid_oracle_on_separated_clusters() {
        let mut rng = Rng::new(3);
        let data = make_blobs(5, 200, 2, 10.0, &mut rng);
        let d = data.dim();
        let mut centroids = vec![vec![0.0; d]; data.classes()];
        let mut counts = vec![0usize; data.classes()];
        for (row, &label) in data.labels().iter().enumerate() {
            for j in 0..d {
                centroids[label][j] += data.features().row(row)[j];
            }
            counts[label] += 1;
        }
        for (c, count) in centroids.iter_mut().zip(&counts) {
            for v in c.iter_mut() {
                *v /= *count as f64;
            }
        }
        let mut correct = 0usize;
        for (row, &label) in data.labels().iter().enumerate() {
            let x = data.features().row(row);
            let best = (0..data.classes())
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(&centroids[a]).map(|(p, q)| (p - q) * (p - q)).sum();
                    let db: f64 = x.iter().zip(&centroids[b]).map(|(p, q)| (p - q) * (p - q)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == label {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / data.len() as f64;
        assert!(accuracy >= 0.99, "accuracy {accuracy}");
    }

    #[test]
    fn centers_respect_separation() {
        let mut rng = Rng::new(4);
        let data = make_blobs(6, 50, 4, 8.0, &mut rng);
        // Recover empirical centroids and check their spacing; with 50 points
        // per cluster the centroid error is well under the 8.0 gap.
        let d = data.dim();
        let mut centroids = vec![vec![0.0; d]; 6];
        for (row, &label) in data.labels().iter().enumerate() {
            for j in 0..d {
                centroids[label][j] += data.features().row(row)[j] / 50.0;
            }
        }
        for a in 0..6 {
            for b in (a + 1)..6 {
                let dist: f64 = centroids[a]
                    .iter()
                    .zip(&centroids[b])
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist >= 8.0 - 1.5, "centroids {a},{b} only {dist} apart");
            }
        }
    }

    #[test]
    fn gather_selects_rows() {
        let mut rng = Rng::new(5);
        let data = make_blobs(2, 3, 2, 4.0, &mut rng);
        let (f, l) = data.gather(&[5, 0]);
        assert_eq!(f.rows(), 2);
        assert_eq!(l, vec![data.labels()[5], data.labels()[0]]);
        assert_eq!(f.row(0), data.features().row(5));
    }

    #[test]
    #[should_panic(expected = "label outside")]
    fn rejects_out_of_range_label() {
        Dataset::new(Tensor::matrix(1, 1, vec![0.0]), vec![2], 2);
    }
}
