use crate::dataset::{RoutingTable, SplitIndices};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;

pub const DEFAULT_K: usize = 50;

/// k-nearest-neighbour baseline: predicted performance is the mean
/// performance row of the `k` closest training queries (Euclidean distance,
/// ties broken by lower training index).
#[derive(Debug, Clone, PartialEq)]
pub struct KnnRouter {
    pub k: usize,
    pub split_seed: u64,
    pub train_indices: Vec<usize>,
    embeddings: Vec<Vec<f64>>,
    perf: Vec<Vec<f64>>,
}

impl KnnRouter {
    pub fn fit(table: &RoutingTable, split: &SplitIndices, k: usize) -> Result<Self> {
        Self::fit_indices(table, &split.train, split.seed, k)
    }

    fn fit_indices(table: &RoutingTable, train: &[usize], split_seed: u64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("k must be positive".into()));
        }
        if train.is_empty() {
            return Err(Error::Invalid("training split is empty".into()));
        }
        if let Some(&bad) = train.iter().find(|&&n| n >= table.n_queries()) {
            return Err(Error::Invalid(format!("training index {bad} out of range")));
        }
        Ok(Self {
            k,
            split_seed,
            train_indices: train.to_vec(),
            embeddings: train.iter().map(|&n| table.embedding(n).to_vec()).collect(),
            perf: train.iter().map(|&n| table.perf_row(n).to_vec()).collect(),
        })
    }

    pub fn predict(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.embeddings[0].len() {
            return Err(Error::Shape(format!(
                "query embedding has dimension {}, index holds {}",
                embedding.len(),
                self.embeddings[0].len()
            )));
        }
        let mut dist: Vec<(f64, usize)> = self
            .embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| (e.iter().zip(embedding).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_unstable_by(cmp);
        let width = self.perf[0].len();
        let mut mean = vec![0.0; width];
        for &(_, i) in &dist {
            for (m, a) in mean.iter_mut().zip(&self.perf[i]) {
                *m += a;
            }
        }
        mean.iter_mut().for_each(|m| *m /= k as f64);
        Ok(mean)
    }

    /// The checkpoint stores the neighbour count and training indices; the
    /// table itself is re-read at load time.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "k": self.k,
            "split_seed": self.split_seed,
            "train_indices": self.train_indices,
        });
        Checkpoint::new("knn", meta, Vec::new(), Vec::new())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, table: &RoutingTable) -> Result<Self> {
        let bad = |m: &str| Error::Invalid(format!("kNN checkpoint: {m}"));
        let k = ckpt.meta["k"].as_u64().ok_or_else(|| bad("missing k"))? as usize;
        let split_seed = ckpt.meta["split_seed"]
            .as_u64()
            .ok_or_else(|| bad("missing split_seed"))?;
        let train: Vec<usize> =
            serde_json::from_value(ckpt.meta["train_indices"].clone()).map_err(|e| bad(&e.to_string()))?;
        Self::fit_indices(table, &train, split_seed, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Matrix, ModelInfo, QueryRecord};

    fn table(perf: Vec<Vec<f64>>) -> RoutingTable {
        let n = perf.len();
        RoutingTable::new(
            (0..2)
                .map(|j| ModelInfo {
                    id: j,
                    name: format!("m{j}"),
                    unit_price: 1.0,
                })
                .collect(),
            (0..n)
                .map(|i| QueryRecord {
                    query_id: i.to_string(),
                    embedding: vec![i as f64, (i * i) as f64],
                })
                .collect(),
            Matrix::from_rows(&perf).unwrap(),
            Matrix::from_fn(n, 2, |_, j| 1.0 + j as f64),
        )
        .unwrap()
    }

    #[test]
    fn nearest_self_with_k1() {
        let t = table(vec![vec![0.1, 0.9], vec![0.7, 0.2], vec![0.4, 0.4]]);
        let knn = KnnRouter::fit(&t, &SplitIndices::full(3), 1).unwrap();
        for n in 0..3 {
            assert_eq!(knn.predict(t.embedding(n)).unwrap(), t.perf_row(n));
        }
    }

    #[test]
    fn identical_rows_give_that_row() {
        let t = table(vec![vec![0.25, 0.75]; 5]);
        let knn = KnnRouter::fit(&t, &SplitIndices::full(5), 3).unwrap();
        assert_eq!(knn.predict(&[10.0, -3.0]).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn k_larger_than_train_uses_all() {
        let t = table(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let knn = KnnRouter::fit(&t, &SplitIndices::full(2), 50).unwrap();
        assert_eq!(knn.predict(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn checkpoint_rebuilds_from_table() {
        let t = table(vec![vec![0.1, 0.9], vec![0.7, 0.2], vec![0.4, 0.4]]);
        let knn = KnnRouter::fit(&t, &SplitIndices::full(3), 2).unwrap();
        let ckpt = Checkpoint::from_bytes(&knn.to_checkpoint().unwrap().to_bytes()).unwrap();
        assert_eq!(KnnRouter::from_checkpoint(&ckpt, &t).unwrap(), knn);
    }
}
