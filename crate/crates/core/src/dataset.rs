//! Routing tables: per-query embeddings with a performance matrix and a cost
//! matrix over a pool of models, plus splits and a synthetic generator.
//!
//! On-disk layout of a table directory:
//!
//! ```text
//! models.json    [{"id": 0, "name": "...", "unit_price": 1e-6}, ...]
//! queries.jsonl  {"query_id": "...", "embedding": [...]}   one per line
//! perf.csv       N rows x K columns, no header
//! cost.csv       N rows x K columns, no header
//! split.json     {"seed": 42, "train": [...], "valid": [...], "test": [...]}   (optional)
//! ```
//!
//! Floats are written in shortest round-trip form, so save followed by load
//! is bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: usize,
    pub name: String,
    pub unit_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub embedding: Vec<f64>,
}

/// Row-major `N x K` matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (n, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "row {n} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for n in 0..rows {
            for j in 0..cols {
                data.push(f(n, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.cols..(n + 1) * self.cols]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.cols..(n + 1) * self.cols]
    }

    pub fn get(&self, n: usize, j: usize) -> f64 {
        self.data[n * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Offline routing table: `perf[n][j]` and `cost[n][j]` for query `n` and
/// model `j`, with a precomputed embedding per query.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    models: Vec<ModelInfo>,
    queries: Vec<QueryRecord>,
    perf: Matrix,
    cost: Matrix,
}

impl RoutingTable {
    pub fn new(models: Vec<ModelInfo>, queries: Vec<QueryRecord>, perf: Matrix, cost: Matrix) -> Result<Self> {
        let table = Self {
            models,
            queries,
            perf,
            cost,
        };
        table.validate()?;
        Ok(table)
    }

    /// Table with generated model names (`m0`, `m1`, ...), unit prices of 1
    /// and query ids `q0`, `q1`, ...
    pub fn from_rows(perf: &[Vec<f64>], cost: &[Vec<f64>], embeddings: Vec<Vec<f64>>) -> Result<Self> {
        let k = perf.first().map_or(0, Vec::len);
        let models = (0..k)
            .map(|j| ModelInfo {
                id: j,
                name: format!("m{j}"),
                unit_price: 1.0,
            })
            .collect();
        let queries = embeddings
            .into_iter()
            .enumerate()
            .map(|(n, embedding)| QueryRecord {
                query_id: format!("q{n}"),
                embedding,
            })
            .collect();
        Self::new(models, queries, Matrix::from_rows(perf)?, Matrix::from_rows(cost)?)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.models.len();
        if k < 2 {
            return Err(Error::Invalid(format!("model pool needs at least 2 models, got {k}")));
        }
        for (j, m) in self.models.iter().enumerate() {
            if m.id != j {
                return Err(Error::Invalid(format!(
                    "model ids must be 0..K-1, found id {} at position {j}",
                    m.id
                )));
            }
            if !(m.unit_price.is_finite() && m.unit_price >= 0.0) {
                return Err(Error::Invalid(format!(
                    "model {j} has invalid unit price {}",
                    m.unit_price
                )));
            }
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("model names must be unique".into()));
        }

        let n = self.queries.len();
        if n == 0 {
            return Err(Error::Invalid("table has no queries".into()));
        }
        let d = self.queries[0].embedding.len();
        if d == 0 {
            return Err(Error::Invalid("embedding dimension must be at least 1".into()));
        }
        for (i, q) in self.queries.iter().enumerate() {
            if q.embedding.len() != d {
                return Err(Error::Shape(format!(
                    "query {i} has embedding dimension {}, expected {d}",
                    q.embedding.len()
                )));
            }
            if let Some(p) = q.embedding.iter().position(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite embedding value at ({i},{p})")));
            }
        }
        for (name, m) in [("perf", &self.perf), ("cost", &self.cost)] {
            if m.rows() != n || m.cols() != k {
                return Err(Error::Shape(format!(
                    "{name} matrix is {}x{}, expected {n}x{k}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        for row in 0..n {
            for j in 0..k {
                let a = self.perf.get(row, j);
                if !a.is_finite() {
                    return Err(Error::Invalid(format!("non-finite perf at ({row},{j})")));
                }
                let c = self.cost.get(row, j);
                if !c.is_finite() {
                    return Err(Error::Invalid(format!("non-finite cost at ({row},{j})")));
                }
                if c <= 0.0 {
                    return Err(Error::Invalid(format!("nonpositive cost at ({row},{j})")));
                }
            }
        }
        Ok(())
    }

    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.queries[0].embedding.len()
    }

    pub fn models(&self) -> &[ModelInfo] {
        &self.models
    }

    pub fn queries(&self) -> &[QueryRecord] {
        &self.queries
    }

    pub fn embedding(&self, n: usize) -> &[f64] {
        &self.queries[n].embedding
    }

    pub fn perf(&self) -> &Matrix {
        &self.perf
    }

    pub fn cost(&self) -> &Matrix {
        &self.cost
    }

    pub fn perf_row(&self, n: usize) -> &[f64] {
        self.perf.row(n)
    }

    pub fn cost_row(&self, n: usize) -> &[f64] {
        self.cost.row(n)
    }

    /// Copy with a replaced performance matrix (used by label-noise injection).
    pub fn with_perf(&self, perf: Matrix) -> Result<Self> {
        Self::new(self.models.clone(), self.queries.clone(), perf, self.cost.clone())
    }

    /// Copy with a replaced cost matrix.
    pub fn with_cost(&self, cost: Matrix) -> Result<Self> {
        Self::new(self.models.clone(), self.queries.clone(), self.perf.clone(), cost)
    }
}

pub const MODELS_FILE: &str = "models.json";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const PERF_FILE: &str = "perf.csv";
pub const COST_FILE: &str = "cost.csv";
pub const SPLIT_FILE: &str = "split.json";

pub fn load_table(dir: &Path) -> Result<RoutingTable> {
    let models_path = dir.join(MODELS_FILE);
    let raw = fs::read_to_string(&models_path).map_err(|e| Error::io(&models_path, e))?;
    let models: Vec<ModelInfo> = serde_json::from_str(&raw).map_err(|e| Error::parse(&models_path, e.to_string()))?;

    let queries_path = dir.join(QUERIES_FILE);
    let file = fs::File::open(&queries_path).map_err(|e| Error::io(&queries_path, e))?;
    let mut queries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&queries_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(&queries_path, format!("line {}: {e}", i + 1)))?;
        queries.push(q);
    }

    let perf = read_matrix_csv(&dir.join(PERF_FILE))?;
    let cost = read_matrix_csv(&dir.join(COST_FILE))?;
    RoutingTable::new(models, queries, perf, cost)
}

pub fn save_table(table: &RoutingTable, dir: &Path) -> Result<()> {
    table.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let models_path = dir.join(MODELS_FILE);
    let json = serde_json::to_string_pretty(&table.models).expect("models serialize");
    fs::write(&models_path, json + "\n").map_err(|e| Error::io(&models_path, e))?;

    let queries_path = dir.join(QUERIES_FILE);
    let file = fs::File::create(&queries_path).map_err(|e| Error::io(&queries_path, e))?;
    let mut w = BufWriter::new(file);
    for q in &table.queries {
        let line = serde_json::to_string(q).expect("query serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(&queries_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&queries_path, e))?;

    write_matrix_csv(&table.perf, &dir.join(PERF_FILE))?;
    write_matrix_csv(&table.cost, &dir.join(COST_FILE))?;
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        })?;
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, format!("value at ({n},{j}): {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows).map_err(|e| Error::Shape(format!("{}: {e}", path.display())))
}

fn write_matrix_csv(m: &Matrix, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for n in 0..m.rows() {
        w.write_record(m.row(n).iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Disjoint train/valid/test index lists over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub seed: u64,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Every index in all three parts, for training and evaluating on the same queries.
    pub fn full(n: usize) -> Self {
        let all: Vec<usize> = (0..n).collect();
        Self {
            seed: 0,
            train: all.clone(),
            valid: all.clone(),
            test: all,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).expect("split serialize");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Seeded shuffle of `0..n`, cut into three parts proportional to `ratio`.
///
/// Each part gets `floor(n * r_i / sum(r))`; leftover indices go to the parts
/// in order train, valid, test, one each.
pub fn make_split(n: usize, ratio: [f64; 3], seed: u64) -> Result<SplitIndices> {
    if ratio.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Invalid(format!(
            "split ratio parts must be positive, got {ratio:?}"
        )));
    }
    if n < 3 {
        return Err(Error::Invalid(format!("cannot split {n} queries into 3 parts")));
    }
    let total: f64 = ratio.iter().sum();
    let mut sizes = ratio.map(|r| (n as f64 * r / total).floor() as usize);
    let mut remainder = n - sizes.iter().sum::<usize>();
    for s in sizes.iter_mut() {
        if remainder == 0 {
            break;
        }
        *s += 1;
        remainder -= 1;
    }
    if sizes.contains(&0) {
        return Err(Error::Invalid(format!(
            "split of {n} queries with ratio {ratio:?} leaves an empty part"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let valid_start = sizes[0];
    let test_start = sizes[0] + sizes[1];
    Ok(SplitIndices {
        seed,
        train: order[..valid_start].to_vec(),
        valid: order[valid_start..test_start].to_vec(),
        test: order[test_start..].to_vec(),
    })
}

/// Synthetic table parameters.
///
/// Queries fall into capability levels: on a level-`l` query the models
/// `l..K` all reach the top score, so the top of the pool is tied. Untied
/// queries are solved only by the most expensive model, and the remaining
/// models trail it by a margin drawn from `[margin_scale, 2 * margin_scale]`.
/// Embeddings are noisy copies of a per-level centroid, so the cheapest
/// adequate model is recoverable from the embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_queries: usize,
    pub n_models: usize,
    pub embed_dim: usize,
    pub tie_fraction: f64,
    pub margin_scale: f64,
    pub cost_spread: f64,
    pub noise_seed: u64,
    /// Standard deviation of embedding noise around the level centroid.
    pub embed_noise: f64,
    /// Share of tied queries that no model solves (all scores zero).
    pub unsolvable_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_queries: 2000,
            n_models: 6,
            embed_dim: 32,
            tie_fraction: 0.949,
            margin_scale: 1.0,
            cost_spread: 100.0,
            noise_seed: 42,
            embed_noise: 0.25,
            unsolvable_fraction: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if self.n_queries == 0 || self.embed_dim == 0 {
            return bad("n_queries and embed_dim must be positive".into());
        }
        if self.n_models < 2 {
            return bad(format!("n_models must be at least 2, got {}", self.n_models));
        }
        if !(0.0..=1.0).contains(&self.tie_fraction) {
            return bad(format!("tie_fraction must be in [0,1], got {}", self.tie_fraction));
        }
        if !(self.margin_scale.is_finite() && self.margin_scale > 0.0) {
            return bad(format!("margin_scale must be positive, got {}", self.margin_scale));
        }
        if !(self.cost_spread.is_finite() && self.cost_spread > 1.0) {
            return bad(format!("cost_spread must exceed 1, got {}", self.cost_spread));
        }
        if !(self.embed_noise.is_finite() && self.embed_noise >= 0.0) {
            return bad(format!("embed_noise must be nonnegative, got {}", self.embed_noise));
        }
        if !(0.0..=1.0).contains(&self.unsolvable_fraction) {
            return bad(format!(
                "unsolvable_fraction must be in [0,1], got {}",
                self.unsolvable_fraction
            ));
        }
        Ok(())
    }
}

const BASE_UNIT_PRICE: f64 = 1e-6;
const BASE_TOKENS: f64 = 1000.0;
const LENGTH_SLOPE: f64 = 0.15;

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<RoutingTable> {
    cfg.validate()?;
    let k = cfg.n_models;
    let d = cfg.embed_dim;
    let mut rng = SplitMix64::new(cfg.noise_seed);

    // Levels 0..=K-2 are tied, K-1 is "only the strongest solves", K is unsolvable.
    let n_levels = k + 1;
    let centroids: Vec<Vec<f64>> = (0..n_levels)
        .map(|_| (0..d).map(|_| rng.standard_normal()).collect())
        .collect();
    let length_dir: Vec<f64> = {
        let v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    };

    let models: Vec<ModelInfo> = (0..k)
        .map(|j| ModelInfo {
            id: j,
            name: format!("model-{j}"),
            unit_price: BASE_UNIT_PRICE * cfg.cost_spread.powf(j as f64 / (k - 1) as f64),
        })
        .collect();

    let mut queries = Vec::with_capacity(cfg.n_queries);
    let mut perf_rows = Vec::with_capacity(cfg.n_queries);
    let mut cost_rows = Vec::with_capacity(cfg.n_queries);
    for n in 0..cfg.n_queries {
        let tied = rng.uniform() < cfg.tie_fraction;
        let level = if !tied {
            k - 1
        } else if rng.uniform() < cfg.unsolvable_fraction {
            k
        } else {
            rng.below((k - 1) as u64) as usize
        };

        let mut perf = vec![0.0; k];
        for (j, a) in perf.iter_mut().enumerate() {
            let trailing = (1.0 - cfg.margin_scale * (1.0 + rng.uniform())).max(0.0);
            *a = if level == k {
                0.0
            } else if j >= level {
                1.0
            } else {
                trailing
            };
        }

        let embedding: Vec<f64> = centroids[level]
            .iter()
            .map(|c| c + cfg.embed_noise * rng.standard_normal())
            .collect();
        let proj: f64 = embedding.iter().zip(&length_dir).map(|(x, v)| x * v).sum();
        let tokens = BASE_TOKENS * (1.0 + LENGTH_SLOPE * proj).max(0.05);
        let cost: Vec<f64> = models.iter().map(|m| m.unit_price * tokens).collect();

        queries.push(QueryRecord {
            query_id: format!("q{n:06}"),
            embedding,
        });
        perf_rows.push(perf);
        cost_rows.push(cost);
    }

    RoutingTable::new(
        models,
        queries,
        Matrix::from_rows(&perf_rows)?,
        Matrix::from_rows(&cost_rows)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_table() -> RoutingTable {
        let models = vec![
            ModelInfo {
                id: 0,
                name: "small".into(),
                unit_price: 1.0,
            },
            ModelInfo {
                id: 1,
                name: "large".into(),
                unit_price: 3.0,
            },
        ];
        let queries = (0..3)
            .map(|n| QueryRecord {
                query_id: format!("q{n}"),
                embedding: vec![n as f64, 0.5, -1.25],
            })
            .collect();
        let perf = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0], vec![0.3, 0.1]]).unwrap();
        let cost = Matrix::from_rows(&[vec![1.0, 3.0], vec![0.1, 0.7], vec![2.0, 6.0]]).unwrap();
        RoutingTable::new(models, queries, perf, cost).unwrap()
    }

    #[test]
    fn round_trip_small_table() {
        let dir = tempfile::tempdir().unwrap();
        let t = toy_table();
        save_table(&t, dir.path()).unwrap();
        let back = load_table(dir.path()).unwrap();
        assert_eq!(back.n_queries(), 3);
        assert_eq!(back.n_models(), 2);
        assert_eq!(back, t);
    }

    #[test]
    fn round_trip_preserves_384_dim_embeddings() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_queries: 20,
            embed_dim: 384,
            ..Default::default()
        };
        let t = generate_synthetic(&cfg).unwrap();
        save_table(&t, dir.path()).unwrap();
        let back = load_table(dir.path()).unwrap();
        assert_eq!(back.embed_dim(), 384);
        for (a, b) in t.perf().as_slice().iter().zip(back.perf().as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in t.cost().as_slice().iter().zip(back.cost().as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, t);
    }

    #[test]
    fn zero_cost_is_rejected_with_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        save_table(&toy_table(), dir.path()).unwrap();
        fs::write(dir.path().join(COST_FILE), "1.0,3.0\n0.1,0.0\n2.0,6.0\n").unwrap();
        let err = load_table(dir.path()).unwrap_err().to_string();
        assert!(err.contains("nonpositive cost at (1,1)"), "{err}");
    }

    #[test]
    fn perf_width_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_table(&toy_table(), dir.path()).unwrap();
        let models = r#"[{"id":0,"name":"a","unit_price":1.0},{"id":1,"name":"b","unit_price":1.0},{"id":2,"name":"c","unit_price":1.0}]"#;
        fs::write(dir.path().join(MODELS_FILE), models).unwrap();
        let err = load_table(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn nan_perf_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_table(&toy_table(), dir.path()).unwrap();
        fs::write(dir.path().join(PERF_FILE), "0,1\nNaN,1\n0.3,0.1\n").unwrap();
        let err = load_table(dir.path()).unwrap_err().to_string();
        assert!(err.contains("non-finite perf at (1,0)"), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_table(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn empty_model_list_rejected_before_write() {
        let t = toy_table();
        let broken = RoutingTable { models: vec![], ..t };
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out");
        assert!(save_table(&broken, &target).is_err());
        assert!(!target.exists());
    }

    #[test]
    fn split_3_1_6_sizes() {
        let s = make_split(10, [3.0, 1.0, 6.0], 42).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (3, 1, 6));
        assert_eq!(s, make_split(10, [3.0, 1.0, 6.0], 42).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_zero_part_and_tiny_n() {
        assert!(make_split(10, [1.0, 0.0, 0.0], 42).is_err());
        assert!(make_split(2, [3.0, 1.0, 6.0], 42).is_err());
    }

    #[test]
    fn split_remainders_go_to_earlier_parts() {
        // 11 * 0.3 = 3.3, 11 * 0.1 = 1.1, 11 * 0.6 = 6.6 -> floors 3,1,6, one left for train.
        let s = make_split(11, [3.0, 1.0, 6.0], 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (4, 1, 6));
    }

    #[test]
    fn generator_is_deterministic_and_costs_monotone() {
        let cfg = SynthConfig {
            n_queries: 300,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, generate_synthetic(&cfg).unwrap());
        for n in 0..a.n_queries() {
            let c = a.cost_row(n);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn generator_cost_spread_ratio() {
        let cfg = SynthConfig {
            n_queries: 500,
            cost_spread: 100.0,
            ..Default::default()
        };
        let t = generate_synthetic(&cfg).unwrap();
        let mean_col = |j: usize| (0..t.n_queries()).map(|n| t.cost().get(n, j)).sum::<f64>() / t.n_queries() as f64;
        let ratio = mean_col(t.n_models() - 1) / mean_col(0);
        assert!((ratio / 100.0 - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn generator_full_ties() {
        let cfg = SynthConfig {
            n_queries: 400,
            tie_fraction: 1.0,
            ..Default::default()
        };
        let t = generate_synthetic(&cfg).unwrap();
        for n in 0..t.n_queries() {
            let row = t.perf_row(n);
            let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(row.iter().filter(|&&a| a == top).count() >= 2);
        }
    }

    #[test]
    fn generator_rejects_bad_config() {
        assert!(generate_synthetic(&SynthConfig {
            n_models: 1,
            ..Default::default()
        })
        .is_err());
        assert!(generate_synthetic(&SynthConfig {
            tie_fraction: 1.5,
            ..Default::default()
        })
        .is_err());
    }
}
