//! Traffic matrices: the TMSERIES text format, a synthetic gravity-model
//! generator, and chronological train/test splitting.

use crate::topology::Topology;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot split {count} snapshots with fraction {fraction}: one side would be empty")]
    BadSplit { count: usize, fraction: f64 },
}

/// One snapshot of source→destination demand volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficMatrix {
    n: usize,
    demand: Vec<f64>, // row-major n×n, zero diagonal
}

impl TrafficMatrix {
    pub fn new(n: usize, demand: Vec<f64>) -> Self {
        assert_eq!(demand.len(), n * n);
        for u in 0..n {
            assert_eq!(demand[u * n + u], 0.0, "diagonal must be zero");
        }
        assert!(demand.iter().all(|d| d.is_finite() && *d >= 0.0));
        TrafficMatrix { n, demand }
    }

    pub fn zeros(n: usize) -> Self {
        TrafficMatrix { n, demand: vec![0.0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.demand[u * self.n + v]
    }

    pub fn set(&mut self, u: usize, v: usize, d: f64) {
        assert!(u != v || d == 0.0);
        self.demand[u * self.n + v] = d;
    }

    pub fn total(&self) -> f64 {
        self.demand.iter().sum()
    }

    pub fn scale(&self, c: f64) -> TrafficMatrix {
        TrafficMatrix { n: self.n, demand: self.demand.iter().map(|d| d * c).collect() }
    }
}

#[derive(Debug, Clone)]
pub struct TmSeries {
    pub tms: Vec<TrafficMatrix>,
    pub source: String,
}

impl TmSeries {
    pub fn new(tms: Vec<TrafficMatrix>, source: impl Into<String>) -> Self {
        assert!(!tms.is_empty());
        let n = tms[0].n();
        assert!(tms.iter().all(|tm| tm.n() == n));
        TmSeries { tms, source: source.into() }
    }

    pub fn len(&self) -> usize {
        self.tms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tms.is_empty()
    }

    pub fn n(&self) -> usize {
        self.tms[0].n()
    }
}

/// Parses the TMSERIES v1 format: header
/// `TMSERIES v1 nodes=<n> count=<k>`, then `k` blocks of `n` rows of `n`
/// space-separated nonnegative decimals, blocks separated by blank lines.
pub fn load_tm_series(text: &str) -> Result<TmSeries, TrafficError> {
    let err = |line: usize, msg: String| TrafficError::Parse { line, msg };
    let mut lines = text.lines().enumerate();
    let (header_no, header) = loop {
        match lines.next() {
            Some((i, l)) if !l.trim().is_empty() => break (i + 1, l.trim()),
            Some(_) => continue,
            None => return Err(err(1, "empty file".into())),
        }
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "TMSERIES" || fields[1] != "v1" {
        return Err(err(header_no, format!("expected `TMSERIES v1 nodes=<n> count=<k>`, got `{header}`")));
    }
    let parse_kv = |field: &str, key: &str| -> Result<usize, TrafficError> {
        field
            .strip_prefix(&format!("{key}="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(header_no, format!("bad header field `{field}`")))
    };
    let n = parse_kv(fields[2], "nodes")?;
    let count = parse_kv(fields[3], "count")?;
    if n == 0 || count == 0 {
        return Err(err(header_no, "nodes and count must be positive".into()));
    }

    let mut tms = Vec::with_capacity(count);
    let mut rows: Vec<f64> = Vec::with_capacity(n * n);
    let mut row_in_block = 0usize;
    for (i, raw) in lines {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(n);
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(lineno, format!("bad demand value `{tok}`")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(lineno, format!("negative or non-finite demand {v}")));
            }
            row.push(v);
        }
        if row.len() != n {
            return Err(err(lineno, format!("expected {n} values per row, got {}", row.len())));
        }
        if row[row_in_block] != 0.0 {
            return Err(err(lineno, format!("nonzero diagonal entry {}", row[row_in_block])));
        }
        rows.extend(row);
        row_in_block += 1;
        if row_in_block == n {
            tms.push(TrafficMatrix::new(n, std::mem::take(&mut rows)));
            row_in_block = 0;
        }
    }
    if row_in_block != 0 {
        return Err(err(0, "truncated matrix block".into()));
    }
    if tms.len() != count {
        return Err(err(0, format!("header declares count={count} but found {} blocks", tms.len())));
    }
    Ok(TmSeries::new(tms, "file"))
}

/// Serializes a series in the TMSERIES v1 format with enough digits for an
/// exact round trip.
pub fn serialize_tm_series(series: &TmSeries) -> String {
    let n = series.n();
    let mut out = format!("TMSERIES v1 nodes={} count={}\n", n, series.len());
    for tm in &series.tms {
        for u in 0..n {
            let row: Vec<String> = (0..n).map(|v| format!("{:.17e}", tm.get(u, v))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Gravity-model series: per-series node weights drawn from a lognormal give
/// the base matrix `demand[u][v] ∝ w_u·w_v`; per-entry lognormal noise with
/// coefficient of variation `noise_cv` perturbs each snapshot, which is then
/// rescaled so every snapshot sums to `total_volume`. Deterministic per seed.
pub fn gen_gravity_tms(
    topo: &Topology,
    count: usize,
    seed: u64,
    total_volume: f64,
    noise_cv: f64,
) -> TmSeries {
    assert!(count >= 1 && total_volume > 0.0 && noise_cv >= 0.0);
    let n = topo.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight_dist = LogNormal::new(0.0, 0.5).unwrap();
    let weights: Vec<f64> = (0..n).map(|_| weight_dist.sample(&mut rng)).collect();

    // lognormal with mean 1 and the requested coefficient of variation
    let sigma2 = (1.0 + noise_cv * noise_cv).ln();
    let noise_dist = LogNormal::new(-sigma2 / 2.0, sigma2.sqrt()).unwrap();

    let mut tms = Vec::with_capacity(count);
    for _ in 0..count {
        let mut demand = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                if u == v {
                    continue;
                }
                let noise = if noise_cv > 0.0 { noise_dist.sample(&mut rng) } else { 1.0 };
                demand[u * n + v] = (weights[u] * weights[v] * noise).max(0.0);
            }
        }
        let sum: f64 = demand.iter().sum();
        let scale = total_volume / sum;
        for d in &mut demand {
            *d *= scale;
        }
        tms.push(TrafficMatrix::new(n, demand));
    }
    TmSeries::new(tms, format!("gravity(seed={seed})"))
}

/// Chronological split: first ⌊count·fraction⌋ snapshots train, rest test.
pub fn split_train_test(
    series: &TmSeries,
    train_fraction: f64,
) -> Result<(TmSeries, TmSeries), TrafficError> {
    assert!(train_fraction > 0.0 && train_fraction < 1.0);
    let count = series.len();
    let split = (count as f64 * train_fraction).floor() as usize;
    if split == 0 || split == count {
        return Err(TrafficError::BadSplit { count, fraction: train_fraction });
    }
    let train = TmSeries::new(series.tms[..split].to_vec(), series.source.clone());
    let test = TmSeries::new(series.tms[split..].to_vec(), series.source.clone());
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::load_topology;

    #[test]
    fn load_minimal_series() {
        let s = load_tm_series("TMSERIES v1 nodes=2 count=1\n0 3\n1 0\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.tms[0].get(0, 1), 3.0);
        assert_eq!(s.tms[0].get(1, 0), 1.0);
    }

    #[test]
    fn rejects_nonzero_diagonal() {
        assert!(load_tm_series("TMSERIES v1 nodes=2 count=1\n1 3\n1 0\n").is_err());
    }

    #[test]
    fn rejects_count_mismatch() {
        assert!(load_tm_series("TMSERIES v1 nodes=2 count=2\n0 3\n1 0\n").is_err());
    }

    #[test]
    fn rejects_negative_demand() {
        assert!(load_tm_series("TMSERIES v1 nodes=2 count=1\n0 -3\n1 0\n").is_err());
    }

    fn square() -> Topology {
        load_topology(crate::test_fixtures::SQUARE).unwrap()
    }

    #[test]
    fn gravity_zero_noise_identical_snapshots() {
        let s = gen_gravity_tms(&square(), 2, 5, 100.0, 0.0);
        assert_eq!(s.tms[0], s.tms[1]);
    }

    #[test]
    fn gravity_seed_deterministic() {
        let t = square();
        let a = gen_gravity_tms(&t, 3, 42, 100.0, 0.2);
        let b = gen_gravity_tms(&t, 3, 42, 100.0, 0.2);
        assert_eq!(a.tms, b.tms);
        let c = gen_gravity_tms(&t, 3, 43, 100.0, 0.2);
        assert_ne!(a.tms, c.tms);
    }

    #[test]
    fn gravity_normalization() {
        let s = gen_gravity_tms(&square(), 2, 11, 250.0, 0.3);
        for tm in &s.tms {
            assert!((tm.total() - 250.0).abs() <= 1e-9 * 250.0);
            for u in 0..tm.n() {
                assert_eq!(tm.get(u, u), 0.0);
            }
        }
    }

    #[test]
    fn split_1280_is_1024_256() {
        let tms = vec![TrafficMatrix::zeros(2); 1280];
        let s = TmSeries::new(tms, "t");
        let (train, test) = split_train_test(&s, 0.8).unwrap();
        assert_eq!(train.len(), 1024);
        assert_eq!(test.len(), 256);
    }

    #[test]
    fn split_10_is_8_2() {
        let s = TmSeries::new(vec![TrafficMatrix::zeros(2); 10], "t");
        let (train, test) = split_train_test(&s, 0.8).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn split_single_errors() {
        let s = TmSeries::new(vec![TrafficMatrix::zeros(2)], "t");
        assert!(split_train_test(&s, 0.8).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let s = gen_gravity_tms(&square(), 3, 9, 77.0, 0.4);
        let text = serialize_tm_series(&s);
        let back = load_tm_series(&text).unwrap();
        assert_eq!(s.tms, back.tms);
    }
}
