//! Price history ingestion and calibration: returns, sample moments and the
//! Cholesky factor used to correlate simulated shocks.

use std::io::{Read, Write};
use std::ops::Index;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::uniform_to_normal;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: cannot parse {what} {value:?}")]
    Parse {
        line: u64,
        what: &'static str,
        value: String,
    },
    #[error("non-positive price {value} for {ticker} on {date}")]
    NonPositivePrice {
        date: NaiveDate,
        ticker: String,
        value: f64,
    },
    #[error("line {line}: date {date} does not follow {previous}")]
    Ordering {
        line: u64,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("insufficient data: {needed} rows required, {got} available")]
    InsufficientData { needed: usize, got: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("matrix is not positive semidefinite (factorization failed at jitter {max_jitter:e})")]
    NotPositiveSemidefinite { max_jitter: f64 },
    #[error("invalid portfolio: {0}")]
    Portfolio(String),
    #[error("ticker {0:?} is not in the calibrated universe")]
    UnknownTicker(String),
}

/// Prices indexed by date (rows) and asset (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<Vec<f64>>,
    /// Rows discarded because a price was missing.
    pub dropped_rows: usize,
}

pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceTable, MarketError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| MarketError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_prices(file)
}

/// Reads `date,<ticker>,...` CSV. Lines starting with `#` are comments;
/// rows with an empty or `NA` cell are dropped.
pub fn parse_prices(reader: impl Read) -> Result<PriceTable, MarketError> {
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv.headers().map_err(|e| MarketError::Csv(e.to_string()))?.clone();
    if header.get(0).map(str::to_ascii_lowercase).as_deref() != Some("date") {
        return Err(MarketError::Header("first column must be `date`".into()));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if tickers.is_empty() {
        return Err(MarketError::Header("no ticker columns".into()));
    }
    if tickers.iter().any(String::is_empty) {
        return Err(MarketError::Header("empty ticker name".into()));
    }

    let mut table = PriceTable {
        tickers,
        dates: Vec::new(),
        prices: Vec::new(),
        dropped_rows: 0,
    };
    for record in csv.records() {
        let record = record.map_err(|e| MarketError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let raw_date = record.get(0).unwrap_or_default();
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| MarketError::Parse {
            line,
            what: "date",
            value: raw_date.to_string(),
        })?;
        if let Some(&previous) = table.dates.last() {
            if date <= previous {
                return Err(MarketError::Ordering { line, date, previous });
            }
        }
        let mut row = Vec::with_capacity(table.tickers.len());
        let mut missing = false;
        for (ticker, cell) in table.tickers.iter().zip(record.iter().skip(1)) {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                missing = true;
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| MarketError::Parse {
                line,
                what: "price",
                value: cell.to_string(),
            })?;
            if !(value > 0.0 && value.is_finite()) {
                return Err(MarketError::NonPositivePrice {
                    date,
                    ticker: ticker.clone(),
                    value,
                });
            }
            row.push(value);
        }
        if missing {
            table.dropped_rows += 1;
            continue;
        }
        table.dates.push(date);
        table.prices.push(row);
    }
    Ok(table)
}

pub fn write_prices(table: &PriceTable, writer: impl Write) -> Result<(), MarketError> {
    let mut csv = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| MarketError::Csv(e.to_string());
    csv.write_record(std::iter::once("date").chain(table.tickers.iter().map(String::as_str)))
        .map_err(csv_err)?;
    for (date, row) in table.dates.iter().zip(&table.prices) {
        let mut fields = vec![date.format("%Y-%m-%d").to_string()];
        fields.extend(row.iter().map(|p| format!("{p}")));
        csv.write_record(&fields).map_err(csv_err)?;
    }
    csv.flush().map_err(|e| MarketError::Csv(e.to_string()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnKind {
    #[default]
    Log,
    Simple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    pub tickers: Vec<String>,
    /// One row per period, one column per asset.
    pub returns: Vec<Vec<f64>>,
    pub kind: ReturnKind,
}

pub fn compute_returns(prices: &PriceTable, kind: ReturnKind) -> Result<ReturnMatrix, MarketError> {
    if prices.prices.len() < 2 {
        return Err(MarketError::InsufficientData {
            needed: 2,
            got: prices.prices.len(),
        });
    }
    let returns = prices
        .prices
        .windows(2)
        .map(|pair| {
            pair[0]
                .iter()
                .zip(&pair[1])
                .map(|(&prev, &next)| match kind {
                    ReturnKind::Log => (next / prev).ln(),
                    ReturnKind::Simple => next / prev - 1.0,
                })
                .collect()
        })
        .collect();
    Ok(ReturnMatrix {
        tickers: prices.tickers.clone(),
        returns,
        kind,
    })
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MarketError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MarketError::Csv("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// `self * self^T`.
    pub fn mul_transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in 0..self.rows {
                let dot = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                out.set(i, j, dot);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyFactor {
    pub lower: Matrix,
    /// Diagonal loading added before the factorization succeeded.
    pub jitter: f64,
}

/// Jitter multipliers of the largest diagonal entry, tried in order after
/// an unloaded attempt fails.
pub const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Lower-triangular `L` with `L L^T = covariance + jitter I`.
pub fn cholesky(covariance: &Matrix) -> Result<CholeskyFactor, MarketError> {
    let n = covariance.rows();
    if covariance.cols() != n {
        return Err(MarketError::NotSquare {
            rows: n,
            cols: covariance.cols(),
        });
    }
    check_symmetric(covariance)?;
    let max_diag = (0..n).map(|i| covariance[(i, i)]).fold(0.0, f64::max);
    if max_diag == 0.0 && covariance.data.iter().all(|&v| v == 0.0) {
        return Ok(CholeskyFactor {
            lower: Matrix::zeros(n, n),
            jitter: 0.0,
        });
    }
    for jitter in std::iter::once(0.0).chain(JITTER_LADDER.iter().map(|k| k * max_diag)) {
        if let Some(lower) = try_factor(covariance, jitter) {
            return Ok(CholeskyFactor { lower, jitter });
        }
    }
    Err(MarketError::NotPositiveSemidefinite {
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * max_diag,
    })
}

fn check_symmetric(m: &Matrix) -> Result<(), MarketError> {
    let scale = m.data.iter().map(|v| v.abs()).fold(1.0, f64::max);
    for i in 0..m.rows() {
        for j in 0..i {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if gap > 1e-12 * scale {
                return Err(MarketError::NotSymmetric { i, j, gap });
            }
        }
    }
    Ok(())
}

fn try_factor(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let row_j = &l.data[j * n..j * n + j];
        let pivot = a[(j, j)] + jitter - row_j.iter().map(|v| v * v).sum::<f64>();
        if pivot.is_nan() || pivot <= 0.0 {
            return None;
        }
        let diag = pivot.sqrt();
        l.set(j, j, diag);
        for i in j + 1..n {
            let dot: f64 = l.row(i)[..j].iter().zip(&l.row(j)[..j]).map(|(x, y)| x * y).sum();
            let value = (a[(i, j)] - dot) / diag;
            l.set(i, j, value);
        }
    }
    Some(l)
}

/// Per-period mean vector and covariance of asset returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub tickers: Vec<String>,
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub chol: Option<CholeskyFactor>,
}

impl Moments {
    pub fn new(tickers: Vec<String>, mean: Vec<f64>, covariance: Matrix) -> Result<Self, MarketError> {
        let n = tickers.len();
        if mean.len() != n || covariance.rows() != n || covariance.cols() != n {
            return Err(MarketError::NotSquare {
                rows: covariance.rows(),
                cols: covariance.cols(),
            });
        }
        check_symmetric(&covariance)?;
        Ok(Self {
            tickers,
            mean,
            covariance,
            chol: None,
        })
    }

    /// Computes and stores the Cholesky factor.
    pub fn factorized(mut self) -> Result<Self, MarketError> {
        self.chol = Some(cholesky(&self.covariance)?);
        Ok(self)
    }
}

/// Sample mean and unbiased (divisor `n - 1`) covariance.
pub fn estimate_moments(returns: &ReturnMatrix) -> Result<Moments, MarketError> {
    let rows = &returns.returns;
    if rows.len() < 2 {
        return Err(MarketError::InsufficientData {
            needed: 2,
            got: rows.len(),
        });
    }
    let m = returns.tickers.len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; m];
    for row in rows {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);

    let mut covariance = Matrix::zeros(m, m);
    for a in 0..m {
        for b in 0..=a {
            let s: f64 = rows.iter().map(|row| (row[a] - mean[a]) * (row[b] - mean[b])).sum();
            let value = s / (n - 1.0);
            covariance.set(a, b, value);
            covariance.set(b, a, value);
        }
    }
    Moments::new(returns.tickers.clone(), mean, covariance)
}

/// Asset weights, normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
}

impl Portfolio {
    pub fn new(tickers: Vec<String>, weights: Vec<f64>) -> Result<Self, MarketError> {
        if tickers.is_empty() {
            return Err(MarketError::Portfolio("no assets".into()));
        }
        if tickers.len() != weights.len() {
            return Err(MarketError::Portfolio(format!(
                "{} tickers but {} weights",
                tickers.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(MarketError::Portfolio(format!("non-finite weight {w}")));
        }
        for (i, t) in tickers.iter().enumerate() {
            if tickers[..i].contains(t) {
                return Err(MarketError::Portfolio(format!("duplicate ticker {t:?}")));
            }
        }
        let total: f64 = weights.iter().sum();
        if !total.is_finite() || total.abs() < 1e-12 {
            return Err(MarketError::Portfolio(format!("weights sum to {total}")));
        }
        Ok(Self {
            tickers,
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Uniform random weights from a seeded generator, normalized.
    pub fn random(tickers: Vec<String>, seed: u64) -> Result<Self, MarketError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = tickers.iter().map(|_| rng.random::<f64>()).collect();
        Self::new(tickers, weights)
    }

    /// Parses `TICKER,weight` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, MarketError> {
        let mut tickers = Vec::new();
        let mut weights = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (ticker, weight) = line
                .split_once(',')
                .ok_or_else(|| MarketError::Portfolio(format!("line {}: expected TICKER,weight", i + 1)))?;
            let weight = weight.trim();
            tickers.push(ticker.trim().to_string());
            weights.push(weight.parse().map_err(|_| MarketError::Parse {
                line: i as u64 + 1,
                what: "weight",
                value: weight.to_string(),
            })?);
        }
        Self::new(tickers, weights)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MarketError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MarketError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.tickers
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| format!("{t},{w}\n"))
            .collect()
    }

    /// Weights in `universe` order; assets outside the portfolio get zero.
    pub fn aligned_weights(&self, universe: &[String]) -> Result<Vec<f64>, MarketError> {
        if let Some(missing) = self.tickers.iter().find(|t| !universe.contains(t)) {
            return Err(MarketError::UnknownTicker(missing.clone()));
        }
        Ok(universe
            .iter()
            .map(|u| {
                self.tickers
                    .iter()
                    .position(|t| t == u)
                    .map_or(0.0, |i| self.weights[i])
            })
            .collect())
    }
}

/// Historical portfolio return per period, `sum_j w_j r_tj`.
pub fn portfolio_returns(returns: &ReturnMatrix, portfolio: &Portfolio) -> Result<Vec<f64>, MarketError> {
    let weights = portfolio.aligned_weights(&returns.tickers)?;
    Ok(returns
        .returns
        .iter()
        .map(|row| row.iter().zip(&weights).map(|(r, w)| r * w).sum())
        .collect())
}

/// Weekday price paths from a one-factor log-normal model. Used for demos
/// and end-to-end tests where real market data is unavailable.
pub fn synthetic_prices(assets: usize, days: usize, seed: u64) -> PriceTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| uniform_to_normal(rng.random::<f64>());

    let tickers: Vec<String> = (1..=assets).map(|i| format!("SYN{i:02}")).collect();
    let params: Vec<(f64, f64, f64)> = (0..assets)
        .map(|_| {
            let drift = 0.0002 + 0.0004 * rng.random::<f64>();
            let beta = 0.5 + rng.random::<f64>();
            let idio = 0.005 + 0.015 * rng.random::<f64>();
            (drift, beta, idio)
        })
        .collect();

    let mut dates = Vec::with_capacity(days);
    let mut date = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    while dates.len() < days {
        if !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(date);
        }
        date = date.succ_opt().expect("date in range");
    }

    let mut level: Vec<f64> = (0..assets).map(|_| 50.0 + 150.0 * rng.random::<f64>()).collect();
    let mut prices = Vec::with_capacity(days);
    prices.push(level.clone());
    for _ in 1..days {
        let market = 0.01 * normal(&mut rng);
        for (p, &(drift, beta, idio)) in level.iter_mut().zip(&params) {
            *p *= (drift + beta * market + idio * normal(&mut rng)).exp();
        }
        prices.push(level.clone());
    }
    PriceTable {
        tickers,
        dates,
        prices,
        dropped_rows: 0,
    }
}

#[cfg(test)]
use crate::oracle;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn table(csv: &str) -> Result<PriceTable, MarketError> {
        parse_prices(csv.as_bytes())
    }

    #[test]
    fn well_formed_file() {
        let t = table("# comment\ndate,AAA,BBB\n2024-01-02,10,20\n2024-01-03,11,21\n2024-01-04,12,22\n").unwrap();
        assert_eq!(t.tickers, vec!["AAA", "BBB"]);
        assert_eq!(t.prices.len(), 3);
        assert_eq!(t.prices[2], vec![12.0, 22.0]);
    }

    #[test]
    fn zero_price_names_cell() {
        let err = table("date,AAA,BBB\n2024-01-02,10,20\n2024-01-03,11,0\n").unwrap_err();
        match err {
            MarketError::NonPositivePrice { date, ticker, value } => {
                assert_eq!(date.to_string(), "2024-01-03");
                assert_eq!(ticker, "BBB");
                assert_eq!(value, 0.0);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn shuffled_dates_rejected() {
        let err = table("date,AAA\n2024-01-03,10\n2024-01-02,11\n").unwrap_err();
        assert!(matches!(err, MarketError::Ordering { .. }), "{err}");
    }

    #[test]
    fn missing_rows_dropped() {
        let t = table("date,AAA,BBB\n2024-01-02,10,20\n2024-01-03,,21\n2024-01-04,12,NA\n2024-01-05,13,23\n").unwrap();
        assert_eq!(t.prices.len(), 2);
        assert_eq!(t.dropped_rows, 2);
    }

    #[test]
    fn csv_round_trip() {
        let t = synthetic_prices(3, 20, 1);
        let mut out = Vec::new();
        write_prices(&t, &mut out).unwrap();
        assert_eq!(parse_prices(out.as_slice()).unwrap(), t);
    }

    #[test]
    fn return_examples() {
        let t = table("date,A\n2024-01-02,100\n2024-01-03,110\n").unwrap();
        let simple = compute_returns(&t, ReturnKind::Simple).unwrap();
        assert!((simple.returns[0][0] - 0.10).abs() < 1e-15);
        let log = compute_returns(&t, ReturnKind::Log).unwrap();
        assert!((log.returns[0][0] - 0.095_310_2).abs() < 1e-7);

        let flat = table("date,A\n2024-01-02,100\n2024-01-03,100\n").unwrap();
        assert_eq!(compute_returns(&flat, ReturnKind::Log).unwrap().returns[0][0], 0.0);

        let single = table("date,A\n2024-01-02,100\n").unwrap();
        assert!(compute_returns(&single, ReturnKind::Log).is_err());
    }

    fn returns(rows: Vec<Vec<f64>>) -> ReturnMatrix {
        ReturnMatrix {
            tickers: (0..rows[0].len()).map(|i| format!("T{i}")).collect(),
            returns: rows,
            kind: ReturnKind::Log,
        }
    }

    #[test]
    fn moment_examples() {
        let m = estimate_moments(&returns(vec![vec![1.0, 0.0], vec![-1.0, 0.0]])).unwrap();
        assert_eq!(m.mean, vec![0.0, 0.0]);
        assert_eq!(m.covariance.to_rows(), vec![vec![2.0, 0.0], vec![0.0, 0.0]]);

        let twins = estimate_moments(&returns(vec![vec![0.1, 0.1], vec![0.3, 0.3], vec![-0.2, -0.2]])).unwrap();
        let c = &twins.covariance;
        assert_eq!(c[(0, 0)], c[(1, 1)]);
        assert_eq!(c[(0, 0)], c[(0, 1)]);

        let constant = estimate_moments(&returns(vec![vec![0.1, 0.5], vec![0.3, 0.5], vec![0.2, 0.5]])).unwrap();
        assert_eq!(constant.covariance[(1, 1)], 0.0);

        assert!(matches!(
            estimate_moments(&returns(vec![vec![0.1]])),
            Err(MarketError::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn covariance_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..3).map(|_| rng.random::<f64>() - 0.5).collect())
                .collect();
            let got = estimate_moments(&returns(rows.clone())).unwrap().covariance;
            let want = Matrix::from_rows(&oracle::covariance_double_loop(&rows)).unwrap();
            assert!(got.max_abs_diff(&want) <= 1e-12);
        }
    }

    #[test]
    fn cholesky_examples() {
        let id = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(id.lower, Matrix::identity(3));
        assert_eq!(id.jitter, 0.0);

        let f = cholesky(&Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap()).unwrap();
        let want = Matrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 2f64.sqrt()]]).unwrap();
        assert!(f.lower.max_abs_diff(&want) < 1e-15);

        let err = cholesky(&Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap()).unwrap_err();
        assert!(matches!(err, MarketError::NotPositiveSemidefinite { .. }));
    }

    #[test]
    fn cholesky_jitters_singular_matrices() {
        let singular = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let f = cholesky(&singular).unwrap();
        assert!(f.jitter > 0.0 && f.jitter <= 1e-8);
        let mut loaded = singular.clone();
        loaded.set(0, 0, 1.0 + f.jitter);
        loaded.set(1, 1, 1.0 + f.jitter);
        assert!(f.lower.mul_transpose().max_abs_diff(&loaded) <= 1e-10);

        let zero = cholesky(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.lower, Matrix::zeros(2, 2));
    }

    #[test]
    fn cholesky_rejects_asymmetric_and_non_square() {
        assert!(matches!(
            cholesky(&Matrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).unwrap()),
            Err(MarketError::NotSymmetric { .. })
        ));
        assert!(matches!(
            cholesky(&Matrix::zeros(2, 3)),
            Err(MarketError::NotSquare { .. })
        ));
    }

    #[test]
    fn portfolio_normalizes_and_parses() {
        let p = Portfolio::parse("# weights\nAAA, 1\nBBB,3\n").unwrap();
        assert_eq!(p.tickers, vec!["AAA", "BBB"]);
        assert_eq!(p.weights, vec![0.25, 0.75]);
        assert!(Portfolio::parse("AAA,1\nAAA,2\n").is_err());
        assert!(Portfolio::parse("AAA,1\nBBB,-1\n").is_err());

        let r = Portfolio::random(vec!["A".into(), "B".into(), "C".into()], 9).unwrap();
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(
            r,
            Portfolio::random(vec!["A".into(), "B".into(), "C".into()], 9).unwrap()
        );
    }

    #[test]
    fn aligned_weights_follow_universe() {
        let p = Portfolio::new(vec!["B".into(), "A".into()], vec![0.3, 0.7]).unwrap();
        let universe = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        assert_eq!(p.aligned_weights(&universe).unwrap(), vec![0.7, 0.3, 0.0]);
        let q = Portfolio::new(vec!["Z".into()], vec![1.0]).unwrap();
        assert!(matches!(
            q.aligned_weights(&universe),
            Err(MarketError::UnknownTicker(_))
        ));
    }

    /// Random PSD matrix `B B^T` with `B` of rank `rank`.
    fn random_psd(n: usize, rank: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..rank).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        Matrix::from_rows(&b).unwrap().mul_transpose()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn cholesky_reconstructs(n in 1usize..=40, rank_frac in 0.2f64..1.5, seed in any::<u64>()) {
            let rank = ((n as f64 * rank_frac).ceil() as usize).max(1);
            let cov = random_psd(n, rank, seed);
            let f = cholesky(&cov).unwrap();
            let mut target = cov.clone();
            for i in 0..n {
                target.set(i, i, cov[(i, i)] + f.jitter);
            }
            prop_assert!(f.lower.mul_transpose().max_abs_diff(&target) <= 1e-10);
            for i in 0..n {
                for j in i + 1..n {
                    prop_assert_eq!(f.lower[(i, j)], 0.0);
                }
            }
        }

        #[test]
        fn log_returns_finite(prices in proptest::collection::vec(1e-300f64..1e300, 2..50)) {
            let t = PriceTable {
                tickers: vec!["A".into()],
                dates: (0..prices.len()).map(|i| NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(i as u64)).collect(),
                prices: prices.iter().map(|&p| vec![p]).collect(),
                dropped_rows: 0,
            };
            let r = compute_returns(&t, ReturnKind::Log).unwrap();
            prop_assert!(r.returns.iter().all(|row| row[0].is_finite()));
        }
    }
}
