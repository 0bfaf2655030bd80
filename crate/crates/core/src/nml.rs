//! Log-domain parametric complexities of the multinomial family.
//!
//! `C(n, K)` is the sum over all count vectors of length `K` summing to `n`
//! of the maximized multinomial likelihood of that vector. It is evaluated
//! with the linear-time recurrence
//!
//! ```text
//! C(n, K + 1) = C(n, K) + n / (K - 1) * C(n, K - 1)
//! ```
//!
//! seeded by `C(n, 1) = 1` and the exact binomial sum for `C(n, 2)`. All values
//! are natural logs (nats).

use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{invalid, Result};

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln C(n, 2)` by the exact binomial sum, accumulated with a running
/// log-sum-exp.
fn log_binomial_complexity(n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    // ln k! for k = 0..=n
    let mut ln_fact = Vec::with_capacity(n as usize + 1);
    ln_fact.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        ln_fact.push(acc);
    }
    let xlogx = |k: u64| if k == 0 { 0.0 } else { let kf = k as f64; kf * (kf.ln() - ln_n) };
    let mut total = f64::NEG_INFINITY;
    for k in 0..=n {
        let term = ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize]
            + xlogx(k)
            + xlogx(n - k);
        total = log_add_exp(total, term);
    }
    total
}

/// Row of `ln C(n, K)` for `K = 1..=max_k` (index `K - 1`).
fn complexity_row(n: u64, max_k: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(max_k);
    row.push(0.0);
    if max_k >= 2 {
        row.push(log_binomial_complexity(n));
    }
    let ln_n = if n == 0 { f64::NEG_INFINITY } else { (n as f64).ln() };
    for k in 2..max_k {
        // row[k] = ln C(n, k + 1) from C(n, k) and C(n, k - 1)
        let prev = row[k - 1];
        let prev2 = row[k - 2];
        let next = log_add_exp(prev, ln_n - ((k - 1) as f64).ln() + prev2);
        row.push(next);
    }
    row
}

/// `ln C(n, k)` in nats.
pub fn log_multinomial_complexity(n: u64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("multinomial complexity needs K >= 1"));
    }
    Ok(complexity_row(n, k)[k - 1])
}

/// Memoized table of `ln C(n, K)` for `K <= max_k`.
///
/// Rows are computed on first use and never change afterwards, so concurrent
/// readers always observe the same values.
#[derive(Debug)]
pub struct LogComplexityTable {
    max_k: usize,
    max_n: u64,
    rows: RwLock<HashMap<u64, Box<[f64]>>>,
}

impl LogComplexityTable {
    /// Lazily populated table for block counts up to `max_k`.
    pub fn new(max_k: usize) -> Result<Self> {
        if max_k == 0 {
            return Err(invalid("complexity table needs max_k >= 1"));
        }
        Ok(Self { max_k, max_n: 0, rows: RwLock::new(HashMap::new()) })
    }

    /// Eagerly computes every row `n = 0..=max_n`.
    pub fn build(max_n: u64, max_k: usize) -> Result<Self> {
        if max_n == 0 {
            return Err(invalid("complexity table needs max_n >= 1"));
        }
        let mut table = Self::new(max_k)?;
        table.max_n = max_n;
        let rows = table.rows.get_mut().expect("fresh lock");
        for n in 0..=max_n {
            rows.insert(n, complexity_row(n, max_k).into_boxed_slice());
        }
        Ok(table)
    }

    pub fn max_k(&self) -> usize {
        self.max_k
    }

    /// Largest `n` computed so far.
    pub fn max_n(&self) -> u64 {
        self.max_n.max(self.rows.read().expect("poisoned").keys().copied().max().unwrap_or(0))
    }

    /// `ln C(n, k)`. Panics if `k` is zero or exceeds `max_k`.
    pub fn entry(&self, n: u64, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.max_k, "k = {k} outside 1..={}", self.max_k);
        if k == 1 || n == 0 {
            return 0.0;
        }
        if let Some(row) = self.rows.read().expect("poisoned").get(&n) {
            return row[k - 1];
        }
        let row = complexity_row(n, self.max_k).into_boxed_slice();
        let value = row[k - 1];
        self.rows.write().expect("poisoned").entry(n).or_insert(row);
        value
    }
}
