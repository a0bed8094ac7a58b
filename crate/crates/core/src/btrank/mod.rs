//! Bradley-Terry worths from pairwise comparisons, fit by MM updates.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BtError {
    #[error("comparison graph is disconnected: {0:?} cannot be ranked against the rest")]
    Disconnected(Vec<String>),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("need at least two methods")]
    TooFewMethods,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// Win counts; `wins[i][j]` is how often method `i` beat method `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    methods: Vec<String>,
    wins: Vec<Vec<u64>>,
}

impl ComparisonMatrix {
    pub fn new(methods: Vec<String>) -> Result<Self, BtError> {
        let unique: BTreeSet<&String> = methods.iter().collect();
        if unique.len() != methods.len() {
            return Err(BtError::InvalidParameter("duplicate method names".into()));
        }
        let n = methods.len();
        Ok(Self { methods, wins: vec![vec![0; n]; n] })
    }

    pub fn from_counts(methods: Vec<String>, wins: Vec<Vec<u64>>) -> Result<Self, BtError> {
        let mut m = Self::new(methods)?;
        let n = m.methods.len();
        if wins.len() != n || wins.iter().any(|r| r.len() != n) {
            return Err(BtError::InvalidParameter(format!("win matrix must be {n}×{n}")));
        }
        if (0..n).any(|i| wins[i][i] != 0) {
            return Err(BtError::InvalidParameter("diagonal must be zero".into()));
        }
        m.wins = wins;
        Ok(m)
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn wins(&self, i: usize, j: usize) -> u64 {
        self.wins[i][j]
    }

    pub fn index_of(&self, method: &str) -> Result<usize, BtError> {
        self.methods.iter().position(|m| m == method).ok_or_else(|| BtError::UnknownMethod(method.to_string()))
    }

    pub fn record(&mut self, winner: &str, loser: &str) -> Result<(), BtError> {
        let (w, l) = (self.index_of(winner)?, self.index_of(loser)?);
        if w == l {
            return Err(BtError::InvalidParameter(format!("`{winner}` compared with itself")));
        }
        self.wins[w][l] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.wins.iter().flatten().sum()
    }

    /// Parse `method_a,method_b,winner` lines; a header line is skipped.
    /// Methods are ordered by name.
    pub fn parse_csv(text: &str) -> Result<Self, BtError> {
        let mut rows = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (k == 0 && line == "method_a,method_b,winner") {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let [a, b, winner] = parts[..] else {
                return Err(BtError::Parse { line: k + 1, reason: format!("expected 3 fields, got {}", parts.len()) });
            };
            if a == b {
                return Err(BtError::Parse { line: k + 1, reason: format!("`{a}` compared with itself") });
            }
            let loser = if winner == a {
                b
            } else if winner == b {
                a
            } else {
                return Err(BtError::Parse { line: k + 1, reason: format!("winner `{winner}` is neither `{a}` nor `{b}`") });
            };
            rows.push((winner.to_string(), loser.to_string()));
        }
        let names: BTreeSet<String> = rows.iter().flat_map(|(w, l)| [w.clone(), l.clone()]).collect();
        let mut m = Self::new(names.into_iter().collect())?;
        for (w, l) in rows {
            m.record(&w, &l)?;
        }
        Ok(m)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, BtError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BtError::Io { path: path.to_path_buf(), source })?;
        Self::parse_csv(&text)
    }

    /// Methods not reachable from the first one through any comparison.
    fn unreachable(&self) -> Vec<String> {
        let n = self.methods.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && self.wins[i][j] + self.wins[j][i] > 0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        (0..n).filter(|&i| !seen[i]).map(|i| self.methods[i].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Stop once the largest log-worth change falls below this.
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iters: 10_000, tol: 1e-10 }
    }
}

pub const ZERO_MEAN_LOG: &str = "zero_mean_log_worth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtScores {
    pub methods: Vec<String>,
    /// Natural-log worths, summing to zero.
    pub log_worth: Vec<f64>,
    pub normalization: String,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each iteration, starting from the initial worths.
    pub log_likelihood: Vec<f64>,
    /// Methods that received pseudo-counts.
    pub smoothed: Vec<String>,
}

impl BtScores {
    pub fn index_of(&self, method: &str) -> Result<usize, BtError> {
        self.methods.iter().position(|m| m == method).ok_or_else(|| BtError::UnknownMethod(method.to_string()))
    }

    /// True when no iteration lowered the log-likelihood beyond rounding.
    pub fn is_monotone(&self) -> bool {
        self.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0))
    }

    /// Indices ordered by decreasing worth, ties by name.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.methods.len()).collect();
        idx.sort_by(|&a, &b| self.log_worth[b].total_cmp(&self.log_worth[a]).then(self.methods[a].cmp(&self.methods[b])));
        idx
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<5} {:<16} {:>12} {:>12}\n", "rank", "method", "log_worth", "worth");
        for (r, i) in self.ranking().into_iter().enumerate() {
            let _ = writeln!(out, "{:<5} {:<16} {:>12.6} {:>12.6}", r + 1, self.methods[i], self.log_worth[i], self.log_worth[i].exp());
        }
        if !self.converged {
            let _ = writeln!(out, "warning: not converged after {} iterations", self.iterations);
        }
        out
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), BtError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("scores serialize");
        std::fs::write(path, text + "\n").map_err(|source| BtError::Io { path: path.to_path_buf(), source })
    }
}

fn log_likelihood(w: &[Vec<f64>], log_s: &[f64]) -> f64 {
    let n = log_s.len();
    let mut ll = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && w[i][j] > 0.0 {
                let d = log_s[j] - log_s[i];
                // log s_i − log(s_i + s_j) = −log(1 + exp(log s_j − log s_i))
                ll -= w[i][j] * if d > 0.0 { d + (-d).exp().ln_1p() } else { d.exp().ln_1p() };
            }
        }
    }
    ll
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Maximum-likelihood Bradley-Terry fit.
///
/// Methods without a win or without a loss get 0.5 added to both directions
/// of each of their pairs. Hitting `max_iters` returns the last iterate with
/// `converged = false`.
pub fn fit_bradley_terry(m: &ComparisonMatrix, opts: FitOptions) -> Result<BtScores, BtError> {
    let n = m.methods.len();
    if n < 2 {
        return Err(BtError::TooFewMethods);
    }
    if opts.max_iters == 0 || !(opts.tol > 0.0) {
        return Err(BtError::InvalidParameter("max_iters and tol must be positive".into()));
    }
    let missing = m.unreachable();
    if !missing.is_empty() {
        return Err(BtError::Disconnected(missing));
    }

    let mut w: Vec<Vec<f64>> = m.wins.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
    let degenerate: Vec<usize> = (0..n)
        .filter(|&i| {
            let won: u64 = m.wins[i].iter().sum();
            let lost: u64 = (0..n).map(|j| m.wins[j][i]).sum();
            won == 0 || lost == 0
        })
        .collect();
    for &i in &degenerate {
        for j in (0..n).filter(|&j| j != i) {
            w[i][j] += 0.5;
            w[j][i] += 0.5;
        }
    }

    let total_wins: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    let mut log_s = vec![0.0; n];
    let mut trace = vec![log_likelihood(&w, &log_s)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let s: Vec<f64> = log_s.iter().map(|v| v.exp()).collect();
        let mut next: Vec<f64> = (0..n)
            .map(|i| {
                let denom: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (w[i][j] + w[j][i]) / (s[i] + s[j]))
                    .sum();
                (total_wins[i] / denom).ln()
            })
            .collect();
        center(&mut next);
        let delta = next.iter().zip(&log_s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        log_s = next;
        trace.push(log_likelihood(&w, &log_s));
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(BtScores {
        methods: m.methods.clone(),
        log_worth: log_s,
        normalization: ZERO_MEAN_LOG.into(),
        iterations,
        converged,
        log_likelihood: trace,
        smoothed: degenerate.iter().map(|&i| m.methods[i].clone()).collect(),
    })
}

/// `exp(w_i) / (exp(w_i) + exp(w_j))`.
pub fn predict_win_prob(s: &BtScores, i: &str, j: &str) -> Result<f64, BtError> {
    let (a, b) = (s.index_of(i)?, s.index_of(j)?);
    if a == b {
        return Err(BtError::InvalidParameter(format!("`{i}` compared with itself")));
    }
    let d = s.log_worth[a] - s.log_worth[b];
    // Logistic of d; complementary calls compute 1 − p of the same value.
    Ok(if d >= 0.0 { 1.0 / (1.0 + (-d).exp()) } else { 1.0 - 1.0 / (1.0 + d.exp()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn two_method_closed_form() {
        let m = ComparisonMatrix::from_counts(names(2), vec![vec![0, 75], vec![25, 0]]).unwrap();
        let s = fit_bradley_terry(&m, FitOptions::default()).unwrap();
        assert!(s.converged);
        assert!(((s.log_worth[0] - s.log_worth[1]).exp() - 3.0).abs() < 1e-6);
        assert!((s.log_worth.iter().sum::<f64>()).abs() < 1e-10);
        assert!(s.is_monotone());
    }

    #[test]
    fn symmetric_counts_give_zero() {
        let m = ComparisonMatrix::from_counts(names(3), vec![vec![0, 5, 5], vec![5, 0, 5], vec![5, 5, 0]]).unwrap();
        let s = fit_bradley_terry(&m, FitOptions::default()).unwrap();
        assert!(s.log_worth.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn disconnected_is_an_error() {
        let m = ComparisonMatrix::from_counts(
            names(4),
            vec![vec![0, 3, 0, 0], vec![2, 0, 0, 0], vec![0, 0, 0, 1], vec![0, 0, 4, 0]],
        )
        .unwrap();
        assert!(matches!(fit_bradley_terry(&m, FitOptions::default()), Err(BtError::Disconnected(v)) if v == ["m2", "m3"]));
    }

    #[test]
    fn undefeated_method_is_smoothed() {
        let m = ComparisonMatrix::from_counts(names(3), vec![vec![0, 4, 3], vec![0, 0, 2], vec![0, 1, 0]]).unwrap();
        let s = fit_bradley_terry(&m, FitOptions::default()).unwrap();
        assert_eq!(s.smoothed, vec!["m0"]);
        assert!(s.converged && s.log_worth.iter().all(|v| v.is_finite()));
        assert_eq!(s.ranking()[0], 0);
    }

    #[test]
    fn iteration_limit_flags() {
        let m = ComparisonMatrix::from_counts(names(3), vec![vec![0, 9, 1], vec![3, 0, 7], vec![2, 5, 0]]).unwrap();
        let s = fit_bradley_terry(&m, FitOptions { max_iters: 2, tol: 1e-14 }).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 2);
        assert_eq!(s.log_likelihood.len(), 3);
    }

    #[test]
    fn win_probabilities() {
        let s = BtScores {
            methods: names(3),
            log_worth: vec![3f64.ln() / 2.0, -(3f64.ln()) / 2.0, 0.0],
            normalization: ZERO_MEAN_LOG.into(),
            iterations: 0,
            converged: true,
            log_likelihood: vec![],
            smoothed: vec![],
        };
        assert!((predict_win_prob(&s, "m0", "m1").unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(predict_win_prob(&s, "m0", "m1").unwrap() + predict_win_prob(&s, "m1", "m0").unwrap(), 1.0);
        assert!(predict_win_prob(&s, "m0", "zz").is_err());
        assert!(predict_win_prob(&s, "m0", "m0").is_err());
    }

    #[test]
    fn csv_parsing() {
        let text = "method_a,method_b,winner\nA,B,A\nB,C,C\nA,C,A\n\nC,A,C\n";
        let m = ComparisonMatrix::parse_csv(text).unwrap();
        assert_eq!(m.methods(), ["A", "B", "C"]);
        assert_eq!((m.wins(0, 1), m.wins(2, 1), m.wins(0, 2), m.wins(2, 0)), (1, 1, 1, 1));
        assert_eq!(m.total(), 4);
        assert!(matches!(ComparisonMatrix::parse_csv("A,B,C\n"), Err(BtError::Parse { line: 1, .. })));
        assert!(ComparisonMatrix::parse_csv("A,B\n").is_err());
        assert!(ComparisonMatrix::parse_csv("A,A,A\n").is_err());
    }

    proptest! {
        #[test]
        fn scaling_counts_keeps_fit(counts in proptest::collection::vec(1u64..40, 6), k in 2u64..6) {
            let at = |i: usize, j: usize| -> u64 {
                match (i, j) { (0, 1) => counts[0], (1, 0) => counts[1], (0, 2) => counts[2], (2, 0) => counts[3], (1, 2) => counts[4], (2, 1) => counts[5], _ => 0 }
            };
            let base: Vec<Vec<u64>> = (0..3).map(|i| (0..3).map(|j| at(i, j)).collect()).collect();
            let scaled: Vec<Vec<u64>> = base.iter().map(|r| r.iter().map(|c| c * k).collect()).collect();
            let a = fit_bradley_terry(&ComparisonMatrix::from_counts(names(3), base).unwrap(), FitOptions::default()).unwrap();
            let b = fit_bradley_terry(&ComparisonMatrix::from_counts(names(3), scaled).unwrap(), FitOptions::default()).unwrap();
            prop_assert!(a.is_monotone() && b.is_monotone());
            prop_assert!(a.log_worth.iter().sum::<f64>().abs() < 1e-10);
            for (x, y) in a.log_worth.iter().zip(&b.log_worth) {
                prop_assert!((x - y).abs() < 1e-8);
            }
            prop_assert_eq!(a.ranking(), b.ranking());
        }
    }
}
