//! Cached `F_GUE` reference table on `[-6, 4]`, step 0.02.
//!
//! File layout: a `# sha256: <hex>` line, then the CSV body `t,F` whose
//! digest it records. A missing or corrupt file is regenerated.

use anyhow::{Context, Result};
use polymerlab_core::fredholm::{fgue_classical, CLASSICAL_NODES, FGUE_RANGE};
use polymerlab_core::parallel::map_indexed;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::output::write_atomic;

pub const TABLE_STEP: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct FgueTable {
    pub t: Vec<f64>,
    pub f: Vec<f64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl FgueTable {
    /// Evaluates the classical Airy determinant at every grid point.
    pub fn build(workers: usize) -> Result<Self> {
        let (lo, hi) = FGUE_RANGE;
        let count = ((hi - lo) / TABLE_STEP).round() as usize + 1;
        let t: Vec<f64> = (0..count).map(|i| lo + i as f64 * TABLE_STEP).collect();
        let f = map_indexed(workers, count, |i| fgue_classical(t[i], CLASSICAL_NODES))
            .into_iter()
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(FgueTable { t, f })
    }

    fn body(&self) -> String {
        let mut s = String::from("t,F\n");
        for (t, f) in self.t.iter().zip(&self.f) {
            s.push_str(&format!("{t},{f}\n"));
        }
        s
    }

    pub fn to_file_contents(&self) -> String {
        let body = self.body();
        format!("# sha256: {}\n{body}", sha256_hex(body.as_bytes()))
    }

    /// Parses a cache file; `None` when the checksum or layout is wrong.
    pub fn parse(text: &str) -> Option<Self> {
        let (first, body) = text.split_once('\n')?;
        let digest = first.strip_prefix("# sha256: ")?;
        if sha256_hex(body.as_bytes()) != digest.trim() {
            return None;
        }
        let mut lines = body.lines();
        if lines.next()? != "t,F" {
            return None;
        }
        let mut t = Vec::new();
        let mut f = Vec::new();
        for line in lines {
            let (a, b) = line.split_once(',')?;
            t.push(a.parse().ok()?);
            f.push(b.parse().ok()?);
        }
        if t.len() < 2 {
            return None;
        }
        Some(FgueTable { t, f })
    }

    /// Reads the table at `path`, rebuilding and rewriting it if absent or corrupt.
    pub fn load_or_build(path: &Path, workers: usize) -> Result<Self> {
        if let Ok(text) = std::fs::read_to_string(path) {
            if let Some(table) = Self::parse(&text) {
                return Ok(table);
            }
        }
        let table = Self::build(workers)?;
        write_atomic(path, table.to_file_contents().as_bytes())
            .with_context(|| format!("caching F_GUE table at {}", path.display()))?;
        Ok(table)
    }

    /// Linear interpolation; 0 below the table and 1 above it.
    pub fn cdf(&self, x: f64) -> f64 {
        let (first, last) = (self.t[0], self.t[self.t.len() - 1]);
        if x < first {
            return 0.0;
        }
        if x >= last {
            return 1.0;
        }
        let i = self.t.partition_point(|t| *t <= x).clamp(1, self.t.len() - 1);
        let (t0, t1) = (self.t[i - 1], self.t[i]);
        let w = (x - t0) / (t1 - t0);
        self.f[i - 1] * (1.0 - w) + self.f[i] * w
    }

    /// Inverse of [`cdf`](Self::cdf) for `p` inside the tabulated range.
    pub fn quantile(&self, p: f64) -> f64 {
        let i = self.f.partition_point(|f| *f < p).clamp(1, self.f.len() - 1);
        let (f0, f1) = (self.f[i - 1], self.f[i]);
        let w = if f1 > f0 { ((p - f0) / (f1 - f0)).clamp(0.0, 1.0) } else { 0.0 };
        self.t[i - 1] + w * (self.t[i] - self.t[i - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use polymerlab_core::rng::{stream, Lane};
    use polymerlab_core::stats::ks_one_sample;
    use rand::Rng;

    #[test]
    fn cache_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fgue.csv");
        let table = FgueTable::load_or_build(&path, 1).unwrap();
        assert_eq!(table.t.len(), 501);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(FgueTable::parse(&text).unwrap(), table);
        // flip one digit in the body
        let bad = text.replacen("t,F\n-6,", "t,F\n-5,", 1);
        assert!(FgueTable::parse(&bad).is_none());
        std::fs::write(&path, bad).unwrap();
        assert_eq!(FgueTable::load_or_build(&path, 1).unwrap(), table);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    }

    #[test]
    fn samples_from_the_table_have_small_ks() {
        let table = FgueTable::build(1).unwrap();
        assert!((table.cdf(0.0) - 0.969_372_828_4).abs() < 1e-9);
        let mut rng = stream(3, 0, Lane::Auxiliary);
        let n = 4000;
        let mut xs: Vec<f64> = (0..n).map(|_| table.quantile(rng.random_range(0.001..0.999))).collect();
        xs.sort_by(f64::total_cmp);
        let ks = ks_one_sample(&xs, |x| table.cdf(x));
        // truncating p to [0.001, 0.999] costs at most 1e-3
        assert!(ks < 1.63 / (n as f64).sqrt() + 1e-3, "{ks}");
    }
}
