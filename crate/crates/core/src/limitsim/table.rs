use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Environment variable naming the directory for cached limit samples.
pub const CACHE_ENV: &str = "FDCHANGE_TABLE_CACHE";

/// Defaults for tabulation.
pub const DEFAULT_TABLE_REPS: usize = 100_000;
pub const DEFAULT_PVALUE_REPS: usize = 10_000;
pub const DEFAULT_BRIDGE_GRID: usize = 1000;

const CHUNK: usize = 1000;

/// Where the critical values came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableProvenance {
    Simulated { reps: usize, bridge_grid: usize, seed: u64 },
    UserSupplied,
}

/// Quantiles `K_d(α)` of `∫ Σ_{l≤d} B_l²`, optionally with the draws they
/// were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValueTable {
    entries: Vec<(usize, f64, f64)>,
    provenance: TableProvenance,
    samples: BTreeMap<usize, Vec<f64>>,
}

fn alpha_matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

/// Empirical `1 - alpha` quantile of sorted draws.
fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let r = sorted.len();
    let idx = ((1.0 - alpha) * r as f64 - 1e-9).ceil() as usize;
    sorted[idx.clamp(1, r) - 1]
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(invalid("at least one alpha is required"));
    }
    for &a in alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(invalid(format!("alpha {a} is not in (0, 1)")));
        }
    }
    Ok(())
}

impl CriticalValueTable {
    /// Table from explicit `(d, alpha, K)` triples.
    pub fn from_entries(entries: Vec<(usize, f64, f64)>) -> Result<Self> {
        for &(d, a, k) in &entries {
            if d == 0 || !(a > 0.0 && a < 1.0) || !k.is_finite() {
                return Err(invalid(format!("bad table entry d={d}, alpha={a}, K={k}")));
            }
        }
        let mut table = Self {
            entries,
            provenance: TableProvenance::UserSupplied,
            samples: BTreeMap::new(),
        };
        table.sort();
        Ok(table)
    }

    /// Table from limit draws, `samples[d]` holding the draws for dimension `d`.
    pub fn from_samples(
        mut samples: BTreeMap<usize, Vec<f64>>,
        alphas: &[f64],
        provenance: TableProvenance,
    ) -> Result<Self> {
        check_alphas(alphas)?;
        let mut entries = Vec::new();
        for (&d, draws) in samples.iter_mut() {
            if draws.is_empty() {
                return Err(invalid(format!("no limit draws for d={d}")));
            }
            draws.sort_by(f64::total_cmp);
            for &a in alphas {
                entries.push((d, a, upper_quantile(draws, a)));
            }
        }
        let mut table = Self {
            entries,
            provenance,
            samples,
        };
        table.sort();
        Ok(table)
    }

    fn sort(&mut self) {
        self.entries
            .sort_by(|x, y| x.0.cmp(&y.0).then(y.1.total_cmp(&x.1)));
    }

    pub fn entries(&self) -> &[(usize, f64, f64)] {
        &self.entries
    }

    pub fn provenance(&self) -> &TableProvenance {
        &self.provenance
    }

    pub fn samples(&self, d: usize) -> Option<&[f64]> {
        self.samples.get(&d).map(Vec::as_slice)
    }

    pub fn contains(&self, d: usize, alpha: f64) -> bool {
        self.entries.iter().any(|&(e, a, _)| e == d && alpha_matches(a, alpha))
    }

    /// `K_d(α)`.
    pub fn critical_value(&self, d: usize, alpha: f64) -> Result<f64> {
        if let Some(&(_, _, k)) = self.entries.iter().find(|&&(e, a, _)| e == d && alpha_matches(a, alpha)) {
            return Ok(k);
        }
        match self.samples.get(&d) {
            Some(draws) if alpha > 0.0 && alpha < 1.0 => Ok(upper_quantile(draws, alpha)),
            _ => Err(Error::TableMiss { d, alpha }),
        }
    }

    /// Add-one Monte Carlo p-value `(1 + #{draws ≥ statistic}) / (reps + 1)`.
    pub fn p_value(&self, statistic: f64, d: usize) -> Result<f64> {
        let draws = self
            .samples
            .get(&d)
            .ok_or(Error::TableMiss { d, alpha: f64::NAN })?;
        let below = draws.partition_point(|&x| x < statistic);
        let exceed = draws.len() - below;
        Ok((1 + exceed) as f64 / (draws.len() + 1) as f64)
    }

    /// Whether `K_d(α)` increases in `d` and decreases in `α`.
    pub fn is_monotone(&self) -> bool {
        let ok = |a: &(usize, f64, f64), b: &(usize, f64, f64)| {
            let same_d_smaller_alpha = a.0 == b.0 && b.1 < a.1;
            let same_alpha_larger_d = alpha_matches(a.1, b.1) && b.0 > a.0;
            !(same_d_smaller_alpha || same_alpha_larger_d) || b.2 > a.2
        };
        self.entries
            .iter()
            .all(|a| self.entries.iter().all(|b| ok(a, b)))
    }

    /// CSV with columns `d,alpha,critical_value,source,reps,bridge_grid,seed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["d", "alpha", "critical_value", "source", "reps", "bridge_grid", "seed"])?;
        let (source, reps, grid, seed) = match &self.provenance {
            TableProvenance::Simulated { reps, bridge_grid, seed } => {
                ("simulated", reps.to_string(), bridge_grid.to_string(), seed.to_string())
            }
            TableProvenance::UserSupplied => ("user", String::new(), String::new(), String::new()),
        };
        for &(d, a, k) in &self.entries {
            w.write_record([
                d.to_string(),
                a.to_string(),
                k.to_string(),
                source.to_string(),
                reps.clone(),
                grid.clone(),
                seed.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `write_csv` layout; only the first three columns are required.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let mut entries = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i)
                    .map(str::trim)
                    .ok_or_else(|| invalid(format!("table row {} has fewer than 3 columns", line + 2)))
            };
            let parse_err = |col: &str| invalid(format!("table row {}: bad {col}", line + 2));
            let d: usize = field(0)?.parse().map_err(|_| parse_err("d"))?;
            let a: f64 = field(1)?.parse().map_err(|_| parse_err("alpha"))?;
            let k: f64 = field(2)?.parse().map_err(|_| parse_err("critical_value"))?;
            entries.push((d, a, k));
        }
        Self::from_entries(entries)
    }
}

/// One draw of `∫ B²` per bridge, trapezoid rule on `grid` equispaced points.
fn bridge_integral(grid: usize, rng: &mut ChaCha8Rng, path: &mut [f64]) -> f64 {
    let h = 1.0 / (grid - 1) as f64;
    let sd = h.sqrt();
    let mut w = 0.0;
    path[0] = 0.0;
    for p in path.iter_mut().skip(1) {
        let z: f64 = StandardNormal.sample(rng);
        w += sd * z;
        *p = w;
    }
    let w1 = w;
    let mut acc = 0.0;
    for (j, &p) in path.iter().enumerate().take(grid - 1).skip(1) {
        let b = p - (j as f64 * h) * w1;
        acc += b * b;
    }
    acc * h
}

/// Draws of `∫ Σ_{l≤d} B_l²` for every `d = 1..=d_max`, nested so that the
/// draw for `d` extends the draw for `d - 1` by one more bridge.
pub fn limit_samples(d_max: usize, reps: usize, bridge_grid: usize, seed: u64) -> Result<BTreeMap<usize, Vec<f64>>> {
    if d_max == 0 {
        return Err(invalid("d_max must be at least 1"));
    }
    if reps == 0 {
        return Err(invalid("reps must be at least 1"));
    }
    if bridge_grid < 3 {
        return Err(invalid("bridge grid needs at least 3 points"));
    }
    let chunks = reps.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(reps - c * CHUNK);
            let mut path = vec![0.0; bridge_grid];
            let mut out = Vec::with_capacity(count * d_max);
            for _ in 0..count {
                let mut cum = 0.0;
                for _ in 0..d_max {
                    cum += bridge_integral(bridge_grid, &mut rng, &mut path);
                    out.push(cum);
                }
            }
            out
        })
        .collect();
    let mut samples: BTreeMap<usize, Vec<f64>> = (1..=d_max).map(|d| (d, Vec::with_capacity(reps))).collect();
    for chunk in per_chunk {
        for row in chunk.chunks_exact(d_max) {
            for (l, &v) in row.iter().enumerate() {
                samples.get_mut(&(l + 1)).expect("all d present").push(v);
            }
        }
    }
    Ok(samples)
}

/// Simulated `K_d(α)` for `d = 1..=d_max` and each alpha, retaining the draws.
pub fn limit_quantiles(d_max: usize, alphas: &[f64], reps: usize, bridge_grid: usize, seed: u64) -> Result<CriticalValueTable> {
    check_alphas(alphas)?;
    let samples = limit_samples(d_max, reps, bridge_grid, seed)?;
    CriticalValueTable::from_samples(
        samples,
        alphas,
        TableProvenance::Simulated {
            reps,
            bridge_grid,
            seed,
        },
    )
}

/// Directory named by [`CACHE_ENV`], if set and non-empty.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn cache_file(dir: &Path, d_max: usize, reps: usize, bridge_grid: usize, seed: u64) -> PathBuf {
    dir.join(format!("limit_d{d_max}_r{reps}_g{bridge_grid}_s{seed}.bin"))
}

fn read_cache(path: &Path, d_max: usize, reps: usize) -> Option<BTreeMap<usize, Vec<f64>>> {
    let bytes = std::fs::read(path).ok()?;
    if bytes.len() != d_max * reps * 8 {
        return None;
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Some(
        values
            .chunks_exact(reps)
            .enumerate()
            .map(|(l, c)| (l + 1, c.to_vec()))
            .collect(),
    )
}

fn write_cache(path: &Path, samples: &BTreeMap<usize, Vec<f64>>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut bytes = Vec::with_capacity(samples.values().map(Vec::len).sum::<usize>() * 8);
    for draws in samples.values() {
        for v in draws {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// [`limit_quantiles`] backed by an on-disk cache of the draws in `cache`.
pub fn cached_limit_quantiles(
    cache: Option<&Path>,
    d_max: usize,
    alphas: &[f64],
    reps: usize,
    bridge_grid: usize,
    seed: u64,
) -> Result<CriticalValueTable> {
    check_alphas(alphas)?;
    let provenance = TableProvenance::Simulated {
        reps,
        bridge_grid,
        seed,
    };
    let Some(dir) = cache else {
        return limit_quantiles(d_max, alphas, reps, bridge_grid, seed);
    };
    let path = cache_file(dir, d_max, reps, bridge_grid, seed);
    if let Some(samples) = read_cache(&path, d_max, reps) {
        return CriticalValueTable::from_samples(samples, alphas, provenance);
    }
    let samples = limit_samples(d_max, reps, bridge_grid, seed)?;
    let table = CriticalValueTable::from_samples(samples, alphas, provenance)?;
    write_cache(&path, &table.samples)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_index_convention() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(upper_quantile(&draws, 0.05), 95.0);
        assert_eq!(upper_quantile(&draws, 0.5), 50.0);
        assert_eq!(upper_quantile(&draws, 0.999), 1.0);
    }

    #[test]
    fn p_value_cases() {
        let draws: Vec<f64> = (1..=99).map(f64::from).collect();
        let mut s = BTreeMap::new();
        s.insert(1, draws);
        let t = CriticalValueTable::from_samples(s, &[0.05], TableProvenance::UserSupplied).unwrap();
        assert_eq!(t.p_value(0.0, 1).unwrap(), 1.0);
        assert_eq!(t.p_value(1000.0, 1).unwrap(), 1.0 / 100.0);
        assert!((t.p_value(50.0, 1).unwrap() - 0.5).abs() < 0.02);
        assert!(matches!(t.p_value(1.0, 2), Err(Error::TableMiss { .. })));
    }

    #[test]
    fn lookup_and_miss() {
        let t = CriticalValueTable::from_entries(vec![(1, 0.05, 0.46), (2, 0.05, 0.75)]).unwrap();
        assert_eq!(t.critical_value(2, 0.05).unwrap(), 0.75);
        assert!(matches!(t.critical_value(3, 0.05), Err(Error::TableMiss { d: 3, .. })));
        assert!(matches!(t.critical_value(1, 0.01), Err(Error::TableMiss { .. })));
    }

    #[test]
    fn small_table_is_deterministic_and_monotone() {
        let a = limit_quantiles(3, &[0.1, 0.05, 0.01], 4000, 200, 11).unwrap();
        let b = limit_quantiles(3, &[0.1, 0.05, 0.01], 4000, 200, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entries().len(), 9);
        assert!(a.is_monotone());
        let mean1 = a.samples(1).unwrap().iter().sum::<f64>() / 4000.0;
        assert!((mean1 - 1.0 / 6.0).abs() < 0.01, "mean {mean1}");
    }

    #[test]
    fn csv_round_trip() {
        let t = limit_quantiles(2, &[0.05, 0.01], 2000, 100, 3).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = CriticalValueTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.entries(), t.entries());
        assert_eq!(back.provenance(), &TableProvenance::UserSupplied);
    }

    #[test]
    fn cache_reuses_draws() {
        let dir = tempfile::tempdir().unwrap();
        let a = cached_limit_quantiles(Some(dir.path()), 2, &[0.05], 1500, 50, 5).unwrap();
        let file = cache_file(dir.path(), 2, 1500, 50, 5);
        assert!(file.exists());
        let b = cached_limit_quantiles(Some(dir.path()), 2, &[0.05, 0.1], 1500, 50, 5).unwrap();
        assert_eq!(a.samples(2), b.samples(2));
        assert_eq!(a.critical_value(1, 0.05).unwrap(), b.critical_value(1, 0.05).unwrap());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(limit_quantiles(0, &[0.05], 10, 10, 0).is_err());
        assert!(limit_quantiles(1, &[0.05], 0, 10, 0).is_err());
        assert!(limit_quantiles(1, &[1.5], 10, 10, 0).is_err());
    }
}
