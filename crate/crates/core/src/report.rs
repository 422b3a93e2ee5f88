//! Rendering of result tables as CSV bytes.

use serde::Serialize;

use crate::error::Result;
use crate::estimator::{slot_count, Algorithm, AlphaEstimator};
use crate::io::{write_csv, write_csv_records};
use crate::montecarlo::{BoundRow, ResultTable};

#[derive(Serialize)]
struct PcefRecord {
    et_db: f64,
    total_power: f64,
    noise_power: f64,
    trials: usize,
    failures: usize,
    pcef: f64,
    std_error: f64,
    ci_low: f64,
    ci_high: f64,
    low_count: bool,
    slots: usize,
}

#[derive(Serialize)]
struct AlphaErrorRecord {
    et_db: f64,
    total_power: f64,
    trials: usize,
    failures: usize,
    pcef: f64,
    rel_error_all: f64,
    rel_error_successful: f64,
}

#[derive(Serialize)]
struct BoundRecord {
    n: usize,
    k: usize,
    et_db: f64,
    total_power: f64,
    pcef_bound: f64,
    per_stage: f64,
    clamped: bool,
}

/// Failure probability curve of one algorithm.
pub fn pcef_curve(table: &ResultTable, algorithm: Algorithm) -> Result<Vec<u8>> {
    let rows: Vec<PcefRecord> = table
        .for_algorithm(algorithm)
        .map(|r| PcefRecord {
            et_db: r.et_db,
            total_power: r.total_power,
            noise_power: r.noise_power,
            trials: r.estimate.trials,
            failures: r.estimate.failures,
            pcef: r.estimate.pcef,
            std_error: r.estimate.std_error,
            ci_low: r.estimate.ci_low,
            ci_high: r.estimate.ci_high,
            low_count: r.estimate.low_count,
            slots: r.slots,
        })
        .collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows)?;
    Ok(buf)
}

/// Mean relative fading-coefficient error of one algorithm and estimator.
pub fn alpha_error_curve(table: &ResultTable, algorithm: Algorithm, estimator: AlphaEstimator) -> Result<Vec<u8>> {
    let rows: Vec<AlphaErrorRecord> = table
        .for_algorithm(algorithm)
        .map(|r| AlphaErrorRecord {
            et_db: r.et_db,
            total_power: r.total_power,
            trials: r.estimate.trials,
            failures: r.estimate.failures,
            pcef: r.estimate.pcef,
            rel_error_all: r.alpha_error(estimator, false),
            rel_error_successful: r.alpha_error(estimator, true),
        })
        .collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &rows)?;
    Ok(buf)
}

pub fn bound_table(rows: &[BoundRow]) -> Result<Vec<u8>> {
    let recs: Vec<BoundRecord> = rows
        .iter()
        .map(|r| BoundRecord {
            n: r.n,
            k: r.k,
            et_db: r.et_db,
            total_power: r.total_power,
            pcef_bound: r.bound,
            per_stage: r.per_stage,
            clamped: r.clamped,
        })
        .collect();
    let mut buf = Vec::new();
    write_csv(&mut buf, &recs)?;
    Ok(buf)
}

/// Slot counts per algorithm (rows) and `(K, N = K^s)` design (columns).
pub fn slot_table(ks: &[usize], stages: usize) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
    let mut header = vec!["algorithm".to_string()];
    let mut designs = Vec::new();
    for &k in ks {
        for s in 1..=stages as u32 {
            let n = k.pow(s);
            header.push(format!("k{k}_n{n}"));
            designs.push((k, n));
        }
    }
    let mut rows = Vec::new();
    for alg in [Algorithm::Overlapped, Algorithm::NonOverlapped] {
        rows.push(designs.iter().map(|&(k, n)| slot_count(alg, n, k)).collect::<Result<Vec<_>>>()?);
    }
    Ok((header, rows))
}

pub fn slot_table_csv(ks: &[usize], stages: usize) -> Result<Vec<u8>> {
    let (header, rows) = slot_table(ks, stages)?;
    let records: Vec<Vec<String>> = [Algorithm::Overlapped, Algorithm::NonOverlapped]
        .iter()
        .zip(rows)
        .map(|(alg, r)| std::iter::once(alg.name().to_string()).chain(r.iter().map(|v| v.to_string())).collect())
        .collect();
    let mut buf = Vec::new();
    write_csv_records(&mut buf, &header, &records)?;
    Ok(buf)
}
