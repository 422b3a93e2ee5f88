//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line and
//! then asserts it.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use overbeam::analysis::{pairwise_error_fixed_alpha, pairwise_error_rayleigh, PairwiseContext};
use overbeam::array_model::{sample_complex_gaussian, AngleGrid, ChannelRealization};
use overbeam::config::RunConfig;
use overbeam::estimator::{slot_count, Algorithm, Estimator, EstimatorConfig};
use overbeam::montecarlo::{bound_curve, energy_at_pcef, run_sweep, ExperimentConfig, ResultTable};
use overbeam::parallel::Execution;
use overbeam::report::{bound_table, pcef_curve};
use overbeam::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 20_160_527;
/// Slack for the synthesized-beam residual in noiseless magnitude checks.
const RESIDUAL_SLACK: f64 = 1e-6;

fn report(criterion: u32, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_slot_counts() {
    let start = Instant::now();
    let expected = [
        (3, [3, 9, 27, 81], [4, 8, 12, 16], [9, 18, 27, 36]),
        (7, [7, 49, 343, 2401], [9, 18, 27, 36], [49, 98, 147, 196]),
    ];
    let mut mismatches = Vec::new();
    for (k, ns, over, base) in expected {
        for i in 0..4 {
            let o = slot_count(Algorithm::Overlapped, ns[i], k).unwrap();
            let b = slot_count(Algorithm::NonOverlapped, ns[i], k).unwrap();
            if o != over[i] || b != base[i] {
                mismatches.push(format!("K={k} N={}: {o}/{b}", ns[i]));
            }
        }
    }
    let elapsed = start.elapsed();
    // the largest cell also has to run end to end
    let est = Estimator::new(EstimatorConfig::new(2401, 7, Algorithm::Overlapped)).unwrap();
    let trace = est.run(&ChannelRealization::new(100, 2000, Complex64::new(1.0, 0.0), 2401).unwrap(), 1).unwrap();
    if trace.slots != 36 {
        mismatches.push(format!("N=2401 run used {} slots", trace.slots));
    }
    report(
        1,
        mismatches.is_empty() && elapsed < Duration::from_secs(1),
        &format!("16 cells in {elapsed:.2?}, mismatches {mismatches:?}"),
    );
}

#[test]
fn criterion_2_codebook_fidelity() {
    let est = Estimator::new(EstimatorConfig::new(27, 3, Algorithm::Overlapped)).unwrap();
    let grid = AngleGrid::new(27).unwrap();
    let b = est.description_matrix().clone();
    let steering: Vec<_> = (0..27).map(|i| grid.steering(i).unwrap()).collect();
    let mut worst_in: f64 = 0.0;
    let mut worst_out: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for s in 0..est.stages() {
        let c_s = est.stage_gains()[s];
        for parent in 0..3usize.pow(s as u32) {
            let set = est.beam_set(s, parent).unwrap();
            worst_residual = worst_residual.max(set.max_relative_residual);
            let span = set.subranges[0].start..set.subranges[2].end;
            for m in 0..b.patterns() {
                let f = set.beams.column(m);
                for (i, u) in steering.iter().enumerate() {
                    let gain = u.iter().zip(f.iter()).map(|(a, w)| a.conj() * w).sum::<Complex64>().norm();
                    match set.subranges.iter().position(|r| r.contains(&i)) {
                        Some(kk) => worst_in = worst_in.max((gain - c_s * b.amplitude(m, kk)).abs() / c_s),
                        None => {
                            assert!(!span.contains(&i));
                            worst_out = worst_out.max(gain / c_s);
                        }
                    }
                }
            }
        }
    }
    report(
        2,
        worst_in <= 1e-6 && worst_out <= 1e-6 && worst_residual <= 1e-6,
        &format!("max in-range error {worst_in:.2e}, max out-of-range gain {worst_out:.2e}, max residual {worst_residual:.2e}"),
    );
}

fn random_channel(rng: &mut ChaCha8Rng, n: usize) -> ChannelRealization {
    let alpha = sample_complex_gaussian(rng, (n * n) as f64);
    ChannelRealization::new(rng.random_range(0..n), rng.random_range(0..n), alpha, n).unwrap()
}

#[test]
fn criterion_3_noiseless_exactness() {
    let start = Instant::now();
    let mut misses = Vec::new();
    for (n, k) in [(27, 3), (49, 7)] {
        for alg in [Algorithm::Overlapped, Algorithm::NonOverlapped] {
            let est = Estimator::new(EstimatorConfig::new(n, k, alg).with_noise_power(0.0)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ n as u64);
            let mut wrong = 0;
            for t in 0..10_000u64 {
                let ch = random_channel(&mut rng, n);
                let trace = est.run(&ch, t).unwrap();
                if (trace.theta_hat, trace.phi_hat) != (ch.theta, ch.phi) {
                    wrong += 1;
                }
            }
            if wrong > 0 {
                misses.push(format!("N={n} K={k} {alg}: {wrong}"));
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        3,
        misses.is_empty() && elapsed < Duration::from_secs(30),
        &format!("4 x 10^4 trials, misses {misses:?}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_4_mismatch_attenuation() {
    let est = Estimator::new(EstimatorConfig::new(27, 3, Algorithm::Overlapped).with_noise_power(0.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut worst: f64 = 0.0;
    for t in 0..1000u64 {
        let ch = random_channel(&mut rng, 27);
        let trace = est.run(&ch, t).unwrap();
        for st in &trace.stages {
            let correct = st.selected.norm();
            for ((kr, kt), z) in st.r.indexed_iter() {
                if (kr, kt) != (st.k_r, st.k_t) {
                    worst = worst.max(z.norm() / correct);
                }
            }
        }
    }
    let limit = std::f64::consts::FRAC_1_SQRT_2 + RESIDUAL_SLACK;
    report(4, worst <= limit, &format!("worst off-hypothesis ratio {worst:.9} vs limit {limit:.9}"));
}

/// Empirical `Pr(|ρ·s + n₂| > |s + n₁|)`, `n₁, n₂ ~ CN(0, N0)` with
/// correlation `ρ`.
fn simulate_pair(rho: f64, s: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sig = 0.5f64.sqrt();
    let c = (1.0 - rho * rho).sqrt();
    let mut hits = 0usize;
    for _ in 0..draws {
        let g: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n1 = (sig * g[0], sig * g[1]);
        let n2 = (sig * (rho * g[0] + c * g[2]), sig * (rho * g[1] + c * g[3]));
        let r1 = (s + n1.0).powi(2) + n1.1.powi(2);
        let r2 = (rho * s + n2.0).powi(2) + n2.1.powi(2);
        hits += (r2 > r1) as usize;
    }
    hits as f64 / draws as f64
}

/// `∫ P(x) (2x/V) e^{−x²/V} dx` by Simpson's rule.
fn rayleigh_quadrature(ctx: &PairwiseContext) -> f64 {
    let v = ctx.alpha_variance;
    let upper = 12.0 * v.sqrt();
    let n = 4000;
    let h = upper / n as f64;
    let f = |x: f64| pairwise_error_fixed_alpha(ctx, x).unwrap() * 2.0 * x / v * (-x * x / v).exp();
    let mut s = f(0.0) + f(upper);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn criterion_5_pairwise_oracles() {
    let draws = 1_000_000;
    let mut worst_z: f64 = 0.0;
    let mut worst_quad: f64 = 0.0;
    let mut point = 0u64;
    for rho in [0.0, 0.5, std::f64::consts::FRAC_1_SQRT_2] {
        for snr_db in [0.0, 5.0, 10.0] {
            let snr = 10f64.powf(snr_db / 10.0);
            // |α| = 1, N0 = 1: SNR = P_T
            let ctx = PairwiseContext::new(rho, 1.0, snr, 1.0).unwrap();
            let p = pairwise_error_fixed_alpha(&ctx, 1.0).unwrap();
            let f = simulate_pair(rho, snr.sqrt(), draws, SEED + point);
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            worst_z = worst_z.max((f - p).abs() / se);
            let r = pairwise_error_rayleigh(&ctx).unwrap();
            worst_quad = worst_quad.max((r - rayleigh_quadrature(&ctx)).abs());
            point += 1;
        }
    }
    report(
        5,
        worst_z <= 3.0 && worst_quad <= 1e-3,
        &format!("9 points, worst |MC - closed form| {worst_z:.2} SE, worst Rayleigh vs quadrature {worst_quad:.2e}"),
    );
}

/// Shared sweep for the statistical criteria.
fn sweep() -> &'static (ExperimentConfig, ResultTable) {
    static SWEEP: OnceLock<(ExperimentConfig, ResultTable)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let et_db: Vec<f64> = (0..=24).map(|i| 1.5 * i as f64).collect();
        let cfg = ExperimentConfig { trials: 10_000, seed: SEED, ..ExperimentConfig::new(27, 3, et_db) };
        let table = run_sweep(&cfg, Execution::default()).unwrap();
        (cfg, table)
    })
}

#[test]
fn criterion_6_bound_dominance() {
    let start = Instant::now();
    let (cfg, table) = sweep();
    let bound = bound_curve(27, 3, &cfg.et_db, cfg.alpha_variance, cfg.grid_law, false).unwrap();
    let rows: Vec<_> = table.for_algorithm(Algorithm::Overlapped).collect();
    let mut violations = Vec::new();
    let mut tightest = f64::INFINITY;
    for (row, b) in rows.iter().zip(&bound) {
        assert_eq!(row.et_db, b.et_db);
        let floor = row.estimate.pcef - 3.0 * row.estimate.std_error;
        tightest = tightest.min(b.bound - floor);
        if b.bound < floor {
            violations.push(format!("{} dB: bound {:.4} < {:.4}", row.et_db, b.bound, floor));
        }
    }
    let max_p = rows.iter().map(|r| r.estimate.pcef).fold(0.0, f64::max);
    let min_p = rows.iter().map(|r| r.estimate.pcef).fold(1.0, f64::min);
    let spans = max_p >= 0.9 && min_p <= 1e-2;
    let elapsed = start.elapsed();
    report(
        6,
        violations.is_empty() && spans && rows.len() >= 8 && elapsed < Duration::from_secs(300),
        &format!(
            "{} points, PCEF range [{min_p:.4}, {max_p:.4}], min margin {tightest:.4}, violations {violations:?}, {elapsed:.2?}",
            rows.len()
        ),
    );
}

#[test]
fn criterion_7_energy_gap() {
    let (_, table) = sweep();
    let over = energy_at_pcef(&table.curve(Algorithm::Overlapped), 0.1);
    let base = energy_at_pcef(&table.curve(Algorithm::NonOverlapped), 0.1);
    match (over, base) {
        (Some(o), Some(b)) => {
            let gap = o - b;
            report(
                7,
                (gap - 2.5).abs() <= 1.0,
                &format!("overlapped {o:.2} dB, non-overlapped {b:.2} dB, gap {gap:.2} dB (target 2.5 +/- 1)"),
            );
        }
        _ => report(7, false, "a curve does not cross PCEF = 0.1"),
    }
}

#[test]
fn criterion_8_mmse_improvement() {
    let (_, table) = sweep();
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut conditioned_note = Vec::new();
    for row in table.rows.iter().filter(|r| r.estimate.pcef < 0.5) {
        checked += 1;
        if row.mmse_error_all >= row.final_error_all {
            failures.push(format!("{} {} dB: {:.4} vs {:.4}", row.algorithm, row.et_db, row.mmse_error_all, row.final_error_all));
        }
        if row.mmse_error_successful >= row.final_error_successful {
            conditioned_note.push(format!("{} {} dB", row.algorithm, row.et_db));
        }
    }
    report(
        8,
        failures.is_empty() && checked > 0,
        &format!(
            "{checked} rows with PCEF < 0.5, unconditioned violations {failures:?}, conditioned violations {conditioned_note:?}"
        ),
    );
}

fn preset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(name)
}

fn render_fig3(cfg: &RunConfig, exec: Execution) -> Vec<Vec<u8>> {
    let exp = cfg.experiment();
    let table = run_sweep(&exp, exec).unwrap();
    let mut out: Vec<Vec<u8>> = exp.algorithms.iter().map(|&a| pcef_curve(&table, a).unwrap()).collect();
    let bound = bound_curve(cfg.n, cfg.k, &exp.et_db, exp.alpha_variance, exp.grid_law, cfg.zero_energy_row).unwrap();
    out.push(bound_table(&bound).unwrap());
    out
}

#[test]
fn criterion_9_determinism() {
    let cfg = RunConfig::load(&preset("fig3.toml")).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| render_fig3(&cfg, Execution::Parallel))
    };
    let one = run(1);
    let four = run(4);
    let sequential = render_fig3(&cfg, Execution::Sequential);
    let same = one == four && one == sequential;
    report(
        9,
        same && one.len() == 3,
        &format!("{} tables, 1 vs 4 workers identical: {}, sequential identical: {}", one.len(), one == four, one == sequential),
    );
}
