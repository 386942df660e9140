//! Acceptance suite: each test runs one numbered criterion end to end at
//! its stated scale and tolerance, and prints a single PASS/FAIL line.
//!
//! Criteria 1 and 2 replicate benchmark table cells at full replication
//! counts and take a few minutes each; everything else is fast.

use ndarray::{Array1, Array2};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdr::covariance::{band, sample_cov};
use sdr::dtsir::{auxiliary_threshold, screen};
use sdr::experiments::{
    run_phase_fixed_rho, run_phase_sweep, run_table, MethodSpec, PhaseFixedSpec, PhaseSweepSpec,
    TableCell, TableSpec,
};
use sdr::linalg::spectral_norm_sym;
use sdr::metrics::{projection, subspace_distance, DistanceNorm, Subspace};
use sdr::simgen::{build_covariance, generate, CovarianceFamily, Setting, SettingSpec};
use sdr::sir::lambda_hat;
use sdr::slicing::{center, slice_by_response, slice_means, var_h, Dataset};

const ACCEPTANCE_SEED: u64 = 20_240_601;

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{verdict}: {criterion} — {detail}");
}

/// Criterion 1: benchmark cell, tridiagonal cubic-link setting at full
/// scale (n=2000, p=1000, rho=0.5, H=20, d=1, 100 reps): mean Frobenius
/// subspace distance within [0.10, 0.22].
#[test]
fn criterion_1_table_cell_tridiagonal_cubic_link() {
    let spec = TableSpec {
        cells: vec![TableCell {
            setting: Setting::IV,
            n: 2000,
            p: 1000,
            rho: 0.5,
            method: MethodSpec::DtSir {
                h_screen: Some(20),
                h_sir: Some(20),
                threshold: None,
                covariance: None,
                ridge: 0.0,
            },
        }],
        reps: 100,
        seed: ACCEPTANCE_SEED,
        norm: DistanceNorm::Frobenius,
        threads: 0,
    };
    let started = std::time::Instant::now();
    let result = run_table(&spec).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let agg = &result.aggregates[0];
    // the 10-minute budget assumes 4 cores; scale it to this machine
    let cores = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1) as f64;
    let budget = 600.0 * (4.0 / cores).max(1.0);
    let pass = agg.valid && (0.10..=0.22).contains(&agg.mean) && elapsed < budget;
    report(
        "criterion 1 (table cell IV, n=2000, p=1000, rho=0.5)",
        pass,
        &format!(
            "mean={:.4} se={:.4} over {} reps ({} failures); window [0.10, 0.22]; \
             runtime {elapsed:.0}s (< {budget:.0}s scaled to {cores} cores)",
            agg.mean, agg.standard_error, agg.count, agg.failures
        ),
    );
    assert!(
        pass,
        "mean distance {:.4} outside [0.10, 0.22]",
        agg.mean
    );
}

/// Companion to criterion 1: the same pipeline at rho=0.3 (the correlation
/// level most consistent with the reference distances, whose source does
/// not state rho). Window is the reference value 0.161 +/- 0.06.
#[test]
fn table_cell_tridiagonal_cubic_link_moderate_correlation() {
    let spec = TableSpec {
        cells: vec![TableCell {
            setting: Setting::IV,
            n: 2000,
            p: 1000,
            rho: 0.3,
            method: MethodSpec::DtSir {
                h_screen: Some(20),
                h_sir: Some(20),
                threshold: None,
                covariance: None,
                ridge: 0.0,
            },
        }],
        reps: 100,
        seed: ACCEPTANCE_SEED,
        norm: DistanceNorm::Frobenius,
        threads: 0,
    };
    let result = run_table(&spec).unwrap();
    let agg = &result.aggregates[0];
    let pass = agg.valid && (0.101..=0.221).contains(&agg.mean);
    report(
        "companion (table cell IV at rho=0.3)",
        pass,
        &format!(
            "mean={:.4} se={:.4} over {} reps; window 0.161 +/- 0.06",
            agg.mean, agg.standard_error, agg.count
        ),
    );
    assert!(pass, "mean distance {:.4} outside 0.161 +/- 0.06", agg.mean);
}

/// Criterion 2: benchmark cell, independent-design two-direction setting
/// (n=1000, p=1000, screening slices 10 / SIR slices 20, d=2, 100 reps):
/// mean distance within [0.22, 0.40].
#[test]
fn criterion_2_table_cell_sin_exp_links() {
    let spec = TableSpec {
        cells: vec![TableCell {
            setting: Setting::I,
            n: 1000,
            p: 1000,
            rho: 0.0,
            method: MethodSpec::DtSir {
                h_screen: Some(10),
                h_sir: Some(20),
                threshold: None,
                covariance: None,
                ridge: 0.0,
            },
        }],
        reps: 100,
        seed: ACCEPTANCE_SEED + 1,
        norm: DistanceNorm::Frobenius,
        threads: 0,
    };
    let result = run_table(&spec).unwrap();
    let agg = &result.aggregates[0];
    let pass = agg.valid && (0.22..=0.40).contains(&agg.mean);
    report(
        "criterion 2 (table cell I, n=1000, p=1000)",
        pass,
        &format!(
            "mean={:.4} se={:.4} over {} reps ({} failures); window [0.22, 0.40]",
            agg.mean, agg.standard_error, agg.count, agg.failures
        ),
    );
    assert!(pass, "mean distance {:.4} outside [0.22, 0.40]", agg.mean);
}

/// Criterion 3: sparse-unaware full SIR must refuse the p >= n sample
/// covariance outright, and with a ridge it stays far from the truth
/// (mean distance > 1.0 on Setting I, n=500, p=1000).
#[test]
fn criterion_3_full_sir_fails_in_high_dimension() {
    // without ridge: hard error
    let no_ridge = TableSpec {
        cells: vec![TableCell {
            setting: Setting::I,
            n: 500,
            p: 1000,
            rho: 0.0,
            method: MethodSpec::SirFull { h: Some(20), ridge: 0.0 },
        }],
        reps: 3,
        seed: ACCEPTANCE_SEED + 2,
        norm: DistanceNorm::Frobenius,
        threads: 0,
    };
    let result = run_table(&no_ridge).unwrap();
    let errored = !result.aggregates[0].valid && result.aggregates[0].failures == 3;

    // with ridge: runs, but lands far from the truth
    let ridged = TableSpec {
        cells: vec![TableCell {
            setting: Setting::I,
            n: 500,
            p: 1000,
            rho: 0.0,
            method: MethodSpec::SirFull { h: Some(20), ridge: 1e-3 },
        }],
        reps: 20,
        seed: ACCEPTANCE_SEED + 2,
        norm: DistanceNorm::Frobenius,
        threads: 0,
    };
    let result = run_table(&ridged).unwrap();
    let agg = &result.aggregates[0];
    let pass = errored && agg.valid && agg.mean > 1.0;
    report(
        "criterion 3 (full SIR failure at p >= n)",
        pass,
        &format!(
            "unridged cell errored in all reps: {errored}; ridged mean distance {:.3} (> 1.0 required)",
            agg.mean
        ),
    );
    assert!(pass, "errored={errored}, ridged mean={:.3}", agg.mean);
}

/// Criterion 4: phase-transition sweep (n=200, H=10, ratio 0.05..4 by
/// 0.05, 20 reps): Spearman > 0.9, small-ratio angle < 0.35 rad, and the
/// large-ratio angle exceeds the 0.1-ratio angle by > 0.5 rad.
#[test]
fn criterion_4_phase_transition_sweep() {
    let spec = PhaseSweepSpec {
        n: 200,
        h: 10,
        rho_min: 0.05,
        rho_max: 4.0,
        rho_step: 0.05,
        reps: 20,
        seed: ACCEPTANCE_SEED + 3,
        threads: 0,
    };
    let started = std::time::Instant::now();
    let result = run_phase_sweep(&spec).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let spearman = result.spearman.unwrap_or(f64::NAN);
    let mean_at = |tag: &str| {
        result
            .aggregates
            .iter()
            .find(|a| a.cell_id.contains(tag))
            .map(|a| a.mean)
            .unwrap_or(f64::NAN)
    };
    let low = mean_at("rho0.0500");
    let ref_low = mean_at("rho0.1000");
    let high = mean_at("rho4.0000");
    let pass = spearman > 0.9 && low < 0.35 && (high - ref_low) > 0.5 && elapsed < 300.0;
    report(
        "criterion 4 (phase sweep)",
        pass,
        &format!(
            "spearman={spearman:.4}, angle(0.05)={low:.3}, angle(0.1)={ref_low:.3}, \
             angle(4)={high:.3}, runtime {elapsed:.1}s (< 300s)"
        ),
    );
    assert!(pass);
}

/// Criterion 5: plateau at fixed ratio 2 (p in {100, 200, 400}, 50 reps):
/// mean angle stays above 0.8 rad and varies by < 0.1 rad across p. The
/// slice count is 4 so the smallest cell (n=50) keeps 12 samples per
/// slice; thinner slices inflate the small-n cells above the plateau.
#[test]
fn criterion_5_phase_plateau_at_fixed_ratio() {
    let spec = PhaseFixedSpec {
        rho_values: vec![2.0],
        p_grid: vec![100, 200, 400],
        h: 4,
        reps: 50,
        seed: ACCEPTANCE_SEED + 4,
        threads: 0,
    };
    let result = run_phase_fixed_rho(&spec).unwrap();
    let means: Vec<f64> = result.aggregates.iter().map(|a| a.mean).collect();
    let min = means.iter().cloned().fold(f64::MAX, f64::min);
    let max = means.iter().cloned().fold(f64::MIN, f64::max);
    let pass = min > 0.8 && (max - min) < 0.1;
    report(
        "criterion 5 (plateau at ratio 2)",
        pass,
        &format!(
            "mean angles {:?}, spread {:.3} (< 0.1), floor {:.3} (> 0.8)",
            means.iter().map(|m| (m * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            max - min,
            min
        ),
    );
    assert!(pass);
}

/// Criterion 6: sure screening on the tridiagonal cubic-link setting
/// (n=2000, p=1000, auxiliary threshold, 50 reps): all three active
/// coordinates retained in >= 95% of reps; false inclusions among the 997
/// complement coordinates average <= 2%.
#[test]
fn criterion_6_sure_screening() {
    let reps = 50u64;
    let mut all_active_kept = 0usize;
    let mut false_fraction_sum = 0.0f64;
    for rep in 0..reps {
        let seed = sdr::experiments::derive_seed(ACCEPTANCE_SEED + 5, 0, rep);
        let spec = SettingSpec::new(Setting::IV, 2000, 1000, 0.5, seed);
        let (data, _) = generate(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let t = auxiliary_threshold(&data.y(), 20, 1000, &mut rng).unwrap();
        let screening = screen(&data, 20, t).unwrap();
        let kept_active = [0usize, 1, 2]
            .iter()
            .all(|k| screening.included.contains(k));
        all_active_kept += kept_active as usize;
        let false_count = screening
            .included
            .iter()
            .filter(|&&k| k > 2)
            .count();
        false_fraction_sum += false_count as f64 / 997.0;
    }
    let keep_rate = all_active_kept as f64 / reps as f64;
    let false_rate = false_fraction_sum / reps as f64;
    let pass = keep_rate >= 0.95 && false_rate <= 0.02;
    report(
        "criterion 6 (sure screening)",
        pass,
        &format!(
            "active set fully retained in {:.0}% of reps (>= 95%), \
             false-inclusion fraction {:.4} (<= 0.02)",
            keep_rate * 100.0,
            false_rate
        ),
    );
    assert!(pass);
}

/// Criterion 7: brute-force oracle equivalences on randomized small
/// instances, 100 trials each (slice means, slice-mean outer products,
/// banding, Kronecker covariance, aggregation).
#[test]
fn criterion_7_oracle_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPTANCE_SEED + 6);
    let trials = 100;
    let mut max_err = 0.0f64;

    for _ in 0..trials {
        let n = rng.gen_range(6..24usize);
        let p = rng.gen_range(1..6usize);
        let h = rng.gen_range(2..=n.min(6));
        let y = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-2.0..2.0));
        let (xc, _) = center(&x.view());
        let plan = slice_by_response(&y.view(), h).unwrap();
        let means = slice_means(&xc.view(), &plan).unwrap();
        // slice means against the double loop
        for (h_idx, slice) in plan.slices().iter().enumerate() {
            for j in 0..p {
                let mut s = 0.0;
                for &row in slice {
                    s += xc[[row, j]];
                }
                s /= slice.len() as f64;
                max_err = max_err.max((means.matrix()[[h_idx, j]] - s).abs());
            }
        }
        // outer-product estimator against the double loop
        let lambda = lambda_hat(&means);
        for i in 0..p {
            for j in 0..p {
                let mut s = 0.0;
                for hh in 0..h {
                    s += means.matrix()[[hh, i]] * means.matrix()[[hh, j]];
                }
                s /= h as f64;
                max_err = max_err.max((lambda[[i, j]] - s).abs());
            }
        }
        // banding against the mask loop
        let k = rng.gen_range(0..p);
        let sig = sample_cov(&xc.view()).unwrap().sigma;
        let banded = band(&sig.view(), k).unwrap();
        for i in 0..p {
            for j in 0..p {
                let expect = if i.abs_diff(j) <= k { sig[[i, j]] } else { 0.0 };
                max_err = max_err.max((banded[[i, j]] - expect).abs());
            }
        }
        // Kronecker covariance against the index loop
        let rho: f64 = rng.gen_range(-0.7..0.7);
        let pk = 10 * rng.gen_range(1..3usize);
        let sigma = build_covariance(CovarianceFamily::BlockAr1(rho), pk).unwrap();
        let m = pk / 10;
        for a in 0..pk {
            for b in 0..pk {
                let expect = if a % m == b % m {
                    rho.powi((a / m).abs_diff(b / m) as i32)
                } else {
                    0.0
                };
                max_err = max_err.max((sigma[[a, b]] - expect).abs());
            }
        }
    }

    // aggregation against a single-pass oracle on a real run
    let table = TableSpec {
        cells: vec![TableCell {
            setting: Setting::Linear,
            n: 50,
            p: 3,
            rho: 0.0,
            method: MethodSpec::SirFull { h: Some(5), ridge: 0.0 },
        }],
        reps: 10,
        seed: ACCEPTANCE_SEED + 7,
        norm: DistanceNorm::Frobenius,
        threads: 1,
    };
    let result = run_table(&table).unwrap();
    for agg in &result.aggregates {
        let vals: Vec<f64> = result
            .records
            .iter()
            .filter(|r| r.cell_id == agg.cell_id)
            .filter_map(|r| r.metric)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        max_err = max_err.max((agg.mean - mean).abs());
    }

    let pass = max_err <= 1e-12;
    report(
        "criterion 7 (oracle equivalences)",
        pass,
        &format!("max deviation from brute-force oracles {max_err:.2e} (<= 1e-12)"),
    );
    assert!(pass);
}

/// Criterion 8: invariant battery (partition laws, spectral identities,
/// projection laws, distance invariances, scale equivariance, screening
/// monotonicity, thread-count determinism) — spot-run here; the full
/// property suite lives in the invariants test target.
#[test]
fn criterion_8_invariant_battery() {
    let mut failures: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(ACCEPTANCE_SEED + 8);

    // partition laws over random (n, H)
    for _ in 0..50 {
        let n = rng.gen_range(2..120usize);
        let h = rng.gen_range(2..=n);
        let y = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        let plan = slice_by_response(&y.view(), h).unwrap();
        let sizes = plan.sizes();
        if sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 1 {
            failures.push(format!("slice sizes unbalanced at n={n}, H={h}"));
        }
        let total: usize = sizes.iter().sum();
        if total != n {
            failures.push(format!("partition does not cover at n={n}, H={h}"));
        }
    }

    // spectral identities on generated data
    let spec = SettingSpec::new(Setting::I, 300, 12, 0.0, 5);
    let (data, _) = generate(&spec).unwrap();
    let (xc, _) = center(&data.x());
    let plan = slice_by_response(&data.y(), 10).unwrap();
    let means = slice_means(&xc.view(), &plan).unwrap();
    let lambda = lambda_hat(&means);
    let stats = var_h(&xc.view(), &plan).unwrap();
    let trace: f64 = (0..12).map(|k| lambda[[k, k]]).sum();
    if (trace - stats.iter().sum::<f64>()).abs() > 1e-10 {
        failures.push("trace identity violated".to_string());
    }
    let (vals, _) = sdr::linalg::eigen_sym(&lambda.view()).unwrap();
    if *vals.last().unwrap() < -1e-8 {
        failures.push("lambda estimator not PSD".to_string());
    }

    // projection laws
    let basis = Array2::from_shape_fn((6, 2), |_| rng.gen_range(-1.0..1.0));
    if let Ok(sub) = Subspace::new(basis) {
        let proj = projection(&sub).unwrap();
        let idem = proj.dot(&proj);
        let diff = &idem - &proj;
        if spectral_norm_sym(&diff.view()) > 1e-8 {
            failures.push("projection not idempotent".to_string());
        }
        let tr: f64 = (0..6).map(|i| proj[[i, i]]).sum();
        if (tr - 2.0).abs() > 1e-8 {
            failures.push("projection trace wrong".to_string());
        }
    }

    // distance invariances and scale equivariance through the estimator
    let x = Array2::from_shape_fn((200, 6), |_| rng.gen_range(-1.0..1.0));
    let y = x.column(0).to_owned();
    let data = Dataset::new(y.clone(), x.clone()).unwrap();
    let scaled = Dataset::new(y, &x * 3.7).unwrap();
    let cfg = sdr::sir::SirConfig::new(8, 1);
    let a = sdr::sir::sir_fit(&data, &cfg).unwrap();
    let b = sdr::sir::sir_fit(&scaled, &cfg).unwrap();
    let sa = Subspace::new(a.beta_hat).unwrap();
    let sb = Subspace::new(b.beta_hat).unwrap();
    let dist = subspace_distance(&sa, &sb, DistanceNorm::Frobenius).unwrap();
    if dist > 1e-8 {
        failures.push(format!("scale equivariance broke: {dist}"));
    }
    let d_ab = subspace_distance(&sa, &sb, DistanceNorm::Operator).unwrap();
    let d_ba = subspace_distance(&sb, &sa, DistanceNorm::Operator).unwrap();
    if d_ab.to_bits() != d_ba.to_bits() {
        failures.push("distance not symmetric".to_string());
    }

    // screening monotonicity
    let s_lo = screen(&data, 8, 0.0).unwrap();
    let s_hi = screen(&data, 8, 0.05).unwrap();
    if !s_hi.included.iter().all(|k| s_lo.included.contains(k)) {
        failures.push("screening not monotone".to_string());
    }

    // determinism across worker counts
    let sweep = |threads| PhaseSweepSpec {
        n: 50,
        h: 5,
        rho_min: 0.2,
        rho_max: 0.6,
        rho_step: 0.2,
        reps: 3,
        seed: 17,
        threads,
    };
    let r1 = run_phase_sweep(&sweep(1)).unwrap();
    let r4 = run_phase_sweep(&sweep(4)).unwrap();
    let same = r1
        .records
        .iter()
        .zip(&r4.records)
        .all(|(a, b)| a.metric.map(f64::to_bits) == b.metric.map(f64::to_bits));
    if !same {
        failures.push("records differ across thread counts".to_string());
    }

    let pass = failures.is_empty();
    report(
        "criterion 8 (invariant battery)",
        pass,
        &if pass {
            "partition, spectral, projection, distance, equivariance, monotonicity, \
             determinism checks all green"
                .to_string()
        } else {
            failures.join("; ")
        },
    );
    assert!(pass, "{failures:?}");
}

/// Criterion 9: concentration of the null screening statistic — the median
/// over 200 seeds scales with the slice-noise law H/n within a factor of
/// 1.5 when n doubles (H=20, n in {2000, 4000}).
#[test]
fn criterion_9_null_statistic_concentration() {
    let median_stat = |n: usize, base: u64| {
        let mut vals = Vec::new();
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(base + seed);
            let y = Array1::from_shape_fn(n, |_| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let x = Array2::from_shape_fn((n, 1), |_| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let (xc, _) = center(&x.view());
            let plan = slice_by_response(&y.view(), 20).unwrap();
            vals.push(var_h(&xc.view(), &plan).unwrap()[0]);
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals[vals.len() / 2]
    };
    let m_2000 = median_stat(2000, ACCEPTANCE_SEED + 9);
    let m_4000 = median_stat(4000, ACCEPTANCE_SEED + 10);
    let ratio = m_2000 / m_4000;
    let pass = (2.0 / 1.5..=2.0 * 1.5).contains(&ratio);
    report(
        "criterion 9 (null statistic concentration)",
        pass,
        &format!(
            "median at n=2000 is {m_2000:.5}, at n=4000 is {m_4000:.5}; \
             ratio {ratio:.3} within [1.33, 3.0]"
        ),
    );
    assert!(pass);
}
