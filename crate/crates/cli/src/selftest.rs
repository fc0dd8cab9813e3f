//! Built-in checks: quick identities and calibrations that exercise the
//! numerical core without any external inputs.

use std::time::Instant;

use mktsim::gp::{posterior, GpObservations, DEFAULT_CAP};
use mktsim::harness::{run_comparison, ExperimentConfig, PopulationCounts};
use mktsim::prb::{softmax_weights, GpEnsemble};
use mktsim::prsh::{stage_count, window_of};
use mktsim::session::MarketDynamic;
use mktsim::stats::{ks_normal_test, z_test_greater, SampleSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{runtime, CliError};

pub fn run() -> Result<(), CliError> {
    let started = Instant::now();
    let mut failures = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Gaussian-process identities at a single observation.
    {
        let mut obs = GpObservations::new(DEFAULT_CAP);
        obs.push(0.0, 1.0);
        obs.push(0.0, 3.0); // normalizes to y = (-1, +1) at s = 0
        let (m, v) = posterior(&obs, &[0.0, 1.0], 0.0).map_err(runtime)?;
        let mean_err = m[0].abs().max((m[1] - 0.0).abs());
        let prior_ok = v.iter().all(|&x| (0.0..=1.0 + 1e-9).contains(&x));
        check(
            "gp posterior identities",
            mean_err < 1e-6 && prior_ok,
            format!("mean residual {mean_err:.2e}, variance within prior: {prior_ok}"),
        );
    }

    // Stage schedule partition.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ok = true;
        for _ in 0..200 {
            let k = rng.random_range(2..=16usize);
            let v = rng.random_range(k as u32..=512);
            let w = v as u64 / k as u64;
            let total = rng.random_range(1..=2000u64);
            let stages = stage_count(total, k, w);
            for t in 0..stages * k as u64 * w {
                let (ph, i) = window_of(t, k, w);
                if ph != t / (k as u64 * w) || i != ((t % (k as u64 * w)) / w) as usize || i >= k {
                    ok = false;
                }
            }
        }
        check(
            "stage schedule partition",
            ok,
            "200 random (k, v, T)".to_string(),
        );
    }

    // Softmax retention frequency for mu = (1, 0).
    {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 10_000;
        let mut survived = 0;
        for _ in 0..trials {
            let mut ens = GpEnsemble::new(2, 0.1, DEFAULT_CAP);
            ens.force_stage_totals(vec![1.0, 0.0], vec![1, 1]);
            ens.stage_end(&mut rng);
            if ens.members.iter().any(|m| m.id == 1) {
                survived += 1;
            }
        }
        let freq = survived as f64 / trials as f64;
        let expect = 1.0 / (1.0 + 1.0f64.exp());
        check(
            "softmax retention",
            (freq - expect).abs() < 0.02,
            format!("survival {freq:.4} vs {expect:.4}"),
        );
        let w = softmax_weights(&[1.0, 0.0]);
        check(
            "softmax weights",
            (w[1] - expect).abs() < 1e-12,
            format!("w = {w:?}"),
        );
    }

    // Conservation and loss-free fills over a few mixed sessions.
    {
        let cfg = ExperimentConfig {
            duration_s: 100,
            pop: PopulationCounts {
                gvwy: 3,
                zic: 3,
                zip: 3,
                snpr: 3,
                shvr: 3,
                prsh: 3,
                prb: 3,
            },
            ..ExperimentConfig::default()
        };
        let report = run_comparison(
            MarketDynamic::trendless(),
            &cfg,
            &[cfg.prsh],
            &[cfg.prb],
            8,
            99,
        )
        .map_err(runtime)?;
        check(
            "prb ensemble invariants",
            report.prb_invariant_violations == 0,
            format!(
                "{} violations over 8 sessions",
                report.prb_invariant_violations
            ),
        );
    }

    // Z-test calibration on equal means; K-S conservativeness on normals.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 200;
        let mut z_rejects = 0;
        let mut ks_rejects = 0;
        for _ in 0..trials {
            let a: Vec<f64> = (0..100)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let b: Vec<f64> = (0..100)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            if ks_normal_test(&a).map_err(runtime)?.reject_null {
                ks_rejects += 1;
            }
            let (a, b) = (SampleSet::new("a", a), SampleSet::new("b", b));
            if z_test_greater(&a, &b).map_err(runtime)?.reject_null {
                z_rejects += 1;
            }
        }
        let z_rate = z_rejects as f64 / trials as f64;
        let ks_rate = ks_rejects as f64 / trials as f64;
        check(
            "z-test calibration",
            (0.01..=0.12).contains(&z_rate),
            format!("equal-mean rejection rate {z_rate:.3}"),
        );
        check(
            "k-s conservativeness",
            ks_rate <= 0.02,
            format!("normal-batch rejection rate {ks_rate:.4}"),
        );
    }

    println!(
        "selftest: {} in {:.1?}",
        if failures == 0 {
            "all checks passed"
        } else {
            "checks FAILED"
        },
        started.elapsed()
    );
    if failures > 0 {
        return Err(runtime(format!("{failures} selftest check(s) failed")));
    }
    Ok(())
}
