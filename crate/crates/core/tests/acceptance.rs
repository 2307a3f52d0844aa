//! Acceptance suite: one line per criterion, nonzero exit status if any fails.

use std::process::ExitCode;
use std::time::Instant;

use orlicz_risk::distributions::{equal_in_law, AtomicRV, QuantileRV, Scheme};
use orlicz_risk::duality::{es_dual_eval, extend_by_condexp};
use orlicz_risk::harness::{
    check_axioms, coex_probe, counterexample_limit_heart, dilatation_probe, exp_truncation_family,
    fatou_probe, fatou_probe_quantile, order_blowup_probe, random_partition, random_population,
};
use orlicz_risk::orlicz::{luxemburg_norm, luxemburg_norm_quantile, OrliczFunction};
use orlicz_risk::partitions::{average, cond_exp, rearrangement_average, Partition};
use orlicz_risk::risk::{
    counterexample_rho_quantile, es, kusuoka_eval, var, KusuokaCandidate, KusuokaSpec, RiskMeasure,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_rv(rng: &mut ChaCha8Rng, max_n: usize) -> AtomicRV {
    let n = rng.gen_range(1..=max_n);
    let scale: f64 = rng.gen_range(0.5..20.0);
    AtomicRV::new((0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture() -> AtomicRV {
    AtomicRV::new(vec![-10.0, -5.0, 0.0, 5.0]).unwrap()
}

fn luxemburg_matches_p_norm() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for p in [1.0, 2.0, 3.0] {
        let phi = OrliczFunction::power(p).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let x = random_rv(&mut r, 256);
            let oracle = (x.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() / x.len() as f64).powf(1.0 / p);
            let got = luxemburg_norm(&x, &phi).map_err(|e| e.to_string())?;
            let rel = (got - oracle).abs() / oracle;
            worst = worst.max(rel);
            ensure(rel <= 1e-9, || format!("p={p}, n={}: {got} vs {oracle}", x.len()))?;
        }
    }
    Ok(format!("600 vectors, worst relative error {worst:.2e}"))
}

fn exponential_orlicz_norm() -> Outcome {
    // E[e^{Y/l}] - 1 = l/(l-1) - 1; solve = 1 by bisection on the closed form
    let (mut lo, mut hi) = (1.0 + 1e-9, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid / (mid - 1.0) - 1.0 > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = QuantileRV::exponential(1.0).unwrap();
    let got = luxemburg_norm_quantile(&y, &OrliczFunction::exp_minus_one()).map_err(|e| e.to_string())?;
    ensure((got - hi).abs() <= 1e-6, || format!("norm {got}, oracle {hi}"))?;
    Ok(format!("norm {got:.12} vs oracle {hi:.12}"))
}

fn es_primal_dual() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for _ in 0..500 {
        let x = random_rv(&mut r, 128);
        let n = x.len();
        for k in 1..=n {
            let alpha = k as f64 / n as f64;
            let primal = es(&x, alpha).map_err(|e| e.to_string())?;
            let dual = es_dual_eval(&x, alpha).map_err(|e| e.to_string())?.value;
            let gap = (primal - dual).abs();
            worst = worst.max(gap);
            checks += 1;
            ensure(gap <= 1e-9, || format!("n={n}, alpha={alpha}: {primal} vs {dual}"))?;
        }
    }
    Ok(format!("{checks} (X, alpha) pairs, worst gap {worst:.2e}"))
}

fn worked_fixture() -> Outcome {
    let x = fixture();
    let got = [
        var(&x, 0.25).unwrap(),
        var(&x, 0.5).unwrap(),
        es(&x, 0.5).unwrap(),
        es(&x, 0.25).unwrap(),
        es(&x, 1.0).unwrap(),
    ];
    ensure(got == [5.0, 0.0, 7.5, 10.0, 2.5], || format!("{got:?}"))?;
    Ok("VaR 0.25/0.5 = 5/0, ES 0.5/0.25/1 = 7.5/10/2.5".into())
}

fn contraction() -> Outcome {
    let mut r = rng(5);
    let phis = [OrliczFunction::power(2.0).unwrap(), OrliczFunction::exp_minus_one()];
    let mut worst = f64::NEG_INFINITY;
    for t in 0..500 {
        let x = random_rv(&mut r, 64);
        let pi = random_partition(x.len(), 8, &mut r).unwrap();
        let phi = &phis[t % 2];
        let before = luxemburg_norm(&x, phi).map_err(|e| e.to_string())?;
        let after = luxemburg_norm(&cond_exp(&x, &pi).unwrap(), phi).map_err(|e| e.to_string())?;
        worst = worst.max(after - before);
        ensure(after <= before + 1e-10, || format!("trial {t}: {after} > {before}"))?;
    }
    Ok(format!("500 trials, max increase {worst:.2e}"))
}

fn dilatation() -> Outcome {
    let mut r = rng(6);
    let mut violations = 0;
    for t in 0..500 {
        let x = random_rv(&mut r, 64);
        let rho = if t % 2 == 0 {
            RiskMeasure::es(r.gen_range(0.01..=1.0)).unwrap()
        } else {
            let a: f64 = r.gen_range(0.01..=1.0);
            let w: f64 = r.gen_range(0.0..=1.0);
            RiskMeasure::kusuoka(
                KusuokaSpec::new(vec![
                    KusuokaCandidate::new("mix", vec![a, 1.0], vec![w, 1.0 - w], 0.0).unwrap(),
                    KusuokaCandidate::dirac(r.gen_range(0.01..=1.0), 0.0).unwrap(),
                ])
                .unwrap(),
            )
        };
        let parts = [random_partition(x.len(), 8, &mut r).unwrap()];
        let report = dilatation_probe(&rho, &x, &parts, t as u64).map_err(|e| e.to_string())?;
        violations += report.violations.len();
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok("500 trials, zero violations".into())
}

/// All set partitions of `0..n` as block-label vectors (restricted growth strings).
fn set_partitions(n: usize) -> Vec<Vec<u64>> {
    fn go(i: usize, n: usize, max: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max + 1 {
            cur.push(l);
            go(i + 1, n, max.max(l), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    let mut cur = vec![0];
    go(1, n, 0, &mut cur, &mut out);
    out
}

/// All compositions of `n` into positive block sizes.
fn compositions(n: usize) -> Vec<Vec<usize>> {
    (0..1u32 << (n - 1))
        .map(|mask| {
            let mut sizes = Vec::new();
            let mut run = 1;
            for i in 0..n - 1 {
                if mask >> i & 1 == 1 {
                    sizes.push(run);
                    run = 1;
                } else {
                    run += 1;
                }
            }
            sizes.push(run);
            sizes
        })
        .collect()
}

fn check_rearrangement(x: &AtomicRV, pi: &Partition) -> Result<(), String> {
    let copies = rearrangement_average(x, pi).map_err(|e| e.to_string())?;
    for c in &copies {
        ensure(equal_in_law(x, c).unwrap(), || format!("copy not equal in law for {pi:?}"))?;
    }
    let avg = average(&copies).unwrap();
    let target = cond_exp(x, pi).unwrap();
    for (a, b) in avg.values().iter().zip(target.values()) {
        ensure((a - b).abs() <= 1e-12, || format!("average {a} vs {b} for {pi:?}"))?;
    }
    Ok(())
}

fn rearrangement_exactness() -> Outcome {
    let mut r = rng(7);
    let mut cases = 0;
    for n in 1..=12 {
        // integer values force ties, real values exercise rounding
        let xs = [
            AtomicRV::new((0..n).map(|_| r.gen_range(-3..=3) as f64).collect()).unwrap(),
            AtomicRV::new((0..n).map(|_| r.gen_range(-10.0..10.0)).collect()).unwrap(),
        ];
        let partitions: Vec<Partition> = if n <= 8 {
            set_partitions(n).iter().map(|l| Partition::from_labels(l).unwrap()).collect()
        } else {
            compositions(n).iter().map(|s| Partition::contiguous(s).unwrap()).collect()
        };
        for pi in &partitions {
            for x in &xs {
                check_rearrangement(x, pi)?;
                cases += 1;
            }
        }
    }
    Ok(format!(
        "{cases} cases: every set partition for n <= 8, every block-size composition for 9 <= n <= 12"
    ))
}

fn fatou_es_kusuoka() -> Outcome {
    let pop = random_population(70, 1, 32, 8).unwrap();
    let schemes = [Scheme::MonotoneDown, Scheme::Oscillating, Scheme::NoiseDecay];
    let spec = KusuokaSpec::new(vec![
        KusuokaCandidate::dirac(0.05, 0.0).unwrap(),
        KusuokaCandidate::new("mix", vec![0.25, 0.5, 1.0], vec![0.2, 0.3, 0.5], 0.0).unwrap(),
    ])
    .unwrap();
    let mut lines = Vec::new();
    for rho in [RiskMeasure::es(0.5).unwrap(), RiskMeasure::es(0.1).unwrap(), RiskMeasure::kusuoka(spec)] {
        let report = fatou_probe(&rho, &pop, &schemes, 40, 11).map_err(|e| e.to_string())?;
        ensure(report.trials >= 200, || format!("only {} sequences", report.trials))?;
        ensure(report.passed, || format!("{}: {:?}", rho.label(), report.violations.first()))?;
        lines.push(format!("{} ({} sequences)", rho.label(), report.trials));
    }
    Ok(format!("passed: {}", lines.join(", ")))
}

fn counterexample() -> Outcome {
    let phi = OrliczFunction::exp_minus_one();
    let y = QuantileRV::exponential(1.0).unwrap();
    let mut worst: f64 = 0.0;
    for n in [1.0_f64, 2.0, 5.0, 10.0] {
        // oracle: E[min(Y, n)] = int_0^n e^{-t} dt by composite Simpson
        let m = 20_000;
        let h = n / m as f64;
        let simpson: f64 = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * (-(i as f64) * h).exp()
            })
            .sum::<f64>()
            * h
            / 3.0;
        let expected = -(1.0 - simpson);
        let x = y.truncate_min(n).unwrap().affine(1.0, -1.0);
        let got = counterexample_rho_quantile(&x, &phi).map_err(|e| e.to_string())?.value;
        worst = worst.max((got - expected).abs());
        ensure((got - expected).abs() <= 1e-6, || format!("n={n}: {got} vs {expected}"))?;
    }
    let heart = counterexample_limit_heart(&phi).map_err(|e| e.to_string())?;
    ensure(!heart.in_heart, || "limit reported inside the heart".into())?;
    let rho = RiskMeasure::counterexample(phi);
    let (seq, limit) = exp_truncation_family(8).unwrap();
    let report = fatou_probe_quantile(&rho, &seq, &limit, 0).map_err(|e| e.to_string())?;
    let liminf = report.extra("liminf").unwrap();
    ensure(!report.passed, || "fatou probe did not report a violation".into())?;
    ensure(liminf.abs() < 1e-3 && report.extra("limit_value") == Some(f64::INFINITY), || {
        format!("liminf {liminf}, limit {:?}", report.extra("limit_value"))
    })?;
    Ok(format!(
        "rho(1 - min(Y,n)) = -e^-n within {worst:.1e}; limit outside heart; Fatou gap: liminf {liminf:.2e} vs +inf"
    ))
}

fn kusuoka_linearity() -> Outcome {
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let x = random_rv(&mut r, 64);
        let k = r.gen_range(1..=5);
        let alphas: Vec<f64> = (0..k).map(|_| r.gen_range(0.01..=1.0)).collect();
        let raw: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let head: f64 = weights[..k - 1].iter().sum();
        weights[k - 1] = 1.0 - head;
        let spec = KusuokaSpec::new(vec![KusuokaCandidate::new("m", alphas.clone(), weights.clone(), 0.0).unwrap()]).unwrap();
        let got = kusuoka_eval(&x, &spec).unwrap();
        let oracle: f64 = alphas.iter().zip(&weights).map(|(a, w)| w * es(&x, *a).unwrap()).sum();
        worst = worst.max((got - oracle).abs());
        ensure((got - oracle).abs() <= 1e-12, || format!("{got} vs {oracle}"))?;

        let a = alphas[0];
        let single = KusuokaSpec::new(vec![KusuokaCandidate::dirac(a, 0.0).unwrap()]).unwrap();
        let d = kusuoka_eval(&x, &single).unwrap();
        ensure(d == es(&x, a).unwrap(), || format!("dirac at {a}: {d}"))?;
    }
    Ok(format!("500 mixtures, worst deviation {worst:.2e}; Dirac candidates reduce to ES exactly"))
}

fn extension_convergence() -> Outcome {
    let x = QuantileRV::exponential(1.0).unwrap().negate();
    let phi = OrliczFunction::exp_minus_one();
    let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0] - 1e-10);

    let half = extend_by_condexp(&RiskMeasure::es(0.5).unwrap(), &x, &phi, 12).map_err(|e| e.to_string())?;
    let target = 1.0 + 2f64.ln();
    ensure((half.last() - target).abs() <= 1e-3, || format!("ES 0.5: {:?}", half.values))?;
    ensure(monotone(&half.values), || format!("ES 0.5 trace not monotone: {:?}", half.values))?;

    let one = extend_by_condexp(&RiskMeasure::es(1.0).unwrap(), &x, &phi, 12).map_err(|e| e.to_string())?;
    ensure((one.last() - 1.0).abs() <= 1e-4, || format!("ES 1: {:?}", one.values))?;
    ensure(monotone(&one.values), || format!("ES 1 trace not monotone: {:?}", one.values))?;
    Ok(format!(
        "ES 0.5 -> {:.6} (target {target:.6}), ES 1 -> {:.8}; traces monotone",
        half.last(),
        one.last()
    ))
}

fn coex_fixture() -> Outcome {
    let chain = [
        Partition::trivial(4).unwrap(),
        Partition::contiguous(&[2, 2]).unwrap(),
        Partition::singletons(4).unwrap(),
    ];
    let report = coex_probe(&fixture(), &AtomicRV::constant(1.0, 4).unwrap(), &chain).map_err(|e| e.to_string())?;
    ensure(report.values == [5.0, 2.5, 0.0], || format!("{:?}", report.values))?;
    Ok("(5, 2.5, 0)".into())
}

fn determinism() -> Outcome {
    let run = |threads: usize| -> Result<Vec<String>, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let pop = random_population(30, 1, 24, 13).unwrap();
            let es = RiskMeasure::es(0.3).unwrap();
            let schemes = [Scheme::MonotoneDown, Scheme::Oscillating, Scheme::NoiseDecay];
            let mut r = rng(14);
            let parts: Vec<Partition> = (0..40).map(|_| random_partition(pop[0].len(), 6, &mut r).unwrap()).collect();
            let (seq, limit) = exp_truncation_family(6).unwrap();
            let rho_c = RiskMeasure::counterexample(OrliczFunction::exp_minus_one());
            let y = QuantileRV::exponential(1.0).unwrap();
            let json = |v: serde_json::Result<String>| v.map_err(|e| e.to_string());
            Ok(vec![
                json(serde_json::to_string(&check_axioms(&es, &pop, 200, 21).map_err(|e| e.to_string())?))?,
                json(serde_json::to_string(&fatou_probe(&es, &pop, &schemes, 24, 21).map_err(|e| e.to_string())?))?,
                json(serde_json::to_string(&dilatation_probe(&es, &pop[0], &parts, 21).map_err(|e| e.to_string())?))?,
                json(serde_json::to_string(&fatou_probe_quantile(&rho_c, &seq, &limit, 21).map_err(|e| e.to_string())?))?,
                json(serde_json::to_string(&order_blowup_probe(&y, 4, 4.0, 16, 21).map_err(|e| e.to_string())?))?,
            ])
        })
    };
    let a = run(1)?;
    let b = run(1)?;
    let c = run(4)?;
    ensure(a == b, || "rerun differs".into())?;
    ensure(a == c, || "thread count changes the reports".into())?;
    Ok(format!("{} probe reports byte-identical across reruns and thread counts", a.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("Luxemburg norm equals the p-norm for power functions", luxemburg_matches_p_norm),
        ("exponential Orlicz norm of Exp(1) is 2", exponential_orlicz_norm),
        ("ES primal and greedy dual agree", es_primal_dual),
        ("worked VaR/ES fixture", worked_fixture),
        ("conditional expectation contracts the Luxemburg norm", contraction),
        ("dilatation monotonicity of ES and Kusuoka", dilatation),
        ("rearrangement averaging is exact", rearrangement_exactness),
        ("Fatou probes pass for ES and Kusuoka", fatou_es_kusuoka),
        ("counterexample measure values, heart verdict and Fatou failure", counterexample),
        ("Kusuoka mixtures are linear in ES", kusuoka_linearity),
        ("extension through conditional expectations converges", extension_convergence),
        ("conditional-expectation decay fixture", coex_fixture),
        ("probe reports are deterministic", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS [{secs:6.2}s] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL [{secs:6.2}s] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
