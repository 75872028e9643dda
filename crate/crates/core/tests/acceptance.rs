//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). Every criterion is evaluated
//! and reported; with `UESA_ACCEPTANCE_STRICT=1` any failure also makes the
//! process exit nonzero.

use std::io::Write;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uesa::allocation::{uesa_es, uesa_res, uesa_res_et};
use uesa::channel::{generate_channel, ChannelMatrix, ChannelParams};
use uesa::combiner::{factorized_combining, Allocation, CombiningResult, PhaseSet};
use uesa::harness::{run_cell_trials, Algorithm, ExperimentConfig, TrialOutcome};
use uesa::metrics::{power_consumption, upper_bound_ub, upper_bound_ub1, Architecture, PowerModel};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// ---------------------------------------------------------------------------
// independent oracles

/// `log2 det(I + rho H^H W W^H H)` by dense LU on the materialized combiner.
fn oracle_rate(h: &ChannelMatrix, res: &CombiningResult, rho: f64) -> f64 {
    let w = res.combiner.to_matrix();
    let e = w.adjoint() * h.entries();
    let k = h.num_users();
    let a = DMatrix::<Complex64>::identity(k, k) + e.adjoint() * e * Complex64::from(rho);
    a.lu().determinant().re.log2()
}

/// `tr(Q_n^{-1})` for `n = 0..N`, inverting `Q_n = I + rho sum_{i<=n} g_i g_i^H`
/// directly. Goes through pivoted LU: nalgebra's closed-form 4x4 inverse
/// loses ~1e-9 here once `rho |g|^2` reaches the thousands.
fn oracle_traces(h: &ChannelMatrix, res: &CombiningResult, rho: f64) -> Vec<f64> {
    let w = res.combiner.to_matrix();
    let k = h.num_users();
    let mut q = DMatrix::<Complex64>::identity(k, k);
    let mut out = vec![k as f64];
    for n in 0..w.ncols() {
        let g = h.entries().adjoint() * w.column(n);
        q += &g * g.adjoint() * Complex64::from(rho);
        out.push(q.clone().lu().try_inverse().expect("Q is positive definite").trace().re);
    }
    out
}

fn random_allocation(rng: &mut ChaCha8Rng, nr: usize, n: usize) -> Allocation {
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < n - 1 {
        let c = rng.random_range(1..nr);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    cuts.push(nr);
    let mut prev = 0;
    let parts = cuts
        .into_iter()
        .map(|c| {
            let p = c - prev;
            prev = c;
            p
        })
        .collect();
    Allocation::new(parts).unwrap()
}

struct PropertyRun {
    lemma1_worst: f64,
    lemma1_ok: usize,
    sandwich_worst: f64,
    sandwich_ok: usize,
    jensen_worst: f64,
    trace_mono_ok: usize,
    trace_oracle_worst: f64,
    max_step: f64,
    final_bound_ok: usize,
    final_bound_cases: usize,
    instances: usize,
    elapsed: Duration,
}

/// The 200 seeded instances shared by criteria 2-4.
fn property_instances() -> PropertyRun {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ps = PhaseSet::default();
    let mut run = PropertyRun {
        lemma1_worst: 0.0,
        lemma1_ok: 0,
        sandwich_worst: 0.0,
        sandwich_ok: 0,
        jensen_worst: 0.0,
        trace_mono_ok: 0,
        trace_oracle_worst: 0.0,
        max_step: f64::NEG_INFINITY,
        final_bound_ok: 0,
        final_bound_cases: 0,
        instances: 200,
        elapsed: Duration::ZERO,
    };
    for i in 0..run.instances {
        let k = [2, 4][i % 2];
        let nr = [8, 16, 32][(i / 2) % 3];
        let n = rng.random_range(1..=k);
        let h = generate_channel(&ChannelParams::new(nr, k), &mut rng).unwrap();
        let alloc = random_allocation(&mut rng, nr, n);
        let rho = 10f64.powf(rng.random_range(-10.0..20.0) / 10.0);
        let quantize = (i / 6) % 2 == 0;
        let res = factorized_combining(&h, &alloc, rho, &ps, quantize).unwrap();

        let rate = oracle_rate(&h, &res, rho);
        let gap = (res.total_rate - rate).abs();
        run.lemma1_worst = run.lemma1_worst.max(gap);
        run.lemma1_ok += usize::from(gap <= 1e-9);

        let ub1 = upper_bound_ub1(&res.mu1, rho);
        let ub = upper_bound_ub(&res.mu1, rho);
        let v = (rate - ub1).max(ub1 - ub).max(0.0);
        run.sandwich_worst = run.sandwich_worst.max(v);
        run.sandwich_ok += usize::from(rate <= ub1 + 1e-9 && ub1 <= ub + 1e-9);

        let mean_mu = res.mu1.iter().sum::<f64>() / n as f64;
        let equal = vec![mean_mu; n];
        let j = (upper_bound_ub1(&equal, rho) - upper_bound_ub(&equal, rho)).abs();
        run.jensen_worst = run.jensen_worst.max(j);

        let traces = oracle_traces(&h, &res, rho);
        for (a, b) in traces.iter().zip(&res.qinv_traces) {
            run.trace_oracle_worst = run.trace_oracle_worst.max((a - b).abs());
        }
        run.trace_mono_ok += usize::from(traces.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        for w in traces.windows(2) {
            run.max_step = run.max_step.max(w[0] - w[1]);
        }
        // With a single sub-array Q_0 = I and the bound is K = K, not strict.
        if n >= 2 {
            run.final_bound_cases += 1;
            run.final_bound_ok += usize::from(traces[n - 1] > k as f64 - (n as f64 - 1.0));
        }
    }
    run.elapsed = start.elapsed();
    run
}

// ---------------------------------------------------------------------------
// criteria

fn c1_enumeration() -> Verdict {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_uesa"))
        .args(["enumerate", "--nr", "32,64", "--n", "4"])
        .output()
        .expect("run uesa enumerate");
    let elapsed = start.elapsed();
    let text = String::from_utf8_lossy(&out.stdout);
    let field = |line: &str, key: &str| -> Option<u64> {
        line.split_whitespace()
            .find_map(|t| t.strip_prefix(key))
            .and_then(|v| v.parse().ok())
    };
    let l32 = text.lines().find(|l| l.starts_with("nr=32 ")).unwrap_or("");
    let l64 = text.lines().find(|l| l.starts_with("nr=64 ")).unwrap_or("");
    let s32 = field(l32, "|S|=");
    let sr32 = field(l32, "|S_r|=");
    let s64 = field(l64, "|S|=");
    let sr64 = field(l64, "|S_r|=");

    // Filter over all compositions of 64 into 4 parts.
    let mut comps = 0u64;
    let mut nondecreasing = 0u64;
    for a in 1..=61 {
        for b in 1..=(62 - a) {
            for c in 1..=(63 - a - b) {
                let d = 64 - a - b - c;
                comps += 1;
                if a <= b && b <= c && c <= d {
                    nondecreasing += 1;
                }
            }
        }
    }
    let pass = out.status.success()
        && s32 == Some(4495)
        && sr32 == Some(249)
        && s64 == Some(39711)
        && comps == 39711
        && sr64 == Some(nondecreasing)
        && nondecreasing == 1906
        && elapsed < Duration::from_secs(1);
    verdict(
        pass,
        format!(
            "|S|(32,4)={s32:?} |S_r|(32,4)={sr32:?} |S|(64,4)={s64:?} |S_r|(64,4)={sr64:?} (filter oracle {nondecreasing}); {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_lemma1(run: &PropertyRun) -> Verdict {
    verdict(
        run.lemma1_ok == run.instances && run.elapsed < Duration::from_secs(30),
        format!(
            "{}/{} within 1e-9, max |factorized - logdet| = {:.2e}; {:.2}s",
            run.lemma1_ok,
            run.instances,
            run.lemma1_worst,
            run.elapsed.as_secs_f64()
        ),
    )
}

fn c3_sandwich(run: &PropertyRun) -> Verdict {
    verdict(
        run.sandwich_ok == run.instances && run.jensen_worst <= 1e-12,
        format!(
            "{}/{} sandwiched, max violation {:.2e}; equal-mu ub1 vs ub max gap {:.2e}",
            run.sandwich_ok, run.instances, run.sandwich_worst, run.jensen_worst
        ),
    )
}

fn c4_traces(run: &PropertyRun) -> Verdict {
    verdict(
        run.trace_mono_ok == run.instances
            && run.max_step < 1.0
            && run.final_bound_ok == run.final_bound_cases
            && run.trace_oracle_worst <= 1e-9,
        format!(
            "{}/{} non-increasing, max step {:.4} (< 1), tr(Q_(N-1)^-1) > K-(N-1) in {}/{} instances with N >= 2, recursion vs direct inverse {:.2e}",
            run.trace_mono_ok,
            run.instances,
            run.max_step,
            run.final_bound_ok,
            run.final_bound_cases,
            run.trace_oracle_worst
        ),
    )
}

fn cell(
    algorithm: Algorithm,
    nr: usize,
    snr_db: f64,
    trials: usize,
    extra: impl FnOnce(&mut ExperimentConfig),
) -> Vec<TrialOutcome> {
    let mut cfg = ExperimentConfig {
        nr: vec![nr],
        n: vec![4],
        k: Some(4),
        snr_db: vec![snr_db],
        trials,
        seed: 20_190_101,
        algorithm,
        heavy: true,
        ..Default::default()
    };
    extra(&mut cfg);
    cfg.validate().unwrap();
    run_cell_trials(&cfg, 0, nr, 4, snr_db).unwrap()
}

fn mean_rate(t: &[TrialOutcome]) -> f64 {
    t.iter().map(|x| x.rate).sum::<f64>() / t.len() as f64
}

fn mean_candidates(t: &[TrialOutcome]) -> f64 {
    t.iter().map(|x| x.candidates_examined as f64).sum::<f64>() / t.len() as f64
}

fn c5_rate_improvement() -> Verdict {
    let start = Instant::now();
    let trials = 500;
    let esa = mean_rate(&cell(Algorithm::Esa, 32, 0.0, trials, |_| {}));
    let es = mean_rate(&cell(Algorithm::UesaEs, 32, 0.0, trials, |_| {}));
    let res = mean_rate(&cell(Algorithm::UesaRes, 32, 0.0, trials, |_| {}));
    let et = mean_rate(&cell(Algorithm::UesaResEt, 32, 0.0, trials, |c| c.count_max = Some(30)));
    let fast = mean_rate(&cell(Algorithm::FastUesa, 32, 0.0, trials, |c| {
        c.fast_iters = Some(20);
        c.gamma = Some(2.0);
    }));
    let gain = es / esa;
    let (r_res, r_et, r_fast) = (res / es, et / es, fast / es);
    let elapsed = start.elapsed();
    let pass = (1.06..=1.14).contains(&gain)
        && r_res >= 0.97
        && r_et >= 0.97
        && r_fast >= 0.97
        && elapsed < Duration::from_secs(1800);
    verdict(
        pass,
        format!(
            "{trials} trials: ES/ESA = {gain:.4} (need [1.06, 1.14]); RES/ES = {r_res:.4}, RES-ET/ES = {r_et:.4}, Fast/ES = {r_fast:.4} (each need >= 0.97); {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c6_dominance() -> Verdict {
    let ps = PhaseSet::default();
    let rho = 1.0;
    let mut ok = 0;
    let mut total = 0;
    let mut worst = 0.0f64;
    for (nr, count_max) in [(16, 10), (32, 30)] {
        let mut rng = ChaCha8Rng::seed_from_u64(6 + nr as u64);
        for _ in 0..100 {
            let h = generate_channel(&ChannelParams::new(nr, 4), &mut rng).unwrap();
            let es = uesa_es(&h, 4, rho, &ps).unwrap();
            let res = uesa_res(&h, 4, rho, &ps).unwrap();
            let et = uesa_res_et(&h, 4, rho, &ps, count_max).unwrap();
            assert_eq!(es.channel, res.channel);
            assert_eq!(res.channel, et.channel);
            total += 1;
            worst = worst.max(res.rate - es.rate).max(et.rate - res.rate);
            ok += usize::from(es.rate >= res.rate && res.rate >= et.rate);
        }
    }
    verdict(
        ok == total,
        format!("ES >= RES >= RES-ET in {ok}/{total} realizations at (16,4) and (32,4); worst inversion {worst:.2e}"),
    )
}

fn c7_power() -> Verdict {
    let m = PowerModel::default();
    let esa = power_consumption(32, 4, &m, Architecture::Esa);
    let uesa = power_consumption(32, 4, &m, Architecture::Uesa);
    let diffs_ok = (8..=64).all(|nr| {
        power_consumption(nr, 4, &m, Architecture::Uesa) - power_consumption(nr, 4, &m, Architecture::Esa)
            == 4.0 * nr as f64
    });
    verdict(
        esa == 2560.0 && uesa == 2688.0 && diffs_ok,
        format!(
            "P_ESA(32,4) = {esa} mW, P_UESA(32,4) = {uesa} mW, P_UESA - P_ESA = 4 N_r for N_r in 8..=64: {diffs_ok}"
        ),
    )
}

fn mean_mu(t: &[TrialOutcome]) -> Vec<f64> {
    let n = t[0].mu1.len();
    (0..n)
        .map(|i| t.iter().map(|x| x.mu1[i]).sum::<f64>() / t.len() as f64)
        .collect()
}

fn spread(mu: &[f64]) -> f64 {
    let max = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = mu.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn c8_eigen_trend() -> Verdict {
    let start = Instant::now();
    let trials = 500;
    let esa = mean_mu(&cell(Algorithm::Esa, 64, 12.0, trials, |_| {}));
    let es = mean_mu(&cell(Algorithm::UesaEs, 64, 12.0, trials, |_| {}));
    let decreasing = esa.windows(2).all(|w| w[1] < w[0]);
    let (s_esa, s_es) = (spread(&esa), spread(&es));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ");
    verdict(
        decreasing && s_es < s_esa,
        format!(
            "{trials} trials at (64,4), 12 dB: ESA mean mu1 = [{}] ({}), spread {s_esa:.3}; UESA-ES mean mu1 = [{}], spread {s_es:.3}; {:.1}s",
            fmt(&esa),
            if decreasing { "strictly decreasing" } else { "NOT strictly decreasing" },
            fmt(&es),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn c9_early_termination() -> Verdict {
    let trials = 500;
    let et = mean_candidates(&cell(Algorithm::UesaResEt, 32, 12.0, trials, |c| {
        c.count_max = Some(30)
    }));
    let fast = mean_candidates(&cell(Algorithm::FastUesa, 32, 12.0, trials, |c| {
        c.fast_iters = Some(20);
        c.gamma = Some(2.0);
    }));
    verdict(
        (50.0..=95.0).contains(&et) && (20.0..=36.0).contains(&fast),
        format!(
            "{trials} trials at (32,4), 12 dB: RES-ET(count_max=30) mean {et:.2} (need [50, 95]); Fast-UESA(I=20, gamma=2) mean {fast:.2} (need [20, 36])"
        ),
    )
}

fn main() -> ExitCode {
    let strict = std::env::var("UESA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut results: Vec<(usize, bool)> = Vec::new();
    let report = |results: &mut Vec<(usize, bool)>, id: usize, name: &str, v: Verdict| {
        println!("{} C{id:<2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        std::io::stdout().flush().ok();
        results.push((id, v.pass));
    };

    report(&mut results, 1, "enumeration exactness", c1_enumeration());
    let run = property_instances();
    report(&mut results, 2, "factorized rate equals log-det rate", c2_lemma1(&run));
    report(&mut results, 3, "sandwich bounds", c3_sandwich(&run));
    report(&mut results, 4, "trace monotonicity", c4_traces(&run));
    report(&mut results, 5, "rate improvement over ESA", c5_rate_improvement());
    report(&mut results, 6, "search dominance ordering", c6_dominance());
    report(&mut results, 7, "power model exactness", c7_power());
    report(&mut results, 8, "eigenvalue trend", c8_eigen_trend());
    report(&mut results, 9, "early-termination economy", c9_early_termination());

    let substitute = [2, 3, 4, 5, 8, 9];
    let sub_ok = results
        .iter()
        .filter(|(id, _)| substitute.contains(id))
        .all(|(_, p)| *p);
    report(
        &mut results,
        10,
        "curve substitute (criteria 2-4, 5, 8, 9)",
        verdict(
            sub_ok,
            format!(
                "full-scale curves not reproduced; substitute suite {}",
                if sub_ok { "green" } else { "has red members" }
            ),
        ),
    );

    let passed = results.iter().filter(|r| r.1).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if strict && passed != results.len() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
