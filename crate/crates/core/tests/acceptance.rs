//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line per criterion and exits nonzero if any fail.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use optreset::harness::{self, EnvConfig, Stat, SweepConfig, SweepOptions};
use optreset::nn::{self, Activation, FlatParams, MlpDef};
use optreset::optim::{self, OptimHyper, OptimizerKind, OptimizerState};
use optreset::rl::{self, Transition};
use optreset::tensor::Tensor;
use optreset::train::{self, ResetKind, ResetPolicy, TrainConfig, Trainer};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_secs, || {
        format!("took {:.2}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

fn scalar(x: f64) -> FlatParams {
    FlatParams {
        values: Tensor::vector(vec![x]).unwrap(),
    }
}

fn vector(v: Vec<f64>) -> FlatParams {
    FlatParams {
        values: Tensor::vector(v).unwrap(),
    }
}

fn grad_seq(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<Tensor> {
    (0..len)
        .map(|_| Tensor::vector((0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap())
        .collect()
}

fn trajectory(
    p0: &FlatParams,
    s0: &OptimizerState,
    gs: &[Tensor],
    h: &OptimHyper,
) -> Vec<FlatParams> {
    let (mut p, mut s) = (p0.clone(), s0.clone());
    gs.iter()
        .map(|g| {
            let (np, ns, _) = optim::step(&p, g, &s, h).unwrap();
            p = np;
            s = ns;
            p.clone()
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let g: f64 = rng.gen_range(-10.0..10.0);
        let alpha: f64 = rng.gen_range(1e-4..1.0);
        let h = OptimHyper::adam(alpha);
        let fresh = optim::fresh_state(&[1]).unwrap();
        let (p, s, r) = optim::adam_step(&scalar(0.0), &Tensor::vector(vec![g]).unwrap(), &fresh, &h).unwrap();
        let m_hat = s.m.as_slice()[0] / r.debias1;
        let v_hat = s.v.as_slice()[0] / r.debias2;
        let disp = p.as_slice()[0];
        let expected = -alpha * g / (g.abs() + h.epsilon);
        for err in [
            (m_hat - g).abs(),
            (v_hat - g * g).abs() / (g * g).max(1.0),
            (disp - expected).abs(),
        ] {
            worst = worst.max(err);
        }
    }
    check(worst <= 1e-12, || format!("first-step error {worst:e}"))?;

    // Independent scalar replay of the recurrences over 1000 steps.
    let mut traj_err = 0.0f64;
    for trial in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let (b1, b2, eps, alpha) = (0.9f64, 0.999f64, 1e-8f64, 1e-3f64);
        let h = OptimHyper::adam(alpha);
        let (mut p, mut s) = (scalar(0.5), optim::fresh_state(&[1]).unwrap());
        let (mut w, mut m, mut v, mut b1i, mut b2i) = (0.5f64, 0.0f64, 0.0f64, 1.0f64, 1.0f64);
        for _ in 0..1000 {
            let g: f64 = rng.gen_range(-3.0..3.0);
            let (np, ns, _) = optim::adam_step(&p, &Tensor::vector(vec![g]).unwrap(), &s, &h).unwrap();
            p = np;
            s = ns;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            b1i *= b1;
            b2i *= b2;
            w -= alpha * (m / (1.0 - b1i)) / ((v / (1.0 - b2i)).sqrt() + eps);
            traj_err = traj_err.max((p.as_slice()[0] - w).abs());
        }
    }
    check(traj_err <= 1e-12, || format!("trajectory error {traj_err:e}"))?;
    within(started.elapsed(), 1.0)?;
    Ok(format!(
        "first-step max err {worst:.1e}, 1000-step replay max err {traj_err:.1e}, {:.3}s",
        started.elapsed().as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in OptimizerKind::ALL {
        let h = OptimHyper::adam(1e-2).with_kind(kind);
        for seq in 0..50 {
            let p0 = vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let warm_len = rng.gen_range(1..50);
            let warm = grad_seq(&mut rng, warm_len, 4);
            let dirty = {
                let (mut p, mut s) = (p0.clone(), optim::fresh_state(&[4]).unwrap());
                for g in &warm {
                    let (np, ns, _) = optim::step(&p, g, &s, &h).unwrap();
                    p = np;
                    s = ns;
                }
                s
            };
            let gs = grad_seq(&mut rng, 200, 4);
            let a = trajectory(&p0, &optim::reset_state(&dirty), &gs, &h);
            let b = trajectory(&p0, &optim::fresh_state(&[4]).unwrap(), &gs, &h);
            check(a == b, || format!("{kind} sequence {seq} diverges"))?;
        }
    }
    within(started.elapsed(), 1.0)?;
    Ok(format!(
        "4 optimizers x 50 sequences x 200 steps bit-identical, {:.3}s",
        started.elapsed().as_secs_f64()
    ))
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rms = OptimHyper::adam(1e-2).with_kind(OptimizerKind::Rmsprop);
    let adam = OptimHyper {
        beta1: 0.0,
        ..OptimHyper::adam(1e-2)
    };
    for seq in 0..50 {
        let p0 = vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let gs = grad_seq(&mut rng, 200, 4);
        let (mut p1, mut s1) = (p0.clone(), optim::fresh_state(&[4]).unwrap());
        let (mut p2, mut s2) = (p0, optim::fresh_state(&[4]).unwrap());
        for g in &gs {
            let a = optim::rmsprop_step(&p1, g, &s1, &rms).unwrap();
            let b = optim::adam_step_debias(&p2, g, &s2, &adam, false).unwrap();
            check(a.0 == b.0 && a.1.v == b.1.v, || format!("sequence {seq} diverges"))?;
            (p1, s1, p2, s2) = (a.0, a.1, b.0, b.1);
        }
    }
    within(started.elapsed(), 1.0)?;
    Ok(format!(
        "50 sequences x 200 steps bit-identical, {:.3}s",
        started.elapsed().as_secs_f64()
    ))
}

fn criterion_4() -> Outcome {
    let h = OptimHyper::adam(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut p, mut s) = (scalar(0.0), optim::fresh_state(&[1]).unwrap());
    let mut report = None;
    let mut first_below = None;
    for n in 1..=8000u64 {
        let g = Tensor::vector(vec![rng.gen_range(-1.0..1.0)]).unwrap();
        let (np, ns, r) = optim::adam_step(&p, &g, &s, &h).unwrap();
        if first_below.is_none() && (1.0 - r.debias1).abs() < 1e-6 {
            first_below = Some(n);
        }
        p = np;
        s = ns;
        report = Some(r);
    }
    let r = report.unwrap();
    let gap1 = (1.0 - r.debias1).abs();
    let gap2 = (1.0 - r.debias2).abs();
    let bound2 = h.beta2.powi(8000);
    check(gap1 < 1e-6, || format!("beta1 gap {gap1:e} after 8000 steps"))?;
    check(first_below == Some(132), || {
        format!("beta1 gap first below 1e-6 at step {first_below:?}, expected 132")
    })?;
    check((gap2 - bound2).abs() <= 1e-15, || {
        format!("beta2 gap {gap2:e} differs from beta2^8000 = {bound2:e}")
    })?;

    let spec = rl::make_garnet(8, 3, 3, 0.9, 4).unwrap();
    let config = TrainConfig {
        inner_steps: 100,
        iterations: 6,
        batch_size: 8,
        prefill_steps: 100,
        eval_episodes: 1,
        hidden: vec![8],
        reset: ResetPolicy::new(ResetKind::PerIteration),
        ..TrainConfig::default()
    };
    let expected = 1.0 - config.optimizer.beta1;
    let mut bad = Vec::new();
    let mut resets = 0;
    Trainer::new(&config, &spec)
        .map_err(|e| e.to_string())?
        .run(&mut |e| {
            if e.reset {
                resets += 1;
                if e.report.debias1 != expected {
                    bad.push((e.t, e.report.debias1));
                }
            }
        })
        .map_err(|e| e.to_string())?;
    check(bad.is_empty() && resets == 6, || {
        format!("post-reset debias1 mismatches {bad:?}, {resets} resets")
    })?;
    Ok(format!(
        "never: |1-d1| = {gap1:.1e} (< 1e-6 from step 132), |1-d2| = {gap2:.3e} = beta2^8000; per_iteration K=100: {resets}/6 first steps have d1 = 1-beta1"
    ))
}

fn random_td_instance(rng: &mut ChaCha8Rng) -> (MlpDef, FlatParams, FlatParams, Vec<Transition>) {
    let n_in = rng.gen_range(1..=6);
    let n_out = rng.gen_range(1..=4);
    let mut widths = vec![n_in];
    if rng.gen_bool(0.7) {
        widths.push(rng.gen_range(1..=8));
    }
    widths.push(n_out);
    let act = if rng.gen_bool(0.5) { Activation::Tanh } else { Activation::Relu };
    let def = MlpDef::new(widths, act, rng.gen()).unwrap();
    let n = def.param_count();
    let w = vector((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let theta = vector((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let feat = |rng: &mut ChaCha8Rng| {
        Tensor::vector((0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    let batch = (0..rng.gen_range(1..=16))
        .map(|_| {
            let s = feat(rng);
            let s2 = feat(rng);
            Transition::new(s, rng.gen_range(0..n_out), rng.gen_range(-1.0..1.0), s2, rng.gen_bool(0.2))
        })
        .collect();
    (def, w, theta, batch)
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (def, w, theta, batch) = random_td_instance(&mut rng);
        let gamma = rng.gen_range(0.0..0.99);
        let (_, g) = nn::grad_td_loss(&def, &w, &theta, &batch, gamma).map_err(|e| e.to_string())?;
        let fd = nn::finite_diff_grad(&def, &w, &theta, &batch, gamma, 1e-6).map_err(|e| e.to_string())?;
        let diff = g
            .as_slice()
            .iter()
            .zip(fd.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let rel = diff / fd.max_abs().max(1e-8);
        check(rel <= 1e-4, || format!("instance {i} ({:?}): relative error {rel:e}", def.layer_widths))?;
        worst = worst.max(rel);
    }
    within(started.elapsed(), 10.0)?;
    Ok(format!(
        "100 instances, worst relative max-norm error {worst:.1e}, {:.3}s",
        started.elapsed().as_secs_f64()
    ))
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let mut notes = Vec::new();
    for (name, spec) in [
        ("garnet-12", rl::make_garnet(12, 3, 3, 0.9, 6).unwrap()),
        ("grid-4x4", rl::make_gridworld(4, 4, (3, 3), -0.01, 0.9, 0).unwrap()),
    ] {
        let star = rl::value_iteration_oracle(&spec, 1e-12).map_err(|e| e.to_string())?;
        let config = TrainConfig {
            exact_minimization: true,
            hidden: vec![],
            iterations: 200,
            eval_episodes: 1,
            gamma: spec.gamma,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(&config, &spec).map_err(|e| e.to_string())?;
        let def = trainer.def().clone();
        let mut reached = None;
        let mut dist = f64::INFINITY;
        for t in 0..200 {
            trainer.run_inner_iteration(t, &mut |_| {}).map_err(|e| e.to_string())?;
            trainer.sync_target();
            let q = train::q_table(&def, &trainer.agent().theta, &spec).map_err(|e| e.to_string())?;
            dist = q.sup_distance(&star);
            if dist <= 1e-6 {
                reached = Some(t + 1);
                break;
            }
        }
        let Some(iters) = reached else {
            return Err(format!("{name}: sup distance {dist:e} after 200 iterations"));
        };
        notes.push(format!("{name} within 1e-6 after {iters} iterations"));
    }
    within(started.elapsed(), 5.0)?;
    Ok(format!("{}, {:.3}s", notes.join(", "), started.elapsed().as_secs_f64()))
}

fn criterion_7() -> Outcome {
    let spec = rl::make_garnet(10, 3, 3, 0.9, 7).unwrap();
    let mut counts = Vec::new();
    for k in [8usize, 16, 64] {
        let config = TrainConfig {
            inner_steps: k,
            iterations: 512 / k,
            batch_size: 8,
            prefill_steps: 100,
            eval_episodes: 1,
            hidden: vec![8],
            reset: ResetPolicy::new(ResetKind::Random),
            ..TrainConfig::default()
        };
        let mut reports = 0u64;
        let outcome = Trainer::new(&config, &spec)
            .map_err(|e| e.to_string())?
            .run(&mut |_| reports += 1)
            .map_err(|e| e.to_string())?;
        check(reports == outcome.record.optimizer_steps, || {
            format!("K={k}: {reports} reports vs {} recorded steps", outcome.record.optimizer_steps)
        })?;
        counts.push((k, reports));
    }
    check(counts.iter().all(|&(_, c)| c == 512), || format!("step counts {counts:?}"))?;
    Ok(format!("step reports per K: {counts:?}"))
}

fn criterion_8() -> Outcome {
    let started = Instant::now();
    let spec = rl::make_garnet(4, 2, 2, 0.9, 8).unwrap();
    let n = 10_000usize;
    let mut notes = Vec::new();
    for k in [4usize, 32] {
        let config = TrainConfig {
            inner_steps: k,
            iterations: n,
            batch_size: 1,
            prefill_steps: 10,
            eval_episodes: 1,
            episode_cap: 1,
            hidden: vec![],
            reset: ResetPolicy::new(ResetKind::Random),
            seed: 8,
            ..TrainConfig::default()
        };
        let record = train::run_training(&config, &spec).map_err(|e| e.to_string())?;
        let rate = record.resets.iter().map(|&r| r as f64).sum::<f64>() / n as f64;
        let half_width = 4.0 * (k as f64).sqrt() / (n as f64).sqrt();
        check((rate - 1.0).abs() <= half_width, || {
            format!("K={k}: {rate:.4} resets per iteration, allowed 1 ± {half_width:.4}")
        })?;
        notes.push(format!("K={k}: {rate:.4} (1 ± {half_width:.3})"));
    }
    Ok(format!("{}, {:.2}s", notes.join(", "), started.elapsed().as_secs_f64()))
}

fn criterion_9() -> Outcome {
    let started = Instant::now();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let config = SweepConfig {
        envs: (0..5)
            .map(|seed| EnvConfig::Garnet {
                name: None,
                n_states: 20,
                n_actions: 4,
                branching: 3,
                seed,
                features: None,
            })
            .collect(),
        optimizers: vec![OptimHyper::adam(1e-3)],
        policies: vec![ResetKind::Never, ResetKind::PerIteration],
        k_values: vec![4, 16, 64, 256],
        budget: 4096,
        seeds: (0..10).collect(),
        base: TrainConfig::default(),
        anchor_episodes: 100,
        anchor_seed: 0,
        oracle_tol: 1e-10,
        auc_normalized: true,
        fault_injection: None,
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let result = harness::run_sweep(
        &config,
        &SweepOptions {
            results_dir: dir.path().to_path_buf(),
            workers: cores.min(4),
        },
    )
    .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let table = harness::format_table(&result.summary.auc, Stat::Median);
    println!("{table}");

    let median = |policy: ResetKind, k: usize| {
        result
            .summary
            .auc
            .iter()
            .find(|r| r.stat == Stat::Median && r.policy == policy && r.k == k)
            .map(|r| r.auc)
    };
    let mut problems = Vec::new();
    if !result.failed.is_empty() {
        problems.push(format!("{} failed cells", result.failed.len()));
    }
    let mut margins = Vec::new();
    for k in [16usize, 64] {
        let (Some(reset), Some(never)) = (median(ResetKind::PerIteration, k), median(ResetKind::Never, k))
        else {
            return Err(format!("missing cells for K={k}"));
        };
        let floor = never - 0.02 * never.abs();
        margins.push(format!("K={k}: {reset:.4} vs never {never:.4}"));
        if reset < floor {
            problems.push(format!(
                "K={k}: per_iteration {reset:.4} < never {never:.4} minus 2% ({floor:.4})"
            ));
        }
    }
    let best = result
        .summary
        .auc
        .iter()
        .filter(|r| r.stat == Stat::Median)
        .max_by(|a, b| a.auc.total_cmp(&b.auc))
        .map(|r| (r.policy, r.k, r.auc))
        .ok_or("empty table")?;
    if best.0 == ResetKind::PerIteration && best.1 == 4 {
        problems.push(format!("per_iteration K=4 is the best cell ({:.4})", best.2));
    }
    // The 4-core bound is scaled when fewer cores are available.
    let limit = 300.0 * (4.0 / cores.min(4) as f64);
    if elapsed.as_secs_f64() >= limit {
        problems.push(format!("took {:.1}s on {cores} core(s), limit {limit:.0}s", elapsed.as_secs_f64()));
    }
    if !problems.is_empty() {
        return Err(format!("{}\n{table}", problems.join("; ")));
    }
    Ok(format!(
        "{}; best cell {} K={} ({:.4}); {:.1}s on {cores} core(s)",
        margins.join(", "),
        best.0,
        best.1,
        best.2,
        elapsed.as_secs_f64()
    ))
}

const CLI_CONFIG: &str = r#"
inner_steps = 8
iterations = 8
batch_size = 16
prefill_steps = 200
eval_episodes = 5
hidden = [16]

[optimizer]
kind = "adam"
alpha = 0.003

[reset]
kind = "random"

[env]
kind = "garnet"
n_states = 12
n_actions = 3
seed = 10

[sweep]
k_values = [4, 16]
budget = 64
seeds = [0, 1, 2]
policies = ["never", "per_iteration", "random"]
anchor_episodes = 50
"#;

fn cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_optreset"))
        .args(args)
        .arg("--results-dir")
        .arg(dir)
        .arg("--quiet")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("optreset {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, CLI_CONFIG).map_err(|e| e.to_string())?;
    let cfg = cfg.to_string_lossy().into_owned();
    let mut compared = 0;
    for (label, args) in [
        ("train", vec!["train", "--config", cfg.as_str()]),
        ("sweep", vec!["sweep", "--config", cfg.as_str(), "--workers", "2"]),
    ] {
        let (a, b) = (tmp.path().join(format!("{label}-a")), tmp.path().join(format!("{label}-b")));
        for d in [&a, &b] {
            cli(&args, d)?;
            cli(&["report"], d)?;
        }
        for f in [harness::RUNS_FILE, harness::ANCHORS_FILE, harness::CURVES_FILE, harness::AUC_FILE] {
            let (x, y) = (fs::read(a.join(f)), fs::read(b.join(f)));
            let (Ok(x), Ok(y)) = (x, y) else {
                return Err(format!("{label}: {f} missing"));
            };
            check(x == y, || format!("{label}: {f} differs between repeated invocations"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} output files byte-identical across repeated train and sweep invocations"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("optimizer conformance", criterion_1),
        ("reset equals fresh", criterion_2),
        ("RMSProp reduction", criterion_3),
        ("debias factors", criterion_4),
        ("gradient correctness", criterion_5),
        ("tabular fixed point", criterion_6),
        ("budget invariance", criterion_7),
        ("random reset rate", criterion_8),
        ("reset vs never K-sweep", criterion_9),
        ("determinism", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| *x == id || name.contains(x.as_str())) {
            continue;
        }
        ran += 1;
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(msg) => println!("PASS [{id:>2}] {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {msg}");
            }
        }
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
