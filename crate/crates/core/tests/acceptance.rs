//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per check and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p homad-core --test acceptance -- 1 5`.

mod support {
    pub mod grid;
    pub mod reference;
}

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use homad_core::experiment::{run_experiment, ExperimentOutput, ExperimentSpec, ResultRow, SweepAxis};
use homad_core::nn::{Activation, NetworkParams};
use homad_core::power::{
    dinkelbach_allocate, dinkelbach_gap, minimum_powers, optimize_embb_power, optimize_mmtc_power,
    optimize_urllc_power, DinkelbachConfig, DualConfig, InnerSolver, PowerAllocation,
};
use homad_core::system::{
    check_constraints, evaluate, generate_channels, AllocationState, ChannelRealization, NetworkConfig, ScenarioParams,
};
use homad_core::trainer::{compute_reward, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// One URLLC and one eMBB user on their own subchannels plus `n` mMTC users,
/// at most two per subchannel.
fn small_instance(seed: u64) -> (NetworkConfig, ChannelRealization, AllocationState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..=4);
    let cfg = ScenarioParams {
        mmtc_users: n,
        cell_radius_m: 250.0,
        ..Default::default()
    }
    .build(seed)
    .unwrap();
    let ch = generate_channels(&cfg, seed, 0);
    let mut a = AllocationState::with_grants(&cfg);
    let mut load = [0usize; 2];
    for z in cfg.mmtc_users() {
        let mut k = rng.gen_range(0..2);
        if load[k] == 2 {
            k = 1 - k;
        }
        load[k] += 1;
        a.assign(z, k);
    }
    (cfg, ch, a)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (mut tested, mut worst, mut seed) = (0, f64::INFINITY, 0u64);
    let mut failures = Vec::new();
    while tested < 100 && seed < 5000 {
        seed += 1;
        let (cfg, ch, a) = small_instance(seed);
        let Some(grid) = support::grid::grid_optimum(&a.assignment_rows(), &ch, &cfg, 200) else {
            continue;
        };
        tested += 1;
        match dinkelbach_allocate(&a, &ch, &cfg, &DinkelbachConfig::default()) {
            Ok(out) => {
                let ratio = out.zeta / grid;
                worst = worst.min(ratio);
                if ratio < 0.98 {
                    failures.push(format!("seed {seed}: {ratio:.4}"));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        tested == 100 && failures.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{tested} instances, worst zeta/grid {worst:.4}, {:.1} s, failures {failures:?}",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut draws) = (0.0f64, 0);
    let n = 20_000;
    while draws < 1000 {
        let a = log_uniform(&mut rng, 1e3, 1e9);
        let gamma = log_uniform(&mut rng, 0.05, 50.0);
        let p_max = rng.gen_range(0.05..0.4);
        let zeta = log_uniform(&mut rng, 1e5, 1e9);
        let w = [3.6e5, 5.76e6][rng.gen_range(0..2)];
        let lo = gamma / a;
        if lo > p_max {
            continue;
        }
        draws += 1;
        let p = optimize_mmtc_power(a, gamma, p_max, zeta, w).unwrap();
        let f = |q: f64| w * (1.0 + a * q).log2() - zeta * q;
        let h = (p_max - lo) / n as f64;
        let best = (0..=n)
            .map(|i| lo + h * i as f64)
            .max_by(|x, y| f(*x).partial_cmp(&f(*y)).unwrap())
            .unwrap();
        // in grid steps; the concave optimum lies within one step of the best grid point
        worst = worst.max((p - best).abs() / h);
    }
    outcome(
        worst <= 1.0 + 1e-6,
        format!("{draws} draws, worst |p* - p_grid| = {worst:.3} grid steps"),
    )
}

/// Best `sum W log2(1 + A_j p_j) - zeta p_j` over a 2-D grid restricted to
/// `feasible`.
fn grid_2d(a: [f64; 2], p_max: f64, zeta: f64, w: f64, feasible: impl Fn(f64, f64) -> bool) -> Option<f64> {
    let n = 400;
    let obj = |p: f64, q: f64| w * ((1.0 + a[0] * p).log2() + (1.0 + a[1] * q).log2()) - zeta * (p + q);
    let mut best: Option<f64> = None;
    for i in 0..=n {
        for j in 0..=n - i {
            let (p, q) = (p_max * i as f64 / n as f64, p_max * j as f64 / n as f64);
            if feasible(p, q) {
                let v = obj(p, q);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    }
    best
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dual = DualConfig::default();
    let w = 3.6e5;
    let mut failures = Vec::new();
    let (mut worst_obj, mut worst_cs, mut worst_feas) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let a = [log_uniform(&mut rng, 1e4, 1e8), log_uniform(&mut rng, 1e4, 1e8)];
        let p_max = 0.2;
        let zeta = log_uniform(&mut rng, 1e5, 1e8);
        let obj = |p: &[f64]| -> f64 { (0..2).map(|j| w * (1.0 + a[j] * p[j]).log2() - zeta * p[j]).sum() };
        let (sol, grid) = if i % 2 == 0 {
            let full: f64 = (0..2).map(|j| (1.0 + a[j] * p_max / 2.0).log2()).sum();
            let r_tar = w * full * rng.gen_range(0.2..0.9);
            let rate = |p: f64, q: f64| w * ((1.0 + a[0] * p).log2() + (1.0 + a[1] * q).log2());
            let sol = optimize_embb_power(&a, r_tar, p_max, zeta, w, &dual).unwrap();
            let achieved = rate(sol.powers[0], sol.powers[1]);
            worst_feas = worst_feas.max((r_tar - achieved) / r_tar);
            (sol, grid_2d(a, p_max, zeta, w, |p, q| rate(p, q) >= r_tar))
        } else {
            let floor_max = p_max / (1.0 / a[0] + 1.0 / a[1]);
            let gamma = floor_max * rng.gen_range(0.05..0.9);
            let sol = optimize_urllc_power(&a, gamma, p_max, zeta, w, &dual).unwrap();
            for j in 0..2 {
                worst_feas = worst_feas.max((gamma / a[j] - sol.powers[j]) / (gamma / a[j]));
            }
            (
                sol,
                grid_2d(a, p_max, zeta, w, |p, q| p * a[0] >= gamma && q * a[1] >= gamma),
            )
        };
        let total: f64 = sol.powers.iter().sum();
        worst_feas = worst_feas.max((total - p_max) / p_max);
        let cs = sol.state.slackness_rate.abs().max(sol.state.slackness_power.abs());
        worst_cs = worst_cs.max(cs);
        let Some(grid) = grid else {
            failures.push(format!("instance {i}: grid found no feasible point"));
            continue;
        };
        let gap = (grid - obj(&sol.powers)) / grid.abs();
        worst_obj = worst_obj.max(gap);
        if gap > 0.01 || cs >= 1e-3 {
            failures.push(format!("instance {i}: objective gap {gap:.2e}, slackness {cs:.2e}"));
        }
    }
    let pass = failures.is_empty() && worst_feas <= 1e-4;
    outcome(
        pass,
        format!(
            "100 instances, worst feasibility {worst_feas:.2e}, slackness {worst_cs:.2e}, objective shortfall {worst_obj:.2e} {failures:?}"
        ),
    )
}

fn check_dinkelbach_run(
    out: &PowerAllocation,
    ch: &ChannelRealization,
    cfg: &NetworkConfig,
    tol: f64,
) -> Option<String> {
    let zetas: Vec<f64> = out.iterations.iter().map(|r| r.zeta).collect();
    if zetas.windows(2).any(|w| w[1] < w[0]) {
        return Some(format!("zeta decreased: {zetas:?}"));
    }
    let gap = dinkelbach_gap(&out.state, ch, cfg, out.solved_at).unwrap();
    let bound = tol * out.zeta * (out.evaluation.total_power + cfg.n_users() as f64 * cfg.noise.circuit_power_w);
    (gap.abs() > bound * (1.0 + 1e-9)).then(|| format!("terminal gap {gap:.3e} exceeds {bound:.3e}"))
}

fn criterion_4() -> Outcome {
    let mut runs = 0;
    let mut failures = Vec::new();
    for inner in [InnerSolver::Joint, InnerSolver::Sequential] {
        let dk = DinkelbachConfig {
            inner,
            ..Default::default()
        };
        for seed in 1..=200 {
            let (cfg, ch, a) = small_instance(seed);
            let Ok(out) = dinkelbach_allocate(&a, &ch, &cfg, &dk) else {
                continue;
            };
            runs += 1;
            if out.reverted {
                continue;
            }
            if let Some(f) = check_dinkelbach_run(&out, &ch, &cfg, dk.tolerance_rel) {
                failures.push(format!("{inner:?} seed {seed}: {f}"));
            }
        }
    }
    outcome(
        failures.is_empty() && runs > 100,
        format!("{runs} feasible runs {failures:?}"),
    )
}

/// Relative error between analytic and numeric derivatives, skipping ReLU
/// kinks (where the one-sided differences disagree).
fn gradient_check(net: &mut NetworkParams, rng: &mut ChaCha8Rng) -> (f64, usize, usize) {
    let input: Vec<f64> = (0..net.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let coef: Vec<f64> = (0..net.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |n: &NetworkParams| -> f64 { n.forward(&input).unwrap().iter().zip(&coef).map(|(y, c)| y * c).sum() };
    let cache = net.forward_batch(&input, 1).unwrap();
    let grads = net.backward(&cache, &coef).unwrap();
    let h = 1e-6;
    let base = loss(net);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for layer in 0..net.n_layers() {
        for bias in [false, true] {
            let len = if bias {
                net.biases(layer).len()
            } else {
                net.weights(layer).len()
            };
            for i in 0..len {
                let analytic = if bias {
                    grads.biases[layer][i]
                } else {
                    grads.weights[layer][i]
                };
                let mut probe = |d: f64| {
                    let slot = if bias {
                        &mut net.biases_mut(layer)[i]
                    } else {
                        &mut net.weights_mut(layer)[i]
                    };
                    let old = *slot;
                    *slot = old + d;
                    let v = loss(net);
                    let slot = if bias {
                        &mut net.biases_mut(layer)[i]
                    } else {
                        &mut net.weights_mut(layer)[i]
                    };
                    *slot = old;
                    v
                };
                let (up, down) = (probe(h), probe(-h));
                let (fwd, bwd) = ((up - base) / h, (base - down) / h);
                if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-3) {
                    skipped += 1;
                    continue;
                }
                let numeric = (up - down) / (2.0 * h);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
                worst = worst.max(err);
                checked += 1;
            }
        }
    }
    (worst, checked, skipped)
}

fn criterion_5() -> Outcome {
    // state 3K and output K (HOMAD) or K*L (Full-MAD) for the production network, plus odd shapes
    let shapes: [&[usize]; 5] = [
        &[6, 256, 128, 64, 2],
        &[6, 256, 128, 64, 8],
        &[3, 5, 1],
        &[7, 9, 9, 4],
        &[1, 1],
    ];
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (s, sizes) in shapes.iter().enumerate() {
            // the two production shapes alternate so each is checked on 10 seeds with each activation
            if s < 2 && (seed as usize / 2 + s) % 2 == 1 {
                continue;
            }
            for act in [Activation::Relu, Activation::Tanh] {
                if s < 2 && (seed % 2 == 0) != (act == Activation::Relu) {
                    continue;
                }
                let mut net = NetworkParams::new(sizes, act, &mut rng).unwrap();
                let (w, c, k) = gradient_check(&mut net, &mut rng);
                worst = worst.max(w);
                checked += c;
                skipped += k;
            }
        }
    }
    outcome(
        worst < 1e-4,
        format!("{checked} parameters checked, {skipped} at ReLU kinks skipped, worst relative error {worst:.2e}"),
    )
}

/// `(scheme, seed) -> final-window mean reward`, plus convergence episodes.
fn by_scheme(rows: &[ResultRow]) -> BTreeMap<Scheme, Vec<&ResultRow>> {
    let mut map: BTreeMap<Scheme, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        map.entry(r.scheme).or_default().push(r);
    }
    map
}

const ORDER: [Scheme; 4] = [
    Scheme::Homad,
    Scheme::FullMad { levels: 4 },
    Scheme::FullMad { levels: 2 },
    Scheme::FullMaql { levels: 4 },
];

fn criterion_6(out: &ExperimentOutput, elapsed: Duration) -> Outcome {
    let map = by_scheme(&out.rows);
    let mut pass = elapsed < Duration::from_secs(30 * 60) && out.rows.iter().all(|r| r.status == "ok");
    let mut detail = Vec::new();
    for pair in ORDER.windows(2) {
        let (hi, lo) = (&map[&pair[0]], &map[&pair[1]]);
        // ties count for the L=4 vs L=2 comparison only
        let strict = pair[0] != Scheme::FullMad { levels: 4 };
        let wins = hi
            .iter()
            .zip(lo.iter())
            .filter(|(a, b)| {
                if strict {
                    a.avg_ee > b.avg_ee
                } else {
                    a.avg_ee >= b.avg_ee
                }
            })
            .count();
        pass &= wins >= 2;
        detail.push(format!("{} vs {} {wins}/3", pair[0], pair[1]));
    }
    let means: Vec<String> = ORDER
        .iter()
        .map(|s| {
            format!(
                "{s} {:.3e}",
                map[s].iter().map(|r| r.avg_ee).sum::<f64>() / map[s].len() as f64
            )
        })
        .collect();
    outcome(
        pass,
        format!(
            "{}; means {}; {:.0} s",
            detail.join(", "),
            means.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn mean_convergence(rows: &[&ResultRow]) -> f64 {
    // a run that never settles counts as its full length
    rows.iter()
        .map(|r| r.convergence_episode.unwrap_or(r.episodes) as f64)
        .sum::<f64>()
        / rows.len() as f64
}

fn criterion_7(out: &ExperimentOutput) -> Outcome {
    let map = by_scheme(&out.rows);
    let homad = mean_convergence(&map[&Scheme::Homad]);
    let fullmad = mean_convergence(&map[&Scheme::FullMad { levels: 4 }]);
    let episodes = |s: Scheme| {
        map[&s]
            .iter()
            .map(|r| format!("{:?}", r.convergence_episode))
            .collect::<Vec<_>>()
            .join("/")
    };
    outcome(
        homad <= fullmad / 3.0,
        format!(
            "HOMAD {homad:.1} ({}) vs Full-MAD(L=4) {fullmad:.1} ({}) episodes",
            episodes(Scheme::Homad),
            episodes(Scheme::FullMad { levels: 4 })
        ),
    )
}

/// Mean EE per scheme along a sweep must not rise.
fn trend(spec: &ExperimentSpec) -> Outcome {
    let out = run_experiment(spec, None, homad_core::experiment::default_workers(), &|_, _| {}).unwrap();
    let mut mean: BTreeMap<(Scheme, usize), (f64, usize)> = BTreeMap::new();
    for r in &out.rows {
        let idx = spec
            .sweep
            .values
            .iter()
            .position(|v| v.to_string() == r.sweep_value)
            .unwrap();
        let e = mean.entry((r.scheme, idx)).or_default();
        e.0 += r.avg_ee;
        e.1 += 1;
    }
    let mut pass = out.rows.iter().all(|r| r.status == "ok");
    let mut detail = Vec::new();
    for s in &spec.schemes {
        let series: Vec<f64> = (0..spec.sweep.values.len())
            .map(|i| mean[&(*s, i)].0 / mean[&(*s, i)].1 as f64)
            .collect();
        pass &= series.windows(2).all(|w| w[1] <= w[0]);
        detail.push(format!(
            "{s} [{}]",
            series.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" ")
        ));
    }
    outcome(pass, detail.join("; "))
}

fn sweep_spec(axis: SweepAxis, values: Vec<usize>) -> ExperimentSpec {
    let mut spec = ExperimentSpec {
        replications: 3,
        ..Default::default()
    };
    spec.training.episodes = 30;
    spec.training.timeslots = 50;
    spec.sweep.axis = axis;
    spec.sweep.values = values;
    spec
}

fn criterion_8() -> Outcome {
    trend(&sweep_spec(SweepAxis::Requirements, vec![0, 1, 2, 3]))
}

fn criterion_9() -> Outcome {
    trend(&sweep_spec(SweepAxis::MmtcUsers, vec![2, 4, 6, 8]))
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut clean, mut mismatches, mut worst) = (0, Vec::new(), 0.0f64);
    let dk = DinkelbachConfig::default();
    for i in 0..10_000u64 {
        let cfg = ScenarioParams {
            mmtc_users: rng.gen_range(1..=6),
            ..Default::default()
        }
        .build(i)
        .unwrap();
        let ch = generate_channels(&cfg, i, rng.gen_range(0..1000));
        let mut a = AllocationState::with_grants(&cfg);
        for z in cfg.mmtc_users() {
            a.assign(z, rng.gen_range(0..cfg.n_subchannels()));
            if rng.gen_bool(0.03) {
                a.assign(z, rng.gen_range(0..cfg.n_subchannels()));
            }
        }
        if rng.gen_bool(0.02) {
            a.assign(0, 1);
        }
        // a third each: random powers, scaled least powers, optimized powers
        let powered = match i % 3 {
            1 => minimum_powers(&a, &ch, &cfg).ok().map(|mut s| {
                let scale = rng.gen_range(0.999..1.5);
                for z in 0..cfg.n_users() {
                    for k in s.subchannels_of(z) {
                        s.set_power(z, k, s.power(z, k) * scale).unwrap();
                    }
                }
                s
            }),
            2 => dinkelbach_allocate(&a, &ch, &cfg, &dk).ok().map(|o| o.state),
            _ => None,
        };
        let state = powered.unwrap_or_else(|| {
            let mut s = a.clone();
            for z in 0..cfg.n_users() {
                for k in s.subchannels_of(z) {
                    s.set_power(z, k, log_uniform(&mut rng, 1e-9, 0.4)).unwrap();
                }
            }
            s
        });
        let ev = evaluate(&state, &ch, &cfg).unwrap();
        let reward = compute_reward(&ev);
        let satisfied = check_constraints(&state, &ch, &cfg).satisfied();
        if (reward > 0.0) != satisfied {
            mismatches.push(format!("state {i}: reward {reward}, clean {satisfied}"));
            continue;
        }
        if satisfied {
            clean += 1;
            let expect = support::reference::clean_ee(&state.assignment_rows(), &state.power_rows(), &ch, &cfg);
            let err = (reward - expect).abs() / expect;
            worst = worst.max(err);
            if err > 1e-9 {
                mismatches.push(format!("state {i}: reward {reward} vs {expect}"));
            }
        }
    }
    mismatches.truncate(5);
    outcome(
        mismatches.is_empty() && clean > 1000,
        format!("10000 states, {clean} clean, worst relative error {worst:.1e} {mismatches:?}"),
    )
}

fn read_dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for sub in ["traces", "models"] {
        for e in std::fs::read_dir(dir.join(sub)).unwrap() {
            let e = e.unwrap();
            files.insert(
                format!("{sub}/{}", e.file_name().to_string_lossy()),
                std::fs::read(e.path()).unwrap(),
            );
        }
    }
    files
}

/// Re-runs seed 1 of the criterion 6 experiment and compares every artifact
/// and result row it produced.
fn criterion_11(first_dir: &Path) -> Outcome {
    let second = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::default();
    run_experiment(
        &spec,
        Some(second.path()),
        homad_core::experiment::default_workers(),
        &|_, _| {},
    )
    .unwrap();
    let (a, b) = (read_dir_files(first_dir), read_dir_files(second.path()));
    let mut compared = 0;
    let mut differing = Vec::new();
    for (name, bytes) in &b {
        compared += 1;
        if a.get(name) != Some(bytes) {
            differing.push(name.clone());
        }
    }
    let rows = |d: &Path| -> Vec<String> {
        let text = std::fs::read_to_string(d.join("results.csv")).unwrap();
        text.lines()
            .filter(|l| l.split(',').nth(4) == Some("1"))
            .map(str::to_string)
            .collect()
    };
    let same_rows = rows(first_dir) == rows(second.path());
    outcome(
        differing.is_empty() && same_rows && compared > 0,
        format!("{compared} trace/model files compared, differing {differing:?}, result rows equal {same_rows}"),
    )
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut failed = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        println!("criterion {n}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(n);
        }
    };
    let simple: [(u32, fn() -> Outcome); 6] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (10, criterion_10),
    ];
    for (n, f) in simple {
        if run(n) {
            report(n, f());
        }
    }
    if run(6) || run(7) || run(11) {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExperimentSpec {
            replications: 3,
            ..Default::default()
        };
        let start = Instant::now();
        let out = run_experiment(
            &spec,
            Some(dir.path()),
            homad_core::experiment::default_workers(),
            &|_, _| {},
        )
        .unwrap();
        let elapsed = start.elapsed();
        if run(6) {
            report(6, criterion_6(&out, elapsed));
        }
        if run(7) {
            report(7, criterion_7(&out));
        }
        if run(11) {
            report(11, criterion_11(dir.path()));
        }
    }
    if run(8) {
        report(8, criterion_8());
    }
    if run(9) {
        report(9, criterion_9());
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
