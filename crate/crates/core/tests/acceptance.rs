//! Acceptance criteria. Runs as a plain binary so every criterion prints its
//! verdict; exits non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng;
use rhs_core::active::{p3_objective, p4_objective, update_tau_aligned};
use rhs_core::ao::{p2_objective, solve, weighted_sum_rate};
use rhs_core::baselines::{quantize_phases, run_baseline};
use rhs_core::channel::dbm_to_watts;
use rhs_core::harness::{parse_config, run_sweep, summarize, write_csv_to, SummaryRow};
use rhs_core::passive::{
    assemble_quadratic, d_sums, p5_objective, p6_objective, solve_unit_modulus_qp, stack_v,
    update_epsilon, QpOptions,
};
use rhs_core::shapes::{select_shape, Grid};
use rhs_core::{
    AoConfig, BaselineKind, CVector, ChannelSet, Complex64, Coupling, Dims, EffectiveChannels,
    PhaseConfig, Precoder, ShapeCatalog, ShapeMask,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn c1_lagrangian_dual_equivalence() -> Check {
    let t = Instant::now();
    let mut r = common::rng(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = r.random_range(1..8);
        let g: Vec<f64> = (0..k)
            .map(|_| 10f64.powf(r.random_range(-4.0..4.0)))
            .collect();
        let w: Vec<f64> = (0..k).map(|_| r.random_range(0.0..3.0)).collect();
        worst = worst.max(common::rel_err(
            p2_objective(&g, &g, &w),
            weighted_sum_rate(&g, &w),
        ));
    }
    ensure(worst <= 1e-12, || format!("max relative error {worst:e}"))?;
    within(t.elapsed(), 1.0)?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn c2_active_transform_tightness() -> Check {
    let t = Instant::now();
    let mut r = common::rng(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = r.random_range(1..6);
        let n = r.random_range(k..9);
        let eff =
            EffectiveChannels::new((0..k).map(|_| common::cvec(n, &mut r)).collect()).unwrap();
        let w = common::cmat(n, k, &mut r);
        let chi: Vec<f64> = (0..k).map(|_| r.random_range(0.0..10.0)).collect();
        let weights: Vec<f64> = (0..k).map(|_| r.random_range(0.1..3.0)).collect();
        let x = eff.signals(&w);
        let gamma: Vec<f64> = x.iter().map(|v| v.norm_sqr()).collect();
        let tau = update_tau_aligned(&chi, &x, &weights);
        let lhs = p4_objective(&tau, &chi, &weights, &eff, &w);
        worst = worst.max(common::rel_err(lhs, p3_objective(&chi, &gamma, &weights)));
    }
    ensure(worst <= 1e-9, || format!("max relative error {worst:e}"))?;
    within(t.elapsed(), 1.0)?;
    Ok(format!("max relative error {worst:.1e}"))
}

struct PassiveInstance {
    ch: ChannelSet,
    v: Vec<CVector>,
    ds: Vec<f64>,
    chi: Vec<f64>,
    weights: Vec<f64>,
    s: usize,
    m: usize,
}

fn passive_instance<R: Rng>(r: &mut R, max_sm: usize) -> PassiveInstance {
    let s = r.random_range(1..=2);
    let m = r.random_range(2..=max_sm / s);
    let k = r.random_range(1..=3);
    let n_tr = r.random_range(1..=4);
    let mut ch = common::unit_channels(s, k, m, n_tr, r);
    for row in &mut ch.d_factors {
        for d in row.iter_mut() {
            *d = r.random_range(0.2..5.0);
        }
    }
    ch.noise_power = 10f64.powf(r.random_range(-2.0..1.0));
    let grid = Grid::new(1, m);
    let masks: Vec<ShapeMask> = (0..s).map(|_| common::random_mask(grid, r, "x")).collect();
    let w = Precoder::new(common::cmat(n_tr, k, r), 1.0);
    let v = stack_v(&ch, &masks, &w, r.random_range(0.3..1.0)).unwrap();
    let ds = d_sums(&ch);
    let chi = (0..k).map(|_| r.random_range(0.0..5.0)).collect();
    let weights = (0..k).map(|_| r.random_range(0.1..2.0)).collect();
    PassiveInstance {
        ch,
        v,
        ds,
        chi,
        weights,
        s,
        m,
    }
}

fn c3_passive_transform_tightness() -> Check {
    let t = Instant::now();
    let mut r = common::rng(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = passive_instance(&mut r, 32);
        let theta = PhaseConfig::random(p.s, p.m, 1.0, &mut r).stacked();
        let noise = p.ch.noise_power;
        let eps = update_epsilon(&theta, &p.v, &p.ds, &p.chi, &p.weights, noise);
        let p6 = p6_objective(&theta, &eps, &p.v, &p.ds, &p.chi, &p.weights, noise);
        let p5 = p5_objective(&theta, &p.v, &p.ds, &p.chi, &p.weights, noise);
        worst = worst.max(common::rel_err(p6, p5));
    }
    ensure(worst <= 1e-9, || format!("max relative error {worst:e}"))?;
    within(t.elapsed(), 5.0)?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn c4_gradient_check() -> Check {
    let t = Instant::now();
    let mut r = common::rng(4);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let p = passive_instance(&mut r, 32);
        let n = p.s * p.m;
        let theta0 = PhaseConfig::random(p.s, p.m, 1.0, &mut r).stacked();
        let eps = update_epsilon(&theta0, &p.v, &p.ds, &p.chi, &p.weights, p.ch.noise_power);
        let form = assemble_quadratic(&eps, &p.chi, &p.weights, &p.v).unwrap();
        // Generic (not unit-modulus) evaluation point.
        let theta = common::cvec(n, &mut r);
        let g = form.gradient(&theta);
        let mut fd = CVector::zeros(n);
        for i in 0..n {
            let mut partial = [0.0; 2];
            for (j, dir) in [Complex64::new(h, 0.0), Complex64::new(0.0, h)]
                .iter()
                .enumerate()
            {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[i] += dir;
                minus[i] -= dir;
                partial[j] = (form.objective(&plus) - form.objective(&minus)) / (2.0 * h);
            }
            fd[i] = Complex64::new(partial[0], partial[1]);
        }
        worst = worst.max((&fd - &g).norm() / g.norm());
    }
    ensure(worst < 1e-5, || format!("max relative error {worst:e}"))?;
    within(t.elapsed(), 10.0)?;
    Ok(format!("max relative error {worst:.1e} on 20 instances"))
}

fn on_grid(phases: &PhaseConfig, bits: u32) -> bool {
    let step = std::f64::consts::TAU / (1u64 << bits) as f64;
    phases.theta.iter().flatten().all(|z| {
        let idx =
            (z.arg().rem_euclid(std::f64::consts::TAU) / step).round() as u64 % (1u64 << bits);
        *z == Complex64::from_polar(1.0, idx as f64 * step)
    })
}

fn desk_channels(seed: u64, k: usize) -> ChannelSet {
    common::geometric_channels(Dims::new(2, k, 16, 4).unwrap(), seed)
}

fn desk_catalog() -> ShapeCatalog {
    common::desk_catalog(Grid::new(4, 4), (2, 2))
}

fn c5_unit_modulus() -> Check {
    let mut r = common::rng(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = passive_instance(&mut r, 32);
        let init = PhaseConfig::random(p.s, p.m, 1.0, &mut r);
        let eps = update_epsilon(
            &init.stacked(),
            &p.v,
            &p.ds,
            &p.chi,
            &p.weights,
            p.ch.noise_power,
        );
        let form = assemble_quadratic(&eps, &p.chi, &p.weights, &p.v).unwrap();
        let floors = rhs_core::passive::min_power_floors(&p.ch, &p.v, r.random_range(0.0..1.0));
        let out = solve_unit_modulus_qp(&form, &init, &floors, &QpOptions::default()).unwrap();
        worst = worst.max(out.phases.max_modulus_error());
    }
    // End-to-end: the phases returned by full runs.
    for seed in 0..10 {
        let cfg = AoConfig {
            seed,
            p_thr: dbm_to_watts(-60.0),
            ..AoConfig::new(1.0, vec![1.0, 1.0])
        };
        let sol = solve(&desk_channels(seed, 2), &desk_catalog(), &cfg).unwrap();
        worst = worst.max(sol.phases.max_modulus_error());
    }
    ensure(worst <= 1e-12, || format!("max ||theta| - 1| = {worst:e}"))?;
    for bits in 1..=8 {
        let q = quantize_phases(&PhaseConfig::random(3, 20, 1.0, &mut r), bits).unwrap();
        ensure(on_grid(&q, bits), || {
            format!("{bits}-bit phases off the grid")
        })?;
        let sol = run_baseline(
            BaselineKind::Quantized {
                bits,
                mask_index: 0,
            },
            &desk_channels(bits as u64, 2),
            &desk_catalog(),
            &AoConfig {
                seed: bits as u64,
                ..AoConfig::new(1.0, vec![1.0, 1.0])
            },
        )
        .unwrap();
        ensure(on_grid(&sol.phases, bits), || {
            format!("{bits}-bit run left the grid")
        })?;
    }
    Ok(format!(
        "max ||theta| - 1| = {worst:.1e}; quantized phases on grid for 1..=8 bits"
    ))
}

fn c6_power_budget() -> Check {
    let mut runs = 0;
    let mut binding = 0;
    let mut worst_slack = 0.0f64;
    for seed in 0..10 {
        let ch = desk_channels(seed, 2);
        for p_dbm in [0.0, 20.0, 30.0, 45.0] {
            for coupling in [Coupling::PerUser, Coupling::AllUsers] {
                let p_max = dbm_to_watts(p_dbm);
                let cfg = AoConfig {
                    seed,
                    coupling,
                    ..AoConfig::new(p_max, vec![1.0, 1.0])
                };
                let sol = solve(&ch, &desk_catalog(), &cfg).unwrap();
                let p = sol.precoder.power();
                runs += 1;
                ensure(p <= p_max * (1.0 + 1e-6), || {
                    format!("seed {seed}, {p_dbm} dBm: power {p:e} over budget {p_max:e}")
                })?;
                if sol.mu > 0.0 {
                    binding += 1;
                    let slack = (p - p_max).abs() / p_max;
                    worst_slack = worst_slack.max(slack);
                    ensure(slack <= 1e-6, || {
                        format!("seed {seed}, {p_dbm} dBm: mu > 0 but slack {slack:e}")
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "{runs} runs within budget; {binding} with mu > 0, max slack {worst_slack:.1e}"
    ))
}

/// Sum over links of the received power of the masked, phase-shifted
/// cascade, computed element by element.
fn direct_gain(ch: &ChannelSet, mask: &ShapeMask, phases: &PhaseConfig, w: &Precoder) -> f64 {
    let amp = phases.eta.sqrt();
    let mut total = 0.0;
    for s in 0..ch.num_rhs() {
        for k in 0..ch.num_users() {
            let mut y = Complex64::new(0.0, 0.0);
            for m in (0..ch.m_elems).filter(|&m| mask.is_active(m)) {
                let hw: Complex64 = (0..ch.n_tr)
                    .map(|n| ch.h_ap_rhs[s][(m, n)] * w.w[(n, k)])
                    .sum();
                y += ch.g_rhs_ue[s][k][m].conj() * phases.theta[s][m].conj() * amp * hw;
            }
            total += y.norm_sqr();
        }
    }
    total
}

fn c7_shape_selection_oracle() -> Check {
    let t = Instant::now();
    let mut r = common::rng(7);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (s, k) = (r.random_range(1..=2), r.random_range(1..=2));
        let grid = Grid::new(r.random_range(1..=4), r.random_range(1..=4));
        let n_tr = r.random_range(1..=4);
        let ch = common::unit_channels(s, k, grid.len(), n_tr, &mut r);
        let n_masks = r.random_range(1..=4);
        let cat = ShapeCatalog::new(
            (0..n_masks)
                .map(|i| common::random_mask(grid, &mut r, &format!("m{i}")))
                .collect(),
        )
        .unwrap();
        let phases = PhaseConfig::random(s, grid.len(), r.random_range(0.1..=1.0), &mut r);
        let w = Precoder::new(common::cmat(n_tr, k, &mut r), 1.0);
        let gains: Vec<f64> = cat
            .masks()
            .iter()
            .map(|m| direct_gain(&ch, m, &phases, &w))
            .collect();
        let mut best = 0;
        for i in 1..gains.len() {
            if gains[i] > gains[best] {
                best = i;
            }
        }
        if select_shape(&cat, &ch, &phases, &w).unwrap().0 != best {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches}/1000 mismatches"))?;
    within(t.elapsed(), 10.0)?;
    Ok("1000/1000 instances match".into())
}

fn c8_ao_monotonicity() -> Check {
    let mut worst_drop = 0.0f64;
    let mut slowest = Duration::ZERO;
    let mut iters = 0;
    for seed in 0..20 {
        let ch = desk_channels(seed, 2);
        let cfg = AoConfig {
            seed,
            p_thr: dbm_to_watts(-60.0),
            ..AoConfig::new(dbm_to_watts(30.0), vec![1.0, 1.0])
        };
        let t = Instant::now();
        let sol = solve(&ch, &desk_catalog(), &cfg).unwrap();
        slowest = slowest.max(t.elapsed());
        iters += sol.iterations();
        let mut prev = sol.initial_objective;
        for &v in &sol.objective_trace {
            worst_drop = worst_drop.max(prev - v);
            prev = v;
        }
    }
    ensure(worst_drop <= 1e-6, || {
        format!("objective dropped by {worst_drop:e}")
    })?;
    within(slowest, 10.0)?;
    Ok(format!(
        "largest per-iteration drop {worst_drop:.1e}; {iters} iterations; slowest solve {:.2}s",
        slowest.as_secs_f64()
    ))
}

fn c9_throughput_sweep() -> Check {
    let t = Instant::now();
    let cfg = parse_config(&common::desk_sweep_toml(50, 2024)).map_err(|e| e.to_string())?;
    ensure(
        cfg.catalog.grid().len() == 64 && cfg.catalog.len() == 2,
        || "bad setup".into(),
    )?;
    let res = run_sweep(&cfg).map_err(|e| e.to_string())?;
    ensure(res.len() == 1200, || format!("{} rows", res.len()))?;
    ensure(res.failures() == 0, || {
        format!("{} failed rows", res.failures())
    })?;
    let table = summarize(&res).map_err(|e| e.to_string())?;
    let curve = |scheme: &str| -> Vec<&SummaryRow> {
        table.iter().filter(|r| r.scheme == scheme).collect()
    };
    let order = ["adaptive", "fixed", "quantized-2bit", "zf_random"];
    for scheme in order {
        let c = curve(scheme);
        ensure(c.len() == 6, || format!("{scheme}: {} points", c.len()))?;
        ensure(c.windows(2).all(|w| w[1].mean > w[0].mean), || {
            let means: Vec<String> = c.iter().map(|r| format!("{:.4e}", r.mean)).collect();
            format!("{scheme} not strictly increasing: {}", means.join(" "))
        })?;
    }
    let ordered_points = (0..6)
        .filter(|&i| {
            order
                .windows(2)
                .all(|p| curve(p[0])[i].mean >= curve(p[1])[i].mean)
        })
        .count();
    ensure(ordered_points >= 5, || {
        format!("ordering holds at {ordered_points}/6 points")
    })?;
    within(t.elapsed(), 900.0)?;
    let at = |s: &str| curve(s)[2].mean;
    Ok(format!(
        "1200 rows, all curves increasing, ordering at {ordered_points}/6 points; at 30 dBm: {:.4} >= {:.4} >= {:.4} >= {:.4}; {:.0}s",
        at("adaptive"),
        at("fixed"),
        at("quantized-2bit"),
        at("zf_random"),
        t.elapsed().as_secs_f64()
    ))
}

fn c10_zf_crosstalk() -> Check {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..100 {
        let k = 1 + seed as usize % 4;
        let ch = desk_channels(1000 + seed, k);
        let cfg = AoConfig {
            seed,
            ..AoConfig::new(1.0, vec![1.0; k])
        };
        let sol = run_baseline(
            BaselineKind::ZfRandom { mask_index: 0 },
            &ch,
            &desk_catalog(),
            &cfg,
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        let masks = desk_catalog().assignment(&sol.mask_indices);
        let eff = EffectiveChannels::from_channels(&ch, &masks, &sol.phases).unwrap();
        for j in 0..k {
            let direct = eff.b(j).dotc(&sol.precoder.w.column(j)).norm();
            for i in (0..k).filter(|&i| i != j) {
                worst = worst.max(eff.b(j).dotc(&sol.precoder.w.column(i)).norm() / direct);
            }
        }
        checked += 1;
    }
    ensure(worst <= 1e-9, || format!("max crosstalk ratio {worst:e}"))?;
    Ok(format!(
        "{checked} instances, max crosstalk ratio {worst:.1e}"
    ))
}

fn c11_determinism() -> Check {
    let cfg = parse_config(&common::desk_sweep_toml(4, 77)).map_err(|e| e.to_string())?;
    let run = || -> Result<Vec<u8>, String> {
        let mut buf = Vec::new();
        write_csv_to(&run_sweep(&cfg).map_err(|e| e.to_string())?, &mut buf)
            .map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let (a, b) = (run()?, run()?);
    ensure(a == b, || "CSV output differs between runs".into())?;
    Ok(format!("two runs, {} identical bytes", a.len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        (
            "Lagrangian dual transform equals the sum rate at chi = gamma",
            c1_lagrangian_dual_equivalence,
        ),
        (
            "active quadratic transform is tight at optimal tau",
            c2_active_transform_tightness,
        ),
        (
            "passive quadratic transform is tight at optimal epsilon",
            c3_passive_transform_tightness,
        ),
        (
            "passive objective gradient matches finite differences",
            c4_gradient_check,
        ),
        ("unit modulus and exact phase quantization", c5_unit_modulus),
        ("power budget and complementary slackness", c6_power_budget),
        (
            "shape selection matches exhaustive evaluation",
            c7_shape_selection_oracle,
        ),
        ("outer objective is monotone", c8_ao_monotonicity),
        (
            "throughput sweep: increasing curves and scheme ordering",
            c9_throughput_sweep,
        ),
        ("zero-forcing removes inter-user terms", c10_zf_crosstalk),
        ("sweep CSV is byte-identical across runs", c11_determinism),
    ];
    // Keep panics from interleaving backtraces with the report.
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!(
                "criterion {:>2} PASS  {name} ({detail}) [{secs:.2}s]",
                i + 1
            ),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
