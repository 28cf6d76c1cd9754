//! Acceptance suite: one PASS/FAIL line per headline criterion.
//!
//! Runs as a plain binary (`harness = false`) because the campaigns are
//! long and share results. The process exits 0 even when a criterion
//! fails so that `cargo test` reports the suite's findings instead of
//! hiding them behind a panic; set `VLF_ACCEPTANCE_STRICT=1` to turn any
//! FAIL into a nonzero exit.

use std::time::Instant;

use rand::Rng;
use vlf_cli::config::{ExperimentConfig, ModeConfig};
use vlf_cli::presets::preset;
use vlf_cli::simulate::{simulate, SimRow};
use vlf_cli::{optimize, RunOptions};
use vlf_core::bounds::{m_transmission_bound, mc_bound, repeat_after_n_bound, wald_bound};
use vlf_core::channel::ChannelSpec;
use vlf_core::lenopt::{
    estimate_retrans_grid, exhaustive_lengths, fit_logpoly, objective_latency, optimize_lengths, GridOptions,
    LengthConstraints, RetransmissionModel,
};
use vlf_core::rng::stream_rng;
use vlf_core::rova::{brute_force_map, rova_tailbiting, rova_terminated};
use vlf_core::trellis::{distance_spectrum, GeneratorSet, TerminationMode, Trellis};

const EPS: f64 = 1e-3;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { name, pass, detail }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Runs one system from a preset with the code list narrowed to
/// `(states, mode)` and `k` fixed.
fn campaign(
    name: &str,
    states: usize,
    mode: ModeConfig,
    k: usize,
    min_errors: Option<u64>,
    max_trials: u64,
) -> SimRow {
    let mut cfg = preset(name).unwrap();
    cfg.codes.retain(|c| c.states == Some(states) && c.mode == mode);
    assert_eq!(cfg.codes.len(), 1, "{name} has no {states}-state {mode:?} code");
    cfg.k = vlf_cli::config::KList::List(vec![k]);
    cfg.campaign.min_errors = min_errors;
    cfg.campaign.max_trials = max_trials;
    let dir = tempfile::tempdir().unwrap();
    let began = Instant::now();
    let out = simulate(&cfg, &RunOptions::new(dir.path())).unwrap();
    let row = out.rows.into_iter().next().unwrap();
    eprintln!(
        "  [{name} {states} {mode:?} k={k}] S={} errors={} lambda={:.3} Rt={:.4} P_UE={:.3e} ({:.0}s)",
        row.trials,
        row.errors,
        row.lambda,
        row.throughput,
        row.pue,
        began.elapsed().as_secs_f64()
    );
    row
}

fn code_table() -> Verdict {
    let expected = [(GeneratorSet::nu6(), 15, 3), (GeneratorSet::nu8(), 18, 1), (GeneratorSet::nu10(), 22, 7)];
    let began = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (g, d, a) in expected {
        let s = distance_spectrum(&g, 60);
        ok &= s.exact && s.d_free == d && s.multiplicity == a;
        parts.push(format!("{} states: d_free {} A {} exact {}", g.num_states(), s.d_free, s.multiplicity, s.exact));
    }
    verdict("code-table", ok, format!("{} ({:.2}s)", parts.join("; "), began.elapsed().as_secs_f64()))
}

fn oracle_equivalence() -> Verdict {
    let codes = [
        GeneratorSet::from_octal(2, ["7", "5", "7"]).unwrap(),
        GeneratorSet::from_octal(3, ["13", "15", "17"]).unwrap(),
        GeneratorSet::from_octal(4, ["25", "33", "37"]).unwrap(),
    ];
    let trellises: Vec<Trellis> = codes.iter().map(|&g| Trellis::new(g)).collect();
    let channels = [ChannelSpec::bsc(0.1).unwrap(), ChannelSpec::biawgn_db(1.0).unwrap()];
    let mut rng = stream_rng("acceptance-oracle", 0, 0);
    let began = Instant::now();
    let instances = 10_000;
    let mut msg_mismatch = 0;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let t = &trellises[i % 3];
        let channel = channels[(i / 3) % 2];
        let mode = if i % 4 < 2 { TerminationMode::Terminated } else { TerminationMode::TailBiting };
        let k = rng.random_range(t.memory().max(1)..=10);
        let msg: Vec<u8> = (0..k).map(|_| rng.random_range(0..2)).collect();
        let cw = t.generators().encode(&msg, mode).unwrap();
        // Some positions stay unreceived, as in a punctured block.
        let llrs: Vec<f64> = cw
            .iter()
            .map(|&b| if rng.random_bool(0.2) { 0.0 } else { channel.sample_llr(b, &mut rng) })
            .collect();
        let fast = match mode {
            TerminationMode::Terminated => rova_terminated(t, &llrs),
            TerminationMode::TailBiting => rova_tailbiting(t, &llrs),
        }
        .unwrap();
        let oracle = brute_force_map(t, &llrs, mode).unwrap();
        if fast.msg_hat != oracle.msg_hat {
            msg_mismatch += 1;
        }
        let rel = (fast.posterior - oracle.posterior).abs() / oracle.posterior;
        worst = worst.max(rel);
    }
    verdict(
        "oracle-equivalence",
        msg_mismatch == 0 && worst <= 1e-9,
        format!(
            "{instances} instances, {msg_mismatch} message mismatches, worst posterior rel diff {worst:.2e} ({:.1}s)",
            began.elapsed().as_secs_f64()
        ),
    )
}

fn bounds_check() -> Verdict {
    let began = Instant::now();
    let walks = 20_000;
    let mut ok = true;
    let mut notes = Vec::new();

    // Closed form by hand: l = (log2((2^k - 1)/eps) + B) / C.
    for (spec, k) in [(ChannelSpec::bsc(0.05).unwrap(), 32usize), (ChannelSpec::biawgn_db(2.0).unwrap(), 64)] {
        let hand = (((2f64).powi(k as i32) - 1.0) / EPS).log2();
        let hand = (hand + spec.info_density_bound()) / spec.capacity();
        let w = wald_bound(&spec, k, EPS).unwrap();
        let good = rel_close(w.ell, hand, 1e-6);
        ok &= good;
        notes.push(format!("wald {} k={k}: {:.4} vs hand {:.4}", spec.name(), w.ell, hand));
    }

    for spec in [ChannelSpec::bsc(0.05).unwrap(), ChannelSpec::biawgn_db(2.0).unwrap()] {
        let c = spec.capacity();
        let mut worst_z = f64::NEG_INFINITY;
        for k in [8usize, 16, 32, 64, 128] {
            let w = wald_bound(&spec, k, EPS).unwrap();
            let m = mc_bound(&spec, k, EPS, walks, 11).unwrap();
            worst_z = worst_z.max((m.ell - w.ell) / m.ell_stderr.max(1e-12));
            ok &= m.ell <= w.ell + 3.0 * m.ell_stderr;
            ok &= w.rate <= c && m.rate <= c;
            let n = 3 * k;
            let rep = repeat_after_n_bound(&spec, k, EPS, n, walks, 12).unwrap();
            let unit = m_transmission_bound(&spec, k, EPS, &vec![1; n], walks, 12).unwrap();
            let se = rep.ell_stderr.hypot(unit.ell_stderr);
            ok &= (rep.ell - unit.ell).abs() <= 3.0 * se;
            ok &= rep.rate <= c && unit.rate <= c;
        }
        notes.push(format!("{}: max (MC - Wald)/se = {worst_z:.1}", spec.name()));
    }
    notes.push(format!("{:.1}s", began.elapsed().as_secs_f64()));
    verdict("bounds", ok, notes.join("; "))
}

fn optimizer_check() -> Verdict {
    let began = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    let synthetic: [(&str, Box<dyn Fn(usize) -> f64>); 3] = [
        ("exponential", Box::new(|n| (-0.3 * (n as f64 - 18.0)).exp().min(1.0))),
        ("logistic", Box::new(|n| 1.0 / (1.0 + (0.45 * (n as f64 - 26.0)).exp()))),
        ("two-slope", Box::new(|n| if n < 24 { 1.0 } else { 0.5 * (-0.12 * (n as f64 - 24.0)).exp() })),
    ];
    let k = 16;
    for (name, f) in &synthetic {
        let model = RetransmissionModel::from_probs(k, (1..=3 * k).map(f).collect()).unwrap();
        for m in 1..=3 {
            let opt = optimize_lengths(&model, m, 20, 3, LengthConstraints::default()).unwrap();
            let ex = exhaustive_lengths(&model, m, LengthConstraints::default()).unwrap();
            if opt.increments != ex.increments {
                ok = false;
                notes.push(format!("{name} m={m}: {:?} vs exhaustive {:?}", opt.increments, ex.increments));
            }
        }
    }
    notes.push("synthetic m=1..3 compared".into());

    let grid = estimate_retrans_grid(
        GeneratorSet::nu6(),
        16,
        ChannelSpec::biawgn_db(2.0).unwrap(),
        EPS,
        1,
        1,
        GridOptions::default(),
    )
    .unwrap();
    let model = fit_logpoly(16, 48, &grid, 3).unwrap();
    let opt = optimize_lengths(&model, 5, 100, 1, LengthConstraints::default()).unwrap();
    let reference = objective_latency(&model, &[30, 3, 3, 5, 7]).unwrap();
    ok &= opt.lambda <= 1.02 * reference;
    notes.push(format!(
        "k=16 64-state: {:?} lambda {:.3} vs {{30,3,3,5,7}} {:.3} ({:.1}s)",
        opt.increments,
        opt.lambda,
        reference,
        began.elapsed().as_secs_f64()
    ));
    verdict("optimizer", ok, notes.join("; "))
}

fn determinism() -> Verdict {
    let began = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    let narrow = |name: &str, k: usize, max_trials: u64| -> ExperimentConfig {
        let mut cfg = preset(name).unwrap();
        cfg.codes.truncate(1);
        cfg.channels.truncate(1);
        cfg.k = vlf_cli::config::KList::List(vec![k]);
        cfg.campaign.min_errors = Some(2);
        cfg.campaign.max_trials = max_trials;
        cfg
    };
    for (name, k, trials) in [("fig2-bsc", 8, 3000), ("fig3-awgn-m5", 16, 20_000), ("table4-crc12", 12, 2000)] {
        let cfg = narrow(name, k, trials);
        let mut texts = Vec::new();
        for workers in [1, 3] {
            let dir = tempfile::tempdir().unwrap();
            simulate(&cfg, &RunOptions::new(dir.path()).with_workers(workers)).unwrap();
            texts.push(std::fs::read(dir.path().join("simulate.csv")).unwrap());
        }
        let same = texts[0] == texts[1];
        ok &= same;
        notes.push(format!("{name}: {}", if same { "identical" } else { "DIFFERENT" }));
    }
    let cfg = preset("optimize-synthetic").unwrap();
    let mut texts = Vec::new();
    for workers in [1, 3] {
        let dir = tempfile::tempdir().unwrap();
        optimize::optimize(&cfg, &RunOptions::new(dir.path()).with_workers(workers)).unwrap();
        texts.push(std::fs::read(dir.path().join("optimize.csv")).unwrap());
    }
    ok &= texts[0] == texts[1];
    notes.push(format!("optimize-synthetic: {}", if texts[0] == texts[1] { "identical" } else { "DIFFERENT" }));
    notes.push(format!("{:.1}s", began.elapsed().as_secs_f64()));
    verdict("determinism", ok, notes.join("; "))
}

fn ci_half_width(r: &SimRow) -> f64 {
    (r.pue_ci_hi - r.pue_ci_lo) / 2.0 / r.pue
}

fn main() {
    let began = Instant::now();
    let mut verdicts = Vec::new();
    let mut push = |v: Verdict| {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
        verdicts.push(v);
    };

    push(code_table());
    push(oracle_equivalence());

    eprintln!("running campaigns");
    let bsc = campaign("fig2-bsc", 64, ModeConfig::TailBiting, 24, Some(25), 10_000_000);
    let k16 = campaign("table3", 64, ModeConfig::TailBiting, 16, Some(100), 10_000_000);
    let proxy = campaign("fig3-awgn-m5", 64, ModeConfig::TailBiting, 64, Some(25), 10_000_000);
    let big = campaign("fig3-awgn-m5", 1024, ModeConfig::TailBiting, 64, None, 1000);
    let crc16 = campaign("table4-crc16", 64, ModeConfig::TailBiting, 48, Some(25), 2_000_000);
    let crc12 = campaign("table4-crc12", 64, ModeConfig::TailBiting, 12, Some(25), 2_000_000);

    let reliability = [&bsc, &k16, &proxy, &big];
    let sound = reliability.iter().all(|r| r.pue <= EPS && (r.errors < 25 || r.pue_ci_hi <= EPS));
    let band = (0.5 * 2.26e-4..=2.0 * 2.26e-4).contains(&k16.pue) && k16.errors >= 100;
    push(verdict(
        "epsilon-soundness",
        sound && band,
        format!(
            "P_UE: bsc k=24 {:.2e} (CI hi {:.2e}), k=16 m5 {:.3e} with {} errors (band [1.13e-4, 4.52e-4]), \
             64-state k=64 {:.2e}, 1024-state k=64 {:.2e} over {} trials",
            bsc.pue, bsc.pue_ci_hi, k16.pue, k16.errors, proxy.pue, big.pue, big.trials
        ),
    ));

    push(verdict(
        "bsc-headline",
        within(bsc.lambda, 44.1, 0.05) && within(bsc.throughput, 0.543, 0.05),
        format!("lambda {:.3} (44.1 +- 5%), Rt {:.4} (0.543 +- 5%), {} errors", bsc.lambda, bsc.throughput, bsc.errors),
    ));

    let proxy_ok = proxy.pue > 2.60e-5 && proxy.pue < 2.60e-3;
    push(verdict(
        "awgn-m5-point",
        within(big.lambda, 121.0, 0.05) && within(big.throughput, 0.529, 0.05) && proxy_ok,
        format!(
            "1024-state: lambda {:.3} (121.0 +- 5%), Rt {:.4} (0.529 +- 5%) over {} trials (lambda rel se {:.2}%); \
             64-state proxy P_UE {:.3e} vs 2.60e-4 within a factor of 10",
            big.lambda,
            big.throughput,
            big.trials,
            100.0 * big.lambda_rel_se,
            proxy.pue
        ),
    ));

    let crc16_ok = (0.3 * 2.538e-4..=3.0 * 2.538e-4).contains(&crc16.pue);
    let crc12_ok = crc12.pue >= 1.479e-2 && crc12.pue_ci_lo > 1e-2;
    push(verdict(
        "crc-comparison",
        crc16_ok && crc12_ok,
        format!(
            "0x8810 k+A=64: P_UE {:.3e} ({} errors, band [7.61e-5, 7.61e-4]) {}; \
             0xc07 k+A=24: P_UE {:.3e} (CI [{:.2e}, {:.2e}]) vs 1.479e-1, needs >= 1.479e-2 {}",
            crc16.pue,
            crc16.errors,
            if crc16_ok { "ok" } else { "out of band" },
            crc12.pue,
            crc12.pue_ci_lo,
            crc12.pue_ci_hi,
            if crc12_ok { "ok" } else { "not reproduced" }
        ),
    ));

    push(bounds_check());
    push(optimizer_check());

    let h100 = ci_half_width(&k16);
    let h25 = ci_half_width(&bsc);
    push(verdict(
        "estimator-statistics",
        bsc.lambda_rel_se < 0.01 && (0.18..=0.22).contains(&h100) && (0.36..=0.44).contains(&h25),
        format!(
            "25-error campaign lambda rel se {:.3}%; CI half-width {:.3} P at {} errors, {:.3} P at {} errors",
            100.0 * bsc.lambda_rel_se,
            h100,
            k16.errors,
            h25,
            bsc.errors
        ),
    ));

    push(determinism());

    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed in {:.0}s", verdicts.len(), began.elapsed().as_secs_f64());
    let strict = std::env::var("VLF_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < verdicts.len() {
        std::process::exit(1);
    }
}
