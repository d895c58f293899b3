//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.
//!
//! The training criteria run at desk scale (Nets-256, R=5, T=1e4, 600
//! epochs) and take several minutes in total on one core. Run with
//! `cargo test -p robustnet --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use robustnet::datagen::{make_dataset, NoiseModel, PrngStream, TargetSpec};
use robustnet::harness::{delta2_metric, emit_csv, excess_risk, run_table, ExperimentConfig, Report, RunOptions};
use robustnet::losses::{LossKind, LossSpec};
use robustnet::mlp::{MlpParams, NetworkShape};
use robustnet::theory::{rectangle_design, ren_catalog, shen_width_depth, wfd_design, DesignLabel, RateSpec};

const SEED: u64 = 2021;

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

fn robust_set() -> Vec<LossSpec> {
    vec![
        LossSpec::ls(),
        LossSpec::huber(1.345).unwrap(),
        LossSpec::cauchy(1.0).unwrap(),
        LossSpec::tukey(4.685).unwrap(),
    ]
}

fn mean_risk(net: &MlpParams, batch: &[(Vec<f64>, f64)], loss: &LossSpec) -> f64 {
    batch
        .iter()
        .map(|(x, y)| loss.value(net.forward(x).unwrap(), *y).unwrap())
        .sum::<f64>()
        / batch.len() as f64
}

fn gradient_oracle() -> Outcome {
    let mut rng = PrngStream::new(SEED);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..20 {
        let d = 1 + rng.below(3) as usize;
        let hidden = 1 + rng.below(2) as usize;
        let mut widths = vec![d];
        widths.extend((0..hidden).map(|_| 1 + rng.below(8) as usize));
        widths.push(1);
        let shape = NetworkShape::new(widths).unwrap();
        let net = MlpParams::init(&shape, &mut rng);
        let m = 1 + rng.below(16) as usize;
        let batch: Vec<(Vec<f64>, f64)> = (0..m)
            .map(|_| ((0..d).map(|_| rng.uniform01()).collect(), 2.0 * rng.standard_normal()))
            .collect();
        for loss in robust_set() {
            let (_, grads) = net.backward(&batch, &loss).unwrap();
            for (k, &g) in grads.as_slice().iter().enumerate() {
                let mut plus = net.clone();
                plus.as_mut_slice()[k] += h;
                let mut minus = net.clone();
                minus.as_mut_slice()[k] -= h;
                let fd = (mean_risk(&plus, &batch, &loss) - mean_risk(&minus, &batch, &loss)) / (2.0 * h);
                let tol = (1e-4 * g.abs()).max(1e-6);
                worst = worst.max((fd - g).abs() / tol);
                checked += 1;
            }
        }
    }
    outcome(worst <= 1.0, format!("{checked} partials, worst |fd-g|/tol = {worst:.3}"))
}

fn loss_table() -> Outcome {
    let t = 4.685;
    // max of x(1-(x/t)^2)^2 sits at x = t/sqrt(5)
    let tukey_peak = {
        let x = t / 5f64.sqrt();
        x * (1.0 - (x / t).powi(2)).powi(2)
    };
    let cases = [
        (LossSpec::lad(), 1.0),
        (LossSpec::quantile(0.3).unwrap(), 0.7),
        (LossSpec::huber(1.345).unwrap(), 1.345),
        (LossSpec::cauchy(1.0).unwrap(), 1.0),
        (LossSpec::tukey(t).unwrap(), tukey_peak),
    ];
    let mut fails = Vec::new();
    let mut worst_ratio = 0.0f64;
    for (loss, expect) in cases {
        let lam = loss.lipschitz_constant().unwrap();
        let exact = if loss.kind() == LossKind::Tukey {
            (lam - expect).abs() <= 1e-12
        } else {
            lam == expect
        };
        if !exact {
            fails.push(format!("{loss}: {lam} vs {expect}"));
        }
        let grid: Vec<f64> = (0..=4000).map(|i| -20.0 + i as f64 * 0.01).collect();
        for y in [-3.0, 0.0, 1.7] {
            for w in grid.windows(2) {
                let slope = (loss.value(w[1], y).unwrap() - loss.value(w[0], y).unwrap()).abs() / (w[1] - w[0]);
                worst_ratio = worst_ratio.max(slope / lam);
            }
        }
    }
    let ls_rejected = LossSpec::ls().lipschitz_constant().is_err();
    let pass = fails.is_empty() && worst_ratio <= 1.0 + 1e-3 && ls_rejected;
    outcome(pass, format!("mismatches {fails:?}, max probe slope / lambda = {worst_ratio:.6}"))
}

fn structural() -> Outcome {
    let mut rng = PrngStream::new(SEED + 3);
    let mut bad = Vec::new();
    for _ in 0..50 {
        let layers = 2 + rng.below(6) as usize;
        let mut widths: Vec<usize> = (0..layers - 1).map(|_| 1 + rng.below(300) as usize).collect();
        widths.push(1);
        let shape = NetworkShape::new(widths.clone()).unwrap();
        let mut count = 0usize;
        for l in 0..widths.len() - 1 {
            for _out in 0..widths[l + 1] {
                for _in in 0..widths[l] {
                    count += 1;
                }
                count += 1;
            }
        }
        if shape.param_count() != count || MlpParams::zeros(&shape).as_slice().len() != count {
            bad.push(format!("{widths:?}"));
        }
    }
    let shen = shen_width_depth(1, 1, 1).unwrap();
    let rate = |d| RateSpec::new(f64::INFINITY, 1.0, d).unwrap();
    let wfd_depth = wfd_design(1e6, &rate(1)).unwrap().depth;
    let widths: Vec<usize> = [1, 2, 3, 10]
        .iter()
        .map(|&d| rectangle_design(1e6, &rate(d), false, None).unwrap().width)
        .collect();
    let pass = bad.is_empty() && shen == (20, 26) && wfd_depth == 26 && widths == [20, 20, 21, 70];
    outcome(
        pass,
        format!("param_count mismatches {bad:?}; shen(1,1,1) = {shen:?}; WFD depth {wfd_depth}; rectangle W {widths:?}"),
    )
}

fn ren_asymptotics() -> Outcome {
    let rows = ren_catalog(1e12, &RateSpec::new(f64::INFINITY, 1.0, 1).unwrap()).unwrap();
    let get = |b: DesignLabel| rows.iter().find(|r| r.first == DesignLabel::Daw && r.second == b).unwrap().ren;
    let (a, b) = (get(DesignLabel::Dfw), get(DesignLabel::Wfd));
    let pass = (a - 2.0 / 3.0).abs() <= 0.05 && (b - 4.0 / 3.0).abs() <= 0.05;
    outcome(pass, format!("REN(DAW,DFW) = {a:.4}, REN(DAW,WFD) = {b:.4}"))
}

fn desk_config(target: TargetSpec, noises: Vec<NoiseModel>, losses: Vec<LossSpec>, n: Vec<usize>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(target, n);
    cfg.seed = SEED;
    cfg.noises = noises;
    cfg.train_losses = losses;
    cfg.replications = 5;
    cfg.test_size = 10_000;
    cfg.train.epochs = 600;
    cfg.validate().unwrap();
    cfg
}

fn ls_mean(report: &Report, noise: &NoiseModel, n: usize, train: &LossSpec, test: &LossSpec) -> f64 {
    report.cell(noise, n, train).unwrap().stats_for(test).unwrap().mean
}

fn csv_bytes(report: &Report) -> Vec<u8> {
    let mut buf = Vec::new();
    emit_csv(report, &mut buf).unwrap();
    buf
}

fn contamination(report: &Report) -> Outcome {
    let noise = NoiseModel::contaminated();
    let huber = LossSpec::huber(1.345).unwrap();
    let ls = ls_mean(report, &noise, 512, &LossSpec::ls(), &LossSpec::ls());
    let hu = ls_mean(report, &noise, 512, &huber, &LossSpec::ls());
    outcome(ls >= 3.0 * hu, format!("LS-trained {ls:.3}, Huber-trained {hu:.3}, ratio {:.2}", ls / hu))
}

fn normal_sanity() -> Outcome {
    let cfg = desk_config(TargetSpec::Blocks, vec![NoiseModel::Normal], LossSpec::experiment_set(), vec![512]);
    let report = run_table(&cfg, &RunOptions::default()).unwrap();
    let means: Vec<(String, f64)> = cfg
        .train_losses
        .iter()
        .map(|l| (l.to_string(), ls_mean(&report, &NoiseModel::Normal, 512, l, &LossSpec::ls())))
        .collect();
    let best = means.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let ls = means[0].1;
    let listing: Vec<String> = means.iter().map(|(l, m)| format!("{l}={m:.3}")).collect();
    outcome(ls <= 2.0 * best, format!("{}; LS / best = {:.2}", listing.join(" "), ls / best))
}

fn cauchy_robustness() -> Outcome {
    let cfg = desk_config(
        TargetSpec::Doppler,
        vec![NoiseModel::Cauchy],
        vec![LossSpec::ls(), LossSpec::lad()],
        vec![512],
    );
    let report = run_table(&cfg, &RunOptions::default()).unwrap();
    let median = |l: &LossSpec| {
        let cell = report.cell(&NoiseModel::Cauchy, 512, l).unwrap();
        robustnet::harness::median(&cell.stats_for(&LossSpec::ls()).unwrap().values)
    };
    let (ls, lad) = (median(&LossSpec::ls()), median(&LossSpec::lad()));
    outcome(lad < ls, format!("median LS-tested excess: LAD-trained {lad:.3}, LS-trained {ls:.3}"))
}

fn convergence() -> Outcome {
    let huber = LossSpec::huber(1.345).unwrap();
    let cfg = desk_config(TargetSpec::Heavisine, vec![NoiseModel::StudentT2], vec![huber], vec![128, 512]);
    let report = run_table(&cfg, &RunOptions::default()).unwrap();
    let small = ls_mean(&report, &NoiseModel::StudentT2, 128, &huber, &huber);
    let large = ls_mean(&report, &NoiseModel::StudentT2, 512, &huber, &huber);
    outcome(large < small, format!("Huber excess n=128 {small:.4} -> n=512 {large:.4}"))
}

fn oracle_zero() -> Outcome {
    let targets = [
        TargetSpec::Blocks,
        TargetSpec::Bumps,
        TargetSpec::Heavisine,
        TargetSpec::Doppler,
        TargetSpec::Ka { d: 2, seed: 2021 },
    ];
    let mut worst = 0.0f64;
    let mut combos = 0;
    for spec in targets {
        let f0 = spec.build().unwrap();
        for (i, noise) in NoiseModel::experiment_set().iter().enumerate() {
            let test = make_dataset(&f0, noise, 2000, &mut PrngStream::with_stream(SEED, i as u64)).unwrap();
            worst = worst.max(delta2_metric(&f0, &f0, &test.xs).unwrap().abs());
            for loss in LossSpec::experiment_set() {
                worst = worst.max(excess_risk(&f0, &f0, &test.xs, &test.ys, &loss).unwrap().abs());
                combos += 1;
            }
        }
    }
    outcome(worst <= 1e-12, format!("{combos} combinations, max |value| = {worst:e}"))
}

#[test]
fn acceptance() {
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut record = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{} [{id}] {name}: {} ({secs:.1}s)",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
        results.push((id, name, out, secs));
    };

    record(1, "gradient oracle", &mut gradient_oracle);
    record(2, "loss table exactness", &mut loss_table);
    record(3, "structural formulas", &mut structural);
    record(4, "REN asymptotics", &mut ren_asymptotics);
    record(9, "oracle zero", &mut oracle_zero);

    let grid5 = desk_config(
        TargetSpec::Blocks,
        vec![NoiseModel::contaminated()],
        vec![LossSpec::ls(), LossSpec::huber(1.345).unwrap()],
        vec![512],
    );
    let start = Instant::now();
    let report5 = run_table(&grid5, &RunOptions { threads: 1, keep_first: false }).unwrap();
    let grid5_secs = start.elapsed().as_secs_f64();
    record(5, "robustness under contamination", &mut || {
        let mut o = contamination(&report5);
        o.detail.push_str(&format!("; grid {grid5_secs:.0}s"));
        o
    });
    record(6, "normal-noise sanity", &mut normal_sanity);
    record(7, "Cauchy-noise robustness", &mut cauchy_robustness);
    record(8, "convergence direction", &mut convergence);
    record(10, "determinism", &mut || {
        let first = csv_bytes(&report5);
        let again = csv_bytes(&run_table(&grid5, &RunOptions { threads: 1, keep_first: false }).unwrap());
        let four = csv_bytes(&run_table(&grid5, &RunOptions { threads: 4, keep_first: false }).unwrap());
        outcome(
            first == again && first == four,
            format!("rerun identical: {}, threads 1 vs 4 identical: {}", first == again, first == four),
        )
    });

    results.sort_by_key(|r| r.0);
    println!("---");
    for (id, name, out, secs) in &results {
        println!("{} [{id}] {name} ({secs:.1}s)", if out.pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
