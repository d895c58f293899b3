use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use robustnet::datagen::{Dataset, PrngStream};
use robustnet::harness::{
    self, convergence_sweep, emit_fit_svg, emit_trace_svg, plan, replication_draw, run_table,
    write_outputs, ExperimentConfig, Predictor, RunOptions,
};
use robustnet::losses::LossSpec;
use robustnet::optim::train;
use robustnet::theory::{
    self, d_delta, daw_design, dfw_design, excess_bound, parse_p, rate_exponent, rate_exponent_quadratic,
    rectangle_design, ren_catalog, wfd_design, BoundConstants, BoundVariant, NetworkDesign, RateSpec,
};
use robustnet::Error;

const EXIT_PARTIAL: u8 = 2;
const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 64;
const EXIT_CONFIG: u8 = 65;

/// Robust deep nonparametric regression toolkit.
#[derive(Parser, Debug)]
#[command(name = "robustnet", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Validate and print the plan without running or writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Config override `dotted.key=value` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the training (and optionally test) data of replication 0 for every (noise, n).
    Gen {
        #[arg(long)]
        with_test: bool,
    },
    /// Train one network: first noise, n and train loss of the config, or a saved dataset.
    Train {
        /// Dataset as `<dir>/<stem>` (reads `<stem>.csv` and `<stem>.json`).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the full grid and write report.csv, raw/*.csv and provenance.json.
    Table,
    /// Mean excess risk across the config's n list for its first noise and train loss.
    Sweep {
        /// Test loss as `kind[:hyper]`; defaults to the train loss.
        #[arg(long)]
        test_loss: Option<String>,
    },
    /// Network designs of the error-bound corollaries.
    Design {
        #[command(flatten)]
        rate: RateArgs,
        #[arg(long)]
        n: f64,
        /// Rectangle design under the quadratic condition.
        #[arg(long)]
        quadratic: bool,
        /// Loss for the bound column, `kind[:hyper]`.
        #[arg(long, default_value = "lad")]
        loss: String,
        #[arg(long)]
        csv: bool,
    },
    /// Excess-risk bound of the (N, M) design.
    Bounds {
        #[command(flatten)]
        rate: RateArgs,
        #[arg(long)]
        n: f64,
        #[arg(long = "N", default_value_t = 1)]
        big_n: usize,
        #[arg(long = "M", default_value_t = 1)]
        big_m: usize,
        #[arg(long, default_value = "lad")]
        loss: String,
        /// theorem | l1 | quadratic | manifold | manifold-quadratic
        #[arg(long, default_value = "theorem")]
        variant: String,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_quad: f64,
        /// Self-calibration constant; multiplies the total.
        #[arg(long)]
        calibration: Option<f64>,
        /// Sup-norm bound B.
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        /// Manifold dimension; with --delta, derives d_delta.
        #[arg(long)]
        d_m: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        c_delta: f64,
        #[arg(long)]
        csv: bool,
    },
    /// Relative efficiency of the deep, wide and deep-and-wide designs.
    Ren {
        #[arg(long)]
        n: f64,
        #[arg(long, default_value = "inf")]
        p: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long)]
        csv: bool,
    },
    /// Fitted curves of every train loss (replication 0) against f0.
    Fitplot,
    /// Training-loss traces of every train loss (replication 0).
    Traceplot,
}

#[derive(Args, Debug)]
struct RateArgs {
    #[arg(long)]
    d: usize,
    /// Moment index; `inf` for sub-exponential responses.
    #[arg(long, default_value = "inf")]
    p: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Hölder constant.
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Effective dimension under the manifold model.
    #[arg(long)]
    d_delta: Option<usize>,
}

impl RateArgs {
    fn spec(&self) -> Result<RateSpec, Error> {
        let mut r = RateSpec::new(parse_p(&self.p)?, self.alpha, self.d)?;
        r.theta = self.theta;
        if let Some(dd) = self.d_delta {
            r.d_target = dd;
        }
        r.validate()?;
        Ok(r)
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e @ Error::Config(_))) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Gen { with_test } => cmd_gen(g, *with_test),
        Command::Train { data } => cmd_train(g, data.as_deref()),
        Command::Table => cmd_table(g),
        Command::Sweep { test_loss } => cmd_sweep(g, test_loss.as_deref()),
        Command::Design {
            rate,
            n,
            quadratic,
            loss,
            csv,
        } => cmd_design(g, rate, *n, *quadratic, loss, *csv),
        Command::Bounds {
            rate,
            n,
            big_n,
            big_m,
            loss,
            variant,
            c,
            c2,
            lambda_quad,
            calibration,
            b,
            d_m,
            delta,
            c_delta,
            csv,
        } => {
            let mut rate = rate.spec()?;
            if let (Some(d_m), Some(delta)) = (d_m, delta) {
                rate.d_target = d_delta(*d_m, rate.d, *delta, *c_delta)?;
            }
            let consts = BoundConstants {
                c: Some(*c),
                c2: Some(*c2),
                lambda_quad: Some(*lambda_quad),
                calibration: *calibration,
            };
            cmd_bounds(g, &rate, *n, (*big_n, *big_m), loss, variant, &consts, *b, *delta, *csv)
        }
        Command::Ren { n, p, alpha, d, csv } => cmd_ren(g, *n, p, *alpha, *d, *csv),
        Command::Fitplot => cmd_plots(g, true),
        Command::Traceplot => cmd_plots(g, false),
    }
}

fn threads(g: &Global) -> usize {
    g.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1)
}

fn out_dir(g: &Global) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn load_config(g: &Global) -> CliResult<ExperimentConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("this subcommand needs --config <file>".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut cfg = ExperimentConfig::from_json(&text)?.with_overrides(&g.overrides)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_loss(s: &str) -> CliResult<LossSpec> {
    s.parse::<LossSpec>().map_err(|e| Failure::Usage(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn dry_run(cfg: &ExperimentConfig) -> CliResult<u8> {
    let cells = plan(cfg);
    println!("config ok ({} cells)", cells.len());
    for line in cells {
        println!("{line}");
    }
    Ok(0)
}

fn cmd_gen(g: &Global, with_test: bool) -> CliResult<u8> {
    let cfg = load_config(g)?;
    if g.dry_run {
        return dry_run(&cfg);
    }
    let target = cfg.target.build()?;
    let dir = out_dir(g).join("data");
    for noise in &cfg.noises {
        for &n in &cfg.n {
            let draw = replication_draw(&cfg, &target, noise, n, 0)?;
            let stem = sanitize(&format!("{}_{}_n{}", target.name(), noise.slug(), n));
            draw.train.save(&dir, &format!("{stem}_train"))?;
            if with_test {
                draw.test.save(&dir, &format!("{stem}_test"))?;
            }
            println!("wrote {}", dir.join(format!("{stem}_train.csv")).display());
        }
    }
    Ok(0)
}

fn cmd_train(g: &Global, data: Option<&Path>) -> CliResult<u8> {
    let cfg = load_config(g)?;
    if g.dry_run {
        return dry_run(&cfg);
    }
    let target = cfg.target.build()?;
    let loss = cfg.train_losses[0];
    let shape = cfg.shape()?;
    let (dataset, test, mut rng) = match data {
        Some(stem_path) => {
            let dir = stem_path.parent().unwrap_or(Path::new("."));
            let stem = stem_path
                .file_name()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Failure::Usage("--data must be <dir>/<stem>".into()))?;
            (Dataset::load(dir, stem)?, None, PrngStream::new(cfg.train.seed))
        }
        None => {
            let draw = replication_draw(&cfg, &target, &cfg.noises[0], cfg.n[0], 0)?;
            (draw.train, Some(draw.test), draw.train_rng)
        }
    };
    let (params, trace) = train(&dataset, &shape, &loss, &cfg.train, &mut rng)?;
    let out = out_dir(g);
    let model_path = out.join("model.bin");
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    fs::write(&model_path, params.to_bytes()).map_err(|e| Error::Io {
        path: model_path.clone(),
        source: e,
    })?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write_file(&out.join("trace.csv"), &String::from_utf8_lossy(&buf))?;
    write_file(&out.join("config.json"), &cfg.to_json())?;
    print!("trained {} on n={} ({} epochs), final training loss {:.6}", loss, dataset.len(), trace.len(), trace.last().unwrap_or(f64::NAN));
    if let Some(test) = test {
        let parts: Vec<String> = cfg
            .test_losses
            .iter()
            .map(|tl| {
                harness::excess_risk(&params, &target, &test.xs, &test.ys, tl)
                    .map(|v| format!("{tl}={v:.4}"))
                    .unwrap_or_else(|e| format!("{tl}=error({e})"))
            })
            .collect();
        print!(" | excess {}", parts.join(" "));
    }
    println!();
    Ok(0)
}

fn cmd_table(g: &Global) -> CliResult<u8> {
    let cfg = load_config(g)?;
    if g.dry_run {
        return dry_run(&cfg);
    }
    let threads = threads(g);
    let report = run_table(&cfg, &RunOptions { threads, keep_first: false })?;
    let out = out_dir(g);
    write_outputs(&report, &out, threads)?;
    write_file(&out.join("config.json"), &cfg.to_json())?;
    for cell in &report.cells {
        println!("{}", cell.summary());
    }
    println!("wrote {}", out.join("report.csv").display());
    Ok(if report.total_divergences() > 0 { EXIT_PARTIAL } else { 0 })
}

fn cmd_sweep(g: &Global, test_loss: Option<&str>) -> CliResult<u8> {
    let cfg = load_config(g)?;
    let train_loss = cfg.train_losses[0];
    let test_loss = match test_loss {
        Some(s) => parse_loss(s)?,
        None => train_loss,
    };
    if g.dry_run {
        println!(
            "config ok: sweep {} over n = {:?}, train {}, test {}",
            cfg.noises[0], cfg.n, train_loss, test_loss
        );
        return Ok(0);
    }
    let sweep = convergence_sweep(
        &cfg,
        &cfg.noises[0],
        &train_loss,
        &test_loss,
        &cfg.n,
        &RunOptions {
            threads: threads(g),
            keep_first: false,
        },
    )?;
    let mut csv = String::from("n,mean,sd,median\n");
    for p in &sweep.points {
        println!("n={} mean={:.6} sd={:.6} median={:.6}", p.n, p.mean, p.sd, p.median);
        csv.push_str(&format!("{},{},{},{}\n", p.n, p.mean, p.sd, p.median));
    }
    match sweep.slope {
        Some(s) => println!("log-log slope {s:.4}"),
        None => println!("log-log slope undefined (non-positive mean)"),
    }
    let out = out_dir(g);
    write_file(&out.join("sweep.csv"), &csv)?;
    write_file(&out.join("config.json"), &cfg.to_json())?;
    Ok(0)
}

struct Row {
    name: String,
    design: NetworkDesign,
    exponent: f64,
    bound: String,
}

fn bound_cell(design: &NetworkDesign, rate: &RateSpec, loss: &LossSpec, n: f64, variant: BoundVariant) -> String {
    match excess_bound(design, rate, loss, n, &BoundConstants::default(), variant) {
        Ok(t) => format!("stochastic={:.4e};approximation={:.4e};total={:.4e}", t.stochastic, t.approximation, t.total),
        Err(e) => format!("n/a ({e})"),
    }
}

fn print_rows(rows: &[Row], csv: bool) -> String {
    let mut text = String::from("name,W,D,S,U,exponent,bound_terms\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},\"{}\"\n",
            r.name, r.design.width, r.design.depth, r.design.size, r.design.neurons, r.exponent, r.bound
        ));
    }
    if csv {
        print!("{text}");
    } else {
        println!(
            "{:<20} {:>8} {:>8} {:>14} {:>10} {:>9}  bound terms (up to constants)",
            "name", "W", "D", "S", "U", "exponent"
        );
        for r in rows {
            println!(
                "{:<20} {:>8} {:>8} {:>14} {:>10} {:>9.4}  {}",
                r.name, r.design.width, r.design.depth, r.design.size, r.design.neurons, r.exponent, r.bound
            );
        }
    }
    text
}

fn cmd_design(g: &Global, rate: &RateArgs, n: f64, quadratic: bool, loss: &str, csv: bool) -> CliResult<u8> {
    let spec = rate.spec()?;
    let loss = parse_loss(loss)?;
    if g.dry_run {
        println!("would compute designs for d={} n={n} p={} alpha={}", spec.d, spec.p, spec.alpha);
        return Ok(0);
    }
    let mut rows = Vec::new();
    let manifold = rate.d_delta.filter(|&dd| dd != spec.d);
    if quadratic {
        let des = rectangle_design(n, &spec, true, manifold)?;
        let bound = bound_cell(&des, &spec, &loss, n, BoundVariant::Quadratic);
        rows.push(Row {
            name: des.label.to_string(),
            exponent: rate_exponent_quadratic(&spec),
            design: des,
            bound,
        });
    } else {
        let variant = if manifold.is_some() { BoundVariant::Manifold } else { BoundVariant::Theorem };
        for des in [
            dfw_design(n, &spec)?,
            wfd_design(n, &spec)?,
            daw_design(n, &spec)?,
            rectangle_design(n, &spec, false, manifold)?,
        ] {
            let bound = bound_cell(&des, &spec, &loss, n, variant);
            rows.push(Row {
                name: des.label.to_string(),
                exponent: rate_exponent(&spec),
                design: des,
                bound,
            });
        }
    }
    let text = print_rows(&rows, csv);
    if let Some(out) = &g.out {
        write_file(&out.join("design.csv"), &text)?;
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bounds(
    g: &Global,
    rate: &RateSpec,
    n: f64,
    (big_n, big_m): (usize, usize),
    loss: &str,
    variant: &str,
    consts: &BoundConstants,
    b: f64,
    delta: Option<f64>,
    csv: bool,
) -> CliResult<u8> {
    let loss = parse_loss(loss)?;
    let variant = match variant {
        "theorem" => BoundVariant::Theorem,
        "l1" => BoundVariant::L1,
        "quadratic" => BoundVariant::Quadratic,
        "manifold" => BoundVariant::Manifold,
        "manifold-quadratic" => BoundVariant::ManifoldQuadratic,
        other => return Err(Failure::Usage(format!("unknown bound variant `{other}`"))),
    };
    if g.dry_run {
        println!("would evaluate the {variant:?} bound at n={n}, N={big_n}, M={big_m}");
        return Ok(0);
    }
    let manifold = matches!(variant, BoundVariant::Manifold | BoundVariant::ManifoldQuadratic);
    let d_width = if manifold { rate.d_target } else { rate.d };
    let (w, dep) = theory::shen_width_depth(d_width, big_n, big_m)?;
    let design = NetworkDesign::new(theory::DesignLabel::ShenNM, rate.d, w, dep, big_n, big_m)?.with_b(b);
    let terms = excess_bound(&design, rate, &loss, n, consts, variant)?;
    let exponent = match variant {
        BoundVariant::Quadratic | BoundVariant::ManifoldQuadratic => rate_exponent_quadratic(rate),
        _ => rate_exponent(rate),
    };
    let row = Row {
        name: format!("ShenNM(N={big_n},M={big_m})"),
        design,
        exponent,
        bound: format!(
            "stochastic={:.6e};approximation={:.6e};total={:.6e}",
            terms.stochastic, terms.approximation, terms.total
        ),
    };
    let text = print_rows(std::slice::from_ref(&row), csv);
    if manifold {
        println!("d_delta = {}", rate.d_target);
        if let Some(delta) = delta {
            let rho = theory::admissible_rho(big_n, big_m, rate.d, rate.d_target, delta, consts.c2.unwrap_or(1.0))?;
            println!("admissible rho <= {rho:.6e} (given C2 = {})", consts.c2.unwrap_or(1.0));
        }
    }
    if let Some(out) = &g.out {
        write_file(&out.join("bounds.csv"), &text)?;
    }
    Ok(0)
}

fn cmd_ren(g: &Global, n: f64, p: &str, alpha: f64, d: usize, csv: bool) -> CliResult<u8> {
    let rate = RateSpec::new(parse_p(p)?, alpha, d)?;
    if g.dry_run {
        println!("would compute the REN catalog at n={n}");
        return Ok(0);
    }
    let rows = ren_catalog(n, &rate)?;
    let mut text = String::from("first,second,ren,ren_at_n\n");
    for r in &rows {
        let at_n = r.ren_at_n.map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{},{}\n", r.first, r.second, r.ren, at_n));
    }
    if csv {
        print!("{text}");
    } else {
        println!("{:<6} {:<6} {:>8} {:>12}", "first", "second", "REN", "log-ratio@n");
        for r in &rows {
            let at_n = r.ren_at_n.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
            println!("{:<6} {:<6} {:>8.4} {:>12}", r.first.to_string(), r.second.to_string(), r.ren, at_n);
        }
    }
    if let Some(out) = &g.out {
        write_file(&out.join("ren.csv"), &text)?;
    }
    Ok(0)
}

fn cmd_plots(g: &Global, fit: bool) -> CliResult<u8> {
    let mut cfg = load_config(g)?;
    cfg.replications = 1;
    if g.dry_run {
        return dry_run(&cfg);
    }
    let target = cfg.target.build()?;
    if fit && target.dim() != 1 {
        return Err(Error::InvalidInput("fit plots are univariate only".into()).into());
    }
    let report = run_table(
        &cfg,
        &RunOptions {
            threads: threads(g),
            keep_first: true,
        },
    )?;
    let plots = out_dir(g).join("plots");
    for noise in &cfg.noises {
        for &n in &cfg.n {
            let cells: Vec<_> = report.cells.iter().filter(|c| &c.noise == noise && c.n == n).collect();
            let stem = sanitize(&format!("{}_{}_n{}", target.name(), noise.slug(), n));
            if fit {
                let fits: Vec<(String, &dyn Predictor)> = cells
                    .iter()
                    .map(|c| (c.train_loss.to_string(), &c.first.as_ref().unwrap().params as &dyn Predictor))
                    .collect();
                let data = &cells[0].first.as_ref().unwrap().train;
                let path = plots.join(format!("fit_{stem}.svg"));
                emit_fit_svg(&fits, &target, data, &path)?;
                println!("wrote {}", path.display());
            } else {
                let traces: Vec<_> = cells
                    .iter()
                    .map(|c| (c.train_loss.to_string(), &c.first.as_ref().unwrap().trace))
                    .collect();
                let path = plots.join(format!("trace_{stem}.svg"));
                emit_trace_svg(&traces, &path)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(0)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect::<String>()
        .to_ascii_lowercase()
}
