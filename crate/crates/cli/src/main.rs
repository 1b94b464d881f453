use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use evflight::config::{Precision, RunConfig};
use evflight::error::{Error, Result};
use evflight::eval::{svg_bars, svg_correlation, HoughConfig, MetricReport};
use evflight::filterbank::{bench_stream, measure_throughput, read_samples, write_samples};
use evflight::inference::{predictions_csv_header, predictions_csv_rows, read_predictions_csv, PredictionRecord};
use evflight::nnet::{decode_checkpoint, encode_checkpoint, Network};
use evflight::pipeline::{self as pl, Arm};
use evflight::real::Real;

/// Time-to-collision and impact-location pipeline for event cameras.
#[derive(Parser, Debug)]
#[command(name = "evflight", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Shorthand for `--set output_dir=DIR`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Shorthand for `--set object=KIND`.
    #[arg(long, global = true)]
    object: Option<String>,
    /// Shorthand for `--set seed=N`; wins over EVFLIGHT_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1, global = true)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate trajectories and events, split 80/20 into sim/.
    Simulate {
        /// Shorthand for `--set sim.n=N`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Rotate/translate recordings into aug/train and aug/test.
    Augment,
    /// Encode aug/ into samples/{train,test}.smp, or benchmark the filterbank.
    Filter {
        /// Measure bin + filter throughput on a synthetic stream instead.
        #[arg(long)]
        bench: bool,
        /// Events in the benchmark stream.
        #[arg(long, default_value_t = 4_000_000)]
        events: usize,
    },
    /// Train on samples/ and write model/checkpoint.evnn.
    Train,
    /// Predict on aug/test with a checkpoint; writes infer/predictions.csv.
    Infer {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Metrics for a predictions file; writes eval/.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Hough circle and convex hull baselines on the sim/ test split.
    Baseline,
    /// Filter and augmentation ablation on sim/; writes ablate/.
    Ablate,
    /// Collect the summaries of earlier commands into report/report.md.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Augment => "augment",
            Command::Filter { .. } => "filter",
            Command::Train => "train",
            Command::Infer { .. } => "infer",
            Command::Eval { .. } => "eval",
            Command::Baseline => "baseline",
            Command::Ablate => "ablate",
            Command::Report => "report",
        }
    }
}

const SUBCOMMANDS: [&str; 9] = ["simulate", "augment", "filter", "train", "infer", "eval", "baseline", "ablate", "report"];

fn parse_cli() -> std::result::Result<Cli, clap::Error> {
    let keys = RunConfig::help_text();
    let mut cmd = Cli::command().after_long_help(keys.clone()).after_help(keys.clone());
    for name in SUBCOMMANDS {
        let k = keys.clone();
        cmd = cmd.mut_subcommand(name, |s| s.after_help(k.clone()).after_long_help(k));
    }
    Cli::from_arg_matches(&cmd.try_get_matches()?)
}

/// Defaults, then the config file, then EVFLIGHT_SEED, then command-line overrides.
fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(o) = &cli.object {
        cfg.set("object", o)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Command::Simulate { n: Some(n) } = &cli.command {
        cfg.set("sim.n", &n.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn dir(&self, name: &str) -> Result<PathBuf> {
        let d = self.root.join(name);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    /// Input that an earlier command should have produced.
    fn input(&self, rel: &str, producer: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if !p.exists() {
            return Err(Error::Data(format!("missing input: expected {} (run `evflight {producer}` first)", p.display())));
        }
        Ok(p)
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Config echo that doubles as a `--config` file reproducing the run.
fn write_manifest(out: &Layout, command: &str, cfg: &RunConfig, jobs: usize) -> Result<()> {
    let mut s = String::from("# evflight run manifest; usable as --config\n");
    s += &format!("# command = {command}\n");
    s += &format!("# argv = {}\n", std::env::args().collect::<Vec<_>>().join(" "));
    s += &format!("# evflight_version = {}\n", env!("CARGO_PKG_VERSION"));
    s += &format!("# rustc_target = {}-{}\n", std::env::consts::ARCH, std::env::consts::OS);
    s += &format!("# jobs = {jobs} (does not affect outputs)\n");
    s += &format!("# seed = {}\n", cfg.seed);
    s += &cfg.to_text();
    write(&out.dir("manifests")?.join(format!("{command}.txt")), s)
}

fn simulate(cfg: &RunConfig, out: &Layout, jobs: usize) -> Result<()> {
    let data = pl::simulate(cfg, jobs)?;
    let dir = out.dir("sim")?;
    pl::save_dataset(&data, &dir)?;
    println!("{} recordings: {} train / {} test -> {}", data.train.len() + data.test.len(), data.train.len(), data.test.len(), dir.display());
    Ok(())
}

fn augment(cfg: &RunConfig, out: &Layout, jobs: usize) -> Result<()> {
    let data = pl::load_dataset(&out.input("sim/split.txt", "simulate")?.with_file_name(""))?;
    let train = if cfg.augment_enabled {
        pl::augment_set(&data.train, cfg.train_copies(), cfg, "train", jobs)?
    } else {
        data.train.clone()
    };
    let test = pl::augment_set(&data.test, cfg.test_copies(), cfg, "test", jobs)?;
    let dir = out.dir("aug")?;
    for (name, recs) in [("train", &train), ("test", &test)] {
        let d = dir.join(name);
        if d.exists() {
            fs::remove_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        pl::save_recordings(recs, &d)?;
    }
    println!("{} train / {} test recordings -> {}", train.len(), test.len(), dir.display());
    Ok(())
}

fn filter(cfg: &RunConfig, out: &Layout, jobs: usize, bench: bool, events: usize) -> Result<()> {
    if bench {
        let fc = cfg.filter_config();
        let cam = cfg.profile.camera();
        let stream = bench_stream(cam.width, cam.height, events, 1_000_000, cfg.stage_seed("bench"));
        let t = match cfg.precision {
            Precision::F32 => measure_throughput::<f32>(&stream, &fc)?,
            Precision::F64 => measure_throughput::<f64>(&stream, &fc)?,
        };
        let line = format!(
            "bin+filter throughput: {} events in {:.3} s = {:.0} events/s ({}x{} sensor, {:?})\n",
            t.events, t.seconds, t.events_per_sec, cam.width, cam.height, cfg.precision
        );
        print!("{line}");
        return write(&out.dir("bench")?.join("throughput.txt"), line);
    }
    let train = pl::load_recordings(&out.input("aug/train", "augment")?)?;
    let test = pl::load_recordings(&out.input("aug/test", "augment")?)?;
    let dir = out.dir("samples")?;
    for (name, recs) in [("train", &train), ("test", &test)] {
        let s = pl::encode_set(cfg, recs, jobs)?;
        write_samples(&s, dir.join(format!("{name}.smp")))?;
        println!("{name}: {} samples from {} recordings", s.len(), recs.len());
    }
    Ok(())
}

fn train_typed<T: Real>(cfg: &RunConfig, out: &Layout, jobs: usize) -> Result<()> {
    let train = read_samples(out.input("samples/train.smp", "filter")?)?;
    let test = read_samples(out.input("samples/test.smp", "filter")?)?;
    let val = pl::validation_subset(&test, pl::MAX_VAL_SAMPLES);
    let (net, report) = pl::train_network::<T>(cfg, &train, &val, jobs)?;
    let dir = out.dir("model")?;
    write(&dir.join("history.csv"), report.history_csv())?;
    if let Some(msg) = report.diverged {
        return Err(Error::Numeric(format!("training diverged: {msg}; history kept in {}", dir.display())));
    }
    write(&dir.join("checkpoint.evnn"), encode_checkpoint(&net))?;
    println!("trained {} params on {} samples for {} steps -> {}", net.param_count(), train.len(), report.steps, dir.display());
    Ok(())
}

fn infer_typed<T: Real>(cfg: &RunConfig, out: &Layout, jobs: usize, checkpoint: &Path) -> Result<()> {
    let bytes = fs::read(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let net: Network<T> = decode_checkpoint(&bytes)?;
    let test = pl::load_recordings(&out.input("aug/test", "augment")?)?;
    let preds = pl::predict_recordings(cfg, &net, &test, jobs)?;
    let mut csv = predictions_csv_header();
    let mut latency = Vec::new();
    for (id, recs) in &preds {
        latency.extend(recs.iter().map(|r| r.latency_us));
        // Wall-clock latency would make the file irreproducible; it goes to timing.txt.
        let zeroed: Vec<PredictionRecord> = recs.iter().map(|r| PredictionRecord { latency_us: 0.0, ..r.clone() }).collect();
        predictions_csv_rows(id, &zeroed, &mut csv);
    }
    let dir = out.dir("infer")?;
    write(&dir.join("predictions.csv"), csv)?;
    latency.sort_by(f64::total_cmp);
    let n = latency.len().max(1);
    write(
        &dir.join("timing.txt"),
        format!(
            "predictions {}\nmean latency {:.1} us\np50 {:.1} us\np99 {:.1} us\n",
            latency.len(),
            latency.iter().sum::<f64>() / n as f64,
            latency.get(latency.len() / 2).copied().unwrap_or(0.0),
            latency.get((latency.len() * 99) / 100).copied().unwrap_or(0.0)
        ),
    )?;
    println!("{} predictions over {} recordings -> {}", latency.len(), preds.len(), dir.display());
    Ok(())
}

fn write_report(dir: &Path, report: &MetricReport, title: &str) -> Result<()> {
    write(&dir.join("report.csv"), report.to_csv())?;
    write(&dir.join("correlation.csv"), report.correlation_csv())?;
    write(&dir.join("summary.txt"), report.summary())?;
    write(&dir.join("ttc_correlation.svg"), svg_correlation(&report.correlation, &format!("{title}: predicted vs true time to collision")))?;
    let cats: Vec<String> = report.intervals.iter().map(|iv| format!("{:.3}-{:.3} s", iv.hi, iv.lo)).collect();
    let col = |f: &dyn Fn(&evflight::eval::MetricSet) -> f64| report.intervals.iter().map(|iv| f(&iv.metrics)).collect::<Vec<_>>();
    write(
        &dir.join("intervals.svg"),
        svg_bars(
            &format!("{title}: error per time-to-collision interval"),
            "error",
            &cats,
            &[
                ("theta (deg)".into(), col(&|m| m.mean_theta_deg)),
                ("radius (mm)".into(), col(&|m| m.mean_radius_mm)),
                ("median TTC (%)".into(), col(&|m| 100.0 * m.median_ttc_error)),
            ],
        ),
    )
}

fn eval(cfg: &RunConfig, out: &Layout, predictions: Option<PathBuf>) -> Result<()> {
    let path = match predictions {
        Some(p) => p,
        None => out.input("infer/predictions.csv", "infer")?,
    };
    let preds = read_predictions_csv(&path)?;
    let report = pl::evaluate(cfg, &preds)?;
    let dir = out.dir("eval")?;
    write_report(&dir, &report, cfg.object.name())?;
    print!("{}", report.summary());
    Ok(())
}

fn baseline(cfg: &RunConfig, out: &Layout, jobs: usize) -> Result<()> {
    let data = pl::load_dataset(&out.input("sim/split.txt", "simulate")?.with_file_name(""))?;
    let hough = HoughConfig::default();
    let rows: Vec<pl::BaselineRow> = evflight::seed::parallel_map(data.test.iter().collect(), jobs, |r| pl::baseline_rows(cfg, r, &hough))
        .into_iter()
        .flatten()
        .collect();
    let dir = out.dir("baseline")?;
    write(&dir.join("baseline.csv"), pl::baseline_csv(&rows))?;
    let summary = pl::baseline_summary(&rows);
    write(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn ablate(cfg: &RunConfig, out: &Layout, jobs: usize) -> Result<()> {
    let data = pl::load_dataset(&out.input("sim/split.txt", "simulate")?.with_file_name(""))?;
    let results = pl::ablation_run(cfg, &data, &Arm::ALL, jobs)?;
    let dir = out.dir("ablate")?;
    write(&dir.join("ablation.csv"), pl::ablation_csv(&results))?;
    let ok: Vec<_> = results.iter().filter_map(|r| r.experiment.as_ref().map(|e| (r.arm, e))).collect();
    for (arm, e) in &ok {
        write_report(&out.dir(&format!("ablate/{}", arm.name()))?, &e.report, arm.name())?;
    }
    let cats = vec!["theta (deg)".to_string(), "radius (mm)".to_string(), "median TTC (%)".to_string()];
    let series: Vec<(String, Vec<f64>)> = ok
        .iter()
        .map(|(arm, e)| {
            let g = &e.report.global;
            (arm.name().to_string(), vec![g.mean_theta_deg, g.mean_radius_mm, 100.0 * g.median_ttc_error])
        })
        .collect();
    write(&dir.join("ablation.svg"), svg_bars(&format!("{} ablation", cfg.object.name()), "error", &cats, &series))?;
    print!("{}", pl::ablation_csv(&results));
    Ok(())
}

fn report(cfg: &RunConfig, out: &Layout) -> Result<()> {
    let sections: [(&str, &str); 6] = [
        ("Evaluation", "eval/summary.txt"),
        ("Ablation", "ablate/ablation.csv"),
        ("Baselines", "baseline/summary.txt"),
        ("Training history", "model/history.csv"),
        ("Inference timing", "infer/timing.txt"),
        ("Filterbank throughput", "bench/throughput.txt"),
    ];
    let mut s = format!("# evflight report ({})\n\n", cfg.object.name());
    let mut found = 0;
    for (title, rel) in sections {
        let p = out.root.join(rel);
        s += &format!("## {title}\n\n");
        if p.is_file() {
            found += 1;
            s += &format!("```\n{}```\n\n", read(&p)?);
        } else {
            s += &format!("not run (no {rel})\n\n");
        }
    }
    if found == 0 {
        return Err(Error::Data(format!("nothing to report under {}", out.root.display())));
    }
    let dir = out.dir("report")?;
    write(&dir.join("report.md"), &s)?;
    println!("{found} sections -> {}", dir.join("report.md").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    let out = Layout {
        root: cfg.output_dir.clone(),
    };
    let jobs = cli.jobs.max(1);
    let name = cli.command.name();
    log::info!("{name}: object {}, seed {}, output {}", cfg.object.name(), cfg.seed, out.root.display());
    match cli.command {
        Command::Simulate { .. } => simulate(&cfg, &out, jobs)?,
        Command::Augment => augment(&cfg, &out, jobs)?,
        Command::Filter { bench, events } => filter(&cfg, &out, jobs, bench, events)?,
        Command::Train => match cfg.precision {
            Precision::F32 => train_typed::<f32>(&cfg, &out, jobs)?,
            Precision::F64 => train_typed::<f64>(&cfg, &out, jobs)?,
        },
        Command::Infer { checkpoint } => {
            let ck = match checkpoint {
                Some(p) => p,
                None => out.input("model/checkpoint.evnn", "train")?,
            };
            match cfg.precision {
                Precision::F32 => infer_typed::<f32>(&cfg, &out, jobs, &ck)?,
                Precision::F64 => infer_typed::<f64>(&cfg, &out, jobs, &ck)?,
            }
        }
        Command::Eval { predictions } => eval(&cfg, &out, predictions)?,
        Command::Baseline => baseline(&cfg, &out, jobs)?,
        Command::Ablate => ablate(&cfg, &out, jobs)?,
        Command::Report => report(&cfg, &out)?,
    }
    write_manifest(&out, name, &cfg, jobs)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match parse_cli() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
