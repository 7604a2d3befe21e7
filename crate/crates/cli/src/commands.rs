use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use passm::engine::{run_sequential, validate_schedule, OptimizerState, ScheduleReport};
use passm::interp::{
    bias_diag, build_interpolation, martingale_diag, stationarity_curve, time_fraction_in_set, trace_span,
    write_bias_csv, write_martingale_csv, write_stationarity_csv,
};
use passm::oracle::{GapMethod, Problem};
use passm::sched::{validate_model, Event, EventGenerator, FlagKind, ModelReport, DEFAULT_WINDOW};
use passm::shmexec::{hardware_threads, measure_delays, spawn_run};
use passm::trace::{Trace, TraceRecord};

use crate::config::{output_root, Algorithm, Executor, Overrides, RunConfig, SchedulePolicy, Setup};
use crate::error::{CliError, Result};
use crate::runlog::{Footer, Header, LogWriter, RunLog, WallSummary};

/// Sampled-gap settings for problems without an exact gap.
const GAP_SAMPLES: usize = 64;

/// Read a TOML config, or the header of an existing run log to replay it.
/// Returns the config and the directory relative data paths resolve to.
pub fn load_config(path: &Path) -> Result<(RunConfig, Option<PathBuf>)> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let first = text.lines().next().unwrap_or_default();
        let log = RunLog::parse(first)?;
        return Ok((log.header.config, None));
    }
    Ok((RunConfig::from_toml_str(&text)?, path.parent().map(Path::to_path_buf)))
}

fn schedule_horizon(setup: &Setup) -> f64 {
    let a = &setup.asynchrony;
    let mean = (0..a.cores()).map(|c| a.dtau_of(c).expected()).fold(0.0, f64::max);
    (setup.options.budget as f64 * mean / a.cores() as f64).max(1.0)
}

fn check_schedule(config: &RunConfig, setup: &Setup) -> Result<ScheduleReport> {
    let report = validate_schedule(&config.schedule, schedule_horizon(setup))?;
    if !report.accepted() {
        let msg = format!("schedule rejected: {}", report.failures.join("; "));
        match config.schedule_policy {
            SchedulePolicy::Reject => return Err(CliError::Config(msg)),
            SchedulePolicy::Warn => eprintln!("warning: {msg}"),
        }
    }
    Ok(report)
}

fn warn_oversubscription(config: &RunConfig) {
    let hw = hardware_threads();
    if config.executor == Executor::Threaded && config.asynchrony.cores > hw {
        eprintln!(
            "warning: {} worker threads on {hw} hardware threads; timings will not reflect parallel execution",
            config.asynchrony.cores
        );
    }
}

/// Resolved config plus everything built from it.
fn prepare(path: &Path, overrides: Overrides) -> Result<(RunConfig, RunConfig, Setup)> {
    let (raw, base) = load_config(path)?;
    let resolved = raw.resolve(base.as_deref(), overrides)?;
    let setup = resolved.setup()?;
    if resolved.problem.id() != setup.problem.id() {
        return Err(CliError::Config("problem id does not match its parameters".into()));
    }
    Ok((raw, resolved, setup))
}

fn log_path(raw: &RunConfig, config_path: &Path, out: Option<&Path>) -> PathBuf {
    let chosen = out.map(Path::to_path_buf).or_else(|| raw.output.log.clone()).unwrap_or_else(|| {
        let stem = config_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        // replaying a log must not overwrite it
        if config_path.extension().is_some_and(|e| e == "log") {
            PathBuf::from(format!("{stem}.replay.log"))
        } else {
            PathBuf::from(format!("{stem}.log"))
        }
    });
    if chosen.is_relative() {
        output_root().join(chosen)
    } else {
        chosen
    }
}

/// Full and per-block gaps, exact where the problem allows it.
fn gaps(problem: &Problem, x: &[f64], blocks: &[Vec<usize>]) -> Result<(f64, Vec<f64>, &'static str)> {
    let exact = problem.clarke_gap(x, GapMethod::Exact);
    let (method, name) = match exact {
        Err(passm::Error::Unsupported(_)) => (
            GapMethod::Sampled {
                radius: problem.gap_radius(),
                samples: GAP_SAMPLES,
                seed: 0,
            },
            "sampled",
        ),
        _ => (GapMethod::Exact, "exact"),
    };
    let full = problem.clarke_gap(x, method)?;
    let block = blocks.iter().map(|b| problem.block_gap(x, b, method)).collect::<passm::Result<_>>()?;
    Ok((full, block, name))
}

struct RunStats {
    final_x: Vec<f64>,
    iterations: u64,
    virtual_time: f64,
    max_delay: u32,
}

impl RunStats {
    fn of_trace(t: &Trace) -> Self {
        Self {
            final_x: t.final_x.clone(),
            iterations: t.len() as u64,
            virtual_time: t.records.iter().map(|r| r.time).fold(0.0, f64::max),
            max_delay: t.max_delay(),
        }
    }
}

fn footer(setup: &Setup, stats: RunStats, flags: Vec<String>, elapsed: f64) -> Result<Footer> {
    let (final_gap, block_gaps, method) = gaps(&setup.problem, &stats.final_x, setup.asynchrony.partition.blocks())?;
    Ok(Footer {
        iterations: stats.iterations,
        final_loss: setup.problem.eval(&stats.final_x)?,
        final_x: stats.final_x,
        final_gap,
        block_gaps,
        gap_method: method.into(),
        virtual_time: stats.virtual_time,
        max_delay: stats.max_delay,
        flags,
        wall: WallSummary { elapsed_s: elapsed },
    })
}

fn model_flags(report: &ModelReport) -> Vec<String> {
    report
        .flags
        .iter()
        .map(|f| match f.kind {
            FlagKind::Hard => format!("hard: {}", f.message),
            FlagKind::Soft => format!("soft: {}", f.message),
        })
        .collect()
}

fn start_point(setup: &Setup) -> Vec<f64> {
    let cell = setup.options.cell;
    setup
        .options
        .x0
        .clone()
        .unwrap_or_else(|| setup.problem.default_x0())
        .into_iter()
        .map(|v| cell.quantize(v))
        .collect()
}

/// Drive the simulator one event at a time, logging each commit.
fn simulate<W: Write>(setup: &Setup, log: &mut LogWriter<W>, events: &mut Vec<Event>) -> Result<RunStats> {
    let opts = &setup.options;
    let a = &setup.asynchrony;
    let x0 = start_point(setup);
    if x0.len() != setup.problem.dim() {
        return Err(CliError::Config(format!("x0 has {} entries, problem has {}", x0.len(), setup.problem.dim())));
    }
    let mut state = OptimizerState::new(&x0, a.cores(), a.staleness, opts.momentum, opts.cell)?;
    let mut gen = EventGenerator::new(a.clone(), setup.problem.num_samples())?;
    let (mut virtual_time, mut max_delay) = (0.0f64, 0u32);
    for _ in 0..opts.budget {
        let ev = gen.next_event();
        let mode = setup.plan.mode_at(ev.k, opts.budget);
        let mult = setup.plan.multiplier_at(ev.k, opts.budget);
        let r = state.step(&ev, mode, mult, &a.partition, &setup.problem, &setup.schedule)?;
        virtual_time = virtual_time.max(r.time);
        max_delay = max_delay.max(r.delays.iter().copied().max().unwrap_or(0));
        log.record(&r)?;
        events.push(ev);
    }
    Ok(RunStats {
        final_x: state.current(),
        iterations: opts.budget,
        virtual_time,
        max_delay,
    })
}

fn write_all<W: Write>(log: &mut LogWriter<W>, records: &[TraceRecord]) -> Result<()> {
    records.iter().try_for_each(|r| log.record(r))
}

/// What a finished `run` produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: PathBuf,
    pub footer: Footer,
}

/// Execute a run and write its log. A run stopped by an error leaves a
/// log ending in a truncation marker.
pub fn cmd_run(config_path: &Path, overrides: Overrides, out: Option<&Path>) -> Result<RunOutcome> {
    let (raw, resolved, setup) = prepare(config_path, overrides)?;
    check_schedule(&resolved, &setup)?;
    warn_oversubscription(&resolved);
    let path = log_path(&raw, config_path, out);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    }
    let file = File::create(&path).map_err(CliError::io(format!("creating {}", path.display())))?;
    let cell = setup.options.cell;
    let header = Header::new(resolved.clone(), start_point(&setup), cell);
    let mut log = LogWriter::new(BufWriter::new(file), &header)?;
    let started = Instant::now();

    let result: Result<(RunStats, Vec<String>)> = (|| match (resolved.algorithm, resolved.executor) {
        (Algorithm::Sequential, _) => {
            let t = run_sequential(&setup.asynchrony, &setup.problem, &setup.schedule, &setup.options)?;
            write_all(&mut log, &t.records)?;
            Ok((RunStats::of_trace(&t), Vec::new()))
        }
        (_, Executor::Simulated) => {
            let mut events = Vec::with_capacity(resolved.budget as usize);
            let stats = simulate(&setup, &mut log, &mut events)?;
            let flags = if events.is_empty() {
                Vec::new()
            } else {
                model_flags(&validate_model(&events, &setup.asynchrony, DEFAULT_WINDOW)?)
            };
            Ok((stats, flags))
        }
        (_, Executor::Threaded) => {
            let t = spawn_run(
                &setup.asynchrony,
                &setup.problem,
                &setup.schedule,
                &setup.plan,
                &setup.options,
                resolved.lock,
            )?;
            write_all(&mut log, &t.records)?;
            let report = measure_delays(&t, resolved.asynchrony.staleness)?;
            let mut flags = Vec::new();
            if report.exceeds_declared {
                flags.push(format!(
                    "soft: realized staleness {} exceeds the declared bound {}",
                    report.max_delay, resolved.asynchrony.staleness
                ));
            }
            Ok((RunStats::of_trace(&t), flags))
        }
    })();

    let (stats, flags) = match result {
        Ok(v) => v,
        Err(e) => {
            log.truncate(&e.to_string())?;
            return Err(e);
        }
    };
    let footer = footer(&setup, stats, flags, started.elapsed().as_secs_f64())?;
    log.footer(&footer)?;
    for f in &footer.flags {
        eprintln!("warning: {f}");
    }
    if let Some(hard) = footer.flags.iter().find(|f| f.starts_with("hard")) {
        return Err(CliError::Violation(hard.clone()));
    }
    Ok(RunOutcome { log: path, footer })
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn schedule_text(out: &mut String, config: &RunConfig, report: &ScheduleReport) {
    let _ = writeln!(out, "schedule {:?} over horizon {}", config.schedule, report.horizon);
    let _ = writeln!(out, "  (i) divergent integral: {}", yes(report.divergent_integral));
    let _ = writeln!(out, "  (ii) decays to zero: {}", yes(report.decays));
    let sups: Vec<String> = report.slow_variation.iter().map(|(s, v)| format!("s={s}: {v:.3e}")).collect();
    let _ = writeln!(
        out,
        "  (iii) slow variation {}, decreasing: {}",
        sups.join(", "),
        yes(report.slow_variation_decreasing)
    );
    if report.accepted() {
        let _ = writeln!(out, "  accepted");
    } else {
        let _ = writeln!(out, "  rejected: {}", report.failures.join("; "));
    }
}

fn model_text(out: &mut String, report: &ModelReport, staleness: u32, p_min: f64) {
    let _ = writeln!(
        out,
        "model: {} events, max delay {} (bound {staleness}), {} delay violations",
        report.events, report.max_delay, report.delay_violations
    );
    let fr: Vec<String> = report.update_fraction.iter().map(|f| format!("{f:.4}")).collect();
    let _ = writeln!(out, "  update fraction per core: {}", fr.join(" "));
    let wf: Vec<String> = report.window_fraction_min.iter().map(|f| format!("{f:.4}")).collect();
    let _ = writeln!(out, "  smallest windowed fraction per core ({} events): {}", report.window, wf.join(" "));
    if let Some(lowest) = report.frequencies.iter().min_by(|a, b| a.frequency.total_cmp(&b.frequency)) {
        let _ = writeln!(
            out,
            "  lowest conditional selection frequency {:.4} over {} classes (p_min {p_min})",
            lowest.frequency,
            report.frequencies.len()
        );
    }
    if report.flags.is_empty() {
        let _ = writeln!(out, "  flags: none");
    }
    for f in model_flags(report) {
        let _ = writeln!(out, "  flag {f}");
    }
}

/// Print schedule checks and a dry-run model validation of `events`
/// generated events. Fails like `run` on a rejected schedule and with a
/// violation on any hard flag.
pub fn cmd_validate(config_path: &Path, overrides: Overrides, events: usize, out: &mut impl Write) -> Result<()> {
    let (_, resolved, setup) = prepare(config_path, overrides)?;
    let mut text = String::new();
    let report = validate_schedule(&resolved.schedule, schedule_horizon(&setup))?;
    schedule_text(&mut text, &resolved, &report);
    let generated = EventGenerator::new(setup.asynchrony.clone(), setup.problem.num_samples())?.take(events.max(1));
    let model = validate_model(&generated, &setup.asynchrony, DEFAULT_WINDOW)?;
    model_text(&mut text, &model, setup.asynchrony.staleness, setup.asynchrony.p_min);
    out.write_all(text.as_bytes()).map_err(CliError::io("writing report"))?;
    if !report.accepted() && resolved.schedule_policy == SchedulePolicy::Reject {
        return Err(CliError::Config(format!("schedule rejected: {}", report.failures.join("; "))));
    }
    if model.has_hard_flag() {
        return Err(CliError::Violation(model_flags(&model).join("; ")));
    }
    warn_oversubscription(&resolved);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnostic {
    Interpolation,
    Gaps,
    Martingale,
    Bias,
    Fraction,
}

impl Diagnostic {
    pub fn as_str(&self) -> &'static str {
        match self {
            Diagnostic::Interpolation => "interpolation",
            Diagnostic::Gaps => "gaps",
            Diagnostic::Martingale => "martingale",
            Diagnostic::Bias => "bias",
            Diagnostic::Fraction => "fraction",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiagParams {
    /// Interpolation start time.
    pub sigma: f64,
    /// Gap curve spacing in iterations; about 1000 points when `None`.
    pub stride: Option<usize>,
    pub eps: Vec<f64>,
    /// Time-fraction window; the whole run when `None`.
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub gap_radius: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for DiagParams {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            stride: None,
            eps: vec![0.01, 0.05, 0.1, f64::INFINITY],
            from: None,
            to: None,
            gap_radius: None,
            out_dir: None,
        }
    }
}

fn csv_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(CliError::io(format!("creating {}", path.display())))
}

/// Write the requested diagnostic CSVs for a run log; returns their paths.
pub fn cmd_diag(log_path: &Path, which: Diagnostic, params: &DiagParams) -> Result<Vec<PathBuf>> {
    let log = RunLog::read(log_path)?;
    let setup = log.header.config.setup()?;
    let problem = match params.gap_radius {
        Some(r) => setup.problem.with_gap_radius(r),
        None => setup.problem.clone(),
    };
    let blocks = setup.asynchrony.partition.blocks().to_vec();
    let trace = log.trace();
    let dir = params
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("PASSM_OUT_DIR").map(PathBuf::from))
        .or_else(|| log_path.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let stem = log_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let named = |suffix: &str| dir.join(format!("{stem}.{suffix}.csv"));
    let mut written = Vec::new();
    match which {
        Diagnostic::Interpolation => {
            let ip = build_interpolation(&trace, &blocks, params.sigma)?;
            for (i, b) in ip.blocks.iter().enumerate() {
                let path = named(&format!("interpolation.b{i}"));
                let mut f = csv_file(&path)?;
                let mut text = String::from("step,t,tau");
                for j in &b.components {
                    let _ = write!(text, ",x{j}");
                }
                text.push('\n');
                for k in 0..=b.len() {
                    let _ = write!(text, "{},{},{}", k, b.step_clock[k], b.weighted_clock[k]);
                    for v in &b.values[k] {
                        let _ = write!(text, ",{v}");
                    }
                    text.push('\n');
                }
                f.write_all(text.as_bytes()).map_err(CliError::io(format!("writing {}", path.display())))?;
                written.push(path);
            }
        }
        Diagnostic::Gaps => {
            let stride = params.stride.unwrap_or_else(|| (trace.len() / 1000).max(1));
            let curve = stationarity_curve(&trace, &problem, &blocks, stride)?;
            let path = named("gaps");
            write_stationarity_csv(csv_file(&path)?, &curve)?;
            written.push(path);
        }
        Diagnostic::Martingale => {
            let path = named("martingale");
            write_martingale_csv(csv_file(&path)?, &martingale_diag(&trace, &problem)?)?;
            written.push(path);
        }
        Diagnostic::Bias => {
            let path = named("bias");
            write_bias_csv(csv_file(&path)?, &bias_diag(&trace, &problem)?)?;
            written.push(path);
        }
        Diagnostic::Fraction => {
            let from = params.from.unwrap_or(0.0);
            let to = params.to.unwrap_or_else(|| trace_span(&trace));
            let fractions = time_fraction_in_set(&trace, &problem, &params.eps, from, to)?;
            let path = named("fraction");
            let mut text = String::from("eps,fraction\n");
            for (e, f) in params.eps.iter().zip(&fractions) {
                let _ = writeln!(text, "{e},{f}");
            }
            csv_file(&path)?
                .write_all(text.as_bytes())
                .map_err(CliError::io(format!("writing {}", path.display())))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Aligned summary table over logs of the same problem.
pub fn cmd_compare(paths: &[PathBuf]) -> Result<String> {
    if paths.len() < 2 {
        return Err(CliError::Compare("need at least two logs".into()));
    }
    let logs: Vec<RunLog> = paths.iter().map(|p| RunLog::read(p)).collect::<Result<_>>()?;
    let problem = &logs[0].header.config.problem;
    let mut rows = vec![[
        "log".to_string(),
        "algorithm".into(),
        "executor".into(),
        "final loss".into(),
        "full gap".into(),
        "max block gap".into(),
        "iterations".into(),
        "wall s".into(),
    ]];
    for (path, log) in paths.iter().zip(&logs) {
        if &log.header.config.problem != problem {
            return Err(CliError::Compare(format!(
                "{} runs a different problem than {}",
                path.display(),
                paths[0].display()
            )));
        }
        let f = log
            .footer()
            .ok_or_else(|| CliError::Compare(format!("{} has no footer (truncated run)", path.display())))?;
        let c = &log.header.config;
        rows.push([
            path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            c.algorithm.as_str().into(),
            match c.executor {
                Executor::Simulated => "simulated".into(),
                Executor::Threaded => "threaded".into(),
            },
            format!("{:.12e}", f.final_loss),
            format!("{:.4e}", f.final_gap),
            format!("{:.4e}", f.block_gaps.iter().copied().fold(0.0, f64::max)),
            f.iterations.to_string(),
            format!("{:.3}", f.wall.elapsed_s),
        ]);
    }
    let widths: Vec<usize> = (0..rows[0].len()).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    Ok(out)
}
