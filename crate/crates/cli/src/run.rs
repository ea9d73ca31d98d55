//! Task execution and CSV rendering.

use std::io::Write;
use std::time::Instant;

use mdiqkd::channel::{Channel, CompensationPolicy};
use mdiqkd::model::{optimize_key_rate, KeyRateModel, OptimizedKeyRate};
use mdiqkd::sources::{ParamVector, Source};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Evaluate,
    Optimize,
    ScanDistance,
    ScanCompensation,
}

impl Task {
    pub fn label(self) -> &'static str {
        match self {
            Task::Evaluate => "evaluate",
            Task::Optimize => "optimize",
            Task::ScanDistance => "scan-distance",
            Task::ScanCompensation => "scan-compensation",
        }
    }
}

/// Rendered result files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub csv: String,
    pub trace_csv: Option<String>,
}

/// Where progress and echo lines go.
pub struct Log<'a> {
    sink: &'a mut dyn Write,
    verbose: bool,
}

impl<'a> Log<'a> {
    pub fn new(sink: &'a mut dyn Write, verbose: bool) -> Self {
        Self { sink, verbose }
    }

    fn info(&mut self, line: &str) {
        let _ = writeln!(self.sink, "{line}");
    }

    fn detail(&mut self, line: &str) {
        if self.verbose {
            self.info(line);
        }
    }
}

/// SHA-256 of the canonical serialization of `cfg`.
pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

/// Six significant digits in scientific notation.
pub fn num(v: f64) -> String {
    format!("{v:.5e}")
}

fn render(hash: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).expect("in-memory write");
    for row in rows {
        wtr.write_record(row).expect("in-memory write");
    }
    let body = String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("csv output is utf-8");
    format!("# config-hash: {hash}\n{body}")
}

fn param_names() -> impl Iterator<Item = String> {
    ParamVector::<f64>::NAMES.iter().map(|s| s.to_string())
}

fn require_channel(cfg: &RunConfig, task: Task) -> Result<Channel<f64>, CliError> {
    cfg.channel()?.ok_or_else(|| {
        ConfigError::new("channel", format!("{} needs channel.stable or channel.unstable", task.label())).into()
    })
}

fn echo_channel(log: &mut Log, channel: &Channel<f64>) {
    match channel {
        Channel::Stable(c) => log.info(&format!("channel: eta_a = {}, eta_b = {}", num(c.eta_a), num(c.eta_b))),
        Channel::Unstable(c) => {
            let fmt = |levels: &[(f64, f64)]| {
                levels
                    .iter()
                    .map(|(eta, p)| format!("{}@{}", num(*eta), num(*p)))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            log.info(&format!("channel: eta_a levels {}", fmt(c.levels_a())));
            log.info(&format!("channel: eta_b levels {}", fmt(c.levels_b())));
        }
    }
}

/// Runs `task`; progress and parameter echoes go to `log`.
pub fn run(task: Task, cfg: &RunConfig, log: &mut Log) -> Result<Output, CliError> {
    cfg.validate()?;
    let hash = config_hash(cfg);
    match task {
        Task::Evaluate => evaluate(cfg, &hash, log),
        Task::Optimize => optimize(cfg, &hash, log),
        Task::ScanDistance => scan_distance(cfg, &hash, log),
        Task::ScanCompensation => scan_compensation(cfg, &hash, log),
    }
}

fn model_for(cfg: &RunConfig, channel: &Channel<f64>, policy: Option<&CompensationPolicy<f64>>) -> Result<KeyRateModel<f64>, CliError> {
    Ok(KeyRateModel::with_channel(channel, policy, cfg.detector()?, cfg.protocol_config()?))
}

fn evaluate(cfg: &RunConfig, hash: &str, log: &mut Log) -> Result<Output, CliError> {
    let params = cfg
        .task
        .params
        .ok_or_else(|| ConfigError::new("task.params", "evaluate needs the twelve source parameters"))?;
    let x = ParamVector(params);
    let channel = require_channel(cfg, Task::Evaluate)?;
    echo_channel(log, &channel);
    let model = model_for(cfg, &channel, None)?;
    let stats = model.stats(&x).map_err(CliError::compute)?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut put = |name: String, value: String| rows.push(vec![name, value]);
    for l in Source::ALL {
        for r in Source::ALL {
            let p = stats.get(l, r);
            let tag = format!("{}{}", l.label(), r.label());
            put(format!("N_{tag}"), num(p.count));
            put(format!("S_{tag}"), num(p.yield_));
            put(format!("E_{tag}"), num(p.error_rate));
        }
    }
    let rate = match model.evaluate(&x) {
        Ok(rep) => {
            put("branch".into(), format!("{:?}", rep.branch).to_lowercase());
            for (name, v) in [
                ("S_plus", rep.s_plus),
                ("S_minus", rep.s_minus),
                ("H_observed", rep.h_observed),
                ("H_lower", rep.h_lower),
                ("H_upper", rep.h_upper),
                ("H_argmin", rep.h_argmin),
                ("T_xx", rep.t_xx),
                ("s11_lower", rep.s11_lower),
                ("e11ph_upper", rep.e11ph_upper),
                ("S_zz", rep.s_zz),
                ("E_zz", rep.e_zz),
            ] {
                put(name.into(), num(v));
            }
            let clamps: Vec<String> = rep.clamps.iter().map(|c| format!("{c:?}")).collect();
            put("clamps".into(), clamps.join(" "));
            put("R_per_pair".into(), num(rep.r_per_pair));
            rep.r_per_pair
        }
        Err(e) => {
            put("no_key".into(), e.to_string());
            put("R_per_pair".into(), num(0.0));
            0.0
        }
    };
    log.info(&format!("R_per_pair = {}", num(rate)));
    Ok(Output {
        csv: render(hash, &["quantity".into(), "value".into()], &rows),
        trace_csv: None,
    })
}

fn optimize_model(
    cfg: &RunConfig,
    model: &KeyRateModel<f64>,
    log: &mut Log,
) -> Result<OptimizedKeyRate<f64>, CliError> {
    let ocfg = cfg.optimizer_config()?;
    let initial = cfg.task.initial.map(ParamVector);
    let started = Instant::now();
    let out = optimize_key_rate(model, initial.as_ref(), &ocfg, &cfg.bounds()).map_err(CliError::compute)?;
    log.detail(&format!(
        "optimized in {:.1} s, {} evaluations, R = {}",
        started.elapsed().as_secs_f64(),
        out.trace.evaluations,
        num(out.rate)
    ));
    Ok(out)
}

fn optimize(cfg: &RunConfig, hash: &str, log: &mut Log) -> Result<Output, CliError> {
    let channel = require_channel(cfg, Task::Optimize)?;
    echo_channel(log, &channel);
    let model = model_for(cfg, &channel, None)?;
    let best = optimize_model(cfg, &model, log)?;
    log.info(&format!("R_per_pair = {}", num(best.rate)));

    let mut header: Vec<String> = ["R_per_pair", "s11_lower", "e11ph_upper", "H_argmin", "E_zz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(param_names());
    let (s11, e11, h, ezz) = best
        .report
        .as_ref()
        .map_or((0.0, 0.0, 0.0, 0.0), |r| (r.s11_lower, r.e11ph_upper, r.h_argmin, r.e_zz));
    let mut row = vec![num(best.rate), num(s11), num(e11), num(h), num(ezz)];
    row.extend(best.params.0.iter().map(|&v| num(v)));

    let mut trace_header: Vec<String> = ["start", "iteration", "kind", "value", "projected"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    trace_header.extend(param_names());
    let trace_rows: Vec<Vec<String>> = best
        .trace
        .steps
        .iter()
        .map(|s| {
            let mut r = vec![
                s.start.to_string(),
                s.iteration.to_string(),
                s.kind.label().to_string(),
                num(s.value),
                s.projected.to_string(),
            ];
            r.extend(s.params.0.iter().map(|&v| num(v)));
            r
        })
        .collect();
    Ok(Output {
        csv: render(hash, &header, &[row]),
        trace_csv: Some(render(hash, &trace_header, &trace_rows)),
    })
}

fn scan_distance(cfg: &RunConfig, hash: &str, log: &mut Log) -> Result<Output, CliError> {
    let points = cfg.distance_points();
    if points.is_empty() {
        return Err(ConfigError::new("task.distances", "scan-distance needs at least one point (distances or sweep)").into());
    }
    let mut header: Vec<String> = vec!["L_A_km".into(), "L_B_km".into(), "R_per_pair".into()];
    header.extend(param_names());
    let mut rows = Vec::with_capacity(points.len());
    for (i, &[l_a, l_b]) in points.iter().enumerate() {
        let channel = cfg.distance_channel(l_a, l_b)?;
        log.detail(&format!("point {}/{}: L_A = {l_a} km, L_B = {l_b} km", i + 1, points.len()));
        echo_channel(log, &channel);
        let model = model_for(cfg, &channel, None)?;
        let best = optimize_model(cfg, &model, log)?;
        let mut row = vec![num(l_a), num(l_b), num(best.rate)];
        row.extend(best.params.0.iter().map(|&v| num(v)));
        rows.push(row);
    }
    Ok(Output {
        csv: render(hash, &header, &rows),
        trace_csv: None,
    })
}

/// Cells to run: the `(0 dB, 0 dB)` baseline first unless already listed.
pub fn cells_with_baseline(cfg: &RunConfig) -> Vec<[f64; 2]> {
    let mut cells = cfg.compensation_cells();
    if !cells.iter().any(|c| c[0] == 0.0 && c[1] == 0.0) {
        cells.insert(0, [0.0, 0.0]);
    }
    cells
}

fn scan_compensation(cfg: &RunConfig, hash: &str, log: &mut Log) -> Result<Output, CliError> {
    let channel = require_channel(cfg, Task::ScanCompensation)?;
    echo_channel(log, &channel);
    let cells = cells_with_baseline(cfg);
    let mut header: Vec<String> = ["delta_db", "eta_prime_db", "delta_linear", "eta_prime_linear", "R_per_pair"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(param_names());
    let mut rows = Vec::with_capacity(cells.len());
    for &[delta_db, prime_db] in &cells {
        let policy = CompensationPolicy::from_db(delta_db, prime_db)
            .map_err(|e| ConfigError::new("task.cells", e.to_string()))?;
        log.info(&format!(
            "cell ({delta_db} dB, {prime_db} dB): ratio threshold {}, attenuation {}",
            num(policy.delta),
            num(policy.eta_prime)
        ));
        let model = model_for(cfg, &channel, Some(&policy))?;
        let best = optimize_model(cfg, &model, log)?;
        let mut row = vec![num(delta_db), num(prime_db), num(policy.delta), num(policy.eta_prime), num(best.rate)];
        row.extend(best.params.0.iter().map(|&v| num(v)));
        rows.push(row);
    }
    Ok(Output {
        csv: render(hash, &header, &rows),
        trace_csv: None,
    })
}
