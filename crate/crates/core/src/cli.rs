//! Subcommand runners behind the `ppmsearch` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::experiment::{self, Method};
use crate::output::OutputDir;
use crate::particle::write_particles_csv;
use crate::ppm::{build_ppm, AllocParams};

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_ENV: &str = "PPMSEARCH_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Trial,
    Curve,
    Sweep,
    Ablation,
    Deviation,
}

/// Flags shared by every subcommand. Each maps to one config field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// `seed`
    pub seed: Option<u64>,
    /// `experiment.jobs`
    pub jobs: Option<usize>,
    /// `output_dir`
    pub out: Option<PathBuf>,
    /// `experiment.trial_method`
    pub method: Option<Method>,
    /// `experiment.trial_budget`
    pub budget: Option<u64>,
    /// Raw `key=value` pairs.
    pub set: Vec<String>,
}

/// Loads the scenario and applies the command-line overrides.
pub fn effective_config(path: Option<&Path>, ov: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load_with_overrides(path, &ov.set)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(j) = ov.jobs {
        cfg.experiment.jobs = j;
    }
    if let Some(o) = &ov.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(m) = ov.method {
        cfg.experiment.trial_method = m;
    }
    if let Some(b) = ov.budget {
        cfg.experiment.trial_budget = b;
    }
    Ok(cfg)
}

/// Runs one subcommand; summaries go to `stdout`. Returns the process exit
/// code.
pub fn run(cmd: Command, path: Option<&Path>, ov: &Overrides, stdout: &mut dyn Write) -> Result<i32> {
    let cfg = effective_config(path, ov)?;
    let issues = cfg.issues();
    if cmd == Command::Validate {
        if issues.is_empty() {
            writeln!(stdout, "ok")?;
            return Ok(0);
        }
        for i in &issues {
            writeln!(stdout, "error: {i}")?;
        }
        return Ok(1);
    }
    if !issues.is_empty() {
        return Err(Error::Config(issues.join("; ")));
    }
    let root = cfg
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = OutputDir::create(&root)?;
    match write_outputs(cmd, &cfg, &mut out, stdout) {
        Ok(()) => Ok(0),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn write_outputs(
    cmd: Command,
    cfg: &ScenarioConfig,
    out: &mut OutputDir,
    stdout: &mut dyn Write,
) -> Result<()> {
    let text = cfg.to_toml()?;
    out.write_with("config.toml", |w| Ok(w.write_all(text.as_bytes())?))?;
    match cmd {
        Command::Validate => unreachable!("handled before outputs are opened"),
        Command::Trial => trial(cfg, out, stdout),
        Command::Curve => {
            let rows = experiment::recall_curve(cfg)?;
            out.write_with("recall_curve.csv", |w| experiment::write_curve_csv(w, &rows))?;
            for r in &rows {
                writeln!(
                    stdout,
                    "{} budget={} recall={:.3}±{:.3} ap={:.3} trials={} wall={:.0}ms",
                    r.method, r.budget, r.recall_mean, r.recall_std, r.ap_mean, r.trials, r.wall_time_ms
                )?;
            }
            Ok(())
        }
        Command::Sweep => {
            let rows = experiment::proportion_sweep(cfg)?;
            out.write_with("proportion_sweep.csv", |w| experiment::write_sweep_csv(w, &rows))?;
            for r in &rows {
                writeln!(
                    stdout,
                    "proportion={:.2} {} recall={:.3}±{:.3} trials={}",
                    r.proportion, r.method, r.recall_mean, r.recall_std, r.trials
                )?;
            }
            Ok(())
        }
        Command::Ablation => {
            let rows = experiment::ablation(cfg)?;
            out.write_with("ablation.csv", |w| experiment::write_ablation_csv(w, &rows))?;
            for r in &rows {
                writeln!(
                    stdout,
                    "{} {} ppm recall={:.3} ap={:.3} sim_fps={:.0} wall_fps={:.0}",
                    r.preset,
                    if r.ppm { "with" } else { "without" },
                    r.recall_mean,
                    r.ap_mean,
                    r.sim_fps,
                    r.wall_fps
                )?;
            }
            Ok(())
        }
        Command::Deviation => {
            let rows = experiment::deviation_study(cfg)?;
            out.write_with("deviation.csv", |w| experiment::write_deviation_csv(w, &rows))?;
            for r in &rows {
                writeln!(
                    stdout,
                    "voting={} object{} moving={} found={} dx={:.1}px dy={:.1}px",
                    if r.voting { "on" } else { "off" },
                    r.object,
                    r.moving,
                    r.found,
                    r.dx_mean,
                    r.dy_mean
                )?;
            }
            Ok(())
        }
    }
}

fn trial(cfg: &ScenarioConfig, out: &mut OutputDir, stdout: &mut dyn Write) -> Result<()> {
    let ex = &cfg.experiment;
    let (result, trace) = experiment::single_trial(cfg, ex.trial_method, ex.trial_budget)?;

    out.write_with("trial.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record([
            "method",
            "seed",
            "budget",
            "objects",
            "found",
            "recall",
            "vacuous",
            "ap",
            "moves",
            "views",
            "elapsed_sim_ms",
        ])?;
        c.write_record([
            result.method.to_string(),
            result.seed.to_string(),
            result.budget.to_string(),
            result.n_objects.to_string(),
            result.found.len().to_string(),
            format!("{:.6}", result.recall),
            result.vacuous.to_string(),
            format!("{:.6}", result.ap),
            result.moves.to_string(),
            result.views.to_string(),
            format!("{:.3}", result.elapsed_sim_ms),
        ])?;
        c.flush()?;
        Ok(())
    })?;
    out.write_with("objects.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record([
            "object", "stage", "moving", "dx_px", "dy_px", "pre_var", "post_var",
        ])?;
        for (id, f) in &result.found {
            c.write_record([
                id.to_string(),
                f.stage.to_string(),
                f.moving.to_string(),
                format!("{:.4}", f.error_px.0),
                format!("{:.4}", f.error_px.1),
                f.pre_var.map(|v| format!("{v:.8}")).unwrap_or_default(),
                format!("{:.8}", f.post_var),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    out.write_with("scan_log.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["seq", "theta_h", "theta_v", "elapsed_ms", "n_visible"])?;
        for (seq, h, v, t, n) in &trace.scans {
            c.write_record([
                seq.to_string(),
                h.to_string(),
                v.to_string(),
                t.to_string(),
                n.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    out.write_with("detections.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["stage", "particle", "theta_h", "theta_v", "p", "var_h", "var_v"])?;
        for (stage, k, d) in &trace.detections {
            c.write_record([
                stage.to_string(),
                k.to_string(),
                d.center.h.to_string(),
                d.center.v.to_string(),
                d.confidence.to_string(),
                d.var_h.to_string(),
                d.var_v.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    out.write_with("refinement.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record([
            "stage",
            "window",
            "center_h",
            "center_v",
            "radius_h",
            "radius_v",
            "n_members",
        ])?;
        for (stage, i, win) in &trace.windows {
            c.write_record([
                stage.to_string(),
                i.to_string(),
                win.center.h.to_string(),
                win.center.v.to_string(),
                win.radius.0.to_string(),
                win.radius.1.to_string(),
                win.members.len().to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    out.write_with("particles.csv", |w| write_particles_csv(w, &trace.particles))?;
    if matches!(ex.trial_method, Method::PpmPs | Method::PpmOnly | Method::Rpm) {
        let scene = experiment::build_scene(cfg, &cfg.scene, 0)?;
        let params = AllocParams {
            r: cfg.engine.r,
            f_sub: 1.0,
        };
        let ppm = build_ppm(
            &scene,
            &cfg.segmentation,
            &scene.target_class,
            ex.trial_budget.max(1),
            params,
            result.seed,
        )?;
        out.write_with("ppm.csv", |w| ppm.write_csv(w))?;
    }
    out.write_with("events.log", |w| {
        for line in &trace.events {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    writeln!(
        stdout,
        "{} seed={} budget={} recall={:.3} ap={:.3} views={} sim={:.1}ms wall={:.1}ms",
        result.method,
        result.seed,
        result.budget,
        result.recall,
        result.ap,
        result.views,
        result.elapsed_sim_ms,
        result.wall_time_ms
    )?;
    Ok(())
}
