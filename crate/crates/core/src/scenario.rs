//! Scenario execution: turns a validated [`ScenarioConfig`] into named
//! output files. Nothing here touches the filesystem, the clock or the
//! environment, so identical inputs give byte-identical outputs.

use std::fmt::Write as _;

use rand::SeedableRng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::blowup::{
    blowup_rate_monitor, certify, comparison_check, design_blowup_data, BlowupDesign, BlowupReport, DesignSpace,
    DIAGNOSTICS_HEADER,
};
use crate::characteristics::CharacteristicSet;
use crate::config::{Bump, InitialData, ScenarioConfig, ScenarioKind, COLLISION_TIMES};
use crate::dynamics::{run_with, RunRecord, RunStatus};
use crate::error::{Result, SqqError};
use crate::grid::{FieldState, Grid};
use crate::peakon::{integrate_until_collision, peakon_field, OdeVariant, PeakonTrain, TwoPeakon};
use crate::weakform::{identity_check, weak_residual, Identity, PeakonInstant, TestFunction};

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Config hash and component versions, written as the first line of every
/// CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_sha256: String,
    pub versions: String,
}

impl Provenance {
    /// `extra` lists further components as `(name, version)`.
    pub fn new(config_bytes: &[u8], extra: &[(&str, &str)]) -> Self {
        let digest = Sha256::digest(config_bytes);
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        let mut versions = format!("sqq-core={}", env!("CARGO_PKG_VERSION"));
        for (name, v) in extra {
            let _ = write!(versions, " {name}={v}");
        }
        Self {
            config_sha256: hex,
            versions,
        }
    }

    pub fn comment_line(&self) -> String {
        format!("# config_sha256={} {}", self.config_sha256, self.versions)
    }
}

/// CSV text under construction.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(prov: &Provenance, header: &str) -> Self {
        let mut text = prov.comment_line();
        text.push('\n');
        text.push_str(header);
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        self.raw(&cells);
    }

    pub fn raw(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Ran to completion or answered the question asked.
    Completed,
    BlowupDetected,
    /// The run stopped on a CFL collapse.
    Breakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub files: Vec<OutputFile>,
    pub outcome: Outcome,
}

/// Inputs that come from outside the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScenarioEnv {
    /// Permutes the blow-up design search order.
    pub search_seed: Option<u64>,
}

/// Subcommands and the scenario kinds each accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Peakon,
    Simulate,
    Verify,
    Blowup,
}

impl Command {
    pub fn accepts(self, kind: ScenarioKind) -> bool {
        matches!(
            (self, kind),
            (Command::Peakon, ScenarioKind::PeakonSingle | ScenarioKind::PeakonTwo)
                | (Command::Simulate, ScenarioKind::Simulate)
                | (Command::Verify, ScenarioKind::Verify)
                | (Command::Blowup, ScenarioKind::BlowupCertify | ScenarioKind::BlowupRun)
        )
    }
}

pub fn run_scenario(cfg: &ScenarioConfig, prov: &Provenance, env: &ScenarioEnv) -> Result<ScenarioOutput> {
    cfg.validate()?;
    match cfg.kind {
        ScenarioKind::PeakonSingle | ScenarioKind::PeakonTwo => cmd_peakon(cfg, prov),
        ScenarioKind::Simulate => cmd_simulate(cfg, prov, env),
        ScenarioKind::Verify => cmd_verify(cfg, prov),
        ScenarioKind::BlowupCertify | ScenarioKind::BlowupRun => cmd_blowup(cfg, prov, env),
    }
}

fn file(name: impl Into<String>, contents: String) -> OutputFile {
    OutputFile {
        name: name.into(),
        contents,
    }
}

fn json_file<T: Serialize>(name: &str, value: &T) -> Result<OutputFile> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| SqqError::InvalidArgument(e.to_string()))?;
    text.push('\n');
    Ok(file(name, text))
}

/// File name of the profile at time `t`.
pub fn profile_name(t: f64) -> String {
    format!("profile_t{}.csv", fmt_f64(t))
}

fn default_track() -> crate::config::TimeRange {
    crate::config::TimeRange {
        t0: -2.0,
        t1: 2.0,
        dt: 0.01,
    }
}

pub fn cmd_peakon(cfg: &ScenarioConfig, prov: &Provenance) -> Result<ScenarioOutput> {
    let grid = cfg.build_grid()?;
    let params = cfg.peakon.unwrap_or_default();
    let times = cfg.profile_times.clone().unwrap_or_else(|| COLLISION_TIMES.to_vec());
    let track = cfg.track.unwrap_or_else(default_track);
    let mut files = Vec::new();
    let mut traj = Csv::new(prov, "t,q1,q2");

    if cfg.kind == ScenarioKind::PeakonSingle {
        // A lone peakon is written as a coincident pair.
        let pk = params.single()?;
        for t in track.samples() {
            traj.row(&[t, pk.position(t), pk.position(t)]);
        }
        for &t in &times {
            let mut csv = Csv::new(prov, "x,u,v");
            for x in grid.nodes() {
                let (u, v) = pk.eval(t, x);
                csv.row(&[x, u, v]);
            }
            files.push(file(profile_name(t), csv.finish()));
        }
    } else {
        let amps = params.pair()?;
        for t in track.samples() {
            let pk = TwoPeakon::closed_form_at(amps, params.separation, t)?;
            traj.row(&[t, pk.q1, pk.q2]);
        }
        for &t in &times {
            let pk = TwoPeakon::closed_form_at(amps, params.separation, t)?;
            let mut csv = Csv::new(prov, "x,u,v");
            for x in grid.nodes() {
                let (u, v) = pk.eval(x);
                csv.row(&[x, u, v]);
            }
            files.push(file(profile_name(t), csv.finish()));
        }
        if let Some(ode) = cfg.ode {
            let variant = params.variant.unwrap_or_default();
            let start = TwoPeakon::closed_form_at(amps, params.separation, ode.t0)?;
            let partial = integrate_until_collision(&start, ode.t0, ode.t1, ode.dt, variant)?;
            let mut csv = Csv::new(prov, "t,q1,q2");
            for s in &partial.samples {
                csv.row(&[s.t, s.q1, s.q2]);
            }
            files.push(file("trajectory_ode.csv", csv.finish()));
        }
    }
    files.insert(0, file("trajectory.csv", traj.finish()));
    Ok(ScenarioOutput {
        files,
        outcome: Outcome::Completed,
    })
}

pub fn cmd_verify(cfg: &ScenarioConfig, prov: &Provenance) -> Result<ScenarioOutput> {
    let params = cfg.peakon.unwrap_or_default();
    let vc = cfg.verify.clone().unwrap_or_default();
    let mut candidates: Vec<(String, PeakonInstant, f64)> = Vec::new();
    let single = params.single().ok();
    if let Some(pk) = single {
        let center = vc.phi_center.unwrap_or(pk.position(vc.t) + 8.0 / 3.0);
        candidates.push(("single".into(), PeakonInstant::single(&pk, vc.t), center));
    } else {
        let amps = params.pair()?;
        let pk = TwoPeakon::closed_form_at(amps, params.separation, vc.t)?;
        let center = vc.phi_center.unwrap_or(0.5 * (pk.q1 + pk.q2));
        for (name, variant) in [
            ("pair-corrected", OdeVariant::Corrected),
            ("pair-printed", OdeVariant::Printed),
            ("pair-transport", OdeVariant::Transport),
        ] {
            candidates.push((name.into(), PeakonInstant::pair(&pk, variant)?, center));
        }
    }
    let mut csv = Csv::new(prov, "candidate,level,residual_u,residual_v,estimated_order");
    for (name, cand, center) in &candidates {
        let phi = TestFunction::new(*center, vc.phi_half_width);
        for &level in &vc.levels {
            let r = weak_residual(cand, &phi, level)?;
            csv.raw(&[
                name.clone(),
                level.to_string(),
                fmt_f64(r.residual_u),
                fmt_f64(r.residual_v),
                r.estimated_order.map(fmt_f64).unwrap_or_default(),
            ]);
        }
    }
    let mut files = vec![file("residuals.csv", csv.finish())];
    if let Some(pk) = single {
        let level = vc.levels.iter().copied().max().unwrap_or(10);
        let mut rng = rand::rngs::StdRng::seed_from_u64(0);
        let mut ids = Csv::new(prov, "identity,deviation");
        for which in Identity::ALL {
            let dev = identity_check(which, pk.c1, pk.c2, level, &mut rng)?;
            ids.raw(&[format!("{which:?}"), fmt_f64(dev)]);
        }
        files.push(file("identities.csv", ids.finish()));
    }
    Ok(ScenarioOutput {
        files,
        outcome: Outcome::Completed,
    })
}

fn sum_bumps(grid: &Grid, bumps: &[Bump], shape: fn(f64) -> f64) -> Vec<f64> {
    grid.sample(|x| {
        bumps
            .iter()
            .map(|b| b.amplitude * shape(grid.wrap(x - b.center) / b.width))
            .sum()
    })
}

fn sech2(s: f64) -> f64 {
    1.0 / s.cosh().powi(2)
}

fn gauss(s: f64) -> f64 {
    (-s * s).exp()
}

/// Initial densities of a run, and the design when the search produced them.
pub fn initial_data(
    cfg: &ScenarioConfig,
    grid: &Grid,
    env: &ScenarioEnv,
) -> Result<(Vec<f64>, Vec<f64>, Option<BlowupDesign>)> {
    let init = cfg
        .initial
        .as_ref()
        .ok_or_else(|| SqqError::Config("initial: required".into()))?;
    Ok(match init {
        InitialData::Zero => (vec![0.0; grid.cells()], vec![0.0; grid.cells()], None),
        InitialData::Sech2 { m, n } => (sum_bumps(grid, m, sech2), sum_bumps(grid, n, sech2), None),
        InitialData::Gaussian { m, n } => (sum_bumps(grid, m, gauss), sum_bumps(grid, n, gauss), None),
        InitialData::Peakon { sigma } => {
            let params = cfg.peakon.unwrap_or_default();
            let train = match params.single() {
                Ok(pk) => PeakonTrain::single(&pk, 0.0),
                Err(_) => {
                    let pk = TwoPeakon::closed_form_at(params.pair()?, params.separation, 0.0)?;
                    PeakonTrain::pair(&pk)
                }
            };
            let s = peakon_field(&train, 0.0, grid, Some(*sigma))?;
            (s.m, s.n, None)
        }
        InitialData::Design {
            budget,
            target_slope,
            min_margin,
        } => {
            let section = cfg.blowup.unwrap_or_default();
            let defaults = DesignSpace::default();
            let space = DesignSpace {
                x0: section.x0,
                target_slope: target_slope.unwrap_or(defaults.target_slope),
                min_margin: min_margin.unwrap_or(defaults.min_margin),
                ..defaults
            };
            let d = design_blowup_data(grid, &space, section.delta_mode, *budget, env.search_seed)?;
            (d.m0.clone(), d.n0.clone(), Some(d))
        }
    })
}

#[derive(Serialize)]
struct RunSummary<'a> {
    status: &'a str,
    t_star: Option<f64>,
    steps: usize,
    t_final: f64,
}

fn status_parts(status: RunStatus) -> (&'static str, Option<f64>, Outcome) {
    match status {
        RunStatus::Completed => ("completed", None, Outcome::Completed),
        RunStatus::BlowupDetected(t) => ("blowup_detected", Some(t), Outcome::BlowupDetected),
        RunStatus::CflCollapse(t) => ("cfl_collapse", Some(t), Outcome::Breakdown),
    }
}

fn diagnostics_csv(prov: &Provenance, rec: &RunRecord) -> String {
    let mut csv = Csv::new(prov, DIAGNOSTICS_HEADER);
    for d in &rec.diagnostics {
        csv.row(&d.values());
    }
    csv.finish()
}

fn characteristics_csv(prov: &Provenance, set: &CharacteristicSet) -> String {
    let mut csv = Csv::new(prov, "t,seed,x0,q,qx,W,M,N");
    for s in &set.samples {
        for (i, &x0) in set.seeds().iter().enumerate() {
            csv.row(&[
                s.t,
                i as f64,
                x0,
                s.q[i],
                s.qx[i],
                s.transport[i],
                s.slope[i],
                s.density[i],
            ]);
        }
    }
    csv.finish()
}

fn snapshot_csv(prov: &Provenance, grid: &Grid, s: &FieldState) -> String {
    let mut csv = Csv::new(prov, "x,m,n,u,v,W,M");
    for j in 0..grid.cells() {
        csv.row(&[grid.x(j), s.m[j], s.n[j], s.u[j], s.v[j], s.transport[j], s.slope[j]]);
    }
    csv.finish()
}

/// A run with optional characteristics and snapshots.
fn execute_run(
    cfg: &ScenarioConfig,
    prov: &Provenance,
    grid: &Grid,
    m0: Vec<f64>,
    n0: Vec<f64>,
    seeds: Vec<f64>,
) -> Result<(RunRecord, Option<CharacteristicSet>, Vec<OutputFile>)> {
    let mut set = if seeds.is_empty() {
        None
    } else {
        Some(CharacteristicSet::new(seeds)?)
    };
    let mut snapshots = Vec::new();
    let keep = cfg.output.snapshots;
    let rec = run_with(m0, n0, grid, &cfg.solver_config(), set.as_mut(), &mut |s| {
        if keep {
            let k = snapshots.len();
            snapshots.push(file(format!("snapshot_{k:05}.csv"), snapshot_csv(prov, grid, s)));
        }
    })?;
    let mut files = vec![file("diagnostics.csv", diagnostics_csv(prov, &rec))];
    let (status, t_star, _) = status_parts(rec.status);
    files.push(json_file(
        "status.json",
        &RunSummary {
            status,
            t_star,
            steps: rec.steps,
            t_final: rec.final_state.t,
        },
    )?);
    if let Some(set) = &set {
        files.push(file("characteristics.csv", characteristics_csv(prov, set)));
    }
    files.extend(snapshots);
    Ok((rec, set, files))
}

pub fn cmd_simulate(cfg: &ScenarioConfig, prov: &Provenance, env: &ScenarioEnv) -> Result<ScenarioOutput> {
    let grid = cfg.build_grid()?;
    let (m0, n0, _) = initial_data(cfg, &grid, env)?;
    let (rec, _, files) = execute_run(cfg, prov, &grid, m0, n0, cfg.seeds.clone())?;
    Ok(ScenarioOutput {
        files,
        outcome: status_parts(rec.status).2,
    })
}

pub fn cmd_blowup(cfg: &ScenarioConfig, prov: &Provenance, env: &ScenarioEnv) -> Result<ScenarioOutput> {
    let grid = cfg.build_grid()?;
    let section = cfg.blowup.unwrap_or_default();
    let (m0, n0, design) = initial_data(cfg, &grid, env)?;
    let mut report = match &design {
        Some(d) => d.report.clone(),
        None => certify(&m0, &n0, &grid, section.x0, section.delta_mode)?,
    };
    let mut files = Vec::new();
    if let Some(d) = &design {
        files.push(json_file("design.json", &d.params)?);
    }
    if cfg.kind == ScenarioKind::BlowupCertify {
        files.insert(0, json_file("report.json", &report)?);
        return Ok(ScenarioOutput {
            files,
            outcome: Outcome::Completed,
        });
    }

    let (rec, set, run_files) = execute_run(cfg, prov, &grid, m0, n0, vec![report.x0])?;
    let set = set.expect("blow-up runs always track x0");
    let (status, t_star, outcome) = status_parts(rec.status);
    report.status = status.into();
    report.detected_t0 = t_star.filter(|_| matches!(rec.status, RunStatus::BlowupDetected(_)));
    if report.condition_met {
        let cmp = comparison_check(&set, 0, &report)?;
        let mut csv = Csv::new(prov, "t,s1,s2,scale1,scale2");
        for k in 0..cmp.t.len() {
            csv.row(&[cmp.t[k], cmp.s1[k], cmp.s2[k], cmp.scale1[k], cmp.scale2[k]]);
        }
        files.push(file("comparison.csv", csv.finish()));
    }
    if let Some(t0) = report.t1.or(report.detected_t0) {
        let mon = blowup_rate_monitor(&set.times(), &set.slope_along(0), t0);
        let mut csv = Csv::new(prov, "t,product,running_min");
        for (&(t, p), &low) in mon.samples.iter().zip(&mon.running_min) {
            csv.row(&[t, p, low]);
        }
        files.push(file("rate.csv", csv.finish()));
        report.rate_samples = mon.samples;
    }
    files.insert(0, json_file("report.json", &report)?);
    files.extend(run_files);
    Ok(ScenarioOutput { files, outcome })
}

/// Parses the blow-up report JSON emitted by [`cmd_blowup`].
pub fn parse_report(text: &str) -> Result<BlowupReport> {
    serde_json::from_str(text).map_err(|e| SqqError::Config(e.to_string()))
}
