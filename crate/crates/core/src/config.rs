//! Strict JSON scenario configuration.
//!
//! Unknown keys are rejected at every level, and every numeric field is
//! range-checked by [`ScenarioConfig::validate`] with its key path in the
//! message.

use serde::{Deserialize, Serialize};

use crate::blowup::DeltaMode;
use crate::dynamics::SolverConfig;
use crate::error::{Result, SqqError};
use crate::grid::Grid;
use crate::peakon::{OdeVariant, PairAmplitudes, SinglePeakon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    PeakonSingle,
    PeakonTwo,
    Simulate,
    Verify,
    BlowupCertify,
    BlowupRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_length: f64,
    #[serde(rename = "N")]
    pub cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub cfl: f64,
    pub t_end: f64,
    pub flux_form: bool,
    pub m_stop: f64,
    pub snapshot_stride: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            cfl: d.cfl,
            t_end: d.t_end,
            flux_form: d.flux_form,
            m_stop: d.m_stop,
            snapshot_stride: d.snapshot_stride,
        }
    }
}

impl From<SolverSection> for SolverConfig {
    fn from(s: SolverSection) -> Self {
        SolverConfig {
            cfl: s.cfl,
            t_end: s.t_end,
            flux_form: s.flux_form,
            m_stop: s.m_stop,
            snapshot_stride: s.snapshot_stride,
        }
    }
}

/// `{c1, c2}` for a single peakon, `{A1, A2, B1, B2[, C1][, variant]}` for
/// a pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakonParams {
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub c2: Option<f64>,
    #[serde(rename = "A1", default)]
    pub a1: Option<f64>,
    #[serde(rename = "A2", default)]
    pub a2: Option<f64>,
    #[serde(rename = "B1", default)]
    pub b1: Option<f64>,
    #[serde(rename = "B2", default)]
    pub b2: Option<f64>,
    /// Separation constant of the equal-product branch.
    #[serde(rename = "C1", default)]
    pub separation: Option<f64>,
    #[serde(default)]
    pub variant: Option<OdeVariant>,
}

impl PeakonParams {
    pub fn single(&self) -> Result<SinglePeakon> {
        match (self.c1, self.c2, self.a1.or(self.a2).or(self.b1).or(self.b2)) {
            (Some(c1), Some(c2), None) => Ok(SinglePeakon::new(c1, c2)),
            _ => Err(SqqError::Config(
                "peakon: a single peakon needs exactly c1 and c2".into(),
            )),
        }
    }

    pub fn pair(&self) -> Result<PairAmplitudes> {
        match (self.a1, self.a2, self.b1, self.b2, self.c1.or(self.c2)) {
            (Some(a1), Some(a2), Some(b1), Some(b2), None) => {
                let amps = PairAmplitudes::new(a1, b1, a2, b2);
                if amps.is_equal_product() && self.separation.is_none() {
                    return Err(SqqError::Config("peakon.C1 is required when A1*B1 == A2*B2".into()));
                }
                Ok(amps)
            }
            _ => Err(SqqError::Config("peakon: a pair needs exactly A1, A2, B1, B2".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

/// Named initial-data recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// Sums of `amplitude sech^2((x - center)/width)`.
    Sech2 {
        m: Vec<Bump>,
        n: Vec<Bump>,
    },
    /// Sums of `amplitude exp(-((x - center)/width)^2)`.
    Gaussian {
        m: Vec<Bump>,
        n: Vec<Bump>,
    },
    /// Mollified peakons from the `peakon` section at `t = 0`.
    Peakon {
        sigma: f64,
    },
    /// The blow-up design search; `x0` comes from the `blowup` section.
    Design {
        budget: usize,
        #[serde(default)]
        target_slope: Option<f64>,
        #[serde(default)]
        min_margin: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRange {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

impl TimeRange {
    /// `t0, t0 + dt, ...` up to and including `t1` (to within `dt/2`).
    pub fn samples(&self) -> Vec<f64> {
        let count = ((self.t1 - self.t0) / self.dt + 0.5).floor() as usize;
        (0..=count).map(|k| self.t0 + k as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_verify_time")]
    pub t: f64,
    /// Test function centre; defaults to 8/3 to the right of a single peak,
    /// or the midpoint of a pair.
    #[serde(default)]
    pub phi_center: Option<f64>,
    #[serde(default = "default_half_width")]
    pub phi_half_width: f64,
}

fn default_levels() -> Vec<u32> {
    (6..=10).collect()
}

fn default_verify_time() -> f64 {
    0.5
}

fn default_half_width() -> f64 {
    2.0
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            t: default_verify_time(),
            phi_center: None,
            phi_half_width: default_half_width(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupSection {
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub delta_mode: DeltaMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Write a field snapshot CSV at every recorded step of a run.
    #[serde(default)]
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub peakon: Option<PeakonParams>,
    #[serde(default)]
    pub initial: Option<InitialData>,
    /// Characteristic seeds for runs.
    #[serde(default)]
    pub seeds: Vec<f64>,
    /// Times of the `x,u,v` profile files of peakon scenarios.
    #[serde(default)]
    pub profile_times: Option<Vec<f64>>,
    /// Sampling of the closed-form trajectory.
    #[serde(default)]
    pub track: Option<TimeRange>,
    /// RK4 integration of the position ODE (`dt` is the step).
    #[serde(default)]
    pub ode: Option<TimeRange>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub blowup: Option<BlowupSection>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Default profile times, straddling the collision at `t = 0`.
pub const COLLISION_TIMES: [f64; 6] = [-1.75, -1.5, -0.5, 0.0, 0.5, 1.5];

fn config_err(key: &str, msg: impl std::fmt::Display) -> SqqError {
    SqqError::Config(format!("{key}: {msg}"))
}

fn check_finite(key: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(config_err(key, "must be finite"))
    }
}

fn check_bumps(key: &str, bumps: &[Bump]) -> Result<()> {
    for (i, b) in bumps.iter().enumerate() {
        check_finite(&format!("{key}[{i}].amplitude"), b.amplitude)?;
        check_finite(&format!("{key}[{i}].center"), b.center)?;
        if !(b.width > 0.0 && b.width.is_finite()) {
            return Err(config_err(&format!("{key}[{i}].width"), "must be positive"));
        }
    }
    Ok(())
}

impl ScenarioConfig {
    /// Parses and validates; serde errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SqqError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.half_length, self.grid.cells).map_err(|e| config_err("grid", e))
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.into()
    }

    pub fn validate(&self) -> Result<()> {
        self.build_grid()?;
        SolverConfig::from(self.solver)
            .validate()
            .map_err(|e| config_err("solver", e))?;
        let needs = |present: bool, key: &str| -> Result<()> {
            if present {
                Ok(())
            } else {
                Err(config_err(key, format!("required for kind {:?}", self.kind)))
            }
        };
        if let Some(p) = &self.peakon {
            for (k, v) in [
                ("peakon.c1", p.c1),
                ("peakon.c2", p.c2),
                ("peakon.A1", p.a1),
                ("peakon.A2", p.a2),
                ("peakon.B1", p.b1),
                ("peakon.B2", p.b2),
                ("peakon.C1", p.separation),
            ] {
                if let Some(v) = v {
                    check_finite(k, v)?;
                }
            }
        }
        for (i, &s) in self.seeds.iter().enumerate() {
            check_finite(&format!("seeds[{i}]"), s)?;
        }
        if self.seeds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("seeds", "must be strictly increasing"));
        }
        if let Some(times) = &self.profile_times {
            for (i, &t) in times.iter().enumerate() {
                check_finite(&format!("profile_times[{i}]"), t)?;
            }
        }
        for (key, range) in [("track", &self.track), ("ode", &self.ode)] {
            if let Some(r) = range {
                check_finite(&format!("{key}.t0"), r.t0)?;
                check_finite(&format!("{key}.t1"), r.t1)?;
                if !(r.dt > 0.0 && r.dt.is_finite()) {
                    return Err(config_err(&format!("{key}.dt"), "must be positive"));
                }
                if r.t1 < r.t0 {
                    return Err(config_err(&format!("{key}.t1"), "must not precede t0"));
                }
                if (r.t1 - r.t0) / r.dt > 1e7 {
                    return Err(config_err(&format!("{key}.dt"), "too many samples"));
                }
            }
        }
        match &self.initial {
            Some(InitialData::Sech2 { m, n }) | Some(InitialData::Gaussian { m, n }) => {
                check_bumps("initial.m", m)?;
                check_bumps("initial.n", n)?;
            }
            Some(InitialData::Peakon { sigma }) => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(config_err("initial.sigma", "must be positive"));
                }
                needs(self.peakon.is_some(), "peakon")?;
            }
            Some(InitialData::Design {
                budget,
                target_slope,
                min_margin,
            }) => {
                if *budget == 0 {
                    return Err(config_err("initial.budget", "must be at least 1"));
                }
                if let Some(t) = target_slope {
                    if !(*t < 0.0 && t.is_finite()) {
                        return Err(config_err("initial.target_slope", "must be negative"));
                    }
                }
                if let Some(m) = min_margin {
                    if !(*m >= 0.0 && m.is_finite()) {
                        return Err(config_err("initial.min_margin", "must be nonnegative"));
                    }
                }
            }
            Some(InitialData::Zero) | None => {}
        }
        if let Some(v) = &self.verify {
            check_finite("verify.t", v.t)?;
            if v.levels.is_empty() || v.levels.iter().any(|&l| !(1..=16).contains(&l)) {
                return Err(config_err("verify.levels", "must be a non-empty list within 1..=16"));
            }
            if !(v.phi_half_width > 0.0 && v.phi_half_width.is_finite()) {
                return Err(config_err("verify.phi_half_width", "must be positive"));
            }
            if let Some(c) = v.phi_center {
                check_finite("verify.phi_center", c)?;
            }
        }
        if let Some(b) = &self.blowup {
            check_finite("blowup.x0", b.x0)?;
        }
        match self.kind {
            ScenarioKind::PeakonSingle => {
                needs(self.peakon.is_some(), "peakon")?;
                self.peakon.unwrap_or_default().single()?;
            }
            ScenarioKind::PeakonTwo => {
                needs(self.peakon.is_some(), "peakon")?;
                self.peakon.unwrap_or_default().pair()?;
            }
            ScenarioKind::Verify => {
                needs(self.peakon.is_some(), "peakon")?;
                let p = self.peakon.unwrap_or_default();
                if p.single().is_err() && p.pair().is_err() {
                    return Err(config_err("peakon", "needs {c1, c2} or {A1, A2, B1, B2}"));
                }
            }
            ScenarioKind::Simulate => {
                needs(self.initial.is_some(), "initial")?;
                if matches!(self.initial, Some(InitialData::Design { .. })) {
                    return Err(config_err("initial.family", "design data belong to blowup scenarios"));
                }
            }
            ScenarioKind::BlowupCertify | ScenarioKind::BlowupRun => {
                needs(self.initial.is_some(), "initial")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COLLISION: &str = r#"{
        "kind": "peakon-two",
        "grid": {"L": 10, "N": 800},
        "peakon": {"A1": 1, "A2": 2, "B1": 1, "B2": 5},
        "track": {"t0": -2, "t1": 2, "dt": 0.01}
    }"#;

    #[test]
    fn parses_a_minimal_config() {
        let cfg = ScenarioConfig::from_json(COLLISION).unwrap();
        assert_eq!(cfg.kind, ScenarioKind::PeakonTwo);
        assert_eq!(cfg.grid.cells, 800);
        assert_eq!(cfg.solver, SolverSection::default());
        assert_eq!(cfg.track.unwrap().samples().len(), 401);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = COLLISION.replace("\"track\"", "\"trak\"");
        let err = ScenarioConfig::from_json(&typo).unwrap_err();
        assert!(err.to_string().contains("trak"), "{err}");
        let nested = COLLISION.replace("\"B2\": 5", "\"B2\": 5, \"B3\": 1");
        assert!(ScenarioConfig::from_json(&nested).is_err());
    }

    #[test]
    fn ranges_are_checked_with_key_paths() {
        let negative = COLLISION.replace("\"N\": 800", "\"N\": -800");
        let err = ScenarioConfig::from_json(&negative).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        let odd = COLLISION.replace("\"N\": 800", "\"N\": 801");
        assert!(ScenarioConfig::from_json(&odd)
            .unwrap_err()
            .to_string()
            .contains("grid"));
        let cfl = COLLISION.replace("\"kind\"", "\"solver\": {\"cfl\": 1.5}, \"kind\"");
        assert!(ScenarioConfig::from_json(&cfl)
            .unwrap_err()
            .to_string()
            .contains("solver"));
        let dt = COLLISION.replace("\"dt\": 0.01", "\"dt\": 0");
        assert!(ScenarioConfig::from_json(&dt)
            .unwrap_err()
            .to_string()
            .contains("track.dt"));
    }

    #[test]
    fn kind_requirements() {
        let single = COLLISION.replace("peakon-two", "peakon-single");
        assert!(ScenarioConfig::from_json(&single).is_err());
        let sim = r#"{"kind": "simulate", "grid": {"L": 10, "N": 64}}"#;
        assert!(ScenarioConfig::from_json(sim)
            .unwrap_err()
            .to_string()
            .contains("initial"));
        let equal = COLLISION.replace("\"B2\": 5", "\"B2\": 0.5");
        assert!(ScenarioConfig::from_json(&equal)
            .unwrap_err()
            .to_string()
            .contains("C1"));
    }

    #[test]
    fn initial_families_parse() {
        let sim = r#"{"kind": "simulate", "grid": {"L": 10, "N": 64},
            "initial": {"family": "sech2", "m": [{"amplitude": 1, "center": 0, "width": 1}], "n": []}}"#;
        let cfg = ScenarioConfig::from_json(sim).unwrap();
        assert!(matches!(cfg.initial, Some(InitialData::Sech2 { .. })));
        let bad = sim.replace("\"width\": 1", "\"width\": 0");
        assert!(ScenarioConfig::from_json(&bad).is_err());
        let unknown = sim.replace("\"family\": \"sech2\"", "\"family\": \"sech3\"");
        assert!(ScenarioConfig::from_json(&unknown).is_err());
    }
}
