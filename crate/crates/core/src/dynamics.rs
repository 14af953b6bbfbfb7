//! Method-of-lines solver for the momentum system on the periodic grid.
//!
//! Space is first-order upwind, time is classical RK4. The step size is
//! `cfl dx / max|W|`, capped at `dx` and at `cfl / max|M|` so the local
//! compression rate stays resolved while the slope steepens.

use crate::blowup::{diagnostics_row, DiagnosticsRow};
use crate::characteristics::CharacteristicSet;
use crate::error::{ensure_finite, Result, SqqError};
use crate::grid::{FieldState, Grid, Stencil};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub cfl: f64,
    pub t_end: f64,
    /// Conservative flux differencing when true, the advective form with a
    /// source term otherwise.
    pub flux_form: bool,
    /// Blow-up is declared once `min M < -m_stop`.
    pub m_stop: f64,
    /// Diagnostics are recorded every `snapshot_stride` steps.
    pub snapshot_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cfl: 0.4,
            t_end: 1.0,
            flux_form: true,
            m_stop: 1e3,
            snapshot_stride: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SqqError::InvalidArgument(msg));
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return bad(format!("cfl must lie in (0, 1), got {}", self.cfl));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.m_stop > 0.0 && self.m_stop.is_finite()) {
            return bad(format!("m_stop must be positive, got {}", self.m_stop));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    BlowupDetected(f64),
    CflCollapse(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub times: Vec<f64>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub status: RunStatus,
    pub steps: usize,
    pub final_state: FieldState,
}

/// Time derivatives `(dm/dt, dn/dt)` of a fresh state.
pub fn rhs(state: &FieldState, grid: &Grid, flux_form: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    if !state.is_fresh() {
        return Err(SqqError::InvalidArgument("rhs needs an assembled state".into()));
    }
    ensure_finite("W", &state.transport)?;
    ensure_finite("M", &state.slope)?;
    if flux_form {
        let w_half = interface_velocity(&state.transport);
        Ok((
            flux_divergence(&w_half, &state.m, grid.dx()),
            flux_divergence(&w_half, &state.n, grid.dx()),
        ))
    } else {
        let advective = |f: &[f64]| -> Result<Vec<f64>> {
            let d = grid.derivative(f, Stencil::Upwind(&state.transport))?;
            Ok(d.iter()
                .zip(f)
                .zip(state.transport.iter().zip(&state.slope))
                .map(|((dj, fj), (w, s))| -w * dj - s * fj)
                .collect())
        };
        Ok((advective(&state.m)?, advective(&state.n)?))
    }
}

/// `W` averaged onto the interface `j + 1/2`.
fn interface_velocity(w: &[f64]) -> Vec<f64> {
    let len = w.len();
    (0..len).map(|j| 0.5 * (w[j] + w[(j + 1) % len])).collect()
}

fn flux_divergence(w_half: &[f64], f: &[f64], dx: f64) -> Vec<f64> {
    let len = f.len();
    let flux: Vec<f64> = (0..len)
        .map(|j| {
            let w = w_half[j];
            if w >= 0.0 {
                w * f[j]
            } else {
                w * f[(j + 1) % len]
            }
        })
        .collect();
    (0..len).map(|j| -(flux[j] - flux[(j + len - 1) % len]) / dx).collect()
}

/// Largest stable step for `state`, or a CFL collapse.
pub fn time_step(state: &FieldState, grid: &Grid, config: &SolverConfig) -> Result<f64> {
    let dx = grid.dx();
    let max_w = max_abs(&state.transport);
    if max_w > config.m_stop / dx {
        return Err(SqqError::CflCollapse { t: state.t, max_w });
    }
    let mut dt = dx;
    if max_w > 0.0 {
        dt = dt.min(config.cfl * dx / max_w);
    }
    let max_m = max_abs(&state.slope);
    if max_m > 0.0 {
        dt = dt.min(config.cfl / max_m);
    }
    Ok(dt)
}

fn max_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// One RK4 step of the field solver with the step size chosen from the
/// state (and shortened so as not to pass `t_end`).
pub fn step(state: &FieldState, grid: &Grid, config: &SolverConfig) -> Result<FieldState> {
    let mut dt = time_step(state, grid, config)?;
    let remaining = config.t_end - state.t;
    if remaining > 0.0 {
        dt = dt.min(remaining);
    }
    rk4(state, grid, config.flux_form, dt, None)
}

/// RK4 with a fixed `dt`; particles in `set` advance inside the same stages.
pub fn rk4(
    state: &FieldState,
    grid: &Grid,
    flux_form: bool,
    dt: f64,
    mut set: Option<&mut CharacteristicSet>,
) -> Result<FieldState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SqqError::InvalidArgument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let stage = |base: &FieldState, km: &[f64], kn: &[f64], h: f64| -> Result<FieldState> {
        let m = base.m.iter().zip(km).map(|(a, k)| a + h * k).collect();
        let n = base.n.iter().zip(kn).map(|(a, k)| a + h * k).collect();
        FieldState::new(grid, base.t + h, m, n)
    };
    let mut particle_stages = Vec::with_capacity(4);
    let mut particle_rhs = |s: &FieldState, h: f64, set: &mut Option<&mut CharacteristicSet>| {
        if let Some(set) = set.as_deref_mut() {
            let k = set.stage_rate(s, grid, particle_stages.last(), h);
            particle_stages.push(k);
        }
    };

    let (m1, n1) = rhs(state, grid, flux_form)?;
    particle_rhs(state, 0.0, &mut set);
    let s2 = stage(state, &m1, &n1, 0.5 * dt)?;
    let (m2, n2) = rhs(&s2, grid, flux_form)?;
    particle_rhs(&s2, 0.5 * dt, &mut set);
    let s3 = stage(state, &m2, &n2, 0.5 * dt)?;
    let (m3, n3) = rhs(&s3, grid, flux_form)?;
    particle_rhs(&s3, 0.5 * dt, &mut set);
    let s4 = stage(state, &m3, &n3, dt)?;
    let (m4, n4) = rhs(&s4, grid, flux_form)?;
    particle_rhs(&s4, dt, &mut set);

    let combine = |f: &[f64], k: [&[f64]; 4]| -> Vec<f64> {
        (0..f.len())
            .map(|j| f[j] + dt / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]))
            .collect()
    };
    let m = combine(&state.m, [&m1, &m2, &m3, &m4]);
    let n = combine(&state.n, [&n1, &n2, &n3, &n4]);
    let next = FieldState::new(grid, state.t + dt, m, n)?;
    if let Some(set) = set {
        set.commit(&particle_stages, dt, &next, grid);
    }
    Ok(next)
}

/// Runs from `(m0, n0)` at `t = 0` to `t_end` or a terminal event.
pub fn run(m0: Vec<f64>, n0: Vec<f64>, grid: &Grid, config: &SolverConfig) -> Result<RunRecord> {
    run_with(m0, n0, grid, config, None, &mut |_| {})
}

/// As [`run`], advancing `set` in lockstep and calling `observe` on every
/// recorded state.
pub fn run_with(
    m0: Vec<f64>,
    n0: Vec<f64>,
    grid: &Grid,
    config: &SolverConfig,
    mut set: Option<&mut CharacteristicSet>,
    observe: &mut dyn FnMut(&FieldState),
) -> Result<RunRecord> {
    config.validate()?;
    let mut state = FieldState::new(grid, 0.0, m0, n0)?;
    if let Some(set) = set.as_deref_mut() {
        set.start(&state, grid);
    }
    let mut record = RunRecord {
        times: Vec::new(),
        diagnostics: Vec::new(),
        status: RunStatus::Completed,
        steps: 0,
        final_state: state.clone(),
    };
    let mut push = |s: &FieldState, rec: &mut RunRecord| {
        rec.times.push(s.t);
        rec.diagnostics.push(diagnostics_row(s, grid));
        observe(s);
    };
    push(&state, &mut record);
    let min_slope = |s: &FieldState| s.slope.iter().fold(f64::INFINITY, |a, &x| a.min(x));

    let mut status = if min_slope(&state) < -config.m_stop {
        Some(RunStatus::BlowupDetected(0.0))
    } else {
        None
    };
    let mut recorded_last = true;
    while status.is_none() && state.t < config.t_end {
        let dt = match time_step(&state, grid, config) {
            Ok(dt) => dt,
            Err(SqqError::CflCollapse { t, .. }) => {
                status = Some(RunStatus::CflCollapse(t));
                break;
            }
            Err(e) => return Err(e),
        };
        let remaining = config.t_end - state.t;
        // Avoid a sliver of a final step.
        let dt = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
        state = rk4(&state, grid, config.flux_form, dt, set.as_deref_mut())?;
        if remaining <= dt {
            state.t = config.t_end;
        }
        record.steps += 1;
        recorded_last = false;
        if min_slope(&state) < -config.m_stop {
            status = Some(RunStatus::BlowupDetected(state.t));
        }
        if record.steps.is_multiple_of(config.snapshot_stride) {
            push(&state, &mut record);
            recorded_last = true;
        }
    }
    if !recorded_last {
        push(&state, &mut record);
    }
    record.status = status.unwrap_or(RunStatus::Completed);
    record.final_state = state;
    Ok(record)
}
