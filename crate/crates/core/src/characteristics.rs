//! Particles following the transport velocity, `dq/dt = W(t, q)`, with the
//! stretch `qx` obeying `dqx/dt = M(t, q) qx`.
//!
//! Along each characteristic `m qx` and `n qx` are frozen, `ln qx` is the
//! time integral of `M`, and `N = m + n` satisfies `dN/dt = -M N`.

use crate::error::{Result, SqqError};
use crate::grid::{FieldState, Grid};

/// Stage rates `(dq/dt, dqx/dt)` for every particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRate {
    pub dq: Vec<f64>,
    pub dqx: Vec<f64>,
}

/// Fields sampled at the particles at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub qx: Vec<f64>,
    pub transport: Vec<f64>,
    /// `M` at the particle.
    pub slope: Vec<f64>,
    /// `N = m + n` at the particle.
    pub density: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    /// Right-hand side of the `M` evolution equation at the particle, when
    /// tracked.
    pub slope_rhs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicSet {
    seeds: Vec<f64>,
    pub q: Vec<f64>,
    pub qx: Vec<f64>,
    pub t: f64,
    m0: Vec<f64>,
    n0: Vec<f64>,
    pub samples: Vec<CharacteristicSample>,
    /// Time at which particle ordering was first lost.
    pub unreliable_from: Option<f64>,
    track_slope_rhs: bool,
}

impl CharacteristicSet {
    /// Seeds must be finite and strictly increasing.
    pub fn new(seeds: Vec<f64>) -> Result<Self> {
        if seeds.is_empty() || seeds.iter().any(|x| !x.is_finite()) {
            return Err(SqqError::InvalidArgument("seeds must be finite and non-empty".into()));
        }
        if seeds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SqqError::InvalidArgument("seeds must be strictly increasing".into()));
        }
        let len = seeds.len();
        Ok(Self {
            q: seeds.clone(),
            qx: vec![1.0; len],
            seeds,
            t: 0.0,
            m0: vec![0.0; len],
            n0: vec![0.0; len],
            samples: Vec::new(),
            unreliable_from: None,
            track_slope_rhs: false,
        })
    }

    /// Also evaluate the right-hand side of the `M` equation at every sample
    /// (two extra Helmholtz solves per step).
    pub fn tracking_slope_rhs(mut self, on: bool) -> Self {
        self.track_slope_rhs = on;
        self
    }

    pub fn seeds(&self) -> &[f64] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// Resets the particles onto their seeds at the time of `state`.
    pub fn start(&mut self, state: &FieldState, grid: &Grid) {
        self.q = self.seeds.clone();
        self.qx = vec![1.0; self.seeds.len()];
        self.t = state.t;
        self.m0 = self.q.iter().map(|&x| grid.interpolate(&state.m, x)).collect();
        self.n0 = self.q.iter().map(|&x| grid.interpolate(&state.n, x)).collect();
        self.unreliable_from = None;
        self.samples = vec![self.sample(state, grid)];
    }

    /// Rates at a solver stage: positions are `q + h k_prev`.
    pub fn stage_rate(&self, state: &FieldState, grid: &Grid, prev: Option<&ParticleRate>, h: f64) -> ParticleRate {
        let len = self.q.len();
        let mut dq = Vec::with_capacity(len);
        let mut dqx = Vec::with_capacity(len);
        for i in 0..len {
            let (q, qx) = match prev {
                Some(k) => (self.q[i] + h * k.dq[i], self.qx[i] + h * k.dqx[i]),
                None => (self.q[i], self.qx[i]),
            };
            dq.push(grid.interpolate(&state.transport, q));
            dqx.push(grid.interpolate(&state.slope, q) * qx);
        }
        ParticleRate { dq, dqx }
    }

    /// Combines four RK4 stage rates, then samples the new state.
    pub fn commit(&mut self, stages: &[ParticleRate], dt: f64, next: &FieldState, grid: &Grid) {
        debug_assert_eq!(stages.len(), 4);
        for i in 0..self.q.len() {
            let dq = stages[0].dq[i] + 2.0 * stages[1].dq[i] + 2.0 * stages[2].dq[i] + stages[3].dq[i];
            let dqx = stages[0].dqx[i] + 2.0 * stages[1].dqx[i] + 2.0 * stages[2].dqx[i] + stages[3].dqx[i];
            self.q[i] += dt / 6.0 * dq;
            self.qx[i] += dt / 6.0 * dqx;
        }
        self.t = next.t;
        let ordered = self.q.windows(2).all(|w| w[0] < w[1]) && self.qx.iter().all(|&s| s > 0.0);
        if !ordered && self.unreliable_from.is_none() {
            self.unreliable_from = Some(self.t);
        }
        let s = self.sample(next, grid);
        self.samples.push(s);
    }

    /// Advances fields and particles together by one RK4 step of size `dt`.
    pub fn advect(&mut self, state: &FieldState, grid: &Grid, dt: f64, flux_form: bool) -> Result<FieldState> {
        crate::dynamics::rk4(state, grid, flux_form, dt, Some(self))
    }

    fn sample(&self, state: &FieldState, grid: &Grid) -> CharacteristicSample {
        let at = |f: &[f64]| -> Vec<f64> { self.q.iter().map(|&x| grid.interpolate(f, x)).collect() };
        let sum: Vec<f64> = state.m.iter().zip(&state.n).map(|(a, b)| a + b).collect();
        let slope = at(&state.slope);
        let slope_rhs = self.track_slope_rhs.then(|| {
            let nonlocal = slope_rhs_nonlocal(state, grid);
            at(&nonlocal).iter().zip(&slope).map(|(r, s)| r - s * s).collect()
        });
        CharacteristicSample {
            t: state.t,
            q: self.q.clone(),
            qx: self.qx.clone(),
            transport: at(&state.transport),
            density: at(&sum),
            m: at(&state.m),
            n: at(&state.n),
            slope,
            slope_rhs,
        }
    }

    fn series(&self, pick: impl Fn(&CharacteristicSample) -> f64) -> Vec<f64> {
        self.samples.iter().map(pick).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Time series of `M` along characteristic `seed`.
    pub fn slope_along(&self, seed: usize) -> Vec<f64> {
        self.series(|s| s.slope[seed])
    }

    /// Time series of `N = m + n` along characteristic `seed`.
    pub fn density_along(&self, seed: usize) -> Vec<f64> {
        self.series(|s| s.density[seed])
    }
}

/// Nonlocal part of the `M` equation,
/// `-n K(a) - m K(b) - n K(a)_x + m K(b)_x` with `a = (ux + u) M`,
/// `b = (vx - v) M` and `K = (1 - d_xx)^{-1}`.
pub fn slope_rhs_nonlocal(state: &FieldState, grid: &Grid) -> Vec<f64> {
    let len = state.len();
    let a: Vec<f64> = (0..len).map(|j| (state.ux[j] + state.u[j]) * state.slope[j]).collect();
    let b: Vec<f64> = (0..len).map(|j| (state.vx[j] - state.v[j]) * state.slope[j]).collect();
    let ka = grid.helmholtz_invert(&a).expect("fresh state has grid length");
    let kb = grid.helmholtz_invert(&b).expect("fresh state has grid length");
    let ka_x = grid.centered_unchecked(&ka);
    let kb_x = grid.centered_unchecked(&kb);
    (0..len)
        .map(|j| {
            let (m, n) = (state.m[j], state.n[j]);
            -n * ka[j] - m * kb[j] - n * ka_x[j] + m * kb_x[j]
        })
        .collect()
}

/// Same expression assembled as one grouped sum, used to cross-check the
/// term-by-term version.
pub fn slope_rhs_nonlocal_grouped(state: &FieldState, grid: &Grid) -> Vec<f64> {
    let len = state.len();
    let a: Vec<f64> = (0..len).map(|j| (state.ux[j] + state.u[j]) * state.slope[j]).collect();
    let b: Vec<f64> = (0..len).map(|j| (state.vx[j] - state.v[j]) * state.slope[j]).collect();
    let ka = grid.helmholtz_invert(&a).expect("fresh state has grid length");
    let kb = grid.helmholtz_invert(&b).expect("fresh state has grid length");
    let n_part: Vec<f64> = ka
        .iter()
        .zip(grid.centered_unchecked(&ka))
        .map(|(k, kx)| k + kx)
        .collect();
    let m_part: Vec<f64> = kb
        .iter()
        .zip(grid.centered_unchecked(&kb))
        .map(|(k, kx)| k - kx)
        .collect();
    (0..len)
        .map(|j| -(state.n[j] * n_part[j] + state.m[j] * m_part[j]))
        .collect()
}

/// Second-order derivative of samples on a non-uniform time axis; one-sided
/// at the ends.
pub fn time_derivative(t: &[f64], f: &[f64]) -> Vec<f64> {
    let len = t.len();
    match len {
        0 => return Vec::new(),
        1 => return vec![0.0],
        2 => {
            let d = (f[1] - f[0]) / (t[1] - t[0]);
            return vec![d, d];
        }
        _ => {}
    }
    let mut out = Vec::with_capacity(len);
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    out.push(-(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2]);
    for i in 1..len - 1 {
        let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        out.push(-h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1]);
    }
    let k = len - 1;
    let (h1, h2) = (t[k - 1] - t[k - 2], t[k] - t[k - 1]);
    out.push(
        h2 / (h1 * (h1 + h2)) * f[k - 2] - (h1 + h2) / (h1 * h2) * f[k - 1] + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * f[k],
    );
    out
}

/// Maximum over seeds of the relative deviation of `m(t,q) qx` from
/// `m0(x0)`, and the same for `n`.
pub fn lagrangian_invariant_check(set: &CharacteristicSet, state: &FieldState, grid: &Grid) -> Result<(f64, f64)> {
    if (set.t - state.t).abs() > 1e-12 * (1.0 + state.t.abs()) {
        return Err(SqqError::InvalidArgument(format!(
            "particles at t = {} but fields at t = {}",
            set.t, state.t
        )));
    }
    let deviation = |field: &[f64], initial: &[f64]| {
        let scale = f64::MIN_POSITIVE + initial.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        set.q
            .iter()
            .zip(&set.qx)
            .zip(initial)
            .map(|((&q, &qx), &f0)| (grid.interpolate(field, q) * qx - f0).abs() / scale)
            .fold(0.0_f64, f64::max)
    };
    Ok((deviation(&state.m, &set.m0), deviation(&state.n, &set.n0)))
}

/// Maximum over seeds of `|ln qx - int M dt|`, the integral taken by the
/// trapezoid rule over the stored samples.
pub fn stretch_consistency(set: &CharacteristicSet) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..set.len() {
        let mut integral = 0.0;
        for w in set.samples.windows(2) {
            integral += 0.5 * (w[1].t - w[0].t) * (w[0].slope[i] + w[1].slope[i]);
        }
        let last = set.samples.last().map_or(1.0, |s| s.qx[i]);
        worst = worst.max((last.ln() - integral).abs());
    }
    worst
}

/// Residual of the `M` evolution equation along each characteristic:
/// `dM/dt - rhs`, indexed `[sample][seed]`.
pub fn m_equation_residual(set: &CharacteristicSet) -> Result<Vec<Vec<f64>>> {
    if set.samples.iter().any(|s| s.slope_rhs.is_none()) {
        return Err(SqqError::InvalidArgument(
            "slope equation right-hand side was not tracked".into(),
        ));
    }
    let t = set.times();
    let mut out = vec![vec![0.0; set.len()]; t.len()];
    for i in 0..set.len() {
        let d = time_derivative(&t, &set.slope_along(i));
        for (k, s) in set.samples.iter().enumerate() {
            let rhs = s.slope_rhs.as_ref().expect("checked above")[i];
            out[k][i] = d[k] - rhs;
        }
    }
    Ok(out)
}

/// Slack of the Riccati inequality `dM/dt <= -M^2 + delta N` and residual
/// of `dN/dt = -M N`, both indexed `[sample][seed]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiMonitor {
    pub t: Vec<f64>,
    pub slack: Vec<Vec<f64>>,
    pub density_residual: Vec<Vec<f64>>,
    /// `max(M^2, delta N)` per sample and seed, the natural scale of both.
    pub scale: Vec<Vec<f64>>,
}

pub fn riccati_monitor(set: &CharacteristicSet, delta: f64) -> RiccatiMonitor {
    let t = set.times();
    let rows = t.len();
    let mut slack = vec![vec![0.0; set.len()]; rows];
    let mut density_residual = vec![vec![0.0; set.len()]; rows];
    let mut scale = vec![vec![0.0; set.len()]; rows];
    for i in 0..set.len() {
        let m = set.slope_along(i);
        let n = set.density_along(i);
        let dm = time_derivative(&t, &m);
        let dn = time_derivative(&t, &n);
        for k in 0..rows {
            slack[k][i] = -m[k] * m[k] + delta * n[k] - dm[k];
            density_residual[k][i] = dn[k] + m[k] * n[k];
            scale[k][i] = (m[k] * m[k]).max(delta * n[k]);
        }
    }
    RiccatiMonitor {
        t,
        slack,
        density_residual,
        scale,
    }
}

/// Root mean square over all entries of a `[sample][seed]` table.
pub fn rms(table: &[Vec<f64>]) -> f64 {
    let (sum, count) = table
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), x| (s + x * x, c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run_with, SolverConfig};

    fn sech2(x: f64) -> f64 {
        1.0 / x.cosh().powi(2)
    }

    #[test]
    fn seeds_are_validated() {
        assert!(CharacteristicSet::new(vec![]).is_err());
        assert!(CharacteristicSet::new(vec![1.0, 1.0]).is_err());
        assert!(CharacteristicSet::new(vec![f64::NAN]).is_err());
        assert!(CharacteristicSet::new(vec![-1.0, 2.0]).is_ok());
    }

    #[test]
    fn zero_fields_leave_particles_in_place() {
        let g = Grid::new(10.0, 128).unwrap();
        let mut set = CharacteristicSet::new(vec![-2.0, 0.0, 3.0]).unwrap();
        let mut s = FieldState::new(&g, 0.0, vec![0.0; 128], vec![0.0; 128]).unwrap();
        set.start(&s, &g);
        for _ in 0..5 {
            s = set.advect(&s, &g, 0.1, true).unwrap();
        }
        assert_eq!(set.q, vec![-2.0, 0.0, 3.0]);
        assert_eq!(set.qx, vec![1.0; 3]);
        assert_eq!(set.samples.len(), 6);
        assert!((set.t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn equal_even_data_at_the_origin() {
        // W = u^2 - ux^2 is even, so the origin is carried right at u(0)^2
        // while M = 2 ux m vanishes there initially.
        let g = Grid::new(10.0, 512).unwrap();
        let m = g.sample(sech2);
        let mut set = CharacteristicSet::new(vec![0.0]).unwrap();
        let cfg = SolverConfig {
            t_end: 0.3,
            ..Default::default()
        };
        let rec = run_with(m.clone(), m, &g, &cfg, Some(&mut set), &mut |_| {}).unwrap();
        let first = &set.samples[0];
        let u0 = g.interpolate(
            &FieldState::new(&g, 0.0, g.sample(sech2), g.sample(sech2)).unwrap().u,
            0.0,
        );
        assert!(first.slope[0].abs() < 1e-12);
        assert!((first.transport[0] - u0 * u0).abs() < 1e-12);
        assert!(set.q[0] > 0.5 * u0 * u0 * rec.final_state.t);
        assert!(set.qx[0] > 0.0);
    }

    #[test]
    fn invariants_at_start_are_exact() {
        let g = Grid::new(10.0, 256).unwrap();
        let s = FieldState::new(&g, 0.0, g.sample(sech2), g.sample(|x| 0.5 * sech2(x - 1.0))).unwrap();
        let mut set = CharacteristicSet::new(vec![-1.3, 0.2, 2.7]).unwrap();
        set.start(&s, &g);
        assert_eq!(lagrangian_invariant_check(&set, &s, &g).unwrap(), (0.0, 0.0));
        let later = FieldState::new(&g, 0.5, s.m.clone(), s.n.clone()).unwrap();
        assert!(lagrangian_invariant_check(&set, &later, &g).is_err());
    }

    #[test]
    fn stretch_tracks_slope_integral() {
        let g = Grid::new(10.0, 1024).unwrap();
        let seeds: Vec<f64> = (0..17).map(|k| -4.0 + 0.5 * k as f64).collect();
        let mut set = CharacteristicSet::new(seeds).unwrap();
        let cfg = SolverConfig {
            t_end: 0.5,
            ..Default::default()
        };
        run_with(
            g.sample(sech2),
            g.sample(|x| 0.5 * sech2(x - 1.0)),
            &g,
            &cfg,
            Some(&mut set),
            &mut |_| {},
        )
        .unwrap();
        assert!(set.unreliable_from.is_none());
        assert!(set.qx.iter().all(|&s| s > 0.0));
        assert!(stretch_consistency(&set) < 1e-4, "{}", stretch_consistency(&set));
    }

    #[test]
    fn products_stay_nonnegative() {
        let g = Grid::new(10.0, 512).unwrap();
        let seeds: Vec<f64> = (0..9).map(|k| -2.0 + 0.5 * k as f64).collect();
        let mut set = CharacteristicSet::new(seeds).unwrap();
        let cfg = SolverConfig {
            t_end: 0.5,
            ..Default::default()
        };
        run_with(
            g.sample(sech2),
            g.sample(|x| 2.0 * sech2(x + 0.5)),
            &g,
            &cfg,
            Some(&mut set),
            &mut |_| {},
        )
        .unwrap();
        for s in &set.samples {
            for i in 0..s.q.len() {
                assert!(s.m[i] * s.qx[i] >= 0.0 && s.n[i] * s.qx[i] >= 0.0);
            }
        }
    }

    #[test]
    fn zero_data_monitors_vanish() {
        let g = Grid::new(10.0, 64).unwrap();
        let mut set = CharacteristicSet::new(vec![0.0, 1.0]).unwrap().tracking_slope_rhs(true);
        let cfg = SolverConfig {
            t_end: 0.5,
            ..Default::default()
        };
        run_with(vec![0.0; 64], vec![0.0; 64], &g, &cfg, Some(&mut set), &mut |_| {}).unwrap();
        assert!(rms(&m_equation_residual(&set).unwrap()) == 0.0);
        let mon = riccati_monitor(&set, 12.0);
        assert!(rms(&mon.slack) == 0.0 && rms(&mon.density_residual) == 0.0);
    }

    #[test]
    fn untracked_rhs_is_reported() {
        let g = Grid::new(10.0, 64).unwrap();
        let s = FieldState::new(&g, 0.0, vec![0.0; 64], vec![0.0; 64]).unwrap();
        let mut set = CharacteristicSet::new(vec![0.0]).unwrap();
        set.start(&s, &g);
        assert!(m_equation_residual(&set).is_err());
    }

    #[test]
    fn grouped_and_termwise_assembly_agree() {
        let g = Grid::new(10.0, 512).unwrap();
        let m = g.sample(sech2);
        for n in [m.clone(), g.sample(|x| 0.3 * sech2(x - 2.0))] {
            let s = FieldState::new(&g, 0.0, m.clone(), n).unwrap();
            let a = slope_rhs_nonlocal(&s, &g);
            let b = slope_rhs_nonlocal_grouped(&s, &g);
            let scale = a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-14 * scale));
        }
    }

    #[test]
    fn derivative_is_exact_for_quadratics() {
        let t = [0.0, 0.1, 0.25, 0.3, 0.55];
        let f: Vec<f64> = t.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        let d = time_derivative(&t, &f);
        for (x, dx) in t.iter().zip(d) {
            assert!((dx - (6.0 * x - 1.0)).abs() < 1e-12);
        }
    }
}
