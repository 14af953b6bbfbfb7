//! Conserved quantities, run diagnostics and the Riccati blow-up certificate.
//!
//! Along the characteristic from `x0` the slope obeys
//! `dM/dt <= -M^2 + delta N` with `N = m + n`, `dN/dt = -M N`. If
//! `M0 < -sqrt(2 delta N0)` the comparison parabola
//! `1/N(t) <= delta/2 (t - T1)(t - T2)` forces blow-up no later than `T1`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::characteristics::CharacteristicSet;
use crate::error::{Result, SqqError};
use crate::grid::{FieldState, Grid};

/// Column names of a diagnostics row, in [`DiagnosticsRow::values`] order.
pub const DIAGNOSTICS_HEADER: &str = "t,H1,H2,H3,H4,minM,maxAbsW,min_m,min_n,viol_u,viol_v,max_abs_m_minus_n";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
    pub min_slope: f64,
    pub max_abs_transport: f64,
    pub min_m: f64,
    pub min_n: f64,
    /// `max_j max(|ux_j| - u_j, u_j - H1)` clipped at 0.
    pub viol_u: f64,
    /// Same for `v` against `H2`.
    pub viol_v: f64,
    pub max_abs_m_minus_n: f64,
}

impl DiagnosticsRow {
    pub fn values(&self) -> [f64; 12] {
        [
            self.t,
            self.h1,
            self.h2,
            self.h3,
            self.h4,
            self.min_slope,
            self.max_abs_transport,
            self.min_m,
            self.min_n,
            self.viol_u,
            self.viol_v,
            self.max_abs_m_minus_n,
        ]
    }
}

/// `(H1, H2, H3, H4) = (int m, int n, int m (v - vx), int (u + ux)(v - vx)^2 m)`.
pub fn conserved_quantities(state: &FieldState, grid: &Grid) -> Result<(f64, f64, f64, f64)> {
    if !state.is_fresh() {
        return Err(SqqError::InvalidArgument(
            "conserved quantities need an assembled state".into(),
        ));
    }
    Ok(conserved_unchecked(state, grid))
}

fn conserved_unchecked(state: &FieldState, grid: &Grid) -> (f64, f64, f64, f64) {
    let len = state.len();
    let h3: Vec<f64> = (0..len).map(|j| state.m[j] * (state.v[j] - state.vx[j])).collect();
    let h4: Vec<f64> = (0..len)
        .map(|j| {
            let b = state.v[j] - state.vx[j];
            (state.u[j] + state.ux[j]) * b * b * state.m[j]
        })
        .collect();
    (
        grid.quadrature(&state.m),
        grid.quadrature(&state.n),
        grid.quadrature(&h3),
        grid.quadrature(&h4),
    )
}

fn bound_violation(f: &[f64], fx: &[f64], bound: f64) -> f64 {
    f.iter()
        .zip(fx)
        .fold(0.0_f64, |acc, (&u, &ux)| acc.max(ux.abs() - u).max(u - bound))
}

/// Diagnostics of an assembled state.
pub fn diagnostics_row(state: &FieldState, grid: &Grid) -> DiagnosticsRow {
    let (h1, h2, h3, h4) = conserved_unchecked(state, grid);
    let min = |f: &[f64]| f.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    DiagnosticsRow {
        t: state.t,
        h1,
        h2,
        h3,
        h4,
        min_slope: min(&state.slope),
        max_abs_transport: state.transport.iter().fold(0.0_f64, |a, x| a.max(x.abs())),
        min_m: min(&state.m),
        min_n: min(&state.n),
        viol_u: bound_violation(&state.u, &state.ux, h1),
        viol_v: bound_violation(&state.v, &state.vx, h2),
        max_abs_m_minus_n: state
            .m
            .iter()
            .zip(&state.n)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaMode {
    /// `3/2 (H1 + H2)^3`.
    #[default]
    Paper,
    /// `3 H1 H2 (H1 + H2)`, never larger than the `Paper` mode constant.
    Sharp,
}

impl std::fmt::Display for DeltaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DeltaMode::Paper => "paper",
            DeltaMode::Sharp => "sharp",
        })
    }
}

/// Constant `delta` of the Riccati inequality.
pub fn delta_constant(h1: f64, h2: f64, mode: DeltaMode) -> Result<f64> {
    if !(h1 >= 0.0 && h2 >= 0.0) {
        return Err(SqqError::InvalidArgument(format!(
            "H1 and H2 must be nonnegative, got {h1}, {h2}"
        )));
    }
    Ok(match mode {
        DeltaMode::Paper => 1.5 * (h1 + h2).powi(3),
        DeltaMode::Sharp => 3.0 * h1 * h2 * (h1 + h2),
    })
}

/// Outcome of the strict test `M0 < -sqrt(2 delta N0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub condition_met: bool,
    /// `(-M0 - sqrt(2 delta N0)) / sqrt(2 delta N0)`.
    pub margin: f64,
    /// Roots of `t^2 + 2 M0/(delta N0) t + 2/(delta N0) = 0`, when met.
    pub roots: Option<(f64, f64)>,
}

impl Certificate {
    pub fn evaluate(delta: f64, m0: f64, n0: f64) -> Result<Self> {
        let dn = delta * n0;
        if !(dn > 0.0 && dn.is_finite() && m0.is_finite()) {
            return Err(SqqError::InvalidArgument(format!(
                "certificate needs delta N0 > 0 and finite M0, got delta N0 = {dn}, M0 = {m0}"
            )));
        }
        let threshold = (2.0 * dn).sqrt();
        let condition_met = m0 < -threshold;
        let margin = (-m0 - threshold) / threshold;
        let roots = condition_met.then(|| {
            // Both roots without cancellation: T1 T2 = 2/(delta N0).
            let s = (m0 * m0 - 2.0 * dn).sqrt();
            let big = -m0 + s;
            (2.0 / big, big / dn)
        });
        Ok(Self {
            condition_met,
            margin,
            roots,
        })
    }
}

/// Certification report; serialises with the external key names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
    pub delta: f64,
    pub delta_mode: DeltaMode,
    pub x0: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    #[serde(rename = "N0")]
    pub n0: f64,
    pub condition_met: bool,
    pub margin: f64,
    #[serde(rename = "T1")]
    pub t1: Option<f64>,
    #[serde(rename = "T2")]
    pub t2: Option<f64>,
    #[serde(rename = "detected_T0")]
    pub detected_t0: Option<f64>,
    pub status: String,
    #[serde(skip)]
    pub rate_samples: Vec<(f64, f64)>,
}

impl BlowupReport {
    pub fn from_values(h1: f64, h2: f64, mode: DeltaMode, x0: f64, m0: f64, n0: f64) -> Result<Self> {
        let delta = delta_constant(h1, h2, mode)?;
        let cert = Certificate::evaluate(delta, m0, n0)?;
        Ok(Self {
            h1,
            h2,
            delta,
            delta_mode: mode,
            x0,
            m0,
            n0,
            condition_met: cert.condition_met,
            margin: cert.margin,
            t1: cert.roots.map(|r| r.0),
            t2: cert.roots.map(|r| r.1),
            detected_t0: None,
            status: if cert.condition_met {
                "certified"
            } else {
                "not_certified"
            }
            .into(),
            rate_samples: Vec::new(),
        })
    }
}

/// Checks the hypotheses nodewise and certifies data `(m0, n0)` at `x0`.
pub fn certify(m0: &[f64], n0: &[f64], grid: &Grid, x0: f64, mode: DeltaMode) -> Result<BlowupReport> {
    let state = FieldState::new(grid, 0.0, m0.to_vec(), n0.to_vec())?;
    for (which, f) in [("m0", m0), ("n0", n0)] {
        if let Some(node) = f.iter().position(|&x| x < 0.0) {
            return Err(SqqError::Hypothesis {
                which,
                node,
                x: grid.x(node),
                value: f[node],
            });
        }
    }
    let node = grid.nearest_node(x0);
    for (which, f) in [("m0 at x0", m0), ("n0 at x0", n0)] {
        if f[node] <= 0.0 {
            return Err(SqqError::Hypothesis {
                which,
                node,
                x: grid.x(node),
                value: f[node],
            });
        }
    }
    let sum: Vec<f64> = m0.iter().zip(n0).map(|(a, b)| a + b).collect();
    let (h1, h2, _, _) = conserved_unchecked(&state, grid);
    BlowupReport::from_values(
        h1,
        h2,
        mode,
        x0,
        grid.interpolate(&state.slope, x0),
        grid.interpolate(&sum, x0),
    )
}

/// Unit-height Gaussian bump `exp(-((x - c)/w)^2)`.
fn bump(x: f64, center: f64, width: f64) -> f64 {
    let s = (x - center) / width;
    (-s * s).exp()
}

/// One point of the two-bump family: an `m0` bump of width `w` at `x0` and
/// an `n0` bump of width `w2` centred a distance `d` to the left of `x0`,
/// with masses `1` and `mass_ratio` before rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub mass_ratio: f64,
    pub width: f64,
    pub width_n: f64,
    pub offset: f64,
}

/// Candidate lists, searched in lexicographic order of
/// `(mass_ratio, width_cells, width_n_fraction, offset_widths)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    pub mass_ratios: Vec<f64>,
    /// `m0` width in grid cells; lower bound on resolution.
    pub width_cells: Vec<f64>,
    /// `n0` width as a fraction of the `m0` width.
    pub width_n_fractions: Vec<f64>,
    /// Offset of the `n0` bump in units of its own width.
    pub offset_widths: Vec<f64>,
    pub min_margin: f64,
    /// After a hit the data are rescaled so that `M0 = target_slope`; the
    /// certificate is invariant under amplitude scaling, `T1` scales like
    /// `1/|M0|`.
    pub target_slope: f64,
    pub x0: f64,
}

impl Default for DesignSpace {
    fn default() -> Self {
        Self {
            mass_ratios: vec![2.0, 1.5, 3.0, 1.0],
            width_cells: vec![128.0, 96.0, 64.0, 48.0, 32.0],
            width_n_fractions: vec![0.5, 0.25, 1.0],
            offset_widths: vec![5.0, 6.0, 7.0],
            min_margin: 0.1,
            target_slope: -50.0,
            x0: 0.0,
        }
    }
}

impl DesignSpace {
    fn candidates(&self, grid: &Grid) -> Vec<DesignParams> {
        let mut out = Vec::new();
        for &mass_ratio in &self.mass_ratios {
            for &cells in &self.width_cells {
                for &frac in &self.width_n_fractions {
                    for &k in &self.offset_widths {
                        let width = cells * grid.dx();
                        let width_n = frac * width;
                        out.push(DesignParams {
                            mass_ratio,
                            width,
                            width_n,
                            offset: k * width_n,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupDesign {
    pub m0: Vec<f64>,
    pub n0: Vec<f64>,
    pub x0: f64,
    pub params: DesignParams,
    pub amplitude: f64,
    pub report: BlowupReport,
    pub tried: usize,
}

fn design_data(grid: &Grid, x0: f64, p: &DesignParams, amplitude: f64) -> (Vec<f64>, Vec<f64>) {
    let root_pi = std::f64::consts::PI.sqrt();
    let a = amplitude / (p.width * root_pi);
    let b = amplitude * p.mass_ratio / (p.width_n * root_pi);
    let m0 = grid.sample(|x| a * bump(grid.wrap(x - x0), 0.0, p.width));
    let n0 = grid.sample(|x| b * bump(grid.wrap(x - x0 + p.offset), 0.0, p.width_n));
    (m0, n0)
}

/// Searches the two-bump family for data satisfying the certificate with
/// at least `space.min_margin` margin, trying at most `budget` candidates.
/// `seed` permutes the search order; `None` keeps the lexicographic order.
pub fn design_blowup_data(
    grid: &Grid,
    space: &DesignSpace,
    mode: DeltaMode,
    budget: usize,
    seed: Option<u64>,
) -> Result<BlowupDesign> {
    if !(space.target_slope < 0.0) {
        return Err(SqqError::InvalidArgument("target slope must be negative".into()));
    }
    let mut candidates = space.candidates(grid);
    if let Some(seed) = seed {
        candidates.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
    }
    let mut tried = 0;
    for p in candidates.iter().take(budget) {
        tried += 1;
        let (m0, n0) = design_data(grid, space.x0, p, 1.0);
        let report = match certify(&m0, &n0, grid, space.x0, mode) {
            Ok(r) => r,
            Err(SqqError::Hypothesis { .. }) => continue,
            Err(e) => return Err(e),
        };
        if !report.condition_met || report.margin < space.min_margin {
            continue;
        }
        let amplitude = (space.target_slope / report.m0).sqrt();
        let (m0, n0) = design_data(grid, space.x0, p, amplitude);
        let report = certify(&m0, &n0, grid, space.x0, mode)?;
        if !report.condition_met || report.margin < space.min_margin {
            continue;
        }
        return Ok(BlowupDesign {
            m0,
            n0,
            x0: space.x0,
            params: *p,
            amplitude,
            report,
            tried,
        });
    }
    Err(SqqError::SearchExhausted { tried })
}

/// Slacks of the comparison parabola and the linear bound along one
/// characteristic.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSlack {
    pub t: Vec<f64>,
    /// `delta/2 (t - T1)(t - T2) - 1/N(t)`.
    pub s1: Vec<f64>,
    /// `(M0/N0 + delta t) N(t) - M(t)`.
    pub s2: Vec<f64>,
    pub scale1: Vec<f64>,
    pub scale2: Vec<f64>,
}

pub fn comparison_check(set: &CharacteristicSet, seed: usize, report: &BlowupReport) -> Result<ComparisonSlack> {
    let (Some(t1), Some(t2)) = (report.t1, report.t2) else {
        return Err(SqqError::InvalidArgument("comparison needs a met condition".into()));
    };
    if seed >= set.len() {
        return Err(SqqError::InvalidArgument(format!("no characteristic {seed}")));
    }
    let t = set.times();
    let m = set.slope_along(seed);
    let n = set.density_along(seed);
    let delta = report.delta;
    let mut out = ComparisonSlack {
        t: t.clone(),
        s1: Vec::with_capacity(t.len()),
        s2: Vec::with_capacity(t.len()),
        scale1: Vec::with_capacity(t.len()),
        scale2: Vec::with_capacity(t.len()),
    };
    for k in 0..t.len() {
        let parabola = 0.5 * delta * (t[k] - t1) * (t[k] - t2);
        out.s1.push(parabola - 1.0 / n[k]);
        out.scale1.push(parabola.abs().max(1.0 / n[k]));
        let bound = (report.m0 / report.n0 + delta * t[k]) * n[k];
        out.s2.push(bound - m[k]);
        out.scale2.push(bound.abs().max(m[k].abs()));
    }
    Ok(out)
}

/// The product `(T0 - t) M(t)` for samples before `t0`, with its running
/// minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMonitor {
    pub samples: Vec<(f64, f64)>,
    pub running_min: Vec<f64>,
    /// Whether the running minimum came within 0.1 of the limit `-1`.
    pub reached: bool,
}

pub fn blowup_rate_monitor(t: &[f64], slope: &[f64], t0: f64) -> RateMonitor {
    let mut samples = Vec::new();
    let mut running_min = Vec::new();
    let mut low = f64::INFINITY;
    for (&ti, &mi) in t.iter().zip(slope) {
        if ti >= t0 {
            break;
        }
        let p = (t0 - ti) * mi;
        low = low.min(p);
        samples.push((ti, p));
        running_min.push(low);
    }
    RateMonitor {
        samples,
        running_min,
        reached: low <= -0.9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sech2(x: f64) -> f64 {
        1.0 / x.cosh().powi(2)
    }

    #[test]
    fn conserved_quantities_of_simple_states() {
        let g = Grid::new(20.0, 4096).unwrap();
        let zero = FieldState::new(&g, 0.0, vec![0.0; 4096], vec![0.0; 4096]).unwrap();
        assert_eq!(conserved_quantities(&zero, &g).unwrap(), (0.0, 0.0, 0.0, 0.0));

        let s = FieldState::new(&g, 0.0, g.sample(sech2), vec![0.0; 4096]).unwrap();
        let (h1, h2, h3, h4) = conserved_quantities(&s, &g).unwrap();
        assert!((h1 - 2.0).abs() < 1e-8);
        assert_eq!((h2, h3, h4), (0.0, 0.0, 0.0));

        let s = FieldState::new(&g, 0.0, g.sample(sech2), g.sample(sech2)).unwrap();
        let (h1, h2, _, _) = conserved_quantities(&s, &g).unwrap();
        assert_eq!(h1, h2);
        assert!((g.quadrature(&s.u) - h1).abs() < 1e-12);

        let stale = FieldState::from_densities(0.0, vec![0.0; 4096], vec![0.0; 4096]);
        assert!(conserved_quantities(&stale, &g).is_err());
    }

    #[test]
    fn delta_values() {
        assert_eq!(delta_constant(1.0, 1.0, DeltaMode::Paper).unwrap(), 12.0);
        assert_eq!(delta_constant(1.0, 1.0, DeltaMode::Sharp).unwrap(), 6.0);
        assert_eq!(delta_constant(0.0, 3.0, DeltaMode::Sharp).unwrap(), 0.0);
        assert_eq!(delta_constant(0.0, 0.0, DeltaMode::Paper).unwrap(), 0.0);
        assert!(delta_constant(-1.0, 1.0, DeltaMode::Paper).is_err());
    }

    #[test]
    fn synthetic_certificate() {
        let c = Certificate::evaluate(1.0, -4.0, 2.0).unwrap();
        assert!(c.condition_met);
        let (t1, t2) = c.roots.unwrap();
        assert!((t1 - (2.0 - 3f64.sqrt())).abs() < 1e-15);
        assert!((t2 - (2.0 + 3f64.sqrt())).abs() < 1e-15);
        assert!((t1 * t2 - 1.0).abs() < 1e-15);
        assert!((c.margin - 1.0).abs() < 1e-15);

        let edge = Certificate::evaluate(1.0, -2.0, 2.0).unwrap();
        assert!(!edge.condition_met);
        assert!(edge.roots.is_none());
        assert!(Certificate::evaluate(0.0, -2.0, 2.0).is_err());
    }

    #[test]
    fn report_serialises_with_external_keys() {
        let r = BlowupReport::from_values(1.0, 1.0, DeltaMode::Sharp, 0.0, -40.0, 2.0).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        let mut expected = vec![
            "H1",
            "H2",
            "delta",
            "delta_mode",
            "x0",
            "M0",
            "N0",
            "condition_met",
            "margin",
            "T1",
            "T2",
            "detected_T0",
            "status",
        ];
        expected.sort_unstable();
        let mut keys = keys;
        keys.sort_unstable();
        assert_eq!(keys, expected);
        assert_eq!(v["delta_mode"], "sharp");
    }

    #[test]
    fn symmetric_data_is_never_certified() {
        let g = Grid::new(10.0, 1024).unwrap();
        let m = g.sample(|x| 5.0 * sech2(4.0 * x));
        let r = certify(&m, &m, &g, 0.0, DeltaMode::Sharp).unwrap();
        assert!(r.m0.abs() < 1e-12);
        assert!(!r.condition_met);
        assert!(r.t1.is_none() && r.t2.is_none());
    }

    #[test]
    fn hypotheses_are_located() {
        let g = Grid::new(10.0, 64).unwrap();
        let mut m = g.sample(sech2);
        let n = g.sample(sech2);
        m[7] = -1e-3;
        match certify(&m, &n, &g, 0.0, DeltaMode::Paper) {
            Err(SqqError::Hypothesis { which, node, .. }) => assert_eq!((which, node), ("m0", 7)),
            other => panic!("{other:?}"),
        }
        let far = g.sample(|x| bump(x, 5.0, 0.1));
        assert!(matches!(
            certify(&far, &n, &g, -5.0, DeltaMode::Paper),
            Err(SqqError::Hypothesis { which: "m0 at x0", .. })
        ));
    }

    #[test]
    fn empty_budget_fails() {
        let g = Grid::new(10.0, 1024).unwrap();
        let r = design_blowup_data(&g, &DesignSpace::default(), DeltaMode::Paper, 0, None);
        assert_eq!(r, Err(SqqError::SearchExhausted { tried: 0 }));
    }

    #[test]
    fn coarse_grid_cannot_certify_with_the_cubic_delta() {
        // The m0 bump would have to be narrower than the grid can represent.
        let g = Grid::new(10.0, 512).unwrap();
        let r = design_blowup_data(&g, &DesignSpace::default(), DeltaMode::Paper, usize::MAX, None);
        assert!(matches!(r, Err(SqqError::SearchExhausted { .. })));
    }

    #[test]
    fn design_is_reproducible() {
        let g = Grid::new(10.0, 32768).unwrap();
        let d = design_blowup_data(&g, &DesignSpace::default(), DeltaMode::Paper, usize::MAX, None).unwrap();
        assert!(d.report.condition_met && d.report.margin >= 0.1);
        assert!((d.report.m0 + 50.0).abs() < 1e-9 * 50.0);
        let again = certify(&d.m0, &d.n0, &g, d.x0, DeltaMode::Paper).unwrap();
        assert_eq!(again.t1, d.report.t1);
        let shuffled = design_blowup_data(&g, &DesignSpace::default(), DeltaMode::Paper, usize::MAX, Some(7)).unwrap();
        assert!(shuffled.report.margin >= 0.1);
    }

    #[test]
    fn rate_of_model_profiles() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.019).collect();
        for c in [1.0, 2.0] {
            let m: Vec<f64> = t.iter().map(|&s| -c / (1.0 - s)).collect();
            let mon = blowup_rate_monitor(&t, &m, 1.0);
            assert_eq!(mon.samples.len(), 50);
            assert!(mon.samples.iter().all(|&(_, p)| (p + c).abs() < 1e-12));
            assert!(mon.reached);
        }
        let mon = blowup_rate_monitor(&t, &vec![-0.1; 50], 1.0);
        assert!(!mon.reached);
    }
}
