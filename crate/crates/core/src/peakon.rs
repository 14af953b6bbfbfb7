//! Closed-form one- and two-peakon solutions and an RK4 engine for the
//! peak-position ODE.
//!
//! A peakon pair is `u = p1 e^{-|x-q1|} + p2 e^{-|x-q2|}` and
//! `v = r1 e^{-|x-q1|} + r2 e^{-|x-q2|}` with constant amplitudes. The
//! position ODE comes in three forms. [`OdeVariant::Printed`] reproduces the
//! equation as commonly quoted. [`OdeVariant::Corrected`] multiplies its
//! right-hand side by -2, the scaling consistent with the single-peakon speed
//! `2/3 c1 c2` and with the closed forms below. [`OdeVariant::Transport`] is
//! the law the weak form actually accepts for a pair; it differs from
//! `Corrected` only in the interaction term.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SqqError};
use crate::grid::{FieldState, Grid};

/// Separation below which two peaks are treated as colliding.
pub const COLLISION_TOL: f64 = 1e-8;

/// `sgn` with `sgn(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePeakon {
    pub c1: f64,
    pub c2: f64,
    speed: f64,
}

impl SinglePeakon {
    pub fn new(c1: f64, c2: f64) -> Self {
        Self {
            c1,
            c2,
            speed: 2.0 / 3.0 * c1 * c2,
        }
    }

    /// Travelling speed `A = 2/3 c1 c2`.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn position(&self, t: f64) -> f64 {
        self.speed * t
    }

    pub fn eval(&self, t: f64, x: f64) -> (f64, f64) {
        let e = (-(x - self.speed * t).abs()).exp();
        (self.c1 * e, self.c2 * e)
    }
}

/// Constant amplitudes of a peakon pair: `u` carries `a1, a2`, `v` carries
/// `b1, b2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairAmplitudes {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl PairAmplitudes {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64) -> Self {
        Self { a1, a2, b1, b2 }
    }

    /// A pair whose peaks meet at `t = 0`, at `x = -1/2`.
    pub fn collision_example() -> Self {
        Self::new(1.0, 1.0, 2.0, 5.0)
    }

    pub fn is_equal_product(&self) -> bool {
        self.a1 * self.b1 == self.a2 * self.b2
    }
}

/// Position shift `Γ(t)` of the unequal-product branch.
pub fn gamma(amps: PairAmplitudes, t: f64) -> Result<f64> {
    let PairAmplitudes { a1, a2, b1, b2 } = amps;
    let diff = a1 * b1 - a2 * b2;
    if diff == 0.0 {
        return Err(SqqError::EqualProduct);
    }
    let decay = (-2.0 / 3.0 * (diff * t).abs()).exp();
    let sym = 3.0 * (a1 * b2 + a2 * b1) / (2.0 * diff.abs());
    let skew = 3.0 * (a1 * b2 - a2 * b1) / (2.0 * diff);
    Ok(-sym * sgn(t) * (decay - 1.0) + skew * decay)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdeVariant {
    /// `-2 x` the printed right-hand side; reproduces the closed forms.
    #[default]
    Corrected,
    /// The right-hand side as printed.
    Printed,
    /// Velocities that satisfy the weak form: the transport velocity
    /// averaged across each kink. Differs from `Corrected` in the coupling,
    /// `2 p_right r_left e^{-|q1-q2|}` instead of `2 p_left r_right e^{-|q1-q2|}`.
    Transport,
}

/// A peakon pair at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPeakon {
    pub amps: PairAmplitudes,
    pub q1: f64,
    pub q2: f64,
    /// Constant `C1 = q1 - q2` of the equal-product branch.
    pub separation: Option<f64>,
}

impl TwoPeakon {
    pub fn new(amps: PairAmplitudes, q1: f64, q2: f64) -> Self {
        Self {
            amps,
            q1,
            q2,
            separation: None,
        }
    }

    /// Equal-product pair with separation constant `c1`; positions are set
    /// to their closed-form values at `t = 0`.
    pub fn equal_product(amps: PairAmplitudes, c1: f64) -> Result<Self> {
        if !amps.is_equal_product() {
            return Err(SqqError::InvalidArgument(
                "equal-product branch requires A1*B1 == A2*B2".into(),
            ));
        }
        let mut pk = Self {
            amps,
            q1: 0.0,
            q2: 0.0,
            separation: Some(c1),
        };
        let (q1, q2) = pk.positions_closed(0.0)?;
        pk.q1 = q1;
        pk.q2 = q2;
        Ok(pk)
    }

    /// Pair whose positions are the closed-form values at time `t`.
    pub fn closed_form_at(amps: PairAmplitudes, separation: Option<f64>, t: f64) -> Result<Self> {
        let mut pk = Self {
            amps,
            q1: 0.0,
            q2: 0.0,
            separation,
        };
        let (q1, q2) = pk.positions_closed(t)?;
        pk.q1 = q1;
        pk.q2 = q2;
        Ok(pk)
    }

    /// Closed-form peak positions at time `t`.
    pub fn positions_closed(&self, t: f64) -> Result<(f64, f64)> {
        let PairAmplitudes { a1, a2, b1, b2 } = self.amps;
        if self.amps.is_equal_product() {
            let c1 = self
                .separation
                .ok_or_else(|| SqqError::InvalidArgument("equal-product branch needs a separation constant".into()))?;
            let s = sgn(c1);
            let bracket = -a1 * b1 / 3.0 + 0.5 * (a1 * b2 * (s - 1.0) - a2 * b1 * (s + 1.0)) * (-c1.abs()).exp();
            let q1 = -2.0 * bracket * t + 0.5 * c1;
            Ok((q1, q1 - c1))
        } else {
            let g = gamma(self.amps, t)?;
            Ok((2.0 / 3.0 * a1 * b1 * t + g, 2.0 / 3.0 * a2 * b2 * t + g))
        }
    }

    /// Right-hand side `(dq1/dt, dq2/dt)` at the current positions.
    pub fn ode_rhs(&self, variant: OdeVariant) -> Result<(f64, f64)> {
        pair_velocities(self.amps, self.q1, self.q2, variant)
    }

    pub fn eval(&self, x: f64) -> (f64, f64) {
        let e1 = (-(x - self.q1).abs()).exp();
        let e2 = (-(x - self.q2).abs()).exp();
        let a = self.amps;
        (a.a1 * e1 + a.a2 * e2, a.b1 * e1 + a.b2 * e2)
    }
}

fn pair_velocities(amps: PairAmplitudes, q1: f64, q2: f64, variant: OdeVariant) -> Result<(f64, f64)> {
    if q1 == q2 {
        return Err(SqqError::CoincidentPeaks(q1));
    }
    let PairAmplitudes { a1, a2, b1, b2 } = amps;
    let s = sgn(q1 - q2);
    let e = (-(q1 - q2).abs()).exp();
    if variant == OdeVariant::Transport {
        let coupling = (a2 * b1 * (1.0 - s) + a1 * b2 * (1.0 + s)) * e;
        return Ok((2.0 / 3.0 * a1 * b1 + coupling, 2.0 / 3.0 * a2 * b2 + coupling));
    }
    let coupling = 0.5 * (a1 * b2 * (s - 1.0) - a2 * b1 * (s + 1.0)) * e;
    let printed = (-a1 * b1 / 3.0 + coupling, -a2 * b2 / 3.0 + coupling);
    Ok(match variant {
        OdeVariant::Printed => printed,
        _ => (-2.0 * printed.0, -2.0 * printed.1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub q1: f64,
    pub q2: f64,
}

/// Outcome of an integration that may stop at a collision.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTrajectory {
    pub samples: Vec<TrajectorySample>,
    /// Bracketing times of a detected collision, if any.
    pub collision: Option<(f64, f64)>,
}

/// RK4 on the position ODE from `t0` to `t1`, keeping every sample up to a
/// collision instead of failing.
pub fn integrate_until_collision(
    pk: &TwoPeakon,
    t0: f64,
    t1: f64,
    dt: f64,
    variant: OdeVariant,
) -> Result<PartialTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SqqError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t1 >= t0) {
        return Err(SqqError::InvalidArgument(format!("need t1 >= t0, got [{t0}, {t1}]")));
    }
    let amps = pk.amps;
    let f = |q1: f64, q2: f64| pair_velocities(amps, q1, q2, variant);

    let mut t = t0;
    let (mut q1, mut q2) = (pk.q1, pk.q2);
    let mut samples = vec![TrajectorySample { t, q1, q2 }];
    if (q1 - q2).abs() < COLLISION_TOL {
        return Ok(PartialTrajectory {
            samples,
            collision: Some((t, t)),
        });
    }
    let steps = ((t1 - t0) / dt).ceil().max(0.0) as usize;
    for k in 0..steps {
        let t_next = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * dt };
        let h = t_next - t;
        if h <= 0.0 {
            break;
        }
        let stepped = (|| -> Result<(f64, f64)> {
            let k1 = f(q1, q2)?;
            let k2 = f(q1 + 0.5 * h * k1.0, q2 + 0.5 * h * k1.1)?;
            let k3 = f(q1 + 0.5 * h * k2.0, q2 + 0.5 * h * k2.1)?;
            let k4 = f(q1 + h * k3.0, q2 + h * k3.1)?;
            Ok((
                q1 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                q2 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            ))
        })();
        let collided = match stepped {
            Ok((n1, n2)) => {
                let crossed = sgn(n1 - n2) != sgn(q1 - q2);
                if crossed || (n1 - n2).abs() < COLLISION_TOL {
                    true
                } else {
                    q1 = n1;
                    q2 = n2;
                    false
                }
            }
            Err(SqqError::CoincidentPeaks(_)) => true,
            Err(e) => return Err(e),
        };
        if collided {
            return Ok(PartialTrajectory {
                samples,
                collision: Some((t, t_next)),
            });
        }
        t = t_next;
        samples.push(TrajectorySample { t, q1, q2 });
    }
    Ok(PartialTrajectory {
        samples,
        collision: None,
    })
}

/// RK4 trajectory sampled at `t0, t0 + dt, ..., t1`; a collision aborts
/// with [`SqqError::Collision`].
pub fn two_peakon_integrate(
    pk: &TwoPeakon,
    t0: f64,
    t1: f64,
    dt: f64,
    variant: OdeVariant,
) -> Result<Vec<TrajectorySample>> {
    let traj = integrate_until_collision(pk, t0, t1, dt, variant)?;
    match traj.collision {
        Some((t_before, t_after)) => Err(SqqError::Collision { t_before, t_after }),
        None => Ok(traj.samples),
    }
}

/// Any peakon configuration at a fixed instant: amplitudes `p` (for `u`),
/// `r` (for `v`) at positions `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakonTrain {
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
}

impl PeakonTrain {
    pub fn single(pk: &SinglePeakon, t: f64) -> Self {
        Self {
            p: vec![pk.c1],
            r: vec![pk.c2],
            q: vec![pk.position(t)],
        }
    }

    pub fn pair(pk: &TwoPeakon) -> Self {
        Self {
            p: vec![pk.amps.a1, pk.amps.a2],
            r: vec![pk.amps.b1, pk.amps.b2],
            q: vec![pk.q1, pk.q2],
        }
    }
}

/// Gaussian of standard deviation `sigma` with unit mass.
#[inline]
pub fn gaussian(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// `(g_sigma * e^{-|.|})(x)` by composite Simpson over `[-8 sigma, 8 sigma]`,
/// split at the kink of the exponential.
pub fn mollified_kernel(x: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return (-x.abs()).exp();
    }
    let (lo, hi) = (-8.0 * sigma, 8.0 * sigma);
    let f = |s: f64| gaussian(s, sigma) * (-(x - s).abs()).exp();
    if x > lo && x < hi {
        simpson(f, lo, x, 400) + simpson(f, x, hi, 400)
    } else {
        simpson(f, lo, hi, 800)
    }
}

pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for k in 0..panels {
        let x0 = a + k as f64 * h;
        acc += 4.0 * f(x0 + 0.5 * h);
        if k > 0 {
            acc += 2.0 * f(x0);
        }
    }
    acc * h / 6.0
}

/// Samples a peakon train on the grid.
///
/// Without mollification `u, v` are sampled exactly (periodic nearest image)
/// and `m, n = (I - D2)(u, v)`. With `sigma > 0` each peak's momentum, the
/// Dirac mass `2 p δ(x - q)`, is replaced by `2 p g_sigma(x - q)`: this is
/// `(1 - d²/dx²)` of the Gaussian-mollified exponential, so `m, n >= 0`
/// whenever the amplitudes are, and `u, v` are recovered by discrete
/// Helmholtz inversion.
pub fn peakon_field(train: &PeakonTrain, t: f64, grid: &Grid, sigma: Option<f64>) -> Result<FieldState> {
    if train.p.len() != train.q.len() || train.r.len() != train.q.len() {
        return Err(SqqError::InvalidArgument("peakon train arrays differ in length".into()));
    }
    match sigma {
        Some(s) if s < 0.0 || !s.is_finite() => Err(SqqError::InvalidArgument(format!(
            "mollification width must be >= 0, got {s}"
        ))),
        Some(s) if s > 0.0 => {
            let density = |amps: &[f64]| {
                grid.sample(|x| {
                    amps.iter()
                        .zip(&train.q)
                        .map(|(a, q)| 2.0 * a * gaussian(grid.wrap(x - q), s))
                        .sum()
                })
            };
            FieldState::new(grid, t, density(&train.p), density(&train.r))
        }
        _ => {
            let profile = |amps: &[f64]| {
                grid.sample(|x| {
                    amps.iter()
                        .zip(&train.q)
                        .map(|(a, q)| a * (-grid.wrap(x - q).abs()).exp())
                        .sum()
                })
            };
            let (u, v) = (profile(&train.p), profile(&train.r));
            let m = grid.helmholtz_apply(&u)?;
            let n = grid.helmholtz_apply(&v)?;
            let mut s = FieldState::new(grid, t, m, n)?;
            // keep the exactly sampled velocities; they equal the inverted ones to roundoff
            s.u = u;
            s.v = v;
            s.ux = grid.centered_unchecked(&s.u);
            s.vx = grid.centered_unchecked(&s.v);
            for j in 0..s.len() {
                s.transport[j] = crate::grid::transport_velocity(s.u[j], s.v[j], s.ux[j], s.vx[j]);
                s.slope[j] = crate::grid::slope_field(s.u[j], s.v[j], s.ux[j], s.vx[j], s.m[j], s.n[j]);
            }
            Ok(s)
        }
    }
}
