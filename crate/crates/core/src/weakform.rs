//! Weak-form residual oracle.
//!
//! For candidate fields `u, v` at a fixed instant this evaluates
//!
//! ```text
//! ∫ [ u_t + F u_x + ∂x p*(F_x u_x) + p*(F_x u) ] φ dx,   F = (u + u_x)(v - v_x),
//! ```
//!
//! (and the analogue for `v`) with `p = e^{-|x|}/2`, against a smooth bump
//! `φ`. Candidates are piecewise smooth with kinks (peaks) where `u_x, v_x`
//! jump. There `F_x` carries a Dirac part whose product with the jumping
//! `u_x` is resolved along the straight path
//! `u_x(θ) = u_x⁻ + θ [u_x]`, `v_x(θ) = v_x⁻ + θ [v_x]`, `θ ∈ [0, 1]`:
//!
//! ```text
//! weight(F_x u_x) = ∫₀¹ dF(θ)/dθ · u_x(θ) dθ.
//! ```
//!
//! This is what any symmetric mollification of the kink converges to and
//! reproduces the classical identities for single peakons (for instance
//! `∫ -∂x p*[F_x u_x] φ = (2 c1² c2 / 3) ∫ E φ'`).
//!
//! Quadrature is composite Simpson with `2^level` panels per unit length;
//! panels are split at every kink and at the ends of the support of `φ`.
//! Convolutions use the separable form of the exponential kernel, i.e.
//! running integrals `∫ e^{-(x-s)} T(s) ds` swept left and right across the
//! window `supp φ ± 40`.

use rand::Rng;

use crate::error::{Result, SqqError};
use crate::peakon::{sgn, OdeVariant, PeakonTrain, SinglePeakon, TwoPeakon};

/// Kernel truncation radius.
pub const KERNEL_RADIUS: f64 = 40.0;
/// Admissible quadrature window.
pub const WINDOW: (f64, f64) = (-50.0, 50.0);
/// Residuals below this are treated as converged.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Pointwise values of both fields. `uxx, vxx` are the classical (one-sided)
/// second derivatives; Dirac parts are accounted for separately at kinks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub u: f64,
    pub ux: f64,
    pub uxx: f64,
    pub ut: f64,
    pub v: f64,
    pub vx: f64,
    pub vxx: f64,
    pub vt: f64,
}

/// Candidate solution frozen at one instant.
pub trait WeakCandidate {
    /// Positions where `u_x` or `v_x` may jump.
    fn kinks(&self) -> Vec<f64>;
    /// One-sided evaluation; `side` only matters exactly at a kink.
    fn jet(&self, x: f64, side: Side) -> Jet;
}

/// A train of peakons with given peak velocities: `u_t` is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakonInstant {
    pub train: PeakonTrain,
    pub velocity: Vec<f64>,
}

impl PeakonInstant {
    pub fn single(pk: &SinglePeakon, t: f64) -> Self {
        Self {
            train: PeakonTrain::single(pk, t),
            velocity: vec![pk.speed()],
        }
    }

    /// Single peakon moving with an arbitrary speed (sensitivity controls).
    pub fn single_with_speed(c1: f64, c2: f64, speed: f64, t: f64) -> Self {
        Self {
            train: PeakonTrain {
                p: vec![c1],
                r: vec![c2],
                q: vec![speed * t],
            },
            velocity: vec![speed],
        }
    }

    /// Pair at its current positions with velocities from the position ODE.
    pub fn pair(pk: &TwoPeakon, variant: OdeVariant) -> Result<Self> {
        let (d1, d2) = pk.ode_rhs(variant)?;
        Ok(Self {
            train: PeakonTrain::pair(pk),
            velocity: vec![d1, d2],
        })
    }

    /// Same configuration translated by `offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        let mut s = self.clone();
        s.train.q.iter_mut().for_each(|q| *q += offset);
        s
    }

    pub fn max_abs_u(&self) -> f64 {
        self.train
            .q
            .iter()
            .map(|&x| self.jet(x, Side::Left).u.abs())
            .fold(0.0, f64::max)
    }
}

impl WeakCandidate for PeakonInstant {
    fn kinks(&self) -> Vec<f64> {
        self.train.q.clone()
    }

    fn jet(&self, x: f64, side: Side) -> Jet {
        let mut j = Jet::default();
        let tr = &self.train;
        for i in 0..tr.q.len() {
            let d = x - tr.q[i];
            let s = if d == 0.0 {
                match side {
                    Side::Left => -1.0,
                    Side::Right => 1.0,
                }
            } else {
                sgn(d)
            };
            let e = (-d.abs()).exp();
            let (p, r, c) = (tr.p[i], tr.r[i], self.velocity[i]);
            j.u += p * e;
            j.ux -= s * p * e;
            j.uxx += p * e;
            j.ut += s * c * p * e;
            j.v += r * e;
            j.vx -= s * r * e;
            j.vxx += r * e;
            j.vt += s * c * r * e;
        }
        j
    }
}

/// Smooth space-time fields given as closures `(t, x) -> (f, f_x, f_xx)`;
/// time derivatives by fourth-order central differencing.
pub struct SmoothFields<U, V> {
    pub t: f64,
    pub u: U,
    pub v: V,
}

impl<U, V> SmoothFields<U, V>
where
    U: Fn(f64, f64) -> (f64, f64, f64),
    V: Fn(f64, f64) -> (f64, f64, f64),
{
    fn time_derivative(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = 1e-4 * (1.0 + self.t.abs());
        let t = self.t;
        (f(t - 2.0 * h) - 8.0 * f(t - h) + 8.0 * f(t + h) - f(t + 2.0 * h)) / (12.0 * h)
    }
}

impl<U, V> WeakCandidate for SmoothFields<U, V>
where
    U: Fn(f64, f64) -> (f64, f64, f64),
    V: Fn(f64, f64) -> (f64, f64, f64),
{
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }

    fn jet(&self, x: f64, _side: Side) -> Jet {
        let (u, ux, uxx) = (self.u)(self.t, x);
        let (v, vx, vxx) = (self.v)(self.t, x);
        Jet {
            u,
            ux,
            uxx,
            ut: self.time_derivative(|s| (self.u)(s, x).0),
            v,
            vx,
            vxx,
            vt: self.time_derivative(|s| (self.v)(s, x).0),
        }
    }
}

/// Bump `φ(x) = exp(-1/(1 - z²))`, `z = (x - center)/half_width`, on
/// `|z| < 1`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub center: f64,
    pub half_width: f64,
    pub scale: f64,
}

impl TestFunction {
    pub fn new(center: f64, half_width: f64) -> Self {
        Self {
            center,
            half_width,
            scale: 1.0,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            scale: self.scale * factor,
            ..self
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn value(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.half_width;
        if z.abs() >= 1.0 {
            0.0
        } else {
            self.scale * (-1.0 / (1.0 - z * z)).exp()
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.half_width;
        if z.abs() >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - z * z;
        self.scale * (-1.0 / w).exp() * (-2.0 * z / (w * w)) / self.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub residual_u: f64,
    pub residual_v: f64,
    pub quadrature_level: u32,
    /// `log2` of the ratio of successive-level residual magnitudes; absent
    /// when both levels sit at the noise floor.
    pub estimated_order: Option<f64>,
}

impl ResidualReport {
    pub fn magnitude(&self) -> f64 {
        self.residual_u.abs().max(self.residual_v.abs())
    }
}

/// The tested integrals of every term of the weak form, for both
/// components. Signs follow the written equation: `residual = time +
/// transport - nonlocal_deriv - nonlocal`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TermIntegrals {
    /// `∫ u_t φ`
    pub time_u: f64,
    /// `∫ F u_x φ`
    pub transport_u: f64,
    /// `∫ -∂x p*[F_x u_x] φ`
    pub nonlocal_deriv_u: f64,
    /// `∫ -p*[F_x u] φ`
    pub nonlocal_u: f64,
    pub time_v: f64,
    pub transport_v: f64,
    pub nonlocal_deriv_v: f64,
    pub nonlocal_v: f64,
}

impl TermIntegrals {
    pub fn residual_u(&self) -> f64 {
        self.time_u + self.transport_u - self.nonlocal_deriv_u - self.nonlocal_u
    }

    pub fn residual_v(&self) -> f64 {
        self.time_v + self.transport_v - self.nonlocal_deriv_v - self.nonlocal_v
    }
}

const GL3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

// Sources of the four convolutions: F_x u_x, F_x u, F_x v_x, F_x v.
type Sources = [f64; 4];

fn sources(j: &Jet) -> Sources {
    let fx = (j.ux + j.uxx) * (j.v - j.vx) + (j.u + j.ux) * (j.vx - j.vxx);
    [fx * j.ux, fx * j.u, fx * j.vx, fx * j.v]
}

/// Dirac weights of the four sources at a kink.
fn kink_weights(left: &Jet, right: &Jet) -> Sources {
    let u = 0.5 * (left.u + right.u);
    let v = 0.5 * (left.v + right.v);
    let jux = right.ux - left.ux;
    let jvx = right.vx - left.vx;
    let mut w = [0.0; 4];
    for (theta, g) in GL3 {
        let ux = left.ux + theta * jux;
        let vx = left.vx + theta * jvx;
        let df = jux * (v - vx) - (u + ux) * jvx;
        w[0] += g * df * ux;
        w[1] += g * df * u;
        w[2] += g * df * vx;
        w[3] += g * df * v;
    }
    w
}

struct Segment {
    lo: f64,
    h: f64,
    // node jets (n + 1) and midpoint jets (n)
    nodes: Vec<Jet>,
    mids: Vec<Jet>,
    // delta weights sitting at the right end of this segment
    right_delta: Sources,
    inside_support: bool,
}

fn build_segments<C: WeakCandidate + ?Sized>(
    cand: &C,
    phi: &TestFunction,
    level: u32,
) -> Result<(Vec<Segment>, f64, f64)> {
    let (s_lo, s_hi) = phi.support();
    let lo = s_lo - KERNEL_RADIUS;
    let hi = s_hi + KERNEL_RADIUS;
    if !(phi.half_width > 0.0) || lo < WINDOW.0 || hi > WINDOW.1 {
        return Err(SqqError::SupportOutsideWindow { lo: s_lo, hi: s_hi });
    }
    let kinks: Vec<f64> = cand.kinks().into_iter().filter(|&k| k > lo && k < hi).collect();
    let mut breaks: Vec<(f64, bool)> = vec![(lo, false), (hi, false), (s_lo, false), (s_hi, false)];
    breaks.extend(kinks.iter().map(|&k| (k, true)));
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    // merge coincident breakpoints, keeping the kink flag
    let mut merged: Vec<(f64, bool)> = Vec::with_capacity(breaks.len());
    for (x, kink) in breaks {
        match merged.last_mut() {
            Some(last) if last.0 == x => last.1 |= kink,
            _ => merged.push((x, kink)),
        }
    }

    let per_unit = f64::from(2u32.pow(level));
    let mut segs = Vec::with_capacity(merged.len());
    for w in merged.windows(2) {
        let (a, b) = (w[0].0, w[1].0);
        let count = ((b - a) * per_unit).ceil().max(1.0) as usize;
        let h = (b - a) / count as f64;
        let mut nodes = Vec::with_capacity(count + 1);
        for k in 0..=count {
            let (x, side) = if k == count {
                (b, Side::Left)
            } else {
                (a + k as f64 * h, Side::Right)
            };
            nodes.push(cand.jet(x, side));
        }
        let mids: Vec<Jet> = (0..count)
            .map(|k| cand.jet(a + (k as f64 + 0.5) * h, Side::Right))
            .collect();
        let mid = 0.5 * (a + b);
        segs.push(Segment {
            lo: a,
            h,
            nodes,
            mids,
            right_delta: [0.0; 4],
            inside_support: mid > s_lo && mid < s_hi,
        });
    }
    for i in 0..segs.len().saturating_sub(1) {
        let at = segs[i + 1].lo;
        if merged.iter().any(|&(x, k)| k && x == at) {
            let left = *segs[i].nodes.last().expect("segment has nodes");
            let right = segs[i + 1].nodes[0];
            segs[i].right_delta = kink_weights(&left, &right);
        }
    }
    Ok((segs, lo, hi))
}

/// Tested integrals of every weak-form term at one quadrature level.
pub fn term_integrals<C: WeakCandidate + ?Sized>(cand: &C, phi: &TestFunction, level: u32) -> Result<TermIntegrals> {
    let (segs, _, _) = build_segments(cand, phi, level)?;

    // Left sweep: L(x) = ∫_{lo}^{x} e^{-(x-s)} T(s) ds at every node and midpoint.
    let mut left_nodes: Vec<Vec<Sources>> = Vec::with_capacity(segs.len());
    let mut left_mids: Vec<Vec<Sources>> = Vec::with_capacity(segs.len());
    let mut acc = [0.0; 4];
    for seg in &segs {
        let h = seg.h;
        let (e1, eh) = ((-h).exp(), (-0.5 * h).exp());
        let n = seg.mids.len();
        let mut ln = Vec::with_capacity(n + 1);
        let mut lm = Vec::with_capacity(n);
        let mut prev = sources(&seg.nodes[0]);
        ln.push(acc);
        for k in 0..n {
            let mid = sources(&seg.mids[k]);
            let next = sources(&seg.nodes[k + 1]);
            let mut at_mid = [0.0; 4];
            for q in 0..4 {
                at_mid[q] = eh * acc[q] + h * (5.0 / 24.0 * eh * prev[q] + mid[q] / 3.0 - next[q] / (24.0 * eh));
                acc[q] = e1 * acc[q] + h / 6.0 * (e1 * prev[q] + 4.0 * eh * mid[q] + next[q]);
            }
            lm.push(at_mid);
            ln.push(acc);
            prev = next;
        }
        left_nodes.push(ln);
        left_mids.push(lm);
        for q in 0..4 {
            acc[q] += seg.right_delta[q];
        }
    }

    // Right sweep: R(x) = ∫_{x}^{hi} e^{-(s-x)} T(s) ds.
    let mut right_nodes: Vec<Vec<Sources>> = vec![Vec::new(); segs.len()];
    let mut right_mids: Vec<Vec<Sources>> = vec![Vec::new(); segs.len()];
    let mut acc = [0.0; 4];
    for (i, seg) in segs.iter().enumerate().rev() {
        for q in 0..4 {
            acc[q] += seg.right_delta[q];
        }
        let h = seg.h;
        let (e1, eh) = ((-h).exp(), (-0.5 * h).exp());
        let n = seg.mids.len();
        let mut rn = vec![[0.0; 4]; n + 1];
        let mut rm = vec![[0.0; 4]; n];
        rn[n] = acc;
        let mut next = sources(&seg.nodes[n]);
        for k in (0..n).rev() {
            let mid = sources(&seg.mids[k]);
            let prev = sources(&seg.nodes[k]);
            let mut at_mid = [0.0; 4];
            for q in 0..4 {
                at_mid[q] = eh * acc[q] + h * (-prev[q] / (24.0 * eh) + mid[q] / 3.0 + 5.0 / 24.0 * eh * next[q]);
                acc[q] = e1 * acc[q] + h / 6.0 * (prev[q] + 4.0 * eh * mid[q] + e1 * next[q]);
            }
            rm[k] = at_mid;
            rn[k] = acc;
            next = prev;
        }
        right_nodes[i] = rn;
        right_mids[i] = rm;
    }

    let mut out = TermIntegrals::default();
    for (i, seg) in segs.iter().enumerate() {
        if !seg.inside_support {
            continue;
        }
        let point = |j: &Jet, l: &Sources, r: &Sources, x: f64| -> [f64; 8] {
            let f = (j.u + j.ux) * (j.v - j.vx);
            let phi_x = phi.value(x);
            // p*T = (L + R)/2, ∂x p*T = (R - L)/2
            [
                j.ut * phi_x,
                f * j.ux * phi_x,
                -0.5 * (r[0] - l[0]) * phi_x,
                -0.5 * (r[1] + l[1]) * phi_x,
                j.vt * phi_x,
                f * j.vx * phi_x,
                -0.5 * (r[2] - l[2]) * phi_x,
                -0.5 * (r[3] + l[3]) * phi_x,
            ]
        };
        let h = seg.h;
        let mut sum = [0.0; 8];
        for k in 0..seg.mids.len() {
            let x0 = seg.lo + k as f64 * h;
            let a = point(&seg.nodes[k], &left_nodes[i][k], &right_nodes[i][k], x0);
            let m = point(&seg.mids[k], &left_mids[i][k], &right_mids[i][k], x0 + 0.5 * h);
            let b = point(&seg.nodes[k + 1], &left_nodes[i][k + 1], &right_nodes[i][k + 1], x0 + h);
            for q in 0..8 {
                sum[q] += h / 6.0 * (a[q] + 4.0 * m[q] + b[q]);
            }
        }
        out.time_u += sum[0];
        out.transport_u += sum[1];
        out.nonlocal_deriv_u += sum[2];
        out.nonlocal_u += sum[3];
        out.time_v += sum[4];
        out.transport_v += sum[5];
        out.nonlocal_deriv_v += sum[6];
        out.nonlocal_v += sum[7];
    }
    let all = [
        out.time_u,
        out.transport_u,
        out.nonlocal_deriv_u,
        out.nonlocal_u,
        out.time_v,
        out.transport_v,
        out.nonlocal_deriv_v,
        out.nonlocal_v,
    ];
    if let Some(index) = all.iter().position(|x| !x.is_finite()) {
        return Err(SqqError::NonFinite {
            what: "weak-form integrand",
            index,
        });
    }
    Ok(out)
}

/// Weak-form residuals at `level`, with the convergence order estimated
/// against `level - 1`.
pub fn weak_residual<C: WeakCandidate + ?Sized>(cand: &C, phi: &TestFunction, level: u32) -> Result<ResidualReport> {
    let fine = term_integrals(cand, phi, level)?;
    let (ru, rv) = (fine.residual_u(), fine.residual_v());
    let estimated_order = if level == 0 {
        None
    } else {
        let coarse = term_integrals(cand, phi, level - 1)?;
        let c = coarse.residual_u().abs().max(coarse.residual_v().abs());
        let f = ru.abs().max(rv.abs());
        if c > NOISE_FLOOR && f > NOISE_FLOOR {
            Some((c / f).log2())
        } else {
            None
        }
    };
    Ok(ResidualReport {
        residual_u: ru,
        residual_v: rv,
        quadrature_level: level,
        estimated_order,
    })
}

/// The eight single-peakon identities used to fix the peakon speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    /// `∫ u_t φ = A c1 ∫ E φ'`
    TimeU,
    /// `∫ v_t φ = A c2 ∫ E φ'`
    TimeV,
    /// `∫ (u+u_x)(v-v_x) u_x φ = 0`
    TransportU,
    /// `∫ (u+u_x)(v-v_x) v_x φ = 0`
    TransportV,
    /// `∫ -∂x p*[F_x u_x] φ = (2 c1² c2 / 3) ∫ E φ'`
    NonlocalDerivU,
    /// `∫ -∂x p*[F_x v_x] φ = (2 c2² c1 / 3) ∫ E φ'`
    NonlocalDerivV,
    /// `∫ -p*[F_x u] φ = 0`
    NonlocalU,
    /// `∫ -p*[F_x v] φ = 0`
    NonlocalV,
}

impl Identity {
    pub const ALL: [Identity; 8] = [
        Identity::TimeU,
        Identity::TimeV,
        Identity::TransportU,
        Identity::TransportV,
        Identity::NonlocalDerivU,
        Identity::NonlocalDerivV,
        Identity::NonlocalU,
        Identity::NonlocalV,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// `∫ e^{-|x-q|} φ'(x) dx` by Simpson split at `q`.
fn exp_against_dphi(q: f64, phi: &TestFunction, level: u32) -> f64 {
    let (a, b) = phi.support();
    let per_unit = f64::from(2u32.pow(level));
    let f = |x: f64| (-(x - q).abs()).exp() * phi.derivative(x);
    let piece = |lo: f64, hi: f64| {
        if hi <= lo {
            0.0
        } else {
            let n = ((hi - lo) * per_unit).ceil().max(1.0) as usize;
            crate::peakon::simpson(f, lo, hi, n)
        }
    };
    if q > a && q < b {
        piece(a, q) + piece(q, b)
    } else {
        piece(a, b)
    }
}

/// Checks one single-peakon identity (peak at the origin, `t = 0`) against a
/// randomly drawn bump whose support covers the peak. Returns the deviation,
/// normalised by the larger side unless the claimed value is zero.
pub fn identity_check<R: Rng + ?Sized>(which: Identity, c1: f64, c2: f64, level: u32, rng: &mut R) -> Result<f64> {
    let pk = SinglePeakon::new(c1, c2);
    let cand = PeakonInstant::single(&pk, 0.0);
    let phi = TestFunction::new(rng.random_range(-1.5..1.5), rng.random_range(2.0..4.0));
    let terms = term_integrals(&cand, &phi, level)?;
    let e_dphi = exp_against_dphi(0.0, &phi, level);
    let a = pk.speed();
    let (lhs, rhs) = match which {
        Identity::TimeU => (terms.time_u, a * c1 * e_dphi),
        Identity::TimeV => (terms.time_v, a * c2 * e_dphi),
        Identity::TransportU => (terms.transport_u, 0.0),
        Identity::TransportV => (terms.transport_v, 0.0),
        Identity::NonlocalDerivU => (terms.nonlocal_deriv_u, 2.0 * c1 * c1 * c2 / 3.0 * e_dphi),
        Identity::NonlocalDerivV => (terms.nonlocal_deriv_v, 2.0 * c2 * c2 * c1 / 3.0 * e_dphi),
        Identity::NonlocalU => (terms.nonlocal_u, 0.0),
        Identity::NonlocalV => (terms.nonlocal_v, 0.0),
    };
    let diff = (lhs - rhs).abs();
    if rhs == 0.0 {
        return Ok(diff);
    }
    let scale = lhs.abs().max(rhs.abs());
    Ok(if scale == 0.0 { 0.0 } else { diff / scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peakon::PairAmplitudes;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn zero_fields_have_zero_residual() {
        let z = SmoothFields {
            t: 0.3,
            u: |_t: f64, _x: f64| (0.0, 0.0, 0.0),
            v: |_t: f64, _x: f64| (0.0, 0.0, 0.0),
        };
        let r = weak_residual(&z, &TestFunction::new(0.0, 2.0), 6).unwrap();
        assert_eq!((r.residual_u, r.residual_v), (0.0, 0.0));
    }

    #[test]
    fn test_function_shape() {
        let phi = TestFunction::new(1.0, 2.0);
        assert_eq!(phi.value(3.0), 0.0);
        assert_eq!(phi.value(-1.5), 0.0);
        assert!((phi.value(1.0) - (-1.0f64).exp()).abs() < 1e-15);
        let h = 1e-6;
        for x in [-0.5, 0.3, 1.7, 2.6] {
            let fd = (phi.value(x + h) - phi.value(x - h)) / (2.0 * h);
            assert!((fd - phi.derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn support_outside_window_is_refused() {
        let cand = PeakonInstant::single(&SinglePeakon::new(1.0, 1.0), 0.0);
        assert!(matches!(
            weak_residual(&cand, &TestFunction::new(9.0, 2.0), 4),
            Err(SqqError::SupportOutsideWindow { .. })
        ));
    }

    #[test]
    fn kink_weights_reproduce_one_third_rule() {
        // single peakon c1 = c2 = 1: u_x jumps from 1 to -1
        let left = Jet {
            u: 1.0,
            ux: 1.0,
            v: 1.0,
            vx: 1.0,
            ..Jet::default()
        };
        let right = Jet {
            u: 1.0,
            ux: -1.0,
            v: 1.0,
            vx: -1.0,
            ..Jet::default()
        };
        let w = kink_weights(&left, &right);
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!(w[1].abs() < 1e-15);
    }

    #[test]
    fn single_peakon_residual_is_small() {
        let cand = PeakonInstant::single(&SinglePeakon::new(1.0, 1.0), 0.5);
        let r = weak_residual(&cand, &TestFunction::new(3.0, 2.0), 8).unwrap();
        assert!(r.magnitude() <= 1e-4, "{r:?}");
        let centred = weak_residual(&cand, &TestFunction::new(0.0, 2.0), 8).unwrap();
        assert!(centred.magnitude() <= 1e-4, "{centred:?}");
    }

    #[test]
    fn wrong_speed_is_detected() {
        let c = PeakonInstant::single_with_speed(1.0, 1.0, 0.99 * 2.0 / 3.0, 0.0);
        let r = weak_residual(&c, &TestFunction::new(0.7, 2.0), 8).unwrap();
        assert!(r.magnitude() > 1e-3, "{r:?}");
    }

    #[test]
    fn pair_adjudication() {
        let amps = PairAmplitudes::collision_example();
        for t in [0.5, -0.3] {
            let pk = TwoPeakon::closed_form_at(amps, None, t).unwrap();
            let phi = TestFunction::new(0.5 * (pk.q1 + pk.q2), 2.0);
            let norm = PeakonInstant::pair(&pk, OdeVariant::Transport).unwrap().max_abs_u();
            let r = |v| weak_residual(&PeakonInstant::pair(&pk, v).unwrap(), &phi, 8).unwrap();
            let transport = r(OdeVariant::Transport);
            assert!(transport.magnitude() <= 1e-4 * norm, "{transport:?}");
            for v in [OdeVariant::Corrected, OdeVariant::Printed] {
                let bad = r(v);
                assert!(bad.magnitude() > 1e-2 * norm, "{v:?}: {bad:?}");
            }
        }
    }

    #[test]
    fn residual_is_linear_in_phi_and_translation_covariant() {
        let pk = TwoPeakon::closed_form_at(PairAmplitudes::collision_example(), None, 0.2).unwrap();
        let cand = PeakonInstant::pair(&pk, OdeVariant::Printed).unwrap();
        let phi = TestFunction::new(pk.q1, 1.5);
        let r1 = weak_residual(&cand, &phi, 7).unwrap();
        let r3 = weak_residual(&cand, &phi.scaled(3.0), 7).unwrap();
        assert!((r3.residual_u - 3.0 * r1.residual_u).abs() < 1e-12 * r1.residual_u.abs().max(1.0));
        let shifted = cand.shifted(1.25);
        let phi_s = TestFunction::new(phi.center + 1.25, 1.5);
        let rs = weak_residual(&shifted, &phi_s, 7).unwrap();
        assert!((rs.residual_u - r1.residual_u).abs() < 1e-10);
        assert!((rs.residual_v - r1.residual_v).abs() < 1e-10);
    }

    #[test]
    fn identities_hold() {
        let mut rng = StdRng::seed_from_u64(7);
        let d = identity_check(Identity::TransportU, 1.0, 1.0, 10, &mut rng).unwrap();
        assert!(d <= 1e-8, "{d}");
        let d = identity_check(Identity::NonlocalDerivU, 2.0, 1.0, 10, &mut rng).unwrap();
        assert!(d <= 1e-4, "{d}");
        for id in Identity::ALL {
            assert_eq!(identity_check(id, 0.0, 1.3, 6, &mut rng).unwrap(), 0.0);
            let d = identity_check(id, 1.2, -0.7, 8, &mut rng).unwrap();
            assert!(d <= 1e-6, "{id:?}: {d}");
        }
    }

    #[test]
    fn smooth_candidate_uses_time_differencing() {
        // u = v = e^{-x²} t: u_t = e^{-x²}
        let u = |t: f64, x: f64| {
            let g = (-x * x).exp();
            (t * g, -2.0 * x * t * g, (4.0 * x * x - 2.0) * t * g)
        };
        let f = SmoothFields { t: 0.7, u, v: u };
        let j = f.jet(0.3, Side::Left);
        assert!((j.ut - (-0.09f64).exp()).abs() < 1e-10);
    }
}
