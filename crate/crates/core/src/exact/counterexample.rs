//! Compactly supported spacelike field with a light segment.
//!
//! Coordinates are `x = (y, z, x_m)` with `y` in `R^(m-l)` and `z` in
//! `R^(l-1)`; `r = |y|`, `s = |z|`. The field is
//!
//! ```text
//! U(x) = (1 - eps^(2k) r^(2k)) zeta(r) theta(eps s) zeta(x_m) A(x_m)
//! ```
//!
//! with `A` the primitive of an even cutoff `a` that equals one on
//! `[-eps, eps]`. On `{y = 0, |z| <= 1/eps, |x_m| <= eps}` the field is
//! `x_m` and `|DU| = 1`. Everything here is evaluated through the partial
//! derivatives in `(r, s, x_m)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate, integrate_with_limit};
use crate::sources::unit_sphere_area;

/// `1 - |DU|^2` below `-GRADIENT_SLACK` is reported as a construction failure.
const GRADIENT_SLACK: f64 = 1e-12;

/// Smooth step on `[0, 1]`, flat to all orders at both ends. Returns the
/// value and the first two derivatives.
pub fn smooth_step(x: f64) -> [f64; 3] {
    if x <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    if x >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    // S = 1 / (1 + e^q), q = 1/x - 1/(1-x).
    let q = 1.0 / x - 1.0 / (1.0 - x);
    let dq = -1.0 / (x * x) - 1.0 / ((1.0 - x) * (1.0 - x));
    let ddq = 2.0 / (x * x * x) - 2.0 / ((1.0 - x) * (1.0 - x) * (1.0 - x));
    let e = (-q.abs()).exp();
    let s = if q > 0.0 { e / (1.0 + e) } else { 1.0 / (1.0 + e) };
    let s1ms = e / ((1.0 + e) * (1.0 + e));
    let d1 = -s1ms * dq;
    let d2 = -d1 * (1.0 - 2.0 * s) * dq - s1ms * ddq;
    [s, d1, d2]
}

/// Value, `1 - value` (kept separately for accuracy near one) and two
/// derivatives of a cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffJet {
    pub value: f64,
    pub defect: f64,
    pub d1: f64,
    pub d2: f64,
}

impl CutoffJet {
    fn flat(value: f64) -> Self {
        CutoffJet {
            value,
            defect: 1.0 - value,
            d1: 0.0,
            d2: 0.0,
        }
    }

    fn mirrored(mut self, t: f64) -> Self {
        if t < 0.0 {
            self.d1 = -self.d1;
        }
        self
    }
}

/// Even profile equal to one on `[0, start]`, to
/// `1 - exp(lambda - 1/(t - start)) / 2` on `(start, start + 1/lambda]`
/// (the value there is `1/2`), and bridged to zero before
/// `start + 2/lambda`.
///
/// The bridge blends the exponential piece into a decaying step
/// `c S((end - t) / (end - j))` with a second flat step. The blend
/// finishes before the exponential piece crosses `c`, so the profile is
/// strictly decreasing on `(start, end)` and `C^inf` at every junction.
#[derive(Clone, Copy, Debug)]
struct Profile {
    start: f64,
    lambda: f64,
    junction: f64,
    blend_end: f64,
    end: f64,
    tail_scale: f64,
}

impl Profile {
    fn new(start: f64, lambda: f64) -> Self {
        let junction = start + 1.0 / lambda;
        let end = start + 2.0 / lambda;
        // The exponential piece vanishes at start + 1 / (lambda - ln 2).
        let zero = start + 1.0 / (lambda - std::f64::consts::LN_2);
        let blend_end = junction + 0.25 * (zero - junction);
        let mut p = Profile {
            start,
            lambda,
            junction,
            blend_end,
            end,
            tail_scale: 0.0,
        };
        p.tail_scale = 0.5 * p.piece(blend_end).value;
        p
    }

    /// The exponential piece, valid for `t > start`.
    fn piece(&self, t: f64) -> CutoffJet {
        let u = t - self.start;
        let e = 0.5 * (self.lambda - 1.0 / u).exp();
        let iu = 1.0 / u;
        let e1 = e * iu * iu;
        let e2 = e * (iu * iu * iu * iu - 2.0 * iu * iu * iu);
        CutoffJet {
            value: 1.0 - e,
            defect: e,
            d1: -e1,
            d2: -e2,
        }
    }

    fn tail(&self, t: f64) -> CutoffJet {
        let w = self.end - self.junction;
        let [s, s1, s2] = smooth_step((self.end - t) / w);
        let v = self.tail_scale * s;
        CutoffJet {
            value: v,
            defect: 1.0 - v,
            d1: -self.tail_scale * s1 / w,
            d2: self.tail_scale * s2 / (w * w),
        }
    }

    fn eval(&self, t: f64) -> CutoffJet {
        let x = t.abs();
        let jet = if x <= self.start {
            CutoffJet::flat(1.0)
        } else if x <= self.junction {
            self.piece(x)
        } else if x < self.blend_end {
            let g = self.piece(x);
            let h = self.tail(x);
            let w = self.blend_end - self.junction;
            let [c, c1, c2] = smooth_step((x - self.junction) / w);
            let (c1, c2) = (c1 / w, c2 / (w * w));
            let dh = h.value - g.value;
            CutoffJet {
                value: (1.0 - c) * g.value + c * h.value,
                defect: (1.0 - c) * g.defect + c * h.defect,
                d1: (1.0 - c) * g.d1 + c * h.d1 + c1 * dh,
                d2: (1.0 - c) * g.d2 + c * h.d2 + 2.0 * c1 * (h.d1 - g.d1) + c2 * dh,
            }
        } else if x < self.end {
            self.tail(x)
        } else {
            CutoffJet::flat(0.0)
        };
        jet.mirrored(t)
    }

    fn breakpoints(&self) -> [f64; 4] {
        [self.start, self.junction, self.blend_end, self.end]
    }
}

fn theta_profile() -> Profile {
    Profile::new(1.0, 2.0)
}

fn a_profile(eps: f64) -> Profile {
    Profile::new(eps, 2.0 / eps)
}

/// `theta_1`: one on `[0, 1]`, `1 - (e^2/2) exp(-1/(t-1))` on `(1, 3/2]`,
/// zero from 2 on, even.
pub fn cutoff_theta1(t: f64) -> f64 {
    theta_profile().eval(t).value
}

pub fn cutoff_theta1_jet(t: f64) -> CutoffJet {
    theta_profile().eval(t)
}

/// Plateau equal to one on `[-1/(2 eps), 1/(2 eps)]` and zero outside
/// `(-1/eps, 1/eps)`, with `|zeta'| <= 4 eps`.
pub fn cutoff_zeta(eps: f64, t: f64) -> f64 {
    cutoff_zeta_jet(eps, t).value
}

pub fn cutoff_zeta_jet(eps: f64, t: f64) -> CutoffJet {
    let x = t.abs();
    let k = 2.0 * eps;
    let [s, s1, s2] = smooth_step((x - 0.5 / eps) * k);
    CutoffJet {
        value: 1.0 - s,
        defect: s,
        d1: -s1 * k,
        d2: -s2 * k * k,
    }
    .mirrored(t)
}

/// Even cutoff, one on `[0, eps]`, `1 - d_eps exp(-1/(t - eps))` on
/// `(eps, 3 eps/2]`, zero from `2 eps` on.
pub fn cutoff_a(eps: f64, t: f64) -> f64 {
    a_profile(eps).eval(t).value
}

pub fn cutoff_a_jet(eps: f64, t: f64) -> CutoffJet {
    a_profile(eps).eval(t)
}

/// Primitive `A(t) = int_0^t a`, by direct quadrature. Use
/// [`Counterexample::primitive`] for repeated evaluation.
#[allow(non_snake_case)]
pub fn cutoff_A(eps: f64, t: f64) -> f64 {
    let p = a_profile(eps);
    let x = t.abs().min(p.end);
    let mut total = x.min(eps);
    let bps = p.breakpoints();
    for w in bps.windows(2) {
        let (lo, hi) = (w[0], w[1].min(x));
        if hi > lo {
            total += integrate_with_limit(&mut |s| p.eval(s).value, lo, hi, 1e-15, 0.0, 4000).value;
        }
    }
    total.copysign(t)
}

/// `d_eps = exp(2/eps) / 2`, fixed by `a(3 eps/2) = 1/2`.
pub fn d_eps(eps: f64) -> f64 {
    0.5 * (2.0 / eps).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleParams {
    pub dim: usize,
    pub ell: usize,
    pub kappa: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    0.05
}

impl CounterexampleParams {
    pub fn new(dim: usize, ell: usize, kappa: f64, eps: f64) -> Result<Self> {
        let p = CounterexampleParams { dim, ell, kappa, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::Argument(format!("dimension must be at least 3, got {}", self.dim)));
        }
        if self.ell < 1 || self.ell + 2 > self.dim {
            return Err(Error::Argument(format!(
                "ell must lie in 1..={}, got {}",
                self.dim - 2,
                self.ell
            )));
        }
        if !(self.kappa >= 1.0) || !self.kappa.is_finite() {
            return Err(Error::Argument(format!("kappa must be >= 1, got {}", self.kappa)));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::Argument(format!("eps must lie in (0, 0.5), got {}", self.eps)));
        }
        Ok(())
    }

    pub fn d_eps(&self) -> f64 {
        d_eps(self.eps)
    }

    /// `(m - l) / kappa`: the exponent below which the curvature and the
    /// source are `q`-integrable.
    pub fn critical_exponent(&self) -> f64 {
        (self.dim - self.ell) as f64 / self.kappa
    }

    /// Integer kappa gives a `C^inf` field; otherwise only `C^2`.
    pub fn is_smooth(&self) -> bool {
        self.kappa.fract() == 0.0
    }

    pub fn y_dim(&self) -> usize {
        self.dim - self.ell
    }

    pub fn z_dim(&self) -> usize {
        self.ell - 1
    }
}

/// Partial derivatives in `(r, s, x_m)` at one point, plus the singular
/// quotients `U_r / r` and `U_s / s` and `1 - |DU|^2` computed without
/// cancellation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Partials {
    pub u: f64,
    pub ur: f64,
    pub us: f64,
    pub um: f64,
    pub urr: f64,
    pub uss: f64,
    pub umm: f64,
    pub urs: f64,
    pub urm: f64,
    pub usm: f64,
    pub ur_over_r: f64,
    pub us_over_s: f64,
    pub gap: f64,
}

/// Curvature quantities at a point off the light set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointQuantities {
    /// `W = (1 - |DU|^2)^(-1/2)`, infinite on the light set.
    pub w: f64,
    /// `-div(W DU)`; NaN on the light set.
    pub rho: f64,
    /// Norm of the second fundamental form; infinite on the light set.
    pub sff: f64,
}

#[derive(Clone, Debug)]
struct PrimitiveTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

/// Evaluator for the light-segment field. Holds a cached primitive of `a`.
#[derive(Clone, Debug)]
pub struct Counterexample {
    params: CounterexampleParams,
    a: Profile,
    theta: Profile,
    c: f64,
    table: Arc<PrimitiveTable>,
}

const TABLE_INTERVALS: usize = 4096;

impl Counterexample {
    pub fn new(params: CounterexampleParams) -> Result<Self> {
        params.validate()?;
        let eps = params.eps;
        let a = a_profile(eps);
        let step = (a.end - eps) / TABLE_INTERVALS as f64;
        let mut values = Vec::with_capacity(TABLE_INTERVALS + 1);
        let mut acc = eps;
        values.push(acc);
        for k in 0..TABLE_INTERVALS {
            let lo = eps + k as f64 * step;
            acc += integrate(|s| a.eval(s).value, lo, lo + step, 1e-17, 0.0).value;
            values.push(acc);
        }
        Ok(Counterexample {
            params,
            a,
            theta: theta_profile(),
            c: eps.powf(2.0 * params.kappa),
            table: Arc::new(PrimitiveTable { lo: eps, step, values }),
        })
    }

    pub fn params(&self) -> &CounterexampleParams {
        &self.params
    }

    /// Cached `A(t)`.
    pub fn primitive(&self, t: f64) -> f64 {
        let x = t.abs();
        let tab = &self.table;
        let v = if x <= tab.lo {
            x
        } else if x >= self.a.end {
            *tab.values.last().expect("table is never empty")
        } else {
            let k = (((x - tab.lo) / tab.step) as usize).min(TABLE_INTERVALS - 1);
            let t0 = tab.lo + k as f64 * tab.step;
            tab.values[k] + integrate(|s| self.a.eval(s).value, t0, x, 1e-17, 0.0).value
        };
        v.copysign(t)
    }

    /// Splits `x` into `(r, s, x_m)`.
    pub fn reduce(&self, x: &[f64]) -> (f64, f64, f64) {
        let p = &self.params;
        assert_eq!(x.len(), p.dim, "point has the wrong dimension");
        let ny = p.y_dim();
        let r = x[..ny].iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = x[ny..p.dim - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        (r, s, x[p.dim - 1])
    }

    pub fn partials(&self, r: f64, s: f64, xm: f64) -> Partials {
        let eps = self.params.eps;
        let k = self.params.kappa;
        let c = self.c;

        let zr = cutoff_zeta_jet(eps, r);
        let r2k = r.powf(2.0 * k);
        let lin = 1.0 - c * r2k;
        let p = lin * zr.value;
        let p_def = zr.defect + zr.value * c * r2k;
        let dlin = if r > 0.0 { -2.0 * k * c * r.powf(2.0 * k - 1.0) } else { 0.0 };
        let dlin_over_r = -2.0 * k * c * r.powf(2.0 * k - 2.0);
        let ddlin = -2.0 * k * (2.0 * k - 1.0) * c * r.powf(2.0 * k - 2.0);
        let p1 = dlin * zr.value + lin * zr.d1;
        let p1_over_r = dlin_over_r * zr.value + if r > 0.0 { lin * zr.d1 / r } else { 0.0 };
        let p2 = ddlin * zr.value + 2.0 * dlin * zr.d1 + lin * zr.d2;

        let zm = cutoff_zeta_jet(eps, xm);
        let a = self.a.eval(xm);
        let big_a = self.primitive(xm);
        let z0 = zm.value * big_a;
        let z1 = zm.d1 * big_a + zm.value * a.value;
        let z1_def = zm.defect + zm.value * a.defect - zm.d1 * big_a;
        let z2 = zm.d2 * big_a + 2.0 * zm.d1 * a.value + zm.value * a.d1;

        let th = self.theta.eval(eps * s);
        let (t0, t_def, t1, t2) = (th.value, th.defect, eps * th.d1, eps * eps * th.d2);
        let t1_over_s = if s > 0.0 { t1 / s } else { 0.0 };

        let um = p * z1 * t0;
        let ur = p1 * z0 * t0;
        let us = p * z0 * t1;
        let one_minus_um = if z1 >= 0.0 {
            p_def + p * z1_def + p * z1 * t_def
        } else {
            1.0 - um
        };
        let gap = one_minus_um * (1.0 + um) - ur * ur - us * us;

        Partials {
            u: p * z0 * t0,
            ur,
            us,
            um,
            urr: p2 * z0 * t0,
            uss: p * z0 * t2,
            umm: p * z2 * t0,
            urs: p1 * z0 * t1,
            urm: p1 * z1 * t0,
            usm: p * z1 * t1,
            ur_over_r: p1_over_r * z0 * t0,
            us_over_s: p * z0 * t1_over_s,
            gap,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let (r, s, xm) = self.reduce(x);
        self.partials(r, s, xm).u
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (r, s, xm) = self.reduce(x);
        let d = self.partials(r, s, xm);
        let ny = self.params.y_dim();
        let m = self.params.dim;
        let mut g = vec![0.0; m];
        for i in 0..ny {
            g[i] = if r > 0.0 { d.ur * x[i] / r } else { 0.0 };
        }
        for i in ny..m - 1 {
            g[i] = if s > 0.0 { d.us * x[i] / s } else { 0.0 };
        }
        g[m - 1] = d.um;
        g
    }

    /// Full Hessian, row-major `m x m`. At `r = 0` or `s = 0` the radial
    /// blocks take their limits (`U_r / r -> U_rr`).
    pub fn hessian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let (r, s, xm) = self.reduce(x);
        let d = self.partials(r, s, xm);
        let ny = self.params.y_dim();
        let m = self.params.dim;
        let unit = |range: std::ops::Range<usize>, norm: f64| -> Vec<f64> {
            let mut v = vec![0.0; m];
            if norm > 0.0 {
                for i in range {
                    v[i] = x[i] / norm;
                }
            } else if !range.is_empty() {
                v[range.start] = 1.0;
            }
            v
        };
        let yh = unit(0..ny, r);
        let zh = unit(ny..m - 1, s);
        let mut h = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let mut v = 0.0;
                if i < ny && j < ny {
                    let id = if i == j { 1.0 } else { 0.0 };
                    v += d.urr * yh[i] * yh[j] + d.ur_over_r * (id - yh[i] * yh[j]);
                }
                if (ny..m - 1).contains(&i) && (ny..m - 1).contains(&j) {
                    let id = if i == j { 1.0 } else { 0.0 };
                    v += d.uss * zh[i] * zh[j] + d.us_over_s * (id - zh[i] * zh[j]);
                }
                if i == m - 1 && j == m - 1 {
                    v += d.umm;
                }
                v += d.urs * (yh[i] * zh[j] + zh[i] * yh[j]);
                let ei = if i == m - 1 { 1.0 } else { 0.0 };
                let ej = if j == m - 1 { 1.0 } else { 0.0 };
                v += d.urm * (yh[i] * ej + ei * yh[j]);
                v += d.usm * (zh[i] * ej + ei * zh[j]);
                h[i][j] = v;
            }
        }
        h
    }

    /// `W`, the source and the second fundamental form from the partials.
    pub fn quantities_reduced(&self, d: &Partials) -> Result<PointQuantities> {
        if d.gap < -GRADIENT_SLACK {
            return Err(Error::ConstructionFailure(format!(
                "|DU|^2 = {} exceeds 1; eps = {} is too large",
                1.0 - d.gap,
                self.params.eps
            )));
        }
        if d.gap <= 0.0 {
            return Ok(PointQuantities {
                w: f64::INFINITY,
                rho: f64::NAN,
                sff: f64::INFINITY,
            });
        }
        let p = &self.params;
        let ny1 = (p.y_dim() - 1) as f64;
        let has_z = p.ell >= 2;
        let nz1 = if has_z { (p.ell - 2) as f64 } else { 0.0 };
        let w = 1.0 / d.gap.sqrt();
        let mut lap = d.urr + ny1 * d.ur_over_r + d.umm;
        let mut hess2 = d.urr * d.urr + ny1 * d.ur_over_r * d.ur_over_r + d.umm * d.umm;
        if has_z {
            lap += d.uss + nz1 * d.us_over_s;
            hess2 += d.uss * d.uss + nz1 * d.us_over_s * d.us_over_s;
        }
        hess2 += 2.0 * (d.urs * d.urs + d.urm * d.urm + d.usm * d.usm);
        let hr = d.urr * d.ur + d.urs * d.us + d.urm * d.um;
        let hs = d.urs * d.ur + d.uss * d.us + d.usm * d.um;
        let hm = d.urm * d.ur + d.usm * d.us + d.umm * d.um;
        let hdu2 = hr * hr + hs * hs + hm * hm;
        let hdudu = hr * d.ur + hs * d.us + hm * d.um;
        let w2 = w * w;
        let rho = -(w * lap + w2 * w * hdudu);
        let sff = (w2 * hess2 + 2.0 * w2 * w2 * hdu2 + w2 * w2 * w2 * hdudu * hdudu).sqrt();
        Ok(PointQuantities { w, rho, sff })
    }

    pub fn quantities(&self, x: &[f64]) -> Result<PointQuantities> {
        let (r, s, xm) = self.reduce(x);
        self.quantities_reduced(&self.partials(r, s, xm))
    }

    pub fn energy_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.quantities(x)?.w)
    }

    pub fn source(&self, x: &[f64]) -> Result<f64> {
        Ok(self.quantities(x)?.rho)
    }

    pub fn second_fundamental_form(&self, x: &[f64]) -> Result<f64> {
        Ok(self.quantities(x)?.sff)
    }

    /// True on `{y = 0, |z| <= 1/eps, |x_m| <= eps}`.
    pub fn on_light_set(&self, x: &[f64]) -> bool {
        let (r, s, xm) = self.reduce(x);
        let eps = self.params.eps;
        r == 0.0 && s <= 1.0 / eps && xm.abs() <= eps
    }

    /// Outer radius of the support in each of `r`, `s`, `x_m`.
    pub fn support_extent(&self) -> (f64, f64, f64) {
        let eps = self.params.eps;
        (1.0 / eps, 2.0 / eps, 1.0 / eps)
    }

    /// Breakpoints in `x_m >= 0` where the profile of `a` or `zeta` changes.
    fn xm_breaks(&self) -> Vec<f64> {
        let eps = self.params.eps;
        let [s, j, b, e] = self.a.breakpoints();
        vec![0.0, s, j, b, e, 0.5 / eps, 1.0 / eps]
    }

    fn s_breaks(&self) -> Vec<f64> {
        let eps = self.params.eps;
        let [s, j, b, e] = self.theta.breakpoints();
        vec![0.0, s / eps, j / eps, b / eps, e / eps]
    }

    /// Dense check of `|DU| <= 1`, sampling `(r, s, x_m)` by a Halton
    /// sequence over the support and again over a neighbourhood of the
    /// light set.
    pub fn feasibility_scan(&self, samples: usize) -> Result<FeasibilityReport> {
        let (rmax, smax, mmax) = self.support_extent();
        let eps = self.params.eps;
        let has_z = self.params.ell >= 2;
        let mut report = FeasibilityReport {
            samples: 0,
            max_gradient_sq: 0.0,
            min_gap: f64::INFINITY,
            light_samples: 0,
        };
        let boxes = [(rmax, smax, mmax), (1.0, 1.2 / eps, 3.0 * eps)];
        for (bi, &(rb, sb, mb)) in boxes.iter().enumerate() {
            for i in 0..samples / 2 {
                let idx = (i + 1 + bi * samples) as u64;
                let r = rb * halton(idx, 2);
                let s = if has_z { sb * halton(idx, 3) } else { 0.0 };
                let xm = mb * (2.0 * halton(idx, 5) - 1.0);
                let d = self.partials(r, s, xm);
                report.samples += 1;
                if d.gap < -GRADIENT_SLACK {
                    return Err(Error::ConstructionFailure(format!(
                        "|DU|^2 = {} at (r, s, x_m) = ({r}, {s}, {xm}); eps = {eps} is too large",
                        1.0 - d.gap
                    )));
                }
                if r == 0.0 && s <= 1.0 / eps && xm.abs() <= eps {
                    report.light_samples += 1;
                    continue;
                }
                report.max_gradient_sq = report.max_gradient_sq.max(1.0 - d.gap);
                report.min_gap = report.min_gap.min(d.gap);
            }
        }
        Ok(report)
    }

    /// Nested quadrature of `int W^q` over a neighbourhood of the light set
    /// and of `int |rho|^q`, `int |II|^q` over the support. Level `k` adds
    /// one dyadic shell toward `r = 0`; the innermost panel `[0, r_k]` is
    /// handled by the same Gauss rule, so the estimates stay bounded
    /// exactly when the integrands are integrable.
    pub fn integrability_probe(&self, q: f64, levels: usize) -> Result<ProbeReport> {
        if !(q > 0.0) {
            return Err(Error::Argument(format!("exponent must be positive, got {q}")));
        }
        if levels < 3 {
            return Err(Error::Argument("at least three levels are needed".into()));
        }
        let p = self.params;
        let eps = p.eps;
        let (gx, gw) = gauss_legendre(8);
        let ny = p.y_dim();
        let has_z = p.ell >= 2;

        // x_m panels on [0, 1/eps]; the integrands are even in x_m.
        let xm_panels = panels(&self.xm_breaks(), &[4, 24, 12, 12, 12, 8]);
        let s_panels = if has_z {
            panels(&self.s_breaks(), &[8, 16, 12, 12])
        } else {
            vec![(0.0, 0.0)]
        };
        let xm_nodes = rule(&xm_panels, &gx, &gw);
        let s_nodes = if has_z { rule(&s_panels, &gx, &gw) } else { vec![(0.0, 1.0)] };
        let sphere_y = unit_sphere_area(ny);
        let sphere_z = if has_z { unit_sphere_area(p.ell - 1) } else { 1.0 };

        let (rmax, _, _) = self.support_extent();
        let local = LOCAL_EXTENT;
        let mut outer = vec![0.5, 1.0, 2.0, 4.0, 0.5 / eps, 1.0 / eps];
        outer.retain(|&b| b <= rmax);
        outer.dedup();
        let outer_panels = panels(&outer, &vec![4; outer.len() - 1]);
        let mut out = Vec::with_capacity(levels);
        for level in 0..levels {
            let inner = 0.5 * 0.5f64.powi((BASE_SHELLS + level) as i32);
            let mut r_panels = vec![(0.0, inner)];
            let mut lo = inner;
            while lo < 0.5 - 1e-15 {
                r_panels.push((lo, 2.0 * lo));
                lo *= 2.0;
            }
            r_panels.extend(outer_panels.iter().copied());
            let r_nodes = rule(&r_panels, &gx, &gw);
            let (mut iw, mut irho, mut isff) = (0.0, 0.0, 0.0);
            for &(r, wr) in &r_nodes {
                let jr = sphere_y * r.powi(ny as i32 - 1) * wr;
                for &(s, ws) in &s_nodes {
                    let js = if has_z { sphere_z * s.powi(p.ell as i32 - 2) * ws } else { 1.0 };
                    for &(xm, wm) in &xm_nodes {
                        let d = self.partials(r, s, xm);
                        let v = self.quantities_reduced(&d)?;
                        let jac = 2.0 * jr * js * wm;
                        if !v.w.is_finite() {
                            return Err(Error::ConstructionFailure(
                                "quadrature node landed on the light set".into(),
                            ));
                        }
                        if r <= local && xm <= local && (!has_z || s <= 1.0 / eps + local) {
                            iw += jac * v.w.powf(q);
                        }
                        irho += jac * v.rho.abs().powf(q);
                        isff += jac * v.sff.powf(q);
                    }
                }
            }
            out.push(ProbeLevel {
                level,
                inner_radius: inner,
                w_local: iw,
                rho: irho,
                sff: isff,
            });
        }
        Ok(ProbeReport { q, params: p, levels: out })
    }

    /// `int rho` over the support by the same product rule as the probe,
    /// on the half space `x_m > 0` (the source is odd in `x_m`, so the
    /// full integral vanishes identically). Returns the half-space integral
    /// and the boundary flux `int_{x_m = 0} W U_m`, which it must cancel.
    pub fn half_space_balance(&self, refinement: usize) -> Result<(f64, f64)> {
        let p = self.params;
        let eps = p.eps;
        let (gx, gw) = gauss_legendre(8);
        let ny = p.y_dim();
        let has_z = p.ell >= 2;
        let f = 1usize << refinement;
        let xm_panels = panels(&self.xm_breaks(), &[4 * f, 24 * f, 12 * f, 12 * f, 12 * f, 8 * f]);
        let s_nodes = if has_z {
            rule(&panels(&self.s_breaks(), &[8 * f, 16 * f, 12 * f, 12 * f]), &gx, &gw)
        } else {
            vec![(0.0, 1.0)]
        };
        let xm_nodes = rule(&xm_panels, &gx, &gw);
        let mut r_panels = Vec::new();
        let mut lo = 0.5f64.powi(14);
        r_panels.push((0.0, lo));
        while lo < 0.5 {
            r_panels.push((lo, 2.0 * lo));
            lo *= 2.0;
        }
        r_panels.extend(panels(&[0.5, 1.0, 2.0, 4.0, 0.5 / eps, 1.0 / eps], &[2 * f, 2 * f, 2 * f, 4 * f, 4 * f]));
        let r_nodes = rule(&r_panels, &gx, &gw);
        let sphere_y = unit_sphere_area(ny);
        let sphere_z = if has_z { unit_sphere_area(p.ell - 1) } else { 1.0 };
        let (mut total, mut flux) = (0.0, 0.0);
        for &(r, wr) in &r_nodes {
            let jr = sphere_y * r.powi(ny as i32 - 1) * wr;
            for &(s, ws) in &s_nodes {
                let js = if has_z { sphere_z * s.powi(p.ell as i32 - 2) * ws } else { 1.0 };
                for &(xm, wm) in &xm_nodes {
                    let v = self.quantities_reduced(&self.partials(r, s, xm))?;
                    total += jr * js * wm * v.rho;
                }
                let d = self.partials(r, s, 0.0);
                flux += jr * js * d.um / d.gap.sqrt();
            }
        }
        Ok((total, flux))
    }
}

/// A smooth test function of `(|y|, |z|, x_m)`: a Gaussian centred at
/// `(0, 0, center)` times `(1 + tilt (x_m - center))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxialBump {
    pub width: f64,
    pub width_m: f64,
    pub center: f64,
    pub tilt: f64,
}

impl AxialBump {
    /// Value and partials in `(r, s, x_m)`.
    pub fn jet(&self, r: f64, s: f64, xm: f64) -> [f64; 4] {
        let t = xm - self.center;
        let g = (-(r * r + s * s) / (self.width * self.width) - t * t / (self.width_m * self.width_m)).exp();
        let p = 1.0 + self.tilt * t;
        let k = -2.0 / (self.width * self.width);
        [
            g * p,
            k * r * g * p,
            k * s * g * p,
            g * (self.tilt - 2.0 * t / (self.width_m * self.width_m) * p),
        ]
    }

    /// Half-widths beyond which the bump is below `1e-15` of its peak.
    pub fn reach(&self) -> (f64, f64) {
        (6.0 * self.width, 6.0 * self.width_m)
    }
}

/// Both sides of the weak form for one test function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakFormTerms {
    /// `int W DU . D eta`.
    pub flux: f64,
    /// `int rho eta`.
    pub source: f64,
}

impl WeakFormTerms {
    pub fn discrepancy(&self) -> f64 {
        (self.flux - self.source).abs()
    }
}

impl Counterexample {
    /// `int W DU . D eta` and `int rho eta` by `points`-point Gauss panels
    /// adapted to the light segment (dyadic shells in `r`, breaks at the
    /// cutoff junctions in `x_m`), clipped to the bump's reach. Each
    /// refinement level halves every panel.
    pub fn weak_form_terms(&self, eta: &AxialBump, points: usize, refinement: usize) -> Result<WeakFormTerms> {
        if points == 0 {
            return Err(Error::Argument("need at least one point per panel".into()));
        }
        let p = self.params;
        let eps = p.eps;
        let ny = p.y_dim();
        let has_z = p.ell >= 2;
        let (gx, gw) = gauss_legendre(points);
        let split = |panels: Vec<(f64, f64)>| -> Vec<(f64, f64)> {
            let f = 1usize << refinement;
            panels
                .into_iter()
                .flat_map(|(a, b)| (0..f).map(move |k| {
                    let h = (b - a) / f as f64;
                    (a + k as f64 * h, a + (k + 1) as f64 * h)
                }))
                .collect()
        };
        let (reach, reach_m) = eta.reach();
        let half = self.xm_breaks();
        let mut xm_breaks: Vec<f64> = half.iter().rev().map(|t| -t).collect();
        xm_breaks.extend(&half[1..]);
        let counts = [8, 12, 12, 12, 24, 4];
        let xm_counts: Vec<usize> = counts.iter().chain(counts.iter().rev()).copied().collect();
        let xm_nodes = rule(
            &split(clip(&panels(&xm_breaks, &xm_counts), eta.center - reach_m, eta.center + reach_m)),
            &gx,
            &gw,
        );
        let mut r_panels = Vec::new();
        let mut lo = 0.5f64.powi(14);
        r_panels.push((0.0, lo));
        while lo < 0.5 {
            r_panels.push((lo, 2.0 * lo));
            lo *= 2.0;
        }
        r_panels.extend(panels(&[0.5, 1.0, 2.0, 4.0, 0.5 / eps, 1.0 / eps], &[2, 2, 2, 4, 4]));
        let r_nodes = rule(&split(clip(&r_panels, 0.0, reach)), &gx, &gw);
        let s_nodes = if has_z {
            rule(&split(clip(&panels(&self.s_breaks(), &[8, 16, 12, 12]), 0.0, reach)), &gx, &gw)
        } else {
            vec![(0.0, 1.0)]
        };
        let sphere_y = unit_sphere_area(ny);
        let sphere_z = if has_z { unit_sphere_area(p.ell - 1) } else { 1.0 };
        let (mut flux, mut source) = (0.0, 0.0);
        for &(r, wr) in &r_nodes {
            let jr = sphere_y * r.powi(ny as i32 - 1) * wr;
            for &(s, ws) in &s_nodes {
                let js = if has_z { sphere_z * s.powi(p.ell as i32 - 2) * ws } else { 1.0 };
                for &(xm, wm) in &xm_nodes {
                    let d = self.partials(r, s, xm);
                    let v = self.quantities_reduced(&d)?;
                    if !v.w.is_finite() {
                        return Err(Error::ConstructionFailure(
                            "quadrature node landed on the light set".into(),
                        ));
                    }
                    let e = eta.jet(r, s, xm);
                    let jac = jr * js * wm;
                    flux += jac * v.w * (d.ur * e[1] + d.us * e[2] + d.um * e[3]);
                    source += jac * v.rho * e[0];
                }
            }
        }
        Ok(WeakFormTerms { flux, source })
    }
}

/// Parts of `panels` inside `[lo, hi]`.
fn clip(panels: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    panels
        .iter()
        .filter_map(|&(a, b)| {
            let (a, b) = (a.max(lo), b.min(hi));
            (b > a).then_some((a, b))
        })
        .collect()
}

/// Dyadic shells between the innermost panel of level 0 and `r = 1/2`.
const BASE_SHELLS: usize = 4;
/// Half-width in `r` and `x_m` of the neighbourhood used for `int W^q`.
const LOCAL_EXTENT: f64 = 1.0;

fn panels(breaks: &[f64], counts: &[usize]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (w, &n) in breaks.windows(2).zip(counts) {
        let n = n.max(1);
        let h = (w[1] - w[0]) / n as f64;
        for k in 0..n {
            out.push((w[0] + k as f64 * h, w[0] + (k + 1) as f64 * h));
        }
    }
    out
}

fn rule(panels: &[(f64, f64)], gx: &[f64], gw: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(panels.len() * gx.len());
    for &(a, b) in panels {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in gx.iter().zip(gw) {
            out.push((c + h * x, h * w));
        }
    }
    out
}

/// Radical inverse of `i` in base `b`.
pub fn halton(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub samples: usize,
    /// Largest `|DU|^2` seen off the light set.
    pub max_gradient_sq: f64,
    /// Smallest `1 - |DU|^2` seen off the light set.
    pub min_gap: f64,
    pub light_samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeLevel {
    pub level: usize,
    pub inner_radius: f64,
    pub w_local: f64,
    pub rho: f64,
    pub sff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub q: f64,
    pub params: CounterexampleParams,
    pub levels: Vec<ProbeLevel>,
}

impl ProbeReport {
    /// Ratios of successive estimates, per integrand.
    pub fn ratios(&self, pick: impl Fn(&ProbeLevel) -> f64) -> Vec<f64> {
        self.levels.windows(2).map(|w| pick(&w[1]) / pick(&w[0])).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,q,inner_radius,w_local,rho,sff\n");
        for l in &self.levels {
            s.push_str(&format!(
                "{},{},{:.6e},{:.12e},{:.12e},{:.12e}\n",
                l.level, self.q, l.inner_radius, l.w_local, l.rho, l.sff
            ));
        }
        s
    }
}

pub fn counterexample_value(field: &Counterexample, x: &[f64]) -> f64 {
    field.value(x)
}

pub fn counterexample_gradient(field: &Counterexample, x: &[f64]) -> Vec<f64> {
    field.gradient(x)
}

pub fn counterexample_hessian(field: &Counterexample, x: &[f64]) -> Vec<Vec<f64>> {
    field.hessian(x)
}

pub fn counterexample_energy_density(field: &Counterexample, x: &[f64]) -> Result<f64> {
    field.energy_density(x)
}

pub fn counterexample_source(field: &Counterexample, x: &[f64]) -> Result<f64> {
    field.source(x)
}
