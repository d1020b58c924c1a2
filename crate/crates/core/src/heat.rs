//! W-invariant heat kernels of the flat and curved complex spaces of type
//! `A_n`, their envelopes, and independent oracles.
//!
//! The flat kernel is taken with respect to `pi(Y)^2 dY` on the chamber:
//!
//! `p_t(X, Y) = t^{-d/2-gamma} e^{-(|X|^2+|Y|^2)/4t} psi_X(Y/2t) / (2^{gamma+d/2} c_k)`.
//!
//! Unit total mass fixes `c_k = sf(n) (2 pi)^{d/2}`, which is the
//! Gaussian integral of `pi^2` over `R^d` divided by `|W|`.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::bigfloat::{is_negative, ln_abs, Ext};
use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::root_system::{ln_pi, ChamberPoint, RootSystem, SignedPermutations};
use crate::spherical::{
    alternating_phase_sum, ln_sinhc_product, psi_imaginary, EvalResult, Evaluator, Method,
    DEFAULT_TARGET,
};
use crate::summation::NeumaierSum;
use crate::{ln_factorial, ln_superfactorial};

const EPS: f64 = f64::EPSILON;
const LN_2: f64 = core::f64::consts::LN_2;

/// Where the normalising constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Unit total mass, measured by quadrature.
    Calibrated,
    /// Gaussian moment of `pi^2`, by tensor Gauss–Hermite.
    MmsQuadrature,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Calibrated => "calibrated",
            Provenance::MmsQuadrature => "mms_quadrature",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatContext {
    n: usize,
    c_k: f64,
    provenance: Provenance,
    /// Accuracy requested from the spherical function.
    pub target: f64,
    pub evaluator: Evaluator,
}

impl HeatContext {
    pub fn new(n: usize, c_k: f64, provenance: Provenance) -> Result<Self> {
        RootSystem::new(n)?;
        if !(c_k > 0.0) || !c_k.is_finite() {
            return Err(Error::InvalidInput(format!("c_k = {c_k} must be positive")));
        }
        Ok(Self {
            n,
            c_k,
            provenance,
            target: DEFAULT_TARGET,
            evaluator: Evaluator::default(),
        })
    }

    /// Context with `c_k` from [`mms_constant`]; rank at most 5.
    pub fn mms(n: usize) -> Result<Self> {
        Self::new(n, mms_constant(n)?, Provenance::MmsQuadrature)
    }

    /// Context with `c_k` from [`calibrate_constant`]; rank at most 2.
    pub fn calibrated(n: usize, t_ref: f64, tol: f64) -> Result<(Self, Calibration)> {
        let cal = calibrate_constant(n, t_ref, tol)?;
        Ok((Self::new(n, cal.c_k, Provenance::Calibrated)?, cal))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.n + 1
    }

    pub fn gamma(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn c_k(&self) -> f64 {
        self.c_k
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    fn check(&self, t: f64, points: &[&ChamberPoint]) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("time {t} must be positive")));
        }
        for p in points {
            if p.dim() != self.d() {
                return Err(Error::InvalidInput(format!(
                    "expected {} coordinates, got {}",
                    self.d(),
                    p.dim()
                )));
            }
        }
        Ok(())
    }

    /// `log(pi(rho) / (2^{gamma + d/2} c_k))`, the method-of-images constant.
    fn ln_images_constant(&self) -> f64 {
        ln_superfactorial(self.n) - 0.5 * self.d() as f64 * LN_2 - libm::log(self.c_k)
    }
}

/// `int_{R^d} e^{-|x|^2/2} pi(x)^2 dx` by tensor Gauss–Hermite (exact).
pub fn mms_integral(n: usize) -> Result<f64> {
    if n > 5 {
        return Err(Error::RankTooLarge { rank: n, cap: 5 });
    }
    let d = n + 1;
    let (nodes, weights) = quadrature::gauss_hermite(n + 2);
    let m = nodes.len();
    let mut idx = alloc::vec![0usize; d];
    let mut z = alloc::vec![0.0; d];
    let mut sum = NeumaierSum::new();
    loop {
        let mut w = 1.0;
        for k in 0..d {
            z[k] = nodes[idx[k]];
            w *= weights[idx[k]];
        }
        let p = crate::root_system::pi(&z);
        sum.add(w * p * p);
        let mut k = 0;
        loop {
            if k == d {
                // x = sqrt(2) z: Jacobian 2^{d/2}, pi^2 scales by 2^gamma.
                let gamma = (n * d / 2) as i32;
                return Ok(sum.total() * libm::pow(2.0, 0.5 * d as f64) * libm::ldexp(1.0, gamma));
            }
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// `c_k` as the Gaussian integral restricted to the chamber.
pub fn mms_constant(n: usize) -> Result<f64> {
    Ok(mms_integral(n)? / libm::exp(ln_factorial(n + 1)))
}

/// Outcome of [`calibrate_constant`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub c_k: f64,
    pub t_ref: f64,
    pub reference_x: Vec<f64>,
    /// Total mass at `2 t_ref` with the calibrated constant.
    pub mass_at_double: f64,
}

/// The constant making the total mass one at `t_ref` from `X = rho/2`.
pub fn calibrate_constant(n: usize, t_ref: f64, tol: f64) -> Result<Calibration> {
    if n > 2 {
        return Err(Error::RankTooLarge { rank: n, cap: 2 });
    }
    let rs = RootSystem::new(n)?;
    let x = rs.rho().scaled(0.5)?;
    let unit = HeatContext::new(n, 1.0, Provenance::Calibrated)?;
    let c_k = total_mass(&unit, t_ref, &x, tol)?;
    let ctx = HeatContext::new(n, c_k, Provenance::Calibrated)?;
    let mass_at_double = total_mass(&ctx, 2.0 * t_ref, &x, tol)?;
    Ok(Calibration {
        c_k,
        t_ref,
        reference_x: x.into_coords(),
        mass_at_double,
    })
}

/// Nested quadrature over `{y_0 >= y_1 >= ...} cap [lo, hi]^d`.
fn chamber_box_integral<F>(d: usize, lo: f64, hi: f64, tol: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let limits = |k: usize, prefix: &[f64]| if k == 0 { (lo, hi) } else { (lo, prefix[k - 1]) };
    let t = Tolerance::relative(tol).with_abs(tol * 1e-3);
    Ok(quadrature::integrate_nested(d, &limits, &mut f, t)?.value)
}

/// Radius beyond which a Gaussian of variance `2 var` is below `tol`.
fn gaussian_radius(var: f64, tol: f64) -> f64 {
    2.0 * libm::sqrt(var) * libm::sqrt(libm::log(1.0 / tol) + 10.0)
}

fn min_max(points: &[&[f64]]) -> (f64, f64) {
    points
        .iter()
        .flat_map(|p| p.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)))
}

/// `int p_t(X, Y) pi(Y)^2 dY` over the chamber.
pub fn total_mass(ctx: &HeatContext, t: f64, x: &ChamberPoint, tol: f64) -> Result<f64> {
    if ctx.n > 2 {
        return Err(Error::RankTooLarge { rank: ctx.n, cap: 2 });
    }
    ctx.check(t, &[x])?;
    let r = gaussian_radius(t, tol);
    let (lo, hi) = min_max(&[x.coords()]);
    let target = (tol * 1e-3).max(1e-13);
    chamber_box_integral(ctx.d(), lo - r, hi + r, tol, |y| {
        let lp = ln_pi(y);
        if lp == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let yp = ChamberPoint::new(y.to_vec())?;
        let p = heat_flat_with(ctx, t, x, &yp, target)?;
        Ok(libm::exp(p.log_value + 2.0 * lp))
    })
}

/// `|X - Y|^2`, symmetric bit for bit.
fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    let mut s = NeumaierSum::new();
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        s.add(d * d);
    }
    s.total()
}

fn heat_flat_with(ctx: &HeatContext, t: f64, x: &ChamberPoint, y: &ChamberPoint, target: f64) -> Result<EvalResult> {
    ctx.check(t, &[x, y])?;
    let s = libm::sqrt(2.0 * t);
    let a = ChamberPoint::new(x.coords().iter().map(|v| v / s).collect())?;
    let b = ChamberPoint::new(y.coords().iter().map(|v| v / s).collect())?;
    let norm = ctx.evaluator.psi_stable_normalized(&a, &b, target)?;
    let d = ctx.d() as f64;
    let g = ctx.gamma() as f64;
    let head = -(g + 0.5 * d) * LN_2 - libm::log(ctx.c_k);
    let time = -(0.5 * d + g) * libm::log(t);
    let gauss = -dist_sq(x.coords(), y.coords()) / (4.0 * t);
    let floor = 2.0 * EPS * (libm::fabs(head) + libm::fabs(time) + libm::fabs(gauss));
    Ok(norm.shifted(head + time + gauss, floor))
}

/// Flat heat kernel `p_t(X, Y)` through the spherical function.
pub fn heat_flat(ctx: &HeatContext, t: f64, x: &ChamberPoint, y: &ChamberPoint) -> Result<EvalResult> {
    heat_flat_with(ctx, t, x, y, ctx.target)
}

fn ln_root_sum<F: Fn(f64, f64) -> f64>(x: &[f64], y: &[f64], f: F) -> f64 {
    let mut s = NeumaierSum::new();
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            s.add(f(x[i] - x[j], y[i] - y[j]));
        }
    }
    s.total()
}

/// `log(t^{-d/2} e^{-|X-Y|^2/4t} / prod_{i<j} (t + alpha(X) alpha(Y)))`.
pub fn heat_envelope(t: f64, x: &ChamberPoint, y: &ChamberPoint) -> f64 {
    let d = x.dim() as f64;
    -0.5 * d * libm::log(t) - dist_sq(x.coords(), y.coords()) / (4.0 * t)
        - ln_root_sum(x.coords(), y.coords(), |a, b| libm::log(t + a * b))
}

fn rho_norm_sq(d: usize) -> f64 {
    (1..=d).map(|i| libm::pow((d + 1) as f64 - 2.0 * i as f64, 2.0)).sum()
}

fn rho_pairing(p: &[f64]) -> f64 {
    let d = p.len();
    p.iter()
        .enumerate()
        .map(|(i, v)| ((d + 1) as f64 - 2.0 * (i + 1) as f64) * v)
        .sum()
}

/// Curved kernel `e^{-|rho|^2 t} pi(X) pi(Y) / (delta^{1/2}(X) delta^{1/2}(Y)) p_t(X, Y)`.
pub fn heat_curved(ctx: &HeatContext, t: f64, x: &ChamberPoint, y: &ChamberPoint) -> Result<EvalResult> {
    if !x.is_strict() || !y.is_strict() {
        return Err(Error::DegenerateInput("curved kernel needs strictly dominant points".into()));
    }
    let flat = heat_flat(ctx, t, x, y)?;
    let corr = -rho_norm_sq(x.dim()) * t - ln_sinhc_product(x.coords()) - ln_sinhc_product(y.coords());
    Ok(flat.shifted(corr, 4.0 * EPS * libm::fabs(corr)))
}

/// Curved envelope: `e^{-|rho|^2 t} t^{-d/2} e^{-|X-Y|^2/4t} e^{-rho(X+Y)}
/// prod (1 + alpha(X))(1 + alpha(Y)) / (t + alpha(X) alpha(Y))`.
pub fn heat_curved_envelope(t: f64, x: &ChamberPoint, y: &ChamberPoint) -> f64 {
    let d = x.dim();
    -rho_norm_sq(d) * t - 0.5 * d as f64 * libm::log(t)
        - dist_sq(x.coords(), y.coords()) / (4.0 * t)
        - rho_pairing(x.coords())
        - rho_pairing(y.coords())
        + ln_root_sum(x.coords(), y.coords(), |a, b| {
            libm::log1p(a) + libm::log1p(b) - libm::log(t + a * b)
        })
}

/// `sum_w eps(w) e^{-|X - wY|^2/4t}` evaluated term by term. `Y` need not be
/// dominant.
pub fn images_signed_sum(t: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut s = NeumaierSum::new();
    let mut wy = alloc::vec![0.0; y.len()];
    let mut perms = SignedPermutations::new(y.len());
    while let Some((perm, sign)) = perms.advance() {
        for (j, &p) in perm.iter().enumerate() {
            wy[p] = y[j];
        }
        s.add(sign as f64 * libm::exp(-dist_sq(x, &wy) / (4.0 * t)));
    }
    s.total()
}

/// Method of images:
/// `p_t = C' t^{-d/2} sum_w eps(w) e^{-|X - wY|^2/4t} / (pi(X) pi(Y))`.
pub fn images_oracle(ctx: &HeatContext, t: f64, x: &ChamberPoint, y: &ChamberPoint) -> Result<EvalResult> {
    ctx.check(t, &[x, y])?;
    if !x.is_strict() || !y.is_strict() {
        return Err(Error::DegenerateInput("images oracle needs strictly dominant points".into()));
    }
    let (xc, yc) = (x.coords(), y.coords());
    // |X - wY|^2 - |X - Y|^2 = 2 sum_j y_j (x_j - x_{w(j)}).
    let mut s = NeumaierSum::new();
    let mut err = 0.0;
    let mut perms = SignedPermutations::new(xc.len());
    while let Some((perm, sign)) = perms.advance() {
        let mut e = 0.0;
        let mut mag = 0.0;
        for (j, &p) in perm.iter().enumerate() {
            let v = yc[j] * (xc[p] - xc[j]);
            e += v;
            mag += libm::fabs(v);
        }
        let term = libm::exp(e / (2.0 * t));
        s.add(sign as f64 * term);
        err += term * (EPS * (xc.len() as f64 + 4.0) * mag / (2.0 * t) + 2.0 * EPS);
    }
    let total = s.total();
    let mut rel = err / total.abs();
    let mut ln_sum = libm::log(total);
    let mut bits = 53;
    if !(total > err) || rel > 1e-14 {
        let lost = libm::log2(rel.max(1.0 / EPS) / EPS);
        bits = (128.0 + lost.min(3968.0)) as u32;
        let (ln_total, sign_ok) = ln_images_sum_ext(xc, yc, t, bits as usize);
        if !sign_ok {
            return Err(Error::ToleranceUnachievable {
                target: 1.0,
                achieved: f64::INFINITY,
            });
        }
        ln_sum = ln_total;
        rel = libm::ldexp(1.0, -(bits as i32 - 64)) + 4.0 * EPS;
    }
    let d = ctx.d() as f64;
    let log_value = ctx.ln_images_constant() - 0.5 * d * libm::log(t)
        - dist_sq(xc, yc) / (4.0 * t)
        + ln_sum
        - ln_pi(xc)
        - ln_pi(yc);
    Ok(EvalResult {
        log_value,
        method: if bits > 53 { Method::AltSumExtended } else { Method::AltSum },
        abs_log_error: rel + 8.0 * EPS * libm::fabs(log_value),
        mc_std_error: None,
        precision_bits: bits,
        confluent: false,
    })
}

/// `log sum_w eps(w) e^{<X, wY - Y>/2t}` with exponents formed from exact
/// products at `bits` of precision; the flag is false for a nonpositive sum.
fn ln_images_sum_ext(x: &[f64], y: &[f64], t: f64, bits: usize) -> (f64, bool) {
    let mut e = Ext::new(bits);
    let scale = e.num(1.0 / (2.0 * t));
    let mut total = e.num(0.0);
    let mut perms = SignedPermutations::new(x.len());
    while let Some((perm, sign)) = perms.advance() {
        let mut acc = e.num(0.0);
        for (j, &p) in perm.iter().enumerate() {
            acc = e.add(&acc, &e.mul_f64(y[j], x[p]));
            acc = e.sub(&acc, &e.mul_f64(y[j], x[j]));
        }
        let term = e.exp(&e.mul(&acc, &scale));
        total = if sign > 0 { e.add(&total, &term) } else { e.sub(&total, &term) };
    }
    if is_negative(&total) {
        return (f64::NAN, false);
    }
    match ln_abs(&total) {
        Some(v) => (v, true),
        None => (f64::NAN, false),
    }
}

/// `e^{-|lambda|^2 t} psi_{i lambda}(X) psi_{-i lambda}(Y) pi(lambda)^2` for
/// strictly dominant `lambda`.
pub fn fourier_integrand(t: f64, lambda: &ChamberPoint, x: &ChamberPoint, y: &ChamberPoint) -> Result<Complex64> {
    let neg = lambda.reversed_negated();
    let p = crate::root_system::pi(lambda.coords());
    let g = libm::exp(-lambda.norm_sq() * t);
    Ok(psi_imaginary(lambda, x)? * psi_imaginary(&neg, y)? * (g * p * p))
}

/// Heat kernel by inverse spherical transform, with the overall constant
/// fitted at one point.
#[derive(Debug, Clone)]
pub struct FourierOracle {
    n: usize,
    ln_c: f64,
    tol: f64,
}

impl FourierOracle {
    /// Fits the constant so that the oracle equals `heat_flat` at `(t, X, Y)`.
    pub fn calibrate(ctx: &HeatContext, t: f64, x: &ChamberPoint, y: &ChamberPoint, tol: f64) -> Result<Self> {
        if ctx.n > 2 {
            return Err(Error::RankTooLarge { rank: ctx.n, cap: 2 });
        }
        let reference = heat_flat(ctx, t, x, y)?;
        let raw = fourier_raw(ctx.n, t, x, y, tol)?;
        Ok(Self {
            n: ctx.n,
            ln_c: reference.log_value - raw,
            tol,
        })
    }

    /// `log C`.
    pub fn ln_constant(&self) -> f64 {
        self.ln_c
    }

    pub fn evaluate(&self, t: f64, x: &ChamberPoint, y: &ChamberPoint) -> Result<EvalResult> {
        if x.rank() != self.n || y.rank() != self.n {
            return Err(Error::InvalidInput("rank differs from the calibrated one".into()));
        }
        let raw = fourier_raw(self.n, t, x, y, self.tol)?;
        Ok(EvalResult {
            log_value: self.ln_c + raw,
            method: Method::IterQuadrature,
            abs_log_error: self.tol,
            mc_std_error: None,
            precision_bits: 53,
            confluent: false,
        })
    }
}

/// `log` of `int_chamber e^{-|l|^2 t} psi_{il}(X) psi_{-il}(Y) pi(l)^2 dl`.
///
/// The integrand equals `sf^2 Re(A_X(l) conj(A_Y(l))) / (pi(X) pi(Y))` with
/// `A_X(l) = sum_w eps(w) e^{i <w l, X>}`. The domain is cut at `|l| = R`
/// with `|W|^2 e^{-R^2 t} < tol / 10`.
fn fourier_raw(n: usize, t: f64, x: &ChamberPoint, y: &ChamberPoint, tol: f64) -> Result<f64> {
    if !x.is_strict() || !y.is_strict() {
        return Err(Error::DegenerateInput("Fourier oracle needs strictly dominant points".into()));
    }
    let d = n + 1;
    let ln_w = ln_factorial(d);
    let r = libm::sqrt((libm::log(10.0 / tol) + 2.0 * ln_w + 10.0) / t);
    let (xc, yc) = (x.coords(), y.coords());
    let j = chamber_box_integral(d, -r, r, tol, |l| {
        let g = libm::exp(-l.iter().map(|v| v * v).sum::<f64>() * t);
        if g == 0.0 {
            return Ok(0.0);
        }
        let prod = alternating_phase_sum(l, xc) * alternating_phase_sum(l, yc).conj();
        Ok(g * prod.re)
    })?;
    if !(j > 0.0) {
        return Err(Error::QuadratureNonconvergence { error: libm::fabs(j), tol });
    }
    Ok(2.0 * ln_superfactorial(n) - ln_pi(xc) - ln_pi(yc) + libm::log(j))
}

/// `|d_t g - Delta g|` at `(t, X)` for `g = e^{log_f - log_f(t, X)}` by central
/// differences with step `h` in time and space, where
/// `Delta g = sum_i d_ii g + 2 sum_{i<j} (d_i g - d_j g)/(x_i - x_j)`.
pub fn fd_residual<F>(log_f: F, t: f64, x: &ChamberPoint, h: f64) -> Result<f64>
where
    F: Fn(f64, &ChamberPoint) -> Result<f64>,
{
    if !(h > 0.0) || !(t > h) || x.min_gap() <= 2.0 * h {
        return Err(Error::PreconditionViolated(format!(
            "need t > h and walls farther than 2h (h = {h}, t = {t}, min gap = {})",
            x.min_gap()
        )));
    }
    let base = log_f(t, x)?;
    let g = |tt: f64, p: &ChamberPoint| -> Result<f64> { Ok(libm::exp(log_f(tt, p)? - base)) };
    let dt = (g(t + h, x)? - g(t - h, x)?) / (2.0 * h);
    let d = x.dim();
    let mut first = Vec::with_capacity(d);
    let mut lap = NeumaierSum::new();
    for i in 0..d {
        let shift = |c: f64| {
            let mut v = x.coords().to_vec();
            v[i] += c;
            ChamberPoint::new(v)
        };
        let plus = g(t, &shift(h)?)?;
        let minus = g(t, &shift(-h)?)?;
        lap.add((plus - 2.0 + minus) / (h * h));
        first.push((plus - minus) / (2.0 * h));
    }
    let c = x.coords();
    for i in 0..d {
        for j in (i + 1)..d {
            lap.add(2.0 * (first[i] - first[j]) / (c[i] - c[j]));
        }
    }
    Ok(libm::fabs(dt - lap.total()))
}

/// Relative residual of the heat equation for `p_t(., Y)` at `X`.
pub fn pde_residual(ctx: &HeatContext, t: f64, x: &ChamberPoint, y: &ChamberPoint, h: f64) -> Result<f64> {
    fd_residual(|tt, p| Ok(heat_flat(ctx, tt, p, y)?.log_value), t, x, h)
}

/// The same residual for the envelope, which does not solve the equation.
pub fn pde_residual_envelope(t: f64, x: &ChamberPoint, y: &ChamberPoint, h: f64) -> Result<f64> {
    fd_residual(|tt, p| Ok(heat_envelope(tt, p, y)), t, x, h)
}

/// `|int p_t(X,Z) p_s(Z,Y) pi(Z)^2 dZ - p_{t+s}(X,Y)| / p_{t+s}(X,Y)`.
///
/// The integrand is concentrated around the bridge point
/// `(s X + t Y)/(t + s)` with variance `2ts/(t+s)`; the box is cut there.
pub fn semigroup_check(
    ctx: &HeatContext,
    t: f64,
    s: f64,
    x: &ChamberPoint,
    y: &ChamberPoint,
    tol: f64,
) -> Result<f64> {
    if ctx.n > 2 {
        return Err(Error::RankTooLarge { rank: ctx.n, cap: 2 });
    }
    ctx.check(t, &[x, y])?;
    ctx.check(s, &[])?;
    let whole = heat_flat(ctx, t + s, x, y)?.log_value;
    let mid: Vec<f64> = x
        .coords()
        .iter()
        .zip(y.coords())
        .map(|(a, b)| (s * a + t * b) / (t + s))
        .collect();
    let r = gaussian_radius(2.0 * t * s / (t + s), tol);
    let (lo, hi) = min_max(&[&mid]);
    let target = (tol * 1e-3).max(1e-13);
    let total = chamber_box_integral(ctx.d(), lo - r, hi + r, tol, |z| {
        let lp = ln_pi(z);
        if lp == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let zp = ChamberPoint::new(z.to_vec())?;
        let a = heat_flat_with(ctx, t, x, &zp, target)?.log_value;
        let b = heat_flat_with(ctx, s, &zp, y, target)?.log_value;
        Ok(libm::exp(a + b + 2.0 * lp - whole))
    })?;
    Ok(libm::fabs(total - 1.0))
}

/// `log(r^d prod_{i<j} (r + x_i - x_j)^2)`.
pub fn ln_ball_volume(x: &ChamberPoint, r: f64) -> f64 {
    let c = x.coords();
    x.dim() as f64 * libm::log(r) + 2.0 * ln_root_sum(c, c, |a, _| libm::log(r + a))
}

/// `r^d prod_{i<j} (r + x_i - x_j)^2`, the volume-growth comparison quantity.
pub fn ball_volume(x: &ChamberPoint, r: f64) -> f64 {
    libm::exp(ln_ball_volume(x, r))
}

/// Kernel, envelope and the two volume-form bounds at one point (logs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormComparison {
    pub log_p: f64,
    pub log_envelope: f64,
    /// `e^{-|X-Y|^2/4t} / min(V(X, sqrt t), V(Y, sqrt t))`.
    pub log_lower_form: f64,
    /// `e^{-|X-Y|^2/4t} / max(V(X, sqrt t), V(Y, sqrt t))`.
    pub log_upper_form: f64,
}

pub fn compare_forms(ctx: &HeatContext, t: f64, x: &ChamberPoint, y: &ChamberPoint) -> Result<FormComparison> {
    let p = heat_flat(ctx, t, x, y)?;
    let r = libm::sqrt(t);
    let (vx, vy) = (ln_ball_volume(x, r), ln_ball_volume(y, r));
    let gauss = -dist_sq(x.coords(), y.coords()) / (4.0 * t);
    Ok(FormComparison {
        log_p: p.log_value,
        log_envelope: heat_envelope(t, x, y),
        log_lower_form: gauss - vx.min(vy),
        log_upper_form: gauss - vx.max(vy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn cp(v: &[f64]) -> ChamberPoint {
        ChamberPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mms_n1_is_four_pi() {
        assert!((mms_integral(1).unwrap() - 4.0 * PI).abs() < 1e-12);
        for n in 1..=4 {
            let expect = ln_superfactorial(n) + 0.5 * (n + 1) as f64 * libm::log(2.0 * PI);
            assert!((libm::log(mms_constant(n).unwrap()) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn images_matches_flat() {
        let ctx = HeatContext::mms(2).unwrap();
        let (x, y) = (cp(&[1.0, 0.2, -0.5]), cp(&[0.7, 0.6, -1.0]));
        for t in [0.05, 0.5, 3.0] {
            let a = heat_flat(&ctx, t, &x, &y).unwrap();
            let b = images_oracle(&ctx, t, &x, &y).unwrap();
            assert!((a.log_value - b.log_value).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn signed_sum_alternates() {
        let x = [1.0, 0.3, -0.2];
        let y = [0.5, 0.1, -0.9];
        let swapped = [0.1, 0.5, -0.9];
        let a = images_signed_sum(0.7, &x, &y);
        let b = images_signed_sum(0.7, &x, &swapped);
        assert!((a + b).abs() < 1e-15);
        assert!(images_signed_sum(1e8, &x, &y).abs() < 1e-6);
    }

    #[test]
    fn envelope_values() {
        let z = cp(&[0.0, 0.0]);
        let t: f64 = 2.5;
        assert!((heat_envelope(t, &z, &z) + 2.0 * t.ln()).abs() < 1e-15);
        let x = cp(&[1.0, 0.0]);
        assert!((heat_envelope(1.0, &x, &x) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ball_volume_values() {
        assert!((ball_volume(&cp(&[1.0, 0.0]), 1.0) - 4.0).abs() < 1e-14);
        let z = cp(&[0.0, 0.0, 0.0]);
        assert!((ball_volume(&z, 2.0) - 2f64.powi(3 + 6)).abs() < 1e-10);
    }

    #[test]
    fn curved_prefactor() {
        let ctx = HeatContext::mms(1).unwrap();
        let (x, y) = (cp(&[1.0, 0.0]), cp(&[2.0, 0.5]));
        let t = 0.3;
        let flat = heat_flat(&ctx, t, &x, &y).unwrap().log_value;
        let curved = heat_curved(&ctx, t, &x, &y).unwrap().log_value;
        let expect = -2.0 * t + (1.0 / libm::sinh(1.0)).ln() + (1.5 / libm::sinh(1.5)).ln();
        assert!((curved - flat - expect).abs() < 1e-14);
    }

    #[test]
    fn total_mass_n1() {
        let ctx = HeatContext::mms(1).unwrap();
        let m = total_mass(&ctx, 0.7, &cp(&[0.5, -0.5]), 1e-9).unwrap();
        assert!((m - 1.0).abs() < 1e-7, "{m}");
    }

    #[test]
    fn pde_residual_is_second_order() {
        let ctx = HeatContext::mms(1).unwrap();
        let (x, y) = (cp(&[1.0, 0.0]), cp(&[0.6, -0.3]));
        let r1 = pde_residual(&ctx, 0.5, &x, &y, 0.02).unwrap();
        let r2 = pde_residual(&ctx, 0.5, &x, &y, 0.01).unwrap();
        assert!((3.5..4.5).contains(&(r1 / r2)), "{r1} {r2}");
        assert!(pde_residual_envelope(0.5, &x, &y, 0.01).unwrap() > 100.0 * r2);
    }
}
