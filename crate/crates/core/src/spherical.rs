//! Spherical functions of the flat complex symmetric space of type `A_n`.
//!
//! `psi_lambda(X) = sf(n) / (pi(lambda) pi(X)) * sum_w eps(w) e^{<w lambda, X>}`
//! where `sf(n) = 1! 2! ... n!`. Evaluators:
//!
//! * alternating sum in `f64` with compensated summation and an a-posteriori
//!   error bound, or with extended-precision floats;
//! * a recursion over nested one-dimensional integrals of a positive
//!   integrand (no cancellation, works for degenerate `lambda`);
//! * Monte Carlo over Haar-random unitaries (the defining `K`-integral).
//!
//! [`psi_stable`] chooses among them.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::bigfloat::{self, Ext};
use crate::error::{Error, Result};
use crate::haar;
use crate::quadrature::{self, Tolerance};
use crate::root_system::{ln_pi, ChamberPoint, SignedPermutations};
use crate::summation::{self, NeumaierSum};
use crate::{ln_factorial, ln_superfactorial, DEFAULT_RANK_CAP};

/// Default relative accuracy requested by composite kernels.
pub const DEFAULT_TARGET: f64 = 1e-12;

/// Default threshold for the small regime.
pub const DEFAULT_DELTA: f64 = 1.0;

/// Samples per deterministic Monte Carlo substream.
pub const MC_CHUNK: usize = 4096;

const EPS: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    AltSum,
    AltSumExtended,
    IterQuadrature,
    MonteCarlo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AltSum => "alt_sum",
            Method::AltSumExtended => "alt_sum_extended",
            Method::IterQuadrature => "iter_quadrature",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

/// A strictly positive kernel value carried as its natural log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub log_value: f64,
    pub method: Method,
    /// Estimated absolute error of `log_value`; `+inf` when unknown.
    pub abs_log_error: f64,
    /// Relative standard error, Monte Carlo only.
    pub mc_std_error: Option<f64>,
    /// Working precision of the final evaluation (53 for plain doubles).
    pub precision_bits: u32,
    /// Set when the value is a limit taken across a degenerate input.
    pub confluent: bool,
}

impl EvalResult {
    fn new(log_value: f64, method: Method, abs_log_error: f64) -> Self {
        Self {
            log_value,
            method,
            abs_log_error,
            mc_std_error: None,
            precision_bits: 53,
            confluent: false,
        }
    }

    /// `e^{log_value}`; may overflow to `inf` or underflow to 0.
    pub fn value(&self) -> f64 {
        libm::exp(self.log_value)
    }

    /// The linear value when it is a finite, nonzero double.
    pub fn linear_value(&self) -> Option<f64> {
        let v = self.value();
        (v.is_finite() && v > 0.0).then_some(v)
    }

    /// Adds a deterministic offset in the log domain.
    pub fn shifted(mut self, offset: f64, offset_error: f64) -> Self {
        self.log_value += offset;
        self.abs_log_error += offset_error;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Small,
    Large,
    Mixed,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Small => "small",
            Regime::Large => "large",
            Regime::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeLabel {
    pub label: Regime,
    pub delta: f64,
}

/// Tuning knobs for the evaluators. `Default` gives the documented values.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator {
    pub rank_cap: usize,
    /// Simple-root values at or below this count as degenerate.
    pub degenerate_gap: f64,
    /// Estimated cancellation (bits) above which doubles are not tried.
    pub escalation_bits: f64,
    pub guard_bits: usize,
    pub max_bits: usize,
    /// Largest rank for the nested-quadrature route.
    pub quadrature_rank_cap: usize,
}

impl Default for Evaluator {
    fn default() -> Self {
        Self {
            rank_cap: DEFAULT_RANK_CAP,
            degenerate_gap: 0.0,
            escalation_bits: 40.0,
            guard_bits: 64,
            max_bits: 4096,
            quadrature_rank_cap: 3,
        }
    }
}

struct AltOutcome {
    result: EvalResult,
    /// `log psi - <lambda, X>`, computed without forming the pairing.
    rest: f64,
    /// Error of the alternating sum alone, excluding the rounding floor of
    /// the returned double.
    cancel_err: f64,
}

impl Evaluator {
    fn check_pair(&self, lambda: &ChamberPoint, x: &ChamberPoint) -> Result<usize> {
        if lambda.dim() != x.dim() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {} vs {}",
                lambda.dim(),
                x.dim()
            )));
        }
        let rank = x.rank();
        if rank > self.rank_cap {
            return Err(Error::RankTooLarge {
                rank,
                cap: self.rank_cap,
            });
        }
        Ok(rank)
    }

    fn is_degenerate(&self, p: &ChamberPoint) -> bool {
        p.dim() > 1 && p.min_gap() <= self.degenerate_gap
    }

    /// Alternating sum at `precision_bits`; doubles when `precision_bits <= 64`.
    pub fn psi_alt_sum(
        &self,
        lambda: &ChamberPoint,
        x: &ChamberPoint,
        precision_bits: usize,
    ) -> Result<EvalResult> {
        self.check_pair(lambda, x)?;
        if self.is_degenerate(lambda) || self.is_degenerate(x) {
            return Err(Error::DegenerateInput(
                "coinciding coordinates; use the quadrature evaluator".into(),
            ));
        }
        let (a, b) = canonical(lambda.coords(), x.coords());
        let out = if precision_bits <= 64 {
            alt_sum_f64(a, b)
        } else {
            alt_sum_ext(a, b, precision_bits)
        };
        if out.cancel_err.is_finite() {
            Ok(out.result)
        } else {
            Err(Error::ToleranceUnachievable {
                target: 1.0,
                achieved: f64::INFINITY,
            })
        }
    }

    /// Accurate `log psi` for any dominant pair, to `target` in the log domain.
    ///
    /// The rounding floor of representing `log psi` as a double (about
    /// `eps * |log psi|`) is reported in `abs_log_error` but not held against
    /// `target`.
    pub fn psi_stable(
        &self,
        lambda: &ChamberPoint,
        x: &ChamberPoint,
        target: f64,
    ) -> Result<EvalResult> {
        Ok(self.stable_parts(lambda, x, target)?.0)
    }

    /// [`Evaluator::psi_stable`] for `e^{-<lambda, X>} psi_lambda(X)`, which lies
    /// in `(0, 1]`. The pairing is never formed, so no precision is lost to it.
    pub fn psi_stable_normalized(
        &self,
        lambda: &ChamberPoint,
        x: &ChamberPoint,
        target: f64,
    ) -> Result<EvalResult> {
        let (mut r, rest) = self.stable_parts(lambda, x, target)?;
        r.log_value = rest;
        Ok(r)
    }

    fn stable_parts(
        &self,
        lambda: &ChamberPoint,
        x: &ChamberPoint,
        target: f64,
    ) -> Result<(EvalResult, f64)> {
        let rank = self.check_pair(lambda, x)?;
        if !(target > 0.0) {
            return Err(Error::InvalidInput("target must be positive".into()));
        }
        if lambda.is_constant() || x.is_constant() {
            return Ok((constant_case(lambda, x), 0.0));
        }
        if !self.is_degenerate(lambda) && !self.is_degenerate(x) {
            match self.strict_eval(lambda.coords(), x.coords(), target) {
                Ok(r) => return Ok(r),
                Err(Error::ToleranceUnachievable { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if rank <= self.quadrature_rank_cap {
            let tol = target.max(1e-14);
            let (mut r, rest) = if x.min_gap() > 0.0 {
                iter_parts(lambda, x, tol)?
            } else if lambda.min_gap() > 0.0 {
                iter_parts(x, lambda, tol)?
            } else {
                return self.richardson(lambda, x, target);
            };
            r.confluent = self.is_degenerate(lambda) || self.is_degenerate(x);
            return Ok((r, rest));
        }
        self.richardson(lambda, x, target)
    }

    fn strict_eval(&self, lambda: &[f64], x: &[f64], target: f64) -> Result<(EvalResult, f64)> {
        let (a, b) = canonical(lambda, x);
        let bits = cancellation_bits(a, b);
        if bits <= self.escalation_bits {
            let out = alt_sum_f64(a, b);
            if out.cancel_err <= target {
                return Ok((out.result, out.rest));
            }
        }
        let scale = libm::log2(1.0 + shifted_pairing(a, b));
        let mut prec = libm::ceil(bits + self.guard_bits as f64 + scale) as usize;
        let mut achieved = f64::INFINITY;
        while prec <= self.max_bits {
            let out = alt_sum_ext(a, b, prec);
            if out.cancel_err <= target {
                return Ok((out.result, out.rest));
            }
            achieved = out.cancel_err;
            prec *= 2;
        }
        Err(Error::ToleranceUnachievable { target, achieved })
    }

    /// Confluent limit by perturbing the degenerate arguments along `rho` and
    /// extrapolating the log to zero perturbation.
    fn richardson(
        &self,
        lambda: &ChamberPoint,
        x: &ChamberPoint,
        target: f64,
    ) -> Result<(EvalResult, f64)> {
        let dim = x.dim();
        let rho: Vec<f64> = (1..=dim).map(|i| (dim + 1) as f64 - 2.0 * i as f64).collect();
        let move_l = self.is_degenerate(lambda);
        let move_x = self.is_degenerate(x);
        let sup = |p: &ChamberPoint| p.coords().iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        let rho_sup = (dim - 1) as f64;
        let reach = match (move_l, move_x) {
            (true, true) => sup(lambda) + sup(x),
            (true, false) => sup(x),
            _ => sup(lambda),
        };
        let h0 = 0.1 / (1.0 + rho_sup * reach);
        const NODES: usize = 7;
        let mut hs = [0.0; NODES];
        let mut fs = [0.0; NODES];
        let mut errs = [0.0; NODES];
        let mut method = Method::AltSum;
        let mut bits = 53;
        for k in 0..NODES {
            let h = h0 * libm::ldexp(1.0, -(k as i32));
            let shift = |p: &ChamberPoint, on: bool| -> Vec<f64> {
                p.coords()
                    .iter()
                    .zip(&rho)
                    .map(|(c, r)| if on { c + h * r } else { *c })
                    .collect()
            };
            let (r, rest) = self.strict_eval(&shift(lambda, move_l), &shift(x, move_x), target * 1e-3)?;
            if r.method == Method::AltSumExtended {
                method = Method::AltSumExtended;
            }
            bits = bits.max(r.precision_bits);
            hs[k] = h;
            fs[k] = rest;
            errs[k] = r.abs_log_error;
        }
        let (value, noise) = extrapolate_to_zero(&hs, &fs, &errs);
        let (coarse, _) = extrapolate_to_zero(&hs[..NODES - 1], &fs[..NODES - 1], &errs[..NODES - 1]);
        let err = libm::fabs(value - coarse) + noise;
        if err > target.max(4.0 * EPS * libm::fabs(value)) {
            return Err(Error::ToleranceUnachievable {
                target,
                achieved: err,
            });
        }
        let dot = lambda.dot(x);
        let mut r = EvalResult::new(dot + value, method, err + rounding_floor(&[dot, value]));
        r.precision_bits = bits;
        r.confluent = true;
        Ok((r, value))
    }
}

/// Lagrange extrapolation to `h = 0`; returns the value and the propagated
/// node error.
fn extrapolate_to_zero(h: &[f64], f: &[f64], err: &[f64]) -> (f64, f64) {
    let mut value = NeumaierSum::new();
    let mut noise = 0.0;
    for j in 0..h.len() {
        let mut w = 1.0;
        for i in 0..h.len() {
            if i != j {
                w *= h[i] / (h[i] - h[j]);
            }
        }
        value.add(w * f[j]);
        noise += libm::fabs(w) * err[j];
    }
    (value.total(), noise)
}

/// Orders the pair so that evaluation is bit-identical under `lambda <-> X`.
fn canonical<'a>(a: &'a [f64], b: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    let ord = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal);
    if ord == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    }
}

/// `psi` when one argument is a multiple of `(1, ..., 1)`: `e^{c sum(other)}`.
fn constant_case(lambda: &ChamberPoint, x: &ChamberPoint) -> EvalResult {
    let v = lambda.dot(x);
    let mut r = EvalResult::new(v, Method::AltSum, 2.0 * EPS * libm::fabs(v));
    r.confluent = lambda.dim() > 1;
    r
}

/// A-priori estimate (bits) of the precision lost to cancellation.
///
/// The sum relative to its largest term is of order
/// `prod_{i<j} u_ij / (1 + u_ij)` divided by `sf(n)`, where
/// `u_ij = (a_i - a_j)(b_i - b_j)`.
pub fn cancellation_bits(a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    let mut bits = (ln_factorial(d) + ln_superfactorial(d - 1)) / core::f64::consts::LN_2;
    for i in 0..d {
        for j in (i + 1)..d {
            let u = (a[i] - a[j]) * (b[i] - b[j]);
            bits += libm::log2(1.0 + 1.0 / (u + EPS));
        }
    }
    bits
}

/// `<a - a_last, b - b_last>`, the spread of the exponents.
fn shifted_pairing(a: &[f64], b: &[f64]) -> f64 {
    let d = a.len();
    let (al, bl) = (a[d - 1], b[d - 1]);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - al) * (y - bl))
        .sum::<f64>()
        .max(0.0)
}

fn rounding_floor(parts: &[f64]) -> f64 {
    2.0 * EPS * parts.iter().map(|p| libm::fabs(*p)).sum::<f64>()
}

/// Alternating sum in doubles.
///
/// Each exponent is `sum_j a'_j (b_{w(j)} - b_j)` with `a' = a - a_last >= 0`,
/// so the identity term is exactly `e^0 = 1` and every other term lies in
/// `(0, 1]`.
fn alt_sum_f64(a: &[f64], b: &[f64]) -> AltOutcome {
    let d = a.len();
    let last = a[d - 1];
    let a_s: Vec<f64> = a.iter().map(|v| v - last).collect();
    let mut sum = NeumaierSum::new();
    let mut term_err = 0.0;
    let mut perms = SignedPermutations::new(d);
    while let Some((perm, sign)) = perms.advance() {
        let mut e = 0.0;
        let mut mag = 0.0;
        for j in 0..d {
            let t = a_s[j] * (b[perm[j]] - b[j]);
            e += t;
            mag += libm::fabs(t);
        }
        let t = libm::exp(e);
        sum.add(sign as f64 * t);
        term_err += t * ((d as f64 + 4.0) * EPS * mag + 2.0 * EPS);
    }
    let total = sum.total();
    let nterms = sum.abs_total();
    let err = term_err + 2.0 * EPS * libm::fabs(total) + (d as f64) * EPS * EPS * nterms;
    let dot = summation::dot(a, b);
    let sf = ln_superfactorial(d - 1);
    let (pa, pb) = (ln_pi(a), ln_pi(b));
    if !(total > 0.0) || !(err < total) {
        return AltOutcome {
            result: EvalResult::new(f64::NAN, Method::AltSum, f64::INFINITY),
            rest: f64::NAN,
            cancel_err: f64::INFINITY,
        };
    }
    let ln_s = libm::log(total);
    let rest = sf - pa - pb + ln_s;
    let log_value = dot + rest;
    let cancel_err = err / total;
    let floor = rounding_floor(&[dot, sf, pa, pb, ln_s, log_value]) + (d * d) as f64 * EPS;
    AltOutcome {
        result: EvalResult::new(log_value, Method::AltSum, cancel_err + floor),
        rest,
        cancel_err,
    }
}

/// Alternating sum with `bits` of working precision.
fn alt_sum_ext(a: &[f64], b: &[f64], bits: usize) -> AltOutcome {
    let d = a.len();
    let mut ext = Ext::new(bits);
    let prec = ext.prec;
    let last = ext.num(a[d - 1]);
    let a_s: Vec<_> = a.iter().map(|v| ext.sub(&ext.num(*v), &last)).collect();
    let b_big: Vec<_> = b.iter().map(|v| ext.num(*v)).collect();
    let ln_w = ln_factorial(d);
    let cutoff = -((prec + 16) as f64) * core::f64::consts::LN_2 - ln_w;
    let mut sum = ext.num(0.0);
    let mut max_mag = 0.0f64;
    let mut skipped = 0usize;
    let mut perms = SignedPermutations::new(d);
    while let Some((perm, sign)) = perms.advance() {
        let mut e = ext.num(0.0);
        let mut mag = 0.0;
        for j in 0..d {
            let diff = ext.sub(&b_big[perm[j]], &b_big[j]);
            let t = ext.mul(&a_s[j], &diff);
            mag += libm::fabs(bigfloat::to_f64(&t));
            e = ext.add(&e, &t);
        }
        max_mag = max_mag.max(mag);
        if bigfloat::to_f64(&e) < cutoff {
            skipped += 1;
            continue;
        }
        let t = ext.exp(&e);
        sum = if sign > 0 { ext.add(&sum, &t) } else { ext.sub(&sum, &t) };
    }
    let mut dot = ext.num(0.0);
    for (x, y) in a.iter().zip(b) {
        dot = ext.add(&dot, &ext.mul_f64(*x, *y));
    }
    let dot = bigfloat::to_f64(&dot);
    let bits_used = prec as u32;
    let ln_s = match bigfloat::ln_abs(&sum) {
        Some(l) if !bigfloat::is_negative(&sum) => l,
        _ => {
            let mut r = EvalResult::new(f64::NAN, Method::AltSumExtended, f64::INFINITY);
            r.precision_bits = bits_used;
            return AltOutcome {
                result: r,
                rest: f64::NAN,
                cancel_err: f64::INFINITY,
            };
        }
    };
    // Relative accuracy of each exponent is 2^-prec; the skipped tail is
    // below 2^-(prec+16) per term.
    let ln_abs_err = ln_w + libm::log((1.0 + max_mag) * 256.0 + skipped as f64)
        - (prec as f64) * core::f64::consts::LN_2;
    let cancel_err = libm::exp(ln_abs_err - ln_s);
    let sf = ln_superfactorial(d - 1);
    let (pa, pb) = (ln_pi(a), ln_pi(b));
    let rest = sf - pa - pb + ln_s;
    let log_value = dot + rest;
    let floor = rounding_floor(&[dot, sf, pa, pb, ln_s, log_value]) + (d * d) as f64 * EPS;
    let mut result = EvalResult::new(log_value, Method::AltSumExtended, cancel_err + floor);
    result.precision_bits = bits_used;
    AltOutcome {
        result,
        rest,
        cancel_err,
    }
}

/// `log((1 - e^{-u}) / u)`, the A_1 factor; 0 at `u = 0`.
pub(crate) fn ln_one_minus_exp_ratio(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        libm::log(-libm::expm1(-u) / u)
    }
}

/// `log pi` of the point with the given consecutive gaps.
pub(crate) fn ln_pi_gaps(g: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..g.len() {
        let mut span = 0.0;
        for gap in &g[i..] {
            span += gap;
            s += libm::log(span);
        }
    }
    s
}

/// `log(e^{-<lambda, X>} psi_lambda(X))` from the gaps of `lambda` and `X`,
/// with its relative error estimate.
///
/// One level of the rank recursion integrates
/// `m!/pi(X) e^{-sum mu_k s_k} pi(Y) N_mu(Y)` over the box `0 <= s_k <= g_k`,
/// with `y_k = x_k - s_k` and `mu_k = lambda_k - lambda_m`.
pub(crate) fn ln_normalized(lg: &[f64], xg: &[f64], tol: f64) -> Result<(f64, f64)> {
    let m = xg.len();
    match m {
        0 => return Ok((0.0, 0.0)),
        1 => return Ok((ln_one_minus_exp_ratio(lg[0] * xg[0]), 0.0)),
        _ => {}
    }
    let mu: Vec<f64> = (0..m).map(|k| lg[k..].iter().sum()).collect();
    let ln_pi_x = ln_pi_gaps(xg);
    let ln_mfact = ln_factorial(m);
    let inner_lg = &lg[..m - 1];
    let inner_tol = tol * 0.25;
    let mut yg = alloc::vec![0.0; m - 1];
    let limits = |k: usize, _: &[f64]| (0.0, xg[k]);
    let mut integrand = |s: &[f64]| -> Result<f64> {
        for k in 0..m - 1 {
            yg[k] = ((xg[k] - s[k]) + s[k + 1]).max(0.0);
        }
        let (ln_inner, _) = ln_normalized(inner_lg, &yg, inner_tol)?;
        let damp: f64 = mu.iter().zip(s).map(|(a, b)| a * b).sum();
        Ok(libm::exp(-damp + ln_pi_gaps(&yg) - ln_pi_x + ln_mfact + ln_inner))
    };
    let q = quadrature::integrate_nested(m, &limits, &mut integrand, Tolerance::relative(tol))?;
    if !(q.value > 0.0) {
        return Err(Error::QuadratureNonconvergence {
            error: q.abs_error,
            tol,
        });
    }
    Ok((libm::log(q.value), q.abs_error / q.value + inner_tol))
}

/// `psi` by the rank recursion with nested adaptive quadrature.
///
/// `lambda` may be degenerate; `X` must be strictly dominant. Rank at most 3.
pub fn psi_iter_quadrature(lambda: &ChamberPoint, x: &ChamberPoint, tol: f64) -> Result<EvalResult> {
    Ok(iter_parts(lambda, x, tol)?.0)
}

fn iter_parts(lambda: &ChamberPoint, x: &ChamberPoint, tol: f64) -> Result<(EvalResult, f64)> {
    let ev = Evaluator::default();
    let rank = ev.check_pair(lambda, x)?;
    if rank > 3 {
        return Err(Error::RankTooLarge { rank, cap: 3 });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    if x.dim() > 1 && !x.is_strict() {
        return Err(Error::DegenerateInput(
            "the space argument must be strictly dominant".into(),
        ));
    }
    let (ln_n, rel) = ln_normalized(&lambda.gaps(), &x.gaps(), tol)?;
    let dot = lambda.dot(x);
    let log_value = dot + ln_n;
    let mut r = EvalResult::new(log_value, Method::IterQuadrature, rel + rounding_floor(&[dot, ln_n]));
    r.confluent = !lambda.is_strict();
    Ok((r, ln_n))
}

/// Running log-sum-exp accumulator for Monte Carlo samples of `e^{a}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McAccumulator {
    max: f64,
    s1: f64,
    s2: f64,
    count: u64,
}

impl Default for McAccumulator {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            s1: 0.0,
            s2: 0.0,
            count: 0,
        }
    }
}

impl McAccumulator {
    pub fn push(&mut self, a: f64) {
        if a > self.max {
            let r = libm::exp(self.max - a);
            self.s1 *= r;
            self.s2 *= r * r;
            self.max = a;
        }
        let t = libm::exp(a - self.max);
        self.s1 += t;
        self.s2 += t * t;
        self.count += 1;
    }

    /// Combines two accumulators; merging in a fixed order is deterministic.
    pub fn merge(&mut self, other: &McAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let max = self.max.max(other.max);
        let (r1, r2) = (libm::exp(self.max - max), libm::exp(other.max - max));
        self.s1 = self.s1 * r1 + other.s1 * r2;
        self.s2 = self.s2 * r1 * r1 + other.s2 * r2 * r2;
        self.max = max;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Log of the sample mean and its relative standard error.
    pub fn finish(&self) -> (f64, f64) {
        let n = self.count as f64;
        let ln_mean = self.max + libm::log(self.s1 / n);
        let spread = (self.s2 * n / (self.s1 * self.s1) - 1.0).max(0.0);
        (ln_mean, libm::sqrt(spread / n))
    }
}

/// One deterministic substream of the Monte Carlo estimator.
///
/// Chunk `index` draws from ChaCha8 stream `index` under `seed`, so chunks can
/// be computed in any order or in parallel.
pub fn mc_orbit_chunk(
    lambda: &ChamberPoint,
    x: &ChamberPoint,
    samples: usize,
    seed: u64,
    index: u64,
) -> McAccumulator {
    let dim = x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut acc = McAccumulator::default();
    let mut p = alloc::vec![0.0; dim * dim];
    for _ in 0..samples {
        let u = haar::sample_unitary(dim, &mut rng);
        u.abs_sq_into(&mut p);
        // Diagonal of U diag(X) U* paired with lambda.
        let mut a = 0.0;
        for i in 0..dim {
            let row: f64 = (0..dim).map(|j| p[i * dim + j] * x.coords()[j]).sum();
            a += lambda.coords()[i] * row;
        }
        acc.push(a);
    }
    acc
}

/// Number of chunks and the size of each for a sample budget.
pub fn mc_chunks(samples: usize) -> impl Iterator<Item = (u64, usize)> {
    let full = samples / MC_CHUNK;
    let rest = samples % MC_CHUNK;
    (0..full as u64)
        .map(|i| (i, MC_CHUNK))
        .chain((rest > 0).then_some((full as u64, rest)))
}

/// Validates Monte Carlo inputs; rank at most 5.
pub fn mc_check(lambda: &ChamberPoint, x: &ChamberPoint, samples: usize) -> Result<()> {
    let ev = Evaluator {
        rank_cap: 5,
        ..Evaluator::default()
    };
    ev.check_pair(lambda, x)?;
    if samples == 0 {
        return Err(Error::InvalidInput("at least one sample is required".into()));
    }
    Ok(())
}

/// Converts a merged accumulator into a result. `abs_log_error` is three
/// standard errors.
pub fn mc_result(acc: &McAccumulator) -> EvalResult {
    let (ln_mean, se) = acc.finish();
    let mut r = EvalResult::new(ln_mean, Method::MonteCarlo, 3.0 * se);
    r.mc_std_error = Some(se);
    r
}

/// `psi` as the average of `e^{<lambda, diag(U X U*)>}` over Haar unitaries.
pub fn psi_mc_orbit(lambda: &ChamberPoint, x: &ChamberPoint, samples: usize, seed: u64) -> Result<EvalResult> {
    mc_check(lambda, x, samples)?;
    let mut acc = McAccumulator::default();
    for (index, size) in mc_chunks(samples) {
        acc.merge(&mc_orbit_chunk(lambda, x, size, seed, index));
    }
    Ok(mc_result(&acc))
}

/// `log` of `e^{<lambda, X>} / prod_{i<j} (1 + (lambda_i - lambda_j)(x_i - x_j))`.
pub fn psi_envelope(lambda: &ChamberPoint, x: &ChamberPoint) -> f64 {
    let (l, c) = (lambda.coords(), x.coords());
    let mut s = NeumaierSum::new();
    s.add(lambda.dot(x));
    for i in 0..c.len() {
        for j in (i + 1)..c.len() {
            s.add(-libm::log1p((l[i] - l[j]) * (c[i] - c[j])));
        }
    }
    s.total()
}

/// `log(sinh(u) / u)` for `u >= 0`.
pub(crate) fn ln_sinhc(u: f64) -> f64 {
    if u < 1e-4 {
        u * u / 6.0
    } else if u < 20.0 {
        libm::log(libm::sinh(u) / u)
    } else {
        u - core::f64::consts::LN_2 - libm::log(u) + libm::log1p(-libm::exp(-2.0 * u))
    }
}

/// `sum_{alpha > 0} log(sinh alpha(X) / alpha(X))`.
pub(crate) fn ln_sinhc_product(x: &[f64]) -> f64 {
    let mut s = NeumaierSum::new();
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            s.add(ln_sinhc(x[i] - x[j]));
        }
    }
    s.total()
}

/// Curved spherical function `phi_lambda(e^X) = pi(X) / delta^{1/2}(X) * psi_lambda(X)`.
pub fn phi_curved(lambda: &ChamberPoint, x: &ChamberPoint) -> Result<EvalResult> {
    if x.dim() > 1 && !x.is_strict() {
        return Err(Error::DegenerateInput("phi requires strictly dominant X".into()));
    }
    let psi = psi_stable(lambda, x, DEFAULT_TARGET)?;
    let corr = ln_sinhc_product(x.coords());
    Ok(psi.shifted(-corr, rounding_floor(&[corr])))
}

/// `log` of `e^{<lambda - rho, X>} prod_{alpha>0} (1 + alpha(X)) / (1 + alpha(lambda) alpha(X))`.
pub fn phi_envelope(lambda: &ChamberPoint, x: &ChamberPoint) -> f64 {
    let (l, c) = (lambda.coords(), x.coords());
    let d = c.len();
    let mut s = NeumaierSum::new();
    for i in 0..d {
        let rho_i = (d + 1) as f64 - 2.0 * (i + 1) as f64;
        s.add((l[i] - rho_i) * c[i]);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            s.add(libm::log1p(c[i] - c[j]));
            s.add(-libm::log1p((l[i] - l[j]) * (c[i] - c[j])));
        }
    }
    s.total()
}

/// Small when every simple-root product is at most `delta`, large when every
/// positive-root product is at least `log |W|`, mixed otherwise.
///
/// With roots of squared length 2 the large threshold `log |W|` is the
/// unit-root threshold `(log |W|)/2` rescaled. Small takes precedence when
/// both hold.
pub fn regime_classify(lambda: &ChamberPoint, x: &ChamberPoint, delta: f64) -> RegimeLabel {
    let (l, c) = (lambda.coords(), x.coords());
    let d = c.len();
    let max_l = lambda.gaps().into_iter().fold(0.0f64, f64::max);
    let max_x = x.gaps().into_iter().fold(0.0f64, f64::max);
    let label = if max_l * max_x <= delta {
        Regime::Small
    } else {
        let threshold = ln_factorial(d);
        let large = (0..d).all(|i| ((i + 1)..d).all(|j| (l[i] - l[j]) * (c[i] - c[j]) >= threshold));
        if large {
            Regime::Large
        } else {
            Regime::Mixed
        }
    };
    RegimeLabel { label, delta }
}

/// `sum_w eps(w) e^{i <w lambda, X>}`.
pub fn alternating_phase_sum(lambda: &[f64], x: &[f64]) -> Complex64 {
    let mut re = NeumaierSum::new();
    let mut im = NeumaierSum::new();
    let mut perms = SignedPermutations::new(x.len());
    while let Some((perm, sign)) = perms.advance() {
        let phase: f64 = perm.iter().enumerate().map(|(j, &p)| lambda[j] * x[p]).sum();
        let (s, c) = libm::sincos(phase);
        re.add(sign as f64 * c);
        im.add(sign as f64 * s);
    }
    Complex64::new(re.total(), im.total())
}

/// `psi_{i lambda}(X)` for real `lambda`, by the alternating sum.
pub fn psi_imaginary(lambda: &ChamberPoint, x: &ChamberPoint) -> Result<Complex64> {
    let ev = Evaluator::default();
    ev.check_pair(lambda, x)?;
    if ev.is_degenerate(lambda) || ev.is_degenerate(x) {
        return Err(Error::DegenerateInput("psi_{i lambda} needs strict arguments".into()));
    }
    let gamma = x.dim() * (x.dim() - 1) / 2;
    let denom = crate::root_system::pi(lambda.coords()) * crate::root_system::pi(x.coords());
    let sf = libm::exp(ln_superfactorial(x.dim() - 1));
    let i_gamma = Complex64::i().powu(gamma as u32);
    Ok(alternating_phase_sum(lambda.coords(), x.coords()) * sf / (i_gamma * denom))
}

pub fn psi_alt_sum(lambda: &ChamberPoint, x: &ChamberPoint, precision_bits: usize) -> Result<EvalResult> {
    Evaluator::default().psi_alt_sum(lambda, x, precision_bits)
}

pub fn psi_stable(lambda: &ChamberPoint, x: &ChamberPoint, target: f64) -> Result<EvalResult> {
    Evaluator::default().psi_stable(lambda, x, target)
}

pub fn psi_stable_normalized(lambda: &ChamberPoint, x: &ChamberPoint, target: f64) -> Result<EvalResult> {
    Evaluator::default().psi_stable_normalized(lambda, x, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(v: &[f64]) -> ChamberPoint {
        ChamberPoint::new(v.to_vec()).unwrap()
    }

    fn a1(l: &[f64], x: &[f64]) -> f64 {
        let u = (l[0] - l[1]) * (x[0] - x[1]);
        l[0] * x[0] + l[1] * x[1] + ln_one_minus_exp_ratio(u)
    }

    #[test]
    fn a1_closed_form() {
        let r = psi_alt_sum(&cp(&[1.0, 0.0]), &cp(&[1.0, 0.0]), 64).unwrap();
        assert!((r.value() - (core::f64::consts::E - 1.0)).abs() < 1e-14);
        assert_eq!(r.method, Method::AltSum);
        for (l, x) in [([3.0, -1.0], [0.25, 0.0]), ([40.0, 0.0], [30.0, 1.0])] {
            let r = psi_alt_sum(&cp(&l), &cp(&x), 64).unwrap();
            assert!((r.log_value - a1(&l, &x)).abs() < 1e-13);
        }
    }

    #[test]
    fn extended_agrees_with_doubles() {
        let (l, x) = (cp(&[2.0, 1.0, 0.0]), cp(&[3.0, 1.0, 0.0]));
        let d = psi_alt_sum(&l, &x, 64).unwrap();
        let e = psi_alt_sum(&l, &x, 256).unwrap();
        assert_eq!(e.method, Method::AltSumExtended);
        assert!((d.log_value - e.log_value).abs() < 1e-13);
        assert!(e.abs_log_error < 1e-14);
    }

    #[test]
    fn symmetric_bit_for_bit() {
        let (l, x) = (cp(&[2.5, 1.0, -0.5]), cp(&[3.0, 0.5, 0.0]));
        assert_eq!(psi_stable(&l, &x, 1e-12).unwrap(), psi_stable(&x, &l, 1e-12).unwrap());
    }

    #[test]
    fn degenerate_rejected_by_alt_sum() {
        assert!(matches!(
            psi_alt_sum(&cp(&[1.0, 1.0, 0.0]), &cp(&[2.0, 1.0, 0.0]), 64),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn iter_quadrature_matches_alt_sum() {
        let (l, x) = (cp(&[2.0, 1.0, 0.0]), cp(&[3.0, 1.0, 0.0]));
        let q = psi_iter_quadrature(&l, &x, 1e-10).unwrap();
        let a = psi_alt_sum(&l, &x, 64).unwrap();
        assert!((q.log_value - a.log_value).abs() < 1e-9, "{} {}", q.log_value, a.log_value);
        let (l, x) = (cp(&[1.5, 1.0, 0.2, 0.0]), cp(&[1.0, 0.7, 0.3, -0.4]));
        let q = psi_iter_quadrature(&l, &x, 1e-8).unwrap();
        let a = psi_alt_sum(&l, &x, 64).unwrap();
        assert!((q.log_value - a.log_value).abs() < 1e-7);
    }

    #[test]
    fn iter_quadrature_constant_lambda_is_exponential() {
        let x = cp(&[2.0, 0.5, -1.0, -1.5]);
        let l = cp(&[0.7; 4]);
        let q = psi_iter_quadrature(&l, &x, 1e-12).unwrap();
        assert!((q.log_value - 0.7 * 0.0).abs() < 1e-12);
    }

    #[test]
    fn confluent_limit_degenerate_lambda() {
        let x = cp(&[2.0, 1.0, 0.0]);
        let r = psi_stable(&cp(&[1.0, 1.0, 0.0]), &x, 1e-10).unwrap();
        assert!(r.confluent);
        // Extrapolate the strict alternating sum along lambda = (1 + e, 1, 0).
        let f = |e: f64| psi_alt_sum(&cp(&[1.0 + e, 1.0, 0.0]), &x, 512).unwrap().log_value;
        let (h, fs) = ([1e-2, 1e-3, 1e-4], [f(1e-2), f(1e-3), f(1e-4)]);
        let (lim, _) = extrapolate_to_zero(&h, &fs, &[0.0; 3]);
        assert!((r.log_value - lim).abs() < 1e-9, "{} {lim}", r.log_value);
    }

    #[test]
    fn richardson_path_above_quadrature_rank() {
        let ev = Evaluator {
            quadrature_rank_cap: 1,
            ..Evaluator::default()
        };
        let (l, x) = (cp(&[1.0, 1.0, 0.0]), cp(&[2.0, 1.0, 0.0]));
        let r = ev.psi_stable(&l, &x, 1e-9).unwrap();
        let q = psi_iter_quadrature(&l, &x, 1e-12).unwrap();
        assert!((r.log_value - q.log_value).abs() < 1e-9);
    }

    #[test]
    fn escalation_on_tiny_gaps() {
        let (l, x) = (cp(&[1e-4, 0.0]), cp(&[1e-4, 0.0]));
        let r = psi_stable(&l, &x, 1e-12).unwrap();
        let reference = psi_alt_sum(&l, &x, 256).unwrap();
        assert!((r.log_value - reference.log_value).abs() < 1e-12);
        assert!((r.log_value - a1(l.coords(), x.coords())).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_trivial_inputs() {
        let x = cp(&[2.0, 1.0, 0.0]);
        for (l, x) in [(cp(&[0.0; 3]), x.clone()), (x.clone(), cp(&[0.0; 3]))] {
            let r = psi_mc_orbit(&l, &x, 5000, 1).unwrap();
            assert_eq!(r.log_value, 0.0);
            assert_eq!(r.mc_std_error, Some(0.0));
        }
    }

    #[test]
    fn monte_carlo_a1() {
        let (l, x) = (cp(&[1.0, 0.0]), cp(&[1.0, 0.0]));
        let r = psi_mc_orbit(&l, &x, 100_000, 5).unwrap();
        let se = r.mc_std_error.unwrap();
        let exact = core::f64::consts::E - 1.0;
        assert!((r.value() / exact - 1.0).abs() < 3.0 * se, "{} se={se}", r.value());
    }

    #[test]
    fn envelopes() {
        assert_eq!(psi_envelope(&cp(&[0.0, 0.0]), &cp(&[4.0, 1.0])), 0.0);
        let v = psi_envelope(&cp(&[1.0, 0.0]), &cp(&[1.0, 0.0]));
        assert!((v - (1.0 - core::f64::consts::LN_2)).abs() < 1e-15);
        let v = phi_envelope(&cp(&[2.0, 0.0]), &cp(&[1.0, 0.0]));
        assert!((v - libm::log(2.0 * core::f64::consts::E / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn phi_a1() {
        let r = phi_curved(&cp(&[1.0, 0.0]), &cp(&[1.0, 0.0])).unwrap();
        let expect = (core::f64::consts::E - 1.0) / libm::sinh(1.0);
        assert!((r.value() - expect).abs() < 1e-14);
        assert!(phi_curved(&cp(&[1.0, 0.0]), &cp(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn regimes() {
        let x = cp(&[1.0, 0.0]);
        assert_eq!(regime_classify(&cp(&[0.0, 0.0]), &x, 1.0).label, Regime::Small);
        assert_eq!(regime_classify(&x, &x, 0.5).label, Regime::Large);
        let l = cp(&[10.0, 10.0, 0.0]);
        let x = cp(&[10.0, 0.0, 0.0]);
        assert_eq!(regime_classify(&l, &x, 1.0).label, Regime::Mixed);
    }

    #[test]
    fn imaginary_argument_conjugates() {
        let (l, x) = (cp(&[1.3, 0.2, -0.4]), cp(&[0.9, 0.1, -2.0]));
        let p = psi_imaginary(&l, &x).unwrap();
        let m = psi_imaginary(&cp(&[0.4, -0.2, -1.3]), &x).unwrap();
        // psi_{-i lambda} with -lambda re-sorted into the chamber is the conjugate.
        assert!((p - m.conj()).norm() < 1e-12 * p.norm().max(1.0));
        let small = psi_imaginary(&cp(&[1e-3, 0.0]), &cp(&[1e-3, 0.0])).unwrap();
        assert!((small.re - 1.0).abs() < 1e-6);
    }
}
