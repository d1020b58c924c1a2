//! The master integral `I^(n)`, its one-dimensional factors `I_k^(n)` and the
//! rank-recursive estimate built from lower-rank master integrals.
//!
//! With `mu_k = lambda_k - lambda_{n+1}` and `y_k = x_k - s_k`,
//!
//! `I^(n) = int_{0 <= s_k <= x_k - x_{k+1}} e^{-<mu, s>} K(Y) ds`
//!
//! where the kernel `K` is `prod_{i<j<=n} v_ij / (1 + v_ij)`,
//! `v_ij = (y_i - y_j)(lambda_i - lambda_j)`. The exact kernel
//! `pi(mu) pi(Y) e^{-<mu,Y>} psi_mu(Y)` turns `n! I^(n)` into
//! `pi(X) pi(lambda') e^{-<lambda,X>} psi_lambda(X)`; the product kernel is
//! comparable to it up to constants.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::root_system::ChamberPoint;
use crate::spherical::{ln_normalized, ln_one_minus_exp_ratio, ln_pi_gaps};

/// Largest rank handled by nested quadrature here.
pub const MAX_RANK: usize = 3;

/// `(lambda, X)` of equal length `n + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorInput {
    pub lambda: ChamberPoint,
    pub x: ChamberPoint,
}

impl FactorInput {
    pub fn new(lambda: ChamberPoint, x: ChamberPoint) -> Result<Self> {
        if lambda.dim() != x.dim() {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {} vs {}",
                lambda.dim(),
                x.dim()
            )));
        }
        if x.dim() < 2 {
            return Err(Error::InvalidInput("need at least two coordinates".into()));
        }
        Ok(Self { lambda, x })
    }

    pub fn rank(&self) -> usize {
        self.x.rank()
    }

    /// Input with `(c lambda, X / c)`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        Self::new(self.lambda.scaled(c)?, self.x.scaled(1.0 / c)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationReport {
    /// `log I^(n)`.
    pub i_n: f64,
    /// `sum_k log I_k^(n)`.
    pub product_ik: f64,
    pub ratio: f64,
    /// `(k, log I_k^(n))`, `k` one-based.
    pub per_factor: Vec<(usize, f64)>,
}

/// Which kernel sits under the master integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `prod v/(1+v)`.
    Product,
    /// `pi(mu) pi(Y) N_mu(Y)` evaluated by nested quadrature.
    Exact,
}

fn check_rank(rank: usize) -> Result<()> {
    if rank > MAX_RANK {
        return Err(Error::RankTooLarge {
            rank,
            cap: MAX_RANK,
        });
    }
    Ok(())
}

fn gaps(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[0] - w[1]).collect()
}

/// `log(v / (1 + v))`, `-inf` at 0.
fn ln_saturating(v: f64) -> f64 {
    libm::log(v) - libm::log1p(v)
}

fn ln_product_kernel(lg: &[f64], yg: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..yg.len() {
        let (mut sy, mut sl) = (0.0, 0.0);
        for j in i..yg.len() {
            sy += yg[j];
            sl += lg[j];
            s += ln_saturating(sy * sl);
        }
    }
    s
}

/// `log I^(r)` for coordinate slices of length `r + 1`; `I^(0) = 1`.
fn ln_master(l: &[f64], x: &[f64], tol: f64, kernel: Kernel) -> Result<f64> {
    let r = x.len().saturating_sub(1);
    if r == 0 {
        return Ok(0.0);
    }
    let (lg, xg) = (gaps(l), gaps(x));
    if r == 1 {
        return Ok(ln_first_factor(lg[0], xg[0]));
    }
    if xg.contains(&0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let mu: Vec<f64> = (0..r).map(|k| lg[k..].iter().sum()).collect();
    let inner_lg = &lg[..r - 1];
    let ln_pi_mu = ln_pi_gaps(inner_lg);
    let total: f64 = xg.iter().sum();
    let mut ln_growth = 0.0;
    for i in 0..r - 1 {
        let mut span = 0.0;
        for g in &xg[i..r - 1] {
            span += g;
            ln_growth += libm::log(total / span);
        }
    }
    let maps: Vec<Window> = (0..r).map(|k| Window::new(mu[k], xg[k], ln_growth)).collect();
    let ln_z: f64 = maps.iter().map(|m| m.ln_z).sum();
    let mut yg = alloc::vec![0.0; r - 1];
    let mut s = alloc::vec![0.0; r];
    let limits = |_: usize, _: &[f64]| (0.0, 1.0);
    let mut integrand = |u: &[f64]| -> Result<f64> {
        let mut ln_w = 0.0;
        for k in 0..r {
            let (v, w) = maps[k].at(u[k]);
            s[k] = v;
            ln_w += w;
        }
        for k in 0..r - 1 {
            yg[k] = ((xg[k] - s[k]) + s[k + 1]).max(0.0);
        }
        let ln_k = match kernel {
            Kernel::Product => ln_product_kernel(inner_lg, &yg),
            Kernel::Exact => {
                let (ln_n, _) = ln_normalized(inner_lg, &yg, tol * 0.25)?;
                ln_pi_mu + ln_pi_gaps(&yg) + ln_n
            }
        };
        Ok(libm::exp(ln_k + ln_w))
    };
    let q = quadrature::integrate_nested(r, &limits, &mut integrand, Tolerance::relative(tol))?;
    Ok(ln_z + libm::log(q.value))
}

/// `log int_0^g e^{-mu s} ds`.
fn ln_first_factor(mu: f64, g: f64) -> f64 {
    libm::log(g) + ln_one_minus_exp_ratio(mu * g)
}

/// Integration window `[0, min(g, L/mu)]` for the weight `e^{-mu s}` on `[0, g]`.
/// The cut-off drops a tail below `e^{-38}` of the total when the rest of the
/// integrand grows by at most `e^{ln_growth}` away from `s = 0`.
#[derive(Clone, Copy)]
struct Window {
    mu: f64,
    len: f64,
    ln_z: f64,
}

impl Window {
    fn new(mu: f64, g: f64, ln_growth: f64) -> Self {
        let reach = (40.0 + ln_growth).min(600.0);
        let len = if mu * g > reach { reach / mu } else { g };
        Window {
            mu,
            len,
            ln_z: ln_first_factor(mu, g),
        }
    }

    /// `(s, log weight)` at `u` in `[0, 1]`, the weight normalised by `int_0^g e^{-mu s} ds`.
    fn at(&self, u: f64) -> (f64, f64) {
        let s = u * self.len;
        (s, libm::log(self.len) - self.mu * s - self.ln_z)
    }
}

/// `log I^(n)(lambda; X)` with the product kernel.
pub fn master_integral(input: &FactorInput, tol: f64) -> Result<f64> {
    check_rank(input.rank())?;
    ln_master(input.lambda.coords(), input.x.coords(), tol, Kernel::Product)
}

/// `log I^(n)` with the exact kernel, for which
/// `n! I^(n) = pi(X) pi(lambda') e^{-<lambda,X>} psi_lambda(X)` holds exactly.
pub fn master_integral_exact(input: &FactorInput, tol: f64) -> Result<f64> {
    check_rank(input.rank())?;
    ln_master(input.lambda.coords(), input.x.coords(), tol, Kernel::Exact)
}

fn ln_factor(l: &[f64], x: &[f64], k: usize, tol: f64) -> Result<f64> {
    let n = x.len() - 1;
    let (lg, xg) = (gaps(l), gaps(x));
    let kk = k - 1;
    let mu: f64 = lg[kk..].iter().sum();
    if kk == 0 {
        return Ok(ln_first_factor(mu, xg[0]));
    }
    if xg[kk] == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    // Spans x_j - x_kk and lambda_j - lambda_kk for j < kk.
    let spans: Vec<(f64, f64)> = (0..kk)
        .map(|j| (xg[j..kk].iter().sum(), lg[j..kk].iter().sum()))
        .collect();
    debug_assert!(kk < n);
    let ln_growth: f64 = spans.iter().map(|(sx, _)| libm::log1p(xg[kk] / sx)).sum();
    let map = Window::new(mu, xg[kk], ln_growth);
    let q = quadrature::integrate(
        |u| {
            let (s, mut e) = map.at(u);
            for (sx, sl) in &spans {
                e += ln_saturating((sx + s) * sl);
            }
            Ok(libm::exp(e))
        },
        0.0,
        1.0,
        Tolerance::relative(tol),
    )?;
    Ok(map.ln_z + libm::log(q.value))
}

/// `log I_k^(n)`, `1 <= k <= n`.
pub fn factor_integral(input: &FactorInput, k: usize, tol: f64) -> Result<f64> {
    let n = input.rank();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("factor index {k} outside 1..={n}")));
    }
    ln_factor(input.lambda.coords(), input.x.coords(), k, tol)
}

pub fn factorization_ratio(input: &FactorInput, tol: f64) -> Result<FactorizationReport> {
    let i_n = master_integral(input, tol)?;
    let mut per_factor = Vec::with_capacity(input.rank());
    for k in 1..=input.rank() {
        per_factor.push((k, factor_integral(input, k, tol)?));
    }
    let product_ik: f64 = per_factor.iter().map(|(_, v)| v).sum();
    let ratio = if input.rank() == 1 {
        1.0
    } else {
        libm::exp(i_n - product_ik)
    };
    Ok(FactorizationReport {
        i_n,
        product_ik,
        ratio,
        per_factor,
    })
}

/// Composite estimate of `log I^(n+1)` from `I^(n)`, `I^(n)` and `I^(n-1)` of
/// sub-configurations. Requires `alpha_1(X) >= alpha_{n+1}(X)`.
pub fn recursive_estimate(input: &FactorInput, tol: f64) -> Result<f64> {
    let r = input.rank();
    check_rank(r)?;
    let (l, x) = (input.lambda.coords(), input.x.coords());
    if r == 1 {
        return ln_master(l, x, tol, Kernel::Product);
    }
    let n = r - 1;
    let xg = gaps(x);
    if xg[0] < xg[n] {
        return Err(Error::PreconditionViolated(format!(
            "alpha_1(X) = {} < alpha_{}(X) = {}",
            xg[0],
            n + 1,
            xg[n]
        )));
    }
    let join = |head: &[f64], tail: f64| -> Vec<f64> {
        let mut v = head.to_vec();
        v.push(tail);
        v
    };
    let first = ln_master(&join(&l[..n], l[n + 1]), &x[..=n], tol, Kernel::Product)?;
    let v = (x[0] - x[n]) * (l[0] - l[n]);
    let upper = ln_master(&l[1..], &x[1..], tol, Kernel::Product)?;
    let lower = ln_master(&join(&l[1..n], l[n + 1]), &x[1..=n], tol, Kernel::Product)?;
    Ok(first + ln_saturating(v) + upper - lower)
}

/// [`recursive_estimate`] extended to `alpha_1(X) < alpha_{n+1}(X)` through
/// `(lambda, X) -> (-w_0 lambda, -w_0 X)`.
///
/// `I^(n) / pi(lambda')` with the exact kernel is invariant under this map, so
/// the estimate is carried back with the factor `pi(lambda') / pi(lambda-hat')`.
pub fn recursive_estimate_any(input: &FactorInput, tol: f64) -> Result<f64> {
    match recursive_estimate(input, tol) {
        Err(Error::PreconditionViolated(_)) => {}
        other => return other,
    }
    let flipped = FactorInput::new(input.lambda.reversed_negated(), input.x.reversed_negated())?;
    let est = recursive_estimate(&flipped, tol)?;
    let r = input.rank();
    let ln_pi_head = |p: &ChamberPoint| ln_pi_gaps(&gaps(&p.coords()[..r]));
    let correction = ln_pi_head(&input.lambda) - ln_pi_head(&flipped.lambda);
    if !correction.is_finite() {
        return Err(Error::DegenerateInput(
            "reversal needs distinct leading spectral coordinates".into(),
        ));
    }
    Ok(est + correction)
}

/// `exp(recursive_estimate_any - master_integral)`.
pub fn recursive_ratio(input: &FactorInput, tol: f64) -> Result<f64> {
    Ok(libm::exp(recursive_estimate_any(input, tol)? - master_integral(input, tol)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spherical::psi_alt_sum;
    use crate::ln_factorial;
    use crate::root_system::ln_pi;

    fn input(l: &[f64], x: &[f64]) -> FactorInput {
        FactorInput::new(
            ChamberPoint::new(l.to_vec()).unwrap(),
            ChamberPoint::new(x.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rank_one_closed_form() {
        let i = input(&[1.0, 0.0], &[1.0, 0.0]);
        let v = master_integral(&i, 1e-12).unwrap();
        assert!((v.exp() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let f = factor_integral(&i, 1, 1e-12).unwrap();
        assert_eq!(v, f);
        assert_eq!(factorization_ratio(&i, 1e-10).unwrap().ratio, 1.0);
        let flat = input(&[2.0, 2.0], &[3.0, 0.5]);
        assert!((master_integral(&flat, 1e-12).unwrap().exp() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn exact_kernel_identity() {
        for (l, x) in [
            (vec![2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0]),
            (vec![1.0, 0.4, -0.3, -1.0], vec![0.8, 0.5, 0.0, -0.6]),
        ] {
            let i = input(&l, &x);
            let n = i.rank();
            let lhs = master_integral_exact(&i, 1e-9).unwrap() + ln_factorial(n);
            let psi = psi_alt_sum(&i.lambda, &i.x, 64).unwrap().log_value;
            let dot: f64 = l.iter().zip(&x).map(|(a, b)| a * b).sum();
            let rhs = ln_pi(&x) + ln_pi(&l[..n]) - dot + psi;
            assert!((lhs - rhs).abs() < 1e-7, "{lhs} {rhs}");
        }
    }

    #[test]
    fn factors_bounded_by_gap() {
        let i = input(&[5.0, 2.0, 1.0, 0.0], &[3.0, 2.5, 1.0, 0.0]);
        let g = i.x.gaps();
        for k in 1..=3 {
            let f = factor_integral(&i, k, 1e-10).unwrap();
            assert!(f.exp() > 0.0 && f.exp() <= g[k - 1]);
        }
        assert!(factor_integral(&i, 4, 1e-10).is_err());
    }

    #[test]
    fn ratio_is_invariant_under_dual_scaling() {
        let i = input(&[3.0, 1.0, 0.0], &[2.0, 1.5, 0.0]);
        let c = 4.0;
        let a = factorization_ratio(&i, 1e-11).unwrap();
        let b = factorization_ratio(&i.rescaled(c).unwrap(), 1e-11).unwrap();
        assert!((a.ratio - b.ratio).abs() < 1e-9);
        // Each factor picks up 1/c.
        assert!((b.per_factor[1].1 - a.per_factor[1].1 + c.ln()).abs() < 1e-9);
        assert!((b.i_n - a.i_n + 2.0 * c.ln()).abs() < 1e-9);
    }

    #[test]
    fn recursive_precondition_and_reversal() {
        let i = input(&[3.0, 2.0, 0.0], &[1.0, 0.5, 0.0]);
        assert!(recursive_estimate(&i, 1e-10).is_ok());
        let j = input(&[3.0, 2.0, 0.0], &[1.0, 0.9, 0.0]);
        assert!(matches!(
            recursive_estimate(&j, 1e-10),
            Err(Error::PreconditionViolated(_))
        ));
        let r = recursive_ratio(&j, 1e-10).unwrap();
        assert!(r > 0.0 && r.is_finite());
    }

    #[test]
    fn rank_zero_recursion_is_master() {
        let i = input(&[2.0, 0.0], &[1.0, 0.0]);
        assert_eq!(
            recursive_estimate(&i, 1e-12).unwrap(),
            master_integral(&i, 1e-12).unwrap()
        );
    }
}
