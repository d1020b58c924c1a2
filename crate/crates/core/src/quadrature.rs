//! Adaptive Gauss–Kronrod quadrature, nested iterated integrals and
//! Gauss–Hermite rules.
//!
//! Integrands return `Result` so that a failure deep inside a nested
//! integral (or inside a kernel evaluation) surfaces unchanged.

use alloc::vec::Vec;

use crate::error::{Error, Result};

// 15-point Kronrod abscissae and weights with the embedded 7-point Gauss rule
// (QUADPACK qk15). Abscissae are listed from the outside in; the last entry is
// the centre.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of a quadrature together with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub abs_error: f64,
}

/// Tolerances for [`integrate`]; convergence when
/// `error <= max(abs_tol, rel_tol * |value|)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self {
            rel,
            abs: 0.0,
            max_intervals: 400,
        }
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod15<F>(f: &mut F, a: f64, b: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut lo = [0.0; 7];
    let mut hi = [0.0; 7];
    let mut gauss = fc * WG[3];
    let mut kronrod = fc * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        lo[j] = f(center - dx)?;
        hi[j] = f(center + dx)?;
        let pair = lo[j] + hi[j];
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    // QUADPACK error heuristic: |K - G| rescaled by the variation of f.
    let mean = 0.5 * kronrod;
    let mut resasc = WGK[7] * libm::fabs(fc - mean);
    for j in 0..7 {
        resasc += WGK[j] * (libm::fabs(lo[j] - mean) + libm::fabs(hi[j] - mean));
    }
    resasc *= libm::fabs(half);
    let raw = libm::fabs((kronrod - gauss) * half);
    let error = if resasc != 0.0 && raw != 0.0 {
        resasc * libm::pow(200.0 * raw / resasc, 1.5).min(1.0)
    } else {
        raw
    };
    Ok(Segment {
        a,
        b,
        value: kronrod * half,
        error,
    })
}

/// Globally adaptive G7–K15 quadrature of `f` over `[a, b]`.
///
/// A zero-width interval integrates to zero.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Quad>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(Quad {
            value: 0.0,
            abs_error: 0.0,
        });
    }
    let mut segments: Vec<Segment> = alloc::vec![kronrod15(&mut f, a, b)?];
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        let target = tol.abs.max(tol.rel * libm::fabs(value));
        if error <= target || error <= 50.0 * f64::EPSILON * libm::fabs(value) {
            return Ok(Quad {
                value,
                abs_error: error,
            });
        }
        if segments.len() >= tol.max_intervals {
            return Err(Error::QuadratureNonconvergence { error, tol: target });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a.min(s.b) || mid >= s.a.max(s.b) {
            // Interval cannot be split further in floating point.
            return Err(Error::QuadratureNonconvergence { error, tol: target });
        }
        segments.push(kronrod15(&mut f, s.a, mid)?);
        segments.push(kronrod15(&mut f, mid, s.b)?);
    }
}

/// Iterated integral over a region whose limits for coordinate `k` may depend
/// on the coordinates `0..k` already fixed.
///
/// `limits(k, prefix)` returns the interval for coordinate `k`. Inner integrals
/// are solved to a quarter of the outer relative tolerance.
pub fn integrate_nested<L, F>(dim: usize, limits: &L, f: &mut F, tol: Tolerance) -> Result<Quad>
where
    L: Fn(usize, &[f64]) -> (f64, f64),
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut point = alloc::vec![0.0; dim];
    nested_level(0, dim, limits, f, &mut point, tol)
}

fn nested_level<L, F>(
    level: usize,
    dim: usize,
    limits: &L,
    f: &mut F,
    point: &mut Vec<f64>,
    tol: Tolerance,
) -> Result<Quad>
where
    L: Fn(usize, &[f64]) -> (f64, f64),
    F: FnMut(&[f64]) -> Result<f64>,
{
    let (a, b) = limits(level, &point[..level]);
    if level + 1 == dim {
        return integrate(
            |x| {
                point[level] = x;
                f(point)
            },
            a,
            b,
            tol,
        );
    }
    let inner_tol = Tolerance {
        rel: tol.rel * 0.25,
        abs: tol.abs * 0.25,
        max_intervals: tol.max_intervals,
    };
    let mut inner_error = 0.0f64;
    let q = integrate(
        |x| {
            point[level] = x;
            let inner = nested_level(level + 1, dim, limits, f, point, inner_tol)?;
            inner_error = inner_error.max(libm::fabs(inner.abs_error));
            Ok(inner.value)
        },
        a,
        b,
        tol,
    )?;
    Ok(Quad {
        value: q.value,
        abs_error: q.abs_error + inner_error * libm::fabs(b - a),
    })
}

/// Nodes and weights of the `m`-point Gauss–Hermite rule for weight `e^{-x^2}`.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = alloc::vec![0.0; m];
    let mut weights = alloc::vec![0.0; m];
    let pim4 = 0.751_125_544_464_942_5; // pi^{-1/4}
    let half = m.div_ceil(2);
    let mf = m as f64;
    let mut z = 0.0;
    for i in 0..half {
        // Standard asymptotic starting guesses for the largest roots.
        z = match i {
            0 => libm::sqrt(2.0 * mf + 1.0) - 1.85575 * libm::pow(2.0 * mf + 1.0, -0.16667),
            1 => z - 1.14 * libm::pow(mf, 0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * libm::sqrt(2.0 / (jf + 1.0)) * p2 - libm::sqrt(jf / (jf + 1.0)) * p3;
            }
            pp = libm::sqrt(2.0 * mf) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if libm::fabs(z - z1) <= 1e-15 * libm::fabs(z).max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        nodes[m - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[m - 1 - i] = weights[i];
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = integrate(|x| Ok(x * x * x - 2.0 * x + 1.0), -1.0, 3.0, Tolerance::relative(1e-14))
            .unwrap();
        // [x^4/4 - x^2 + x] from -1 to 3
        let exact = (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0);
        assert!((q.value - exact).abs() < 1e-13);
    }

    #[test]
    fn peaked_exponential() {
        let a = 400.0;
        let q = integrate(|x| Ok(libm::exp(-a * (1.0 - x))), 0.0, 1.0, Tolerance::relative(1e-12))
            .unwrap();
        let exact = -libm::expm1(-a) / a;
        assert!((q.value / exact - 1.0).abs() < 1e-11);
    }

    #[test]
    fn nested_triangle() {
        // Area of {0 <= y <= x <= 1} weighted by x*y.
        let lim = |k: usize, p: &[f64]| if k == 0 { (0.0, 1.0) } else { (0.0, p[0]) };
        let q = integrate_nested(2, &lim, &mut |p: &[f64]| Ok(p[0] * p[1]), Tolerance::relative(1e-12))
            .unwrap();
        assert!((q.value - 0.125).abs() < 1e-14);
    }

    #[test]
    fn errors_propagate_from_integrand() {
        let r = integrate(
            |x| {
                if x > 0.5 {
                    Err(Error::InvalidInput("boom".into()))
                } else {
                    Ok(x)
                }
            },
            0.0,
            1.0,
            Tolerance::relative(1e-10),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn nonconvergence_is_reported() {
        let tol = Tolerance {
            rel: 1e-14,
            abs: 0.0,
            max_intervals: 3,
        };
        let r = integrate(|x| Ok(libm::sqrt(x)), 0.0, 1.0, tol);
        assert!(matches!(r, Err(Error::QuadratureNonconvergence { .. })));
    }

    #[test]
    fn hermite_moments() {
        for m in 1..=9 {
            let (x, w) = gauss_hermite(m);
            let total: f64 = w.iter().sum();
            assert!((total - libm::sqrt(core::f64::consts::PI)).abs() < 1e-13, "m={m}");
            // Exact for x^{2k}, 2k <= 2m-1: int x^2 e^{-x^2} = sqrt(pi)/2
            if m >= 2 {
                let second: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
                assert!((second - libm::sqrt(core::f64::consts::PI) / 2.0).abs() < 1e-13);
            }
        }
    }
}
