//! Thin layer over `astro-float-num` for the extended-precision paths.

use astro_float_num::{BigFloat, Consts, RoundingMode, Sign};

const RM: RoundingMode = RoundingMode::ToEven;

pub(crate) struct Ext {
    pub prec: usize,
    consts: Consts,
}

impl Ext {
    pub fn new(bits: usize) -> Self {
        // Mantissas are whole 64-bit words.
        let prec = bits.max(128).div_ceil(64) * 64;
        Self {
            prec,
            consts: Consts::new().expect("constant cache allocation"),
        }
    }

    pub fn num(&self, v: f64) -> BigFloat {
        BigFloat::from_f64(v, self.prec)
    }

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.prec, RM)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.prec, RM)
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.prec, RM)
    }

    /// Exact product of two doubles.
    pub fn mul_f64(&self, a: f64, b: f64) -> BigFloat {
        self.num(a).mul_full_prec(&self.num(b))
    }

    pub fn exp(&mut self, a: &BigFloat) -> BigFloat {
        a.exp(self.prec, RM, &mut self.consts)
    }
}

/// Natural log of `|x|` as a double, or `None` for zero / NaN.
///
/// Uses the leading mantissa word and the binary exponent, so the result is
/// accurate for magnitudes far outside the `f64` range.
pub(crate) fn ln_abs(x: &BigFloat) -> Option<f64> {
    if x.is_zero() || x.is_nan() || x.is_inf() {
        return None;
    }
    let (words, _, _, exp, _) = x.as_raw_parts()?;
    let top = *words.last()?;
    let next = if words.len() > 1 {
        words[words.len() - 2]
    } else {
        0
    };
    // 0.m * 2^exp with the leading word normalised (top bit set).
    let mantissa = (top as f64) / 18446744073709551616.0 + (next as f64) / 3.402823669209385e38;
    Some(libm::log(mantissa) + (exp as f64) * core::f64::consts::LN_2)
}

/// Nearest double (flushes to zero / infinity outside the `f64` range).
pub(crate) fn to_f64(x: &BigFloat) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    let Some((words, _, sign, exp, _)) = x.as_raw_parts() else {
        return f64::NAN;
    };
    let top = words[words.len() - 1];
    let next = if words.len() > 1 { words[words.len() - 2] } else { 0 };
    let hi = libm::ldexp(top as f64, exp - 64);
    let lo = libm::ldexp(next as f64, exp - 128);
    let v = hi + lo;
    if sign == Sign::Neg {
        -v
    } else {
        v
    }
}

pub(crate) fn is_negative(x: &BigFloat) -> bool {
    x.sign() == Some(Sign::Neg) && !x.is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_of_exp_roundtrips_far_outside_f64_range() {
        let mut e = Ext::new(256);
        for v in [-5000.0, -1.0, 0.0, 0.5, 3.0, 2000.0] {
            let x = e.exp(&e.num(v));
            let l = ln_abs(&x).unwrap();
            assert!((l - v).abs() <= 1e-13 * (1.0 + v.abs()), "{v} -> {l}");
        }
    }

    #[test]
    fn exact_products() {
        let e = Ext::new(128);
        let a = 1.0 + f64::EPSILON;
        let p = e.mul_f64(a, a);
        let d = e.sub(&p, &e.num(1.0));
        // 2 eps + eps^2 is not representable in f64 but is exact here.
        let l = ln_abs(&d).unwrap();
        let expect = libm::log(2.0 * f64::EPSILON + f64::EPSILON * f64::EPSILON);
        assert!((l - expect).abs() < 1e-15);
    }
}
