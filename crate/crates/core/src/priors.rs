//! Univariate distributions used by the prior and the full conditionals.
//!
//! Parameterizations are fixed: `Gamma(a, b)` has mean `a*b`,
//! `InverseGamma(a, b)` has mean `1/((a-1) b)` (the reciprocal of a
//! `Gamma(a, b)` variable), and `TruncatedBeta(alpha, beta; lo, hi)` is a
//! beta variable affinely mapped onto `(lo, hi)`.

use alloc::format;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub trait Univariate {
    fn ln_pdf(&self, x: f64) -> f64;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
    fn mean(&self) -> f64;
    fn variance(&self) -> f64;
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive and finite")))
    }
}

/// Standard normal draw.
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal {
    mean: f64,
    var: f64,
}

impl Normal {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        check_positive("normal variance", var)?;
        if !mean.is_finite() {
            return Err(Error::InvalidParameter(format!("normal mean {mean}")));
        }
        Ok(Self { mean, var })
    }
}

impl Univariate for Normal {
    fn ln_pdf(&self, x: f64) -> f64 {
        let z = x - self.mean;
        -0.5 * (LN_2PI + libm::log(self.var) + z * z / self.var)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.mean + libm::sqrt(self.var) * std_normal(rng)
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn variance(&self) -> f64 {
        self.var
    }
}

/// Shape `a`, scale `b`; mean `a b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma {
    shape: f64,
    scale: f64,
}

impl Gamma {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        check_positive("gamma shape", shape)?;
        check_positive("gamma scale", scale)?;
        Ok(Self { shape, scale })
    }
}

impl Univariate for Gamma {
    fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        -ln_gamma(self.shape) - self.shape * libm::log(self.scale) + (self.shape - 1.0) * libm::log(x) - x / self.scale
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rand_distr::Gamma::new(self.shape, self.scale).expect("validated gamma parameters").sample(rng)
    }

    fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

/// Reciprocal of a `Gamma(a, b)` variable; mean `1/((a-1) b)` for `a > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGamma {
    shape: f64,
    b: f64,
}

impl InverseGamma {
    pub fn new(shape: f64, b: f64) -> Result<Self> {
        check_positive("inverse-gamma shape", shape)?;
        check_positive("inverse-gamma b", b)?;
        Ok(Self { shape, b })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

impl Univariate for InverseGamma {
    fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        -ln_gamma(self.shape) - self.shape * libm::log(self.b) - (self.shape + 1.0) * libm::log(x) - 1.0 / (self.b * x)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 =
            rand_distr::Gamma::new(self.shape, self.b).expect("validated inverse-gamma parameters").sample(rng);
        1.0 / g
    }

    fn mean(&self) -> f64 {
        if self.shape > 1.0 {
            1.0 / ((self.shape - 1.0) * self.b)
        } else {
            f64::INFINITY
        }
    }

    fn variance(&self) -> f64 {
        if self.shape > 2.0 {
            let m = self.mean();
            m * m / (self.shape - 2.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Beta law on `(lo, hi)`: density
/// `(x-lo)^(a-1) (hi-x)^(b-1) / (B(a,b) (hi-lo)^(a+b-1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedBeta {
    alpha: f64,
    beta: f64,
    lo: f64,
    hi: f64,
}

impl TruncatedBeta {
    pub fn new(alpha: f64, beta: f64, lo: f64, hi: f64) -> Result<Self> {
        check_positive("beta alpha", alpha)?;
        check_positive("beta beta", beta)?;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("truncation interval ({lo}, {hi}) is empty")));
        }
        Ok(Self { alpha, beta, lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Distribution function, by series evaluation of the regularized
    /// incomplete beta integral.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        reg_inc_beta(self.alpha, self.beta, (x - self.lo) / (self.hi - self.lo))
    }
}

impl Univariate for TruncatedBeta {
    fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > self.lo && x < self.hi) {
            return f64::NEG_INFINITY;
        }
        -ln_beta_fn(self.alpha, self.beta)
            + (self.alpha - 1.0) * libm::log(x - self.lo)
            + (self.beta - 1.0) * libm::log(self.hi - x)
            - (self.alpha + self.beta - 1.0) * libm::log(self.hi - self.lo)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let b: f64 = rand_distr::Beta::new(self.alpha, self.beta).expect("validated beta parameters").sample(rng);
        let x = self.lo + (self.hi - self.lo) * b;
        // keep draws strictly inside the open support
        x.clamp(next_up(self.lo), next_down(self.hi))
    }

    fn mean(&self) -> f64 {
        self.lo + self.alpha / (self.alpha + self.beta) * (self.hi - self.lo)
    }

    fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        let w = self.hi - self.lo;
        self.alpha * self.beta * w * w / (s * s * (s + 1.0))
    }
}

/// `Beta(alpha, beta)` on (0,1).
pub fn beta(alpha: f64, beta: f64) -> Result<TruncatedBeta> {
    TruncatedBeta::new(alpha, beta, 0.0, 1.0)
}

fn next_up(x: f64) -> f64 {
    if x >= 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

/// Regularized incomplete beta `I_x(a, b)` via the continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * libm::log(x) + b * libm::log(1.0 - x) - ln_beta_fn(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        libm::exp(ln_front) * beta_cf(a, b, x) / a
    } else {
        1.0 - libm::exp(ln_front) * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Inverse of the standard normal distribution function (Acklam's rational
/// approximation followed by one Halley refinement step).
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p <= 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    let plow = 0.02425;
    let x = if p < plow {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / core::f64::consts::SQRT_2) - p;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(x * x / 2.0);
    x - u / (1.0 + x * u / 2.0)
}
