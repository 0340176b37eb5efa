//! Whittle-Matérn correlation and the modified Bessel function `K_nu`.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use super::ModelError;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Taylor coefficients of `1 / Gamma(1 + x)` about zero.
const RGAMMA1P: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_86,
    -0.655_878_071_520_253_88,
    -0.042_002_635_034_095_236,
    0.166_538_611_382_291_49,
    -0.042_197_734_555_544_337,
    -0.009_621_971_527_876_973_6,
    0.007_218_943_246_663_099_5,
    -0.001_165_167_591_859_065_1,
    -0.000_215_241_674_114_950_97,
    0.000_128_050_282_388_116_19,
    -2.013_485_478_078_823_9e-5,
    -1.250_493_482_142_670_7e-6,
    1.133_027_231_981_695_9e-6,
    -2.056_338_416_977_607_1e-7,
    6.116_095_104_481_415_8e-9,
    5.002_007_644_469_223e-9,
    -1.181_274_570_487_020_1e-9,
    1.043_426_711_691_100_5e-10,
    7.782_263_439_905_071e-12,
    -3.696_805_618_642_205_7e-12,
    5.100_370_287_454_476e-13,
    -2.058_326_053_566_506_8e-14,
    -5.348_122_539_423_018e-15,
    1.226_778_628_238_260_8e-15,
    -1.181_259_301_697_458_8e-16,
];

/// `(gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu))` for `|mu| <= 1/2`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mut even = 0.0;
    let mut odd = 0.0;
    let mu2 = mu * mu;
    let mut pow = 1.0;
    for j in (0..RGAMMA1P.len()).step_by(2) {
        even += RGAMMA1P[j] * pow;
        if j + 1 < RGAMMA1P.len() {
            odd += RGAMMA1P[j + 1] * pow;
        }
        pow *= mu2;
    }
    let gam1 = -odd;
    let gam2 = even;
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

/// `K_mu(x)` and `K_{mu+1}(x)` for `|mu| <= 1/2`.
fn bessel_k_pair(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let xi = 1.0 / x;
    if x < 2.0 {
        // Temme's series
        let x2 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS {
            1.0
        } else {
            pimu / pimu.sin()
        };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        for i in 1..MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        (sum, sum1 * 2.0 * xi)
    } else {
        // Steed's continued fraction
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        h *= a1;
        let kmu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        (kmu, kmu * (mu + x + 0.5 - h) * xi)
    }
}

/// Modified Bessel function of the second kind `K_nu(x)` for `nu >= 0`, `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x > 0.0, "bessel_k needs nu >= 0 and x > 0");
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64;
    let (mut kmu, mut k1) = bessel_k_pair(mu, x);
    let xi2 = 2.0 / x;
    for i in 1..=nl {
        let next = (mu + i as f64) * xi2 * k1 + kmu;
        kmu = k1;
        k1 = next;
    }
    kmu
}

/// Whittle-Matérn correlation with range `c` and smoothness `nu`, zero nugget.
pub fn whittle_matern(h: f64, c: f64, nu: f64) -> Result<f64, ModelError> {
    if !h.is_finite() || !c.is_finite() || !nu.is_finite() {
        return Err(ModelError::Input(format!(
            "non-finite Matérn arguments h={h} c={c} nu={nu}"
        )));
    }
    if h < 0.0 || !(c > 0.0) || !(nu > 0.0) {
        return Err(ModelError::Input(format!(
            "Matérn needs h >= 0, c > 0, nu > 0 (got h={h} c={c} nu={nu})"
        )));
    }
    Ok(matern_unchecked(h / c, nu))
}

/// Correlation as a function of scaled lag `x = h / c`.
pub(crate) fn matern_unchecked(x: f64, nu: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x > 700.0 {
        return 0.0;
    }
    let k = bessel_k(nu, x);
    if !k.is_finite() {
        // K overflows only for lags so small that the correlation is one to
        // working precision.
        return 1.0;
    }
    if k == 0.0 {
        return 0.0;
    }
    let ln = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * x.ln() + k.ln();
    ln.exp().min(1.0)
}
