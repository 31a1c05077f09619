//! Log-scale special functions used by the likelihoods and tests.
//!
//! Everything here works in log space. `log_gamma` is a Lanczos
//! approximation (g = 671/128, 14 terms) below 20 and Stirling's series,
//! summed in double-double, above it. The incomplete gamma function is
//! split between its power series (x < a + 1) and a Lentz continued
//! fraction (x >= a + 1), and differences of log-gamma values at large
//! arguments go through the Stirling remainder so that the leading terms
//! cancel analytically instead of in floating point.

use std::f64::consts::PI;

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A strictly positive, finite real number.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PositiveReal(f64);

impl PositiveReal {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(domain(format!("expected a finite positive real, got {value}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PositiveReal {
    type Error = crate::Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

/// ln Γ(x).
pub fn log_gamma(x: PositiveReal) -> f64 {
    ln_gamma(x.get())
}

/// ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b).
pub fn log_beta(a: PositiveReal, b: PositiveReal) -> f64 {
    ln_beta(a.get(), b.get())
}

/// ln C(m, y).
pub fn log_choose(m: u64, y: u64) -> Result<f64> {
    if y > m {
        return Err(domain(format!("log_choose: y = {y} exceeds m = {m}")));
    }
    Ok(ln_choose(m, y))
}

/// Upper tail P(X > x) of a chi-square variable with `df` degrees of freedom.
pub fn chi_square_survival(x: f64, df: u32) -> Result<f64> {
    if !(x >= 0.0) || x.is_infinite() {
        return Err(domain(format!("chi_square_survival: x must be finite and >= 0, got {x}")));
    }
    if df < 1 {
        return Err(domain("chi_square_survival: df must be >= 1"));
    }
    Ok(gamma_q(0.5 * f64::from(df), 0.5 * x))
}

/// Regularized upper incomplete gamma Q(a, x) for a > 0, x >= 0.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() || !(x >= 0.0) {
        return Err(domain(format!("regularized_gamma_q: invalid (a, x) = ({a}, {x})")));
    }
    Ok(gamma_q(a, x))
}

// Unchecked kernels below. Callers guarantee the domain.

const LANCZOS: [f64; 14] = [
    57.156_235_665_862_923_5,
    -59.597_960_355_475_491_2,
    14.136_097_974_741_747_1,
    -0.491_913_816_097_620_199,
    0.339_946_499_848_118_887e-4,
    0.465_236_289_270_485_756e-4,
    -0.983_744_753_048_795_646e-4,
    0.158_088_703_224_912_494e-3,
    -0.210_264_441_724_104_883e-3,
    0.217_439_618_115_212_643e-3,
    -0.164_318_106_536_763_890e-3,
    0.844_182_239_838_527_433e-4,
    -0.261_908_384_015_814_087e-4,
    0.368_991_826_595_316_234e-5,
];

pub(crate) fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x >= 20.0 {
        return ln_gamma_dd(x).value();
    }
    let mut y = x;
    let tmp = x + 671.0 / 128.0;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = 0.999_999_999_999_997_092;
    for c in LANCZOS {
        y += 1.0;
        ser += c / y;
    }
    tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi >= 20.0 {
        // ln Γ(hi) − ln Γ(lo + hi) = −ln (hi)_lo, kept free of cancellation
        let head = if lo >= 20.0 { ln_gamma_dd(lo) } else { Dd(ln_gamma(lo), 0.0) };
        head.add(log_rising_dd(hi, lo).neg()).value()
    } else {
        ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
    }
}

// Double-double arithmetic for the large-argument branches, where a result
// above 8192 has an ulp wider than 1e-12 and only a correctly rounded value
// meets an absolute 1e-12 bound. Each value is hi + lo, |lo| <= ulp(hi) / 2.
#[derive(Debug, Clone, Copy)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn fast_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

// Dekker split, so no fused multiply-add is needed.
fn split(a: f64) -> (f64, f64) {
    let t = 134_217_729.0 * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    Dd(p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        fast_two_sum(s.0, s.1 + self.1 + o.1)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.0, o.0);
        fast_two_sum(p.0, p.1 + self.0 * o.1 + self.1 * o.0)
    }

    fn div(self, o: Dd) -> Dd {
        let q = self.0 / o.0;
        let r = self.add(o.mul(Dd(q, 0.0)).neg());
        fast_two_sum(q, r.0 / o.0)
    }

    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    fn value(self) -> f64 {
        self.0 + self.1
    }
}

const LN2_DD: Dd = Dd(6.931_471_803_691_238e-1, 1.908_214_929_270_587_7e-10);
const LN_SQRT_2PI_DD: Dd = Dd(LN_SQRT_2PI, -3.878_294_158_067_241_4e-17);

// ln of a double-double, via x = 2^k f with f in [√½, √2) and
// ln f = 2 atanh((f − 1) / (f + 1)).
fn ln_dd(x: Dd) -> Dd {
    debug_assert!(x.0 > 0.0 && x.0.is_normal());
    let bits = x.0.to_bits();
    let mut k = ((bits >> 52) & 0x7ff) as i64 - 1023;
    let mut scale = f64::from_bits(((1023 - k) as u64) << 52);
    if x.0 * scale > std::f64::consts::SQRT_2 {
        k += 1;
        scale *= 0.5;
    }
    let f = Dd(x.0 * scale, x.1 * scale);
    let s = f.add(Dd(-1.0, 0.0)).div(f.add(Dd(1.0, 0.0)));
    let s2 = s.0 * s.0;
    let mut tail = 0.0;
    for j in (1..=14).rev() {
        tail = 1.0 / (2 * j + 1) as f64 + s2 * tail;
    }
    let ln_f = s.add(Dd(s.0 * s2 * tail, 0.0)).mul(Dd(2.0, 0.0));
    LN2_DD.mul(Dd(k as f64, 0.0)).add(ln_f)
}

// ln Γ(x) for x >= 20 from Stirling's series.
fn ln_gamma_dd(x: f64) -> Dd {
    let head = Dd(x - 0.5, 0.0).mul(ln_dd(Dd(x, 0.0)));
    head.add(Dd(-x, 0.0)).add(LN_SQRT_2PI_DD).add(Dd(stirling_remainder(x), 0.0))
}

// ln (a)ₙ for a >= 20 as (a − ½) ln(1 + n/a) + n ln(a + n) − n plus the
// Stirling remainders, with the leading terms carried in double-double.
fn log_rising_dd(a: f64, n: f64) -> Dd {
    let t = Dd(n, 0.0).div(Dd(a, 0.0));
    let first = Dd(a - 0.5, 0.0).mul(ln_dd(Dd(1.0, 0.0).add(t)));
    let second = Dd(n, 0.0).mul(ln_dd(two_sum(a, n)));
    let rem = stirling_remainder(a + n) - stirling_remainder(a);
    first.add(second).add(Dd(-n, 0.0)).add(Dd(rem, 0.0))
}

/// Stirling remainder: ln Γ(x) − [(x − ½) ln x − x + ½ ln 2π].
pub(crate) fn stirling_remainder(x: f64) -> f64 {
    if x >= 10.0 {
        let r = 1.0 / x;
        let r2 = r * r;
        r * (1.0 / 12.0
            - r2 * (1.0 / 360.0
                - r2 * (1.0 / 1260.0
                    - r2 * (1.0 / 1680.0 - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360_360.0 - r2 / 156.0))))))
    } else {
        ln_gamma(x) - ((x - 0.5) * x.ln() - x + LN_SQRT_2PI)
    }
}

/// ln Γ(a + n) − ln Γ(a), the log of the rising factorial (a)ₙ.
pub(crate) fn log_rising(a: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    if n <= 32.0 && n.fract() == 0.0 {
        let mut s = 0.0;
        let mut k = 0.0;
        while k < n {
            s += (a + k).ln();
            k += 1.0;
        }
        return s;
    }
    (a - 0.5) * (n / a).ln_1p() + n * (a + n).ln() - n + stirling_remainder(a + n) - stirling_remainder(a)
}

pub(crate) fn ln_choose(m: u64, y: u64) -> f64 {
    let k = y.min(m - y);
    if k == 0 {
        return 0.0;
    }
    if k <= 30 {
        let base = (m - k) as f64;
        return (1..=k).map(|i| ((base + i as f64) / i as f64).ln()).sum();
    }
    let n = m as f64;
    let k = k as f64;
    let j = n - k;
    k * (n / k).ln() - j * (-k / n).ln_1p() + 0.5 * (n / (2.0 * PI * k * j)).ln() + stirling_remainder(n)
        - stirling_remainder(k)
        - stirling_remainder(j)
}

/// ψ(x) for x > 0.
pub(crate) fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    acc + x.ln() - 0.5 / x - psi_asymptotic_tail(x)
}

// Σ B₂ₖ / (2k x²ᵏ), the tail of the asymptotic digamma series.
fn psi_asymptotic_tail(x: f64) -> f64 {
    let r2 = 1.0 / (x * x);
    r2 * (1.0 / 12.0
        - r2 * (1.0 / 120.0 - r2 * (1.0 / 252.0 - r2 * (1.0 / 240.0 - r2 * (1.0 / 132.0 - r2 * 691.0 / 32760.0)))))
}

/// ψ(a + n) − ψ(a).
pub(crate) fn digamma_diff(a: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    if a >= 10.0 {
        let b = a + n;
        (n / a).ln_1p() - 0.5 / b + 0.5 / a - psi_asymptotic_tail(b) + psi_asymptotic_tail(a)
    } else {
        digamma(a + n) - digamma(a)
    }
}

/// Σ_{k<n} ln(c + k·s) together with its partial derivatives in c and s.
///
/// This is the building block of the beta-binomial pmf in its
/// (π, σ) parameterization; at s → 0 it collapses to n·ln c exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct ScaledRising {
    pub value: f64,
    pub d_c: f64,
    pub d_s: f64,
}

const DIRECT_SUM_MAX: u64 = 64;

pub(crate) fn scaled_rising(c: f64, s: f64, n: u64) -> ScaledRising {
    if n == 0 {
        return ScaledRising::default();
    }
    if n <= DIRECT_SUM_MAX {
        let mut out = ScaledRising::default();
        for k in 0..n {
            let kf = k as f64;
            let t = c + kf * s;
            out.value += t.ln();
            let inv = 1.0 / t;
            out.d_c += inv;
            out.d_s += kf * inv;
        }
        return out;
    }
    let nf = n as f64;
    let a = c / s;
    let d_c = digamma_diff(a, nf) / s;
    ScaledRising { value: nf * s.ln() + log_rising(a, nf), d_c, d_s: (nf - c * d_c) / s }
}

pub(crate) fn scaled_rising_value(c: f64, s: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if n <= DIRECT_SUM_MAX {
        let mut v = 0.0;
        for k in 0..n {
            v += (c + k as f64 * s).ln();
        }
        return v;
    }
    let nf = n as f64;
    nf * s.ln() + log_rising(c / s, nf)
}

fn gamma_q(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 100_000;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (h.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pr(x: f64) -> PositiveReal {
        PositiveReal::new(x).unwrap()
    }

    #[test]
    fn rejects_non_positive() {
        assert!(PositiveReal::new(0.0).is_err());
        assert!(PositiveReal::new(-1.0).is_err());
        assert!(PositiveReal::new(f64::NAN).is_err());
        assert!(PositiveReal::new(f64::INFINITY).is_err());
        assert!(log_choose(3, 4).is_err());
        assert!(chi_square_survival(-0.1, 1).is_err());
        assert!(chi_square_survival(1.0, 0).is_err());
    }

    #[test]
    fn log_gamma_known_values() {
        assert_abs_diff_eq!(log_gamma(pr(1.0)), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(log_gamma(pr(2.0)), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(log_gamma(pr(0.5)), 0.5 * PI.ln(), epsilon = 1e-14);
    }

    #[test]
    fn log_gamma_recurrence() {
        for i in 1..=1000 {
            let x = i as f64 * 0.1;
            let lhs = ln_gamma(x + 1.0);
            let rhs = ln_gamma(x) + x.ln();
            assert!((lhs - rhs).abs() <= 1e-11, "x = {x}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn log_beta_small_cases() {
        assert_abs_diff_eq!(log_beta(pr(1.0), pr(1.0)), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(log_beta(pr(2.0), pr(3.0)), (1.0f64 / 12.0).ln(), epsilon = 1e-14);
    }

    #[test]
    fn log_choose_small_cases() {
        assert_eq!(log_choose(10, 0).unwrap(), 0.0);
        assert_eq!(log_choose(10, 10).unwrap(), 0.0);
        assert_abs_diff_eq!(log_choose(10, 5).unwrap(), 252f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn chi_square_quantile_identity() {
        assert_eq!(chi_square_survival(0.0, 3).unwrap(), 1.0);
        assert_abs_diff_eq!(chi_square_survival(3.841_459, 1).unwrap(), 0.05, epsilon = 1e-7);
        // df = 2 is an exponential tail
        for x in [0.1, 1.0, 7.31, 40.0] {
            assert_abs_diff_eq!(chi_square_survival(x, 2).unwrap(), (-x / 2.0).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn digamma_matches_known_values() {
        // ψ(1) = −γ
        assert_abs_diff_eq!(digamma(1.0), -0.577_215_664_901_532_9, epsilon = 1e-14);
        assert_abs_diff_eq!(digamma(0.5), -1.963_510_026_021_423_5, epsilon = 1e-13);
        for a in [0.3, 4.0, 12.0, 1e6] {
            for n in [1.0, 5.0, 70.0, 1234.0] {
                let direct: f64 = if a < 1e5 {
                    digamma(a + n) - digamma(a)
                } else {
                    (0..n as u64).map(|k| 1.0 / (a + k as f64)).sum()
                };
                let d = digamma_diff(a, n);
                assert!((d - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{a} {n}");
            }
        }
    }

    #[test]
    fn scaled_rising_branches_agree() {
        for &(c, s) in &[(0.3, 0.1), (0.95, 10.0), (0.05, 1e-3), (1.0, 2.5)] {
            for n in [65u64, 100, 500] {
                let direct: f64 = (0..n).map(|k| (c + k as f64 * s).ln()).sum();
                let dc: f64 = (0..n).map(|k| 1.0 / (c + k as f64 * s)).sum();
                let ds: f64 = (0..n).map(|k| k as f64 / (c + k as f64 * s)).sum();
                let got = scaled_rising(c, s, n);
                assert!((got.value - direct).abs() <= 1e-11 * direct.abs().max(1.0));
                assert!((got.d_c - dc).abs() <= 1e-10 * dc.abs().max(1.0));
                assert!((got.d_s - ds).abs() <= 1e-9 * ds.abs().max(1.0));
                assert_eq!(got.value, scaled_rising_value(c, s, n));
            }
        }
    }

    #[test]
    fn log_rising_branches_agree() {
        for a in [0.01, 0.7, 3.0, 25.0, 4e5] {
            for n in [1.0, 7.0, 32.0] {
                let direct = log_rising(a, n);
                let stirling = (a - 0.5) * (n / a).ln_1p() + n * (a + n).ln() - n + stirling_remainder(a + n)
                    - stirling_remainder(a);
                assert!((direct - stirling).abs() <= 1e-12 * direct.abs().max(1.0), "{a} {n}");
            }
        }
    }
}
