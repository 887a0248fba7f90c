//! Product-moment correlation and its two-sided Student-t significance.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooFew(usize),
    #[error("correlation is undefined for a constant series")]
    Constant,
    #[error("correlation must lie in [-1, 1], got {0}")]
    BadCorrelation(f64),
    #[error("incomplete beta parameters out of domain (a={a}, b={b}, x={x})")]
    BetaDomain { a: f64, b: f64, x: f64 },
    #[error("continued fraction did not converge in {0} iterations")]
    NoConvergence(usize),
}

pub type Result<T> = std::result::Result<T, StatsError>;

const LENTZ_MAX_ITER: usize = 10_000;

/// Pearson correlation coefficient, clamped into `[-1, 1]`.
pub fn pearson_r<S: Scalar>(x: &[S], y: &[S]) -> Result<S> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFew(n));
    }
    let len = S::from_usize_lossy(n);
    let mx = x.iter().copied().sum::<S>() / len;
    let my = y.iter().copied().sum::<S>() / len;
    let (mut sxy, mut sxx, mut syy) = (S::zero(), S::zero(), S::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx.is_zero() || syy.is_zero() {
        return Err(StatsError::Constant);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-S::one()).min(S::one()))
}

/// Test statistic `t = r sqrt((n - 2) / (1 - r^2))` with `n - 2` degrees of freedom.
pub fn t_statistic<S: Scalar>(r: S, n: usize) -> Result<S> {
    check_r_n(r, n)?;
    let df = S::from_usize_lossy(n - 2);
    Ok(r * (df / (S::one() - r * r)).sqrt())
}

fn check_r_n<S: Scalar>(r: S, n: usize) -> Result<()> {
    if n < 3 {
        return Err(StatsError::TooFew(n));
    }
    if r.is_nan() || r.abs() > S::one() {
        return Err(StatsError::BadCorrelation(r.to_f64_lossy()));
    }
    Ok(())
}

/// Two-sided p-value of a sample correlation `r` over `n` pairs.
///
/// `p = 2 (1 - F(|t|; n - 2)) = I_x(df/2, 1/2)` with `x = df / (df + t^2)`.
/// A perfect correlation returns exactly zero.
pub fn t_test_two_sided<S: Scalar>(r: S, n: usize) -> Result<S> {
    check_r_n(r, n)?;
    if r.abs() == S::one() {
        return Ok(S::zero());
    }
    let t = t_statistic(r, n)?;
    let df = S::from_usize_lossy(n - 2);
    let half = S::from_f64_lossy(0.5);
    let x = df / (df + t * t);
    let p = regularized_incomplete_beta(df * half, half, x)?;
    Ok(p.max(S::zero()).min(S::one()))
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_tail<S: Scalar>(t: S, df: S) -> Result<S> {
    if df.is_nan() || df <= S::zero() || t.is_nan() {
        return Err(StatsError::BetaDomain {
            a: df.to_f64_lossy(),
            b: 0.5,
            x: t.to_f64_lossy(),
        });
    }
    if t.is_infinite() {
        return Ok(S::zero());
    }
    let half = S::from_f64_lossy(0.5);
    regularized_incomplete_beta(df * half, half, df / (df + t * t))
}

/// `ln Γ(z)` for `z > 0` by the Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma<S: Scalar>(z: S) -> S {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let one = S::one();
    let half = S::from_f64_lossy(0.5);
    if z < half {
        // reflection: Γ(z) Γ(1 - z) = π / sin(πz)
        let pi = S::PI();
        return pi.ln() - (pi * z).sin().abs().ln() - ln_gamma(one - z);
    }
    let z = z - one;
    let mut sum = S::from_f64_lossy(COEF[0]);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        sum = sum + S::from_f64_lossy(c) / (z + S::from_usize_lossy(i));
    }
    let t = z + S::from_f64_lossy(G) + half;
    half * (S::TAU()).ln() + (z + half) * t.ln() - t + sum.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
///
/// Uses the continued fraction on whichever of `x` / `1 - x` converges
/// faster, evaluated by the modified Lentz method.
pub fn regularized_incomplete_beta<S: Scalar>(a: S, b: S, x: S) -> Result<S> {
    let (zero, one) = (S::zero(), S::one());
    if a.is_nan() || b.is_nan() || x.is_nan() || a <= zero || b <= zero || x < zero || x > one {
        return Err(StatsError::BetaDomain {
            a: a.to_f64_lossy(),
            b: b.to_f64_lossy(),
            x: x.to_f64_lossy(),
        });
    }
    if x == zero || x == one {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (one - x).ln();
    let front = ln_front.exp();
    let two = one + one;
    if x < (a + one) / (a + b + two) {
        Ok(front * beta_continued_fraction(a, b, x)? / a)
    } else {
        Ok(one - front * beta_continued_fraction(b, a, one - x)? / b)
    }
}

fn beta_continued_fraction<S: Scalar>(a: S, b: S, x: S) -> Result<S> {
    let one = S::one();
    let tiny = S::from_f64_lossy(1e-30);
    let eps = S::series_tolerance();
    let guard = |v: S| if v.abs() < tiny { tiny } else { v };

    let (qab, qap, qam) = (a + b, a + one, a - one);
    let mut c = one;
    let mut d = one / guard(one - qab * x / qap);
    let mut h = d;
    for m in 1..=LENTZ_MAX_ITER {
        let m_s = S::from_usize_lossy(m);
        let m2 = m_s + m_s;

        let even = m_s * (b - m_s) * x / ((qam + m2) * (a + m2));
        d = one / guard(one + even * d);
        c = guard(one + even / c);
        h = h * d * c;

        let odd = -(a + m_s) * (qab + m_s) * x / ((a + m2) * (qap + m2));
        d = one / guard(one + odd * d);
        c = guard(one + odd / c);
        let delta = d * c;
        h = h * delta;

        if (delta - one).abs() < eps {
            return Ok(h);
        }
    }
    Err(StatsError::NoConvergence(LENTZ_MAX_ITER))
}
