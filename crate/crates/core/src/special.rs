//! Numerical building blocks: Bessel functions of integer order and their
//! zeros, Gauss quadrature, bracketing root finders and polynomial
//! extrapolation.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Bessel function of the first kind `J_n(x)` for integer `n >= 0`, `x >= 0`.
///
/// Evaluated by Miller's backward recurrence normalised with
/// `J_0 + 2 Σ J_{2k} = 1`. Absolute accuracy is a few ulps of `max|J|`
/// for every order and argument the mode builders need.
pub fn bessel_j(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let x = x.abs();
    if n == 0 && x > 25.0 {
        return bessel_j_asymptotic(0, x);
    }
    if n == 1 && x > 25.0 {
        return bessel_j_asymptotic(1, x);
    }
    // Starting index well above both the order and the argument.
    let start = {
        let m = (n as f64).max(x) + 30.0 + 4.0 * (n as f64).max(x).sqrt();
        let m = m as usize;
        m + (m & 1)
    };
    let two_over_x = 2.0 / x;
    let mut j_next = 0.0f64;
    let mut j_curr = 1e-300f64;
    let mut norm = 0.0f64;
    let mut result = 0.0f64;
    let mut k = start;
    while k > 0 {
        let j_prev = (k as f64) * two_over_x * j_curr - j_next;
        j_next = j_curr;
        j_curr = j_prev;
        k -= 1;
        // j_curr now holds the unnormalised J_k
        if k == n {
            result = j_curr;
        }
        if k % 2 == 0 && k > 0 {
            norm += 2.0 * j_curr;
        }
        if j_curr.abs() > 1e250 {
            j_curr *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
            result *= 1e-250;
        }
    }
    norm += j_curr;
    result / norm
}

/// Hankel asymptotic expansion, used for orders 0 and 1 at large argument.
fn bessel_j_asymptotic(n: usize, x: f64) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut k = 1usize;
    // P and Q series share the running product (mu - (2k-1)^2) / (k! (8x)^k)
    loop {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() < 1e-17 || k > 40 {
            break;
        }
        if k % 2 == 1 {
            q += if (k / 2) % 2 == 0 { term } else { -term };
        } else {
            p += if (k / 2) % 2 == 1 { -term } else { term };
        }
        k += 1;
    }
    let phase = x - (n as f64 / 2.0 + 0.25) * std::f64::consts::PI;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * phase.cos() - q * phase.sin())
}

/// Positive zeros of `J_n` below `x_max`, ascending, refined to 1e-13 absolute.
pub fn bessel_zeros(n: usize, x_max: f64) -> Result<Vec<f64>> {
    let mut zeros = Vec::new();
    // j_{n,1} > n, and consecutive zeros are more than pi apart.
    let step = 0.5;
    let mut a = (n as f64).max(step);
    let mut fa = bessel_j(n, a);
    while a < x_max {
        let b = a + step;
        let fb = bessel_j(n, b);
        if fa == 0.0 {
            zeros.push(a);
        } else if fa * fb < 0.0 {
            let root = brent(|x| bessel_j(n, x), a, b, 1e-14, 200).map_err(|_| {
                Error::Convergence(format!("Bessel zero of J_{n} in [{a}, {b}]"))
            })?;
            if root <= x_max {
                zeros.push(root);
            }
        }
        a = b;
        fa = fb;
    }
    Ok(zeros)
}

/// Brent's method on a bracket `[a, b]` with `f(a) f(b) <= 0`.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::Convergence(format!(
            "no sign change on [{a}, {b}] (f = {fa}, {fb})"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol * m.signum() };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Convergence(format!("non-finite value at {b}")));
        }
    }
    Err(Error::Convergence("Brent iteration limit reached".into()))
}

/// [`brent`] for a fallible function; the first error aborts the search.
pub fn brent_fallible<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut failure = None;
    let root = brent(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        a,
        b,
        xtol,
        max_iter,
    );
    match failure {
        Some(e) => Err(e),
        None => root,
    }
}

/// Plain bisection for a predicate that flips from `false` to `true` once
/// on `[lo, hi]`; returns the transition point.
pub fn bisect_predicate<F: FnMut(f64) -> Result<bool>>(
    mut pred: F,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
) -> Result<f64> {
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = nf * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * GK_WEIGHTS_K[7];
    let mut gauss = fc * GK_WEIGHTS_G[3];
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kronrod += s * GK_WEIGHTS_K[i];
        if i % 2 == 1 {
            gauss += s * GK_WEIGHTS_G[i / 2];
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).norm())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of a complex integrand.
/// Returns the integral and the accumulated error estimate.
pub fn integrate_adaptive<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> (Complex64, f64) {
    let mut pending: Vec<(f64, f64, Complex64, f64)> = Vec::new();
    let (v, e) = gk15(&mut f, a, b);
    pending.push((a, b, v, e));
    let mut total = v;
    let mut err = e;
    let mut done_val = Complex64::new(0.0, 0.0);
    let mut done_err = 0.0;
    let mut intervals = 1;
    while err > abs_tol && intervals < max_intervals {
        // split the interval with the largest error
        let (idx, _) = pending
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = pending.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let left = gk15(&mut f, lo, mid);
        let right = gk15(&mut f, mid, hi);
        intervals += 1;
        for (l, h, (v, e)) in [(lo, mid, left), (mid, hi, right)] {
            if e <= abs_tol * 1e-3 * (h - l) / (b - a) {
                done_val += v;
                done_err += e;
            } else {
                pending.push((l, h, v, e));
            }
        }
        total = done_val + pending.iter().map(|p| p.2).sum::<Complex64>();
        err = done_err + pending.iter().map(|p| p.3).sum::<f64>();
    }
    (total, err)
}

/// Neville extrapolation of samples `(x_i, y_i)` to `x = 0` using all
/// points (polynomial degree `len - 1`).
pub fn extrapolate_to_zero(xs: &[f64], ys: &[Complex64]) -> Complex64 {
    let mut p: Vec<Complex64> = ys.to_vec();
    let n = xs.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            p[i] = (p[i] * (-xj) - p[i + 1] * (-xi)) / (xi - xj);
        }
    }
    p[0]
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// `sinh(x) / x` with the removable singularity handled.
pub fn sinhc(x: Complex64) -> Complex64 {
    if x.norm() < 1e-4 {
        let x2 = x * x;
        Complex64::new(1.0, 0.0) + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn brent_finds_cubic_roots(r in -10.0..10.0f64, c in 0.1..5.0f64) {
            let f = |x: f64| (x - r) * ((x - r) * (x - r) + c);
            let x = brent(f, r - 20.0, r + 17.0, 0.0, 200).unwrap();
            prop_assert!((x - r).abs() <= 1e-12 * r.abs().max(1.0));
        }

        #[test]
        fn erf_and_erfc_are_complementary(x in -6.0..6.0f64) {
            prop_assert!((erf(x) + erfc(x) - 1.0).abs() < 1e-15);
        }
    }
}
