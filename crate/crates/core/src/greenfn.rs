//! Free resolvent kernels of the straight tube and of its periodic
//! (Floquet–Bloch) fibres, together with the renormalised diagonal `ξ`.
//!
//! All kernels are evaluated with a heat-kernel split at a time `τ`:
//! the long-time part is a rapidly convergent mode sum (every mode carries
//! an `erfc` damping), the short-time part is integrated in real space
//! against the transverse heat kernel, where the `1/(4π|x|)` singularity
//! is removed analytically. The split time is chosen so that the first
//! mode outside the basis is damped below `e^{-36}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::{erf, erfc, integrate_adaptive, sinhc};
use crate::xsection::{CrossSection, ModeBasis, Point2};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// `(ν_N - Re z) τ` at the split; `erfc(6) ≈ 2e-17`.
const SPLIT_EXPONENT: f64 = 36.0;

/// A point of the tube, longitudinal coordinate first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: Point2,
}

impl Point3 {
    pub fn new(x: f64, y1: f64, y2: f64) -> Self {
        Point3 { x, y: [y1, y2] }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let d = [self.x - other.x, self.y[0] - other.y[0], self.y[1] - other.y[1]];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// Branch-resolved momenta at an energy `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPoint {
    pub z: Complex64,
    /// `κ_n(z) = √(ν_n - z)` on the physical sheet.
    pub kappa: Vec<Complex64>,
    /// `k_n(z) = √(z - ν_n)` of the open channels (real `z` only).
    pub k_open: Vec<f64>,
    pub n_open: usize,
}

/// `κ = √(ν - z)` with `Re κ >= 0`; real energies above the threshold are
/// limits from the upper half-plane, `κ = -i k`.
pub fn kappa(nu: f64, z: Complex64) -> Complex64 {
    let c = Complex64::new(nu - z.re, -z.im);
    if z.im == 0.0 {
        if c.re >= 0.0 {
            Complex64::new(c.re.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, -(-c.re).sqrt())
        }
    } else {
        let s = c.sqrt();
        if s.re < 0.0 {
            -s
        } else {
            s
        }
    }
}

fn check_threshold(basis: &ModeBasis, z: Complex64) -> Result<()> {
    if z.im != 0.0 {
        return Ok(());
    }
    for (n, nu) in basis.nus().enumerate() {
        if (z.re - nu).abs() <= 1e-14 * nu.abs().max(1.0) {
            return Err(Error::Threshold { z: z.re, index: n });
        }
        if nu > z.re + 1.0 {
            break;
        }
    }
    Ok(())
}

pub fn spectral_point(z: Complex64, basis: &ModeBasis) -> Result<SpectralPoint> {
    check_threshold(basis, z)?;
    let kappa: Vec<Complex64> = basis.nus().map(|nu| kappa(nu, z)).collect();
    let (k_open, n_open) = if z.im == 0.0 {
        let k: Vec<f64> = basis.nus().filter(|&nu| nu < z.re).map(|nu| (z.re - nu).sqrt()).collect();
        let n = k.len();
        (k, n)
    } else {
        (Vec::new(), 0)
    };
    Ok(SpectralPoint { z, kappa, k_open, n_open })
}

/// Number of open channels `card{n : ν_n < z}` at a real energy.
pub fn open_channels(z: f64, basis: &ModeBasis) -> Result<usize> {
    check_threshold(basis, Complex64::new(z, 0.0))?;
    Ok(basis.nus().take_while(|&nu| nu < z).count())
}

/// Renormalisation constants and numerical tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct Renormalization {
    /// `γ = 2√π |M|^{-1/2}`.
    pub gamma: f64,
    /// `β` with `β^{-1} = 4√(π|M|)`.
    pub beta: f64,
    /// Abel damping lengths used by the limit-form evaluation.
    pub abel_u_grid: Vec<f64>,
    /// Relative bound on the truncation error of every series.
    pub tail_tolerance: f64,
}

impl Renormalization {
    pub fn for_cross_section(cs: &CrossSection) -> Self {
        let area = cs.area();
        let s = area.sqrt();
        Renormalization {
            gamma: 2.0 * PI.sqrt() / s,
            beta: 1.0 / (4.0 * (PI * area).sqrt()),
            abel_u_grid: [0.02, 0.01, 0.005, 0.0025].iter().map(|u| u * s).collect(),
            tail_tolerance: 1e-8,
        }
    }
}

/// Kernel value with its a-posteriori truncation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluated {
    pub value: Complex64,
    pub tail_bound: f64,
}

/// Longitudinal (1-D) part of a kernel, per transverse mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Longitudinal {
    /// Straight tube, `e^{-κ|X|} / (2κ)`.
    Straight,
    /// Floquet–Bloch fibre with period `ell` and quasimomentum `theta`,
    /// plus the sign-dependent phase `e^{iηθℓ}`.
    Bloch { ell: f64, theta: f64 },
    /// `θ`-extremal diagonal kernels: `coth(κℓ/2)/(2κ)` (`upper`) or
    /// `tanh(κℓ/2)/(2κ)`.
    Extremal { ell: f64, upper: bool },
}

impl Longitudinal {
    /// Value at longitudinal separation `x` (`|x| <= ℓ/2` for Bloch).
    fn eval(&self, kappa: Complex64, x: f64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        match *self {
            Longitudinal::Straight => (-kappa * x.abs()).exp() / (2.0 * kappa),
            Longitudinal::Bloch { ell, theta } => {
                let c = (theta * ell).cos();
                let phase = Complex64::from_polar(1.0, x.signum() * theta * ell);
                let ax = x.abs();
                let kl = kappa * ell;
                if kl.norm() < 1.0 {
                    // sinh(κ(ℓ-|x|)) + e^{iηθℓ} sinh(κ|x|) over κ, regular at κ = 0
                    let num = sinhc(kappa * (ell - ax)) * (ell - ax) + phase * sinhc(kappa * ax) * ax;
                    num / (2.0 * (kl.cosh() - c))
                } else {
                    let e = (-kl).exp();
                    let a = (-kappa * ax).exp();
                    let bp = (-kappa * (ell - ax)).exp();
                    let num = a - e * bp + phase * (bp - a * e);
                    // 1 - 2cE + E² in factored form, accurate next to free levels
                    let p = Complex64::from_polar(1.0, theta * ell);
                    num / ((e - p) * (e - p.conj()) * 2.0 * kappa)
                }
            }
            Longitudinal::Extremal { ell, upper } => {
                let h = kappa * (ell / 2.0);
                if h.norm() < 1.0 {
                    if upper {
                        // coth(h)/(2κ) = cosh(h) / (2κ h sinhc(h))
                        h.cosh() / (2.0 * kappa * h * sinhc(h))
                    } else {
                        // tanh(h)/(2κ) = (ℓ/4) sinhc(h)/cosh(h), regular at κ = 0
                        sinhc(h) / h.cosh() * (ell / 4.0)
                    }
                } else {
                    let e = (-2.0 * h).exp();
                    let ratio = if upper { (one + e) / (one - e) } else { (one - e) / (one + e) };
                    ratio / (2.0 * kappa)
                }
            }
        }
    }

    /// `true` if the per-mode value diverges at `κ = 0`.
    fn singular_at_threshold(&self) -> bool {
        match *self {
            Longitudinal::Straight => true,
            Longitudinal::Bloch { ell, theta } => (theta * ell).cos() >= 1.0 - 1e-15,
            Longitudinal::Extremal { upper, .. } => upper,
        }
    }

    /// Decay length of the difference to the straight kernel (for tail bounds).
    fn image_distance(&self, x: f64) -> Option<f64> {
        match *self {
            Longitudinal::Straight => None,
            Longitudinal::Bloch { ell, .. } => Some(ell - x.abs()),
            Longitudinal::Extremal { ell, .. } => Some(ell),
        }
    }
}

/// `erfcx(a) = e^{a²} erfc(a)`.
fn erfcx(a: f64) -> f64 {
    if a < 25.0 {
        (a * a).exp() * erfc(a)
    } else {
        let a2 = a * a;
        (1.0 - 0.5 / a2 + 0.75 / (a2 * a2) - 1.875 / (a2 * a2 * a2)) / (a * PI.sqrt())
    }
}

/// `∫_τ^∞ (4πt)^{-1/2} e^{-x²/4t - ct} dt` for real `c > 0`.
fn long_time_mode(c: f64, x: f64, tau: f64) -> f64 {
    let sc = c.sqrt();
    let st = tau.sqrt();
    if x == 0.0 {
        return erfc(sc * st) / (2.0 * sc);
    }
    let am = sc * st - x / (2.0 * st);
    let ap = sc * st + x / (2.0 * st);
    let damp = (-c * tau - x * x / (4.0 * tau)).exp();
    let first = if am >= 0.0 {
        erfcx(am) * damp
    } else {
        (-sc * x).exp() * erfc(am)
    };
    (first + erfcx(ap) * damp) / (4.0 * sc)
}

/// `∫_0^τ (4πt)^{-1/2} e^{-x²/4t - ct} dt` for complex `c`.
fn short_time_mode(c: Complex64, x: f64, tau: f64) -> Complex64 {
    if c.im == 0.0 && x == 0.0 {
        let w = c.re * tau;
        if w > 0.0 {
            return Complex64::new(erf(w.sqrt()) / (2.0 * c.re.sqrt()), 0.0);
        }
    }
    // t = τ s²:  √(τ/π) ∫_0^1 e^{-x²/(4τs²) - cτs²} ds
    let pref = (tau / PI).sqrt();
    if x == 0.0 && (c * tau).norm() < 8.0 {
        // Σ (-cτ)^k / (k! (2k+1))
        let w = -c * tau;
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..80 {
            term *= w / k as f64;
            let add = term / (2 * k + 1) as f64;
            sum += add;
            if add.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        return sum * pref;
    }
    let q = x * x / (4.0 * tau);
    let (v, _) = integrate_adaptive(
        |s| {
            if s <= 0.0 {
                return ZERO;
            }
            (-q / (s * s) - c * tau * s * s).exp()
        },
        0.0,
        1.0,
        1e-16,
        400,
    );
    v * pref
}

/// `(e^w - 1) / w`.
fn expm1_over(w: Complex64) -> Complex64 {
    if w.norm() < 1e-3 {
        Complex64::new(1.0, 0.0) + w / 2.0 + w * w / 6.0 + w * w * w / 24.0
    } else {
        (w.exp() - 1.0) / w
    }
}

/// Weyl-density estimate of `Σ_{n >= N} χ_n(b)² erfc(√((ν_n - z)τ)) / (2√(ν_n - z))`.
fn weyl_tail(x0: f64, tau: f64) -> f64 {
    let integral = (-x0 * x0).exp() / PI.sqrt() - x0 * erfc(x0);
    integral.max(0.0) / (4.0 * PI * tau.sqrt())
}

/// The free resolvent of a tube with a fixed transverse basis.
///
/// Transverse profiles `χ_n(b)` are cached per point behind a mutex, so a
/// `Tube` can be shared between threads.
#[derive(Debug)]
pub struct Tube {
    basis: ModeBasis,
    renorm: Renormalization,
    profiles: Mutex<HashMap<[u64; 2], Arc<Vec<f64>>>>,
}

impl Clone for Tube {
    fn clone(&self) -> Self {
        Tube::new(self.basis.clone(), self.renorm.clone())
    }
}

impl Tube {
    pub fn new(basis: ModeBasis, renorm: Renormalization) -> Self {
        Tube { basis, renorm, profiles: Mutex::new(HashMap::new()) }
    }

    /// Tube with default renormalisation for the basis' cross-section.
    pub fn with_basis(basis: ModeBasis) -> Self {
        let renorm = Renormalization::for_cross_section(basis.cross_section());
        Tube::new(basis, renorm)
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.basis
    }

    pub fn renorm(&self) -> &Renormalization {
        &self.renorm
    }

    pub fn cross_section(&self) -> &CrossSection {
        self.basis.cross_section()
    }

    pub fn nu0(&self) -> f64 {
        self.basis.nu(0)
    }

    /// First threshold strictly above `ν_0` (or `ν_0` for a one-mode basis).
    pub fn nu1(&self) -> f64 {
        self.basis.nus().find(|&nu| nu > self.nu0()).unwrap_or(self.nu0())
    }

    pub fn profile(&self, y: Point2) -> Result<Arc<Vec<f64>>> {
        let key = [y[0].to_bits(), y[1].to_bits()];
        if let Some(p) = self.profiles.lock().expect("profile cache poisoned").get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(self.basis.profile(y)?);
        self.profiles.lock().expect("profile cache poisoned").insert(key, p.clone());
        Ok(p)
    }

    fn split_time(&self, z: Complex64, points: &[Point2]) -> f64 {
        let nu_max = self.basis.nu(self.basis.count() - 1);
        let gap = (nu_max - z.re).max(nu_max * 0.05).max(1e-300);
        let mut tau = SPLIT_EXPONENT / gap;
        if !self.cross_section().heat_kernel_is_exact() {
            for y in points {
                let d = self.cross_section().boundary_distance(*y);
                tau = tau.min(d * d / SPLIT_EXPONENT);
            }
        }
        tau
    }

    fn kernel_core(
        &self,
        y1: Point2,
        y2: Point2,
        x: f64,
        z: Complex64,
        longitudinal: Longitudinal,
        skip_mode: Option<usize>,
    ) -> Result<Evaluated> {
        let p1 = self.profile(y1)?;
        let p2 = self.profile(y2)?;
        let diagonal = x == 0.0 && y1 == y2;
        let tau = self.split_time(z, &[y1, y2]);
        let mut sum = ZERO;
        for (n, nu) in self.basis.nus().enumerate() {
            let w = p1[n] * p2[n];
            if w == 0.0 {
                continue;
            }
            let c = Complex64::new(nu - z.re, -z.im);
            let k = kappa(nu, z);
            let long_part = if skip_mode == Some(n) {
                // only the short-time bookkeeping survives for a removed mode
                -short_time_mode(c, x, tau)
            } else if k.norm() == 0.0 {
                if longitudinal.singular_at_threshold() {
                    return Err(Error::Threshold { z: z.re, index: n });
                }
                longitudinal.eval(k, x) - short_time_mode(c, x, tau)
            } else if matches!(longitudinal, Longitudinal::Straight) && c.im == 0.0 && c.re > 0.0 {
                Complex64::new(long_time_mode(c.re, x, tau), 0.0)
            } else {
                longitudinal.eval(k, x) - short_time_mode(c, x, tau)
            };
            sum += long_part * w;
        }
        let small = if diagonal {
            self.short_time_diagonal(y1, z, tau)
        } else {
            self.short_time_offdiagonal(y1, y2, x, z, tau)
        };
        let nu_max = self.basis.nu(self.basis.count() - 1);
        let x0 = ((nu_max - z.re).max(0.0) * tau).sqrt();
        let mut tail = weyl_tail(x0, tau) * self.basis.sup_norm_sq() * self.basis.area();
        if let Some(d) = longitudinal.image_distance(x) {
            let kn = (nu_max - z.re).max(0.0).sqrt();
            tail += self.basis.sup_norm_sq() * (-kn * d).exp() / (2.0 * kn.max(1e-300)) * self.basis.count() as f64;
        }
        if !self.cross_section().heat_kernel_is_exact() {
            tail += (z.re.max(0.0) * tau).exp() * (-SPLIT_EXPONENT).exp() / (4.0 * PI.powf(1.5) * tau.sqrt());
        }
        Ok(Evaluated { value: sum + small, tail_bound: tail })
    }

    /// `(1/2√π) ∫_0^τ t^{-1/2} [e^{zt} K_M(t; b, b) - 1/(4πt)] dt - 1/(4π^{3/2}√τ)`.
    fn short_time_diagonal(&self, b: Point2, z: Complex64, tau: f64) -> Complex64 {
        let cs = *self.cross_section();
        let (v, _) = integrate_adaptive(
            |s| {
                let t = tau * s * s;
                let w = z * t;
                let free = expm1_over(w) * z / (4.0 * PI);
                let corr = if t > 0.0 { w.exp() * cs.heat_kernel_correction(b, b, t) } else { ZERO };
                (free + corr) * (2.0 * tau.sqrt())
            },
            0.0,
            1.0,
            1e-15,
            400,
        );
        v / (2.0 * PI.sqrt()) - 1.0 / (4.0 * PI.powf(1.5) * tau.sqrt())
    }

    /// `∫_0^τ (4πt)^{-1/2} e^{-x²/4t} e^{zt} K_M(t; y1, y2) dt`.
    fn short_time_offdiagonal(&self, y1: Point2, y2: Point2, x: f64, z: Complex64, tau: f64) -> Complex64 {
        let cs = *self.cross_section();
        let dy2 = (y1[0] - y2[0]).powi(2) + (y1[1] - y2[1]).powi(2);
        let r2 = x * x + dy2;
        let r = r2.sqrt();
        let free_static = erfc(r / (2.0 * tau.sqrt())) / (4.0 * PI * r);
        let pref = 2.0 / ((4.0 * PI).powf(1.5) * tau.sqrt());
        let q = r2 / (4.0 * tau);
        let (dynamic, _) = integrate_adaptive(
            |s| {
                if s <= 0.0 {
                    return ZERO;
                }
                let w = z * tau * s * s;
                // (e^{w} - 1)/s² = zτ (e^w - 1)/w
                expm1_over(w) * z * tau * (-q / (s * s)).exp() * pref
            },
            0.0,
            1.0,
            1e-15,
            400,
        );
        let qx = x * x / (4.0 * tau);
        let (images, _) = integrate_adaptive(
            |s| {
                if s <= 0.0 {
                    return ZERO;
                }
                let t = tau * s * s;
                let corr = cs.heat_kernel_correction(y1, y2, t);
                if corr == 0.0 {
                    return ZERO;
                }
                (z * t).exp() * corr * (-qx / (s * s)).exp() * (tau / PI).sqrt()
            },
            0.0,
            1.0,
            1e-15,
            400,
        );
        Complex64::new(free_static, 0.0) + dynamic + images
    }

    fn checked(&self, e: Evaluated, what: &str) -> Result<Complex64> {
        let scale = e.value.norm().max(1.0 / self.basis.area().sqrt());
        if e.tail_bound > self.renorm.tail_tolerance * scale {
            return Err(Error::Convergence(format!(
                "{what}: truncation bound {:.3e} exceeds tolerance (value {:.6e}); enlarge the mode basis",
                e.tail_bound,
                e.value.norm()
            )));
        }
        Ok(e.value)
    }

    fn check_points(&self, pts: &[Point2]) -> Result<()> {
        for y in pts {
            if !self.cross_section().contains(*y) {
                return Err(Error::Domain(format!("({}, {})", y[0], y[1])));
            }
        }
        Ok(())
    }

    /// Free resolvent kernel `G_0(x1, x2; z)` of the straight tube.
    pub fn g0(&self, x1: Point3, x2: Point3, z: Complex64) -> Result<Complex64> {
        self.check_points(&[x1.y, x2.y])?;
        if x1 == x2 {
            return Err(Error::Singularity);
        }
        check_threshold(&self.basis, z)?;
        let sep = (x1.x - x2.x).abs();
        if let Some(v) = self.g0_mode_sum(x1.y, x2.y, sep, z)? {
            return Ok(v);
        }
        let e = self.kernel_core(x1.y, x2.y, sep, z, Longitudinal::Straight, None)?;
        self.checked(e, "G0")
    }

    /// Direct mode sum, used when the longitudinal separation makes it
    /// converge inside the basis. Returns `None` otherwise.
    fn g0_mode_sum(&self, y1: Point2, y2: Point2, sep: f64, z: Complex64) -> Result<Option<Complex64>> {
        let nu_max = self.basis.nu(self.basis.count() - 1);
        let k_max = kappa(nu_max, z).re;
        if sep * k_max < 40.0 {
            return Ok(None);
        }
        let p1 = self.profile(y1)?;
        let p2 = self.profile(y2)?;
        let sup = self.basis.sup_norm_sq();
        let mut sum = ZERO;
        for (n, nu) in self.basis.nus().enumerate() {
            let k = kappa(nu, z);
            if k.re > 0.0 && sup * (-k.re * sep).exp() / (2.0 * k.norm()) < 1e-17 {
                break;
            }
            if p1[n] * p2[n] != 0.0 {
                sum += (-k * sep).exp() / (2.0 * k) * (p1[n] * p2[n]);
            }
        }
        Ok(Some(sum))
    }

    /// Renormalised diagonal `ξ(b; z)` of the straight-tube kernel.
    pub fn xi(&self, b: Point2, z: Complex64) -> Result<Complex64> {
        self.check_points(&[b])?;
        check_threshold(&self.basis, z)?;
        let e = self.kernel_core(b, b, 0.0, z, Longitudinal::Straight, None)?;
        self.checked(e, "xi")
    }

    /// `ξ` with its truncation bound.
    pub fn xi_evaluated(&self, b: Point2, z: Complex64) -> Result<Evaluated> {
        self.check_points(&[b])?;
        check_threshold(&self.basis, z)?;
        self.kernel_core(b, b, 0.0, z, Longitudinal::Straight, None)
    }

    /// Floquet–Bloch free kernel `G_0(x1, x2; θ; z)` for period `ell`.
    ///
    /// Phase convention: `G(X + ℓ) = e^{iθℓ} G(X)` in `X = x1 - x2`, i.e.
    /// the factor multiplying `sinh(κ|X|)` is `e^{i sgn(X) θℓ}`.
    pub fn g0_bloch(&self, x1: Point3, x2: Point3, theta: f64, ell: f64, z: Complex64) -> Result<Complex64> {
        self.check_points(&[x1.y, x2.y])?;
        if !(ell > 0.0) {
            return Err(Error::Config(format!("period must be positive, got {ell}")));
        }
        let raw = x1.x - x2.x;
        let shifts = (raw / ell).round();
        let sep = raw - shifts * ell;
        if sep.abs() < 1e-15 * ell && x1.y == x2.y {
            return Err(Error::Singularity);
        }
        let phase = Complex64::from_polar(1.0, shifts * theta * ell);
        let long = Longitudinal::Bloch { ell, theta };
        let e = self.kernel_core(x1.y, x2.y, sep, z, long, None).map_err(|e| bloch_pole(e, z))?;
        if !e.value.is_finite() {
            return Err(Error::Pole { z: z.re, what: "free Floquet eigenvalue".into() });
        }
        Ok(self.checked(e, "Bloch G0")? * phase)
    }

    /// Renormalised diagonal of the Bloch kernel, `ξ(b, θ; z)`.
    pub fn xi_bloch(&self, b: Point2, theta: f64, ell: f64, z: f64) -> Result<f64> {
        self.check_points(&[b])?;
        if !(ell > 0.0) {
            return Err(Error::Config(format!("period must be positive, got {ell}")));
        }
        let zc = Complex64::new(z, 0.0);
        let e = self
            .kernel_core(b, b, 0.0, zc, Longitudinal::Bloch { ell, theta }, None)
            .map_err(|e| bloch_pole(e, zc))?;
        if !e.value.re.is_finite() {
            return Err(Error::Pole { z, what: "free Floquet eigenvalue".into() });
        }
        Ok(self.checked(e, "Bloch xi")?.re)
    }

    /// `θ`-extremal diagonals `(ξ_-, ξ_+)(b; z)` for `z` below `ν_0`
    /// (`ξ_-` also at `z = ν_0` itself).
    pub fn xi_extremal(&self, b: Point2, ell: f64, z: f64) -> Result<(f64, f64)> {
        self.check_points(&[b])?;
        let zc = Complex64::new(z, 0.0);
        let lower = self.kernel_core(b, b, 0.0, zc, Longitudinal::Extremal { ell, upper: false }, None)?;
        let lower = self.checked(lower, "xi_minus")?.re;
        if z >= self.nu0() {
            return Ok((lower, f64::INFINITY));
        }
        let upper = self.kernel_core(b, b, 0.0, zc, Longitudinal::Extremal { ell, upper: true }, None)?;
        Ok((lower, self.checked(upper, "xi_plus")?.re))
    }

    /// `ξ` of a `θ`-extremal kernel with the lowest mode's longitudinal
    /// term removed: the remainder bounds `(η_-, η_+)` above `ν_0`.
    pub fn eta_extremal(&self, b: Point2, ell: f64, z: f64) -> Result<(f64, f64)> {
        self.check_points(&[b])?;
        let zc = Complex64::new(z, 0.0);
        let mut out = [0.0; 2];
        for (i, upper) in [false, true].into_iter().enumerate() {
            let e = self.kernel_core(b, b, 0.0, zc, Longitudinal::Extremal { ell, upper }, Some(0))?;
            out[i] = self.checked(e, "eta")?.re;
        }
        Ok((out[0], out[1]))
    }

    /// Partial sum of the `√n` counterterm series over the whole basis.
    ///
    /// Diagnostic only: this series converges slowly to `ξ` shifted by the
    /// perimeter constant `|∂M| / (8π|M|)`.
    pub fn xi_counterterm_partial_sum(&self, b: Point2, z: f64) -> Result<f64> {
        let p = self.profile(b)?;
        let c = 2.0 * (PI * self.basis.area()).sqrt();
        let mut s = 0.0;
        for (n, nu) in self.basis.nus().enumerate() {
            if nu <= z {
                return Err(Error::Range("counterterm series is defined below nu_0 only".into()));
            }
            s += p[n] * p[n] / (2.0 * (nu - z).sqrt()) + ((n as f64).sqrt() - ((n + 1) as f64).sqrt()) / c;
        }
        Ok(s)
    }
}

fn bloch_pole(e: Error, z: Complex64) -> Error {
    match e {
        Error::Threshold { .. } => Error::Pole { z: z.re, what: "free Floquet eigenvalue at a threshold".into() },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xsection::build_rectangle_modes;

    fn square(count: usize) -> Tube {
        Tube::with_basis(build_rectangle_modes(1.0, 1.0, count).unwrap())
    }

    #[test]
    fn spectral_point_branches() {
        let t = square(10);
        let nu0 = t.nu0();
        let sp = spectral_point(Complex64::new(nu0 - 1.0, 0.0), t.basis()).unwrap();
        assert!((sp.kappa[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(sp.n_open, 0);
        let sp = spectral_point(Complex64::new(nu0 + 4.0, 0.0), t.basis()).unwrap();
        assert!((sp.kappa[0] - Complex64::new(0.0, -2.0)).norm() < 1e-12);
        assert_eq!(sp.n_open, 1);
        assert!((sp.k_open[0] - 2.0).abs() < 1e-12);
        let sp = spectral_point(Complex64::new(nu0, 1.0), t.basis()).unwrap();
        assert!((sp.kappa[0] - Complex64::from_polar(1.0, -PI / 4.0)).norm() < 1e-12);
        for (n, k) in sp.kappa.iter().enumerate() {
            assert!((k * k + sp.z - t.basis().nu(n)).norm() < 1e-12);
        }
        assert!(matches!(
            spectral_point(Complex64::new(nu0, 0.0), t.basis()),
            Err(Error::Threshold { index: 0, .. })
        ));
    }

    #[test]
    fn open_channel_counts() {
        let t = square(10);
        let nu0 = t.nu0();
        assert_eq!(open_channels(nu0 + 1.0, t.basis()).unwrap(), 1);
        assert_eq!(open_channels(nu0 - 1.0, t.basis()).unwrap(), 0);
        assert_eq!(open_channels(5.0 * PI * PI + 1.0, t.basis()).unwrap(), 3);
    }

    #[test]
    fn long_time_closed_form_matches_quadrature() {
        for &(c, x, tau) in &[(3.0f64, 0.1, 0.01), (400.0, 0.02, 0.003), (1e4, 0.3, 0.003), (50.0, 0.0, 0.01)] {
            let total = (-c.sqrt() * x).exp() / (2.0 * c.sqrt());
            let short = short_time_mode(Complex64::new(c, 0.0), x, tau);
            let long = long_time_mode(c, x, tau);
            assert!((short.re + long - total).abs() < 1e-14 * total.max(1.0), "c={c} x={x}");
        }
    }

    #[test]
    fn renorm_identity() {
        let cs = CrossSection::rectangle(1.3, 0.4).unwrap();
        let r = Renormalization::for_cross_section(&cs);
        assert!((r.gamma * r.beta - 1.0 / (2.0 * cs.area())).abs() < 1e-14);
    }

    #[test]
    fn g0_is_symmetric_and_decays() {
        let t = square(1000);
        let z = Complex64::new(t.nu0() - 3.0, 0.0);
        let a = Point3::new(0.0, 0.3, 0.4);
        let b = Point3::new(0.05, 0.6, 0.45);
        let g_ab = t.g0(a, b, z).unwrap();
        let g_ba = t.g0(b, a, z).unwrap();
        assert!((g_ab - g_ba).norm() < 1e-12 * g_ab.norm());
        let far = t.g0(Point3::new(-1e3, 0.5, 0.5), Point3::new(1e3, 0.5, 0.5), Complex64::new(-1e6, 0.0)).unwrap();
        assert!(far.norm() < 1e-100);
        assert!(matches!(t.g0(a, a, z), Err(Error::Singularity)));
    }

    #[test]
    fn g0_single_mode_limit() {
        let t = square(1000);
        let z = Complex64::new(t.nu0() - 1.0, 0.0);
        let g = t.g0(Point3::new(0.0, 0.5, 0.5), Point3::new(5.0, 0.5, 0.5), z).unwrap();
        let approx = (-5.0f64).exp() * 4.0 / 2.0;
        assert!((g.re / approx - 1.0).abs() < 1e-4);
    }

    #[test]
    fn g0_ewald_and_mode_sum_agree_where_both_apply() {
        let t = square(1000);
        let z = Complex64::new(t.nu0() - 2.0, 0.0);
        let (y1, y2) = ([0.3, 0.4], [0.6, 0.7]);
        let sep = 0.5;
        let direct = t.g0_mode_sum(y1, y2, sep, z).unwrap().unwrap();
        let ewald = t.kernel_core(y1, y2, sep, z, Longitudinal::Straight, None).unwrap().value;
        assert!((direct - ewald).norm() < 1e-12, "{direct} vs {ewald}");
        // open channels too
        let z = Complex64::new(t.nu0() + 40.0, 0.0);
        let direct = t.g0_mode_sum(y1, y2, sep, z).unwrap().unwrap();
        let ewald = t.kernel_core(y1, y2, sep, z, Longitudinal::Straight, None).unwrap().value;
        assert!((direct - ewald).norm() < 1e-12, "{direct} vs {ewald}");
    }

    #[test]
    fn xi_monotone_and_edge_asymptote() {
        let t = square(1000);
        let b = [0.5, 0.5];
        let nu0 = t.nu0();
        let x4 = t.xi(b, Complex64::new(nu0 - 4.0, 0.0)).unwrap().re;
        let x9 = t.xi(b, Complex64::new(nu0 - 9.0, 0.0)).unwrap().re;
        assert!(x4 > x9);
        let mut prev: Option<f64> = None;
        for d in [1e-2f64, 1e-4, 1e-6] {
            let v = d.sqrt() * t.xi(b, Complex64::new(nu0 - d, 0.0)).unwrap().re;
            if d < 1e-3 {
                assert!((v - 2.0).abs() < 0.04, "δ = {d}: {v}");
            }
            if let Some(p) = prev {
                assert!((v - 2.0f64).abs() < (p - 2.0f64).abs());
            }
            prev = Some(v);
        }
    }

    #[test]
    fn xi_matches_independent_reference_values() {
        // converged heat-kernel evaluation with 3000 modes, computed separately
        let t = square(1000);
        let b = [0.5, 0.5];
        let cases = [(1.0, 1.527_950_723_59), (5.0, 0.398_026_272_74)];
        for (d, want) in cases {
            let got = t.xi(b, Complex64::new(t.nu0() - d, 0.0)).unwrap();
            assert!((got.re - want).abs() < 1e-9 && got.im == 0.0, "{got} vs {want}");
        }
    }

    #[test]
    fn xi_imaginary_part_counts_open_channels() {
        let t = square(1000);
        let xi = t.xi([0.5, 0.5], Complex64::new(t.nu0() + 4.0, 0.0)).unwrap();
        assert!((xi.im - 1.0).abs() < 1e-6, "{xi}");
    }

    #[test]
    fn xi_is_basis_independent() {
        let b = [0.31, 0.62];
        let z = Complex64::new(10.0, 0.0);
        let a = square(600).xi(b, z).unwrap();
        let c = square(1500).xi(b, z).unwrap();
        assert!((a - c).norm() < 1e-11, "{a} vs {c}");
    }

    #[test]
    fn counterterm_series_is_offset_by_perimeter_constant() {
        let t = square(1000);
        let b = [0.5, 0.5];
        let z = t.nu0() - 1.0;
        let xi = t.xi(b, Complex64::new(z, 0.0)).unwrap().re;
        let partial = t.xi_counterterm_partial_sum(b, z).unwrap();
        // slow, oscillating convergence: only the rough size of the offset is stable
        let offset = 4.0 / (8.0 * PI);
        assert!((partial - xi - offset).abs() < 0.05, "{} vs {offset}", partial - xi);
    }

    #[test]
    fn bloch_kernels_collapse_for_long_period() {
        let t = square(1000);
        let z = Complex64::new(t.nu0() - 1.0, 0.0);
        let b = [0.5, 0.5];
        let xs = t.xi(b, z).unwrap().re;
        let xb = t.xi_bloch(b, 0.3, 40.0, z.re).unwrap();
        assert!((xs - xb).abs() < 1e-8);
        let x1 = Point3::new(3.0, 0.4, 0.5);
        let x2 = Point3::new(4.0, 0.55, 0.3);
        let gs = t.g0(x1, x2, z).unwrap();
        let gb = t.g0_bloch(x1, x2, 0.3, 40.0, z).unwrap();
        assert!((gs - gb).norm() < 1e-8);
    }

    #[test]
    fn bloch_theta_periodicity_and_evenness() {
        let t = square(1000);
        let ell = 2.0;
        let z = Complex64::new(t.nu0() - 2.0, 0.0);
        let x1 = Point3::new(0.2, 0.4, 0.5);
        let x2 = Point3::new(1.5, 0.55, 0.3);
        let th = 0.7;
        let a = t.g0_bloch(x1, x2, th, ell, z).unwrap();
        let b = t.g0_bloch(x1, x2, th + 2.0 * PI / ell, ell, z).unwrap();
        assert!((a - b).norm() < 1e-12);
        let b = [0.5, 0.5];
        let p = t.xi_bloch(b, th, ell, z.re).unwrap();
        let m = t.xi_bloch(b, -th, ell, z.re).unwrap();
        assert!((p - m).abs() < 1e-12);
    }

    #[test]
    fn bloch_xi_diverges_at_free_floquet_level() {
        let t = square(1000);
        let ell = 2.0;
        let theta = PI / (2.0 * ell);
        let e00 = theta * theta + t.nu0();
        let v2 = t.xi_bloch([0.5, 0.5], theta, ell, e00 - 1e-2).unwrap();
        let v4 = t.xi_bloch([0.5, 0.5], theta, ell, e00 - 1e-4).unwrap();
        assert!(v2 > 0.0 && v4 > 0.0);
        let ratio = v4 / v2;
        assert!((ratio / 100.0 - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn bloch_xi_is_continuous_across_threshold() {
        let t = square(1000);
        let (ell, theta) = (2.0, 1.0);
        let nu0 = t.nu0();
        let at = t.xi_bloch([0.5, 0.5], theta, ell, nu0).unwrap();
        let below = t.xi_bloch([0.5, 0.5], theta, ell, nu0 - 1e-7).unwrap();
        let above = t.xi_bloch([0.5, 0.5], theta, ell, nu0 + 1e-7).unwrap();
        assert!((at - below).abs() < 1e-5 && (at - above).abs() < 1e-5, "{below} {at} {above}");
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::xsection::build_rectangle_modes;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn tube() -> &'static Tube {
        static T: OnceLock<Tube> = OnceLock::new();
        T.get_or_init(|| Tube::with_basis(build_rectangle_modes(1.0, 0.8, 600).unwrap()))
    }

    fn point() -> impl Strategy<Value = Point3> {
        (-1.0..1.0f64, 0.05..0.95f64, 0.05..0.75f64).prop_map(|(x, a, b)| Point3::new(x, a, b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kernel_is_symmetric_and_positive_below_threshold(p in point(), q in point(), dz in 0.1..30.0f64) {
            prop_assume!(p.distance(&q) > 1e-3);
            let t = tube();
            let z = Complex64::new(t.nu0() - dz, 0.0);
            let a = t.g0(p, q, z).unwrap();
            let b = t.g0(q, p, z).unwrap();
            prop_assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0));
            prop_assert!(a.re > 0.0 && a.im.abs() < 1e-12);
        }

        #[test]
        fn bloch_kernel_is_hermitian(p in point(), q in point(), theta in -1.5..1.5f64, dz in 0.1..20.0f64) {
            prop_assume!(p.distance(&q) > 1e-3);
            let t = tube();
            let z = Complex64::new(t.nu0() - dz, 0.0);
            let a = t.g0_bloch(p, q, theta, 2.0, z).unwrap();
            let b = t.g0_bloch(q, p, theta, 2.0, z).unwrap();
            prop_assert!((a - b.conj()).norm() <= 1e-10 * a.norm().max(1.0));
        }

        #[test]
        fn xi_increases_below_threshold(y1 in 0.05..0.95f64, y2 in 0.05..0.75f64, z in -50.0..20.0f64, dz in 0.01..5.0f64) {
            let t = tube();
            let hi = (z + dz).min(t.nu0() - 1e-3);
            prop_assume!(hi > z);
            let a = t.xi([y1, y2], Complex64::new(z, 0.0)).unwrap().re;
            let b = t.xi([y1, y2], Complex64::new(hi, 0.0)).unwrap().re;
            prop_assert!(b > a);
        }
    }
}
