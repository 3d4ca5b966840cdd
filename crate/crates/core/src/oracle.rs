//! Slow, independent reference computations used to cross-check the main
//! solvers. Each returns a value with an error estimate.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::greenfn::Point3;
use crate::special::{bessel_j, extrapolate_to_zero};
use crate::xsection::{CrossSection, ModeBasis, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    SpectralSum,
    AbelLimit,
    FiniteDifference,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub value: Complex64,
    pub error_estimate: f64,
    pub method: OracleMethod,
}

/// Floquet–Bloch kernel as the double sum over free fibre eigenfunctions
/// `e^{i q_m x} χ_n(y) / √ℓ`, `q_m = 2πm/ℓ + θ`, `|m| <= m_cut`.
///
/// The `m`-tail beyond the cut is replaced by its leading `1/q²` form,
/// which does not depend on the transverse mode and is summed once.
pub fn g0_bloch_spectral_sum(basis: &ModeBasis, x1: Point3, x2: Point3, theta: f64, z: f64, ell: f64, m_cut: usize) -> Result<OracleReport> {
    if m_cut < 500 {
        return Err(Error::Config("m_cut must be at least 500".into()));
    }
    let p1 = basis.profile(x1.y)?;
    let p2 = basis.profile(x2.y)?;
    let sep = x1.x - x2.x;
    let m = m_cut as i64;
    let qs: Vec<f64> = (-m..=m).map(|k| 2.0 * PI * k as f64 / ell + theta).collect();
    let phases: Vec<Complex64> = qs.iter().map(|q| Complex64::from_polar(1.0, q * sep) / ell).collect();
    let q_sq: Vec<f64> = qs.iter().map(|q| q * q).collect();
    for (n, nu) in basis.nus().enumerate() {
        for &q2 in &q_sq {
            if (q2 + nu - z).abs() < 1e-9 * (1.0 + z.abs()) && p1[n] * p2[n] != 0.0 {
                return Err(Error::Pole { z, what: "free Floquet eigenvalue".into() });
            }
        }
    }
    // n-independent tail Σ_{|k|>m} e^{i q X}/(ℓ q²), summed far out
    let far = 200 * m_cut as i64;
    let mut tail = Complex64::new(0.0, 0.0);
    for k in (m + 1)..=far {
        for s in [-1i64, 1] {
            let q = 2.0 * PI * (s * k) as f64 / ell + theta;
            tail += Complex64::from_polar(1.0, q * sep) / (ell * q * q);
        }
    }
    let q_far = 2.0 * PI * far as f64 / ell;
    let sin_half = (PI * sep / ell).sin().abs().max(1e-3);
    let far_bound = 2.0 / (ell * q_far * q_far * sin_half);

    let mut sum = Complex64::new(0.0, 0.0);
    let mut weight_sum = Complex64::new(0.0, 0.0);
    let mut abs_weight = 0.0;
    let mut nu_max = 0.0f64;
    for (n, nu) in basis.nus().enumerate() {
        let w = p1[n] * p2[n];
        nu_max = nu;
        if w == 0.0 {
            continue;
        }
        let c = nu - z;
        let mut inner = Complex64::new(0.0, 0.0);
        for (ph, q2) in phases.iter().zip(&q_sq) {
            inner += ph / (q2 + c);
        }
        sum += inner * w;
        weight_sum += w;
        abs_weight += w.abs() * (c.abs() + 1.0);
    }
    sum += tail * weight_sum;
    let q_cut = 2.0 * PI * m_cut as f64 / ell;
    // next order of the 1/(q² + c) expansion, and the far tail
    let expansion_bound = 2.0 * abs_weight / (ell * q_cut.powi(4) * sin_half);
    // transverse modes beyond the basis (Weyl density, longitudinal decay)
    let d = sep.rem_euclid(ell).min(ell - sep.rem_euclid(ell)).max(1e-12);
    let k_n = (nu_max - z).max(0.0).sqrt();
    let transverse_bound = basis.sup_norm_sq() * basis.area() / (4.0 * PI) * 2.0 * (-k_n * d).exp() / d;
    Ok(OracleReport {
        value: sum,
        error_estimate: expansion_bound + far_bound * weight_sum.norm() + transverse_bound + 1e-13 * sum.norm(),
        method: OracleMethod::SpectralSum,
    })
}

/// `(ν_n, χ_n(b)²)` for a rectangle, all lattice modes with `ν_n <= nu_max`.
fn rectangle_terms(width: f64, height: f64, b: Point2, nu_max: f64) -> Vec<(f64, f64)> {
    let pmax = (nu_max.sqrt() * width / PI).floor() as usize;
    let sx: Vec<f64> = (1..=pmax + 1).map(|p| (p as f64 * PI * b[0] / width).sin().powi(2)).collect();
    let qmax = (nu_max.sqrt() * height / PI).floor() as usize;
    let sy: Vec<f64> = (1..=qmax + 1).map(|q| (q as f64 * PI * b[1] / height).sin().powi(2)).collect();
    let norm = 4.0 / (width * height);
    let mut out = Vec::new();
    for p in 1..=pmax {
        let ex = (p as f64 * PI / width).powi(2);
        for q in 1..=qmax {
            let nu = ex + (q as f64 * PI / height).powi(2);
            if nu > nu_max {
                break;
            }
            out.push((nu, norm * sx[p - 1] * sy[q - 1]));
        }
    }
    out
}

/// Zeros of `J_0` below `x_max` by McMahon's expansion refined with Newton.
fn j0_zeros(x_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for s in 1.. {
        let beta = (s as f64 - 0.25) * PI;
        let b8 = 8.0 * beta;
        let mut x = beta + 1.0 / b8 - 124.0 / (3.0 * b8.powi(3)) + 120928.0 / (15.0 * b8.powi(5));
        for _ in 0..6 {
            let f = bessel_j(0, x);
            let df = -bessel_j(1, x);
            let step = f / df;
            x -= step;
            if step.abs() < 1e-15 * x {
                break;
            }
        }
        if x > x_max {
            break;
        }
        out.push(x);
    }
    out
}

/// `(ν_n, χ_n(0)²)` of the rotationally symmetric modes of a disk.
fn disk_center_terms(radius: f64, nu_max: f64) -> Vec<(f64, f64)> {
    j0_zeros(nu_max.sqrt() * radius)
        .into_iter()
        .map(|j| {
            let j1 = bessel_j(1, j);
            ((j / radius).powi(2), 1.0 / (PI * radius * radius * j1 * j1))
        })
        .collect()
}

/// `ξ(b; z)` as the `u → 0` limit of `Σ_n χ_n(b)² e^{-κ_n u}/(2κ_n) - 1/(4πu)`.
///
/// The bracket is summed over all modes with `κ_n u_min <= 35` at every
/// `u` of the grid and extrapolated polynomially; the error estimate is the
/// spread between the degree-2 and degree-3 extrapolants. Disks are
/// supported at the centre only.
pub fn xi_abel_limit(cs: &CrossSection, b: Point2, z: f64, u_grid: &[f64]) -> Result<OracleReport> {
    if u_grid.len() < 4 || u_grid.iter().any(|u| !(*u > 0.0)) {
        return Err(Error::Config("need at least four positive damping lengths".into()));
    }
    let u_min = u_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let k_max = 35.0 / u_min;
    let nu_max = k_max * k_max + z;
    let terms = match *cs {
        CrossSection::Rectangle { width, height } => rectangle_terms(width, height, b, nu_max),
        CrossSection::Disk { radius } => {
            if b[0].hypot(b[1]) > 1e-14 * radius {
                return Err(Error::Config("disk Abel oracle is limited to the centre".into()));
            }
            disk_center_terms(radius, nu_max)
        }
    };
    if terms.iter().any(|&(nu, _)| nu <= z) {
        return Err(Error::Range("Abel oracle needs z below nu_0".into()));
    }
    let mut brackets = vec![0.0; u_grid.len()];
    for &(nu, w) in &terms {
        let kappa = (nu - z).sqrt();
        for (s, u) in brackets.iter_mut().zip(u_grid) {
            *s += w * (-kappa * u).exp() / (2.0 * kappa);
        }
    }
    let ys: Vec<Complex64> = brackets.iter().zip(u_grid).map(|(s, u)| Complex64::new(s - 1.0 / (4.0 * PI * u), 0.0)).collect();
    let n = ys.len();
    let deg3 = extrapolate_to_zero(&u_grid[n - 4..], &ys[n - 4..]).re;
    let deg2 = extrapolate_to_zero(&u_grid[n - 3..], &ys[n - 3..]).re;
    let truncation = (-k_max * u_min).exp() / (4.0 * PI * u_min);
    let spread = (deg3 - deg2).abs();
    if spread > 1e-3 * deg3.abs().max(1.0) {
        return Err(Error::Convergence(format!("Abel extrapolants disagree: {deg2} vs {deg3}")));
    }
    Ok(OracleReport { value: Complex64::new(deg3, 0.0), error_estimate: spread + truncation, method: OracleMethod::AbelLimit })
}

/// Sparse operator with a banded LU factorisation (no pivoting; the
/// discrete Dirichlet Laplacians are diagonally dominant M-matrices).
struct BandedOperator {
    n: usize,
    bw: usize,
    rows: Vec<Vec<(usize, f64)>>,
    lu: Vec<f64>,
}

impl BandedOperator {
    fn new(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let bw = rows.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |&(j, _)| i.abs_diff(j))).max().unwrap_or(0);
        let width = 2 * bw + 1;
        let mut lu = vec![0.0; n * width];
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                lu[i * width + (j + bw - i)] += v;
            }
        }
        for k in 0..n {
            let pivot = lu[k * width + bw];
            for i in (k + 1)..(k + bw + 1).min(n) {
                let l = lu[i * width + (k + bw - i)] / pivot;
                if l == 0.0 {
                    continue;
                }
                lu[i * width + (k + bw - i)] = l;
                for j in (k + 1)..(k + bw + 1).min(n) {
                    lu[i * width + (j + bw - i)] -= l * lu[k * width + (j + bw - k)];
                }
            }
        }
        BandedOperator { n, bw, rows, lu }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let width = 2 * self.bw + 1;
        for i in 0..self.n {
            let mut s = rhs[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.lu[i * width + (k + self.bw - i)] * rhs[k];
            }
            rhs[i] = s;
        }
        for i in (0..self.n).rev() {
            let mut s = rhs[i];
            for j in (i + 1)..(i + self.bw + 1).min(self.n) {
                s -= self.lu[i * width + (j + self.bw - i)] * rhs[j];
            }
            rhs[i] = s / self.lu[i * width + self.bw];
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, r) in self.rows.iter().enumerate() {
            out[i] = r.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }
}

/// Lowest `count` eigenvalues by inverse subspace iteration with
/// Schur–Rayleigh–Ritz projection.
fn lowest_eigenvalues(op: &BandedOperator, count: usize) -> Result<Vec<f64>> {
    let n = op.n;
    let p = (2 * count + 4).min(n);
    let mut x = DMatrix::from_fn(n, p, |i, j| ((i * 7919 + j * 104_729 + 13) % 1009) as f64 / 1009.0 - 0.5);
    let mut previous = vec![f64::INFINITY; count];
    let mut col = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..2000 {
        for j in 0..p {
            col.copy_from_slice(x.column(j).as_slice());
            op.solve(&mut col);
            x.column_mut(j).copy_from_slice(&col);
        }
        let q = x.clone().qr().q();
        let mut aq = DMatrix::zeros(n, p);
        for j in 0..p {
            op.apply(q.column(j).as_slice(), &mut tmp);
            aq.column_mut(j).copy_from_slice(&tmp);
        }
        let h = q.transpose() * aq;
        let mut ev: Vec<f64> = h.complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        x = q;
        let converged = ev.iter().zip(&previous).take(count).all(|(a, b)| (a - b).abs() <= 1e-13 * a.abs());
        previous = ev[..count].to_vec();
        if converged {
            return Ok(previous);
        }
    }
    Err(Error::Convergence("finite-difference eigen-iteration did not converge".into()))
}

fn rectangle_operator(width: f64, height: f64, cells_x: usize, cells_y: usize) -> BandedOperator {
    let (hx, hy) = (width / cells_x as f64, height / cells_y as f64);
    let (nx, ny) = (cells_x - 1, cells_y - 1);
    let idx = |i: usize, j: usize| j * nx + i;
    let mut rows = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let mut r = vec![(idx(i, j), 2.0 / (hx * hx) + 2.0 / (hy * hy))];
            if i > 0 {
                r.push((idx(i - 1, j), -1.0 / (hx * hx)));
            }
            if i + 1 < nx {
                r.push((idx(i + 1, j), -1.0 / (hx * hx)));
            }
            if j > 0 {
                r.push((idx(i, j - 1), -1.0 / (hy * hy)));
            }
            if j + 1 < ny {
                r.push((idx(i, j + 1), -1.0 / (hy * hy)));
            }
            rows.push(r);
        }
    }
    BandedOperator::new(rows)
}

/// Disk of radius `radius` on a grid of spacing `h` with Shortley–Weller
/// boundary stencils.
fn disk_operator(radius: f64, h: f64) -> BandedOperator {
    let m = (radius / h).ceil() as i64;
    let inside = |i: i64, j: i64| ((i as f64 * h).powi(2) + (j as f64 * h).powi(2)) < radius * radius * (1.0 - 1e-12);
    let mut index = std::collections::HashMap::new();
    let mut points = Vec::new();
    for j in -m..=m {
        for i in -m..=m {
            if inside(i, j) {
                index.insert((i, j), points.len());
                points.push((i, j));
            }
        }
    }
    // distance from a grid point to the circle along ±e_axis
    let reach = |i: i64, j: i64, di: i64, dj: i64| -> f64 {
        let (x, y) = (i as f64 * h, j as f64 * h);
        if di != 0 {
            let edge = (radius * radius - y * y).max(0.0).sqrt();
            (edge - di as f64 * x).min(h)
        } else {
            let edge = (radius * radius - x * x).max(0.0).sqrt();
            (edge - dj as f64 * y).min(h)
        }
    };
    let mut rows = Vec::with_capacity(points.len());
    for &(i, j) in &points {
        let mut diag = 0.0;
        let mut r = Vec::new();
        for (dir_a, dir_b) in [((-1, 0), (1, 0)), ((0, -1), (0, 1))] {
            let ha = if index.contains_key(&(i + dir_a.0, j + dir_a.1)) { h } else { reach(i, j, dir_a.0, dir_a.1) };
            let hb = if index.contains_key(&(i + dir_b.0, j + dir_b.1)) { h } else { reach(i, j, dir_b.0, dir_b.1) };
            let wa = 2.0 / (ha * (ha + hb));
            let wb = 2.0 / (hb * (ha + hb));
            diag += wa + wb;
            if let Some(&k) = index.get(&(i + dir_a.0, j + dir_a.1)) {
                r.push((k, -wa));
            }
            if let Some(&k) = index.get(&(i + dir_b.0, j + dir_b.1)) {
                r.push((k, -wb));
            }
        }
        r.push((index[&(i, j)], diag));
        rows.push(r);
    }
    BandedOperator::new(rows)
}

/// Lowest `mode_count` Dirichlet eigenvalues from five-point finite
/// differences on grids `grid_n` and `2 grid_n`, Richardson-extrapolated.
pub fn fd_transverse_modes(cs: &CrossSection, grid_n: usize, mode_count: usize) -> Result<Vec<OracleReport>> {
    if grid_n < 64 {
        return Err(Error::Config("grid_n must be at least 64".into()));
    }
    let solve = |refine: usize| -> Result<Vec<f64>> {
        match *cs {
            CrossSection::Rectangle { width, height } => {
                let h = width.max(height) / grid_n as f64;
                let cx = ((width / h).round() as usize).max(2) * refine;
                let cy = ((height / h).round() as usize).max(2) * refine;
                lowest_eigenvalues(&rectangle_operator(width, height, cx, cy), mode_count)
            }
            CrossSection::Disk { radius } => {
                let h = 2.0 * radius / (grid_n * refine) as f64;
                lowest_eigenvalues(&disk_operator(radius, h), mode_count)
            }
        }
    };
    let coarse = solve(1)?;
    let fine = solve(2)?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| {
            let value = (4.0 * f - c) / 3.0;
            OracleReport { value: Complex64::new(value, 0.0), error_estimate: (f - c).abs() / 3.0, method: OracleMethod::FiniteDifference }
        })
        .collect())
}

/// Bound state `-(4πα)²` of a single point interaction in free space.
pub fn free_space_bound_state(alpha: f64) -> Result<f64> {
    if !(alpha < 0.0) {
        return Err(Error::NoBoundState(format!("free-space point interaction with alpha = {alpha} has no bound state")));
    }
    Ok(-(4.0 * PI * alpha).powi(2))
}
