//! Krein coupling matrix, discrete and embedded eigenvalues, eigenfunctions
//! and boundary-value extraction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greenfn::{Point3, Tube};
use crate::special::{brent_fallible, gauss_legendre};
use crate::xsection::{CrossSection, Mirror, Point2};

/// A point interaction of strength `alpha` at `(x, b)`.
///
/// An absent interaction (`α = ∞`) is modelled by a large finite `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub alpha: f64,
    pub x: f64,
    pub b: Point2,
}

impl Site {
    pub fn new(alpha: f64, x: f64, b: Point2) -> Self {
        Site { alpha, x, b }
    }

    pub fn position(&self) -> Point3 {
        Point3 { x: self.x, y: self.b }
    }
}

/// Checks finiteness, interior position and distinctness of the sites.
pub fn validate_sites(cs: &CrossSection, sites: &[Site]) -> Result<()> {
    if sites.is_empty() {
        return Err(Error::Config("at least one site is required".into()));
    }
    for (j, s) in sites.iter().enumerate() {
        if !s.alpha.is_finite() || !s.x.is_finite() {
            return Err(Error::Config(format!("site {}: alpha and x must be finite", j + 1)));
        }
        if !cs.contains_strictly(s.b) {
            return Err(Error::Domain(format!("site {} at ({}, {}) is not inside the cross-section", j + 1, s.b[0], s.b[1])));
        }
        for (k, t) in sites.iter().enumerate().take(j) {
            if s.position() == t.position() {
                return Err(Error::Config(format!("sites {} and {} coincide", k + 1, j + 1)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaVariant {
    Straight,
    Bloch { theta: f64, ell: f64 },
}

/// `Λ(z)` with `Λ_jj = α_j - ξ(a_j; z)` and `Λ_jk = -G_0(a_j, a_k; z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub entries: DMatrix<Complex64>,
    pub z: Complex64,
    pub variant: LambdaVariant,
}

impl CouplingMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.entries.map(|c| c.re)
    }

    pub fn max_imag(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, c| m.max(c.im.abs()))
    }
}

pub fn build_lambda(tube: &Tube, sites: &[Site], z: Complex64) -> Result<CouplingMatrix> {
    validate_sites(tube.cross_section(), sites)?;
    let n = sites.len();
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for j in 0..n {
        m[(j, j)] = Complex64::new(sites[j].alpha, 0.0) - tube.xi(sites[j].b, z)?;
        for k in 0..j {
            let g = tube.g0(sites[j].position(), sites[k].position(), z)?;
            m[(j, k)] = -g;
            m[(k, j)] = -g;
        }
    }
    Ok(CouplingMatrix { entries: m, z, variant: LambdaVariant::Straight })
}

/// Real `Λ(z)` below the bottom of the continuum.
pub fn lambda_real(tube: &Tube, sites: &[Site], z: f64) -> Result<DMatrix<f64>> {
    if z >= tube.nu0() {
        return Err(Error::Range(format!("real coupling matrix needs z < nu_0, got {z}")));
    }
    Ok(build_lambda(tube, sites, Complex64::new(z, 0.0))?.real_part())
}

/// Ascending eigenvalues and matching eigenvector columns.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

/// An eigenvalue of the point-interaction Hamiltonian with its Krein
/// coefficient vector `d`, `ψ = Σ d_j G_0(·, a_j; ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundState {
    pub energy: f64,
    pub coefficients: Vec<f64>,
    /// `d` has unit Euclidean norm and a non-negative component sum.
    pub normalized: bool,
    pub multiplicity: usize,
    /// `‖Λ(ε) d‖`.
    pub residual: f64,
}

/// Default lower end of the bound-state search.
pub fn default_z_floor(tube: &Tube, sites: &[Site]) -> f64 {
    let nu0 = tube.nu0();
    let deepest = sites.iter().filter(|s| s.alpha < 0.0).map(|s| (4.0 * PI * s.alpha).powi(2)).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    match deepest {
        // the free-space level -(4πα)² lies below ν_0 - (4πα)² when ν_0 > 0
        Some(d) => nu0.min(0.0) - d - 10.0,
        None => nu0 - (tube.nu1() - nu0).max(1.0),
    }
}

/// Smallest binding `ν_0 - ε` resolved by the searches, relative to `ν_1 - ν_0`.
const TOP_BINDING: f64 = 1e-12;

fn top_kappa(tube: &Tube) -> f64 {
    (TOP_BINDING * (tube.nu1() - tube.nu0()).max(1.0)).sqrt()
}

/// Right singular vector of the smallest singular value; more accurate than
/// the symmetric eigensolver's vectors next to a root.
fn null_vector(m: &DMatrix<f64>) -> DVector<f64> {
    let svd = m.clone().svd(false, true);
    let (i, _) = svd.singular_values.argmin();
    svd.v_t.expect("requested").row(i).transpose()
}

fn normalize(v: &DVector<f64>) -> Vec<f64> {
    let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
    let norm = v.norm();
    v.iter().map(|x| sign * x / norm).collect()
}

/// All roots of `det Λ(z) = 0` in `(z_floor, ν_0)`.
///
/// Every eigenvalue `μ_k(z)` of `Λ(z)` decreases strictly in `z`, so the
/// number of roots equals the number of negative eigenvalues just below
/// `ν_0` and the `k`-th root is the zero of the `k`-th smallest eigenvalue.
/// The search runs in `κ_0 = √(ν_0 - z)`, which keeps weakly bound states
/// well conditioned. Bindings below `1e-12 (ν_1 - ν_0)` are not resolved.
pub fn find_bound_states(tube: &Tube, sites: &[Site], z_floor: Option<f64>) -> Result<Vec<BoundState>> {
    validate_sites(tube.cross_section(), sites)?;
    let nu0 = tube.nu0();
    let floor = z_floor.unwrap_or_else(|| default_z_floor(tube, sites));
    if !(floor < nu0) {
        return Err(Error::Range(format!("z_floor {floor} must lie below nu_0 = {nu0}")));
    }
    let at = |kappa: f64| lambda_real(tube, sites, nu0 - kappa * kappa);
    let k_floor = (nu0 - floor).sqrt();
    let k_top = top_kappa(tube).min(0.5 * k_floor);
    let (mu_floor, _) = sorted_eigen(&at(k_floor)?);
    if mu_floor[0] < 0.0 {
        return Err(Error::Range(format!("a bound state lies below z_floor = {floor}")));
    }
    let (mu_top, _) = sorted_eigen(&at(k_top)?);
    let count = mu_top.iter().filter(|&&m| m < 0.0).count();
    let roots: Vec<Result<f64>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let kappa = brent_fallible(|kp| Ok(sorted_eigen(&at(kp)?).0[k]), k_top, k_floor, 0.0, 200)?;
            Ok(nu0 - kappa * kappa)
        })
        .collect();
    let mut energies = roots.into_iter().collect::<Result<Vec<f64>>>()?;
    energies.sort_by(|a, b| a.total_cmp(b));
    let merge_tol = 1e-10 * (nu0 - floor);
    let mut states: Vec<BoundState> = Vec::new();
    for e in &energies {
        if let Some(last) = states.last_mut() {
            if (e - last.energy).abs() < merge_tol {
                last.multiplicity += 1;
                continue;
            }
        }
        let lam = lambda_real(tube, sites, *e)?;
        let d = normalize(&null_vector(&lam));
        let residual = (&lam * DVector::from_vec(d.clone())).norm();
        let scale = lam.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if residual > 1e-8 * scale {
            return Err(Error::Convergence(format!("bound state at {e}: residual {residual:.3e}")));
        }
        states.push(BoundState { energy: *e, coefficients: d, normalized: true, multiplicity: 1, residual });
    }
    Ok(states)
}

/// [`find_bound_states`] that lowers the floor until no state lies below it.
pub fn find_bound_states_auto(tube: &Tube, sites: &[Site]) -> Result<Vec<BoundState>> {
    let nu0 = tube.nu0();
    let mut floor = default_z_floor(tube, sites);
    for _ in 0..60 {
        match find_bound_states(tube, sites, Some(floor)) {
            Err(Error::Range(_)) => floor = nu0 - 4.0 * (nu0 - floor),
            other => return other,
        }
    }
    Err(Error::Range("no admissible z_floor found".into()))
}

/// The unique solution of `ξ(b; ε) = α` below `ν_0`.
pub fn one_center_eigenvalue(tube: &Tube, site: &Site, z_floor: Option<f64>) -> Result<BoundState> {
    validate_sites(tube.cross_section(), std::slice::from_ref(site))?;
    let nu0 = tube.nu0();
    let floor = z_floor.unwrap_or_else(|| default_z_floor(tube, std::slice::from_ref(site)));
    if !(floor < nu0) {
        return Err(Error::Range(format!("z_floor {floor} must lie below nu_0 = {nu0}")));
    }
    let f = |kappa: f64| Ok(site.alpha - tube.xi(site.b, Complex64::new(nu0 - kappa * kappa, 0.0))?.re);
    let k_floor = (nu0 - floor).sqrt();
    let k_top = top_kappa(tube).min(0.5 * k_floor);
    if f(k_floor)? < 0.0 {
        return Err(Error::Range(format!("the bound state lies below z_floor = {floor}")));
    }
    if f(k_top)? > 0.0 {
        return Err(Error::NoBoundState(format!("binding below the resolution limit for alpha = {}", site.alpha)));
    }
    let kappa = brent_fallible(f, k_top, k_floor, 0.0, 200)?;
    let energy = nu0 - kappa * kappa;
    let residual = f(kappa)?.abs();
    Ok(BoundState { energy, coefficients: vec![1.0], normalized: true, multiplicity: 1, residual })
}

/// Leading weak-coupling eigenvalue `ν_0 - (Σ_j χ_0(b_j)² / (2α_j))²`.
///
/// This is the rank-one limit of `Λ` when every `α_j` is large; for a single
/// site it reduces to `ν_0 - (χ_0(b)² / 2α)²`.
pub fn weak_coupling_estimate(tube: &Tube, sites: &[Site]) -> Result<f64> {
    validate_sites(tube.cross_section(), sites)?;
    if sites.iter().any(|s| s.alpha <= 0.0) {
        return Err(Error::Config("weak-coupling estimate needs all alpha > 0".into()));
    }
    let mut s = 0.0;
    for site in sites {
        let chi0 = tube.profile(site.b)?[0];
        s += chi0 * chi0 / (2.0 * site.alpha);
    }
    if s == 0.0 {
        return Err(Error::Degenerate("lowest transverse mode vanishes at every site".into()));
    }
    Ok(tube.nu0() - s * s)
}

/// `ψ(x) = Σ_j d_j G_0(x, a_j; ε)`; real part for embedded states.
pub fn eval_eigenfunction(tube: &Tube, state: &BoundState, sites: &[Site], x: Point3) -> Result<f64> {
    if state.coefficients.len() != sites.len() {
        return Err(Error::Config("coefficient vector does not match the sites".into()));
    }
    let z = Complex64::new(state.energy, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for (d, s) in state.coefficients.iter().zip(sites) {
        if *d != 0.0 {
            sum += tube.g0(x, s.position(), z)? * *d;
        }
    }
    Ok(sum.re)
}

/// Transverse projection `∫_M ψ(x, y) χ_n(y) dy` at a longitudinal station.
pub fn transverse_projection<F: Fn(Point3) -> Result<f64>>(tube: &Tube, field: F, x: f64, mode: usize, order: usize) -> Result<f64> {
    let (nodes, weights) = gauss_legendre(order);
    let basis = tube.basis();
    let mut sum = 0.0;
    match *tube.cross_section() {
        CrossSection::Rectangle { width, height } => {
            for (u, wu) in nodes.iter().zip(&weights) {
                let y1 = 0.5 * width * (u + 1.0);
                for (v, wv) in nodes.iter().zip(&weights) {
                    let y = [y1, 0.5 * height * (v + 1.0)];
                    sum += wu * wv * field(Point3 { x, y })? * basis.eval_mode(mode, y)?;
                }
            }
            Ok(sum * 0.25 * width * height)
        }
        CrossSection::Disk { radius } => {
            let n_phi = 2 * order;
            for (u, wu) in nodes.iter().zip(&weights) {
                let r = 0.5 * radius * (u + 1.0);
                for k in 0..n_phi {
                    let phi = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
                    let y = [r * phi.cos(), r * phi.sin()];
                    sum += wu * r * field(Point3 { x, y })? * basis.eval_mode(mode, y)?;
                }
            }
            Ok(sum * 0.5 * radius * 2.0 * PI / n_phi as f64)
        }
    }
}

/// Generalised boundary values `ψ ≈ L0/|x - a| + L1` at a site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryData {
    pub l0: f64,
    pub l1: f64,
}

impl BoundaryData {
    /// `L1 + s·4παL0` relative to the size of its terms.
    pub fn condition_defect(&self, alpha: f64, sign: f64) -> f64 {
        let a = self.l1;
        let b = sign * 4.0 * PI * alpha * self.l0;
        (a + b).abs() / a.abs().max(b.abs()).max(self.l0.abs()).max(f64::MIN_POSITIVE)
    }
}

/// Radii `{1e-2, 5e-3, 2.5e-3, 1.25e-3}·dist(b, ∂M)`.
pub fn default_boundary_radii(cs: &CrossSection, b: Point2) -> Vec<f64> {
    let d = cs.boundary_distance(b);
    vec![1e-2 * d, 5e-3 * d, 2.5e-3 * d, 1.25e-3 * d]
}

/// Fits `L0/r + L1 + c r (+ c' r²)` to the six-point axis averages of the
/// field on spheres of the given radii; the quadratic term is used when at
/// least four radii are supplied.
pub fn extract_boundary_data<F: Fn(Point3) -> Result<f64>>(field: F, site: Point3, radii: &[f64]) -> Result<BoundaryData> {
    if radii.len() < 3 || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Extraction("need at least three positive radii".into()));
    }
    let cols = if radii.len() >= 4 { 4 } else { 3 };
    let mut a = DMatrix::zeros(radii.len(), cols);
    let mut rhs = DVector::zeros(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        let mut avg = 0.0;
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut p = site;
                match axis {
                    0 => p.x += sign * r,
                    1 => p.y[0] += sign * r,
                    _ => p.y[1] += sign * r,
                }
                avg += field(p)?;
            }
        }
        rhs[i] = avg / 6.0;
        a[(i, 0)] = 1.0 / r;
        a[(i, 1)] = 1.0;
        a[(i, 2)] = r;
        if cols == 4 {
            a[(i, 3)] = r * r;
        }
    }
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&rhs, 1e-300).map_err(|e| Error::Extraction(e.to_string()))?;
    let residual = (&a * &coef - &rhs).norm();
    let (l0, l1) = (coef[0], coef[1]);
    if residual > 1e-3 * l1.abs().max(f64::MIN_POSITIVE) && residual > 1e-12 * rhs.norm() {
        return Err(Error::Extraction(format!("fit residual {residual:.3e} too large")));
    }
    Ok(BoundaryData { l0, l1 })
}

/// Mirror of the cross-section exchanging the two transverse points, if any.
fn exchanging_mirror(cs: &CrossSection, b1: Point2, b2: Point2) -> Option<Mirror> {
    let tol = 1e-12 * cs.diameter();
    [Mirror::FlipY1, Mirror::FlipY2].into_iter().find(|&m| {
        let r = cs.reflect(m, b1);
        (r[0] - b2[0]).abs() <= tol && (r[1] - b2[1]).abs() <= tol
    })
}

/// Antisymmetric eigenvalue of a mirror-symmetric pair above `ν_0`.
///
/// Solves `α = ξ(b_1; z) - G_0(a_1, a_2; z)` on `(ν_0, ν_A)`, where `ν_A`
/// is the lowest threshold of a mode odd under the mirror and not vanishing
/// at the sites. Open symmetric channels cancel, so the function is real
/// there and increases from a finite value to `+∞`. Returns `None` if `α`
/// lies below the value at `ν_0` (or the root is closer to `ν_A` than the
/// search resolution).
pub fn find_embedded_eigenvalue(tube: &Tube, pair: [Site; 2], alpha: f64) -> Result<Option<BoundState>> {
    let cs = *tube.cross_section();
    let sites = [Site { alpha, ..pair[0] }, Site { alpha, ..pair[1] }];
    validate_sites(&cs, &sites)?;
    if pair[0].x != pair[1].x {
        return Err(Error::SymmetryViolation("sites must share the longitudinal coordinate".into()));
    }
    if exchanging_mirror(&cs, pair[0].b, pair[1].b).is_none() {
        return Err(Error::SymmetryViolation(format!(
            "no mirror of the cross-section maps ({}, {}) to ({}, {})",
            pair[0].b[0], pair[0].b[1], pair[1].b[0], pair[1].b[1]
        )));
    }
    let p1 = tube.profile(pair[0].b)?;
    let p2 = tube.profile(pair[1].b)?;
    let scale = tube.basis().sup_norm_sq().sqrt();
    let nu0 = tube.nu0();
    let mut nu_a = None;
    for n in 0..p1.len() {
        let odd = (p1[n] + p2[n]).abs() <= 1e-9 * scale;
        if odd && p1[n].abs() > 1e-9 * scale {
            nu_a = Some(tube.basis().nu(n));
            break;
        }
    }
    let nu_a = nu_a.ok_or_else(|| Error::Degenerate("no odd transverse mode couples to the pair".into()))?;
    if nu_a <= nu0 {
        return Err(Error::Degenerate("the lowest mode is odd under the mirror".into()));
    }
    let secular = |z: f64| -> Result<Complex64> {
        let zc = Complex64::new(z, 0.0);
        Ok(tube.xi(pair[0].b, zc)? - tube.g0(sites[0].position(), sites[1].position(), zc)?)
    };
    let width = nu_a - nu0;
    let s_hi = (width * (1.0 - 1e-9)).sqrt();
    let s_lo = (width * 1e-12).sqrt();
    let f = |s: f64| Ok(secular(nu_a - s * s)?.re - alpha);
    if f(s_hi)? > 0.0 || f(s_lo)? < 0.0 {
        return Ok(None);
    }
    let s = brent_fallible(f, s_lo, s_hi, 0.0, 200)?;
    let energy = nu_a - s * s;
    let value = secular(energy)?;
    if value.im.abs() > 1e-8 * value.norm().max(1.0) {
        return Err(Error::SymmetryViolation(format!("secular function has imaginary part {:.3e}", value.im)));
    }
    let d = vec![std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2];
    let lam = build_lambda(tube, &sites, Complex64::new(energy, 0.0))?;
    let dv = DVector::from_vec(d.iter().map(|&v| Complex64::new(v, 0.0)).collect());
    let residual = (&lam.entries * dv).norm();
    Ok(Some(BoundState { energy, coefficients: d, normalized: true, multiplicity: 1, residual }))
}

/// Value of the embedded secular function `ξ(b_1; z) - G_0(a_1, a_2; z)`.
pub fn embedded_secular(tube: &Tube, pair: [Site; 2], z: f64) -> Result<Complex64> {
    let zc = Complex64::new(z, 0.0);
    Ok(tube.xi(pair[0].b, zc)? - tube.g0(pair[0].position(), pair[1].position(), zc)?)
}
