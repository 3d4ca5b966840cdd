//! Floquet–Bloch band structure of a periodic array of point interactions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greenfn::Tube;
use crate::special::brent_fallible;
use crate::spectral::{validate_sites, CouplingMatrix, LambdaVariant, Site};

/// Sites of one period cell `[0, ℓ) × M` and the quasimomentum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochContext {
    pub ell: f64,
    pub sites: Vec<Site>,
    /// Uniform grid on `[0, π/ℓ]`; results are mirrored to negative `θ`.
    pub half_grid: Vec<f64>,
}

impl BlochContext {
    pub fn new(ell: f64, sites: Vec<Site>, half_points: usize) -> Result<Self> {
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::Config(format!("period must be positive, got {ell}")));
        }
        if half_points < 2 {
            return Err(Error::Config("theta grid needs at least two points".into()));
        }
        for (j, s) in sites.iter().enumerate() {
            if !(0.0..ell).contains(&s.x) {
                return Err(Error::Config(format!("site {} has x = {} outside [0, {ell})", j + 1, s.x)));
            }
        }
        let step = PI / ell / (half_points - 1) as f64;
        let half_grid = (0..half_points).map(|i| if i + 1 == half_points { PI / ell } else { i as f64 * step }).collect();
        Ok(BlochContext { ell, sites, half_grid })
    }

    /// Default grid of 65 points on the half zone.
    pub fn with_default_grid(ell: f64, sites: Vec<Site>) -> Result<Self> {
        BlochContext::new(ell, sites, 65)
    }

    /// Symmetric grid on `[-π/ℓ, π/ℓ]`.
    pub fn theta_grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.half_grid.iter().rev().map(|t| -t).collect();
        g.extend(self.half_grid.iter().skip(1));
        g
    }
}

pub fn build_lambda_bloch(tube: &Tube, ctx: &BlochContext, theta: f64, z: f64) -> Result<CouplingMatrix> {
    validate_sites(tube.cross_section(), &ctx.sites)?;
    let n = ctx.sites.len();
    let zc = Complex64::new(z, 0.0);
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for j in 0..n {
        let s = &ctx.sites[j];
        m[(j, j)] = Complex64::new(s.alpha - tube.xi_bloch(s.b, theta, ctx.ell, z)?, 0.0);
        for k in 0..j {
            let g = tube.g0_bloch(s.position(), ctx.sites[k].position(), theta, ctx.ell, zc)?;
            m[(j, k)] = -g;
            m[(k, j)] = -g.conj();
        }
    }
    Ok(CouplingMatrix { entries: m, z: zc, variant: LambdaVariant::Bloch { theta, ell: ctx.ell } })
}

fn sorted_hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)].re];
    }
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Where a fibre level comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelOrigin {
    /// Root of `det Λ(θ; z) = 0`.
    Perturbed,
    /// Free Floquet level whose eigenfunction vanishes at every site.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberLevel {
    pub energy: f64,
    pub origin: LevelOrigin,
}

/// A point of the free Floquet spectrum `(2πm/ℓ + θ)² + ν_n` below a ceiling.
#[derive(Debug, Clone, PartialEq)]
struct FreeLevel {
    energy: f64,
    /// Couplings `e^{i q x_j} χ_n(b_j)` of every degenerate partner.
    couplings: Vec<Vec<Complex64>>,
}

fn free_levels(tube: &Tube, ctx: &BlochContext, theta: f64, ceiling: f64) -> Result<Vec<FreeLevel>> {
    let profiles = ctx.sites.iter().map(|s| tube.profile(s.b)).collect::<Result<Vec<_>>>()?;
    let sup = tube.basis().sup_norm_sq().sqrt();
    let mut raw: Vec<(f64, Vec<Complex64>)> = Vec::new();
    for (n, nu) in tube.basis().nus().enumerate() {
        if nu >= ceiling {
            break;
        }
        let qmax = (ceiling - nu).sqrt();
        let m_lo = ((-qmax - theta) * ctx.ell / (2.0 * PI)).floor() as i64;
        let m_hi = ((qmax - theta) * ctx.ell / (2.0 * PI)).ceil() as i64;
        for m in m_lo..=m_hi {
            let q = 2.0 * PI * m as f64 / ctx.ell + theta;
            let e = q * q + nu;
            if e >= ceiling {
                continue;
            }
            let v = ctx
                .sites
                .iter()
                .zip(&profiles)
                .map(|(s, p)| {
                    let chi = if p[n].abs() <= 1e-12 * sup { 0.0 } else { p[n] };
                    Complex64::from_polar(chi, q * s.x)
                })
                .collect();
            raw.push((e, v));
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<FreeLevel> = Vec::new();
    for (e, v) in raw {
        if let Some(last) = out.last_mut() {
            if (e - last.energy).abs() <= 1e-10 * e.abs().max(1.0) {
                last.couplings.push(v);
                continue;
            }
        }
        out.push(FreeLevel { energy: e, couplings: vec![v] });
    }
    Ok(out)
}

fn coupling_rank(couplings: &[Vec<Complex64>]) -> usize {
    let rows = couplings.len();
    let cols = couplings[0].len();
    let m = DMatrix::from_fn(rows, cols, |i, j| couplings[i][j]);
    let sv = m.svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-8 * top).count()
}

/// Eigenvalues of the fibre operator at `θ` inside `window`.
///
/// Between consecutive singular energies (free levels coupled to the sites)
/// every eigenvalue of the Hermitian `Λ(θ; z)` decreases strictly, so the
/// roots in a gap are counted by the change in the number of negative
/// eigenvalues and located one sorted eigenvalue at a time. Free levels
/// that decouple from the sites are reported with their multiplicity.
pub fn solve_fiber(tube: &Tube, ctx: &BlochContext, theta: f64, window: (f64, f64)) -> Result<Vec<FiberLevel>> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::Config(format!("empty energy window ({lo}, {hi})")));
    }
    let levels = free_levels(tube, ctx, theta, hi)?;
    let mut out = Vec::new();
    let mut poles = Vec::new();
    for lvl in &levels {
        let rank = coupling_rank(&lvl.couplings);
        if lvl.energy > lo {
            for _ in rank..lvl.couplings.len() {
                out.push(FiberLevel { energy: lvl.energy, origin: LevelOrigin::Free });
            }
        }
        if rank > 0 {
            poles.push(lvl.energy);
        }
    }
    let mut edges = vec![(lo, false)];
    edges.extend(poles.iter().filter(|&&p| p > lo).map(|&p| (p, true)));
    edges.push((hi, false));
    let eigen_at = |z: f64| -> Result<Vec<f64>> { Ok(sorted_hermitian_eigenvalues(&build_lambda_bloch(tube, ctx, theta, z)?.entries)) };
    let negatives = |v: &[f64]| v.iter().filter(|&&m| m < 0.0).count();
    for w in edges.windows(2) {
        let ((a, a_pole), (b, b_pole)) = (w[0], w[1]);
        let width = b - a;
        if width <= 0.0 {
            continue;
        }
        // a few dozen ulps: roots of nearly decoupled sites hug the poles
        let za = if a_pole { a + (1e-14 * a.abs().max(1.0)).min(0.25 * width) } else { a };
        let zb = if b_pole { b - (1e-14 * b.abs().max(1.0)).min(0.25 * width) } else { b };
        if !(za < zb) {
            continue;
        }
        // a window edge may coincide with an uncoupled free level
        let inside = |z: f64, toward: f64| -> Result<(f64, Vec<f64>)> {
            match eigen_at(z) {
                Err(Error::Pole { .. }) | Err(Error::Threshold { .. }) => {
                    let moved = z + (toward - z).signum() * (1e-13 * z.abs().max(1.0)).min(0.25 * width);
                    Ok((moved, eigen_at(moved)?))
                }
                other => Ok((z, other?)),
            }
        };
        let (za, at_a) = inside(za, zb)?;
        let (zb, at_b) = inside(zb, za)?;
        let na = negatives(&at_a);
        if !a_pole && a == lo && na > 0 && poles.first().map_or(true, |&p| p > lo) {
            return Err(Error::Range(format!("fibre levels below the window start {lo} at theta = {theta}")));
        }
        let nb = negatives(&at_b);
        for k in na..nb {
            let root = brent_fallible(|z| Ok(eigen_at(z)?[k]), za, zb, 0.0, 200)?;
            out.push(FiberLevel { energy: root, origin: LevelOrigin::Perturbed });
        }
    }
    out.sort_by(|x, y| x.energy.total_cmp(&y.energy));
    Ok(out)
}

/// One band: the `index`-th fibre level over the full `θ` grid. Entries are
/// `None` where the level lies above the computed energy range.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub index: usize,
    pub energies: Vec<Option<f64>>,
}

impl Band {
    /// `(min, max)` over the samples present.
    pub fn range(&self) -> Option<(f64, f64)> {
        let vals: Vec<f64> = self.energies.iter().flatten().copied().collect();
        if vals.is_empty() {
            return None;
        }
        Some((vals.iter().copied().fold(f64::INFINITY, f64::min), vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
    }

    pub fn is_complete(&self) -> bool {
        self.energies.iter().all(|e| e.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandChart {
    pub theta: Vec<f64>,
    pub bands: Vec<Band>,
    pub gaps: Vec<(f64, f64)>,
    pub window: (f64, f64),
}

impl BandChart {
    /// Gap `(lo, hi)` with `lo < e <= hi`, if any.
    pub fn gap_containing(&self, e: f64) -> Option<(f64, f64)> {
        self.gaps.iter().copied().find(|&(lo, hi)| lo < e && e <= hi)
    }
}

/// Default window `(z_floor, ν_0 + 0.9 (ν_1 - ν_0))`.
pub fn default_window(tube: &Tube, ctx: &BlochContext) -> (f64, f64) {
    let floor = crate::spectral::default_z_floor(tube, &ctx.sites);
    let nu0 = tube.nu0();
    (floor, nu0 + 0.9 * (tube.nu1() - nu0))
}

/// Band chart over the context's `θ` grid.
///
/// Levels are computed up to twice the window height so that every band
/// reaching into the window is resolved; bands are linked by sorted index
/// (fibre levels are continuous in `θ` and never cross in sorted order).
/// Gaps are the parts of the window missed by every band.
pub fn solve_bands(tube: &Tube, ctx: &BlochContext, window: (f64, f64), band_count: Option<usize>) -> Result<BandChart> {
    if ctx.half_grid.len() < 17 {
        return Err(Error::Config("band computation needs at least 33 theta points".into()));
    }
    let (lo, hi) = window;
    let ceiling = hi + (hi - lo).min(tube.nu1() - tube.nu0()).max(1.0);
    let half: Vec<Vec<f64>> = ctx
        .half_grid
        .par_iter()
        .map(|&th| solve_fiber(tube, ctx, th, (lo, ceiling)).map(|v| v.into_iter().map(|l| l.energy).collect()))
        .collect::<Result<Vec<_>>>()?;
    let theta = ctx.theta_grid();
    let h = ctx.half_grid.len();
    let full: Vec<&Vec<f64>> = (0..theta.len()).map(|i| if i < h { &half[h - 1 - i] } else { &half[i - h + 1] }).collect();
    let max_count = full.iter().map(|v| v.len()).max().unwrap_or(0);
    let n_bands = band_count.map_or(max_count, |c| c.min(max_count));
    let bands: Vec<Band> = (0..n_bands)
        .map(|r| Band { index: r, energies: full.iter().map(|v| v.get(r).copied()).collect() })
        .collect();
    let mut covered: Vec<(f64, f64)> = Vec::new();
    for b in &bands {
        if let Some((mn, mx)) = b.range() {
            covered.push((mn, if b.is_complete() { mx } else { f64::INFINITY }));
        }
    }
    if band_count.is_some_and(|c| c < max_count) || n_bands == 0 {
        covered.push((bands.last().and_then(|b| b.range()).map_or(lo, |r| r.1), f64::INFINITY));
    }
    covered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gaps = Vec::new();
    let mut cursor = covered.first().map_or(hi, |c| c.0).max(lo);
    for (mn, mx) in covered {
        if mn > cursor && cursor < hi {
            gaps.push((cursor, mn.min(hi)));
        }
        cursor = cursor.max(mx);
    }
    if cursor < hi {
        gaps.push((cursor, hi));
    }
    Ok(BandChart { theta, bands, gaps, window })
}

/// `ξ_-(b; ν_0)`: a gap above the lowest band opens iff `α` is below it.
pub fn gap_criterion_threshold(tube: &Tube, site: &Site, ell: f64) -> Result<f64> {
    validate_sites(tube.cross_section(), std::slice::from_ref(site))?;
    Ok(tube.xi_extremal(site.b, ell, tube.nu0())?.0)
}

/// Lower and upper envelopes `(ξ_-, ξ_+)` of `ξ(b, θ; z)` over `θ`, `z < ν_0`.
pub fn xi_bounds(tube: &Tube, site: &Site, z: f64, ell: f64) -> Result<(f64, f64)> {
    if z >= tube.nu0() {
        return Err(Error::Range(format!("xi bounds need z < nu_0, got {z}")));
    }
    tube.xi_extremal(site.b, ell, z)
}

/// Envelopes `(η_-, η_+)` of the part of `ξ(b, θ; z)` carried by the
/// closed channels, `ν_0 < z < ν_1`.
pub fn eta_bounds(tube: &Tube, site: &Site, z: f64, ell: f64) -> Result<(f64, f64)> {
    if !(z > tube.nu0() && z < tube.nu1()) {
        return Err(Error::Range(format!("eta bounds need nu_0 < z < nu_1, got {z}")));
    }
    tube.eta_extremal(site.b, ell, z)
}

/// Number of gaps of a chart lying inside `window`.
pub fn count_gaps_window(chart: &BandChart, window: (f64, f64)) -> usize {
    chart.gaps.iter().filter(|&&(lo, hi)| lo >= window.0 && hi <= window.1 && hi > lo).count()
}
