//! On-shell scattering matrix of a finite family of point interactions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greenfn::{open_channels as count_open, Tube};
use crate::spectral::{build_lambda, Site};

pub use crate::greenfn::open_channels;

/// Channel amplitudes at a real energy.
///
/// `t[(n, m)]`, `r[(n, m)]`: wave incident from the left in channel `n`,
/// transmitted/reflected into channel `m`. The tilded blocks describe
/// incidence from the right. `s` is the flux-normalised matrix with rows
/// `(left n, right n)` and columns `(right m, left m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringAmplitudes {
    pub z: f64,
    pub n_open: usize,
    pub k: Vec<f64>,
    pub t: DMatrix<Complex64>,
    pub r: DMatrix<Complex64>,
    pub t_tilde: DMatrix<Complex64>,
    pub r_tilde: DMatrix<Complex64>,
    pub s: DMatrix<Complex64>,
}

impl ScatteringAmplitudes {
    /// `S` with outgoing columns ordered like the incoming rows
    /// (left lead first); symmetric under time reversal.
    pub fn lead_matrix(&self) -> DMatrix<Complex64> {
        let n = self.n_open;
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..2 * n {
            for j in 0..n {
                out[(i, j)] = self.s[(i, n + j)];
                out[(i, n + j)] = self.s[(i, j)];
            }
        }
        out
    }

    /// Max over the blocks of `|S S† - I|`, i.e. the flux-balance relations
    /// normalised by `√(k_n k_s)`.
    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(self)
    }
}

fn flux_weight(k: &[f64], n: usize, m: usize) -> f64 {
    (k[m] / k[n]).sqrt()
}

fn assemble(z: f64, k: Vec<f64>, t: DMatrix<Complex64>, r: DMatrix<Complex64>, t_tilde: DMatrix<Complex64>, r_tilde: DMatrix<Complex64>) -> ScatteringAmplitudes {
    let n = k.len();
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        for b in 0..n {
            let w = flux_weight(&k, a, b);
            s[(a, b)] = t[(a, b)] * w;
            s[(a, n + b)] = r[(a, b)] * w;
            s[(n + a, b)] = r_tilde[(a, b)] * w;
            s[(n + a, n + b)] = t_tilde[(a, b)] * w;
        }
    }
    ScatteringAmplitudes { z, n_open: n, k, t, r, t_tilde, r_tilde, s }
}

/// Transmission and reflection blocks for sites at longitudinal positions
/// `xs`, from `λ = Λ^{-1}` at `z + i0`.
fn blocks(lambda: &DMatrix<Complex64>, chi: &[Vec<f64>], xs: &[f64], k: &[f64]) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n_open = k.len();
    let n_sites = xs.len();
    let i_half = Complex64::new(0.0, 0.5);
    let mut t = DMatrix::identity(n_open, n_open);
    let mut r = DMatrix::zeros(n_open, n_open);
    for n in 0..n_open {
        for m in 0..n_open {
            let mut st = Complex64::new(0.0, 0.0);
            let mut sr = Complex64::new(0.0, 0.0);
            for j in 0..n_sites {
                for l in 0..n_sites {
                    let w = lambda[(j, l)] * (chi[j][m] * chi[l][n]);
                    st += w * Complex64::from_polar(1.0, -(k[m] * xs[j] - k[n] * xs[l]));
                    sr += w * Complex64::from_polar(1.0, k[m] * xs[j] + k[n] * xs[l]);
                }
            }
            t[(n, m)] += i_half * st / k[m];
            r[(n, m)] = i_half * sr / k[m];
        }
    }
    (t, r)
}

fn invert(lam: &DMatrix<Complex64>, z: f64) -> Result<DMatrix<Complex64>> {
    let svd = lam.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::Pole { z, what: "coupling matrix is singular (embedded eigenvalue)".into() });
    }
    lam.clone().try_inverse().ok_or_else(|| Error::Pole { z, what: "coupling matrix is singular".into() })
}

pub fn s_matrix(tube: &Tube, sites: &[Site], z: f64) -> Result<ScatteringAmplitudes> {
    let n_open = count_open(z, tube.basis())?;
    if n_open == 0 {
        return Err(Error::Range(format!("no open channel at z = {z}")));
    }
    let lam = build_lambda(tube, sites, Complex64::new(z, 0.0))?;
    let lambda = invert(&lam.entries, z)?;
    let k: Vec<f64> = tube.basis().nus().take(n_open).map(|nu| (z - nu).sqrt()).collect();
    let chi = sites.iter().map(|s| tube.profile(s.b).map(|p| p[..n_open].to_vec())).collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = sites.iter().map(|s| s.x).collect();
    let mirrored: Vec<f64> = xs.iter().map(|x| -x).collect();
    let (t, r) = blocks(&lambda, &chi, &xs, &k);
    let (t_tilde, r_tilde) = blocks(&lambda, &chi, &mirrored, &k);
    Ok(assemble(z, k, t, r, t_tilde, r_tilde))
}

/// Parallel sweep over energies, results in input order.
pub fn s_matrix_sweep(tube: &Tube, sites: &[Site], energies: &[f64]) -> Vec<Result<ScatteringAmplitudes>> {
    energies.par_iter().map(|&z| s_matrix(tube, sites, z)).collect()
}

pub fn unitarity_defect(amps: &ScatteringAmplitudes) -> f64 {
    let s = &amps.s;
    let prod = s * s.adjoint();
    let mut worst = 0.0f64;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - target).norm());
        }
    }
    worst
}

/// `max |S - Sᵀ|` of the lead-ordered matrix.
pub fn transpose_defect(amps: &ScatteringAmplitudes) -> f64 {
    let l = amps.lead_matrix();
    (&l - l.transpose()).iter().fold(0.0, |m, c| m.max(c.norm()))
}
