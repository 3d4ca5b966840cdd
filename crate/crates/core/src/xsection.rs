//! Transverse Dirichlet eigenbasis of the tube cross-section.
//!
//! Rectangles live on `[0, w] × [0, h]`; disks are centred at the origin.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::{bessel_j, bessel_zeros};

/// A point of the cross-section, `(y1, y2)`.
pub type Point2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrossSection {
    Rectangle { width: f64, height: f64 },
    Disk { radius: f64 },
}

/// A reflection of the cross-section onto itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mirror {
    /// `y1 -> w - y1` for rectangles, `y1 -> -y1` for disks.
    FlipY1,
    /// `y2 -> h - y2` for rectangles, `y2 -> -y2` for disks.
    FlipY2,
}

impl CrossSection {
    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::Config(format!(
                "rectangle dimensions must be positive, got {width} x {height}"
            )));
        }
        Ok(CrossSection::Rectangle { width, height })
    }

    pub fn disk(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("disk radius must be positive, got {radius}")));
        }
        Ok(CrossSection::Disk { radius })
    }

    pub fn area(&self) -> f64 {
        match *self {
            CrossSection::Rectangle { width, height } => width * height,
            CrossSection::Disk { radius } => PI * radius * radius,
        }
    }

    pub fn perimeter(&self) -> f64 {
        match *self {
            CrossSection::Rectangle { width, height } => 2.0 * (width + height),
            CrossSection::Disk { radius } => 2.0 * PI * radius,
        }
    }

    /// The same shape scaled by `sigma`.
    pub fn scaled(&self, sigma: f64) -> Self {
        match *self {
            CrossSection::Rectangle { width, height } => CrossSection::Rectangle {
                width: width * sigma,
                height: height * sigma,
            },
            CrossSection::Disk { radius } => CrossSection::Disk { radius: radius * sigma },
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn boundary_distance(&self, y: Point2) -> f64 {
        match *self {
            CrossSection::Rectangle { width, height } => {
                y[0].min(width - y[0]).min(y[1]).min(height - y[1])
            }
            CrossSection::Disk { radius } => radius - (y[0] * y[0] + y[1] * y[1]).sqrt(),
        }
    }

    /// Closed-set membership with a relative tolerance of 1e-12.
    pub fn contains(&self, y: Point2) -> bool {
        self.boundary_distance(y) >= -1e-12 * self.diameter()
    }

    pub fn contains_strictly(&self, y: Point2) -> bool {
        self.boundary_distance(y) > 0.0
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            CrossSection::Rectangle { width, height } => width.hypot(height),
            CrossSection::Disk { radius } => 2.0 * radius,
        }
    }

    pub fn reflect(&self, mirror: Mirror, y: Point2) -> Point2 {
        match (*self, mirror) {
            (CrossSection::Rectangle { width, .. }, Mirror::FlipY1) => [width - y[0], y[1]],
            (CrossSection::Rectangle { height, .. }, Mirror::FlipY2) => [y[0], height - y[1]],
            (CrossSection::Disk { .. }, Mirror::FlipY1) => [-y[0], y[1]],
            (CrossSection::Disk { .. }, Mirror::FlipY2) => [y[0], -y[1]],
        }
    }

    /// Boundary correction `K_M(t; y1, y2) - exp(-|y1-y2|²/4t)/(4πt)` of the
    /// transverse Dirichlet heat kernel at small time.
    ///
    /// Exact (image sum) for rectangles. For disks the correction is
    /// returned as zero; callers keep `t` below `d²/36` with `d` the
    /// boundary distance, which bounds the neglected part by `e^{-36}`.
    pub fn heat_kernel_correction(&self, y1: Point2, y2: Point2, t: f64) -> f64 {
        match *self {
            CrossSection::Rectangle { width, height } => {
                let (g1, s1) = dirichlet_images(y1[0], y2[0], width, t);
                let (g2, s2) = dirichlet_images(y1[1], y2[1], height, t);
                (g1 * s2 + s1 * g2 + s1 * s2) / (4.0 * PI * t)
            }
            CrossSection::Disk { .. } => 0.0,
        }
    }

    pub fn heat_kernel_is_exact(&self) -> bool {
        matches!(self, CrossSection::Rectangle { .. })
    }
}

/// Image sum of the 1-D Dirichlet heat kernel on `[0, len]` without the
/// `(4πt)^{-1/2}` prefactor, split into the direct term and the rest.
fn dirichlet_images(a: f64, b: f64, len: f64, t: f64) -> (f64, f64) {
    let direct = (-(a - b) * (a - b) / (4.0 * t)).exp();
    let mut rest = 0.0;
    let cutoff = 4.0 * t * 745.0;
    for j in -60i64..=60 {
        let shift = 2.0 * j as f64 * len;
        let plus = a - b + shift;
        let minus = a + b + shift;
        if j != 0 && plus * plus < cutoff {
            rest += (-plus * plus / (4.0 * t)).exp();
        }
        if minus * minus < cutoff {
            rest -= (-minus * minus / (4.0 * t)).exp();
        }
    }
    (direct, rest)
}

/// Quantum numbers of a transverse mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeLabel {
    /// `sin(pπy1/w) sin(qπy2/h)`.
    Rect { p: u32, q: u32 },
    /// `J_m(j_{m,k} r/R)` times `cos(mφ)` (`sine == false`) or `sin(mφ)`.
    Disk { m: u32, k: u32, sine: bool },
}

impl ModeLabel {
    /// The two integer labels written to CSV.
    pub fn pair(&self) -> (i64, i64) {
        match *self {
            ModeLabel::Rect { p, q } => (p as i64, q as i64),
            ModeLabel::Disk { m, k, sine } => (if sine { -(m as i64) } else { m as i64 }, k as i64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub nu: f64,
    pub label: ModeLabel,
    pub norm: f64,
    /// Scaled radial wavenumber `j_{m,k} / R` (disk only).
    pub radial_k: f64,
}

/// The first `count` transverse modes, sorted by `(ν, label)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    cross_section: CrossSection,
    modes: Vec<Mode>,
}

impl ModeBasis {
    pub fn build(cross_section: CrossSection, count: usize) -> Result<Self> {
        match cross_section {
            CrossSection::Rectangle { width, height } => build_rectangle_modes(width, height, count),
            CrossSection::Disk { radius } => build_disk_modes(radius, count),
        }
    }

    pub fn cross_section(&self) -> &CrossSection {
        &self.cross_section
    }

    pub fn count(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn nu(&self, n: usize) -> f64 {
        self.modes[n].nu
    }

    pub fn nus(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.nu)
    }

    pub fn area(&self) -> f64 {
        self.cross_section.area()
    }

    /// `χ_n(y)`.
    pub fn eval_mode(&self, n: usize, y: Point2) -> Result<f64> {
        if n >= self.modes.len() {
            return Err(Error::Config(format!(
                "mode index {n} out of range (basis has {})",
                self.modes.len()
            )));
        }
        if !self.cross_section.contains(y) {
            return Err(Error::Domain(format!("({}, {})", y[0], y[1])));
        }
        Ok(self.eval_unchecked(n, y))
    }

    fn eval_unchecked(&self, n: usize, y: Point2) -> f64 {
        let mode = &self.modes[n];
        match (self.cross_section, mode.label) {
            (CrossSection::Rectangle { width, height }, ModeLabel::Rect { p, q }) => {
                mode.norm
                    * (p as f64 * PI * y[0] / width).sin()
                    * (q as f64 * PI * y[1] / height).sin()
            }
            (CrossSection::Disk { radius }, ModeLabel::Disk { m, sine, .. }) => {
                let r = (y[0] * y[0] + y[1] * y[1]).sqrt().min(radius);
                let phi = y[1].atan2(y[0]);
                let angular = if m == 0 {
                    1.0
                } else if sine {
                    (m as f64 * phi).sin()
                } else {
                    (m as f64 * phi).cos()
                };
                mode.norm * bessel_j(m as usize, mode.radial_k * r) * angular
            }
            _ => unreachable!("mode labels always match their cross-section"),
        }
    }

    /// All `χ_n(y)` at once.
    pub fn profile(&self, y: Point2) -> Result<Vec<f64>> {
        if !self.cross_section.contains(y) {
            return Err(Error::Domain(format!("({}, {})", y[0], y[1])));
        }
        match self.cross_section {
            CrossSection::Rectangle { width, height } => {
                let pmax = self.modes.iter().map(|m| match m.label {
                    ModeLabel::Rect { p, q } => p.max(q),
                    _ => 0,
                });
                let pmax = pmax.max().unwrap_or(0) as usize;
                let s1: Vec<f64> = (0..=pmax).map(|p| (p as f64 * PI * y[0] / width).sin()).collect();
                let s2: Vec<f64> = (0..=pmax).map(|q| (q as f64 * PI * y[1] / height).sin()).collect();
                Ok(self
                    .modes
                    .iter()
                    .map(|m| match m.label {
                        ModeLabel::Rect { p, q } => m.norm * s1[p as usize] * s2[q as usize],
                        _ => unreachable!(),
                    })
                    .collect())
            }
            CrossSection::Disk { .. } => Ok((0..self.modes.len()).map(|n| self.eval_unchecked(n, y)).collect()),
        }
    }

    /// `sup |χ_n|²` over the basis, used by tail bounds.
    pub fn sup_norm_sq(&self) -> f64 {
        match self.cross_section {
            CrossSection::Rectangle { width, height } => 4.0 / (width * height),
            // |J_m| <= 1 for m = 0 and <= 1/sqrt(2) otherwise
            CrossSection::Disk { .. } => self.modes.iter().map(|m| m.norm * m.norm).fold(0.0, f64::max),
        }
    }

    /// Least-squares slope of `ν_n` against `n` over the upper half of the basis.
    pub fn weyl_slope(&self) -> f64 {
        let n = self.modes.len();
        let lo = n / 2;
        let pts: Vec<(f64, f64)> = (lo..n).map(|i| (i as f64, self.modes[i].nu)).collect();
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    }
}

fn sort_modes(modes: &mut [Mode]) {
    modes.sort_by(|a, b| a.nu.total_cmp(&b.nu).then(a.label.cmp(&b.label)));
}

pub fn build_rectangle_modes(width: f64, height: f64, count: usize) -> Result<ModeBasis> {
    let cross_section = CrossSection::rectangle(width, height)?;
    if count == 0 {
        return Err(Error::Config("mode count must be at least 1".into()));
    }
    let area = width * height;
    let norm = 2.0 / area.sqrt();
    // Weyl estimate for the cut-off, enlarged until enough modes fall below it
    let mut nu_cut = 4.0 * PI * (count as f64 + 10.0) / area * 1.3 + PI * PI * (1.0 / (width * width) + 1.0 / (height * height));
    loop {
        let mut modes = Vec::new();
        let pmax = ((nu_cut.sqrt() * width / PI) as u32).max(1);
        for p in 1..=pmax {
            let rest = nu_cut - (p as f64 * PI / width).powi(2);
            if rest <= 0.0 {
                break;
            }
            let qmax = (rest.sqrt() * height / PI) as u32;
            for q in 1..=qmax {
                let nu = PI * PI * ((p * p) as f64 / (width * width) + (q * q) as f64 / (height * height));
                modes.push(Mode { nu, label: ModeLabel::Rect { p, q }, norm, radial_k: 0.0 });
            }
        }
        if modes.len() >= count {
            sort_modes(&mut modes);
            modes.truncate(count);
            return Ok(ModeBasis { cross_section, modes });
        }
        nu_cut *= 1.5;
    }
}

pub fn build_disk_modes(radius: f64, count: usize) -> Result<ModeBasis> {
    let cross_section = CrossSection::disk(radius)?;
    if count == 0 {
        return Err(Error::Config("mode count must be at least 1".into()));
    }
    // Weyl: N(j) ≈ j²/4 - j/2 for the unit disk
    let target = count as f64 * 1.1 + 10.0;
    let mut j_max = 1.0 + (1.0 + 4.0 * target).sqrt() + 2.0;
    loop {
        let mut modes = Vec::new();
        let mut m = 0u32;
        loop {
            let zeros = bessel_zeros(m as usize, j_max)?;
            if zeros.is_empty() {
                break;
            }
            for (k, &j) in zeros.iter().enumerate() {
                let nu = (j / radius).powi(2);
                let jp1 = bessel_j(m as usize + 1, j).abs();
                let base = 1.0 / (PI.sqrt() * radius * jp1);
                let k = k as u32 + 1;
                if m == 0 {
                    modes.push(Mode { nu, label: ModeLabel::Disk { m, k, sine: false }, norm: base, radial_k: j / radius });
                } else {
                    let norm = base * 2f64.sqrt();
                    modes.push(Mode { nu, label: ModeLabel::Disk { m, k, sine: false }, norm, radial_k: j / radius });
                    modes.push(Mode { nu, label: ModeLabel::Disk { m, k, sine: true }, norm, radial_k: j / radius });
                }
            }
            m += 1;
        }
        if modes.len() >= count {
            sort_modes(&mut modes);
            modes.truncate(count);
            return Ok(ModeBasis { cross_section, modes });
        }
        j_max *= 1.25;
    }
}
