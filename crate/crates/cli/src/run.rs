use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use num_complex::Complex64;
use thiserror::Error;
use waveguide_core::bands::{default_window, solve_bands, BandChart, BlochContext};
use waveguide_core::oracle::xi_abel_limit;
use waveguide_core::scatter::s_matrix_sweep;
use waveguide_core::spectral::{find_bound_states_auto, Site};
use waveguide_core::{Error as SolverError, ModeBasis, Renormalization, Tube};

use crate::config::{ConfigError, RunConfig};
use crate::csvio::{write_csv, Cell, CsvError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    /// Transverse Dirichlet eigenvalues.
    Modes,
    /// Discrete eigenvalues below the lowest threshold.
    Boundstates,
    /// Transmission and reflection amplitudes over an energy sweep.
    Scatter,
    /// Floquet-Bloch band diagram of the periodic array.
    Bands,
    /// Spectral gaps of the periodic array.
    Gaps,
    #[value(hide = true)]
    Oracle,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Modes => "modes",
            Subcommand::Boundstates => "boundstates",
            Subcommand::Scatter => "scatter",
            Subcommand::Bands => "bands",
            Subcommand::Gaps => "gaps",
            Subcommand::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{operation} failed: {source}")]
    Solver { operation: &'static str, source: SolverError },
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    /// 2 for invalid input, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Solver { source, .. } => match source {
                SolverError::Convergence(_) | SolverError::Extraction(_) | SolverError::BandLinking { .. } => 3,
                _ => 2,
            },
            CliError::Output { .. } => 1,
        }
    }
}

fn solver(operation: &'static str) -> impl FnOnce(SolverError) -> CliError {
    move |source| CliError::Solver { operation, source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub subcommand: &'static str,
    pub modes: usize,
    /// Largest truncation bound of the renormalised diagonal at the sites.
    pub max_tail_bound: Option<f64>,
    pub reference_z: f64,
    pub rows: usize,
    pub seconds: f64,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} modes, {} rows", self.subcommand, self.modes, self.rows)?;
        if let Some(t) = self.max_tail_bound {
            write!(f, ", max xi tail bound {t:.3e} at z = {:.6}", self.reference_z)?;
        }
        write!(f, ", {:.3} s", self.seconds)
    }
}

pub fn build_tube(config: &RunConfig) -> Result<Tube, CliError> {
    let basis = ModeBasis::build(config.cross_section, config.modes_count).map_err(solver("transverse basis"))?;
    let mut renorm = Renormalization::for_cross_section(&config.cross_section);
    renorm.tail_tolerance = config.solver.tail_bound;
    for u in &mut renorm.abel_u_grid {
        *u *= config.solver.abel_grid_scale;
    }
    Ok(Tube::new(basis, renorm))
}

pub fn sites(config: &RunConfig) -> Vec<Site> {
    config.sites.iter().map(|s| Site::new(s.alpha, s.x, [s.y1, s.y2])).collect()
}

fn require_sites(config: &RunConfig, sub: Subcommand) -> Result<Vec<Site>, CliError> {
    if config.sites.is_empty() {
        return Err(CliError::Usage(format!("`{}` needs at least one site (site.1.alpha, ...)", sub.name())));
    }
    Ok(sites(config))
}

fn reference_z(config: &RunConfig, tube: &Tube) -> Result<f64, CliError> {
    let nu0 = tube.nu0();
    match config.solver.reference_z0 {
        Some(z) if z < nu0 => Ok(z),
        Some(z) => Err(ConfigError::Invalid { key: "solver.reference_z0".into(), constraint: format!("must lie below nu_0 = {nu0}, got {z}") }.into()),
        None => Ok(nu0 - 1.0),
    }
}

type Table = (Vec<String>, Vec<Vec<Cell>>);

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn modes_table(tube: &Tube) -> Table {
    let rows = tube
        .basis()
        .modes()
        .iter()
        .enumerate()
        .map(|(n, m)| {
            let (a, b) = m.label.pair();
            vec![Cell::Int(n as i64), Cell::Real(m.nu), Cell::Int(a), Cell::Int(b)]
        })
        .collect();
    (header(&["index", "nu", "label1", "label2"]), rows)
}

fn boundstates_table(tube: &Tube, sites: &[Site]) -> Result<Table, CliError> {
    let states = find_bound_states_auto(tube, sites).map_err(solver("bound-state search"))?;
    let mut names = vec!["index".to_string(), "energy".to_string()];
    names.extend((1..=sites.len()).map(|j| format!("d_{j}")));
    let rows = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.multiplicity > 1 {
                info!("state {i} at {} has multiplicity {}", s.energy, s.multiplicity);
            }
            let mut row = vec![Cell::Int(i as i64), Cell::Real(s.energy)];
            row.extend(s.coefficients.iter().map(|&d| Cell::Real(d)));
            row
        })
        .collect();
    Ok((names, rows))
}

fn scatter_table(config: &RunConfig, tube: &Tube, sites: &[Site]) -> Result<Table, CliError> {
    let sweep = config
        .scatter
        .as_ref()
        .ok_or_else(|| CliError::Usage("`scatter` needs scatter.e_min and scatter.e_max".into()))?;
    let nu0 = tube.nu0();
    if sweep.e_min <= nu0 {
        return Err(ConfigError::Invalid {
            key: "scatter.e_min".into(),
            constraint: format!("no open channel at the sweep start: must exceed nu_0 = {nu0}, got {}", sweep.e_min),
        }
        .into());
    }
    let energies: Vec<f64> = if sweep.samples == 1 {
        vec![sweep.e_min]
    } else {
        let step = (sweep.e_max - sweep.e_min) / (sweep.samples - 1) as f64;
        (0..sweep.samples).map(|i| if i + 1 == sweep.samples { sweep.e_max } else { sweep.e_min + step * i as f64 }).collect()
    };
    let mut rows = Vec::new();
    for (z, result) in energies.iter().zip(s_matrix_sweep(tube, sites, &energies)) {
        let a = result.map_err(solver("scattering matrix"))?;
        let defect = a.unitarity_defect();
        debug!("z = {z}: {} open channels, unitarity defect {defect:.3e}", a.n_open);
        for n in 0..a.n_open {
            for m in 0..a.n_open {
                let c = |v: Complex64| [Cell::Real(v.re), Cell::Real(v.im)];
                let mut row = vec![Cell::Real(*z), Cell::Int(n as i64), Cell::Int(m as i64)];
                row.extend(c(a.t[(n, m)]));
                row.extend(c(a.r[(n, m)]));
                row.extend(c(a.t_tilde[(n, m)]));
                row.extend(c(a.r_tilde[(n, m)]));
                row.push(Cell::Real(defect));
                rows.push(row);
            }
        }
    }
    let names = header(&["energy", "n", "m", "re_t", "im_t", "re_r", "im_r", "re_tt", "im_tt", "re_rt", "im_rt", "defect"]);
    Ok((names, rows))
}

fn band_chart(config: &RunConfig, tube: &Tube, sites: Vec<Site>, sub: Subcommand) -> Result<BandChart, CliError> {
    let ell = config.ell.ok_or_else(|| CliError::Usage(format!("`{}` needs period.ell", sub.name())))?;
    let ctx = BlochContext::new(ell, sites, config.bands.theta_points.div_ceil(2)).map_err(solver("Bloch setup"))?;
    let window = config.bands.window.unwrap_or_else(|| default_window(tube, &ctx));
    info!("band window ({}, {}), {} theta points", window.0, window.1, config.bands.theta_points);
    solve_bands(tube, &ctx, window, config.bands.band_count).map_err(solver("band computation"))
}

fn bands_table(chart: &BandChart) -> Table {
    let mut rows = Vec::new();
    for band in &chart.bands {
        for (theta, e) in chart.theta.iter().zip(&band.energies) {
            if let Some(e) = e {
                rows.push(vec![Cell::Real(*theta), Cell::Int(band.index as i64), Cell::Real(*e)]);
            }
        }
    }
    (header(&["theta", "band_index", "energy"]), rows)
}

fn gaps_table(chart: &BandChart) -> Table {
    let rows = chart
        .gaps
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| vec![Cell::Int(i as i64), Cell::Real(lo), Cell::Real(hi), Cell::Real(hi - lo)])
        .collect();
    (header(&["gap_index", "lower", "upper", "width"]), rows)
}

/// Renormalised diagonal at every site: main path against the Abel-limit
/// oracle. Sites the oracle cannot handle (off-centre in a disk) are skipped.
fn oracle_table(tube: &Tube, sites: &[Site], z: f64) -> Result<Table, CliError> {
    let mut rows = Vec::new();
    for (j, s) in sites.iter().enumerate() {
        let main = tube.xi_evaluated(s.b, Complex64::new(z, 0.0)).map_err(solver("renormalised diagonal"))?;
        let oracle = match xi_abel_limit(tube.cross_section(), s.b, z, &tube.renorm().abel_u_grid) {
            Ok(o) => o,
            Err(SolverError::Config(msg)) => {
                info!("site {}: oracle skipped ({msg})", j + 1);
                continue;
            }
            Err(e) => return Err(solver("Abel-limit oracle")(e)),
        };
        rows.push(vec![
            Cell::Int(j as i64 + 1),
            Cell::Real(z),
            Cell::Real(main.value.re),
            Cell::Real(oracle.value.re),
            Cell::Real(oracle.error_estimate),
            Cell::Real(main.tail_bound),
        ]);
    }
    Ok((header(&["site", "z", "xi_main", "xi_oracle", "oracle_error", "tail_bound"]), rows))
}

/// Runs one subcommand and writes its table to `out`.
pub fn run_subcommand(sub: Subcommand, config: &RunConfig, out: &Path) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    if matches!(sub, Subcommand::Bands | Subcommand::Gaps) && config.ell.is_none() {
        return Err(CliError::Usage(format!("`{}` needs period.ell", sub.name())));
    }
    let tube = build_tube(config)?;
    let z_ref = reference_z(config, &tube)?;
    let mut max_tail = None;
    for s in sites(config) {
        let e = tube.xi_evaluated(s.b, Complex64::new(z_ref, 0.0)).map_err(solver("renormalised diagonal"))?;
        max_tail = Some(max_tail.map_or(e.tail_bound, |m: f64| m.max(e.tail_bound)));
    }
    let (names, rows) = match sub {
        Subcommand::Modes => modes_table(&tube),
        Subcommand::Boundstates => boundstates_table(&tube, &require_sites(config, sub)?)?,
        Subcommand::Scatter => scatter_table(config, &tube, &require_sites(config, sub)?)?,
        Subcommand::Bands => bands_table(&band_chart(config, &tube, require_sites(config, sub)?, sub)?),
        Subcommand::Gaps => gaps_table(&band_chart(config, &tube, require_sites(config, sub)?, sub)?),
        Subcommand::Oracle => oracle_table(&tube, &require_sites(config, sub)?, z_ref)?,
    };
    let output_error = |e: &dyn std::fmt::Display| CliError::Output { path: out.display().to_string(), message: e.to_string() };
    let file = File::create(out).map_err(|e| output_error(&e))?;
    let mut w = BufWriter::new(file);
    write_csv(&mut w, &names, &rows).map_err(|e: CsvError| output_error(&e))?;
    w.flush().map_err(|e| output_error(&e))?;
    Ok(RunSummary {
        subcommand: sub.name(),
        modes: tube.basis().count(),
        max_tail_bound: max_tail,
        reference_z: z_ref,
        rows: rows.len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}
