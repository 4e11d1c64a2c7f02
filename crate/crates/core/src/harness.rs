//! Experiment configuration, presets, error metrics and the end-to-end driver.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::forward::{add_noise, synthesize_with, BoundaryGrid, BoundarySignal, GridSpec, SynthesisOptions, DEFAULT_ABEL_POINTS};
use crate::geometry::{admissible_set, Geometry};
use crate::numfmt::g17;
use crate::phantom::Phantom;
use crate::radon_core::{
    nonpositive_offsets, oracle_sinogram, reconstruct_fundamental_sinogram, symmetry_extend, CellMask, Directions,
    Mollifier, ReconstructionOptions, Sinogram,
};
use crate::radon_invert::{invert_radon_2d, invert_radon_3d, restrict_to_domain, BoundingBox, GridImage};
use crate::symmetrize::{odd_extend, Field};

fn rebase(base: &Path, p: &str) -> PathBuf {
    if base == Path::new(".") || base.as_os_str().is_empty() {
        PathBuf::from(p)
    } else {
        base.join(p)
    }
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 3] = ["paper-2d-n3", "paper-2d-n3-noisy", "paper-3d-octant"];

const PRESET_2D: &str = "\
# Two rays at 60 degrees, full graded boundary out to 300
name = paper-2d-n3
geometry = sector 3
phantom = default
r0 = 1
r_max = 300
fine_h = 0.01
fine_extent = 1
growth = 1.01
dt = 0.01
sino_steps = 120
r_cut = inf
image_cells = 256
image_side = 1
";

const PRESET_2D_NOISY: &str = "\
# Same setup with 100% noise on [arrival, arrival + 2] and data used only for |y| <= 300
name = paper-2d-n3-noisy
geometry = sector 3
phantom = default
r0 = 1
r_max = 300
fine_h = 0.01
fine_extent = 1
growth = 1.01
dt = 0.01
sino_steps = 120
r_cut = 300
noise_level = 1
seed = 1
image_cells = 256
image_side = 1
";

const PRESET_3D: &str = "\
# Boundary of the first octant, projections on the phi = 53 degree slice
name = paper-3d-octant
geometry = octant
phantom = default
r0 = 1
r_max = 20000
fine_h = 0.02
fine_extent = 1
growth = 1.02
angles = 256
dt = 0.01
sino_steps = 90
sino_phi_deg = 53
r_cut = inf
image_cells = 0
";

/// Where the phantom comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSource {
    Default,
    File(PathBuf),
}

/// Polar angles of a 3D sinogram, inside `[0, π/2]`.
#[derive(Debug, Clone, PartialEq)]
pub enum PolarGrid {
    /// Explicit angles in radians.
    Angles(Vec<f64>),
    /// `k·(π/2)/n`, `k = 0..=n`.
    Uniform(usize),
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub geometry: Geometry,
    pub phantom: PhantomSource,
    /// Radius of the ball holding the phantom.
    pub r0: f64,
    pub grid: GridSpec,
    pub dt: f64,
    pub abel_points: usize,
    /// Angular steps across the fundamental sector (2D) or in azimuth over `[0, π/2]` (3D).
    pub sino_steps: usize,
    pub sino_phi: PolarGrid,
    /// Offset step of the sinogram; defaults to `dt`.
    pub sino_dt: f64,
    pub r_cut: f64,
    pub noise_level: f64,
    pub seed: u64,
    pub mollifier_eps: f64,
    /// Half-width in degrees of the bands around mirror directions in the 2D report.
    pub band_deg: f64,
    /// Cells per side of the reconstructed image; 0 skips inversion.
    pub image_cells: usize,
    pub image_side: f64,
    pub write_boundary: bool,
    pub out_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "name",
    "geometry",
    "phantom",
    "r0",
    "r_max",
    "fine_h",
    "fine_extent",
    "growth",
    "angles",
    "dt",
    "abel_points",
    "sino_steps",
    "sino_phi_deg",
    "sino_phi_steps",
    "sino_dt",
    "r_cut",
    "noise_level",
    "seed",
    "mollifier_eps",
    "band_deg",
    "image_cells",
    "image_side",
    "write_boundary",
    "out_dir",
];

impl ExperimentConfig {
    /// Built-in preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "paper-2d-n3" => PRESET_2D,
            "paper-2d-n3-noisy" => PRESET_2D_NOISY,
            "paper-3d-octant" => PRESET_3D,
            _ => {
                return Err(Error::input(format!(
                    "unknown preset {name:?} (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Self::parse(text, &format!("preset:{name}"), Path::new("."))
    }

    /// A preset name or the path of a config file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if PRESETS.contains(&spec) {
            Self::preset(spec)
        } else {
            Self::from_file(Path::new(spec))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base`.
    pub fn parse(text: &str, source: &str, base: &Path) -> Result<Self> {
        let mut kv: BTreeMap<&str, (String, usize)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, "expected `key = value`"))?;
            let k = k.trim();
            let key = KEYS
                .iter()
                .find(|x| **x == k)
                .ok_or_else(|| Error::parse(source, i + 1, format!("unknown key {k:?}")))?;
            if kv.insert(key, (v.trim().to_string(), i + 1)).is_some() {
                return Err(Error::parse(source, i + 1, format!("duplicate key {k:?}")));
            }
        }
        let line_of = |k: &str| kv.get(k).map_or(0, |v| v.1);
        let bad = |k: &str, msg: String| Error::parse(source, line_of(k), format!("{k}: {msg}"));
        let num = |k: &str, default: f64| -> Result<f64> {
            match kv.get(k) {
                None => Ok(default),
                Some((v, _)) if v == "inf" => Ok(f64::INFINITY),
                Some((v, _)) => v.parse::<f64>().map_err(|e| bad(k, e.to_string())),
            }
        };
        let int = |k: &str, default: u64| -> Result<u64> {
            match kv.get(k) {
                None => Ok(default),
                Some((v, _)) => v.parse::<u64>().map_err(|e| bad(k, e.to_string())),
            }
        };

        let geometry = match kv.get("geometry").map(|v| v.0.as_str()) {
            None => return Err(Error::parse(source, 0, "missing key \"geometry\"")),
            Some("octant") => Geometry::octant(),
            Some(g) => {
                let order = g
                    .strip_prefix("sector")
                    .map(str::trim)
                    .and_then(|n| n.parse::<u32>().ok())
                    .ok_or_else(|| bad("geometry", format!("expected `sector N` or `octant`, got {g:?}")))?;
                Geometry::sector(order).map_err(|e| bad("geometry", e.to_string()))?
            }
        };
        let phantom = match kv.get("phantom").map(|v| v.0.as_str()) {
            None | Some("default") => PhantomSource::Default,
            Some(p) => PhantomSource::File(rebase(base, p)),
        };
        let name = kv.get("name").map_or_else(|| "experiment".to_string(), |v| v.0.clone());
        let dt = num("dt", 0.01)?;
        let sino_phi = match (kv.get("sino_phi_deg"), kv.get("sino_phi_steps")) {
            (Some(_), Some(_)) => {
                return Err(bad("sino_phi_steps", "give either sino_phi_deg or sino_phi_steps".into()));
            }
            (Some((v, _)), None) => PolarGrid::Angles(
                v.split(',')
                    .map(|x| x.trim().parse::<f64>().map(f64::to_radians))
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad("sino_phi_deg", e.to_string()))?,
            ),
            (None, Some(_)) => PolarGrid::Uniform(int("sino_phi_steps", 0)? as usize),
            (None, None) => PolarGrid::Angles(vec![53f64.to_radians()]),
        };
        let write_boundary = match kv.get("write_boundary").map(|v| v.0.as_str()) {
            None | Some("false") => false,
            Some("true") => true,
            Some(v) => return Err(bad("write_boundary", format!("expected true or false, got {v:?}"))),
        };
        let out_dir = kv
            .get("out_dir")
            .map_or_else(|| PathBuf::from("out").join(&name), |v| rebase(base, &v.0));
        let cfg = ExperimentConfig {
            geometry,
            phantom,
            r0: num("r0", 1.0)?,
            grid: GridSpec::new(
                num("r_max", 300.0)?,
                num("fine_h", 0.01)?,
                num("fine_extent", 1.0)?,
                num("growth", 1.01)?,
            )
            .with_angles(int("angles", crate::forward::DEFAULT_ANGLES as u64)? as usize),
            dt,
            abel_points: int("abel_points", DEFAULT_ABEL_POINTS as u64)? as usize,
            sino_steps: int("sino_steps", 120)? as usize,
            sino_phi,
            sino_dt: num("sino_dt", dt)?,
            r_cut: num("r_cut", f64::INFINITY)?,
            noise_level: num("noise_level", 0.0)?,
            seed: int("seed", 0)?,
            mollifier_eps: num("mollifier_eps", 0.0)?,
            band_deg: num("band_deg", 7.0)?,
            image_cells: int("image_cells", 0)? as usize,
            image_side: num("image_side", 1.0)?,
            write_boundary,
            out_dir,
            name,
        };
        cfg.validate().map_err(|e| Error::parse(source, 0, e.to_string()))?;
        Ok(cfg)
    }

    /// Checks every field against the operation it feeds.
    pub fn validate(&self) -> Result<()> {
        let positive = |k: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::input(format!("{k} must be positive and finite, got {v}")))
            }
        };
        positive("r0", self.r0)?;
        positive("dt", self.dt)?;
        positive("sino_dt", self.sino_dt)?;
        positive("image_side", self.image_side)?;
        self.grid.validate()?;
        if self.abel_points < 2 {
            return Err(Error::input("abel_points must be at least 2"));
        }
        if self.sino_steps < 2 {
            return Err(Error::input("sino_steps must be at least 2"));
        }
        if self.sino_dt > self.r0 {
            return Err(Error::input("sino_dt must not exceed r0"));
        }
        if !(self.r_cut > 0.0) {
            return Err(Error::input(format!("r_cut must be positive, got {}", self.r_cut)));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::input("noise_level must be >= 0"));
        }
        Mollifier::new(self.mollifier_eps)?;
        if !(self.band_deg >= 0.0 && self.band_deg < 90.0) {
            return Err(Error::input("band_deg must lie in [0, 90)"));
        }
        if self.image_cells > 4096 {
            return Err(Error::input("image_cells must be at most 4096"));
        }
        match &self.sino_phi {
            PolarGrid::Angles(a) if a.is_empty() || a.iter().any(|p| !(0.0..=FRAC_PI_2 + 1e-12).contains(p)) => {
                Err(Error::input("sino_phi_deg must list angles in [0, 90]"))
            }
            PolarGrid::Uniform(0) => Err(Error::input("sino_phi_steps must be at least 1")),
            _ => Ok(()),
        }
    }

    pub fn load_phantom(&self) -> Result<Phantom> {
        let ph = match &self.phantom {
            PhantomSource::Default if self.geometry.dim() == 2 => Phantom::default_2d(),
            PhantomSource::Default => Phantom::default_3d(),
            PhantomSource::File(p) => Phantom::from_file(p, self.geometry.dim())?,
        };
        ph.check_contained(&self.geometry)?;
        if ph.support_radius() > self.r0 * (1.0 + 1e-12) {
            return Err(Error::input(format!(
                "phantom support radius {} exceeds r0 = {}",
                ph.support_radius(),
                self.r0
            )));
        }
        Ok(ph)
    }

    /// Directions of the fundamental sinogram.
    pub fn fundamental_directions(&self) -> Result<Directions> {
        match self.geometry {
            Geometry::Sector { .. } => Directions::sector_fan(&self.geometry, self.sino_steps),
            Geometry::Octant => {
                let phis = match &self.sino_phi {
                    PolarGrid::Angles(a) => a.clone(),
                    PolarGrid::Uniform(n) => (0..=*n).map(|k| k as f64 * FRAC_PI_2 / *n as f64).collect(),
                };
                Directions::octant_patch(self.sino_steps, phis)
            }
        }
    }

    pub fn fundamental_offsets(&self) -> Result<Vec<f64>> {
        nonpositive_offsets(self.r0, self.sino_dt)
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            dt: self.dt,
            horizon_radius: Some(self.r0),
            abel_points: self.abel_points,
        }
    }

    pub fn reconstruction_options(&self) -> Result<ReconstructionOptions> {
        Ok(ReconstructionOptions {
            mollifier: Mollifier::new(self.mollifier_eps)?,
            r_cut: self.r_cut,
            r0: Some(self.r0),
        })
    }

    /// Config text that parses back to this config (paths made absolute).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let geometry = match self.geometry {
            Geometry::Sector { order } => format!("sector {order}"),
            Geometry::Octant => "octant".into(),
        };
        let phantom = match &self.phantom {
            PhantomSource::Default => "default".to_string(),
            PhantomSource::File(p) => p.display().to_string(),
        };
        let f = |x: f64| if x.is_infinite() { "inf".to_string() } else { g17(x) };
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "geometry = {geometry}");
        let _ = writeln!(s, "phantom = {phantom}");
        for (k, v) in [
            ("r0", self.r0),
            ("r_max", self.grid.r_max),
            ("fine_h", self.grid.fine_h),
            ("fine_extent", self.grid.fine_extent),
            ("growth", self.grid.growth),
            ("dt", self.dt),
            ("sino_dt", self.sino_dt),
            ("r_cut", self.r_cut),
            ("noise_level", self.noise_level),
            ("mollifier_eps", self.mollifier_eps),
            ("band_deg", self.band_deg),
            ("image_side", self.image_side),
        ] {
            let _ = writeln!(s, "{k} = {}", f(v));
        }
        for (k, v) in [
            ("angles", self.grid.angles as u64),
            ("abel_points", self.abel_points as u64),
            ("sino_steps", self.sino_steps as u64),
            ("seed", self.seed),
            ("image_cells", self.image_cells as u64),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        match &self.sino_phi {
            PolarGrid::Angles(a) => {
                let deg: Vec<String> = a.iter().map(|p| g17(p.to_degrees())).collect();
                let _ = writeln!(s, "sino_phi_deg = {}", deg.join(", "));
            }
            PolarGrid::Uniform(n) => {
                let _ = writeln!(s, "sino_phi_steps = {n}");
            }
        }
        let _ = writeln!(s, "write_boundary = {}", self.write_boundary);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        s
    }
}

/// Errors over one region of a sinogram or image.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionError {
    pub name: String,
    pub cells: usize,
    /// `max|a - b| / max|b|`.
    pub rel_linf: f64,
    /// `‖a - b‖₂ / ‖b‖₂`.
    pub rel_l2: f64,
}

/// Masked error metrics plus per-stage wall-clock timings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub name: String,
    /// First entry is always `all` (the whole mask).
    pub regions: Vec<RegionError>,
    /// Cells outside the mask.
    pub excluded: usize,
    pub total: usize,
    /// Seconds per stage. Not written to the CSV, which stays deterministic.
    pub timings: Vec<(String, f64)>,
}

impl ErrorReport {
    pub fn region(&self, name: &str) -> Option<&RegionError> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Relative L∞ over the whole mask.
    pub fn rel_linf(&self) -> f64 {
        self.regions.first().map_or(0.0, |r| r.rel_linf)
    }

    pub fn rel_l2(&self) -> f64 {
        self.regions.first().map_or(0.0, |r| r.rel_l2)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("region,cells,rel_linf,rel_l2\n");
        for r in &self.regions {
            let _ = writeln!(s, "{},{},{},{}", r.name, r.cells, g17(r.rel_linf), g17(r.rel_l2));
        }
        let _ = writeln!(s, "excluded,{},,", self.excluded);
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("experiment {}\n", self.name);
        let _ = writeln!(s, "{:<16} {:>10} {:>12} {:>12}", "region", "cells", "rel_linf", "rel_l2");
        for r in &self.regions {
            let _ = writeln!(s, "{:<16} {:>10} {:>12.4e} {:>12.4e}", r.name, r.cells, r.rel_linf, r.rel_l2);
        }
        let _ = writeln!(s, "excluded cells: {} of {}", self.excluded, self.total);
        if !self.timings.is_empty() {
            let _ = writeln!(s, "timings (s):");
            for (stage, secs) in &self.timings {
                let _ = writeln!(s, "  {stage:<12} {secs:.2}");
            }
        }
        s
    }
}

fn region(name: &str, pairs: impl Iterator<Item = (f64, f64)>) -> RegionError {
    let (mut cells, mut dmax, mut bmax, mut d2, mut b2) = (0usize, 0.0f64, 0.0f64, 0.0, 0.0);
    for (a, b) in pairs {
        let d = (a - b).abs();
        cells += 1;
        dmax = dmax.max(d);
        bmax = bmax.max(b.abs());
        d2 += d * d;
        b2 += b * b;
    }
    let ratio = |num: f64, den: f64| {
        if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    };
    RegionError {
        name: name.to_string(),
        cells,
        rel_linf: ratio(dmax, bmax),
        rel_l2: ratio(d2.sqrt(), b2.sqrt()),
    }
}

/// Cells whose mask is `Computed` or `Extended`.
pub fn known_mask(s: &Sinogram) -> Vec<bool> {
    s.mask()
        .iter()
        .map(|m| matches!(m, CellMask::Computed | CellMask::Extended))
        .collect()
}

/// Cells whose direction lies in `admissible_set(radius, r0)`.
pub fn admissible_mask(s: &Sinogram, geom: &Geometry, radius: f64, r0: f64) -> Result<Vec<bool>> {
    let set = admissible_set(radius, r0, geom)?;
    let n_t = s.n_offsets();
    let dim = geom.dim();
    Ok((0..s.len())
        .map(|i| set.contains(&s.directions().vector(i / n_t)[..dim]))
        .collect())
}

/// Angular distance from a 2D direction to the nearest mirror `kβ`.
fn mirror_gap(angle: f64, beta: f64) -> f64 {
    let g = angle.rem_euclid(beta);
    g.min(beta - g)
}

/// Compares `a` against the reference `b` over `mask`. In 2D the report also
/// splits the mask into cells within `band_deg` of a mirror and the rest.
pub fn compare_sinograms(
    a: &Sinogram,
    b: &Sinogram,
    mask: &[bool],
    geom: Option<&Geometry>,
    band_deg: f64,
) -> Result<ErrorReport> {
    if !a.same_grid(b) {
        return Err(Error::input("sinograms are on different grids"));
    }
    if mask.len() != a.len() {
        return Err(Error::input(format!("mask has {} cells, sinogram {}", mask.len(), a.len())));
    }
    let cell = |i: usize| (a.values()[i], b.values()[i]);
    let chosen = || (0..a.len()).filter(|i| mask[*i]);
    let mut regions = vec![region("all", chosen().map(cell))];
    if let (Some(beta), Directions::Circle(_)) = (geom.and_then(Geometry::opening_angle), a.directions()) {
        let band = band_deg.to_radians();
        let n_t = a.n_offsets();
        let near = |i: usize| mirror_gap(a.directions().angles(i / n_t).0, beta) < band;
        regions.push(region("outside_bands", chosen().filter(|i| !near(*i)).map(cell)));
        regions.push(region("inside_bands", chosen().filter(|i| near(*i)).map(cell)));
    }
    let cells = regions[0].cells;
    Ok(ErrorReport {
        name: String::new(),
        regions,
        excluded: a.len() - cells,
        total: a.len(),
        timings: Vec::new(),
    })
}

/// Image error against `f_O` over cells in `Q ∩ B(0, r0)`.
pub fn image_error(img: &GridImage, ph: &Phantom, geom: &Geometry, r0: f64) -> Result<RegionError> {
    let fo = odd_extend(ph, geom)?;
    let dim = img.dim();
    let pairs: Vec<(f64, f64)> = (0..img.len())
        .filter_map(|n| {
            let c = img.center(n);
            let x = &c[..dim];
            let inside = geom.contains(x) && x.iter().map(|v| v * v).sum::<f64>() < r0 * r0;
            inside.then(|| (img.values()[n], fo.eval(x)))
        })
        .collect();
    Ok(region("image", pairs.into_iter()))
}

/// Results of [`run_experiment`] kept in memory for callers.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub report: ErrorReport,
    pub fundamental: Sinogram,
    /// Reconstructed projections on the full circle/sphere.
    pub sinogram: Sinogram,
    /// Exact projections on the same grid.
    pub oracle: Sinogram,
    pub image: Option<GridImage>,
    pub artifacts: Vec<PathBuf>,
}

/// Synthesizes (and optionally perturbs) boundary data for a config.
pub fn synthesize_for(cfg: &ExperimentConfig, ph: &Phantom) -> Result<BoundarySignal> {
    let grid = Arc::new(BoundaryGrid::build(&cfg.geometry, &cfg.grid).map_err(Error::at_stage("grid"))?);
    let clean = synthesize_with(ph, &grid, &cfg.synthesis_options()).map_err(Error::at_stage("synth"))?;
    if cfg.noise_level > 0.0 {
        add_noise(&clean, cfg.noise_level, cfg.seed).map_err(Error::at_stage("noise"))
    } else {
        Ok(clean)
    }
}

/// Exact projections of `f_O` on the config's fundamental grid.
pub fn oracle_for(cfg: &ExperimentConfig, ph: &Phantom) -> Result<Sinogram> {
    let mut s = oracle_sinogram(ph, &cfg.geometry, cfg.fundamental_directions()?, cfg.fundamental_offsets()?)?;
    // Keep the exact zeros on mirrors, as the reconstruction does.
    for d in 0..s.n_directions() {
        let w = s.directions().vector(d);
        let on_mirror = match cfg.geometry {
            Geometry::Sector { .. } => {
                let beta = cfg.geometry.opening_angle().unwrap();
                mirror_gap(s.directions().angles(d).0, beta) < 1e-9
            }
            Geometry::Octant => w.iter().any(|v| v.abs() < 1e-9),
        };
        if on_mirror {
            for m in 0..s.n_offsets() {
                s.set(d, m, 0.0, CellMask::Zero);
            }
        }
    }
    Ok(s)
}

/// Inverts a full sinogram onto `[0, side]^dim` and restricts to `Q`.
pub fn invert_for(cfg: &ExperimentConfig, s: &Sinogram) -> Result<GridImage> {
    let dim = cfg.geometry.dim();
    let bbox = BoundingBox::unit(dim, cfg.image_side)?;
    let h = cfg.image_side / cfg.image_cells.max(1) as f64;
    let img = if dim == 2 {
        invert_radon_2d(s, &bbox, h, true)?
    } else {
        invert_radon_3d(s, &bbox, h, true)?
    };
    restrict_to_domain(&img, &cfg.geometry)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs synthesis, reconstruction, extension, comparison with the exact
/// projections and, when `image_cells > 0`, inversion. Writes all artifacts
/// to `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };
    cfg.validate().map_err(Error::at_stage("config"))?;
    let ph = cfg.load_phantom().map_err(Error::at_stage("phantom"))?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::at_stage("write")(Error::io(out, e)))?;
    let mut artifacts = Vec::new();

    let data = synthesize_for(cfg, &ph)?;
    if cfg.write_boundary {
        let p = out.join("boundary.txt");
        data.write(&p).map_err(Error::at_stage("write"))?;
        artifacts.push(p);
    }
    lap("synth", &mut timings);

    let fundamental = reconstruct_fundamental_sinogram(
        &data,
        cfg.fundamental_directions()?,
        cfg.fundamental_offsets()?,
        &cfg.reconstruction_options()?,
    )
    .map_err(Error::at_stage("reconstruct"))?;
    drop(data);
    lap("reconstruct", &mut timings);

    let sinogram = symmetry_extend(&fundamental, &cfg.geometry).map_err(Error::at_stage("extend"))?;
    lap("extend", &mut timings);

    let oracle_fund = oracle_for(cfg, &ph).map_err(Error::at_stage("oracle"))?;
    let oracle = symmetry_extend(&oracle_fund, &cfg.geometry).map_err(Error::at_stage("oracle"))?;
    lap("oracle", &mut timings);

    let mut report = compare_sinograms(&sinogram, &oracle, &known_mask(&sinogram), Some(&cfg.geometry), cfg.band_deg)
        .map_err(Error::at_stage("compare"))?;
    report.name = cfg.name.clone();
    let known = known_mask(&sinogram);
    let admissible = admissible_mask(&sinogram, &cfg.geometry, cfg.r_cut.min(cfg.grid.r_max), cfg.r0)
        .map_err(Error::at_stage("compare"))?;
    let cell = |i: usize| (sinogram.values()[i], oracle.values()[i]);
    report.regions.insert(
        1,
        region("admissible", (0..sinogram.len()).filter(|i| known[*i] && admissible[*i]).map(cell)),
    );
    lap("compare", &mut timings);

    let image = if cfg.image_cells > 0 {
        let img = invert_for(cfg, &sinogram).map_err(Error::at_stage("invert"))?;
        report.regions.push(image_error(&img, &ph, &cfg.geometry, cfg.r0).map_err(Error::at_stage("invert"))?);
        lap("invert", &mut timings);
        Some(img)
    } else {
        None
    };

    let write = |r: Result<()>| r.map_err(Error::at_stage("write"));
    for (file, s) in [
        ("sinogram_fundamental.csv", &fundamental),
        ("sinogram.csv", &sinogram),
        ("oracle.csv", &oracle),
    ] {
        let p = out.join(file);
        write(s.write_csv(&p))?;
        artifacts.push(p);
    }
    if let Some(img) = &image {
        let p = out.join("image.csv");
        write(img.write_csv(&p))?;
        artifacts.push(p);
        artifacts.extend(img.write_pgm(&out.join("image.pgm")).map_err(Error::at_stage("write"))?);
    }
    lap("write", &mut timings);
    report.timings = timings;
    for (file, text) in [
        ("report.csv", report.to_csv()),
        ("report.txt", report.to_text()),
        ("config.txt", cfg.to_text()),
    ] {
        let p = out.join(file);
        write(write_text(&p, &text))?;
        artifacts.push(p);
    }
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        report,
        fundamental,
        sinogram,
        oracle,
        image,
        artifacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_round_trip() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            assert_eq!(cfg.name, name);
            let back = ExperimentConfig::parse(&cfg.to_text(), "t", Path::new(".")).unwrap();
            assert_eq!(back, cfg);
        }
        let noisy = ExperimentConfig::preset("paper-2d-n3-noisy").unwrap();
        assert_eq!(noisy.r_cut, 300.0);
        assert_eq!(noisy.noise_level, 1.0);
        let c3 = ExperimentConfig::preset("paper-3d-octant").unwrap();
        assert!(matches!(&c3.sino_phi, PolarGrid::Angles(a) if (a[0].to_degrees() - 53.0).abs() < 1e-12));
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn config_errors_name_the_line() {
        let err = ExperimentConfig::parse("geometry = sector 3\nbogus = 1\n", "c.txt", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("c.txt:2"), "{err}");
        let err = ExperimentConfig::parse("geometry = sector 3\ndt = fast\n", "c.txt", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");
        assert!(ExperimentConfig::parse("dt = 0.1\n", "c", Path::new(".")).is_err());
        assert!(ExperimentConfig::parse("geometry = sector 1\n", "c", Path::new(".")).is_err());
        assert!(ExperimentConfig::parse("geometry = octant\ngrowth = 0.5\n", "c", Path::new(".")).is_err());
        assert!(ExperimentConfig::parse("geometry = octant\ndt = 1\ndt = 2\n", "c", Path::new(".")).is_err());
        let ok = ExperimentConfig::parse("geometry = octant # comment\n\n# only a comment\n", "c", Path::new(".")).unwrap();
        assert_eq!(ok.geometry, Geometry::octant());
    }

    fn tiny_sinogram(values: &[f64]) -> Sinogram {
        let mut s = Sinogram::new(Directions::Circle(vec![0.1, 0.5]), vec![-1.0, 0.0]).unwrap();
        for (i, v) in values.iter().enumerate() {
            s.set(i / 2, i % 2, *v, CellMask::Computed);
        }
        s
    }

    #[test]
    fn compare_examples() {
        let a = tiny_sinogram(&[1.0, -2.0, 0.5, 3.0]);
        let r = compare_sinograms(&a, &a, &[true; 4], None, 7.0).unwrap();
        assert_eq!((r.rel_linf(), r.rel_l2()), (0.0, 0.0));
        let b = tiny_sinogram(&[2.0, -4.0, 1.0, 6.0]);
        let r = compare_sinograms(&a, &b, &[true; 4], None, 7.0).unwrap();
        assert_eq!(r.rel_linf(), 0.5);
        assert!((r.rel_l2() - 0.5).abs() < 1e-15);
        let r = compare_sinograms(&a, &b, &[true, false, true, true], Some(&Geometry::sector(3).unwrap()), 7.0).unwrap();
        assert_eq!(r.region("all").unwrap().cells + r.excluded, r.total);
        // 0.1 rad is within 7° of the mirror at 0; 0.5 rad is not.
        assert_eq!(r.region("inside_bands").unwrap().cells, 1);
        assert_eq!(r.region("outside_bands").unwrap().cells, 2);
        let other = Sinogram::new(Directions::Circle(vec![0.1]), vec![-1.0, 0.0]).unwrap();
        assert!(compare_sinograms(&a, &other, &[true; 2], None, 7.0).is_err());
        assert!(r.to_csv().starts_with("region,cells,rel_linf,rel_l2\nall,3,"));
    }

    #[test]
    fn small_run_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let text = "\
geometry = sector 3
r_max = 12
fine_h = 0.02
growth = 1.05
dt = 0.01
sino_steps = 12
sino_dt = 0.05
r_cut = 12
noise_level = 0.2
seed = 7
image_cells = 32
";
        let mut cfg = ExperimentConfig::parse(text, "t", Path::new(".")).unwrap();
        cfg.out_dir = dir.path().join("a");
        let first = run_experiment(&cfg).unwrap();
        cfg.out_dir = dir.path().join("b");
        let second = run_experiment(&cfg).unwrap();
        for f in ["sinogram.csv", "oracle.csv", "sinogram_fundamental.csv", "report.csv", "image.csv"] {
            let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
            assert!(a == b, "{f} differs");
        }
        assert_eq!(first.report.regions, second.report.regions);
        assert!(first.report.region("image").is_some());
        assert!(first.sinogram.unknown_count() > 0);
        assert_eq!(first.report.region("all").unwrap().cells + first.report.excluded, first.report.total);
    }

    #[test]
    fn stage_errors_are_tagged() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("big.txt"), "0.5 0.5 0.9 1\n").unwrap();
        let text = "geometry = sector 2\nphantom = big.txt\nr_max = 5\n";
        let mut cfg = ExperimentConfig::parse(text, "t", dir.path()).unwrap();
        cfg.out_dir = dir.path().join("out");
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("stage phantom:"), "{err}");
    }
}
