use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use solab_core::decay::{FitOptions, Observable};
use solab_core::model::{FourierTerm, TrapOptions};
use solab_core::transfer::Sampling;
use solab_core::{Contraction, ExpandingMap, SkewModel, TrigForcing};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Default seed for every stochastic stage without its own seed.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub sobolev: SobolevConfig,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub scan: ScanConfig,
}

/// `a cos(2π⟨k,x⟩) + b sin(2π⟨k,x⟩)` per component of `f`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingTerm {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub e: Vec<Vec<i64>>,
    pub c: Vec<Vec<f64>>,
    #[serde(default)]
    pub forcing: Vec<ForcingTerm>,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub s: f64,
    #[serde(default = "default_trap_margin")]
    pub trap_margin: f64,
    #[serde(default = "default_trap_floor")]
    pub trap_floor: f64,
}

fn default_r() -> usize {
    2
}
fn default_trap_margin() -> f64 {
    TrapOptions::default().margin
}
fn default_trap_floor() -> f64 {
    TrapOptions::default().floor
}

impl ModelConfig {
    pub fn trap(&self) -> TrapOptions {
        TrapOptions { margin: self.trap_margin, floor: self.trap_floor }
    }

    pub fn expanding(&self) -> CliResult<ExpandingMap> {
        ExpandingMap::new(self.e.clone()).map_err(|e| CliError::schema("model.e", e))
    }

    pub fn contraction(&self) -> CliResult<Contraction> {
        contraction_from_rows(&self.c).map_err(|m| CliError::schema("model.c", m))
    }

    pub fn forcing(&self, u: usize, d: usize) -> CliResult<TrigForcing> {
        let mut terms = Vec::new();
        for (i, t) in self.forcing.iter().enumerate() {
            let path = format!("model.forcing[{i}]");
            if t.k.len() != u {
                return Err(CliError::schema(&path, format!("k must have length u = {u}")));
            }
            let cos = if t.cos.is_empty() { vec![0.0; d] } else { t.cos.clone() };
            let sin = if t.sin.is_empty() { vec![0.0; d] } else { t.sin.clone() };
            if cos.len() != d || sin.len() != d {
                return Err(CliError::schema(&path, format!("cos and sin must have length d = {d}")));
            }
            if t.k.iter().all(|&v| v == 0) {
                terms.push(FourierTerm { k: t.k.clone(), coeff: cos.iter().map(|&a| (a, 0.0)).collect() });
                continue;
            }
            // a cos θ + b sin θ = ((a − ib)/2) e^{iθ} + ((a + ib)/2) e^{−iθ}
            let plus = cos.iter().zip(&sin).map(|(&a, &b)| (a / 2.0, -b / 2.0)).collect();
            let minus = cos.iter().zip(&sin).map(|(&a, &b)| (a / 2.0, b / 2.0)).collect();
            terms.push(FourierTerm { k: t.k.clone(), coeff: plus });
            terms.push(FourierTerm { k: t.k.iter().map(|v| -v).collect(), coeff: minus });
        }
        TrigForcing::new(u, d, terms).map_err(|e| CliError::schema("model.forcing", e))
    }

    pub fn build(&self) -> CliResult<SkewModel> {
        let e = self.expanding()?;
        let c = self.contraction()?;
        let f = self.forcing(e.dim(), c.dim())?;
        SkewModel::new(e, c, f, self.r, self.s, self.trap()).map_err(|e| CliError::schema("model", e))
    }
}

pub fn contraction_from_rows(rows: &[Vec<f64>]) -> Result<Contraction, String> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err("C must be a nonempty square matrix".into());
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Contraction::new(DMatrix::from_row_slice(d, d, &flat)).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub q: usize,
    pub p_list: Vec<usize>,
    pub gamma: f64,
    /// Sobolev index; the model's `s` when absent.
    pub s: Option<f64>,
    pub initial_cells: usize,
    pub max_cells: usize,
    pub max_triples: u64,
    pub keep_certificates: bool,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            q: 3,
            p_list: vec![1, 2],
            gamma: 0.45,
            s: None,
            initial_cells: 8,
            max_cells: 128,
            max_triples: 5_000_000,
            keep_certificates: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_orbits: usize,
    pub burn_in: usize,
    pub orbit_len: usize,
    pub seed: Option<u64>,
    pub noise_bits: u32,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_orbits: 64, burn_in: 1000, orbit_len: 20_000, seed: None, noise_bits: solab_core::orbit::DEFAULT_NOISE_BITS }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    /// Cells per axis, x axes first; a single entry applies to every axis.
    pub resolution: Vec<usize>,
    pub sampling: Sampling,
    pub tol: f64,
    pub max_iters: usize,
    /// Largest admissible Ulam column leak.
    pub leak_tol: f64,
    pub mc: McConfig,
    /// Number of Ritz values to report (0 skips the eigen-solve).
    pub eigenvalues: usize,
    pub krylov_dim: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            resolution: vec![64],
            sampling: Sampling::default(),
            tol: 1e-10,
            max_iters: 50_000,
            leak_tol: 1e-12,
            mc: McConfig::default(),
            eigenvalues: 4,
            krylov_dim: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaggerConfig {
    pub rho: usize,
    pub mollify_cells: f64,
    pub base_points: usize,
    pub slope_steps: usize,
    pub plateaus: Vec<f64>,
    pub local_splits: usize,
    pub quad_points: usize,
}

impl Default for DaggerConfig {
    fn default() -> Self {
        Self { rho: 0, mollify_cells: 2.0, base_points: 8, slope_steps: 2, plateaus: vec![0.0, 0.5, 0.9], local_splits: 2, quad_points: 32 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SobolevConfig {
    pub resolution: Vec<usize>,
    pub s_values: Vec<f64>,
    pub iterations: usize,
    /// Iterate from which the plateau test starts.
    pub plateau_start: usize,
    /// Plateau holds when `max_{n ≥ start} ‖φ_n‖ ≤ factor · ‖φ_start‖`.
    pub plateau_factor: f64,
    pub pad: f64,
    pub boundary_tol: f64,
    /// Start density: smoothed indicator of `|y| ≤ start_fraction · K₀`.
    pub start_fraction: f64,
    pub start_ramp: f64,
    /// Difference-quotient norms of the fixed density at these non-integer `s`.
    pub dq_s_values: Vec<f64>,
    pub dq_radius: f64,
    pub ulam_tol: f64,
    pub ulam_max_iters: usize,
    pub dagger: Option<DaggerConfig>,
}

impl Default for SobolevConfig {
    fn default() -> Self {
        Self {
            resolution: vec![64],
            s_values: vec![0.0, 0.15, 0.3],
            iterations: 40,
            plateau_start: 20,
            plateau_factor: 1.1,
            pad: 0.5,
            boundary_tol: 1e-8,
            start_fraction: 0.8,
            start_ramp: 0.02,
            dq_s_values: vec![0.15],
            dq_radius: 1.0,
            ulam_tol: 1e-10,
            ulam_max_iters: 50_000,
            dagger: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    pub phi: Observable,
    pub psi: Observable,
    pub n_orbits: usize,
    pub burn_in: usize,
    pub orbit_len: usize,
    pub max_lag: usize,
    pub seed: Option<u64>,
    pub noise_bits: u32,
    pub fit: FitOptions,
    /// Compute `τ_ub` (with the certify settings) for the theoretical interval.
    pub interval: bool,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            phi: Observable::y_coordinate(0),
            psi: Observable::y_coordinate(0),
            n_orbits: 64,
            burn_in: 1000,
            orbit_len: 100_000,
            max_lag: 40,
            seed: None,
            noise_bits: solab_core::orbit::DEFAULT_NOISE_BITS,
            fit: FitOptions::default(),
            interval: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub amplitudes: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Contraction matrices to scan; the model's `C` when empty.
    pub contractions: Vec<Vec<Vec<f64>>>,
    pub q: usize,
    pub depths: Vec<usize>,
    pub kmax: i64,
    pub gamma: f64,
    pub initial_cells: usize,
    pub max_cells: usize,
    pub max_triples: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.0, 0.05, 0.1, 0.2],
            seeds: vec![0, 1, 2],
            contractions: Vec::new(),
            q: 3,
            depths: vec![1, 2],
            kmax: 2,
            gamma: 0.45,
            initial_cells: 8,
            max_cells: 64,
            max_triples: 1_000_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::schema(if path.is_empty() { "<root>".into() } else { path }, e.into_inner().message().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::from_toml_str(&text)
    }

    /// Checks that do not fit the serde schema.
    pub fn validate(&self) -> CliResult<()> {
        let model = self.model.build()?;
        let axes = model.u() + model.d();
        for (name, res) in [("density.resolution", &self.density.resolution), ("sobolev.resolution", &self.sobolev.resolution)] {
            if !(res.len() == 1 || res.len() == axes) || res.contains(&0) {
                return Err(CliError::schema(name, format!("expected 1 or {axes} positive entries")));
            }
        }
        if self.certify.q == 0 || self.certify.p_list.is_empty() || self.certify.p_list.contains(&0) {
            return Err(CliError::schema("certify", "q and every depth in p_list must be >= 1"));
        }
        if self.sobolev.plateau_start > self.sobolev.iterations {
            return Err(CliError::schema("sobolev.plateau_start", "must not exceed sobolev.iterations"));
        }
        if self.sobolev.s_values.iter().any(|&s| !(s >= 0.0)) {
            return Err(CliError::schema("sobolev.s_values", "entries must be nonnegative"));
        }
        for (i, rows) in self.scan.contractions.iter().enumerate() {
            contraction_from_rows(rows).map_err(|m| CliError::schema(format!("scan.contractions[{i}]"), m))?;
        }
        self.decay.phi.validate(model.u(), model.d()).map_err(|e| CliError::schema("decay.phi", e))?;
        self.decay.psi.validate(model.u(), model.d()).map_err(|e| CliError::schema("decay.psi", e))?;
        Ok(())
    }

    /// Applies command-line overrides so that the manifest records the
    /// values actually used.
    pub fn resolve(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = s;
            self.density.mc.seed = Some(s);
            self.decay.seed = Some(s);
        }
        self.density.mc.seed.get_or_insert(self.seed);
        self.decay.seed.get_or_insert(self.seed);
    }
}

/// Per-axis cell counts from a one-entry or full-length resolution list.
pub fn axis_resolution(res: &[usize], u: usize, d: usize) -> (Vec<usize>, Vec<usize>) {
    let full: Vec<usize> = if res.len() == 1 { vec![res[0]; u + d] } else { res.to_vec() };
    (full[..u].to_vec(), full[u..].to_vec())
}
