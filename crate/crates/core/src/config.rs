//! The run configuration document (TOML). Every field has a default;
//! unknown keys are rejected so a typo cannot silently change a dimension.

use serde::{Deserialize, Serialize};

use crate::fdtd::CpmlConfig;
use crate::geometry::{AntennaParams, Geometry, SlotMode};
use crate::materials::Material;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub mesh: MeshConfig,
    pub solver: SolverConfig,
    pub excitation: ExcitationConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub mode: SlotMode,
    /// Load a serialized geometry document instead of building the antenna;
    /// the dimension fields below are then rejected.
    pub file: Option<String>,
    // Table-I dimensions (mm); None uses the per-mode defaults.
    pub l_a: Option<f64>,
    pub w_a: Option<f64>,
    pub l_p: Option<f64>,
    pub w_p: Option<f64>,
    pub s_l: Option<f64>,
    pub s_w: Option<f64>,
    pub l_es: Option<f64>,
    pub x_s: Option<f64>,
    pub y_s: Option<f64>,
    pub a_es: Option<f64>,
    pub b_es: Option<f64>,
    pub h_esiw: Option<f64>,
    pub h_patch: Option<f64>,
    pub t_clad: Option<f64>,
    pub finite_cladding: bool,
    pub eps_esiw: Option<f64>,
    pub tan_delta_esiw: Option<f64>,
    pub eps_patch: Option<f64>,
    pub tan_delta_patch: Option<f64>,
    /// Zero all loss channels (conservation tests).
    pub lossless: bool,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            mode: SlotMode::Transverse,
            file: None,
            l_a: None,
            w_a: None,
            l_p: None,
            w_p: None,
            s_l: None,
            s_w: None,
            l_es: None,
            x_s: None,
            y_s: None,
            a_es: None,
            b_es: None,
            h_esiw: None,
            h_patch: None,
            t_clad: None,
            finite_cladding: false,
            eps_esiw: None,
            tan_delta_esiw: None,
            eps_patch: None,
            tan_delta_patch: None,
            lossless: false,
        }
    }
}

impl GeometryConfig {
    /// Resolve into the antenna parameter vector (dimension route only).
    pub fn to_antenna_params(&self) -> Result<AntennaParams> {
        let mut p = AntennaParams::for_mode(self.mode);
        let set = |target: &mut f64, v: &Option<f64>| {
            if let Some(v) = v {
                *target = *v;
            }
        };
        set(&mut p.l_a, &self.l_a);
        set(&mut p.w_a, &self.w_a);
        set(&mut p.l_p, &self.l_p);
        set(&mut p.w_p, &self.w_p);
        set(&mut p.s_l, &self.s_l);
        set(&mut p.s_w, &self.s_w);
        set(&mut p.x_s, &self.x_s);
        set(&mut p.y_s, &self.y_s);
        set(&mut p.a_es, &self.a_es);
        set(&mut p.h_esiw, &self.h_esiw);
        set(&mut p.h_patch, &self.h_patch);
        set(&mut p.t_clad, &self.t_clad);
        if self.l_es.is_some() {
            p.l_es = self.l_es;
        }
        if self.b_es.is_some() {
            p.b_es = self.b_es;
        }
        p.finite_cladding = self.finite_cladding;
        p.lossless = self.lossless;
        let esiw_eps = self.eps_esiw.unwrap_or(p.esiw_substrate.eps_r);
        let esiw_tan = self.tan_delta_esiw.unwrap_or(p.esiw_substrate.tan_delta);
        p.esiw_substrate = Material::dielectric("esiw_substrate", esiw_eps, esiw_tan);
        let patch_eps = self.eps_patch.unwrap_or(p.patch_substrate.eps_r);
        let patch_tan = self.tan_delta_patch.unwrap_or(p.patch_substrate.tan_delta);
        p.patch_substrate = Material::dielectric("patch_substrate", patch_eps, patch_tan);
        p.validate()?;
        Ok(p)
    }

    /// Build the geometry: either the parametric antenna or a document.
    pub fn build(&self, base_dir: &std::path::Path) -> Result<Geometry> {
        if let Some(file) = &self.file {
            let any_dim = [
                self.l_a, self.w_a, self.l_p, self.w_p, self.s_l, self.s_w, self.l_es, self.x_s,
                self.y_s, self.a_es, self.b_es, self.h_esiw, self.h_patch, self.t_clad,
            ]
            .iter()
            .any(Option::is_some);
            if any_dim {
                return Err(Error::Config(
                    "geometry.file excludes the antenna dimension keys".into(),
                ));
            }
            let path = base_dir.join(file);
            let doc = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("geometry file {}: {e}", path.display())))?;
            Geometry::from_text(&doc)
        } else {
            crate::geometry::build_antenna(&self.to_antenna_params()?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Cell sizes (mm); unset axes fall back to the resolution rule.
    pub dx: Option<f64>,
    pub dy: Option<f64>,
    pub dz: Option<f64>,
    /// Multiplies all cell sizes (quick refinement studies).
    pub resolution_scale: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            dx: None,
            dy: None,
            dz: None,
            resolution_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// CFL safety factor.
    pub safety: f64,
    pub max_steps: usize,
    /// Energy-decay stop threshold relative to peak (dB, negative).
    pub energy_stop_db: f64,
    pub check_interval: usize,
    pub nan_check_interval: usize,
    pub cpml: CpmlConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            safety: 0.99,
            max_steps: 40_000,
            energy_stop_db: -60.0,
            check_interval: 100,
            nan_check_interval: 500,
            cpml: CpmlConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationConfig {
    pub f0_ghz: f64,
    /// Full -20 dB band.
    pub band_ghz: [f64; 2],
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        Self {
            f0_ghz: 28.0,
            band_ghz: [24.0, 32.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub s11_start_ghz: f64,
    pub s11_stop_ghz: f64,
    pub s11_step_ghz: f64,
    /// Far-field (gain curve) frequencies.
    pub ff_ghz: Vec<f64>,
    /// Pattern-cut frequencies.
    pub cut_ghz: Vec<f64>,
    pub theta_step_deg: f64,
    /// Frequency-domain |E| map frequencies over the standard planes.
    pub map_ghz: Vec<f64>,
    pub write_maps: bool,
    /// Time-domain snapshot steps (cavity mid-plane).
    pub snapshot_steps: Vec<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            s11_start_ghz: 24.0,
            s11_stop_ghz: 32.0,
            s11_step_ghz: 0.05,
            ff_ghz: vec![24.0, 25.0, 26.0, 27.0, 28.0, 29.0, 30.0, 31.0, 32.0],
            cut_ghz: vec![28.0],
            theta_step_deg: 1.0,
            map_ghz: vec![28.0],
            write_maps: true,
            snapshot_steps: vec![],
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mesh.resolution_scale <= 0.0 {
            return Err(Error::Config("mesh.resolution_scale must be positive".into()));
        }
        for d in [self.mesh.dx, self.mesh.dy, self.mesh.dz].into_iter().flatten() {
            if d <= 0.0 {
                return Err(Error::Config("mesh cell sizes must be positive".into()));
            }
        }
        if !(self.solver.safety > 0.0 && self.solver.safety <= 1.0) {
            return Err(Error::Config("solver.safety must be in (0, 1]".into()));
        }
        if self.solver.max_steps == 0 {
            return Err(Error::Config("solver.max_steps must be positive".into()));
        }
        if self.solver.energy_stop_db >= 0.0 {
            return Err(Error::Config("solver.energy_stop_db must be negative".into()));
        }
        self.solver.cpml.validate()?;
        let [lo, hi] = self.excitation.band_ghz;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config("excitation.band_ghz must be an increasing pair".into()));
        }
        if self.excitation.f0_ghz <= lo || self.excitation.f0_ghz >= hi {
            return Err(Error::Config("excitation.f0_ghz must lie inside band_ghz".into()));
        }
        if self.output.s11_step_ghz <= 0.0 || self.output.s11_stop_ghz <= self.output.s11_start_ghz {
            return Err(Error::Config("output: s11 grid must be increasing".into()));
        }
        if self.output.theta_step_deg <= 0.0 || self.output.theta_step_deg > 10.0 {
            return Err(Error::Config("output.theta_step_deg must be in (0, 10]".into()));
        }
        Ok(())
    }

    pub fn s11_freqs(&self) -> Vec<f64> {
        let n = ((self.output.s11_stop_ghz - self.output.s11_start_ghz) / self.output.s11_step_ghz)
            .round() as usize;
        (0..=n)
            .map(|i| (self.output.s11_start_ghz + i as f64 * self.output.s11_step_ghz) * 1e9)
            .collect()
    }

    /// The far-field monitor frequency list: gain curve, cuts and maps,
    /// deduplicated and sorted.
    pub fn monitor_freqs(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self
            .output
            .ff_ghz
            .iter()
            .chain(&self.output.cut_ghz)
            .map(|g| g * 1e9)
            .collect();
        f.sort_by(|a, b| a.partial_cmp(b).unwrap());
        f.dedup_by(|a, b| (*a - *b).abs() < 1.0);
        f
    }

    pub fn map_freqs(&self) -> Vec<f64> {
        self.output.map_ghz.iter().map(|g| g * 1e9).collect()
    }

    /// Serialize with all defaults resolved (the run echo).
    pub fn to_resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// Parse and validate a configuration document. Unknown keys, type errors
/// and invariant violations all name the offending key.
pub fn parse_config(doc: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(doc).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Set a scalar parameter by dotted path; the sweep driver's address space.
pub fn set_param(cfg: &mut RunConfig, path: &str, value: f64) -> Result<()> {
    let g = &mut cfg.geometry;
    match path {
        "geometry.l_a" => g.l_a = Some(value),
        "geometry.w_a" => g.w_a = Some(value),
        "geometry.l_p" => g.l_p = Some(value),
        "geometry.w_p" => g.w_p = Some(value),
        "geometry.s_l" => g.s_l = Some(value),
        "geometry.s_w" => g.s_w = Some(value),
        "geometry.l_es" => g.l_es = Some(value),
        "geometry.x_s" => g.x_s = Some(value),
        "geometry.y_s" => g.y_s = Some(value),
        "geometry.a_es" => g.a_es = Some(value),
        "geometry.b_es" => g.b_es = Some(value),
        "geometry.h_esiw" => g.h_esiw = Some(value),
        "geometry.h_patch" => g.h_patch = Some(value),
        "geometry.eps_esiw" => g.eps_esiw = Some(value),
        "geometry.eps_patch" => g.eps_patch = Some(value),
        "geometry.tan_delta_esiw" => g.tan_delta_esiw = Some(value),
        "geometry.tan_delta_patch" => g.tan_delta_patch = Some(value),
        "mesh.resolution_scale" => cfg.mesh.resolution_scale = value,
        "excitation.f0_ghz" => cfg.excitation.f0_ghz = value,
        "solver.safety" => cfg.solver.safety = value,
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter `{other}`; geometry.<dim>, mesh.resolution_scale, \
                 excitation.f0_ghz and solver.safety are sweepable"
            )))
        }
    }
    cfg.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.geometry.mode, SlotMode::Transverse);
        // The resolved echo parses back to itself.
        let echo = cfg.to_resolved_toml();
        assert_eq!(parse_config(&echo).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = parse_config("[geometry]\nslotlength = 2.2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("slotlength"), "error must name the key: {msg}");
    }

    #[test]
    fn table_dimensions_resolve_per_mode() {
        let cfg = parse_config("[geometry]\nmode = \"transverse\"\n").unwrap();
        let p = cfg.geometry.to_antenna_params().unwrap();
        assert_eq!(p.l_a, 23.5);
        assert_eq!(p.x_s, 7.6);
        assert_eq!(p.y_s, 0.0);
        let cfg = parse_config("[geometry]\nmode = \"longitudinal\"\n").unwrap();
        let p = cfg.geometry.to_antenna_params().unwrap();
        assert_eq!(p.l_a, 18.5);
        assert_eq!(p.x_s, 3.8);
        assert_eq!(p.y_s, 2.2);
    }

    #[test]
    fn invariant_violation_names_constraint() {
        let err = parse_config("[geometry]\ns_l = 0.0\n")
            .and_then(|c| c.geometry.to_antenna_params().map(|_| ()))
            .unwrap_err();
        assert!(err.to_string().contains("slot length must be positive"));
    }

    #[test]
    fn sweep_addressing() {
        let mut cfg = RunConfig::default();
        set_param(&mut cfg, "geometry.x_s", 6.6).unwrap();
        assert_eq!(cfg.geometry.x_s, Some(6.6));
        assert!(set_param(&mut cfg, "geometry.bogus", 1.0).is_err());
    }

    #[test]
    fn s11_grid_has_161_default_points() {
        let cfg = RunConfig::default();
        let f = cfg.s11_freqs();
        assert_eq!(f.len(), 161);
        assert_eq!(f[0], 24e9);
        assert_eq!(*f.last().unwrap(), 32e9);
    }
}
