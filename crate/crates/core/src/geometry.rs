//! Parametric solid model of the antenna and rectangular-waveguide helpers.
//!
//! The antenna is described as an ordered list of axis-aligned primitives
//! painted in priority order (higher priority overwrites lower). Zero
//! thickness along exactly one axis marks a primitive as a sheet; the mesher
//! turns PEC sheets into edge masks and air sheets into holes in them.
//!
//! Coordinates are millimetres. The waveguide axis is x, the stack grows
//! along z with the bottom cladding at z = 0, and the cavity axis is y = 0.

use serde::{Deserialize, Serialize};

use crate::materials::Material;
use crate::{Error, Result, C0};

/// Slot orientation relative to the waveguide axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotMode {
    /// Slot long axis across the guide (along y), centred on the cavity axis.
    Transverse,
    /// Slot long axis along the guide (along x), offset from the cavity axis.
    Longitudinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// The full dimension vector of the antenna, one row of defaults per slot
/// mode. Lengths in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaParams {
    pub mode: SlotMode,
    /// Antenna profile (board) length along the guide axis.
    pub l_a: f64,
    /// Antenna profile width.
    pub w_a: f64,
    /// Patch length (x).
    pub l_p: f64,
    /// Patch width (y).
    pub w_p: f64,
    /// Slot length along its long axis.
    pub s_l: f64,
    /// Slot width across its long axis.
    pub s_w: f64,
    /// Cavity length. `None` derives it from the profile length using the
    /// transverse-mode feed margin (see [`AntennaParams::cavity_length`]).
    pub l_es: Option<f64>,
    /// Slot centre distance from the short wall.
    pub x_s: f64,
    /// Slot centre offset from the cavity centre axis.
    pub y_s: f64,
    /// Cavity interior width (broad wall). Defaults to the WR-28 broad wall.
    pub a_es: f64,
    /// Cavity interior height. `None` uses the full ESIW substrate height.
    pub b_es: Option<f64>,
    /// ESIW substrate height.
    pub h_esiw: f64,
    /// Patch substrate height.
    pub h_patch: f64,
    /// Metal cladding thickness. Modelled as zero-thickness sheets unless
    /// `finite_cladding` is set.
    pub t_clad: f64,
    pub finite_cladding: bool,
    /// Feed-board substrate.
    pub esiw_substrate: Material,
    /// Patch-board substrate.
    pub patch_substrate: Material,
    /// Zero all loss tangents and conductivities (conservation tests).
    pub lossless: bool,
}

/// Feed margin of the Table-I transverse row: profile length minus cavity
/// length. Used to derive the cavity length when it is not given.
const FEED_MARGIN_MM: f64 = 8.5;

impl AntennaParams {
    pub fn transverse() -> Self {
        Self {
            mode: SlotMode::Transverse,
            l_a: 23.5,
            w_a: 14.2,
            l_p: 2.4,
            w_p: 2.4,
            s_l: 2.2,
            s_w: 1.0,
            l_es: Some(15.0),
            x_s: 7.6,
            y_s: 0.0,
            a_es: 7.112,
            b_es: None,
            h_esiw: 0.508,
            h_patch: 0.508,
            t_clad: 0.035,
            finite_cladding: false,
            esiw_substrate: Material::rogers_4003(),
            patch_substrate: Material::duroid_5880(),
            lossless: false,
        }
    }

    pub fn longitudinal() -> Self {
        Self {
            mode: SlotMode::Longitudinal,
            l_a: 18.5,
            l_es: None,
            x_s: 3.8,
            y_s: 2.2,
            ..Self::transverse()
        }
    }

    pub fn for_mode(mode: SlotMode) -> Self {
        match mode {
            SlotMode::Transverse => Self::transverse(),
            SlotMode::Longitudinal => Self::longitudinal(),
        }
    }

    /// Cavity interior height: explicit value or the full substrate height.
    pub fn cavity_height(&self) -> f64 {
        self.b_es.unwrap_or(self.h_esiw)
    }

    /// Cavity length: explicit value or derived as `l_a - 8.5 mm` (the
    /// feed margin of the transverse row, which reproduces its 15 mm).
    pub fn cavity_length(&self) -> f64 {
        self.l_es.unwrap_or(self.l_a - FEED_MARGIN_MM)
    }

    /// Slot footprint half-extents along (x, y).
    pub fn slot_half(&self) -> (f64, f64) {
        match self.mode {
            SlotMode::Transverse => (self.s_w / 2.0, self.s_l / 2.0),
            SlotMode::Longitudinal => (self.s_l / 2.0, self.s_w / 2.0),
        }
    }

    /// Polarisation axis of the radiated field (the slot E-field direction:
    /// across the slot).
    pub fn co_pol_axis(&self) -> Axis {
        match self.mode {
            SlotMode::Transverse => Axis::X,
            SlotMode::Longitudinal => Axis::Y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_a", self.l_a),
            ("w_a", self.w_a),
            ("l_p", self.l_p),
            ("w_p", self.w_p),
            ("s_w", self.s_w),
            ("x_s", self.x_s),
            ("a_es", self.a_es),
            ("h_esiw", self.h_esiw),
            ("h_patch", self.h_patch),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.s_l <= 0.0 {
            return Err(Error::invalid("s_l", "slot length must be positive"));
        }
        if self.y_s < 0.0 {
            return Err(Error::invalid("y_s", "must be >= 0"));
        }
        if self.t_clad < 0.0 {
            return Err(Error::invalid("t_clad", "must be >= 0"));
        }
        let l_es = self.cavity_length();
        if l_es <= 0.0 {
            return Err(Error::invalid("l_es", "cavity length must be positive"));
        }
        let b_es = self.cavity_height();
        if b_es <= 0.0 || b_es > self.h_esiw + 1e-12 {
            return Err(Error::invalid(
                "b_es",
                "cavity height must lie within the ESIW substrate",
            ));
        }
        if self.l_p > self.l_a || self.w_p > self.w_a {
            return Err(Error::invalid(
                "l_p/w_p",
                "patch footprint must lie inside the antenna profile",
            ));
        }
        // Slot strictly inside the cavity top wall.
        let (hx, hy) = self.slot_half();
        match self.mode {
            SlotMode::Transverse => {
                if self.s_l > self.a_es {
                    return Err(Error::invalid("s_l", "slot must fit across the cavity (s_l <= a_es)"));
                }
                if self.x_s + hx >= l_es {
                    return Err(Error::invalid("x_s", "slot must lie inside the cavity (x_s + s_w/2 < l_es)"));
                }
                if self.y_s + hy > self.a_es / 2.0 {
                    return Err(Error::invalid("y_s", "slot must stay on the cavity top wall"));
                }
            }
            SlotMode::Longitudinal => {
                if self.y_s + hy >= self.a_es / 2.0 {
                    return Err(Error::invalid("y_s", "slot must lie inside the cavity (y_s + s_w/2 < a_es/2)"));
                }
                if self.x_s + hx >= l_es {
                    return Err(Error::invalid("x_s", "slot must lie inside the cavity (x_s + s_l/2 < l_es)"));
                }
            }
        }
        if self.x_s - hx <= 0.0 {
            return Err(Error::invalid("x_s", "slot must not touch the short wall"));
        }
        self.esiw_substrate.validate()?;
        self.patch_substrate.validate()?;
        Ok(())
    }
}

/// Axis-aligned box (or sheet) with a paint priority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub name: String,
    /// (x0, y0, z0) in mm.
    pub min: [f64; 3],
    /// (x1, y1, z1) in mm.
    pub max: [f64; 3],
    pub material: Material,
    /// Higher priority overwrites lower on overlap.
    pub priority: i32,
}

impl Primitive {
    pub fn new(name: &str, min: [f64; 3], max: [f64; 3], material: Material, priority: i32) -> Self {
        Self {
            name: name.into(),
            min,
            max,
            material,
            priority,
        }
    }

    /// Axis along which the primitive has zero extent, if it is a sheet.
    pub fn sheet_axis(&self) -> Option<Axis> {
        let mut zero = None;
        for (idx, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
            if (self.max[idx] - self.min[idx]).abs() < 1e-12 {
                if zero.is_some() {
                    return None; // degenerate in 2+ axes: treated as invalid
                }
                zero = Some(axis);
            }
        }
        zero
    }

    pub fn validate(&self) -> Result<()> {
        let mut zero_axes = 0;
        for i in 0..3 {
            if self.max[i] < self.min[i] {
                return Err(Error::invalid(
                    "primitive",
                    format!("{}: extent must be non-negative on every axis", self.name),
                ));
            }
            if (self.max[i] - self.min[i]).abs() < 1e-12 {
                zero_axes += 1;
            }
        }
        if zero_axes > 1 {
            return Err(Error::invalid(
                "primitive",
                format!("{}: at most one zero-extent axis (sheet)", self.name),
            ));
        }
        Ok(())
    }

    /// Closed containment with a 1e-9 mm slop so point sampling agrees with
    /// the voxelizer's index arithmetic at boundaries.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - 1e-9 && p[i] <= self.max[i] + 1e-9)
    }
}

/// Waveguide port description: where to inject and record the TE10 mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSpec {
    /// Injection plane (mm). The soft source sheet lives here.
    pub inject_x: f64,
    /// Recording plane (mm), at least half a guided wavelength from both the
    /// injection plane and the first discontinuity.
    pub record_x: f64,
    /// Cross-section interior: y range (mm). Span equals the broad wall.
    pub y: (f64, f64),
    /// Cross-section interior: z range (mm). Span equals the narrow wall.
    pub z: (f64, f64),
}

impl PortSpec {
    /// Broad-wall width (mm).
    pub fn broad_wall(&self) -> f64 {
        self.y.1 - self.y.0
    }

    /// Narrow-wall height (mm).
    pub fn narrow_wall(&self) -> f64 {
        self.z.1 - self.z.0
    }
}

/// Derived positions used by post-processing and run orchestration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub mode: SlotMode,
    /// Slot centre (x, y) in mm.
    pub slot_center: (f64, f64),
    /// Plane of the slotted cavity top wall (mm).
    pub slot_plane_z: f64,
    /// Mid-height of the cavity (mm).
    pub cavity_mid_z: f64,
    /// Mid-height of the patch substrate (mm).
    pub patch_substrate_mid_z: f64,
    /// Plane of the patch metal (mm).
    pub patch_plane_z: f64,
    /// Bounding box of the physical boards and patch (excludes the feed tube
    /// extension to the domain boundary).
    pub structure_min: [f64; 3],
    pub structure_max: [f64; 3],
    /// Cavity open end / short wall positions along x (mm).
    pub mouth_x: f64,
    pub short_x: f64,
    pub co_pol_axis: Axis,
}

/// A complete simulation geometry: primitives, port and domain box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub primitives: Vec<Primitive>,
    pub port: PortSpec,
    /// Simulation domain extent (mm), including the air margin.
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub landmarks: Option<Landmarks>,
    /// Builder log: derived values, snaps, alignment warnings.
    pub notes: Vec<String>,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        for p in &self.primitives {
            p.validate()?;
        }
        for i in 0..3 {
            if self.bbox_max[i] <= self.bbox_min[i] {
                return Err(Error::BoundsMismatch("empty bounding box".into()));
            }
        }
        Ok(())
    }

    /// Primitives sorted by (priority, insertion order); the paint order.
    pub fn painted(&self) -> Vec<&Primitive> {
        let mut v: Vec<(usize, &Primitive)> = self.primitives.iter().enumerate().collect();
        v.sort_by_key(|(idx, p)| (p.priority, *idx));
        v.into_iter().map(|(_, p)| p).collect()
    }

    /// Material at a point, by paint order. Points outside every primitive
    /// are air (the background).
    pub fn material_at(&self, p: [f64; 3]) -> Material {
        let mut mat = Material::air();
        for prim in self.painted() {
            if prim.sheet_axis().is_none() && prim.contains(p) {
                mat = prim.material.clone();
            }
        }
        mat
    }

    /// Largest relative permittivity present.
    pub fn eps_r_max(&self) -> f64 {
        self.primitives
            .iter()
            .filter(|p| !p.material.is_pec())
            .map(|p| p.material.eps_r)
            .fold(1.0, f64::max)
    }

    /// Mirror symmetry of the primitive list about the y = 0 plane: every
    /// primitive's reflection must appear with the same material and
    /// priority (names aside; paired wall sheets map onto each other).
    pub fn is_mirror_symmetric_y(&self) -> bool {
        let key = |p: &Primitive, y: (f64, f64)| {
            (
                p.priority,
                format!(
                    "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {}",
                    p.min[0], p.max[0], p.min[2], p.max[2], y.0, y.1, p.material.name
                ),
            )
        };
        let mut direct: Vec<_> = self.primitives.iter().map(|p| key(p, (p.min[1], p.max[1]))).collect();
        let mut mirrored: Vec<_> = self
            .primitives
            .iter()
            .map(|p| key(p, (-p.max[1] + 0.0, -p.min[1] + 0.0)))
            .collect();
        direct.sort();
        mirrored.sort();
        direct == mirrored
    }

    /// Serialize to the nested key/value text document (TOML).
    pub fn to_text(&self) -> String {
        toml::to_string_pretty(self).expect("geometry serialization cannot fail")
    }

    pub fn from_text(doc: &str) -> Result<Self> {
        let geom: Geometry =
            toml::from_str(doc).map_err(|e| Error::Config(format!("geometry document: {e}")))?;
        geom.validate()?;
        Ok(geom)
    }
}

/// Layout options for [`build_antenna_with`]. The defaults match the 24-32
/// GHz band of interest around 28 GHz.
#[derive(Debug, Clone)]
pub struct BuildOptions {
    /// Design frequency (Hz); sets the half-guided-wavelength clearances.
    pub f0: f64,
    /// Lowest analysis frequency (Hz); sets the quarter-wave air margin.
    pub f_lo: f64,
    /// Extra margin reserved for the absorbing boundary (mm).
    pub cpml_allowance_mm: f64,
    /// Distance from the domain boundary to the injection plane (mm).
    pub port_standoff_mm: f64,
    /// Clearance between the domain face and the board edge on the feed side
    /// (mm); leaves room for the far-field surface.
    pub structure_clearance_mm: f64,
    /// Feed positions are rounded up to this pitch (mm) so the critical
    /// slot/patch planes land on typical grid lines.
    pub layout_pitch_mm: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            f0: 28e9,
            f_lo: 24e9,
            cpml_allowance_mm: 2.2,
            port_standoff_mm: 3.0,
            structure_clearance_mm: 4.2,
            layout_pitch_mm: 0.2,
        }
    }
}

/// TE10 cutoff frequency (Hz) of an air-filled guide with broad wall `a_mm`.
pub fn te10_cutoff_hz(a_mm: f64) -> f64 {
    C0 / (2.0 * a_mm * 1e-3)
}

/// Guided wavelength (mm) of the TE10 mode in an air-filled guide.
pub fn guided_wavelength_mm(f: f64, a_mm: f64) -> Result<f64> {
    let fc = te10_cutoff_hz(a_mm);
    if f <= fc {
        return Err(Error::invalid(
            "f",
            format!("evanescent: no standing-wave pattern (cutoff {:.4} GHz)", fc / 1e9),
        ));
    }
    let lambda0 = C0 / f * 1e3;
    Ok(lambda0 / (1.0 - (fc / f).powi(2)).sqrt())
}

/// Electric-field antinode distances from the short wall of a shorted guide:
/// (2k-1) * lambda_g / 4 for k = 1..n_max. Advisory only; the solver does not
/// require the slot to sit on an antinode.
pub fn standing_wave_peak_positions(f: f64, a_es_mm: f64, n_max: usize) -> Result<Vec<f64>> {
    let lg = guided_wavelength_mm(f, a_es_mm)?;
    Ok((1..=n_max).map(|k| (2 * k - 1) as f64 * lg / 4.0).collect())
}

fn round_up_to(v: f64, pitch: f64) -> f64 {
    (v / pitch).ceil() * pitch
}

/// Build the antenna geometry with default layout options.
pub fn build_antenna(params: &AntennaParams) -> Result<Geometry> {
    build_antenna_with(params, &BuildOptions::default())
}

/// Build the antenna geometry.
///
/// Bottom to top: ground cladding, ESIW substrate with the air cavity carved
/// out (lateral walls and far-end short in PEC), slotted top cladding, patch
/// substrate, patch. The microstrip transition of the physical device is
/// replaced by a straight waveguide extension that runs from the cavity
/// mouth through the feed-side board region and out of the domain, where the
/// absorbing boundary terminates it; the port planes live in that extension.
pub fn build_antenna_with(params: &AntennaParams, opts: &BuildOptions) -> Result<Geometry> {
    params.validate()?;
    let mut notes = Vec::new();

    let l_es = params.cavity_length();
    if params.l_es.is_none() {
        notes.push(format!(
            "cavity length derived from profile: l_es = l_a - {FEED_MARGIN_MM} = {l_es} mm"
        ));
    }
    let b_es = params.cavity_height();
    let a = params.a_es;
    let half_a = a / 2.0;

    // Feed layout along x. Everything is measured from the domain face at
    // x = 0 where the guide extension begins.
    let lg_half = guided_wavelength_mm(opts.f0, a)? / 2.0;
    let clearance = round_up_to(lg_half * 1.005, 0.1);
    let port_x = opts.port_standoff_mm;
    let record_x = round_up_to(port_x + clearance, opts.layout_pitch_mm);
    let (slot_hx, slot_hy) = params.slot_half();
    // Slot near edge measured from the cavity mouth.
    let slot_edge_from_mouth = l_es - params.x_s - slot_hx;
    let mouth_min_feed = record_x + clearance - slot_edge_from_mouth;
    let mouth_min_board = opts.structure_clearance_mm + (params.l_a - l_es);
    let mouth_x = round_up_to(mouth_min_feed.max(mouth_min_board), opts.layout_pitch_mm);
    let short_x = mouth_x + l_es;
    let slot_cx = short_x - params.x_s;
    let slot_cy = params.y_s;
    notes.push(format!(
        "feed layout: port {port_x} mm, record {record_x} mm, mouth {mouth_x} mm, short {short_x} mm"
    ));

    // Board extents. The short wall sits at the board's far edge; the feed
    // side of the board hosts the transition region the guide tunnels
    // through.
    let board_x0 = short_x - params.l_a;
    let board_x1 = short_x;
    let board_y = params.w_a / 2.0;

    let z_clad_bot = 0.0;
    let z_esiw_top = params.h_esiw;
    let z_patch_top = params.h_esiw + params.h_patch;

    let (esiw_mat, patch_mat) = if params.lossless {
        (
            params.esiw_substrate.clone().lossless(),
            params.patch_substrate.clone().lossless(),
        )
    } else {
        (params.esiw_substrate.clone(), params.patch_substrate.clone())
    };

    let mut prims = Vec::new();

    // Substrates.
    prims.push(Primitive::new(
        "esiw_substrate",
        [board_x0, -board_y, 0.0],
        [board_x1, board_y, z_esiw_top],
        esiw_mat,
        10,
    ));
    prims.push(Primitive::new(
        "patch_substrate",
        [board_x0, -board_y, z_esiw_top],
        [board_x1, board_y, z_patch_top],
        patch_mat,
        10,
    ));

    // The empty guide: cavity plus the extension to the domain face.
    prims.push(Primitive::new(
        "guide_air",
        [0.0, -half_a, 0.0],
        [short_x, half_a, b_es],
        Material::air(),
        20,
    ));

    // Guide walls. Zero-thickness PEC sheets by default.
    let wall = |name: &str, min: [f64; 3], max: [f64; 3]| {
        Primitive::new(name, min, max, Material::pec(), 30)
    };
    prims.push(wall("guide_wall_ylo", [0.0, -half_a, 0.0], [short_x, -half_a, b_es]));
    prims.push(wall("guide_wall_yhi", [0.0, half_a, 0.0], [short_x, half_a, b_es]));
    prims.push(wall("short_wall", [short_x, -half_a, 0.0], [short_x, half_a, b_es]));
    // Top/bottom guide walls along the extension; inside the board footprint
    // the claddings take over (coplanar overlap is harmless).
    prims.push(wall("guide_wall_zlo", [0.0, -half_a, 0.0], [mouth_x, half_a, 0.0]));
    prims.push(wall("guide_wall_zhi", [0.0, -half_a, b_es], [mouth_x, half_a, b_es]));

    // Board claddings.
    prims.push(wall(
        "ground_cladding",
        [board_x0, -board_y, z_clad_bot],
        [board_x1, board_y, z_clad_bot],
    ));
    prims.push(wall(
        "esiw_top_cladding",
        [board_x0, -board_y, z_esiw_top],
        [board_x1, board_y, z_esiw_top],
    ));
    if (b_es - params.h_esiw).abs() > 1e-12 {
        // Reduced cavity: its top wall sits inside the substrate.
        prims.push(wall(
            "cavity_top_wall",
            [mouth_x, -half_a, b_es],
            [short_x, half_a, b_es],
        ));
    }

    // The slot: an air sheet at the cavity top wall, higher priority than the
    // metal it pierces.
    let slot_plane_z = b_es;
    prims.push(Primitive::new(
        "slot",
        [slot_cx - slot_hx, slot_cy - slot_hy, slot_plane_z],
        [slot_cx + slot_hx, slot_cy + slot_hy, slot_plane_z],
        Material::air(),
        40,
    ));

    // The patch, centred over the slot.
    let patch_hx = params.l_p / 2.0;
    let patch_hy = params.w_p / 2.0;
    prims.push(Primitive::new(
        "patch",
        [slot_cx - patch_hx, slot_cy - patch_hy, z_patch_top],
        [slot_cx + patch_hx, slot_cy + patch_hy, z_patch_top],
        Material::pec(),
        50,
    ));

    // Slot under the patch footprint? The builder centres them, but
    // explicit parameter exploration may separate them.
    if slot_hx > patch_hx || slot_hy > patch_hy {
        let w = "slot footprint extends beyond the patch footprint".to_string();
        log::warn!("{w}");
        notes.push(format!("warning: {w}"));
    }

    if params.finite_cladding {
        // Replace the board claddings and patch with finite-thickness PEC
        // boxes for convergence studies; the slot becomes a through cut.
        let t = params.t_clad;
        for p in prims.iter_mut() {
            match p.name.as_str() {
                "ground_cladding" => p.min[2] = -t,
                "esiw_top_cladding" => p.max[2] = z_esiw_top + t,
                "slot" => p.max[2] = slot_plane_z + t,
                "patch" => p.max[2] = z_patch_top + t,
                _ => {}
            }
        }
        notes.push(format!("finite cladding boxes, t = {t} mm"));
    }

    // Simulation domain. The quarter-wave air margin plus absorber room on
    // every open face; the feed face is closed by the guide extension.
    let lambda_lo_quarter = C0 / opts.f_lo * 1e3 / 4.0;
    let margin = round_up_to(lambda_lo_quarter + opts.cpml_allowance_mm, 0.1);
    let top = if params.finite_cladding { z_patch_top + params.t_clad } else { z_patch_top };
    let bbox_min = [0.0, -(board_y + margin), -margin];
    let bbox_max = [board_x1 + margin, board_y + margin, top + margin];

    let geom = Geometry {
        primitives: prims,
        port: PortSpec {
            inject_x: port_x,
            record_x,
            y: (-half_a, half_a),
            z: (0.0, b_es),
        },
        bbox_min,
        bbox_max,
        landmarks: Some(Landmarks {
            mode: params.mode,
            slot_center: (slot_cx, slot_cy),
            slot_plane_z,
            cavity_mid_z: b_es / 2.0,
            patch_substrate_mid_z: z_esiw_top + params.h_patch / 2.0,
            patch_plane_z: z_patch_top,
            structure_min: [board_x0, -board_y, if params.finite_cladding { -params.t_clad } else { 0.0 }],
            structure_max: [board_x1, board_y, top],
            mouth_x,
            short_x,
            co_pol_axis: params.co_pol_axis(),
        }),
        notes,
    };
    geom.validate()?;
    Ok(geom)
}

/// A straight matched guide on the same domain as `geom`: the tube continues
/// through the whole domain into the far absorber, with no cavity, boards or
/// slot. Used as the reference (incident-only) run.
pub fn matched_reference(geom: &Geometry) -> Geometry {
    let port = geom.port.clone();
    let (y0, y1) = port.y;
    let (z0, z1) = port.z;
    let x1 = geom.bbox_max[0];
    let mut prims = vec![Primitive::new(
        "guide_air",
        [0.0, y0, z0],
        [x1, y1, z1],
        Material::air(),
        20,
    )];
    let wall = |name: &str, min: [f64; 3], max: [f64; 3]| {
        Primitive::new(name, min, max, Material::pec(), 30)
    };
    prims.push(wall("guide_wall_ylo", [0.0, y0, z0], [x1, y0, z1]));
    prims.push(wall("guide_wall_yhi", [0.0, y1, z0], [x1, y1, z1]));
    prims.push(wall("guide_wall_zlo", [0.0, y0, z0], [x1, y1, z0]));
    prims.push(wall("guide_wall_zhi", [0.0, y0, z1], [x1, y1, z1]));
    Geometry {
        primitives: prims,
        port,
        bbox_min: geom.bbox_min,
        bbox_max: geom.bbox_max,
        landmarks: None,
        notes: vec!["matched straight-guide reference".into()],
    }
}
