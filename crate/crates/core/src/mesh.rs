//! Voxelization of a [`Geometry`] onto the staggered Yee grid.
//!
//! Each E-edge receives the arithmetic average of the permittivity of the
//! cells sharing it; PEC primitives mask tangential edges, and higher
//! priority air primitives (slots) reopen them. Zero-thickness PEC sheets
//! snap to the nearest edge plane; every snap is recorded.

use serde::{Deserialize, Serialize};

use crate::geometry::{Axis, Geometry};
use crate::materials::MaterialKind;
use crate::{Error, Result, C0, EPS0};

/// Dense 3-D array, x-fastest storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Array3<T> {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<T>,
}

impl<T> Array3<T> {
    #[inline(always)]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    #[inline(always)]
    pub fn at(&self, i: usize, j: usize, k: usize) -> &T {
        &self.data[self.idx(i, j, k)]
    }

    #[inline(always)]
    pub fn at_mut(&mut self, i: usize, j: usize, k: usize) -> &mut T {
        let idx = self.idx(i, j, k);
        &mut self.data[idx]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

impl<T: Clone + Default> Array3<T> {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            nx,
            ny,
            nz,
            data: vec![T::default(); nx * ny * nz],
        }
    }
}

/// Uniform grid description. Cell sizes in mm, origin at the low corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dx <= 0.0 || self.dy <= 0.0 || self.dz <= 0.0 {
            return Err(Error::invalid("grid", "cell sizes must be positive"));
        }
        if self.nx < 8 || self.ny < 8 || self.nz < 8 {
            return Err(Error::invalid("grid", "at least 8 cells per axis"));
        }
        Ok(())
    }

    pub fn d(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.dx,
            Axis::Y => self.dy,
            Axis::Z => self.dz,
        }
    }

    pub fn n(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
            Axis::Z => self.nz,
        }
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Grid extent (mm), low and high corners.
    pub fn extent(&self) -> ([f64; 3], [f64; 3]) {
        let hi = [
            self.origin[0] + self.nx as f64 * self.dx,
            self.origin[1] + self.ny as f64 * self.dy,
            self.origin[2] + self.nz as f64 * self.dz,
        ];
        (self.origin, hi)
    }

    /// Nearest grid-plane index along `axis` for coordinate `v` (mm), ties
    /// rounding toward +inf. Clamped to valid plane range.
    pub fn snap_plane(&self, axis: Axis, v: f64) -> usize {
        let a = axis.index();
        let d = self.d(axis);
        let s = (v - self.origin[a]) / d;
        let idx = (s + 0.5).floor() as i64;
        idx.clamp(0, self.n(axis) as i64) as usize
    }

    /// Coordinate (mm) of plane `idx` along `axis`.
    pub fn plane_coord(&self, axis: Axis, idx: usize) -> f64 {
        self.origin[axis.index()] + idx as f64 * self.d(axis)
    }

    /// Cell layer whose centre is closest to `v` (mm), clamped.
    pub fn cell_layer(&self, axis: Axis, v: f64) -> usize {
        let a = axis.index();
        let s = (v - self.origin[a]) / self.d(axis) - 0.5;
        let idx = (s + 0.5).floor() as i64;
        idx.clamp(0, self.n(axis) as i64 - 1) as usize
    }
}

/// Which field component an array belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EComp {
    Ex,
    Ey,
    Ez,
}

impl EComp {
    pub const ALL: [EComp; 3] = [EComp::Ex, EComp::Ey, EComp::Ez];

    /// Edge direction.
    pub fn axis(self) -> Axis {
        match self {
            EComp::Ex => Axis::X,
            EComp::Ey => Axis::Y,
            EComp::Ez => Axis::Z,
        }
    }

    pub fn index(self) -> usize {
        self.axis().index()
    }

    pub fn name(self) -> &'static str {
        match self {
            EComp::Ex => "Ex",
            EComp::Ey => "Ey",
            EComp::Ez => "Ez",
        }
    }

    /// Staggered array dims for `nx, ny, nz` cells: +1 node on the two axes
    /// transverse to the edge direction.
    pub fn dims(self, spec: &GridSpec) -> (usize, usize, usize) {
        match self {
            EComp::Ex => (spec.nx, spec.ny + 1, spec.nz + 1),
            EComp::Ey => (spec.nx + 1, spec.ny, spec.nz + 1),
            EComp::Ez => (spec.nx + 1, spec.ny + 1, spec.nz),
        }
    }

    /// Position (mm) of edge (i, j, k): half-offset along the edge axis.
    pub fn pos(self, spec: &GridSpec, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut p = [
            spec.origin[0] + i as f64 * spec.dx,
            spec.origin[1] + j as f64 * spec.dy,
            spec.origin[2] + k as f64 * spec.dz,
        ];
        p[self.index()] += spec.d(self.axis()) / 2.0;
        p
    }
}

/// Discretized material-coefficient volume on the staggered grid.
#[derive(Debug, Clone)]
pub struct YeeGrid {
    pub spec: GridSpec,
    /// Absolute permittivity (F/m) per E-edge, one array per component.
    pub eps: [Array3<f64>; 3],
    /// Effective conductivity (S/m) per E-edge.
    pub sigma: [Array3<f64>; 3],
    /// Tangential-E forcing mask per E-edge.
    pub pec: [Array3<bool>; 3],
    /// Relative permittivity sampled at cell centres (exports, previews).
    pub cell_eps_r: Array3<f64>,
    /// Voxelization log: snaps and notes.
    pub report: Vec<String>,
}

impl YeeGrid {
    /// Bitwise mirror symmetry about the mid y-plane of all coefficient and
    /// mask arrays. Only meaningful when the geometry and grid are both
    /// symmetric about that plane.
    pub fn is_mirror_symmetric_y(&self) -> bool {
        fn sym<T: PartialEq>(a: &Array3<T>) -> bool {
            for k in 0..a.nz {
                for j in 0..a.ny {
                    let jm = a.ny - 1 - j;
                    for i in 0..a.nx {
                        if a.at(i, j, k) != a.at(i, jm, k) {
                            return false;
                        }
                    }
                }
            }
            true
        }
        self.eps.iter().all(sym) && self.sigma.iter().all(sym) && self.pec.iter().all(sym)
    }

    pub fn masked_edge_count(&self, comp: EComp) -> usize {
        self.pec[comp.index()].data.iter().filter(|&&m| m).count()
    }
}

/// Memory footprint (bytes) of a solver allocation on `spec`: six field
/// arrays, per-edge update coefficients and the CPML auxiliary slabs.
pub fn solver_bytes(spec: &GridSpec, cpml_cells: usize) -> u64 {
    let (nx, ny, nz) = (spec.nx as u64, spec.ny as u64, spec.nz as u64);
    let e_edges = nx * (ny + 1) * (nz + 1) + (nx + 1) * ny * (nz + 1) + (nx + 1) * (ny + 1) * nz;
    let h_faces = (nx + 1) * ny * nz + nx * (ny + 1) * nz + nx * ny * (nz + 1);
    // e fields + ca + cb, h fields.
    let mut bytes = (3 * e_edges + h_faces) * 8;
    // psi slabs: for each field component, two convolution terms, each
    // restricted to the two slabs of one axis.
    let t = cpml_cells as u64;
    let slab = |n: u64, others: u64| 2 * t.min(n) * others;
    bytes += 8
        * (2 * slab(ny, nx * nz) + 2 * slab(nz, nx * ny) + 2 * slab(nx, ny * nz)
            + 2 * slab(nz, nx * ny)
            + 2 * slab(nx, ny * nz)
            + 2 * slab(ny, nx * nz));
    bytes
}

/// Coarsest grid that satisfies the resolution rule, with a memory estimate.
///
/// Rule: cell size at most lambda0 / (15 sqrt(eps_r_max)) at `f_max`, with a
/// hard floor of four cells across the narrowest primitive extent on each
/// axis (sheets constrain only their in-plane extents).
pub fn estimate_cells(geom: &Geometry, f_max: f64) -> Result<(GridSpec, u64)> {
    if f_max <= 0.0 {
        return Err(Error::invalid("f_max", "must be positive"));
    }
    let lambda0_mm = C0 / f_max * 1e3;
    let rule = lambda0_mm / (15.0 * geom.eps_r_max().sqrt());

    let mut cap = [rule, rule, rule];
    for p in &geom.primitives {
        for a in 0..3 {
            let ext = p.max[a] - p.min[a];
            if ext > 1e-12 {
                cap[a] = cap[a].min(ext / 4.0);
            }
        }
    }

    let origin = [
        (geom.bbox_min[0] / cap[0]).floor() * cap[0],
        (geom.bbox_min[1] / cap[1]).floor() * cap[1],
        (geom.bbox_min[2] / cap[2]).floor() * cap[2],
    ];
    let count = |lo: f64, hi: f64, d: f64| (((hi - lo) / d).ceil() as usize).max(8);
    let spec = GridSpec {
        dx: cap[0],
        dy: cap[1],
        dz: cap[2],
        nx: count(origin[0], geom.bbox_max[0], cap[0]),
        ny: count(origin[1], geom.bbox_max[1], cap[1]),
        nz: count(origin[2], geom.bbox_max[2], cap[2]),
        origin,
    };
    spec.validate()?;
    let bytes = solver_bytes(&spec, 10);
    log::info!(
        "resolution: rule {:.4} mm, thin-feature caps ({:.4}, {:.4}, {:.4}) mm, {} cells, ~{} MB",
        rule,
        cap[0],
        cap[1],
        cap[2],
        spec.cells(),
        bytes / (1 << 20)
    );
    Ok((spec, bytes))
}

/// A mask-free vacuum grid; test rigs and analytic scenes.
pub fn vacuum_grid(spec: &GridSpec) -> YeeGrid {
    let eps: [Array3<f64>; 3] = EComp::ALL.map(|c| {
        let (nx, ny, nz) = c.dims(spec);
        let mut a = Array3::new(nx, ny, nz);
        a.data.fill(EPS0);
        a
    });
    let sigma: [Array3<f64>; 3] = EComp::ALL.map(|c| {
        let (nx, ny, nz) = c.dims(spec);
        Array3::new(nx, ny, nz)
    });
    let pec: [Array3<bool>; 3] = EComp::ALL.map(|c| {
        let (nx, ny, nz) = c.dims(spec);
        Array3::new(nx, ny, nz)
    });
    let mut cell_eps_r = Array3::new(spec.nx, spec.ny, spec.nz);
    cell_eps_r.data.fill(1.0);
    YeeGrid {
        spec: *spec,
        eps,
        sigma,
        pec,
        cell_eps_r,
        report: vec!["vacuum".into()],
    }
}

/// Integer footprint of a primitive after snapping to grid planes.
#[derive(Debug, Clone, Copy)]
struct SnappedBox {
    lo: [usize; 3],
    hi: [usize; 3],
}

fn snap_box(spec: &GridSpec, min: [f64; 3], max: [f64; 3]) -> SnappedBox {
    let axes = [Axis::X, Axis::Y, Axis::Z];
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        lo[a] = spec.snap_plane(axes[a], min[a]);
        hi[a] = spec.snap_plane(axes[a], max[a]);
    }
    SnappedBox { lo, hi }
}

fn snap_distance(spec: &GridSpec, axis: Axis, v: f64) -> f64 {
    let idx = spec.snap_plane(axis, v);
    (spec.plane_coord(axis, idx) - v).abs()
}

/// Paint or clear the tangential-edge mask of one component for a snapped
/// box. `along` is the edge axis; edges are selected with their full segment
/// inside the closed box along the edge axis; transverse planes are closed
/// for PEC paint and strictly interior for air clears (the rim stays metal).
fn apply_mask(mask: &mut Array3<bool>, b: &SnappedBox, comp: EComp, set: bool) {
    let along = comp.index();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3]; // inclusive
    for a in 0..3 {
        if a == along {
            if b.hi[a] <= b.lo[a] {
                return; // zero extent along the edge axis: no whole edge fits
            }
            lo[a] = b.lo[a];
            hi[a] = b.hi[a] - 1;
        } else if set {
            lo[a] = b.lo[a];
            hi[a] = b.hi[a];
        } else {
            // Strict interior: clearing must not eat the rim.
            if b.hi[a] < b.lo[a] + 2 && b.hi[a] != b.lo[a] {
                return;
            }
            if b.hi[a] == b.lo[a] {
                // Sheet plane: the mask lives exactly on it.
                lo[a] = b.lo[a];
                hi[a] = b.hi[a];
            } else {
                lo[a] = b.lo[a] + 1;
                hi[a] = b.hi[a] - 1;
            }
        }
        hi[a] = hi[a].min(match a {
            0 => mask.nx - 1,
            1 => mask.ny - 1,
            _ => mask.nz - 1,
        });
    }
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                *mask.at_mut(i, j, k) = set;
            }
        }
    }
}

/// Sheet masking: tangential components on the snapped plane.
fn apply_sheet_mask(mask: &mut [Array3<bool>; 3], b: &SnappedBox, normal: Axis, set: bool) {
    for comp in EComp::ALL {
        if comp.axis() == normal {
            continue;
        }
        apply_mask(&mut mask[comp.index()], b, comp, set);
    }
}

/// Convert a geometry into the staggered material-coefficient volume.
///
/// `f_design` is the frequency at which loss tangents are folded into the
/// effective conductivity.
pub fn voxelize(geom: &Geometry, spec: &GridSpec, f_design: f64) -> Result<YeeGrid> {
    spec.validate()?;
    geom.validate()?;
    let (lo, hi) = spec.extent();
    for a in 0..3 {
        if geom.bbox_min[a] < lo[a] - 1e-9 || geom.bbox_max[a] > hi[a] + 1e-9 {
            return Err(Error::BoundsMismatch(format!(
                "geometry bbox [{:.3}, {:.3}] exceeds grid extent [{:.3}, {:.3}] on axis {a}",
                geom.bbox_min[a], geom.bbox_max[a], lo[a], hi[a]
            )));
        }
    }

    let mut report = Vec::new();
    let painted = geom.painted();

    // Under-resolution and sheet bookkeeping.
    for p in &painted {
        let sheet = p.sheet_axis();
        for a in 0..3 {
            let ext = p.max[a] - p.min[a];
            let d = [spec.dx, spec.dy, spec.dz][a];
            if ext > 1e-12 && ext < d / 2.0 {
                return Err(Error::UnderResolved(format!(
                    "{}: extent {:.4} mm on axis {} is under half a cell ({:.4} mm)",
                    p.name, ext, a, d
                )));
            }
        }
        if let Some(axis) = sheet {
            let d = snap_distance(spec, axis, p.min[axis.index()]);
            if d > 1e-9 {
                let msg = format!(
                    "sheet `{}` snapped to nearest edge plane, snap {:.4} mm",
                    p.name, d
                );
                log::debug!("{msg}");
                report.push(msg);
            }
        }
    }

    // Cell materials by paint order: cells whose centre lies in the box.
    let mut cell_eps_r = Array3::<f64>::new(spec.nx, spec.ny, spec.nz);
    let mut cell_sigma = Array3::<f64>::new(spec.nx, spec.ny, spec.nz);
    cell_eps_r.data.fill(1.0);
    for p in &painted {
        if p.sheet_axis().is_some() {
            continue;
        }
        let d = [spec.dx, spec.dy, spec.dz];
        let mut lo_c = [0usize; 3];
        let mut hi_c = [0usize; 3];
        let mut empty = false;
        for a in 0..3 {
            // Same 1e-9 mm boundary slop as Primitive::contains.
            let tol = 1e-9 / d[a];
            let s0 = (p.min[a] - spec.origin[a]) / d[a] - 0.5;
            let s1 = (p.max[a] - spec.origin[a]) / d[a] - 0.5;
            let i0 = (s0 - tol).ceil().max(0.0) as usize;
            let n = [spec.nx, spec.ny, spec.nz][a];
            let i1f = (s1 + tol).floor();
            if i1f < i0 as f64 {
                empty = true;
                break;
            }
            lo_c[a] = i0;
            hi_c[a] = (i1f as usize).min(n - 1);
        }
        if empty {
            continue;
        }
        let (eps_r, sig) = if p.material.is_pec() {
            (1.0, 0.0)
        } else {
            (p.material.eps_r, p.material.sigma_eff(f_design))
        };
        for k in lo_c[2]..=hi_c[2] {
            for j in lo_c[1]..=hi_c[1] {
                for i in lo_c[0]..=hi_c[0] {
                    *cell_eps_r.at_mut(i, j, k) = eps_r;
                    *cell_sigma.at_mut(i, j, k) = sig;
                }
            }
        }
    }

    // Per-edge averaging over the cells sharing each edge.
    let mut eps: [Array3<f64>; 3] = EComp::ALL.map(|c| {
        let (nx, ny, nz) = c.dims(spec);
        Array3::new(nx, ny, nz)
    });
    let mut sigma = eps.clone();
    for comp in EComp::ALL {
        let ci = comp.index();
        let (nx, ny, nz) = comp.dims(spec);
        // The two axes transverse to the edge.
        let (ta, tb) = match comp {
            EComp::Ex => (1, 2),
            EComp::Ey => (0, 2),
            EComp::Ez => (0, 1),
        };
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let mut idx3 = [i, j, k];
                    // Cell index along the edge axis equals the edge index.
                    let mut sum_e = 0.0;
                    let mut sum_s = 0.0;
                    let mut n = 0.0;
                    let base = idx3;
                    for da in 0..2usize {
                        for db in 0..2usize {
                            idx3 = base;
                            let (pa, pb) = (base[ta] as i64 - 1 + da as i64, base[tb] as i64 - 1 + db as i64);
                            let na = [spec.nx, spec.ny, spec.nz][ta] as i64;
                            let nb = [spec.nx, spec.ny, spec.nz][tb] as i64;
                            if pa < 0 || pa >= na || pb < 0 || pb >= nb {
                                continue;
                            }
                            idx3[ta] = pa as usize;
                            idx3[tb] = pb as usize;
                            sum_e += *cell_eps_r.at(idx3[0], idx3[1], idx3[2]);
                            sum_s += *cell_sigma.at(idx3[0], idx3[1], idx3[2]);
                            n += 1.0;
                        }
                    }
                    if n > 0.0 {
                        *eps[ci].at_mut(i, j, k) = sum_e / n * EPS0;
                        *sigma[ci].at_mut(i, j, k) = sum_s / n;
                    } else {
                        *eps[ci].at_mut(i, j, k) = EPS0;
                    }
                }
            }
        }
    }

    // PEC masks in paint order; air/dielectric clears reopen lower-priority
    // metal (slots).
    let mut pec: [Array3<bool>; 3] = EComp::ALL.map(|c| {
        let (nx, ny, nz) = c.dims(spec);
        Array3::new(nx, ny, nz)
    });
    for p in &painted {
        let b = snap_box(spec, p.min, p.max);
        match (p.material.kind, p.sheet_axis()) {
            (MaterialKind::Pec, Some(axis)) => apply_sheet_mask(&mut pec, &b, axis, true),
            (MaterialKind::Pec, None) => {
                for comp in EComp::ALL {
                    apply_mask(&mut pec[comp.index()], &b, comp, true);
                }
            }
            (_, Some(axis)) => apply_sheet_mask(&mut pec, &b, axis, false),
            (_, None) => {
                for comp in EComp::ALL {
                    apply_mask(&mut pec[comp.index()], &b, comp, false);
                }
            }
        }
    }

    report.push(format!(
        "voxelized {} cells; masked edges: Ex {}, Ey {}, Ez {}",
        spec.cells(),
        pec[0].data.iter().filter(|&&m| m).count(),
        pec[1].data.iter().filter(|&&m| m).count(),
        pec[2].data.iter().filter(|&&m| m).count(),
    ));

    Ok(YeeGrid {
        spec: *spec,
        eps,
        sigma,
        pec,
        cell_eps_r,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_antenna, AntennaParams, Primitive};
    use crate::materials::Material;
    use approx::assert_relative_eq;

    fn block_geometry(eps_r: f64) -> Geometry {
        Geometry {
            primitives: vec![Primitive::new(
                "block",
                [-1.0, -1.0, -1.0],
                [11.0, 11.0, 11.0],
                Material::dielectric("fill", eps_r, 0.0),
                10,
            )],
            port: crate::geometry::PortSpec {
                inject_x: 0.0,
                record_x: 0.0,
                y: (0.0, 1.0),
                z: (0.0, 1.0),
            },
            bbox_min: [0.0, 0.0, 0.0],
            bbox_max: [10.0, 10.0, 10.0],
            landmarks: None,
            notes: vec![],
        }
    }

    fn spec_10mm(d: f64) -> GridSpec {
        let n = (10.0 / d).round() as usize;
        GridSpec {
            dx: d,
            dy: d,
            dz: d,
            nx: n,
            ny: n,
            nz: n,
            origin: [0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn homogeneous_fill_gives_uniform_eps() {
        let geom = block_geometry(3.55);
        let grid = voxelize(&geom, &spec_10mm(1.0), 28e9).unwrap();
        for comp in EComp::ALL {
            for v in &grid.eps[comp.index()].data {
                assert_relative_eq!(*v, 3.55 * EPS0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn sheet_snap_is_logged() {
        let mut geom = block_geometry(1.0);
        geom.primitives.push(Primitive::new(
            "sheet",
            [0.0, 0.0, 1.016],
            [10.0, 10.0, 1.016],
            Material::pec(),
            20,
        ));
        let spec = spec_10mm(0.1);
        let grid = voxelize(&geom, &spec, 28e9).unwrap();
        let snap = grid
            .report
            .iter()
            .find(|n| n.contains("sheet") && n.contains("snap"))
            .expect("snap logged");
        assert!(snap.contains("0.0160"), "snap note: {snap}");
        // Snapped onto z = 1.0: the whole tangential plane at k=10 is masked.
        assert!(*grid.pec[0].at(5, 5, 10));
        assert!(!*grid.pec[0].at(5, 5, 9));
    }

    #[test]
    fn under_resolved_dielectric_rejected() {
        let mut geom = block_geometry(1.0);
        geom.primitives.push(Primitive::new(
            "film",
            [0.0, 0.0, 5.0],
            [10.0, 10.0, 5.3],
            Material::dielectric("thin", 2.0, 0.0),
            20,
        ));
        let err = voxelize(&geom, &spec_10mm(1.0), 28e9).unwrap_err();
        assert!(err.to_string().contains("under-resolved"));
    }

    #[test]
    fn bbox_outside_grid_rejected() {
        let mut geom = block_geometry(1.0);
        geom.bbox_max = [20.0, 10.0, 10.0];
        let err = voxelize(&geom, &spec_10mm(1.0), 28e9).unwrap_err();
        assert!(matches!(err, Error::BoundsMismatch(_)));
    }

    /// Independent oracle: edge permittivity recomputed from scratch with
    /// point-in-box tests at the adjacent cell centres, in paint order.
    fn oracle_eps(geom: &Geometry, spec: &GridSpec, comp: EComp, i: usize, j: usize, k: usize) -> f64 {
        let (ta, tb) = match comp {
            EComp::Ex => (1, 2),
            EComp::Ey => (0, 2),
            EComp::Ez => (0, 1),
        };
        let d = [spec.dx, spec.dy, spec.dz];
        let n = [spec.nx, spec.ny, spec.nz];
        let mut sum = 0.0;
        let mut cnt = 0.0;
        for da in 0..2i64 {
            for db in 0..2i64 {
                let mut cell = [i as i64, j as i64, k as i64];
                cell[ta] += da - 1;
                cell[tb] += db - 1;
                if cell[ta] < 0 || cell[ta] >= n[ta] as i64 || cell[tb] < 0 || cell[tb] >= n[tb] as i64 {
                    continue;
                }
                let centre = [
                    spec.origin[0] + (cell[0] as f64 + 0.5) * d[0],
                    spec.origin[1] + (cell[1] as f64 + 0.5) * d[1],
                    spec.origin[2] + (cell[2] as f64 + 0.5) * d[2],
                ];
                let m = geom.material_at(centre);
                sum += if m.is_pec() { 1.0 } else { m.eps_r };
                cnt += 1.0;
            }
        }
        if cnt > 0.0 {
            sum / cnt * EPS0
        } else {
            EPS0
        }
    }

    #[test]
    fn eps_matches_point_in_box_oracle() {
        let geom = build_antenna(&AntennaParams::transverse()).unwrap();
        let spec = spec_for(&geom, 0.4, 0.4, 0.254);
        let grid = voxelize(&geom, &spec, 28e9).unwrap();
        for comp in EComp::ALL {
            let arr = &grid.eps[comp.index()];
            for k in 0..arr.nz {
                for j in 0..arr.ny {
                    for i in 0..arr.nx {
                        let want = oracle_eps(&geom, &spec, comp, i, j, k);
                        let got = *arr.at(i, j, k);
                        assert!(
                            (want - got).abs() <= 1e-9 * EPS0,
                            "{:?} ({i},{j},{k}): {} vs {}",
                            comp,
                            got / EPS0,
                            want / EPS0
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn slot_opening_edge_counts_at_100um() {
        // Table-I transverse geometry at 0.1 mm: slot footprint 1.0 x 2.2 mm
        // = 10 x 22 cells in the top cavity wall. Expected unmasked edge
        // counts derived independently: edges along x span the 10 columns on
        // the 21 interior y-lines; edges along y span the 22 rows on the 9
        // interior x-lines.
        let geom = build_antenna(&AntennaParams::transverse()).unwrap();
        let d = 0.1;
        let spec = GridSpec {
            dx: d,
            dy: d,
            dz: d,
            nx: ((geom.bbox_max[0] - geom.bbox_min[0]) / d).ceil() as usize,
            ny: ((geom.bbox_max[1] - geom.bbox_min[1]) / d).ceil() as usize,
            nz: ((geom.bbox_max[2] - geom.bbox_min[2]) / d).ceil() as usize,
            origin: [
                (geom.bbox_min[0] / d).floor() * d,
                (geom.bbox_min[1] / d).floor() * d,
                (geom.bbox_min[2] / d).floor() * d,
            ],
        };
        let grid = voxelize(&geom, &spec, 28e9).unwrap();
        let lm = geom.landmarks.clone().unwrap();
        let kz = spec.snap_plane(Axis::Z, lm.slot_plane_z);

        // Slot footprint in plane indices.
        let i0 = spec.snap_plane(Axis::X, lm.slot_center.0 - 0.5);
        let i1 = spec.snap_plane(Axis::X, lm.slot_center.0 + 0.5);
        let j0 = spec.snap_plane(Axis::Y, lm.slot_center.1 - 1.1);
        let j1 = spec.snap_plane(Axis::Y, lm.slot_center.1 + 1.1);
        assert_eq!(i1 - i0, 10);
        assert_eq!(j1 - j0, 22);

        // Count unmasked tangential edges inside the cladding plane.
        let mut open_ex = 0;
        let mut open_ey = 0;
        for j in j0.saturating_sub(5)..=j1 + 5 {
            for i in i0.saturating_sub(5)..=i1 + 5 {
                if !grid.pec[0].at(i, j, kz) {
                    open_ex += 1;
                }
                if !grid.pec[1].at(i, j, kz) {
                    open_ey += 1;
                }
            }
        }
        assert_eq!(open_ex, 10 * 21, "x-directed edges in the opening");
        assert_eq!(open_ey, 9 * 22, "y-directed edges in the opening");
    }

    #[test]
    fn estimate_cells_for_table_geometry() {
        // Oracle: lambda0(32 GHz)/(15 sqrt(3.55)) = 0.3315 mm; the 1 mm slot
        // width caps x at 0.25 mm; the 0.508 mm substrates cap z at 0.127 mm.
        let geom = build_antenna(&AntennaParams::transverse()).unwrap();
        let (spec, bytes) = estimate_cells(&geom, 32e9).unwrap();
        let rule = C0 / 32e9 * 1e3 / (15.0 * 3.55f64.sqrt());
        assert_relative_eq!(rule, 0.33149, max_relative = 1e-3);
        assert_relative_eq!(spec.dx, 0.25, max_relative = 1e-12);
        assert_relative_eq!(spec.dy, rule, max_relative = 1e-12);
        assert_relative_eq!(spec.dz, 0.127, max_relative = 1e-12);
        assert!(bytes > 0);
    }

    #[test]
    fn estimate_cells_air_box() {
        let geom = block_geometry(1.0);
        let (spec, _) = estimate_cells(&geom, 30e9).unwrap();
        let rule = C0 / 30e9 * 1e3 / 15.0;
        assert!(spec.dx <= rule + 1e-12);
        assert_relative_eq!(spec.dx, 0.66621, max_relative = 1e-3);
    }

    #[test]
    fn estimate_cells_rejects_zero_fmax() {
        let geom = block_geometry(1.0);
        assert!(estimate_cells(&geom, 0.0).is_err());
    }

    #[test]
    fn voxelized_transverse_grid_mirror_symmetry_at_aligned_resolution() {
        // At 0.1 mm every transverse-mode feature lands symmetrically about
        // y = 0, so the voxelized arrays must mirror bitwise.
        let geom = build_antenna(&AntennaParams::transverse()).unwrap();
        let d = 0.1;
        let ny = ((geom.bbox_max[1] - geom.bbox_min[1]) / d).round() as usize;
        let spec = GridSpec {
            dx: 0.2,
            dy: d,
            dz: 0.127,
            nx: ((geom.bbox_max[0] - geom.bbox_min[0]) / 0.2).ceil() as usize,
            ny,
            nz: ((geom.bbox_max[2] - geom.bbox_min[2]) / 0.127).ceil() as usize,
            origin: [
                (geom.bbox_min[0] / 0.2).floor() * 0.2,
                -(ny as f64) * d / 2.0,
                (geom.bbox_min[2] / 0.127).floor() * 0.127,
            ],
        };
        let grid = voxelize(&geom, &spec, 28e9).unwrap();
        assert!(grid.is_mirror_symmetric_y());
    }

    #[test]
    fn cell_sampling_is_pure_point_sampling() {
        // Resolution monotonicity rests on cells sampling the geometry at
        // their centres and nothing else; check both a coarse and a halved
        // grid against direct geometry sampling.
        let geom = build_antenna(&AntennaParams::transverse()).unwrap();
        for (dx, dz) in [(0.4, 0.254), (0.2, 0.127)] {
            let spec = spec_for(&geom, dx, dx, dz);
            let grid = voxelize(&geom, &spec, 28e9).unwrap();
            for k in (0..spec.nz).step_by(3) {
                for j in (0..spec.ny).step_by(3) {
                    for i in (0..spec.nx).step_by(3) {
                        let c = [
                            spec.origin[0] + (i as f64 + 0.5) * spec.dx,
                            spec.origin[1] + (j as f64 + 0.5) * spec.dy,
                            spec.origin[2] + (k as f64 + 0.5) * spec.dz,
                        ];
                        let m = geom.material_at(c);
                        let want = if m.is_pec() { 1.0 } else { m.eps_r };
                        assert_eq!(*grid.cell_eps_r.at(i, j, k), want, "at {c:?}");
                    }
                }
            }
        }
    }

    fn spec_for(geom: &Geometry, dx: f64, dy: f64, dz: f64) -> GridSpec {
        let origin = [
            (geom.bbox_min[0] / dx).floor() * dx,
            (geom.bbox_min[1] / dy).floor() * dy,
            (geom.bbox_min[2] / dz).floor() * dz,
        ];
        GridSpec {
            dx,
            dy,
            dz,
            nx: ((geom.bbox_max[0] - origin[0]) / dx).ceil() as usize,
            ny: ((geom.bbox_max[1] - origin[1]) / dy).ceil() as usize,
            nz: ((geom.bbox_max[2] - origin[2]) / dz).ceil() as usize,
            origin,
        }
    }
}
