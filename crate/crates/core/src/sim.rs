//! Run orchestration: the time loop with source injection, modal recording,
//! running DFTs on surfaces and planes, energy monitoring and stop rules.

use num_complex::Complex64;

use crate::fdtd::{FieldState, Solver};
use crate::geometry::{Axis, Geometry};
use crate::mesh::GridSpec;
use crate::ports::{ModePort, Waveform};
use crate::{Error, Result};

/// Running DFT of the tangential E and H over a rectangle of face cells on
/// one grid plane. E is sampled at whole steps, H at half steps; both are
/// interpolated to the face-cell centres.
#[derive(Debug, Clone)]
pub struct FaceDft {
    pub spec: GridSpec,
    pub normal: Axis,
    /// Outward normal sign along `normal`.
    pub outward: f64,
    /// Grid-plane index along `normal` (must be interior).
    pub plane: usize,
    /// Transverse cell ranges, in ascending axis order (u < v).
    pub u_range: (usize, usize),
    pub v_range: (usize, usize),
    pub freqs: Vec<f64>,
    /// Included face cells (punctures excluded), len nu * nv.
    pub include: Vec<bool>,
    /// Accumulated phasors, len nf * nu * nv.
    pub e_u: Vec<Complex64>,
    pub e_v: Vec<Complex64>,
    pub h_u: Vec<Complex64>,
    pub h_v: Vec<Complex64>,
    /// Scale applied on read-out (the DFT dt factor).
    pub scale: f64,
    scratch: Vec<f64>,
}

impl FaceDft {
    pub fn new(
        spec: &GridSpec,
        normal: Axis,
        outward: f64,
        plane: usize,
        u_range: (usize, usize),
        v_range: (usize, usize),
        freqs: Vec<f64>,
        scale: f64,
    ) -> Result<Self> {
        let n = spec.n(normal);
        if plane == 0 || plane >= n {
            return Err(Error::invalid("face", "plane must be interior"));
        }
        let nu = u_range.1 - u_range.0;
        let nv = v_range.1 - v_range.0;
        let cells = nu * nv;
        Ok(Self {
            spec: *spec,
            normal,
            outward,
            plane,
            u_range,
            v_range,
            freqs: freqs.clone(),
            include: vec![true; cells],
            e_u: vec![Complex64::default(); freqs.len() * cells],
            e_v: vec![Complex64::default(); freqs.len() * cells],
            h_u: vec![Complex64::default(); freqs.len() * cells],
            h_v: vec![Complex64::default(); freqs.len() * cells],
            scale,
            scratch: vec![0.0; 4 * cells],
        })
    }

    /// Transverse axes in ascending order.
    pub fn uv_axes(&self) -> (Axis, Axis) {
        match self.normal {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.u_range.1 - self.u_range.0, self.v_range.1 - self.v_range.0)
    }

    /// Face-cell area (m^2).
    pub fn cell_area(&self) -> f64 {
        let (ua, va) = self.uv_axes();
        self.spec.d(ua) * 1e-3 * self.spec.d(va) * 1e-3
    }

    /// Centre of face cell (u, v) in metres.
    pub fn cell_center_m(&self, u: usize, v: usize) -> [f64; 3] {
        let (ua, va) = self.uv_axes();
        let mut p = [0.0; 3];
        p[self.normal.index()] =
            (self.spec.origin[self.normal.index()] + self.plane as f64 * self.spec.d(self.normal)) * 1e-3;
        p[ua.index()] = (self.spec.origin[ua.index()] + (u as f64 + 0.5) * self.spec.d(ua)) * 1e-3;
        p[va.index()] = (self.spec.origin[va.index()] + (v as f64 + 0.5) * self.spec.d(va)) * 1e-3;
        p
    }

    fn sample_into_scratch(&mut self, st: &FieldState) {
        let p = self.plane;
        let (u0, u1) = self.u_range;
        let (v0, v1) = self.v_range;
        let nu = u1 - u0;
        let cells = nu * (v1 - v0);
        let (eu_s, rest) = self.scratch.split_at_mut(cells);
        let (ev_s, rest) = rest.split_at_mut(cells);
        let (hu_s, hv_s) = rest.split_at_mut(cells);
        match self.normal {
            Axis::Z => {
                // u = x cells, v = y cells; tangential (Ex, Ey), (Hx, Hy).
                for v in v0..v1 {
                    for u in u0..u1 {
                        let c = (v - v0) * nu + (u - u0);
                        eu_s[c] = 0.5 * (st.ex.at(u, v, p) + st.ex.at(u, v + 1, p));
                        ev_s[c] = 0.5 * (st.ey.at(u, v, p) + st.ey.at(u + 1, v, p));
                        hu_s[c] = 0.25
                            * (st.hx.at(u, v, p - 1)
                                + st.hx.at(u + 1, v, p - 1)
                                + st.hx.at(u, v, p)
                                + st.hx.at(u + 1, v, p));
                        hv_s[c] = 0.25
                            * (st.hy.at(u, v, p - 1)
                                + st.hy.at(u, v + 1, p - 1)
                                + st.hy.at(u, v, p)
                                + st.hy.at(u, v + 1, p));
                    }
                }
            }
            Axis::X => {
                // u = y cells, v = z cells; tangential (Ey, Ez), (Hy, Hz).
                for v in v0..v1 {
                    for u in u0..u1 {
                        let c = (v - v0) * nu + (u - u0);
                        eu_s[c] = 0.5 * (st.ey.at(p, u, v) + st.ey.at(p, u, v + 1));
                        ev_s[c] = 0.5 * (st.ez.at(p, u, v) + st.ez.at(p, u + 1, v));
                        hu_s[c] = 0.25
                            * (st.hy.at(p - 1, u, v)
                                + st.hy.at(p, u, v)
                                + st.hy.at(p - 1, u + 1, v)
                                + st.hy.at(p, u + 1, v));
                        hv_s[c] = 0.25
                            * (st.hz.at(p - 1, u, v)
                                + st.hz.at(p, u, v)
                                + st.hz.at(p - 1, u, v + 1)
                                + st.hz.at(p, u, v + 1));
                    }
                }
            }
            Axis::Y => {
                // u = x cells, v = z cells; tangential (Ex, Ez), (Hx, Hz).
                for v in v0..v1 {
                    for u in u0..u1 {
                        let c = (v - v0) * nu + (u - u0);
                        eu_s[c] = 0.5 * (st.ex.at(u, p, v) + st.ex.at(u, p, v + 1));
                        ev_s[c] = 0.5 * (st.ez.at(u, p, v) + st.ez.at(u + 1, p, v));
                        hu_s[c] = 0.25
                            * (st.hx.at(u, p - 1, v)
                                + st.hx.at(u + 1, p - 1, v)
                                + st.hx.at(u, p, v)
                                + st.hx.at(u + 1, p, v));
                        hv_s[c] = 0.25
                            * (st.hz.at(u, p - 1, v)
                                + st.hz.at(u, p, v)
                                + st.hz.at(u, p - 1, v + 1)
                                + st.hz.at(u, p, v + 1));
                    }
                }
            }
        }
    }

    pub fn accumulate(&mut self, st: &FieldState) {
        self.sample_into_scratch(st);
        let t_e = st.time();
        let t_h = t_e - 0.5 * st.dt;
        let (nu, nv) = self.cells();
        let cells = nu * nv;
        for (fi, &f) in self.freqs.iter().enumerate() {
            let w = -2.0 * std::f64::consts::PI * f;
            let (se, ce) = (w * t_e).sin_cos();
            let (sh, ch) = (w * t_h).sin_cos();
            let base = fi * cells;
            let (eu_s, rest) = self.scratch.split_at(cells);
            let (ev_s, rest) = rest.split_at(cells);
            let (hu_s, hv_s) = rest.split_at(cells);
            for c in 0..cells {
                self.e_u[base + c] += Complex64::new(eu_s[c] * ce, eu_s[c] * se);
                self.e_v[base + c] += Complex64::new(ev_s[c] * ce, ev_s[c] * se);
                self.h_u[base + c] += Complex64::new(hu_s[c] * ch, hu_s[c] * sh);
                self.h_v[base + c] += Complex64::new(hv_s[c] * ch, hv_s[c] * sh);
            }
        }
    }

    /// Scaled phasors of one face cell at frequency index `fi`.
    pub fn phasors(&self, fi: usize, u: usize, v: usize) -> (Complex64, Complex64, Complex64, Complex64) {
        let (nu, nv) = self.cells();
        let c = fi * nu * nv + (v - self.v_range.0) * nu + (u - self.u_range.0);
        (
            self.e_u[c] * self.scale,
            self.e_v[c] * self.scale,
            self.h_u[c] * self.scale,
            self.h_v[c] * self.scale,
        )
    }

    pub fn included(&self, u: usize, v: usize) -> bool {
        let (nu, _) = self.cells();
        self.include[(v - self.v_range.0) * nu + (u - self.u_range.0)]
    }

    /// Outward time-averaged power flux (W-scaled by the DFT normalization)
    /// through the included cells at frequency index `fi`.
    pub fn flux(&self, fi: usize) -> f64 {
        let (u0, u1) = self.u_range;
        let (v0, v1) = self.v_range;
        let da = self.cell_area();
        let mut p = 0.0;
        for v in v0..v1 {
            for u in u0..u1 {
                if !self.included(u, v) {
                    continue;
                }
                let (eu, ev, hu, hv) = self.phasors(fi, u, v);
                // (E x H*) . n for n along the normal axis: in ascending
                // (u, v) order the cross product is right-handed for X and Z
                // normals and left-handed for Y.
                let handed = if self.normal == Axis::Y { -1.0 } else { 1.0 };
                p += handed * self.outward * 0.5 * (eu * hv.conj() - ev * hu.conj()).re * da;
            }
        }
        p
    }
}

/// Closed DFT surface for the far-field transform: six faces with outward
/// normals. Faces may be punctured where a shielded feed crosses them.
#[derive(Debug, Clone)]
pub struct Huygens {
    pub faces: Vec<FaceDft>,
    pub freqs: Vec<f64>,
}

impl Huygens {
    /// Box from plane indices (x0, x1, y0, y1, z0, z1).
    pub fn from_planes(
        spec: &GridSpec,
        planes: [usize; 6],
        freqs: Vec<f64>,
        scale: f64,
    ) -> Result<Self> {
        let [x0, x1, y0, y1, z0, z1] = planes;
        if x0 >= x1 || y0 >= y1 || z0 >= z1 {
            return Err(Error::invalid("huygens", "degenerate box"));
        }
        let faces = vec![
            FaceDft::new(spec, Axis::X, -1.0, x0, (y0, y1), (z0, z1), freqs.clone(), scale)?,
            FaceDft::new(spec, Axis::X, 1.0, x1, (y0, y1), (z0, z1), freqs.clone(), scale)?,
            FaceDft::new(spec, Axis::Y, -1.0, y0, (x0, x1), (z0, z1), freqs.clone(), scale)?,
            FaceDft::new(spec, Axis::Y, 1.0, y1, (x0, x1), (z0, z1), freqs.clone(), scale)?,
            FaceDft::new(spec, Axis::Z, -1.0, z0, (x0, x1), (y0, y1), freqs.clone(), scale)?,
            FaceDft::new(spec, Axis::Z, 1.0, z1, (x0, x1), (y0, y1), freqs.clone(), scale)?,
        ];
        Ok(Self { faces, freqs })
    }

    pub fn accumulate(&mut self, st: &FieldState) {
        for f in self.faces.iter_mut() {
            f.accumulate(st);
        }
    }

    /// Total outward flux (radiated power) at frequency index `fi`.
    pub fn radiated_power(&self, fi: usize) -> f64 {
        self.faces.iter().map(|f| f.flux(fi)).sum()
    }

    pub fn freq_index(&self, f: f64) -> Option<usize> {
        self.freqs
            .iter()
            .position(|&g| (g - f).abs() <= 1e-6 * f.max(1.0))
    }
}

/// Running DFT of the centre-interpolated E components over one z cell
/// layer; the source of frequency-domain field maps.
#[derive(Debug, Clone)]
pub struct PlaneDft {
    pub spec: GridSpec,
    /// Cell layer index along z.
    pub layer: usize,
    pub freqs: Vec<f64>,
    /// Phasors per component, len nf * nx * ny.
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
    pub ez: Vec<Complex64>,
    pub scale: f64,
    scratch: Vec<f64>,
}

impl PlaneDft {
    pub fn new(spec: &GridSpec, layer: usize, freqs: Vec<f64>, scale: f64) -> Result<Self> {
        if layer >= spec.nz {
            return Err(Error::invalid("plane", "layer outside the domain"));
        }
        let cells = spec.nx * spec.ny;
        Ok(Self {
            spec: *spec,
            layer,
            freqs: freqs.clone(),
            ex: vec![Complex64::default(); freqs.len() * cells],
            ey: vec![Complex64::default(); freqs.len() * cells],
            ez: vec![Complex64::default(); freqs.len() * cells],
            scale,
            scratch: vec![0.0; 3 * cells],
        })
    }

    fn sample(&mut self, st: &FieldState) {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let k = self.layer;
        let cells = nx * ny;
        let (sx, rest) = self.scratch.split_at_mut(cells);
        let (sy, sz) = rest.split_at_mut(cells);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                sx[c] = 0.25
                    * (st.ex.at(i, j, k) + st.ex.at(i, j + 1, k) + st.ex.at(i, j, k + 1) + st.ex.at(i, j + 1, k + 1));
                sy[c] = 0.25
                    * (st.ey.at(i, j, k) + st.ey.at(i + 1, j, k) + st.ey.at(i, j, k + 1) + st.ey.at(i + 1, j, k + 1));
                sz[c] = 0.25
                    * (st.ez.at(i, j, k) + st.ez.at(i + 1, j, k) + st.ez.at(i, j + 1, k) + st.ez.at(i + 1, j + 1, k));
            }
        }
    }

    pub fn accumulate(&mut self, st: &FieldState) {
        self.sample(st);
        let t = st.time();
        let cells = self.spec.nx * self.spec.ny;
        for (fi, &f) in self.freqs.iter().enumerate() {
            let w = -2.0 * std::f64::consts::PI * f;
            let (s, c) = (w * t).sin_cos();
            let base = fi * cells;
            let (sx, rest) = self.scratch.split_at(cells);
            let (sy, sz) = rest.split_at(cells);
            for idx in 0..cells {
                self.ex[base + idx] += Complex64::new(sx[idx] * c, sx[idx] * s);
                self.ey[base + idx] += Complex64::new(sy[idx] * c, sy[idx] * s);
                self.ez[base + idx] += Complex64::new(sz[idx] * c, sz[idx] * s);
            }
        }
    }

    /// |E| map at frequency index `fi`, row-major (x fastest).
    pub fn magnitude_map(&self, fi: usize) -> Vec<f64> {
        let cells = self.spec.nx * self.spec.ny;
        let base = fi * cells;
        (0..cells)
            .map(|c| {
                let s = self.scale;
                ((self.ex[base + c] * s).norm_sqr()
                    + (self.ey[base + c] * s).norm_sqr()
                    + (self.ez[base + c] * s).norm_sqr())
                .sqrt()
            })
            .collect()
    }

    /// Instantaneous |E| snapshot over the layer (no DFT).
    pub fn snapshot(st: &FieldState, spec: &GridSpec, layer: usize) -> Vec<f64> {
        let (nx, ny) = (spec.nx, spec.ny);
        let k = layer;
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let ex = 0.25
                    * (st.ex.at(i, j, k) + st.ex.at(i, j + 1, k) + st.ex.at(i, j, k + 1) + st.ex.at(i, j + 1, k + 1));
                let ey = 0.25
                    * (st.ey.at(i, j, k) + st.ey.at(i + 1, j, k) + st.ey.at(i, j, k + 1) + st.ey.at(i + 1, j, k + 1));
                let ez = 0.25
                    * (st.ez.at(i, j, k) + st.ez.at(i + 1, j, k) + st.ez.at(i, j + 1, k) + st.ez.at(i + 1, j + 1, k));
                out[j * nx + i] = (ex * ex + ey * ey + ez * ez).sqrt();
            }
        }
        out
    }
}

/// Stop condition for the time loop.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub max_steps: usize,
    /// Stop when total energy decays this far below its peak (dB, negative),
    /// evaluated after the source has gone quiet. `None` runs to max_steps.
    pub energy_decay_db: Option<f64>,
    pub check_interval: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_steps: 40_000,
            energy_decay_db: Some(-60.0),
            check_interval: 100,
        }
    }
}

/// Everything a single run produces.
pub struct RunOutput {
    /// Modal amplitude at the record plane, one sample per step, sample n at
    /// t = (n + 1) dt.
    pub record: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub converged: bool,
    /// (step, energy J) trace at the check interval.
    pub energy: Vec<(usize, f64)>,
    pub huygens: Option<Huygens>,
    /// Incident-power monitor (a single face at the record plane).
    pub flux: Option<FaceDft>,
    pub plane_dfts: Vec<PlaneDft>,
    /// Instantaneous |E| snapshots: (step, layer, data).
    pub snapshots: Vec<(usize, usize, Vec<f64>)>,
    /// Modal series at the extra record planes, same order as requested.
    pub extra_records: Vec<Vec<f64>>,
    pub wall_secs: f64,
}

/// A configured single simulation: solver plus port plus monitors.
pub struct Simulation {
    pub solver: Solver,
    pub port: ModePort,
    pub inject_plane: usize,
    pub record_plane: usize,
    pub waveform: Waveform,
    pub amplitude: f64,
    pub huygens: Option<Huygens>,
    pub flux: Option<FaceDft>,
    pub plane_dfts: Vec<PlaneDft>,
    /// (layer, steps) snapshot requests.
    pub snapshot_requests: Vec<(usize, Vec<usize>)>,
    /// Additional modal record planes (transmission measurements).
    pub extra_record_planes: Vec<usize>,
}

impl Simulation {
    pub fn new(solver: Solver, port: ModePort, inject_plane: usize, record_plane: usize, waveform: Waveform) -> Self {
        Self {
            solver,
            port,
            inject_plane,
            record_plane,
            waveform,
            amplitude: 1.0,
            huygens: None,
            flux: None,
            plane_dfts: Vec::new(),
            snapshot_requests: Vec::new(),
            extra_record_planes: Vec::new(),
        }
    }

    /// Run the leapfrog loop until the stop rule fires.
    pub fn run(mut self, stop: &StopRule) -> Result<RunOutput> {
        let t_start = std::time::Instant::now();
        let quiet = self.waveform.quiet_after();
        let decay = stop.energy_decay_db.map(|db| 10f64.powf(db / 10.0));
        let mut record = Vec::with_capacity(stop.max_steps);
        let mut extra_records: Vec<Vec<f64>> = vec![Vec::new(); self.extra_record_planes.len()];
        let mut energy = Vec::new();
        let mut peak = 0.0f64;
        let mut converged = stop.energy_decay_db.is_none();
        let mut steps = 0;

        for n in 0..stop.max_steps {
            let measure = stop.check_interval > 0 && (n + 1) % stop.check_interval == 0;
            let e = if measure {
                Some(self.solver.step_measure_energy()?)
            } else {
                self.solver.step()?;
                None
            };
            let t = self.solver.state.time();
            let drive = self.amplitude * self.waveform.eval(t);
            self.port
                .inject(&mut self.solver.state.ez, self.inject_plane, drive);
            record.push(self.port.overlap(&self.solver.state.ez, self.record_plane));
            for (idx, &plane) in self.extra_record_planes.iter().enumerate() {
                extra_records[idx].push(self.port.overlap(&self.solver.state.ez, plane));
            }

            if let Some(h) = self.huygens.as_mut() {
                h.accumulate(&self.solver.state);
            }
            if let Some(fl) = self.flux.as_mut() {
                fl.accumulate(&self.solver.state);
            }
            for p in self.plane_dfts.iter_mut() {
                p.accumulate(&self.solver.state);
            }
            steps = n + 1;

            if let Some(e) = e {
                energy.push((steps, e));
                peak = peak.max(e);
                if steps % 2000 == 0 {
                    log::debug!(
                        "step {steps}: energy {:.3e} J ({:.1} dB re peak)",
                        e,
                        10.0 * (e / peak.max(1e-300)).log10()
                    );
                }
                if let Some(ratio) = decay {
                    if t > quiet && peak > 0.0 && e <= peak * ratio {
                        converged = true;
                        break;
                    }
                }
            }
        }

        let mut snapshots = Vec::new();
        for (layer, want) in &self.snapshot_requests {
            for &s in want {
                if s == steps {
                    snapshots.push((s, *layer, PlaneDft::snapshot(&self.solver.state, self.solver.spec(), *layer)));
                }
            }
        }

        Ok(RunOutput {
            record,
            dt: self.solver.dt(),
            steps,
            converged,
            energy,
            huygens: self.huygens,
            flux: self.flux,
            plane_dfts: self.plane_dfts,
            snapshots,
            extra_records,
            wall_secs: t_start.elapsed().as_secs_f64(),
        })
    }
}

/// Huygens box for an antenna geometry: the structure bounding box inflated
/// by a few cells, clamped at least four cells inside the absorber, with the
/// feed-tube crossing punched out of the feed-side face.
pub fn huygens_for_antenna(
    geom: &Geometry,
    spec: &GridSpec,
    cpml_cells: usize,
    freqs: Vec<f64>,
    scale: f64,
) -> Result<Huygens> {
    let lm = geom
        .landmarks
        .as_ref()
        .ok_or_else(|| Error::invalid("geometry", "no landmarks; not an antenna build"))?;
    let pad = 6usize;
    let min_plane = |_axis: Axis| cpml_cells + 4;
    let max_plane = |axis: Axis| spec.n(axis) - cpml_cells - 4;
    let plane_of = |axis: Axis, v: f64| spec.snap_plane(axis, v);

    let x0 = (plane_of(Axis::X, lm.structure_min[0]).saturating_sub(2))
        .max(min_plane(Axis::X))
        .min(max_plane(Axis::X));
    let x1 = (plane_of(Axis::X, lm.structure_max[0]) + pad)
        .max(min_plane(Axis::X))
        .min(max_plane(Axis::X));
    let y0 = (plane_of(Axis::Y, lm.structure_min[1]).saturating_sub(pad)).max(min_plane(Axis::Y));
    let y1 = (plane_of(Axis::Y, lm.structure_max[1]) + pad).min(max_plane(Axis::Y));
    let z0 = (plane_of(Axis::Z, lm.structure_min[2]).saturating_sub(pad)).max(min_plane(Axis::Z));
    let z1 = (plane_of(Axis::Z, lm.structure_max[2]) + pad).min(max_plane(Axis::Z));
    if x0 + 2 > plane_of(Axis::X, lm.structure_min[0]) {
        return Err(Error::invalid(
            "huygens",
            "no room between the absorber and the structure on the feed side",
        ));
    }

    let mut h = Huygens::from_planes(spec, [x0, x1, y0, y1, z0, z1], freqs, scale)?;

    // Punch the guide-tube crossing out of the feed-side (x-low) face: the
    // shielded guided wave must not register as radiation. One extra cell
    // around the tube excludes its wall lines.
    let (ty0, ty1) = (
        spec.snap_plane(Axis::Y, geom.port.y.0).saturating_sub(1),
        spec.snap_plane(Axis::Y, geom.port.y.1) + 1,
    );
    let (tz0, tz1) = (
        spec.snap_plane(Axis::Z, geom.port.z.0).saturating_sub(1),
        spec.snap_plane(Axis::Z, geom.port.z.1) + 1,
    );
    let face = &mut h.faces[0];
    let (nu, _) = face.cells();
    for v in face.v_range.0..face.v_range.1 {
        for u in face.u_range.0..face.u_range.1 {
            // u = y cells, v = z cells on an x face.
            if u >= ty0 && u < ty1 && v >= tz0 && v < tz1 {
                face.include[(v - face.v_range.0) * nu + (u - face.u_range.0)] = false;
            }
        }
    }
    Ok(h)
}

/// The surface must sit in air: every included face cell of every face.
pub fn check_huygens_in_air(h: &Huygens, grid: &crate::mesh::YeeGrid) -> Result<()> {
    for face in &h.faces {
        let (ua, va) = face.uv_axes();
        for v in face.v_range.0..face.v_range.1 {
            for u in face.u_range.0..face.u_range.1 {
                if !face.included(u, v) {
                    continue;
                }
                // The two cell layers sharing the face plane.
                for side in 0..2usize {
                    let layer = if side == 0 {
                        face.plane.saturating_sub(1)
                    } else {
                        face.plane.min(grid.spec.n(face.normal) - 1)
                    };
                    let mut idx = [0usize; 3];
                    idx[face.normal.index()] = layer;
                    idx[ua.index()] = u;
                    idx[va.index()] = v;
                    if (*grid.cell_eps_r.at(idx[0], idx[1], idx[2]) - 1.0).abs() > 1e-9 {
                        return Err(Error::invalid(
                            "huygens",
                            format!("surface intersects non-air material at cell {idx:?}"),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdtd::{all_pec, CpmlConfig, SolverOpts};
    use crate::mesh::vacuum_grid;

    fn small_spec() -> GridSpec {
        GridSpec {
            dx: 1.0,
            dy: 1.0,
            dz: 1.0,
            nx: 16,
            ny: 16,
            nz: 16,
            origin: [0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn face_dft_of_static_field_is_rectangular_integral() {
        // A constant Ex over one step accumulates amplitude * dt at f = 0.
        let spec = small_spec();
        let grid = vacuum_grid(&spec);
        let solver = Solver::new(grid, all_pec(), &CpmlConfig::default(), SolverOpts::default()).unwrap();
        let mut st = solver.state.clone();
        st.step = 1;
        for v in st.ex.data.iter_mut() {
            *v = 2.0;
        }
        let mut face = FaceDft::new(&spec, Axis::Z, 1.0, 8, (2, 6), (3, 7), vec![0.0], st.dt).unwrap();
        face.accumulate(&st);
        let (eu, _, _, _) = face.phasors(0, 2, 3);
        approx::assert_relative_eq!(eu.re, 2.0 * st.dt, max_relative = 1e-12);
        assert!(eu.im.abs() < 1e-30);
    }

    #[test]
    fn plane_dft_layer_bounds_checked() {
        let spec = small_spec();
        assert!(PlaneDft::new(&spec, 99, vec![1e9], 1.0).is_err());
        assert!(PlaneDft::new(&spec, 5, vec![1e9], 1.0).is_ok());
    }

    #[test]
    fn simulation_is_bitwise_deterministic() {
        // Identical configs give byte-identical records, independent of the
        // rayon thread count in use.
        let run = || {
            let spec = GridSpec {
                dx: 0.5,
                dy: 0.5,
                dz: 0.5,
                nx: 60,
                ny: 16,
                nz: 12,
                origin: [0.0, -4.0, 0.0],
            };
            let grid = vacuum_grid(&spec);
            let mut bcs = all_pec();
            bcs[0][1] = crate::fdtd::FaceBc::Cpml;
            let solver = Solver::new(grid, bcs, &CpmlConfig::default(), SolverOpts::default()).unwrap();
            let port = ModePort::te10(
                &spec,
                &crate::geometry::PortSpec {
                    inject_x: 2.0,
                    record_x: 8.0,
                    y: (-4.0, 4.0),
                    z: (0.0, 3.0),
                },
            )
            .unwrap();
            let sim = Simulation::new(solver, port, 4, 16, Waveform::gaussian_sine(28e9, 8e9));
            let stop = StopRule {
                max_steps: 400,
                energy_decay_db: None,
                check_interval: 100,
            };
            sim.run(&stop).unwrap().record
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn unconverged_flag_on_truncation() {
        let spec = small_spec();
        let grid = vacuum_grid(&spec);
        let solver = Solver::new(grid, all_pec(), &CpmlConfig::default(), SolverOpts::default()).unwrap();
        let port = ModePort::te10(
            &spec,
            &crate::geometry::PortSpec {
                inject_x: 2.0,
                record_x: 8.0,
                y: (1.0, 14.0),
                z: (1.0, 5.0),
            },
        )
        .unwrap();
        let sim = Simulation::new(solver, port, 4, 8, Waveform::gaussian_sine(28e9, 8e9));
        let stop = StopRule {
            max_steps: 10,
            energy_decay_db: Some(-60.0),
            check_interval: 5,
        };
        let out = sim.run(&stop).unwrap();
        assert!(!out.converged);
        assert_eq!(out.steps, 10);
    }
}
