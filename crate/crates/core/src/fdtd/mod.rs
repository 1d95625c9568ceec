//! Yee-grid leapfrog solver with CPML absorbing boundaries.
//!
//! E components live on cell edges, H components on cell faces. One step
//! advances H by half a step from curl E, then E by a full step from curl H
//! with per-edge permittivity and conductivity; convolution corrections are
//! applied inside the absorber slabs and PEC-masked edges are forced to
//! zero through their update coefficients.
//!
//! Updates are data-parallel over z-slabs; every entry is written by exactly
//! one task from read-only neighbour data, so results are bitwise identical
//! regardless of the thread count.

pub mod cpml;

use rayon::prelude::*;

use crate::mesh::{Array3, EComp, GridSpec, YeeGrid};
use crate::{Error, Result, C0, MU0};

pub use cpml::CpmlConfig;

use cpml::{AxisProfiles, PsiTerm};

/// Boundary condition on one domain face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceBc {
    /// Tangential E forced to zero (default backing everywhere).
    Pec,
    /// Magnetic wall: tangential H mirrors oddly; used by symmetry and
    /// plane-wave test rigs.
    Pmc,
    /// PEC-backed convolutional PML slab.
    Cpml,
}

/// Per-axis (low, high) face conditions.
pub type Boundaries = [[FaceBc; 2]; 3];

pub fn all_pec() -> Boundaries {
    [[FaceBc::Pec; 2]; 3]
}

pub fn all_cpml() -> Boundaries {
    [[FaceBc::Cpml; 2]; 3]
}

/// Courant-stable time step (seconds): safety / (c sqrt(sum 1/d^2)).
pub fn cfl_dt(spec: &GridSpec, safety: f64) -> f64 {
    let inv2 = |d_mm: f64| {
        let d = d_mm * 1e-3;
        1.0 / (d * d)
    };
    safety / (C0 * (inv2(spec.dx) + inv2(spec.dy) + inv2(spec.dz)).sqrt())
}

/// The six staggered field arrays plus step bookkeeping.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub ex: Array3<f64>,
    pub ey: Array3<f64>,
    pub ez: Array3<f64>,
    pub hx: Array3<f64>,
    pub hy: Array3<f64>,
    pub hz: Array3<f64>,
    pub step: usize,
    pub dt: f64,
}

impl FieldState {
    pub fn new(spec: &GridSpec, dt: f64) -> Self {
        let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
        Self {
            ex: Array3::new(nx, ny + 1, nz + 1),
            ey: Array3::new(nx + 1, ny, nz + 1),
            ez: Array3::new(nx + 1, ny + 1, nz),
            hx: Array3::new(nx + 1, ny, nz),
            hy: Array3::new(nx, ny + 1, nz),
            hz: Array3::new(nx, ny, nz + 1),
            step: 0,
            dt,
        }
    }

    pub fn e(&self, comp: EComp) -> &Array3<f64> {
        match comp {
            EComp::Ex => &self.ex,
            EComp::Ey => &self.ey,
            EComp::Ez => &self.ez,
        }
    }

    pub fn e_mut(&mut self, comp: EComp) -> &mut Array3<f64> {
        match comp {
            EComp::Ex => &mut self.ex,
            EComp::Ey => &mut self.ey,
            EComp::Ez => &mut self.ez,
        }
    }

    /// Time of the current E fields (seconds).
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn max_abs_e(&self) -> f64 {
        [&self.ex, &self.ey, &self.ez]
            .iter()
            .flat_map(|a| a.data.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOpts {
    /// CFL safety factor in (0, 1].
    pub safety: f64,
    /// Steps between non-finite screens.
    pub nan_check_interval: usize,
    /// Test hook: negate the E-side curl, breaking the curl adjointness the
    /// energy balance rests on. The validation suite uses it to prove the
    /// conservation check can fail.
    pub debug_negate_e_curl: bool,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            safety: 0.99,
            nan_check_interval: 500,
            debug_negate_e_curl: false,
        }
    }
}

/// The time-stepping engine: material coefficients, absorber state and the
/// field arrays.
pub struct Solver {
    pub grid: YeeGrid,
    pub state: FieldState,
    pub bcs: Boundaries,
    ca: [Array3<f64>; 3],
    cb: [Array3<f64>; 3],
    prof: [AxisProfiles; 3],
    psi_e: Vec<PsiTerm>,
    psi_h: Vec<PsiTerm>,
    inv_d: [f64; 3],
    dtmu: f64,
    cell_volume: f64,
    opts: SolverOpts,
}

impl Solver {
    pub fn new(grid: YeeGrid, bcs: Boundaries, cpml: &CpmlConfig, opts: SolverOpts) -> Result<Self> {
        if !(opts.safety > 0.0 && opts.safety <= 1.0) {
            return Err(Error::invalid("safety", "must be in (0, 1]"));
        }
        let pmc_axes = (0..3)
            .filter(|&a| bcs[a].contains(&FaceBc::Pmc))
            .count();
        if pmc_axes > 1 {
            return Err(Error::invalid("boundaries", "PMC faces on at most one axis"));
        }
        let n_cells = [grid.spec.nx, grid.spec.ny, grid.spec.nz];
        for a in 0..3 {
            if bcs[a].contains(&FaceBc::Pmc) && bcs[a].contains(&FaceBc::Cpml) {
                return Err(Error::invalid("boundaries", "PMC and CPML cannot share an axis"));
            }
            if bcs[a].contains(&FaceBc::Cpml) && n_cells[a] <= 2 * cpml.thickness {
                return Err(Error::invalid(
                    "boundaries",
                    format!("axis {a}: {} cells cannot host {}-cell CPML slabs", n_cells[a], cpml.thickness),
                ));
            }
        }
        let spec = grid.spec;
        let dt = cfl_dt(&spec, opts.safety);
        let state = FieldState::new(&spec, dt);

        // Fold mask and materials into the two update coefficients.
        let mut ca: [Array3<f64>; 3] = EComp::ALL.map(|c| {
            let (nx, ny, nz) = c.dims(&spec);
            Array3::new(nx, ny, nz)
        });
        let mut cb = ca.clone();
        for comp in EComp::ALL {
            let ci = comp.index();
            for idx in 0..grid.eps[ci].len() {
                if grid.pec[ci].data[idx] {
                    continue; // ca = cb = 0 pins the edge at zero
                }
                let eps = grid.eps[ci].data[idx];
                let sig = grid.sigma[ci].data[idx];
                let f = sig * dt / (2.0 * eps);
                ca[ci].data[idx] = (1.0 - f) / (1.0 + f);
                cb[ci].data[idx] = (dt / eps) / (1.0 + f);
            }
        }

        let d_m = [spec.dx * 1e-3, spec.dy * 1e-3, spec.dz * 1e-3];
        let n = [spec.nx, spec.ny, spec.nz];
        let prof: [AxisProfiles; 3] = std::array::from_fn(|a| {
            AxisProfiles::new(
                cpml,
                n[a],
                d_m[a],
                dt,
                bcs[a][0] == FaceBc::Cpml,
                bcs[a][1] == FaceBc::Cpml,
            )
        });

        // Convolution slabs, one pair per (component, stretched axis) term.
        let e_dims: [(usize, usize, usize); 3] = EComp::ALL.map(|c| c.dims(&spec));
        let h_dims = [
            (spec.nx + 1, spec.ny, spec.nz),
            (spec.nx, spec.ny + 1, spec.nz),
            (spec.nx, spec.ny, spec.nz + 1),
        ];
        let e_terms = [
            (0usize, 1usize, 1.0f64),
            (0, 2, -1.0),
            (1, 2, 1.0),
            (1, 0, -1.0),
            (2, 0, 1.0),
            (2, 1, -1.0),
        ];
        let h_terms = e_terms; // same (comp, axis, sign) table holds for H
        let active = |axis: usize| prof[axis].lo > 0 || prof[axis].hi > 0;
        let psi_e = e_terms
            .iter()
            .filter(|(_, a, _)| active(*a))
            .map(|&(c, a, s)| PsiTerm::new(c, a, s, e_dims[c], cpml.thickness, prof[a].e_hi_start))
            .collect();
        let psi_h = h_terms
            .iter()
            .filter(|(_, a, _)| active(*a))
            .map(|&(c, a, s)| PsiTerm::new(c, a, s, h_dims[c], cpml.thickness, prof[a].h_hi_start))
            .collect();

        Ok(Self {
            grid,
            state,
            bcs,
            ca,
            cb,
            prof,
            psi_e,
            psi_h,
            inv_d: [1.0 / d_m[0], 1.0 / d_m[1], 1.0 / d_m[2]],
            dtmu: dt / MU0,
            cell_volume: d_m[0] * d_m[1] * d_m[2],
            opts,
        })
    }

    pub fn dt(&self) -> f64 {
        self.state.dt
    }

    pub fn spec(&self) -> &GridSpec {
        &self.grid.spec
    }

    /// Advance one leapfrog step.
    pub fn step(&mut self) -> Result<()> {
        self.step_inner(false)?;
        Ok(())
    }

    /// Advance one step and return the discrete EM energy (J).
    ///
    /// The measured quantity is the exactly conserved staggered-time form
    /// 1/2 (eps E_n . E_n+1 + mu |H_n+1/2|^2) dV; for a lossless closed
    /// domain it drifts only by round-off.
    pub fn step_measure_energy(&mut self) -> Result<f64> {
        Ok(self.step_inner(true)?.unwrap_or(0.0))
    }

    fn step_inner(&mut self, measure: bool) -> Result<Option<f64>> {
        self.update_h();
        self.cpml_h();
        let e_product = self.update_e(measure);
        self.pmc_planes();
        self.cpml_e();
        self.state.step += 1;

        if self.opts.nan_check_interval > 0 && self.state.step % self.opts.nan_check_interval == 0 {
            self.check_finite()?;
        }

        if measure {
            let h_sq: f64 = [&self.state.hx, &self.state.hy, &self.state.hz]
                .iter()
                .map(|arr| {
                    arr.data
                        .par_chunks(arr.nx * arr.ny)
                        .map(|chunk| chunk.iter().map(|v| v * v).sum::<f64>())
                        .collect::<Vec<f64>>()
                        .iter()
                        .sum::<f64>()
                })
                .sum();
            Ok(Some(0.5 * self.cell_volume * (e_product + MU0 * h_sq)))
        } else {
            Ok(None)
        }
    }

    fn check_finite(&self) -> Result<()> {
        let fields: [(&Array3<f64>, &'static str); 6] = [
            (&self.state.ex, "Ex"),
            (&self.state.ey, "Ey"),
            (&self.state.ez, "Ez"),
            (&self.state.hx, "Hx"),
            (&self.state.hy, "Hy"),
            (&self.state.hz, "Hz"),
        ];
        for (arr, name) in fields {
            if let Some(pos) = arr.data.iter().position(|v| !v.is_finite()) {
                let i = pos % arr.nx;
                let j = (pos / arr.nx) % arr.ny;
                let k = pos / (arr.nx * arr.ny);
                return Err(Error::Instability {
                    step: self.state.step,
                    component: name,
                    i,
                    j,
                    k,
                });
            }
        }
        Ok(())
    }

    /// Interior update ranges (end-exclusive) of an E component over its two
    /// transverse axes; PEC/CPML faces skip the boundary plane, PMC planes
    /// are handled separately.
    fn interior(&self, axis: usize) -> (usize, usize) {
        (1, self.grid.spec.n_of(axis))
    }

    fn update_e(&mut self, measure: bool) -> f64 {
        let flip = if self.opts.debug_negate_e_curl { -1.0 } else { 1.0 };
        let (jy, jz) = (self.interior(1), self.interior(2));
        let e1 = update_ex(
            &mut self.state.ex,
            &self.ca[0],
            &self.cb[0],
            &self.state.hz,
            &self.state.hy,
            self.inv_d[1] * flip,
            self.inv_d[2] * flip,
            jy,
            jz,
            measure.then_some(&self.grid.eps[0]),
        );
        let (ix, kz) = (self.interior(0), self.interior(2));
        let e2 = update_ey(
            &mut self.state.ey,
            &self.ca[1],
            &self.cb[1],
            &self.state.hx,
            &self.state.hz,
            self.inv_d[2] * flip,
            self.inv_d[0] * flip,
            ix,
            kz,
            measure.then_some(&self.grid.eps[1]),
        );
        let (ix2, jy2) = (self.interior(0), self.interior(1));
        let e3 = update_ez(
            &mut self.state.ez,
            &self.ca[2],
            &self.cb[2],
            &self.state.hy,
            &self.state.hx,
            self.inv_d[0] * flip,
            self.inv_d[1] * flip,
            ix2,
            jy2,
            measure.then_some(&self.grid.eps[2]),
        );
        e1 + e2 + e3
    }

    fn update_h(&mut self) {
        update_hx(
            &mut self.state.hx,
            &self.state.ez,
            &self.state.ey,
            self.inv_d[1],
            self.inv_d[2],
            self.dtmu,
        );
        update_hy(
            &mut self.state.hy,
            &self.state.ex,
            &self.state.ez,
            self.inv_d[2],
            self.inv_d[0],
            self.dtmu,
        );
        update_hz(
            &mut self.state.hz,
            &self.state.ey,
            &self.state.ex,
            self.inv_d[0],
            self.inv_d[1],
            self.dtmu,
        );
    }

    /// One-sided updates of tangential E on PMC planes: the image of
    /// tangential H across a magnetic wall is odd, doubling the inside term.
    fn pmc_planes(&mut self) {
        let spec = self.grid.spec;
        let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
        let (idx, idy, idz) = (self.inv_d[0], self.inv_d[1], self.inv_d[2]);
        for side in 0..2 {
            // x faces: Ey and Ez at i = 0 or nx.
            if self.bcs[0][side] == FaceBc::Pmc {
                let i = if side == 0 { 0 } else { nx };
                let (hsrc, sgn) = if side == 0 { (0, 2.0) } else { (nx - 1, -2.0) };
                for k in 1..nz {
                    for j in 0..ny {
                        let dhxdz = (self.state.hx.at(i, j, k) - self.state.hx.at(i, j, k - 1)) * idz;
                        let dhzdx = sgn * self.state.hz.at(hsrc, j, k) * idx;
                        let p = self.state.ey.idx(i, j, k);
                        self.state.ey.data[p] =
                            self.ca[1].data[p] * self.state.ey.data[p] + self.cb[1].data[p] * (dhxdz - dhzdx);
                    }
                }
                for k in 0..nz {
                    for j in 1..ny {
                        let dhydx = sgn * self.state.hy.at(hsrc, j, k) * idx;
                        let dhxdy = (self.state.hx.at(i, j, k) - self.state.hx.at(i, j - 1, k)) * idy;
                        let p = self.state.ez.idx(i, j, k);
                        self.state.ez.data[p] =
                            self.ca[2].data[p] * self.state.ez.data[p] + self.cb[2].data[p] * (dhydx - dhxdy);
                    }
                }
            }
            // y faces: Ex and Ez at j = 0 or ny.
            if self.bcs[1][side] == FaceBc::Pmc {
                let j = if side == 0 { 0 } else { ny };
                let (hsrc, sgn) = if side == 0 { (0, 2.0) } else { (ny - 1, -2.0) };
                for k in 1..nz {
                    for i in 0..nx {
                        let dhzdy = sgn * self.state.hz.at(i, hsrc, k) * idy;
                        let dhydz = (self.state.hy.at(i, j, k) - self.state.hy.at(i, j, k - 1)) * idz;
                        let p = self.state.ex.idx(i, j, k);
                        self.state.ex.data[p] =
                            self.ca[0].data[p] * self.state.ex.data[p] + self.cb[0].data[p] * (dhzdy - dhydz);
                    }
                }
                for k in 0..nz {
                    for i in 1..nx {
                        let dhydx = (self.state.hy.at(i, j, k) - self.state.hy.at(i - 1, j, k)) * idx;
                        let dhxdy = sgn * self.state.hx.at(i, hsrc, k) * idy;
                        let p = self.state.ez.idx(i, j, k);
                        self.state.ez.data[p] =
                            self.ca[2].data[p] * self.state.ez.data[p] + self.cb[2].data[p] * (dhydx - dhxdy);
                    }
                }
            }
            // z faces: Ex and Ey at k = 0 or nz.
            if self.bcs[2][side] == FaceBc::Pmc {
                let k = if side == 0 { 0 } else { nz };
                let (hsrc, sgn) = if side == 0 { (0, 2.0) } else { (nz - 1, -2.0) };
                for j in 1..ny {
                    for i in 0..nx {
                        let dhzdy = (self.state.hz.at(i, j, k) - self.state.hz.at(i, j - 1, k)) * idy;
                        let dhydz = sgn * self.state.hy.at(i, j, hsrc) * idz;
                        let p = self.state.ex.idx(i, j, k);
                        self.state.ex.data[p] =
                            self.ca[0].data[p] * self.state.ex.data[p] + self.cb[0].data[p] * (dhzdy - dhydz);
                    }
                }
                for j in 0..ny {
                    for i in 1..nx {
                        let dhxdz = sgn * self.state.hx.at(i, j, hsrc) * idz;
                        let dhzdx = (self.state.hz.at(i, j, k) - self.state.hz.at(i - 1, j, k)) * idx;
                        let p = self.state.ey.idx(i, j, k);
                        self.state.ey.data[p] =
                            self.ca[1].data[p] * self.state.ey.data[p] + self.cb[1].data[p] * (dhxdz - dhzdx);
                    }
                }
            }
        }
    }

    fn cpml_e(&mut self) {
        // Update ranges including PMC planes on non-stretched axes.
        let spec = self.grid.spec;
        let n = [spec.nx, spec.ny, spec.nz];
        let mut psi = std::mem::take(&mut self.psi_e);
        for term in psi.iter_mut() {
            let comp = term.comp;
            let dims = EComp::ALL[comp].dims(&spec);
            let dims = [dims.0, dims.1, dims.2];
            let mut ranges = [(0usize, 0usize); 3];
            for a in 0..3 {
                if a == comp {
                    ranges[a] = (0, dims[a]);
                } else {
                    let lo = if self.bcs[a][0] == FaceBc::Pmc { 0 } else { 1 };
                    let hi = if self.bcs[a][1] == FaceBc::Pmc { n[a] + 1 } else { n[a] };
                    ranges[a] = (lo, hi);
                }
            }
            // Target field, its coefficient array and the H feeding this term.
            let (e, cb, src): (&mut Array3<f64>, &Array3<f64>, &Array3<f64>) =
                match (comp, term.axis) {
                    (0, 1) => (&mut self.state.ex, &self.cb[0], &self.state.hz),
                    (0, 2) => (&mut self.state.ex, &self.cb[0], &self.state.hy),
                    (1, 2) => (&mut self.state.ey, &self.cb[1], &self.state.hx),
                    (1, 0) => (&mut self.state.ey, &self.cb[1], &self.state.hz),
                    (2, 0) => (&mut self.state.ez, &self.cb[2], &self.state.hy),
                    (2, 1) => (&mut self.state.ez, &self.cb[2], &self.state.hx),
                    _ => unreachable!(),
                };
            correct_term(
                e,
                CoefSel::Edge(cb),
                src,
                false,
                self.inv_d[term.axis],
                &self.prof[term.axis],
                false,
                term,
                ranges,
            );
        }
        self.psi_e = psi;
    }

    fn cpml_h(&mut self) {
        let mut psi = std::mem::take(&mut self.psi_h);
        for term in psi.iter_mut() {
            let (h, src): (&mut Array3<f64>, &Array3<f64>) = match (term.comp, term.axis) {
                (0, 1) => (&mut self.state.hx, &self.state.ez),
                (0, 2) => (&mut self.state.hx, &self.state.ey),
                (1, 2) => (&mut self.state.hy, &self.state.ex),
                (1, 0) => (&mut self.state.hy, &self.state.ez),
                (2, 0) => (&mut self.state.hz, &self.state.ey),
                (2, 1) => (&mut self.state.hz, &self.state.ex),
                _ => unreachable!(),
            };
            let ranges = [(0, h.nx), (0, h.ny), (0, h.nz)];
            correct_term(
                h,
                CoefSel::Const(-self.dtmu),
                src,
                true,
                self.inv_d[term.axis],
                &self.prof[term.axis],
                true,
                term,
                ranges,
            );
        }
        self.psi_h = psi;
    }
}

trait SpecAxis {
    fn n_of(&self, axis: usize) -> usize;
}

impl SpecAxis for GridSpec {
    fn n_of(&self, axis: usize) -> usize {
        match axis {
            0 => self.nx,
            1 => self.ny,
            _ => self.nz,
        }
    }
}

enum CoefSel<'a> {
    Edge(&'a Array3<f64>),
    Const(f64),
}

/// Apply one CPML convolution term: update its psi slab from the current
/// derivative and add the stretched-coordinate correction to the target
/// field. `forward` selects the derivative direction (E uses backward
/// differences, H forward); `half` selects the half-staggered profiles.
#[allow(clippy::too_many_arguments)]
fn correct_term(
    target: &mut Array3<f64>,
    coef: CoefSel,
    src: &Array3<f64>,
    forward: bool,
    inv_d: f64,
    prof: &AxisProfiles,
    half: bool,
    term: &mut PsiTerm,
    ranges: [(usize, usize); 3],
) {
    let axis = term.axis;
    let sign = term.sign;
    let (b, c, inv_k) = if half {
        (&prof.b_h, &prof.c_h, &prof.inv_k_h)
    } else {
        (&prof.b_e, &prof.c_e, &prof.inv_k_e)
    };
    let hi_start = term.hi_start;

    // (lo slab, hi slab) index windows along the stretched axis.
    let windows = [
        (ranges[axis].0, ranges[axis].1.min(if prof.lo > 0 { prof.lo } else { 0 }), false),
        (
            ranges[axis].0.max(if prof.hi > 0 { hi_start } else { usize::MAX }),
            ranges[axis].1,
            true,
        ),
    ];

    let mut step = [0i64; 3];
    step[axis] = 1;

    for &(w0, w1, is_hi) in &windows {
        if w0 >= w1 {
            continue;
        }
        let psi = if is_hi { &mut term.hi } else { &mut term.lo };
        let mut rr = ranges;
        rr[axis] = (w0, w1);
        for k in rr[2].0..rr[2].1 {
            for j in rr[1].0..rr[1].1 {
                for i in rr[0].0..rr[0].1 {
                    let p = [i, j, k];
                    let ax_idx = p[axis];
                    let (s_hi, s_lo) = if forward {
                        (
                            src.idx(
                                (i as i64 + step[0]) as usize,
                                (j as i64 + step[1]) as usize,
                                (k as i64 + step[2]) as usize,
                            ),
                            src.idx(i, j, k),
                        )
                    } else {
                        (
                            src.idx(i, j, k),
                            src.idx(
                                (i as i64 - step[0]) as usize,
                                (j as i64 - step[1]) as usize,
                                (k as i64 - step[2]) as usize,
                            ),
                        )
                    };
                    let deriv = (src.data[s_hi] - src.data[s_lo]) * inv_d;
                    let local = if is_hi { ax_idx - hi_start } else { ax_idx };
                    let mut q = [i, j, k];
                    q[axis] = local;
                    let pp = psi.idx(q[0], q[1], q[2]);
                    let new_psi = b[ax_idx] * psi.data[pp] + c[ax_idx] * deriv;
                    psi.data[pp] = new_psi;
                    let correction = sign * ((inv_k[ax_idx] - 1.0) * deriv + new_psi);
                    let t = target.idx(i, j, k);
                    match coef {
                        CoefSel::Edge(cbar) => target.data[t] += cbar.data[t] * correction,
                        CoefSel::Const(cval) => target.data[t] += cval * correction,
                    }
                }
            }
        }
    }
}

macro_rules! row {
    ($arr:expr, $j:expr, $k:expr, $len:expr) => {
        &$arr.data[($k * $arr.ny + $j) * $arr.nx..][..$len]
    };
}

fn update_ex(
    ex: &mut Array3<f64>,
    ca: &Array3<f64>,
    cb: &Array3<f64>,
    hz: &Array3<f64>,
    hy: &Array3<f64>,
    inv_dy: f64,
    inv_dz: f64,
    jr: (usize, usize),
    kr: (usize, usize),
    eps: Option<&Array3<f64>>,
) -> f64 {
    let nx = ex.nx;
    let ny = ex.ny;
    let slab = nx * ny;
    let parts: Vec<f64> = ex
        .data
        .par_chunks_mut(slab)
        .enumerate()
        .map(|(k, ek)| {
            if k < kr.0 || k >= kr.1 {
                return 0.0;
            }
            let mut part = 0.0;
            for j in jr.0..jr.1 {
                let e_row = &mut ek[j * nx..][..nx];
                let ca_row = &ca.data[(k * ny + j) * nx..][..nx];
                let cb_row = &cb.data[(k * ny + j) * nx..][..nx];
                let hz0 = row!(hz, j, k, nx);
                let hz1 = row!(hz, j - 1, k, nx);
                let hy0 = row!(hy, j, k, nx);
                let hy1 = row!(hy, j, k - 1, nx);
                match eps {
                    Some(eps) => {
                        let eps_row = &eps.data[(k * ny + j) * nx..][..nx];
                        for i in 0..nx {
                            let old = e_row[i];
                            let new = ca_row[i] * old
                                + cb_row[i] * ((hz0[i] - hz1[i]) * inv_dy - (hy0[i] - hy1[i]) * inv_dz);
                            part += eps_row[i] * old * new;
                            e_row[i] = new;
                        }
                    }
                    None => {
                        for i in 0..nx {
                            e_row[i] = ca_row[i] * e_row[i]
                                + cb_row[i] * ((hz0[i] - hz1[i]) * inv_dy - (hy0[i] - hy1[i]) * inv_dz);
                        }
                    }
                }
            }
            part
        })
        .collect();
    parts.iter().sum()
}

fn update_ey(
    ey: &mut Array3<f64>,
    ca: &Array3<f64>,
    cb: &Array3<f64>,
    hx: &Array3<f64>,
    hz: &Array3<f64>,
    inv_dz: f64,
    inv_dx: f64,
    ir: (usize, usize),
    kr: (usize, usize),
    eps: Option<&Array3<f64>>,
) -> f64 {
    let nx = ey.nx;
    let ny = ey.ny;
    let slab = nx * ny;
    let parts: Vec<f64> = ey
        .data
        .par_chunks_mut(slab)
        .enumerate()
        .map(|(k, ek)| {
            if k < kr.0 || k >= kr.1 {
                return 0.0;
            }
            let mut part = 0.0;
            for j in 0..ny {
                let e_row = &mut ek[j * nx..][..nx];
                let ca_row = &ca.data[(k * ny + j) * nx..][..nx];
                let cb_row = &cb.data[(k * ny + j) * nx..][..nx];
                let hx0 = row!(hx, j, k, nx);
                let hx1 = row!(hx, j, k - 1, nx);
                // Hz rows are one shorter (nx cells); indexed at i and i-1.
                let hz0 = row!(hz, j, k, nx - 1);
                match eps {
                    Some(eps) => {
                        let eps_row = &eps.data[(k * ny + j) * nx..][..nx];
                        for i in ir.0..ir.1 {
                            let old = e_row[i];
                            let new = ca_row[i] * old
                                + cb_row[i] * ((hx0[i] - hx1[i]) * inv_dz - (hz0[i] - hz0[i - 1]) * inv_dx);
                            part += eps_row[i] * old * new;
                            e_row[i] = new;
                        }
                    }
                    None => {
                        for i in ir.0..ir.1 {
                            e_row[i] = ca_row[i] * e_row[i]
                                + cb_row[i] * ((hx0[i] - hx1[i]) * inv_dz - (hz0[i] - hz0[i - 1]) * inv_dx);
                        }
                    }
                }
            }
            part
        })
        .collect();
    parts.iter().sum()
}

fn update_ez(
    ez: &mut Array3<f64>,
    ca: &Array3<f64>,
    cb: &Array3<f64>,
    hy: &Array3<f64>,
    hx: &Array3<f64>,
    inv_dx: f64,
    inv_dy: f64,
    ir: (usize, usize),
    jr: (usize, usize),
    eps: Option<&Array3<f64>>,
) -> f64 {
    let nx = ez.nx;
    let ny = ez.ny;
    let slab = nx * ny;
    let parts: Vec<f64> = ez
        .data
        .par_chunks_mut(slab)
        .enumerate()
        .map(|(k, ek)| {
            let mut part = 0.0;
            for j in jr.0..jr.1 {
                let e_row = &mut ek[j * nx..][..nx];
                let ca_row = &ca.data[(k * ny + j) * nx..][..nx];
                let cb_row = &cb.data[(k * ny + j) * nx..][..nx];
                let hy0 = row!(hy, j, k, nx - 1);
                let hx0 = row!(hx, j, k, nx);
                let hx1 = row!(hx, j - 1, k, nx);
                match eps {
                    Some(eps) => {
                        let eps_row = &eps.data[(k * ny + j) * nx..][..nx];
                        for i in ir.0..ir.1 {
                            let old = e_row[i];
                            let new = ca_row[i] * old
                                + cb_row[i] * ((hy0[i] - hy0[i - 1]) * inv_dx - (hx0[i] - hx1[i]) * inv_dy);
                            part += eps_row[i] * old * new;
                            e_row[i] = new;
                        }
                    }
                    None => {
                        for i in ir.0..ir.1 {
                            e_row[i] = ca_row[i] * e_row[i]
                                + cb_row[i] * ((hy0[i] - hy0[i - 1]) * inv_dx - (hx0[i] - hx1[i]) * inv_dy);
                        }
                    }
                }
            }
            part
        })
        .collect();
    parts.iter().sum()
}

fn update_hx(hx: &mut Array3<f64>, ez: &Array3<f64>, ey: &Array3<f64>, inv_dy: f64, inv_dz: f64, dtmu: f64) {
    let nx = hx.nx;
    let ny = hx.ny;
    let slab = nx * ny;
    hx.data.par_chunks_mut(slab).enumerate().for_each(|(k, hk)| {
        for j in 0..ny {
            let h_row = &mut hk[j * nx..][..nx];
            let ez0 = row!(ez, j, k, nx);
            let ez1 = row!(ez, j + 1, k, nx);
            let ey0 = row!(ey, j, k, nx);
            let ey1 = row!(ey, j, k + 1, nx);
            for i in 0..nx {
                h_row[i] -= dtmu * ((ez1[i] - ez0[i]) * inv_dy - (ey1[i] - ey0[i]) * inv_dz);
            }
        }
    });
}

fn update_hy(hy: &mut Array3<f64>, ex: &Array3<f64>, ez: &Array3<f64>, inv_dz: f64, inv_dx: f64, dtmu: f64) {
    let nx = hy.nx;
    let ny = hy.ny;
    let slab = nx * ny;
    hy.data.par_chunks_mut(slab).enumerate().for_each(|(k, hk)| {
        for j in 0..ny {
            let h_row = &mut hk[j * nx..][..nx];
            let ex0 = row!(ex, j, k, nx);
            let ex1 = row!(ex, j, k + 1, nx);
            let ez0 = row!(ez, j, k, nx + 1);
            for i in 0..nx {
                h_row[i] -= dtmu * ((ex1[i] - ex0[i]) * inv_dz - (ez0[i + 1] - ez0[i]) * inv_dx);
            }
        }
    });
}

fn update_hz(hz: &mut Array3<f64>, ey: &Array3<f64>, ex: &Array3<f64>, inv_dx: f64, inv_dy: f64, dtmu: f64) {
    let nx = hz.nx;
    let ny = hz.ny;
    let slab = nx * ny;
    hz.data.par_chunks_mut(slab).enumerate().for_each(|(k, hk)| {
        for j in 0..ny {
            let h_row = &mut hk[j * nx..][..nx];
            let ey0 = row!(ey, j, k, nx + 1);
            let ex0 = row!(ex, j, k, nx);
            let ex1 = row!(ex, j + 1, k, nx);
            for i in 0..nx {
                h_row[i] -= dtmu * ((ey0[i + 1] - ey0[i]) * inv_dx - (ex1[i] - ex0[i]) * inv_dy);
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::vacuum_grid;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cube_spec(n: usize, d: f64) -> GridSpec {
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
    fn cfl_matches_closed_form() {
        // 0.1 mm cubic cells, safety 1: 1/(c sqrt(3)/1e-4) = 1.926e-13 s.
        let spec = cube_spec(10, 0.1);
        assert_relative_eq!(cfl_dt(&spec, 1.0), 1.92583e-13, max_relative = 1e-4);
        // Doubling all cells doubles dt; halving safety halves it.
        let spec2 = cube_spec(10, 0.2);
        assert_relative_eq!(cfl_dt(&spec2, 1.0), 2.0 * cfl_dt(&spec, 1.0), max_relative = 1e-12);
        assert_relative_eq!(cfl_dt(&spec, 0.5), 0.5 * cfl_dt(&spec, 1.0), max_relative = 1e-12);
    }

    #[test]
    fn zero_fields_stay_zero() {
        let grid = vacuum_grid(&cube_spec(12, 1.0));
        let mut solver = Solver::new(grid, all_pec(), &CpmlConfig::default(), SolverOpts::default()).unwrap();
        for _ in 0..50 {
            solver.step().unwrap();
        }
        assert_eq!(solver.state.max_abs_e(), 0.0);
    }

    #[test]
    fn closed_cavity_energy_is_conserved() {
        let grid = vacuum_grid(&cube_spec(20, 1.0));
        let mut solver = Solver::new(grid, all_pec(), &CpmlConfig::default(), SolverOpts::default()).unwrap();
        // Impulse initial condition away from walls.
        *solver.state.ez.at_mut(10, 10, 10) = 1.0;
        *solver.state.ez.at_mut(9, 11, 10) = -0.5;
        let e0 = solver.step_measure_energy().unwrap();
        let mut e_last = e0;
        for _ in 0..2000 {
            e_last = solver.step_measure_energy().unwrap();
        }
        assert!(
            (e_last - e0).abs() / e0 < 1e-9,
            "drift {:e} over 2000 steps",
            (e_last - e0).abs() / e0
        );
    }

    #[test]
    fn negated_curl_breaks_conservation() {
        let grid = vacuum_grid(&cube_spec(16, 1.0));
        let opts = SolverOpts {
            debug_negate_e_curl: true,
            nan_check_interval: 0,
            ..Default::default()
        };
        let mut solver = Solver::new(grid, all_pec(), &CpmlConfig::default(), opts).unwrap();
        *solver.state.ez.at_mut(8, 8, 8) = 1.0;
        let e0 = solver.step_measure_energy().unwrap();
        let mut e_last = e0;
        for _ in 0..200 {
            e_last = solver.step_measure_energy().unwrap();
        }
        assert!(
            (e_last - e0).abs() / e0 > 1e-3,
            "mis-signed curl must break the energy balance"
        );
    }

    #[test]
    fn numerical_phase_velocity_within_one_percent() {
        // Plane-wave column: Ey polarisation travelling along x, PEC side
        // walls (tangential E is zero there anyway), PMC top/bottom, CPML at
        // the far end. At 20 points per wavelength the standard Yee
        // dispersion gives vp/c = 0.9972 at this Courant number.
        let d = 0.5; // mm
        let n = 260;
        let spec = GridSpec {
            dx: d,
            dy: d,
            dz: d,
            nx: n,
            ny: 8,
            nz: 8,
            origin: [0.0, 0.0, 0.0],
        };
        let grid = vacuum_grid(&spec);
        let bcs: Boundaries = [
            [FaceBc::Pec, FaceBc::Cpml],
            [FaceBc::Pec, FaceBc::Pec],
            [FaceBc::Pmc, FaceBc::Pmc],
        ];
        let mut solver = Solver::new(grid, bcs, &CpmlConfig::default(), SolverOpts::default()).unwrap();
        let dt = solver.dt();
        let lambda_cells = 20.0;
        let f = C0 / (lambda_cells * d * 1e-3);
        // Probe separation under one wavelength keeps the phase unambiguous.
        let (p1, p2) = (140usize, 155usize);
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        let steps = 2600;
        let ramp = 60.0 / f; // smooth turn-on over 60 periods... scaled below
        for step in 0..steps {
            solver.step().unwrap();
            let t = (step + 1) as f64 * dt;
            let envelope = (1.0 - (-t / (ramp / 12.0)).exp()).powi(2);
            let drive = envelope * (2.0 * PI * f * t).sin();
            let ny = solver.state.ey.ny;
            let nzp = solver.state.ey.nz;
            for k in 0..nzp {
                for j in 0..ny {
                    *solver.state.ey.at_mut(20, j, k) += drive;
                }
            }
            s1.push(*solver.state.ey.at(p1, 4, 4));
            s2.push(*solver.state.ey.at(p2, 4, 4));
        }
        // Steady-state phases at the drive frequency over the last periods.
        let window = 800;
        let phase = |s: &[f64]| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, v) in s.iter().enumerate().skip(steps - window) {
                let t = (n + 1) as f64 * dt;
                re += v * (2.0 * PI * f * t).cos();
                im -= v * (2.0 * PI * f * t).sin();
            }
            f64::atan2(im, re)
        };
        let mut dphi = phase(&s1) - phase(&s2);
        while dphi < 0.0 {
            dphi += 2.0 * PI;
        }
        while dphi >= 2.0 * PI {
            dphi -= 2.0 * PI;
        }
        let k_num = dphi / ((p2 - p1) as f64 * d * 1e-3);
        let vp = 2.0 * PI * f / k_num;
        assert!(
            (vp / C0 - 1.0).abs() < 0.01,
            "numerical phase velocity {:.5} c",
            vp / C0
        );
    }

    #[test]
    fn nan_detection_reports_location() {
        let grid = vacuum_grid(&cube_spec(10, 1.0));
        let opts = SolverOpts {
            nan_check_interval: 1,
            ..Default::default()
        };
        let mut solver = Solver::new(grid, all_pec(), &CpmlConfig::default(), opts).unwrap();
        *solver.state.ex.at_mut(3, 4, 5) = f64::NAN;
        let err = solver.step().unwrap_err();
        match err {
            Error::Instability { component, .. } => assert_eq!(component, "Ex"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn pmc_and_cpml_same_axis_rejected() {
        let grid = vacuum_grid(&cube_spec(10, 1.0));
        let bcs: Boundaries = [
            [FaceBc::Pmc, FaceBc::Cpml],
            [FaceBc::Pec, FaceBc::Pec],
            [FaceBc::Pec, FaceBc::Pec],
        ];
        assert!(Solver::new(grid, bcs, &CpmlConfig::default(), SolverOpts::default()).is_err());
    }
}
