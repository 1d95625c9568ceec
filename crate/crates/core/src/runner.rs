//! Top-level run orchestration: from a parsed configuration to a finished
//! artifact directory (reference run, total run, post-processing, files).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::fdtd::{all_cpml, Solver, SolverOpts};
use crate::geometry::{matched_reference, Axis, Geometry};
use crate::io;
use crate::mesh::{estimate_cells, voxelize, GridSpec, YeeGrid};
use crate::ports::{ModePort, Waveform};
use crate::postproc::{
    bandwidth, cut_angle, cut_directions, gain_efficiency_vs_freq, ntff, s11_from_records,
    BandResult, FarField, GainRow, PortRecord, SParamTrace,
};
use crate::sim::{check_huygens_in_air, huygens_for_antenna, FaceDft, Huygens, PlaneDft, Simulation, StopRule};
use crate::{Error, Result, C0};

/// Machine-readable run summary; the only artifact carrying wall-clock data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub cells: usize,
    pub dt_s: f64,
    pub steps_reference: usize,
    pub steps_total: usize,
    pub converged: bool,
    pub s11_min_db: f64,
    pub f_min_ghz: f64,
    pub band_lo_ghz: Option<f64>,
    pub band_hi_ghz: Option<f64>,
    pub fractional_bw_pct: Option<f64>,
    pub gain_dbi_at_f0: Option<f64>,
    pub rad_eff_pct_at_f0: Option<f64>,
    pub tot_eff_pct_at_f0: Option<f64>,
    pub wall_secs: f64,
    pub timestamp_unix: u64,
}

/// One principal-plane cut with its incident power for realized gain.
pub struct CutResult {
    pub freq: f64,
    pub phi_deg: f64,
    pub label: &'static str,
    pub farfield: FarField,
    pub p_inc: f64,
}

impl CutResult {
    /// Signed cut angles (deg) matching `farfield.samples`.
    pub fn angles(&self) -> Vec<f64> {
        self.farfield
            .samples
            .iter()
            .map(|s| cut_angle(self.phi_deg, (s.theta_deg, s.phi_deg)))
            .collect()
    }
}

/// Everything a full two-run simulation produces, in memory.
pub struct RunResult {
    pub summary: RunSummary,
    pub spec: GridSpec,
    pub geometry: Geometry,
    pub record: PortRecord,
    pub trace: SParamTrace,
    pub band: BandResult,
    pub gain_rows: Vec<GainRow>,
    pub cuts: Vec<CutResult>,
    pub huygens: Option<Huygens>,
    pub flux: Option<FaceDft>,
    pub maps: Vec<MapResult>,
}

pub struct MapResult {
    pub label: String,
    pub freq: f64,
    pub layer: usize,
    pub data: Vec<f64>,
}

/// Resolve the grid: explicit cell sizes win, otherwise the resolution rule;
/// the origin is anchored to multiples of the cell size so coordinates
/// stated in round millimetres land on grid planes.
pub fn resolve_grid(geom: &Geometry, cfg: &RunConfig) -> Result<GridSpec> {
    let f_hi = cfg.excitation.band_ghz[1] * 1e9;
    let (auto, _) = estimate_cells(geom, f_hi)?;
    let s = cfg.mesh.resolution_scale;
    let d = [
        cfg.mesh.dx.unwrap_or(auto.dx) * s,
        cfg.mesh.dy.unwrap_or(auto.dy) * s,
        cfg.mesh.dz.unwrap_or(auto.dz) * s,
    ];
    let origin = [
        (geom.bbox_min[0] / d[0]).floor() * d[0],
        (geom.bbox_min[1] / d[1]).floor() * d[1],
        (geom.bbox_min[2] / d[2]).floor() * d[2],
    ];
    let count = |lo: f64, hi: f64, dd: f64| (((hi - lo) / dd - 1e-9).ceil() as usize).max(8);
    let spec = GridSpec {
        dx: d[0],
        dy: d[1],
        dz: d[2],
        nx: count(origin[0], geom.bbox_max[0], d[0]),
        ny: count(origin[1], geom.bbox_max[1], d[1]),
        nz: count(origin[2], geom.bbox_max[2], d[2]),
        origin,
    };
    spec.validate()?;
    Ok(spec)
}

fn solver_opts(cfg: &RunConfig) -> SolverOpts {
    SolverOpts {
        safety: cfg.solver.safety,
        nan_check_interval: cfg.solver.nan_check_interval,
        debug_negate_e_curl: false,
    }
}

fn stop_rule(cfg: &RunConfig) -> StopRule {
    StopRule {
        max_steps: cfg.solver.max_steps,
        energy_decay_db: Some(cfg.solver.energy_stop_db),
        check_interval: cfg.solver.check_interval,
    }
}

fn build_simulation(
    grid: YeeGrid,
    geom: &Geometry,
    cfg: &RunConfig,
    waveform: Waveform,
) -> Result<Simulation> {
    let spec = grid.spec;
    let solver = Solver::new(grid, all_cpml(), &cfg.solver.cpml, solver_opts(cfg))?;
    let port = ModePort::te10(&spec, &geom.port)?;
    let mut inject = spec.snap_plane(Axis::X, geom.port.inject_x);
    let mut record = spec.snap_plane(Axis::X, geom.port.record_x);
    // Coarse exploratory grids can push the feed planes into the absorber;
    // clamp them inward rather than refuse, at some accuracy cost.
    let min_inject = cfg.solver.cpml.thickness + 4;
    if inject < min_inject {
        log::warn!("injection plane clamped from cell {inject} to {min_inject} (coarse grid)");
        inject = min_inject;
    }
    if record < inject + 4 {
        log::warn!("record plane clamped to four cells past the injection plane");
        record = inject + 4;
    }
    if record >= spec.nx - 1 {
        return Err(Error::invalid("port", "record plane falls outside the domain"));
    }
    Ok(Simulation::new(solver, port, inject, record, waveform))
}

/// Execute the two-run pipeline for a configuration. Writes nothing; see
/// [`cmd_run`] for the file-producing entry point.
pub fn execute(cfg: &RunConfig, base_dir: &Path) -> Result<RunResult> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let geom = cfg.geometry.build(base_dir)?;
    let spec = resolve_grid(&geom, cfg)?;
    let f0 = cfg.excitation.f0_ghz * 1e9;
    let band = (cfg.excitation.band_ghz[0] * 1e9, cfg.excitation.band_ghz[1] * 1e9);
    let waveform = Waveform::gaussian_sine(f0, band.1 - band.0);
    let eps_max = geom.eps_r_max();
    let max_d = spec.dx.max(spec.dy).max(spec.dz) * 1e-3;
    let f_mesh_limit = C0 / (10.0 * max_d * eps_max.sqrt());
    waveform.validate(f_mesh_limit)?;
    // Quarter-wave air margin on the open faces, absorber excluded.
    let lambda_lo_quarter = C0 / band.0 * 1e3 / 4.0;
    let cpml_mm = cfg.solver.cpml.thickness as f64 * spec.dx.max(spec.dy).max(spec.dz);
    if let Some(lm) = &geom.landmarks {
        let margin = (geom.bbox_max[0] - lm.structure_max[0]) - cpml_mm;
        if margin < lambda_lo_quarter - 1e-9 {
            log::warn!(
                "air margin {:.2} mm after the absorber is below a quarter wavelength ({:.2} mm)",
                margin,
                lambda_lo_quarter
            );
        }
    }

    let monitor_freqs = cfg.monitor_freqs();
    for &f in &monitor_freqs {
        if f < cfg.output.s11_start_ghz * 1e9 - 1.0 || f > cfg.output.s11_stop_ghz * 1e9 + 1.0 {
            return Err(Error::Config(format!(
                "far-field frequency {:.2} GHz lies outside the S11 grid",
                f / 1e9
            )));
        }
    }
    let stop = stop_rule(cfg);

    // Reference run: matched straight guide on the same grid, recording the
    // incident modal amplitude and incident power flux.
    let ref_geom = matched_reference(&geom);
    let ref_grid = voxelize(&ref_geom, &spec, f0)?;
    let mut ref_sim = build_simulation(ref_grid, &geom, cfg, waveform)?;
    let record_plane = ref_sim.record_plane;
    {
        let port = &ref_sim.port;
        ref_sim.flux = Some(FaceDft::new(
            &spec,
            Axis::X,
            1.0,
            record_plane,
            (port.j0, port.j1),
            (port.k0, port.k1),
            monitor_freqs.clone(),
            ref_sim.solver.dt(),
        )?);
    }
    log::info!(
        "reference run: {} cells, dt {:.3e} s",
        spec.cells(),
        ref_sim.solver.dt()
    );
    let ref_out = ref_sim.run(&stop)?;

    // Total run: the device in place, with the far-field surface and maps.
    let grid = voxelize(&geom, &spec, f0)?;
    let grid_report = grid.report.clone();
    let mut sim = build_simulation(grid, &geom, cfg, waveform)?;
    let dt = sim.solver.dt();
    if geom.landmarks.is_some() {
        match huygens_for_antenna(&geom, &spec, cfg.solver.cpml.thickness, monitor_freqs.clone(), dt)
            .and_then(|h| check_huygens_in_air(&h, &sim.solver.grid).map(|_| h))
        {
            Ok(h) => sim.huygens = Some(h),
            Err(e) => log::warn!("far-field surface disabled: {e}"),
        }
    }
    let mut map_layers: Vec<(String, usize)> = Vec::new();
    if cfg.output.write_maps {
        if let Some(lm) = &geom.landmarks {
            map_layers.push(("cavity".into(), spec.cell_layer(Axis::Z, lm.cavity_mid_z)));
            map_layers.push((
                "patch_substrate".into(),
                spec.cell_layer(Axis::Z, lm.patch_substrate_mid_z),
            ));
            for (_, layer) in &map_layers {
                sim.plane_dfts.push(PlaneDft::new(&spec, *layer, cfg.map_freqs(), dt)?);
            }
            if !cfg.output.snapshot_steps.is_empty() {
                sim.snapshot_requests
                    .push((spec.cell_layer(Axis::Z, lm.cavity_mid_z), cfg.output.snapshot_steps.clone()));
            }
        }
    }
    let out = sim.run(&stop)?;

    let record = PortRecord {
        dt,
        a_total: out.record.clone(),
        a_inc: ref_out.record.clone(),
        total_converged: out.converged,
        inc_converged: ref_out.converged,
        plane_x_mm: geom.port.record_x,
    };
    if !record.converged() {
        log::warn!("run did not reach the energy-decay rule; results labelled approximate");
    }
    let trace = s11_from_records(&record, &cfg.s11_freqs(), band, true)?;
    let band_result = bandwidth(&trace, -10.0);

    let mut gain_rows = Vec::new();
    let mut cuts = Vec::new();
    if let (Some(h), Some(flux)) = (&out.huygens, &ref_out.flux) {
        gain_rows = gain_efficiency_vs_freq(h, flux, &trace, (0.0, 0.0))?;
        for &fghz in &cfg.output.cut_ghz {
            let f = fghz * 1e9;
            let fi = h
                .freq_index(f)
                .ok_or_else(|| Error::Config(format!("cut frequency {fghz} GHz not monitored")))?;
            let p_inc = flux.flux(fi);
            for (phi, label) in [(0.0, "H"), (90.0, "E")] {
                let dirs = cut_directions(phi, cfg.output.theta_step_deg);
                cuts.push(CutResult {
                    freq: f,
                    phi_deg: phi,
                    label,
                    farfield: ntff(h, fi, &dirs),
                    p_inc,
                });
            }
        }
    }

    let mut maps = Vec::new();
    for ((label, layer), plane) in map_layers.iter().zip(&out.plane_dfts) {
        for (fi, &f) in plane.freqs.iter().enumerate() {
            maps.push(MapResult {
                label: label.clone(),
                freq: f,
                layer: *layer,
                data: plane.magnitude_map(fi),
            });
        }
    }

    let f0_row = gain_rows
        .iter()
        .find(|r| (r.freq - f0).abs() < 1.0)
        .copied();
    let (f_min, s11_min_db) = trace.minimum();
    let (band_lo, band_hi, frac) = match band_result {
        BandResult::Band {
            f_lo,
            f_hi,
            fractional_pct,
        } => (Some(f_lo / 1e9), Some(f_hi / 1e9), Some(fractional_pct)),
        BandResult::NoMatchedBand => (None, None, None),
    };
    let summary = RunSummary {
        mode: format!("{:?}", cfg.geometry.mode).to_lowercase(),
        cells: spec.cells(),
        dt_s: dt,
        steps_reference: ref_out.steps,
        steps_total: out.steps,
        converged: record.converged(),
        s11_min_db,
        f_min_ghz: f_min / 1e9,
        band_lo_ghz: band_lo,
        band_hi_ghz: band_hi,
        fractional_bw_pct: frac,
        gain_dbi_at_f0: f0_row.map(|r| r.realized_gain_dbi),
        rad_eff_pct_at_f0: f0_row.map(|r| r.rad_eff_pct),
        tot_eff_pct_at_f0: f0_row.map(|r| r.tot_eff_pct),
        wall_secs: started.elapsed().as_secs_f64(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };

    log::info!(
        "run complete: {} steps (+{} reference), S11 min {:.1} dB at {:.2} GHz, wall {:.1}s",
        out.steps,
        ref_out.steps,
        s11_min_db,
        f_min / 1e9,
        summary.wall_secs
    );
    for note in geom.notes.iter().chain(grid_report.iter()) {
        log::debug!("note: {note}");
    }

    Ok(RunResult {
        summary,
        spec,
        geometry: geom,
        record,
        trace,
        band: band_result,
        gain_rows,
        cuts,
        huygens: out.huygens,
        flux: ref_out.flux,
        maps,
    })
}

/// Ludwig-3 co/cross decomposition for a co-polarisation reference axis.
pub fn ludwig3(co_axis: Axis, sample: &crate::postproc::FarFieldSample) -> (f64, f64) {
    let phi = sample.phi_deg.to_radians();
    let (s, c) = phi.sin_cos();
    let (co, cross) = match co_axis {
        Axis::X => (
            sample.e_theta * c - sample.e_phi * s,
            sample.e_theta * s + sample.e_phi * c,
        ),
        Axis::Y => (
            sample.e_theta * s + sample.e_phi * c,
            sample.e_theta * c - sample.e_phi * s,
        ),
        Axis::Z => (sample.e_theta, sample.e_phi),
    };
    (co.norm(), cross.norm())
}

/// Run a configuration and write the artifact directory.
pub fn cmd_run(cfg: &RunConfig, base_dir: &Path, out_dir: &Path) -> Result<RunResult> {
    std::fs::create_dir_all(out_dir)?;
    let result = execute(cfg, base_dir)?;
    write_artifacts(cfg, &result, out_dir)?;
    Ok(result)
}

fn write_artifacts(cfg: &RunConfig, result: &RunResult, out_dir: &Path) -> Result<()> {
    io::write_text(&out_dir.join("resolved.toml"), &cfg.to_resolved_toml())?;
    io::write_text(&out_dir.join("geometry.toml"), &result.geometry.to_text())?;
    io::write_s11_csv(&out_dir.join("s11.csv"), &result.trace)?;
    io::write_port_csv(&out_dir.join("port_incident.csv"), result.record.dt, &result.record.a_inc)?;
    io::write_port_csv(&out_dir.join("port_total.csv"), result.record.dt, &result.record.a_total)?;
    if !result.gain_rows.is_empty() {
        io::write_gain_csv(&out_dir.join("gain_efficiency.csv"), &result.gain_rows)?;
    }

    let co_axis = result
        .geometry
        .landmarks
        .as_ref()
        .map(|lm| lm.co_pol_axis)
        .unwrap_or(Axis::Z);
    let mut rows = Vec::new();
    for cut in &result.cuts {
        let angles = cut.angles();
        let peak_co = cut
            .farfield
            .samples
            .iter()
            .map(|s| ludwig3(co_axis, s).0)
            .fold(0.0f64, f64::max)
            .max(1e-300);
        for (i, s) in cut.farfield.samples.iter().enumerate() {
            let (co, cross) = ludwig3(co_axis, s);
            rows.push(io::PatternRow {
                freq_hz: cut.freq,
                plane: cut.label,
                theta_deg: angles[i],
                e_co_db: 20.0 * (co / peak_co).max(1e-15).log10(),
                e_cross_db: 20.0 * (cross / peak_co).max(1e-15).log10(),
                directivity_dbi: cut.farfield.directivity_dbi(i),
                realized_gain_dbi: cut.farfield.realized_gain_dbi(i, cut.p_inc),
            });
        }
    }
    if !rows.is_empty() {
        io::write_pattern_csv(&out_dir.join("pattern.csv"), &rows)?;
    }

    let spec = &result.spec;
    for m in &result.maps {
        let z_center = spec.origin[2] + (m.layer as f64 + 0.5) * spec.dz;
        io::write_flat_binary(
            &out_dir.join(format!("map_{}_{:.2}ghz.bin", m.label, m.freq / 1e9)),
            (spec.nx, spec.ny, 1),
            [spec.dx, spec.dy, spec.dz],
            [spec.origin[0], spec.origin[1], z_center],
            "emag",
            &m.data,
        )?;
    }

    let notes: Vec<String> = result.geometry.notes.clone();
    io::write_text(&out_dir.join("notes.txt"), &(notes.join("\n") + "\n"))?;
    io::write_text(
        &out_dir.join("summary.toml"),
        &toml::to_string_pretty(&result.summary).expect("summary serialization"),
    )?;
    Ok(())
}

/// Voxelize only and export the material volume.
pub fn cmd_mesh_preview(cfg: &RunConfig, base_dir: &Path, out_dir: &Path) -> Result<GridSpec> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let geom = cfg.geometry.build(base_dir)?;
    let spec = resolve_grid(&geom, cfg)?;
    let grid = voxelize(&geom, &spec, cfg.excitation.f0_ghz * 1e9)?;
    io::write_flat_binary(
        &out_dir.join("material_eps_r.bin"),
        (spec.nx, spec.ny, spec.nz),
        [spec.dx, spec.dy, spec.dz],
        spec.origin,
        "epsr",
        &grid.cell_eps_r.data,
    )?;
    let mut report = grid.report.clone();
    report.extend(geom.notes.iter().cloned());
    io::write_text(&out_dir.join("mesh_report.txt"), &(report.join("\n") + "\n"))?;
    Ok(spec)
}

/// One sweep row for the combined CSV.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub summary: RunSummary,
}

/// Repeat a run per parameter value into per-value subdirectories.
pub fn cmd_sweep(
    cfg: &RunConfig,
    base_dir: &Path,
    out_root: &Path,
    param: &str,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    std::fs::create_dir_all(out_root)?;
    let mut rows = Vec::new();
    for &v in values {
        let mut c = cfg.clone();
        crate::config::set_param(&mut c, param, v)?;
        let sub = out_root.join(format!("{}={v}", param.replace('.', "_")));
        let result = cmd_run(&c, base_dir, &sub)?;
        rows.push(SweepRow {
            value: v,
            summary: result.summary,
        });
    }
    // Combined CSV.
    let mut body = String::from("value,f_min_ghz,s11_min_db,band_lo_ghz,band_hi_ghz,frac_bw_pct,gain_dbi_at_f0\n");
    for r in &rows {
        body.push_str(&format!(
            "{},{:.4},{:.2},{},{},{},{}\n",
            r.value,
            r.summary.f_min_ghz,
            r.summary.s11_min_db,
            r.summary.band_lo_ghz.map(|v| format!("{v:.4}")).unwrap_or_default(),
            r.summary.band_hi_ghz.map(|v| format!("{v:.4}")).unwrap_or_default(),
            r.summary.fractional_bw_pct.map(|v| format!("{v:.2}")).unwrap_or_default(),
            r.summary.gain_dbi_at_f0.map(|v| format!("{v:.2}")).unwrap_or_default(),
        ));
    }
    io::write_text(&out_root.join("sweep.csv"), &body)?;
    Ok(rows)
}
