//! Acceptance suite: the physics-oracle gates, the published-design
//! reproduction targets and the always-on property checks. Prints one
//! pass/fail line per criterion and fails at the end if any failed.

use std::path::{Path, PathBuf};

use esiwsim::config::{parse_config, RunConfig};
use esiwsim::postproc::{ntff_sphere, BandResult};
use esiwsim::runner::{cmd_run, ludwig3, RunResult};
use esiwsim::validation;

struct Criterion {
    id: String,
    pass: bool,
    detail: String,
}

impl Criterion {
    fn new(id: &str, pass: bool, detail: String) -> Self {
        Self {
            id: id.into(),
            pass,
            detail,
        }
    }
}

fn shipped_config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    let doc = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_config(&doc).expect("shipped config parses")
}

fn out_dir(tag: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(tag)
}

fn run_shipped(name: &str, tag: &str, lossless: bool) -> RunResult {
    let mut cfg = shipped_config(name);
    if lossless {
        cfg.geometry.lossless = true;
        cfg.output.cut_ghz = vec![];
        cfg.output.write_maps = false;
        cfg.output.ff_ghz = vec![27.5, 28.0, 28.5, 29.0];
    }
    cmd_run(&cfg, Path::new("."), &out_dir(tag)).expect("run completes")
}

fn band_of(r: &RunResult) -> Option<(f64, f64, f64)> {
    match r.band {
        BandResult::Band {
            f_lo,
            f_hi,
            fractional_pct,
        } => Some((f_lo / 1e9, f_hi / 1e9, fractional_pct)),
        BandResult::NoMatchedBand => None,
    }
}

fn gain_at(r: &RunResult, f: f64) -> Option<esiwsim::postproc::GainRow> {
    r.gain_rows.iter().find(|g| (g.freq - f).abs() < 1.0).copied()
}

/// Peak angle (deg, signed cut angle) of the realized-gain pattern in a cut.
fn peak_angle(cut: &esiwsim::runner::CutResult) -> (f64, f64) {
    let (idx, _) = cut.farfield.peak();
    let angles = cut.angles();
    (angles[idx], cut.farfield.realized_gain_dbi(idx, cut.p_inc))
}

#[test]
fn acceptance_criteria() {
    let mut cs: Vec<Criterion> = Vec::new();

    // --- Physics-oracle suite (criteria 1-5), gated before reproduction ---
    let checks = validation::run_all(true).expect("oracle suite runs");
    for c in &checks {
        let id = match c.name {
            "wr28_cutoff_knee" => "1 wr28-cutoff",
            "shorted_guide_s11" => "2 shorted-guide",
            "cpml_reflection" => "3 cpml-reflection",
            "cavity_energy_drift" => "4a cavity-energy-drift",
            "cavity_late_field_bound" => "4b cavity-late-stability",
            "hertzian_directivity" => "5a hertzian-dipole",
            "ntff_closure" => "5b ntff-closure",
            "hertzian_sin2_pattern" => "5c dipole-pattern",
            "halfwave_directivity" => "5d halfwave-dipole",
            "halfwave_ntff_closure" => "5e halfwave-closure",
            "standing_wave_null_gap" => "11a standing-wave-nulls",
            other => other,
        };
        cs.push(Criterion::new(id, c.pass, c.line()));
    }

    // --- Paper-reproduction runs ---
    let t = run_shipped("transverse.cfg", "acc_transverse", false);
    let l = run_shipped("longitudinal.cfg", "acc_longitudinal", false);
    let t_ll = run_shipped("transverse.cfg", "acc_transverse_lossless", true);

    // 6: transverse S11 minimum and fractional bandwidth.
    let f_min_t = t.summary.f_min_ghz;
    cs.push(Criterion::new(
        "6a transverse-s11-min",
        (f_min_t - 28.0).abs() <= 0.7,
        format!("S11 minimum at {f_min_t:.3} GHz ({:.1} dB), target 28.0 +/- 0.7", t.summary.s11_min_db),
    ));
    let bt = band_of(&t);
    cs.push(Criterion::new(
        "6b transverse-bandwidth",
        bt.map(|(_, _, p)| (p - 6.8).abs() <= 2.5).unwrap_or(false),
        match bt {
            Some((lo, hi, p)) => format!("-10 dB band {lo:.2}-{hi:.2} GHz, {p:.2} %, target 6.8 +/- 2.5 points"),
            None => "no matched band".into(),
        },
    ));

    // 7: longitudinal band centre and fractional bandwidth.
    let bl = band_of(&l);
    cs.push(Criterion::new(
        "7a longitudinal-band-centre",
        bl.map(|(lo, hi, _)| (0.5 * (lo + hi) - 28.0).abs() <= 0.7).unwrap_or(false),
        match bl {
            Some((lo, hi, _)) => format!("band centre {:.3} GHz, target 28.0 +/- 0.7", 0.5 * (lo + hi)),
            None => "no matched band".into(),
        },
    ));
    cs.push(Criterion::new(
        "7b longitudinal-bandwidth",
        bl.map(|(_, _, p)| (p - 5.0).abs() <= 2.5).unwrap_or(false),
        match bl {
            Some((lo, hi, p)) => format!("-10 dB band {lo:.2}-{hi:.2} GHz, {p:.2} %, target 5.0 +/- 2.5 points"),
            None => "no matched band".into(),
        },
    ));

    // 8: realized broadside gain at 28 GHz, and the mode ordering.
    let g_t = gain_at(&t, 28e9).expect("transverse gain row at 28 GHz");
    let g_l = gain_at(&l, 28e9).expect("longitudinal gain row at 28 GHz");
    cs.push(Criterion::new(
        "8a transverse-gain",
        (g_t.realized_gain_dbi - 7.38).abs() <= 1.0,
        format!("{:.2} dBi, target 7.38 +/- 1.0", g_t.realized_gain_dbi),
    ));
    cs.push(Criterion::new(
        "8b longitudinal-gain",
        (g_l.realized_gain_dbi - 6.57).abs() <= 1.0,
        format!("{:.2} dBi, target 6.57 +/- 1.0", g_l.realized_gain_dbi),
    ));
    cs.push(Criterion::new(
        "8c gain-ordering",
        g_t.realized_gain_dbi > g_l.realized_gain_dbi,
        format!(
            "transverse {:.2} dBi > longitudinal {:.2} dBi",
            g_t.realized_gain_dbi, g_l.realized_gain_dbi
        ),
    ));

    // 9: radiation efficiency at 28 GHz: >= 90 % with datasheet losses,
    // 100 +/- 1 % with the lossless switch (all monitored in-band points).
    cs.push(Criterion::new(
        "9a efficiency-lossy",
        !g_t.flagged && g_t.rad_eff_pct >= 90.0,
        format!("transverse radiation efficiency {:.1} %, target >= 90", g_t.rad_eff_pct),
    ));
    let ll_ok = t_ll
        .gain_rows
        .iter()
        .all(|r| !r.flagged && (r.rad_eff_pct - 100.0).abs() <= 1.0);
    cs.push(Criterion::new(
        "9b efficiency-lossless",
        ll_ok,
        format!(
            "lossless efficiencies: {}",
            t_ll.gain_rows
                .iter()
                .map(|r| format!("{:.2}@{:.1}GHz", r.rad_eff_pct, r.freq / 1e9))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ));

    // 10: pattern maximum at broadside in both cut planes, both modes.
    for (r, mode) in [(&t, "transverse"), (&l, "longitudinal")] {
        for cut in &r.cuts {
            if (cut.freq - 28e9).abs() > 1.0 {
                continue;
            }
            let (ang, g) = peak_angle(cut);
            cs.push(Criterion::new(
                &format!("10 broadside-{}-{}", mode, cut.label),
                ang.abs() <= 5.0,
                format!("{}-plane peak at {ang:.1} deg ({g:.2} dBi)", cut.label),
            ));
        }
    }

    // 11b: |E| local maximum inside the slot footprint (patch-substrate
    // mid-plane map at 28 GHz).
    {
        let lm = t.geometry.landmarks.as_ref().unwrap();
        let map = t
            .maps
            .iter()
            .find(|m| m.label == "patch_substrate" && (m.freq - 28e9).abs() < 1.0)
            .expect("patch-substrate map at 28 GHz");
        let spec = &t.spec;
        let (sx, sy) = lm.slot_center;
        let (shx, shy) = match lm.mode {
            esiwsim::geometry::SlotMode::Transverse => (0.5, 1.1),
            esiwsim::geometry::SlotMode::Longitudinal => (1.1, 0.5),
        };
        let mut best = (0usize, 0usize, f64::MIN);
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let v = map.data[j * spec.nx + i];
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        let bx = spec.origin[0] + (best.0 as f64 + 0.5) * spec.dx;
        let by = spec.origin[1] + (best.1 as f64 + 0.5) * spec.dy;
        let inside = (bx - sx).abs() <= shx + spec.dx && (by - sy).abs() <= shy + spec.dy;
        cs.push(Criterion::new(
            "11b slot-field-maximum",
            inside,
            format!(
                "|E| max at ({bx:.2}, {by:.2}) mm; slot centre ({sx:.2}, {sy:.2}), half extents ({shx}, {shy})"
            ),
        ));
    }

    // --- Always-on property suite on the reproduction artifacts ---

    // Passivity.
    for (r, mode) in [(&t, "transverse"), (&l, "longitudinal"), (&t_ll, "lossless")] {
        let max_mag = r.trace.max_mag();
        cs.push(Criterion::new(
            &format!("P passivity-{mode}"),
            max_mag <= 1.0 + 1e-6,
            format!("max |S11| = {max_mag:.6}"),
        ));
    }

    // Realized gain never exceeds directivity.
    let g_le_d = t
        .gain_rows
        .iter()
        .chain(&l.gain_rows)
        .all(|r| r.realized_gain_dbi <= r.directivity_dbi + 1e-9);
    cs.push(Criterion::new(
        "P gain-le-directivity",
        g_le_d,
        "realized gain <= directivity at every monitored frequency".into(),
    ));

    // Transverse E-plane cut symmetric about theta = 0 within 0.2 dB over
    // the main lobe (co-pol within 15 dB of the peak).
    {
        let cut = t
            .cuts
            .iter()
            .find(|c| c.label == "E" && (c.freq - 28e9).abs() < 1.0)
            .expect("transverse E-plane cut");
        let angles = cut.angles();
        let co_axis = t.geometry.landmarks.as_ref().unwrap().co_pol_axis;
        let co: Vec<f64> = cut
            .farfield
            .samples
            .iter()
            .map(|s| ludwig3(co_axis, s).0)
            .collect();
        let peak = co.iter().cloned().fold(0.0f64, f64::max);
        let mut worst: f64 = 0.0;
        for (i, &a) in angles.iter().enumerate() {
            if a <= 0.0 || a >= 175.0 {
                continue;
            }
            if co[i] < peak * 10f64.powf(-15.0 / 20.0) {
                continue;
            }
            if let Some(j) = angles.iter().position(|&b| (b + a).abs() < 1e-9) {
                let asym = (20.0 * (co[i] / co[j]).log10()).abs();
                worst = worst.max(asym);
            }
        }
        cs.push(Criterion::new(
            "P eplane-mirror-symmetry",
            worst <= 0.2,
            format!("worst main-lobe asymmetry {worst:.3} dB (limit 0.2)"),
        ));
    }

    // Informative: directivity closure on the (punctured) antenna surface.
    if let Some(h) = &t.huygens {
        if let Some(fi) = h.freq_index(28e9) {
            let (ff, integral) = ntff_sphere(h, fi, 2.0);
            let closure = (integral - ff.p_rad).abs() / ff.p_rad * 100.0;
            cs.push(Criterion::new(
                "P antenna-closure",
                closure <= 2.0,
                format!("sphere integral vs surface flux: {closure:.2} % (punctured feed face; informative limit 2 %)"),
            ));
        }
    }

    // --- Report ---
    let mut all_pass = true;
    println!();
    for c in &cs {
        println!("[{}] {:<32} {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.detail);
        all_pass &= c.pass;
    }
    println!();
    assert!(all_pass, "acceptance criteria failed; see the report above");
}

/// Property: bitwise-identical probe records across reruns of the same
/// configuration (a fast coarse variant keeps this affordable).
#[test]
fn property_rerun_determinism() {
    let mut cfg = shipped_config("transverse.cfg");
    cfg.mesh.resolution_scale = 3.0;
    cfg.solver.max_steps = 600;
    cfg.output.write_maps = false;
    cfg.output.cut_ghz = vec![];
    cfg.output.ff_ghz = vec![28.0];
    let a = cmd_run(&cfg, Path::new("."), &out_dir("det_a")).unwrap();
    let b = cmd_run(&cfg, Path::new("."), &out_dir("det_b")).unwrap();
    assert_eq!(a.record.a_total.len(), b.record.a_total.len());
    for (x, y) in a.record.a_total.iter().zip(&b.record.a_total) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    for (x, y) in a.record.a_inc.iter().zip(&b.record.a_inc) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    // The CSV artifacts are byte-identical (timestamps live in the summary only).
    for file in ["s11.csv", "port_total.csv", "port_incident.csv"] {
        let fa = std::fs::read(out_dir("det_a").join(file)).unwrap();
        let fb = std::fs::read(out_dir("det_b").join(file)).unwrap();
        assert_eq!(fa, fb, "{file} differs between reruns");
    }
}

/// Property: mesher oracle equivalence on both shipped geometries — every
/// sampled E-edge coefficient matches an independent point-in-box average.
#[test]
fn property_mesher_oracle_on_shipped_geometries() {
    use esiwsim::mesh::{voxelize, EComp};
    use esiwsim::EPS0;
    for name in ["transverse.cfg", "longitudinal.cfg"] {
        let cfg = shipped_config(name);
        let geom = cfg.geometry.build(Path::new(".")).unwrap();
        let spec = esiwsim::runner::resolve_grid(&geom, &cfg).unwrap();
        let grid = voxelize(&geom, &spec, 28e9).unwrap();
        for comp in EComp::ALL {
            let arr = &grid.eps[comp.index()];
            let (ta, tb) = match comp {
                EComp::Ex => (1usize, 2usize),
                EComp::Ey => (0, 2),
                EComp::Ez => (0, 1),
            };
            let d = [spec.dx, spec.dy, spec.dz];
            let n = [spec.nx, spec.ny, spec.nz];
            for k in (0..arr.nz).step_by(3) {
                for j in (0..arr.ny).step_by(3) {
                    for i in (0..arr.nx).step_by(3) {
                        let mut sum = 0.0;
                        let mut cnt = 0.0;
                        for da in 0..2i64 {
                            for db in 0..2i64 {
                                let mut cell = [i as i64, j as i64, k as i64];
                                cell[ta] += da - 1;
                                cell[tb] += db - 1;
                                if cell[ta] < 0
                                    || cell[ta] >= n[ta] as i64
                                    || cell[tb] < 0
                                    || cell[tb] >= n[tb] as i64
                                {
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
                        let want = if cnt > 0.0 { sum / cnt * EPS0 } else { EPS0 };
                        let got = *arr.at(i, j, k);
                        assert!(
                            (want - got).abs() <= 1e-9 * EPS0,
                            "{name} {:?} ({i},{j},{k}): {} vs {}",
                            comp,
                            got / EPS0,
                            want / EPS0
                        );
                    }
                }
            }
        }
    }
}

/// Property: transverse-mode geometry is mirror-symmetric and its
/// voxelization at an aligned resolution mirrors bitwise.
#[test]
fn property_voxel_mirror_symmetry() {
    use esiwsim::mesh::{voxelize, GridSpec};
    let cfg = shipped_config("transverse.cfg");
    let geom = cfg.geometry.build(Path::new(".")).unwrap();
    assert!(geom.is_mirror_symmetric_y());
    let d = 0.1;
    let ny = ((geom.bbox_max[1] - geom.bbox_min[1]) / d).round() as usize;
    let spec = GridSpec {
        dx: 0.2,
        dy: d,
        dz: 0.127,
        nx: ((geom.bbox_max[0] - geom.bbox_min[0]) / 0.2).ceil() as usize,
        ny,
        nz: ((geom.bbox_max[2] - geom.bbox_min[2]) / 0.127).ceil() as usize + 1,
        origin: [
            (geom.bbox_min[0] / 0.2).floor() * 0.2,
            -(ny as f64) * d / 2.0,
            (geom.bbox_min[2] / 0.127).floor() * 0.127,
        ],
    };
    let grid = voxelize(&geom, &spec, 28e9).unwrap();
    assert!(grid.is_mirror_symmetric_y());
}

/// The second Table-I example: the longitudinal geometry derives its cavity
/// length and keeps the slot strictly on the cavity wall.
#[test]
fn shipped_longitudinal_geometry_sane() {
    let cfg = shipped_config("longitudinal.cfg");
    let geom = cfg.geometry.build(Path::new(".")).unwrap();
    let lm = geom.landmarks.as_ref().unwrap();
    assert!((lm.short_x - lm.mouth_x - 10.0).abs() < 1e-9);
    assert!((lm.slot_center.1 - 2.2).abs() < 1e-9);
}
