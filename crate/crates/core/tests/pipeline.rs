//! Integration tests for the run/sweep/preview plumbing on deliberately
//! coarse, fast configurations.

use std::path::{Path, PathBuf};

use esiwsim::config::{parse_config, RunConfig};
use esiwsim::io::read_flat_header;
use esiwsim::runner::{cmd_mesh_preview, cmd_run, cmd_sweep};

fn out(tag: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(tag)
}

fn coarse_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.mesh.dx = Some(0.2);
    cfg.mesh.dy = Some(0.2);
    cfg.mesh.dz = Some(0.127);
    cfg.mesh.resolution_scale = 3.0;
    cfg.solver.max_steps = 900;
    cfg.output.write_maps = false;
    cfg.output.cut_ghz = vec![];
    cfg.output.ff_ghz = vec![28.0];
    cfg
}

#[test]
fn run_writes_expected_artifacts() {
    let cfg = coarse_config();
    let dir = out("artifacts");
    let result = cmd_run(&cfg, Path::new("."), &dir).unwrap();
    // Truncated on purpose: the unconverged flag must be set, not an error.
    assert!(!result.summary.converged);
    for f in [
        "resolved.toml",
        "geometry.toml",
        "s11.csv",
        "port_incident.csv",
        "port_total.csv",
        "summary.toml",
        "notes.txt",
    ] {
        assert!(dir.join(f).exists(), "missing artifact {f}");
    }
    // The echoed config replays to the same configuration.
    let echo = std::fs::read_to_string(dir.join("resolved.toml")).unwrap();
    assert_eq!(parse_config(&echo).unwrap(), cfg);
    // s11.csv has the full default grid.
    let s11 = std::fs::read_to_string(dir.join("s11.csv")).unwrap();
    assert_eq!(s11.lines().count(), 1 + 161);
}

#[test]
fn sweep_over_slot_position() {
    let cfg = coarse_config();
    let dir = out("sweep");
    let rows = cmd_sweep(&cfg, Path::new("."), &dir, "geometry.x_s", &[7.1, 7.6]).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(dir.join("sweep.csv").exists());
    assert!(dir.join("geometry_x_s=7.1").join("summary.toml").exists());
    // Coupling must respond to the slot position: the reflection minima of
    // the two runs differ.
    assert!(
        (rows[0].summary.s11_min_db - rows[1].summary.s11_min_db).abs() > 0.1
            || (rows[0].summary.f_min_ghz - rows[1].summary.f_min_ghz).abs() > 0.01
    );
    let empty: &[f64] = &[];
    assert!(cmd_sweep(&cfg, Path::new("."), &dir, "geometry.x_s", empty).is_err());
    assert!(cmd_sweep(&cfg, Path::new("."), &dir, "geometry.nope", &[1.0]).is_err());
}

#[test]
fn mesh_preview_exports_material_volume() {
    let mut cfg = coarse_config();
    cfg.mesh.resolution_scale = 2.0;
    let dir = out("preview");
    let spec = cmd_mesh_preview(&cfg, Path::new("."), &dir).unwrap();
    let bytes = std::fs::read(dir.join("material_eps_r.bin")).unwrap();
    let (dims, spacing, _origin, tag) = read_flat_header(&bytes).unwrap();
    assert_eq!(dims, (spec.nx, spec.ny, spec.nz));
    assert_eq!(tag, "epsr");
    assert!((spacing[0] - spec.dx).abs() < 1e-9);
    assert_eq!(bytes.len(), 64 + 4 * spec.nx * spec.ny * spec.nz);
}

#[test]
fn geometry_file_route_replays_a_build() {
    // Serialize the parametric build, then run from the document route.
    let cfg = coarse_config();
    let geom = cfg.geometry.build(Path::new(".")).unwrap();
    let dir = out("geomfile");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("antenna.toml"), geom.to_text()).unwrap();

    let mut cfg2 = coarse_config();
    cfg2.geometry.file = Some("antenna.toml".into());
    let result = cmd_run(&cfg2, &dir, &out("geomfile_run")).unwrap();
    assert_eq!(result.geometry, geom);

    // Mixing the file route with dimension keys is a config error.
    let mut bad = cfg2.clone();
    bad.geometry.l_p = Some(2.0);
    assert!(bad.geometry.build(&dir).is_err());
}

#[test]
fn unwritable_output_dir_is_io_error() {
    let cfg = coarse_config();
    match cmd_run(&cfg, Path::new("."), Path::new("/proc/nope/out")) {
        Err(esiwsim::Error::Io(_)) => {}
        Err(other) => panic!("expected an I/O error, got {other}"),
        Ok(_) => panic!("run into an unwritable directory must fail"),
    }
}
