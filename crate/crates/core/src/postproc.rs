//! Post-processing: S11 extraction, bandwidth, the near-to-far-field
//! transform, gain and efficiency tables, and field-map helpers.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::sim::{FaceDft, Huygens};
use crate::{Error, Result, C0, ETA0};

/// Direct DFT of a step series whose sample n sits at t = (n + 1) dt.
/// Scaled by dt (a continuous-transform estimate).
pub fn dft(series: &[f64], dt: f64, f: f64) -> Complex64 {
    let w = -2.0 * std::f64::consts::PI * f * dt;
    let rot = Complex64::from_polar(1.0, w);
    let mut phase = rot; // t of the first sample is dt
    let mut acc = Complex64::default();
    for &v in series {
        acc += phase * v;
        phase *= rot;
    }
    acc * dt
}

/// Incident and total modal-amplitude series from the two-run scheme.
#[derive(Debug, Clone)]
pub struct PortRecord {
    pub dt: f64,
    /// Total run (device under test in place).
    pub a_total: Vec<f64>,
    /// Reference run (matched straight guide).
    pub a_inc: Vec<f64>,
    pub total_converged: bool,
    pub inc_converged: bool,
    /// Recording plane (mm).
    pub plane_x_mm: f64,
}

impl PortRecord {
    pub fn converged(&self) -> bool {
        self.total_converged && self.inc_converged
    }
}

/// S11 over a frequency grid.
#[derive(Debug, Clone)]
pub struct SParamTrace {
    pub freqs: Vec<f64>,
    pub s11: Vec<Complex64>,
    /// Set when derived from an unconverged run under the override flag.
    pub approximate: bool,
}

impl SParamTrace {
    pub fn mag(&self, i: usize) -> f64 {
        self.s11[i].norm()
    }

    pub fn mag_db(&self, i: usize) -> f64 {
        20.0 * self.mag(i).max(1e-300).log10()
    }

    pub fn max_mag(&self) -> f64 {
        (0..self.freqs.len()).map(|i| self.mag(i)).fold(0.0, f64::max)
    }

    /// |S11| at an arbitrary frequency by linear interpolation.
    pub fn mag_at(&self, f: f64) -> Option<f64> {
        if self.freqs.is_empty() || f < self.freqs[0] || f > *self.freqs.last().unwrap() {
            return None;
        }
        let i = match self.freqs.binary_search_by(|g| g.partial_cmp(&f).unwrap()) {
            Ok(i) => return Some(self.mag(i)),
            Err(i) => i,
        };
        let (f0, f1) = (self.freqs[i - 1], self.freqs[i]);
        let (m0, m1) = (self.mag(i - 1), self.mag(i));
        Some(m0 + (m1 - m0) * (f - f0) / (f1 - f0))
    }

    /// Frequency and level (dB) of the deepest minimum.
    pub fn minimum(&self) -> (f64, f64) {
        let mut best = (self.freqs[0], self.mag_db(0));
        for i in 1..self.freqs.len() {
            let db = self.mag_db(i);
            if db < best.1 {
                best = (self.freqs[i], db);
            }
        }
        best
    }
}

/// S11(f) = DFT(a_total - a_inc) / DFT(a_inc). The requested grid must be
/// strictly increasing and stay inside the excitation band.
pub fn s11_from_records(
    rec: &PortRecord,
    freqs: &[f64],
    band: (f64, f64),
    allow_unconverged: bool,
) -> Result<SParamTrace> {
    if !rec.converged() && !allow_unconverged {
        return Err(Error::Unconverged(
            "port records were truncated before the energy-decay rule fired".into(),
        ));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("freqs", "must be strictly increasing"));
    }
    if freqs.is_empty() || freqs[0] < band.0 - 1.0 || *freqs.last().unwrap() > band.1 + 1.0 {
        return Err(Error::invalid(
            "freqs",
            format!(
                "requested grid must lie inside the excitation band {:.2}-{:.2} GHz",
                band.0 / 1e9,
                band.1 / 1e9
            ),
        ));
    }
    let reflected: Vec<f64> = {
        let n = rec.a_total.len().max(rec.a_inc.len());
        (0..n)
            .map(|i| {
                rec.a_total.get(i).copied().unwrap_or(0.0) - rec.a_inc.get(i).copied().unwrap_or(0.0)
            })
            .collect()
    };
    let s11 = freqs
        .par_iter()
        .map(|&f| {
            let inc = dft(&rec.a_inc, rec.dt, f);
            let refl = dft(&reflected, rec.dt, f);
            refl / inc
        })
        .collect();
    Ok(SParamTrace {
        freqs: freqs.to_vec(),
        s11,
        approximate: !rec.converged(),
    })
}

/// Result of the matched-band search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandResult {
    Band {
        f_lo: f64,
        f_hi: f64,
        fractional_pct: f64,
    },
    NoMatchedBand,
}

/// Contiguous band around the deepest minimum where |S11| stays at or below
/// `threshold_db`. Band edges are interpolated between samples; the
/// fractional bandwidth is normalized to the band centre.
pub fn bandwidth(trace: &SParamTrace, threshold_db: f64) -> BandResult {
    let n = trace.freqs.len();
    let db: Vec<f64> = (0..n).map(|i| trace.mag_db(i)).collect();
    let (imin, _) = db
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if db[imin] > threshold_db {
        return BandResult::NoMatchedBand;
    }
    let cross = |i_in: usize, i_out: usize| -> f64 {
        // Interpolate the threshold crossing between an in-band and an
        // out-of-band sample.
        let (f_in, f_out) = (trace.freqs[i_in], trace.freqs[i_out]);
        let (d_in, d_out) = (db[i_in], db[i_out]);
        f_in + (f_out - f_in) * (threshold_db - d_in) / (d_out - d_in)
    };
    let mut lo = imin;
    while lo > 0 && db[lo - 1] <= threshold_db {
        lo -= 1;
    }
    let f_lo = if lo == 0 { trace.freqs[0] } else { cross(lo, lo - 1) };
    let mut hi = imin;
    while hi + 1 < n && db[hi + 1] <= threshold_db {
        hi += 1;
    }
    let f_hi = if hi == n - 1 { trace.freqs[n - 1] } else { cross(hi, hi + 1) };
    let centre = 0.5 * (f_lo + f_hi);
    BandResult::Band {
        f_lo,
        f_hi,
        fractional_pct: (f_hi - f_lo) / centre * 100.0,
    }
}

/// One far-field direction sample. The stored quantities are the
/// r-normalized far-zone amplitudes (r e^{jkr} E).
#[derive(Debug, Clone, Copy)]
pub struct FarFieldSample {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub e_theta: Complex64,
    pub e_phi: Complex64,
}

impl FarFieldSample {
    /// Radiation intensity U (W/sr in DFT-normalized units).
    pub fn intensity(&self) -> f64 {
        (self.e_theta.norm_sqr() + self.e_phi.norm_sqr()) / (2.0 * ETA0)
    }
}

/// Far field at one frequency plus the powers needed for directivity and
/// realized gain.
#[derive(Debug, Clone)]
pub struct FarField {
    pub freq: f64,
    pub samples: Vec<FarFieldSample>,
    /// Radiated power: the near-field Poynting flux through the surface.
    pub p_rad: f64,
}

impl FarField {
    pub fn directivity_dbi(&self, idx: usize) -> f64 {
        let u = self.samples[idx].intensity();
        10.0 * (4.0 * std::f64::consts::PI * u / self.p_rad).max(1e-300).log10()
    }

    /// Realized gain against the incident power at the port.
    pub fn realized_gain_dbi(&self, idx: usize, p_inc: f64) -> f64 {
        let u = self.samples[idx].intensity();
        10.0 * (4.0 * std::f64::consts::PI * u / p_inc).max(1e-300).log10()
    }

    pub fn peak(&self) -> (usize, f64) {
        let mut best = (0usize, f64::MIN);
        for (i, s) in self.samples.iter().enumerate() {
            let u = s.intensity();
            if u > best.1 {
                best = (i, u);
            }
        }
        best
    }
}

/// Equivalent surface currents of one face, flattened for the transform.
struct FacePatch {
    jx: Vec<Complex64>,
    jy: Vec<Complex64>,
    jz: Vec<Complex64>,
    mx: Vec<Complex64>,
    my: Vec<Complex64>,
    mz: Vec<Complex64>,
    /// Cell centres (m).
    centers: Vec<[f64; 3]>,
    /// Row layout for the phase recurrence: nu cells per row, du step (m)
    /// along the u axis.
    nu: usize,
    du: [f64; 3],
    da: f64,
}

fn face_patch(face: &FaceDft, fi: usize) -> FacePatch {
    let (ua, va) = face.uv_axes();
    let n_idx = face.normal.index();
    let (u0, u1) = face.u_range;
    let (v0, v1) = face.v_range;
    let nu = u1 - u0;
    let mut patch = FacePatch {
        jx: Vec::new(),
        jy: Vec::new(),
        jz: Vec::new(),
        mx: Vec::new(),
        my: Vec::new(),
        mz: Vec::new(),
        centers: Vec::new(),
        nu,
        du: {
            let mut d = [0.0; 3];
            d[ua.index()] = face.spec.d(ua) * 1e-3;
            d
        },
        da: face.cell_area(),
    };
    let mut normal = [0.0; 3];
    normal[n_idx] = face.outward;
    for v in v0..v1 {
        for u in u0..u1 {
            let (mut e, mut h) = ([Complex64::default(); 3], [Complex64::default(); 3]);
            if face.included(u, v) {
                let (eu, ev, hu, hv) = face.phasors(fi, u, v);
                e[ua.index()] = eu;
                e[va.index()] = ev;
                h[ua.index()] = hu;
                h[va.index()] = hv;
            }
            // J = n x H, M = -n x E.
            let cross = |n: &[f64; 3], f: &[Complex64; 3]| {
                [
                    f[2] * n[1] - f[1] * n[2],
                    f[0] * n[2] - f[2] * n[0],
                    f[1] * n[0] - f[0] * n[1],
                ]
            };
            let j = cross(&normal, &h);
            let m = cross(&normal, &e);
            patch.jx.push(j[0]);
            patch.jy.push(j[1]);
            patch.jz.push(j[2]);
            patch.mx.push(-m[0]);
            patch.my.push(-m[1]);
            patch.mz.push(-m[2]);
            patch.centers.push(face.cell_center_m(u, v));
        }
    }
    patch
}

/// Near-to-far-field transform at frequency index `fi` of the surface
/// record, evaluated for the given (theta, phi) directions in degrees.
pub fn ntff(h: &Huygens, fi: usize, directions: &[(f64, f64)]) -> FarField {
    let freq = h.freqs[fi];
    let k = 2.0 * std::f64::consts::PI * freq / C0;
    let patches: Vec<FacePatch> = h.faces.iter().map(|f| face_patch(f, fi)).collect();
    let p_rad = h.radiated_power(fi);

    let samples: Vec<FarFieldSample> = directions
        .par_iter()
        .map(|&(theta_deg, phi_deg)| {
            let th = theta_deg.to_radians();
            let ph = phi_deg.to_radians();
            let (st, ct) = th.sin_cos();
            let (sp, cp) = ph.sin_cos();
            let rhat = [st * cp, st * sp, ct];
            let mut n_vec = [Complex64::default(); 3];
            let mut l_vec = [Complex64::default(); 3];
            for p in &patches {
                // Per row, the phase advances by a constant rotation.
                let dphase = k * (rhat[0] * p.du[0] + rhat[1] * p.du[1] + rhat[2] * p.du[2]);
                let rot = Complex64::from_polar(1.0, dphase);
                let rows = p.centers.len() / p.nu.max(1);
                for r in 0..rows {
                    let base = r * p.nu;
                    let c0 = p.centers[base];
                    let phase0 = k * (rhat[0] * c0[0] + rhat[1] * c0[1] + rhat[2] * c0[2]);
                    let mut ph_c = Complex64::from_polar(p.da, phase0);
                    for c in base..base + p.nu {
                        n_vec[0] += p.jx[c] * ph_c;
                        n_vec[1] += p.jy[c] * ph_c;
                        n_vec[2] += p.jz[c] * ph_c;
                        l_vec[0] += p.mx[c] * ph_c;
                        l_vec[1] += p.my[c] * ph_c;
                        l_vec[2] += p.mz[c] * ph_c;
                        ph_c *= rot;
                    }
                }
            }
            let n_th = n_vec[0] * (ct * cp) + n_vec[1] * (ct * sp) - n_vec[2] * st;
            let n_ph = -n_vec[0] * sp + n_vec[1] * cp;
            let l_th = l_vec[0] * (ct * cp) + l_vec[1] * (ct * sp) - l_vec[2] * st;
            let l_ph = -l_vec[0] * sp + l_vec[1] * cp;
            let jk = Complex64::new(0.0, k);
            let scale = 1.0 / (4.0 * std::f64::consts::PI);
            FarFieldSample {
                theta_deg,
                phi_deg,
                e_theta: -jk * scale * (l_ph + ETA0 * n_th),
                e_phi: jk * scale * (l_th - ETA0 * n_ph),
            }
        })
        .collect();

    FarField {
        freq,
        samples,
        p_rad,
    }
}

/// Full-sphere evaluation on a regular grid plus the closure integral of the
/// radiation intensity. `step_deg` applies to both angles.
pub fn ntff_sphere(h: &Huygens, fi: usize, step_deg: f64) -> (FarField, f64) {
    let n_th = (180.0 / step_deg).round() as usize + 1;
    let n_ph = (360.0 / step_deg).round() as usize;
    let mut dirs = Vec::with_capacity(n_th * n_ph);
    for it in 0..n_th {
        for ip in 0..n_ph {
            dirs.push((it as f64 * step_deg, ip as f64 * step_deg));
        }
    }
    let ff = ntff(h, fi, &dirs);
    // Trapezoid in theta, periodic rectangle in phi.
    let dth = step_deg.to_radians();
    let dph = step_deg.to_radians();
    let mut integral = 0.0;
    for it in 0..n_th {
        let w_th = if it == 0 || it == n_th - 1 { 0.5 } else { 1.0 };
        let sin_th = (it as f64 * step_deg).to_radians().sin();
        for ip in 0..n_ph {
            integral += w_th * ff.samples[it * n_ph + ip].intensity() * sin_th * dth * dph;
        }
    }
    (ff, integral)
}

/// A principal-plane cut: signed theta from -180 to 180 at constant phi
/// (negative theta maps to phi + 180).
pub fn cut_directions(phi_deg: f64, step_deg: f64) -> Vec<(f64, f64)> {
    let n = (360.0 / step_deg).round() as usize;
    (0..n)
        .map(|i| {
            let t = -180.0 + i as f64 * step_deg;
            if t >= 0.0 {
                (t, phi_deg)
            } else {
                (-t, phi_deg + 180.0)
            }
        })
        .collect()
}

/// Signed cut angle of sample `i` produced by [`cut_directions`].
pub fn cut_angle(phi_deg: f64, dir: (f64, f64)) -> f64 {
    if (dir.1 - phi_deg).abs() < 1e-9 {
        dir.0
    } else {
        -dir.0
    }
}

/// One row of the gain/efficiency table.
#[derive(Debug, Clone, Copy)]
pub struct GainRow {
    pub freq: f64,
    pub realized_gain_dbi: f64,
    pub directivity_dbi: f64,
    /// Radiated / accepted power, percent.
    pub rad_eff_pct: f64,
    /// Radiated / incident power, percent.
    pub tot_eff_pct: f64,
    /// Set when the accepted power was non-positive (row unusable).
    pub flagged: bool,
}

/// Broadside gain, directivity and efficiencies per frequency. `flux_inc`
/// is the incident-power monitor from the reference run; it must share the
/// Huygens frequency list.
pub fn gain_efficiency_vs_freq(
    h: &Huygens,
    flux_inc: &FaceDft,
    trace: &SParamTrace,
    boresight: (f64, f64),
) -> Result<Vec<GainRow>> {
    if flux_inc.freqs != h.freqs {
        return Err(Error::invalid(
            "gain",
            "incident-flux and surface monitors must share the frequency list",
        ));
    }
    let mut rows = Vec::new();
    for (fi, &f) in h.freqs.iter().enumerate() {
        let s11 = trace
            .mag_at(f)
            .ok_or_else(|| Error::invalid("gain", format!("{:.3} GHz outside the S11 trace", f / 1e9)))?;
        let ff = ntff(h, fi, &[boresight]);
        let u0 = ff.samples[0].intensity();
        let p_inc = flux_inc.flux(fi);
        let p_rad = ff.p_rad;
        let p_acc = p_inc * (1.0 - s11 * s11);
        let flagged = p_acc <= 1e-12 * p_inc.abs() || p_inc <= 0.0;
        let four_pi = 4.0 * std::f64::consts::PI;
        rows.push(GainRow {
            freq: f,
            realized_gain_dbi: 10.0 * (four_pi * u0 / p_inc).max(1e-300).log10(),
            directivity_dbi: 10.0 * (four_pi * u0 / p_rad).max(1e-300).log10(),
            rad_eff_pct: if flagged { f64::NAN } else { p_rad / p_acc * 100.0 },
            tot_eff_pct: if p_inc > 0.0 { p_rad / p_inc * 100.0 } else { f64::NAN },
            flagged,
        });
    }
    Ok(rows)
}

/// Positions (mm) of local minima along a 1-D magnitude profile sampled at
/// `pitch_mm`, with parabolic sub-sample refinement. Shallow ripples are
/// ignored via the `rel_floor` threshold on the global maximum.
pub fn minima_positions(line: &[f64], pitch_mm: f64, rel_floor: f64) -> Vec<f64> {
    let peak = line.iter().cloned().fold(0.0f64, f64::max);
    let mut out = Vec::new();
    for i in 1..line.len() - 1 {
        if line[i] <= line[i - 1] && line[i] < line[i + 1] && line[i] < rel_floor * peak {
            let denom = line[i - 1] - 2.0 * line[i] + line[i + 1];
            let frac = if denom.abs() > 1e-30 {
                0.5 * (line[i - 1] - line[i + 1]) / denom
            } else {
                0.0
            };
            out.push((i as f64 + frac) * pitch_mm);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dft_of_pure_tone() {
        let f = 1e9;
        let dt = 1e-12;
        let n = 4000;
        let series: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * ((i + 1) as f64 * dt)).cos())
            .collect();
        let x = dft(&series, dt, f);
        // cos transforms to ~T/2 at its own frequency.
        assert_relative_eq!(x.re, n as f64 * dt / 2.0, max_relative = 1e-3);
    }

    #[test]
    fn bandwidth_matches_reported_arithmetic() {
        // Synthetic traces with known -10 dB crossings: 27.4-29.3 GHz is a
        // 6.70 % fractional band, 27.3-28.7 GHz is 5.0 %.
        let mk = |f_lo: f64, f_hi: f64| {
            let freqs: Vec<f64> = (0..=160).map(|i| 24e9 + i as f64 * 0.05e9).collect();
            let s11: Vec<Complex64> = freqs
                .iter()
                .map(|&f| {
                    // Deep notch centred between the crossings, exactly -10 dB
                    // at them, rising above threshold outside (quadratic).
                    let c = 0.5 * (f_lo + f_hi);
                    let half = 0.5 * (f_hi - f_lo);
                    let x = ((f - c) / half).abs();
                    let db = if x <= 1.0 {
                        -10.0 - 20.0 * (1.0 - x * x)
                    } else {
                        -10.0 + 15.0 * (x * x - 1.0).min(0.6)
                    };
                    Complex64::new(10f64.powf(db / 20.0), 0.0)
                })
                .collect();
            SParamTrace {
                freqs,
                s11,
                approximate: false,
            }
        };
        match bandwidth(&mk(27.4e9, 29.3e9), -10.0) {
            BandResult::Band { fractional_pct, .. } => {
                assert_relative_eq!(fractional_pct, 6.7019, max_relative = 2e-3)
            }
            _ => panic!("band expected"),
        }
        match bandwidth(&mk(27.3e9, 28.7e9), -10.0) {
            BandResult::Band { fractional_pct, .. } => {
                assert_relative_eq!(fractional_pct, 5.0, max_relative = 2e-3)
            }
            _ => panic!("band expected"),
        }
    }

    #[test]
    fn flat_shallow_trace_has_no_band() {
        let freqs: Vec<f64> = (0..=80).map(|i| 24e9 + i as f64 * 0.1e9).collect();
        let s11 = vec![Complex64::new(10f64.powf(-5.0 / 20.0), 0.0); freqs.len()];
        let trace = SParamTrace {
            freqs,
            s11,
            approximate: false,
        };
        assert_eq!(bandwidth(&trace, -10.0), BandResult::NoMatchedBand);
    }

    #[test]
    fn s11_of_time_shifted_records_has_identical_magnitude() {
        // A time shift only rotates phases.
        let dt = 1e-12;
        let pulse = |t0: f64| -> Vec<f64> {
            (0..6000)
                .map(|i| {
                    let t = (i + 1) as f64 * dt - t0;
                    (2.0 * std::f64::consts::PI * 28e9 * t).sin() * (-(t / 8e-11).powi(2)).exp()
                })
                .collect()
        };
        let rec = |t0: f64| PortRecord {
            dt,
            a_total: {
                let mut v = pulse(t0);
                let echo = pulse(t0 + 1.2e-9);
                for (a, b) in v.iter_mut().zip(echo) {
                    *a += 0.3 * b;
                }
                v
            },
            a_inc: pulse(t0),
            total_converged: true,
            inc_converged: true,
            plane_x_mm: 10.0,
        };
        let freqs: Vec<f64> = (0..=40).map(|i| 26e9 + i as f64 * 0.1e9).collect();
        let band = (24e9, 32e9);
        let a = s11_from_records(&rec(1e-9), &freqs, band, false).unwrap();
        let b = s11_from_records(&rec(1.35e-9), &freqs, band, false).unwrap();
        for i in 0..freqs.len() {
            assert_relative_eq!(a.mag(i), b.mag(i), max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn unconverged_records_refused_without_override() {
        let rec = PortRecord {
            dt: 1e-12,
            a_total: vec![0.0; 100],
            a_inc: vec![1.0; 100],
            total_converged: false,
            inc_converged: true,
            plane_x_mm: 0.0,
        };
        let freqs = vec![26e9, 28e9];
        assert!(s11_from_records(&rec, &freqs, (24e9, 32e9), false).is_err());
        let trace = s11_from_records(&rec, &freqs, (24e9, 32e9), true).unwrap();
        assert!(trace.approximate);
    }

    #[test]
    fn minima_spacing_of_sine_profile() {
        // |sin(pi x / 8.13)| has nulls every 8.13 mm.
        let pitch = 0.1;
        let line: Vec<f64> = (0..400)
            .map(|i| (std::f64::consts::PI * i as f64 * pitch / 8.13).sin().abs())
            .collect();
        let nulls = minima_positions(&line, pitch, 0.5);
        assert!(nulls.len() >= 3);
        for w in nulls.windows(2) {
            assert_relative_eq!(w[1] - w[0], 8.13, max_relative = 0.02);
        }
    }
}
