//! TE10 waveguide port: pulse waveform, mode template, soft-source
//! injection and modal recording.

use serde::{Deserialize, Serialize};

use crate::geometry::{Axis, PortSpec};
use crate::mesh::{Array3, GridSpec};
use crate::{Error, Result, C0, ETA0};

/// Gaussian-modulated sinusoid. The modulation width is set from the
/// requested -20 dB bandwidth; the sine carrier nulls the spectrum at DC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    /// Centre frequency (Hz).
    pub f0: f64,
    /// Full -20 dB bandwidth (Hz).
    pub f_bw: f64,
    /// Envelope delay (s); at least four Gaussian widths for a smooth start.
    pub delay: f64,
}

impl Waveform {
    pub fn gaussian_sine(f0: f64, f_bw: f64) -> Self {
        let tau = Self::tau_for(f_bw);
        Self {
            f0,
            f_bw,
            delay: 4.5 * tau,
        }
    }

    /// Gaussian width: exp(-(pi tau f_bw / 2)^2) = 10^(-1) at the band edge.
    fn tau_for(f_bw: f64) -> f64 {
        2.0 * (10.0f64.ln()).sqrt() / (std::f64::consts::PI * f_bw)
    }

    pub fn tau(&self) -> f64 {
        Self::tau_for(self.f_bw)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let u = (t - self.delay) / self.tau();
        if u.abs() > 8.0 {
            return 0.0;
        }
        (2.0 * std::f64::consts::PI * self.f0 * (t - self.delay)).sin() * (-u * u).exp()
    }

    /// Envelope magnitude of the spectrum relative to the peak at f0.
    pub fn relative_spectrum(&self, f: f64) -> f64 {
        let tau = self.tau();
        let arg = std::f64::consts::PI * tau;
        let lobe = |fc: f64| (-(arg * (f - fc)).powi(2)).exp();
        // The sine carrier makes the two lobes subtract; at DC they cancel.
        (lobe(self.f0) - lobe(-self.f0)).abs()
    }

    /// Band covered down to -20 dB.
    pub fn band(&self) -> (f64, f64) {
        (self.f0 - self.f_bw / 2.0, self.f0 + self.f_bw / 2.0)
    }

    /// Time after which the envelope is below ~1e-12 of its peak.
    pub fn quiet_after(&self) -> f64 {
        self.delay + 5.3 * self.tau()
    }

    /// Spectral content at DC and at `f_mesh_max` must sit 60 dB under the
    /// peak, and the delay must give a smooth start.
    pub fn validate(&self, f_mesh_max: f64) -> Result<()> {
        if self.f0 <= 0.0 || self.f_bw <= 0.0 || self.f0 <= self.f_bw / 2.0 {
            return Err(Error::invalid("waveform", "need 0 < f_bw/2 < f0"));
        }
        if self.delay < 4.0 * self.tau() {
            return Err(Error::invalid(
                "waveform.delay",
                "must be at least four Gaussian widths",
            ));
        }
        if self.relative_spectrum(0.0) > 1e-3 {
            return Err(Error::invalid("waveform", "spectral content at DC above -60 dB"));
        }
        if f_mesh_max > self.f0 && self.relative_spectrum(f_mesh_max) > 1e-3 {
            return Err(Error::invalid(
                "waveform",
                format!(
                    "spectral content at the mesh limit {:.2} GHz above -60 dB",
                    f_mesh_max / 1e9
                ),
            ));
        }
        Ok(())
    }
}

/// Discretized TE10 mode template over a port cross-section.
///
/// The guide axis is x; the electric field is z-directed and varies as a
/// half sine across the broad (y) wall, uniform along the narrow wall.
/// Values live on the Ez edges strictly inside the port rectangle and are
/// normalized so the discrete overlap of the template with itself is one;
/// recording a field then returns its modal coordinate in that orthonormal
/// basis.
#[derive(Debug, Clone)]
pub struct ModePort {
    /// Wall plane indices along y (j0 and j1 are the side walls).
    pub j0: usize,
    pub j1: usize,
    /// Wall plane indices along z.
    pub k0: usize,
    pub k1: usize,
    /// Template values per (j, k) Ez edge, j in j0+1..j1, k in k0..k1.
    values: Vec<f64>,
    /// Snapped broad-wall width (m).
    pub a_m: f64,
    /// Snapped narrow-wall height (m).
    pub b_m: f64,
    /// Edge cell area dy*dz (m^2).
    pub cell_area: f64,
}

impl ModePort {
    /// Build the TE10 template for `port` on `spec`. The broad wall must be
    /// resolved by at least 10 cells.
    pub fn te10(spec: &GridSpec, port: &PortSpec) -> Result<Self> {
        Self::mode(spec, port, 1)
    }

    /// Higher-order sine templates (TE20, ...) for orthogonality checks.
    pub fn mode(spec: &GridSpec, port: &PortSpec, order: usize) -> Result<Self> {
        let j0 = spec.snap_plane(Axis::Y, port.y.0);
        let j1 = spec.snap_plane(Axis::Y, port.y.1);
        let k0 = spec.snap_plane(Axis::Z, port.z.0);
        let k1 = spec.snap_plane(Axis::Z, port.z.1);
        if j1.saturating_sub(j0) < 10 {
            return Err(Error::invalid(
                "port",
                format!("broad wall resolved by {} cells, need >= 10", j1.saturating_sub(j0)),
            ));
        }
        if k1 <= k0 {
            return Err(Error::invalid("port", "degenerate narrow wall"));
        }
        let m = j1 - j0;
        let cell_area = spec.dy * 1e-3 * spec.dz * 1e-3;
        let mut values = Vec::with_capacity((m - 1) * (k1 - k0));
        let mut norm2 = 0.0;
        for _k in k0..k1 {
            for j in (j0 + 1)..j1 {
                let v = (std::f64::consts::PI * order as f64 * (j - j0) as f64 / m as f64).sin();
                norm2 += v * v * cell_area;
                values.push(v);
            }
        }
        let inv = 1.0 / norm2.sqrt();
        for v in values.iter_mut() {
            *v *= inv;
        }
        Ok(Self {
            j0,
            j1,
            k0,
            k1,
            values,
            a_m: (j1 - j0) as f64 * spec.dy * 1e-3,
            b_m: (k1 - k0) as f64 * spec.dz * 1e-3,
            cell_area,
        })
    }

    pub fn template(&self, j: usize, k: usize) -> f64 {
        let w = self.j1 - self.j0 - 1;
        self.values[(k - self.k0) * w + (j - self.j0 - 1)]
    }

    /// TE10 cutoff (Hz) of the snapped cross-section.
    pub fn cutoff_hz(&self) -> f64 {
        C0 / (2.0 * self.a_m)
    }

    /// TE10 wave impedance (Ohm) at `f`.
    pub fn wave_impedance(&self, f: f64) -> Result<f64> {
        let fc = self.cutoff_hz();
        if f <= fc {
            return Err(Error::invalid("f", "below cutoff"));
        }
        Ok(ETA0 / (1.0 - (fc / f).powi(2)).sqrt())
    }

    /// Soft source: add `amplitude` times the template onto the Ez edges of
    /// plane `i`. The plane stays transparent to returning waves.
    pub fn inject(&self, ez: &mut Array3<f64>, i: usize, amplitude: f64) {
        if amplitude == 0.0 {
            return;
        }
        for k in self.k0..self.k1 {
            for j in (self.j0 + 1)..self.j1 {
                *ez.at_mut(i, j, k) += amplitude * self.template(j, k);
            }
        }
    }

    /// Discrete modal overlap of the tangential E at plane `i` with the
    /// template. A pure template field of coordinate c returns c.
    pub fn overlap(&self, ez: &Array3<f64>, i: usize) -> f64 {
        let mut acc = 0.0;
        for k in self.k0..self.k1 {
            for j in (self.j0 + 1)..self.j1 {
                acc += ez.at(i, j, k) * self.template(j, k);
            }
        }
        acc * self.cell_area
    }

    /// Overlap of two templates on the same cross-section.
    pub fn template_overlap(&self, other: &ModePort) -> f64 {
        assert_eq!(
            (self.j0, self.j1, self.k0, self.k1),
            (other.j0, other.j1, other.k0, other.k1)
        );
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b * self.cell_area)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_spec() -> GridSpec {
        GridSpec {
            dx: 0.3556,
            dy: 0.3556,
            dz: 0.3556,
            nx: 40,
            ny: 28,
            nz: 14,
            origin: [0.0, -28.0 * 0.3556 / 2.0, 0.0],
        }
    }

    fn test_port() -> PortSpec {
        PortSpec {
            inject_x: 2.0,
            record_x: 8.0,
            y: (-3.556, 3.556),
            z: (0.0, 3.556),
        }
    }

    #[test]
    fn template_peaks_at_broad_wall_midpoint() {
        let port = ModePort::te10(&test_spec(), &test_port()).unwrap();
        let mid = (port.j0 + port.j1) / 2;
        let peak = port.template(mid, port.k0);
        // Wall-adjacent samples are nearly zero, the midpoint is the max.
        assert!(port.template(port.j0 + 1, port.k0) < 0.2 * peak);
        assert!(port.template(port.j1 - 1, port.k0) < 0.2 * peak);
        for j in (port.j0 + 1)..port.j1 {
            assert!(port.template(j, port.k0) <= peak + 1e-12);
        }
    }

    #[test]
    fn self_overlap_is_unity() {
        // Quadrature oracle: inject the template itself and record it.
        let spec = test_spec();
        let port = ModePort::te10(&spec, &test_port()).unwrap();
        let mut ez = Array3::new(spec.nx + 1, spec.ny + 1, spec.nz);
        port.inject(&mut ez, 7, 3.25);
        assert_relative_eq!(port.overlap(&ez, 7), 3.25, max_relative = 1e-12);
        // Elsewhere the plane is untouched.
        assert_eq!(port.overlap(&ez, 8), 0.0);
    }

    #[test]
    fn higher_modes_are_orthogonal() {
        let spec = test_spec();
        let te10 = ModePort::te10(&spec, &test_port()).unwrap();
        let te20 = ModePort::mode(&spec, &test_port(), 2).unwrap();
        let te30 = ModePort::mode(&spec, &test_port(), 3).unwrap();
        assert!(te10.template_overlap(&te20).abs() < 1e-10);
        assert!(te10.template_overlap(&te30).abs() < 1e-10);
        // Zero field records zero.
        let ez = Array3::new(spec.nx + 1, spec.ny + 1, spec.nz);
        assert_eq!(te10.overlap(&ez, 7), 0.0);
    }

    #[test]
    fn under_resolved_port_rejected() {
        let mut spec = test_spec();
        spec.dy = 1.0;
        spec.origin[1] = -14.0;
        let err = ModePort::te10(&spec, &test_port()).unwrap_err();
        assert!(err.to_string().contains("broad wall"));
    }

    #[test]
    fn zero_waveform_leaves_state_unchanged() {
        let spec = test_spec();
        let port = ModePort::te10(&spec, &test_port()).unwrap();
        let mut ez = Array3::new(spec.nx + 1, spec.ny + 1, spec.nz);
        port.inject(&mut ez, 7, 0.0);
        assert!(ez.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn waveform_spectrum_constraints() {
        let w = Waveform::gaussian_sine(28e9, 8e9);
        // -20 dB at the band edges by construction.
        assert_relative_eq!(w.relative_spectrum(24e9), 0.1, max_relative = 1e-6);
        assert_relative_eq!(w.relative_spectrum(32e9), 0.1, max_relative = 1e-6);
        assert!(w.relative_spectrum(0.0) < 1e-12);
        w.validate(50e9).unwrap();
        // A mesh limit inside the pulse band trips the -60 dB rule.
        assert!(w.validate(33e9).is_err());
        // Smooth start: the waveform is negligible at t = 0.
        assert!(w.eval(0.0).abs() < 1e-6);
    }

    #[test]
    fn cutoff_of_snapped_wr28_section() {
        let port = ModePort::te10(&test_spec(), &test_port()).unwrap();
        assert_relative_eq!(port.a_m, 7.112e-3, max_relative = 1e-9);
        assert_relative_eq!(port.cutoff_hz(), 21.0779e9, max_relative = 1e-4);
    }
}
