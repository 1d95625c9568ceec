//! Material descriptors for substrates, air and metal.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, EPS0};

/// Broad material class. PEC forces tangential E to zero regardless of the
/// permittivity fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialKind {
    Dielectric,
    Pec,
    Air,
}

/// Permittivity / loss / conductivity descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// Relative permittivity.
    pub eps_r: f64,
    /// Loss tangent at the design frequency.
    pub tan_delta: f64,
    /// Bulk conductivity (S/m) in addition to the loss-tangent term.
    pub sigma: f64,
    pub kind: MaterialKind,
}

impl Material {
    pub fn air() -> Self {
        Self {
            name: "air".into(),
            eps_r: 1.0,
            tan_delta: 0.0,
            sigma: 0.0,
            kind: MaterialKind::Air,
        }
    }

    pub fn pec() -> Self {
        Self {
            name: "pec".into(),
            eps_r: 1.0,
            tan_delta: 0.0,
            sigma: 0.0,
            kind: MaterialKind::Pec,
        }
    }

    pub fn dielectric(name: &str, eps_r: f64, tan_delta: f64) -> Self {
        Self {
            name: name.into(),
            eps_r,
            tan_delta,
            sigma: 0.0,
            kind: MaterialKind::Dielectric,
        }
    }

    /// Rogers 4003 laminate. The loss tangent is a datasheet value, not a
    /// measured one; override it for sensitivity studies.
    pub fn rogers_4003() -> Self {
        Self::dielectric("rogers4003", 3.55, 0.0027)
    }

    /// Rogers RT/duroid 5880 laminate (datasheet loss tangent).
    pub fn duroid_5880() -> Self {
        Self::dielectric("duroid5880", 2.2, 0.0009)
    }

    /// Strip all dissipation channels, keeping the permittivity.
    pub fn lossless(mut self) -> Self {
        self.tan_delta = 0.0;
        self.sigma = 0.0;
        self
    }

    pub fn is_pec(&self) -> bool {
        self.kind == MaterialKind::Pec
    }

    /// Absolute permittivity (F/m).
    pub fn eps(&self) -> f64 {
        self.eps_r * EPS0
    }

    /// Effective conductivity (S/m) with the loss tangent folded in as a
    /// frequency-independent term evaluated at `f_design` (Hz).
    ///
    /// sigma_eff = sigma + omega0 * eps0 * eps_r * tan_delta
    pub fn sigma_eff(&self, f_design: f64) -> f64 {
        self.sigma + 2.0 * std::f64::consts::PI * f_design * self.eps() * self.tan_delta
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != MaterialKind::Pec && self.eps_r < 1.0 {
            return Err(Error::invalid(
                "eps_r",
                format!("must be >= 1 for {} materials, got {}", self.name, self.eps_r),
            ));
        }
        if self.tan_delta < 0.0 {
            return Err(Error::invalid("tan_delta", "must be >= 0"));
        }
        if self.sigma < 0.0 {
            return Err(Error::invalid("sigma", "must be >= 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn loss_tangent_to_conductivity() {
        // sigma = 2*pi*28e9 * eps0 * 3.55 * 0.0027
        let m = Material::rogers_4003();
        assert_relative_eq!(m.sigma_eff(28e9), 1.4928e-2, max_relative = 1e-3);
        let d = Material::duroid_5880();
        assert_relative_eq!(d.sigma_eff(28e9), 3.0829e-3, max_relative = 1e-3);
    }

    #[test]
    fn lossless_switch_zeroes_dissipation() {
        let m = Material::rogers_4003().lossless();
        assert_eq!(m.sigma_eff(28e9), 0.0);
        assert_eq!(m.eps_r, 3.55);
    }

    #[test]
    fn invalid_materials_rejected() {
        let mut m = Material::air();
        m.eps_r = 0.5;
        assert!(m.validate().is_err());
        let mut m = Material::air();
        m.tan_delta = -1.0;
        assert!(m.validate().is_err());
    }
}
