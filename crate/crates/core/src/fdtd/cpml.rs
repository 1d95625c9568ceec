//! Convolutional PML: graded absorber profiles and the recursive
//! convolution terms applied after each field update.
//!
//! Formulation: the spatial derivative along a stretched axis is replaced by
//! (1/kappa) d/du + psi, with psi updated per step as
//! psi = b psi + c (d/du), b = exp(-(sigma/kappa + alpha) dt / eps0),
//! c = sigma (b - 1) / (sigma kappa + alpha kappa^2). Profiles are polynomial
//! in the depth, alpha falls linearly to zero at the outer wall, and the
//! outermost plane is PEC-backed.

use crate::mesh::Array3;
use crate::{EPS0, ETA0};

/// CPML parameters, one set shared by every absorbing face.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpmlConfig {
    /// Cells per absorbing face.
    pub thickness: usize,
    /// Polynomial grading order.
    pub order: f64,
    /// Maximum coordinate-stretching factor.
    pub kappa_max: f64,
    /// Complex-frequency-shift parameter at the interface (S/m).
    pub alpha_max: f64,
    /// sigma_max = sigma_scale * (order + 1) / (eta0 * cell).
    pub sigma_scale: f64,
}

impl Default for CpmlConfig {
    fn default() -> Self {
        Self {
            thickness: 10,
            order: 3.0,
            kappa_max: 5.0,
            alpha_max: 0.05,
            sigma_scale: 0.8,
        }
    }
}

impl CpmlConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.thickness < 6 {
            return Err(crate::Error::invalid("cpml.thickness", "must be >= 6 cells"));
        }
        if self.order <= 0.0 || self.kappa_max <= 0.0 || self.alpha_max < 0.0 || self.sigma_scale <= 0.0 {
            return Err(crate::Error::invalid("cpml", "all parameters must be positive"));
        }
        Ok(())
    }
}

/// Graded profiles along one axis, sampled at integer (E) and half (H)
/// positions. Inactive sides have zero slab extent.
#[derive(Debug, Clone)]
pub struct AxisProfiles {
    pub b_e: Vec<f64>,
    pub c_e: Vec<f64>,
    pub inv_k_e: Vec<f64>,
    pub b_h: Vec<f64>,
    pub c_h: Vec<f64>,
    pub inv_k_h: Vec<f64>,
    /// Number of graded integer positions at the low / high end.
    pub lo: usize,
    pub hi: usize,
    /// First graded integer index at the high end (n - thickness + 1).
    pub e_hi_start: usize,
    /// First graded half index at the high end (n - thickness).
    pub h_hi_start: usize,
    pub n: usize,
}

impl AxisProfiles {
    /// `n` cells along the axis; `d_m` cell size in metres; `lo`/`hi` enable
    /// the graded slabs per side.
    pub fn new(cfg: &CpmlConfig, n: usize, d_m: f64, dt: f64, lo: bool, hi: bool) -> Self {
        let t = cfg.thickness;
        let sigma_max = cfg.sigma_scale * (cfg.order + 1.0) / (ETA0 * d_m);
        let graded = |rho: f64| -> (f64, f64, f64) {
            // (b, c, 1/kappa) at normalized depth rho in (0, 1].
            let rp = rho.powf(cfg.order);
            let sigma = sigma_max * rp;
            let kappa = 1.0 + (cfg.kappa_max - 1.0) * rp;
            let alpha = cfg.alpha_max * (1.0 - rho);
            let b = (-(sigma / kappa + alpha) * dt / EPS0).exp();
            let denom = sigma * kappa + alpha * kappa * kappa;
            let c = if denom.abs() > 0.0 { sigma * (b - 1.0) / denom } else { 0.0 };
            (b, c, 1.0 / kappa)
        };

        let mut b_e = vec![1.0; n + 1];
        let mut c_e = vec![0.0; n + 1];
        let mut inv_k_e = vec![1.0; n + 1];
        let mut b_h = vec![1.0; n];
        let mut c_h = vec![0.0; n];
        let mut inv_k_h = vec![1.0; n];

        let depth_lo_e = |i: usize| (t as f64 - i as f64) / t as f64;
        let depth_hi_e = |i: usize| (i as f64 - (n - t) as f64) / t as f64;
        for i in 0..=n {
            let mut rho: f64 = 0.0;
            if lo && i < t {
                rho = rho.max(depth_lo_e(i));
            }
            if hi && i + t > n {
                rho = rho.max(depth_hi_e(i));
            }
            if rho > 0.0 {
                let (b, c, ik) = graded(rho);
                b_e[i] = b;
                c_e[i] = c;
                inv_k_e[i] = ik;
            }
        }
        for i in 0..n {
            let pos = i as f64 + 0.5;
            let mut rho: f64 = 0.0;
            if lo && pos < t as f64 {
                rho = rho.max((t as f64 - pos) / t as f64);
            }
            if hi && pos > (n - t) as f64 {
                rho = rho.max((pos - (n - t) as f64) / t as f64);
            }
            if rho > 0.0 {
                let (b, c, ik) = graded(rho);
                b_h[i] = b;
                c_h[i] = c;
                inv_k_h[i] = ik;
            }
        }

        Self {
            b_e,
            c_e,
            inv_k_e,
            b_h,
            c_h,
            inv_k_h,
            lo: if lo { t } else { 0 },
            hi: if hi { t } else { 0 },
            e_hi_start: n.saturating_sub(t) + 1,
            h_hi_start: n.saturating_sub(t),
            n,
        }
    }
}

/// A convolution slab pair for one (component, stretched-axis) term.
#[derive(Debug, Clone)]
pub struct PsiTerm {
    /// Which field component this corrects (0..3 within its E/H family).
    pub comp: usize,
    /// The stretched axis (0 = x, 1 = y, 2 = z).
    pub axis: usize,
    /// Sign of the derivative term inside the curl expression.
    pub sign: f64,
    pub lo: Array3<f64>,
    pub hi: Array3<f64>,
    /// Array index along `axis` where the high slab starts.
    pub hi_start: usize,
}

impl PsiTerm {
    /// Slab storage for a component with array dims `dims`, restricted along
    /// `axis` to `slab + 1` entries per side.
    pub fn new(comp: usize, axis: usize, sign: f64, dims: (usize, usize, usize), slab: usize, hi_start: usize) -> Self {
        let mut d = [dims.0, dims.1, dims.2];
        d[axis] = (slab + 1).min(d[axis]);
        Self {
            comp,
            axis,
            sign,
            lo: Array3::new(d[0], d[1], d[2]),
            hi: Array3::new(d[0], d[1], d[2]),
            hi_start,
        }
    }
}
