//! Solvent equations of state and polymer stiffness laws.
//!
//! The solvent contribution is a complete potential `e_s(rho, eta)`;
//! temperature and pressure are its exact derivatives,
//!
//! ```text
//! theta = d e_s / d eta ,      p = rho^2 d e_s / d rho ,
//! ```
//!
//! and both families admit closed forms for these as well as for the
//! inverse map `eta_s(rho, theta)`:
//!
//! * [`VolumetricEos::Polytropic`]:
//!   `e_s = c_v theta_ref (rho/rho_ref)^(gamma-1) exp(eta/c_v)`.
//! * [`VolumetricEos::Nasg`] (Noble-Abel stiffened gas): the same kernel
//!   with `rho/rho_ref` replaced by `w = rho/(rho_ref (1 - b rho))`, plus
//!   the affine part `(1/rho - b) p_inf + q`. Defined on `0 < rho < 1/b`.
//!
//! The polymer stress stiffness is `K(theta) = K0 + K1 theta`. For the
//! finitely extensible variant the conformation trace enters every energy
//! through the barrier potential
//!
//! ```text
//! Phi(s) = -b_ext^2 log(1 - s / b_ext^2),      Phi'(s) = b_ext^2 / (b_ext^2 - s),
//! ```
//!
//! which reduces to `Phi(s) = s`, `Phi' = 1` in the Hookean (`b_ext -> inf`)
//! limit. `Phi` is evaluated with `log1p`; the naive `log(1 - s/b^2)` loses
//! most of its significant digits for large `b_ext` and would visibly
//! corrupt the Hookean-limit comparisons.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EosError {
    /// Density outside the open admissible interval of the family.
    #[error("density {rho} outside admissible domain (0, {rho_max})")]
    Domain { rho: f64, rho_max: f64 },
    /// Conformation trace at or beyond the finite-extensibility bound.
    #[error("conformation trace {tr_c} exceeds extensibility bound {limit}")]
    ExtensionExceeded { tr_c: f64, limit: f64 },
    #[error("invalid equation-of-state parameter: {0}")]
    InvalidParameter(String),
}

/// Volumetric (solvent) equation of state, selected per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumetricEos {
    Polytropic {
        c_v: f64,
        gamma: f64,
        theta_ref: f64,
        rho_ref: f64,
    },
    Nasg {
        c_v: f64,
        gamma: f64,
        theta_ref: f64,
        rho_ref: f64,
        /// Covolume; the admissible densities are `0 < rho < 1/b`.
        b: f64,
        /// Constant energy offset.
        q: f64,
        /// Reference (stiffening) pressure.
        p_inf: f64,
    },
}

impl VolumetricEos {
    /// Baseline polytropic parameters used by tests and presets.
    pub fn baseline() -> Self {
        VolumetricEos::Polytropic {
            c_v: 1.0,
            gamma: 1.4,
            theta_ref: 1.0,
            rho_ref: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), EosError> {
        let (c_v, gamma, theta_ref, rho_ref, b) = match *self {
            VolumetricEos::Polytropic {
                c_v,
                gamma,
                theta_ref,
                rho_ref,
            } => (c_v, gamma, theta_ref, rho_ref, 0.0),
            VolumetricEos::Nasg {
                c_v,
                gamma,
                theta_ref,
                rho_ref,
                b,
                ..
            } => (c_v, gamma, theta_ref, rho_ref, b),
        };
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(EosError::InvalidParameter(msg.to_string()))
            }
        };
        check(c_v > 0.0, "c_v must be positive")?;
        check(gamma > 1.0, "gamma must exceed 1")?;
        check(theta_ref > 0.0, "theta_ref must be positive")?;
        check(rho_ref > 0.0, "rho_ref must be positive")?;
        check(b >= 0.0, "covolume b must be non-negative")?;
        Ok(())
    }

    /// Upper end of the admissible density interval (`inf` when unbounded).
    pub fn rho_max(&self) -> f64 {
        match *self {
            VolumetricEos::Polytropic { .. } => f64::INFINITY,
            VolumetricEos::Nasg { b, .. } => {
                if b > 0.0 {
                    1.0 / b
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn check_rho(&self, rho: f64) -> Result<(), EosError> {
        let rho_max = self.rho_max();
        if rho.is_finite() && rho > 0.0 && rho < rho_max {
            Ok(())
        } else {
            Err(EosError::Domain { rho, rho_max })
        }
    }

    /// Compression ratio entering the kernel: `rho/rho_ref` for the
    /// polytropic family, `rho/(rho_ref (1 - b rho))` for NASG.
    fn compression(&self, rho: f64) -> f64 {
        match *self {
            VolumetricEos::Polytropic { rho_ref, .. } => rho / rho_ref,
            VolumetricEos::Nasg { rho_ref, b, .. } => rho / (rho_ref * (1.0 - b * rho)),
        }
    }

    fn c_v(&self) -> f64 {
        match *self {
            VolumetricEos::Polytropic { c_v, .. } | VolumetricEos::Nasg { c_v, .. } => c_v,
        }
    }

    fn gamma(&self) -> f64 {
        match *self {
            VolumetricEos::Polytropic { gamma, .. } | VolumetricEos::Nasg { gamma, .. } => gamma,
        }
    }

    /// Thermal kernel `c_v theta_ref w(rho)^(gamma-1) exp(eta/c_v)`; equals
    /// `c_v theta`, and equals the whole of `e_s` for the polytropic family.
    fn kernel(&self, rho: f64, eta: f64) -> Result<f64, EosError> {
        self.check_rho(rho)?;
        let (c_v, gamma, theta_ref) = match *self {
            VolumetricEos::Polytropic {
                c_v,
                gamma,
                theta_ref,
                ..
            }
            | VolumetricEos::Nasg {
                c_v,
                gamma,
                theta_ref,
                ..
            } => (c_v, gamma, theta_ref),
        };
        Ok(c_v * theta_ref * self.compression(rho).powf(gamma - 1.0) * (eta / c_v).exp())
    }

    /// Specific solvent internal energy `e_s(rho, eta)`.
    pub fn e_solvent(&self, rho: f64, eta: f64) -> Result<f64, EosError> {
        let kernel = self.kernel(rho, eta)?;
        Ok(match *self {
            VolumetricEos::Polytropic { .. } => kernel,
            VolumetricEos::Nasg { b, q, p_inf, .. } => kernel + (1.0 / rho - b) * p_inf + q,
        })
    }

    /// Temperature `theta = d e_s / d eta` at fixed density.
    pub fn theta_solvent(&self, rho: f64, eta: f64) -> Result<f64, EosError> {
        Ok(self.kernel(rho, eta)? / self.c_v())
    }

    /// Solvent pressure `p = rho^2 d e_s / d rho` at fixed entropy.
    pub fn p_solvent(&self, rho: f64, eta: f64) -> Result<f64, EosError> {
        let kernel = self.kernel(rho, eta)?;
        let gamma = self.gamma();
        Ok(match *self {
            VolumetricEos::Polytropic { .. } => (gamma - 1.0) * rho * kernel,
            VolumetricEos::Nasg { b, p_inf, .. } => {
                (gamma - 1.0) * rho * kernel / (1.0 - b * rho) - p_inf
            }
        })
    }

    /// Inverse map: the solvent entropy that produces temperature `theta`
    /// at density `rho`.
    pub fn eta_solvent(&self, rho: f64, theta: f64) -> Result<f64, EosError> {
        self.check_rho(rho)?;
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(EosError::InvalidParameter(format!(
                "temperature must be positive and finite, got {theta}"
            )));
        }
        let (c_v, gamma, theta_ref) = (self.c_v(), self.gamma(), match *self {
            VolumetricEos::Polytropic { theta_ref, .. }
            | VolumetricEos::Nasg { theta_ref, .. } => theta_ref,
        });
        Ok(c_v * (theta / theta_ref).ln() - c_v * (gamma - 1.0) * self.compression(rho).ln())
    }

    /// Heat capacity at constant volume, `-theta d^2 psi_s / d theta^2`.
    /// Constant for both families.
    pub fn heat_capacity(&self) -> f64 {
        self.c_v()
    }

    /// Adiabatic exponent `gamma`, used by the closed-form wave-speed
    /// bound.
    pub fn adiabatic_exponent(&self) -> f64 {
        self.gamma()
    }

    /// `d p / d theta` at fixed density (enters the temperature-equation
    /// diagnostic).
    pub fn dp_dtheta(&self, rho: f64) -> Result<f64, EosError> {
        self.check_rho(rho)?;
        let g1 = self.gamma() - 1.0;
        Ok(match *self {
            VolumetricEos::Polytropic { c_v, .. } => g1 * rho * c_v,
            VolumetricEos::Nasg { c_v, b, .. } => g1 * rho * c_v / (1.0 - b * rho),
        })
    }
}

// =====================================================================
// Elastic stiffness laws
// =====================================================================

/// Temperature-affine polymer stiffness `K(theta) = K0 + K1 theta`,
/// optionally with a finite-extensibility barrier on `tr C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElasticLaw {
    Hookean {
        k0: f64,
        k1: f64,
    },
    FeneP {
        k0: f64,
        k1: f64,
        /// Extensibility parameter; admissible states satisfy
        /// `tr C < b_ext^2`.
        b_ext: f64,
    },
}

impl ElasticLaw {
    /// Baseline Hookean stiffness used by tests and presets.
    pub fn baseline() -> Self {
        ElasticLaw::Hookean { k0: 0.5, k1: 0.5 }
    }

    pub fn validate(&self) -> Result<(), EosError> {
        let (k0, k1) = self.coefficients();
        if !(k0 >= 0.0 && k1 >= 0.0 && k0 + k1 > 0.0) {
            return Err(EosError::InvalidParameter(
                "stiffness coefficients must be non-negative with K0 + K1 > 0".into(),
            ));
        }
        if let ElasticLaw::FeneP { b_ext, .. } = *self {
            if !(b_ext > 0.0 && b_ext.is_finite()) {
                return Err(EosError::InvalidParameter(
                    "extensibility b_ext must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn coefficients(&self) -> (f64, f64) {
        match *self {
            ElasticLaw::Hookean { k0, k1 } | ElasticLaw::FeneP { k0, k1, .. } => (k0, k1),
        }
    }

    pub fn k0(&self) -> f64 {
        self.coefficients().0
    }

    pub fn k1(&self) -> f64 {
        self.coefficients().1
    }

    /// Stiffness `K(theta) = K0 + K1 theta`.
    pub fn stiffness(&self, theta: f64) -> f64 {
        let (k0, k1) = self.coefficients();
        k0 + k1 * theta
    }

    /// Extensibility bound on `tr C` (`inf` for the Hookean law).
    pub fn tr_c_limit(&self) -> f64 {
        match *self {
            ElasticLaw::Hookean { .. } => f64::INFINITY,
            ElasticLaw::FeneP { b_ext, .. } => b_ext * b_ext,
        }
    }

    pub fn check_extension(&self, tr_c: f64) -> Result<(), EosError> {
        let limit = self.tr_c_limit();
        if tr_c < limit {
            Ok(())
        } else {
            Err(EosError::ExtensionExceeded { tr_c, limit })
        }
    }

    /// Trace potential `Phi(tr C)`: identity for Hookean,
    /// `-b^2 log1p(-tr C / b^2)` for the finitely extensible law.
    pub fn phi(&self, tr_c: f64) -> Result<f64, EosError> {
        self.check_extension(tr_c)?;
        Ok(match *self {
            ElasticLaw::Hookean { .. } => tr_c,
            ElasticLaw::FeneP { b_ext, .. } => {
                let b2 = b_ext * b_ext;
                -b2 * (-tr_c / b2).ln_1p()
            }
        })
    }

    /// Barrier factor `Phi'(tr C) = b^2/(b^2 - tr C)`; multiplies the
    /// stiffness wherever the conformation tensor enters stress, sources
    /// or dissipation. Equals 1 for the Hookean law.
    pub fn barrier(&self, tr_c: f64) -> Result<f64, EosError> {
        self.check_extension(tr_c)?;
        Ok(match *self {
            ElasticLaw::Hookean { .. } => 1.0,
            ElasticLaw::FeneP { b_ext, .. } => {
                let b2 = b_ext * b_ext;
                b2 / (b2 - tr_c)
            }
        })
    }

    /// Effective stiffness `K(theta) Phi'(tr C)` entering the stress.
    pub fn effective_stiffness(&self, theta: f64, tr_c: f64) -> Result<f64, EosError> {
        Ok(self.stiffness(theta) * self.barrier(tr_c)?)
    }

    /// Isotropic relaxation equilibrium `C = c I`: the scalar `c` with
    /// `K(theta) Phi'(3c) c = k_B theta`. Closed form for both laws.
    pub fn equilibrium_stretch(&self, theta: f64, k_b: f64) -> f64 {
        let k = self.stiffness(theta);
        match *self {
            ElasticLaw::Hookean { .. } => k_b * theta / k,
            ElasticLaw::FeneP { b_ext, .. } => {
                let b2 = b_ext * b_ext;
                k_b * theta * b2 / (k * b2 + 3.0 * k_b * theta)
            }
        }
    }
}

// =====================================================================
// Tests
// =====================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nasg_example() -> VolumetricEos {
        VolumetricEos::Nasg {
            c_v: 1.0,
            gamma: 1.4,
            theta_ref: 1.0,
            rho_ref: 1.0,
            b: 0.1,
            q: 0.0,
            p_inf: 2.0,
        }
    }

    #[test]
    fn baseline_reference_state_has_unit_energy_and_temperature() {
        let eos = VolumetricEos::baseline();
        assert_eq!(eos.e_solvent(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(eos.theta_solvent(1.0, 0.0).unwrap(), 1.0);
        let p = eos.p_solvent(1.0, 0.0).unwrap();
        assert!((p - 0.4).abs() < 1e-15, "baseline pressure {p} != 0.4");
    }

    /// Central finite differences of e_s must reproduce the closed-form
    /// temperature and pressure: theta = de/deta, p = rho^2 de/drho.
    #[test]
    fn temperature_and_pressure_are_exact_derivatives_of_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for eos in [VolumetricEos::baseline(), nasg_example()] {
            for _ in 0..200 {
                let rho_hi = eos.rho_max().min(10.0) * 0.9;
                let rho = rng.gen_range(0.1..rho_hi);
                let eta = rng.gen_range(-1.0..1.0);
                let h_rho = 1e-6 * rho;
                let h_eta = 1e-6;
                let de_deta = (eos.e_solvent(rho, eta + h_eta).unwrap()
                    - eos.e_solvent(rho, eta - h_eta).unwrap())
                    / (2.0 * h_eta);
                let de_drho = (eos.e_solvent(rho + h_rho, eta).unwrap()
                    - eos.e_solvent(rho - h_rho, eta).unwrap())
                    / (2.0 * h_rho);
                let theta = eos.theta_solvent(rho, eta).unwrap();
                let p = eos.p_solvent(rho, eta).unwrap();
                assert!(
                    (theta - de_deta).abs() < 1e-7 * (1.0 + theta.abs()),
                    "theta {theta} vs FD {de_deta} at rho={rho}, eta={eta}"
                );
                assert!(
                    (p - rho * rho * de_drho).abs() < 2e-6 * (1.0 + p.abs()),
                    "p {p} vs FD {} at rho={rho}, eta={eta}",
                    rho * rho * de_drho
                );
            }
        }
    }

    #[test]
    fn entropy_inversion_round_trips_temperature() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for eos in [VolumetricEos::baseline(), nasg_example()] {
            for _ in 0..200 {
                let rho = rng.gen_range(0.1..eos.rho_max().min(10.0) * 0.9);
                let theta = rng.gen_range(0.05..20.0);
                let eta = eos.eta_solvent(rho, theta).unwrap();
                let back = eos.theta_solvent(rho, eta).unwrap();
                assert!(
                    (back - theta).abs() < 1e-12 * theta,
                    "round trip {back} vs {theta}"
                );
            }
        }
    }

    #[test]
    fn nasg_pressure_matches_classic_temperature_form() {
        // p = (gamma-1) rho c_v theta / (1 - b rho) - p_inf
        let eos = nasg_example();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let rho = rng.gen_range(0.1..9.0);
            let eta = rng.gen_range(-1.0..1.0);
            let theta = eos.theta_solvent(rho, eta).unwrap();
            let p = eos.p_solvent(rho, eta).unwrap();
            let classic = 0.4 * rho * theta / (1.0 - 0.1 * rho) - 2.0;
            assert!((p - classic).abs() < 1e-12 * (1.0 + classic.abs()));
        }
    }

    #[test]
    fn heat_capacity_matches_negative_theta_psi_theta_theta() {
        // psi_s(rho, theta) = e_s - theta eta_s, with eta_s = eta_solvent.
        for eos in [VolumetricEos::baseline(), nasg_example()] {
            let psi = |rho: f64, theta: f64| {
                let eta = eos.eta_solvent(rho, theta).unwrap();
                eos.e_solvent(rho, eta).unwrap() - theta * eta
            };
            let (rho, theta) = (1.7, 2.3);
            let h = 1e-4 * theta;
            let d2 = (psi(rho, theta + h) - 2.0 * psi(rho, theta) + psi(rho, theta - h)) / (h * h);
            let cv = -theta * d2;
            assert!(
                (cv - eos.heat_capacity()).abs() < 1e-6,
                "FD heat capacity {cv} vs {}",
                eos.heat_capacity()
            );
        }
    }

    #[test]
    fn dp_dtheta_matches_finite_difference() {
        for eos in [VolumetricEos::baseline(), nasg_example()] {
            let rho = 2.5;
            let theta = 1.3;
            let h = 1e-6;
            let p_at = |th: f64| {
                let eta = eos.eta_solvent(rho, th).unwrap();
                eos.p_solvent(rho, eta).unwrap()
            };
            let fd = (p_at(theta + h) - p_at(theta - h)) / (2.0 * h);
            let exact = eos.dp_dtheta(rho).unwrap();
            assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn density_domain_is_enforced() {
        let eos = nasg_example(); // rho_max = 10
        assert!(matches!(
            eos.e_solvent(-1.0, 0.0),
            Err(EosError::Domain { .. })
        ));
        assert!(matches!(
            eos.e_solvent(10.0, 0.0),
            Err(EosError::Domain { .. })
        ));
        assert!(matches!(
            eos.e_solvent(f64::NAN, 0.0),
            Err(EosError::Domain { .. })
        ));
        assert!(eos.e_solvent(9.99, 0.0).is_ok());
        let pg = VolumetricEos::baseline();
        assert!(pg.e_solvent(1e6, 0.0).is_ok());
        assert!(pg.e_solvent(0.0, 0.0).is_err());
    }

    #[test]
    fn parameter_validation_rejects_bad_values() {
        let bad = VolumetricEos::Polytropic {
            c_v: 1.0,
            gamma: 1.0,
            theta_ref: 1.0,
            rho_ref: 1.0,
        };
        assert!(bad.validate().is_err());
        assert!(VolumetricEos::baseline().validate().is_ok());
        assert!(nasg_example().validate().is_ok());
        assert!(ElasticLaw::baseline().validate().is_ok());
        assert!(ElasticLaw::FeneP {
            k0: 0.5,
            k1: 0.5,
            b_ext: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn stiffness_is_affine_in_temperature() {
        let law = ElasticLaw::Hookean { k0: 0.5, k1: 0.5 };
        assert_eq!(law.stiffness(1.0), 1.0);
        assert_eq!(law.stiffness(3.0), 2.0);
    }

    #[test]
    fn barrier_potential_matches_reference_value() {
        // b_ext = 10, tr C = 3: Phi = -100 log(0.97).
        let law = ElasticLaw::FeneP {
            k0: 0.5,
            k1: 0.5,
            b_ext: 10.0,
        };
        let phi = law.phi(3.0).unwrap();
        let reference = -100.0 * 0.97_f64.ln();
        assert!(
            (phi - reference).abs() < 1e-13 * reference,
            "{phi} vs {reference}"
        );
    }

    #[test]
    fn barrier_is_derivative_of_trace_potential() {
        let law = ElasticLaw::FeneP {
            k0: 0.5,
            k1: 0.5,
            b_ext: 4.0,
        };
        for s in [0.5, 3.0, 7.0, 12.0] {
            let h = 1e-6;
            let fd = (law.phi(s + h).unwrap() - law.phi(s - h).unwrap()) / (2.0 * h);
            let xi = law.barrier(s).unwrap();
            assert!((fd - xi).abs() < 1e-8 * xi, "Phi' FD {fd} vs barrier {xi}");
        }
    }

    #[test]
    fn barrier_potential_stays_accurate_for_large_extensibility() {
        // At b_ext = 1e4 and tr C = 3 the exact value is
        // 3 + 9/(2 b^2) + O(b^-4); log1p keeps ~15 digits of that.
        let law = ElasticLaw::FeneP {
            k0: 0.5,
            k1: 0.5,
            b_ext: 1e4,
        };
        let phi = law.phi(3.0).unwrap();
        let expansion = 3.0 + 9.0 / (2.0 * 1e8) + 27.0 / (3.0 * 1e16);
        assert!(
            (phi - expansion).abs() < 1e-14,
            "phi {phi} vs expansion {expansion}"
        );
        // barrier = 1/(1 - 3e-8) = 1 + 3e-8 + 9e-16 + ...; the comparison
        // resolution near 1.0 is one ulp (~2.2e-16).
        let barrier_expansion = 1.0 + 3.0 / 1e8 + 9.0 / 1e16;
        assert!((law.barrier(3.0).unwrap() - barrier_expansion).abs() < 5e-16);
    }

    #[test]
    fn extension_bound_is_enforced() {
        let law = ElasticLaw::FeneP {
            k0: 0.5,
            k1: 0.5,
            b_ext: 2.0,
        };
        assert!(law.phi(3.9).is_ok());
        assert!(matches!(
            law.phi(4.0),
            Err(EosError::ExtensionExceeded { .. })
        ));
        assert!(ElasticLaw::baseline().phi(1e12).is_ok());
    }

    #[test]
    fn equilibrium_stretch_balances_stress() {
        // At C = c_eq I the polymer stress K(theta) Phi'(3c) c - k_B theta
        // must vanish for both laws.
        let theta = 1.7;
        let k_b = 1.0;
        for law in [
            ElasticLaw::baseline(),
            ElasticLaw::FeneP {
                k0: 0.5,
                k1: 0.5,
                b_ext: 3.0,
            },
        ] {
            let c = law.equilibrium_stretch(theta, k_b);
            let residual = law.effective_stiffness(theta, 3.0 * c).unwrap() * c - k_b * theta;
            assert!(
                residual.abs() < 1e-14 * k_b * theta,
                "equilibrium residual {residual} for {law:?}"
            );
        }
    }
}
