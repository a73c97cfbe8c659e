//! State equations ε(ρ, s) and derived quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RHO_FLOOR: f64 = 1e-10;

fn default_floor() -> f64 {
    DEFAULT_RHO_FLOOR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StateEquation {
    /// ε = κ ρ^γ, independent of s.
    Barotropic {
        kappa: f64,
        gamma: f64,
        #[serde(default = "default_floor")]
        rho_floor: f64,
    },
    /// ε = c_v ρ T with T = T_r (ρ/ρ_r)^(γ−1) exp((s/ρ − σ_r)/c_v).
    IdealGas {
        cv: f64,
        gamma: f64,
        t_ref: f64,
        rho_ref: f64,
        sigma_ref: f64,
        #[serde(default = "default_floor")]
        rho_floor: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoPoint {
    pub eps: f64,
    pub eps_rho: f64,
    pub p: f64,
    pub t: f64,
    pub g: f64,
    pub h_enth: f64,
}

impl StateEquation {
    pub fn barotropic(kappa: f64, gamma: f64) -> Self {
        StateEquation::Barotropic {
            kappa,
            gamma,
            rho_floor: DEFAULT_RHO_FLOOR,
        }
    }

    pub fn ideal_gas(cv: f64, gamma: f64, t_ref: f64, rho_ref: f64, sigma_ref: f64) -> Self {
        StateEquation::IdealGas {
            cv,
            gamma,
            t_ref,
            rho_ref,
            sigma_ref,
            rho_floor: DEFAULT_RHO_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (gamma, ok) = match *self {
            StateEquation::Barotropic {
                kappa,
                gamma,
                rho_floor,
            } => (gamma, kappa > 0.0 && rho_floor > 0.0),
            StateEquation::IdealGas {
                cv,
                gamma,
                t_ref,
                rho_ref,
                rho_floor,
                ..
            } => (
                gamma,
                cv > 0.0 && t_ref > 0.0 && rho_ref > 0.0 && rho_floor > 0.0,
            ),
        };
        if !(gamma > 1.0) || !ok {
            return Err(Error::Config(format!(
                "inadmissible state equation parameters: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn rho_floor(&self) -> f64 {
        match *self {
            StateEquation::Barotropic { rho_floor, .. }
            | StateEquation::IdealGas { rho_floor, .. } => rho_floor,
        }
    }

    /// Whether ε depends on the entropy density.
    pub fn uses_entropy(&self) -> bool {
        matches!(self, StateEquation::IdealGas { .. })
    }

    fn check(&self, rho: f64) -> Result<()> {
        if !(rho >= self.rho_floor()) {
            return Err(Error::Degenerate(format!(
                "density {rho:e} below floor {:e}",
                self.rho_floor()
            )));
        }
        Ok(())
    }

    pub fn energy(&self, rho: f64, s: f64) -> Result<f64> {
        Ok(self.thermo(rho, s)?.eps)
    }

    pub fn pressure(&self, rho: f64, s: f64) -> Result<f64> {
        Ok(self.thermo(rho, s)?.p)
    }

    pub fn temperature_of(&self, rho: f64, s: f64) -> Result<f64> {
        Ok(self.thermo(rho, s)?.t)
    }

    /// Entropy density giving temperature `t` at density `rho`.
    pub fn entropy_from_temperature(&self, rho: f64, t: f64) -> Result<f64> {
        self.check(rho)?;
        match *self {
            StateEquation::Barotropic { .. } => Ok(0.0),
            StateEquation::IdealGas {
                cv,
                gamma,
                t_ref,
                rho_ref,
                sigma_ref,
                ..
            } => {
                if !(t > 0.0) {
                    return Err(Error::Degenerate(format!("non-positive temperature {t}")));
                }
                let sigma =
                    sigma_ref + cv * ((t / t_ref).ln() - (gamma - 1.0) * (rho / rho_ref).ln());
                Ok(rho * sigma)
            }
        }
    }

    pub fn thermo(&self, rho: f64, s: f64) -> Result<ThermoPoint> {
        self.check(rho)?;
        let (eps, eps_rho, t) = match *self {
            StateEquation::Barotropic { kappa, gamma, .. } => {
                let e = kappa * rho.powf(gamma);
                (e, gamma * e / rho, 0.0)
            }
            StateEquation::IdealGas {
                cv,
                gamma,
                t_ref,
                rho_ref,
                sigma_ref,
                ..
            } => {
                let t =
                    t_ref * (rho / rho_ref).powf(gamma - 1.0) * ((s / rho - sigma_ref) / cv).exp();
                (cv * rho * t, cv * gamma * t - t * s / rho, t)
            }
        };
        let p = eps_rho * rho + t * s - eps;
        Ok(ThermoPoint {
            eps,
            eps_rho,
            p,
            t,
            g: (eps + p - s * t) / rho,
            h_enth: (eps + p) / rho,
        })
    }

    /// Isentropic sound speed.
    pub fn sound_speed(&self, rho: f64, s: f64) -> Result<f64> {
        let tp = self.thermo(rho, s)?;
        let c2 = match *self {
            StateEquation::Barotropic { gamma, .. } => gamma * tp.p / rho,
            StateEquation::IdealGas { gamma, .. } => gamma * tp.p / rho,
        };
        Ok(c2.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gas() -> StateEquation {
        StateEquation::ideal_gas(2.5, 1.4, 1.0, 1.0, 0.0)
    }

    fn fd_partials(eq: &StateEquation, rho: f64, s: f64) -> (f64, f64) {
        let hr = 1e-6 * rho;
        let hs = 1e-6 * (1.0 + s.abs());
        let er = (eq.energy(rho + hr, s).unwrap() - eq.energy(rho - hr, s).unwrap()) / (2.0 * hr);
        let es = (eq.energy(rho, s + hs).unwrap() - eq.energy(rho, s - hs).unwrap()) / (2.0 * hs);
        (er, es)
    }

    #[test]
    fn barotropic_quadratic_pressure() {
        let eq = StateEquation::barotropic(0.5, 2.0);
        assert!((eq.pressure(2.0, 0.0).unwrap() - 2.0).abs() < 1e-14);
        let (er, _) = fd_partials(&eq, 2.0, 0.0);
        assert!((er * 2.0 - eq.energy(2.0, 0.0).unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn ideal_gas_pressure_is_rho_r_t() {
        let eq = gas();
        let r = 2.5 * 0.4;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::{RngExt, SeedableRng};
        for _ in 0..10 {
            let rho: f64 = rng.random_range(0.2..3.0);
            let s: f64 = rng.random_range(-1.0..1.0);
            let tp = eq.thermo(rho, s).unwrap();
            assert!((tp.p - rho * r * tp.t).abs() < 1e-12 * tp.p.abs().max(1.0));
            let (er, es) = fd_partials(&eq, rho, s);
            let p_fd = er * rho + es * s - tp.eps;
            assert!((p_fd - tp.p).abs() < 1e-6 * tp.p.abs());
        }
    }

    #[test]
    fn below_floor_is_degenerate() {
        let eq = gas();
        assert!(matches!(
            eq.pressure(DEFAULT_RHO_FLOOR / 2.0, 0.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn barotropic_has_zero_temperature() {
        let tp = StateEquation::barotropic(1.3, 1.7)
            .thermo(0.8, 0.4)
            .unwrap();
        assert_eq!(tp.t, 0.0);
        assert!((tp.g - tp.h_enth).abs() < 1e-15);
    }

    #[test]
    fn reference_temperature() {
        let eq = StateEquation::ideal_gas(1.5, 5.0 / 3.0, 300.0, 1.2, 0.7);
        let tp = eq.thermo(1.2, 0.7 * 1.2).unwrap();
        assert!((tp.t - 300.0).abs() < 1e-10);
    }

    #[test]
    fn entropy_from_temperature_round_trip() {
        let eq = gas();
        let s = eq.entropy_from_temperature(1.7, 2.3).unwrap();
        assert!((eq.temperature_of(1.7, s).unwrap() - 2.3).abs() < 1e-12);
    }

    #[test]
    fn sound_speed_of_ideal_gas() {
        let eq = gas();
        let tp = eq.thermo(1.3, 0.2).unwrap();
        assert!((eq.sound_speed(1.3, 0.2).unwrap() - (1.4 * tp.p / 1.3).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn invalid_gamma_rejected() {
        assert!(StateEquation::barotropic(1.0, 1.0).validate().is_err());
        assert!(StateEquation::ideal_gas(-1.0, 1.4, 1.0, 1.0, 0.0)
            .validate()
            .is_err());
    }

    #[test]
    fn config_round_trip() {
        let eq: StateEquation = serde_json::from_str(
            r#"{"family":"ideal_gas","cv":2.5,"gamma":1.4,"t_ref":1,"rho_ref":1,"sigma_ref":0}"#,
        )
        .unwrap();
        assert_eq!(eq, gas());
    }

    fn any_eq() -> impl Strategy<Value = StateEquation> {
        prop_oneof![
            (0.1f64..3.0, 1.1f64..3.0).prop_map(|(k, g)| StateEquation::barotropic(k, g)),
            (
                0.5f64..3.0,
                1.1f64..2.0,
                0.5f64..2.0,
                0.5f64..2.0,
                -1.0f64..1.0
            )
                .prop_map(|(cv, g, t, r, s)| StateEquation::ideal_gas(cv, g, t, r, s)),
        ]
    }

    proptest! {
        #[test]
        fn closed_forms_match_finite_differences(eq in any_eq(), rho in 0.2f64..4.0, s in -1.0f64..1.0) {
            let tp = eq.thermo(rho, s).unwrap();
            let (er, es) = fd_partials(&eq, rho, s);
            prop_assert!((er - tp.eps_rho).abs() <= 1e-6 * er.abs().max(1e-3));
            prop_assert!((es - tp.t).abs() <= 1e-6 * es.abs().max(1e-3));
            let p_fd = er * rho + es * s - tp.eps;
            prop_assert!((p_fd - tp.p).abs() <= 1e-6 * tp.p.abs().max(1e-3));
        }

        #[test]
        fn gibbs_identity_holds(eq in any_eq(), rho in 0.01f64..10.0, s in -2.0f64..2.0) {
            let tp = eq.thermo(rho, s).unwrap();
            let lhs = rho * tp.g + s * tp.t;
            prop_assert!((lhs - tp.eps - tp.p).abs() <= 1e-12 * (tp.eps.abs() + tp.p.abs()));
        }
    }
}
