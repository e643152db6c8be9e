//! Four-state kinetic model of an anaerobic lactate fermentation whose
//! ATPase expression is induced by green light.
//!
//! The culture is described by biomass, intracellular ATPase, glucose, and
//! lactate. Glucose uptake follows Monod kinetics, growth follows Pirt's
//! substrate-distribution law, and lactate formation follows the
//! Luedeking-Piret equation. ATPase accumulation (driven by the light input)
//! modulates all three through Hill activation/repression terms, capturing
//! enforced ATP turnover: more ATPase means faster uptake and lactate
//! formation at the cost of growth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Culture state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Biomass concentration (g/l).
    pub biomass: f64,
    /// Intracellular ATPase level (VU/g). "Virtual units": the scale is
    /// fixed only through the fitted parameters, not measured directly.
    pub atpase: f64,
    /// Glucose concentration (g/l).
    pub glucose: f64,
    /// Lactate concentration (g/l).
    pub lactate: f64,
}

impl State {
    pub fn new(biomass: f64, atpase: f64, glucose: f64, lactate: f64) -> Self {
        Self { biomass, atpase, glucose, lactate }
    }

    pub fn is_finite(&self) -> bool {
        self.biomass.is_finite()
            && self.atpase.is_finite()
            && self.glucose.is_finite()
            && self.lactate.is_finite()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.biomass >= 0.0 && self.atpase >= 0.0 && self.glucose >= 0.0 && self.lactate >= 0.0
    }

    /// Copy with every component floored at zero.
    pub(crate) fn clamped_nonnegative(&self) -> State {
        State {
            biomass: self.biomass.max(0.0),
            atpase: self.atpase.max(0.0),
            glucose: self.glucose.max(0.0),
            lactate: self.lactate.max(0.0),
        }
    }

    pub(crate) fn stepped(&self, d: &StateDerivative, h: f64) -> State {
        State {
            biomass: self.biomass + h * d.biomass,
            atpase: self.atpase + h * d.atpase,
            glucose: self.glucose + h * d.glucose,
            lactate: self.lactate + h * d.lactate,
        }
    }
}

/// Time derivative of [`State`], in state units per hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDerivative {
    pub biomass: f64,
    pub atpase: f64,
    pub glucose: f64,
    pub lactate: f64,
}

impl StateDerivative {
    pub fn is_finite(&self) -> bool {
        self.biomass.is_finite()
            && self.atpase.is_finite()
            && self.glucose.is_finite()
            && self.lactate.is_finite()
    }
}

/// The 17 parameters of the kinetic rate laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticParams {
    /// Maximum specific glucose uptake rate (g/g/h).
    pub q_g_max: f64,
    /// Monod half-saturation constant for glucose (g/l).
    pub k_g: f64,
    /// ATPase half-saturation of the uptake activation term (VU/g).
    pub k_gv: f64,
    /// Hill exponent of the uptake activation term.
    pub n1: f64,
    /// Biomass-on-glucose yield (g/g).
    pub y_bg: f64,
    /// Maintenance uptake in Pirt's law (g/g/h).
    pub m_g: f64,
    /// ATPase half-saturation of the growth repression term (VU/g).
    pub k_bv: f64,
    /// Hill exponent of the growth repression term.
    pub n2: f64,
    /// Growth-coupled lactate coefficient in Luedeking-Piret (g/g).
    pub y_lb: f64,
    /// Growth-independent lactate coefficient in Luedeking-Piret (g/g/h).
    pub m_l: f64,
    /// ATPase half-saturation of the lactate activation term (VU/g).
    pub k_lv: f64,
    /// Hill exponent of the lactate activation term.
    pub n3: f64,
    /// Basal (dark) ATPase expression rate (VU/g/h).
    pub q_e0: f64,
    /// Light-saturated ATPase expression rate (VU/g/h).
    pub q_e_max: f64,
    /// Light half-saturation of the expression term (umol m^-2 s^-1).
    pub k_u: f64,
    /// Hill exponent of the expression term.
    pub n4: f64,
    /// First-order ATPase dilution/degradation constant (1/h).
    pub k_d: f64,
}

impl KineticParams {
    /// Parameter set estimated from the five constant-light batch
    /// experiments; the basis of the nominal (error-free) model.
    pub fn nominal() -> Self {
        Self {
            q_g_max: 1.731,
            k_g: 5.340e-7,
            k_gv: 1.053e-6,
            n1: 1.000e-2,
            y_bg: 1.083e-1,
            m_g: 1.232e-6,
            k_bv: 2.605e-4,
            n2: 1.028e-1,
            y_lb: 2.204,
            m_l: 1.910,
            k_lv: 1.002e1,
            n3: 1.000e1,
            q_e0: 1.000e-6,
            q_e_max: 1.000e1,
            k_u: 3.729e2,
            n4: 4.718,
            k_d: 0.988,
        }
    }

    /// All 17 entries, in a fixed reporting order.
    pub fn as_array(&self) -> [f64; 17] {
        [
            self.k_bv, self.k_g, self.k_gv, self.k_lv, self.m_g, self.m_l, self.n1, self.n2,
            self.n3, self.q_g_max, self.y_bg, self.y_lb, self.q_e0, self.q_e_max, self.n4,
            self.k_u, self.k_d,
        ]
    }

    /// Check positivity and finiteness constraints. The maintenance terms
    /// `m_g`, `m_l` and the basal expression `q_e0` may be zero; every other
    /// entry must be strictly positive. The half-saturation constants guard
    /// divisions inside the Hill terms and must never vanish.
    pub fn validate(&self) -> Result<()> {
        let all = self.as_array();
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("kinetic parameters must be finite".into()));
        }
        let strictly_positive = [
            ("q_g_max", self.q_g_max),
            ("k_g", self.k_g),
            ("k_gv", self.k_gv),
            ("n1", self.n1),
            ("y_bg", self.y_bg),
            ("k_bv", self.k_bv),
            ("n2", self.n2),
            ("y_lb", self.y_lb),
            ("k_lv", self.k_lv),
            ("n3", self.n3),
            ("q_e_max", self.q_e_max),
            ("k_u", self.k_u),
            ("n4", self.n4),
            ("k_d", self.k_d),
        ];
        for (name, value) in strictly_positive {
            if value <= 0.0 {
                return Err(Error::Domain(format!("parameter {name} must be > 0, got {value}")));
            }
        }
        for (name, value) in [("m_g", self.m_g), ("m_l", self.m_l), ("q_e0", self.q_e0)] {
            if value < 0.0 {
                return Err(Error::Domain(format!("parameter {name} must be >= 0, got {value}")));
            }
        }
        Ok(())
    }
}

/// Specific rates of the five kinetic processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// Specific glucose uptake q_G (g/g/h).
    pub glucose_uptake: f64,
    /// Specific growth rate mu (1/h). May be negative at glucose depletion
    /// (Pirt maintenance); the simulator clamps it there.
    pub growth: f64,
    /// Specific lactate production q_L (g/g/h).
    pub lactate_production: f64,
    /// ATPase expression rate q_E (VU/g/h).
    pub atpase_expression: f64,
    /// ATPase dilution/degradation rate d_E (VU/g/h).
    pub atpase_dilution: f64,
}

/// Hill term `x^n / (x^n + k^n)` with the convention `0^n = 0`, so the term
/// is exactly zero at `x = 0` for any `n > 0`.
///
/// With the fitted exponents this convention matters: `n1 = 0.01` makes
/// `E^n1` so flat that any `E > 0` already yields a value near 0.5, while
/// `E = 0` gives exactly 0. The resulting near-discontinuity at `E = 0` is a
/// property of the fitted parameter set and is deliberately not smoothed.
pub fn hill(x: f64, k: f64, n: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    // Overflow-safe form of x^n / (x^n + k^n): (k/x)^n may saturate to
    // infinity or zero, both of which give the right limit.
    1.0 / (1.0 + (k / x).powf(n))
}

fn check_inputs(state: &State, light: f64) -> Result<()> {
    if !state.is_finite() || !light.is_finite() {
        return Err(Error::Domain("state and light input must be finite".into()));
    }
    if light < 0.0 {
        return Err(Error::Domain(format!("light input must be >= 0, got {light}")));
    }
    if !state.is_nonnegative() {
        return Err(Error::Domain(format!("state components must be >= 0, got {state:?}")));
    }
    Ok(())
}

/// Evaluate the five kinetic rate laws at a state and light input.
///
/// `light` is the green-light photon flux density (umol m^-2 s^-1).
pub fn eval_kinetics(state: &State, light: f64, params: &KineticParams) -> Result<Rates> {
    check_inputs(state, light)?;
    let e = state.atpase;
    let s = state.glucose;

    let monod = s / (s + params.k_g);
    let glucose_uptake = params.q_g_max * monod * (1.0 + hill(e, params.k_gv, params.n1));
    let growth =
        params.y_bg * (glucose_uptake - params.m_g) * (1.0 - hill(e, params.k_bv, params.n2));
    let lactate_production =
        (params.y_lb * growth + params.m_l) * (1.0 + hill(e, params.k_lv, params.n3));
    let atpase_expression = params.q_e0 + params.q_e_max * hill(light, params.k_u, params.n4);
    let atpase_dilution = params.k_d * e;

    Ok(Rates {
        glucose_uptake,
        growth,
        lactate_production,
        atpase_expression,
        atpase_dilution,
    })
}

/// Right-hand side of the nominal model: the kinetic rates mapped onto the
/// four state equations with the model-error terms set to zero.
pub fn rhs_nominal(state: &State, light: f64, params: &KineticParams) -> Result<StateDerivative> {
    let r = eval_kinetics(state, light, params)?;
    Ok(StateDerivative {
        biomass: r.growth * state.biomass,
        atpase: r.atpase_expression - r.atpase_dilution,
        glucose: -r.glucose_uptake * state.biomass,
        lactate: r.lactate_production * state.biomass,
    })
}

#[cfg(test)]
mod tests {
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    use super::*;

    fn nominal() -> KineticParams {
        KineticParams::nominal()
    }

    #[test]
    fn nominal_params_validate() {
        nominal().validate().unwrap();
        assert_eq!(nominal().as_array().len(), 17);
    }

    #[test]
    fn uptake_at_zero_atpase_is_pure_monod() {
        let p = nominal();
        let state = State::new(0.1, 0.0, 4.0, 0.0);
        let r = eval_kinetics(&state, 0.0, &p).unwrap();
        // Independently coded Monod and Pirt forms.
        let monod = p.q_g_max * 4.0 / (4.0 + p.k_g);
        let pirt = p.y_bg * (monod - p.m_g);
        assert_relative_eq!(r.glucose_uptake, monod, max_relative = 1e-12);
        assert_relative_eq!(r.growth, pirt, max_relative = 1e-12);
        // Direct scalar evaluation: 1.731 * (4 / (4 + 5.340e-7)) ~ 1.731.
        assert_abs_diff_eq!(r.glucose_uptake, 1.731, epsilon = 1e-3);
    }

    #[test]
    fn uptake_at_zero_glucose_is_zero() {
        let r = eval_kinetics(&State::new(0.1, 3.0, 0.0, 0.5), 100.0, &nominal()).unwrap();
        assert_eq!(r.glucose_uptake, 0.0);
    }

    #[test]
    fn dark_expression_is_basal() {
        let r = eval_kinetics(&State::new(0.1, 0.0, 4.0, 0.0), 0.0, &nominal()).unwrap();
        assert_eq!(r.atpase_expression, 1.000e-6);
    }

    #[test]
    fn expression_at_max_light() {
        let p = nominal();
        let r = eval_kinetics(&State::new(0.1, 0.0, 4.0, 0.0), 873.0, &p).unwrap();
        // 873^4.718 / (873^4.718 + 372.9^4.718) ~ 0.9822.
        let expected = p.q_e0 + p.q_e_max / (1.0 + (p.k_u / 873.0).powf(p.n4));
        assert_relative_eq!(r.atpase_expression, expected, max_relative = 1e-12);
        assert_abs_diff_eq!(r.atpase_expression, 9.822, epsilon = 1e-3);
    }

    #[test]
    fn saturation_limits_at_large_atpase() {
        // n1 = 0.01 makes the activation Hill extremely flat, so the
        // saturation limit only shows at astronomically large E.
        let p = nominal();
        let r = eval_kinetics(&State::new(0.1, 1e300, 4.0, 0.0), 0.0, &p).unwrap();
        let monod = p.q_g_max * 4.0 / (4.0 + p.k_g);
        assert_relative_eq!(r.glucose_uptake, 2.0 * monod, max_relative = 1e-3);
        assert_abs_diff_eq!(r.growth, 0.0, epsilon = 1e-3);
    }

    #[test]
    fn rhs_with_zero_biomass_only_expresses_atpase() {
        let d = rhs_nominal(&State::new(0.0, 0.0, 3.0, 0.0), 0.0, &nominal()).unwrap();
        assert_eq!(d.glucose, 0.0);
        assert_eq!(d.biomass, 0.0);
        assert_eq!(d.lactate, 0.0);
        assert_abs_diff_eq!(d.atpase, 1e-6, epsilon = 1e-12);
    }

    #[test]
    fn atpase_fixed_point_under_max_light() {
        let p = nominal();
        let q_e = eval_kinetics(&State::new(0.1, 0.0, 4.0, 0.0), 873.0, &p)
            .unwrap()
            .atpase_expression;
        let e_star = q_e / p.k_d;
        assert_abs_diff_eq!(e_star, 9.94, epsilon = 0.01);
        let d = rhs_nominal(&State::new(0.1, e_star, 4.0, 0.0), 873.0, &p).unwrap();
        assert_abs_diff_eq!(d.atpase, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn glucose_consumption_scales_with_biomass() {
        let d = rhs_nominal(&State::new(0.1, 0.0, 4.0, 0.0), 0.0, &nominal()).unwrap();
        assert_abs_diff_eq!(d.glucose, -0.1731, epsilon = 1e-4);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let p = nominal();
        let ok = State::new(0.1, 0.0, 4.0, 0.0);
        assert!(matches!(
            eval_kinetics(&State::new(f64::NAN, 0.0, 4.0, 0.0), 0.0, &p),
            Err(Error::Domain(_))
        ));
        assert!(matches!(eval_kinetics(&ok, -1.0, &p), Err(Error::Domain(_))));
        assert!(matches!(eval_kinetics(&ok, f64::INFINITY, &p), Err(Error::Domain(_))));
        assert!(matches!(
            eval_kinetics(&State::new(0.1, 0.0, -0.5, 0.0), 0.0, &p),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rhs_is_deterministic() {
        let p = nominal();
        let s = State::new(0.273, 1.71, 2.41, 0.93);
        let a = rhs_nominal(&s, 512.3, &p).unwrap();
        let b = rhs_nominal(&s, 512.3, &p).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn hill_factors_stay_in_range(
            e in 0.0..1e3f64,
            s in 0.0..10.0f64,
            u in 0.0..873.0f64,
        ) {
            let p = nominal();
            let r = eval_kinetics(&State::new(0.1, e, s, 0.0), u, &p).unwrap();
            let monod = p.q_g_max * s / (s + p.k_g);
            // Activation factor in [1, 2), repression in (0, 1].
            if monod > 0.0 {
                let act = r.glucose_uptake / monod;
                prop_assert!((1.0..2.0).contains(&act));
            }
            prop_assert!(r.glucose_uptake >= 0.0);
            prop_assert!(r.atpase_expression >= p.q_e0);
            prop_assert!(r.atpase_expression < p.q_e0 + p.q_e_max);
            prop_assert!(r.atpase_dilution >= 0.0);
        }

        #[test]
        fn expression_is_monotone_in_light(u1 in 0.0..873.0f64, u2 in 0.0..873.0f64) {
            let p = nominal();
            let state = State::new(0.1, 0.0, 4.0, 0.0);
            let (lo, hi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
            let r_lo = eval_kinetics(&state, lo, &p).unwrap();
            let r_hi = eval_kinetics(&state, hi, &p).unwrap();
            prop_assert!(r_lo.atpase_expression <= r_hi.atpase_expression);
        }

        #[test]
        fn dilution_is_linear_in_atpase(e in 0.0..100.0f64, scale in 0.1..10.0f64) {
            let p = nominal();
            let r1 = eval_kinetics(&State::new(0.1, e, 4.0, 0.0), 0.0, &p).unwrap();
            let r2 = eval_kinetics(&State::new(0.1, e * scale, 4.0, 0.0), 0.0, &p).unwrap();
            prop_assert!((r2.atpase_dilution - scale * r1.atpase_dilution).abs() <= 1e-9 * (1.0 + r2.atpase_dilution.abs()));
        }
    }
}
