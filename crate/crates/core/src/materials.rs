//! Conductivity and permittivity laws, their field linearizations and
//! their design-parameter derivatives.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus};
use crate::Scalar;

/// Below this field magnitude (V/m) the differential tensor falls back to
/// `σ(0)·I`, avoiding the `1/|E|` factor.
pub const FIELD_FLOOR: f64 = 1e-12;

/// Symmetric 2×2 tensor `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

/// `σ_d = dJ/dE` or `ε_d = dD/dE`.
pub type DifferentialTensor<T> = Tensor2<T>;

impl<T: Scalar> Tensor2<T> {
    pub fn isotropic(c: T) -> Self {
        Self {
            xx: c,
            xy: T::zero(),
            yy: c,
        }
    }

    pub fn apply(&self, v: [T; 2]) -> [T; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    /// `aᵀ·C·b`.
    pub fn bilinear(&self, a: [T; 2], b: [T; 2]) -> T {
        let cb = self.apply(b);
        a[0] * cb[0] + a[1] * cb[1]
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    /// `R·C·Rᵀ` for the rotation by `angle` radians.
    pub fn rotated(&self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        // R = [[c, -s], [s, c]]
        let xx = c * c * self.xx - (c * s + c * s) * self.xy + s * s * self.yy;
        let yy = s * s * self.xx + (c * s + c * s) * self.xy + c * c * self.yy;
        let xy = c * s * (self.xx - self.yy) + (c * c - s * s) * self.xy;
        Self { xx, xy, yy }
    }
}

/// Parameters of the field-grading conductivity law
/// `σ(E) = a1·(1 + a4^((E−a2)/a2)) / (1 + a4^((E−a3)/a2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgmParams<T> {
    /// Base conductivity (A/Vm).
    pub a1: T,
    /// Switching field strength (V/m).
    pub a2: T,
    /// Saturation field strength (V/m).
    pub a3: T,
    /// Dimensionless steepness base.
    pub a4: T,
}

impl<T: Scalar> FgmParams<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a1 > T::zero()
            && self.a2 > T::zero()
            && self.a3 > self.a2
            && self.a4 > T::one()
            && [self.a1, self.a2, self.a3, self.a4].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "FGM parameters require a1 > 0, a2 > 0, a3 > a2, a4 > 1 (got a1={:e}, a2={:e}, a3={:e}, a4={:e})",
                self.a1, self.a2, self.a3, self.a4
            )))
        }
    }

    /// Exponents `x1 = (E−a2)/a2·ln a4`, `x2 = (E−a3)/a2·ln a4`.
    fn exponents(&self, e: T) -> (T, T) {
        let l = self.a4.ln();
        ((e - self.a2) / self.a2 * l, (e - self.a3) / self.a2 * l)
    }
}

/// `σ1 − σ2` of the logistic at two arguments, accurate when both saturate.
fn sigmoid_gap<T: Scalar>(x1: T, x2: T) -> T {
    if x2 > T::zero() {
        sigmoid(-x2) - sigmoid(-x1)
    } else {
        sigmoid(x1) - sigmoid(x2)
    }
}

/// `softplus(x1) − softplus(x2)`. Once both exponents are positive the
/// constant `x1 − x2` is taken from the parameters and the saturated branch is
/// exactly flat.
fn log_ratio<T: Scalar>(x1: T, x2: T, p: &FgmParams<T>) -> T {
    let tail = |x: T| (-x).exp().ln_1p();
    if x2 > T::zero() {
        let gap = (p.a3 - p.a2) / p.a2 * p.a4.ln();
        gap + (tail(x1) - tail(x2))
    } else {
        softplus(x1) - softplus(x2)
    }
}

/// Field-grading conductivity. The ratio of the two `1 + a4^x` terms is
/// evaluated as `exp(softplus(x1) − softplus(x2))`, so it never overflows.
pub fn sigma_fgm<T: Scalar>(e: T, p: &FgmParams<T>) -> T {
    let (x1, x2) = p.exponents(e);
    p.a1 * log_ratio(x1, x2, p).exp()
}

/// `dσ/dE` of the field-grading law.
pub fn sigma_fgm_de<T: Scalar>(e: T, p: &FgmParams<T>) -> T {
    let (x1, x2) = p.exponents(e);
    sigma_fgm(e, p) * p.a4.ln() / p.a2 * sigmoid_gap(x1, x2)
}

/// Selects the design parameter a derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamSelector {
    /// Constant conductivity of a linear material.
    Sigma,
    /// Permittivity (either material kind).
    Eps,
    A1,
    A2,
    A3,
    A4,
}

impl ParamSelector {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamSelector::Sigma => "sigma",
            ParamSelector::Eps => "eps",
            ParamSelector::A1 => "a1",
            ParamSelector::A2 => "a2",
            ParamSelector::A3 => "a3",
            ParamSelector::A4 => "a4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sigma" => ParamSelector::Sigma,
            "eps" => ParamSelector::Eps,
            "a1" => ParamSelector::A1,
            "a2" => ParamSelector::A2,
            "a3" => ParamSelector::A3,
            "a4" => ParamSelector::A4,
            other => return Err(Error::invalid(format!("unknown parameter selector '{other}'"))),
        })
    }
}

/// `∂σ/∂p` of the field-grading law for one of `a1..a4`.
pub fn sigma_fgm_dparam<T: Scalar>(e: T, p: &FgmParams<T>, sel: ParamSelector) -> Result<T> {
    let sigma = sigma_fgm(e, p);
    let (x1, x2) = p.exponents(e);
    let (s1, s2) = (sigmoid(x1), sigmoid(x2));
    let l = p.a4.ln();
    let a2sq = p.a2 * p.a2;
    Ok(match sel {
        ParamSelector::A1 => sigma / p.a1,
        ParamSelector::A2 => {
            let dx1 = -e * l / a2sq;
            let dx2 = -(e - p.a3) * l / a2sq;
            sigma * (s1 * dx1 - s2 * dx2)
        }
        ParamSelector::A3 => sigma * s2 * l / p.a2,
        ParamSelector::A4 => sigma * (s1 * (e - p.a2) - s2 * (e - p.a3)) / (p.a2 * p.a4),
        ParamSelector::Sigma | ParamSelector::Eps => {
            return Err(Error::invalid(format!(
                "selector '{}' is not a field-grading law parameter",
                sel.as_str()
            )))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialLaw<T> {
    Linear { sigma: T, eps: T },
    Fgm { params: FgmParams<T>, eps: T },
}

/// Material law attached to one mesh region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialModel<T> {
    pub region: u32,
    pub law: MaterialLaw<T>,
}

impl<T: Scalar> MaterialModel<T> {
    pub fn linear(region: u32, sigma: T, eps: T) -> Result<Self> {
        let m = Self {
            region,
            law: MaterialLaw::Linear { sigma, eps },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn fgm(region: u32, params: FgmParams<T>, eps: T) -> Result<Self> {
        let m = Self {
            region,
            law: MaterialLaw::Fgm { params, eps },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self.law {
            MaterialLaw::Linear { sigma, eps } => {
                if !(sigma >= T::zero() && sigma.is_finite()) {
                    return Err(Error::invalid(format!(
                        "region {}: conductivity must be >= 0",
                        self.region
                    )));
                }
                check_eps(self.region, eps)
            }
            MaterialLaw::Fgm { params, eps } => {
                params
                    .validate()
                    .map_err(|e| Error::invalid(format!("region {}: {e}", self.region)))?;
                check_eps(self.region, eps)
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.law, MaterialLaw::Linear { .. })
    }

    pub fn sigma(&self, e: T) -> T {
        match &self.law {
            MaterialLaw::Linear { sigma, .. } => *sigma,
            MaterialLaw::Fgm { params, .. } => sigma_fgm(e, params),
        }
    }

    pub fn sigma_de(&self, e: T) -> T {
        match &self.law {
            MaterialLaw::Linear { .. } => T::zero(),
            MaterialLaw::Fgm { params, .. } => sigma_fgm_de(e, params),
        }
    }

    pub fn eps(&self) -> T {
        match self.law {
            MaterialLaw::Linear { eps, .. } | MaterialLaw::Fgm { eps, .. } => eps,
        }
    }

    /// `σ_d = σ(|E|)·I + σ'(|E|)/|E| · E⊗E`, or `σ(0)·I` below the field floor.
    pub fn differential_conductivity(&self, field: [T; 2]) -> DifferentialTensor<T> {
        let mag = (field[0] * field[0] + field[1] * field[1]).sqrt();
        if mag < T::lit(FIELD_FLOOR) {
            return Tensor2::isotropic(self.sigma(T::zero()));
        }
        let sigma = self.sigma(mag);
        let k = self.sigma_de(mag) / mag;
        Tensor2 {
            xx: sigma + k * field[0] * field[0],
            xy: k * field[0] * field[1],
            yy: sigma + k * field[1] * field[1],
        }
    }

    /// Permittivity is field independent, so `ε_d = ε·I`.
    pub fn differential_permittivity(&self, _field: [T; 2]) -> DifferentialTensor<T> {
        Tensor2::isotropic(self.eps())
    }

    pub fn sigma_dparam(&self, e: T, sel: ParamSelector) -> Result<T> {
        match (&self.law, sel) {
            (_, ParamSelector::Eps) => Ok(T::zero()),
            (MaterialLaw::Linear { .. }, ParamSelector::Sigma) => Ok(T::one()),
            (MaterialLaw::Fgm { params, .. }, s) => sigma_fgm_dparam(e, params, s),
            (MaterialLaw::Linear { .. }, s) => Err(Error::invalid(format!(
                "selector '{}' does not apply to linear material in region {}",
                s.as_str(),
                self.region
            ))),
        }
    }

    pub fn eps_dparam(&self, sel: ParamSelector) -> Result<T> {
        self.param(sel)?;
        Ok(if sel == ParamSelector::Eps { T::one() } else { T::zero() })
    }

    /// Current value of the selected parameter.
    pub fn param(&self, sel: ParamSelector) -> Result<T> {
        match (&self.law, sel) {
            (MaterialLaw::Linear { sigma, .. }, ParamSelector::Sigma) => Ok(*sigma),
            (MaterialLaw::Linear { eps, .. }, ParamSelector::Eps) => Ok(*eps),
            (MaterialLaw::Fgm { eps, .. }, ParamSelector::Eps) => Ok(*eps),
            (MaterialLaw::Fgm { params, .. }, ParamSelector::A1) => Ok(params.a1),
            (MaterialLaw::Fgm { params, .. }, ParamSelector::A2) => Ok(params.a2),
            (MaterialLaw::Fgm { params, .. }, ParamSelector::A3) => Ok(params.a3),
            (MaterialLaw::Fgm { params, .. }, ParamSelector::A4) => Ok(params.a4),
            (_, s) => Err(Error::invalid(format!(
                "selector '{}' does not apply to the material of region {}",
                s.as_str(),
                self.region
            ))),
        }
    }

    /// Copy with the selected parameter replaced (validated).
    pub fn with_param(&self, sel: ParamSelector, value: T) -> Result<Self> {
        self.param(sel)?;
        let mut out = *self;
        match (&mut out.law, sel) {
            (MaterialLaw::Linear { sigma, .. }, ParamSelector::Sigma) => *sigma = value,
            (MaterialLaw::Linear { eps, .. }, ParamSelector::Eps)
            | (MaterialLaw::Fgm { eps, .. }, ParamSelector::Eps) => *eps = value,
            (MaterialLaw::Fgm { params, .. }, ParamSelector::A1) => params.a1 = value,
            (MaterialLaw::Fgm { params, .. }, ParamSelector::A2) => params.a2 = value,
            (MaterialLaw::Fgm { params, .. }, ParamSelector::A3) => params.a3 = value,
            (MaterialLaw::Fgm { params, .. }, ParamSelector::A4) => params.a4 = value,
            _ => unreachable!("checked by param()"),
        }
        out.validate()?;
        Ok(out)
    }
}

fn check_eps<T: Scalar>(region: u32, eps: T) -> Result<()> {
    if eps > T::zero() && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("region {region}: permittivity must be > 0")))
    }
}

/// Region id → material law.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaterialMap<T> {
    models: BTreeMap<u32, MaterialModel<T>>,
}

impl<T: Scalar> MaterialMap<T> {
    pub fn new(models: impl IntoIterator<Item = MaterialModel<T>>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for m in models {
            m.validate()?;
            if map.insert(m.region, m).is_some() {
                return Err(Error::invalid(format!("region {} defined twice", m.region)));
            }
        }
        Ok(Self { models: map })
    }

    pub fn get(&self, region: u32) -> Option<&MaterialModel<T>> {
        self.models.get(&region)
    }

    pub fn require(&self, region: u32) -> Result<&MaterialModel<T>> {
        self.get(region)
            .ok_or_else(|| Error::invalid(format!("no material for region {region}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &MaterialModel<T>> {
        self.models.values()
    }

    pub fn all_linear(&self) -> bool {
        self.models.values().all(MaterialModel::is_linear)
    }

    pub fn param(&self, region: u32, sel: ParamSelector) -> Result<T> {
        self.require(region)?.param(sel)
    }

    pub fn with_param(&self, region: u32, sel: ParamSelector, value: T) -> Result<Self> {
        let updated = self.require(region)?.with_param(sel, value)?;
        let mut out = self.clone();
        out.models.insert(region, updated);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_params() -> FgmParams<f64> {
        FgmParams {
            a1: 1e-10,
            a2: 0.7e6,
            a3: 2.4e6,
            a4: 1864.0,
        }
    }

    fn naive_sigma(e: f64, p: &FgmParams<f64>) -> f64 {
        p.a1 * (1.0 + p.a4.powf((e - p.a2) / p.a2)) / (1.0 + p.a4.powf((e - p.a3) / p.a2))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn fgm_zero_field_value() {
        let p = reference_params();
        let s = sigma_fgm(0.0, &p);
        let expected = 1e-10 * (1.0 + 1.0 / 1864.0) / (1.0 + 1864f64.powf(-2.4 / 0.7));
        assert!(rel(s, expected) < 1e-14);
        assert!(rel(s, 1.00054e-10) < 1e-5);
    }

    #[test]
    fn fgm_saturation_limit() {
        let p = reference_params();
        let limit = p.a1 * p.a4.powf((p.a3 - p.a2) / p.a2);
        assert!(rel(limit, 8.8e-3) < 0.01);
        assert!(rel(sigma_fgm(1e9, &p), limit) < 1e-12);
        // far beyond the naive overflow point
        let huge = sigma_fgm(1e12, &p);
        assert!(huge.is_finite() && rel(huge, limit) < 1e-12);
        assert!(naive_sigma(1e9, &p).is_nan() || naive_sigma(1e9, &p).is_infinite());
    }

    #[test]
    fn fgm_matches_naive_formula_in_safe_range() {
        let p = reference_params();
        for &e in &[0.0, 1e5, 7e5, 1.2e6, 2.4e6, 5e6, 1e7] {
            assert!(rel(sigma_fgm(e, &p), naive_sigma(e, &p)) < 1e-12, "E={e}");
        }
    }

    #[test]
    fn fgm_degenerate_base_is_constant() {
        let p = FgmParams {
            a4: 1.0 + 1e-12,
            ..reference_params()
        };
        for &e in &[0.0, 1e6, 1e8] {
            assert!(rel(sigma_fgm(e, &p), p.a1) < 1e-9);
        }
    }

    #[test]
    fn fgm_invalid_params_rejected() {
        let p = FgmParams { a3: 0.7e6, ..reference_params() };
        assert!(p.validate().is_err());
        let p = FgmParams { a4: 1.0, ..reference_params() };
        assert!(p.validate().is_err());
        assert!(MaterialModel::linear(1, -1.0, 1.0).is_err());
        assert!(MaterialModel::linear(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn dsigma_de_matches_central_difference_at_zero() {
        let p = reference_params();
        let h = 1.0;
        let fd = (sigma_fgm(h, &p) - sigma_fgm(-h, &p)) / (2.0 * h);
        assert!(rel(sigma_fgm_de(0.0, &p), fd) < 1e-6);
    }

    #[test]
    fn dsigma_de_vanishes_on_plateau() {
        let p = reference_params();
        let peak = (0..2000)
            .map(|i| sigma_fgm_de(i as f64 * 5e3, &p))
            .fold(0.0, f64::max);
        assert!(sigma_fgm_de(1e7, &p) < 1e-15 * peak);
        let h = 1.0;
        let fd = (sigma_fgm(1e7 + h, &p) - sigma_fgm(1e7 - h, &p)) / (2.0 * h);
        assert!(fd.abs() < 1e-15 * peak);
    }

    #[test]
    fn dsigma_de_nonnegative_on_logspace() {
        let p = reference_params();
        for i in 0..=500 {
            let e = 10f64.powf(3.0 + 5.0 * i as f64 / 500.0);
            assert!(sigma_fgm_de(e, &p) >= 0.0);
        }
    }

    #[test]
    fn differential_tensor_cases() {
        let lin = MaterialModel::linear(1, 3.0, 1.0).unwrap();
        assert_eq!(lin.differential_conductivity([5.0, -2.0]), Tensor2::isotropic(3.0));
        let fgm = MaterialModel::fgm(6, reference_params(), 1e-11).unwrap();
        assert_eq!(
            fgm.differential_conductivity([0.0, 0.0]),
            Tensor2::isotropic(sigma_fgm(0.0, &reference_params()))
        );
        // Jacobian of J(E) = σ(|E|)·E by finite differences
        let e0 = [1e6, 0.0];
        let t = fgm.differential_conductivity(e0);
        let j = |e: [f64; 2]| {
            let m = (e[0] * e[0] + e[1] * e[1]).sqrt();
            let s = fgm.sigma(m);
            [s * e[0], s * e[1]]
        };
        let h = 1.0;
        let dx = [
            (j([e0[0] + h, 0.0])[0] - j([e0[0] - h, 0.0])[0]) / (2.0 * h),
            (j([e0[0] + h, 0.0])[1] - j([e0[0] - h, 0.0])[1]) / (2.0 * h),
        ];
        let dy = [
            (j([e0[0], h])[0] - j([e0[0], -h])[0]) / (2.0 * h),
            (j([e0[0], h])[1] - j([e0[0], -h])[1]) / (2.0 * h),
        ];
        assert!(rel(t.xx, dx[0]) < 1e-6);
        assert!(t.xy.abs() <= 1e-12 * t.xx && dx[1].abs() <= 1e-12 * t.xx && dy[0].abs() <= 1e-12 * t.xx);
        assert!(rel(t.yy, dy[1]) < 1e-6);
        assert!(rel(t.yy, fgm.sigma(1e6)) < 1e-15);
    }

    #[test]
    fn dparam_examples() {
        let lin = MaterialModel::linear(1, 10.0, 40.0).unwrap();
        assert_eq!(lin.sigma_dparam(123.0, ParamSelector::Sigma).unwrap(), 1.0);
        assert!(lin.sigma_dparam(1.0, ParamSelector::A2).is_err());
        let p = reference_params();
        let e = 1e6;
        assert!(rel(sigma_fgm_dparam(e, &p, ParamSelector::A1).unwrap(), sigma_fgm(e, &p) / p.a1) < 1e-15);
        let h = 1.0;
        let fd = (sigma_fgm(e, &FgmParams { a2: p.a2 + h, ..p }) - sigma_fgm(e, &FgmParams { a2: p.a2 - h, ..p }))
            / (2.0 * h);
        assert!(rel(sigma_fgm_dparam(e, &p, ParamSelector::A2).unwrap(), fd) < 1e-6);
        let fgm = MaterialModel::fgm(6, p, 1e-11).unwrap();
        assert!(fgm.sigma_dparam(e, ParamSelector::Sigma).is_err());
        assert_eq!(fgm.eps_dparam(ParamSelector::Eps).unwrap(), 1.0);
        assert_eq!(fgm.eps_dparam(ParamSelector::A2).unwrap(), 0.0);
        assert!(lin.eps_dparam(ParamSelector::A3).is_err());
    }

    #[test]
    fn with_param_round_trip() {
        let m = MaterialMap::new([
            MaterialModel::linear(1, 10.0, 40.0).unwrap(),
            MaterialModel::fgm(6, reference_params(), 1e-11).unwrap(),
        ])
        .unwrap();
        let m2 = m.with_param(6, ParamSelector::A2, 0.8e6).unwrap();
        assert_eq!(m2.param(6, ParamSelector::A2).unwrap(), 0.8e6);
        assert_eq!(m.param(6, ParamSelector::A2).unwrap(), 0.7e6);
        assert!(m.with_param(6, ParamSelector::A3, 0.5e6).is_err());
        assert!(m.with_param(9, ParamSelector::Eps, 1.0).is_err());
        assert!(!m.all_linear());
    }

    #[test]
    fn works_in_single_precision() {
        let p = FgmParams {
            a1: 1e-10f32,
            a2: 0.7e6,
            a3: 2.4e6,
            a4: 1864.0,
        };
        let s = sigma_fgm(0.0f32, &p);
        assert!((s / 1.00054e-10 - 1.0).abs() < 1e-4);
        assert!(sigma_fgm(1e9f32, &p).is_finite());
    }

    fn fgm_strategy() -> impl Strategy<Value = (FgmParams<f64>, f64)> {
        (
            1e-12f64..1e-8,
            2e5f64..2e6,
            1.2f64..4.0,
            50.0f64..5000.0,
            0.0f64..3.0,
        )
            .prop_map(|(a1, a2, ratio, a4, efrac)| {
                (
                    FgmParams {
                        a1,
                        a2,
                        a3: a2 * ratio,
                        a4,
                    },
                    efrac * a2 * ratio,
                )
            })
    }

    proptest! {
        #[test]
        fn differential_tensor_symmetric_and_rotation_covariant(
            (p, e) in fgm_strategy(),
            dir in 0.0f64..std::f64::consts::TAU,
            rot in 0.0f64..std::f64::consts::TAU,
        ) {
            let m = MaterialModel::fgm(6, p, 1e-11).unwrap();
            let field = [e * dir.cos(), e * dir.sin()];
            let t = m.differential_conductivity(field);
            let rotated_field = [
                rot.cos() * field[0] - rot.sin() * field[1],
                rot.sin() * field[0] + rot.cos() * field[1],
            ];
            let lhs = m.differential_conductivity(rotated_field);
            let rhs = t.rotated(rot);
            let scale = t.xx.abs().max(t.yy.abs());
            prop_assert!((lhs.xx - rhs.xx).abs() <= 1e-12 * scale);
            prop_assert!((lhs.xy - rhs.xy).abs() <= 1e-12 * scale);
            prop_assert!((lhs.yy - rhs.yy).abs() <= 1e-12 * scale);
        }

        #[test]
        fn fgm_nondecreasing((p, _) in fgm_strategy()) {
            let mut last = 0.0;
            for i in 0..400 {
                let s = sigma_fgm(i as f64 * p.a3 / 100.0, &p);
                prop_assert!(s >= last);
                last = s;
            }
        }

        #[test]
        fn param_derivatives_match_central_differences((p, e) in fgm_strategy()) {
            for sel in [ParamSelector::A1, ParamSelector::A2, ParamSelector::A3, ParamSelector::A4] {
                let m = MaterialModel::fgm(6, p, 1e-11).unwrap();
                let v = m.param(sel).unwrap();
                let h = 1e-5 * v;
                let plus = m.with_param(sel, v + h).unwrap().sigma(e);
                let minus = m.with_param(sel, v - h).unwrap().sigma(e);
                let fd = (plus - minus) / (2.0 * h);
                let exact = m.sigma_dparam(e, sel).unwrap();
                // below this floor the difference quotient is rounding noise
                let scale = exact.abs().max(1e-4 * m.sigma(e) / v);
                prop_assert!((exact - fd).abs() <= 1e-5 * scale, "{:?}: {} vs {}", sel, exact, fd);
            }
            let m = MaterialModel::fgm(6, p, 1e-11).unwrap();
            let h = 1e-5 * e.max(p.a2);
            let fd = (m.sigma(e + h) - m.sigma(e - h)) / (2.0 * h);
            let exact = m.sigma_de(e);
            let scale = exact.abs().max(1e-4 * m.sigma(e) / p.a2);
            prop_assert!((exact - fd).abs() <= 1e-5 * scale);
        }
    }
}
