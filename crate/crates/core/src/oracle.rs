//! Reference derivatives: central finite differences over complete solves,
//! and the lumped two-layer resistor integrated with small-step RK4.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::excitation::Waveform;
use crate::Scalar;

/// Floor for the FD step of parameters whose nominal value is zero.
pub const P_FLOOR: f64 = 1e-12;
/// Largest relative spread between the `h` and `h/2` estimates still
/// considered reliable.
pub const RELIABLE_SPREAD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport<T> {
    pub parameter: String,
    pub qoi: String,
    pub p0: T,
    pub h: T,
    /// Central difference with step `h`.
    pub fd: T,
    /// Central difference with step `h/2`.
    pub fd_half: T,
    /// `(4·fd_half − fd)/3`.
    pub richardson: T,
    /// `|fd − fd_half| / |fd_half|`.
    pub spread: T,
    pub reliable: bool,
}

/// Central differences of a vector-valued `f` at `p0` with steps `h` and
/// `h/2`. Returns `(h, fd_h, fd_h/2)`.
///
/// The four evaluations run on the rayon pool. Failures carry the offending
/// parameter value.
pub fn fd_derivatives<T, F>(f: F, p0: T, h_rel: T) -> Result<(T, Vec<T>, Vec<T>)>
where
    T: Scalar,
    F: Fn(T) -> Result<Vec<T>> + Sync,
{
    if !(h_rel > T::zero()) {
        return Err(Error::invalid("relative FD step must be positive"));
    }
    let h = h_rel * p0.abs().max(T::lit(P_FLOOR));
    let two = T::lit(2.0);
    let points = [p0 + h, p0 - h, p0 + h / two, p0 - h / two];
    let values: Vec<Result<Vec<T>>> = points
        .par_iter()
        .map(|&p| {
            f(p).map_err(|e| Error::Perturbed {
                value: p.as_f64(),
                source: Box::new(e),
            })
        })
        .collect();
    let mut v = Vec::with_capacity(4);
    for r in values {
        v.push(r?);
    }
    let fd = v[0].iter().zip(&v[1]).map(|(&a, &b)| (a - b) / (two * h)).collect();
    let fd_half = v[2].iter().zip(&v[3]).map(|(&a, &b)| (a - b) / h).collect();
    Ok((h, fd, fd_half))
}

/// Scalar version of [`fd_derivatives`].
pub fn fd_derivative<T, F>(f: F, p0: T, h_rel: T) -> Result<(T, T, T)>
where
    T: Scalar,
    F: Fn(T) -> Result<T> + Sync,
{
    let (h, fd, fd_half) = fd_derivatives(|p| f(p).map(|v| vec![v]), p0, h_rel)?;
    Ok((h, fd[0], fd_half[0]))
}

/// [`fd_derivative`] packaged as a report.
pub fn fd_sensitivity<T, F>(parameter: &str, qoi: &str, f: F, p0: T, h_rel: T) -> Result<OracleReport<T>>
where
    T: Scalar,
    F: Fn(T) -> Result<T> + Sync,
{
    let (h, fd, fd_half) = fd_derivative(f, p0, h_rel)?;
    Ok(report(parameter, qoi, p0, h, fd, fd_half))
}

pub fn report<T: Scalar>(parameter: &str, qoi: &str, p0: T, h: T, fd: T, fd_half: T) -> OracleReport<T> {
    let spread = if fd_half == T::zero() {
        if fd == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    } else {
        ((fd - fd_half) / fd_half).abs()
    };
    OracleReport {
        parameter: parameter.to_string(),
        qoi: qoi.to_string(),
        p0,
        h,
        fd,
        fd_half,
        richardson: (T::lit(4.0) * fd_half - fd) / T::lit(3.0),
        spread,
        reliable: spread <= T::lit(RELIABLE_SPREAD),
    }
}

/// Material constant of the lumped two-layer model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LumpedParam {
    Eps1,
    Sigma1,
    Eps2,
    Sigma2,
}

impl LumpedParam {
    pub const ALL: [LumpedParam; 4] = [LumpedParam::Eps1, LumpedParam::Sigma1, LumpedParam::Eps2, LumpedParam::Sigma2];

    fn index(self) -> usize {
        self as usize
    }
}

/// Series stack of two homogeneous layers of thickness `d` between plate
/// electrodes; the top plate carries `voltage`, the bottom one is grounded.
///
/// Current continuity at the interface gives
/// `(ε₁+ε₂)·φ̇_m + (σ₁+σ₂)·φ_m = σ₁·U + ε₁·U̇` with `φ_m(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedTwoLayer<T> {
    pub sigma1: T,
    pub sigma2: T,
    pub eps1: T,
    pub eps2: T,
    pub d: T,
    pub width: T,
    pub voltage: Waveform<T>,
}

/// Oracle outputs at one instant. Derivative arrays follow [`LumpedParam`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumpedState<T> {
    pub t: T,
    /// Interface potential.
    pub phi_m: T,
    /// Potential in the middle of the upper layer.
    pub phi_ref: T,
    /// Dissipated energy per unit depth since `t = 0`.
    pub energy: T,
    pub dphi_m: [T; 4],
    pub dphi_ref: [T; 4],
    pub denergy: [T; 4],
}

const DIM: usize = 10;

impl<T: Scalar> LumpedTwoLayer<T> {
    /// Stationary value `σ₁/(σ₁+σ₂)·U` for constant `U`.
    pub fn divider_ratio(&self) -> T {
        self.sigma1 / (self.sigma1 + self.sigma2)
    }

    /// State layout: `[φ_m, s_ε1, s_σ1, s_ε2, s_σ2, W, dW/dε1, dW/dσ1, dW/dε2, dW/dσ2]`.
    fn rhs(&self, t: T, y: &[T; DIM]) -> [T; DIM] {
        let (s1, s2, e1, e2) = (self.sigma1, self.sigma2, self.eps1, self.eps2);
        let u = self.voltage.value(t);
        let du = self.voltage.derivative(t);
        let ce = e1 + e2;
        let cs = s1 + s2;
        let phi = y[0];
        let dphi = (s1 * u + e1 * du - cs * phi) / ce;
        let sens = |forcing: T, s: T| (forcing - cs * s) / ce;
        let ds = [
            sens(du - dphi, y[1]),
            sens(u - phi, y[2]),
            sens(-dphi, y[3]),
            sens(-phi, y[4]),
        ];
        let k = self.width / self.d;
        let two = T::lit(2.0);
        let top = u - phi;
        let power = k * (s1 * top * top + s2 * phi * phi);
        let dpower = |p: LumpedParam, s: T| {
            let mut v = k * (-two * s1 * top * s + two * s2 * phi * s);
            match p {
                LumpedParam::Sigma1 => v += k * top * top,
                LumpedParam::Sigma2 => v += k * phi * phi,
                _ => {}
            }
            v
        };
        [
            dphi,
            ds[0],
            ds[1],
            ds[2],
            ds[3],
            power,
            dpower(LumpedParam::Eps1, y[1]),
            dpower(LumpedParam::Sigma1, y[2]),
            dpower(LumpedParam::Eps2, y[3]),
            dpower(LumpedParam::Sigma2, y[4]),
        ]
    }

    fn rk4(&self, t: T, y: &[T; DIM], h: T) -> [T; DIM] {
        let two = T::lit(2.0);
        let six = T::lit(6.0);
        let add = |a: &[T; DIM], b: &[T; DIM], s: T| {
            let mut r = *a;
            for i in 0..DIM {
                r[i] += s * b[i];
            }
            r
        };
        let k1 = self.rhs(t, y);
        let k2 = self.rhs(t + h / two, &add(y, &k1, h / two));
        let k3 = self.rhs(t + h / two, &add(y, &k2, h / two));
        let k4 = self.rhs(t + h, &add(y, &k3, h));
        let mut out = *y;
        for i in 0..DIM {
            out[i] += h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        out
    }

    fn state(&self, t: T, y: &[T; DIM]) -> LumpedState<T> {
        let half = T::lit(0.5);
        let u = self.voltage.value(t);
        let dphi_m = [y[1], y[2], y[3], y[4]];
        LumpedState {
            t,
            phi_m: y[0],
            phi_ref: half * (u + y[0]),
            energy: y[5],
            dphi_m,
            dphi_ref: dphi_m.map(|s| half * s),
            denergy: [y[6], y[7], y[8], y[9]],
        }
    }

    /// Integrates from `t = 0` through the ascending instants `times`, with
    /// steps no longer than `dt_max`, landing exactly on every instant.
    pub fn trace(&self, times: &[T], dt_max: T) -> Result<Vec<LumpedState<T>>> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < T::zero()) {
            return Err(Error::invalid("oracle instants must be ascending and non-negative"));
        }
        if !(dt_max > T::zero()) {
            return Err(Error::invalid("oracle step must be positive"));
        }
        let mut y = [T::zero(); DIM];
        let mut t = T::zero();
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            let span = target - t;
            if span > T::zero() {
                let steps = (span / dt_max).ceil().to_usize().unwrap_or(1).max(1);
                let h = span / T::from_count(steps);
                for i in 0..steps {
                    y = self.rk4(t + T::from_count(i) * h, &y, h);
                }
            }
            t = target;
            out.push(self.state(t, &y));
        }
        Ok(out)
    }

    pub fn evaluate(&self, t: T, dt_max: T) -> Result<LumpedState<T>> {
        Ok(self.trace(&[t], dt_max)?.remove(0))
    }

    pub fn derivative(values: &[T; 4], p: LumpedParam) -> T {
        values[p.index()]
    }
}
