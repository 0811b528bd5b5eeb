//! Electrode voltage waveforms.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::Scalar;

/// Double-exponential lightning impulse `Û·τ₂/(τ₂−τ₁)·(e^{−t/τ₂} − e^{−t/τ₁})`.
pub fn impulse_voltage<T: Scalar>(t: T, peak: T, tau1: T, tau2: T) -> Result<T> {
    check_taus(tau1, tau2)?;
    Ok(impulse_unchecked(t, peak, tau1, tau2))
}

/// Instant of the impulse maximum, `τ₁τ₂/(τ₂−τ₁)·ln(τ₂/τ₁)`.
pub fn impulse_peak_time<T: Scalar>(tau1: T, tau2: T) -> Result<T> {
    check_taus(tau1, tau2)?;
    Ok(tau1 * tau2 / (tau2 - tau1) * (tau2 / tau1).ln())
}

fn check_taus<T: Scalar>(tau1: T, tau2: T) -> Result<()> {
    if tau1 > T::zero() && tau2 > tau1 {
        Ok(())
    } else {
        Err(Error::invalid(format!("impulse needs tau2 > tau1 > 0, got tau1 = {tau1}, tau2 = {tau2}")))
    }
}

fn impulse_unchecked<T: Scalar>(t: T, peak: T, tau1: T, tau2: T) -> T {
    peak * tau2 / (tau2 - tau1) * ((-t / tau2).exp() - (-t / tau1).exp())
}

/// Time function applied to one electrode.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform<T> {
    Dc(T),
    /// `Û·sin(2πf·t)`.
    Sine { amplitude: T, frequency: T },
    Impulse { peak: T, tau1: T, tau2: T },
    Sum(Vec<Waveform<T>>),
}

impl<T: Scalar> Waveform<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            Waveform::Dc(v) if !v.is_finite() => Err(Error::invalid("dc value must be finite")),
            Waveform::Sine { amplitude, frequency } if !(amplitude.is_finite() && frequency.is_finite()) => {
                Err(Error::invalid("sine amplitude and frequency must be finite"))
            }
            Waveform::Impulse { tau1, tau2, .. } => check_taus(*tau1, *tau2),
            Waveform::Sum(parts) => parts.iter().try_for_each(|p| p.validate()),
            _ => Ok(()),
        }
    }

    pub fn value(&self, t: T) -> T {
        match self {
            Waveform::Dc(v) => *v,
            Waveform::Sine { amplitude, frequency } => *amplitude * (T::lit(std::f64::consts::TAU) * *frequency * t).sin(),
            Waveform::Impulse { peak, tau1, tau2 } => impulse_unchecked(t, *peak, *tau1, *tau2),
            Waveform::Sum(parts) => parts.iter().map(|p| p.value(t)).sum(),
        }
    }

    pub fn derivative(&self, t: T) -> T {
        match self {
            Waveform::Dc(_) => T::zero(),
            Waveform::Sine { amplitude, frequency } => {
                let w = T::lit(std::f64::consts::TAU) * *frequency;
                *amplitude * w * (w * t).cos()
            }
            Waveform::Impulse { peak, tau1, tau2 } => {
                *peak * *tau2 / (*tau2 - *tau1) * ((-t / *tau1).exp() / *tau1 - (-t / *tau2).exp() / *tau2)
            }
            Waveform::Sum(parts) => parts.iter().map(|p| p.derivative(t)).sum(),
        }
    }
}

/// Waveform per boundary marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Excitation<T> {
    pub electrodes: BTreeMap<String, Waveform<T>>,
}

impl<T: Scalar> Excitation<T> {
    pub fn new(electrodes: impl IntoIterator<Item = (String, Waveform<T>)>) -> Result<Self> {
        let ex = Self {
            electrodes: electrodes.into_iter().collect(),
        };
        ex.electrodes.values().try_for_each(|w| w.validate())?;
        Ok(ex)
    }

    pub fn values_at(&self, t: T) -> BTreeMap<String, T> {
        self.electrodes
            .iter()
            .map(|(k, w)| (k.clone(), w.value(t)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU1: f64 = 1.2e-6 / 2.96;
    const TAU2: f64 = 50e-6 / 0.73;

    #[test]
    fn impulse_shape() {
        assert_eq!(impulse_voltage(0.0, 1e5, TAU1, TAU2).unwrap(), 0.0);
        let tp = impulse_peak_time(TAU1, TAU2).unwrap();
        assert!((tp - 2.09e-6).abs() < 0.01e-6, "{tp}");
        let peak = impulse_voltage(tp, 1e5, TAU1, TAU2).unwrap();
        assert!((peak / 1e5 - 0.970).abs() < 1e-3, "{peak}");
        let w = Waveform::Impulse { peak: 1e5, tau1: TAU1, tau2: TAU2 };
        assert!(w.derivative(tp).abs() < 1e-9 * 1e5 / TAU1);
        assert!(impulse_voltage(10.0 * TAU2, 1e5, TAU1, TAU2).unwrap() < 1e-4 * 1e5);
        assert!(impulse_voltage(1.0, 1.0, 2.0, 1.0).is_err());
        assert!(impulse_voltage(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn derivatives_match_differences() {
        let w = Waveform::Sum(vec![
            Waveform::Dc(3.2e5),
            Waveform::Impulse { peak: 1e5, tau1: TAU1, tau2: TAU2 },
            Waveform::Sine { amplitude: 2.0, frequency: 5e4 },
        ]);
        for t in [1e-7, 1e-6, 5e-6, 3e-5] {
            let h = 1e-11;
            let fd = (w.value(t + h) - w.value(t - h)) / (2.0 * h);
            assert!((fd - w.derivative(t)).abs() <= 1e-5 * w.derivative(t).abs().max(1.0));
        }
    }
}
