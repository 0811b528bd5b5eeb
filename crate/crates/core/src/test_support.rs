use std::sync::Arc;

use crate::excitation::{Excitation, Waveform};
use crate::forward::EqsModel;
use crate::materials::{FgmParams, MaterialMap, MaterialModel};
use crate::mesh::{build_layered_rect, BOTTOM_ELECTRODE, TOP_ELECTRODE};
use crate::Scalar;

pub fn drive<T: Scalar>(top: Waveform<T>) -> Excitation<T> {
    Excitation::new([
        (TOP_ELECTRODE.to_string(), top),
        (BOTTOM_ELECTRODE.to_string(), Waveform::Dc(T::zero())),
    ])
    .unwrap()
}

pub fn sine<T: Scalar>(amplitude: f64, frequency: f64) -> Waveform<T> {
    Waveform::Sine {
        amplitude: T::lit(amplitude),
        frequency: T::lit(frequency),
    }
}

/// Two linear layers of thickness 0.01 on a coarse grid.
pub fn linear_model<T: Scalar>(s1: f64, e1: f64, s2: f64, e2: f64, top: Waveform<T>) -> EqsModel<T> {
    let mesh = Arc::new(build_layered_rect(T::lit(0.01), T::lit(0.01), 2, 3).unwrap());
    let materials = MaterialMap::new([
        MaterialModel::linear(1, T::lit(s1), T::lit(e1)).unwrap(),
        MaterialModel::linear(2, T::lit(s2), T::lit(e2)).unwrap(),
    ])
    .unwrap();
    EqsModel::new(mesh, materials, drive(top)).unwrap()
}

pub fn fgm_params<T: Scalar>() -> FgmParams<T> {
    FgmParams {
        a1: T::lit(1e-10),
        a2: T::lit(0.7e6),
        a3: T::lit(2.4e6),
        a4: T::lit(1864.0),
    }
}

/// Linear top layer over a graded bottom layer, driven hard enough that
/// the graded layer crosses its switching field during the run.
pub fn fgm_model<T: Scalar>() -> EqsModel<T> {
    let mesh = Arc::new(build_layered_rect(T::lit(0.01), T::lit(0.01), 2, 3).unwrap());
    let materials = MaterialMap::new([
        MaterialModel::linear(1, T::lit(2e-10), T::lit(3e-11)).unwrap(),
        MaterialModel::fgm(2, fgm_params(), T::lit(8e-11)).unwrap(),
    ])
    .unwrap();
    let top = Waveform::Sum(vec![Waveform::Dc(T::lit(6e3)), sine(1.2e4, 2.0)]);
    EqsModel::new(mesh, materials, drive(top)).unwrap()
}
