#![allow(dead_code)]

use std::sync::Arc;

use eqsadj::excitation::{Excitation, Waveform};
use eqsadj::forward::EqsModel;
use eqsadj::materials::{FgmParams, MaterialMap, MaterialModel};
use eqsadj::mesh::{build_layered_rect, Mesh, BOTTOM_ELECTRODE, TOP_ELECTRODE};

pub fn fgm_params() -> FgmParams<f64> {
    FgmParams {
        a1: 1e-10,
        a2: 0.7e6,
        a3: 2.4e6,
        a4: 1864.0,
    }
}

pub fn drive(top: Waveform<f64>) -> Excitation<f64> {
    Excitation::new([
        (TOP_ELECTRODE.to_string(), top),
        (BOTTOM_ELECTRODE.to_string(), Waveform::Dc(0.0)),
    ])
    .unwrap()
}

pub fn fgm_drive() -> Excitation<f64> {
    drive(Waveform::Sum(vec![
        Waveform::Dc(6e3),
        Waveform::Sine {
            amplitude: 1.2e4,
            frequency: 2.0,
        },
    ]))
}

pub fn fgm_materials() -> MaterialMap<f64> {
    MaterialMap::new([
        MaterialModel::linear(1, 2e-10, 3e-11).unwrap(),
        MaterialModel::fgm(2, fgm_params(), 8e-11).unwrap(),
    ])
    .unwrap()
}

/// 3 x 7 nodes: linear layer over a graded one.
pub fn small_mesh() -> Mesh<f64> {
    build_layered_rect(0.01, 0.01, 2, 3).unwrap()
}

pub fn fgm_model_on(mesh: Mesh<f64>) -> EqsModel<f64> {
    EqsModel::new(Arc::new(mesh), fgm_materials(), fgm_drive()).unwrap()
}
