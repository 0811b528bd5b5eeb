use eqsadj::scenarios::scenario_fgm_joint_simplified;

#[test]
fn joint_sensitivities_agree_with_finite_differences() {
    let s = scenario_fgm_joint_simplified::<f64>();
    let n = 50;
    let out = s.run(Some(n), None).unwrap();
    let a2 = s.materials.param(6, eqsadj::materials::ParamSelector::A2).unwrap();
    // the graded sheet must actually switch during the run
    let peak = (0..out.solution.len())
        .map(|k| {
            let u = out.solution.state(k).unwrap();
            let mags = out.model.field_magnitudes(&u);
            out.model
                .mesh()
                .triangles()
                .iter()
                .zip(mags)
                .filter(|(t, _)| t.region == 6)
                .map(|(_, m)| m)
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    assert!(peak > a2, "peak field {peak} below a2");

    let reports = s.fd_reports(0, Some(n), 1e-3).unwrap();
    for (k, r) in reports.iter().enumerate() {
        assert!(r.reliable, "{r:?}");
        let avm = out.sensitivities.total(k, 0);
        let err = ((avm - r.richardson) / r.richardson).abs();
        assert!(err < 1e-2, "{}: adjoint {avm} fd {} ({err})", r.qoi, r.richardson);
    }
}

#[test]
fn spilled_run_matches_in_memory_run() {
    let s = scenario_fgm_joint_simplified::<f64>();
    let dir = tempfile::tempdir().unwrap();
    let memory = s.run(Some(20), None).unwrap();
    let disk = s.run(Some(20), Some(dir.path().to_path_buf())).unwrap();
    assert!(disk.solution.is_spilled());
    assert_eq!(memory.qoi_values, disk.qoi_values);
    assert_eq!(memory.sensitivities, disk.sensitivities);
}
