use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eqsadj::forward::SCRATCH_ENV;
use eqsadj::qoi::QoiKind;
use eqsadj::scenarios::{scenario_fgm_joint_simplified, scenario_layered_resistor, Scenario, FGM_JOINT, LAYERED_RESISTOR};

use crate::config::ScenarioConfig;
use crate::output::{config_hash, num, CsvOut};
use crate::CliError;

/// A parsed config together with what the outputs need to cite.
pub struct Loaded {
    pub config: ScenarioConfig,
    pub scenario: Scenario<f64>,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(format!("{} is not valid UTF-8", path.display())))?;
    let config = ScenarioConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = config.to_scenario(base).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Loaded {
        config,
        scenario,
        hash: config_hash(&bytes),
    })
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn spill_dir() -> Option<PathBuf> {
    std::env::var_os(SCRATCH_ENV).map(PathBuf::from)
}

fn rel_error(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        ((value - reference) / reference).abs()
    }
}

pub fn run(config: &Path, out: &Path, dry_run: bool) -> Result<(), CliError> {
    let loaded = load(config)?;
    let s = &loaded.scenario;
    let (model, grid) = s.check().map_err(CliError::from_core)?;
    if dry_run {
        println!(
            "scenario {}: {} nodes, {} elements, time grid {} samples (N_main = {}, {} refined instants)",
            s.name,
            model.num_nodes(),
            model.mesh().num_triangles(),
            grid.len(),
            s.n_main,
            grid.refined().len()
        );
        return Ok(());
    }
    prepare_out(out)?;
    let start = Instant::now();
    let result = s.run(None, spill_dir()).map_err(CliError::from_core)?;
    let elapsed = start.elapsed();

    let mut csv = CsvOut::create(
        &out.join("sensitivities.csv"),
        &loaded.hash,
        &["qoi", "parameter", "avm_value", "explicit", "volume", "initial"],
    )?;
    let sens = &result.sensitivities;
    for (k, q) in sens.qoi_names.iter().enumerate() {
        for (j, p) in sens.parameter_names.iter().enumerate() {
            let e = sens.entries[k][j];
            csv.row([q.clone(), p.clone(), num(e.total), num(e.explicit), num(e.volume), num(e.initial)])?;
        }
    }
    csv.finish()?;

    let mut csv = CsvOut::create(&out.join("qois.csv"), &loaded.hash, &["qoi", "value"])?;
    for (q, v) in s.qois.iter().zip(&result.qoi_values) {
        csv.row([q.name.clone(), num(*v)])?;
    }
    csv.finish()?;

    for (spec, resolved) in s.qois.iter().zip(&result.qois) {
        if !matches!(spec.kind, QoiKind::Potential { .. } | QoiKind::FieldMagnitude { .. }) {
            continue;
        }
        let trace = resolved
            .trace(&result.model, &result.solution)
            .map_err(CliError::from_core)?;
        let mut csv = CsvOut::create(&out.join(format!("trace_{}.csv", spec.name)), &loaded.hash, &["t", "value"])?;
        for (t, v) in result.grid().samples().iter().zip(trace) {
            csv.row([num(*t), num(v)])?;
        }
        csv.finish()?;
    }

    let mut report = String::new();
    writeln!(report, "scenario: {}", s.name).ok();
    writeln!(report, "config_sha256: {}", loaded.hash).ok();
    writeln!(
        report,
        "mesh: {} nodes, {} elements",
        result.model.num_nodes(),
        result.model.mesh().num_triangles()
    )
    .ok();
    writeln!(
        report,
        "time grid: {} samples, dt_main = {}, dt_imp = {}",
        result.grid().len(),
        num(result.grid().dt_main()),
        num(result.grid().dt_imp())
    )
    .ok();
    let iters = &result.solution.newton_iterations;
    writeln!(
        report,
        "newton iterations: total {}, max per step {}",
        iters.iter().sum::<usize>(),
        iters.iter().max().copied().unwrap_or(0)
    )
    .ok();
    writeln!(report, "\nquantities:").ok();
    for (q, v) in s.qois.iter().zip(&result.qoi_values) {
        writeln!(report, "  {:<16} {}", q.name, num(*v)).ok();
    }
    writeln!(report, "\nsensitivities:").ok();
    for (k, q) in sens.qoi_names.iter().enumerate() {
        for (j, p) in sens.parameter_names.iter().enumerate() {
            writeln!(report, "  {:<24} {}", format!("d{q}/d{p}"), num(sens.total(k, j))).ok();
        }
    }
    fs::write(out.join("summary.txt"), &report).map_err(|e| CliError::io(&out.join("summary.txt"), e))?;
    print!("{report}");
    println!("wall time: {:.3} s", elapsed.as_secs_f64());
    Ok(())
}

/// Least-squares slope of `ln(err)` against `ln(N)`, negated.
pub fn observed_order(points: &[(usize, f64)]) -> f64 {
    if points.len() < 2 || points.iter().any(|&(_, e)| !(e > 0.0) || !e.is_finite()) {
        return f64::NAN;
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -sxy / sxx
}

pub fn convergence(config: &Path, out: &Path, sweep: Option<Vec<usize>>) -> Result<(), CliError> {
    let loaded = load(config)?;
    let s = &loaded.scenario;
    let sweep = sweep.unwrap_or_else(|| s.convergence_sweep.clone());
    if sweep.len() < 3 {
        return Err(CliError::Config(format!(
            "convergence needs at least 3 sweep points for an order fit, got {}",
            sweep.len()
        )));
    }
    if sweep.contains(&0) {
        return Err(CliError::Config("sweep values must be positive".into()));
    }
    s.check().map_err(CliError::from_core)?;
    if s.parameters.is_empty() || s.qois.is_empty() {
        println!("nothing to check: no parameters or quantities");
        return Ok(());
    }
    prepare_out(out)?;
    let dt = loaded.config.oracle_dt();
    let analytic = |k: usize, j: usize| s.analytic_sensitivity(k, j, dt);
    let all_analytic = (0..s.qois.len()).all(|k| (0..s.parameters.len()).all(|j| analytic(k, j).is_some()));

    // rows[k][j] = [(N, avm, oracle)]
    let mut rows = vec![vec![Vec::new(); s.parameters.len()]; s.qois.len()];
    for &n in &sweep {
        let result = s.run(Some(n), spill_dir()).map_err(CliError::from_core)?;
        for j in 0..s.parameters.len() {
            let oracle: Vec<f64> = if all_analytic {
                (0..s.qois.len())
                    .map(|k| analytic(k, j).expect("checked above").map_err(CliError::from_core))
                    .collect::<Result<_, _>>()?
            } else {
                s.fd_reports(j, Some(n), loaded.config.run.fd_step)
                    .map_err(CliError::from_core)?
                    .iter()
                    .map(|r| r.richardson)
                    .collect()
            };
            for k in 0..s.qois.len() {
                rows[k][j].push((n, result.sensitivities.total(k, j), oracle[k]));
            }
        }
    }

    let oracle_kind = if all_analytic { "analytic" } else { "fd" };
    let mut csv = CsvOut::create(
        &out.join("convergence.csv"),
        &loaded.hash,
        &["qoi", "parameter", "oracle", "n_t", "avm_value", "oracle_value", "rel_error_percent"],
    )?;
    let mut orders = CsvOut::create(
        &out.join("convergence_order.csv"),
        &loaded.hash,
        &["qoi", "parameter", "oracle", "observed_order"],
    )?;
    println!("oracle: {oracle_kind}");
    for (k, q) in s.qois.iter().enumerate() {
        for (j, p) in s.parameters.iter().enumerate() {
            let mut errors = Vec::new();
            for &(n, avm, oracle) in &rows[k][j] {
                let err = rel_error(avm, oracle);
                errors.push((n, err));
                csv.row([
                    q.name.clone(),
                    p.name.clone(),
                    oracle_kind.to_string(),
                    n.to_string(),
                    num(avm),
                    num(oracle),
                    num(100.0 * err),
                ])?;
                println!("  d{}/d{} N_t={n:<6} rel_error = {:.3e} %", q.name, p.name, 100.0 * err);
            }
            let order = observed_order(&errors);
            orders.row([q.name.clone(), p.name.clone(), oracle_kind.to_string(), num(order)])?;
            println!("  d{}/d{} observed order {order:.3}", q.name, p.name);
        }
    }
    csv.finish()?;
    orders.finish()?;
    Ok(())
}

pub fn check(config: &Path, out: Option<&Path>, tolerance: Option<f64>) -> Result<(), CliError> {
    let loaded = load(config)?;
    let s = &loaded.scenario;
    let tolerance = tolerance.unwrap_or(loaded.config.run.tolerance);
    if !(tolerance > 0.0) {
        return Err(CliError::Config("tolerance must be positive".into()));
    }
    s.check().map_err(CliError::from_core)?;
    if s.parameters.is_empty() || s.qois.is_empty() {
        println!("nothing to check: no parameters or quantities");
        return Ok(());
    }
    let result = s.run(None, spill_dir()).map_err(CliError::from_core)?;
    let mut table = Vec::new();
    for j in 0..s.parameters.len() {
        let reports = s.fd_reports(j, None, loaded.config.run.fd_step).map_err(CliError::from_core)?;
        for (k, r) in reports.into_iter().enumerate() {
            let avm = result.sensitivities.total(k, j);
            let err = rel_error(avm, r.richardson);
            table.push((r, avm, err, err <= tolerance));
        }
    }
    println!(
        "{:<16} {:<12} {:>24} {:>24} {:>12} {:>9} status",
        "qoi", "parameter", "avm", "fd", "rel_error", "fd_stable"
    );
    for (r, avm, err, ok) in &table {
        println!(
            "{:<16} {:<12} {:>24} {:>24} {:>12.3e} {:>9} {}",
            r.qoi,
            r.parameter,
            num(*avm),
            num(r.richardson),
            err,
            r.reliable,
            if *ok { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = out {
        prepare_out(out)?;
        let mut csv = CsvOut::create(
            &out.join("check.csv"),
            &loaded.hash,
            &["qoi", "parameter", "avm_value", "fd_value", "fd_spread", "rel_error", "pass"],
        )?;
        for (r, avm, err, ok) in &table {
            csv.row([
                r.qoi.clone(),
                r.parameter.clone(),
                num(*avm),
                num(r.richardson),
                num(r.spread),
                num(*err),
                ok.to_string(),
            ])?;
        }
        csv.finish()?;
    }
    let failed = table.iter().filter(|t| !t.3).count();
    if failed > 0 {
        return Err(CliError::Check(format!(
            "{failed} of {} pairs exceed the relative tolerance {tolerance:e}",
            table.len()
        )));
    }
    println!("all {} pairs within {tolerance:e}", table.len());
    Ok(())
}

pub fn builtin(name: &str) -> Result<Scenario<f64>, CliError> {
    match name {
        LAYERED_RESISTOR => Ok(scenario_layered_resistor()),
        FGM_JOINT => Ok(scenario_fgm_joint_simplified()),
        other => Err(CliError::Config(format!(
            "unknown scenario '{other}' (available: {LAYERED_RESISTOR}, {FGM_JOINT})"
        ))),
    }
}

pub fn export_scenario(name: &str, out: Option<&Path>) -> Result<(), CliError> {
    let text = ScenarioConfig::from_scenario(&builtin(name)?).to_toml();
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
