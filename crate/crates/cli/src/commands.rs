use std::sync::Arc;

use rough_core::algebra::{io, Constant, Grid, HoelderExponent, Linear, SmoothMap};
use rough_core::experiment::convergence_study;
use rough_core::frozen::{build_fbar_table, AveragingMethod};
use rough_core::lifts::{sample_lift, NoiseKind, NoiseSpec};
use rough_core::rde::{solve_rde, Drift, DriftFn, VectorFieldSet, ZeroDrift};
use rough_core::slowfast::{fast_sde_consistency, solve_slow_fast};
use serde_json::json;

use crate::config::{Config, SigmaKind};
use crate::output::{path_csv, Format, OutDir};
use crate::CliError;

pub fn lift(config: &Config, out: &mut OutDir) -> Result<Vec<String>, CliError> {
    let l = &config.lift;
    let spec = l.noise_spec(config.seed);
    let grid = Grid::new(l.horizon, l.n)?;
    let lift = sample_lift(&spec, &grid)?;
    let hash = lift.rp.content_hash();
    out.write("lift.bin", &io::to_bytes(&lift.rp))?;
    if out.format == Format::Csv {
        let mut buf = Vec::new();
        io::write_csv(&lift.rp, &mut buf)?;
        out.write("lift.csv", &buf)?;
    }
    println!("{hash}");
    Ok(vec![hash])
}

pub fn solve(config: &Config, out: &mut OutDir) -> Result<Vec<String>, CliError> {
    let s = &config.solve;
    let m = s.y0.len();
    let d = config.lift.dim;
    if m == 0 {
        return Err(CliError::Config("solve.y0 must not be empty".into()));
    }
    let sigma: Arc<dyn SmoothMap> = match s.sigma {
        SigmaKind::Linear => {
            expect_len("solve.matrix", s.matrix.len(), m * d * m)?;
            Arc::new(Linear {
                in_dim: m,
                matrix: s.matrix.clone(),
            })
        }
        SigmaKind::Constant => {
            expect_len("solve.matrix", s.matrix.len(), m * d)?;
            Arc::new(Constant {
                in_dim: m,
                value: s.matrix.clone(),
            })
        }
    };
    let drift: Arc<dyn Drift> = if s.drift.is_empty() {
        Arc::new(ZeroDrift(m))
    } else {
        expect_len("solve.drift", s.drift.len(), m * m)?;
        let b = s.drift.clone();
        Arc::new(DriftFn::new(m, move |y, _, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..m).map(|j| b[i * m + j] * y[j]).sum();
            }
        }))
    };
    let vfs = VectorFieldSet::new(sigma, drift, d)?;
    let grid = Grid::new(config.lift.horizon, config.lift.n)?;
    let lift = sample_lift(&config.lift.noise_spec(config.seed), &grid)?;
    let sol = solve_rde(&vfs, &lift.rp, &s.y0)?;
    let header: Vec<String> = (0..m).map(|i| format!("y{i}")).collect();
    let values: Vec<Vec<f64>> = sol.values().chunks(m).map(<[f64]>::to_vec).collect();
    let times = grid.times();
    let csv = path_csv(&header, &times, values.iter().cloned());
    out.write_table("solution", &csv, &json!({ "t": times, "y": values }))?;
    println!("y(T) = {:?}", sol.last_value());
    Ok(vec![lift.rp.content_hash()])
}

fn expect_len(what: &str, got: usize, want: usize) -> Result<(), CliError> {
    if got == want {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} has {got} entries, expected {want}")))
    }
}

pub fn slowfast(config: &Config, out: &mut OutDir) -> Result<(Vec<String>, serde_json::Value), CliError> {
    let s = &config.slowfast;
    let model = s.model.build()?;
    let beta = HoelderExponent::new(s.beta)?;
    let grid = Grid::new(s.horizon, s.policy.steps_for(s.horizon, s.epsilon))?;
    let slow = NoiseSpec {
        kind: s.slow_noise,
        dim: model.slow_noise_dim(),
        hurst: s.hurst,
        substeps: s.substeps,
        seed: config.seed,
        stream_id: 0,
        alpha: None,
    };
    let fast = NoiseSpec::brownian_ito(model.fast_noise_dim(), config.seed, 1).with_substeps(s.substeps);
    let b = sample_lift(&slow, &grid)?;
    let w = sample_lift(&fast, &grid)?;
    let xi = Arc::new(rough_core::lifts::mixed_lift(&b, &w)?);
    let (m, n) = (model.slow_dim(), model.fast_dim());
    let mut z0 = pick(&s.x0, m, "slowfast.x0")?;
    z0.extend(pick(&s.y0, n, "slowfast.y0")?);
    let sol = solve_slow_fast(model.as_ref(), &xi, s.epsilon, &z0, &s.policy, s.scheme)?;

    let header: Vec<String> = (0..m)
        .map(|i| format!("x{i}"))
        .chain((0..n).map(|i| format!("y{i}")))
        .collect();
    let rows = || (0..sol.n_points()).map(|k| sol.x_at(k).iter().chain(sol.y_at(k)).copied().collect::<Vec<f64>>());
    let times = grid.times();
    let csv = path_csv(&header, &times, rows());
    let x: Vec<&[f64]> = (0..sol.n_points()).map(|k| sol.x_at(k)).collect();
    let y: Vec<&[f64]> = (0..sol.n_points()).map(|k| sol.y_at(k)).collect();
    out.write_table("trajectory", &csv, &json!({ "t": times, "x": x, "y": y }))?;

    let diagnostics = json!({
        "epsilon": s.epsilon,
        "grid_steps": grid.n_steps(),
        "max_abs_y": sol.max_abs_y(),
        "slow_seminorm": sol.slow_seminorm(beta)?,
        "fast_sde_gap": fast_sde_consistency(model.as_ref(), &sol, &w.micro)?,
    });
    println!("{}", serde_json::to_string_pretty(&diagnostics).expect("json"));
    Ok((vec![xi.content_hash()], diagnostics))
}

fn pick(v: &[f64], n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    if v.is_empty() {
        return Ok(vec![0.0; n]);
    }
    expect_len(what, v.len(), n)?;
    Ok(v.to_vec())
}

pub fn average(config: &Config, out: &mut OutDir) -> Result<(), CliError> {
    let a = &config.average;
    let model = a.model.build()?;
    let method = match a.method {
        Some(m) => m,
        None if model.closed_form(&vec![0.0; model.slow_dim()]).is_some() => AveragingMethod::ClosedForm,
        None => AveragingMethod::endpoint_default(model.meta().gamma2),
    };
    let table = build_fbar_table(&model, a.lo, a.hi, a.points, method, config.seed)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv).expect("ascii");
    out.write_table(
        "fbar",
        &csv,
        &json!({ "x": table.xs(), "fbar": table.values(), "stderr": table.stderr() }),
    )?;
    println!(
        "tabulated {} points on [{}, {}] with {method:?}",
        table.len(),
        a.lo,
        a.hi
    );
    Ok(())
}

pub fn study(config: &Config, out: &mut OutDir) -> Result<(Vec<String>, serde_json::Value), CliError> {
    let mut spec = config.study.clone();
    spec.seed = config.seed;
    if spec.slow_noise == NoiseKind::Fbm && spec.hurst.is_none() {
        return Err(CliError::Config(
            "study.hurst is required for an fbm slow driver".into(),
        ));
    }
    let result = convergence_study(&spec)?;
    out.write_table("study", &result.to_csv(), &result.rows)?;
    out.write("plot.csv", result.plot_data().as_bytes())?;
    print!("{}", result.to_csv());
    if let Some(fit) = result.slope {
        println!("slope {:.4} +/- {:.4}", fit.slope, fit.slope_stderr);
    }
    let diagnostics = json!({
        "slope": result.slope,
        "grid_steps": result.grid_steps,
        "macro_factor": result.macro_factor,
        "runtime_secs": result.runtime_secs,
    });
    Ok((result.lift_hashes, diagnostics))
}
