//! Deterministic invariant checks on a fixed seed.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rough_core::algebra::{io, Grid, GridControlledPath, GridRoughPath};
use rough_core::integral::{kappa, rough_integral};
use rough_core::lifts::{brownian_ito_lift, fbm_lift, mixed_lift, stratonovich_from_ito, stream_rng, NoiseSpec};

use crate::CliError;

const TOL: f64 = 1e-12;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, tol: f64) -> Check {
    Check {
        name,
        passed: value <= tol,
        detail: format!("{value:.3e} (tolerance {tol:.0e})"),
    }
}

fn triples(n: usize, count: usize) -> Vec<(usize, usize, usize)> {
    let mut rng = stream_rng(0, 7);
    (0..count)
        .map(|_| {
            let mut t = [
                rng.random_range(0..=n),
                rng.random_range(0..=n),
                rng.random_range(0..=n),
            ];
            t.sort_unstable();
            (t[0], t[1], t[2])
        })
        .collect()
}

/// Worst Chen defect of a rough path over 1000 random triples.
pub fn chen_scan(rp: &GridRoughPath) -> Result<f64, CliError> {
    Ok(rp.chen_defect(&triples(rp.n_steps(), 1000))?)
}

fn lifts() -> Result<Vec<Arc<GridRoughPath>>, CliError> {
    let grid = Grid::new(1.0, 256)?;
    let ito = brownian_ito_lift(&NoiseSpec::brownian_ito(2, 1, 0), &grid)?;
    let fbm = fbm_lift(&NoiseSpec::fbm(2, 0.4, 1, 2), &grid)?;
    let b = fbm_lift(&NoiseSpec::fbm(1, 0.4, 1, 3), &grid)?;
    let w = brownian_ito_lift(&NoiseSpec::brownian_ito(1, 1, 4), &grid)?;
    let mixed = Arc::new(mixed_lift(&b, &w)?);
    Ok(vec![ito.rp, fbm.rp, mixed])
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn run(lift_file: Option<&Path>) -> Result<Vec<Check>, CliError> {
    let paths = lifts()?;
    let mut out = Vec::new();

    let mut chen = 0.0_f64;
    for rp in &paths {
        chen = chen.max(chen_scan(rp)?);
    }
    out.push(check("chen", chen, TOL));

    let mut tele = 0.0_f64;
    for rp in &paths {
        let cp = GridControlledPath::tensor_integrand(rp.clone())?;
        for k in [1, 17, rp.n_steps()] {
            let got = rough_integral(&cp, rp, 0, k)?.value;
            tele = tele.max(max_rel(&got, &rp.chen_block(0, k)?));
        }
    }
    out.push(check("telescoping", tele, TOL));

    let mut dil = 0.0_f64;
    for rp in &paths {
        let delta = 1.7;
        let scaled = rp.dilate(delta);
        for (i, k) in [(0, rp.n_steps()), (5, 100)] {
            let one: Vec<f64> = rp.increment(i, k).iter().map(|v| delta * v).collect();
            let two: Vec<f64> = rp.chen_block(i, k)?.iter().map(|v| delta * delta * v).collect();
            dil = dil.max(max_rel(&scaled.increment(i, k), &one));
            dil = dil.max(max_rel(&scaled.chen_block(i, k)?, &two));
        }
        dil = dil.max(chen_scan(&scaled)?);
    }
    out.push(check("dilation", dil, TOL));

    // oracle: partial sum of n^{-3/2} plus the midpoint of the integral tail bracket
    let n = 1_000_000u64;
    let partial: f64 = (1..=n).rev().map(|k| (k as f64).powf(-1.5)).sum();
    let tail = 1.0 / ((n + 1) as f64).sqrt() + 1.0 / (n as f64).sqrt();
    let oracle = 2f64.powf(1.5) * (partial + tail);
    out.push(check("kappa", (kappa(0.5)? - oracle).abs(), 1e-6));

    let mut inv = 0.0_f64;
    for rp in &paths {
        let back = stratonovich_from_ito(&stratonovich_from_ito(rp, 0.5), -0.5);
        inv = inv.max(max_rel(back.cells(), rp.cells()));
    }
    out.push(check("ito-stratonovich involution", inv, 1e-14));

    if let Some(path) = lift_file {
        let rp = read_lift(path)?;
        out.push(check("chen (input lift)", chen_scan(&rp)?, TOL));
    }
    Ok(out)
}

/// Reads a serialized rough path, CSV when the extension says so.
pub fn read_lift(path: &Path) -> Result<GridRoughPath, CliError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => io::read_csv(reader)?,
        _ => io::read_binary(reader)?,
    })
}
