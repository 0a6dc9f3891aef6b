use rough_core::algebra::{homogeneous_norm, Grid, HoelderExponent, DEFAULT_PAIR_BUDGET};
use rough_core::experiment::{convergence_study, StudySpec};
use rough_core::lifts::{sample_lift, NoiseSpec};
use rough_core::slowfast::ModelSpec;
use rough_core::stats::Estimate;

fn within(e: &Estimate, target: f64, sigmas: f64) -> bool {
    (e.mean - target).abs() <= sigmas * e.stderr
}

#[test]
fn brownian_lift_moments() {
    let grid = Grid::new(2.0, 16).unwrap();
    let mut level1 = Vec::new();
    let mut ito_diag = Vec::new();
    let mut strat_diag = Vec::new();
    let mut area = Vec::new();
    for s in 0..4000 {
        let ito = sample_lift(&NoiseSpec::brownian_ito(2, 3, s), &grid).unwrap().rp;
        let strat = sample_lift(&NoiseSpec::brownian_strat(2, 3, s), &grid).unwrap().rp;
        let n = ito.n_steps();
        let x = ito.increment(0, n);
        let b = ito.chen_block(0, n).unwrap();
        level1.push(x[0] * x[0]);
        ito_diag.push(b[0]);
        strat_diag.push(strat.chen_block(0, n).unwrap()[3]);
        area.push(0.5 * (b[1] - b[2]));
    }
    assert!(within(&Estimate::from_samples(&level1), 2.0, 4.0));
    assert!(within(&Estimate::from_samples(&ito_diag), 0.0, 4.0));
    assert!(within(&Estimate::from_samples(&strat_diag), 1.0, 4.0));
    assert!(within(&Estimate::from_samples(&area), 0.0, 4.0));
}

#[test]
fn fbm_increment_variance() {
    for h in [0.35, 0.45] {
        let grid = Grid::new(1.0, 64).unwrap();
        let mut full = Vec::new();
        let mut half = Vec::new();
        for s in 0..3000 {
            let rp = sample_lift(&NoiseSpec::fbm(1, h, 9, s), &grid).unwrap().rp;
            full.push(rp.increment(0, 64)[0].powi(2));
            half.push(rp.increment(16, 48)[0].powi(2));
        }
        assert!(within(&Estimate::from_samples(&full), 1.0, 4.0), "H = {h}");
        assert!(
            within(&Estimate::from_samples(&half), 0.5f64.powf(2.0 * h), 4.0),
            "H = {h}"
        );
    }
}

#[test]
fn homogeneous_norm_moments_are_stable_across_seed_batches() {
    let grid = Grid::new(1.0, 128).unwrap();
    let alpha = HoelderExponent::new(0.4).unwrap();
    let norms: Vec<f64> = (0..400)
        .map(|s| {
            let rp = sample_lift(&NoiseSpec::fbm(2, 0.45, 1, s), &grid).unwrap().rp;
            homogeneous_norm(&rp, alpha, DEFAULT_PAIR_BUDGET).unwrap()
        })
        .collect();
    let (a, b) = norms.split_at(200);
    for p in [1, 2, 4] {
        let ma: f64 = a.iter().map(|v| v.powi(p)).sum::<f64>() / 200.0;
        let mb: f64 = b.iter().map(|v| v.powi(p)).sum::<f64>() / 200.0;
        assert!(ma.is_finite() && mb.is_finite());
        assert!((ma / mb - 1.0).abs() < 0.1 * p as f64, "p = {p}: {ma} vs {mb}");
    }
}

#[test]
fn doubling_the_budget_keeps_the_study_means() {
    let mut spec = StudySpec::new(ModelSpec::by_name("ou_sine").unwrap(), vec![0.5, 0.1], 0.4, 32);
    spec.seed = 3;
    let small = convergence_study(&spec).unwrap();
    spec.m_mc = 64;
    let large = convergence_study(&spec).unwrap();
    for (s, l) in small.rows.iter().zip(&large.rows) {
        let se = (s.stderr.powi(2) + l.stderr.powi(2)).sqrt();
        assert!((s.mean - l.mean).abs() < 2.0 * se, "{s:?} vs {l:?}");
    }
    // every seed drives the same slow lift regardless of the budget
    assert_eq!(small.lift_hashes[..], large.lift_hashes[..32]);
}
