use std::sync::Arc;

use proptest::prelude::*;
use rough_core::algebra::{
    hoelder_seminorm, homogeneous_norm, io, Grid, GridControlledPath, GridRoughPath, HoelderExponent, Linear,
    PathField, SmoothMap,
};
use rough_core::frozen::FbarTable;
use rough_core::integral::rough_integral;
use rough_core::lifts::{sample_lift, stratonovich_from_ito, NoiseKind, NoiseSpec};
use rough_core::rde::{solve_rde, VectorFieldSet, ZeroDrift};
use rough_core::slowfast::{ModelSpec, OuSineParams};

fn noise(kind: u8, dim: usize, seed: u64) -> NoiseSpec {
    match kind % 3 {
        0 => NoiseSpec::brownian_ito(dim, seed, 0),
        1 => NoiseSpec::brownian_strat(dim, seed, 0),
        _ => NoiseSpec::fbm(dim, 0.4, seed, 0),
    }
    .with_substeps(2)
}

fn lift(kind: u8, dim: usize, seed: u64, n: usize) -> Arc<GridRoughPath> {
    sample_lift(&noise(kind, dim, seed), &Grid::new(1.0, n).unwrap())
        .unwrap()
        .rp
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
}

fn ordered(n: usize) -> impl Strategy<Value = (usize, usize, usize)> {
    (0..=n, 0..=n, 0..=n).prop_map(|(a, b, c)| {
        let mut t = [a, b, c];
        t.sort_unstable();
        (t[0], t[1], t[2])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chen_associativity(kind in 0u8..3, dim in 1usize..4, seed in 0u64..1000, (i, j, k) in ordered(64)) {
        let rp = lift(kind, dim, seed, 64);
        let lhs = rp.chen_block(i, k).unwrap();
        let mut rhs = rp.chen_block(i, j).unwrap();
        let a = rp.increment(i, j);
        let b = rp.increment(j, k);
        for (p, v) in rhs.iter_mut().enumerate() {
            *v += rp.chen_block(j, k).unwrap()[p] + a[p / dim] * b[p % dim];
        }
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn lifts_are_reproducible_and_streams_differ(kind in 0u8..3, seed in 0u64..1000) {
        let grid = Grid::new(1.0, 32).unwrap();
        let spec = noise(kind, 2, seed);
        let a = sample_lift(&spec, &grid).unwrap().rp.content_hash();
        let b = sample_lift(&spec, &grid).unwrap().rp.content_hash();
        let other = sample_lift(&spec.clone().with_seed(seed, 1), &grid).unwrap().rp.content_hash();
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(a, other);
    }

    #[test]
    fn dilation_scales_the_homogeneous_norm(seed in 0u64..1000, delta in -3.0f64..3.0) {
        let rp = lift(0, 2, seed, 48);
        let alpha = HoelderExponent::new(0.45).unwrap();
        let base = homogeneous_norm(&rp, alpha, usize::MAX).unwrap();
        let scaled = homogeneous_norm(&rp.dilate(delta), alpha, usize::MAX).unwrap();
        prop_assert!((scaled - delta.abs() * base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn hoelder_seminorm_grows_with_gamma_on_unit_spans(seed in 0u64..1000, g1 in 0.05f64..1.0, g2 in 0.05f64..1.0) {
        let rp = lift(2, 1, seed, 40);
        let field = PathField::new(rp.level1(), 1);
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let a = hoelder_seminorm(&field, rp.grid().step(), lo, usize::MAX).unwrap();
        let b = hoelder_seminorm(&field, rp.grid().step(), hi, usize::MAX).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12));
    }

    #[test]
    fn rough_integral_is_additive(kind in 0u8..3, seed in 0u64..1000, (i, j, k) in ordered(32)) {
        let rp = lift(kind, 2, seed, 32);
        let cp = GridControlledPath::tensor_integrand(rp.clone()).unwrap();
        let whole = rough_integral(&cp, &rp, i, k).unwrap().value;
        let left = rough_integral(&cp, &rp, i, j).unwrap().value;
        let right = rough_integral(&cp, &rp, j, k).unwrap().value;
        let sum: Vec<f64> = left.iter().zip(&right).map(|(a, b)| a + b).collect();
        prop_assert!(close(&whole, &sum, 1e-12));
    }

    #[test]
    fn rde_gubinelli_is_sigma_of_the_solution(seed in 0u64..1000, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let rp = lift(0, 2, seed, 64);
        // sigma(y) = [[a y, b y]]
        let sigma = Arc::new(Linear { in_dim: 1, matrix: vec![a, b] });
        let vfs = VectorFieldSet::new(sigma.clone(), Arc::new(ZeroDrift(1)), 2).unwrap();
        let sol = solve_rde(&vfs, &rp, &[1.0]).unwrap();
        for k in 0..=rp.n_steps() {
            prop_assert_eq!(sol.gubinelli_at(k).to_vec(), sigma.value_vec(sol.value(k)));
        }
    }

    #[test]
    fn stratonovich_shift_is_an_involution(kind in 0u8..3, seed in 0u64..1000, lambda in -2.0f64..2.0) {
        let rp = lift(kind, 2, seed, 32);
        let back = stratonovich_from_ito(&stratonovich_from_ito(&rp, lambda), -lambda);
        prop_assert!(close(back.cells(), rp.cells(), 1e-14));
        prop_assert_eq!(back.level1(), rp.level1());
    }

    #[test]
    fn serialization_round_trips(kind in 0u8..3, dim in 1usize..3, seed in 0u64..1000) {
        let rp = lift(kind, dim, seed, 16);
        let bin = io::read_binary(io::to_bytes(&rp).as_slice()).unwrap();
        prop_assert_eq!(bin.content_hash(), rp.content_hash());
        let mut csv = Vec::new();
        io::write_csv(&rp, &mut csv).unwrap();
        prop_assert_eq!(io::read_csv(csv.as_slice()).unwrap().content_hash(), rp.content_hash());
    }

    #[test]
    fn ou_sine_fbar_is_odd(x in -5.0f64..5.0, c0 in 0.2f64..2.0, h0 in 0.2f64..2.0) {
        let model = ModelSpec::OuSine(OuSineParams { c0, h0, ..Default::default() }).build().unwrap();
        let p = model.closed_form(&[x]).unwrap().fbar[0];
        let m = model.closed_form(&[-x]).unwrap().fbar[0];
        prop_assert!((p + m).abs() <= 1e-15);
        prop_assert!(p.abs() <= (-h0 * h0 / 4.0).exp() + 1e-15);
    }

    #[test]
    fn fbar_table_reproduces_nodes(values in proptest::collection::vec(-3.0f64..3.0, 4..20)) {
        let n = values.len();
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let table = FbarTable::new(xs.clone(), values.clone(), vec![0.0; n]).unwrap();
        for (x, v) in xs.iter().zip(&values) {
            prop_assert!((table.eval(*x).unwrap() - v).abs() <= 1e-12);
        }
    }
}

#[test]
fn every_noise_kind_passes_the_chen_scan() {
    let grid = Grid::new(2.0, 128).unwrap();
    let mut triples = Vec::new();
    for i in (0..=128).step_by(9) {
        for j in (i..=128).step_by(7) {
            for k in (j..=128).step_by(11) {
                triples.push((i, j, k));
            }
        }
    }
    for kind in [
        NoiseKind::BrownianIto,
        NoiseKind::BrownianStrat,
        NoiseKind::Fbm,
        NoiseKind::DeterministicSmooth,
    ] {
        let hursts: &[Option<f64>] = if kind == NoiseKind::Fbm {
            &[Some(0.35), Some(0.4), Some(0.5)]
        } else {
            &[None]
        };
        for &hurst in hursts {
            let spec = NoiseSpec {
                hurst,
                kind,
                ..NoiseSpec::brownian_ito(3, 11, 0)
            };
            let rp = sample_lift(&spec, &grid).unwrap().rp;
            assert!(rp.chen_defect(&triples).unwrap() <= 1e-12, "{kind:?} {hurst:?}");
        }
    }
}
