use proptest::prelude::*;

use otfs_sync::analysis::{doppler_energy_concentration, doppler_energy_numeric};
use otfs_sync::harness::aggregate;
use otfs_sync::numerics::{unitary_dft, zadoff_chu, ComplexMatrix, LeastSquares, C64};
use otfs_sync::pilots::build_pcp;
use otfs_sync::sync_freq::cpf_basis;
use otfs_sync::sync_time::{filter_bank_separate, timing_metric};

fn complex_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0).prop_map(|(a, b)| C64::new(a, b)), len)
}

proptest! {
    #[test]
    fn dft_round_trip_and_energy(x in complex_vec(1..64)) {
        let f = unitary_dft(&x, false).unwrap();
        let back = unitary_dft(&f, true).unwrap();
        let e = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        prop_assert!((e(&f) - e(&x)).abs() <= 1e-9 * e(&x).max(1.0));
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).norm() <= 1e-10);
        }
    }

    #[test]
    fn zc_constant_amplitude_and_pcp(len in 2usize..60, amp in 0.1f64..100.0) {
        if let Ok(z) = zadoff_chu(len, 1, 0, amp) {
            prop_assert!(z.samples.iter().all(|s| (s.norm() - amp).abs() <= 1e-12 * amp));
            let p = build_pcp(&z).unwrap();
            prop_assert_eq!(&p.samples[..len - 1], &p.samples[len..]);
        }
    }

    #[test]
    fn projector_is_idempotent(rows in 4usize..16, cols in 1usize..4, seed in any::<u64>()) {
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5 };
        let g = ComplexMatrix::from_fn(rows, cols, |_, _| C64::new(next(), next()));
        if let Ok(ls) = LeastSquares::new(&g) {
            let q = ls.q();
            let p = q * q.adjoint();
            prop_assert!((&p * &p - &p).norm() <= 1e-9);
        }
    }

    #[test]
    fn filter_bank_partition(x in complex_vec(24..25), users in prop::sample::select(vec![1usize, 2, 3, 4, 6])) {
        let mut sum = vec![C64::new(0.0, 0.0); 24];
        for q in 0..users {
            for (a, b) in sum.iter_mut().zip(filter_bank_separate(&x, q, users, 2, 12).unwrap()) {
                *a += b;
            }
        }
        for (a, b) in sum.iter().zip(&x) {
            prop_assert!((a - b).norm() <= 1e-10);
        }
    }

    #[test]
    fn bem_partition_shape(beta in 1usize..14, ns in 20usize..400) {
        let kappas: Vec<usize> = (0..ns).step_by(7).collect();
        let b = cpf_basis(ns, &kappas, beta).unwrap();
        for (row, _) in kappas.iter().enumerate() {
            prop_assert_eq!(b.at(row, 0), 1.0);
            for g in 0..beta {
                prop_assert!(b.at(row, g).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn metric_ignores_common_phase(x in complex_vec(24..25), phase in 0.0f64..6.3) {
        let r = ComplexMatrix::from_column_slice(6, 4, &x);
        let mut z = ComplexMatrix::zeros(6, 4);
        z[(1, 0)] = C64::new(1.0, -1.0);
        z[(2, 3)] = C64::new(0.5, 2.0);
        let a = timing_metric(&r, &z, 0).unwrap();
        let b = timing_metric(&r.map(|v| v * C64::from_polar(1.0, phase)), &z, 0).unwrap();
        for (p, q) in a.values.iter().zip(&b.values) {
            prop_assert!((p - q).abs() <= 1e-10 * p.abs().max(1.0));
        }
    }

    #[test]
    fn energy_concentration_properties(a in 0.0f64..1.0, d in 0.0f64..0.1) {
        let e = doppler_energy_concentration(a).unwrap();
        prop_assert!(e >= a - 1e-15);
        prop_assert!(doppler_energy_concentration((a + d).min(1.0)).unwrap() >= e - 1e-15);
        prop_assert!((doppler_energy_numeric(a, 400).unwrap() - e).abs() <= 1e-6);
    }

    #[test]
    fn aggregate_permutation(mut xs in prop::collection::vec(-1e3f64..1e3, 1..200), seed in any::<u64>()) {
        let a = aggregate(&xs).unwrap();
        let n = xs.len();
        for i in (1..n).rev() {
            xs.swap(i, (seed.wrapping_mul(i as u64 + 1) % (i as u64 + 1)) as usize);
        }
        let b = aggregate(&xs).unwrap();
        prop_assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean_square.sqrt().max(1.0));
        prop_assert!((a.variance - b.variance).abs() <= 1e-9 * a.mean_square.max(1.0));
    }
}

#[test]
fn energy_grid_matches_numeric() {
    for i in 0..=100 {
        let a = i as f64 / 100.0;
        let d = (doppler_energy_concentration(a).unwrap() - doppler_energy_numeric(a, 2000).unwrap()).abs();
        assert!(d <= 1e-6, "α = {a}: {d}");
    }
}
