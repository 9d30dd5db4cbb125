use nalgebra::DMatrix;
use proptest::prelude::*;

use qcluster_core::adiabatic::{
    build_seed_hamiltonian, run_adiabatic, uniform_start, AdiabaticProblem, DistanceMatrix, Normalization, Schedule,
};
use qcluster_core::classical::{exact_distance, kmeans_lloyd, kmeanspp_seeds, mean_vector};
use qcluster_core::distance::{distance_to_centroid, EstimatorOptions};
use qcluster_core::state_prep::{encode_vector, padded_dimension, subnorm_reads_per_encode, DataSet, QueryLedger};
use qcluster_core::{HermitianOperator, Layout, SimRng, StateVector, C64};

fn rows(m: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, n), m)
        .prop_filter("no zero rows", |r| r.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)))
}

fn sized_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=7, 1usize..=6).prop_flat_map(|(m, n)| rows(m, n))
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn evolution_preserves_norm(
        amps in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2..=12),
        seed in any::<u64>(),
        t in 0.0..20.0f64,
    ) {
        prop_assume!(amps.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3));
        let n = amps.len();
        let layout = Layout::single("q", n).unwrap();
        let psi = StateVector::from_unnormalized(layout.clone(), amps.iter().map(|&(a, b)| C64::new(a, b)).collect()).unwrap();
        let mut rng = SimRng::new(seed);
        use rand::Rng;
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let h = HermitianOperator::dense(layout, (&a + a.adjoint()) * C64::new(0.5, 0.0)).unwrap();
        let out = psi.evolve(&h, t).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-10);
        // energy is conserved under its own evolution
        let e0 = psi.expectation(&h).unwrap().re;
        prop_assert!((out.expectation(&h).unwrap().re - e0).abs() < 1e-9);
    }

    #[test]
    fn annealing_preserves_norm(data in rows(4, 2), k in 1usize..=2) {
        let d = DistanceMatrix::from_data(&DataSet::from_real_rows(data).unwrap()).unwrap();
        let p = AdiabaticProblem::from_start(uniform_start(k, 4).unwrap(), build_seed_hamiltonian(&d, k).unwrap())
            .unwrap()
            .normalized(Normalization::UnitSpread)
            .unwrap();
        let (out, trace) = run_adiabatic(&p, &Schedule::new(10.0, 50).unwrap()).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-10);
        prop_assert!(trace.samples.iter().all(|s| s.gap >= -1e-10 && s.ground_overlap <= 1.0 + 1e-10));
    }

    #[test]
    fn seed_hamiltonian_is_permutation_symmetric(data in rows(4, 3), perm in Just([2usize, 0, 3, 1])) {
        let d = DistanceMatrix::from_data(&DataSet::from_real_rows(data.clone()).unwrap()).unwrap();
        let h = build_seed_hamiltonian(&d, 3).unwrap();
        let diag = h.diagonal_entries().unwrap();
        let layout = h.layout();
        for i in 0..diag.len() {
            let t = layout.digits(i);
            // reordering the tuple leaves the energy unchanged
            let rev: Vec<usize> = t.iter().rev().copied().collect();
            prop_assert!((diag[layout.index_of(&rev)] - diag[i]).abs() < 1e-12);
        }

        // relabeling the points permutes the diagonal
        let permuted: Vec<Vec<f64>> = (0..4).map(|j| data[perm[j]].clone()).collect();
        let dp = DistanceMatrix::from_data(&DataSet::from_real_rows(permuted).unwrap()).unwrap();
        let hp = build_seed_hamiltonian(&dp, 3).unwrap();
        let diag_p = hp.diagonal_entries().unwrap();
        for i in 0..diag.len() {
            let mapped: Vec<usize> = layout.digits(i).iter().map(|&j| perm[j]).collect();
            prop_assert!((diag_p[i] - diag[layout.index_of(&mapped)]).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_zero_padding_changes_nothing(data in sized_rows(), u in prop::collection::vec(-5.0..5.0f64, 6)) {
        let n = data[0].len();
        let u: Vec<C64> = u[..n].iter().map(|&x| C64::new(x, 0.0)).collect();
        prop_assume!(u.iter().any(|x| x.norm() > 1e-3));
        let padded_n = padded_dimension(n);
        let padded: Vec<Vec<f64>> = data
            .iter()
            .map(|r| r.iter().copied().chain(std::iter::repeat(0.0)).take(padded_n).collect())
            .collect();
        let a = DataSet::from_real_rows(data).unwrap();
        let b = DataSet::from_real_rows(padded).unwrap();
        prop_assert_eq!(a.dim(), b.dim());
        let members: Vec<usize> = (0..a.len()).step_by(2).collect();
        let opts = EstimatorOptions::default();
        let mut rng = SimRng::new(0);
        let da = distance_to_centroid(&u, &a, &members, &opts, &QueryLedger::for_data(&a), &mut rng).unwrap();
        let u_padded: Vec<C64> = u.iter().copied().chain(std::iter::repeat(C64::new(0.0, 0.0))).take(padded_n).collect();
        let db = distance_to_centroid(&u_padded, &b, &members, &opts, &QueryLedger::for_data(&b), &mut rng).unwrap();
        prop_assert!((da.value - db.value).abs() < 1e-9);
        let oracle = exact_distance(&a.pad(&u).unwrap(), &mean_vector(&a, &members).unwrap()).unwrap();
        prop_assert!((da.value - oracle).abs() < 1e-9);
    }

    #[test]
    fn encode_cost_grows_with_log_dimension(n in 1usize..=200) {
        let row: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let data = DataSet::from_real_rows(vec![row]).unwrap();
        let ledger = QueryLedger::for_data(&data);
        encode_vector(&data, 0, &ledger).unwrap();
        let r = ledger.report();
        let q = data.qubits();
        prop_assert_eq!(1usize << q, data.dim());
        prop_assert_eq!(r.subnorm_reads, subnorm_reads_per_encode(q));
        prop_assert_eq!(r.subnorm_reads + r.amplitude_reads, 3 * q as u64 - 1);
        // logarithmic, so far below the dimension once it is non-trivial
        prop_assert!(r.subnorm_reads + r.amplitude_reads <= 3 * (usize::BITS - n.leading_zeros()) as u64);
    }

    #[test]
    fn lloyd_wcss_never_increases(data in sized_rows(), seed in any::<u64>(), k in 1usize..=3) {
        let data = DataSet::from_real_rows(data).unwrap();
        prop_assume!(k <= data.len());
        let seeds = kmeanspp_seeds(&data, k, &mut SimRng::new(seed)).unwrap();
        let run = kmeans_lloyd(&data, k, &seeds, 100).unwrap();
        prop_assert!(run.wcss_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        prop_assert!(run.converged);
    }
}

/// Second k-means++ seed frequencies against the exact D^2 law.
#[test]
fn kmeanspp_second_seed_follows_squared_distance() {
    let data = DataSet::from_real_rows(vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![3.0, 1.0], vec![0.0, 5.0]]).unwrap();
    let m = data.len();
    let d = DistanceMatrix::from_data(&data).unwrap();
    let mut want = vec![vec![0.0; m]; m];
    for a in 0..m {
        let total: f64 = (0..m).map(|b| d.get(a, b)).sum();
        for b in 0..m {
            want[a][b] = d.get(a, b) / total / m as f64;
        }
    }
    let trials = 40_000;
    let mut counts = vec![vec![0u32; m]; m];
    for s in 0..trials {
        let seeds = kmeanspp_seeds(&data, 2, &mut SimRng::new(s)).unwrap();
        counts[seeds[0]][seeds[1]] += 1;
    }
    for a in 0..m {
        for b in 0..m {
            let p = want[a][b];
            let f = counts[a][b] as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((f - p).abs() <= 5.0 * sigma + 1e-12, "pair ({a},{b}): {f} vs {p}");
        }
    }
}
