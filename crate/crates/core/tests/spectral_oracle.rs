mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use supplyflex::spectral::{
    bootstrap_slowdown, second_eigenvalue, slowdown_factor, ChainBuilder, DenseMatrix, SparseMatrix,
};
use supplyflex::tensors::Flexibility;

use common::{e, multiset, nalgebra_second_modulus, random_absorbing_chain};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn second_eigenvalue_matches_full_spectrum(seed in any::<u64>(), n in 2usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_absorbing_chain(&mut rng, n);
        let m = SparseMatrix::from_dense(&DenseMatrix::from_rows(&rows));
        let got = second_eigenvalue(&m, 1e-12).unwrap().modulus;
        let want = nalgebra_second_modulus(&rows);
        prop_assert!((got - want).abs() <= 1e-9, "n={} got {} want {}", n, got, want);
    }
}

fn layered_paths() -> supplyflex::pathrec::PathMultiset {
    let (m1, m2, a, b, c, d) = (e(0), e(1), e(2), e(3), e(4), e(5));
    multiset(&[
        (&[m1, a, c], 5),
        (&[m2, b, c], 2),
        (&[m1, a, d], 1),
        (&[m2, b, d], 4),
        (&[m1, b, d], 3),
        (&[m2, a, c, d], 2),
    ])
}

#[test]
fn rigid_chain_has_unit_slowdown() {
    let builder = ChainBuilder::from_paths(&layered_paths());
    let r = slowdown_factor(&builder, &Flexibility::zero(), 1e-12).unwrap();
    assert_eq!(r.sigma, 1.0);
}

#[test]
fn chain_matrices_are_stochastic() {
    let builder = ChainBuilder::from_paths(&layered_paths());
    for phi in [0.0, 0.3, 1.0] {
        let m = builder.chain(&Flexibility::uniform(phi).unwrap()).unwrap().to_matrix();
        assert!(m.max_row_error() <= 1e-12);
    }
}

#[test]
fn bootstrap_is_reproducible() {
    let paths = layered_paths();
    let a = bootstrap_slowdown(&paths, &[0.0, 0.5, 1.0], 20, 11, 1e-12).unwrap();
    let b = bootstrap_slowdown(&paths, &[0.0, 0.5, 1.0], 20, 11, 1e-12).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].sigma, 1.0);
}
