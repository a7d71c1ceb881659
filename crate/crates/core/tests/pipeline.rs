use proptest::prelude::*;
use wignerlab::combinat::catalan;
use wignerlab::freecalc::{cumulants_from_moments, free_moment_sequence, wick_with, SemicircleLaw};
use wignerlab::kernels::rosenblatt_moments_via_cumulants;
use wignerlab::linalg::Eigensolver;
use wignerlab::moments::{clt_variance, exact_joint_moment, limit_joint_moment, CovarianceModel, LimitMethod};
use wignerlab::poly::{basis_monomials, decompose, Basis, TchebExpansion};

#[test]
fn three_routes_to_semicircle_moments() {
    let law = SemicircleLaw::new(0.0, 2.0).unwrap();
    let from_cumulants = free_moment_sequence(&[0.0, 2.0], 10).unwrap();
    for k in 1..=10 {
        let wick = wick_with(&vec![0; k], |_, _| 2.0, 1).unwrap();
        assert_eq!(law.moment(k), from_cumulants[k - 1], "k={k}");
        assert_eq!(wick, from_cumulants[k - 1], "k={k}");
    }
    assert_eq!(from_cumulants[9], catalan(5) as f64 * 32.0);
}

#[test]
fn limit_moments_match_operator_cumulants() {
    // φ(R³) = κ_3 and φ(R⁴) = κ_4 + 2κ_2² for a centred variable
    let m = rosenblatt_moments_via_cumulants(0.7, 1.0, 1024, 4, Eigensolver::Auto).unwrap();
    for (p, want) in [(3usize, m[2]), (4, m[3])] {
        let mc = limit_joint_moment(2, 0.7, &vec![1.0; p], LimitMethod::mc(400_000, 5)).unwrap();
        assert!((mc.value - want).abs() < 0.04 * want + 3.0 * mc.se(), "p={p}: {} vs {want}", mc.value);
    }
}

#[test]
fn lattice_moments_under_white_noise_are_catalan() {
    // i.i.d. semicircular: Σ_k φ(U_1(X_k)^2) = n and the fourth moment counts NC pairings
    let n = 6;
    let two = exact_joint_moment(&[1, 1], &[1.0, 1.0], n, &CovarianceModel::Delta).unwrap().value;
    assert_eq!(two, n as f64);
    let four = exact_joint_moment(&[1, 1, 1, 1], &[1.0; 4], n, &CovarianceModel::Delta).unwrap().value;
    // pairings (12)(34) and (14)(23) each contribute n²; φ(X⁴) = 2 covers the diagonal
    assert_eq!(four, (2 * n * n) as f64);
}

#[test]
fn clt_variance_for_white_noise_is_the_coefficient_norm() {
    let e = TchebExpansion::new(Basis::Tchebycheff, vec![0.0, 0.5, 1.0, -2.0]);
    let v = clt_variance(&e, &CovarianceModel::Delta, 10).unwrap();
    assert_eq!(v.free, 0.25 + 1.0 + 4.0);
    assert_eq!(v.classical, 0.25 + 2.0 + 24.0);
}

proptest! {
    #[test]
    fn cumulant_moment_round_trip(kappa in prop::collection::vec(-1.0f64..1.0, 1..8)) {
        let n = kappa.len();
        let m = free_moment_sequence(&kappa, n).unwrap();
        let back = cumulants_from_moments(&m).unwrap();
        for (a, b) in kappa.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + m.iter().map(|x| x.abs()).fold(0.0, f64::max)));
        }
    }

    #[test]
    fn basis_elements_decompose_to_themselves(k in 0usize..20, hermite in any::<bool>()) {
        let basis = if hermite { Basis::Hermite } else { Basis::Tchebycheff };
        let e = decompose(&basis_monomials(basis, k), basis).unwrap();
        prop_assert_eq!(e, TchebExpansion::basis_element(basis, k));
    }
}
