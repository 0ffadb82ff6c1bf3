use oscint::exponents::{bct_exponent, broad_to_linear, figure1, figure2, necessary_exponent, pbar, pbar_fn, theorem_endpoint, Hypothesis, Mode};
use proptest::prelude::*;

proptest! {
    #[test]
    fn broad_to_linear_recovers_the_endpoints(n in 2u32..=50) {
        let pd = broad_to_linear(n, &pbar_fn(n), Mode::PositiveDefinite).unwrap();
        prop_assert_eq!(pd.p_linear(), Some(&theorem_endpoint(n, Hypothesis::H2Plus).unwrap().value));
        let general = broad_to_linear(n, &bct_exponent, Mode::General).unwrap();
        prop_assert_eq!(general.p_linear(), Some(&theorem_endpoint(n, Hypothesis::H2).unwrap().value));
    }

    #[test]
    fn k_star_in_positive_definite_mode(n in 2u32..=50) {
        let pd = broad_to_linear(n, &pbar_fn(n), Mode::PositiveDefinite).unwrap();
        let expected = if n % 2 == 0 { n / 2 + 1 } else { (n + 1) / 2 };
        prop_assert_eq!(pd.k_star(), Some(expected));
    }

    #[test]
    fn pbar_is_strictly_decreasing_in_k(n in 3u32..=50) {
        for k in 2..n {
            prop_assert!(pbar(k + 1, n).unwrap().value < pbar(k, n).unwrap().value);
        }
    }
}

#[test]
fn necessary_exponents_match_the_sharp_table() {
    let f1 = figure1(50).unwrap();
    let f2 = figure2(50).unwrap();
    for (a, b) in f1.iter().zip(&f2) {
        let n = a.n;
        assert_eq!(necessary_exponent(b.h2_m, &b.h2_sigma, n).unwrap().value, a.h2.value);
        assert_eq!(necessary_exponent(b.h2plus_m, &b.h2plus_sigma, n).unwrap().value, a.h2plus.value);
    }
}
