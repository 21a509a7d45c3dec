mod common;

use common::{integrate, rayleigh_pdf, tail_integral};
use e2m_core::{LifetimeDistribution, MixtureParams, Rayleigh};
use proptest::prelude::*;

proptest! {
    #[test]
    fn survival_matches_tail_quadrature(xi in 0.2f64..6.0, scaled in 0.0f64..4.0) {
        let x = scaled / xi;
        let d = Rayleigh::new(xi).unwrap();
        let oracle = tail_integral(&|t| rayleigh_pdf(xi, t), x, xi, 1e-13);
        let s = d.survival(x).unwrap();
        prop_assert!((s - oracle).abs() <= 1e-8 * oracle);
        prop_assert!((d.cdf(x).unwrap() + s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf(xi in 0.2f64..6.0, scaled in 0.01f64..4.0) {
        let x = scaled / xi;
        let d = Rayleigh::new(xi).unwrap();
        let back = d.quantile(d.cdf(x).unwrap()).unwrap();
        prop_assert!((back - x).abs() <= 1e-9 * x);
    }

    #[test]
    fn truncated_second_moment_matches_quadrature(xi in 0.2f64..6.0, scaled in 0.0f64..4.0) {
        let y = scaled / xi;
        let d = Rayleigh::new(xi).unwrap();
        let pdf = |t: f64| rayleigh_pdf(xi, t);
        let num = tail_integral(&|t| t * t * pdf(t), y, xi, 1e-13);
        let den = tail_integral(&pdf, y, xi, 1e-13);
        let m = d.truncated_second_moment(y).unwrap();
        prop_assert!((m - num / den).abs() <= 1e-8 * m);
    }

    #[test]
    fn log_density_is_consistent(xi in 0.2f64..6.0, x in 0.001f64..5.0) {
        let d = Rayleigh::new(xi).unwrap();
        prop_assert!((d.ln_pdf(x) - d.pdf(x).unwrap().ln()).abs() < 1e-12);
        prop_assert!((d.ln_survival(x) + 0.5 * xi * xi * x * x).abs() < 1e-12);
    }

    #[test]
    fn mixture_is_affine_in_weights(
        a in 0.05f64..0.95,
        b in 0.05f64..0.95,
        t in 0.0f64..=1.0,
        xis in prop::collection::vec(0.3f64..4.0, 2),
        x in 0.01f64..5.0,
    ) {
        let m1 = MixtureParams::new(vec![a, 1.0 - a], xis.clone()).unwrap();
        let m2 = MixtureParams::new(vec![b, 1.0 - b], xis.clone()).unwrap();
        let c = t * a + (1.0 - t) * b;
        let mix = MixtureParams::new(vec![c, 1.0 - c], xis).unwrap();
        let blend = t * m1.pdf(x).unwrap() + (1.0 - t) * m2.pdf(x).unwrap();
        prop_assert!((mix.pdf(x).unwrap() - blend).abs() <= 1e-12 * blend.max(1e-300));
        let blend_s = t * m1.survival(x).unwrap() + (1.0 - t) * m2.survival(x).unwrap();
        prop_assert!((mix.survival(x).unwrap() - blend_s).abs() <= 1e-12);
    }

    #[test]
    fn mixture_density_integrates_to_one(lambda in 0.05f64..0.95, xis in prop::collection::vec(0.3f64..4.0, 2)) {
        let m = MixtureParams::new(vec![lambda, 1.0 - lambda], xis.clone()).unwrap();
        let slow = xis.iter().cloned().fold(f64::INFINITY, f64::min);
        let density = |x: f64| m.ln_pdf(x).exp();
        let total = integrate(&density, 0.0, 5.0 / slow, 1e-12)
            + integrate(&density, 5.0 / slow, 45.0 / slow, 1e-12);
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn single_component_sampler_passes_ks() {
    use rand::SeedableRng;
    let xi = 0.7;
    let d = Rayleigh::new(xi).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let n = 5000;
    let mut xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-0.5 * xi * xi * x * x).exp();
            (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.628 / (n as f64).sqrt(), "KS statistic {ks}");
}

#[test]
fn mixture_parameters_round_trip_through_json() {
    let m = MixtureParams::new(vec![0.25, 0.75], vec![1.5, 0.4]).unwrap();
    let text = serde_json::to_string(&m).unwrap();
    assert_eq!(text, r#"{"lambdas":[0.25,0.75],"xis":[1.5,0.4]}"#);
    let back: MixtureParams = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
    assert!(serde_json::from_str::<MixtureParams>(r#"{"lambdas":[1.0],"xis":[1.0],"mu":2}"#).is_err());
    assert!(serde_json::from_str::<MixtureParams>(r#"{"lambdas":[0.5,0.6],"xis":[1.0,2.0]}"#).is_err());
    assert!(serde_json::from_str::<MixtureParams>(r#"{"lambdas":[1.0],"xis":[-1.0]}"#).is_err());
}
