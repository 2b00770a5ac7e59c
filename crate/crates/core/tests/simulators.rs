use betasmc::rng::StreamKey;
use betasmc::simulators::{contaminate, simulate_states, ContaminationSpec, WienerVelocityConfig};
use betasmc::stats;
use nalgebra::{DMatrix, DVector};

#[test]
fn third_state_has_the_propagated_covariance() {
    let w = WienerVelocityConfig::default();
    let f = w.transition().unwrap();
    let (a, q) = (w.transition_matrix(), w.transition_covariance());
    let expected = &q + &a * &q * a.transpose() + &a * &a * &q * (&a * &a).transpose();
    let reps = 20_000;
    let xs: Vec<DVector<f64>> = (0..reps)
        .map(|s| simulate_states(&f, &w.x0, 3, &StreamKey::new(s)).unwrap()[2].clone())
        .collect();
    let mean = xs.iter().fold(DVector::zeros(4), |acc, x| acc + x) / reps as f64;
    let mut cov = DMatrix::zeros(4, 4);
    for x in &xs {
        let d = x - &mean;
        cov += &d * d.transpose();
    }
    cov /= (reps - 1) as f64;
    for i in 0..4 {
        for j in 0..4 {
            let se = ((expected[(i, i)] * expected[(j, j)] + expected[(i, j)].powi(2)) / reps as f64).sqrt();
            assert!((cov[(i, j)] - expected[(i, j)]).abs() < 4.0 * se, "({i},{j}) {} vs {}", cov[(i, j)], expected[(i, j)]);
        }
    }
    let a3 = &a * &a * &a;
    let centre = &a3 * DVector::from_row_slice(&w.x0);
    for i in 0..4 {
        let se = (expected[(i, i)] / reps as f64).sqrt();
        assert!((mean[i] - centre[i]).abs() < 4.0 * se);
    }
}

fn zeros(n: usize) -> Vec<DVector<f64>> {
    vec![DVector::zeros(1); n]
}

fn ones(n: usize) -> Vec<DVector<f64>> {
    vec![DVector::from_element(1, 1.0); n]
}

fn rate_ok(flags: &[bool], p: f64) {
    let n = flags.len() as f64;
    let rate = flags.iter().filter(|f| **f).count() as f64 / n;
    assert!((rate - p).abs() < 4.0 * (p * (1.0 - p) / n).sqrt(), "rate {rate}");
}

#[test]
fn additive_gaussian_outliers_have_the_configured_scale() {
    let n = 100_000;
    let spec = ContaminationSpec::AdditiveGaussian { p: 0.1, scale: 100.0 };
    let (obs, flags) = contaminate(&zeros(n), &zeros(n), &spec, &StreamKey::new(1)).unwrap();
    rate_ok(&flags, 0.1);
    let hits: Vec<f64> = obs.iter().zip(&flags).filter(|(_, f)| **f).map(|(y, _)| y[0]).collect();
    let var = hits.iter().map(|v| v * v).sum::<f64>() / hits.len() as f64;
    assert!((var - 1e4).abs() < 4.0 * 1e4 * (2.0 / hits.len() as f64).sqrt());
    assert!(obs.iter().zip(&flags).all(|(y, f)| *f || y[0] == 0.0));
}

#[test]
fn cauchy_outliers_have_median_magnitude_equal_to_scale() {
    let n = 200_000;
    let spec = ContaminationSpec::AdditiveStudentT { p: 0.05, dof: 1.0, scale: 20.0 };
    let (obs, flags) = contaminate(&zeros(n), &zeros(n), &spec, &StreamKey::new(2)).unwrap();
    rate_ok(&flags, 0.05);
    let mags: Vec<f64> = obs.iter().zip(&flags).filter(|(_, f)| **f).map(|(y, _)| y[0].abs()).collect();
    // density of |X| at its median s is 1/(π s); median SE = 1 / (2 f √n)
    let se = std::f64::consts::PI * 20.0 / (2.0 * (mags.len() as f64).sqrt());
    assert!((stats::median(&mags) - 20.0).abs() < 4.0 * se);
}

#[test]
fn multiplicative_outliers_scale_the_residual_by_an_exponential() {
    let n = 100_000;
    let spec = ContaminationSpec::MultiplicativeExponential { p: 0.1, scale: 1000.0 };
    let (obs, flags) = contaminate(&zeros(n), &ones(n), &spec, &StreamKey::new(3)).unwrap();
    rate_ok(&flags, 0.1);
    let xi: Vec<f64> = obs.iter().zip(&flags).filter(|(_, f)| **f).map(|(y, _)| y[0]).collect();
    assert!(xi.iter().all(|v| *v >= 0.0));
    let mean = stats::mean(&xi);
    assert!((mean - 1000.0).abs() < 4.0 * 1000.0 / (xi.len() as f64).sqrt());
}
