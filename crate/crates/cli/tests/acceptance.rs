//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{dmatrix, DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use betasmc::filters::{normalise_log_weights, resample, run_bpf, FilterSpec, ResamplingScheme};
use betasmc::kalman::{kalman_filter, rts_smoother, GaussianBelief};
use betasmc::models::{
    GaussianDensity, GeneralisedLikelihood, LikelihoodFamily, ObservationMap, StateSpaceModel, TransitionKernel,
};
use betasmc::rng::{Purpose, StreamKey};
use betasmc::simulators::{build_matern52, matern52_kernel, simulate_lgssm, simulate_states};
use betasmc::smoothing::ffbs;
use betasmc::stats;
use betasmc_cli::config::ExperimentConfig;
use betasmc_cli::experiment::{run_experiment, run_selection, ExperimentResult};
use betasmc_cli::output::{write_experiment, write_selection};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn filter<'a>(res: &'a ExperimentResult, label: &str) -> Vec<&'a betasmc::metrics::RunMetrics> {
    let i = res.filter_index(label).unwrap_or_else(|| panic!("no filter {label}"));
    let ms = res.metrics_of(i);
    assert_eq!(ms.len(), res.runs, "{label}: failed runs");
    ms
}

fn median_of(res: &ExperimentResult, label: &str, f: fn(&betasmc::metrics::RunMetrics) -> f64) -> f64 {
    stats::median(&filter(res, label).iter().map(|m| f(m)).collect::<Vec<_>>())
}

fn mean_of(res: &ExperimentResult, label: &str, f: fn(&betasmc::metrics::RunMetrics) -> f64) -> f64 {
    stats::mean(&filter(res, label).iter().map(|m| f(m)).collect::<Vec<_>>())
}

fn nmse(m: &betasmc::metrics::RunMetrics) -> f64 {
    m.nmse
}

fn coverage(m: &betasmc::metrics::RunMetrics) -> f64 {
    m.coverage
}

fn medae(m: &betasmc::metrics::RunMetrics) -> f64 {
    m.medae
}

fn criterion_1(res: &ExperimentResult, secs: f64) -> Outcome {
    let beta = median_of(res, "beta-bpf(0.1)", nmse);
    let bpf = median_of(res, "bpf", nmse);
    let kalman = median_of(res, "kalman", nmse);
    let oracle = median_of(res, "oracle-bpf", nmse);
    let pass = beta <= bpf / 5.0 && beta <= kalman / 20.0 && secs < 180.0;
    outcome(
        pass,
        format!(
            "median NMSE beta(0.1) {beta:.5}, oracle {oracle:.5}, bpf {bpf:.5} (x{:.1}), kalman {kalman:.4} (x{:.0}); {secs:.0}s",
            bpf / beta,
            kalman / beta
        ),
    )
}

fn criterion_2(res: &ExperimentResult) -> Outcome {
    let k = mean_of(res, "kalman", medae);
    let b = mean_of(res, "bpf", medae);
    let b01 = mean_of(res, "beta-bpf(0.1)", medae);
    let b08 = mean_of(res, "beta-bpf(0.8)", medae);
    let pass = (4.7..=5.8).contains(&k) && (2.3..=3.3).contains(&b) && (0.85..=0.95).contains(&b01) && b08 > 100.0;
    outcome(pass, format!("mean MedAE kalman {k:.3}, bpf {b:.3}, beta(0.1) {b01:.3}, beta(0.8) {b08:.2}"))
}

fn criterion_3(res: &ExperimentResult) -> Outcome {
    let bpf = mean_of(res, "bpf", coverage);
    let betas: Vec<(f64, f64)> = [0.05, 0.1, 0.2]
        .iter()
        .map(|b| (*b, mean_of(res, &format!("beta-bpf({b})"), coverage)))
        .collect();
    let pass = betas.iter().all(|(_, c)| (0.80..=0.95).contains(c) && bpf < *c);
    let text: Vec<String> = betas.iter().map(|(b, c)| format!("beta({b}) {c:.3}")).collect();
    outcome(pass, format!("mean 90% coverage {}, bpf {bpf:.3}", text.join(", ")))
}

fn criterion_4(res: &ExperimentResult, secs: f64) -> Outcome {
    let bpf = mean_of(res, "bpf", medae);
    let bbpf = mean_of(res, "beta-bpf(0.05)", medae);
    let apf = mean_of(res, "apf", medae);
    let bapf = mean_of(res, "beta-apf(0.05)", medae);
    let within = |v: f64, reference: f64| (v - reference).abs() <= 0.15 * reference;
    let ordering = bapf < apf && apf < bpf && bbpf < bpf;
    let absolute = within(bpf, 16.63) && within(bbpf, 16.39) && within(apf, 15.96) && within(bapf, 15.69);
    outcome(
        ordering && absolute && secs < 600.0,
        format!(
            "mean MedAE beta-apf {bapf:.3} < apf {apf:.3} < bpf {bpf:.3}: {}; beta-bpf {bbpf:.3} < bpf: {}; within 15%: {absolute}; {secs:.0}s",
            bapf < apf && apf < bpf,
            bbpf < bpf
        ),
    )
}

fn criterion_5(res: &ExperimentResult) -> Outcome {
    let label = "beta-bpf(0.1)";
    let (n, c) = (median_of(res, label, nmse), mean_of(res, label, coverage));
    let mut pass = true;
    let mut text = vec![format!("beta(0.1) NMSE {n:.5} cov {c:.3}")];
    for t in ["t-bpf(scale=1)", "t-bpf(scale=10)"] {
        let (tn, tc) = (median_of(res, t, nmse), mean_of(res, t, coverage));
        pass &= n < tn && c > tc;
        text.push(format!("{t} NMSE {tn:.5} cov {tc:.3}"));
    }
    outcome(pass, text.join("; "))
}

fn criterion_7(res: &ExperimentResult) -> Outcome {
    let beta = median_of(res, "beta-bpf(0.2)", nmse);
    let kalman = median_of(res, "kalman", nmse);
    let bpf = median_of(res, "bpf", nmse);
    outcome(
        beta < kalman && beta < bpf,
        format!("median NMSE beta-bpf(0.2)+ffbs {beta:.4}, kalman+rts {kalman:.4}, bpf+ffbs {bpf:.4}"),
    )
}

// property checks

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn power_integrals() -> Outcome {
    let mut worst: f64 = 0.0;
    let betas = [0.05, 0.1, 0.5, 1.0];
    let id = || ObservationMap::Linear(DMatrix::identity(1, 1));
    let one_d: Vec<(LikelihoodFamily, f64)> = vec![
        (LikelihoodFamily::gaussian(dmatrix![1.0], dmatrix![2.5]).unwrap(), 2.5f64.sqrt()),
        (LikelihoodFamily::asymmetric_gaussian(id(), 1.0, 10.0).unwrap(), 10.0),
        (
            LikelihoodFamily::gaussian_mixture(
                id(),
                vec![(0.3, DVector::zeros(1), dmatrix![0.7]), (0.7, DVector::zeros(1), dmatrix![0.7])],
            )
            .unwrap(),
            0.7f64.sqrt(),
        ),
    ];
    for (fam, scale) in &one_d {
        for &b in &betas {
            let density = |y: f64| fam.log_density(&[0.0], &[y]).exp().powf(1.0 + b);
            // split at the mode where the two-piece density changes curvature
            let q = simpson(density, -40.0 * scale, 0.0, 200_000) + simpson(density, 0.0, 40.0 * scale, 200_000);
            let exact = fam.power_integral(&[0.0], b).unwrap();
            worst = worst.max((exact - q).abs() / q);
        }
    }
    // correlated bivariate gaussian on a tensor grid
    let cov = dmatrix![1.5, 0.6; 0.6, 0.8];
    let fam = LikelihoodFamily::gaussian(DMatrix::identity(2, 2), cov).unwrap();
    for &b in &betas {
        let (lim, n) = (12.0, 1200);
        let h = 2.0 * lim / n as f64;
        let mut q = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let y = [-lim + i as f64 * h, -lim + j as f64 * h];
                q += fam.log_density(&[0.0, 0.0], &y).exp().powf(1.0 + b);
            }
        }
        q *= h * h;
        let exact = fam.power_integral(&[0.0, 0.0], b).unwrap();
        worst = worst.max((exact - q).abs() / q);
    }
    outcome(worst <= 1e-8, format!("max relative error {worst:.2e}"))
}

fn small_beta_weights() -> Outcome {
    let key = StreamKey::new(41);
    let mut rng = key.stream(0, Purpose::Simulate);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let var = 0.1 + 10.0 * rng.random::<f64>();
        let lik = LikelihoodFamily::gaussian(dmatrix![1.0], dmatrix![var]).unwrap();
        let std = GeneralisedLikelihood::standard(lik.clone());
        let tiny = GeneralisedLikelihood::beta(lik, 1e-6).unwrap();
        let xs: Vec<f64> = (0..100).map(|_| 8.0 * rng.random::<f64>() - 4.0).collect();
        let y = 8.0 * rng.random::<f64>() - 4.0;
        let lp = |gl: &GeneralisedLikelihood| xs.iter().map(|x| gl.log_potential(&[*x], &[y])).collect::<Vec<_>>();
        let (a, _) = normalise_log_weights(&lp(&std), 1).unwrap();
        let (b, _) = normalise_log_weights(&lp(&tiny), 1).unwrap();
        worst = worst.max(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
    }
    outcome(worst <= 1e-4, format!("max weight deviation {worst:.2e}"))
}

fn random_lgssm(seed: u64) -> StateSpaceModel {
    let mut rng = StreamKey::new(seed).stream(0, Purpose::Simulate);
    let mut u = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| 2.0 * rng.random::<f64>() - 1.0);
    let a = u(4, 4);
    let sv = a.clone().singular_values().max();
    let a = a * (0.95 / sv);
    let b = u(4, 4);
    let q = &b * b.transpose() * 0.2 + DMatrix::identity(4, 4) * 0.1;
    let h = u(2, 4);
    StateSpaceModel::new(
        GaussianDensity::new(DVector::zeros(4), DMatrix::identity(4, 4)).unwrap(),
        TransitionKernel::new(a, q).unwrap(),
        LikelihoodFamily::gaussian(h, DMatrix::identity(2, 2) * 0.5).unwrap(),
    )
    .unwrap()
}

fn kalman_of(model: &StateSpaceModel, ys: &[DVector<f64>]) -> betasmc::kalman::KalmanOutput {
    let prior = GaussianBelief::new(model.prior().mean().clone(), model.prior().covariance().clone()).unwrap();
    kalman_filter(&model.linear_gaussian_system().unwrap(), &prior, ys).unwrap()
}

fn observations(model: &StateSpaceModel, steps: usize, seed: u64) -> Vec<DVector<f64>> {
    let x0 = model.prior().mean().as_slice().to_vec();
    simulate_lgssm(model.transition(), &x0, model.likelihood(), steps, &StreamKey::new(seed))
        .unwrap()
        .clean_obs
}

/// Largest |replicate mean − reference| / (replicate SD / √R) over all entries.
fn max_z(replicates: &[DMatrix<f64>], reference: &DMatrix<f64>) -> f64 {
    let r = replicates.len() as f64;
    let mut worst: f64 = 0.0;
    for t in 0..reference.nrows() {
        for j in 0..reference.ncols() {
            let v: Vec<f64> = replicates.iter().map(|m| m[(t, j)]).collect();
            let m = stats::mean(&v);
            let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
            worst = worst.max((m - reference[(t, j)]).abs() / (sd / r.sqrt()));
        }
    }
    worst
}

/// One N = 10⁴ run against the Kalman means. The standard error of each entry
/// is the RMS error of 40 independent replicates, so the O(1/N) bias of the
/// self-normalised estimator is part of the error being measured.
fn pf_vs_kalman() -> Outcome {
    let model = random_lgssm(7);
    let ys = observations(&model, 50, 8);
    let km = kalman_of(&model, &ys).means();
    let gl = GeneralisedLikelihood::standard(model.likelihood().clone());
    let run = |seed: u64| run_bpf(&model, &gl, &FilterSpec::new(10_000), &ys, &StreamKey::new(seed)).unwrap().means;
    let test = run(500);
    let reps: Vec<DMatrix<f64>> = (501..541).map(run).collect();
    let mut worst: f64 = 0.0;
    for t in 0..km.nrows() {
        for j in 0..km.ncols() {
            let ms = reps.iter().map(|m| (m[(t, j)] - km[(t, j)]).powi(2)).sum::<f64>() / reps.len() as f64;
            worst = worst.max((test[(t, j)] - km[(t, j)]).abs() / ms.sqrt());
        }
    }
    outcome(worst <= 4.0, format!("max |error| / SE {worst:.2} over 50 steps x 4 dims (SE from 40 replicates)"))
}

fn convergence_rate() -> Outcome {
    let model = random_lgssm(7);
    let ys = observations(&model, 50, 8);
    let kf = kalman_of(&model, &ys);
    let (km, kv) = (kf.means(), kf.variances());
    let gl = GeneralisedLikelihood::standard(model.likelihood().clone());
    let ns = [100usize, 1000, 10_000];
    let errs: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let mut sq = 0.0;
            let mut count = 0.0;
            for r in 0..20 {
                let out = run_bpf(&model, &gl, &FilterSpec::new(n), &ys, &StreamKey::new(900 + r)).unwrap();
                for t in 0..km.nrows() {
                    for j in 0..km.ncols() {
                        sq += (out.means[(t, j)] - km[(t, j)]).powi(2) / kv[(t, j)];
                        count += 1.0;
                    }
                }
            }
            (sq / count).sqrt()
        })
        .collect();
    let lx: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (stats::mean(&lx), stats::mean(&ly));
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    outcome((slope + 0.5).abs() <= 0.15, format!("log-log slope {slope:.3} (errors {errs:.4?})"))
}

fn ffbs_vs_rts() -> Outcome {
    let model = StateSpaceModel::new(
        GaussianDensity::new(DVector::from_vec(vec![0.0, 1.0]), DMatrix::identity(2, 2)).unwrap(),
        TransitionKernel::new(dmatrix![1.0, 0.1; 0.0, 1.0], dmatrix![0.01 / 3.0, 0.005; 0.005, 0.1]).unwrap(),
        LikelihoodFamily::gaussian(dmatrix![1.0, 0.0], dmatrix![0.25]).unwrap(),
    )
    .unwrap();
    let ys = observations(&model, 20, 4);
    let kf = kalman_of(&model, &ys);
    let rts = rts_smoother(&kf, model.transition().matrix()).unwrap();
    let reference = DMatrix::from_fn(rts.len(), 2, |t, j| rts[t].mean[j]);
    let gl = GeneralisedLikelihood::standard(model.likelihood().clone());
    let spec = FilterSpec::new(5000).storing_ensembles();
    let reps: Vec<DMatrix<f64>> = (0..16)
        .map(|r| {
            let key = StreamKey::new(300 + r);
            let out = run_bpf(&model, &gl, &spec, &ys, &key).unwrap();
            ffbs(&out, model.transition(), 1000, &key.child(1)).unwrap().means()
        })
        .collect();
    let z = max_z(&reps, &reference);
    outcome(z <= 4.0, format!("max |z| {z:.2} over 20 steps x 2 dims, 16 replicates"))
}

/// `exp(F t)` for the Matérn-5/2 drift, whose only eigenvalue is `-λ`.
fn matern_exp(lambda: f64, t: f64) -> DMatrix<f64> {
    let f = dmatrix![
        0.0, 1.0, 0.0;
        0.0, 0.0, 1.0;
        -lambda.powi(3), -3.0 * lambda * lambda, -3.0 * lambda
    ];
    let n = f + DMatrix::identity(3, 3) * lambda;
    (DMatrix::identity(3, 3) + &n * t + &n * &n * (t * t / 2.0)) * (-lambda * t).exp()
}

fn matern_stationarity() -> Outcome {
    let mut text = Vec::new();
    let mut pass = true;
    for (l, s2, dt, tol_scale) in [(1.0, 1.0, 0.1, 1.0), (0.03, 32.0, 0.005, 0.0)] {
        let gp = build_matern52(l, s2, dt, 1.0).unwrap();
        let lambda = 5f64.sqrt() / l;
        let kappa = 5.0 * s2 / (3.0 * l * l);
        let p_inf = dmatrix![s2, 0.0, -kappa; 0.0, kappa, 0.0; -kappa, 0.0, s2 * lambda.powi(4)];
        let qc = 16.0 / 3.0 * s2 * lambda.powi(5);
        let integrand = |s: f64, i: usize, j: usize| {
            let e = matern_exp(lambda, s);
            qc * e[(i, 2)] * e[(j, 2)]
        };
        let q = DMatrix::from_fn(3, 3, |i, j| simpson(|s| integrand(s, i, j), 0.0, dt, 4000));
        let resid = (&gp.a * &gp.p_inf * gp.a.transpose() + &q - &gp.p_inf).norm();
        // absolute bound at unit scale; relative to ‖P∞‖ when entries reach 1e9
        let bound = if tol_scale > 0.0 { 1e-8 } else { 1e-8 * p_inf.norm() };
        pass &= resid <= bound && (&gp.p_inf - &p_inf).norm() <= 1e-12 * p_inf.norm();
        text.push(format!("l={l}: residual {resid:.2e} (bound {bound:.1e})"));
    }

    let (l, s2, dt) = (0.03, 32.0, 0.005);
    let gp = build_matern52(l, s2, dt, 1.0).unwrap();
    let f = gp.transition().unwrap();
    let prior = gp.prior().unwrap();
    let chains = 20_000;
    let lags = [0usize, 3, 6, 12];
    let mut products = vec![Vec::with_capacity(chains); lags.len()];
    for c in 0..chains {
        let key = StreamKey::new(70_000 + c as u64);
        let mut x0 = vec![0.0; 3];
        prior.sample_into(&mut key.stream(0, Purpose::Init), &mut x0);
        let path = simulate_states(&f, &x0, 12, &key).unwrap();
        for (k, &lag) in lags.iter().enumerate() {
            let x = if lag == 0 { x0[0] } else { path[lag - 1][0] };
            products[k].push(x0[0] * x);
        }
    }
    for (k, &lag) in lags.iter().enumerate() {
        let m = stats::mean(&products[k]);
        let sd = (products[k].iter().map(|p| (p - m).powi(2)).sum::<f64>() / (chains - 1) as f64).sqrt();
        let se = sd / (chains as f64).sqrt();
        let expected = matern52_kernel(lag as f64 * dt, l, s2);
        let z = (m - expected) / se;
        pass &= z.abs() <= 3.0;
        text.push(format!("lag {:.3}: {m:.3} vs {expected:.3} (z {z:.2})", lag as f64 * dt));
    }
    outcome(pass, text.join("; "))
}

fn resampler_chi_square() -> Outcome {
    let mut rng = StreamKey::new(12).stream(0, Purpose::Simulate);
    let k = 20;
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let n = 100_000;
    let alpha = 0.001;

    let idx = resample(&w, n, ResamplingScheme::Multinomial, &mut StreamKey::new(13).stream(1, Purpose::Resample));
    let mut counts = vec![0.0; k];
    for i in idx {
        counts[i] += 1.0;
    }
    let chi_m: f64 = counts.iter().zip(&w).map(|(c, p)| (c - n as f64 * p).powi(2) / (n as f64 * p)).sum();
    let crit_m = ChiSquared::new((k - 1) as f64).unwrap().inverse_cdf(1.0 - alpha);

    // systematic: each count is floor or ceil of N w with P(ceil) = frac(N w)
    let reps = 400;
    let mut ceil_hits = vec![0.0; k];
    let mut bounded = true;
    for r in 0..reps {
        let idx = resample(&w, n, ResamplingScheme::Systematic, &mut StreamKey::new(14).stream(r, Purpose::Resample));
        let mut c = vec![0usize; k];
        for i in idx {
            c[i] += 1;
        }
        for i in 0..k {
            let e = n as f64 * w[i];
            bounded &= (c[i] as f64 - e).abs() < 1.0 + 1e-9;
            if c[i] as f64 > e.floor() {
                ceil_hits[i] += 1.0;
            }
        }
    }
    let mut chi_s = 0.0;
    let mut df = 0.0;
    for i in 0..k {
        let f = (n as f64 * w[i]).fract();
        if f > 1e-6 && f < 1.0 - 1e-6 {
            chi_s += (ceil_hits[i] - reps as f64 * f).powi(2) / (reps as f64 * f * (1.0 - f));
            df += 1.0;
        }
    }
    let crit_s = ChiSquared::new(df).unwrap().inverse_cdf(1.0 - alpha);
    outcome(
        chi_m <= crit_m && chi_s <= crit_s && bounded,
        format!("multinomial chi2 {chi_m:.1} <= {crit_m:.1}; systematic chi2 {chi_s:.1} <= {crit_s:.1}, counts within one: {bounded}"),
    )
}

const REPRO: &str = r#"
schema_version = 1
experiment = "wiener"
runs = 3
base_seed = 77
write_summaries = true

[simulator]
steps = 60

[[filters]]
kind = "kalman"

[[filters]]
kind = "bpf"
particles = 300

[[filters]]
kind = "apf"
rule = "beta"
beta = 0.1
particles = 300
ess_threshold = 0.5
resampling = "systematic"

[selection]
grid = [0.01, 0.1, 0.5]
runs = 2
particles = 200
"#;

const REPRO_GP: &str = r#"
schema_version = 1
experiment = "gp"
runs = 2
base_seed = 78

[simulator]
steps = 40

[[filters]]
kind = "bpf"
rule = "beta"
beta = 0.2
particles = 300
smoother = "ffbs"
trajectories = 200
"#;

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    for workers in [1usize, 2, 8] {
        let dir = tmp.path().join(format!("w{workers}"));
        for (i, text) in [REPRO, REPRO_GP].iter().enumerate() {
            let mut cfg = ExperimentConfig::from_toml(text).unwrap();
            cfg.workers = Some(workers);
            cfg.write_summaries = true;
            let sub = dir.join(i.to_string());
            let res = run_experiment(&cfg).unwrap();
            write_experiment(&sub, &cfg, &res).unwrap();
            if cfg.selection.is_some() {
                let sel = run_selection(&cfg).unwrap();
                write_selection(&sub.join("selection"), &cfg, &sel).unwrap();
            }
        }
        let mut all = Vec::new();
        for sub in ["0", "0/selection", "1"] {
            all.extend(snapshot(&dir.join(sub)).into_iter().filter(|(_, b)| !b.is_empty()));
        }
        snapshots.push(all);
    }
    let files = snapshots[0].len();
    let same = snapshots.windows(2).all(|w| w[0] == w[1]);
    outcome(same && files >= 8, format!("{files} files byte-identical across 1, 2 and 8 workers: {same}"))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: &str, o: Outcome| {
        println!("[{}] criterion {id}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failures += 1;
        }
    };

    let start = Instant::now();
    let wiener = run_experiment(&config("wiener.toml")).unwrap();
    let secs = start.elapsed().as_secs_f64();
    report("1", criterion_1(&wiener, secs));
    report("2", criterion_2(&wiener));
    report("3", criterion_3(&wiener));

    let start = Instant::now();
    let tan = run_experiment(&config("tan.toml")).unwrap();
    report("4", criterion_4(&tan, start.elapsed().as_secs_f64()));

    report("5", criterion_5(&run_experiment(&config("asymmetric.toml")).unwrap()));

    let checks: Vec<(&str, fn() -> Outcome)> = vec![
        ("power integral vs quadrature", power_integrals),
        ("beta -> 0 weights", small_beta_weights),
        ("particle filter vs Kalman", pf_vs_kalman),
        ("N^-1/2 rate", convergence_rate),
        ("FFBS vs RTS", ffbs_vs_rts),
        ("Matern stationarity", matern_stationarity),
        ("resampler chi-square", resampler_chi_square),
        ("thread-count reproducibility", reproducibility),
    ];
    let mut sub_pass = 0;
    for (name, check) in &checks {
        let o = check();
        println!("    {} {name}: {}", if o.pass { "ok  " } else { "FAIL" }, o.detail);
        sub_pass += usize::from(o.pass);
    }
    report("6", outcome(sub_pass == checks.len(), format!("{sub_pass}/{} property checks", checks.len())));

    report("7", criterion_7(&run_experiment(&config("gp.toml")).unwrap()));

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
