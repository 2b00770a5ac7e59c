use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResamplingScheme {
    /// i.i.d. categorical draws.
    #[default]
    Multinomial,
    /// Single uniform offset with `N` evenly spaced points.
    Systematic,
}

/// Draw `count` ancestor indices from normalised `weights`.
pub fn resample<R: Rng + ?Sized>(
    weights: &[f64],
    count: usize,
    scheme: ResamplingScheme,
    rng: &mut R,
) -> Vec<usize> {
    let cdf = cumulative(weights);
    let last = weights.len() - 1;
    match scheme {
        ResamplingScheme::Multinomial => (0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * cdf[last];
                cdf.partition_point(|&c| c <= u).min(last)
            })
            .collect(),
        ResamplingScheme::Systematic => {
            let step = cdf[last] / count as f64;
            let u0: f64 = rng.random::<f64>() * step;
            let mut out = Vec::with_capacity(count);
            let mut j = 0;
            for k in 0..count {
                let u = u0 + k as f64 * step;
                while j < last && cdf[j] <= u {
                    j += 1;
                }
                out.push(j);
            }
            out
        }
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}
