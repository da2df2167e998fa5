//! WebAssembly bindings for the browser demo in `www/`.

use bandit_batch::analysis::weight_entropy;
use bandit_batch::bandit::{BatchSelection, FplState, PerturbationFamily, PerturbationSpec};
use bandit_batch::rng::{stream, Stream};
use rand::Rng;
use wasm_bindgen::prelude::*;

fn spec(family: &str, shape: f64, scale: f64) -> Result<PerturbationSpec, String> {
    let spec = match family {
        "frechet" => PerturbationSpec::frechet(shape, scale),
        "exponential" => PerturbationSpec::exponential(scale),
        other => return Err(format!("unknown family {other:?}")),
    };
    spec.map_err(|e| e.to_string())
}

/// Histogram of `log10` perturbation draws.
#[wasm_bindgen]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<f64>,
    median: f64,
    expected_median: f64,
}

#[wasm_bindgen]
impl Histogram {
    /// Bin edges in `log10` units; one more than the number of bins.
    #[wasm_bindgen(getter)]
    pub fn edges(&self) -> Vec<f64> {
        self.edges.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn counts(&self) -> Vec<f64> {
        self.counts.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn median(&self) -> f64 {
        self.median
    }

    /// Closed-form median of the family.
    #[wasm_bindgen(getter, js_name = expectedMedian)]
    pub fn expected_median(&self) -> f64 {
        self.expected_median
    }
}

/// Draws `draws` perturbations and bins them on a log scale between the
/// 1st and 99th percentiles.
#[wasm_bindgen(js_name = perturbationHistogram)]
pub fn perturbation_histogram(
    family: &str,
    shape: f64,
    scale: f64,
    draws: u32,
    bins: u32,
    seed: u64,
) -> Result<Histogram, String> {
    let spec = spec(family, shape, scale)?;
    if draws < 2 || bins == 0 {
        return Err("need at least 2 draws and 1 bin".into());
    }
    let mut rng = stream(seed, Stream::Sampler);
    let mut xs = bandit_batch::bandit::sample_perturbation(&spec, draws as usize, &mut rng);
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let median = if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    };
    let lo = xs[n / 100].log10();
    let hi = xs[(n * 99 / 100).min(n - 1)].log10().max(lo + 1e-9);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins as usize];
    for x in &xs {
        let b = ((x.log10() - lo) / width).floor();
        if (0.0..bins as f64).contains(&b) {
            counts[b as usize] += 1.0;
        }
    }
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let expected_median = spec.from_uniform(0.5);
    Ok(Histogram {
        edges,
        counts,
        median,
        expected_median,
    })
}

/// Mean of the capped geometric re-sampling count for one arm among `arms`
/// equally weighted arms (inclusion probability `1 / arms`), next to the
/// closed form `(1 - (1 - p)^cap) / p`. Returns `[empirical, closed_form]`.
#[wasm_bindgen(js_name = resamplingMean)]
pub fn resampling_mean(arms: u32, cap: u32, trials: u32, seed: u64) -> Result<Vec<f64>, String> {
    if arms < 1 || trials == 0 {
        return Err("need at least 1 arm and 1 trial".into());
    }
    let spec = PerturbationSpec::exponential(1.0).map_err(|e| e.to_string())?;
    let state = FplState::new(arms as usize, 1, 1.0, spec, cap).map_err(|e| e.to_string())?;
    let selection = BatchSelection::new(vec![0], arms as usize).map_err(|e| e.to_string())?;
    let mut rng = stream(seed, Stream::Resample);
    let total: f64 = (0..trials)
        .map(|_| f64::from(state.geometric_resample(&selection, &mut rng)[0]))
        .sum();
    let p = 1.0 / f64::from(arms);
    let closed = (1.0 - (1.0 - p).powi(cap as i32)) / p;
    Ok(vec![total / f64::from(trials), closed])
}

/// Outcome of a toy FPL run.
#[wasm_bindgen]
pub struct Simulation {
    counts: Vec<f64>,
    entropy: Vec<f64>,
}

#[wasm_bindgen]
impl Simulation {
    /// Times each arm was selected.
    #[wasm_bindgen(getter)]
    pub fn counts(&self) -> Vec<f64> {
        self.counts.clone()
    }

    /// Entropy of the normalized weights after each round.
    #[wasm_bindgen(getter)]
    pub fn entropy(&self) -> Vec<f64> {
        self.entropy.clone()
    }
}

/// Runs FPL with geometric re-sampling for `rounds` rounds on `arms` arms.
/// Arm `i` pays a Bernoulli reward with mean `0.1 + 0.8 * i / (arms - 1)`.
#[wasm_bindgen(js_name = simulateFpl)]
#[allow(clippy::too_many_arguments)]
pub fn simulate_fpl(
    arms: u32,
    batch: u32,
    rounds: u32,
    eta: f64,
    family: &str,
    shape: f64,
    scale: f64,
    seed: u64,
) -> Result<Simulation, String> {
    let spec = spec(family, shape, scale)?;
    let d = arms as usize;
    let mut state = FplState::new(d, batch as usize, eta, spec, 1000).map_err(|e| e.to_string())?;
    let mut rng = stream(seed, Stream::Sampler);
    let mut resample = stream(seed, Stream::Resample);
    let mut reward_rng = stream(seed, Stream::Data);
    let means: Vec<f64> = (0..d)
        .map(|i| 0.1 + 0.8 * i as f64 / (d.max(2) - 1) as f64)
        .collect();
    let mut counts = vec![0.0; d];
    let mut entropy = Vec::with_capacity(rounds as usize);
    for _ in 0..rounds {
        let selection = state.draw_batch(&mut rng);
        let rewards: Vec<f64> = selection
            .indices()
            .iter()
            .map(|&i| f64::from(u8::from(reward_rng.random_bool(means[i]))))
            .collect();
        let sigmas = state.geometric_resample(&selection, &mut resample);
        state.update(&selection, &rewards, &sigmas).map_err(|e| e.to_string())?;
        for &i in selection.indices() {
            counts[i] += 1.0;
        }
        entropy.push(weight_entropy(state.weights()));
    }
    Ok(Simulation { counts, entropy })
}

/// Family names accepted by the other functions.
#[wasm_bindgen(js_name = perturbationFamilies)]
pub fn perturbation_families() -> Vec<String> {
    [PerturbationFamily::Frechet, PerturbationFamily::Exponential]
        .iter()
        .map(|f| match f {
            PerturbationFamily::Frechet => "frechet".to_string(),
            PerturbationFamily::Exponential => "exponential".to_string(),
        })
        .collect()
}
