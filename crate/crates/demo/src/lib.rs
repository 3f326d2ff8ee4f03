//! Browser bindings for three interactive views: a cRFF density fit, an
//! actor-critic learning curve and the elliptical bonus over a feature plane.
//!
//! Each view is a plain Rust function returning owned vectors; the
//! `wasm_bindgen` wrappers only move them across the boundary.

use optac_core::crff::{
    draw_samples, empirical_char_fn, sample_frequencies, truncated_fourier_sum, BumpDensity, DensityOracle,
    TruncatedGaussian,
};
use optac_core::envgen::{gen_lowrank, gen_model_class};
use optac_core::optac::{run_optac, BonusState, Environment, OptAcConfig};
use optac_core::rng::seeded;
use rand::Rng;
use rand_distr::StandardNormal;
use wasm_bindgen::prelude::*;

fn rotate(x: f64, y: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (c * x - s * y, s * x + c * y)
}

const DEMO_STREAM: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Density1d {
    pub xs: Vec<f64>,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub max_err: f64,
}

/// True and estimated density of a 1-D bump (`sd <= 0`) or truncated Gaussian
/// on `points` equispaced locations of `[0, 1]`.
pub fn density_curve(
    sd: f64,
    radius: f64,
    d: usize,
    n: usize,
    seed: u64,
    points: usize,
) -> Result<Density1d, String> {
    if points < 2 {
        return Err("need at least two points".into());
    }
    let xs: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let fit = |density: &dyn DensityOracle, samples: Vec<f64>| -> Result<(Vec<f64>, Vec<f64>), String> {
        let bank = sample_frequencies(radius, d, 1, seed).map_err(|e| e.to_string())?;
        let g = empirical_char_fn(&samples, &bank).map_err(|e| e.to_string())?;
        let truth = xs.iter().map(|x| density.pdf(&[*x])).collect();
        let est = xs.iter().map(|x| truncated_fourier_sum(&g, &bank, &[*x])).collect();
        Ok((truth, est))
    };
    let (truth, estimate) = if sd > 0.0 {
        let density = TruncatedGaussian::new(1, 0.5, sd).map_err(|e| e.to_string())?;
        fit(&density, draw_samples(&density, n, seed))?
    } else {
        let density = BumpDensity::new(1).map_err(|e| e.to_string())?;
        fit(&density, draw_samples(&density, n, seed))?
    };
    let max_err = truth.iter().zip(&estimate).map(|(t, e): (&f64, &f64)| (t - e).abs()).fold(0.0, f64::max);
    Ok(Density1d {
        xs,
        truth,
        estimate,
        max_err,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub gap: Vec<f64>,
    pub mixture_gap: Vec<f64>,
    pub bonus_value: Vec<f64>,
    pub v_star: f64,
    pub alpha: f64,
    pub eta: f64,
}

/// Actor-critic on the 20-state, 4-action, horizon-5, rank-3 fixture with a
/// 32-model class. `alpha` and `eta` fall back to the defaults when absent.
pub fn learning_curve(iterations: usize, alpha: Option<f64>, eta: Option<f64>, seed: u64) -> Result<LearningCurve, String> {
    let env = gen_lowrank(7, 20, 4, 5, 3).map_err(|e| e.to_string())?;
    let class = gen_model_class(&env, 32, 11).map_err(|e| e.to_string())?;
    let config = OptAcConfig {
        iterations,
        alpha,
        eta,
        seed,
        track_good_event: false,
        ..OptAcConfig::default()
    };
    let out = run_optac(&Environment::from(&env), &class, &config).map_err(|e| e.to_string())?;
    let records = &out.metrics.records;
    Ok(LearningCurve {
        gap: records.iter().map(|r| r.gap).collect(),
        mixture_gap: records.iter().map(|r| r.mixture_gap).collect(),
        bonus_value: records.iter().map(|r| r.bonus_value).collect(),
        v_star: out.summary.v_star,
        alpha: out.summary.hyper.alpha,
        eta: out.summary.hyper.eta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BonusField {
    /// Row-major `size x size` grid over `[-1, 1]^2`, first row at `y = -1`.
    pub values: Vec<f64>,
    /// Interleaved `x, y` of the collected features.
    pub samples: Vec<f64>,
    pub size: usize,
}

/// Raw bonus `min(alpha |phi|_{Lambda^{-1}}, 1)` after `n` features drawn from
/// a Gaussian stretched by `spread` along `angle` and shrunk across it.
pub fn bonus_field(n: usize, angle: f64, spread: f64, alpha: f64, lambda: f64, size: usize, seed: u64) -> Result<BonusField, String> {
    if size < 2 {
        return Err("grid needs at least two points per side".into());
    }
    let mut rng = seeded(seed, DEMO_STREAM);
    let mut samples = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let u: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        let (x, y) = rotate(spread * u, 0.1 * spread * v, angle);
        samples.extend([x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0)]);
    }
    let state = BonusState::new(1, 2, alpha, lambda).map_err(|e| e.to_string())?;
    let state = state.gram_update([samples.chunks(2)]).map_err(|e| e.to_string())?;
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (size - 1) as f64;
    let values = (0..size * size)
        .map(|k| {
            let phi = [coord(k % size), coord(k / size)];
            (alpha * state.elliptical_norm(0, &phi)).min(1.0)
        })
        .collect();
    Ok(BonusField { values, samples, size })
}

#[wasm_bindgen]
pub struct DensityView(Density1d);

#[wasm_bindgen]
impl DensityView {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.0.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.0.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn estimate(&self) -> Vec<f64> {
        self.0.estimate.clone()
    }

    #[wasm_bindgen(getter, js_name = maxErr)]
    pub fn max_err(&self) -> f64 {
        self.0.max_err
    }
}

#[wasm_bindgen(js_name = densityCurve)]
pub fn density_curve_js(sd: f64, radius: f64, d: usize, n: usize, seed: u32, points: usize) -> Result<DensityView, JsError> {
    density_curve(sd, radius, d, n, seed.into(), points).map(DensityView).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct CurveView(LearningCurve);

#[wasm_bindgen]
impl CurveView {
    #[wasm_bindgen(getter)]
    pub fn gap(&self) -> Vec<f64> {
        self.0.gap.clone()
    }

    #[wasm_bindgen(getter, js_name = mixtureGap)]
    pub fn mixture_gap(&self) -> Vec<f64> {
        self.0.mixture_gap.clone()
    }

    #[wasm_bindgen(getter, js_name = bonusValue)]
    pub fn bonus_value(&self) -> Vec<f64> {
        self.0.bonus_value.clone()
    }

    #[wasm_bindgen(getter, js_name = vStar)]
    pub fn v_star(&self) -> f64 {
        self.0.v_star
    }

    #[wasm_bindgen(getter)]
    pub fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[wasm_bindgen(getter)]
    pub fn eta(&self) -> f64 {
        self.0.eta
    }
}

#[wasm_bindgen(js_name = learningCurve)]
pub fn learning_curve_js(iterations: usize, alpha: Option<f64>, eta: Option<f64>, seed: u32) -> Result<CurveView, JsError> {
    learning_curve(iterations, alpha, eta, seed.into()).map(CurveView).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct FieldView(BonusField);

#[wasm_bindgen]
impl FieldView {
    #[wasm_bindgen(getter)]
    pub fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn samples(&self) -> Vec<f64> {
        self.0.samples.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.0.size
    }
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = bonusField)]
pub fn bonus_field_js(n: usize, angle: f64, spread: f64, alpha: f64, lambda: f64, size: usize, seed: u32) -> Result<FieldView, JsError> {
    bonus_field(n, angle, spread, alpha, lambda, size, seed.into()).map(FieldView).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_fit_tracks_the_density() {
        let c = density_curve(0.0, 8.0, 512, 20_000, 1, 101).unwrap();
        assert_eq!(c.xs.len(), 101);
        assert_eq!(c.truth[0], 0.0);
        let sup = c.truth.iter().copied().fold(0.0, f64::max);
        assert!(c.max_err < 0.3 * sup, "{} vs {sup}", c.max_err);
    }

    #[test]
    fn gaussian_fit_and_bad_grid() {
        let c = density_curve(0.1, 8.0, 256, 5000, 2, 11).unwrap();
        assert!(c.truth[5] > c.truth[0]);
        assert!(density_curve(0.1, 8.0, 16, 100, 2, 1).is_err());
        assert!(density_curve(0.0, -1.0, 16, 100, 2, 5).is_err());
    }

    #[test]
    fn short_learning_curve() {
        let c = learning_curve(30, Some(0.1), Some(0.5), 0).unwrap();
        assert_eq!(c.gap.len(), 31);
        assert_eq!(c.alpha, 0.1);
        assert!(c.mixture_gap.iter().all(|g| *g >= -1e-9 && *g <= c.v_star + 1e-9));
        assert!(learning_curve(0, None, None, 0).is_err());
    }

    #[test]
    fn bonus_is_small_along_the_data() {
        let f = bonus_field(400, 0.0, 0.5, 1.0, 0.5, 21, 3).unwrap();
        assert_eq!(f.values.len(), 21 * 21);
        assert_eq!(f.samples.len(), 800);
        // along the x axis the data is dense, across it nearly absent
        let at = |i: usize, j: usize| f.values[j * 21 + i];
        assert!(at(20, 10) < at(10, 20));
        assert_eq!(at(10, 10), 0.0);
        assert!(f.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
