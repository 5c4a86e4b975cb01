//! Multinomial logit choice model trained by full-batch gradient descent.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{feature_names, featurize, FeatureVector};
use super::{ChoiceDistribution, ChoiceLearner, ChoiceModel};
use crate::district::{District, SchoolId, Student, StudentId};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-school linear scores over z-scored features, turned into a
/// distribution by softmax. `weights[s]` holds one coefficient per feature
/// followed by the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

impl LogitModel {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// SHA-256 of the JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        format!("logit/v{}:{}", self.format_version, hex::encode(Sha256::digest(json)))
    }

    fn validate(&self) -> Result<()> {
        let d = self.n_features();
        if self.mean.len() != d || self.scale.len() != d {
            return Err(Error::Domain("normalization statistics do not match the feature list".into()));
        }
        if self.weights.iter().any(|w| w.len() != d + 1) {
            return Err(Error::Domain("weight rows must hold one entry per feature plus an intercept".into()));
        }
        if self.weights.iter().flatten().chain(&self.mean).chain(&self.scale).any(|v| !v.is_finite())
            || self.scale.iter().any(|s| *s <= 0.0)
        {
            return Err(Error::Domain("model holds non-finite weights or non-positive scales".into()));
        }
        Ok(())
    }
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    scores.iter_mut().for_each(|s| *s /= sum);
}

/// Softmax of per-school linear scores over normalized features.
pub fn logit_predict(model: &LogitModel, x: &FeatureVector) -> Result<ChoiceDistribution> {
    if x.len() != model.n_features() {
        return Err(Error::Domain(format!(
            "feature vector has {} entries, model expects {}",
            x.len(),
            model.n_features()
        )));
    }
    let z: Vec<f64> = x
        .values
        .iter()
        .zip(&model.mean)
        .zip(&model.scale)
        .map(|((v, m), s)| (v - m) / s)
        .collect();
    let mut scores: Vec<f64> = model
        .weights
        .iter()
        .map(|w| w[..z.len()].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + w[z.len()])
        .collect();
    softmax_in_place(&mut scores);
    ChoiceDistribution::new(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogitConfig {
    /// Initial step size; adapted up on accepted steps and halved on rejected ones.
    pub learning_rate: f64,
    /// Maximum number of accepted steps.
    pub epochs: usize,
    /// L2 penalty on the non-intercept weights (per-example loss scale).
    pub l2: f64,
    /// Maximum number of loss evaluations, accepted or not.
    pub max_iter: usize,
    /// Stop when an accepted step improves the loss by less than this (relative).
    pub tolerance: f64,
}

impl Default for LogitConfig {
    fn default() -> Self {
        LogitConfig {
            learning_rate: 1.0,
            epochs: 2000,
            l2: 1e-4,
            max_iter: 2000,
            tolerance: 1e-10,
        }
    }
}

/// Training examples with labels in `0..n_classes`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub features: Vec<FeatureVector>,
    pub labels: Vec<SchoolId>,
    pub n_classes: usize,
}

impl Dataset {
    /// Examples for the given students, featurized at their status-quo zoned
    /// school and labelled with their actual school.
    pub fn from_students(district: &District, students: &[StudentId]) -> Self {
        let (features, labels) = students
            .iter()
            .map(|&id| {
                let st = district.student(id);
                (featurize(st, district.status_quo_school_of(st), district), st.actual_school)
            })
            .unzip();
        Dataset {
            feature_names: feature_names(district),
            features,
            labels,
            n_classes: district.n_schools(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Mean multinomial log-loss plus `l2/2 · ‖W‖²` (intercepts unpenalized),
/// over features already normalized. Parameters are a row-major
/// `n_classes × (n_features + 1)` matrix with the intercept last.
#[derive(Debug, Clone)]
pub struct LogitObjective {
    x: Array2<f64>,
    y: Vec<usize>,
    n_classes: usize,
    l2: f64,
}

impl LogitObjective {
    /// `rows` are normalized feature rows; an intercept column is appended.
    pub fn new(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, l2: f64) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(Error::Training("need a non-empty dataset with one label per row".into()));
        }
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Training("feature rows differ in length".into()));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Training(format!("label {y} out of range for {n_classes} classes")));
        }
        let mut x = Array2::<f64>::ones((rows.len(), d + 1));
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                x[[i, j]] = *v;
            }
        }
        Ok(LogitObjective {
            x,
            y: labels.to_vec(),
            n_classes,
            l2,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_classes * self.x.ncols()
    }

    fn view<'a>(&self, w: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.n_classes, self.x.ncols()), w).expect("parameter length")
    }

    fn penalty(&self, w: &ArrayView2<'_, f64>) -> f64 {
        let d = self.x.ncols() - 1;
        0.5 * self.l2 * w.rows().into_iter().map(|r| r.iter().take(d).map(|v| v * v).sum::<f64>()).sum::<f64>()
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        let wv = self.view(w);
        let scores = self.x.dot(&wv.t());
        let mut total = 0.0;
        for (row, &y) in scores.axis_iter(Axis(0)).zip(&self.y) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        total / self.y.len() as f64 + self.penalty(&wv)
    }

    pub fn loss_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let wv = self.view(w);
        let mut probs = self.x.dot(&wv.t());
        let mut total = 0.0;
        for (mut row, &y) in probs.axis_iter_mut(Axis(0)).zip(&self.y) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|s| (s - max).exp()).sum();
            total += max + sum.ln() - row[y];
            row.mapv_inplace(|s| (s - max).exp() / sum);
            row[y] -= 1.0;
        }
        let n = self.y.len() as f64;
        let mut grad = probs.t().dot(&self.x) / n;
        let d = self.x.ncols() - 1;
        for (mut g, wr) in grad.rows_mut().into_iter().zip(wv.rows()) {
            for j in 0..d {
                g[j] += self.l2 * wr[j];
            }
        }
        (total / n + self.penalty(&wv), grad.into_raw_vec_and_offset().0)
    }
}

/// A trained model together with its optimization trace.
#[derive(Debug, Clone)]
pub struct LogitFit {
    pub model: LogitModel,
    /// Loss at the start and after every accepted step.
    pub losses: Vec<f64>,
    pub iterations: usize,
}

fn normalization(features: &[FeatureVector]) -> (Vec<f64>, Vec<f64>) {
    let d = features[0].len();
    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(&f.values) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for f in features {
        for ((s, v), m) in var.iter_mut().zip(&f.values).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Fits a logit model with z-score normalization frozen from `dataset`.
/// Steps that would raise the loss are rejected, so the recorded losses are
/// non-increasing.
pub fn logit_train(dataset: &Dataset, config: &LogitConfig) -> Result<LogitFit> {
    if dataset.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let d = dataset.feature_names.len();
    if dataset.features.iter().any(|f| f.len() != d) {
        return Err(Error::Training("feature vectors do not match the feature list".into()));
    }
    let (mean, scale) = normalization(&dataset.features);
    let rows: Vec<Vec<f64>> = dataset
        .features
        .iter()
        .map(|f| f.values.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let labels: Vec<usize> = dataset.labels.iter().map(|s| s.index()).collect();
    let objective = LogitObjective::new(&rows, &labels, dataset.n_classes, config.l2)?;

    let mut w = vec![0.0; objective.n_params()];
    let (mut loss, mut grad) = objective.loss_and_gradient(&w);
    if !loss.is_finite() {
        return Err(Error::Training(format!("initial loss is {loss}")));
    }
    let mut losses = vec![loss];
    let mut lr = config.learning_rate;
    let mut iterations = 0;
    let mut accepted = 0;
    while iterations < config.max_iter && accepted < config.epochs {
        iterations += 1;
        let trial: Vec<f64> = w.iter().zip(&grad).map(|(a, g)| a - lr * g).collect();
        let (trial_loss, trial_grad) = objective.loss_and_gradient(&trial);
        if !trial_loss.is_finite() {
            return Err(Error::Training(format!(
                "loss became {trial_loss} at iteration {iterations} (step {lr:e}, last finite loss {loss})"
            )));
        }
        if trial_loss <= loss {
            let improvement = loss - trial_loss;
            w = trial;
            grad = trial_grad;
            loss = trial_loss;
            losses.push(loss);
            accepted += 1;
            lr *= 1.1;
            if improvement <= config.tolerance * loss.abs().max(1.0) {
                break;
            }
        } else {
            lr *= 0.5;
            if lr < 1e-14 {
                break;
            }
        }
    }

    let width = d + 1;
    let weights = w.chunks(width).map(<[f64]>::to_vec).collect();
    let model = LogitModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: dataset.feature_names.clone(),
        mean,
        scale,
        weights,
    };
    model.validate()?;
    Ok(LogitFit {
        model,
        losses,
        iterations,
    })
}

/// Trained logit model used as a choice model on a district.
#[derive(Debug, Clone)]
pub struct LogitChoiceModel {
    model: LogitModel,
    fingerprint: String,
}

impl LogitChoiceModel {
    pub fn new(model: LogitModel) -> Result<Self> {
        model.validate()?;
        let fingerprint = model.fingerprint();
        Ok(LogitChoiceModel { model, fingerprint })
    }

    pub fn model(&self) -> &LogitModel {
        &self.model
    }
}

impl ChoiceModel for LogitChoiceModel {
    fn name(&self) -> &str {
        "logit"
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn distribution(&self, district: &District, student: &Student, zoned: SchoolId) -> Result<ChoiceDistribution> {
        if self.model.n_classes() != district.n_schools() {
            return Err(Error::Domain(format!(
                "model covers {} schools, district has {}",
                self.model.n_classes(),
                district.n_schools()
            )));
        }
        logit_predict(&self.model, &featurize(student, zoned, district))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LogitLearner {
    pub config: LogitConfig,
}

impl ChoiceLearner for LogitLearner {
    fn name(&self) -> &str {
        "logit"
    }

    fn fit(&self, district: &District, train: &[StudentId]) -> Result<Box<dyn ChoiceModel>> {
        let data = Dataset::from_students(district, train);
        let fit = logit_train(&data, &self.config)?;
        Ok(Box::new(LogitChoiceModel::new(fit.model)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_with(weights: Vec<Vec<f64>>, d: usize) -> LogitModel {
        LogitModel {
            format_version: MODEL_FORMAT_VERSION,
            feature_names: (0..d).map(|j| format!("f{j}")).collect(),
            mean: vec![0.0; d],
            scale: vec![1.0; d],
            weights,
        }
    }

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            static_len: values.len(),
            values,
        }
    }

    #[test]
    fn zero_weights_give_uniform() {
        let m = model_with(vec![vec![0.0; 3]; 4], 2);
        let p = logit_predict(&m, &fv(vec![3.0, -1.0])).unwrap();
        assert!(p.probs().iter().all(|&q| (q - 0.25).abs() < 1e-15));
    }

    #[test]
    fn closed_form_two_school_softmax() {
        let m = model_with(vec![vec![0.0, 0.0], vec![0.0, 3f64.ln()]], 1);
        let p = logit_predict(&m, &fv(vec![0.7])).unwrap();
        assert!((p.probs()[0] - 0.25).abs() < 1e-15);
        assert!((p.probs()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn shift_invariance() {
        let base = vec![vec![0.3, -1.0, 0.2], vec![1.5, 0.4, -0.3], vec![-0.2, 0.1, 0.9]];
        let shifted = base.iter().map(|r| {
            let mut r = r.clone();
            r[2] += 5.0;
            r
        }).collect();
        let x = fv(vec![0.5, -2.0]);
        let a = logit_predict(&model_with(base, 2), &x).unwrap();
        let b = logit_predict(&model_with(shifted, 2), &x).unwrap();
        for (p, q) in a.probs().iter().zip(b.probs()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_a_domain_error() {
        let m = model_with(vec![vec![0.0; 3]; 2], 2);
        assert!(matches!(logit_predict(&m, &fv(vec![1.0])), Err(Error::Domain(_))));
    }

    fn toy_dataset() -> Dataset {
        // three well-separated clusters in the plane
        let centers = [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)];
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for k in 0..20 {
                let dx = ((k * 7) % 5) as f64 * 0.1 - 0.2;
                let dy = ((k * 3) % 5) as f64 * 0.1 - 0.2;
                features.push(fv(vec![cx + dx, cy + dy]));
                labels.push(SchoolId(c as u16));
            }
        }
        Dataset {
            feature_names: vec!["x".into(), "y".into()],
            features,
            labels,
            n_classes: 3,
        }
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let data = toy_dataset();
        let fit = logit_train(&data, &LogitConfig::default()).unwrap();
        let correct = data
            .features
            .iter()
            .zip(&data.labels)
            .filter(|(x, y)| logit_predict(&fit.model, x).unwrap().argmax() == **y)
            .count();
        assert!(correct as f64 / data.len() as f64 >= 0.99);
        assert!(fit.losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn heavy_regularization_flattens_predictions() {
        let data = toy_dataset();
        let cfg = LogitConfig {
            l2: 1e6,
            ..LogitConfig::default()
        };
        let fit = logit_train(&data, &cfg).unwrap();
        let max_w = fit
            .model
            .weights
            .iter()
            .flat_map(|r| r[..2].iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_w < 1e-5, "weights {max_w}");
        let p = logit_predict(&fit.model, &data.features[0]).unwrap();
        assert!(p.probs().iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-4));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let rows = vec![
            vec![0.5, -1.2, 0.3],
            vec![-0.7, 0.4, 1.1],
            vec![1.3, 0.2, -0.5],
            vec![-0.1, -0.9, 0.8],
            vec![0.9, 1.4, -1.0],
        ];
        let labels = [0, 2, 1, 1, 0];
        let obj = LogitObjective::new(&rows, &labels, 3, 0.1).unwrap();
        let w: Vec<f64> = (0..obj.n_params()).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.13).collect();
        let (_, grad) = obj.loss_and_gradient(&w);
        let h = 1e-5;
        for k in 0..w.len() {
            let mut up = w.clone();
            let mut down = w.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (obj.loss(&up) - obj.loss(&down)) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {k}: analytic {} vs fd {fd}", grad[k]);
        }
    }

    #[test]
    fn model_json_round_trip_preserves_fingerprint() {
        let m = model_with(vec![vec![0.1, 0.2, 0.3]; 2], 2);
        let json = serde_json::to_string(&m).unwrap();
        let back: LogitModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.fingerprint(), m.fingerprint());
    }
}
