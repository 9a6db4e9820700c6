//! Linear detection heads over pooled proposal features.
//!
//! Three head families share the pyramid features of a proposal:
//! an activity classifier (softmax over K classes plus background, reading
//! the course-stage feature), K per-class completeness classifiers
//! (logistic units over the global feature), and K per-class location
//! regressors (2 outputs over the global feature: relative center shift and
//! log-span change). The per-class detection score is the product of the
//! activity probability and the class-conditional completeness probability.

use crate::error::{Result, SsnError};
use crate::intervals::TemporalInterval;
use crate::stpp::{PyramidConfig, StageFeatures};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow; equals `-ln(sigmoid(-x))`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable softmax (max subtraction).
fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

/// Elementwise smooth L1: `0.5 x^2` for `|x| < 1`, else `|x| - 0.5`.
pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Sum of smooth L1 over the (center, log-span) pair.
pub fn regression_loss(predicted: (f64, f64), target: (f64, f64)) -> f64 {
    smooth_l1(predicted.0 - target.0) + smooth_l1(predicted.1 - target.1)
}

/// Relative-center and log-span regression targets for refining proposal
/// `p` toward ground truth `g`.
pub fn regression_targets(p: &TemporalInterval, g: &TemporalInterval) -> (f64, f64) {
    let t_center = (g.center() - p.center()) / p.duration();
    let t_span = (g.duration() / p.duration()).ln();
    (t_center, t_span)
}

/// Inverse of [`regression_targets`]: shift the center by
/// `t_center * duration` and scale the span by `exp(t_span)`.
pub fn apply_regression(p: &TemporalInterval, t: (f64, f64)) -> Result<TemporalInterval> {
    let center = p.center() + t.0 * p.duration();
    let half = 0.5 * p.duration() * t.1.exp();
    TemporalInterval::new(center - half, center + half)
}

/// How a training proposal relates to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    /// High-IoU match: labeled with the instance class, complete (b = 1),
    /// and carrying regression targets.
    Positive,
    /// No ground-truth overlap: background class 0.
    Background,
    /// A fragment mostly inside an instance: instance class, incomplete
    /// (b = 0).
    Incomplete,
}

/// A labeled training proposal with its pooled features.
#[derive(Debug, Clone)]
pub struct ProposalSample {
    pub features: StageFeatures,
    pub kind: SampleKind,
    /// Class label: 0 for background, 1..=K otherwise.
    pub class: usize,
    /// Present exactly for positive samples.
    pub reg_targets: Option<(f64, f64)>,
}

impl ProposalSample {
    pub fn positive(features: StageFeatures, class: usize, targets: (f64, f64)) -> Result<Self> {
        if class == 0 {
            return Err(SsnError::InvalidConfig(
                "positive samples need a class label >= 1".into(),
            ));
        }
        Ok(Self {
            features,
            kind: SampleKind::Positive,
            class,
            reg_targets: Some(targets),
        })
    }

    pub fn background(features: StageFeatures) -> Self {
        Self {
            features,
            kind: SampleKind::Background,
            class: 0,
            reg_targets: None,
        }
    }

    pub fn incomplete(features: StageFeatures, class: usize) -> Result<Self> {
        if class == 0 {
            return Err(SsnError::InvalidConfig(
                "incomplete samples need a class label >= 1".into(),
            ));
        }
        Ok(Self {
            features,
            kind: SampleKind::Incomplete,
            class,
            reg_targets: None,
        })
    }

    /// Completeness bit; `None` for background samples, whose loss has no
    /// completeness term.
    pub fn completeness_bit(&self) -> Option<bool> {
        match self.kind {
            SampleKind::Positive => Some(true),
            SampleKind::Incomplete => Some(false),
            SampleKind::Background => None,
        }
    }
}

/// Loss decomposition of one sample under the multi-task objective.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub activity: f64,
    /// `None` for background samples.
    pub completeness: Option<f64>,
    /// `None` unless positive; unweighted (multiply by lambda).
    pub regression: Option<f64>,
}

impl LossTerms {
    pub fn total(&self, lambda: f64) -> f64 {
        self.activity
            + self.completeness.unwrap_or(0.0)
            + lambda * self.regression.unwrap_or(0.0)
    }
}

/// Weights of all detection heads plus the layout they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    num_classes: usize,
    snippet_dim: usize,
    pyramid: PyramidConfig,
    pub lambda: f64,
    /// (K+1) x dim_fc, row-major; row 0 scores the background class.
    pub w_act: Vec<f64>,
    pub b_act: Vec<f64>,
    /// K x dim_global, row-major; row k-1 belongs to class k.
    pub w_comp: Vec<f64>,
    pub b_comp: Vec<f64>,
    /// K x 2 x dim_global, row-major; per class the center row then the
    /// log-span row.
    pub w_reg: Vec<f64>,
    pub b_reg: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(
        num_classes: usize,
        snippet_dim: usize,
        pyramid: PyramidConfig,
        lambda: f64,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(SsnError::InvalidConfig("need at least one class".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(SsnError::InvalidConfig(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if snippet_dim == 0 {
            return Err(SsnError::InvalidConfig("snippet dimension must be positive".into()));
        }
        let dim_fc = pyramid.course_dim(snippet_dim);
        let dim_g = pyramid.global_dim(snippet_dim);
        let k = num_classes;
        Ok(Self {
            num_classes: k,
            snippet_dim,
            pyramid,
            lambda,
            w_act: vec![0.0; (k + 1) * dim_fc],
            b_act: vec![0.0; k + 1],
            w_comp: vec![0.0; k * dim_g],
            b_comp: vec![0.0; k],
            w_reg: vec![0.0; k * 2 * dim_g],
            b_reg: vec![0.0; 2 * k],
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn snippet_dim(&self) -> usize {
        self.snippet_dim
    }

    pub fn pyramid(&self) -> &PyramidConfig {
        &self.pyramid
    }

    pub fn dim_fc(&self) -> usize {
        self.pyramid.course_dim(self.snippet_dim)
    }

    pub fn dim_global(&self) -> usize {
        self.pyramid.global_dim(self.snippet_dim)
    }

    pub fn act_row(&self, j: usize) -> &[f64] {
        let d = self.dim_fc();
        &self.w_act[j * d..(j + 1) * d]
    }

    /// Completeness weight row for class `k` (1-based).
    pub fn comp_row(&self, k: usize) -> &[f64] {
        let d = self.dim_global();
        &self.w_comp[(k - 1) * d..k * d]
    }

    /// Regression weight row for class `k` (1-based); `m` is 0 for the
    /// center output, 1 for the log-span output.
    pub fn reg_row(&self, k: usize, m: usize) -> &[f64] {
        let d = self.dim_global();
        let base = ((k - 1) * 2 + m) * d;
        &self.w_reg[base..base + d]
    }

    fn check_fc(&self, f_c: &[f64]) -> Result<()> {
        if f_c.len() != self.dim_fc() {
            return Err(SsnError::DimensionMismatch {
                what: "course feature".into(),
                expected: self.dim_fc(),
                got: f_c.len(),
            });
        }
        Ok(())
    }

    fn check_global(&self, global: &[f64], k: usize) -> Result<()> {
        if k == 0 || k > self.num_classes {
            return Err(SsnError::InvalidConfig(format!(
                "class index {k} out of range 1..={}",
                self.num_classes
            )));
        }
        if global.len() != self.dim_global() {
            return Err(SsnError::DimensionMismatch {
                what: "global feature".into(),
                expected: self.dim_global(),
                got: global.len(),
            });
        }
        Ok(())
    }

    pub fn activity_logits(&self, f_c: &[f64]) -> Result<Vec<f64>> {
        self.check_fc(f_c)?;
        Ok((0..=self.num_classes)
            .map(|j| dot(self.act_row(j), f_c) + self.b_act[j])
            .collect())
    }

    /// Softmax activity distribution over background (index 0) and the K
    /// classes (indices 1..=K).
    pub fn activity_forward(&self, f_c: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.activity_logits(f_c)?))
    }

    pub fn completeness_logit(&self, global: &[f64], k: usize) -> Result<f64> {
        self.check_global(global, k)?;
        Ok(dot(self.comp_row(k), global) + self.b_comp[k - 1])
    }

    /// Probability that the proposal is a complete instance of class `k`.
    pub fn completeness_forward(&self, global: &[f64], k: usize) -> Result<f64> {
        Ok(sigmoid(self.completeness_logit(global, k)?))
    }

    /// Predicted (center, log-span) offsets for class `k`.
    pub fn regression_output(&self, global: &[f64], k: usize) -> Result<(f64, f64)> {
        self.check_global(global, k)?;
        Ok((
            dot(self.reg_row(k, 0), global) + self.b_reg[(k - 1) * 2],
            dot(self.reg_row(k, 1), global) + self.b_reg[(k - 1) * 2 + 1],
        ))
    }

    /// Per-class joint scores `P(class k) * P(complete | k)`, indices 0..K
    /// mapping to classes 1..=K.
    pub fn joint_score(&self, features: &StageFeatures) -> Result<Vec<f64>> {
        let act = self.activity_forward(&features.f_c)?;
        let global = features.global();
        (1..=self.num_classes)
            .map(|k| Ok(act[k] * self.completeness_forward(&global, k)?))
            .collect()
    }

    /// Activity plus completeness terms and, for positives, the unweighted
    /// regression term.
    pub fn loss_terms(&self, sample: &ProposalSample) -> Result<LossTerms> {
        let logits = self.activity_logits(&sample.features.f_c)?;
        if sample.class >= logits.len() {
            return Err(SsnError::InvalidConfig(format!(
                "sample class {} out of range for K = {}",
                sample.class, self.num_classes
            )));
        }
        let activity = log_sum_exp(&logits) - logits[sample.class];
        let global = sample.features.global();
        let completeness = match sample.completeness_bit() {
            Some(b) => {
                let z = self.completeness_logit(&global, sample.class)?;
                // -ln sigma(z) for b = 1, -ln(1 - sigma(z)) for b = 0
                Some(if b { softplus(-z) } else { softplus(z) })
            }
            None => None,
        };
        let regression = match sample.reg_targets {
            Some(t) => {
                let predicted = self.regression_output(&global, sample.class)?;
                Some(regression_loss(predicted, t))
            }
            None => None,
        };
        Ok(LossTerms {
            activity,
            completeness,
            regression,
        })
    }

    /// Unified classification loss: negative log activity likelihood plus,
    /// for non-background samples, the negative log completeness likelihood.
    pub fn classification_loss(&self, sample: &ProposalSample) -> Result<f64> {
        let terms = self.loss_terms(sample)?;
        Ok(terms.activity + terms.completeness.unwrap_or(0.0))
    }

    /// Classification loss plus `lambda` times the regression loss for
    /// positive samples.
    pub fn multi_task_loss(&self, sample: &ProposalSample) -> Result<f64> {
        Ok(self.loss_terms(sample)?.total(self.lambda))
    }

    /// All weights flattened in checkpoint order; paired with
    /// [`ModelGrads::flat`] for gradient checks.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.w_act);
        out.extend_from_slice(&self.b_act);
        out.extend_from_slice(&self.w_comp);
        out.extend_from_slice(&self.b_comp);
        out.extend_from_slice(&self.w_reg);
        out.extend_from_slice(&self.b_reg);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.flat_params().len();
        if flat.len() != expected {
            return Err(SsnError::DimensionMismatch {
                what: "flat parameter vector".into(),
                expected,
                got: flat.len(),
            });
        }
        let mut off = 0;
        for block in [
            &mut self.w_act,
            &mut self.b_act,
            &mut self.w_comp,
            &mut self.b_comp,
            &mut self.w_reg,
            &mut self.b_reg,
        ] {
            let len = block.len();
            block.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }
}

/// Gradient accumulator with the same block shapes as [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub w_act: Vec<f64>,
    pub b_act: Vec<f64>,
    pub w_comp: Vec<f64>,
    pub b_comp: Vec<f64>,
    pub w_reg: Vec<f64>,
    pub b_reg: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            w_act: vec![0.0; params.w_act.len()],
            b_act: vec![0.0; params.b_act.len()],
            w_comp: vec![0.0; params.w_comp.len()],
            b_comp: vec![0.0; params.b_comp.len()],
            w_reg: vec![0.0; params.w_reg.len()],
            b_reg: vec![0.0; params.b_reg.len()],
        }
    }

    pub fn reset(&mut self) {
        for block in [
            &mut self.w_act,
            &mut self.b_act,
            &mut self.w_comp,
            &mut self.b_comp,
            &mut self.w_reg,
            &mut self.b_reg,
        ] {
            block.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Cross-entropy gradient of the activity term, scaled by `scale`.
    pub fn add_activity(
        &mut self,
        params: &ModelParams,
        f_c: &[f64],
        class: usize,
        scale: f64,
    ) -> Result<()> {
        let probs = params.activity_forward(f_c)?;
        let d = params.dim_fc();
        for (j, &p) in probs.iter().enumerate() {
            let g = scale * (p - if j == class { 1.0 } else { 0.0 });
            self.b_act[j] += g;
            for (w, x) in self.w_act[j * d..(j + 1) * d].iter_mut().zip(f_c) {
                *w += g * x;
            }
        }
        Ok(())
    }

    /// Bernoulli log-likelihood gradient of the completeness term for class
    /// `k`, scaled by `scale`.
    pub fn add_completeness(
        &mut self,
        params: &ModelParams,
        global: &[f64],
        k: usize,
        bit: bool,
        scale: f64,
    ) -> Result<()> {
        let z = params.completeness_logit(global, k)?;
        let g = scale * (sigmoid(z) - if bit { 1.0 } else { 0.0 });
        let d = params.dim_global();
        self.b_comp[k - 1] += g;
        for (w, x) in self.w_comp[(k - 1) * d..k * d].iter_mut().zip(global) {
            *w += g * x;
        }
        Ok(())
    }

    /// Smooth-L1 gradient of the regression term for class `k`, scaled by
    /// `scale` (callers fold lambda into the scale).
    pub fn add_regression(
        &mut self,
        params: &ModelParams,
        global: &[f64],
        k: usize,
        targets: (f64, f64),
        scale: f64,
    ) -> Result<()> {
        let predicted = params.regression_output(global, k)?;
        let d = params.dim_global();
        for (m, (pred, tgt)) in [(predicted.0, targets.0), (predicted.1, targets.1)]
            .into_iter()
            .enumerate()
        {
            let g = scale * smooth_l1_grad(pred - tgt);
            let base = ((k - 1) * 2 + m) * d;
            self.b_reg[(k - 1) * 2 + m] += g;
            for (w, x) in self.w_reg[base..base + d].iter_mut().zip(global) {
                *w += g * x;
            }
        }
        Ok(())
    }

    /// Gradient of the full multi-task loss of one sample (no OHEM masking).
    pub fn add_multi_task(
        &mut self,
        params: &ModelParams,
        sample: &ProposalSample,
        scale: f64,
    ) -> Result<()> {
        self.add_activity(params, &sample.features.f_c, sample.class, scale)?;
        let global = sample.features.global();
        if let Some(bit) = sample.completeness_bit() {
            self.add_completeness(params, &global, sample.class, bit, scale)?;
        }
        if let Some(t) = sample.reg_targets {
            self.add_regression(params, &global, sample.class, t, scale * params.lambda)?;
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.w_act);
        out.extend_from_slice(&self.b_act);
        out.extend_from_slice(&self.w_comp);
        out.extend_from_slice(&self.b_comp);
        out.extend_from_slice(&self.w_reg);
        out.extend_from_slice(&self.b_reg);
        out
    }
}
