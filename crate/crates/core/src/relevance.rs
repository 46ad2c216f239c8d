//! Layer-wise relevance redistribution for dense ReLU networks.
//!
//! Every deep Taylor rule handled here is characterised by a search direction
//! `v` along which the root point of an upper neuron is sought:
//!
//! | rule    | direction `v`             |
//! |---------|---------------------------|
//! | `Z`     | `x′`                      |
//! | `W2`    | `w′`                      |
//! | `WPlus` | `w′ ⊙ 1[x′ ≠ 0]`          |
//! | `A`     | `â′`                      |
//! | `APlus` | `â′ ⊙ 1[x′ ≠ 0]`          |
//!
//! Primes denote the bias-augmented view: inputs `x′ = [x; 1]`, weights
//! `w′ = [w; b]`. With root point `x̃′ = x′ − t·v` and `w′·x̃′ = 0`, the
//! first-order Taylor term of neuron `j` gives input `i` the share
//! `w′ᵢ vᵢ / (w′·v)` of `Rⱼ`. Pre-activations are affine in their inputs, so
//! the expansion is exact and nothing is lost between layers.
//!
//! The relevance that lands on the constant bias neuron is tracked per layer
//! and counted when checking conservation.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::linalg::dot;
use crate::network::{augment_input, AugmentedWeights, Mlp};
use crate::patterns::{PatternLayer, PatternSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Plain input gradient of the target logit.
    Saliency,
    /// Input gradient multiplied elementwise with the input.
    GradTimesInput,
    Z,
    W2,
    WPlus,
    A,
    APlus,
}

impl Rule {
    pub const ALL: [Rule; 7] = [
        Rule::Saliency,
        Rule::GradTimesInput,
        Rule::Z,
        Rule::W2,
        Rule::WPlus,
        Rule::A,
        Rule::APlus,
    ];

    pub const LAYERWISE: [Rule; 5] = [Rule::Z, Rule::W2, Rule::WPlus, Rule::A, Rule::APlus];

    pub fn is_layerwise(self) -> bool {
        !matches!(self, Rule::Saliency | Rule::GradTimesInput)
    }

    pub fn needs_patterns(self) -> bool {
        matches!(self, Rule::A | Rule::APlus)
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::Saliency => "saliency",
            Rule::GradTimesInput => "grad-x-input",
            Rule::Z => "z",
            Rule::W2 => "w2",
            Rule::WPlus => "w+",
            Rule::A => "a",
            Rule::APlus => "a+",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownRule(pub String);

impl fmt::Display for UnknownRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown rule '{}' (expected one of saliency, grad-x-input, z, w2, w+, a, a+)",
            self.0
        )
    }
}

impl std::error::Error for UnknownRule {}

impl FromStr for Rule {
    type Err = UnknownRule;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Ok(match key.as_str() {
            "saliency" | "gradient" => Rule::Saliency,
            "grad-x-input" | "gradtimesinput" | "grad_times_input" | "gxi" => Rule::GradTimesInput,
            "z" => Rule::Z,
            "w2" | "w^2" => Rule::W2,
            "w+" | "wplus" => Rule::WPlus,
            "a" => Rule::A,
            "a+" | "aplus" => Rule::APlus,
            _ => return Err(UnknownRule(s.to_string())),
        })
    }
}

/// A point `x̃′ = x′ − scale·direction` on the zero set of a neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct RootPoint {
    pub x_tilde: Vec<f64>,
    pub direction: Vec<f64>,
    pub scale: f64,
}

fn mask_active(v: &[f64], x_aug: &[f64]) -> Vec<f64> {
    v.iter()
        .zip(x_aug)
        .map(|(&vi, &xi)| if xi != 0.0 { vi } else { 0.0 })
        .collect()
}

/// Search direction of `rule` for one neuron.
///
/// `a_row` is the neuron's estimated pattern over the augmented fan-in and is
/// only consulted by `A` and `APlus`.
pub fn search_direction(
    rule: Rule,
    w_row: &[f64],
    x_aug: &[f64],
    a_row: Option<&[f64]>,
) -> Result<Vec<f64>> {
    check_len("search direction input", w_row.len(), x_aug.len())?;
    let pattern = || -> Result<&[f64]> {
        let a = a_row.ok_or(Error::PatternMissing(rule))?;
        check_len("pattern row", w_row.len(), a.len())?;
        Ok(a)
    };
    match rule {
        Rule::Z => Ok(x_aug.to_vec()),
        Rule::W2 => Ok(w_row.to_vec()),
        Rule::WPlus => Ok(mask_active(w_row, x_aug)),
        Rule::A => Ok(pattern()?.to_vec()),
        Rule::APlus => Ok(mask_active(pattern()?, x_aug)),
        Rule::Saliency | Rule::GradTimesInput => Err(Error::NotLayerwise(rule)),
    }
}

/// `w′·v` with the last (constant) coordinate added after the pixel sum, the
/// same order used for pre-activations.
fn affine_dot(w: &[f64], v: &[f64]) -> f64 {
    let n = w.len() - 1;
    dot(&w[..n], &v[..n]) + w[n] * v[n]
}

/// Solves `w′·(x′ − t·v) = 0` for `t`.
pub fn root_point(x_aug: &[f64], w_row: &[f64], v: &[f64]) -> Result<RootPoint> {
    check_len("root point input", w_row.len(), x_aug.len())?;
    check_len("root point direction", w_row.len(), v.len())?;
    if w_row.is_empty() {
        return Err(Error::DegenerateDirection { dot: 0.0 });
    }
    let wv = affine_dot(w_row, v);
    if wv.is_nan() || wv.abs() < 1e-12 {
        return Err(Error::DegenerateDirection { dot: wv });
    }
    let scale = affine_dot(w_row, x_aug) / wv;
    let x_tilde = x_aug.iter().zip(v).map(|(&x, &d)| x - scale * d).collect();
    Ok(RootPoint {
        x_tilde,
        direction: v.to_vec(),
        scale,
    })
}

/// One redistribution step through a dense layer.
///
/// Returns the relevance of the layer inputs (length `fan_in`) and the
/// relevance absorbed by the bias neuron of each upper neuron (length
/// `fan_out`). Upper neurons with zero relevance are skipped. Neurons that
/// carry relevance are redistributed whatever the sign of their
/// pre-activation, since `W2` and `A` can route relevance to inactive units.
///
/// With `stabilizer = 0` a zero denominator is an error; otherwise the
/// denominator is pushed away from zero by `stabilizer·sign(w′·v)`.
#[allow(clippy::too_many_arguments)]
pub fn propagate_dense(
    r_upper: &[f64],
    x_aug: &[f64],
    weights: &AugmentedWeights,
    z: &[f64],
    rule: Rule,
    patterns: Option<&PatternLayer>,
    stabilizer: f64,
    layer: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let fan_out = weights.rows();
    let cols = weights.cols();
    check_len("upper relevance", fan_out, r_upper.len())?;
    check_len("pre-activations", fan_out, z.len())?;
    check_len("augmented input", cols, x_aug.len())?;
    if !r_upper.iter().all(|r| r.is_finite()) {
        return Err(Error::NonFinite("upper relevance"));
    }
    if rule.needs_patterns() {
        let p = patterns.ok_or(Error::PatternMissing(rule))?;
        if p.fan_out() != fan_out || p.fan_in_aug() != cols {
            return Err(Error::PatternMismatch(format!(
                "layer {layer}: pattern is {}x{}, weights are {}x{}",
                p.fan_out(),
                p.fan_in_aug(),
                fan_out,
                cols
            )));
        }
    }
    if !rule.is_layerwise() {
        return Err(Error::NotLayerwise(rule));
    }

    let fan_in = cols - 1;
    let mut r_lower = vec![0.0; fan_in];
    let mut bias_rel = vec![0.0; fan_out];
    for (j, &rj) in r_upper.iter().enumerate() {
        if rj == 0.0 {
            continue;
        }
        let w = weights.row(j);
        let v = search_direction(rule, w, x_aug, patterns.map(|p| p.column(j)))?;
        let raw = affine_dot(w, &v);
        let denominator = if stabilizer > 0.0 {
            raw + stabilizer * if raw < 0.0 { -1.0 } else { 1.0 }
        } else {
            raw
        };
        let scale = rj / denominator;
        if denominator == 0.0 || !scale.is_finite() {
            return Err(Error::DegenerateDenominator {
                rule,
                layer,
                neuron: j,
                denominator: raw,
            });
        }
        for ((r, &wi), &vi) in r_lower.iter_mut().zip(&w[..fan_in]).zip(&v[..fan_in]) {
            *r += wi * vi * scale;
        }
        bias_rel[j] = w[fan_in] * v[fan_in] * scale;
    }
    Ok((r_lower, bias_rel))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceReport {
    pub rule: Rule,
    pub target: usize,
    /// `z^L_target`, the relevance injected at the output.
    pub output_relevance: f64,
    /// Relevance per layer, index 0 being the input and the last entry the
    /// one-hot output. Empty for gradient rules.
    pub layer_relevance: Vec<Vec<f64>>,
    /// Relevance absorbed by the bias neuron feeding each layer, indexed like
    /// the network layers (entry `l` has the width of layer `l`).
    pub bias_relevance: Vec<Vec<f64>>,
    pub input_relevance: Vec<f64>,
    /// Filled for layer-wise rules.
    pub conservation_residual: Option<f64>,
}

impl RelevanceReport {
    /// Relative mismatch `|ΣR^{l-1} + Σbias^l − ΣR^l|` for each propagated layer.
    pub fn layer_residuals(&self) -> Vec<f64> {
        let scale = self.output_relevance.abs().max(1e-12);
        (0..self.bias_relevance.len())
            .map(|l| {
                let lower: f64 = self.layer_relevance[l].iter().sum();
                let bias: f64 = self.bias_relevance[l].iter().sum();
                let upper: f64 = self.layer_relevance[l + 1].iter().sum();
                (lower + bias - upper).abs() / scale
            })
            .collect()
    }
}

/// `|Σ input relevance + Σ bias relevance − R_target| / max(|R_target|, 1e-12)`.
pub fn check_conservation(report: &RelevanceReport) -> f64 {
    let input: f64 = report.input_relevance.iter().sum();
    let bias: f64 = report.bias_relevance.iter().flatten().sum();
    (input + bias - report.output_relevance).abs() / report.output_relevance.abs().max(1e-12)
}

fn check_patterns(mlp: &Mlp, patterns: &PatternSet) -> Result<()> {
    if patterns.layers().len() != mlp.layers().len() {
        return Err(Error::PatternMismatch(format!(
            "{} pattern layers for {} network layers",
            patterns.layers().len(),
            mlp.layers().len()
        )));
    }
    for (l, (p, layer)) in patterns.layers().iter().zip(mlp.layers()).enumerate() {
        if p.fan_out() != layer.fan_out() || p.fan_in_aug() != layer.fan_in() + 1 {
            return Err(Error::PatternMismatch(format!(
                "layer {l}: pattern {}x{}, layer {}x{}",
                p.fan_out(),
                p.fan_in_aug(),
                layer.fan_out(),
                layer.fan_in() + 1
            )));
        }
    }
    Ok(())
}

/// Explains logit `target` of `mlp` at input `x`.
///
/// Gradient rules return the input gradient (optionally times the input).
/// Layer-wise rules start from the one-hot relevance `R_target = z^L_target`
/// and redistribute it down to the pixels.
pub fn explain(
    mlp: &Mlp,
    x: &[f64],
    target: usize,
    rule: Rule,
    patterns: Option<&PatternSet>,
    stabilizer: f64,
) -> Result<RelevanceReport> {
    let width = mlp.output_dim();
    if target >= width {
        return Err(Error::TargetOutOfRange { target, width });
    }
    if rule.needs_patterns() {
        check_patterns(mlp, patterns.ok_or(Error::PatternMissing(rule))?)?;
    }
    if stabilizer.is_nan() || stabilizer < 0.0 {
        return Err(Error::NonFinite("stabilizer"));
    }
    let trace = mlp.forward_trace(x)?;
    let output_relevance = trace.logits()[target];

    if !rule.is_layerwise() {
        let mut input_relevance = mlp.input_gradient(&trace, target)?;
        if rule == Rule::GradTimesInput {
            input_relevance
                .iter_mut()
                .zip(x)
                .for_each(|(g, &xi)| *g *= xi);
        }
        return Ok(RelevanceReport {
            rule,
            target,
            output_relevance,
            layer_relevance: Vec::new(),
            bias_relevance: Vec::new(),
            input_relevance,
            conservation_residual: None,
        });
    }

    let depth = mlp.layers().len();
    let mut layer_relevance = vec![Vec::new(); depth + 1];
    let mut bias_relevance = vec![Vec::new(); depth];
    let mut upper = vec![0.0; width];
    upper[target] = output_relevance;
    layer_relevance[depth] = upper.clone();
    for l in (0..depth).rev() {
        let layer = &mlp.layers()[l];
        let x_aug = augment_input(trace.layer_input(l));
        let weights = layer.augment_bias_as_input();
        let pattern_layer = patterns
            .filter(|_| rule.needs_patterns())
            .map(|p| &p.layers()[l]);
        let (lower, bias) = propagate_dense(
            &upper,
            &x_aug,
            &weights,
            &trace.pre_activations[l],
            rule,
            pattern_layer,
            stabilizer,
            l,
        )?;
        bias_relevance[l] = bias;
        layer_relevance[l] = lower.clone();
        upper = lower;
    }
    let mut report = RelevanceReport {
        rule,
        target,
        output_relevance,
        input_relevance: layer_relevance[0].clone(),
        layer_relevance,
        bias_relevance,
        conservation_residual: None,
    };
    report.conservation_residual = Some(check_conservation(&report));
    Ok(report)
}
