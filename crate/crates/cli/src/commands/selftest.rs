//! Invariant checks on small built-in fixtures. Needs no data files.

use dtd_core::dataio::{
    encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, IdxImages,
};
use dtd_core::genmodel::{
    fit_projection, pattern_vs_filter_demo, sample, verify_filter_conditions, GenerativeSpec,
};
use dtd_core::linalg::{dot, norm};
use dtd_core::network::augment_input;
use dtd_core::network::io::{model_from_bytes, model_to_bytes};
use dtd_core::patterns::io::{patterns_from_bytes, patterns_to_bytes};
use dtd_core::relevance::{root_point, search_direction};
use dtd_core::{
    add_gaussian_noise, estimate_patterns, explain, Activation, Dataset, DenseLayer, Mlp,
    MomentAccumulator, NoiseConfig, Rule,
};

use crate::config::derive_seed;
use crate::render::{diverging_color, render_heatmap};

type Check = std::result::Result<(), String>;
type CheckFn = fn() -> Check;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Check,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }

    pub fn line(&self) -> String {
        match &self.outcome {
            Ok(()) => format!("PASS  {}", self.name),
            Err(detail) => format!("FAIL  {}: {detail}", self.name),
        }
    }
}

/// Deterministic uniform draws for fixtures.
struct Draws {
    seed: u64,
    counter: u64,
}

impl Draws {
    fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    fn unit(&mut self) -> f64 {
        self.counter += 1;
        (derive_seed(self.seed, "selftest", self.counter) >> 11) as f64 / (1u64 << 53) as f64
    }

    fn symmetric(&mut self) -> f64 {
        2.0 * self.unit() - 1.0
    }

    fn vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.symmetric()).collect()
    }

    /// Inputs in [0, 1] with roughly a third of the entries exactly zero.
    fn sparse(&mut self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let v = self.unit();
                if self.unit() < 0.35 {
                    0.0
                } else {
                    v
                }
            })
            .collect()
    }
}

fn layer(d: &mut Draws, fan_in: usize, fan_out: usize, act: Activation) -> DenseLayer {
    let w = d.vec(fan_in * fan_out);
    let b = d.vec(fan_out).iter().map(|v| 0.2 * v).collect();
    DenseLayer::new(w, b, fan_in, act).expect("finite fixture")
}

fn fixture_net(d: &mut Draws, sizes: &[usize]) -> Mlp {
    let n = sizes.len() - 1;
    let layers = (0..n)
        .map(|l| {
            let act = if l + 1 == n {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layer(d, sizes[l], sizes[l + 1], act)
        })
        .collect();
    Mlp::new(layers).expect("valid fixture")
}

fn fixture_data(d: &mut Draws, n: usize, dim: usize, classes: u8) -> Dataset {
    let images = (0..n).flat_map(|_| d.sparse(dim)).collect();
    let labels = (0..n).map(|i| (i % classes as usize) as u8).collect();
    Dataset::new(images, dim, labels).expect("valid fixture")
}

fn ensure(ok: bool, detail: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(detail())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn bias_augmentation() -> Check {
    let mut d = Draws::new(1);
    for _ in 0..20 {
        let l = layer(&mut d, 7, 5, Activation::Relu);
        let x = d.vec(7);
        let via_aug = l
            .augment_bias_as_input()
            .apply(&augment_input(&x))
            .map_err(err)?;
        ensure(via_aug == l.pre_activation(&x), || {
            "augmented evaluation differs".into()
        })?;
    }
    Ok(())
}

fn finite_difference_gradient() -> Check {
    let mut d = Draws::new(2);
    let net = fixture_net(&mut d, &[6, 9, 4]);
    let h = 1e-6;
    let mut tested = 0;
    while tested < 10 {
        let x = d.vec(6);
        let trace = net.forward_trace(&x).map_err(err)?;
        if trace.pre_activations[0].iter().any(|z| z.abs() < 1e-3) {
            continue;
        }
        let target = tested % 4;
        let grad = net.input_gradient(&trace, target).map_err(err)?;
        for i in 0..6 {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (net.forward(&up).map_err(err)?[target]
                - net.forward(&down).map_err(err)?[target])
                / (2.0 * h);
            ensure((fd - grad[i]).abs() <= 1e-6, || {
                format!("input {i}: analytic {} vs fd {fd}", grad[i])
            })?;
        }
        tested += 1;
    }
    Ok(())
}

fn z_equals_gradient_times_input() -> Check {
    let mut d = Draws::new(3);
    let net = fixture_net(&mut d, &[10, 12, 3]);
    for k in 0..30 {
        let x = d.sparse(10);
        let z = explain(&net, &x, k % 3, Rule::Z, None, 0.0).map_err(err)?;
        let g = explain(&net, &x, k % 3, Rule::GradTimesInput, None, 0.0).map_err(err)?;
        let scale = z
            .input_relevance
            .iter()
            .fold(1e-300f64, |m, v| m.max(v.abs()));
        for (a, b) in z.input_relevance.iter().zip(&g.input_relevance) {
            ensure((a - b).abs() <= 1e-8 * scale, || format!("{a} vs {b}"))?;
        }
    }
    Ok(())
}

fn conservation() -> Check {
    let mut d = Draws::new(4);
    let net = fixture_net(&mut d, &[8, 10, 6, 3]);
    let data = fixture_data(&mut d, 200, 8, 3);
    let patterns = estimate_patterns(&net, &data).map_err(err)?;
    for rule in Rule::LAYERWISE {
        for i in 0..40 {
            let rep =
                explain(&net, data.image(i), i % 3, rule, Some(&patterns), 0.0).map_err(err)?;
            let r = rep.conservation_residual.unwrap_or(f64::INFINITY);
            ensure(r <= 1e-9, || format!("{rule}: residual {r}"))?;
        }
    }
    Ok(())
}

fn root_condition() -> Check {
    let mut d = Draws::new(5);
    let mut checked = 0;
    for _ in 0..200 {
        let w = d.vec(9);
        let x = augment_input(&d.sparse(8));
        let a = d.vec(9);
        for rule in Rule::LAYERWISE {
            let v = search_direction(rule, &w, &x, Some(&a)).map_err(err)?;
            let root = match root_point(&x, &w, &v) {
                Ok(r) => r,
                Err(dtd_core::Error::DegenerateDirection { .. }) => continue,
                Err(e) => return Err(err(e)),
            };
            let bound = 1e-9 * norm(&w) * norm(&x);
            let value = dot(&w, &root.x_tilde).abs();
            ensure(value <= bound, || {
                format!("{rule}: |w.x~| = {value} > {bound}")
            })?;
            checked += 1;
        }
    }
    ensure(checked > 0, || "no non-degenerate pairs".into())
}

fn support_of_masked_rules() -> Check {
    let mut d = Draws::new(6);
    let net = fixture_net(&mut d, &[12, 10, 4]);
    let data = fixture_data(&mut d, 100, 12, 4);
    let patterns = estimate_patterns(&net, &data).map_err(err)?;
    for rule in [Rule::WPlus, Rule::APlus, Rule::Z] {
        for i in 0..data.len() {
            let x = data.image(i);
            let rep = explain(&net, x, i % 4, rule, Some(&patterns), 0.0).map_err(err)?;
            for (k, (&xi, &r)) in x.iter().zip(&rep.input_relevance).enumerate() {
                ensure(xi != 0.0 || r == 0.0, || {
                    format!("{rule}: input {k} is zero but R = {r}")
                })?;
            }
        }
    }
    Ok(())
}

fn pattern_closed_form() -> Check {
    let mut d = Draws::new(7);
    for _ in 0..20 {
        let dim = 4;
        let l = layer(&mut d, dim, 2, Activation::Identity);
        let net = Mlp::new(vec![l.clone()]).map_err(err)?;
        let data = fixture_data(&mut d, 15, dim, 2);
        let set = estimate_patterns(&net, &data).map_err(err)?;
        let aug = l.augment_bias_as_input();
        let n = dim + 1;
        // Dense second moment C = Σ x' x'ᵀ over the augmented inputs.
        let mut c = vec![0.0; n * n];
        for i in 0..data.len() {
            let x = augment_input(data.image(i));
            for r in 0..n {
                for s in 0..n {
                    c[r * n + s] += x[r] * x[s];
                }
            }
        }
        for j in 0..2 {
            let w = aug.row(j);
            let cw: Vec<f64> = (0..n).map(|r| dot(&c[r * n..(r + 1) * n], w)).collect();
            let wcw = dot(w, &cw);
            let got = set.layers()[0].column(j);
            for r in 0..n {
                let want = cw[r] / wcw;
                ensure((got[r] - want).abs() <= 1e-10, || {
                    format!("neuron {j}, coord {r}: {} vs {want}", got[r])
                })?;
            }
        }
    }
    Ok(())
}

fn pattern_merge() -> Check {
    let mut d = Draws::new(8);
    let net = fixture_net(&mut d, &[5, 6, 2]);
    let data = fixture_data(&mut d, 60, 5, 2);
    let mut whole = MomentAccumulator::for_network(&net);
    let mut left = MomentAccumulator::for_network(&net);
    let mut right = MomentAccumulator::for_network(&net);
    for i in 0..data.len() {
        let trace = net.forward_trace(data.image(i)).map_err(err)?;
        whole.accumulate(&trace).map_err(err)?;
        if i < 23 {
            left.accumulate(&trace)
        } else {
            right.accumulate(&trace)
        }
        .map_err(err)?;
    }
    left.merge_from(&right).map_err(err)?;
    let (a, b) = (
        whole.finalize(1e-12).map_err(err)?,
        left.finalize(1e-12).map_err(err)?,
    );
    for (la, lb) in a.layers().iter().zip(b.layers()) {
        for (x, y) in la.data().iter().zip(lb.data()) {
            ensure((x - y).abs() <= 1e-12, || format!("{x} vs {y}"))?;
        }
    }
    Ok(())
}

fn a_rule_independence() -> Check {
    let mut d = Draws::new(9);
    let net = Mlp::new(vec![layer(&mut d, 6, 1, Activation::Identity)]).map_err(err)?;
    let data = fixture_data(&mut d, 50, 6, 1);
    let patterns = estimate_patterns(&net, &data).map_err(err)?;
    let mut reference: Option<Vec<f64>> = None;
    for _ in 0..20 {
        let x = d.vec(6);
        let rep = explain(&net, &x, 0, Rule::A, Some(&patterns), 0.0).map_err(err)?;
        let total: f64 = rep.input_relevance.iter().map(|v| v.abs()).sum();
        let sign = rep.output_relevance.signum();
        let normalized: Vec<f64> = rep
            .input_relevance
            .iter()
            .map(|v| sign * v / total)
            .collect();
        match &reference {
            None => reference = Some(normalized),
            Some(r) => {
                for (a, b) in r.iter().zip(&normalized) {
                    ensure((a - b).abs() <= 1e-9, || format!("{a} vs {b}"))?;
                }
            }
        }
    }
    Ok(())
}

fn model_persistence() -> Check {
    let mut d = Draws::new(10);
    let net = fixture_net(&mut d, &[7, 5, 3]);
    let bytes = model_to_bytes(&net);
    let back = model_from_bytes(&bytes).map_err(err)?;
    ensure(back == net && model_to_bytes(&back) == bytes, || {
        "round trip changed the model".into()
    })
}

fn corrupted_model_rejected() -> Check {
    let mut d = Draws::new(11);
    let bytes = model_to_bytes(&fixture_net(&mut d, &[4, 3, 2]));
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    for (what, b) in [
        ("bad magic", bad_magic),
        ("truncated", bytes[..bytes.len() - 3].to_vec()),
    ] {
        match model_from_bytes(&b) {
            Err(e) if e.is_data_error() => {}
            Err(e) => return Err(format!("{what}: unexpected error kind {e}")),
            Ok(_) => return Err(format!("{what}: accepted")),
        }
    }
    Ok(())
}

fn pattern_persistence() -> Check {
    let mut d = Draws::new(12);
    let net = fixture_net(&mut d, &[6, 4, 2]);
    let set = estimate_patterns(&net, &fixture_data(&mut d, 30, 6, 2)).map_err(err)?;
    let bytes = patterns_to_bytes(&set);
    let back = patterns_from_bytes(&bytes).map_err(err)?;
    ensure(back == set && patterns_to_bytes(&back) == bytes, || {
        "round trip changed the patterns".into()
    })
}

fn idx_round_trip() -> Check {
    let images = IdxImages {
        rows: 2,
        cols: 3,
        pixels: (0..18).map(|v| (v * 14) as u8).collect(),
    };
    let labels = vec![3u8, 0, 9];
    let back = parse_idx_images(&encode_idx_images(&images)).map_err(err)?;
    let back_labels = parse_idx_labels(&encode_idx_labels(&labels)).map_err(err)?;
    ensure(back == images && back_labels == labels, || {
        "IDX round trip differs".into()
    })
}

fn noise_determinism() -> Check {
    let mut d = Draws::new(13);
    let data = fixture_data(&mut d, 20, 16, 2);
    let cfg = NoiseConfig {
        sigma: 0.3,
        seed: 42,
    };
    let a = add_gaussian_noise(&data, cfg).map_err(err)?;
    let b = add_gaussian_noise(&data, cfg).map_err(err)?;
    ensure(a == b, || "same seed gave different noise".into())?;
    ensure(add_gaussian_noise(&a, cfg).is_err(), || {
        "noisy data accepted a second pass".into()
    })
}

fn heatmap_symmetry() -> Check {
    ensure(diverging_color(0.0) == [255, 255, 255], || {
        "zero is not white".into()
    })?;
    let mut d = Draws::new(14);
    let map = d.vec(4 * 4);
    let neg: Vec<f64> = map.iter().map(|v| -v).collect();
    let (a, b) = (
        render_heatmap(&map, 4, 1).map_err(err)?,
        render_heatmap(&neg, 4, 1).map_err(err)?,
    );
    for (pa, pb) in a.data.chunks(3).zip(b.data.chunks(3)) {
        ensure(pa[0] == pb[2] && pa[1] == pb[1] && pa[2] == pb[0], || {
            "colour map is not mirrored".into()
        })?;
    }
    ensure(render_heatmap(&[f64::NAN; 4], 2, 1).is_err(), || {
        "NaN accepted".into()
    })
}

fn generative_model() -> Check {
    let spec = GenerativeSpec::random(10, 3, 0.1, 15).map_err(err)?;
    let w = fit_projection(&sample(&spec, 20_000), 0.0).map_err(err)?;
    let diag = verify_filter_conditions(&w, &spec).map_err(err)?;
    ensure(
        (diag.task_gain - 1.0).abs() <= 0.03 && diag.max_leak <= 0.03,
        || format!("{diag:?}"),
    )?;
    let demo = pattern_vs_filter_demo(&spec, 20_000, 0.0).map_err(err)?;
    ensure(demo.pattern_cosine >= 0.99, || {
        format!("pattern cosine {}", demo.pattern_cosine)
    })
}

pub fn checks() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("bias-as-input evaluation", bias_augmentation as CheckFn),
        (
            "input gradient vs finite differences",
            finite_difference_gradient,
        ),
        (
            "z rule equals gradient x input",
            z_equals_gradient_times_input,
        ),
        ("relevance conservation", conservation),
        ("root point condition", root_condition),
        ("zero inputs get zero relevance", support_of_masked_rules),
        ("pattern closed form", pattern_closed_form),
        ("pattern moment merge", pattern_merge),
        ("a rule independent of input", a_rule_independence),
        ("model file round trip", model_persistence),
        ("corrupted model file rejected", corrupted_model_rejected),
        ("pattern file round trip", pattern_persistence),
        ("idx round trip", idx_round_trip),
        ("noise determinism", noise_determinism),
        ("heatmap colour symmetry", heatmap_symmetry),
        ("generative model recovery", generative_model),
    ]
}

pub fn run() -> Vec<CheckResult> {
    checks()
        .into_iter()
        .map(|(name, f)| CheckResult { name, outcome: f() })
        .collect()
}
