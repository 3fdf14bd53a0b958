//! Synthetic activity grammars and the feature stand-in.
//!
//! An [`ActionGrammar`] is a first-order Markov process over action classes
//! with per-class duration ranges; it generates ground-truth label sequences.
//! A [`ComposedGrammar`] chains a short "menu" segment with one of several
//! branch grammars selected by the menu class, so the distant future depends
//! on information only available at the start of the sequence: single-step
//! prediction is provably insufficient there.
//!
//! Features are per-class prototype vectors plus Gaussian noise, quantized to
//! 32-bit precision to match the on-disk feature format exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One sequence: ground-truth labels and the matching feature rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub labels: Vec<usize>,
    /// `T x feature_dim`, one row per frame.
    pub features: Tensor,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Markov process over action classes with per-class duration ranges.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionGrammar {
    pub classes: Vec<String>,
    /// `C x C` row-stochastic matrix with a zero diagonal.
    pub transition: Vec<Vec<f64>>,
    pub start_dist: Vec<f64>,
    pub duration_min: Vec<usize>,
    pub duration_max: Vec<usize>,
}

impl ActionGrammar {
    /// Builds a grammar, forcing the transition diagonal to zero and
    /// renormalizing each row (self-transitions would blur segment
    /// boundaries), then validating all invariants.
    pub fn new(
        classes: Vec<String>,
        mut transition: Vec<Vec<f64>>,
        start_dist: Vec<f64>,
        duration_min: Vec<usize>,
        duration_max: Vec<usize>,
    ) -> Result<Self> {
        for (i, row) in transition.iter_mut().enumerate() {
            if i < row.len() {
                row[i] = 0.0;
            }
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return Err(Error::Config(format!(
                    "transition row {i} has no mass off the diagonal"
                )));
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let grammar = ActionGrammar { classes, transition, start_dist, duration_min, duration_max };
        grammar.validate()?;
        Ok(grammar)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes();
        if c == 0 {
            return Err(Error::Config("grammar needs at least one class".into()));
        }
        if self.transition.len() != c
            || self.start_dist.len() != c
            || self.duration_min.len() != c
            || self.duration_max.len() != c
        {
            return Err(Error::Config(format!(
                "grammar field lengths disagree with {c} classes"
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Config(format!("transition row {i} has {} entries", row.len())));
            }
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Config(format!("transition row {i} has values outside [0,1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("transition row {i} sums to {total}")));
            }
        }
        let start_total: f64 = self.start_dist.iter().sum();
        if self.start_dist.iter().any(|&v| !(0.0..=1.0).contains(&v))
            || (start_total - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!("start distribution sums to {start_total}")));
        }
        for i in 0..c {
            if self.duration_min[i] < 1 || self.duration_min[i] > self.duration_max[i] {
                return Err(Error::Config(format!(
                    "class {i} duration range {}..={} is invalid",
                    self.duration_min[i], self.duration_max[i]
                )));
            }
        }
        Ok(())
    }

    /// Deterministic cycle `0 -> 1 -> ... -> C-1 -> 0` with a fixed segment
    /// duration and a uniform start phase.
    pub fn cycle(num_classes: usize, duration: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config("a cycle needs at least two classes".into()));
        }
        let mut transition = vec![vec![0.0; num_classes]; num_classes];
        for i in 0..num_classes {
            transition[i][(i + 1) % num_classes] = 1.0;
        }
        ActionGrammar::new(
            (0..num_classes).map(|i| format!("act{i}")).collect(),
            transition,
            vec![1.0 / num_classes as f64; num_classes],
            vec![duration; num_classes],
            vec![duration; num_classes],
        )
    }
}

fn draw_categorical(dist: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Draws a label sequence: start class, uniform duration in the class range,
/// emit, transition, repeat; truncated at `total_len`.
pub fn sample_labels(
    grammar: &ActionGrammar,
    total_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    grammar.validate()?;
    if total_len == 0 {
        return Err(Error::Contract("sequence length must be at least 1".into()));
    }
    let mut labels = Vec::with_capacity(total_len);
    let mut class = draw_categorical(&grammar.start_dist, rng);
    while labels.len() < total_len {
        let dur = rng.random_range(grammar.duration_min[class]..=grammar.duration_max[class]);
        for _ in 0..dur {
            if labels.len() == total_len {
                break;
            }
            labels.push(class);
        }
        class = draw_categorical(&grammar.transition[class], rng);
    }
    Ok(labels)
}

/// A menu segment followed by the branch grammar the menu class selects.
/// All grammars share one class space.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposedGrammar {
    pub menu: ActionGrammar,
    pub branches: Vec<ActionGrammar>,
}

impl ComposedGrammar {
    pub fn num_classes(&self) -> usize {
        self.menu.num_classes()
    }

    pub fn validate(&self) -> Result<()> {
        self.menu.validate()?;
        if self.branches.is_empty() {
            return Err(Error::Config("composed grammar needs at least one branch".into()));
        }
        for b in &self.branches {
            b.validate()?;
            if b.num_classes() != self.menu.num_classes() {
                return Err(Error::Config(
                    "menu and branches must share one class space".into(),
                ));
            }
        }
        // The menu start distribution selects a branch, so its mass must stay
        // within the branch indices.
        for (i, &p) in self.menu.start_dist.iter().enumerate() {
            if p > 0.0 && i >= self.branches.len() {
                return Err(Error::Config(format!(
                    "menu class {i} has start mass but only {} branches exist",
                    self.branches.len()
                )));
            }
        }
        Ok(())
    }

    /// Menu classes selecting between deterministic cycles over the body
    /// classes, one cycle order per branch. The class space is
    /// `{0..orders.len()}` menus followed by the body classes. Orders that
    /// share transitions make the ambiguous stretches resolvable only
    /// through the menu observed at the start of the sequence.
    pub fn menu_of_cycle_orders(
        orders: &[Vec<usize>],
        menu_duration: (usize, usize),
        body_duration: (usize, usize),
    ) -> Result<ComposedGrammar> {
        let num_menus = orders.len();
        if num_menus < 2 {
            return Err(Error::Config("need at least two branch orders".into()));
        }
        let body: usize = orders[0].len();
        if body < 3 {
            return Err(Error::Config("need at least three body classes".into()));
        }
        let c = num_menus + body;
        for order in orders {
            let mut seen: Vec<usize> = order.clone();
            seen.sort_unstable();
            let expect: Vec<usize> = (num_menus..c).collect();
            if seen != expect {
                return Err(Error::Config(format!(
                    "order {order:?} must be a permutation of the body classes {expect:?}"
                )));
            }
        }
        let names: Vec<String> = (0..num_menus)
            .map(|i| format!("menu{i}"))
            .chain((0..body).map(|i| format!("act{i}")))
            .collect();
        let uniform_other = |row_idx: usize| -> Vec<f64> {
            (0..c)
                .map(|j| if j == row_idx { 0.0 } else { 1.0 / (c - 1) as f64 })
                .collect()
        };
        // The menu grammar only contributes a start class and a duration.
        let menu = ActionGrammar::new(
            names.clone(),
            (0..c).map(uniform_other).collect(),
            {
                let mut d = vec![0.0; c];
                for v in d.iter_mut().take(num_menus) {
                    *v = 1.0 / num_menus as f64;
                }
                d
            },
            vec![menu_duration.0; c],
            vec![menu_duration.1; c],
        )?;
        let branches: Vec<ActionGrammar> = orders
            .iter()
            .map(|order| {
                let mut transition = vec![vec![0.0; c]; c];
                for (pos, &class) in order.iter().enumerate() {
                    let next = order[(pos + 1) % body];
                    transition[class][next] = 1.0;
                }
                // Menu classes never occur inside a branch; give them valid rows.
                for (i, row) in transition.iter_mut().enumerate().take(num_menus) {
                    row[num_menus + i % body] = 1.0;
                }
                ActionGrammar::new(
                    names.clone(),
                    transition,
                    {
                        let mut d = vec![0.0; c];
                        for v in d.iter_mut().skip(num_menus) {
                            *v = 1.0 / body as f64;
                        }
                        d
                    },
                    vec![body_duration.0; c],
                    vec![body_duration.1; c],
                )
            })
            .collect::<Result<_>>()?;
        let composed = ComposedGrammar { menu, branches };
        composed.validate()?;
        Ok(composed)
    }

    /// The desk-scale eight-class corpus grammar: two menu classes selecting
    /// between cycle orders that share half their transitions, so windows
    ///观 the shared stretch can only be continued correctly by recalling
    /// the menu.
    pub fn shared_prefix_menu(
        menu_duration: (usize, usize),
        body_duration: (usize, usize),
    ) -> Result<ComposedGrammar> {
        ComposedGrammar::menu_of_cycle_orders(
            &[vec![2, 3, 4, 5, 6, 7], vec![2, 3, 4, 6, 5, 7]],
            menu_duration,
            body_duration,
        )
    }

    /// One menu segment, then the selected branch fills the remainder.
    pub fn sample(&self, total_len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        self.validate()?;
        if total_len == 0 {
            return Err(Error::Contract("sequence length must be at least 1".into()));
        }
        let menu_class = draw_categorical(&self.menu.start_dist, rng);
        let dur = rng
            .random_range(self.menu.duration_min[menu_class]..=self.menu.duration_max[menu_class]);
        let mut labels: Vec<usize> = Vec::with_capacity(total_len);
        for _ in 0..dur.min(total_len) {
            labels.push(menu_class);
        }
        if labels.len() < total_len {
            let rest = sample_labels(&self.branches[menu_class], total_len - labels.len(), rng)?;
            labels.extend(rest);
        }
        Ok(labels)
    }
}

/// Anything that can generate label sequences over a class space.
pub trait LabelSampler {
    fn num_classes(&self) -> usize;
    fn sample(&self, total_len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>>;
}

impl LabelSampler for ActionGrammar {
    fn num_classes(&self) -> usize {
        self.num_classes()
    }
    fn sample(&self, total_len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        sample_labels(self, total_len, rng)
    }
}

impl LabelSampler for ComposedGrammar {
    fn num_classes(&self) -> usize {
        self.num_classes()
    }
    fn sample(&self, total_len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        self.sample(total_len, rng)
    }
}

/// Per-class prototype vectors plus the noise level used when synthesizing
/// features. Prototypes are quantized to 32-bit precision so noiseless
/// features round-trip the feature file format bitwise.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePrototypes {
    /// `C x feature_dim`.
    pub prototypes: Vec<Vec<f64>>,
    pub noise_std: f64,
}

impl FeaturePrototypes {
    pub fn random(
        num_classes: usize,
        feature_dim: usize,
        noise_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_classes == 0 || feature_dim == 0 {
            return Err(Error::Config("prototypes need classes and dimensions".into()));
        }
        if noise_std < 0.0 {
            return Err(Error::Config(format!("noise_std must be >= 0, got {noise_std}")));
        }
        let prototypes = (0..num_classes)
            .map(|_| {
                (0..feature_dim)
                    .map(|_| rng.random_range(-1.0..1.0) as f32 as f64)
                    .collect()
            })
            .collect();
        Ok(FeaturePrototypes { prototypes, noise_std })
    }

    pub fn feature_dim(&self) -> usize {
        self.prototypes[0].len()
    }
}

/// Features for a label sequence: row `t` is the class prototype plus
/// Gaussian noise, quantized to 32-bit precision.
pub fn synth_features(
    labels: &[usize],
    prototypes: &FeaturePrototypes,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let c = prototypes.prototypes.len();
    let d = prototypes.feature_dim();
    let normal = Normal::new(0.0, prototypes.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("bad noise distribution: {e}")))?;
    let mut data = Vec::with_capacity(labels.len() * d);
    for (t, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(Error::Contract(format!(
                "label {label} at frame {t} outside the {c}-class prototype set"
            )));
        }
        for j in 0..d {
            let noise = if prototypes.noise_std == 0.0 { 0.0 } else { normal.sample(rng) };
            data.push((prototypes.prototypes[label][j] + noise) as f32 as f64);
        }
    }
    Tensor::matrix(labels.len(), d, data)
}

/// Exact one-hot row for a class.
pub fn one_hot_row(label: usize, num_classes: usize) -> Result<Vec<f64>> {
    if label >= num_classes {
        return Err(Error::Contract(format!(
            "label {label} out of range for {num_classes} classes"
        )));
    }
    let mut row = vec![0.0; num_classes];
    row[label] = 1.0;
    Ok(row)
}

/// One-hot encoding of a label sequence, `T x C`.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::Contract("one_hot needs at least one label".into()));
    }
    let mut data = Vec::with_capacity(labels.len() * num_classes);
    for (t, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::Contract(format!(
                "label {label} at frame {t} out of range for {num_classes} classes"
            )));
        }
        let mut row = vec![0.0; num_classes];
        row[label] = 1.0;
        data.extend(row);
    }
    Tensor::matrix(labels.len(), num_classes, data)
}

/// Contiguous segments of a label sequence as `(class, frame range)`.
pub fn segments(labels: &[usize]) -> Vec<(usize, Range<usize>)> {
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || labels[t] != labels[start] {
            out.push((labels[start], start..t));
            start = t;
        }
    }
    out
}

/// Segment-consistent label corruption: with probability `p` a whole segment
/// is relabelled with a uniformly drawn different class, mimicking a wrong
/// segmentation output. Original segment boundaries keep their positions;
/// only identities change.
pub fn corrupt_labels(
    labels: &[usize],
    num_classes: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!("corruption probability {p} outside [0, 1]")));
    }
    if labels.iter().any(|&l| l >= num_classes) {
        return Err(Error::Contract("label outside class range".into()));
    }
    if p > 0.0 && num_classes < 2 {
        return Err(Error::Contract(
            "cannot relabel segments with fewer than two classes".into(),
        ));
    }
    let mut out = labels.to_vec();
    for (class, range) in segments(labels) {
        if p > 0.0 && rng.random_bool(p) {
            let mut replacement = rng.random_range(0..num_classes - 1);
            if replacement >= class {
                replacement += 1;
            }
            for v in &mut out[range] {
                *v = replacement;
            }
        }
    }
    Ok(out)
}

/// Generates `count` samples: labels from the sampler, features from the
/// prototypes, all from one seeded generator.
pub fn generate_samples(
    sampler: &dyn LabelSampler,
    prototypes: &FeaturePrototypes,
    count: usize,
    total_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Sample>> {
    if prototypes.prototypes.len() != sampler.num_classes() {
        return Err(Error::Config(format!(
            "prototypes cover {} classes, grammar has {}",
            prototypes.prototypes.len(),
            sampler.num_classes()
        )));
    }
    (0..count)
        .map(|_| {
            let labels = sampler.sample(total_len, rng)?;
            let features = synth_features(&labels, prototypes, rng)?;
            Ok(Sample { labels, features })
        })
        .collect()
}
