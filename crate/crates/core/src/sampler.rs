//! Per-operator continuous-parameter samplers: a diagonal Gaussian proposal
//! with a k-nearest-neighbor accept model for rejection sampling.

use std::collections::HashMap;

use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::learning::{LearnedClass, Transition};
use crate::operator::{Demonstration, Operator};
use crate::types::{Obj, State, TypeHierarchy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("sampler dataset has no positive examples")]
    EmptyDataset,
    #[error("no accepted sample after {attempts} attempts")]
    Exhausted { attempts: usize },
    #[error("input has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Labeled `(input, θ)` pairs; the input concatenates the bound objects'
/// feature vectors in parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDataset<F> {
    pub theta_dim: usize,
    pub positives: Vec<(Vec<F>, Vec<F>)>,
    pub negatives: Vec<(Vec<F>, Vec<F>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "F: Float + Deserialize<'de>"))]
pub struct SamplerConfig<F> {
    pub k: usize,
    pub sigma_min: F,
    pub max_attempts: usize,
    /// Upper bound on alternative bindings tried per negative transition.
    pub max_negative_bindings: usize,
}

impl<F: Float> Default for SamplerConfig<F> {
    fn default() -> Self {
        Self {
            k: 5,
            sigma_min: F::from(1e-3).unwrap(),
            max_attempts: 100,
            max_negative_bindings: 4,
        }
    }
}

/// Feature vector of `objects` in `state`, concatenated in order.
pub fn input_vector<F: Float>(state: &State, objects: &[Obj]) -> Vec<F> {
    objects
        .iter()
        .flat_map(|o| state.objects.vector(o))
        .map(|x| F::from(x).unwrap())
        .collect()
}

fn to_float<F: Float>(v: &[f64]) -> Vec<F> {
    v.iter().map(|x| F::from(*x).unwrap()).collect()
}

/// Positives from the class members; negatives from same-skill transitions
/// outside the class, bound through the skill arguments.
pub fn build_dataset<F: Float>(
    class: &LearnedClass,
    transitions: &[Transition],
    demos: &[Demonstration],
    types: &TypeHierarchy,
    cfg: &SamplerConfig<F>,
) -> SamplerDataset<F> {
    let op = &class.operator;
    let mut positives = Vec::new();
    let mut members = std::collections::HashSet::new();
    for (t, sub) in &class.members {
        members.insert(*t);
        let tr = &transitions[*t];
        let state = &demos[tr.demo].states[tr.step];
        positives.push((input_vector(state, sub), to_float(&tr.action.theta)));
    }
    let mut negatives = Vec::new();
    for (i, tr) in transitions.iter().enumerate() {
        if members.contains(&i) || tr.action.skill.name != op.skill.name {
            continue;
        }
        let state = &demos[tr.demo].states[tr.step];
        for b in negative_bindings(op, tr, &demos[tr.demo].objects, types, cfg.max_negative_bindings) {
            negatives.push((input_vector(state, &b), to_float(&tr.action.theta)));
        }
    }
    SamplerDataset {
        theta_dim: op.skill.continuous_dim,
        positives,
        negatives,
    }
}

/// Bindings of `op.params` that agree with the transition's controller
/// arguments and satisfy the preconditions in its abstract pre-state.
fn negative_bindings(
    op: &Operator,
    tr: &Transition,
    objects: &[Obj],
    types: &TypeHierarchy,
    limit: usize,
) -> Vec<Vec<Obj>> {
    let mut fixed: HashMap<&str, Obj> = HashMap::new();
    for (v, o) in op.skill_args.iter().zip(&tr.action.objects) {
        if !types.is_subtype(&o.ty, &v.ty) {
            return vec![];
        }
        if let Some(prev) = fixed.insert(v.name.as_str(), o.clone()) {
            if prev != *o {
                return vec![];
            }
        }
    }
    let mut out = Vec::new();
    let mut chosen: Vec<Obj> = Vec::new();
    fn rec(
        i: usize,
        op: &Operator,
        tr: &Transition,
        objects: &[Obj],
        types: &TypeHierarchy,
        fixed: &HashMap<&str, Obj>,
        chosen: &mut Vec<Obj>,
        out: &mut Vec<Vec<Obj>>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        if i == op.params.len() {
            let g = op.ground(0, chosen);
            if g.preconditions.iter().all(|a| tr.state.contains(a)) {
                out.push(chosen.clone());
            }
            return;
        }
        let v = &op.params[i];
        let options: Vec<Obj> = match fixed.get(v.name.as_str()) {
            Some(o) => vec![o.clone()],
            None => objects.iter().filter(|o| types.is_subtype(&o.ty, &v.ty)).cloned().collect(),
        };
        for o in options {
            if chosen.contains(&o) {
                continue;
            }
            chosen.push(o);
            rec(i + 1, op, tr, objects, types, fixed, chosen, out, limit);
            chosen.pop();
        }
    }
    rec(0, op, tr, objects, types, &fixed, &mut chosen, &mut out, limit);
    out
}

/// k-NN vote over standardized `input ⊕ θ` points. Empty means accept-all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptModel<F> {
    pub k: usize,
    pub center: Vec<F>,
    pub scale: Vec<F>,
    pub points: Vec<Vec<F>>,
    pub labels: Vec<bool>,
}

impl<F: Float> AcceptModel<F> {
    pub fn accept_all() -> Self {
        Self {
            k: 1,
            center: vec![],
            scale: vec![],
            points: vec![],
            labels: vec![],
        }
    }

    pub fn fit(positives: &[Vec<F>], negatives: &[Vec<F>], k: usize) -> Self {
        if negatives.is_empty() {
            return Self::accept_all();
        }
        let all: Vec<&Vec<F>> = positives.iter().chain(negatives).collect();
        let dim = all[0].len();
        let n = F::from(all.len()).unwrap();
        let mut center = vec![F::zero(); dim];
        for p in &all {
            for (c, x) in center.iter_mut().zip(p.iter()) {
                *c = *c + *x / n;
            }
        }
        let mut scale = vec![F::zero(); dim];
        for p in &all {
            for ((s, x), c) in scale.iter_mut().zip(p.iter()).zip(&center) {
                *s = *s + (*x - *c) * (*x - *c) / n;
            }
        }
        let tiny = F::from(1e-12).unwrap();
        for s in &mut scale {
            *s = if *s > tiny { s.sqrt() } else { F::one() };
        }
        let standardize = |p: &Vec<F>| -> Vec<F> {
            p.iter().zip(&center).zip(&scale).map(|((x, c), s)| (*x - *c) / *s).collect()
        };
        let points = all.iter().map(|p| standardize(p)).collect();
        let labels = positives.iter().map(|_| true).chain(negatives.iter().map(|_| false)).collect();
        let k = k.clamp(1, all.len());
        let k = if k % 2 == 0 { k - 1 } else { k };
        Self {
            k,
            center,
            scale,
            points,
            labels,
        }
    }

    pub fn is_accept_all(&self) -> bool {
        self.points.is_empty()
    }

    /// Majority vote of the k nearest stored points; distance ties go to the
    /// earlier-stored point.
    pub fn accepts(&self, x: &[F]) -> bool {
        if self.is_accept_all() {
            return true;
        }
        let q: Vec<F> = x
            .iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((x, c), s)| (*x - *c) / *s)
            .collect();
        let mut d: Vec<(F, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let dist = p.iter().zip(&q).fold(F::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b));
                (dist, i)
            })
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let yes = d.iter().take(self.k).filter(|(_, i)| self.labels[*i]).count();
        2 * yes > self.k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSampler<F> {
    pub input_dim: usize,
    pub mean: Vec<F>,
    pub variance: Vec<F>,
    pub sigma_min: F,
    pub accept: AcceptModel<F>,
    pub max_attempts: usize,
}

impl<F: Float> OperatorSampler<F> {
    /// Maximum-likelihood diagonal Gaussian over the positives' θ, variance
    /// floored at `sigma_min`.
    pub fn fit(data: &SamplerDataset<F>, cfg: &SamplerConfig<F>) -> Result<Self, SamplerError> {
        let Some(first) = data.positives.first() else {
            return Err(SamplerError::EmptyDataset);
        };
        let input_dim = first.0.len();
        let d = data.theta_dim;
        let n = F::from(data.positives.len()).unwrap();
        let mut mean = vec![F::zero(); d];
        for (_, t) in &data.positives {
            for (m, x) in mean.iter_mut().zip(t) {
                *m = *m + *x;
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        let mut variance = vec![F::zero(); d];
        for (_, t) in &data.positives {
            for ((v, x), m) in variance.iter_mut().zip(t).zip(&mean) {
                *v = *v + (*x - *m) * (*x - *m);
            }
        }
        for v in &mut variance {
            *v = (*v / n).max(cfg.sigma_min);
        }
        let join = |(i, t): &(Vec<F>, Vec<F>)| -> Vec<F> { i.iter().chain(t).copied().collect() };
        let accept = if d == 0 {
            AcceptModel::accept_all()
        } else {
            let pos: Vec<Vec<F>> = data.positives.iter().map(join).collect();
            let neg: Vec<Vec<F>> = data.negatives.iter().map(join).collect();
            AcceptModel::fit(&pos, &neg, cfg.k)
        };
        Ok(Self {
            input_dim,
            mean,
            variance,
            sigma_min: cfg.sigma_min,
            accept,
            max_attempts: cfg.max_attempts,
        })
    }

    pub fn theta_dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws from the Gaussian until the accept model agrees.
    pub fn sample<R: Rng + ?Sized>(&self, input: &[F], rng: &mut R) -> Result<Vec<F>, SamplerError> {
        if self.theta_dim() == 0 {
            return Ok(vec![]);
        }
        if input.len() != self.input_dim {
            return Err(SamplerError::Dimension {
                expected: self.input_dim,
                got: input.len(),
            });
        }
        for _ in 0..self.max_attempts {
            let theta: Vec<F> = self
                .mean
                .iter()
                .zip(&self.variance)
                .map(|(m, v)| {
                    let z: f64 = rng.sample(StandardNormal);
                    *m + v.sqrt() * F::from(z).unwrap()
                })
                .collect();
            let joint: Vec<F> = input.iter().chain(&theta).copied().collect();
            if self.accept.accepts(&joint) {
                return Ok(theta);
            }
        }
        Err(SamplerError::Exhausted {
            attempts: self.max_attempts,
        })
    }
}

/// Fits one sampler per learned class, aligned with `classes`.
pub fn learn_samplers<F: Float>(
    classes: &[LearnedClass],
    transitions: &[Transition],
    demos: &[Demonstration],
    types: &TypeHierarchy,
    cfg: &SamplerConfig<F>,
) -> Vec<OperatorSampler<F>> {
    classes
        .iter()
        .map(|c| {
            let data = build_dataset(c, transitions, demos, types, cfg);
            OperatorSampler::fit(&data, cfg).expect("learned classes have at least one member")
        })
        .collect()
}
