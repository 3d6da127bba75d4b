//! Symbolic world-model learning: typed objects, predicates, operator
//! induction, predicate selection, planning and continuous samplers.

pub mod artifact;
pub mod atoms;
pub mod execute;
pub mod iso;
pub mod labeling;
pub mod learning;
pub mod listing;
pub mod operator;
pub mod pddl;
pub mod planner;
pub mod proposal;
pub mod sampler;
pub mod selection;
pub mod types;

pub type Sampler = sampler::OperatorSampler<f64>;
pub type SamplerDataset = sampler::SamplerDataset<f64>;
pub type SamplerConfig = sampler::SamplerConfig<f64>;
