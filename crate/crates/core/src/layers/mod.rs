//! The three layer kinds a network can be assembled from.
//!
//! * [`SalLayer`]: hard-routed area layer trained with a broadcast global
//!   error, a local error through a frozen feedback matrix, and a selector
//!   trained on its own auxiliary loss.
//! * [`FcLayer`]: plain dense layer trained by exact backpropagation.
//! * [`MoeLayer`]: top-1 gated mixture of experts trained by backpropagation.
//!
//! All three produce a [`LayerCache`] from their forward pass; the update
//! entry points read only that cache (plus the error signal they are handed).

mod fc;
mod moe;
mod sal;

pub use fc::{FcGrads, FcLayer};
pub use moe::{MoeGrads, MoeLayer};
pub use sal::{AreaGrad, SalLayer, SalLayerShape, SalRates};

use crate::numerics::{Matrix, Prng};

/// Per-sample routing outcome of one layer.
///
/// For SAL layers `features` holds the selector projection `z` and `scores`
/// the prototype matching scores `p`. For MoE layers `features` holds the gate
/// logits and `scores` the gate softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDecision {
    pub features: Matrix,
    pub scores: Matrix,
    pub selected: Vec<usize>,
}

impl RoutingDecision {
    /// Sample indices per area, in batch order. Empty for unselected areas.
    pub fn groups(&self, n_areas: usize) -> Vec<Vec<usize>> {
        group_by_area(&self.selected, n_areas)
    }
}

pub(crate) fn group_by_area(selected: &[usize], n_areas: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); n_areas];
    for (i, &k) in selected.iter().enumerate() {
        groups[k].push(i);
    }
    groups
}

/// Everything the update phase needs to re-read from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    pub input: Matrix,
    /// Absent for fully connected layers.
    pub routing: Option<RoutingDecision>,
    pub preactivation: Matrix,
    pub output: Matrix,
    /// Whether `output` includes the identity skip `+ input`.
    pub residual: bool,
}

impl LayerCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Role {
    Weights = 0,
    Selector = 1,
    Gate = 2,
    Prototypes = 3,
    Feedback = 4,
}

/// Seeded sub-streams for parameter initialization.
///
/// Each (layer, role, index) triple draws from its own stream, so layer `l`'s
/// first area in a SAL network, its FC weights in a BP network and its first
/// expert in an MoE network are identical for the same seed. Frozen matrices
/// come from a separate root so they can be varied independently.
#[derive(Debug, Clone)]
pub struct InitStreams {
    learnable: Prng,
    frozen: Prng,
}

impl InitStreams {
    pub fn new(learnable_seed: u64, frozen_seed: u64) -> Self {
        Self {
            learnable: Prng::new(learnable_seed),
            frozen: Prng::new(frozen_seed),
        }
    }

    fn tag(layer: usize, role: Role, index: usize) -> u64 {
        ((layer as u64) << 32) | ((role as u64) << 24) | index as u64
    }

    pub fn weights(&self, layer: usize, index: usize) -> Prng {
        self.learnable
            .derive(Self::tag(layer, Role::Weights, index))
    }

    pub fn selector(&self, layer: usize) -> Prng {
        self.learnable.derive(Self::tag(layer, Role::Selector, 0))
    }

    pub fn gate(&self, layer: usize) -> Prng {
        self.learnable.derive(Self::tag(layer, Role::Gate, 0))
    }

    pub fn prototypes(&self, layer: usize) -> Prng {
        self.frozen.derive(Self::tag(layer, Role::Prototypes, 0))
    }

    pub fn feedback(&self, layer: usize) -> Prng {
        self.frozen.derive(Self::tag(layer, Role::Feedback, 0))
    }
}

/// `φ(u) (+ x)`.
pub(crate) fn activate(
    activation: crate::numerics::Activation,
    u: &Matrix,
    x: &Matrix,
    residual: bool,
) -> crate::Result<Matrix> {
    let mut h = activation.apply(u);
    if residual {
        h.axpy(1.0, x)?;
    }
    Ok(h)
}
