//! Parameters, the three view encoders, gated fusion and the shared MLP
//! prediction head.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Entity, InteractionDataset};
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Matrix, Tape, Var};
use crate::views::{HypergraphPools, NormalizedAdjacency, ViewGraphs};

pub const DEFAULT_DIM: usize = 32;
pub const MLP_INIT_STD: f64 = 0.1;

/// Which view-specific group representations enter the fusion. A disabled
/// view has its gate forced to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewMask {
    pub member: bool,
    pub item: bool,
    pub group: bool,
}

impl Default for ViewMask {
    fn default() -> Self {
        Self::ALL
    }
}

impl ViewMask {
    pub const ALL: ViewMask = ViewMask {
        member: true,
        item: true,
        group: true,
    };

    pub fn without_member() -> Self {
        Self { member: false, ..Self::ALL }
    }

    pub fn without_item() -> Self {
        Self { item: false, ..Self::ALL }
    }

    pub fn without_group() -> Self {
        Self { group: false, ..Self::ALL }
    }
}

/// Three-layer perceptron `d → d → d → 1` with ReLU between layers and a
/// linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: [Matrix; 3],
    pub biases: [Matrix; 3],
}

impl Mlp {
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        for layer in 0..3 {
            let (w, b) = (&self.weights[layer], &self.biases[layer]);
            let mut next = b.data().to_vec();
            for (k, &a) in h.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &wv) in next.iter_mut().zip(w.row(k)) {
                    *o += a * wv;
                }
            }
            if layer < 2 {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = next;
        }
        h[0]
    }
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub users: Matrix,
    pub items: Matrix,
    pub groups: Matrix,
    /// 3d × d message fusion weight, shared across layers.
    pub fusion: Matrix,
    pub gate_member: Matrix,
    pub gate_item: Matrix,
    pub gate_group: Matrix,
    pub mlp: Mlp,
}

pub const TENSOR_NAMES: [&str; 13] = [
    "users",
    "items",
    "groups",
    "fusion",
    "gate_member",
    "gate_item",
    "gate_group",
    "mlp_w1",
    "mlp_b1",
    "mlp_w2",
    "mlp_b2",
    "mlp_w3",
    "mlp_b3",
];

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let normal = Normal::new(0.0, MLP_INIT_STD).expect("valid std");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

impl ModelParams {
    /// Glorot-uniform embeddings, fusion and gate weights; Gaussian MLP
    /// weights with zero biases.
    pub fn init<R: Rng + ?Sized>(num_users: usize, num_items: usize, num_groups: usize, dim: usize, rng: &mut R) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        let users = glorot(num_users, dim, dim, dim, rng);
        let items = glorot(num_items, dim, dim, dim, rng);
        let groups = glorot(num_groups, dim, dim, dim, rng);
        let fusion = glorot(3 * dim, dim, 3 * dim, dim, rng);
        let gate_member = glorot(dim, 1, dim, 1, rng);
        let gate_item = glorot(dim, 1, dim, 1, rng);
        let gate_group = glorot(dim, 1, dim, 1, rng);
        let mlp = Mlp {
            weights: [gaussian(dim, dim, rng), gaussian(dim, dim, rng), gaussian(dim, 1, rng)],
            biases: [Matrix::zeros(1, dim), Matrix::zeros(1, dim), Matrix::zeros(1, 1)],
        };
        Self {
            users,
            items,
            groups,
            fusion,
            gate_member,
            gate_item,
            gate_group,
            mlp,
        }
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn num_users(&self) -> usize {
        self.users.rows()
    }

    pub fn num_items(&self) -> usize {
        self.items.rows()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.rows()
    }

    /// Tensors in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&Matrix; 13] {
        let [w1, w2, w3] = &self.mlp.weights;
        let [b1, b2, b3] = &self.mlp.biases;
        [
            &self.users,
            &self.items,
            &self.groups,
            &self.fusion,
            &self.gate_member,
            &self.gate_item,
            &self.gate_group,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 13] {
        let [w1, w2, w3] = &mut self.mlp.weights;
        let [b1, b2, b3] = &mut self.mlp.biases;
        [
            &mut self.users,
            &mut self.items,
            &mut self.groups,
            &mut self.fusion,
            &mut self.gate_member,
            &mut self.gate_item,
            &mut self.gate_group,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        ]
    }

    /// Expected `(rows, cols)` of every tensor, in [`TENSOR_NAMES`] order.
    pub fn expected_shapes(num_users: usize, num_items: usize, num_groups: usize, dim: usize) -> [(usize, usize); 13] {
        let d = dim;
        [
            (num_users, d),
            (num_items, d),
            (num_groups, d),
            (3 * d, d),
            (d, 1),
            (d, 1),
            (d, 1),
            (d, d),
            (1, d),
            (d, d),
            (1, d),
            (d, 1),
            (1, 1),
        ]
    }

    /// Assembles parameters from tensors in [`TENSOR_NAMES`] order,
    /// checking every shape against the first table's width.
    pub fn from_tensors(tensors: Vec<Matrix>) -> Result<Self> {
        let [users, items, groups, fusion, gate_member, gate_item, gate_group, w1, b1, w2, b2, w3, b3]: [Matrix; 13] =
            tensors
                .try_into()
                .map_err(|v: Vec<Matrix>| Error::Config(format!("expected 13 tensors, got {}", v.len())))?;
        let p = Self {
            users,
            items,
            groups,
            fusion,
            gate_member,
            gate_item,
            gate_group,
            mlp: Mlp {
                weights: [w1, w2, w3],
                biases: [b1, b2, b3],
            },
        };
        let want = Self::expected_shapes(p.num_users(), p.num_items(), p.num_groups(), p.dim());
        for ((name, t), shape) in TENSOR_NAMES.iter().zip(p.tensors()).zip(want) {
            if t.shape() != shape {
                return Err(Error::Config(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
        }
        Ok(p)
    }

    /// Registers every tensor as a tape parameter, in [`TENSOR_NAMES`] order.
    pub fn bind(&self, tape: &mut Tape) -> ParamVars {
        let [users, items, groups, fusion, gate_member, gate_item, gate_group, w1, b1, w2, b2, w3, b3] =
            self.tensors().map(|m| tape.param(m.clone()));
        ParamVars {
            users,
            items,
            groups,
            fusion,
            gate_member,
            gate_item,
            gate_group,
            mlp_weights: [w1, w2, w3],
            mlp_biases: [b1, b2, b3],
        }
    }

    fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
        if index < len {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { what, index, len })
        }
    }

    /// Group score `MLP(ḡ_t ⊙ ī_j)` from fused group and refined item tables.
    pub fn predict_group(&self, group: usize, item: usize, out: &ForwardOutputs) -> Result<f64> {
        Self::check_index("group", group, out.group_fused.rows())?;
        Self::check_index("item", item, out.items_refined.rows())?;
        Ok(self.mlp.score(&hadamard_row(out.group_fused.row(group), out.items_refined.row(item))))
    }

    /// User score `MLP(u_s ⊙ i_j)` from the base tables.
    pub fn predict_user(&self, user: usize, item: usize) -> Result<f64> {
        Self::check_index("user", user, self.num_users())?;
        Self::check_index("item", item, self.num_items())?;
        Ok(self.mlp.score(&hadamard_row(self.users.row(user), self.items.row(item))))
    }

    pub fn score_candidates(&self, entity: Entity, items: &[usize], out: &ForwardOutputs) -> Result<Vec<f64>> {
        items
            .iter()
            .map(|&j| match entity {
                Entity::Group(t) => self.predict_group(t, j, out),
                Entity::User(s) => self.predict_user(s, j),
            })
            .collect()
    }
}

fn hadamard_row(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Tape handles of all parameters.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub users: Var,
    pub items: Var,
    pub groups: Var,
    pub fusion: Var,
    pub gate_member: Var,
    pub gate_item: Var,
    pub gate_group: Var,
    pub mlp_weights: [Var; 3],
    pub mlp_biases: [Var; 3],
}

/// Applies the shared MLP to every row of `x`, giving an n×1 node.
pub fn mlp_on_tape(tape: &mut Tape, vars: &ParamVars, x: Var) -> Result<Var> {
    let mut h = x;
    for layer in 0..3 {
        let z = tape.matmul(h, vars.mlp_weights[layer])?;
        let z = tape.add_bias(z, vars.mlp_biases[layer])?;
        h = if layer < 2 { tape.relu(z)? } else { z };
    }
    Ok(h)
}

/// Member-level hypergraph propagation. Returns the layer-averaged hyperedge
/// messages (K×d) and the layer-averaged item node states (N×d).
pub fn phgnn_forward(tape: &mut Tape, pools: &HypergraphPools, vars: &ParamVars, layers: usize) -> Result<(Var, Var)> {
    let mut user_state = vars.users;
    let mut item_state = vars.items;
    let mut messages = Vec::with_capacity(layers + 1);
    let mut item_states = vec![item_state];
    for l in 0..=layers {
        let from_members = tape.segment_mean(&pools.edge_members, user_state)?;
        let from_items = tape.segment_mean(&pools.edge_items, item_state)?;
        let with_group = tape.hadamard(from_items, vars.groups)?;
        let joined = tape.concat_cols(&[from_members, from_items, with_group])?;
        let message = tape.matmul(joined, vars.fusion)?;
        messages.push(message);
        if l < layers {
            user_state = tape.segment_mean(&pools.user_edges, message)?;
            item_state = tape.segment_mean(&pools.item_edges, message)?;
            item_states.push(item_state);
        }
    }
    let group_member = tape.mean_over(&messages)?;
    let items_refined = tape.mean_over(&item_states)?;
    Ok((group_member, items_refined))
}

fn propagate(tape: &mut Tape, adj: &NormalizedAdjacency, start: Var, layers: usize) -> Result<Var> {
    let mut states = vec![start];
    let mut cur = start;
    for _ in 0..layers {
        cur = tape.sparse_matmul(adj.matrix(), cur)?;
        states.push(cur);
    }
    Ok(tape.mean_over(&states)?)
}

/// Item-level convolution over the stacked `[G; I]` table. Returns the group
/// half (K×d) and item half (N×d) of the layer average.
pub fn item_view_forward(tape: &mut Tape, adj: &NormalizedAdjacency, vars: &ParamVars, layers: usize) -> Result<(Var, Var)> {
    let k = tape.shape(vars.groups).0;
    let n = tape.shape(vars.items).0;
    if adj.size() != k + n {
        return Err(crate::tensor::TensorError::Shape {
            op: "item_view_forward",
            lhs: (adj.size(), adj.size()),
            rhs: (k + n, tape.shape(vars.groups).1),
        }
        .into());
    }
    let stacked = tape.concat_rows(&[vars.groups, vars.items])?;
    let mean = propagate(tape, adj, stacked, layers)?;
    let groups = tape.row_select(mean, (0..k).collect::<Vec<_>>())?;
    let items = tape.row_select(mean, (k..k + n).collect::<Vec<_>>())?;
    Ok((groups, items))
}

/// Group-level convolution over the weighted group graph.
pub fn group_view_forward(tape: &mut Tape, adj: &NormalizedAdjacency, vars: &ParamVars, layers: usize) -> Result<Var> {
    let k = tape.shape(vars.groups).0;
    if adj.size() != k {
        return Err(crate::tensor::TensorError::Shape {
            op: "group_view_forward",
            lhs: (adj.size(), adj.size()),
            rhs: tape.shape(vars.groups),
        }
        .into());
    }
    propagate(tape, adj, vars.groups, layers)
}

/// Gated fusion outputs on the tape. Disabled views have no gate node.
#[derive(Debug, Clone, Copy)]
pub struct FusedVars {
    pub fused: Var,
    pub gates: [Option<Var>; 3],
}

/// `Ḡ = α·Gm + β·Gi + γ·Gg` with per-group logistic gates.
pub fn fuse(
    tape: &mut Tape,
    views: [Var; 3],
    vars: &ParamVars,
    mask: ViewMask,
) -> Result<FusedVars> {
    let gate_weights = [vars.gate_member, vars.gate_item, vars.gate_group];
    let enabled = [mask.member, mask.item, mask.group];
    let mut gates = [None; 3];
    let mut terms = Vec::with_capacity(3);
    for v in 0..3 {
        if !enabled[v] {
            continue;
        }
        let logits = tape.matmul(views[v], gate_weights[v])?;
        let gate = tape.sigmoid(logits)?;
        gates[v] = Some(gate);
        terms.push(tape.scale_rows(views[v], gate)?);
    }
    let fused = match terms.as_slice() {
        [] => tape.scale(views[0], 0.0)?,
        [first, rest @ ..] => {
            let mut acc = *first;
            for &t in rest {
                acc = tape.add(acc, t)?;
            }
            acc
        }
    };
    Ok(FusedVars { fused, gates })
}

/// Forward results kept on the tape for loss construction.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub group_member: Var,
    pub items_refined: Var,
    pub group_item: Var,
    pub items_item: Var,
    pub group_group: Var,
    pub fused: FusedVars,
}

/// Materialized forward results.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    pub group_member: Matrix,
    pub items_refined: Matrix,
    pub group_item: Matrix,
    /// Item half of the bipartite convolution; not used for scoring.
    pub items_item: Matrix,
    pub group_group: Matrix,
    pub group_fused: Matrix,
    /// K×3 gate values (α, β, γ); zero for disabled views.
    pub gates: Matrix,
}

/// Model structure: the view graphs plus layer count and view mask.
/// Counts view propagation passes so callers can verify that scoring never
/// triggers extra propagation.
#[derive(Debug)]
pub struct ConsensusModel {
    graphs: ViewGraphs,
    layers: usize,
    views: ViewMask,
    propagation_passes: AtomicUsize,
}

impl ConsensusModel {
    pub fn new(train: &InteractionDataset, layers: usize, views: ViewMask, group_self_loops: bool) -> Self {
        Self::from_graphs(ViewGraphs::build(train, group_self_loops), layers, views)
    }

    pub fn from_graphs(graphs: ViewGraphs, layers: usize, views: ViewMask) -> Self {
        Self {
            graphs,
            layers,
            views,
            propagation_passes: AtomicUsize::new(0),
        }
    }

    pub fn graphs(&self) -> &ViewGraphs {
        &self.graphs
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn views(&self) -> ViewMask {
        self.views
    }

    /// Number of view propagations run so far (three per forward).
    pub fn propagation_passes(&self) -> usize {
        self.propagation_passes.load(Ordering::Relaxed)
    }

    fn check_params(&self, p: &ModelParams) -> Result<()> {
        let g = &self.graphs;
        if (p.num_users(), p.num_items(), p.num_groups()) != (g.num_users(), g.num_items(), g.num_groups()) {
            return Err(Error::Config(format!(
                "parameters cover {} users/{} items/{} groups but the graphs have {}/{}/{}",
                p.num_users(),
                p.num_items(),
                p.num_groups(),
                g.num_users(),
                g.num_items(),
                g.num_groups()
            )));
        }
        Ok(())
    }

    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &ParamVars) -> Result<ForwardVars> {
        let g = &self.graphs;
        let (group_member, items_refined) = phgnn_forward(tape, &g.pools, vars, self.layers)?;
        self.propagation_passes.fetch_add(1, Ordering::Relaxed);
        let (group_item, items_item) = item_view_forward(tape, &g.item_adjacency, vars, self.layers)?;
        self.propagation_passes.fetch_add(1, Ordering::Relaxed);
        let group_group = group_view_forward(tape, &g.group_adjacency, vars, self.layers)?;
        self.propagation_passes.fetch_add(1, Ordering::Relaxed);
        let fused = fuse(tape, [group_member, group_item, group_group], vars, self.views)?;
        Ok(ForwardVars {
            group_member,
            items_refined,
            group_item,
            items_item,
            group_group,
            fused,
        })
    }

    /// Runs all three views once and materializes the results.
    pub fn forward(&self, params: &ModelParams) -> Result<ForwardOutputs> {
        self.check_params(params)?;
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let f = self.forward_on_tape(&mut tape, &vars)?;
        let k = params.num_groups();
        let mut gates = Matrix::zeros(k, 3);
        for (v, gate) in f.fused.gates.iter().enumerate() {
            if let Some(gate) = gate {
                for t in 0..k {
                    gates.set(t, v, tape.value(*gate).get(t, 0));
                }
            }
        }
        Ok(ForwardOutputs {
            group_member: tape.value(f.group_member).clone(),
            items_refined: tape.value(f.items_refined).clone(),
            group_item: tape.value(f.group_item).clone(),
            items_item: tape.value(f.items_item).clone(),
            group_group: tape.value(f.group_group).clone(),
            group_fused: tape.value(f.fused.fused).clone(),
            gates,
        })
    }
}

/// Logistic gate value for one row, used by tests and diagnostics.
pub fn gate_value(row: &[f64], weight: &Matrix) -> f64 {
    sigmoid(row.iter().zip(weight.data()).map(|(a, b)| a * b).sum())
}
