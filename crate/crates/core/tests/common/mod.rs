//! Dense brute-force reference implementations used as test oracles. Nothing
//! here touches the sparse operators, the tape or the view builders.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use grouprec::model::{ModelParams, ViewMask};
use grouprec::tensor::Matrix;
use grouprec::InteractionDataset;
use rand::Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

pub fn max_abs_diff(a: &Dense, b: &Matrix) -> f64 {
    assert_eq!((a.len(), a.first().map_or(b.cols(), Vec::len)), b.shape(), "shape");
    let mut worst = 0.0f64;
    for (r, row) in a.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(r, c)).abs());
        }
    }
    worst
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn scaled(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| v * s).collect()
}

fn mean_rows(rows: &[&[f64]], d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    if rows.is_empty() {
        return acc;
    }
    for r in rows {
        add_into(&mut acc, r);
    }
    scaled(&acc, 1.0 / rows.len() as f64)
}

fn vec_mat(x: &[f64], w: &Dense) -> Vec<f64> {
    let cols = w[0].len();
    (0..cols).map(|c| x.iter().zip(w).map(|(a, row)| a * row[c]).sum()).collect()
}

fn mat_mul(a: &Dense, b: &Dense) -> Dense {
    a.iter().map(|row| vec_mat(row, b)).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Group-graph weights from explicit set arithmetic, keyed by `(p, q)` with p < q.
pub fn group_weights(d: &InteractionDataset) -> BTreeMap<(usize, usize), f64> {
    let sets: Vec<(BTreeSet<usize>, BTreeSet<usize>)> = (0..d.num_groups())
        .map(|g| {
            (
                d.rosters()[g].iter().copied().collect(),
                d.group_items()[g].iter().copied().collect(),
            )
        })
        .collect();
    let mut out = BTreeMap::new();
    for p in 0..sets.len() {
        for q in p + 1..sets.len() {
            let (gp, yp) = &sets[p];
            let (gq, yq) = &sets[q];
            let inter = gp.intersection(gq).count() + yp.intersection(yq).count();
            if inter == 0 {
                continue;
            }
            let union = gp.union(gq).count() + yp.union(yq).count();
            out.insert((p, q), inter as f64 / union as f64);
        }
    }
    out
}

/// `D^{-1/2} A D^{-1/2}` with zero scaling for isolated nodes.
pub fn normalize(a: &Dense) -> Dense {
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let inv: Vec<f64> = deg.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 }).collect();
    a.iter()
        .enumerate()
        .map(|(p, row)| row.iter().enumerate().map(|(q, &v)| inv[p] * v * inv[q]).collect())
        .collect()
}

pub fn item_adjacency(d: &InteractionDataset) -> Dense {
    let (k, n) = (d.num_groups(), d.num_items());
    let mut a = zeros(k + n, k + n);
    for (t, items) in d.group_items().iter().enumerate() {
        for &j in items {
            a[t][k + j] = 1.0;
            a[k + j][t] = 1.0;
        }
    }
    a
}

pub fn group_adjacency(d: &InteractionDataset, self_loops: bool) -> Dense {
    let k = d.num_groups();
    let mut a = zeros(k, k);
    for ((p, q), w) in group_weights(d) {
        a[p][q] = w;
        a[q][p] = w;
    }
    if self_loops {
        for (t, row) in a.iter_mut().enumerate() {
            row[t] = 1.0;
        }
    }
    a
}

fn propagate_mean(adj: &Dense, start: Dense, layers: usize) -> Dense {
    let mut acc = start.clone();
    let mut cur = start;
    for _ in 0..layers {
        cur = mat_mul(adj, &cur);
        for (a, c) in acc.iter_mut().zip(&cur) {
            add_into(a, c);
        }
    }
    acc.iter().map(|r| scaled(r, 1.0 / (layers + 1) as f64)).collect()
}

pub struct OracleOutputs {
    pub group_member: Dense,
    pub items_refined: Dense,
    pub group_item: Dense,
    pub items_item: Dense,
    pub group_group: Dense,
    pub group_fused: Dense,
    pub gates: Dense,
}

/// Member hypergraph propagation written as explicit loops over rosters,
/// item sets and node memberships.
pub fn member_view(d: &InteractionDataset, p: &ModelParams, layers: usize) -> (Dense, Dense) {
    let dim = p.dim();
    let (m, n, k) = (d.num_users(), d.num_items(), d.num_groups());
    let base_groups = dense(&p.groups);
    let wf = dense(&p.fusion);
    let mut users = dense(&p.users);
    let mut items = dense(&p.items);
    let mut msg_sum = zeros(k, dim);
    let mut item_sum = items.clone();
    for l in 0..=layers {
        let mut messages = Vec::with_capacity(k);
        for t in 0..k {
            let mu = mean_rows(&d.rosters()[t].iter().map(|&u| users[u].as_slice()).collect::<Vec<_>>(), dim);
            let mi = mean_rows(&d.group_items()[t].iter().map(|&j| items[j].as_slice()).collect::<Vec<_>>(), dim);
            let prod: Vec<f64> = mi.iter().zip(&base_groups[t]).map(|(a, b)| a * b).collect();
            let x: Vec<f64> = mu.iter().chain(&mi).chain(&prod).copied().collect();
            messages.push(vec_mat(&x, &wf));
        }
        for t in 0..k {
            add_into(&mut msg_sum[t], &messages[t]);
        }
        if l == layers {
            break;
        }
        users = (0..m)
            .map(|u| {
                let incident: Vec<&[f64]> = (0..k)
                    .filter(|&t| d.rosters()[t].contains(&u))
                    .map(|t| messages[t].as_slice())
                    .collect();
                mean_rows(&incident, dim)
            })
            .collect();
        items = (0..n)
            .map(|j| {
                let incident: Vec<&[f64]> = (0..k)
                    .filter(|&t| d.group_items()[t].contains(&j))
                    .map(|t| messages[t].as_slice())
                    .collect();
                mean_rows(&incident, dim)
            })
            .collect();
        for j in 0..n {
            add_into(&mut item_sum[j], &items[j]);
        }
    }
    let s = 1.0 / (layers + 1) as f64;
    (
        msg_sum.iter().map(|r| scaled(r, s)).collect(),
        item_sum.iter().map(|r| scaled(r, s)).collect(),
    )
}

pub fn forward(d: &InteractionDataset, p: &ModelParams, layers: usize, mask: ViewMask, self_loops: bool) -> OracleOutputs {
    let k = d.num_groups();
    let (group_member, items_refined) = member_view(d, p, layers);

    let mut stacked = dense(&p.groups);
    stacked.extend(dense(&p.items));
    let mut item_mean = propagate_mean(&normalize(&item_adjacency(d)), stacked, layers);
    let items_item = item_mean.split_off(k);
    let group_item = item_mean;

    let group_group = propagate_mean(&normalize(&group_adjacency(d, self_loops)), dense(&p.groups), layers);

    let weights = [&p.gate_member, &p.gate_item, &p.gate_group];
    let enabled = [mask.member, mask.item, mask.group];
    let views = [&group_member, &group_item, &group_group];
    let mut gates = zeros(k, 3);
    let mut fused = zeros(k, p.dim());
    for t in 0..k {
        for v in 0..3 {
            if !enabled[v] {
                continue;
            }
            let logit: f64 = views[v][t].iter().zip(weights[v].data()).map(|(a, b)| a * b).sum();
            gates[t][v] = sigmoid(logit);
            add_into(&mut fused[t], &scaled(&views[v][t], gates[t][v]));
        }
    }
    OracleOutputs {
        group_member,
        items_refined,
        group_item,
        items_item,
        group_group,
        group_fused: fused,
        gates,
    }
}

pub fn mlp(p: &ModelParams, x: &[f64]) -> f64 {
    let mut h = x.to_vec();
    for layer in 0..3 {
        let mut z = vec_mat(&h, &dense(&p.mlp.weights[layer]));
        add_into(&mut z, p.mlp.biases[layer].data());
        h = if layer < 2 { z.into_iter().map(|v| v.max(0.0)).collect() } else { z };
    }
    h[0]
}

/// Random small dataset; every group has at least one member, everything
/// else may be empty.
pub fn random_dataset<R: Rng>(rng: &mut R, max_users: usize, max_items: usize, max_groups: usize) -> InteractionDataset {
    let m = rng.random_range(1..=max_users);
    let n = rng.random_range(1..=max_items);
    let k = rng.random_range(1..=max_groups);
    random_dataset_sized(rng, m, n, k, 0.4)
}

pub fn random_dataset_sized<R: Rng>(rng: &mut R, m: usize, n: usize, k: usize, density: f64) -> InteractionDataset {
    let subset = |rng: &mut R, size: usize| -> Vec<usize> { (0..size).filter(|_| rng.random_bool(density)).collect() };
    let rosters = (0..k)
        .map(|_| {
            let mut r = subset(rng, m);
            if r.is_empty() {
                r.push(rng.random_range(0..m));
            }
            r
        })
        .collect();
    let group_items = (0..k).map(|_| subset(rng, n)).collect();
    let user_items = (0..m).map(|_| subset(rng, n)).collect();
    InteractionDataset::new(m, n, rosters, group_items, user_items).unwrap()
}

/// Random parameters with every tensor (biases included) away from zero.
pub fn random_params<R: Rng>(rng: &mut R, d: &InteractionDataset, dim: usize) -> ModelParams {
    let shapes = ModelParams::expected_shapes(d.num_users(), d.num_items(), d.num_groups(), dim);
    let tensors = shapes
        .iter()
        .map(|&(r, c)| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-0.8..0.8)).collect()).unwrap())
        .collect();
    ModelParams::from_tensors(tensors).unwrap()
}
