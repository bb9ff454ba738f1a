//! The three graph views built from training interactions: the member-level
//! hypergraph, the group–item bipartite graph and the weighted group graph.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::tensor::{SegmentPool, SparseMatrix};

/// Hypergraph over `num_users + num_items` nodes (users first, then items)
/// with one hyperedge per group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberHypergraph {
    num_users: usize,
    num_items: usize,
    edge_nodes: Vec<Vec<usize>>,
    member_counts: Vec<usize>,
    node_edges: Vec<Vec<usize>>,
}

impl MemberHypergraph {
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_hyperedges(&self) -> usize {
        self.edge_nodes.len()
    }

    /// Sorted node ids of hyperedge `e`.
    pub fn edge_nodes(&self, e: usize) -> &[usize] {
        &self.edge_nodes[e]
    }

    /// Member part of hyperedge `e` (node ids below `num_users`).
    pub fn member_nodes(&self, e: usize) -> &[usize] {
        &self.edge_nodes[e][..self.member_counts[e]]
    }

    /// Item part of hyperedge `e` as node ids (offset by `num_users`).
    pub fn item_nodes(&self, e: usize) -> &[usize] {
        &self.edge_nodes[e][self.member_counts[e]..]
    }

    /// Sorted hyperedge ids incident to node `v`.
    pub fn node_edges(&self, v: usize) -> &[usize] {
        &self.node_edges[v]
    }

    /// Mean-pooling operators used by hypergraph propagation.
    pub fn pools(&self) -> HypergraphPools {
        let m = self.num_users;
        let k = self.num_hyperedges();
        let edge_members = (0..k).map(|e| self.member_nodes(e).to_vec()).collect();
        let edge_items = (0..k)
            .map(|e| self.item_nodes(e).iter().map(|v| v - m).collect())
            .collect();
        let user_edges = self.node_edges[..m].to_vec();
        let item_edges = self.node_edges[m..].to_vec();
        let pool = |rows, segs| Arc::new(SegmentPool::new(rows, segs).expect("ids in range by construction"));
        HypergraphPools {
            edge_members: pool(m, edge_members),
            edge_items: pool(self.num_items, edge_items),
            user_edges: pool(k, user_edges),
            item_edges: pool(k, item_edges),
        }
    }
}

/// Node→hyperedge and hyperedge→node mean-pooling operators.
#[derive(Debug, Clone)]
pub struct HypergraphPools {
    /// K segments over user rows.
    pub edge_members: Arc<SegmentPool>,
    /// K segments over item rows.
    pub edge_items: Arc<SegmentPool>,
    /// M segments over hyperedge rows.
    pub user_edges: Arc<SegmentPool>,
    /// N segments over hyperedge rows.
    pub item_edges: Arc<SegmentPool>,
}

pub fn build_member_hypergraph(d: &InteractionDataset) -> MemberHypergraph {
    let m = d.num_users();
    let mut node_edges = vec![Vec::new(); m + d.num_items()];
    let mut edge_nodes = Vec::with_capacity(d.num_groups());
    let mut member_counts = Vec::with_capacity(d.num_groups());
    for (t, (roster, items)) in d.rosters().iter().zip(d.group_items()).enumerate() {
        let nodes: Vec<usize> = roster.iter().copied().chain(items.iter().map(|j| m + j)).collect();
        for &v in &nodes {
            node_edges[v].push(t);
        }
        member_counts.push(roster.len());
        edge_nodes.push(nodes);
    }
    MemberHypergraph {
        num_users: m,
        num_items: d.num_items(),
        edge_nodes,
        member_counts,
        node_edges,
    }
}

/// Symmetric degree-normalized adjacency `D^{-1/2} A D^{-1/2}`. Zero-degree
/// nodes have all-zero rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Arc<SparseMatrix>,
}

impl NormalizedAdjacency {
    /// Normalizes the symmetric adjacency given by an undirected edge list.
    /// Each `(p, q, w)` contributes `w` at `(p, q)` and `(q, p)`; a self-loop
    /// `(p, p, w)` contributes `w` once.
    pub fn from_undirected(size: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut degree = vec![0.0; size];
        for &(p, q, w) in edges {
            if p >= size || q >= size {
                return Err(Error::IndexOutOfRange {
                    what: "adjacency node",
                    index: p.max(q),
                    len: size,
                });
            }
            degree[p] += w;
            if p != q {
                degree[q] += w;
            }
        }
        let inv_sqrt: Vec<f64> = degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut triplets = Vec::with_capacity(edges.len() * 2);
        for &(p, q, w) in edges {
            let v = w * inv_sqrt[p] * inv_sqrt[q];
            triplets.push((p, q, v));
            if p != q {
                triplets.push((q, p, v));
            }
        }
        Ok(Self {
            matrix: Arc::new(SparseMatrix::from_triplets(size, size, triplets)?),
        })
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.matrix.get(p, q)
    }

    pub fn matrix(&self) -> &Arc<SparseMatrix> {
        &self.matrix
    }
}

/// Group–item bipartite graph of size `K + N`: groups are nodes `0..K`,
/// items `K..K+N`.
pub fn build_item_bipartite(d: &InteractionDataset) -> NormalizedAdjacency {
    let k = d.num_groups();
    let edges: Vec<_> = d
        .group_items()
        .iter()
        .enumerate()
        .flat_map(|(t, items)| items.iter().map(move |&j| (t, k + j, 1.0)))
        .collect();
    NormalizedAdjacency::from_undirected(k + d.num_items(), &edges).expect("ids in range by construction")
}

/// Groups linked by shared members or items, weighted by overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupGraph {
    pub num_groups: usize,
    /// `(p, q, weight)` with `p < q`, sorted.
    pub weighted_edges: Vec<(usize, usize, f64)>,
}

/// Streams candidate pairs through member→groups and item→groups inverted
/// indexes; a pair gets an edge iff it shares a member or an item, with
/// weight `(|Gp∩Gq| + |Yp∩Yq|) / (|Gp∪Gq| + |Yp∪Yq|)`.
pub fn build_group_graph(d: &InteractionDataset) -> GroupGraph {
    let k = d.num_groups();
    let mut groups_of_user = vec![Vec::new(); d.num_users()];
    let mut groups_of_item = vec![Vec::new(); d.num_items()];
    for t in 0..k {
        for &u in d.roster(t) {
            groups_of_user[u].push(t);
        }
        for &j in &d.group_items()[t] {
            groups_of_item[j].push(t);
        }
    }

    let mut shared_members = vec![0usize; k];
    let mut shared_items = vec![0usize; k];
    let mut touched = Vec::new();
    let mut edges = Vec::new();
    for p in 0..k {
        for &u in d.roster(p) {
            for &q in groups_of_user[u].iter().filter(|&&q| q > p) {
                if shared_members[q] == 0 && shared_items[q] == 0 {
                    touched.push(q);
                }
                shared_members[q] += 1;
            }
        }
        for &j in &d.group_items()[p] {
            for &q in groups_of_item[j].iter().filter(|&&q| q > p) {
                if shared_members[q] == 0 && shared_items[q] == 0 {
                    touched.push(q);
                }
                shared_items[q] += 1;
            }
        }
        touched.sort_unstable();
        let (mp, ip) = (d.roster(p).len(), d.group_items()[p].len());
        for &q in &touched {
            let (cm, ci) = (shared_members[q], shared_items[q]);
            let union = mp + d.roster(q).len() - cm + ip + d.group_items()[q].len() - ci;
            edges.push((p, q, (cm + ci) as f64 / union as f64));
            shared_members[q] = 0;
            shared_items[q] = 0;
        }
        touched.clear();
    }
    GroupGraph {
        num_groups: k,
        weighted_edges: edges,
    }
}

/// Symmetric normalization of the group graph, optionally with weight-1
/// self-loops added first.
pub fn normalize_group_graph(g: &GroupGraph, self_loops: bool) -> NormalizedAdjacency {
    let mut edges = g.weighted_edges.clone();
    if self_loops {
        edges.extend((0..g.num_groups).map(|t| (t, t, 1.0)));
    }
    NormalizedAdjacency::from_undirected(g.num_groups, &edges).expect("ids in range by construction")
}

/// All three views for one training dataset.
#[derive(Debug, Clone)]
pub struct ViewGraphs {
    pub hypergraph: MemberHypergraph,
    pub pools: HypergraphPools,
    pub item_adjacency: NormalizedAdjacency,
    pub group_graph: GroupGraph,
    pub group_adjacency: NormalizedAdjacency,
}

impl ViewGraphs {
    pub fn build(d: &InteractionDataset, group_self_loops: bool) -> Self {
        let hypergraph = build_member_hypergraph(d);
        let pools = hypergraph.pools();
        let group_graph = build_group_graph(d);
        let group_adjacency = normalize_group_graph(&group_graph, group_self_loops);
        Self {
            hypergraph,
            pools,
            item_adjacency: build_item_bipartite(d),
            group_graph,
            group_adjacency,
        }
    }

    pub fn num_users(&self) -> usize {
        self.hypergraph.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.hypergraph.num_items()
    }

    pub fn num_groups(&self) -> usize {
        self.hypergraph.num_hyperedges()
    }

    /// Writes `view_member.tsv`, `view_item.tsv` and `view_group.tsv` edge
    /// lists into `dir`, weights at 17 significant digits.
    pub fn write_debug_dump(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, rows: &mut dyn Iterator<Item = (usize, usize, f64)>| -> Result<()> {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            let res: std::io::Result<()> = (|| {
                for (a, b, v) in rows {
                    writeln!(w, "{a}\t{b}\t{v:.16e}")?;
                }
                w.flush()
            })();
            res.map_err(|e| Error::io(&path, e))
        };
        let h = &self.hypergraph;
        write(
            "view_member.tsv",
            &mut (0..h.num_hyperedges()).flat_map(|e| h.edge_nodes(e).iter().map(move |&v| (e, v, 1.0))),
        )?;
        write("view_item.tsv", &mut self.item_adjacency.matrix().triplets())?;
        write("view_group.tsv", &mut self.group_adjacency.matrix().triplets())?;
        Ok(())
    }
}
