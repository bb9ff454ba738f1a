//! Seeded synthetic datasets for tests and benchmarks.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamPurpose};

/// Planted-consensus generator: every item, user and group has a latent
/// topic. Groups draw members and items from their own topic; users mostly
/// interact within their home topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_groups: usize,
    pub num_topics: usize,
    pub min_members: usize,
    pub max_members: usize,
    pub items_per_group: usize,
    pub items_per_user: usize,
    /// Share of a user's items taken from the home topic.
    pub user_topic_share: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            num_users: 500,
            num_items: 300,
            num_groups: 100,
            num_topics: 10,
            min_members: 2,
            max_members: 5,
            items_per_group: 6,
            items_per_user: 8,
            user_topic_share: 0.8,
        }
    }
}

/// Generated dataset plus the planted topic labels.
#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub dataset: InteractionDataset,
    pub user_topic: Vec<usize>,
    pub item_topic: Vec<usize>,
    pub group_topic: Vec<usize>,
}

fn members_of(topic_of: &[usize], topic: usize) -> Vec<usize> {
    (0..topic_of.len()).filter(|&i| topic_of[i] == topic).collect()
}

fn pick<R: Rng + ?Sized>(pool: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    sample(rng, pool.len(), n.min(pool.len())).into_iter().map(|i| pool[i]).collect()
}

pub fn planted_consensus(cfg: &PlantedConfig, seed: u64) -> Result<PlantedDataset> {
    let t = cfg.num_topics;
    if t == 0 || cfg.num_users < t || cfg.num_items < t {
        return Err(Error::Config("need at least one user and item per topic".into()));
    }
    if cfg.min_members == 0 || cfg.min_members > cfg.max_members {
        return Err(Error::Config("member range must satisfy 1 <= min <= max".into()));
    }
    if !(0.0..=1.0).contains(&cfg.user_topic_share) {
        return Err(Error::Config("user_topic_share must lie in [0, 1]".into()));
    }
    let mut rng = stream(seed, StreamPurpose::Synthetic);
    let user_topic: Vec<usize> = (0..cfg.num_users).map(|u| u % t).collect();
    let item_topic: Vec<usize> = (0..cfg.num_items).map(|j| j % t).collect();
    let users_by_topic: Vec<Vec<usize>> = (0..t).map(|k| members_of(&user_topic, k)).collect();
    let items_by_topic: Vec<Vec<usize>> = (0..t).map(|k| members_of(&item_topic, k)).collect();

    let mut group_topic = Vec::with_capacity(cfg.num_groups);
    let mut rosters = Vec::with_capacity(cfg.num_groups);
    let mut group_items = Vec::with_capacity(cfg.num_groups);
    for _ in 0..cfg.num_groups {
        let k = rng.random_range(0..t);
        let size = rng.random_range(cfg.min_members..=cfg.max_members);
        group_topic.push(k);
        rosters.push(pick(&users_by_topic[k], size, &mut rng));
        group_items.push(pick(&items_by_topic[k], cfg.items_per_group, &mut rng));
    }

    let mut user_items = Vec::with_capacity(cfg.num_users);
    for &k in &user_topic {
        let mut items = Vec::with_capacity(cfg.items_per_user);
        while items.len() < cfg.items_per_user.min(cfg.num_items) {
            let j = if rng.random_bool(cfg.user_topic_share) {
                let pool = &items_by_topic[k];
                pool[rng.random_range(0..pool.len())]
            } else {
                rng.random_range(0..cfg.num_items)
            };
            if !items.contains(&j) {
                items.push(j);
            }
        }
        user_items.push(items);
    }

    Ok(PlantedDataset {
        dataset: InteractionDataset::new(cfg.num_users, cfg.num_items, rosters, group_items, user_items)?,
        user_topic,
        item_topic,
        group_topic,
    })
}

/// Structure-free dataset: rosters, group items and user items are all
/// drawn uniformly at random.
pub fn uniform_random(
    num_users: usize,
    num_items: usize,
    num_groups: usize,
    members: usize,
    items_per_entity: usize,
    seed: u64,
) -> Result<InteractionDataset> {
    let mut rng = stream(seed, StreamPurpose::Synthetic);
    let mut draw = |pool: usize, n: usize| sample(&mut rng, pool, n.min(pool)).into_vec();
    let rosters = (0..num_groups).map(|_| draw(num_users, members)).collect();
    let group_items = (0..num_groups).map(|_| draw(num_items, items_per_entity)).collect();
    let user_items = (0..num_users).map(|_| draw(num_items, items_per_entity)).collect();
    InteractionDataset::new(num_users, num_items, rosters, group_items, user_items)
}
