//! Interaction data: loading, validation, filtering, splitting and
//! negative sampling.
//!
//! Ids are dense and zero-based. External tokens are densified in order of
//! first appearance and kept in [`IdMaps`].

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamPurpose};

pub const GROUP_MEMBERS_FILE: &str = "group_members.tsv";
pub const GROUP_ITEMS_FILE: &str = "group_items.tsv";
pub const USER_ITEMS_FILE: &str = "user_items.tsv";
pub const ID_MAPS_FILE: &str = "id_maps.tsv";

pub const AGREE_GROUP_MEMBERS: &str = "groupMember.txt";
pub const AGREE_USER_RATINGS: [&str; 2] = ["userRatingTrain.txt", "userRatingTest.txt"];
pub const AGREE_GROUP_RATINGS: [&str; 2] = ["groupRatingTrain.txt", "groupRatingTest.txt"];

/// Which recommendation task an entity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Group,
    User,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Group => "group",
            Task::User => "user",
        })
    }
}

/// A group or a user, by dense id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Entity {
    Group(usize),
    User(usize),
}

impl Entity {
    pub fn task(self) -> Task {
        match self {
            Entity::Group(_) => Task::Group,
            Entity::User(_) => Task::User,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Entity::Group(i) | Entity::User(i) => i,
        }
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.task(), self.index())
    }
}

/// Input layout of a raw dataset directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Canonical,
    Agree,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(Format::Canonical),
            "agree" => Ok(Format::Agree),
            other => Err(format!("unknown format `{other}` (expected canonical|agree)")),
        }
    }
}

/// Bidirectional external-token ↔ dense-index table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdMap {
    /// Identity map over `0..n`, tokens are the decimal ids.
    pub fn dense(n: usize) -> Self {
        Self::from_tokens((0..n).map(|i| i.to_string()).collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let lookup = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, lookup }
    }

    pub fn get_or_insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.lookup.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_owned());
        self.lookup.insert(token.to_owned(), i);
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Rebuilds the map under `new_of_old` (old id → new id, or dropped).
    fn relabel(&self, new_of_old: &[Option<usize>], new_len: usize) -> IdMap {
        let mut tokens = vec![String::new(); new_len];
        for (old, new) in new_of_old.iter().enumerate() {
            if let Some(n) = new {
                tokens[*n] = self.tokens[old].clone();
            }
        }
        IdMap::from_tokens(tokens)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
    pub groups: IdMap,
}

/// Users, items, groups with their rosters and interaction lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    group_rosters: Vec<Vec<usize>>,
    group_items: Vec<Vec<usize>>,
    user_items: Vec<Vec<usize>>,
    id_maps: IdMaps,
}

fn sort_dedup(lists: &mut [Vec<usize>]) {
    for l in lists {
        l.sort_unstable();
        l.dedup();
    }
}

impl InteractionDataset {
    /// Builds a dataset with identity id maps. Lists are sorted and
    /// deduplicated; out-of-range ids are rejected.
    pub fn new(
        num_users: usize,
        num_items: usize,
        group_rosters: Vec<Vec<usize>>,
        group_items: Vec<Vec<usize>>,
        user_items: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let id_maps = IdMaps {
            users: IdMap::dense(num_users),
            items: IdMap::dense(num_items),
            groups: IdMap::dense(group_rosters.len()),
        };
        Self::with_id_maps(num_users, num_items, group_rosters, group_items, user_items, id_maps)
    }

    pub fn with_id_maps(
        num_users: usize,
        num_items: usize,
        mut group_rosters: Vec<Vec<usize>>,
        mut group_items: Vec<Vec<usize>>,
        mut user_items: Vec<Vec<usize>>,
        id_maps: IdMaps,
    ) -> Result<Self> {
        let num_groups = group_rosters.len();
        if group_items.len() != num_groups {
            return Err(Error::InvalidDataset(format!(
                "{} rosters but {} group interaction lists",
                num_groups,
                group_items.len()
            )));
        }
        if user_items.len() != num_users {
            return Err(Error::InvalidDataset(format!(
                "{} users but {} user interaction lists",
                num_users,
                user_items.len()
            )));
        }
        if id_maps.users.len() != num_users
            || id_maps.items.len() != num_items
            || id_maps.groups.len() != num_groups
        {
            return Err(Error::InvalidDataset("id map sizes disagree with counts".into()));
        }
        sort_dedup(&mut group_rosters);
        sort_dedup(&mut group_items);
        sort_dedup(&mut user_items);
        let check = |lists: &[Vec<usize>], bound: usize, what: &str| -> Result<()> {
            for (owner, l) in lists.iter().enumerate() {
                if let Some(&bad) = l.last().filter(|&&x| x >= bound) {
                    return Err(Error::InvalidDataset(format!(
                        "{what} list {owner} references id {bad} >= {bound}"
                    )));
                }
            }
            Ok(())
        };
        check(&group_rosters, num_users, "roster")?;
        check(&group_items, num_items, "group item")?;
        check(&user_items, num_items, "user item")?;
        Ok(Self {
            num_users,
            num_items,
            group_rosters,
            group_items,
            user_items,
            id_maps,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_groups(&self) -> usize {
        self.group_rosters.len()
    }

    pub fn roster(&self, group: usize) -> &[usize] {
        &self.group_rosters[group]
    }

    pub fn rosters(&self) -> &[Vec<usize>] {
        &self.group_rosters
    }

    pub fn group_items(&self) -> &[Vec<usize>] {
        &self.group_items
    }

    pub fn user_items(&self) -> &[Vec<usize>] {
        &self.user_items
    }

    pub fn id_maps(&self) -> &IdMaps {
        &self.id_maps
    }

    /// Training interactions of one entity.
    pub fn interactions(&self, entity: Entity) -> &[usize] {
        match entity {
            Entity::Group(t) => &self.group_items[t],
            Entity::User(s) => &self.user_items[s],
        }
    }

    pub fn entity_count(&self, task: Task) -> usize {
        match task {
            Task::Group => self.num_groups(),
            Task::User => self.num_users,
        }
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            users: self.num_users,
            items: self.num_items,
            groups: self.num_groups(),
            user_item_interactions: self.user_items.iter().map(Vec::len).sum(),
            group_item_interactions: self.group_items.iter().map(Vec::len).sum(),
        }
    }

    /// Renumbers all ids. Each map sends an old id to its new id or drops it.
    fn relabel(
        &self,
        users: &[Option<usize>],
        items: &[Option<usize>],
        groups: &[Option<usize>],
    ) -> InteractionDataset {
        let count = |m: &[Option<usize>]| m.iter().flatten().count();
        let (nu, ni, ng) = (count(users), count(items), count(groups));
        let map_list = |l: &[usize], m: &[Option<usize>]| -> Vec<usize> {
            let mut out: Vec<usize> = l.iter().filter_map(|&x| m[x]).collect();
            out.sort_unstable();
            out
        };
        let mut rosters = vec![Vec::new(); ng];
        let mut gitems = vec![Vec::new(); ng];
        for (old, new) in groups.iter().enumerate() {
            if let Some(n) = *new {
                rosters[n] = map_list(&self.group_rosters[old], users);
                gitems[n] = map_list(&self.group_items[old], items);
            }
        }
        let mut uitems = vec![Vec::new(); nu];
        for (old, new) in users.iter().enumerate() {
            if let Some(n) = *new {
                uitems[n] = map_list(&self.user_items[old], items);
            }
        }
        InteractionDataset {
            num_users: nu,
            num_items: ni,
            group_rosters: rosters,
            group_items: gitems,
            user_items: uitems,
            id_maps: IdMaps {
                users: self.id_maps.users.relabel(users, nu),
                items: self.id_maps.items.relabel(items, ni),
                groups: self.id_maps.groups.relabel(groups, ng),
            },
        }
    }

    /// Relabels items so that item `j` becomes `perm[j]`.
    pub fn permute_items(&self, perm: &[usize]) -> Result<InteractionDataset> {
        let mut seen = vec![false; self.num_items];
        for &p in perm {
            if p >= self.num_items || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidDataset("item permutation is not a bijection".into()));
            }
        }
        if perm.len() != self.num_items {
            return Err(Error::InvalidDataset("item permutation has wrong length".into()));
        }
        let items: Vec<Option<usize>> = perm.iter().map(|&p| Some(p)).collect();
        let users: Vec<Option<usize>> = (0..self.num_users).map(Some).collect();
        let groups: Vec<Option<usize>> = (0..self.num_groups()).map(Some).collect();
        Ok(self.relabel(&users, &items, &groups))
    }

    /// Renumbers ids into the order in which [`write_prepared`] emits them, so
    /// that loading the written files reproduces the same dense ids. Users and
    /// items referenced nowhere cannot be written and are dropped.
    pub fn canonicalize(&self) -> InteractionDataset {
        let mut user_new: Vec<Option<usize>> = vec![None; self.num_users];
        let mut next_user = 0;
        let mut user_order = Vec::with_capacity(self.num_users);
        let with_items = (0..self.num_users).filter(|&u| !self.user_items[u].is_empty());
        for u in with_items.chain(self.group_rosters.iter().flatten().copied()) {
            if user_new[u].is_none() {
                user_new[u] = Some(next_user);
                next_user += 1;
                user_order.push(u);
            }
        }
        let mut item_new: Vec<Option<usize>> = vec![None; self.num_items];
        let mut next = 0;
        let lists = user_order
            .iter()
            .map(|&u| &self.user_items[u])
            .chain(self.group_items.iter());
        for l in lists {
            for &i in l {
                if item_new[i].is_none() {
                    item_new[i] = Some(next);
                    next += 1;
                }
            }
        }
        let groups: Vec<Option<usize>> = (0..self.num_groups()).map(Some).collect();
        self.relabel(&user_new, &item_new, &groups)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub groups: usize,
    pub user_item_interactions: usize,
    pub group_item_interactions: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "users={} items={} groups={} user_item={} group_item={}",
            self.users,
            self.items,
            self.groups,
            self.user_item_interactions,
            self.group_item_interactions
        )
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_owned()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

fn parse_error(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Splits a line into its key token and the remainder.
fn split_key<'a>(line: &'a str, sep: Option<char>, file: &Path, n: usize) -> Result<(&'a str, &'a str)> {
    let parts = match sep {
        Some(c) => line.split_once(c),
        None => line.trim().split_once(char::is_whitespace),
    };
    let (key, rest) = parts.ok_or_else(|| parse_error(file, n, "expected two fields"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(parse_error(file, n, "empty key field"));
    }
    Ok((key, rest.trim()))
}

/// Parses `entity <sep> item [ignored...]` records.
fn pair_record<'a>(line: &'a str, sep: Option<char>, file: &Path, n: usize) -> Result<(&'a str, &'a str)> {
    let (key, rest) = split_key(line, sep, file, n)?;
    let item = match sep {
        Some(c) => rest.split(c).next().unwrap_or("").trim(),
        None => rest.split_whitespace().next().unwrap_or(""),
    };
    if item.is_empty() || item.contains(char::is_whitespace) {
        return Err(parse_error(file, n, "malformed item field"));
    }
    Ok((key, item))
}

struct Builder {
    maps: IdMaps,
    rosters: Vec<Vec<usize>>,
    group_items: Vec<Vec<usize>>,
    user_items: Vec<Vec<usize>>,
}

impl Builder {
    fn new() -> Self {
        Self {
            maps: IdMaps::default(),
            rosters: Vec::new(),
            group_items: Vec::new(),
            user_items: Vec::new(),
        }
    }

    fn user_item(&mut self, user: &str, item: &str) {
        let u = self.maps.users.get_or_insert(user);
        if u == self.user_items.len() {
            self.user_items.push(Vec::new());
        }
        let i = self.maps.items.get_or_insert(item);
        self.user_items[u].push(i);
    }

    fn roster(&mut self, group: &str, members: &str) {
        let g = self.maps.groups.get_or_insert(group);
        if g == self.rosters.len() {
            self.rosters.push(Vec::new());
            self.group_items.push(Vec::new());
        }
        for tok in members.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let u = self.maps.users.get_or_insert(tok);
            if u == self.user_items.len() {
                self.user_items.push(Vec::new());
            }
            self.rosters[g].push(u);
        }
    }

    fn group_item(&mut self, file: &Path, n: usize, group: &str, item: &str) -> Result<()> {
        let g = self.maps.groups.get(group).ok_or_else(|| Error::UnknownGroup {
            file: file.to_path_buf(),
            line: n,
            token: group.to_owned(),
        })?;
        let i = self.maps.items.get_or_insert(item);
        self.group_items[g].push(i);
        Ok(())
    }

    fn finish(self) -> Result<InteractionDataset> {
        let (nu, ni) = (self.maps.users.len(), self.maps.items.len());
        InteractionDataset::with_id_maps(nu, ni, self.rosters, self.group_items, self.user_items, self.maps)
    }
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "required file is missing"),
        ))
    }
}

/// Loads a dataset directory in the given layout.
///
/// Users are densified from the user-item records first, then members that
/// only appear in rosters. Group-item records may only reference known groups.
pub fn load_dataset(dir: &Path, format: Format) -> Result<InteractionDataset> {
    let mut b = Builder::new();
    match format {
        Format::Canonical => {
            let ui = require(dir.join(USER_ITEMS_FILE))?;
            let gm = require(dir.join(GROUP_MEMBERS_FILE))?;
            let gi = require(dir.join(GROUP_ITEMS_FILE))?;
            for (n, line) in read_lines(&ui)? {
                let (u, i) = pair_record(&line, Some('\t'), &ui, n)?;
                b.user_item(u, i);
            }
            for (n, line) in read_lines(&gm)? {
                let (g, members) = split_key(&line, Some('\t'), &gm, n)?;
                b.roster(g, members);
            }
            for (n, line) in read_lines(&gi)? {
                let (g, i) = pair_record(&line, Some('\t'), &gi, n)?;
                b.group_item(&gi, n, g, i)?;
            }
        }
        Format::Agree => {
            let gm = require(dir.join(AGREE_GROUP_MEMBERS))?;
            require(dir.join(AGREE_USER_RATINGS[0]))?;
            require(dir.join(AGREE_GROUP_RATINGS[0]))?;
            for name in AGREE_USER_RATINGS {
                let path = dir.join(name);
                if !path.is_file() {
                    continue;
                }
                for (n, line) in read_lines(&path)? {
                    let (u, i) = pair_record(&line, None, &path, n)?;
                    b.user_item(u, i);
                }
            }
            for (n, line) in read_lines(&gm)? {
                let (g, members) = split_key(&line, None, &gm, n)?;
                b.roster(g, members);
            }
            for name in AGREE_GROUP_RATINGS {
                let path = dir.join(name);
                if !path.is_file() {
                    continue;
                }
                for (n, line) in read_lines(&path)? {
                    let (g, i) = pair_record(&line, None, &path, n)?;
                    b.group_item(&path, n, g, i)?;
                }
            }
        }
    }
    b.finish()
}

/// Writes the three canonical files with dense integer tokens plus
/// `id_maps.tsv`. The dataset is canonicalized first.
pub fn write_prepared(d: &InteractionDataset, dir: &Path) -> Result<InteractionDataset> {
    let d = d.canonicalize();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    };
    write(USER_ITEMS_FILE, &|w| {
        for (u, l) in d.user_items.iter().enumerate() {
            for i in l {
                writeln!(w, "{u}\t{i}")?;
            }
        }
        Ok(())
    })?;
    write(GROUP_MEMBERS_FILE, &|w| {
        for (g, r) in d.group_rosters.iter().enumerate() {
            let members: Vec<String> = r.iter().map(ToString::to_string).collect();
            writeln!(w, "{g}\t{}", members.join(","))?;
        }
        Ok(())
    })?;
    write(GROUP_ITEMS_FILE, &|w| {
        for (g, l) in d.group_items.iter().enumerate() {
            for i in l {
                writeln!(w, "{g}\t{i}")?;
            }
        }
        Ok(())
    })?;
    write(ID_MAPS_FILE, &|w| {
        for (kind, map) in [("user", &d.id_maps.users), ("item", &d.id_maps.items), ("group", &d.id_maps.groups)] {
            for (dense, ext) in map.tokens.iter().enumerate() {
                writeln!(w, "{kind}\t{ext}\t{dense}")?;
            }
        }
        Ok(())
    })?;
    Ok(d)
}

/// Drops groups with fewer than `min_members` members or fewer than
/// `min_group_items` interactions, then any user or item left without a
/// reference. Ids are re-densified in their previous relative order.
pub fn apply_filters(d: &InteractionDataset, min_members: usize, min_group_items: usize) -> InteractionDataset {
    let keep_group: Vec<bool> = (0..d.num_groups())
        .map(|g| d.group_rosters[g].len() >= min_members && d.group_items[g].len() >= min_group_items)
        .collect();
    let mut user_used = vec![false; d.num_users];
    let mut item_used = vec![false; d.num_items];
    for (u, l) in d.user_items.iter().enumerate() {
        if !l.is_empty() {
            user_used[u] = true;
        }
        for &i in l {
            item_used[i] = true;
        }
    }
    for g in (0..d.num_groups()).filter(|&g| keep_group[g]) {
        for &u in &d.group_rosters[g] {
            user_used[u] = true;
        }
        for &i in &d.group_items[g] {
            item_used[i] = true;
        }
    }
    let compact = |keep: &[bool]| -> Vec<Option<usize>> {
        let mut next = 0;
        keep.iter()
            .map(|&k| {
                k.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    d.relabel(&compact(&user_used), &compact(&item_used), &compact(&keep_group))
}

/// Training data plus at most one held-out item per group and per user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: InteractionDataset,
    pub held_out_group: Vec<Option<usize>>,
    pub held_out_user: Vec<Option<usize>>,
}

impl SplitDataset {
    pub fn held_out(&self, entity: Entity) -> Option<usize> {
        match entity {
            Entity::Group(t) => self.held_out_group[t],
            Entity::User(s) => self.held_out_user[s],
        }
    }
}

/// Leave-one-out split: every entity with at least two interactions gives
/// up one uniformly chosen interaction. Deterministic in `seed`.
pub fn split_leave_one_out(d: &InteractionDataset, seed: u64) -> SplitDataset {
    let mut rng = stream(seed, StreamPurpose::Split);
    let mut hold = |lists: &[Vec<usize>]| -> (Vec<Vec<usize>>, Vec<Option<usize>>) {
        let mut train = Vec::with_capacity(lists.len());
        let mut held = Vec::with_capacity(lists.len());
        for l in lists {
            let mut l = l.clone();
            if l.len() >= 2 {
                let k = rng.random_range(0..l.len());
                held.push(Some(l.remove(k)));
            } else {
                held.push(None);
            }
            train.push(l);
        }
        (train, held)
    };
    let (group_items, held_out_group) = hold(&d.group_items);
    let (user_items, held_out_user) = hold(&d.user_items);
    SplitDataset {
        train: InteractionDataset {
            group_items,
            user_items,
            ..d.clone()
        },
        held_out_group,
        held_out_user,
    }
}

/// Draws `n` negatives per positive of `entity` uniformly from the items it
/// has not interacted with. Returns `(positive, negative)` pairs grouped by
/// positive in ascending order.
pub fn sample_training_negatives<R: Rng + ?Sized>(
    d: &InteractionDataset,
    entity: Entity,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let positives = d.interactions(entity);
    let num_items = d.num_items;
    if positives.len() >= num_items {
        return Err(Error::NoNegatives(entity));
    }
    let mut pairs = Vec::with_capacity(positives.len() * n);
    if positives.len() * 2 > num_items {
        let pool = complement(positives, &[], num_items);
        for &p in positives {
            for _ in 0..n {
                pairs.push((p, pool[rng.random_range(0..pool.len())]));
            }
        }
    } else {
        for &p in positives {
            for _ in 0..n {
                let neg = loop {
                    let j = rng.random_range(0..num_items);
                    if positives.binary_search(&j).is_err() {
                        break j;
                    }
                };
                pairs.push((p, neg));
            }
        }
    }
    Ok(pairs)
}

/// Items of `0..num_items` absent from both sorted lists.
fn complement(a: &[usize], b: &[usize], num_items: usize) -> Vec<usize> {
    (0..num_items)
        .filter(|j| a.binary_search(j).is_err() && b.binary_search(j).is_err())
        .collect()
}

/// One ranking query: a held-out positive and its sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub entity: Entity,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

impl EvalQuery {
    /// Candidate list with the positive first.
    pub fn candidates(&self) -> Vec<usize> {
        std::iter::once(self.positive).chain(self.negatives.iter().copied()).collect()
    }
}

/// One query per held-out entry (groups first, then users), each with
/// `n_neg` distinct negatives drawn from items the entity never touched.
pub fn build_eval_queries<R: Rng + ?Sized>(s: &SplitDataset, n_neg: usize, rng: &mut R) -> Result<Vec<EvalQuery>> {
    let mut queries = Vec::new();
    let entities = (0..s.train.num_groups())
        .map(Entity::Group)
        .chain((0..s.train.num_users).map(Entity::User));
    for entity in entities {
        let Some(positive) = s.held_out(entity) else { continue };
        let eligible = complement(s.train.interactions(entity), &[positive], s.train.num_items);
        if eligible.len() < n_neg {
            return Err(Error::InsufficientNegatives {
                entity,
                needed: n_neg,
                available: eligible.len(),
            });
        }
        let negatives = index::sample(rng, eligible.len(), n_neg)
            .into_iter()
            .map(|k| eligible[k])
            .collect();
        queries.push(EvalQuery {
            entity,
            positive,
            negatives,
        });
    }
    Ok(queries)
}
