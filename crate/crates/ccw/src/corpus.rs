//! Loading, validation, and indexing of pre-split recommendation datasets.
//!
//! Input file format (one line per user):
//! `<raw_user_id> <item_id_1> <item_id_2> ...`
//! A line carrying only a user id is an error in train files and skipped in
//! test files. Raw ids are remapped to contiguous indices at load; the maps
//! are retained for report output.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::sparse::SparseIncidenceMatrix;
use crate::{Error, Result};

/// Immutable pre-split interaction data over contiguous index spaces.
#[derive(Debug, Clone)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    train_edges: Vec<(usize, usize)>,
    test_edges: Vec<(usize, usize)>,
    /// Per-user sorted train item lists (N_u).
    train_adjacency: Vec<Vec<usize>>,
    /// Per-user sorted test item lists.
    test_adjacency: Vec<Vec<usize>>,
    /// Raw id per user index.
    user_ids: Vec<String>,
    /// Raw id per item index.
    item_ids: Vec<String>,
}

/// Non-fatal events counted during load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadWarnings {
    pub duplicate_edges_dropped: usize,
    pub empty_test_lines_skipped: usize,
}

impl InteractionDataset {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn train_edges(&self) -> &[(usize, usize)] {
        &self.train_edges
    }

    pub fn test_edges(&self) -> &[(usize, usize)] {
        &self.test_edges
    }

    pub fn train_items(&self, user: usize) -> &[usize] {
        &self.train_adjacency[user]
    }

    pub fn test_items(&self, user: usize) -> &[usize] {
        &self.test_adjacency[user]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Density of the train split alone.
    pub fn train_density(&self) -> f64 {
        self.train_edges.len() as f64 / (self.num_users as f64 * self.num_items as f64)
    }

    /// Density over train+test combined (the convention of published dataset
    /// statistics tables).
    pub fn combined_density(&self) -> f64 {
        (self.train_edges.len() + self.test_edges.len()) as f64
            / (self.num_users as f64 * self.num_items as f64)
    }

    /// Build directly from already-indexed edge lists. Used by the synthetic
    /// generator and tests; runs the same validation as file loading.
    pub fn from_edges(
        num_users: usize,
        num_items: usize,
        train_edges: Vec<(usize, usize)>,
        test_edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let user_ids = (0..num_users).map(|u| u.to_string()).collect();
        let item_ids = (0..num_items).map(|i| i.to_string()).collect();
        Self::assemble(num_users, num_items, train_edges, test_edges, user_ids, item_ids)
    }

    fn assemble(
        num_users: usize,
        num_items: usize,
        mut train_edges: Vec<(usize, usize)>,
        mut test_edges: Vec<(usize, usize)>,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Result<Self> {
        for &(u, i) in train_edges.iter().chain(test_edges.iter()) {
            if u >= num_users || i >= num_items {
                return Err(Error::Validation(format!(
                    "edge ({u},{i}) out of range for {num_users} users x {num_items} items"
                )));
            }
        }
        train_edges.sort_unstable();
        test_edges.sort_unstable();
        if train_edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("duplicate train edge".into()));
        }
        if test_edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("duplicate test edge".into()));
        }

        let mut train_adjacency = vec![Vec::new(); num_users];
        for &(u, i) in &train_edges {
            train_adjacency[u].push(i);
        }
        let mut test_adjacency = vec![Vec::new(); num_users];
        for &(u, i) in &test_edges {
            if train_adjacency[u].binary_search(&i).is_ok() {
                return Err(Error::Validation(format!(
                    "pair (user {u}, item {i}) appears in both train and test"
                )));
            }
            if train_adjacency[u].is_empty() {
                return Err(Error::Validation(format!(
                    "user '{}' appears in the test split but has no training history",
                    user_ids[u]
                )));
            }
            test_adjacency[u].push(i);
        }

        Ok(Self {
            num_users,
            num_items,
            train_edges,
            test_edges,
            train_adjacency,
            test_adjacency,
            user_ids,
            item_ids,
        })
    }

    /// Sparse user-item incidence matrix over the train edges.
    pub fn incidence_matrix(&self) -> SparseIncidenceMatrix {
        SparseIncidenceMatrix::from_edges(self.num_users, self.num_items, &self.train_edges)
            .expect("validated edges")
    }

    /// Write the dataset back in the adjacency-list line format. Reloading the
    /// written files reproduces the same index spaces and edge sets.
    pub fn write(&self, train_path: &Path, test_path: &Path) -> Result<()> {
        let write_split = |path: &Path, adjacency: &[Vec<usize>], skip_empty: bool| -> Result<()> {
            let mut w = BufWriter::new(File::create(path)?);
            for (u, items) in adjacency.iter().enumerate() {
                if items.is_empty() && skip_empty {
                    continue;
                }
                write!(w, "{}", self.user_ids[u])?;
                for &i in items {
                    write!(w, " {}", self.item_ids[i])?;
                }
                writeln!(w)?;
            }
            Ok(())
        };
        write_split(train_path, &self.train_adjacency, true)?;
        write_split(test_path, &self.test_adjacency, true)?;
        Ok(())
    }
}

fn parse_split(
    path: &Path,
    is_train: bool,
    warnings: &mut LoadWarnings,
) -> Result<Vec<(String, Vec<String>)>> {
    let file = File::open(path).map_err(|e| {
        Error::Validation(format!("cannot open {}: {e}", path.display()))
    })?;
    let mut lines = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(user) = tokens.next() else {
            continue; // blank line
        };
        let items: Vec<String> = tokens.map(str::to_owned).collect();
        if items.is_empty() {
            if is_train {
                return Err(Error::Parse {
                    path: PathBuf::from(path),
                    line: lineno + 1,
                    msg: format!("train line for user '{user}' lists no items"),
                });
            }
            warnings.empty_test_lines_skipped += 1;
            continue;
        }
        lines.push((user.to_owned(), items));
    }
    Ok(lines)
}

/// Load and validate a pre-split dataset. Raw ids are remapped to dense,
/// contiguous indices in order of first appearance (train file first).
pub fn load_dataset(
    train_path: &Path,
    test_path: &Path,
) -> Result<(InteractionDataset, LoadWarnings)> {
    let mut warnings = LoadWarnings::default();
    let train_lines = parse_split(train_path, true, &mut warnings)?;
    let test_lines = parse_split(test_path, false, &mut warnings)?;

    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let intern_user = |raw: &str, ids: &mut Vec<String>, map: &mut HashMap<String, usize>| {
        *map.entry(raw.to_owned()).or_insert_with(|| {
            ids.push(raw.to_owned());
            ids.len() - 1
        })
    };

    let mut train_edges = Vec::new();
    let mut train_users_seen: HashMap<String, ()> = HashMap::new();
    for (raw_user, items) in &train_lines {
        train_users_seen.insert(raw_user.clone(), ());
        let u = intern_user(raw_user, &mut user_ids, &mut user_index);
        for raw_item in items {
            let i = intern_user(raw_item, &mut item_ids, &mut item_index);
            train_edges.push((u, i));
        }
    }

    let mut test_edges = Vec::new();
    for (raw_user, items) in &test_lines {
        if !train_users_seen.contains_key(raw_user) {
            return Err(Error::Validation(format!(
                "user '{raw_user}' appears only in the test split"
            )));
        }
        let u = user_index[raw_user];
        for raw_item in items {
            let i = intern_user(raw_item, &mut item_ids, &mut item_index);
            test_edges.push((u, i));
        }
    }

    let dedup = |edges: &mut Vec<(usize, usize)>, warnings: &mut usize| {
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        *warnings += before - edges.len();
    };
    dedup(&mut train_edges, &mut warnings.duplicate_edges_dropped);
    dedup(&mut test_edges, &mut warnings.duplicate_edges_dropped);
    if warnings.duplicate_edges_dropped > 0 {
        log::warn!(
            "dropped {} duplicate edge(s) during load",
            warnings.duplicate_edges_dropped
        );
    }

    let ds = InteractionDataset::assemble(
        user_ids.len(),
        item_ids.len(),
        train_edges,
        test_edges,
        user_ids,
        item_ids,
    )?;
    Ok((ds, warnings))
}
