//! Embedding-based base CF models: the building block for the global model
//! and each cluster-local model.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::Mat;
use crate::{Error, Result, Scalar};

/// Base model family. `Propagated` applies `layers` rounds of symmetric
/// degree-normalized neighbor averaging over the model's own edge set and
/// averages the layer outputs, in the style of linear graph convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Plain,
    Propagated { layers: usize },
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Plain => write!(f, "plain-mf"),
            Variant::Propagated { layers } => write!(f, "propagated-l{layers}"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    /// Accepts `plain-mf` and `propagated-l<N>` (bare `propagated` means 3
    /// layers).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain-mf" | "plain" => Ok(Variant::Plain),
            "propagated" => Ok(Variant::Propagated { layers: 3 }),
            other => {
                if let Some(n) = other.strip_prefix("propagated-l") {
                    let layers = n.parse().map_err(|_| {
                        Error::Argument(format!("bad layer count in variant `{other}`"))
                    })?;
                    return Ok(Variant::Propagated { layers });
                }
                Err(Error::Argument(format!(
                    "unknown variant `{other}`; expected plain-mf or propagated-l<N>"
                )))
            }
        }
    }
}

/// A node reference within one model's index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    User(usize),
    Item(usize),
}

/// Parameter store of d-dimensional user/item embeddings over one edge scope
/// (the full graph for the global model, a cluster subgraph for local models).
#[derive(Debug, Clone)]
pub struct EmbeddingModel<S> {
    pub user_emb: Mat<S>,
    pub item_emb: Mat<S>,
    pub d: usize,
    pub variant: Variant,
    pub seed: u64,
    edges: Vec<(usize, usize)>,
    user_deg: Vec<usize>,
    item_deg: Vec<usize>,
}

const INIT_STD: f64 = 0.01;

impl<S: Scalar> EmbeddingModel<S> {
    /// Fresh model with embeddings drawn i.i.d. Normal(0, 0.01^2),
    /// deterministic per seed.
    pub fn init(
        num_users: usize,
        num_items: usize,
        d: usize,
        variant: Variant,
        edges: Vec<(usize, usize)>,
        seed: u64,
    ) -> Result<Self> {
        if d < 1 {
            return Err(Error::Argument("embedding dimension must be >= 1".into()));
        }
        let mut user_deg = vec![0usize; num_users];
        let mut item_deg = vec![0usize; num_items];
        for &(u, i) in &edges {
            if u >= num_users || i >= num_items {
                return Err(Error::Argument(format!(
                    "edge ({u},{i}) outside the model's index space"
                )));
            }
            user_deg[u] += 1;
            item_deg[i] += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, INIT_STD).expect("valid normal");
        let mut fill = |m: &mut Mat<S>| {
            for v in m.data_mut() {
                *v = S::from_f64(normal.sample(&mut rng));
            }
        };
        let mut user_emb = Mat::zeros(num_users, d);
        let mut item_emb = Mat::zeros(num_items, d);
        fill(&mut user_emb);
        fill(&mut item_emb);
        Ok(Self {
            user_emb,
            item_emb,
            d,
            variant,
            seed,
            edges,
            user_deg,
            item_deg,
        })
    }

    pub fn num_users(&self) -> usize {
        self.user_emb.num_rows()
    }

    pub fn num_items(&self) -> usize {
        self.item_emb.num_rows()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Effective embedding tables: the raw tables for `Plain`, the
    /// layer-averaged propagated tables for `Propagated`.
    pub fn forward_tables(&self) -> (Mat<S>, Mat<S>) {
        match self.variant {
            Variant::Plain => (self.user_emb.clone(), self.item_emb.clone()),
            Variant::Propagated { layers } => {
                self.propagate_tables(&self.user_emb, &self.item_emb, layers)
            }
        }
    }

    /// (1/(L+1)) * sum of propagation layers, where one layer maps user rows
    /// to degree-normalized sums over their items and vice versa. The layer
    /// operator is symmetric over the stacked user/item space, so applying
    /// this to gradient tables is the exact backward pass.
    pub fn propagate_tables(&self, user: &Mat<S>, item: &Mat<S>, layers: usize) -> (Mat<S>, Mat<S>) {
        let mut acc_u = user.clone();
        let mut acc_i = item.clone();
        let mut cur_u = user.clone();
        let mut cur_i = item.clone();
        for _ in 0..layers {
            let (next_u, next_i) = self.propagate_step(&cur_u, &cur_i);
            for (a, &x) in acc_u.data_mut().iter_mut().zip(next_u.data()) {
                *a += x;
            }
            for (a, &x) in acc_i.data_mut().iter_mut().zip(next_i.data()) {
                *a += x;
            }
            cur_u = next_u;
            cur_i = next_i;
        }
        let inv = S::one() / S::from_usize(layers + 1);
        acc_u.data_mut().iter_mut().for_each(|x| *x *= inv);
        acc_i.data_mut().iter_mut().for_each(|x| *x *= inv);
        (acc_u, acc_i)
    }

    /// One symmetric-normalized propagation step. The operator is symmetric
    /// over the stacked user/item space, so it is its own transpose; gradient
    /// backpropagation reuses it directly.
    pub fn propagate_step(&self, cur_u: &Mat<S>, cur_i: &Mat<S>) -> (Mat<S>, Mat<S>) {
        let d = self.d;
        let mut next_u = Mat::zeros(self.num_users(), d);
        let mut next_i = Mat::zeros(self.num_items(), d);
        for &(u, i) in &self.edges {
            let w = S::one()
                / (S::from_usize(self.user_deg[u]) * S::from_usize(self.item_deg[i])).sqrt();
            crate::linalg::axpy(w, cur_i.row(i), next_u.row_mut(u));
            crate::linalg::axpy(w, cur_u.row(u), next_i.row_mut(i));
        }
        (next_u, next_i)
    }

    /// Effective embedding of one node. Exact but recomputes propagation for
    /// propagated models; batch paths should use [`forward_tables`].
    pub fn embed(&self, node: Node) -> Result<Vec<S>> {
        match node {
            Node::User(u) if u >= self.num_users() => {
                Err(Error::Argument(format!("user index {u} out of range")))
            }
            Node::Item(i) if i >= self.num_items() => {
                Err(Error::Argument(format!("item index {i} out of range")))
            }
            Node::User(u) => {
                let (tu, _) = self.forward_tables();
                Ok(tu.row(u).to_vec())
            }
            Node::Item(i) => {
                let (_, ti) = self.forward_tables();
                Ok(ti.row(i).to_vec())
            }
        }
    }

    /// Inner product of the two effective embeddings.
    pub fn score(&self, u: usize, i: usize) -> Result<S> {
        let eu = self.embed(Node::User(u))?;
        let ei = self.embed(Node::Item(i))?;
        Ok(crate::linalg::dot(&eu, &ei))
    }

    pub fn all_finite(&self) -> bool {
        self.user_emb.data().iter().all(|x| x.is_finite())
            && self.item_emb.data().iter().all(|x| x.is_finite())
    }

    /// Binary checkpoint: magic `CCWE`, format version, variant tag, layer
    /// count, d, num_users, num_items, seed, then both tables as f64
    /// little-endian, user table first, row-major.
    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"CCWE")?;
        w.write_all(&1u32.to_le_bytes())?;
        let (tag, layers) = match self.variant {
            Variant::Plain => (0u8, 0usize),
            Variant::Propagated { layers } => (1u8, layers),
        };
        w.write_all(&[tag])?;
        w.write_all(&(layers as u32).to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&(self.num_users() as u64).to_le_bytes())?;
        w.write_all(&(self.num_items() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for &x in self.user_emb.data().iter().chain(self.item_emb.data()) {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    /// Load a checkpoint written by [`save`]. `edges` supplies the edge scope,
    /// which is not serialized (it is re-derived from dataset + clustering).
    pub fn load(r: &mut impl Read, edges: Vec<(usize, usize)>) -> Result<Self> {
        let bad = |msg: &str| Error::Validation(format!("model checkpoint: {msg}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"CCWE" {
            return Err(bad("wrong magic"));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let layers = read_u32(r)? as usize;
        let variant = match tag[0] {
            0 => Variant::Plain,
            1 => Variant::Propagated { layers },
            t => return Err(bad(&format!("unknown variant tag {t}"))),
        };
        let d = read_u32(r)? as usize;
        let num_users = read_u64(r)? as usize;
        let num_items = read_u64(r)? as usize;
        let seed = read_u64(r)?;
        let mut model = Self::init(num_users, num_items, d, variant, edges, seed)?;
        for x in model
            .user_emb
            .data_mut()
            .iter_mut()
            .chain(model.item_emb.data_mut())
        {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            *x = S::from_f64(f64::from_le_bytes(buf));
        }
        Ok(model)
    }

    pub fn save_to_path(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
