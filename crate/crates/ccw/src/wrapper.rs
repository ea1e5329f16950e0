//! The CCW composite: one global model, k local models over cluster
//! subgraphs, the local-importance-coefficient (LIC) network, and the
//! piecewise ranking rule.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::corpus::InteractionDataset;
use crate::embedcf::{EmbeddingModel, Variant};
use crate::linalg::Mat;
use crate::spectral::{assignments_to_string, CoClustering};
use crate::{Error, Result, Scalar};

/// Scoring mode: the full rule with learned LIC, the equal-weight ablation,
/// or the global term alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    BaseOnly,
    EqualWeight,
    WithLic,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::BaseOnly => write!(f, "base-only"),
            Mode::EqualWeight => write!(f, "equal-weight"),
            Mode::WithLic => write!(f, "with-lic"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base-only" => Ok(Mode::BaseOnly),
            "equal-weight" => Ok(Mode::EqualWeight),
            "with-lic" => Ok(Mode::WithLic),
            other => Err(Error::Argument(format!(
                "unknown mode '{other}' (expected base-only | equal-weight | with-lic)"
            ))),
        }
    }
}

/// Two-layer perceptron mapping the concatenated [global | local] embedding
/// of a node to one scalar. Rectifier hidden layer, linear output.
#[derive(Debug, Clone)]
pub struct LicNetwork<S> {
    /// Layer 1 weights, hidden x 2d.
    pub w1: Mat<S>,
    pub b1: Vec<S>,
    /// Layer 2 weights, hidden.
    pub w2: Vec<S>,
    pub b2: S,
    pub d: usize,
    pub hidden: usize,
}

/// Cached activations of one LIC forward pass, kept for backpropagation.
pub struct LicForward<S> {
    pub input: Vec<S>,
    pub pre_act: Vec<S>,
    pub hidden: Vec<S>,
    pub output: S,
}

impl<S: Scalar> LicNetwork<S> {
    /// Hidden weights Normal(0, (1/sqrt(2d))^2); output weights zero with
    /// bias 1, so an untrained network reproduces the equal-weight rule.
    pub fn init(d: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 1.0 / (2.0 * d as f64).sqrt();
        let normal = Normal::new(0.0f64, std).expect("valid normal");
        let mut w1 = Mat::zeros(hidden, 2 * d);
        for v in w1.data_mut() {
            *v = S::from_f64(normal.sample(&mut rng));
        }
        Self {
            w1,
            b1: vec![S::zero(); hidden],
            w2: vec![S::zero(); hidden],
            b2: S::one(),
            d,
            hidden,
        }
    }

    pub fn forward(&self, global: &[S], local: &[S]) -> LicForward<S> {
        debug_assert_eq!(global.len(), self.d);
        debug_assert_eq!(local.len(), self.d);
        let mut input = Vec::with_capacity(2 * self.d);
        input.extend_from_slice(global);
        input.extend_from_slice(local);
        let mut pre_act = Vec::with_capacity(self.hidden);
        for h in 0..self.hidden {
            pre_act.push(crate::linalg::dot(self.w1.row(h), &input) + self.b1[h]);
        }
        let hidden: Vec<S> = pre_act.iter().map(|&z| z.max(S::zero())).collect();
        let output = crate::linalg::dot(&self.w2, &hidden) + self.b2;
        LicForward {
            input,
            pre_act,
            hidden,
            output,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.w1.data().iter().all(|x| x.is_finite())
            && self.b1.iter().all(|x| x.is_finite())
            && self.w2.iter().all(|x| x.is_finite())
            && self.b2.is_finite()
    }
}

/// One cluster's local model plus the global ids of its local index space.
#[derive(Debug, Clone)]
pub struct LocalModel<S> {
    pub model: EmbeddingModel<S>,
    /// Global user index per local row, sorted ascending.
    pub users: Vec<usize>,
    /// Global item index per local row, sorted ascending.
    pub items: Vec<usize>,
}

/// Global + k local models + LIC network.
#[derive(Debug, Clone)]
pub struct CcwModel<S> {
    pub global: EmbeddingModel<S>,
    pub locals: Vec<LocalModel<S>>,
    pub coclustering: CoClustering,
    pub lic: LicNetwork<S>,
    pub mode: Mode,
    /// Local row index per global user (in its cluster's model).
    pub user_local: Vec<usize>,
    /// Local row index per global item.
    pub item_local: Vec<usize>,
}

/// Effective (post-propagation) embedding tables of all k+1 models.
pub struct ForwardTables<S> {
    pub global_user: Mat<S>,
    pub global_item: Mat<S>,
    pub locals: Vec<(Mat<S>, Mat<S>)>,
}

/// Default ceiling for rating-matrix blocks, in cells.
pub const DEFAULT_CELL_BUDGET: usize = 50_000_000;

impl<S: Scalar> CcwModel<S> {
    pub fn k(&self) -> usize {
        self.locals.len()
    }

    pub fn forward_tables(&self) -> ForwardTables<S> {
        let (global_user, global_item) = self.global.forward_tables();
        let locals = self.locals.iter().map(|l| l.model.forward_tables()).collect();
        ForwardTables {
            global_user,
            global_item,
            locals,
        }
    }

    fn user_cluster(&self, u: usize) -> usize {
        self.coclustering.user_assignment[u]
    }

    fn item_cluster(&self, i: usize) -> usize {
        self.coclustering.item_assignment[i]
    }

    /// Effective local embedding of a node within its own cluster's model.
    pub fn local_user_embedding<'t>(&self, tables: &'t ForwardTables<S>, u: usize) -> &'t [S] {
        tables.locals[self.user_cluster(u)].0.row(self.user_local[u])
    }

    pub fn local_item_embedding<'t>(&self, tables: &'t ForwardTables<S>, i: usize) -> &'t [S] {
        tables.locals[self.item_cluster(i)].1.row(self.item_local[i])
    }

    /// Local importance coefficient of one node.
    pub fn lic_user(&self, tables: &ForwardTables<S>, u: usize) -> LicForward<S> {
        self.lic
            .forward(tables.global_user.row(u), self.local_user_embedding(tables, u))
    }

    pub fn lic_item(&self, tables: &ForwardTables<S>, i: usize) -> LicForward<S> {
        self.lic
            .forward(tables.global_item.row(i), self.local_item_embedding(tables, i))
    }

    /// Ranking score of one (user, item) pair using freshly computed tables.
    /// Batch paths should compute [`forward_tables`] once and use
    /// [`rank_score_with`].
    pub fn rank_score(&self, u: usize, i: usize) -> S {
        let tables = self.forward_tables();
        self.rank_score_with(&tables, u, i)
    }

    pub fn rank_score_with(&self, tables: &ForwardTables<S>, u: usize, i: usize) -> S {
        let global =
            crate::linalg::dot(tables.global_user.row(u), tables.global_item.row(i));
        if self.mode == Mode::BaseOnly || !self.coclustering.same_cluster(u, i) {
            return global;
        }
        let lu = self.local_user_embedding(tables, u);
        let li = self.local_item_embedding(tables, i);
        let local_dot = crate::linalg::dot(lu, li);
        match self.mode {
            Mode::EqualWeight => global + local_dot,
            Mode::WithLic => {
                let lic_u = self.lic_user(tables, u).output;
                let lic_i = self.lic_item(tables, i).output;
                global + lic_u * lic_i * local_dot
            }
            Mode::BaseOnly => unreachable!(),
        }
    }

    /// Dense score block for a user subset over all items, with each user's
    /// train items masked to -inf for evaluation ranking.
    pub fn rating_matrix(
        &self,
        users: &[usize],
        ds: &InteractionDataset,
        cell_budget: usize,
    ) -> Result<Mat<S>> {
        if users.is_empty() {
            return Err(Error::Argument("rating_matrix over an empty user subset".into()));
        }
        let num_items = self.global.num_items();
        if users.len().saturating_mul(num_items) > cell_budget {
            return Err(Error::Argument(format!(
                "rating block of {} x {num_items} cells exceeds the budget of {cell_budget}; batch the users",
                users.len()
            )));
        }
        let tables = self.forward_tables();
        // Per-item LIC values are shared across users; compute once.
        let item_lic: Option<Vec<S>> = if self.mode == Mode::WithLic {
            Some((0..num_items).map(|i| self.lic_item(&tables, i).output).collect())
        } else {
            None
        };
        let mut out = Mat::zeros(users.len(), num_items);
        for (row, &u) in users.iter().enumerate() {
            let gu = tables.global_user.row(u);
            let user_cluster = self.user_cluster(u);
            let lic_u = if self.mode == Mode::WithLic {
                self.lic_user(&tables, u).output
            } else {
                S::one()
            };
            let lu = self.local_user_embedding(&tables, u).to_vec();
            let dest = out.row_mut(row);
            for i in 0..num_items {
                let mut score = crate::linalg::dot(gu, tables.global_item.row(i));
                if self.mode != Mode::BaseOnly && self.item_cluster(i) == user_cluster {
                    let li = self.local_item_embedding(&tables, i);
                    let local_dot = crate::linalg::dot(&lu, li);
                    score += match self.mode {
                        Mode::EqualWeight => local_dot,
                        Mode::WithLic => {
                            lic_u * item_lic.as_ref().expect("with-lic")[i] * local_dot
                        }
                        Mode::BaseOnly => unreachable!(),
                    };
                }
                dest[i] = score;
            }
            for &i in ds.train_items(u) {
                dest[i] = S::neg_infinity();
            }
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.global.all_finite()
            && self.locals.iter().all(|l| l.model.all_finite())
            && self.lic.all_finite()
    }
}

/// SHA-256 hex digest of the clustering's canonical text form; bundled into
/// checkpoints so evaluation can refuse mismatched clusterings.
pub fn clustering_hash(cc: &CoClustering) -> String {
    let mut hasher = Sha256::new();
    hasher.update(assignments_to_string(cc).as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Assemble the k+1 parameter stores and the LIC network. Per-model seeds are
/// derived from `seed` via [`crate::report::derive_seed`]. Returns warnings
/// for clusters that contribute no trainable pairs.
pub fn assemble_ccw<S: Scalar>(
    ds: &InteractionDataset,
    coclustering: CoClustering,
    variant: Variant,
    d: usize,
    mode: Mode,
    seed: u64,
) -> Result<(CcwModel<S>, Vec<String>)> {
    let coclustering = if coclustering.subgraphs.is_some() {
        coclustering
    } else {
        crate::spectral::build_subgraphs(&ds.incidence_matrix(), coclustering)?
    };
    if coclustering.num_users() != ds.num_users() || coclustering.num_items() != ds.num_items() {
        return Err(Error::Argument(
            "clustering dimensions do not match the dataset".into(),
        ));
    }

    let global = EmbeddingModel::init(
        ds.num_users(),
        ds.num_items(),
        d,
        variant,
        ds.train_edges().to_vec(),
        crate::report::derive_seed(seed, "model/global"),
    )?;

    let subgraphs = coclustering.subgraphs.as_ref().expect("built above");
    let mut warnings = Vec::new();
    let mut locals = Vec::with_capacity(coclustering.k);
    let mut user_local = vec![usize::MAX; ds.num_users()];
    let mut item_local = vec![usize::MAX; ds.num_items()];
    for (m, sub) in subgraphs.iter().enumerate() {
        for (local, &g) in sub.users.iter().enumerate() {
            user_local[g] = local;
        }
        for (local, &g) in sub.items.iter().enumerate() {
            item_local[g] = local;
        }
        if sub.users.is_empty() || sub.items.is_empty() || sub.edges.is_empty() {
            warnings.push(format!(
                "cluster {m} has {} users, {} items, {} in-cluster edges; its local model contributes no trainable pairs",
                sub.users.len(),
                sub.items.len(),
                sub.edges.len()
            ));
        }
        let model = EmbeddingModel::init(
            sub.users.len(),
            sub.items.len(),
            d,
            variant,
            sub.local_edges(),
            crate::report::derive_seed(seed, &format!("model/local/{m}")),
        )?;
        locals.push(LocalModel {
            model,
            users: sub.users.clone(),
            items: sub.items.clone(),
        });
    }

    let lic = LicNetwork::init(d, d, crate::report::derive_seed(seed, "model/lic"));
    Ok((
        CcwModel {
            global,
            locals,
            coclustering,
            lic,
            mode,
            user_local,
            item_local,
        },
        warnings,
    ))
}

const BUNDLE_MAGIC: &[u8; 4] = b"CCWB";

/// Composite checkpoint: all k+1 model dumps, LIC weights, and the clustering
/// hash.
pub fn save_bundle<S: Scalar>(model: &CcwModel<S>, w: &mut impl Write) -> Result<()> {
    w.write_all(BUNDLE_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    let mode_tag: u8 = match model.mode {
        Mode::BaseOnly => 0,
        Mode::EqualWeight => 1,
        Mode::WithLic => 2,
    };
    w.write_all(&[mode_tag])?;
    w.write_all(&(model.k() as u32).to_le_bytes())?;
    let hash = clustering_hash(&model.coclustering);
    w.write_all(&(hash.len() as u32).to_le_bytes())?;
    w.write_all(hash.as_bytes())?;
    model.global.save(w)?;
    for local in &model.locals {
        local.model.save(w)?;
    }
    w.write_all(&(model.lic.hidden as u32).to_le_bytes())?;
    w.write_all(&(model.lic.d as u32).to_le_bytes())?;
    for &x in model
        .lic
        .w1
        .data()
        .iter()
        .chain(model.lic.b1.iter())
        .chain(model.lic.w2.iter())
    {
        w.write_all(&x.as_f64().to_le_bytes())?;
    }
    w.write_all(&model.lic.b2.as_f64().to_le_bytes())?;
    Ok(())
}

pub fn save_bundle_to_path<S: Scalar>(model: &CcwModel<S>, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_bundle(model, &mut f)
}

/// Load a composite checkpoint. Refuses to load when the bundled clustering
/// hash does not match `coclustering`.
pub fn load_bundle<S: Scalar>(
    r: &mut impl Read,
    ds: &InteractionDataset,
    coclustering: CoClustering,
) -> Result<CcwModel<S>> {
    let bad = |msg: String| Error::Validation(format!("composite checkpoint: {msg}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BUNDLE_MAGIC {
        return Err(bad("wrong magic".into()));
    }
    let version = read_u32(r)?;
    if version != 1 {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut mode_tag = [0u8; 1];
    r.read_exact(&mut mode_tag)?;
    let mode = match mode_tag[0] {
        0 => Mode::BaseOnly,
        1 => Mode::EqualWeight,
        2 => Mode::WithLic,
        t => return Err(bad(format!("unknown mode tag {t}"))),
    };
    let k = read_u32(r)? as usize;
    let hash_len = read_u32(r)? as usize;
    if hash_len > 1024 {
        return Err(bad("implausible hash length".into()));
    }
    let mut hash = vec![0u8; hash_len];
    r.read_exact(&mut hash)?;
    let stored_hash = String::from_utf8(hash).map_err(|_| bad("hash is not utf-8".into()))?;

    let coclustering = if coclustering.subgraphs.is_some() {
        coclustering
    } else {
        crate::spectral::build_subgraphs(&ds.incidence_matrix(), coclustering)?
    };
    let actual_hash = clustering_hash(&coclustering);
    if stored_hash != actual_hash {
        return Err(Error::Validation(format!(
            "checkpoint was trained with a different clustering (stored {stored_hash}, supplied {actual_hash})"
        )));
    }
    if k != coclustering.k {
        return Err(bad(format!(
            "checkpoint has {k} local models but the clustering has k={}",
            coclustering.k
        )));
    }

    let global = EmbeddingModel::load(r, ds.train_edges().to_vec())?;
    let subgraphs = coclustering.subgraphs.as_ref().expect("built above");
    let mut locals = Vec::with_capacity(k);
    let mut user_local = vec![usize::MAX; ds.num_users()];
    let mut item_local = vec![usize::MAX; ds.num_items()];
    for sub in subgraphs {
        for (local, &g) in sub.users.iter().enumerate() {
            user_local[g] = local;
        }
        for (local, &g) in sub.items.iter().enumerate() {
            item_local[g] = local;
        }
        let model = EmbeddingModel::load(r, sub.local_edges())?;
        if model.num_users() != sub.users.len() || model.num_items() != sub.items.len() {
            return Err(bad("local model shape does not match its subgraph".into()));
        }
        locals.push(LocalModel {
            model,
            users: sub.users.clone(),
            items: sub.items.clone(),
        });
    }

    let hidden = read_u32(r)? as usize;
    let d = read_u32(r)? as usize;
    let mut lic = LicNetwork::<S>::init(d, hidden, 0);
    for x in lic
        .w1
        .data_mut()
        .iter_mut()
        .chain(lic.b1.iter_mut())
        .chain(lic.w2.iter_mut())
    {
        *x = S::from_f64(read_f64(r)?);
    }
    lic.b2 = S::from_f64(read_f64(r)?);

    Ok(CcwModel {
        global,
        locals,
        coclustering,
        lic,
        mode,
        user_local,
        item_local,
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
