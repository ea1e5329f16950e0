//! Joint optimization of the global model, all local models, and the LIC
//! network under BPR loss with Adam.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::InteractionDataset;
use crate::embedcf::Variant;
use crate::linalg::Mat;
use crate::wrapper::{CcwModel, ForwardTables, LicForward, Mode};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig<S> {
    pub learning_rate: S,
    /// L2 coefficient applied inside the loss.
    pub lambda: S,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: S,
    pub adam_beta2: S,
    pub adam_eps: S,
    pub seed: u64,
    /// Validate every this many epochs; 0 disables validation.
    pub eval_every: usize,
    /// Stop after this many validations without Recall@20 improvement;
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
    /// Regularize all parameters each batch instead of only touched rows.
    pub full_reg: bool,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        Self {
            learning_rate: S::from_f64(1e-3),
            lambda: S::from_f64(1e-4),
            batch_size: 2048,
            epochs: 400,
            adam_beta1: S::from_f64(0.9),
            adam_beta2: S::from_f64(0.999),
            adam_eps: S::from_f64(1e-8),
            seed: 0,
            eval_every: 10,
            early_stop_patience: 5,
            full_reg: false,
        }
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= S::zero() {
            return Err(Error::Argument("learning_rate must be positive".into()));
        }
        if self.lambda < S::zero() {
            return Err(Error::Argument("lambda must be nonnegative".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Argument("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One BPR comparison: user `u` prefers observed item `i` over unobserved `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub u: usize,
    pub i: usize,
    pub j: usize,
}

/// Uniform positive-edge draw with one rejection-sampled negative per
/// positive. Users whose train set covers every item are skipped.
pub fn sample_triples(
    ds: &InteractionDataset,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BprTriple>> {
    let edges = ds.train_edges();
    if edges.is_empty() {
        return Err(Error::Argument("cannot sample from an empty train set".into()));
    }
    let mut out = Vec::with_capacity(batch_size);
    let mut warned = false;
    let mut attempts = 0usize;
    while out.len() < batch_size {
        attempts += 1;
        if attempts > batch_size.saturating_mul(1000) {
            return Err(Error::Argument(
                "negative sampling failed: no user has a non-interacted item".into(),
            ));
        }
        let (u, i) = edges[rng.gen_range(0..edges.len())];
        if ds.train_items(u).len() == ds.num_items() {
            if !warned {
                log::warn!("user {u} interacts with every item; excluded from sampling");
                warned = true;
            }
            continue;
        }
        let j = loop {
            let candidate = rng.gen_range(0..ds.num_items());
            if ds.train_items(u).binary_search(&candidate).is_err() {
                break candidate;
            }
        };
        out.push(BprTriple { u, i, j });
    }
    Ok(out)
}

/// Per-batch gradients, in raw parameter space.
pub struct Grads<S> {
    pub global_user: Mat<S>,
    pub global_item: Mat<S>,
    pub locals: Vec<(Mat<S>, Mat<S>)>,
    pub lic_w1: Mat<S>,
    pub lic_b1: Vec<S>,
    pub lic_w2: Vec<S>,
    pub lic_b2: S,
    pub lic_touched: bool,
    pub touched: TouchedRows,
}

/// Raw rows receiving gradient this batch; Adam updates exactly these.
#[derive(Debug, Default, Clone)]
pub struct TouchedRows {
    pub global_users: BTreeSet<usize>,
    pub global_items: BTreeSet<usize>,
    pub locals: Vec<(BTreeSet<usize>, BTreeSet<usize>)>,
}

impl<S: Scalar> Grads<S> {
    fn zeros(model: &CcwModel<S>) -> Self {
        let d = model.global.d;
        Self {
            global_user: Mat::zeros(model.global.num_users(), d),
            global_item: Mat::zeros(model.global.num_items(), d),
            locals: model
                .locals
                .iter()
                .map(|l| {
                    (
                        Mat::zeros(l.model.num_users(), d),
                        Mat::zeros(l.model.num_items(), d),
                    )
                })
                .collect(),
            lic_w1: Mat::zeros(model.lic.hidden, 2 * d),
            lic_b1: vec![S::zero(); model.lic.hidden],
            lic_w2: vec![S::zero(); model.lic.hidden],
            lic_b2: S::zero(),
            lic_touched: false,
            touched: TouchedRows {
                locals: vec![Default::default(); model.locals.len()],
                ..Default::default()
            },
        }
    }
}

/// Numerically stable -ln sigma(x) = softplus(-x).
pub fn neg_log_sigmoid<S: Scalar>(x: S) -> S {
    softplus(-x)
}

fn softplus<S: Scalar>(x: S) -> S {
    if x > S::from_f64(30.0) {
        x
    } else if x < S::from_f64(-30.0) {
        x.exp()
    } else {
        (S::one() + x.exp()).ln()
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// BPR loss of a batch: mean of -ln sigma(y_ui - y_uj) plus lambda times the
/// squared norm of the parameters the batch touches.
pub fn bpr_loss<S: Scalar>(model: &CcwModel<S>, batch: &[BprTriple], lambda: S) -> S {
    batch_pass(model, batch, lambda, false, false).0
}

/// Loss and gradients of a batch. `full_reg` regularizes every parameter
/// instead of only the touched rows.
pub fn bpr_loss_and_grads<S: Scalar>(
    model: &CcwModel<S>,
    batch: &[BprTriple],
    lambda: S,
    full_reg: bool,
) -> (S, Grads<S>) {
    let (loss, grads) = batch_pass(model, batch, lambda, full_reg, true);
    (loss, grads.expect("gradients requested"))
}

fn batch_pass<S: Scalar>(
    model: &CcwModel<S>,
    batch: &[BprTriple],
    lambda: S,
    full_reg: bool,
    want_grads: bool,
) -> (S, Option<Grads<S>>) {
    let tables = model.forward_tables();
    let mut grads = if want_grads { Some(Grads::zeros(model)) } else { None };

    // LIC forwards are cached per node within the batch.
    let mut lic_users: HashMap<usize, LicForward<S>> = HashMap::new();
    let mut lic_items: HashMap<usize, LicForward<S>> = HashMap::new();

    let n = S::from_usize(batch.len().max(1));
    let mut data_loss = S::zero();
    let mut touched = TouchedRows {
        locals: vec![Default::default(); model.locals.len()],
        ..Default::default()
    };

    // Effective-space gradient accumulators (raw space for plain models).
    let mut eff = if want_grads { Some(EffGrads::zeros(model)) } else { None };

    for t in batch {
        let s_ui = pair_score(model, &tables, &mut lic_users, &mut lic_items, t.u, t.i);
        let s_uj = pair_score(model, &tables, &mut lic_users, &mut lic_items, t.u, t.j);
        let diff = s_ui - s_uj;
        data_loss += neg_log_sigmoid(diff);

        touched.global_users.insert(t.u);
        touched.global_items.insert(t.i);
        touched.global_items.insert(t.j);
        for &(item, _sign) in &[(t.i, 1), (t.j, -1)] {
            if model.mode != Mode::BaseOnly && model.coclustering.same_cluster(t.u, item) {
                let c = model.coclustering.user_assignment[t.u];
                touched.locals[c].0.insert(model.user_local[t.u]);
                touched.locals[c].1.insert(model.item_local[item]);
            }
        }

        if let Some(eff) = eff.as_mut() {
            // dL/d s_ui = -sigma(-diff)/n ; dL/d s_uj = +sigma(-diff)/n
            let w = sigmoid(-diff) / n;
            backprop_pair(model, &tables, &lic_users, &lic_items, eff, t.u, t.i, -w);
            backprop_pair(model, &tables, &lic_users, &lic_items, eff, t.u, t.j, w);
        }
    }
    let mut loss = data_loss / n;

    // Finish the gradient pass: propagate effective grads back to raw space.
    if let (Some(eff), Some(grads)) = (eff, grads.as_mut()) {
        to_raw_space(model, eff, grads);
        grads.touched = touched.clone();
        // Propagation spreads gradient across every raw row of the table.
        if matches!(model.global.variant, Variant::Propagated { .. }) {
            grads.touched.global_users = (0..model.global.num_users()).collect();
            grads.touched.global_items = (0..model.global.num_items()).collect();
        }
        for (c, l) in model.locals.iter().enumerate() {
            if matches!(l.model.variant, Variant::Propagated { .. })
                && !(touched.locals[c].0.is_empty() && touched.locals[c].1.is_empty())
            {
                grads.touched.locals[c].0 = (0..l.model.num_users()).collect();
                grads.touched.locals[c].1 = (0..l.model.num_items()).collect();
            }
        }
    }

    // Regularizer over touched parameters (or everything with full_reg).
    let lic_active = model.mode == Mode::WithLic
        && touched.locals.iter().any(|(u, i)| !u.is_empty() || !i.is_empty());
    if lambda > S::zero() {
        let two_lambda = S::from_f64(2.0) * lambda;
        let mut reg = S::zero();
        {
            let mut row_reg = |row: &[S], grad_row: Option<&mut [S]>| {
                reg += crate::linalg::dot(row, row);
                if let Some(g) = grad_row {
                    crate::linalg::axpy(two_lambda, row, g);
                }
            };
            if full_reg {
                for u in 0..model.global.num_users() {
                    row_reg(
                        model.global.user_emb.row(u),
                        grads.as_mut().map(|g| g.global_user.row_mut(u)),
                    );
                }
                for i in 0..model.global.num_items() {
                    row_reg(
                        model.global.item_emb.row(i),
                        grads.as_mut().map(|g| g.global_item.row_mut(i)),
                    );
                }
                for (c, l) in model.locals.iter().enumerate() {
                    for u in 0..l.model.num_users() {
                        row_reg(
                            l.model.user_emb.row(u),
                            grads.as_mut().map(|g| g.locals[c].0.row_mut(u)),
                        );
                    }
                    for i in 0..l.model.num_items() {
                        row_reg(
                            l.model.item_emb.row(i),
                            grads.as_mut().map(|g| g.locals[c].1.row_mut(i)),
                        );
                    }
                }
            } else {
                for &u in &touched.global_users {
                    row_reg(
                        model.global.user_emb.row(u),
                        grads.as_mut().map(|g| g.global_user.row_mut(u)),
                    );
                }
                for &i in &touched.global_items {
                    row_reg(
                        model.global.item_emb.row(i),
                        grads.as_mut().map(|g| g.global_item.row_mut(i)),
                    );
                }
                for (c, (us, is)) in touched.locals.iter().enumerate() {
                    for &u in us {
                        row_reg(
                            model.locals[c].model.user_emb.row(u),
                            grads.as_mut().map(|g| g.locals[c].0.row_mut(u)),
                        );
                    }
                    for &i in is {
                        row_reg(
                            model.locals[c].model.item_emb.row(i),
                            grads.as_mut().map(|g| g.locals[c].1.row_mut(i)),
                        );
                    }
                }
            }
        }
        if lic_active || (full_reg && model.mode == Mode::WithLic) {
            reg += model.lic.w1.norm_sq()
                + crate::linalg::dot(&model.lic.b1, &model.lic.b1)
                + crate::linalg::dot(&model.lic.w2, &model.lic.w2)
                + model.lic.b2 * model.lic.b2;
            if let Some(g) = grads.as_mut() {
                for (gr, &w) in g.lic_w1.data_mut().iter_mut().zip(model.lic.w1.data()) {
                    *gr += two_lambda * w;
                }
                for (gr, &w) in g.lic_b1.iter_mut().zip(&model.lic.b1) {
                    *gr += two_lambda * w;
                }
                for (gr, &w) in g.lic_w2.iter_mut().zip(&model.lic.w2) {
                    *gr += two_lambda * w;
                }
                g.lic_b2 += two_lambda * model.lic.b2;
                g.lic_touched = true;
            }
        }
        loss += lambda * reg;
    }
    if let Some(g) = grads.as_mut() {
        if lic_active {
            g.lic_touched = true;
        }
    }

    (loss, grads)
}

fn pair_score<S: Scalar>(
    model: &CcwModel<S>,
    tables: &ForwardTables<S>,
    lic_users: &mut HashMap<usize, LicForward<S>>,
    lic_items: &mut HashMap<usize, LicForward<S>>,
    u: usize,
    i: usize,
) -> S {
    let global = crate::linalg::dot(tables.global_user.row(u), tables.global_item.row(i));
    if model.mode == Mode::BaseOnly || !model.coclustering.same_cluster(u, i) {
        return global;
    }
    let lu = model.local_user_embedding(tables, u);
    let li = model.local_item_embedding(tables, i);
    let local_dot = crate::linalg::dot(lu, li);
    match model.mode {
        Mode::EqualWeight => global + local_dot,
        Mode::WithLic => {
            let a_u = lic_users
                .entry(u)
                .or_insert_with(|| model.lic_user(tables, u))
                .output;
            let a_i = lic_items
                .entry(i)
                .or_insert_with(|| model.lic_item(tables, i))
                .output;
            global + a_u * a_i * local_dot
        }
        Mode::BaseOnly => unreachable!(),
    }
}

/// Gradient accumulators in effective-embedding space, plus LIC tensors.
struct EffGrads<S> {
    global_user: Mat<S>,
    global_item: Mat<S>,
    locals: Vec<(Mat<S>, Mat<S>)>,
    lic_w1: Mat<S>,
    lic_b1: Vec<S>,
    lic_w2: Vec<S>,
    lic_b2: S,
}

impl<S: Scalar> EffGrads<S> {
    fn zeros(model: &CcwModel<S>) -> Self {
        let d = model.global.d;
        Self {
            global_user: Mat::zeros(model.global.num_users(), d),
            global_item: Mat::zeros(model.global.num_items(), d),
            locals: model
                .locals
                .iter()
                .map(|l| {
                    (
                        Mat::zeros(l.model.num_users(), d),
                        Mat::zeros(l.model.num_items(), d),
                    )
                })
                .collect(),
            lic_w1: Mat::zeros(model.lic.hidden, 2 * d),
            lic_b1: vec![S::zero(); model.lic.hidden],
            lic_w2: vec![S::zero(); model.lic.hidden],
            lic_b2: S::zero(),
        }
    }
}

/// Accumulate d(score(u,i))/d(parameters) scaled by `w` into `eff`.
#[allow(clippy::too_many_arguments)]
fn backprop_pair<S: Scalar>(
    model: &CcwModel<S>,
    tables: &ForwardTables<S>,
    lic_users: &HashMap<usize, LicForward<S>>,
    lic_items: &HashMap<usize, LicForward<S>>,
    eff: &mut EffGrads<S>,
    u: usize,
    i: usize,
    w: S,
) {
    // global term
    {
        let gi = tables.global_item.row(i).to_vec();
        crate::linalg::axpy(w, &gi, eff.global_user.row_mut(u));
        let gu = tables.global_user.row(u).to_vec();
        crate::linalg::axpy(w, &gu, eff.global_item.row_mut(i));
    }
    if model.mode == Mode::BaseOnly || !model.coclustering.same_cluster(u, i) {
        return;
    }
    let c = model.coclustering.user_assignment[u];
    let lu_row = model.user_local[u];
    let li_row = model.item_local[i];
    let lu = model.local_user_embedding(tables, u).to_vec();
    let li = model.local_item_embedding(tables, i).to_vec();
    let local_dot = crate::linalg::dot(&lu, &li);

    match model.mode {
        Mode::EqualWeight => {
            crate::linalg::axpy(w, &li, eff.locals[c].0.row_mut(lu_row));
            crate::linalg::axpy(w, &lu, eff.locals[c].1.row_mut(li_row));
        }
        Mode::WithLic => {
            let fu = &lic_users[&u];
            let fi = &lic_items[&i];
            let (a_u, a_i) = (fu.output, fi.output);
            // direct paths through the local embeddings
            crate::linalg::axpy(w * a_u * a_i, &li, eff.locals[c].0.row_mut(lu_row));
            crate::linalg::axpy(w * a_u * a_i, &lu, eff.locals[c].1.row_mut(li_row));
            // paths through the two LIC scalars
            let da_u = w * a_i * local_dot;
            let da_i = w * a_u * local_dot;
            backprop_lic(model, eff, fu, da_u, u, lu_row, c, true);
            backprop_lic(model, eff, fi, da_i, i, li_row, c, false);
        }
        Mode::BaseOnly => unreachable!(),
    }
}

/// Backpropagate an upstream gradient `da` on one node's LIC output through
/// the MLP, into the LIC tensors and the node's global/local embeddings.
#[allow(clippy::too_many_arguments)]
fn backprop_lic<S: Scalar>(
    model: &CcwModel<S>,
    eff: &mut EffGrads<S>,
    forward: &LicForward<S>,
    da: S,
    global_idx: usize,
    local_row: usize,
    cluster: usize,
    is_user: bool,
) {
    let d = model.lic.d;
    // output layer
    crate::linalg::axpy(da, &forward.hidden, &mut eff.lic_w2);
    eff.lic_b2 += da;
    // hidden layer
    let mut dinput = vec![S::zero(); 2 * d];
    for h in 0..model.lic.hidden {
        if forward.pre_act[h] <= S::zero() {
            continue;
        }
        let dz = da * model.lic.w2[h];
        crate::linalg::axpy(dz, &forward.input, eff.lic_w1.row_mut(h));
        eff.lic_b1[h] += dz;
        crate::linalg::axpy(dz, model.lic.w1.row(h), &mut dinput);
    }
    let (dg, dl) = dinput.split_at(d);
    if is_user {
        crate::linalg::axpy(S::one(), dg, eff.global_user.row_mut(global_idx));
        crate::linalg::axpy(S::one(), dl, eff.locals[cluster].0.row_mut(local_row));
    } else {
        crate::linalg::axpy(S::one(), dg, eff.global_item.row_mut(global_idx));
        crate::linalg::axpy(S::one(), dl, eff.locals[cluster].1.row_mut(local_row));
    }
}

/// Map effective-space gradients to raw parameter space. For plain models the
/// spaces coincide; for propagated models the (symmetric) propagation
/// operator is applied to the gradient tables.
fn to_raw_space<S: Scalar>(model: &CcwModel<S>, eff: EffGrads<S>, grads: &mut Grads<S>) {
    match model.global.variant {
        Variant::Plain => {
            grads.global_user = eff.global_user;
            grads.global_item = eff.global_item;
        }
        Variant::Propagated { layers } => {
            let (gu, gi) = model
                .global
                .propagate_tables(&eff.global_user, &eff.global_item, layers);
            grads.global_user = gu;
            grads.global_item = gi;
        }
    }
    for (c, (eu, ei)) in eff.locals.into_iter().enumerate() {
        match model.locals[c].model.variant {
            Variant::Plain => {
                grads.locals[c] = (eu, ei);
            }
            Variant::Propagated { layers } => {
                grads.locals[c] = model.locals[c].model.propagate_tables(&eu, &ei, layers);
            }
        }
    }
    grads.lic_w1 = eff.lic_w1;
    grads.lic_b1 = eff.lic_b1;
    grads.lic_w2 = eff.lic_w2;
    grads.lic_b2 = eff.lic_b2;
}

/// Per-row lazy Adam state for one embedding table.
struct AdamTable<S> {
    m: Mat<S>,
    v: Mat<S>,
    t: Vec<u64>,
}

impl<S: Scalar> AdamTable<S> {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Mat::zeros(rows, cols),
            v: Mat::zeros(rows, cols),
            t: vec![0; rows],
        }
    }

    fn step(
        &mut self,
        row: usize,
        params: &mut [S],
        grad: &[S],
        cfg: &TrainConfig<S>,
    ) {
        self.t[row] += 1;
        let t = self.t[row];
        adam_update(
            params,
            grad,
            self.m.row_mut(row),
            self.v.row_mut(row),
            t,
            cfg,
        );
    }
}

fn adam_update<S: Scalar>(
    params: &mut [S],
    grad: &[S],
    m: &mut [S],
    v: &mut [S],
    t: u64,
    cfg: &TrainConfig<S>,
) {
    let b1 = cfg.adam_beta1;
    let b2 = cfg.adam_beta2;
    let bc1 = S::one() - b1.powi(t as i32);
    let bc2 = S::one() - b2.powi(t as i32);
    for k in 0..params.len() {
        m[k] = b1 * m[k] + (S::one() - b1) * grad[k];
        v[k] = b2 * v[k] + (S::one() - b2) * grad[k] * grad[k];
        let m_hat = m[k] / bc1;
        let v_hat = v[k] / bc2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
}

struct AdamState<S> {
    global_user: AdamTable<S>,
    global_item: AdamTable<S>,
    locals: Vec<(AdamTable<S>, AdamTable<S>)>,
    lic_w1: (Mat<S>, Mat<S>),
    lic_b1: (Vec<S>, Vec<S>),
    lic_w2: (Vec<S>, Vec<S>),
    lic_b2: (S, S),
    lic_t: u64,
}

impl<S: Scalar> AdamState<S> {
    fn new(model: &CcwModel<S>) -> Self {
        let d = model.global.d;
        Self {
            global_user: AdamTable::new(model.global.num_users(), d),
            global_item: AdamTable::new(model.global.num_items(), d),
            locals: model
                .locals
                .iter()
                .map(|l| {
                    (
                        AdamTable::new(l.model.num_users(), d),
                        AdamTable::new(l.model.num_items(), d),
                    )
                })
                .collect(),
            lic_w1: (
                Mat::zeros(model.lic.hidden, 2 * d),
                Mat::zeros(model.lic.hidden, 2 * d),
            ),
            lic_b1: (vec![S::zero(); model.lic.hidden], vec![S::zero(); model.lic.hidden]),
            lic_w2: (vec![S::zero(); model.lic.hidden], vec![S::zero(); model.lic.hidden]),
            lic_b2: (S::zero(), S::zero()),
            lic_t: 0,
        }
    }

    fn apply(&mut self, model: &mut CcwModel<S>, grads: &Grads<S>, cfg: &TrainConfig<S>) {
        for &u in &grads.touched.global_users {
            self.global_user
                .step(u, model.global.user_emb.row_mut(u), grads.global_user.row(u), cfg);
        }
        for &i in &grads.touched.global_items {
            self.global_item
                .step(i, model.global.item_emb.row_mut(i), grads.global_item.row(i), cfg);
        }
        for (c, (us, is)) in grads.touched.locals.iter().enumerate() {
            for &u in us {
                self.locals[c].0.step(
                    u,
                    model.locals[c].model.user_emb.row_mut(u),
                    grads.locals[c].0.row(u),
                    cfg,
                );
            }
            for &i in is {
                self.locals[c].1.step(
                    i,
                    model.locals[c].model.item_emb.row_mut(i),
                    grads.locals[c].1.row(i),
                    cfg,
                );
            }
        }
        if grads.lic_touched {
            self.lic_t += 1;
            let t = self.lic_t;
            adam_update(
                model.lic.w1.data_mut(),
                grads.lic_w1.data(),
                self.lic_w1.0.data_mut(),
                self.lic_w1.1.data_mut(),
                t,
                cfg,
            );
            adam_update(&mut model.lic.b1, &grads.lic_b1, &mut self.lic_b1.0, &mut self.lic_b1.1, t, cfg);
            adam_update(&mut model.lic.w2, &grads.lic_w2, &mut self.lic_w2.0, &mut self.lic_w2.1, t, cfg);
            let mut b2 = [model.lic.b2];
            let mut m = [self.lic_b2.0];
            let mut v = [self.lic_b2.1];
            adam_update(&mut b2, &[grads.lic_b2], &mut m, &mut v, t, cfg);
            model.lic.b2 = b2[0];
            self.lic_b2 = (m[0], v[0]);
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_recall: Option<f64>,
    pub val_ndcg: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutput<S> {
    pub model: CcwModel<S>,
    pub history: Vec<EpochRecord>,
}

/// Mini-batch Adam on BPR loss over all k+1 models and the LIC network, with
/// periodic validation on the test split and best-checkpoint retention on
/// Recall@20. Deterministic given the config seed.
pub fn train_ccw<S: Scalar>(
    mut model: CcwModel<S>,
    ds: &InteractionDataset,
    cfg: &TrainConfig<S>,
) -> Result<TrainOutput<S>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model);
    let batches_per_epoch = ds.train_edges().len().div_ceil(cfg.batch_size).max(1);
    let can_validate = cfg.eval_every > 0 && !ds.test_edges().is_empty();

    let mut history = Vec::new();
    let mut best: Option<(S, CcwModel<S>)> = None;
    let mut evals_since_improvement = 0usize;

    for epoch in 1..=cfg.epochs {
        for _ in 0..batches_per_epoch {
            let batch = sample_triples(ds, cfg.batch_size, &mut rng)?;
            let (loss, grads) = bpr_loss_and_grads(&model, &batch, cfg.lambda, cfg.full_reg);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss} at epoch {epoch}; first triples of the batch: {:?}",
                    &batch[..batch.len().min(8)]
                )));
            }
            adam.apply(&mut model, &grads, cfg);
        }
        // epoch-level loss snapshot from a fresh sample (cheap, unbiased)
        let epoch_loss = {
            let probe = sample_triples(ds, cfg.batch_size.min(4096), &mut rng)?;
            bpr_loss(&model, &probe, cfg.lambda)
        };

        let mut record = EpochRecord {
            epoch,
            loss: epoch_loss.as_f64(),
            val_recall: None,
            val_ndcg: None,
        };
        if can_validate && epoch % cfg.eval_every == 0 {
            let report = crate::evalkit::evaluate(&model, ds, 20)?;
            record.val_recall = Some(report.recall.as_f64());
            record.val_ndcg = Some(report.ndcg.as_f64());
            let improved = match &best {
                None => true,
                Some((r, _)) => report.recall > *r,
            };
            if improved {
                best = Some((report.recall, model.clone()));
                evals_since_improvement = 0;
            } else {
                evals_since_improvement += 1;
                if cfg.early_stop_patience > 0
                    && evals_since_improvement >= cfg.early_stop_patience
                {
                    history.push(record);
                    break;
                }
            }
        }
        history.push(record);
    }

    let model = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok(TrainOutput { model, history })
}

/// Per-epoch metrics log: `epoch,loss,val_recall@20,val_ndcg@20`.
pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,val_recall@20,val_ndcg@20\n");
    for r in history {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch,
            r.loss,
            fmt(r.val_recall),
            fmt(r.val_ndcg)
        ));
    }
    out
}
