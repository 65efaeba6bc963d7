use super::layers::*;
use super::{NetError, NetworkConfig, ParamSet};
use crate::features::FeatureTensor;
use crate::pit::TrackFrames;
use crate::scalar::Scalar;
use ndarray::{s, Array1, Array2, Array3, ArrayD, ArrayView1, ArrayView2, Axis, Ix1, Ix2, Ix3, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const BRANCHES: [&str; 2] = ["embed", "accdoa"];

#[derive(Clone, Debug)]
struct AttnIdx {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Debug)]
struct BranchIdx {
    conv: Vec<(usize, usize)>,
    proj: (usize, usize),
    attn: Vec<AttnIdx>,
    head: (usize, usize),
}

#[derive(Clone, Debug)]
struct Layout {
    branches: Vec<BranchIdx>,
    stitch: Vec<usize>,
}

struct BlockCache<T> {
    in_shape: (usize, usize, usize),
    /// One patch matrix when both branches see the same input, else two.
    cols: Vec<Array2<T>>,
    pre: Vec<Array3<T>>,
    pooled: Vec<Array3<T>>,
}

struct AttnCache<T> {
    u: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    attn: Vec<Array2<T>>,
    o: Array2<T>,
    xhat: Array2<T>,
    rstd: Array1<T>,
}

struct SeqCache<T> {
    stack_shape: (usize, usize, usize),
    flat: Array2<T>,
    attn: Vec<AttnCache<T>>,
    y: Array2<T>,
}

struct ForwardCache<T> {
    blocks: Vec<BlockCache<T>>,
    seq: Vec<SeqCache<T>>,
    accdoa_out: Array2<T>,
}

/// Holds the intermediate activations of one forward pass for a later
/// backward pass. Backward consumes the cache.
pub struct Tape<T> {
    cache: Option<ForwardCache<T>>,
}

impl<T> Tape<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_none()
    }
}

impl<T> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug)]
pub struct EmbedAccdoaNet<T> {
    config: NetworkConfig,
    params: ParamSet<T>,
    layout: Layout,
}

fn param_shapes(cfg: &NetworkConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for br in BRANCHES {
        let mut c_in = cfg.in_channels;
        for (k, b) in cfg.conv_blocks.iter().enumerate() {
            out.push((format!("{br}.conv{k}.weight"), vec![b.channels, c_in * 9]));
            out.push((format!("{br}.conv{k}.bias"), vec![b.channels]));
            c_in = b.channels;
        }
    }
    if cfg.cross_stitch {
        for (k, b) in cfg.conv_blocks.iter().enumerate() {
            out.push((format!("stitch{k}"), vec![b.channels, 2, 2]));
        }
    }
    let h = cfg.hidden;
    let flat = cfg.out_channels() * cfg.out_bins();
    for (bi, br) in BRANCHES.iter().enumerate() {
        out.push((format!("{br}.proj.weight"), vec![h, flat]));
        out.push((format!("{br}.proj.bias"), vec![h]));
        for a in 0..cfg.attention_blocks {
            for m in ["q", "k", "v", "o"] {
                out.push((format!("{br}.attn{a}.w{m}"), vec![h, h]));
                out.push((format!("{br}.attn{a}.b{m}"), vec![h]));
            }
            out.push((format!("{br}.attn{a}.ln_gamma"), vec![h]));
            out.push((format!("{br}.attn{a}.ln_beta"), vec![h]));
        }
        let width = if bi == 0 { cfg.n_tracks * cfg.embed_dim } else { 3 * cfg.n_tracks };
        out.push((format!("{br}.head.weight"), vec![width, h]));
        out.push((format!("{br}.head.bias"), vec![width]));
    }
    out
}

fn build_layout(cfg: &NetworkConfig, params: &ParamSet<impl Scalar>) -> Layout {
    let idx = |name: String| params.names().iter().position(|n| *n == name).expect("parameter exists");
    let branches = BRANCHES
        .iter()
        .map(|br| BranchIdx {
            conv: (0..cfg.conv_blocks.len())
                .map(|k| (idx(format!("{br}.conv{k}.weight")), idx(format!("{br}.conv{k}.bias"))))
                .collect(),
            proj: (idx(format!("{br}.proj.weight")), idx(format!("{br}.proj.bias"))),
            attn: (0..cfg.attention_blocks)
                .map(|a| AttnIdx {
                    wq: idx(format!("{br}.attn{a}.wq")),
                    bq: idx(format!("{br}.attn{a}.bq")),
                    wk: idx(format!("{br}.attn{a}.wk")),
                    bk: idx(format!("{br}.attn{a}.bk")),
                    wv: idx(format!("{br}.attn{a}.wv")),
                    bv: idx(format!("{br}.attn{a}.bv")),
                    wo: idx(format!("{br}.attn{a}.wo")),
                    bo: idx(format!("{br}.attn{a}.bo")),
                    gamma: idx(format!("{br}.attn{a}.ln_gamma")),
                    beta: idx(format!("{br}.attn{a}.ln_beta")),
                })
                .collect(),
            head: (idx(format!("{br}.head.weight")), idx(format!("{br}.head.bias"))),
        })
        .collect();
    let stitch = if cfg.cross_stitch {
        (0..cfg.conv_blocks.len()).map(|k| idx(format!("stitch{k}"))).collect()
    } else {
        Vec::new()
    };
    Layout { branches, stitch }
}

impl<T: Scalar> EmbedAccdoaNet<T> {
    /// Randomly initialised network; deterministic in `seed`. Biases start at
    /// zero, layer-norm gains at one and cross-stitch units at identity.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in param_shapes(&config) {
            let value = if name.starts_with("stitch") {
                ArrayD::from_shape_fn(IxDyn(&shape), |i| if i[1] == i[2] { T::one() } else { T::zero() })
            } else if name.ends_with("ln_gamma") {
                ArrayD::from_elem(IxDyn(&shape), T::one())
            } else if shape.len() == 1 {
                ArrayD::zeros(IxDyn(&shape))
            } else {
                let fan_in = shape[1] as f64;
                // He scaling ahead of the convolution nonlinearity, unit-variance elsewhere
                let std = if name.contains(".conv") { (2.0 / fan_in).sqrt() } else { (1.0 / fan_in).sqrt() };
                let normal = Normal::new(0.0, std).expect("finite std");
                ArrayD::from_shape_fn(IxDyn(&shape), |_| T::of(normal.sample(&mut rng)))
            };
            params.push(name, value);
        }
        let layout = build_layout(&config, &params);
        Ok(Self { config, params, layout })
    }

    /// Wraps existing parameters, checking names and shapes against `config`.
    pub fn from_params(config: NetworkConfig, params: ParamSet<T>) -> Result<Self, NetError> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != params.len() {
            return Err(NetError::Shape(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), (got_name, got)) in expected.iter().zip(params.iter()) {
            if name != got_name || shape.as_slice() != got.shape() {
                return Err(NetError::Shape(format!(
                    "parameter {got_name} {:?} does not match {name} {:?}",
                    got.shape(),
                    shape
                )));
            }
        }
        let layout = build_layout(&config, &params);
        Ok(Self { config, params, layout })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> EmbedAccdoaNet<U> {
        EmbedAccdoaNet {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    fn p1(&self, i: usize) -> ArrayView1<'_, T> {
        self.params.values()[i].view().into_dimensionality::<Ix1>().expect("rank-1 parameter")
    }

    fn p2(&self, i: usize) -> ArrayView2<'_, T> {
        self.params.values()[i].view().into_dimensionality::<Ix2>().expect("rank-2 parameter")
    }

    fn check_input(&self, x: &FeatureTensor<T>) -> Result<usize, NetError> {
        let (m, f, t) = x.values.dim();
        if m != self.config.in_channels || f != self.config.n_bins {
            return Err(NetError::Shape(format!(
                "features are {m} x {f}, network expects {} x {}",
                self.config.in_channels, self.config.n_bins
            )));
        }
        self.config.out_frames(t)
    }

    /// Track outputs for one feature segment: embeddings (D, N, T/pool) and
    /// ACCDOA vectors (3, N, T/pool).
    pub fn forward(&self, x: &FeatureTensor<T>) -> Result<TrackFrames<T>, NetError> {
        self.check_input(x)?;
        Ok(self.run(x).0)
    }

    pub fn forward_batch(&self, xs: &[FeatureTensor<T>]) -> Result<Vec<TrackFrames<T>>, NetError> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    /// Forward pass that records what [`Self::backward`] needs on `tape`.
    pub fn forward_cached(&self, x: &FeatureTensor<T>, tape: &mut Tape<T>) -> Result<TrackFrames<T>, NetError> {
        self.check_input(x)?;
        let (out, cache) = self.run(x);
        tape.cache = Some(cache);
        Ok(out)
    }

    /// Accumulates into `grads` the parameter gradients of a loss whose
    /// gradient with respect to the outputs is `grad`. Consumes the tape.
    pub fn backward(&self, tape: &mut Tape<T>, grad: &TrackFrames<T>, grads: &mut ParamSet<T>) -> Result<(), NetError> {
        let cache = tape.cache.take().ok_or(NetError::MissingCache)?;
        if grads.names() != self.params.names() {
            return Err(NetError::Shape("gradient buffer does not match the parameters".into()));
        }
        let t_out = cache.accdoa_out.nrows();
        let (d, n) = (self.config.embed_dim, self.config.n_tracks);
        if grad.embeddings.dim() != (d, n, t_out) || grad.accdoa.dim() != (3, n, t_out) {
            return Err(NetError::Shape(format!(
                "output gradient {:?}/{:?} does not match ({d}, {n}, {t_out})",
                grad.embeddings.dim(),
                grad.accdoa.dim()
            )));
        }
        self.backprop(cache, grad, grads);
        Ok(())
    }

    /// Activations of the two convolutional stacks for one input; exposed
    /// for tests of the stack in isolation.
    #[cfg(test)]
    pub(crate) fn conv_stack(&self, x: &FeatureTensor<T>) -> Vec<Array3<T>> {
        self.conv_forward(x).0
    }

    fn conv_forward(&self, x: &FeatureTensor<T>) -> (Vec<Array3<T>>, Vec<BlockCache<T>>) {
        let cfg = &self.config;
        let x0 = avg_pool(x.values.view(), cfg.input_freq_pool, 1);
        let mut h = vec![x0];
        let mut caches = Vec::with_capacity(cfg.conv_blocks.len());
        for (k, blk) in cfg.conv_blocks.iter().enumerate() {
            let in_shape = h[0].dim();
            let (_, f, t) = in_shape;
            let cols: Vec<Array2<T>> = h.iter().map(|a| im2col3x3(a.view())).collect();
            let mut pre = Vec::with_capacity(2);
            let mut pooled = Vec::with_capacity(2);
            for b in 0..2 {
                let (wi, bi) = self.layout.branches[b].conv[k];
                let z = conv_apply(self.p2(wi), self.p1(bi), &cols[b.min(cols.len() - 1)], f, t);
                let act = z.mapv(silu);
                pooled.push(avg_pool(act.view(), blk.freq_pool, blk.time_pool));
                pre.push(z);
            }
            h = if cfg.cross_stitch {
                let st = &self.params.values()[self.layout.stitch[k]];
                let mut h0 = Array3::zeros(pooled[0].dim());
                let mut h1 = Array3::zeros(pooled[0].dim());
                for c in 0..blk.channels {
                    let (p0, p1) = (pooled[0].index_axis(Axis(0), c), pooled[1].index_axis(Axis(0), c));
                    h0.index_axis_mut(Axis(0), c)
                        .assign(&(&p0 * st[[c, 0, 0]] + &p1 * st[[c, 0, 1]]));
                    h1.index_axis_mut(Axis(0), c)
                        .assign(&(&p0 * st[[c, 1, 0]] + &p1 * st[[c, 1, 1]]));
                }
                vec![h0, h1]
            } else {
                pooled.clone()
            };
            caches.push(BlockCache {
                in_shape,
                cols,
                pre,
                pooled,
            });
        }
        (h, caches)
    }

    fn attn_forward(&self, u: Array2<T>, ix: &AttnIdx) -> (Array2<T>, AttnCache<T>) {
        let heads = self.config.attention_heads;
        let dh = self.config.hidden / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let q = linear(u.view(), self.p2(ix.wq), self.p1(ix.bq));
        let k = linear(u.view(), self.p2(ix.wk), self.p1(ix.bk));
        let v = linear(u.view(), self.p2(ix.wv), self.p1(ix.bv));
        let mut o = Array2::zeros(u.dim());
        let mut attn = Vec::with_capacity(heads);
        for hd in 0..heads {
            let r = hd * dh..(hd + 1) * dh;
            let qh = q.slice(s![.., r.clone()]);
            let kh = k.slice(s![.., r.clone()]);
            let mut a = qh.dot(&kh.t()) * scale;
            softmax_rows(&mut a);
            o.slice_mut(s![.., r.clone()]).assign(&a.dot(&v.slice(s![.., r])));
            attn.push(a);
        }
        let r = &u + &linear(o.view(), self.p2(ix.wo), self.p1(ix.bo));
        let (y, xhat, rstd) = layer_norm(r.view(), self.p1(ix.gamma), self.p1(ix.beta));
        (
            y,
            AttnCache {
                u,
                q,
                k,
                v,
                attn,
                o,
                xhat,
                rstd,
            },
        )
    }

    fn run(&self, x: &FeatureTensor<T>) -> (TrackFrames<T>, ForwardCache<T>) {
        let cfg = &self.config;
        let (stacks, blocks) = self.conv_forward(x);
        let mut seq = Vec::with_capacity(2);
        for (b, h) in stacks.iter().enumerate() {
            let (c3, f3, t3) = h.dim();
            let mut flat = Array2::zeros((t3, c3 * f3));
            for c in 0..c3 {
                for f in 0..f3 {
                    flat.column_mut(c * f3 + f).assign(&h.slice(s![c, f, ..]));
                }
            }
            let br = &self.layout.branches[b];
            let mut u = linear(flat.view(), self.p2(br.proj.0), self.p1(br.proj.1));
            u += &positional_encoding::<T>(t3, cfg.hidden);
            let mut attn = Vec::with_capacity(br.attn.len());
            for ix in &br.attn {
                let (y, c) = self.attn_forward(u, ix);
                attn.push(c);
                u = y;
            }
            seq.push(SeqCache {
                stack_shape: (c3, f3, t3),
                flat,
                attn,
                y: u,
            });
        }
        let (d, n) = (cfg.embed_dim, cfg.n_tracks);
        let (we, be) = self.layout.branches[0].head;
        let e = linear(seq[0].y.view(), self.p2(we), self.p1(be));
        let (wa, ba) = self.layout.branches[1].head;
        let a = linear(seq[1].y.view(), self.p2(wa), self.p1(ba)).mapv(|v| v.tanh());
        let t_out = e.nrows();
        let embeddings = Array3::from_shape_fn((d, n, t_out), |(dd, nn, t)| e[[t, nn * d + dd]]);
        let accdoa = Array3::from_shape_fn((3, n, t_out), |(k, nn, t)| a[[t, nn * 3 + k]]);
        (
            TrackFrames { embeddings, accdoa },
            ForwardCache {
                blocks,
                seq,
                accdoa_out: a,
            },
        )
    }

    fn add_grad<D: ndarray::Dimension>(grads: &mut ParamSet<T>, i: usize, g: ndarray::Array<T, D>) {
        let slot = &mut grads.values_mut()[i];
        *slot += &g.into_dyn();
    }

    fn attn_backward(&self, dy: Array2<T>, c: &AttnCache<T>, ix: &AttnIdx, grads: &mut ParamSet<T>) -> Array2<T> {
        let heads = self.config.attention_heads;
        let dh = self.config.hidden / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let (dr, dg, db) = layer_norm_backward(dy.view(), c.xhat.view(), c.rstd.view(), self.p1(ix.gamma));
        Self::add_grad(grads, ix.gamma, dg);
        Self::add_grad(grads, ix.beta, db);
        let (d_o, dwo, dbo) = linear_backward(c.o.view(), self.p2(ix.wo), dr.view(), true);
        Self::add_grad(grads, ix.wo, dwo);
        Self::add_grad(grads, ix.bo, dbo);
        let d_o = d_o.expect("requested");
        let mut dq = Array2::zeros(c.q.dim());
        let mut dk = Array2::zeros(c.k.dim());
        let mut dv = Array2::zeros(c.v.dim());
        for hd in 0..heads {
            let r = hd * dh..(hd + 1) * dh;
            let a = &c.attn[hd];
            let doh = d_o.slice(s![.., r.clone()]);
            let da = doh.dot(&c.v.slice(s![.., r.clone()]).t());
            dv.slice_mut(s![.., r.clone()]).assign(&a.t().dot(&doh));
            let mut ds = &da * a;
            let row_sums = ds.sum_axis(Axis(1));
            for (i, mut row) in ds.rows_mut().into_iter().enumerate() {
                row.zip_mut_with(&a.row(i), |v, &ai| *v = (*v - ai * row_sums[i]) * scale);
            }
            dq.slice_mut(s![.., r.clone()]).assign(&ds.dot(&c.k.slice(s![.., r.clone()])));
            dk.slice_mut(s![.., r.clone()]).assign(&ds.t().dot(&c.q.slice(s![.., r])));
        }
        let mut du = dr;
        for (g, w, b) in [(dq, ix.wq, ix.bq), (dk, ix.wk, ix.bk), (dv, ix.wv, ix.bv)] {
            let (dx, dw, dbias) = linear_backward(c.u.view(), self.p2(w), g.view(), true);
            du += &dx.expect("requested");
            Self::add_grad(grads, w, dw);
            Self::add_grad(grads, b, dbias);
        }
        du
    }

    fn backprop(&self, cache: ForwardCache<T>, grad: &TrackFrames<T>, grads: &mut ParamSet<T>) {
        let cfg = &self.config;
        let (d, n) = (cfg.embed_dim, cfg.n_tracks);
        let t_out = cache.accdoa_out.nrows();
        let ge = Array2::from_shape_fn((t_out, n * d), |(t, j)| grad.embeddings[[j % d, j / d, t]]);
        let ga = Array2::from_shape_fn((t_out, 3 * n), |(t, j)| {
            let a = cache.accdoa_out[[t, j]];
            grad.accdoa[[j % 3, j / 3, t]] * (T::one() - a * a)
        });
        let mut dstack = Vec::with_capacity(2);
        for (b, g) in [ge, ga].into_iter().enumerate() {
            let br = &self.layout.branches[b];
            let sc = &cache.seq[b];
            let (dy, dw, db) = linear_backward(sc.y.view(), self.p2(br.head.0), g.view(), true);
            Self::add_grad(grads, br.head.0, dw);
            Self::add_grad(grads, br.head.1, db);
            let mut du = dy.expect("requested");
            for (ix, ac) in br.attn.iter().zip(sc.attn.iter()).rev() {
                du = self.attn_backward(du, ac, ix, grads);
            }
            let (dflat, dw, db) = linear_backward(sc.flat.view(), self.p2(br.proj.0), du.view(), true);
            Self::add_grad(grads, br.proj.0, dw);
            Self::add_grad(grads, br.proj.1, db);
            let dflat = dflat.expect("requested");
            let (c3, f3, t3) = sc.stack_shape;
            dstack.push(Array3::from_shape_fn((c3, f3, t3), |(c, f, t)| dflat[[t, c * f3 + f]]));
        }

        for (k, (blk, bc)) in cfg.conv_blocks.iter().zip(cache.blocks.iter()).enumerate().rev() {
            let dpooled = if cfg.cross_stitch {
                let si = self.layout.stitch[k];
                let st = self.params.values()[si].view().into_dimensionality::<Ix3>().expect("rank-3");
                let mut dst = Array3::<T>::zeros(st.dim());
                let mut dp0 = Array3::zeros(bc.pooled[0].dim());
                let mut dp1 = Array3::zeros(bc.pooled[0].dim());
                for c in 0..blk.channels {
                    let (dh0, dh1) = (dstack[0].index_axis(Axis(0), c), dstack[1].index_axis(Axis(0), c));
                    let (p0, p1) = (bc.pooled[0].index_axis(Axis(0), c), bc.pooled[1].index_axis(Axis(0), c));
                    dst[[c, 0, 0]] = (&dh0 * &p0).sum();
                    dst[[c, 0, 1]] = (&dh0 * &p1).sum();
                    dst[[c, 1, 0]] = (&dh1 * &p0).sum();
                    dst[[c, 1, 1]] = (&dh1 * &p1).sum();
                    dp0.index_axis_mut(Axis(0), c)
                        .assign(&(&dh0 * st[[c, 0, 0]] + &dh1 * st[[c, 1, 0]]));
                    dp1.index_axis_mut(Axis(0), c)
                        .assign(&(&dh0 * st[[c, 0, 1]] + &dh1 * st[[c, 1, 1]]));
                }
                Self::add_grad(grads, si, dst);
                vec![dp0, dp1]
            } else {
                std::mem::take(&mut dstack)
            };
            let (c_in, f, t) = bc.in_shape;
            let mut dprev = Vec::with_capacity(2);
            for b in 0..2 {
                let pre = &bc.pre[b];
                let ds = avg_pool_backward(dpooled[b].view(), blk.freq_pool, blk.time_pool, pre.dim());
                let mut dz = ds;
                dz.zip_mut_with(pre, |g, &z| *g = *g * silu_grad(z));
                let dz2 = dz.into_shape_with_order((blk.channels, f * t)).expect("contiguous");
                let cols = &bc.cols[b.min(bc.cols.len() - 1)];
                let (wi, bi) = self.layout.branches[b].conv[k];
                Self::add_grad(grads, wi, dz2.dot(&cols.t()));
                Self::add_grad(grads, bi, dz2.sum_axis(Axis(1)));
                if k > 0 {
                    let dcols = self.p2(wi).t().dot(&dz2);
                    dprev.push(col2im3x3(dcols.view(), c_in, f, t));
                }
            }
            dstack = dprev;
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::nn::ConvBlockConfig;
    use crate::pit::{pit_loss_grad, LossConfig};
    use rand::Rng;

    pub(crate) fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            in_channels: 3,
            n_bins: 9,
            input_freq_pool: 2,
            conv_blocks: vec![
                ConvBlockConfig {
                    channels: 3,
                    freq_pool: 2,
                    time_pool: 2,
                },
                ConvBlockConfig {
                    channels: 2,
                    freq_pool: 1,
                    time_pool: 2,
                },
            ],
            hidden: 4,
            attention_blocks: 1,
            attention_heads: 2,
            n_tracks: 2,
            embed_dim: 3,
            cross_stitch: true,
        }
    }

    fn random_input(cfg: &NetworkConfig, frames: usize, seed: u64) -> FeatureTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureTensor {
            values: Array3::from_shape_fn((cfg.in_channels, cfg.n_bins, frames), |_| rng.random_range(-1.0..1.0)),
        }
    }

    /// Perturbs every parameter so that biases, cross-stitch off-diagonals
    /// and layer-norm affine terms all carry gradient signal.
    fn randomize(net: &mut EmbedAccdoaNet<f64>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in net.params_mut().values_mut() {
            v.mapv_inplace(|x| x + rng.random_range(-0.3..0.3));
        }
    }

    fn weighted_output(out: &TrackFrames<f64>, w: &TrackFrames<f64>) -> f64 {
        (&out.embeddings * &w.embeddings).sum() + (&out.accdoa * &w.accdoa).sum()
    }

    fn check_gradients(cfg: NetworkConfig, seed: u64) {
        let mut net = EmbedAccdoaNet::<f64>::new(cfg.clone(), seed).unwrap();
        randomize(&mut net, seed + 1);
        let x = random_input(&cfg, 8, seed + 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
        let t_out = cfg.out_frames(8).unwrap();
        let w = TrackFrames {
            embeddings: Array3::from_shape_fn((cfg.embed_dim, cfg.n_tracks, t_out), |_| rng.random_range(-1.0..1.0)),
            accdoa: Array3::from_shape_fn((3, cfg.n_tracks, t_out), |_| rng.random_range(-1.0..1.0)),
        };
        let mut tape = Tape::new();
        net.forward_cached(&x, &mut tape).unwrap();
        let mut grads = net.params().zeros_like();
        net.backward(&mut tape, &w, &mut grads).unwrap();

        let h = 1e-3;
        for pi in 0..net.params().len() {
            for j in 0..net.params().values()[pi].len() {
                let base = net.params().values()[pi].as_slice().unwrap()[j];
                let mut plus = net.clone();
                plus.params_mut().values_mut()[pi].as_slice_mut().unwrap()[j] = base + h;
                let mut minus = net.clone();
                minus.params_mut().values_mut()[pi].as_slice_mut().unwrap()[j] = base - h;
                let fd = (weighted_output(&plus.forward(&x).unwrap(), &w) - weighted_output(&minus.forward(&x).unwrap(), &w)) / (2.0 * h);
                let an = grads.values()[pi].as_slice().unwrap()[j];
                let err = (fd - an).abs();
                // relative tolerance, with an absolute floor for gradients that are numerically zero
                assert!(
                    err <= 1e-4 * fd.abs().max(an.abs()) + 1e-8,
                    "{}[{j}]: analytic {an}, numeric {fd}",
                    net.params().names()[pi]
                );
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        check_gradients(tiny_config(), 10);
    }

    #[test]
    fn gradients_match_without_cross_stitch_and_with_two_attention_blocks() {
        let mut cfg = tiny_config();
        cfg.cross_stitch = false;
        cfg.attention_blocks = 2;
        check_gradients(cfg, 20);
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let net = EmbedAccdoaNet::<f64>::new(tiny_config(), 0).unwrap();
        let mut grads = net.params().zeros_like();
        let mut tape = Tape::new();
        let g = TrackFrames::zeros(3, 2, 2);
        assert!(matches!(net.backward(&mut tape, &g, &mut grads), Err(NetError::MissingCache)));
        // the tape is consumed by backward
        net.forward_cached(&random_input(&tiny_config(), 8, 1), &mut tape).unwrap();
        net.backward(&mut tape, &g, &mut grads).unwrap();
        assert!(matches!(net.backward(&mut tape, &g, &mut grads), Err(NetError::MissingCache)));
    }

    #[test]
    fn output_shapes_and_frame_checks() {
        let cfg = tiny_config();
        let net = EmbedAccdoaNet::<f64>::new(cfg.clone(), 0).unwrap();
        let out = net.forward(&random_input(&cfg, 12, 0)).unwrap();
        assert_eq!(out.embeddings.dim(), (3, 2, 3));
        assert_eq!(out.accdoa.dim(), (3, 2, 3));
        assert!(matches!(net.forward(&random_input(&cfg, 10, 0)), Err(NetError::Shape(_))));
        let mut wrong = cfg.clone();
        wrong.n_bins = 10;
        assert!(matches!(net.forward(&random_input(&wrong, 8, 0)), Err(NetError::Shape(_))));
        assert!(out.accdoa.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn default_config_pools_a_padded_segment_to_sixteen_frames() {
        let cfg = NetworkConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.out_frames(128).unwrap(), 16);
        assert!(cfg.out_frames(127).is_err());
        assert_eq!(cfg.out_bins(), 4);
    }

    #[test]
    fn zero_input_with_zero_biases_gives_zero_stack_activations() {
        let cfg = tiny_config();
        let net = EmbedAccdoaNet::<f64>::new(cfg.clone(), 3).unwrap();
        let x = FeatureTensor {
            values: Array3::zeros((3, 9, 8)),
        };
        for h in net.conv_stack(&x) {
            assert!(h.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identity_stitch_keeps_branches_independent() {
        let cfg = tiny_config();
        let net = EmbedAccdoaNet::<f64>::new(cfg.clone(), 4).unwrap();
        let x = random_input(&cfg, 8, 5);
        let base = net.forward(&x).unwrap();
        let mut perturbed = net.clone();
        for (name, v) in perturbed.params.names.iter().zip(perturbed.params.values.iter_mut()) {
            if name.starts_with("accdoa.") {
                v.mapv_inplace(|x| x * 1.5 + 0.1);
            }
        }
        let out = perturbed.forward(&x).unwrap();
        assert_eq!(out.embeddings, base.embeddings);
        assert_ne!(out.accdoa, base.accdoa);

        let mut no_stitch = cfg.clone();
        no_stitch.cross_stitch = false;
        let plain = EmbedAccdoaNet::<f64>::new(no_stitch, 4).unwrap();
        assert_eq!(plain.forward(&x).unwrap(), base);
    }

    #[test]
    fn batch_forward_is_deterministic_and_order_covariant() {
        let cfg = tiny_config();
        let net = EmbedAccdoaNet::<f64>::new(cfg.clone(), 6).unwrap();
        let (a, b) = (random_input(&cfg, 8, 7), random_input(&cfg, 8, 8));
        let out = net.forward_batch(&[a.clone(), a.clone(), b.clone()]).unwrap();
        assert_eq!(out[0], out[1]);
        let rev = net.forward_batch(&[b, a]).unwrap();
        assert_eq!(rev[0], out[2]);
        assert_eq!(rev[1], out[0]);
    }

    #[test]
    fn disabled_embedding_loss_leaves_embedding_branch_without_gradient() {
        let cfg = tiny_config();
        let mut net = EmbedAccdoaNet::<f64>::new(cfg.clone(), 9).unwrap();
        randomize(&mut net, 10);
        // restore identity stitching so the branches are decoupled
        for (name, v) in net.params.names.iter().zip(net.params.values.iter_mut()) {
            if name.starts_with("stitch") {
                *v = ArrayD::from_shape_fn(v.raw_dim(), |i| if i[1] == i[2] { 1.0 } else { 0.0 });
            }
        }
        let x = random_input(&cfg, 8, 11);
        let mut tape = Tape::new();
        let out = net.forward_cached(&x, &mut tape).unwrap();
        let mut target = TrackFrames::zeros(3, 2, 2);
        target.accdoa.fill(0.5);
        target.embeddings.fill(0.3);
        let loss_cfg = LossConfig {
            beta_embed: 0.0,
            beta_accdoa: 1.0,
        };
        let (_, _, g) = pit_loss_grad(&target, &out, &loss_cfg).unwrap();
        let mut grads = net.params().zeros_like();
        net.backward(&mut tape, &g, &mut grads).unwrap();
        for (name, v) in grads.iter() {
            if name.starts_with("embed.") {
                assert!(v.iter().all(|&x| x == 0.0), "{name}");
            }
        }
        assert!(grads.get("accdoa.head.weight").unwrap().iter().any(|&x| x != 0.0));

        // doubling the output gradient doubles every parameter gradient
        let mut tape = Tape::new();
        net.forward_cached(&x, &mut tape).unwrap();
        let mut g2 = g.clone();
        g2.scale(2.0);
        let mut grads2 = net.params().zeros_like();
        net.backward(&mut tape, &g2, &mut grads2).unwrap();
        for ((_, a), (_, b)) in grads.iter().zip(grads2.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn from_params_checks_layout() {
        let cfg = tiny_config();
        let net = EmbedAccdoaNet::<f64>::new(cfg.clone(), 0).unwrap();
        let rebuilt = EmbedAccdoaNet::from_params(cfg.clone(), net.params().clone()).unwrap();
        let x = random_input(&cfg, 8, 1);
        assert_eq!(rebuilt.forward(&x).unwrap(), net.forward(&x).unwrap());
        let mut other = cfg.clone();
        other.hidden = 6;
        assert!(EmbedAccdoaNet::from_params(other, net.params().clone()).is_err());
    }
}
