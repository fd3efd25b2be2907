//! Pre-norm transformer encoder with hand-written reverse mode.
//!
//! Row convention: activations are `T x d`, linear maps are `x W + b` with
//! `W: d_in x d_out`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{AsTensor, TensorMut, TensorRef};
use crate::corpus::TokenId;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

macro_rules! layer_fields {
    ($mac:ident) => {
        $mac!(ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, w1, b1, w2, b2)
    };
}

impl LayerParams {
    fn init<R: Rng>(d: usize, ffn: usize, normal: &Normal<f64>, rng: &mut R) -> Self {
        let mut w = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| normal.sample(rng));
        Self {
            ln1_gain: Array1::ones(d),
            ln1_bias: Array1::zeros(d),
            wq: w(d, d),
            bq: Array1::zeros(d),
            wk: w(d, d),
            bk: Array1::zeros(d),
            wv: w(d, d),
            bv: Array1::zeros(d),
            wo: w(d, d),
            bo: Array1::zeros(d),
            ln2_gain: Array1::ones(d),
            ln2_bias: Array1::zeros(d),
            w1: w(d, ffn),
            b1: Array1::zeros(ffn),
            w2: w(ffn, d),
            b2: Array1::zeros(d),
        }
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, TensorRef<'a>)>) {
        macro_rules! push {
            ($($f:ident),*) => { $( out.push((format!("{prefix}.{}", stringify!($f)), self.$f.tensor_ref())); )* };
        }
        layer_fields!(push);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, TensorMut<'a>)>) {
        macro_rules! push {
            ($($f:ident),*) => { $( out.push((format!("{prefix}.{}", stringify!($f)), self.$f.tensor_mut())); )* };
        }
        layer_fields!(push);
    }
}

/// One encoder stack: embeddings, `num_layers` pre-norm blocks, final norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub num_heads: usize,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gain: Array1<f64>,
    pub final_bias: Array1<f64>,
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    ln2: LnCache,
    b: Array2<f64>,
    z: Array2<f64>,
    g: Array2<f64>,
}

/// Activations kept from a forward pass for the reverse pass.
pub struct EncoderCache {
    ids: Vec<TokenId>,
    layers: Vec<LayerCache>,
    final_ln: LnCache,
}

impl EncoderCache {
    /// Attention weights of `layer`, one `T x T` matrix per head.
    pub fn attention(&self, layer: usize) -> &[Array2<f64>] {
        &self.layers[layer].probs
    }
}

impl EncoderParams {
    pub(crate) fn init<R: Rng>(
        vocab: usize,
        max_len: usize,
        d: usize,
        ffn: usize,
        layers: usize,
        heads: usize,
        normal: &Normal<f64>,
        rng: &mut R,
    ) -> Self {
        let token_embedding = Array2::from_shape_fn((vocab, d), |_| normal.sample(rng));
        let position_embedding = Array2::from_shape_fn((max_len, d), |_| normal.sample(rng));
        let layers = (0..layers)
            .map(|_| LayerParams::init(d, ffn, normal, rng))
            .collect();
        Self {
            num_heads: heads,
            token_embedding,
            position_embedding,
            layers,
            final_gain: Array1::ones(d),
            final_bias: Array1::zeros(d),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.token_embedding.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embedding.nrows()
    }

    pub fn max_len(&self) -> usize {
        self.position_embedding.nrows()
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, TensorRef<'a>)>) {
        out.push((format!("{prefix}.token_embedding"), self.token_embedding.tensor_ref()));
        out.push((format!("{prefix}.position_embedding"), self.position_embedding.tensor_ref()));
        for (i, layer) in self.layers.iter().enumerate() {
            layer.tensors(&format!("{prefix}.layers.{i}"), out);
        }
        out.push((format!("{prefix}.final_gain"), self.final_gain.tensor_ref()));
        out.push((format!("{prefix}.final_bias"), self.final_bias.tensor_ref()));
    }

    pub(crate) fn tensors_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, TensorMut<'a>)>,
    ) {
        out.push((format!("{prefix}.token_embedding"), self.token_embedding.tensor_mut()));
        out.push((format!("{prefix}.position_embedding"), self.position_embedding.tensor_mut()));
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.tensors_mut(&format!("{prefix}.layers.{i}"), out);
        }
        out.push((format!("{prefix}.final_gain"), self.final_gain.tensor_mut()));
        out.push((format!("{prefix}.final_bias"), self.final_bias.tensor_mut()));
    }

    /// Forward pass. Ids must be in range and `ids.len() <= max_len()`; callers
    /// validate.
    pub fn forward(&self, ids: &[TokenId]) -> (Array2<f64>, EncoderCache) {
        let t = ids.len();
        let d = self.hidden_dim();
        let mut x = Array2::zeros((t, d));
        for (pos, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(pos);
            row.assign(&self.token_embedding.row(id as usize));
            row += &self.position_embedding.row(pos);
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = self.layer_forward(layer, &x);
            x = next;
            caches.push(cache);
        }
        let (h, final_ln) = layer_norm(&x, &self.final_gain, &self.final_bias);
        (
            h,
            EncoderCache {
                ids: ids.to_vec(),
                layers: caches,
                final_ln,
            },
        )
    }

    fn layer_forward(&self, p: &LayerParams, x: &Array2<f64>) -> (Array2<f64>, LayerCache) {
        let t = x.nrows();
        let d = x.ncols();
        let dh = d / self.num_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let (a, ln1) = layer_norm(x, &p.ln1_gain, &p.ln1_bias);
        let q = a.dot(&p.wq) + &p.bq;
        let k = a.dot(&p.wk) + &p.bk;
        let v = a.dot(&p.wv) + &p.bv;
        let mut o = Array2::zeros((t, d));
        let mut probs = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores *= scale;
            softmax_rows(&mut scores);
            o.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let x1 = x + &(o.dot(&p.wo) + &p.bo);

        let (b, ln2) = layer_norm(&x1, &p.ln2_gain, &p.ln2_bias);
        let z = b.dot(&p.w1) + &p.b1;
        let g = z.mapv(gelu);
        let x2 = &x1 + &(g.dot(&p.w2) + &p.b2);

        (
            x2,
            LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                o,
                ln2,
                b,
                z,
                g,
            },
        )
    }

    /// Reverse pass: accumulates parameter gradients for the loss whose
    /// gradient w.r.t. the output states is `d_out` into `grads`.
    pub fn backward(&self, cache: &EncoderCache, d_out: &Array2<f64>, grads: &mut EncoderParams) {
        let mut dx = layer_norm_backward(
            d_out.view(),
            &cache.final_ln,
            &self.final_gain,
            &mut grads.final_gain,
            &mut grads.final_bias,
        );
        for ((p, c), g) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            dx = self.layer_backward(p, c, dx, g);
        }
        for (pos, &id) in cache.ids.iter().enumerate() {
            let row = dx.row(pos);
            let mut te = grads.token_embedding.row_mut(id as usize);
            te += &row;
            let mut pe = grads.position_embedding.row_mut(pos);
            pe += &row;
        }
    }

    fn layer_backward(
        &self,
        p: &LayerParams,
        c: &LayerCache,
        dx2: Array2<f64>,
        g: &mut LayerParams,
    ) -> Array2<f64> {
        let t = dx2.nrows();
        let d = dx2.ncols();
        let dh = d / self.num_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        // feed-forward branch
        general_mat_mul(1.0, &c.g.t(), &dx2, 1.0, &mut g.w2);
        g.b2 += &dx2.sum_axis(Axis(0));
        let mut dz = dx2.dot(&p.w2.t());
        dz.zip_mut_with(&c.z, |dg, &z| *dg *= gelu_grad(z));
        general_mat_mul(1.0, &c.b.t(), &dz, 1.0, &mut g.w1);
        g.b1 += &dz.sum_axis(Axis(0));
        let db = dz.dot(&p.w1.t());
        let dx1 = dx2 + layer_norm_backward(db.view(), &c.ln2, &p.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);

        // attention branch
        general_mat_mul(1.0, &c.o.t(), &dx1, 1.0, &mut g.wo);
        g.bo += &dx1.sum_axis(Axis(0));
        let d_o = dx1.dot(&p.wo.t());
        let mut dq = Array2::zeros((t, d));
        let mut dk = Array2::zeros((t, d));
        let mut dv = Array2::zeros((t, d));
        for (h, probs) in c.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let d_oh = d_o.slice(cols);
            dv.slice_mut(cols).assign(&probs.t().dot(&d_oh));
            let mut ds = d_oh.dot(&c.v.slice(cols).t());
            for (mut ds_row, p_row) in ds.rows_mut().into_iter().zip(probs.rows()) {
                let dot: f64 = ds_row.iter().zip(p_row).map(|(a, b)| a * b).sum();
                ds_row.zip_mut_with(&p_row, |x, &pv| *x = pv * (*x - dot) * scale);
            }
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        general_mat_mul(1.0, &c.a.t(), &dq, 1.0, &mut g.wq);
        general_mat_mul(1.0, &c.a.t(), &dk, 1.0, &mut g.wk);
        general_mat_mul(1.0, &c.a.t(), &dv, 1.0, &mut g.wv);
        g.bq += &dq.sum_axis(Axis(0));
        g.bk += &dk.sum_axis(Axis(0));
        g.bv += &dv.sum_axis(Axis(0));
        let mut da = dq.dot(&p.wq.t());
        general_mat_mul(1.0, &dk, &p.wk.t(), 1.0, &mut da);
        general_mat_mul(1.0, &dv, &p.wv.t(), 1.0, &mut da);
        dx1 + layer_norm_backward(da.view(), &c.ln1, &p.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias)
    }
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let is = 1.0 / (var + LN_EPS).sqrt();
        row *= is;
        *s = is;
    }
    let y = &xhat * gain + bias;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: ArrayView2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    d_gain: &mut Array1<f64>,
    d_bias: &mut Array1<f64>,
) -> Array2<f64> {
    *d_bias += &dy.sum_axis(Axis(0));
    *d_gain += &(&dy * &cache.xhat).sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = &dy * gain;
    for ((mut row, xh), &is) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(&cache.inv_std)
    {
        let mean_g = row.sum() / d;
        let mean_gx = row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
        row.zip_mut_with(&xh, |g, &x| *g = is * (*g - mean_g - x * mean_gx));
    }
    dx
}

fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + GELU_K * z * z * z)).tanh())
}

fn gelu_grad(z: f64) -> f64 {
    let t = (GELU_C * (z + GELU_K * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * z * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> EncoderParams {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 0.3).unwrap();
        EncoderParams::init(10, 16, 8, 12, 2, 2, &normal, &mut rng)
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let p = small();
        let (_, cache) = p.forward(&[2, 5, 6, 7, 9, 3]);
        for layer in 0..2 {
            for probs in cache.attention(layer) {
                for row in probs.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &z in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(z + h) - gelu(z - h)) / (2.0 * h);
            assert!((fd - gelu_grad(z)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let x = Array2::from_shape_vec((2, 4), vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 5.0, 2.0]).unwrap();
        let (y, _) = layer_norm(&x, &Array1::ones(4), &Array1::zeros(4));
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
