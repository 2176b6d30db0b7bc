//! Attention block forward and reverse passes.

use ndarray::{s, Array1, Array2, Axis};

use crate::scalar::Real;

/// Parameters of one multihead attention block `MAB(Q, K)`.
///
/// Biases and normalization parameters are `1 x d_h` rows so every tensor
/// in the network is an `Array2`.
#[derive(Clone, Debug, PartialEq)]
pub struct MabParams<T: Real> {
    pub wq: Array2<T>,
    pub bq: Array2<T>,
    pub wk: Array2<T>,
    pub bk: Array2<T>,
    pub wv: Array2<T>,
    pub bv: Array2<T>,
    pub wo: Array2<T>,
    pub bo: Array2<T>,
    pub ln0_g: Array2<T>,
    pub ln0_b: Array2<T>,
    pub ln1_g: Array2<T>,
    pub ln1_b: Array2<T>,
}

impl<T: Real> MabParams<T> {
    pub(crate) const NAMES: [&'static str; 12] = [
        "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln0_g", "ln0_b", "ln1_g", "ln1_b",
    ];

    pub fn zeros(d_q: usize, d_k: usize, d_h: usize) -> Self {
        let z = |r, c| Array2::zeros((r, c));
        Self {
            wq: z(d_q, d_h),
            bq: z(1, d_h),
            wk: z(d_k, d_h),
            bk: z(1, d_h),
            wv: z(d_k, d_h),
            bv: z(1, d_h),
            wo: z(d_h, d_h),
            bo: z(1, d_h),
            ln0_g: z(1, d_h),
            ln0_b: z(1, d_h),
            ln1_g: z(1, d_h),
            ln1_b: z(1, d_h),
        }
    }

    pub fn tensors(&self) -> [&Array2<T>; 12] {
        [
            &self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo, &self.bo, &self.ln0_g,
            &self.ln0_b, &self.ln1_g, &self.ln1_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<T>; 12] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln0_g,
            &mut self.ln0_b,
            &mut self.ln1_g,
            &mut self.ln1_b,
        ]
    }
}

pub(crate) fn affine<T: Real>(x: &Array2<T>, w: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    let mut y = x.dot(w);
    y += b;
    y
}

pub(crate) struct LnCache<T: Real> {
    xhat: Array2<T>,
    rstd: Array1<T>,
}

pub(crate) fn layer_norm<T: Real>(x: &Array2<T>, g: &Array2<T>, b: &Array2<T>, eps: T) -> (Array2<T>, LnCache<T>) {
    let d = T::from_count(x.ncols());
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mu = row.sum() / d;
        row.mapv_inplace(|v| v - mu);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *r = T::one() / (var + eps).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| v * rs);
    }
    let mut y = &xhat * g;
    y += b;
    (y, LnCache { xhat, rstd })
}

/// Returns `dx` and accumulates into `dg`, `db`.
pub(crate) fn layer_norm_backward<T: Real>(
    dy: &Array2<T>,
    cache: &LnCache<T>,
    g: &Array2<T>,
    dg: &mut Array2<T>,
    db: &mut Array2<T>,
) -> Array2<T> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d = T::from_count(dy.ncols());
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let (dh, xh) = (dxhat.row(i), cache.xhat.row(i));
        let m1 = dh.sum() / d;
        let m2 = dh.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<T>() / d;
        let r = cache.rstd[i];
        for j in 0..dy.ncols() {
            dx[[i, j]] = r * (dh[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

pub(crate) struct MabCache<T: Real> {
    q_in: Array2<T>,
    k_in: Array2<T>,
    qp: Array2<T>,
    kp: Array2<T>,
    vp: Array2<T>,
    attn: Vec<Array2<T>>,
    ln0: LnCache<T>,
    l0: Array2<T>,
    pre: Array2<T>,
    ln1: LnCache<T>,
}

/// `MAB(Q, K)`. Keys at index `>= key_valid` get zero attention weight.
pub(crate) fn mab_forward<T: Real>(
    p: &MabParams<T>,
    q: &Array2<T>,
    k: &Array2<T>,
    heads: usize,
    key_valid: Option<usize>,
    eps: T,
) -> (Array2<T>, MabCache<T>) {
    let qp = affine(q, &p.wq, &p.bq);
    let kp = affine(k, &p.wk, &p.bk);
    let vp = affine(k, &p.wv, &p.bv);
    let d_h = qp.ncols();
    let hd = d_h / heads;
    let scale = T::one() / T::from_count(hd).sqrt();
    let nk = k.nrows();
    let live = key_valid.filter(|&v| v > 0).unwrap_or(nk).min(nk);
    let mut att = qp.clone();
    let mut attn = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * hd..(h + 1) * hd];
        let kh = kp.slice(s![..live, h * hd..(h + 1) * hd]);
        let mut a = qp.slice(cols).dot(&kh.t());
        a.mapv_inplace(|v| v * scale);
        for mut row in a.rows_mut() {
            let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - mx).exp());
            let z = row.sum();
            row.mapv_inplace(|v| v / z);
        }
        let o = a.dot(&vp.slice(s![..live, h * hd..(h + 1) * hd]));
        let mut dst = att.slice_mut(cols);
        dst += &o;
        attn.push(a);
    }
    let (l0, ln0) = layer_norm(&att, &p.ln0_g, &p.ln0_b, eps);
    let pre = affine(&l0, &p.wo, &p.bo);
    let mut r1 = l0.clone();
    r1.zip_mut_with(&pre, |a, &b| *a += b.max(T::zero()));
    let (out, ln1) = layer_norm(&r1, &p.ln1_g, &p.ln1_b, eps);
    let cache = MabCache {
        q_in: q.clone(),
        k_in: k.clone(),
        qp,
        kp,
        vp,
        attn,
        ln0,
        l0,
        pre,
        ln1,
    };
    (out, cache)
}

/// Accumulates parameter gradients into `g`; returns `(dQ, dK)`.
pub(crate) fn mab_backward<T: Real>(
    p: &MabParams<T>,
    c: &MabCache<T>,
    dout: &Array2<T>,
    heads: usize,
    g: &mut MabParams<T>,
) -> (Array2<T>, Array2<T>) {
    let dr1 = layer_norm_backward(dout, &c.ln1, &p.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
    let mut dpre = dr1.clone();
    dpre.zip_mut_with(&c.pre, |d, &z| {
        if z <= T::zero() {
            *d = T::zero();
        }
    });
    g.wo += &c.l0.t().dot(&dpre);
    g.bo += &dpre.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dl0 = dr1 + dpre.dot(&p.wo.t());
    let dr0 = layer_norm_backward(&dl0, &c.ln0, &p.ln0_g, &mut g.ln0_g, &mut g.ln0_b);

    let d_h = c.qp.ncols();
    let hd = d_h / heads;
    let scale = T::one() / T::from_count(hd).sqrt();
    let live = c.attn[0].ncols();
    let mut dqp = dr0.clone();
    let mut dkp = Array2::zeros(c.kp.raw_dim());
    let mut dvp = Array2::zeros(c.vp.raw_dim());
    for (h, a) in c.attn.iter().enumerate() {
        let cols = s![.., h * hd..(h + 1) * hd];
        let live_cols = s![..live, h * hd..(h + 1) * hd];
        let dout_h = dr0.slice(cols);
        let da = dout_h.dot(&c.vp.slice(live_cols).t());
        let mut dv = dvp.slice_mut(live_cols);
        dv += &a.t().dot(&dout_h);
        // Softmax backward, row by row.
        let mut ds = a * &da;
        for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
            let tot = row.sum();
            row.zip_mut_with(&arow, |v, &aw| *v -= aw * tot);
        }
        ds.mapv_inplace(|v| v * scale);
        let mut dq = dqp.slice_mut(cols);
        dq += &ds.dot(&c.kp.slice(live_cols));
        let mut dk = dkp.slice_mut(live_cols);
        dk += &ds.t().dot(&c.qp.slice(cols));
    }
    g.wq += &c.q_in.t().dot(&dqp);
    g.bq += &dqp.sum_axis(Axis(0)).insert_axis(Axis(0));
    g.wk += &c.k_in.t().dot(&dkp);
    g.bk += &dkp.sum_axis(Axis(0)).insert_axis(Axis(0));
    g.wv += &c.k_in.t().dot(&dvp);
    g.bv += &dvp.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dq_in = dqp.dot(&p.wq.t());
    let dk_in = dkp.dot(&p.wk.t()) + dvp.dot(&p.wv.t());
    (dq_in, dk_in)
}
