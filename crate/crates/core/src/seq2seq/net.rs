//! Parameter layout, forward pass and hand-written backward pass of the
//! attention encoder-decoder.
//!
//! GRU cells follow the usual gate equations
//!   r = σ(W_ir x + W_hr h + b_r)
//!   z = σ(W_iz x + W_hz h + b_z)
//!   n = tanh(W_in x + b_n + r ⊙ (W_hn h + b_hn))
//!   h' = (1 - z) ⊙ n + z ⊙ h
//! Attention is additive: `e_i = v · tanh(W_q s + W_k h_i + b)`. The output
//! layer is `o = tanh(W_c [s; c] + b_c)`, `logits = W_o o + b_o`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Gru {
    pub input: usize,
    pub hidden: usize,
    /// `3H x input`, gate blocks ordered r, z, n.
    pub wi: usize,
    /// `3H x H`.
    pub wh: usize,
    /// `3H`: b_r, b_z, b_n.
    pub bi: usize,
    /// `H`.
    pub bhn: usize,
}

struct Alloc(usize);

impl Alloc {
    fn take(&mut self, n: usize) -> usize {
        let o = self.0;
        self.0 += n;
        o
    }

    fn gru(&mut self, input: usize, hidden: usize) -> Gru {
        Gru {
            input,
            hidden,
            wi: self.take(3 * hidden * input),
            wh: self.take(3 * hidden * hidden),
            bi: self.take(3 * hidden),
            bhn: self.take(hidden),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub vin: usize,
    pub vout: usize,
    pub emb: usize,
    pub hid: usize,
    pub enc_emb: usize,
    /// Layer 1 forward, layer 1 backward, layer 2 forward, layer 2 backward.
    pub enc: [Gru; 4],
    pub dec_emb: usize,
    pub dec: [Gru; 2],
    pub att_wq: usize,
    pub att_wk: usize,
    pub att_b: usize,
    pub att_v: usize,
    pub out_wc: usize,
    pub out_bc: usize,
    pub out_wo: usize,
    pub out_bo: usize,
    pub total: usize,
}

/// Named parameter groups, for gradient reports.
pub(crate) const GROUPS: [&str; 8] = [
    "encoder_embedding",
    "encoder_layer1",
    "encoder_layer2",
    "decoder_embedding",
    "decoder_layer1",
    "decoder_layer2",
    "attention",
    "output",
];

impl Layout {
    pub fn new(vin: usize, vout: usize, emb: usize, hid: usize) -> Self {
        let mut a = Alloc(0);
        let enc_emb = a.take(vin * emb);
        let enc = [a.gru(emb, hid), a.gru(emb, hid), a.gru(2 * hid, hid), a.gru(2 * hid, hid)];
        let dec_emb = a.take(vout * emb);
        let dec = [a.gru(emb, hid), a.gru(hid, hid)];
        let att_wq = a.take(hid * hid);
        let att_wk = a.take(hid * 2 * hid);
        let att_b = a.take(hid);
        let att_v = a.take(hid);
        let out_wc = a.take(hid * 3 * hid);
        let out_bc = a.take(hid);
        let out_wo = a.take(vout * hid);
        let out_bo = a.take(vout);
        Self {
            vin,
            vout,
            emb,
            hid,
            enc_emb,
            enc,
            dec_emb,
            dec,
            att_wq,
            att_wk,
            att_b,
            att_v,
            out_wc,
            out_bc,
            out_wo,
            out_bo,
            total: a.0,
        }
    }

    /// Index into `GROUPS` of the group holding parameter `i`.
    pub fn group_of(&self, i: usize) -> usize {
        let starts = [
            self.enc_emb,
            self.enc[0].wi,
            self.enc[2].wi,
            self.dec_emb,
            self.dec[0].wi,
            self.dec[1].wi,
            self.att_wq,
            self.out_wc,
        ];
        starts.iter().rposition(|&s| s <= i).expect("offset within layout")
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W x` for row-major `W` of shape `rows x x.len()`.
fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx += W^T dy`.
fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (x, &a) in dx.iter_mut().zip(row) {
            *x += a * d;
        }
    }
}

/// `gW += dy x^T`.
fn outer_acc(gw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut gw[r * cols..(r + 1) * cols];
        for (g, &v) in row.iter_mut().zip(x) {
            *g += d * v;
        }
    }
}

pub(crate) struct GruStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn gru_step(p: &[f64], g: Gru, x: &[f64], h_prev: &[f64]) -> GruStep {
    let hd = g.hidden;
    let mut gi = p[g.bi..g.bi + 3 * hd].to_vec();
    matvec_acc(&p[g.wi..g.wi + 3 * hd * g.input], x, &mut gi);
    let mut gh = vec![0.0; 3 * hd];
    matvec_acc(&p[g.wh..g.wh + 3 * hd * hd], h_prev, &mut gh);
    let mut st = GruStep {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r: vec![0.0; hd],
        z: vec![0.0; hd],
        n: vec![0.0; hd],
        hn: vec![0.0; hd],
        h: vec![0.0; hd],
    };
    for k in 0..hd {
        st.r[k] = sigmoid(gi[k] + gh[k]);
        st.z[k] = sigmoid(gi[hd + k] + gh[hd + k]);
        st.hn[k] = gh[2 * hd + k] + p[g.bhn + k];
        st.n[k] = (gi[2 * hd + k] + st.r[k] * st.hn[k]).tanh();
        st.h[k] = (1.0 - st.z[k]) * st.n[k] + st.z[k] * h_prev[k];
    }
    st
}

/// Backpropagates `dh` through one step; accumulates into `grad`, `dx` and `dh_prev`.
fn gru_step_back(p: &[f64], grad: &mut [f64], g: Gru, st: &GruStep, dh: &[f64], dx: &mut [f64], dh_prev: &mut [f64]) {
    let hd = g.hidden;
    let mut dgi = vec![0.0; 3 * hd];
    let mut dgh = vec![0.0; 3 * hd];
    for k in 0..hd {
        let (r, z, n) = (st.r[k], st.z[k], st.n[k]);
        let dn = dh[k] * (1.0 - z);
        let dz = dh[k] * (st.h_prev[k] - n);
        dh_prev[k] += dh[k] * z;
        let dn_pre = dn * (1.0 - n * n);
        dgi[2 * hd + k] = dn_pre;
        let dr = dn_pre * st.hn[k];
        let dhn = dn_pre * r;
        dgh[2 * hd + k] = dhn;
        grad[g.bhn + k] += dhn;
        let dz_pre = dz * z * (1.0 - z);
        dgi[hd + k] = dz_pre;
        dgh[hd + k] = dz_pre;
        let dr_pre = dr * r * (1.0 - r);
        dgi[k] = dr_pre;
        dgh[k] = dr_pre;
    }
    for (gb, d) in grad[g.bi..g.bi + 3 * hd].iter_mut().zip(&dgi) {
        *gb += d;
    }
    outer_acc(&mut grad[g.wi..g.wi + 3 * hd * g.input], &dgi, &st.x);
    matvec_t_acc(&p[g.wi..g.wi + 3 * hd * g.input], &dgi, dx);
    outer_acc(&mut grad[g.wh..g.wh + 3 * hd * hd], &dgh, &st.h_prev);
    matvec_t_acc(&p[g.wh..g.wh + 3 * hd * hd], &dgh, dh_prev);
}

/// Runs a GRU over `xs` from a zero state. Steps are in processing order.
fn gru_seq(p: &[f64], g: Gru, xs: &[Vec<f64>], reverse: bool) -> Vec<GruStep> {
    let mut h = vec![0.0; g.hidden];
    let mut steps = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let pos = if reverse { xs.len() - 1 - i } else { i };
        let st = gru_step(p, g, &xs[pos], &h);
        h.clone_from(&st.h);
        steps.push(st);
    }
    steps
}

/// Output of a GRU sequence at each original position.
fn seq_outputs(steps: &[GruStep], reverse: bool) -> Vec<&[f64]> {
    let n = steps.len();
    (0..n)
        .map(|pos| steps[if reverse { n - 1 - pos } else { pos }].h.as_slice())
        .collect()
}

/// Backpropagates per-position output gradients; returns input gradients by position.
fn gru_seq_back(p: &[f64], grad: &mut [f64], g: Gru, steps: &[GruStep], dout: &[Vec<f64>], reverse: bool) -> Vec<Vec<f64>> {
    let n = steps.len();
    let mut dx = vec![vec![0.0; g.input]; n];
    let mut carry = vec![0.0; g.hidden];
    for i in (0..n).rev() {
        let pos = if reverse { n - 1 - i } else { i };
        let dh: Vec<f64> = dout[pos].iter().zip(&carry).map(|(a, b)| a + b).collect();
        let mut dh_prev = vec![0.0; g.hidden];
        gru_step_back(p, grad, g, &steps[i], &dh, &mut dx[pos], &mut dh_prev);
        carry = dh_prev;
    }
    dx
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    v
}

pub(crate) struct Encoded {
    l1: [Vec<GruStep>; 2],
    l2: [Vec<GruStep>; 2],
    /// `2H` annotation per input position.
    pub states: Vec<Vec<f64>>,
    /// `W_k h_i` per position.
    pub keys: Vec<Vec<f64>>,
}

pub(crate) fn encode(p: &[f64], l: &Layout, input: &[usize]) -> Encoded {
    let xs: Vec<Vec<f64>> = input
        .iter()
        .map(|&i| p[l.enc_emb + i * l.emb..l.enc_emb + (i + 1) * l.emb].to_vec())
        .collect();
    let f1 = gru_seq(p, l.enc[0], &xs, false);
    let b1 = gru_seq(p, l.enc[1], &xs, true);
    let mid: Vec<Vec<f64>> = seq_outputs(&f1, false)
        .into_iter()
        .zip(seq_outputs(&b1, true))
        .map(|(a, b)| concat(a, b))
        .collect();
    let f2 = gru_seq(p, l.enc[2], &mid, false);
    let b2 = gru_seq(p, l.enc[3], &mid, true);
    let states: Vec<Vec<f64>> = seq_outputs(&f2, false)
        .into_iter()
        .zip(seq_outputs(&b2, true))
        .map(|(a, b)| concat(a, b))
        .collect();
    let wk = &p[l.att_wk..l.att_wk + l.hid * 2 * l.hid];
    let keys = states
        .iter()
        .map(|h| {
            let mut k = vec![0.0; l.hid];
            matvec_acc(wk, h, &mut k);
            k
        })
        .collect();
    Encoded { l1: [f1, b1], l2: [f2, b2], states, keys }
}

pub(crate) struct Attended {
    /// `tanh(W_q s + W_k h_i + b)` per input position.
    u: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    context: Vec<f64>,
    o: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Attention and output layer on top of decoder state `s`.
pub(crate) fn attend(p: &[f64], l: &Layout, enc: &Encoded, s: &[f64]) -> Attended {
    let h = l.hid;
    let mut q = p[l.att_b..l.att_b + h].to_vec();
    matvec_acc(&p[l.att_wq..l.att_wq + h * h], s, &mut q);
    let v = &p[l.att_v..l.att_v + h];
    let u: Vec<Vec<f64>> = enc
        .keys
        .iter()
        .map(|k| k.iter().zip(&q).map(|(a, b)| (a + b).tanh()).collect())
        .collect();
    let scores: Vec<f64> = u.iter().map(|ui: &Vec<f64>| ui.iter().zip(v).map(|(a, b)| a * b).sum()).collect();
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|e| (e - m).exp()).collect();
    let zsum: f64 = exps.iter().sum();
    let alpha: Vec<f64> = exps.iter().map(|e| e / zsum).collect();
    let mut context = vec![0.0; 2 * h];
    for (a, st) in alpha.iter().zip(&enc.states) {
        for (c, x) in context.iter_mut().zip(st) {
            *c += a * x;
        }
    }
    let sc = concat(s, &context);
    let mut pre = p[l.out_bc..l.out_bc + h].to_vec();
    matvec_acc(&p[l.out_wc..l.out_wc + h * 3 * h], &sc, &mut pre);
    let o: Vec<f64> = pre.iter().map(|x| x.tanh()).collect();
    let mut logits = p[l.out_bo..l.out_bo + l.vout].to_vec();
    matvec_acc(&p[l.out_wo..l.out_wo + l.vout * h], &o, &mut logits);
    Attended { u, alpha, context, o, logits }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

/// Backpropagates `dlogits` through the output layer and attention.
/// Returns the gradient with respect to the decoder state.
fn attend_back(p: &[f64], grad: &mut [f64], l: &Layout, enc: &Encoded, s: &[f64], at: &Attended, dlogits: &[f64], d_states: &mut [Vec<f64>]) -> Vec<f64> {
    let h = l.hid;
    for (g, d) in grad[l.out_bo..l.out_bo + l.vout].iter_mut().zip(dlogits) {
        *g += d;
    }
    outer_acc(&mut grad[l.out_wo..l.out_wo + l.vout * h], dlogits, &at.o);
    let mut d_o = vec![0.0; h];
    matvec_t_acc(&p[l.out_wo..l.out_wo + l.vout * h], dlogits, &mut d_o);
    let d_pre: Vec<f64> = d_o.iter().zip(&at.o).map(|(d, o)| d * (1.0 - o * o)).collect();
    for (g, d) in grad[l.out_bc..l.out_bc + h].iter_mut().zip(&d_pre) {
        *g += d;
    }
    let sc = concat(s, &at.context);
    outer_acc(&mut grad[l.out_wc..l.out_wc + h * 3 * h], &d_pre, &sc);
    let mut d_sc = vec![0.0; 3 * h];
    matvec_t_acc(&p[l.out_wc..l.out_wc + h * 3 * h], &d_pre, &mut d_sc);
    let mut ds = d_sc[..h].to_vec();
    let dc = &d_sc[h..];

    // Context = Σ α_i h_i.
    let d_alpha: Vec<f64> = enc
        .states
        .iter()
        .map(|st| st.iter().zip(dc).map(|(a, b)| a * b).sum())
        .collect();
    for (i, &a) in at.alpha.iter().enumerate() {
        for (d, c) in d_states[i].iter_mut().zip(dc) {
            *d += a * c;
        }
    }
    let dot: f64 = at.alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    let v = &p[l.att_v..l.att_v + h];
    let mut da_sum = vec![0.0; h];
    for i in 0..at.alpha.len() {
        let de = at.alpha[i] * (d_alpha[i] - dot);
        if de == 0.0 {
            continue;
        }
        let u = &at.u[i];
        for k in 0..h {
            grad[l.att_v + k] += de * u[k];
        }
        let da: Vec<f64> = (0..h).map(|k| de * v[k] * (1.0 - u[k] * u[k])).collect();
        outer_acc(&mut grad[l.att_wk..l.att_wk + h * 2 * h], &da, &enc.states[i]);
        matvec_t_acc(&p[l.att_wk..l.att_wk + h * 2 * h], &da, &mut d_states[i]);
        for (s, d) in da_sum.iter_mut().zip(&da) {
            *s += d;
        }
    }
    for (g, d) in grad[l.att_b..l.att_b + h].iter_mut().zip(&da_sum) {
        *g += d;
    }
    outer_acc(&mut grad[l.att_wq..l.att_wq + h * h], &da_sum, s);
    matvec_t_acc(&p[l.att_wq..l.att_wq + h * h], &da_sum, &mut ds);
    ds
}

fn encode_back(p: &[f64], grad: &mut [f64], l: &Layout, input: &[usize], enc: &Encoded, d_states: &[Vec<f64>]) {
    let h = l.hid;
    let split = |d: &[Vec<f64>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (d.iter().map(|v| v[..h].to_vec()).collect(), d.iter().map(|v| v[h..].to_vec()).collect())
    };
    let (df2, db2) = split(d_states);
    let dmid_f = gru_seq_back(p, grad, l.enc[2], &enc.l2[0], &df2, false);
    let dmid_b = gru_seq_back(p, grad, l.enc[3], &enc.l2[1], &db2, true);
    let dmid: Vec<Vec<f64>> = dmid_f
        .iter()
        .zip(&dmid_b)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let (df1, db1) = split(&dmid);
    let dx_f = gru_seq_back(p, grad, l.enc[0], &enc.l1[0], &df1, false);
    let dx_b = gru_seq_back(p, grad, l.enc[1], &enc.l1[1], &db1, true);
    for (pos, &id) in input.iter().enumerate() {
        let g = &mut grad[l.enc_emb + id * l.emb..l.enc_emb + (id + 1) * l.emb];
        for k in 0..l.emb {
            g[k] += dx_f[pos][k] + dx_b[pos][k];
        }
    }
}

/// Teacher-forced summed cross-entropy of `target` given `input`. With
/// `grad`, accumulates `scale * d(loss)/d(params)`. `on_attention` sees each
/// decode step's attention distribution.
pub(crate) fn word_loss(
    p: &[f64],
    l: &Layout,
    input: &[usize],
    target: &[usize],
    bos: usize,
    grad: Option<(&mut [f64], f64)>,
    mut on_attention: impl FnMut(&[f64]),
) -> f64 {
    let enc = encode(p, l, input);
    let dec_in: Vec<Vec<f64>> = std::iter::once(bos)
        .chain(target[..target.len() - 1].iter().copied())
        .map(|y| p[l.dec_emb + y * l.emb..l.dec_emb + (y + 1) * l.emb].to_vec())
        .collect();
    let d1 = gru_seq(p, l.dec[0], &dec_in, false);
    let mid: Vec<Vec<f64>> = d1.iter().map(|s| s.h.clone()).collect();
    let d2 = gru_seq(p, l.dec[1], &mid, false);
    let mut loss = 0.0;
    let mut cache = Vec::with_capacity(target.len());
    for (j, &y) in target.iter().enumerate() {
        let at = attend(p, l, &enc, &d2[j].h);
        on_attention(&at.alpha);
        let lp = log_softmax(&at.logits);
        loss -= lp[y];
        cache.push((at, lp));
    }
    let Some((grad, scale)) = grad else {
        return loss;
    };
    let mut d_states = vec![vec![0.0; 2 * l.hid]; input.len()];
    let mut d_s = Vec::with_capacity(target.len());
    for (j, &y) in target.iter().enumerate() {
        let (at, lp) = &cache[j];
        let mut dlogits: Vec<f64> = lp.iter().map(|x| scale * x.exp()).collect();
        dlogits[y] -= scale;
        d_s.push(attend_back(p, grad, l, &enc, &d2[j].h, at, &dlogits, &mut d_states));
    }
    let dmid = gru_seq_back(p, grad, l.dec[1], &d2, &d_s, false);
    let dx = gru_seq_back(p, grad, l.dec[0], &d1, &dmid, false);
    for (j, y) in std::iter::once(bos).chain(target[..target.len() - 1].iter().copied()).enumerate() {
        let g = &mut grad[l.dec_emb + y * l.emb..l.dec_emb + (y + 1) * l.emb];
        for k in 0..l.emb {
            g[k] += dx[j][k];
        }
    }
    encode_back(p, grad, l, input, &enc, &d_states);
    loss
}

/// Greedy decoding: stops at `eos` or after `cap` non-EOS symbols. Ties in
/// the argmax go to the smallest symbol id.
pub(crate) fn greedy(p: &[f64], l: &Layout, input: &[usize], bos: usize, eos: usize, cap: usize) -> Vec<usize> {
    let enc = encode(p, l, input);
    let mut h1 = vec![0.0; l.hid];
    let mut h2 = vec![0.0; l.hid];
    let mut prev = bos;
    let mut out = Vec::new();
    while out.len() < cap {
        let x = &p[l.dec_emb + prev * l.emb..l.dec_emb + (prev + 1) * l.emb];
        h1 = gru_step(p, l.dec[0], x, &h1).h;
        h2 = gru_step(p, l.dec[1], &h1, &h2).h;
        let at = attend(p, l, &enc, &h2);
        let mut best = 0;
        for (i, &v) in at.logits.iter().enumerate() {
            if v > at.logits[best] {
                best = i;
            }
        }
        if best == eos {
            break;
        }
        out.push(best);
        prev = best;
    }
    out
}
