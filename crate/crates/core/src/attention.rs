//! Additive edge attention over a receiver-grouped edge list.
//!
//! For receiver v with sender set N(v): each sender u is transformed once,
//! m_u = h_u W, and weighted by attention computed on the raw embeddings,
//!
//!   s_vu    = a_recv . h_v + a_send . h_u
//!   alpha_v = softmax over N(v) of leaky_relu(s_vu)
//!   agg_v   = sum_u alpha_vu m_u
//!
//! The softmax is max-subtracted for stability. Receivers with no senders
//! aggregate to zero. The backward pass is written by hand; every formula
//! here is exercised by finite-difference checks in the tests.

use ndarray::{s, Array1, Array2};

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// Edges grouped by receiver, senders sorted within each group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrEdges {
    pub n_nodes: usize,
    offsets: Vec<usize>,
    senders: Vec<usize>,
}

impl CsrEdges {
    /// Builds from (receiver, sender) pairs. Both endpoints must be < n_nodes.
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut offsets = vec![0usize; n_nodes + 1];
        for &(recv, send) in &sorted {
            assert!(
                recv < n_nodes && send < n_nodes,
                "edge endpoint out of range"
            );
            offsets[recv + 1] += 1;
        }
        for i in 0..n_nodes {
            offsets[i + 1] += offsets[i];
        }
        let senders = sorted.into_iter().map(|(_, send)| send).collect();
        CsrEdges {
            n_nodes,
            offsets,
            senders,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn senders_of(&self, v: usize) -> &[usize] {
        &self.senders[self.offsets[v]..self.offsets[v + 1]]
    }

    fn edge_range(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }
}

/// Per-edge state saved by the forward pass for reuse in backward.
#[derive(Debug, Clone)]
pub struct AttnCache {
    /// Transformed senders, h W. One row per node.
    pub m: Array2<f64>,
    /// Raw attention scores s_vu, before the leaky ReLU, in edge order.
    pub scores: Vec<f64>,
    /// Softmax coefficients, in edge order.
    pub alphas: Vec<f64>,
}

/// Forward attention aggregation. `a` has length 2d: receiver half first.
pub fn attn_forward(
    h: &Array2<f64>,
    w: &Array2<f64>,
    a: &Array1<f64>,
    edges: &CsrEdges,
) -> (Array2<f64>, AttnCache) {
    let d = h.ncols();
    debug_assert_eq!(a.len(), 2 * d);
    let m = h.dot(w);
    let p_recv = h.dot(&a.slice(s![..d]));
    let p_send = h.dot(&a.slice(s![d..]));

    let n_edges = edges.n_edges();
    let mut scores = vec![0.0; n_edges];
    let mut alphas = vec![0.0; n_edges];
    let mut agg = Array2::zeros(h.raw_dim());

    for v in 0..edges.n_nodes {
        let range = edges.edge_range(v);
        if range.is_empty() {
            continue;
        }
        let mut max_act = f64::NEG_INFINITY;
        for e in range.clone() {
            let s_vu = p_recv[v] + p_send[edges.senders[e]];
            scores[e] = s_vu;
            max_act = max_act.max(leaky_relu(s_vu));
        }
        let mut total = 0.0;
        for e in range.clone() {
            let w_e = (leaky_relu(scores[e]) - max_act).exp();
            alphas[e] = w_e;
            total += w_e;
        }
        let mut row = agg.row_mut(v);
        for e in range {
            alphas[e] /= total;
            row.scaled_add(alphas[e], &m.row(edges.senders[e]));
        }
    }
    (agg, AttnCache { m, scores, alphas })
}

/// Accumulates gradients for one attention relation given d(loss)/d(agg).
///
/// Derivation sketch, per receiver group:
///   d(alpha_e) = dagg_v . m_u
///   d(act_e)   = alpha_e (d(alpha_e) - sum_f alpha_f d(alpha_f))   [softmax]
///   d(s_e)     = d(act_e) * (s_e > 0 ? 1 : LEAKY_SLOPE)
/// then dM accumulates alpha_e dagg_v per sender, and the score gradient
/// fans out to the attention vector and both endpoint embeddings.
#[allow(clippy::too_many_arguments)]
pub fn attn_backward(
    dagg: &Array2<f64>,
    h: &Array2<f64>,
    w: &Array2<f64>,
    a: &Array1<f64>,
    edges: &CsrEdges,
    cache: &AttnCache,
    dh: &mut Array2<f64>,
    dw: &mut Array2<f64>,
    da: &mut Array1<f64>,
) {
    let d = h.ncols();
    let n = h.nrows();
    let mut dm = Array2::zeros((n, d));
    let mut dp_recv = Array1::zeros(n);
    let mut dp_send = Array1::zeros(n);

    for v in 0..edges.n_nodes {
        let range = edges.edge_range(v);
        if range.is_empty() {
            continue;
        }
        let dv = dagg.row(v);
        let mut dalpha = vec![0.0; range.len()];
        let mut weighted_sum = 0.0;
        for (slot, e) in range.clone().enumerate() {
            let du = dv.dot(&cache.m.row(edges.senders[e]));
            dalpha[slot] = du;
            weighted_sum += cache.alphas[e] * du;
        }
        for (slot, e) in range.enumerate() {
            let u = edges.senders[e];
            let dact = cache.alphas[e] * (dalpha[slot] - weighted_sum);
            let ds = dact
                * if cache.scores[e] > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                };
            dp_recv[v] += ds;
            dp_send[u] += ds;
            dm.row_mut(u).scaled_add(cache.alphas[e], &dv);
        }
    }

    *dw += &h.t().dot(&dm);
    *dh += &dm.dot(&w.t());

    let da_recv = h.t().dot(&dp_recv);
    let da_send = h.t().dot(&dp_send);
    let mut recv_half = da.slice_mut(s![..d]);
    recv_half += &da_recv;
    let mut send_half = da.slice_mut(s![d..]);
    send_half += &da_send;

    let a_recv = a.slice(s![..d]);
    let a_send = a.slice(s![d..]);
    for v in 0..n {
        if dp_recv[v] != 0.0 {
            dh.row_mut(v).scaled_add(dp_recv[v], &a_recv);
        }
        if dp_send[v] != 0.0 {
            dh.row_mut(v).scaled_add(dp_send[v], &a_send);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_array2(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn random_array1(len: usize, rng: &mut impl Rng) -> Array1<f64> {
        Array1::from_shape_fn(len, |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn identical_neighbors_share_attention_equally() {
        let n = 4;
        let d = 3;
        let mut rng = rng_from_seed(5);
        // Senders 1..3 all carry the same embedding row.
        let proto = random_array1(d, &mut rng);
        let mut h = Array2::zeros((n, d));
        for v in 0..n {
            h.row_mut(v).assign(&proto);
        }
        let w = random_array2(d, d, &mut rng);
        let a = random_array1(2 * d, &mut rng);
        let edges = CsrEdges::new(n, &[(0, 1), (0, 2), (0, 3)]);
        let (_, cache) = attn_forward(&h, &w, &a, &edges);
        for &alpha in &cache.alphas {
            assert!((alpha - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alphas_form_a_distribution_per_receiver() {
        let mut rng = rng_from_seed(6);
        let n = 6;
        let d = 4;
        let h = random_array2(n, d, &mut rng);
        let w = random_array2(d, d, &mut rng);
        let a = random_array1(2 * d, &mut rng);
        let edges = CsrEdges::new(n, &[(0, 1), (0, 2), (0, 5), (3, 0), (3, 4), (5, 1)]);
        let (agg, cache) = attn_forward(&h, &w, &a, &edges);
        for v in [0usize, 3, 5] {
            let total: f64 = edges.edge_range(v).map(|e| cache.alphas[e]).sum();
            assert!((total - 1.0).abs() < 1e-12, "receiver {v}");
        }
        // Receivers without senders aggregate to zero.
        for v in [1usize, 2, 4] {
            assert!(agg.row(v).iter().all(|&x| x == 0.0), "receiver {v}");
        }
    }

    /// Finite-difference check of every gradient the backward pass produces.
    /// Loss = sum_ij r_ij agg_ij with fixed random r, so dagg = r exactly.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng_from_seed(7);
        let n = 5;
        let d = 3;
        let h0 = random_array2(n, d, &mut rng);
        let w0 = random_array2(d, d, &mut rng);
        let a0 = random_array1(2 * d, &mut rng);
        let r = random_array2(n, d, &mut rng);
        let edges = CsrEdges::new(
            n,
            &[
                (0, 1),
                (0, 2),
                (1, 0),
                (1, 3),
                (1, 4),
                (3, 2),
                (4, 0),
                (4, 4),
            ],
        );

        let loss = |h: &Array2<f64>, w: &Array2<f64>, a: &Array1<f64>| -> f64 {
            let (agg, _) = attn_forward(h, w, a, &edges);
            (&agg * &r).sum()
        };

        let (_, cache) = attn_forward(&h0, &w0, &a0, &edges);
        let mut dh = Array2::zeros((n, d));
        let mut dw = Array2::zeros((d, d));
        let mut da = Array1::zeros(2 * d);
        attn_backward(&r, &h0, &w0, &a0, &edges, &cache, &mut dh, &mut dw, &mut da);

        let step = 1e-6;
        let check = |got: f64, want: f64, what: &str| {
            let denom = want.abs().max(got.abs()).max(1e-6);
            assert!(
                ((got - want) / denom).abs() < 1e-4,
                "{what}: analytic {got}, fd {want}"
            );
        };

        for i in 0..n {
            for j in 0..d {
                let mut hp = h0.clone();
                let mut hm = h0.clone();
                hp[[i, j]] += step;
                hm[[i, j]] -= step;
                let fd = (loss(&hp, &w0, &a0) - loss(&hm, &w0, &a0)) / (2.0 * step);
                check(dh[[i, j]], fd, &format!("dh[{i},{j}]"));
            }
        }
        for i in 0..d {
            for j in 0..d {
                let mut wp = w0.clone();
                let mut wm = w0.clone();
                wp[[i, j]] += step;
                wm[[i, j]] -= step;
                let fd = (loss(&h0, &wp, &a0) - loss(&h0, &wm, &a0)) / (2.0 * step);
                check(dw[[i, j]], fd, &format!("dw[{i},{j}]"));
            }
        }
        for i in 0..2 * d {
            let mut ap = a0.clone();
            let mut am = a0.clone();
            ap[i] += step;
            am[i] -= step;
            let fd = (loss(&h0, &w0, &ap) - loss(&h0, &w0, &am)) / (2.0 * step);
            check(da[i], fd, &format!("da[{i}]"));
        }
    }

    #[test]
    fn csr_deduplicates_and_sorts() {
        let edges = CsrEdges::new(3, &[(1, 2), (1, 0), (1, 2), (0, 1)]);
        assert_eq!(edges.n_edges(), 3);
        assert_eq!(edges.senders_of(1), &[0, 2]);
        assert_eq!(edges.senders_of(0), &[1]);
        assert_eq!(edges.degree(2), 0);
    }
}
