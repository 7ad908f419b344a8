//! Message passing between coarse nodes.

use ndarray::Array2;

use crate::autodiff::{Linear, Session, Var};
use crate::error::Result;
use crate::graph::Edge;

/// Mean of in-neighbor vectors followed by a linear map; nodes without
/// in-edges aggregate the zero vector.
pub fn gcn_conv(sess: &mut Session, lin: &Linear, h: Var, edges: &[Edge]) -> Result<Var> {
    let n = sess.tape.shape(h)[0];
    let (src, tgt): (Vec<usize>, Vec<usize>) = edges.iter().copied().unzip();
    let mut deg = vec![0usize; n];
    for &t in &tgt {
        deg[t] += 1;
    }
    let inv = Array2::from_shape_fn((n, 1), |(i, _)| if deg[i] > 0 { 1.0 / deg[i] as f64 } else { 0.0 });
    let msgs = sess.tape.gather(h, &src)?;
    let agg = sess.tape.scatter_add(msgs, &tgt, n)?;
    let inv = sess.constant(inv);
    let mean = sess.tape.mul_col(agg, inv)?;
    sess.linear(lin, mean)
}

pub struct GatOutput {
    pub out: Var,
    /// Attention weights, one row per entry of `edges`.
    pub alpha: Var,
    /// Input edges followed by one self-loop per node.
    pub edges: Vec<Edge>,
}

/// Attention over each target's in-neighbors plus itself; the self term uses
/// `lin_s` and neighbor terms use `lin_t`.
pub fn gat_conv(
    sess: &mut Session,
    lin_s: &Linear,
    lin_t: &Linear,
    att_s: Var,
    att_t: Var,
    h: Var,
    edges: &[Edge],
) -> Result<GatOutput> {
    let n = sess.tape.shape(h)[0];
    let mut all: Vec<Edge> = Vec::with_capacity(edges.len() + n);
    all.extend_from_slice(edges);
    all.extend((0..n).map(|i| (i, i)));
    let (src, tgt): (Vec<usize>, Vec<usize>) = all.iter().copied().unzip();
    let xs = sess.linear(lin_s, h)?;
    let xt = sess.linear(lin_t, h)?;
    let score_s = sess.tape.matmul(xs, att_s)?;
    let score_t = sess.tape.matmul(xt, att_t)?;
    let ls = sess.tape.gather(score_s, &tgt)?;
    let lt = sess.tape.gather(score_t, &src)?;
    let logits = sess.tape.add(ls, lt)?;
    let logits = sess.tape.leaky_relu(logits);
    let alpha = sess.tape.segment_softmax(logits, &tgt, n)?;
    let stacked = sess.tape.concat_rows(&[xt, xs])?;
    let pick: Vec<usize> = src.iter().enumerate().map(|(e, &s)| if e < edges.len() { s } else { n + s }).collect();
    let msgs = sess.tape.gather(stacked, &pick)?;
    let weighted = sess.tape.mul_col(msgs, alpha)?;
    let out = sess.tape.scatter_add(weighted, &tgt, n)?;
    Ok(GatOutput { out, alpha, edges: all })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Mode, ParamStore};
    use crate::rng::seeded;
    use ndarray::array;

    fn identity_linear(store: &mut ParamStore, w: usize) -> Linear {
        let lin = Linear::new(store, "l", w, w, &mut seeded(0));
        *store.get_mut(lin.weight).values_mut() = Array2::eye(w);
        *store.get_mut(lin.bias).values_mut() = Array2::zeros((1, w));
        lin
    }

    #[test]
    fn gcn_without_edges_is_zero() {
        let mut store = ParamStore::new();
        let lin = identity_linear(&mut store, 2);
        let mut s = Session::new(&store, &[], Mode::Eval);
        let h = s.constant(array![[1.0, 2.0], [3.0, 4.0]]);
        let o = gcn_conv(&mut s, &lin, h, &[]).unwrap();
        assert_eq!(s.value(o), &Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn gcn_mutual_edges_swap() {
        let mut store = ParamStore::new();
        let lin = identity_linear(&mut store, 2);
        let mut s = Session::new(&store, &[], Mode::Eval);
        let h = s.constant(array![[1.0, 2.0], [3.0, 4.0]]);
        let o = gcn_conv(&mut s, &lin, h, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(s.value(o), &array![[3.0, 4.0], [1.0, 2.0]]);
    }

    fn gat_setup(store: &mut ParamStore) -> (Linear, Linear, crate::autodiff::ParamId, crate::autodiff::ParamId) {
        let mut rng = seeded(5);
        let ls = Linear::new(store, "s", 3, 3, &mut rng);
        let lt = Linear::new(store, "t", 3, 3, &mut rng);
        let a = store.add("as", array![[0.3], [-0.2], [0.9]]);
        let b = store.add("at", array![[-0.5], [0.1], [0.4]]);
        (ls, lt, a, b)
    }

    #[test]
    fn gat_isolated_node_uses_self_term() {
        let mut store = ParamStore::new();
        let (ls, lt, a, b) = gat_setup(&mut store);
        let mut s = Session::new(&store, &[], Mode::Eval);
        let h = s.constant(array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [0.0, 0.0, 2.0]]);
        let (pa, pb) = (s.p(a), s.p(b));
        let g = gat_conv(&mut s, &ls, &lt, pa, pb, h, &[(0, 1), (1, 0)]).unwrap();
        let alpha = s.value(g.alpha).clone();
        let self2 = g.edges.iter().position(|&e| e == (2, 2)).unwrap();
        assert_eq!(alpha[[self2, 0]], 1.0);
        let expect = s.linear(&ls, h).unwrap();
        assert_eq!(s.value(g.out).row(2), s.value(expect).row(2));
        let mut sums = [0.0; 3];
        for (e, &(_, t)) in g.edges.iter().enumerate() {
            sums[t] += alpha[[e, 0]];
        }
        assert!(sums.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn gat_equal_vectors_give_uniform_weights() {
        let mut store = ParamStore::new();
        let (ls, lt, a, b) = gat_setup(&mut store);
        let mut s2 = Session::new(&store, &[], Mode::Eval);
        let h2 = s2.constant(Array2::from_elem((4, 3), 0.7));
        let (pa, pb) = (s2.p(a), s2.p(b));
        let edges = [(1, 0), (2, 0), (3, 0), (0, 1)];
        let g = gat_conv(&mut s2, &ls, &lt, pa, pb, h2, &edges).unwrap();
        let alpha = s2.value(g.alpha);
        for (e, &(_, t)) in g.edges.iter().enumerate() {
            let deg = edges.iter().filter(|x| x.1 == t).count();
            assert!((alpha[[e, 0]] - 1.0 / (deg + 1) as f64).abs() < 1e-12);
        }
    }
}
