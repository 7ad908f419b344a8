//! Adam and parameter averaging.

use ndarray::Array2;

use crate::autodiff::ParamStore;

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Array2<f64>> = store.iter().map(|(_, _, t)| Array2::zeros(t.values().raw_dim())).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Array2<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in store.tensors_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            m.zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            v.zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            let values = p.values_mut();
            ndarray::Zip::from(values).and(&*m).and(&*v).for_each(|w, &m, &v| {
                *w -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            });
        }
    }
}

/// `ema ← decay · ema + (1 − decay) · current` for every parameter.
pub fn ema_update(ema: &mut ParamStore, current: &ParamStore, decay: f64) {
    for (e, (_, _, c)) in ema.tensors_mut().zip(current.iter()) {
        e.values_mut().zip_mut_with(c.values(), |e, &c| *e = decay * *e + (1.0 - decay) * c);
    }
}
