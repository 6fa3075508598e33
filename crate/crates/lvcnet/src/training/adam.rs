//! Adam optimizer over a named parameter store.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::{Param, ParamStore};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates mirror the parameter store layout so they
/// serialize with the same container.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub cfg: AdamConfig,
    pub m: ParamStore<F>,
    pub v: ParamStore<F>,
    pub t: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(template: &ParamStore<F>, cfg: AdamConfig) -> Self {
        let mut m = ParamStore::new();
        let mut v = ParamStore::new();
        for (name, p) in template.iter() {
            m.insert(name.clone(), Param::zeros(p.dims.clone()));
            v.insert(name.clone(), Param::zeros(p.dims.clone()));
        }
        Adam { cfg, m, v, t: 0 }
    }

    /// One update over every named gradient. A zero gradient leaves the
    /// corresponding parameter unchanged.
    pub fn step(
        &mut self,
        params: &mut ParamStore<F>,
        grads: &IndexMap<String, Tensor<F>>,
    ) -> Result<()> {
        self.t += 1;
        let b1 = F::real_from(self.cfg.beta1);
        let b2 = F::real_from(self.cfg.beta2);
        let lr = F::real_from(self.cfg.lr);
        let eps = F::real_from(self.cfg.eps);
        let c1 = F::one() / (F::one() - F::real_from(self.cfg.beta1.powi(self.t as i32)));
        let c2 = F::one() / (F::one() - F::real_from(self.cfg.beta2.powi(self.t as i32)));

        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            let g = grads
                .get(&name)
                .ok_or_else(|| Error::MissingParam(format!("gradient for {name}")))?;
            let p = params.get_mut(&name)?;
            let m = self.m.get_mut(&name)?;
            let v = self.v.get_mut(&name)?;
            for ((pv, gv), (mv, vv)) in p
                .data
                .iter_mut()
                .zip(g.data())
                .zip(m.data.iter_mut().zip(v.data.iter_mut()))
            {
                *mv = b1 * *mv + (F::one() - b1) * *gv;
                *vv = b2 * *vv + (F::one() - b2) * *gv * *gv;
                let mhat = *mv * c1;
                let vhat = *vv * c2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
