use crate::Result;
use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

/// Sums gradients of a fixed variable list over several backward passes.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    sums: Vec<Option<Vec<f32>>>,
}

impl GradAccumulator {
    pub fn new(n: usize) -> Self {
        Self { sums: vec![None; n] }
    }

    pub fn add(&mut self, vars: &[Var], grads: &GradStore) -> Result<()> {
        for (slot, var) in self.sums.iter_mut().zip(vars) {
            let Some(g) = grads.get(var.as_tensor()) else { continue };
            let g = g.flatten_all()?.to_vec1::<f32>()?;
            match slot {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => *slot = Some(g),
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.sums.iter().all(Option::is_none)
    }

    pub fn global_norm(&self) -> f64 {
        self.sums
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f32) {
        self.sums.iter_mut().flatten().for_each(|g| g.iter_mut().for_each(|x| *x *= s));
    }

    pub fn grads(&self) -> &[Option<Vec<f32>>] {
        &self.sums
    }

    pub fn take(&mut self) -> Vec<Option<Vec<f32>>> {
        let n = self.sums.len();
        std::mem::replace(&mut self.sums, vec![None; n])
    }
}

/// Adam without weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(vars: &[Var], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vars.iter().map(|v| vec![0.0; v.elem_count()]).collect(),
            v: vars.iter().map(|v| vec![0.0; v.elem_count()]).collect(),
        }
    }

    /// Applies one update with learning rate `lr * lr_scale`; variables
    /// without a gradient are left alone.
    pub fn step(&mut self, vars: &[Var], grads: &[Option<Vec<f32>>], lr_scale: f64) -> Result<()> {
        self.step += 1;
        let lr = self.lr * lr_scale;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, (var, g)) in vars.iter().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let mut w = var.flatten_all()?.to_vec1::<f32>()?;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..w.len() {
                let gi = f64::from(g[i]);
                let mi = self.beta1 * f64::from(m[i]) + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * f64::from(v[i]) + (1.0 - self.beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
                w[i] = (f64::from(w[i]) - update) as f32;
            }
            var.set(&Tensor::from_vec(w, var.dims(), var.device())?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn adam_minimizes_quadratic() {
        let x = Var::from_tensor(&Tensor::new(&[3f32, -2.0], &Device::Cpu).unwrap()).unwrap();
        let vars = vec![x.clone()];
        let mut opt = Adam::new(&vars, 0.1);
        for _ in 0..300 {
            let loss = x.as_tensor().sqr().unwrap().sum_all().unwrap();
            let mut acc = GradAccumulator::new(1);
            acc.add(&vars, &loss.backward().unwrap()).unwrap();
            opt.step(&vars, acc.grads(), 1.0).unwrap();
        }
        let v = x.to_vec1::<f32>().unwrap();
        assert!(v.iter().all(|a| a.abs() < 1e-2), "{v:?}");
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let x = Var::from_tensor(&Tensor::new(&[1.5f32, 0.25], &Device::Cpu).unwrap()).unwrap();
        let vars = vec![x.clone()];
        let mut opt = Adam::new(&vars, 0.0);
        opt.step(&vars, &[Some(vec![4.0, -1.0])], 1.0).unwrap();
        assert_eq!(x.to_vec1::<f32>().unwrap(), [1.5, 0.25]);
    }
}
