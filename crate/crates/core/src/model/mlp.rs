//! Dense tanh network evaluated over a borrowed flat parameter slice.
//!
//! Layer `l` stores its weights row-major (`out × in`) followed by its bias.
//! Hidden layers apply tanh; the output layer is affine.

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    sizes: Vec<usize>,
}

impl MlpShape {
    /// `sizes` lists the input width, hidden widths and output width.
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(&self, params: &mut [f64], rng: &mut R) {
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            off += fan_in * fan_out;
            params[off..off + fan_out].fill(0.0);
            off += fan_out;
        }
    }

    /// Returns every layer's output, starting with the input itself.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(params.len(), self.param_count());
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_out * (n_in + 1);
            let input = &acts[l];
            let hidden = l + 1 < layers;
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = row.iter().zip(input).fold(bias[o], |acc, (w, x)| acc + w * x);
                    if hidden {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    /// Accumulates `d_out`'s pullback into `grad`.
    pub fn backward(&self, params: &[f64], acts: &[Vec<f64>], d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[1] * (w[0] + 1);
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    *p += d * w;
                }
            }
            // acts[l] is a tanh output here.
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn param_count() {
        let s = MlpShape::new(vec![16, 32, 32, 12]);
        assert_eq!(s.param_count(), 16 * 32 + 32 + 32 * 32 + 32 + 32 * 12 + 12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let shape = MlpShape::new(vec![3, 5, 4, 2]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut params = vec![0.0; shape.param_count()];
        shape.init(&mut params, &mut rng);
        for p in params.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let x = [0.3, -1.2, 0.8];
        let weights = [0.7, -1.3];
        let objective = |p: &[f64]| {
            let out = shape.forward(p, &x);
            out.last().unwrap().iter().zip(&weights).map(|(o, w)| o * w).sum::<f64>()
        };
        let acts = shape.forward(&params, &x);
        let mut grad = vec![0.0; params.len()];
        shape.backward(&params, &acts, &weights, &mut grad);
        let h = 1e-6;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            let up = objective(&p);
            p[i] -= 2.0 * h;
            let down = objective(&p);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8, "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
