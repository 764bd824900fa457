use dataforge_core::rng::Rng;
use dataforge_core::valuation::*;

/// Softmax regression (one linear layer) on fixed 2-D features: convex.
struct LogReg {
    xs: Vec<[f64; 2]>,
    ys: Vec<usize>,
    val_xs: Vec<[f64; 2]>,
    val_ys: Vec<usize>,
    k: usize,
}

impl LogReg {
    // theta layout: W (k x 2) then b (k)
    fn grad_point(&self, theta: &[f64], x: &[f64; 2], y: usize) -> Vec<f64> {
        let k = self.k;
        let mut logits = vec![0.0; k];
        for c in 0..k {
            logits[c] = theta[c * 2] * x[0] + theta[c * 2 + 1] * x[1] + theta[2 * k + c];
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let mut g = vec![0.0; theta.len()];
        for c in 0..k {
            let p = exps[c] / z - if c == y { 1.0 } else { 0.0 };
            g[c * 2] += p * x[0];
            g[c * 2 + 1] += p * x[1];
            g[2 * k + c] += p;
        }
        g
    }
}

impl InfluenceModel for LogReg {
    fn param_len(&self) -> usize { self.k * 3 }
    fn num_train(&self) -> usize { self.xs.len() }
    fn num_val(&self) -> usize { self.val_xs.len() }
    fn grad_train(&self, theta: &[f64], i: usize) -> Vec<f64> {
        self.grad_point(theta, &self.xs[i], self.ys[i])
    }
    fn grad_val(&self, theta: &[f64], j: usize) -> Vec<f64> {
        self.grad_point(theta, &self.val_xs[j], self.val_ys[j])
    }
    fn batch_hvp(&self, theta: &[f64], batch: &[usize], v: &[f64]) -> Vec<f64> {
        dataforge_core::nnet::hvp_from_grad(
            |t| {
                let mut g = vec![0.0; t.len()];
                for &i in batch {
                    for (a, b) in g.iter_mut().zip(self.grad_point(t, &self.xs[i], self.ys[i])) {
                        *a += b / batch.len() as f64;
                    }
                }
                g
            },
            theta,
            v,
        )
    }
}

fn main() {
    for seed in [1u64, 2, 3, 4, 5] {
        let mut rng = Rng::new(seed);
        let k = 2;
        let n = 120;
        let centers = [[-2.0, 0.0], [2.0, 0.0]];
        let mut xs = Vec::new();
        let mut true_ys = Vec::new();
        for i in 0..n {
            let c = i % k;
            xs.push([
                centers[c][0] + 0.6 * rng.normal(),
                centers[c][1] + 0.6 * rng.normal(),
            ]);
            true_ys.push(c);
        }
        // flip 10%
        let mut ys = true_ys.clone();
        let flips = rng.sample_indices(n, 12);
        for &i in &flips {
            ys[i] = 1 - ys[i];
        }
        let mut val_xs = Vec::new();
        let mut val_ys = Vec::new();
        for i in 0..12 {
            let c = i % k;
            val_xs.push([
                centers[c][0] + 0.6 * rng.normal(),
                centers[c][1] + 0.6 * rng.normal(),
            ]);
            val_ys.push(c);
        }
        let model = LogReg { xs, ys, val_xs, val_ys, k };
        // full-batch SGD, 40 steps, eta 0.5
        let (eta, steps) = (0.5, 40);
        let mut theta = vec![0.0; model.param_len()];
        let mut state = HypergradState::new(n, model.param_len());
        let all: Vec<usize> = (0..n).collect();
        for _ in 0..steps {
            state.step(&model, InfluenceMode::Exact, &theta, &all, eta);
            let mut g = vec![0.0; theta.len()];
            for &i in &all {
                for (a, b) in g.iter_mut().zip(model.grad_train(&theta, i)) {
                    *a += b / n as f64;
                }
            }
            for (t, gi) in theta.iter_mut().zip(&g) {
                *t -= eta * gi;
            }
        }
        let m = influence_from_state(&model, &theta, &state, (0..n as u64).collect(), (0..12).collect(), InfluenceMode::Exact).unwrap();
        let flipset: std::collections::BTreeSet<u64> = flips.iter().map(|&i| i as u64).collect();
        for votes in [1usize, 6] {
            let d = min_std_filter(&m, &model.ys, &FilterOptions { require_negative: true, min_votes: votes }).unwrap();
            let hit = d.removed_ids.iter().filter(|id| flipset.contains(id)).count();
            print!(
                "seed {seed} v{votes}: removed {:2} hits {:2} precision {:.2} | ",
                d.removed_ids.len(), hit,
                hit as f64 / d.removed_ids.len().max(1) as f64
            );
        }
        println!();
    }
}
