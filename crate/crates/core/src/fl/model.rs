use crate::error::{Error, Result};

use super::data::ClientDataset;

/// Softmax regression. `weights` holds the `classes × dims` matrix row-major
/// followed by `classes` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub weights: Vec<f64>,
    pub dims: usize,
    pub classes: usize,
}

impl Model {
    pub fn zeros(dims: usize, classes: usize) -> Self {
        Self { weights: vec![0.0; (dims + 1) * classes], dims, classes }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, ds: &ClientDataset) -> Result<()> {
        if ds.dims != self.dims || ds.classes != self.classes {
            return Err(Error::ShapeMismatch(format!(
                "model {}x{} vs data {}x{}",
                self.classes, self.dims, ds.classes, ds.dims
            )));
        }
        Ok(())
    }
}

fn logits(w: &[f64], dims: usize, classes: usize, x: &[f64], out: &mut [f64]) {
    let bias = &w[classes * dims..];
    for c in 0..classes {
        let row = &w[c * dims..(c + 1) * dims];
        out[c] = bias[c] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// In-place softmax; returns `log Σ exp(z)`.
fn softmax(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

/// Mean cross-entropy and its gradient. With `proximal = Some((μ, anchor))`
/// the objective gains `μ/2 · ‖w − anchor‖²`.
pub fn loss_and_grad(
    model: &Model,
    ds: &ClientDataset,
    proximal: Option<(f64, &[f64])>,
) -> Result<(f64, Vec<f64>)> {
    model.check(ds)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (dims, classes) = (model.dims, model.classes);
    let w = &model.weights;
    let mut grad = vec![0.0; w.len()];
    let mut z = vec![0.0; classes];
    let mut loss = 0.0;
    for i in 0..ds.size() {
        let x = ds.row(i);
        let y = ds.labels[i];
        logits(w, dims, classes, x, &mut z);
        let zy = z[y];
        let lse = softmax(&mut z);
        loss += lse - zy;
        z[y] -= 1.0;
        for c in 0..classes {
            let g = z[c];
            for (gw, xv) in grad[c * dims..(c + 1) * dims].iter_mut().zip(x) {
                *gw += g * xv;
            }
            grad[classes * dims + c] += g;
        }
    }
    let scale = 1.0 / ds.size() as f64;
    loss *= scale;
    grad.iter_mut().for_each(|g| *g *= scale);
    if let Some((mu, anchor)) = proximal {
        for ((g, wv), a) in grad.iter_mut().zip(w).zip(anchor) {
            let d = wv - a;
            *g += mu * d;
            loss += 0.5 * mu * d * d;
        }
    }
    Ok((loss, grad))
}

fn train(
    model: &Model,
    ds: &ClientDataset,
    iterations: u32,
    lr: f64,
    mu: f64,
) -> Result<(Model, f64)> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("local iterations must be >= 1".into()));
    }
    model.check(ds)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let anchor = model.weights.clone();
    let mut current = model.clone();
    for _ in 0..iterations {
        let prox = (mu > 0.0).then_some((mu, anchor.as_slice()));
        let (_, grad) = loss_and_grad(&current, ds, prox)?;
        for (w, g) in current.weights.iter_mut().zip(&grad) {
            *w -= lr * g;
        }
    }
    let (loss, _) = loss_and_grad(&current, ds, None)?;
    Ok((current, loss))
}

/// Full-batch gradient descent for `iterations` steps; returns the updated
/// model and its cross-entropy on `ds`.
///
/// Steps are monotone for `lr ≤ 2 / λ_max(XᵀX / |D|)` (augmented with the
/// bias column), since the softmax Hessian is bounded by half that matrix.
pub fn local_train(model: &Model, ds: &ClientDataset, iterations: u32, lr: f64) -> Result<(Model, f64)> {
    train(model, ds, iterations, lr, 0.0)
}

/// As [`local_train`] with a proximal pull `μ/2 · ‖w − w_global‖²` toward the
/// starting weights.
pub fn local_train_proximal(
    model: &Model,
    ds: &ClientDataset,
    iterations: u32,
    lr: f64,
    mu: f64,
) -> Result<(Model, f64)> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument("proximal mu must be >= 0".into()));
    }
    train(model, ds, iterations, lr, mu)
}

/// Size-weighted mean, reduced in the given order.
pub fn aggregate(models: &[Model], sizes: &[usize]) -> Result<Model> {
    let first = models.first().ok_or(Error::ShapeMismatch("no models to aggregate".into()))?;
    if models.len() != sizes.len() {
        return Err(Error::ShapeMismatch("one size per model required".into()));
    }
    if models.iter().any(|m| m.dims != first.dims || m.classes != first.classes) {
        return Err(Error::ShapeMismatch("models differ in shape".into()));
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut weights = vec![0.0; first.weights.len()];
    for (m, &s) in models.iter().zip(sizes) {
        let share = s as f64 / total as f64;
        for (acc, w) in weights.iter_mut().zip(&m.weights) {
            *acc += share * w;
        }
    }
    Ok(Model { weights, dims: first.dims, classes: first.classes })
}

/// Top-1 accuracy and mean cross-entropy.
pub fn evaluate(model: &Model, test: &ClientDataset) -> Result<(f64, f64)> {
    model.check(test)?;
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut z = vec![0.0; model.classes];
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..test.size() {
        logits(&model.weights, model.dims, model.classes, test.row(i), &mut z);
        let y = test.labels[i];
        let zy = z[y];
        let mut best = 0;
        for c in 1..model.classes {
            if z[c] > z[best] {
                best = c;
            }
        }
        if best == y {
            correct += 1;
        }
        loss += softmax(&mut z) - zy;
    }
    let n = test.size() as f64;
    Ok((correct as f64 / n, loss / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fl::SyntheticSpec;
    use rand::{Rng, SeedableRng};

    fn central_difference(model: &Model, ds: &ClientDataset, prox: Option<(f64, &[f64])>) -> Vec<f64> {
        let h = 1e-6;
        (0..model.weights.len())
            .map(|j| {
                let mut plus = model.clone();
                plus.weights[j] += h;
                let mut minus = model.clone();
                minus.weights[j] -= h;
                let fp = loss_and_grad(&plus, ds, prox).unwrap().0;
                let fm = loss_and_grad(&minus, ds, prox).unwrap().0;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let spec = SyntheticSpec { dims: 3, classes: 4, samples: 12, ..Default::default() };
            let ds = spec.generate(trial, 0).unwrap();
            let mut model = Model::zeros(3, 4);
            model.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
            let anchor: Vec<f64> = model.weights.iter().map(|w| w + 0.3).collect();
            for prox in [None, Some((0.5, anchor.as_slice()))] {
                let (_, g) = loss_and_grad(&model, &ds, prox).unwrap();
                let fd = central_difference(&model, &ds, prox);
                let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt() + fd.iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!(num / den < 1e-5, "relative error {}", num / den);
            }
        }
    }

    #[test]
    fn zero_lr_keeps_model() {
        let ds = SyntheticSpec { samples: 20, ..Default::default() }.generate(1, 0).unwrap();
        let m = Model::zeros(2, 2);
        let (out, loss) = local_train(&m, &ds, 3, 0.0).unwrap();
        assert_eq!(out, m);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_step_on_one_sample_descends() {
        let ds = ClientDataset::new(vec![1.0, -2.0], vec![1], 2, 3).unwrap();
        let m = Model::zeros(2, 3);
        let before = evaluate(&m, &ds).unwrap().1;
        let (_, after) = local_train(&m, &ds, 1, 0.05).unwrap();
        assert!(after < before);
    }

    #[test]
    fn training_loss_is_monotone_below_stability_bound() {
        let ds = SyntheticSpec { samples: 200, ..Default::default() }.generate(2, 0).unwrap();
        let mut m = Model::zeros(2, 2);
        let mut prev = f64::INFINITY;
        for _ in 0..30 {
            let (next, loss) = local_train(&m, &ds, 1, 0.05).unwrap();
            assert!(loss <= prev + 1e-12);
            prev = loss;
            m = next;
        }
    }

    #[test]
    fn errors() {
        let empty = ClientDataset::new(vec![], vec![], 2, 2).unwrap();
        let m = Model::zeros(2, 2);
        assert!(matches!(local_train(&m, &empty, 1, 0.1), Err(Error::EmptyDataset)));
        let ds = ClientDataset::new(vec![1.0], vec![0], 1, 2).unwrap();
        assert!(matches!(local_train(&m, &ds, 1, 0.1), Err(Error::ShapeMismatch(_))));
        assert!(aggregate(&[Model::zeros(2, 2), Model::zeros(1, 2)], &[1, 1]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let one = |w: f64| Model { weights: vec![w], dims: 0, classes: 1 };
        assert_eq!(aggregate(&[one(0.0), one(2.0)], &[1, 1]).unwrap().weights, vec![1.0]);
        assert_eq!(aggregate(&[one(0.0), one(3.0)], &[1, 2]).unwrap().weights, vec![2.0]);
        let m = Model { weights: vec![0.3, -1.2, 4.0], dims: 1, classes: 1 };
        let same = aggregate(&[m.clone(), m.clone(), m.clone()], &[3, 5, 9]).unwrap();
        for (a, b) in same.weights.iter().zip(&m.weights) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn evaluate_bounds_and_fit() {
        let ds = SyntheticSpec { samples: 400, separation: 10.0, ..Default::default() }.generate(5, 0).unwrap();
        let (acc, _) = evaluate(&Model::zeros(2, 2), &ds).unwrap();
        assert!((0.0..=1.0).contains(&acc));
        let (fit, _) = local_train(&Model::zeros(2, 2), &ds, 200, 0.05).unwrap();
        assert_eq!(evaluate(&fit, &ds).unwrap().0, 1.0);
    }

    #[test]
    fn chance_level_on_random_labels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let features: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = ClientDataset::new(features, labels, 1, 4).unwrap();
        // A zero model predicts class 0 everywhere.
        let (acc, loss) = evaluate(&Model::zeros(1, 4), &ds).unwrap();
        assert!((acc - 0.25).abs() < 0.03, "{acc}");
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }
}
