use rand::seq::index::sample;
use rand::Rng;

use super::Module;

/// Largest relative error between an analytic gradient and central
/// differences of `loss`, over `coords` randomly chosen parameter
/// coordinates (all of them when the model is smaller).
///
/// Relative error is `|ga - gn| / max(|ga|, |gn|, 1e-8)`.
pub fn grad_check<M, R>(
    model: &M,
    analytic: &M,
    loss: impl Fn(&M) -> f64,
    eps: f64,
    coords: usize,
    rng: &mut R,
) -> f64
where
    M: Module,
    R: Rng + ?Sized,
{
    let sizes: Vec<usize> = model.params().iter().map(|p| p.data.len()).collect();
    let total: usize = sizes.iter().sum();
    let picks = sample(rng, total, coords.min(total));
    let grads: Vec<f64> = analytic.params().iter().flat_map(|p| p.data.iter().copied()).collect();
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for flat in picks.iter() {
        let (mut tensor, mut offset) = (0, flat);
        while offset >= sizes[tensor] {
            offset -= sizes[tensor];
            tensor += 1;
        }
        let original = probe.params()[tensor].data[offset];
        probe.params_mut()[tensor].data[offset] = original + eps;
        let plus = loss(&probe);
        probe.params_mut()[tensor].data[offset] = original - eps;
        let minus = loss(&probe);
        probe.params_mut()[tensor].data[offset] = original;
        let numeric = (plus - minus) / (2.0 * eps);
        let ga = grads[flat];
        let rel = (ga - numeric).abs() / ga.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}
