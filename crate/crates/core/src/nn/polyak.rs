use ndarray::Zip;

use super::mlp::Mlp;
use crate::error::{config, Result};

/// `target <- tau * source + (1 - tau) * target`, elementwise.
pub fn polyak_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return config(format!("polyak tau {tau} outside [0, 1]"));
    }
    if !target.same_shape(source) {
        return config(format!(
            "polyak shapes differ: {:?} vs {:?}",
            target.sizes(),
            source.sizes()
        ));
    }
    let keep = 1.0 - tau;
    for (t, s) in target.layers_mut().iter_mut().zip(source.layers()) {
        Zip::from(&mut t.weights)
            .and(&s.weights)
            .for_each(|t, &s| *t = tau * s + keep * *t);
        Zip::from(&mut t.bias)
            .and(&s.bias)
            .for_each(|t, &s| *t = tau * s + keep * *t);
    }
    Ok(())
}
