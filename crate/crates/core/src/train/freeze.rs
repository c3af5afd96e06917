use crate::error::{Error, Result};
use crate::model::EncoderParams;

/// True iff every parameter array of `after` is bit-identical to `before`.
pub fn freeze_check(before: &EncoderParams, after: &EncoderParams) -> Result<bool> {
    let a = before.named_arrays();
    let b = after.named_arrays();
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} parameter arrays",
            a.len(),
            b.len()
        )));
    }
    for ((name_a, x), (name_b, y)) in a.iter().zip(&b) {
        if name_a != name_b || x.shape() != y.shape() {
            return Err(Error::ShapeMismatch(format!(
                "`{name_a}` {:?} vs `{name_b}` {:?}",
                x.shape(),
                y.shape()
            )));
        }
        if x.iter()
            .zip(y.iter())
            .any(|(p, q)| p.to_bits() != q.to_bits())
        {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn identical_and_perturbed() {
        let p = EncoderParams::init(ModelConfig::toy(40), 1).unwrap();
        assert!(freeze_check(&p, &p.clone()).unwrap());
        let mut q = p.clone();
        q.layers[1].w2[[3, 4]] += 1e-9;
        assert!(!freeze_check(&p, &q).unwrap());
    }

    #[test]
    fn shape_mismatch() {
        let p = EncoderParams::init(ModelConfig::toy(40), 1).unwrap();
        let q = EncoderParams::init(ModelConfig::toy(41), 1).unwrap();
        assert!(matches!(freeze_check(&p, &q), Err(Error::ShapeMismatch(_))));
    }
}
