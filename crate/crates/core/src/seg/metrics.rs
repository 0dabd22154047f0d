//! Overlap metrics on binary masks. Values above 0.5 count as foreground;
//! two empty masks score 1.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

fn counts(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if a.shape != b.shape {
        return Err(Error::dim(format!("mask shapes {:?} and {:?} differ", a.shape, b.shape)));
    }
    let (mut na, mut nb, mut inter) = (0, 0, 0);
    for (x, y) in a.data.iter().zip(&b.data) {
        let (x, y) = (*x > 0.5, *y > 0.5);
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    Ok((na, nb, inter))
}

/// `2|a∩b| / (|a| + |b|)`.
pub fn dice(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (na, nb, i) = counts(a, b)?;
    Ok(if na + nb == 0 {
        1.0
    } else {
        2.0 * i as f64 / (na + nb) as f64
    })
}

/// `|a∩b| / |a∪b|`.
pub fn iou(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (na, nb, i) = counts(a, b)?;
    let union = na + nb - i;
    Ok(if union == 0 { 1.0 } else { i as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::derive_stream;

    fn mask(bits: &[u8]) -> Tensor {
        Tensor::new(vec![bits.len()], bits.iter().map(|&b| b as f64).collect()).unwrap()
    }

    #[test]
    fn examples() {
        let a = mask(&[1, 1, 0, 0, 0]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = mask(&[0, 0, 1, 1, 0]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let c = mask(&[1, 1, 1, 1, 0]);
        assert!((dice(&a, &c).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(iou(&a, &c).unwrap(), 0.5);
        let z = mask(&[0; 5]);
        assert_eq!(dice(&z, &z).unwrap(), 1.0);
        assert_eq!(iou(&z, &z).unwrap(), 1.0);
        assert!(dice(&a, &mask(&[1, 0])).is_err());
    }

    #[test]
    fn dice_iou_identity_and_symmetry() {
        let mut rng = derive_stream(0, &[("metrics", 0)]);
        for _ in 0..10_000 {
            let n = 1 + rng.below(30);
            let p = rng.uniform();
            let a: Vec<u8> = (0..n).map(|_| (rng.uniform() < p) as u8).collect();
            let b: Vec<u8> = (0..n).map(|_| (rng.uniform() < p) as u8).collect();
            let (a, b) = (mask(&a), mask(&b));
            let (d, j) = (dice(&a, &b).unwrap(), iou(&a, &b).unwrap());
            assert!((0.0..=1.0).contains(&j) && j <= d + 1e-15 && d <= 1.0);
            assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
            assert_eq!(d, dice(&b, &a).unwrap());
            assert_eq!(j, iou(&b, &a).unwrap());
        }
    }
}
