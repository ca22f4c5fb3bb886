use rand::Rng;

use crate::error::{Error, Result};

/// Highest permitted value; ties go to the lowest index.
pub fn masked_argmax(q: &[f64], mask: &[bool]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in q.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > q[b]) {
            best = Some(i);
        }
    }
    best.ok_or(Error::EmptyMask)
}

/// Uniform over permitted entries with probability `epsilon`, greedy
/// otherwise. With `epsilon == 0` the generator is left untouched.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], mask: &[bool], epsilon: f64, rng: &mut R) -> Result<usize> {
    assert_eq!(q.len(), mask.len(), "q and mask lengths differ");
    let allowed = mask.iter().filter(|m| **m).count();
    if allowed == 0 {
        return Err(Error::EmptyMask);
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let pick = rng.gen_range(0..allowed);
        let index = mask.iter().enumerate().filter(|(_, m)| **m).nth(pick).map(|(i, _)| i);
        return Ok(index.expect("pick below allowed count"));
    }
    masked_argmax(q, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let full = [true; 3];
        assert_eq!(epsilon_greedy(&[1.0, 5.0, 3.0], &full, 0.0, &mut rng).unwrap(), 1);
        assert_eq!(epsilon_greedy(&[7.0, 7.0, 1.0], &full, 0.0, &mut rng).unwrap(), 0);
        assert_eq!(epsilon_greedy(&[9.0, 2.0, 3.0], &[false, true, true], 0.0, &mut rng).unwrap(), 2);
        assert!(matches!(epsilon_greedy(&[1.0], &[false], 0.5, &mut rng), Err(Error::EmptyMask)));
    }

    #[test]
    fn zero_epsilon_does_not_draw() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let b = a.clone();
        epsilon_greedy(&[0.0, 1.0], &[true, true], 0.0, &mut a).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_exploration_is_uniform_over_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mask = [true, false, true, true];
        let mut counts = [0u32; 4];
        for _ in 0..30_000 {
            counts[epsilon_greedy(&[0.0, 100.0, 0.0, 0.0], &mask, 1.0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[1], 0);
        for i in [0, 2, 3] {
            assert!((counts[i] as f64 - 10_000.0).abs() < 5.0 * (30_000.0f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt());
        }
    }
}
