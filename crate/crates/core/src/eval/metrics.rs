use crate::error::{Error, Result};

/// Correctly rounded sum of `values` (Shewchuk's exact partials).
///
/// The result depends only on the multiset of inputs, never on their order.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    let mut special = 0.0;
    for mut x in values {
        if !x.is_finite() {
            special += x;
            continue;
        }
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    if special != 0.0 || special.is_nan() {
        return special;
    }
    // Add the partials from the top, then correct the final half-way case.
    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

fn check_pair(preds: usize, truths: usize) -> Result<()> {
    if preds == 0 {
        return Err(Error::Contract("metric over an empty sample".into()));
    }
    if preds != truths {
        return Err(Error::Contract(format!("{preds} predictions for {truths} ground truths")));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_pair(preds.len(), truths.len())?;
    Ok(exact_sum(preds.iter().zip(truths).map(|(p, t)| (p - t).abs())) / preds.len() as f64)
}

/// Cumulative score: the fraction of samples with `|pred − truth| ≤ k`.
pub fn cs_at(preds: &[f64], truths: &[f64], k: f64) -> Result<f64> {
    check_pair(preds.len(), truths.len())?;
    if !(k >= 0.0) {
        return Err(Error::Contract(format!("cumulative score threshold {k} must be ≥ 0")));
    }
    let hits = preds.iter().zip(truths).filter(|(p, t)| (*p - *t).abs() <= k).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// `1 − exp(−(pred − mu)² / (2 sigma²))`.
pub fn epsilon_error(pred: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Contract(format!("epsilon error needs sigma > 0, got {sigma}")));
    }
    let d = pred - mu;
    Ok(-(-(d * d) / (2.0 * sigma * sigma)).exp_m1())
}

/// Mean ε-error over samples.
pub fn mean_epsilon_error(preds: &[f64], mus: &[f64], sigmas: &[f64]) -> Result<f64> {
    check_pair(preds.len(), mus.len())?;
    check_pair(preds.len(), sigmas.len())?;
    let each = preds
        .iter()
        .zip(mus.iter().zip(sigmas))
        .map(|(&p, (&m, &s))| epsilon_error(p, m, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(exact_sum(each) / preds.len() as f64)
}

/// Fraction of exact matches.
pub fn accuracy(preds: &[usize], truths: &[usize]) -> Result<f64> {
    check_pair(preds.len(), truths.len())?;
    let hits = preds.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[4.0, 5.0], &[3.0, 5.0]).unwrap(), 0.5);
        assert_eq!(mae(&[1.5, 2.5], &[1.5, 2.5]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 10.0], &[5.0, 5.0]).unwrap(), 5.0);
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cs_examples() {
        let truths = [0.0; 4];
        let preds = [0.0, 3.0, 5.0, 7.0];
        assert_eq!(cs_at(&preds, &truths, 5.0).unwrap(), 0.75);
        assert_eq!(cs_at(&preds, &preds, 0.0).unwrap(), 1.0);
        assert_eq!(cs_at(&preds, &truths, f64::INFINITY).unwrap(), 1.0);
        assert!(cs_at(&[], &[], 1.0).is_err());
        assert!(cs_at(&preds, &truths, -1.0).is_err());
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_error(31.0, 31.0, 4.0).unwrap(), 0.0);
        let e = epsilon_error(35.0, 31.0, 4.0).unwrap();
        assert!((e - (1.0 - (-0.5f64).exp())).abs() < 1e-12);
        assert!((e - 0.39347).abs() < 1e-5);
        assert_eq!(epsilon_error(1e300, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(epsilon_error(-1e300, 0.0, 1.0).unwrap(), 1.0);
        assert!(epsilon_error(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 2], &[1, 0, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1], &[0, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 0, 1, 1], &[1, 0, 0, 1]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn exact_sum_cancels() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum([]), 0.0);
        assert_eq!(exact_sum([1.0, 1e-16, 1e-16]), 1.0000000000000002);
    }
}
