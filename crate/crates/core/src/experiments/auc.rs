use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AucError {
    #[error("ROC AUC needs at least one positive and one negative sample")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("scores must be finite")]
    NonFinite,
}

/// ROC curve as `(false-positive rate, true-positive rate)` points from
/// `(0, 0)` to `(1, 1)`. Tied scores form a single step.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>, AucError> {
    if scores.len() != labels.len() {
        return Err(AucError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AucError::NonFinite);
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(AucError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Area under the ROC curve by the trapezoidal rule.
///
/// With ties stepped jointly this equals the Mann–Whitney statistic
/// `(concordant + ½·tied) / (pos · neg)`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, AucError> {
    let pts = roc_curve(scores, labels)?;
    Ok(trapezoid(&pts))
}

pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(pos: &[f64], neg: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let scores = pos.iter().chain(neg).copied().collect();
        let labels = pos.iter().map(|_| true).chain(neg.iter().map(|_| false)).collect();
        (scores, labels)
    }

    #[test]
    fn perfect_separation() {
        let (s, l) = split(&[0.9, 0.8], &[0.1, 0.2]);
        assert_eq!(roc_auc(&s, &l).unwrap(), 1.0);
    }

    #[test]
    fn all_ties() {
        let (s, l) = split(&[0.3, 0.3, 0.3], &[0.3, 0.3]);
        assert_eq!(roc_auc(&s, &l).unwrap(), 0.5);
    }

    #[test]
    fn three_of_four_pairs() {
        let (s, l) = split(&[0.8, 0.4], &[0.6, 0.2]);
        assert_eq!(roc_auc(&s, &l).unwrap(), 0.75);
    }

    #[test]
    fn errors() {
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), Err(AucError::SingleClass));
        assert_eq!(
            roc_auc(&[0.1], &[true, false]),
            Err(AucError::LengthMismatch { scores: 1, labels: 2 })
        );
        assert_eq!(roc_auc(&[f64::NAN, 0.2], &[true, false]), Err(AucError::NonFinite));
    }

    #[test]
    fn curve_endpoints() {
        let (s, l) = split(&[0.8, 0.4], &[0.6, 0.2]);
        let c = roc_curve(&s, &l).unwrap();
        assert_eq!(c.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.last(), Some(&(1.0, 1.0)));
        assert_eq!(c.len(), 5);
    }
}
