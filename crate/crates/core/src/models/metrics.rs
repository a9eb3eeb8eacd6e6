use super::ModelError;

/// Mean per-class recall over the classes present in `truth`.
pub fn balanced_accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64, ModelError> {
    if truth.len() != predicted.len() {
        return Err(ModelError::LengthMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let n_classes = truth.iter().chain(predicted).max().map_or(0, |m| m + 1);
    let mut support = vec![0usize; n_classes];
    let mut hits = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        support[t] += 1;
        if t == p {
            hits[t] += 1;
        }
    }
    let present: Vec<usize> = (0..n_classes).filter(|&c| support[c] > 0).collect();
    if present.len() < 2 {
        return Err(ModelError::SingleClassTruth);
    }
    let total: f64 = present
        .iter()
        .map(|&c| hits[c] as f64 / support[c] as f64)
        .sum();
    Ok(total / present.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let y = [0, 0, 1, 1, 1];
        assert_eq!(balanced_accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&y, &[1; 5]).unwrap(), 0.5);
        assert_eq!(balanced_accuracy(&y, &[0; 5]).unwrap(), 0.5);

        // TPR 0.8, TNR 0.6
        let truth = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let pred = [1, 1, 1, 1, 0, 0, 0, 0, 1, 1];
        assert!((balanced_accuracy(&truth, &pred).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn label_renaming_invariance() {
        let truth = [1, 1, 1, 0, 0, 1, 0];
        let pred = [1, 0, 1, 0, 1, 1, 0];
        let swap = |v: &[usize]| v.iter().map(|x| 1 - x).collect::<Vec<_>>();
        assert_eq!(
            balanced_accuracy(&truth, &pred).unwrap(),
            balanced_accuracy(&swap(&truth), &swap(&pred)).unwrap()
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(balanced_accuracy(&[1, 1], &[1, 0]), Err(ModelError::SingleClassTruth)));
        assert!(matches!(balanced_accuracy(&[1, 0], &[1]), Err(ModelError::LengthMismatch { .. })));
        assert!(matches!(balanced_accuracy(&[], &[]), Err(ModelError::EmptyTrainingSet)));
    }
}
