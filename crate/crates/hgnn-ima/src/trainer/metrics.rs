//! Micro / macro F1 for single-label multiclass prediction.

/// Micro-F1 equals global accuracy for single-label multiclass.
pub fn micro_f1(preds: &[usize], golds: &[usize]) -> f64 {
    assert_eq!(preds.len(), golds.len());
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    hits as f64 / preds.len() as f64
}

/// Unweighted mean of per-category F1. Categories absent from both the
/// predictions and the gold labels are excluded from the mean; categories
/// present on one side only contribute an F1 of 0.
pub fn macro_f1(preds: &[usize], golds: &[usize], n_classes: usize) -> f64 {
    assert_eq!(preds.len(), golds.len());
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fal_n = vec![0usize; n_classes];
    for (&p, &g) in preds.iter().zip(golds) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fal_n[g] += 1;
        }
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for c in 0..n_classes {
        let support = tp[c] + fp[c] + fal_n[c];
        if support == 0 {
            continue;
        }
        total += 2.0 * tp[c] as f64 / (2.0 * tp[c] as f64 + fp[c] as f64 + fal_n[c] as f64);
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}
