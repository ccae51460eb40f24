//! Metric implementations against direct formula substitution and brute force.

use ses_adapter::metrics::{accuracy, average_ranks, f1, fmax, mcc, spearman, ConfusionCounts};
use ses_adapter::rng::Stream;
use ses_adapter::Matrix;

fn counts(s: Stream, i: u64) -> ConfusionCounts {
    let s = s.split(i);
    // mix tiny and large magnitudes, including zero cells
    let cell = |k: u64| {
        let scale = [0, 3, 50, 10_000, 1 << 40][(s.word(10 + k) % 5) as usize];
        if scale == 0 { 0 } else { s.word(k) % scale }
    };
    ConfusionCounts::new(cell(0), cell(1), cell(2), cell(3))
}

#[test]
fn accuracy_f1_mcc_on_random_counts() {
    let s = Stream::new(1, "confusion");
    for i in 0..10_000 {
        let cc = counts(s, i);
        let (tp, tn, fp, fn_) = (cc.tp as u128, cc.tn as u128, cc.fp as u128, cc.fn_ as u128);
        let total = tp + tn + fp + fn_;
        if total == 0 {
            assert!(accuracy(&cc).is_err());
        } else {
            // correctly rounded quotient of the exact rational
            assert_eq!(accuracy(&cc).unwrap(), (tp + tn) as f64 / total as f64);
        }
        let f1_den = 2 * tp + fp + fn_;
        let want_f1 = if f1_den == 0 { 0.0 } else { (2 * tp) as f64 / f1_den as f64 };
        assert_eq!(f1(&cc), want_f1);

        let margins = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        let want_mcc = if margins.contains(&0) {
            0.0
        } else {
            let num = (tp * tn) as f64 - (fp * fn_) as f64;
            num / margins.iter().map(|&m| (m as f64).sqrt()).product::<f64>()
        };
        let got = mcc(&cc);
        assert!((got - want_mcc).abs() <= 1e-12, "{cc:?}: {got} vs {want_mcc}");
        assert!((-1.0..=1.0).contains(&got));
    }
}

fn permutation(n: usize, s: Stream) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64).collect();
    s.shuffle(&mut v);
    v
}

#[test]
fn spearman_without_ties_matches_rank_difference_formula() {
    let s = Stream::new(2, "spearman");
    for i in 0..10_000u64 {
        let n = 2 + (s.word(i) % 40) as usize;
        let a = permutation(n, s.split(2 * i));
        let b = permutation(n, s.split(2 * i + 1));
        if a.iter().all(|&x| x == a[0]) || b.iter().all(|&x| x == b[0]) {
            continue;
        }
        let d2: i64 = a.iter().zip(&b).map(|(x, y)| ((x - y) as i64).pow(2)).sum();
        let n = n as i64;
        let want = 1.0 - (6 * d2) as f64 / (n * (n * n - 1)) as f64;
        // monotone transform of the scores leaves the ranks unchanged
        let scores: Vec<f64> = a.iter().map(|x| (0.3 * x).exp() - 7.0).collect();
        let got = spearman(&scores, &b).unwrap();
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

#[test]
fn spearman_with_ties_is_pearson_of_average_ranks() {
    let s = Stream::new(3, "ties");
    let mut checked = 0;
    for i in 0..10_000u64 {
        let n = 2 + (s.word(i) % 30) as usize;
        let levels = 2 + s.word(i + 1_000_000) % 5;
        let a: Vec<f64> = (0..n).map(|k| (s.split(i).word(k as u64) % levels) as f64).collect();
        let b: Vec<f64> = (0..n).map(|k| s.split(i + 77_777).normal(k as u64)).collect();
        if a.iter().all(|&x| x == a[0]) {
            assert!(spearman(&a, &b).is_err());
            continue;
        }
        let (ra, rb) = (brute_ranks(&a), brute_ranks(&b));
        assert_eq!(average_ranks(&a), ra);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&ra), mean(&rb));
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
        let want = cov / (va.sqrt() * vb.sqrt());
        let got = spearman(&a, &b).unwrap();
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        checked += 1;
    }
    assert!(checked > 8_000, "{checked}");
}

#[test]
fn spearman_rejects_constant_lists() {
    assert!(spearman(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
    assert!(spearman(&[0.0, 1.0, 2.0], &[4.0, 4.0, 4.0]).is_err());
}

/// Protein-centric F straight from the definitions, at one threshold.
fn reference_f(scores: &[Vec<f64>], truth: &[Vec<bool>], t: f64) -> f64 {
    let mut precisions = Vec::new();
    let mut recall = 0.0;
    for (s, y) in scores.iter().zip(truth) {
        let predicted: Vec<usize> = (0..s.len()).filter(|&j| s[j] >= t).collect();
        let positives = y.iter().filter(|&&b| b).count();
        let hits = predicted.iter().filter(|&&j| y[j]).count();
        if !predicted.is_empty() {
            precisions.push(hits as f64 / predicted.len() as f64);
        }
        if positives > 0 {
            recall += hits as f64 / positives as f64;
        }
    }
    let recall = recall / scores.len() as f64;
    let precision = if precisions.is_empty() { 0.0 } else { precisions.iter().sum::<f64>() / precisions.len() as f64 };
    if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) }
}

/// Maximum over every distinct score used as a threshold.
fn reference_fmax(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> f64 {
    let mut candidates: Vec<f64> = scores.iter().flatten().copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.iter().map(|&t| reference_f(scores, truth, t)).fold(0.0, f64::max)
}

fn as_matrices(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> (Matrix, Matrix) {
    (
        Matrix::from_rows(scores),
        Matrix::from_rows(&truth.iter().map(|r| r.iter().map(|&b| f64::from(u8::from(b))).collect::<Vec<_>>()).collect::<Vec<_>>()),
    )
}

#[test]
fn fmax_two_by_two_example() {
    let scores = vec![vec![0.9, 0.2], vec![0.6, 0.7]];
    let truth = vec![vec![true, false], vec![false, true]];
    let (s, t) = as_matrices(&scores, &truth);
    let got = fmax(&s, &t).unwrap();
    assert!((got - 1.0).abs() < 1e-12);
    assert!((reference_fmax(&scores, &truth) - got).abs() < 1e-12);
}

#[test]
fn fmax_matches_distinct_threshold_sweep_on_grid_scores() {
    let s = Stream::new(4, "fmax");
    for i in 0..2_000u64 {
        let r = s.split(i);
        let (n, c) = (1 + (r.word(0) % 6) as usize, 1 + (r.word(1) % 5) as usize);
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|p| (0..c).map(|j| (r.split(1).word((p * c + j) as u64) % 101) as f64 / 100.0).collect())
            .collect();
        let truth: Vec<Vec<bool>> = (0..n)
            .map(|p| (0..c).map(|j| r.split(2).uniform((p * c + j) as u64) < 0.35).collect())
            .collect();
        let (sm, tm) = as_matrices(&scores, &truth);
        let got = fmax(&sm, &tm).unwrap();
        let want = reference_fmax(&scores, &truth);
        assert!((got - want).abs() < 1e-12, "case {i}: {got} vs {want}\n{scores:?}\n{truth:?}");
    }
}

#[test]
fn fmax_rejects_out_of_range_scores() {
    let (s, t) = (Matrix::from_rows(&[[1.5]]), Matrix::from_rows(&[[1.0]]));
    assert!(fmax(&s, &t).is_err());
}
