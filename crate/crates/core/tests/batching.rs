//! Token-budget batching over random length multisets.

use ses_adapter::data::plan_batches;
use ses_adapter::rng::Stream;
use ses_adapter::Error;

#[test]
fn random_multisets_respect_budget_and_conserve_records() {
    let s = Stream::new(21, "batching");
    for case in 0..1_000u64 {
        let r = s.split(case);
        let budget = 1 + (r.word(0) % 500) as usize;
        let n = (r.word(1) % 120) as usize;
        let lengths: Vec<usize> = (0..n).map(|i| 1 + (r.split(1).word(i as u64) % budget as u64) as usize).collect();
        let batches = plan_batches(&lengths, budget, r.split(2)).unwrap();

        let mut seen = vec![0usize; n];
        for b in &batches {
            assert!(!b.is_empty());
            let max = b.iter().map(|&i| lengths[i]).max().unwrap();
            assert!(b.len() * max <= budget, "case {case}: {} x {max} > {budget}", b.len());
            for &i in b {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "case {case}: record multiplicities {seen:?}");
    }
}

#[test]
fn overlong_record_is_rejected() {
    let err = plan_batches(&[3, 11, 2], 10, Stream::new(0, "b")).unwrap_err();
    assert!(matches!(err, Error::OverLength { len: 11, budget: 10, .. }), "{err}");
}

#[test]
fn plan_is_deterministic_per_stream() {
    let lengths: Vec<usize> = (0..50).map(|i| 1 + (i * 7) % 30).collect();
    let a = plan_batches(&lengths, 60, Stream::new(1, "b").split(3)).unwrap();
    let b = plan_batches(&lengths, 60, Stream::new(1, "b").split(3)).unwrap();
    assert_eq!(a, b);
}
