mod common;

use rand::Rng;
use tkg_core::eval::{aggregate, degradation, filtered_rank, ranks_to_text, RankingResult, CSV_HEADER};
use tkg_tensor::seeded;

use common::rank_oracle;

#[test]
fn filtered_rank_matches_sorting_oracle() {
    let mut rng = seeded(99);
    for _ in 0..1000 {
        let n = rng.random_range(1..=100);
        // coarse scores so that ties are common
        let logits: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8)) * 0.5).collect();
        let gold = rng.random_range(0..n);
        let known: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.2)).collect();
        assert_eq!(filtered_rank(&logits, gold, &known).unwrap(), rank_oracle(&logits, gold, &known));
    }
}

#[test]
fn aggregate_hand_values() {
    let r = aggregate(&[1, 2]).unwrap();
    assert_eq!(r.mrr, 75.0);
    let r = aggregate(&[1, 3, 10, 11]).unwrap();
    let mrr = 100.0 * (1.0 + 1.0 / 3.0 + 0.1 + 1.0 / 11.0) / 4.0;
    assert!((r.mrr - mrr).abs() < 1e-12);
    assert_eq!((r.hits1, r.hits3, r.hits10), (25.0, 50.0, 75.0));
    assert!(aggregate(&[0, 1]).is_err());
}

#[test]
fn report_layouts() {
    let row = aggregate(&[2]).unwrap().csv_row("no-inv", "valid");
    assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    assert!(row.starts_with("no-inv,valid,50.0000,"));
    let text = ranks_to_text(&[RankingResult {
        time: 4,
        subject: 1,
        relation: 2,
        gold: 3,
        rank: 7,
    }]);
    assert_eq!(text.lines().nth(1), Some("4\t1\t2\t3\t7"));
    assert!((degradation(40.0, 30.0) - 25.0).abs() < 1e-12);
}
