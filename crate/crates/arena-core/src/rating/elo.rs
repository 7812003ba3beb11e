//! Online ELO: logistic win probability and the per-battle update rule.

use super::{BattleOutcome, EloParams, RatingError, RatingTable, Verdict};

/// Probability that a player rated `r_i` beats one rated `r_j` under the
/// base-10 logistic model: `1 / (1 + 10^((r_j - r_i) / alpha))`.
pub fn win_probability(r_i: f64, r_j: f64, params: &EloParams) -> f64 {
    1.0 / (1.0 + 10f64.powf((r_j - r_i) / params.alpha))
}

/// Applies one battle outcome to the table: both participants move by the
/// same amount in opposite directions, so their rating sum is conserved.
/// Unregistered models enter at the initial rating. The outcome weight
/// scales the update step.
pub fn online_update(table: &mut RatingTable, outcome: &BattleOutcome) -> Result<(), RatingError> {
    if outcome.model_a == outcome.model_b {
        return Err(RatingError::IdenticalContestants(outcome.model_a.clone()));
    }
    let r_a = table.rating_or_register(&outcome.model_a);
    let r_b = table.rating_or_register(&outcome.model_b);

    let score_a = match outcome.verdict {
        Verdict::AWins => 1.0,
        Verdict::BWins => 0.0,
        Verdict::Tie => 0.5,
    };
    let p_a = win_probability(r_a, r_b, &table.params);
    let delta = table.params.k_factor * outcome.weight * (score_a - p_a);

    table.ratings.insert(outcome.model_a.clone(), r_a + delta);
    table.ratings.insert(outcome.model_b.clone(), r_b - delta);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rating::Verdict;

    fn params() -> EloParams {
        EloParams::default()
    }

    #[test]
    fn equal_ratings_give_half() {
        assert_eq!(win_probability(1000.0, 1000.0, &params()), 0.5);
    }

    #[test]
    fn four_hundred_point_gap_gives_ten_elevenths() {
        // 1 / (1 + 10^(-1)) = 10/11
        let p = win_probability(1400.0, 1000.0, &params());
        assert!((p - 10.0 / 11.0).abs() < 1e-12);
        let q = win_probability(1000.0, 1400.0, &params());
        assert!((q - 1.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn probabilities_complement() {
        for (a, b) in [(1000.0, 1000.0), (1234.5, 987.6), (600.0, 1400.0)] {
            let sum = win_probability(a, b, &params()) + win_probability(b, a, &params());
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_in_own_rating() {
        let p_low = win_probability(900.0, 1000.0, &params());
        let p_mid = win_probability(1000.0, 1000.0, &params());
        let p_high = win_probability(1100.0, 1000.0, &params());
        assert!(p_low < p_mid && p_mid < p_high);
    }

    #[test]
    fn update_from_even_start() {
        // Both at 1000, K=4, A wins: K * (1 - 0.5) = 2 points move.
        let mut table = RatingTable::new(params());
        let outcome = BattleOutcome::new("A", "B", Verdict::AWins).unwrap();
        online_update(&mut table, &outcome).unwrap();
        assert_eq!(table.rating("A"), Some(1002.0));
        assert_eq!(table.rating("B"), Some(998.0));
    }

    #[test]
    fn tie_at_equal_ratings_is_a_noop() {
        let mut table = RatingTable::new(params());
        let outcome = BattleOutcome::new("A", "B", Verdict::Tie).unwrap();
        online_update(&mut table, &outcome).unwrap();
        assert_eq!(table.rating("A"), Some(1000.0));
        assert_eq!(table.rating("B"), Some(1000.0));
    }

    #[test]
    fn favorite_gains_little() {
        // A at 1400 beats B at 1000: gain is 4 * (1 - 10/11) = 4/11.
        let mut table = RatingTable::new(params());
        table.ratings.insert("A".into(), 1400.0);
        table.ratings.insert("B".into(), 1000.0);
        let outcome = BattleOutcome::new("A", "B", Verdict::AWins).unwrap();
        online_update(&mut table, &outcome).unwrap();
        let expected = 1400.0 + 4.0 * (1.0 - 10.0 / 11.0);
        assert!((table.rating("A").unwrap() - expected).abs() < 1e-9);
        assert!((table.rating("A").unwrap() - 1400.3636).abs() < 1e-3);
    }

    #[test]
    fn update_conserves_pair_sum() {
        let mut table = RatingTable::new(params());
        table.ratings.insert("A".into(), 1387.25);
        table.ratings.insert("B".into(), 743.5);
        let before = table.rating("A").unwrap() + table.rating("B").unwrap();
        let outcome = BattleOutcome::new("A", "B", Verdict::BWins).unwrap();
        online_update(&mut table, &outcome).unwrap();
        let after = table.rating("A").unwrap() + table.rating("B").unwrap();
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn update_rejects_self_battle() {
        let mut table = RatingTable::new(params());
        let outcome = BattleOutcome {
            model_a: "A".into(),
            model_b: "A".into(),
            verdict: Verdict::AWins,
            segment_tags: Default::default(),
            weight: 1.0,
        };
        assert!(online_update(&mut table, &outcome).is_err());
    }
}
