use crate::error::{Error, Result};

/// Number of merges performed at each stage.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeSchedule {
    pub merges: Vec<usize>,
}

impl MergeSchedule {
    pub fn constant(r: usize, n_stages: usize) -> Self {
        MergeSchedule { merges: vec![r; n_stages] }
    }

    pub fn total(&self) -> usize {
        self.merges.iter().sum()
    }

    pub fn n_stages(&self) -> usize {
        self.merges.len()
    }

    /// Token counts before the first stage and after every stage.
    pub fn token_counts(&self, n_start: usize) -> Result<Vec<usize>> {
        let mut counts = Vec::with_capacity(self.merges.len() + 1);
        counts.push(n_start);
        let mut n = n_start;
        for &r in &self.merges {
            let limit = n / 2;
            if r > limit {
                return Err(Error::InvalidR { r, n, limit });
            }
            n -= r;
            counts.push(n);
        }
        if n == 0 {
            return Err(Error::Infeasible("schedule leaves no tokens".into()));
        }
        Ok(counts)
    }
}

/// Most merges `n_stages` stages can perform starting from `n` tokens.
fn max_merges(mut n: usize, n_stages: usize) -> usize {
    let start = n;
    for _ in 0..n_stages {
        n -= n / 2;
    }
    start - n
}

/// Spreads `n_start − n_target` merges over `n_stages` stages as evenly as
/// possible, earlier stages taking the remainder, while honoring the
/// `⌊N/2⌋` pairing limit of every stage.
pub fn build_schedule(n_start: usize, n_target: usize, n_stages: usize) -> Result<MergeSchedule> {
    if n_target == 0 || n_target > n_start || n_stages == 0 {
        return Err(Error::Infeasible(format!(
            "cannot go from {n_start} to {n_target} tokens in {n_stages} stages"
        )));
    }
    let mut remaining = n_start - n_target;
    if max_merges(n_start, n_stages) < remaining {
        return Err(Error::Infeasible(format!(
            "pairing limits allow at most {} merges from {n_start} tokens in {n_stages} stages",
            max_merges(n_start, n_stages)
        )));
    }
    let mut n = n_start;
    let mut merges = Vec::with_capacity(n_stages);
    for stage in 0..n_stages {
        let left = n_stages - stage;
        let mut r = remaining.div_ceil(left).min(n / 2);
        // take more now if the later stages could not finish the job
        while max_merges(n - r, left - 1) < remaining - r {
            r += 1;
        }
        merges.push(r);
        remaining -= r;
        n -= r;
    }
    Ok(MergeSchedule { merges })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_token_budget() {
        let s = build_schedule(196, 10, 12).unwrap();
        assert_eq!(s.total(), 186);
        assert_eq!(*s.token_counts(196).unwrap().last().unwrap(), 10);
        // a perfectly even split would need 15 merges out of 25 tokens at stage 11
        let even = MergeSchedule { merges: vec![16, 16, 16, 16, 16, 16, 15, 15, 15, 15, 15, 15] };
        assert_eq!(even.token_counts(196), Err(Error::InvalidR { r: 15, n: 25, limit: 12 }));
        assert_eq!(s.merges, vec![16, 16, 16, 16, 16, 16, 15, 15, 15, 15, 20, 10]);
    }

    #[test]
    fn thirty_token_budget() {
        let s = build_schedule(196, 30, 12).unwrap();
        assert_eq!(s.merges, vec![14, 14, 14, 14, 14, 14, 14, 14, 14, 14, 13, 13]);
        assert_eq!(s.total(), 166);
    }

    #[test]
    fn identity_budget() {
        assert_eq!(build_schedule(196, 196, 12).unwrap().merges, vec![0; 12]);
    }

    #[test]
    fn front_loads_when_even_split_breaks_limits() {
        // even split would be [4, 3]; stage 2 then only has 6 tokens → limit 3, ok.
        // 8 → 2 in 2 stages: even [3, 3] breaks the second limit (5/2 = 2).
        let s = build_schedule(8, 2, 2).unwrap();
        assert_eq!(s.merges, vec![4, 2]);
        assert!(matches!(build_schedule(8, 1, 2), Err(Error::Infeasible(_))));
    }

    #[test]
    fn rejects_bad_targets() {
        assert!(build_schedule(10, 0, 3).is_err());
        assert!(build_schedule(10, 11, 3).is_err());
        assert!(build_schedule(10, 5, 0).is_err());
    }

    #[test]
    fn constant_schedule_counts() {
        let counts = MergeSchedule::constant(8, 12).token_counts(196).unwrap();
        assert_eq!(*counts.last().unwrap(), 100);
        assert!(matches!(MergeSchedule::constant(3, 1).token_counts(5), Err(Error::InvalidR { .. })));
    }
}
