use crate::error::{Error, Result};
use crate::wire::{narrow, put_u16, Reader};

/// One consolidation step: which pre-stage tokens were merged and where every
/// pre-stage token ended up.
///
/// Each pair `(a, b)` folds source `a` into destination `b`. A destination
/// may absorb several sources, but a source is removed at most once and is
/// never itself a destination. Post-stage order is canonical: a merged group
/// occupies the slot of its lowest member index and everything else keeps its
/// relative order, so `dest` is a function of `pairs` alone and never needs
/// to be transmitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeStage {
    pub n_before: usize,
    pub pairs: Vec<(usize, usize)>,
    pub dest: Vec<usize>,
}

impl MergeStage {
    pub fn new(n_before: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        const NONE: usize = usize::MAX;
        let mut target = vec![NONE; n_before];
        let mut is_dest = vec![false; n_before];
        for &(a, b) in &pairs {
            if a == b || a >= n_before || b >= n_before || target[a] != NONE || is_dest[a] || target[b] != NONE {
                return Err(Error::InvalidPair(a, b));
            }
            target[a] = b;
            is_dest[b] = true;
        }
        let root: Vec<usize> = (0..n_before).map(|i| if target[i] == NONE { i } else { target[i] }).collect();
        let mut slot = vec![NONE; n_before];
        let mut dest = vec![0; n_before];
        let mut next = 0;
        for i in 0..n_before {
            let g = root[i];
            if slot[g] == NONE {
                slot[g] = next;
                next += 1;
            }
            dest[i] = slot[g];
        }
        Ok(MergeStage { n_before, pairs, dest })
    }

    pub fn n_after(&self) -> usize {
        self.n_before - self.pairs.len()
    }
}

/// Full record of a reorganization, replayable in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergePlan {
    pub n_start: usize,
    pub stages: Vec<MergeStage>,
}

impl MergePlan {
    pub fn empty(n_start: usize) -> Self {
        MergePlan { n_start, stages: Vec::new() }
    }

    pub fn n_final(&self) -> usize {
        self.stages.last().map_or(self.n_start, MergeStage::n_after)
    }

    pub fn push(&mut self, stage: MergeStage) -> Result<()> {
        if stage.n_before != self.n_final() {
            return Err(Error::PlanMismatch(format!(
                "stage expects {} tokens, plan currently yields {}",
                stage.n_before,
                self.n_final()
            )));
        }
        self.stages.push(stage);
        Ok(())
    }

    /// Origin lists of the final tokens, starting from one token per patch.
    pub fn replay_origins(&self) -> Vec<Vec<usize>> {
        let mut origin: Vec<Vec<usize>> = (0..self.n_start).map(|i| vec![i]).collect();
        for stage in &self.stages {
            origin = crate::reorganizer::merge_origins(&origin, stage);
        }
        origin
    }

    /// Per stage: `u16` pair count, then `(u16, u16)` pairs, little-endian.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for stage in &self.stages {
            put_u16(&mut out, narrow(stage.pairs.len(), "pair count")?);
            for &(a, b) in &stage.pairs {
                put_u16(&mut out, narrow(a, "pair index")?);
                put_u16(&mut out, narrow(b, "pair index")?);
            }
        }
        Ok(out)
    }

    /// Bit cost of [`MergePlan::to_bytes`].
    pub fn side_info_bits(&self) -> usize {
        self.stages.iter().map(|s| 16 + 32 * s.pairs.len()).sum()
    }

    /// Parses `n_stages` stages; every stage is re-validated.
    pub fn from_bytes(n_start: usize, n_stages: usize, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "merge plan");
        let plan = Self::read(n_start, n_stages, &mut r).map_err(|e| Error::PlanMismatch(e.to_string()))?;
        r.finish().map_err(|e| Error::PlanMismatch(e.to_string()))?;
        Ok(plan)
    }

    pub(crate) fn read(n_start: usize, n_stages: usize, r: &mut Reader<'_>) -> Result<Self> {
        let mut plan = MergePlan::empty(n_start);
        for _ in 0..n_stages {
            let count = usize::from(r.u16()?);
            if count > plan.n_final() / 2 {
                return Err(Error::PlanMismatch(format!("{count} pairs for {} tokens", plan.n_final())));
            }
            let pairs = (0..count)
                .map(|_| Ok((usize::from(r.u16()?), usize::from(r.u16()?))))
                .collect::<Result<Vec<_>>>()?;
            plan.push(MergeStage::new(plan.n_final(), pairs)?)?;
        }
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_destinations() {
        let s = MergeStage::new(6, vec![(4, 1), (2, 5)]).unwrap();
        assert_eq!(s.dest, vec![0, 1, 2, 3, 1, 2]);
        assert_eq!(s.n_after(), 4);
    }

    #[test]
    fn shared_destination() {
        let s = MergeStage::new(6, vec![(0, 3), (4, 3)]).unwrap();
        assert_eq!(s.dest, vec![0, 1, 2, 0, 0, 3]);
        assert_eq!(s.n_after(), 4);
    }

    #[test]
    fn rejects_reuse() {
        assert_eq!(MergeStage::new(4, vec![(0, 1), (0, 3)]), Err(Error::InvalidPair(0, 3)));
        assert_eq!(MergeStage::new(4, vec![(0, 1), (1, 3)]), Err(Error::InvalidPair(1, 3)));
        assert_eq!(MergeStage::new(4, vec![(1, 3), (0, 1)]), Err(Error::InvalidPair(0, 1)));
        assert_eq!(MergeStage::new(4, vec![(0, 0)]), Err(Error::InvalidPair(0, 0)));
        assert_eq!(MergeStage::new(4, vec![(0, 4)]), Err(Error::InvalidPair(0, 4)));
    }

    #[test]
    fn wire_roundtrip_and_cost() {
        let mut plan = MergePlan::empty(8);
        plan.push(MergeStage::new(8, vec![(0, 1), (6, 3)]).unwrap()).unwrap();
        plan.push(MergeStage::new(6, vec![]).unwrap()).unwrap();
        plan.push(MergeStage::new(6, vec![(2, 5)]).unwrap()).unwrap();
        let bytes = plan.to_bytes().unwrap();
        assert_eq!(bytes.len() * 8, plan.side_info_bits());
        assert_eq!(plan.side_info_bits(), 3 * 16 + 3 * 32);
        assert_eq!(MergePlan::from_bytes(8, 3, &bytes).unwrap(), plan);
        assert!(matches!(MergePlan::from_bytes(8, 4, &bytes), Err(Error::PlanMismatch(_))));
        assert!(matches!(MergePlan::from_bytes(8, 2, &bytes), Err(Error::PlanMismatch(_))));
    }

    #[test]
    fn origins_replay() {
        let mut plan = MergePlan::empty(4);
        plan.push(MergeStage::new(4, vec![(2, 1)]).unwrap()).unwrap();
        assert_eq!(plan.replay_origins(), vec![vec![0], vec![1, 2], vec![3]]);
    }
}
