use crate::amplify::SearchSchedule;

/// One step of the per-branch coherent search and its uncomputation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchOp {
    /// Prepare the search state (swap the empty label with the uniform state) in every sector.
    Prepare,
    /// Oracle reflection followed by the diffusion, on the not-found sector.
    Grover,
    /// Inverse of `Grover`: diffusion first, then the oracle reflection.
    GroverInverse,
    /// Move the good component of the not-found sector into found sector `j`.
    Check(usize),
    /// Phase -1 on the whole not-found sector.
    FlipNotFound,
}

/// Forward search, phase flip on the not-found sector, exact reverse.
pub fn program_for(schedule: &SearchSchedule) -> Vec<BranchOp> {
    let mut ops = vec![BranchOp::Prepare];
    for (j, &t) in schedule.stages.iter().enumerate() {
        ops.extend(std::iter::repeat(BranchOp::Grover).take(t as usize));
        ops.push(BranchOp::Check(j + 1));
    }
    ops.push(BranchOp::FlipNotFound);
    for (j, &t) in schedule.stages.iter().enumerate().rev() {
        ops.push(BranchOp::Check(j + 1));
        ops.extend(std::iter::repeat(BranchOp::GroverInverse).take(t as usize));
    }
    ops.push(BranchOp::Prepare);
    ops
}

