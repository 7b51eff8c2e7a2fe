use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::domain::Condition;
use crate::seed::SeedTree;

/// Permuted-block randomization over the seven conditions: each block of
/// seven draws is a fresh shuffle of all cells.
#[derive(Debug, Clone)]
pub struct BlockAssigner {
    rng: ChaCha8Rng,
    block: Vec<Condition>,
    draws: u64,
}

impl BlockAssigner {
    pub fn new(seed: u64) -> Self {
        BlockAssigner { rng: SeedTree::new(seed).child("assignment").rng(), block: Vec::new(), draws: 0 }
    }

    /// An assigner that has already made `draws` draws, for resuming after
    /// a restart.
    pub fn resume(seed: u64, draws: u64) -> Self {
        let mut a = Self::new(seed);
        for _ in 0..draws {
            a.next_condition();
        }
        a
    }

    pub fn next_condition(&mut self) -> Condition {
        if self.block.is_empty() {
            let mut block = Condition::ALL.to_vec();
            block.shuffle(&mut self.rng);
            block.reverse();
            self.block = block;
        }
        self.draws += 1;
        self.block.pop().expect("block refilled above")
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl Iterator for BlockAssigner {
    type Item = Condition;

    fn next(&mut self) -> Option<Condition> {
        Some(self.next_condition())
    }
}

/// Assigner shared across request handlers; draws are serialized.
#[derive(Debug)]
pub struct SharedAssigner(Mutex<BlockAssigner>);

impl SharedAssigner {
    pub fn new(assigner: BlockAssigner) -> Self {
        SharedAssigner(Mutex::new(assigner))
    }

    pub fn draw(&self) -> Condition {
        self.0.lock().expect("assigner lock").next_condition()
    }

    pub fn draws(&self) -> u64 {
        self.0.lock().expect("assigner lock").draws()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_block_is_a_permutation() {
        let draws: Vec<Condition> = BlockAssigner::new(1).take(21).collect();
        for block in draws.chunks(7) {
            let mut idx: Vec<usize> = block.iter().map(Condition::index).collect();
            idx.sort_unstable();
            assert_eq!(idx, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn deterministic_and_resumable() {
        let a: Vec<Condition> = BlockAssigner::new(42).take(30).collect();
        assert_eq!(a, BlockAssigner::new(42).take(30).collect::<Vec<_>>());
        let resumed: Vec<Condition> = BlockAssigner::resume(42, 12).take(18).collect();
        assert_eq!(resumed, a[12..]);
        assert_ne!(a, BlockAssigner::new(43).take(30).collect::<Vec<_>>());
    }
}
