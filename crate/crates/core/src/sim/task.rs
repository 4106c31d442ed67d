use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "otm")]
    OnTheMove,
    #[serde(rename = "stop")]
    StopAndManipulate,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::OnTheMove => "otm",
            Mode::StopAndManipulate => "stop",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "otm" | "on_the_move" => Ok(Mode::OnTheMove),
            "stop" | "stop_and_manipulate" => Ok(Mode::StopAndManipulate),
            other => Err(format!("unknown mode `{other}` (expected otm or stop)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Objects to move, in order, and where each goes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Slot indices.
    pub objects: Vec<usize>,
    /// Drop index per object.
    pub drops: Vec<usize>,
    pub mode: Mode,
}

pub const OBJECTS_PER_TRIAL: usize = 6;

impl TaskSpec {
    /// Seeded task: a partial Fisher–Yates shuffle picks `OBJECTS_PER_TRIAL`
    /// of `slot_count` slots in order, then drops alternate starting from a
    /// drawn drop.
    ///
    /// The generator is SplitMix64 with its state set to `seed`. Draw `i`
    /// (0-based) picks `j = i + next_u64() % (slot_count - i)` and swaps
    /// positions `i` and `j` of `[0, 1, …, slot_count - 1]`. The first drop
    /// is `next_u64() & 1`, taken after the six slot draws.
    pub fn random(seed: u64, slot_count: usize, mode: Mode) -> Self {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let mut slots: Vec<usize> = (0..slot_count).collect();
        let n = OBJECTS_PER_TRIAL.min(slot_count);
        for i in 0..n {
            let j = i + (rng.next_u64() % (slot_count - i) as u64) as usize;
            slots.swap(i, j);
        }
        let first = (rng.next_u64() & 1) as usize;
        TaskSpec { objects: slots[..n].to_vec(), drops: (0..n).map(|k| (first + k) % 2).collect(), mode }
    }

    pub fn is_valid(&self, slot_count: usize) -> bool {
        let mut seen = vec![false; slot_count];
        self.objects.len() == self.drops.len()
            && self.objects.iter().all(|&s| s < slot_count && !std::mem::replace(&mut seen[s], true))
            && self.drops.iter().all(|&d| d < 2)
            && self.drops.windows(2).all(|w| w[0] != w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_task_is_valid_and_deterministic() {
        for seed in 0..200 {
            let t = TaskSpec::random(seed, 12, Mode::OnTheMove);
            assert_eq!(t.objects.len(), 6);
            assert!(t.is_valid(12));
            assert_eq!(t, TaskSpec::random(seed, 12, Mode::OnTheMove));
        }
        assert_ne!(TaskSpec::random(1, 12, Mode::OnTheMove).objects, TaskSpec::random(2, 12, Mode::OnTheMove).objects);
    }

    #[test]
    fn documented_draw_sequence() {
        // Independent replay of the SplitMix64 recurrence.
        fn splitmix(state: &mut u64) -> u64 {
            *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = *state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        }
        let seed = 7;
        let mut state = seed;
        let mut slots: Vec<usize> = (0..12).collect();
        for i in 0..6 {
            let j = i + (splitmix(&mut state) % (12 - i) as u64) as usize;
            slots.swap(i, j);
        }
        let first = (splitmix(&mut state) & 1) as usize;
        let t = TaskSpec::random(seed, 12, Mode::StopAndManipulate);
        assert_eq!(t.objects, slots[..6]);
        assert_eq!(t.drops[0], first);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("otm".parse::<Mode>().unwrap(), Mode::OnTheMove);
        assert_eq!("stop".parse::<Mode>().unwrap(), Mode::StopAndManipulate);
        assert!("walk".parse::<Mode>().is_err());
    }
}
