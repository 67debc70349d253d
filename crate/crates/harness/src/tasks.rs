//! Built-in training tasks. Each task draws `[batch, seq]` batches from a
//! caller-owned RNG so runs are reproducible from the seed alone.

use std::collections::BTreeSet;

use blockwise::{Batch, RngState, IGNORE_INDEX};

use crate::config::TaskConfig;
use crate::error::{HarnessError, Result};

const BUILTIN_CORPUS: &str = "the river bends twice before it reaches the old mill. \
in spring the water runs high and fast, carrying branches and leaves down from the hills. \
by late summer it is slow and clear, and you can count the stones on the bottom. \
the miller kept a small boat tied under the willow, and on quiet evenings he would row \
out to the middle and sit with the oars drawn in, listening to the wheel turn. \
nobody grinds grain there any more, but the wheel still turns when the water is high. \
children come to throw sticks from the bridge and race them to the weir. \
the winner is always the stick that finds the current first.";

#[derive(Debug, Clone)]
pub enum Task {
    Copy { vocab: usize },
    ModAdd { modulus: usize },
    CharLm { ids: Vec<usize>, alphabet: Vec<char> },
}

impl Task {
    pub fn from_config(cfg: &TaskConfig, vocab_size: usize, seq_len: usize) -> Result<Self> {
        match cfg {
            TaskConfig::SyntheticCopy => {
                if vocab_size < 2 {
                    return Err(HarnessError::Config("copy task needs vocab_size >= 2".into()));
                }
                Ok(Task::Copy { vocab: vocab_size })
            }
            TaskConfig::SyntheticModAdd { modulus } => {
                if *modulus < 2 || modulus + 1 > vocab_size {
                    return Err(HarnessError::Config(format!(
                        "mod-add with modulus {modulus} needs 2 <= modulus and vocab_size >= modulus + 1 (got {vocab_size})"
                    )));
                }
                if seq_len < 4 {
                    return Err(HarnessError::Config("mod-add needs seq_len >= 4".into()));
                }
                Ok(Task::ModAdd { modulus: *modulus })
            }
            TaskConfig::CharLm { path } => {
                let text = match path {
                    Some(p) => std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?,
                    None => BUILTIN_CORPUS.to_string(),
                };
                let alphabet: Vec<char> = text.chars().collect::<BTreeSet<_>>().into_iter().collect();
                if alphabet.len() > vocab_size {
                    return Err(HarnessError::Config(format!(
                        "text uses {} distinct characters but vocab_size is {vocab_size}",
                        alphabet.len()
                    )));
                }
                let ids: Vec<usize> = text
                    .chars()
                    .map(|c| alphabet.binary_search(&c).expect("char in alphabet"))
                    .collect();
                if ids.len() <= seq_len {
                    return Err(HarnessError::Config(format!(
                        "text has {} characters; need more than seq_len = {seq_len}",
                        ids.len()
                    )));
                }
                Ok(Task::CharLm { ids, alphabet })
            }
        }
    }

    pub fn sample(&self, rng: &mut RngState, batch_size: usize, seq_len: usize) -> Batch {
        let mut tokens = Vec::with_capacity(batch_size * seq_len);
        let mut targets = Vec::with_capacity(batch_size * seq_len);
        for _ in 0..batch_size {
            let (t, y) = match self {
                Task::Copy { vocab } => copy_sequence(*vocab, seq_len, rng),
                Task::ModAdd { modulus } => mod_add_sequence(*modulus, seq_len, rng),
                Task::CharLm { ids, .. } => {
                    let start = rng.below(ids.len() - seq_len);
                    let window = &ids[start..=start + seq_len];
                    (window[..seq_len].to_vec(), window[1..].to_vec())
                }
            };
            tokens.extend(t);
            targets.extend(y);
        }
        Batch::new(batch_size, seq_len, tokens, targets).expect("task batches are well-formed")
    }
}

/// `x_1..x_L x_1..x_L` with `L = seq_len / 2`. Only predictions of the copied
/// half are scored, so a perfect model reaches zero loss.
fn copy_sequence(vocab: usize, seq_len: usize, rng: &mut RngState) -> (Vec<usize>, Vec<usize>) {
    let half = seq_len / 2;
    let prefix: Vec<usize> = (0..half).map(|_| rng.below(vocab)).collect();
    let tokens: Vec<usize> = (0..seq_len).map(|i| prefix[i % half]).collect();
    let targets = (0..seq_len)
        .map(|i| {
            if i + 1 >= half && i + 1 < seq_len {
                tokens[i + 1]
            } else {
                IGNORE_INDEX
            }
        })
        .collect();
    (tokens, targets)
}

/// Packed `a b = c` quadruples; the `=` position is scored against `c`.
fn mod_add_sequence(modulus: usize, seq_len: usize, rng: &mut RngState) -> (Vec<usize>, Vec<usize>) {
    let equals = modulus;
    let mut tokens = Vec::with_capacity(seq_len);
    let mut targets = Vec::with_capacity(seq_len);
    while tokens.len() + 4 <= seq_len {
        let a = rng.below(modulus);
        let b = rng.below(modulus);
        let c = (a + b) % modulus;
        tokens.extend([a, b, equals, c]);
        targets.extend([IGNORE_INDEX, IGNORE_INDEX, c, IGNORE_INDEX]);
    }
    while tokens.len() < seq_len {
        tokens.push(equals);
        targets.push(IGNORE_INDEX);
    }
    (tokens, targets)
}
