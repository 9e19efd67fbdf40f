//! Tabular regret bookkeeping: regret matching, regret-matching+,
//! instantaneous regrets and reach-weighted average-strategy accumulation.
//!
//! Tables are keyed by [`InfoSetKey`] and use implicit-zero initialization:
//! an absent key behaves as a zero vector of the right length.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use crate::game::{InfoSetKey, PlayerId};

/// Magic header of the versioned table checkpoint format.
pub const TABLE_MAGIC: &[u8; 5] = b"TCFR1";

/// Regret matching: probabilities proportional to positive regrets, uniform
/// when no regret is positive.
pub fn regret_matching(regrets: &[f64]) -> Vec<f64> {
    assert!(!regrets.is_empty(), "regret_matching on empty vector");
    debug_assert!(regrets.iter().all(|r| r.is_finite()));
    let positive_sum: f64 = regrets.iter().map(|&r| r.max(0.0)).sum();
    if positive_sum > 0.0 {
        regrets.iter().map(|&r| r.max(0.0) / positive_sum).collect()
    } else {
        vec![1.0 / regrets.len() as f64; regrets.len()]
    }
}

/// Instantaneous regrets: `r[a] = v[a] - sum_b strategy[b] * v[b]`.
pub fn instantaneous_regret(action_values: &[f64], strategy: &[f64]) -> Vec<f64> {
    assert_eq!(
        action_values.len(),
        strategy.len(),
        "action value / strategy length mismatch"
    );
    let expected: f64 = action_values
        .iter()
        .zip(strategy)
        .map(|(&v, &p)| p * v)
        .sum();
    action_values.iter().map(|&v| v - expected).collect()
}

/// Cumulative regrets per infoset under the regret-matching+ discipline:
/// every stored entry stays non-negative.
#[derive(Debug, Clone, Default)]
pub struct RegretTable {
    entries: HashMap<InfoSetKey, Vec<f64>>,
}

impl RegretTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cumulative regrets at `key`, an implicit zero vector when absent.
    pub fn get(&self, key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        match self.entries.get(key) {
            Some(v) => {
                assert_eq!(v.len(), num_actions, "action count mismatch at {key}");
                v.clone()
            }
            None => vec![0.0; num_actions],
        }
    }

    /// Current strategy at `key` by regret matching.
    pub fn strategy(&self, key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        match self.entries.get(key) {
            Some(v) => regret_matching(v),
            None => vec![1.0 / num_actions as f64; num_actions],
        }
    }

    /// Regret-matching+ accumulation: per action, new = max(old + instant, 0).
    pub fn accumulate_plus(&mut self, key: &InfoSetKey, instant: &[f64]) {
        let entry = self
            .entries
            .entry(key.clone())
            .or_insert_with(|| vec![0.0; instant.len()]);
        assert_eq!(entry.len(), instant.len(), "regret vector length mismatch");
        for (cur, &r) in entry.iter_mut().zip(instant) {
            *cur = (*cur + r).max(0.0);
            debug_assert!(*cur >= 0.0);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&InfoSetKey, &Vec<f64>)> {
        self.entries.iter()
    }

    /// Entries in canonical key order (for deterministic serialization).
    fn sorted_entries(&self) -> Vec<(&InfoSetKey, &Vec<f64>)> {
        let mut rows: Vec<_> = self.entries.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        rows
    }

    /// Serializes the table rows in canonical order (no header).
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write_rows(w, &self.sorted_entries())
    }

    /// Reads rows written by [`RegretTable::write_to`].
    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let mut table = RegretTable::new();
        for (key, vals) in read_rows(r)? {
            table.entries.insert(key, vals);
        }
        Ok(table)
    }
}

/// A fixed behavior strategy: probability vector per infoset.
#[derive(Debug, Clone, Default)]
pub struct StrategyTable {
    entries: HashMap<InfoSetKey, Vec<f64>>,
}

impl StrategyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: InfoSetKey, probs: Vec<f64>) {
        debug_assert!(probs.iter().all(|&p| p >= 0.0));
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        self.entries.insert(key, probs);
    }

    /// Stored distribution, or uniform when the key is absent.
    pub fn get(&self, key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        match self.entries.get(key) {
            Some(v) => {
                assert_eq!(v.len(), num_actions, "action count mismatch at {key}");
                v.clone()
            }
            None => vec![1.0 / num_actions as f64; num_actions],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&InfoSetKey, &Vec<f64>)> {
        self.entries.iter()
    }
}

/// Reach-weighted sums of per-iteration strategies. Normalizing a vector
/// yields the average strategy for that infoset.
#[derive(Debug, Clone, Default)]
pub struct AverageStrategyAccumulator {
    sums: HashMap<InfoSetKey, Vec<f64>>,
    iterations: u64,
}

impl AverageStrategyAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `weight * strategy` to the accumulated vector at `key`.
    pub fn accumulate(&mut self, key: &InfoSetKey, strategy: &[f64], weight: f64) {
        debug_assert!(weight >= 0.0);
        let entry = self
            .sums
            .entry(key.clone())
            .or_insert_with(|| vec![0.0; strategy.len()]);
        assert_eq!(entry.len(), strategy.len(), "strategy length mismatch");
        for (s, &p) in entry.iter_mut().zip(strategy) {
            *s += weight * p;
        }
    }

    pub fn bump_iteration(&mut self) {
        self.iterations += 1;
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// Normalized average strategy at `key`; uniform when the accumulated
    /// vector is all zero or the key is absent.
    pub fn average(&self, key: &InfoSetKey, num_actions: usize) -> Vec<f64> {
        match self.sums.get(key) {
            Some(v) => {
                let total: f64 = v.iter().sum();
                if total > 0.0 {
                    v.iter().map(|&s| s / total).collect()
                } else {
                    vec![1.0 / v.len() as f64; v.len()]
                }
            }
            None => vec![1.0 / num_actions as f64; num_actions],
        }
    }

    /// Snapshot of all averages as a fixed strategy table.
    pub fn to_strategy_table(&self) -> StrategyTable {
        let mut table = StrategyTable::new();
        for (key, v) in &self.sums {
            table.insert(key.clone(), self.average(key, v.len()));
        }
        table
    }

    fn sorted_entries(&self) -> Vec<(&InfoSetKey, &Vec<f64>)> {
        let mut rows: Vec<_> = self.sums.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        rows
    }

    /// Serializes the iteration count plus rows (no header).
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.iterations.to_le_bytes())?;
        write_rows(w, &self.sorted_entries())
    }

    /// Reads data written by [`AverageStrategyAccumulator::write_to`].
    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Self> {
        let mut n8 = [0u8; 8];
        r.read_exact(&mut n8)?;
        let mut acc = AverageStrategyAccumulator::new();
        acc.iterations = u64::from_le_bytes(n8);
        for (key, vals) in read_rows(r)? {
            acc.sums.insert(key, vals);
        }
        Ok(acc)
    }
}

fn player_tag(p: PlayerId) -> u8 {
    match p {
        PlayerId::Adversary => 0,
        PlayerId::Team => 1,
        PlayerId::Chance => 2,
    }
}

fn player_from_tag(t: u8) -> io::Result<PlayerId> {
    match t {
        0 => Ok(PlayerId::Adversary),
        1 => Ok(PlayerId::Team),
        2 => Ok(PlayerId::Chance),
        _ => Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("bad player tag {t}"),
        )),
    }
}

pub(crate) fn write_rows<W: Write>(
    w: &mut W,
    rows: &[(&InfoSetKey, &Vec<f64>)],
) -> io::Result<()> {
    w.write_all(&(rows.len() as u64).to_le_bytes())?;
    for (key, vals) in rows {
        w.write_all(&[player_tag(key.player)])?;
        w.write_all(&(key.bytes.len() as u32).to_le_bytes())?;
        w.write_all(&key.bytes)?;
        w.write_all(&(vals.len() as u32).to_le_bytes())?;
        for v in vals.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_rows<R: Read>(r: &mut R) -> io::Result<Vec<(InfoSetKey, Vec<f64>)>> {
    let mut n8 = [0u8; 8];
    r.read_exact(&mut n8)?;
    let n = u64::from_le_bytes(n8) as usize;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let player = player_from_tag(tag[0])?;
        let mut len4 = [0u8; 4];
        r.read_exact(&mut len4)?;
        let mut bytes = vec![0u8; u32::from_le_bytes(len4) as usize];
        r.read_exact(&mut bytes)?;
        r.read_exact(&mut len4)?;
        let mut vals = vec![0.0f64; u32::from_le_bytes(len4) as usize];
        let mut f8 = [0u8; 8];
        for v in vals.iter_mut() {
            r.read_exact(&mut f8)?;
            *v = f64::from_le_bytes(f8);
        }
        rows.push((InfoSetKey::new(player, bytes), vals));
    }
    Ok(rows)
}

/// Serializes regret and average-strategy tables to the little-endian
/// `TCFR1` checkpoint format. Row order is canonical, so equal tables
/// produce identical bytes.
pub fn write_tables<W: Write>(
    w: &mut W,
    regrets: &RegretTable,
    averages: &AverageStrategyAccumulator,
) -> io::Result<()> {
    w.write_all(TABLE_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    regrets.write_to(w)?;
    averages.write_to(w)
}

/// Reads a `TCFR1` checkpoint written by [`write_tables`].
pub fn read_tables<R: Read>(
    r: &mut R,
) -> io::Result<(RegretTable, AverageStrategyAccumulator)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != TABLE_MAGIC {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "bad table checkpoint magic",
        ));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != 1 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported table checkpoint version {version}"),
        ));
    }
    let regrets = RegretTable::read_from(r)?;
    let averages = AverageStrategyAccumulator::read_from(r)?;
    Ok((regrets, averages))
}
