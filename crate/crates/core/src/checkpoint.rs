//! Versioned binary checkpoints: `TCFR1` for tabular solves (little-endian
//! table payload) and `TNET1` for neural solves (JSON spec header plus
//! little-endian weight payload).

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::neural::{
    AdversaryRegretNet, JointNet, NetSpec, Network, RegretNet, StrategyNet,
};
use crate::regret::{AverageStrategyAccumulator, RegretTable, TABLE_MAGIC};
use crate::solver::{NeuralNets, SolveMode};
use crate::tabular::{CfrTables, TeamMode};

pub const NET_MAGIC: &[u8; 5] = b"TNET1";

/// Run provenance embedded in every checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_hash: String,
    pub iteration: u64,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Writes a full tabular solve state under one `TCFR1` header.
pub fn save_tabular<W: Write>(
    w: &mut W,
    tables: &CfrTables,
    meta: &CheckpointMeta,
) -> io::Result<()> {
    w.write_all(TABLE_MAGIC)?;
    w.write_all(&2u32.to_le_bytes())?;
    let header = serde_json::to_vec(meta).map_err(|e| invalid(e.to_string()))?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&[match tables.team_mode {
        TeamMode::Joint => 0u8,
        TeamMode::PerAgent => 1u8,
    }])?;
    w.write_all(&(tables.agent_regrets.len() as u32).to_le_bytes())?;
    tables.adversary_regrets.write_to(w)?;
    tables.adversary_avg.write_to(w)?;
    tables.team_regrets.write_to(w)?;
    tables.team_avg.write_to(w)?;
    for (regrets, avg) in tables.agent_regrets.iter().zip(&tables.agent_avg) {
        regrets.write_to(w)?;
        avg.write_to(w)?;
    }
    Ok(())
}

/// Reads a checkpoint written by [`save_tabular`].
pub fn load_tabular<R: Read>(r: &mut R) -> io::Result<(CfrTables, CheckpointMeta)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != TABLE_MAGIC {
        return Err(invalid("bad tabular checkpoint magic"));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    if u32::from_le_bytes(v4) != 2 {
        return Err(invalid("unsupported tabular checkpoint version"));
    }
    r.read_exact(&mut v4)?;
    let mut header = vec![0u8; u32::from_le_bytes(v4) as usize];
    r.read_exact(&mut header)?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&header).map_err(|e| invalid(e.to_string()))?;
    let mut mode_tag = [0u8; 1];
    r.read_exact(&mut mode_tag)?;
    let team_mode = match mode_tag[0] {
        0 => TeamMode::Joint,
        1 => TeamMode::PerAgent,
        t => return Err(invalid(format!("bad team mode tag {t}"))),
    };
    r.read_exact(&mut v4)?;
    let num_agents = u32::from_le_bytes(v4) as usize;
    let mut tables = CfrTables::new(team_mode, num_agents);
    tables.adversary_regrets = RegretTable::read_from(r)?;
    tables.adversary_avg = AverageStrategyAccumulator::read_from(r)?;
    tables.team_regrets = RegretTable::read_from(r)?;
    tables.team_avg = AverageStrategyAccumulator::read_from(r)?;
    for agent in 0..num_agents {
        tables.agent_regrets[agent] = RegretTable::read_from(r)?;
        tables.agent_avg[agent] = AverageStrategyAccumulator::read_from(r)?;
    }
    Ok((tables, meta))
}

#[derive(Debug, Serialize, Deserialize)]
struct NetEntry {
    name: String,
    spec: NetSpec,
    params: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetHeader {
    meta: CheckpointMeta,
    mode: SolveMode,
    num_agents: usize,
    nets: Vec<NetEntry>,
}

fn net_list(nets: &NeuralNets) -> Vec<(&'static str, &Network)> {
    let mut out: Vec<(&'static str, &Network)> = Vec::new();
    if let Some(n) = &nets.team_mix {
        out.push(("team_mix", n.network()));
    }
    if let Some(n) = &nets.team_joint {
        out.push(("team_joint", n.network()));
    }
    if let Some(n) = &nets.team_strategy {
        out.push(("team_strategy", n.network()));
    }
    if let Some(n) = &nets.team_strategy_joint {
        out.push(("team_strategy_joint", n.network()));
    }
    out.push(("adversary_regret", nets.adversary_regret.network()));
    out.push(("adversary_strategy", nets.adversary_strategy.network()));
    out
}

/// Writes a `TNET1` checkpoint: magic, version, JSON header (meta, mode,
/// per-net specs), then each net's parameters as little-endian doubles.
pub fn save_neural<W: Write>(
    w: &mut W,
    nets: &NeuralNets,
    num_agents: usize,
    meta: &CheckpointMeta,
) -> io::Result<()> {
    let list = net_list(nets);
    let header = NetHeader {
        meta: meta.clone(),
        mode: nets.mode,
        num_agents,
        nets: list
            .iter()
            .map(|(name, net)| NetEntry {
                name: (*name).to_string(),
                spec: net.spec().clone(),
                params: net.param_count() as u64,
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| invalid(e.to_string()))?;
    w.write_all(NET_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for (_, net) in list {
        for p in net.export_params() {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a checkpoint written by [`save_neural`].
pub fn load_neural<R: Read>(r: &mut R) -> io::Result<(NeuralNets, CheckpointMeta)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != NET_MAGIC {
        return Err(invalid("bad network checkpoint magic"));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    if u32::from_le_bytes(v4) != 1 {
        return Err(invalid("unsupported network checkpoint version"));
    }
    r.read_exact(&mut v4)?;
    let mut header = vec![0u8; u32::from_le_bytes(v4) as usize];
    r.read_exact(&mut header)?;
    let header: NetHeader =
        serde_json::from_slice(&header).map_err(|e| invalid(e.to_string()))?;

    let mut team_mix = None;
    let mut team_joint = None;
    let mut team_strategy = None;
    let mut team_strategy_joint = None;
    let mut adversary_regret = None;
    let mut adversary_strategy = None;
    for entry in &header.nets {
        let mut net = Network::new(entry.spec.clone());
        if net.param_count() as u64 != entry.params {
            return Err(invalid(format!(
                "net {} parameter count mismatch",
                entry.name
            )));
        }
        let mut params = vec![0.0f64; entry.params as usize];
        let mut f8 = [0u8; 8];
        for p in params.iter_mut() {
            r.read_exact(&mut f8)?;
            *p = f64::from_le_bytes(f8);
        }
        net.import_params(&params);
        match entry.name.as_str() {
            "team_mix" => team_mix = Some(RegretNet::new(net)),
            "team_joint" => team_joint = Some(JointNet::new(net, header.num_agents)),
            "team_strategy" => team_strategy = Some(StrategyNet::new(net)),
            "team_strategy_joint" => {
                team_strategy_joint = Some(JointNet::new(net, header.num_agents))
            }
            "adversary_regret" => adversary_regret = Some(AdversaryRegretNet::new(net)),
            "adversary_strategy" => adversary_strategy = Some(StrategyNet::new(net)),
            name => return Err(invalid(format!("unknown net entry {name}"))),
        }
    }
    let nets = NeuralNets {
        mode: header.mode,
        team_mix,
        team_joint,
        team_strategy,
        team_strategy_joint,
        adversary_regret: adversary_regret.ok_or_else(|| invalid("missing adversary_regret"))?,
        adversary_strategy: adversary_strategy
            .ok_or_else(|| invalid("missing adversary_strategy"))?,
    };
    Ok((nets, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Game, GameState};
    use crate::games::{TinyMatrix, TinyMatrixSpec};
    use crate::solver::NetConfig;
    use crate::tabular::Policy;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            seed: 99,
            config_hash: "deadbeef".into(),
            iteration: 7,
        }
    }

    #[test]
    fn tabular_checkpoint_round_trip() {
        let game = TinyMatrix::new(TinyMatrixSpec::matching_pennies()).unwrap();
        let mut tables = CfrTables::new(TeamMode::Joint, 1);
        for t in 1..=25 {
            crate::tabular::cfr_iteration(&game, &mut tables, t);
        }
        let mut buf = Vec::new();
        save_tabular(&mut buf, &tables, &meta()).unwrap();
        let (loaded, m) = load_tabular(&mut buf.as_slice()).unwrap();
        assert_eq!(m, meta());
        let key = game.initial_state().infoset_key();
        assert_eq!(
            tables.team_avg.average(&key, 2),
            loaded.team_avg.average(&key, 2)
        );
        assert_eq!(
            tables.adversary_regrets.get(
                &game
                    .initial_state()
                    .apply(&crate::game::Move::joint(&[0]))
                    .infoset_key(),
                2
            ),
            loaded.adversary_regrets.get(
                &game
                    .initial_state()
                    .apply(&crate::game::Move::joint(&[0]))
                    .infoset_key(),
                2
            )
        );
    }

    #[test]
    fn neural_checkpoint_round_trip_preserves_policies() {
        let game = TinyMatrix::new(
            TinyMatrixSpec::new(vec![2, 2], 2, vec![0.25; 8]).unwrap(),
        )
        .unwrap();
        let nets = NeuralNets::initialize(
            &game,
            SolveMode::Mix,
            &NetConfig {
                hidden: vec![16, 16],
            },
            123,
        );
        let mut buf = Vec::new();
        save_neural(&mut buf, &nets, game.num_agents(), &meta()).unwrap();
        assert_eq!(&buf[..5], NET_MAGIC);
        let (loaded, m) = load_neural(&mut buf.as_slice()).unwrap();
        assert_eq!(m.iteration, 7);
        let key = game.initial_state().infoset_key();
        let a = nets
            .current_policy(&game)
            .team_strategy(&key, &[2, 2])
            .to_joint_vec(&[2, 2]);
        let b = loaded
            .current_policy(&game)
            .team_strategy(&key, &[2, 2])
            .to_joint_vec(&[2, 2]);
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let buf = b"XXXXX".to_vec();
        assert!(load_neural(&mut buf.as_slice()).is_err());
        assert!(load_tabular(&mut buf.as_slice()).is_err());
    }
}
