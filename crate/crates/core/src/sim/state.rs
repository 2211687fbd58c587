use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crom::MatchPlan;
use crate::data::Shard;
use crate::error::{Error, Result};
use crate::model::{init_params, ArchSpec, SplitModelParams};
use crate::system::UserProfile;

/// Everything that evolves from round to round.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub arch: ArchSpec,
    /// Layers `1..=s` per user, indexed by user id.
    pub clients: Vec<SplitModelParams>,
    /// Layers `s+1..=n`, shared by all users.
    pub server: SplitModelParams,
    pub profiles: Vec<UserProfile>,
    pub shards: Vec<Shard>,
    /// Rounds completed so far.
    pub round: usize,
    /// Channel jitter stream; untouched while jitter is disabled.
    pub jitter_rng: ChaCha8Rng,
    pub plan: Option<MatchPlan>,
    /// Flattened client-side gradient of each user's last round.
    pub last_gradients: Vec<Option<Vec<f64>>>,
}

impl SystemState {
    /// Every client starts from the same initial client part.
    pub fn new(
        arch: ArchSpec,
        init_seed: u64,
        jitter_seed: u64,
        profiles: Vec<UserProfile>,
        shards: Vec<Shard>,
    ) -> Result<Self> {
        let full = init_params(&arch, init_seed)?;
        let (client, server) = full.split_at(arch.split_layer)?;
        Self::from_parts(arch, client, server, profiles, shards, jitter_seed)
    }

    pub fn from_parts(
        arch: ArchSpec,
        client: SplitModelParams,
        server: SplitModelParams,
        profiles: Vec<UserProfile>,
        shards: Vec<Shard>,
        jitter_seed: u64,
    ) -> Result<Self> {
        let state = Self {
            clients: vec![client; profiles.len()],
            server,
            last_gradients: vec![None; profiles.len()],
            arch,
            profiles,
            shards,
            round: 0,
            jitter_rng: ChaCha8Rng::seed_from_u64(jitter_seed),
            plan: None,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn num_users(&self) -> usize {
        self.profiles.len()
    }

    /// Samples each user holds; shards all have this length.
    pub fn per_user(&self) -> usize {
        self.shards.first().map_or(0, |s| s.len())
    }

    pub fn rounds_per_epoch(&self, batch_size: usize) -> usize {
        self.per_user().div_ceil(batch_size.max(1))
    }

    /// Shard rows used by `user` in the current round.
    pub fn batch_indices(&self, user: usize, batch_size: usize) -> &[usize] {
        let shard = &self.shards[user].indices;
        let k = self.round % self.rounds_per_epoch(batch_size).max(1);
        let start = (k * batch_size).min(shard.len());
        let end = (start + batch_size).min(shard.len());
        &shard[start..end]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.profiles.len();
        if n == 0 {
            return Err(Error::config("at least one user is required"));
        }
        if self.shards.len() != n || self.clients.len() != n || self.last_gradients.len() != n {
            return Err(Error::contract(format!(
                "{n} profiles but {} shards and {} client models",
                self.shards.len(),
                self.clients.len()
            )));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            if p.user_id != i {
                return Err(Error::config(format!("profile {i} has user_id {}", p.user_id)));
            }
            p.validate()?;
        }
        let per_user = self.per_user();
        if per_user == 0 || self.shards.iter().any(|s| s.len() != per_user) {
            return Err(Error::contract("shards must be non-empty and of equal size"));
        }
        self.arch.validate()?;
        let s = self.arch.split_layer;
        if let Some(u) = self
            .clients
            .iter()
            .position(|c| c.first_layer() != 1 || c.last_layer() != s || !c.congruent(&self.clients[0]))
        {
            return Err(Error::contract(format!("client model {u} does not hold layers 1..={s}")));
        }
        if self.server.first_layer() != s + 1 || self.server.last_layer() != self.arch.total_layers() {
            return Err(Error::contract("server model does not hold layers s+1..=n"));
        }
        Ok(())
    }
}
