use std::sync::Arc;

use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;

use crate::error::{Error, Result};

/// Draws negative examples from the powered unigram distribution.
///
/// The alias table is shared; each sampler owns its generator, so parallel
/// workers get independent streams via [`NoiseSampler::fork`].
#[derive(Clone)]
pub struct NoiseSampler {
    table: Arc<WeightedAliasIndex<f64>>,
    probs: Arc<[f64]>,
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    pub fn new(noise_probs: &[f64], seed: u64) -> Result<Self> {
        let table = WeightedAliasIndex::new(noise_probs.to_vec()).map_err(|_| Error::ExhaustedVocabulary)?;
        Ok(NoiseSampler {
            table: Arc::new(table),
            probs: noise_probs.into(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// A sampler over the same table with an independent stream.
    pub fn fork(&self, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NoiseSampler {
            table: Arc::clone(&self.table),
            probs: Arc::clone(&self.probs),
            rng,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    #[inline]
    pub fn draw(&mut self) -> usize {
        self.table.sample(&mut self.rng)
    }

    /// Fills `out` with `k` i.i.d. draws, rejecting any index in `exclude`.
    pub fn sample_negatives_into(&mut self, k: usize, exclude: &[usize], out: &mut Vec<usize>) -> Result<()> {
        out.clear();
        if k == 0 {
            return Ok(());
        }
        let mut excluded_mass = 0.0;
        for (i, &e) in exclude.iter().enumerate() {
            if !exclude[..i].contains(&e) {
                excluded_mass += self.probs.get(e).copied().unwrap_or(0.0);
            }
        }
        if 1.0 - excluded_mass <= 1e-12 {
            return Err(Error::ExhaustedVocabulary);
        }
        while out.len() < k {
            let w = self.draw();
            if !exclude.contains(&w) {
                out.push(w);
            }
        }
        Ok(())
    }

    pub fn sample_negatives(&mut self, k: usize, exclude: &[usize]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(k);
        self.sample_negatives_into(k, exclude, &mut out)?;
        Ok(out)
    }
}
