//! Encoder plus score head, sharing one parameter store.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::ProductRecord;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::kernel::{Matrix, ParamStore, Rng, Tape, Var};
use crate::regressor::{Regressor, RegressorSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub regressor: RegressorSpec,
    /// Seed of the weight initialization stream.
    pub init_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub regressor: Regressor,
    pub store: ParamStore,
}

impl Model {
    /// Builds a freshly initialized model. Weights are uniform in
    /// ±1/√fan_in, biases zero.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(config.init_seed);
        let encoder = Encoder::new(&mut store, config.encoder.clone(), &mut rng)?;
        let regressor = Regressor::new(
            &mut store,
            &config.regressor,
            config.encoder.z_dim(),
            &mut rng,
        )?;
        Ok(Self {
            config,
            encoder,
            regressor,
            store,
        })
    }

    /// Rebuilds a model from a config and a full set of named weights.
    pub fn from_weights<'a>(
        config: ModelConfig,
        weights: impl IntoIterator<Item = (&'a str, &'a Matrix)>,
    ) -> Result<Self> {
        let mut model = Self::new(config)?;
        model.store.load_values(weights)?;
        Ok(model)
    }

    fn check_dims(&self, product: &ProductRecord) -> Result<()> {
        if product.reviews.is_empty() {
            return Err(Error::Empty("product reviews"));
        }
        Ok(())
    }

    /// Records the forward pass for one product; returns the `|R| × 1`
    /// score node.
    pub fn scores_tape(&self, tape: &mut Tape, product: &ProductRecord) -> Result<Var> {
        self.check_dims(product)?;
        let z = self.encoder.encode(tape, &self.store, product)?;
        self.regressor.forward(tape, &self.store, z)
    }

    pub fn scores(&self, product: &ProductRecord) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.scores_tape(&mut tape, product)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Leaf-reach probabilities of the first tree for every review
    /// (`|R| × |ℒ|`), or `None` for a fully connected head.
    pub fn routing(&self, product: &ProductRecord) -> Result<Option<Matrix>> {
        let Some(tree) = self.regressor.first_tree() else {
            return Ok(None);
        };
        self.check_dims(product)?;
        let mut tape = Tape::new();
        let z = self.encoder.encode(&mut tape, &self.store, product)?;
        let mu = tree.route_tape(&mut tape, &self.store, z)?;
        Ok(Some(tape.value(mu).clone()))
    }
}
