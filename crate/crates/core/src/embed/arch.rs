use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkit::{Activation, BoundNet, NetParams, Tape, Var};
use crate::sigkit::{FeatureKind, FeatureSpec};

/// Function class searched for an embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedVariant {
    /// A network of `(t, x)` returns `ell` coefficient vectors; the prediction
    /// is their inner product with the path features.
    LinearFunctional,
    /// A network of `(t, x, features)` returns the prediction directly.
    DirectNet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedArch {
    pub variant: EmbedVariant,
    pub feature: FeatureKind,
    pub depth: usize,
    pub state_dim: usize,
    pub ell: usize,
    pub feat_dim: usize,
    pub net: NetParams,
}

impl EmbedArch {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        variant: EmbedVariant,
        feature: FeatureKind,
        depth: usize,
        q: usize,
        state_dim: usize,
        ell: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let layers: Vec<(usize, Activation)> = hidden.iter().map(|&w| (w, activation)).collect();
        Self::with_layers(variant, FeatureSpec { kind: feature, depth }, q, state_dim, ell, &layers, rng)
    }

    pub fn with_layers<R: Rng + ?Sized>(
        variant: EmbedVariant,
        features: FeatureSpec,
        q: usize,
        state_dim: usize,
        ell: usize,
        hidden: &[(usize, Activation)],
        rng: &mut R,
    ) -> Self {
        let feat_dim = features.dim(q);
        let (input, output) = match variant {
            EmbedVariant::LinearFunctional => (1 + state_dim, ell * feat_dim),
            EmbedVariant::DirectNet => (1 + state_dim + feat_dim, ell),
        };
        Self {
            variant,
            feature: features.kind,
            depth: features.depth,
            state_dim,
            ell,
            feat_dim,
            net: NetParams::glorot_layers(input, hidden, output, rng),
        }
    }

    pub fn net_input_dim(&self) -> usize {
        match self.variant {
            EmbedVariant::LinearFunctional => 1 + self.state_dim,
            EmbedVariant::DirectNet => 1 + self.state_dim + self.feat_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        let expected_out = match self.variant {
            EmbedVariant::LinearFunctional => self.ell * self.feat_dim,
            EmbedVariant::DirectNet => self.ell,
        };
        if self.net.input_dim() != self.net_input_dim() || self.net.output_dim() != expected_out {
            return Err(Error::config(format!(
                "embedding network maps {} -> {}, architecture needs {} -> {}",
                self.net.input_dim(),
                self.net.output_dim(),
                self.net_input_dim(),
                expected_out
            )));
        }
        Ok(())
    }

    /// Prediction on the tape from `time: [B x 1]`, `state: [B x dx]`, `feats: [B x F]`.
    pub fn predict(&self, tape: &mut Tape, net: &BoundNet, time: Var, state: Var, feats: Var) -> Result<Var> {
        if tape.cols(feats) != self.feat_dim {
            return Err(Error::usage(format!(
                "embedding expects {} features, got {}",
                self.feat_dim,
                tape.cols(feats)
            )));
        }
        match self.variant {
            EmbedVariant::LinearFunctional => {
                let input = tape.concat(&[time, state])?;
                let coeffs = net.forward(tape, input)?;
                tape.row_matvec(coeffs, feats)
            }
            EmbedVariant::DirectNet => {
                let input = tape.concat(&[time, state, feats])?;
                net.forward(tape, input)
            }
        }
    }

    /// Tape-free prediction for one point.
    pub fn predict_row(&self, t: f64, state: &[f64], feats: &[f64]) -> Result<Vec<f64>> {
        if feats.len() != self.feat_dim || state.len() != self.state_dim {
            return Err(Error::usage(format!(
                "embedding expects state {} / features {}, got {} / {}",
                self.state_dim,
                self.feat_dim,
                state.len(),
                feats.len()
            )));
        }
        let mut input = Vec::with_capacity(self.net_input_dim());
        input.push(t);
        input.extend_from_slice(state);
        if self.variant == EmbedVariant::DirectNet {
            input.extend_from_slice(feats);
        }
        let out = self.net.eval_row(&input);
        Ok(match self.variant {
            EmbedVariant::DirectNet => out,
            EmbedVariant::LinearFunctional => out
                .chunks(self.feat_dim)
                .map(|c| c.iter().zip(feats).map(|(a, b)| a * b).sum())
                .collect(),
        })
    }
}
