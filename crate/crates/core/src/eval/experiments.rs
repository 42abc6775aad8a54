//! TPDN hyperparameter studies against one trained model.

use serde::{Deserialize, Serialize};

use super::store::{ExperimentStore, FitOutcome, FitSettings, TrainedModel};
use crate::error::{Error, Result};
use crate::roles::{RoleMode, RoleScheme};
use crate::sequences::DatasetConfig;
use crate::tpdn::{BindingOp, FitData, TpdnConfig};
use crate::training::TrainConfig;

/// A trained model with its cached encodings, ready for repeated fits.
pub struct FitContext<'a> {
    pub store: &'a ExperimentStore,
    pub trained: &'a TrainedModel,
    pub encodings: &'a FitData<f64>,
    pub data: &'a DatasetConfig,
    /// The seq2seq training settings, used only to locate the cache.
    pub train: &'a TrainConfig,
    pub tpdn_train: TrainConfig,
    pub role_mode: RoleMode,
}

impl FitContext<'_> {
    pub fn fit(&self, scheme: RoleScheme, tpdn: TpdnConfig) -> Result<FitOutcome> {
        let settings = FitSettings {
            scheme,
            tpdn,
            train: self.tpdn_train.clone(),
            role_mode: self.role_mode,
            normalized_mse: false,
        };
        self.store.fit(self.trained, self.encodings, self.data, self.train, &settings)
    }

    fn output_dim(&self) -> usize {
        self.encodings.output_dim()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimCell {
    pub filler_dim: usize,
    pub role_dim: usize,
    pub subst_acc: f64,
    pub test_mse: f64,
}

/// Substitution accuracy over a filler-by-role dimension grid, with the final
/// linear layer.
pub fn sweep_embedding_dims(ctx: &FitContext, scheme: RoleScheme, filler_dims: &[usize], role_dims: &[usize]) -> Result<Vec<DimCell>> {
    let mut out = Vec::new();
    for &f in filler_dims {
        for &r in role_dims {
            let config = TpdnConfig { filler_dim: f, role_dim: r, output_dim: ctx.output_dim(), ..TpdnConfig::default() };
            let outcome = ctx.fit(scheme, config)?;
            out.push(DimCell { filler_dim: f, role_dim: r, subst_acc: outcome.substitution.exact, test_mse: outcome.test_mse });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub filler_dim: usize,
    pub role_dim: usize,
    pub with_linear: f64,
    pub without_linear: f64,
}

/// Paired fits with and without the final linear map. Every pair must bind
/// to exactly the encoding width, since the unmapped TPR is the encoding.
pub fn ablate_final_linear(ctx: &FitContext, scheme: RoleScheme, dims: &[(usize, usize)]) -> Result<Vec<AblationRow>> {
    let target = ctx.output_dim();
    if let Some(&(f, r)) = dims.iter().find(|(f, r)| f * r != target) {
        return Err(Error::IncompatibleDims { filler: f, role: r, target });
    }
    let mut out = Vec::new();
    for &(f, r) in dims {
        let base = TpdnConfig { filler_dim: f, role_dim: r, output_dim: target, ..TpdnConfig::default() };
        let with = ctx.fit(scheme, base)?;
        let without = ctx.fit(scheme, TpdnConfig { use_final_linear: false, ..base })?;
        out.push(AblationRow {
            filler_dim: f,
            role_dim: r,
            with_linear: with.substitution.exact,
            without_linear: without.substitution.exact,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BindingOpRow {
    pub binding: BindingOp,
    pub dim: usize,
    pub scheme: RoleScheme,
    pub subst_acc: f64,
    pub param_count: usize,
}

/// Fits every binding operation at each shared filler/role width.
pub fn compare_binding_ops(ctx: &FitContext, ops: &[BindingOp], dims: &[usize], schemes: &[RoleScheme]) -> Result<Vec<BindingOpRow>> {
    let mut out = Vec::new();
    for &binding in ops {
        for &dim in dims {
            let config = TpdnConfig { filler_dim: dim, role_dim: dim, binding, output_dim: ctx.output_dim(), use_final_linear: true };
            config.validate()?;
            for &scheme in schemes {
                let outcome = ctx.fit(scheme, config)?;
                out.push(BindingOpRow { binding, dim, scheme, subst_acc: outcome.substitution.exact, param_count: outcome.param_count });
            }
        }
    }
    Ok(out)
}
