use super::{Reducer, ReducerModel, ReducerSpec};
use crate::error::{Error, Result};
use crate::model::EmbeddingMatrix;
use crate::wire::bytes::{Reader, Writer};

/// Placeholder reducer for externally computed layouts. Fitting goes through
/// [`super::import_layout`] instead.
#[derive(Debug, Clone, Copy, Default)]
pub struct ImportReducer;

#[derive(Debug, Clone, Copy)]
pub struct ImportModel {
    pub out_dim: usize,
}

impl Reducer for ImportReducer {
    fn fit(&self, _: &EmbeddingMatrix, _: &ReducerSpec) -> Result<(Vec<f32>, Box<dyn ReducerModel>)> {
        Err(Error::Unsupported(
            "imported layouts are uploaded, not fitted".into(),
        ))
    }

    fn decode(&self, payload: &[u8]) -> Result<Box<dyn ReducerModel>> {
        let mut r = Reader::new(payload, "SPWR import payload");
        let out_dim = r.u32()? as usize;
        r.finish()?;
        Ok(Box::new(ImportModel { out_dim }))
    }
}

impl ReducerModel for ImportModel {
    fn input_dim(&self) -> usize {
        0
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn transform(&self, _: &[f32]) -> Result<Vec<f32>> {
        Err(Error::Unsupported(
            "imported layouts have no out-of-sample projection".into(),
        ))
    }

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u32(self.out_dim as u32);
        w.buf
    }

    fn supports_transform(&self) -> bool {
        false
    }
}
