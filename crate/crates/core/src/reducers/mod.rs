//! Dimensionality reducers behind a uniform fit/transform contract.
//!
//! The registry ships with `pca`, `hnne` and `import`. Additional methods plug
//! in through [`Registry::register`].

mod hnne;
mod import;
mod pca;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use hnne::{build_hierarchy, Hierarchy, Hnne, HnneModel, HnneParams};
pub use import::{ImportModel, ImportReducer};
pub use pca::{Pca, PcaModel};

use crate::error::{Error, Result};
use crate::hash::Fnv1a;
use crate::model::{now_secs, validate_coords, validate_out_dim, EmbeddingMatrix, Layout, Params};
use crate::wire::bytes::{Reader, Writer};

pub const SPWR_MAGIC: &[u8; 4] = b"SPWR";
pub const SPWR_VERSION: u32 = 1;

/// Which reducer to run, with what parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducerSpec {
    pub name: String,
    #[serde(default)]
    pub params: Params,
    pub out_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ReducerSpec {
    pub fn new(name: impl Into<String>, out_dim: usize) -> Self {
        ReducerSpec {
            name: name.into(),
            params: Params::new(),
            out_dim,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_param(mut self, key: &str, value: impl Into<crate::model::ParamValue>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    /// Stable key over name, out_dim, params and seed.
    pub fn cache_key(&self) -> String {
        let mut h = Fnv1a::new();
        h.write(self.name.as_bytes());
        h.write(&[0]);
        h.write_u64(self.out_dim as u64);
        h.write_u64(self.seed);
        h.write(&serde_json::to_vec(&self.params).expect("params serialize"));
        format!("{:016x}", h.finish())
    }
}

/// A fitted reducer's method-specific state.
pub trait ReducerModel: Send + Sync + fmt::Debug {
    fn input_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    /// Projects `vectors` (row-major, `input_dim` wide). Dimensions are
    /// checked by [`FittedReducer`] before this is called.
    fn transform(&self, vectors: &[f32]) -> Result<Vec<f32>>;
    /// Method-specific payload, decoded by [`Reducer::decode`].
    fn encode(&self) -> Vec<u8>;
    /// False for static layouts that cannot place new vectors.
    fn supports_transform(&self) -> bool {
        true
    }
}

/// A dimensionality-reduction method.
pub trait Reducer: Send + Sync {
    /// Returns training coordinates (`count × out_dim`) and the model.
    fn fit(
        &self,
        matrix: &EmbeddingMatrix,
        spec: &ReducerSpec,
    ) -> Result<(Vec<f32>, Box<dyn ReducerModel>)>;

    fn decode(&self, payload: &[u8]) -> Result<Box<dyn ReducerModel>>;
}

/// A model together with the spec it was fitted from.
#[derive(Debug, Clone)]
pub struct FittedReducer {
    pub spec: ReducerSpec,
    pub train_fingerprint: u64,
    model: Arc<dyn ReducerModel>,
}

impl FittedReducer {
    pub fn new(spec: ReducerSpec, train_fingerprint: u64, model: Box<dyn ReducerModel>) -> Self {
        FittedReducer {
            spec,
            train_fingerprint,
            model: Arc::from(model),
        }
    }

    pub fn model(&self) -> &dyn ReducerModel {
        self.model.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.model.out_dim()
    }

    /// Projects row-major vectors; `vectors.len()` must be a multiple of the
    /// training dimension.
    pub fn supports_transform(&self) -> bool {
        self.model.supports_transform()
    }

    fn check_supported(&self) -> Result<()> {
        if self.supports_transform() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "reducer `{}` has no out-of-sample projection",
                self.spec.name
            )))
        }
    }

    pub fn transform(&self, vectors: &[f32]) -> Result<Vec<f32>> {
        self.check_supported()?;
        let dim = self.input_dim();
        if vectors.len() % dim != 0 {
            return Err(Error::DimMismatch {
                row: vectors.len() / dim,
                expected: dim,
                actual: vectors.len() % dim,
            });
        }
        crate::model::check_finite(vectors, dim, 0)?;
        self.model.transform(vectors)
    }

    pub fn transform_one(&self, vector: &[f32]) -> Result<Vec<f32>> {
        self.check_supported()?;
        if vector.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                row: 0,
                expected: self.input_dim(),
                actual: vector.len(),
            });
        }
        self.transform(vector)
    }

    pub fn transform_matrix(&self, m: &EmbeddingMatrix) -> Result<Vec<f32>> {
        self.check_supported()?;
        if m.dim() != self.input_dim() {
            return Err(Error::DimMismatch {
                row: 0,
                expected: self.input_dim(),
                actual: m.dim(),
            });
        }
        self.model.transform(m.as_slice())
    }

    /// `SPWR` blob: magic, u32 version, u32-length-prefixed reducer name, then
    /// u32 out_dim, u64 seed, u64 training fingerprint, length-prefixed params
    /// JSON, u64 payload length and the method payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = serde_json::to_string(&self.spec.params).expect("params serialize");
        let payload = self.model.encode();
        let mut w = Writer::with_capacity(64 + params.len() + payload.len());
        w.bytes(SPWR_MAGIC)
            .u32(SPWR_VERSION)
            .string_u32(&self.spec.name)
            .u32(self.spec.out_dim as u32)
            .u64(self.spec.seed)
            .u64(self.train_fingerprint)
            .string_u32(&params)
            .u64(payload.len() as u64)
            .bytes(&payload);
        w.buf
    }
}

/// Name → reducer dispatch table.
#[derive(Clone)]
pub struct Registry {
    reducers: BTreeMap<String, Arc<dyn Reducer>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.reducers.keys()).finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            reducers: BTreeMap::new(),
        }
    }

    /// `pca`, `hnne` and `import`.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("pca", Arc::new(Pca)).unwrap();
        r.register("hnne", Arc::new(Hnne)).unwrap();
        r.register("import", Arc::new(ImportReducer)).unwrap();
        r
    }

    pub fn register(&mut self, name: &str, reducer: Arc<dyn Reducer>) -> Result<()> {
        if self.reducers.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        self.reducers.insert(name.to_string(), reducer);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.reducers.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.reducers.contains_key(name)
    }

    fn get(&self, name: &str) -> Result<&Arc<dyn Reducer>> {
        self.reducers
            .get(name)
            .ok_or_else(|| Error::UnknownReducer(name.to_string()))
    }

    /// Fits a 2D or 3D layout.
    pub fn fit(&self, matrix: &EmbeddingMatrix, spec: &ReducerSpec) -> Result<(Layout, FittedReducer)> {
        validate_out_dim(spec.out_dim)?;
        let (coords, fitted) = self.fit_coords(matrix, spec)?;
        validate_coords(&coords, spec.out_dim)?;
        let layout = Layout {
            layout_id: layout_id(matrix.fingerprint(), spec),
            reducer_name: spec.name.clone(),
            out_dim: spec.out_dim,
            coords,
            params: spec.params.clone(),
            seed: spec.seed,
            fitted_at: now_secs(),
        };
        Ok((layout, fitted))
    }

    /// Like [`Registry::fit`] but accepts any `out_dim ≥ 1` and returns bare
    /// coordinates. Used for diagnostics such as lossless PCA baselines.
    pub fn fit_coords(
        &self,
        matrix: &EmbeddingMatrix,
        spec: &ReducerSpec,
    ) -> Result<(Vec<f32>, FittedReducer)> {
        let reducer = self.get(&spec.name)?;
        if spec.out_dim == 0 {
            return Err(Error::InvalidDim("out_dim must be at least 1".into()));
        }
        if matrix.count() < spec.out_dim + 1 {
            return Err(Error::InsufficientData(format!(
                "{} rows, need at least {}",
                matrix.count(),
                spec.out_dim + 1
            )));
        }
        let (coords, model) = reducer.fit(matrix, spec)?;
        debug_assert_eq!(coords.len(), matrix.count() * spec.out_dim);
        Ok((
            coords,
            FittedReducer::new(spec.clone(), matrix.fingerprint(), model),
        ))
    }

    /// Decodes an `SPWR` blob, dispatching on the embedded reducer name.
    pub fn decode(&self, bytes: &[u8]) -> Result<FittedReducer> {
        let mut r = Reader::new(bytes, "SPWR");
        r.magic(SPWR_MAGIC)?;
        let version = r.u32()?;
        if version != SPWR_VERSION {
            return Err(Error::malformed("SPWR", format!("unsupported version {version}")));
        }
        let name = r.string_u32()?;
        let out_dim = r.u32()? as usize;
        let seed = r.u64()?;
        let train_fingerprint = r.u64()?;
        let params: Params = serde_json::from_str(&r.string_u32()?)
            .map_err(|e| Error::malformed("SPWR", format!("params: {e}")))?;
        let len = r.len_u64()?;
        let payload = r.take(len)?;
        r.finish()?;
        let model = self.get(&name)?.decode(payload)?;
        if model.out_dim() != out_dim {
            return Err(Error::malformed("SPWR", "out_dim disagrees with payload"));
        }
        Ok(FittedReducer::new(
            ReducerSpec {
                name,
                params,
                out_dim,
                seed,
            },
            train_fingerprint,
            model,
        ))
    }
}

/// Deterministic layout id from the training data and spec.
pub fn layout_id(train_fingerprint: u64, spec: &ReducerSpec) -> String {
    let mut h = Fnv1a::new();
    h.write_u64(train_fingerprint);
    h.write(spec.cache_key().as_bytes());
    format!("{}-{}d-{:016x}", spec.name, spec.out_dim, h.finish())
}

/// Wraps externally computed coordinates (t-SNE, UMAP, ...) as a layout.
/// The result renders and supports selection, but `transform` is
/// unsupported.
pub fn import_layout(
    coords: Vec<f32>,
    out_dim: usize,
    expected_count: usize,
) -> Result<(Layout, FittedReducer)> {
    validate_coords(&coords, out_dim)?;
    let count = coords.len() / out_dim;
    if count != expected_count {
        return Err(Error::CountMismatch {
            expected: expected_count,
            actual: count,
        });
    }
    let mut h = Fnv1a::new();
    for x in &coords {
        h.write(&x.to_le_bytes());
    }
    let spec = ReducerSpec::new("import", out_dim);
    let fp = h.finish();
    let layout = Layout {
        layout_id: layout_id(fp, &spec),
        reducer_name: "import".into(),
        out_dim,
        coords,
        params: Params::new(),
        seed: 0,
        fitted_at: now_secs(),
    };
    Ok((layout, FittedReducer::new(spec, fp, Box::new(ImportModel { out_dim }))))
}

/// Reads a numeric parameter with a default.
pub(crate) fn param_f64(params: &Params, key: &str, default: f64) -> Result<f64> {
    use crate::model::ParamValue;
    match params.get(key) {
        None => Ok(default),
        Some(ParamValue::Number(v)) => Ok(*v),
        Some(ParamValue::Text(s)) => s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("parameter `{key}` must be numeric"))),
    }
}
