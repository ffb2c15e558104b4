//! JSON persistence of trained models.
//!
//! Matrices are stored row-major as `{rows, cols, data}`. Values are written
//! through `f64` with shortest round-trip formatting, so a save/load cycle
//! reproduces every weight bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ffnn::{Activation, FfnnParams, Layer};
use super::model::NnarxModel;
use super::scaling::Scaling;
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixJson {
    fn from_matrix<T: Real>(m: &DMatrix<T>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(to_f64(m[(i, j)]));
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn from_vector<T: Real>(v: &DVector<T>) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.iter().map(|x| to_f64(*x)).collect(),
        }
    }

    fn to_matrix<T: Real>(&self, what: &str) -> Result<DMatrix<T>> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::Parse(format!(
                "{what}: {}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("{what}: non-finite entry")));
        }
        Ok(DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|v| lit(*v))))
    }

    fn to_vector<T: Real>(&self, what: &str) -> Result<DVector<T>> {
        if self.cols != 1 {
            return Err(Error::Parse(format!("{what}: expected a column vector")));
        }
        let m = self.to_matrix::<T>(what)?;
        Ok(DVector::from_column_slice(m.as_slice()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LayerJson {
    activation: Activation,
    input_weights: MatrixJson,
    feed_weights: MatrixJson,
    bias: MatrixJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelJson {
    horizon: usize,
    inputs: usize,
    outputs: usize,
    layers: Vec<LayerJson>,
    output_weights: MatrixJson,
    output_bias: MatrixJson,
    scaling: Scaling,
}

/// A model together with the normalization it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle<T: Real> {
    pub model: NnarxModel<T>,
    pub scaling: Scaling,
}

impl<T: Real> ModelBundle<T> {
    pub fn to_json(&self) -> Result<String> {
        let p = self.model.params();
        let doc = ModelJson {
            horizon: self.model.horizon(),
            inputs: p.input_dim(),
            outputs: p.output_dim(),
            layers: p
                .layers
                .iter()
                .map(|l| LayerJson {
                    activation: l.activation,
                    input_weights: MatrixJson::from_matrix(&l.input_weights),
                    feed_weights: MatrixJson::from_matrix(&l.feed_weights),
                    bias: MatrixJson::from_vector(&l.bias),
                })
                .collect(),
            output_weights: MatrixJson::from_matrix(&p.output_weights),
            output_bias: MatrixJson::from_vector(&p.output_bias),
            scaling: self.scaling.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelJson = serde_json::from_str(text)?;
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (i, l) in doc.layers.iter().enumerate() {
            layers.push(Layer {
                input_weights: l.input_weights.to_matrix(&format!("layer {i} input weights"))?,
                feed_weights: l.feed_weights.to_matrix(&format!("layer {i} feed weights"))?,
                bias: l.bias.to_vector(&format!("layer {i} bias"))?,
                activation: l.activation,
            });
        }
        let params = FfnnParams::new(
            layers,
            doc.output_weights.to_matrix("output weights")?,
            doc.output_bias.to_vector("output bias")?,
        )
        .map_err(|e| Error::Parse(e.to_string()))?;
        if params.input_dim() != doc.inputs || params.output_dim() != doc.outputs {
            return Err(Error::Parse("declared dimensions disagree with the weights".into()));
        }
        let model = NnarxModel::new(doc.horizon, params).map_err(|e| Error::Parse(e.to_string()))?;
        doc.scaling.validate()?;
        if doc.scaling.inputs() != doc.inputs || doc.scaling.outputs() != doc.outputs {
            return Err(Error::Parse("scaling dimensions disagree with the model".into()));
        }
        Ok(Self {
            model,
            scaling: doc.scaling,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
