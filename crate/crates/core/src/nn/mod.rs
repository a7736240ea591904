//! Small neural-network toolkit on top of the autograd tape.

mod adam;
mod checkpoint;
mod layers;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ragbind_autograd::{Gradients, Graph, Mat, Var};

pub use adam::Adam;
pub use checkpoint::{Checkpoint, Section, CHECKPOINT_VERSION};
pub use layers::{cross_attention, head_sum_matrix, rbf, sinusoidal_embedding, LayerNorm, Linear, Mlp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Mat> {
        self.values.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Mat::is_finite)
    }

    /// Copy values from `other` by name; every parameter must be present with
    /// the same shape.
    pub fn load_from(&mut self, other: &ParamStore) -> crate::Result<()> {
        for (name, value) in self.names.iter().zip(&mut self.values) {
            let id = other.find(name).ok_or_else(|| crate::Error::MissingTensor(name.clone()))?;
            let src = other.get(id);
            if src.shape() != value.shape() {
                return Err(crate::Error::DimMismatch {
                    expected: value.len(),
                    got: src.len(),
                });
            }
            *value = src.clone();
        }
        Ok(())
    }

    /// Put every parameter on `g`, as leaves when `trainable`.
    pub fn bind(&self, g: &Graph, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .map(|v| if trainable { g.leaf(v.clone()) } else { g.constant(v.clone()) })
            .collect();
        Bound { vars }
    }
}

/// Parameters of a [`ParamStore`] placed on a graph.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients in parameter order, zero where nothing flowed.
    pub fn grads(&self, grads: &mut Gradients, store: &ParamStore) -> Vec<Mat> {
        self.vars
            .iter()
            .zip(&store.values)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Mat::zeros(p.rows(), p.cols())))
            .collect()
    }
}

/// Forward-pass context: the tape plus bound parameters.
#[derive(Clone, Copy)]
pub struct Fwd<'a> {
    pub g: &'a Graph,
    pub p: &'a Bound,
}

impl Fwd<'_> {
    pub fn param(&self, id: ParamId) -> Var {
        self.p.var(id)
    }
}

/// Seeded parameter initializer.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn uniform(&mut self, rows: usize, cols: usize, fan_in: usize) -> Mat {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.random_range(-bound..bound)).collect();
        Mat::from_vec(rows, cols, data)
    }
}

/// Global L2 norm of a gradient list.
pub fn grad_norm(grads: &[Mat]) -> f64 {
    grads.iter().map(|g| g.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
}
