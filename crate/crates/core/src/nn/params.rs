//! Named parameter storage, initialisation and the Adam optimizer.

use std::collections::HashMap;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Graph, Mat, Var};

/// Ordered map of named parameter matrices. Insertion order is fixed by the
/// model builder, which keeps serialisation and optimisation deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new parameter; panics on duplicate names (builder bug).
    pub fn insert(&mut self, name: impl Into<String>, value: Mat) {
        let name = name.into();
        let prev = self.entries.insert(name.clone(), value);
        assert!(prev.is_none(), "duplicate parameter {name:?}");
    }

    pub fn get(&self, name: &str) -> &Mat {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Mat {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Mat)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn total_scalars(&self) -> usize {
        self.entries.values().map(|m| m.len()).sum()
    }

    /// Squared L2 norm over parameters selected by `filter`.
    pub fn squared_norm(&self, filter: impl Fn(&str) -> bool) -> f64 {
        self.entries
            .iter()
            .filter(|(name, _)| filter(name))
            .map(|(_, m)| m.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn to_serializable(&self) -> SerializableParams {
        SerializableParams {
            entries: self
                .entries
                .iter()
                .map(|(name, m)| SerializableMat {
                    name: name.clone(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                    data: m.iter().cloned().collect(),
                })
                .collect(),
        }
    }

    pub fn from_serializable(ser: SerializableParams) -> crate::Result<Self> {
        let mut store = ParamStore::new();
        for entry in ser.entries {
            if entry.data.len() != entry.rows * entry.cols {
                return Err(crate::Error::Checkpoint(format!(
                    "parameter {:?} has {} values for shape {}x{}",
                    entry.name,
                    entry.data.len(),
                    entry.rows,
                    entry.cols
                )));
            }
            let mat = Mat::from_shape_vec((entry.rows, entry.cols), entry.data)
                .expect("length checked");
            if store.contains(&entry.name) {
                return Err(crate::Error::Checkpoint(format!(
                    "duplicate parameter {:?}",
                    entry.name
                )));
            }
            store.insert(entry.name, mat);
        }
        Ok(store)
    }
}

/// Flat serialised form of a [`ParamStore`]; f64 values survive the JSON
/// round trip exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SerializableParams {
    pub entries: Vec<SerializableMat>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SerializableMat {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Per-graph cache binding parameter names to tape leaves, so a parameter
/// used at many timesteps becomes a single node with accumulated gradient.
#[derive(Default)]
pub struct Bindings {
    vars: HashMap<String, Var>,
    order: Vec<String>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Leaf for `name`, creating it on first use.
    pub fn var(&mut self, g: &mut Graph, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.vars.get(name) {
            return v;
        }
        let v = g.leaf(store.get(name).clone());
        self.vars.insert(name.to_string(), v);
        self.order.push(name.to_string());
        v
    }

    /// Gradients for every bound parameter after a backward pass; parameters
    /// that did not influence the loss get zeros.
    pub fn collect_grads(&self, g: &Graph, store: &ParamStore) -> IndexMap<String, Mat> {
        let mut grads = IndexMap::with_capacity(self.order.len());
        for name in &self.order {
            let var = self.vars[name];
            let grad = match g.grad(var) {
                Some(grad) => grad.clone(),
                None => Mat::zeros(store.get(name).dim()),
            };
            grads.insert(name.clone(), grad);
        }
        grads
    }

    pub fn bound_names(&self) -> &[String] {
        &self.order
    }
}

/// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` with `fan_in = rows`,
/// the input width of a `[in, out]` weight.
pub fn uniform_fan_in(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let bound = 1.0 / (rows as f64).sqrt();
    Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

/// Uniform init scaled by the vector width; used for lookup tables whose
/// rows are embedding vectors.
pub fn uniform_row_vectors(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let bound = 1.0 / (cols as f64).sqrt();
    Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

/// Adam with bias correction. State is keyed by parameter name and created
/// lazily on the first step that touches a parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: HashMap<String, Mat>,
    second_moment: HashMap<String, Mat>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: HashMap::new(),
            second_moment: HashMap::new(),
        }
    }

    /// Applies one update with the given gradients. Names absent from
    /// `grads` are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &IndexMap<String, Mat>) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for (name, grad) in grads {
            let param = store.get_mut(name);
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| Mat::zeros(grad.dim()));
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| Mat::zeros(grad.dim()));
            *m = &*m * self.beta1 + &(grad * (1.0 - self.beta1));
            *v = &*v * self.beta2 + &(grad.mapv(|g| g * g) * (1.0 - self.beta2));
            let m_hat = &*m / bias1;
            let v_hat = &*v / bias2;
            let update = &m_hat / &(v_hat.mapv(f64::sqrt) + self.epsilon);
            *param -= &(update * self.learning_rate);
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn adam_minimises_a_quadratic() {
        // f(w) = sum((w - 3)^2); gradient 2(w - 3).
        let mut store = ParamStore::new();
        store.insert("w", arr2(&[[0.0, 10.0], [-4.0, 2.0]]));
        let mut adam = Adam::new(0.05);
        for _ in 0..2000 {
            let grad = store.get("w").mapv(|w| 2.0 * (w - 3.0));
            let mut grads = IndexMap::new();
            grads.insert("w".to_string(), grad);
            adam.step(&mut store, &grads);
        }
        for &w in store.get("w").iter() {
            assert!((w - 3.0).abs() < 1e-3, "w = {w}");
        }
    }

    #[test]
    fn bindings_reuse_one_leaf_per_name() {
        let mut store = ParamStore::new();
        store.insert("a", arr2(&[[1.0, 2.0]]));
        let mut g = Graph::new();
        let mut bind = Bindings::new();
        let v1 = bind.var(&mut g, &store, "a");
        let v2 = bind.var(&mut g, &store, "a");
        assert_eq!(v1, v2);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn collect_grads_fills_zeros_for_unused() {
        let mut store = ParamStore::new();
        store.insert("used", arr2(&[[1.0, 2.0]]));
        store.insert("unused", arr2(&[[5.0]]));
        let mut g = Graph::new();
        let mut bind = Bindings::new();
        let used = bind.var(&mut g, &store, "used");
        let _unused = bind.var(&mut g, &store, "unused");
        let sq = g.square(used);
        let loss = g.sum_all(sq);
        g.backward(loss);
        let grads = bind.collect_grads(&g, &store);
        assert_eq!(grads["used"], arr2(&[[2.0, 4.0]]));
        assert_eq!(grads["unused"], arr2(&[[0.0]]));
    }

    #[test]
    fn serialization_round_trips_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        store.insert("w1", uniform_fan_in(&mut rng, 4, 3));
        store.insert("w2", uniform_row_vectors(&mut rng, 2, 5));
        let json = serde_json::to_string(&store.to_serializable()).unwrap();
        let back: SerializableParams = serde_json::from_str(&json).unwrap();
        let restored = ParamStore::from_serializable(back).unwrap();
        assert_eq!(store, restored);
    }

    #[test]
    fn fan_in_bound_respected() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let w = uniform_fan_in(&mut rng, 16, 8);
        let bound = 1.0 / 4.0;
        assert!(w.iter().all(|&v| v.abs() <= bound));
    }
}
