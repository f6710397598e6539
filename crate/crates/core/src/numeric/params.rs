use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SegError};

/// How a parameter group is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Glorot-uniform weights.
    Weight,
    /// All-zero bias.
    Bias,
    /// Bias of a fused LSTM gate block laid out `[input, forget, cell, output]`;
    /// the forget slice starts at 1.0, the rest at zero.
    LstmBias { hidden: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], kind: ParamKind) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            kind,
        }
    }

    fn fan_sum(&self) -> usize {
        match self.shape.as_slice() {
            [n] => n + 1,
            [rows, cols] => rows + cols,
            dims => {
                // receptive field folded into the trailing dims
                let rf: usize = dims[2..].iter().product();
                (dims[0] + dims[1]) * rf
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Named flat parameter groups. Shapes are fixed at creation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a group. Names must be unique and the shape must match the data.
    pub fn insert(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<()> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(SegError::Shape(format!(
                "group `{name}` has degenerate shape {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(SegError::Shape(format!(
                "group `{name}` shape {shape:?} holds {n} values, got {}",
                values.len()
            )));
        }
        if self.index_of(name).is_some() {
            return Err(SegError::InvalidInput(format!("duplicate group `{name}`")));
        }
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            values,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.entries[i].values.as_slice())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let i = self.index_of(name)?;
        Some(self.entries[i].values.as_mut_slice())
    }

    pub fn shape(&self, name: &str) -> Option<&[usize]> {
        self.index_of(name).map(|i| self.entries[i].shape.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[f64]> {
        self.get(name)
            .ok_or_else(|| SegError::Shape(format!("missing parameter group `{name}`")))
    }

    pub fn values(&self, idx: usize) -> &[f64] {
        &self.entries[idx].values
    }

    pub fn values_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.entries[idx].values
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    /// Reads the k-th scalar in group order.
    pub fn scalar(&self, mut k: usize) -> f64 {
        for e in &self.entries {
            if k < e.values.len() {
                return e.values[k];
            }
            k -= e.values.len();
        }
        panic!("scalar index out of range");
    }

    pub fn set_scalar(&mut self, mut k: usize, v: f64) {
        for e in &mut self.entries {
            if k < e.values.len() {
                e.values[k] = v;
                return;
            }
            k -= e.values.len();
        }
        panic!("scalar index out of range");
    }

    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.values.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    values: vec![0.0; e.values.len()],
                })
                .collect(),
        }
    }

    /// Order-sensitive hash of names, shapes and value bits. Used to detect
    /// stale forward caches.
    pub fn fingerprint(&self, groups: impl Fn(&str) -> bool) -> u64 {
        // FNV-1a over the raw bytes
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for e in self.entries.iter().filter(|e| groups(&e.name)) {
            eat(e.name.as_bytes());
            for d in &e.shape {
                eat(&(*d as u64).to_le_bytes());
            }
            for v in &e.values {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Gradient accumulator with the same layout as the [`ParamStore`] it was
/// created from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    store: ParamStore,
}

impl GradientBundle {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            store: params.zeros_like(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.store.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.store.get_mut(name)
    }

    pub fn require_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        self.store
            .get_mut(name)
            .ok_or_else(|| SegError::Shape(format!("missing gradient group `{name}`")))
    }

    pub fn values(&self, idx: usize) -> &[f64] {
        self.store.values(idx)
    }

    pub fn values_mut(&mut self, idx: usize) -> &mut [f64] {
        self.store.values_mut(idx)
    }

    pub fn matches(&self, params: &ParamStore) -> bool {
        self.store.same_layout(params)
    }

    pub fn is_finite(&self) -> bool {
        self.store.is_finite()
    }

    pub fn global_norm(&self) -> f64 {
        self.store
            .entries
            .iter()
            .flat_map(|e| e.values.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.store.entries {
            e.values.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// `self += other`; layouts must match.
    pub fn accumulate(&mut self, other: &GradientBundle) -> Result<()> {
        if !self.store.same_layout(&other.store) {
            return Err(SegError::Shape("gradient layouts differ".into()));
        }
        for (a, b) in self.store.entries.iter_mut().zip(&other.store.entries) {
            a.values.iter_mut().zip(&b.values).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    /// `self += coeff * params` for every group accepted by `filter`.
    pub fn add_scaled_params(&mut self, params: &ParamStore, coeff: f64, filter: impl Fn(&str) -> bool) {
        for (g, p) in self.store.entries.iter_mut().zip(&params.entries) {
            if filter(&p.name) {
                g.values
                    .iter_mut()
                    .zip(&p.values)
                    .for_each(|(gv, pv)| *gv += coeff * pv);
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn scalar(&self, k: usize) -> f64 {
        self.store.scalar(k)
    }
}

/// Builds a store from a layer-shape list. Deterministic in `(specs, seed)`.
pub fn init_params(specs: &[ParamSpec], seed: u64) -> Result<ParamStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for spec in specs {
        if spec.shape.is_empty() || spec.shape.contains(&0) {
            return Err(SegError::Config(format!(
                "parameter group `{}` has degenerate shape {:?}",
                spec.name, spec.shape
            )));
        }
        let n: usize = spec.shape.iter().product();
        let values = match spec.kind {
            ParamKind::Weight => {
                let r = (6.0 / spec.fan_sum() as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-r..=r)).collect()
            }
            ParamKind::Bias => vec![0.0; n],
            ParamKind::LstmBias { hidden } => {
                if n != 4 * hidden {
                    return Err(SegError::Config(format!(
                        "LSTM bias `{}` has {n} entries, expected 4*{hidden}",
                        spec.name
                    )));
                }
                let mut b = vec![0.0; n];
                b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
                b
            }
        };
        store.insert(&spec.name, &spec.shape, values)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_in_seed() {
        let specs = [ParamSpec::new("w", &[2, 2], ParamKind::Weight)];
        let a = init_params(&specs, 7).unwrap();
        let b = init_params(&specs, 7).unwrap();
        let c = init_params(&specs, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn glorot_bound_holds_for_square_group() {
        let specs = [ParamSpec::new("w", &[4, 4], ParamKind::Weight)];
        let bound = (6.0f64 / 8.0).sqrt();
        for seed in 0..50 {
            let s = init_params(&specs, seed).unwrap();
            assert!(s.get("w").unwrap().iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let h = 3;
        let specs = [
            ParamSpec::new("w", &[4 * h, 5], ParamKind::Weight),
            ParamSpec::new("b", &[4 * h], ParamKind::LstmBias { hidden: h }),
        ];
        let s = init_params(&specs, 1).unwrap();
        let b = s.get("b").unwrap();
        assert!(b[h..2 * h].iter().all(|&v| v == 1.0));
        assert!(b[..h].iter().chain(&b[2 * h..]).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_dimension_is_rejected() {
        let specs = [ParamSpec::new("w", &[0, 3], ParamKind::Weight)];
        assert!(matches!(init_params(&specs, 0), Err(SegError::Config(_))));
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut p = ParamStore::new();
        p.insert("a", &[2], vec![0.0, 0.0]).unwrap();
        let mut g = GradientBundle::zeros_like(&p);
        g.get_mut("a").unwrap().copy_from_slice(&[3.0, 4.0]);
        let before = g.clip_global_norm(1.0);
        assert_eq!(before, 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fingerprint_tracks_values() {
        let mut p = ParamStore::new();
        p.insert("a", &[2], vec![1.0, 2.0]).unwrap();
        let f0 = p.fingerprint(|_| true);
        p.get_mut("a").unwrap()[1] = 2.5;
        assert_ne!(f0, p.fingerprint(|_| true));
    }
}
