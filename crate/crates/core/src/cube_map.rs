//! Mapping from (consumer pattern, baseline pattern) pairs to the cube a
//! leaf contributes, for one root-to-leaf path.
//!
//! Walking the path from the root, each edge either requires the feature to
//! come from the consumer (consumer takes the edge, baseline does not: add
//! `f`), from the baseline (add `¬f`), from either (no literal), or makes the
//! leaf unreachable (no entry). Pairs of the last kind are never stored, so a
//! path of length `k` yields exactly `3^k` entries.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::tree::FeatureId;

/// A cube over the distinct variables of one path, as bitmasks of
/// variable ordinals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MaskCube {
    pub positive: u32,
    pub negative: u32,
}

impl MaskCube {
    /// Some variable is required both present and missing: never satisfied.
    pub fn is_contradictory(self) -> bool {
        self.positive & self.negative != 0
    }

    pub fn is_empty(self) -> bool {
        self.positive | self.negative == 0
    }

    /// Whether the participation set (bitmask of ordinals) satisfies the cube.
    pub fn satisfied_by(self, present: u32) -> bool {
        self.positive & !present == 0 && self.negative & present == 0
    }
}

/// Set bits of a mask, lowest first, into a fixed buffer.
pub(crate) fn ordinals(mut mask: u32, buf: &mut [u32; 32]) -> &[u32] {
    let mut n = 0;
    while mask != 0 {
        buf[n] = mask.trailing_zeros();
        mask &= mask - 1;
        n += 1;
    }
    &buf[..n]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DictEntry {
    pub consumer: u32,
    pub baseline: u32,
    pub cube: MaskCube,
}

/// All cubes of one path, sorted by `(consumer, baseline)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeDictionary {
    entries: Vec<DictEntry>,
    path_len: usize,
    /// Ordinal → the feature it stands for.
    variables: Vec<FeatureId>,
}

impl CubeDictionary {
    pub fn entries(&self) -> &[DictEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of edges on the path.
    pub fn path_len(&self) -> usize {
        self.path_len
    }

    /// Distinct features on the path, in first-occurrence order.
    pub fn variables(&self) -> &[FeatureId] {
        &self.variables
    }

    pub fn get(&self, consumer: u32, baseline: u32) -> Option<MaskCube> {
        self.entries
            .binary_search_by_key(&(consumer, baseline), |e| (e.consumer, e.baseline))
            .ok()
            .map(|i| self.entries[i].cube)
    }

    /// `(S⁺, S⁻)` of a cube as feature ids.
    pub fn cube_features(&self, cube: MaskCube) -> (Vec<FeatureId>, Vec<FeatureId>) {
        let mut buf = [0; 32];
        let pos = ordinals(cube.positive, &mut buf)
            .iter()
            .map(|&o| self.variables[o as usize])
            .collect();
        let neg = ordinals(cube.negative, &mut buf)
            .iter()
            .map(|&o| self.variables[o as usize])
            .collect();
        (pos, neg)
    }
}

/// Replaces each feature by the ordinal of its first occurrence, e.g.
/// `(7, 3, 7)` → key `(0, 1, 0)` with variables `(7, 3)`.
pub fn canonicalize(path_features: &[FeatureId]) -> (Vec<u8>, Vec<FeatureId>) {
    let mut variables: Vec<FeatureId> = Vec::new();
    let key = path_features
        .iter()
        .map(|f| match variables.iter().position(|v| v == f) {
            Some(o) => o as u8,
            None => {
                variables.push(*f);
                (variables.len() - 1) as u8
            }
        })
        .collect();
    (key, variables)
}

/// Builds the dictionary of a path by tripling the entry set once per edge.
pub fn map_patterns_to_cube(path_features: &[FeatureId]) -> CubeDictionary {
    assert!(path_features.len() <= 30, "path longer than the depth cap");
    let (key, variables) = canonicalize(path_features);
    let mut entries = vec![DictEntry {
        consumer: 0,
        baseline: 0,
        cube: MaskCube::default(),
    }];
    for &ordinal in &key {
        let bit = 1u32 << ordinal;
        let mut next = Vec::with_capacity(entries.len() * 3);
        for e in &entries {
            let (pc, pb, c) = (e.consumer << 1, e.baseline << 1, e.cube);
            // consumer takes the edge, baseline does not: feature present
            next.push(DictEntry {
                consumer: pc | 1,
                baseline: pb,
                cube: MaskCube {
                    positive: c.positive | bit,
                    ..c
                },
            });
            // baseline takes the edge, consumer does not: feature missing
            next.push(DictEntry {
                consumer: pc,
                baseline: pb | 1,
                cube: MaskCube {
                    negative: c.negative | bit,
                    ..c
                },
            });
            next.push(DictEntry {
                consumer: pc | 1,
                baseline: pb | 1,
                cube: c,
            });
        }
        entries = next;
    }
    entries.sort_unstable_by_key(|e| (e.consumer, e.baseline));
    CubeDictionary {
        entries,
        path_len: key.len(),
        variables,
    }
}

/// Dictionaries shared by every path with the same repeat structure.
#[derive(Debug, Default)]
pub struct DictionaryCache {
    map: RwLock<HashMap<Vec<u8>, Arc<CubeDictionary>>>,
}

impl DictionaryCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the canonical dictionary for the path and the rename vector
    /// mapping its variable ordinals to this path's features.
    pub fn get(&self, path_features: &[FeatureId]) -> (Arc<CubeDictionary>, Vec<FeatureId>) {
        let (key, rename) = canonicalize(path_features);
        if let Some(d) = self.map.read().expect("cache lock").get(&key) {
            return (Arc::clone(d), rename);
        }
        let ordinals: Vec<FeatureId> = key.iter().map(|&o| o as FeatureId).collect();
        let built = Arc::new(map_patterns_to_cube(&ordinals));
        let mut map = self.map.write().expect("cache lock");
        let d = map.entry(key).or_insert(built);
        (Arc::clone(d), rename)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
