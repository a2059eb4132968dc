//! Persistence pairs by column reduction of the boundary matrix over Z/2.

use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{FilteredSimplex, TdaError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub dim: u8,
    pub birth: f64,
    /// `f64::INFINITY` for essential classes; `null` in JSON.
    #[serde(serialize_with = "ser_death", deserialize_with = "de_death")]
    pub death: f64,
}

fn ser_death<S: Serializer>(d: &f64, s: S) -> Result<S::Ok, S::Error> {
    if d.is_finite() {
        s.serialize_some(d)
    } else {
        s.serialize_none()
    }
}

fn de_death<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl PersistencePair {
    pub fn robustness(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }

    /// Born and killed at the same radius: an artefact of the filtration
    /// order, not a feature.
    pub fn is_zero_persistence(&self) -> bool {
        self.death == self.birth
    }
}

/// Symmetric difference of two sorted index lists.
fn add_column(acc: &mut Vec<usize>, other: &[usize], scratch: &mut Vec<usize>) {
    scratch.clear();
    let (mut i, mut j) = (0, 0);
    while i < acc.len() && j < other.len() {
        match acc[i].cmp(&other[j]) {
            std::cmp::Ordering::Less => {
                scratch.push(acc[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                scratch.push(other[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    scratch.extend_from_slice(&acc[i..]);
    scratch.extend_from_slice(&other[j..]);
    std::mem::swap(acc, scratch);
}

/// Boundary columns for a filtration, with every structural check: faces
/// present and earlier, values non-decreasing, no simplex below any face.
pub(crate) fn boundary_columns(filtration: &[FilteredSimplex]) -> Result<Vec<Vec<usize>>, TdaError> {
    let mut index: HashMap<&[usize], usize> = HashMap::with_capacity(filtration.len());
    let mut columns = Vec::with_capacity(filtration.len());
    let bad = |i: usize, why: &str| TdaError::NonMonotoneFiltration {
        index: i,
        reason: why.to_owned(),
    };
    for (i, s) in filtration.iter().enumerate() {
        let v = &s.vertices;
        if v.is_empty() || v.len() > 3 || v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad(i, "vertices must be 1 to 3 strictly increasing indices"));
        }
        if !(s.value >= 0.0) || s.value.is_infinite() {
            return Err(bad(i, "value must be finite and non-negative"));
        }
        if i > 0 && s.value < filtration[i - 1].value {
            return Err(bad(i, "values are not sorted"));
        }
        let mut col = Vec::with_capacity(v.len());
        if v.len() > 1 {
            for skip in 0..v.len() {
                let face: Vec<usize> = v
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != skip)
                    .map(|(_, x)| *x)
                    .collect();
                let Some(&f) = index.get(face.as_slice()) else {
                    return Err(bad(i, "a face is missing or comes later"));
                };
                if filtration[f].value > s.value {
                    return Err(bad(i, "value below a face value"));
                }
                col.push(f);
            }
            col.sort_unstable();
        }
        if index.insert(v.as_slice(), i).is_some() {
            return Err(bad(i, "duplicate simplex"));
        }
        columns.push(col);
    }
    Ok(columns)
}

/// H0 and H1 persistence pairs of a sorted filtration, sorted by
/// (dim, birth, death). Zero-persistence pairs are kept; the H0 class of
/// each connected component that never dies has `death = ∞`.
pub fn compute_persistence(filtration: &[FilteredSimplex]) -> Result<Vec<PersistencePair>, TdaError> {
    let mut columns = boundary_columns(filtration)?;
    let n = columns.len();
    let dim = |i: usize| filtration[i].vertices.len() - 1;
    let mut owner_of_low: Vec<Option<usize>> = vec![None; n];
    let mut scratch = Vec::new();

    // Triangles first, so that edges killed by a triangle can be skipped
    // when the edge columns are reduced (their columns reduce to zero).
    for d in [2usize, 1] {
        for j in 0..n {
            if dim(j) != d || (d == 1 && owner_of_low[j].is_some()) {
                continue;
            }
            let mut col = std::mem::take(&mut columns[j]);
            while let Some(&low) = col.last() {
                match owner_of_low[low] {
                    Some(k) => add_column(&mut col, &columns[k], &mut scratch),
                    None => break,
                }
            }
            if let Some(&low) = col.last() {
                owner_of_low[low] = Some(j);
            }
            columns[j] = col;
        }
    }

    let mut pairs = Vec::new();
    for i in 0..n {
        let d = dim(i);
        if d > 1 {
            continue;
        }
        match owner_of_low[i] {
            Some(j) => pairs.push(PersistencePair {
                dim: d as u8,
                birth: filtration[i].value,
                death: filtration[j].value,
            }),
            // unpaired and not itself a destroyer: an essential class
            None if d == 0 || columns[i].is_empty() => pairs.push(PersistencePair {
                dim: d as u8,
                birth: filtration[i].value,
                death: f64::INFINITY,
            }),
            None => {}
        }
    }
    pairs.sort_by(|a, b| {
        a.dim
            .cmp(&b.dim)
            .then(a.birth.total_cmp(&b.birth))
            .then(a.death.total_cmp(&b.death))
    });
    Ok(pairs)
}

/// H1 pairs with positive persistence of at least `theta`, most robust first.
pub fn robust_cavities(pairs: &[PersistencePair], theta: f64) -> Vec<PersistencePair> {
    let mut out: Vec<PersistencePair> = pairs
        .iter()
        .filter(|p| p.dim == 1 && p.robustness() > 0.0 && p.robustness() >= theta)
        .copied()
        .collect();
    out.sort_by(|a, b| {
        b.robustness()
            .total_cmp(&a.robustness())
            .then(a.birth.total_cmp(&b.birth))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[usize], value: f64) -> FilteredSimplex {
        FilteredSimplex {
            vertices: v.to_vec(),
            value,
        }
    }

    #[test]
    fn hollow_triangle_keeps_essential_cycle() {
        let f = vec![
            s(&[0], 0.0),
            s(&[1], 0.0),
            s(&[2], 0.0),
            s(&[0, 1], 1.0),
            s(&[0, 2], 1.0),
            s(&[1, 2], 1.0),
        ];
        let pairs = compute_persistence(&f).unwrap();
        let h1: Vec<_> = pairs.iter().filter(|p| p.dim == 1).collect();
        assert_eq!(h1.len(), 1);
        assert!(h1[0].is_essential());
        assert_eq!(pairs.iter().filter(|p| p.dim == 0 && p.is_essential()).count(), 1);
    }

    #[test]
    fn rejects_bad_filtrations() {
        let missing_face = vec![s(&[0], 0.0), s(&[0, 1], 1.0)];
        assert!(compute_persistence(&missing_face).is_err());
        let below_face = vec![s(&[0], 0.0), s(&[1], 0.5), s(&[0, 1], 0.2)];
        assert!(compute_persistence(&below_face).is_err());
        let unsorted = vec![s(&[0], 0.3), s(&[1], 0.0)];
        assert!(compute_persistence(&unsorted).is_err());
    }

    #[test]
    fn robust_filter_and_order() {
        let pairs = [
            PersistencePair { dim: 1, birth: 0.1, death: 0.2 },
            PersistencePair { dim: 1, birth: 0.3, death: 0.9 },
            PersistencePair { dim: 1, birth: 0.4, death: 0.4 },
            PersistencePair { dim: 0, birth: 0.0, death: 5.0 },
        ];
        let all = robust_cavities(&pairs, 0.0);
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].birth, 0.3);
        assert_eq!(robust_cavities(&pairs, 0.5).len(), 1);
        assert!(robust_cavities(&pairs, 1e300).is_empty());
    }

    #[test]
    fn json_uses_null_for_infinite_death() {
        let p = PersistencePair { dim: 0, birth: 0.0, death: f64::INFINITY };
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"dim":0,"birth":0.0,"death":null}"#);
        let back: PersistencePair = serde_json::from_str(&text).unwrap();
        assert!(back.death.is_infinite());
    }
}
