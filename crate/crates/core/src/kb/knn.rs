use serde::Serialize;

use super::{KbError, KnowledgeBase, ProblemInstance, ProblemKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbour {
    pub id: String,
    pub distance: f64,
}

/// The `k` training instances closest to a query, nearest first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbourhood {
    pub query: String,
    pub neighbours: Vec<Neighbour>,
}

impl Neighbourhood {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.neighbours.iter().map(|n| n.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    /// A neighbourhood given explicitly, distances unknown (zero).
    pub fn from_ids<I, S>(query: impl Into<String>, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            query: query.into(),
            neighbours: ids
                .into_iter()
                .map(|id| Neighbour {
                    id: id.into(),
                    distance: 0.0,
                })
                .collect(),
        }
    }
}

/// Min-max scales every non-constant feature to [-1, 1], clamping values
/// outside the training range. Constant features are dropped.
pub fn normalize(features: &[f64], kb: &KnowledgeBase) -> Result<Vec<f64>, KbError> {
    if features.len() != kb.dims() {
        return Err(KbError::Dimension {
            expected: kb.dims(),
            got: features.len(),
        });
    }
    Ok(features
        .iter()
        .zip(kb.ranges())
        .filter(|(_, r)| !r.is_constant())
        .map(|(&x, r)| (2.0 * (x - r.min) / (r.max - r.min) - 1.0).clamp(-1.0, 1.0))
        .collect())
}

/// Euclidean distance between two normalized vectors.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// k-NN over every training instance. Ties are broken by instance id.
pub fn neighbours(
    p: &ProblemInstance,
    kb: &KnowledgeBase,
    k: usize,
) -> Result<Neighbourhood, KbError> {
    nearest(p, kb, k, |_| true)
}

/// k-NN restricted to training instances of the query's kind.
pub fn neighbours_of_kind(
    p: &ProblemInstance,
    kb: &KnowledgeBase,
    k: usize,
) -> Result<Neighbourhood, KbError> {
    let kind: ProblemKind = p.kind;
    nearest(p, kb, k, |q| q.kind == kind)
}

fn nearest(
    p: &ProblemInstance,
    kb: &KnowledgeBase,
    k: usize,
    keep: impl Fn(&ProblemInstance) -> bool,
) -> Result<Neighbourhood, KbError> {
    let query = normalize(&p.features, kb)?;
    let mut scored: Vec<Neighbour> = Vec::with_capacity(kb.len());
    for q in kb.instances().iter().filter(|q| keep(q)) {
        // training members normalize without error: same dimensionality
        let x = normalize(&q.features, kb)?;
        scored.push(Neighbour {
            id: q.id.clone(),
            distance: distance(&query, &x),
        });
    }
    scored.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    scored.truncate(k);
    Ok(Neighbourhood {
        query: p.id.clone(),
        neighbours: scored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{Outcome, SolverRecord};
    use proptest::prelude::*;

    fn kb_from(points: &[(&str, [f64; 2])]) -> KnowledgeBase {
        let instances = points
            .iter()
            .map(|(id, f)| ProblemInstance::csp(*id, f.to_vec()))
            .collect();
        let recs = points
            .iter()
            .map(|(id, _)| (id.to_string(), SolverRecord::new("s", Outcome::Unk, 10.0)))
            .collect();
        KnowledgeBase::new(instances, vec!["s".into()], recs, 10.0).unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let kb = kb_from(&[("a", [0.0, 3.0]), ("b", [10.0, 3.0])]);
        assert_eq!(normalize(&[0.0, 3.0], &kb).unwrap(), vec![-1.0]);
        assert_eq!(normalize(&[10.0, 3.0], &kb).unwrap(), vec![1.0]);
        assert_eq!(normalize(&[5.0, 3.0], &kb).unwrap(), vec![0.0]);
        // clamped outside the training range
        assert_eq!(normalize(&[25.0, 7.0], &kb).unwrap(), vec![1.0]);
        assert!(matches!(
            normalize(&[1.0], &kb),
            Err(KbError::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn identical_instance_is_nearest() {
        let kb = kb_from(&[("a", [0.0, 0.0]), ("b", [4.0, 1.0]), ("c", [2.0, 9.0])]);
        let q = ProblemInstance::csp("q", vec![4.0, 1.0]);
        let n = neighbours(&q, &kb, 1).unwrap();
        assert_eq!(n.ids().collect::<Vec<_>>(), vec!["b"]);
        assert_eq!(n.neighbours[0].distance, 0.0);
    }

    #[test]
    fn k_larger_than_training_set_returns_all_sorted() {
        let kb = kb_from(&[("a", [0.0, 0.0]), ("b", [4.0, 1.0]), ("c", [2.0, 9.0])]);
        let q = ProblemInstance::csp("q", vec![0.0, 0.0]);
        let n = neighbours(&q, &kb, 10).unwrap();
        assert_eq!(n.len(), 3);
        assert!(n.neighbours.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn five_point_knn_matches_brute_force() {
        // Normalized coordinates are hand-placeable: x in [0, 4] -> [-1, 1],
        // y in [0, 4] -> [-1, 1].
        let kb = kb_from(&[
            ("p1", [0.0, 0.0]),
            ("p2", [4.0, 4.0]),
            ("p3", [1.0, 1.0]),
            ("p4", [3.0, 0.0]),
            ("p5", [0.0, 4.0]),
        ]);
        let q = ProblemInstance::csp("q", vec![1.0, 0.0]);
        // Brute force in normalized space: q = (-0.5, -1).
        let norm = |x: f64, y: f64| (x / 2.0 - 1.0, y / 2.0 - 1.0);
        let (qx, qy) = norm(1.0, 0.0);
        let mut oracle: Vec<(f64, &str)> = [
            ("p1", 0.0, 0.0),
            ("p2", 4.0, 4.0),
            ("p3", 1.0, 1.0),
            ("p4", 3.0, 0.0),
            ("p5", 0.0, 4.0),
        ]
        .iter()
        .map(|&(id, x, y)| {
            let (nx, ny) = norm(x, y);
            (((nx - qx).powi(2) + (ny - qy).powi(2)).sqrt(), id)
        })
        .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let expected: Vec<&str> = oracle.iter().take(3).map(|o| o.1).collect();
        assert_eq!(expected, vec!["p1", "p3", "p4"]);
        let got = neighbours(&q, &kb, 3).unwrap();
        assert_eq!(got.ids().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn ties_broken_by_id() {
        let kb = kb_from(&[("z", [1.0, 0.0]), ("a", [-1.0, 0.0]), ("m", [0.0, 5.0])]);
        let q = ProblemInstance::csp("q", vec![0.0, 0.0]);
        let n = neighbours(&q, &kb, 1).unwrap();
        assert_eq!(n.ids().collect::<Vec<_>>(), vec!["a"]);
    }

    proptest! {
        #[test]
        fn distance_symmetric_with_zero_identity(
            a in prop::collection::vec(-1.0f64..1.0, 4),
            b in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            prop_assert_eq!(distance(&a, &a), 0.0);
            prop_assert_eq!(distance(&a, &b), distance(&b, &a));
        }

        #[test]
        fn training_members_normalize_into_unit_box(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..20)
        ) {
            let named: Vec<(String, [f64; 2])> = pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| (format!("i{i}"), [x, y]))
                .collect();
            let refs: Vec<(&str, [f64; 2])> = named.iter().map(|(s, f)| (s.as_str(), *f)).collect();
            let kb = kb_from(&refs);
            for p in kb.instances() {
                let v = normalize(&p.features, &kb).unwrap();
                prop_assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
            }
            let q = ProblemInstance::csp("q", vec![pts[0].0, pts[0].1]);
            prop_assert_eq!(neighbours(&q, &kb, 3).unwrap(), neighbours(&q, &kb, 3).unwrap());
        }
    }
}
