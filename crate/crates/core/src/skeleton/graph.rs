use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Propagation;

/// Which matrix the spatial convolution propagates with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyMode {
    /// The 0/1 intra-body adjacency `A` exactly as written.
    Raw,
    /// `D^{-1/2} (A + I) D^{-1/2}`.
    #[default]
    Normalized,
}

/// Joint tree of a skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonGraph {
    parents: Vec<usize>,
    root: usize,
    adjacency: Vec<f64>,
    normalized: Vec<f64>,
}

/// Parent map of a 17-joint human-like body:
/// pelvis, spine, chest, neck, head, two arms (shoulder, elbow, wrist) and
/// two legs (hip, knee, ankle).
pub const HUMAN17_PARENTS: [usize; 17] = [0, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 12, 0, 14, 15];

impl SkeletonGraph {
    /// Builds the graph from a parent map in which the root maps to itself.
    pub fn from_parents(parents: &[usize]) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::Graph("empty parent map".into()));
        }
        if let Some((i, &p)) = parents.iter().enumerate().find(|(_, &p)| p >= n) {
            return Err(Error::Graph(format!("joint {i} has out-of-range parent {p}")));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i] == i).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(Error::Graph("parent map has no root (cycle)".into())),
            many => return Err(Error::Graph(format!("parent map is disconnected: roots {many:?}"))),
        };
        for start in 0..n {
            let mut j = start;
            let mut steps = 0;
            while j != root {
                j = parents[j];
                steps += 1;
                if steps > n {
                    return Err(Error::Graph(format!("joint {start} is on a cycle")));
                }
            }
        }

        let mut adjacency = vec![0.0; n * n];
        for (i, &p) in parents.iter().enumerate() {
            if i != p {
                adjacency[i * n + p] = 1.0;
                adjacency[p * n + i] = 1.0;
            }
        }
        let degree: Vec<f64> = (0..n)
            .map(|i| 1.0 + adjacency[i * n..(i + 1) * n].iter().sum::<f64>())
            .collect();
        let mut normalized = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let a = adjacency[i * n + j] + if i == j { 1.0 } else { 0.0 };
                if a != 0.0 {
                    normalized[i * n + j] = a / (degree[i].sqrt() * degree[j].sqrt());
                }
            }
        }
        Ok(SkeletonGraph {
            parents: parents.to_vec(),
            root,
            adjacency,
            normalized,
        })
    }

    pub fn human17() -> Self {
        SkeletonGraph::from_parents(&HUMAN17_PARENTS).expect("valid tree")
    }

    /// The human body for 17 joints, otherwise a heap-ordered binary tree.
    pub fn default_for(joints: usize) -> Result<Self> {
        if joints == 17 {
            return Ok(SkeletonGraph::human17());
        }
        let parents: Vec<usize> = (0..joints).map(|i| if i == 0 { 0 } else { (i - 1) / 2 }).collect();
        SkeletonGraph::from_parents(&parents)
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn parent(&self, joint: usize) -> usize {
        self.parents[joint]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Row-major `N x N` 0/1 adjacency.
    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    pub fn normalized_adjacency(&self) -> &[f64] {
        &self.normalized
    }

    pub fn degree(&self, joint: usize) -> usize {
        let n = self.num_joints();
        self.adjacency[joint * n..(joint + 1) * n].iter().filter(|&&v| v != 0.0).count()
    }

    pub fn propagation(&self, mode: AdjacencyMode) -> Propagation {
        let m = match mode {
            AdjacencyMode::Raw => self.adjacency.clone(),
            AdjacencyMode::Normalized => self.normalized.clone(),
        };
        Propagation::new(self.num_joints(), m).expect("square matrix")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_joint_chain() {
        let g = SkeletonGraph::from_parents(&[0, 0]).unwrap();
        assert_eq!(g.adjacency(), &[0.0, 1.0, 1.0, 0.0]);
        for v in g.normalized_adjacency() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn single_joint() {
        let g = SkeletonGraph::from_parents(&[0]).unwrap();
        assert_eq!(g.adjacency(), &[0.0]);
        assert_eq!(g.normalized_adjacency(), &[1.0]);
    }

    #[test]
    fn star_of_five() {
        let g = SkeletonGraph::from_parents(&[0, 0, 0, 0, 0]).unwrap();
        assert_eq!(g.degree(0), 4);
        let a = g.normalized_adjacency();
        // hub row: 1/5 + 4 * 1/sqrt(10); leaf row: 1/sqrt(10) + 1/2
        let hub: f64 = a[0..5].iter().sum();
        let leaf: f64 = a[5..10].iter().sum();
        assert!((hub - (0.2 + 4.0 / 10f64.sqrt())).abs() < 1e-12);
        assert!((leaf - (0.5 + 1.0 / 10f64.sqrt())).abs() < 1e-12);
        assert!((hub - 1.0).abs() > 0.1);
    }

    #[test]
    fn rejects_cycles_and_forests() {
        assert!(matches!(SkeletonGraph::from_parents(&[1, 0]), Err(Error::Graph(_))));
        assert!(matches!(SkeletonGraph::from_parents(&[0, 2, 1]), Err(Error::Graph(_))));
        assert!(matches!(SkeletonGraph::from_parents(&[0, 1]), Err(Error::Graph(_))));
        assert!(matches!(SkeletonGraph::from_parents(&[0, 5]), Err(Error::Graph(_))));
    }

    fn spectral_radius(m: &[f64], n: usize) -> f64 {
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            lambda = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.iter().map(|x| x / norm).collect();
        }
        lambda
    }

    #[test]
    fn normalized_adjacency_is_symmetric_and_contractive() {
        for g in [SkeletonGraph::human17(), SkeletonGraph::default_for(9).unwrap()] {
            let n = g.num_joints();
            let a = g.normalized_adjacency();
            for i in 0..n {
                assert!(a[i * n..(i + 1) * n].iter().sum::<f64>() > 0.0);
                for j in 0..n {
                    assert_eq!(a[i * n + j], a[j * n + i]);
                }
            }
            assert!(spectral_radius(a, n) <= 1.0 + 1e-9);
        }
    }
}
