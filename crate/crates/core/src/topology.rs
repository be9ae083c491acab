//! Skeleton graphs: kinematic edges, joint groups and the normalized
//! adjacency used by the graph decoder.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::math;
use crate::numerics::Tensor;

/// Joint names of the 17-joint body layout, in index order.
pub const BODY17: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

const BODY17_EDGES: [(usize, usize); 18] = [
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (0, 5),
    (0, 6),
    (5, 6),
    (5, 7),
    (7, 9),
    (6, 8),
    (8, 10),
    (5, 11),
    (6, 12),
    (11, 12),
    (11, 13),
    (13, 15),
    (12, 14),
    (14, 16),
];

/// Joints that extra (beyond 17) joints attach to, in round-robin order.
pub const EXTRA_ANCHORS: [usize; 3] = [0, 9, 10];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    k: usize,
    edges: Vec<(usize, usize)>,
    roi: Vec<usize>,
    hands: Vec<usize>,
    head: Vec<usize>,
}

impl Topology {
    pub fn new(
        k: usize,
        edges: Vec<(usize, usize)>,
        roi: Vec<usize>,
        hands: Vec<usize>,
        head: Vec<usize>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("topology needs at least one joint".into()));
        }
        for &(i, j) in &edges {
            if i >= k || j >= k || i == j {
                return Err(Error::InvalidConfig(format!("edge ({}, {}) invalid for {} joints", i, j, k)));
            }
        }
        for (what, group) in [("roi", &roi), ("hand", &hands), ("head", &head)] {
            if let Some(&j) = group.iter().find(|&&j| j >= k) {
                return Err(Error::InvalidConfig(format!("{} joint {} out of range for {} joints", what, j, k)));
            }
        }
        Ok(Self {
            k,
            edges,
            roi,
            hands,
            head,
        })
    }

    /// The body layout truncated or extended to `k` joints. Joints past the
    /// 17 body joints hang off the nose and the two wrists in turn and join
    /// the corresponding head or hand group.
    pub fn toy(k: usize) -> Self {
        assert!(k >= 1, "topology needs at least one joint");
        let mut edges: Vec<(usize, usize)> = BODY17_EDGES.iter().copied().filter(|&(i, j)| i < k && j < k).collect();
        let mut head: Vec<usize> = (0..5.min(k)).collect();
        let mut hands: Vec<usize> = [9, 10].into_iter().filter(|&j| j < k).collect();
        let roi = [5, 6, 11, 12].into_iter().filter(|&j| j < k).collect();
        for j in 17..k {
            let anchor = EXTRA_ANCHORS[(j - 17) % EXTRA_ANCHORS.len()];
            edges.push((anchor, j));
            if anchor == 0 {
                head.push(j);
            } else {
                hands.push(j);
            }
        }
        Self {
            k,
            edges,
            roi,
            hands,
            head,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn roi_joints(&self) -> &[usize] {
        &self.roi
    }

    pub fn hand_joints(&self) -> &[usize] {
        &self.hands
    }

    pub fn head_joints(&self) -> &[usize] {
        &self.head
    }

    pub fn without_edges(&self) -> Self {
        Self {
            edges: Vec::new(),
            ..self.clone()
        }
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    /// `D^{-1/2} (A + I) D^{-1/2}` as a `[k, k]` matrix.
    pub fn normalized_adjacency(&self) -> Tensor {
        let k = self.k;
        let mut a = vec![0.0; k * k];
        for i in 0..k {
            a[i * k + i] = 1.0;
        }
        for &(i, j) in &self.edges {
            a[i * k + j] = 1.0;
            a[j * k + i] = 1.0;
        }
        let deg: Vec<f64> = (0..k).map(|i| a[i * k..(i + 1) * k].iter().sum()).collect();
        for i in 0..k {
            for j in 0..k {
                if a[i * k + j] != 0.0 {
                    a[i * k + j] /= math::sqrt(deg[i] * deg[j]);
                }
            }
        }
        Tensor::matrix(k, k, a)
    }

    /// Whether every joint is reachable from joint 0 along edges.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.k];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_layout_is_connected() {
        let t = Topology::toy(17);
        assert!(t.is_connected());
        assert_eq!(t.hand_joints(), &[9, 10]);
        assert_eq!(t.head_joints(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn extended_layout_attaches_extras() {
        let t = Topology::toy(23);
        assert!(t.is_connected());
        assert_eq!(t.head_joints().len(), 7);
        assert_eq!(t.hand_joints().len(), 6);
    }

    #[test]
    fn adjacency_is_symmetric_with_unit_diagonal_when_isolated() {
        let t = Topology::toy(17);
        let a = t.normalized_adjacency();
        for i in 0..17 {
            for j in 0..17 {
                assert_eq!(a.get2(i, j), a.get2(j, i));
            }
        }
        assert_eq!(t.without_edges().normalized_adjacency(), Tensor::identity(17));
    }

    #[test]
    fn bad_edge_rejected() {
        assert!(Topology::new(3, vec![(0, 3)], vec![], vec![], vec![]).is_err());
    }
}
