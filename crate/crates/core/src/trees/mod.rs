//! Multitype plane trees: storage, enumeration, sampling and Kesten-type
//! limit balls.

pub mod enumerate;
pub mod kesten;
pub mod sample;

use std::fmt;

use crate::error::{Error, Result};

pub use enumerate::{enumerate_conditioned, enumerate_conditioned_f64, enumerate_with_weights, exact_weights, WeightedEnsemble};
pub use kesten::{build_kesten_spec, KestenBall, KestenBallSampler, KestenSpec};
pub use sample::{BgwSampler, ConditionedSampler, ConditionedOptions, Sampled};

/// A `K`-type plane tree stored in depth-first (preorder) arrays.
///
/// Children of a node are contiguous in `child_list`, in birth order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TypedTree {
    num_types: usize,
    types: Vec<usize>,
    parent: Vec<Option<usize>>,
    child_start: Vec<usize>,
    child_list: Vec<usize>,
    counts: Vec<usize>,
}

impl TypedTree {
    /// Builds a tree from preorder types and outdegrees.
    pub fn from_preorder(num_types: usize, types: Vec<usize>, outdegrees: &[usize]) -> Result<Self> {
        let n = types.len();
        if n == 0 || outdegrees.len() != n {
            return Err(Error::InvalidModel("preorder arrays must be nonempty and of equal length".into()));
        }
        if let Some(&t) = types.iter().find(|&&t| t >= num_types) {
            return Err(Error::InvalidModel(format!("type {} out of range 1..={num_types}", t + 1)));
        }
        let mut parent = vec![None; n];
        let mut child_start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for &d in outdegrees {
            child_start.push(acc);
            acc += d;
        }
        child_start.push(acc);
        if acc != n - 1 {
            return Err(Error::InvalidModel(format!(
                "outdegrees sum to {acc}, a tree on {n} nodes needs {}",
                n - 1
            )));
        }
        let mut child_list = vec![usize::MAX; acc];
        // stack of (node, next child slot)
        let mut stack: Vec<(usize, usize)> = Vec::new();
        for v in 0..n {
            if v > 0 {
                let Some(top) = stack.last_mut() else {
                    return Err(Error::InvalidModel("preorder sequence describes a forest".into()));
                };
                let (p, slot) = *top;
                parent[v] = Some(p);
                child_list[child_start[p] + slot] = v;
                top.1 += 1;
                if top.1 == outdegrees[p] {
                    stack.pop();
                }
            }
            if outdegrees[v] > 0 {
                stack.push((v, 0));
            }
        }
        if !stack.is_empty() {
            return Err(Error::InvalidModel("preorder sequence ends before all children appear".into()));
        }
        let mut counts = vec![0; num_types];
        for &t in &types {
            counts[t] += 1;
        }
        Ok(TypedTree { num_types, types, parent, child_start, child_list, counts })
    }

    pub fn single(num_types: usize, root_type: usize) -> Self {
        TypedTree::from_preorder(num_types, vec![root_type], &[0]).expect("one node is a tree")
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn root_type(&self) -> usize {
        self.types[0]
    }

    pub fn node_type(&self, v: usize) -> usize {
        self.types[v]
    }

    pub fn types(&self) -> &[usize] {
        &self.types
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.child_list[self.child_start[v]..self.child_start[v + 1]]
    }

    pub fn outdegree(&self, v: usize) -> usize {
        self.child_start[v + 1] - self.child_start[v]
    }

    /// `N_i(T)` for every type.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn depths(&self) -> Vec<usize> {
        let mut d = vec![0; self.len()];
        for v in 1..self.len() {
            d[v] = d[self.parent[v].expect("non-root")] + 1;
        }
        d
    }

    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    /// Nodes at depth at most `radius`, types kept.
    pub fn ball(&self, radius: usize) -> TypedTree {
        let depths = self.depths();
        let mut types = Vec::new();
        let mut outdeg = Vec::new();
        for v in 0..self.len() {
            if depths[v] <= radius {
                types.push(self.types[v]);
                outdeg.push(if depths[v] < radius { self.outdegree(v) } else { 0 });
            }
        }
        TypedTree::from_preorder(self.num_types, types, &outdeg).expect("a ball is a tree")
    }

    /// Preorder `type:outdegree` tokens, types numbered from 1.
    pub fn serialize(&self) -> String {
        let mut s = String::with_capacity(4 * self.len());
        for v in 0..self.len() {
            if v > 0 {
                s.push(' ');
            }
            s.push_str(&format!("{}:{}", self.types[v] + 1, self.outdegree(v)));
        }
        s
    }

    pub fn parse(num_types: usize, text: &str) -> Result<Self> {
        let mut types = Vec::new();
        let mut outdeg = Vec::new();
        for tok in text.split_whitespace() {
            let bad = || Error::InvalidModel(format!("bad tree token {tok:?}"));
            let (t, d) = tok.split_once(':').ok_or_else(bad)?;
            let t: usize = t.parse().map_err(|_| bad())?;
            if t == 0 {
                return Err(bad());
            }
            types.push(t - 1);
            outdeg.push(d.parse().map_err(|_| bad())?);
        }
        TypedTree::from_preorder(num_types, types, &outdeg)
    }
}

impl fmt::Display for TypedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn tree(s: &str) -> TypedTree {
        TypedTree::parse(2, s).unwrap()
    }

    #[test]
    fn structure() {
        let t = tree("1:2 2:1 1:0 1:0");
        assert_eq!(t.len(), 4);
        assert_eq!(t.children(0), &[1, 3]);
        assert_eq!(t.children(1), &[2]);
        assert_eq!(t.parent(3), Some(0));
        assert_eq!(t.counts(), &[3, 1]);
        assert_eq!(t.height(), 2);
        assert_eq!(t.serialize(), "1:2 2:1 1:0 1:0");
    }

    #[test]
    fn malformed() {
        assert!(TypedTree::parse(2, "1:1").is_err());
        assert!(TypedTree::parse(2, "1:0 1:0").is_err());
        assert!(TypedTree::parse(2, "3:0").is_err());
        assert!(TypedTree::parse(2, "0:0").is_err());
        assert!(TypedTree::parse(2, "1-0").is_err());
    }

    #[test]
    fn balls() {
        let t = tree("1:2 2:1 1:0 1:0");
        assert_eq!(t.ball(0).serialize(), "1:0");
        assert_eq!(t.ball(1).serialize(), "1:2 2:0 1:0");
        assert_eq!(t.ball(5), t);
    }

    /// All 2-type plane trees with exactly `n` nodes.
    fn all_trees(n: usize) -> Vec<TypedTree> {
        fn rec(n: usize, types: &mut Vec<usize>, deg: &mut Vec<usize>, open: usize, out: &mut Vec<TypedTree>) {
            let placed = types.len();
            if placed == n {
                if open == 0 {
                    out.push(TypedTree::from_preorder(2, types.clone(), deg).unwrap());
                }
                return;
            }
            if open == 0 && placed > 0 {
                return;
            }
            for t in 0..2 {
                for d in 0..n - placed {
                    // slots still to fill after this node
                    let new_open = if placed == 0 { d } else { open - 1 + d };
                    if placed + 1 + new_open > n {
                        break;
                    }
                    types.push(t);
                    deg.push(d);
                    rec(n, types, deg, new_open, out);
                    types.pop();
                    deg.pop();
                }
            }
        }
        let mut out = Vec::new();
        rec(n, &mut Vec::new(), &mut Vec::new(), 0, &mut out);
        out
    }

    #[test]
    fn serialization_is_injective_up_to_eight_nodes() {
        for n in 1..=8 {
            let trees = all_trees(n);
            // 2^n · Catalan(n−1) plane trees with n nodes and 2 types
            let catalan = [1usize, 1, 2, 5, 14, 42, 132, 429][n - 1];
            assert_eq!(trees.len(), catalan << n);
            let forms: HashSet<String> = trees.iter().map(TypedTree::serialize).collect();
            assert_eq!(forms.len(), trees.len());
            for t in &trees {
                assert_eq!(&TypedTree::parse(2, &t.serialize()).unwrap(), t);
            }
        }
    }
}
