//! Explicit m-ary search tree shapes.
//!
//! A node holding `size >= m - 1` keys stores `m - 1` of them and has exactly
//! `m` subtrees whose sizes sum to `size - (m - 1)`; smaller nodes are
//! terminal. Only shapes are represented, never key values.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tree {
    pub size: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Tree>,
}

impl Tree {
    pub fn terminal(size: usize) -> Self {
        Tree {
            size,
            children: Vec::new(),
        }
    }

    /// Canonical string: terminal nodes print their size, full nodes print
    /// their children in order, parenthesised.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        self.write_canonical(&mut out);
        out
    }

    fn write_canonical(&self, out: &mut String) {
        if self.children.is_empty() {
            out.push_str(&self.size.to_string());
        } else {
            out.push('(');
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                c.write_canonical(out);
            }
            out.push(')');
        }
    }

    /// Checks the size bookkeeping of every node for branching factor `m`.
    pub fn is_consistent(&self, m: usize) -> bool {
        if self.size + 1 < m {
            return self.children.is_empty();
        }
        self.children.len() == m
            && self.children.iter().map(|c| c.size).sum::<usize>() == self.size - (m - 1)
            && self.children.iter().all(|c| c.is_consistent(m))
    }

    /// Value of the additive functional with toll `toll(n)` for full nodes
    /// and `initial(n)` for terminal nodes.
    pub fn functional<V, T, I>(&self, m: usize, toll: &T, initial: &I) -> V
    where
        V: std::ops::Add<Output = V>,
        T: Fn(usize) -> V,
        I: Fn(usize) -> V,
    {
        if self.size + 1 < m {
            return initial(self.size);
        }
        let mut acc = toll(self.size);
        for c in &self.children {
            acc = acc + c.functional(m, toll, initial);
        }
        acc
    }
}

/// Every tree on `n` keys, built structurally from all compositions of the
/// subtree sizes. Intended for small `n` only.
pub fn enumerate_trees(m: usize, n: usize) -> Vec<Tree> {
    let mut memo: Vec<Vec<Tree>> = Vec::new();
    for k in 0..=n {
        let trees = if k + 1 < m {
            vec![Tree::terminal(k)]
        } else {
            let mut out = Vec::new();
            let mut parts = vec![0usize; m];
            compositions(k - (m - 1), m, 0, &mut parts, &mut |p| {
                let mut acc: Vec<Vec<Tree>> = vec![Vec::new()];
                for &sz in p {
                    let mut next = Vec::new();
                    for prefix in &acc {
                        for t in &memo[sz] {
                            let mut v = prefix.clone();
                            v.push(t.clone());
                            next.push(v);
                        }
                    }
                    acc = next;
                }
                for children in acc {
                    out.push(Tree { size: k, children });
                }
            });
            out
        };
        memo.push(trees);
    }
    memo.pop().unwrap_or_default()
}

/// Calls `f` with every composition of `total` into `parts.len()` nonnegative parts.
pub fn compositions(total: usize, m: usize, idx: usize, parts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if idx + 1 == m {
        parts[idx] = total;
        f(parts);
        return;
    }
    for j in 0..=total {
        parts[idx] = j;
        compositions(total - j, m, idx + 1, parts, f);
    }
}
