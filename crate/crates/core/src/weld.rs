//! Disjoint-set partition of parts into rigidly welded groups.

use std::collections::BTreeMap;

/// Union-find over a fixed, sorted set of part ids.
///
/// The public root of a group is always its lexicographically smallest
/// member, so the partition reads the same regardless of the order in which
/// unions happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeldPartition {
    ids: Vec<String>,
    parent: Vec<usize>,
    size: Vec<usize>,
    // Smallest member index, valid at internal roots only.
    least: Vec<usize>,
}

impl WeldPartition {
    /// Builds singleton groups. `ids` is sorted and deduplicated.
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        ids.sort();
        ids.dedup();
        let n = ids.len();
        Self { ids, parent: (0..n).collect(), size: vec![1; n], least: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index(id).is_some()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn index(&self, id: &str) -> Option<usize> {
        self.ids.binary_search_by(|p| p.as_str().cmp(id)).ok()
    }

    fn find_index(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    fn compress(&mut self, i: usize) -> usize {
        let root = self.find_index(i);
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Canonical group root (smallest member id) of `id`.
    pub fn root(&self, id: &str) -> Option<&str> {
        let i = self.index(id)?;
        let r = self.find_index(i);
        Some(&self.ids[self.least[r]])
    }

    pub fn same_group(&self, a: &str, b: &str) -> bool {
        match (self.index(a), self.index(b)) {
            (Some(a), Some(b)) => self.find_index(a) == self.find_index(b),
            _ => false,
        }
    }

    /// Merges the groups of `a` and `b`. Returns `false` if they were already
    /// one group or either id is unknown.
    pub fn union(&mut self, a: &str, b: &str) -> bool {
        let (Some(a), Some(b)) = (self.index(a), self.index(b)) else {
            return false;
        };
        let (ra, rb) = (self.compress(a), self.compress(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.least[big] = self.least[big].min(self.least[small]);
        true
    }

    /// Members of the group containing `id`, sorted.
    pub fn members(&self, id: &str) -> Vec<&str> {
        let Some(i) = self.index(id) else {
            return Vec::new();
        };
        let r = self.find_index(i);
        (0..self.ids.len())
            .filter(|&j| self.find_index(j) == r)
            .map(|j| self.ids[j].as_str())
            .collect()
    }

    pub fn group_size(&self, id: &str) -> usize {
        self.index(id).map_or(0, |i| self.size[self.find_index(i)])
    }

    pub fn group_count(&self) -> usize {
        (0..self.ids.len()).filter(|&i| self.parent[i] == i).count()
    }

    /// Part id to canonical root, for every part.
    pub fn root_map(&self) -> BTreeMap<&str, &str> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.ids[self.least[self.find_index(i)]].as_str()))
            .collect()
    }

    /// All groups as sorted member lists, ordered by root.
    pub fn groups(&self) -> Vec<Vec<&str>> {
        let mut by_root: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for (i, id) in self.ids.iter().enumerate() {
            by_root.entry(self.least[self.find_index(i)]).or_default().push(id.as_str());
        }
        by_root.into_values().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn singletons() {
        let w = WeldPartition::new(["b", "a", "c"]);
        assert_eq!(w.group_count(), 3);
        assert_eq!(w.root("b"), Some("b"));
        assert!(!w.same_group("a", "b"));
        assert_eq!(w.root("zzz"), None);
    }

    #[test]
    fn root_is_least_member() {
        let mut w = WeldPartition::new(["d", "c", "b", "a"]);
        assert!(w.union("d", "c"));
        assert!(w.union("c", "b"));
        assert_eq!(w.root("d"), Some("b"));
        assert!(w.union("a", "d"));
        assert_eq!(w.root("c"), Some("a"));
        assert!(!w.union("b", "c"));
        assert_eq!(w.members("d"), vec!["a", "b", "c", "d"]);
        assert_eq!(w.group_count(), 1);
    }

    #[test]
    fn unknown_union_is_rejected() {
        let mut w = WeldPartition::new(["a"]);
        assert!(!w.union("a", "x"));
        assert!(w.members("x").is_empty());
    }

    proptest! {
        #[test]
        fn partition_independent_of_union_order(
            edges in proptest::collection::vec((0usize..8, 0usize..8), 0..12)
        ) {
            let ids: Vec<String> = (0..8).map(|i| format!("p{i}")).collect();
            let mut fwd = WeldPartition::new(ids.clone());
            let mut rev = WeldPartition::new(ids.clone());
            for &(a, b) in &edges {
                fwd.union(&ids[a], &ids[b]);
            }
            for &(a, b) in edges.iter().rev() {
                rev.union(&ids[b], &ids[a]);
            }
            prop_assert_eq!(fwd.root_map(), rev.root_map());
            prop_assert_eq!(fwd.groups(), rev.groups());
            let total: usize = fwd.groups().iter().map(Vec::len).sum();
            prop_assert_eq!(total, 8);
        }
    }
}
