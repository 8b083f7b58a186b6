//! Binary indexed tree over nonnegative counts.
//!
//! Nodes are stored as `i32` to halve the memory footprint; every partial
//! sum must fit in that range.

#[derive(Clone, Debug, Default)]
pub(crate) struct Fenwick {
    tree: Vec<i32>,
    total: i64,
}

impl Fenwick {
    pub(crate) fn from_counts<I: IntoIterator<Item = i64>>(counts: I) -> Self {
        let mut tree: Vec<i32> = std::iter::once(0)
            .chain(counts.into_iter().map(|c| i32::try_from(c).expect("count fits in i32")))
            .collect();
        let total = tree.iter().map(|&c| c as i64).sum();
        let n = tree.len() - 1;
        for i in 1..=n {
            let j = i + (i & i.wrapping_neg());
            if j <= n {
                tree[j] += tree[i];
            }
        }
        Fenwick { tree, total }
    }

    pub(crate) fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub(crate) fn total(&self) -> i64 {
        self.total
    }

    pub(crate) fn add(&mut self, index: usize, delta: i64) {
        self.total += delta;
        let n = self.len();
        let mut i = index + 1;
        while i <= n {
            self.tree[i] += delta as i32;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over `[0, end)`.
    pub(crate) fn prefix(&self, end: usize) -> i64 {
        let mut i = end.min(self.len());
        let mut s = 0;
        while i > 0 {
            s += self.tree[i] as i64;
            i &= i - 1;
        }
        s
    }

    /// Sum over `[lo, hi)`, clamped to the tree.
    pub(crate) fn range(&self, lo: usize, hi: usize) -> i64 {
        if hi <= lo {
            return 0;
        }
        self.prefix(hi) - self.prefix(lo)
    }

    /// Index of the `k`-th unit of mass (1-based `k`), i.e. the smallest
    /// `i` with `prefix(i + 1) >= k`.
    pub(crate) fn find_kth(&self, k: i64) -> usize {
        debug_assert!(k >= 1 && k <= self.total);
        let n = self.len();
        let mut pos = 0usize;
        let mut rem = k;
        let mut step = if n == 0 { 0 } else { 1usize << (usize::BITS - 1 - n.leading_zeros()) };
        while step > 0 {
            let next = pos + step;
            if next <= n && (self.tree[next] as i64) < rem {
                pos = next;
                rem -= self.tree[next] as i64;
            }
            step >>= 1;
        }
        pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_and_kth_match_naive() {
        let counts = [0i64, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1];
        let mut f = Fenwick::from_counts(counts.iter().copied());
        assert_eq!(f.total(), 6);
        for end in 0..=counts.len() {
            assert_eq!(f.prefix(end), counts[..end].iter().sum::<i64>());
        }
        let ones: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] == 1).collect();
        for (k, &idx) in ones.iter().enumerate() {
            assert_eq!(f.find_kth(k as i64 + 1), idx);
        }
        f.add(3, 1);
        assert_eq!(f.total(), 7);
        assert_eq!(f.find_kth(3), 3);
        assert_eq!(f.range(2, 5), 3);
    }
}
