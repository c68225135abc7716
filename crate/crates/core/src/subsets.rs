//! Lexicographic enumeration of fixed-size subsets.

/// Iterator over all `k`-subsets of a sorted ground set, in lexicographic order
/// of positions.
#[derive(Debug, Clone)]
pub struct Combinations<'a> {
    ground: &'a [usize],
    idx: Vec<usize>,
    done: bool,
}

impl<'a> Combinations<'a> {
    pub fn new(ground: &'a [usize], k: usize) -> Self {
        Combinations {
            ground,
            idx: (0..k).collect(),
            done: k > ground.len(),
        }
    }
}

impl Iterator for Combinations<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.iter().map(|&i| self.ground[i]).collect();
        let n = self.ground.len();
        let k = self.idx.len();
        // advance the rightmost index that still has room
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// The family `V1(J)`: every `J`-subset of `ground` when `J <= |ground|`,
/// otherwise the single set `ground`.
#[derive(Debug, Clone)]
pub struct SubsetFamily {
    ground: Vec<usize>,
    size: usize,
}

impl SubsetFamily {
    pub fn new(ground: &[usize], j: usize) -> Self {
        let mut ground = ground.to_vec();
        ground.sort_unstable();
        ground.dedup();
        let size = j.min(ground.len());
        SubsetFamily { ground, size }
    }

    pub fn ground(&self) -> &[usize] {
        &self.ground
    }

    /// Size of every member.
    pub fn member_size(&self) -> usize {
        self.size
    }

    pub fn iter(&self) -> Combinations<'_> {
        Combinations::new(&self.ground, self.size)
    }

    pub fn len(&self) -> usize {
        binomial(self.ground.len(), self.size)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// `enumerate_subsets`: the members of `V1(J)` in lexicographic order.
pub fn enumerate_subsets(ground: &[usize], j: usize) -> Vec<Vec<usize>> {
    SubsetFamily::new(ground, j).iter().collect()
}

/// All subsets of `ground` with at most `max` elements, by size then
/// lexicographically.
pub fn up_to(ground: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut g = ground.to_vec();
    g.sort_unstable();
    (0..=max.min(g.len()))
        .flat_map(|k| Combinations::new(&g, k).collect::<Vec<_>>())
        .collect()
}

/// Sorted multisets of size `d` drawn from `0..p`.
pub fn multisets(p: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(d);
    fn rec(p: usize, d: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for x in start..p {
            cur.push(x);
            rec(p, d, x, cur, out);
            cur.pop();
        }
    }
    rec(p, d, 0, &mut cur, &mut out);
    out
}

/// Insert `x` into a sorted set, keeping it sorted.
pub(crate) fn with_element(set: &[usize], x: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(set.len() + 1);
    let pos = set.partition_point(|&y| y < x);
    out.extend_from_slice(&set[..pos]);
    out.push(x);
    out.extend_from_slice(&set[pos..]);
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
