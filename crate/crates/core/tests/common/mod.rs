//! Slow, obviously-correct reference implementations.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

/// Edit distance straight from the recursive definition, memoized.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&d) = memo.get(&(a.len(), b.len())) {
            return d;
        }
        let (ra, rb) = (&a[1..], &b[1..]);
        let d = if a[0] == b[0] {
            go(ra, rb, memo)
        } else {
            1 + go(ra, b, memo).min(go(a, rb, memo)).min(go(ra, rb, memo))
        };
        memo.insert((a.len(), b.len()), d);
        d
    }
    go(a, b, &mut HashMap::new())
}

fn is_subsequence<T: PartialEq>(needle: &[&T], hay: &[T]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Longest common subsequence length by trying every subsequence of the
/// shorter input.
pub fn lcs_brute<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16, "exhaustive search only for short inputs");
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let ones = mask.count_ones() as usize;
        if ones <= best {
            continue;
        }
        let sub: Vec<&T> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| &short[i]).collect();
        if is_subsequence(&sub, long) {
            best = ones;
        }
    }
    best
}

/// Per-symbol (tp, fp, fn) by multiset intersection.
pub fn bag_counts<T: Ord + Clone>(pred: &[T], truth: &[T]) -> BTreeMap<T, (usize, usize, usize)> {
    let mut pc: BTreeMap<T, usize> = BTreeMap::new();
    let mut tc: BTreeMap<T, usize> = BTreeMap::new();
    for p in pred {
        *pc.entry(p.clone()).or_default() += 1;
    }
    for t in truth {
        *tc.entry(t.clone()).or_default() += 1;
    }
    let mut out = BTreeMap::new();
    for k in pc.keys().chain(tc.keys()) {
        let (p, t) = (pc.get(k).copied().unwrap_or(0), tc.get(k).copied().unwrap_or(0));
        let tp = p.min(t);
        out.insert(k.clone(), (tp, p - tp, t - tp));
    }
    out
}

/// Connected components of the "shares a frame boundary ordering" graph:
/// two closed frame intervals are linked when each starts before the other
/// ends. Returned as sorted lists of input indices, sorted by first index.
pub fn overlap_components(spans: &[(u32, u32)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..spans.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..spans.len() {
        for j in 0..spans.len() {
            let (a, b) = (spans[i], spans[j]);
            if i != j && a.0 < b.1 && b.0 < a.1 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..spans.len() {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = comps.into_values().collect();
    out.sort();
    out
}

/// Most common value, larger on ties.
pub fn mode_larger(values: &[u32]) -> u32 {
    let mut best = (0usize, 0u32);
    for &v in values {
        let n = values.iter().filter(|&&w| w == v).count();
        if n > best.0 || (n == best.0 && v > best.1) {
            best = (n, v);
        }
    }
    best.1
}
