//! Suffix array, LCP array and longest-previous-factor table.
//!
//! `longest_previous_factor(s)[i]` is the length of the longest prefix of
//! `s[i..]` that also starts at some `j < i`. Occurrences may overlap `i`,
//! which is exactly the self-referential copy allowed by an LZ76 reproduction.

/// Suffix array by prefix doubling over cyclic shifts of `s` plus a sentinel.
///
/// O(n log n) with counting sorts. The sentinel is dropped from the result.
pub fn suffix_array(s: &[u8]) -> Vec<u32> {
    let n = s.len() + 1;
    if n == 1 {
        return Vec::new();
    }
    assert!(n <= u32::MAX as usize, "string too long for u32 indices");

    // Symbols shift by one so that 0 is the unique smallest sentinel.
    let sym = |i: usize| if i < s.len() { s[i] as usize + 1 } else { 0 };

    let mut p = vec![0u32; n];
    let mut c = vec![0u32; n];
    let mut cnt = vec![0usize; 257.max(n)];

    for i in 0..n {
        cnt[sym(i)] += 1;
    }
    for a in 1..257 {
        cnt[a] += cnt[a - 1];
    }
    for i in (0..n).rev() {
        let a = sym(i);
        cnt[a] -= 1;
        p[cnt[a]] = i as u32;
    }
    let mut classes = 1u32;
    c[p[0] as usize] = 0;
    for i in 1..n {
        if sym(p[i] as usize) != sym(p[i - 1] as usize) {
            classes += 1;
        }
        c[p[i] as usize] = classes - 1;
    }

    let mut pn = vec![0u32; n];
    let mut cn = vec![0u32; n];
    let mut h = 1usize;
    while h < n && (classes as usize) < n {
        for i in 0..n {
            pn[i] = ((p[i] as usize + n - h) % n) as u32;
        }
        cnt[..classes as usize].fill(0);
        for &x in &pn {
            cnt[c[x as usize] as usize] += 1;
        }
        for a in 1..classes as usize {
            cnt[a] += cnt[a - 1];
        }
        for &x in pn.iter().rev() {
            let a = c[x as usize] as usize;
            cnt[a] -= 1;
            p[cnt[a]] = x;
        }
        cn[p[0] as usize] = 0;
        classes = 1;
        for i in 1..n {
            let cur = (c[p[i] as usize], c[(p[i] as usize + h) % n]);
            let prev = (c[p[i - 1] as usize], c[(p[i - 1] as usize + h) % n]);
            if cur != prev {
                classes += 1;
            }
            cn[p[i] as usize] = classes - 1;
        }
        std::mem::swap(&mut c, &mut cn);
        h <<= 1;
    }

    // p[0] is always the sentinel.
    p.remove(0);
    p
}

/// Kasai's algorithm: `lcp[r]` is the longest common prefix of the suffixes
/// ranked `r - 1` and `r`; `lcp[0] == 0`.
pub fn lcp_array(s: &[u8], sa: &[u32]) -> Vec<u32> {
    let n = s.len();
    let mut rank = vec![0u32; n];
    for (r, &i) in sa.iter().enumerate() {
        rank[i as usize] = r as u32;
    }
    let mut lcp = vec![0u32; n];
    let mut h = 0usize;
    for i in 0..n {
        let r = rank[i] as usize;
        if r == 0 {
            h = 0;
            continue;
        }
        let j = sa[r - 1] as usize;
        while i + h < n && j + h < n && s[i + h] == s[j + h] {
            h += 1;
        }
        lcp[r] = h as u32;
        h = h.saturating_sub(1);
    }
    lcp
}

/// Longest previous factor for every position, in linear time from SA + LCP.
///
/// For each rank the nearest ranks on either side holding a smaller text
/// position are found with a monotone stack; the LCP with each is the running
/// minimum of the LCP array between them.
pub fn longest_previous_factor(s: &[u8]) -> Vec<u32> {
    let n = s.len();
    let sa = suffix_array(s);
    let lcp = lcp_array(s, &sa);
    let mut lpf = vec![0u32; n];

    // Stack entries: (text position, lcp with the entry above or with the current rank).
    let mut stack: Vec<(u32, u32)> = Vec::with_capacity(64);
    for r in 0..n {
        if let Some(top) = stack.last_mut() {
            top.1 = lcp[r];
        }
        while let Some(&(pos, gap)) = stack.last() {
            if pos < sa[r] {
                break;
            }
            stack.pop();
            if let Some(top) = stack.last_mut() {
                top.1 = top.1.min(gap);
            }
        }
        lpf[sa[r] as usize] = stack.last().map_or(0, |t| t.1);
        stack.push((sa[r], 0));
    }

    stack.clear();
    for r in (0..n).rev() {
        if let Some(top) = stack.last_mut() {
            top.1 = lcp[r + 1];
        }
        while let Some(&(pos, gap)) = stack.last() {
            if pos < sa[r] {
                break;
            }
            stack.pop();
            if let Some(top) = stack.last_mut() {
                top.1 = top.1.min(gap);
            }
        }
        let right = stack.last().map_or(0, |t| t.1);
        let slot = &mut lpf[sa[r] as usize];
        *slot = (*slot).max(right);
        stack.push((sa[r], 0));
    }
    lpf
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_sa(s: &[u8]) -> Vec<u32> {
        let mut sa: Vec<u32> = (0..s.len() as u32).collect();
        sa.sort_by(|&a, &b| s[a as usize..].cmp(&s[b as usize..]));
        sa
    }

    fn naive_lpf(s: &[u8]) -> Vec<u32> {
        (0..s.len())
            .map(|i| {
                (0..i)
                    .map(|j| {
                        s[i..]
                            .iter()
                            .zip(&s[j..])
                            .take_while(|(a, b)| a == b)
                            .count() as u32
                    })
                    .max()
                    .unwrap_or(0)
            })
            .collect()
    }

    #[test]
    fn banana() {
        assert_eq!(suffix_array(b"banana"), vec![5, 3, 1, 0, 4, 2]);
        let sa = suffix_array(b"banana");
        assert_eq!(lcp_array(b"banana", &sa), vec![0, 1, 3, 0, 0, 2]);
    }

    #[test]
    fn empty_and_single() {
        assert!(suffix_array(b"").is_empty());
        assert_eq!(suffix_array(b"z"), vec![0]);
        assert_eq!(longest_previous_factor(b"z"), vec![0]);
        assert!(longest_previous_factor(b"").is_empty());
    }

    #[test]
    fn lpf_overlapping_run() {
        assert_eq!(longest_previous_factor(b"aaaa"), vec![0, 3, 2, 1]);
        assert_eq!(longest_previous_factor(b"abab"), vec![0, 0, 2, 1]);
    }

    #[test]
    fn handles_symbol_255_and_0() {
        let s = [255u8, 0, 255, 0, 0, 255];
        assert_eq!(suffix_array(&s), naive_sa(&s));
        assert_eq!(longest_previous_factor(&s), naive_lpf(&s));
    }

    proptest! {
        #[test]
        fn sa_matches_sort(s in proptest::collection::vec(0u8..4, 0..200)) {
            prop_assert_eq!(suffix_array(&s), naive_sa(&s));
        }

        #[test]
        fn lpf_matches_brute_force(s in proptest::collection::vec(0u8..3, 0..150)) {
            prop_assert_eq!(longest_previous_factor(&s), naive_lpf(&s));
        }
    }
}
