//! Round-robin user clustering for FD-NOMA.

/// Splits users into `ceil(K / u_max)` clusters.
///
/// Users are ranked by descending CNR (ties: lower id first) and dealt
/// round-robin, so the `N` strongest users become the cluster heads.
/// Returned clusters hold user ids in rank order.
pub fn cluster_users(cnr: &[f64], u_max: usize) -> Vec<Vec<usize>> {
    assert!(u_max >= 1, "u_max must be at least 1");
    let k = cnr.len();
    if k == 0 {
        return Vec::new();
    }
    let n = k.div_ceil(u_max);
    let mut rank: Vec<usize> = (0..k).collect();
    rank.sort_by(|&a, &b| cnr[b].total_cmp(&cnr[a]).then(a.cmp(&b)));
    let mut clusters = vec![Vec::with_capacity(u_max); n];
    for (r, &user) in rank.iter().enumerate() {
        clusters[r % n].push(user);
    }
    clusters
}
