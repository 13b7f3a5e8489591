//! Cached Gauss–Legendre rules.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

/// Nodes and weights on the reference interval [-1, 1].
pub type Rule = Arc<Vec<(f64, f64)>>;

static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();

/// The `n`-point Gauss–Legendre rule on [-1, 1], sorted by node.
pub fn rule(n: usize) -> Rule {
    let n = n.max(1);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("gauss cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let quad = GaussLegendre::new(NonZeroUsize::new(n).unwrap());
            let mut pairs = quad.as_node_weight_pairs().to_vec();
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            Arc::new(pairs)
        })
        .clone()
}

/// Nodes and weights of the `n`-point rule mapped to [a, b].
pub fn mapped(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule(n)
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Integrates `f` over [a, b] with `n` Gauss–Legendre points.
pub fn integrate<F: FnMut(f64) -> f64>(n: usize, a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule(n).iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let v = integrate(4, 0.0, 2.0, |x| x.powi(7));
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-12);
        let nodes = rule(9);
        assert!(nodes.windows(2).all(|p| p[0].0 < p[1].0));
    }
}
