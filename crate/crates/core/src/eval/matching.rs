use ndarray::Array2;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

/// Dominates any sum of secondary scores, so cardinality is maximized first.
const PAIR_WEIGHT: i64 = 1 << 40;
const SCORE_RESOLUTION: f64 = 1e6;

/// Maximum-weight assignment over a nonnegative integer matrix; pairs with
/// zero weight are dropped from the result. Returned sorted by row.
pub(crate) fn max_weight_pairs(weights: &Array2<i64>) -> Vec<(usize, usize)> {
    let (rows, cols) = weights.dim();
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    // kuhn_munkres wants no more rows than columns
    let transposed = rows > cols;
    let (r, c) = if transposed {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let m = Matrix::from_fn(r, c, |(i, j)| {
        if transposed {
            weights[[j, i]]
        } else {
            weights[[i, j]]
        }
    });
    let (_, assignment) = kuhn_munkres(&m);
    let mut pairs: Vec<(usize, usize)> = assignment
        .into_iter()
        .enumerate()
        .map(|(i, j)| if transposed { (j, i) } else { (i, j) })
        .filter(|&(i, j)| weights[[i, j]] > 0)
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Matching with the most pairs scoring `>= thresh`, and among those the
/// largest total score. Returns `(row, col)` pairs sorted by row.
pub fn max_threshold_matching(scores: &Array2<f64>, thresh: f64) -> Vec<(usize, usize)> {
    let weights = scores.mapv(|s| {
        if s >= thresh {
            PAIR_WEIGHT + (s * SCORE_RESOLUTION).round() as i64
        } else {
            0
        }
    });
    max_weight_pairs(&weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn beats_greedy() {
        // greedy takes (0, 0) at 0.9 and then nothing else clears 0.5
        let s = array![[0.9, 0.6, 0.0], [0.7, 0.0, 0.0], [0.0, 0.0, 0.1]];
        assert_eq!(max_threshold_matching(&s, 0.5), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn prefers_higher_total_at_equal_count() {
        let s = array![[0.6, 0.9], [0.9, 0.6]];
        assert_eq!(max_threshold_matching(&s, 0.5), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rectangular_and_empty() {
        let s = array![[0.8], [0.9], [0.2]];
        assert_eq!(max_threshold_matching(&s, 0.5), vec![(1, 0)]);
        assert!(max_threshold_matching(&Array2::zeros((0, 3)), 0.5).is_empty());
        assert!(max_threshold_matching(&Array2::zeros((2, 2)), 0.5).is_empty());
    }
}
