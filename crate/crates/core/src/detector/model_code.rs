use crate::error::{invalid, Result};

const RISSANEN_CONSTANT: f64 = 2.865;

/// Rissanen's universal code length for a positive integer, in nats:
/// `ln 2.865 + ln k + ln ln k + ...`, keeping only the positive terms.
pub fn model_code_len(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("model code length is defined for k >= 1"));
    }
    let mut total = RISSANEN_CONSTANT.ln();
    let mut term = k as f64;
    loop {
        term = term.ln();
        if term <= 0.0 {
            break;
        }
        total += term;
    }
    Ok(total)
}

/// Transition probability estimate `(N_t + 1/2) / (t + 1)`.
pub fn kt_change_probability(n_changes_so_far: usize, t: usize) -> Result<f64> {
    if n_changes_so_far > t {
        return Err(invalid(format!("{n_changes_so_far} changes before t = {t}")));
    }
    Ok((n_changes_so_far as f64 + 0.5) / (t as f64 + 1.0))
}

/// `L(k1, k2) = L(k1) + L(k2 | k1)` where the conditional part codes "same
/// model" with probability `1 - alpha` and each of the other `k_max - 1`
/// models with `alpha / (k_max - 1)`.
pub fn model_pair_code_len(
    k1: usize,
    k2: usize,
    n_changes_so_far: usize,
    t: usize,
    k_max: usize,
) -> Result<f64> {
    let alpha = kt_change_probability(n_changes_so_far, t)?;
    let transition = if k1 == k2 {
        -(1.0 - alpha).ln()
    } else {
        if k_max < 2 || k1 > k_max || k2 > k_max {
            return Err(invalid(format!("transition {k1} -> {k2} impossible with k_max = {k_max}")));
        }
        -(alpha / (k_max - 1) as f64).ln()
    };
    Ok(model_code_len(k1)? + transition)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_code_examples() {
        assert!((model_code_len(1).unwrap() - 1.0526).abs() < 1e-4);
        assert!((model_code_len(2).unwrap() - 1.7457).abs() < 1e-4);
        assert!((model_code_len(3).unwrap() - 2.2452).abs() < 1e-4);
        // ln ln ln 16 > 0, so three iterated terms
        let expected = 2.865f64.ln() + 16f64.ln() + 16f64.ln().ln() + 16f64.ln().ln().ln();
        assert!((model_code_len(16).unwrap() - expected).abs() < 1e-12);
        assert!(model_code_len(0).is_err());
    }

    #[test]
    fn pair_code_examples() {
        let same = model_pair_code_len(3, 3, 0, 9, 10).unwrap();
        assert!((same - 2.2965).abs() < 1e-4, "{same}");
        let diff = model_pair_code_len(3, 4, 0, 9, 10).unwrap();
        assert!((diff - 7.4382).abs() < 1e-4, "{diff}");
    }

    #[test]
    fn pair_code_boundaries() {
        for t in [0usize, 1, 5, 100] {
            assert!(model_pair_code_len(2, 2, t, t, 10).unwrap().is_finite());
            assert!(model_pair_code_len(2, 5, t, t, 10).unwrap().is_finite());
        }
        assert!(model_pair_code_len(2, 2, 3, 2, 10).is_err());
        assert!(model_pair_code_len(1, 2, 0, 3, 1).is_err());
        assert!(model_pair_code_len(1, 1, 0, 3, 1).is_ok());
    }
}
