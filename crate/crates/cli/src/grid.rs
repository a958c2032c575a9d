//! Parsing of `γ` grid specifications.

use anyhow::{bail, Context, Result};

fn power_of_two(s: &str) -> Option<i32> {
    s.strip_prefix("2^")?.parse().ok()
}

fn value(s: &str) -> Result<f64> {
    let v = match power_of_two(s) {
        Some(e) => 2f64.powi(e),
        None => s.parse().with_context(|| format!("bad grid value `{s}`"))?,
    };
    if !(v > 0.0 && v.is_finite()) {
        bail!("grid values must be positive, got `{s}`");
    }
    Ok(v)
}

/// Accepts `2^a..2^b:step2^c` (step defaults to `2^1`) or a comma list of
/// numbers and powers of two.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if let Some((range, step)) = spec
        .split_once("..")
        .map(|(lo, rest)| match rest.split_once(":step") {
            Some((hi, step)) => ((lo, hi), Some(step)),
            None => ((lo, rest), None),
        })
    {
        let (lo, hi) = range;
        let (Some(a), Some(b)) = (power_of_two(lo.trim()), power_of_two(hi.trim())) else {
            bail!("range bounds must look like 2^k, got `{spec}`");
        };
        let c = match step {
            Some(s) => power_of_two(s.trim())
                .with_context(|| format!("step must look like 2^k, got `{s}`"))?,
            None => 1,
        };
        if c <= 0 || a > b {
            bail!("empty or non-increasing grid `{spec}`");
        }
        return Ok((a..=b).step_by(c as usize).map(|e| 2f64.powi(e)).collect());
    }
    let values = spec
        .split(',')
        .map(|s| value(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        bail!("empty grid");
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_syntax() {
        let g = parse_grid("2^-12..2^12:step2^2").unwrap();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 2f64.powi(-12));
        assert_eq!(g[1], 2f64.powi(-10));
        assert_eq!(g[12], 4096.0);
        assert_eq!(parse_grid("2^0..2^2").unwrap(), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn list_syntax() {
        assert_eq!(parse_grid("0.5, 2^3,1").unwrap(), vec![0.5, 8.0, 1.0]);
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "abc", "2^3..2^1", "-1,2", "2^0..2^4:step2^0", "3..9"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}
