//! Integer grids written as `2^10..2^17` (doubling), `8..1024` (doubling),
//! `1:16` (every integer) or comma lists such as `8,16,2^6`.

use anyhow::{anyhow, bail, Result};

fn parse_term(s: &str) -> Result<u64> {
    let s = s.trim();
    if let Some((b, e)) = s.split_once('^') {
        let b: u64 = b.trim().parse().map_err(|_| anyhow!("bad base in `{s}`"))?;
        let e: u32 = e.trim().parse().map_err(|_| anyhow!("bad exponent in `{s}`"))?;
        return b.checked_pow(e).ok_or_else(|| anyhow!("`{s}` overflows"));
    }
    s.parse().map_err(|_| anyhow!("`{s}` is not a nonnegative integer"))
}

pub fn parse_grid(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    let out = if let Some((a, b)) = spec.split_once("..") {
        let (mut n, end) = (parse_term(a)?, parse_term(b)?);
        if n == 0 {
            bail!("a doubling grid cannot start at 0");
        }
        let mut v = Vec::new();
        while n <= end {
            v.push(n);
            n *= 2;
        }
        v
    } else if let Some((a, b)) = spec.split_once(':') {
        (parse_term(a)?..=parse_term(b)?).collect()
    } else {
        spec.split(',').map(parse_term).collect::<Result<Vec<_>>>()?
    };
    if out.is_empty() {
        bail!("grid `{spec}` is empty");
    }
    if out.windows(2).any(|w| w[1] <= w[0]) {
        bail!("grid `{spec}` must be strictly increasing");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!(parse_grid("2^10..2^12").unwrap(), vec![1024, 2048, 4096]);
        assert_eq!(parse_grid("3..20").unwrap(), vec![3, 6, 12]);
        assert_eq!(parse_grid("2:5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_grid("8, 2^4,100").unwrap(), vec![8, 16, 100]);
        assert!(parse_grid("4,2").is_err());
        assert!(parse_grid("0..8").is_err());
        assert!(parse_grid("x").is_err());
    }
}
