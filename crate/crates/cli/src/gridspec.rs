//! Grid flag grammar: `LO:HI:STEP` with inclusive endpoints (within 1e-12),
//! or an explicit comma-separated list.

use crate::CliError;

pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let usage = |msg: String| CliError::usage(format!("bad grid {spec:?}: {msg}"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(usage("expected LO:HI:STEP".into()));
        }
        let lo: f64 = parts[0].parse().map_err(|_| usage(format!("bad LO {:?}", parts[0])))?;
        let hi: f64 = parts[1].parse().map_err(|_| usage(format!("bad HI {:?}", parts[1])))?;
        let step: f64 =
            parts[2].parse().map_err(|_| usage(format!("bad STEP {:?}", parts[2])))?;
        if !step.is_finite() || step <= 0.0 {
            return Err(usage(format!("step {step} must be positive")));
        }
        if hi < lo {
            return Err(usage(format!("empty range {lo}..{hi}")));
        }
        let mut values = Vec::new();
        let mut i = 0u64;
        loop {
            let v = lo + step * i as f64;
            if v > hi + 1e-12 {
                break;
            }
            values.push(v);
            i += 1;
        }
        Ok(values)
    } else {
        spec.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("bad value {:?}", tok.trim())))
            })
            .collect()
    }
}

/// 17 significant digits, the artifact dialect for real-valued columns.
pub fn fmt_real(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_grammar_inclusive() {
        let g = parse_grid("0.05:0.35:0.1").unwrap();
        assert_eq!(g.len(), 4);
        assert!((g[3] - 0.35).abs() < 1e-12);
        assert_eq!(parse_grid("1:1:0.5").unwrap(), vec![1.0]);
    }

    #[test]
    fn list_grammar() {
        assert_eq!(parse_grid("0.5,2, 3.5").unwrap(), vec![0.5, 2.0, 3.5]);
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("2:1:0.5").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }
}
