//! `alpha=0:0.3:0.05 beta=0:0.5:0.05` style grid axes.

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub alphas: Option<Vec<f64>>,
    pub betas: Option<Vec<f64>>,
}

/// Inclusive `start:stop:step` range, or a single value. Values are rounded
/// to 1e-9 so `0.15` prints as `0.15` rather than `0.15000000000000002`.
pub fn parse_axis(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("{s:?} is not a number"))
    };
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step <= 0.0 {
                return Err("step must be positive".into());
            }
            if stop < start {
                return Err("stop is below start".into());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if n > 10_000 {
                return Err(format!("{n} grid points is too many"));
            }
            Ok((0..n)
                .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                .collect())
        }
        _ => Err(format!("expected START:STOP:STEP or a single value, got {spec:?}")),
    }
}

pub fn parse_grid(specs: &[String]) -> Result<Grid, String> {
    let mut grid = Grid {
        alphas: None,
        betas: None,
    };
    for spec in specs {
        let (axis, range) = spec
            .split_once('=')
            .ok_or_else(|| format!("expected AXIS=START:STOP:STEP, got {spec:?}"))?;
        let values = parse_axis(range).map_err(|e| format!("{axis}: {e}"))?;
        let slot = match axis.trim() {
            "alpha" => &mut grid.alphas,
            "beta" => &mut grid.betas,
            other => return Err(format!("unknown axis {other:?} (expected alpha or beta)")),
        };
        if slot.replace(values).is_some() {
            return Err(format!("axis {axis} given twice"));
        }
    }
    Ok(grid)
}
