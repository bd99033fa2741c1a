use super::SimError;

/// `y = a·ln(x) + b` fitted by least squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub rmse: f64,
}

impl LogFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x.ln() + self.b
    }

    /// Three lines: `a = …`, `b = …`, `rmse = …`.
    pub fn report(&self) -> String {
        format!(
            "a = {:.6}\nb = {:.6}\nrmse = {:.6}\n",
            self.a, self.b, self.rmse
        )
    }
}

/// Closed-form fit on `u = ln x`. Needs two points, positive x and at least
/// two distinct x values.
pub fn fit_log(points: &[(f64, f64)]) -> Result<LogFit, SimError> {
    if points.len() < 2 {
        return Err(SimError::DegenerateFit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some(&(x, y)) = points
        .iter()
        .find(|(x, y)| !(x.is_finite() && *x > 0.0 && y.is_finite()))
    {
        return Err(SimError::DegenerateFit(format!("invalid point ({x}, {y})")));
    }
    // checked on x itself: rounding in the mean can leave a tiny spread in ln x
    if points.iter().all(|(x, _)| *x == points[0].0) {
        return Err(SimError::DegenerateFit("all x values are equal".into()));
    }
    let n = points.len() as f64;
    let u_mean = points.iter().map(|(x, _)| x.ln()).sum::<f64>() / n;
    let y_mean = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let (mut suu, mut suy) = (0.0, 0.0);
    for (x, y) in points {
        let du = x.ln() - u_mean;
        suu += du * du;
        suy += du * (y - y_mean);
    }
    let a = suy / suu;
    let b = y_mean - a * u_mean;
    let sse: f64 = points
        .iter()
        .map(|(x, y)| {
            let r = y - (a * x.ln() + b);
            r * r
        })
        .sum();
    Ok(LogFit {
        a,
        b,
        rmse: (sse / n).sqrt(),
    })
}
