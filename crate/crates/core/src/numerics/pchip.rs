//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).
//!
//! Between two nodes the interpolant never leaves the range of the two node
//! values, so bounds that hold on the nodes hold everywhere.

#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing with at least two nodes.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len(), "pchip needs matching node arrays");
        debug_assert!(x.windows(2).all(|w| w[1] > w[0]), "pchip nodes must increase");
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return Self { x, y, d };
        }
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Self { x, y, d }
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn interval(&self, t: f64) -> usize {
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= self.x.len() => self.x.len() - 2,
            k => k - 1,
        }
    }

    /// Evaluates the interpolant; outside the node range the end cubics are
    /// extended.
    pub fn eval(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let dh00 = (6.0 * s2 - 6.0 * s) / h;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = (-6.0 * s2 + 6.0 * s) / h;
        let dh11 = 3.0 * s2 - 2.0 * s;
        dh00 * self.y[i] + dh10 * self.d[i] + dh01 * self.y[i + 1] + dh11 * self.d[i + 1]
    }
}

// Three-point one-sided slope, limited to preserve shape.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_nodes_and_cubic_accuracy() {
        let x: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let y: Vec<f64> = x.iter().map(|t| t.exp()).collect();
        let p = Pchip::new(x.clone(), y.clone());
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(p.eval(*a), *b);
        }
        assert!((p.eval(0.3333) - 0.3333f64.exp()).abs() < 1e-5);
        assert!((p.derivative(0.5) - 0.5f64.exp()).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn stays_within_node_bounds(mut ys in proptest::collection::vec(0.0f64..1.0, 3..20), t in 0.0f64..1.0) {
            ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = ys.len();
            let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let p = Pchip::new(xs, ys.clone());
            let v = p.eval(t);
            prop_assert!(v >= ys[0] - 1e-12 && v <= ys[n - 1] + 1e-12);
        }
    }
}
