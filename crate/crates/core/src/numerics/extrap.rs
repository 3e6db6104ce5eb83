//! Limit extrapolation with known non-integer error exponents, and
//! least-squares power-law fits.

/// Result of an extrapolation: estimate and the size of the last correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolated {
    pub value: f64,
    pub error: f64,
    /// Number of exponents eliminated for the returned estimate.
    pub depth: usize,
}

/// All non-negative integer combinations of `generators` that are positive
/// and at most `limit`, sorted. Values closer than `merge` collapse into one.
pub fn exponent_lattice(generators: &[f64], limit: f64, merge: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut frontier = vec![0.0];
    while let Some(base) = frontier.pop() {
        for &g in generators {
            let v = base + g;
            if v <= limit + 1e-12 && !out.iter().any(|&o: &f64| (o - v).abs() < 1e-9) {
                out.push(v);
                frontier.push(v);
            }
        }
    }
    out.retain(|&v| v > 0.0);
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged: Vec<f64> = Vec::with_capacity(out.len());
    for v in out {
        match merged.last() {
            Some(&l) if v - l < merge => {}
            _ => merged.push(v),
        }
    }
    merged
}

/// Richardson extrapolation to `u -> 0` for samples `values[j] = T(u0 / ratio^j)`
/// with `T(u) = T* + sum_k c_k u^{e_k}`.
///
/// Each column eliminates one exponent. A column's error is the spread of its
/// last two entries; the column with the smallest spread wins.
pub fn richardson(values: &[f64], ratio: f64, exponents: &[f64]) -> Extrapolated {
    assert!(!values.is_empty());
    let spread = |c: &[f64]| match c.len() {
        0 | 1 => f64::INFINITY,
        n => (c[n - 1] - c[n - 2]).abs(),
    };
    let mut col: Vec<f64> = values.to_vec();
    let mut best = Extrapolated { value: *col.last().unwrap(), error: spread(&col), depth: 0 };
    for (k, &e) in exponents.iter().enumerate() {
        if col.len() < 2 {
            break;
        }
        let denom = ratio.powf(e) - 1.0;
        col = col.windows(2).map(|w| w[1] + (w[1] - w[0]) / denom).collect();
        let err = spread(&col);
        if err < best.error {
            best = Extrapolated { value: *col.last().unwrap(), error: err, depth: k + 1 };
        }
    }
    best
}

/// One correction term `u^exponent (ln u)^log_power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub exponent: f64,
    pub log_power: u32,
}

impl Term {
    fn eval(&self, u: f64) -> f64 {
        u.powf(self.exponent) * u.ln().powi(self.log_power as i32)
    }
}

/// Correction terms generated by `generators` up to `limit`. Exponents within
/// `resonance` of each other are merged into one exponent carrying
/// logarithmic factors, one per coincident combination.
pub fn asymptotic_terms(generators: &[f64], limit: f64, resonance: f64) -> Vec<Term> {
    // One value per multi-index, so coincident combinations stay distinct.
    fn combos(gens: &[f64], base: f64, limit: f64, out: &mut Vec<f64>) {
        let Some((&g, rest)) = gens.split_first() else {
            out.push(base);
            return;
        };
        let mut v = base;
        while v <= limit + 1e-12 {
            combos(rest, v, limit, out);
            v += g;
        }
    }
    let mut all = Vec::new();
    combos(generators, 0.0, limit, &mut all);
    all.retain(|&v| v > 0.0);
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j] - all[i] < resonance {
            j += 1;
        }
        // Prefer an integer representative inside the cluster.
        let cluster = &all[i..j];
        let e = cluster
            .iter()
            .copied()
            .find(|v| (v - v.round()).abs() < resonance)
            .map(f64::round)
            .unwrap_or(cluster[0]);
        for k in 0..(j - i) {
            out.push(Term { exponent: e, log_power: k as u32 });
        }
        i = j;
    }
    out
}

/// Extrapolation to `u -> 0` of `T(u) = T* + sum_k c_k term_k(u)` from samples
/// at decreasing `us`. For each depth `m` the model with the first `m` terms
/// is solved exactly on the last `m + 1` samples and again on the window one
/// sample earlier; the depth whose two estimates agree best wins.
pub fn extrapolate(us: &[f64], vals: &[f64], terms: &[Term]) -> Extrapolated {
    let n = vals.len();
    assert!(n > 0 && us.len() == n);
    let solve_window = |end: usize, m: usize| -> Option<f64> {
        let start = end.checked_sub(m + 1)?;
        let rows: Vec<Vec<f64>> = (start..end)
            .map(|r| {
                let mut row = Vec::with_capacity(m + 2);
                row.push(1.0);
                row.extend(terms[..m].iter().map(|t| t.eval(us[r])));
                row.push(vals[r]);
                row
            })
            .collect();
        solve_first(rows)
    };
    let mut best = Extrapolated { value: vals[n - 1], error: f64::INFINITY, depth: 0 };
    if n >= 2 {
        best.error = (vals[n - 1] - vals[n - 2]).abs();
    }
    for m in 1..=terms.len() {
        if m + 2 > n {
            break;
        }
        let (Some(a), Some(b)) = (solve_window(n, m), solve_window(n - 1, m)) else {
            continue;
        };
        let err = (a - b).abs();
        if err < best.error {
            best = Extrapolated { value: a, error: err, depth: m };
        }
    }
    best
}

/// Gaussian elimination with partial pivoting on an augmented square system;
/// returns the first unknown.
fn solve_first(mut a: Vec<Vec<f64>>) -> Option<f64> {
    let n = a.len();
    // Column scaling keeps powers of very different size comparable.
    let mut scale = vec![1.0; n];
    for (c, sc) in scale.iter_mut().enumerate() {
        let m = a.iter().map(|r| r[c].abs()).fold(0.0, f64::max);
        if m > 0.0 {
            *sc = m;
            for r in a.iter_mut() {
                r[c] /= m;
            }
        }
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(r);
            for (x, &y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * y;
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = a[r][n];
        for c in r + 1..n {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x[0] / scale[0])
}

/// Least-squares fit of `ln|v| = c + slope ln x`. Returns `(slope, c)`.
pub fn loglog_fit(xs: &[f64], vs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let lv: Vec<f64> = vs.iter().map(|v| v.abs().ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let mv = lv.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxv = 0.0;
    for (a, b) in lx.iter().zip(&lv) {
        sxx += (a - mx) * (a - mx);
        sxv += (a - mx) * (b - mv);
    }
    let slope = sxv / sxx;
    (slope, mv - slope * mx)
}

/// Least-squares fit of `ln|v| = c + slope ln x + b x`, a power law with a
/// first-order correction. Returns `(slope, c, b)`.
pub fn loglog_fit_corrected(xs: &[f64], vs: &[f64]) -> (f64, f64, f64) {
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (&x, &v) in xs.iter().zip(vs) {
        let row = [1.0, x.ln(), x];
        let t = v.abs().ln();
        for i in 0..3 {
            atb[i] += row[i] * t;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    // Cramer's rule on the 3x3 normal equations.
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&ata);
    let solve = |k: usize| {
        let mut m = ata;
        for i in 0..3 {
            m[i][k] = atb[i];
        }
        det(&m) / d
    };
    (solve(1), solve(0), solve(2))
}

/// `n` log-spaced points in `[lo, hi]`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
