use crate::error::{Error, Result};

/// Interpolating quadratic spline.
///
/// Knots sit halfway between consecutive samples, except that the first
/// and last midpoints are dropped so the basis has exactly one function
/// per sample. Quadratics are reproduced exactly and the curve is C¹.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpline {
    knots: Vec<f64>,
    coef: Vec<f64>,
}

impl QuadraticSpline {
    /// Fits through `(x, z)` samples. `x` must be strictly increasing.
    pub fn fit(x: &[f64], z: &[f64]) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::Config(format!("{} x values but {} z values", x.len(), z.len())));
        }
        let n = x.len();
        if n < 3 {
            return Err(Error::InsufficientData(format!(
                "quadratic spline needs at least 3 samples, got {n}"
            )));
        }
        if x.iter().chain(z).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite spline sample".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("spline abscissae must be strictly increasing".into()));
        }
        let mut knots = Vec::with_capacity(n + 3);
        knots.extend([x[0]; 3]);
        for i in 1..n - 2 {
            knots.push(0.5 * (x[i] + x[i + 1]));
        }
        knots.extend([x[n - 1]; 3]);

        // Collocation matrix, at most three non-zeros per row.
        let mut band = vec![[0.0; 5]; n];
        for (j, &xj) in x.iter().enumerate() {
            let span = find_span(&knots, xj);
            let b = basis(&knots, span, xj);
            for (r, &v) in b.iter().enumerate() {
                let col = span - 2 + r;
                let off = col as isize - j as isize + 2;
                if !(0..5).contains(&off) {
                    return Err(Error::Numeric("spline collocation left its band".into()));
                }
                band[j][off as usize] = v;
            }
        }
        let coef = solve_banded(band, z.to_vec())?;
        Ok(QuadraticSpline { knots, coef })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange { value: x, min: lo, max: hi });
        }
        let span = find_span(&self.knots, x);
        let b = basis(&self.knots, span, x);
        Ok((0..3).map(|r| b[r] * self.coef[span - 2 + r]).sum())
    }
}

/// Index `s` with `knots[s] <= x < knots[s + 1]`, clamped so the right end
/// belongs to the last non-empty interval.
fn find_span(knots: &[f64], x: f64) -> usize {
    let last = knots.len() - 4;
    if x >= knots[last + 1] {
        return last;
    }
    let mut s = knots.partition_point(|&k| k <= x) - 1;
    s = s.clamp(2, last);
    s
}

/// The three quadratic B-splines that are non-zero on span `s`.
fn basis(t: &[f64], s: usize, x: f64) -> [f64; 3] {
    // Cox-de Boor, degree 0 -> 2.
    let mut n = [1.0, 0.0, 0.0];
    let mut left = [0.0; 3];
    let mut right = [0.0; 3];
    for j in 1..=2 {
        left[j] = x - t[s + 1 - j];
        right[j] = t[s + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let den = right[r + 1] + left[j - r];
            let tmp = if den != 0.0 { n[r] / den } else { 0.0 };
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    n
}

/// Gaussian elimination on a matrix with two sub- and two
/// super-diagonals; row `i` stores columns `i-2..=i+2`. The collocation
/// matrix is totally positive, so no pivoting is needed.
fn solve_banded(mut a: Vec<[f64; 5]>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = a[k][2];
        if p.abs() < 1e-14 {
            return Err(Error::Numeric(format!("singular spline system at row {k}")));
        }
        for i in k + 1..(k + 3).min(n) {
            let off = 2 + k as isize - i as isize;
            if off < 0 {
                continue;
            }
            let f = a[i][off as usize] / p;
            if f == 0.0 {
                continue;
            }
            for c in k..(k + 3).min(n) {
                let src = 2 + c - k;
                let dst = (2 + c as isize - i as isize) as usize;
                a[i][dst] -= f * a[k][src];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in k + 1..(k + 3).min(n) {
            s -= a[k][2 + c - k] * x[c];
        }
        x[k] = s / a[k][2];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_a_parabola_between_samples() {
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.7 + (i * i) as f64 * 0.01).collect();
        let z: Vec<f64> = x.iter().map(|v| v * v).collect();
        let s = QuadraticSpline::fit(&x, &z).unwrap();
        for w in x.windows(2) {
            let m = 0.5 * (w[0] + w[1]);
            assert!((s.eval(m).unwrap() - m * m).abs() < 1e-10);
        }
    }

    #[test]
    fn reproduces_a_line() {
        let x = [0.0, 1.0, 2.5, 3.0, 7.0];
        let z: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let s = QuadraticSpline::fit(&x, &z).unwrap();
        for k in 0..=70 {
            let v = k as f64 * 0.1;
            assert!((s.eval(v).unwrap() - (2.0 - 0.5 * v)).abs() < 1e-12);
        }
    }

    #[test]
    fn three_points_give_the_interpolating_parabola() {
        let s = QuadraticSpline::fit(&[0.0, 1.0, 3.0], &[1.0, 0.0, 4.0]).unwrap();
        // Through the three points: z = x² - 2x + 1.
        for v in [0.0, 0.5, 2.0, 3.0] {
            assert!((s.eval(v).unwrap() - (v * v - 2.0 * v + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(QuadraticSpline::fit(&[0.0, 1.0], &[0.0, 1.0]), Err(Error::InsufficientData(_))));
        assert!(matches!(QuadraticSpline::fit(&[0.0, 1.0, 1.0], &[0.0, 1.0, 2.0]), Err(Error::Config(_))));
        let s = QuadraticSpline::fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap();
        assert!(matches!(s.eval(2.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(s.eval(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn noisy_sine_stays_near_dense_oracle() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.003).unwrap();
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let z: Vec<f64> = x.iter().map(|v| v.sin() + noise.sample(&mut rng)).collect();
        let s = QuadraticSpline::fit(&x, &z).unwrap();
        // Dense linear interpolation of the same samples.
        let mut worst: f64 = 0.0;
        for k in 0..=980 {
            let v = k as f64 * 0.01;
            let i = ((v / 0.2) as usize).min(48);
            let t = (v - x[i]) / 0.2;
            let lin = z[i] * (1.0 - t) + z[i + 1] * t;
            worst = worst.max((s.eval(v).unwrap() - lin).abs());
        }
        // Chord error of sin over h = 0.2 is h²/8 ≈ 0.005; noise can roughly
        // double it.
        assert!(worst < 0.012, "{worst}");
    }

    proptest! {
        #[test]
        fn interpolates_its_samples(
            steps in proptest::collection::vec(0.05f64..3.0, 3..40),
            seed in proptest::collection::vec(-5.0f64..5.0, 40),
        ) {
            let mut x = vec![0.0];
            for s in &steps {
                x.push(x.last().unwrap() + s);
            }
            let z: Vec<f64> = (0..x.len()).map(|i| seed[i % seed.len()]).collect();
            let s = QuadraticSpline::fit(&x, &z).unwrap();
            for (xi, zi) in x.iter().zip(&z) {
                prop_assert!((s.eval(*xi).unwrap() - zi).abs() < 1e-6 * (1.0 + zi.abs()));
            }
        }
    }
}
