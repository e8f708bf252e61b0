use nalgebra::{DMatrix, DVector};

/// Max-shifted `log Σ exp(x)`; `-inf` for an empty slice.
pub(crate) fn logsumexp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Thin SVD `a = u diag(s) vᵀ` with `n = min(rows, cols)` components and
/// singular values sorted descending.
///
/// Tall inputs are reduced by Householder QR first so the iterative part runs
/// on an `n × n` factor; wide inputs go through the QR of the transpose.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        let (u, s, v) = if rows >= cols {
            let qr = a.clone().qr();
            let svd = qr.r().svd(true, true);
            let u = qr.q() * svd.u.expect("u requested");
            (
                u,
                svd.singular_values,
                svd.v_t.expect("v requested").transpose(),
            )
        } else {
            // aᵀ = q r  ⇒  a = rᵀ qᵀ, and rᵀ = u s wᵀ gives v = q w.
            let qr = a.transpose().qr();
            let svd = qr.r().transpose().svd(true, true);
            let v = qr.q() * svd.v_t.expect("v requested").transpose();
            (svd.u.expect("u requested"), svd.singular_values, v)
        };
        sort_descending(u, s, v)
    }
}

fn sort_descending(u: DMatrix<f64>, s: DVector<f64>, v: DMatrix<f64>) -> ThinSvd {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return ThinSvd { u, s, v };
    }
    ThinSvd {
        u: u.select_columns(&order),
        s: DVector::from_iterator(s.len(), order.iter().map(|&i| s[i])),
        v: v.select_columns(&order),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_shift_stable() {
        assert!((logsumexp([0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        let big = logsumexp([1e4, 1e4]);
        assert!((big - (1e4 + 2f64.ln())).abs() < 1e-9);
        assert_eq!(logsumexp(std::iter::empty::<f64>()), f64::NEG_INFINITY);
    }

    #[test]
    fn thin_svd_reconstructs_tall_and_wide() {
        for (r, c) in [(7, 3), (3, 7), (4, 4)] {
            let a = DMatrix::from_fn(r, c, |i, j| {
                ((i * 7 + j * 3) % 5) as f64 - 1.5 + 0.1 * i as f64
            });
            let svd = ThinSvd::new(&a);
            let n = r.min(c);
            assert_eq!(svd.u.shape(), (r, n));
            assert_eq!(svd.v.shape(), (c, n));
            let rec = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
            // nalgebra's bidiagonal SVD is accurate to a few 1e-12 here.
            assert!((&rec - &a).amax() < 1e-10, "{r}x{c}: {}", (rec - &a).amax());
            assert!(svd.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
