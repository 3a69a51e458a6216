use crate::error::{Error, Result};
use crate::imagecore::Kernel;

/// Zero-mean orthonormal filter atoms: all separable 2-D DCT-II products
/// except the constant one.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBasis {
    size: usize,
    atoms: Vec<Kernel>,
}

impl FilterBasis {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn atoms(&self) -> &[Kernel] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Coordinates of an arbitrary kernel in this basis (orthogonal
    /// projection; the mean component is dropped).
    pub fn project(&self, taps: &[f64]) -> Vec<f64> {
        self.atoms
            .iter()
            .map(|a| a.taps().iter().zip(taps).map(|(x, y)| x * y).sum())
            .collect()
    }
}

fn dct_1d(r: usize) -> Vec<Vec<f64>> {
    let n = r as f64;
    (0..r)
        .map(|k| {
            let alpha = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..r)
                .map(|i| alpha * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos())
                .collect()
        })
        .collect()
}

/// Builds the `r²−1` atom basis for odd `r ≥ 3`, ordered by vertical then
/// horizontal frequency.
pub fn dct_basis(r: usize) -> Result<FilterBasis> {
    if r < 3 || r % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "filter size must be odd and >= 3, got {r}"
        )));
    }
    let d = dct_1d(r);
    let mut atoms = Vec::with_capacity(r * r - 1);
    for ky in 0..r {
        for kx in 0..r {
            if ky == 0 && kx == 0 {
                continue;
            }
            let mut taps = Vec::with_capacity(r * r);
            for y in 0..r {
                for x in 0..r {
                    taps.push(d[ky][y] * d[kx][x]);
                }
            }
            // the cosine sums vanish analytically; remove the rounding residue
            let mean = taps.iter().sum::<f64>() / (r * r) as f64;
            taps.iter_mut().for_each(|t| *t -= mean);
            atoms.push(Kernel::new(r, taps)?);
        }
    }
    Ok(FilterBasis { size: r, atoms })
}

/// `Σ_m c_m · atom_m`.
pub fn filter_from_coeffs(coeffs: &[f64], basis: &FilterBasis) -> Result<Kernel> {
    if coeffs.len() != basis.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a basis of {} atoms",
            coeffs.len(),
            basis.len()
        )));
    }
    let r = basis.size();
    let mut taps = vec![0.0; r * r];
    for (c, atom) in coeffs.iter().zip(basis.atoms()) {
        if *c == 0.0 {
            continue;
        }
        for (t, a) in taps.iter_mut().zip(atom.taps()) {
            *t += c * a;
        }
    }
    Kernel::new(r, taps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::rng::SplitMix64;

    #[test]
    fn atom_count_and_rejects_bad_sizes() {
        assert_eq!(dct_basis(3).unwrap().len(), 8);
        assert_eq!(dct_basis(7).unwrap().len(), 48);
        assert!(dct_basis(4).is_err());
        assert!(dct_basis(1).is_err());
    }

    #[test]
    fn atoms_are_zero_mean_unit_norm_and_orthogonal() {
        for r in [3, 5, 7] {
            let basis = dct_basis(r).unwrap();
            for (i, a) in basis.atoms().iter().enumerate() {
                assert!(a.sum().abs() < 1e-12);
                assert!((a.norm() - 1.0).abs() < 1e-12);
                for b in &basis.atoms()[i + 1..] {
                    assert!(a.dot(b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn coefficient_map_basics() {
        let basis = dct_basis(5).unwrap();
        let mut c = vec![0.0; 24];
        assert!(filter_from_coeffs(&c, &basis).unwrap().taps().iter().all(|&t| t == 0.0));
        c[0] = 1.0;
        assert_eq!(&filter_from_coeffs(&c, &basis).unwrap(), &basis.atoms()[0]);
        assert!(filter_from_coeffs(&c[..3], &basis).is_err());
    }

    #[test]
    fn filter_norm_equals_coefficient_norm() {
        let basis = dct_basis(5).unwrap();
        let mut rng = SplitMix64::new(8);
        let c: Vec<f64> = (0..24).map(|_| rng.normal()).collect();
        let k = filter_from_coeffs(&c, &basis).unwrap();
        let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((k.norm() - cn).abs() < 1e-12);
        assert!(k.sum().abs() < 1e-12);
        let back = basis.project(k.taps());
        for (a, b) in back.iter().zip(&c) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
