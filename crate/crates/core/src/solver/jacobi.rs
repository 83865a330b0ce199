use super::Preconditioner;
use crate::error::{Error, Result};

/// Diagonal scaling `z = r / diag`.
#[derive(Clone, Debug)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

pub fn jacobi_preconditioner(diag: &[f64]) -> Result<Jacobi> {
    if let Some((i, d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Jacobi needs a positive diagonal; entry {i} is {d}"
        )));
    }
    Ok(Jacobi {
        inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
    })
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }

    fn heap_bytes(&self) -> usize {
        self.inv_diag.len() * std::mem::size_of::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let mut z = [0.0; 2];
        jacobi_preconditioner(&[1.0, 1.0]).unwrap().apply(&[3.0, -2.0], &mut z);
        assert_eq!(z, [3.0, -2.0]);
        jacobi_preconditioner(&[2.0, 4.0]).unwrap().apply(&[2.0, 4.0], &mut z);
        assert_eq!(z, [1.0, 1.0]);
    }

    #[test]
    fn rejects_nonpositive_entries() {
        assert!(jacobi_preconditioner(&[1.0, 0.0]).is_err());
        assert!(jacobi_preconditioner(&[-1.0]).is_err());
        assert!(jacobi_preconditioner(&[f64::NAN]).is_err());
    }
}
