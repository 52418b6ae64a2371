//! Freivalds' randomized check of `A · B = C`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::Work;
use crate::verify::matrix::Matrix;

fn check_shapes(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    if a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    Ok(())
}

/// One repetition with the given 0/1 vector `r`: accepts iff `A (B r) = C r`.
pub fn freivalds_once(a: &Matrix, b: &Matrix, c: &Matrix, r: &[bool], work: &mut Work) -> Result<bool> {
    check_shapes(a, b, c)?;
    let x = b.select_sum(r, work)?;
    let y = a.mul_vec(&x, work)?;
    let z = c.select_sum(r, work)?;
    Ok(y == z)
}

/// Runs `tau` independent repetitions with fresh uniform `r ∈ {0,1}^{cols(B)}`
/// and accepts iff all of them pass.
pub fn freivalds<R: Rng + ?Sized>(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    tau: u32,
    rng: &mut R,
    work: &mut Work,
) -> Result<bool> {
    check_shapes(a, b, c)?;
    if tau == 0 {
        return Err(Error::Config("Freivalds needs at least one repetition".into()));
    }
    let mut r = vec![false; b.cols()];
    for _ in 0..tau {
        r.iter_mut().for_each(|bit| *bit = rng.gen());
        if !freivalds_once(a, b, c, &r, work)? {
            return Ok(false);
        }
    }
    Ok(true)
}
