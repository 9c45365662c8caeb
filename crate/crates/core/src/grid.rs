//! Lattice geometry on `[0,1)^d`: problem parameters, index arithmetic,
//! grid functions, domain masks and discrete norms.
//!
//! Every multi-dimensional array in the crate is stored row-major with axis 0
//! slowest, including spectral buffers.

use std::path::PathBuf;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Dimension `d`, points per axis `N` and fractional exponent `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemParams {
    d: usize,
    n: usize,
    s: f64,
}

impl ProblemParams {
    pub fn new(d: usize, n: usize, s: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::Config(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::Config(format!("N must be even and at least 4, got {n}")));
        }
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Domain(format!("s must lie in (0, 1], got {s}")));
        }
        Ok(Self { d, n, s })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Number of lattice points `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Side of the zero-padded convolution lattice, `2N`.
    pub fn padded_side(&self) -> usize {
        2 * self.n
    }

    pub fn padded_len(&self) -> usize {
        self.padded_side().pow(self.d as u32)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.d, n, self.s)
    }

    pub fn with_s(&self, s: f64) -> Result<Self> {
        Self::new(self.d, self.n, s)
    }

    /// Coordinates `x_k = k/N` of the lattice point with linear index `lin`.
    pub fn point(&self, lin: usize) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        let mut rem = lin;
        for a in (0..self.d).rev() {
            x[a] = (rem % self.n) as f64 / self.n as f64;
            rem /= self.n;
        }
        x
    }
}

/// Integer multi-index with up to three components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    dim: usize,
    comps: [i64; MAX_DIM],
}

impl MultiIndex {
    pub fn new(comps: &[i64]) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&comps.len()),
            "multi-index must have 1 to 3 components"
        );
        let mut c = [0; MAX_DIM];
        c[..comps.len()].copy_from_slice(comps);
        Self {
            dim: comps.len(),
            comps: c,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.comps[..self.dim]
    }
}

/// Row-major linear index of `m` on a lattice with `side` points per axis.
pub fn linear_index(m: &MultiIndex, side: usize) -> Result<usize> {
    let mut lin = 0usize;
    for &c in m.as_slice() {
        if c < 0 || c as usize >= side {
            return Err(Error::Index(format!("component {c} outside [0, {side})")));
        }
        lin = lin * side + c as usize;
    }
    Ok(lin)
}

/// Inverse of [`linear_index`].
pub fn multi_index(lin: usize, dim: usize, side: usize) -> Result<MultiIndex> {
    let total = side.checked_pow(dim as u32).unwrap_or(usize::MAX);
    if lin >= total {
        return Err(Error::Index(format!("linear index {lin} outside [0, {total})")));
    }
    let mut c = [0i64; MAX_DIM];
    let mut rem = lin;
    for a in (0..dim).rev() {
        c[a] = (rem % side) as i64;
        rem /= side;
    }
    Ok(MultiIndex::new(&c[..dim]))
}

/// Maps `c ∈ [0, m)` to its representative in `{-m/2, …, m/2-1}`.
#[inline]
pub fn signed(c: usize, m: usize) -> i64 {
    if c < m / 2 {
        c as i64
    } else {
        c as i64 - m as i64
    }
}

/// Componentwise [`signed`]; the result lies in `I'_M^d`.
pub fn shift_to_signed(m: &MultiIndex, side: usize) -> Result<MultiIndex> {
    let mut c = [0i64; MAX_DIM];
    for (a, &v) in m.as_slice().iter().enumerate() {
        if v < 0 || v as usize >= side {
            return Err(Error::Index(format!("component {v} outside [0, {side})")));
        }
        c[a] = signed(v as usize, side);
    }
    Ok(MultiIndex::new(&c[..m.dim()]))
}

/// Real samples on the `N^d` lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    params: ProblemParams,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(params: ProblemParams, values: Vec<f64>) -> Result<Self> {
        if values.len() != params.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                params.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value at index {i}")));
        }
        Ok(Self { params, values })
    }

    pub fn zeros(params: ProblemParams) -> Self {
        Self {
            params,
            values: vec![0.0; params.len()],
        }
    }

    pub fn constant(params: ProblemParams, v: f64) -> Self {
        Self {
            params,
            values: vec![v; params.len()],
        }
    }

    /// Samples `f` at every lattice point `x_k = k/N`.
    pub fn from_fn(params: ProblemParams, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = params.d();
        let values = (0..params.len())
            .map(|i| f(&params.point(i)[..d]))
            .collect();
        Self { params, values }
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Geometry used to build a [`DomainMask`].
#[derive(Clone, Debug, PartialEq)]
pub enum MaskShape {
    Cube,
    /// Open ball `|x - center| < radius`.
    Disc { center: Vec<f64>, radius: f64 },
    /// Unit square minus the closed quadrant `[1/2,1)^2`.
    LShape,
    Raster(PathBuf),
}

/// Selector `S_Ω` over the `N^d` lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainMask {
    params: ProblemParams,
    selected: Vec<bool>,
}

impl DomainMask {
    pub fn new(params: ProblemParams, selected: Vec<bool>) -> Result<Self> {
        if selected.len() != params.len() {
            return Err(Error::Shape(format!(
                "mask has {} entries, expected {}",
                selected.len(),
                params.len()
            )));
        }
        Ok(Self { params, selected })
    }

    pub fn cube(params: ProblemParams) -> Self {
        Self {
            params,
            selected: vec![true; params.len()],
        }
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&b| b).count()
    }

    pub fn is_full(&self) -> bool {
        self.selected.iter().all(|&b| b)
    }

    /// Zeroes every entry outside the mask.
    pub fn restrict(&self, v: &mut [f64]) {
        for (x, &keep) in v.iter_mut().zip(&self.selected) {
            if !keep {
                *x = 0.0;
            }
        }
    }
}

pub fn make_mask(params: &ProblemParams, shape: &MaskShape) -> Result<DomainMask> {
    let d = params.d();
    match shape {
        MaskShape::Cube => Ok(DomainMask::cube(*params)),
        MaskShape::Disc { center, radius } => {
            check_ball(d, center, *radius)?;
            let selected = (0..params.len())
                .map(|i| {
                    let x = params.point(i);
                    let r2: f64 = (0..d).map(|a| (x[a] - center[a]).powi(2)).sum();
                    r2.sqrt() < *radius
                })
                .collect();
            Ok(DomainMask {
                params: *params,
                selected,
            })
        }
        MaskShape::LShape => {
            if d != 2 {
                return Err(Error::Geometry(format!("the L-shape is two-dimensional, got d = {d}")));
            }
            let selected = (0..params.len())
                .map(|i| {
                    let x = params.point(i);
                    !(x[0] >= 0.5 && x[1] >= 0.5)
                })
                .collect();
            Ok(DomainMask {
                params: *params,
                selected,
            })
        }
        MaskShape::Raster(path) => {
            let mask = crate::io::read_mask(path)?;
            if mask.params.d() != d || mask.params.n() != params.n() {
                return Err(Error::Format(format!(
                    "raster mask is d={} N={}, expected d={} N={}",
                    mask.params.d(),
                    mask.params.n(),
                    d,
                    params.n()
                )));
            }
            Ok(DomainMask {
                params: *params,
                selected: mask.selected,
            })
        }
    }
}

/// Checks that the closed ball `center ± radius` fits in the unit cube.
pub fn check_ball(d: usize, center: &[f64], radius: f64) -> Result<()> {
    if center.len() != d {
        return Err(Error::Geometry(format!(
            "center has {} coordinates, expected {d}",
            center.len()
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::Geometry(format!("radius must be positive, got {radius}")));
    }
    if center.iter().any(|&c| c - radius < 0.0 || c + radius > 1.0) {
        return Err(Error::Geometry(format!(
            "ball of radius {radius} around {center:?} leaves the unit cube"
        )));
    }
    Ok(())
}

/// `sqrt(N^{-d} Σ u_k²)`.
pub fn norm_l2(u: &GridFunction) -> f64 {
    norm_l2_slice(u.values())
}

pub fn norm_linf(u: &GridFunction) -> f64 {
    norm_linf_slice(u.values())
}

pub fn norm_l2_slice(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn norm_linf_slice(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_examples() {
        assert_eq!(linear_index(&MultiIndex::new(&[0, 0]), 4).unwrap(), 0);
        assert_eq!(linear_index(&MultiIndex::new(&[1, 2]), 4).unwrap(), 6);
        assert_eq!(linear_index(&MultiIndex::new(&[7, 7, 7]), 8).unwrap(), 511);
        assert!(matches!(
            linear_index(&MultiIndex::new(&[4, 0]), 4),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn linear_index_round_trip_exhaustive() {
        for d in 1..=3 {
            for side in [1usize, 2, 3, 4, 8, 16] {
                for lin in 0..side.pow(d as u32) {
                    let m = multi_index(lin, d, side).unwrap();
                    assert_eq!(linear_index(&m, side).unwrap(), lin);
                }
            }
        }
    }

    #[test]
    fn signed_shift() {
        assert_eq!(signed(3, 8), 3);
        assert_eq!(signed(4, 8), -4);
        assert_eq!(signed(7, 8), -1);
        let m = shift_to_signed(&MultiIndex::new(&[3, 4, 7]), 8).unwrap();
        assert_eq!(m.as_slice(), &[3, -4, -1]);
    }

    #[test]
    fn params_validation() {
        assert!(ProblemParams::new(4, 8, 0.5).is_err());
        assert!(ProblemParams::new(2, 6, 0.5).is_ok());
        assert!(ProblemParams::new(2, 7, 0.5).is_err());
        assert!(ProblemParams::new(2, 2, 0.5).is_err());
        assert!(matches!(ProblemParams::new(1, 8, 1.5), Err(Error::Domain(_))));
        assert!(ProblemParams::new(1, 8, 0.0).is_err());
        assert!(ProblemParams::new(1, 8, 1.0).is_ok());
    }

    #[test]
    fn disc_and_lshape_masks() {
        let p = ProblemParams::new(2, 4, 0.5).unwrap();
        let disc = make_mask(
            &p,
            &MaskShape::Disc {
                center: vec![0.5, 0.5],
                radius: 0.3,
            },
        )
        .unwrap();
        let hits: Vec<usize> = (0..16).filter(|&i| disc.selected()[i]).collect();
        // centre plus its four neighbours at distance 0.25
        assert_eq!(hits, vec![6, 9, 10, 11, 14]);
        let tight = make_mask(
            &p,
            &MaskShape::Disc {
                center: vec![0.5, 0.5],
                radius: 0.25,
            },
        )
        .unwrap();
        assert_eq!(tight.count(), 1);
        assert!(tight.selected()[10]);

        let l = make_mask(&p, &MaskShape::LShape).unwrap();
        assert_eq!(l.count(), 12);
        assert!(make_mask(&p, &MaskShape::Cube).unwrap().is_full());
    }

    #[test]
    fn geometry_errors() {
        let p = ProblemParams::new(2, 8, 0.5).unwrap();
        let out = MaskShape::Disc {
            center: vec![0.5, 0.5],
            radius: 0.6,
        };
        assert!(matches!(make_mask(&p, &out), Err(Error::Geometry(_))));
        let p3 = ProblemParams::new(3, 8, 0.5).unwrap();
        assert!(matches!(make_mask(&p3, &MaskShape::LShape), Err(Error::Geometry(_))));
    }

    #[test]
    fn norms() {
        let p = ProblemParams::new(1, 4, 0.5).unwrap();
        assert_eq!(norm_l2(&GridFunction::zeros(p)), 0.0);
        assert!((norm_l2(&GridFunction::constant(p, 1.0)) - 1.0).abs() < 1e-15);
        assert!((norm_l2(&GridFunction::constant(p, 2.0)) - 2.0).abs() < 1e-15);
        let u = GridFunction::new(p, vec![1.0, -3.0, 0.5, 2.0]).unwrap();
        assert_eq!(norm_linf(&u), 3.0);
    }

    #[test]
    fn grid_function_rejects_bad_input() {
        let p = ProblemParams::new(1, 4, 0.5).unwrap();
        assert!(matches!(GridFunction::new(p, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(GridFunction::new(p, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}
