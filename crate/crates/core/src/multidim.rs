//! Product processing for arrays on a 3-D half-wavelength lattice.
//!
//! Lower-dimensional arrays use singleton axes; a `1×1×L` array along `z`
//! reproduces the linear case exactly. Tensors are indexed `[x, y, z]`; the
//! flattened text form lists cells x-fastest.

use ndarray::{Array3, ArrayView3};
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::signal::{complex_normal, trial_rng};
use crate::tapering::{TaperFamily, TaperedWeights};
use crate::{PpoError, Real, Result};

type Idx3 = [usize; 3];
type Lag3 = [isize; 3];

/// Occupancy and taper of one 3-D subarray.
#[derive(Clone, Debug, PartialEq)]
pub struct GridArray3<T> {
    occupancy: Array3<bool>,
    taper: Array3<Complex<T>>,
}

impl<T: Real> GridArray3<T> {
    /// Masks `taper` by `occupancy`.
    pub fn new(occupancy: Array3<bool>, taper: Array3<Complex<T>>) -> Result<Self> {
        if occupancy.dim() != taper.dim() {
            return Err(PpoError::Geometry(format!(
                "occupancy shape {:?} differs from taper shape {:?}",
                occupancy.dim(),
                taper.dim()
            )));
        }
        if occupancy.is_empty() || !occupancy[[0, 0, 0]] {
            return Err(PpoError::Geometry(
                "3-D subarray must occupy its origin cell".into(),
            ));
        }
        let zero = Complex::new(T::zero(), T::zero());
        let mut taper = taper;
        ndarray::Zip::from(&mut taper)
            .and(&occupancy)
            .for_each(|w, &on| {
                if !on {
                    *w = zero;
                }
            });
        if taper.iter().all(|w| *w == zero) {
            return Err(PpoError::Taper("3-D taper vanishes at every sensor".into()));
        }
        Ok(Self { occupancy, taper })
    }

    /// Fully occupied box with unit taper.
    pub fn full_box(extents: Idx3) -> Result<Self> {
        if extents.contains(&0) {
            return Err(PpoError::Geometry("extents must be positive".into()));
        }
        Self::new(
            Array3::from_elem(extents, true),
            Array3::from_elem(extents, Complex::new(T::one(), T::zero())),
        )
    }

    /// A linear taper laid along `z` as a `1×1×L` array.
    pub fn from_linear(w: &TaperedWeights<T>) -> Result<Self> {
        let l = w.extent();
        let occ = Array3::from_shape_fn((1, 1, l), |(_, _, z)| w.subarray().is_occupied(z));
        let taper = Array3::from_shape_fn((1, 1, l), |(_, _, z)| w.values()[z]);
        Self::new(occ, taper)
    }

    /// Separable taper `w[m] = a[m_x] b[m_y] c[m_z]`; cells are occupied
    /// where the product is nonzero.
    pub fn separable(a: &[Complex<T>], b: &[Complex<T>], c: &[Complex<T>]) -> Result<Self> {
        let taper =
            Array3::from_shape_fn((a.len(), b.len(), c.len()), |(x, y, z)| a[x] * b[y] * c[z]);
        let zero = Complex::new(T::zero(), T::zero());
        let mut occupancy = taper.map(|w| *w != zero);
        // Keep the origin cell occupied even if the taper is zero there.
        if let Some(o) = occupancy.get_mut([0, 0, 0]) {
            *o = true;
        }
        Self::new(occupancy, taper)
    }

    /// Evaluates a window family separably over each axis of a full box.
    pub fn windowed_box(extents: Idx3, family: &TaperFamily<T>) -> Result<Self> {
        let axis = |n: usize| -> Result<Vec<Complex<T>>> {
            let sub = crate::geometry::SubarraySpec::uniform(n, 1)?;
            Ok(crate::tapering::make_taper(&sub, family)?.values().to_vec())
        };
        let (a, b, c) = (axis(extents[0])?, axis(extents[1])?, axis(extents[2])?);
        let taper = Array3::from_shape_fn(extents, |(x, y, z)| a[x] * b[y] * c[z]);
        Self::new(Array3::from_elem(extents, true), taper)
    }

    pub fn extents(&self) -> Idx3 {
        let (x, y, z) = self.taper.dim();
        [x, y, z]
    }

    pub fn occupancy(&self) -> &Array3<bool> {
        &self.occupancy
    }

    pub fn taper(&self) -> &Array3<Complex<T>> {
        &self.taper
    }

    fn support(&self) -> Vec<(Idx3, Complex<T>)> {
        let zero = Complex::new(T::zero(), T::zero());
        self.taper
            .indexed_iter()
            .filter(|(_, w)| **w != zero)
            .map(|((x, y, z), w)| ([x, y, z], *w))
            .collect()
    }

    pub fn to_doc(&self) -> GridArray3Doc {
        let [nx, ny, nz] = self.extents();
        let mut doc = GridArray3Doc {
            extents: [nx, ny, nz],
            occupancy: Vec::with_capacity(nx * ny * nz),
            taper_re: Vec::with_capacity(nx * ny * nz),
            taper_im: Vec::with_capacity(nx * ny * nz),
        };
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    doc.occupancy.push(self.occupancy[[x, y, z]] as u8);
                    let w = self.taper[[x, y, z]];
                    doc.taper_re.push(w.re.to_f64().unwrap_or(f64::NAN));
                    doc.taper_im.push(w.im.to_f64().unwrap_or(f64::NAN));
                }
            }
        }
        doc
    }

    pub fn from_doc(doc: &GridArray3Doc) -> Result<Self> {
        let [nx, ny, nz] = doc.extents;
        let cells = nx * ny * nz;
        if doc.occupancy.len() != cells
            || doc.taper_re.len() != cells
            || doc.taper_im.len() != cells
        {
            return Err(PpoError::Geometry(format!(
                "3-D document needs {cells} cells per field"
            )));
        }
        let at = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
        let occupancy =
            Array3::from_shape_fn((nx, ny, nz), |(x, y, z)| doc.occupancy[at(x, y, z)] != 0);
        let taper = Array3::from_shape_fn((nx, ny, nz), |(x, y, z)| {
            let i = at(x, y, z);
            Complex::new(T::lit(doc.taper_re[i]), T::lit(doc.taper_im[i]))
        });
        Self::new(occupancy, taper)
    }
}

/// Text form of a [`GridArray3`]; cell `(x, y, z)` is at
/// `x + Nx·(y + Ny·z)` (x-fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridArray3Doc {
    pub extents: [usize; 3],
    pub occupancy: Vec<u8>,
    pub taper_re: Vec<f64>,
    pub taper_im: Vec<f64>,
}

/// Direction cosines `(u_x, u_y, u_z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionCosine3<T> {
    pub u: [T; 3],
}

impl<T: Real> DirectionCosine3<T> {
    /// Any point of the cube `[-1, 1]³`, including non-physical ("virtual")
    /// directions.
    pub fn new(u: [T; 3]) -> Result<Self> {
        if u.iter().any(|c| !(c.abs() <= T::one())) {
            return Err(PpoError::Grid(
                "direction cosines must lie in [-1, 1]".into(),
            ));
        }
        Ok(Self { u })
    }

    /// A propagating direction: `u_x² + u_y² + u_z² ≤ 1`.
    pub fn physical(u: [T; 3]) -> Result<Self> {
        let d = Self::new(u)?;
        if !d.is_physical() {
            return Err(PpoError::Grid(
                "direction lies outside the unit sphere".into(),
            ));
        }
        Ok(d)
    }

    /// From polar angle `θ` (from `z`) and azimuth `φ`.
    pub fn from_angles(theta: T, phi: T) -> Self {
        Self {
            u: [
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ],
        }
    }

    pub fn is_physical(&self) -> bool {
        let n2 = self.u.iter().fold(T::zero(), |a, &c| a + c * c);
        n2 <= T::one() + T::epsilon() * T::lit(8.0)
    }

    fn phase(&self, k: Lag3) -> T {
        T::PI()
            * (self.u[0] * T::from_index(k[0] as i128)
                + self.u[1] * T::from_index(k[1] as i128)
                + self.u[2] * T::from_index(k[2] as i128))
    }
}

/// Complex tensor over lags `k_d ∈ [first_d, first_d + len_d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LagTensor3<T> {
    first: Lag3,
    values: Array3<Complex<T>>,
}

impl<T: Real> LagTensor3<T> {
    fn zeros(first: Lag3, last: Lag3) -> Self {
        let len = |d: usize| (last[d] - first[d] + 1) as usize;
        Self {
            first,
            values: Array3::from_elem((len(0), len(1), len(2)), Complex::new(T::zero(), T::zero())),
        }
    }

    pub fn first_lag(&self) -> Lag3 {
        self.first
    }

    pub fn last_lag(&self) -> Lag3 {
        let (x, y, z) = self.values.dim();
        [
            self.first[0] + x as isize - 1,
            self.first[1] + y as isize - 1,
            self.first[2] + z as isize - 1,
        ]
    }

    pub fn values(&self) -> &Array3<Complex<T>> {
        &self.values
    }

    fn slot(&self, k: Lag3) -> Option<Idx3> {
        let (nx, ny, nz) = self.values.dim();
        let dims = [nx, ny, nz];
        let mut idx = [0usize; 3];
        for d in 0..3 {
            let i = k[d] - self.first[d];
            if i < 0 || i as usize >= dims[d] {
                return None;
            }
            idx[d] = i as usize;
        }
        Some(idx)
    }

    /// Value at lag `k`; zero outside the support.
    pub fn get(&self, k: Lag3) -> Complex<T> {
        self.slot(k)
            .map(|i| self.values[i])
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Lag3, Complex<T>)> + '_ {
        self.values.indexed_iter().map(move |((x, y, z), v)| {
            (
                [
                    self.first[0] + x as isize,
                    self.first[1] + y as isize,
                    self.first[2] + z as isize,
                ],
                *v,
            )
        })
    }

    fn scale(&mut self, f: Complex<T>) {
        self.values.mapv_inplace(|v| v * f);
    }

    /// `Σ_k x[k] e^{-jπ uᵀk}`.
    pub fn dtft_at(&self, u: &DirectionCosine3<T>) -> Complex<T> {
        self.iter()
            .fold(Complex::new(T::zero(), T::zero()), |acc, (k, v)| {
                acc + v * Complex::cis(-u.phase(k))
            })
    }
}

/// `c[k] = Σ_l a[l] b*[l−k]` in three dimensions, over
/// `k_d ∈ [-(N_d−1), M_d−1]`.
fn cross_correlation3<T: Real>(
    a: &[(Idx3, Complex<T>)],
    a_ext: Idx3,
    b: &[(Idx3, Complex<T>)],
    b_ext: Idx3,
) -> LagTensor3<T> {
    let first = [
        -(b_ext[0] as isize - 1),
        -(b_ext[1] as isize - 1),
        -(b_ext[2] as isize - 1),
    ];
    let last = [
        a_ext[0] as isize - 1,
        a_ext[1] as isize - 1,
        a_ext[2] as isize - 1,
    ];
    let mut out = LagTensor3::zeros(first, last);
    for (n, bn) in b {
        let bc = bn.conj();
        for (m, am) in a {
            let idx = [
                (m[0] as isize - n[0] as isize - first[0]) as usize,
                (m[1] as isize - n[1] as isize - first[1]) as usize,
                (m[2] as isize - n[2] as isize - first[2]) as usize,
            ];
            out.values[idx] = out.values[idx] + *am * bc;
        }
    }
    out
}

/// `γ = Σ_c w₁[c] w₂*[c]` over the overlapping index box.
pub fn gamma<T: Real>(w1: &GridArray3<T>, w2: &GridArray3<T>) -> Result<Complex<T>> {
    let (e1, e2) = (w1.extents(), w2.extents());
    let mut g = Complex::new(T::zero(), T::zero());
    for x in 0..e1[0].min(e2[0]) {
        for y in 0..e1[1].min(e2[1]) {
            for z in 0..e1[2].min(e2[2]) {
                g = g + w1.taper[[x, y, z]] * w2.taper[[x, y, z]].conj();
            }
        }
    }
    let energy = |w: &GridArray3<T>| w.taper.iter().fold(T::zero(), |a, v| a + v.norm_sqr());
    if g.norm() <= T::epsilon() * T::lit(16.0) * (energy(w1) * energy(w2)).sqrt() {
        return Err(PpoError::ZeroNormalization);
    }
    Ok(g)
}

/// `w_c[k] = (w₁ ⋆ w₂*[−·])[k] / γ`.
pub fn weighting3<T: Real>(w1: &GridArray3<T>, w2: &GridArray3<T>) -> Result<LagTensor3<T>> {
    let g = gamma(w1, w2)?;
    let mut wc = cross_correlation3(&w1.support(), w1.extents(), &w2.support(), w2.extents());
    wc.scale(Complex::new(T::one(), T::zero()) / g);
    let zero_slot = wc.slot([0, 0, 0]).expect("lag 0 is always in range");
    wc.values[zero_slot] = Complex::new(T::one(), T::zero());
    Ok(wc)
}

fn check_data<T: Real>(x: &ArrayView3<Complex<T>>, w: &GridArray3<T>) -> Result<()> {
    let (a, b, c) = x.dim();
    if [a, b, c] != w.extents() {
        return Err(PpoError::Geometry(format!(
            "snapshot shape {:?} differs from array extents {:?}",
            [a, b, c],
            w.extents()
        )));
    }
    Ok(())
}

/// ACF estimate `r̂[k] = (w₁x₁ ⋆ (w₂x₂)*[−·])[k] / γ` of one snapshot.
pub fn acf3<T: Real>(
    x1: ArrayView3<Complex<T>>,
    x2: ArrayView3<Complex<T>>,
    w1: &GridArray3<T>,
    w2: &GridArray3<T>,
) -> Result<LagTensor3<T>> {
    check_data(&x1, w1)?;
    check_data(&x2, w2)?;
    let g = gamma(w1, w2)?;
    let tapered = |w: &GridArray3<T>, x: &ArrayView3<Complex<T>>| -> Vec<(Idx3, Complex<T>)> {
        w.support()
            .into_iter()
            .map(|(i, wi)| (i, wi * x[i]))
            .collect()
    };
    let mut r = cross_correlation3(
        &tapered(w1, &x1),
        w1.extents(),
        &tapered(w2, &x2),
        w2.extents(),
    );
    r.scale(Complex::new(T::one(), T::zero()) / g);
    Ok(r)
}

/// Multivariate PPO at `u`, evaluated as the DTFT of [`acf3`].
pub fn ppo3<T: Real>(
    x1: ArrayView3<Complex<T>>,
    x2: ArrayView3<Complex<T>>,
    w1: &GridArray3<T>,
    w2: &GridArray3<T>,
    u: &DirectionCosine3<T>,
) -> Result<Complex<T>> {
    Ok(acf3(x1, x2, w1, w2)?.dtft_at(u))
}

/// Multivariate PPO by the explicit sextuple sum over `m` and `n`.
pub fn ppo3_direct<T: Real>(
    x1: ArrayView3<Complex<T>>,
    x2: ArrayView3<Complex<T>>,
    w1: &GridArray3<T>,
    w2: &GridArray3<T>,
    u: &DirectionCosine3<T>,
) -> Result<Complex<T>> {
    check_data(&x1, w1)?;
    check_data(&x2, w2)?;
    let g = gamma(w1, w2)?;
    let mut acc = Complex::new(T::zero(), T::zero());
    for ((mx, my, mz), wm) in w1.taper.indexed_iter() {
        for ((nx, ny, nz), wn) in w2.taper.indexed_iter() {
            let k = [
                mx as isize - nx as isize,
                my as isize - ny as isize,
                mz as isize - nz as isize,
            ];
            acc = acc
                + *wm
                    * wn.conj()
                    * x1[[mx, my, mz]]
                    * x2[[nx, ny, nz]].conj()
                    * Complex::cis(-u.phase(k));
        }
    }
    Ok(acc / g)
}

/// `E{P̂(u)} = Σ_k w_c[k] r_xx[k] e^{-jπ uᵀk}` for a true ACF given as a
/// function of the lag vector.
pub fn expected_ppo3<T: Real>(
    wc: &LagTensor3<T>,
    r_xx: impl Fn(Lag3) -> Complex<T>,
    u: &DirectionCosine3<T>,
) -> Complex<T> {
    wc.iter()
        .fold(Complex::new(T::zero(), T::zero()), |acc, (k, w)| {
            acc + w * r_xx(k) * Complex::cis(-u.phase(k))
        })
}

/// One trial of 3-D data for the two subarrays.
pub type SnapshotPair3<T> = (Array3<Complex<T>>, Array3<Complex<T>>);

/// White circular Gaussian snapshots for two 3-D subarrays drawn from one
/// shared field and masked by each occupancy; one ChaCha stream per trial.
pub fn white_snapshots3<T: Real>(
    w1: &GridArray3<T>,
    w2: &GridArray3<T>,
    sigma2: T,
    trials: usize,
    seed: u64,
) -> Vec<SnapshotPair3<T>> {
    white_snapshot_range3(w1, w2, sigma2, 0, trials, seed)
}

/// Trials `first..first + count` of [`white_snapshots3`].
pub fn white_snapshot_range3<T: Real>(
    w1: &GridArray3<T>,
    w2: &GridArray3<T>,
    sigma2: T,
    first: usize,
    count: usize,
    seed: u64,
) -> Vec<SnapshotPair3<T>> {
    let (e1, e2) = (w1.extents(), w2.extents());
    let span = [e1[0].max(e2[0]), e1[1].max(e2[1]), e1[2].max(e2[2])];
    (first..first + count)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let mut field = Array3::from_elem(span, Complex::new(T::zero(), T::zero()));
            // Fill x-fastest so the draw order matches the text layout.
            for z in 0..span[2] {
                for y in 0..span[1] {
                    for x in 0..span[0] {
                        field[[x, y, z]] = complex_normal(&mut rng, sigma2);
                    }
                }
            }
            let mask = |w: &GridArray3<T>| {
                Array3::from_shape_fn(w.occupancy.dim(), |(x, y, z)| {
                    if w.occupancy[[x, y, z]] {
                        field[[x, y, z]]
                    } else {
                        Complex::new(T::zero(), T::zero())
                    }
                })
            };
            (mask(w1), mask(w2))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::ProductProcessor;
    use crate::geometry::ProductArray;
    use crate::signal::{generate_snapshots, NoiseSpec};
    use crate::tapering::{make_taper, normalization_nu, weighting_function};

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn gamma_examples() {
        let cube = GridArray3::<f64>::full_box([2, 2, 2]).unwrap();
        assert_eq!(gamma(&cube, &cube).unwrap(), c(8.0, 0.0));

        let arr = ProductArray::coprime(3, 2, 4, 5).unwrap();
        let w1 = make_taper(arr.subarray_a(), &TaperFamily::<f64>::Hann).unwrap();
        let w2 = make_taper(arr.subarray_b(), &TaperFamily::Hamming).unwrap();
        let g = gamma(
            &GridArray3::from_linear(&w1).unwrap(),
            &GridArray3::from_linear(&w2).unwrap(),
        )
        .unwrap();
        assert_eq!(g, normalization_nu(&w1, &w2).unwrap());

        let a = [c(1.0, 0.0), c(0.5, 0.2)];
        let b = [c(1.0, 0.0), c(0.3, 0.0), c(0.7, -0.1)];
        let d = [c(2.0, 0.0)];
        let s1 = GridArray3::separable(&a, &b, &d).unwrap();
        let s2 = GridArray3::separable(&b[..2], &a, &d).unwrap();
        let dot = |x: &[Complex<f64>], y: &[Complex<f64>]| -> Complex<f64> {
            x.iter().zip(y).map(|(p, q)| p * q.conj()).sum()
        };
        let expect = dot(&a, &b[..2]) * dot(&b[..2], &a) * dot(&d, &d);
        assert!((gamma(&s1, &s2).unwrap() - expect).norm() < 1e-14);
    }

    #[test]
    fn single_cell_cases() {
        let w1 = GridArray3::separable(&[c(2.0, 1.0)], &[c(1.0, 0.0)], &[c(1.0, 0.0)]).unwrap();
        let w2 = GridArray3::separable(&[c(0.5, -0.5)], &[c(1.0, 0.0)], &[c(1.0, 0.0)]).unwrap();
        let wc = weighting3(&w1, &w2).unwrap();
        assert_eq!(wc.get([0, 0, 0]), c(1.0, 0.0));
        assert_eq!(wc.values().len(), 1);

        let x1 = Array3::from_elem((1, 1, 1), c(0.4, 0.9));
        let x2 = Array3::from_elem((1, 1, 1), c(-1.1, 0.2));
        let g = gamma(&w1, &w2).unwrap();
        let expect = c(2.0, 1.0) * x1[[0, 0, 0]] * (c(0.5, -0.5) * x2[[0, 0, 0]]).conj() / g;
        let u = DirectionCosine3::new([0.3, -0.2, 0.5]).unwrap();
        assert!((ppo3(x1.view(), x2.view(), &w1, &w2, &u).unwrap() - expect).norm() < 1e-15);
        let r = acf3(x1.view(), x1.view(), &w1, &w1).unwrap();
        assert!((r.get([0, 0, 0]) - c(x1[[0, 0, 0]].norm_sqr(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn full_box_plane_wave_peaks_at_cell_count() {
        let ext = [3, 2, 4];
        let w = GridArray3::<f64>::full_box(ext).unwrap();
        let u0 = DirectionCosine3::physical([0.3, -0.4, 0.5]).unwrap();
        let x = Array3::from_shape_fn((3, 2, 4), |(x, y, z)| {
            Complex::cis(u0.phase([x as isize, y as isize, z as isize]))
        });
        let p = ppo3(x.view(), x.view(), &w, &w, &u0).unwrap();
        assert!((p - c(24.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn degenerate_axes_match_linear_path() {
        let arr = ProductArray::nested(4, 5, 2).unwrap();
        let w1 = make_taper(arr.subarray_a(), &TaperFamily::<f64>::Hamming).unwrap();
        let w2 = make_taper(arr.subarray_b(), &TaperFamily::Hann).unwrap();
        let (g1, g2) = (
            GridArray3::from_linear(&w1).unwrap(),
            GridArray3::from_linear(&w2).unwrap(),
        );
        let batch = generate_snapshots(&arr, &[], &NoiseSpec::white(1.0).unwrap(), 1, 3).unwrap();
        let lift = |row: ndarray::ArrayView1<Complex<f64>>| {
            Array3::from_shape_fn((1, 1, row.len()), |(_, _, z)| row[z])
        };
        let (x1, x2) = (lift(batch.x1.row(0)), lift(batch.x2.row(0)));
        let proc = ProductProcessor::new(&w1, &w2).unwrap();
        let acf1 = proc.trial_acf(batch.x1.row(0), batch.x2.row(0));
        let acf = acf3(x1.view(), x2.view(), &g1, &g2).unwrap();
        for (k, v) in acf1.iter() {
            assert!((acf.get([0, 0, k]) - v).norm() <= 1e-12 * v.norm().max(1.0));
        }
        let wc1 = weighting_function(&w1, &w2).unwrap();
        let wc3 = weighting3(&g1, &g2).unwrap();
        for (k, v) in wc1.lags().iter() {
            assert!((wc3.get([0, 0, k]) - v).norm() <= 1e-12);
        }
        for uz in [-0.9, 0.1, 0.6] {
            let u = DirectionCosine3::new([0.7, -0.2, uz]).unwrap();
            let p3 = ppo3(x1.view(), x2.view(), &g1, &g2, &u).unwrap();
            let p1 = proc.ppo_at(batch.x1.row(0), batch.x2.row(0), uz);
            assert!((p3 - p1).norm() <= 1e-12 * p1.norm().max(1.0));
        }
    }

    #[test]
    fn acf_route_matches_sextuple_sum() {
        let w1 = GridArray3::windowed_box([3, 2, 3], &TaperFamily::Hamming).unwrap();
        let mut occ = Array3::from_elem((2, 3, 2), true);
        occ[[1, 1, 0]] = false;
        let w2 = GridArray3::new(
            occ,
            Array3::from_shape_fn((2, 3, 2), |(x, y, z)| {
                c(1.0 + x as f64, 0.2 * (y + z) as f64)
            }),
        )
        .unwrap();
        let data = white_snapshots3(&w1, &w2, 1.0, 1, 12);
        let (x1, x2) = &data[0];
        for u in [[0.1, 0.2, -0.3], [-0.9, 0.4, 0.05], [1.0, -1.0, 0.7]] {
            let u = DirectionCosine3::new(u).unwrap();
            let fast = ppo3(x1.view(), x2.view(), &w1, &w2, &u).unwrap();
            let slow = ppo3_direct(x1.view(), x2.view(), &w1, &w2, &u).unwrap();
            assert!((fast - slow).norm() <= 1e-10 * slow.norm());
        }
    }

    #[test]
    fn separable_weighting_factorizes() {
        let a = [c(1.0, 0.0), c(0.5, 0.0), c(0.25, 0.1)];
        let b = [c(1.0, 0.0), c(-0.3, 0.4)];
        let d = [c(1.0, 0.0), c(0.9, 0.0), c(0.2, 0.0), c(0.6, 0.0)];
        let w = GridArray3::separable(&a, &b, &d).unwrap();
        let wc = weighting3(&w, &w).unwrap();
        let lin = |v: &[Complex<f64>]| {
            let sub = crate::geometry::SubarraySpec::uniform(v.len(), 1).unwrap();
            let t = TaperedWeights::new(&sub, v.to_vec()).unwrap();
            weighting_function(&t, &t).unwrap()
        };
        let (fx, fy, fz) = (lin(&a), lin(&b), lin(&d));
        for (k, v) in wc.iter() {
            let expect = fx.get(k[0]) * fy.get(k[1]) * fz.get(k[2]);
            assert!((v - expect).norm() <= 1e-12);
        }
    }

    #[test]
    fn uniform_box_weighting_counts_pairs() {
        let w1 = GridArray3::<f64>::full_box([2, 3, 1]).unwrap();
        let w2 = GridArray3::<f64>::full_box([3, 2, 2]).unwrap();
        let wc = weighting3(&w1, &w2).unwrap();
        let g = gamma(&w1, &w2).unwrap();
        for (k, v) in wc.iter() {
            let mut count = 0;
            for m in ndarray::indices((2, 3, 1)) {
                for n in ndarray::indices((3, 2, 2)) {
                    let d = [
                        m.0 as isize - n.0 as isize,
                        m.1 as isize - n.1 as isize,
                        m.2 as isize - n.2 as isize,
                    ];
                    count += (d == k) as i32;
                }
            }
            assert!((v * g - c(count as f64, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn direction_cosines() {
        assert!(DirectionCosine3::new([1.2, 0.0, 0.0]).is_err());
        assert!(DirectionCosine3::physical([0.8, 0.8, 0.0]).is_err());
        let virtual_dir = DirectionCosine3::new([0.8, 0.8, 0.0]).unwrap();
        assert!(!virtual_dir.is_physical());
        let d = DirectionCosine3::from_angles(0.4f64, 1.1);
        assert!(d.is_physical());
    }

    #[test]
    fn doc_round_trip_is_x_fastest() {
        let mut occ = Array3::from_elem((2, 2, 1), true);
        occ[[1, 0, 0]] = false;
        let w = GridArray3::new(
            occ,
            Array3::from_shape_fn((2, 2, 1), |(x, y, _)| c(x as f64 + 10.0 * y as f64, 0.0)),
        )
        .unwrap();
        let doc = w.to_doc();
        assert_eq!(doc.occupancy, vec![1, 0, 1, 1]);
        assert_eq!(doc.taper_re, vec![0.0, 0.0, 10.0, 11.0]);
        assert_eq!(GridArray3::<f64>::from_doc(&doc).unwrap(), w);
    }

    #[test]
    fn rejects_invalid_arrays() {
        let mut occ = Array3::from_elem((2, 1, 1), true);
        occ[[0, 0, 0]] = false;
        assert!(GridArray3::new(occ, Array3::from_elem((2, 1, 1), c(1.0, 0.0))).is_err());
        assert!(GridArray3::<f64>::full_box([0, 1, 1]).is_err());
        let w = GridArray3::<f64>::full_box([2, 1, 1]).unwrap();
        let x = Array3::from_elem((3, 1, 1), c(1.0, 0.0));
        assert!(acf3(x.view(), x.view(), &w, &w).is_err());
    }
}
