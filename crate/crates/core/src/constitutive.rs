//! Anisotropic elasto-plastic cloth material.
//!
//! The elastic gradient `F` maps the rest material frame `D` (two tangent
//! directions and the rest normal) to its deformed image `d = F D`. A
//! Gram-Schmidt QR factorisation `d = Q R` removes the rotation, and the energy
//! density is split over the blocks of `R`:
//!
//! * `R1 = [[r11, r12], [0, r22]]`: in-plane stretch, fixed corotated energy;
//! * `R2 = (r13, r23)`: shear of the normal against the surface;
//! * `R3 = r33`: normal compression, a one-sided cubic barrier.
//!
//! Plasticity bounds the distance of the elastic gradient from identity by the
//! friction coefficient `c_F`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cross, frobenius_norm, norm};
use crate::scalar::Real;

/// Tolerance below which the two in-plane columns count as parallel.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Default friction coefficient `c_F`.
pub const DEFAULT_FRICTION: f64 = 0.1;

/// Physical parameters of the cloth.
///
/// `E`, `ν`, `k` and `γ` are identifiable; `c_F` and `ρ` are fixed constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize")
)]
pub struct ConstitutiveParams<T = f64> {
    pub young_modulus: T,
    pub poisson_ratio: T,
    pub contact_stiffness: T,
    pub shear_stiffness: T,
    #[serde(default = "default_friction")]
    pub friction_coefficient: T,
    pub density: T,
}

fn default_friction<T: Real>() -> T {
    T::lit(DEFAULT_FRICTION)
}

impl<T: Real> ConstitutiveParams<T> {
    /// Checks the parameter invariants, collecting every violation.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let e = self.young_modulus.value();
        let nu = self.poisson_ratio.value();
        if !(e > 0.0 && e.is_finite()) {
            v.push(format!("young_modulus must be positive and finite, got {e}"));
        }
        if !(0.0..0.5).contains(&nu) {
            v.push(format!("poisson_ratio must lie in [0, 0.5), got {nu}"));
        }
        for (name, x) in [
            ("contact_stiffness", self.contact_stiffness.value()),
            ("shear_stiffness", self.shear_stiffness.value()),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("{name} must be non-negative and finite, got {x}"));
            }
        }
        for (name, x) in [
            ("friction_coefficient", self.friction_coefficient.value()),
            ("density", self.density.value()),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{name} must be positive and finite, got {x}"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(v.join("; ")))
        }
    }

    /// Identifiable parameters in the order `(E, ν, k, γ)`.
    pub fn identifiable(&self) -> [T; 4] {
        [
            self.young_modulus,
            self.poisson_ratio,
            self.contact_stiffness,
            self.shear_stiffness,
        ]
    }

    /// Copy with the identifiable parameters replaced.
    pub fn with_identifiable(&self, a: [T; 4]) -> Self {
        Self {
            young_modulus: a[0],
            poisson_ratio: a[1],
            contact_stiffness: a[2],
            shear_stiffness: a[3],
            ..*self
        }
    }

    /// Primal copy.
    pub fn values(&self) -> ConstitutiveParams<f64> {
        ConstitutiveParams {
            young_modulus: self.young_modulus.value(),
            poisson_ratio: self.poisson_ratio.value(),
            contact_stiffness: self.contact_stiffness.value(),
            shear_stiffness: self.shear_stiffness.value(),
            friction_coefficient: self.friction_coefficient.value(),
            density: self.density.value(),
        }
    }

    pub fn lift<U: Real>(&self) -> ConstitutiveParams<U> {
        let p = self.values();
        ConstitutiveParams {
            young_modulus: U::lit(p.young_modulus),
            poisson_ratio: U::lit(p.poisson_ratio),
            contact_stiffness: U::lit(p.contact_stiffness),
            shear_stiffness: U::lit(p.shear_stiffness),
            friction_coefficient: U::lit(p.friction_coefficient),
            density: U::lit(p.density),
        }
    }

    /// Lamé constants and stiffnesses in the form the energy consumes.
    pub fn material(&self) -> Result<Material<T>> {
        let (mu, lambda) = lame_from_params(self.young_modulus, self.poisson_ratio)?;
        Ok(Material {
            mu,
            lambda,
            contact_stiffness: self.contact_stiffness,
            shear_stiffness: self.shear_stiffness,
            friction: self.friction_coefficient,
        })
    }
}

/// Energy coefficients derived from [`ConstitutiveParams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material<T> {
    pub mu: T,
    pub lambda: T,
    pub contact_stiffness: T,
    pub shear_stiffness: T,
    pub friction: T,
}

/// Lamé constants `(μ, λ)` from Young's modulus and Poisson's ratio.
pub fn lame_from_params<T: Real>(young: T, poisson: T) -> Result<(T, T)> {
    let e = young.value();
    let nu = poisson.value();
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::Domain(format!(
            "Young's modulus must be positive, got {e}"
        )));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::Domain(format!(
            "Poisson's ratio must lie in [0, 0.5), got {nu}"
        )));
    }
    let one = T::one();
    let two = T::lit(2.0);
    let mu = young / (two * (one + poisson));
    let lambda = young * poisson / ((one + poisson) * (one - two * poisson));
    Ok((mu, lambda))
}

/// Fixed corotated energy density of an in-plane stretch with singular values
/// `σ1, σ2` and area ratio `J`.
pub fn fixed_corotated_energy<T: Real>(s1: T, s2: T, j: T, mu: T, lambda: T) -> T {
    let one = T::one();
    mu * ((s1 - one).powi(2) + (s2 - one).powi(2)) + lambda * T::lit(0.5) * (j - one).powi(2)
}

/// Gram-Schmidt QR of `F D`.
///
/// `Q = [q1, q2, q1 × q2]` is a proper rotation; `r11, r22 > 0`, while `r33`
/// carries the sign of the normal image relative to `q3`.
pub fn qr_material_frame<T: Real>(
    elastic_gradient: &Matrix3<T>,
    directions: &Matrix3<T>,
) -> Result<(Matrix3<T>, Matrix3<T>)> {
    gram_schmidt(&(elastic_gradient * directions))
}

/// QR factorisation of the deformed material directions `d = F D`.
pub fn gram_schmidt<T: Real>(d: &Matrix3<T>) -> Result<(Matrix3<T>, Matrix3<T>)> {
    let a1: Vector3<T> = d.column(0).into_owned();
    let a2: Vector3<T> = d.column(1).into_owned();
    let a3: Vector3<T> = d.column(2).into_owned();

    let r11 = norm(&a1);
    if !(r11.value() > DEGENERACY_TOL) {
        return Err(degenerate("first material direction collapsed"));
    }
    let q1 = a1 / r11;
    let r12 = q1.dot(&a2);
    let u2 = a2 - q1 * r12;
    let r22 = norm(&u2);
    let a2_len = norm(&a2).value();
    if !(r22.value() > DEGENERACY_TOL * a2_len.max(1.0)) {
        return Err(degenerate("in-plane directions are parallel"));
    }
    let q2 = u2 / r22;
    let q3 = cross(&q1, &q2);
    let r13 = q1.dot(&a3);
    let r23 = q2.dot(&a3);
    let r33 = q3.dot(&a3);

    let z = T::zero();
    let q = Matrix3::from_columns(&[q1, q2, q3]);
    #[rustfmt::skip]
    let r = Matrix3::new(
        r11, r12, r13,
        z,   r22, r23,
        z,   z,   r33,
    );
    Ok((q, r))
}

fn degenerate(reason: &str) -> Error {
    Error::DegenerateElement {
        element: usize::MAX,
        reason: reason.to_string(),
    }
}

/// Sum of the in-plane singular values of `R1`, valid for `det R1 ≥ 0`.
fn singular_value_sum<T: Real>(r: &Matrix3<T>) -> T {
    let a = r[(0, 0)] + r[(1, 1)];
    (a * a + r[(0, 1)] * r[(0, 1)]).sqrt()
}

/// Singular values `σ1 ≥ σ2` of the upper triangular in-plane block.
pub fn in_plane_singular_values<T: Real>(r: &Matrix3<T>) -> (T, T) {
    let sum = singular_value_sum(r);
    let b = r[(0, 0)] - r[(1, 1)];
    let diff = (b * b + r[(0, 1)] * r[(0, 1)]).sqrt();
    let half = T::lit(0.5);
    (half * (sum + diff), half * (sum - diff))
}

/// Energy density split by the parameter each term depends on.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyTerms<T> {
    /// Normal compression barrier, scales with `k`.
    pub contact: T,
    /// Normal shear, scales with `γ`.
    pub shear: T,
    /// In-plane `μ` part of the corotated energy.
    pub stretch: T,
    /// In-plane `λ` part of the corotated energy.
    pub area: T,
}

impl<T: Real> EnergyTerms<T> {
    pub fn zero() -> Self {
        Self {
            contact: T::zero(),
            shear: T::zero(),
            stretch: T::zero(),
            area: T::zero(),
        }
    }

    pub fn total(&self) -> T {
        self.contact + self.shear + self.stretch + self.area
    }
}

/// Per-term energy density of an upper triangular `R`.
pub fn energy_terms<T: Real>(r: &Matrix3<T>, m: &Material<T>) -> EnergyTerms<T> {
    let one = T::one();
    let r33 = r[(2, 2)];
    let contact = if r33 < one {
        m.contact_stiffness / T::lit(3.0) * (one - r33).powi(3)
    } else {
        T::zero()
    };
    let shear = m.shear_stiffness * (r[(0, 2)] * r[(0, 2)] + r[(1, 2)] * r[(1, 2)]);
    // μ Σ(σi − 1)² = μ (‖R1‖² − 2(σ1 + σ2) + 2), smooth at σ1 = σ2.
    let (r11, r12, r22) = (r[(0, 0)], r[(0, 1)], r[(1, 1)]);
    let two = T::lit(2.0);
    let stretch = m.mu * (r11 * r11 + r12 * r12 + r22 * r22 - two * singular_value_sum(r) + two);
    let j = r11 * r22;
    let area = m.lambda * T::lit(0.5) * (j - one) * (j - one);
    EnergyTerms {
        contact,
        shear,
        stretch,
        area,
    }
}

/// `f(R3) + g(R2) + h(R1)`.
pub fn orthogonal_energy<T: Real>(r: &Matrix3<T>, m: &Material<T>) -> T {
    energy_terms(r, m).total()
}

/// Energy density of an elastic gradient in the material frame `D`.
pub fn energy_density<T: Real>(
    elastic_gradient: &Matrix3<T>,
    directions: &Matrix3<T>,
    m: &Material<T>,
) -> Result<T> {
    let (_, r) = qr_material_frame(elastic_gradient, directions)?;
    Ok(orthogonal_energy(&r, m))
}

/// `∂Ŵ/∂R`, upper triangular.
pub fn energy_gradient_r<T: Real>(r: &Matrix3<T>, m: &Material<T>) -> Matrix3<T> {
    let one = T::one();
    let two = T::lit(2.0);
    let (r11, r12, r22) = (r[(0, 0)], r[(0, 1)], r[(1, 1)]);
    let (r13, r23, r33) = (r[(0, 2)], r[(1, 2)], r[(2, 2)]);
    let s = singular_value_sum(r);
    let j = r11 * r22;
    let lj = m.lambda * (j - one);
    let trace_term = (r11 + r22) / s;

    let h11 = m.mu * two * (r11 - trace_term) + lj * r22;
    let h22 = m.mu * two * (r22 - trace_term) + lj * r11;
    let h12 = m.mu * two * (r12 - r12 / s);
    let w13 = two * m.shear_stiffness * r13;
    let w23 = two * m.shear_stiffness * r23;
    let w33 = if r33 < one {
        -m.contact_stiffness * (one - r33) * (one - r33)
    } else {
        T::zero()
    };
    let z = T::zero();
    #[rustfmt::skip]
    let g = Matrix3::new(
        h11, h12, w13,
        z,   h22, w23,
        z,   z,   w33,
    );
    g
}

/// `∂Ψ/∂d` for `Ψ(d) = Ŵ(R(d))`, `d = Q R`.
///
/// Equivalent to `Q · sym_upper(Ŵ_R Rᵀ) · R⁻ᵀ` with the `1/r33` factors
/// cancelled analytically, so the result stays finite when the normal image
/// collapses into the surface.
pub fn energy_gradient_d<T: Real>(q: &Matrix3<T>, r: &Matrix3<T>, m: &Material<T>) -> Matrix3<T> {
    let g = energy_gradient_r(r, m);
    let (r11, r12, r22) = (r[(0, 0)], r[(0, 1)], r[(1, 1)]);
    let (r13, r23, r33) = (r[(0, 2)], r[(1, 2)], r[(2, 2)]);
    let (h11, h12, h22) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
    let w = Vector3::new(g[(0, 2)], g[(1, 2)], g[(2, 2)]);

    // Upper triangle of A = Ŵ_R Rᵀ, mirrored.
    let a00 = h11 * r11 + h12 * r12 + w[0] * r13;
    let a01 = h12 * r22 + w[0] * r23;
    let a02 = w[0] * r33;
    let a11 = h22 * r22 + w[1] * r23;
    let a12 = w[1] * r33;
    let a22 = w[2] * r33;
    let m0 = Vector3::new(a00, a01, a02);
    let m1 = Vector3::new(a01, a11, a12);

    let n2 = w;
    let n1 = (m1 - w * r23) / r22;
    let n0 = m0 / r11 - m1 * (r12 / (r11 * r22)) + w * ((r12 * r23 - r13 * r22) / (r11 * r22));
    let _ = a22;
    q * Matrix3::from_columns(&[n0, n1, n2])
}

/// First Piola-Kirchhoff stress `∂Ψ/∂F` of the full 3×3 elastic gradient.
pub fn first_piola_stress<T: Real>(state: &DeformationState<T>, m: &Material<T>) -> Matrix3<T> {
    energy_gradient_d(&state.frame, &state.triangular, m) * state.material_directions.transpose()
}

/// Yield function `‖F − I‖_F − c_F`.
pub fn yield_value<T: Real>(elastic_gradient: &Matrix3<T>, friction: T) -> T {
    frobenius_norm(&(elastic_gradient - Matrix3::identity())) - friction
}

/// Projects `F` back onto the yield surface when it lies outside.
pub fn return_map<T: Real>(elastic_gradient: &Matrix3<T>, friction: T) -> Matrix3<T> {
    let dev = elastic_gradient - Matrix3::identity();
    let n = frobenius_norm(&dev);
    if n <= friction {
        return *elastic_gradient;
    }
    let mut out = dev * (friction / n) + Matrix3::identity();
    // Rounding can leave the result a hair outside the surface.
    let mut shrink = T::one();
    while frobenius_norm(&(out - Matrix3::identity())) > friction {
        shrink *= T::lit(1.0 - 1e-15);
        out = dev * (shrink * friction / n) + Matrix3::identity();
    }
    out
}

/// Elastic state of one element with its cached QR factorisation.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationState<T: Real = f64> {
    /// Full 3×3 elastic gradient `F`.
    pub elastic_gradient: Matrix3<T>,
    /// Rest frame `D`: tangents in columns 0 and 1, unit normal in column 2.
    pub material_directions: Matrix3<T>,
    pub frame: Matrix3<T>,
    pub triangular: Matrix3<T>,
    pub singular_values: [T; 2],
    pub area_ratio: T,
}

impl<T: Real> DeformationState<T> {
    pub fn new(elastic_gradient: Matrix3<T>, material_directions: Matrix3<T>) -> Result<Self> {
        let (frame, triangular) = qr_material_frame(&elastic_gradient, &material_directions)?;
        Ok(Self::from_parts(
            elastic_gradient,
            material_directions,
            frame,
            triangular,
        ))
    }

    /// Rest state in frame `D`.
    pub fn rest(material_directions: Matrix3<T>) -> Self {
        Self::new(Matrix3::identity(), material_directions).expect("orthonormal frame")
    }

    pub(crate) fn from_parts(
        elastic_gradient: Matrix3<T>,
        material_directions: Matrix3<T>,
        frame: Matrix3<T>,
        triangular: Matrix3<T>,
    ) -> Self {
        let (s1, s2) = in_plane_singular_values(&triangular);
        let area_ratio = triangular[(0, 0)] * triangular[(1, 1)];
        Self {
            elastic_gradient,
            material_directions,
            frame,
            triangular,
            singular_values: [s1, s2],
            area_ratio,
        }
    }

    /// World images of the two tangent directions, `F D[:, 0..2]`.
    pub fn in_plane_gradient(&self) -> nalgebra::Matrix3x2<T> {
        let d = self.elastic_gradient * self.material_directions;
        d.fixed_columns::<2>(0).into_owned()
    }

    /// World image of the rest normal.
    pub fn normal_component(&self) -> Vector3<T> {
        self.elastic_gradient * self.material_directions.column(2)
    }

    pub fn energy_density(&self, m: &Material<T>) -> T {
        orthogonal_energy(&self.triangular, m)
    }

    pub fn values(&self) -> DeformationState<f64> {
        DeformationState {
            elastic_gradient: self.elastic_gradient.map(|x| x.value()),
            material_directions: self.material_directions.map(|x| x.value()),
            frame: self.frame.map(|x| x.value()),
            triangular: self.triangular.map(|x| x.value()),
            singular_values: self.singular_values.map(|x| x.value()),
            area_ratio: self.area_ratio.value(),
        }
    }
}
