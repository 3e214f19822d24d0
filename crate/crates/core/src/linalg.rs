//! Small helpers over `nalgebra` types that only need [`Real`] arithmetic.

use nalgebra::{Matrix3, Vector3};

use crate::scalar::Real;

#[inline]
pub fn norm_squared<T: Real>(v: &Vector3<T>) -> T {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

#[inline]
pub fn norm<T: Real>(v: &Vector3<T>) -> T {
    norm_squared(v).sqrt()
}

#[inline]
pub fn cross<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> Vector3<T> {
    Vector3::new(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )
}

pub fn frobenius_norm<T: Real>(m: &Matrix3<T>) -> T {
    let mut s = T::zero();
    for x in m.iter() {
        s += *x * *x;
    }
    s.sqrt()
}

/// `a bᵀ`
#[inline]
pub fn outer<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> Matrix3<T> {
    Matrix3::from_fn(|i, j| a[i] * b[j])
}

pub fn lift_vec<T: Real>(v: &Vector3<f64>) -> Vector3<T> {
    v.map(T::lit)
}

pub fn lift_mat<T: Real>(m: &Matrix3<f64>) -> Matrix3<T> {
    m.map(T::lit)
}

pub fn value_vec<T: Real>(v: &Vector3<T>) -> Vector3<f64> {
    v.map(|x| x.value())
}

pub fn value_mat<T: Real>(m: &Matrix3<T>) -> Matrix3<f64> {
    m.map(|x| x.value())
}
