//! Single-precision builds of the plant and the NARX net track their f64
//! counterparts.

use flexbeam::modal::{BeamProperties, ModeBasis};
use flexbeam::narx::NetRole;
use flexbeam::plant::PlantState;
use flexbeam::{ModalSystem32, ModalSystem64, NarxNet32, NarxNet64, Plant32, Plant64};
use nalgebra::DVector;

#[test]
fn plant_free_response_agrees() {
    let s64 = ModalSystem64::assemble(&BeamProperties::reference(3), &ModeBasis::new(1.0, 3).unwrap()).unwrap();
    let s32 = ModalSystem32::assemble(&BeamProperties::reference(3), &ModeBasis::new(1.0f32, 3).unwrap()).unwrap();
    let (p64, p32) = (Plant64::new(s64).unwrap(), Plant32::new(s32).unwrap());
    let mut a = PlantState::<f64>::zeros(3);
    let mut b = PlantState::<f32>::zeros(3);
    a.coords[0] = 0.1;
    b.coords[0] = 0.1;
    let force = DVector::from_vec(vec![0.5, -0.2, 0.1]);
    let force32 = force.map(|v| v as f32);
    for _ in 0..200 {
        a = p64.step(&a, &force, 0.01).unwrap();
        b = p32.step(&b, &force32, 0.01).unwrap();
    }
    for i in 0..3 {
        assert!((a.coords[i] - b.coords[i] as f64).abs() < 1e-4, "{i}: {} vs {}", a.coords[i], b.coords[i]);
    }
}

#[test]
fn narx_forward_agrees() {
    let n64 = NarxNet64::new(NetRole::Forward, 3, 3, 2, 2, 10, 3).unwrap();
    let mut n32 = NarxNet32::new(NetRole::Forward, 3, 3, 2, 2, 10, 3).unwrap();
    n32.set_params(&n64.params().map(|v| v as f32)).unwrap();
    let x = DVector::from_fn(n64.regressor_dim(), |i, _| (i as f64 * 0.37).sin());
    let y64 = n64.forward(&x).unwrap();
    let y32 = n32.forward(&x.map(|v| v as f32)).unwrap();
    for i in 0..3 {
        assert!((y64[i] - y32[i] as f64).abs() < 1e-5);
    }
}
