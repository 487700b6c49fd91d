//! Reverse-mode gradients from the tape compared with central differences on
//! a one-layer logistic model.

use subtype_nets::numerics::{rng, Matrix, Parameter, Tape};

fn loss(w: &Parameter, x: &Matrix, y: &[f64]) -> subtype_nets::Result<(Tape, subtype_nets::numerics::Var)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.param(w);
    let logits = tape.matmul(xv, wv)?;
    let p = tape.sigmoid(logits);
    let l = tape.bce(p, y, 1e-12)?;
    Ok((tape, l))
}

fn main() -> subtype_nets::Result<()> {
    let mut r = rng::stream(0, "autodiff");
    let x = Matrix::randn(16, 3, 1.0, &mut r);
    let y: Vec<f64> = (0..16).map(|i| (i % 2) as f64).collect();
    let mut w = Parameter::new(Matrix::randn(3, 1, 0.5, &mut r));
    let (tape, l) = loss(&w, &x, &y)?;
    tape.backward(l, &mut [&mut w])?;
    let h = 1e-6;
    for i in 0..3 {
        let mut plus = w.clone();
        plus.value.set(i, 0, w.value.get(i, 0) + h);
        let mut minus = w.clone();
        minus.value.set(i, 0, w.value.get(i, 0) - h);
        let (tp, lp) = loss(&plus, &x, &y)?;
        let (tm, lm) = loss(&minus, &x, &y)?;
        let numeric = (tp.value(lp).get(0, 0) - tm.value(lm).get(0, 0)) / (2.0 * h);
        println!("w[{i}]: tape {:+.8}, central difference {:+.8}", w.grad.get(i, 0), numeric);
    }
    Ok(())
}
