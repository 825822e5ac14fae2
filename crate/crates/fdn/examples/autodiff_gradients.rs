//! The reverse-mode tape: record a computation, pull gradients back to the
//! named parameters, and cross-check them against central finite differences.
//!
//!     cargo run --release --example autodiff_gradients

use fdn::adiff::{grad_check, Backend, ParamStore, StreamRng, Tape, TapeExec, Tensor};

fn main() -> fdn::Result<()> {
    // A little least-squares problem: f(W, b) = ||W x + b - y||^2.
    let mut params = ParamStore::new();
    let mut rng = StreamRng::new(7);
    params.insert("w", rng.normal_tensor(&[2, 2]))?;
    params.insert("b", rng.normal_tensor(&[2]))?;
    let x = Tensor::vector(vec![0.5, -1.0]);
    let y = Tensor::vector(vec![1.0, 0.0]);

    let tape = Tape::new();
    let ctx = TapeExec::new(&tape, &params);
    let w = ctx.param("w");
    let b = ctx.param("b");
    let pred = ctx.add(&ctx.matmul(&w, &ctx.constant(x.clone())), &b);
    let resid = ctx.sub(&pred, &ctx.constant(y.clone()));
    let loss = ctx.sum(&ctx.square(&resid));

    println!("loss = {:.6}", tape.value(loss).item());
    let grads = tape.backward(loss)?;
    for (name, grad) in &grads {
        println!("d loss / d {name} = {:?}", grad.data());
    }

    // The same loss through the checker: analytic vs central differences.
    let report = grad_check(&params, 1e-5, 1e-4, move |ctx| {
        let w = ctx.param("w");
        let b = ctx.param("b");
        let pred = ctx.add(&ctx.matmul(&w, &ctx.constant(x.clone())), &b);
        let resid = ctx.sub(&pred, &ctx.constant(y.clone()));
        Ok(ctx.sum(&ctx.square(&resid)))
    })?;
    for (name, check) in &report.per_param {
        println!(
            "gradcheck {name}: max relative deviation {:.3e} ({})",
            check.max_rel_dev,
            if check.pass { "ok" } else { "MISMATCH" }
        );
    }
    assert!(report.pass());
    Ok(())
}
