use chaoskit::{chaos::ChaosFunctional, kernels::SymKernel, space::DiscreteSpace};

#[test]
fn library_snippet_runs() -> chaoskit::Result<()> {
    let space = DiscreteSpace::uniform(4, 1.0)?;
    let f = ChaosFunctional::integral(&space, SymKernel::from_fn(4, 2, |i| 0.1 * (i[0] + i[1]) as f64)?)?;
    let config = chaoskit::space::sample_poisson(&space, 42);
    assert!(f.evaluate(&config)?.is_finite());
    Ok(())
}
