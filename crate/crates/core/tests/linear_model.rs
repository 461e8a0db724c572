mod common;

use common::*;
use gaussvae::linalg::{inv_spd, mat_from, vec_from};
use gaussvae::model::{THETA, Y, Y_TILDE, Z};
use gaussvae::*;
use proptest::prelude::*;

#[test]
fn data_marginal_examples() {
    let d = reference_model().data_marginal();
    assert!(d.mean().abs().max() < 1e-15);
    assert!((d.cov()[(0, 0)] - 1.4).abs() < 1e-14);

    let s = mat_from(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    let zero = LinearGaussianModel64::new(Mat64::zeros(2, 3), s.clone(), GaussianDist64::standard(3)).unwrap();
    assert!(max_abs_diff(data_marginal(&zero).cov(), &s) < 1e-15);

    let scalar = LinearGaussianModel64::new(mat_from(1, 1, &[1.0]), mat_from(1, 1, &[1.0]), GaussianDist64::standard(1))
        .unwrap();
    assert!((scalar.data_marginal().cov()[(0, 0)] - 2.0).abs() < 1e-15);
}

#[test]
fn posterior_examples() {
    let p = bayes_posterior(&reference_model()).unwrap();
    assert!(max_abs_diff(&p.r, &mat_from(2, 1, &[5.0 / 7.0, 3.0 / 7.0])) < 1e-12);
    assert!(p.b.abs().max() < 1e-15);
    assert!(max_abs_diff(&p.q, &(mat_from(2, 2, &[10.0, -15.0, -15.0, 26.0]) / 35.0)) < 1e-12);
    assert!(max_abs_diff(&(&p.c * p.c.transpose()), &p.q) < 1e-12);

    let prior = GaussianDist64::new(vec_from(&[0.4, -0.2]), mat_from(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap();
    let vague = LinearGaussianModel64::new(mat_from(1, 2, &[1.0, 0.6]), mat_from(1, 1, &[1e6]), prior.clone()).unwrap();
    let p = bayes_posterior(&vague).unwrap();
    assert!(p.r.abs().max() < 1e-5);
    assert!(max_abs_diff(&p.q, prior.cov()) < 1e-5);
    assert!(max_abs_diff_vec(&p.b, prior.mean()) < 1e-5);

    let scalar = LinearGaussianModel64::new(mat_from(1, 1, &[1.0]), mat_from(1, 1, &[1.0]), GaussianDist64::standard(1))
        .unwrap();
    let p = bayes_posterior(&scalar).unwrap();
    assert!((p.r[(0, 0)] - 0.5).abs() < 1e-15);
    assert!((p.q[(0, 0)] - 0.5).abs() < 1e-15);
    assert!(p.b[0].abs() < 1e-15);
}

#[test]
fn encoder_joint_examples() {
    let model = reference_model();
    let j = encoder_joint(&model.data_marginal(), &bayes_posterior(&model).unwrap()).unwrap();
    let t = j.marginal(THETA).unwrap();
    assert!(max_abs_diff(t.cov(), &Mat64::identity(2, 2)) < 1e-10);

    let q = mat_from(2, 2, &[0.7, 0.1, 0.1, 0.4]);
    let blind = EncoderParams64::from_cov(Mat64::zeros(2, 1), Vector64::zeros(2), q.clone()).unwrap();
    let j = encoder_joint(&model.data_marginal(), &blind).unwrap();
    assert!(j.cross(THETA, Y).unwrap().abs().max() < 1e-15);
    assert!(max_abs_diff(j.marginal(THETA).unwrap().cov(), &q) < 1e-15);

    let enc = EncoderParams64::from_cov(mat_from(2, 1, &[1.0, 0.0]), Vector64::zeros(2), Mat64::identity(2, 2)).unwrap();
    let t = encoder_joint(&model.data_marginal(), &enc).unwrap().marginal(THETA).unwrap();
    assert!(max_abs_diff(t.cov(), &mat_from(2, 2, &[2.4, 0.0, 0.0, 1.0])) < 1e-14);
}

#[test]
fn chain_joint_examples() {
    let model = reference_model();
    let mut r = rng(3);
    let enc = rand_encoder(&mut r, 1, 2);
    let chain = chain_joint(&model, &enc).unwrap();
    let ty = chain.marginalize(&[THETA, Y]).unwrap();
    assert!(max_abs_diff(ty.cov(), model.joint().cov()) < 1e-12);

    let zt = chain.condition(Z, THETA).unwrap();
    let expect = &enc.r * model.s() * enc.r.transpose() + &enc.q;
    assert!(max_abs_diff(&zt.cov, &expect) < 1e-10);

    let exact = bayes_posterior(&model).unwrap();
    let i = chain_joint(&model, &exact).unwrap().mutual_information(Y, Z).unwrap();
    assert!((i - half_ln35()).abs() < 1e-10);
}

#[test]
fn decoder_joint_examples() {
    let model = reference_model();
    let dec = DecoderParams64::new(model.a().clone(), model.s().clone()).unwrap();
    let j = decoder_joint(model.prior(), &dec).unwrap();
    assert!(max_abs_diff(j.cov(), model.joint().cov()) < 1e-15);

    let blind = DecoderParams64::new(Mat64::zeros(1, 2), mat_from(1, 1, &[0.5])).unwrap();
    let j = decoder_joint(model.prior(), &blind).unwrap();
    assert!(j.cross(THETA, Y).unwrap().abs().max() < 1e-15);

    let mut r = rng(9);
    let enc = rand_encoder(&mut r, 1, 2);
    let dec = rand_decoder(&mut r, 1, 2);
    let chain = autoencoder_chain(&model, &enc, &dec).unwrap();
    let c = chain.condition(Y_TILDE, Y).unwrap();
    let expect = &dec.a * &enc.q * dec.a.transpose() + &dec.s;
    assert!(max_abs_diff(&c.cov, &expect) < 1e-10);
}

#[test]
fn model_validation() {
    let prior = GaussianDist64::standard(2);
    let err = LinearGaussianModel64::new(Mat64::zeros(2, 2), Mat64::identity(3, 3), prior).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }));
    let err = DecoderParams64::new(Mat64::zeros(1, 1), mat_from(1, 1, &[-1.0])).unwrap_err();
    assert!(matches!(err, Error::NotPositiveSemiDefinite { .. }));
}

#[test]
fn generic_over_f32() {
    let m = LinearGaussianModel32::new(
        mat_from(1, 2, &[1.0, 0.6]),
        mat_from(1, 1, &[0.04]),
        GaussianDist32::standard(2),
    )
    .unwrap();
    let p = bayes_posterior(&m).unwrap();
    assert!((p.r[(0, 0)] - 5.0 / 7.0).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn posterior_equals_conditioning(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
        let model = rand_model(&mut rng(seed), n, m);
        let p = bayes_posterior(&model).unwrap();
        let c = model.joint().condition(THETA, Y).unwrap();
        prop_assert!(max_abs_diff(&p.r, &c.gain) < 1e-9);
        prop_assert!(max_abs_diff_vec(&p.b, &c.offset) < 1e-9);
        prop_assert!(max_abs_diff(&p.q, &c.cov) < 1e-9);
    }

    #[test]
    fn woodbury_forms_agree(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
        let model = rand_model(&mut rng(seed), n, m);
        let (a, s, st) = (model.a(), model.s(), model.prior().cov());
        let sy = a * st * a.transpose() + s;
        let gain17 = st * a.transpose() * inv_spd(&sy, "sy").unwrap();
        let sinv = inv_spd(s, "s").unwrap();
        let prec = a.transpose() * &sinv * a + inv_spd(st, "st").unwrap();
        let gain18 = inv_spd(&prec, "prec").unwrap() * a.transpose() * sinv;
        prop_assert!(max_abs_diff(&gain17, &gain18) < 1e-9);
    }

    #[test]
    fn exact_posterior_reproduces_prior(seed in any::<u64>(), n in 1usize..5, m in 1usize..5) {
        let model = rand_model(&mut rng(seed), n, m);
        let enc = bayes_posterior(&model).unwrap();
        let t = encoder_joint(&model.data_marginal(), &enc).unwrap().marginal(THETA).unwrap();
        prop_assert!(max_abs_diff(t.cov(), model.prior().cov()) < 1e-10);
        prop_assert!(max_abs_diff_vec(t.mean(), model.prior().mean()) < 1e-10);
    }

    #[test]
    fn chain_satisfies_processing_inequality(seed in any::<u64>(), n in 1usize..5, m in 1usize..5) {
        let mut r = rng(seed);
        let model = rand_model(&mut r, n, m);
        let enc = rand_encoder(&mut r, n, m);
        let j = chain_joint(&model, &enc).unwrap();
        let iyz = j.mutual_information(Y, Z).unwrap();
        let itz = j.mutual_information(THETA, Z).unwrap();
        prop_assert!(iyz >= itz - 1e-9);
    }
}
