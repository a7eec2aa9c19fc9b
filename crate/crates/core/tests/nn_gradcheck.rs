//! Finite-difference checks of every differentiable operation, 20 random
//! shapes each, in double precision.

use soundsquat_core::nn::gradcheck::{check_op, OPS, TOLERANCE};

const CASES: usize = 20;

macro_rules! gradcheck {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                let worst = check_op(stringify!($name), CASES, 0xc0ffee).unwrap();
                assert!(worst <= TOLERANCE, "{}: relative error {worst:e}", stringify!($name));
            }
        )*

        #[test]
        fn every_op_has_a_test() {
            let listed = [$(stringify!($name)),*];
            assert_eq!(listed.len(), OPS.len());
            for op in OPS {
                assert!(listed.contains(op), "{op} lacks a gradient test");
            }
        }
    };
}

gradcheck!(
    matmul,
    matmul_nt,
    add,
    add_row,
    mul,
    scale,
    relu,
    tanh,
    sigmoid,
    softmax,
    softmax_masked,
    log_softmax,
    layer_norm,
    dropout,
    embedding,
    slice_cols,
    concat_cols,
    slice_rows,
    concat_rows,
    repeat_rows,
    conv1d,
    cross_entropy,
    l1_l2,
    ctc,
    sum,
    mean,
    attention,
    linear_layer,
    layer_norm_layer,
    feed_forward,
    conv_layer,
    mha_layer,
    lstm,
);
