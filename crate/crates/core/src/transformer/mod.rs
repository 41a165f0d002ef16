//! The normalized attention + ReLU-MLP transformer, prompt encoding, weight
//! projection, and in-context data generation.

pub mod attention;
pub mod chain;
pub mod icl;
pub mod lemma;
pub mod linalg;

pub use attention::{
    attention_weights, attn_layer, encode_prompt, mlp_layer, project_weights, softmax,
    tf_forward, LayerWeights, TokenMatrix, TransformerWeights,
};
pub use chain::TfChain;
pub use icl::{
    fit_ols, generate_icl_synthetic, icl_predict_ols, label_queries, IclGenerator, IclPredictor,
    InputLaw, OlsFit, OlsPredictor, TransformerPredictor, ZeroPredictor,
};
pub use lemma::{softmax_lemma_ratios, softmax_lemma_suite, SoftmaxLemmaStats};
pub use linalg::{norm_2_1, project_spectral, spectral_norm};
