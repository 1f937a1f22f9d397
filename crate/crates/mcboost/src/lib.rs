//! Multi-class gradient boosting with MART and adaptive-base-class (ABC)
//! training over least-squares regression trees.
//!
//! Both trainers minimize the negative multinomial log-likelihood of a
//! K-class logistic model by stagewise additive updates: each round fits
//! small regression trees to the current loss gradient and takes a one-step
//! Newton update per leaf, damped by a shrinkage factor.
//!
//! * **MART** fits one tree per class per round to the residual
//!   `r_{i,k} - p_{i,k}`.
//! * **ABC** exploits the sum-to-zero degree of freedom: it picks a base
//!   class, fits K-1 trees to the base-relative derivatives, mirrors the
//!   base score from the others, and re-selects the base each round as the
//!   class with the largest training loss. For K = 2 the two coincide.
//! * The `mb` and `fixed_base(k)` variants isolate the two ingredients of
//!   ABC (derivatives and adaptivity) for ablation studies.
//!
//! Training is deterministic: same data, same configuration, same seed,
//! bit-identical model.
//!
//! ```
//! use mcboost::{train, Dataset, Matrix, TrainConfig, Variant};
//!
//! let features = Matrix::from_vec(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 6, 1);
//! let labels = vec![0, 0, 1, 1, 2, 2];
//! let names = vec!["a".into(), "b".into(), "c".into()];
//! let data = Dataset::from_parts(features, labels, names).unwrap();
//!
//! let config = TrainConfig::new(Variant::Abc, 3, 0.1, 20);
//! let (model, history) = train(&data, &config, None).unwrap();
//!
//! assert_eq!(model.num_rounds(), 20);
//! assert!(history.last().unwrap().train_loss < history[0].train_loss);
//! assert_eq!(model.predict_class(&[0.5]).unwrap(), 0);
//! ```

pub mod boosting;
pub mod dataset;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod regtree;

pub use boosting::{
    softmax_row, train, train_observed, InitialBase, RoundRecord, TrainConfig, TrainError,
    TrainState, Variant,
};
pub use dataset::{
    class_indicator, load_dataset, load_dataset_with_mapping, train_test_split, Dataset,
    DatasetError, Format, IndicatorMatrix, LoadOptions,
};
pub use matrix::Matrix;
pub use metrics::{
    binomial_pvalue, evaluate_model, misclassification_count, multinomial_loss, per_class_loss,
    relative_improvement, Comparison, EvalError, EvalReport, MetricsError, PValue,
};
pub use model::{load_model, save_model, Model, ModelError, ModelRound, MODEL_FORMAT_VERSION};
pub use regtree::{fit_tree, FeatureColumns, FittedTree, Node, RegressionTree, TreeConfig};
