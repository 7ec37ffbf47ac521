//! Desk-scale federated averaging: synthetic Gaussian-mixture data, IID and
//! Dirichlet partitioning, softmax regression trained with full-batch
//! gradient steps, and size-weighted aggregation.

mod data;
mod model;

pub use data::{
    load_csv_dataset, parse_csv_dataset, partition_dirichlet, partition_iid, ClientDataset, SyntheticSpec,
};
pub use model::{aggregate, evaluate, local_train, local_train_proximal, loss_and_grad, Model};
