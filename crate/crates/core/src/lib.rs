pub mod density;
pub mod io;
pub mod models;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod smoothers;
pub mod tuning;
