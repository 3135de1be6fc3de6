pub mod capacity;
pub mod eval;
pub mod gen_data;
pub mod gradcheck;
pub mod holdout;
pub mod pose;
pub mod render;
pub mod train;
