pub mod eval;
pub mod forge;
pub mod generate;
pub mod gradcheck;
pub mod train;
