pub mod eval;
pub mod expressivity;
pub mod gen_data;
pub mod gradcheck;
pub mod train;
pub mod verify_flow;
