pub mod gp_reference;
pub mod grid_reference;
