pub mod bench;
pub mod flow;
pub mod mesh;
pub mod solve;
