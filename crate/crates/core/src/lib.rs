pub mod geom;
pub mod scene;
pub mod grasp;
pub mod synth;
pub mod reward;
pub mod training;
pub mod plan;
pub mod io;
