pub mod audio;
pub mod conditioning;
pub mod dataforge;
pub mod diffsub;
pub mod evalkit;
pub mod flowdit;
mod dsp;
pub mod rng;
pub mod spectral;
