pub mod calculus;
pub mod canon;
pub mod derive;
pub mod reducer;
pub mod regex;
pub mod syntax;
pub mod term;
pub mod tss;
