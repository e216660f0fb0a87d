pub mod calibrate;
pub mod error;
pub mod runs;
pub mod spec;
pub mod table;
