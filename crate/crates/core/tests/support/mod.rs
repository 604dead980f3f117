pub mod json_gen;
