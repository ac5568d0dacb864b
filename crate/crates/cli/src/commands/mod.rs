pub mod areal;
pub mod demo;
pub mod gvf;
pub mod krige;
pub mod panel;
pub mod survey;
pub mod temporal;
