#![allow(dead_code)]

pub mod grad;
pub mod oracle;
pub mod reset_props;
