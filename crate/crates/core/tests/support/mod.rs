#![allow(dead_code)]

pub mod grad_suite;
pub mod mfcc_ref;
