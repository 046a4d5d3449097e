#![allow(dead_code)]

pub mod cache_ref;
pub mod mshr_ref;
