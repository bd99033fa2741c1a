#![allow(dead_code)]

pub mod curve;
pub mod geom;
pub mod msgs;
pub mod replay;
pub mod scenes;
