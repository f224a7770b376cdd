//! Network service for the Bloom coaching engine: bearer-token auth, REST
//! resources, the websocket chat protocol, persistence and the live provider.

pub mod app;
pub mod auth;
pub mod config;
pub mod llm;
pub mod protocol;
pub mod push;
pub mod rest;
pub mod server;
pub mod store;
pub mod usage;
pub mod ws;
