pub mod coach;
pub mod garden;
pub mod health;
pub mod notify;
pub mod plan;
pub mod prompts;
pub mod provider;
pub mod replay;
pub mod safety;
pub mod time;
pub mod workspace;
