pub mod cli;
pub mod clock;
pub mod http;
pub mod lockfile;
pub mod pond;
pub mod registry;
pub mod repoprobe;
pub mod report;
pub mod smells;
