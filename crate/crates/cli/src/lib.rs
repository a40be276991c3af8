//! Configuration, run artifacts and dispatch for the `nsplane` command line.

pub mod artifacts;
pub mod config;
pub mod run;

/// Every subcommand that runs a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate2d,
    Simulate3d,
    PlanewaveCheck,
    Picard,
    Stability,
    Heatdecay,
    Contraction,
    Scan,
    Cgl,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Subcommand::Simulate2d,
        Subcommand::Simulate3d,
        Subcommand::PlanewaveCheck,
        Subcommand::Picard,
        Subcommand::Stability,
        Subcommand::Heatdecay,
        Subcommand::Contraction,
        Subcommand::Scan,
        Subcommand::Cgl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate2d => "simulate2d",
            Subcommand::Simulate3d => "simulate3d",
            Subcommand::PlanewaveCheck => "planewave-check",
            Subcommand::Picard => "picard",
            Subcommand::Stability => "stability",
            Subcommand::Heatdecay => "heatdecay",
            Subcommand::Contraction => "contraction",
            Subcommand::Scan => "scan",
            Subcommand::Cgl => "cgl",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}
