use clap::Parser;
use storyctl_cli::Cli;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    storyctl_cli::run(Cli::parse())
}
