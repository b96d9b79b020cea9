pub mod config;
pub mod harness;
pub mod metrics;
pub mod neuralnet;
pub mod pgagent;
pub mod rerouter;
pub mod roadnet;
pub mod simcore;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/road-network.md")]
    mod road_network {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/policy-network.md")]
    mod policy_network {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/rerouting.md")]
    mod rerouting {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/results.md")]
    mod results {}
}
