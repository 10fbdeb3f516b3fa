//! Capacity region and strong-converse exponent computations for
//! two-receiver broadcast channels with degraded message sets.
//!
//! One sender transmits a common message to both receivers and a private
//! message to receiver 1 over `W(y,z|x) = W1(y|x)·W2(z|x)`. The crate
//! computes the capacity region through its supporting hyperplanes, the
//! exponent at which the probability of correct decoding must vanish above
//! the region, and checks the finite-blocklength bounds behind that
//! exponent exhaustively on small codes.
//!
//! Everything is in nats.

pub mod channel;
pub mod converse;
pub mod emit;
pub mod error;
pub mod exponent;
pub mod loglin;
pub mod prob;
pub mod region;
pub mod simplex;

pub use channel::{joint_from_aux, parse_channel_spec, AuxInputLaw, ChannelPair};
pub use error::{Error, Result};
pub use prob::{
    conditional_kl, conditional_mutual_information, entropy, mutual_information, InfoQuantity,
    JointDistUXYZ, ProbDist, StochasticMatrix,
};
