pub mod artifact;
pub mod mdp;
pub mod network;
pub mod oracle;
pub mod schedulers;
pub mod sim;
pub mod verify;
pub mod whittle;
